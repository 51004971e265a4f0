//! Pulse-level Monte Carlo simulation of one user's BB84 session.
//!
//! Every clock pulse draws an intensity class, basis and bit, optionally
//! flips the bit with the misalignment probability, emits a Poissonian
//! photon number, and propagates each photon through channel, chip and
//! detector efficiency. Dark counts fire independently per detector, and
//! leakage photons from concurrently transmitting users are routed through
//! the chip's finite-extinction transfer matrix. Sifting keeps pulses whose
//! implied receiver basis matches the sender's.
//!
//! Reproducibility: pulses are partitioned into fixed-size batches; batch
//! `b` runs on `ChaCha8Rng::seed_from_u64(seed)` with stream index `b`, and
//! batch tallies are merged by summation. The result is bit-identical for a
//! given `(params, n_pulses, seed)` regardless of thread count.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::chip::{detection_distribution, Basis, DetectorOutcome, Polarization};
use crate::decoy::{DecoyObservables, E_VACUUM};
use crate::error::{Error, Result};
use crate::link::{IntensityClass, LinkParams};

/// Name and version of the pseudo-random generator, recorded in run
/// metadata so results stay reproducible across implementations.
pub const RNG_ALGORITHM: &str = "ChaCha8 (rand_chacha 0.3, per-batch stream indexing)";

/// Pulses per independent RNG stream.
pub const BATCH_PULSES: u64 = 1 << 16;

/// Outcome of a single received pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PulseOutcome {
    NoClick,
    Click(DetectorOutcome),
    /// More than one detector fired; carries the squashed assignment: the
    /// receiver basis is the one that fired (uniformly random if both did)
    /// and an ambiguous pair within it becomes a uniformly random bit.
    DoubleClick(DetectorOutcome),
}

impl PulseOutcome {
    pub fn detector(self) -> Option<DetectorOutcome> {
        match self {
            PulseOutcome::NoClick => None,
            PulseOutcome::Click(d) | PulseOutcome::DoubleClick(d) => Some(d),
        }
    }
}

/// Everything that happened to one pulse; mainly useful for tests and
/// debugging, the tally loop does not retain these.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PulseRecord {
    pub index: u64,
    pub user: u8,
    pub class: IntensityClass,
    pub basis: Basis,
    pub bit: u8,
    pub outcome: PulseOutcome,
}

/// Counters for one intensity class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClassTally {
    pub sent: u64,
    /// Pulses with a click whose receiver basis matched the sender basis.
    pub sifted: u64,
    /// Sifted pulses whose decoded bit disagreed with the sender bit.
    pub errors: u64,
    /// Pulses with any click at all (matched basis or not).
    pub clicked: u64,
}

impl ClassTally {
    fn merge(&mut self, other: &ClassTally) {
        self.sent += other.sent;
        self.sifted += other.sifted;
        self.errors += other.errors;
        self.clicked += other.clicked;
    }
}

/// Aggregated counters of a simulation run for one user.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TallyCounts {
    pub user: u8,
    pub signal: ClassTally,
    pub decoy: ClassTally,
    pub vacuum: ClassTally,
    /// Pulses where two or more detectors fired.
    pub double_clicks: u64,
}

impl TallyCounts {
    pub fn class(&self, class: IntensityClass) -> &ClassTally {
        match class {
            IntensityClass::Signal => &self.signal,
            IntensityClass::Decoy => &self.decoy,
            IntensityClass::Vacuum => &self.vacuum,
        }
    }

    fn class_mut(&mut self, class: IntensityClass) -> &mut ClassTally {
        match class {
            IntensityClass::Signal => &mut self.signal,
            IntensityClass::Decoy => &mut self.decoy,
            IntensityClass::Vacuum => &mut self.vacuum,
        }
    }

    pub fn merge(mut self, other: TallyCounts) -> TallyCounts {
        self.user = if self.user == 0 {
            other.user
        } else {
            self.user
        };
        self.signal.merge(&other.signal);
        self.decoy.merge(&other.decoy);
        self.vacuum.merge(&other.vacuum);
        self.double_clicks += other.double_clicks;
        self
    }

    pub fn total_sent(&self) -> u64 {
        self.signal.sent + self.decoy.sent + self.vacuum.sent
    }

    pub fn total_clicked(&self) -> u64 {
        self.signal.clicked + self.decoy.clicked + self.vacuum.clicked
    }
}

/// Metadata + tallies of one reproducible run.
#[derive(Debug, Clone)]
pub struct SimRun {
    pub seed: u64,
    pub n_pulses: u64,
    pub rng_algorithm: &'static str,
    pub tallies: TallyCounts,
}

/// Per-photon click distribution scaled by everything outside the chip.
#[derive(Debug, Clone, Copy)]
struct PhotonRouting {
    /// Cumulative probabilities over detectors 1..4 for one launched photon.
    cumulative: [f64; 4],
}

impl PhotonRouting {
    fn build(params: &LinkParams, user: u8, pol: Polarization, scale: f64) -> Result<Self> {
        let dist = detection_distribution(&params.receiver, user, pol)?;
        let mut cumulative = [0.0; 4];
        let mut acc = 0.0;
        for (i, p) in dist.detectors.iter().enumerate() {
            acc += p * scale;
            cumulative[i] = acc;
        }
        Ok(Self { cumulative })
    }

    /// Sample which detector (if any) a single photon triggers.
    fn sample(&self, rng: &mut ChaCha8Rng) -> Option<usize> {
        let u: f64 = rng.gen();
        self.cumulative.iter().position(|&c| u < c)
    }
}

/// Precomputed tables for the per-pulse loop.
struct SimTables {
    /// Routing per encoded polarization for the session user.
    signal_routing: [PhotonRouting; 4],
    /// Routing per polarization per interferer.
    leak_routing: Vec<[PhotonRouting; 4]>,
    /// Poisson samplers per class (None for zero intensity).
    poisson: [Option<Poisson<f64>>; 3],
    /// Interferers reuse the same class mix as the session user.
    class_cdf: [f64; 3],
    dark_per_detector: f64,
    e_misalign: f64,
}

impl SimTables {
    fn build(params: &LinkParams, interferers: &[u8]) -> Result<Self> {
        params.validate()?;
        for &j in interferers {
            if !(1..=4).contains(&j) {
                return Err(Error::InvalidParameter(format!(
                    "interferer index {j} not in 1..4"
                )));
            }
            if j == params.selected_user {
                return Err(Error::InvalidParameter(
                    "the session user cannot interfere with itself".into(),
                ));
            }
        }
        // Photon survival outside the chip: channel and detector efficiency.
        let scale = params.channel.transmittance()? * params.detectors.efficiency;
        let route_for = |user: u8| -> Result<[PhotonRouting; 4]> {
            Ok([
                PhotonRouting::build(params, user, Polarization::H, scale)?,
                PhotonRouting::build(params, user, Polarization::V, scale)?,
                PhotonRouting::build(params, user, Polarization::D, scale)?,
                PhotonRouting::build(params, user, Polarization::A, scale)?,
            ])
        };
        let signal_routing = route_for(params.selected_user)?;
        let leak_routing = interferers
            .iter()
            .map(|&j| route_for(j))
            .collect::<Result<Vec<_>>>()?;

        let mut poisson = [None, None, None];
        for (slot, class) in poisson.iter_mut().zip(IntensityClass::ALL) {
            let intensity = params.source.intensity(class);
            if intensity > 0.0 {
                *slot = Some(Poisson::new(intensity).map_err(|e| {
                    Error::InvalidParameter(format!("bad Poisson intensity {intensity}: {e:?}"))
                })?);
            }
        }
        let class_cdf = [
            params.source.p_signal,
            params.source.p_signal + params.source.p_decoy,
            1.0,
        ];
        Ok(Self {
            signal_routing,
            leak_routing,
            poisson,
            class_cdf,
            dark_per_detector: params.detectors.dark_prob_single(),
            e_misalign: params.e_misalign,
        })
    }

    fn sample_class(&self, rng: &mut ChaCha8Rng) -> IntensityClass {
        let u: f64 = rng.gen();
        if u < self.class_cdf[0] {
            IntensityClass::Signal
        } else if u < self.class_cdf[1] {
            IntensityClass::Decoy
        } else {
            IntensityClass::Vacuum
        }
    }

    fn sample_photons(&self, class: IntensityClass, rng: &mut ChaCha8Rng) -> u64 {
        let idx = match class {
            IntensityClass::Signal => 0,
            IntensityClass::Decoy => 1,
            IntensityClass::Vacuum => 2,
        };
        match &self.poisson[idx] {
            Some(p) => p.sample(rng) as u64,
            None => 0,
        }
    }
}

fn pol_index(pol: Polarization) -> usize {
    match pol {
        Polarization::H => 0,
        Polarization::V => 1,
        Polarization::D => 2,
        Polarization::A => 3,
    }
}

/// Simulate one pulse. Draw order is fixed: class, basis, bit, misalignment,
/// photon number, per-photon routing, interferer class/polarization/photons,
/// dark counts, double-click resolution.
fn simulate_pulse(tables: &SimTables, index: u64, user: u8, rng: &mut ChaCha8Rng) -> PulseRecord {
    let class = tables.sample_class(rng);
    let basis = if rng.gen::<bool>() {
        Basis::Z
    } else {
        Basis::X
    };
    let bit = rng.gen::<bool>() as u8;
    let intended = Polarization::from_basis_bit(basis, bit);
    let encoded = if tables.e_misalign > 0.0 && rng.gen::<f64>() < tables.e_misalign {
        intended.flipped()
    } else {
        intended
    };

    let mut clicked = [false; 4];
    let n_photons = tables.sample_photons(class, rng);
    let routing = &tables.signal_routing[pol_index(encoded)];
    for _ in 0..n_photons {
        if let Some(det) = routing.sample(rng) {
            clicked[det] = true;
        }
    }

    // Concurrent users run the same decoy schedule with uncorrelated
    // random states; only their chip leakage reaches the detectors.
    for leak in &tables.leak_routing {
        let leak_class = tables.sample_class(rng);
        let n_leak = tables.sample_photons(leak_class, rng);
        if n_leak == 0 {
            continue;
        }
        let pol = Polarization::ALL[(rng.gen::<u32>() % 4) as usize];
        let routing = &leak[pol_index(pol)];
        for _ in 0..n_leak {
            if let Some(det) = routing.sample(rng) {
                clicked[det] = true;
            }
        }
    }

    if tables.dark_per_detector > 0.0 {
        for slot in &mut clicked {
            if rng.gen::<f64>() < tables.dark_per_detector {
                *slot = true;
            }
        }
    }

    let n_clicked = clicked.iter().filter(|&&c| c).count();
    let outcome = match n_clicked {
        0 => PulseOutcome::NoClick,
        1 => {
            let det = clicked.iter().position(|&c| c).expect("one click");
            PulseOutcome::Click(DetectorOutcome::ALL[det])
        }
        _ => {
            // Squash basis-first: the receiver basis is the one containing
            // clicks, chosen uniformly when both bases fired. Within the
            // basis, an ambiguous pair becomes a uniformly random bit.
            let z_fired = clicked[0] || clicked[1];
            let x_fired = clicked[2] || clicked[3];
            let squash_z = match (z_fired, x_fired) {
                (true, false) => true,
                (false, true) => false,
                _ => rng.gen::<bool>(),
            };
            let (a, b) = if squash_z { (0, 1) } else { (2, 3) };
            let det = match (clicked[a], clicked[b]) {
                (true, true) => {
                    if rng.gen::<bool>() {
                        a
                    } else {
                        b
                    }
                }
                (true, false) => a,
                _ => b,
            };
            PulseOutcome::DoubleClick(DetectorOutcome::ALL[det])
        }
    };

    PulseRecord {
        index,
        user,
        class,
        basis,
        bit,
        outcome,
    }
}

fn tally_batch(
    tables: &SimTables,
    user: u8,
    seed: u64,
    stream: u64,
    first_index: u64,
    count: u64,
) -> TallyCounts {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut tally = TallyCounts {
        user,
        ..TallyCounts::default()
    };
    for offset in 0..count {
        let record = simulate_pulse(tables, first_index + offset, user, &mut rng);
        if matches!(record.outcome, PulseOutcome::DoubleClick(_)) {
            tally.double_clicks += 1;
        }
        let class = tally.class_mut(record.class);
        class.sent += 1;
        if let Some(det) = record.outcome.detector() {
            class.clicked += 1;
            if det.basis() == record.basis {
                class.sifted += 1;
                if det.bit() != record.bit {
                    class.errors += 1;
                }
            }
        }
    }
    tally
}

/// Run `n_pulses` of the session user's protocol with no other active users.
pub fn simulate(params: &LinkParams, n_pulses: u64, seed: u64) -> Result<TallyCounts> {
    simulate_with_interferers(params, &[], n_pulses, seed)
}

/// Run a session while the listed other users transmit concurrently; their
/// light reaches the detectors only through the chip's extinction leakage.
pub fn simulate_with_interferers(
    params: &LinkParams,
    interferers: &[u8],
    n_pulses: u64,
    seed: u64,
) -> Result<TallyCounts> {
    if n_pulses == 0 {
        return Err(Error::InvalidParameter("n_pulses must be >= 1".into()));
    }
    let tables = SimTables::build(params, interferers)?;
    let user = params.selected_user;
    let n_batches = n_pulses.div_ceil(BATCH_PULSES);
    let tallies = (0..n_batches)
        .into_par_iter()
        .map(|batch| {
            let first = batch * BATCH_PULSES;
            let count = BATCH_PULSES.min(n_pulses - first);
            tally_batch(&tables, user, seed, batch, first, count)
        })
        .reduce(
            || TallyCounts {
                user,
                ..TallyCounts::default()
            },
            TallyCounts::merge,
        );
    Ok(tallies)
}

/// Full reproducible run with metadata attached.
pub fn run(params: &LinkParams, n_pulses: u64, seed: u64) -> Result<SimRun> {
    Ok(SimRun {
        seed,
        n_pulses,
        rng_algorithm: RNG_ALGORITHM,
        tallies: simulate_with_interferers(params, &[], n_pulses, seed)?,
    })
}

/// Estimate decoy observables from tallies.
///
/// The receiver basis is uniform and independent of the sender's, so sifting
/// keeps half of all clicks in expectation; the per-pulse gain estimate is
/// therefore `Q_k = 2 * sifted_k / sent_k`. Error rates are per sifted bit,
/// and default to 1/2 when a class has no sifted events.
pub fn tallies_to_observables(t: &TallyCounts) -> Result<DecoyObservables> {
    for class in IntensityClass::ALL {
        if t.class(class).sent == 0 {
            return Err(Error::InvalidParameter(format!(
                "no pulses sent in class {}",
                class.label()
            )));
        }
    }
    let gain = |c: &ClassTally| 2.0 * c.sifted as f64 / c.sent as f64;
    let error = |c: &ClassTally| {
        if c.sifted == 0 {
            E_VACUUM
        } else {
            c.errors as f64 / c.sifted as f64
        }
    };
    Ok(DecoyObservables {
        q_mu: gain(&t.signal),
        q_nu: gain(&t.decoy),
        q_vac: gain(&t.vacuum),
        e_mu: error(&t.signal),
        e_nu: error(&t.decoy),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_tallies_convert_to_observables() {
        let mut t = TallyCounts {
            user: 1,
            ..TallyCounts::default()
        };
        t.signal = ClassTally {
            sent: 1_000_000,
            sifted: 4_800,
            errors: 24,
            clicked: 9_600,
        };
        t.decoy = ClassTally {
            sent: 500_000,
            sifted: 600,
            errors: 6,
            clicked: 1_200,
        };
        t.vacuum = ClassTally {
            sent: 500_000,
            sifted: 10,
            errors: 5,
            clicked: 20,
        };
        let obs = tallies_to_observables(&t).unwrap();
        assert!((obs.q_mu - 9.6e-3).abs() < 1e-12);
        assert!((obs.e_mu - 0.005).abs() < 1e-12);
        assert!((obs.q_nu - 2.4e-3).abs() < 1e-12);
    }

    #[test]
    fn empty_class_is_rejected_and_zero_sifted_defaults_to_half() {
        let mut t = TallyCounts::default();
        assert!(tallies_to_observables(&t).is_err());
        t.signal.sent = 10;
        t.decoy.sent = 10;
        t.vacuum.sent = 10;
        let obs = tallies_to_observables(&t).unwrap();
        assert_eq!(obs.e_mu, E_VACUUM);
        assert_eq!(obs.q_mu, 0.0);
    }

    #[test]
    fn identical_seeds_reproduce_tallies() {
        let params = LinkParams::defaults_for(2, 20.0).unwrap();
        let a = simulate(&params, 200_000, 42).unwrap();
        let b = simulate(&params, 200_000, 42).unwrap();
        assert_eq!(a, b);
        let c = simulate(&params, 200_000, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn batch_boundaries_do_not_change_totals() {
        let params = LinkParams::defaults_for(1, 10.0).unwrap();
        // one batch plus a partial tail
        let n = BATCH_PULSES + 123;
        let t = simulate(&params, n, 7).unwrap();
        assert_eq!(t.total_sent(), n);
    }

    #[test]
    fn interferer_validation() {
        let params = LinkParams::defaults_for(1, 10.0).unwrap();
        assert!(simulate_with_interferers(&params, &[1], 1000, 0).is_err());
        assert!(simulate_with_interferers(&params, &[5], 1000, 0).is_err());
        assert!(simulate_with_interferers(&params, &[2, 3], 1000, 0).is_ok());
    }
}
