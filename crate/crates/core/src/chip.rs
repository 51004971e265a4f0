//! Model of the four-user QKD receiver chip.
//!
//! Each user couples in through a two-dimensional grating coupler that maps
//! polarization onto a pair of on-chip rails (upper = H, lower = V). A
//! network of eight thermo-optic MZI switches then routes exactly one user's
//! rail pair to a passive measurement stage of three 50:50 MMIs, which
//! projects onto the Z basis (detectors "0"/"1") or the X basis ("+"/"-")
//! with probability 1/2 each. Switch extinction is finite, so a small power
//! floor from the non-selected users leaks through to the detectors; that
//! leakage is the physical origin of inter-user crosstalk.
//!
//! Routing network layout (one instance per rail, upper and lower):
//!
//! ```text
//! user1 --MZI1--+             pair (1,2) merges in stage 1,
//! user2 --------+--MZI5--+    pair (3,4) likewise via MZI3/MZI4;
//! user3 --MZI3--+        +--MZI7--> measurement stage
//! user4 --------+--------+
//! ```
//!
//! Stage-2 switches MZI5..MZI8 select the (1,2) bank at phase pi and the
//! (3,4) bank at phase 0, matching the routing table below. The lower rail
//! uses MZI2/MZI4 in stage 1 and MZI6/MZI8 in stage 2.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linear_optics::{db_to_linear, TransferMatrix};

/// Phases this close to 0 or pi count as a switching point and get the
/// finite-extinction floor applied.
const SWITCH_PHASE_TOL: f64 = 1e-9;

/// BB84 measurement/preparation basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    /// Rectilinear basis {H, V}, detectors "0" and "1".
    Z,
    /// Diagonal basis {D, A}, detectors "+" and "-".
    X,
}

/// One of the four BB84 polarization states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarization {
    H,
    V,
    D,
    A,
}

impl Polarization {
    pub const ALL: [Polarization; 4] = [
        Polarization::H,
        Polarization::V,
        Polarization::D,
        Polarization::A,
    ];

    /// Qubit amplitudes `(a_H, a_V)`; D and A are the +/- superpositions.
    pub fn amplitudes(self) -> (Complex64, Complex64) {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            Polarization::H => (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)),
            Polarization::V => (Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)),
            Polarization::D => (Complex64::new(s, 0.0), Complex64::new(s, 0.0)),
            Polarization::A => (Complex64::new(s, 0.0), Complex64::new(-s, 0.0)),
        }
    }

    pub fn basis(self) -> Basis {
        match self {
            Polarization::H | Polarization::V => Basis::Z,
            Polarization::D | Polarization::A => Basis::X,
        }
    }

    /// Bit value encoded by this state: H/D -> 0, V/A -> 1.
    pub fn bit(self) -> u8 {
        match self {
            Polarization::H | Polarization::D => 0,
            Polarization::V | Polarization::A => 1,
        }
    }

    pub fn from_basis_bit(basis: Basis, bit: u8) -> Polarization {
        match (basis, bit & 1) {
            (Basis::Z, 0) => Polarization::H,
            (Basis::Z, _) => Polarization::V,
            (Basis::X, 0) => Polarization::D,
            (Basis::X, _) => Polarization::A,
        }
    }

    /// Bit flip within the same basis (H<->V, D<->A).
    pub fn flipped(self) -> Polarization {
        match self {
            Polarization::H => Polarization::V,
            Polarization::V => Polarization::H,
            Polarization::D => Polarization::A,
            Polarization::A => Polarization::D,
        }
    }
}

/// Detector outcome labels, fixed to the chip's output port order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectorOutcome {
    /// Detector 1, result "0" (Z basis).
    Zero,
    /// Detector 2, result "1" (Z basis).
    One,
    /// Detector 3, result "+" (X basis).
    Plus,
    /// Detector 4, result "-" (X basis).
    Minus,
}

impl DetectorOutcome {
    pub const ALL: [DetectorOutcome; 4] = [
        DetectorOutcome::Zero,
        DetectorOutcome::One,
        DetectorOutcome::Plus,
        DetectorOutcome::Minus,
    ];

    /// 1-based detector index.
    pub fn index(self) -> usize {
        match self {
            DetectorOutcome::Zero => 1,
            DetectorOutcome::One => 2,
            DetectorOutcome::Plus => 3,
            DetectorOutcome::Minus => 4,
        }
    }

    pub fn from_index(index: usize) -> Result<Self> {
        Self::ALL
            .get(index.wrapping_sub(1))
            .copied()
            .ok_or_else(|| Error::InvalidParameter(format!("detector index {index} not in 1..4")))
    }

    pub fn basis(self) -> Basis {
        match self {
            DetectorOutcome::Zero | DetectorOutcome::One => Basis::Z,
            DetectorOutcome::Plus | DetectorOutcome::Minus => Basis::X,
        }
    }

    pub fn bit(self) -> u8 {
        match self {
            DetectorOutcome::Zero | DetectorOutcome::Plus => 0,
            DetectorOutcome::One | DetectorOutcome::Minus => 1,
        }
    }
}

/// Phase and extinction ratio of one MZI switch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MziSetting {
    /// Heater-induced phase in radians, reduced to `[0, 2pi)`.
    pub phase: f64,
    /// Extinction ratio in dB; `infinity` is a perfect switch.
    pub extinction_ratio_db: f64,
}

impl MziSetting {
    pub fn new(phase: f64, extinction_ratio_db: f64) -> Result<Self> {
        if !phase.is_finite() {
            return Err(Error::InvalidParameter("MZI phase must be finite".into()));
        }
        if extinction_ratio_db.is_nan() || extinction_ratio_db < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "extinction ratio must be >= 0 dB, got {extinction_ratio_db}"
            )));
        }
        Ok(Self {
            phase: phase.rem_euclid(2.0 * PI),
            extinction_ratio_db,
        })
    }
}

/// Thermo-optic calibration: phase = alpha * V^2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoltagePhaseCal {
    /// Radians per volt squared.
    pub alpha: f64,
}

impl VoltagePhaseCal {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha.is_nan() || alpha <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "alpha must be > 0, got {alpha}"
            )));
        }
        Ok(Self { alpha })
    }
}

/// Heater phase for an applied voltage, `alpha * v^2 mod 2pi`.
pub fn phase_from_voltage(cal: &VoltagePhaseCal, volts: f64) -> Result<f64> {
    if volts.is_nan() || volts < 0.0 {
        return Err(Error::Domain(format!("voltage must be >= 0, got {volts}")));
    }
    Ok((cal.alpha * volts * volts).rem_euclid(2.0 * PI))
}

/// Full chip state: the eight MZI phases plus the insertion-loss budget.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverConfig {
    /// Settings for MZI1..MZI8 (index 0 is MZI1).
    pub mzi: [MziSetting; 8],
    /// Input 2D grating coupler loss in dB.
    pub loss_2dgc_db: f64,
    /// Output 1D grating coupler loss in dB.
    pub loss_output_gc_db: f64,
    /// On-chip waveguide loss in dB.
    pub loss_waveguide_db: f64,
}

/// Measured insertion-loss budget of the fabricated device, in dB.
pub const DEFAULT_LOSS_2DGC_DB: f64 = 6.0;
pub const DEFAULT_LOSS_OUTPUT_GC_DB: f64 = 5.0;
pub const DEFAULT_LOSS_WAVEGUIDE_DB: f64 = 2.0;
/// Worst-case measured switch extinction ratio, in dB.
pub const DEFAULT_EXTINCTION_DB: f64 = 30.0;

impl ReceiverConfig {
    /// Sum of the dB loss contributions (13 dB for the default budget).
    pub fn loss_sum_db(&self) -> f64 {
        self.loss_2dgc_db + self.loss_output_gc_db + self.loss_waveguide_db
    }

    pub fn validate(&self) -> Result<()> {
        for loss in [
            self.loss_2dgc_db,
            self.loss_output_gc_db,
            self.loss_waveguide_db,
        ] {
            if loss.is_nan() || loss < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "losses must be >= 0 dB, got {loss}"
                )));
            }
        }
        Ok(())
    }
}

impl Default for ReceiverConfig {
    fn default() -> Self {
        routing_config(1, DEFAULT_EXTINCTION_DB).expect("static routing table")
    }
}

/// 2x2 transfer matrix of one MZI: `MMI . diag(e^{i phase}, 1) . MMI`.
///
/// At the switching phases the ideal matrix is bar (`phase = pi`) or cross
/// (`phase = 0`), and the nominally dark port is floored at a power
/// `10^(-ER/10)` of the input. The floored matrix is still unitary (a small
/// rotation away from the ideal switch), so the main port carries the
/// complementary `1 - 10^(-ER/10)`.
pub fn mzi_matrix(s: &MziSetting) -> TransferMatrix {
    let phase = s.phase.rem_euclid(2.0 * PI);
    let bar = (phase - PI).abs() < SWITCH_PHASE_TOL;
    let cross = phase < SWITCH_PHASE_TOL || (2.0 * PI - phase) < SWITCH_PHASE_TOL;
    if bar || cross {
        let floor = db_to_linear(s.extinction_ratio_db).expect("validated ER");
        let leak = Complex64::new(floor.sqrt(), 0.0);
        let main = (1.0 - floor).sqrt();
        let entries = if bar {
            // ideal: diag(-1, 1)
            vec![
                Complex64::new(-main, 0.0),
                leak,
                leak,
                Complex64::new(main, 0.0),
            ]
        } else {
            // ideal: i * swap
            vec![
                leak,
                Complex64::new(0.0, main),
                Complex64::new(0.0, main),
                leak,
            ]
        };
        return TransferMatrix::new(2, 2, entries).expect("unitary switch block");
    }
    let shift = TransferMatrix::new(
        2,
        2,
        vec![
            Complex64::from_polar(1.0, phase),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(1.0, 0.0),
        ],
    )
    .expect("2x2 phase block");
    let half = TransferMatrix::compose(&TransferMatrix::mmi(), &shift).expect("2x2");
    TransferMatrix::compose(&half, &TransferMatrix::mmi()).expect("2x2")
}

/// Routing table for the selected user. Stage-1 pair (MZI1, MZI2) merges
/// users 1/2, (MZI3, MZI4) merges users 3/4; MZI5..MZI8 pick the bank.
/// The unused pair's switches sit at the same phase as the selected pair's,
/// which parks the opposite bank on its (blocked) rail.
pub fn routing_config(user: u8, er_db: f64) -> Result<ReceiverConfig> {
    let (stage1, stage2) = match user {
        1 => (PI, PI),
        2 => (0.0, PI),
        3 => (PI, 0.0),
        4 => (0.0, 0.0),
        _ => {
            return Err(Error::InvalidParameter(format!(
                "user index {user} not in 1..4"
            )))
        }
    };
    let s1 = MziSetting::new(stage1, er_db)?;
    let s2 = MziSetting::new(stage2, er_db)?;
    Ok(ReceiverConfig {
        mzi: [s1, s1, s1, s1, s2, s2, s2, s2],
        loss_2dgc_db: DEFAULT_LOSS_2DGC_DB,
        loss_output_gc_db: DEFAULT_LOSS_OUTPUT_GC_DB,
        loss_waveguide_db: DEFAULT_LOSS_WAVEGUIDE_DB,
    })
}

/// Transfer matrix from all eight input rails to the four detector ports.
///
/// Input path order is `(u1 up, u1 low, u2 up, u2 low, u3 up, u3 low,
/// u4 up, u4 low)`; output rows are detectors 1..4 ("0", "1", "+", "-").
fn full_chip_matrix(cfg: &ReceiverConfig) -> Result<TransferMatrix> {
    cfg.validate()?;
    let mzi: Vec<TransferMatrix> = cfg.mzi.iter().map(mzi_matrix).collect();

    // Input plane: 8 rails, 2DGC loss on every path.
    let mut m = TransferMatrix::identity(8).attenuated(cfg.loss_2dgc_db)?;

    // Stage 1 on disjoint rail pairs; output 0 of each switch continues on
    // the odd user's rail, output 1 is a dump.
    for (idx, (i, j)) in [(0usize, 2usize), (1, 3), (4, 6), (5, 7)]
        .iter()
        .enumerate()
    {
        let layer = TransferMatrix::embed_pair(8, *i, *j, &mzi[idx])?;
        m = TransferMatrix::compose(&layer, &m)?;
    }
    // Terminate stage-1 dumps; keep (bankA up, bankA low, bankB up, bankB low).
    m = TransferMatrix::compose(&TransferMatrix::keep_paths(&[0, 1, 4, 5], 8)?, &m)?;
    m = m.attenuated(cfg.loss_waveguide_db)?;

    // Stage 2: widen with two vacuum paths for the unused MZI5/MZI6 inputs.
    m = TransferMatrix::compose(&TransferMatrix::inject_vacuum(4, 6)?, &m)?;
    // MZI5 gates bankA up against vacuum (output 1 dumps); MZI6 the lower
    // rail. MZI7 then merges (bankB up, MZI5 out) with output 1 continuing
    // on the measurement rail; MZI8 ditto for the lower rail.
    for (idx, i, j) in [(4usize, 0usize, 4usize), (5, 1, 5), (6, 2, 0), (7, 3, 1)] {
        let layer = TransferMatrix::embed_pair(6, i, j, &mzi[idx])?;
        m = TransferMatrix::compose(&layer, &m)?;
    }
    // Keep the two measurement rails (upper, lower).
    m = TransferMatrix::compose(&TransferMatrix::keep_paths(&[0, 1], 6)?, &m)?;
    m = m.attenuated(cfg.loss_output_gc_db)?;

    // Measurement stage: MMI1 splits the upper rail into (path1, path2),
    // MMI2 the lower rail into (path3, path4), MMI3 interferes paths 2 and 3.
    m = TransferMatrix::compose(&TransferMatrix::inject_vacuum(2, 4)?, &m)?;
    let mmi = TransferMatrix::mmi();
    let mmi1 = TransferMatrix::embed_pair(4, 0, 2, &mmi)?; // path1 -> 0, path2 -> 2
    let mmi2 = TransferMatrix::embed_pair(4, 1, 3, &mmi)?; // path3 -> 1, path4 -> 3
    let mmi3 = TransferMatrix::embed_pair(4, 2, 1, &mmi)?; // "+" -> 2, "-" -> 1
    m = TransferMatrix::compose(&mmi1, &m)?;
    m = TransferMatrix::compose(&mmi2, &m)?;
    m = TransferMatrix::compose(&mmi3, &m)?;

    // Reorder ports to detectors (1, 2, 3, 4) = ("0", "1", "+", "-").
    TransferMatrix::compose(&TransferMatrix::keep_paths(&[0, 3, 2, 1], 4)?, &m)
}

/// 4x2 transfer matrix from one user's post-2DGC rails `(upper, lower)` to
/// the four detector amplitudes, for the given chip configuration.
pub fn chip_transfer(cfg: &ReceiverConfig, input_user: u8) -> Result<TransferMatrix> {
    if !(1..=4).contains(&input_user) {
        return Err(Error::InvalidParameter(format!(
            "user index {input_user} not in 1..4"
        )));
    }
    let full = full_chip_matrix(cfg)?;
    let base = 2 * (input_user as usize - 1);
    let mut entries = Vec::with_capacity(8);
    for row in 0..4 {
        entries.push(full.get(row, base));
        entries.push(full.get(row, base + 1));
    }
    TransferMatrix::new(4, 2, entries)
}

/// Click probabilities on the four detectors plus the no-click probability,
/// for one photon from `user` in polarization `pol`. Detector efficiency is
/// not included; the five outcomes sum to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClickDistribution {
    /// Probabilities for detectors 1..4.
    pub detectors: [f64; 4],
    /// Probability the photon is lost inside chip or network.
    pub no_click: f64,
}

impl ClickDistribution {
    pub fn total_click(&self) -> f64 {
        self.detectors.iter().sum()
    }
}

pub fn detection_distribution(
    cfg: &ReceiverConfig,
    user: u8,
    pol: Polarization,
) -> Result<ClickDistribution> {
    let m = chip_transfer(cfg, user)?;
    let (ah, av) = pol.amplitudes();
    let mut detectors = [0.0; 4];
    for (row, p) in detectors.iter_mut().enumerate() {
        let amp = m.get(row, 0) * ah + m.get(row, 1) * av;
        *p = amp.norm_sqr();
    }
    let total: f64 = detectors.iter().sum();
    Ok(ClickDistribution {
        detectors,
        no_click: (1.0 - total).max(0.0),
    })
}

/// Total chip power transmission for photons from `user` under `cfg`.
///
/// Polarization-independent: both rail columns of the 4x2 transfer matrix
/// carry the same power budget.
pub fn transmission(cfg: &ReceiverConfig, user: u8) -> Result<f64> {
    let m = chip_transfer(cfg, user)?;
    Ok((m.column_norm_sqr(0) + m.column_norm_sqr(1)) / 2.0)
}
