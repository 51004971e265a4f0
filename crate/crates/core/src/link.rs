//! Off-chip link model: decoy-state pulse source, fiber channel and
//! single-photon detectors.
//!
//! The transmitter fires weak coherent pulses at 10 MHz with three intensity
//! classes (signal 0.6, decoy 0.15, vacuum) chosen with probabilities
//! 0.5/0.25/0.25. The channel is a 0.2 dB/km fiber (or equivalent
//! attenuator). Detection combines the 13 dB receiver-chip insertion loss,
//! 80% detector efficiency and 120 cps dark counts per detector.

use crate::chip::ReceiverConfig;
use crate::error::{Error, Result};
use crate::linear_optics::db_to_linear;

/// Decoy intensity class of an emitted pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IntensityClass {
    Signal,
    Decoy,
    Vacuum,
}

impl IntensityClass {
    pub const ALL: [IntensityClass; 3] = [
        IntensityClass::Signal,
        IntensityClass::Decoy,
        IntensityClass::Vacuum,
    ];

    pub fn label(self) -> &'static str {
        match self {
            IntensityClass::Signal => "signal",
            IntensityClass::Decoy => "decoy",
            IntensityClass::Vacuum => "vacuum",
        }
    }
}

/// Pulsed decoy-state source parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceParams {
    /// Pulse repetition rate in Hz.
    pub rep_rate_hz: f64,
    /// Mean photon number of the signal class.
    pub mu_signal: f64,
    /// Mean photon number of the weak decoy class.
    pub nu_decoy: f64,
    /// Mean photon number of the vacuum class (normally 0).
    pub vacuum: f64,
    /// Emission probabilities of the three classes; must sum to 1.
    pub p_signal: f64,
    pub p_decoy: f64,
    pub p_vacuum: f64,
}

impl Default for SourceParams {
    fn default() -> Self {
        Self {
            rep_rate_hz: 1.0e7,
            mu_signal: 0.6,
            nu_decoy: 0.15,
            vacuum: 0.0,
            p_signal: 0.5,
            p_decoy: 0.25,
            p_vacuum: 0.25,
        }
    }
}

impl SourceParams {
    pub fn intensity(&self, class: IntensityClass) -> f64 {
        match class {
            IntensityClass::Signal => self.mu_signal,
            IntensityClass::Decoy => self.nu_decoy,
            IntensityClass::Vacuum => self.vacuum,
        }
    }

    pub fn probability(&self, class: IntensityClass) -> f64 {
        match class {
            IntensityClass::Signal => self.p_signal,
            IntensityClass::Decoy => self.p_decoy,
            IntensityClass::Vacuum => self.p_vacuum,
        }
    }

    /// Class-averaged mean photon number per emitted pulse
    /// (0.3375 at the defaults).
    pub fn mean_intensity(&self) -> f64 {
        IntensityClass::ALL
            .iter()
            .map(|&k| self.probability(k) * self.intensity(k))
            .sum()
    }

    pub fn validate(&self) -> Result<()> {
        let psum = self.p_signal + self.p_decoy + self.p_vacuum;
        if (psum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "class probabilities sum to {psum}, expected 1"
            )));
        }
        if self.p_signal < 0.0 || self.p_decoy < 0.0 || self.p_vacuum < 0.0 {
            return Err(Error::InvalidParameter(
                "class probabilities must be non-negative".into(),
            ));
        }
        if !(self.mu_signal > self.nu_decoy && self.nu_decoy >= 0.0 && self.vacuum >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "need mu > nu >= 0 and vacuum >= 0, got mu={}, nu={}, vac={}",
                self.mu_signal, self.nu_decoy, self.vacuum
            )));
        }
        if self.rep_rate_hz.is_nan() || self.rep_rate_hz <= 0.0 {
            return Err(Error::InvalidParameter(
                "repetition rate must be > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Fiber (or attenuator-equivalent) channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    pub length_km: f64,
    /// Attenuation coefficient, 0.2 dB/km for standard fiber at 1550 nm.
    pub atten_db_per_km: f64,
    /// Additional fixed loss (per-user coupling offsets and the like).
    pub extra_loss_db: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            length_km: 0.0,
            atten_db_per_km: 0.2,
            extra_loss_db: 0.0,
        }
    }
}

impl ChannelParams {
    pub fn at_length(length_km: f64) -> Self {
        Self {
            length_km,
            ..Self::default()
        }
    }

    pub fn transmittance(&self) -> Result<f64> {
        db_to_linear(self.length_km * self.atten_db_per_km + self.extra_loss_db)
    }

    pub fn validate(&self) -> Result<()> {
        if self.length_km < 0.0 || self.atten_db_per_km < 0.0 || self.extra_loss_db < 0.0 {
            return Err(Error::InvalidParameter(
                "channel length, attenuation and extra loss must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Single-photon detector bank parameters (shared by the four detectors).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorParams {
    /// Detection efficiency at 1550 nm.
    pub efficiency: f64,
    /// Dark counts per second per detector.
    pub dark_rate_cps: f64,
    /// Coincidence window per pulse over which dark counts accumulate;
    /// defaults to the 4 ns laser pulse width.
    pub gate_s: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            efficiency: 0.8,
            dark_rate_cps: 120.0,
            gate_s: 4.0e-9,
        }
    }
}

impl DetectorParams {
    /// Dark-click probability per detector per gate.
    pub fn dark_prob_single(&self) -> f64 {
        self.dark_rate_cps * self.gate_s
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::InvalidParameter(format!(
                "detector efficiency must be in [0, 1], got {}",
                self.efficiency
            )));
        }
        if self.dark_rate_cps < 0.0 || self.gate_s < 0.0 {
            return Err(Error::InvalidParameter(
                "dark rate and gate must be >= 0".into(),
            ));
        }
        if self.dark_prob_single() >= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "dark probability per gate is {} >= 1",
                self.dark_prob_single()
            )));
        }
        Ok(())
    }
}

/// Probability that at least one of `n_detectors` fires from dark counts
/// alone in one gate: `Y0 = 1 - (1 - dark_rate * gate)^n`.
pub fn dark_prob_per_gate(d: &DetectorParams, n_detectors: u32) -> Result<f64> {
    if n_detectors == 0 {
        return Err(Error::InvalidParameter("need at least one detector".into()));
    }
    d.validate()?;
    let p = d.dark_prob_single();
    // plain multiply loop: powi rounds differently across call sites,
    // which would break the bit-reproducibility contract
    let quiet = 1.0 - p;
    let mut none = 1.0;
    for _ in 0..n_detectors {
        none *= quiet;
    }
    Ok(1.0 - none)
}

/// Everything needed to evaluate one user's link at one distance.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkParams {
    pub source: SourceParams,
    pub channel: ChannelParams,
    pub receiver: ReceiverConfig,
    pub detectors: DetectorParams,
    /// Polarization misalignment: probability an encoded bit arrives flipped.
    pub e_misalign: f64,
    /// Which user this link belongs to (drives chip routing).
    pub selected_user: u8,
}

/// Number of detectors behind the receiver chip.
pub const N_DETECTORS: u32 = 4;

impl LinkParams {
    /// Reference-hardware defaults for `user` at `length_km`, zero misalignment.
    pub fn defaults_for(user: u8, length_km: f64) -> Result<Self> {
        Ok(Self {
            source: SourceParams::default(),
            channel: ChannelParams::at_length(length_km),
            receiver: crate::chip::routing_config(user, crate::chip::DEFAULT_EXTINCTION_DB)?,
            detectors: DetectorParams::default(),
            e_misalign: 0.0,
            selected_user: user,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        self.channel.validate()?;
        self.receiver.validate()?;
        self.detectors.validate()?;
        if !(0.0..=0.5).contains(&self.e_misalign) {
            return Err(Error::InvalidParameter(format!(
                "misalignment must be in [0, 0.5], got {}",
                self.e_misalign
            )));
        }
        if !(1..=4).contains(&self.selected_user) {
            return Err(Error::InvalidParameter(format!(
                "user index {} not in 1..4",
                self.selected_user
            )));
        }
        Ok(())
    }

    /// Aggregated dark-click probability per pulse over the detector bank.
    pub fn dark_prob(&self) -> Result<f64> {
        dark_prob_per_gate(&self.detectors, N_DETECTORS)
    }
}

/// End-to-end transmittance: channel, nominal chip loss budget and detector
/// efficiency. `eta = 10^(-0.2 L / 10) * 10^(-13/10) * efficiency` at the
/// defaults.
pub fn system_transmittance(p: &LinkParams) -> Result<f64> {
    let chip = db_to_linear(p.receiver.loss_sum_db())?;
    Ok(p.channel.transmittance()? * chip * p.detectors.efficiency)
}

/// Overall gain per pulse of the given mean photon number:
/// `Q = Y0 + 1 - exp(-eta * intensity)`, capped at 1.
pub fn click_probability(p: &LinkParams, intensity: f64) -> Result<f64> {
    if intensity < 0.0 {
        return Err(Error::Domain(format!(
            "intensity must be >= 0, got {intensity}"
        )));
    }
    let eta = system_transmittance(p)?;
    let y0 = p.dark_prob()?;
    Ok((y0 + 1.0 - (-eta * intensity).exp()).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lossless_link() -> LinkParams {
        let mut p = LinkParams::defaults_for(1, 0.0).unwrap();
        p.receiver.loss_2dgc_db = 0.0;
        p.receiver.loss_output_gc_db = 0.0;
        p.receiver.loss_waveguide_db = 0.0;
        p.detectors.efficiency = 1.0;
        p.detectors.dark_rate_cps = 0.0;
        p
    }

    #[test]
    fn transmittance_is_one_for_lossless_link() {
        assert_eq!(system_transmittance(&lossless_link()).unwrap(), 1.0);
    }

    #[test]
    fn transmittance_at_20km_defaults() {
        // closed form: 10^-0.4 * 10^-1.3 * 0.8
        let p = LinkParams::defaults_for(1, 20.0).unwrap();
        let eta = system_transmittance(&p).unwrap();
        assert!((eta - 0.01596).abs() < 1e-4);
    }

    #[test]
    fn transmittance_at_100km_defaults() {
        let p = LinkParams::defaults_for(1, 100.0).unwrap();
        let eta = system_transmittance(&p).unwrap();
        assert!((eta - 4.01e-4).abs() < 1e-6);
    }

    #[test]
    fn transmittance_scales_exactly_per_km() {
        let p1 = LinkParams::defaults_for(1, 37.0).unwrap();
        let p2 = LinkParams::defaults_for(1, 42.0).unwrap();
        let ratio = system_transmittance(&p2).unwrap() / system_transmittance(&p1).unwrap();
        assert!((ratio - db_to_linear(0.2 * 5.0).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn dark_prob_reference_values() {
        let quiet = DetectorParams {
            dark_rate_cps: 0.0,
            ..DetectorParams::default()
        };
        assert_eq!(dark_prob_per_gate(&quiet, 4).unwrap(), 0.0);

        // full-period gating (100 ns at 10 MHz)
        let gated = DetectorParams {
            gate_s: 1.0e-7,
            ..DetectorParams::default()
        };
        assert!((dark_prob_per_gate(&gated, 4).unwrap() - 4.8e-5).abs() < 1e-7);
        assert!((dark_prob_per_gate(&gated, 1).unwrap() - 1.2e-5).abs() < 1e-9);

        // pulse-width gating (4 ns default)
        let d = DetectorParams::default();
        assert!((dark_prob_per_gate(&d, 4).unwrap() - 1.92e-6).abs() < 1e-9);
        assert!(dark_prob_per_gate(&d, 0).is_err());
    }

    #[test]
    fn dark_prob_rejects_saturated_gate() {
        let bad = DetectorParams {
            dark_rate_cps: 1.0e9,
            gate_s: 1.0e-7,
            ..DetectorParams::default()
        };
        assert!(dark_prob_per_gate(&bad, 4).is_err());
    }

    #[test]
    fn vacuum_gain_is_exactly_dark_counts() {
        let p = LinkParams::defaults_for(1, 20.0).unwrap();
        assert_eq!(click_probability(&p, 0.0).unwrap(), p.dark_prob().unwrap());
    }

    #[test]
    fn signal_gain_at_20km_defaults() {
        // Q = Y0 + 1 - exp(-eta * 0.6) with eta ~ 0.01596
        let mut p = LinkParams::defaults_for(1, 20.0).unwrap();
        p.detectors.gate_s = 1.0e-7;
        let q = click_probability(&p, 0.6).unwrap();
        assert!((q - 9.58e-3).abs() < 2e-4);
        // and with the default 4 ns gate the dark term barely moves it
        let q4 = click_probability(&LinkParams::defaults_for(1, 20.0).unwrap(), 0.6).unwrap();
        assert!((q4 - 9.58e-3).abs() < 2e-4);
    }

    #[test]
    fn gain_saturates_at_one() {
        let p = lossless_link();
        assert_eq!(click_probability(&p, 1.0e6).unwrap(), 1.0);
        assert!(click_probability(&p, -1.0).is_err());
    }

    #[test]
    fn gain_is_monotone_in_intensity_and_distance() {
        let p = LinkParams::defaults_for(1, 20.0).unwrap();
        let mut last = 0.0;
        for step in 0..50 {
            let q = click_probability(&p, step as f64 * 0.05).unwrap();
            assert!(q >= last);
            last = q;
        }
        let q_mu = click_probability(&p, 0.6).unwrap();
        let q_nu = click_probability(&p, 0.15).unwrap();
        assert!(q_mu > q_nu);
        let far = LinkParams::defaults_for(1, 21.0).unwrap();
        assert!(click_probability(&far, 0.6).unwrap() < q_mu);
    }

    #[test]
    fn source_defaults_are_consistent() {
        let s = SourceParams::default();
        s.validate().unwrap();
        assert!((s.mean_intensity() - 0.3375).abs() < 1e-12);
        let bad = SourceParams {
            p_signal: 0.6,
            ..SourceParams::default()
        };
        assert!(bad.validate().is_err());
    }
}
