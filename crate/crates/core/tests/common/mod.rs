//! Shared test oracles, independent of the implementation paths they check.
#![allow(dead_code)] // each test target compiles its own copy

use muxqkd_core::decoy::DecoyObservables;

/// Brute-force photon-number-resolved channel model.
///
/// A pulse of mean photon number `k` carries `n ~ Poisson(k)` photons; each
/// photon survives with probability `eta` and background clicks fire with
/// probability `y0`, so the n-photon yield is
/// `Y_n = 1 - (1 - y0)(1 - eta)^n`. Errors come from background (rate 1/2)
/// and misalignment on real detections:
/// `e_n Y_n = y0/2 + e_d (1 - (1 - eta)^n)`.
///
/// Class observables are computed by explicit summation over photon numbers
/// 0..=20 (the Poisson tail beyond 20 is < 1e-15 for the intensities used
/// here), giving ground truth the decoy bounds must stay on the safe side of.
pub struct PoissonChannelOracle {
    pub eta: f64,
    pub y0: f64,
    pub e_d: f64,
}

pub const MAX_PHOTON_NUMBER: u32 = 20;

impl PoissonChannelOracle {
    pub fn yield_n(&self, n: u32) -> f64 {
        1.0 - (1.0 - self.y0) * (1.0 - self.eta).powi(n as i32)
    }

    /// Joint probability of a click and an error for an n-photon pulse.
    pub fn error_yield_n(&self, n: u32) -> f64 {
        0.5 * self.y0 + self.e_d * (1.0 - (1.0 - self.eta).powi(n as i32))
    }

    /// True single-photon yield and error rate.
    pub fn single_photon_truth(&self) -> (f64, f64) {
        let y1 = self.yield_n(1);
        (y1, self.error_yield_n(1) / y1)
    }

    fn poisson_pmf(intensity: f64, n: u32) -> f64 {
        let mut p = (-intensity).exp();
        for i in 1..=n {
            p *= intensity / i as f64;
        }
        p
    }

    /// Gain of an intensity class by explicit photon-number summation.
    pub fn gain(&self, intensity: f64) -> f64 {
        (0..=MAX_PHOTON_NUMBER)
            .map(|n| Self::poisson_pmf(intensity, n) * self.yield_n(n))
            .sum()
    }

    /// Error-weighted gain `E_k Q_k` of an intensity class.
    pub fn error_gain(&self, intensity: f64) -> f64 {
        (0..=MAX_PHOTON_NUMBER)
            .map(|n| Self::poisson_pmf(intensity, n) * self.error_yield_n(n))
            .sum()
    }

    /// Exact observables for a (mu, nu, vacuum) decoy protocol.
    pub fn observables(&self, mu: f64, nu: f64) -> DecoyObservables {
        let q_mu = self.gain(mu);
        let q_nu = self.gain(nu);
        DecoyObservables {
            q_mu,
            q_nu,
            q_vac: self.gain(0.0),
            e_mu: self.error_gain(mu) / q_mu,
            e_nu: self.error_gain(nu) / q_nu,
        }
    }
}

/// Mean and standard deviation of a sample.
pub fn mean_std(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
