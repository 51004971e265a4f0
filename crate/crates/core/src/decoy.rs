//! Analytic decoy-state BB84 engine.
//!
//! Implements the vacuum + weak-decoy estimate: from the measured gains and
//! error rates of the signal (mu), decoy (nu) and vacuum classes it bounds
//! the single-photon yield from below and the single-photon error rate from
//! above, then evaluates the asymptotic secret key rate
//!
//! ```text
//! R = p_signal * q_sift * ( -Q_mu f H2(E_mu) + Q1 (1 - H2(e1)) )
//! ```
//!
//! with error-correction inefficiency `f` and binary entropy `H2`.

use crate::error::{Error, Result};
use crate::link::{system_transmittance, LinkParams};

/// Default error-correction inefficiency.
pub const DEFAULT_F_EC: f64 = 1.16;
/// Default sifting factor: passive 50:50 basis choice, matched bases kept.
pub const DEFAULT_Q_SIFT: f64 = 0.5;
/// Vacuum error rate: dark and background clicks land on a random detector.
pub const E_VACUUM: f64 = 0.5;

/// Per-class gains and error rates observed (or predicted) at the receiver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoyObservables {
    /// Gain of the signal class (clicks per emitted signal pulse).
    pub q_mu: f64,
    /// Gain of the weak decoy class.
    pub q_nu: f64,
    /// Gain of the vacuum class (dark + background only).
    pub q_vac: f64,
    /// QBER of the signal class.
    pub e_mu: f64,
    /// QBER of the decoy class.
    pub e_nu: f64,
}

/// Decoy bounds on the single-photon contribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoyBounds {
    /// Background yield (vacuum gain).
    pub y0: f64,
    /// Lower bound on the single-photon yield, clamped to [0, 1].
    pub y1_lower: f64,
    /// Upper bound on the single-photon error rate, clamped to [0, 0.5].
    pub e1_upper: f64,
    /// Lower bound on the single-photon gain, `Y1 * mu * e^-mu`.
    pub q1_lower: f64,
}

/// Full per-user, per-distance key-rate summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyRateReport {
    pub user: u8,
    pub length_km: f64,
    pub observables: DecoyObservables,
    pub bounds: DecoyBounds,
    /// Signal-class QBER (duplicated from observables for reporting).
    pub qber: f64,
    /// Secret bits per emitted clock pulse (any class), clamped at 0.
    pub r_per_pulse: f64,
    /// Secret bits per second at the source repetition rate.
    pub r_bps: f64,
    pub f_ec: f64,
    pub q_sift: f64,
}

impl KeyRateReport {
    /// Fixed CSV column order used by every report writer.
    pub const CSV_HEADER: &'static str =
        "user,length_km,Q_mu,E_mu,Y1_lower,e1_upper,R_per_pulse,R_bps";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.user,
            self.length_km,
            self.observables.q_mu,
            self.observables.e_mu,
            self.bounds.y1_lower,
            self.bounds.e1_upper,
            self.r_per_pulse,
            self.r_bps
        )
    }
}

/// Binary entropy `H2(x) = -x log2 x - (1-x) log2 (1-x)`, zero at both ends.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("H2 needs x in [0, 1], got {x}")));
    }
    if x == 0.0 || x == 1.0 {
        return Ok(0.0);
    }
    Ok(-x * x.log2() - (1.0 - x) * (1.0 - x).log2())
}

/// Predicted observables for a link: `Q_k = Y0 + 1 - e^(-eta k)` and
/// `E_k Q_k = Y0/2 + e_mis (1 - e^(-eta k))`.
pub fn predict_observables(p: &LinkParams) -> Result<DecoyObservables> {
    predict_observables_with_background(p, 0.0)
}

/// Same as [`predict_observables`] with an extra background click
/// probability added to the dark floor (crosstalk leakage enters here).
/// Background clicks land on a random detector, so they carry error 1/2
/// exactly like dark counts.
pub fn predict_observables_with_background(
    p: &LinkParams,
    background: f64,
) -> Result<DecoyObservables> {
    p.validate()?;
    if !(0.0..1.0).contains(&background) {
        return Err(Error::InvalidParameter(format!(
            "background probability must be in [0, 1), got {background}"
        )));
    }
    let eta = system_transmittance(p)?;
    let y0 = p.dark_prob()? + background;

    let gain_error = |intensity: f64| -> (f64, f64) {
        let s = 1.0 - (-eta * intensity).exp();
        let q = (y0 + s).min(1.0);
        let eq = E_VACUUM * y0 + p.e_misalign * s;
        let e = if q > 0.0 { (eq / q).min(0.5) } else { E_VACUUM };
        (q, e)
    };
    let (q_mu, e_mu) = gain_error(p.source.mu_signal);
    let (q_nu, e_nu) = gain_error(p.source.nu_decoy);
    Ok(DecoyObservables {
        q_mu,
        q_nu,
        q_vac: y0,
        e_mu,
        e_nu,
    })
}

/// Vacuum + weak-decoy bounds on the single-photon yield and error rate.
pub fn decoy_bounds(obs: &DecoyObservables, mu: f64, nu: f64) -> Result<DecoyBounds> {
    if !(mu > nu && nu > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "decoy bounds need mu > nu > 0, got mu={mu}, nu={nu}"
        )));
    }
    for (name, q) in [("Q_mu", obs.q_mu), ("Q_nu", obs.q_nu), ("Q_vac", obs.q_vac)] {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::InvalidParameter(format!(
                "{name} must be in [0, 1], got {q}"
            )));
        }
    }
    let y0 = obs.q_vac;
    let raw = (mu / (mu * nu - nu * nu))
        * (obs.q_nu * nu.exp()
            - obs.q_mu * mu.exp() * (nu * nu) / (mu * mu)
            - ((mu * mu - nu * nu) / (mu * mu)) * y0);
    let y1_lower = raw.clamp(0.0, 1.0);
    let e1_upper = if y1_lower > 0.0 {
        ((obs.e_nu * obs.q_nu * nu.exp() - E_VACUUM * y0) / (y1_lower * nu)).clamp(0.0, 0.5)
    } else {
        // no single-photon yield certified; error bound is vacuous
        0.5
    };
    Ok(DecoyBounds {
        y0,
        y1_lower,
        e1_upper,
        q1_lower: y1_lower * mu * (-mu).exp(),
    })
}

/// Asymptotic secret key rate per emitted clock pulse, clamped at zero.
///
/// `p_signal` converts from "per signal pulse" to "per clock pulse of any
/// class"; `q_sift` accounts for basis sifting.
pub fn secret_key_rate(
    obs: &DecoyObservables,
    bounds: &DecoyBounds,
    f_ec: f64,
    q_sift: f64,
    p_signal: f64,
) -> f64 {
    let h_mu = binary_entropy(obs.e_mu.clamp(0.0, 1.0)).expect("clamped");
    let h_e1 = binary_entropy(bounds.e1_upper.clamp(0.0, 1.0)).expect("clamped");
    let r = p_signal * q_sift * (-obs.q_mu * f_ec * h_mu + bounds.q1_lower * (1.0 - h_e1));
    r.max(0.0)
}

/// Misalignment value that reproduces `target_qber` on the signal class,
/// found by bisection on the monotone map `e_misalign -> E_mu`.
pub fn calibrate_misalignment(target_qber: f64, p: &LinkParams) -> Result<f64> {
    if !(0.0..0.5).contains(&target_qber) {
        return Err(Error::Infeasible(format!(
            "target QBER must be in [0, 0.5), got {target_qber}"
        )));
    }
    let qber_at = |e: f64| -> Result<f64> {
        let mut trial = p.clone();
        trial.e_misalign = e;
        Ok(predict_observables(&trial)?.e_mu)
    };
    let floor = qber_at(0.0)?;
    if target_qber < floor - 1e-12 {
        return Err(Error::Infeasible(format!(
            "target QBER {target_qber} is below the dark-count floor {floor}"
        )));
    }
    let ceiling = qber_at(0.5)?;
    if target_qber > ceiling {
        return Err(Error::Infeasible(format!(
            "target QBER {target_qber} exceeds the maximum reachable {ceiling}"
        )));
    }
    let (mut lo, mut hi) = (0.0f64, 0.5f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if qber_at(mid)? < target_qber {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Convenience: run the full analytic pipeline for one link.
pub fn analytic_report(p: &LinkParams, f_ec: f64, q_sift: f64) -> Result<KeyRateReport> {
    let obs = predict_observables(p)?;
    let bounds = decoy_bounds(&obs, p.source.mu_signal, p.source.nu_decoy)?;
    let r_per_pulse = secret_key_rate(&obs, &bounds, f_ec, q_sift, p.source.p_signal);
    Ok(KeyRateReport {
        user: p.selected_user,
        length_km: p.channel.length_km,
        observables: obs,
        bounds,
        qber: obs.e_mu,
        r_per_pulse,
        r_bps: r_per_pulse * p.source.rep_rate_hz,
        f_ec,
        q_sift,
    })
}
