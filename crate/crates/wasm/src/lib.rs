//! Browser bindings for the receiver simulator.
//!
//! Three interactive operations back the demo page: the key-rate/QBER
//! distance sweep, the crosstalk table versus switch extinction, and the
//! MZI transmission curve versus heater voltage. Each takes a JSON options
//! string (all fields optional) and returns JSON, so the page needs no
//! framework glue. The same functions compile and run natively for tests.

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use muxqkd_core::chip::{mzi_matrix, phase_from_voltage, MziSetting, VoltagePhaseCal};
use muxqkd_core::decoy::{analytic_report, calibrate_misalignment, DEFAULT_F_EC, DEFAULT_Q_SIFT};
use muxqkd_core::link::LinkParams;
use muxqkd_core::network::{crosstalk_run, CrosstalkScenario};

fn err_json(message: &str) -> String {
    serde_json::json!({ "error": message }).to_string()
}

#[derive(Debug, Deserialize)]
#[serde(default)]
struct SweepOptions {
    mu_signal: f64,
    nu_decoy: f64,
    extinction_ratio_db: f64,
    efficiency: f64,
    dark_rate_cps: f64,
    gate_ns: f64,
    /// Signal-class QBER the four users are calibrated to at 20 km.
    target_qbers: [f64; 4],
    max_km: f64,
    step_km: f64,
    f_ec: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            mu_signal: 0.6,
            nu_decoy: 0.15,
            extinction_ratio_db: 30.0,
            efficiency: 0.8,
            dark_rate_cps: 120.0,
            gate_ns: 4.0,
            target_qbers: [0.005205, 0.005353, 0.006185, 0.003559],
            max_km: 200.0,
            step_km: 2.0,
            f_ec: DEFAULT_F_EC,
        }
    }
}

#[derive(Debug, Serialize)]
struct UserCurve {
    user: u8,
    e_misalign: f64,
    rates_per_pulse: Vec<f64>,
    rates_bps: Vec<f64>,
    qbers: Vec<f64>,
    cutoff_km: Option<f64>,
}

#[derive(Debug, Serialize)]
struct SweepCurves {
    distances_km: Vec<f64>,
    users: Vec<UserCurve>,
}

fn link_with(opts: &SweepOptions, user: u8, length_km: f64) -> Result<LinkParams, String> {
    let mut p = LinkParams::defaults_for(user, length_km).map_err(|e| e.to_string())?;
    p.source.mu_signal = opts.mu_signal;
    p.source.nu_decoy = opts.nu_decoy;
    p.receiver = muxqkd_core::chip::routing_config(user, opts.extinction_ratio_db)
        .map_err(|e| e.to_string())?;
    p.detectors.efficiency = opts.efficiency;
    p.detectors.dark_rate_cps = opts.dark_rate_cps;
    p.detectors.gate_s = opts.gate_ns * 1e-9;
    p.validate().map_err(|e| e.to_string())?;
    Ok(p)
}

fn sweep_curves_impl(options_json: &str) -> Result<SweepCurves, String> {
    let opts: SweepOptions = if options_json.trim().is_empty() {
        SweepOptions::default()
    } else {
        serde_json::from_str(options_json).map_err(|e| e.to_string())?
    };
    if opts.step_km.is_nan() || opts.step_km <= 0.0 || !(0.0..).contains(&opts.max_km) {
        return Err("step_km must be > 0 and max_km >= 0".into());
    }
    let mut distances = Vec::new();
    let mut km = 0.0;
    while km <= opts.max_km + 1e-9 {
        distances.push(km);
        km += opts.step_km;
    }

    let mut users = Vec::new();
    for user in 1..=4u8 {
        let reference = link_with(&opts, user, 20.0)?;
        let e_misalign = calibrate_misalignment(opts.target_qbers[user as usize - 1], &reference)
            .map_err(|e| format!("user {user}: {e}"))?;
        let mut rates_per_pulse = Vec::with_capacity(distances.len());
        let mut rates_bps = Vec::with_capacity(distances.len());
        let mut qbers = Vec::with_capacity(distances.len());
        let mut cutoff_km = None;
        for &d in &distances {
            let mut p = link_with(&opts, user, d)?;
            p.e_misalign = e_misalign;
            let report =
                analytic_report(&p, opts.f_ec, DEFAULT_Q_SIFT).map_err(|e| e.to_string())?;
            if report.r_per_pulse == 0.0 && cutoff_km.is_none() {
                cutoff_km = Some(d);
            }
            rates_per_pulse.push(report.r_per_pulse);
            rates_bps.push(report.r_bps);
            qbers.push(report.qber);
        }
        users.push(UserCurve {
            user,
            e_misalign,
            rates_per_pulse,
            rates_bps,
            qbers,
            cutoff_km,
        });
    }
    Ok(SweepCurves {
        distances_km: distances,
        users,
    })
}

/// Key rate and QBER vs fiber length for all four users, calibrated to the
/// requested 20 km QBER targets. Returns JSON.
#[wasm_bindgen]
pub fn sweep_curves(options_json: &str) -> String {
    match sweep_curves_impl(options_json) {
        Ok(curves) => serde_json::to_string(&curves).unwrap_or_else(|e| err_json(&e.to_string())),
        Err(e) => err_json(&e),
    }
}

#[derive(Debug, Deserialize)]
#[serde(default)]
struct CrosstalkOptions {
    selected_user: u8,
    length_km: f64,
    baseline_qber: f64,
    extinction_ratio_db: f64,
}

impl Default for CrosstalkOptions {
    fn default() -> Self {
        Self {
            selected_user: 4,
            length_km: 20.0,
            baseline_qber: 0.0036,
            extinction_ratio_db: 30.0,
        }
    }
}

#[derive(Debug, Serialize)]
struct CrosstalkRow {
    active_users: Vec<u8>,
    r_per_pulse: f64,
    qber: f64,
}

#[derive(Debug, Serialize)]
struct CrosstalkTable {
    rows: Vec<CrosstalkRow>,
    rate_drop_percent: f64,
}

fn crosstalk_table_impl(options_json: &str) -> Result<CrosstalkTable, String> {
    let opts: CrosstalkOptions = if options_json.trim().is_empty() {
        CrosstalkOptions::default()
    } else {
        serde_json::from_str(options_json).map_err(|e| e.to_string())?
    };
    let mut params =
        LinkParams::defaults_for(opts.selected_user, opts.length_km).map_err(|e| e.to_string())?;
    params.e_misalign =
        calibrate_misalignment(opts.baseline_qber, &params).map_err(|e| e.to_string())?;

    let mut others: Vec<u8> = (1..=4).filter(|&u| u != opts.selected_user).collect();
    others.sort_by_key(|&u| ((u as i8 - opts.selected_user as i8).unsigned_abs(), u));
    let mut active = vec![opts.selected_user];
    let mut rows = Vec::new();
    for step in 0..=others.len() {
        if step > 0 {
            active.push(others[step - 1]);
            active.sort_unstable();
        }
        let scenario = CrosstalkScenario::new(opts.selected_user, active.clone())
            .map_err(|e| e.to_string())?;
        let result = crosstalk_run(
            &scenario,
            &params,
            opts.extinction_ratio_db,
            DEFAULT_F_EC,
            DEFAULT_Q_SIFT,
        )
        .map_err(|e| e.to_string())?;
        rows.push(CrosstalkRow {
            active_users: active.clone(),
            r_per_pulse: result.r_per_pulse,
            qber: result.qber,
        });
    }
    let rate_drop_percent = if rows[0].r_per_pulse > 0.0 {
        100.0 * (rows[0].r_per_pulse - rows.last().unwrap().r_per_pulse) / rows[0].r_per_pulse
    } else {
        0.0
    };
    Ok(CrosstalkTable {
        rows,
        rate_drop_percent,
    })
}

/// Crosstalk table: the selected user's rate and QBER as the other
/// transmitters switch on one by one. Returns JSON.
#[wasm_bindgen]
pub fn crosstalk_table(options_json: &str) -> String {
    match crosstalk_table_impl(options_json) {
        Ok(table) => serde_json::to_string(&table).unwrap_or_else(|e| err_json(&e.to_string())),
        Err(e) => err_json(&e),
    }
}

#[derive(Debug, Serialize)]
struct MziCurve {
    voltages: Vec<f64>,
    /// Power on the straight-through port for light on input 0.
    bar_port: Vec<f64>,
    /// Power on the crossed port.
    cross_port: Vec<f64>,
    extinction_ratio_db: f64,
}

fn mzi_transmission_impl(
    alpha_rad_per_v2: f64,
    er_db: f64,
    v_max: f64,
    points: u32,
) -> Result<MziCurve, String> {
    let cal = VoltagePhaseCal::new(alpha_rad_per_v2).map_err(|e| e.to_string())?;
    if v_max.is_nan() || v_max <= 0.0 || points < 2 {
        return Err("need v_max > 0 and at least 2 points".into());
    }
    let mut voltages = Vec::with_capacity(points as usize);
    let mut bar_port = Vec::with_capacity(points as usize);
    let mut cross_port = Vec::with_capacity(points as usize);
    for i in 0..points {
        let v = v_max * i as f64 / (points - 1) as f64;
        let phase = phase_from_voltage(&cal, v).map_err(|e| e.to_string())?;
        let m = mzi_matrix(&MziSetting::new(phase, er_db).map_err(|e| e.to_string())?);
        voltages.push(v);
        bar_port.push(m.get(0, 0).norm_sqr().max(10f64.powf(-er_db / 10.0)));
        cross_port.push(m.get(1, 0).norm_sqr().max(10f64.powf(-er_db / 10.0)));
    }
    Ok(MziCurve {
        voltages,
        bar_port,
        cross_port,
        extinction_ratio_db: er_db,
    })
}

/// Transmission of one switch versus heater voltage (phase = alpha V^2),
/// with the dark-port floor set by the extinction ratio. Returns JSON.
#[wasm_bindgen]
pub fn mzi_transmission(alpha_rad_per_v2: f64, er_db: f64, v_max: f64, points: u32) -> String {
    match mzi_transmission_impl(alpha_rad_per_v2, er_db, v_max, points) {
        Ok(curve) => serde_json::to_string(&curve).unwrap_or_else(|e| err_json(&e.to_string())),
        Err(e) => err_json(&e),
    }
}
