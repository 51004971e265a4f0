//! One-receiver, four-user network orchestration.
//!
//! The receiver chip serves one user at a time, so the network runs a
//! time-division schedule: each user gets slots of clock pulses, separated
//! by an optional reconfiguration dead time while the switch heaters settle.
//! A user's effective throughput is their standalone key rate scaled by
//! their share of the schedule.
//!
//! Crosstalk scenarios model the remaining users transmitting concurrently:
//! analytically their leakage inflates the background yield by
//! `1 - exp(-eta * eps * mean_intensity)` per interferer with
//! `eps = 10^(-ER/10)`, and leaked clicks carry error 1/2.

use crate::decoy::{
    analytic_report, decoy_bounds, predict_observables_with_background, secret_key_rate,
    KeyRateReport,
};
use crate::error::{Error, Result};
use crate::linear_optics::db_to_linear;
use crate::link::{system_transmittance, LinkParams};
use crate::sim::{simulate_with_interferers, tallies_to_observables};

/// One schedule slot: a user and how many clock pulses they hold the chip.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduleSlot {
    pub user: u8,
    pub duration_pulses: u64,
}

/// Cyclic TDM schedule over the four users.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    pub slots: Vec<ScheduleSlot>,
    /// Clock pulses lost to switch reconfiguration before each slot.
    pub reconfig_dead_pulses: u64,
}

impl Schedule {
    /// Equal round-robin over users 1..4.
    pub fn round_robin(duration_pulses: u64, reconfig_dead_pulses: u64) -> Self {
        Self {
            slots: (1..=4)
                .map(|user| ScheduleSlot {
                    user,
                    duration_pulses,
                })
                .collect(),
            reconfig_dead_pulses,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.slots.is_empty() {
            return Err(Error::InvalidParameter("schedule has no slots".into()));
        }
        for slot in &self.slots {
            if slot.duration_pulses == 0 {
                return Err(Error::InvalidParameter(
                    "slot durations must be >= 1 pulse".into(),
                ));
            }
            if !(1..=4).contains(&slot.user) {
                return Err(Error::InvalidParameter(format!(
                    "slot user {} not in 1..4",
                    slot.user
                )));
            }
        }
        Ok(())
    }

    /// Total cycle length including dead time.
    pub fn total_pulses(&self) -> u64 {
        let live: u64 = self.slots.iter().map(|s| s.duration_pulses).sum();
        live + self.reconfig_dead_pulses * self.slots.len() as u64
    }

    /// Fraction of the cycle owned by `user`.
    pub fn share(&self, user: u8) -> f64 {
        let owned: u64 = self
            .slots
            .iter()
            .filter(|s| s.user == user)
            .map(|s| s.duration_pulses)
            .sum();
        owned as f64 / self.total_pulses() as f64
    }

    /// Fraction of the cycle burned by reconfiguration.
    pub fn dead_share(&self) -> f64 {
        (self.reconfig_dead_pulses * self.slots.len() as u64) as f64 / self.total_pulses() as f64
    }

    /// Pulses owned by `user` over one cycle.
    pub fn pulses_for(&self, user: u8) -> u64 {
        self.slots
            .iter()
            .filter(|s| s.user == user)
            .map(|s| s.duration_pulses)
            .sum()
    }
}

/// How per-user rates are evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SimMode {
    Analytic,
    MonteCarlo { n_pulses: u64, seed: u64 },
}

/// A crosstalk scenario: which users are lit while `selected_user` holds
/// the chip.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrosstalkScenario {
    pub selected_user: u8,
    pub active_users: Vec<u8>,
}

impl CrosstalkScenario {
    pub fn new(selected_user: u8, mut active_users: Vec<u8>) -> Result<Self> {
        active_users.sort_unstable();
        active_users.dedup();
        if !active_users.contains(&selected_user) {
            return Err(Error::InvalidParameter(
                "the selected user must be in the active set".into(),
            ));
        }
        if active_users.iter().any(|u| !(1..=4).contains(u)) {
            return Err(Error::InvalidParameter("active users must be 1..4".into()));
        }
        Ok(Self {
            selected_user,
            active_users,
        })
    }

    pub fn interferers(&self) -> Vec<u8> {
        self.active_users
            .iter()
            .copied()
            .filter(|&u| u != self.selected_user)
            .collect()
    }
}

/// One user's standalone rate and schedule-scaled throughput.
#[derive(Debug, Clone)]
pub struct UserThroughput {
    pub user: u8,
    pub standalone: KeyRateReport,
    pub time_share: f64,
    /// Standalone bits/s scaled by the user's schedule share.
    pub effective_r_bps: f64,
}

/// Crosstalk result for one active-user set.
#[derive(Debug, Clone, PartialEq)]
pub struct CrosstalkResult {
    pub active_users: Vec<u8>,
    pub r_per_pulse: f64,
    pub qber: f64,
}

/// Network-level report: per-user throughput plus schedule accounting.
#[derive(Debug, Clone)]
pub struct NetworkReport {
    pub users: Vec<UserThroughput>,
    pub dead_share: f64,
}

/// Evaluate a schedule. `params_per_user` supplies the link of each user
/// appearing in the schedule (keyed by user index).
pub fn run_schedule(
    schedule: &Schedule,
    params_per_user: &[LinkParams],
    mode: SimMode,
    f_ec: f64,
    q_sift: f64,
) -> Result<NetworkReport> {
    schedule.validate()?;
    let mut users: Vec<u8> = schedule.slots.iter().map(|s| s.user).collect();
    users.sort_unstable();
    users.dedup();

    let mut throughput = Vec::with_capacity(users.len());
    for user in users {
        let params = params_per_user
            .iter()
            .find(|p| p.selected_user == user)
            .ok_or_else(|| {
                Error::InvalidParameter(format!("no link parameters for user {user}"))
            })?;
        let standalone = match mode {
            SimMode::Analytic => analytic_report(params, f_ec, q_sift)?,
            SimMode::MonteCarlo { n_pulses, seed } => {
                // Each user simulates on their own slots with a stream
                // offset so sessions stay independent but reproducible.
                let tallies = simulate_with_interferers(params, &[], n_pulses, seed ^ user as u64)?;
                let obs = tallies_to_observables(&tallies)?;
                let bounds = decoy_bounds(&obs, params.source.mu_signal, params.source.nu_decoy)?;
                let r = secret_key_rate(&obs, &bounds, f_ec, q_sift, params.source.p_signal);
                KeyRateReport {
                    user,
                    length_km: params.channel.length_km,
                    observables: obs,
                    bounds,
                    qber: obs.e_mu,
                    r_per_pulse: r,
                    r_bps: r * params.source.rep_rate_hz,
                    f_ec,
                    q_sift,
                }
            }
        };
        let time_share = schedule.share(user);
        throughput.push(UserThroughput {
            user,
            effective_r_bps: standalone.r_bps * time_share,
            standalone,
            time_share,
        });
    }
    Ok(NetworkReport {
        users: throughput,
        dead_share: schedule.dead_share(),
    })
}

/// Analytic crosstalk evaluation.
///
/// Every active interferer adds a background click probability
/// `1 - exp(-eta * eps * mean_intensity)` with `eps = 10^(-er_db/10)`; the
/// observables are recomputed with the inflated background and the rate and
/// QBER re-derived.
pub fn crosstalk_run(
    scenario: &CrosstalkScenario,
    params: &LinkParams,
    er_db: f64,
    f_ec: f64,
    q_sift: f64,
) -> Result<CrosstalkResult> {
    let eps = db_to_linear(er_db)?;
    let eta = system_transmittance(params)?;
    let mean_intensity = params.source.mean_intensity();
    let per_interferer = 1.0 - (-eta * eps * mean_intensity).exp();
    let background = per_interferer * scenario.interferers().len() as f64;
    let obs = predict_observables_with_background(params, background)?;
    let bounds = decoy_bounds(&obs, params.source.mu_signal, params.source.nu_decoy)?;
    let r = secret_key_rate(&obs, &bounds, f_ec, q_sift, params.source.p_signal);
    Ok(CrosstalkResult {
        active_users: scenario.active_users.clone(),
        r_per_pulse: r,
        qber: obs.e_mu,
    })
}

/// Monte Carlo crosstalk evaluation: interferer photons are routed through
/// the chip's leakage transfer matrices explicitly.
pub fn crosstalk_run_mc(
    scenario: &CrosstalkScenario,
    params: &LinkParams,
    n_pulses: u64,
    seed: u64,
    f_ec: f64,
    q_sift: f64,
) -> Result<CrosstalkResult> {
    let tallies = simulate_with_interferers(params, &scenario.interferers(), n_pulses, seed)?;
    let obs = tallies_to_observables(&tallies)?;
    let bounds = decoy_bounds(&obs, params.source.mu_signal, params.source.nu_decoy)?;
    let r = secret_key_rate(&obs, &bounds, f_ec, q_sift, params.source.p_signal);
    Ok(CrosstalkResult {
        active_users: scenario.active_users.clone(),
        r_per_pulse: r,
        qber: obs.e_mu,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoy::{DEFAULT_F_EC, DEFAULT_Q_SIFT};

    fn default_links(length_km: f64) -> Vec<LinkParams> {
        (1..=4)
            .map(|u| {
                let mut p = LinkParams::defaults_for(u, length_km).unwrap();
                p.e_misalign = 0.003;
                p
            })
            .collect()
    }

    #[test]
    fn round_robin_splits_rate_four_ways() {
        let schedule = Schedule::round_robin(1_000_000, 0);
        let links = default_links(20.0);
        let report = run_schedule(
            &schedule,
            &links,
            SimMode::Analytic,
            DEFAULT_F_EC,
            DEFAULT_Q_SIFT,
        )
        .unwrap();
        assert_eq!(report.users.len(), 4);
        for u in &report.users {
            assert!((u.time_share - 0.25).abs() < 1e-15);
            assert!((u.effective_r_bps - u.standalone.r_bps / 4.0).abs() < 1e-9);
        }
        assert_eq!(report.dead_share, 0.0);
    }

    #[test]
    fn single_user_schedule_equals_standalone() {
        let schedule = Schedule {
            slots: vec![ScheduleSlot {
                user: 2,
                duration_pulses: 1000,
            }],
            reconfig_dead_pulses: 0,
        };
        let links = default_links(20.0);
        let report = run_schedule(
            &schedule,
            &links,
            SimMode::Analytic,
            DEFAULT_F_EC,
            DEFAULT_Q_SIFT,
        )
        .unwrap();
        let standalone = analytic_report(&links[1], DEFAULT_F_EC, DEFAULT_Q_SIFT).unwrap();
        assert_eq!(report.users.len(), 1);
        assert_eq!(report.users[0].effective_r_bps, standalone.r_bps);
    }

    #[test]
    fn shares_and_dead_time_conserve_the_cycle() {
        let schedule = Schedule {
            slots: vec![
                ScheduleSlot {
                    user: 1,
                    duration_pulses: 300,
                },
                ScheduleSlot {
                    user: 2,
                    duration_pulses: 500,
                },
                ScheduleSlot {
                    user: 1,
                    duration_pulses: 200,
                },
            ],
            reconfig_dead_pulses: 50,
        };
        let total: f64 =
            schedule.share(1) + schedule.share(2) + schedule.share(3) + schedule.dead_share();
        assert!((total - 1.0).abs() < 1e-15);
        assert_eq!(schedule.pulses_for(1), 500);
    }

    #[test]
    fn empty_schedule_is_rejected() {
        let schedule = Schedule {
            slots: vec![],
            reconfig_dead_pulses: 0,
        };
        assert!(schedule.validate().is_err());
    }

    #[test]
    fn lone_scenario_matches_standalone_bit_for_bit() {
        let mut params = LinkParams::defaults_for(4, 20.0).unwrap();
        params.e_misalign = 0.0035;
        let scenario = CrosstalkScenario::new(4, vec![4]).unwrap();
        let xt = crosstalk_run(&scenario, &params, 30.0, DEFAULT_F_EC, DEFAULT_Q_SIFT).unwrap();
        let standalone = analytic_report(&params, DEFAULT_F_EC, DEFAULT_Q_SIFT).unwrap();
        assert_eq!(xt.r_per_pulse, standalone.r_per_pulse);
        assert_eq!(xt.qber, standalone.qber);
    }

    #[test]
    fn infinite_extinction_removes_crosstalk() {
        let mut params = LinkParams::defaults_for(4, 20.0).unwrap();
        params.e_misalign = 0.0035;
        let all = CrosstalkScenario::new(4, vec![1, 2, 3, 4]).unwrap();
        let lone = CrosstalkScenario::new(4, vec![4]).unwrap();
        let with_all =
            crosstalk_run(&all, &params, f64::INFINITY, DEFAULT_F_EC, DEFAULT_Q_SIFT).unwrap();
        let alone =
            crosstalk_run(&lone, &params, f64::INFINITY, DEFAULT_F_EC, DEFAULT_Q_SIFT).unwrap();
        assert_eq!(with_all.r_per_pulse, alone.r_per_pulse);
        assert_eq!(with_all.qber, alone.qber);
    }

    #[test]
    fn interferers_monotonically_degrade_the_link() {
        let mut params = LinkParams::defaults_for(4, 20.0).unwrap();
        params.e_misalign = 0.0035;
        let mut last_r = f64::INFINITY;
        let mut last_q = 0.0;
        for actives in [vec![4], vec![3, 4], vec![2, 3, 4], vec![1, 2, 3, 4]] {
            let scenario = CrosstalkScenario::new(4, actives).unwrap();
            let res =
                crosstalk_run(&scenario, &params, 30.0, DEFAULT_F_EC, DEFAULT_Q_SIFT).unwrap();
            assert!(res.r_per_pulse <= last_r);
            assert!(res.qber >= last_q);
            last_r = res.r_per_pulse;
            last_q = res.qber;
        }
    }

    #[test]
    fn qber_grows_nearly_linearly_with_interferers() {
        let mut params = LinkParams::defaults_for(4, 20.0).unwrap();
        params.e_misalign = 0.0035;
        let mut qbers = Vec::new();
        for actives in [vec![4], vec![3, 4], vec![2, 3, 4], vec![1, 2, 3, 4]] {
            let scenario = CrosstalkScenario::new(4, actives).unwrap();
            qbers.push(
                crosstalk_run(&scenario, &params, 30.0, DEFAULT_F_EC, DEFAULT_Q_SIFT)
                    .unwrap()
                    .qber,
            );
        }
        let first_diff = qbers[1] - qbers[0];
        let second_diff = (qbers[2] - qbers[1]) - first_diff;
        assert!(second_diff.abs() < 0.1 * first_diff.abs());
    }

    #[test]
    fn scenario_requires_selected_user() {
        assert!(CrosstalkScenario::new(4, vec![1, 2]).is_err());
        assert!(CrosstalkScenario::new(4, vec![4, 9]).is_err());
        let sc = CrosstalkScenario::new(4, vec![3, 4, 3]).unwrap();
        assert_eq!(sc.interferers(), vec![3]);
    }
}
