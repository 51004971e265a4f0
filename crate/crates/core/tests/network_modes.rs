//! Schedule evaluation across both engines and the published network mean.

use muxqkd_core::decoy::{calibrate_misalignment, DEFAULT_F_EC, DEFAULT_Q_SIFT};
use muxqkd_core::link::LinkParams;
use muxqkd_core::network::{run_schedule, Schedule, SimMode};

const FIG4_QBERS: [f64; 4] = [0.005205, 0.005353, 0.006185, 0.003559];

fn calibrated_links() -> Vec<LinkParams> {
    (1..=4u8)
        .map(|u| {
            let mut p = LinkParams::defaults_for(u, 20.0).unwrap();
            p.e_misalign = calibrate_misalignment(FIG4_QBERS[u as usize - 1], &p).unwrap();
            p
        })
        .collect()
}

#[test]
fn round_robin_network_reaches_the_published_mean_throughput() {
    let links = calibrated_links();
    let schedule = Schedule::round_robin(1_000_000, 0);
    let report = run_schedule(
        &schedule,
        &links,
        SimMode::Analytic,
        DEFAULT_F_EC,
        DEFAULT_Q_SIFT,
    )
    .unwrap();
    // Standalone per-pulse rates average to the published aggregate; the
    // round-robin then hands each user a quarter of the clock.
    let mean_standalone: f64 = report
        .users
        .iter()
        .map(|u| u.standalone.r_per_pulse)
        .sum::<f64>()
        / 4.0;
    let mean_bps = mean_standalone * 1.0e7;
    assert!(
        (mean_bps - 13_680.0).abs() / 13_680.0 < 0.30,
        "mean throughput {mean_bps:.0} bps"
    );
    let total_effective: f64 = report.users.iter().map(|u| u.effective_r_bps).sum();
    assert!((total_effective - mean_bps).abs() / mean_bps < 1e-12);
}

#[test]
fn monte_carlo_schedule_matches_analytic_within_noise() {
    let links = calibrated_links();
    let schedule = Schedule::round_robin(250_000, 100);
    let analytic = run_schedule(
        &schedule,
        &links,
        SimMode::Analytic,
        DEFAULT_F_EC,
        DEFAULT_Q_SIFT,
    )
    .unwrap();
    let mc = run_schedule(
        &schedule,
        &links,
        SimMode::MonteCarlo {
            n_pulses: 2_000_000,
            seed: 9,
        },
        DEFAULT_F_EC,
        DEFAULT_Q_SIFT,
    )
    .unwrap();
    assert_eq!(analytic.users.len(), 4);
    assert_eq!(mc.users.len(), 4);
    assert!(mc.dead_share > 0.0);
    for (a, m) in analytic.users.iter().zip(&mc.users) {
        assert_eq!(a.user, m.user);
        assert_eq!(a.time_share, m.time_share);
        // decoy-amplified shot noise at 2e6 pulses stays within ~20%
        let rel =
            (m.standalone.r_per_pulse - a.standalone.r_per_pulse).abs() / a.standalone.r_per_pulse;
        assert!(
            rel < 0.2,
            "user {}: MC rate {} vs analytic {}",
            a.user,
            m.standalone.r_per_pulse,
            a.standalone.r_per_pulse
        );
    }
    // MC path is reproducible too
    let mc2 = run_schedule(
        &schedule,
        &links,
        SimMode::MonteCarlo {
            n_pulses: 2_000_000,
            seed: 9,
        },
        DEFAULT_F_EC,
        DEFAULT_Q_SIFT,
    )
    .unwrap();
    for (a, b) in mc.users.iter().zip(&mc2.users) {
        assert_eq!(a.standalone.r_per_pulse, b.standalone.r_per_pulse);
    }
}

#[test]
fn sim_run_records_provenance() {
    let params = LinkParams::defaults_for(1, 20.0).unwrap();
    let run = muxqkd_core::sim::run(&params, 100_000, 5).unwrap();
    assert_eq!(run.seed, 5);
    assert_eq!(run.n_pulses, 100_000);
    assert!(run.rng_algorithm.contains("ChaCha8"));
    assert_eq!(run.tallies.total_sent(), 100_000);
}
