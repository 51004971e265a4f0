//! Statistical checks of the Monte Carlo engine against analytic oracles.

mod common;

use common::mean_std;
use muxqkd_core::decoy::{predict_observables, DEFAULT_F_EC, DEFAULT_Q_SIFT};
use muxqkd_core::link::{LinkParams, SourceParams};
use muxqkd_core::network::{crosstalk_run, crosstalk_run_mc, CrosstalkScenario};
use muxqkd_core::sim::{simulate, tallies_to_observables, RNG_ALGORITHM};

/// Binomial standard deviation of a count.
fn binom_sd(n: f64, p: f64) -> f64 {
    (n * p * (1.0 - p)).sqrt()
}

#[test]
fn ideal_channel_sifts_half_with_no_errors() {
    // Unit transmittance, no dark counts, no misalignment, bright pulses:
    // every pulse clicks, half survive sifting, none are wrong.
    let mut p = LinkParams::defaults_for(1, 0.0).unwrap();
    p.receiver.loss_2dgc_db = 0.0;
    p.receiver.loss_output_gc_db = 0.0;
    p.receiver.loss_waveguide_db = 0.0;
    p.detectors.efficiency = 1.0;
    p.detectors.dark_rate_cps = 0.0;
    p.source = SourceParams {
        mu_signal: 20.0,
        nu_decoy: 5.0,
        ..SourceParams::default()
    };
    let n = 100_000u64;
    let t = simulate(&p, n, 11).unwrap();
    assert_eq!(t.signal.errors, 0);
    assert_eq!(t.decoy.errors, 0);
    let sifted = (t.signal.sifted + t.decoy.sifted) as f64;
    let sent = (t.signal.sent + t.decoy.sent) as f64;
    let tolerance = 3.0 * binom_sd(sent, 0.5);
    assert!(
        (sifted - 0.5 * sent).abs() < tolerance,
        "sifted {sifted} of {sent}"
    );
    // with mu = 20 every signal pulse clicks
    assert_eq!(t.signal.clicked, t.signal.sent);
}

#[test]
fn vacuum_only_source_clicks_at_the_dark_rate() {
    let mut p = LinkParams::defaults_for(2, 20.0).unwrap();
    p.source.p_signal = 0.0;
    p.source.p_decoy = 0.0;
    p.source.p_vacuum = 1.0;
    let n = 4_000_000u64;
    let t = simulate(&p, n, 5).unwrap();
    let y0 = p.dark_prob().unwrap();
    let expected_sifted = n as f64 * y0 / 2.0;
    let tolerance = 3.0 * binom_sd(n as f64, y0 / 2.0);
    assert!(
        ((t.vacuum.sifted as f64) - expected_sifted).abs() < tolerance,
        "vacuum sifted {} vs expected {expected_sifted:.1}",
        t.vacuum.sifted
    );
    // dark clicks land on a uniformly random detector: half the sifted
    // bits disagree
    let err_tol = 3.0 * binom_sd(t.vacuum.sifted as f64, 0.5);
    assert!((t.vacuum.errors as f64 - t.vacuum.sifted as f64 / 2.0).abs() < err_tol);
}

#[test]
fn tallies_track_analytic_observables_at_reference_defaults() {
    let mut p = LinkParams::defaults_for(4, 20.0).unwrap();
    p.e_misalign = 0.0035;
    let n = 2_000_000u64;
    let t = simulate(&p, n, 99).unwrap();
    let obs = tallies_to_observables(&t).unwrap();
    let reference = predict_observables(&p).unwrap();

    let sd_q = 2.0 * binom_sd(t.signal.sent as f64, reference.q_mu / 2.0) / t.signal.sent as f64;
    assert!(
        (obs.q_mu - reference.q_mu).abs() < 4.0 * sd_q,
        "Q_mu {} vs {}",
        obs.q_mu,
        reference.q_mu
    );
    let sd_e = binom_sd(t.signal.sifted as f64, reference.e_mu) / t.signal.sifted as f64;
    assert!(
        (obs.e_mu - reference.e_mu).abs() < 4.0 * sd_e,
        "E_mu {} vs {}",
        obs.e_mu,
        reference.e_mu
    );

    // sifting keeps half of the clicked signal pulses in expectation
    let half_clicked = t.signal.clicked as f64 / 2.0;
    let sd_sift = binom_sd(t.signal.clicked as f64, 0.5);
    assert!(
        (t.signal.sifted as f64 - half_clicked).abs() < 3.0 * sd_sift,
        "sifted {} of {} clicked",
        t.signal.sifted,
        t.signal.clicked
    );
}

#[test]
fn double_clicks_stay_negligible_at_reference_parameters() {
    let mut p = LinkParams::defaults_for(1, 20.0).unwrap();
    p.e_misalign = 0.005;
    let n = 2_000_000u64;
    let t = simulate(&p, n, 3).unwrap();
    assert!(t.total_clicked() > 0);
    let ratio = t.double_clicks as f64 / t.total_clicked() as f64;
    assert!(
        ratio < 0.01,
        "double clicks are {:.3}% of clicks",
        100.0 * ratio
    );
}

#[test]
fn runs_are_deterministic_and_seed_sensitive() {
    let p = LinkParams::defaults_for(3, 20.0).unwrap();
    let a = simulate(&p, 500_000, 77).unwrap();
    let b = simulate(&p, 500_000, 77).unwrap();
    assert_eq!(a, b, "same seed must reproduce identical tallies");
    let c = simulate(&p, 500_000, 78).unwrap();
    assert_ne!(a, c);
    assert!(RNG_ALGORITHM.contains("ChaCha8"));
}

#[test]
fn crosstalk_mc_tracks_the_analytic_background_model() {
    // The analytic model charges every interferer the worst-case extinction
    // floor; the chip matrices route some interferers through two switches,
    // so the MC sits at or slightly below it, within shot noise.
    let mut params = LinkParams::defaults_for(4, 20.0).unwrap();
    params.e_misalign = 0.0035;
    let scenario = CrosstalkScenario::new(4, vec![1, 2, 3, 4]).unwrap();
    let analytic = crosstalk_run(&scenario, &params, 30.0, DEFAULT_F_EC, DEFAULT_Q_SIFT).unwrap();

    let n = 4_000_000u64;
    let mut qbers = Vec::new();
    let mut rates = Vec::new();
    for seed in 40..48u64 {
        let mc =
            crosstalk_run_mc(&scenario, &params, n, seed, DEFAULT_F_EC, DEFAULT_Q_SIFT).unwrap();
        qbers.push(mc.qber);
        rates.push(mc.r_per_pulse);
    }
    let (q_mean, q_std) = mean_std(&qbers);
    let (r_mean, r_std) = mean_std(&rates);
    let q_se = q_std / (qbers.len() as f64).sqrt();
    let r_se = r_std / (rates.len() as f64).sqrt();
    assert!(
        (q_mean - analytic.qber).abs() < 4.0 * q_se,
        "crosstalk QBER: MC {q_mean:.5e} vs analytic {:.5e} (SE {q_se:.2e})",
        analytic.qber
    );
    assert!(
        (r_mean - analytic.r_per_pulse).abs() < 5.0 * r_se,
        "crosstalk rate: MC {r_mean:.5e} vs analytic {:.5e} (SE {r_se:.2e})",
        analytic.r_per_pulse
    );
}
