use std::f64::consts::PI;

use franson_core::correlator::{baseline_product_correlation, mc_mean_correlation, mean_correlation, JointSetting};
use franson_core::model::{Detector, ExperimentConfig, PhaseSettings};
use franson_core::oracle::baseline_average;
use franson_core::source::{generate_stream, StreamOptions};
use franson_core::timetag::{
    count_coincidences, peak_areas, select_central_peak, simulate_tags, CoincidenceParams, TimeTag,
};

fn pairs_only(n_pairs: f64) -> ExperimentConfig {
    let cfg = ExperimentConfig { singles_rate: 0.0, ..ExperimentConfig::default() };
    ExperimentConfig { duration: n_pairs / cfg.pair_rate, ..cfg }
}

fn run(cfg: &ExperimentConfig, settings: &PhaseSettings, window: f64) -> franson_core::timetag::CoincidenceResult {
    let stream = generate_stream(cfg, &StreamOptions::default()).unwrap();
    let tags = simulate_tags(cfg, settings, &stream);
    count_coincidences(&tags.a, &tags.b, &CoincidenceParams::new(window, 0.0, cfg.delay())).unwrap()
}

#[test]
fn central_peak_fractions_follow_joint_probability() {
    let cfg = pairs_only(2e5);
    let window = cfg.delay() / 5.0;
    for joint in [0.0, PI / 3.0, PI / 2.0, PI] {
        let settings = PhaseSettings::new(joint, 0.0);
        let result = run(&cfg, &settings, window);
        let central = select_central_peak(&result.matches, window, Some(cfg.delay()));
        assert!(central.warnings.is_empty());
        let total = central.counts.total() as f64;
        assert!((total / 1e5 - 1.0).abs() < 0.02, "central total {total}");
        for (a, b) in JointSetting::cross_pairs() {
            let p = 0.25 * (1.0 + a.l_sign() * b.l_sign() * joint.cos());
            let f = central.counts.fraction(a, b);
            let sigma = (p * (1.0 - p) / total).sqrt().max(1.0 / total);
            assert!((f - p).abs() < 4.0 * sigma, "joint {joint}: {a}{b} fraction {f} vs {p}");
        }
    }
}

#[test]
fn histogram_peaks_at_three_delays() {
    let cfg = pairs_only(2e5);
    let dt = cfg.delay();
    let result = run(&cfg, &PhaseSettings::new(0.3, 0.2), 3.0 * dt);
    let dt_ps = (dt * 1e12).round() as i64;
    let [left, centre, right] = peak_areas(&result.histogram, dt_ps);
    let total = (left + centre + right) as f64;
    assert_eq!(total as u64, result.histogram.total());
    for (area, p) in [(left, 0.25), (centre, 0.5), (right, 0.25)] {
        let sigma = (total * p * (1.0 - p)).sqrt();
        assert!((area as f64 - p * total).abs() < 4.0 * sigma, "area {area} vs {}", p * total);
    }
    let central = select_central_peak(&result.matches, 3.0 * dt, Some(dt));
    assert_eq!(central.warnings.len(), 1);
    assert!(central.warnings[0].starts_with("post-selection loophole"));
}

#[test]
fn monte_carlo_complementarity() {
    let cfg = ExperimentConfig::default();
    let tau = 0.3 / cfg.sigma_f;
    for joint in [0.0, 1.0, 2.0, 3.0] {
        let s = PhaseSettings::new(joint, 0.0);
        let setting = |b| JointSetting::new(Detector::D1, b, s, tau).unwrap();
        let r13 = mc_mean_correlation(&setting(Detector::D3), &cfg, 1_000_000).unwrap();
        let r14 = mc_mean_correlation(&setting(Detector::D4), &cfg, 1_000_000).unwrap();
        // Same seed and domain: the two estimates share draws, so the sum is exact.
        assert!((r13.value + r14.value - 0.25).abs() < 1e-12);
        let exact = mean_correlation(&setting(Detector::D3), &cfg).unwrap();
        assert!(r13.z_score(exact) < 3.0, "joint {joint}: {r13:?} vs {exact}");
    }
}

#[test]
fn baseline_matches_field_oracle() {
    let cfg = ExperimentConfig::default();
    for joint in [0.0, PI / 2.0, PI] {
        let s = PhaseSettings::new(joint, 0.0);
        let js = JointSetting::new(Detector::D1, Detector::D3, s, 0.0).unwrap();
        let est = baseline_product_correlation(&js, &cfg, 1_000_000).unwrap();
        let reference = baseline_average(Detector::D1, Detector::D3, &s, &cfg, 0.0);
        assert!(est.z_score(reference) < 3.0, "joint {joint}: {est:?} vs {reference}");
    }
}

#[test]
fn eta_does_not_change_tags() {
    let cfg = ExperimentConfig { duration: 0.05, ..ExperimentConfig::default() };
    let settings = PhaseSettings::new(0.4, 0.9);
    let tags = |eta_seed| -> (Vec<TimeTag>, Vec<TimeTag>) {
        let stream =
            generate_stream(&cfg, &StreamOptions { eta_seed: Some(eta_seed), ..StreamOptions::default() }).unwrap();
        let t = simulate_tags(&cfg, &settings, &stream);
        (t.a, t.b)
    };
    assert_eq!(tags(1), tags(2));
}
