use franson_core::model::{EventKind, ExperimentConfig};
use franson_core::rng::{substream, Domain};
use franson_core::source::{count_events, events, generate_stream, DetuningDistribution, StreamOptions};
use rand_distr::Distribution;

fn pairs_only(pair_rate: f64, duration: f64) -> ExperimentConfig {
    ExperimentConfig { pair_rate, singles_rate: 0.0, duration, ..ExperimentConfig::default() }
}

#[test]
fn inter_arrival_times_are_exponential() {
    let cfg = pairs_only(1e5, 1.0);
    let stream = generate_stream(&cfg, &StreamOptions::default()).unwrap();
    let times: Vec<f64> = events(&stream).map(|e| e.t_emit).collect();
    let mut gaps: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    gaps.sort_by(f64::total_cmp);
    let n = gaps.len() as f64;
    let d = gaps
        .iter()
        .enumerate()
        .map(|(i, &g)| {
            let cdf = 1.0 - (-cfg.pair_rate * g).exp();
            (cdf - i as f64 / n).abs().max(((i + 1) as f64 / n - cdf).abs())
        })
        .fold(0.0, f64::max);
    // Kolmogorov–Smirnov critical value at the 0.1% level.
    assert!(d < 1.949 / n.sqrt(), "KS statistic {d} for {n} gaps");
}

#[test]
fn pair_count_is_poisson() {
    let cfg = pairs_only(1e4, 10.0);
    let counts = count_events(&generate_stream(&cfg, &StreamOptions::default()).unwrap());
    let expected = 1e5;
    assert!((counts.pairs as f64 - expected).abs() <= 3.0 * expected.sqrt(), "{counts:?}");
    assert_eq!(counts.singles_a + counts.singles_b, 0);
}

#[test]
fn singles_rates_per_side() {
    let cfg = ExperimentConfig { pair_rate: 0.0, singles_rate: 2e5, duration: 0.5, ..ExperimentConfig::default() };
    let stream = generate_stream(&cfg, &StreamOptions::default()).unwrap();
    let counts = count_events(&stream);
    for n in [counts.singles_a, counts.singles_b] {
        assert!((n as f64 - 1e5).abs() <= 4.0 * 1e5f64.sqrt(), "{counts:?}");
    }
    assert!(events(&stream).all(|e| e.kind != EventKind::Pair));
}

#[test]
fn half_normal_mean() {
    let cfg = ExperimentConfig { f_center: 0.0, sigma_f: 1e9, ..ExperimentConfig::default() };
    let dist = DetuningDistribution::from_config(&cfg);
    let mut rng = substream(7, Domain::LocalMean, 0);
    let n = 1_000_000;
    let mut sum = 0.0;
    for _ in 0..n {
        let x = dist.sample(&mut rng);
        assert!(x >= 0.0);
        sum += x;
    }
    let mean = sum / n as f64;
    let expected = 1e9 * (2.0 / std::f64::consts::PI).sqrt();
    assert!((mean / expected - 1.0).abs() < 3e-3, "mean {mean}");
}

#[test]
fn events_sorted_within_chunks() {
    let cfg = ExperimentConfig { duration: 0.02, ..ExperimentConfig::default() };
    let opts = StreamOptions { chunk_len: 3.3e-3, eta_seed: None };
    for chunk in generate_stream(&cfg, &opts).unwrap() {
        assert!(chunk.events.windows(2).all(|w| w[0].t_emit <= w[1].t_emit));
        assert!(chunk.events.iter().all(|e| e.t_emit >= chunk.t_start && e.t_emit < chunk.t_end));
    }
}
