//! Post-selected joint detection between Alice's and Bob's detectors.
//!
//! A coincidence keeps only the short-short and long-long path products, whose
//! interference depends on `φ + ψ + θ₀` alone. A detection delay `τ` between
//! the two clicks adds a beat phase `4π·δf·τ` (the two photons differ in
//! frequency by `2δf`); averaging it over the detuning envelope gives the
//! complex coherence factor `χ(τ) = E[e^{i4πδfτ}]`, whose modulus is the
//! fringe visibility.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand_distr::Distribution;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Detector, ExperimentConfig, Mode, PhaseSettings, Side};
use crate::rng::{blocks, substream, Domain};
use crate::source::DetuningDistribution;
use crate::umzi::local_intensity;

#[derive(Debug, Error, PartialEq)]
pub enum CorrelatorError {
    #[error("not a cross-UMZI coincidence: {0} and {1}")]
    SameSide(Detector, Detector),
    #[error("detuning must be non-negative, got {0}")]
    NegativeDetuning(f64),
}

/// A detector pair (Alice, Bob) with its phase settings and coincidence delay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointSetting {
    pub det_a: Detector,
    pub det_b: Detector,
    pub settings: PhaseSettings,
    /// Delay between the two detections, s.
    pub tau_ab: f64,
}

impl JointSetting {
    pub fn new(
        det_a: Detector,
        det_b: Detector,
        settings: PhaseSettings,
        tau_ab: f64,
    ) -> Result<Self, CorrelatorError> {
        if det_a.side() != Side::A || det_b.side() != Side::B {
            return Err(CorrelatorError::SameSide(det_a, det_b));
        }
        Ok(Self { det_a, det_b, settings, tau_ab })
    }

    /// The four cross pairs (D1,D3), (D1,D4), (D2,D3), (D2,D4).
    pub fn cross_pairs() -> [(Detector, Detector); 4] {
        use Detector::*;
        [(D1, D3), (D1, D4), (D2, D3), (D2, D4)]
    }

    fn sign_product(&self) -> f64 {
        self.det_a.l_sign() * self.det_b.l_sign()
    }

    fn check(&self) -> Result<(), CorrelatorError> {
        Self::new(self.det_a, self.det_b, self.settings, self.tau_ab).map(|_| ())
    }
}

/// Beat phase between the two photons of a pair after delay `tau`.
pub fn beat_phase(delta_f: f64, tau: f64) -> f64 {
    4.0 * PI * delta_f * tau
}

/// Probability of the detector pair given a post-selected coincident pair.
///
/// Sums to one over the four cross pairs.
pub fn joint_coincident_prob(js: &JointSetting, delta_f: f64, mode: Mode) -> Result<f64, CorrelatorError> {
    js.check()?;
    if delta_f.is_nan() || delta_f < 0.0 {
        return Err(CorrelatorError::NegativeDetuning(delta_f));
    }
    Ok(match mode {
        Mode::Pbs => 0.25,
        Mode::Bs => {
            let phase = js.settings.joint_phase() + beat_phase(delta_f, js.tau_ab);
            0.25 * (1.0 + js.sign_product() * phase.cos())
        }
    })
}

/// Half-width of the quadrature domain in units of `sigma_f`.
const QUAD_HALF_WIDTH: f64 = 6.0;
const QUAD_MIN_INTERVALS: usize = 4096;
const QUAD_INTERVALS_PER_CYCLE: f64 = 256.0;
const QUAD_MAX_INTERVALS: usize = 1 << 24;

/// Coherence factor `χ(τ) = E[e^{i4πδfτ}]` over the truncated Gaussian
/// detuning envelope.
///
/// Trapezoid rule over `f_center ± 6σ` (clipped at zero) with the first
/// Euler–Maclaurin end correction, normalised by the same rule applied to the
/// density. `χ(0) = 1` exactly.
pub fn coherence_factor(config: &ExperimentConfig, tau: f64) -> Complex64 {
    if tau == 0.0 {
        return Complex64::new(1.0, 0.0);
    }
    let mu = config.f_center;
    let sigma = config.sigma_f;
    let omega = 4.0 * PI * tau;
    let lo = (mu - QUAD_HALF_WIDTH * sigma).max(0.0);
    let hi = mu + QUAD_HALF_WIDTH * sigma;
    let cycles = omega.abs() * (hi - lo) / (2.0 * PI);
    let n = ((cycles * QUAD_INTERVALS_PER_CYCLE).ceil() as usize).clamp(QUAD_MIN_INTERVALS, QUAD_MAX_INTERVALS);
    let h = (hi - lo) / n as f64;

    let density = |x: f64| (-0.5 * ((x - mu) / sigma).powi(2)).exp();
    let point = |x: f64| {
        let p = density(x);
        (p, Complex64::from_polar(p, omega * x))
    };

    let (mut mass, mut sum) = (0.0, Complex64::new(0.0, 0.0));
    for i in 1..n {
        let (p, f) = point(lo + i as f64 * h);
        mass += p;
        sum += f;
    }
    let (p_lo, f_lo) = point(lo);
    let (p_hi, f_hi) = point(hi);
    mass += 0.5 * (p_lo + p_hi);
    sum += 0.5 * (f_lo + f_hi);

    // Derivatives for the h²/12 end correction.
    let slope = |x: f64| -(x - mu) / (sigma * sigma);
    let dp = |x: f64, p: f64| p * slope(x);
    let df = |x: f64, f: Complex64| f * Complex64::new(slope(x), omega);
    let c = h / 12.0;
    mass -= c * (dp(hi, p_hi) - dp(lo, p_lo));
    sum -= c * (df(hi, f_hi) - df(lo, f_lo));

    sum / mass
}

/// Fringe visibility after coincidence delay `tau`: `|χ(τ)|`.
pub fn visibility(config: &ExperimentConfig, tau: f64) -> f64 {
    match config.mode {
        Mode::Pbs => 0.0,
        Mode::Bs => coherence_factor(config, tau).norm(),
    }
}

/// Ensemble-mean post-selected correlation in units of `⟨I₀²⟩`:
/// `(1/8)(1 + l_a·l_b·Re[e^{i(φ+ψ+θ₀)} χ(τ)])`.
///
/// At `τ = 0` this is `(1/8)(1 ± cos(φ+ψ+θ₀))`.
pub fn mean_correlation(js: &JointSetting, config: &ExperimentConfig) -> Result<f64, CorrelatorError> {
    js.check()?;
    Ok(match config.mode {
        Mode::Pbs => 0.125,
        Mode::Bs => {
            let chi = coherence_factor(config, js.tau_ab);
            let fringe = (Complex64::from_polar(1.0, js.settings.joint_phase()) * chi).re;
            0.125 * (1.0 + js.sign_product() * fringe)
        }
    })
}

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub n: u64,
}

impl Estimate {
    fn exact(value: f64, n: u64) -> Self {
        Self { value, stderr: 0.0, n }
    }

    /// `|value - reference|` in units of the standard error. With zero
    /// standard error, agreement to rounding gives 0 and anything else infinity.
    pub fn z_score(&self, reference: f64) -> f64 {
        let diff = (self.value - reference).abs();
        if self.stderr > 0.0 {
            diff / self.stderr
        } else if diff <= 1e-12 * reference.abs().max(1.0) {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Mean and standard error of `sample(δf)` over `n` detuning draws.
fn mc_estimate<F>(config: &ExperimentConfig, domain: Domain, n: u64, sample: F) -> Estimate
where
    F: Fn(f64) -> f64 + Sync,
{
    let detuning = DetuningDistribution::from_config(config);
    let sums: Vec<(f64, f64)> = blocks(n)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(block, len)| {
            let mut rng = substream(config.seed, domain, block);
            let mut s = (0.0, 0.0);
            for _ in 0..len {
                let v = sample(detuning.sample(&mut rng));
                s.0 += v;
                s.1 += v * v;
            }
            s
        })
        .collect();
    let (sum, sum_sq) = sums.iter().fold((0.0, 0.0), |acc, s| (acc.0 + s.0, acc.1 + s.1));
    let nf = n as f64;
    let mean = sum / nf;
    let var = if n > 1 { ((sum_sq / nf - mean * mean) * nf / (nf - 1.0)).max(0.0) } else { 0.0 };
    Estimate { value: mean, stderr: (var / nf).sqrt(), n }
}

/// Monte Carlo estimate of [`mean_correlation`]: the average of
/// [`joint_coincident_prob`] times the coincident-outcome fraction 1/2.
pub fn mc_mean_correlation(
    js: &JointSetting,
    config: &ExperimentConfig,
    n_events: u64,
) -> Result<Estimate, CorrelatorError> {
    js.check()?;
    if config.mode == Mode::Pbs {
        return Ok(Estimate::exact(0.125, n_events));
    }
    let est = mc_estimate(config, Domain::JointMonteCarlo, n_events, |df| {
        // δf ≥ 0 by construction of the sampler.
        0.5 * joint_coincident_prob(js, df, config.mode).expect("checked setting")
    });
    Ok(est)
}

/// Product of the two local intensities averaged over shared pair detunings,
/// with no post-selection. Converges to `(1/4)(1 + ½·l_a·l_b·cos(φ+ψ+θ₀))`
/// deep in the dephasing regime.
pub fn baseline_product_correlation(
    js: &JointSetting,
    config: &ExperimentConfig,
    n_samples: u64,
) -> Result<Estimate, CorrelatorError> {
    js.check()?;
    if config.mode == Mode::Pbs {
        return Ok(Estimate::exact(0.25, n_samples));
    }
    let est = mc_estimate(config, Domain::BaselineMonteCarlo, n_samples, |df| {
        local_intensity(js.det_a, df, &js.settings, config) * local_intensity(js.det_b, -df, &js.settings, config)
    });
    Ok(est)
}

/// JSON record of one correlation evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRecord {
    pub setting: JointSetting,
    pub tau_ab: f64,
    pub value: f64,
    pub stderr: f64,
    pub n: u64,
}

impl CorrelationRecord {
    pub fn analytic(setting: JointSetting, value: f64) -> Self {
        Self { setting, tau_ab: setting.tau_ab, value, stderr: 0.0, n: 0 }
    }

    pub fn from_estimate(setting: JointSetting, est: Estimate) -> Self {
        Self { setting, tau_ab: setting.tau_ab, value: est.value, stderr: est.stderr, n: est.n }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::TAU;
    use Detector::*;

    fn js(a: Detector, b: Detector, phi: f64, psi: f64, tau: f64) -> JointSetting {
        JointSetting::new(a, b, PhaseSettings::new(phi, psi), tau).unwrap()
    }

    #[test]
    fn same_side_rejected() {
        let err = JointSetting::new(D1, D2, PhaseSettings::default(), 0.0).unwrap_err();
        assert!(err.to_string().contains("not a cross-UMZI coincidence"));
        assert!(JointSetting::new(D3, D1, PhaseSettings::default(), 0.0).is_err());
        let bad = JointSetting { det_a: D3, det_b: D4, settings: PhaseSettings::default(), tau_ab: 0.0 };
        assert!(joint_coincident_prob(&bad, 0.0, Mode::Bs).is_err());
        assert!(mean_correlation(&bad, &ExperimentConfig::default()).is_err());
    }

    #[test]
    fn coincident_prob_extremes() {
        assert_abs_diff_eq!(joint_coincident_prob(&js(D1, D3, 0.0, 0.0, 0.0), 1e9, Mode::Bs).unwrap(), 0.5);
        assert_abs_diff_eq!(joint_coincident_prob(&js(D1, D4, 0.0, 0.0, 0.0), 1e9, Mode::Bs).unwrap(), 0.0);
        assert_eq!(joint_coincident_prob(&js(D1, D4, 0.3, 0.0, 0.0), 1e9, Mode::Pbs).unwrap(), 0.25);
        assert!(joint_coincident_prob(&js(D1, D3, 0.0, 0.0, 0.0), -1.0, Mode::Bs).is_err());
    }

    #[test]
    fn mean_correlation_extremes() {
        let cfg = ExperimentConfig::default();
        assert_eq!(mean_correlation(&js(D1, D3, 0.0, 0.0, 0.0), &cfg).unwrap(), 0.25);
        assert_abs_diff_eq!(mean_correlation(&js(D1, D3, std::f64::consts::PI, 0.0, 0.0), &cfg).unwrap(), 0.0);
        let pbs = ExperimentConfig { mode: Mode::Pbs, ..cfg };
        assert_eq!(mean_correlation(&js(D1, D3, 0.0, 0.0, 0.0), &pbs).unwrap(), 0.125);
    }

    #[test]
    fn half_normal_delay_example() {
        // Frozen from the Simpson oracle: (1 + Re χ)/8 with Re χ = e^{-1}.
        let cfg = ExperimentConfig { f_center: 0.0, sigma_f: 1e9, ..Default::default() };
        let tau = 2f64.sqrt() / (4.0 * PI * cfg.sigma_f);
        let v = mean_correlation(&js(D1, D3, 0.0, 0.0, tau), &cfg).unwrap();
        assert_abs_diff_eq!(v, 0.125 * (1.0 + (-1.0f64).exp()), epsilon = 1e-7);
        assert_abs_diff_eq!(v, 0.17098, epsilon = 1e-5);
    }

    #[test]
    fn visibility_limits() {
        for f_center in [0.0, 4e9] {
            let cfg = ExperimentConfig { f_center, ..Default::default() };
            assert_eq!(visibility(&cfg, 0.0), 1.0);
            assert!(visibility(&cfg, 2.0 / cfg.sigma_f) < 0.05);
            let grid: Vec<f64> = (0..=60).map(|i| visibility(&cfg, i as f64 * 0.05 / cfg.sigma_f)).collect();
            assert!(grid.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{grid:?}");
        }
    }

    #[test]
    fn baseline_converges_to_half_visibility() {
        let cfg = ExperimentConfig::default();
        let top = baseline_product_correlation(&js(D1, D3, 0.0, 0.0, 0.0), &cfg, 2_000_000).unwrap();
        let bottom =
            baseline_product_correlation(&js(D1, D3, std::f64::consts::PI, 0.0, 0.0), &cfg, 2_000_000).unwrap();
        assert!((top.value - 0.375).abs() < 5.0 * top.stderr + 1e-4, "{top:?}");
        assert!((bottom.value - 0.125).abs() < 5.0 * bottom.stderr + 1e-4, "{bottom:?}");
        let pbs = ExperimentConfig { mode: Mode::Pbs, ..cfg };
        assert_eq!(baseline_product_correlation(&js(D1, D3, 0.0, 0.0, 0.0), &pbs, 10).unwrap().value, 0.25);
    }

    #[test]
    fn degenerate_envelope_is_exact() {
        let cfg = ExperimentConfig { f_center: 0.0, sigma_f: 1e-9, ..Default::default() };
        for tau in [0.0, 3e-9, 1e-6] {
            let s = js(D1, D3, 0.7, 0.2, tau);
            let mc = mc_mean_correlation(&s, &cfg, 1000).unwrap();
            let exact = mean_correlation(&s, &cfg).unwrap();
            assert_abs_diff_eq!(mc.value, exact, epsilon = 1e-9);
        }
    }

    #[test]
    fn mc_pbs_is_flat() {
        let cfg = ExperimentConfig { mode: Mode::Pbs, ..Default::default() };
        for k in 0..12 {
            let est = mc_mean_correlation(&js(D1, D3, k as f64 * TAU / 12.0, 0.0, 0.0), &cfg, 1000).unwrap();
            assert_eq!(est.value, 0.125);
        }
    }

    proptest! {
        #[test]
        fn cross_pairs_sum_to_one(phi in -10.0f64..10.0, psi in -10.0f64..10.0, df in 0.0f64..5e9, tau in 0.0f64..1e-8) {
            let total: f64 = JointSetting::cross_pairs()
                .iter()
                .map(|&(a, b)| joint_coincident_prob(&js(a, b, phi, psi, tau), df, Mode::Bs).unwrap())
                .sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }

        #[test]
        fn complementary_pairs(phi in -10.0f64..10.0, psi in -10.0f64..10.0, tau in 0.0f64..3e-9) {
            let cfg = ExperimentConfig { f_center: 0.0, ..Default::default() };
            let r13 = mean_correlation(&js(D1, D3, phi, psi, tau), &cfg).unwrap();
            let r14 = mean_correlation(&js(D1, D4, phi, psi, tau), &cfg).unwrap();
            prop_assert!((r13 + r14 - 0.25).abs() < 1e-15);
        }

        #[test]
        fn joint_phase_only(phi in -10.0f64..10.0, psi in -10.0f64..10.0, a in -10.0f64..10.0) {
            let cfg = ExperimentConfig::default();
            let r = mean_correlation(&js(D2, D4, phi, psi, 0.0), &cfg).unwrap();
            let shifted = mean_correlation(&js(D2, D4, phi + a, psi - a, 0.0), &cfg).unwrap();
            prop_assert!((r - shifted).abs() < 1e-12);
        }
    }
}
