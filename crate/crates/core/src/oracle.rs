//! Independent reference computations.
//!
//! Nothing here calls the production formulas in [`crate::umzi`] or
//! [`crate::correlator`] to get its own numbers. Averages use composite
//! Simpson quadrature on a fixed fine grid, and intensities come from
//! explicit complex field amplitudes carrying an arbitrary global phase η.
//! [`run_oracles`] compares these numbers with the production code and with
//! closed forms.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::correlator::{coherence_factor, mean_correlation, JointSetting};
use crate::model::{Detector, ExperimentConfig, Mode, PhaseSettings, SPEED_OF_LIGHT};

/// Composite Simpson rule on `[a, b]` with `n` (rounded up to even) intervals.
pub fn simpson<T, F>(f: F, a: f64, b: f64, n: usize) -> T
where
    T: std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T> + Copy,
    F: Fn(f64) -> T,
{
    let n = (n.max(2) + 1) & !1;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc = acc + f(a + i as f64 * h) * w;
    }
    acc * (h / 3.0)
}

/// Averages `g(δf)` over the non-negative truncated Gaussian envelope.
pub struct EnvelopeAverage {
    mu: f64,
    sigma: f64,
    lo: f64,
    hi: f64,
    n: usize,
    mass: f64,
}

impl EnvelopeAverage {
    /// `points_per_sigma` Simpson intervals per standard deviation over ±10σ.
    pub fn new(config: &ExperimentConfig, points_per_sigma: usize) -> Self {
        let (mu, sigma) = (config.f_center, config.sigma_f);
        let lo = (mu - 10.0 * sigma).max(0.0);
        let hi = mu + 10.0 * sigma;
        let n = (((hi - lo) / sigma) * points_per_sigma as f64).ceil() as usize;
        let mut avg = Self { mu, sigma, lo, hi, n, mass: 1.0 };
        avg.mass = simpson(|x| avg.density(x), lo, hi, n);
        avg
    }

    fn density(&self, x: f64) -> f64 {
        (-0.5 * ((x - self.mu) / self.sigma).powi(2)).exp()
    }

    pub fn mean<T, F>(&self, g: F) -> T
    where
        T: std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T> + Copy,
        F: Fn(f64) -> T,
    {
        simpson(|x| g(x) * self.density(x), self.lo, self.hi, self.n) * (1.0 / self.mass)
    }
}

/// Field amplitude at detector `det` for one photon with signed detuning
/// `df`, written from the beam-splitter bookkeeping: short arm `1/2`, long
/// arm `l·(1/2)·e^{iθ}`, both multiplied by the global phase `e^{iη}`.
pub fn field_at(det: Detector, df: f64, settings: &PhaseSettings, delta_l: f64, eta: f64) -> [Complex64; 2] {
    let local = match det.side() {
        crate::model::Side::A => settings.phi,
        crate::model::Side::B => settings.psi,
    };
    let theta = TAU * df * delta_l / SPEED_OF_LIGHT + local + 0.5 * settings.theta0;
    let global = Complex64::from_polar(1.0, eta);
    [global * 0.5, global * Complex64::from_polar(0.5 * det.l_sign(), theta)]
}

/// Intensity seen by a slow detector: the two arms add coherently in BS
/// mode and incoherently in PBS mode.
pub fn field_intensity(fields: [Complex64; 2], mode: Mode) -> f64 {
    match mode {
        Mode::Bs => (fields[0] + fields[1]).norm_sqr(),
        Mode::Pbs => fields[0].norm_sqr() + fields[1].norm_sqr(),
    }
}

/// `⟨I_a·I_b⟩` over the envelope, with Bob's photon at `-δf`.
pub fn baseline_average(
    det_a: Detector,
    det_b: Detector,
    settings: &PhaseSettings,
    config: &ExperimentConfig,
    eta: f64,
) -> f64 {
    let avg = EnvelopeAverage::new(config, oracle_density(config));
    avg.mean(|df| {
        let ia = field_intensity(field_at(det_a, df, settings, config.delta_l, eta), config.mode);
        let ib = field_intensity(field_at(det_b, -df, settings, config.delta_l, 2.0 * eta + 1.0), config.mode);
        ia * ib
    })
}

/// `⟨I_det⟩` over the envelope.
pub fn local_average(det: Detector, settings: &PhaseSettings, config: &ExperimentConfig) -> f64 {
    let avg = EnvelopeAverage::new(config, oracle_density(config));
    let sign = match det.side() {
        crate::model::Side::A => 1.0,
        crate::model::Side::B => -1.0,
    };
    avg.mean(|df| field_intensity(field_at(det, sign * df, settings, config.delta_l, 0.0), config.mode))
}

/// `E[e^{i4πδfτ}]` by Simpson quadrature.
pub fn characteristic(config: &ExperimentConfig, tau: f64) -> Complex64 {
    let cycles_per_sigma = 2.0 * tau * config.sigma_f;
    let per_sigma = ((cycles_per_sigma * 64.0).ceil() as usize).max(256);
    EnvelopeAverage::new(config, per_sigma).mean(|f| Complex64::from_polar(1.0, 4.0 * PI * f * tau))
}

fn oracle_density(config: &ExperimentConfig) -> usize {
    // Enough Simpson intervals per σ to resolve the arm-imbalance phase.
    let cycles_per_sigma = config.sigma_f * config.delta_l / SPEED_OF_LIGHT;
    ((cycles_per_sigma * 64.0).ceil() as usize).max(256)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathEnumeration {
    /// Probability of each relative-delay class, summed over detector pairs:
    /// SS and LL at zero delay, Alice short with Bob long, and the reverse.
    pub central: f64,
    pub alice_early: f64,
    pub alice_late: f64,
    /// Central-class probability per cross detector pair, normalised by the
    /// central total.
    pub central_pairs: Vec<(Detector, Detector, f64)>,
    pub n_terms: usize,
}

/// Enumerates all 16 (path, detector) products for one pair at detuning `df`.
///
/// Terms in the same delay class and detector pair are indistinguishable and
/// add as amplitudes. Different classes add as probabilities.
pub fn enumerate_paths(df: f64, settings: &PhaseSettings, delta_l: f64) -> PathEnumeration {
    let mut n_terms = 0;
    let (mut central, mut early, mut late) = (0.0, 0.0, 0.0);
    let mut central_pairs = Vec::new();
    for det_a in Detector::of_side(crate::model::Side::A) {
        for det_b in Detector::of_side(crate::model::Side::B) {
            let fa = field_at(det_a, df, settings, delta_l, 0.0);
            let fb = field_at(det_b, -df, settings, delta_l, 0.0);
            let mut amp = [Complex64::new(0.0, 0.0); 3];
            for (pa, a) in fa.iter().enumerate() {
                for (pb, b) in fb.iter().enumerate() {
                    n_terms += 1;
                    let class = match (pa, pb) {
                        (0, 0) | (1, 1) => 0,
                        (0, 1) => 1,
                        _ => 2,
                    };
                    amp[class] += a * b;
                }
            }
            let probs = amp.map(|z| z.norm_sqr());
            central += probs[0];
            early += probs[1];
            late += probs[2];
            central_pairs.push((det_a, det_b, probs[0]));
        }
    }
    for entry in &mut central_pairs {
        entry.2 /= central;
    }
    PathEnumeration { central, alice_early: early, alice_late: late, central_pairs, n_terms }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub name: String,
    pub computed: f64,
    pub reference: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub checks: Vec<OracleCheck>,
    pub pass: bool,
}

impl OracleReport {
    pub fn get(&self, name: &str) -> Option<&OracleCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn check(name: impl Into<String>, computed: f64, reference: f64, tolerance: f64) -> OracleCheck {
    let pass = (computed - reference).abs() <= tolerance;
    OracleCheck { name: name.into(), computed, reference, tolerance, pass }
}

/// Runs every oracle against `config` and a half-normal (`f_center = 0`) variant.
pub fn run_oracles(config: &ExperimentConfig) -> OracleReport {
    let mut checks = Vec::new();
    let bs = ExperimentConfig { mode: Mode::Bs, theta0: 0.0, ..config.clone() };
    let half = ExperimentConfig { f_center: 0.0, ..bs.clone() };
    let sigma = bs.sigma_f;

    // Detuning moments.
    let avg = EnvelopeAverage::new(&half, 512);
    checks.push(check("half_normal_norm", avg.mean(|_| 1.0), 1.0, 1e-12));
    checks.push(check("half_normal_mean_over_sigma", avg.mean(|f| f) / sigma, (2.0 / PI).sqrt(), 1e-9));
    checks.push(check("half_normal_second_moment_over_sigma2", avg.mean(|f| f * f) / (sigma * sigma), 1.0, 1e-9));

    // Coherence factor and visibility curve.
    for (label, cfg) in [("default", &bs), ("half_normal", &half)] {
        for k in [0.0, 0.25, 0.5, 1.0, 2.0] {
            let tau = k / sigma;
            let chi = characteristic(cfg, tau);
            let prod = coherence_factor(cfg, tau);
            checks.push(check(format!("visibility_{label}_tau_{k}_over_sigma"), chi.norm(), prod.norm(), 1e-6));
            checks.push(check(format!("chi_re_{label}_tau_{k}_over_sigma"), chi.re, prod.re, 1e-6));
            checks.push(check(format!("chi_im_{label}_tau_{k}_over_sigma"), chi.im, prod.im, 1e-6));
        }
    }
    let tau_e = 2f64.sqrt() / (4.0 * PI * sigma);
    let c13 = 0.125 * (1.0 + characteristic(&half, tau_e).re);
    let js = JointSetting::new(Detector::D1, Detector::D3, PhaseSettings::new(0.0, 0.0), tau_e).expect("cross pair");
    checks.push(check(
        "half_normal_r13_at_sqrt2_over_4pi_sigma",
        c13,
        mean_correlation(&js, &half).expect("valid"),
        1e-7,
    ));

    // Baseline averages from raw fields, with and without a global phase.
    for (joint, reference) in [(0.0, 0.375), (PI, 0.125), (PI / 2.0, 0.25)] {
        let s = PhaseSettings::new(joint / 2.0, joint / 2.0);
        let value = baseline_average(Detector::D1, Detector::D3, &s, &bs, 0.0);
        checks.push(check(format!("baseline_r13_joint_{joint:.4}"), value, reference, 1e-4));
        let shifted = baseline_average(Detector::D1, Detector::D3, &s, &bs, 1.234);
        checks.push(check(format!("baseline_eta_invariance_joint_{joint:.4}"), shifted, value, 1e-12));
    }
    let s0 = PhaseSettings::new(0.0, 0.0);
    let hi = baseline_average(Detector::D1, Detector::D3, &s0, &bs, 0.0);
    let lo = baseline_average(Detector::D1, Detector::D3, &PhaseSettings::new(PI / 2.0, PI / 2.0), &bs, 0.0);
    // hi = (1 + c)/4 and lo = (1 - c)/4 for fringe coefficient c.
    checks.push(check("baseline_fringe_coefficient", (hi - lo) / (hi + lo), 0.5, 1e-3));
    let pbs = ExperimentConfig { mode: Mode::Pbs, ..bs.clone() };
    checks.push(check("baseline_r13_pbs", baseline_average(Detector::D1, Detector::D3, &s0, &pbs, 0.0), 0.25, 1e-12));

    // Local means.
    for det in Detector::ALL {
        for phase in [0.0, PI / 3.0, PI] {
            let s = PhaseSettings::new(phase, phase);
            checks.push(check(format!("local_mean_{det}_phase_{phase:.4}"), local_average(det, &s, &bs), 0.5, 1e-4));
        }
    }

    // Path-product enumeration.
    for (df, joint) in [(0.0, 0.0), (1.7e9, 0.9), (3.3e9, 2.5)] {
        let s = PhaseSettings::new(joint, 0.0);
        let e = enumerate_paths(df, &s, bs.delta_l);
        checks.push(check(format!("paths_terms_df_{df:e}"), e.n_terms as f64, 16.0, 0.0));
        checks.push(check(format!("paths_central_df_{df:e}"), e.central, 0.5, 1e-12));
        checks.push(check(format!("paths_alice_early_df_{df:e}"), e.alice_early, 0.25, 1e-12));
        checks.push(check(format!("paths_alice_late_df_{df:e}"), e.alice_late, 0.25, 1e-12));
        for (a, b, p) in &e.central_pairs {
            let expected = 0.25 * (1.0 + a.l_sign() * b.l_sign() * joint.cos());
            checks.push(check(format!("paths_joint_prob_{a}{b}_df_{df:e}"), *p, expected, 1e-12));
        }
    }

    let pass = checks.iter().all(|c| c.pass);
    OracleReport { checks, pass }
}
