//! Single-photon field model of one unbalanced Mach-Zehnder interferometer.
//!
//! Each output port sees a short-arm term of amplitude 1/2 and a long-arm term
//! `l_sign · 1/2 · e^{iθ_L}`, with `θ_L = ξ(δf) + local phase`. Global factors
//! (the `i` on D2/D4, `e^{iη}`, plane-wave propagation) are dropped; they never
//! survive in an intensity.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::Distribution;
use rayon::prelude::*;
use serde::Serialize;

use crate::model::{xi_phase, Detector, ExperimentConfig, Mode, PhaseSettings, Side};
use crate::rng::{blocks, substream, Domain};
use crate::source::DetuningDistribution;

/// Path amplitudes reaching one detector, in units of the single-photon field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ArmAmplitudes {
    pub short: Complex64,
    pub long: Complex64,
}

impl ArmAmplitudes {
    /// Detection probability. Distinguishable paths add in intensity.
    pub fn intensity(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Bs => (self.short + self.long).norm_sqr(),
            Mode::Pbs => self.short.norm_sqr() + self.long.norm_sqr(),
        }
    }
}

/// Long-arm phase `θ_L` for a photon with signed detuning `delta_f_signed`.
///
/// For a pair (+δf to Alice, −δf to Bob) this gives `ξ + φ` on side A and
/// `−(ξ − ψ)` on side B.
pub fn long_arm_phase(det: Detector, delta_f_signed: f64, settings: &PhaseSettings, delta_l: f64) -> f64 {
    xi_phase(delta_f_signed, delta_l) + settings.long_arm_offset(det.side())
}

pub fn arm_amplitudes(
    det: Detector,
    delta_f_signed: f64,
    settings: &PhaseSettings,
    config: &ExperimentConfig,
) -> ArmAmplitudes {
    let theta = long_arm_phase(det, delta_f_signed, settings, config.delta_l);
    ArmAmplitudes { short: Complex64::new(0.5, 0.0), long: Complex64::from_polar(0.5 * det.l_sign(), theta) }
}

/// Port intensity in units of `I₀`: `(1 + l_sign·cos θ_L)/2`, or 1/2 when the
/// paths are distinguishable.
pub fn local_intensity(det: Detector, delta_f_signed: f64, settings: &PhaseSettings, config: &ExperimentConfig) -> f64 {
    match config.mode {
        Mode::Pbs => 0.5,
        Mode::Bs => {
            let theta = long_arm_phase(det, delta_f_signed, settings, config.delta_l);
            0.5 * (1.0 + det.l_sign() * theta.cos())
        }
    }
}

/// Signed detuning at `det` for a pair drawn with `delta_f ≥ 0`.
pub fn signed_detuning(det: Detector, delta_f: f64) -> f64 {
    match det.side() {
        Side::A => delta_f,
        Side::B => -delta_f,
    }
}

/// Monte Carlo ensemble mean of [`local_intensity`] over the detuning envelope.
pub fn local_mean(det: Detector, settings: &PhaseSettings, config: &ExperimentConfig, n_samples: u64) -> f64 {
    if config.mode == Mode::Pbs || n_samples == 0 {
        return 0.5;
    }
    let detuning = DetuningDistribution::from_config(config);
    let partial: Vec<f64> = blocks(n_samples)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(block, len)| {
            let mut rng = substream(config.seed, Domain::LocalMean, block);
            (0..len)
                .map(|_| {
                    let df = detuning.sample(&mut rng);
                    local_intensity(det, signed_detuning(det, df), settings, config)
                })
                .sum::<f64>()
        })
        .collect();
    partial.iter().sum::<f64>() / n_samples as f64
}

/// Draws which detector of `side` clicks for a photon at `delta_f_signed`.
pub fn sample_port<R: Rng + ?Sized>(
    side: Side,
    delta_f_signed: f64,
    settings: &PhaseSettings,
    config: &ExperimentConfig,
    rng: &mut R,
) -> Detector {
    let [minus, plus] = Detector::of_side(side);
    let p_minus = local_intensity(minus, delta_f_signed, settings, config);
    if rng.random::<f64>() < p_minus {
        minus
    } else {
        plus
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SPEED_OF_LIGHT;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, TAU};

    fn cfg() -> ExperimentConfig {
        ExperimentConfig::default()
    }

    /// Detuning whose imbalance phase is exactly `xi` at the default delta_l.
    fn detuning_for(xi: f64) -> f64 {
        xi * SPEED_OF_LIGHT / (TAU * cfg().delta_l)
    }

    #[test]
    fn amplitudes_at_zero_phase() {
        let s = PhaseSettings::default();
        let d1 = arm_amplitudes(Detector::D1, 0.0, &s, &cfg());
        assert_eq!(d1.short, Complex64::new(0.5, 0.0));
        assert_abs_diff_eq!(d1.long.re, -0.5);
        assert_abs_diff_eq!(d1.long.im, 0.0);
        let d2 = arm_amplitudes(Detector::D2, 0.0, &s, &cfg());
        assert_abs_diff_eq!(d2.long.re, 0.5);
        assert_abs_diff_eq!(d2.long.im, 0.0);
    }

    #[test]
    fn bob_branch_phase_is_reversed() {
        // Pair detuning with ξ = π/2; Bob carries -δf, so θ_L = -(ξ - ψ) = -π/2.
        let df = detuning_for(FRAC_PI_2);
        let amp = arm_amplitudes(Detector::D3, -df, &PhaseSettings::default(), &cfg());
        let expected = -0.5 * Complex64::from_polar(1.0, -FRAC_PI_2);
        assert_abs_diff_eq!(amp.long.re, expected.re, epsilon = 1e-12);
        assert_abs_diff_eq!(amp.long.im, expected.im, epsilon = 1e-12);
        assert_abs_diff_eq!(amp.long.im, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn intensities_at_zero_phase() {
        let s = PhaseSettings::default();
        assert_abs_diff_eq!(local_intensity(Detector::D1, 0.0, &s, &cfg()), 0.0);
        assert_abs_diff_eq!(local_intensity(Detector::D2, 0.0, &s, &cfg()), 1.0);
        let pbs = ExperimentConfig { mode: Mode::Pbs, ..cfg() };
        for d in Detector::ALL {
            assert_eq!(local_intensity(d, 1.23e9, &PhaseSettings::new(0.4, 2.0), &pbs), 0.5);
        }
    }

    #[test]
    fn local_mean_pbs_is_exact() {
        let pbs = ExperimentConfig { mode: Mode::Pbs, ..cfg() };
        assert_eq!(local_mean(Detector::D3, &PhaseSettings::new(1.0, 0.0), &pbs, 1000), 0.5);
    }

    #[test]
    fn local_mean_is_flat_in_regime() {
        let n = 1_000_000;
        for k in 0..4 {
            let phi = k as f64 * TAU / 4.0;
            let m = local_mean(Detector::D1, &PhaseSettings::new(phi, 0.0), &cfg(), n);
            assert!((m - 0.5).abs() < 0.002, "phi={phi} mean={m}");
        }
    }

    #[test]
    fn local_mean_shows_fringe_without_dephasing() {
        // Single-frequency limit: the mean is just the per-event intensity.
        let c = ExperimentConfig { sigma_f: 1e-6, f_center: 0.0, ..cfg() };
        for phi in [0.0, 1.0, 2.5] {
            let m = local_mean(Detector::D1, &PhaseSettings::new(phi, 0.0), &c, 1000);
            assert_abs_diff_eq!(m, 0.5 * (1.0 - phi.cos()), epsilon = 1e-9);
        }
    }

    proptest! {
        #[test]
        fn closed_form_matches_amplitudes(df in -5e9f64..5e9, phi in -10.0f64..10.0, psi in -10.0f64..10.0, th in -3.0f64..3.0) {
            let s = PhaseSettings::new(phi, psi).with_theta0(th);
            for d in Detector::ALL {
                let amp = arm_amplitudes(d, df, &s, &cfg());
                prop_assert!((amp.short.norm_sqr() + amp.long.norm_sqr() - 0.5).abs() < 1e-12);
                prop_assert!((amp.intensity(Mode::Bs) - local_intensity(d, df, &s, &cfg())).abs() < 1e-12);
                prop_assert!((amp.intensity(Mode::Pbs) - 0.5).abs() < 1e-12);
            }
        }

        #[test]
        fn ports_are_complementary(df in -5e9f64..5e9, phi in -10.0f64..10.0, psi in -10.0f64..10.0) {
            let s = PhaseSettings::new(phi, psi);
            let c = cfg();
            let a = local_intensity(Detector::D1, df, &s, &c) + local_intensity(Detector::D2, df, &s, &c);
            let b = local_intensity(Detector::D3, -df, &s, &c) + local_intensity(Detector::D4, -df, &s, &c);
            prop_assert!((a - 1.0).abs() < 1e-12);
            prop_assert!((b - 1.0).abs() < 1e-12);
        }
    }
}
