//! Fringe extraction and the headline comparisons.
//!
//! Fringes are fitted as `y = A(1 + V cos(x + θ))`. Rewritten as
//! `A + a·cos x + b·sin x` the model is linear, so a single weighted
//! Gauss–Newton step from the discrete Fourier seed lands on the exact
//! least-squares optimum.

use std::f64::consts::{PI, TAU};
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correlator::{mc_mean_correlation, mean_correlation, CorrelatorError, JointSetting};
use crate::model::{Detector, ExperimentConfig, PhaseSettings, Side};
use crate::rng::{blocks, derive_seed, substream, Domain};
use crate::source::{generate_stream, DetuningDistribution, SourceError, StreamOptions};
use crate::timetag::{count_coincidences, select_central_peak, simulate_tags, CoincidenceParams, TimetagError};
use crate::umzi::sample_port;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("fringe fit needs at least 5 points, got {0}")]
    TooFewPoints(usize),
    #[error("fringe fit: all values are zero")]
    AllZero,
    #[error("fringe fit: mean level {0} is not positive")]
    NonPositiveMean(f64),
    #[error("fringe fit: singular normal equations (phases do not separate cos and sin)")]
    Singular,
    #[error("the time-tag pipeline post-selects at zero delay; tau_ab = {0} s is not supported")]
    TimeTagDelay(f64),
    #[error("invalid grid spec `{0}`: expected start:stop:n with n >= 1")]
    InvalidGrid(String),
    #[error(transparent)]
    Correlator(#[from] CorrelatorError),
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error(transparent)]
    Timetag(#[from] TimetagError),
}

/// One sample of a fringe: phase, measured value, and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FringePoint {
    pub x: f64,
    pub value: f64,
    pub error: f64,
}

/// Result of [`fit_fringe`].
///
/// `visibility` is the fitted coefficient `V`; `michelson` is
/// `(max − min)/(max + min)` of the raw data points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FringeFit {
    pub amplitude: f64,
    #[serde(rename = "visibility_fit")]
    pub visibility: f64,
    /// Fitted phase in `(-π, π]`.
    pub phase: f64,
    pub amplitude_err: f64,
    #[serde(rename = "visibility_fit_err")]
    pub visibility_err: f64,
    pub phase_err: f64,
    pub chi2_dof: f64,
    #[serde(rename = "visibility_max_min")]
    pub michelson: f64,
    pub n_points: usize,
    pub warnings: Vec<String>,
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_phase(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

pub fn fit_fringe(points: &[FringePoint]) -> Result<FringeFit, AnalysisError> {
    let n = points.len();
    if n < 5 {
        return Err(AnalysisError::TooFewPoints(n));
    }
    if points.iter().all(|p| p.value == 0.0) {
        return Err(AnalysisError::AllZero);
    }

    let mut warnings = Vec::new();
    let (lo, hi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.x), hi.max(p.x)));
    // A uniform n-point grid over one period spans 2π(n-1)/n.
    let coverage = (hi - lo) * n as f64 / (n - 1) as f64;
    if coverage < TAU * (1.0 - 1e-6) {
        warnings.push(format!("phase grid spans {:.4} rad, less than one period", hi - lo));
    }

    // Known errors give absolute weights; all-zero errors fall back to
    // unit weights with the residual variance as scale.
    let min_positive = points.iter().map(|p| p.error).filter(|&e| e > 0.0).fold(f64::INFINITY, f64::min);
    let known_errors = min_positive.is_finite();
    let weight = |p: &FringePoint| {
        if known_errors {
            1.0 / p.error.max(min_positive).powi(2)
        } else {
            1.0
        }
    };

    // Fourier seed at frequency 1.
    let nf = n as f64;
    let mut seed = Vector3::new(
        points.iter().map(|p| p.value).sum::<f64>() / nf,
        2.0 / nf * points.iter().map(|p| p.value * p.x.cos()).sum::<f64>(),
        2.0 / nf * points.iter().map(|p| p.value * p.x.sin()).sum::<f64>(),
    );

    let mut normal = Matrix3::zeros();
    let mut rhs = Vector3::zeros();
    for p in points {
        let row = Vector3::new(1.0, p.x.cos(), p.x.sin());
        let w = weight(p);
        normal += w * row * row.transpose();
        rhs += w * row * (p.value - row.dot(&seed));
    }
    let eig = normal.symmetric_eigenvalues();
    if eig.min() <= 1e-12 * eig.max() {
        return Err(AnalysisError::Singular);
    }
    let cov_unscaled = normal.try_inverse().ok_or(AnalysisError::Singular)?;
    seed += cov_unscaled * rhs;
    let params = seed;

    let chi2: f64 = points
        .iter()
        .map(|p| {
            let model = params[0] + params[1] * p.x.cos() + params[2] * p.x.sin();
            weight(p) * (p.value - model).powi(2)
        })
        .sum();
    let dof = (n - 3) as f64;
    let chi2_dof = chi2 / dof;
    let cov = if known_errors { cov_unscaled } else { cov_unscaled * chi2_dof };

    let (amplitude, a, b) = (params[0], params[1], params[2]);
    if amplitude <= 0.0 {
        return Err(AnalysisError::NonPositiveMean(amplitude));
    }
    let r = a.hypot(b);
    let visibility = r / amplitude;
    let phase = if r == 0.0 { 0.0 } else { wrap_phase((-b).atan2(a)) };

    let grad_v = if r == 0.0 {
        Vector3::new(0.0, 1.0 / amplitude, 0.0)
    } else {
        Vector3::new(-visibility / amplitude, a / (amplitude * r), b / (amplitude * r))
    };
    let grad_theta = if r == 0.0 { Vector3::zeros() } else { Vector3::new(0.0, b / (r * r), -a / (r * r)) };
    let var = |g: &Vector3<f64>| (g.transpose() * cov * g)[0].max(0.0).sqrt();

    let (min, max) =
        points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.value), hi.max(p.value)));
    let michelson = if max + min > 0.0 { (max - min) / (max + min) } else { 0.0 };

    Ok(FringeFit {
        amplitude,
        visibility,
        phase,
        amplitude_err: cov[(0, 0)].max(0.0).sqrt(),
        visibility_err: var(&grad_v),
        phase_err: var(&grad_theta),
        chi2_dof,
        michelson,
        n_points: n,
        warnings,
    })
}

/// `start:stop:n` grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub n: usize,
}

impl Grid {
    pub fn new(start: f64, stop: f64, n: usize) -> Self {
        Self { start, stop, n }
    }

    /// Full period `[0, 2π)` with `n` points.
    pub fn period(n: usize) -> Self {
        Self::new(0.0, TAU, n)
    }

    /// Uniform points over `[start, stop)`, for periodic phase scans.
    pub fn periodic(&self) -> Vec<f64> {
        let step = (self.stop - self.start) / self.n as f64;
        (0..self.n).map(|i| self.start + i as f64 * step).collect()
    }

    /// Uniform points over `[start, stop]`, for parameter sweeps.
    pub fn inclusive(&self) -> Vec<f64> {
        if self.n == 1 {
            return vec![self.start];
        }
        let step = (self.stop - self.start) / (self.n - 1) as f64;
        (0..self.n).map(|i| self.start + i as f64 * step).collect()
    }
}

impl FromStr for Grid {
    type Err = AnalysisError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || AnalysisError::InvalidGrid(s.to_string());
        let parts: Vec<&str> = s.split(':').collect();
        let [start, stop, n] = parts.as_slice() else {
            return Err(bad());
        };
        let start: f64 = start.trim().parse().map_err(|_| bad())?;
        let stop: f64 = stop.trim().parse().map_err(|_| bad())?;
        let n: usize = n.trim().parse().map_err(|_| bad())?;
        if n == 0 || !start.is_finite() || !stop.is_finite() {
            return Err(bad());
        }
        Ok(Self { start, stop, n })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pipeline {
    /// Quadrature-based ensemble means.
    Analytic,
    /// Per-pair sampling of the post-selected detection probability.
    MonteCarlo,
    /// Full click simulation with coincidence counting.
    TimeTag,
}

impl FromStr for Pipeline {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "analytic" => Ok(Pipeline::Analytic),
            "montecarlo" | "mc" => Ok(Pipeline::MonteCarlo),
            "timetag" => Ok(Pipeline::TimeTag),
            other => Err(format!("unknown pipeline `{other}`")),
        }
    }
}

/// Which phase the scan variable drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanAxis {
    Phi,
    Psi,
    /// `x = φ + ψ`, with ψ held at the fixed value.
    Joint,
}

impl FromStr for ScanAxis {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "phi" => Ok(ScanAxis::Phi),
            "psi" => Ok(ScanAxis::Psi),
            "joint" => Ok(ScanAxis::Joint),
            other => Err(format!("unknown scan axis `{other}`")),
        }
    }
}

/// Everything a fringe scan needs beyond the experiment config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FringeScan {
    pub pipeline: Pipeline,
    pub axis: ScanAxis,
    pub det_a: Detector,
    pub det_b: Detector,
    pub grid: Grid,
    /// Phase held fixed on the side that is not scanned.
    pub phi: f64,
    pub psi: f64,
    pub tau_ab: f64,
    /// Monte Carlo draws, or pairs for the time-tag pipeline, per grid point.
    pub samples_per_point: u64,
}

impl FringeScan {
    pub fn new(pipeline: Pipeline) -> Self {
        Self {
            pipeline,
            axis: ScanAxis::Joint,
            det_a: Detector::D1,
            det_b: Detector::D3,
            grid: Grid::period(24),
            phi: 0.0,
            psi: 0.0,
            tau_ab: 0.0,
            samples_per_point: 100_000,
        }
    }

    pub fn pair(mut self, det_a: Detector, det_b: Detector) -> Self {
        self.det_a = det_a;
        self.det_b = det_b;
        self
    }

    pub fn settings_at(&self, x: f64, theta0: f64) -> PhaseSettings {
        let (phi, psi) = match self.axis {
            ScanAxis::Phi => (x, self.psi),
            ScanAxis::Psi => (self.phi, x),
            ScanAxis::Joint => (x - self.psi, self.psi),
        };
        PhaseSettings { phi, psi, theta0 }
    }
}

/// Post-selected coincidence counts of one detector pair from a full click
/// simulation of `config` (its duration and seed as given).
pub fn timetag_counts(
    config: &ExperimentConfig,
    settings: &PhaseSettings,
    det_a: Detector,
    det_b: Detector,
) -> Result<(u64, Vec<String>), AnalysisError> {
    let stream = generate_stream(config, &StreamOptions::default())?;
    let tags = simulate_tags(config, settings, &stream);
    let delta_t = config.delay();
    let params = CoincidenceParams::new(config.window, 0.0, delta_t);
    let result = count_coincidences(&tags.a, &tags.b, &params)?;
    let central = select_central_peak(&result.matches, config.window, Some(delta_t));
    Ok((central.counts.get(det_a, det_b), central.warnings))
}

/// Evaluates one pipeline at every grid point. Deterministic given the seed.
pub fn scan_fringe(config: &ExperimentConfig, scan: &FringeScan) -> Result<Vec<FringePoint>, AnalysisError> {
    if scan.pipeline == Pipeline::TimeTag && scan.tau_ab != 0.0 {
        return Err(AnalysisError::TimeTagDelay(scan.tau_ab));
    }
    let xs = scan.grid.periodic();
    let mut out = Vec::with_capacity(xs.len());
    for (i, &x) in xs.iter().enumerate() {
        let settings = scan.settings_at(x, config.theta0);
        let js = JointSetting::new(scan.det_a, scan.det_b, settings, scan.tau_ab)?;
        let point_cfg = ExperimentConfig { seed: derive_seed(config.seed, i as u64), ..config.clone() };
        let (value, error) = match scan.pipeline {
            Pipeline::Analytic => (mean_correlation(&js, config)?, 0.0),
            Pipeline::MonteCarlo => {
                let est = mc_mean_correlation(&js, &point_cfg, scan.samples_per_point)?;
                (est.value, est.stderr)
            }
            Pipeline::TimeTag => {
                let mut cfg = point_cfg;
                if cfg.pair_rate > 0.0 {
                    cfg.duration = scan.samples_per_point as f64 / cfg.pair_rate;
                }
                let (count, _) = timetag_counts(&cfg, &settings, scan.det_a, scan.det_b)?;
                (count as f64, (count.max(1) as f64).sqrt())
            }
        };
        out.push(FringePoint { x, value, error });
    }
    Ok(out)
}

/// Per-detector singles counts over a local phase scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalScan {
    pub x: Vec<f64>,
    /// `counts[d][i]`: detector `D(d+1)` at grid point `i`.
    pub counts: [Vec<u64>; 4],
}

/// Samples local detections from the frequency-domain port model: at each grid
/// point `photons_per_point` pairs are drawn, each photon picks its port with
/// the local intensity as probability.
pub fn local_scan(
    config: &ExperimentConfig,
    axis: ScanAxis,
    grid: &Grid,
    phi: f64,
    psi: f64,
    photons_per_point: u64,
) -> LocalScan {
    let xs = grid.periodic();
    let detuning = DetuningDistribution::from_config(config);
    let mut counts: [Vec<u64>; 4] = Default::default();
    for (i, &x) in xs.iter().enumerate() {
        let (p, q) = match axis {
            ScanAxis::Phi => (x, psi),
            ScanAxis::Psi => (phi, x),
            ScanAxis::Joint => (x - psi, psi),
        };
        let settings = PhaseSettings { phi: p, psi: q, theta0: config.theta0 };
        let seed = derive_seed(config.seed, i as u64);
        let per_block: Vec<[u64; 4]> = blocks(photons_per_point)
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|(block, len)| {
                let mut rng = substream(seed, Domain::LocalScan, block);
                let mut c = [0u64; 4];
                for _ in 0..len {
                    let df = rand_distr::Distribution::sample(&detuning, &mut rng);
                    let a = sample_port(Side::A, df, &settings, config, &mut rng);
                    let b = sample_port(Side::B, -df, &settings, config, &mut rng);
                    c[a.channel() as usize - 1] += 1;
                    c[b.channel() as usize - 1] += 1;
                }
                c
            })
            .collect();
        for (d, series) in counts.iter_mut().enumerate() {
            series.push(per_block.iter().map(|c| c[d]).sum());
        }
    }
    LocalScan { x: xs, counts }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatnessReport {
    /// Poisson z-scores of each point against its detector's grid mean.
    pub z: Vec<Vec<f64>>,
    pub max_abs_z: f64,
    pub pass: bool,
}

pub const FLATNESS_Z_LIMIT: f64 = 4.0;

pub fn flatness_report(counts: &[Vec<u64>]) -> FlatnessReport {
    let z: Vec<Vec<f64>> = counts
        .iter()
        .map(|series| {
            let mean = series.iter().sum::<u64>() as f64 / series.len().max(1) as f64;
            series.iter().map(|&c| if mean > 0.0 { (c as f64 - mean) / mean.sqrt() } else { 0.0 }).collect()
        })
        .collect();
    let max_abs_z = z.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    FlatnessReport { z, max_abs_z, pass: max_abs_z < FLATNESS_Z_LIMIT }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    TauAb,
    SinglesRate,
    Window,
}

impl FromStr for SweepVariable {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "tau" | "tau_ab" => Ok(SweepVariable::TauAb),
            "singles" | "singles_rate" => Ok(SweepVariable::SinglesRate),
            "window" => Ok(SweepVariable::Window),
            other => Err(format!("unknown sweep variable `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisibilityPoint {
    pub x: f64,
    pub visibility: f64,
    pub error: f64,
    pub michelson: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisibilityCurve {
    pub variable: SweepVariable,
    pub points: Vec<VisibilityPoint>,
    /// Each step is non-increasing within 3 combined standard errors.
    pub non_increasing: bool,
    pub strictly_decreasing: bool,
    /// Every point agrees with the first within 3 combined standard errors.
    pub constant_within_error: bool,
}

/// Repeats [`scan_fringe`] + [`fit_fringe`] for each value of `variable`.
pub fn visibility_vs(
    config: &ExperimentConfig,
    scan: &FringeScan,
    variable: SweepVariable,
    values: &[f64],
) -> Result<VisibilityCurve, AnalysisError> {
    let mut points = Vec::with_capacity(values.len());
    for &x in values {
        let mut cfg = config.clone();
        let mut s = *scan;
        match variable {
            SweepVariable::TauAb => s.tau_ab = x,
            SweepVariable::SinglesRate => cfg.singles_rate = x,
            SweepVariable::Window => cfg.window = x,
        }
        let fit = fit_fringe(&scan_fringe(&cfg, &s)?)?;
        points.push(VisibilityPoint {
            x,
            visibility: fit.visibility,
            error: fit.visibility_err,
            michelson: fit.michelson,
        });
    }
    let sigma = |a: &VisibilityPoint, b: &VisibilityPoint| 3.0 * a.error.hypot(b.error);
    let non_increasing = points.windows(2).all(|w| w[1].visibility <= w[0].visibility + sigma(&w[0], &w[1]));
    let strictly_decreasing = points.windows(2).all(|w| w[1].visibility < w[0].visibility);
    let constant_within_error =
        points.first().is_none_or(|p0| points.iter().all(|p| (p.visibility - p0.visibility).abs() <= sigma(p, p0)));
    Ok(VisibilityCurve { variable, points, non_increasing, strictly_decreasing, constant_within_error })
}

/// Writes `x,value,error` CSV.
pub fn write_curve_csv<W: std::io::Write>(writer: W, points: &[FringePoint]) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["x", "value", "error"])?;
    for p in points {
        out.write_record([p.x.to_string(), p.value.to_string(), p.error.to_string()])?;
    }
    out.flush()?;
    Ok(())
}
