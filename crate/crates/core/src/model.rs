//! Shared domain types, physical constants and configuration checks.

use std::f64::consts::TAU;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Minimum margin for `delta_L * sigma_f / c` (interferometer imbalance much
/// longer than the modulation coherence length).
pub const DEPHASING_MARGIN: f64 = 10.0;

/// Maximum value for `delta_L * laser_linewidth / c` (imbalance much shorter
/// than the laser coherence length).
pub const COHERENCE_MARGIN: f64 = 0.1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("parameter `{field}` must be finite, got {value}")]
    NonFinite { field: &'static str, value: f64 },
    #[error("parameter `{field}` must be non-negative, got {value}")]
    Negative { field: &'static str, value: f64 },
    #[error("parameter `{field}` must be strictly positive, got {value}")]
    NonPositive { field: &'static str, value: f64 },
    #[error("invalid config file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("cannot serialise config: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("cannot read config file: {0}")]
    Io(#[from] std::io::Error),
}

/// Beam splitters inside the interferometers: ordinary (paths indistinguishable)
/// or polarizing (paths distinguishable, no interference).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    #[serde(alias = "BS")]
    Bs,
    #[serde(alias = "PBS")]
    Pbs,
}

impl Mode {
    pub fn is_distinguishable(self) -> bool {
        matches!(self, Mode::Pbs)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Bs => "bs",
            Mode::Pbs => "pbs",
        })
    }
}

/// All physical and numerical parameters of one run. SI units throughout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Optical carrier frequency, Hz.
    pub f0: f64,
    /// Standard deviation of the pair detuning distribution, Hz.
    pub sigma_f: f64,
    /// Centre of the pair detuning distribution, Hz.
    pub f_center: f64,
    /// Long minus short arm length of each UMZI, m.
    pub delta_l: f64,
    /// Laser linewidth, Hz. Coherence length is `c / laser_linewidth`.
    pub laser_linewidth: f64,
    /// Pair emissions per second.
    pub pair_rate: f64,
    /// Uncorrelated single emissions per second on each side.
    pub singles_rate: f64,
    /// Gaussian timing jitter of each detector (std), s.
    pub t_res: f64,
    /// Detector dead time, s.
    pub dead_time: f64,
    /// Full width of the coincidence window, s.
    pub window: f64,
    /// Fixed joint-phase offset, rad.
    pub theta0: f64,
    pub mode: Mode,
    pub seed: u64,
    /// Simulated wall time, s.
    pub duration: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            f0: 3.84e14,
            sigma_f: 1.0e9,
            f_center: 4.0e9,
            delta_l: 3.0,
            laser_linewidth: 1.0e3,
            pair_rate: 1.0e4,
            singles_rate: 1.0e6,
            t_res: 50e-12,
            dead_time: 0.0,
            window: 2e-9,
            theta0: 0.0,
            mode: Mode::Bs,
            seed: 0x5eed_f4a5_0000_0001,
            duration: 1.0,
        }
    }
}

/// A regime inequality that does not hold with the required margin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeWarning {
    pub inequality: String,
    pub ratio: f64,
    pub message: String,
}

impl fmt::Display for RegimeWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(self)?)
    }

    fn non_negative_fields(&self) -> [(&'static str, f64); 12] {
        [
            ("f0", self.f0),
            ("sigma_f", self.sigma_f),
            ("f_center", self.f_center),
            ("delta_l", self.delta_l),
            ("laser_linewidth", self.laser_linewidth),
            ("pair_rate", self.pair_rate),
            ("singles_rate", self.singles_rate),
            ("t_res", self.t_res),
            ("dead_time", self.dead_time),
            ("window", self.window),
            ("duration", self.duration),
            // theta0 may be negative; it is only checked for finiteness.
            ("theta0", self.theta0.abs()),
        ]
    }

    /// Checks parameter signs and the two regime inequalities.
    ///
    /// Bad parameters are fatal. Regime violations come back as warnings, one
    /// per violated inequality.
    pub fn validate(&self) -> Result<Vec<RegimeWarning>, ConfigError> {
        for (field, value) in self.non_negative_fields() {
            if !value.is_finite() {
                return Err(ConfigError::NonFinite { field, value });
            }
            if value < 0.0 {
                return Err(ConfigError::Negative { field, value });
            }
        }
        for (field, value) in [("sigma_f", self.sigma_f), ("delta_l", self.delta_l)] {
            if value <= 0.0 {
                return Err(ConfigError::NonPositive { field, value });
            }
        }

        let mut warnings = Vec::new();
        let dephasing = self.dephasing_ratio();
        if dephasing < DEPHASING_MARGIN {
            warnings.push(RegimeWarning {
                inequality: "delta_l >> c/sigma_f".into(),
                ratio: dephasing,
                message: format!(
                    "delta_l >> c/sigma_f violated margin: delta_l*sigma_f/c = {dephasing:.4} < {DEPHASING_MARGIN}"
                ),
            });
        }
        let coherence = self.coherence_ratio();
        if coherence > COHERENCE_MARGIN {
            warnings.push(RegimeWarning {
                inequality: "delta_l << l_c".into(),
                ratio: coherence,
                message: format!(
                    "delta_l << c/laser_linewidth violated margin: delta_l*linewidth/c = {coherence:.4} > {COHERENCE_MARGIN}"
                ),
            });
        }
        Ok(warnings)
    }

    /// `delta_L * sigma_f / c`.
    pub fn dephasing_ratio(&self) -> f64 {
        self.delta_l * self.sigma_f / SPEED_OF_LIGHT
    }

    /// `delta_L * laser_linewidth / c`, i.e. `delta_L / l_c`.
    pub fn coherence_ratio(&self) -> f64 {
        self.delta_l * self.laser_linewidth / SPEED_OF_LIGHT
    }

    pub fn coherence_length(&self) -> f64 {
        SPEED_OF_LIGHT / self.laser_linewidth
    }

    /// Arrival-time split between short and long arm, s.
    pub fn delay(&self) -> f64 {
        delay_dt(self.delta_l)
    }

    /// Phase settings at the given PZT phases with this config's `theta0`.
    pub fn settings(&self, phi: f64, psi: f64) -> PhaseSettings {
        PhaseSettings { phi, psi, theta0: self.theta0 }
    }
}

/// Arm-imbalance phase of a photon detuned by `delta_f` from the carrier:
/// `2π · delta_f · delta_L / c`. Odd in `delta_f`.
pub fn xi_phase(delta_f: f64, delta_l: f64) -> f64 {
    TAU * delta_f * delta_l / SPEED_OF_LIGHT
}

/// Time-bin separation `delta_L / c`, s.
pub fn delay_dt(delta_l: f64) -> f64 {
    delta_l / SPEED_OF_LIGHT
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

/// The four output-port detectors. D1/D2 watch Alice's UMZI, D3/D4 Bob's.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Detector {
    D1,
    D2,
    D3,
    D4,
}

impl Detector {
    pub const ALL: [Detector; 4] = [Detector::D1, Detector::D2, Detector::D3, Detector::D4];

    pub fn side(self) -> Side {
        match self {
            Detector::D1 | Detector::D2 => Side::A,
            Detector::D3 | Detector::D4 => Side::B,
        }
    }

    /// Sign of the long-arm term in this port's field amplitude.
    pub fn l_sign(self) -> f64 {
        match self {
            Detector::D1 | Detector::D3 => -1.0,
            Detector::D2 | Detector::D4 => 1.0,
        }
    }

    /// Time-tagger channel number, 1..=4.
    pub fn channel(self) -> u8 {
        self as u8 + 1
    }

    pub fn from_channel(channel: u8) -> Option<Self> {
        match channel {
            1 => Some(Detector::D1),
            2 => Some(Detector::D2),
            3 => Some(Detector::D3),
            4 => Some(Detector::D4),
            _ => None,
        }
    }

    /// The two detectors of one side, in channel order.
    pub fn of_side(side: Side) -> [Detector; 2] {
        match side {
            Side::A => [Detector::D1, Detector::D2],
            Side::B => [Detector::D3, Detector::D4],
        }
    }
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "D{}", self.channel())
    }
}

/// Local PZT phases of Alice (`phi`) and Bob (`psi`), plus the fixed joint offset.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseSettings {
    pub phi: f64,
    pub psi: f64,
    pub theta0: f64,
}

impl PhaseSettings {
    pub fn new(phi: f64, psi: f64) -> Self {
        Self { phi, psi, theta0: 0.0 }
    }

    pub fn with_theta0(mut self, theta0: f64) -> Self {
        self.theta0 = theta0;
        self
    }

    /// The phase that survives post-selection: `phi + psi + theta0`.
    pub fn joint_phase(&self) -> f64 {
        self.phi + self.psi + self.theta0
    }

    /// Local phase on one side's long arm. The offset is split evenly
    /// between the two long arms so that it appears once in the joint phase.
    pub fn long_arm_offset(&self, side: Side) -> f64 {
        let local = match side {
            Side::A => self.phi,
            Side::B => self.psi,
        };
        local + 0.5 * self.theta0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Pair,
    SingleA,
    SingleB,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Pair => "pair",
            EventKind::SingleA => "single_a",
            EventKind::SingleB => "single_b",
        }
    }
}

/// One emission from the source.
///
/// For a pair, Alice's photon is at `f0 + delta_f` and Bob's at `f0 - delta_f`.
/// A single on side B carries `-delta_f` at its detector, matching the pair
/// branch assignment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmissionEvent {
    pub kind: EventKind,
    pub t_emit: f64,
    pub delta_f: f64,
    pub eta: f64,
}

impl EmissionEvent {
    /// Signed detuning seen on `side`, or `None` if the event sends nothing there.
    pub fn detuning_at(&self, side: Side) -> Option<f64> {
        match (self.kind, side) {
            (EventKind::Pair, Side::A) | (EventKind::SingleA, Side::A) => Some(self.delta_f),
            (EventKind::Pair, Side::B) | (EventKind::SingleB, Side::B) => Some(-self.delta_f),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn default_config_is_in_regime() {
        let cfg = ExperimentConfig::default();
        assert!(cfg.validate().unwrap().is_empty());
    }

    #[test]
    fn regime_satisfied_at_margin() {
        let cfg = ExperimentConfig { delta_l: 3.0, sigma_f: 1e9, laser_linewidth: 1e3, ..Default::default() };
        assert!(cfg.validate().unwrap().is_empty());
        assert!((cfg.dephasing_ratio() - 10.0).abs() < 0.01);
        assert!((cfg.coherence_ratio() - 1e-5).abs() < 1e-7);
    }

    #[test]
    fn short_imbalance_warns() {
        let cfg = ExperimentConfig { delta_l: 0.01, sigma_f: 1e9, ..Default::default() };
        let warnings = cfg.validate().unwrap();
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].message.contains("delta_l >> c/sigma_f violated margin"));
        assert!((warnings[0].ratio - 0.0334).abs() < 1e-3);
    }

    #[test]
    fn broad_laser_warns() {
        let cfg = ExperimentConfig { laser_linewidth: 1e8, ..Default::default() };
        let warnings = cfg.validate().unwrap();
        assert_eq!(warnings.len(), 1);
        assert_eq!(warnings[0].inequality, "delta_l << l_c");
    }

    #[test]
    fn negative_and_non_finite_are_fatal() {
        let cfg = ExperimentConfig { delta_l: -1.0, ..Default::default() };
        assert!(matches!(cfg.validate(), Err(ConfigError::Negative { field: "delta_l", .. })));
        let cfg = ExperimentConfig { pair_rate: f64::NAN, ..Default::default() };
        assert!(matches!(cfg.validate(), Err(ConfigError::NonFinite { .. })));
        let cfg = ExperimentConfig { theta0: f64::INFINITY, ..Default::default() };
        assert!(matches!(cfg.validate(), Err(ConfigError::NonFinite { .. })));
        let cfg = ExperimentConfig { sigma_f: 0.0, ..Default::default() };
        assert!(matches!(cfg.validate(), Err(ConfigError::NonPositive { field: "sigma_f", .. })));
        let cfg = ExperimentConfig { theta0: -1.0, ..Default::default() };
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn xi_phase_values() {
        assert_eq!(xi_phase(0.0, 3.0), 0.0);
        // 2π · 1e8 · 3 / c, with c ≈ 3e8 giving ≈ 2π.
        let full = xi_phase(100e6, 3.0);
        assert_eq!(full, 2.0 * PI * 100e6 * 3.0 / SPEED_OF_LIGHT);
        assert!((full / (2.0 * PI) - 1.0).abs() < 1e-3);
        let half = xi_phase(50e6, 3.0);
        assert!((half - full / 2.0).abs() < 1e-12);
        assert!((half / PI - 1.0).abs() < 1e-3);
        assert_eq!(xi_phase(-100e6, 3.0), -full);
    }

    #[test]
    fn delay_values() {
        assert!((delay_dt(3.0) - 10e-9).abs() / 10e-9 < 1e-3);
        assert_eq!(delay_dt(0.0), 0.0);
        assert!((delay_dt(0.3) - 1e-9).abs() / 1e-9 < 1e-3);
        assert_eq!(delay_dt(3.0), 3.0 / SPEED_OF_LIGHT);
    }

    #[test]
    fn sign_table() {
        use Detector::*;
        assert_eq!(D1.l_sign() * D3.l_sign(), 1.0);
        assert_eq!(D2.l_sign() * D4.l_sign(), 1.0);
        assert_eq!(D1.l_sign() * D4.l_sign(), -1.0);
        assert_eq!(D2.l_sign() * D3.l_sign(), -1.0);
        for d in Detector::ALL {
            assert_eq!(Detector::from_channel(d.channel()), Some(d));
        }
        assert_eq!(Detector::from_channel(0), None);
        assert_eq!(D2.side(), Side::A);
        assert_eq!(D3.side(), Side::B);
    }

    #[test]
    fn toml_round_trip_and_unknown_keys() {
        let cfg = ExperimentConfig { mode: Mode::Pbs, seed: 42, ..Default::default() };
        let text = cfg.to_toml_string().unwrap();
        assert!(text.contains("mode = \"pbs\""));
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);

        let partial = ExperimentConfig::from_toml_str("delta_l = 6.0\nmode = \"PBS\"\n").unwrap();
        assert_eq!(partial.delta_l, 6.0);
        assert_eq!(partial.mode, Mode::Pbs);

        let err = ExperimentConfig::from_toml_str("delta_L = 6.0\n").unwrap_err();
        assert!(err.to_string().contains("unknown field"), "{err}");
    }

    #[test]
    fn event_detuning_branches() {
        let pair = EmissionEvent { kind: EventKind::Pair, t_emit: 0.0, delta_f: 5.0, eta: 0.0 };
        assert_eq!(pair.detuning_at(Side::A), Some(5.0));
        assert_eq!(pair.detuning_at(Side::B), Some(-5.0));
        let single = EmissionEvent { kind: EventKind::SingleA, ..pair };
        assert_eq!(single.detuning_at(Side::B), None);
    }
}
