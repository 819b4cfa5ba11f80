//! Classical-field simulator for a Franson-type two-UMZI correlation experiment.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: shared domain types, constants and configuration validation.
//! - [`rng`]: counter-based random substreams, so every Monte Carlo result is a
//!   pure function of the seed regardless of thread count.
//! - [`source`]: Poisson emission streams of detuned photon pairs and singles.
//! - [`umzi`]: single-arm field amplitudes and local port intensities.
//! - [`correlator`]: post-selected joint detection, decoherence versus
//!   coincidence delay, and the non-post-selected product baseline.
//! - [`timetag`]: picosecond detector clicks, coincidence matching, delay
//!   histograms and the tag file formats.
//! - [`analysis`]: cosine fringe fits, phase scans, flatness and visibility curves.
//! - [`oracle`]: independent brute-force and quadrature references used to
//!   cross-check the modules above.

pub mod analysis;
pub mod correlator;
pub mod model;
pub mod oracle;
pub mod rng;
pub mod source;
pub mod timetag;
pub mod umzi;

pub use model::{Detector, EmissionEvent, EventKind, ExperimentConfig, Mode, PhaseSettings, RegimeWarning, Side};
