//! Poisson emission streams of detuned photon pairs and uncorrelated singles.
//!
//! Time is cut into fixed cells of [`CELL_DURATION`]. Each cell draws from its
//! own substreams, one per event class, so the stream depends only on the
//! config and seed. Adding singles leaves the pair events untouched.

use std::f64::consts::TAU;
use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::model::{EmissionEvent, EventKind, ExperimentConfig};
use crate::rng::{substream, Domain};

/// Width of one RNG cell of simulated time, s.
pub const CELL_DURATION: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum SourceError {
    #[error("detuning must be non-negative, got {0}")]
    NegativeDetuning(f64),
    #[error("chunk length must be positive and finite, got {0}")]
    BadChunkLength(f64),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Gaussian detuning envelope truncated to non-negative values.
#[derive(Debug, Clone, Copy)]
pub struct DetuningDistribution {
    normal: Normal<f64>,
}

impl DetuningDistribution {
    pub fn new(center: f64, sigma: f64) -> Self {
        let normal = Normal::new(center, sigma).expect("sigma_f must be finite and non-negative");
        Self { normal }
    }

    pub fn from_config(config: &ExperimentConfig) -> Self {
        Self::new(config.f_center, config.sigma_f)
    }
}

impl Distribution<f64> for DetuningDistribution {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let x = self.normal.sample(rng);
            if x >= 0.0 {
                return x;
            }
        }
    }
}

/// Draws one pair detuning `δf ≥ 0` from the config's envelope.
pub fn sample_detuning<R: Rng + ?Sized>(config: &ExperimentConfig, rng: &mut R) -> f64 {
    DetuningDistribution::from_config(config).sample(rng)
}

/// Signed detunings `(+δf, -δf)` carried by Alice's and Bob's photons.
pub fn pair_detunings(delta_f: f64) -> Result<(f64, f64), SourceError> {
    if delta_f.is_nan() || delta_f < 0.0 {
        return Err(SourceError::NegativeDetuning(delta_f));
    }
    Ok((delta_f, -delta_f))
}

/// A time slice of the emission stream; events sorted by `t_emit`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StreamChunk {
    pub t_start: f64,
    pub t_end: f64,
    pub events: Vec<EmissionEvent>,
}

#[derive(Debug, Clone, Copy)]
pub struct StreamOptions {
    /// Length of the returned chunks, s. Does not affect the events.
    pub chunk_len: f64,
    /// Seed for the common phases η. Defaults to the config seed.
    pub eta_seed: Option<u64>,
}

impl Default for StreamOptions {
    fn default() -> Self {
        Self { chunk_len: CELL_DURATION, eta_seed: None }
    }
}

pub fn n_cells(duration: f64) -> u64 {
    (duration / CELL_DURATION).ceil() as u64
}

fn cell_bounds(cell: u64, duration: f64) -> (f64, f64) {
    let start = cell as f64 * CELL_DURATION;
    let end = ((cell + 1) as f64 * CELL_DURATION).min(duration);
    (start, end)
}

/// A Poisson process of `rate` on `[start, end)`.
fn poisson_events<R: Rng>(
    rate: f64,
    (start, end): (f64, f64),
    kind: EventKind,
    detuning: &DetuningDistribution,
    rng: &mut R,
    eta_rng: &mut R,
) -> Vec<EmissionEvent> {
    let mut out = Vec::new();
    if rate <= 0.0 {
        return out;
    }
    let gaps = Exp::new(rate).expect("rate is positive");
    let mut t = start;
    loop {
        t += gaps.sample(rng);
        if t >= end {
            break;
        }
        let delta_f = detuning.sample(rng);
        let eta = eta_rng.random::<f64>() * TAU;
        out.push(EmissionEvent { kind, t_emit: t, delta_f, eta });
    }
    out
}

/// Events of one RNG cell, sorted by emission time.
pub fn generate_cell(config: &ExperimentConfig, eta_seed: u64, cell: u64) -> Vec<EmissionEvent> {
    let span = cell_bounds(cell, config.duration);
    let detuning = DetuningDistribution::from_config(config);
    let mut events = Vec::new();
    let classes = [
        (EventKind::Pair, config.pair_rate, Domain::PairEmission, Domain::EtaPair),
        (EventKind::SingleA, config.singles_rate, Domain::SingleEmissionA, Domain::EtaSingleA),
        (EventKind::SingleB, config.singles_rate, Domain::SingleEmissionB, Domain::EtaSingleB),
    ];
    for (kind, rate, domain, eta_domain) in classes {
        let mut rng = substream(config.seed, domain, cell);
        let mut eta_rng = substream(eta_seed, eta_domain, cell);
        events.extend(poisson_events(rate, span, kind, &detuning, &mut rng, &mut eta_rng));
    }
    // Stable sort keeps class order on (practically impossible) exact ties.
    events.sort_by(|a, b| a.t_emit.total_cmp(&b.t_emit));
    events
}

/// Generates the whole emission stream for `config.duration`.
///
/// Cells run in parallel on the current rayon pool; the result does not depend
/// on the pool size or on `chunk_len`.
pub fn generate_stream(config: &ExperimentConfig, options: &StreamOptions) -> Result<Vec<StreamChunk>, SourceError> {
    let chunk_len = options.chunk_len;
    if !(chunk_len > 0.0 && chunk_len.is_finite()) {
        return Err(SourceError::BadChunkLength(chunk_len));
    }
    let eta_seed = options.eta_seed.unwrap_or(config.seed);
    let cells: Vec<Vec<EmissionEvent>> =
        (0..n_cells(config.duration)).into_par_iter().map(|cell| generate_cell(config, eta_seed, cell)).collect();
    Ok(rechunk(cells.into_iter().flatten(), chunk_len, config.duration))
}

fn rechunk(events: impl Iterator<Item = EmissionEvent>, chunk_len: f64, duration: f64) -> Vec<StreamChunk> {
    let n_chunks = (duration / chunk_len).ceil() as usize;
    let mut chunks: Vec<StreamChunk> = (0..n_chunks)
        .map(|i| StreamChunk {
            t_start: i as f64 * chunk_len,
            t_end: ((i + 1) as f64 * chunk_len).min(duration),
            events: Vec::new(),
        })
        .collect();
    let mut current = 0;
    for event in events {
        while event.t_emit >= chunks[current].t_end {
            current += 1;
        }
        chunks[current].events.push(event);
    }
    chunks
}

/// Iterates over all events of a chunked stream in time order.
pub fn events(chunks: &[StreamChunk]) -> impl Iterator<Item = &EmissionEvent> + '_ {
    chunks.iter().flat_map(|c| c.events.iter())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct StreamCounts {
    pub pairs: u64,
    pub singles_a: u64,
    pub singles_b: u64,
}

pub fn count_events(chunks: &[StreamChunk]) -> StreamCounts {
    let mut counts = StreamCounts::default();
    for e in events(chunks) {
        match e.kind {
            EventKind::Pair => counts.pairs += 1,
            EventKind::SingleA => counts.singles_a += 1,
            EventKind::SingleB => counts.singles_b += 1,
        }
    }
    counts
}

/// Writes the stream as CSV with header `t_emit_ps,kind,delta_f_hz,eta_rad`.
pub fn write_events_csv<W: Write>(writer: W, chunks: &[StreamChunk]) -> Result<(), SourceError> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["t_emit_ps", "kind", "delta_f_hz", "eta_rad"])?;
    for e in events(chunks) {
        let t_ps = (e.t_emit * 1e12).round() as u64;
        out.write_record([t_ps.to_string(), e.kind.as_str().to_string(), e.delta_f.to_string(), e.eta.to_string()])?;
    }
    out.flush()?;
    Ok(())
}
