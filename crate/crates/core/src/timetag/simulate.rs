use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;

use super::{seconds_to_ps, sort_tags, TimeTag};
use crate::correlator::{joint_coincident_prob, JointSetting};
use crate::model::{Detector, EmissionEvent, EventKind, ExperimentConfig, PhaseSettings, Side};
use crate::rng::{substream, Domain};
use crate::source::{StreamChunk, CELL_DURATION};

/// Fixed source-to-detector propagation time, s.
pub const PROPAGATION_DELAY: f64 = 100e-9;

/// Relative time-bin outcome of one pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum PairOutcome {
    /// Both short or both long; the two cannot be told apart.
    Coincident,
    /// Alice short, Bob long: Bob's click is late by `δT`.
    AliceEarly,
    /// Alice long, Bob short.
    AliceLate,
}

/// Clicks from the two UMZIs, each time-sorted.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TagStreams {
    pub a: Vec<TimeTag>,
    pub b: Vec<TimeTag>,
}

/// Per-event click sampler.
#[derive(Debug, Clone)]
pub struct TagSimulator<'a> {
    config: &'a ExperimentConfig,
    settings: PhaseSettings,
    delta_t: f64,
    jitter: Option<Normal<f64>>,
    /// The four cross pairs at zero delay.
    pairs: [JointSetting; 4],
}

impl<'a> TagSimulator<'a> {
    pub fn new(config: &'a ExperimentConfig, settings: PhaseSettings) -> Self {
        let jitter = (config.t_res > 0.0).then(|| Normal::new(0.0, config.t_res).expect("t_res validated"));
        let pairs = JointSetting::cross_pairs()
            .map(|(a, b)| JointSetting::new(a, b, settings, 0.0).expect("cross pairs are valid"));
        Self { config, settings, delta_t: config.delay(), jitter, pairs }
    }

    pub fn settings(&self) -> &PhaseSettings {
        &self.settings
    }

    fn click<R: Rng>(&self, det: Detector, t: f64, rng: &mut R) -> TimeTag {
        let jitter = self.jitter.map_or(0.0, |n| n.sample(rng));
        TimeTag::new(det, seconds_to_ps(t + jitter))
    }

    pub fn draw_outcome<R: Rng>(rng: &mut R) -> PairOutcome {
        let u: f64 = rng.random();
        if u < 0.5 {
            PairOutcome::Coincident
        } else if u < 0.75 {
            PairOutcome::AliceEarly
        } else {
            PairOutcome::AliceLate
        }
    }

    fn coincident_detectors<R: Rng>(&self, delta_f: f64, rng: &mut R) -> (Detector, Detector) {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for js in &self.pairs {
            acc += joint_coincident_prob(js, delta_f, self.config.mode).expect("valid pair");
            if u < acc {
                return (js.det_a, js.det_b);
            }
        }
        let last = self.pairs[3];
        (last.det_a, last.det_b)
    }

    fn uniform_detector<R: Rng>(side: Side, rng: &mut R) -> Detector {
        Detector::of_side(side)[rng.random_range(0..2)]
    }

    /// Clicks `(alice, bob)` for one pair with a drawn outcome.
    pub fn pair<R: Rng>(&self, event: &EmissionEvent, rng: &mut R) -> (PairOutcome, TimeTag, TimeTag) {
        let outcome = Self::draw_outcome(rng);
        let (a, b) = self.pair_with_outcome(event, outcome, rng);
        (outcome, a, b)
    }

    pub fn pair_with_outcome<R: Rng>(
        &self,
        event: &EmissionEvent,
        outcome: PairOutcome,
        rng: &mut R,
    ) -> (TimeTag, TimeTag) {
        let t0 = event.t_emit + PROPAGATION_DELAY;
        let dt = self.delta_t;
        let (det_a, det_b, t_a, t_b) = match outcome {
            PairOutcome::Coincident => {
                let (da, db) = self.coincident_detectors(event.delta_f, rng);
                // One shared slot: SS and LL are not resolvable.
                let slot = if rng.random_bool(0.5) { dt } else { 0.0 };
                (da, db, t0 + slot, t0 + slot)
            }
            PairOutcome::AliceEarly => {
                let da = Self::uniform_detector(Side::A, rng);
                let db = Self::uniform_detector(Side::B, rng);
                (da, db, t0, t0 + dt)
            }
            PairOutcome::AliceLate => {
                let da = Self::uniform_detector(Side::A, rng);
                let db = Self::uniform_detector(Side::B, rng);
                (da, db, t0 + dt, t0)
            }
        };
        (self.click(det_a, t_a, rng), self.click(det_b, t_b, rng))
    }

    /// Click of an uncorrelated single: uniform detector and slot.
    pub fn single<R: Rng>(&self, side: Side, event: &EmissionEvent, rng: &mut R) -> TimeTag {
        let det = Self::uniform_detector(side, rng);
        let slot = if rng.random_bool(0.5) { self.delta_t } else { 0.0 };
        self.click(det, event.t_emit + PROPAGATION_DELAY + slot, rng)
    }

    fn cell(&self, cell: u64, events: &[EmissionEvent]) -> TagStreams {
        let mut pair_rng: ChaCha8Rng = substream(self.config.seed, Domain::PairTags, cell);
        let mut single_rng: ChaCha8Rng = substream(self.config.seed, Domain::SingleTags, cell);
        let mut out = TagStreams::default();
        for event in events {
            match event.kind {
                EventKind::Pair => {
                    let (_, a, b) = self.pair(event, &mut pair_rng);
                    out.a.push(a);
                    out.b.push(b);
                }
                EventKind::SingleA => out.a.push(self.single(Side::A, event, &mut single_rng)),
                EventKind::SingleB => out.b.push(self.single(Side::B, event, &mut single_rng)),
            }
        }
        out
    }
}

fn cell_of(t: f64) -> u64 {
    (t / CELL_DURATION).floor() as u64
}

/// Drops tags closer than `dead_ps` to the previous kept tag on their channel.
fn apply_dead_time(tags: Vec<TimeTag>, dead_ps: u64) -> Vec<TimeTag> {
    if dead_ps == 0 {
        return tags;
    }
    let mut last: [Option<u64>; 5] = [None; 5];
    tags.into_iter()
        .filter(|t| {
            let slot = &mut last[t.channel as usize];
            match *slot {
                Some(prev) if t.t_ps - prev < dead_ps => false,
                _ => {
                    *slot = Some(t.t_ps);
                    true
                }
            }
        })
        .collect()
}

/// Samples detector clicks for every event of `stream`.
///
/// Random draws are keyed by the fixed RNG cell of each event's emission time,
/// so the tags do not depend on how the stream was chunked or on thread count.
pub fn simulate_tags(config: &ExperimentConfig, settings: &PhaseSettings, stream: &[StreamChunk]) -> TagStreams {
    let sim = TagSimulator::new(config, *settings);

    let events: Vec<&EmissionEvent> = stream.iter().flat_map(|c| c.events.iter()).collect();
    let mut groups: Vec<(u64, Vec<EmissionEvent>)> = Vec::new();
    for e in events {
        let cell = cell_of(e.t_emit);
        match groups.last_mut() {
            Some((c, group)) if *c == cell => group.push(*e),
            _ => groups.push((cell, vec![*e])),
        }
    }

    let parts: Vec<TagStreams> = groups.par_iter().map(|(cell, events)| sim.cell(*cell, events)).collect();

    let mut a: Vec<TimeTag> = parts.iter().flat_map(|p| p.a.iter().copied()).collect();
    let mut b: Vec<TimeTag> = parts.iter().flat_map(|p| p.b.iter().copied()).collect();
    sort_tags(&mut a);
    sort_tags(&mut b);
    let dead_ps = seconds_to_ps(config.dead_time);
    TagStreams { a: apply_dead_time(a, dead_ps), b: apply_dead_time(b, dead_ps) }
}
