//! Time-domain picture: detector clicks with picosecond timestamps, windowed
//! coincidence matching, the three-peak delay histogram, and tag files.
//!
//! The sampler here resolves time slots explicitly; its post-selected
//! statistics are built to agree with the ensemble formulas in
//! [`crate::correlator`], and the acceptance tests check that they do.

mod coincidence;
mod simulate;
pub mod tagfile;

use serde::{Deserialize, Serialize};

use crate::model::Detector;

pub use coincidence::{
    count_coincidences, peak_areas, select_central_peak, CentralPeak, CoincidenceParams, CoincidenceResult,
    DelayHistogram, Match, PairCounts, TimetagError,
};
pub use simulate::{simulate_tags, PairOutcome, TagSimulator, TagStreams, PROPAGATION_DELAY};

/// One detector click.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TimeTag {
    /// Channel 1..=4 for D1..D4.
    pub channel: u8,
    pub t_ps: u64,
}

impl TimeTag {
    pub fn new(det: Detector, t_ps: u64) -> Self {
        Self { channel: det.channel(), t_ps }
    }

    pub fn detector(&self) -> Option<Detector> {
        Detector::from_channel(self.channel)
    }
}

/// Converts seconds to integer picoseconds, clamping negatives to zero.
pub fn seconds_to_ps(t: f64) -> u64 {
    (t * 1e12).round().max(0.0) as u64
}

pub fn ps_to_seconds(t_ps: i64) -> f64 {
    t_ps as f64 * 1e-12
}

/// Sorts tags by time, then channel.
pub fn sort_tags(tags: &mut [TimeTag]) {
    tags.sort_unstable_by_key(|t| (t.t_ps, t.channel));
}

/// Merges two time-sorted tag streams into one.
pub fn merge_sides(a: &[TimeTag], b: &[TimeTag]) -> Vec<TimeTag> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if (a[i].t_ps, a[i].channel) <= (b[j].t_ps, b[j].channel) {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// Splits a merged stream into Alice's (channels 1, 2) and Bob's (3, 4) tags.
pub fn split_sides(tags: &[TimeTag]) -> (Vec<TimeTag>, Vec<TimeTag>) {
    tags.iter().partition(|t| t.channel <= 2)
}
