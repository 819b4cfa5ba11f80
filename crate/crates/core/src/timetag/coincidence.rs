use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{seconds_to_ps, TimeTag};
use crate::model::{Detector, Side};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TimetagError {
    #[error("{side:?} tag stream is not time-sorted at index {index}")]
    Unsorted { side: Side, index: usize },
    #[error("{side:?} tag stream contains channel {channel} at index {index}")]
    WrongSide { side: Side, index: usize, channel: u8 },
}

/// Matching parameters. Times in seconds, histogram geometry in picoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceParams {
    /// Full coincidence window: a match needs `|t_B - t_A - offset| ≤ window/2`.
    pub window: f64,
    pub offset: f64,
    pub bin_width_ps: u64,
    /// Histogram half range.
    pub range_ps: u64,
}

impl CoincidenceParams {
    pub const DEFAULT_BIN_PS: u64 = 50;

    /// Histogram spanning `±2δT` around the offset.
    pub fn new(window: f64, offset: f64, delta_t: f64) -> Self {
        Self { window, offset, bin_width_ps: Self::DEFAULT_BIN_PS, range_ps: seconds_to_ps(2.0 * delta_t) }
    }
}

/// Coincidence counts per cross detector pair.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCounts {
    pub n13: u64,
    pub n14: u64,
    pub n23: u64,
    pub n24: u64,
}

impl PairCounts {
    fn slot(&mut self, a: Detector, b: Detector) -> &mut u64 {
        match (a, b) {
            (Detector::D1, Detector::D3) => &mut self.n13,
            (Detector::D1, Detector::D4) => &mut self.n14,
            (Detector::D2, Detector::D3) => &mut self.n23,
            (Detector::D2, Detector::D4) => &mut self.n24,
            _ => panic!("{a} and {b} are not a cross pair"),
        }
    }

    pub fn add(&mut self, a: Detector, b: Detector) {
        *self.slot(a, b) += 1;
    }

    pub fn get(&self, a: Detector, b: Detector) -> u64 {
        match (a, b) {
            (Detector::D1, Detector::D3) => self.n13,
            (Detector::D1, Detector::D4) => self.n14,
            (Detector::D2, Detector::D3) => self.n23,
            (Detector::D2, Detector::D4) => self.n24,
            _ => 0,
        }
    }

    pub fn total(&self) -> u64 {
        self.n13 + self.n14 + self.n23 + self.n24
    }

    pub fn fraction(&self, a: Detector, b: Detector) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.get(a, b) as f64 / n as f64,
        }
    }
}

/// One matched (A, B) click pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Match {
    pub a: TimeTag,
    pub b: TimeTag,
    /// `t_B - t_A - offset`, ps.
    pub delay_ps: i64,
}

/// Histogram of match delays; bin `i` is centred on `i * bin_width_ps`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelayHistogram {
    pub bin_width_ps: u64,
    /// Bins run from `-half_bins` to `+half_bins`.
    pub half_bins: i64,
    pub counts: Vec<u64>,
}

impl DelayHistogram {
    pub fn new(bin_width_ps: u64, range_ps: u64) -> Self {
        let bin_width_ps = bin_width_ps.max(1);
        let half_bins = range_ps.div_ceil(bin_width_ps) as i64;
        Self { bin_width_ps, half_bins, counts: vec![0; (2 * half_bins + 1) as usize] }
    }

    /// Adds a delay; returns false when it falls outside the histogram.
    pub fn add(&mut self, delay_ps: i64) -> bool {
        let w = self.bin_width_ps as i64;
        let bin = (delay_ps + w / 2).div_euclid(w);
        if bin.abs() > self.half_bins {
            return false;
        }
        self.counts[(bin + self.half_bins) as usize] += 1;
        true
    }

    /// `(bin centre in ps, count)` pairs in ascending delay.
    pub fn bins(&self) -> impl Iterator<Item = (i64, u64)> + '_ {
        let w = self.bin_width_ps as i64;
        self.counts.iter().enumerate().map(move |(i, &c)| ((i as i64 - self.half_bins) * w, c))
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Sum of bins whose centre lies within `[lo, hi)`.
    pub fn area(&self, lo_ps: i64, hi_ps: i64) -> u64 {
        self.bins().filter(|&(d, _)| d >= lo_ps && d < hi_ps).map(|(_, c)| c).sum()
    }

    /// Writes `delay_ps,count` CSV.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["delay_ps", "count"])?;
        for (d, c) in self.bins() {
            out.write_record([d.to_string(), c.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Areas of the `-δT`, `0` and `+δT` peaks, each integrated over `±δT/2`.
pub fn peak_areas(hist: &DelayHistogram, delta_t_ps: i64) -> [u64; 3] {
    let half = delta_t_ps / 2;
    [-delta_t_ps, 0, delta_t_ps].map(|c| hist.area(c - half, c + half))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoincidenceResult {
    pub counts: PairCounts,
    pub histogram: DelayHistogram,
    pub matches: Vec<Match>,
}

fn check_stream(tags: &[TimeTag], side: Side) -> Result<(), TimetagError> {
    for (index, t) in tags.iter().enumerate() {
        if t.detector().map(|d| d.side()) != Some(side) {
            return Err(TimetagError::WrongSide { side, index, channel: t.channel });
        }
        if index > 0 && tags[index - 1].t_ps > t.t_ps {
            return Err(TimetagError::Unsorted { side, index });
        }
    }
    Ok(())
}

/// Greedy nearest-neighbour coincidence matching by a two-pointer sweep.
///
/// Alice's tags are visited in time order; each takes the closest unused Bob
/// tag inside the window. No tag is used twice.
pub fn count_coincidences(
    tags_a: &[TimeTag],
    tags_b: &[TimeTag],
    params: &CoincidenceParams,
) -> Result<CoincidenceResult, TimetagError> {
    check_stream(tags_a, Side::A)?;
    check_stream(tags_b, Side::B)?;

    // Compare 2|d| with the full window to stay in integer picoseconds.
    let window2 = seconds_to_ps(params.window) as i64;
    let offset = (params.offset * 1e12).round() as i64;
    let mut used = vec![false; tags_b.len()];
    let mut lo = 0usize;
    let mut counts = PairCounts::default();
    let mut histogram = DelayHistogram::new(params.bin_width_ps, params.range_ps);
    let mut matches = Vec::new();

    for a in tags_a {
        let target = a.t_ps as i64 + offset;
        while lo < tags_b.len() && 2 * (target - tags_b[lo].t_ps as i64) > window2 {
            lo += 1;
        }
        let mut best: Option<(usize, i64)> = None;
        let mut j = lo;
        while j < tags_b.len() {
            let d = tags_b[j].t_ps as i64 - target;
            if 2 * d > window2 {
                break;
            }
            if !used[j] && best.is_none_or(|(_, bd)| d.abs() < bd.abs()) {
                best = Some((j, d));
            }
            j += 1;
        }
        if let Some((j, delay_ps)) = best {
            used[j] = true;
            let b = tags_b[j];
            counts.add(a.detector().expect("checked"), b.detector().expect("checked"));
            histogram.add(delay_ps);
            matches.push(Match { a: *a, b, delay_ps });
        }
    }
    Ok(CoincidenceResult { counts, histogram, matches })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CentralPeak {
    pub counts: PairCounts,
    pub warnings: Vec<String>,
}

/// Post-selection: keeps matches with `|delay| ≤ window/2`.
///
/// Warns when the window reaches the satellite peaks at `±delta_t`.
pub fn select_central_peak(matches: &[Match], window: f64, delta_t: Option<f64>) -> CentralPeak {
    let window2 = seconds_to_ps(window) as i64;
    let mut counts = PairCounts::default();
    for m in matches.iter().filter(|m| 2 * m.delay_ps.abs() <= window2) {
        counts.add(m.a.detector().expect("matched tags are valid"), m.b.detector().expect("matched tags are valid"));
    }
    let mut warnings = Vec::new();
    if let Some(dt) = delta_t {
        if window >= dt {
            warnings.push(format!(
                "post-selection loophole: satellites included (window {window:e} s >= delta_t {dt:e} s)"
            ));
        }
    }
    CentralPeak { counts, warnings }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tag(ch: u8, t: u64) -> TimeTag {
        TimeTag { channel: ch, t_ps: t }
    }

    #[test]
    fn empty_streams() {
        let r = count_coincidences(&[], &[], &CoincidenceParams::new(2e-9, 0.0, 10e-9)).unwrap();
        assert_eq!(r.counts.total(), 0);
        assert_eq!(r.histogram.total(), 0);
        assert!(r.matches.is_empty());
    }

    #[test]
    fn window_semantics() {
        let a = [tag(1, 1_000_000)];
        let b = [tag(3, 1_001_000)];
        let wide = count_coincidences(&a, &b, &CoincidenceParams::new(3e-9, 0.0, 10e-9)).unwrap();
        assert_eq!(wide.counts.n13, 1);
        assert_eq!(wide.matches[0].delay_ps, 1000);
        let narrow = count_coincidences(&a, &b, &CoincidenceParams::new(1e-9, 0.0, 10e-9)).unwrap();
        assert_eq!(narrow.counts.total(), 0);
        // Window edge is inclusive.
        let edge = count_coincidences(&a, &b, &CoincidenceParams::new(2e-9, 0.0, 10e-9)).unwrap();
        assert_eq!(edge.counts.total(), 1);
        // The offset shifts the window centre.
        let shifted = count_coincidences(&a, &b, &CoincidenceParams::new(1e-9, 1e-9, 10e-9)).unwrap();
        assert_eq!(shifted.matches[0].delay_ps, 0);
    }

    #[test]
    fn greedy_nearest_and_single_use() {
        let a = [tag(1, 1000), tag(2, 1100)];
        let b = [tag(3, 1090), tag(4, 1150)];
        let r = count_coincidences(&a, &b, &CoincidenceParams::new(400e-12, 0.0, 1e-9)).unwrap();
        assert_eq!(r.matches.len(), 2);
        assert_eq!(r.matches[0].b.t_ps, 1090);
        assert_eq!(r.matches[1].b.t_ps, 1150);
        assert_eq!(r.counts, PairCounts { n13: 1, n14: 0, n23: 0, n24: 1 });
    }

    #[test]
    fn errors() {
        let unsorted = [tag(1, 10), tag(2, 5)];
        assert_eq!(
            count_coincidences(&unsorted, &[], &CoincidenceParams::new(1e-9, 0.0, 1e-9)).unwrap_err(),
            TimetagError::Unsorted { side: Side::A, index: 1 }
        );
        let wrong = [tag(3, 10)];
        assert!(matches!(
            count_coincidences(&wrong, &[], &CoincidenceParams::new(1e-9, 0.0, 1e-9)),
            Err(TimetagError::WrongSide { .. })
        ));
    }

    #[test]
    fn histogram_geometry() {
        let mut h = DelayHistogram::new(100, 1000);
        assert_eq!(h.counts.len(), 21);
        assert!(h.add(0));
        assert!(h.add(49));
        assert!(h.add(-51));
        assert!(h.add(1049));
        assert!(!h.add(1050));
        let bins: Vec<_> = h.bins().filter(|b| b.1 > 0).collect();
        assert_eq!(bins, vec![(-100, 1), (0, 2), (1000, 1)]);
        assert_eq!(h.total(), 4);
        let mut csv = Vec::new();
        h.write_csv(&mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().starts_with("delay_ps,count\n-1000,0\n"));
    }

    #[test]
    fn central_peak_selection() {
        let m = |a: u8, b: u8, d: i64| Match { a: tag(a, 0), b: tag(b, d.max(0) as u64), delay_ps: d };
        let matches = [m(1, 3, 0), m(1, 4, 10_000), m(2, 4, -10_000), m(2, 3, 300)];
        let central = select_central_peak(&matches, 2e-9, Some(10e-9));
        assert_eq!(central.counts, PairCounts { n13: 1, n14: 0, n23: 1, n24: 0 });
        assert!(central.warnings.is_empty());
        let all = select_central_peak(&matches, 30e-9, Some(10e-9));
        assert_eq!(all.counts.total(), 4);
        assert!(all.warnings[0].contains("satellites included"));
    }
}
