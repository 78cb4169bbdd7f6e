//! Anomaly detection against a trained self-information reference.
//!
//! Two modes:
//!
//! * **streaming** — every consecutive bin pair is scored with one O(1)
//!   LUT lookup and flagged when the score exceeds the threshold. This is
//!   the default; it is the only mode whose per-message cost stays in the
//!   nanosecond range.
//! * **windowed** — a self-information matrix is built over each sliding
//!   window of the test stream and compared cell-wise against the
//!   reference; the window is flagged on the largest absolute difference
//!   over visited cells.
//!
//! Optional online adaptation keeps a decaying copy of the counts and
//! folds in accepted transitions only, so flagged traffic can never
//! poison the reference.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::simatrix::{SelfInfoMatrix, TransitionCounts};

/// Margin added on top of the calibration quantile, in bits.
pub const CALIBRATION_MARGIN_BITS: f64 = 1.0;

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("fewer than 2 samples")]
    TooFewSamples,
    #[error("window length {window} exceeds trace length {trace}")]
    WindowExceedsTrace { window: usize, trace: usize },
    #[error("window length must be at least 2, got {0}")]
    WindowTooShort(usize),
    #[error("calibration quantile must be in (0, 1], got {0}")]
    InvalidQuantile(f64),
    #[error(
        "calibrated threshold {theta} bits reaches e_max {e_max}; \
         unseen transitions could no longer fire (epsilon too large or quantile degenerate)"
    )]
    ThresholdReachesCeiling { theta: f64, e_max: f64 },
    #[error("detection threshold must be positive, got {0}")]
    InvalidThreshold(f64),
    #[error("decay factor lambda must be in (0, 1), got {0}")]
    InvalidLambda(f64),
    #[error("epsilon must be in (0, 1), got {0}")]
    InvalidEpsilon(f64),
    #[error("per-row transition totals above {limit} cannot adapt online")]
    CountsTooLarge { limit: u64 },
    #[error("refusing to update reference with flagged transition ({prev} -> {cur}), score {score:.3} > threshold {theta:.3}")]
    UpdateOnFlaggedTransition {
        prev: usize,
        cur: usize,
        score: f64,
        theta: f64,
    },
    #[error("timestamps length {timestamps} does not match bins length {bins}")]
    TimestampMismatch { timestamps: usize, bins: usize },
    #[error("bin {bin} out of range for order {order}")]
    BinOutOfRange { bin: usize, order: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectorMode {
    Streaming,
    Windowed,
}

impl fmt::Display for DetectorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DetectorMode::Streaming => write!(f, "streaming"),
            DetectorMode::Windowed => write!(f, "windowed"),
        }
    }
}

impl std::str::FromStr for DetectorMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "streaming" => Ok(DetectorMode::Streaming),
            "windowed" => Ok(DetectorMode::Windowed),
            other => Err(format!("unknown mode {other:?} (expected streaming|windowed)")),
        }
    }
}

/// Online reference adaptation policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OnlineUpdate {
    Off,
    /// Exponential decay with per-transition retention factor in (0, 1).
    Decay { lambda: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    pub mode: DetectorMode,
    pub threshold_bits: f64,
    pub window_len: usize,
    pub calibration_quantile: f64,
    pub online_update: OnlineUpdate,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            mode: DetectorMode::Streaming,
            threshold_bits: 8.0,
            window_len: 64,
            calibration_quantile: 0.999,
            online_update: OnlineUpdate::Off,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), DetectorError> {
        if self.threshold_bits.is_nan() || self.threshold_bits <= 0.0 {
            return Err(DetectorError::InvalidThreshold(self.threshold_bits));
        }
        if self.mode == DetectorMode::Windowed && self.window_len < 2 {
            return Err(DetectorError::WindowTooShort(self.window_len));
        }
        if !(self.calibration_quantile > 0.0 && self.calibration_quantile <= 1.0) {
            return Err(DetectorError::InvalidQuantile(self.calibration_quantile));
        }
        if let OnlineUpdate::Decay { lambda } = self.online_update {
            if !(lambda > 0.0 && lambda < 1.0) {
                return Err(DetectorError::InvalidLambda(lambda));
            }
        }
        Ok(())
    }
}

/// One detection. `score_bits` is the transition's self-information in
/// streaming mode and the window's aggregate matrix difference in
/// windowed mode; it always exceeds the threshold at emission.
#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyEvent {
    pub sample_index: usize,
    pub timestamp: f64,
    pub prev_bin: usize,
    pub cur_bin: usize,
    pub score_bits: f64,
    pub mode: DetectorMode,
}

impl AnomalyEvent {
    /// `index,timestamp,prev_bin,cur_bin,score_bits,mode` with scores at
    /// 6 decimal places.
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{:.6},{},{},{:.6},{}",
            self.sample_index, self.timestamp, self.prev_bin, self.cur_bin, self.score_bits, self.mode
        )
    }

    pub fn from_csv_line(line: &str) -> Result<Self, String> {
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != 6 {
            return Err(format!("expected 6 columns, got {}", fields.len()));
        }
        Ok(Self {
            sample_index: fields[0].parse().map_err(|_| format!("bad index {:?}", fields[0]))?,
            timestamp: fields[1].parse().map_err(|_| format!("bad timestamp {:?}", fields[1]))?,
            prev_bin: fields[2].parse().map_err(|_| format!("bad prev_bin {:?}", fields[2]))?,
            cur_bin: fields[3].parse().map_err(|_| format!("bad cur_bin {:?}", fields[3]))?,
            score_bits: fields[4].parse().map_err(|_| format!("bad score {:?}", fields[4]))?,
            mode: fields[5].parse()?,
        })
    }
}

/// Pick the detection threshold from the training data itself.
///
/// Theta is the nearest-rank `quantile` of the self-information scores of
/// every consecutive training transition, plus a 1-bit margin. With
/// `quantile = 1.0` the margin makes re-detection of the training trace
/// produce exactly zero events. Errors if theta would reach `e_max`,
/// since unseen transitions must always stay above the threshold.
pub fn calibrate_threshold(
    reference: &SelfInfoMatrix,
    training_bins: &[usize],
    quantile: f64,
) -> Result<f64, DetectorError> {
    if training_bins.len() < 2 {
        return Err(DetectorError::TooFewSamples);
    }
    if !(quantile > 0.0 && quantile <= 1.0) {
        return Err(DetectorError::InvalidQuantile(quantile));
    }
    let order = reference.order();
    if let Some(&bad) = training_bins.iter().find(|&&b| b >= order) {
        return Err(DetectorError::BinOutOfRange { bin: bad, order });
    }
    let mut scores: Vec<f64> = training_bins
        .windows(2)
        .map(|w| reference.value(w[0], w[1]))
        .collect();
    scores.sort_by(|a, b| a.total_cmp(b));
    let theta = nearest_rank_quantile(&scores, quantile) + CALIBRATION_MARGIN_BITS;
    if theta >= reference.e_max() {
        return Err(DetectorError::ThresholdReachesCeiling {
            theta,
            e_max: reference.e_max(),
        });
    }
    Ok(theta)
}

/// Nearest-rank quantile over an ascending-sorted slice: the element at
/// rank `ceil(q * n)` (1-based). `q = 1.0` is exactly the maximum.
fn nearest_rank_quantile(sorted: &[f64], q: f64) -> f64 {
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

fn check_lengths(bins: &[usize], timestamps: Option<&[f64]>) -> Result<(), DetectorError> {
    if bins.len() < 2 {
        return Err(DetectorError::TooFewSamples);
    }
    if let Some(ts) = timestamps {
        if ts.len() != bins.len() {
            return Err(DetectorError::TimestampMismatch {
                timestamps: ts.len(),
                bins: bins.len(),
            });
        }
    }
    Ok(())
}

#[inline]
fn stamp(timestamps: Option<&[f64]>, index: usize) -> f64 {
    match timestamps {
        Some(ts) => ts[index],
        None => index as f64,
    }
}

/// Streaming detection: one LUT lookup and one compare per transition.
///
/// An event carries the index of the transition's *current* sample, so a
/// single altered sample k produces events at k (entry) and k+1 (exit).
/// Single pass; nothing is allocated on the hot path except the event
/// list itself.
pub fn detect_streaming(
    reference: &SelfInfoMatrix,
    theta: f64,
    bins: &[usize],
    timestamps: Option<&[f64]>,
) -> Result<Vec<AnomalyEvent>, DetectorError> {
    check_lengths(bins, timestamps)?;
    let order = reference.order();
    if let Some(&bad) = bins.iter().find(|&&b| b >= order) {
        return Err(DetectorError::BinOutOfRange { bin: bad, order });
    }
    let mut events = Vec::new();
    for i in 1..bins.len() {
        let score = reference.value(bins[i - 1], bins[i]);
        if score > theta {
            events.push(AnomalyEvent {
                sample_index: i,
                timestamp: stamp(timestamps, i),
                prev_bin: bins[i - 1],
                cur_bin: bins[i],
                score_bits: score,
                mode: DetectorMode::Streaming,
            });
        }
    }
    Ok(events)
}

/// Windowed detection: slide windows of `window_len` samples with stride
/// `window_len / 2` (minimum 1), build a window-local self-information
/// matrix with the reference's epsilon, and flag the window when the
/// largest |E_test - E_ref| over visited cells exceeds `theta_w`.
///
/// A tail window ending at the last sample is always evaluated so the end
/// of the trace is covered regardless of stride alignment. At most one
/// event is emitted per window, at the window's start index, carrying the
/// worst-offending cell.
pub fn detect_windowed(
    reference: &SelfInfoMatrix,
    theta_w: f64,
    bins: &[usize],
    timestamps: Option<&[f64]>,
    window_len: usize,
) -> Result<Vec<AnomalyEvent>, DetectorError> {
    if window_len < 2 {
        return Err(DetectorError::WindowTooShort(window_len));
    }
    check_lengths(bins, timestamps)?;
    if bins.len() < window_len {
        return Err(DetectorError::WindowExceedsTrace {
            window: window_len,
            trace: bins.len(),
        });
    }
    let order = reference.order();
    if let Some(&bad) = bins.iter().find(|&&b| b >= order) {
        return Err(DetectorError::BinOutOfRange { bin: bad, order });
    }

    let stride = (window_len / 2).max(1);
    let last_start = bins.len() - window_len;
    let mut events = Vec::new();
    let mut start = 0;
    loop {
        let window = &bins[start..start + window_len];
        if let Some((score, prev, cur)) = window_difference(reference, window) {
            if score > theta_w {
                events.push(AnomalyEvent {
                    sample_index: start,
                    timestamp: stamp(timestamps, start),
                    prev_bin: prev,
                    cur_bin: cur,
                    score_bits: score,
                    mode: DetectorMode::Windowed,
                });
            }
        }
        if start == last_start {
            break;
        }
        start = (start + stride).min(last_start);
    }
    Ok(events)
}

/// Max |E_test - E_ref| over the cells visited by this window, with the
/// argmax cell. BTreeMaps keep the scan order deterministic.
fn window_difference(
    reference: &SelfInfoMatrix,
    window: &[usize],
) -> Option<(f64, usize, usize)> {
    let mut cell_counts: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut row_totals: BTreeMap<usize, u64> = BTreeMap::new();
    for pair in window.windows(2) {
        *cell_counts.entry((pair[0], pair[1])).or_insert(0) += 1;
        *row_totals.entry(pair[0]).or_insert(0) += 1;
    }
    let mut best: Option<(f64, usize, usize)> = None;
    for (&(prev, cur), &count) in &cell_counts {
        let total = row_totals[&prev] as f64;
        let e_test = (total / count as f64).log2();
        let diff = (e_test - reference.value(prev, cur)).abs();
        if best.is_none_or(|(b, _, _)| diff > b) {
            best = Some((diff, prev, cur));
        }
    }
    best
}

const FP_SHIFT: u32 = 32;
/// One observation in fixed-point weight units.
pub const FP_ONE: u64 = 1 << FP_SHIFT;
const LAMBDA_SHIFT: u32 = 32;

/// Decaying copy of the reference counts for online adaptation.
///
/// Weights are integers in units of 2^-32 observations; the decay factor
/// is quantized to 2^-32. The wide fixed point matters: the decay
/// multiply rounds down, and that floor must stay far below the true
/// per-update decay or rarely-seen cells would bleed away no matter how
/// close lambda is to 1. Row totals are recomputed as the exact sum of
/// the row during every decay pass, so the bookkeeping never drifts from
/// the cells and row probabilities always normalize. Derived
/// self-information values are cached per row and refreshed lazily, only
/// for rows that changed.
#[derive(Debug, Clone)]
pub struct AdaptiveReference {
    order: usize,
    epsilon: f64,
    e_max: f64,
    lambda_fp: u64,
    weights: Vec<u64>,
    row_totals: Vec<u64>,
    row_values: Vec<f64>,
    row_dirty: Vec<bool>,
}

impl AdaptiveReference {
    pub fn from_counts(
        counts: &TransitionCounts,
        epsilon: f64,
        lambda: f64,
    ) -> Result<Self, DetectorError> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(DetectorError::InvalidLambda(lambda));
        }
        let lambda_fp = (lambda * (1u64 << LAMBDA_SHIFT) as f64).round() as u64;
        if lambda_fp == 0 || lambda_fp >= (1u64 << LAMBDA_SHIFT) {
            return Err(DetectorError::InvalidLambda(lambda));
        }
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(DetectorError::InvalidEpsilon(epsilon));
        }
        let order = counts.order();
        // row totals in fixed point must fit u64
        if (0..order).any(|j| counts.row_total(j) > u64::from(u32::MAX)) {
            return Err(DetectorError::CountsTooLarge {
                limit: u64::from(u32::MAX),
            });
        }
        let weights: Vec<u64> = counts.cells().iter().map(|&c| c << FP_SHIFT).collect();
        let row_totals = (0..order).map(|j| counts.row_total(j) << FP_SHIFT).collect();
        let e_max = -epsilon.log2();
        Ok(Self {
            order,
            epsilon,
            e_max,
            lambda_fp,
            weights,
            row_totals,
            row_values: vec![e_max; order * order],
            row_dirty: vec![true; order],
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn e_max(&self) -> f64 {
        self.e_max
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    fn refresh_row(&mut self, row: usize) {
        let total = self.row_totals[row];
        let cells = &self.weights[row * self.order..(row + 1) * self.order];
        let out = &mut self.row_values[row * self.order..(row + 1) * self.order];
        if total == 0 {
            out.fill(self.e_max);
        } else {
            let total_f = total as f64;
            for (v, &w) in out.iter_mut().zip(cells) {
                *v = if w > 0 {
                    (total_f / w as f64).log2()
                } else {
                    self.e_max
                };
            }
        }
        self.row_dirty[row] = false;
    }

    /// Current self-information of a transition. Heavily decayed cells can
    /// score above `e_max`; unseen cells score exactly `e_max`.
    pub fn score(&mut self, prev: usize, cur: usize) -> f64 {
        if self.row_dirty[prev] {
            self.refresh_row(prev);
        }
        self.row_values[prev * self.order + cur]
    }

    /// Empirical probability of (prev -> cur) under the decayed weights.
    pub fn probability(&self, prev: usize, cur: usize) -> f64 {
        let total = self.row_totals[prev];
        if total == 0 {
            return 0.0;
        }
        self.weights[prev * self.order + cur] as f64 / total as f64
    }

    /// Fold one *accepted* transition into the reference: decay row `prev`
    /// by lambda, then add one observation to the (prev, cur) cell.
    ///
    /// Calling this with a transition that scores above `theta` is a
    /// contract violation and returns an error: anomalies must never
    /// poison the reference.
    pub fn update(&mut self, prev: usize, cur: usize, theta: f64) -> Result<(), DetectorError> {
        let score = self.score(prev, cur);
        if score > theta {
            return Err(DetectorError::UpdateOnFlaggedTransition {
                prev,
                cur,
                score,
                theta,
            });
        }
        let row = &mut self.weights[prev * self.order..(prev + 1) * self.order];
        let mut total: u64 = 0;
        for w in row.iter_mut() {
            *w = ((u128::from(*w) * u128::from(self.lambda_fp)) >> LAMBDA_SHIFT) as u64;
            total += *w;
        }
        row[cur] += FP_ONE;
        self.row_totals[prev] = total + FP_ONE;
        self.row_dirty[prev] = true;
        Ok(())
    }
}

/// Streaming detection with online adaptation: accepted transitions decay
/// into the reference, flagged ones are reported and left out.
pub fn detect_streaming_adaptive(
    counts: &TransitionCounts,
    epsilon: f64,
    lambda: f64,
    theta: f64,
    bins: &[usize],
    timestamps: Option<&[f64]>,
) -> Result<Vec<AnomalyEvent>, DetectorError> {
    check_lengths(bins, timestamps)?;
    let mut reference = AdaptiveReference::from_counts(counts, epsilon, lambda)?;
    let order = reference.order();
    if let Some(&bad) = bins.iter().find(|&&b| b >= order) {
        return Err(DetectorError::BinOutOfRange { bin: bad, order });
    }
    let mut events = Vec::new();
    for i in 1..bins.len() {
        let (prev, cur) = (bins[i - 1], bins[i]);
        let score = reference.score(prev, cur);
        if score > theta {
            events.push(AnomalyEvent {
                sample_index: i,
                timestamp: stamp(timestamps, i),
                prev_bin: prev,
                cur_bin: cur,
                score_bits: score,
                mode: DetectorMode::Streaming,
            });
        } else {
            reference
                .update(prev, cur, theta)
                .expect("transition already checked against threshold");
        }
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simatrix::{derive_self_info, train, DEFAULT_EPSILON};
    use proptest::prelude::*;

    fn cycle_bins(len: usize) -> Vec<usize> {
        (0..len).map(|i| i % 4).collect()
    }

    #[test]
    fn calibrate_on_deterministic_cycle() {
        let bins = cycle_bins(32);
        let m = derive_self_info(&train(&bins, 4).unwrap(), DEFAULT_EPSILON).unwrap();
        // All seen scores are 0 bits, so theta is exactly the margin.
        assert_eq!(calibrate_threshold(&m, &bins, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn quantile_oracle_on_four_scores() {
        // Scores {1,1,1,2} bits at q = 0.75: the quantile is 1 bit, so the
        // calibrated threshold is 2.0 bits once the margin is added.
        let sorted = [1.0, 1.0, 1.0, 2.0];
        assert_eq!(nearest_rank_quantile(&sorted, 0.75) + CALIBRATION_MARGIN_BITS, 2.0);
        assert_eq!(nearest_rank_quantile(&sorted, 1.0), 2.0);
        assert_eq!(nearest_rank_quantile(&sorted, 0.1), 1.0);
    }

    #[test]
    fn calibrate_uses_nearest_rank_quantile() {
        let bins = [0usize, 1, 0, 1, 0, 1, 0, 2, 0];
        // pairs from row 0: (0,1) x3, (0,2) x1 -> scores log2(4/3), 2.0
        // pairs from rows 1,2: (1,0) x3, (2,0) x1 -> scores 0.0
        let m = derive_self_info(&train(&bins, 4).unwrap(), DEFAULT_EPSILON).unwrap();
        let theta = calibrate_threshold(&m, &bins, 0.75).unwrap();
        // sorted scores: [0,0,0,0,log2(4/3),log2(4/3),log2(4/3),2.0]
        // rank ceil(0.75*8)=6 -> log2(4/3); plus margin
        assert!((theta - ((4.0f64 / 3.0).log2() + 1.0)).abs() < 1e-12);
        let theta_max = calibrate_threshold(&m, &bins, 1.0).unwrap();
        assert_eq!(theta_max, 3.0); // max score 2.0 + margin
    }

    #[test]
    fn calibrate_rejects_threshold_at_e_max() {
        let bins = cycle_bins(16);
        // epsilon = 0.5 -> e_max = 1 bit; even all-zero scores + margin hit it.
        let m = derive_self_info(&train(&bins, 4).unwrap(), 0.5).unwrap();
        assert!(matches!(
            calibrate_threshold(&m, &bins, 1.0),
            Err(DetectorError::ThresholdReachesCeiling { .. })
        ));
    }

    #[test]
    fn calibrate_rejects_bad_quantile() {
        let bins = cycle_bins(16);
        let m = derive_self_info(&train(&bins, 4).unwrap(), DEFAULT_EPSILON).unwrap();
        assert!(matches!(
            calibrate_threshold(&m, &bins, 0.0),
            Err(DetectorError::InvalidQuantile(_))
        ));
        assert!(matches!(
            calibrate_threshold(&m, &bins, 1.1),
            Err(DetectorError::InvalidQuantile(_))
        ));
    }

    #[test]
    fn training_trace_is_event_free_at_full_quantile() {
        let bins = cycle_bins(128);
        let m = derive_self_info(&train(&bins, 4).unwrap(), DEFAULT_EPSILON).unwrap();
        let theta = calibrate_threshold(&m, &bins, 1.0).unwrap();
        assert!(detect_streaming(&m, theta, &bins, None).unwrap().is_empty());
    }

    /// Brute-force scoring of every transition in a toy trace, independent
    /// of the detector's pass.
    fn brute_force_events(m: &SelfInfoMatrix, theta: f64, bins: &[usize]) -> Vec<usize> {
        (1..bins.len())
            .filter(|&i| m.value(bins[i - 1], bins[i]) > theta)
            .collect()
    }

    #[test]
    fn single_altered_sample_fires_entry_and_exit() {
        // 100-sample cycle with sample 50 replaced by a bin that never
        // follows its predecessor in training.
        let train_bins = cycle_bins(100);
        let m = derive_self_info(&train(&train_bins, 8).unwrap(), DEFAULT_EPSILON).unwrap();
        let theta = calibrate_threshold(&m, &train_bins, 1.0).unwrap();

        let mut test_bins = train_bins.clone();
        test_bins[50] = 7; // never observed anywhere in training
        let events = detect_streaming(&m, theta, &test_bins, None).unwrap();
        let indices: Vec<usize> = events.iter().map(|e| e.sample_index).collect();
        assert_eq!(indices, vec![50, 51]);
        assert_eq!(indices, brute_force_events(&m, theta, &test_bins));
        for e in &events {
            assert!(e.score_bits > theta);
            assert_eq!(e.score_bits, 20.0); // unseen scores e_max exactly
        }
    }

    #[test]
    fn replayed_segment_fires_at_junctions() {
        // Training walks slowly up and down; replaying a distant segment
        // creates junction transitions that were never observed.
        let train_bins: Vec<usize> = (0..200)
            .map(|i| {
                let phase = i % 40;
                if phase < 20 { phase } else { 40 - phase }
            })
            .collect();
        let m = derive_self_info(&train(&train_bins, 24).unwrap(), DEFAULT_EPSILON).unwrap();
        let theta = calibrate_threshold(&m, &train_bins, 1.0).unwrap();

        let mut test_bins = train_bins.clone();
        // copy 10 samples from a high-velocity region onto a low one
        let src = 15..25;
        let dst = 100;
        let segment: Vec<usize> = test_bins[src].to_vec();
        test_bins[dst..dst + segment.len()].copy_from_slice(&segment);

        let events = detect_streaming(&m, theta, &test_bins, None).unwrap();
        let indices: Vec<usize> = events.iter().map(|e| e.sample_index).collect();
        assert_eq!(indices, brute_force_events(&m, theta, &test_bins));
        assert!(indices.contains(&dst), "entry junction must fire");
        assert!(indices.contains(&(dst + segment.len())), "exit junction must fire");
    }

    #[test]
    fn streaming_needs_two_samples() {
        let m = derive_self_info(&train(&[0, 1], 4).unwrap(), DEFAULT_EPSILON).unwrap();
        assert!(matches!(
            detect_streaming(&m, 1.0, &[0], None),
            Err(DetectorError::TooFewSamples)
        ));
    }

    #[test]
    fn windowed_quiet_on_matching_distribution() {
        let bins = cycle_bins(256);
        let m = derive_self_info(&train(&bins, 4).unwrap(), DEFAULT_EPSILON).unwrap();
        let events = detect_windowed(&m, 2.0, &bins, None, 32).unwrap();
        assert!(events.is_empty());
    }

    #[test]
    fn windowed_flags_never_seen_transition() {
        let train_bins = cycle_bins(256);
        let m = derive_self_info(&train(&train_bins, 8).unwrap(), DEFAULT_EPSILON).unwrap();

        // Build one 32-sample window around an unseen transition and check
        // the score against a direct computation.
        let mut test_bins = train_bins.clone();
        test_bins[64] = 7;
        let window = &test_bins[64 - 16..64 + 16];
        let mut expected: f64 = 0.0;
        for pair in window.windows(2) {
            let count = window
                .windows(2)
                .filter(|p| p[0] == pair[0] && p[1] == pair[1])
                .count() as f64;
            let total = window.windows(2).filter(|p| p[0] == pair[0]).count() as f64;
            let e_test = (total / count).log2();
            expected = expected.max((e_test - m.value(pair[0], pair[1])).abs());
        }
        assert!(expected > 10.0, "unseen cell should dominate: {expected}");

        let theta_w = 10.0;
        let events = detect_windowed(&m, theta_w, &test_bins, None, 32).unwrap();
        assert!(!events.is_empty());
        let hit = events
            .iter()
            .find(|e| e.sample_index <= 64 && 64 < e.sample_index + 32)
            .expect("some flagged window must contain the alteration");
        assert!(hit.score_bits > theta_w);
    }

    #[test]
    fn windowed_rejects_window_longer_than_trace() {
        let bins = cycle_bins(16);
        let m = derive_self_info(&train(&bins, 4).unwrap(), DEFAULT_EPSILON).unwrap();
        assert!(matches!(
            detect_windowed(&m, 1.0, &bins, None, 32),
            Err(DetectorError::WindowExceedsTrace { .. })
        ));
    }

    #[test]
    fn windowed_windows_contain_streaming_unseen_events() {
        // Every streaming event from an unseen transition lies inside at
        // least one flagged window.
        let train_bins = cycle_bins(300);
        let m = derive_self_info(&train(&train_bins, 8).unwrap(), DEFAULT_EPSILON).unwrap();
        let theta = calibrate_threshold(&m, &train_bins, 1.0).unwrap();
        let mut test_bins = train_bins.clone();
        test_bins[40] = 6;
        test_bins[155] = 7;
        test_bins[299] = 5;

        let streaming = detect_streaming(&m, theta, &test_bins, None).unwrap();
        let windowed = detect_windowed(&m, 10.0, &test_bins, None, 32).unwrap();
        for e in streaming.iter().filter(|e| e.score_bits >= m.e_max()) {
            let covered = windowed
                .iter()
                .any(|w| w.sample_index <= e.sample_index && e.sample_index < w.sample_index + 32);
            assert!(covered, "streaming event at {} not inside any flagged window", e.sample_index);
        }
    }

    #[test]
    fn adaptive_single_successor_is_a_fixed_point() {
        // One successor per row: P stays exactly 1 and E stays 0 through updates.
        let counts = train(&cycle_bins(64), 4).unwrap();
        let lambda = 1.0 - 1.0 / 65536.0;
        let mut adaptive = AdaptiveReference::from_counts(&counts, DEFAULT_EPSILON, lambda).unwrap();
        for _ in 0..1000 {
            assert_eq!(adaptive.score(0, 1), 0.0);
            assert_eq!(adaptive.probability(0, 1), 1.0);
            adaptive.update(0, 1, 1.0).unwrap();
        }
    }

    #[test]
    fn adaptive_new_successor_approaches_certainty() {
        // Row 0 starts with mass 2^16 on successor 1 (the decay steady
        // state), then only ever sees successor 2. The closed form for the
        // new successor's probability after k updates is 1 - lambda^k.
        let mut counts = TransitionCounts::new(4).unwrap();
        for _ in 0..65536 {
            counts.record(0, 1).unwrap();
        }
        let lambda = 1.0 - 1.0 / 65536.0;
        let mut adaptive = AdaptiveReference::from_counts(&counts, DEFAULT_EPSILON, lambda).unwrap();
        let mut prev_p = 0.0;
        for k in 1..=10_000u32 {
            // never flagged: pass a permissive threshold
            adaptive.update(0, 2, f64::INFINITY).unwrap();
            let p = adaptive.probability(0, 2);
            assert!(p >= prev_p, "P must grow monotonically");
            prev_p = p;
            if k % 2500 == 0 {
                let closed = 1.0 - lambda.powi(k as i32);
                assert!(
                    (p - closed).abs() < 1e-3,
                    "k={k}: P={p} vs closed form {closed}"
                );
            }
        }
        assert!(prev_p > 0.13);
    }

    #[test]
    fn adaptive_rejects_update_on_flagged_transition() {
        let counts = train(&cycle_bins(64), 4).unwrap();
        let mut adaptive =
            AdaptiveReference::from_counts(&counts, DEFAULT_EPSILON, 0.999).unwrap();
        // (0, 3) is unseen: scores e_max = 20, far above theta
        assert!(matches!(
            adaptive.update(0, 3, 5.0),
            Err(DetectorError::UpdateOnFlaggedTransition { .. })
        ));
    }

    #[test]
    fn adaptive_rows_stay_normalized() {
        let counts = train(&cycle_bins(64), 4).unwrap();
        let mut adaptive =
            AdaptiveReference::from_counts(&counts, DEFAULT_EPSILON, 0.9999).unwrap();
        let sequence = [(0usize, 1usize), (1, 2), (2, 3), (3, 0), (0, 1), (1, 2)];
        for _ in 0..500 {
            for &(j, i) in &sequence {
                adaptive.update(j, i, f64::INFINITY).unwrap();
            }
        }
        for j in 0..4 {
            let sum: f64 = (0..4).map(|i| adaptive.probability(j, i)).sum();
            assert!((sum - 1.0).abs() < 1e-9, "row {j} sums to {sum}");
        }
    }

    #[test]
    fn adaptive_streaming_flags_and_skips_anomalies() {
        let train_bins = cycle_bins(100);
        let counts = train(&train_bins, 8).unwrap();
        let m = derive_self_info(&counts, DEFAULT_EPSILON).unwrap();
        let theta = calibrate_threshold(&m, &train_bins, 1.0).unwrap();

        let mut test_bins = train_bins.clone();
        test_bins[50] = 7;
        let events =
            detect_streaming_adaptive(&counts, DEFAULT_EPSILON, 0.9999, theta, &test_bins, None)
                .unwrap();
        let indices: Vec<usize> = events.iter().map(|e| e.sample_index).collect();
        assert_eq!(indices, vec![50, 51]);
    }

    #[test]
    fn config_invariants_enforced() {
        assert!(DetectorConfig::default().validate().is_ok());
        let bad_theta = DetectorConfig {
            threshold_bits: 0.0,
            ..DetectorConfig::default()
        };
        assert!(matches!(bad_theta.validate(), Err(DetectorError::InvalidThreshold(_))));
        let bad_window = DetectorConfig {
            mode: DetectorMode::Windowed,
            window_len: 1,
            ..DetectorConfig::default()
        };
        assert!(matches!(bad_window.validate(), Err(DetectorError::WindowTooShort(1))));
        let bad_lambda = DetectorConfig {
            online_update: OnlineUpdate::Decay { lambda: 1.0 },
            ..DetectorConfig::default()
        };
        assert!(matches!(bad_lambda.validate(), Err(DetectorError::InvalidLambda(_))));
    }

    #[test]
    fn event_csv_roundtrip() {
        let e = AnomalyEvent {
            sample_index: 42,
            timestamp: 0.161538,
            prev_bin: 50,
            cur_bin: 70,
            score_bits: 20.0,
            mode: DetectorMode::Streaming,
        };
        let line = e.to_csv_line();
        assert_eq!(line, "42,0.161538,50,70,20.000000,streaming");
        assert_eq!(AnomalyEvent::from_csv_line(&line).unwrap(), e);
    }

    proptest! {
        #[test]
        fn detection_is_deterministic(bins in proptest::collection::vec(0usize..6, 8..128)) {
            let train_bins = cycle_bins(64);
            let m = derive_self_info(&train(&train_bins, 6).unwrap(), DEFAULT_EPSILON).unwrap();
            let a = detect_streaming(&m, 3.0, &bins, None).unwrap();
            let b = detect_streaming(&m, 3.0, &bins, None).unwrap();
            let serialize = |ev: &[AnomalyEvent]| {
                ev.iter().map(|e| e.to_csv_line()).collect::<Vec<_>>().join("\n")
            };
            prop_assert_eq!(serialize(&a), serialize(&b));
        }

        #[test]
        fn raising_theta_never_adds_events(
            bins in proptest::collection::vec(0usize..6, 8..128),
            lo in 0.5f64..5.0,
            delta in 0.1f64..10.0,
        ) {
            let train_bins = cycle_bins(64);
            let m = derive_self_info(&train(&train_bins, 6).unwrap(), DEFAULT_EPSILON).unwrap();
            let low = detect_streaming(&m, lo, &bins, None).unwrap();
            let high = detect_streaming(&m, lo + delta, &bins, None).unwrap();
            let low_set: std::collections::HashSet<usize> =
                low.iter().map(|e| e.sample_index).collect();
            prop_assert!(high.len() <= low.len());
            for e in &high {
                prop_assert!(low_set.contains(&e.sample_index));
            }
        }

        #[test]
        fn unseen_transitions_always_fire(theta in 0.5f64..19.0) {
            let train_bins = cycle_bins(64);
            let m = derive_self_info(&train(&train_bins, 8).unwrap(), DEFAULT_EPSILON).unwrap();
            // (0, 7) has zero training count
            let events = detect_streaming(&m, theta, &[0, 7], None).unwrap();
            prop_assert_eq!(events.len(), 1);
            prop_assert_eq!(events[0].score_bits, m.e_max());
        }
    }
}
