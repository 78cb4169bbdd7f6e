//! Labeled attack synthesis: one-time bad injections and replays over a
//! clean sample series, with ground truth for scoring.
//!
//! Everything here is pure and deterministic given the seed, so a
//! campaign regenerates bit-identically anywhere.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::ingest::Sample;

#[derive(Debug, Error)]
pub enum InjectError {
    #[error("index {index} out of range for trace of {len} samples")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("replay length must be at least 1")]
    EmptyReplay,
    #[error("replay source [{src_start}, {src_end}) overlaps destination [{dst_start}, {dst_end})")]
    OverlappingRanges {
        src_start: usize,
        src_end: usize,
        dst_start: usize,
        dst_end: usize,
    },
    #[error("attacks overlap at sample {index}")]
    OverlappingAttacks { index: usize },
    #[error("deviation pushes value {value} outside valid range [{min}, {max}] (strict mode)")]
    StrictRangeViolation { value: f64, min: f64, max: f64 },
    #[error("trace of {len} samples cannot hold the requested campaign ({needed} samples needed)")]
    CampaignTooLarge { len: usize, needed: usize },
    #[error("could not place attack {index} under the given constraints")]
    PlacementFailed { index: usize },
    #[error("bad campaign line: {0}")]
    BadCampaignLine(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackKind {
    OneTime,
    Replay,
}

impl std::fmt::Display for AttackKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AttackKind::OneTime => write!(f, "one_time"),
            AttackKind::Replay => write!(f, "replay"),
        }
    }
}

/// One planned attack.
///
/// A one-time attack rewrites a single sample, multiplying it by
/// `1 + deviation_pct/100` (or drawing a uniform value over the valid
/// range when `random_value` is set). A replay overwrites
/// `[dst_index, dst_index + src_len)` with the values previously read at
/// `[src_start, src_start + src_len)`; destination timestamps are kept.
#[derive(Debug, Clone, PartialEq)]
pub enum AttackSpec {
    OneTime {
        target_index: usize,
        deviation_pct: f64,
        random_value: bool,
        seed: u64,
    },
    Replay {
        src_start: usize,
        src_len: usize,
        dst_index: usize,
    },
}

impl AttackSpec {
    pub fn kind(&self) -> AttackKind {
        match self {
            AttackSpec::OneTime { .. } => AttackKind::OneTime,
            AttackSpec::Replay { .. } => AttackKind::Replay,
        }
    }

    /// Half-open index range the attack rewrites.
    pub fn affected_range(&self) -> (usize, usize) {
        match *self {
            AttackSpec::OneTime { target_index, .. } => (target_index, target_index + 1),
            AttackSpec::Replay {
                dst_index, src_len, ..
            } => (dst_index, dst_index + src_len),
        }
    }

    /// Campaign file line: `kind,param1,param2,param3,seed`.
    pub fn to_csv_line(&self) -> String {
        match *self {
            AttackSpec::OneTime {
                target_index,
                deviation_pct,
                random_value,
                seed,
            } => format!(
                "one_time,{target_index},{deviation_pct},{},{seed}",
                u8::from(random_value)
            ),
            AttackSpec::Replay {
                src_start,
                src_len,
                dst_index,
            } => format!("replay,{src_start},{src_len},{dst_index},0"),
        }
    }

    pub fn from_csv_line(line: &str) -> Result<Self, InjectError> {
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != 5 {
            return Err(InjectError::BadCampaignLine(format!(
                "expected 5 columns, got {}",
                fields.len()
            )));
        }
        let num = |s: &str| -> Result<usize, InjectError> {
            s.parse()
                .map_err(|_| InjectError::BadCampaignLine(format!("bad integer {s:?}")))
        };
        match fields[0] {
            "one_time" => Ok(AttackSpec::OneTime {
                target_index: num(fields[1])?,
                deviation_pct: fields[2].parse().map_err(|_| {
                    InjectError::BadCampaignLine(format!("bad deviation {:?}", fields[2]))
                })?,
                random_value: fields[3] == "1",
                seed: fields[4]
                    .parse()
                    .map_err(|_| InjectError::BadCampaignLine(format!("bad seed {:?}", fields[4])))?,
            }),
            "replay" => Ok(AttackSpec::Replay {
                src_start: num(fields[1])?,
                src_len: num(fields[2])?,
                dst_index: num(fields[3])?,
            }),
            other => Err(InjectError::BadCampaignLine(format!(
                "unknown attack kind {other:?}"
            ))),
        }
    }
}

/// One labeled ground-truth range, end exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TruthEntry {
    pub kind: AttackKind,
    pub start: usize,
    pub end: usize,
}

impl TruthEntry {
    pub fn to_csv_line(&self) -> String {
        format!("{},{},{}", self.kind, self.start, self.end)
    }

    pub fn from_csv_line(line: &str) -> Result<Self, InjectError> {
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != 3 {
            return Err(InjectError::BadCampaignLine(format!(
                "expected 3 columns, got {}",
                fields.len()
            )));
        }
        let kind = match fields[0] {
            "one_time" => AttackKind::OneTime,
            "replay" => AttackKind::Replay,
            other => {
                return Err(InjectError::BadCampaignLine(format!(
                    "unknown attack kind {other:?}"
                )))
            }
        };
        let num = |s: &str| -> Result<usize, InjectError> {
            s.parse()
                .map_err(|_| InjectError::BadCampaignLine(format!("bad integer {s:?}")))
        };
        Ok(TruthEntry {
            kind,
            start: num(fields[1])?,
            end: num(fields[2])?,
        })
    }
}

/// All injected attacks, sorted by start and non-overlapping.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth {
    pub entries: Vec<TruthEntry>,
}

impl GroundTruth {
    pub fn from_entries(mut entries: Vec<TruthEntry>) -> Result<Self, InjectError> {
        entries.sort_by_key(|e| e.start);
        for pair in entries.windows(2) {
            if pair[1].start < pair[0].end {
                return Err(InjectError::OverlappingAttacks {
                    index: pair[1].start,
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of samples covered by attacks.
    pub fn attacked_samples(&self) -> usize {
        self.entries.iter().map(|e| e.end - e.start).sum()
    }
}

/// Valid physical range plus the strictness policy for one-time values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InjectContext {
    pub min_value: f64,
    pub max_value: f64,
    /// In strict mode a deviation that would leave the valid range is an
    /// error instead of being clamped.
    pub strict: bool,
}

/// Rewrite exactly one sample. The mutated value stays inside the valid
/// range, mirroring an attacker that wants to slip past range checks.
pub fn inject_one_time(
    samples: &mut [Sample],
    target_index: usize,
    deviation_pct: f64,
    random_value: bool,
    seed: u64,
    ctx: &InjectContext,
) -> Result<TruthEntry, InjectError> {
    if target_index >= samples.len() {
        return Err(InjectError::IndexOutOfRange {
            index: target_index,
            len: samples.len(),
        });
    }
    let new_value = if random_value {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.gen_range(ctx.min_value..=ctx.max_value)
    } else {
        let raw = samples[target_index].value * (1.0 + deviation_pct / 100.0);
        if ctx.strict && (raw < ctx.min_value || raw > ctx.max_value) {
            return Err(InjectError::StrictRangeViolation {
                value: raw,
                min: ctx.min_value,
                max: ctx.max_value,
            });
        }
        raw.clamp(ctx.min_value, ctx.max_value)
    };
    samples[target_index].value = new_value;
    Ok(TruthEntry {
        kind: AttackKind::OneTime,
        start: target_index,
        end: target_index + 1,
    })
}

/// Replace `[dst_index, dst_index + src_len)` with the source values.
/// Content replay, not timing replay: destination timestamps survive.
pub fn inject_replay(
    samples: &mut [Sample],
    source_values: &[f64],
    src_start: usize,
    src_len: usize,
    dst_index: usize,
) -> Result<TruthEntry, InjectError> {
    if src_len == 0 {
        return Err(InjectError::EmptyReplay);
    }
    let len = samples.len();
    let src_end = src_start
        .checked_add(src_len)
        .filter(|&e| e <= len)
        .ok_or(InjectError::IndexOutOfRange { index: src_start, len })?;
    let dst_end = dst_index
        .checked_add(src_len)
        .filter(|&e| e <= len)
        .ok_or(InjectError::IndexOutOfRange { index: dst_index, len })?;
    if src_start < dst_end && dst_index < src_end {
        return Err(InjectError::OverlappingRanges {
            src_start,
            src_end,
            dst_start: dst_index,
            dst_end,
        });
    }
    for (offset, &value) in source_values[src_start..src_end].iter().enumerate() {
        samples[dst_index + offset].value = value;
    }
    Ok(TruthEntry {
        kind: AttackKind::Replay,
        start: dst_index,
        end: dst_end,
    })
}

/// Apply a whole campaign to a clean trace.
///
/// Replays read their source content from the *clean* trace, matching an
/// attacker that recorded legitimate traffic beforehand; attack
/// destination ranges must not overlap each other.
pub fn apply_campaign(
    clean: &[Sample],
    specs: &[AttackSpec],
    ctx: &InjectContext,
) -> Result<(Vec<Sample>, GroundTruth), InjectError> {
    let clean_values: Vec<f64> = clean.iter().map(|s| s.value).collect();
    let mut mutated = clean.to_vec();
    let mut entries = Vec::with_capacity(specs.len());
    for spec in specs {
        let entry = match *spec {
            AttackSpec::OneTime {
                target_index,
                deviation_pct,
                random_value,
                seed,
            } => inject_one_time(&mut mutated, target_index, deviation_pct, random_value, seed, ctx)?,
            AttackSpec::Replay {
                src_start,
                src_len,
                dst_index,
            } => inject_replay(&mut mutated, &clean_values, src_start, src_len, dst_index)?,
        };
        entries.push(entry);
    }
    let truth = GroundTruth::from_entries(entries)?;
    Ok((mutated, truth))
}

/// Campaign shape: how many attacks of each kind and how they are placed.
#[derive(Debug, Clone, PartialEq)]
pub struct CampaignParams {
    pub n_one_time: usize,
    pub n_replay: usize,
    pub deviation_pct: f64,
    pub random_value: bool,
    pub replay_len: usize,
    /// Minimum index distance between the affected ranges of two attacks,
    /// and between an attack and either end of the trace. Keeps
    /// event-to-attack attribution unambiguous.
    pub min_separation: usize,
    pub seed: u64,
}

impl Default for CampaignParams {
    fn default() -> Self {
        Self {
            n_one_time: 3,
            n_replay: 9,
            deviation_pct: 20.0,
            random_value: false,
            replay_len: 520,
            min_separation: 128,
            seed: 0,
        }
    }
}

/// Extra constraints for planning against a concrete trace, so every
/// planned attack is guaranteed to inject content that has never appeared
/// at its position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetingConstraints {
    /// One-time targets must have at least this clean value, so a
    /// percentage deviation moves the sample by enough bins.
    pub min_target_value: f64,
    /// Replay sources must differ from the value just before the
    /// destination by at least this much, so the entry junction is a
    /// transition the reference cannot contain.
    pub min_junction_delta: f64,
}

/// Deterministically spread a campaign over `trace_len` samples.
///
/// The usable index range is split into one slot per attack; each attack
/// lands at a seeded random offset inside its slot, padded so that any
/// two affected ranges stay `min_separation` apart. Replay sources are
/// drawn anywhere outside every destination range.
pub fn plan_campaign(
    trace_len: usize,
    params: &CampaignParams,
) -> Result<Vec<AttackSpec>, InjectError> {
    plan(trace_len, params, None, None)
}

/// Like [`plan_campaign`], but placement can also satisfy value-based
/// `TargetingConstraints` against the clean trace.
pub fn plan_campaign_targeted(
    clean: &[Sample],
    params: &CampaignParams,
    constraints: &TargetingConstraints,
) -> Result<Vec<AttackSpec>, InjectError> {
    plan(clean.len(), params, Some(clean), Some(constraints))
}

fn plan(
    trace_len: usize,
    params: &CampaignParams,
    clean: Option<&[Sample]>,
    constraints: Option<&TargetingConstraints>,
) -> Result<Vec<AttackSpec>, InjectError> {
    let total = params.n_one_time + params.n_replay;
    if total == 0 {
        return Ok(Vec::new());
    }
    if params.n_replay > 0 && params.replay_len == 0 {
        return Err(InjectError::EmptyReplay);
    }
    let sep = params.min_separation.max(1);

    // Shuffled kind order, then one slot per attack.
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut kinds: Vec<AttackKind> = std::iter::repeat_n(AttackKind::OneTime, params.n_one_time)
        .chain(std::iter::repeat_n(AttackKind::Replay, params.n_replay))
        .collect();
    for i in (1..kinds.len()).rev() {
        kinds.swap(i, rng.gen_range(0..=i));
    }

    let span: usize = kinds
        .iter()
        .map(|k| match k {
            AttackKind::OneTime => 1,
            AttackKind::Replay => params.replay_len,
        })
        .sum();
    let needed = span + (total + 1) * sep;
    if trace_len < needed {
        return Err(InjectError::CampaignTooLarge {
            len: trace_len,
            needed,
        });
    }

    // One-time targeting works off the sorted list of qualifying indices,
    // so placement is exact instead of hoping rejection sampling hits one.
    let qualifying: Option<Vec<usize>> = match (clean, constraints) {
        (Some(samples), Some(c)) if params.n_one_time > 0 => Some(
            samples
                .iter()
                .enumerate()
                .filter(|(_, s)| s.value >= c.min_target_value)
                .map(|(i, _)| i)
                .collect(),
        ),
        _ => None,
    };

    let usable = trace_len - 2 * sep;
    let slot = usable / total;
    let mut specs = Vec::with_capacity(total);
    let mut dst_ranges: Vec<(usize, usize)> = Vec::with_capacity(total);

    for (t, kind) in kinds.iter().enumerate() {
        let attack_span = match kind {
            AttackKind::OneTime => 1,
            AttackKind::Replay => params.replay_len,
        };
        let slot_start = sep + t * slot;
        // Keep sep/2 padding at each side of the slot so neighbors in
        // adjacent slots stay min_separation apart.
        let lo = slot_start + sep / 2;
        let hi_excl = slot_start + slot - sep / 2;
        if hi_excl <= lo + attack_span {
            return Err(InjectError::CampaignTooLarge {
                len: trace_len,
                needed,
            });
        }
        let max_start = hi_excl - attack_span;
        let position = match (kind, &qualifying) {
            (AttackKind::OneTime, Some(q)) => place_one_time_targeted(
                &mut rng,
                q,
                lo,
                max_start,
                sep,
                trace_len,
                &dst_ranges,
            ),
            _ => place_in_slot(&mut rng, lo, max_start, attack_span, sep, &dst_ranges),
        }
        .ok_or(InjectError::PlacementFailed { index: t })?;
        dst_ranges.push((position, position + attack_span));

        match kind {
            AttackKind::OneTime => specs.push(AttackSpec::OneTime {
                target_index: position,
                deviation_pct: params.deviation_pct,
                random_value: params.random_value,
                seed: rng.gen(),
            }),
            AttackKind::Replay => {
                // src chosen below once all destinations are fixed
                specs.push(AttackSpec::Replay {
                    src_start: usize::MAX,
                    src_len: params.replay_len,
                    dst_index: position,
                });
            }
        }
    }

    // Second pass: pick replay sources disjoint from every destination.
    for (t, spec) in specs.iter_mut().enumerate() {
        if let AttackSpec::Replay {
            src_start,
            src_len,
            dst_index,
        } = spec
        {
            let chosen = pick_replay_source(
                &mut rng,
                trace_len,
                *src_len,
                *dst_index,
                &dst_ranges,
                clean,
                constraints,
            )
            .ok_or(InjectError::PlacementFailed { index: t })?;
            *src_start = chosen;
        }
    }

    Ok(specs)
}

fn far_enough(candidate: (usize, usize), placed: &[(usize, usize)], sep: usize) -> bool {
    placed
        .iter()
        .all(|&(s, e)| candidate.1 + sep <= s || candidate.0 >= e + sep)
}

fn place_in_slot(
    rng: &mut ChaCha8Rng,
    lo: usize,
    max_start: usize,
    attack_span: usize,
    sep: usize,
    placed: &[(usize, usize)],
) -> Option<usize> {
    for _ in 0..10_000 {
        let candidate = rng.gen_range(lo..=max_start);
        if far_enough((candidate, candidate + attack_span), placed, sep) {
            return Some(candidate);
        }
    }
    None
}

/// Prefer a qualifying index inside the slot to keep attacks spread; if
/// the slot has none, fall back to any qualifying index in the trace that
/// keeps its distance from already-placed attacks.
fn place_one_time_targeted(
    rng: &mut ChaCha8Rng,
    qualifying: &[usize],
    lo: usize,
    max_start: usize,
    sep: usize,
    trace_len: usize,
    placed: &[(usize, usize)],
) -> Option<usize> {
    let slot_band = {
        let from = qualifying.partition_point(|&i| i < lo);
        let to = qualifying.partition_point(|&i| i <= max_start);
        &qualifying[from..to]
    };
    let local: Vec<usize> = slot_band
        .iter()
        .copied()
        .filter(|&i| far_enough((i, i + 1), placed, sep))
        .collect();
    if !local.is_empty() {
        return Some(local[rng.gen_range(0..local.len())]);
    }
    let global: Vec<usize> = qualifying
        .iter()
        .copied()
        .filter(|&i| i >= sep && i + 1 + sep <= trace_len)
        .filter(|&i| far_enough((i, i + 1), placed, sep))
        .collect();
    if global.is_empty() {
        None
    } else {
        Some(global[rng.gen_range(0..global.len())])
    }
}

fn pick_replay_source(
    rng: &mut ChaCha8Rng,
    trace_len: usize,
    src_len: usize,
    dst_index: usize,
    dst_ranges: &[(usize, usize)],
    clean: Option<&[Sample]>,
    constraints: Option<&TargetingConstraints>,
) -> Option<usize> {
    if trace_len < src_len {
        return None;
    }
    for _ in 0..10_000 {
        let candidate = rng.gen_range(0..=trace_len - src_len);
        let cand_end = candidate + src_len;
        if dst_ranges
            .iter()
            .any(|&(s, e)| candidate < e && s < cand_end)
        {
            continue;
        }
        if let (Some(samples), Some(c)) = (clean, constraints) {
            if dst_index == 0 {
                continue;
            }
            let junction_delta =
                (samples[candidate].value - samples[dst_index - 1].value).abs();
            if junction_delta < c.min_junction_delta {
                continue;
            }
        }
        return Some(candidate);
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn trace(len: usize) -> Vec<Sample> {
        (0..len)
            .map(|i| Sample {
                timestamp: i as f64 / 260.0,
                value: 40.0 + (i % 80) as f64,
            })
            .collect()
    }

    fn ctx() -> InjectContext {
        InjectContext {
            min_value: 0.0,
            max_value: 160.0,
            strict: false,
        }
    }

    #[test]
    fn one_time_applies_deviation_at_target_only() {
        let mut samples = trace(100);
        samples[40].value = 100.0;
        let clean = samples.clone();
        let entry = inject_one_time(&mut samples, 40, 40.0, false, 0, &ctx()).unwrap();
        assert_eq!(samples[40].value, 140.0);
        assert_eq!(entry, TruthEntry { kind: AttackKind::OneTime, start: 40, end: 41 });
        for (i, (a, b)) in samples.iter().zip(&clean).enumerate() {
            if i != 40 {
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn zero_deviation_still_recorded() {
        let mut samples = trace(10);
        let clean = samples.clone();
        let entry = inject_one_time(&mut samples, 3, 0.0, false, 0, &ctx()).unwrap();
        assert_eq!(samples, clean);
        assert_eq!(entry.start, 3);
    }

    #[test]
    fn strict_mode_rejects_out_of_range_deviation() {
        let mut samples = trace(10);
        samples[5].value = 150.0;
        let strict = InjectContext { strict: true, ..ctx() };
        assert!(matches!(
            inject_one_time(&mut samples, 5, 40.0, false, 0, &strict),
            Err(InjectError::StrictRangeViolation { .. })
        ));
        // non-strict clamps instead
        inject_one_time(&mut samples, 5, 40.0, false, 0, &ctx()).unwrap();
        assert_eq!(samples[5].value, 160.0);
    }

    #[test]
    fn one_time_index_out_of_range() {
        let mut samples = trace(10);
        assert!(matches!(
            inject_one_time(&mut samples, 10, 10.0, false, 0, &ctx()),
            Err(InjectError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn replay_copies_values_and_keeps_timestamps() {
        let mut samples = trace(700);
        let clean = samples.clone();
        let values: Vec<f64> = clean.iter().map(|s| s.value).collect();
        let entry = inject_replay(&mut samples, &values, 100, 100, 500).unwrap();
        assert_eq!(entry, TruthEntry { kind: AttackKind::Replay, start: 500, end: 600 });
        for k in 0..100 {
            assert_eq!(samples[500 + k].value, clean[100 + k].value);
            assert_eq!(samples[500 + k].timestamp, clean[500 + k].timestamp);
        }
        assert_eq!(&samples[..500], &clean[..500]);
        assert_eq!(&samples[600..], &clean[600..]);
    }

    #[test]
    fn replay_of_one_sample_is_a_historical_substitution() {
        let mut samples = trace(100);
        let values: Vec<f64> = samples.iter().map(|s| s.value).collect();
        let entry = inject_replay(&mut samples, &values, 10, 1, 50).unwrap();
        assert_eq!(samples[50].value, values[10]);
        assert_eq!(entry.end - entry.start, 1);
    }

    #[test]
    fn replay_rejects_overlap() {
        let mut samples = trace(100);
        let values: Vec<f64> = samples.iter().map(|s| s.value).collect();
        assert!(matches!(
            inject_replay(&mut samples, &values, 40, 20, 50),
            Err(InjectError::OverlappingRanges { .. })
        ));
    }

    #[test]
    fn replay_rejects_empty_and_out_of_range() {
        let mut samples = trace(100);
        let values: Vec<f64> = samples.iter().map(|s| s.value).collect();
        assert!(matches!(
            inject_replay(&mut samples, &values, 0, 0, 50),
            Err(InjectError::EmptyReplay)
        ));
        assert!(matches!(
            inject_replay(&mut samples, &values, 95, 10, 50),
            Err(InjectError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn urban_campaign_shape() {
        let params = CampaignParams {
            n_one_time: 3,
            n_replay: 9,
            seed: 7,
            ..CampaignParams::default()
        };
        let specs = plan_campaign(263_023, &params).unwrap();
        assert_eq!(specs.len(), 12);
        assert_eq!(specs.iter().filter(|s| s.kind() == AttackKind::OneTime).count(), 3);
        assert_eq!(specs.iter().filter(|s| s.kind() == AttackKind::Replay).count(), 9);
        // deterministic given the seed
        assert_eq!(plan_campaign(263_023, &params).unwrap(), specs);
    }

    #[test]
    fn highway_campaign_shape() {
        let params = CampaignParams {
            n_one_time: 6,
            n_replay: 0,
            seed: 7,
            ..CampaignParams::default()
        };
        let specs = plan_campaign(274_487, &params).unwrap();
        assert_eq!(specs.len(), 6);
        assert!(specs.iter().all(|s| s.kind() == AttackKind::OneTime));
    }

    #[test]
    fn campaign_too_large_for_short_trace() {
        let params = CampaignParams {
            n_one_time: 6,
            n_replay: 9,
            seed: 1,
            ..CampaignParams::default()
        };
        assert!(matches!(
            plan_campaign(10, &params),
            Err(InjectError::CampaignTooLarge { .. })
        ));
    }

    #[test]
    fn planned_attacks_stay_separated() {
        let params = CampaignParams {
            n_one_time: 4,
            n_replay: 4,
            min_separation: 100,
            replay_len: 50,
            seed: 3,
            ..CampaignParams::default()
        };
        let specs = plan_campaign(20_000, &params).unwrap();
        let mut ranges: Vec<(usize, usize)> = specs.iter().map(|s| s.affected_range()).collect();
        ranges.sort();
        for pair in ranges.windows(2) {
            assert!(
                pair[1].0 - pair[0].1 >= params.min_separation,
                "ranges {:?} and {:?} too close",
                pair[0],
                pair[1]
            );
        }
    }

    #[test]
    fn campaign_roundtrips_through_csv() {
        let params = CampaignParams { seed: 11, ..CampaignParams::default() };
        let specs = plan_campaign(100_000, &params).unwrap();
        for spec in &specs {
            assert_eq!(AttackSpec::from_csv_line(&spec.to_csv_line()).unwrap(), *spec);
        }
    }

    #[test]
    fn targeted_plan_respects_value_floor() {
        let samples = trace(50_000);
        let params = CampaignParams {
            n_one_time: 5,
            n_replay: 3,
            replay_len: 40,
            seed: 5,
            ..CampaignParams::default()
        };
        let constraints = TargetingConstraints {
            min_target_value: 80.0,
            min_junction_delta: 10.0,
        };
        let specs = plan_campaign_targeted(&samples, &params, &constraints).unwrap();
        for spec in &specs {
            match *spec {
                AttackSpec::OneTime { target_index, .. } => {
                    assert!(samples[target_index].value >= 80.0);
                }
                AttackSpec::Replay {
                    src_start,
                    dst_index,
                    ..
                } => {
                    let delta =
                        (samples[src_start].value - samples[dst_index - 1].value).abs();
                    assert!(delta >= 10.0);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn same_seed_same_campaign_and_bytes(seed in any::<u64>()) {
            let samples = trace(30_000);
            let params = CampaignParams {
                n_one_time: 2,
                n_replay: 2,
                replay_len: 64,
                seed,
                ..CampaignParams::default()
            };
            let a = plan_campaign(samples.len(), &params).unwrap();
            let b = plan_campaign(samples.len(), &params).unwrap();
            prop_assert_eq!(&a, &b);
            let (ma, ta) = apply_campaign(&samples, &a, &ctx()).unwrap();
            let (mb, tb) = apply_campaign(&samples, &b, &ctx()).unwrap();
            prop_assert_eq!(ta, tb);
            let render = |s: &[Sample]| {
                s.iter().map(|x| format!("{:.6},{:.6}", x.timestamp, x.value)).collect::<String>()
            };
            prop_assert_eq!(render(&ma), render(&mb));
        }

        #[test]
        fn diff_positions_lie_inside_ground_truth(seed in any::<u64>()) {
            let samples = trace(20_000);
            let params = CampaignParams {
                n_one_time: 3,
                n_replay: 2,
                replay_len: 32,
                deviation_pct: 20.0,
                seed,
                ..CampaignParams::default()
            };
            let specs = plan_campaign(samples.len(), &params).unwrap();
            let (mutated, truth) = apply_campaign(&samples, &specs, &ctx()).unwrap();
            for (i, (m, c)) in mutated.iter().zip(&samples).enumerate() {
                if m.value != c.value {
                    prop_assert!(
                        truth.entries.iter().any(|e| e.start <= i && i < e.end),
                        "sample {} changed outside ground truth", i
                    );
                }
            }
            // every one-time entry with nonzero deviation on a nonzero value changed
            prop_assert_eq!(truth.len(), specs.len());
        }
    }
}
