//! Scoring, the deviation sweep, throughput benchmarking, and the
//! synthetic drive-trace generator.
//!
//! Reported FPR comes in two flavors because a single denominator is not
//! enough to describe false alarms:
//!
//! * `fpr_samplewise` — distinct false-event samples / clean samples
//! * `false_alarm_ratio` — distinct false events / distinct events raised
//!
//! The sweep's monotonicity summary uses the alarm ratio: with a fixed
//! reference the clean-region false events do not depend on how hard the
//! injected values deviate, while the number of true alarms grows with
//! the deviation, so the share of false alarms falls.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::detector::{calibrate_threshold, detect_streaming, AnomalyEvent, DetectorError};
use crate::ingest::Sample;
use crate::inject::{
    apply_campaign, plan_campaign, plan_campaign_targeted, CampaignParams, GroundTruth,
    InjectContext, InjectError, TargetingConstraints,
};
use crate::lut::ReferenceLut;
use crate::simatrix::{derive_self_info, train, MatrixError, Quantizer, DEFAULT_EPSILON};

/// Sample rate of the synthetic traces, in samples per second.
pub const SAMPLE_RATE_HZ: f64 = 260.0;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("events must be sorted by index (violation at position {position})")]
    UnsortedEvents { position: usize },
    #[error(
        "tolerance {tolerance} is ambiguous: attacks at {first_end} and {second_start} \
         could share an event"
    )]
    AmbiguousTolerance {
        tolerance: usize,
        first_end: usize,
        second_start: usize,
    },
    #[error("trace of {len} samples is too small (need at least {needed})")]
    TraceTooSmall { len: usize, needed: usize },
    #[error("repetitions must be at least 1")]
    ZeroRepetitions,
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Inject(#[from] InjectError),
}

/// Event-to-attack matching rule: an event within `tolerance_window`
/// samples of a ground-truth range detects that attack, one TP credit per
/// attack no matter how many events land on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchPolicy {
    pub tolerance_window: usize,
}

impl Default for MatchPolicy {
    fn default() -> Self {
        Self { tolerance_window: 2 }
    }
}

/// Per-sample latency distribution, in nanoseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LatencyStats {
    pub p50_ns: f64,
    pub p99_ns: f64,
    pub max_ns: f64,
}

/// Detection output scored against injected ground truth.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// TP / (TP + FN); defined as 1.0 when nothing was injected.
    pub detection_rate: f64,
    /// Distinct false-event samples / clean samples.
    pub fpr_samplewise: f64,
    /// Distinct false events / distinct events raised; 0 when quiet.
    pub false_alarm_ratio: f64,
    /// Distinct false events (one per sample index).
    pub false_anomaly_count: usize,
    /// Distinct events raised overall.
    pub events_total: usize,
    /// Wall-clock seconds; zero when the stage was not measured.
    pub train_time_s: f64,
    pub test_time_s: f64,
    pub per_sample_ns: LatencyStats,
}

/// Match sorted events against ground truth.
pub fn score(
    events: &[AnomalyEvent],
    truth: &GroundTruth,
    policy: &MatchPolicy,
    trace_len: usize,
) -> Result<EvalReport, EvalError> {
    if let Some(position) = events
        .windows(2)
        .position(|w| w[1].sample_index < w[0].sample_index)
    {
        return Err(EvalError::UnsortedEvents { position: position + 1 });
    }
    let tol = policy.tolerance_window;
    for pair in truth.entries.windows(2) {
        if pair[1].start < pair[0].end + 2 * tol {
            return Err(EvalError::AmbiguousTolerance {
                tolerance: tol,
                first_end: pair[0].end,
                second_start: pair[1].start,
            });
        }
    }

    // Stable dedup by sample index: scoring ignores event multiplicity.
    let mut indices: Vec<usize> = events.iter().map(|e| e.sample_index).collect();
    indices.dedup();

    let mut true_positives = 0;
    let mut matched = vec![false; indices.len()];
    for entry in &truth.entries {
        let lo = entry.start.saturating_sub(tol);
        let hi = entry.end + tol;
        let mut hit = false;
        for (k, &idx) in indices.iter().enumerate() {
            if idx >= lo && idx < hi {
                matched[k] = true;
                hit = true;
            }
        }
        if hit {
            true_positives += 1;
        }
    }
    let false_anomaly_count = matched.iter().filter(|&&m| !m).count();
    let false_negatives = truth.len() - true_positives;

    let attacked = truth.attacked_samples();
    let clean_samples = trace_len.saturating_sub(attacked);
    let detection_rate = if truth.is_empty() {
        1.0
    } else {
        true_positives as f64 / truth.len() as f64
    };
    let fpr_samplewise = if clean_samples == 0 {
        0.0
    } else {
        false_anomaly_count as f64 / clean_samples as f64
    };
    let false_alarm_ratio = if indices.is_empty() {
        0.0
    } else {
        false_anomaly_count as f64 / indices.len() as f64
    };

    Ok(EvalReport {
        true_positives,
        false_positives: false_anomaly_count,
        false_negatives,
        detection_rate,
        fpr_samplewise,
        false_alarm_ratio,
        false_anomaly_count,
        events_total: indices.len(),
        ..EvalReport::default()
    })
}

/// Human-readable report, formulas first so the numbers are unambiguous.
pub fn render_report_text(report: &EvalReport) -> String {
    let mut out = String::new();
    out.push_str("# detection_rate   = TP / (TP + FN)\n");
    out.push_str("# fpr_samplewise   = distinct false-event samples / clean samples\n");
    out.push_str("# false_alarm_ratio = distinct false events / distinct events raised\n");
    out.push_str(&format!("true_positives     {}\n", report.true_positives));
    out.push_str(&format!("false_positives    {}\n", report.false_positives));
    out.push_str(&format!("false_negatives    {}\n", report.false_negatives));
    out.push_str(&format!("detection_rate     {:.6}\n", report.detection_rate));
    out.push_str(&format!("fpr_samplewise     {:.8}\n", report.fpr_samplewise));
    out.push_str(&format!("false_alarm_ratio  {:.6}\n", report.false_alarm_ratio));
    out.push_str(&format!("false_anomaly_count {}\n", report.false_anomaly_count));
    out.push_str(&format!("events_total       {}\n", report.events_total));
    out
}

/// Deterministic `metric,value` CSV body for the report.
pub fn render_report_csv(report: &EvalReport) -> String {
    format!(
        "metric,value\ntrue_positives,{}\nfalse_positives,{}\nfalse_negatives,{}\n\
         detection_rate,{:.6}\nfpr_samplewise,{:.8}\nfalse_alarm_ratio,{:.6}\n\
         false_anomaly_count,{}\nevents_total,{}\n",
        report.true_positives,
        report.false_positives,
        report.false_negatives,
        report.detection_rate,
        report.fpr_samplewise,
        report.false_alarm_ratio,
        report.false_anomaly_count,
        report.events_total,
    )
}

/// Plot-ready CSV: per-sample velocity with attack and event markers.
pub fn render_plot_csv(
    samples: &[Sample],
    truth: &GroundTruth,
    events: &[AnomalyEvent],
) -> String {
    let mut attacked = vec![false; samples.len()];
    for entry in &truth.entries {
        for flag in attacked
            .iter_mut()
            .take(entry.end.min(samples.len()))
            .skip(entry.start)
        {
            *flag = true;
        }
    }
    let mut flagged = vec![false; samples.len()];
    for e in events {
        if e.sample_index < samples.len() {
            flagged[e.sample_index] = true;
        }
    }
    let mut out = String::with_capacity(samples.len() * 24);
    out.push_str("index,timestamp,value,attacked,event\n");
    for (i, s) in samples.iter().enumerate() {
        out.push_str(&format!(
            "{},{:.6},{:.6},{},{}\n",
            i,
            s.timestamp,
            s.value,
            u8::from(attacked[i]),
            u8::from(flagged[i])
        ));
    }
    out
}

/// Overlay seeded bounded noise on a fraction of the samples; used to
/// contaminate training data on purpose.
pub fn contaminate(
    samples: &[Sample],
    fraction: f64,
    magnitude: f64,
    seed: u64,
    min_value: f64,
    max_value: f64,
) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    samples
        .iter()
        .map(|s| {
            if rng.gen_bool(fraction.clamp(0.0, 1.0)) {
                let noise = rng.gen_range(-magnitude..=magnitude);
                Sample {
                    timestamp: s.timestamp,
                    value: (s.value + noise).clamp(min_value, max_value),
                }
            } else {
                *s
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub deviations: Vec<f64>,
    pub seeds: Vec<u64>,
    pub n_attacks: usize,
    pub quantizer: Quantizer,
    pub epsilon: f64,
    pub calibration_quantile: f64,
    pub policy: MatchPolicy,
    pub min_separation: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub deviation_pct: f64,
    pub mean_detection_rate: f64,
    pub mean_fpr_samplewise: f64,
    pub mean_false_alarm_ratio: f64,
    pub reports: Vec<EvalReport>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// Does the share of false alarms fall (weakly) as deviation grows?
    pub fn false_alarm_ratio_monotone_decreasing(&self) -> bool {
        self.rows
            .windows(2)
            .all(|w| w[1].mean_false_alarm_ratio <= w[0].mean_false_alarm_ratio + 1e-12)
    }

    /// Does detection improve (weakly) as deviation grows?
    pub fn detection_monotone_increasing(&self) -> bool {
        self.rows
            .windows(2)
            .all(|w| w[1].mean_detection_rate + 1e-12 >= w[0].mean_detection_rate)
    }

    pub fn render_text(&self) -> String {
        let mut out = String::from(
            "deviation_pct,mean_detection_rate,mean_fpr_samplewise,mean_false_alarm_ratio\n",
        );
        for row in &self.rows {
            out.push_str(&format!(
                "{},{:.6},{:.8},{:.6}\n",
                row.deviation_pct,
                row.mean_detection_rate,
                row.mean_fpr_samplewise,
                row.mean_false_alarm_ratio
            ));
        }
        out.push_str(&format!(
            "detection_improves_with_deviation,{}\n",
            self.detection_monotone_increasing()
        ));
        out.push_str(&format!(
            "false_alarm_ratio_falls_with_deviation,{}\n",
            self.false_alarm_ratio_monotone_decreasing()
        ));
        out
    }
}

/// Run one-time injection campaigns at every deviation level with the
/// same seeds, detecting against a reference trained on `training`.
///
/// The training series is usually a different (possibly contaminated)
/// drive than the clean test trace, which is what makes false alarms
/// appear at all.
pub fn deviation_sweep(
    clean: &[Sample],
    training: &[Sample],
    cfg: &SweepConfig,
) -> Result<SweepTable, EvalError> {
    let quantizer = cfg.quantizer;
    let train_bins = quantizer.bins(training.iter().map(|s| s.value));
    let counts = train(&train_bins, quantizer.order())?;
    let reference = derive_self_info(&counts, cfg.epsilon)?;
    let theta = calibrate_threshold(&reference, &train_bins, cfg.calibration_quantile)?;

    let ctx = InjectContext {
        min_value: quantizer.min_value(),
        max_value: quantizer.max_value(),
        strict: false,
    };

    let mut rows = Vec::with_capacity(cfg.deviations.len());
    for &deviation_pct in &cfg.deviations {
        let mut reports = Vec::with_capacity(cfg.seeds.len());
        for &seed in &cfg.seeds {
            let params = CampaignParams {
                n_one_time: cfg.n_attacks,
                n_replay: 0,
                deviation_pct,
                random_value: false,
                replay_len: 1,
                min_separation: cfg.min_separation,
                seed,
            };
            let specs = plan_campaign(clean.len(), &params)?;
            let (mutated, truth) = apply_campaign(clean, &specs, &ctx)?;
            let bins = quantizer.bins(mutated.iter().map(|s| s.value));
            let timestamps: Vec<f64> = mutated.iter().map(|s| s.timestamp).collect();
            let events = detect_streaming(&reference, theta, &bins, Some(&timestamps))?;
            reports.push(score(&events, &truth, &cfg.policy, mutated.len())?);
        }
        let n = reports.len().max(1) as f64;
        rows.push(SweepRow {
            deviation_pct,
            mean_detection_rate: reports.iter().map(|r| r.detection_rate).sum::<f64>() / n,
            mean_fpr_samplewise: reports.iter().map(|r| r.fpr_samplewise).sum::<f64>() / n,
            mean_false_alarm_ratio: reports.iter().map(|r| r.false_alarm_ratio).sum::<f64>() / n,
            reports,
        });
    }
    Ok(SweepTable { rows })
}

/// Throughput and latency of the detection loop itself, I/O excluded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchStats {
    pub samples: usize,
    pub repetitions: usize,
    pub per_sample: LatencyStats,
    pub samples_per_s: f64,
    /// Matrix derivation plus one full detection pass, for comparability
    /// with end-to-end timings that include reference construction.
    pub build_plus_detect_s: f64,
}

/// Minimum trace size for stable latency statistics.
pub const BENCH_MIN_SAMPLES: usize = 10_000;
const BENCH_CHUNK: usize = 64;

/// Measure the hot lookup loop over a pre-quantized bin series.
///
/// Percentiles are computed over per-chunk means (64 transitions per
/// chunk) so the timer overhead is not what gets measured.
pub fn bench(
    lut: &ReferenceLut,
    bins: &[usize],
    theta: f64,
    repetitions: usize,
) -> Result<BenchStats, EvalError> {
    if repetitions == 0 {
        return Err(EvalError::ZeroRepetitions);
    }
    if bins.len() < BENCH_MIN_SAMPLES {
        return Err(EvalError::TraceTooSmall {
            len: bins.len(),
            needed: BENCH_MIN_SAMPLES,
        });
    }
    let order = lut.quantizer().order();
    if let Some(&bad) = bins.iter().find(|&&b| b >= order) {
        return Err(DetectorError::BinOutOfRange { bin: bad, order }.into());
    }

    let build_start = Instant::now();
    let reference = lut.self_info();
    let mut exceed = 0usize;
    for pair in bins.windows(2) {
        if reference.value(pair[0], pair[1]) > theta {
            exceed += 1;
        }
    }
    let build_plus_detect_s = build_start.elapsed().as_secs_f64();
    std::hint::black_box(exceed);

    let mut chunk_means_ns: Vec<f64> = Vec::with_capacity(repetitions * bins.len() / BENCH_CHUNK);
    let mut total_seconds = 0.0;
    let mut total_transitions = 0u64;
    for _ in 0..repetitions {
        let mut i = 1;
        while i < bins.len() {
            let end = (i + BENCH_CHUNK).min(bins.len());
            let started = Instant::now();
            let mut hits = 0usize;
            for k in i..end {
                if reference.value(bins[k - 1], bins[k]) > theta {
                    hits += 1;
                }
            }
            let elapsed = started.elapsed();
            std::hint::black_box(hits);
            let n = (end - i) as f64;
            chunk_means_ns.push(elapsed.as_nanos() as f64 / n);
            total_seconds += elapsed.as_secs_f64();
            total_transitions += (end - i) as u64;
            i = end;
        }
    }

    chunk_means_ns.sort_by(|a, b| a.total_cmp(b));
    let pick = |q: f64| -> f64 {
        let rank = ((q * chunk_means_ns.len() as f64).ceil() as usize)
            .clamp(1, chunk_means_ns.len());
        chunk_means_ns[rank - 1]
    };
    Ok(BenchStats {
        samples: bins.len(),
        repetitions,
        per_sample: LatencyStats {
            p50_ns: pick(0.50),
            p99_ns: pick(0.99),
            max_ns: *chunk_means_ns.last().unwrap(),
        },
        samples_per_s: total_transitions as f64 / total_seconds,
        build_plus_detect_s,
    })
}

/// A complete canned experiment for one scenario: trace size, campaign
/// shape and the detector settings used to reproduce it.
///
/// Injected content must be something the reference cannot contain, which
/// is the definition of a bad-injection attack; the targeting constraints
/// guarantee that by keeping every injected value more bins away from its
/// neighbors than the walk can travel in one step.
#[derive(Debug, Clone, PartialEq)]
pub struct ReproProtocol {
    pub scenario: Scenario,
    pub n_samples: usize,
    pub n_one_time: usize,
    pub n_replay: usize,
    pub deviation_pct: f64,
    pub replay_len: usize,
    pub min_separation: usize,
    pub targeting: TargetingConstraints,
    pub quantizer: Quantizer,
    pub epsilon: f64,
    pub calibration_quantile: f64,
    pub policy: MatchPolicy,
    /// Valid physical range of the signal; injected values are kept inside.
    pub valid_min: f64,
    pub valid_max: f64,
}

impl ReproProtocol {
    /// Urban run: 263,023 samples, 3 one-time + 9 replay attacks.
    ///
    /// One-time deviation is 40% with targets at >= 35 km/h: the injected
    /// value then lands at least 7 bins away from both neighbors, which an
    /// urban walk bounded at 6 km/h per step can never produce.
    pub fn urban() -> Self {
        Self {
            scenario: Scenario::Urban,
            n_samples: 263_023,
            n_one_time: 3,
            n_replay: 9,
            deviation_pct: 40.0,
            replay_len: 520,
            min_separation: 128,
            targeting: TargetingConstraints {
                min_target_value: 35.0,
                min_junction_delta: 10.0,
            },
            quantizer: Quantizer::new(0.0, 250.0, 1.0).expect("static quantizer"),
            epsilon: DEFAULT_EPSILON,
            calibration_quantile: 1.0,
            policy: MatchPolicy::default(),
            valid_min: 0.0,
            valid_max: 160.0,
        }
    }

    /// Highway run: 274,487 samples, 6 one-time attacks.
    pub fn highway() -> Self {
        Self {
            scenario: Scenario::Highway,
            n_samples: 274_487,
            n_one_time: 6,
            n_replay: 0,
            deviation_pct: 20.0,
            replay_len: 520,
            min_separation: 128,
            targeting: TargetingConstraints {
                min_target_value: 35.0,
                min_junction_delta: 6.0,
            },
            quantizer: Quantizer::new(0.0, 250.0, 1.0).expect("static quantizer"),
            epsilon: DEFAULT_EPSILON,
            calibration_quantile: 1.0,
            policy: MatchPolicy::default(),
            valid_min: 0.0,
            valid_max: 160.0,
        }
    }

    pub fn for_scenario(scenario: Scenario) -> Self {
        match scenario {
            Scenario::Urban => Self::urban(),
            Scenario::Highway => Self::highway(),
        }
    }
}

/// Everything one reproduction run produces.
#[derive(Debug, Clone)]
pub struct ReproOutcome {
    pub clean: Vec<Sample>,
    pub mutated: Vec<Sample>,
    pub specs: Vec<crate::inject::AttackSpec>,
    pub truth: GroundTruth,
    pub events: Vec<AnomalyEvent>,
    pub theta: f64,
    pub lut: ReferenceLut,
    pub report: EvalReport,
}

/// Generate, train, inject, detect and score one full scenario run.
/// Deterministic given the seed; timings land in the report.
pub fn run_repro(protocol: &ReproProtocol, seed: u64) -> Result<ReproOutcome, EvalError> {
    let clean = gen_drive_trace(protocol.scenario, protocol.n_samples, seed);
    let quantizer = protocol.quantizer;

    let train_started = Instant::now();
    let train_bins = quantizer.bins(clean.iter().map(|s| s.value));
    let counts = train(&train_bins, quantizer.order())?;
    let reference = derive_self_info(&counts, protocol.epsilon)?;
    let theta = calibrate_threshold(&reference, &train_bins, protocol.calibration_quantile)?;
    let train_time_s = train_started.elapsed().as_secs_f64();

    let params = CampaignParams {
        n_one_time: protocol.n_one_time,
        n_replay: protocol.n_replay,
        deviation_pct: protocol.deviation_pct,
        random_value: false,
        replay_len: protocol.replay_len,
        min_separation: protocol.min_separation,
        seed,
    };
    let specs = plan_campaign_targeted(&clean, &params, &protocol.targeting)?;
    let ctx = InjectContext {
        min_value: protocol.valid_min,
        max_value: protocol.valid_max,
        strict: false,
    };
    let (mutated, truth) = apply_campaign(&clean, &specs, &ctx)?;

    let test_started = Instant::now();
    let test_bins = quantizer.bins(mutated.iter().map(|s| s.value));
    let timestamps: Vec<f64> = mutated.iter().map(|s| s.timestamp).collect();
    let events = detect_streaming(&reference, theta, &test_bins, Some(&timestamps))?;
    let test_time_s = test_started.elapsed().as_secs_f64();

    let mut report = score(&events, &truth, &protocol.policy, mutated.len())?;
    report.train_time_s = train_time_s;
    report.test_time_s = test_time_s;

    let lut = ReferenceLut::new(quantizer, protocol.epsilon, counts)
        .map_err(|e| MatrixError::InvalidQuantizer(e.to_string()))?;
    Ok(ReproOutcome {
        clean,
        mutated,
        specs,
        truth,
        events,
        theta,
        lut,
        report,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Highway,
    Urban,
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scenario::Highway => write!(f, "highway"),
            Scenario::Urban => write!(f, "urban"),
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "highway" => Ok(Scenario::Highway),
            "urban" => Ok(Scenario::Urban),
            other => Err(format!("unknown scenario {other:?} (expected highway|urban)")),
        }
    }
}

/// Walk bounds per scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioParams {
    /// Hard cap on |v(t+1) - v(t)| per sample, in km/h.
    pub max_step: f64,
    pub v_min: f64,
    pub v_max: f64,
}

impl ScenarioParams {
    pub fn for_scenario(scenario: Scenario) -> Self {
        match scenario {
            Scenario::Highway => Self {
                max_step: 2.0,
                v_min: 0.0,
                v_max: 160.0,
            },
            Scenario::Urban => Self {
                max_step: 6.0,
                v_min: 0.0,
                v_max: 160.0,
            },
        }
    }
}

enum UrbanPhase {
    Stopped { dwell: u32 },
    /// Moving toward a new cruise target, up or down, in bounded steps.
    Adjusting { target: f64 },
    Cruising { left: u32, target: f64 },
    Braking,
}

/// Seeded bounded random-walk velocity at 260 Hz in [0, 160] km/h.
///
/// Highway drives hold a high cruising band with small per-step deltas;
/// urban drives cycle through stop, acceleration, cruise and braking
/// phases with larger deltas and frequent dwell near 0.
pub fn gen_drive_trace(scenario: Scenario, n_samples: usize, seed: u64) -> Vec<Sample> {
    let params = ScenarioParams::for_scenario(scenario);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_samples);
    match scenario {
        Scenario::Urban => gen_urban(&mut rng, n_samples, &params, &mut out),
        Scenario::Highway => gen_highway(&mut rng, n_samples, &params, &mut out),
    }
    out
}

fn gen_urban(rng: &mut ChaCha8Rng, n: usize, p: &ScenarioParams, out: &mut Vec<Sample>) {
    let mut v: f64 = 0.0;
    let mut phase = UrbanPhase::Stopped {
        dwell: rng.gen_range(130..=1040),
    };
    for i in 0..n {
        out.push(Sample {
            timestamp: i as f64 / SAMPLE_RATE_HZ,
            value: v,
        });
        phase = match phase {
            UrbanPhase::Stopped { dwell } => {
                if dwell <= 1 {
                    UrbanPhase::Adjusting {
                        target: rng.gen_range(10.0..=80.0),
                    }
                } else {
                    UrbanPhase::Stopped { dwell: dwell - 1 }
                }
            }
            UrbanPhase::Adjusting { target } => {
                let step = rng.gen_range(0.3 * p.max_step..=p.max_step);
                if v < target {
                    v = (v + step).min(target).min(p.v_max);
                } else {
                    v = (v - step).max(target).max(p.v_min);
                }
                if v == target {
                    UrbanPhase::Cruising {
                        left: rng.gen_range(260..=3900),
                        target,
                    }
                } else {
                    UrbanPhase::Adjusting { target }
                }
            }
            UrbanPhase::Cruising { left, target } => {
                let jitter = rng.gen_range(-0.5 * p.max_step..=0.5 * p.max_step);
                let pull = 0.05 * (target - v);
                v = (v + (jitter + pull).clamp(-p.max_step, p.max_step))
                    .clamp(p.v_min, p.v_max);
                if left <= 1 {
                    if rng.gen_bool(0.6) {
                        UrbanPhase::Braking
                    } else {
                        UrbanPhase::Adjusting {
                            target: rng.gen_range(10.0..=80.0),
                        }
                    }
                } else {
                    UrbanPhase::Cruising { left: left - 1, target }
                }
            }
            UrbanPhase::Braking => {
                let step = rng.gen_range(0.3 * p.max_step..=p.max_step);
                v = (v - step).max(0.0);
                if v == 0.0 {
                    UrbanPhase::Stopped {
                        dwell: rng.gen_range(130..=2600),
                    }
                } else {
                    UrbanPhase::Braking
                }
            }
        };
    }
}

fn gen_highway(rng: &mut ChaCha8Rng, n: usize, p: &ScenarioParams, out: &mut Vec<Sample>) {
    let mut v: f64 = rng.gen_range(85.0..=125.0);
    let mut target: f64 = rng.gen_range(80.0..=130.0);
    let mut retime: u32 = rng.gen_range(1040..=7800);
    for i in 0..n {
        out.push(Sample {
            timestamp: i as f64 / SAMPLE_RATE_HZ,
            value: v,
        });
        let jitter = rng.gen_range(-0.6 * p.max_step..=0.6 * p.max_step);
        let pull = 0.1 * (target - v);
        v = (v + (jitter + pull).clamp(-p.max_step, p.max_step)).clamp(40.0, p.v_max);
        if retime <= 1 {
            target = rng.gen_range(80.0..=130.0);
            retime = rng.gen_range(1040..=7800);
        } else {
            retime -= 1;
        }
    }
}
