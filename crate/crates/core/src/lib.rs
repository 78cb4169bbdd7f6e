//! Detection of one-time (bad-injection) and replay attacks on a
//! quantized in-vehicle signal stream.
//!
//! The reference model is a conditional self-information transition
//! matrix: training counts every (previous bin -> current bin) pair in a
//! clean drive, and each cell of the derived look-up table holds
//! `log2(1 / P(current | previous))` in bits. Detection is then a single
//! O(1) lookup per message: transitions that were rare or absent during
//! training carry high self-information and trip the threshold.
//!
//! Modules follow the pipeline:
//!
//! * [`ingest`] — candump / CSV parsing and raw-frame signal decoding
//! * [`simatrix`] — quantization, transition counting, matrix derivation
//! * [`lut`] — binary persistence of the trained reference
//! * [`detector`] — streaming and windowed detection, threshold
//!   calibration, online reference adaptation
//! * [`inject`] — labeled attack synthesis (one-time and replay)
//! * [`eval`] — scoring, deviation sweep, benchmarking, synthetic traces

pub mod detector;
pub mod eval;
pub mod ingest;
pub mod inject;
pub mod lut;
pub mod simatrix;

pub use detector::{
    calibrate_threshold, detect_streaming, detect_streaming_adaptive, detect_windowed,
    AdaptiveReference, AnomalyEvent, DetectorConfig, DetectorError, DetectorMode, OnlineUpdate,
};
pub use eval::{
    bench, contaminate, deviation_sweep, gen_drive_trace, run_repro, score, BenchStats,
    EvalError, EvalReport, MatchPolicy, ReproOutcome, ReproProtocol, Scenario, ScenarioParams,
    SweepConfig, SweepTable, SAMPLE_RATE_HZ,
};
pub use ingest::{
    decode_signal, parse_trace, resample_check, CanFrame, IngestError, Sample, SignalSpec,
    TraceFormat,
};
pub use inject::{
    apply_campaign, inject_one_time, inject_replay, plan_campaign, plan_campaign_targeted,
    AttackKind, AttackSpec, CampaignParams, GroundTruth, InjectContext, InjectError,
    TargetingConstraints, TruthEntry,
};
pub use lut::{LutError, ReferenceLut};
pub use simatrix::{
    derive_self_info, merge_counts, train, MatrixError, Quantized, Quantizer, SelfInfoMatrix,
    TransitionCounts, DEFAULT_EPSILON,
};
