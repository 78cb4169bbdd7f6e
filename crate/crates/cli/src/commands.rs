//! Subcommand implementations.
//!
//! Exit codes: 0 clean, 1 anomalies found, 2 data error, 3 I/O or file
//! format error, 64 usage (the last one is produced by argument parsing
//! in main).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use siads_core::detector::{
    calibrate_threshold, detect_streaming, detect_streaming_adaptive, detect_windowed,
    AnomalyEvent, DetectorConfig, DetectorError, DetectorMode, OnlineUpdate,
};
use siads_core::eval::{
    bench, render_plot_csv, render_report_csv, render_report_text, run_repro, score,
    EvalError, MatchPolicy, ReproProtocol, Scenario,
};
use siads_core::ingest::{
    decode_signal, parse_trace, write_samples_csv, IngestError, Sample, SignalSpec, TraceFormat,
};
use siads_core::inject::{
    apply_campaign, plan_campaign, AttackSpec, CampaignParams, GroundTruth, InjectContext,
    InjectError, TruthEntry,
};
use siads_core::lut::{LutError, ReferenceLut};
use siads_core::simatrix::{derive_self_info, train, MatrixError, Quantizer};

use crate::{
    BenchArgs, DetectArgs, EvaluateArgs, GenArgs, InjectArgs, InputArgs, ReproArgs, TrainArgs,
};

/// Failures mapped onto exit codes 2 (data) and 3 (I/O or file format).
#[derive(Debug)]
pub enum CliError {
    Data(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Data(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Data(msg) | CliError::Io(msg) => write!(f, "{msg}"),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Io(inner) => CliError::Io(inner.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<MatrixError> for CliError {
    fn from(e: MatrixError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<DetectorError> for CliError {
    fn from(e: DetectorError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<InjectError> for CliError {
    fn from(e: InjectError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<LutError> for CliError {
    fn from(e: LutError) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Data(e.to_string())
    }
}

fn open_input(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Io(format!("cannot open {}: {e}", path.display())))
}

fn create_output(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))
}

const MAX_LINE_WARNINGS: usize = 10;

/// Read a trace file into samples, decoding frames through the signal
/// spec when the input is a candump log. Malformed lines are warned about
/// on stderr, not fatal; an input that yields nothing usable is.
pub fn read_samples(args: &InputArgs) -> Result<Vec<Sample>, CliError> {
    let reader = open_input(&args.input)?;
    let parsed = parse_trace(reader, args.format.as_trace_format())?;
    for err in parsed.errors.iter().take(MAX_LINE_WARNINGS) {
        eprintln!("warning: {}: {err}", args.input.display());
    }
    if parsed.errors.len() > MAX_LINE_WARNINGS {
        eprintln!(
            "warning: {}: {} malformed lines total",
            args.input.display(),
            parsed.errors.len()
        );
    }
    match parsed.format {
        Some(TraceFormat::Csv) | None => Ok(parsed.samples()),
        Some(TraceFormat::Candump) => {
            let spec = args.signal_spec()?.ok_or_else(|| {
                CliError::Data(format!(
                    "{} is a candump log; signal decoding needs --can-id (plus optional \
                     --byte-offset/--bit-length/--scale/--offset)",
                    args.input.display()
                ))
            })?;
            let mut samples = Vec::new();
            let mut short = 0usize;
            let mut out_of_range = 0usize;
            for frame in parsed.frames() {
                if frame.can_id != spec.can_id {
                    continue;
                }
                match decode_signal(&frame, &spec) {
                    Ok(decoded) => {
                        if decoded.out_of_range {
                            out_of_range += 1;
                        }
                        samples.push(decoded.sample);
                    }
                    Err(IngestError::PayloadTooShort { .. }) => short += 1,
                    Err(other) => return Err(other.into()),
                }
            }
            if short > 0 {
                eprintln!("warning: {short} matching frames had too-short payloads");
            }
            if out_of_range > 0 {
                eprintln!("warning: {out_of_range} decoded values fall outside the physical range");
            }
            Ok(samples)
        }
    }
}

/// Quantize a sample series, warning once about values that had to be
/// clamped into the matrix range (they are detector input, not errors).
fn quantize_samples(quantizer: &Quantizer, samples: &[Sample]) -> Vec<usize> {
    let mut clamped = 0usize;
    let bins = samples
        .iter()
        .map(|s| {
            let q = quantizer.quantize(s.value);
            if q.out_of_range {
                clamped += 1;
            }
            q.bin
        })
        .collect();
    if clamped > 0 {
        eprintln!("warning: {clamped} samples outside the quantizer range were clamped");
    }
    bins
}

impl InputArgs {
    fn signal_spec(&self) -> Result<Option<SignalSpec>, CliError> {
        match self.can_id {
            None => Ok(None),
            Some(id) => Ok(Some(SignalSpec::new(
                id,
                self.byte_offset,
                self.bit_length,
                self.scale,
                self.offset,
                self.unit.clone(),
                self.signal_min,
                self.signal_max,
            )?)),
        }
    }
}

pub fn cmd_train(args: &TrainArgs) -> Result<i32, CliError> {
    let samples = read_samples(&args.input)?;
    let quantizer = Quantizer::new(args.min, args.max, args.bin_width)?;
    let bins = quantize_samples(&quantizer, &samples);
    let counts = train(&bins, quantizer.order())?;
    let reference = derive_self_info(&counts, args.epsilon)?;
    let theta = calibrate_threshold(&reference, &bins, args.quantile)?;

    let lut = ReferenceLut::new(quantizer, args.epsilon, counts)
        .map_err(|e| CliError::Data(e.to_string()))?;
    lut.save(&args.out)?;

    println!("order               {}", quantizer.order());
    println!("transitions         {}", lut.counts().total_transitions());
    println!("seen_cells          {}", lut.counts().seen_cells());
    println!("e_max_bits          {:.6}", reference.e_max());
    println!("calibrated_theta    {theta:.6}  (quantile {} + 1-bit margin)", args.quantile);
    println!("lut                 {}", args.out.display());
    Ok(0)
}

pub fn cmd_detect(args: &DetectArgs) -> Result<i32, CliError> {
    let lut = ReferenceLut::load(&args.lut)?;
    let reference = lut.self_info();
    let samples = read_samples(&args.input)?;
    let bins = quantize_samples(lut.quantizer(), &samples);
    let timestamps: Vec<f64> = samples.iter().map(|s| s.timestamp).collect();

    let theta = match (args.threshold_bits, &args.calibrate_trace) {
        (Some(theta), _) => theta,
        (None, Some(path)) => {
            let cal_args = InputArgs {
                input: path.clone(),
                ..args.input.clone()
            };
            let cal_samples = read_samples(&cal_args)?;
            let cal_bins = quantize_samples(lut.quantizer(), &cal_samples);
            calibrate_threshold(&reference, &cal_bins, args.quantile)?
        }
        (None, None) => unreachable!("clap enforces one threshold source"),
    };

    let config = DetectorConfig {
        mode: args.mode.as_detector_mode(),
        threshold_bits: theta,
        window_len: args.window_len,
        calibration_quantile: args.quantile,
        online_update: match args.online_lambda {
            Some(lambda) => OnlineUpdate::Decay { lambda },
            None => OnlineUpdate::Off,
        },
    };
    config.validate()?;

    let events = match args.mode.as_detector_mode() {
        DetectorMode::Streaming => match args.online_lambda {
            Some(lambda) => detect_streaming_adaptive(
                lut.counts(),
                lut.epsilon(),
                lambda,
                theta,
                &bins,
                Some(&timestamps),
            )?,
            None => detect_streaming(&reference, theta, &bins, Some(&timestamps))?,
        },
        DetectorMode::Windowed => {
            detect_windowed(&reference, theta, &bins, Some(&timestamps), args.window_len)?
        }
    };

    let mut out = create_output(&args.out)?;
    for event in &events {
        writeln!(out, "{}", event.to_csv_line())?;
    }
    out.flush()?;
    println!(
        "{} anomalies over {} samples (theta {theta:.6} bits) -> {}",
        events.len(),
        samples.len(),
        args.out.display()
    );
    Ok(if events.is_empty() { 0 } else { 1 })
}

fn read_campaign(path: &Path) -> Result<Vec<AttackSpec>, CliError> {
    let reader = open_input(path)?;
    let mut specs = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let spec = AttackSpec::from_csv_line(&line).map_err(|e| {
            CliError::Data(format!("{} line {}: {e}", path.display(), idx + 1))
        })?;
        specs.push(spec);
    }
    Ok(specs)
}

pub fn cmd_inject(args: &InjectArgs) -> Result<i32, CliError> {
    let samples = read_samples(&args.input)?;
    let specs = match &args.campaign {
        Some(path) => read_campaign(path)?,
        None => {
            let params = CampaignParams {
                n_one_time: args.one_time,
                n_replay: args.replay,
                deviation_pct: args.deviation,
                random_value: args.random_value,
                replay_len: args.replay_len,
                min_separation: args.min_separation,
                seed: args.seed,
            };
            plan_campaign(samples.len(), &params)?
        }
    };
    let ctx = InjectContext {
        min_value: args.min,
        max_value: args.max,
        strict: args.strict,
    };
    let (mutated, truth) = apply_campaign(&samples, &specs, &ctx)?;

    write_samples_csv(&mutated, create_output(&args.out)?)?;
    let mut truth_out = create_output(&args.truth_out)?;
    for entry in &truth.entries {
        writeln!(truth_out, "{}", entry.to_csv_line())?;
    }
    truth_out.flush()?;
    if let Some(path) = &args.campaign_out {
        let mut campaign_out = create_output(path)?;
        for spec in &specs {
            writeln!(campaign_out, "{}", spec.to_csv_line())?;
        }
        campaign_out.flush()?;
    }
    println!(
        "{} attacks injected ({} samples affected) -> {}",
        specs.len(),
        truth.attacked_samples(),
        args.out.display()
    );
    Ok(0)
}

fn read_events(path: &Path) -> Result<Vec<AnomalyEvent>, CliError> {
    let reader = open_input(path)?;
    let mut events = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event = AnomalyEvent::from_csv_line(&line).map_err(|e| {
            CliError::Data(format!("{} line {}: {e}", path.display(), idx + 1))
        })?;
        events.push(event);
    }
    Ok(events)
}

fn read_truth(path: &Path) -> Result<GroundTruth, CliError> {
    let reader = open_input(path)?;
    let mut entries = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry = TruthEntry::from_csv_line(&line).map_err(|e| {
            CliError::Data(format!("{} line {}: {e}", path.display(), idx + 1))
        })?;
        entries.push(entry);
    }
    GroundTruth::from_entries(entries).map_err(|e| CliError::Data(e.to_string()))
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<i32, CliError> {
    let events = read_events(&args.events)?;
    let truth = read_truth(&args.truth)?;
    let policy = MatchPolicy {
        tolerance_window: args.tolerance,
    };
    let report = score(&events, &truth, &policy, args.trace_len)?;

    if let Some(prefix) = &args.report_out {
        let csv_path = PathBuf::from(format!("{}.csv", prefix.display()));
        let txt_path = PathBuf::from(format!("{}.txt", prefix.display()));
        create_output(&csv_path)?.write_all(render_report_csv(&report).as_bytes())?;
        create_output(&txt_path)?.write_all(render_report_text(&report).as_bytes())?;
    }
    print!("{}", render_report_text(&report));
    Ok(0)
}

pub fn cmd_bench(args: &BenchArgs) -> Result<i32, CliError> {
    let lut = ReferenceLut::load(&args.lut)?;
    let samples = read_samples(&args.input)?;
    let bins = quantize_samples(lut.quantizer(), &samples);
    let stats = bench(&lut, &bins, args.threshold_bits, args.repetitions)?;
    println!("samples             {}", stats.samples);
    println!("repetitions         {}", stats.repetitions);
    println!("throughput          {:.0} samples/s", stats.samples_per_s);
    println!("per_sample_p50      {:.1} ns", stats.per_sample.p50_ns);
    println!("per_sample_p99      {:.1} ns", stats.per_sample.p99_ns);
    println!("per_sample_max      {:.1} ns", stats.per_sample.max_ns);
    println!("build_plus_detect   {:.6} s", stats.build_plus_detect_s);
    Ok(0)
}

pub fn cmd_gen(args: &GenArgs) -> Result<i32, CliError> {
    let n = args.samples.unwrap_or(match args.scenario {
        Scenario::Highway => 274_487,
        Scenario::Urban => 263_023,
    });
    let trace = siads_core::eval::gen_drive_trace(args.scenario, n, args.seed);
    write_samples_csv(&trace, create_output(&args.out)?)?;
    println!("{n} samples ({}) -> {}", args.scenario, args.out.display());
    Ok(0)
}

pub fn cmd_repro(args: &ReproArgs) -> Result<i32, CliError> {
    let protocol = ReproProtocol::for_scenario(args.scenario);
    let outcome = run_repro(&protocol, args.seed)?;

    let out_dir = args
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("repro-{}-seed{}", args.scenario, args.seed)));
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", out_dir.display())))?;
    let in_dir = |name: &str| out_dir.join(name);

    write_samples_csv(&outcome.clean, create_output(&in_dir("clean.csv"))?)?;
    write_samples_csv(&outcome.mutated, create_output(&in_dir("mutated.csv"))?)?;
    outcome.lut.save(&in_dir("ref.lut"))?;

    let mut campaign = create_output(&in_dir("campaign.csv"))?;
    for spec in &outcome.specs {
        writeln!(campaign, "{}", spec.to_csv_line())?;
    }
    campaign.flush()?;

    let mut truth = create_output(&in_dir("truth.csv"))?;
    for entry in &outcome.truth.entries {
        writeln!(truth, "{}", entry.to_csv_line())?;
    }
    truth.flush()?;

    let mut events = create_output(&in_dir("events.csv"))?;
    for event in &outcome.events {
        writeln!(events, "{}", event.to_csv_line())?;
    }
    events.flush()?;

    create_output(&in_dir("report.csv"))?
        .write_all(render_report_csv(&outcome.report).as_bytes())?;
    create_output(&in_dir("report.txt"))?
        .write_all(render_report_text(&outcome.report).as_bytes())?;
    create_output(&in_dir("plot.csv"))?.write_all(
        render_plot_csv(&outcome.mutated, &outcome.truth, &outcome.events).as_bytes(),
    )?;

    println!("scenario            {}", args.scenario);
    println!("seed                {}", args.seed);
    println!("samples             {}", outcome.mutated.len());
    println!(
        "attacks             {} one-time + {} replay",
        protocol.n_one_time, protocol.n_replay
    );
    println!("theta               {:.6} bits", outcome.theta);
    println!("events              {}", outcome.events.len());
    println!("detection_rate      {:.6}", outcome.report.detection_rate);
    println!("false_anomalies     {}", outcome.report.false_anomaly_count);
    println!("fpr_samplewise      {:.8}", outcome.report.fpr_samplewise);
    // timing goes to stdout only; files stay byte-identical across runs
    println!("train_time          {:.3} s", outcome.report.train_time_s);
    println!("test_time           {:.3} s", outcome.report.test_time_s);
    println!("artifacts           {}", out_dir.display());
    Ok(0)
}
