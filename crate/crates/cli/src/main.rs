//! siads: train a self-information transition reference over an
//! in-vehicle signal stream and flag one-time / replay attacks against it.

mod cfgfile;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use siads_core::detector::DetectorMode;
use siads_core::eval::Scenario;
use siads_core::ingest::TraceFormat;
use siads_core::simatrix::DEFAULT_EPSILON;

const EXIT_USAGE: u8 = 64;

#[derive(Parser, Debug)]
#[command(
    name = "siads",
    version,
    about = "Self-information anomaly detection for in-vehicle signal streams",
    after_help = "Exit codes: 0 clean, 1 anomalies found, 2 data error, 3 I/O error, 64 usage.\n\
                  Any long flag can also be set from a key=value file via --config; \
                  explicit flags override the file."
)]
struct Cli {
    /// key=value file supplying defaults for any flag
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a reference LUT from a clean trace
    Train(TrainArgs),
    /// Detect anomalies in a trace against a reference LUT
    Detect(DetectArgs),
    /// Inject a labeled attack campaign into a clean trace
    Inject(InjectArgs),
    /// Score an events file against ground truth
    Evaluate(EvaluateArgs),
    /// Measure detection throughput and per-sample latency
    Bench(BenchArgs),
    /// Generate a synthetic drive trace
    Gen(GenArgs),
    /// Run the full generate/train/inject/detect/score pipeline
    Repro(ReproArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    /// Infer from the first line
    Auto,
    Csv,
    Candump,
}

impl FormatArg {
    pub fn as_trace_format(self) -> Option<TraceFormat> {
        match self {
            FormatArg::Auto => None,
            FormatArg::Csv => Some(TraceFormat::Csv),
            FormatArg::Candump => Some(TraceFormat::Candump),
        }
    }
}

fn parse_hex_id(s: &str) -> Result<u32, String> {
    let digits = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")).unwrap_or(s);
    u32::from_str_radix(digits, 16).map_err(|e| format!("bad CAN id {s:?}: {e}"))
}

/// Trace input plus the optional candump signal decode rule.
#[derive(clap::Args, Debug, Clone)]
pub struct InputArgs {
    /// Trace file (signal CSV or candump log)
    #[arg(long, value_name = "PATH")]
    pub input: PathBuf,

    #[arg(long, value_enum, default_value_t = FormatArg::Auto)]
    pub format: FormatArg,

    /// CAN id carrying the signal (hex); enables candump decoding
    #[arg(long, value_parser = parse_hex_id, value_name = "HEX")]
    pub can_id: Option<u32>,

    #[arg(long, default_value_t = 0)]
    pub byte_offset: usize,

    #[arg(long, default_value_t = 16)]
    pub bit_length: u32,

    /// Physical units per raw count
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,

    /// Physical offset added after scaling
    #[arg(long, default_value_t = 0.0)]
    pub offset: f64,

    #[arg(long, default_value = "km/h")]
    pub unit: String,

    /// Valid physical range of the decoded signal
    #[arg(long, default_value_t = 0.0)]
    pub signal_min: f64,

    #[arg(long, default_value_t = 160.0)]
    pub signal_max: f64,
}

#[derive(clap::Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub input: InputArgs,

    /// Quantizer minimum (physical units)
    #[arg(long)]
    pub min: f64,

    /// Quantizer maximum (physical units)
    #[arg(long)]
    pub max: f64,

    /// Quantizer bin width (physical units); 1.0 indexes the matrix by
    /// integer signal value
    #[arg(long)]
    pub bin_width: f64,

    /// Smoothing probability for unseen transitions
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,

    /// Calibration quantile reported in the summary
    #[arg(long, default_value_t = 0.999)]
    pub quantile: f64,

    /// Output LUT path
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}

#[derive(clap::Args, Debug)]
pub struct DetectArgs {
    #[command(flatten)]
    pub input: InputArgs,

    /// Reference LUT produced by `train`
    #[arg(long, value_name = "PATH")]
    pub lut: PathBuf,

    #[arg(long, value_enum, default_value_t = ModeArg::Streaming)]
    pub mode: ModeArg,

    /// Detection threshold in bits
    #[arg(long, required_unless_present = "calibrate_trace")]
    pub threshold_bits: Option<f64>,

    /// Calibrate the threshold from this trace instead of --threshold-bits
    #[arg(long, value_name = "PATH")]
    pub calibrate_trace: Option<PathBuf>,

    /// Calibration quantile used with --calibrate-trace
    #[arg(long, default_value_t = 0.999)]
    pub quantile: f64,

    /// Window length for windowed mode
    #[arg(long, default_value_t = 64)]
    pub window_len: usize,

    /// Enable online reference decay with this per-transition retention
    #[arg(long, value_name = "LAMBDA")]
    pub online_lambda: Option<f64>,

    /// Events CSV output path
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Streaming,
    Windowed,
}

impl ModeArg {
    pub fn as_detector_mode(self) -> DetectorMode {
        match self {
            ModeArg::Streaming => DetectorMode::Streaming,
            ModeArg::Windowed => DetectorMode::Windowed,
        }
    }
}

#[derive(clap::Args, Debug)]
pub struct InjectArgs {
    #[command(flatten)]
    pub input: InputArgs,

    /// Apply a pre-planned campaign file instead of planning one
    #[arg(long, value_name = "PATH")]
    pub campaign: Option<PathBuf>,

    /// Number of one-time attacks to plan
    #[arg(long, default_value_t = 3)]
    pub one_time: usize,

    /// Number of replay attacks to plan
    #[arg(long, default_value_t = 9)]
    pub replay: usize,

    /// One-time deviation in percent
    #[arg(long, default_value_t = 20.0)]
    pub deviation: f64,

    /// Draw one-time values uniformly over the valid range instead of
    /// applying the deviation
    #[arg(long)]
    pub random_value: bool,

    #[arg(long, default_value_t = 520)]
    pub replay_len: usize,

    #[arg(long, default_value_t = 128)]
    pub min_separation: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Valid physical range for injected values
    #[arg(long, default_value_t = 0.0)]
    pub min: f64,

    #[arg(long, default_value_t = 160.0)]
    pub max: f64,

    /// Fail instead of clamping when a deviation leaves the valid range
    #[arg(long)]
    pub strict: bool,

    /// Mutated trace output path
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,

    /// Ground-truth CSV output path
    #[arg(long, value_name = "PATH")]
    pub truth_out: PathBuf,

    /// Optional campaign CSV output path
    #[arg(long, value_name = "PATH")]
    pub campaign_out: Option<PathBuf>,
}

#[derive(clap::Args, Debug)]
pub struct EvaluateArgs {
    /// Events CSV produced by `detect`
    #[arg(long, value_name = "PATH")]
    pub events: PathBuf,

    /// Ground-truth CSV produced by `inject`
    #[arg(long, value_name = "PATH")]
    pub truth: PathBuf,

    /// Length of the evaluated trace in samples
    #[arg(long)]
    pub trace_len: usize,

    /// Event-to-attack matching tolerance in samples
    #[arg(long, default_value_t = 2)]
    pub tolerance: usize,

    /// Write <prefix>.csv and <prefix>.txt reports
    #[arg(long, value_name = "PREFIX")]
    pub report_out: Option<PathBuf>,
}

#[derive(clap::Args, Debug)]
pub struct BenchArgs {
    #[command(flatten)]
    pub input: InputArgs,

    #[arg(long, value_name = "PATH")]
    pub lut: PathBuf,

    #[arg(long)]
    pub threshold_bits: f64,

    #[arg(long, default_value_t = 5)]
    pub repetitions: usize,
}

fn parse_scenario(s: &str) -> Result<Scenario, String> {
    s.parse()
}

#[derive(clap::Args, Debug)]
pub struct GenArgs {
    #[arg(long, value_parser = parse_scenario)]
    pub scenario: Scenario,

    /// Sample count; defaults to the scenario's repro size
    /// (274,487 highway / 263,023 urban)
    #[arg(long)]
    pub samples: Option<usize>,

    #[arg(long, default_value_t = 7)]
    pub seed: u64,

    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}

#[derive(clap::Args, Debug)]
pub struct ReproArgs {
    #[arg(long, value_parser = parse_scenario)]
    pub scenario: Scenario,

    #[arg(long, default_value_t = 7)]
    pub seed: u64,

    /// Artifact directory; defaults to repro-<scenario>-seed<seed>
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let spliced = match cfgfile::splice(argv) {
        Ok(v) => v,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(3);
        }
    };

    let cli = match Cli::try_parse_from(&spliced) {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let _ = err.print();
            return match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };

    let outcome = match &cli.command {
        Command::Train(args) => commands::cmd_train(args),
        Command::Detect(args) => commands::cmd_detect(args),
        Command::Inject(args) => commands::cmd_inject(args),
        Command::Evaluate(args) => commands::cmd_evaluate(args),
        Command::Bench(args) => commands::cmd_bench(args),
        Command::Gen(args) => commands::cmd_gen(args),
        Command::Repro(args) => commands::cmd_repro(args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
