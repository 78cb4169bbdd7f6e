//! Trace ingestion: candump text logs, two-column signal CSVs, and raw
//! CAN-frame signal decoding into timestamped physical values.
//!
//! Parsing is line-oriented and fault-tolerant: malformed lines are
//! collected with their 1-based line numbers instead of aborting, so a
//! long field capture survives minor corruption.

use std::io::BufRead;

use thiserror::Error;

/// CAN payloads carry at most 8 data bytes.
pub const MAX_PAYLOAD_LEN: usize = 8;
/// Extended CAN identifiers are 29 bits.
pub const MAX_CAN_ID: u32 = (1 << 29) - 1;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("read error: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot infer trace format from first line {line:?}")]
    UnknownFormat { line: String },
    #[error("invalid signal spec: {0}")]
    InvalidSpec(String),
    #[error("payload too short: field needs {needed} bytes at offset {offset}, payload has {have}")]
    PayloadTooShort {
        needed: usize,
        offset: usize,
        have: usize,
    },
    #[error("frame id {frame:#x} does not match spec id {spec:#x}")]
    CanIdMismatch { frame: u32, spec: u32 },
    #[error("fewer than 2 samples")]
    TooFewSamples,
}

/// One raw frame as logged by candump.
#[derive(Debug, Clone, PartialEq)]
pub struct CanFrame {
    /// Seconds, fractional; kept exactly as received.
    pub timestamp: f64,
    pub bus: String,
    pub can_id: u32,
    pub payload: Vec<u8>,
}

impl CanFrame {
    /// Canonical candump text form: `(<secs>.<usecs>) <bus> <ID>#<payload>`
    /// with uppercase hex, 3 ID digits for standard ids and 8 for extended.
    pub fn to_candump_line(&self) -> String {
        let id = if self.can_id < 0x800 {
            format!("{:03X}", self.can_id)
        } else {
            format!("{:08X}", self.can_id)
        };
        let mut hex = String::with_capacity(self.payload.len() * 2);
        for b in &self.payload {
            hex.push_str(&format!("{b:02X}"));
        }
        format!("({:.6}) {} {}#{}", self.timestamp, self.bus, id, hex)
    }
}

/// How to pull one physical signal out of a raw frame.
///
/// The field is an unsigned big-endian bit string that starts at the most
/// significant bit of `byte_offset` and runs for `bit_length` bits;
/// `physical = raw * scale + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSpec {
    pub can_id: u32,
    pub byte_offset: usize,
    pub bit_length: u32,
    pub scale: f64,
    pub offset: f64,
    pub unit: String,
    pub min_physical: f64,
    pub max_physical: f64,
}

impl SignalSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        can_id: u32,
        byte_offset: usize,
        bit_length: u32,
        scale: f64,
        offset: f64,
        unit: impl Into<String>,
        min_physical: f64,
        max_physical: f64,
    ) -> Result<Self, IngestError> {
        if can_id > MAX_CAN_ID {
            return Err(IngestError::InvalidSpec(format!(
                "can_id {can_id:#x} exceeds 29 bits"
            )));
        }
        if bit_length == 0 || bit_length > 64 {
            return Err(IngestError::InvalidSpec(format!(
                "bit_length must be 1..=64, got {bit_length}"
            )));
        }
        let span = byte_offset + bit_length.div_ceil(8) as usize;
        if span > MAX_PAYLOAD_LEN {
            return Err(IngestError::InvalidSpec(format!(
                "field spans {span} bytes from offset {byte_offset}, payload holds at most 8"
            )));
        }
        if scale == 0.0 || !scale.is_finite() {
            return Err(IngestError::InvalidSpec("scale must be finite and nonzero".into()));
        }
        if min_physical.is_nan() || max_physical.is_nan() || min_physical >= max_physical {
            return Err(IngestError::InvalidSpec(format!(
                "min_physical {min_physical} must be below max_physical {max_physical}"
            )));
        }
        Ok(Self {
            can_id,
            byte_offset,
            bit_length,
            scale,
            offset,
            unit: unit.into(),
            min_physical,
            max_physical,
        })
    }
}

/// One timestamped physical value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub timestamp: f64,
    pub value: f64,
}

/// A decoded sample plus whether it violated the spec's physical range.
/// Range violations are detector input, not ingest failures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodedSample {
    pub sample: Sample,
    pub out_of_range: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceFormat {
    Candump,
    Csv,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Record {
    Frame(CanFrame),
    Sample(Sample),
}

/// A malformed input line, 1-based.
#[derive(Debug, Clone, PartialEq)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for LineError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Default, Clone, PartialEq)]
pub struct ParsedTrace {
    pub format: Option<TraceFormat>,
    pub records: Vec<Record>,
    pub errors: Vec<LineError>,
}

impl ParsedTrace {
    pub fn samples(self) -> Vec<Sample> {
        self.records
            .into_iter()
            .filter_map(|r| match r {
                Record::Sample(s) => Some(s),
                Record::Frame(_) => None,
            })
            .collect()
    }

    pub fn frames(self) -> Vec<CanFrame> {
        self.records
            .into_iter()
            .filter_map(|r| match r {
                Record::Frame(f) => Some(f),
                Record::Sample(_) => None,
            })
            .collect()
    }
}

/// Parse a line-oriented trace stream.
///
/// With `format = None` the format is inferred from the first non-empty
/// line: candump lines start with `(`, CSV lines contain a comma.
/// Records come back in file order; lines that fail to parse are reported
/// in `errors` with their line numbers rather than dropped silently.
pub fn parse_trace<R: BufRead>(
    reader: R,
    format: Option<TraceFormat>,
) -> Result<ParsedTrace, IngestError> {
    let mut out = ParsedTrace {
        format,
        ..ParsedTrace::default()
    };
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fmt = match out.format {
            Some(f) => f,
            None => {
                let inferred = infer_format(trimmed).ok_or_else(|| IngestError::UnknownFormat {
                    line: trimmed.to_string(),
                })?;
                out.format = Some(inferred);
                inferred
            }
        };
        match fmt {
            TraceFormat::Candump => match parse_candump_line(trimmed) {
                Ok(frame) => out.records.push(Record::Frame(frame)),
                Err(message) => out.errors.push(LineError { line: lineno, message }),
            },
            TraceFormat::Csv => {
                // An optional header is tolerated only on the first line.
                if lineno == 1 && looks_like_csv_header(trimmed) {
                    continue;
                }
                match parse_csv_line(trimmed) {
                    Ok(sample) => out.records.push(Record::Sample(sample)),
                    Err(message) => out.errors.push(LineError { line: lineno, message }),
                }
            }
        }
    }
    Ok(out)
}

fn infer_format(line: &str) -> Option<TraceFormat> {
    if line.starts_with('(') {
        Some(TraceFormat::Candump)
    } else if line.contains(',') {
        Some(TraceFormat::Csv)
    } else {
        None
    }
}

fn looks_like_csv_header(line: &str) -> bool {
    let mut fields = line.split(',');
    match (fields.next(), fields.next(), fields.next()) {
        (Some(first), Some(_), None) => first.trim().parse::<f64>().is_err(),
        _ => false,
    }
}

/// Parse one `(<secs>.<usecs>) <bus> <ID-hex>#<payload-hex>` line.
pub fn parse_candump_line(line: &str) -> Result<CanFrame, String> {
    let rest = line
        .strip_prefix('(')
        .ok_or_else(|| "expected leading '(' for timestamp".to_string())?;
    let close = rest
        .find(')')
        .ok_or_else(|| "unterminated timestamp".to_string())?;
    let timestamp: f64 = rest[..close]
        .parse()
        .map_err(|_| format!("bad timestamp {:?}", &rest[..close]))?;
    if !timestamp.is_finite() {
        return Err("timestamp is not finite".to_string());
    }

    let mut tokens = rest[close + 1..].split_whitespace();
    let bus = tokens
        .next()
        .ok_or_else(|| "missing bus label".to_string())?;
    let frame = tokens
        .next()
        .ok_or_else(|| "missing <ID>#<payload> field".to_string())?;
    if tokens.next().is_some() {
        return Err("trailing tokens after frame field".to_string());
    }

    let (id_hex, payload_hex) = frame
        .split_once('#')
        .ok_or_else(|| "frame field lacks '#'".to_string())?;
    if id_hex.len() != 3 && id_hex.len() != 8 {
        return Err(format!(
            "CAN id must be 3 or 8 hex digits, got {} ({id_hex:?})",
            id_hex.len()
        ));
    }
    let can_id = u32::from_str_radix(id_hex, 16).map_err(|_| format!("bad CAN id {id_hex:?}"))?;
    if can_id > MAX_CAN_ID {
        return Err(format!("CAN id {can_id:#x} exceeds 29 bits"));
    }

    if payload_hex.len() % 2 != 0 {
        return Err("payload hex has odd length".to_string());
    }
    if payload_hex.len() > MAX_PAYLOAD_LEN * 2 {
        return Err(format!(
            "payload of {} bytes exceeds 8",
            payload_hex.len() / 2
        ));
    }
    let mut payload = Vec::with_capacity(payload_hex.len() / 2);
    for i in (0..payload_hex.len()).step_by(2) {
        let byte = u8::from_str_radix(&payload_hex[i..i + 2], 16)
            .map_err(|_| format!("bad payload hex {:?}", &payload_hex[i..i + 2]))?;
        payload.push(byte);
    }

    Ok(CanFrame {
        timestamp,
        bus: bus.to_string(),
        can_id,
        payload,
    })
}

/// Parse one `timestamp,value` line.
pub fn parse_csv_line(line: &str) -> Result<Sample, String> {
    let (ts, val) = line
        .split_once(',')
        .ok_or_else(|| "expected 'timestamp,value'".to_string())?;
    if val.contains(',') {
        return Err("expected exactly 2 columns".to_string());
    }
    let timestamp: f64 = ts
        .trim()
        .parse()
        .map_err(|_| format!("bad timestamp {:?}", ts.trim()))?;
    let value: f64 = val
        .trim()
        .parse()
        .map_err(|_| format!("bad value {:?}", val.trim()))?;
    if !timestamp.is_finite() || !value.is_finite() {
        return Err("non-finite field".to_string());
    }
    Ok(Sample { timestamp, value })
}

/// Extract the physical value a spec describes from one frame.
///
/// Deterministic and total over frames that pass the id/length checks;
/// out-of-range values are flagged, not rejected.
pub fn decode_signal(frame: &CanFrame, spec: &SignalSpec) -> Result<DecodedSample, IngestError> {
    if frame.can_id != spec.can_id {
        return Err(IngestError::CanIdMismatch {
            frame: frame.can_id,
            spec: spec.can_id,
        });
    }
    let nbytes = spec.bit_length.div_ceil(8) as usize;
    if spec.byte_offset + nbytes > frame.payload.len() {
        return Err(IngestError::PayloadTooShort {
            needed: nbytes,
            offset: spec.byte_offset,
            have: frame.payload.len(),
        });
    }
    let mut raw: u64 = 0;
    for &b in &frame.payload[spec.byte_offset..spec.byte_offset + nbytes] {
        raw = (raw << 8) | u64::from(b);
    }
    // Field occupies the most significant bits of the byte span.
    raw >>= (nbytes as u32) * 8 - spec.bit_length;
    let value = raw as f64 * spec.scale + spec.offset;
    Ok(DecodedSample {
        sample: Sample {
            timestamp: frame.timestamp,
            value,
        },
        out_of_range: value < spec.min_physical || value > spec.max_physical,
    })
}

/// Write samples as `timestamp,value` CSV with a header line.
///
/// Values use the shortest representation that parses back to the exact
/// same f64, so a written trace re-reads bit-identically.
pub fn write_samples_csv<W: std::io::Write>(
    samples: &[Sample],
    mut w: W,
) -> Result<(), std::io::Error> {
    w.write_all(b"timestamp,value\n")?;
    for s in samples {
        writeln!(w, "{},{}", s.timestamp, s.value)?;
    }
    Ok(())
}

/// A spacing anomaly in a sample series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gap {
    /// Index of the sample *after* the gap.
    pub index: usize,
    pub interval_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub mean_rate_hz: f64,
    pub median_interval_s: f64,
    pub gaps: Vec<Gap>,
}

/// Report the mean sample rate and any inter-sample interval exceeding
/// 3x the median. Never modifies the data.
pub fn resample_check(samples: &[Sample]) -> Result<RateReport, IngestError> {
    if samples.len() < 2 {
        return Err(IngestError::TooFewSamples);
    }
    let mut intervals: Vec<f64> = samples
        .windows(2)
        .map(|w| w[1].timestamp - w[0].timestamp)
        .collect();
    let span = samples[samples.len() - 1].timestamp - samples[0].timestamp;
    let mean_rate_hz = if span > 0.0 {
        (samples.len() - 1) as f64 / span
    } else {
        f64::INFINITY
    };

    let mut sorted = intervals.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let mid = sorted.len() / 2;
    let median_interval_s = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    };

    let threshold = 3.0 * median_interval_s;
    let gaps = intervals
        .drain(..)
        .enumerate()
        .filter(|&(_, dt)| dt > threshold)
        .map(|(i, dt)| Gap {
            index: i + 1,
            interval_s: dt,
        })
        .collect();

    Ok(RateReport {
        mean_rate_hz,
        median_interval_s,
        gaps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Test-only inverse of `decode_signal`: place `raw` at the most
    /// significant bits of the spec's byte span.
    fn encode_signal(raw: u64, spec: &SignalSpec, payload_len: usize) -> CanFrame {
        let nbytes = spec.bit_length.div_ceil(8) as usize;
        let shifted = raw << ((nbytes as u32) * 8 - spec.bit_length);
        let mut payload = vec![0u8; payload_len];
        for k in 0..nbytes {
            payload[spec.byte_offset + k] = (shifted >> ((nbytes - 1 - k) * 8)) as u8;
        }
        CanFrame {
            timestamp: 0.0,
            bus: "can0".into(),
            can_id: spec.can_id,
            payload,
        }
    }

    #[test]
    fn parses_candump_line() {
        let frame = parse_candump_line("(1609459200.123456) can0 0D0#1027").unwrap();
        assert_eq!(frame.timestamp, 1609459200.123456);
        assert_eq!(frame.bus, "can0");
        assert_eq!(frame.can_id, 0x0D0);
        assert_eq!(frame.payload, vec![0x10, 0x27]);
    }

    #[test]
    fn parses_csv_line() {
        let s = parse_csv_line("0.000000,52.0").unwrap();
        assert_eq!(s.timestamp, 0.0);
        assert_eq!(s.value, 52.0);
    }

    #[test]
    fn garbage_line_reported_with_position() {
        let trace = parse_trace("garbage\n0.1,50.0\n".as_bytes(), Some(TraceFormat::Csv)).unwrap();
        assert_eq!(trace.records.len(), 1);
        assert_eq!(trace.errors.len(), 1);
        assert_eq!(trace.errors[0].line, 1);
    }

    #[test]
    fn garbage_mid_file_reported_with_position() {
        let trace =
            parse_trace("0.1,50.0\ngarbage,x\n0.2,51.0\n".as_bytes(), Some(TraceFormat::Csv))
                .unwrap();
        assert_eq!(trace.records.len(), 2);
        assert_eq!(trace.errors.len(), 1);
        assert_eq!(trace.errors[0].line, 2);
    }

    #[test]
    fn unknown_format_is_an_error() {
        let err = parse_trace("garbage\n".as_bytes(), None).unwrap_err();
        assert!(matches!(err, IngestError::UnknownFormat { .. }));
    }

    #[test]
    fn csv_header_is_skipped() {
        let trace =
            parse_trace("timestamp,value\n0.0,10.0\n".as_bytes(), None).unwrap();
        assert_eq!(trace.format, Some(TraceFormat::Csv));
        assert_eq!(trace.samples().len(), 1);
    }

    #[test]
    fn non_finite_values_rejected() {
        assert!(parse_csv_line("0.0,NaN").is_err());
        assert!(parse_csv_line("0.0,inf").is_err());
    }

    #[test]
    fn malformed_lines_collected_without_aborting() {
        let text = "(0.000001) can0 0D0#1027\nnot a frame\n(0.000002) can0 0D0#10\n";
        let trace = parse_trace(text.as_bytes(), None).unwrap();
        assert_eq!(trace.records.len(), 2);
        assert_eq!(trace.errors.len(), 1);
        assert_eq!(trace.errors[0].line, 2);
    }

    #[test]
    fn candump_id_must_be_3_or_8_digits() {
        assert!(parse_candump_line("(0.1) can0 0D00#11").is_err());
        assert!(parse_candump_line("(0.1) can0 1F334455#1122334455667788").is_ok());
    }

    fn velocity_spec() -> SignalSpec {
        SignalSpec::new(0x0D0, 0, 16, 0.01, 0.0, "km/h", 0.0, 160.0).unwrap()
    }

    #[test]
    fn decodes_scaled_16_bit_field() {
        let frame = CanFrame {
            timestamp: 1.0,
            bus: "can0".into(),
            can_id: 0x0D0,
            payload: vec![0x10, 0x27],
        };
        let d = decode_signal(&frame, &velocity_spec()).unwrap();
        assert_eq!(d.sample.value, 4135.0 * 0.01);
        assert!(!d.out_of_range);
    }

    #[test]
    fn decodes_unscaled_byte() {
        let spec = SignalSpec::new(0x0D0, 0, 8, 1.0, 0.0, "km/h", 0.0, 160.0).unwrap();
        let frame = CanFrame {
            timestamp: 1.0,
            bus: "can0".into(),
            can_id: 0x0D0,
            payload: vec![0xA0],
        };
        let d = decode_signal(&frame, &spec).unwrap();
        assert_eq!(d.sample.value, 160.0);
        assert!(!d.out_of_range);
    }

    #[test]
    fn short_payload_is_an_error() {
        let frame = CanFrame {
            timestamp: 1.0,
            bus: "can0".into(),
            can_id: 0x0D0,
            payload: vec![0x10],
        };
        assert!(matches!(
            decode_signal(&frame, &velocity_spec()),
            Err(IngestError::PayloadTooShort { .. })
        ));
    }

    #[test]
    fn id_mismatch_is_an_error() {
        let frame = CanFrame {
            timestamp: 1.0,
            bus: "can0".into(),
            can_id: 0x0D1,
            payload: vec![0x10, 0x27],
        };
        assert!(matches!(
            decode_signal(&frame, &velocity_spec()),
            Err(IngestError::CanIdMismatch { .. })
        ));
    }

    #[test]
    fn resample_uniform_260_hz() {
        let samples: Vec<Sample> = (0..260)
            .map(|i| Sample {
                timestamp: i as f64 / 260.0,
                value: 50.0,
            })
            .collect();
        let report = resample_check(&samples).unwrap();
        assert!((report.mean_rate_hz - 260.0).abs() < 1e-9);
        assert!(report.gaps.is_empty());
    }

    #[test]
    fn resample_two_samples_one_second() {
        let samples = [
            Sample { timestamp: 0.0, value: 1.0 },
            Sample { timestamp: 1.0, value: 2.0 },
        ];
        let report = resample_check(&samples).unwrap();
        assert!((report.mean_rate_hz - 1.0).abs() < 1e-12);
    }

    #[test]
    fn resample_reports_gap() {
        let mut samples: Vec<Sample> = (0..=10)
            .map(|i| Sample {
                timestamp: i as f64 * 0.01,
                value: 1.0,
            })
            .collect();
        samples.push(Sample { timestamp: 5.0, value: 1.0 });
        let report = resample_check(&samples).unwrap();
        assert_eq!(report.gaps.len(), 1);
        assert_eq!(report.gaps[0].index, 11);
    }

    #[test]
    fn written_samples_reread_exactly() {
        let samples: Vec<Sample> = (0..50)
            .map(|i| Sample {
                timestamp: i as f64 / 260.0,
                value: 52.0 + (i as f64) * 0.37,
            })
            .collect();
        let mut buf = Vec::new();
        write_samples_csv(&samples, &mut buf).unwrap();
        let parsed = parse_trace(buf.as_slice(), None).unwrap();
        assert!(parsed.errors.is_empty());
        assert_eq!(parsed.samples(), samples);
    }

    #[test]
    fn resample_needs_two_samples() {
        assert!(matches!(
            resample_check(&[Sample { timestamp: 0.0, value: 1.0 }]),
            Err(IngestError::TooFewSamples)
        ));
    }

    proptest! {
        #[test]
        fn candump_roundtrip_preserves_payload(
            ts in 0.0f64..2_000_000_000.0,
            id in 0u32..0x800,
            payload in proptest::collection::vec(any::<u8>(), 0..=8),
        ) {
            let frame = CanFrame {
                timestamp: (ts * 1e6).round() / 1e6,
                bus: "can0".into(),
                can_id: id,
                payload,
            };
            let line = frame.to_candump_line();
            let parsed = parse_candump_line(&line).unwrap();
            prop_assert_eq!(&parsed.payload, &frame.payload);
            prop_assert_eq!(parsed.to_candump_line(), line);
        }

        #[test]
        fn decode_inverts_encode(
            raw in 0u64..=0xFFFF,
            scale in prop::sample::select(vec![0.01f64, 0.1, 0.25, 1.0, 2.0]),
            offset in prop::sample::select(vec![0.0f64, -40.0, 10.0]),
        ) {
            let spec = SignalSpec::new(0x0D0, 1, 16, scale, offset, "u", -1e9, 1e9).unwrap();
            let frame = encode_signal(raw, &spec, 4);
            let decoded = decode_signal(&frame, &spec).unwrap();
            prop_assert_eq!(decoded.sample.value, raw as f64 * scale + offset);
        }

        #[test]
        fn decode_12_bit_field_roundtrip(raw in 0u64..(1 << 12)) {
            let spec = SignalSpec::new(0x0D0, 2, 12, 1.0, 0.0, "u", -1e9, 1e9).unwrap();
            let frame = encode_signal(raw, &spec, 8);
            let decoded = decode_signal(&frame, &spec).unwrap();
            prop_assert_eq!(decoded.sample.value, raw as f64);
        }
    }
}
