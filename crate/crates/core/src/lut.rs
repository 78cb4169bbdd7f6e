//! Reference LUT persistence.
//!
//! The file stores the exact integer transition counts plus the quantizer
//! configuration and epsilon; the float self-information matrix is always
//! re-derived on load. Layout (all integers little-endian):
//!
//! ```text
//! magic "SILUT1" | order u32 | min f64 | max f64 | bin_width f64
//! | epsilon f64 | counts (order^2 x u64, row-major) | crc32 u32
//! ```
//!
//! The CRC-32 (IEEE) trailer covers every preceding byte including the
//! magic.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::simatrix::{
    derive_self_info, Quantizer, SelfInfoMatrix, TransitionCounts, MAX_ORDER,
};

pub const LUT_MAGIC: &[u8; 6] = b"SILUT1";

#[derive(Debug, Error)]
pub enum LutError {
    #[error("i/o error: {0}")]
    Io(std::io::Error),
    #[error("not a reference LUT file (bad magic)")]
    BadMagic,
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("truncated LUT file")]
    Truncated,
    #[error("invalid LUT contents: {0}")]
    Invalid(String),
}

impl From<std::io::Error> for LutError {
    fn from(e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            LutError::Truncated
        } else {
            LutError::Io(e)
        }
    }
}

/// Trained reference: counts + quantizer + smoothing, the unit that gets
/// persisted and shipped to the detector.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceLut {
    quantizer: Quantizer,
    epsilon: f64,
    counts: TransitionCounts,
}

impl ReferenceLut {
    pub fn new(
        quantizer: Quantizer,
        epsilon: f64,
        counts: TransitionCounts,
    ) -> Result<Self, LutError> {
        if quantizer.order() != counts.order() {
            return Err(LutError::Invalid(format!(
                "quantizer order {} does not match counts order {}",
                quantizer.order(),
                counts.order()
            )));
        }
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(LutError::Invalid(format!("epsilon {epsilon} not in (0, 1)")));
        }
        Ok(Self {
            quantizer,
            epsilon,
            counts,
        })
    }

    pub fn quantizer(&self) -> &Quantizer {
        &self.quantizer
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn counts(&self) -> &TransitionCounts {
        &self.counts
    }

    pub fn into_counts(self) -> TransitionCounts {
        self.counts
    }

    /// Re-derive the reference matrix. Never stored as floats, so the
    /// result is identical on every platform that loads the same file.
    pub fn self_info(&self) -> SelfInfoMatrix {
        derive_self_info(&self.counts, self.epsilon).expect("epsilon validated at construction")
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), LutError> {
        let mut body = Vec::with_capacity(
            LUT_MAGIC.len() + 4 + 8 * 4 + self.counts.cells().len() * 8,
        );
        body.extend_from_slice(LUT_MAGIC);
        body.extend_from_slice(&(self.counts.order() as u32).to_le_bytes());
        body.extend_from_slice(&self.quantizer.min_value().to_le_bytes());
        body.extend_from_slice(&self.quantizer.max_value().to_le_bytes());
        body.extend_from_slice(&self.quantizer.bin_width().to_le_bytes());
        body.extend_from_slice(&self.epsilon.to_le_bytes());
        for &c in self.counts.cells() {
            body.extend_from_slice(&c.to_le_bytes());
        }
        let crc = crc32fast::hash(&body);
        w.write_all(&body)?;
        w.write_all(&crc.to_le_bytes())?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, LutError> {
        let mut magic = [0u8; 6];
        r.read_exact(&mut magic)?;
        if &magic != LUT_MAGIC {
            return Err(LutError::BadMagic);
        }

        let mut hasher = crc32fast::Hasher::new();
        hasher.update(&magic);

        let mut u32_buf = [0u8; 4];
        r.read_exact(&mut u32_buf)?;
        hasher.update(&u32_buf);
        let order = u32::from_le_bytes(u32_buf) as usize;
        if order == 0 || order > MAX_ORDER {
            return Err(LutError::Invalid(format!("order {order} out of bounds")));
        }

        let mut f64_buf = [0u8; 8];
        let mut read_f64 = |r: &mut R, hasher: &mut crc32fast::Hasher| -> Result<f64, LutError> {
            r.read_exact(&mut f64_buf)?;
            hasher.update(&f64_buf);
            Ok(f64::from_le_bytes(f64_buf))
        };
        let min_value = read_f64(&mut r, &mut hasher)?;
        let max_value = read_f64(&mut r, &mut hasher)?;
        let bin_width = read_f64(&mut r, &mut hasher)?;
        let epsilon = read_f64(&mut r, &mut hasher)?;

        let mut cells = Vec::with_capacity(order * order);
        let mut u64_buf = [0u8; 8];
        for _ in 0..order * order {
            r.read_exact(&mut u64_buf)?;
            hasher.update(&u64_buf);
            cells.push(u64::from_le_bytes(u64_buf));
        }

        let mut crc_buf = [0u8; 4];
        r.read_exact(&mut crc_buf)?;
        let stored = u32::from_le_bytes(crc_buf);
        let computed = hasher.finalize();
        if stored != computed {
            return Err(LutError::ChecksumMismatch { stored, computed });
        }

        let quantizer = Quantizer::new(min_value, max_value, bin_width)
            .map_err(|e| LutError::Invalid(e.to_string()))?;
        if quantizer.order() != order {
            return Err(LutError::Invalid(format!(
                "stored order {} disagrees with quantizer parameters (order {})",
                order,
                quantizer.order()
            )));
        }
        let counts = TransitionCounts::from_cells(order, cells)
            .map_err(|e| LutError::Invalid(e.to_string()))?;
        ReferenceLut::new(quantizer, epsilon, counts)
    }

    pub fn save(&self, path: &Path) -> Result<(), LutError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, LutError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}
