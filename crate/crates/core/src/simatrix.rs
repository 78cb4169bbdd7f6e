//! Conditional self-information transition matrix.
//!
//! Training counts how often bin `j` is immediately followed by bin `i`
//! across a quantized sample series. The derived reference matrix holds
//! `E[j][i] = log2(1 / P(i | j))` in bits, with empirical probabilities
//! `P(i | j) = counts[j][i] / row_totals[j]` and a fixed smoothing
//! probability `epsilon` for transitions never observed. Counts are the
//! persisted ground truth; the float matrix is always re-derived, so a
//! stored reference reproduces identically on any platform.

use thiserror::Error;

/// Upper bound on matrix order accepted anywhere. Keeps a corrupted or
/// hostile LUT file from requesting a multi-gigabyte allocation.
pub const MAX_ORDER: usize = 4096;

/// Default smoothing probability for unseen transitions (2^-20).
pub const DEFAULT_EPSILON: f64 = 1.0 / (1 << 20) as f64;

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("invalid quantizer: {0}")]
    InvalidQuantizer(String),
    #[error("fewer than 2 samples")]
    TooFewSamples,
    #[error("bin {bin} out of range for order {order}")]
    BinOutOfRange { bin: usize, order: usize },
    #[error("epsilon must be in (0, 1), got {0}")]
    InvalidEpsilon(f64),
    #[error("order mismatch: {left} vs {right}")]
    OrderMismatch { left: usize, right: usize },
}

/// Maps physical values to integer bins `0..order`.
///
/// `order = floor((max - min) / bin_width) + 1`, so with the defaults
/// (0..250 km/h, 1 km/h bins) the matrix has 251 bins and is indexed
/// directly by integer velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantizer {
    min_value: f64,
    max_value: f64,
    bin_width: f64,
}

/// A quantized value; `out_of_range` marks inputs that had to be clamped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Quantized {
    pub bin: usize,
    pub out_of_range: bool,
}

impl Quantizer {
    pub fn new(min_value: f64, max_value: f64, bin_width: f64) -> Result<Self, MatrixError> {
        if !bin_width.is_finite() || bin_width <= 0.0 {
            return Err(MatrixError::InvalidQuantizer(format!(
                "bin_width must be > 0, got {bin_width}"
            )));
        }
        if !min_value.is_finite() || !max_value.is_finite() || max_value <= min_value {
            return Err(MatrixError::InvalidQuantizer(format!(
                "need min_value < max_value, got {min_value}..{max_value}"
            )));
        }
        let order = ((max_value - min_value) / bin_width).floor() as usize + 1;
        if order > MAX_ORDER {
            return Err(MatrixError::InvalidQuantizer(format!(
                "order {order} exceeds maximum {MAX_ORDER}"
            )));
        }
        Ok(Self {
            min_value,
            max_value,
            bin_width,
        })
    }

    pub fn min_value(&self) -> f64 {
        self.min_value
    }

    pub fn max_value(&self) -> f64 {
        self.max_value
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    /// Number of bins (matrix order).
    pub fn order(&self) -> usize {
        ((self.max_value - self.min_value) / self.bin_width).floor() as usize + 1
    }

    /// Total function: out-of-range values clamp to the edge bins and are
    /// flagged instead of rejected.
    pub fn quantize(&self, value: f64) -> Quantized {
        let out_of_range = !value.is_finite() || value < self.min_value || value > self.max_value;
        if !value.is_finite() {
            let bin = if value == f64::INFINITY { self.order() - 1 } else { 0 };
            return Quantized { bin, out_of_range };
        }
        let raw = ((value - self.min_value) / self.bin_width).floor();
        let max_bin = self.order() - 1;
        let bin = if raw < 0.0 {
            0
        } else if raw as usize > max_bin {
            max_bin
        } else {
            raw as usize
        };
        Quantized { bin, out_of_range }
    }

    /// Quantize a whole value series, dropping the range flags.
    pub fn bins(&self, values: impl IntoIterator<Item = f64>) -> Vec<usize> {
        values.into_iter().map(|v| self.quantize(v).bin).collect()
    }
}

/// Integer matrix of observed (previous-bin -> current-bin) occurrences.
/// This is the exact, persistable training state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionCounts {
    order: usize,
    counts: Vec<u64>,
    row_totals: Vec<u64>,
}

impl TransitionCounts {
    pub fn new(order: usize) -> Result<Self, MatrixError> {
        if order == 0 || order > MAX_ORDER {
            return Err(MatrixError::BinOutOfRange { bin: order, order: MAX_ORDER });
        }
        Ok(Self {
            order,
            counts: vec![0; order * order],
            row_totals: vec![0; order],
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn count(&self, prev: usize, cur: usize) -> u64 {
        self.counts[prev * self.order + cur]
    }

    pub fn row_total(&self, prev: usize) -> u64 {
        self.row_totals[prev]
    }

    /// Row-major cell slice, for persistence.
    pub fn cells(&self) -> &[u64] {
        &self.counts
    }

    /// Rebuild from a row-major cell vector (row totals are recomputed).
    pub fn from_cells(order: usize, cells: Vec<u64>) -> Result<Self, MatrixError> {
        if order == 0 || order > MAX_ORDER || cells.len() != order * order {
            return Err(MatrixError::OrderMismatch {
                left: order,
                right: cells.len(),
            });
        }
        let row_totals = cells
            .chunks_exact(order)
            .map(|row| row.iter().sum())
            .collect();
        Ok(Self {
            order,
            counts: cells,
            row_totals,
        })
    }

    /// Record one observed transition.
    pub fn record(&mut self, prev: usize, cur: usize) -> Result<(), MatrixError> {
        if prev >= self.order {
            return Err(MatrixError::BinOutOfRange { bin: prev, order: self.order });
        }
        if cur >= self.order {
            return Err(MatrixError::BinOutOfRange { bin: cur, order: self.order });
        }
        self.counts[prev * self.order + cur] += 1;
        self.row_totals[prev] += 1;
        Ok(())
    }

    pub fn total_transitions(&self) -> u64 {
        self.row_totals.iter().sum()
    }

    pub fn seen_cells(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }
}

/// Count every consecutive (previous, current) bin pair in a single pass.
pub fn train(bins: &[usize], order: usize) -> Result<TransitionCounts, MatrixError> {
    if bins.len() < 2 {
        return Err(MatrixError::TooFewSamples);
    }
    let mut counts = TransitionCounts::new(order)?;
    for pair in bins.windows(2) {
        counts.record(pair[0], pair[1])?;
    }
    Ok(counts)
}

/// Element-wise sum of two count matrices. Commutative and associative,
/// which makes incremental training over multiple drives order-free.
pub fn merge_counts(
    a: &TransitionCounts,
    b: &TransitionCounts,
) -> Result<TransitionCounts, MatrixError> {
    if a.order != b.order {
        return Err(MatrixError::OrderMismatch {
            left: a.order,
            right: b.order,
        });
    }
    let mut merged = a.clone();
    for (dst, src) in merged.counts.iter_mut().zip(&b.counts) {
        *dst += src;
    }
    for (dst, src) in merged.row_totals.iter_mut().zip(&b.row_totals) {
        *dst += src;
    }
    Ok(merged)
}

/// The derived reference: conditional self-information in bits per cell.
/// Immutable; share it read-only across any number of detector instances.
#[derive(Debug, Clone, PartialEq)]
pub struct SelfInfoMatrix {
    order: usize,
    epsilon: f64,
    e_max: f64,
    values: Vec<f64>,
}

impl SelfInfoMatrix {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Score assigned to transitions never seen in training.
    pub fn e_max(&self) -> f64 {
        self.e_max
    }

    /// O(1) lookup of the self-information of transition (prev -> cur).
    #[inline]
    pub fn value(&self, prev: usize, cur: usize) -> f64 {
        self.values[prev * self.order + cur]
    }
}

/// Derive the self-information matrix from counts.
///
/// Seen cells get exactly `log2(row_total / count)`; unseen cells
/// (including whole empty rows) get `e_max = log2(1 / epsilon)`.
pub fn derive_self_info(
    counts: &TransitionCounts,
    epsilon: f64,
) -> Result<SelfInfoMatrix, MatrixError> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(MatrixError::InvalidEpsilon(epsilon));
    }
    let e_max = -epsilon.log2();
    let order = counts.order;
    let mut values = vec![e_max; order * order];
    for j in 0..order {
        let total = counts.row_totals[j];
        if total == 0 {
            continue;
        }
        let total_f = total as f64;
        let row = &counts.counts[j * order..(j + 1) * order];
        let out = &mut values[j * order..(j + 1) * order];
        for (i, &c) in row.iter().enumerate() {
            if c > 0 {
                out[i] = (total_f / c as f64).log2();
            }
        }
    }
    Ok(SelfInfoMatrix {
        order,
        epsilon,
        e_max,
        values,
    })
}
