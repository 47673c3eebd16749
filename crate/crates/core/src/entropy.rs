//! Integer range coder with 16-bit static models and the discretized
//! Laplacian used for residual symbols.
//!
//! Stream layout: renormalization bytes are emitted most significant first,
//! and `finish` appends the 64-bit accumulator `low << 32` big-endian, i.e.
//! the four bytes of `low` followed by four zero bytes.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CoderError {
    #[error("symbol {symbol} outside alphabet of size {alphabet}")]
    SymbolOutOfAlphabet { symbol: usize, alphabet: usize },
    #[error("stream ended before all symbols were decoded")]
    TruncatedStream,
    #[error("stream tail does not match the decoded interval")]
    CorruptTail,
    #[error("bad model parameter: {0}")]
    BadParameter(String),
}

pub const PROB_BITS: u32 = 16;
pub const PROB_TOTAL: u32 = 1 << PROB_BITS;
const TOP: u32 = 1 << 24;
const FLUSH_BYTES: usize = 8;

/// Static cumulative-frequency model over `0..alphabet_size()`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymbolModel {
    cdf: Vec<u32>,
}

impl SymbolModel {
    /// Builds a model from per-symbol counts summing to 2^16, each ≥ 1.
    pub fn from_counts(counts: &[u32]) -> Result<Self, CoderError> {
        if counts.is_empty() {
            return Err(CoderError::BadParameter("empty alphabet".into()));
        }
        let mut cdf = Vec::with_capacity(counts.len() + 1);
        cdf.push(0u32);
        let mut acc = 0u32;
        for &c in counts {
            if c == 0 {
                return Err(CoderError::BadParameter("zero-count symbol".into()));
            }
            acc = acc
                .checked_add(c)
                .filter(|&a| a <= PROB_TOTAL)
                .ok_or_else(|| CoderError::BadParameter("counts exceed 2^16".into()))?;
            cdf.push(acc);
        }
        if acc != PROB_TOTAL {
            return Err(CoderError::BadParameter(format!(
                "counts sum to {acc}, not 2^16"
            )));
        }
        Ok(SymbolModel { cdf })
    }

    pub fn alphabet_size(&self) -> usize {
        self.cdf.len() - 1
    }

    pub fn cdf(&self) -> &[u32] {
        &self.cdf
    }

    pub fn count(&self, symbol: usize) -> u32 {
        self.cdf[symbol + 1] - self.cdf[symbol]
    }

    /// Ideal code length of `symbol` in bits.
    pub fn cost_bits(&self, symbol: usize) -> f64 {
        PROB_BITS as f64 - (self.count(symbol) as f64).log2()
    }

    /// Largest symbol whose cumulative start is ≤ `target`.
    fn find(&self, target: u32) -> usize {
        self.cdf.partition_point(|&c| c <= target) - 1
    }
}

/// Sub-interval of `range` for cumulative count `c`: floor(range * c / 2^16).
#[inline]
fn scaled(range: u32, c: u32) -> u32 {
    ((range as u64 * c as u64) >> PROB_BITS) as u32
}

#[derive(Debug)]
pub struct RangeEncoder {
    low: u64,
    range: u32,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        RangeEncoder {
            low: 0,
            range: u32::MAX,
            out: Vec::new(),
        }
    }

    pub fn encode(&mut self, model: &SymbolModel, symbol: usize) -> Result<(), CoderError> {
        if symbol >= model.alphabet_size() {
            return Err(CoderError::SymbolOutOfAlphabet {
                symbol,
                alphabet: model.alphabet_size(),
            });
        }
        let start = scaled(self.range, model.cdf[symbol]);
        let end = scaled(self.range, model.cdf[symbol + 1]);
        self.low += start as u64;
        self.range = end - start;
        if self.low >> 32 != 0 {
            self.propagate_carry();
            self.low &= 0xFFFF_FFFF;
        }
        while self.range < TOP {
            self.out.push((self.low >> 24) as u8);
            self.low = (self.low << 8) & 0xFFFF_FFFF;
            self.range <<= 8;
        }
        Ok(())
    }

    fn propagate_carry(&mut self) {
        for byte in self.out.iter_mut().rev() {
            let (v, overflow) = byte.overflowing_add(1);
            *byte = v;
            if !overflow {
                return;
            }
        }
        unreachable!("carry past the start of the stream");
    }

    /// Bytes emitted so far, excluding the final flush.
    pub fn bytes_written(&self) -> usize {
        self.out.len()
    }

    pub fn finish(mut self) -> Vec<u8> {
        self.out.extend_from_slice(&(self.low << 32).to_be_bytes());
        self.out
    }
}

/// Decoder over an in-memory stream. `code` holds the stream window minus
/// the encoder's `low`, so it always lies in `[0, range)`.
#[derive(Debug)]
pub struct RangeDecoder<'a> {
    data: &'a [u8],
    pos: usize,
    code: u32,
    range: u32,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(data: &'a [u8]) -> Result<Self, CoderError> {
        if data.len() < FLUSH_BYTES {
            return Err(CoderError::TruncatedStream);
        }
        let code = u32::from_be_bytes([data[0], data[1], data[2], data[3]]);
        Ok(RangeDecoder {
            data,
            pos: 4,
            code,
            range: u32::MAX,
        })
    }

    pub fn decode(&mut self, model: &SymbolModel) -> Result<usize, CoderError> {
        let target = ((((self.code as u64) + 1) << PROB_BITS) - 1) / self.range as u64;
        let symbol = model
            .find(target.min(u32::MAX as u64) as u32)
            .min(model.alphabet_size() - 1);
        let start = scaled(self.range, model.cdf[symbol]);
        let end = scaled(self.range, model.cdf[symbol + 1]);
        self.code -= start;
        self.range = end - start;
        while self.range < TOP {
            let byte = *self.data.get(self.pos).ok_or(CoderError::TruncatedStream)?;
            self.pos += 1;
            self.code = (self.code << 8) | byte as u32;
            self.range <<= 8;
        }
        Ok(symbol)
    }

    /// Checks that the stream ends exactly with the encoder's flush.
    pub fn finish(self) -> Result<(), CoderError> {
        if self.data.len() != self.pos + 4 {
            return Err(if self.data.len() < self.pos + 4 {
                CoderError::TruncatedStream
            } else {
                CoderError::CorruptTail
            });
        }
        if self.code != 0 || self.data[self.pos..].iter().any(|&b| b != 0) {
            return Err(CoderError::CorruptTail);
        }
        Ok(())
    }
}

/// Probability mass of `[lo, hi]` under a zero-mean Laplacian of scale `b`.
pub fn laplace_interval_mass(lo: f64, hi: f64, b: f64) -> f64 {
    let cdf = |x: f64| {
        if x < 0.0 {
            0.5 * (x / b).exp()
        } else {
            1.0 - 0.5 * (-x / b).exp()
        }
    };
    if lo >= 0.0 {
        0.5 * ((-lo / b).exp() - (-hi / b).exp())
    } else if hi <= 0.0 {
        0.5 * ((hi / b).exp() - (lo / b).exp())
    } else {
        cdf(hi) - cdf(lo)
    }
}

/// Discretized Laplacian over symbols `-k_max..=k_max` (index `k + k_max`).
///
/// Symbol `k` covers `[(k-½)Δ, (k+½)Δ]`; the two extreme symbols also take
/// the tails. Masses are floored to 16-bit counts with a minimum of one;
/// any shortfall goes to the largest fractional remainders and any excess
/// comes off the largest counts.
pub fn laplace_model(scale_b: f64, step: f64, k_max: usize) -> Result<SymbolModel, CoderError> {
    if !(scale_b > 0.0 && scale_b.is_finite()) || !(step > 0.0 && step.is_finite()) {
        return Err(CoderError::BadParameter(format!(
            "scale {scale_b} and step {step} must be positive"
        )));
    }
    if k_max == 0 || 2 * k_max + 1 > PROB_TOTAL as usize {
        return Err(CoderError::BadParameter(format!(
            "k_max {k_max} out of range"
        )));
    }
    let masses = laplace_masses(scale_b, step, k_max);
    SymbolModel::from_counts(&quantize_masses(&masses))
}

pub(crate) fn laplace_masses(scale_b: f64, step: f64, k_max: usize) -> Vec<f64> {
    let n = 2 * k_max + 1;
    let kmax = k_max as f64;
    let mut masses = Vec::with_capacity(n);
    for i in 0..n {
        let k = i as f64 - kmax;
        // the two end symbols absorb their tails
        let mass = if i == 0 || i == n - 1 {
            0.5 * (-(kmax - 0.5) * step / scale_b).exp()
        } else {
            laplace_interval_mass((k - 0.5) * step, (k + 0.5) * step, scale_b)
        };
        masses.push(mass);
    }
    masses
}

pub(crate) fn quantize_masses(masses: &[f64]) -> Vec<u32> {
    let total: f64 = masses.iter().sum();
    let scale = PROB_TOTAL as f64 / total;
    let mut counts: Vec<u32> = masses
        .iter()
        .map(|&m| ((m * scale).floor() as u32).max(1))
        .collect();
    let sum: i64 = counts.iter().map(|&c| c as i64).sum();
    let mut diff = PROB_TOTAL as i64 - sum;
    if diff > 0 {
        let mut order: Vec<usize> = (0..masses.len()).collect();
        let frac = |i: usize| {
            let exact = masses[i] * scale;
            exact - exact.floor()
        };
        order.sort_by(|&a, &b| frac(b).total_cmp(&frac(a)).then(a.cmp(&b)));
        for &i in order.iter().cycle() {
            if diff == 0 {
                break;
            }
            counts[i] += 1;
            diff -= 1;
        }
    }
    while diff < 0 {
        let i = (0..counts.len())
            .max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a)))
            .unwrap();
        let take = (-diff).min(counts[i] as i64 - 1);
        counts[i] -= take as u32;
        diff += take;
    }
    counts
}
