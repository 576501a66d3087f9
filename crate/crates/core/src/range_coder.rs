//! Byte-oriented range coder over 16-bit cumulative frequency tables.
//!
//! The encoder keeps a 64-bit `low` with a one-byte carry cache and a 32-bit
//! `range`; each symbol narrows the range to `(range >> 16)·freq`, dropping
//! the truncation remainder. Renormalization shifts out a
//! byte whenever the range drops below 2²⁴. The decoder mirrors this and
//! consumes exactly the bytes the encoder produced.

use std::sync::OnceLock;

use crate::entropy::{table_likelihood, SCALE_LEVELS, SYMBOLS, SYMBOL_MIN};
use crate::error::{ensure, Error, Result};

pub const PRECISION: u32 = 16;
pub const TOTAL: u32 = 1 << PRECISION;
const TOP: u32 = 1 << 24;

/// Cumulative frequencies `cf[0] = 0 < cf[1] < … < cf[S] = 65536`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CdfTable {
    cf: Vec<u32>,
}

impl CdfTable {
    pub fn from_frequencies(freqs: &[u32]) -> Result<Self> {
        ensure!(!freqs.is_empty(), "a table needs at least one symbol");
        ensure!(freqs.iter().all(|&f| f >= 1), "every symbol frequency must be >= 1");
        let mut cf = Vec::with_capacity(freqs.len() + 1);
        let mut acc = 0u64;
        cf.push(0);
        for &f in freqs {
            acc += f as u64;
            ensure!(acc <= TOTAL as u64, "frequencies exceed {}", TOTAL);
            cf.push(acc as u32);
        }
        ensure!(acc == TOTAL as u64, "frequencies sum to {acc}, expected {TOTAL}");
        Ok(Self { cf })
    }

    /// Equal frequencies over `symbols` values (`symbols` must divide 65536).
    pub fn uniform(symbols: usize) -> Result<Self> {
        ensure!(
            symbols >= 1 && (TOTAL as usize).is_multiple_of(symbols),
            "uniform table size {symbols} must divide {TOTAL}"
        );
        Self::from_frequencies(&vec![TOTAL / symbols as u32; symbols])
    }

    pub fn symbols(&self) -> usize {
        self.cf.len() - 1
    }

    pub fn cdf(&self) -> &[u32] {
        &self.cf
    }

    pub fn frequency(&self, s: usize) -> u32 {
        self.cf[s + 1] - self.cf[s]
    }

    pub fn frequencies(&self) -> Vec<u32> {
        self.cf.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// `−log₂(freq / 65536)`.
    pub fn cost_bits(&self, s: usize) -> f64 {
        PRECISION as f64 - (self.frequency(s) as f64).log2()
    }

    fn lookup(&self, target: u32) -> usize {
        // last s with cf[s] <= target
        self.cf.partition_point(|&c| c <= target) - 1
    }
}

/// Largest-remainder quantization of `probs` to integer frequencies summing
/// to 65536 with every entry at least 1. Remainder ties go to the lower index.
pub fn quantize_frequencies(probs: &[f64]) -> Vec<u32> {
    let n = probs.len();
    let total: f64 = probs.iter().sum();
    let scaled: Vec<f64> = probs.iter().map(|&p| p / total * TOTAL as f64).collect();
    let mut freq: Vec<u32> = scaled.iter().map(|&s| (s.floor() as u32).max(1)).collect();
    let mut sum: i64 = freq.iter().map(|&f| f as i64).sum();
    let rem: Vec<f64> = scaled.iter().zip(&freq).map(|(&s, &f)| s - f as f64).collect();

    if sum < TOTAL as i64 {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| rem[b].total_cmp(&rem[a]).then(a.cmp(&b)));
        let mut k = 0;
        while sum < TOTAL as i64 {
            freq[order[k % n]] += 1;
            sum += 1;
            k += 1;
        }
    }
    while sum > TOTAL as i64 {
        // take from the most frequent symbol (lowest index on ties)
        let mut best = 0;
        for i in 1..n {
            if freq[i] > freq[best] {
                best = i;
            }
        }
        freq[best] -= 1;
        sum -= 1;
    }
    freq
}

/// Table for scale index `sigma_index`: the discretized Gaussian over the
/// symbol support, quantized by [`quantize_frequencies`].
pub fn build_cdf(sigma_index: usize) -> Result<CdfTable> {
    ensure!(sigma_index < SCALE_LEVELS, "scale index {sigma_index} out of range");
    let probs: Vec<f64> = (0..SYMBOLS)
        .map(|s| table_likelihood(s as i32 + SYMBOL_MIN, sigma_index))
        .collect();
    CdfTable::from_frequencies(&quantize_frequencies(&probs))
}

/// All 64 scale-indexed tables, built once.
pub fn standard_tables() -> &'static [CdfTable] {
    static TABLES: OnceLock<Vec<CdfTable>> = OnceLock::new();
    TABLES.get_or_init(|| (0..SCALE_LEVELS).map(|i| build_cdf(i).expect("valid index")).collect())
}

#[derive(Debug)]
pub struct RangeEncoder {
    low: u64,
    range: u32,
    cache: u8,
    cache_size: u64,
    out: Vec<u8>,
    symbols: usize,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        Self {
            low: 0,
            range: u32::MAX,
            cache: 0,
            cache_size: 1,
            out: Vec::new(),
            symbols: 0,
        }
    }

    pub fn encode(&mut self, symbol: usize, table: &CdfTable) -> Result<()> {
        ensure!(
            symbol < table.symbols(),
            "symbol {symbol} outside table support of {}",
            table.symbols()
        );
        let start = table.cf[symbol];
        let end = table.cf[symbol + 1];
        let r = self.range >> PRECISION;
        self.low += r as u64 * start as u64;
        // the leftover `range − r·65536` is dropped rather than handed to the
        // last symbol, so every symbol costs what its frequency says
        self.range = r * (end - start);
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
        self.symbols += 1;
        Ok(())
    }

    fn shift_low(&mut self) {
        if (self.low as u32) < 0xFF00_0000 || (self.low >> 32) != 0 {
            let carry = (self.low >> 32) as u8;
            let mut temp = self.cache;
            loop {
                self.out.push(temp.wrapping_add(carry));
                temp = 0xFF;
                self.cache_size -= 1;
                if self.cache_size == 0 {
                    break;
                }
            }
            self.cache = (self.low >> 24) as u8;
        }
        self.cache_size += 1;
        self.low = (self.low & 0x00FF_FFFF) << 8;
    }

    /// Flushes the state. An encoder that saw no symbols produces no bytes.
    pub fn finish(mut self) -> Vec<u8> {
        if self.symbols == 0 {
            return Vec::new();
        }
        for _ in 0..5 {
            self.shift_low();
        }
        self.out
    }
}

#[derive(Debug)]
pub struct RangeDecoder<'a> {
    buf: &'a [u8],
    pos: usize,
    code: u32,
    range: u32,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(buf: &'a [u8]) -> Result<Self> {
        let mut d = Self {
            buf,
            pos: 0,
            code: 0,
            range: u32::MAX,
        };
        if buf.is_empty() {
            return Ok(d);
        }
        ensure_leading_zero(buf)?;
        for _ in 0..5 {
            d.code = (d.code << 8) | d.next()? as u32;
        }
        Ok(d)
    }

    fn next(&mut self) -> Result<u8> {
        let b = *self.buf.get(self.pos).ok_or(Error::Truncated("range-coded payload"))?;
        self.pos += 1;
        Ok(b)
    }

    pub fn decode(&mut self, table: &CdfTable) -> Result<usize> {
        if self.buf.is_empty() {
            return Err(Error::Truncated("range-coded payload"));
        }
        let r = self.range >> PRECISION;
        let target = (self.code / r).min(TOTAL - 1);
        let s = table.lookup(target);
        let start = table.cf[s];
        let end = table.cf[s + 1];
        self.code -= r * start;
        self.range = r * (end - start);
        if self.code >= self.range {
            return Err(Error::Malformed {
                what: "range-coded payload",
                reason: "decoder state left its interval".into(),
            });
        }
        while self.range < TOP {
            self.code = (self.code << 8) | self.next()? as u32;
            self.range <<= 8;
        }
        Ok(s)
    }

    pub fn consumed(&self) -> usize {
        self.pos
    }

    /// Fails unless every byte of the input has been read.
    pub fn finish(self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Malformed {
                what: "range-coded payload",
                reason: format!("{} unread trailing bytes", self.buf.len() - self.pos),
            });
        }
        Ok(())
    }
}

fn ensure_leading_zero(buf: &[u8]) -> Result<()> {
    if buf[0] != 0 {
        return Err(Error::Malformed {
            what: "range-coded payload",
            reason: "first byte must be zero".into(),
        });
    }
    Ok(())
}

/// Codes `symbols[i]` under `tables[i]`.
pub fn encode(symbols: &[usize], tables: &[&CdfTable]) -> Result<Vec<u8>> {
    ensure!(
        symbols.len() == tables.len(),
        "{} symbols but {} tables",
        symbols.len(),
        tables.len()
    );
    let mut enc = RangeEncoder::new();
    for (&s, t) in symbols.iter().zip(tables) {
        enc.encode(s, t)?;
    }
    Ok(enc.finish())
}

/// Decodes `tables.len()` symbols and requires the stream to be used up.
pub fn decode(bytes: &[u8], tables: &[&CdfTable]) -> Result<Vec<usize>> {
    if tables.is_empty() {
        ensure!(bytes.is_empty(), "empty symbol sequence with {} payload bytes", bytes.len());
        return Ok(Vec::new());
    }
    let mut dec = RangeDecoder::new(bytes)?;
    let out = tables.iter().map(|t| dec.decode(t)).collect::<Result<Vec<_>>>()?;
    dec.finish()?;
    Ok(out)
}

/// `Σ −log₂(freq/65536)` over the sequence.
pub fn cross_entropy_bits(symbols: &[usize], tables: &[&CdfTable]) -> f64 {
    symbols.iter().zip(tables).map(|(&s, t)| t.cost_bits(s)).sum()
}
