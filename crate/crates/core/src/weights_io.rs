//! Seeded parameter initialization and the checksummed `MGTW` weight file.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "MGTW" | version u8 | config_id u8 | seed u64 | entry_count u32
//! entry*: name_len u32 | name (UTF-8) | rank u32 | dims u32[rank] | f32[Π dims]
//! crc32 u32   (IEEE, over every preceding byte)
//! ```

use std::collections::HashMap;

use rand::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{Error, Result};
use crate::params::{Init, ParamSource};

pub const WEIGHT_MAGIC: [u8; 4] = *b"MGTW";
pub const WEIGHT_VERSION: u8 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub name: String,
    pub shape: Vec<u32>,
    pub data: Vec<f32>,
}

impl Entry {
    fn bit_eq(&self, other: &Entry) -> bool {
        self.name == other.name
            && self.shape == other.shape
            && self.data.len() == other.data.len()
            && self.data.iter().zip(&other.data).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightFile {
    pub config_id: u8,
    pub seed: u64,
    pub entries: Vec<Entry>,
}

impl WeightFile {
    /// Equality on raw bit patterns (distinguishes `-0.0` from `0.0`, NaN payloads).
    pub fn bit_eq(&self, other: &WeightFile) -> bool {
        self.config_id == other.config_id
            && self.seed == other.seed
            && self.entries.len() == other.entries.len()
            && self.entries.iter().zip(&other.entries).all(|(a, b)| a.bit_eq(b))
    }

    pub fn entry(&self, name: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&WEIGHT_MAGIC);
        out.push(WEIGHT_VERSION);
        out.push(self.config_id);
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for e in &self.entries {
            out.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
            out.extend_from_slice(e.name.as_bytes());
            out.extend_from_slice(&(e.shape.len() as u32).to_le_bytes());
            for d in &e.shape {
                out.extend_from_slice(&d.to_le_bytes());
            }
            for v in &e.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(Error::Truncated("weight file"));
        }
        let magic: [u8; 4] = bytes[..4].try_into().unwrap();
        if magic != WEIGHT_MAGIC {
            return Err(Error::BadMagic {
                what: "weight file",
                expected: WEIGHT_MAGIC,
                found: magic,
            });
        }
        if bytes.len() < 4 + 1 + 1 + 8 + 4 + 4 {
            return Err(Error::Truncated("weight file"));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(Error::Checksum { stored, computed });
        }
        let mut r = Reader { buf: body, pos: 4 };
        let version = r.u8()?;
        if version != WEIGHT_VERSION {
            return Err(Error::UnsupportedVersion {
                what: "weight file",
                version,
            });
        }
        let config_id = r.u8()?;
        let seed = r.u64()?;
        let count = r.u32()? as usize;
        let mut entries: Vec<Entry> = Vec::new();
        let mut seen = HashMap::new();
        for idx in 0..count {
            let name_len = r.u32()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec()).map_err(|_| Error::Malformed {
                what: "weight file",
                reason: format!("entry {idx} name is not UTF-8"),
            })?;
            if seen.insert(name.clone(), idx).is_some() {
                return Err(Error::entry(name, "duplicate entry name"));
            }
            let rank = r.u32()? as usize;
            let mut shape = Vec::with_capacity(rank.min(8));
            for _ in 0..rank {
                shape.push(r.u32()?);
            }
            let numel = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
                .ok_or_else(|| Error::entry(&name, "shape overflows"))?;
            let payload = numel
                .checked_mul(4)
                .filter(|&n| n <= r.remaining())
                .ok_or_else(|| Error::entry(&name, format!("payload of {numel} floats exceeds file")))?;
            let data = r
                .take(payload)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            entries.push(Entry { name, shape, data });
        }
        if r.remaining() != 0 {
            return Err(Error::Malformed {
                what: "weight file",
                reason: format!("{} trailing bytes after last entry", r.remaining()),
            });
        }
        Ok(Self {
            config_id,
            seed,
            entries,
        })
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.remaining() {
            return Err(Error::Truncated("weight file"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Draws every parameter from a seeded xoshiro256++ stream (seed expanded by
/// splitmix64) in request order and records it.
pub struct Initializer {
    rng: Xoshiro256PlusPlus,
    entries: Vec<Entry>,
}

impl Initializer {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: Xoshiro256PlusPlus::seed_from_u64(seed),
            entries: Vec::new(),
        }
    }

    pub fn into_entries(self) -> Vec<Entry> {
        self.entries
    }

    /// A value in `(−b, b]`.
    fn uniform(&mut self, bound: f64) -> f32 {
        let u = (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        let mut v = (bound * (1.0 - 2.0 * u)) as f32;
        while v as f64 > bound {
            v = v.next_down();
        }
        while v as f64 <= -bound {
            v = v.next_up();
        }
        v
    }
}

impl ParamSource for Initializer {
    fn param(&mut self, name: &str, shape: &[usize], init: Init) -> Result<Vec<f32>> {
        if self.entries.iter().any(|e| e.name == name) {
            return Err(Error::entry(name, "registered twice"));
        }
        let numel: usize = shape.iter().product();
        let data: Vec<f32> = match init {
            Init::Uniform { fan_in } => {
                let bound = (6.0 / fan_in as f64).sqrt();
                (0..numel).map(|_| self.uniform(bound)).collect()
            }
            Init::Zeros => vec![0.0; numel],
            Init::Ones => vec![1.0; numel],
            Init::Const(v) => vec![v; numel],
            Init::Values(v) => {
                if v.len() != numel {
                    return Err(Error::entry(name, format!("{} fixed values for {} slots", v.len(), numel)));
                }
                v
            }
        };
        self.entries.push(Entry {
            name: name.to_string(),
            shape: shape.iter().map(|&d| d as u32).collect(),
            data: data.clone(),
        });
        Ok(data)
    }
}

/// Serves parameters out of a loaded [`WeightFile`], checking shapes.
pub struct Loader<'a> {
    file: &'a WeightFile,
    index: HashMap<&'a str, usize>,
    used: Vec<bool>,
}

impl<'a> Loader<'a> {
    pub fn new(file: &'a WeightFile) -> Self {
        let index = file
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.name.as_str(), i))
            .collect();
        Self {
            file,
            index,
            used: vec![false; file.entries.len()],
        }
    }

    /// Fails if the file holds entries nothing asked for.
    pub fn finish(&self) -> Result<()> {
        match self.used.iter().position(|u| !u) {
            Some(i) => Err(Error::entry(&self.file.entries[i].name, "not used by this configuration")),
            None => Ok(()),
        }
    }
}

impl ParamSource for Loader<'_> {
    fn param(&mut self, name: &str, shape: &[usize], _init: Init) -> Result<Vec<f32>> {
        let &i = self.index.get(name).ok_or_else(|| Error::entry(name, "missing"))?;
        let e = &self.file.entries[i];
        let want: Vec<u32> = shape.iter().map(|&d| d as u32).collect();
        if e.shape != want {
            return Err(Error::entry(name, format!("shape {:?}, expected {:?}", e.shape, want)));
        }
        self.used[i] = true;
        Ok(e.data.clone())
    }
}
