//! On-disk formats.
//!
//! * raw samples: one byte per ADC code, in sample order, no header
//! * packed bits: LSB-first bytes, no header, final byte zero-padded
//! * seed file: packed bits of exactly `ceil((m + n - 1) / 8)` bytes
//!   (concatenated seeds for refresh)
//! * sidecar metadata: `<file>.meta`, one `key: value` per line

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::bits::BitBlock;
use crate::error::{Error, Result};
use crate::toeplitz::{ToeplitzParams, ToeplitzSeed};

/// SHA-256 of the canonical TOML rendering of `value`, hex encoded.
pub fn config_digest<T: Serialize>(value: &T) -> String {
    let text = toml::to_string(value).expect("config types serialize to TOML");
    hex::encode(Sha256::digest(text.as_bytes()))
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

/// Ordered `key: value` metadata.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Metadata {
    entries: BTreeMap<String, String>,
}

impl Metadata {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: impl Into<String>, value: impl ToString) -> &mut Self {
        let value = value.to_string().replace('\n', " ");
        self.entries.insert(key.into(), value);
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get_parsed<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)
            .ok_or_else(|| Error::Config(format!("metadata key `{key}` missing")))?
            .parse()
            .map_err(|_| Error::Config(format!("metadata key `{key}` is malformed")))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("metadata line without `:`: {line:?}")))?;
            entries.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}: {v}\n")).collect()
    }

    pub fn write_sidecar(&self, data_path: &Path) -> Result<()> {
        fs::write(sidecar_path(data_path), self.render()).map_err(Error::io("write metadata"))
    }

    pub fn read_sidecar(data_path: &Path) -> Result<Self> {
        let text = fs::read_to_string(sidecar_path(data_path)).map_err(Error::io("read metadata"))?;
        Self::parse(&text)
    }
}

pub fn write_raw_samples(path: &Path, samples: &[u8]) -> Result<()> {
    fs::write(path, samples).map_err(Error::io("write raw samples"))
}

pub fn read_raw_samples(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(Error::io("read raw samples"))
}

pub fn write_packed_bits(path: &Path, bits: &BitBlock) -> Result<()> {
    fs::write(path, bits.to_bytes()).map_err(Error::io("write packed bits"))
}

/// Reads a packed-bit file. The bit count comes from the `bits` sidecar key
/// when present, otherwise every byte is taken as 8 bits.
pub fn read_packed_bits(path: &Path) -> Result<BitBlock> {
    let bytes = fs::read(path).map_err(Error::io("read packed bits"))?;
    let len = match Metadata::read_sidecar(path) {
        Ok(meta) if meta.get("bits").is_some() => meta.get_parsed::<usize>("bits")?,
        _ => bytes.len() * 8,
    };
    BitBlock::from_bytes(&bytes, len)
}

pub fn write_seed(path: &Path, seed: &ToeplitzSeed, params: &ToeplitzParams) -> Result<()> {
    fs::write(path, seed.to_bytes()).map_err(Error::io("write seed"))?;
    let mut meta = Metadata::new();
    meta.insert("format", "toeplitz-seed")
        .insert("m", params.m)
        .insert("n", params.n)
        .insert("seed_bits", params.seed_len())
        .insert("seeds", 1);
    meta.write_sidecar(path)
}

/// Reads all seeds from a seed file, checking the sidecar geometry if present.
pub fn read_seeds(path: &Path, params: &ToeplitzParams) -> Result<Vec<ToeplitzSeed>> {
    let bytes = fs::read(path).map_err(Error::io("read seed"))?;
    if let Ok(meta) = Metadata::read_sidecar(path) {
        let m: usize = meta.get_parsed("m")?;
        let n: usize = meta.get_parsed("n")?;
        if (m, n) != (params.m, params.n) {
            return Err(Error::Config(format!(
                "seed file is for (m={m}, n={n}), extractor is (m={}, n={})",
                params.m, params.n
            )));
        }
    }
    let per = params.seed_bytes();
    if bytes.is_empty() || bytes.len() % per != 0 {
        return Err(Error::Config(format!(
            "seed file has {} bytes, expected a positive multiple of {per}",
            bytes.len()
        )));
    }
    bytes.chunks(per).map(|c| ToeplitzSeed::from_bytes(c, params)).collect()
}
