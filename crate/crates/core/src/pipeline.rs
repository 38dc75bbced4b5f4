//! End-to-end data path: samples, bit selection, `n`-bit framing, Toeplitz
//! extraction and packed output, plus the run manifest.
//!
//! Sample generation runs on its own thread and hands batches over a bounded
//! channel. A slow consumer therefore pauses generation instead of losing
//! extracted bits.

use std::fmt;
use std::fs;
use std::io::{Read, Write};
use std::num::NonZeroU64;
use std::path::{Path, PathBuf};
use std::sync::mpsc::{self, Receiver, SyncSender};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bits::{BitBlock, KeepMask, SampleBitSelector};
use crate::entropy::{EntropyBudget, EntropyModel};
use crate::error::{Error, Result};
use crate::formats::{self, config_digest, Metadata};
use crate::source::{SimConfig, SourceSimulator};
use crate::toeplitz::{
    BlockFramer, PrngSeedSource, SeedList, SeedSource, StreamExtractor, ToeplitzParams, ToeplitzSeed,
};

pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// Where matrix seeds come from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeedSpec {
    /// ChaCha20 stream keyed by this value.
    Prng(u64),
    /// Packed seed file; extra concatenated seeds feed refreshes.
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractorConfig {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub epsilon_exponent: u32,
    /// Blocks per seed; absent means the seed is never refreshed.
    #[serde(default)]
    pub refresh_period: Option<NonZeroU64>,
    pub seed: SeedSpec,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        let p = ToeplitzParams::default();
        Self {
            m: p.m,
            n: p.n,
            k: p.k,
            epsilon_exponent: p.epsilon_exponent,
            refresh_period: None,
            seed: SeedSpec::Prng(0x5eed),
        }
    }
}

impl ExtractorConfig {
    pub fn params(&self) -> ToeplitzParams {
        ToeplitzParams {
            m: self.m,
            n: self.n,
            k: self.k,
            epsilon_exponent: self.epsilon_exponent,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputSpec {
    File(PathBuf),
    Tcp(String),
}

fn default_keep_mask() -> u8 {
    KeepMask::DEFAULT.bits()
}

fn default_workers() -> usize {
    1
}

fn default_batch_blocks() -> usize {
    256
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// ADC bits kept for extraction (bit 7 = MSB).
    #[serde(default = "default_keep_mask")]
    pub keep_mask: u8,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Blocks extracted per batch.
    #[serde(default = "default_batch_blocks")]
    pub batch_blocks: usize,
    /// Delivery cap in bits/s.
    #[serde(default)]
    pub rate_cap: Option<f64>,
    #[serde(default)]
    pub output: Option<OutputSpec>,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub entropy: EntropyModel,
    #[serde(default)]
    pub extractor: ExtractorConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            keep_mask: default_keep_mask(),
            workers: default_workers(),
            batch_blocks: default_batch_blocks(),
            rate_cap: None,
            output: None,
            sim: SimConfig::default(),
            entropy: EntropyModel::default(),
            extractor: ExtractorConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Loads a config file; relative seed and output paths resolve against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(Error::io("read config"))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(dir) = path.parent() {
            if let SeedSpec::File(p) = &mut cfg.extractor.seed {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
            if let Some(OutputSpec::File(p)) = &mut cfg.output {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Digest of the canonical serialization.
    pub fn hash(&self) -> String {
        config_digest(self)
    }

    pub fn keep_mask(&self) -> Result<KeepMask> {
        KeepMask::new(self.keep_mask)
    }

    pub fn params(&self) -> ToeplitzParams {
        self.extractor.params()
    }

    /// Validates every section and applies the leftover-hash budget gate.
    pub fn validate(&self) -> Result<EntropyBudget> {
        self.sim.validate()?;
        self.entropy.validate()?;
        let params = self.params();
        params.validate()?;
        let mask = self.keep_mask()?;
        if self.sim.adc != self.entropy.adc {
            return Err(Error::Config(
                "simulator and entropy model must use the same ADC geometry".into(),
            ));
        }
        if self.workers == 0 || self.batch_blocks == 0 {
            return Err(Error::Config("workers and batch_blocks must be >= 1".into()));
        }
        if let Some(cap) = self.rate_cap {
            if !(cap > 0.0) {
                return Err(Error::Config(format!("rate cap must be positive, got {cap}")));
            }
        }
        let budget = EntropyBudget::compute(&self.entropy, mask, params.n, params.m, params.epsilon_exponent)?;
        budget.check()?;
        Ok(budget)
    }

    /// Initial seed, the source for refreshes, and a provenance string.
    pub fn seeds(&self) -> Result<(ToeplitzSeed, Box<dyn SeedSource>, String)> {
        let params = self.params();
        match &self.extractor.seed {
            SeedSpec::Prng(key) => {
                let mut src = PrngSeedSource::new(*key);
                let first = src.next(&params);
                let provenance = src.describe();
                Ok((first, Box::new(src), provenance))
            }
            SeedSpec::File(path) => {
                let seeds = formats::read_seeds(path, &params)?;
                let bytes = fs::read(path).map_err(Error::io("read seed"))?;
                let provenance = format!(
                    "file {} sha256 {} ({} seeds)",
                    path.display(),
                    hex::encode(Sha256::digest(&bytes)),
                    seeds.len()
                );
                let mut list = SeedList::new(seeds);
                let first = list.take_first().expect("seed file holds at least one seed");
                Ok((first, Box::new(list), provenance))
            }
        }
    }

    /// Samples per generation batch.
    fn batch_samples(&self) -> usize {
        let kept = self.keep_mask.count_ones().max(1) as usize;
        (self.batch_blocks * self.extractor.n).div_ceil(kept)
    }
}

impl SeedSource for Box<dyn SeedSource> {
    fn next_seed(&mut self, params: &ToeplitzParams) -> Result<Option<ToeplitzSeed>> {
        (**self).next_seed(params)
    }

    fn describe(&self) -> String {
        (**self).describe()
    }
}

/// Supplies ADC samples to the pipeline.
pub trait SampleFeed: Send {
    /// Fills a prefix of `buf`; returns 0 at end of input.
    fn fill(&mut self, buf: &mut [u8]) -> Result<usize>;
}

/// Simulated source, optionally limited to a sample count.
pub struct SimulatorFeed {
    sim: SourceSimulator,
    remaining: Option<u64>,
}

impl SimulatorFeed {
    pub fn new(config: &SimConfig, limit: Option<u64>) -> Result<Self> {
        Ok(Self {
            sim: SourceSimulator::new(config)?,
            remaining: limit,
        })
    }
}

impl SampleFeed for SimulatorFeed {
    fn fill(&mut self, buf: &mut [u8]) -> Result<usize> {
        let n = match self.remaining {
            Some(r) => (r.min(buf.len() as u64)) as usize,
            None => buf.len(),
        };
        self.sim.fill(&mut buf[..n]);
        if let Some(r) = &mut self.remaining {
            *r -= n as u64;
        }
        Ok(n)
    }
}

/// Samples read from a byte stream (one byte per sample).
pub struct ReaderFeed<R> {
    reader: R,
}

impl<R: Read + Send> ReaderFeed<R> {
    pub fn new(reader: R) -> Self {
        Self { reader }
    }
}

impl<R: Read + Send> SampleFeed for ReaderFeed<R> {
    fn fill(&mut self, buf: &mut [u8]) -> Result<usize> {
        let mut filled = 0;
        while filled < buf.len() {
            match self.reader.read(&mut buf[filled..]) {
                Ok(0) => break,
                Ok(n) => filled += n,
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
                Err(e) => return Err(Error::Io { stage: "read samples", source: e }),
            }
        }
        Ok(filled)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PipelineCounters {
    pub samples: u64,
    pub kept_bits: u64,
    pub blocks: u64,
    pub bits_in: u64,
    pub bits_out: u64,
    /// Kept bits left over after the last full block.
    pub residual_bits: u64,
    pub seeds_used: u64,
}

type Batch = Result<Vec<u8>>;

/// Pull-based stream of packed extracted bytes.
pub struct PipelineStream {
    rx: Option<Receiver<Batch>>,
    producer: Option<JoinHandle<()>>,
    selector: SampleBitSelector,
    framer: BlockFramer,
    extractor: StreamExtractor<Box<dyn SeedSource>>,
    pending_out: BitBlock,
    samples: u64,
    kept_bits: u64,
    seed_provenance: String,
    finished: bool,
}

fn produce(mut feed: Box<dyn SampleFeed>, batch: usize, tx: SyncSender<Batch>) {
    loop {
        let mut buf = vec![0u8; batch];
        match feed.fill(&mut buf) {
            Ok(0) => return,
            Ok(n) => {
                buf.truncate(n);
                if tx.send(Ok(buf)).is_err() {
                    return;
                }
            }
            Err(e) => {
                let _ = tx.send(Err(e));
                return;
            }
        }
    }
}

impl PipelineStream {
    /// Stream over the configured simulator; `n_samples = None` runs forever.
    pub fn simulated(config: &PipelineConfig, n_samples: Option<u64>) -> Result<Self> {
        config.validate()?;
        let feed = SimulatorFeed::new(&config.sim, n_samples)?;
        Self::from_feed(config, Box::new(feed))
    }

    pub fn from_feed(config: &PipelineConfig, feed: Box<dyn SampleFeed>) -> Result<Self> {
        config.validate()?;
        let params = config.params();
        let (seed, source, seed_provenance) = config.seeds()?;
        let extractor = StreamExtractor::new(&seed, params, source, config.extractor.refresh_period)?
            .with_workers(config.workers);
        let (tx, rx) = mpsc::sync_channel(2);
        let batch = config.batch_samples();
        let producer = thread::Builder::new()
            .name("qrng-source".into())
            .spawn(move || produce(feed, batch, tx))
            .map_err(Error::io("spawn source thread"))?;
        Ok(Self {
            rx: Some(rx),
            producer: Some(producer),
            selector: SampleBitSelector::new(config.keep_mask()?),
            framer: BlockFramer::new(params.n),
            extractor,
            pending_out: BitBlock::default(),
            samples: 0,
            kept_bits: 0,
            seed_provenance,
            finished: false,
        })
    }

    pub fn seed_provenance(&self) -> &str {
        &self.seed_provenance
    }

    pub fn counters(&self) -> PipelineCounters {
        let st = self.extractor.stats();
        PipelineCounters {
            samples: self.samples,
            kept_bits: self.kept_bits,
            blocks: st.blocks_out,
            bits_in: st.bits_in,
            bits_out: st.bits_out,
            residual_bits: self.framer.residual() as u64 + st.dropped_bits,
            seeds_used: st.seeds_used,
        }
    }

    fn take_whole_bytes(&mut self) -> Vec<u8> {
        let whole = self.pending_out.len() / 8 * 8;
        if whole == 0 {
            return Vec::new();
        }
        let bytes = self.pending_out.slice(0, whole).to_bytes();
        self.pending_out = self.pending_out.slice(whole, self.pending_out.len() - whole);
        bytes
    }

    /// Next chunk of output bytes; `None` once the input is exhausted. The
    /// final chunk zero-pads a partial byte.
    pub fn next_chunk(&mut self) -> Result<Option<Vec<u8>>> {
        while !self.finished {
            let batch = match self.rx.as_ref().map(Receiver::recv) {
                Some(Ok(batch)) => batch?,
                _ => {
                    self.finished = true;
                    let mut bytes = self.take_whole_bytes();
                    if !self.pending_out.is_empty() {
                        bytes.extend(self.pending_out.to_bytes());
                        self.pending_out = BitBlock::default();
                    }
                    return Ok((!bytes.is_empty()).then_some(bytes));
                }
            };
            self.samples += batch.len() as u64;
            self.kept_bits += batch.len() as u64 * u64::from(self.selector.mask().kept());
            self.selector.append(&batch, self.framer.buffer_mut());
            let blocks = self.framer.drain_blocks();
            if blocks.is_empty() {
                continue;
            }
            for out in self.extractor.process_batch(&blocks)? {
                self.pending_out.extend_from_block(&out);
            }
            let bytes = self.take_whole_bytes();
            if !bytes.is_empty() {
                return Ok(Some(bytes));
            }
        }
        Ok(None)
    }
}

impl Drop for PipelineStream {
    fn drop(&mut self) {
        // closing the channel stops the producer at its next send
        self.rx.take();
        if let Some(h) = self.producer.take() {
            let _ = h.join();
        }
    }
}

/// Paces writes to a target bit rate.
///
/// The clock starts at the first [`RateLimiter::acquire`]. Time spent idle
/// (a slow producer) earns at most [`RateLimiter::BURST`] of catch-up.
#[derive(Debug)]
pub struct RateLimiter {
    bits_per_sec: f64,
    start: Option<Instant>,
    sent_bits: f64,
}

impl RateLimiter {
    pub const BURST: Duration = Duration::from_millis(10);

    pub fn new(bits_per_sec: f64) -> Self {
        Self {
            bits_per_sec,
            start: None,
            sent_bits: 0.0,
        }
    }

    pub fn bits_per_sec(&self) -> f64 {
        self.bits_per_sec
    }

    /// Write size covering about one burst interval, 1 to
    /// [`PACED_WRITE_BYTES`] bytes.
    pub fn piece_bytes(&self) -> usize {
        let bytes = self.bits_per_sec * Self::BURST.as_secs_f64() / 8.0;
        (bytes as usize).clamp(1, PACED_WRITE_BYTES)
    }

    /// Blocks until `bits` more may be sent.
    pub fn acquire(&mut self, bits: u64) {
        let now = Instant::now();
        let start = *self.start.get_or_insert(now);
        let due = Duration::from_secs_f64(self.sent_bits / self.bits_per_sec);
        if now.duration_since(start) > due + Self::BURST {
            self.start = Some(now - due - Self::BURST);
        }
        self.sent_bits += bits as f64;
        let due = Duration::from_secs_f64(self.sent_bits / self.bits_per_sec);
        let target = self.start.expect("clock started") + due;
        let now = Instant::now();
        if target > now {
            thread::sleep(target - now);
        }
    }
}

/// Largest write issued under a rate cap.
pub const PACED_WRITE_BYTES: usize = 4096;

/// Writes `bytes`, pacing through `limiter` when present.
pub fn write_paced(out: &mut dyn Write, bytes: &[u8], limiter: Option<&mut RateLimiter>) -> std::io::Result<()> {
    match limiter {
        None => out.write_all(bytes),
        Some(l) => {
            for piece in bytes.chunks(l.piece_bytes()) {
                l.acquire(piece.len() as u64 * 8);
                out.write_all(piece)?;
            }
            Ok(())
        }
    }
}

/// Record of one pipeline run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunManifest {
    pub config_echo: String,
    pub config_hash: String,
    pub counters: PipelineCounters,
    pub m: usize,
    pub n: usize,
    pub keep_mask: u8,
    pub workers: usize,
    pub elapsed_secs: f64,
    pub seed_provenance: String,
    pub tool_version: String,
}

impl RunManifest {
    pub fn output_rate(&self) -> f64 {
        self.counters.bits_out as f64 / self.elapsed_secs.max(1e-12)
    }

    pub fn input_rate(&self) -> f64 {
        self.counters.bits_in as f64 / self.elapsed_secs.max(1e-12)
    }

    /// `bits_out = floor(kept_bits / n) * m`.
    pub fn counts_consistent(&self) -> bool {
        let c = &self.counters;
        c.kept_bits == c.samples * u64::from(self.keep_mask.count_ones())
            && c.bits_out == c.kept_bits / self.n as u64 * self.m as u64
            && c.residual_bits == c.kept_bits % self.n as u64
    }

    pub fn to_metadata(&self) -> Metadata {
        let c = &self.counters;
        let mut meta = Metadata::new();
        meta.insert("tool_version", &self.tool_version)
            .insert("config_hash", &self.config_hash)
            .insert("samples", c.samples)
            .insert("keep_mask", format!("{:#010b}", self.keep_mask))
            .insert("kept_bits", c.kept_bits)
            .insert("n", self.n)
            .insert("m", self.m)
            .insert("blocks", c.blocks)
            .insert("bits_in", c.bits_in)
            .insert("bits_out", c.bits_out)
            .insert("residual_bits", c.residual_bits)
            .insert("seeds_used", c.seeds_used)
            .insert("seed_provenance", &self.seed_provenance)
            .insert("workers", self.workers)
            .insert("elapsed_s", format!("{:.6}", self.elapsed_secs))
            .insert("input_rate_bps", format!("{:.1}", self.input_rate()))
            .insert("output_rate_bps", format!("{:.1}", self.output_rate()));
        meta
    }
}

impl fmt::Display for RunManifest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_metadata().render())?;
        writeln!(f, "config_echo:")?;
        for line in self.config_echo.lines() {
            writeln!(f, "  {line}")?;
        }
        Ok(())
    }
}

/// Runs `n_samples` simulated samples through the pipeline into `out`.
pub fn run_pipeline(config: &PipelineConfig, n_samples: u64, out: &mut dyn Write) -> Result<RunManifest> {
    let stream = PipelineStream::simulated(config, Some(n_samples))?;
    drain_stream(config, stream, out)
}

/// Runs the extractor over raw samples from `input`.
pub fn run_extract(config: &PipelineConfig, input: Box<dyn SampleFeed>, out: &mut dyn Write) -> Result<RunManifest> {
    let stream = PipelineStream::from_feed(config, input)?;
    drain_stream(config, stream, out)
}

fn drain_stream(config: &PipelineConfig, mut stream: PipelineStream, out: &mut dyn Write) -> Result<RunManifest> {
    let start = Instant::now();
    let mut limiter = config.rate_cap.map(RateLimiter::new);
    while let Some(chunk) = stream.next_chunk()? {
        write_paced(out, &chunk, limiter.as_mut()).map_err(Error::io("write output"))?;
    }
    out.flush().map_err(Error::io("write output"))?;
    let params = config.params();
    Ok(RunManifest {
        config_echo: config.to_toml(),
        config_hash: config.hash(),
        counters: stream.counters(),
        m: params.m,
        n: params.n,
        keep_mask: config.keep_mask,
        workers: config.workers,
        elapsed_secs: start.elapsed().as_secs_f64(),
        seed_provenance: stream.seed_provenance().to_string(),
        tool_version: TOOL_VERSION.to_string(),
    })
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

/// Writes the packed output, its `.meta` sidecar and a `.manifest`.
pub fn write_run_outputs(path: &Path, manifest: &RunManifest) -> Result<()> {
    let mut meta = Metadata::new();
    meta.insert("format", "packed-bits-lsb-first")
        .insert("bits", manifest.counters.bits_out)
        .insert("m", manifest.m)
        .insert("n", manifest.n)
        .insert("config_hash", &manifest.config_hash);
    meta.write_sidecar(path)?;
    fs::write(manifest_path(path), manifest.to_string()).map_err(Error::io("write manifest"))
}

pub fn run_pipeline_to_file(config: &PipelineConfig, n_samples: u64, path: &Path) -> Result<RunManifest> {
    let file = fs::File::create(path).map_err(Error::io("create output"))?;
    let mut w = std::io::BufWriter::new(file);
    let manifest = run_pipeline(config, n_samples, &mut w)?;
    drop(w);
    write_run_outputs(path, &manifest)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> PipelineConfig {
        PipelineConfig {
            batch_blocks: 4,
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn default_config_validates() {
        let b = PipelineConfig::default().validate().unwrap();
        assert!(b.m_max >= 1024);
    }

    #[test]
    fn toml_roundtrip_preserves_hash() {
        let cfg = PipelineConfig {
            rate_cap: Some(1e6),
            output: Some(OutputSpec::Tcp("127.0.0.1:7000".into())),
            extractor: ExtractorConfig {
                refresh_period: NonZeroU64::new(100),
                ..ExtractorConfig::default()
            },
            ..PipelineConfig::default()
        };
        let back = PipelineConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn partial_config_uses_defaults() {
        let cfg = PipelineConfig::from_toml("workers = 2\n[extractor]\nm = 512\nn = 1520\nk = 80\nepsilon_exponent = 20\nseed = { prng = 7 }\n").unwrap();
        assert_eq!(cfg.workers, 2);
        assert_eq!(cfg.extractor.m, 512);
        assert_eq!(cfg.sim, SimConfig::default());
        assert!(PipelineConfig::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn budget_gate() {
        let mut cfg = PipelineConfig::default();
        cfg.extractor.m = 1100;
        assert!(matches!(cfg.validate(), Err(Error::BudgetExceeded { m: 1100, .. })));
        cfg.extractor.m = 1024;
        cfg.keep_mask = 0;
        assert!(matches!(cfg.validate(), Err(Error::EmptyKeepMask)));
    }

    #[test]
    fn ragged_tiling_rejected() {
        let mut cfg = PipelineConfig::default();
        cfg.extractor.k = 70;
        assert!(matches!(cfg.validate(), Err(Error::InvalidParams(_))));
    }

    #[test]
    fn one_block_exactly() {
        let mut out = Vec::new();
        let man = run_pipeline(&small_config(), 304, &mut out).unwrap();
        assert_eq!(man.counters.kept_bits, 1520);
        assert_eq!(man.counters.bits_out, 1024);
        assert_eq!(out.len(), 128);
        assert!(man.counts_consistent());
    }

    #[test]
    fn sub_block_remainder_dropped() {
        let mut out = Vec::new();
        let man = run_pipeline(&small_config(), 303, &mut out).unwrap();
        assert_eq!(man.counters.bits_out, 0);
        assert_eq!(man.counters.residual_bits, 1515);
        assert!(out.is_empty());
        assert!(man.counts_consistent());
    }

    #[test]
    fn odd_output_width_packs_continuously() {
        let mut cfg = small_config();
        cfg.extractor.m = 1001;
        let mut out = Vec::new();
        let man = run_pipeline(&cfg, 304 * 3, &mut out).unwrap();
        assert_eq!(man.counters.bits_out, 3003);
        assert_eq!(out.len(), 3003usize.div_ceil(8));
    }

    #[test]
    fn reader_feed_matches_simulator() {
        let cfg = small_config();
        let raw = crate::source::simulate_raw(&cfg.sim, 5000).unwrap();
        let mut a = Vec::new();
        run_pipeline(&cfg, 5000, &mut a).unwrap();
        let mut b = Vec::new();
        run_extract(&cfg, Box::new(ReaderFeed::new(std::io::Cursor::new(raw.samples.clone()))), &mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn manifest_lists_counts() {
        let mut out = Vec::new();
        let man = run_pipeline(&small_config(), 1000, &mut out).unwrap();
        let meta = Metadata::parse(&man.to_metadata().render()).unwrap();
        assert_eq!(meta.get_parsed::<u64>("samples").unwrap(), 1000);
        assert_eq!(meta.get_parsed::<u64>("bits_out").unwrap(), 1000 * 5 / 1520 * 1024);
        assert!(man.to_string().contains("config_echo:"));
    }
}
