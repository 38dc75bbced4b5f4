use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use qrng_core::bench;
use qrng_core::bits::BitBlock;
use qrng_core::entropy::EntropyBudget;
use qrng_core::formats::{self, Metadata};
use qrng_core::pipeline::{run_extract, write_run_outputs, PipelineConfig, ReaderFeed, SeedSpec};
use qrng_core::source::{RawRecord, SourceSimulator};
use qrng_core::stabilization::{self, Disturbance, PidConfig, PlantState};
use qrng_core::stats::{self, SuiteConfig};
use qrng_core::toeplitz::{PrngSeedSource, StreamExtractor, ToeplitzSeed};
use qrng_core::{Error, Result};

#[derive(Parser)]
#[command(name = "qrng", version, about = "Phase-noise QRNG data path")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate raw 8-bit samples.
    Simulate {
        #[arg(long)]
        samples: u64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract packed random bits from raw samples or pre-selected bits.
    Extract {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = InputFormat::Raw)]
        format: InputFormat,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Packed seed file (overrides the config).
        #[arg(long, conflicts_with = "prng_key")]
        seed_file: Option<PathBuf>,
        /// ChaCha20 key for generated seeds (overrides the config).
        #[arg(long)]
        prng_key: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the entropy budget and apply the leftover-hash gate.
    Budget {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run randomness checks on packed bits or the autocorrelation of raw samples.
    Analyze {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = InputFormat::Bits)]
        format: InputFormat,
        /// `all` or a comma list of frequency, block_frequency, runs, autocorrelation.
        #[arg(long, default_value = "all")]
        tests: String,
        #[arg(long, default_value_t = 100)]
        max_lag: usize,
        #[arg(long, default_value_t = 1_000_000)]
        sub_block_len: usize,
        #[arg(long, default_value_t = 20_000)]
        block_len: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate the interferometer stabilization loop.
    Stabilize {
        #[arg(long)]
        steps: u64,
        /// CSV of `step,delta` phase steps.
        #[arg(long)]
        disturbance: Option<PathBuf>,
        /// TOML with optional `[pid]` and `[plant]` tables.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Measure extractor, pipeline and delivery throughput.
    Bench {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 2.0)]
        seconds: f64,
        #[arg(long)]
        workers: Option<usize>,
        /// Delivery cap in bits/s for the paced-output measurement.
        #[arg(long)]
        rate_cap: Option<f64>,
    },
    /// Stream extracted bits to TCP clients.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:5555")]
        addr: String,
        #[arg(long)]
        rate_cap: Option<f64>,
    },
    /// Write a Toeplitz seed file from a ChaCha20 key.
    GenSeed {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        key: u64,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum InputFormat {
    Raw,
    Bits,
}

#[derive(Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct LoopConfig {
    pid: PidConfig,
    plant: PlantState,
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    path.map_or_else(|| Ok(PipelineConfig::default()), PipelineConfig::load)
}

fn create(path: &Path, stage: &'static str) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::Io { stage, source: e })?;
    }
    let f = fs::File::create(path).map_err(|e| Error::Io { stage, source: e })?;
    Ok(BufWriter::new(f))
}

fn simulate(samples: u64, seed: Option<u64>, config: Option<&Path>, out: &Path) -> Result<()> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.sim.rng_seed = s;
    }
    let mut sim = SourceSimulator::new(&cfg.sim)?;
    let mut w = create(out, "write raw samples")?;
    let mut buf = vec![0u8; 1 << 16];
    let mut left = samples;
    while left > 0 {
        let take = left.min(buf.len() as u64) as usize;
        sim.fill(&mut buf[..take]);
        w.write_all(&buf[..take]).map_err(|e| Error::Io { stage: "write raw samples", source: e })?;
        left -= take as u64;
    }
    w.flush().map_err(|e| Error::Io { stage: "write raw samples", source: e })?;
    let mut meta = Metadata::new();
    meta.insert("format", "raw-samples-u8")
        .insert("count", samples)
        .insert("config_hash", cfg.sim.digest())
        .insert("classical_std_mv", format!("{:.6}", sim.classical_std()))
        .insert("config", toml::to_string(&cfg.sim).expect("sim config serializes"));
    meta.write_sidecar(out)?;
    println!("samples: {samples}");
    println!("config_hash: {}", cfg.sim.digest());
    Ok(())
}

fn extract(
    input: &Path,
    format: InputFormat,
    config: Option<&Path>,
    seed_file: Option<PathBuf>,
    prng_key: Option<u64>,
    workers: Option<usize>,
    out: &Path,
) -> Result<()> {
    let mut cfg = load_config(config)?;
    if let Some(p) = seed_file {
        cfg.extractor.seed = SeedSpec::File(p);
    }
    if let Some(k) = prng_key {
        cfg.extractor.seed = SeedSpec::Prng(k);
    }
    if let Some(w) = workers {
        cfg.workers = w;
    }
    match format {
        InputFormat::Raw => {
            let file = fs::File::open(input).map_err(|e| Error::Io { stage: "read raw samples", source: e })?;
            let feed = Box::new(ReaderFeed::new(std::io::BufReader::new(file)));
            let mut w = create(out, "write output")?;
            let manifest = run_extract(&cfg, feed, &mut w)?;
            drop(w);
            write_run_outputs(out, &manifest)?;
            print!("{manifest}");
        }
        InputFormat::Bits => extract_bits(&cfg, input, out)?,
    }
    Ok(())
}

/// Bits that already went through selection: frame, hash, pack.
fn extract_bits(cfg: &PipelineConfig, input: &Path, out: &Path) -> Result<()> {
    cfg.validate()?;
    let params = cfg.params();
    let bits = formats::read_packed_bits(input)?;
    let (seed, source, provenance) = cfg.seeds()?;
    let mut ex = StreamExtractor::new(&seed, params, source, cfg.extractor.refresh_period)?.with_workers(cfg.workers);
    let blocks: Vec<BitBlock> = (0..bits.len() / params.n)
        .map(|b| bits.slice(b * params.n, params.n))
        .collect();
    let mut output = BitBlock::with_capacity(blocks.len() * params.m);
    for batch in blocks.chunks(cfg.batch_blocks) {
        for o in ex.process_batch(batch)? {
            output.extend_from_block(&o);
        }
    }
    formats::write_packed_bits(out, &output)?;
    let mut meta = Metadata::new();
    meta.insert("format", "packed-bits-lsb-first")
        .insert("bits", output.len())
        .insert("bits_in", bits.len())
        .insert("blocks", blocks.len())
        .insert("residual_bits", bits.len() % params.n)
        .insert("m", params.m)
        .insert("n", params.n)
        .insert("seed_provenance", provenance)
        .insert("config_hash", cfg.hash());
    meta.write_sidecar(out)?;
    print!("{}", meta.render());
    Ok(())
}

fn budget(config: Option<&Path>) -> Result<()> {
    let cfg = load_config(config)?;
    let p = cfg.params();
    let b = EntropyBudget::compute(&cfg.entropy, cfg.keep_mask()?, p.n, p.m, p.epsilon_exponent)?;
    print!("{b}");
    b.check()?;
    cfg.validate().map(|_| ())
}

fn suite_config(tests: &str, max_lag: usize, sub_block_len: usize, block_len: usize) -> Result<SuiteConfig> {
    let mut cfg = SuiteConfig {
        sub_block_len,
        block_len,
        max_lag,
        ..SuiteConfig::default()
    };
    if tests.trim() != "all" {
        cfg.frequency = false;
        cfg.block_frequency = false;
        cfg.runs = false;
        cfg.autocorrelation = false;
        for t in tests.split(',').map(str::trim) {
            match t {
                "frequency" => cfg.frequency = true,
                "block_frequency" => cfg.block_frequency = true,
                "runs" => cfg.runs = true,
                "autocorrelation" => cfg.autocorrelation = true,
                other => return Err(Error::Config(format!("unknown test `{other}`"))),
            }
        }
    }
    Ok(cfg)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io { stage: "write report", source: e })
}

fn autocorrelation_csv(r: &[f64], bound: f64) -> String {
    let mut csv = String::from("lag,r,bound\n");
    for (i, v) in r.iter().enumerate() {
        csv.push_str(&format!("{},{},{}\n", i + 1, v, bound));
    }
    csv
}

fn analyze(input: &Path, format: InputFormat, suite: SuiteConfig, out: &Path) -> Result<bool> {
    fs::create_dir_all(out).map_err(|e| Error::Io { stage: "write report", source: e })?;
    match format {
        InputFormat::Raw => {
            let samples = formats::read_raw_samples(input)?;
            let record = RawRecord {
                count: samples.len(),
                config_hash: String::new(),
                samples,
            };
            let r = qrng_core::source::empirical_autocorrelation_profile(&record, suite.max_lag)?;
            let bound = 4.0 / (record.count as f64).sqrt();
            let max_abs = r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let report = format!(
                "input: {}\nformat: raw\nsamples: {}\nmax_lag: {}\nmax_abs_r: {max_abs:.6}\nbound: {bound:.6}\nexceedances: {}\n",
                input.display(),
                record.count,
                suite.max_lag,
                r.iter().filter(|v| v.abs() > bound).count()
            );
            write_file(&out.join("report.txt"), &report)?;
            write_file(&out.join("autocorrelation.csv"), &autocorrelation_csv(&r, bound))?;
            print!("{report}");
            Ok(true)
        }
        InputFormat::Bits => {
            let bits = formats::read_packed_bits(input)?;
            let report = stats::run_suite(&bits, &suite)?;
            let text = format!("input: {}\nformat: bits\n{report}", input.display());
            write_file(&out.join("report.txt"), &text)?;
            write_file(&out.join("tests.csv"), &report.to_csv())?;
            if let Some(a) = &report.autocorrelation {
                write_file(&out.join("autocorrelation.csv"), &autocorrelation_csv(&a.r, a.bound))?;
            }
            print!("{text}");
            Ok(report.passed())
        }
    }
}

fn stabilize(steps: u64, disturbance: Option<&Path>, config: Option<&Path>, seed: u64, out: &Path) -> Result<()> {
    let lc: LoopConfig = match config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Io { stage: "read config", source: e })?;
            toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?
        }
        None => LoopConfig::default(),
    };
    let dist = match disturbance {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Io { stage: "read disturbance", source: e })?;
            Disturbance::parse_csv(&text)?
        }
        None => Vec::new(),
    };
    let trace = stabilization::run_loop(&lc.pid, lc.plant, steps, &dist, seed)?;
    write_file(out, &stabilization::trace_to_csv(&trace))?;
    println!("steps: {steps}");
    println!("rms_phase_error: {:.6e}", stabilization::rms_phase_error(&trace));
    if let Some(last) = trace.last() {
        println!("final_phase_error: {:.6e}", last.phase_error);
    }
    Ok(())
}

fn gen_seed(config: Option<&Path>, key: u64, count: usize, out: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    let params = cfg.params();
    params.validate()?;
    let mut src = PrngSeedSource::new(key);
    let seeds: Vec<ToeplitzSeed> = (0..count.max(1)).map(|_| src.next(&params)).collect();
    formats::write_seed(out, &seeds[0], &params)?;
    if seeds.len() > 1 {
        let bytes: Vec<u8> = seeds.iter().flat_map(ToeplitzSeed::to_bytes).collect();
        fs::write(out, bytes).map_err(|e| Error::Io { stage: "write seed", source: e })?;
        let mut meta = Metadata::read_sidecar(out)?;
        meta.insert("seeds", seeds.len());
        meta.write_sidecar(out)?;
    }
    println!("seeds: {} ({} bytes each)", seeds.len(), params.seed_bytes());
    Ok(())
}

fn run(cli: Cli) -> (&'static str, Result<bool>) {
    match cli.command {
        Command::Simulate {
            samples,
            seed,
            config,
            out,
        } => ("simulate", simulate(samples, seed, config.as_deref(), &out).map(|_| true)),
        Command::Extract {
            input,
            format,
            config,
            seed_file,
            prng_key,
            workers,
            out,
        } => (
            "extract",
            extract(&input, format, config.as_deref(), seed_file, prng_key, workers, &out).map(|_| true),
        ),
        Command::Budget { config } => ("budget", budget(config.as_deref()).map(|_| true)),
        Command::Analyze {
            input,
            format,
            tests,
            max_lag,
            sub_block_len,
            block_len,
            out,
        } => (
            "analyze",
            suite_config(&tests, max_lag, sub_block_len, block_len).and_then(|s| analyze(&input, format, s, &out)),
        ),
        Command::Stabilize {
            steps,
            disturbance,
            config,
            seed,
            out,
        } => (
            "stabilize",
            stabilize(steps, disturbance.as_deref(), config.as_deref(), seed, &out).map(|_| true),
        ),
        Command::Bench {
            config,
            seconds,
            workers,
            rate_cap,
        } => (
            "bench",
            load_config(config.as_deref()).and_then(|mut cfg| {
                if let Some(w) = workers {
                    cfg.workers = w;
                }
                if rate_cap.is_some() {
                    cfg.rate_cap = rate_cap;
                }
                let report = bench::bench(&cfg, Duration::from_secs_f64(seconds))?;
                print!("{report}");
                Ok(true)
            }),
        ),
        Command::Serve { config, addr, rate_cap } => (
            "serve",
            load_config(config.as_deref()).and_then(|mut cfg| {
                if rate_cap.is_some() {
                    cfg.rate_cap = rate_cap;
                }
                let server = qrng_core::serve::Server::bind(cfg, addr.as_str())?;
                eprintln!("listening on {}", server.local_addr()?);
                server.run().map(|_| true)
            }),
        ),
        Command::GenSeed { config, key, count, out } => (
            "gen-seed",
            gen_seed(config.as_deref(), key, count, &out).map(|_| true),
        ),
    }
}

fn main() -> ExitCode {
    let (stage, result) = run(Cli::parse());
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("qrng {stage}: checks failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("qrng {stage}: {e}");
            ExitCode::from(2)
        }
    }
}
