//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits non-zero if any fails.

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use qrng_core::bench::{bench_delivery, bench_extractor, pregenerate_blocks};
use qrng_core::bits::{BitBlock, KeepMask};
use qrng_core::entropy::{budget_after_discard, leftover_hash_m, EntropyBudget, EntropyModel};
use qrng_core::pipeline::{run_pipeline, PipelineConfig};
use qrng_core::source::{empirical_autocorrelation_profile, simulate_phase, simulate_raw, SimConfig};
use qrng_core::stabilization::{rms_phase_error, run_loop, Disturbance, PidConfig, PlantState};
use qrng_core::stats::{autocorrelation_test, mean, run_suite, variance, SuiteConfig, DEFAULT_ALPHA};
use qrng_core::toeplitz::{build_matrix, extract_dense, PipelinedExtractor, ToeplitzParams, ToeplitzSeed};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn random_block(rng: &mut ChaCha8Rng, len: usize) -> BitBlock {
    BitBlock::from_words((0..len.div_ceil(64)).map(|_| rng.random()).collect(), len).unwrap()
}

/// Extracted output truncated to exactly `bits`.
fn extracted_bits(config: &PipelineConfig, bits: usize) -> BitBlock {
    let p = config.params();
    let kept = config.keep_mask.count_ones() as usize;
    let samples = bits.div_ceil(p.m) * p.n.div_ceil(kept);
    let mut out = Vec::new();
    let manifest = run_pipeline(config, samples as u64, &mut out).unwrap();
    assert!(manifest.counters.bits_out as usize >= bits);
    BitBlock::from_bytes(&out, manifest.counters.bits_out as usize).unwrap().slice(0, bits)
}

fn entropy_chain() -> Outcome {
    let b = EntropyBudget::compute(&EntropyModel::default(), KeepMask::DEFAULT, 1520, 1024, 20).map_err(|e| e.to_string())?;
    ensure!(within(b.sigma_q, 85.2, 0.1), "sigma_q {}", b.sigma_q);
    ensure!(within(b.p_max, 0.011, 0.0005), "p_max {}", b.p_max);
    ensure!(within(b.h_min_per_sample, 6.5, 0.1), "h_min {}", b.h_min_per_sample);
    let d = budget_after_discard(6.5, KeepMask::DEFAULT.bits()).unwrap();
    ensure!(d.per_sample == 3.5 && d.per_raw_bit == 0.7, "discard {} / {}", d.per_sample, d.per_raw_bit);
    let m = leftover_hash_m(1520, 0.7, 20).unwrap();
    ensure!(m == 1024, "leftover hash m {m}");
    let eff_nominal = 1024.0 / (1520.0 * 0.7);
    ensure!(within(eff_nominal, 0.96, 0.005), "efficiency {eff_nominal}");
    ensure!(within(b.extraction_efficiency, 0.96, 0.005), "chain efficiency {}", b.extraction_efficiency);
    Ok(format!(
        "sigma_q={:.2} mV p_max={:.5} H={:.3} -> 3.5 b/sample, 0.7 b/bit, m=1024, eff={:.4} (chain {:.4})",
        b.sigma_q, b.p_max, b.h_min_per_sample, eff_nominal, b.extraction_efficiency
    ))
}

fn extractor_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce);
    let mut cases = 0;
    for (params, count) in [(ToeplitzParams::new(32, 48, 8, 1).unwrap(), 1000), (ToeplitzParams::default(), 100)] {
        for c in 0..count {
            let seed = ToeplitzSeed::random(&params, &mut rng);
            let matrix = build_matrix(seed.clone(), params).unwrap();
            let ex = PipelinedExtractor::new(&seed, params).unwrap();
            let x = random_block(&mut rng, params.n);
            let y = random_block(&mut rng, params.n);
            let px = ex.extract(&x).unwrap();
            ensure!(px == extract_dense(&matrix, &x).unwrap(), "mismatch at {:?} case {c}", (params.m, params.n));
            let mut xy = x.clone();
            xy.xor_assign(&y).unwrap();
            let mut sum = px.clone();
            sum.xor_assign(&ex.extract(&y).unwrap()).unwrap();
            ensure!(ex.extract(&xy).unwrap() == sum, "linearity fails at case {c}");
            let j = rng.random_range(0..params.n);
            let mut e = BitBlock::zeros(params.n);
            e.set(j, true);
            ensure!(ex.extract(&e).unwrap() == matrix.column(j), "one-hot column {j} differs");
            cases += 1;
        }
    }
    Ok(format!("{cases} randomized cases bit-exact, linear, one-hot columns match"))
}

fn autocorrelation_removal() -> Outcome {
    let sim = SimConfig::overlapping();
    let raw = simulate_raw(&sim, 10_000_000).unwrap();
    let r = empirical_autocorrelation_profile(&raw, 100).unwrap();
    let raw_max = r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    ensure!(raw_max > 0.05, "raw max |r| {raw_max}");

    let config = PipelineConfig { sim, ..PipelineConfig::default() };
    let bits = extracted_bits(&config, 10_000_000);
    let rep = autocorrelation_test(&bits, 100, DEFAULT_ALPHA).unwrap();
    ensure!(rep.exceedances <= 1, "{} exceedances of {:.2e}, max {:.2e}", rep.exceedances, rep.bound, rep.max_abs);
    ensure!(raw_max >= 10.0 * rep.max_abs, "reduction only {:.1}x", raw_max / rep.max_abs);
    Ok(format!(
        "raw max|r|={raw_max:.4} (lag-1 {:.4}); extracted N=1e7 max|r|={:.2e} vs 4/sqrt(N)={:.2e}, {} exceedances",
        r[0], rep.max_abs, rep.bound, rep.exceedances
    ))
}

fn lag1_cov(xs: &[f64], batches: usize) -> (f64, f64) {
    let covs: Vec<f64> = xs
        .chunks_exact(xs.len() / batches)
        .map(|b| {
            let m = mean(b);
            b.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum::<f64>() / (b.len() - 1) as f64
        })
        .collect();
    (mean(&covs), (variance(&covs) / (batches - 1) as f64).sqrt())
}

fn wiener_statistics() -> Outcome {
    let n = 1_000_000;
    let disjoint = SimConfig::default();
    let dphi = simulate_phase(&disjoint, n).unwrap();
    let expect = disjoint.delta_phi_variance();
    let se = expect * (2.0 / (n - 1) as f64).sqrt();
    let var = variance(&dphi);
    ensure!(within(var, expect, 3.0 * se), "Var {var} vs {expect} (se {se})");
    let (c0, se0) = lag1_cov(&dphi, 100);
    ensure!(c0.abs() < 3.0 * se0, "disjoint lag-1 cov {c0} (se {se0})");

    let overlap = SimConfig::overlapping();
    let dphi = simulate_phase(&overlap, n).unwrap();
    let target = 2.0 * overlap.phase_diffusion * 0.3e-9;
    let (c1, se1) = lag1_cov(&dphi, 100);
    ensure!(within(c1, target, 3.0 * se1), "overlap lag-1 cov {c1} vs {target} (se {se1})");
    Ok(format!(
        "Var={var:.5} vs 2Dtau={expect:.5} ({:.2} SE); cov1 disjoint={c0:.2e} ({:.2} SE); overlap={c1:.5} vs {target:.5} ({:.2} SE)",
        (var - expect) / se,
        c0 / se0,
        (c1 - target) / se1
    ))
}

fn statistical_suite() -> Outcome {
    let bits = extracted_bits(&PipelineConfig::default(), 100_000_000);
    let report = run_suite(&bits, &SuiteConfig::default()).map_err(|e| e.to_string())?;
    ensure!(report.passed(), "suite failed:\n{report}");
    let summary: Vec<String> = report
        .tests
        .iter()
        .map(|t| format!("{} {:.2} ks_p={:.3}", t.name, t.proportion, t.ks.as_ref().map_or(f64::NAN, |k| k.p_value)))
        .collect();
    let a = report.autocorrelation.as_ref().unwrap();
    Ok(format!(
        "1e8 bits, 100 sub-blocks: {}; autocorr max|r|={:.2e} ({} exceedances)",
        summary.join(", "),
        a.max_abs,
        a.exceedances
    ))
}

fn stabilization() -> Outcome {
    let pid = PidConfig::default();
    let step_at = 10;
    let trace = run_loop(&pid, PlantState::default(), step_at + 500, &[Disturbance { step: step_at, delta: 0.3 }], 0).unwrap();
    let after = &trace[step_at as usize..];
    let settle = after.iter().rposition(|r| r.phase_error.abs() >= 0.01).map_or(0, |i| i + 1);
    ensure!(settle < 500, "not settled within 500 iterations");
    let plant = PlantState::with_step_drift(1e-3, pid.loop_period);
    let drift = run_loop(&pid, plant, 10_000, &[], 1).unwrap();
    let rms = rms_phase_error(&drift);
    ensure!(rms < 0.05, "drift rms {rms}");
    Ok(format!("0.3 rad step settled below 0.01 rad after {settle} iterations; drift rms {rms:.2e} rad"))
}

fn throughput() -> Outcome {
    let config = PipelineConfig::default();
    let (seed, _, _) = config.seeds().unwrap();
    let ex = PipelinedExtractor::new(&seed, config.params()).unwrap();
    let blocks = pregenerate_blocks(&config, 512).unwrap();
    let tp = bench_extractor(&ex, &blocks, Duration::from_secs(3)).unwrap();
    let ratio = tp.ratio();
    ensure!(tp.out_rate() >= 100e6, "extractor output {:.1} Mbit/s", tp.out_rate() / 1e6);
    ensure!(within(ratio, 1024.0 / 1520.0, 0.01 * 1024.0 / 1520.0), "ratio {ratio}");

    let payload: Vec<u8> = blocks.iter().take(64).flat_map(|b| ex.extract(b).unwrap().to_bytes()).collect();
    let usb = bench_delivery(&payload, 259.5e6, Duration::from_secs(2));
    ensure!(within(usb.out_rate() / 259.5e6, 1.0, 0.02), "delivery {:.1} Mbit/s", usb.out_rate() / 1e6);
    Ok(format!(
        "single worker {:.1} Mbit/s out ({:.1} in), ratio {:.5}; 259.5 Mbit/s cap delivered {:.2} Mbit/s",
        tp.out_rate() / 1e6,
        tp.in_rate() / 1e6,
        ratio,
        usb.out_rate() / 1e6
    ))
}

fn determinism() -> Outcome {
    let config = PipelineConfig { batch_blocks: 64, ..PipelineConfig::default() };
    let samples = 1_000_000;
    let run = |cfg: &PipelineConfig| {
        let mut out = Vec::new();
        let m = run_pipeline(cfg, samples, &mut out).unwrap();
        (out, m.config_hash)
    };
    let (a, ha) = run(&config);
    let (b, hb) = run(&config.clone());
    ensure!(ha == hb, "config hashes differ");
    ensure!(a == b, "repeat run differs");
    for workers in [2, 8] {
        let (c, _) = run(&PipelineConfig { workers, ..config.clone() });
        ensure!(a == c, "{workers} workers differ from 1");
    }
    Ok(format!("{} bytes identical across repeat runs and 1/2/8 workers (hash {}..)", a.len(), &ha[..12]))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("entropy chain", entropy_chain),
        ("extractor equivalence", extractor_equivalence),
        ("autocorrelation removal", autocorrelation_removal),
        ("wiener statistics", wiener_statistics),
        ("statistical suite", statistical_suite),
        ("stabilization", stabilization),
        ("throughput", throughput),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {} {name}: PASS ({secs:.1}s) {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({secs:.1}s) {why}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
