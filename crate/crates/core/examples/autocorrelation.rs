//! Oversampled source: neighbouring samples share part of their delay
//! window, so the raw codes are correlated. Hashing removes it.

use qrng_core::pipeline::{run_pipeline, PipelineConfig};
use qrng_core::bits::BitBlock;
use qrng_core::source::{empirical_autocorrelation_profile, simulate_raw, SimConfig};
use qrng_core::stats::autocorrelation_test;

fn main() -> qrng_core::Result<()> {
    let sim = SimConfig::overlapping();
    let raw = simulate_raw(&sim, 1_000_000)?;
    let r = empirical_autocorrelation_profile(&raw, 10)?;
    for (lag, v) in r.iter().enumerate() {
        println!("raw lag {:>2}: {v:+.4}", lag + 1);
    }

    let config = PipelineConfig {
        sim,
        ..PipelineConfig::default()
    };
    let mut out = Vec::new();
    let manifest = run_pipeline(&config, 2_000_000, &mut out)?;
    let bits = BitBlock::from_bytes(&out, manifest.counters.bits_out as usize)?;
    let report = autocorrelation_test(&bits, 100, 0.01)?;
    println!(
        "extracted {} bits: max |r| {:.5}, bound {:.5}, exceedances {}",
        bits.len(),
        report.max_abs,
        report.bound,
        report.exceedances
    );
    Ok(())
}
