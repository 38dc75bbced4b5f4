//! Runs the randomness checks on a simulated, extracted stream and on the
//! unprocessed sample bits.

use qrng_core::bits::{BitBlock, KeepMask, SampleBitSelector};
use qrng_core::pipeline::{run_pipeline, PipelineConfig};
use qrng_core::source::simulate_raw;
use qrng_core::stats::{run_suite, SuiteConfig};

fn main() -> qrng_core::Result<()> {
    let config = PipelineConfig::default();
    let mut out = Vec::new();
    let manifest = run_pipeline(&config, 2_000_000, &mut out)?;
    let bits = BitBlock::from_bytes(&out, manifest.counters.bits_out as usize)?;
    let report = run_suite(&bits, &SuiteConfig::default())?;
    println!("-- extracted --\n{report}");

    let raw = simulate_raw(&config.sim, 1_000_000)?;
    let mut raw_bits = BitBlock::default();
    SampleBitSelector::new(KeepMask::ALL).append(&raw.samples, &mut raw_bits);
    let report = run_suite(&raw_bits, &SuiteConfig::default())?;
    println!("-- raw, all 8 bits --\n{report}");
    Ok(())
}
