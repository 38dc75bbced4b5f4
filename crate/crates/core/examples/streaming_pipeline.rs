//! File run: samples in, packed bits out, with the sidecar and manifest.

use qrng_core::pipeline::{manifest_path, run_pipeline_to_file, PipelineConfig};

fn main() -> qrng_core::Result<()> {
    let dir = tempfile::tempdir().expect("temp dir");
    let out = dir.path().join("random.bin");
    let config = PipelineConfig {
        workers: 2,
        ..PipelineConfig::default()
    };
    let manifest = run_pipeline_to_file(&config, 1_000_000, &out)?;
    print!("{}", std::fs::read_to_string(manifest_path(&out)).expect("manifest"));
    println!("counts consistent: {}", manifest.counts_consistent());
    Ok(())
}
