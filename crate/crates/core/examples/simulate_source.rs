//! Runs the phase-noise source and compares the sample statistics with the
//! configured physics.

use qrng_core::source::{simulate_phase, SimConfig, SourceSimulator};
use qrng_core::stats::{mean, variance};

fn main() -> qrng_core::Result<()> {
    let cfg = SimConfig::default();
    let n = 1_000_000;

    let dphi = simulate_phase(&cfg, n)?;
    println!("var(dphi)   {:.5} rad^2 (2 D tau = {:.5})", variance(&dphi), cfg.delta_phi_variance());

    let mut sim = SourceSimulator::new(&cfg)?;
    println!("sigma_c     {:.3} mV", sim.classical_std());
    let codes = sim.generate(n);
    let values: Vec<f64> = codes.iter().map(|&c| f64::from(c)).collect();
    let saturated = codes.iter().filter(|&&c| c == 0 || c == 255).count();
    println!("mean code   {:.3}", mean(&values));
    println!("code std    {:.3} LSB", variance(&values).sqrt());
    println!("saturation  {:.2e}", saturated as f64 / n as f64);

    let mut hist = [0usize; 16];
    for &c in &codes {
        hist[usize::from(c) / 16] += 1;
    }
    for (i, h) in hist.iter().enumerate() {
        let bar = "#".repeat(h * 200 / n);
        println!("{:>3}-{:<3} {bar}", i * 16, i * 16 + 15);
    }
    Ok(())
}
