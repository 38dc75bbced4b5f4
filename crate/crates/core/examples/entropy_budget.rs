//! Min-entropy chain for the default detector model, then how the leftover
//! hash length moves with the quantum-to-classical ratio.

use qrng_core::bits::KeepMask;
use qrng_core::entropy::{EntropyBudget, EntropyModel};

fn main() -> qrng_core::Result<()> {
    let model = EntropyModel::default();
    let budget = EntropyBudget::compute(&model, KeepMask::DEFAULT, 1520, 1024, 20)?;
    print!("{budget}");
    budget.check()?;

    println!();
    println!("{:>6} {:>9} {:>8} {:>6}", "gamma", "sigma_q", "h_bit", "m_max");
    for gamma in [1.0, 2.0, 4.0, 6.87, 10.0, 20.0] {
        let model = EntropyModel { gamma, ..model };
        let b = EntropyBudget::compute(&model, KeepMask::DEFAULT, 1520, 1024, 20)?;
        println!("{gamma:>6.2} {:>9.3} {:>8.4} {:>6}", b.sigma_q, b.h_min_per_raw_bit, b.m_max);
    }
    Ok(())
}
