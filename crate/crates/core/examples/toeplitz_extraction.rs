//! Builds a small Toeplitz hash, checks the pipelined route against the
//! dense product, then times the default 1024 x 1520 extractor.

use std::time::Instant;

use qrng_core::bits::BitBlock;
use qrng_core::toeplitz::{build_matrix, extract_dense, PipelinedExtractor, ToeplitzParams, ToeplitzSeed};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn main() -> qrng_core::Result<()> {
    let mut rng = ChaCha20Rng::seed_from_u64(2024);

    let small = ToeplitzParams::new(4, 8, 2, 1)?;
    let seed = ToeplitzSeed::random(&small, &mut rng);
    let matrix = build_matrix(seed.clone(), small)?;
    println!("seed  {}", seed.bits());
    for i in 0..small.m {
        println!("row {i} {}", matrix.row(i));
    }
    let input = BitBlock::from_bit_str("10110010")?;
    let dense = extract_dense(&matrix, &input)?;
    let ex = PipelinedExtractor::new(&seed, small)?;
    let piped = ex.extract_observed(&input, |t, temp| {
        let partial = BitBlock::from_words(temp.to_vec(), small.m).expect("m-bit partial");
        println!("step {t} partial {partial}");
    })?;
    println!("dense {dense}  pipelined {piped}");
    assert_eq!(dense, piped);

    let params = ToeplitzParams::default();
    let seed = ToeplitzSeed::random(&params, &mut rng);
    let ex = PipelinedExtractor::new(&seed, params)?;
    let blocks: Vec<BitBlock> = (0..2000)
        .map(|_| BitBlock::from_words((0..params.n.div_ceil(64)).map(|_| rng.random()).collect(), params.n))
        .collect::<Result<_, _>>()?;
    let start = Instant::now();
    let mut out_bits = 0usize;
    for _ in 0..10 {
        for b in &blocks {
            out_bits += ex.extract(b)?.len();
        }
    }
    let secs = start.elapsed().as_secs_f64();
    println!(
        "{} blocks, {:.1} Mbit/s out, ratio {:.4}",
        blocks.len() * 10,
        out_bits as f64 / secs / 1e6,
        params.ratio()
    );
    Ok(())
}
