//! Software data path of a laser phase-noise quantum random number generator.
//!
//! * [`source`] simulates the raw 8-bit samples of an unbalanced
//!   interferometer fed by a phase-diffusing laser.
//! * [`entropy`] computes the Gaussian min-entropy, the worst-case bit-discard
//!   accounting and the leftover-hash output length.
//! * [`toeplitz`] builds Toeplitz hashes from seed bits and extracts with a
//!   dense reference route and a pipelined submatrix route.
//! * [`stabilization`] simulates the PID loop that holds the interferometer
//!   at quadrature.
//! * [`stats`] holds the randomness checks applied to raw and extracted data.
//! * [`pipeline`], [`bench`] and [`serve`] wire everything into file, benchmark
//!   and TCP front ends.
//!
//! The `examples/` directory has one runnable program per capability.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod bits;
pub mod entropy;
pub mod error;
pub mod formats;
pub mod pipeline;
pub mod serve;
pub mod source;
pub mod stabilization;
pub mod stats;
pub mod toeplitz;

pub use bits::{select_sample_bits, xor_accumulate, BitBlock, KeepMask, RawSample};
pub use entropy::{
    budget_after_discard, extraction_efficiency, leftover_hash_m, min_entropy_gaussian, sigma_q,
    EntropyBudget, EntropyModel,
};
pub use error::{Error, Result};
pub use pipeline::{run_pipeline, PipelineConfig, RunManifest};
pub use source::{simulate_phase, simulate_raw, SimConfig};
pub use toeplitz::{
    build_matrix, extract_dense, extract_pipelined, extract_stream, ToeplitzMatrix, ToeplitzParams,
    ToeplitzSeed,
};
