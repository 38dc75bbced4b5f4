//! Toeplitz-hashing randomness extraction.
//!
//! An `m x n` binary Toeplitz matrix is fixed by `m + n - 1` seed bits. Entry
//! `T(i, j)` reads `seed[(n - 1) + i - j]`, so row 0 is the seed prefix
//! reversed and column `j` is the contiguous seed window starting at
//! `n - 1 - j`.
//!
//! Two multiplication routes are provided:
//!
//! * [`extract_dense`] evaluates every entry and is the reference.
//! * [`PipelinedExtractor`] splits the matrix into `n / k` column slabs of
//!   width `k`. Each step builds one `m x k` submatrix from the seed, multiplies
//!   it with `k` input bits using word-wide AND, and XORs the temporary
//!   `m`-bit vector into the accumulator.
//!
//! [`StreamExtractor`] drives the pipelined route over a sequence of `n`-bit
//! blocks with optional periodic seed refresh and parallel workers.

use std::num::NonZeroU64;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::bits::BitBlock;
use crate::error::{Error, Result};

/// Extractor geometry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToeplitzParams {
    /// Output bits per block.
    pub m: usize,
    /// Input bits per block.
    pub n: usize,
    /// Submatrix column width; must divide `n`.
    pub k: usize,
    /// Security bound `epsilon = 2^-epsilon_exponent`.
    pub epsilon_exponent: u32,
}

impl Default for ToeplitzParams {
    fn default() -> Self {
        Self {
            m: 1024,
            n: 1520,
            k: 80,
            epsilon_exponent: 20,
        }
    }
}

impl ToeplitzParams {
    pub fn new(m: usize, n: usize, k: usize, epsilon_exponent: u32) -> Result<Self> {
        let p = Self {
            m,
            n,
            k,
            epsilon_exponent,
        };
        p.validate()?;
        Ok(p)
    }

    /// Extraction rule: a valid shape with `m < n`.
    pub fn validate(&self) -> Result<()> {
        self.validate_shape()?;
        if self.m >= self.n {
            return Err(Error::InvalidParams(format!(
                "m must be smaller than n (m={}, n={})",
                self.m, self.n
            )));
        }
        Ok(())
    }

    /// Matrix-level rule: `m <= n`, so square hashes can be built and
    /// multiplied even though they never compress.
    pub fn validate_shape(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 || self.k == 0 {
            return Err(Error::InvalidParams(format!(
                "m, n, k must be >= 1 (m={}, n={}, k={})",
                self.m, self.n, self.k
            )));
        }
        if self.m > self.n {
            return Err(Error::InvalidParams(format!(
                "m must not exceed n (m={}, n={})",
                self.m, self.n
            )));
        }
        if !self.n.is_multiple_of(self.k) {
            return Err(Error::InvalidParams(format!(
                "k={} does not divide n={}",
                self.k, self.n
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn seed_len(&self) -> usize {
        self.m + self.n - 1
    }

    /// Number of submatrix steps per block.
    #[inline]
    pub fn steps(&self) -> usize {
        self.n / self.k
    }

    #[inline]
    pub fn ratio(&self) -> f64 {
        self.m as f64 / self.n as f64
    }

    /// Bytes in a packed seed file.
    #[inline]
    pub fn seed_bytes(&self) -> usize {
        self.seed_len().div_ceil(8)
    }
}

/// The `m + n - 1` matrix-building bits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ToeplitzSeed {
    bits: BitBlock,
}

impl ToeplitzSeed {
    pub fn new(bits: BitBlock, params: &ToeplitzParams) -> Result<Self> {
        if bits.len() != params.seed_len() {
            return Err(Error::LengthMismatch {
                expected: params.seed_len(),
                actual: bits.len(),
            });
        }
        Ok(Self { bits })
    }

    /// Reads a packed seed (`ceil((m+n-1)/8)` bytes, LSB-first).
    pub fn from_bytes(bytes: &[u8], params: &ToeplitzParams) -> Result<Self> {
        if bytes.len() != params.seed_bytes() {
            return Err(Error::LengthMismatch {
                expected: params.seed_bytes() * 8,
                actual: bytes.len() * 8,
            });
        }
        Self::new(BitBlock::from_bytes(bytes, params.seed_len())?, params)
    }

    pub fn random<R: Rng + ?Sized>(params: &ToeplitzParams, rng: &mut R) -> Self {
        let len = params.seed_len();
        let words = (0..len.div_ceil(64)).map(|_| rng.random::<u64>()).collect();
        Self {
            bits: BitBlock::from_words(words, len).expect("enough words"),
        }
    }

    pub fn bits(&self) -> &BitBlock {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.bits.to_bytes()
    }
}

/// Lazily evaluated Toeplitz matrix; holds only the seed.
#[derive(Clone, Debug)]
pub struct ToeplitzMatrix {
    params: ToeplitzParams,
    seed: ToeplitzSeed,
}

impl ToeplitzMatrix {
    pub fn params(&self) -> &ToeplitzParams {
        &self.params
    }

    pub fn seed(&self) -> &ToeplitzSeed {
        &self.seed
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        assert!(i < self.params.m && j < self.params.n, "entry ({i}, {j}) out of range");
        self.seed.bits.get(self.params.n - 1 + i - j)
    }

    pub fn column(&self, j: usize) -> BitBlock {
        assert!(j < self.params.n);
        self.seed.bits.slice(self.params.n - 1 - j, self.params.m)
    }

    pub fn row(&self, i: usize) -> BitBlock {
        (0..self.params.n).map(|j| self.get(i, j)).collect()
    }
}

pub fn build_matrix(seed: ToeplitzSeed, params: ToeplitzParams) -> Result<ToeplitzMatrix> {
    params.validate_shape()?;
    if seed.len() != params.seed_len() {
        return Err(Error::LengthMismatch {
            expected: params.seed_len(),
            actual: seed.len(),
        });
    }
    Ok(ToeplitzMatrix { params, seed })
}

fn check_input(params: &ToeplitzParams, input: &BitBlock) -> Result<()> {
    if input.len() != params.n {
        return Err(Error::LengthMismatch {
            expected: params.n,
            actual: input.len(),
        });
    }
    Ok(())
}

/// Entry-by-entry GF(2) matrix-vector product.
pub fn extract_dense(mat: &ToeplitzMatrix, input: &BitBlock) -> Result<BitBlock> {
    let p = mat.params;
    check_input(&p, input)?;
    Ok((0..p.m)
        .map(|i| {
            (0..p.n).fold(false, |acc, j| acc ^ (mat.get(i, j) & input.get(j)))
        })
        .collect())
}

/// Input columns folded into one table lookup.
const GROUP_BITS: usize = 4;
const GROUP_ENTRIES: usize = 1 << GROUP_BITS;

/// Output words XORed together; fixed width so the loop vectorizes.
type Lane = [u64; 4];
const LANE_WORDS: usize = 4;

#[inline(always)]
fn xor_lanes(acc: &mut [Lane], row: &[Lane]) {
    for (a, r) in acc.iter_mut().zip(row) {
        for i in 0..LANE_WORDS {
            a[i] ^= r[i];
        }
    }
}

/// Word-parallel pipelined extractor for one seed.
///
/// Each step's `m x k` submatrix is cut into groups of up to four columns.
/// Every group stores the XOR of each subset of its columns, so a step costs
/// one `ceil(m / 64)`-word XOR per group instead of one per column.
#[derive(Clone, Debug)]
pub struct PipelinedExtractor {
    params: ToeplitzParams,
    out_words: usize,
    lanes: usize,
    groups_per_step: usize,
    /// `(first column, width)` per group, step-major.
    groups: Vec<(usize, usize)>,
    /// `GROUP_ENTRIES * lanes` lanes per group.
    tables: Vec<Lane>,
    tail_mask: u64,
}

/// The seed pre-shifted by every offset in `0..64`, so that any matrix
/// column reads as aligned words.
struct ShiftedSeed {
    stride: usize,
    words: Vec<u64>,
}

impl ShiftedSeed {
    fn new(seed: &ToeplitzSeed) -> Self {
        let stride = seed.len().div_ceil(64) + 1;
        let mut words = vec![0u64; 64 * stride];
        for s in 0..64 {
            for w in 0..stride {
                words[s * stride + w] = seed.bits.read_word(64 * w + s);
            }
        }
        Self { stride, words }
    }

    /// Column `j`; the last word may carry bits past `m`.
    fn column(&self, params: &ToeplitzParams, j: usize, out_words: usize) -> &[u64] {
        let start = params.n - 1 - j;
        let base = (start % 64) * self.stride + start / 64;
        &self.words[base..base + out_words]
    }
}

impl PipelinedExtractor {
    pub fn new(seed: &ToeplitzSeed, params: ToeplitzParams) -> Result<Self> {
        params.validate_shape()?;
        if seed.len() != params.seed_len() {
            return Err(Error::LengthMismatch {
                expected: params.seed_len(),
                actual: seed.len(),
            });
        }
        let out_words = params.m.div_ceil(64);
        let k = params.k;
        let groups_per_step = k.div_ceil(GROUP_BITS);
        let mut groups = Vec::with_capacity(params.steps() * groups_per_step);
        for t in 0..params.steps() {
            for g in 0..groups_per_step {
                let first = g * GROUP_BITS;
                groups.push((t * k + first, GROUP_BITS.min(k - first)));
            }
        }

        let shifted = ShiftedSeed::new(seed);
        let lanes = out_words.div_ceil(LANE_WORDS);
        let entry = GROUP_ENTRIES * lanes;
        let mut tables = vec![[0u64; LANE_WORDS]; groups.len() * entry];
        for (g, &(first, width)) in groups.iter().enumerate() {
            let table = &mut tables[g * entry..(g + 1) * entry];
            for e in 1..1usize << width {
                let low = e.trailing_zeros() as usize;
                let prev = (e & (e - 1)) * lanes;
                let column = shifted.column(&params, first + low, out_words);
                for w in 0..out_words {
                    table[e * lanes + w / LANE_WORDS][w % LANE_WORDS] =
                        table[prev + w / LANE_WORDS][w % LANE_WORDS] ^ column[w];
                }
            }
        }

        let rem = params.m % 64;
        let tail_mask = if rem == 0 { u64::MAX } else { (1u64 << rem) - 1 };
        Ok(Self {
            params,
            out_words,
            lanes,
            groups_per_step,
            groups,
            tables,
            tail_mask,
        })
    }

    pub fn params(&self) -> &ToeplitzParams {
        &self.params
    }

    /// Multiplies the step-`t` submatrix with its `k` input bits into `temp`.
    #[inline(always)]
    fn multiply_submatrix(&self, t: usize, input: &[u64], temp: &mut [Lane]) {
        temp.fill([0; LANE_WORDS]);
        let lanes = temp.len();
        let entry = GROUP_ENTRIES * lanes;
        let range = t * self.groups_per_step..(t + 1) * self.groups_per_step;
        for (g, &(first, width)) in self.groups[range.clone()].iter().enumerate() {
            let (w, s) = (first / 64, first % 64);
            let mut bits = input[w] >> s;
            if s + width > 64 {
                bits |= input[w + 1] << (64 - s);
            }
            let e = (bits as usize) & ((1 << width) - 1);
            let base = (range.start + g) * entry + e * lanes;
            xor_lanes(temp, &self.tables[base..base + lanes]);
        }
    }

    #[inline(always)]
    fn mask_tail(&self, words: &mut [u64]) {
        words[self.out_words - 1] &= self.tail_mask;
    }

    /// All steps with `L` lanes held on the stack.
    fn run_fixed<const L: usize, F>(&self, input: &[u64], observe: &mut F) -> Vec<u64>
    where
        F: FnMut(usize, &[u64]),
    {
        let mut acc = [[0u64; LANE_WORDS]; L];
        let mut temp = [[0u64; LANE_WORDS]; L];
        for t in 0..self.params.steps() {
            self.multiply_submatrix(t, input, &mut temp);
            self.mask_tail(temp.as_flattened_mut());
            observe(t, &temp.as_flattened()[..self.out_words]);
            xor_lanes(&mut acc, &temp);
        }
        acc.as_flattened()[..self.out_words].to_vec()
    }

    fn run_dynamic<F>(&self, input: &[u64], observe: &mut F) -> Vec<u64>
    where
        F: FnMut(usize, &[u64]),
    {
        let mut acc = vec![[0u64; LANE_WORDS]; self.lanes];
        let mut temp = vec![[0u64; LANE_WORDS]; self.lanes];
        for t in 0..self.params.steps() {
            self.multiply_submatrix(t, input, &mut temp);
            self.mask_tail(temp.as_flattened_mut());
            observe(t, &temp.as_flattened()[..self.out_words]);
            xor_lanes(&mut acc, &temp);
        }
        let mut words = acc.as_flattened().to_vec();
        words.truncate(self.out_words);
        words
    }

    /// Runs all `n / k` steps, handing each temporary vector to `observe`
    /// before it is accumulated.
    pub fn extract_observed<F>(&self, input: &BitBlock, mut observe: F) -> Result<BitBlock>
    where
        F: FnMut(usize, &[u64]),
    {
        check_input(&self.params, input)?;
        let input = input.words();
        let words = match self.lanes {
            1 => self.run_fixed::<1, F>(input, &mut observe),
            2 => self.run_fixed::<2, F>(input, &mut observe),
            3 => self.run_fixed::<3, F>(input, &mut observe),
            4 => self.run_fixed::<4, F>(input, &mut observe),
            _ => self.run_dynamic(input, &mut observe),
        };
        self.finish(words)
    }

    pub fn extract(&self, input: &BitBlock) -> Result<BitBlock> {
        self.extract_observed(input, |_, _| {})
    }

    fn finish(&self, mut acc: Vec<u64>) -> Result<BitBlock> {
        if let Some(last) = acc.last_mut() {
            *last &= self.tail_mask;
        }
        BitBlock::from_words(acc, self.params.m)
    }
}

pub fn extract_pipelined(
    seed: &ToeplitzSeed,
    params: ToeplitzParams,
    input: &BitBlock,
) -> Result<BitBlock> {
    PipelinedExtractor::new(seed, params)?.extract(input)
}

/// Supplies fresh seeds when a refresh is due.
pub trait SeedSource: Send {
    fn next_seed(&mut self, params: &ToeplitzParams) -> Result<Option<ToeplitzSeed>>;

    fn describe(&self) -> String;
}

/// A finite list of seeds, handed out in order.
#[derive(Debug, Default)]
pub struct SeedList {
    seeds: std::collections::VecDeque<ToeplitzSeed>,
    origin: String,
}

impl SeedList {
    pub fn new(seeds: Vec<ToeplitzSeed>) -> Self {
        Self {
            seeds: seeds.into(),
            origin: "list".into(),
        }
    }

    /// Splits concatenated packed seeds (each `ceil((m+n-1)/8)` bytes).
    pub fn from_concatenated(bytes: &[u8], params: &ToeplitzParams, origin: &str) -> Result<Self> {
        let per = params.seed_bytes();
        if bytes.is_empty() || !bytes.len().is_multiple_of(per) {
            return Err(Error::Config(format!(
                "seed data of {} bytes is not a positive multiple of {per}",
                bytes.len()
            )));
        }
        let seeds = bytes
            .chunks(per)
            .map(|c| ToeplitzSeed::from_bytes(c, params))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            seeds: seeds.into(),
            origin: origin.to_string(),
        })
    }

    pub fn take_first(&mut self) -> Option<ToeplitzSeed> {
        self.seeds.pop_front()
    }
}

impl SeedSource for SeedList {
    fn next_seed(&mut self, _params: &ToeplitzParams) -> Result<Option<ToeplitzSeed>> {
        Ok(self.seeds.pop_front())
    }

    fn describe(&self) -> String {
        format!("{} ({} seeds remaining)", self.origin, self.seeds.len())
    }
}

/// Seeds drawn from a ChaCha20 stream keyed by a 64-bit value.
///
/// Deterministic and reproducible; not a substitute for a physical seed.
#[derive(Debug, Clone)]
pub struct PrngSeedSource {
    rng: ChaCha20Rng,
    key: u64,
}

impl PrngSeedSource {
    pub fn new(key: u64) -> Self {
        Self {
            rng: ChaCha20Rng::seed_from_u64(key),
            key,
        }
    }

    pub fn next(&mut self, params: &ToeplitzParams) -> ToeplitzSeed {
        ToeplitzSeed::random(params, &mut self.rng)
    }
}

impl SeedSource for PrngSeedSource {
    fn next_seed(&mut self, params: &ToeplitzParams) -> Result<Option<ToeplitzSeed>> {
        Ok(Some(self.next(params)))
    }

    fn describe(&self) -> String {
        format!("chacha20 prng, key {}", self.key)
    }
}

/// Never yields a seed; refresh requests fail.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoSeeds;

impl SeedSource for NoSeeds {
    fn next_seed(&mut self, _params: &ToeplitzParams) -> Result<Option<ToeplitzSeed>> {
        Ok(None)
    }

    fn describe(&self) -> String {
        "none".into()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamStats {
    pub blocks_in: u64,
    pub blocks_out: u64,
    pub bits_in: u64,
    pub bits_out: u64,
    /// Bits in a trailing block shorter than `n`, discarded.
    pub dropped_bits: u64,
    pub seeds_used: u64,
}

/// Extracts a sequence of `n`-bit blocks, emitting one `m`-bit block each,
/// in order. With `refresh_period = Some(p)`, block `b` uses seed number
/// `b / p`.
pub struct StreamExtractor<S: SeedSource> {
    params: ToeplitzParams,
    current: Arc<PipelinedExtractor>,
    source: S,
    refresh_period: Option<NonZeroU64>,
    workers: usize,
    stats: StreamStats,
}

impl<S: SeedSource> StreamExtractor<S> {
    pub fn new(
        seed: &ToeplitzSeed,
        params: ToeplitzParams,
        source: S,
        refresh_period: Option<NonZeroU64>,
    ) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            current: Arc::new(PipelinedExtractor::new(seed, params)?),
            source,
            refresh_period,
            workers: 1,
            stats: StreamStats {
                seeds_used: 1,
                ..StreamStats::default()
            },
        })
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }

    pub fn params(&self) -> &ToeplitzParams {
        &self.params
    }

    pub fn stats(&self) -> StreamStats {
        self.stats
    }

    pub fn source(&self) -> &S {
        &self.source
    }

    /// Records a short trailing block that will not be extracted.
    pub fn drop_partial(&mut self, bits: usize) {
        self.stats.dropped_bits += bits as u64;
    }

    fn extractor_for(&mut self, block_index: u64) -> Result<Arc<PipelinedExtractor>> {
        if let Some(p) = self.refresh_period {
            if block_index > 0 && block_index.is_multiple_of(p.get()) {
                let seed = self
                    .source
                    .next_seed(&self.params)?
                    .ok_or(Error::SeedExhausted { block: block_index })?;
                self.current = Arc::new(PipelinedExtractor::new(&seed, self.params)?);
                self.stats.seeds_used += 1;
            }
        }
        Ok(Arc::clone(&self.current))
    }

    /// Extracts one full block.
    pub fn push_block(&mut self, block: &BitBlock) -> Result<BitBlock> {
        let mut out = self.process_batch(std::slice::from_ref(block))?;
        Ok(out.pop().expect("one block in, one block out"))
    }

    /// Extracts a batch of full `n`-bit blocks, spreading them over the
    /// configured worker threads. Output order follows input order.
    pub fn process_batch(&mut self, blocks: &[BitBlock]) -> Result<Vec<BitBlock>> {
        for b in blocks {
            check_input(&self.params, b)?;
        }
        let first = self.stats.blocks_in;
        let extractors = (0..blocks.len() as u64)
            .map(|i| self.extractor_for(first + i))
            .collect::<Result<Vec<_>>>()?;

        let out = if self.workers <= 1 || blocks.len() < 2 {
            blocks
                .iter()
                .zip(&extractors)
                .map(|(b, e)| e.extract(b))
                .collect::<Result<Vec<_>>>()?
        } else {
            let chunk = blocks.len().div_ceil(self.workers);
            std::thread::scope(|scope| {
                let handles: Vec<_> = blocks
                    .chunks(chunk)
                    .zip(extractors.chunks(chunk))
                    .map(|(bs, es)| {
                        scope.spawn(move || {
                            bs.iter()
                                .zip(es)
                                .map(|(b, e)| e.extract(b))
                                .collect::<Result<Vec<_>>>()
                        })
                    })
                    .collect();
                let mut out = Vec::with_capacity(blocks.len());
                for h in handles {
                    out.extend(h.join().expect("extraction worker panicked")?);
                }
                Ok::<_, Error>(out)
            })?
        };

        let n = blocks.len() as u64;
        self.stats.blocks_in += n;
        self.stats.blocks_out += n;
        self.stats.bits_in += n * self.params.n as u64;
        self.stats.bits_out += n * self.params.m as u64;
        Ok(out)
    }
}

/// Iterator adapter over a stream of raw blocks.
///
/// A block shorter than `n` ends the stream; its bits are counted in
/// [`StreamStats::dropped_bits`].
pub struct ExtractStream<I, S: SeedSource> {
    inner: I,
    extractor: StreamExtractor<S>,
    done: bool,
}

impl<I, S> ExtractStream<I, S>
where
    I: Iterator<Item = BitBlock>,
    S: SeedSource,
{
    pub fn stats(&self) -> StreamStats {
        self.extractor.stats()
    }
}

impl<I, S> Iterator for ExtractStream<I, S>
where
    I: Iterator<Item = BitBlock>,
    S: SeedSource,
{
    type Item = Result<BitBlock>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let block = match self.inner.next() {
            Some(b) => b,
            None => {
                self.done = true;
                return None;
            }
        };
        if block.len() < self.extractor.params.n {
            self.extractor.drop_partial(block.len());
            self.done = true;
            return None;
        }
        let res = self.extractor.push_block(&block);
        if res.is_err() {
            self.done = true;
        }
        Some(res)
    }
}

pub fn extract_stream<I, S>(
    seed: &ToeplitzSeed,
    params: ToeplitzParams,
    raw: I,
    refresh_period: Option<NonZeroU64>,
    seed_source: S,
) -> Result<ExtractStream<I::IntoIter, S>>
where
    I: IntoIterator<Item = BitBlock>,
    S: SeedSource,
{
    Ok(ExtractStream {
        inner: raw.into_iter(),
        extractor: StreamExtractor::new(seed, params, seed_source, refresh_period)?,
        done: false,
    })
}

/// Cuts a continuous bit stream into `n`-bit blocks, carrying the remainder.
#[derive(Debug, Clone)]
pub struct BlockFramer {
    n: usize,
    pending: BitBlock,
}

impl BlockFramer {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            pending: BitBlock::with_capacity(2 * n),
        }
    }

    pub fn buffer_mut(&mut self) -> &mut BitBlock {
        &mut self.pending
    }

    /// Removes and returns every complete block currently buffered.
    pub fn drain_blocks(&mut self) -> Vec<BitBlock> {
        let count = self.pending.len() / self.n;
        if count == 0 {
            return Vec::new();
        }
        let blocks = (0..count)
            .map(|b| self.pending.slice(b * self.n, self.n))
            .collect();
        let used = count * self.n;
        self.pending = self.pending.slice(used, self.pending.len() - used);
        blocks
    }

    pub fn residual(&self) -> usize {
        self.pending.len()
    }
}
