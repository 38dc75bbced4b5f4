//! Packed bit vectors and the GF(2) primitives shared by the rest of the crate.
//!
//! Bit `i` of a logical stream lives in bit `i % 8` of byte `i / 8` (LSB-first).
//! Internally bits are held in `u64` words with the same ordering, so the byte
//! view is just the little-endian serialization of the words.

use std::fmt;

use crate::error::{Error, Result};

/// A packed, fixed-length sequence of bits.
///
/// Bits past `len` in the last word are always zero.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct BitBlock {
    words: Vec<u64>,
    len: usize,
}

#[inline]
fn words_for(len: usize) -> usize {
    len.div_ceil(64)
}

impl BitBlock {
    pub fn zeros(len: usize) -> Self {
        Self {
            words: vec![0; words_for(len)],
            len,
        }
    }

    pub fn with_capacity(bits: usize) -> Self {
        Self {
            words: Vec::with_capacity(words_for(bits)),
            len: 0,
        }
    }

    /// Builds a block from `len` bits held LSB-first in `words`. Extra words
    /// and bits past `len` are discarded.
    pub fn from_words(mut words: Vec<u64>, len: usize) -> Result<Self> {
        if words.len() * 64 < len {
            return Err(Error::TooShort {
                needed: len,
                actual: words.len() * 64,
            });
        }
        words.truncate(words_for(len));
        let mut block = Self { words, len };
        block.clear_tail();
        Ok(block)
    }

    /// Unpacks `len` bits from LSB-first bytes.
    pub fn from_bytes(bytes: &[u8], len: usize) -> Result<Self> {
        if bytes.len() * 8 < len {
            return Err(Error::TooShort {
                needed: len,
                actual: bytes.len() * 8,
            });
        }
        let used = &bytes[..len.div_ceil(8)];
        let words = used
            .chunks(8)
            .map(|chunk| {
                let mut buf = [0u8; 8];
                buf[..chunk.len()].copy_from_slice(chunk);
                u64::from_le_bytes(buf)
            })
            .collect();
        Self::from_words(words, len)
    }

    /// Unpacks every bit of `bytes`.
    pub fn from_all_bytes(bytes: &[u8]) -> Self {
        Self::from_bytes(bytes, bytes.len() * 8).expect("length is exact")
    }

    /// Parses a string of `'0'`/`'1'` characters; whitespace and `_` are ignored.
    pub fn from_bit_str(s: &str) -> Result<Self> {
        let mut block = Self::with_capacity(s.len());
        for c in s.chars() {
            match c {
                '0' => block.push(false),
                '1' => block.push(true),
                c if c.is_whitespace() || c == '_' => {}
                other => return Err(Error::Config(format!("invalid bit character {other:?}"))),
            }
        }
        Ok(block)
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        bits.iter().copied().collect()
    }

    /// Packs into LSB-first bytes; the final partial byte is zero-padded.
    pub fn to_bytes(&self) -> Vec<u8> {
        let n_bytes = self.len.div_ceil(8);
        let mut out = Vec::with_capacity(n_bytes);
        for w in &self.words {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out.truncate(n_bytes);
        out
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, bit: bool) {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        let mask = 1u64 << (i % 64);
        if bit {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    #[inline]
    pub fn push(&mut self, bit: bool) {
        if self.len.is_multiple_of(64) {
            self.words.push(0);
        }
        if bit {
            self.words[self.len / 64] |= 1u64 << (self.len % 64);
        }
        self.len += 1;
    }

    /// Appends the low `count` bits of `value`, least significant first.
    pub fn push_word(&mut self, value: u64, count: u32) {
        debug_assert!(count <= 64);
        if count == 0 {
            return;
        }
        let value = if count == 64 {
            value
        } else {
            value & ((1u64 << count) - 1)
        };
        let offset = (self.len % 64) as u32;
        if offset == 0 {
            self.words.push(value);
        } else {
            *self.words.last_mut().expect("nonzero offset implies a word") |= value << offset;
            if offset + count > 64 {
                self.words.push(value >> (64 - offset));
            }
        }
        self.len += count as usize;
    }

    pub fn extend_from_block(&mut self, other: &BitBlock) {
        let mut remaining = other.len;
        for &w in &other.words {
            let take = remaining.min(64) as u32;
            self.push_word(w, take);
            remaining -= take as usize;
        }
    }

    /// Copies bits `start..start + len` into a new block.
    pub fn slice(&self, start: usize, len: usize) -> BitBlock {
        assert!(start + len <= self.len, "slice out of range");
        let mut out = BitBlock::with_capacity(len);
        let mut pos = start;
        let end = start + len;
        while pos < end {
            let take = (end - pos).min(64) as u32;
            out.push_word(self.read_word(pos), take);
            pos += take as usize;
        }
        out
    }

    /// Reads up to 64 bits starting at `pos`; bits past the end read as zero.
    #[inline]
    pub fn read_word(&self, pos: usize) -> u64 {
        let w = pos / 64;
        let off = pos % 64;
        let lo = self.words.get(w).copied().unwrap_or(0) >> off;
        if off == 0 {
            lo
        } else {
            lo | (self.words.get(w + 1).copied().unwrap_or(0) << (64 - off))
        }
    }

    pub fn count_ones(&self) -> u64 {
        self.words.iter().map(|w| u64::from(w.count_ones())).sum()
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = bool> + '_ {
        (0..self.len).map(move |i| (self.words[i / 64] >> (i % 64)) & 1 == 1)
    }

    pub fn xor_assign(&mut self, other: &BitBlock) -> Result<()> {
        if self.len != other.len {
            return Err(Error::LengthMismatch {
                expected: self.len,
                actual: other.len,
            });
        }
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= b;
        }
        Ok(())
    }

    fn clear_tail(&mut self) {
        let rem = self.len % 64;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }
}

impl FromIterator<bool> for BitBlock {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        let iter = iter.into_iter();
        let mut block = BitBlock::with_capacity(iter.size_hint().0);
        for bit in iter {
            block.push(bit);
        }
        block
    }
}

impl fmt::Debug for BitBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitBlock({}: ", self.len)?;
        for (i, bit) in self.iter().enumerate() {
            if i == 128 {
                write!(f, "...")?;
                break;
            }
            f.write_str(if bit { "1" } else { "0" })?;
        }
        write!(f, ")")
    }
}

impl fmt::Display for BitBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for bit in self.iter() {
            f.write_str(if bit { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Elementwise XOR of two equal-length blocks.
pub fn xor_accumulate(acc: &BitBlock, v: &BitBlock) -> Result<BitBlock> {
    let mut out = acc.clone();
    out.xor_assign(v)?;
    Ok(out)
}

/// One 8-bit ADC code.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct RawSample(pub u8);

impl RawSample {
    #[inline]
    pub fn value(self) -> u8 {
        self.0
    }
}

impl From<u8> for RawSample {
    fn from(v: u8) -> Self {
        RawSample(v)
    }
}

/// Which of the 8 ADC bits are kept for extraction (bit 7 = MSB).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct KeepMask(u8);

impl KeepMask {
    /// Drops the LSB and the two most significant bits, keeping positions 5..=1.
    pub const DEFAULT: KeepMask = KeepMask(0b0011_1110);
    pub const ALL: KeepMask = KeepMask(0xff);

    pub fn new(mask: u8) -> Result<Self> {
        if mask == 0 {
            Err(Error::EmptyKeepMask)
        } else {
            Ok(KeepMask(mask))
        }
    }

    #[inline]
    pub fn bits(self) -> u8 {
        self.0
    }

    #[inline]
    pub fn kept(self) -> u32 {
        self.0.count_ones()
    }

    #[inline]
    pub fn dropped(self) -> u32 {
        8 - self.kept()
    }

    /// Kept bits of `s`, most significant kept position first, packed
    /// LSB-first into the low `kept()` bits of the return value.
    #[inline]
    pub fn extract(self, s: RawSample) -> u8 {
        let mut out = 0u8;
        let mut k = 0;
        for pos in (0..8).rev() {
            if self.0 >> pos & 1 == 1 {
                out |= ((s.0 >> pos) & 1) << k;
                k += 1;
            }
        }
        out
    }
}

impl Default for KeepMask {
    fn default() -> Self {
        KeepMask::DEFAULT
    }
}

/// The kept bits of one sample, emitted from the most significant kept
/// position down to the least.
pub fn select_sample_bits(s: RawSample, keep_mask: KeepMask) -> BitBlock {
    let mut out = BitBlock::with_capacity(keep_mask.kept() as usize);
    out.push_word(u64::from(keep_mask.extract(s)), keep_mask.kept());
    out
}

/// Lookup table mapping every code to its selected bits under one mask.
#[derive(Clone, Debug)]
pub struct SampleBitSelector {
    mask: KeepMask,
    table: [u8; 256],
}

impl SampleBitSelector {
    pub fn new(mask: KeepMask) -> Self {
        let mut table = [0u8; 256];
        for (code, slot) in table.iter_mut().enumerate() {
            *slot = mask.extract(RawSample(code as u8));
        }
        Self { mask, table }
    }

    pub fn mask(&self) -> KeepMask {
        self.mask
    }

    /// Appends the selected bits of every sample to `out`.
    pub fn append(&self, samples: &[u8], out: &mut BitBlock) {
        let kept = self.mask.kept();
        for &s in samples {
            out.push_word(u64::from(self.table[s as usize]), kept);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bits(s: &str) -> BitBlock {
        BitBlock::from_bit_str(s).unwrap()
    }

    #[test]
    fn xor_truth_table() {
        assert_eq!(xor_accumulate(&bits("1010"), &bits("0110")).unwrap(), bits("1100"));
    }

    #[test]
    fn xor_self_and_identity() {
        let x = bits("1101_0010_1110_0001_1");
        assert_eq!(xor_accumulate(&x, &x).unwrap(), BitBlock::zeros(x.len()));
        assert_eq!(xor_accumulate(&x, &BitBlock::zeros(x.len())).unwrap(), x);
    }

    #[test]
    fn xor_length_mismatch() {
        let err = xor_accumulate(&bits("101"), &bits("10")).unwrap_err();
        assert!(matches!(err, Error::LengthMismatch { expected: 3, actual: 2 }));
    }

    #[test]
    fn select_default_mask() {
        let m = KeepMask::DEFAULT;
        assert_eq!(select_sample_bits(RawSample(0b1111_1111), m), bits("11111"));
        assert_eq!(select_sample_bits(RawSample(0b1100_0001), m), bits("00000"));
        // positions 5..1 of 0b00101010 are 1,0,1,0,1
        assert_eq!(select_sample_bits(RawSample(0b0010_1010), m), bits("10101"));
    }

    #[test]
    fn empty_mask_rejected() {
        assert!(matches!(KeepMask::new(0), Err(Error::EmptyKeepMask)));
    }

    #[test]
    fn byte_order_is_lsb_first() {
        let b = BitBlock::from_all_bytes(&[0b0000_0001, 0b1000_0000]);
        assert!(b.get(0));
        assert!(b.get(15));
        assert_eq!(b.count_ones(), 2);
        assert_eq!(bits("1").to_bytes(), vec![1]);
        assert_eq!(bits("000000001").to_bytes(), vec![0, 1]);
    }

    #[test]
    fn tail_bits_are_cleared() {
        let b = BitBlock::from_bytes(&[0xff], 3).unwrap();
        assert_eq!(b.to_bytes(), vec![0b111]);
        assert_eq!(b.count_ones(), 3);
    }

    #[test]
    fn selector_matches_select_sample_bits() {
        for mask in [KeepMask::DEFAULT, KeepMask::ALL, KeepMask::new(0b1000_0001).unwrap()] {
            let sel = SampleBitSelector::new(mask);
            let mut table_out = BitBlock::default();
            let mut direct = BitBlock::default();
            let samples: Vec<u8> = (0..=255).collect();
            sel.append(&samples, &mut table_out);
            for &s in &samples {
                direct.extend_from_block(&select_sample_bits(RawSample(s), mask));
            }
            assert_eq!(table_out, direct);
        }
    }

    proptest! {
        #[test]
        fn pack_roundtrip(v in proptest::collection::vec(any::<bool>(), 0..300)) {
            let b = BitBlock::from_bools(&v);
            let back = BitBlock::from_bytes(&b.to_bytes(), v.len()).unwrap();
            prop_assert_eq!(back.iter().collect::<Vec<_>>(), v);
        }

        #[test]
        fn bytes_roundtrip(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
            prop_assert_eq!(BitBlock::from_all_bytes(&bytes).to_bytes(), bytes);
        }

        #[test]
        fn xor_assoc_comm(a in proptest::collection::vec(any::<bool>(), 70),
                          b in proptest::collection::vec(any::<bool>(), 70),
                          c in proptest::collection::vec(any::<bool>(), 70)) {
            let (a, b, c) = (BitBlock::from_bools(&a), BitBlock::from_bools(&b), BitBlock::from_bools(&c));
            let left = xor_accumulate(&xor_accumulate(&a, &b).unwrap(), &c).unwrap();
            let right = xor_accumulate(&a, &xor_accumulate(&b, &c).unwrap()).unwrap();
            prop_assert_eq!(&left, &right);
            prop_assert_eq!(xor_accumulate(&a, &b).unwrap(), xor_accumulate(&b, &a).unwrap());
        }

        #[test]
        fn selected_len_is_popcount(s in any::<u8>(), mask in 1u8..) {
            let m = KeepMask::new(mask).unwrap();
            prop_assert_eq!(select_sample_bits(RawSample(s), m).len(), mask.count_ones() as usize);
        }

        #[test]
        fn slice_matches_get(v in proptest::collection::vec(any::<bool>(), 1..300), a in 0usize..300, l in 0usize..300) {
            let b = BitBlock::from_bools(&v);
            let start = a % v.len();
            let len = l % (v.len() - start + 1);
            let s = b.slice(start, len);
            prop_assert_eq!(s.iter().collect::<Vec<_>>(), v[start..start + len].to_vec());
        }
    }
}
