//! Packed bit vectors used for feature columns and coverage masks.
//!
//! Every column of a cohort is one [`BitVec64`]; rule scoring reduces to
//! word-wise AND + popcount over these, which is the hot loop of the
//! whole miner.

const WORD_BITS: usize = 64;

/// Fixed-length bit vector packed into `u64` words.
///
/// Bits past `len` are kept zero so popcounts never need masking.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitVec64 {
    words: Vec<u64>,
    len: usize,
}

impl BitVec64 {
    pub fn zeros(len: usize) -> Self {
        BitVec64 { words: vec![0; len.div_ceil(WORD_BITS)], len }
    }

    pub fn ones(len: usize) -> Self {
        let mut v = Self::zeros(len);
        for w in &mut v.words {
            *w = u64::MAX;
        }
        v.mask_tail();
        v
    }

    pub fn from_bools(bits: impl IntoIterator<Item = bool>) -> Self {
        let mut words = Vec::new();
        let mut len = 0;
        for bit in bits {
            if len % WORD_BITS == 0 {
                words.push(0);
            }
            if bit {
                *words.last_mut().unwrap() |= 1u64 << (len % WORD_BITS);
            }
            len += 1;
        }
        BitVec64 { words, len }
    }

    pub fn from_indices(len: usize, ones: &[usize]) -> Self {
        let mut v = Self::zeros(len);
        for &i in ones {
            v.set(i, true);
        }
        v
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn set(&mut self, index: usize, value: bool) {
        assert!(index < self.len, "bit index {index} out of range {}", self.len);
        let mask = 1u64 << (index % WORD_BITS);
        if value {
            self.words[index / WORD_BITS] |= mask;
        } else {
            self.words[index / WORD_BITS] &= !mask;
        }
    }

    pub fn get(&self, index: usize) -> bool {
        assert!(index < self.len, "bit index {index} out of range {}", self.len);
        self.words[index / WORD_BITS] >> (index % WORD_BITS) & 1 == 1
    }

    pub fn count_ones(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    /// `self &= other`.
    pub fn and_assign(&mut self, other: &BitVec64) {
        debug_assert_eq!(self.len, other.len);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= b;
        }
    }

    /// `self |= other`.
    pub fn or_assign(&mut self, other: &BitVec64) {
        debug_assert_eq!(self.len, other.len);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    /// Flip every bit (tail bits stay zero).
    pub fn negate(&mut self) {
        for w in &mut self.words {
            *w = !*w;
        }
        self.mask_tail();
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(move |&i| self.get(i))
    }

    fn mask_tail(&mut self) {
        let tail = self.len % WORD_BITS;
        if tail != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << tail) - 1;
            }
        }
    }
}

impl std::fmt::Debug for BitVec64 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "BitVec64({} bits, {} ones)", self.len, self.count_ones())
    }
}

/// popcount(cover & col) and popcount(cover & col & label) in one pass.
///
/// This is the candidate-scoring kernel: `cover` is the parent rule's
/// coverage, `col` the specializing feature, `label` the outcome column.
pub fn count_and2_and3(cover: &BitVec64, col: &BitVec64, label: &BitVec64) -> (u64, u64) {
    debug_assert_eq!(cover.len, col.len);
    debug_assert_eq!(cover.len, label.len);
    let mut n = 0u64;
    let mut p = 0u64;
    for ((&a, &b), &l) in cover.words.iter().zip(&col.words).zip(&label.words) {
        let c = a & b;
        n += c.count_ones() as u64;
        p += (c & l).count_ones() as u64;
    }
    (n, p)
}

/// popcount(a & b).
pub fn count_and(a: &BitVec64, b: &BitVec64) -> u64 {
    debug_assert_eq!(a.len, b.len);
    a.words
        .iter()
        .zip(&b.words)
        .map(|(&x, &y)| (x & y).count_ones() as u64)
        .sum()
}
