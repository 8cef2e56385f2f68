//! Counter-based keyed random streams.
//!
//! Every random quantity in the crate is a pure function of a 64-bit key, a
//! stream tag and a position. Environments read single words at arbitrary
//! positions; simulations read a stream sequentially. Both are backed by
//! ChaCha8, whose output at a given (key, stream, word position) does not
//! depend on how the position was reached.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream tag for Rademacher row signs.
pub const TAG_SIGN: u64 = 0x5349_474e;
/// Stream tag for the perturbation indicators.
pub const TAG_LAMBDA: u64 = 0x4c41_4d42;
/// Stream tag for full-lattice walks.
pub const TAG_WALK: u64 = 0x5741_4c4b;
/// Stream tag for skeleton paths.
pub const TAG_SKELETON: u64 = 0x534b_454c;
/// Stream tag for horizontal jump magnitudes.
pub const TAG_JUMPS: u64 = 0x4a55_4d50;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 output function.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the `index`-th task under `master`. Used for every parallel batch so
/// that results depend on the task index only, never on scheduling.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    mix64(master ^ mix64(index.wrapping_mul(GOLDEN).wrapping_add(GOLDEN)))
}

/// A sequential stream for `(seed, tag)`.
pub fn stream(seed: u64, tag: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag);
    rng
}

/// Random-access field `y -> u64` keyed by `(seed, tag)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyedField {
    seed: u64,
    tag: u64,
}

impl KeyedField {
    pub fn new(seed: u64, tag: u64) -> Self {
        Self { seed, tag }
    }

    #[inline]
    fn word_pos(y: i64) -> u128 {
        // two u32 words per site; negative sites wrap to the top of the 2^65 range
        u128::from(y as u64) * 2
    }

    pub fn value(&self, y: i64) -> u64 {
        let mut rng = stream(self.seed, self.tag);
        rng.set_word_pos(Self::word_pos(y));
        rng.next_u64()
    }

    /// Values for every site of `lo..=hi`, read sequentially.
    pub fn values(&self, lo: i64, hi: i64) -> Vec<u64> {
        let mut out = Vec::with_capacity((hi - lo + 1).max(0) as usize);
        if lo > hi {
            return out;
        }
        let mut fill = |a: i64, b: i64| {
            let mut rng = stream(self.seed, self.tag);
            rng.set_word_pos(Self::word_pos(a));
            for _ in a..=b {
                out.push(rng.next_u64());
            }
        };
        if lo < 0 && hi >= 0 {
            fill(lo, -1);
            fill(0, hi);
        } else {
            fill(lo, hi);
        }
        out
    }
}

/// Uniform double in [0, 1) from the top 53 bits.
#[inline]
pub fn unit_f64(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Fair bits drawn from a stream, 64 at a time.
pub struct BitSource<R: RngCore = ChaCha8Rng> {
    rng: R,
    word: u64,
    left: u32,
}

impl BitSource<ChaCha8Rng> {
    pub fn keyed(seed: u64, tag: u64) -> Self {
        Self::new(stream(seed, tag))
    }
}

impl<R: RngCore> BitSource<R> {
    pub fn new(rng: R) -> Self {
        Self { rng, word: 0, left: 0 }
    }

    #[inline]
    pub fn bit(&mut self) -> bool {
        if self.left == 0 {
            self.word = self.rng.next_u64();
            self.left = 64;
        }
        let b = self.word & 1 == 1;
        self.word >>= 1;
        self.left -= 1;
        b
    }

    /// Two bits as a value in `0..4`.
    #[inline]
    pub fn pair(&mut self) -> u32 {
        if self.left < 2 {
            self.word = self.rng.next_u64();
            self.left = 64;
        }
        let v = (self.word & 3) as u32;
        self.word >>= 2;
        self.left -= 2;
        v
    }

    /// Exactly-1/3 event by rejection on bit pairs.
    #[inline]
    pub fn one_in_three(&mut self) -> bool {
        loop {
            match self.pair() {
                0 => return true,
                3 => continue,
                _ => return false,
            }
        }
    }

    /// Number of leading `11` pairs: Geometric with failure weight 1/4,
    /// `P(k) = (3/4)(1/4)^k`.
    #[inline]
    pub fn quarter_geometric(&mut self) -> u64 {
        let mut k = 0;
        while self.pair() == 3 {
            k += 1;
        }
        k
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    pub fn unit(&mut self) -> f64 {
        unit_f64(self.rng.next_u64())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequential_fill_matches_random_access() {
        let field = KeyedField::new(42, TAG_SIGN);
        let vals = field.values(-5, 5);
        for (i, y) in (-5..=5).enumerate() {
            assert_eq!(vals[i], field.value(y), "site {y}");
        }
    }

    #[test]
    fn fields_differ_by_tag_and_seed() {
        let a = KeyedField::new(1, TAG_SIGN).values(0, 63);
        let b = KeyedField::new(1, TAG_LAMBDA).values(0, 63);
        let c = KeyedField::new(2, TAG_SIGN).values(0, 63);
        assert_ne!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn derived_seeds_are_distinct() {
        let seeds: std::collections::HashSet<u64> = (0..10_000).map(|i| derive_seed(7, i)).collect();
        assert_eq!(seeds.len(), 10_000);
    }

    #[test]
    fn one_in_three_frequency() {
        let mut bits = BitSource::keyed(3, TAG_WALK);
        let n = 300_000;
        let hits = (0..n).filter(|_| bits.one_in_three()).count() as f64;
        let p = 1.0 / 3.0;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((hits / n as f64 - p).abs() < 4.0 * se);
    }
}
