//! Counter-based random streams.
//!
//! Every draw consumes exactly one counter step, which maps to four 32-bit
//! words of a ChaCha8 keystream keyed by the stream seed. A stream is
//! therefore fully described by `(seed, counter)` and can be repositioned
//! without replaying earlier draws. Child streams for parallel work get
//! their own seed through [`derive_seed`].

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::Result;
use crate::field::{Dim, Field};

const WORDS_PER_DRAW: u128 = 4;

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of child stream `index` of `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    mix64(mix64(seed) ^ mix64(index.wrapping_add(0x9e37_79b9_7f4a_7c15)))
}

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    counter: u64,
    core: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream::at(seed, 0)
    }

    /// Stream positioned at `counter` draws past the start.
    pub fn at(seed: u64, counter: u64) -> Self {
        let mut core = ChaCha8Rng::seed_from_u64(seed);
        core.set_word_pos(counter as u128 * WORDS_PER_DRAW);
        RngStream {
            seed,
            counter,
            core,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Independent child stream number `index`.
    pub fn derive(&self, index: u64) -> RngStream {
        RngStream::new(derive_seed(self.seed, index))
    }

    fn draw_bits(&mut self) -> (u64, u64) {
        let a = self.core.next_u64();
        let b = self.core.next_u64();
        self.counter += 1;
        (a, b)
    }

    /// Uniform in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        let (a, _) = self.draw_bits();
        (a >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n`; `n` must be positive.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let (a, _) = self.draw_bits();
        ((a as u128 * n as u128) >> 64) as u64
    }

    /// One N(0, 1) draw (Box-Muller, cosine branch).
    pub fn normal(&mut self) -> f64 {
        let (a, b) = self.draw_bits();
        let u1 = ((a >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = (b >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.normal();
        }
    }

    pub fn normal_vec(&mut self, n: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        self.fill_normal(&mut v);
        v
    }

    /// Field of i.i.d. standard normal draws; advances the counter by its element count.
    pub fn standard_normal(&mut self, dims: &[Dim]) -> Result<Field> {
        let n: usize = dims.iter().map(|d| d.extent).product();
        let mut data = vec![0.0; n];
        self.fill_normal(&mut data);
        Field::from_vec(dims, data)
    }
}
