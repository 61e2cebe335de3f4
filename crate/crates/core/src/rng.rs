//! Seeded, counter-based random streams.
//!
//! Work is cut into fixed-size blocks and block `b` always draws from ChaCha
//! stream `b` of the run seed, so results do not depend on how rayon
//! schedules the blocks or how many workers it has.

use crate::special::norm_quantile;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Rows per substream block.
pub const BLOCK_SIZE: usize = 1 << 14;

pub struct Substream {
    rng: ChaCha8Rng,
}

impl Substream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Substream { rng }
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal by inversion.
    pub fn normal(&mut self) -> f64 {
        norm_quantile(self.uniform())
    }
}

/// Splits `n` items into `(block_index, len)` pairs of `BLOCK_SIZE`.
pub fn blocks(n: usize) -> impl IndexedParallelIterator<Item = (u64, usize)> {
    let count = n.div_ceil(BLOCK_SIZE);
    (0..count).into_par_iter().map(move |b| {
        let start = b * BLOCK_SIZE;
        (b as u64, BLOCK_SIZE.min(n - start))
    })
}

/// Running (count, mean, M2) triple with an order-stable merge.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    pub fn push(&mut self, v: f64) {
        self.count += 1;
        let delta = v - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (v - self.mean);
    }

    pub fn merge(self, other: Moments) -> Moments {
        if self.count == 0 {
            return other;
        }
        if other.count == 0 {
            return self;
        }
        let count = self.count + other.count;
        let delta = other.mean - self.mean;
        let w = other.count as f64 / count as f64;
        Moments {
            count,
            mean: self.mean + delta * w,
            m2: self.m2 + other.m2 + delta * delta * self.count as f64 * w,
        }
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

/// Runs `per_block` on every block in parallel and folds the results in
/// block order.
pub fn map_blocks_ordered<T, F>(n: usize, seed: u64, per_block: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut Substream, usize) -> T + Sync + Send,
{
    blocks(n)
        .map(|(b, len)| {
            let mut s = Substream::new(seed, b);
            per_block(&mut s, len)
        })
        .collect()
}
