//! Execution policy for the data-parallel inner loops.
//!
//! Every batch routine in this crate (Monte-Carlo estimation, sandwich audits,
//! grid scans, LP formatting) takes an [`Exec`] and produces bit-identical
//! results under either policy: work is split into fixed blocks whose random
//! streams and reduction order do not depend on scheduling. Without the
//! `parallel` feature, [`Exec::Parallel`] silently runs sequentially.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    /// Maps `f` over `0..len` and collects the results in index order.
    pub fn map_range<T, F>(self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return (0..len).into_par_iter().map(f).collect();
        }
        (0..len).map(f).collect()
    }

    /// Maps `f` over a slice, preserving order.
    pub fn map_slice<'a, S, T, F>(self, items: &'a [S], f: F) -> Vec<T>
    where
        S: Sync,
        T: Send,
        F: Fn(&'a S) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }
}

/// Splits `total` work items into blocks of `block` items.
pub(crate) fn blocks(total: usize, block: usize) -> Vec<std::ops::Range<usize>> {
    (0..total.div_ceil(block))
        .map(|b| b * block..((b + 1) * block).min(total))
        .collect()
}

/// Independent generator for one work block: same base seed, distinct stream.
pub(crate) fn block_rng(base_seed: u64, block_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(block_index as u64);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocks_cover_range() {
        let b = blocks(10, 4);
        assert_eq!(b, vec![0..4, 4..8, 8..10]);
        assert!(blocks(0, 4).is_empty());
    }

    #[test]
    fn policies_agree() {
        let f = |i: usize| (i as f64).sqrt();
        assert_eq!(Exec::Sequential.map_range(1000, f), Exec::Parallel.map_range(1000, f));
    }
}
