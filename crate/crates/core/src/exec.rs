//! Execution strategy for the data-parallel loops.
//!
//! Every parallel loop in the crate maps an index range to an ordered `Vec`
//! and reduces it sequentially afterwards, so results are bit-identical
//! between [`Exec::Sequential`] and [`Exec::Parallel`]. Without the
//! `parallel` feature, [`Exec::Parallel`] runs sequentially.

use serde::{Deserialize, Serialize};

/// Examples per work unit in chunked reductions. Fixed so the summation
/// order never depends on the thread count.
pub const CHUNK: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// Evaluates `f` on `0..n`, returning results in index order.
    pub fn map_range<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                (0..n).into_par_iter().map(f).collect()
            }
            _ => (0..n).map(f).collect(),
        }
    }

    /// Splits `0..n` into [`CHUNK`]-sized ranges and maps each one.
    pub fn map_chunks<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(std::ops::Range<usize>) -> T + Sync + Send,
    {
        let chunks = n.div_ceil(CHUNK);
        self.map_range(chunks, |c| f(c * CHUNK..((c + 1) * CHUNK).min(n)))
    }

    /// True when work is actually spread over threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}
