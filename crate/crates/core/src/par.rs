//! Data-parallel map with a sequential fallback.
//!
//! With the `parallel` feature (on by default) [`ExecMode::Parallel`] fans
//! work out over rayon's global pool. Without it, both modes run in order
//! on the calling thread. Results are always returned in input order.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ExecMode {
    #[default]
    Parallel,
    Sequential,
}

pub fn map<T, R, F>(mode: ExecMode, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match mode {
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}

/// True when parallel execution is compiled in.
pub fn parallel_available() -> bool {
    cfg!(feature = "parallel")
}
