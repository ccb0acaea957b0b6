//! Ordered data-parallel map with a sequential fallback.
//!
//! With the `parallel` feature, [`ExecMode::Parallel`] runs on the current
//! rayon pool; without it every mode runs sequentially. Output order always
//! matches input order.

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ExecMode {
    Sequential,
    #[default]
    Parallel,
}

impl ExecMode {
    /// Whether this mode actually fans out in the current build.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == ExecMode::Parallel
    }
}

pub fn map<T, R, F>(items: &[T], mode: ExecMode, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    map_chunked(items, mode, 1, f)
}

/// Like [`map`], but no parallel task handles fewer than `min_len` items, so
/// inputs shorter than `2 * min_len` stay on the calling thread.
pub fn map_chunked<T, R, F>(items: &[T], mode: ExecMode, min_len: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() && items.len() >= 2 * min_len.max(1) {
        use rayon::prelude::*;
        return items
            .par_iter()
            .with_min_len(min_len.max(1))
            .map(f)
            .collect();
    }
    let _ = (mode, min_len);
    items.iter().map(f).collect()
}
