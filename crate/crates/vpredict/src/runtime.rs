//! Thread-capped parallel dispatch. The `VPREDICT_THREADS` environment
//! variable caps worker count (default: machine parallelism); results are
//! always assembled in index order, so outputs are bit-identical for
//! every thread count.

use std::sync::atomic::{AtomicUsize, Ordering};

use crate::CliError;

/// Effective worker count: `VPREDICT_THREADS` when set (must be a
/// positive integer), otherwise the machine's available parallelism.
pub fn thread_cap() -> Result<usize, CliError> {
    match std::env::var("VPREDICT_THREADS") {
        Ok(raw) => raw
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| {
                CliError::usage(format!("VPREDICT_THREADS must be a positive integer, got {raw:?}"))
            }),
        Err(std::env::VarError::NotPresent) => Ok(default_parallelism()),
        Err(std::env::VarError::NotUnicode(_)) => {
            Err(CliError::usage("VPREDICT_THREADS is not valid unicode"))
        }
    }
}

fn default_parallelism() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Applies a pure `f` to every index in `0..n` on up to `threads`
/// workers and returns the results in index order.
///
/// Work is handed out through an atomic counter, but each result is
/// placed by its index, so the output is independent of scheduling. A
/// panic in any worker propagates.
pub fn par_map_indexed<T, F>(n: usize, threads: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let workers = threads.min(n).max(1);
    if workers == 1 {
        return (0..n).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let f = &f;
    let per_worker: Vec<Vec<(usize, T)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                scope.spawn(|| {
                    let mut local = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= n {
                            break;
                        }
                        local.push((i, f(i)));
                    }
                    local
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("parallel worker panicked")).collect()
    });
    let mut slots: Vec<Option<T>> = (0..n).map(|_| None).collect();
    for mut local in per_worker {
        for (i, value) in local.drain(..) {
            slots[i] = Some(value);
        }
    }
    slots.into_iter().map(|s| s.expect("every index is visited exactly once")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_map_preserves_index_order() {
        let serial = par_map_indexed(1000, 1, |i| i * i);
        let parallel = par_map_indexed(1000, 8, |i| i * i);
        assert_eq!(serial, parallel);
        assert_eq!(serial[17], 289);
    }

    #[test]
    fn zero_length_map_is_empty() {
        let out: Vec<u8> = par_map_indexed(0, 4, |_| 0u8);
        assert!(out.is_empty());
    }
}
