//! Index-ordered parallel map over `std::thread`.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

/// Worker count to use when the caller passes 0.
pub fn default_workers() -> usize {
    thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Evaluates `f(0..n)` on up to `workers` threads. The output is in index
/// order, so it does not depend on scheduling as long as `f` is a pure
/// function of its index.
pub fn map_indexed<T, F>(n: usize, workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let workers = if workers == 0 { default_workers() } else { workers }.clamp(1, n.max(1));
    if workers == 1 {
        return (0..n).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..n).map(|_| None).collect());
    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let v = f(i);
                slots.lock().expect("worker panicked")[i] = Some(v);
            });
        }
    });
    slots.into_inner().expect("worker panicked").into_iter().map(|v| v.expect("every index ran")).collect()
}
