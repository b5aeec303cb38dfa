//! Deterministic data-parallel map.
//!
//! Work items are pure functions of their index, so the thread count can
//! only change *who* computes a slot, never its value; results are assembled
//! in index order. This is what makes `--threads 1` and `--threads 8` output
//! byte-identical files.

/// Applies `f` to `0..count`, splitting the range into contiguous chunks
/// across at most `threads` scoped worker threads.
pub fn map_indexed<T, F>(count: usize, threads: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let workers = threads.max(1).min(count.max(1));
    if workers <= 1 {
        return (0..count).map(f).collect();
    }
    let mut slots: Vec<Option<T>> = (0..count).map(|_| None).collect();
    let chunk = count.div_ceil(workers);
    std::thread::scope(|scope| {
        for (tid, slice) in slots.chunks_mut(chunk).enumerate() {
            let f = &f;
            scope.spawn(move || {
                for (offset, slot) in slice.iter_mut().enumerate() {
                    *slot = Some(f(tid * chunk + offset));
                }
            });
        }
    });
    slots.into_iter().map(|s| s.expect("every slot fills")).collect()
}
