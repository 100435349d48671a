use alloc::vec::Vec;

/// Fans independent jobs out and collects their results in index order.
///
/// Training code only ever calls [`BatchRunner::map`] with jobs that share no
/// mutable state, so an implementation may execute them concurrently. Results
/// must come back ordered by job index to keep runs deterministic.
pub trait BatchRunner: Sync {
    fn map<T, F>(&self, n: usize, job: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Runs every job on the calling thread.
#[derive(Debug, Default, Clone, Copy)]
pub struct Sequential;

impl BatchRunner for Sequential {
    fn map<T, F>(&self, n: usize, job: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(job).collect()
    }
}
