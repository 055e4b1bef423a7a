use std::sync::atomic::{AtomicUsize, Ordering};

/// Tracks the largest materialized table or design matrix seen during a
/// run. Shared across worker threads.
#[derive(Debug, Default)]
pub struct MemoryMeter {
    peak: AtomicUsize,
}

impl MemoryMeter {
    pub fn new() -> MemoryMeter {
        MemoryMeter::default()
    }

    pub fn observe(&self, bytes: usize) {
        self.peak.fetch_max(bytes, Ordering::Relaxed);
    }

    pub fn peak(&self) -> usize {
        self.peak.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.peak.store(0, Ordering::Relaxed);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rayon::prelude::*;

    #[test]
    fn keeps_maximum_across_threads() {
        let m = MemoryMeter::new();
        (0..1000usize).into_par_iter().for_each(|i| m.observe(i * 3));
        assert_eq!(m.peak(), 999 * 3);
        m.observe(5);
        assert_eq!(m.peak(), 999 * 3);
        m.reset();
        assert_eq!(m.peak(), 0);
    }
}
