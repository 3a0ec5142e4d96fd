//! Opt-in instrumentation of every softmax row computed on the current
//! thread. Used to check attention normalization across a whole pipeline
//! step without threading a recorder through every layer.

use std::cell::RefCell;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SoftmaxStats {
    pub rows: u64,
    /// Largest `|sum(row) - 1|` seen.
    pub max_sum_error: f64,
    /// Smallest entry seen in any row.
    pub min_entry: f64,
}

thread_local! {
    static PROBE: RefCell<Option<SoftmaxStats>> = const { RefCell::new(None) };
}

/// Runs `f` with the probe installed on this thread and returns its result
/// together with the collected statistics. Nested calls are not supported:
/// the inner call takes over the probe and the outer one sees nothing.
pub fn with_softmax_probe<T>(f: impl FnOnce() -> T) -> (T, SoftmaxStats) {
    PROBE.with(|p| {
        *p.borrow_mut() = Some(SoftmaxStats {
            rows: 0,
            max_sum_error: 0.0,
            min_entry: f64::INFINITY,
        })
    });
    let out = f();
    let stats = PROBE.with(|p| p.borrow_mut().take()).unwrap_or_default();
    (out, stats)
}

pub(crate) fn record(row: &[f64]) {
    PROBE.with(|p| {
        if let Some(stats) = p.borrow_mut().as_mut() {
            let s: f64 = row.iter().sum();
            stats.rows += 1;
            stats.max_sum_error = stats.max_sum_error.max((s - 1.0).abs());
            for &v in row {
                stats.min_entry = stats.min_entry.min(v);
            }
        }
    });
}
