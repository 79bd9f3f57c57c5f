//! In-memory run record: one row per logged iteration plus the final
//! meta-parameter values, the smoothed final metric used for comparisons,
//! and an abort marker for diverged runs.

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct RunRow<S> {
    pub iter: u64,
    /// Validation mean squared error for prediction runs; windowed mean
    /// episode return for control runs.
    pub metric: S,
    /// Sampled value of the inner objective on the update data.
    pub inner_loss: S,
    /// Sigmoid discount values, one per slot (a single entry in scalar mode).
    pub gamma: Vec<S>,
    pub lambda: Vec<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbortInfo {
    pub iter: u64,
    pub metric: f64,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct RunLog<S> {
    pub seed: u64,
    pub scalar_eta: bool,
    /// Number of meta-parameter slots (1 in scalar mode).
    pub num_slots: usize,
    pub rows: Vec<RunRow<S>>,
    /// Final per-slot (gamma, lambda) sigmoid values.
    pub final_eta: Vec<(S, S)>,
    /// Mean of the per-iteration metric over the final tenth of the run;
    /// the "final metric" reported by sweeps and comparisons.
    pub final_metric: f64,
    pub aborted: Option<AbortInfo>,
}

impl<S: Scalar> RunLog<S> {
    pub fn new(seed: u64, scalar_eta: bool, num_slots: usize) -> Self {
        RunLog {
            seed,
            scalar_eta,
            num_slots,
            rows: Vec::new(),
            final_eta: Vec::new(),
            final_metric: f64::NAN,
            aborted: None,
        }
    }
}

/// Mean of the last tenth of a metric series (at least one entry).
pub fn final_window_mean(metrics: &[f64]) -> f64 {
    if metrics.is_empty() {
        return f64::NAN;
    }
    let window = (metrics.len() / 10).max(1);
    let tail = &metrics[metrics.len() - window..];
    tail.iter().sum::<f64>() / tail.len() as f64
}
