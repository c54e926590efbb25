//! Binary classification metrics over held-out grid points.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Sblue,
    Oracle,
    Knn,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Sblue => "SBLUE",
            Algorithm::Oracle => "Oracle",
            Algorithm::Knn => "KNN",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn from_pairs(truth: &[u8], pred: &[u8]) -> Self {
        debug_assert_eq!(truth.len(), pred.len());
        let mut c = ConfusionCounts::default();
        for (&t, &p) in truth.iter().zip(pred) {
            match (t, p) {
                (1, 1) => c.tp += 1,
                (0, 1) => c.fp += 1,
                (0, 0) => c.tn += 1,
                _ => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// On a 0/1 field the mean squared error is the misclassification rate.
    pub fn mse(&self) -> f64 {
        (self.fp + self.fn_) as f64 / self.total() as f64
    }

    pub fn fpr(&self) -> f64 {
        let negatives = self.fp + self.tn;
        if negatives == 0 {
            0.0
        } else {
            self.fp as f64 / negatives as f64
        }
    }

    pub fn tpr(&self) -> f64 {
        let positives = self.tp + self.fn_;
        if positives == 0 {
            0.0
        } else {
            self.tp as f64 / positives as f64
        }
    }

    /// F1 with `y = 1` as the positive class; degenerate cases (nothing
    /// predicted or present positive) score 0.
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            0.0
        } else {
            2.0 * self.tp as f64 / denom as f64
        }
    }
}

/// Per-algorithm metrics averaged over realizations.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MetricsRow {
    pub algorithm: Algorithm,
    pub realizations: usize,
    pub mse: f64,
    pub f1: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// Mean and standard error of one metric across realizations.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn average_rows(algorithm: Algorithm, per_realization: &[ConfusionCounts]) -> MetricsRow {
    let n = per_realization.len();
    let avg = |f: fn(&ConfusionCounts) -> f64| {
        per_realization.iter().map(f).sum::<f64>() / n as f64
    };
    MetricsRow {
        algorithm,
        realizations: n,
        mse: avg(ConfusionCounts::mse),
        f1: avg(ConfusionCounts::f1),
        fpr: avg(ConfusionCounts::fpr),
        tpr: avg(ConfusionCounts::tpr),
    }
}
