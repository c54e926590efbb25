//! Monte-Carlo calibration of the two tests: statistic distributions under
//! either hypothesis, thresholds at a target significance level, the
//! equivalent binary channels, and ROC curves.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{IntegralSampler, PointSampler, SensorScene};
use crate::nlrt::NlrtTest;
use crate::rng::RngStream;
use crate::wgplrt::{laplace_fit, wgplrt_statistic, LaplaceCache};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatKind {
    /// Reject H0 when the statistic is large.
    Wgplrt,
    /// Reject H0 when the statistic is small.
    Nlrt,
}

impl StatKind {
    /// 1 iff the statistic rejects H0 at this threshold; ties keep the null.
    pub fn decide(&self, statistic: f64, threshold: f64) -> u8 {
        match self {
            StatKind::Wgplrt => u8::from(statistic > threshold),
            StatKind::Nlrt => u8::from(statistic < threshold),
        }
    }

    /// Orient the statistic so that larger always means "more H1-like".
    fn score(&self, statistic: f64) -> f64 {
        match self {
            StatKind::Wgplrt => statistic,
            StatKind::Nlrt => -statistic,
        }
    }
}

/// Monte-Carlo draws of a test statistic under both hypotheses, sorted.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatisticSample {
    pub kind: StatKind,
    pub under_h0: Vec<f64>,
    pub under_h1: Vec<f64>,
}

impl StatisticSample {
    pub fn from_raw(kind: StatKind, mut under_h0: Vec<f64>, mut under_h1: Vec<f64>) -> Self {
        under_h0.sort_by(f64::total_cmp);
        under_h1.sort_by(f64::total_cmp);
        Self { kind, under_h0, under_h1 }
    }

    pub fn len(&self) -> usize {
        self.under_h0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.under_h0.is_empty()
    }
}

/// The fitted point-sensor test: one Laplace cache per hypothesis, shared by
/// all sensors on the same schedule.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WgplrtTest {
    pub cache0: LaplaceCache,
    pub cache1: LaplaceCache,
}

impl WgplrtTest {
    pub fn fit(scene: &SensorScene) -> Result<Self> {
        let times = scene.point_times();
        Ok(Self {
            cache0: laplace_fit(&scene.h0, &times, scene.sigma_p)?,
            cache1: laplace_fit(&scene.h1, &times, scene.sigma_p)?,
        })
    }

    pub fn statistic(&self, z: &[f64]) -> f64 {
        wgplrt_statistic(&self.cache0, &self.cache1, z)
    }
}

fn check_replicates(r: usize) -> Result<()> {
    if r < 100 {
        return Err(Error::InvalidConfig(format!(
            "calibration needs at least 100 replicates, got {r}"
        )));
    }
    Ok(())
}

/// Score `r` fresh temporal draws per hypothesis with the point-sensor test.
/// Replicate `i` under hypothesis `h` consumes `stream.substream(h).substream(i)`.
pub fn sample_wgplrt_statistics(
    test: &WgplrtTest,
    samplers: [&PointSampler; 2],
    r: usize,
    stream: &RngStream,
) -> Result<StatisticSample> {
    check_replicates(r)?;
    let score = |hyp: usize| -> Vec<f64> {
        let base = stream.substream(hyp as u64);
        (0..r)
            .into_par_iter()
            .map(|i| test.statistic(&samplers[hyp].draw_stream(&base.substream(i as u64))))
            .collect()
    };
    Ok(StatisticSample::from_raw(StatKind::Wgplrt, score(0), score(1)))
}

/// Score `r` fresh integral draws per hypothesis with a prepared NLRT.
/// Calibration draws are independent of the bank draws (disjoint streams).
pub fn sample_nlrt_statistics(
    test: &NlrtTest,
    samplers: [&IntegralSampler; 2],
    r: usize,
    stream: &RngStream,
) -> Result<StatisticSample> {
    check_replicates(r)?;
    let score = |hyp: usize| -> Result<Vec<f64>> {
        let base = stream.substream(hyp as u64);
        (0..r)
            .into_par_iter()
            .map(|i| test.statistic(&samplers[hyp].draw_stream(&base.substream(i as u64))))
            .collect()
    };
    Ok(StatisticSample::from_raw(StatKind::Nlrt, score(0)?, score(1)?))
}

/// Linearly interpolated empirical quantile (order-statistic type 7).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

/// Threshold giving empirical false positive rate `alpha` on the H0 sample:
/// the (1−α) quantile for tests that reject high, the α quantile for tests
/// that reject low.
pub fn threshold_for_alpha(sample: &StatisticSample, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidConfig(format!("alpha must be in (0,1), got {alpha}")));
    }
    Ok(match sample.kind {
        StatKind::Wgplrt => quantile(&sample.under_h0, 1.0 - alpha),
        StatKind::Nlrt => quantile(&sample.under_h0, alpha),
    })
}

/// The 2×2 channel (rows: true label, columns: decision) induced by a test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    pub p00: f64,
    pub p01: f64,
    pub p10: f64,
    pub p11: f64,
}

impl TransitionMatrix {
    /// Construct from the type-I rate `p01` and type-II rate `p10`; the
    /// complements make rows sum to one exactly.
    pub fn from_error_rates(p01: f64, p10: f64) -> Self {
        Self { p00: 1.0 - p01, p01, p10, p11: 1.0 - p10 }
    }

    pub fn perfect() -> Self {
        Self::from_error_rates(0.0, 0.0)
    }

    /// A channel whose output is independent of the input.
    pub fn uninformative(p: f64) -> Self {
        Self::from_error_rates(p, 1.0 - p)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.p00, self.p01, self.p10, self.p11]
            .iter()
            .all(|p| (0.0..=1.0).contains(p))
            && (self.p00 + self.p01 - 1.0).abs() < 1e-12
            && (self.p10 + self.p11 - 1.0).abs() < 1e-12;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("transition matrix not row-stochastic: {self:?}")))
        }
    }

    /// Pass a true label through the channel.
    pub fn transmit(&self, label: u8, rng: &mut impl rand::Rng) -> u8 {
        let p_one = if label == 0 { self.p01 } else { self.p11 };
        u8::from(rng.random::<f64>() < p_one)
    }
}

/// Empirical channel of a calibrated test: `p01` is the rejection rate under
/// H0 at the threshold, `p10` the acceptance rate under H1.
pub fn transition_matrix(sample: &StatisticSample, threshold: f64) -> TransitionMatrix {
    let reject_rate = |stats: &[f64]| {
        stats.iter().filter(|&&s| sample.kind.decide(s, threshold) == 1).count() as f64
            / stats.len() as f64
    };
    let p01 = reject_rate(&sample.under_h0);
    let p10 = 1.0 - reject_rate(&sample.under_h1);
    TransitionMatrix::from_error_rates(p01, p10)
}

/// An ROC curve of (FPR, TPR) points with its trapezoid AUC.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// Sweep the decision threshold over the pooled statistic values.
pub fn roc(sample: &StatisticSample) -> RocCurve {
    let n0 = sample.under_h0.len() as f64;
    let n1 = sample.under_h1.len() as f64;
    // Larger score = more evidence for H1; sweep from the strictest
    // threshold down so FPR/TPR grow monotonically from (0,0) to (1,1).
    let mut scored: Vec<(f64, bool)> = sample
        .under_h0
        .iter()
        .map(|&s| (sample.kind.score(s), false))
        .chain(sample.under_h1.iter().map(|&s| (sample.kind.score(s), true)))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut points = vec![(0.0, 0.0)];
    let (mut fp, mut tp) = (0.0, 0.0);
    let mut i = 0;
    while i < scored.len() {
        let cut = scored[i].0;
        while i < scored.len() && scored[i].0 == cut {
            if scored[i].1 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        points.push((fp / n0, tp / n1));
    }

    let mut auc = 0.0;
    for w in points.windows(2) {
        auc += (w[1].0 - w[0].0) * (w[1].1 + w[0].1) * 0.5;
    }
    RocCurve { points, auc }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    #[test]
    fn quantile_interpolates_order_statistics() {
        let sorted: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        let sample = StatisticSample { kind: StatKind::Wgplrt, under_h0: sorted, under_h1: vec![] };
        let t = threshold_for_alpha(&sample, 0.1).unwrap();
        assert_abs_diff_eq!(t, 90.1, epsilon = 1e-12);
    }

    #[test]
    fn median_at_half_alpha() {
        let sample = StatisticSample {
            kind: StatKind::Wgplrt,
            under_h0: vec![-3.0, -1.0, 0.0, 1.0, 3.0],
            under_h1: vec![],
        };
        assert_abs_diff_eq!(threshold_for_alpha(&sample, 0.5).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn alpha_bounds_are_enforced() {
        let sample =
            StatisticSample { kind: StatKind::Nlrt, under_h0: vec![0.0], under_h1: vec![0.0] };
        assert!(threshold_for_alpha(&sample, 0.0).is_err());
        assert!(threshold_for_alpha(&sample, 1.0).is_err());
    }

    #[test]
    fn perfectly_separated_sample_gives_identity_channel() {
        let sample = StatisticSample::from_raw(
            StatKind::Wgplrt,
            (0..200).map(|i| -10.0 + i as f64 * 0.01).collect(),
            (0..200).map(|i| 10.0 + i as f64 * 0.01).collect(),
        );
        let u = transition_matrix(&sample, 0.0);
        assert_eq!((u.p00, u.p01, u.p10, u.p11), (1.0, 0.0, 0.0, 1.0));
        u.validate().unwrap();
    }

    #[test]
    fn transition_rows_sum_to_one_exactly() {
        let mut rng = RngStream::new(5, 0).rng();
        let h0: Vec<f64> = (0..500).map(|_| rng.random::<f64>()).collect();
        let h1: Vec<f64> = (0..500).map(|_| rng.random::<f64>() + 0.3).collect();
        let sample = StatisticSample::from_raw(StatKind::Wgplrt, h0, h1);
        let t = threshold_for_alpha(&sample, 0.17).unwrap();
        let u = transition_matrix(&sample, t);
        assert_eq!(u.p00 + u.p01, 1.0);
        assert_eq!(u.p10 + u.p11, 1.0);
        // Empirical FPR on the calibration sample matches alpha closely.
        assert_abs_diff_eq!(u.p01, 0.17, epsilon = 0.01);
    }

    #[test]
    fn threshold_is_monotone_in_alpha() {
        let mut rng = RngStream::new(6, 0).rng();
        let h0: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
        let sample = StatisticSample::from_raw(StatKind::Wgplrt, h0.clone(), h0);
        let mut prev_fpr = -1.0;
        for alpha in [0.05, 0.1, 0.2, 0.4, 0.8] {
            let t = threshold_for_alpha(&sample, alpha).unwrap();
            let u = transition_matrix(&sample, t);
            assert!(u.p01 >= prev_fpr);
            prev_fpr = u.p01;
        }
    }

    #[test]
    fn identical_distributions_give_chance_auc() {
        let mut rng = RngStream::new(7, 0).rng();
        let h0: Vec<f64> = (0..2000).map(|_| rng.random::<f64>()).collect();
        let h1: Vec<f64> = (0..2000).map(|_| rng.random::<f64>()).collect();
        let sample = StatisticSample::from_raw(StatKind::Wgplrt, h0, h1);
        let curve = roc(&sample);
        assert!((curve.auc - 0.5).abs() < 0.03, "auc {}", curve.auc);
    }

    #[test]
    fn disjoint_supports_give_perfect_auc() {
        let sample = StatisticSample::from_raw(
            StatKind::Nlrt,
            (0..100).map(|i| 10.0 + i as f64).collect(),
            (0..100).map(|i| -200.0 + i as f64).collect(),
        );
        assert_abs_diff_eq!(roc(&sample).auc, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn roc_endpoints_and_monotonicity() {
        let mut rng = RngStream::new(8, 0).rng();
        let h0: Vec<f64> = (0..500).map(|_| rng.random::<f64>()).collect();
        let h1: Vec<f64> = (0..500).map(|_| rng.random::<f64>() + 0.5).collect();
        let sample = StatisticSample::from_raw(StatKind::Wgplrt, h0, h1);
        let curve = roc(&sample);
        assert_eq!(*curve.points.first().unwrap(), (0.0, 0.0));
        assert_eq!(*curve.points.last().unwrap(), (1.0, 1.0));
        for w in curve.points.windows(2) {
            assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
        }
    }

    #[test]
    fn auc_invariant_under_increasing_transforms() {
        let mut rng = RngStream::new(9, 0).rng();
        let h0: Vec<f64> = (0..400).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let h1: Vec<f64> = (0..400).map(|_| rng.random::<f64>() * 2.0 - 0.3).collect();
        let base = StatisticSample::from_raw(StatKind::Wgplrt, h0.clone(), h1.clone());
        let mapped = StatisticSample::from_raw(
            StatKind::Wgplrt,
            h0.iter().map(|&x| x.exp()).collect(),
            h1.iter().map(|&x| x.exp()).collect(),
        );
        assert_abs_diff_eq!(roc(&base).auc, roc(&mapped).auc, epsilon = 1e-12);
    }

    #[test]
    fn channel_transmission_rates() {
        let u = TransitionMatrix::from_error_rates(0.2, 0.3);
        let mut rng = RngStream::new(10, 0).rng();
        let n = 100_000;
        let flips0 = (0..n).filter(|_| u.transmit(0, &mut rng) == 1).count() as f64 / n as f64;
        let flips1 = (0..n).filter(|_| u.transmit(1, &mut rng) == 0).count() as f64 / n as f64;
        assert_abs_diff_eq!(flips0, 0.2, epsilon = 0.01);
        assert_abs_diff_eq!(flips1, 0.3, epsilon = 0.01);
    }
}
