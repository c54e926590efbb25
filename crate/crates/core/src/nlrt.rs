//! Likelihood-ratio test for integral sensors.
//!
//! No closed form exists for the marginal likelihood of integral
//! observations, so the test is rejection-sampling based: draw `J` synthetic
//! observation vectors under each hypothesis, keep the ones whose summary
//! statistic lands within `δ` of the observation's, and use the smoothed
//! ratio of acceptance counts as the likelihood ratio.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{IntegralSampler, SensorScene};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Moment {
    Mean,
    Variance,
    Skewness,
    Kurtosis,
}

/// Summary statistic `S: ℝᴷ → ℝˡ` applied to every observation vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummaryStat {
    Acf { lags: Vec<usize> },
    Moments { which: Vec<Moment> },
    Concat(Vec<SummaryStat>),
}

impl SummaryStat {
    pub fn dim(&self) -> usize {
        match self {
            SummaryStat::Acf { lags } => lags.len(),
            SummaryStat::Moments { which } => which.len(),
            SummaryStat::Concat(parts) => parts.iter().map(SummaryStat::dim).sum(),
        }
    }

    pub fn validate(&self, series_len: usize) -> Result<()> {
        match self {
            SummaryStat::Acf { lags } => {
                if lags.is_empty() {
                    return Err(Error::InvalidConfig("acf needs at least one lag".into()));
                }
                if lags.iter().any(|&l| l == 0 || l >= series_len) {
                    return Err(Error::InvalidConfig(format!(
                        "acf lags must be in 1..{series_len}"
                    )));
                }
                Ok(())
            }
            SummaryStat::Moments { which } => {
                if which.is_empty() {
                    return Err(Error::InvalidConfig("moments list is empty".into()));
                }
                Ok(())
            }
            SummaryStat::Concat(parts) => {
                if parts.is_empty() {
                    return Err(Error::InvalidConfig("concat of no summaries".into()));
                }
                parts.iter().try_for_each(|p| p.validate(series_len))
            }
        }
    }

    pub fn compute(&self, z: &[f64]) -> Vec<f64> {
        match self {
            SummaryStat::Acf { lags } => summary_acf(z, lags),
            SummaryStat::Moments { which } => summary_moments(z, which),
            SummaryStat::Concat(parts) => parts.iter().flat_map(|p| p.compute(z)).collect(),
        }
    }
}

/// Sample autocorrelations at the given lags. A constant series has a zero
/// denominator and returns the all-zero vector.
pub fn summary_acf(z: &[f64], lags: &[usize]) -> Vec<f64> {
    let k = z.len();
    let mean = z.iter().sum::<f64>() / k as f64;
    let denom: f64 = z.iter().map(|v| (v - mean) * (v - mean)).sum();
    if denom == 0.0 {
        return vec![0.0; lags.len()];
    }
    lags.iter()
        .map(|&lag| {
            debug_assert!(lag < k);
            let num: f64 =
                (0..k - lag).map(|i| (z[i] - mean) * (z[i + lag] - mean)).sum();
            num / denom
        })
        .collect()
}

fn summary_moments(z: &[f64], which: &[Moment]) -> Vec<f64> {
    let k = z.len() as f64;
    let mean = z.iter().sum::<f64>() / k;
    let m2 = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / k;
    let m3 = z.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / k;
    let m4 = z.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / k;
    which
        .iter()
        .map(|m| match m {
            Moment::Mean => mean,
            Moment::Variance => m2,
            Moment::Skewness => {
                if m2 > 0.0 {
                    m3 / m2.powf(1.5)
                } else {
                    0.0
                }
            }
            Moment::Kurtosis => {
                if m2 > 0.0 {
                    m4 / (m2 * m2)
                } else {
                    0.0
                }
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distance {
    #[default]
    Euclidean,
}

impl Distance {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Distance::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
        }
    }
}

/// Generation metadata kept with a bank so artifacts can be keyed and
/// reproduced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankMeta {
    pub j: usize,
    pub hypothesis: usize,
    pub stream: RngStream,
}

/// The summary vectors of `J` synthetic draws under one hypothesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBank {
    pub summaries: Vec<Vec<f64>>,
    pub meta: BankMeta,
}

impl SampleBank {
    pub fn len(&self) -> usize {
        self.summaries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.summaries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.summaries.first().map_or(0, Vec::len)
    }
}

/// Draw `J` synthetic integral observations with a prepared sampler and
/// reduce each to its summary. Draw `j` consumes `stream.substream(j)` only.
pub fn build_bank_with(
    sampler: &IntegralSampler,
    hypothesis: usize,
    j: usize,
    summary: &SummaryStat,
    stream: &RngStream,
) -> Result<SampleBank> {
    if j == 0 {
        return Err(Error::InvalidConfig("bank size must be >= 1".into()));
    }
    summary.validate(sampler.k_intervals())?;
    let summaries: Vec<Vec<f64>> = (0..j)
        .into_par_iter()
        .map(|idx| summary.compute(&sampler.draw_stream(&stream.substream(idx as u64))))
        .collect();
    Ok(SampleBank { summaries, meta: BankMeta { j, hypothesis, stream: *stream } })
}

/// Scene-level convenience: builds the hypothesis sampler, then the bank.
pub fn build_bank(
    scene: &SensorScene,
    hypothesis: usize,
    j: usize,
    summary: &SummaryStat,
    stream: &RngStream,
) -> Result<SampleBank> {
    let model = if hypothesis == 0 { &scene.h0 } else { &scene.h1 };
    let sampler = IntegralSampler::new(
        model,
        scene.k_intervals,
        scene.horizon,
        scene.sigma_i,
        scene.quad_substeps,
    )?;
    build_bank_with(&sampler, hypothesis, j, summary, stream)
}

/// Acceptance counts of both banks within `delta` of the observed summary.
pub fn acceptance_counts(
    bank0: &SampleBank,
    bank1: &SampleBank,
    s_obs: &[f64],
    distance: Distance,
    delta: f64,
) -> (usize, usize) {
    let count = |bank: &SampleBank| {
        bank.summaries.iter().filter(|s| distance.eval(s, s_obs) <= delta).count()
    };
    (count(bank0), count(bank1))
}

/// The smoothed count ratio `(n_H0 + ε) / (n_H1 + ε)`.
pub fn nlrt_statistic(
    bank0: &SampleBank,
    bank1: &SampleBank,
    s_obs: &[f64],
    distance: Distance,
    delta: f64,
    epsilon: f64,
) -> Result<f64> {
    if bank0.dim() != s_obs.len() || bank1.dim() != s_obs.len() {
        return Err(Error::DimensionMismatch { expected: bank0.dim(), got: s_obs.len() });
    }
    assert!(delta > 0.0 && epsilon > 0.0, "delta and epsilon must be positive");
    let (n0, n1) = acceptance_counts(bank0, bank1, s_obs, distance, delta);
    Ok((n0 as f64 + epsilon) / (n1 as f64 + epsilon))
}

/// Reject H0 (decide 1) iff the statistic falls below γᴵ; ties keep the null.
pub fn nlrt_decide(statistic: f64, gamma_i: f64) -> u8 {
    u8::from(statistic < gamma_i)
}

/// A ready-to-run test: both banks plus the acceptance parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NlrtTest {
    pub bank0: SampleBank,
    pub bank1: SampleBank,
    pub summary: SummaryStat,
    pub distance: Distance,
    pub delta: f64,
    pub epsilon: f64,
    /// z-score summaries by pooled bank statistics before distances are
    /// taken; off by default (raw ACF summaries share a scale already).
    pub standardize: bool,
    scaler: Option<(Vec<f64>, Vec<f64>)>,
}

impl NlrtTest {
    pub fn new(
        bank0: SampleBank,
        bank1: SampleBank,
        summary: SummaryStat,
        distance: Distance,
        delta: f64,
        epsilon: f64,
        standardize: bool,
    ) -> Result<Self> {
        if bank0.dim() != summary.dim() || bank1.dim() != summary.dim() {
            return Err(Error::DimensionMismatch { expected: summary.dim(), got: bank0.dim() });
        }
        if !(delta > 0.0) {
            return Err(Error::NonPositiveParameter { name: "delta", value: delta });
        }
        if !(epsilon > 0.0) {
            return Err(Error::NonPositiveParameter { name: "epsilon", value: epsilon });
        }
        let mut test = Self {
            bank0,
            bank1,
            summary,
            distance,
            delta,
            epsilon,
            standardize,
            scaler: None,
        };
        if standardize {
            let scaler = pooled_scaler(&test.bank0, &test.bank1);
            for bank in [&mut test.bank0, &mut test.bank1] {
                for s in &mut bank.summaries {
                    apply_scaler(&scaler, s);
                }
            }
            test.scaler = Some(scaler);
        }
        Ok(test)
    }

    /// Statistic for a raw observation vector.
    pub fn statistic(&self, z: &[f64]) -> Result<f64> {
        let mut s = self.summary.compute(z);
        if let Some(scaler) = &self.scaler {
            apply_scaler(scaler, &mut s);
        }
        nlrt_statistic(&self.bank0, &self.bank1, &s, self.distance, self.delta, self.epsilon)
    }
}

fn pooled_scaler(bank0: &SampleBank, bank1: &SampleBank) -> (Vec<f64>, Vec<f64>) {
    let dim = bank0.dim();
    let n = (bank0.len() + bank1.len()) as f64;
    let mut mean = vec![0.0; dim];
    for s in bank0.summaries.iter().chain(&bank1.summaries) {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v / n;
        }
    }
    let mut var = vec![0.0; dim];
    for s in bank0.summaries.iter().chain(&bank1.summaries) {
        for ((v, m), x) in var.iter_mut().zip(&mean).zip(s) {
            *v += (x - m) * (x - m) / n;
        }
    }
    let std = var.into_iter().map(|v| if v > 0.0 { v.sqrt() } else { 1.0 }).collect();
    (mean, std)
}

fn apply_scaler(scaler: &(Vec<f64>, Vec<f64>), s: &mut [f64]) {
    for ((x, m), sd) in s.iter_mut().zip(&scaler.0).zip(&scaler.1) {
        *x = (*x - m) / sd;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::TemporalModel;
    use crate::kernel::CovKernel;
    use crate::warp::WarpSpec;
    use approx::assert_abs_diff_eq;

    #[test]
    fn acf_of_constant_series_is_zero() {
        assert_eq!(summary_acf(&[2.0; 10], &[1, 2]), vec![0.0, 0.0]);
    }

    #[test]
    fn acf_of_alternating_series_is_near_minus_one() {
        let z: Vec<f64> = (0..50).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let rho = summary_acf(&z, &[1])[0];
        // Direct evaluation: 49 products of −1 over a denominator of 50.
        assert_abs_diff_eq!(rho, -49.0 / 50.0, epsilon = 1e-12);
    }

    #[test]
    fn acf_of_white_noise_stays_in_bartlett_band() {
        let mut rng = RngStream::new(4, 0).rng();
        let mut inside = 0;
        let trials = 1000;
        for _ in 0..trials {
            let z: Vec<f64> = (0..50)
                .map(|_| rand::Rng::sample::<f64, _>(&mut rng, rand_distr::StandardNormal))
                .collect();
            if summary_acf(&z, &[1])[0].abs() <= 3.0 / 50.0_f64.sqrt() {
                inside += 1;
            }
        }
        assert!(inside >= 950, "only {inside}/{trials} inside the band");
    }

    #[test]
    fn moments_of_simple_series() {
        let s = summary_moments(
            &[1.0, 2.0, 3.0, 4.0],
            &[Moment::Mean, Moment::Variance, Moment::Skewness, Moment::Kurtosis],
        );
        assert_abs_diff_eq!(s[0], 2.5, epsilon = 1e-15);
        assert_abs_diff_eq!(s[1], 1.25, epsilon = 1e-15);
        assert_abs_diff_eq!(s[2], 0.0, epsilon = 1e-14);
    }

    fn test_sampler(matern52: bool) -> IntegralSampler {
        let kernel = if matern52 {
            CovKernel::matern52(1.0, 1.0).unwrap()
        } else {
            CovKernel::matern12(1.0, 1.0).unwrap()
        };
        let model = TemporalModel::new(kernel, WarpSpec::Identity).unwrap();
        IntegralSampler::new(&model, 10, 8.0, 0.1, 8).unwrap()
    }

    #[test]
    fn bank_has_requested_size_and_is_deterministic() {
        let sampler = test_sampler(false);
        let summary = SummaryStat::Acf { lags: vec![1, 2] };
        let stream = RngStream::new(1, 7);
        let bank = build_bank_with(&sampler, 0, 1, &summary, &stream).unwrap();
        assert_eq!(bank.len(), 1);
        let a = build_bank_with(&sampler, 0, 64, &summary, &stream).unwrap();
        let b = build_bank_with(&sampler, 0, 64, &summary, &stream).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bank_rejects_bad_lags() {
        let sampler = test_sampler(false);
        let summary = SummaryStat::Acf { lags: vec![10] };
        assert!(build_bank_with(&sampler, 0, 4, &summary, &RngStream::new(0, 0)).is_err());
    }

    fn fake_bank(points: &[&[f64]]) -> SampleBank {
        SampleBank {
            summaries: points.iter().map(|p| p.to_vec()).collect(),
            meta: BankMeta { j: points.len(), hypothesis: 0, stream: RngStream::new(0, 0) },
        }
    }

    #[test]
    fn statistic_from_known_counts() {
        let origin = [0.0, 0.0];
        // 100 entries at the origin vs none nearby.
        let near: Vec<Vec<f64>> = (0..100).map(|_| vec![0.0, 0.0]).collect();
        let bank0 = SampleBank {
            summaries: near,
            meta: BankMeta { j: 100, hypothesis: 0, stream: RngStream::new(0, 0) },
        };
        let bank1 = fake_bank(&[&[5.0, 5.0]]);
        let stat =
            nlrt_statistic(&bank0, &bank1, &origin, Distance::Euclidean, 0.1, 0.1).unwrap();
        assert_abs_diff_eq!(stat, 1001.0, epsilon = 1e-12);

        // no acceptances on either side → ε/ε = 1
        let empty0 = fake_bank(&[&[9.0, 9.0]]);
        let empty1 = fake_bank(&[&[-9.0, 9.0]]);
        let stat =
            nlrt_statistic(&empty0, &empty1, &origin, Distance::Euclidean, 0.1, 0.1).unwrap();
        assert_abs_diff_eq!(stat, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn widening_delta_never_loses_acceptances() {
        let sampler = test_sampler(false);
        let summary = SummaryStat::Acf { lags: vec![1, 2, 3, 4] };
        let stream = RngStream::new(3, 0);
        let bank0 = build_bank_with(&sampler, 0, 200, &summary, &stream.substream(0)).unwrap();
        let bank1 = build_bank_with(&sampler, 1, 200, &summary, &stream.substream(1)).unwrap();
        let obs = summary.compute(&sampler.draw_stream(&stream.substream(2)));
        let mut prev = (0, 0);
        for delta in [0.01, 0.05, 0.1, 0.3, 1.0] {
            let counts = acceptance_counts(&bank0, &bank1, &obs, Distance::Euclidean, delta);
            assert!(counts.0 >= prev.0 && counts.1 >= prev.1);
            prev = counts;
        }
    }

    #[test]
    fn swapping_banks_inverts_the_count_ratio() {
        let bank0 = fake_bank(&[&[0.0], &[0.05], &[2.0]]);
        let bank1 = fake_bank(&[&[0.01]]);
        let obs = [0.0];
        let (n0, n1) = acceptance_counts(&bank0, &bank1, &obs, Distance::Euclidean, 0.1);
        let fwd = nlrt_statistic(&bank0, &bank1, &obs, Distance::Euclidean, 0.1, 0.1).unwrap();
        let rev = nlrt_statistic(&bank1, &bank0, &obs, Distance::Euclidean, 0.1, 0.1).unwrap();
        assert_abs_diff_eq!(fwd, (n0 as f64 + 0.1) / (n1 as f64 + 0.1), epsilon = 1e-15);
        assert_abs_diff_eq!(rev, (n1 as f64 + 0.1) / (n0 as f64 + 0.1), epsilon = 1e-15);
    }

    #[test]
    fn discriminates_the_experiment_hypotheses() {
        // Matern-1/2 vs Matern-5/2 paths, same warp: H0 draws should score
        // higher (more H0-like) on average than H1 draws.
        let s0 = test_sampler(false);
        let s1 = test_sampler(true);
        let summary = SummaryStat::Acf { lags: vec![1, 2, 3, 4] };
        let root = RngStream::new(11, 0);
        let bank0 = build_bank_with(&s0, 0, 2000, &summary, &root.substream(0)).unwrap();
        let bank1 = build_bank_with(&s1, 1, 2000, &summary, &root.substream(1)).unwrap();
        let test = NlrtTest::new(
            bank0,
            bank1,
            summary,
            Distance::Euclidean,
            0.1,
            0.1,
            false,
        )
        .unwrap();

        let mean_stat = |sampler: &IntegralSampler, base: &RngStream| {
            let n = 200;
            let mut acc = 0.0;
            for i in 0..n {
                let z = sampler.draw_stream(&base.substream(i as u64));
                acc += test.statistic(&z).unwrap().ln();
            }
            acc / n as f64
        };
        let under_h0 = mean_stat(&s0, &root.substream(2));
        let under_h1 = mean_stat(&s1, &root.substream(3));
        assert!(
            under_h0 > under_h1,
            "mean log statistic under H0 ({under_h0}) should exceed H1 ({under_h1})"
        );
    }

    #[test]
    fn decide_ties_keep_the_null() {
        let gamma = (-0.4659_f64).exp();
        assert_eq!(nlrt_decide(gamma, gamma), 0);
        assert_eq!(nlrt_decide(0.0, gamma), 1);
        assert_eq!(nlrt_decide(gamma * 0.999, gamma), 1);
    }
}
