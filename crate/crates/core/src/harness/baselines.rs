//! Comparison baselines: GP regression on the true latent values (the
//! oracle) and a cross-validated k-nearest-neighbor vote on the decisions.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::field::Loc;
use crate::kernel::CovKernel;
use crate::mvn::chol_with_jitter;
use crate::rng::RngStream;

/// GP-regression predictor from sensor locations to query points, built
/// once per scene. Conditioning is noise-free: the oracle sees the latent
/// field itself.
pub struct OracleBaseline {
    /// Query × sensor weight matrix `C(x*, X) C(X, X)⁻¹`.
    weights: DMatrix<f64>,
    mean: f64,
    c: f64,
}

impl OracleBaseline {
    pub fn new(
        sensors: &[Loc],
        query: &[Loc],
        kernel: &CovKernel,
        mean: f64,
        c: f64,
    ) -> Result<Self> {
        let gram = kernel.gram_points(sensors);
        let (chol, _) = chol_with_jitter(&gram)?;
        let cross = kernel.cross_points(query, sensors);
        // weights = cross · K⁻¹, via K⁻¹ crossᵀ one column at a time.
        let mut weights = DMatrix::zeros(query.len(), sensors.len());
        for q in 0..query.len() {
            let rhs = cross.row(q).transpose();
            let y = chol.solve_lower_triangular(&rhs).expect("positive diagonal");
            let w = chol.tr_solve_lower_triangular(&y).expect("positive diagonal");
            weights.set_row(q, &w.transpose());
        }
        Ok(Self { weights, mean, c })
    }

    /// Conditional mean of the latent field at the query points.
    pub fn regress(&self, g_sensors: &[f64]) -> Vec<f64> {
        let centered = DVector::from_row_slice(g_sensors).add_scalar(-self.mean);
        let g = &self.weights * centered;
        g.iter().map(|v| v + self.mean).collect()
    }

    pub fn predict(&self, g_sensors: &[f64]) -> Vec<u8> {
        self.regress(g_sensors).iter().map(|&g| u8::from(g >= self.c)).collect()
    }
}

/// Neighbor orderings precomputed once; votes are then O(k) per point.
pub struct KnnBaseline {
    /// For each sensor, the other sensors ordered by distance.
    sensor_neighbors: Vec<Vec<u32>>,
    /// For each query point, all sensors ordered by distance.
    query_neighbors: Vec<Vec<u32>>,
    /// Fold id per sensor for cross-validation.
    folds: Vec<u8>,
    k_grid: Vec<usize>,
}

const CV_FOLDS: u8 = 5;

impl KnnBaseline {
    pub fn new(sensors: &[Loc], query: &[Loc], k_grid: &[usize], seed: u64) -> Self {
        let order_by_distance = |from: &Loc, skip: Option<usize>| -> Vec<u32> {
            let mut idx: Vec<(f64, u32)> = sensors
                .iter()
                .enumerate()
                .filter(|(i, _)| Some(*i) != skip)
                .map(|(i, s)| {
                    let dx = from[0] - s[0];
                    let dy = from[1] - s[1];
                    (dx * dx + dy * dy, i as u32)
                })
                .collect();
            idx.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            idx.into_iter().map(|(_, i)| i).collect()
        };

        let sensor_neighbors =
            sensors.iter().enumerate().map(|(i, s)| order_by_distance(s, Some(i))).collect();
        let query_neighbors = query.iter().map(|q| order_by_distance(q, None)).collect();

        // Deterministic fold assignment from a shuffled index list.
        let mut rng = RngStream::new(seed, 0).substream(0x6b6e6e).rng();
        let mut perm: Vec<usize> = (0..sensors.len()).collect();
        for i in (1..perm.len()).rev() {
            let j = rand::Rng::random_range(&mut rng, 0..=i);
            perm.swap(i, j);
        }
        let mut folds = vec![0u8; sensors.len()];
        for (pos, &s) in perm.iter().enumerate() {
            folds[s] = (pos % CV_FOLDS as usize) as u8;
        }

        Self { sensor_neighbors, query_neighbors, folds, k_grid: k_grid.to_vec() }
    }

    /// Plurality vote among the first `k` usable neighbors; ties to 1.
    fn vote(neighbors: &[u32], decisions: &[u8], k: usize, excluded_fold: Option<(u8, &[u8])>) -> u8 {
        let mut ones = 0usize;
        let mut seen = 0usize;
        for &n in neighbors {
            if let Some((fold, folds)) = excluded_fold {
                if folds[n as usize] == fold {
                    continue;
                }
            }
            ones += decisions[n as usize] as usize;
            seen += 1;
            if seen == k {
                break;
            }
        }
        u8::from(2 * ones >= seen.max(1))
    }

    /// Choose `k` by 5-fold cross-validation on the sensor decisions.
    pub fn select_k(&self, decisions: &[u8]) -> usize {
        let mut best = (usize::MAX, self.k_grid[0]);
        for &k in &self.k_grid {
            let mut errors = 0usize;
            for (s, neighbors) in self.sensor_neighbors.iter().enumerate() {
                let fold = self.folds[s];
                let pred = Self::vote(neighbors, decisions, k, Some((fold, &self.folds)));
                errors += usize::from(pred != decisions[s]);
            }
            if errors < best.0 {
                best = (errors, k);
            }
        }
        best.1
    }

    pub fn predict_with_k(&self, decisions: &[u8], k: usize) -> Vec<u8> {
        self.query_neighbors
            .iter()
            .map(|nb| Self::vote(nb, decisions, k, None))
            .collect()
    }

    pub fn predict(&self, decisions: &[u8]) -> (usize, Vec<u8>) {
        let k = self.select_k(decisions);
        (k, self.predict_with_k(decisions, k))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn oracle_interpolates_at_sensor_locations() {
        let kernel = CovKernel::squared_exponential(1.0, 0.7).unwrap();
        let sensors = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let oracle = OracleBaseline::new(&sensors, &sensors, &kernel, 0.0, 0.2).unwrap();
        let g = [0.5, -0.4, 1.1];
        let fitted = oracle.regress(&g);
        for (got, want) in fitted.iter().zip(&g) {
            assert_abs_diff_eq!(got, want, epsilon = 1e-4);
        }
        let pred = oracle.predict(&g);
        assert_eq!(pred, vec![1, 0, 1]);
    }

    #[test]
    fn oracle_regression_matches_hand_rolled_conditional_mean() {
        let kernel = CovKernel::matern52(1.0, 0.9).unwrap();
        let sensors = [[0.0, 0.0], [1.0, 0.3], [-0.5, 0.8], [0.4, -0.7]];
        let query = [[0.2, 0.2]];
        let oracle = OracleBaseline::new(&sensors, &query, &kernel, 0.5, 0.0).unwrap();
        let g = [0.9, -0.1, 0.3, 0.7];

        let gram = kernel.gram_points(&sensors);
        let k_star = DVector::from_fn(4, |i, _| kernel.eval(&query[0], &sensors[i]));
        let centered = DVector::from_row_slice(&g).add_scalar(-0.5);
        let expected = 0.5 + k_star.dot(&gram.cholesky().unwrap().solve(&centered));
        assert_abs_diff_eq!(oracle.regress(&g)[0], expected, epsilon = 1e-10);
    }

    #[test]
    fn oracle_with_vanishing_correlation_returns_the_mean() {
        let kernel = CovKernel::squared_exponential(1.0, 1e-6).unwrap();
        let sensors = [[0.0, 0.0], [1.0, 0.0]];
        let query = [[0.5, 0.5]];
        let oracle = OracleBaseline::new(&sensors, &query, &kernel, 0.3, 0.0).unwrap();
        assert_abs_diff_eq!(oracle.regress(&[5.0, -5.0])[0], 0.3, epsilon = 1e-9);
    }

    #[test]
    fn knn_with_k1_copies_the_nearest_decision() {
        let sensors = [[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]];
        let query = [[0.1, 0.0], [1.9, 0.1]];
        let knn = KnnBaseline::new(&sensors, &query, &[1], 1);
        let pred = knn.predict_with_k(&[1, 0, 1], 1);
        assert_eq!(pred, vec![1, 0]);
    }

    #[test]
    fn knn_constant_decisions_predict_constant() {
        let sensors: Vec<Loc> = (0..20).map(|i| [i as f64, (i * 7 % 5) as f64]).collect();
        let query = [[0.5, 0.5], [10.0, 2.0]];
        let knn = KnnBaseline::new(&sensors, &query, &[1, 3, 5], 1);
        let (_, pred) = knn.predict(&vec![1u8; 20]);
        assert_eq!(pred, vec![1, 1]);
    }

    #[test]
    fn knn_cross_validation_prefers_small_k_on_checkerboard() {
        // Tight clusters of identical labels: k = 1 classifies perfectly,
        // larger k mixes clusters.
        let mut sensors = Vec::new();
        let mut decisions = Vec::new();
        for cluster in 0..8 {
            let cx = (cluster % 4) as f64 * 3.0;
            let cy = (cluster / 4) as f64 * 3.0;
            let label = (cluster % 2) as u8;
            for j in 0..4 {
                sensors.push([cx + 0.01 * j as f64, cy]);
                decisions.push(label);
            }
        }
        let knn = KnnBaseline::new(&sensors, &sensors, &[1, 3, 5, 7, 9, 11, 13, 15], 3);
        let k = knn.select_k(&decisions);
        assert!(k <= 3, "expected a small k, got {k}");
    }
}
