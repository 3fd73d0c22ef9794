//! Derivative-free variational-inference machinery shared by the coarse
//! trajectory search and the corridor builder.
//!
//! Each update draws Gaussian perturbations around a mean, scores them,
//! turns the scores into exponentiated-cost weights and re-fits the Gaussian
//! by weighted moments. The covariance is kept fixed in the planner; the
//! weighted covariance is still provided here.

pub mod projection;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_dim, Error, Result};

pub use projection::ProjectionOperator;

/// Gaussian search distribution `N(mean, covariance)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl GaussianPolicy {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        check_dim("covariance rows", mean.len(), covariance.nrows())?;
        check_dim("covariance columns", mean.len(), covariance.ncols())?;
        Ok(GaussianPolicy { mean, covariance })
    }

    pub fn diagonal(mean: DVector<f64>, variances: &[f64]) -> Result<Self> {
        check_dim("variances", mean.len(), variances.len())?;
        let cov = DMatrix::from_diagonal(&DVector::from_column_slice(variances));
        Self::new(mean, cov)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// A factor `L` with `L L^T = covariance`, checking symmetry and PSD.
    fn factor(&self) -> Result<DMatrix<f64>> {
        let cov = &self.covariance;
        let scale = cov.amax().max(1.0);
        if (cov - cov.transpose()).amax() > 1e-12 * scale {
            return Err(Error::InvalidArgument("covariance is not symmetric".into()));
        }
        if cov.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("covariance has non-finite entries".into()));
        }
        let is_diagonal = (0..cov.nrows())
            .all(|i| (0..cov.ncols()).all(|j| i == j || cov[(i, j)] == 0.0));
        if is_diagonal {
            let mut l = DMatrix::zeros(cov.nrows(), cov.ncols());
            for i in 0..cov.nrows() {
                if cov[(i, i)] < 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "covariance diagonal entry {i} is negative"
                    )));
                }
                l[(i, i)] = cov[(i, i)].sqrt();
            }
            return Ok(l);
        }
        let eig = cov.clone().symmetric_eigen();
        if eig.eigenvalues.iter().any(|&l| l < -1e-12 * scale) {
            return Err(Error::InvalidArgument(
                "covariance is not positive semidefinite".into(),
            ));
        }
        let sqrt = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        Ok(&eig.eigenvectors * DMatrix::from_diagonal(&sqrt))
    }
}

/// Samples with normalized weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSamples {
    samples: Vec<DVector<f64>>,
    weights: Vec<f64>,
}

impl WeightedSamples {
    pub fn new(samples: Vec<DVector<f64>>, weights: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("need at least one sample".into()));
        }
        check_dim("weights", samples.len(), weights.len())?;
        let d = samples[0].len();
        if samples.iter().any(|s| s.len() != d) {
            return Err(Error::InvalidArgument("samples have mixed dimensions".into()));
        }
        if weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::InvalidArgument("weights must be non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "weights must sum to one, got {total}"
            )));
        }
        Ok(WeightedSamples { samples, weights })
    }

    pub fn samples(&self) -> &[DVector<f64>] {
        &self.samples
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.samples[0].len()
    }
}

/// Splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for one sample, keyed by `(seed, stream, index)` so that the
/// draw does not depend on which worker evaluates it.
pub fn keyed_rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    let key = mix(mix(mix(seed) ^ stream) ^ index);
    ChaCha8Rng::seed_from_u64(key)
}

/// Folds several loop counters into one stream id.
pub fn stream_id(parts: &[u64]) -> u64 {
    parts.iter().fold(0x5EED, |acc, &p| mix(acc ^ p))
}

/// Fills `out` with independent standard normal draws.
pub(crate) fn fill_standard_normal(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    for v in out {
        *v = StandardNormal.sample(rng);
    }
}

/// Draws `count` samples `mean + eps` with `eps ~ N(0, covariance)`.
/// Sample `i` depends only on `(seed, i)`.
pub fn sample_perturbations(
    policy: &GaussianPolicy,
    count: usize,
    seed: u64,
) -> Result<Vec<DVector<f64>>> {
    if count == 0 {
        return Err(Error::InvalidArgument("sample count must be at least 1".into()));
    }
    let factor = policy.factor()?;
    let d = policy.dim();
    let mut z = vec![0.0; d];
    Ok((0..count)
        .map(|i| {
            let mut rng = keyed_rng(seed, 0, i as u64);
            fill_standard_normal(&mut rng, &mut z);
            &policy.mean + &factor * DVector::from_column_slice(&z)
        })
        .collect())
}

/// Normalized weights `exp(-gamma (J_i - min J))`. Infinite costs get
/// exactly zero weight.
pub fn softmax_weights(costs: &[f64], gamma: f64) -> Result<Vec<f64>> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "inverse temperature must be positive, got {gamma}"
        )));
    }
    if costs.iter().any(|c| c.is_nan()) {
        return Err(Error::InvalidArgument("cost is NaN".into()));
    }
    let baseline = costs.iter().copied().fold(f64::INFINITY, f64::min);
    if !baseline.is_finite() {
        if baseline == f64::NEG_INFINITY {
            return Err(Error::InvalidArgument("cost is -inf".into()));
        }
        return Err(Error::NoFeasibleSample {
            context: format!("{} samples", costs.len()),
        });
    }
    let mut weights: Vec<f64> = costs
        .iter()
        .map(|&c| {
            if c.is_finite() {
                (-gamma * (c - baseline)).exp()
            } else {
                0.0
            }
        })
        .collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(weights)
}

/// `sum_i w_i theta_i`.
pub fn weighted_mean(ws: &WeightedSamples) -> DVector<f64> {
    let mut mean = DVector::zeros(ws.dim());
    for (s, &w) in ws.samples.iter().zip(&ws.weights) {
        if w != 0.0 {
            mean.axpy(w, s, 1.0);
        }
    }
    mean
}

/// `sum_i w_i (theta_i - mean)(theta_i - mean)^T`.
pub fn weighted_covariance(ws: &WeightedSamples, mean: &DVector<f64>) -> Result<DMatrix<f64>> {
    check_dim("mean", ws.dim(), mean.len())?;
    let d = ws.dim();
    let mut cov = DMatrix::zeros(d, d);
    for (s, &w) in ws.samples.iter().zip(&ws.weights) {
        let dev = s - mean;
        cov.ger(w, &dev, &dev, 1.0);
    }
    // exact symmetry
    for i in 0..d {
        for j in 0..i {
            let avg = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = avg;
            cov[(j, i)] = avg;
        }
    }
    Ok(cov)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn zero_covariance_returns_mean() {
        let mean = DVector::from_column_slice(&[1.0, -2.0]);
        let policy = GaussianPolicy::diagonal(mean.clone(), &[0.0, 0.0]).unwrap();
        let samples = sample_perturbations(&policy, 10, 1).unwrap();
        assert!(samples.iter().all(|s| s == &mean));
    }

    #[test]
    fn sampling_is_deterministic() {
        let policy = GaussianPolicy::diagonal(DVector::zeros(3), &[1.0, 2.0, 3.0]).unwrap();
        let a = sample_perturbations(&policy, 20, 42).unwrap();
        let b = sample_perturbations(&policy, 20, 42).unwrap();
        assert_eq!(a, b);
        let c = sample_perturbations(&policy, 20, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn empirical_variance_matches() {
        let policy = GaussianPolicy::diagonal(DVector::zeros(2), &[1.0, 4.0]).unwrap();
        let samples = sample_perturbations(&policy, 50_000, 9).unwrap();
        for (axis, var) in [(0, 1.0), (1, 4.0)] {
            let n = samples.len() as f64;
            let m = samples.iter().map(|s| s[axis]).sum::<f64>() / n;
            let v = samples.iter().map(|s| (s[axis] - m).powi(2)).sum::<f64>() / (n - 1.0);
            assert!(v > 0.95 * var && v < 1.05 * var, "axis {axis}: {v}");
        }
    }

    #[test]
    fn full_covariance_sampling() {
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.8, 0.8, 1.0]);
        let policy = GaussianPolicy::new(DVector::zeros(2), cov.clone()).unwrap();
        let samples = sample_perturbations(&policy, 40_000, 5).unwrap();
        let n = samples.len() as f64;
        let cxy = samples.iter().map(|s| s[0] * s[1]).sum::<f64>() / n;
        assert!((cxy - 0.8).abs() < 0.05);
        let bad = GaussianPolicy::new(
            DVector::zeros(2),
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]),
        )
        .unwrap();
        assert!(matches!(sample_perturbations(&bad, 3, 0), Err(Error::InvalidArgument(_))));
        let neg = GaussianPolicy::diagonal(DVector::zeros(1), &[-1.0]).unwrap();
        assert!(sample_perturbations(&neg, 3, 0).is_err());
        assert!(sample_perturbations(&policy, 0, 0).is_err());
    }

    #[test]
    fn softmax_examples() {
        let w = softmax_weights(&[5.0, 5.0, 5.0], 3.7).unwrap();
        assert!(w.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-15));
        let w = softmax_weights(&[0.0, 2f64.ln()], 1.0).unwrap();
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-15 && (w[1] - 1.0 / 3.0).abs() < 1e-15);
        let w = softmax_weights(&[0.0, 2f64.ln(), f64::INFINITY], 1.0).unwrap();
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(w[2], 0.0);
        assert!(matches!(
            softmax_weights(&[f64::INFINITY; 3], 1.0),
            Err(Error::NoFeasibleSample { .. })
        ));
        assert!(softmax_weights(&[1.0], 0.0).is_err());
    }

    #[test]
    fn weighted_moments() {
        let one = WeightedSamples::new(vec![DVector::from_column_slice(&[3.0, 4.0])], vec![1.0]).unwrap();
        assert_eq!(weighted_mean(&one), DVector::from_column_slice(&[3.0, 4.0]));

        let s = |x: f64| DVector::from_column_slice(&[x]);
        let ws = WeightedSamples::new(vec![s(0.0), s(2.0)], vec![0.5, 0.5]).unwrap();
        assert_eq!(weighted_mean(&ws)[0], 1.0);
        let ws = WeightedSamples::new(vec![s(0.0), s(3.0)], vec![2.0 / 3.0, 1.0 / 3.0]).unwrap();
        assert!((weighted_mean(&ws)[0] - 1.0).abs() < 1e-15);

        let same = WeightedSamples::new(vec![s(2.0), s(2.0)], vec![0.3, 0.7]).unwrap();
        assert_eq!(weighted_covariance(&same, &weighted_mean(&same)).unwrap()[(0, 0)], 0.0);
        let sym = WeightedSamples::new(vec![s(-1.0), s(1.0)], vec![0.5, 0.5]).unwrap();
        assert_eq!(weighted_covariance(&sym, &s(0.0)).unwrap()[(0, 0)], 1.0);
        assert!(weighted_covariance(&sym, &DVector::zeros(2)).is_err());
        assert!(WeightedSamples::new(vec![s(1.0)], vec![0.5]).is_err());
        assert!(WeightedSamples::new(vec![], vec![]).is_err());
    }

    #[test]
    fn covariance_matches_two_pass_oracle() {
        let mut rng = keyed_rng(11, 0, 0);
        let samples: Vec<DVector<f64>> = (0..25)
            .map(|_| DVector::from_fn(3, |_, _| rng.random_range(-2.0..2.0)))
            .collect();
        let raw: Vec<f64> = (0..25).map(|_| rng.random_range(0.0..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let ws = WeightedSamples::new(samples.clone(), weights.clone()).unwrap();
        let mean = weighted_mean(&ws);
        let cov = weighted_covariance(&ws, &mean).unwrap();
        // oracle: explicit nested loops
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = 0.0;
                for (s, w) in samples.iter().zip(&weights) {
                    acc += w * (s[i] - mean[i]) * (s[j] - mean[j]);
                }
                assert!((cov[(i, j)] - acc).abs() < 1e-12);
            }
        }
        let eig = cov.symmetric_eigen();
        assert!(eig.eigenvalues.iter().all(|&l| l > -1e-12));
    }

    #[test]
    fn mean_of_box_samples_stays_in_box() {
        let mut rng = keyed_rng(2, 0, 0);
        for _ in 0..100 {
            let samples: Vec<DVector<f64>> = (0..10)
                .map(|_| DVector::from_fn(2, |i, _| if i == 0 { rng.random_range(0.0..1.5) } else { rng.random_range(-1.5..1.5) }))
                .collect();
            let costs: Vec<f64> = (0..10).map(|_| rng.random_range(0.0..5.0)).collect();
            let w = softmax_weights(&costs, 2.0).unwrap();
            let m = weighted_mean(&WeightedSamples::new(samples, w).unwrap());
            assert!(m[0] >= 0.0 && m[0] <= 1.5 && m[1].abs() <= 1.5);
        }
    }

    proptest! {
        #[test]
        fn softmax_normalizes_and_is_shift_invariant(
            costs in prop::collection::vec(-50.0..50.0f64, 1..40),
            shift in -1e3..1e3f64,
            gamma in 0.01..100.0f64,
        ) {
            let w = softmax_weights(&costs, gamma).unwrap();
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            // integer shifts are exactly representable in the subtraction
            let shift = shift.round();
            let shifted: Vec<f64> = costs.iter().map(|c| c + shift).collect();
            let ws = softmax_weights(&shifted, gamma).unwrap();
            for (a, b) in w.iter().zip(&ws) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn softmax_is_permutation_equivariant(costs in prop::collection::vec(-10.0..10.0f64, 2..20)) {
            let w = softmax_weights(&costs, 1.3).unwrap();
            let mut rev = costs.clone();
            rev.reverse();
            let mut wr = softmax_weights(&rev, 1.3).unwrap();
            wr.reverse();
            for (a, b) in w.iter().zip(&wr) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
