//! Gaussian mixture priors and their closed-form conditioning.
//!
//! The mixture is both the data prior and the representation of every
//! exact posterior in the crate: conditioning a mixture on a linear
//! Gaussian observation y = A x + ε yields another mixture whose weights
//! are responsibilities and whose components come from textbook joint
//! Gaussian conditioning.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, sub, Cholesky, Mat};
use crate::scalar::{cast, cast_usize, Scalar};

/// log(Σ exp(v_i)) with max subtraction.
pub fn log_sum_exp<T: Scalar>(values: &[T]) -> T {
    let max = values
        .iter()
        .fold(T::neg_infinity(), |acc, &v| acc.max(v));
    if !max.is_finite() {
        return max;
    }
    let sum: T = values.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

/// log N(x; mean, Σ) given the Cholesky factor of Σ.
pub fn log_normal_density<T: Scalar>(x: &[T], mean: &[T], chol: &Cholesky<T>) -> T {
    let n = cast_usize::<T>(x.len());
    let diff = sub(x, mean);
    let maha = chol.mahalanobis_sq(&diff);
    let two = cast::<T>(2.0);
    -(maha + chol.log_det() + n * (two * T::PI()).ln()) / two
}

#[derive(Debug, Clone)]
pub struct GaussianMixture<T = f64> {
    weights: Vec<T>,
    means: Vec<Vec<T>>,
    covs: Vec<Mat<T>>,
    /// F_k with F_k F_kᵀ = Σ_k, for sampling; equals the Cholesky factor
    /// when Σ_k is positive definite.
    factors: Vec<Mat<T>>,
    /// Present per component iff Σ_k is positive definite.
    chols: Vec<Option<Cholesky<T>>>,
}

impl<T: Scalar> GaussianMixture<T> {
    /// Strict constructor: weights positive and summing to one, all
    /// covariances symmetric positive definite. This is the contract for
    /// data priors.
    pub fn new(weights: Vec<T>, means: Vec<Vec<T>>, covs: Vec<Mat<T>>) -> Result<Self> {
        let gmm = Self::new_psd(weights, means, covs)?;
        if let Some(k) = gmm.chols.iter().position(|c| c.is_none()) {
            return Err(Error::Mixture(format!(
                "component {k} covariance is not positive definite"
            )));
        }
        Ok(gmm)
    }

    /// Relaxed constructor allowing positive *semi*-definite covariances
    /// (exact posteriors degenerate to Dirac components as noise vanishes).
    pub fn new_psd(weights: Vec<T>, means: Vec<Vec<T>>, covs: Vec<Mat<T>>) -> Result<Self> {
        let k = weights.len();
        if k == 0 || means.len() != k || covs.len() != k {
            return Err(Error::Mixture(format!(
                "component counts disagree: {} weights, {} means, {} covs",
                k,
                means.len(),
                covs.len()
            )));
        }
        let n = means[0].len();
        if n == 0 {
            return Err(Error::Mixture("zero-dimensional mixture".into()));
        }
        for (i, m) in means.iter().enumerate() {
            if m.len() != n {
                return Err(Error::dimension(format!("mean of component {i}"), n, m.len()));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::Mixture(format!("non-finite mean in component {i}")));
            }
        }
        for (i, c) in covs.iter().enumerate() {
            if c.rows() != n || c.cols() != n {
                return Err(Error::dimension(format!("cov of component {i}"), n, c.rows()));
            }
            if !c.is_finite() {
                return Err(Error::Mixture(format!("non-finite cov in component {i}")));
            }
            let asym = c.max_abs_asymmetry();
            if asym > cast::<T>(1e-9) {
                return Err(Error::Mixture(format!(
                    "cov of component {i} asymmetric by {asym}"
                )));
            }
        }
        let sum: T = weights.iter().copied().sum();
        if (sum - T::one()).abs() > cast::<T>(1e-12) {
            return Err(Error::Mixture(format!("weights sum to {sum}, not 1")));
        }
        if weights.iter().any(|&w| !(w > T::zero())) {
            return Err(Error::Mixture("weights must be strictly positive".into()));
        }
        let mut factors = Vec::with_capacity(k);
        let mut chols = Vec::with_capacity(k);
        for c in &covs {
            match Cholesky::new(c) {
                Ok(ch) => {
                    factors.push(ch.lower().clone());
                    chols.push(Some(ch));
                }
                Err(_) => {
                    factors.push(crate::linalg::psd_sqrt(c)?);
                    chols.push(None);
                }
            }
        }
        Ok(GaussianMixture {
            weights,
            means,
            covs,
            factors,
            chols,
        })
    }

    pub fn single(mean: Vec<T>, cov: Mat<T>) -> Result<Self> {
        Self::new(vec![T::one()], vec![mean], vec![cov])
    }

    pub fn standard(dim: usize) -> Self {
        Self::single(vec![T::zero(); dim], Mat::eye(dim)).expect("standard normal is valid")
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn component_count(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn mean_of(&self, k: usize) -> &[T] {
        &self.means[k]
    }

    pub fn cov_of(&self, k: usize) -> &Mat<T> {
        &self.covs[k]
    }

    pub fn chol_of(&self, k: usize) -> Option<&Cholesky<T>> {
        self.chols[k].as_ref()
    }

    pub fn is_degenerate(&self) -> bool {
        self.chols.iter().any(|c| c.is_none())
    }

    /// Mixture mean Σ_k w_k μ_k.
    pub fn mean(&self) -> Vec<T> {
        let mut m = vec![T::zero(); self.dim()];
        for (w, mu) in self.weights.iter().zip(&self.means) {
            for (mi, &x) in m.iter_mut().zip(mu) {
                *mi = *mi + *w * x;
            }
        }
        m
    }

    /// Total covariance: Σ w_k Σ_k + Σ w_k (μ_k−μ̄)(μ_k−μ̄)ᵀ.
    pub fn covariance(&self) -> Mat<T> {
        let n = self.dim();
        let mbar = self.mean();
        let mut cov = Mat::zeros(n, n);
        for k in 0..self.component_count() {
            let w = self.weights[k];
            let d = sub(&self.means[k], &mbar);
            for i in 0..n {
                for j in 0..n {
                    cov[(i, j)] = cov[(i, j)] + w * (self.covs[k][(i, j)] + d[i] * d[j]);
                }
            }
        }
        cov
    }

    /// Trace of the total covariance.
    pub fn cov_trace(&self) -> T {
        self.covariance().trace()
    }

    /// Per-component log densities log w_k + log N(x; μ_k, Σ_k).
    ///
    /// Errors if any component is degenerate or the result is non-finite
    /// for a finite input.
    pub fn component_log_densities(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.dim() {
            return Err(Error::dimension("mixture density input", self.dim(), x.len()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("mixture density", "non-finite input point"));
        }
        let mut out = Vec::with_capacity(self.component_count());
        for k in 0..self.component_count() {
            let chol = self.chols[k].as_ref().ok_or_else(|| {
                Error::numeric("mixture density", format!("component {k} is degenerate"))
            })?;
            out.push(self.weights[k].ln() + log_normal_density(x, &self.means[k], chol));
        }
        Ok(out)
    }

    pub fn log_density(&self, x: &[T]) -> Result<T> {
        let lds = self.component_log_densities(x)?;
        let ld = log_sum_exp(&lds);
        if !ld.is_finite() {
            return Err(Error::numeric(
                "mixture density",
                format!("log density {ld} at x = {x:?}"),
            ));
        }
        Ok(ld)
    }

    /// Normalized responsibilities r_k(x), computed in log space.
    pub fn responsibilities(&self, x: &[T]) -> Result<Vec<T>> {
        let lds = self.component_log_densities(x)?;
        let lse = log_sum_exp(&lds);
        if !lse.is_finite() {
            return Err(Error::numeric(
                "responsibilities",
                "all component densities underflowed",
            ));
        }
        Ok(lds.iter().map(|&l| (l - lse).exp()).collect())
    }

    /// Smallest squared Mahalanobis distance to any component.
    pub fn min_mahalanobis_sq(&self, x: &[T]) -> Result<T> {
        let mut best = T::infinity();
        for k in 0..self.component_count() {
            let chol = self.chols[k].as_ref().ok_or_else(|| {
                Error::numeric("mahalanobis", format!("component {k} is degenerate"))
            })?;
            let d = chol.mahalanobis_sq(&sub(x, &self.means[k]));
            best = best.min(d);
        }
        Ok(best)
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Vec<T> {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut comp = self.component_count() - 1;
        for (k, w) in self.weights.iter().enumerate() {
            acc += w.to_f64().expect("weight fits f64");
            if u < acc {
                comp = k;
                break;
            }
        }
        let n = self.dim();
        let z: Vec<T> = (0..n).map(|_| T::std_normal(rng)).collect();
        let mut x = self.means[comp].clone();
        let f = &self.factors[comp];
        for i in 0..n {
            let mut s = T::zero();
            for j in 0..n {
                s = s + f[(i, j)] * z[j];
            }
            x[i] = x[i] + s;
        }
        x
    }

    pub fn sample_batch<R: rand::Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Vec<Vec<T>> {
        (0..count).map(|_| self.sample(rng)).collect()
    }

    /// Posterior mixture given the observation y = A x + ε with
    /// ε ~ N(0, noise_var·I). `noise_var = 0` conditions on the exact
    /// linear constraint (degenerate posterior components).
    pub fn condition_linear(&self, a: &Mat<T>, y: &[T], noise_var: T) -> Result<GaussianMixture<T>> {
        let n = self.dim();
        let m = a.rows();
        if a.cols() != n {
            return Err(Error::dimension("condition_linear operator", n, a.cols()));
        }
        if y.len() != m {
            return Err(Error::dimension("condition_linear observation", m, y.len()));
        }
        let kc = self.component_count();
        let mut log_weights = Vec::with_capacity(kc);
        let mut means = Vec::with_capacity(kc);
        let mut covs = Vec::with_capacity(kc);
        for k in 0..kc {
            let sigma = &self.covs[k];
            let a_sigma = a.matmul(sigma); // m×n
            let mut s = a_sigma.matmul(&a.transpose()); // m×m
            for i in 0..m {
                s[(i, i)] = s[(i, i)] + noise_var;
            }
            let chol = Cholesky::new(&s.symmetrized()).map_err(|_| {
                Error::numeric(
                    "condition_linear",
                    format!("observation covariance of component {k} is singular"),
                )
            })?;
            let resid = sub(y, &a.matvec(&self.means[k]));
            log_weights.push(
                self.weights[k].ln() + log_normal_density(y, &a.matvec(&self.means[k]), &chol),
            );
            // mean_k + Σ Aᵀ S⁻¹ (y − A mean_k)
            let solve_resid = chol.solve(&resid);
            let mut mean = self.means[k].clone();
            let a_sigma_t = a_sigma.transpose(); // n×m
            for i in 0..n {
                mean[i] = mean[i] + dot(a_sigma_t.row(i), &solve_resid);
            }
            // Σ − Σ Aᵀ S⁻¹ A Σ
            let mut cov = sigma.clone();
            let mut s_inv_a_sigma = Mat::zeros(m, a_sigma.cols());
            for j in 0..a_sigma.cols() {
                let col: Vec<T> = (0..m).map(|i| a_sigma[(i, j)]).collect();
                let sol = chol.solve(&col);
                for i in 0..m {
                    s_inv_a_sigma[(i, j)] = sol[i];
                }
            }
            let correction = a_sigma_t.matmul(&s_inv_a_sigma);
            for i in 0..n {
                for j in 0..n {
                    cov[(i, j)] = cov[(i, j)] - correction[(i, j)];
                }
            }
            means.push(mean);
            covs.push(cov.symmetrized());
        }
        let lse = log_sum_exp(&log_weights);
        if !lse.is_finite() {
            return Err(Error::numeric(
                "condition_linear",
                "all component responsibilities underflowed",
            ));
        }
        let weights: Vec<T> = log_weights.iter().map(|&lw| (lw - lse).exp()).collect();
        GaussianMixture::new_psd(normalize(weights), means, covs)
    }
}

/// Renormalizes weights so they sum to exactly one.
fn normalize<T: Scalar>(mut w: Vec<T>) -> Vec<T> {
    let s: T = w.iter().copied().sum();
    for v in w.iter_mut() {
        *v = *v / s;
    }
    w
}

#[derive(Serialize, Deserialize)]
struct MixtureFile<T> {
    weights: Vec<T>,
    means: Vec<Vec<T>>,
    covs: Vec<Vec<Vec<T>>>,
}

impl<T: Scalar> Serialize for GaussianMixture<T> {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        MixtureFile {
            weights: self.weights.clone(),
            means: self.means.clone(),
            covs: self.covs.iter().map(|c| c.to_rows()).collect(),
        }
        .serialize(serializer)
    }
}

impl<'de, T: Scalar> Deserialize<'de> for GaussianMixture<T> {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let file = MixtureFile::<T>::deserialize(deserializer)?;
        let covs = file
            .covs
            .into_iter()
            .map(Mat::from_rows)
            .collect::<Result<Vec<_>>>()
            .map_err(serde::de::Error::custom)?;
        GaussianMixture::new(file.weights, file.means, covs).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use approx::assert_relative_eq;

    fn two_comp() -> GaussianMixture<f64> {
        GaussianMixture::new(
            vec![0.4, 0.6],
            vec![vec![-1.5, 0.0], vec![1.5, 0.5]],
            vec![
                Mat::from_rows(vec![vec![0.5, 0.1], vec![0.1, 0.3]]).unwrap(),
                Mat::from_rows(vec![vec![0.4, -0.1], vec![-0.1, 0.6]]).unwrap(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn validation_rejects_bad_inputs() {
        let cov = Mat::<f64>::eye(2);
        assert!(GaussianMixture::new(vec![0.5, 0.4], vec![vec![0.0; 2]; 2], vec![cov.clone(); 2])
            .is_err());
        let asym = Mat::from_rows(vec![vec![1.0, 0.2], vec![0.0, 1.0]]).unwrap();
        assert!(GaussianMixture::new(vec![1.0], vec![vec![0.0; 2]], vec![asym]).is_err());
        let indef = Mat::from_rows(vec![vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(GaussianMixture::new(vec![1.0], vec![vec![0.0; 2]], vec![indef]).is_err());
        assert!(GaussianMixture::new(
            vec![1.0],
            vec![vec![f64::NAN, 0.0]],
            vec![Mat::eye(2)]
        )
        .is_err());
    }

    #[test]
    fn log_density_matches_direct_single_gaussian() {
        let g = GaussianMixture::single(vec![1.0, -2.0], Mat::diag(&[2.0, 0.5])).unwrap();
        let x = vec![0.0, 0.0];
        // direct: -0.5 [ (x-m)ᵀ Σ⁻¹ (x-m) + log det Σ + n log 2π ]
        let maha = 1.0f64 / 2.0 + 4.0 / 0.5;
        let expect = -0.5 * (maha + (2.0f64 * 0.5).ln() + 2.0 * (2.0 * std::f64::consts::PI).ln());
        assert_relative_eq!(g.log_density(&x).unwrap(), expect, max_relative = 1e-14);
    }

    #[test]
    fn responsibilities_normalize_even_far_out() {
        let g = two_comp();
        let r = g.responsibilities(&vec![400.0, -300.0]).unwrap();
        assert_relative_eq!(r.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(g.responsibilities(&vec![f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn sample_moments_match_mixture_moments() {
        let g = two_comp();
        let mut rng = stream(11, &[0]);
        let n = 200_000;
        let samples = g.sample_batch(&mut rng, n);
        let mean = g.mean();
        let cov = g.covariance();
        let mut smean = vec![0.0; 2];
        for s in &samples {
            smean[0] += s[0];
            smean[1] += s[1];
        }
        smean.iter_mut().for_each(|v| *v /= n as f64);
        for i in 0..2 {
            // stderr ≈ sqrt(var/n)
            let se = (cov[(i, i)] / n as f64).sqrt();
            assert!((smean[i] - mean[i]).abs() < 4.0 * se);
        }
        let mut scov = Mat::<f64>::zeros(2, 2);
        for s in &samples {
            for i in 0..2 {
                for j in 0..2 {
                    scov[(i, j)] += (s[i] - smean[i]) * (s[j] - smean[j]);
                }
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(scov[(i, j)] / n as f64, cov[(i, j)], epsilon = 0.02);
            }
        }
    }

    #[test]
    fn conditioning_single_gaussian_matches_textbook() {
        // x ~ N(m, Σ), observe y = x₀ (select first coordinate), no noise
        let m = vec![1.0, 2.0];
        let sigma = Mat::from_rows(vec![vec![2.0, 0.6], vec![0.6, 1.0]]).unwrap();
        let g = GaussianMixture::single(m, sigma).unwrap();
        let a = Mat::from_rows(vec![vec![1.0, 0.0]]).unwrap();
        let post = g.condition_linear(&a, &[0.5], 0.0).unwrap();
        // textbook: mean₂|₁ = m₂ + Σ₂₁/Σ₁₁ (y − m₁), var = Σ₂₂ − Σ₂₁²/Σ₁₁
        let want_mean1 = 2.0 + 0.6 / 2.0 * (0.5 - 1.0);
        let c = post.mean_of(0);
        assert_relative_eq!(c[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(c[1], want_mean1, epsilon = 1e-12);
        let cov = post.cov_of(0);
        assert_relative_eq!(cov[(0, 0)], 0.0, epsilon = 1e-12);
        assert_relative_eq!(cov[(1, 1)], 1.0 - 0.36 / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn conditioning_is_consistent_with_importance_sampling() {
        let g = two_comp();
        let a = Mat::from_rows(vec![vec![1.0, 0.0]]).unwrap();
        let y = vec![0.8];
        let noise = 0.05;
        let post = g.condition_linear(&a, &y, noise).unwrap();
        // importance sampling from the prior with Gaussian likelihood weights
        let mut rng = stream(3, &[7]);
        let nsamp = 400_000;
        let mut wsum = 0.0;
        let mut m = vec![0.0; 2];
        for _ in 0..nsamp {
            let x = g.sample(&mut rng);
            let r = y[0] - x[0];
            let w = (-r * r / (2.0 * noise)).exp();
            wsum += w;
            m[0] += w * x[0];
            m[1] += w * x[1];
        }
        let is_mean = [m[0] / wsum, m[1] / wsum];
        let exact = post.mean();
        assert!((is_mean[0] - exact[0]).abs() < 5e-3);
        assert!((is_mean[1] - exact[1]).abs() < 5e-3);
    }

    #[test]
    fn serde_matches_spec_shape() {
        let g = two_comp();
        let text = serde_json::to_string(&g).unwrap();
        assert!(text.starts_with("{\"weights\":"));
        assert!(text.contains("\"means\":[["));
        assert!(text.contains("\"covs\":[[["));
        let back: GaussianMixture<f64> = serde_json::from_str(&text).unwrap();
        assert_eq!(back.weights(), g.weights());
        assert_eq!(back.mean_of(1), g.mean_of(1));
    }
}
