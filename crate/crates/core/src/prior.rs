//! Exact diffusion quantities for a Gaussian-mixture prior.
//!
//! For a mixture prior p(x0) and a VP schedule, every marginal
//! p_t(x) = Σ_k w_k N(x; √ᾱ_t μ_k, ᾱ_t Σ_k + (1−ᾱ_t) I) is again a mixture,
//! so scores, score Hessians, and the posteriors p(x0|x_t) and
//! p(x_{t−1}|x_t) are all available in closed form. This module is the
//! ground truth that every estimator in the crate is judged against.
//!
//! Per-level factorizations are computed once per (component, t) and
//! cached; queries are read-only and freely concurrent.

use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::gmm::{log_normal_density, log_sum_exp, GaussianMixture};
use crate::linalg::{axpy, dot, sub, Cholesky, Mat};
use crate::scalar::{cast_usize, Scalar};
use crate::schedule::NoiseSchedule;

/// x_t-independent pieces of a per-component Gaussian conditioning
/// z | (obs = a·z + noise): posterior mean is offset_k + G_k·obs and the
/// posterior covariance C_k does not depend on the observation.
#[derive(Debug)]
pub struct CondKernel<T = f64> {
    gains: Vec<Mat<T>>,
    offsets: Vec<Vec<T>>,
    covs: Vec<Mat<T>>,
    factors: Vec<Mat<T>>,
    traces: Vec<T>,
}

impl<T: Scalar> CondKernel<T> {
    /// Builds the kernel for z ~ N(base_mean_k, base_cov_k) observed
    /// through obs = a·z + ε where the marginal of obs per component has
    /// the given Cholesky factor (of a²·base_cov + v·I).
    fn build(
        base_means: &[Vec<T>],
        base_covs: &[Mat<T>],
        a: T,
        obs_chols: &[Cholesky<T>],
    ) -> Result<Self> {
        let k = base_means.len();
        let n = base_means[0].len();
        let mut gains = Vec::with_capacity(k);
        let mut offsets = Vec::with_capacity(k);
        let mut covs = Vec::with_capacity(k);
        let mut factors = Vec::with_capacity(k);
        let mut traces = Vec::with_capacity(k);
        for c in 0..k {
            let sigma = &base_covs[c];
            // X = S⁻¹ Σ, column by column
            let mut x = Mat::zeros(n, n);
            for j in 0..n {
                let col: Vec<T> = (0..n).map(|i| sigma[(i, j)]).collect();
                let sol = obs_chols[c].solve(&col);
                for i in 0..n {
                    x[(i, j)] = sol[i];
                }
            }
            // G = a Σ S⁻¹ = a Xᵀ (Σ and S symmetric)
            let gain = x.transpose().scale(a);
            // C = Σ − a² Σ S⁻¹ Σ = Σ − a² Xᵀ Σ ... computed as Σ − a (G Σ)
            let g_sigma = gain.matmul(sigma);
            let cov = sigma.add_scaled(&g_sigma, -a).symmetrized();
            let mut offset = base_means[c].clone();
            let scaled_mean = crate::linalg::scale(&base_means[c], a);
            let corr = gain.matvec(&scaled_mean);
            for i in 0..n {
                offset[i] = offset[i] - corr[i];
            }
            let factor = crate::linalg::psd_sqrt(&cov).map_err(|e| {
                Error::numeric(
                    "conditioning kernel",
                    format!("component {c} conditional covariance invalid: {e}"),
                )
            })?;
            traces.push(cov.trace());
            gains.push(gain);
            offsets.push(offset);
            covs.push(cov);
            factors.push(factor);
        }
        Ok(CondKernel {
            gains,
            offsets,
            covs,
            factors,
            traces,
        })
    }

    pub fn conditional_cov(&self, k: usize) -> &Mat<T> {
        &self.covs[k]
    }

    fn conditional_mean(&self, k: usize, obs: &[T]) -> Vec<T> {
        let mut m = self.gains[k].matvec(obs);
        for (mi, &o) in m.iter_mut().zip(&self.offsets[k]) {
            *mi = *mi + o;
        }
        m
    }
}

/// One noised marginal p_t with everything factored.
#[derive(Debug)]
pub struct NoisedLevel<T = f64> {
    t: usize,
    alpha_bar: T,
    log_weights: Vec<T>,
    means: Vec<Vec<T>>,
    covs: Vec<Mat<T>>,
    chols: Vec<Cholesky<T>>,
    /// Conditioning of x0 on x_t.
    x0_kernel: Arc<CondKernel<T>>,
}

impl<T: Scalar> NoisedLevel<T> {
    fn build(prior: &GaussianMixture<T>, t: usize, alpha_bar: T) -> Result<Self> {
        let n = prior.dim();
        let k = prior.component_count();
        let a = alpha_bar.sqrt();
        let v = T::one() - alpha_bar;
        let mut means = Vec::with_capacity(k);
        let mut covs = Vec::with_capacity(k);
        let mut chols = Vec::with_capacity(k);
        for c in 0..k {
            means.push(crate::linalg::scale(prior.mean_of(c), a));
            let mut cov = prior.cov_of(c).scale(alpha_bar);
            for i in 0..n {
                cov[(i, i)] = cov[(i, i)] + v;
            }
            let chol = Cholesky::new(&cov)?;
            covs.push(cov);
            chols.push(chol);
        }
        let base_means: Vec<Vec<T>> = (0..k).map(|c| prior.mean_of(c).to_vec()).collect();
        let base_covs: Vec<Mat<T>> = (0..k).map(|c| prior.cov_of(c).clone()).collect();
        let x0_kernel = Arc::new(CondKernel::build(&base_means, &base_covs, a, &chols)?);
        Ok(NoisedLevel {
            t,
            alpha_bar,
            log_weights: prior.weights().iter().map(|w| w.ln()).collect(),
            means,
            covs,
            chols,
            x0_kernel,
        })
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn alpha_bar(&self) -> T {
        self.alpha_bar
    }

    pub fn component_count(&self) -> usize {
        self.means.len()
    }

    pub fn mean_of(&self, k: usize) -> &[T] {
        &self.means[k]
    }

    pub fn cov_of(&self, k: usize) -> &Mat<T> {
        &self.covs[k]
    }

    fn component_log_densities(&self, x: &[T]) -> Result<Vec<T>> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric(
                format!("marginal at t = {}", self.t),
                "non-finite input point",
            ));
        }
        Ok((0..self.component_count())
            .map(|k| self.log_weights[k] + log_normal_density(x, &self.means[k], &self.chols[k]))
            .collect())
    }

    pub fn log_density(&self, x: &[T]) -> Result<T> {
        let ld = log_sum_exp(&self.component_log_densities(x)?);
        if !ld.is_finite() {
            return Err(Error::numeric(
                format!("marginal at t = {}", self.t),
                "all component responsibilities underflowed",
            ));
        }
        Ok(ld)
    }

    /// Responsibilities and per-component density gradients
    /// g_k = −S_k⁻¹(x − m_k); the score is Σ_k r_k g_k.
    pub fn score_parts(&self, x: &[T]) -> Result<(Vec<T>, Vec<Vec<T>>)> {
        let lds = self.component_log_densities(x)?;
        let lse = log_sum_exp(&lds);
        if !lse.is_finite() {
            return Err(Error::numeric(
                format!("score at t = {}", self.t),
                "all component responsibilities underflowed",
            ));
        }
        let resp: Vec<T> = lds.iter().map(|&l| (l - lse).exp()).collect();
        let gs: Vec<Vec<T>> = (0..self.component_count())
            .map(|k| {
                let diff = sub(x, &self.means[k]);
                crate::linalg::scale(&self.chols[k].solve(&diff), -T::one())
            })
            .collect();
        Ok((resp, gs))
    }

    pub fn score(&self, x: &[T]) -> Result<Vec<T>> {
        let (resp, gs) = self.score_parts(x)?;
        let mut s = vec![T::zero(); x.len()];
        for (r, g) in resp.iter().zip(&gs) {
            axpy(&mut s, *r, g);
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric(
                format!("score at t = {}", self.t),
                format!("non-finite score at x = {x:?}"),
            ));
        }
        Ok(s)
    }

    /// (∇² log p_t)(x) · v using the mixture identity
    /// H = Σ_k r_k (g_k g_kᵀ − S_k⁻¹) − s sᵀ.
    pub fn score_hvp(&self, x: &[T], v: &[T]) -> Result<Vec<T>> {
        let (resp, gs) = self.score_parts(x)?;
        self.score_hvp_with_parts(x, v, &resp, &gs)
    }

    pub(crate) fn score_hvp_with_parts(
        &self,
        _x: &[T],
        v: &[T],
        resp: &[T],
        gs: &[Vec<T>],
    ) -> Result<Vec<T>> {
        let n = v.len();
        let mut s = vec![T::zero(); n];
        for (r, g) in resp.iter().zip(gs) {
            axpy(&mut s, *r, g);
        }
        let mut out = vec![T::zero(); n];
        for k in 0..self.component_count() {
            let gv = dot(&gs[k], v);
            axpy(&mut out, resp[k] * gv, &gs[k]);
            let sv = self.chols[k].solve(v);
            axpy(&mut out, -resp[k], &sv);
        }
        let sv = dot(&s, v);
        axpy(&mut out, -sv, &s);
        if out.iter().any(|z| !z.is_finite()) {
            return Err(Error::numeric(
                format!("score hvp at t = {}", self.t),
                "non-finite Hessian-vector product",
            ));
        }
        Ok(out)
    }

    /// The marginal as a plain mixture (weights unchanged).
    pub fn to_mixture(&self, weights: &[T]) -> Result<GaussianMixture<T>> {
        GaussianMixture::new(weights.to_vec(), self.means.clone(), self.covs.clone())
    }
}

/// An exact posterior: reweighted mixture with shared x_t-independent
/// conditional covariances.
#[derive(Debug, Clone)]
pub struct PosteriorGmm<T = f64> {
    weights: Vec<T>,
    means: Vec<Vec<T>>,
    kernel: Arc<CondKernel<T>>,
}

impl<T: Scalar> PosteriorGmm<T> {
    pub fn component_count(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn mean_of(&self, k: usize) -> &[T] {
        &self.means[k]
    }

    pub fn conditional_cov(&self, k: usize) -> &Mat<T> {
        &self.kernel.covs[k]
    }

    /// Posterior mean Σ_k w̃_k m_k.
    pub fn mean(&self) -> Vec<T> {
        let mut m = vec![T::zero(); self.dim()];
        for (w, mk) in self.weights.iter().zip(&self.means) {
            axpy(&mut m, *w, mk);
        }
        m
    }

    /// Trace of the full posterior covariance: within-component plus
    /// between-component parts.
    pub fn cov_trace(&self) -> T {
        let mbar = self.mean();
        let mut tr = T::zero();
        for k in 0..self.component_count() {
            let d = sub(&self.means[k], &mbar);
            tr = tr + self.weights[k] * (self.kernel.traces[k] + dot(&d, &d));
        }
        tr
    }

    /// Full posterior covariance (within + between).
    pub fn covariance(&self) -> Mat<T> {
        let n = self.dim();
        let mbar = self.mean();
        let mut cov = Mat::zeros(n, n);
        for k in 0..self.component_count() {
            let w = self.weights[k];
            let d = sub(&self.means[k], &mbar);
            for i in 0..n {
                for j in 0..n {
                    cov[(i, j)] = cov[(i, j)] + w * (self.kernel.covs[k][(i, j)] + d[i] * d[j]);
                }
            }
        }
        cov
    }

    /// E[xᵀ Q x + aᵀ x + c] under the posterior, exactly.
    pub fn quadratic_expectation(&self, q: &Mat<T>, a: &[T], c: T) -> T {
        let mut total = T::zero();
        for k in 0..self.component_count() {
            let m = &self.means[k];
            let quad = q.quad_form(m, m) + q.matmul(&self.kernel.covs[k]).trace();
            total = total + self.weights[k] * (quad + dot(a, m) + c);
        }
        total
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
        let f = &self.kernel.factors[comp];
        let mut x = self.means[comp].clone();
        for i in 0..n {
            let mut s = T::zero();
            for j in 0..n {
                s = s + f[(i, j)] * z[j];
            }
            x[i] = x[i] + s;
        }
        x
    }

    /// The posterior as a standalone mixture (copies the shared covariances).
    pub fn to_mixture(&self) -> Result<GaussianMixture<T>> {
        GaussianMixture::new_psd(
            self.weights.clone(),
            self.means.clone(),
            self.kernel.covs.clone(),
        )
    }
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct ValueWithStderr<T = f64> {
    pub value: T,
    pub stderr: T,
}

/// Result of an oracle conditional-expectation query.
#[derive(Debug, Clone, Copy)]
pub struct OracleExpectation<T = f64> {
    pub mc: ValueWithStderr<T>,
    /// Exact value when the integrand is linear or quadratic.
    pub closed_form: Option<T>,
}

/// Gaussian-mixture prior bound to a noise schedule, with lazily built
/// per-level factorizations.
pub struct AnalyticPrior<T = f64> {
    prior: GaussianMixture<T>,
    schedule: NoiseSchedule<T>,
    levels: Vec<OnceLock<Arc<NoisedLevel<T>>>>,
    /// step_kernels[t] conditions x_{t−1} on x_t (index 0 unused).
    step_kernels: Vec<OnceLock<Arc<CondKernel<T>>>>,
}

impl<T: Scalar> std::fmt::Debug for AnalyticPrior<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AnalyticPrior")
            .field("dim", &self.prior.dim())
            .field("components", &self.prior.component_count())
            .field("steps", &self.schedule.steps())
            .finish()
    }
}

impl<T: Scalar> AnalyticPrior<T> {
    pub fn new(prior: GaussianMixture<T>, schedule: NoiseSchedule<T>) -> Result<Self> {
        if prior.is_degenerate() {
            return Err(Error::Mixture(
                "analytic prior requires positive-definite components".into(),
            ));
        }
        let steps = schedule.steps();
        Ok(AnalyticPrior {
            prior,
            schedule,
            levels: (0..=steps).map(|_| OnceLock::new()).collect(),
            step_kernels: (0..=steps).map(|_| OnceLock::new()).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.prior.dim()
    }

    pub fn prior(&self) -> &GaussianMixture<T> {
        &self.prior
    }

    pub fn schedule(&self) -> &NoiseSchedule<T> {
        &self.schedule
    }

    /// The factored marginal p_t; built on first use.
    pub fn level(&self, t: usize) -> Result<&Arc<NoisedLevel<T>>> {
        let ab = self.schedule.alpha_bar(t)?;
        if let Some(level) = self.levels[t].get() {
            return Ok(level);
        }
        let built = Arc::new(NoisedLevel::build(&self.prior, t, ab)?);
        Ok(self.levels[t].get_or_init(|| built))
    }

    /// The noised marginal at t as a plain mixture; weights unchanged.
    pub fn noised_marginal(&self, t: usize) -> Result<GaussianMixture<T>> {
        self.level(t)?.to_mixture(self.prior.weights())
    }

    /// ∇ log p_t(x), exactly.
    pub fn score(&self, x: &[T], t: usize) -> Result<Vec<T>> {
        self.check_dim(x)?;
        self.level(t)?.score(x)
    }

    /// (∇² log p_t)(x)·v, exactly.
    pub fn score_hvp(&self, x: &[T], t: usize, v: &[T]) -> Result<Vec<T>> {
        self.check_dim(x)?;
        self.level(t)?.score_hvp(x, v)
    }

    pub fn log_density(&self, x: &[T], t: usize) -> Result<T> {
        self.check_dim(x)?;
        self.level(t)?.log_density(x)
    }

    /// Exact posterior p(x0 | x_t).
    pub fn posterior(&self, x: &[T], t: usize) -> Result<PosteriorGmm<T>> {
        self.check_dim(x)?;
        let level = self.level(t)?;
        let lds = level.component_log_densities(x)?;
        let lse = log_sum_exp(&lds);
        if !lse.is_finite() {
            return Err(Error::numeric(
                format!("posterior at t = {t}"),
                "all component responsibilities underflowed",
            ));
        }
        let weights: Vec<T> = lds.iter().map(|&l| (l - lse).exp()).collect();
        let kernel = self.x0_kernel_arc(t)?;
        let means = (0..level.component_count())
            .map(|k| kernel.conditional_mean(k, x))
            .collect();
        Ok(PosteriorGmm {
            weights: renorm(weights),
            means,
            kernel,
        })
    }

    fn x0_kernel_arc(&self, t: usize) -> Result<Arc<CondKernel<T>>> {
        Ok(Arc::clone(&self.level(t)?.x0_kernel))
    }

    /// Trace of Cov[x0 | x_t].
    pub fn posterior_cov_trace(&self, x: &[T], t: usize) -> Result<T> {
        Ok(self.posterior(x, t)?.cov_trace())
    }

    /// E[x0 | x_t], the exact Tweedie reconstruction target.
    pub fn posterior_mean(&self, x: &[T], t: usize) -> Result<Vec<T>> {
        Ok(self.posterior(x, t)?.mean())
    }

    /// Exact one-step reverse posterior p(x_{t−1} | x_t) of the true
    /// forward chain (not the sampler's isotropic surrogate).
    pub fn step_posterior(&self, x: &[T], t: usize) -> Result<PosteriorGmm<T>> {
        self.check_dim(x)?;
        if t < 1 || t > self.schedule.steps() {
            return Err(Error::StepOutOfRange {
                t,
                lo: 1,
                hi: self.schedule.steps(),
            });
        }
        let level_t = self.level(t)?;
        let lds = level_t.component_log_densities(x)?;
        let lse = log_sum_exp(&lds);
        if !lse.is_finite() {
            return Err(Error::numeric(
                format!("step posterior at t = {t}"),
                "all component responsibilities underflowed",
            ));
        }
        let weights: Vec<T> = lds.iter().map(|&l| (l - lse).exp()).collect();
        let kernel = self.step_kernel(t)?;
        let means = (0..level_t.component_count())
            .map(|k| kernel.conditional_mean(k, x))
            .collect();
        Ok(PosteriorGmm {
            weights: renorm(weights),
            means,
            kernel,
        })
    }

    fn step_kernel(&self, t: usize) -> Result<Arc<CondKernel<T>>> {
        if let Some(k) = self.step_kernels[t].get() {
            return Ok(Arc::clone(k));
        }
        // one forward step: x_t = √α_t x_{t−1} + √β_t ξ, so condition the
        // level-(t−1) mixture on x_t; the per-component observation
        // covariance α_t S_{t−1} + β_t I is exactly S_t.
        let level_prev = Arc::clone(self.level(t - 1)?);
        let level_t = self.level(t)?;
        let a = (T::one() - self.schedule.beta(t)?).sqrt();
        let base_means: Vec<Vec<T>> = (0..level_prev.component_count())
            .map(|k| level_prev.mean_of(k).to_vec())
            .collect();
        let base_covs: Vec<Mat<T>> = (0..level_prev.component_count())
            .map(|k| level_prev.cov_of(k).clone())
            .collect();
        let kernel = Arc::new(CondKernel::build(&base_means, &base_covs, a, &level_t.chols)?);
        Ok(Arc::clone(self.step_kernels[t].get_or_init(|| kernel)))
    }

    /// Monte Carlo estimate of E[f(x0) | x_t] by i.i.d. sampling from the
    /// exact posterior. Non-finite evaluations of f are reported with the
    /// offending sample index.
    pub fn mc_expectation<R, F>(
        &self,
        x: &[T],
        t: usize,
        mut f: F,
        samples: usize,
        rng: &mut R,
    ) -> Result<ValueWithStderr<T>>
    where
        R: rand::Rng + ?Sized,
        F: FnMut(&[T]) -> T,
    {
        if samples < 2 {
            return Err(Error::Config("mc_expectation needs at least 2 samples".into()));
        }
        let post = self.posterior(x, t)?;
        let mut sum = T::zero();
        let mut sumsq = T::zero();
        for i in 0..samples {
            let x0 = post.sample(rng);
            let v = f(&x0);
            if !v.is_finite() {
                return Err(Error::numeric(
                    "oracle expectation",
                    format!("f returned {v} on sample {i} at x0 = {x0:?}"),
                ));
            }
            sum = sum + v;
            sumsq = sumsq + v * v;
        }
        let n = cast_usize::<T>(samples);
        let mean = sum / n;
        let var = ((sumsq / n) - mean * mean).max(T::zero()) * n / (n - T::one());
        Ok(ValueWithStderr {
            value: mean,
            stderr: (var / n).sqrt(),
        })
    }

    fn check_dim(&self, x: &[T]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::dimension("prior query", self.dim(), x.len()));
        }
        Ok(())
    }
}

fn renorm<T: Scalar>(mut w: Vec<T>) -> Vec<T> {
    let s: T = w.iter().copied().sum();
    for v in w.iter_mut() {
        *v = *v / s;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use approx::assert_relative_eq;

    fn bimodal() -> AnalyticPrior<f64> {
        let gmm = GaussianMixture::new(
            vec![0.4, 0.6],
            vec![vec![-1.5, 0.2], vec![1.5, -0.4]],
            vec![
                Mat::from_rows(vec![vec![0.5, 0.1], vec![0.1, 0.3]]).unwrap(),
                Mat::from_rows(vec![vec![0.4, -0.1], vec![-0.1, 0.6]]).unwrap(),
            ],
        )
        .unwrap();
        let schedule = NoiseSchedule::linear(100, 1e-3, 0.2).unwrap();
        AnalyticPrior::new(gmm, schedule).unwrap()
    }

    #[test]
    fn noised_marginal_identity_at_t0() {
        let prior = bimodal();
        let m0 = prior.noised_marginal(0).unwrap();
        assert_eq!(m0.mean_of(0), prior.prior().mean_of(0));
        assert_eq!(m0.cov_of(1), prior.prior().cov_of(1));
    }

    #[test]
    fn noised_marginal_isotropic_fixed_point() {
        // N(0, I) stays N(0, I) at every noise level
        let gmm = GaussianMixture::standard(3);
        let schedule = NoiseSchedule::linear(50, 1e-3, 0.2).unwrap();
        let prior = AnalyticPrior::new(gmm, schedule).unwrap();
        let m = prior.noised_marginal(25).unwrap();
        for i in 0..3 {
            assert_relative_eq!(m.cov_of(0)[(i, i)], 1.0, epsilon = 1e-12);
            assert_relative_eq!(m.mean_of(0)[i], 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn noised_marginal_approaches_standard_normal() {
        let prior = bimodal();
        let t = prior.schedule().steps();
        let ab = prior.schedule().alpha_bar(t).unwrap();
        assert!(ab < 1e-4);
        let m = prior.noised_marginal(t).unwrap();
        // KL(N(m,S) || N(0,I)) per component, weighted
        let mut kl = 0.0;
        for k in 0..m.component_count() {
            let mean = m.mean_of(k);
            let cov = m.cov_of(k);
            let chol = Cholesky::new(cov).unwrap();
            let tr = cov.trace();
            let m2 = dot(mean, mean);
            kl += m.weights()[k] * 0.5 * (tr + m2 - 2.0 - chol.log_det());
        }
        assert!(kl < 1e-3, "kl = {kl}");
    }

    #[test]
    fn single_gaussian_score_is_closed_form() {
        let mean = vec![0.7, -0.3];
        let cov = Mat::from_rows(vec![vec![0.8, 0.2], vec![0.2, 0.5]]).unwrap();
        let gmm = GaussianMixture::single(mean.clone(), cov.clone()).unwrap();
        let schedule = NoiseSchedule::linear(40, 1e-3, 0.15).unwrap();
        let prior = AnalyticPrior::new(gmm, schedule).unwrap();
        let t = 17;
        let ab: f64 = prior.schedule().alpha_bar(t).unwrap();
        let x = vec![0.25, 0.9];
        let score = prior.score(&x, t).unwrap();
        // closed form: −S⁻¹ (x − a m) with S = ᾱΣ + (1−ᾱ)I
        let mut s_mat = cov.scale(ab);
        for i in 0..2 {
            s_mat[(i, i)] += 1.0 - ab;
        }
        let diff = sub(&x, &crate::linalg::scale(&mean, ab.sqrt()));
        let expect = crate::linalg::scale(&Cholesky::new(&s_mat).unwrap().solve(&diff), -1.0);
        for i in 0..2 {
            assert_relative_eq!(score[i], expect[i], max_relative = 1e-12);
        }
    }

    #[test]
    fn symmetric_mixture_score_vanishes_at_midpoint() {
        let gmm = GaussianMixture::new(
            vec![0.5, 0.5],
            vec![vec![-2.0, 0.0], vec![2.0, 0.0]],
            vec![Mat::eye(2), Mat::eye(2)],
        )
        .unwrap();
        let schedule = NoiseSchedule::linear(60, 1e-3, 0.15).unwrap();
        let prior = AnalyticPrior::new(gmm, schedule).unwrap();
        let s = prior.score(&vec![0.0, 0.0], 30).unwrap();
        assert_relative_eq!(s[0], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn score_matches_finite_differences() {
        let prior = bimodal();
        let mut rng = stream(5, &[1]);
        let h = 1e-5;
        for case in 0..100 {
            let t = 1 + (case * 7) % 100;
            let x: Vec<f64> = (0..2).map(|_| 3.0 * f64::std_normal(&mut rng)).collect();
            let score = prior.score(&x, t).unwrap();
            for i in 0..2 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                let fd = (prior.log_density(&xp, t).unwrap() - prior.log_density(&xm, t).unwrap())
                    / (2.0 * h);
                let denom = score[i].abs().max(1e-3);
                assert!(
                    (score[i] - fd).abs() / denom < 1e-6,
                    "t={t} i={i} score={} fd={fd}",
                    score[i]
                );
            }
        }
    }

    #[test]
    fn hvp_matches_finite_difference_of_score() {
        let prior = bimodal();
        let mut rng = stream(9, &[2]);
        let h = 1e-6;
        for case in 0..50 {
            let t = 1 + (case * 13) % 100;
            let x: Vec<f64> = (0..2).map(|_| 2.5 * f64::std_normal(&mut rng)).collect();
            let v: Vec<f64> = (0..2).map(|_| f64::std_normal(&mut rng)).collect();
            let hv = prior.score_hvp(&x, t, &v).unwrap();
            let xp: Vec<f64> = x.iter().zip(&v).map(|(&a, &b)| a + h * b).collect();
            let xm: Vec<f64> = x.iter().zip(&v).map(|(&a, &b)| a - h * b).collect();
            let sp = prior.score(&xp, t).unwrap();
            let sm = prior.score(&xm, t).unwrap();
            for i in 0..2 {
                let fd = (sp[i] - sm[i]) / (2.0 * h);
                let denom = hv[i].abs().max(1e-2);
                assert!(
                    (hv[i] - fd).abs() / denom < 1e-4,
                    "t={t} hv={} fd={fd}",
                    hv[i]
                );
            }
        }
    }

    #[test]
    fn posterior_single_gaussian_matches_conjugate_formulas() {
        let mean = vec![1.0, -1.0];
        let cov = Mat::from_rows(vec![vec![0.9, 0.3], vec![0.3, 0.7]]).unwrap();
        let gmm = GaussianMixture::single(mean.clone(), cov.clone()).unwrap();
        let schedule = NoiseSchedule::linear(30, 1e-3, 0.2).unwrap();
        let prior = AnalyticPrior::new(gmm, schedule).unwrap();
        let t = 12;
        let ab: f64 = prior.schedule().alpha_bar(t).unwrap();
        let a = ab.sqrt();
        let v = 1.0 - ab;
        let x = vec![0.4, 0.1];
        let post = prior.posterior(&x, t).unwrap();
        // independent derivation in information form:
        // C = (Σ⁻¹ + (a²/v) I)⁻¹, m = C (Σ⁻¹ μ + (a/v) x)
        let chol_sigma = Cholesky::new(&cov).unwrap();
        let mut info = Mat::<f64>::zeros(2, 2);
        for j in 0..2 {
            let mut e = vec![0.0; 2];
            e[j] = 1.0;
            let col = chol_sigma.solve(&e);
            for i in 0..2 {
                info[(i, j)] = col[i];
            }
            info[(j, j)] += a * a / v;
        }
        let chol_info = Cholesky::new(&info.symmetrized()).unwrap();
        let mut rhs = chol_sigma.solve(&mean);
        for i in 0..2 {
            rhs[i] += a / v * x[i];
        }
        let m_expect = chol_info.solve(&rhs);
        let got = post.mean();
        for i in 0..2 {
            assert_relative_eq!(got[i], m_expect[i], max_relative = 1e-10);
        }
        // covariance: C = info⁻¹
        for j in 0..2 {
            let mut e = vec![0.0; 2];
            e[j] = 1.0;
            let col = chol_info.solve(&e);
            for i in 0..2 {
                assert_relative_eq!(post.conditional_cov(0)[(i, j)], col[i], max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn posterior_at_t0_is_dirac() {
        let prior = bimodal();
        let x = vec![0.3, -0.2];
        let post = prior.posterior(&x, 0).unwrap();
        for k in 0..post.component_count() {
            assert!(post.conditional_cov(k).trace().abs() < 1e-12);
            for i in 0..2 {
                assert_relative_eq!(post.mean_of(k)[i], x[i], epsilon = 1e-10);
            }
        }
        assert_relative_eq!(post.cov_trace(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn posterior_weights_normalize() {
        let prior = bimodal();
        let mut rng = stream(2, &[4]);
        for case in 0..50 {
            let t = 1 + (case * 3) % 100;
            let x: Vec<f64> = (0..2).map(|_| 4.0 * f64::std_normal(&mut rng)).collect();
            let post = prior.posterior(&x, t).unwrap();
            assert!((post.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn posterior_mean_matches_importance_sampling() {
        let prior = bimodal();
        let t = 40;
        let x = vec![0.6, 0.4];
        let post = prior.posterior(&x, t).unwrap();
        let exact = post.mean();
        // self-normalized importance sampling from the prior:
        // weights ∝ N(x_t; a x0, v I)
        let ab = prior.schedule().alpha_bar(t).unwrap();
        let (a, v) = (ab.sqrt(), 1.0 - ab);
        let mut rng = stream(31, &[0]);
        let n = 1_000_000;
        let mut wsum = 0.0;
        let mut m = vec![0.0; 2];
        let mut wsq = 0.0;
        for _ in 0..n {
            let x0 = prior.prior().sample(&mut rng);
            let r0 = x[0] - a * x0[0];
            let r1 = x[1] - a * x0[1];
            let w = (-(r0 * r0 + r1 * r1) / (2.0 * v)).exp();
            wsum += w;
            wsq += w * w;
            m[0] += w * x0[0];
            m[1] += w * x0[1];
        }
        let ess = wsum * wsum / wsq;
        for i in 0..2 {
            let est = m[i] / wsum;
            // crude stderr from effective sample size
            let se = (post.cov_trace() / ess).sqrt();
            assert!(
                (est - exact[i]).abs() < 4.0 * se,
                "coord {i}: is = {est}, exact = {}, se = {se}",
                exact[i]
            );
        }
    }

    #[test]
    fn step_posterior_at_t1_equals_posterior() {
        let prior = bimodal();
        let x = vec![0.1, -0.5];
        let sp = prior.step_posterior(&x, 1).unwrap();
        let p0 = prior.posterior(&x, 1).unwrap();
        for k in 0..sp.component_count() {
            assert_relative_eq!(sp.weights()[k], p0.weights()[k], max_relative = 1e-12);
            for i in 0..2 {
                assert_relative_eq!(sp.mean_of(k)[i], p0.mean_of(k)[i], max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn law_of_total_expectation_for_step_posterior() {
        // E[x0 | x_t] must equal E over p(x_{t−1}|x_t) of E[x0 | x_{t−1}]
        let prior = bimodal();
        let t = 60;
        let x = vec![0.8, -0.3];
        let direct = prior.posterior_mean(&x, t).unwrap();
        let sp = prior.step_posterior(&x, t).unwrap();
        let mut rng = stream(77, &[1]);
        let reps = 200_000;
        let mut acc = vec![0.0; 2];
        for _ in 0..reps {
            let xprev = sp.sample(&mut rng);
            let m = prior.posterior_mean(&xprev, t - 1).unwrap();
            acc[0] += m[0];
            acc[1] += m[1];
        }
        for i in 0..2 {
            let est = acc[i] / reps as f64;
            assert!(
                (est - direct[i]).abs() < 5e-3,
                "coord {i}: {est} vs {}",
                direct[i]
            );
        }
    }

    #[test]
    fn mc_expectation_flags_bad_integrand() {
        let prior = bimodal();
        let mut rng = stream(1, &[1]);
        let err = prior
            .mc_expectation(&[0.0, 0.0], 10, |_| f64::NAN, 16, &mut rng)
            .unwrap_err();
        assert!(matches!(err, Error::Numeric { .. }));
    }
}
