//! Discrete-time VP diffusion steps.
//!
//! All operations take their randomness explicitly so that a step is a
//! pure function of (inputs, noise); the same noise can be replayed for
//! pathwise gradients, and identical seeds give identical trajectories.

use crate::error::{Error, Result};
use crate::linalg::axpy;
use crate::prior::AnalyticPrior;
use crate::scalar::Scalar;
use crate::schedule::NoiseSchedule;

/// Anything that can evaluate ∇ log p_t(x).
pub trait Score<T: Scalar> {
    fn score(&self, x: &[T], t: usize) -> Result<Vec<T>>;
}

impl<T: Scalar> Score<T> for AnalyticPrior<T> {
    fn score(&self, x: &[T], t: usize) -> Result<Vec<T>> {
        AnalyticPrior::score(self, x, t)
    }
}

impl<T: Scalar, F> Score<T> for F
where
    F: Fn(&[T], usize) -> Result<Vec<T>>,
{
    fn score(&self, x: &[T], t: usize) -> Result<Vec<T>> {
        self(x, t)
    }
}

fn checked_score<T: Scalar, S: Score<T> + ?Sized>(
    score: &S,
    x: &[T],
    t: usize,
) -> Result<Vec<T>> {
    let s = score.score(x, t)?;
    if s.len() != x.len() {
        return Err(Error::dimension("score output", x.len(), s.len()));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric(
            format!("score at t = {t}"),
            format!("non-finite score at x = {x:?}"),
        ));
    }
    Ok(s)
}

/// √ᾱ_t·x0 + √(1−ᾱ_t)·noise, with the noise passed in by the caller.
pub fn forward_marginal<T: Scalar>(
    x0: &[T],
    t: usize,
    schedule: &NoiseSchedule<T>,
    noise: &[T],
) -> Result<Vec<T>> {
    if t < 1 {
        return Err(Error::StepOutOfRange {
            t,
            lo: 1,
            hi: schedule.steps(),
        });
    }
    let ab = schedule.alpha_bar(t)?;
    if noise.len() != x0.len() {
        return Err(Error::dimension("forward noise", x0.len(), noise.len()));
    }
    let a = ab.sqrt();
    let s = (T::one() - ab).sqrt();
    Ok(x0
        .iter()
        .zip(noise)
        .map(|(&x, &e)| a * x + s * e)
        .collect())
}

/// Mean of the one-step reverse kernel,
/// μ(x_t) = (x_t + β_t·∇log p_t(x_t)) / √(1−β_t).
///
/// With an exact score this equals E[x_{t−1} | x_t] (one-step Tweedie).
pub fn reverse_mean<T: Scalar, S: Score<T> + ?Sized>(
    xt: &[T],
    t: usize,
    score: &S,
    schedule: &NoiseSchedule<T>,
) -> Result<Vec<T>> {
    let beta = schedule.beta(t)?;
    let s = checked_score(score, xt, t)?;
    let inv_sqrt_alpha = T::one() / (T::one() - beta).sqrt();
    Ok(xt
        .iter()
        .zip(&s)
        .map(|(&x, &si)| (x + beta * si) * inv_sqrt_alpha)
        .collect())
}

/// One stochastic reverse step: reverse_mean(x_t) + σ_t·eps.
pub fn reverse_step<T: Scalar, S: Score<T> + ?Sized>(
    xt: &[T],
    t: usize,
    score: &S,
    schedule: &NoiseSchedule<T>,
    eps: &[T],
) -> Result<Vec<T>> {
    if eps.len() != xt.len() {
        return Err(Error::dimension("reverse noise", xt.len(), eps.len()));
    }
    let mut mean = reverse_mean(xt, t, score, schedule)?;
    let sigma = schedule.sigma(t)?;
    axpy(&mut mean, sigma, eps);
    Ok(mean)
}

/// Tweedie reconstruction x̂0(x_t) = (x_t + (1−ᾱ_t)·score(x_t)) / √ᾱ_t.
///
/// For an exact score this is E[x0 | x_t] exactly. At ᾱ_t = 1 the map is
/// the identity and the score is not evaluated.
pub fn tweedie_x0_hat<T: Scalar, S: Score<T> + ?Sized>(
    xt: &[T],
    t: usize,
    score: &S,
    schedule: &NoiseSchedule<T>,
) -> Result<Vec<T>> {
    let ab = schedule.alpha_bar(t)?;
    if !(ab > T::zero()) {
        return Err(Error::Schedule(format!("alpha_bar({t}) = {ab} not positive")));
    }
    let v = T::one() - ab;
    if v == T::zero() {
        return Ok(xt.to_vec());
    }
    let s = checked_score(score, xt, t)?;
    let inv_a = T::one() / ab.sqrt();
    Ok(xt
        .iter()
        .zip(&s)
        .map(|(&x, &si)| (x + v * si) * inv_a)
        .collect())
}

/// DDIM jump t → t_next with stochasticity η ∈ [0, 1]:
/// x_next = √ᾱ_next·x̂0 + √(1−ᾱ_next−σ²)·ε̂(x_t) + σ·eps,
/// where ε̂ = −√(1−ᾱ_t)·score and σ = ddim_sigma(t, t_next, η).
pub fn ddim_step<T: Scalar, S: Score<T> + ?Sized>(
    xt: &[T],
    t: usize,
    t_next: usize,
    score: &S,
    schedule: &NoiseSchedule<T>,
    eta: T,
    eps: &[T],
) -> Result<Vec<T>> {
    if !(eta >= T::zero() && eta <= T::one()) {
        return Err(Error::Config(format!("ddim eta = {eta} outside [0, 1]")));
    }
    if eps.len() != xt.len() {
        return Err(Error::dimension("ddim noise", xt.len(), eps.len()));
    }
    let sigma = schedule.ddim_sigma(t, t_next, eta)?;
    let ab_t = schedule.alpha_bar(t)?;
    let ab_n = schedule.alpha_bar(t_next)?;
    let s = checked_score(score, xt, t)?;
    let sqrt_v_t = (T::one() - ab_t).sqrt();
    let x0_coef = ab_n.sqrt();
    let dir_var = (T::one() - ab_n - sigma * sigma).max(T::zero());
    let dir_coef = dir_var.sqrt();
    let inv_a = T::one() / ab_t.sqrt();
    let mut out = Vec::with_capacity(xt.len());
    for i in 0..xt.len() {
        let x0_hat = (xt[i] + (T::one() - ab_t) * s[i]) * inv_a;
        let eps_hat = -sqrt_v_t * s[i];
        let mut y = x0_coef * x0_hat + dir_coef * eps_hat;
        if eta > T::zero() {
            y = y + sigma * eps[i];
        }
        out.push(y);
    }
    Ok(out)
}
