//! Discrete-time variance-preserving noise schedules.
//!
//! A schedule holds the per-step noise rates β_t, the cumulative products
//! ᾱ_t = ∏_{s≤t}(1−β_s) with ᾱ_0 = 1, and the reverse-step standard
//! deviations σ_t. Serialization stores only (T, β, kind); ᾱ and σ are
//! always recomputed on load.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{cast, cast_usize, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Linear,
    Cosine,
}

/// Which reverse-kernel standard deviation the sampler uses.
///
/// `Posterior` is σ_t² = β_t (1−ᾱ_{t−1})/(1−ᾱ_t) (zero at t = 1);
/// `Beta` is σ_t² = β_t (positive at every step).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SigmaVariant {
    #[default]
    Posterior,
    Beta,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule<T = f64> {
    steps: usize,
    kind: ScheduleKind,
    sigma_variant: SigmaVariant,
    /// β_1..β_T at indices 1..=T; index 0 unused.
    beta: Vec<T>,
    /// ᾱ_0..ᾱ_T; ᾱ_0 = 1.
    alpha_bar: Vec<T>,
    /// σ_1..σ_T at indices 1..=T; index 0 unused.
    sigma: Vec<T>,
}

impl<T: Scalar> NoiseSchedule<T> {
    /// Linear β ramp; the conventional default is `linear(1000, 1e-4, 0.02)`.
    pub fn linear(steps: usize, beta_start: T, beta_end: T) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Schedule("step count must be positive".into()));
        }
        let betas = if steps == 1 {
            vec![beta_start]
        } else {
            let denom = cast_usize::<T>(steps - 1);
            (0..steps)
                .map(|i| beta_start + (beta_end - beta_start) * cast_usize::<T>(i) / denom)
                .collect()
        };
        Self::from_betas(betas, ScheduleKind::Linear, SigmaVariant::Posterior)
    }

    /// Squared-cosine ᾱ schedule with the usual 0.008 offset and β clipped
    /// at 0.999.
    pub fn cosine(steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Schedule("step count must be positive".into()));
        }
        let s = cast::<T>(0.008);
        let f = |u: T| -> T {
            let half_pi = T::FRAC_PI_2();
            let v = ((u + s) / (T::one() + s)) * half_pi;
            v.cos() * v.cos()
        };
        let f0 = f(T::zero());
        let tt = cast_usize::<T>(steps);
        let mut betas = Vec::with_capacity(steps);
        let mut prev = T::one();
        for t in 1..=steps {
            let ab = f(cast_usize::<T>(t) / tt) / f0;
            let beta = (T::one() - ab / prev).min(cast::<T>(0.999));
            betas.push(beta);
            prev = prev * (T::one() - beta);
        }
        Self::from_betas(betas, ScheduleKind::Cosine, SigmaVariant::Posterior)
    }

    /// Builds a schedule from explicit per-step rates β_1..β_T.
    pub fn from_betas(betas: Vec<T>, kind: ScheduleKind, variant: SigmaVariant) -> Result<Self> {
        let steps = betas.len();
        if steps == 0 {
            return Err(Error::Schedule("empty beta sequence".into()));
        }
        for (i, &b) in betas.iter().enumerate() {
            if !(b > T::zero() && b < T::one()) || !b.is_finite() {
                return Err(Error::Schedule(format!(
                    "beta_{} = {b} outside (0, 1)",
                    i + 1
                )));
            }
        }
        let mut beta = Vec::with_capacity(steps + 1);
        beta.push(T::zero());
        beta.extend_from_slice(&betas);
        let mut alpha_bar = Vec::with_capacity(steps + 1);
        alpha_bar.push(T::one());
        for t in 1..=steps {
            alpha_bar.push(alpha_bar[t - 1] * (T::one() - beta[t]));
        }
        if !(alpha_bar[steps] > T::zero()) {
            return Err(Error::Schedule("alpha_bar underflowed to zero".into()));
        }
        let mut schedule = NoiseSchedule {
            steps,
            kind,
            sigma_variant: variant,
            beta,
            alpha_bar,
            sigma: Vec::new(),
        };
        schedule.rebuild_sigma();
        Ok(schedule)
    }

    fn rebuild_sigma(&mut self) {
        let mut sigma = Vec::with_capacity(self.steps + 1);
        sigma.push(T::zero());
        for t in 1..=self.steps {
            let s = match self.sigma_variant {
                SigmaVariant::Posterior => {
                    let var = self.beta[t] * (T::one() - self.alpha_bar[t - 1])
                        / (T::one() - self.alpha_bar[t]);
                    var.sqrt()
                }
                SigmaVariant::Beta => self.beta[t].sqrt(),
            };
            sigma.push(s);
        }
        self.sigma = sigma;
    }

    /// Same β sequence with the other reverse-kernel deviation.
    pub fn with_sigma_variant(mut self, variant: SigmaVariant) -> Self {
        self.sigma_variant = variant;
        self.rebuild_sigma();
        self
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn sigma_variant(&self) -> SigmaVariant {
        self.sigma_variant
    }

    fn check_step(&self, t: usize, lo: usize) -> Result<()> {
        if t < lo || t > self.steps {
            return Err(Error::StepOutOfRange {
                t,
                lo,
                hi: self.steps,
            });
        }
        Ok(())
    }

    /// β_t for t in 1..=T.
    pub fn beta(&self, t: usize) -> Result<T> {
        self.check_step(t, 1)?;
        Ok(self.beta[t])
    }

    /// ᾱ_t for t in 0..=T; ᾱ_0 = 1.
    pub fn alpha_bar(&self, t: usize) -> Result<T> {
        self.check_step(t, 0)?;
        Ok(self.alpha_bar[t])
    }

    /// σ_t for t in 1..=T.
    pub fn sigma(&self, t: usize) -> Result<T> {
        self.check_step(t, 1)?;
        Ok(self.sigma[t])
    }

    /// DDIM noise scale for a jump t → t_next < t at stochasticity η.
    pub fn ddim_sigma(&self, t: usize, t_next: usize, eta: T) -> Result<T> {
        self.check_step(t, 1)?;
        if t_next >= t {
            return Err(Error::Schedule(format!(
                "ddim step pair must be decreasing, got {t} -> {t_next}"
            )));
        }
        let ab_t = self.alpha_bar[t];
        let ab_n = self.alpha_bar[t_next];
        let ratio = (T::one() - ab_n) / (T::one() - ab_t);
        Ok(eta * ratio.sqrt() * (T::one() - ab_t / ab_n).sqrt())
    }

    /// Largest relative violation of ᾱ_t = ᾱ_{t−1}(1−β_t).
    pub fn max_consistency_error(&self) -> T {
        let mut worst = T::zero();
        for t in 1..=self.steps {
            let expect = self.alpha_bar[t - 1] * (T::one() - self.beta[t]);
            let err = (self.alpha_bar[t] - expect).abs() / self.alpha_bar[t];
            if err > worst {
                worst = err;
            }
        }
        worst
    }
}

#[derive(Serialize, Deserialize)]
struct ScheduleFile<T> {
    #[serde(rename = "T")]
    steps: usize,
    beta: Vec<T>,
    kind: ScheduleKind,
    #[serde(default)]
    sigma_variant: SigmaVariant,
}

impl<T: Scalar> Serialize for NoiseSchedule<T> {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        ScheduleFile {
            steps: self.steps,
            beta: self.beta[1..].to_vec(),
            kind: self.kind,
            sigma_variant: self.sigma_variant,
        }
        .serialize(serializer)
    }
}

impl<'de, T: Scalar> Deserialize<'de> for NoiseSchedule<T> {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let file = ScheduleFile::<T>::deserialize(deserializer)?;
        if file.beta.len() != file.steps {
            return Err(serde::de::Error::custom(format!(
                "schedule T = {} but {} betas present",
                file.steps,
                file.beta.len()
            )));
        }
        NoiseSchedule::from_betas(file.beta, file.kind, file.sigma_variant)
            .map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn linear_default_shape() {
        let s = NoiseSchedule::<f64>::linear(1000, 1e-4, 0.02).unwrap();
        assert_eq!(s.steps(), 1000);
        assert_relative_eq!(s.beta(1).unwrap(), 1e-4);
        assert_relative_eq!(s.beta(1000).unwrap(), 0.02);
        assert_eq!(s.alpha_bar(0).unwrap(), 1.0);
        let ab_t = s.alpha_bar(1000).unwrap();
        assert!(ab_t > 0.0 && ab_t < 1.0);
        // strictly decreasing
        for t in 1..=1000 {
            assert!(s.alpha_bar(t).unwrap() < s.alpha_bar(t - 1).unwrap());
        }
        assert!(s.max_consistency_error() < 1e-12);
    }

    #[test]
    fn posterior_sigma_is_zero_only_at_first_step() {
        let s = NoiseSchedule::<f64>::linear(100, 1e-3, 0.2).unwrap();
        assert_eq!(s.sigma(1).unwrap(), 0.0);
        for t in 2..=100 {
            assert!(s.sigma(t).unwrap() > 0.0);
        }
        let b = s.clone().with_sigma_variant(SigmaVariant::Beta);
        for t in 1..=100 {
            assert_relative_eq!(b.sigma(t).unwrap(), b.beta(t).unwrap().sqrt());
        }
    }

    #[test]
    fn cosine_is_heavily_noised_at_the_end() {
        let s = NoiseSchedule::<f64>::cosine(100).unwrap();
        assert!(s.alpha_bar(100).unwrap() < 1e-3);
        assert!(s.max_consistency_error() < 1e-12);
    }

    #[test]
    fn step_range_errors() {
        let s = NoiseSchedule::<f64>::linear(10, 1e-3, 0.1).unwrap();
        assert!(s.beta(0).is_err());
        assert!(s.beta(11).is_err());
        assert!(s.alpha_bar(11).is_err());
        assert!(s.ddim_sigma(5, 5, 0.0).is_err());
        assert!(s.ddim_sigma(3, 7, 1.0).is_err());
    }

    #[test]
    fn serde_roundtrip_recomputes_derived_fields() {
        let s = NoiseSchedule::<f64>::linear(50, 1e-3, 0.1).unwrap();
        let text = serde_json::to_string(&s).unwrap();
        assert!(text.contains("\"T\":50"));
        assert!(!text.contains("alpha_bar"));
        assert!(!text.contains("sigma\""));
        let back: NoiseSchedule<f64> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn rejects_malformed_files() {
        let bad: std::result::Result<NoiseSchedule<f64>, _> =
            serde_json::from_str(r#"{"T": 3, "beta": [0.1, 0.2], "kind": "linear"}"#);
        assert!(bad.is_err());
        let bad: std::result::Result<NoiseSchedule<f64>, _> =
            serde_json::from_str(r#"{"T": 2, "beta": [0.1, 1.5], "kind": "linear"}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn ddim_sigma_eta1_adjacent_matches_posterior_sigma() {
        let s = NoiseSchedule::<f64>::linear(100, 1e-3, 0.2).unwrap();
        for t in 2..=100 {
            assert_relative_eq!(
                s.ddim_sigma(t, t - 1, 1.0).unwrap(),
                s.sigma(t).unwrap(),
                max_relative = 1e-12
            );
        }
    }

    proptest! {
        #[test]
        fn consistency_holds_for_random_betas(
            betas in proptest::collection::vec(1e-6f64..0.999, 1..200)
        ) {
            let s = NoiseSchedule::<f64>::from_betas(
                betas, ScheduleKind::Linear, SigmaVariant::Posterior).unwrap();
            prop_assert!(s.max_consistency_error() < 1e-12);
            prop_assert!(s.alpha_bar(s.steps()).unwrap() > 0.0);
            prop_assert!(s.alpha_bar(s.steps()).unwrap() < 1.0);
        }
    }
}
