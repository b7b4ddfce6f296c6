//! Differentiable condition functions and their exact-answer companions.
//!
//! Three families: linear inverse losses ‖A x − y‖² with structured
//! measurement operators, scalar property targets s·(c(x) − c*)² built
//! from radial maps with analytic derivatives, and dual-attribute tasks
//! whose content/style losses act on disjoint coordinate sets.
//!
//! Every registered function exposes its Lipschitz data: a gradient
//! Lipschitz constant (globally where one exists, otherwise on a bounding
//! box) and a value Lipschitz constant on a box. The constants are
//! computed from the analytic structure, tightly, so bound checks can be
//! asserted rather than assumed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::GaussianMixture;
use crate::linalg::{dot, norm2, sub, Mat};
use crate::prior::{AnalyticPrior, OracleExpectation};
use crate::scalar::{cast, cast_usize, Scalar};

/// Structured measurement operators, stored by kind rather than as dense
/// entries where the structure allows.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeasurementOp<T = f64> {
    /// Keeps the listed coordinates: the inpainting analog.
    Select { indices: Vec<usize>, dim: usize },
    /// Averages consecutive blocks of `block` coordinates: the
    /// super-resolution analog.
    BlockAvg { block: usize, dim: usize },
    /// Circular convolution with a short kernel: the deblurring analog.
    Circulant { kernel: Vec<T>, dim: usize },
    /// Dense override.
    Dense { rows: Vec<Vec<T>> },
}

impl<T: Scalar> MeasurementOp<T> {
    pub fn to_matrix(&self) -> Result<Mat<T>> {
        match self {
            MeasurementOp::Select { indices, dim } => {
                let mut a = Mat::zeros(indices.len(), *dim);
                for (r, &i) in indices.iter().enumerate() {
                    if i >= *dim {
                        return Err(Error::Config(format!(
                            "select index {i} out of range for dim {dim}"
                        )));
                    }
                    a[(r, i)] = T::one();
                }
                Ok(a)
            }
            MeasurementOp::BlockAvg { block, dim } => {
                if *block == 0 || dim % block != 0 {
                    return Err(Error::Config(format!(
                        "block size {block} must divide dim {dim}"
                    )));
                }
                let m = dim / block;
                let w = T::one() / cast_usize::<T>(*block);
                let mut a = Mat::zeros(m, *dim);
                for r in 0..m {
                    for j in 0..*block {
                        a[(r, r * block + j)] = w;
                    }
                }
                Ok(a)
            }
            MeasurementOp::Circulant { kernel, dim } => {
                if kernel.len() > *dim {
                    return Err(Error::Config("circulant kernel longer than dim".into()));
                }
                let mut a = Mat::zeros(*dim, *dim);
                for i in 0..*dim {
                    for (j, &kv) in kernel.iter().enumerate() {
                        a[(i, (i + j) % dim)] = kv;
                    }
                }
                Ok(a)
            }
            MeasurementOp::Dense { rows } => Mat::from_rows(rows.clone()),
        }
    }
}

/// A linear inverse problem y = A x + ε with loss ‖A x̂0 − y‖².
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct LinearInverseTask<T = f64> {
    pub op: MeasurementOp<T>,
    pub y: Vec<T>,
    /// Standard deviation used when generating y; the loss itself is
    /// deterministic given y.
    #[serde(default)]
    pub noise_level: T,
    #[serde(skip)]
    matrix: Option<Mat<T>>,
}

impl<T: Scalar> LinearInverseTask<T> {
    pub fn new(op: MeasurementOp<T>, y: Vec<T>) -> Result<Self> {
        let matrix = op.to_matrix()?;
        if matrix.rows() != y.len() {
            return Err(Error::dimension("inverse task y", matrix.rows(), y.len()));
        }
        if !matrix.is_finite() || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("non-finite inverse task".into()));
        }
        Ok(LinearInverseTask {
            op,
            y,
            noise_level: T::zero(),
            matrix: Some(matrix),
        })
    }

    /// Builds the measurement from a ground-truth point: y = A x* + σ·ξ.
    pub fn from_truth<R: rand::Rng + ?Sized>(
        op: MeasurementOp<T>,
        x_star: &[T],
        noise_level: T,
        rng: &mut R,
    ) -> Result<Self> {
        let matrix = op.to_matrix()?;
        if matrix.cols() != x_star.len() {
            return Err(Error::dimension("inverse task truth", matrix.cols(), x_star.len()));
        }
        let mut y = matrix.matvec(x_star);
        if noise_level > T::zero() {
            for v in y.iter_mut() {
                *v = *v + noise_level * T::std_normal(rng);
            }
        }
        let mut task = Self::new(op, y)?;
        task.noise_level = noise_level;
        Ok(task)
    }

    pub fn matrix(&self) -> &Mat<T> {
        self.matrix.as_ref().expect("constructed via new/from_truth")
    }

    /// Rebuilds the cached dense matrix after deserialization.
    pub fn hydrate(&mut self) -> Result<()> {
        let matrix = self.op.to_matrix()?;
        if matrix.rows() != self.y.len() {
            return Err(Error::dimension("inverse task y", matrix.rows(), self.y.len()));
        }
        self.matrix = Some(matrix);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.matrix().cols()
    }

    pub fn residual(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.dim() {
            return Err(Error::dimension("inverse loss input", self.dim(), x.len()));
        }
        Ok(sub(&self.matrix().matvec(x), &self.y))
    }

    /// ‖A x − y‖².
    pub fn loss(&self, x: &[T]) -> Result<T> {
        let r = self.residual(x)?;
        Ok(dot(&r, &r))
    }

    /// 2 Aᵀ (A x − y).
    pub fn loss_grad(&self, x: &[T]) -> Result<Vec<T>> {
        let r = self.residual(x)?;
        Ok(crate::linalg::scale(
            &self.matrix().tr_matvec(&r),
            cast::<T>(2.0),
        ))
    }

    /// The loss as (Q, a, c) with f = xᵀQx + aᵀx + c.
    pub fn as_quadratic(&self) -> (Mat<T>, Vec<T>, T) {
        let a_mat = self.matrix();
        let q = a_mat.transpose().matmul(a_mat);
        let lin = crate::linalg::scale(&a_mat.tr_matvec(&self.y), -cast::<T>(2.0));
        (q, lin, dot(&self.y, &self.y))
    }
}

/// Radial profiles φ(u) over u = ‖x − z‖², each with analytic first and
/// second derivatives in u.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RadialProfile<T = f64> {
    /// φ = coeff·u + offset (a radial quadratic form).
    Quadratic { coeff: T, offset: T },
    /// φ = √(u + smoothing²), a smooth norm.
    SoftNorm { smoothing: T },
    /// φ = exp(−u / (2 width²)).
    Bump { width: T },
}

impl<T: Scalar> RadialProfile<T> {
    /// (φ, φ′, φ″) at u.
    fn derivatives(&self, u: T) -> (T, T, T) {
        match *self {
            RadialProfile::Quadratic { coeff, offset } => (coeff * u + offset, coeff, T::zero()),
            RadialProfile::SoftNorm { smoothing } => {
                let s2 = smoothing * smoothing;
                let root = (u + s2).sqrt();
                let half = cast::<T>(0.5);
                (
                    root,
                    half / root,
                    -cast::<T>(0.25) / (root * root * root),
                )
            }
            RadialProfile::Bump { width } => {
                let w2 = width * width;
                let two = cast::<T>(2.0);
                let phi = (-u / (two * w2)).exp();
                let d1 = -phi / (two * w2);
                let d2 = phi / (cast::<T>(4.0) * w2 * w2);
                (phi, d1, d2)
            }
        }
    }

    /// Whether the induced squared-error loss has a finite global gradient
    /// Lipschitz constant.
    fn loss_has_global_lipschitz(&self) -> bool {
        !matches!(self, RadialProfile::Quadratic { .. })
    }
}

/// A smooth scalar property map c(x) = φ(‖x − center‖²).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PropertyMap<T = f64> {
    pub center: Vec<T>,
    pub profile: RadialProfile<T>,
}

impl<T: Scalar> PropertyMap<T> {
    pub fn value(&self, x: &[T]) -> T {
        let d = sub(x, &self.center);
        self.profile.derivatives(dot(&d, &d)).0
    }

    pub fn grad(&self, x: &[T]) -> Vec<T> {
        let d = sub(x, &self.center);
        let (_, d1, _) = self.profile.derivatives(dot(&d, &d));
        crate::linalg::scale(&d, cast::<T>(2.0) * d1)
    }
}

/// Property-target loss f(x) = scale·(c(x) − target)².
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PropertyTarget<T = f64> {
    pub map: PropertyMap<T>,
    pub target: T,
    pub scale: T,
}

impl<T: Scalar> PropertyTarget<T> {
    pub fn loss(&self, x: &[T]) -> T {
        let c = self.map.value(x);
        let d = c - self.target;
        self.scale * d * d
    }

    pub fn loss_grad(&self, x: &[T]) -> Vec<T> {
        let dv = sub(x, &self.map.center);
        let u = dot(&dv, &dv);
        let (c, d1, _) = self.map.profile.derivatives(u);
        // ∇f = 2 s (c − c*) · 2 φ′ (x − z)
        let coef = cast::<T>(4.0) * self.scale * (c - self.target) * d1;
        crate::linalg::scale(&dv, coef)
    }

    /// Eigenvalues of ∇²f at radius² = u: the tangential eigenvalue (n−1
    /// fold) and the radial one. f = s(φ(u) − c*)² with u = ‖x−z‖².
    fn hessian_eigs(&self, u: T) -> (T, T) {
        let (c, d1, d2) = self.map.profile.derivatives(u);
        let two = cast::<T>(2.0);
        let four = cast::<T>(4.0);
        let dev = c - self.target;
        let tangential = two * self.scale * dev * two * d1;
        let radial =
            two * self.scale * (four * u * d1 * d1 + dev * (two * d1 + four * u * d2));
        (tangential, radial)
    }

    /// max(|tangential|, |radial|) at u.
    fn hessian_norm_at(&self, u: T) -> T {
        let (tan, rad) = self.hessian_eigs(u);
        tan.abs().max(rad.abs())
    }

    /// ‖∇f‖ at radius² = u.
    fn grad_norm_at(&self, u: T) -> T {
        let (c, d1, _) = self.map.profile.derivatives(u);
        (cast::<T>(4.0) * self.scale * (c - self.target) * d1).abs() * u.sqrt()
    }

    /// Tight maximum of a radial functional over u ∈ [u_lo, u_hi] by
    /// dense scan.
    fn scan_max(&self, u_lo: T, u_hi: T, f: impl Fn(T) -> T) -> T {
        let steps = 40_000usize;
        let mut best = T::zero();
        let width = u_hi - u_lo;
        for i in 0..=steps {
            let u = u_lo + width * cast_usize::<T>(i) / cast_usize::<T>(steps);
            best = best.max(f(u));
        }
        best
    }

    /// Global gradient-Lipschitz constant of the loss, when finite.
    pub fn grad_lipschitz_global(&self) -> Option<T> {
        if !self.map.profile.loss_has_global_lipschitz() {
            return None;
        }
        // both registered smooth profiles have bounded Hessian eigenvalues
        // whose suprema live at moderate radius; scan far past any feature
        // scale and fold in the analytic tail limit.
        let feature = match self.map.profile {
            RadialProfile::SoftNorm { smoothing } => smoothing.abs() + self.target.abs(),
            RadialProfile::Bump { width } => width.abs() * cast::<T>(4.0) + T::one(),
            RadialProfile::Quadratic { .. } => unreachable!(),
        } + T::one();
        let u_hi = (feature * cast::<T>(64.0)).powi(2);
        let scanned = self.scan_max(T::zero(), u_hi, |u| self.hessian_norm_at(u));
        let tail = match self.map.profile {
            // eigenvalues tend to 2s as u → ∞
            RadialProfile::SoftNorm { .. } => cast::<T>(2.0) * self.scale,
            RadialProfile::Bump { .. } => T::zero(),
            RadialProfile::Quadratic { .. } => unreachable!(),
        };
        Some(scanned.max(tail))
    }

    fn u_range_on_box(&self, bounds: &BoundingBox<T>) -> (T, T) {
        // squared-distance range from center to the box
        let mut lo = T::zero();
        let mut hi = T::zero();
        for i in 0..bounds.lo.len() {
            let z = self.map.center[i];
            let (a, b) = (bounds.lo[i] - z, bounds.hi[i] - z);
            let far = a.abs().max(b.abs());
            hi = hi + far * far;
            if a > T::zero() {
                lo = lo + a * a;
            } else if b < T::zero() {
                lo = lo + b * b;
            }
        }
        (lo, hi)
    }
}

/// Axis-aligned box for Lipschitz-constant computation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundingBox<T = f64> {
    pub lo: Vec<T>,
    pub hi: Vec<T>,
}

impl<T: Scalar> BoundingBox<T> {
    pub fn centered(dim: usize, half_width: T) -> Self {
        BoundingBox {
            lo: vec![-half_width; dim],
            hi: vec![half_width; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    fn vertices(&self) -> impl Iterator<Item = Vec<T>> + '_ {
        let n = self.dim();
        (0..(1usize << n)).map(move |mask| {
            (0..n)
                .map(|i| if mask & (1 << i) != 0 { self.hi[i] } else { self.lo[i] })
                .collect()
        })
    }
}

/// Lipschitz data per Assumption-style requirements: K bounds ‖∇f‖ (value
/// Lipschitz), L bounds the gradient Lipschitz constant.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LipschitzConstants<T = f64> {
    pub value_lipschitz: T,
    pub grad_lipschitz: T,
}

/// The closed set of condition functions the gradient engine accepts.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(
    tag = "kind",
    rename_all = "snake_case",
    bound(serialize = "T: Scalar", deserialize = "T: Scalar")
)]
pub enum ConditionFn<T = f64> {
    /// f = aᵀx + b.
    Linear { a: Vec<T>, b: T },
    /// f = xᵀ q x + aᵀ x + c with q symmetric.
    Quadratic { q: Mat<T>, a: Vec<T>, c: T },
    /// f = ‖A x − y‖².
    InverseLoss(LinearInverseTask<T>),
    /// f = s (c(x) − c*)² for a radial property map c.
    Property(PropertyTarget<T>),
}

impl<T: Scalar> ConditionFn<T> {
    pub fn squared_norm(dim: usize) -> Self {
        ConditionFn::Quadratic {
            q: Mat::eye(dim),
            a: vec![T::zero(); dim],
            c: T::zero(),
        }
    }

    /// ½‖x − center‖².
    pub fn half_sq_distance(center: Vec<T>) -> Self {
        let dim = center.len();
        let half = cast::<T>(0.5);
        let a = crate::linalg::scale(&center, -T::one());
        ConditionFn::Quadratic {
            q: Mat::scaled_eye(dim, half),
            a,
            c: half * dot(&center, &center),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ConditionFn::Linear { a, .. } => a.len(),
            ConditionFn::Quadratic { a, .. } => a.len(),
            ConditionFn::InverseLoss(task) => task.dim(),
            ConditionFn::Property(p) => p.map.center.len(),
        }
    }

    pub fn value(&self, x: &[T]) -> Result<T> {
        self.check_dim(x)?;
        let v = match self {
            ConditionFn::Linear { a, b } => dot(a, x) + *b,
            ConditionFn::Quadratic { q, a, c } => q.quad_form(x, x) + dot(a, x) + *c,
            ConditionFn::InverseLoss(task) => task.loss(x)?,
            ConditionFn::Property(p) => p.loss(x),
        };
        if !v.is_finite() {
            return Err(Error::numeric("condition value", format!("f(x) = {v} at {x:?}")));
        }
        Ok(v)
    }

    pub fn grad(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_dim(x)?;
        let g = match self {
            ConditionFn::Linear { a, .. } => a.clone(),
            ConditionFn::Quadratic { q, a, .. } => {
                // (q + qᵀ) x + a; q kept symmetric so 2 q x + a
                let mut g = q.matvec(x);
                let qt = q.tr_matvec(x);
                for i in 0..g.len() {
                    g[i] = g[i] + qt[i] + a[i];
                }
                g
            }
            ConditionFn::InverseLoss(task) => task.loss_grad(x)?,
            ConditionFn::Property(p) => p.loss_grad(x),
        };
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("condition gradient", format!("∇f at {x:?}")));
        }
        Ok(g)
    }

    pub fn value_and_grad(&self, x: &[T]) -> Result<(T, Vec<T>)> {
        Ok((self.value(x)?, self.grad(x)?))
    }

    /// (Q, a, c) when f is exactly quadratic (Linear included with Q = 0),
    /// enabling closed-form posterior expectations.
    pub fn quadratic_parts(&self) -> Option<(Mat<T>, Vec<T>, T)> {
        match self {
            ConditionFn::Linear { a, b } => {
                Some((Mat::zeros(a.len(), a.len()), a.clone(), *b))
            }
            ConditionFn::Quadratic { q, a, c } => Some((q.symmetrized(), a.clone(), *c)),
            ConditionFn::InverseLoss(task) => Some(task.as_quadratic()),
            // property losses are quartic (or transcendental) in x
            ConditionFn::Property(_) => None,
        }
    }

    /// Global gradient-Lipschitz constant, when one exists.
    pub fn grad_lipschitz_global(&self) -> Result<Option<T>> {
        Ok(match self {
            ConditionFn::Linear { .. } => Some(T::zero()),
            ConditionFn::Quadratic { q, .. } => {
                Some(cast::<T>(2.0) * crate::linalg::sym_max_abs_eig(&q.symmetrized())?)
            }
            ConditionFn::InverseLoss(task) => {
                let (q, _, _) = task.as_quadratic();
                Some(cast::<T>(2.0) * crate::linalg::sym_max_abs_eig(&q)?)
            }
            ConditionFn::Property(p) => p.grad_lipschitz_global(),
        })
    }

    /// Tight (K, L) on a bounding box.
    pub fn lipschitz_on_box(&self, bounds: &BoundingBox<T>) -> Result<LipschitzConstants<T>> {
        if bounds.dim() != self.dim() {
            return Err(Error::dimension("lipschitz box", self.dim(), bounds.dim()));
        }
        Ok(match self {
            ConditionFn::Linear { a, .. } => LipschitzConstants {
                value_lipschitz: norm2(a),
                grad_lipschitz: T::zero(),
            },
            ConditionFn::Quadratic { .. } | ConditionFn::InverseLoss(_) => {
                // ‖∇f‖ is convex, so its box maximum sits at a vertex
                if bounds.dim() > 20 {
                    return Err(Error::Config(
                        "box Lipschitz constants limited to dim <= 20".into(),
                    ));
                }
                let mut k = T::zero();
                for v in bounds.vertices() {
                    k = k.max(norm2(&self.grad(&v)?));
                }
                LipschitzConstants {
                    value_lipschitz: k,
                    grad_lipschitz: self
                        .grad_lipschitz_global()?
                        .expect("quadratics have global L"),
                }
            }
            ConditionFn::Property(p) => {
                let (u_lo, u_hi) = p.u_range_on_box(bounds);
                LipschitzConstants {
                    value_lipschitz: p.scan_max(u_lo, u_hi, |u| p.grad_norm_at(u)),
                    grad_lipschitz: p.scan_max(u_lo, u_hi, |u| p.hessian_norm_at(u)),
                }
            }
        })
    }

    /// Oracle E[f(x0) | x_t]: exact sampling from the exact posterior,
    /// plus the closed form when f is quadratic.
    pub fn posterior_expectation<R: rand::Rng + ?Sized>(
        &self,
        prior: &AnalyticPrior<T>,
        xt: &[T],
        t: usize,
        samples: usize,
        rng: &mut R,
    ) -> Result<OracleExpectation<T>> {
        let closed_form = match self.quadratic_parts() {
            Some((q, a, c)) => Some(prior.posterior(xt, t)?.quadratic_expectation(&q, &a, c)),
            None => None,
        };
        let mut bad_sample: Option<String> = None;
        let mc = prior.mc_expectation(
            xt,
            t,
            |x0| match self.value(x0) {
                Ok(v) => v,
                Err(e) => {
                    bad_sample.get_or_insert_with(|| e.to_string());
                    T::nan()
                }
            },
            samples,
            rng,
        )?;
        if let Some(detail) = bad_sample {
            return Err(Error::numeric("posterior expectation", detail));
        }
        Ok(OracleExpectation { mc, closed_form })
    }

    fn check_dim(&self, x: &[T]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::dimension("condition input", self.dim(), x.len()));
        }
        Ok(())
    }

    /// Rebuilds cached state after deserialization.
    pub fn hydrate(&mut self) -> Result<()> {
        if let ConditionFn::InverseLoss(task) = self {
            task.hydrate()?;
        }
        Ok(())
    }
}

/// Content/style loss pair whose coordinate supports are disjoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct DualAttributeTask<T = f64> {
    pub content: ConditionFn<T>,
    pub style: ConditionFn<T>,
    pub content_support: Vec<usize>,
    pub style_support: Vec<usize>,
}

impl<T: Scalar> DualAttributeTask<T> {
    pub fn new(
        content: ConditionFn<T>,
        content_support: Vec<usize>,
        style: ConditionFn<T>,
        style_support: Vec<usize>,
    ) -> Result<Self> {
        let dim = content.dim();
        if style.dim() != dim {
            return Err(Error::dimension("dual task style", dim, style.dim()));
        }
        for &i in content_support.iter().chain(&style_support) {
            if i >= dim {
                return Err(Error::Config(format!("support index {i} out of range")));
            }
        }
        if content_support.iter().any(|i| style_support.contains(i)) {
            return Err(Error::Config(
                "content and style supports overlap; decoupling must be structural".into(),
            ));
        }
        let task = DualAttributeTask {
            content,
            style,
            content_support,
            style_support,
        };
        task.verify_supports()?;
        Ok(task)
    }

    /// Checks on deterministic probe points that each gradient vanishes
    /// off its declared support.
    fn verify_supports(&self) -> Result<()> {
        let dim = self.content.dim();
        let probes = 16;
        for p in 0..probes {
            let x: Vec<T> = (0..dim)
                .map(|i| {
                    let raw = ((p * 31 + i * 17 + 7) % 23) as f64 / 23.0 * 4.0 - 2.0;
                    cast::<T>(raw)
                })
                .collect();
            let gc = self.content.grad(&x)?;
            let gs = self.style.grad(&x)?;
            for i in 0..dim {
                if !self.content_support.contains(&i) && gc[i] != T::zero() {
                    return Err(Error::Config(format!(
                        "content gradient leaks onto coordinate {i}"
                    )));
                }
                if !self.style_support.contains(&i) && gs[i] != T::zero() {
                    return Err(Error::Config(format!(
                        "style gradient leaks onto coordinate {i}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn dual_losses(&self, x: &[T]) -> Result<(T, T)> {
        Ok((self.content.value(x)?, self.style.value(x)?))
    }
}

/// Exact conditional reference for a linear-Gaussian task: p(x0 | y) is
/// itself a mixture, computed in closed form.
pub fn exact_task_posterior<T: Scalar>(
    prior: &GaussianMixture<T>,
    task: &LinearInverseTask<T>,
) -> Result<GaussianMixture<T>> {
    let noise_var = task.noise_level * task.noise_level;
    prior.condition_linear(task.matrix(), &task.y, noise_var)
}
