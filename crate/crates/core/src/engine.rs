//! Reverse-mode gradients for guidance pipelines.
//!
//! Pipelines are DAGs over a closed set of vector-valued primitives
//! (affine maps, frozen-noise shifts, the Tweedie reconstruction, the
//! reverse-kernel mean) rooted at a single input x_t, with any number of
//! weighted scalar loss heads. The set is closed on purpose: each
//! primitive carries an exact vector-Jacobian product, and the Tweedie /
//! reverse-mean primitives pull back through the score using the analytic
//! Hessian-vector product of the mixture log-density, so no nested taping
//! is ever needed.
//!
//! Construction is index-ordered (parents strictly precede children), so
//! the graph is acyclic by construction; evaluation is a pure function of
//! (pipeline, x) and all noise enters as frozen constants.

use std::sync::Arc;

use crate::conditions::ConditionFn;
use crate::error::{Error, Result};
use crate::linalg::{axpy, Mat};
use crate::prior::AnalyticPrior;
use crate::scalar::{cast_usize, Scalar};

/// A scalar value paired with its gradient w.r.t. the root input.
#[derive(Debug, Clone, PartialEq)]
pub struct DualGradient<T = f64> {
    pub value: T,
    pub grad: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug)]
enum NodeOp<T> {
    Input,
    Affine { a: Arc<Mat<T>>, b: Vec<T> },
    ScaleShift { scale: T, shift: Vec<T> },
    Tweedie { t: usize },
    ReverseMean { t: usize },
}

impl<T> NodeOp<T> {
    fn tag(&self) -> &'static str {
        match self {
            NodeOp::Input => "input",
            NodeOp::Affine { .. } => "affine",
            NodeOp::ScaleShift { .. } => "scale_shift",
            NodeOp::Tweedie { .. } => "tweedie",
            NodeOp::ReverseMean { .. } => "reverse_mean",
        }
    }
}

#[derive(Debug)]
struct Node<T> {
    op: NodeOp<T>,
    parent: usize,
    dim: usize,
}

#[derive(Debug)]
struct Head<T> {
    weight: T,
    node: usize,
    loss: ConditionFn<T>,
}

pub struct PipelineBuilder<T: Scalar = f64> {
    prior: Arc<AnalyticPrior<T>>,
    nodes: Vec<Node<T>>,
    heads: Vec<Head<T>>,
}

impl<T: Scalar> PipelineBuilder<T> {
    pub fn new(prior: Arc<AnalyticPrior<T>>) -> Self {
        let dim = prior.dim();
        PipelineBuilder {
            prior,
            nodes: vec![Node {
                op: NodeOp::Input,
                parent: 0,
                dim,
            }],
            heads: Vec::new(),
        }
    }

    pub fn root(&self) -> NodeId {
        NodeId(0)
    }

    fn node_dim(&self, id: NodeId) -> Result<usize> {
        self.nodes
            .get(id.0)
            .map(|n| n.dim)
            .ok_or_else(|| Error::Config(format!("unknown node {}", id.0)))
    }

    fn push(&mut self, op: NodeOp<T>, parent: NodeId, dim: usize) -> NodeId {
        let id = self.nodes.len();
        self.nodes.push(Node {
            op,
            parent: parent.0,
            dim,
        });
        NodeId(id)
    }

    /// y = A x + b.
    pub fn affine(&mut self, parent: NodeId, a: Arc<Mat<T>>, b: Vec<T>) -> Result<NodeId> {
        let in_dim = self.node_dim(parent)?;
        if a.cols() != in_dim {
            return Err(Error::dimension("affine input", in_dim, a.cols()));
        }
        if b.len() != a.rows() {
            return Err(Error::dimension("affine offset", a.rows(), b.len()));
        }
        let dim = a.rows();
        Ok(self.push(NodeOp::Affine { a, b }, parent, dim))
    }

    /// y = scale·x + shift.
    pub fn scale_shift(&mut self, parent: NodeId, scale: T, shift: Vec<T>) -> Result<NodeId> {
        let in_dim = self.node_dim(parent)?;
        if shift.len() != in_dim {
            return Err(Error::dimension("scale_shift offset", in_dim, shift.len()));
        }
        Ok(self.push(NodeOp::ScaleShift { scale, shift }, parent, in_dim))
    }

    /// y = x + shift (frozen noise enters the graph through this).
    pub fn add_const(&mut self, parent: NodeId, shift: Vec<T>) -> Result<NodeId> {
        self.scale_shift(parent, T::one(), shift)
    }

    /// y = x̂0(x) at level t.
    pub fn tweedie(&mut self, parent: NodeId, t: usize) -> Result<NodeId> {
        let in_dim = self.node_dim(parent)?;
        if in_dim != self.prior.dim() {
            return Err(Error::dimension("tweedie input", self.prior.dim(), in_dim));
        }
        self.prior.schedule().alpha_bar(t)?;
        Ok(self.push(NodeOp::Tweedie { t }, parent, in_dim))
    }

    /// y = reverse-kernel mean at step t.
    pub fn reverse_mean(&mut self, parent: NodeId, t: usize) -> Result<NodeId> {
        let in_dim = self.node_dim(parent)?;
        if in_dim != self.prior.dim() {
            return Err(Error::dimension("reverse_mean input", self.prior.dim(), in_dim));
        }
        self.prior.schedule().beta(t)?;
        Ok(self.push(NodeOp::ReverseMean { t }, parent, in_dim))
    }

    /// Registers weight·loss(node output) as part of the pipeline value.
    pub fn head(&mut self, node: NodeId, weight: T, loss: ConditionFn<T>) -> Result<()> {
        let dim = self.node_dim(node)?;
        if loss.dim() != dim {
            return Err(Error::dimension("loss head", dim, loss.dim()));
        }
        self.heads.push(Head {
            weight,
            node: node.0,
            loss,
        });
        Ok(())
    }

    pub fn build(self) -> Result<Pipeline<T>> {
        if self.heads.is_empty() {
            return Err(Error::Config("pipeline has no loss heads".into()));
        }
        Ok(Pipeline {
            prior: self.prior,
            nodes: self.nodes,
            heads: self.heads,
        })
    }
}

/// A built pipeline; evaluation is pure and thread-safe.
pub struct Pipeline<T: Scalar = f64> {
    prior: Arc<AnalyticPrior<T>>,
    nodes: Vec<Node<T>>,
    heads: Vec<Head<T>>,
}

impl<T: Scalar> Pipeline<T> {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Forward value and exact gradient w.r.t. the root input.
    pub fn value_and_grad(&self, x: &[T]) -> Result<DualGradient<T>> {
        let root_dim = self.nodes[0].dim;
        if x.len() != root_dim {
            return Err(Error::dimension("pipeline input", root_dim, x.len()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("pipeline input", "non-finite root point"));
        }
        let n_nodes = self.nodes.len();
        let mut values: Vec<Vec<T>> = Vec::with_capacity(n_nodes);
        // responsibilities and per-component density gradients captured in
        // the forward pass, reused by the score HVP in the backward pass
        let mut score_ctx: Vec<Option<(Vec<T>, Vec<Vec<T>>)>> = Vec::with_capacity(n_nodes);
        for (idx, node) in self.nodes.iter().enumerate() {
            let (out, ctx) = match &node.op {
                NodeOp::Input => (x.to_vec(), None),
                NodeOp::Affine { a, b } => {
                    let mut y = a.matvec(&values[node.parent]);
                    for (yi, &bi) in y.iter_mut().zip(b) {
                        *yi = *yi + bi;
                    }
                    (y, None)
                }
                NodeOp::ScaleShift { scale, shift } => {
                    let y = values[node.parent]
                        .iter()
                        .zip(shift)
                        .map(|(&v, &s)| *scale * v + s)
                        .collect();
                    (y, None)
                }
                NodeOp::Tweedie { t } => {
                    let input = &values[node.parent];
                    let ab = self.prior.schedule().alpha_bar(*t)?;
                    let v = T::one() - ab;
                    if v == T::zero() {
                        (input.clone(), None)
                    } else {
                        let level = self.prior.level(*t)?;
                        let (resp, gs) = level.score_parts(input)?;
                        let mut score = vec![T::zero(); input.len()];
                        for (r, g) in resp.iter().zip(&gs) {
                            axpy(&mut score, *r, g);
                        }
                        let inv_a = T::one() / ab.sqrt();
                        let y = input
                            .iter()
                            .zip(&score)
                            .map(|(&xi, &si)| (xi + v * si) * inv_a)
                            .collect();
                        (y, Some((resp, gs)))
                    }
                }
                NodeOp::ReverseMean { t } => {
                    let input = &values[node.parent];
                    let beta = self.prior.schedule().beta(*t)?;
                    let level = self.prior.level(*t)?;
                    let (resp, gs) = level.score_parts(input)?;
                    let mut score = vec![T::zero(); input.len()];
                    for (r, g) in resp.iter().zip(&gs) {
                        axpy(&mut score, *r, g);
                    }
                    let inv_sqrt_alpha = T::one() / (T::one() - beta).sqrt();
                    let y = input
                        .iter()
                        .zip(&score)
                        .map(|(&xi, &si)| (xi + beta * si) * inv_sqrt_alpha)
                        .collect();
                    (y, Some((resp, gs)))
                }
            };
            if out.iter().any(|v: &T| !v.is_finite()) {
                return Err(Error::numeric(
                    format!("pipeline node {idx} ({})", node.op.tag()),
                    "non-finite output",
                ));
            }
            values.push(out);
            score_ctx.push(ctx);
        }

        let mut value = T::zero();
        let mut adjoints: Vec<Vec<T>> = self.nodes.iter().map(|n| vec![T::zero(); n.dim]).collect();
        for head in &self.heads {
            let (v, g) = head.loss.value_and_grad(&values[head.node])?;
            value = value + head.weight * v;
            axpy(&mut adjoints[head.node], head.weight, &g);
        }

        for idx in (1..n_nodes).rev() {
            let node = &self.nodes[idx];
            if adjoints[idx].iter().all(|&v| v == T::zero()) {
                continue;
            }
            let u = std::mem::take(&mut adjoints[idx]);
            let contribution = match &node.op {
                NodeOp::Input => unreachable!("input is node 0"),
                NodeOp::Affine { a, .. } => a.tr_matvec(&u),
                NodeOp::ScaleShift { scale, .. } => crate::linalg::scale(&u, *scale),
                NodeOp::Tweedie { t } => {
                    let ab = self.prior.schedule().alpha_bar(*t)?;
                    let v = T::one() - ab;
                    if v == T::zero() {
                        u
                    } else {
                        let level = self.prior.level(*t)?;
                        let (resp, gs) =
                            score_ctx[idx].as_ref().expect("score context captured");
                        let hu = level.score_hvp_with_parts(&values[node.parent], &u, resp, gs)?;
                        let inv_a = T::one() / ab.sqrt();
                        u.iter()
                            .zip(&hu)
                            .map(|(&ui, &hi)| (ui + v * hi) * inv_a)
                            .collect()
                    }
                }
                NodeOp::ReverseMean { t } => {
                    let beta = self.prior.schedule().beta(*t)?;
                    let level = self.prior.level(*t)?;
                    let (resp, gs) = score_ctx[idx].as_ref().expect("score context captured");
                    let hu = level.score_hvp_with_parts(&values[node.parent], &u, resp, gs)?;
                    let inv_sqrt_alpha = T::one() / (T::one() - beta).sqrt();
                    u.iter()
                        .zip(&hu)
                        .map(|(&ui, &hi)| (ui + beta * hi) * inv_sqrt_alpha)
                        .collect()
                }
            };
            axpy(&mut adjoints[node.parent], T::one(), &contribution);
        }

        let grad = std::mem::take(&mut adjoints[0]);
        if !value.is_finite() || grad.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("pipeline backward", "non-finite gradient"));
        }
        Ok(DualGradient { value, grad })
    }
}

/// Evaluates a pipeline at x: forward value plus exact gradient.
pub fn grad_of_pipeline<T: Scalar>(pipeline: &Pipeline<T>, x: &[T]) -> Result<DualGradient<T>> {
    pipeline.value_and_grad(x)
}

/// x_t ↦ f(x̂0(x_t)): the plain single-point surrogate pipeline.
pub fn dps_pipeline<T: Scalar>(
    prior: &Arc<AnalyticPrior<T>>,
    t: usize,
    f: &ConditionFn<T>,
) -> Result<Pipeline<T>> {
    let mut pb = PipelineBuilder::new(Arc::clone(prior));
    let root = pb.root();
    let x0 = pb.tweedie(root, t)?;
    pb.head(x0, T::one(), f.clone())?;
    pb.build()
}

/// x_t ↦ mean_m f(x̂0(x_t) + σ·ζ_m) with frozen perturbations ζ.
pub fn lgd_pipeline<T: Scalar>(
    prior: &Arc<AnalyticPrior<T>>,
    t: usize,
    f: &ConditionFn<T>,
    sigma: T,
    zetas: &[Vec<T>],
) -> Result<Pipeline<T>> {
    let mut pb = PipelineBuilder::new(Arc::clone(prior));
    let root = pb.root();
    let x0 = pb.tweedie(root, t)?;
    if sigma == T::zero() || zetas.is_empty() {
        pb.head(x0, T::one(), f.clone())?;
        return pb.build();
    }
    let w = T::one() / cast_usize::<T>(zetas.len());
    for zeta in zetas {
        let shifted = pb.add_const(x0, crate::linalg::scale(zeta, sigma))?;
        pb.head(shifted, w, f.clone())?;
    }
    pb.build()
}

/// x_t ↦ mean_m f(x̂0(mean(x_t) + σ_t·ε_m)) with frozen ε: the averaged
/// one-step-ahead surrogate. The reverse-mean node is shared across the M
/// branches, so the backward pass accumulates their adjoints before the
/// single pull-back through the score at step t.
pub fn abms_pipeline<T: Scalar>(
    prior: &Arc<AnalyticPrior<T>>,
    t: usize,
    f: &ConditionFn<T>,
    eps_set: &[Vec<T>],
) -> Result<Pipeline<T>> {
    if eps_set.is_empty() {
        return Err(Error::Config("abms pipeline needs at least one noise draw".into()));
    }
    if t < 1 {
        return Err(Error::StepOutOfRange {
            t,
            lo: 1,
            hi: prior.schedule().steps(),
        });
    }
    let sigma = prior.schedule().sigma(t)?;
    let mut pb = PipelineBuilder::new(Arc::clone(prior));
    let root = pb.root();
    let mean = pb.reverse_mean(root, t)?;
    let w = T::one() / cast_usize::<T>(eps_set.len());
    for eps in eps_set {
        let noisy = pb.add_const(mean, crate::linalg::scale(eps, sigma))?;
        let x0 = pb.tweedie(noisy, t - 1)?;
        pb.head(x0, w, f.clone())?;
    }
    pb.build()
}

/// Gradient of the M-sample averaged loss through one stochastic reverse
/// step, with the noise set held fixed (reparameterization).
pub fn pathwise_grad_through_step<T: Scalar>(
    prior: &Arc<AnalyticPrior<T>>,
    xt: &[T],
    t: usize,
    eps_set: &[Vec<T>],
    f: &ConditionFn<T>,
) -> Result<DualGradient<T>> {
    abms_pipeline(prior, t, f, eps_set)?.value_and_grad(xt)
}
