//! MLP feature extractor with two linear classifier heads, exact backprop and
//! SGD with momentum.
//!
//! Gradients reach the parameters through two routes. The *full* route
//! updates the heads and propagates into the extractor. The *extractor-only*
//! route skips the head parameters and only carries the feature gradient
//! backwards, which is what the consistency-maximization term needs.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, DenseMatrix};
use crate::math;
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    /// `out × in`
    pub weight: DenseMatrix,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: DenseMatrix::zeros(output, input),
            bias: vec![0.0; output],
        }
    }

    fn uniform(input: usize, output: usize, bound: f64, rng: &mut Rng) -> Self {
        let mut l = Self::zeros(input, output);
        for w in l.weight.data_mut() {
            *w = rng.random_range(-bound..bound);
        }
        l
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }

    fn same_shape(&self, other: &Linear) -> bool {
        self.weight.rows() == other.weight.rows() && self.weight.cols() == other.weight.cols()
    }
}

/// Layer widths of the network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub feature_dim: usize,
    pub class_count: usize,
}

impl ModelShape {
    pub fn desk_scale(input_dim: usize, class_count: usize) -> Self {
        Self {
            input_dim,
            hidden: vec![32, 32],
            feature_dim: 16,
            class_count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// ReLU sits between consecutive layers; the last layer's output is the
    /// feature vector and stays linear.
    pub extractor: Vec<Linear>,
    pub head1: Linear,
    pub head2: Linear,
}

/// Which parameter groups a step may modify.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamGroups {
    pub extractor: bool,
    pub heads: bool,
}

impl ParamGroups {
    pub const ALL: Self = Self {
        extractor: true,
        heads: true,
    };
    pub const EXTRACTOR_ONLY: Self = Self {
        extractor: true,
        heads: false,
    };
    pub const HEADS_ONLY: Self = Self {
        extractor: false,
        heads: true,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Group {
    Extractor,
    Heads,
}

impl ModelParams {
    /// He-uniform extractor weights and PyTorch-style head weights, zero
    /// biases. The two heads share a distribution but draw from different
    /// streams.
    pub fn init(shape: &ModelShape, rng: &mut Rng, head2_rng: &mut Rng) -> Result<Self> {
        if shape.class_count < 2 {
            return Err(Error::config("class_count", "need at least 2 classes"));
        }
        if shape.input_dim == 0 || shape.feature_dim == 0 {
            return Err(Error::config("model", "layer widths must be positive"));
        }
        let mut widths = vec![shape.input_dim];
        widths.extend_from_slice(&shape.hidden);
        widths.push(shape.feature_dim);
        let extractor = widths
            .windows(2)
            .map(|w| Linear::uniform(w[0], w[1], math::sqrt(6.0 / w[0] as f64), rng))
            .collect();
        let bound = 1.0 / math::sqrt(shape.feature_dim as f64);
        let head1 = Linear::uniform(shape.feature_dim, shape.class_count, bound, rng);
        let head2 = Linear::uniform(shape.feature_dim, shape.class_count, bound, head2_rng);
        Ok(Self {
            extractor,
            head1,
            head2,
        })
    }

    /// Builds a model from explicit layers, checking shape consistency.
    pub fn from_layers(extractor: Vec<Linear>, head1: Linear, head2: Linear) -> Result<Self> {
        let m = Self {
            extractor,
            head1,
            head2,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.extractor.is_empty() {
            return Err(Error::config("model", "extractor needs at least one layer"));
        }
        for pair in self.extractor.windows(2) {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::Dimension {
                    context: "extractor layer chain",
                    expected: pair[0].output_dim(),
                    got: pair[1].input_dim(),
                });
            }
        }
        for l in self.layers() {
            if l.bias.len() != l.output_dim() {
                return Err(Error::Dimension {
                    context: "bias length",
                    expected: l.output_dim(),
                    got: l.bias.len(),
                });
            }
        }
        if !self.head1.same_shape(&self.head2) {
            return Err(Error::config("model", "heads must have identical shapes"));
        }
        if self.head1.input_dim() != self.feature_dim() {
            return Err(Error::Dimension {
                context: "head input width",
                expected: self.feature_dim(),
                got: self.head1.input_dim(),
            });
        }
        if self.class_count() < 2 {
            return Err(Error::config("class_count", "need at least 2 classes"));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.extractor[0].input_dim()
    }

    pub fn feature_dim(&self) -> usize {
        self.extractor.last().map_or(0, Linear::output_dim)
    }

    pub fn class_count(&self) -> usize {
        self.head1.output_dim()
    }

    fn layers(&self) -> impl Iterator<Item = &Linear> {
        self.extractor
            .iter()
            .chain(core::iter::once(&self.head1))
            .chain(core::iter::once(&self.head2))
    }

    pub fn zeros_like(&self) -> Self {
        let z = |l: &Linear| Linear::zeros(l.input_dim(), l.output_dim());
        Self {
            extractor: self.extractor.iter().map(z).collect(),
            head1: z(&self.head1),
            head2: z(&self.head2),
        }
    }

    /// Every parameter tensor in a fixed order: extractor layers, head 1,
    /// head 2; weight before bias. The flag marks weight matrices.
    pub fn tensors(&self) -> Vec<(Group, bool, &[f64])> {
        let mut out = Vec::new();
        for l in &self.extractor {
            out.push((Group::Extractor, true, l.weight.data()));
            out.push((Group::Extractor, false, &l.bias[..]));
        }
        for h in [&self.head1, &self.head2] {
            out.push((Group::Heads, true, h.weight.data()));
            out.push((Group::Heads, false, &h.bias[..]));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(Group, bool, &mut [f64])> {
        let mut out = Vec::new();
        for l in &mut self.extractor {
            out.push((Group::Extractor, true, l.weight.data_mut()));
            out.push((Group::Extractor, false, &mut l.bias[..]));
        }
        for h in [&mut self.head1, &mut self.head2] {
            out.push((Group::Heads, true, h.weight.data_mut()));
            out.push((Group::Heads, false, &mut h.bias[..]));
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.2.len()).sum()
    }

    /// Flat-index access, following the order of [`tensors`](Self::tensors).
    pub fn param(&self, mut idx: usize) -> (Group, f64) {
        for (g, _, t) in self.tensors() {
            if idx < t.len() {
                return (g, t[idx]);
            }
            idx -= t.len();
        }
        panic!("parameter index out of range");
    }

    pub fn set_param(&mut self, mut idx: usize, value: f64) {
        for (_, _, t) in self.tensors_mut() {
            if idx < t.len() {
                t[idx] = value;
                return;
            }
            idx -= t.len();
        }
        panic!("parameter index out of range");
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.2.iter().all(|v| v.is_finite()))
    }

    pub fn forward(&self, batch: &DenseMatrix) -> Result<Forward> {
        if batch.cols() != self.input_dim() {
            return Err(Error::Dimension {
                context: "forward input width",
                expected: self.input_dim(),
                got: batch.cols(),
            });
        }
        let mut activations = Vec::with_capacity(self.extractor.len() + 1);
        activations.push(batch.clone());
        let last = self.extractor.len() - 1;
        for (li, layer) in self.extractor.iter().enumerate() {
            let mut z = activations[li].affine(&layer.weight, &layer.bias)?;
            if li != last {
                for v in z.data_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            activations.push(z);
        }
        let features = activations.last().expect("extractor is nonempty");
        let logits1 = features.affine(&self.head1.weight, &self.head1.bias)?;
        let logits2 = features.affine(&self.head2.weight, &self.head2.bias)?;
        let probs1 = linalg::softmax_rows(&logits1);
        let probs2 = linalg::softmax_rows(&logits2);
        Ok(Forward {
            activations,
            logits1,
            logits2,
            probs1,
            probs2,
        })
    }

    /// Averaged softmax of the two heads.
    pub fn predict_proba(&self, batch: &DenseMatrix) -> Result<DenseMatrix> {
        let f = self.forward(batch)?;
        Ok(f.ensemble_probs())
    }

    /// Backpropagates logit gradients into a gradient model of the same shape.
    pub fn backward(&self, fwd: &Forward, grads: &LogitGrads) -> Self {
        let mut out = self.zeros_like();
        let features = fwd.features();
        let n = features.rows();
        let fdim = features.cols();

        head_param_grad(&grads.full1, features, &mut out.head1);
        head_param_grad(&grads.full2, features, &mut out.head2);

        let mut upstream = DenseMatrix::zeros(n, fdim);
        let routes = [
            (&grads.full1, &self.head1),
            (&grads.full2, &self.head2),
            (&grads.extractor_only1, &self.head1),
            (&grads.extractor_only2, &self.head2),
        ];
        for (dz, head) in routes {
            accumulate_input_grad(dz, &head.weight, &mut upstream);
        }

        for li in (0..self.extractor.len()).rev() {
            let input = &fwd.activations[li];
            let layer = &self.extractor[li];
            let g = &mut out.extractor[li];
            for i in 0..n {
                let d = upstream.row(i);
                let x = input.row(i);
                for (k, &dk) in d.iter().enumerate() {
                    if dk == 0.0 {
                        continue;
                    }
                    g.bias[k] += dk;
                    for (gw, &xj) in g.weight.row_mut(k).iter_mut().zip(x) {
                        *gw += dk * xj;
                    }
                }
            }
            if li == 0 {
                break;
            }
            let mut next = DenseMatrix::zeros(n, layer.input_dim());
            accumulate_input_grad(&upstream, &layer.weight, &mut next);
            // ReLU mask: `input` is the post-activation of the previous layer.
            for (v, &a) in next.data_mut().iter_mut().zip(input.data()) {
                if a <= 0.0 {
                    *v = 0.0;
                }
            }
            upstream = next;
        }
        out
    }
}

fn head_param_grad(dz: &DenseMatrix, features: &DenseMatrix, out: &mut Linear) {
    for i in 0..dz.rows() {
        let f = features.row(i);
        for (c, &d) in dz.row(i).iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            out.bias[c] += d;
            for (gw, &fj) in out.weight.row_mut(c).iter_mut().zip(f) {
                *gw += d * fj;
            }
        }
    }
}

/// `out += dz · weight`
fn accumulate_input_grad(dz: &DenseMatrix, weight: &DenseMatrix, out: &mut DenseMatrix) {
    for i in 0..dz.rows() {
        let o = out.row_mut(i);
        for (k, &d) in dz.row(i).iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            for (oj, &wj) in o.iter_mut().zip(weight.row(k)) {
                *oj += d * wj;
            }
        }
    }
}

/// Cached forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    /// `activations[0]` is the input batch, the last entry the features.
    pub activations: Vec<DenseMatrix>,
    pub logits1: DenseMatrix,
    pub logits2: DenseMatrix,
    pub probs1: DenseMatrix,
    pub probs2: DenseMatrix,
}

impl Forward {
    /// Pre-normalization extractor outputs.
    pub fn features(&self) -> &DenseMatrix {
        self.activations.last().expect("nonempty")
    }

    pub fn ensemble_probs(&self) -> DenseMatrix {
        let mut out = self.probs1.clone();
        for (o, &q) in out.data_mut().iter_mut().zip(self.probs2.data()) {
            *o = 0.5 * (*o + q);
        }
        out
    }
}

/// Loss gradients with respect to each head's logits, split by route.
#[derive(Debug, Clone)]
pub struct LogitGrads {
    pub full1: DenseMatrix,
    pub full2: DenseMatrix,
    pub extractor_only1: DenseMatrix,
    pub extractor_only2: DenseMatrix,
}

impl LogitGrads {
    pub fn zeros(rows: usize, classes: usize) -> Self {
        let z = DenseMatrix::zeros(rows, classes);
        Self {
            full1: z.clone(),
            full2: z.clone(),
            extractor_only1: z.clone(),
            extractor_only2: z,
        }
    }

    pub fn add_assign(&mut self, other: &LogitGrads) {
        for (a, b) in [
            (&mut self.full1, &other.full1),
            (&mut self.full2, &other.full2),
            (&mut self.extractor_only1, &other.extractor_only1),
            (&mut self.extractor_only2, &other.extractor_only2),
        ] {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += y;
            }
        }
    }

    fn is_finite(&self) -> bool {
        self.full1.is_finite()
            && self.full2.is_finite()
            && self.extractor_only1.is_finite()
            && self.extractor_only2.is_finite()
    }
}

/// A differentiable scalar loss of one forward pass.
pub trait Objective {
    fn name(&self) -> &'static str;

    /// Loss value and its gradient with respect to the logits.
    fn evaluate(&self, fwd: &Forward) -> Result<(f64, LogitGrads)>;

    fn value(&self, fwd: &Forward) -> Result<f64> {
        self.evaluate(fwd).map(|(v, _)| v)
    }
}

/// One batch and the objectives evaluated on it.
pub struct Term<'a> {
    pub batch: &'a DenseMatrix,
    pub objectives: &'a [&'a dyn Objective],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimState {
    pub velocity: ModelParams,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl OptimState {
    pub fn new(model: &ModelParams, learning_rate: f64, momentum: f64, weight_decay: f64) -> Result<Self> {
        if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be nonnegative and finite"));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::config("momentum", "must lie in [0, 1)"));
        }
        if !(weight_decay >= 0.0 && weight_decay.is_finite()) {
            return Err(Error::config("weight_decay", "must be nonnegative"));
        }
        Ok(Self {
            velocity: model.zeros_like(),
            learning_rate,
            momentum,
            weight_decay,
        })
    }

    /// Momentum SGD; weight decay is applied directly to weight matrices
    /// (never biases) outside the momentum buffer. Excluded groups keep both
    /// their parameters and their buffers.
    pub fn apply(&mut self, model: &mut ModelParams, grads: &ModelParams, groups: ParamGroups) {
        let lr = self.learning_rate;
        let mu = self.momentum;
        let wd = self.weight_decay;
        let gs = grads.tensors();
        let vs = self.velocity.tensors_mut();
        let ps = model.tensors_mut();
        for (((group, is_weight, p), (_, _, v)), (_, _, g)) in ps.into_iter().zip(vs).zip(gs) {
            let enabled = match group {
                Group::Extractor => groups.extractor,
                Group::Heads => groups.heads,
            };
            if !enabled {
                continue;
            }
            for ((pi, vi), &gi) in p.iter_mut().zip(v.iter_mut()).zip(g) {
                *vi = mu * *vi + gi;
                let decay = if is_weight { wd * *pi } else { 0.0 };
                *pi -= lr * *vi + lr * decay;
            }
        }
    }
}

/// Sum of all objective values over all terms, forward only.
pub fn total_loss(model: &ModelParams, terms: &[Term<'_>]) -> Result<f64> {
    let mut total = 0.0;
    for t in terms {
        let fwd = model.forward(t.batch)?;
        for o in t.objectives {
            total += o.value(&fwd)?;
        }
    }
    Ok(total)
}

/// Full gradient of the summed objectives, plus each objective's value in
/// order of appearance.
pub fn gradient(model: &ModelParams, terms: &[Term<'_>]) -> Result<(ModelParams, Vec<f64>)> {
    let mut grads = model.zeros_like();
    let mut values = Vec::new();
    for t in terms {
        let fwd = model.forward(t.batch)?;
        let mut lg = LogitGrads::zeros(t.batch.rows(), model.class_count());
        for o in t.objectives {
            let (v, g) = o.evaluate(&fwd)?;
            if !v.is_finite() {
                return Err(Error::NonFinite { term: o.name() });
            }
            if !g.is_finite() {
                return Err(Error::NonFinite { term: o.name() });
            }
            values.push(v);
            lg.add_assign(&g);
        }
        let g = model.backward(&fwd, &lg);
        for ((_, _, acc), (_, _, part)) in grads.tensors_mut().into_iter().zip(g.tensors()) {
            for (a, p) in acc.iter_mut().zip(part) {
                *a += p;
            }
        }
    }
    if !grads.is_finite() {
        return Err(Error::NonFinite { term: "parameter gradient" });
    }
    Ok((grads, values))
}

/// One optimizer step on the summed objectives. Returns each objective's
/// value before the update.
pub fn backward_step(
    model: &mut ModelParams,
    optim: &mut OptimState,
    terms: &[Term<'_>],
    groups: ParamGroups,
) -> Result<Vec<f64>> {
    let (grads, values) = gradient(model, terms)?;
    optim.apply(model, &grads, groups);
    Ok(values)
}
