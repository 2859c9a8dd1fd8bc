//! Losses, analytic gradients and predictions for the two experiment models:
//! l2-regularized binary logistic regression and a one-hidden-layer softmax
//! MLP with ReLU activation.
//!
//! MLP parameters are stored flat as `W1 | b1 | W2 | b2`, where `W1` is
//! input-major (`W1[i * hidden + j]` links input `i` to hidden unit `j`) and
//! `W2` is row-major (`W2[o * hidden + j]`).

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::{self, RngStream};
use crate::vector::{dot, GradVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelShape {
    Logistic { features: usize },
    Mlp { input: usize, hidden: usize, output: usize },
}

impl ModelShape {
    pub const MNIST_MLP: ModelShape = ModelShape::Mlp { input: 784, hidden: 32, output: 10 };

    pub fn param_count(&self) -> usize {
        match *self {
            ModelShape::Logistic { features } => features,
            ModelShape::Mlp { input, hidden, output } => {
                hidden * input + hidden + output * hidden + output
            }
        }
    }

    pub fn input_dim(&self) -> usize {
        match *self {
            ModelShape::Logistic { features } => features,
            ModelShape::Mlp { input, .. } => input,
        }
    }

    pub fn label_kind(&self) -> LabelKind {
        match self {
            ModelShape::Logistic { .. } => LabelKind::Binary,
            ModelShape::Mlp { .. } => LabelKind::Class10,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            ModelShape::Logistic { features: 0 } => {
                Err(Error::invalid("logistic model needs at least one feature"))
            }
            ModelShape::Mlp { input, hidden, output }
                if input == 0 || hidden == 0 || output != 10 =>
            {
                Err(Error::invalid(format!(
                    "invalid MLP shape {input}x{hidden}x{output} (output must be 10)"
                )))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    values: Vec<f64>,
    shape: ModelShape,
}

impl ModelParams {
    pub fn new(shape: ModelShape, values: Vec<f64>) -> Result<Self> {
        shape.validate()?;
        if values.len() != shape.param_count() {
            return Err(Error::DimMismatch { expected: shape.param_count(), got: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("parameter {i}")));
        }
        Ok(ModelParams { values, shape })
    }

    pub fn zeros(shape: ModelShape) -> Self {
        ModelParams { values: vec![0.0; shape.param_count()], shape }
    }

    pub fn shape(&self) -> ModelShape {
        self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mutable access for optimizers. Callers keep the entries finite.
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    fn mlp_parts(&self) -> Result<MlpView<'_>> {
        match self.shape {
            ModelShape::Mlp { input, hidden, output } => {
                let (w1, rest) = self.values.split_at(hidden * input);
                let (b1, rest) = rest.split_at(hidden);
                let (w2, b2) = rest.split_at(output * hidden);
                Ok(MlpView { input, hidden, output, w1, b1, w2, b2 })
            }
            ModelShape::Logistic { .. } => {
                Err(Error::LabelMismatch("expected MLP parameters, got logistic".into()))
            }
        }
    }

    fn logistic_weights(&self) -> Result<&[f64]> {
        match self.shape {
            ModelShape::Logistic { .. } => Ok(&self.values),
            ModelShape::Mlp { .. } => {
                Err(Error::LabelMismatch("expected logistic parameters, got MLP".into()))
            }
        }
    }
}

/// The MLP blocks of a parameter vector. `w1` is input-major (entry
/// `i * hidden + j` connects input `i` to hidden unit `j`) so a sparse input
/// touches contiguous columns; `w2` is row-major.
struct MlpView<'a> {
    input: usize,
    hidden: usize,
    output: usize,
    w1: &'a [f64],
    b1: &'a [f64],
    w2: &'a [f64],
    b2: &'a [f64],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    Binary,
    Class10,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    /// -1 or +1
    Binary(i8),
    /// 0..=9
    Class(u8),
}

impl Label {
    pub fn kind(&self) -> LabelKind {
        match self {
            Label::Binary(_) => LabelKind::Binary,
            Label::Class(_) => LabelKind::Class10,
        }
    }

    pub fn positive(positive: bool) -> Label {
        Label::Binary(if positive { 1 } else { -1 })
    }
}

/// Owned sample, mostly for fixtures. Datasets store samples flat.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: Label,
}

#[derive(Debug, Clone, Copy)]
pub struct SampleRef<'a> {
    pub features: &'a [f64],
    pub label: Label,
}

/// A non-empty mini-batch with a uniform label kind.
#[derive(Debug, Clone)]
pub struct Batch<'a> {
    samples: Vec<SampleRef<'a>>,
}

impl<'a> Batch<'a> {
    pub fn new(samples: Vec<SampleRef<'a>>) -> Result<Self> {
        let first = samples.first().ok_or(Error::Empty("batch"))?;
        let kind = first.label.kind();
        let dim = first.features.len();
        for s in &samples {
            if s.label.kind() != kind {
                return Err(Error::LabelMismatch("mixed label kinds in batch".into()));
            }
            if s.features.len() != dim {
                return Err(Error::DimMismatch { expected: dim, got: s.features.len() });
            }
        }
        Ok(Batch { samples })
    }

    pub fn from_samples(samples: &'a [Sample]) -> Result<Self> {
        Batch::new(
            samples.iter().map(|s| SampleRef { features: &s.features, label: s.label }).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[SampleRef<'a>] {
        &self.samples
    }
}

/// Kaiming-normal weights (variance 2/fan_in) with zero biases for the MLP;
/// all zeros for the convex logistic model.
pub fn init_params(shape: ModelShape, seed: u64) -> Result<ModelParams> {
    init_params_with(shape, &mut rng::from_seed(seed))
}

pub fn init_params_with(shape: ModelShape, rng: &mut RngStream) -> Result<ModelParams> {
    shape.validate()?;
    match shape {
        ModelShape::Logistic { .. } => Ok(ModelParams::zeros(shape)),
        ModelShape::Mlp { input, hidden, output } => {
            let mut values = vec![0.0; shape.param_count()];
            let w1 = Normal::new(0.0, (2.0 / input as f64).sqrt()).expect("valid std");
            let w2 = Normal::new(0.0, (2.0 / hidden as f64).sqrt()).expect("valid std");
            let w1_end = hidden * input;
            let w2_start = w1_end + hidden;
            let w2_end = w2_start + output * hidden;
            for v in &mut values[..w1_end] {
                *v = w1.sample(rng);
            }
            for v in &mut values[w2_start..w2_end] {
                *v = w2.sample(rng);
            }
            ModelParams::new(shape, values)
        }
    }
}

/// `log(1 + exp(t))` without overflow.
pub fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn binary_label(label: Label) -> Result<f64> {
    match label {
        Label::Binary(y) if y == 1 || y == -1 => Ok(y as f64),
        Label::Binary(y) => Err(Error::LabelMismatch(format!("binary label must be +-1, got {y}"))),
        Label::Class(_) => Err(Error::LabelMismatch("logistic model needs binary labels".into())),
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if rho >= 0.0 && rho.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("regularization must be >= 0, got {rho}")))
    }
}

pub fn logistic_loss(p: &ModelParams, b: &Batch<'_>, rho: f64) -> Result<f64> {
    check_rho(rho)?;
    let x = p.logistic_weights()?;
    let mut total = 0.0;
    for s in b.samples() {
        let y = binary_label(s.label)?;
        if s.features.len() != x.len() {
            return Err(Error::DimMismatch { expected: x.len(), got: s.features.len() });
        }
        total += softplus(-y * dot(s.features, x));
    }
    Ok(total / b.len() as f64 + 0.5 * rho * dot(x, x))
}

pub fn logistic_grad(p: &ModelParams, b: &Batch<'_>, rho: f64) -> Result<GradVector> {
    check_rho(rho)?;
    let x = p.logistic_weights()?;
    let mut grad = vec![0.0; x.len()];
    for s in b.samples() {
        let y = binary_label(s.label)?;
        if s.features.len() != x.len() {
            return Err(Error::DimMismatch { expected: x.len(), got: s.features.len() });
        }
        let coef = -y * sigmoid(-y * dot(s.features, x));
        for (g, phi) in grad.iter_mut().zip(s.features) {
            *g += coef * phi;
        }
    }
    let inv = 1.0 / b.len() as f64;
    for (g, xi) in grad.iter_mut().zip(x) {
        *g = *g * inv + rho * xi;
    }
    Ok(GradVector(grad))
}

/// Softmax with max-logit subtraction, in place.
pub fn softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in logits.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in logits.iter_mut() {
        *v /= sum;
    }
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Scratch buffers for one MLP forward pass.
struct MlpScratch {
    nonzero: Vec<usize>,
    values: Vec<f64>,
    pre: Vec<f64>,
    act: Vec<f64>,
    logits: Vec<f64>,
}

impl MlpScratch {
    fn new(input: usize, hidden: usize, output: usize) -> Self {
        MlpScratch {
            nonzero: Vec::with_capacity(input),
            values: Vec::with_capacity(input),
            pre: vec![0.0; hidden],
            act: vec![0.0; hidden],
            logits: vec![0.0; output],
        }
    }
}

impl MlpView<'_> {
    /// Fills `scratch.logits`; input entries that are exactly zero are skipped.
    fn forward_logits(&self, u: &[f64], scratch: &mut MlpScratch) {
        scratch.nonzero.clear();
        scratch.values.clear();
        for (i, &v) in u.iter().enumerate() {
            if v != 0.0 {
                scratch.nonzero.push(i);
                scratch.values.push(v);
            }
        }
        let h = self.hidden;
        scratch.pre.fill(0.0);
        for (&i, &v) in scratch.nonzero.iter().zip(&scratch.values) {
            for (p, w) in scratch.pre.iter_mut().zip(&self.w1[i * h..(i + 1) * h]) {
                *p += w * v;
            }
        }
        for j in 0..h {
            scratch.pre[j] += self.b1[j];
            scratch.act[j] = scratch.pre[j].max(0.0);
        }
        for o in 0..self.output {
            let row = &self.w2[o * h..(o + 1) * h];
            scratch.logits[o] = dot(row, &scratch.act) + self.b2[o];
        }
    }
}

fn check_mlp_input(view: &MlpView<'_>, u: &[f64]) -> Result<()> {
    if u.len() != view.input {
        return Err(Error::DimMismatch { expected: view.input, got: u.len() });
    }
    Ok(())
}

/// Class probabilities `softmax(W2 relu(W1 u + b1) + b2)`.
pub fn mlp_forward(p: &ModelParams, input: &[f64]) -> Result<Vec<f64>> {
    let view = p.mlp_parts()?;
    check_mlp_input(&view, input)?;
    let mut scratch = MlpScratch::new(view.input, view.hidden, view.output);
    view.forward_logits(input, &mut scratch);
    let mut probs = scratch.logits;
    softmax_in_place(&mut probs);
    Ok(probs)
}

fn class_label(label: Label, output: usize) -> Result<usize> {
    match label {
        Label::Class(c) if (c as usize) < output => Ok(c as usize),
        Label::Class(c) => Err(Error::LabelMismatch(format!("class {c} out of range"))),
        Label::Binary(_) => Err(Error::LabelMismatch("MLP needs class labels".into())),
    }
}

/// Mean cross-entropy over the batch and its gradient by backpropagation.
pub fn mlp_loss_grad(p: &ModelParams, b: &Batch<'_>) -> Result<(f64, GradVector)> {
    let view = p.mlp_parts()?;
    let (input, hidden, output) = (view.input, view.hidden, view.output);
    let mut grad = vec![0.0; p.dim()];
    let (gw1, rest) = grad.split_at_mut(hidden * input);
    let (gb1, rest) = rest.split_at_mut(hidden);
    let (gw2, gb2) = rest.split_at_mut(output * hidden);

    let mut scratch = MlpScratch::new(input, hidden, output);
    let mut delta_out = vec![0.0; output];
    let mut delta_hidden = vec![0.0; hidden];
    let mut loss = 0.0;

    for s in b.samples() {
        check_mlp_input(&view, s.features)?;
        let y = class_label(s.label, output)?;
        view.forward_logits(s.features, &mut scratch);
        loss += log_sum_exp(&scratch.logits) - scratch.logits[y];

        delta_out.copy_from_slice(&scratch.logits);
        softmax_in_place(&mut delta_out);
        delta_out[y] -= 1.0;

        for o in 0..output {
            let d = delta_out[o];
            gb2[o] += d;
            let row = &mut gw2[o * hidden..(o + 1) * hidden];
            for (g, a) in row.iter_mut().zip(&scratch.act) {
                *g += d * a;
            }
        }
        for j in 0..hidden {
            delta_hidden[j] = if scratch.pre[j] > 0.0 {
                (0..output).map(|o| view.w2[o * hidden + j] * delta_out[o]).sum()
            } else {
                0.0
            };
        }
        for (g, d) in gb1.iter_mut().zip(&delta_hidden) {
            *g += d;
        }
        for (&i, &v) in scratch.nonzero.iter().zip(&scratch.values) {
            for (g, d) in gw1[i * hidden..(i + 1) * hidden].iter_mut().zip(&delta_hidden) {
                *g += d * v;
            }
        }
    }

    let inv = 1.0 / b.len() as f64;
    for g in grad.iter_mut() {
        *g *= inv;
    }
    Ok((loss * inv, GradVector(grad)))
}

/// Loss and gradient for whichever model `p` is. `rho` only applies to the
/// logistic model.
pub fn loss_grad(p: &ModelParams, b: &Batch<'_>, rho: f64) -> Result<(f64, GradVector)> {
    match p.shape() {
        ModelShape::Logistic { .. } => {
            Ok((logistic_loss(p, b, rho)?, logistic_grad(p, b, rho)?))
        }
        ModelShape::Mlp { .. } => mlp_loss_grad(p, b),
    }
}

const EVAL_CHUNK: usize = 1024;

fn check_dataset(p: &ModelParams, ds: &Dataset) -> Result<()> {
    if ds.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    if ds.label_kind() != p.shape().label_kind() {
        return Err(Error::LabelMismatch(format!(
            "dataset labels are {:?}, model expects {:?}",
            ds.label_kind(),
            p.shape().label_kind()
        )));
    }
    if ds.feature_dim() != p.shape().input_dim() {
        return Err(Error::DimMismatch { expected: p.shape().input_dim(), got: ds.feature_dim() });
    }
    Ok(())
}

/// Per-sample loss and correctness for a contiguous index range.
fn eval_range(p: &ModelParams, ds: &Dataset, range: std::ops::Range<usize>) -> (f64, usize) {
    let mut loss = 0.0;
    let mut correct = 0usize;
    match p.shape() {
        ModelShape::Logistic { .. } => {
            let x = p.values();
            for i in range {
                let s = ds.sample(i);
                let y = match s.label {
                    Label::Binary(y) => y as f64,
                    Label::Class(_) => unreachable!("checked by check_dataset"),
                };
                let margin = dot(s.features, x);
                loss += softplus(-y * margin);
                let pred = if margin >= 0.0 { 1.0 } else { -1.0 };
                if pred == y {
                    correct += 1;
                }
            }
        }
        ModelShape::Mlp { .. } => {
            let view = p.mlp_parts().expect("shape checked");
            let mut scratch = MlpScratch::new(view.input, view.hidden, view.output);
            for i in range {
                let s = ds.sample(i);
                let y = match s.label {
                    Label::Class(c) => c as usize,
                    Label::Binary(_) => unreachable!("checked by check_dataset"),
                };
                view.forward_logits(s.features, &mut scratch);
                loss += log_sum_exp(&scratch.logits) - scratch.logits[y];
                if argmax(&scratch.logits) == y {
                    correct += 1;
                }
            }
        }
    }
    (loss, correct)
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Mean loss and top-1 accuracy over a whole dataset. Chunk sums are
/// combined in index order, so the result does not depend on thread count.
pub fn dataset_metrics(p: &ModelParams, ds: &Dataset, rho: f64) -> Result<(f64, f64)> {
    check_dataset(p, ds)?;
    check_rho(rho)?;
    let n = ds.len();
    let chunks: Vec<(f64, usize)> = (0..n.div_ceil(EVAL_CHUNK))
        .into_par_iter()
        .map(|c| eval_range(p, ds, c * EVAL_CHUNK..((c + 1) * EVAL_CHUNK).min(n)))
        .collect();
    let mut loss = 0.0;
    let mut correct = 0;
    for (l, c) in chunks {
        loss += l;
        correct += c;
    }
    let mut mean_loss = loss / n as f64;
    if let ModelShape::Logistic { .. } = p.shape() {
        mean_loss += 0.5 * rho * dot(p.values(), p.values());
    }
    Ok((mean_loss, correct as f64 / n as f64))
}

/// Fraction of samples classified correctly: argmax class for the MLP,
/// `sign(phi . x)` with `sign(0) = +1` for logistic regression.
pub fn top1_accuracy(p: &ModelParams, ds: &Dataset) -> Result<f64> {
    dataset_metrics(p, ds, 0.0).map(|(_, acc)| acc)
}

/// Draws `n` i.i.d. standard-normal values; shared by fixtures.
pub(crate) fn normal_vec(rng: &mut impl Rng, n: usize, std: f64) -> Vec<f64> {
    let dist = Normal::new(0.0, std).expect("valid std");
    (0..n).map(|_| dist.sample(rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::from_seed;

    fn binary_sample(features: Vec<f64>, y: i8) -> Sample {
        Sample { features, label: Label::Binary(y) }
    }

    fn random_logistic_case(seed: u64, m: usize, n: usize) -> (ModelParams, Vec<Sample>) {
        let mut rng = from_seed(seed);
        let x = normal_vec(&mut rng, m, 0.5);
        let samples = (0..n)
            .map(|_| binary_sample(normal_vec(&mut rng, m, 1.0), if rng.random::<bool>() { 1 } else { -1 }))
            .collect();
        (ModelParams::new(ModelShape::Logistic { features: m }, x).unwrap(), samples)
    }

    fn random_mlp_case(seed: u64, n: usize) -> (ModelParams, Vec<Sample>) {
        let mut rng = from_seed(seed);
        let shape = ModelShape::MNIST_MLP;
        let mut p = init_params(shape, seed).unwrap();
        // nonzero biases so the check also covers b1/b2
        let start = 784 * 32;
        for v in &mut p.values_mut()[start..start + 32] {
            *v = rng.random_range(-0.3..0.3);
        }
        let samples = (0..n)
            .map(|_| Sample {
                features: (0..784)
                    .map(|_| if rng.random::<f64>() < 0.6 { 0.0 } else { rng.random::<f64>() })
                    .collect(),
                label: Label::Class(rng.random_range(0..10)),
            })
            .collect();
        (p, samples)
    }

    // Central-difference oracle, independent of the analytic gradient code.
    fn fd_coord(f: &dyn Fn(&ModelParams) -> f64, p: &ModelParams, i: usize, h: f64) -> f64 {
        let mut plus = p.clone();
        plus.values_mut()[i] += h;
        let mut minus = p.clone();
        minus.values_mut()[i] -= h;
        (f(&plus) - f(&minus)) / (2.0 * h)
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let scale = crate::vector::norm(a).max(crate::vector::norm(b)).max(1e-12);
        diff / scale
    }

    #[test]
    fn logistic_zero_params_give_ln2() {
        let (_, samples) = random_logistic_case(3, 6, 5);
        let b = Batch::from_samples(&samples).unwrap();
        let zero = ModelParams::zeros(ModelShape::Logistic { features: 6 });
        assert!((logistic_loss(&zero, &b, 0.0).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!((logistic_loss(&zero, &b, 0.01).unwrap() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn logistic_hand_evaluation() {
        let mut phi = vec![0.0; 54];
        phi[0] = 1.0;
        let samples = vec![binary_sample(phi, 1)];
        let b = Batch::from_samples(&samples).unwrap();
        let mut x = vec![0.0; 54];
        x[0] = 3f64.ln();
        let p = ModelParams::new(ModelShape::Logistic { features: 54 }, x).unwrap();
        let expected = (4.0f64 / 3.0).ln();
        assert!((logistic_loss(&p, &b, 0.0).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn logistic_grad_at_origin_is_minus_half_phi() {
        let phi = vec![0.3, -1.2, 2.0];
        let samples = vec![binary_sample(phi.clone(), 1)];
        let b = Batch::from_samples(&samples).unwrap();
        let g = logistic_grad(&ModelParams::zeros(ModelShape::Logistic { features: 3 }), &b, 0.0)
            .unwrap();
        for (gi, pi) in g.iter().zip(&phi) {
            assert_eq!(*gi, -pi / 2.0);
        }
    }

    #[test]
    fn logistic_grad_matches_finite_differences() {
        for seed in 0..20 {
            let (p, samples) = random_logistic_case(seed, 8, 7);
            let b = Batch::from_samples(&samples).unwrap();
            let rho = 0.01;
            let analytic = logistic_grad(&p, &b, rho).unwrap();
            let f = |q: &ModelParams| logistic_loss(q, &b, rho).unwrap();
            let fd: Vec<f64> = (0..8).map(|i| fd_coord(&f, &p, i, 1e-5)).collect();
            assert!(rel_err(&fd, &analytic) <= 1e-5, "seed {seed}");
        }
    }

    #[test]
    fn duplicated_sample_gives_same_gradient() {
        let (p, samples) = random_logistic_case(11, 5, 1);
        let twice = vec![samples[0].clone(), samples[0].clone()];
        let g1 = logistic_grad(&p, &Batch::from_samples(&samples).unwrap(), 0.1).unwrap();
        let g2 = logistic_grad(&p, &Batch::from_samples(&twice).unwrap(), 0.1).unwrap();
        for (a, b) in g1.iter().zip(g2.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn logistic_rejects_class_labels() {
        let samples = vec![Sample { features: vec![1.0], label: Label::Class(3) }];
        let b = Batch::from_samples(&samples).unwrap();
        let p = ModelParams::zeros(ModelShape::Logistic { features: 1 });
        assert!(matches!(logistic_loss(&p, &b, 0.0), Err(Error::LabelMismatch(_))));
    }

    #[test]
    fn extreme_margins_stay_finite() {
        let samples = vec![binary_sample(vec![1e6], 1), binary_sample(vec![1e6], -1)];
        let b = Batch::from_samples(&samples).unwrap();
        let p = ModelParams::new(ModelShape::Logistic { features: 1 }, vec![10.0]).unwrap();
        let loss = logistic_loss(&p, &b, 0.0).unwrap();
        assert!((loss - 1e7 / 2.0).abs() < 1e-6);
        assert!(logistic_grad(&p, &b, 0.0).unwrap().is_finite());
    }

    #[test]
    fn zero_mlp_is_uniform() {
        let p = ModelParams::zeros(ModelShape::MNIST_MLP);
        let probs = mlp_forward(&p, &vec![0.7; 784]).unwrap();
        for v in probs {
            assert!((v - 0.1).abs() < 1e-15);
        }
        let (_, samples) = random_mlp_case(2, 4);
        let (loss, _) = mlp_loss_grad(&p, &Batch::from_samples(&samples).unwrap()).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn softmax_is_shift_invariant_and_normalized() {
        let mut a = vec![700.0, -700.0, 3.0, 699.5];
        let mut b: Vec<f64> = a.iter().map(|v| v - 1234.5).collect();
        softmax_in_place(&mut a);
        softmax_in_place(&mut b);
        assert!((a.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn mlp_forward_at_zero_input_matches_direct_evaluation() {
        let (p, _) = random_mlp_case(5, 1);
        let probs = mlp_forward(&p, &vec![0.0; 784]).unwrap();
        // softmax(W2 relu(b1) + b2) evaluated from the flat layout by hand
        let v = p.values();
        let b1 = &v[784 * 32..784 * 32 + 32];
        let w2 = &v[784 * 32 + 32..784 * 32 + 32 + 320];
        let b2 = &v[784 * 32 + 32 + 320..];
        let mut logits = [0.0; 10];
        for o in 0..10 {
            let mut acc = b2[o];
            for j in 0..32 {
                acc += w2[o * 32 + j] * b1[j].max(0.0);
            }
            logits[o] = acc;
        }
        let m = logits.iter().cloned().fold(f64::MIN, f64::max);
        let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
        for o in 0..10 {
            assert!((probs[o] - (logits[o] - m).exp() / z).abs() < 1e-14);
        }
    }

    #[test]
    fn mlp_grad_matches_finite_differences() {
        let (p, samples) = random_mlp_case(9, 3);
        let b = Batch::from_samples(&samples).unwrap();
        let (_, analytic) = mlp_loss_grad(&p, &b).unwrap();
        let f = |q: &ModelParams| mlp_loss_grad(q, &b).unwrap().0;
        let mut rng = from_seed(99);
        let coords: Vec<usize> = (0..50)
            .map(|k| if k < 10 { 784 * 32 + rng.random_range(0..(32 + 330)) } else { rng.random_range(0..p.dim()) })
            .collect();
        let fd: Vec<f64> = coords.iter().map(|&i| fd_coord(&f, &p, i, 1e-5)).collect();
        let an: Vec<f64> = coords.iter().map(|&i| analytic[i]).collect();
        assert!(rel_err(&fd, &an) <= 1e-4);
    }

    #[test]
    fn repeated_mlp_sample_matches_single() {
        let (p, samples) = random_mlp_case(4, 1);
        let rep = vec![samples[0].clone(); 5];
        let (l1, g1) = mlp_loss_grad(&p, &Batch::from_samples(&samples).unwrap()).unwrap();
        let (l5, g5) = mlp_loss_grad(&p, &Batch::from_samples(&rep).unwrap()).unwrap();
        assert!((l1 - l5).abs() < 1e-12);
        assert!(rel_err(&g1, &g5) < 1e-12);
    }

    #[test]
    fn kaiming_variance_and_determinism() {
        let a = init_params(ModelShape::MNIST_MLP, 1).unwrap();
        let b = init_params(ModelShape::MNIST_MLP, 1).unwrap();
        assert_eq!(a, b);
        let w1 = &a.values()[..784 * 32];
        let mean = w1.iter().sum::<f64>() / w1.len() as f64;
        let var = w1.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (w1.len() - 1) as f64;
        let target = 2.0 / 784.0;
        assert!((var / target - 1.0).abs() < 0.2, "variance {var}");
        assert!(a.values()[784 * 32..784 * 32 + 32].iter().all(|v| *v == 0.0));
        let logistic = init_params(ModelShape::Logistic { features: 54 }, 5).unwrap();
        assert!(logistic.values().iter().all(|v| *v == 0.0) && logistic.dim() == 54);
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 0.0]), 1);
        assert_eq!(argmax(&[0.0; 10]), 0);
    }

    #[test]
    fn params_reject_wrong_length_and_nan() {
        assert!(ModelParams::new(ModelShape::Logistic { features: 3 }, vec![0.0; 2]).is_err());
        assert!(ModelParams::new(ModelShape::Logistic { features: 1 }, vec![f64::NAN]).is_err());
        assert_eq!(ModelShape::MNIST_MLP.param_count(), 25_450);
    }
}
