//! Small classifiers with exact cross-entropy gradients.
//!
//! Parameter layout is flat and row-major:
//!
//! * logistic: `W [classes x input] | b [classes]`
//! * mlp: `W1 [hidden x input] | b1 [hidden] | W2 [classes x hidden] | b2 [classes]`

use alloc::vec;
use alloc::vec::Vec;

use crate::data::Dataset;
use crate::error::{check_len, Error, Result};
use crate::linalg::ParamVector;
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Logistic,
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => libm::tanh(x),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative(self, pre: f64, out: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - out * out,
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub input_dim: usize,
    /// Zero for logistic regression.
    pub hidden_dim: usize,
    pub num_classes: usize,
    pub activation: Activation,
}

impl ModelSpec {
    pub fn logistic(input_dim: usize, num_classes: usize) -> Self {
        ModelSpec { kind: ModelKind::Logistic, input_dim, hidden_dim: 0, num_classes, activation: Activation::Tanh }
    }

    pub fn mlp(input_dim: usize, hidden_dim: usize, num_classes: usize, activation: Activation) -> Self {
        ModelSpec { kind: ModelKind::Mlp, input_dim, hidden_dim, num_classes, activation }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.num_classes == 0 {
            return Err(Error::InvalidArgument("model dimensions must be positive".into()));
        }
        match self.kind {
            ModelKind::Mlp if self.hidden_dim == 0 => {
                Err(Error::InvalidArgument("mlp needs a positive hidden dimension".into()))
            }
            ModelKind::Logistic if self.hidden_dim != 0 => {
                Err(Error::InvalidArgument("logistic model has no hidden layer".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn param_count(&self) -> usize {
        match self.kind {
            ModelKind::Logistic => self.input_dim * self.num_classes + self.num_classes,
            ModelKind::Mlp => {
                self.input_dim * self.hidden_dim
                    + self.hidden_dim
                    + self.hidden_dim * self.num_classes
                    + self.num_classes
            }
        }
    }
}

/// Mean cross-entropy over a batch and its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grad: ParamVector,
}

/// A differentiable mean-loss objective over indexed samples.
pub trait Objective {
    fn num_params(&self) -> usize;

    fn loss_and_grad(&self, params: &ParamVector, batch: &[usize]) -> Result<LossGrad>;
}

/// A model bound to the dataset its batch indices refer to.
#[derive(Debug, Clone, Copy)]
pub struct Classifier<'a> {
    pub spec: ModelSpec,
    pub data: &'a Dataset,
}

impl<'a> Classifier<'a> {
    pub fn new(spec: ModelSpec, data: &'a Dataset) -> Result<Self> {
        spec.validate()?;
        check_len(spec.input_dim, data.dim())?;
        if data.num_classes() > spec.num_classes {
            return Err(Error::InvalidArgument("dataset has more classes than the model".into()));
        }
        Ok(Classifier { spec, data })
    }
}

impl Objective for Classifier<'_> {
    fn num_params(&self) -> usize {
        self.spec.param_count()
    }

    fn loss_and_grad(&self, params: &ParamVector, batch: &[usize]) -> Result<LossGrad> {
        loss_and_grad(&self.spec, params, self.data, batch)
    }
}

/// Fan-in scaled uniform weights, zero biases.
pub fn init_params(spec: &ModelSpec, rng: &mut RngStream) -> ParamVector {
    let mut p = Vec::with_capacity(spec.param_count());
    let mut layer = |p: &mut Vec<f64>, fan_in: usize, fan_out: usize| {
        let bound = 1.0 / libm::sqrt(fan_in as f64);
        p.extend((0..fan_in * fan_out).map(|_| rng.uniform_range(-bound, bound)));
        p.extend(core::iter::repeat_n(0.0, fan_out));
    };
    match spec.kind {
        ModelKind::Logistic => layer(&mut p, spec.input_dim, spec.num_classes),
        ModelKind::Mlp => {
            layer(&mut p, spec.input_dim, spec.hidden_dim);
            layer(&mut p, spec.hidden_dim, spec.num_classes);
        }
    }
    ParamVector::from_vec(p)
}

/// Scratch buffers for one forward/backward pass.
struct Workspace {
    pre: Vec<f64>,
    hidden: Vec<f64>,
    logits: Vec<f64>,
}

impl Workspace {
    fn new(spec: &ModelSpec) -> Self {
        Workspace {
            pre: vec![0.0; spec.hidden_dim],
            hidden: vec![0.0; spec.hidden_dim],
            logits: vec![0.0; spec.num_classes],
        }
    }
}

fn affine(weights: &[f64], bias: &[f64], x: &[f64], out: &mut [f64]) {
    let n_in = x.len();
    for (o, (row, b)) in out.iter_mut().zip(weights.chunks_exact(n_in).zip(bias)) {
        let mut acc = *b;
        for (w, xi) in row.iter().zip(x) {
            acc += w * xi;
        }
        *o = acc;
    }
}

fn forward(spec: &ModelSpec, params: &[f64], x: &[f64], ws: &mut Workspace) {
    let (i, h, k) = (spec.input_dim, spec.hidden_dim, spec.num_classes);
    match spec.kind {
        ModelKind::Logistic => affine(&params[..i * k], &params[i * k..], x, &mut ws.logits),
        ModelKind::Mlp => {
            let (w1, rest) = params.split_at(i * h);
            let (b1, rest) = rest.split_at(h);
            let (w2, b2) = rest.split_at(h * k);
            affine(w1, b1, x, &mut ws.pre);
            for (o, p) in ws.hidden.iter_mut().zip(&ws.pre) {
                *o = spec.activation.apply(*p);
            }
            affine(w2, b2, &ws.hidden, &mut ws.logits);
        }
    }
}

/// Turns logits into probabilities in place; returns `-ln p[label]`.
fn softmax_xent(logits: &mut [f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for z in logits.iter_mut() {
        *z = libm::exp(*z - max);
        total += *z;
    }
    let log_total = libm::log(total);
    let loss = log_total - libm::log(logits[label]);
    for z in logits.iter_mut() {
        *z /= total;
    }
    loss.max(0.0)
}

/// Mean cross-entropy of `batch` (indices into `ds`) and its exact gradient.
///
/// Samples are accumulated in ascending index order regardless of the order
/// given, so the result does not depend on batch ordering.
pub fn loss_and_grad(spec: &ModelSpec, params: &ParamVector, ds: &Dataset, batch: &[usize]) -> Result<LossGrad> {
    check_len(spec.param_count(), params.len())?;
    check_len(spec.input_dim, ds.dim())?;
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let mut order = batch.to_vec();
    order.sort_unstable();

    let (i, h, k) = (spec.input_dim, spec.hidden_dim, spec.num_classes);
    let p = params.as_slice();
    let mut grad = vec![0.0; p.len()];
    let mut ws = Workspace::new(spec);
    let mut dhidden = vec![0.0; h];
    let mut loss = 0.0;

    for &s in &order {
        let x = ds.features(s);
        let label = ds.label(s);
        forward(spec, p, x, &mut ws);
        loss += softmax_xent(&mut ws.logits, label);
        // Residual p - onehot(label) now lives in ws.logits.
        ws.logits[label] -= 1.0;
        let r = &ws.logits;
        match spec.kind {
            ModelKind::Logistic => {
                let (gw, gb) = grad.split_at_mut(i * k);
                for (c, rc) in r.iter().enumerate() {
                    for (g, xi) in gw[c * i..(c + 1) * i].iter_mut().zip(x) {
                        *g += rc * xi;
                    }
                    gb[c] += rc;
                }
            }
            ModelKind::Mlp => {
                let (gw1, rest) = grad.split_at_mut(i * h);
                let (gb1, rest) = rest.split_at_mut(h);
                let (gw2, gb2) = rest.split_at_mut(h * k);
                let w2 = &p[i * h + h..i * h + h + h * k];
                dhidden.iter_mut().for_each(|d| *d = 0.0);
                for (c, rc) in r.iter().enumerate() {
                    let row = c * h..(c + 1) * h;
                    for ((g, hj), (d, w)) in
                        gw2[row.clone()].iter_mut().zip(&ws.hidden).zip(dhidden.iter_mut().zip(&w2[row]))
                    {
                        *g += rc * hj;
                        *d += rc * w;
                    }
                    gb2[c] += rc;
                }
                for j in 0..h {
                    let dpre = dhidden[j] * spec.activation.derivative(ws.pre[j], ws.hidden[j]);
                    for (g, xi) in gw1[j * i..(j + 1) * i].iter_mut().zip(x) {
                        *g += dpre * xi;
                    }
                    gb1[j] += dpre;
                }
            }
        }
    }

    let n = order.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    Ok(LossGrad { loss: loss / n, grad: ParamVector::from_vec(grad) })
}

/// Predicted class: argmax of the logits, lowest index on ties.
pub fn predict(spec: &ModelSpec, params: &ParamVector, x: &[f64]) -> usize {
    let mut ws = Workspace::new(spec);
    forward(spec, params.as_slice(), x, &mut ws);
    argmax(&ws.logits)
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (c, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = c;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub loss: f64,
}

/// Accuracy and mean cross-entropy over the whole dataset.
pub fn evaluate(spec: &ModelSpec, params: &ParamVector, ds: &Dataset) -> Result<Evaluation> {
    check_len(spec.param_count(), params.len())?;
    check_len(spec.input_dim, ds.dim())?;
    if ds.is_empty() {
        return Ok(Evaluation { accuracy: 0.0, loss: 0.0 });
    }
    let mut ws = Workspace::new(spec);
    let mut correct = 0usize;
    let mut loss = 0.0;
    for s in 0..ds.len() {
        forward(spec, params.as_slice(), ds.features(s), &mut ws);
        if argmax(&ws.logits) == ds.label(s) {
            correct += 1;
        }
        loss += softmax_xent(&mut ws.logits, ds.label(s));
    }
    let n = ds.len() as f64;
    Ok(Evaluation { accuracy: correct as f64 / n, loss: loss / n })
}
