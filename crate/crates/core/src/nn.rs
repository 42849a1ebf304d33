//! Siamese pair classifier: a shared dense ReLU trunk embeds each state, the
//! elementwise absolute difference of two embeddings feeds a small dense
//! head, and a sigmoid gives the probability that both states come from the
//! same source. Trained with binary cross entropy and Adam; gradients are
//! hand-derived.

use std::io::{Read, Write};

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::process::{derive_seed, rng_from_seed, StateVector};

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("input dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid architecture: {0}")]
    Architecture(String),
    #[error("invalid training data: {0}")]
    InvalidData(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("non-finite value during training at epoch {epoch}")]
    NumericFailure { epoch: usize, last_good: Box<MlpParams> },
    #[error("non-finite activation")]
    NonFinite,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Hidden widths of the trunk and head; the embedding width is the trunk's
/// output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Architecture {
    pub trunk_hidden: Vec<usize>,
    pub embedding: usize,
    pub head_hidden: Vec<usize>,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            trunk_hidden: vec![128, 128],
            embedding: 64,
            head_hidden: vec![32],
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Layer {
    inp: usize,
    out: usize,
    w: usize,
    b: usize,
}

fn layout(dims: &[usize], mut offset: usize) -> (Vec<Layer>, usize) {
    let mut layers = Vec::with_capacity(dims.len().saturating_sub(1));
    for win in dims.windows(2) {
        let (inp, out) = (win[0], win[1]);
        layers.push(Layer {
            inp,
            out,
            w: offset,
            b: offset + inp * out,
        });
        offset += inp * out + out;
    }
    (layers, offset)
}

/// Parameters of the siamese network, stored flat: every trunk layer then
/// every head layer, each as a row-major `out x in` weight matrix followed
/// by its bias. Inputs are standardized as `(x - input_shift) / input_scale`
/// before the trunk.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub trunk_dims: Vec<usize>,
    pub head_dims: Vec<usize>,
    pub values: Vec<f64>,
    pub input_shift: Vec<f64>,
    pub input_scale: Vec<f64>,
}

/// Cached activations of one forward pass.
struct Trace {
    trunk: Vec<Array2<f64>>,
    head: Vec<Array2<f64>>,
    /// `e_a - e_b` for every pair.
    diff: Array2<f64>,
    probs: Array1<f64>,
}

fn forward_layers(values: &[f64], layers: &[Layer], input: Array2<f64>, relu_last: bool) -> Vec<Array2<f64>> {
    let mut acts = Vec::with_capacity(layers.len() + 1);
    acts.push(input);
    for (l, layer) in layers.iter().enumerate() {
        let w = ArrayView2::from_shape((layer.out, layer.inp), &values[layer.w..layer.b]).expect("layer shape");
        let b = ndarray::ArrayView1::from(&values[layer.b..layer.b + layer.out]);
        let mut z = acts[l].dot(&w.t());
        z += &b;
        if relu_last || l + 1 < layers.len() {
            z.mapv_inplace(|v| v.max(0.0));
        }
        acts.push(z);
    }
    acts
}

/// Backpropagates `grad_out` (gradient w.r.t. the last activation) through
/// `layers`, accumulating parameter gradients into `grads`. Returns the
/// gradient w.r.t. the input when `want_input` is set.
fn backward_layers(
    values: &[f64],
    layers: &[Layer],
    acts: &[Array2<f64>],
    mut grad: Array2<f64>,
    relu_last: bool,
    grads: &mut [f64],
    want_input: bool,
) -> Option<Array2<f64>> {
    for l in (0..layers.len()).rev() {
        let layer = layers[l];
        if relu_last || l + 1 < layers.len() {
            grad.zip_mut_with(&acts[l + 1], |g, &a| {
                if a <= 0.0 {
                    *g = 0.0;
                }
            });
        }
        let gw = grad.t().dot(&acts[l]);
        for (dst, src) in grads[layer.w..layer.b].iter_mut().zip(gw.iter()) {
            *dst += src;
        }
        let gb = grad.sum_axis(Axis(0));
        for (dst, src) in grads[layer.b..layer.b + layer.out].iter_mut().zip(gb.iter()) {
            *dst += src;
        }
        if l > 0 || want_input {
            let w = ArrayView2::from_shape((layer.out, layer.inp), &values[layer.w..layer.b]).expect("layer shape");
            grad = grad.dot(&w);
        }
    }
    want_input.then_some(grad)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

const P_CLAMP: f64 = 1e-12;

/// Binary cross entropy `-[y log p + (1 - y) log(1 - p)]` with `p` clamped
/// to `[1e-12, 1 - 1e-12]`.
pub fn bce_loss(p: f64, same: bool) -> f64 {
    let p = p.clamp(P_CLAMP, 1.0 - P_CLAMP);
    if same {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

impl MlpParams {
    /// He-normal weights, zero biases, identity input standardization.
    pub fn init(input_dim: usize, arch: &Architecture, seed: u64) -> Result<Self, NnError> {
        if input_dim == 0 || arch.embedding == 0 || arch.trunk_hidden.iter().chain(&arch.head_hidden).any(|&w| w == 0) {
            return Err(NnError::Architecture("all layer widths must be positive".into()));
        }
        let mut trunk_dims = vec![input_dim];
        trunk_dims.extend(&arch.trunk_hidden);
        trunk_dims.push(arch.embedding);
        let mut head_dims = vec![arch.embedding];
        head_dims.extend(&arch.head_hidden);
        head_dims.push(1);
        let mut params = Self::zeros(trunk_dims, head_dims)?;
        let mut rng = rng_from_seed(seed);
        let (trunk, head) = params.layers();
        for layer in trunk.iter().chain(&head) {
            let std = (2.0 / layer.inp as f64).sqrt();
            for v in &mut params.values[layer.w..layer.b] {
                *v = std * rng.sample::<f64, _>(StandardNormal);
            }
        }
        Ok(params)
    }

    pub fn zeros(trunk_dims: Vec<usize>, head_dims: Vec<usize>) -> Result<Self, NnError> {
        if trunk_dims.len() < 2 || head_dims.len() < 2 {
            return Err(NnError::Architecture("trunk and head need at least one layer each".into()));
        }
        if trunk_dims.last() != head_dims.first() {
            return Err(NnError::Architecture("head input must equal the embedding width".into()));
        }
        if head_dims.last() != Some(&1) {
            return Err(NnError::Architecture("head must end in a single logit".into()));
        }
        if trunk_dims.iter().chain(&head_dims).any(|&d| d == 0) {
            return Err(NnError::Architecture("all layer widths must be positive".into()));
        }
        let (_, t_end) = layout(&trunk_dims, 0);
        let (_, end) = layout(&head_dims, t_end);
        let d = trunk_dims[0];
        Ok(Self {
            trunk_dims,
            head_dims,
            values: vec![0.0; end],
            input_shift: vec![0.0; d],
            input_scale: vec![1.0; d],
        })
    }

    fn layers(&self) -> (Vec<Layer>, Vec<Layer>) {
        let (trunk, t_end) = layout(&self.trunk_dims, 0);
        let (head, _) = layout(&self.head_dims, t_end);
        (trunk, head)
    }

    pub fn input_dim(&self) -> usize {
        self.trunk_dims[0]
    }

    pub fn embedding_dim(&self) -> usize {
        *self.trunk_dims.last().expect("non-empty trunk")
    }

    pub fn num_params(&self) -> usize {
        self.values.len()
    }

    /// Sets the input standardization to the per-coordinate mean and
    /// standard deviation of `points` (rows). Near-constant coordinates keep
    /// unit scale.
    pub fn fit_standardization(&mut self, points: ArrayView2<f64>) -> Result<(), NnError> {
        self.check_input(points.ncols())?;
        if points.nrows() == 0 {
            return Err(NnError::InvalidData("no points to standardize".into()));
        }
        let mean = points.mean_axis(Axis(0)).expect("non-empty");
        let var = points.var_axis(Axis(0), 0.0);
        self.input_shift = mean.to_vec();
        self.input_scale = var.iter().map(|v| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 }).collect();
        Ok(())
    }

    fn check_input(&self, d: usize) -> Result<(), NnError> {
        if d != self.input_dim() {
            return Err(NnError::DimensionMismatch {
                expected: self.input_dim(),
                got: d,
            });
        }
        Ok(())
    }

    fn standardize(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut z = x.to_owned();
        for mut row in z.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.input_shift).zip(&self.input_scale) {
                *v = (*v - m) / s;
            }
        }
        z
    }

    /// Trunk embeddings of the rows of `x`.
    pub fn embed(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, NnError> {
        self.check_input(x.ncols())?;
        let (trunk, _) = self.layers();
        let mut acts = forward_layers(&self.values, &trunk, self.standardize(x), false);
        let e = acts.pop().expect("trunk output");
        if e.iter().any(|v| !v.is_finite()) {
            return Err(NnError::NonFinite);
        }
        Ok(e)
    }

    /// Same-source probabilities from embedding differences `|e_a - e_b|`
    /// (one row per pair).
    pub fn head_probabilities(&self, abs_diff: Array2<f64>) -> Result<Array1<f64>, NnError> {
        let (_, head) = self.layers();
        let mut acts = forward_layers(&self.values, &head, abs_diff, false);
        let logits = acts.pop().expect("head output");
        let probs = logits.column(0).mapv(sigmoid);
        if probs.iter().any(|v| !v.is_finite()) {
            return Err(NnError::NonFinite);
        }
        Ok(probs)
    }

    fn trace(&self, xa: ArrayView2<f64>, xb: ArrayView2<f64>) -> Trace {
        let (trunk, head) = self.layers();
        let n = xa.nrows();
        let mut stacked = Array2::zeros((2 * n, self.input_dim()));
        stacked.slice_mut(s![..n, ..]).assign(&xa);
        stacked.slice_mut(s![n.., ..]).assign(&xb);
        let trunk_acts = forward_layers(&self.values, &trunk, self.standardize(stacked.view()), false);
        let e = trunk_acts.last().expect("trunk output");
        let diff = &e.slice(s![..n, ..]) - &e.slice(s![n.., ..]);
        let head_acts = forward_layers(&self.values, &head, diff.mapv(f64::abs), false);
        let probs = head_acts.last().expect("head output").column(0).mapv(sigmoid);
        Trace {
            trunk: trunk_acts,
            head: head_acts,
            diff,
            probs,
        }
    }

    /// Same-source probabilities for row-aligned pairs `(xa[i], xb[i])`.
    pub fn pair_probabilities(&self, xa: ArrayView2<f64>, xb: ArrayView2<f64>) -> Result<Array1<f64>, NnError> {
        self.check_input(xa.ncols())?;
        self.check_input(xb.ncols())?;
        if xa.nrows() != xb.nrows() {
            return Err(NnError::InvalidData("pair batches differ in length".into()));
        }
        let ea = self.embed(xa)?;
        let eb = self.embed(xb)?;
        self.head_probabilities((&ea - &eb).mapv(f64::abs))
    }

    /// Mean binary cross entropy over the pairs and its gradient with
    /// respect to every parameter.
    pub fn loss_and_gradient(&self, xa: ArrayView2<f64>, xb: ArrayView2<f64>, same: &[bool]) -> Result<(f64, Vec<f64>), NnError> {
        self.check_input(xa.ncols())?;
        let n = xa.nrows();
        if n == 0 || xb.nrows() != n || same.len() != n {
            return Err(NnError::InvalidData("pair batch shapes disagree".into()));
        }
        let (trunk, head) = self.layers();
        let tr = self.trace(xa, xb);
        let mut loss = 0.0;
        let mut dlogit = Array2::zeros((n, 1));
        for i in 0..n {
            let p = tr.probs[i];
            let y = f64::from(u8::from(same[i]));
            loss += bce_loss(p, same[i]);
            dlogit[[i, 0]] = (p - y) / n as f64;
        }
        loss /= n as f64;
        if !loss.is_finite() {
            return Err(NnError::NonFinite);
        }
        let mut grads = vec![0.0; self.values.len()];
        let d_abs = backward_layers(&self.values, &head, &tr.head, dlogit, false, &mut grads, true).expect("input grad");
        // d|u|/du = sign(u), with 0 at u = 0.
        let d_diff = &d_abs * &tr.diff.mapv(|u| if u > 0.0 { 1.0 } else if u < 0.0 { -1.0 } else { 0.0 });
        let mut d_e = Array2::zeros((2 * n, self.embedding_dim()));
        d_e.slice_mut(s![..n, ..]).assign(&d_diff);
        d_e.slice_mut(s![n.., ..]).assign(&(-&d_diff));
        backward_layers(&self.values, &trunk, &tr.trunk, d_e, false, &mut grads, false);
        Ok((loss, grads))
    }

    /// Mean loss only.
    pub fn loss(&self, xa: ArrayView2<f64>, xb: ArrayView2<f64>, same: &[bool]) -> Result<f64, NnError> {
        let probs = self.pair_probabilities(xa, xb)?;
        Ok(probs.iter().zip(same).map(|(p, s)| bce_loss(*p, *s)).sum::<f64>() / same.len().max(1) as f64)
    }
}

/// Same-source probability of a single pair. Each state is embedded on its
/// own, so swapping the arguments gives a bit-identical result.
pub fn siamese_forward(params: &MlpParams, a: &StateVector, b: &StateVector) -> Result<f64, NnError> {
    let va = ArrayView2::from_shape((1, a.dim()), a.as_slice()).expect("row");
    let vb = ArrayView2::from_shape((1, b.dim()), b.as_slice()).expect("row");
    Ok(params.pair_probabilities(va, vb)?[0])
}

/// A labelled pair of states.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSample {
    pub a: StateVector,
    pub b: StateVector,
    pub same: bool,
    /// Source candidates of `a` and `b`.
    pub sources: (usize, usize),
}

/// Pairs stored as row indices into a shared point matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSet {
    pub points: Array2<f64>,
    pub pairs: Vec<(usize, usize, bool)>,
}

impl PairSet {
    pub fn from_samples(samples: &[PairSample]) -> Result<Self, NnError> {
        let d = samples.first().map(|s| s.a.dim()).ok_or_else(|| NnError::InvalidData("no samples".into()))?;
        let mut points = Array2::zeros((2 * samples.len(), d));
        let mut pairs = Vec::with_capacity(samples.len());
        for (i, s) in samples.iter().enumerate() {
            if s.a.dim() != d || s.b.dim() != d {
                return Err(NnError::DimensionMismatch {
                    expected: d,
                    got: if s.a.dim() != d { s.a.dim() } else { s.b.dim() },
                });
            }
            points.row_mut(2 * i).assign(&ndarray::ArrayView1::from(s.a.as_slice()));
            points.row_mut(2 * i + 1).assign(&ndarray::ArrayView1::from(s.b.as_slice()));
            pairs.push((2 * i, 2 * i + 1, s.same));
        }
        Ok(Self { points, pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    fn gather(&self, idx: &[usize]) -> (Array2<f64>, Array2<f64>, Vec<bool>) {
        let a = self.points.select(Axis(0), &idx.iter().map(|&k| self.pairs[k].0).collect::<Vec<_>>());
        let b = self.points.select(Axis(0), &idx.iter().map(|&k| self.pairs[k].1).collect::<Vec<_>>());
        (a, b, idx.iter().map(|&k| self.pairs[k].2).collect())
    }

    /// Mean loss over every pair, evaluated in chunks.
    pub fn mean_loss(&self, params: &MlpParams) -> Result<f64, NnError> {
        let mut total = 0.0;
        let idx: Vec<usize> = (0..self.len()).collect();
        for chunk in idx.chunks(1024) {
            let (a, b, y) = self.gather(chunk);
            total += params.loss(a.view(), b.view(), &y)? * chunk.len() as f64;
        }
        Ok(total / self.len().max(1) as f64)
    }

    /// Fraction of pairs classified correctly (`p > 0.5` means same).
    pub fn accuracy(&self, params: &MlpParams) -> Result<f64, NnError> {
        let idx: Vec<usize> = (0..self.len()).collect();
        let mut correct = 0usize;
        for chunk in idx.chunks(1024) {
            let (a, b, y) = self.gather(chunk);
            let p = params.pair_probabilities(a.view(), b.view())?;
            correct += p.iter().zip(&y).filter(|(p, y)| (**p > 0.5) == **y).count();
        }
        Ok(correct as f64 / self.len().max(1) as f64)
    }

    /// Pair indices in an order determined by content alone, so training
    /// does not depend on how the caller arranged the set.
    fn canonical_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        let key = |k: usize| {
            let (a, b, y) = self.pairs[k];
            (self.points.row(a), self.points.row(b), y)
        };
        idx.sort_by(|&i, &j| {
            let (ai, bi, yi) = key(i);
            let (aj, bj, yj) = key(j);
            let cmp_rows = |x: ndarray::ArrayView1<f64>, y: ndarray::ArrayView1<f64>| {
                x.iter()
                    .zip(y.iter())
                    .map(|(u, v)| u.total_cmp(v))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            };
            cmp_rows(ai, aj).then_with(|| cmp_rows(bi, bj)).then(yi.cmp(&yj))
        });
        idx
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay: every step also shrinks each parameter by
    /// `lr * weight_decay` of its value. Zero gives plain Adam.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Adam with bias-corrected moments and optional decoupled weight decay.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(cfg: AdamConfig, num_params: usize) -> Self {
        Self {
            cfg,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.t);
        let c2 = 1.0 - beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * grads[i];
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * grads[i] * grads[i];
            params[i] -= lr * ((self.m[i] / c1) / ((self.v[i] / c2).sqrt() + eps) + weight_decay * params[i]);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Share of data held out for validation. The pipeline splits by
    /// trajectory; [`train`] splits pairs.
    pub validation_fraction: f64,
    /// Stop after this many epochs without validation improvement.
    pub patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 128,
            adam: AdamConfig::default(),
            seed: 0,
            validation_fraction: 0.2,
            patience: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if self.batch_size < 2 {
            return Err(NnError::InvalidConfig("batch_size must be at least 2".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(NnError::InvalidConfig("validation_fraction must lie in (0, 1)".into()));
        }
        let a = &self.adam;
        if !(a.lr > 0.0 && (0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0 && a.weight_decay >= 0.0) {
            return Err(NnError::InvalidConfig("invalid Adam hyper-parameters".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
    /// Epoch (1-based) whose parameters were kept; 0 means the initial ones.
    pub best_epoch: usize,
    pub best_validation_loss: f64,
}

fn check_labels(set: &PairSet, what: &str) -> Result<(), NnError> {
    if set.is_empty() {
        return Err(NnError::InvalidData(format!("{what} set is empty")));
    }
    let same = set.pairs.iter().filter(|p| p.2).count();
    if same == 0 || same == set.len() {
        return Err(NnError::InvalidData(format!("{what} set needs both labels")));
    }
    Ok(())
}

/// Trains on `train`, monitoring loss on `validation` after every epoch, and
/// keeps the parameters with the lowest validation loss.
///
/// Minibatches are stratified: each draws equally from shuffled "same" and
/// "different" pairs, so batch label counts differ by at most one while
/// both pools last.
pub fn train_with_validation(
    params: &mut MlpParams,
    train: &PairSet,
    validation: &PairSet,
    cfg: &TrainConfig,
) -> Result<TrainReport, NnError> {
    cfg.validate()?;
    check_labels(train, "training")?;
    if validation.is_empty() {
        return Err(NnError::InvalidData("validation set is empty".into()));
    }
    if train.points.ncols() != params.input_dim() || validation.points.ncols() != params.input_dim() {
        return Err(NnError::DimensionMismatch {
            expected: params.input_dim(),
            got: train.points.ncols(),
        });
    }
    let order = train.canonical_order();
    let (same, diff): (Vec<usize>, Vec<usize>) = order.iter().partition(|&&k| train.pairs[k].2);
    let mut report = TrainReport {
        train_loss: Vec::with_capacity(cfg.epochs),
        validation_loss: Vec::with_capacity(cfg.epochs),
        best_epoch: 0,
        best_validation_loss: validation.mean_loss(params)?,
    };
    let mut best = params.values.clone();
    let mut adam = Adam::new(cfg.adam.clone(), params.num_params());
    let half = cfg.batch_size / 2;
    for epoch in 1..=cfg.epochs {
        let mut rng = rng_from_seed(derive_seed(cfg.seed, epoch as u64));
        let mut s = same.clone();
        let mut d = diff.clone();
        s.shuffle(&mut rng);
        d.shuffle(&mut rng);
        let num_batches = s.len().max(d.len()).div_ceil(half);
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for k in 0..num_batches {
            let lo = k * half;
            let mut batch: Vec<usize> = Vec::with_capacity(2 * half);
            batch.extend(s.iter().skip(lo).take(half));
            batch.extend(d.iter().skip(lo).take(half));
            if batch.is_empty() {
                continue;
            }
            let (a, b, y) = train.gather(&batch);
            let result = params.loss_and_gradient(a.view(), b.view(), &y);
            let (loss, grads) = match result {
                Ok(v) if v.1.iter().all(|g| g.is_finite()) => v,
                _ => {
                    params.values.clone_from(&best);
                    return Err(NnError::NumericFailure {
                        epoch,
                        last_good: Box::new(params.clone()),
                    });
                }
            };
            adam.step(&mut params.values, &grads);
            epoch_loss += loss * batch.len() as f64;
            seen += batch.len();
        }
        let val = match validation.mean_loss(params) {
            Ok(v) if v.is_finite() => v,
            _ => {
                params.values.clone_from(&best);
                return Err(NnError::NumericFailure {
                    epoch,
                    last_good: Box::new(params.clone()),
                });
            }
        };
        report.train_loss.push(epoch_loss / seen.max(1) as f64);
        report.validation_loss.push(val);
        if val < report.best_validation_loss {
            report.best_validation_loss = val;
            report.best_epoch = epoch;
            best.clone_from(&params.values);
        } else if cfg.patience.is_some_and(|p| epoch - report.best_epoch >= p) {
            break;
        }
    }
    params.values = best;
    Ok(report)
}

/// Trains on `samples`, holding out a seeded random `validation_fraction`
/// of the pairs for validation.
pub fn train(params: &mut MlpParams, samples: &PairSet, cfg: &TrainConfig) -> Result<TrainReport, NnError> {
    cfg.validate()?;
    check_labels(samples, "training")?;
    let mut idx = samples.canonical_order();
    idx.shuffle(&mut rng_from_seed(derive_seed(cfg.seed, u64::MAX)));
    let n_val = ((samples.len() as f64 * cfg.validation_fraction).round() as usize).clamp(1, samples.len() - 1);
    let subset = |ids: &[usize]| PairSet {
        points: samples.points.clone(),
        pairs: ids.iter().map(|&k| samples.pairs[k]).collect(),
    };
    let validation = subset(&idx[..n_val]);
    let rest = subset(&idx[n_val..]);
    train_with_validation(params, &rest, &validation, cfg)
}

const CKPT_MAGIC: &[u8; 8] = b"SIAMCKPT";
const CKPT_VERSION: u32 = 1;

fn write_u64s<W: Write>(w: &mut W, v: &[usize]) -> std::io::Result<()> {
    w.write_all(&(v.len() as u32).to_le_bytes())?;
    for &x in v {
        w.write_all(&(x as u64).to_le_bytes())?;
    }
    Ok(())
}

fn write_f64s<W: Write>(w: &mut W, v: &[f64]) -> std::io::Result<()> {
    w.write_all(&(v.len() as u64).to_le_bytes())?;
    for x in v {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N], NnError> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| NnError::Checkpoint(format!("truncated checkpoint: {e}")))?;
    Ok(buf)
}

fn read_dims<R: Read>(r: &mut R) -> Result<Vec<usize>, NnError> {
    let n = u32::from_le_bytes(read_array(r)?) as usize;
    if n > 64 {
        return Err(NnError::Checkpoint(format!("implausible layer count {n}")));
    }
    (0..n)
        .map(|_| Ok(u64::from_le_bytes(read_array(r)?) as usize))
        .collect()
}

fn read_f64s<R: Read>(r: &mut R, expected: usize) -> Result<Vec<f64>, NnError> {
    let n = u64::from_le_bytes(read_array(r)?) as usize;
    if n != expected {
        return Err(NnError::Checkpoint(format!("expected {expected} values, found {n}")));
    }
    (0..n).map(|_| Ok(f64::from_le_bytes(read_array(r)?))).collect()
}

impl MlpParams {
    /// Binary checkpoint, little endian: magic `SIAMCKPT`, `u32` version,
    /// trunk dims and head dims (each a `u32` count then `u64` widths), then
    /// input shift, input scale and parameter values (each a `u64` count then
    /// `f64`s).
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<(), NnError> {
        w.write_all(CKPT_MAGIC)?;
        w.write_all(&CKPT_VERSION.to_le_bytes())?;
        write_u64s(&mut w, &self.trunk_dims)?;
        write_u64s(&mut w, &self.head_dims)?;
        write_f64s(&mut w, &self.input_shift)?;
        write_f64s(&mut w, &self.input_scale)?;
        write_f64s(&mut w, &self.values)?;
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Self, NnError> {
        if &read_array::<8, _>(&mut r)? != CKPT_MAGIC {
            return Err(NnError::Checkpoint("bad magic".into()));
        }
        let version = u32::from_le_bytes(read_array(&mut r)?);
        if version != CKPT_VERSION {
            return Err(NnError::Checkpoint(format!("unsupported version {version}")));
        }
        let trunk_dims = read_dims(&mut r)?;
        let head_dims = read_dims(&mut r)?;
        let mut params = Self::zeros(trunk_dims, head_dims).map_err(|e| NnError::Checkpoint(e.to_string()))?;
        let d = params.input_dim();
        params.input_shift = read_f64s(&mut r, d)?;
        params.input_scale = read_f64s(&mut r, d)?;
        params.values = read_f64s(&mut r, params.num_params())?;
        if params.values.iter().chain(&params.input_shift).chain(&params.input_scale).any(|v| !v.is_finite()) {
            return Err(NnError::Checkpoint("non-finite parameter".into()));
        }
        Ok(params)
    }
}
