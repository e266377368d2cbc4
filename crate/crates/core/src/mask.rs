//! Learnable sparsification: Gumbel-sigmoid soft masks, straight-through
//! binarization, sparsity regularization, temperature annealing, and a toy
//! end-to-end training loop with analytic gradients.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::codec::BinaryMask;
use crate::error::{Error, Result};

/// Trainable mask parameters and schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskParams {
    pub s: usize,
    pub d: usize,
    /// Logits alpha, row-major s x d.
    pub logits: Vec<f64>,
    pub tau0: f64,
    pub tau_min: f64,
    pub total_epochs: usize,
    pub lambda: f64,
}

impl MaskParams {
    pub fn new(
        s: usize,
        d: usize,
        tau0: f64,
        tau_min: f64,
        total_epochs: usize,
        lambda: f64,
    ) -> Result<MaskParams> {
        if !(tau0.is_finite() && tau0 > 0.0) || !(tau_min.is_finite() && tau_min > 0.0) {
            return Err(Error::Domain("temperatures must be > 0".into()));
        }
        if tau_min > tau0 {
            return Err(Error::Domain(format!(
                "tau_min {tau_min} exceeds tau0 {tau0}"
            )));
        }
        if lambda < 0.0 {
            return Err(Error::Domain("lambda must be >= 0".into()));
        }
        // Start from keep-everything; the sparsity term prunes from there.
        Ok(MaskParams {
            s,
            d,
            logits: vec![1.0; s * d],
            tau0,
            tau_min,
            total_epochs,
            lambda,
        })
    }

    /// Deterministic evaluation-time mask: keep where sigma(alpha) > 0.5.
    pub fn deterministic_mask(&self) -> BinaryMask {
        let bits = self.logits.iter().map(|&a| sigmoid(a) > 0.5).collect();
        BinaryMask {
            s: self.s,
            d: self.d,
            bits,
        }
    }
}

/// One stochastic mask draw, retaining what the backward pass needs.
#[derive(Debug, Clone)]
pub struct MaskSample {
    pub soft: Vec<f64>,
    pub hard: BinaryMask,
    pub gumbel_noise: Vec<f64>,
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn sigmoid_deriv(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 - s)
}

/// Inverse-transform standard Gumbel samples: G = -ln(-ln(U)), U ~ (0,1).
pub fn sample_gumbel(len: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..len)
        .map(|_| {
            let mut u: f64 = rng.random();
            // Keep U strictly inside (0,1).
            while u <= 0.0 {
                u = rng.random();
            }
            -(-u.ln()).ln()
        })
        .collect()
}

pub fn sample_gumbel_seeded(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_gumbel(len, &mut rng)
}

/// Soft mask: sigma((alpha + G)/tau) elementwise.
pub fn soft_mask(alpha: &[f64], gumbel: &[f64], tau: f64) -> Result<Vec<f64>> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::Domain(format!("tau {tau} must be > 0")));
    }
    Ok(alpha
        .iter()
        .zip(gumbel)
        .map(|(&a, &g)| sigmoid((a + g) / tau))
        .collect())
}

/// Forward binarization: keep where the soft mask strictly exceeds 0.5.
/// The backward contract is pass-through: upstream gradients w.r.t. the hard
/// mask are delivered to the soft mask unchanged.
pub fn ste_binarize(soft: &[f64]) -> Vec<bool> {
    soft.iter().map(|&m| m > 0.5).collect()
}

/// Sparsity regularizer: lambda * mean(sigma(alpha)).
pub fn sparsity_loss(alpha: &[f64], lambda: f64) -> f64 {
    if alpha.is_empty() {
        return 0.0;
    }
    lambda * alpha.iter().map(|&a| sigmoid(a)).sum::<f64>() / alpha.len() as f64
}

/// Linear annealing with a floor: max(tau_min, tau0 * (1 - t/T)).
pub fn anneal_tau(t: usize, params: &MaskParams) -> f64 {
    let frac = 1.0 - t as f64 / params.total_epochs as f64;
    (params.tau0 * frac).max(params.tau_min)
}

/// Training surrogate of the masked tensor: value-identical to `x`
/// everywhere (gradients are blocked on masked-off elements by the backward
/// rules, not by the forward value).
pub fn sparse_surrogate(x: &[f64], _hard: &[bool]) -> Vec<f64> {
    x.to_vec()
}

/// The transmitted tensor: masked-off elements dropped to zero.
pub fn transmitted(x: &[f64], hard: &[bool]) -> Vec<f64> {
    x.iter()
        .zip(hard)
        .map(|(&v, &keep)| if keep { v } else { 0.0 })
        .collect()
}

/// Synthetic classification task where only a known leading feature subset
/// is informative.
#[derive(Debug, Clone)]
pub struct ToyTask {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub dim: usize,
    pub num_classes: usize,
    pub num_informative: usize,
}

/// Builds a toy dataset: Gaussian features; labels from random class
/// prototypes over the first `num_informative` dimensions only.
pub fn make_toy_task(
    dim: usize,
    num_informative: usize,
    num_classes: usize,
    samples: usize,
    seed: u64,
) -> ToyTask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gauss = move || {
        // Box-Muller.
        let u1: f64 = rng.random::<f64>().max(1e-12);
        let u2: f64 = rng.random();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    };
    let prototypes: Vec<Vec<f64>> = (0..num_classes)
        .map(|_| (0..num_informative).map(|_| gauss()).collect())
        .collect();
    let mut features = Vec::with_capacity(samples);
    let mut labels = Vec::with_capacity(samples);
    for _ in 0..samples {
        let x: Vec<f64> = (0..dim).map(|_| gauss()).collect();
        let label = prototypes
            .iter()
            .enumerate()
            .map(|(c, p)| {
                let score: f64 = p.iter().zip(&x).map(|(a, b)| a * b).sum();
                (c, score)
            })
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap()
            .0;
        features.push(x);
        labels.push(label);
    }
    ToyTask {
        features,
        labels,
        dim,
        num_classes,
        num_informative,
    }
}

/// Linear softmax classifier over masked features.
#[derive(Debug, Clone)]
pub struct ToyModel {
    pub weights: Vec<Vec<f64>>, // num_classes x dim
    pub bias: Vec<f64>,
}

impl ToyModel {
    fn zeros(num_classes: usize, dim: usize) -> ToyModel {
        ToyModel {
            weights: vec![vec![0.0; dim]; num_classes],
            bias: vec![0.0; num_classes],
        }
    }

    fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(row, &b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&v| (v - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Loss and analytic gradient of (cross-entropy + sparsity) w.r.t. alpha on
/// the pure soft path (no binarization). Weights are held fixed; this is the
/// finite-difference-checkable route.
pub fn soft_loss_and_grad_alpha(
    task: &ToyTask,
    model: &ToyModel,
    alpha: &[f64],
    gumbel: &[f64],
    tau: f64,
    lambda: f64,
) -> Result<(f64, Vec<f64>)> {
    let soft = soft_mask(alpha, gumbel, tau)?;
    let n = task.features.len() as f64;
    let mut loss = 0.0;
    let mut grad_mask = vec![0.0; alpha.len()];
    for (x, &y) in task.features.iter().zip(&task.labels) {
        let masked: Vec<f64> = x.iter().zip(&soft).map(|(&v, &m)| v * m).collect();
        let z = model.logits(&masked);
        let p = softmax(&z);
        loss += -p[y].max(1e-300).ln() / n;
        for (c, &pc) in p.iter().enumerate() {
            let dz = (pc - if c == y { 1.0 } else { 0.0 }) / n;
            for j in 0..alpha.len() {
                grad_mask[j] += dz * model.weights[c][j] * x[j];
            }
        }
    }
    let mut grad = vec![0.0; alpha.len()];
    for j in 0..alpha.len() {
        let dsoft_dalpha = sigmoid_deriv((alpha[j] + gumbel[j]) / tau) / tau;
        grad[j] =
            grad_mask[j] * dsoft_dalpha + lambda * sigmoid_deriv(alpha[j]) / alpha.len() as f64;
    }
    Ok((loss + sparsity_loss(alpha, lambda), grad))
}

/// One history row of the toy training loop.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    pub epoch: usize,
    pub task_loss: f64,
    pub sparsity_loss: f64,
    pub keep_fraction: f64,
    pub accuracy: f64,
}

/// Trains the mask logits (and the linear probe) on the toy task with plain
/// gradient descent. The hard mask is used in the forward pass; gradients
/// reach alpha through the straight-through estimator.
pub fn train_toy(
    task: &ToyTask,
    params: &MaskParams,
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<(MaskParams, Vec<HistoryRow>)> {
    if params.s * params.d != task.dim {
        return Err(Error::Domain(format!(
            "mask shape {}x{} does not match task dim {}",
            params.s, params.d, task.dim
        )));
    }
    let dim = task.dim;
    let mut p = params.clone();
    let mut model = ToyModel::zeros(task.num_classes, dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut history = Vec::with_capacity(epochs + 1);
    let init_loss = mean_task_loss(task, &model, &p.deterministic_mask().bits);
    history.push(evaluate_row(0, init_loss, task, &p, &model));

    for epoch in 0..epochs {
        let tau = anneal_tau(epoch, &p);
        let gumbel = sample_gumbel(dim, &mut rng);
        let soft = soft_mask(&p.logits, &gumbel, tau)?;
        let hard = ste_binarize(&soft);

        let n = task.features.len() as f64;
        let mut task_loss = 0.0;
        let mut grad_w = vec![vec![0.0; dim]; task.num_classes];
        let mut grad_b = vec![0.0; task.num_classes];
        let mut grad_mask = vec![0.0; dim];
        for (x, &y) in task.features.iter().zip(&task.labels) {
            let xt = transmitted(x, &hard);
            let z = model.logits(&xt);
            let pz = softmax(&z);
            task_loss += -pz[y].max(1e-300).ln() / n;
            for (c, &pc) in pz.iter().enumerate() {
                let dz = (pc - if c == y { 1.0 } else { 0.0 }) / n;
                grad_b[c] += dz;
                for j in 0..dim {
                    grad_w[c][j] += dz * xt[j];
                    // dL/dm_j through the kept-elements path; the STE then
                    // passes it to the soft mask unchanged.
                    grad_mask[j] += dz * model.weights[c][j] * x[j];
                }
            }
        }
        if !task_loss.is_finite() {
            return Err(Error::Diverged(format!(
                "task loss {task_loss} at epoch {epoch}"
            )));
        }

        for j in 0..dim {
            let dsoft_dalpha = sigmoid_deriv((p.logits[j] + gumbel[j]) / tau) / tau;
            let g =
                grad_mask[j] * dsoft_dalpha + p.lambda * sigmoid_deriv(p.logits[j]) / dim as f64;
            p.logits[j] -= lr * g;
        }
        sgd_step(&mut model, &grad_w, &grad_b, lr);
        history.push(evaluate_row(epoch + 1, task_loss, task, &p, &model));
    }
    Ok((p, history))
}

/// Mean cross-entropy of `model` on `task` under a fixed hard mask.
fn mean_task_loss(task: &ToyTask, model: &ToyModel, mask_bits: &[bool]) -> f64 {
    let n = task.features.len() as f64;
    let mut loss = 0.0;
    for (x, &y) in task.features.iter().zip(&task.labels) {
        let xt = transmitted(x, mask_bits);
        let pz = softmax(&model.logits(&xt));
        loss += -pz[y].max(1e-300).ln() / n;
    }
    loss
}

fn evaluate_row(
    epoch: usize,
    task_loss: f64,
    task: &ToyTask,
    params: &MaskParams,
    model: &ToyModel,
) -> HistoryRow {
    let mask = params.deterministic_mask();
    let acc = toy_accuracy(task, model, &mask.bits);
    HistoryRow {
        epoch,
        task_loss,
        sparsity_loss: sparsity_loss(&params.logits, params.lambda),
        keep_fraction: mask.keep_fraction(),
        accuracy: acc,
    }
}

/// Classification accuracy of `model` on `task` under a fixed hard mask.
pub fn toy_accuracy(task: &ToyTask, model: &ToyModel, mask_bits: &[bool]) -> f64 {
    let mut correct = 0;
    for (x, &y) in task.features.iter().zip(&task.labels) {
        let xt = transmitted(x, mask_bits);
        let z = model.logits(&xt);
        let pred = z
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        if pred == y {
            correct += 1;
        }
    }
    correct as f64 / task.features.len() as f64
}

/// Trains a reference probe with no mask (all features kept), for the
/// accuracy comparison baseline.
pub fn train_probe_no_mask(task: &ToyTask, epochs: usize, lr: f64) -> ToyModel {
    let dim = task.dim;
    let mut model = ToyModel::zeros(task.num_classes, dim);
    let n = task.features.len() as f64;
    for _ in 0..epochs {
        let mut grad_w = vec![vec![0.0; dim]; task.num_classes];
        let mut grad_b = vec![0.0; task.num_classes];
        for (x, &y) in task.features.iter().zip(&task.labels) {
            let z = model.logits(x);
            let pz = softmax(&z);
            for (c, &pc) in pz.iter().enumerate() {
                let dz = (pc - if c == y { 1.0 } else { 0.0 }) / n;
                grad_b[c] += dz;
                for j in 0..dim {
                    grad_w[c][j] += dz * x[j];
                }
            }
        }
        sgd_step(&mut model, &grad_w, &grad_b, lr);
    }
    model
}

/// In-place SGD step on the probe parameters.
fn sgd_step(model: &mut ToyModel, grad_w: &[Vec<f64>], grad_b: &[f64], lr: f64) {
    for (bias, g) in model.bias.iter_mut().zip(grad_b) {
        *bias -= lr * g;
    }
    for (row, grow) in model.weights.iter_mut().zip(grad_w) {
        for (w, g) in row.iter_mut().zip(grow) {
            *w -= lr * g;
        }
    }
}

const MASK_MAGIC: &[u8; 4] = b"GMSK";

/// Writes trained mask parameters as a small binary file:
/// magic "GMSK", s u32, d u32, tau0 f64, tau_min f64, total_epochs u32,
/// lambda f64, then s·d little-endian f64 logits.
pub fn save_mask(params: &MaskParams, path: impl AsRef<Path>) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(MASK_MAGIC);
    out.extend_from_slice(&(params.s as u32).to_le_bytes());
    out.extend_from_slice(&(params.d as u32).to_le_bytes());
    out.extend_from_slice(&params.tau0.to_le_bytes());
    out.extend_from_slice(&params.tau_min.to_le_bytes());
    out.extend_from_slice(&(params.total_epochs as u32).to_le_bytes());
    out.extend_from_slice(&params.lambda.to_le_bytes());
    for &a in &params.logits {
        out.extend_from_slice(&a.to_le_bytes());
    }
    let path = path.as_ref();
    std::fs::write(path, out).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<MaskParams> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let fail = |msg: &str| Error::Parse(format!("{}: {msg}", path.display()));
    if bytes.len() < 36 || &bytes[0..4] != MASK_MAGIC {
        return Err(fail("not a GMSK mask file"));
    }
    let u32at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let f64at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let s = u32at(4) as usize;
    let d = u32at(8) as usize;
    let tau0 = f64at(12);
    let tau_min = f64at(20);
    let total_epochs = u32at(28) as usize;
    let lambda = f64at(32);
    let expect = 40 + s * d * 8;
    if bytes.len() != expect {
        return Err(fail("truncated logits array"));
    }
    let logits = (0..s * d).map(|i| f64at(40 + i * 8)).collect();
    Ok(MaskParams {
        s,
        d,
        logits,
        tau0,
        tau_min,
        total_epochs,
        lambda,
    })
}
