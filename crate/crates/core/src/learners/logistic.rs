//! Softmax (multinomial) logistic regression trained by full-batch
//! gradient descent.
//!
//! The objective is mean cross-entropy plus `(l2 / 2)·‖W‖²`; the bias is not
//! penalized. Each epoch takes one gradient step with Armijo backtracking
//! starting from the current step size, so the training loss never
//! increases. The step starts at `lr` and grows by 25% after every epoch
//! that needed no backtracking.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{CoarseLabel, ProbDist, NUM_CLASSES};
use crate::sparse::{CsrMatrix, RowView};
use crate::util;

const ARMIJO_C: f64 = 1e-4;
const MAX_HALVINGS: usize = 40;
const STEP_GROWTH: f64 = 1.25;
const CHUNKS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogRegConfig {
    pub l2: f64,
    pub lr: f64,
    pub epochs: usize,
    pub tol: f64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        LogRegConfig {
            l2: 1e-4,
            lr: 0.5,
            epochs: 300,
            tol: 1e-6,
        }
    }
}

impl LogRegConfig {
    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::Config(format!("logreg l2 must be >= 0, got {}", self.l2)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("logreg lr must be positive, got {}", self.lr)));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::Config("logreg tol must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    /// Row-major `[class][feature]`.
    pub weights: Vec<f64>,
    pub bias: [f64; NUM_CLASSES],
    pub dim: usize,
}

impl LogRegModel {
    pub fn zeros(dim: usize) -> Self {
        LogRegModel {
            weights: vec![0.0; NUM_CLASSES * dim],
            bias: [0.0; NUM_CLASSES],
            dim,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.dim
    }

    pub fn scores(&self, x: RowView<'_>) -> [f64; NUM_CLASSES] {
        scores(&self.weights, &self.bias, self.dim, x)
    }

    pub fn predict_proba(&self, x: RowView<'_>) -> ProbDist {
        ProbDist::softmax(&self.scores(x))
    }

    pub fn weight_norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }
}

fn scores(w: &[f64], b: &[f64; NUM_CLASSES], d: usize, x: RowView<'_>) -> [f64; NUM_CLASSES] {
    let mut s = *b;
    for (j, v) in x.iter() {
        for (k, sk) in s.iter_mut().enumerate() {
            *sk += v * w[k * d + j];
        }
    }
    s
}

fn log_sum_exp(s: &[f64; NUM_CLASSES]) -> f64 {
    let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + s.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn chunk_bounds(n: usize) -> Vec<(usize, usize)> {
    let size = n.div_ceil(CHUNKS).max(1);
    (0..n).step_by(size).map(|s| (s, (s + size).min(n))).collect()
}

fn check_shapes(w: &[f64], x: &CsrMatrix, y: &[CoarseLabel]) -> Result<usize> {
    let d = x.n_cols();
    if w.len() != NUM_CLASSES * d {
        return Err(Error::DimensionMismatch {
            expected: NUM_CLASSES * d,
            actual: w.len(),
        });
    }
    if x.n_rows() != y.len() || y.is_empty() {
        return Err(Error::Fit(format!("{} rows but {} labels", x.n_rows(), y.len())));
    }
    Ok(d)
}

/// Mean cross-entropy plus the L2 penalty, and optionally its gradient.
fn evaluate(
    w: &[f64],
    b: &[f64; NUM_CLASSES],
    x: &CsrMatrix,
    y: &[CoarseLabel],
    l2: f64,
    with_grad: bool,
) -> (f64, Option<(Vec<f64>, [f64; NUM_CLASSES])>) {
    let d = x.n_cols();
    let n = y.len() as f64;
    let bounds = chunk_bounds(y.len());
    let parts = util::par_map(bounds.len(), |c| {
        let (start, end) = bounds[c];
        let mut loss = 0.0;
        let mut gw = if with_grad {
            vec![0.0; NUM_CLASSES * d]
        } else {
            Vec::new()
        };
        let mut gb = [0.0; NUM_CLASSES];
        for i in start..end {
            let row = x.row(i);
            let s = scores(w, b, d, row);
            let lse = log_sum_exp(&s);
            let yk = y[i].index();
            loss += lse - s[yk];
            if with_grad {
                for k in 0..NUM_CLASSES {
                    let r = (s[k] - lse).exp() - if k == yk { 1.0 } else { 0.0 };
                    gb[k] += r;
                    for (j, v) in row.iter() {
                        gw[k * d + j] += r * v;
                    }
                }
            }
        }
        (loss, gw, gb)
    });
    let penalty = 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>();
    let mut loss = 0.0;
    let mut grad = with_grad.then(|| (vec![0.0; NUM_CLASSES * d], [0.0; NUM_CLASSES]));
    for (l, gw, gb) in parts {
        loss += l;
        if let Some((w_acc, b_acc)) = grad.as_mut() {
            for (a, g) in w_acc.iter_mut().zip(&gw) {
                *a += g;
            }
            for (a, g) in b_acc.iter_mut().zip(&gb) {
                *a += g;
            }
        }
    }
    if let Some((gw, gb)) = grad.as_mut() {
        for (g, wv) in gw.iter_mut().zip(w) {
            *g = *g / n + l2 * wv;
        }
        for g in gb.iter_mut() {
            *g /= n;
        }
    }
    (loss / n + penalty, grad)
}

/// Training objective at `(w, b)`.
pub fn logreg_objective(w: &[f64], b: &[f64; NUM_CLASSES], x: &CsrMatrix, y: &[CoarseLabel], l2: f64) -> Result<f64> {
    check_shapes(w, x, y)?;
    Ok(evaluate(w, b, x, y, l2, false).0)
}

/// Analytic gradient of [`logreg_objective`] with respect to `w` and `b`.
pub fn logreg_gradient(
    w: &[f64],
    b: &[f64; NUM_CLASSES],
    x: &CsrMatrix,
    y: &[CoarseLabel],
    l2: f64,
) -> Result<(Vec<f64>, [f64; NUM_CLASSES])> {
    check_shapes(w, x, y)?;
    Ok(evaluate(w, b, x, y, l2, true).1.expect("gradient requested"))
}

pub(crate) fn fit(x: &CsrMatrix, y: &[CoarseLabel], config: &LogRegConfig) -> Result<(LogRegModel, f64)> {
    let (model, losses) = fit_with_history(x, y, config)?;
    Ok((model, *losses.last().expect("initial loss is recorded")))
}

/// Fits and returns the loss after every accepted step, starting with the
/// loss at zero weights.
pub(crate) fn fit_with_history(
    x: &CsrMatrix,
    y: &[CoarseLabel],
    config: &LogRegConfig,
) -> Result<(LogRegModel, Vec<f64>)> {
    let d = x.n_cols();
    let mut m = LogRegModel::zeros(d);
    let (mut loss, grad) = evaluate(&m.weights, &m.bias, x, y, config.l2, true);
    if !loss.is_finite() {
        return Err(Error::Divergence { epoch: 0 });
    }
    let mut grad = grad.expect("gradient requested");
    let mut step = config.lr;
    let mut history = vec![loss];
    for epoch in 1..=config.epochs {
        let (gw, gb) = &grad;
        let g_sq: f64 = gw.iter().map(|g| g * g).sum::<f64>() + gb.iter().map(|g| g * g).sum::<f64>();
        if g_sq == 0.0 {
            break;
        }
        let mut accepted = None;
        let mut saw_finite = false;
        for halving in 0..=MAX_HALVINGS {
            let cw: Vec<f64> = m.weights.iter().zip(gw).map(|(w, g)| w - step * g).collect();
            let mut cb = m.bias;
            for (b, g) in cb.iter_mut().zip(gb) {
                *b -= step * g;
            }
            let (c_loss, c_grad) = evaluate(&cw, &cb, x, y, config.l2, true);
            saw_finite |= c_loss.is_finite();
            if c_loss.is_finite() && c_loss <= loss - ARMIJO_C * step * g_sq {
                accepted = Some((cw, cb, c_loss, c_grad.expect("gradient requested"), halving == 0));
                break;
            }
            step *= 0.5;
        }
        let Some((cw, cb, c_loss, c_grad, first_try)) = accepted else {
            if !saw_finite {
                return Err(Error::Divergence { epoch });
            }
            break;
        };
        let improvement = loss - c_loss;
        m.weights = cw;
        m.bias = cb;
        loss = c_loss;
        grad = c_grad;
        history.push(loss);
        if first_try {
            step *= STEP_GROWTH;
        }
        if improvement < config.tol {
            break;
        }
    }
    Ok((m, history))
}
