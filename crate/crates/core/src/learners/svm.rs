//! One-vs-rest linear SVM trained with Pegasos, calibrated by Platt
//! scaling on out-of-fold decision scores.
//!
//! Each binary problem appends a constant feature so the hyperplane need not
//! pass through the origin; that bias weight is regularized like the rest.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{CoarseLabel, ProbDist, NUM_CLASSES};
use crate::learners::{class_counts, k_folds};
use crate::sparse::{CsrMatrix, RowView};
use crate::util;

const CALIBRATION_FOLDS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Calibration {
    Platt,
    SoftmaxMargins,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmConfig {
    pub l2: f64,
    /// Passes over the training set.
    pub epochs: usize,
    pub calibration: Calibration,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            l2: 1e-4,
            epochs: 20,
            calibration: Calibration::Platt,
            seed: 0,
        }
    }
}

impl SvmConfig {
    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.l2 > 0.0 && self.l2.is_finite()) {
            return Err(Error::Config(format!("svm l2 must be positive, got {}", self.l2)));
        }
        if self.epochs == 0 {
            return Err(Error::Config("svm epochs must be at least 1".into()));
        }
        Ok(())
    }
}

/// Sigmoid `1 / (1 + exp(a·score + b))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlattParams {
    pub a: f64,
    pub b: f64,
}

impl PlattParams {
    pub fn prob(&self, score: f64) -> f64 {
        let f = self.a * score + self.b;
        if f >= 0.0 {
            let e = (-f).exp();
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + f.exp())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    /// Row-major `[class][feature]` with the bias weight last in each row,
    /// so each row has `dim + 1` entries.
    pub weights: Vec<f64>,
    pub dim: usize,
    /// `None` means probabilities are a softmax over the raw margins.
    pub platt: Option<[PlattParams; NUM_CLASSES]>,
}

impl SvmModel {
    pub fn feature_dim(&self) -> usize {
        self.dim
    }

    pub fn decision_scores(&self, x: RowView<'_>) -> [f64; NUM_CLASSES] {
        margins(&self.weights, self.dim, x)
    }

    pub fn predict_proba(&self, x: RowView<'_>) -> ProbDist {
        let s = self.decision_scores(x);
        match &self.platt {
            Some(params) => {
                let mut p = [0.0; NUM_CLASSES];
                for k in 0..NUM_CLASSES {
                    p[k] = params[k].prob(s[k]);
                }
                ProbDist::from_weights(p)
            }
            None => ProbDist::softmax(&s),
        }
    }
}

fn margins(w: &[f64], d: usize, x: RowView<'_>) -> [f64; NUM_CLASSES] {
    let mut s = [0.0; NUM_CLASSES];
    for (k, sk) in s.iter_mut().enumerate() {
        let row = &w[k * (d + 1)..(k + 1) * (d + 1)];
        *sk = x.dot(row) + row[d];
    }
    s
}

/// Pegasos for one binary problem; returns `d + 1` weights.
fn pegasos(x: &CsrMatrix, positive: &[bool], l2: f64, epochs: usize, seed: u64) -> Vec<f64> {
    let d = x.n_cols();
    let mut v = vec![0.0; d + 1];
    let mut scale = 1.0;
    let mut rng = util::rng(seed, 0x5E6A);
    let mut order: Vec<usize> = (0..x.n_rows()).collect();
    let mut t = 0u64;
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (l2 * t as f64);
            let row = x.row(i);
            let s = if positive[i] { 1.0 } else { -1.0 };
            let margin = s * scale * (row.dot(&v) + v[d]);
            let shrink = 1.0 - eta * l2;
            if shrink <= 0.0 {
                v.iter_mut().for_each(|w| *w = 0.0);
                scale = 1.0;
            } else {
                scale *= shrink;
            }
            if margin < 1.0 {
                let step = eta * s / scale;
                for (j, xv) in row.iter() {
                    v[j] += step * xv;
                }
                v[d] += step;
            }
            if scale < 1e-9 {
                v.iter_mut().for_each(|w| *w *= scale);
                scale = 1.0;
            }
        }
    }
    v.iter_mut().for_each(|w| *w *= scale);
    v
}

fn train_ovr(x: &CsrMatrix, y: &[CoarseLabel], config: &SvmConfig) -> Vec<f64> {
    let per_class = util::par_map(NUM_CLASSES, |k| {
        let positive: Vec<bool> = y.iter().map(|l| l.index() == k).collect();
        pegasos(
            x,
            &positive,
            config.l2,
            config.epochs,
            util::mix_seed(config.seed, k as u64),
        )
    });
    per_class.concat()
}

/// Platt sigmoid fit by Newton's method with backtracking on the
/// regularized targets `(N₊+1)/(N₊+2)` and `1/(N₋+2)`.
pub fn platt_fit(scores: &[f64], positive: &[bool]) -> PlattParams {
    let n_pos = positive.iter().filter(|p| **p).count() as f64;
    let n_neg = positive.len() as f64 - n_pos;
    let hi = (n_pos + 1.0) / (n_pos + 2.0);
    let lo = 1.0 / (n_neg + 2.0);
    let targets: Vec<f64> = positive.iter().map(|&p| if p { hi } else { lo }).collect();
    let objective = |a: f64, b: f64| -> f64 {
        scores
            .iter()
            .zip(&targets)
            .map(|(s, t)| {
                let f = s * a + b;
                if f >= 0.0 {
                    t * f + (-f).exp().ln_1p()
                } else {
                    (t - 1.0) * f + f.exp().ln_1p()
                }
            })
            .sum()
    };
    let mut a = 0.0;
    let mut b = ((n_neg + 1.0) / (n_pos + 1.0)).ln();
    let mut fval = objective(a, b);
    for _ in 0..100 {
        let (mut h11, mut h22, mut h21, mut g1, mut g2) = (1e-12, 1e-12, 0.0, 0.0, 0.0);
        for (s, t) in scores.iter().zip(&targets) {
            let p = PlattParams { a, b }.prob(*s);
            let d2 = p * (1.0 - p);
            h11 += s * s * d2;
            h22 += d2;
            h21 += s * d2;
            let d1 = t - p;
            g1 += s * d1;
            g2 += d1;
        }
        if g1.abs() < 1e-5 && g2.abs() < 1e-5 {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;
        let mut step = 1.0;
        while step >= 1e-10 {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = objective(na, nb);
            if nf < fval + 1e-4 * step * gd {
                a = na;
                b = nb;
                fval = nf;
                break;
            }
            step /= 2.0;
        }
        if step < 1e-10 {
            break;
        }
    }
    PlattParams { a, b }
}

/// Fits the model; the second value lists calibration fallbacks.
pub(crate) fn fit(x: &CsrMatrix, y: &[CoarseLabel], config: &SvmConfig) -> Result<(SvmModel, Vec<String>)> {
    let d = x.n_cols();
    let weights = train_ovr(x, y, config);
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::Fit("svm weights are not finite".into()));
    }
    let mut notes = Vec::new();
    let platt = match config.calibration {
        Calibration::SoftmaxMargins => None,
        Calibration::Platt => {
            let counts = class_counts(y);
            let sparse: Vec<&str> = CoarseLabel::ALL
                .iter()
                .filter(|l| counts[l.index()] < 2)
                .map(|l| l.name())
                .collect();
            if !sparse.is_empty() {
                notes.push(format!(
                    "platt calibration skipped (fewer than 2 examples of {}); using softmax over margins",
                    sparse.join(", ")
                ));
                None
            } else {
                match oof_scores(x, y, config) {
                    Ok(scores) => {
                        let params = util::par_map(NUM_CLASSES, |k| {
                            let s: Vec<f64> = scores.iter().map(|row| row[k]).collect();
                            let pos: Vec<bool> = y.iter().map(|l| l.index() == k).collect();
                            platt_fit(&s, &pos)
                        });
                        Some(std::array::from_fn(|k| params[k]))
                    }
                    Err(e) => {
                        notes.push(format!("platt calibration skipped ({e}); using softmax over margins"));
                        None
                    }
                }
            }
        }
    };
    Ok((SvmModel { weights, dim: d, platt }, notes))
}

fn oof_scores(x: &CsrMatrix, y: &[CoarseLabel], config: &SvmConfig) -> Result<Vec<[f64; NUM_CLASSES]>> {
    let (folds, _) = k_folds(y, CALIBRATION_FOLDS, config.seed, true)?;
    let mut scores = vec![[0.0; NUM_CLASSES]; y.len()];
    for (f, fold) in folds.iter().enumerate() {
        let train = crate::learners::complement(y.len(), fold);
        let xs = x.select_rows(&train);
        let ys: Vec<CoarseLabel> = train.iter().map(|&i| y[i]).collect();
        let fold_cfg = SvmConfig {
            seed: util::mix_seed(config.seed, 100 + f as u64),
            ..config.clone()
        };
        let w = train_ovr(&xs, &ys, &fold_cfg);
        for &i in fold {
            scores[i] = margins(&w, x.n_cols(), x.row(i));
        }
    }
    Ok(scores)
}
