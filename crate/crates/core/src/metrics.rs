//! Multiclass evaluation: confusion matrix, per-class precision, recall
//! and F1, macro and weighted averages, and multi-model comparison tables.
//!
//! Undefined ratios (0/0) are reported as 0 and counted in
//! [`EvaluationReport::zero_division`].

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::ensembles::TrainedModel;
use crate::error::{Error, Result};
use crate::labels::{CoarseLabel, LabelMap, NUM_CLASSES};
use crate::sparse::CsrMatrix;

/// Rows are true labels, columns predicted labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix(pub [[u64; NUM_CLASSES]; NUM_CLASSES]);

impl ConfusionMatrix {
    pub fn get(&self, truth: CoarseLabel, predicted: CoarseLabel) -> u64 {
        self.0[truth.index()][predicted.index()]
    }

    pub fn total(&self) -> u64 {
        self.0.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..NUM_CLASSES).map(|k| self.0[k][k]).sum()
    }

    pub fn row_sum(&self, label: CoarseLabel) -> u64 {
        self.0[label.index()].iter().sum()
    }

    pub fn col_sum(&self, label: CoarseLabel) -> u64 {
        self.0.iter().map(|row| row[label.index()]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.trace(), self.total()).0
    }
}

pub fn confusion(y_true: &[CoarseLabel], y_pred: &[CoarseLabel]) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Metrics(format!(
            "{} true labels but {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(Error::Metrics("nothing to evaluate".into()));
    }
    let mut m = [[0u64; NUM_CLASSES]; NUM_CLASSES];
    for (t, p) in y_true.iter().zip(y_pred) {
        m[t.index()][p.index()] += 1;
    }
    Ok(ConfusionMatrix(m))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

/// `(value, was 0/0)`
fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

/// Per-class metrics plus the number of undefined ratios replaced by 0.
fn class_prf_counted(cm: &ConfusionMatrix, label: CoarseLabel) -> (ClassMetrics, u32) {
    let tp = cm.get(label, label);
    let support = cm.row_sum(label);
    let (precision, p0) = ratio(tp, cm.col_sum(label));
    let (recall, r0) = ratio(tp, support);
    let (f1, f0) = if precision + recall == 0.0 {
        (0.0, true)
    } else {
        (2.0 * precision * recall / (precision + recall), false)
    };
    let m = ClassMetrics {
        precision,
        recall,
        f1,
        support,
    };
    (m, p0 as u32 + r0 as u32 + f0 as u32)
}

pub fn class_prf(cm: &ConfusionMatrix, label: CoarseLabel) -> ClassMetrics {
    class_prf_counted(cm, label).0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Which classes the macro average runs over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MacroClasses {
    /// All seven, zero-support classes counting as 0.
    #[default]
    All,
    Supported,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    #[serde(rename = "macro")]
    pub macro_avg: Averages,
    pub weighted: Averages,
    pub accuracy: f64,
}

pub fn aggregate(cm: &ConfusionMatrix, per_class: &LabelMap<ClassMetrics>, macro_classes: MacroClasses) -> Aggregate {
    let mut macro_sum = [0.0; 3];
    let mut macro_n = 0usize;
    let mut weighted_sum = [0.0; 3];
    let mut support_total = 0u64;
    for (_, m) in per_class.iter() {
        if m.support > 0 || macro_classes == MacroClasses::All {
            macro_sum[0] += m.precision;
            macro_sum[1] += m.recall;
            macro_sum[2] += m.f1;
            macro_n += 1;
        }
        if m.support > 0 {
            let s = m.support as f64;
            weighted_sum[0] += s * m.precision;
            weighted_sum[1] += s * m.recall;
            weighted_sum[2] += s * m.f1;
            support_total += m.support;
        }
    }
    let avg = |sum: [f64; 3], n: f64| {
        if n == 0.0 {
            Averages {
                precision: 0.0,
                recall: 0.0,
                f1: 0.0,
            }
        } else {
            Averages {
                precision: sum[0] / n,
                recall: sum[1] / n,
                f1: sum[2] / n,
            }
        }
    };
    Aggregate {
        macro_avg: avg(macro_sum, macro_n as f64),
        weighted: avg(weighted_sum, support_total as f64),
        accuracy: cm.accuracy(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub model: String,
    pub split: String,
    pub n_examples: u64,
    pub accuracy: f64,
    pub per_class: LabelMap<ClassMetrics>,
    #[serde(rename = "macro")]
    pub macro_avg: Averages,
    pub weighted: Averages,
    /// Precision, recall and F1 values that were 0/0 and reported as 0.
    pub zero_division: u32,
    pub confusion: ConfusionMatrix,
}

impl EvaluationReport {
    pub fn from_predictions(y_true: &[CoarseLabel], y_pred: &[CoarseLabel], model: &str, split: &str) -> Result<Self> {
        let cm = confusion(y_true, y_pred)?;
        Ok(Self::from_confusion(cm, model, split))
    }

    pub fn from_confusion(cm: ConfusionMatrix, model: &str, split: &str) -> Self {
        let mut zero_division = 0;
        let per_class = LabelMap(CoarseLabel::ALL.map(|l| {
            let (m, z) = class_prf_counted(&cm, l);
            zero_division += z;
            m
        }));
        let agg = aggregate(&cm, &per_class, MacroClasses::All);
        EvaluationReport {
            model: model.to_string(),
            split: split.to_string(),
            n_examples: cm.total(),
            accuracy: agg.accuracy,
            per_class,
            macro_avg: agg.macro_avg,
            weighted: agg.weighted,
            zero_division,
            confusion: cm,
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "model: {}  split: {}  examples: {}",
            self.model, self.split, self.n_examples
        );
        let _ = writeln!(
            s,
            "{:<12}{:>10}{:>10}{:>10}{:>10}",
            "label", "precision", "recall", "f1", "support"
        );
        for (label, m) in self.per_class.iter() {
            let _ = writeln!(
                s,
                "{:<12}{:>10.4}{:>10.4}{:>10.4}{:>10}",
                label.name(),
                m.precision,
                m.recall,
                m.f1,
                m.support
            );
        }
        for (name, a) in [("macro", &self.macro_avg), ("weighted", &self.weighted)] {
            let _ = writeln!(
                s,
                "{:<12}{:>10.4}{:>10.4}{:>10.4}{:>10}",
                name, a.precision, a.recall, a.f1, self.n_examples
            );
        }
        let _ = writeln!(s, "accuracy: {:.4}", self.accuracy);
        if self.zero_division > 0 {
            let _ = writeln!(s, "undefined ratios reported as 0: {}", self.zero_division);
        }
        s
    }
}

pub fn evaluate(
    model: &TrainedModel,
    x: &CsrMatrix,
    y: &[CoarseLabel],
    model_name: &str,
    split_name: &str,
) -> Result<EvaluationReport> {
    if x.n_rows() != y.len() {
        return Err(Error::Metrics(format!("{} rows but {} labels", x.n_rows(), y.len())));
    }
    let pred: Vec<CoarseLabel> = model.predict_proba_all(x)?.iter().map(|p| p.argmax()).collect();
    EvaluationReport::from_predictions(y, &pred, model_name, split_name)
}

/// One row of a comparison table. The headline columns are the weighted
/// averages; macro averages ride along in JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model: String,
    pub split: String,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
}

pub const CSV_HEADER: &str = "model,accuracy,precision,recall,f1";

/// Rows sorted by accuracy, highest first, ties by model name.
pub fn compare(reports: &[EvaluationReport]) -> Result<Comparison> {
    if reports.is_empty() {
        return Err(Error::Metrics("no reports to compare".into()));
    }
    let mut rows: Vec<ComparisonRow> = reports
        .iter()
        .map(|r| ComparisonRow {
            model: r.model.clone(),
            split: r.split.clone(),
            accuracy: r.accuracy,
            precision: r.weighted.precision,
            recall: r.weighted.recall,
            f1: r.weighted.f1,
            macro_precision: r.macro_avg.precision,
            macro_recall: r.macro_avg.recall,
            macro_f1: r.macro_avg.f1,
        })
        .collect();
    rows.sort_by(|a, b| b.accuracy.total_cmp(&a.accuracy).then_with(|| a.model.cmp(&b.model)));
    Ok(Comparison { rows })
}

impl Comparison {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{},{}", r.model, r.accuracy, r.precision, r.recall, r.f1);
        }
        s
    }

    pub fn to_text(&self) -> String {
        let width = self.rows.iter().map(|r| r.model.len()).max().unwrap_or(0).max(5) + 2;
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<width$}{:>10}{:>11}{:>10}{:>10}",
            "model", "accuracy", "precision", "recall", "f1"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<width$}{:>10.4}{:>11.4}{:>10.4}{:>10.4}",
                r.model, r.accuracy, r.precision, r.recall, r.f1
            );
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util;
    use proptest::prelude::*;
    use rand::Rng;

    use CoarseLabel::{Anger, Joy, Sadness};

    fn random_labels(n: usize, seed: u64, stream: u64) -> Vec<CoarseLabel> {
        let mut rng = util::rng(seed, stream);
        (0..n)
            .map(|_| CoarseLabel::ALL[rng.gen_range(0..NUM_CLASSES)])
            .collect()
    }

    /// Straight from the definitions, one pass over the pairs per quantity.
    fn brute_force(t: &[CoarseLabel], p: &[CoarseLabel]) -> (Vec<[f64; 3]>, Vec<u64>, f64, [f64; 3], [f64; 3]) {
        let n = t.len();
        let mut per = Vec::new();
        let mut supports = Vec::new();
        for c in CoarseLabel::ALL {
            let tp = (0..n).filter(|&i| t[i] == c && p[i] == c).count() as u64;
            let fp = (0..n).filter(|&i| t[i] != c && p[i] == c).count() as u64;
            let fneg = (0..n).filter(|&i| t[i] == c && p[i] != c).count() as u64;
            let prec = if tp + fp == 0 {
                0.0
            } else {
                tp as f64 / (tp + fp) as f64
            };
            let rec = if tp + fneg == 0 {
                0.0
            } else {
                tp as f64 / (tp + fneg) as f64
            };
            let f1 = if prec + rec == 0.0 {
                0.0
            } else {
                2.0 * prec * rec / (prec + rec)
            };
            per.push([prec, rec, f1]);
            supports.push(tp + fneg);
        }
        let acc = (0..n).filter(|&i| t[i] == p[i]).count() as f64 / n as f64;
        let mut mac = [0.0; 3];
        let mut wsum = [0.0; 3];
        let mut stot = 0u64;
        for (m, &s) in per.iter().zip(&supports) {
            for j in 0..3 {
                mac[j] += m[j];
            }
            if s > 0 {
                for j in 0..3 {
                    wsum[j] += s as f64 * m[j];
                }
                stot += s;
            }
        }
        (
            per,
            supports,
            acc,
            mac.map(|v| v / NUM_CLASSES as f64),
            wsum.map(|v| v / stot as f64),
        )
    }

    #[test]
    fn confusion_basics() {
        let cm = confusion(&[Joy, Anger, Sadness], &[Joy, Anger, Sadness]).unwrap();
        assert_eq!(cm.trace(), 3);
        assert_eq!(cm.total(), 3);
        let cm = confusion(&[Joy], &[Anger]).unwrap();
        assert_eq!(cm.get(Joy, Anger), 1);
        assert_eq!(cm.trace(), 0);
        assert!(confusion(&[], &[]).is_err());
        assert!(confusion(&[Joy], &[]).is_err());
    }

    #[test]
    fn three_example_hand_oracle() {
        let r = EvaluationReport::from_predictions(&[Joy, Joy, Anger], &[Joy, Anger, Anger], "m", "test").unwrap();
        let joy = r.per_class.get(Joy);
        assert_eq!((joy.precision, joy.recall, joy.support), (1.0, 0.5, 2));
        assert!((joy.f1 - 2.0 / 3.0).abs() < 1e-15);
        let anger = r.per_class.get(Anger);
        assert_eq!((anger.precision, anger.recall, anger.support), (0.5, 1.0, 1));
        assert!((anger.f1 - 2.0 / 3.0).abs() < 1e-15);
        let fear = r.per_class.get(CoarseLabel::Fear);
        assert_eq!((fear.precision, fear.recall, fear.f1, fear.support), (0.0, 0.0, 0.0, 0));
        assert!((r.accuracy - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.macro_avg.f1 - (2.0 / 3.0 + 2.0 / 3.0) / 7.0).abs() < 1e-15);
        // Five absent classes, each with undefined precision, recall and F1.
        assert_eq!(r.zero_division, 15);
    }

    #[test]
    fn single_class_perfect() {
        let y = vec![Joy; 20];
        let r = EvaluationReport::from_predictions(&y, &y, "m", "test").unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.weighted.f1, 1.0);
        assert!((r.macro_avg.f1 - 1.0 / 7.0).abs() < 1e-15);
        let agg = aggregate(&r.confusion, &r.per_class, MacroClasses::Supported);
        assert_eq!(agg.macro_avg.f1, 1.0);
    }

    #[test]
    fn matches_brute_force_on_100_random_vectors() {
        for seed in 0..100u64 {
            let n = 1 + (seed as usize * 37) % 300;
            let t = random_labels(n, seed, 1);
            // Bias predictions towards the truth so every regime shows up.
            let mut p = random_labels(n, seed, 2);
            let mut rng = util::rng(seed, 3);
            for i in 0..n {
                if rng.gen_bool(0.5) {
                    p[i] = t[i];
                }
            }
            let r = EvaluationReport::from_predictions(&t, &p, "m", "s").unwrap();
            let (per, supports, acc, mac, wtd) = brute_force(&t, &p);
            for (k, (_, m)) in r.per_class.iter().enumerate() {
                assert_eq!([m.precision, m.recall, m.f1], per[k], "seed {seed} class {k}");
                assert_eq!(m.support, supports[k]);
            }
            assert_eq!(r.accuracy, acc);
            assert_eq!([r.macro_avg.precision, r.macro_avg.recall, r.macro_avg.f1], mac);
            assert_eq!([r.weighted.precision, r.weighted.recall, r.weighted.f1], wtd);
            assert!((r.weighted.recall - r.accuracy).abs() <= 1e-12);
        }
    }

    #[test]
    fn uniform_random_predictions_score_one_seventh() {
        let t = random_labels(10_000, 42, 1);
        let p = random_labels(10_000, 42, 2);
        let r = EvaluationReport::from_predictions(&t, &p, "m", "s").unwrap();
        assert!((r.accuracy - 1.0 / 7.0).abs() <= 0.02, "{}", r.accuracy);
    }

    fn report(model: &str, acc_hits: usize) -> EvaluationReport {
        let t = vec![Joy; 10];
        let mut p = vec![Anger; 10];
        p[..acc_hits].fill(Joy);
        EvaluationReport::from_predictions(&t, &p, model, "test").unwrap()
    }

    #[test]
    fn comparison_ordering_and_formats() {
        assert!(compare(&[]).is_err());
        let one = compare(&[report("a", 3)]).unwrap();
        assert_eq!(one.rows.len(), 1);
        let c = compare(&[report("svm", 5), report("gbt", 8), report("logreg", 5)]).unwrap();
        let names: Vec<&str> = c.rows.iter().map(|r| r.model.as_str()).collect();
        assert_eq!(names, ["gbt", "logreg", "svm"]);
        let csv = c.to_csv();
        assert_eq!(csv.lines().next().unwrap(), "model,accuracy,precision,recall,f1");
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.lines().nth(1).unwrap().starts_with("gbt,0.8,"));
        let text = c.to_text();
        assert_eq!(text.lines().count(), 4);
        let json = serde_json::to_value(&c).unwrap();
        assert!(json["rows"][0]["macro_f1"].is_number());
    }

    #[test]
    fn report_json_schema() {
        let r = report("nb", 7);
        let v = serde_json::to_value(&r).unwrap();
        for key in ["model", "split", "accuracy", "per_class", "macro", "weighted"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["per_class"].as_object().unwrap().len(), 7);
        assert!(v["per_class"]["joy"]["support"].is_u64());
        let back: EvaluationReport = serde_json::from_value(v).unwrap();
        assert_eq!(back, r);
        assert!(r.to_text().contains("accuracy: 0.7000"));
    }

    proptest! {
        #[test]
        fn report_invariants(pairs in proptest::collection::vec((0usize..7, 0usize..7), 1..400)) {
            let t: Vec<CoarseLabel> = pairs.iter().map(|p| CoarseLabel::ALL[p.0]).collect();
            let p: Vec<CoarseLabel> = pairs.iter().map(|p| CoarseLabel::ALL[p.1]).collect();
            let r = EvaluationReport::from_predictions(&t, &p, "m", "s").unwrap();
            let support: u64 = r.per_class.iter().map(|(_, m)| m.support).sum();
            prop_assert_eq!(support, t.len() as u64);
            prop_assert_eq!(r.confusion.total(), t.len() as u64);
            prop_assert_eq!(r.accuracy, r.confusion.trace() as f64 / t.len() as f64);
            prop_assert!((r.weighted.recall - r.accuracy).abs() <= 1e-12);
            for (_, m) in r.per_class.iter() {
                for v in [m.precision, m.recall, m.f1] {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
            }
            for a in [r.macro_avg, r.weighted] {
                for v in [a.precision, a.recall, a.f1] {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
            }
        }
    }
}
