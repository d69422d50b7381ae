//! Weighted blending of the acoustic-branch and text-branch posteriors, F1
//! scoring, and sweeps over the blend weight.
//!
//! The blend is `argmax(α·y_a + (1 − α)·y_t)` where `y_a` comes from the
//! window classifier and `y_t` from the text-only model. Ties go to the
//! lowest class code.

use std::fmt::Write as _;

use thiserror::Error;

use crate::types::{argmax, PosteriorRecord, PunctClass, NUM_CLASSES};

/// Blend weights reported by default in a sweep.
pub const DEFAULT_ALPHAS: [f64; 5] = [0.3, 0.4, 0.5, 0.6, 0.7];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnsembleError {
    #[error("alpha must lie in [0, 1], got {0}")]
    AlphaOutOfRange(f64),
    #[error("posterior records disagree on token index ({acoustic} vs {text})")]
    TokenIndexMismatch { acoustic: usize, text: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleConfig {
    alpha: f64,
}

impl EnsembleConfig {
    pub fn new(alpha: f64) -> Result<Self, EnsembleError> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(EnsembleError::AlphaOutOfRange(alpha));
        }
        Ok(Self { alpha })
    }

    /// Weight on the acoustic branch.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

pub fn blend(y_a: &[f64; NUM_CLASSES], y_t: &[f64; NUM_CLASSES], alpha: f64) -> [f64; NUM_CLASSES] {
    std::array::from_fn(|i| alpha * y_a[i] + (1.0 - alpha) * y_t[i])
}

pub fn ensemble_predict(
    y_a: &PosteriorRecord,
    y_t: &PosteriorRecord,
    cfg: &EnsembleConfig,
) -> Result<PunctClass, EnsembleError> {
    if y_a.token_index != y_t.token_index {
        return Err(EnsembleError::TokenIndexMismatch { acoustic: y_a.token_index, text: y_t.token_index });
    }
    Ok(argmax(&blend(&y_a.probs, &y_t.probs, cfg.alpha)))
}

/// Precision, recall and F1 of one class, all in percent.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Comma, FullStop, Question in that order.
    pub per_class: [ClassScores; 3],
    /// Support-weighted mean of the three punctuation-class F1 scores.
    pub overall_f1: f64,
    /// `confusion[gold][pred]` in class-code order.
    pub confusion: [[usize; NUM_CLASSES]; NUM_CLASSES],
    pub support: [usize; NUM_CLASSES],
    /// No gold punctuation marks at all; every score is 0 by convention.
    pub zero_support: bool,
}

impl EvalReport {
    pub fn class(&self, class: PunctClass) -> Option<&ClassScores> {
        self.per_class.get(class.code())
    }

    pub const TSV_HEADER: &'static str = "f1_comma\tf1_fullstop\tf1_question\tf1_overall";

    pub fn tsv_fields(&self) -> String {
        format!(
            "{:.4}\t{:.4}\t{:.4}\t{:.4}",
            self.per_class[0].f1, self.per_class[1].f1, self.per_class[2].f1, self.overall_f1
        )
    }

    /// Human-readable summary with the confusion matrix.
    pub fn table(&self) -> String {
        let mut out = String::from("class      precision  recall     f1         support\n");
        for (class, s) in PunctClass::MARKS.iter().zip(&self.per_class) {
            writeln!(out, "{:<10} {:<10.2} {:<10.2} {:<10.2} {}", class.tsv_name(), s.precision, s.recall, s.f1, s.support)
                .unwrap();
        }
        writeln!(out, "overall F1 {:.2}{}", self.overall_f1, if self.zero_support { " (no punctuation support)" } else { "" })
            .unwrap();
        out.push_str("confusion (rows gold, cols pred): COMMA PERIOD QUESTION NONE\n");
        for (class, row) in PunctClass::ALL.iter().zip(&self.confusion) {
            writeln!(out, "{:<10} {:?}", class.tsv_name(), row).unwrap();
        }
        out
    }
}

fn f1_percent(tp: usize, predicted: usize, actual: usize) -> (f64, f64, f64) {
    let precision = if predicted == 0 { 0.0 } else { tp as f64 / predicted as f64 };
    let recall = if actual == 0 { 0.0 } else { tp as f64 / actual as f64 };
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    (100.0 * precision, 100.0 * recall, 100.0 * f1)
}

pub fn evaluate(preds: &[PunctClass], golds: &[PunctClass]) -> Result<EvalReport, EnsembleError> {
    if preds.len() != golds.len() {
        return Err(EnsembleError::LengthMismatch(preds.len(), golds.len()));
    }
    let mut confusion = [[0usize; NUM_CLASSES]; NUM_CLASSES];
    for (p, g) in preds.iter().zip(golds) {
        confusion[g.code()][p.code()] += 1;
    }
    let support: [usize; NUM_CLASSES] = std::array::from_fn(|g| confusion[g].iter().sum());
    let predicted: [usize; NUM_CLASSES] = std::array::from_fn(|p| confusion.iter().map(|row| row[p]).sum());

    let per_class: [ClassScores; 3] = std::array::from_fn(|c| {
        let (precision, recall, f1) = f1_percent(confusion[c][c], predicted[c], support[c]);
        ClassScores { precision, recall, f1, support: support[c] }
    });
    let total: usize = per_class.iter().map(|s| s.support).sum();
    let overall_f1 = if total == 0 {
        0.0
    } else {
        per_class.iter().map(|s| s.support as f64 * s.f1).sum::<f64>() / total as f64
    };
    Ok(EvalReport { per_class, overall_f1, confusion, support, zero_support: total == 0 })
}

/// One row of an alpha sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub alpha: f64,
    pub report: EvalReport,
}

pub fn alpha_sweep(
    y_a: &[PosteriorRecord],
    y_t: &[PosteriorRecord],
    golds: &[PunctClass],
    alphas: &[f64],
) -> Result<Vec<SweepRow>, EnsembleError> {
    if y_a.len() != y_t.len() {
        return Err(EnsembleError::LengthMismatch(y_a.len(), y_t.len()));
    }
    if y_a.len() != golds.len() {
        return Err(EnsembleError::LengthMismatch(y_a.len(), golds.len()));
    }
    alphas
        .iter()
        .map(|&alpha| {
            let cfg = EnsembleConfig::new(alpha)?;
            let preds = y_a
                .iter()
                .zip(y_t)
                .map(|(a, t)| ensemble_predict(a, t, &cfg))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(SweepRow { alpha, report: evaluate(&preds, golds)? })
        })
        .collect()
}

/// Sweep table as TSV: `alpha, f1_comma, f1_fullstop, f1_question, f1_overall`.
pub fn format_sweep(rows: &[SweepRow]) -> String {
    let mut out = format!("alpha\t{}\n", EvalReport::TSV_HEADER);
    for r in rows {
        writeln!(out, "{}\t{}", r.alpha, r.report.tsv_fields()).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use PunctClass::*;

    fn rec(i: usize, p: [f64; 4]) -> PosteriorRecord {
        PosteriorRecord::new(i, p).unwrap()
    }

    #[test]
    fn endpoints_select_single_branch() {
        let a = rec(0, [0.1, 0.6, 0.2, 0.1]);
        let t = rec(0, [0.5, 0.3, 0.1, 0.1]);
        assert_eq!(ensemble_predict(&a, &t, &EnsembleConfig::new(0.0).unwrap()).unwrap(), Comma);
        assert_eq!(ensemble_predict(&a, &t, &EnsembleConfig::new(1.0).unwrap()).unwrap(), FullStop);
    }

    #[test]
    fn hand_blend() {
        let a = rec(3, [0.1, 0.6, 0.2, 0.1]);
        let t = rec(3, [0.5, 0.3, 0.1, 0.1]);
        let b = blend(&a.probs, &t.probs, 0.4);
        for (x, y) in b.iter().zip([0.34, 0.42, 0.14, 0.10]) {
            assert!((x - y).abs() < 1e-12);
        }
        assert_eq!(ensemble_predict(&a, &t, &EnsembleConfig::new(0.4).unwrap()).unwrap(), FullStop);
    }

    #[test]
    fn mismatched_tokens_and_alpha_range() {
        let a = rec(0, [0.25; 4]);
        let t = rec(1, [0.25; 4]);
        let cfg = EnsembleConfig::new(0.5).unwrap();
        assert_eq!(
            ensemble_predict(&a, &t, &cfg).unwrap_err(),
            EnsembleError::TokenIndexMismatch { acoustic: 0, text: 1 }
        );
        assert!(EnsembleConfig::new(-0.1).is_err());
        assert!(EnsembleConfig::new(1.5).is_err());
        assert!(EnsembleConfig::new(f64::NAN).is_err());
    }

    #[test]
    fn ties_go_to_lowest_code() {
        let a = rec(0, [0.0, 0.5, 0.5, 0.0]);
        let t = rec(0, [0.0, 0.5, 0.5, 0.0]);
        assert_eq!(ensemble_predict(&a, &t, &EnsembleConfig::new(0.5).unwrap()).unwrap(), FullStop);
    }

    #[test]
    fn perfect_predictions() {
        let golds = vec![Comma, FullStop, Question, NoPunct, Comma];
        let r = evaluate(&golds, &golds).unwrap();
        for s in &r.per_class {
            assert_eq!(s.f1, 100.0);
        }
        assert_eq!(r.overall_f1, 100.0);
        assert!(!r.zero_support);
    }

    #[test]
    fn hand_counted_example() {
        let r = evaluate(&[Comma, FullStop, FullStop], &[Comma, Comma, FullStop]).unwrap();
        assert_eq!(r.per_class[0].precision, 100.0);
        assert_eq!(r.per_class[0].recall, 50.0);
        assert!((r.per_class[0].f1 - 200.0 / 3.0).abs() < 1e-9);
        assert_eq!(r.per_class[1].precision, 50.0);
        assert_eq!(r.per_class[1].recall, 100.0);
        assert!((r.per_class[1].f1 - 200.0 / 3.0).abs() < 1e-9);
        assert!((r.overall_f1 - 66.67).abs() < 0.01);
        assert_eq!(r.confusion[0], [1, 1, 0, 0]);
        assert_eq!(r.support, [2, 1, 0, 0]);
    }

    #[test]
    fn zero_support_convention() {
        let r = evaluate(&[NoPunct, NoPunct], &[NoPunct, NoPunct]).unwrap();
        assert!(r.zero_support);
        assert_eq!(r.overall_f1, 0.0);
        assert!(r.per_class.iter().all(|s| s.f1 == 0.0));
        assert!(evaluate(&[], &[]).unwrap().zero_support);
    }

    #[test]
    fn length_mismatch() {
        assert_eq!(evaluate(&[Comma], &[]).unwrap_err(), EnsembleError::LengthMismatch(1, 0));
    }

    #[test]
    fn sweep_of_identical_branches_is_flat() {
        let ys: Vec<PosteriorRecord> = (0..6)
            .map(|i| {
                let mut p = [0.1; 4];
                p[i % 4] = 0.7;
                rec(i, p)
            })
            .collect();
        let golds = vec![Comma, FullStop, Comma, NoPunct, Question, FullStop];
        let rows = alpha_sweep(&ys, &ys, &golds, &DEFAULT_ALPHAS).unwrap();
        assert_eq!(rows.len(), 5);
        for r in &rows {
            assert_eq!(r.report, rows[0].report);
        }
        let tsv = format_sweep(&rows);
        assert!(tsv.starts_with("alpha\tf1_comma\tf1_fullstop\tf1_question\tf1_overall\n"));
        assert_eq!(tsv.lines().count(), 6);
    }

    #[test]
    fn single_alpha_matches_pointwise() {
        let y_a = vec![rec(0, [0.1, 0.6, 0.2, 0.1]), rec(1, [0.7, 0.1, 0.1, 0.1])];
        let y_t = vec![rec(0, [0.5, 0.3, 0.1, 0.1]), rec(1, [0.1, 0.1, 0.7, 0.1])];
        let golds = vec![FullStop, Question];
        let rows = alpha_sweep(&y_a, &y_t, &golds, &[0.4]).unwrap();
        let cfg = EnsembleConfig::new(0.4).unwrap();
        let preds: Vec<_> = y_a.iter().zip(&y_t).map(|(a, t)| ensemble_predict(a, t, &cfg).unwrap()).collect();
        assert_eq!(rows[0].report, evaluate(&preds, &golds).unwrap());
    }
}
