//! Word-level micro precision, recall and F1 over tokens labeled 1.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// `|C ∩ P|`
    pub tp: usize,
    /// `|P \ C|`
    pub fp: usize,
    /// `|C \ P|`
    pub fn_: usize,
}

impl EvalReport {
    /// Scores from pooled counts. With no gold and no predicted tokens every
    /// metric is 1; with no predicted tokens precision is 0.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let predicted = tp + fp;
        let gold = tp + fn_;
        let (precision, recall) = if predicted == 0 && gold == 0 {
            (1.0, 1.0)
        } else {
            let p = if predicted == 0 { 0.0 } else { tp as f64 / predicted as f64 };
            let r = if gold == 0 { 0.0 } else { tp as f64 / gold as f64 };
            (p, r)
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        EvalReport { precision, recall, f1, tp, fp, fn_ }
    }

    /// `|C|`
    pub fn gold_count(&self) -> usize {
        self.tp + self.fn_
    }

    /// `|P|`
    pub fn predicted_count(&self) -> usize {
        self.tp + self.fp
    }

    /// Machine-readable `key=value` lines.
    pub fn key_values(&self) -> String {
        format!(
            "precision={:.6}\nrecall={:.6}\nf1={:.6}\ntp={}\nfp={}\nfn={}\n",
            self.precision, self.recall, self.f1, self.tp, self.fp, self.fn_
        )
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Precision: {:6.2}%", 100.0 * self.precision)?;
        writeln!(f, "Recall:    {:6.2}%", 100.0 * self.recall)?;
        writeln!(f, "F1:        {:6.2}%", 100.0 * self.f1)?;
        write!(
            f,
            "({} gold tokens, {} predicted, {} correct)",
            self.gold_count(),
            self.predicted_count(),
            self.tp
        )
    }
}

fn check_aligned<G: AsRef<[u8]>, P: AsRef<[u8]>>(gold: &[G], pred: &[P]) -> Result<()> {
    if gold.len() != pred.len() {
        return Err(Error::dim("evaluate", &[gold.len()], &[pred.len()]));
    }
    for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.as_ref().len() != p.as_ref().len() {
            return Err(Error::SentenceLength {
                index: i,
                gold: g.as_ref().len(),
                pred: p.as_ref().len(),
            });
        }
    }
    Ok(())
}

/// Micro-averaged scores over aligned label sequences.
pub fn evaluate<G: AsRef<[u8]>, P: AsRef<[u8]>>(gold: &[G], pred: &[P]) -> Result<EvalReport> {
    check_aligned(gold, pred)?;
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (g, p) in gold.iter().zip(pred) {
        for (&a, &b) in g.as_ref().iter().zip(p.as_ref()) {
            match (a == 1, b == 1) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                (false, false) => {}
            }
        }
    }
    Ok(EvalReport::from_counts(tp, fp, fn_))
}

/// Fraction of tokens whose label matches.
pub fn token_accuracy<G: AsRef<[u8]>, P: AsRef<[u8]>>(gold: &[G], pred: &[P]) -> Result<f64> {
    check_aligned(gold, pred)?;
    let mut total = 0usize;
    let mut right = 0usize;
    for (g, p) in gold.iter().zip(pred) {
        total += g.as_ref().len();
        right += g.as_ref().iter().zip(p.as_ref()).filter(|(a, b)| a == b).count();
    }
    if total == 0 {
        return Err(Error::domain("token accuracy over zero tokens"));
    }
    Ok(right as f64 / total as f64)
}
