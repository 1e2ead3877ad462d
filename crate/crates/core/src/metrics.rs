//! Confusion matrix and the scores derived from it.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::label::{Label, NUM_CLASSES};

/// Counts indexed `[gold][predicted]` in class order negative, neutral,
/// positive.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

/// Builds the confusion matrix of `pred` against `gold`.
pub fn confusion(gold: &[Label], pred: &[Label]) -> Result<ConfusionMatrix> {
    if gold.len() != pred.len() {
        return Err(Error::Shape(format!(
            "{} gold labels vs {} predictions",
            gold.len(),
            pred.len()
        )));
    }
    if gold.is_empty() {
        return Err(Error::EmptyDataset("no labels to compare"));
    }
    let mut cm = ConfusionMatrix::default();
    for (&g, &p) in gold.iter().zip(pred) {
        cm.counts[g.index()][p.index()] += 1;
    }
    Ok(cm)
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sum(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn col_sum(&self, class: usize) -> u64 {
        self.counts.iter().map(|row| row[class]).sum()
    }

    /// Gold classes with no examples; their recall counts as 0.
    pub fn absent_classes(&self) -> Vec<Label> {
        Label::ALL
            .into_iter()
            .filter(|l| self.row_sum(l.index()) == 0)
            .collect()
    }

    fn ratio(num: u64, den: u64) -> f64 {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    }

    pub fn recall(&self, class: Label) -> f64 {
        let c = class.index();
        Self::ratio(self.counts[c][c], self.row_sum(c))
    }

    pub fn precision(&self, class: Label) -> f64 {
        let c = class.index();
        Self::ratio(self.counts[c][c], self.col_sum(c))
    }

    pub fn f1(&self, class: Label) -> f64 {
        let p = self.precision(class);
        let r = self.recall(class);
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    /// Macro-average recall over the three classes.
    pub fn avg_recall(&self) -> f64 {
        let absent = self.absent_classes();
        if !absent.is_empty() {
            log::warn!("gold classes absent from evaluation set: {absent:?}");
        }
        Label::ALL.iter().map(|&l| self.recall(l)).sum::<f64>() / NUM_CLASSES as f64
    }

    pub fn accuracy(&self) -> f64 {
        let trace: u64 = (0..NUM_CLASSES).map(|c| self.counts[c][c]).sum();
        Self::ratio(trace, self.total())
    }

    pub fn f1_per_class(&self) -> [f64; NUM_CLASSES] {
        Label::ALL.map(|l| self.f1(l))
    }

    pub fn macro_f1(&self) -> f64 {
        self.f1_per_class().iter().sum::<f64>() / NUM_CLASSES as f64
    }

    /// Mean F1 of the positive and negative classes.
    pub fn f1_pn(&self) -> f64 {
        (self.f1(Label::Positive) + self.f1(Label::Negative)) / 2.0
    }

    /// Plain-text evaluation report, all scores with four decimals.
    pub fn report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "examples\t{}", self.total());
        let _ = writeln!(s, "confusion\tgold\\pred\tnegative\tneutral\tpositive");
        for label in Label::ALL {
            let row = &self.counts[label.index()];
            let _ = writeln!(s, "confusion\t{label}\t{}\t{}\t{}", row[0], row[1], row[2]);
        }
        let _ = writeln!(s, "class\tprecision\trecall\tf1");
        for label in Label::ALL {
            let _ = writeln!(
                s,
                "{label}\t{:.4}\t{:.4}\t{:.4}",
                self.precision(label),
                self.recall(label),
                self.f1(label)
            );
        }
        let _ = writeln!(s, "avg_recall\t{:.4}", self.avg_recall());
        let _ = writeln!(s, "accuracy\t{:.4}", self.accuracy());
        let _ = writeln!(s, "macro_f1\t{:.4}", self.macro_f1());
        let _ = writeln!(s, "f1_pn\t{:.4}", self.f1_pn());
        s
    }
}
