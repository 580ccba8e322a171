//! Effectiveness and alignment metrics. Denominators are honest: a metric
//! whose denominator is zero is reported as undefined (`None`), never
//! coerced to 0 or 1.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::EvalError;

/// Binary confusion matrix; the positive class is "hallucinated".
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    #[serde(rename = "tp")]
    pub true_positives: u64,
    #[serde(rename = "fp")]
    pub false_positives: u64,
    #[serde(rename = "fn")]
    pub false_negatives: u64,
    #[serde(rename = "tn")]
    pub true_negatives: u64,
}

impl ConfusionMatrix {
    pub fn record(&mut self, verdict: bool, label: bool) {
        match (verdict, label) {
            (true, true) => self.true_positives += 1,
            (true, false) => self.false_positives += 1,
            (false, true) => self.false_negatives += 1,
            (false, false) => self.true_negatives += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.true_positives + self.false_positives + self.false_negatives + self.true_negatives
    }

    pub fn plus(&self, other: &ConfusionMatrix) -> ConfusionMatrix {
        ConfusionMatrix {
            true_positives: self.true_positives + other.true_positives,
            false_positives: self.false_positives + other.false_positives,
            false_negatives: self.false_negatives + other.false_negatives,
            true_negatives: self.true_negatives + other.true_negatives,
        }
    }
}

/// Tally verdicts against labels. The two maps must cover exactly the same
/// case ids.
pub fn compute_confusion(
    verdicts: &BTreeMap<String, bool>,
    labels: &BTreeMap<String, bool>,
) -> Result<ConfusionMatrix, EvalError> {
    let verdict_keys: BTreeSet<&String> = verdicts.keys().collect();
    let label_keys: BTreeSet<&String> = labels.keys().collect();
    if verdict_keys != label_keys {
        let only_verdicts: Vec<&&String> = verdict_keys.difference(&label_keys).collect();
        let only_labels: Vec<&&String> = label_keys.difference(&verdict_keys).collect();
        return Err(EvalError::KeyMismatch(format!(
            "only in verdicts: {only_verdicts:?}, only in labels: {only_labels:?}"
        )));
    }
    let mut matrix = ConfusionMatrix::default();
    for (case_id, &verdict) in verdicts {
        matrix.record(verdict, labels[case_id]);
    }
    Ok(matrix)
}

/// `P = TP/(TP+FP)`, `R = TP/(TP+FN)`, `F1 = 2PR/(P+R)`; each value is
/// defined iff its denominator is nonzero.
pub fn precision_recall_f1(
    cm: &ConfusionMatrix,
) -> (Option<f64>, Option<f64>, Option<f64>) {
    let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
    let precision = ratio(cm.true_positives, cm.true_positives + cm.false_positives);
    let recall = ratio(cm.true_positives, cm.true_positives + cm.false_negatives);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    (precision, recall, f1)
}

/// The two case-id sets the alignment metrics compare: comments the judge
/// called clean (H') and comments developers thumbed up (P).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AlignmentSets {
    pub non_hallucinated: BTreeSet<String>,
    pub preferred: BTreeSet<String>,
}

impl AlignmentSets {
    pub fn overlap(&self) -> usize {
        self.non_hallucinated.intersection(&self.preferred).count()
    }
}

/// `|H' ∩ P| / |H'|`: how much of what the judge passes is developer
/// approved. Undefined when the judge passed nothing.
pub fn consistency(sets: &AlignmentSets) -> Option<f64> {
    (!sets.non_hallucinated.is_empty())
        .then(|| sets.overlap() as f64 / sets.non_hallucinated.len() as f64)
}

/// `|H' ∩ P| / |P|`: how much of what developers approve the judge passes.
/// Undefined when nothing was thumbed up.
pub fn coverage(sets: &AlignmentSets) -> Option<f64> {
    (!sets.preferred.is_empty()).then(|| sets.overlap() as f64 / sets.preferred.len() as f64)
}

/// Cohen's kappa for two binary raters: `(p_o - p_e) / (1 - p_e)` with
/// chance agreement from the raters' marginals. Undefined (`Ok(None)`)
/// when both raters are constant and identical, since chance agreement is
/// then total.
pub fn cohen_kappa(labels_a: &[bool], labels_b: &[bool]) -> Result<Option<f64>, EvalError> {
    if labels_a.len() != labels_b.len() {
        return Err(EvalError::LengthMismatch(labels_a.len(), labels_b.len()));
    }
    if labels_a.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let n = labels_a.len() as f64;
    let observed = labels_a
        .iter()
        .zip(labels_b)
        .filter(|(a, b)| a == b)
        .count() as f64
        / n;
    let a_true = labels_a.iter().filter(|&&v| v).count();
    let b_true = labels_b.iter().filter(|&&v| v).count();
    // p_e = 1 exactly when both raters are constant with the same value.
    let constant_equal = (a_true == labels_a.len() && b_true == labels_b.len())
        || (a_true == 0 && b_true == 0);
    if constant_equal {
        return Ok(None);
    }
    let pa = a_true as f64 / n;
    let pb = b_true as f64 / n;
    let expected = pa * pb + (1.0 - pa) * (1.0 - pb);
    Ok(Some((observed - expected) / (1.0 - expected)))
}
