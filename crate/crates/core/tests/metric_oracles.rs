//! Brute-force differential oracles for every evaluation metric, on 500+
//! random fixtures each. The oracles recount from scratch rather than
//! reusing any implementation path.

use std::collections::{BTreeMap, BTreeSet};

use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};

use diffjudge_core::eval::{
    cohen_kappa, compute_confusion, consistency, coverage, precision_recall_f1, AlignmentSets,
    ConfusionMatrix,
};

const TOLERANCE: f64 = 1e-12;

fn close(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(a), Some(b)) => (a - b).abs() <= TOLERANCE,
        (None, None) => true,
        _ => false,
    }
}

#[test]
fn confusion_matrix_matches_brute_force_recount_on_500_fixtures() {
    let mut rng = StdRng::seed_from_u64(11);
    for _ in 0..500 {
        let n = rng.random_range(1..40);
        let mut verdicts = BTreeMap::new();
        let mut labels = BTreeMap::new();
        for i in 0..n {
            let id = format!("case-{i}");
            verdicts.insert(id.clone(), rng.random_bool(0.5));
            labels.insert(id, rng.random_bool(0.5));
        }
        let cm = compute_confusion(&verdicts, &labels).unwrap();

        // Oracle: direct recount, one pass per cell.
        let count = |v: bool, l: bool| {
            verdicts
                .iter()
                .filter(|(id, &verdict)| verdict == v && labels[*id] == l)
                .count() as u64
        };
        assert_eq!(cm.true_positives, count(true, true));
        assert_eq!(cm.false_positives, count(true, false));
        assert_eq!(cm.false_negatives, count(false, true));
        assert_eq!(cm.true_negatives, count(false, false));
        assert_eq!(cm.total(), n as u64);
    }
}

#[test]
fn precision_recall_f1_match_formula_oracle_on_600_matrices() {
    let mut rng = StdRng::seed_from_u64(13);
    for _ in 0..600 {
        let cm = ConfusionMatrix {
            true_positives: rng.random_range(0..20),
            false_positives: rng.random_range(0..20),
            false_negatives: rng.random_range(0..20),
            true_negatives: rng.random_range(0..20),
        };
        let (p, r, f1) = precision_recall_f1(&cm);

        let tp = cm.true_positives as f64;
        let expected_p = if cm.true_positives + cm.false_positives > 0 {
            Some(tp / (cm.true_positives + cm.false_positives) as f64)
        } else {
            None
        };
        let expected_r = if cm.true_positives + cm.false_negatives > 0 {
            Some(tp / (cm.true_positives + cm.false_negatives) as f64)
        } else {
            None
        };
        let expected_f1 = match (expected_p, expected_r) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            _ => None,
        };
        assert!(close(p, expected_p), "{cm:?}");
        assert!(close(r, expected_r), "{cm:?}");
        assert!(close(f1, expected_f1), "{cm:?}");
    }
}

#[test]
fn table_two_headline_row_reproduces() {
    // Precision 0.85 and recall 0.85 must yield F1 0.85.
    let cm = ConfusionMatrix {
        true_positives: 17,
        false_positives: 3,
        false_negatives: 3,
        true_negatives: 77,
    };
    let (p, r, f1) = precision_recall_f1(&cm);
    assert_eq!(p, Some(0.85));
    assert_eq!(r, Some(0.85));
    assert!((f1.unwrap() - 0.85).abs() <= TOLERANCE);
}

#[test]
fn consistency_and_coverage_match_membership_count_oracle() {
    let mut rng = StdRng::seed_from_u64(17);
    let universe: Vec<String> = (0..50).map(|i| format!("id-{i:02}")).collect();
    for _ in 0..500 {
        let mut sets = AlignmentSets::default();
        for id in &universe {
            if rng.random_bool(0.4) {
                sets.non_hallucinated.insert(id.clone());
            }
            if rng.random_bool(0.4) {
                sets.preferred.insert(id.clone());
            }
        }

        // Oracle: brute-force membership count over the universe.
        let overlap = universe
            .iter()
            .filter(|id| sets.non_hallucinated.contains(*id) && sets.preferred.contains(*id))
            .count();
        let expected_consistency = if sets.non_hallucinated.is_empty() {
            None
        } else {
            Some(overlap as f64 / sets.non_hallucinated.len() as f64)
        };
        let expected_coverage = if sets.preferred.is_empty() {
            None
        } else {
            Some(overlap as f64 / sets.preferred.len() as f64)
        };
        assert!(close(consistency(&sets), expected_consistency));
        assert!(close(coverage(&sets), expected_coverage));
        assert_eq!(sets.overlap(), overlap);
    }
}

/// Textbook kappa computed from the 2x2 agreement table, independent of
/// the implementation's marginal shortcut.
fn kappa_oracle(a: &[bool], b: &[bool]) -> Option<f64> {
    let n = a.len() as f64;
    let mut table = [[0f64; 2]; 2];
    for (&x, &y) in a.iter().zip(b) {
        table[x as usize][y as usize] += 1.0;
    }
    let p_o = (table[0][0] + table[1][1]) / n;
    let a_marginal = [(table[0][0] + table[0][1]) / n, (table[1][0] + table[1][1]) / n];
    let b_marginal = [(table[0][0] + table[1][0]) / n, (table[0][1] + table[1][1]) / n];
    let p_e = a_marginal[0] * b_marginal[0] + a_marginal[1] * b_marginal[1];
    if (1.0 - p_e).abs() == 0.0 {
        return None;
    }
    Some((p_o - p_e) / (1.0 - p_e))
}

#[test]
fn kappa_matches_textbook_oracle_on_500_fixtures() {
    let mut rng = StdRng::seed_from_u64(19);
    for _ in 0..500 {
        let n = rng.random_range(1..60);
        let bias_a = rng.random_range(1..10) as f64 / 10.0;
        let bias_b = rng.random_range(1..10) as f64 / 10.0;
        let a: Vec<bool> = (0..n).map(|_| rng.random_bool(bias_a)).collect();
        let b: Vec<bool> = (0..n).map(|_| rng.random_bool(bias_b)).collect();

        let actual = cohen_kappa(&a, &b).unwrap();
        let expected = kappa_oracle(&a, &b);
        assert!(close(actual, expected), "a={a:?} b={b:?}: {actual:?} vs {expected:?}");
        if let Some(k) = actual {
            assert!((-1.0 - TOLERANCE..=1.0 + TOLERANCE).contains(&k));
        }

        // Symmetry.
        assert!(close(actual, cohen_kappa(&b, &a).unwrap()));
    }
}

#[test]
fn kappa_known_values() {
    // Perfect agreement with both classes present.
    let a = [true, false, true, false, true];
    assert_eq!(cohen_kappa(&a, &a).unwrap(), Some(1.0));
    // Annotation-round style: 80% observed agreement, balanced marginals.
    // p_o = 0.8, p_e = 0.5, kappa = 0.6.
    let x = [true, true, true, true, true, false, false, false, false, false];
    let y = [true, true, true, true, false, true, false, false, false, false];
    let k = cohen_kappa(&x, &y).unwrap().unwrap();
    assert!((k - 0.6).abs() <= TOLERANCE);
}

#[test]
fn key_mismatch_distinguishes_directions() {
    let mut verdicts = BTreeMap::new();
    verdicts.insert("a".to_string(), true);
    verdicts.insert("b".to_string(), false);
    let mut labels = BTreeMap::new();
    labels.insert("a".to_string(), true);
    labels.insert("c".to_string(), true);
    let err = compute_confusion(&verdicts, &labels).unwrap_err();
    let message = err.to_string();
    assert!(message.contains('b') && message.contains('c'), "{message}");

    let empty_overlap: BTreeSet<String> = BTreeSet::new();
    assert!(empty_overlap.is_empty());
}
