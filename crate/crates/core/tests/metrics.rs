mod common;

use common::{metric_oracle_sweep, pr_oracle_sweep, pr_sweep};
use hwcheck::evaluation::{
    baseline_precision, calibrate, expected_undetected, improvement, pr_curve, scenario_counts, Counts, ScenarioSpec,
};
use hwcheck::hwr::{cer, levenshtein_counts, wer};
use proptest::prelude::*;

#[test]
fn cer_and_wer_match_the_table_oracle() {
    assert_eq!(metric_oracle_sweep(1000, 1), 0.0);
}

#[test]
fn pr_curve_and_calibration_match_brute_force() {
    assert_eq!(pr_oracle_sweep(100, 2), 0);
}

#[test]
fn metric_examples() {
    assert_eq!(cer("hello", "hello").unwrap(), 0.0);
    assert_eq!(cer("", "abc").unwrap(), 1.0);
    assert!((cer("helo", "hello").unwrap() - 0.2).abs() < 1e-15);
    assert_eq!(wer("the cat", "the cat sat").unwrap(), 1.0 / 3.0);
    assert!(cer("abc", "").is_err());
}

#[test]
fn calibration_examples() {
    let scores = [0.9, 0.8, 0.7, 0.6, 0.2];
    let labels = [true, false, true, true, false];
    let curve = pr_curve(&scores, &labels).unwrap();
    assert_eq!(curve.len(), 5);
    let c = calibrate(&curve, 1.0).unwrap();
    // the lowest positive score flags every misspelling
    assert_eq!(c.threshold, 0.6);
    assert_eq!(c.recall, 1.0);
    let best = calibrate(&curve, 0.0).unwrap();
    assert_eq!((best.threshold, best.precision), (0.9, 1.0));
    assert_eq!(pr_sweep(&scores, &labels).len(), curve.len());
}

#[test]
fn scenario_math() {
    assert_eq!(scenario_counts(&ScenarioSpec::difficult(2), 1500).unwrap(), (500, 1000));
    assert_eq!(scenario_counts(&ScenarioSpec::moderate(1), 1500).unwrap(), (250, 1250));
    assert_eq!(baseline_precision(1, 5, 1500, 1500).unwrap(), 1.0);
    assert!((expected_undetected(1.0 / 6.0, 0.99, 20) - 1.0 / 30.0).abs() < 1e-12);
    assert_eq!(expected_undetected(0.5, 1.0, 20), 0.0);
    assert!((improvement(0.6459, 0.5670) - 0.13915).abs() < 1e-4);
}

/// M / (M + FP) with both expected counts rounded to whole examples.
fn baseline_oracle(m: u32, c: u32, p: usize, t: usize) -> f64 {
    let mistakes = (f64::from(m) / f64::from(m + c) * t as f64 + 0.5).floor();
    let correct = t as f64 - mistakes;
    let fp = (correct * (t - p) as f64 / t as f64 + 0.5).floor();
    if fp == 0.0 {
        1.0
    } else {
        mistakes / (mistakes + fp)
    }
}

proptest! {
    #[test]
    fn baseline_matches_its_oracle(m in 1u32..4, c in 1u32..8, t in 1usize..5000, frac in 0.0f64..=1.0) {
        let p = (frac * t as f64) as usize;
        let got = baseline_precision(m, c, p, t).unwrap();
        prop_assert!((got - baseline_oracle(m, c, p, t)).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&got));
    }

    #[test]
    fn edit_counts_add_up(a in "[ab]{0,7}", b in "[ab]{1,7}") {
        let e = levenshtein_counts(&a.chars().collect::<Vec<_>>(), &b.chars().collect::<Vec<_>>()).unwrap();
        prop_assert_eq!(e.reference_length, b.len());
        prop_assert_eq!(b.len() + e.insertions, a.len() + e.deletions);
        let oracle = common::edit_distance(a.as_bytes(), b.as_bytes());
        prop_assert_eq!(e.distance(), oracle);
    }

    #[test]
    fn counts_are_consistent(labels in proptest::collection::vec(any::<bool>(), 1..40), seed in 0u64..100) {
        let predicted: Vec<bool> = labels.iter().enumerate().map(|(i, &l)| (i as u64 + seed) % 3 == 0 || l && seed % 2 == 0).collect();
        let c = Counts::tally(predicted.iter().copied(), &labels);
        prop_assert_eq!(c.tp + c.fp + c.tn + c.fn_, labels.len());
        prop_assert_eq!(c.tp + c.fn_, labels.iter().filter(|&&l| l).count());
    }
}
