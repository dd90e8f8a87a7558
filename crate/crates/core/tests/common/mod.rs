//! Independent oracles shared by the integration tests. Nothing here calls
//! into the implementation path it is used to check.
#![allow(dead_code)]

pub mod layers;

use std::collections::HashMap;

use hwcheck::engine::{Graph, NodeId, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Direct nested-loop 3x3 same convolution.
pub fn conv_oracle(input: &Tensor, kernels: &Tensor, bias: &Tensor) -> Vec<f64> {
    let (h, w, cin) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let cout = kernels.shape()[3];
    let mut out = Vec::with_capacity(h * w * cout);
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            for o in 0..cout {
                let mut acc = bias.data()[o];
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (yy, xx) = (y + dy, x + dx);
                        if yy < 0 || xx < 0 || yy >= h as i64 || xx >= w as i64 {
                            continue;
                        }
                        for c in 0..cin {
                            acc += input.get(&[yy as usize, xx as usize, c])
                                * kernels.get(&[(dy + 1) as usize, (dx + 1) as usize, c, o]);
                        }
                    }
                }
                out.push(acc);
            }
        }
    }
    out
}

/// Scan of every disjoint 2x2 window.
pub fn pool_oracle(input: &Tensor) -> Vec<f64> {
    let (h, w, c) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let mut out = Vec::new();
    for y in (0..h).step_by(2) {
        for x in (0..w).step_by(2) {
            for ch in 0..c {
                let vals = [
                    input.get(&[y, x, ch]),
                    input.get(&[y, x + 1, ch]),
                    input.get(&[y + 1, x, ch]),
                    input.get(&[y + 1, x + 1, ch]),
                ];
                out.push(vals.iter().cloned().fold(f64::MIN, f64::max));
            }
        }
    }
    out
}

/// Probability of every collapsed label sequence, by enumerating all
/// `classes^T` frame paths.
pub fn ctc_path_enumeration(logits: &[f64], steps: usize, classes: usize, blank: usize) -> HashMap<Vec<usize>, f64> {
    let probs: Vec<f64> = logits
        .chunks(classes)
        .flat_map(|row| {
            let z: f64 = row.iter().map(|v| v.exp()).sum();
            row.iter().map(move |v| v.exp() / z).collect::<Vec<_>>()
        })
        .collect();
    let mut totals = HashMap::new();
    let mut path = vec![0usize; steps];
    loop {
        let mut p = 1.0;
        for (t, &k) in path.iter().enumerate() {
            p *= probs[t * classes + k];
        }
        let mut collapsed = Vec::new();
        let mut prev = None;
        for &k in &path {
            if Some(k) != prev && k != blank {
                collapsed.push(k);
            }
            prev = Some(k);
        }
        *totals.entry(collapsed).or_insert(0.0) += p;
        // odometer increment
        let mut i = 0;
        loop {
            if i == steps {
                return totals;
            }
            path[i] += 1;
            if path[i] < classes {
                break;
            }
            path[i] = 0;
            i += 1;
        }
    }
}

/// Unit-cost edit distance by the textbook full-table recurrence.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        d[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d[a.len()][b.len()]
}

/// O(n^2) threshold sweep: one `(threshold, precision, recall)` per distinct
/// score, ascending by threshold.
pub fn pr_sweep(scores: &[f64], labels: &[bool]) -> Vec<(f64, f64, f64)> {
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    thresholds.dedup();
    let positives = labels.iter().filter(|&&l| l).count() as f64;
    thresholds
        .into_iter()
        .map(|t| {
            let mut tp = 0.0;
            let mut fp = 0.0;
            for (&s, &l) in scores.iter().zip(labels) {
                if s >= t {
                    if l {
                        tp += 1.0;
                    } else {
                        fp += 1.0;
                    }
                }
            }
            let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 1.0 };
            (t, precision, tp / positives)
        })
        .collect()
}

/// Central finite differences against reverse mode at `coords` random
/// coordinates spread over all leaves. `build` must be deterministic and
/// return a scalar loss node. Returns the worst relative error, measured as
/// `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn gradient_check<F>(leaves: &[Tensor], build: F, coords: usize, seed: u64) -> f64
where
    F: Fn(&mut Graph, &[NodeId]) -> NodeId,
{
    let h = 1e-5;
    let eval = |values: &[Tensor]| -> f64 {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = values.iter().enumerate().map(|(i, t)| g.param(&format!("leaf{i}"), t.clone())).collect();
        let loss = build(&mut g, &ids);
        g.value(loss).data()[0]
    };

    let mut g = Graph::new();
    let ids: Vec<NodeId> = leaves.iter().enumerate().map(|(i, t)| g.param(&format!("leaf{i}"), t.clone())).collect();
    let loss = build(&mut g, &ids);
    g.backward(loss).unwrap();
    let analytic: Vec<Vec<f64>> = ids
        .iter()
        .zip(leaves)
        .map(|(&id, t)| g.grad(id).map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; t.len()]))
        .collect();

    let total: usize = leaves.iter().map(|t| t.len()).sum();
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..coords {
        let mut flat = r.random_range(0..total);
        let mut leaf = 0;
        while flat >= leaves[leaf].len() {
            flat -= leaves[leaf].len();
            leaf += 1;
        }
        let mut plus = leaves.to_vec();
        plus[leaf].data_mut()[flat] += h;
        let mut minus = leaves.to_vec();
        minus[leaf].data_mut()[flat] -= h;
        let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
        let a = analytic[leaf][flat];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    worst
}

pub fn random_weights(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..n).map(|_| r.random_range(-1.0..1.0)).collect()
}

/// Every `(A <= 3, T <= 8, |target| <= 3)` case with random logits, compared
/// against path enumeration. Returns `(cases checked, worst absolute error)`.
pub fn ctc_oracle_sweep() -> (usize, f64) {
    let mut r = rng(2024);
    let mut cases = 0;
    let mut worst: f64 = 0.0;
    for alphabet in 1..=3usize {
        let classes = alphabet + 1;
        let blank = alphabet;
        for steps in 1..=8usize {
            let logits: Vec<f64> = (0..steps * classes).map(|_| r.random_range(-2.0..2.0)).collect();
            let paths = ctc_path_enumeration(&logits, steps, classes, blank);
            for len in 0..=3usize {
                for code in 0..alphabet.pow(len as u32) {
                    let target: Vec<usize> = (0..len).map(|i| (code / alphabet.pow(i as u32)) % alphabet).collect();
                    let repeats = target.windows(2).filter(|w| w[0] == w[1]).count();
                    if steps < len + repeats {
                        assert!(hwcheck::engine::ctc::ctc_loss(&logits, steps, classes, blank, &target).is_err());
                        continue;
                    }
                    let expected = -paths.get(&target).copied().unwrap_or(0.0).ln();
                    let got = hwcheck::engine::ctc::ctc_loss(&logits, steps, classes, blank, &target).unwrap().loss;
                    worst = worst.max((got - expected).abs());
                    cases += 1;
                }
            }
        }
    }
    (cases, worst)
}

fn random_word(rng: &mut impl Rng, letters: &[u8], max_len: usize) -> String {
    let n = rng.random_range(0..=max_len);
    (0..n).map(|_| letters[rng.random_range(0..letters.len())] as char).collect()
}

/// `n` (prediction, truth) pairs over a small alphabet, so that matches,
/// repeats and shared substrings are common. Truths are never empty.
pub fn random_text_pairs(n: usize, seed: u64) -> Vec<(String, String)> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let truth = loop {
                let t = random_word(&mut r, b"abcd", 9);
                if !t.is_empty() {
                    break t;
                }
            };
            let pred = if r.random_bool(0.2) { truth.clone() } else { random_word(&mut r, b"abcd", 9) };
            (pred, truth)
        })
        .collect()
}

/// Like [`random_text_pairs`] but with space-separated words from a tiny
/// vocabulary.
pub fn random_sentence_pairs(n: usize, seed: u64) -> Vec<(String, String)> {
    let vocab = ["the", "cat", "sat", "on", "mat", "a"];
    let mut r = rng(seed);
    let sentence = |r: &mut ChaCha8Rng, min: usize| {
        let k = r.random_range(min..=5);
        (0..k).map(|_| vocab[r.random_range(0..vocab.len())]).collect::<Vec<_>>().join(" ")
    };
    (0..n).map(|_| (sentence(&mut r, 0), sentence(&mut r, 1))).collect()
}

/// Worst absolute difference between the implementation's CER and WER and
/// the full-table oracle over `n` random pairs of each kind.
pub fn metric_oracle_sweep(n: usize, seed: u64) -> f64 {
    let mut worst = 0.0f64;
    for (p, t) in random_text_pairs(n, seed) {
        let a: Vec<char> = p.chars().collect();
        let b: Vec<char> = t.chars().collect();
        let expected = edit_distance(&a, &b) as f64 / b.len() as f64;
        worst = worst.max((hwcheck::hwr::cer(&p, &t).unwrap() - expected).abs());
    }
    for (p, t) in random_sentence_pairs(n, seed + 1) {
        let a: Vec<&str> = p.split_whitespace().collect();
        let b: Vec<&str> = t.split_whitespace().collect();
        let expected = edit_distance(&a, &b) as f64 / b.len() as f64;
        worst = worst.max((hwcheck::hwr::wer(&p, &t).unwrap() - expected).abs());
    }
    worst
}

/// Random scored instance with at least one positive and frequent ties.
pub fn random_scored(r: &mut ChaCha8Rng) -> (Vec<f64>, Vec<bool>) {
    let n = r.random_range(1..60);
    let levels = r.random_range(2..12) as f64;
    let mut labels: Vec<bool> = (0..n).map(|_| r.random_bool(0.4)).collect();
    labels[r.random_range(0..n)] = true;
    let scores = (0..n).map(|_| (r.random_range(0.0..1.0) * levels).floor() / levels).collect();
    (scores, labels)
}

/// Number of mismatching instances among `n` when comparing `pr_curve` with
/// [`pr_sweep`] and `calibrate` with a brute-force search.
pub fn pr_oracle_sweep(n: usize, seed: u64) -> usize {
    use hwcheck::evaluation::{calibrate, pr_curve};
    let mut r = rng(seed);
    let mut bad = 0;
    for _ in 0..n {
        let (scores, labels) = random_scored(&mut r);
        let expected = pr_sweep(&scores, &labels);
        let got: Vec<(f64, f64, f64)> =
            pr_curve(&scores, &labels).unwrap().iter().map(|p| (p.threshold, p.precision, p.recall)).collect();
        let min_recall = [0.0, 0.5, 0.95, 0.99, 1.0][r.random_range(0..5)];
        // best precision among thresholds meeting the recall floor, ties to
        // the larger threshold
        let feasible = expected
            .iter()
            .filter(|p| p.2 >= min_recall)
            .fold(None::<(f64, f64, f64)>, |best, &p| match best {
                Some(b) if b.1 > p.1 => Some(b),
                _ => Some(p),
            });
        let c = calibrate(&pr_curve(&scores, &labels).unwrap(), min_recall).unwrap();
        let calibration_ok = match feasible {
            Some(p) => c.constraint_met && c.threshold == p.0 && c.precision == p.1 && c.recall == p.2,
            None => !c.constraint_met,
        };
        if got != expected || !calibration_ok {
            bad += 1;
        }
    }
    bad
}
