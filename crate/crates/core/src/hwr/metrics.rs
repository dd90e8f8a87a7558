//! Character and word error rates from Levenshtein edit counts.

use crate::error::{Error, Result};

/// Edit operations turning the truth into the prediction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EditCounts {
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
    pub reference_length: usize,
}

impl EditCounts {
    pub fn distance(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }

    /// Distance normalised by the reference length.
    pub fn rate(&self) -> f64 {
        self.distance() as f64 / self.reference_length as f64
    }
}

/// Unit-cost edit distance with counts recovered by backtrace. A deletion is a
/// truth unit missing from the prediction, an insertion an extra predicted
/// unit. Ties prefer substitution, then deletion, then insertion.
pub fn levenshtein_counts<T: PartialEq>(predicted: &[T], truth: &[T]) -> Result<EditCounts> {
    if truth.is_empty() {
        return Err(Error::Argument("empty reference".into()));
    }
    let (n, m) = (truth.len(), predicted.len());
    let w = m + 1;
    // d[i][j]: distance between truth[..i] and predicted[..j]
    let mut d = vec![0usize; (n + 1) * w];
    for i in 0..=n {
        d[i * w] = i;
    }
    for j in 0..=m {
        d[j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = d[(i - 1) * w + j - 1] + usize::from(truth[i - 1] != predicted[j - 1]);
            let del = d[(i - 1) * w + j] + 1;
            let ins = d[i * w + j - 1] + 1;
            d[i * w + j] = sub.min(del).min(ins);
        }
    }
    let mut counts = EditCounts {
        reference_length: n,
        ..Default::default()
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * w + j];
        if i > 0 && j > 0 {
            let same = truth[i - 1] == predicted[j - 1];
            if d[(i - 1) * w + j - 1] + usize::from(!same) == here {
                if !same {
                    counts.substitutions += 1;
                }
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && d[(i - 1) * w + j] + 1 == here {
            counts.deletions += 1;
            i -= 1;
        } else {
            counts.insertions += 1;
            j -= 1;
        }
    }
    Ok(counts)
}

/// Character error rate; may exceed 1.
pub fn cer(predicted: &str, truth: &str) -> Result<f64> {
    let p: Vec<char> = predicted.chars().collect();
    let t: Vec<char> = truth.chars().collect();
    Ok(levenshtein_counts(&p, &t)?.rate())
}

/// Word error rate over whitespace-delimited tokens.
pub fn wer(predicted: &str, truth: &str) -> Result<f64> {
    let p: Vec<&str> = predicted.split_whitespace().collect();
    let t: Vec<&str> = truth.split_whitespace().collect();
    Ok(levenshtein_counts(&p, &t)?.rate())
}
