//! Connectionist temporal classification loss over raw logits.
//!
//! The forward and backward recursions run over the blank-extended label
//! sequence `[blank, l0, blank, l1, ..., blank]` entirely in log space.

use super::kernels::{log_add, log_softmax_rows};
use crate::error::{Error, Result};

/// Number of adjacent equal labels; each needs an extra blank frame.
pub fn adjacent_repeats(target: &[usize]) -> usize {
    target.windows(2).filter(|w| w[0] == w[1]).count()
}

pub fn check_feasible(time_steps: usize, target: &[usize]) -> Result<()> {
    let repeats = adjacent_repeats(target);
    if time_steps < target.len() + repeats {
        return Err(Error::Infeasible {
            time_steps,
            target_len: target.len(),
            repeats,
        });
    }
    Ok(())
}

/// Loss and gradient with respect to the logits.
#[derive(Clone, Debug)]
pub struct CtcOutput {
    pub loss: f64,
    pub grad: Vec<f64>,
}

/// `logits` is `T x classes` with the blank at `blank`.
pub fn ctc_loss(logits: &[f64], time_steps: usize, classes: usize, blank: usize, target: &[usize]) -> Result<CtcOutput> {
    if time_steps == 0 {
        return Err(Error::EmptySequence);
    }
    if logits.len() != time_steps * classes {
        return Err(Error::dim(format!(
            "CTC logits of length {} do not match {time_steps}x{classes}",
            logits.len()
        )));
    }
    if blank >= classes {
        return Err(Error::dim(format!("blank index {blank} outside {classes} classes")));
    }
    if let Some(&bad) = target.iter().find(|&&c| c >= classes || c == blank) {
        return Err(Error::Argument(format!("invalid CTC target label {bad}")));
    }
    check_feasible(time_steps, target)?;

    let logp = log_softmax_rows(logits, classes);
    let s_len = 2 * target.len() + 1;
    let ext: Vec<usize> = (0..s_len)
        .map(|s| if s % 2 == 0 { blank } else { target[s / 2] })
        .collect();
    let ninf = f64::NEG_INFINITY;
    let lp = |t: usize, s: usize| logp[t * classes + ext[s]];
    // A transition s-2 -> s is allowed for labels that differ from the previous label.
    let can_skip = |s: usize| s >= 2 && ext[s] != blank && ext[s] != ext[s - 2];

    let mut alpha = vec![ninf; time_steps * s_len];
    alpha[0] = lp(0, 0);
    if s_len > 1 {
        alpha[1] = lp(0, 1);
    }
    for t in 1..time_steps {
        for s in 0..s_len {
            let prev = &alpha[(t - 1) * s_len..t * s_len];
            let mut a = prev[s];
            if s >= 1 {
                a = log_add(a, prev[s - 1]);
            }
            if can_skip(s) {
                a = log_add(a, prev[s - 2]);
            }
            alpha[t * s_len + s] = if a == ninf { ninf } else { a + lp(t, s) };
        }
    }

    let mut beta = vec![ninf; time_steps * s_len];
    let last = (time_steps - 1) * s_len;
    beta[last + s_len - 1] = lp(time_steps - 1, s_len - 1);
    if s_len > 1 {
        beta[last + s_len - 2] = lp(time_steps - 1, s_len - 2);
    }
    for t in (0..time_steps - 1).rev() {
        for s in 0..s_len {
            let next = &beta[(t + 1) * s_len..(t + 2) * s_len];
            let mut b = next[s];
            if s + 1 < s_len {
                b = log_add(b, next[s + 1]);
            }
            if s + 2 < s_len && can_skip(s + 2) {
                b = log_add(b, next[s + 2]);
            }
            beta[t * s_len + s] = if b == ninf { ninf } else { b + lp(t, s) };
        }
    }

    let tail = &alpha[last..];
    let log_total = if s_len > 1 {
        log_add(tail[s_len - 1], tail[s_len - 2])
    } else {
        tail[0]
    };
    if !log_total.is_finite() {
        return Err(Error::NonFinite {
            layer: "ctc_loss".into(),
        });
    }

    // d(-ln p)/d logit[t,k] = softmax[t,k] - sum_{s: ext[s]=k} alpha*beta / (y[t,k] * p)
    let mut grad = vec![0.0; logits.len()];
    let mut occupancy = vec![ninf; classes];
    for t in 0..time_steps {
        occupancy.iter_mut().for_each(|o| *o = ninf);
        for s in 0..s_len {
            let ab = alpha[t * s_len + s] + beta[t * s_len + s];
            if ab > ninf {
                occupancy[ext[s]] = log_add(occupancy[ext[s]], ab - lp(t, s));
            }
        }
        for k in 0..classes {
            let p = logp[t * classes + k].exp();
            let occ = if occupancy[k] == ninf {
                0.0
            } else {
                (occupancy[k] - log_total).exp()
            };
            grad[t * classes + k] = p - occ;
        }
    }
    Ok(CtcOutput { loss: -log_total, grad })
}

/// Best-path decoding: per-step argmax, collapse repeats, drop blanks.
pub fn greedy_path(logits: &[f64], classes: usize, blank: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for row in logits.chunks_exact(classes) {
        let mut best = 0;
        for (k, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = k;
            }
        }
        if Some(best) != prev && best != blank {
            out.push(best);
        }
        prev = Some(best);
    }
    out
}
