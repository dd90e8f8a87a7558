use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// RMSprop with per-parameter running mean of squared gradients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmsProp {
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
    accumulators: Vec<Vec<f64>>,
}

impl RmsProp {
    pub const DEFAULT_RHO: f64 = 0.9;
    pub const DEFAULT_EPSILON: f64 = 1e-7;

    /// One zeroed accumulator per parameter tensor, sized by `sizes`.
    pub fn new(learning_rate: f64, sizes: &[usize]) -> Self {
        Self::with_params(learning_rate, Self::DEFAULT_RHO, Self::DEFAULT_EPSILON, sizes)
    }

    pub fn with_params(learning_rate: f64, rho: f64, epsilon: f64, sizes: &[usize]) -> Self {
        Self {
            learning_rate,
            rho,
            epsilon,
            accumulators: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn accumulators(&self) -> &[Vec<f64>] {
        &self.accumulators
    }

    /// `acc = rho*acc + (1-rho)*g^2; p -= lr * g / (sqrt(acc) + eps)`.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.accumulators.len() || grads.len() != self.accumulators.len() {
            return Err(Error::dim(format!(
                "optimizer tracks {} tensors, got {} params and {} grads",
                self.accumulators.len(),
                params.len(),
                grads.len()
            )));
        }
        for ((p, g), acc) in params.iter_mut().zip(grads).zip(&mut self.accumulators) {
            if p.len() != acc.len() || g.len() != acc.len() {
                return Err(Error::dim("parameter and accumulator sizes differ"));
            }
            for ((pv, &gv), a) in p.iter_mut().zip(g.iter()).zip(acc.iter_mut()) {
                *a = self.rho * *a + (1.0 - self.rho) * gv * gv;
                *pv -= self.learning_rate * gv / (a.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

/// Learning rate decaying geometrically from `start` at epoch 0 to `end` at
/// the final epoch.
pub fn geometric_lr(start: f64, end: f64, epoch: usize, epochs: usize) -> f64 {
    if epochs <= 1 {
        return start;
    }
    let frac = epoch.min(epochs - 1) as f64 / (epochs - 1) as f64;
    start * (end / start).powf(frac)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut opt = RmsProp::new(0.001, &[3]);
        let mut p = vec![1.0, 2.0, 3.0];
        opt.step(&mut [&mut p], &[&[0.0; 3]]).unwrap();
        assert_eq!(p, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn first_step_reference() {
        let mut opt = RmsProp::new(0.001, &[1]);
        let mut p = vec![0.0];
        opt.step(&mut [&mut p], &[&[1.0]]).unwrap();
        // -0.001 / (sqrt(0.1) + 1e-7)
        let expected = -0.001 / (0.1f64.sqrt() + 1e-7);
        assert!((p[0] - expected).abs() < 1e-15);
        assert!((p[0] + 0.0031623).abs() < 1e-7);
    }

    #[test]
    fn two_steps_match_unrolled_recurrence() {
        let (lr, rho, eps, g) = (0.01, 0.9, 1e-7, 0.5);
        let mut opt = RmsProp::with_params(lr, rho, eps, &[1]);
        let mut p = vec![1.0];
        opt.step(&mut [&mut p], &[&[g]]).unwrap();
        opt.step(&mut [&mut p], &[&[g]]).unwrap();
        let a1 = (1.0 - rho) * g * g;
        let p1 = 1.0 - lr * g / (f64::sqrt(a1) + eps);
        let a2 = rho * a1 + (1.0 - rho) * g * g;
        let p2 = p1 - lr * g / (f64::sqrt(a2) + eps);
        assert_eq!(p[0], p2);
        assert_eq!(opt.accumulators()[0][0], a2);
    }

    #[test]
    fn schedule_endpoints() {
        assert_eq!(geometric_lr(1e-3, 4e-5, 0, 40), 1e-3);
        assert!((geometric_lr(1e-3, 4e-5, 39, 40) - 4e-5).abs() < 1e-18);
        let mid = geometric_lr(1e-3, 4e-5, 20, 41);
        assert!((mid - (1e-3f64 * 4e-5).sqrt()).abs() < 1e-15);
    }
}
