use crate::error::{AutodiffError, Result};
use crate::params::ParamSet;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimKind {
    Adam,
    AdamW,
}

/// Adam / AdamW state with bias-corrected moments.
///
/// The update is `p -= lr * m_hat / (sqrt(v_hat) + eps)`. AdamW first scales
/// parameters by `1 - lr * weight_decay`; plain Adam folds a non-zero
/// `weight_decay` into the gradient instead.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub kind: OptimKind,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub lr: f64,
    pub weight_decay: f64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    step: u64,
}

impl OptimState {
    pub fn new(kind: OptimKind, params: &ParamSet, lr: f64, weight_decay: f64) -> Self {
        let zeros: Vec<Tensor> = params
            .tensors()
            .iter()
            .map(|t| Tensor::zeros(t.shape()))
            .collect();
        Self {
            kind,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-10,
            lr,
            weight_decay,
            first: zeros.clone(),
            second: zeros,
            step: 0,
        }
    }

    pub fn adam(params: &ParamSet, lr: f64) -> Self {
        Self::new(OptimKind::Adam, params, lr, 0.0)
    }

    pub fn adamw(params: &ParamSet, lr: f64, weight_decay: f64) -> Self {
        Self::new(OptimKind::AdamW, params, lr, weight_decay)
    }

    /// Restores a state from stored moments.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        kind: OptimKind,
        beta1: f64,
        beta2: f64,
        eps: f64,
        lr: f64,
        weight_decay: f64,
        first: Vec<Tensor>,
        second: Vec<Tensor>,
        step: u64,
    ) -> Result<Self> {
        if first.len() != second.len() {
            return Err(AutodiffError::ParamCount {
                expected: first.len(),
                got: second.len(),
            });
        }
        for (m, v) in first.iter().zip(&second) {
            if m.shape() != v.shape() {
                return Err(AutodiffError::ShapeMismatch {
                    op: "optimizer moments",
                    lhs: m.shape().to_vec(),
                    rhs: v.shape().to_vec(),
                });
            }
        }
        Ok(Self {
            kind,
            beta1,
            beta2,
            eps,
            lr,
            weight_decay,
            first,
            second,
            step,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Tensor] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Tensor] {
        &self.second
    }

    /// Applies one update. Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, params: &mut ParamSet, grads: &[Tensor]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(AutodiffError::ParamCount {
                expected: self.first.len(),
                got: params.len().min(grads.len()),
            });
        }
        for (i, g) in grads.iter().enumerate() {
            let p = params.get(i);
            if g.shape() != p.shape() || self.first[i].shape() != p.shape() {
                return Err(AutodiffError::ShapeMismatch {
                    op: "optimizer step",
                    lhs: p.shape().to_vec(),
                    rhs: g.shape().to_vec(),
                });
            }
            if !g.all_finite() {
                return Err(AutodiffError::NonFiniteGradient(params.name(i).to_string()));
            }
        }

        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps, wd) = (self.beta1, self.beta2, self.lr, self.eps, self.weight_decay);
        let decoupled = self.kind == OptimKind::AdamW;

        for (i, g) in grads.iter().enumerate() {
            let p = params.get_mut(i).data_mut();
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            for j in 0..p.len() {
                let mut gj = g.data()[j];
                if decoupled {
                    p[j] -= lr * wd * p[j];
                } else if wd != 0.0 {
                    gj += wd * p[j];
                }
                m[j] = b1 * m[j] + (1.0 - b1) * gj;
                v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(value: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.push("w", Tensor::scalar(value));
        p
    }

    #[test]
    fn zero_gradient_is_fixed_point_for_adam() {
        let mut p = ParamSet::new();
        p.push("w", Tensor::vector(vec![1.0, -2.0, 3.5]));
        let before = p.clone();
        let mut opt = OptimState::adam(&p, 1e-3);
        for _ in 0..5 {
            opt.step(&mut p, &[Tensor::zeros(&[3])]).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn first_adam_step_matches_hand_formula() {
        // m_hat = g, v_hat = g^2 on the first step, so the move is
        // lr * g / (|g| + eps).
        let (g, lr, p0) = (0.37, 0.01, 2.0);
        let mut p = single(p0);
        let mut opt = OptimState::adam(&p, lr);
        opt.step(&mut p, &[Tensor::scalar(g)]).unwrap();
        let expected = p0 - lr * g / (g.abs() + 1e-10);
        assert!((p.get(0).item() - expected).abs() < 1e-15);
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn adamw_zero_gradient_contracts() {
        let (lr, wd) = (1e-2, 0.5);
        let mut p = single(4.0);
        let mut opt = OptimState::adamw(&p, lr, wd);
        opt.step(&mut p, &[Tensor::scalar(0.0)]).unwrap();
        assert!((p.get(0).item() - 4.0 * (1.0 - lr * wd)).abs() < 1e-15);
        opt.step(&mut p, &[Tensor::scalar(0.0)]).unwrap();
        assert!((p.get(0).item() - 4.0 * (1.0 - lr * wd).powi(2)).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut p = ParamSet::new();
        p.push("layer0.weight", Tensor::vector(vec![1.0, 2.0]));
        let before = p.clone();
        let mut opt = OptimState::adam(&p, 1e-3);
        let err = opt
            .step(&mut p, &[Tensor::vector(vec![f64::NAN, 0.0])])
            .unwrap_err();
        assert_eq!(err, AutodiffError::NonFiniteGradient("layer0.weight".into()));
        assert_eq!(p, before);
        assert_eq!(opt.step_count(), 0);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = single(1.0);
        let mut opt = OptimState::adam(&p, 1e-3);
        assert!(opt.step(&mut p, &[Tensor::vector(vec![1.0, 2.0])]).is_err());
    }
}
