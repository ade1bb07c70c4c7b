use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimizerKind {
    SgdMomentum { momentum: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            OptimizerKind::SgdMomentum { .. } => "sgd_momentum",
            OptimizerKind::Adam { .. } => "adam",
        }
    }
}

/// Optimizer hyperparameters with per-parameter moment buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<T = f64> {
    pub kind: OptimizerKind,
    pub lr: f64,
    /// First moments (velocity for SGD).
    pub m: Vec<Vec<T>>,
    /// Second moments (unused by SGD).
    pub v: Vec<Vec<T>>,
    pub step: u64,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(kind: OptimizerKind, lr: f64, shapes: &[usize]) -> Self {
        let zeros = || shapes.iter().map(|&n| vec![T::zero(); n]).collect::<Vec<_>>();
        OptimizerState { kind, lr, m: zeros(), v: zeros(), step: 0 }
    }

    pub fn update(&mut self, params: Vec<&mut [T]>, grads: &[Vec<T>]) -> Result<()> {
        if params.len() != grads.len()
            || params.len() != self.m.len()
            || params.iter().zip(grads).zip(&self.m).any(|((p, g), m)| p.len() != g.len() || p.len() != m.len())
        {
            return Err(Error::Shape("optimizer buffers do not match the parameters".into()));
        }
        self.step += 1;
        let lr = self.lr;
        match self.kind {
            OptimizerKind::SgdMomentum { momentum } => {
                for ((p, g), m) in params.into_iter().zip(grads).zip(&mut self.m) {
                    for i in 0..p.len() {
                        let vel = momentum * m[i].f64() + g[i].f64();
                        m[i] = T::of(vel);
                        p[i] = T::of(p[i].f64() - lr * vel);
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
                    for i in 0..p.len() {
                        let gi = g[i].f64();
                        let mi = beta1 * m[i].f64() + (1.0 - beta1) * gi;
                        let vi = beta2 * v[i].f64() + (1.0 - beta2) * gi * gi;
                        m[i] = T::of(mi);
                        v[i] = T::of(vi);
                        p[i] = T::of(p[i].f64() - lr * (mi / c1) / ((vi / c2).sqrt() + eps));
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters_alone() {
        for kind in [OptimizerKind::SgdMomentum { momentum: 0.9 }, OptimizerKind::adam()] {
            let mut p = vec![0.5f64, -1.25, 3.0];
            let before = p.clone();
            let mut opt = OptimizerState::<f64>::new(kind, 0.1, &[3]);
            for _ in 0..3 {
                opt.update(vec![&mut p[..]], &[vec![0.0; 3]]).unwrap();
            }
            assert_eq!(p, before);
        }
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = [1.0f64];
        let mut opt = OptimizerState::<f64>::new(OptimizerKind::adam(), 0.01, &[1]);
        opt.update(vec![&mut p[..]], &[vec![4.0]]).unwrap();
        assert!((p[0] - 0.99).abs() < 1e-9);
    }

    #[test]
    fn sgd_minimizes_a_quadratic() {
        let mut p = [3.0f64];
        let mut opt = OptimizerState::<f64>::new(OptimizerKind::SgdMomentum { momentum: 0.5 }, 0.1, &[1]);
        for _ in 0..100 {
            let g = vec![2.0 * p[0]];
            opt.update(vec![&mut p[..]], &[g]).unwrap();
        }
        assert!(p[0].abs() < 1e-6);
    }
}
