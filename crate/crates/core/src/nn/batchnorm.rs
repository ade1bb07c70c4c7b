//! Batch normalization with statistics pooled over batch, scale and space.
//!
//! Pooling over the scale axis keeps the normalization a per-channel affine map
//! shared by every level, so it commutes with the semigroup action.

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::ScaleStack;

pub const BN_EPS: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm<T = f64> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    /// Weight of the current batch in the running averages.
    pub momentum: f64,
}

/// What the backward pass needs from a training-mode forward.
#[derive(Clone, Debug)]
pub struct BnCache<T> {
    xhat: Vec<ScaleStack<T>>,
    inv_std: Vec<f64>,
}

impl<T: Real> BatchNorm<T> {
    pub fn new(channels: usize) -> Self {
        BatchNorm {
            gamma: vec![T::one(); channels],
            beta: vec![T::zero(); channels],
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            momentum: 0.1,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn check(&self, f: &ScaleStack<T>) -> Result<()> {
        if f.channels != self.channels() {
            return Err(Error::Shape(format!("batch norm over {} channels given {}", self.channels(), f.channels)));
        }
        Ok(())
    }

    /// Normalizes with batch statistics and updates the running averages.
    pub fn forward_train(&mut self, batch: &[ScaleStack<T>]) -> Result<(Vec<ScaleStack<T>>, BnCache<T>)> {
        if batch.is_empty() {
            return Err(Error::Empty("batch norm on an empty batch".into()));
        }
        for f in batch {
            self.check(f)?;
        }
        let ch = self.channels();
        let mut sum = vec![0.0f64; ch];
        let mut count = 0usize;
        for f in batch {
            for k in 0..f.n_scales {
                for (c, s) in sum.iter_mut().enumerate() {
                    *s += f.plane(k, c).iter().map(|v| v.f64()).sum::<f64>();
                }
            }
            count += f.n_scales * f.height * f.width;
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        let mut sq = vec![0.0f64; ch];
        for f in batch {
            for k in 0..f.n_scales {
                for (c, s) in sq.iter_mut().enumerate() {
                    *s += f.plane(k, c).iter().map(|v| (v.f64() - mean[c]).powi(2)).sum::<f64>();
                }
            }
        }
        let var: Vec<f64> = sq.iter().map(|s| s / count as f64).collect();
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();

        let m = self.momentum;
        let unbias = if count > 1 { count as f64 / (count - 1) as f64 } else { 1.0 };
        for c in 0..ch {
            self.running_mean[c] = T::of((1.0 - m) * self.running_mean[c].f64() + m * mean[c]);
            self.running_var[c] = T::of((1.0 - m) * self.running_var[c].f64() + m * var[c] * unbias);
        }

        let mut outs = Vec::with_capacity(batch.len());
        let mut xhats = Vec::with_capacity(batch.len());
        for f in batch {
            let mut xhat = f.clone();
            let mut out = f.clone();
            for k in 0..f.n_scales {
                for c in 0..ch {
                    let (mu, is) = (mean[c], inv_std[c]);
                    let (g, b) = (self.gamma[c].f64(), self.beta[c].f64());
                    for v in xhat.plane_mut(k, c) {
                        *v = T::of((v.f64() - mu) * is);
                    }
                    for (o, x) in out.plane_mut(k, c).iter_mut().zip(xhat.plane(k, c)) {
                        *o = T::of(g * x.f64() + b);
                    }
                }
            }
            outs.push(out);
            xhats.push(xhat);
        }
        Ok((outs, BnCache { xhat: xhats, inv_std }))
    }

    /// Normalizes with the running statistics.
    pub fn forward_eval(&self, f: &ScaleStack<T>) -> Result<ScaleStack<T>> {
        self.check(f)?;
        let mut out = f.clone();
        for k in 0..f.n_scales {
            for c in 0..self.channels() {
                let is = 1.0 / (self.running_var[c].f64() + BN_EPS).sqrt();
                let scale = T::of(self.gamma[c].f64() * is);
                let shift = T::of(self.beta[c].f64() - self.gamma[c].f64() * is * self.running_mean[c].f64());
                for v in out.plane_mut(k, c) {
                    *v = *v * scale + shift;
                }
            }
        }
        Ok(out)
    }

    /// Returns input gradients and the gradients of `gamma` and `beta`.
    pub fn backward(&self, cache: &BnCache<T>, upstream: &[ScaleStack<T>]) -> Result<(Vec<ScaleStack<T>>, Vec<T>, Vec<T>)> {
        if upstream.len() != cache.xhat.len() || upstream.iter().zip(&cache.xhat).any(|(u, x)| !u.same_shape(x)) {
            return Err(Error::Shape("batch norm upstream does not match the forward batch".into()));
        }
        let ch = self.channels();
        let mut dgamma = vec![0.0f64; ch];
        let mut dbeta = vec![0.0f64; ch];
        let mut count = 0usize;
        for (u, x) in upstream.iter().zip(&cache.xhat) {
            for k in 0..u.n_scales {
                for c in 0..ch {
                    for (&g, &xh) in u.plane(k, c).iter().zip(x.plane(k, c)) {
                        dbeta[c] += g.f64();
                        dgamma[c] += g.f64() * xh.f64();
                    }
                }
            }
            count += u.n_scales * u.height * u.width;
        }
        let n = count as f64;
        let mut grads = Vec::with_capacity(upstream.len());
        for (u, x) in upstream.iter().zip(&cache.xhat) {
            let mut g = u.clone();
            for k in 0..u.n_scales {
                for c in 0..ch {
                    let gam = self.gamma[c].f64();
                    let coef = gam * cache.inv_std[c] / n;
                    for (gv, &xh) in g.plane_mut(k, c).iter_mut().zip(x.plane(k, c)) {
                        *gv = T::of(coef * (n * gv.f64() - dbeta[c] - xh.f64() * dgamma[c]));
                    }
                }
            }
            grads.push(g);
        }
        Ok((grads, dgamma.into_iter().map(T::of).collect(), dbeta.into_iter().map(T::of).collect()))
    }
}
