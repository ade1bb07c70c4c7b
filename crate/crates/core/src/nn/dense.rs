use rand::Rng;

use crate::error::{Error, Result};
use crate::real::Real;

/// Fully connected layer `logits = W·v + b`, `W` stored row-major as `(units, inputs)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T = f64> {
    pub units: usize,
    pub inputs: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Dense<T> {
    pub fn glorot<R: Rng>(inputs: usize, units: usize, rng: &mut R) -> Self {
        let bound = (6.0 / (inputs + units) as f64).sqrt();
        Dense {
            units,
            inputs,
            weights: (0..units * inputs).map(|_| T::of(rng.gen_range(-bound..=bound))).collect(),
            bias: vec![T::zero(); units],
        }
    }

    pub fn forward(&self, v: &[T]) -> Result<Vec<T>> {
        if v.len() != self.inputs {
            return Err(Error::Shape(format!("dense layer expects {} inputs, got {}", self.inputs, v.len())));
        }
        Ok(self
            .weights
            .chunks(self.inputs)
            .zip(&self.bias)
            .map(|(row, &b)| row.iter().zip(v).fold(b, |acc, (&w, &x)| acc + w * x))
            .collect())
    }

    /// Returns `(grad_v, grad_W, grad_b)`.
    pub fn backward(&self, v: &[T], upstream: &[T]) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
        if v.len() != self.inputs || upstream.len() != self.units {
            return Err(Error::Shape("dense backward shapes do not match the layer".into()));
        }
        let mut gv = vec![T::zero(); self.inputs];
        let mut gw = vec![T::zero(); self.weights.len()];
        for (o, &u) in upstream.iter().enumerate() {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            for i in 0..self.inputs {
                gv[i] += row[i] * u;
                gw[o * self.inputs + i] = u * v[i];
            }
        }
        Ok((gv, gw, upstream.to_vec()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::finite_diff;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = Dense::<f64>::glorot(5, 3, &mut rng);
        let v: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let up = [0.3, -1.2, 0.8];
        let dot = |l: Vec<f64>| l.iter().zip(&up).map(|(a, b)| a * b).sum::<f64>();
        let (gv, gw, gb) = d.backward(&v, &up).unwrap();
        let fv = finite_diff(|x| dot(d.forward(x).unwrap()), &v, 1e-5);
        let fw = finite_diff(
            |w| {
                let mut m = d.clone();
                m.weights = w.to_vec();
                dot(m.forward(&v).unwrap())
            },
            &d.weights,
            1e-5,
        );
        let fb = finite_diff(
            |b| {
                let mut m = d.clone();
                m.bias = b.to_vec();
                dot(m.forward(&v).unwrap())
            },
            &d.bias,
            1e-5,
        );
        for (a, b) in [(gv, fv), (gw, fw), (gb, fb)] {
            assert!(crate::tensor::relative_l2(&a, &b) < 1e-8);
        }
    }
}
