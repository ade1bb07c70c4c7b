//! Quadratic dilations and erosions, `q_t(y) = −‖y‖²/(4ct)`, evaluated separably.
//!
//! Since `‖y‖² = y_r² + y_c²`, the 2-D max-plus correlation is a column pass
//! followed by a row pass. Each candidate value is `(f − q(y_c)) − q(y_r)`,
//! which makes the factorization exact even in floating point: rounding is
//! monotone and `max` never rounds. Out-of-image candidates are skipped.

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Image;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MorphOp {
    /// `δ_t f(x) = max_y f(x − y) + q_t(y)`.
    Dilate,
    /// `ε_t f(x) = min_y f(x + y) − q_t(y)`.
    Erode,
}

/// Winning offsets of one forward pass, consumed by [`morph_backward`].
///
/// For a dilation the winning source of pixel `x` is `x − y*`; for an erosion it is `x + y*`.
#[derive(Clone, Debug, PartialEq)]
pub struct MorphTrace {
    pub op: MorphOp,
    pub t: f64,
    pub c: f64,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub offsets: Vec<[i32; 2]>,
}

impl MorphTrace {
    fn source(&self, y: usize, x: usize, off: [i32; 2]) -> (usize, usize) {
        let (dy, dx) = match self.op {
            MorphOp::Dilate => (-off[0] as i64, -off[1] as i64),
            MorphOp::Erode => (off[0] as i64, off[1] as i64),
        };
        ((y as i64 + dy) as usize, (x as i64 + dx) as usize)
    }
}

/// Support radius beyond which `q_t(y) < −Δ`, so no candidate can win.
pub fn structuring_radius(t: f64, c: f64, dynamic_range: f64, radius_factor: f64) -> usize {
    let r = (radius_factor * (4.0 * c * t * dynamic_range).sqrt()).ceil();
    if r.is_finite() && r >= 1.0 {
        r as usize
    } else {
        1
    }
}

fn check_params(t: f64, c: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("structuring scale must be positive, got {t}")));
    }
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::Domain(format!("structuring parameter c must be positive, got {c}")));
    }
    Ok(())
}

fn morph<T: Real>(f: &Image<T>, t: f64, c: f64, radius_factor: f64, op: MorphOp) -> Result<(Image<T>, MorphTrace)> {
    check_params(t, c)?;
    let delta = (f.max_value() - f.min_value()).f64();
    let (h, w) = (f.height, f.width);
    let radius = structuring_radius(t, c, delta, radius_factor).min(h.max(w).max(2) - 1);
    let q: Vec<T> = (0..=radius).map(|d| T::of((d * d) as f64 / (4.0 * c * t))).collect();
    let r = radius as i64;
    let better = |cand: T, best: T| match op {
        MorphOp::Dilate => cand > best,
        MorphOp::Erode => cand < best,
    };
    let apply = |v: T, qd: T| match op {
        MorphOp::Dilate => v - qd,
        MorphOp::Erode => v + qd,
    };
    // Dilation reads x − d, erosion reads x + d.
    let dir: i64 = match op {
        MorphOp::Dilate => -1,
        MorphOp::Erode => 1,
    };
    let worst = match op {
        MorphOp::Dilate => T::neg_infinity(),
        MorphOp::Erode => T::infinity(),
    };

    let mut out = Image::zeros(f.channels, h, w);
    let mut offsets = vec![[0i32; 2]; f.channels * h * w];
    let mut row_pass = vec![T::zero(); h * w];
    let mut row_arg = vec![0i32; h * w];
    for ch in 0..f.channels {
        let src = f.plane(ch);
        for y in 0..h {
            for x in 0..w {
                let mut best = worst;
                let mut arg = 0i64;
                for d in -r..=r {
                    let sx = x as i64 + dir * d;
                    if sx < 0 || sx >= w as i64 {
                        continue;
                    }
                    let cand = apply(src[y * w + sx as usize], q[d.unsigned_abs() as usize]);
                    if better(cand, best) {
                        best = cand;
                        arg = d;
                    }
                }
                row_pass[y * w + x] = best;
                row_arg[y * w + x] = arg as i32;
            }
        }
        let dst = out.plane_mut(ch);
        let base = ch * h * w;
        for y in 0..h {
            for x in 0..w {
                let mut best = worst;
                let mut arg = 0i64;
                for d in -r..=r {
                    let sy = y as i64 + dir * d;
                    if sy < 0 || sy >= h as i64 {
                        continue;
                    }
                    let cand = apply(row_pass[sy as usize * w + x], q[d.unsigned_abs() as usize]);
                    if better(cand, best) {
                        best = cand;
                        arg = d;
                    }
                }
                dst[y * w + x] = best;
                let sy = (y as i64 + dir * arg) as usize;
                offsets[base + y * w + x] = [arg as i32, row_arg[sy * w + x]];
            }
        }
    }
    let trace = MorphTrace { op, t, c, channels: f.channels, height: h, width: w, offsets };
    Ok((out, trace))
}

/// Quadratic dilation `δ_t`; returns the output and the winning offsets.
pub fn quad_dilate<T: Real>(f: &Image<T>, t: f64, c: f64, radius_factor: f64) -> Result<(Image<T>, MorphTrace)> {
    morph(f, t, c, radius_factor, MorphOp::Dilate)
}

/// Quadratic erosion `ε_t`; returns the output and the winning offsets.
pub fn quad_erode<T: Real>(f: &Image<T>, t: f64, c: f64, radius_factor: f64) -> Result<(Image<T>, MorphTrace)> {
    morph(f, t, c, radius_factor, MorphOp::Erode)
}

/// Opening `α_t = δ_t ∘ ε_t`. Traces are listed in application order.
pub fn quad_open<T: Real>(f: &Image<T>, t: f64, c: f64, radius_factor: f64) -> Result<(Image<T>, Vec<MorphTrace>)> {
    let (e, te) = quad_erode(f, t, c, radius_factor)?;
    let (d, td) = quad_dilate(&e, t, c, radius_factor)?;
    Ok((d, vec![te, td]))
}

/// Closing `β_t = ε_t ∘ δ_t`. Traces are listed in application order.
pub fn quad_close<T: Real>(f: &Image<T>, t: f64, c: f64, radius_factor: f64) -> Result<(Image<T>, Vec<MorphTrace>)> {
    let (d, td) = quad_dilate(f, t, c, radius_factor)?;
    let (e, te) = quad_erode(&d, t, c, radius_factor)?;
    Ok((e, vec![td, te]))
}

/// Subgradient of one morphological pass.
///
/// Returns the gradient with respect to the pass input and the derivative of
/// `Σ upstream · output` with respect to `c`.
pub fn morph_backward<T: Real>(trace: &MorphTrace, upstream: &Image<T>) -> Result<(Image<T>, f64)> {
    if (upstream.channels, upstream.height, upstream.width) != (trace.channels, trace.height, trace.width) {
        return Err(Error::Contract(format!(
            "upstream gradient {}x{}x{} does not match trace {}x{}x{}",
            upstream.channels, upstream.height, upstream.width, trace.channels, trace.height, trace.width
        )));
    }
    let (h, w) = (trace.height, trace.width);
    let mut grad = Image::zeros(trace.channels, h, w);
    // d/dc of −‖y‖²/(4ct) is ‖y‖²/(4c²t); erosion flips the sign.
    let sign = match trace.op {
        MorphOp::Dilate => 1.0,
        MorphOp::Erode => -1.0,
    };
    let scale = sign / (4.0 * trace.c * trace.c * trace.t);
    let mut grad_c = 0.0;
    for ch in 0..trace.channels {
        let base = ch * h * w;
        for y in 0..h {
            for x in 0..w {
                let g = upstream.data[base + y * w + x];
                if g == T::zero() {
                    continue;
                }
                let off = trace.offsets[base + y * w + x];
                let (sy, sx) = trace.source(y, x, off);
                grad.data[base + sy * w + sx] += g;
                let n2 = (off[0] as i64 * off[0] as i64 + off[1] as i64 * off[1] as i64) as f64;
                grad_c += g.f64() * n2 * scale;
            }
        }
    }
    Ok((grad, grad_c))
}

/// Backward pass through a composition of passes given in application order.
pub(crate) fn chain_backward<T: Real>(traces: &[MorphTrace], upstream: &Image<T>) -> Result<(Image<T>, f64)> {
    let mut g = upstream.clone();
    let mut grad_c = 0.0;
    for trace in traces.iter().rev() {
        let (gi, gc) = morph_backward(trace, &g)?;
        g = gi;
        grad_c += gc;
    }
    Ok((g, grad_c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Image<f64> {
        Image::from_vec(1, h, w, (0..h * w).map(|_| rng.gen::<f64>()).collect()).unwrap()
    }

    /// Pixel values on a 2^-8 grid: all arithmetic below stays exact.
    fn dyadic_image(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Image<f64> {
        let data = (0..h * w).map(|_| rng.gen_range(0..=256) as f64 / 256.0).collect();
        Image::from_vec(1, h, w, data).unwrap()
    }

    fn all_le(a: &Image<f64>, b: &Image<f64>) -> bool {
        a.data.iter().zip(&b.data).all(|(x, y)| x <= y)
    }

    #[test]
    fn dilation_is_extensive_and_erosion_anti_extensive() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let f = random_image(&mut rng, 16, 20);
            let (d, _) = quad_dilate(&f, 1.5, 0.7, 1.0).unwrap();
            let (e, _) = quad_erode(&f, 1.5, 0.7, 1.0).unwrap();
            assert!(all_le(&f, &d));
            assert!(all_le(&e, &f));
        }
    }

    #[test]
    fn impulse_dilates_into_a_paraboloid() {
        let mut f = Image::<f64>::zeros(1, 21, 21);
        f.set(0, 10, 10, 1.0);
        let (t, c) = (2.0, 0.5);
        let (d, _) = quad_dilate(&f, t, c, 1.0).unwrap();
        for y in 0..21i64 {
            for x in 0..21i64 {
                let n2 = ((y - 10) * (y - 10) + (x - 10) * (x - 10)) as f64;
                let peak = 1.0 - n2 / (4.0 * c * t);
                let v = d.get(0, y as usize, x as usize);
                assert!((v - peak.max(0.0)).abs() < 1e-12, "({y},{x}) {v} vs {peak}");
            }
        }
    }

    #[test]
    fn erosion_is_dual_to_dilation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = random_image(&mut rng, 18, 14);
        let (d, td) = quad_dilate(&f, 3.0, 1.2, 1.0).unwrap();
        let (e, te) = quad_erode(&f.map(|v| -v), 3.0, 1.2, 1.0).unwrap();
        for (a, b) in d.data.iter().zip(&e.data) {
            assert_eq!(*a, -*b);
        }
        for (a, b) in td.offsets.iter().zip(&te.offsets) {
            assert_eq!(*a, [-b[0], -b[1]]);
        }
    }

    #[test]
    fn adjunction_inequalities_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let f = dyadic_image(&mut rng, 16, 16);
            let (d, _) = quad_dilate(&f, 2.0, 1.0, 1.0).unwrap();
            let (ed, _) = quad_erode(&d, 2.0, 1.0, 1.0).unwrap();
            let (e, _) = quad_erode(&f, 2.0, 1.0, 1.0).unwrap();
            let (de, _) = quad_dilate(&e, 2.0, 1.0, 1.0).unwrap();
            assert!(all_le(&f, &ed));
            assert!(all_le(&de, &f));
        }
    }

    #[test]
    fn ordering_chain_and_idempotence() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let f = dyadic_image(&mut rng, 16, 16);
            let (t, c) = (4.0, 0.5);
            let (e, _) = quad_erode(&f, t, c, 1.0).unwrap();
            let (o, _) = quad_open(&f, t, c, 1.0).unwrap();
            let (cl, _) = quad_close(&f, t, c, 1.0).unwrap();
            let (d, _) = quad_dilate(&f, t, c, 1.0).unwrap();
            assert!(all_le(&e, &o) && all_le(&o, &f) && all_le(&f, &cl) && all_le(&cl, &d));
            assert_eq!(quad_close(&cl, t, c, 1.0).unwrap().0, cl);
            assert_eq!(quad_open(&o, t, c, 1.0).unwrap().0, o);
        }
    }

    #[test]
    fn chained_dilations_stay_below_the_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let f = dyadic_image(&mut rng, 32, 32);
            let (once, _) = quad_dilate(&f, 2.0, 1.0, 1.0).unwrap();
            let (twice, _) = quad_dilate(&once, 2.0, 1.0, 1.0).unwrap();
            let (direct, _) = quad_dilate(&f, 4.0, 1.0, 1.0).unwrap();
            assert!(all_le(&twice, &direct));
        }
    }

    #[test]
    fn domain_errors() {
        let f = Image::<f64>::zeros(1, 4, 4);
        assert!(matches!(quad_dilate(&f, 0.0, 1.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(quad_erode(&f, 1.0, -1.0, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn constant_image_clamps_radius() {
        assert_eq!(structuring_radius(3.0, 1.0, 0.0, 1.0), 1);
        let f = Image::<f64>::filled(1, 5, 5, 2.0);
        let (d, _) = quad_dilate(&f, 3.0, 1.0, 1.0).unwrap();
        assert_eq!(d, f);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let f = random_image(&mut rng, 8, 8);
        let (_, tr) = quad_dilate(&f, 1.0, 1.0, 1.0).unwrap();
        let (g, gc) = morph_backward(&tr, &Image::<f64>::zeros(1, 8, 8)).unwrap();
        assert!(g.data.iter().all(|&v| v == 0.0));
        assert_eq!(gc, 0.0);
    }

    #[test]
    fn single_pixel_upstream_hits_the_recorded_source() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f = random_image(&mut rng, 12, 12);
        let (_, tr) = quad_dilate(&f, 2.0, 1.0, 1.0).unwrap();
        let mut up = Image::zeros(1, 12, 12);
        up.set(0, 5, 6, 1.0);
        let (g, _) = morph_backward(&tr, &up).unwrap();
        let off = tr.offsets[5 * 12 + 6];
        let (sy, sx) = ((5 - off[0]) as usize, (6 - off[1]) as usize);
        assert_eq!(g.get(0, sy, sx), 1.0);
        assert_eq!(g.data.iter().filter(|&&v| v != 0.0).count(), 1);
    }

    #[test]
    fn mismatched_upstream_is_a_contract_violation() {
        let f = Image::<f64>::zeros(1, 4, 4);
        let (_, tr) = quad_dilate(&f, 1.0, 1.0, 1.0).unwrap();
        assert!(matches!(morph_backward(&tr, &Image::<f64>::zeros(1, 4, 5)), Err(Error::Contract(_))));
    }

    fn c_gradient_check(op: &dyn Fn(&Image<f64>, f64) -> (Image<f64>, Vec<MorphTrace>)) {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..5 {
            let f = random_image(&mut rng, 12, 12);
            let weights: Vec<f64> = (0..144).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let up = Image::from_vec(1, 12, 12, weights.clone()).unwrap();
            let c = 0.8;
            let (_, traces) = op(&f, c);
            let (_, analytic) = chain_backward(&traces, &up).unwrap();
            let loss = |c: f64| -> f64 { op(&f, c).0.data.iter().zip(&weights).map(|(a, b)| a * b).sum() };
            let step = 1e-5;
            let numeric = (loss(c + step) - loss(c - step)) / (2.0 * step);
            let rel = (numeric - analytic).abs() / analytic.abs().max(1e-12);
            assert!(rel <= 1e-5, "numeric {numeric} analytic {analytic}");
        }
    }

    #[test]
    fn c_gradient_matches_finite_differences() {
        c_gradient_check(&|f, c| {
            let (o, t) = quad_dilate(f, 2.0, c, 1.0).unwrap();
            (o, vec![t])
        });
        c_gradient_check(&|f, c| {
            let (o, t) = quad_erode(f, 2.0, c, 1.0).unwrap();
            (o, vec![t])
        });
        c_gradient_check(&|f, c| quad_open(f, 2.0, c, 1.0).unwrap());
        c_gradient_check(&|f, c| quad_close(f, 2.0, c, 1.0).unwrap());
    }
}
