//! The dyadic scale–translation semigroup and its right action on scale stacks.
//!
//! An element `(i, z)` stands for the scaling `2^-i` followed by the integer
//! translation `z`. Only downscalings are representable, so there are no inverses.

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::ScaleStack;

/// Scale base of the semigroup. Fixed; configs asking for another base are rejected.
pub const GAMMA: u32 = 2;

/// An element `(2^-i, z)` of the scale–translation semigroup.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct SemigroupElement {
    /// Scale exponent.
    pub i: u32,
    /// Translation `(row, col)`.
    pub z: [i64; 2],
}

impl SemigroupElement {
    pub const IDENTITY: SemigroupElement = SemigroupElement { i: 0, z: [0, 0] };

    pub fn new(i: u32, z: [i64; 2]) -> Self {
        SemigroupElement { i, z }
    }

    pub fn scaling(i: u32) -> Self {
        SemigroupElement { i, z: [0, 0] }
    }

    /// Group law `(s, x)·(t, y) = (st, s⁻¹y + x)`, i.e. `(i_a + i_b, 2^i_a·z_b + z_a)`.
    pub fn compose(self, other: SemigroupElement) -> Result<SemigroupElement> {
        let i = self.i.checked_add(other.i).ok_or_else(|| Error::Range(format!("scale exponent {} + {}", self.i, other.i)))?;
        let factor = 1i64
            .checked_shl(self.i)
            .filter(|_| self.i < 63)
            .ok_or_else(|| Error::Range(format!("2^{} does not fit in i64", self.i)))?;
        let mut z = [0i64; 2];
        for d in 0..2 {
            z[d] = other.z[d]
                .checked_mul(factor)
                .and_then(|v| v.checked_add(self.z[d]))
                .ok_or_else(|| Error::Range(format!("translation overflow composing {self:?} with {other:?}")))?;
        }
        Ok(SemigroupElement { i, z })
    }
}

/// Free-function form of [`SemigroupElement::compose`].
pub fn compose(a: SemigroupElement, b: SemigroupElement) -> Result<SemigroupElement> {
    a.compose(b)
}

/// Right action `R_u f (k, y) = f(k + i, 2^i·y + z)`.
///
/// The output keeps `n_scales − i` levels on the subsampled grid
/// `⌈H/2^i⌉ × ⌈W/2^i⌉`; reads that leave the input grid yield `pad`.
pub fn act_with_pad<T: Real>(u: SemigroupElement, f: &ScaleStack<T>, pad: T) -> Result<ScaleStack<T>> {
    let shift = u.i as usize;
    if shift >= f.n_scales {
        return Err(Error::Empty(format!("action with scale exponent {} on a stack of {} levels", u.i, f.n_scales)));
    }
    let step = 1i64 << u.i;
    let n_out = f.n_scales - shift;
    let h_out = f.height.div_ceil(1 << shift);
    let w_out = f.width.div_ceil(1 << shift);
    let mut out = ScaleStack::filled(n_out, f.channels, h_out, w_out, pad);
    for k in 0..n_out {
        for c in 0..f.channels {
            for y in 0..h_out {
                let sy = step * y as i64 + u.z[0];
                if sy < 0 || sy >= f.height as i64 {
                    continue;
                }
                for x in 0..w_out {
                    let sx = step * x as i64 + u.z[1];
                    if sx < 0 || sx >= f.width as i64 {
                        continue;
                    }
                    out.set(k, c, y, x, f.get(k + shift, c, sy as usize, sx as usize));
                }
            }
        }
    }
    Ok(out)
}

/// [`act_with_pad`] with zero padding.
pub fn act<T: Real>(u: SemigroupElement, f: &ScaleStack<T>) -> Result<ScaleStack<T>> {
    act_with_pad(u, f, T::zero())
}

/// Side of the square receptive field at scale `s` of `L` stacked scale
/// cross-correlations with `P × K × K` filters: `K + 2^(s+P−1)(L−1)(K−1)`.
pub fn receptive_field_side(layers: usize, taps: usize, kernel: usize, scale: u32) -> usize {
    assert!(layers >= 1 && taps >= 1 && kernel % 2 == 1);
    kernel + (1usize << (scale as usize + taps - 1)) * (layers - 1) * (kernel - 1)
}
