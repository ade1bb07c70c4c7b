//! Semigroup cross-correlation on scale stacks.
//!
//! Output level `k` at `x` sums `f(k + l, 2^k·y + x)·h(l, y)` over scale taps
//! `l < P` and offsets `y ∈ [−r, r]²`, then over input channels. Outside the
//! grid the input reads as zero. A spatial stride keeps every `σ`-th output.
//!
//! The kernels below accumulate each output with fused multiply-adds in the
//! order `(l, c, y_row, y_col)`, skipping out-of-grid rows and multiplying
//! zeros for out-of-grid columns. Since `fma(w, 0, a) = a` for every
//! accumulated `a`, results are bit-identical to a plain nested loop of fused
//! multiply-adds that skips every out-of-grid term.

use rand::Rng;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::ScaleStack;

/// Output columns processed per register block.
const LANES: usize = 16;

/// A learnable filter `h` of shape `(P, C_in, C_out, K, K)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SemigroupFilter<T = f64> {
    pub taps: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub weights: Vec<T>,
}

impl<T: Real> SemigroupFilter<T> {
    pub fn new(taps: usize, c_in: usize, c_out: usize, kernel: usize, weights: Vec<T>) -> Result<Self> {
        if taps == 0 || kernel.is_multiple_of(2) || c_in == 0 || c_out == 0 {
            return Err(Error::Shape(format!(
                "filter needs P >= 1, odd K and nonzero channels (P={taps}, K={kernel}, {c_in}->{c_out})"
            )));
        }
        if weights.len() != taps * c_in * c_out * kernel * kernel {
            return Err(Error::Shape(format!(
                "filter has {} weights, expected {taps}x{c_in}x{c_out}x{kernel}x{kernel}",
                weights.len()
            )));
        }
        Ok(SemigroupFilter { taps, c_in, c_out, kernel, weights })
    }

    pub fn zeros(taps: usize, c_in: usize, c_out: usize, kernel: usize) -> Result<Self> {
        Self::new(taps, c_in, c_out, kernel, vec![T::zero(); taps * c_in * c_out * kernel * kernel])
    }

    /// Uniform in `±√(6 / (fan_in + fan_out))`, fans counted over `P·K²·C`.
    pub fn glorot<R: Rng>(taps: usize, c_in: usize, c_out: usize, kernel: usize, rng: &mut R) -> Result<Self> {
        let support = (taps * kernel * kernel) as f64;
        let bound = (6.0 / (support * (c_in + c_out) as f64)).sqrt();
        let n = taps * c_in * c_out * kernel * kernel;
        let weights = (0..n).map(|_| T::of(rng.gen_range(-bound..=bound))).collect();
        Self::new(taps, c_in, c_out, kernel, weights)
    }

    #[inline]
    pub fn index(&self, l: usize, c: usize, o: usize, jy: usize, jx: usize) -> usize {
        (((l * self.c_in + c) * self.c_out + o) * self.kernel + jy) * self.kernel + jx
    }

    pub fn get(&self, l: usize, c: usize, o: usize, jy: usize, jx: usize) -> T {
        self.weights[self.index(l, c, o, jy, jx)]
    }

    /// Weights reordered to `(l, c, jy, jx, o)` so output channels are contiguous.
    fn transposed(&self) -> Vec<T> {
        let k = self.kernel;
        let mut out = vec![T::zero(); self.weights.len()];
        for l in 0..self.taps {
            for c in 0..self.c_in {
                for o in 0..self.c_out {
                    for jy in 0..k {
                        for jx in 0..k {
                            let dst = (((l * self.c_in + c) * k + jy) * k + jx) * self.c_out + o;
                            out[dst] = self.get(l, c, o, jy, jx);
                        }
                    }
                }
            }
        }
        out
    }
}

/// Geometry shared by the forward and backward kernels of one call.
struct Geometry {
    levels_in: usize,
    levels_out: usize,
    c_in: usize,
    c_out: usize,
    taps: usize,
    k: usize,
    r: usize,
    stride: usize,
    h: usize,
    w: usize,
    ho: usize,
    wo: usize,
    /// `wo` rounded up to whole register blocks.
    wo_pad: usize,
}

impl Geometry {
    fn new<T: Real>(f: &ScaleStack<T>, h: &SemigroupFilter<T>, stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::Shape("spatial stride must be at least 1".into()));
        }
        if h.taps > f.n_scales {
            return Err(Error::Shape(format!("filter has {} scale taps but the input only {} levels", h.taps, f.n_scales)));
        }
        if h.c_in != f.channels {
            return Err(Error::Shape(format!("filter expects {} input channels, input has {}", h.c_in, f.channels)));
        }
        let ho = f.height.div_ceil(stride);
        let wo = f.width.div_ceil(stride);
        Ok(Geometry {
            levels_in: f.n_scales,
            levels_out: f.n_scales - h.taps + 1,
            c_in: h.c_in,
            c_out: h.c_out,
            taps: h.taps,
            k: h.kernel,
            r: h.kernel / 2,
            stride,
            h: f.height,
            w: f.width,
            ho,
            wo,
            wo_pad: wo.div_ceil(LANES) * LANES,
        })
    }

    /// Input row read by output row `yo` through kernel row `jy` at dilation `dil`.
    #[inline]
    fn input_row(&self, yo: usize, jy: usize, dil: usize) -> Option<usize> {
        let row = (self.stride * yo + dil * jy) as i64 - (dil * self.r) as i64;
        (row >= 0 && (row as usize) < self.h).then_some(row as usize)
    }

    /// Phase and in-phase offset of kernel column `jx` at dilation `dil`.
    #[inline]
    fn column_tap(&self, jx: usize, dil: usize) -> (usize, usize) {
        let d = dil * jx;
        (d % self.stride, d / self.stride)
    }

    fn phase_row_len(&self, dil: usize) -> usize {
        self.wo_pad + dil * (self.k - 1) / self.stride + 1
    }
}

/// One input level with columns zero-padded by `dil·r` on both sides and split
/// into `σ` phases, so every tap reads a contiguous run. Layout `(c, row, phase, j)`.
struct PhaseRows<T> {
    stride: usize,
    h: usize,
    row_len: usize,
    margin: usize,
    data: Vec<T>,
}

impl<T: Real> PhaseRows<T> {
    fn zeros(g: &Geometry, dil: usize) -> Self {
        let row_len = g.phase_row_len(dil);
        PhaseRows {
            stride: g.stride,
            h: g.h,
            row_len,
            margin: dil * g.r,
            data: vec![T::zero(); g.c_in * g.h * g.stride * row_len],
        }
    }

    fn gather(f: &ScaleStack<T>, level: usize, g: &Geometry, dil: usize) -> Self {
        let mut p = Self::zeros(g, dil);
        for c in 0..g.c_in {
            let plane = f.plane(level, c);
            for y in 0..g.h {
                let src = &plane[y * g.w..(y + 1) * g.w];
                for phase in 0..g.stride {
                    let start = p.offset(c, y, phase);
                    for j in 0..p.row_len {
                        let col = (phase + g.stride * j) as i64 - p.margin as i64;
                        if col >= 0 && (col as usize) < g.w {
                            p.data[start + j] = src[col as usize];
                        }
                    }
                }
            }
        }
        p
    }

    /// Adds the padded contents back onto `level` of `out`, dropping the margins.
    fn scatter_add(&self, out: &mut ScaleStack<T>, level: usize, channels: usize, w: usize) {
        for c in 0..channels {
            for y in 0..self.h {
                for phase in 0..self.stride {
                    let start = self.offset(c, y, phase);
                    for j in 0..self.row_len {
                        let col = (phase + self.stride * j) as i64 - self.margin as i64;
                        if col >= 0 && (col as usize) < w {
                            let i = out.index(level, c, y, col as usize);
                            out.data[i] += self.data[start + j];
                        }
                    }
                }
            }
        }
    }

    #[inline]
    fn offset(&self, c: usize, y: usize, phase: usize) -> usize {
        ((c * self.h + y) * self.stride + phase) * self.row_len
    }
}

/// Semigroup cross-correlation of `f` with `h`; output has `n_scales − P + 1` levels.
pub fn scale_xcorr<T: Real>(f: &ScaleStack<T>, h: &SemigroupFilter<T>, stride: usize) -> Result<ScaleStack<T>> {
    let g = Geometry::new(f, h, stride)?;
    let wt = h.transposed();
    let mut out = ScaleStack::zeros(g.levels_out, g.c_out, g.ho, g.wo);
    for k in 0..g.levels_out {
        let dil = 1usize << k;
        let preps: Vec<PhaseRows<T>> = (0..g.taps).map(|l| PhaseRows::gather(f, k + l, &g, dil)).collect();
        let mut o0 = 0;
        while o0 < g.c_out {
            let left = g.c_out - o0;
            if left >= 8 {
                forward_block::<T, 8>(&g, &preps, &wt, k, o0, &mut out);
                o0 += 8;
            } else if left >= 4 {
                forward_block::<T, 4>(&g, &preps, &wt, k, o0, &mut out);
                o0 += 4;
            } else if left >= 2 {
                forward_block::<T, 2>(&g, &preps, &wt, k, o0, &mut out);
                o0 += 2;
            } else {
                forward_block::<T, 1>(&g, &preps, &wt, k, o0, &mut out);
                o0 += 1;
            }
        }
    }
    Ok(out)
}

/// `acc += w·v` lane by lane, each as one fused multiply-add.
#[inline(always)]
fn madd<T: Real>(acc: &mut [T; LANES], w: T, v: &[T; LANES]) {
    for (a, &x) in acc.iter_mut().zip(v) {
        *a = w.mul_add(x, *a);
    }
}

fn forward_block<T: Real, const OB: usize>(
    g: &Geometry,
    preps: &[PhaseRows<T>],
    wt: &[T],
    k: usize,
    o0: usize,
    out: &mut ScaleStack<T>,
) {
    let dil = 1usize << k;
    // (buffer, data offset, weight offset) per contributing tap, in (l, c, jy, jx) order.
    let mut taps: Vec<(usize, usize, usize)> = Vec::with_capacity(g.taps * g.c_in * g.k * g.k);
    for yo in 0..g.ho {
        taps.clear();
        for (l, prep) in preps.iter().enumerate() {
            for c in 0..g.c_in {
                for jy in 0..g.k {
                    let Some(row) = g.input_row(yo, jy, dil) else { continue };
                    for jx in 0..g.k {
                        let (phase, off) = g.column_tap(jx, dil);
                        let wbase = (((l * g.c_in + c) * g.k + jy) * g.k + jx) * g.c_out + o0;
                        taps.push((l, prep.offset(c, row, phase) + off, wbase));
                    }
                }
            }
        }
        for x0 in (0..g.wo_pad).step_by(LANES) {
            let acc = accumulate::<T, OB>(preps, &taps, wt, x0);
            let n = LANES.min(g.wo - x0.min(g.wo));
            for (b, lane) in acc.iter().enumerate() {
                let start = out.index(k, o0 + b, yo, x0.min(g.wo));
                out.data[start..start + n].copy_from_slice(&lane[..n]);
            }
        }
    }
}

#[inline(never)]
fn accumulate<T: Real, const OB: usize>(
    preps: &[PhaseRows<T>],
    taps: &[(usize, usize, usize)],
    wt: &[T],
    x0: usize,
) -> [[T; LANES]; OB] {
    let mut acc = [[T::zero(); LANES]; OB];
    for &(l, d, wo) in taps {
        let v: &[T; LANES] = preps[l].data[d + x0..d + x0 + LANES].try_into().unwrap();
        let w: &[T; OB] = wt[wo..wo + OB].try_into().unwrap();
        for b in 0..OB {
            madd(&mut acc[b], w[b], v);
        }
    }
    acc
}

/// Gradients of `Σ upstream · scale_xcorr(f, h)` with respect to `f` and to the filter weights.
pub fn scale_xcorr_backward<T: Real>(
    f: &ScaleStack<T>,
    h: &SemigroupFilter<T>,
    stride: usize,
    upstream: &ScaleStack<T>,
) -> Result<(ScaleStack<T>, Vec<T>)> {
    let g = Geometry::new(f, h, stride)?;
    if upstream.shape() != [g.levels_out, g.c_out, g.ho, g.wo] {
        return Err(Error::Shape(format!(
            "upstream {:?} does not match forward output {:?}",
            upstream.shape(),
            [g.levels_out, g.c_out, g.ho, g.wo]
        )));
    }
    let wt = h.transposed();
    let mut grad_f = ScaleStack::zeros(g.levels_in, g.c_in, g.h, g.w);
    // Accumulated in the (l, c, jy, jx, o) layout, transposed back at the end.
    let mut grad_wt = vec![T::zero(); wt.len()];
    let plane = g.ho * g.wo_pad;
    let mut up = vec![T::zero(); g.c_out * plane];
    for k in 0..g.levels_out {
        let dil = 1usize << k;
        for o in 0..g.c_out {
            let src = upstream.plane(k, o);
            for yo in 0..g.ho {
                let dst = o * plane + yo * g.wo_pad;
                up[dst..dst + g.wo].copy_from_slice(&src[yo * g.wo..(yo + 1) * g.wo]);
            }
        }
        for l in 0..g.taps {
            let prep = PhaseRows::gather(f, k + l, &g, dil);
            filter_grad_level(&g, &prep, &up, l, k, &mut grad_wt);
            let mut gprep = PhaseRows::zeros(&g, dil);
            input_grad_level(&g, &mut gprep, &up, &wt, l, k);
            gprep.scatter_add(&mut grad_f, k + l, g.c_in, g.w);
        }
    }
    let mut grad_h = vec![T::zero(); wt.len()];
    for l in 0..g.taps {
        for c in 0..g.c_in {
            for jy in 0..g.k {
                for jx in 0..g.k {
                    for o in 0..g.c_out {
                        let src = (((l * g.c_in + c) * g.k + jy) * g.k + jx) * g.c_out + o;
                        grad_h[h.index(l, c, o, jy, jx)] = grad_wt[src];
                    }
                }
            }
        }
    }
    Ok((grad_f, grad_h))
}

fn filter_grad_level<T: Real>(g: &Geometry, prep: &PhaseRows<T>, up: &[T], l: usize, k: usize, grad_wt: &mut [T]) {
    let dil = 1usize << k;
    let plane = g.ho * g.wo_pad;
    let run = g.stride * prep.row_len;
    // Offset of each kernel column's run from the start of its input row.
    let tap_offs: Vec<usize> = (0..g.k)
        .map(|jx| {
            let (phase, off) = g.column_tap(jx, dil);
            phase * prep.row_len + off
        })
        .collect();
    // (input row start, upstream row start) for every output row the kernel row reaches.
    let mut rows: Vec<(usize, usize)> = Vec::with_capacity(g.ho);
    for c in 0..g.c_in {
        for jy in 0..g.k {
            rows.clear();
            rows.extend((0..g.ho).filter_map(|yo| g.input_row(yo, jy, dil).map(|row| ((c * g.h + row) * run, yo * g.wo_pad))));
            let wrow = ((l * g.c_in + c) * g.k + jy) * g.k;
            let mut jx = 0;
            while jx < g.k {
                let jb = if g.k - jx >= 3 { 3 } else { 1 };
                let mut o = 0;
                while o < g.c_out {
                    let ob = if g.c_out - o >= 4 { 4 } else { 1 };
                    let ups = &up[o * plane..];
                    let offs = &tap_offs[jx..jx + jb];
                    let mut sums = [[T::zero(); 4]; 3];
                    match (jb, ob) {
                        (3, 4) => correlate_rows::<T, 3, 4>(&prep.data, ups, plane, &rows, offs, g.wo_pad, &mut sums),
                        (3, _) => correlate_rows::<T, 3, 1>(&prep.data, ups, plane, &rows, offs, g.wo_pad, &mut sums),
                        (_, 4) => correlate_rows::<T, 1, 4>(&prep.data, ups, plane, &rows, offs, g.wo_pad, &mut sums),
                        _ => correlate_rows::<T, 1, 1>(&prep.data, ups, plane, &rows, offs, g.wo_pad, &mut sums),
                    }
                    for j in 0..jb {
                        for b in 0..ob {
                            grad_wt[(wrow + jx + j) * g.c_out + o + b] += sums[j][b];
                        }
                    }
                    o += ob;
                }
                jx += jb;
            }
        }
    }
}

/// Inner products of `JB` shifted input runs against `OB` consecutive upstream planes,
/// summed over the listed rows.
#[inline(never)]
fn correlate_rows<T: Real, const JB: usize, const OB: usize>(
    data: &[T],
    up: &[T],
    plane: usize,
    rows: &[(usize, usize)],
    offs: &[usize],
    width: usize,
    sums: &mut [[T; 4]; 3],
) {
    let mut acc = [[[T::zero(); LANES]; OB]; JB];
    for &(rs, us) in rows {
        for x0 in (0..width).step_by(LANES) {
            let mut u = [[T::zero(); LANES]; OB];
            for b in 0..OB {
                let at = b * plane + us + x0;
                u[b] = up[at..at + LANES].try_into().unwrap();
            }
            for j in 0..JB {
                let at = rs + offs[j] + x0;
                let v: &[T; LANES] = data[at..at + LANES].try_into().unwrap();
                for b in 0..OB {
                    for i in 0..LANES {
                        acc[j][b][i] = u[b][i].mul_add(v[i], acc[j][b][i]);
                    }
                }
            }
        }
    }
    for j in 0..JB {
        for b in 0..OB {
            sums[j][b] = acc[j][b].iter().copied().sum();
        }
    }
}

fn input_grad_level<T: Real>(g: &Geometry, gprep: &mut PhaseRows<T>, up: &[T], wt: &[T], l: usize, k: usize) {
    let dil = 1usize << k;
    let plane = g.ho * g.wo_pad;
    let wstride = g.k * g.k * g.c_out;
    for jy in 0..g.k {
        for yo in 0..g.ho {
            let Some(row) = g.input_row(yo, jy, dil) else { continue };
            for jx in 0..g.k {
                let (phase, off) = g.column_tap(jx, dil);
                let mut c = 0;
                while c < g.c_in {
                    let cb = if g.c_in - c >= 4 { 4 } else { 1 };
                    let dst = gprep.offset(c, row, phase) + off;
                    let cstep = gprep.offset(c + 1, row, phase) - gprep.offset(c, row, phase);
                    let wbase = (((l * g.c_in + c) * g.k + jy) * g.k + jx) * g.c_out;
                    let args = (&mut gprep.data[..], dst, cstep, &wt[wbase..], wstride, up, plane, yo * g.wo_pad, g.wo_pad);
                    if cb == 4 {
                        spread_rows::<T, 4>(args.0, args.1, args.2, args.3, args.4, args.5, args.6, args.7, args.8, g.c_out);
                    } else {
                        spread_rows::<T, 1>(args.0, args.1, args.2, args.3, args.4, args.5, args.6, args.7, args.8, g.c_out);
                    }
                    c += cb;
                }
            }
        }
    }
}

/// For `CB` input channels at once: `dst_c += Σ_o w[c, o]·up[o, row]` over one padded output row.
#[allow(clippy::too_many_arguments)]
#[inline(never)]
fn spread_rows<T: Real, const CB: usize>(
    dst: &mut [T],
    start: usize,
    cstep: usize,
    w: &[T],
    wstride: usize,
    up: &[T],
    plane: usize,
    row: usize,
    width: usize,
    c_out: usize,
) {
    for x0 in (0..width).step_by(LANES) {
        let mut acc = [[T::zero(); LANES]; CB];
        for b in 0..CB {
            let at = start + b * cstep + x0;
            acc[b] = dst[at..at + LANES].try_into().unwrap();
        }
        for o in 0..c_out {
            let at = o * plane + row + x0;
            let u: &[T; LANES] = up[at..at + LANES].try_into().unwrap();
            for b in 0..CB {
                madd(&mut acc[b], w[b * wstride + o], u);
            }
        }
        for b in 0..CB {
            let at = start + b * cstep + x0;
            dst[at..at + LANES].copy_from_slice(&acc[b]);
        }
    }
}
