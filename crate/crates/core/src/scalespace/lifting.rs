//! The lifting `Λf(2^-k, x) = T(u_k) f (x)` from flat images to scale stacks.
//!
//! Level 0 is always the raw image. For additive scale-spaces (Gaussian,
//! dilation, erosion) the per-level parameter is `u_k = s0·(4^k − 1)` and
//! levels are built incrementally from their predecessor. Openings and
//! closings obey `T(t)T(s) = T(t ∨ s)`, so each of their levels is computed
//! from the raw image at `s0·4^k`.

use std::fmt;
use std::str::FromStr;

use super::gaussian::gaussian_blur;
use super::morphology::{chain_backward, quad_close, quad_dilate, quad_erode, quad_open, MorphTrace};
use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::{Image, ScaleStack};

/// Rates of a spatial/contrast scaling `S^{p,q}(t) f(x) = t^q f(x / t^p)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalingSpec {
    pub p: f64,
    pub q: f64,
}

impl ScalingSpec {
    /// The scaling every supported lifting is a scale-space for.
    pub const LIFTING: ScalingSpec = ScalingSpec { p: 0.5, q: 0.0 };

    /// Exponent mapping the semigroup scale `2^-k` to the scale-space parameter: `s^(-1/p)`.
    pub fn parameter_for_level(&self, k: u32) -> f64 {
        2f64.powf(k as f64 / self.p)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LiftingKind {
    Gaussian,
    Dilation,
    Erosion,
    Opening,
    Closing,
    Identity,
}

impl LiftingKind {
    pub const ALL: [LiftingKind; 6] = [
        LiftingKind::Gaussian,
        LiftingKind::Dilation,
        LiftingKind::Erosion,
        LiftingKind::Opening,
        LiftingKind::Closing,
        LiftingKind::Identity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LiftingKind::Gaussian => "gaussian",
            LiftingKind::Dilation => "dilation",
            LiftingKind::Erosion => "erosion",
            LiftingKind::Opening => "opening",
            LiftingKind::Closing => "closing",
            LiftingKind::Identity => "identity",
        }
    }

    /// Whether `c` enters the operator (and is therefore learnable).
    pub fn is_morphological(self) -> bool {
        matches!(self, LiftingKind::Dilation | LiftingKind::Erosion | LiftingKind::Opening | LiftingKind::Closing)
    }

    /// Scale-spaces with the absorption law `T(t)T(s) = T(max(t, s))`.
    pub fn is_supremal(self) -> bool {
        matches!(self, LiftingKind::Opening | LiftingKind::Closing)
    }
}

impl fmt::Display for LiftingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LiftingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LiftingKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            Error::Config(format!("unknown lifting '{s}' (expected gaussian, dilation, erosion, opening, closing or identity)"))
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LiftingSpec {
    pub kind: LiftingKind,
    /// Base scale-space parameter at level 0.
    pub s0: f64,
    /// Quadratic structuring parameter; ignored by the Gaussian and identity kinds.
    pub c: f64,
    pub n_scales: usize,
    pub truncation_radius_sigmas: f64,
    pub morph_radius_factor: f64,
}

impl LiftingSpec {
    pub fn new(kind: LiftingKind, n_scales: usize) -> Self {
        LiftingSpec { kind, s0: 0.25, c: 1.0, n_scales, truncation_radius_sigmas: 4.0, morph_radius_factor: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_scales == 0 {
            return Err(Error::Config("lifting needs at least one scale".into()));
        }
        if self.kind != LiftingKind::Identity {
            if !(self.s0 > 0.0) || !self.s0.is_finite() {
                return Err(Error::Config(format!("lifting s0 must be positive, got {}", self.s0)));
            }
            if !(self.c > 0.0) || !self.c.is_finite() {
                return Err(Error::Config(format!("lifting c must be positive, got {}", self.c)));
            }
        }
        if !(self.truncation_radius_sigmas > 0.0) || !(self.morph_radius_factor > 0.0) {
            return Err(Error::Config("support radii must be positive".into()));
        }
        Ok(())
    }

    /// Scale-space parameter producing level `k` from the raw image.
    pub fn level_parameter(&self, k: usize) -> f64 {
        let growth = ScalingSpec::LIFTING.parameter_for_level(k as u32);
        if self.kind.is_supremal() {
            if k == 0 {
                0.0
            } else {
                self.s0 * growth
            }
        } else {
            self.s0 * (growth - 1.0)
        }
    }

    /// Applies `T(t)` of this scale-space to `f`; `t = 0` is the identity.
    fn apply<T: Real>(&self, f: &Image<T>, t: f64) -> Result<(Image<T>, Vec<MorphTrace>)> {
        if t == 0.0 {
            return Ok((f.clone(), Vec::new()));
        }
        let factor = self.morph_radius_factor;
        Ok(match self.kind {
            LiftingKind::Identity => (f.clone(), Vec::new()),
            LiftingKind::Gaussian => (gaussian_blur(f, t, self.truncation_radius_sigmas)?, Vec::new()),
            LiftingKind::Dilation => {
                let (o, tr) = quad_dilate(f, t, self.c, factor)?;
                (o, vec![tr])
            }
            LiftingKind::Erosion => {
                let (o, tr) = quad_erode(f, t, self.c, factor)?;
                (o, vec![tr])
            }
            LiftingKind::Opening => quad_open(f, t, self.c, factor)?,
            LiftingKind::Closing => quad_close(f, t, self.c, factor)?,
        })
    }
}

/// Winning offsets of every morphological pass of a lifting, for the `c` gradient.
#[derive(Clone, Debug, Default)]
pub struct LiftTrace {
    /// `levels[k]` holds the passes that produced level `k` (empty for level 0).
    pub levels: Vec<Vec<MorphTrace>>,
    /// Levels were derived from their predecessor rather than from the raw image.
    pub incremental: bool,
}

/// Lifts `f` and records what the backward pass needs.
pub fn lift_traced<T: Real>(f: &Image<T>, spec: &LiftingSpec) -> Result<(ScaleStack<T>, LiftTrace)> {
    spec.validate()?;
    let mut levels = Vec::with_capacity(spec.n_scales);
    let mut trace = LiftTrace { levels: vec![Vec::new()], incremental: !spec.kind.is_supremal() };
    levels.push(f.clone());
    for k in 1..spec.n_scales {
        let (img, tr) = if spec.kind.is_supremal() {
            spec.apply(f, spec.level_parameter(k))?
        } else {
            let step = spec.level_parameter(k) - spec.level_parameter(k - 1);
            spec.apply(&levels[k - 1], step)?
        };
        levels.push(img);
        trace.levels.push(tr);
    }
    Ok((ScaleStack::from_levels(levels)?, trace))
}

pub fn lift<T: Real>(f: &Image<T>, spec: &LiftingSpec) -> Result<ScaleStack<T>> {
    lift_traced(f, spec).map(|(s, _)| s)
}

/// Derivative of `Σ upstream · Λf` with respect to `c`.
pub fn lift_backward<T: Real>(trace: &LiftTrace, upstream: &ScaleStack<T>) -> Result<f64> {
    if trace.levels.len() != upstream.n_scales {
        return Err(Error::Contract(format!(
            "lifting trace has {} levels, upstream has {}",
            trace.levels.len(),
            upstream.n_scales
        )));
    }
    let mut grad_c = 0.0;
    if trace.incremental {
        let top = upstream.n_scales - 1;
        let mut carry = upstream.level(top);
        for k in (1..=top).rev() {
            let (gin, gc) = chain_backward(&trace.levels[k], &carry)?;
            grad_c += gc;
            let mut below = upstream.level(k - 1);
            for (b, g) in below.data.iter_mut().zip(&gin.data) {
                *b += *g;
            }
            carry = below;
        }
    } else {
        for (k, passes) in trace.levels.iter().enumerate().skip(1) {
            grad_c += chain_backward(passes, &upstream.level(k))?.1;
        }
    }
    Ok(grad_c)
}

/// Image-domain downscaling `R'_(2^-steps, 0)`: apply the scale-space, then keep every `2^steps`-th pixel.
pub fn downscale_action<T: Real>(f: &Image<T>, spec: &LiftingSpec, steps: u32) -> Result<Image<T>> {
    if steps == 0 {
        return Ok(f.clone());
    }
    let stride = 1usize << steps;
    if !f.height.is_multiple_of(stride) || !f.width.is_multiple_of(stride) {
        return Err(Error::Shape(format!("{}x{} image is not divisible by 2^{steps}", f.height, f.width)));
    }
    let smoothed = spec.apply(f, spec.level_parameter(steps as usize))?.0;
    let (h, w) = (f.height / stride, f.width / stride);
    let mut out = Image::zeros(f.channels, h, w);
    for c in 0..f.channels {
        for y in 0..h {
            for x in 0..w {
                out.set(c, y, x, smoothed.get(c, y * stride, x * stride));
            }
        }
    }
    Ok(out)
}

/// Subsamples levels `[steps, n)` of a lifting onto the `2^steps` lattice.
#[cfg(test)]
pub(crate) fn shifted_levels<T: Real>(stack: &ScaleStack<T>, steps: usize) -> ScaleStack<T> {
    crate::semigroup::act(crate::semigroup::SemigroupElement::scaling(steps as u32), stack).unwrap()
}
