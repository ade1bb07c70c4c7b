//! Fixed sequential networks: a lifting followed by scale-stack layers and a head.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::batchnorm::{BatchNorm, BnCache};
use super::dense::Dense;
use super::loss::{softmax_xent, softmax_xent_pixels};
use super::pool::{global_maxpool, global_maxpool_backward, relu, relu_backward, scale_maxpool, scale_maxpool_backward};
use super::xcorr::{scale_xcorr, scale_xcorr_backward, SemigroupFilter};
use crate::error::{Error, Result};
use crate::real::Real;
use crate::scalespace::{lift_backward, lift_traced, LiftTrace, LiftingSpec};
use crate::tensor::{Image, ScaleStack};

#[derive(Clone, Debug, PartialEq)]
pub enum LayerSpec {
    Lifting(LiftingSpec),
    ScaleXcorr { taps: usize, out_channels: usize, kernel: usize, stride: usize },
    BatchNorm,
    Relu,
    ScaleMaxPool,
    GlobalMaxPool,
    Dense { units: usize },
    SoftmaxXent,
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSpec::Lifting(s) => write!(f, "lifting({}, {} scales)", s.kind, s.n_scales),
            LayerSpec::ScaleXcorr { taps, out_channels, kernel, stride } => {
                write!(f, "scale_xcorr(P={taps}, C={out_channels}, K={kernel}, stride={stride})")
            }
            LayerSpec::BatchNorm => write!(f, "batchnorm"),
            LayerSpec::Relu => write!(f, "relu"),
            LayerSpec::ScaleMaxPool => write!(f, "scale_maxpool"),
            LayerSpec::GlobalMaxPool => write!(f, "global_maxpool"),
            LayerSpec::Dense { units } => write!(f, "dense({units})"),
            LayerSpec::SoftmaxXent => write!(f, "softmax_xent"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    /// One label per image.
    Classify { classes: usize },
    /// One label per pixel.
    Segment { classes: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkSpec {
    pub input_channels: usize,
    pub layers: Vec<LayerSpec>,
    /// Seed of the parameter initialization.
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Shape {
    Image { channels: usize },
    Stack { levels: usize, channels: usize },
    Vector { len: usize },
}

impl NetworkSpec {
    /// Checks layer ordering and channel chaining; returns the task the head implies.
    pub fn validate(&self) -> Result<Task> {
        let bad = |i: usize, msg: String| Error::Config(format!("layer {i} ({}): {msg}", self.layers[i]));
        if !matches!(self.layers.first(), Some(LayerSpec::Lifting(_))) {
            return Err(Error::Config("the first layer must be a lifting".into()));
        }
        if !matches!(self.layers.last(), Some(LayerSpec::SoftmaxXent)) {
            return Err(Error::Config("the last layer must be softmax_xent".into()));
        }
        let mut shape = Shape::Image { channels: self.input_channels };
        for (i, layer) in self.layers.iter().enumerate() {
            shape = match (layer, shape) {
                (LayerSpec::Lifting(spec), Shape::Image { channels }) => {
                    spec.validate()?;
                    Shape::Stack { levels: spec.n_scales, channels }
                }
                (LayerSpec::Lifting(_), _) => return Err(bad(i, "a lifting may only come first".into())),
                (LayerSpec::ScaleXcorr { taps, out_channels, kernel, stride }, Shape::Stack { levels, .. }) => {
                    if *taps == 0 || *taps > levels {
                        return Err(bad(i, format!("{taps} scale taps on {levels} levels")));
                    }
                    if kernel % 2 == 0 || *stride == 0 || *out_channels == 0 {
                        return Err(bad(i, "needs odd K, positive stride and channels".into()));
                    }
                    Shape::Stack { levels: levels - taps + 1, channels: *out_channels }
                }
                (LayerSpec::BatchNorm | LayerSpec::Relu, s @ Shape::Stack { .. }) => s,
                (LayerSpec::ScaleMaxPool, Shape::Stack { channels, .. }) => Shape::Stack { levels: 1, channels },
                (LayerSpec::GlobalMaxPool, Shape::Stack { channels, .. }) => Shape::Vector { len: channels },
                (LayerSpec::Dense { units }, Shape::Vector { .. }) if *units > 0 => Shape::Vector { len: *units },
                (LayerSpec::SoftmaxXent, s) if i + 1 == self.layers.len() => s,
                (_, s) => return Err(bad(i, format!("cannot follow a {s:?} activation"))),
            };
        }
        let has = |p: fn(&LayerSpec) -> bool| self.layers.iter().any(p);
        match shape {
            Shape::Vector { len } if len >= 2 => Ok(Task::Classify { classes: len }),
            Shape::Stack { levels: 1, channels } if channels >= 2 => {
                if has(|l| matches!(l, LayerSpec::GlobalMaxPool | LayerSpec::Dense { .. })) {
                    return Err(Error::Config("segmentation networks take no global pooling or dense layers".into()));
                }
                Ok(Task::Segment { classes: channels })
            }
            s => Err(Error::Config(format!("head produces {s:?}, which no loss accepts"))),
        }
    }

    pub fn lifting(&self) -> &LiftingSpec {
        match &self.layers[0] {
            LayerSpec::Lifting(s) => s,
            _ => unreachable!("validated"),
        }
    }
}

/// Activation passed between layers, per sample.
#[derive(Clone, Debug, PartialEq)]
pub enum Activation<T> {
    Stack(ScaleStack<T>),
    Vector(Vec<T>),
}

impl<T: Real> Activation<T> {
    pub fn stack(&self) -> Result<&ScaleStack<T>> {
        match self {
            Activation::Stack(s) => Ok(s),
            Activation::Vector(_) => Err(Error::Contract("expected a scale stack activation".into())),
        }
    }

    pub fn vector(&self) -> Result<&[T]> {
        match self {
            Activation::Vector(v) => Ok(v),
            Activation::Stack(_) => Err(Error::Contract("expected a vector activation".into())),
        }
    }

    fn into_stack(self) -> Result<ScaleStack<T>> {
        match self {
            Activation::Stack(s) => Ok(s),
            Activation::Vector(_) => Err(Error::Contract("expected a scale stack activation".into())),
        }
    }

    fn into_vector(self) -> Result<Vec<T>> {
        match self {
            Activation::Vector(v) => Ok(v),
            Activation::Stack(_) => Err(Error::Contract("expected a vector activation".into())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics, running averages updated, cache kept for backward.
    Train,
    /// Running statistics, no cache.
    Eval,
}

/// Supervision for one sample.
#[derive(Clone, Debug, PartialEq)]
pub enum Target {
    Class(usize),
    Mask(Vec<u8>),
}

#[derive(Clone, Debug)]
enum Layer<T> {
    Lifting { spec: LiftingSpec, log_c: Vec<T> },
    Xcorr { filter: SemigroupFilter<T>, stride: usize },
    BatchNorm(BatchNorm<T>),
    Relu,
    ScaleMaxPool,
    GlobalMaxPool,
    Dense(Dense<T>),
    SoftmaxXent,
}

#[derive(Clone, Debug)]
enum Cache<T> {
    Lifting(Vec<LiftTrace>),
    Xcorr(Vec<ScaleStack<T>>),
    BatchNorm(BnCache<T>),
    Relu(Vec<ScaleStack<T>>),
    ScaleMaxPool(Vec<Vec<u32>>, usize),
    GlobalMaxPool(Vec<Vec<usize>>, [usize; 4]),
    Dense(Vec<Vec<T>>),
    None,
}

/// A named parameter or statistics tensor, for persistence.
#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor<T> {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct Network<T: Real = f64> {
    spec: NetworkSpec,
    task: Task,
    layers: Vec<Layer<T>>,
    cache: Option<Vec<Cache<T>>>,
}

impl<T: Real> Network<T> {
    pub fn new(spec: NetworkSpec) -> Result<Self> {
        let task = spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut layers = Vec::with_capacity(spec.layers.len());
        let mut channels = spec.input_channels;
        for l in &spec.layers {
            layers.push(match l {
                LayerSpec::Lifting(s) => {
                    let log_c = if s.kind.is_morphological() { vec![T::of(s.c.ln())] } else { Vec::new() };
                    Layer::Lifting { spec: s.clone(), log_c }
                }
                LayerSpec::ScaleXcorr { taps, out_channels, kernel, stride } => {
                    let filter = SemigroupFilter::glorot(*taps, channels, *out_channels, *kernel, &mut rng)?;
                    channels = *out_channels;
                    Layer::Xcorr { filter, stride: *stride }
                }
                LayerSpec::BatchNorm => Layer::BatchNorm(BatchNorm::new(channels)),
                LayerSpec::Relu => Layer::Relu,
                LayerSpec::ScaleMaxPool => Layer::ScaleMaxPool,
                LayerSpec::GlobalMaxPool => Layer::GlobalMaxPool,
                LayerSpec::Dense { units } => {
                    let d = Dense::glorot(channels, *units, &mut rng);
                    channels = *units;
                    Layer::Dense(d)
                }
                LayerSpec::SoftmaxXent => Layer::SoftmaxXent,
            });
        }
        Ok(Network { spec, task, layers, cache: None })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn task(&self) -> Task {
        self.task
    }

    /// Current value of the lifting's structuring parameter `c`, if it has one.
    pub fn lifting_c(&self) -> Option<f64> {
        match &self.layers[0] {
            Layer::Lifting { log_c, .. } => log_c.first().map(|v| v.f64().exp()),
            _ => None,
        }
    }

    /// Runs the network on images up to (excluding) the loss layer.
    pub fn forward(&mut self, images: &[Image<T>], mode: Mode) -> Result<Vec<Activation<T>>> {
        self.run(Input::Images(images), mode, self.layers.len())
    }

    /// Runs every layer after the lifting on ready-made scale stacks.
    pub fn forward_stacks(&mut self, stacks: &[ScaleStack<T>], mode: Mode) -> Result<Vec<Activation<T>>> {
        self.run(Input::Stacks(stacks), mode, self.layers.len())
    }

    /// Activations entering layer `upto`, evaluated with running statistics.
    pub fn activations_before(&mut self, images: &[Image<T>], upto: usize) -> Result<Vec<Activation<T>>> {
        self.run(Input::Images(images), Mode::Eval, upto)
    }

    /// Index of the first layer of the given kind.
    pub fn position(&self, pred: impl Fn(&LayerSpec) -> bool) -> Option<usize> {
        self.spec.layers.iter().position(pred)
    }

    fn run(&mut self, input: Input<'_, T>, mode: Mode, upto: usize) -> Result<Vec<Activation<T>>> {
        self.cache = None;
        let mut caches = Vec::with_capacity(self.layers.len());
        let (mut acts, start) = match input {
            Input::Images(images) => {
                if images.is_empty() {
                    return Err(Error::Empty("empty batch".into()));
                }
                for img in images {
                    if img.channels != self.spec.input_channels {
                        return Err(Error::Shape(format!(
                            "network expects {} input channels, got {}",
                            self.spec.input_channels, img.channels
                        )));
                    }
                }
                let Layer::Lifting { spec, log_c } = &self.layers[0] else { unreachable!() };
                let mut spec = spec.clone();
                if let Some(lc) = log_c.first() {
                    spec.c = lc.f64().exp();
                }
                let lifted: Vec<(ScaleStack<T>, LiftTrace)> =
                    images.par_iter().map(|img| lift_traced(img, &spec)).collect::<Result<_>>()?;
                let (stacks, traces): (Vec<_>, Vec<_>) = lifted.into_iter().unzip();
                caches.push(Cache::Lifting(traces));
                (stacks.into_iter().map(Activation::Stack).collect::<Vec<_>>(), 1)
            }
            Input::Stacks(stacks) => {
                if stacks.is_empty() {
                    return Err(Error::Empty("empty batch".into()));
                }
                caches.push(Cache::None);
                (stacks.iter().cloned().map(Activation::Stack).collect(), 1)
            }
        };
        let end = upto.min(self.layers.len());
        for layer in self.layers[start..end].iter_mut() {
            let (next, cache) = forward_layer(layer, acts, mode)?;
            acts = next;
            caches.push(cache);
        }
        if mode == Mode::Train && upto >= self.layers.len() {
            self.cache = Some(caches);
        }
        Ok(acts)
    }

    /// Mean loss over the batch and its gradient with respect to each output.
    pub fn loss(&self, outputs: &[Activation<T>], targets: &[Target]) -> Result<(f64, Vec<Activation<T>>)> {
        if outputs.len() != targets.len() {
            return Err(Error::Shape(format!("{} outputs for {} targets", outputs.len(), targets.len())));
        }
        let n = outputs.len() as f64;
        let mut total = 0.0;
        let mut grads = Vec::with_capacity(outputs.len());
        for (out, target) in outputs.iter().zip(targets) {
            match (out, target) {
                (Activation::Vector(logits), Target::Class(label)) => {
                    let (l, g) = softmax_xent(logits, *label)?;
                    total += l;
                    grads.push(Activation::Vector(g.into_iter().map(|v| T::of(v.f64() / n)).collect()));
                }
                (Activation::Stack(s), Target::Mask(mask)) => {
                    let (l, g) = softmax_xent_pixels(&s.level(0), mask)?;
                    total += l;
                    let g = ScaleStack::from_vec(
                        1,
                        g.channels,
                        g.height,
                        g.width,
                        g.data.iter().map(|v| T::of(v.f64() / n)).collect(),
                    )?;
                    grads.push(Activation::Stack(g));
                }
                _ => return Err(Error::Contract("target kind does not match the network head".into())),
            }
        }
        Ok((total / n, grads))
    }

    /// Parameter gradients for the cached forward pass, in [`Network::params`] order.
    pub fn backward(&mut self, upstream: Vec<Activation<T>>) -> Result<Vec<Vec<T>>> {
        let caches =
            self.cache.take().ok_or_else(|| Error::Contract("backward called without a training forward pass".into()))?;
        let mut grads_rev: Vec<Vec<Vec<T>>> = Vec::with_capacity(self.layers.len());
        let mut up = upstream;
        for (layer, cache) in self.layers.iter().zip(caches).rev() {
            let (next, g) = backward_layer(layer, cache, up)?;
            up = next;
            grads_rev.push(g);
        }
        Ok(grads_rev.into_iter().rev().flatten().collect())
    }

    /// Learnable tensors in a fixed order.
    pub fn params(&self) -> Vec<NamedTensor<T>> {
        self.tensors(false)
    }

    /// Learnable tensors followed by batch-norm running statistics.
    pub fn state(&self) -> Vec<NamedTensor<T>> {
        self.tensors(true)
    }

    fn tensors(&self, with_buffers: bool) -> Vec<NamedTensor<T>> {
        let mut out = Vec::new();
        let mut push = |name: String, dims: Vec<usize>, data: &[T]| out.push(NamedTensor { name, dims, data: data.to_vec() });
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Lifting { log_c, .. } if !log_c.is_empty() => push(format!("{i}.log_c"), vec![1], log_c),
                Layer::Xcorr { filter: h, .. } => {
                    push(format!("{i}.weight"), vec![h.taps, h.c_in, h.c_out, h.kernel, h.kernel], &h.weights)
                }
                Layer::BatchNorm(bn) => {
                    push(format!("{i}.gamma"), vec![bn.channels()], &bn.gamma);
                    push(format!("{i}.beta"), vec![bn.channels()], &bn.beta);
                }
                Layer::Dense(d) => {
                    push(format!("{i}.weight"), vec![d.units, d.inputs], &d.weights);
                    push(format!("{i}.bias"), vec![d.units], &d.bias);
                }
                _ => {}
            }
        }
        if with_buffers {
            for (i, layer) in self.layers.iter().enumerate() {
                if let Layer::BatchNorm(bn) = layer {
                    push(format!("{i}.running_mean"), vec![bn.channels()], &bn.running_mean);
                    push(format!("{i}.running_var"), vec![bn.channels()], &bn.running_var);
                }
            }
        }
        out
    }

    /// Mutable views of the learnable tensors, in [`Network::params`] order.
    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        for layer in self.layers.iter_mut() {
            match layer {
                Layer::Lifting { log_c, .. } if !log_c.is_empty() => out.push(log_c),
                Layer::Xcorr { filter, .. } => out.push(&mut filter.weights),
                Layer::BatchNorm(bn) => {
                    out.push(&mut bn.gamma);
                    out.push(&mut bn.beta);
                }
                Layer::Dense(d) => {
                    out.push(&mut d.weights);
                    out.push(&mut d.bias);
                }
                _ => {}
            }
        }
        out
    }

    /// Overwrites every tensor named in [`Network::state`]; all must be present with matching shapes.
    pub fn load_state(&mut self, tensors: &[NamedTensor<T>]) -> Result<()> {
        let expected = self.state();
        let mut values = Vec::with_capacity(expected.len());
        for e in &expected {
            let t =
                tensors.iter().find(|t| t.name == e.name).ok_or_else(|| Error::Format(format!("missing tensor '{}'", e.name)))?;
            if t.dims != e.dims || t.data.len() != e.data.len() {
                return Err(Error::Format(format!("tensor '{}' has dims {:?}, expected {:?}", e.name, t.dims, e.dims)));
            }
            values.push(t.data.clone());
        }
        let mut it = values.into_iter();
        for p in self.params_mut() {
            p.copy_from_slice(&it.next().unwrap());
        }
        for layer in self.layers.iter_mut() {
            if let Layer::BatchNorm(bn) = layer {
                bn.running_mean = it.next().unwrap();
                bn.running_var = it.next().unwrap();
            }
        }
        Ok(())
    }
}

enum Input<'a, T> {
    Images(&'a [Image<T>]),
    Stacks(&'a [ScaleStack<T>]),
}

fn stacks<T: Real>(acts: Vec<Activation<T>>) -> Result<Vec<ScaleStack<T>>> {
    acts.into_iter().map(Activation::into_stack).collect()
}

fn forward_layer<T: Real>(layer: &mut Layer<T>, acts: Vec<Activation<T>>, mode: Mode) -> Result<(Vec<Activation<T>>, Cache<T>)> {
    let keep = mode == Mode::Train;
    Ok(match layer {
        Layer::Lifting { .. } => return Err(Error::Contract("lifting inside the network body".into())),
        Layer::Xcorr { filter, stride } => {
            let inputs = stacks(acts)?;
            let outs: Vec<ScaleStack<T>> = inputs.par_iter().map(|f| scale_xcorr(f, filter, *stride)).collect::<Result<_>>()?;
            let cache = if keep { Cache::Xcorr(inputs) } else { Cache::None };
            (outs.into_iter().map(Activation::Stack).collect(), cache)
        }
        Layer::BatchNorm(bn) => {
            let inputs = stacks(acts)?;
            if keep {
                let (outs, cache) = bn.forward_train(&inputs)?;
                (outs.into_iter().map(Activation::Stack).collect(), Cache::BatchNorm(cache))
            } else {
                let outs: Vec<ScaleStack<T>> = inputs.par_iter().map(|f| bn.forward_eval(f)).collect::<Result<_>>()?;
                (outs.into_iter().map(Activation::Stack).collect(), Cache::None)
            }
        }
        Layer::Relu => {
            let outs: Vec<ScaleStack<T>> = stacks(acts)?.par_iter().map(relu).collect();
            let cache = if keep { Cache::Relu(outs.clone()) } else { Cache::None };
            (outs.into_iter().map(Activation::Stack).collect(), cache)
        }
        Layer::ScaleMaxPool => {
            let inputs = stacks(acts)?;
            let levels = inputs.first().map_or(1, |s| s.n_scales);
            let (outs, args): (Vec<_>, Vec<_>) = inputs
                .par_iter()
                .map(|f| {
                    let (img, arg) = scale_maxpool(f);
                    (ScaleStack::from_vec(1, img.channels, img.height, img.width, img.data).unwrap(), arg)
                })
                .unzip();
            let cache = if keep { Cache::ScaleMaxPool(args, levels) } else { Cache::None };
            (outs.into_iter().map(Activation::Stack).collect(), cache)
        }
        Layer::GlobalMaxPool => {
            let inputs = stacks(acts)?;
            let shape = inputs[0].shape();
            let (outs, args): (Vec<_>, Vec<_>) = inputs.par_iter().map(global_maxpool).unzip();
            let cache = if keep { Cache::GlobalMaxPool(args, shape) } else { Cache::None };
            (outs.into_iter().map(Activation::Vector).collect(), cache)
        }
        Layer::Dense(d) => {
            let inputs: Vec<Vec<T>> = acts.into_iter().map(Activation::into_vector).collect::<Result<_>>()?;
            let outs: Vec<Vec<T>> = inputs.iter().map(|v| d.forward(v)).collect::<Result<_>>()?;
            let cache = if keep { Cache::Dense(inputs) } else { Cache::None };
            (outs.into_iter().map(Activation::Vector).collect(), cache)
        }
        Layer::SoftmaxXent => (acts, Cache::None),
    })
}

/// Adds per-sample gradients in sample order, so the result does not depend on scheduling.
fn sum_ordered<T: Real>(parts: Vec<Vec<T>>) -> Vec<T> {
    let mut it = parts.into_iter();
    let mut total = it.next().unwrap_or_default();
    for p in it {
        for (a, b) in total.iter_mut().zip(p) {
            *a += b;
        }
    }
    total
}

fn backward_layer<T: Real>(
    layer: &Layer<T>,
    cache: Cache<T>,
    up: Vec<Activation<T>>,
) -> Result<(Vec<Activation<T>>, Vec<Vec<T>>)> {
    Ok(match (layer, cache) {
        (Layer::Lifting { spec, log_c }, Cache::Lifting(traces)) => {
            if log_c.is_empty() {
                return Ok((Vec::new(), Vec::new()));
            }
            let ups = stacks(up)?;
            let parts: Vec<f64> = traces.par_iter().zip(&ups).map(|(t, u)| lift_backward(t, u)).collect::<Result<_>>()?;
            let c = log_c[0].f64().exp();
            debug_assert!(spec.kind.is_morphological());
            let grad_c: f64 = parts.iter().sum();
            (Vec::new(), vec![vec![T::of(c * grad_c)]])
        }
        (Layer::Lifting { log_c, .. }, Cache::None) => {
            let g = if log_c.is_empty() { Vec::new() } else { vec![vec![T::zero()]] };
            (up, g)
        }
        (Layer::Xcorr { filter, stride }, Cache::Xcorr(inputs)) => {
            let ups = stacks(up)?;
            let parts: Vec<(ScaleStack<T>, Vec<T>)> =
                inputs.par_iter().zip(&ups).map(|(f, u)| scale_xcorr_backward(f, filter, *stride, u)).collect::<Result<_>>()?;
            let (gf, gh): (Vec<_>, Vec<_>) = parts.into_iter().unzip();
            (gf.into_iter().map(Activation::Stack).collect(), vec![sum_ordered(gh)])
        }
        (Layer::BatchNorm(bn), Cache::BatchNorm(cache)) => {
            let (g, gg, gb) = bn.backward(&cache, &stacks(up)?)?;
            (g.into_iter().map(Activation::Stack).collect(), vec![gg, gb])
        }
        (Layer::Relu, Cache::Relu(outs)) => {
            let ups = stacks(up)?;
            let g: Vec<ScaleStack<T>> = outs.par_iter().zip(&ups).map(|(o, u)| relu_backward(o, u)).collect();
            (g.into_iter().map(Activation::Stack).collect(), Vec::new())
        }
        (Layer::ScaleMaxPool, Cache::ScaleMaxPool(args, levels)) => {
            let ups = stacks(up)?;
            let g: Vec<ScaleStack<T>> =
                args.iter().zip(&ups).map(|(a, u)| scale_maxpool_backward(a, levels, &u.level(0))).collect::<Result<_>>()?;
            (g.into_iter().map(Activation::Stack).collect(), Vec::new())
        }
        (Layer::GlobalMaxPool, Cache::GlobalMaxPool(args, shape)) => {
            let mut g = Vec::with_capacity(args.len());
            for (a, u) in args.iter().zip(&up) {
                g.push(Activation::Stack(global_maxpool_backward(a, shape, u.vector()?)?));
            }
            (g, Vec::new())
        }
        (Layer::Dense(d), Cache::Dense(inputs)) => {
            let mut gv = Vec::with_capacity(inputs.len());
            let mut gw = Vec::with_capacity(inputs.len());
            let mut gb = Vec::with_capacity(inputs.len());
            for (v, u) in inputs.iter().zip(&up) {
                let (a, b, c) = d.backward(v, u.vector()?)?;
                gv.push(Activation::Vector(a));
                gw.push(b);
                gb.push(c);
            }
            (gv, vec![sum_ordered(gw), sum_ordered(gb)])
        }
        (Layer::SoftmaxXent, Cache::None) => (up, Vec::new()),
        _ => return Err(Error::Contract("layer cache does not match the layer".into())),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::finite_diff;
    use crate::scalespace::LiftingKind;
    use crate::tensor::relative_l2;
    use rand::Rng;

    fn two_layer(kind: LiftingKind, head: &str) -> NetworkSpec {
        let mut lifting = LiftingSpec::new(kind, 3);
        lifting.c = 0.8;
        let mut layers = vec![
            LayerSpec::Lifting(lifting),
            LayerSpec::ScaleXcorr { taps: 2, out_channels: 3, kernel: 3, stride: 1 },
            LayerSpec::BatchNorm,
            LayerSpec::Relu,
        ];
        if head == "classify" {
            layers.push(LayerSpec::ScaleXcorr { taps: 1, out_channels: 4, kernel: 3, stride: 2 });
            layers.extend([LayerSpec::GlobalMaxPool, LayerSpec::Dense { units: 3 }, LayerSpec::SoftmaxXent]);
        } else {
            layers.push(LayerSpec::ScaleXcorr { taps: 1, out_channels: 3, kernel: 3, stride: 1 });
            layers.extend([LayerSpec::ScaleMaxPool, LayerSpec::SoftmaxXent]);
        }
        NetworkSpec { input_channels: 1, layers, seed: 4 }
    }

    fn images(rng: &mut ChaCha8Rng, n: usize) -> Vec<Image<f64>> {
        (0..n).map(|_| Image::from_vec(1, 8, 8, (0..64).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()).collect()
    }

    #[test]
    fn validation_rules() {
        let mut spec = two_layer(LiftingKind::Gaussian, "classify");
        assert_eq!(spec.validate().unwrap(), Task::Classify { classes: 3 });
        assert_eq!(two_layer(LiftingKind::Gaussian, "segment").validate().unwrap(), Task::Segment { classes: 3 });
        spec.layers.remove(0);
        assert!(matches!(spec.validate(), Err(Error::Config(_))));
        let mut seg = two_layer(LiftingKind::Gaussian, "segment");
        seg.layers.insert(5, LayerSpec::GlobalMaxPool);
        assert!(seg.validate().is_err());
        let mut deep = two_layer(LiftingKind::Gaussian, "classify");
        deep.layers[1] = LayerSpec::ScaleXcorr { taps: 4, out_channels: 3, kernel: 3, stride: 1 };
        assert!(deep.validate().is_err());
    }

    #[test]
    fn backward_without_forward_is_a_contract_violation() {
        let mut net = Network::<f64>::new(two_layer(LiftingKind::Gaussian, "classify")).unwrap();
        assert!(matches!(net.backward(Vec::new()), Err(Error::Contract(_))));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = net.forward(&images(&mut rng, 2), Mode::Train).unwrap();
        let (_, g) = net.loss(&out, &[Target::Class(0), Target::Class(2)]).unwrap();
        net.backward(g.clone()).unwrap();
        assert!(matches!(net.backward(g), Err(Error::Contract(_))));
    }

    #[test]
    fn single_lifting_net_reproduces_the_lifting() {
        let spec = NetworkSpec {
            input_channels: 1,
            layers: vec![
                LayerSpec::Lifting(LiftingSpec::new(LiftingKind::Dilation, 3)),
                LayerSpec::ScaleXcorr { taps: 1, out_channels: 2, kernel: 1, stride: 1 },
                LayerSpec::ScaleMaxPool,
                LayerSpec::SoftmaxXent,
            ],
            seed: 0,
        };
        let mut net = Network::<f64>::new(spec.clone()).unwrap();
        net.params_mut()[1].copy_from_slice(&[1.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let imgs = images(&mut rng, 1);
        let out = net.forward(&imgs, Mode::Eval).unwrap();
        let lifted = crate::scalespace::lift(&imgs[0], spec.lifting()).unwrap();
        let (pooled, _) = scale_maxpool(&lifted);
        assert_eq!(out[0].stack().unwrap().plane(0, 0), pooled.plane(0));
    }

    fn end_to_end_gradient(kind: LiftingKind, head: &str) {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let imgs = images(&mut rng, 2);
        let targets: Vec<Target> = if head == "classify" {
            vec![Target::Class(1), Target::Class(2)]
        } else {
            (0..2).map(|_| Target::Mask((0..64).map(|_| rng.gen_range(0..3)).collect())).collect()
        };
        let mut net = Network::<f64>::new(two_layer(kind, head)).unwrap();
        let out = net.forward(&imgs, Mode::Train).unwrap();
        let (_, up) = net.loss(&out, &targets).unwrap();
        let grads = net.backward(up).unwrap();
        let flat: Vec<f64> = net.params().iter().flat_map(|t| t.data.clone()).collect();
        let base = net.clone();
        let fd = finite_diff(
            |x| {
                let mut m = base.clone();
                let mut off = 0;
                for p in m.params_mut() {
                    let n = p.len();
                    p.copy_from_slice(&x[off..off + n]);
                    off += n;
                }
                let out = m.forward(&imgs, Mode::Train).unwrap();
                m.loss(&out, &targets).unwrap().0
            },
            &flat,
            1e-5,
        );
        let an: Vec<f64> = grads.into_iter().flatten().collect();
        let err = relative_l2(&an, &fd);
        assert!(err <= 1e-5, "{kind} {head}: relative error {err}");
    }

    #[test]
    fn end_to_end_gradients_match_finite_differences() {
        end_to_end_gradient(LiftingKind::Gaussian, "classify");
        end_to_end_gradient(LiftingKind::Dilation, "classify");
        end_to_end_gradient(LiftingKind::Closing, "segment");
    }

    #[test]
    fn state_round_trips() {
        let mut a = Network::<f32>::new(two_layer(LiftingKind::Closing, "classify")).unwrap();
        let mut spec = two_layer(LiftingKind::Closing, "classify");
        spec.seed = 99;
        let mut b = Network::<f32>::new(spec).unwrap();
        a.params_mut()[1][0] = 0.5;
        b.load_state(&a.state()).unwrap();
        assert_eq!(a.state(), b.state());
    }
}
