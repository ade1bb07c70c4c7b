use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::metrics::{accuracy, segmentation_iou, Sample};
use super::optim::{OptimizerKind, OptimizerState};
use crate::error::{Error, Result};
use crate::nn::{Mode, NamedTensor, Network, Task};
use crate::real::{Dtype, Real};
use crate::tensor::Image;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Seeds the per-epoch shuffles.
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    /// Batch size for validation passes.
    pub eval_batch: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 1, batch_size: 32, seed: 0, optimizer: OptimizerKind::adam(), lr: 1e-3, eval_batch: 64 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training loss over the epoch's batches.
    pub train_loss: f64,
    /// Validation accuracy or mean IoU; NaN without a validation set.
    pub val_score: f64,
}

/// Resumable training state: the network, optimizer moments, progress and best checkpoint.
#[derive(Clone, Debug)]
pub struct Trainer<T: Real> {
    pub net: Network<T>,
    pub opt: OptimizerState<T>,
    pub config: TrainConfig,
    /// Completed epochs.
    pub epoch: usize,
    pub history: Vec<EpochRecord>,
    /// Best validation score so far, its epoch and the network state at that point.
    pub best: Option<(f64, usize, Vec<NamedTensor<T>>)>,
    /// Wall-clock seconds spent in [`Trainer::run_epoch`].
    pub seconds: f64,
}

/// One persisted tensor: values are kept as `f64`, which holds every `f32` exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct StateEntry {
    pub name: String,
    pub dtype: Dtype,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl StateEntry {
    fn scalar(name: &str, v: f64) -> Self {
        StateEntry { name: name.into(), dtype: Dtype::F64, dims: vec![1], data: vec![v] }
    }

    fn from_tensor<T: Real>(prefix: &str, t: &NamedTensor<T>) -> Self {
        StateEntry {
            name: format!("{prefix}{}", t.name),
            dtype: T::DTYPE,
            dims: t.dims.clone(),
            data: t.data.iter().map(|v| v.f64()).collect(),
        }
    }
}

impl<T: Real> Trainer<T> {
    pub fn new(net: Network<T>, config: TrainConfig) -> Self {
        let shapes: Vec<usize> = net.params().iter().map(|p| p.data.len()).collect();
        let opt = OptimizerState::new(config.optimizer, config.lr, &shapes);
        Trainer { net, opt, config, epoch: 0, history: Vec::new(), best: None, seconds: 0.0 }
    }

    /// Runs one epoch over `train`, then scores `val` and tracks the best state.
    pub fn run_epoch(&mut self, train: &[Sample<T>], val: &[Sample<T>]) -> Result<EpochRecord> {
        if train.is_empty() {
            return Err(Error::Empty("training set is empty".into()));
        }
        let started = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(self.epoch as u64);
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for (b, idx) in order.chunks(self.config.batch_size.max(1)).enumerate() {
            let images: Vec<Image<T>> = idx.iter().map(|&i| train[i].image.clone()).collect();
            let targets: Vec<_> = idx.iter().map(|&i| train[i].target.clone()).collect();
            let out = self.net.forward(&images, Mode::Train)?;
            let (loss, up) = self.net.loss(&out, &targets)?;
            if !loss.is_finite() {
                return Err(Error::Divergence(format!("loss became {loss} in epoch {} at batch {b}", self.epoch + 1)));
            }
            let grads = self.net.backward(up)?;
            self.opt.update(self.net.params_mut(), &grads)?;
            total += loss;
            batches += 1;
        }
        self.epoch += 1;
        let val_score = if val.is_empty() { f64::NAN } else { self.score(val)? };
        if !val.is_empty() && self.best.as_ref().is_none_or(|(s, _, _)| val_score > *s) {
            self.best = Some((val_score, self.epoch, self.net.state()));
        }
        let rec = EpochRecord { epoch: self.epoch, train_loss: total / batches as f64, val_score };
        self.history.push(rec.clone());
        self.seconds += started.elapsed().as_secs_f64();
        Ok(rec)
    }

    /// Accuracy for classifiers, mean IoU for segmenters.
    pub fn score(&mut self, samples: &[Sample<T>]) -> Result<f64> {
        let batch = self.config.eval_batch;
        match self.net.task() {
            Task::Classify { .. } => accuracy(&mut self.net, samples, batch),
            Task::Segment { .. } => Ok(segmentation_iou(&mut self.net, samples, batch)?.1),
        }
    }

    /// Trains until `config.epochs` epochs are complete.
    pub fn run(&mut self, train: &[Sample<T>], val: &[Sample<T>]) -> Result<()> {
        while self.epoch < self.config.epochs {
            self.run_epoch(train, val)?;
        }
        Ok(())
    }

    /// The network with the best validation state loaded (the last state without validation).
    pub fn best_network(&self) -> Result<Network<T>> {
        let mut net = self.net.clone();
        if let Some((_, _, state)) = &self.best {
            net.load_state(state)?;
        }
        Ok(net)
    }

    /// Everything needed to resume: network, optimizer, progress, history and best state.
    pub fn state(&self) -> Vec<StateEntry> {
        let mut out: Vec<StateEntry> = self.net.state().iter().map(|t| StateEntry::from_tensor("net.", t)).collect();
        for (i, (m, v)) in self.opt.m.iter().zip(&self.opt.v).enumerate() {
            for (kind, buf) in [("m", m), ("v", v)] {
                out.push(StateEntry {
                    name: format!("opt.{kind}.{i}"),
                    dtype: T::DTYPE,
                    dims: vec![buf.len()],
                    data: buf.iter().map(|x| x.f64()).collect(),
                });
            }
        }
        out.push(StateEntry::scalar("opt.step", self.opt.step as f64));
        out.push(StateEntry::scalar("train.epoch", self.epoch as f64));
        let hist = |f: fn(&EpochRecord) -> f64| self.history.iter().map(f).collect::<Vec<f64>>();
        for (name, data) in [("history.train_loss", hist(|r| r.train_loss)), ("history.val_score", hist(|r| r.val_score))] {
            out.push(StateEntry { name: name.into(), dtype: Dtype::F64, dims: vec![data.len()], data });
        }
        if let Some((score, epoch, state)) = &self.best {
            out.push(StateEntry::scalar("meta.best_score", *score));
            out.push(StateEntry::scalar("meta.best_epoch", *epoch as f64));
            out.extend(state.iter().map(|t| StateEntry::from_tensor("best.", t)));
        }
        out
    }

    /// Restores a state produced by [`Trainer::state`] on a trainer built from the same config.
    pub fn load_state(&mut self, entries: &[StateEntry]) -> Result<()> {
        let find = |name: &str| {
            entries.iter().find(|e| e.name == name).ok_or_else(|| Error::Format(format!("checkpoint lacks '{name}'")))
        };
        let tensors = |prefix: &str| -> Vec<NamedTensor<T>> {
            entries
                .iter()
                .filter_map(|e| {
                    e.name.strip_prefix(prefix).map(|n| NamedTensor {
                        name: n.to_string(),
                        dims: e.dims.clone(),
                        data: e.data.iter().map(|&v| T::of(v)).collect(),
                    })
                })
                .collect()
        };
        for e in
            entries.iter().filter(|e| e.name.starts_with("net.") || e.name.starts_with("opt.m") || e.name.starts_with("opt.v"))
        {
            if e.dtype != T::DTYPE {
                return Err(Error::Format(format!("tensor '{}' is {:?}, expected {:?}", e.name, e.dtype, T::DTYPE)));
            }
        }
        self.net.load_state(&tensors("net."))?;
        for i in 0..self.opt.m.len() {
            for (kind, buf) in [("m", &mut self.opt.m[i]), ("v", &mut self.opt.v[i])] {
                let e = find(&format!("opt.{kind}.{i}"))?;
                if e.data.len() != buf.len() {
                    return Err(Error::Format(format!("optimizer buffer {kind}.{i} has the wrong size")));
                }
                *buf = e.data.iter().map(|&v| T::of(v)).collect();
            }
        }
        self.opt.step = find("opt.step")?.data[0] as u64;
        self.epoch = find("train.epoch")?.data[0] as usize;
        let losses = &find("history.train_loss")?.data;
        let scores = &find("history.val_score")?.data;
        self.history = losses
            .iter()
            .zip(scores)
            .enumerate()
            .map(|(i, (&l, &s))| EpochRecord { epoch: i + 1, train_loss: l, val_score: s })
            .collect();
        self.best = match find("meta.best_score") {
            Ok(s) => Some((s.data[0], find("meta.best_epoch")?.data[0] as usize, tensors("best."))),
            Err(_) => None,
        };
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{LayerSpec, NetworkSpec, Target};
    use crate::scalespace::{LiftingKind, LiftingSpec};
    use rand::Rng;

    fn tiny_net(seed: u64) -> Network<f64> {
        Network::new(NetworkSpec {
            input_channels: 1,
            layers: vec![
                LayerSpec::Lifting(LiftingSpec::new(LiftingKind::Gaussian, 2)),
                LayerSpec::ScaleXcorr { taps: 1, out_channels: 4, kernel: 3, stride: 1 },
                LayerSpec::BatchNorm,
                LayerSpec::Relu,
                LayerSpec::GlobalMaxPool,
                LayerSpec::Dense { units: 2 },
                LayerSpec::SoftmaxXent,
            ],
            seed,
        })
        .unwrap()
    }

    /// Class 0: a bright square in the top-left; class 1: in the bottom-right.
    fn separable_set(n: usize, seed: u64) -> Vec<Sample<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let label = i % 2;
                let mut img = Image::zeros(1, 8, 8);
                for v in &mut img.data {
                    *v = rng.gen_range(0.0..0.1);
                }
                let o = if label == 0 { 1 } else { 4 };
                for y in o..o + 3 {
                    for x in o..o + 3 {
                        img.set(0, y, x, 1.0 - 0.5 * (y % 2) as f64);
                    }
                }
                Sample { image: img, target: Target::Class(label) }
            })
            .collect()
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_unchanged() {
        let data = separable_set(10, 1);
        let cfg = TrainConfig { lr: 0.0, batch_size: 5, ..TrainConfig::default() };
        let mut t = Trainer::new(tiny_net(3), cfg);
        let before = t.net.params();
        t.run(&data, &[]).unwrap();
        assert_eq!(t.net.params(), before);
    }

    #[test]
    fn learns_a_separable_set() {
        let data = separable_set(16, 2);
        let cfg = TrainConfig { epochs: 50, batch_size: 8, lr: 0.01, seed: 5, ..TrainConfig::default() };
        let mut t = Trainer::new(tiny_net(4), cfg);
        let mut acc = 0.0;
        while t.epoch < 50 && acc < 0.99 {
            t.run_epoch(&data, &[]).unwrap();
            acc = t.score(&data).unwrap();
        }
        assert!(acc >= 0.99, "train accuracy {acc} after {} epochs", t.epoch);
    }

    #[test]
    fn small_steps_do_not_increase_the_loss() {
        let data = separable_set(8, 3);
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 8,
            lr: 1e-4,
            optimizer: OptimizerKind::SgdMomentum { momentum: 0.0 },
            ..TrainConfig::default()
        };
        let mut t = Trainer::new(tiny_net(6), cfg);
        t.run(&data, &[]).unwrap();
        let losses: Vec<f64> = t.history.iter().map(|r| r.train_loss).collect();
        assert!(losses.windows(2).all(|w| w[1] <= w[0]), "{losses:?}");
    }

    #[test]
    fn same_seed_gives_identical_states() {
        let data = separable_set(12, 4);
        let val = separable_set(6, 5);
        let cfg = TrainConfig { epochs: 2, batch_size: 4, seed: 9, ..TrainConfig::default() };
        let run = || {
            let mut t = Trainer::new(tiny_net(7), cfg.clone());
            t.run(&data, &val).unwrap();
            t.state()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn resuming_matches_an_uninterrupted_run() {
        let data = separable_set(12, 6);
        let val = separable_set(6, 7);
        let cfg = TrainConfig { epochs: 3, batch_size: 4, seed: 2, ..TrainConfig::default() };
        let mut full = Trainer::new(tiny_net(8), cfg.clone());
        full.run(&data, &val).unwrap();
        let mut first = Trainer::new(tiny_net(8), cfg.clone());
        first.run_epoch(&data, &val).unwrap();
        let saved = first.state();
        let mut resumed = Trainer::new(tiny_net(8), cfg);
        resumed.load_state(&saved).unwrap();
        resumed.run(&data, &val).unwrap();
        assert_eq!(resumed.state(), full.state());
    }

    #[test]
    fn divergence_is_reported() {
        let mut data = separable_set(4, 8);
        data[0].image.data[0] = f64::NAN;
        let mut t = Trainer::new(tiny_net(1), TrainConfig { batch_size: 4, ..TrainConfig::default() });
        let r = t.run(&data, &[]);
        assert!(matches!(r, Err(Error::Divergence(_))), "{r:?} {:?}", t.history);
    }
}
