//! Reverse-mode gradients for every layer kind, SGD with momentum, and the
//! training loop.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::expansion::build_nonlinear_counterpart;
use crate::graph::{argmax_rows, BatchNorm, Layer, Mode, NetworkGraph};
use crate::tensor::{conv2d_backward, gemm_into, maxpool2d, maxpool2d_backward, DType, Scalar, Tensor4};

/// Optimizer and schedule settings. Defaults follow the CIFAR protocol:
/// 150 epochs, batch 128, SGD momentum 0.9, lr 0.01 divided by 10 at
/// epochs 50 and 100.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub lr_milestones: Vec<usize>,
    pub lr_decay: f64,
    pub seed: u64,
    pub dtype: DType,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 150,
            batch_size: 128,
            lr: 0.01,
            momentum: 0.9,
            weight_decay: 0.0,
            lr_milestones: vec![50, 100],
            lr_decay: 0.1,
            seed: 0,
            dtype: DType::F32,
        }
    }
}

/// Weight decay used by the kernel-size/rate sweeps.
pub const SWEEP_WEIGHT_DECAY: f64 = 0.0005;

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr.is_nan() || self.lr <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        if self.lr_milestones.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "lr milestones must be strictly increasing".into(),
            ));
        }
        Ok(())
    }

    /// Learning rate for a 0-based epoch: decayed once per milestone reached.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let reached = self.lr_milestones.iter().filter(|&&m| m <= epoch).count();
        self.lr * self.lr_decay.powi(reached as i32)
    }
}

/// Mean, biased variance and element count of one BatchNorm input.
pub type BatchStats<T> = (Vec<T>, Vec<T>, usize);

/// Parameter gradients from one backward pass.
#[derive(Clone, Debug)]
pub struct GradientTape<T> {
    pub loss: T,
    /// Per layer, per trainable tensor in [`Layer::tensors`] order.
    pub grads: Vec<Vec<Vec<T>>>,
    /// Batch mean, biased variance and element count per BatchNorm layer.
    pub batch_stats: Vec<Option<BatchStats<T>>>,
}

enum Cache<T> {
    Input(Tensor4<T>),
    Norm {
        xhat: Tensor4<T>,
        inv_std: Vec<T>,
    },
    Pool {
        indices: Vec<usize>,
        input_shape: [usize; 4],
    },
    Shape([usize; 4]),
    None,
}

/// Mean softmax cross-entropy and its gradient with respect to the logits.
pub fn softmax_cross_entropy<T: Scalar>(logits: &[T], classes: usize, labels: &[usize]) -> Result<(T, Vec<T>)> {
    let n = labels.len();
    if logits.len() != n * classes {
        return Err(Error::Shape(format!(
            "{} logits for {n} labels and {classes} classes",
            logits.len()
        )));
    }
    let inv_n = T::one() / T::of(n as f64);
    let mut loss = T::zero();
    let mut grad = vec![T::zero(); logits.len()];
    for (i, (row, &label)) in logits.chunks(classes).zip(labels).enumerate() {
        if label >= classes {
            return Err(Error::InvalidArgument(format!(
                "label {label} out of range for {classes} classes"
            )));
        }
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let exps: Vec<T> = row.iter().map(|&v| (v - max).exp()).collect();
        let sum: T = exps.iter().copied().sum();
        loss = loss + (sum.ln() + max - row[label]) * inv_n;
        let g = &mut grad[i * classes..(i + 1) * classes];
        for (c, e) in exps.iter().enumerate() {
            let target = if c == label { T::one() } else { T::zero() };
            g[c] = (*e / sum - target) * inv_n;
        }
    }
    Ok((loss, grad))
}

fn layer_err(index: usize, layer: &Layer<impl Scalar>, e: Error) -> Error {
    Error::Layer {
        index,
        kind: layer.spec().kind_name(),
        message: e.to_string(),
    }
}

/// Train-mode forward pass, loss and exact gradients for every trainable
/// tensor. BatchNorm uses batch statistics; the network is not modified.
pub fn backward<T: Scalar>(net: &NetworkGraph<T>, x: &Tensor4<T>, labels: &[usize]) -> Result<(T, GradientTape<T>)> {
    if labels.len() != x.batch() {
        return Err(Error::Shape(format!(
            "{} labels for a batch of {}",
            labels.len(),
            x.batch()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= net.num_classes) {
        return Err(Error::InvalidArgument(format!(
            "label {bad} out of range for {} classes",
            net.num_classes
        )));
    }
    let [_, c, h, w] = x.shape();
    if [c, h, w] != net.input_shape {
        return Err(Error::Shape(format!(
            "input sample shape {:?} does not match declared {:?}",
            [c, h, w],
            net.input_shape
        )));
    }

    let mut caches = Vec::with_capacity(net.layers.len());
    let mut batch_stats = vec![None; net.layers.len()];
    let mut act = x.clone();
    for (index, layer) in net.layers.iter().enumerate() {
        let (out, cache) = match layer {
            Layer::Conv2d(conv) => (conv.forward(&act), Cache::Input(act)),
            Layer::Linear(lin) => (lin.forward(&act), Cache::Input(act)),
            Layer::BatchNorm(bn) => {
                if act.channels() != bn.channels() {
                    return Err(layer_err(index, layer, Error::Shape("channel mismatch".into())));
                }
                let (mean, var) = BatchNorm::batch_statistics(&act);
                let eps = T::of(bn.eps);
                let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
                let identity = BatchNorm {
                    scale: vec![T::one(); bn.channels()],
                    shift: vec![T::zero(); bn.channels()],
                    ..bn.clone()
                };
                let xhat = identity.normalize(&act, &mean, &var);
                let count = act.batch() * act.height() * act.width();
                batch_stats[index] = Some((mean.clone(), var.clone(), count));
                (bn.forward(&act, Mode::Train), Cache::Norm { xhat, inv_std })
            }
            Layer::Relu | Layer::LeakyRelu { .. } => (layer.forward(&act, Mode::Train), Cache::Input(act)),
            Layer::MaxPool { size, stride } => {
                let shape = act.shape();
                match maxpool2d(&act, *size, *stride) {
                    Ok((out, indices)) => (
                        Ok(out),
                        Cache::Pool {
                            indices,
                            input_shape: shape,
                        },
                    ),
                    Err(e) => (Err(e), Cache::None),
                }
            }
            Layer::Flatten => {
                let shape = act.shape();
                (layer.forward(&act, Mode::Train), Cache::Shape(shape))
            }
        };
        act = out.map_err(|e| layer_err(index, layer, e))?;
        caches.push(cache);
    }

    let (loss, logit_grad) = softmax_cross_entropy(act.data(), net.num_classes, labels)?;
    let mut grad = Tensor4::new(act.shape(), logit_grad)?;
    let mut grads: Vec<Vec<Vec<T>>> = vec![Vec::new(); net.layers.len()];

    for (index, (layer, cache)) in net.layers.iter().zip(caches).enumerate().rev() {
        let need_input = index > 0;
        grad = match (layer, cache) {
            (Layer::Conv2d(conv), Cache::Input(input)) => {
                let g = conv2d_backward(&input, &conv.kernel, &grad, conv.stride, conv.padding, need_input)
                    .map_err(|e| layer_err(index, layer, e))?;
                grads[index].push(g.kernel);
                if conv.bias.is_some() {
                    grads[index].push(g.bias);
                }
                match g.input {
                    Some(gi) => gi,
                    None => break,
                }
            }
            (Layer::Linear(lin), Cache::Input(input)) => {
                let (n, m, out) = (input.batch(), lin.in_features(), lin.out_features());
                let mut dw = vec![T::zero(); out * m];
                gemm_into(grad.data(), true, input.data(), false, &mut dw, out, n, m, false);
                grads[index].push(dw);
                if lin.bias.is_some() {
                    let mut db = vec![T::zero(); out];
                    for row in grad.data().chunks(out) {
                        db.iter_mut().zip(row).for_each(|(d, &g)| *d = *d + g);
                    }
                    grads[index].push(db);
                }
                if !need_input {
                    break;
                }
                let mut dx = vec![T::zero(); n * m];
                gemm_into(grad.data(), false, lin.weight.data(), false, &mut dx, n, out, m, false);
                Tensor4::new(input.shape(), dx)?
            }
            (Layer::BatchNorm(bn), Cache::Norm { xhat, inv_std }) => {
                let [n, ch, hh, ww] = grad.shape();
                let plane = hh * ww;
                let count = T::of((n * plane) as f64);
                let mut dscale = vec![T::zero(); ch];
                let mut dshift = vec![T::zero(); ch];
                for b in 0..n {
                    for c in 0..ch {
                        let off = (b * ch + c) * plane;
                        for (g, xh) in grad.data()[off..off + plane].iter().zip(&xhat.data()[off..off + plane]) {
                            dscale[c] = dscale[c] + *g * *xh;
                            dshift[c] = dshift[c] + *g;
                        }
                    }
                }
                let mut dx = grad.clone();
                for b in 0..n {
                    for c in 0..ch {
                        let off = (b * ch + c) * plane;
                        let k = bn.scale[c] * inv_std[c] / count;
                        for (i, d) in dx.data_mut()[off..off + plane].iter_mut().enumerate() {
                            let xh = xhat.data()[off + i];
                            *d = k * (count * *d - dshift[c] - xh * dscale[c]);
                        }
                    }
                }
                grads[index].push(dscale);
                grads[index].push(dshift);
                dx
            }
            (Layer::Relu, Cache::Input(input)) => {
                let mut dx = grad;
                for (d, &v) in dx.data_mut().iter_mut().zip(input.data()) {
                    if v <= T::zero() {
                        *d = T::zero();
                    }
                }
                dx
            }
            (Layer::LeakyRelu { slope }, Cache::Input(input)) => {
                let s = T::of(*slope);
                let mut dx = grad;
                for (d, &v) in dx.data_mut().iter_mut().zip(input.data()) {
                    if v <= T::zero() {
                        *d = *d * s;
                    }
                }
                dx
            }
            (Layer::MaxPool { .. }, Cache::Pool { indices, input_shape }) => {
                maxpool2d_backward(&grad, &indices, input_shape).map_err(|e| layer_err(index, layer, e))?
            }
            (Layer::Flatten, Cache::Shape(shape)) => grad.reshape(shape)?,
            _ => unreachable!("cache variant always matches its layer"),
        };
    }
    Ok((
        loss,
        GradientTape {
            loss,
            grads,
            batch_stats,
        },
    ))
}

/// Folds the tape's batch statistics into BatchNorm running estimates.
pub fn apply_batch_statistics<T: Scalar>(net: &mut NetworkGraph<T>, tape: &GradientTape<T>) {
    for (layer, stats) in net.layers.iter_mut().zip(&tape.batch_stats) {
        if let (Layer::BatchNorm(bn), Some((mean, var, count))) = (layer, stats) {
            bn.update_running(mean, var, *count);
        }
    }
}

/// Momentum buffers for SGD.
#[derive(Clone, Debug)]
pub struct Sgd<T> {
    velocity: Vec<Vec<Vec<T>>>,
}

impl<T: Scalar> Sgd<T> {
    pub fn new(net: &NetworkGraph<T>) -> Self {
        let velocity = net
            .layers
            .iter()
            .map(|l| {
                l.tensors()
                    .into_iter()
                    .filter(|(role, _)| role.trainable())
                    .map(|(_, t)| vec![T::zero(); t.len()])
                    .collect()
            })
            .collect();
        Sgd { velocity }
    }

    /// `v <- momentum * v + g + wd * w` (decay on weights only), then
    /// `w <- w - lr(epoch) * v`.
    pub fn step(
        &mut self,
        net: &mut NetworkGraph<T>,
        tape: &GradientTape<T>,
        cfg: &TrainConfig,
        epoch: usize,
    ) -> Result<()> {
        let lr = T::of(cfg.lr_at(epoch));
        let mu = T::of(cfg.momentum);
        let wd = T::of(cfg.weight_decay);
        if tape.grads.len() != net.layers.len() || self.velocity.len() != net.layers.len() {
            return Err(Error::Shape("gradient tape does not match the network".into()));
        }
        for ((layer, grads), vels) in net.layers.iter_mut().zip(&tape.grads).zip(&mut self.velocity) {
            let params: Vec<_> = layer.tensors_mut().into_iter().filter(|(r, _)| r.trainable()).collect();
            if params.len() != grads.len() {
                return Err(Error::Shape("gradient tape does not match the network".into()));
            }
            for (((role, w), g), v) in params.into_iter().zip(grads).zip(vels.iter_mut()) {
                let decay = if role.decays() { wd } else { T::zero() };
                for ((wi, &gi), vi) in w.iter_mut().zip(g).zip(v.iter_mut()) {
                    *vi = mu * *vi + gi + decay * *wi;
                    *wi = *wi - lr * *vi;
                }
            }
        }
        Ok(())
    }
}

/// One line of the JSONL training report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub eval_acc: Option<f64>,
    pub wall_ms: u64,
    pub augmentation: String,
}

impl EpochRecord {
    /// Equality on everything except wall-clock time.
    pub fn same_trajectory(&self, other: &Self) -> bool {
        self.epoch == other.epoch
            && self.lr.to_bits() == other.lr.to_bits()
            && self.train_loss.to_bits() == other.train_loss.to_bits()
            && self.eval_acc.map(f64::to_bits) == other.eval_acc.map(f64::to_bits)
            && self.augmentation == other.augmentation
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
}

impl TrainReport {
    pub fn to_jsonl(&self) -> String {
        self.epochs
            .iter()
            .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
            .collect()
    }

    pub fn same_trajectory(&self, other: &Self) -> bool {
        self.epochs.len() == other.epochs.len()
            && self.epochs.iter().zip(&other.epochs).all(|(a, b)| a.same_trajectory(b))
    }

    pub fn final_accuracy(&self) -> Option<f64> {
        self.epochs.last().and_then(|r| r.eval_acc)
    }
}

const EVAL_BATCH: usize = 256;

/// Eval-mode top-1 predictions for every sample.
pub fn predict_dataset<T: Scalar>(net: &NetworkGraph<T>, data: &Dataset) -> Result<Vec<usize>> {
    let mut preds = Vec::with_capacity(data.len());
    let indices: Vec<usize> = (0..data.len()).collect();
    for chunk in indices.chunks(EVAL_BATCH) {
        let (x, _) = data.batch::<T>(chunk, None)?;
        let logits = net.forward(&x, Mode::Eval)?;
        preds.extend(argmax_rows(logits.data(), net.num_classes));
    }
    Ok(preds)
}

/// Top-1 accuracy in percent.
pub fn evaluate<T: Scalar>(net: &NetworkGraph<T>, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Dataset("cannot evaluate on an empty dataset".into()));
    }
    let preds = predict_dataset(net, data)?;
    let correct = preds.iter().zip(&data.labels).filter(|(p, l)| p == l).count();
    Ok(100.0 * correct as f64 / data.len() as f64)
}

/// Mini-batch SGD over shuffled epochs. Deterministic for a fixed seed.
pub fn train<T: Scalar>(
    net: &mut NetworkGraph<T>,
    train_set: &Dataset,
    eval_set: Option<&Dataset>,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Dataset("training set is empty".into()));
    }
    if train_set.num_classes > net.num_classes {
        return Err(Error::Dataset(format!(
            "dataset has {} classes, network predicts {}",
            train_set.num_classes, net.num_classes
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sgd = Sgd::new(net);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut report = TrainReport::default();
    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let (x, labels) = train_set.batch::<T>(chunk, Some(&mut rng))?;
            let (loss, tape) = backward(net, &x, &labels)?;
            if !loss.is_finite() {
                return Err(Error::InvalidArgument(format!("training diverged at epoch {epoch}")));
            }
            apply_batch_statistics(net, &tape);
            sgd.step(net, &tape, cfg, epoch)?;
            loss_sum += loss.as_f64() * chunk.len() as f64;
        }
        let eval_acc = eval_set.map(|e| evaluate(net, e)).transpose()?;
        report.epochs.push(EpochRecord {
            epoch,
            lr: cfg.lr_at(epoch),
            train_loss: loss_sum / train_set.len() as f64,
            eval_acc,
            wall_ms: start.elapsed().as_millis() as u64,
            augmentation: train_set.augmentation.describe().to_string(),
        });
    }
    Ok(report)
}

/// Copies every parameter tensor of a trained nonlinear counterpart into
/// the ExpandNet it was built from.
pub fn init_from_counterpart<T: Scalar>(expanded: &mut NetworkGraph<T>, counterpart: &NetworkGraph<T>) -> Result<()> {
    let units = counterpart
        .units
        .as_ref()
        .ok_or_else(|| Error::Shape("counterpart carries no expansion units".into()))?;
    let stripped: Vec<&Layer<T>> = counterpart
        .layers
        .iter()
        .enumerate()
        .filter(|(i, l)| !(matches!(l, Layer::Relu) && units.iter().any(|u| u.range().contains(i))))
        .map(|(_, l)| l)
        .collect();
    if stripped.len() != expanded.layers.len() {
        return Err(Error::Shape(format!(
            "counterpart has {} layers after removing interior activations, ExpandNet has {}",
            stripped.len(),
            expanded.layers.len()
        )));
    }
    for (i, (dst, src)) in expanded.layers.iter().zip(&stripped).enumerate() {
        if dst.spec() != src.spec() {
            return Err(Error::Shape(format!(
                "layer {i}: counterpart {:?} does not match ExpandNet {:?}",
                src.spec(),
                dst.spec()
            )));
        }
    }
    for (dst, src) in expanded.layers.iter_mut().zip(stripped) {
        *dst = src.clone();
    }
    Ok(())
}

/// The +Init recipe: train the nonlinear counterpart for
/// `counterpart_epochs`, transfer its parameters, then train the ExpandNet.
pub fn train_with_counterpart_init<T: Scalar>(
    expanded: &mut NetworkGraph<T>,
    train_set: &Dataset,
    eval_set: Option<&Dataset>,
    cfg: &TrainConfig,
    counterpart_epochs: usize,
) -> Result<(TrainReport, TrainReport)> {
    let mut counterpart = build_nonlinear_counterpart(expanded)?;
    let mut cp_cfg = cfg.clone();
    cp_cfg.epochs = counterpart_epochs;
    cp_cfg.lr_milestones.retain(|&m| m < counterpart_epochs);
    let cp_report = train(&mut counterpart, train_set, eval_set, &cp_cfg)?;
    init_from_counterpart(expanded, &counterpart)?;
    let report = train(expanded, train_set, eval_set, cfg)?;
    Ok((cp_report, report))
}

/// Below this magnitude gradients are compared absolutely; central
/// differences carry roundoff of order 1e-11 at h = 1e-5.
pub const REL_ERR_FLOOR: f64 = 1e-6;

/// Worst relative error between analytic and central-difference gradients.
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub coords_checked: usize,
    /// Layer index, tensor index and coordinate of the worst case.
    pub worst: (usize, usize, usize),
}

/// Compares [`backward`] against central differences of the train-mode loss
/// at `h`, probing at most `coords_per_tensor` seeded coordinates per tensor.
pub fn gradient_check(
    net: &NetworkGraph<f64>,
    x: &Tensor4<f64>,
    labels: &[usize],
    h: f64,
    coords_per_tensor: usize,
    seed: u64,
) -> Result<GradCheck> {
    use rand::Rng;
    let (_, tape) = backward(net, x, labels)?;
    let loss = |n: &NetworkGraph<f64>| -> Result<f64> {
        let logits = n.forward(x, Mode::Train)?;
        Ok(softmax_cross_entropy(logits.data(), n.num_classes, labels)?.0)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheck {
        max_rel_err: 0.0,
        coords_checked: 0,
        worst: (0, 0, 0),
    };
    let mut probe = net.clone();
    for (li, grads) in tape.grads.iter().enumerate() {
        for (ti, g) in grads.iter().enumerate() {
            let coords: Vec<usize> = if g.len() <= coords_per_tensor {
                (0..g.len()).collect()
            } else {
                (0..coords_per_tensor).map(|_| rng.gen_range(0..g.len())).collect()
            };
            for i in coords {
                let set = |p: &mut NetworkGraph<f64>, v: f64| {
                    let mut t = p.layers[li].tensors_mut().into_iter().filter(|(r, _)| r.trainable());
                    t.nth(ti).expect("tape mirrors trainable tensors").1[i] = v;
                };
                let orig = net.layers[li]
                    .tensors()
                    .into_iter()
                    .filter(|(r, _)| r.trainable())
                    .nth(ti)
                    .expect("tape mirrors trainable tensors")
                    .1[i];
                set(&mut probe, orig + h);
                let plus = loss(&probe)?;
                set(&mut probe, orig - h);
                let minus = loss(&probe)?;
                set(&mut probe, orig);
                let numeric = (plus - minus) / (2.0 * h);
                let analytic = g[i];
                let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(REL_ERR_FLOOR);
                report.coords_checked += 1;
                if rel > report.max_rel_err {
                    report.max_rel_err = rel;
                    report.worst = (li, ti, i);
                }
            }
        }
    }
    Ok(report)
}
