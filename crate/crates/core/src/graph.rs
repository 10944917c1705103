//! Sequential networks: layer descriptions, parameter storage and
//! deterministic forward evaluation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::Normalization;
use crate::error::{Error, Result};
use crate::expansion::{ExpansionPlan, ExpansionUnit};
use crate::tensor::{conv2d_forward, conv_output_size, gemm_into, maxpool2d, ConvKernel, Matrix, Scalar, Tensor4};

pub const DEFAULT_BN_EPS: f64 = 1e-5;
pub const DEFAULT_BN_MOMENTUM: f64 = 0.1;

/// Architecture of one layer, without its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
        stride: usize,
        padding: usize,
        bias: bool,
    },
    Linear {
        in_features: usize,
        out_features: usize,
        bias: bool,
    },
    #[serde(rename = "batchnorm")]
    BatchNorm {
        channels: usize,
        eps: f64,
        momentum: f64,
    },
    Relu,
    LeakyRelu {
        slope: f64,
    },
    #[serde(rename = "maxpool")]
    MaxPool {
        size: usize,
        stride: usize,
    },
    Flatten,
}

/// Layer kind names as they appear in manifests.
pub const LAYER_KINDS: &[&str] = &[
    "conv2d",
    "linear",
    "batchnorm",
    "relu",
    "leaky_relu",
    "maxpool",
    "flatten",
];

impl LayerSpec {
    pub fn conv(
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
        stride: usize,
        padding: usize,
        bias: bool,
    ) -> Self {
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel_size,
            stride,
            padding,
            bias,
        }
    }

    pub fn linear(in_features: usize, out_features: usize, bias: bool) -> Self {
        LayerSpec::Linear {
            in_features,
            out_features,
            bias,
        }
    }

    pub fn batch_norm(channels: usize) -> Self {
        LayerSpec::BatchNorm {
            channels,
            eps: DEFAULT_BN_EPS,
            momentum: DEFAULT_BN_MOMENTUM,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::Linear { .. } => "linear",
            LayerSpec::BatchNorm { .. } => "batchnorm",
            LayerSpec::Relu => "relu",
            LayerSpec::LeakyRelu { .. } => "leaky_relu",
            LayerSpec::MaxPool { .. } => "maxpool",
            LayerSpec::Flatten => "flatten",
        }
    }

    pub fn is_linear_map(&self) -> bool {
        matches!(self, LayerSpec::Conv2d { .. } | LayerSpec::Linear { .. })
    }

    /// Trainable scalar count (weights, biases, BN affine terms).
    pub fn param_count(&self) -> usize {
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel_size,
                bias,
                ..
            } => out_channels * in_channels * kernel_size * kernel_size + if bias { out_channels } else { 0 },
            LayerSpec::Linear {
                in_features,
                out_features,
                bias,
            } => out_features * in_features + if bias { out_features } else { 0 },
            LayerSpec::BatchNorm { channels, .. } => 2 * channels,
            _ => 0,
        }
    }

    /// Per-sample output shape `(c, h, w)` for a per-sample input shape.
    pub fn output_shape(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        let [c, h, w] = input;
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel_size,
                stride,
                padding,
                ..
            } => {
                if c != in_channels {
                    return Err(Error::Shape(format!("expects {in_channels} input channels, got {c}")));
                }
                match (
                    conv_output_size(h, kernel_size, stride, padding),
                    conv_output_size(w, kernel_size, stride, padding),
                ) {
                    (Some(oh), Some(ow)) => Ok([out_channels, oh, ow]),
                    _ => Err(Error::Shape(format!(
                        "{kernel_size}x{kernel_size} kernel (stride {stride}, padding {padding}) does not fit {h}x{w}"
                    ))),
                }
            }
            LayerSpec::Linear {
                in_features,
                out_features,
                ..
            } => {
                if c * h * w != in_features {
                    return Err(Error::Shape(format!(
                        "expects {in_features} input features, got {}",
                        c * h * w
                    )));
                }
                Ok([out_features, 1, 1])
            }
            LayerSpec::BatchNorm { channels, .. } => {
                if c != channels {
                    return Err(Error::Shape(format!("expects {channels} channels, got {c}")));
                }
                Ok(input)
            }
            LayerSpec::Relu | LayerSpec::LeakyRelu { .. } => Ok(input),
            LayerSpec::MaxPool { size, stride } => {
                match (
                    conv_output_size(h, size, stride, 0),
                    conv_output_size(w, size, stride, 0),
                ) {
                    (Some(oh), Some(ow)) => Ok([c, oh, ow]),
                    _ => Err(Error::Shape(format!("{size}x{size} pooling does not fit {h}x{w}"))),
                }
            }
            LayerSpec::Flatten => Ok([c * h * w, 1, 1]),
        }
    }
}

/// Parameter initialization for freshly built layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitScheme {
    /// He-normal weights (std = sqrt(2 / fan_in)), zero biases, identity BN.
    /// Each layer draws from its own stream keyed by `(seed, layer index)`.
    Kaiming { seed: u64 },
    /// Keep the source parameters (only meaningful for cloning).
    Copy,
}

/// Role of a parameter tensor inside its layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamRole {
    Weight,
    Bias,
    BnScale,
    BnShift,
    BnRunningMean,
    BnRunningVar,
}

impl ParamRole {
    pub fn trainable(self) -> bool {
        !matches!(self, ParamRole::BnRunningMean | ParamRole::BnRunningVar)
    }

    /// Weight decay applies to conv/linear weights only.
    pub fn decays(self) -> bool {
        self == ParamRole::Weight
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d<T> {
    pub kernel: ConvKernel<T>,
    pub bias: Option<Vec<T>>,
    pub stride: usize,
    pub padding: usize,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(kernel: ConvKernel<T>, bias: Option<Vec<T>>, stride: usize, padding: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::Shape("stride must be positive".into()));
        }
        if let Some(b) = &bias {
            if b.len() != kernel.out_channels() {
                return Err(Error::Shape(format!(
                    "bias has {} entries for {} output channels",
                    b.len(),
                    kernel.out_channels()
                )));
            }
        }
        Ok(Conv2d {
            kernel,
            bias,
            stride,
            padding,
        })
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec::conv(
            self.kernel.in_channels(),
            self.kernel.out_channels(),
            self.kernel.size(),
            self.stride,
            self.padding,
            self.bias.is_some(),
        )
    }

    pub fn forward(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        conv2d_forward(x, &self.kernel, self.bias.as_deref(), self.stride, self.padding)
    }
}

/// Fully-connected layer `y = W x + b` with `W` stored as `(out, in)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear<T> {
    pub weight: Matrix<T>,
    pub bias: Option<Vec<T>>,
}

impl<T: Scalar> Linear<T> {
    pub fn new(weight: Matrix<T>, bias: Option<Vec<T>>) -> Result<Self> {
        if let Some(b) = &bias {
            if b.len() != weight.rows() {
                return Err(Error::Shape(format!(
                    "bias has {} entries for {} outputs",
                    b.len(),
                    weight.rows()
                )));
            }
        }
        Ok(Linear { weight, bias })
    }

    pub fn in_features(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_features(&self) -> usize {
        self.weight.rows()
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec::linear(self.in_features(), self.out_features(), self.bias.is_some())
    }

    pub fn forward(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        let n = x.batch();
        let (m, out) = (self.in_features(), self.out_features());
        if x.sample_len() != m {
            return Err(Error::Shape(format!(
                "expects {m} input features, got {}",
                x.sample_len()
            )));
        }
        let mut y = Tensor4::zeros([n, out, 1, 1]);
        gemm_into(
            x.data(),
            false,
            self.weight.data(),
            true,
            y.data_mut(),
            n,
            m,
            out,
            false,
        );
        if let Some(b) = &self.bias {
            for row in y.data_mut().chunks_mut(out) {
                row.iter_mut().zip(b).for_each(|(v, &bb)| *v = *v + bb);
            }
        }
        Ok(y)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm<T> {
    pub scale: Vec<T>,
    pub shift: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub eps: f64,
    pub momentum: f64,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(channels: usize, eps: f64, momentum: f64) -> Self {
        BatchNorm {
            scale: vec![T::one(); channels],
            shift: vec![T::zero(); channels],
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            eps,
            momentum,
        }
    }

    pub fn channels(&self) -> usize {
        self.scale.len()
    }

    /// Per-channel mean and biased variance over batch and spatial positions.
    pub fn batch_statistics(x: &Tensor4<T>) -> (Vec<T>, Vec<T>) {
        let [n, c, h, w] = x.shape();
        let count = T::of((n * h * w) as f64);
        let plane = h * w;
        let mut mean = vec![T::zero(); c];
        let mut var = vec![T::zero(); c];
        for ch in 0..c {
            let mut acc = T::zero();
            for b in 0..n {
                let off = (b * c + ch) * plane;
                acc = acc + x.data()[off..off + plane].iter().copied().sum::<T>();
            }
            let mu = acc / count;
            let mut sq = T::zero();
            for b in 0..n {
                let off = (b * c + ch) * plane;
                sq = sq
                    + x.data()[off..off + plane]
                        .iter()
                        .map(|&v| (v - mu) * (v - mu))
                        .sum::<T>();
            }
            mean[ch] = mu;
            var[ch] = sq / count;
        }
        (mean, var)
    }

    pub(crate) fn normalize(&self, x: &Tensor4<T>, mean: &[T], var: &[T]) -> Tensor4<T> {
        let [n, c, h, w] = x.shape();
        let plane = h * w;
        let eps = T::of(self.eps);
        let mut y = x.clone();
        for b in 0..n {
            for ch in 0..c {
                let inv = T::one() / (var[ch] + eps).sqrt();
                let (g, s, mu) = (self.scale[ch], self.shift[ch], mean[ch]);
                let off = (b * c + ch) * plane;
                for v in &mut y.data_mut()[off..off + plane] {
                    *v = g * (*v - mu) * inv + s;
                }
            }
        }
        y
    }

    pub fn forward(&self, x: &Tensor4<T>, mode: Mode) -> Result<Tensor4<T>> {
        if x.channels() != self.channels() {
            return Err(Error::Shape(format!(
                "expects {} channels, got {}",
                self.channels(),
                x.channels()
            )));
        }
        Ok(match mode {
            Mode::Eval => self.normalize(x, &self.running_mean, &self.running_var),
            Mode::Train => {
                let (mean, var) = Self::batch_statistics(x);
                self.normalize(x, &mean, &var)
            }
        })
    }

    /// Exponential moving average update with the unbiased batch variance.
    pub fn update_running(&mut self, mean: &[T], var: &[T], count: usize) {
        let m = T::of(self.momentum);
        let unbias = if count > 1 {
            T::of(count as f64 / (count - 1) as f64)
        } else {
            T::one()
        };
        for ch in 0..self.channels() {
            self.running_mean[ch] = (T::one() - m) * self.running_mean[ch] + m * mean[ch];
            self.running_var[ch] = (T::one() - m) * self.running_var[ch] + m * var[ch] * unbias;
        }
    }
}

/// Evaluation mode; only BatchNorm behaves differently.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A layer together with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum Layer<T> {
    Conv2d(Conv2d<T>),
    Linear(Linear<T>),
    BatchNorm(BatchNorm<T>),
    Relu,
    LeakyRelu { slope: f64 },
    MaxPool { size: usize, stride: usize },
    Flatten,
}

impl<T: Scalar> Layer<T> {
    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Conv2d(c) => c.spec(),
            Layer::Linear(l) => l.spec(),
            Layer::BatchNorm(bn) => LayerSpec::BatchNorm {
                channels: bn.channels(),
                eps: bn.eps,
                momentum: bn.momentum,
            },
            Layer::Relu => LayerSpec::Relu,
            Layer::LeakyRelu { slope } => LayerSpec::LeakyRelu { slope: *slope },
            Layer::MaxPool { size, stride } => LayerSpec::MaxPool {
                size: *size,
                stride: *stride,
            },
            Layer::Flatten => LayerSpec::Flatten,
        }
    }

    /// Builds a layer for `spec`. `stream` selects the per-layer random
    /// stream under [`InitScheme::Kaiming`].
    pub fn init(spec: &LayerSpec, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let mut he = |fan_in: usize, len: usize| -> Vec<T> {
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("finite std");
            (0..len).map(|_| T::of(normal.sample(&mut rng))).collect()
        };
        match *spec {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel_size,
                stride,
                padding,
                bias,
            } => {
                let fan_in = in_channels * kernel_size * kernel_size;
                let data = he(fan_in, out_channels * fan_in);
                Layer::Conv2d(Conv2d {
                    kernel: ConvKernel::new(out_channels, in_channels, kernel_size, data).expect("valid kernel spec"),
                    bias: bias.then(|| vec![T::zero(); out_channels]),
                    stride,
                    padding,
                })
            }
            LayerSpec::Linear {
                in_features,
                out_features,
                bias,
            } => {
                let data = he(in_features, out_features * in_features);
                Layer::Linear(Linear {
                    weight: Matrix::new(out_features, in_features, data).expect("valid linear spec"),
                    bias: bias.then(|| vec![T::zero(); out_features]),
                })
            }
            LayerSpec::BatchNorm {
                channels,
                eps,
                momentum,
            } => Layer::BatchNorm(BatchNorm::new(channels, eps, momentum)),
            LayerSpec::Relu => Layer::Relu,
            LayerSpec::LeakyRelu { slope } => Layer::LeakyRelu { slope },
            LayerSpec::MaxPool { size, stride } => Layer::MaxPool { size, stride },
            LayerSpec::Flatten => Layer::Flatten,
        }
    }

    pub fn forward(&self, x: &Tensor4<T>, mode: Mode) -> Result<Tensor4<T>> {
        match self {
            Layer::Conv2d(c) => c.forward(x),
            Layer::Linear(l) => l.forward(x),
            Layer::BatchNorm(bn) => bn.forward(x, mode),
            Layer::Relu => Ok(x.map(|v| if v > T::zero() { v } else { T::zero() })),
            Layer::LeakyRelu { slope } => {
                let s = T::of(*slope);
                Ok(x.map(|v| if v > T::zero() { v } else { s * v }))
            }
            Layer::MaxPool { size, stride } => Ok(maxpool2d(x, *size, *stride)?.0),
            Layer::Flatten => {
                let n = x.batch();
                let len = x.sample_len();
                x.clone().reshape([n, len, 1, 1])
            }
        }
    }

    /// All parameter tensors in serialization order.
    pub fn tensors(&self) -> Vec<(ParamRole, &[T])> {
        let mut out: Vec<(ParamRole, &[T])> = Vec::new();
        match self {
            Layer::Conv2d(c) => {
                out.push((ParamRole::Weight, c.kernel.data()));
                if let Some(b) = &c.bias {
                    out.push((ParamRole::Bias, b));
                }
            }
            Layer::Linear(l) => {
                out.push((ParamRole::Weight, l.weight.data()));
                if let Some(b) = &l.bias {
                    out.push((ParamRole::Bias, b));
                }
            }
            Layer::BatchNorm(bn) => {
                out.push((ParamRole::BnScale, &bn.scale));
                out.push((ParamRole::BnShift, &bn.shift));
                out.push((ParamRole::BnRunningMean, &bn.running_mean));
                out.push((ParamRole::BnRunningVar, &bn.running_var));
            }
            _ => {}
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(ParamRole, &mut [T])> {
        let mut out: Vec<(ParamRole, &mut [T])> = Vec::new();
        match self {
            Layer::Conv2d(c) => {
                out.push((ParamRole::Weight, c.kernel.data_mut()));
                if let Some(b) = &mut c.bias {
                    out.push((ParamRole::Bias, b));
                }
            }
            Layer::Linear(l) => {
                out.push((ParamRole::Weight, l.weight.data_mut()));
                if let Some(b) = &mut l.bias {
                    out.push((ParamRole::Bias, b));
                }
            }
            Layer::BatchNorm(bn) => {
                out.push((ParamRole::BnScale, &mut bn.scale));
                out.push((ParamRole::BnShift, &mut bn.shift));
                out.push((ParamRole::BnRunningMean, &mut bn.running_mean));
                out.push((ParamRole::BnRunningVar, &mut bn.running_var));
            }
            _ => {}
        }
        out
    }

    pub fn cast<U: Scalar>(&self) -> Layer<U> {
        let cv = |v: &Vec<T>| v.iter().map(|x| U::of(x.as_f64())).collect::<Vec<U>>();
        match self {
            Layer::Conv2d(c) => Layer::Conv2d(Conv2d {
                kernel: c.kernel.cast(),
                bias: c.bias.as_ref().map(cv),
                stride: c.stride,
                padding: c.padding,
            }),
            Layer::Linear(l) => Layer::Linear(Linear {
                weight: l.weight.cast(),
                bias: l.bias.as_ref().map(cv),
            }),
            Layer::BatchNorm(bn) => Layer::BatchNorm(BatchNorm {
                scale: cv(&bn.scale),
                shift: cv(&bn.shift),
                running_mean: cv(&bn.running_mean),
                running_var: cv(&bn.running_var),
                eps: bn.eps,
                momentum: bn.momentum,
            }),
            Layer::Relu => Layer::Relu,
            Layer::LeakyRelu { slope } => Layer::LeakyRelu { slope: *slope },
            Layer::MaxPool { size, stride } => Layer::MaxPool {
                size: *size,
                stride: *stride,
            },
            Layer::Flatten => Layer::Flatten,
        }
    }
}

/// An ordered chain of layers plus metadata. Compact networks, ExpandNets
/// and nonlinear counterparts are all values of this type.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkGraph<T> {
    pub name: String,
    /// Per-sample input shape `(c, h, w)`.
    pub input_shape: [usize; 3],
    pub num_classes: usize,
    pub layers: Vec<Layer<T>>,
    /// Present on expanded graphs: which layer ranges fold back into one layer.
    pub units: Option<Vec<ExpansionUnit>>,
    /// The plan this graph was expanded with (kept after compression).
    pub expansion: Option<ExpansionPlan>,
    pub preprocessing: Option<Normalization>,
}

impl<T: Scalar> NetworkGraph<T> {
    pub fn new(
        name: impl Into<String>,
        input_shape: [usize; 3],
        num_classes: usize,
        layers: Vec<Layer<T>>,
    ) -> Result<Self> {
        let net = NetworkGraph {
            name: name.into(),
            input_shape,
            num_classes,
            layers,
            units: None,
            expansion: None,
            preprocessing: None,
        };
        net.validate()?;
        Ok(net)
    }

    /// Builds a freshly initialized network from layer specs.
    pub fn from_specs(
        name: impl Into<String>,
        input_shape: [usize; 3],
        num_classes: usize,
        specs: &[LayerSpec],
        seed: u64,
    ) -> Result<Self> {
        let layers = specs
            .iter()
            .enumerate()
            .map(|(i, s)| Layer::init(s, seed, i as u64))
            .collect();
        Self::new(name, input_shape, num_classes, layers)
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Layer::spec).collect()
    }

    /// Per-layer output shapes, checking adjacent layers are compatible and
    /// the final output is `(num_classes, 1, 1)`.
    pub fn shape_walk(&self) -> Result<Vec<[usize; 3]>> {
        let mut shape = self.input_shape;
        if shape.contains(&0) {
            return Err(Error::Shape(format!("input shape {shape:?} has a zero dimension")));
        }
        let mut shapes = Vec::with_capacity(self.layers.len());
        for (index, layer) in self.layers.iter().enumerate() {
            let spec = layer.spec();
            shape = spec.output_shape(shape).map_err(|e| Error::Layer {
                index,
                kind: spec.kind_name(),
                message: e.to_string(),
            })?;
            shapes.push(shape);
        }
        Ok(shapes)
    }

    pub fn validate(&self) -> Result<()> {
        let shapes = self.shape_walk()?;
        let last = shapes.last().copied().unwrap_or(self.input_shape);
        if last != [self.num_classes, 1, 1] {
            return Err(Error::Shape(format!(
                "network output shape {last:?} does not match {} classes",
                self.num_classes
            )));
        }
        if let Some(units) = &self.units {
            let mut sorted: Vec<_> = units.iter().map(|u| (u.start, u.start + u.len)).collect();
            sorted.sort_unstable();
            for w in sorted.windows(2) {
                if w[0].1 > w[1].0 {
                    return Err(Error::Plan("expansion units overlap".into()));
                }
            }
            if let Some(&(s, e)) = sorted.last() {
                if e > self.layers.len() || s >= e {
                    return Err(Error::Plan("expansion unit range out of bounds".into()));
                }
            }
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor4<T>, mode: Mode) -> Result<Tensor4<T>> {
        let [_, c, h, w] = x.shape();
        if [c, h, w] != self.input_shape {
            return Err(Error::Shape(format!(
                "input sample shape {:?} does not match declared {:?}",
                [c, h, w],
                self.input_shape
            )));
        }
        let mut act = x.clone();
        for (index, layer) in self.layers.iter().enumerate() {
            act = layer.forward(&act, mode).map_err(|e| Error::Layer {
                index,
                kind: layer.spec().kind_name(),
                message: e.to_string(),
            })?;
        }
        Ok(act)
    }

    /// Top-1 predictions in eval mode; ties resolve to the lowest class id.
    pub fn predict(&self, x: &Tensor4<T>) -> Result<Vec<usize>> {
        let logits = self.forward(x, Mode::Eval)?;
        Ok(argmax_rows(logits.data(), self.num_classes))
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.spec().param_count()).sum()
    }

    pub fn clone_architecture(&self, init: InitScheme) -> Self {
        match init {
            InitScheme::Copy => self.clone(),
            InitScheme::Kaiming { seed } => {
                let mut net = self.clone();
                net.layers = self
                    .layers
                    .iter()
                    .enumerate()
                    .map(|(i, l)| Layer::init(&l.spec(), seed, i as u64))
                    .collect();
                net
            }
        }
    }

    pub fn cast<U: Scalar>(&self) -> NetworkGraph<U> {
        NetworkGraph {
            name: self.name.clone(),
            input_shape: self.input_shape,
            num_classes: self.num_classes,
            layers: self.layers.iter().map(Layer::cast).collect(),
            units: self.units.clone(),
            expansion: self.expansion.clone(),
            preprocessing: self.preprocessing.clone(),
        }
    }
}

pub(crate) fn argmax_rows<T: Scalar>(data: &[T], classes: usize) -> Vec<usize> {
    data.chunks(classes)
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}
