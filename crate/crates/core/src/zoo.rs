//! The compact CIFAR architectures and their ExpandNet variants.
//!
//! Architecture ids look like `smallnet7-3conv-c10`: kernel size, number of
//! convolution blocks and number of classes. `smallnet7` alone means the
//! 3-block, 10-class network.

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::expansion::{expand_network, ExpansionPlan, Strategies, DEFAULT_FC_DEPTH};
use crate::graph::{LayerSpec, NetworkGraph};
use crate::tensor::Scalar;

pub const KERNEL_SIZES: [usize; 4] = [3, 5, 7, 9];
pub const CLASS_COUNTS: [usize; 2] = [10, 100];
pub const CIFAR_INPUT: [usize; 3] = [3, 32, 32];
const HIDDEN_UNITS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ZooDepth {
    ThreeConv,
    /// Adds a 64-channel block; used for the kernel-size/rate sweeps.
    FourConv,
}

impl ZooDepth {
    fn channels(self) -> &'static [usize] {
        match self {
            ZooDepth::ThreeConv => &[8, 16, 32],
            ZooDepth::FourConv => &[8, 16, 32, 64],
        }
    }
}

/// Parsed architecture id.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ArchId {
    pub kernel_size: usize,
    pub depth: ZooDepth,
    pub num_classes: usize,
}

impl FromStr for ArchId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("unknown architecture id '{s}'"));
        let rest = s.strip_prefix("smallnet").ok_or_else(bad)?;
        let mut parts = rest.split('-');
        let kernel_size: usize = parts.next().and_then(|k| k.parse().ok()).ok_or_else(bad)?;
        let mut id = ArchId {
            kernel_size,
            depth: ZooDepth::ThreeConv,
            num_classes: 10,
        };
        for part in parts {
            match part {
                "3conv" => id.depth = ZooDepth::ThreeConv,
                "4conv" => id.depth = ZooDepth::FourConv,
                c if c.starts_with('c') => id.num_classes = c[1..].parse().map_err(|_| bad())?,
                _ => return Err(bad()),
            }
        }
        Ok(id)
    }
}

impl std::fmt::Display for ArchId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let d = match self.depth {
            ZooDepth::ThreeConv => 3,
            ZooDepth::FourConv => 4,
        };
        write!(f, "smallnet{}-{d}conv-c{}", self.kernel_size, self.num_classes)
    }
}

/// Layer sequence of a SmallNet: `depth` blocks of conv/BN/ReLU/2x2 pool,
/// then a 64-unit hidden layer and the logit layer.
pub fn smallnet_specs(kernel_size: usize, num_classes: usize, depth: ZooDepth) -> Result<Vec<LayerSpec>> {
    if !KERNEL_SIZES.contains(&kernel_size) {
        return Err(Error::InvalidArgument(format!(
            "SmallNet kernel size must be one of {KERNEL_SIZES:?}, got {kernel_size}"
        )));
    }
    if !CLASS_COUNTS.contains(&num_classes) {
        return Err(Error::InvalidArgument(format!(
            "SmallNet class count must be one of {CLASS_COUNTS:?}, got {num_classes}"
        )));
    }
    // The original 3x3 three-block net is unpadded; every other variant keeps
    // the spatial size through each convolution.
    let padding = if kernel_size == 3 && depth == ZooDepth::ThreeConv {
        0
    } else {
        (kernel_size - 1) / 2
    };
    let mut specs = Vec::new();
    let [mut c, mut h, mut w] = CIFAR_INPUT;
    for &out in depth.channels() {
        specs.push(LayerSpec::conv(c, out, kernel_size, 1, padding, true));
        specs.push(LayerSpec::batch_norm(out));
        specs.push(LayerSpec::Relu);
        specs.push(LayerSpec::MaxPool { size: 2, stride: 2 });
        c = out;
        h = (h + 2 * padding + 1 - kernel_size) / 2;
        w = (w + 2 * padding + 1 - kernel_size) / 2;
    }
    specs.push(LayerSpec::Flatten);
    specs.push(LayerSpec::linear(c * h * w, HIDDEN_UNITS, true));
    specs.push(LayerSpec::Relu);
    specs.push(LayerSpec::linear(HIDDEN_UNITS, num_classes, true));
    Ok(specs)
}

pub fn build_smallnet<T: Scalar>(
    kernel_size: usize,
    num_classes: usize,
    depth: ZooDepth,
    seed: u64,
) -> Result<NetworkGraph<T>> {
    let specs = smallnet_specs(kernel_size, num_classes, depth)?;
    let id = ArchId {
        kernel_size,
        depth,
        num_classes,
    };
    NetworkGraph::from_specs(id.to_string(), CIFAR_INPUT, num_classes, &specs, seed)
}

pub fn build_by_id<T: Scalar>(id: &str, seed: u64) -> Result<NetworkGraph<T>> {
    let arch: ArchId = id.parse()?;
    build_smallnet(arch.kernel_size, arch.num_classes, arch.depth, seed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    Fc,
    Cl,
    ClFc,
    Ck,
    CkFc,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Variant::Fc, Variant::Cl, Variant::ClFc, Variant::Ck, Variant::CkFc];

    pub fn strategies(self) -> Strategies {
        match self {
            Variant::Fc => Strategies {
                fc: true,
                cl: false,
                ck: false,
            },
            Variant::Cl => Strategies {
                fc: false,
                cl: true,
                ck: false,
            },
            Variant::ClFc => Strategies {
                fc: true,
                cl: true,
                ck: false,
            },
            Variant::Ck => Strategies {
                fc: false,
                cl: false,
                ck: true,
            },
            Variant::CkFc => Strategies {
                fc: true,
                cl: false,
                ck: true,
            },
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "FC" => Ok(Variant::Fc),
            "CL" => Ok(Variant::Cl),
            "CL+FC" => Ok(Variant::ClFc),
            "CK" => Ok(Variant::Ck),
            "CK+FC" => Ok(Variant::CkFc),
            _ => Err(Error::InvalidArgument(format!("unknown ExpandNet variant '{s}'"))),
        }
    }
}

pub fn build_expandnet_variant<T: Scalar>(
    base: &NetworkGraph<T>,
    variant: Variant,
    rate: usize,
    table1_channels: bool,
    seed: u64,
) -> Result<NetworkGraph<T>> {
    let plan = ExpansionPlan::for_network(
        base,
        variant.strategies(),
        rate,
        DEFAULT_FC_DEPTH,
        table1_channels,
        seed,
    )?;
    expand_network(base, &plan)
}
