//! ExpandNet: train compact CNNs through linear over-parameterization and
//! fold the expanded layers back into the compact architecture.

pub mod cli;
pub mod compression;
pub mod data;
pub mod error;
pub mod expansion;
pub mod graph;
pub mod persist;
pub mod tensor;
pub mod train;
pub mod zoo;

pub use compression::{build_conv_matrix, collapse_conv_chain, collapse_fc_chain, compose_conv_pair, compress_network};
pub use error::{Error, Result};
pub use expansion::{expand_network, ExpansionPlan, ExpansionUnit, Strategies, Strategy};
pub use graph::{Layer, LayerSpec, Mode, NetworkGraph};
pub use persist::{load_model, save_model, AnyNetwork};
pub use tensor::{DType, Scalar, Tensor4};
pub use train::{train, TrainConfig, TrainReport};
