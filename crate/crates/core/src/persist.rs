//! Model files: a JSON manifest plus a sidecar blob of little-endian
//! IEEE-754 values.
//!
//! The blob lives next to the manifest with the extension `.bin`
//! (`model.json` -> `model.bin`). Tensors are concatenated in layer order:
//! convolution weights `(N, M, k, k)` then bias, linear weights row-major
//! `(N, M)` then bias, BatchNorm scale, shift, running mean, running
//! variance. The manifest records the blob's byte length and SHA-256.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::Normalization;
use crate::error::{Error, Result};
use crate::expansion::{ExpansionPlan, ExpansionUnit};
use crate::graph::{Layer, LayerSpec, NetworkGraph, LAYER_KINDS};
use crate::tensor::{DType, Scalar};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlobInfo {
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub name: String,
    pub dtype: DType,
    pub input_shape: [usize; 3],
    pub num_classes: usize,
    pub layers: Vec<LayerSpec>,
    pub units: Option<Vec<ExpansionUnit>>,
    pub expansion: Option<ExpansionPlan>,
    pub preprocessing: Option<Normalization>,
    pub blob: BlobInfo,
}

pub fn blob_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

fn encode_params<T: Scalar>(net: &NetworkGraph<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(net.param_count() * T::DTYPE.size_of());
    for layer in &net.layers {
        for (_, t) in layer.tensors() {
            for &v in t {
                v.write_le(&mut out);
            }
        }
    }
    out
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn manifest_for<T: Scalar>(net: &NetworkGraph<T>, blob: &[u8]) -> Manifest {
    Manifest {
        format_version: FORMAT_VERSION,
        name: net.name.clone(),
        dtype: T::DTYPE,
        input_shape: net.input_shape,
        num_classes: net.num_classes,
        layers: net.specs(),
        units: net.units.clone(),
        expansion: net.expansion.clone(),
        preprocessing: net.preprocessing.clone(),
        blob: BlobInfo {
            bytes: blob.len() as u64,
            sha256: sha256_hex(blob),
        },
    }
}

/// Writes `path` (manifest) and its `.bin` sidecar.
pub fn save_model<T: Scalar>(net: &NetworkGraph<T>, path: &Path) -> Result<()> {
    let blob = encode_params(net);
    let manifest = manifest_for(net, &blob);
    let bpath = blob_path(path);
    if bpath == path {
        return Err(Error::InvalidArgument(format!(
            "manifest path {} collides with its blob; use a .json extension",
            path.display()
        )));
    }
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    fs::write(&bpath, &blob).map_err(|e| Error::io(&bpath, e))?;
    fs::write(path, json).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Parses a manifest, rejecting unknown versions and layer kinds.
pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    match value.get("format_version").and_then(|v| v.as_u64()) {
        Some(v) if v == FORMAT_VERSION as u64 => {}
        Some(v) => {
            return Err(Error::Version(format!(
                "format_version {v} (supported: {FORMAT_VERSION})"
            )))
        }
        None => return Err(Error::Version("manifest has no format_version".into())),
    }
    if let Some(layers) = value.get("layers").and_then(|v| v.as_array()) {
        for (i, l) in layers.iter().enumerate() {
            let kind = l.get("kind").and_then(|k| k.as_str()).unwrap_or("<missing>");
            if !LAYER_KINDS.contains(&kind) {
                return Err(Error::Version(format!("layer {i} has unknown kind '{kind}'")));
            }
        }
    }
    Ok(serde_json::from_value(value)?)
}

fn decode_network<T: Scalar>(manifest: &Manifest, blob: &[u8]) -> Result<NetworkGraph<T>> {
    if manifest.dtype != T::DTYPE {
        return Err(Error::InvalidArgument(format!(
            "model holds {} parameters, requested {}",
            manifest.dtype.name(),
            T::DTYPE.name()
        )));
    }
    let size = T::DTYPE.size_of();
    let mut layers: Vec<Layer<T>> = manifest.layers.iter().map(|s| Layer::init(s, 0, 0)).collect();
    let expected: usize = layers
        .iter()
        .map(|l| l.tensors().iter().map(|(_, t)| t.len()).sum::<usize>())
        .sum::<usize>()
        * size;
    if blob.len() != expected {
        return Err(Error::Corrupt(format!(
            "weight blob has {} bytes, architecture needs {expected}",
            blob.len()
        )));
    }
    let mut offset = 0;
    for layer in &mut layers {
        for (_, t) in layer.tensors_mut() {
            for v in t.iter_mut() {
                *v = T::read_le(&blob[offset..offset + size]);
                offset += size;
            }
        }
    }
    let net = NetworkGraph {
        name: manifest.name.clone(),
        input_shape: manifest.input_shape,
        num_classes: manifest.num_classes,
        layers,
        units: manifest.units.clone(),
        expansion: manifest.expansion.clone(),
        preprocessing: manifest.preprocessing.clone(),
    };
    net.validate()?;
    Ok(net)
}

fn read_blob(path: &Path, manifest: &Manifest) -> Result<Vec<u8>> {
    let bpath = blob_path(path);
    let blob = fs::read(&bpath).map_err(|e| Error::io(&bpath, e))?;
    if blob.len() as u64 != manifest.blob.bytes {
        return Err(Error::Corrupt(format!(
            "{} has {} bytes, manifest records {}",
            bpath.display(),
            blob.len(),
            manifest.blob.bytes
        )));
    }
    let digest = sha256_hex(&blob);
    if digest != manifest.blob.sha256 {
        return Err(Error::Corrupt(format!(
            "{} content hash {digest} does not match manifest {}",
            bpath.display(),
            manifest.blob.sha256
        )));
    }
    Ok(blob)
}

pub fn load_model<T: Scalar>(path: &Path) -> Result<NetworkGraph<T>> {
    let manifest = read_manifest(path)?;
    let blob = read_blob(path, &manifest)?;
    decode_network(&manifest, &blob)
}

/// A network of either element type, as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyNetwork {
    F32(NetworkGraph<f32>),
    F64(NetworkGraph<f64>),
}

impl AnyNetwork {
    pub fn load(path: &Path) -> Result<Self> {
        let manifest = read_manifest(path)?;
        let blob = read_blob(path, &manifest)?;
        Ok(match manifest.dtype {
            DType::F32 => AnyNetwork::F32(decode_network(&manifest, &blob)?),
            DType::F64 => AnyNetwork::F64(decode_network(&manifest, &blob)?),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        match self {
            AnyNetwork::F32(n) => save_model(n, path),
            AnyNetwork::F64(n) => save_model(n, path),
        }
    }

    pub fn dtype(&self) -> DType {
        match self {
            AnyNetwork::F32(_) => DType::F32,
            AnyNetwork::F64(_) => DType::F64,
        }
    }

    pub fn to_f64(&self) -> NetworkGraph<f64> {
        match self {
            AnyNetwork::F32(n) => n.cast(),
            AnyNetwork::F64(n) => n.clone(),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            AnyNetwork::F32(n) => n.param_count(),
            AnyNetwork::F64(n) => n.param_count(),
        }
    }

    pub fn input_shape(&self) -> [usize; 3] {
        match self {
            AnyNetwork::F32(n) => n.input_shape,
            AnyNetwork::F64(n) => n.input_shape,
        }
    }

    pub fn num_classes(&self) -> usize {
        match self {
            AnyNetwork::F32(n) => n.num_classes,
            AnyNetwork::F64(n) => n.num_classes,
        }
    }
}

impl From<NetworkGraph<f32>> for AnyNetwork {
    fn from(n: NetworkGraph<f32>) -> Self {
        AnyNetwork::F32(n)
    }
}

impl From<NetworkGraph<f64>> for AnyNetwork {
    fn from(n: NetworkGraph<f64>) -> Self {
        AnyNetwork::F64(n)
    }
}

/// Runs a generic expression against whichever network an [`AnyNetwork`]
/// holds.
#[macro_export]
macro_rules! with_network {
    ($any:expr, $net:ident => $body:expr) => {
        match $any {
            $crate::persist::AnyNetwork::F32($net) => $body,
            $crate::persist::AnyNetwork::F64($net) => $body,
        }
    };
}
