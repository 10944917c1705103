//! Datasets: the CIFAR binary format and seeded synthetic image blobs.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor4};

pub const IMAGE_SHAPE: [usize; 3] = [3, 32, 32];
const PIXELS: usize = 3 * 32 * 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Eval,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CifarFlavor {
    Cifar10,
    Cifar100,
}

impl CifarFlavor {
    pub fn num_classes(self) -> usize {
        match self {
            CifarFlavor::Cifar10 => 10,
            CifarFlavor::Cifar100 => 100,
        }
    }

    /// Bytes per record: label byte(s) then 3072 pixel bytes.
    pub fn record_len(self) -> usize {
        match self {
            CifarFlavor::Cifar10 => 1 + PIXELS,
            CifarFlavor::Cifar100 => 2 + PIXELS,
        }
    }

    fn subdir(self) -> &'static str {
        match self {
            CifarFlavor::Cifar10 => "cifar-10-batches-bin",
            CifarFlavor::Cifar100 => "cifar-100-binary",
        }
    }

    fn files(self) -> (Vec<&'static str>, &'static str) {
        match self {
            CifarFlavor::Cifar10 => (
                vec![
                    "data_batch_1.bin",
                    "data_batch_2.bin",
                    "data_batch_3.bin",
                    "data_batch_4.bin",
                    "data_batch_5.bin",
                ],
                "test_batch.bin",
            ),
            CifarFlavor::Cifar100 => (vec!["train.bin"], "test.bin"),
        }
    }
}

/// Per-channel standardization `(x - mean) / std` applied to `[0, 1]` pixels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalization {
    pub fn identity(channels: usize) -> Self {
        Normalization {
            mean: vec![0.0; channels],
            std: vec![1.0; channels],
        }
    }

    /// Channel statistics of channel-major images.
    pub fn fit(images: &[f32], shape: [usize; 3]) -> Self {
        let [c, h, w] = shape;
        let plane = h * w;
        let count = images.len() / (c * plane);
        let mut mean = vec![0.0; c];
        let mut std = vec![0.0; c];
        for ch in 0..c {
            let mut sum = 0.0;
            let mut sq = 0.0;
            for img in images.chunks(c * plane) {
                for &v in &img[ch * plane..(ch + 1) * plane] {
                    sum += v as f64;
                    sq += (v as f64) * (v as f64);
                }
            }
            let n = (count * plane).max(1) as f64;
            mean[ch] = sum / n;
            std[ch] = (sq / n - mean[ch] * mean[ch]).max(0.0).sqrt().max(1e-8);
        }
        Normalization { mean, std }
    }

    pub fn apply(&self, images: &mut [f32], shape: [usize; 3]) {
        let [c, h, w] = shape;
        let plane = h * w;
        for img in images.chunks_mut(c * plane) {
            for ch in 0..c {
                let (m, s) = (self.mean[ch], self.std[ch]);
                for v in &mut img[ch * plane..(ch + 1) * plane] {
                    *v = ((*v as f64 - m) / s) as f32;
                }
            }
        }
    }
}

/// Labeled images held in memory, already normalized.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub name: String,
    pub split: Split,
    pub num_classes: usize,
    pub image_shape: [usize; 3],
    pub images: Vec<f32>,
    pub labels: Vec<usize>,
    pub normalization: Normalization,
    /// Augmentation applied when batches are drawn for training.
    pub augmentation: Augmentation,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Augmentation {
    #[default]
    None,
    /// Random horizontal flip plus a random crop from a 4-pixel zero pad.
    FlipCrop,
}

impl Augmentation {
    pub fn describe(self) -> &'static str {
        match self {
            Augmentation::None => "none",
            Augmentation::FlipCrop => "horizontal flip + 4px pad-crop",
        }
    }
}

impl Dataset {
    /// Re-standardizes the images with `norm` in place of the current stats.
    pub fn renormalize(&mut self, norm: &Normalization) {
        if *norm == self.normalization {
            return;
        }
        let [c, h, w] = self.image_shape;
        let plane = h * w;
        let old = &self.normalization;
        for img in self.images.chunks_mut(c * plane) {
            for ch in 0..c {
                for v in &mut img[ch * plane..(ch + 1) * plane] {
                    let raw = *v as f64 * old.std[ch] + old.mean[ch];
                    *v = ((raw - norm.mean[ch]) / norm.std[ch]) as f32;
                }
            }
        }
        self.normalization = norm.clone();
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample_len(&self) -> usize {
        self.image_shape.iter().product()
    }

    pub fn image(&self, i: usize) -> &[f32] {
        let len = self.sample_len();
        &self.images[i * len..(i + 1) * len]
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Gathers `indices` into a batch tensor. When `rng` is given the
    /// dataset's augmentation is applied.
    pub fn batch<T: Scalar>(
        &self,
        indices: &[usize],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Tensor4<T>, Vec<usize>)> {
        let [c, h, w] = self.image_shape;
        let len = self.sample_len();
        let mut data = Vec::with_capacity(indices.len() * len);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::Dataset(format!(
                    "sample index {i} out of range ({})",
                    self.len()
                )));
            }
            let img = self.image(i);
            match (self.augmentation, rng.as_deref_mut()) {
                (Augmentation::FlipCrop, Some(rng)) => {
                    let flip = rng.gen_bool(0.5);
                    let dy = rng.gen_range(0..=8) as isize - 4;
                    let dx = rng.gen_range(0..=8) as isize - 4;
                    for ch in 0..c {
                        for y in 0..h {
                            for x in 0..w {
                                let sy = y as isize + dy;
                                let sx0 = x as isize + dx;
                                let sx = if flip { w as isize - 1 - sx0 } else { sx0 };
                                let v = if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                    0.0
                                } else {
                                    img[(ch * h + sy as usize) * w + sx as usize]
                                };
                                data.push(T::of(v as f64));
                            }
                        }
                    }
                }
                _ => data.extend(img.iter().map(|&v| T::of(v as f64))),
            }
            labels.push(self.labels[i]);
        }
        let n = indices.len();
        if n == 0 {
            return Err(Error::Dataset("empty batch".into()));
        }
        Ok((Tensor4::new([n, c, h, w], data)?, labels))
    }

    /// Seeded class-balanced subsample of `size` images. Any remainder after
    /// an even split goes to the lowest class ids.
    pub fn stratified_subset(&self, size: usize, seed: u64) -> Result<Dataset> {
        let classes = self.num_classes;
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
        for (i, &l) in self.labels.iter().enumerate() {
            by_class[l].push(i);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut chosen = Vec::with_capacity(size);
        for (class, idx) in by_class.iter_mut().enumerate() {
            let quota = size / classes + usize::from(class < size % classes);
            if idx.len() < quota {
                return Err(Error::Dataset(format!(
                    "class {class} has {} samples, subset needs {quota}",
                    idx.len()
                )));
            }
            idx.shuffle(&mut rng);
            chosen.extend_from_slice(&idx[..quota]);
        }
        chosen.sort_unstable();
        let len = self.sample_len();
        let mut images = Vec::with_capacity(chosen.len() * len);
        for &i in &chosen {
            images.extend_from_slice(self.image(i));
        }
        Ok(Dataset {
            name: format!("{}[subset {size}]", self.name),
            split: self.split,
            num_classes: classes,
            image_shape: self.image_shape,
            images,
            labels: chosen.iter().map(|&i| self.labels[i]).collect(),
            normalization: self.normalization.clone(),
            augmentation: self.augmentation,
        })
    }
}

/// Raw CIFAR records: pixels as `[0, 1]` floats plus labels.
pub fn parse_cifar_file(path: &Path, flavor: CifarFlavor) -> Result<(Vec<f32>, Vec<usize>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_cifar_bytes(&bytes, flavor, path)
}

pub fn parse_cifar_bytes(bytes: &[u8], flavor: CifarFlavor, path: &Path) -> Result<(Vec<f32>, Vec<usize>)> {
    let record = flavor.record_len();
    let format_err = |offset: usize, message: String| Error::Format {
        path: path.to_path_buf(),
        offset: offset as u64,
        message,
    };
    if bytes.is_empty() {
        return Err(format_err(0, "file contains no records".into()));
    }
    let whole = bytes.len() / record;
    let rem = bytes.len() % record;
    if rem != 0 {
        return Err(format_err(
            whole * record,
            format!("truncated record: {rem} of {record} bytes present"),
        ));
    }
    let label_bytes = record - PIXELS;
    let mut pixels = Vec::with_capacity(whole * PIXELS);
    let mut labels = Vec::with_capacity(whole);
    for (r, rec) in bytes.chunks_exact(record).enumerate() {
        // CIFAR-100 stores (coarse, fine); the fine label is the class.
        let label = rec[label_bytes - 1] as usize;
        if label >= flavor.num_classes() {
            return Err(format_err(
                r * record + label_bytes - 1,
                format!("label {label} out of range for {} classes", flavor.num_classes()),
            ));
        }
        labels.push(label);
        pixels.extend(rec[label_bytes..].iter().map(|&b| b as f32 / 255.0));
    }
    Ok((pixels, labels))
}

fn locate(dir: &Path, flavor: CifarFlavor, file: &str) -> PathBuf {
    let direct = dir.join(file);
    if direct.exists() {
        return direct;
    }
    dir.join(flavor.subdir()).join(file)
}

/// Loads the train and eval splits. `subset` draws a seeded class-balanced
/// sample of the training split; normalization statistics come from the
/// (possibly subsetted) training split and are applied to both.
pub fn load_cifar(dir: &Path, flavor: CifarFlavor, subset: Option<usize>, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train_files, test_file) = flavor.files();
    let mut train_pixels = Vec::new();
    let mut train_labels = Vec::new();
    for f in train_files {
        let path = locate(dir, flavor, f);
        if !path.exists() {
            return Err(Error::Dataset(format!("missing CIFAR file {}", path.display())));
        }
        let (p, l) = parse_cifar_file(&path, flavor)?;
        train_pixels.extend(p);
        train_labels.extend(l);
    }
    let test_path = locate(dir, flavor, test_file);
    if !test_path.exists() {
        return Err(Error::Dataset(format!("missing CIFAR file {}", test_path.display())));
    }
    let (eval_pixels, eval_labels) = parse_cifar_file(&test_path, flavor)?;

    let name = match flavor {
        CifarFlavor::Cifar10 => "cifar10",
        CifarFlavor::Cifar100 => "cifar100",
    };
    let raw_train = Dataset {
        name: name.to_string(),
        split: Split::Train,
        num_classes: flavor.num_classes(),
        image_shape: IMAGE_SHAPE,
        images: train_pixels,
        labels: train_labels,
        normalization: Normalization::identity(3),
        augmentation: Augmentation::FlipCrop,
    };
    let mut train = match subset {
        Some(size) => raw_train.stratified_subset(size, seed)?,
        None => raw_train,
    };
    let norm = Normalization::fit(&train.images, IMAGE_SHAPE);
    norm.apply(&mut train.images, IMAGE_SHAPE);
    train.normalization = norm.clone();

    let mut eval_images = eval_pixels;
    norm.apply(&mut eval_images, IMAGE_SHAPE);
    let eval = Dataset {
        name: name.to_string(),
        split: Split::Eval,
        num_classes: flavor.num_classes(),
        image_shape: IMAGE_SHAPE,
        images: eval_images,
        labels: eval_labels,
        normalization: norm,
        augmentation: Augmentation::None,
    };
    Ok((train, eval))
}

fn class_prototypes(num_classes: usize, seed: u64) -> Vec<Vec<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [c, h, w] = IMAGE_SHAPE;
    (0..num_classes)
        .map(|_| {
            // A few low-frequency plane waves per channel.
            let waves: Vec<(f64, f64, f64, f64)> = (0..c * 3)
                .map(|_| {
                    (
                        rng.gen_range(-0.4..0.4),
                        rng.gen_range(-0.4..0.4),
                        rng.gen_range(0.0..std::f64::consts::TAU),
                        rng.gen_range(0.5..1.0),
                    )
                })
                .collect();
            let mut img = Vec::with_capacity(c * h * w);
            for ch in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        let v: f64 = waves[ch * 3..ch * 3 + 3]
                            .iter()
                            .map(|&(fy, fx, ph, a)| a * (fy * y as f64 + fx * x as f64 + ph).sin())
                            .sum();
                        img.push(v as f32);
                    }
                }
            }
            img
        })
        .collect()
}

fn render_blobs(prototypes: &[Vec<f32>], n: usize, noise: f64, rng: &mut ChaCha8Rng) -> (Vec<f32>, Vec<usize>) {
    let classes = prototypes.len();
    let normal = Normal::new(0.0, noise).expect("finite noise");
    let mut images = Vec::with_capacity(n * PIXELS);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % classes;
        images.extend(prototypes[label].iter().map(|&p| p + normal.sample(rng) as f32));
        labels.push(label);
    }
    (images, labels)
}

const SYNTHETIC_NOISE: f64 = 0.5;

/// Seeded, balanced Gaussian class blobs rendered as 3x32x32 images.
pub fn synthetic_dataset(num_classes: usize, n: usize, seed: u64) -> Result<Dataset> {
    Ok(synthetic_split(num_classes, n, 0, seed)?.0)
}

/// Train/eval blobs drawn around the same class prototypes. Normalization
/// is fitted on the train split.
pub fn synthetic_split(num_classes: usize, n_train: usize, n_eval: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    if num_classes == 0 {
        return Err(Error::Dataset("synthetic data needs at least one class".into()));
    }
    let prototypes = class_prototypes(num_classes, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let (mut train_images, train_labels) = render_blobs(&prototypes, n_train, SYNTHETIC_NOISE, &mut rng);
    let (mut eval_images, eval_labels) = render_blobs(&prototypes, n_eval, SYNTHETIC_NOISE, &mut rng);
    let norm = if n_train > 0 {
        Normalization::fit(&train_images, IMAGE_SHAPE)
    } else {
        Normalization::identity(3)
    };
    norm.apply(&mut train_images, IMAGE_SHAPE);
    norm.apply(&mut eval_images, IMAGE_SHAPE);
    let make = |split, images, labels| Dataset {
        name: format!("synthetic-c{num_classes}-s{seed}"),
        split,
        num_classes,
        image_shape: IMAGE_SHAPE,
        images,
        labels,
        normalization: norm.clone(),
        augmentation: Augmentation::None,
    };
    Ok((
        make(Split::Train, train_images, train_labels),
        make(Split::Eval, eval_images, eval_labels),
    ))
}
