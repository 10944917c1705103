//! Exact algebraic folding of expansion units back into single layers.
//!
//! Fully-connected chains fold by matrix product. Convolution chains fold
//! pairwise in kernel space: with the cross-correlation convention, running
//! `first` (stride 1) then `second` equals one convolution whose kernel is
//! the full 2-D convolution of the two kernels,
//!
//! ```text
//! K[n, m, u, v] = sum_p sum_{a + i = u, b + j = v} second[n, p, a, b] * first[p, m, i, j]
//! ```
//!
//! of size `k1 + k2 - 1`. The identity only holds when `second` reads no
//! zero padding: padding on a later layer would inject zeros where the
//! folded layer sees the extended response of the earlier one. Expansion
//! therefore places all padding on the unit's first layer, and every
//! composition here rejects padding on the second operand. A bias on the
//! first layer is then a constant field and folds into
//! `b'[n] = sum_{p,a,b} second[n, p, a, b] * first_bias[p] + second_bias[n]`.

use crate::error::{Error, Result};
use crate::expansion::{ExpansionUnit, Strategy};
use crate::graph::{Conv2d, Layer, LayerSpec, Linear, NetworkGraph};
use crate::tensor::{conv_output_size, gemm_into, matmul, ConvKernel, Matrix, Scalar};

/// Largest input or output element count [`build_conv_matrix`] will accept.
pub const CONV_MATRIX_LIMIT: usize = 4096;

/// Folds a chain of fully-connected layers (applied first to last) into one.
pub fn collapse_fc_chain<T: Scalar>(layers: &[&Linear<T>]) -> Result<Linear<T>> {
    let (first, rest) = layers
        .split_first()
        .ok_or_else(|| Error::Compression("empty fully-connected chain".into()))?;
    let mut weight = first.weight.clone();
    let mut bias = first.bias.clone();
    for (i, layer) in rest.iter().enumerate() {
        if layer.in_features() != weight.rows() {
            return Err(Error::Shape(format!(
                "chain layer {} expects {} inputs but layer {} produces {}",
                i + 1,
                layer.in_features(),
                i,
                weight.rows()
            )));
        }
        weight = matmul(&layer.weight, &weight)?;
        bias = match (bias, &layer.bias) {
            (None, None) => None,
            (Some(b), own) => {
                let mut folded = layer.weight.apply(&b)?;
                if let Some(own) = own {
                    folded.iter_mut().zip(own).for_each(|(v, &o)| *v = *v + o);
                }
                Some(folded)
            }
            (None, Some(own)) => Some(own.clone()),
        };
    }
    Linear::new(weight, bias)
}

/// Folds `second(first(x))` into one convolution.
///
/// `first` must have stride 1 unless `second` is a plain 1x1 channel mix
/// (stride is then the product). `second` must not pad.
pub fn compose_conv_pair<T: Scalar>(first: &Conv2d<T>, second: &Conv2d<T>) -> Result<Conv2d<T>> {
    let (k1, k2) = (first.kernel.size(), second.kernel.size());
    let (m, p_mid, n) = (
        first.kernel.in_channels(),
        first.kernel.out_channels(),
        second.kernel.out_channels(),
    );
    if second.kernel.in_channels() != p_mid {
        return Err(Error::Shape(format!(
            "second layer expects {} channels, first produces {p_mid}",
            second.kernel.in_channels()
        )));
    }
    if second.padding != 0 {
        return Err(Error::Inexact(format!(
            "the second layer pads by {}; its zero border would differ from the first layer's response there",
            second.padding
        )));
    }
    let s1 = first.stride;
    if s1 != 1 && k2 != 1 {
        return Err(Error::Inexact(format!(
            "first layer has stride {s1}; only a 1x1 second layer composes with a strided first layer"
        )));
    }
    // s1 == 1 or k2 == 1, so this is k1 + k2 - 1 in every accepted case.
    let size = s1 * (k2 - 1) + k1;
    // Each pair of taps contributes an (n x p_mid) . (p_mid x m) channel mix
    // to output tap (s1*a + i, s1*b + j).
    let second_taps = tap_matrices(&second.kernel);
    let first_taps = tap_matrices(&first.kernel);
    let mut taps = vec![T::zero(); size * size * n * m];
    for a in 0..k2 {
        for b in 0..k2 {
            let w2 = &second_taps[(a * k2 + b) * n * p_mid..][..n * p_mid];
            for i in 0..k1 {
                for j in 0..k1 {
                    let w1 = &first_taps[(i * k1 + j) * p_mid * m..][..p_mid * m];
                    let (u, v) = (s1 * a + i, s1 * b + j);
                    let out = &mut taps[(u * size + v) * n * m..][..n * m];
                    gemm_into(w2, false, w1, false, out, n, p_mid, m, true);
                }
            }
        }
    }
    let mut kernel = ConvKernel::zeros(n, m, size);
    for u in 0..size {
        for v in 0..size {
            let tap = &taps[(u * size + v) * n * m..][..n * m];
            for o in 0..n {
                for c in 0..m {
                    kernel.set(o, c, u, v, tap[o * m + c]);
                }
            }
        }
    }
    let bias = match (&first.bias, &second.bias) {
        (None, None) => None,
        (first_bias, second_bias) => {
            let mut folded = second_bias.clone().unwrap_or_else(|| vec![T::zero(); n]);
            if let Some(fb) = first_bias {
                for (o, f) in folded.iter_mut().enumerate() {
                    let mut acc = T::zero();
                    for (p, &bp) in fb.iter().enumerate() {
                        let tap_sum = (0..k2 * k2)
                            .map(|t| second.kernel.get(o, p, t / k2, t % k2))
                            .fold(T::zero(), |s, w| s + w);
                        acc = acc + tap_sum * bp;
                    }
                    *f = *f + acc;
                }
            }
            Some(folded)
        }
    };
    Conv2d::new(kernel, bias, s1 * second.stride, first.padding)
}

/// Kernel rearranged as `size * size` row-major `out x in` matrices.
fn tap_matrices<T: Scalar>(k: &ConvKernel<T>) -> Vec<T> {
    let (n, m, size) = (k.out_channels(), k.in_channels(), k.size());
    let mut taps = vec![T::zero(); size * size * n * m];
    for o in 0..n {
        for c in 0..m {
            for u in 0..size {
                for v in 0..size {
                    taps[(u * size + v) * n * m + o * m + c] = k.get(o, c, u, v);
                }
            }
        }
    }
    taps
}

fn conv_params(spec: &LayerSpec) -> Option<(usize, usize, usize, usize, usize, bool)> {
    match *spec {
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel_size,
            stride,
            padding,
            bias,
        } => Some((in_channels, out_channels, kernel_size, stride, padding, bias)),
        _ => None,
    }
}

/// Folds the convolution chain of one CL or CK unit, checking it still has
/// the layout expansion produced.
pub fn collapse_conv_chain<T: Scalar>(unit: &ExpansionUnit, layers: &[&Conv2d<T>]) -> Result<Conv2d<T>> {
    let (m, n, k, s, p, _) = conv_params(&unit.original).ok_or_else(|| {
        Error::Compression(format!(
            "unit original is a {}, not a convolution",
            unit.original.kind_name()
        ))
    })?;
    if layers.len() != unit.len || layers.is_empty() {
        return Err(Error::Compression(format!(
            "unit spans {} layers but {} were supplied",
            unit.len,
            layers.len()
        )));
    }
    let last = layers.len() - 1;
    let (sizes, strides): (Vec<usize>, Vec<usize>) = match unit.strategy {
        Strategy::Cl => (vec![1, k, 1], vec![1, s, 1]),
        Strategy::Ck => {
            let depth = (k.saturating_sub(1)) / 2;
            let mut strides = vec![1; depth];
            if let Some(l) = strides.last_mut() {
                *l = s;
            }
            (vec![3; depth], strides)
        }
        Strategy::Fc => return Err(Error::Compression("FC unit given to the convolution folder".into())),
    };
    if sizes.len() != layers.len() {
        return Err(Error::Compression(format!(
            "{} unit for a {k}x{k} kernel needs {} layers, found {}",
            unit.strategy.label(),
            sizes.len(),
            layers.len()
        )));
    }
    for (i, layer) in layers.iter().enumerate() {
        let want_pad = if i == 0 { p } else { 0 };
        if layer.kernel.size() != sizes[i] || layer.stride != strides[i] || layer.padding != want_pad {
            return Err(Error::Compression(format!(
                "layer {i} of the unit is {0}x{0} stride {1} padding {2}, expected {3}x{3} stride {4} padding {want_pad}",
                layer.kernel.size(),
                layer.stride,
                layer.padding,
                sizes[i],
                strides[i]
            )));
        }
        if i != last && layer.bias.is_some() {
            return Err(Error::Compression(format!(
                "interior layer {i} of the unit carries a bias"
            )));
        }
    }
    let mut folded = layers[0].clone();
    for layer in &layers[1..] {
        folded = compose_conv_pair(&folded, layer)?;
    }
    if folded.spec() != unit.original {
        return Err(Error::Compression(format!(
            "folded layer {:?} does not match the original {:?} (m={m}, n={n})",
            folded.spec(),
            unit.original
        )));
    }
    Ok(folded)
}

fn collapse_unit<T: Scalar>(unit: &ExpansionUnit, layers: &[Layer<T>]) -> Result<Layer<T>> {
    match unit.strategy {
        Strategy::Fc => {
            let chain = layers
                .iter()
                .enumerate()
                .map(|(i, l)| match l {
                    Layer::Linear(lin) => Ok(lin),
                    other => Err(Error::Compression(format!(
                        "layer {i} of the unit is {}, not linear",
                        other.spec().kind_name()
                    ))),
                })
                .collect::<Result<Vec<_>>>()?;
            let interior_bias = chain[..chain.len().saturating_sub(1)].iter().any(|l| l.bias.is_some());
            if interior_bias {
                return Err(Error::Compression("interior layer of the unit carries a bias".into()));
            }
            let folded = collapse_fc_chain(&chain)?;
            if folded.spec() != unit.original {
                return Err(Error::Compression(format!(
                    "folded layer {:?} does not match the original {:?}",
                    folded.spec(),
                    unit.original
                )));
            }
            Ok(Layer::Linear(folded))
        }
        Strategy::Cl | Strategy::Ck => {
            let chain = layers
                .iter()
                .enumerate()
                .map(|(i, l)| match l {
                    Layer::Conv2d(c) => Ok(c),
                    other => Err(Error::Compression(format!(
                        "layer {i} of the unit is {}, not a convolution",
                        other.spec().kind_name()
                    ))),
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Layer::Conv2d(collapse_conv_chain(unit, &chain)?))
        }
    }
}

/// Folds every expansion unit, recovering the compact architecture.
pub fn compress_network<T: Scalar>(expanded: &NetworkGraph<T>) -> Result<NetworkGraph<T>> {
    let units = expanded
        .units
        .as_ref()
        .ok_or_else(|| Error::Compression("network carries no expansion units".into()))?;
    let mut sorted: Vec<(usize, &ExpansionUnit)> = units.iter().enumerate().collect();
    sorted.sort_by_key(|(_, u)| u.start);

    let mut layers = Vec::new();
    let mut next = 0;
    for (id, unit) in sorted {
        if unit.start < next || unit.start + unit.len > expanded.layers.len() {
            return Err(Error::Compression(format!("unit {id} has an invalid layer range")));
        }
        layers.extend(expanded.layers[next..unit.start].iter().cloned());
        let folded = collapse_unit(unit, &expanded.layers[unit.range()]).map_err(|e| {
            Error::Compression(format!(
                "unit {id} ({} at layers {}..{}): {e}",
                unit.strategy.label(),
                unit.start,
                unit.start + unit.len
            ))
        })?;
        layers.push(folded);
        next = unit.start + unit.len;
    }
    layers.extend(expanded.layers[next..].iter().cloned());

    let net = NetworkGraph {
        name: expanded.name.clone(),
        input_shape: expanded.input_shape,
        num_classes: expanded.num_classes,
        layers,
        units: None,
        expansion: expanded.expansion.clone(),
        preprocessing: expanded.preprocessing.clone(),
    };
    net.validate()?;
    Ok(net)
}

/// Explicit matrix of the linear part (bias excluded) of a convolution on an
/// `h x w` input: `vec(conv(x)) = A * vec(x)`, with zero padding realized by
/// dropping out-of-range taps. Test oracle only; size-guarded.
pub fn build_conv_matrix<T: Scalar>(layer: &Conv2d<T>, input_hw: (usize, usize)) -> Result<Matrix<T>> {
    let (h, w) = input_hw;
    let (m, n, k) = (
        layer.kernel.in_channels(),
        layer.kernel.out_channels(),
        layer.kernel.size(),
    );
    let (s, p) = (layer.stride, layer.padding);
    let (oh, ow) = match (conv_output_size(h, k, s, p), conv_output_size(w, k, s, p)) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::Shape(format!("{k}x{k} convolution does not fit {h}x{w}"))),
    };
    let (cols, rows) = (m * h * w, n * oh * ow);
    if cols > CONV_MATRIX_LIMIT || rows > CONV_MATRIX_LIMIT {
        return Err(Error::InvalidArgument(format!(
            "convolution matrix {rows}x{cols} exceeds the {CONV_MATRIX_LIMIT} element side limit"
        )));
    }
    let mut a = Matrix::zeros(rows, cols);
    for o in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                let row = (o * oh + oy) * ow + ox;
                for c in 0..m {
                    for i in 0..k {
                        let y = (oy * s + i) as isize - p as isize;
                        if y < 0 || y >= h as isize {
                            continue;
                        }
                        for j in 0..k {
                            let x = (ox * s + j) as isize - p as isize;
                            if x < 0 || x >= w as isize {
                                continue;
                            }
                            let col = (c * h + y as usize) * w + x as usize;
                            a.set(row, col, a.get(row, col) + layer.kernel.get(o, c, i, j));
                        }
                    }
                }
            }
        }
    }
    Ok(a)
}
