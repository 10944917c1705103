//! Dense tensors and the numerical kernels everything else is built on.
//!
//! Convolutions follow the cross-correlation convention used by mainstream
//! deep-learning frameworks: the kernel is *not* flipped, so
//! `out[n, o, y, x] = sum_{c,i,j} w[o, c, i, j] * in[n, c, y*s + i - p, x*s + j - p]`
//! with out-of-range taps reading zero. Kernel composition in
//! [`crate::compression`] depends on this convention.
//!
//! Every kernel has a fixed summation order, so results are reproducible
//! run to run.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Element type tag stored in model manifests.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DType {
    #[serde(rename = "float32")]
    F32,
    #[serde(rename = "float64")]
    F64,
}

impl DType {
    pub fn size_of(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DType::F32 => "float32",
            DType::F64 => "float64",
        }
    }
}

impl std::str::FromStr for DType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "float32" | "f32" => Ok(DType::F32),
            "float64" | "f64" => Ok(DType::F64),
            other => Err(Error::InvalidArgument(format!("unknown dtype '{other}'"))),
        }
    }
}

/// Real scalar usable as a tensor element (`f32` for training, `f64` for
/// verification).
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Default + Debug + Display + Sum + Send + Sync + 'static
{
    const DTYPE: DType;

    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }

    /// `c <- alpha * a * b + beta * c` with explicit row/column strides.
    ///
    /// # Safety
    /// The strides and dimensions must describe in-bounds views of the three
    /// buffers.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn write_le(self, out: &mut Vec<u8>);

    fn read_le(bytes: &[u8]) -> Self;
}

impl Scalar for f32 {
    const DTYPE: DType = DType::F32;

    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> f32 {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

impl Scalar for f64 {
    const DTYPE: DType = DType::F64;

    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> f64 {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}

/// Row-major `(rows x k) * (k x cols)` product of dense slices into `out`.
/// When `accumulate` is set the product is added to `out`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm_into<T: Scalar>(
    a: &[T],
    a_transposed: bool,
    b: &[T],
    b_transposed: bool,
    out: &mut [T],
    rows: usize,
    inner: usize,
    cols: usize,
    accumulate: bool,
) {
    debug_assert_eq!(a.len(), rows * inner);
    debug_assert_eq!(b.len(), inner * cols);
    debug_assert_eq!(out.len(), rows * cols);
    if rows == 0 || cols == 0 {
        return;
    }
    let (rsa, csa) = if a_transposed {
        (1, rows as isize)
    } else {
        (inner as isize, 1)
    };
    let (rsb, csb) = if b_transposed {
        (1, inner as isize)
    } else {
        (cols as isize, 1)
    };
    let beta = if accumulate { T::one() } else { T::zero() };
    // SAFETY: the debug assertions above pin every buffer to the exact size
    // implied by (rows, inner, cols) and the strides stay within them.
    unsafe {
        T::gemm(
            rows,
            inner,
            cols,
            T::one(),
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            out.as_mut_ptr(),
            cols as isize,
            1,
        );
    }
}

/// Dense 4-D array in `(batch, channels, rows, cols)` order.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor4<T> {
    shape: [usize; 4],
    data: Vec<T>,
}

impl<T: Scalar> Tensor4<T> {
    pub fn new(shape: [usize; 4], data: Vec<T>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::Shape(format!("tensor dimensions must be >= 1, got {shape:?}")));
        }
        let expected = shape.iter().product::<usize>();
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "tensor of shape {shape:?} needs {expected} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor4 { shape, data })
    }

    pub fn zeros(shape: [usize; 4]) -> Self {
        assert!(shape.iter().all(|&d| d > 0), "tensor dimensions must be >= 1");
        Tensor4 {
            shape,
            data: vec![T::zero(); shape.iter().product()],
        }
    }

    pub fn from_fn(shape: [usize; 4], mut f: impl FnMut([usize; 4]) -> T) -> Self {
        let mut t = Self::zeros(shape);
        let [n, c, h, w] = shape;
        let mut idx = 0;
        for a in 0..n {
            for b in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        t.data[idx] = f([a, b, y, x]);
                        idx += 1;
                    }
                }
            }
        }
        t
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn height(&self) -> usize {
        self.shape[2]
    }

    pub fn width(&self) -> usize {
        self.shape[3]
    }

    /// Elements per batch entry.
    pub fn sample_len(&self) -> usize {
        self.shape[1] * self.shape[2] * self.shape[3]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn sample(&self, n: usize) -> &[T] {
        let len = self.sample_len();
        &self.data[n * len..(n + 1) * len]
    }

    pub fn get(&self, n: usize, c: usize, y: usize, x: usize) -> T {
        let [_, cs, hs, ws] = self.shape;
        self.data[((n * cs + c) * hs + y) * ws + x]
    }

    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, v: T) {
        let [_, cs, hs, ws] = self.shape;
        self.data[((n * cs + c) * hs + y) * ws + x] = v;
    }

    pub fn reshape(self, shape: [usize; 4]) -> Result<Self> {
        Self::new(shape, self.data)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor4 {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor4<U> {
        Tensor4 {
            shape: self.shape,
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }

    /// Largest element-wise absolute difference, computed in f64.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "cannot compare tensors of shape {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        Ok(max_abs_diff(&self.data, &other.data))
    }
}

pub(crate) fn max_abs_diff<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x.as_f64() - y.as_f64()).abs())
        .fold(0.0, f64::max)
}

/// Square convolution kernel in `(out_channels, in_channels, k, k)` order.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvKernel<T> {
    out_channels: usize,
    in_channels: usize,
    size: usize,
    data: Vec<T>,
}

impl<T: Scalar> ConvKernel<T> {
    pub fn new(out_channels: usize, in_channels: usize, size: usize, data: Vec<T>) -> Result<Self> {
        if out_channels == 0 || in_channels == 0 {
            return Err(Error::Shape("kernel channel counts must be >= 1".into()));
        }
        if size == 0 || size.is_multiple_of(2) {
            return Err(Error::Shape(format!("kernel size must be odd, got {size}")));
        }
        let expected = out_channels * in_channels * size * size;
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "kernel ({out_channels}, {in_channels}, {size}, {size}) needs {expected} elements, got {}",
                data.len()
            )));
        }
        Ok(ConvKernel {
            out_channels,
            in_channels,
            size,
            data,
        })
    }

    pub fn zeros(out_channels: usize, in_channels: usize, size: usize) -> Self {
        let len = out_channels * in_channels * size * size;
        Self::new(out_channels, in_channels, size, vec![T::zero(); len]).expect("valid kernel shape")
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    fn index(&self, o: usize, i: usize, y: usize, x: usize) -> usize {
        ((o * self.in_channels + i) * self.size + y) * self.size + x
    }

    pub fn get(&self, o: usize, i: usize, y: usize, x: usize) -> T {
        self.data[self.index(o, i, y, x)]
    }

    pub fn set(&mut self, o: usize, i: usize, y: usize, x: usize, v: T) {
        let idx = self.index(o, i, y, x);
        self.data[idx] = v;
    }

    pub fn cast<U: Scalar>(&self) -> ConvKernel<U> {
        ConvKernel {
            out_channels: self.out_channels,
            in_channels: self.in_channels,
            size: self.size,
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }
}

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "matrix {rows}x{cols} needs {} elements, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    /// Matrix-vector product `self * v`.
    pub fn apply(&self, v: &[T]) -> Result<Vec<T>> {
        if v.len() != self.cols {
            return Err(Error::Shape(format!(
                "cannot apply {}x{} matrix to vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows)
            .map(|r| {
                let row = &self.data[r * self.cols..(r + 1) * self.cols];
                row.iter().zip(v).fold(T::zero(), |acc, (&a, &b)| acc + a * b)
            })
            .collect())
    }

    pub fn cast<U: Scalar>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        if (self.rows, self.cols) != (other.rows, other.cols) {
            return Err(Error::Shape(format!(
                "cannot compare {}x{} with {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(max_abs_diff(&self.data, &other.data))
    }
}

/// Standard matrix product. Each output entry sums over the inner index in
/// increasing order.
pub fn matmul<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if a.cols != b.rows {
        return Err(Error::Shape(format!(
            "matmul of {}x{} by {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let a_row = &a.data[i * a.cols..(i + 1) * a.cols];
        let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for (k, &aik) in a_row.iter().enumerate() {
            let b_row = &b.data[k * b.cols..(k + 1) * b.cols];
            for (o, &bkj) in out_row.iter_mut().zip(b_row) {
                *o = *o + aik * bkj;
            }
        }
    }
    Ok(out)
}

/// Output extent of a convolution or pooling window, or `None` when the
/// window does not fit.
pub fn conv_output_size(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    if stride == 0 {
        return None;
    }
    let padded = input + 2 * padding;
    if padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

struct ConvGeometry {
    channels: usize,
    height: usize,
    width: usize,
    size: usize,
    stride: usize,
    padding: usize,
    out_h: usize,
    out_w: usize,
}

impl ConvGeometry {
    fn patch_len(&self) -> usize {
        self.channels * self.size * self.size
    }

    fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Unfolds one sample into a `(C*k*k) x (OH*OW)` column matrix.
    fn im2col<T: Scalar>(&self, sample: &[T], cols: &mut [T]) {
        let positions = self.positions();
        let (k, s, p) = (self.size, self.stride, self.padding as isize);
        for c in 0..self.channels {
            let plane = &sample[c * self.height * self.width..(c + 1) * self.height * self.width];
            for i in 0..k {
                for j in 0..k {
                    let row = (c * k + i) * k + j;
                    let dst = &mut cols[row * positions..(row + 1) * positions];
                    for oy in 0..self.out_h {
                        let y = (oy * s + i) as isize - p;
                        let line = &mut dst[oy * self.out_w..(oy + 1) * self.out_w];
                        if y < 0 || y >= self.height as isize {
                            line.fill(T::zero());
                            continue;
                        }
                        let src = &plane[y as usize * self.width..(y as usize + 1) * self.width];
                        for (ox, v) in line.iter_mut().enumerate() {
                            let x = (ox * s + j) as isize - p;
                            *v = if x < 0 || x >= self.width as isize {
                                T::zero()
                            } else {
                                src[x as usize]
                            };
                        }
                    }
                }
            }
        }
    }

    /// Scatter-adds a column matrix back onto one sample's gradient.
    fn col2im<T: Scalar>(&self, cols: &[T], sample: &mut [T]) {
        let positions = self.positions();
        let (k, s, p) = (self.size, self.stride, self.padding as isize);
        for c in 0..self.channels {
            let plane = &mut sample[c * self.height * self.width..(c + 1) * self.height * self.width];
            for i in 0..k {
                for j in 0..k {
                    let row = (c * k + i) * k + j;
                    let src = &cols[row * positions..(row + 1) * positions];
                    for oy in 0..self.out_h {
                        let y = (oy * s + i) as isize - p;
                        if y < 0 || y >= self.height as isize {
                            continue;
                        }
                        for ox in 0..self.out_w {
                            let x = (ox * s + j) as isize - p;
                            if x < 0 || x >= self.width as isize {
                                continue;
                            }
                            let dst = &mut plane[y as usize * self.width + x as usize];
                            *dst = *dst + src[oy * self.out_w + ox];
                        }
                    }
                }
            }
        }
    }
}

fn conv_geometry<T: Scalar>(
    input_shape: [usize; 4],
    kernel: &ConvKernel<T>,
    stride: usize,
    padding: usize,
) -> Result<ConvGeometry> {
    let [_, c, h, w] = input_shape;
    if c != kernel.in_channels {
        return Err(Error::Shape(format!(
            "convolution expects {} input channels, got {c}",
            kernel.in_channels
        )));
    }
    if stride == 0 {
        return Err(Error::Shape("convolution stride must be positive".into()));
    }
    let k = kernel.size;
    let (out_h, out_w) = match (
        conv_output_size(h, k, stride, padding),
        conv_output_size(w, k, stride, padding),
    ) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(Error::Shape(format!(
                "{k}x{k} convolution with padding {padding} does not fit a {h}x{w} input"
            )))
        }
    };
    Ok(ConvGeometry {
        channels: c,
        height: h,
        width: w,
        size: k,
        stride,
        padding,
        out_h,
        out_w,
    })
}

/// 2-D cross-correlation with zero padding.
pub fn conv2d_forward<T: Scalar>(
    input: &Tensor4<T>,
    kernel: &ConvKernel<T>,
    bias: Option<&[T]>,
    stride: usize,
    padding: usize,
) -> Result<Tensor4<T>> {
    let geo = conv_geometry(input.shape, kernel, stride, padding)?;
    let out_c = kernel.out_channels;
    if let Some(b) = bias {
        if b.len() != out_c {
            return Err(Error::Shape(format!(
                "bias has {} entries for {out_c} output channels",
                b.len()
            )));
        }
    }
    let n = input.batch();
    let positions = geo.positions();
    let mut out = Tensor4::zeros([n, out_c, geo.out_h, geo.out_w]);
    let mut cols = vec![T::zero(); geo.patch_len() * positions];
    for s in 0..n {
        geo.im2col(input.sample(s), &mut cols);
        let dst = &mut out.data[s * out_c * positions..(s + 1) * out_c * positions];
        gemm_into(
            &kernel.data,
            false,
            &cols,
            false,
            dst,
            out_c,
            geo.patch_len(),
            positions,
            false,
        );
        if let Some(b) = bias {
            for (o, chunk) in dst.chunks_mut(positions).enumerate() {
                chunk.iter_mut().for_each(|v| *v = *v + b[o]);
            }
        }
    }
    Ok(out)
}

/// Gradients of a convolution with respect to its input, kernel and bias.
pub struct ConvGrads<T> {
    pub input: Option<Tensor4<T>>,
    pub kernel: Vec<T>,
    pub bias: Vec<T>,
}

pub fn conv2d_backward<T: Scalar>(
    input: &Tensor4<T>,
    kernel: &ConvKernel<T>,
    grad_output: &Tensor4<T>,
    stride: usize,
    padding: usize,
    need_input_grad: bool,
) -> Result<ConvGrads<T>> {
    let geo = conv_geometry(input.shape, kernel, stride, padding)?;
    let out_c = kernel.out_channels;
    let n = input.batch();
    if grad_output.shape != [n, out_c, geo.out_h, geo.out_w] {
        return Err(Error::Shape(format!(
            "output gradient has shape {:?}, expected {:?}",
            grad_output.shape,
            [n, out_c, geo.out_h, geo.out_w]
        )));
    }
    let positions = geo.positions();
    let patch = geo.patch_len();
    let mut grad_kernel = vec![T::zero(); kernel.data.len()];
    let mut grad_bias = vec![T::zero(); out_c];
    let mut grad_input = need_input_grad.then(|| Tensor4::zeros(input.shape));
    let mut cols = vec![T::zero(); patch * positions];
    let mut grad_cols = vec![T::zero(); patch * positions];
    for s in 0..n {
        let g = &grad_output.data[s * out_c * positions..(s + 1) * out_c * positions];
        for (o, chunk) in g.chunks(positions).enumerate() {
            grad_bias[o] = grad_bias[o] + chunk.iter().copied().sum::<T>();
        }
        geo.im2col(input.sample(s), &mut cols);
        // dW += dY (out_c x P) * cols^T (P x patch)
        gemm_into(g, false, &cols, true, &mut grad_kernel, out_c, positions, patch, true);
        if let Some(gi) = grad_input.as_mut() {
            // dcols = W^T (patch x out_c) * dY (out_c x P)
            gemm_into(
                &kernel.data,
                true,
                g,
                false,
                &mut grad_cols,
                patch,
                out_c,
                positions,
                false,
            );
            let len = input.sample_len();
            geo.col2im(&grad_cols, &mut gi.data[s * len..(s + 1) * len]);
        }
    }
    Ok(ConvGrads {
        input: grad_input,
        kernel: grad_kernel,
        bias: grad_bias,
    })
}

/// Max pooling over `k x k` windows. Returns the pooled tensor and, per
/// output element, the linear index into `input.data()` of the winning
/// element. Ties go to the lowest linear index.
pub fn maxpool2d<T: Scalar>(input: &Tensor4<T>, k: usize, stride: usize) -> Result<(Tensor4<T>, Vec<usize>)> {
    let [n, c, h, w] = input.shape;
    if k == 0 || stride == 0 {
        return Err(Error::Shape("pooling window and stride must be positive".into()));
    }
    let (out_h, out_w) = match (conv_output_size(h, k, stride, 0), conv_output_size(w, k, stride, 0)) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::Shape(format!("{k}x{k} pooling does not fit a {h}x{w} input"))),
    };
    let mut out = Tensor4::zeros([n, c, out_h, out_w]);
    let mut indices = Vec::with_capacity(out.data.len());
    let mut o = 0;
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..out_h {
            for ox in 0..out_w {
                let mut best_idx = base + oy * stride * w + ox * stride;
                let mut best = input.data[best_idx];
                for i in 0..k {
                    for j in 0..k {
                        let idx = base + (oy * stride + i) * w + ox * stride + j;
                        if input.data[idx] > best {
                            best = input.data[idx];
                            best_idx = idx;
                        }
                    }
                }
                out.data[o] = best;
                indices.push(best_idx);
                o += 1;
            }
        }
    }
    Ok((out, indices))
}

/// Routes pooled gradients back to the recorded argmax positions.
pub fn maxpool2d_backward<T: Scalar>(
    grad_output: &Tensor4<T>,
    indices: &[usize],
    input_shape: [usize; 4],
) -> Result<Tensor4<T>> {
    if indices.len() != grad_output.data.len() {
        return Err(Error::Shape("pooling indices do not match the output gradient".into()));
    }
    let mut grad = Tensor4::zeros(input_shape);
    for (&idx, &g) in indices.iter().zip(&grad_output.data) {
        grad.data[idx] = grad.data[idx] + g;
    }
    Ok(grad)
}
