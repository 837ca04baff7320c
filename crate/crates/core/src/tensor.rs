// SPDX-License-Identifier: Apache-2.0

//! Dense NCHW tensors and the reference kernels every other module is
//! checked against.
//!
//! All kernels here are naive direct loops. They are the ground truth for
//! the fused (reparameterized) and sparse variants built on top of them.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Element type tag used by the weight container.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    F64,
}

/// Floating point element type of a [`Tensor`].
pub trait Scalar:
    Float + Sum + Debug + Display + Default + Send + Sync + 'static
{
    const DTYPE: DType;

    fn of(v: f64) -> Self;

    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    const DTYPE: DType = DType::F32;

    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    const DTYPE: DType = DType::F64;

    #[inline]
    fn of(v: f64) -> Self {
        v
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

/// Rank-4 tensor in (batch, channel, height, width) order, row-major.
#[derive(Clone, PartialEq)]
pub struct Tensor<T> {
    shape: [usize; 4],
    data: Vec<T>,
}

impl<T: Debug> Debug for Tensor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("len", &self.data.len())
            .finish()
    }
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: [usize; 4], data: Vec<T>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if data.len() != len {
            return Err(Error::shape("Tensor::new", "data length", len, data.len()));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: [usize; 4]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: [usize; 4], value: T) -> Self {
        Self {
            shape,
            data: vec![value; shape.iter().product()],
        }
    }

    /// Builds a tensor by evaluating `f(n, c, y, x)` at every position.
    pub fn from_fn(shape: [usize; 4], mut f: impl FnMut(usize, usize, usize, usize) -> T) -> Self {
        let [n, c, h, w] = shape;
        let mut data = Vec::with_capacity(n * c * h * w);
        for ni in 0..n {
            for ci in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        data.push(f(ni, ci, y, x));
                    }
                }
            }
        }
        Self { shape, data }
    }

    #[inline]
    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    #[inline]
    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.shape[2]
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.shape[3]
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        let [_, cs, hs, ws] = self.shape;
        ((n * cs + c) * hs + y) * ws + x
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> T {
        self.data[self.index(n, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, v: T) {
        let i = self.index(n, c, y, x);
        self.data[i] = v;
    }

    /// Contiguous `h * w` plane of one (batch, channel) pair.
    pub fn plane(&self, n: usize, c: usize) -> &[T] {
        let hw = self.shape[2] * self.shape[3];
        let start = (n * self.shape[1] + c) * hw;
        &self.data[start..start + hw]
    }

    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [T] {
        let hw = self.shape[2] * self.shape[3];
        let start = (n * self.shape[1] + c) * hw;
        &mut self.data[start..start + hw]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn reshape(self, shape: [usize; 4]) -> Result<Self> {
        Self::new(shape, self.data)
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| U::of(v.as_f64())).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape("add", other)?;
        Ok(Self {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a + b)
                .collect(),
        })
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.check_same_shape("add_assign", other)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
        Ok(())
    }

    pub fn scale(&self, k: T) -> Self {
        self.map(|v| v * k)
    }

    /// Largest absolute elementwise difference, in f64.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.check_same_shape("max_abs_diff", other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a.as_f64() - b.as_f64()).abs())
            .fold(0.0, f64::max))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn check_same_shape(&self, op: &'static str, other: &Self) -> Result<()> {
        const DIMS: [&str; 4] = ["batch", "channels", "height", "width"];
        for (i, dim) in DIMS.iter().enumerate() {
            if self.shape[i] != other.shape[i] {
                return Err(Error::shape(op, dim, self.shape[i], other.shape[i]));
            }
        }
        Ok(())
    }
}

/// Convolution weights, bias and geometry.
///
/// `weight` is stored as a rank-4 tensor with layout
/// `(out_channels, in_channels / groups, kh, kw)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<T> {
    pub weight: Tensor<T>,
    pub bias: Vec<T>,
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

impl<T: Scalar> ConvParams<T> {
    pub fn new(
        weight: Tensor<T>,
        bias: Vec<T>,
        stride: usize,
        padding: usize,
        groups: usize,
    ) -> Result<Self> {
        let p = Self {
            weight,
            bias,
            stride,
            padding,
            groups,
        };
        p.validate()?;
        Ok(p)
    }

    /// Zero-bias convolution with all-zero weights.
    pub fn zeros(
        out_ch: usize,
        in_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        groups: usize,
    ) -> Self {
        Self {
            weight: Tensor::zeros([out_ch, in_ch / groups, kernel, kernel]),
            bias: vec![T::zero(); out_ch],
            stride,
            padding,
            groups,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let out = self.out_channels();
        if self.groups == 0 {
            return Err(Error::invalid("conv2d", "groups must be positive"));
        }
        if self.stride == 0 {
            return Err(Error::invalid("conv2d", "stride must be positive"));
        }
        if !out.is_multiple_of(self.groups) {
            return Err(Error::invalid(
                "conv2d",
                format!("out_channels {out} not divisible by groups {}", self.groups),
            ));
        }
        if self.bias.len() != out {
            return Err(Error::shape("conv2d", "bias length", out, self.bias.len()));
        }
        Ok(())
    }

    #[inline]
    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    #[inline]
    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1] * self.groups
    }

    #[inline]
    pub fn kernel(&self) -> (usize, usize) {
        (self.weight.shape()[2], self.weight.shape()[3])
    }

    pub fn is_depthwise(&self) -> bool {
        self.groups == self.out_channels() && self.weight.shape()[1] == 1
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    /// Output spatial size for an `h x w` input.
    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (kh, kw) = self.kernel();
        let ph = h + 2 * self.padding;
        let pw = w + 2 * self.padding;
        if ph < kh {
            return Err(Error::shape("conv2d", "padded height", kh, ph));
        }
        if pw < kw {
            return Err(Error::shape("conv2d", "padded width", kw, pw));
        }
        Ok(((ph - kh) / self.stride + 1, (pw - kw) / self.stride + 1))
    }

    /// Output shape for `input`, validating channel compatibility.
    pub fn output_shape(&self, input: &Tensor<T>) -> Result<[usize; 4]> {
        self.validate()?;
        if input.channels() != self.in_channels() {
            return Err(Error::shape(
                "conv2d",
                "input channels",
                self.in_channels(),
                input.channels(),
            ));
        }
        let (oh, ow) = self.output_hw(input.height(), input.width())?;
        Ok([input.batch(), self.out_channels(), oh, ow])
    }

    /// One output value: the direct sum over the receptive field of
    /// `(n, oc, oy, ox)`. `read` supplies input values and may be used to
    /// substitute zeros for masked positions.
    #[inline]
    pub(crate) fn dot_at(
        &self,
        input: &Tensor<T>,
        n: usize,
        oc: usize,
        oy: usize,
        ox: usize,
        read: &impl Fn(usize, usize, usize, usize) -> T,
    ) -> T {
        let [_, icg, kh, kw] = self.weight.shape();
        let (h, w) = (input.height() as isize, input.width() as isize);
        let ocg = self.out_channels() / self.groups;
        let g = oc / ocg;
        let mut acc = self.bias[oc];
        for ic in 0..icg {
            let in_c = g * icg + ic;
            for ky in 0..kh {
                let iy = (oy * self.stride + ky) as isize - self.padding as isize;
                if iy < 0 || iy >= h {
                    continue;
                }
                for kx in 0..kw {
                    let ix = (ox * self.stride + kx) as isize - self.padding as isize;
                    if ix < 0 || ix >= w {
                        continue;
                    }
                    let wv = self.weight.at(oc, ic, ky, kx);
                    acc = acc + wv * read(n, in_c, iy as usize, ix as usize);
                }
            }
        }
        acc
    }
}

/// Inference-mode batch-norm statistics and affine parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct BnParams<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub eps: T,
}

impl<T: Scalar> BnParams<T> {
    /// The batch norm that maps every input to itself (eps = 0).
    pub fn identity(c: usize) -> Self {
        Self {
            gamma: vec![T::one(); c],
            beta: vec![T::zero(); c],
            running_mean: vec![T::zero(); c],
            running_var: vec![T::one(); c],
            eps: T::zero(),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.gamma.len();
        for (name, v) in [
            ("beta length", &self.beta),
            ("running_mean length", &self.running_mean),
            ("running_var length", &self.running_var),
        ] {
            if v.len() != c {
                return Err(Error::shape("batchnorm", name, c, v.len()));
            }
        }
        if self.running_var.iter().any(|&v| v < T::zero()) {
            return Err(Error::invalid("batchnorm", "negative running variance"));
        }
        if self.eps < T::zero() {
            return Err(Error::invalid("batchnorm", "negative eps"));
        }
        Ok(())
    }

    /// Per-channel `(scale, shift)` such that `bn(x) = scale * x + shift`.
    pub fn affine(&self) -> Vec<(T, T)> {
        (0..self.channels())
            .map(|c| {
                let s = self.gamma[c] / (self.running_var[c] + self.eps).sqrt();
                (s, self.beta[c] - self.running_mean[c] * s)
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        4 * self.channels()
    }
}

pub fn conv2d<T: Scalar>(input: &Tensor<T>, p: &ConvParams<T>) -> Result<Tensor<T>> {
    let shape = p.output_shape(input)?;
    let read = |n, c, y, x| input.at(n, c, y, x);
    let mut out = Tensor::zeros(shape);
    let [n, oc, oh, ow] = shape;
    let mut i = 0;
    for ni in 0..n {
        for c in 0..oc {
            for oy in 0..oh {
                for ox in 0..ow {
                    out.data[i] = p.dot_at(input, ni, c, oy, ox, &read);
                    i += 1;
                }
            }
        }
    }
    Ok(out)
}

pub fn batchnorm_apply<T: Scalar>(input: &Tensor<T>, p: &BnParams<T>) -> Result<Tensor<T>> {
    p.validate()?;
    if input.channels() != p.channels() {
        return Err(Error::shape(
            "batchnorm",
            "input channels",
            p.channels(),
            input.channels(),
        ));
    }
    let mut out = input.clone();
    for n in 0..input.batch() {
        for c in 0..input.channels() {
            let (g, b, m) = (p.gamma[c], p.beta[c], p.running_mean[c]);
            let denom = (p.running_var[c] + p.eps).sqrt();
            for v in out.plane_mut(n, c) {
                *v = g * (*v - m) / denom + b;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Gelu,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn eval<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Relu => x.max(T::zero()),
            Activation::Sigmoid => T::one() / (T::one() + (-x).exp()),
            Activation::Gelu => {
                let v = x.as_f64();
                T::of(0.5 * v * (1.0 + libm::erf(v / std::f64::consts::SQRT_2)))
            }
        }
    }
}

pub fn activation<T: Scalar>(input: &Tensor<T>, kind: Activation) -> Tensor<T> {
    input.map(|v| kind.eval(v))
}

pub fn global_avg_pool<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c, h, w] = input.shape();
    if h == 0 || w == 0 {
        return Err(Error::invalid("global_avg_pool", "empty spatial extent"));
    }
    let denom = T::of((h * w) as f64);
    Ok(Tensor::from_fn([n, c, 1, 1], |ni, ci, _, _| {
        input.plane(ni, ci).iter().copied().sum::<T>() / denom
    }))
}

/// Integer nearest-neighbour rescaling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resize {
    /// Replicate each pixel into a `k x k` block.
    Up(usize),
    /// Keep the top-left pixel of every `k x k` block.
    Down(usize),
}

pub fn resize_nearest<T: Scalar>(input: &Tensor<T>, factor: Resize) -> Result<Tensor<T>> {
    let [n, c, h, w] = input.shape();
    match factor {
        Resize::Up(0) | Resize::Down(0) => Err(Error::invalid("resize_nearest", "zero factor")),
        Resize::Up(k) => Ok(Tensor::from_fn([n, c, h * k, w * k], |ni, ci, y, x| {
            input.at(ni, ci, y / k, x / k)
        })),
        Resize::Down(k) => {
            if h % k != 0 || w % k != 0 {
                return Err(Error::invalid(
                    "resize_nearest",
                    format!("{h}x{w} is not divisible by downsample factor {k}"),
                ));
            }
            Ok(Tensor::from_fn([n, c, h / k, w / k], |ni, ci, y, x| {
                input.at(ni, ci, y * k, x * k)
            }))
        }
    }
}

/// Multiplies every plane `(n, c)` by `scales[(n, c)]` (shape `n x c x 1 x 1`).
pub fn scale_channels<T: Scalar>(input: &Tensor<T>, scales: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c, _, _] = input.shape();
    if scales.shape() != [n, c, 1, 1] {
        return Err(Error::shape("scale_channels", "channels", c, scales.channels()));
    }
    let mut out = input.clone();
    for ni in 0..n {
        for ci in 0..c {
            let s = scales.at(ni, ci, 0, 0);
            for v in out.plane_mut(ni, ci) {
                *v = *v * s;
            }
        }
    }
    Ok(out)
}

pub fn concat_channels<T: Scalar>(parts: &[Tensor<T>]) -> Result<Tensor<T>> {
    let first = parts
        .first()
        .ok_or_else(|| Error::invalid("concat_channels", "no inputs"))?;
    let [n, _, h, w] = first.shape();
    for p in parts {
        if p.batch() != n {
            return Err(Error::shape("concat_channels", "batch", n, p.batch()));
        }
        if p.height() != h || p.width() != w {
            return Err(Error::shape("concat_channels", "height", h, p.height()));
        }
    }
    let c: usize = parts.iter().map(|p| p.channels()).sum();
    let mut data = Vec::with_capacity(n * c * h * w);
    for ni in 0..n {
        for p in parts {
            for ci in 0..p.channels() {
                data.extend_from_slice(p.plane(ni, ci));
            }
        }
    }
    Tensor::new([n, c, h, w], data)
}

pub fn split_channels<T: Scalar>(input: &Tensor<T>, sizes: &[usize]) -> Result<Vec<Tensor<T>>> {
    let total: usize = sizes.iter().sum();
    if total != input.channels() {
        return Err(Error::shape(
            "split_channels",
            "sum of split sizes",
            input.channels(),
            total,
        ));
    }
    let [n, _, h, w] = input.shape();
    let mut offset = 0;
    let mut out = Vec::with_capacity(sizes.len());
    for &s in sizes {
        let mut data = Vec::with_capacity(n * s * h * w);
        for ni in 0..n {
            for ci in offset..offset + s {
                data.extend_from_slice(input.plane(ni, ci));
            }
        }
        out.push(Tensor::new([n, s, h, w], data)?);
        offset += s;
    }
    Ok(out)
}
