//! Small convolutional Q-network with hand-written backpropagation, Adam and
//! the Huber TD loss. Generic over `f32` (training) and `f64` (gradient
//! checks).

use std::fmt::Debug;

use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::render::{FRAME_SIZE, STACK_DEPTH};
use crate::rng;

pub trait Real: Float + Default + Debug + Send + Sync + std::iter::Sum + 'static {
    /// `c <- alpha * a * b + beta * c` on strided row/column layouts.
    ///
    /// # Safety
    /// Pointers and strides must describe valid `m x k`, `k x n` and
    /// `m x n` matrices.
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
    fn cast(v: f64) -> Self;
    fn widen(self) -> f64;
}

impl Real for f32 {
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
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
    fn cast(v: f64) -> Self {
        v as f32
    }
    fn widen(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
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
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
    fn cast(v: f64) -> Self {
        v
    }
    fn widen(self) -> f64 {
        self
    }
}

/// Row-major matrix operand, optionally read transposed.
#[derive(Clone, Copy)]
struct Mat<'a, T> {
    data: &'a [T],
    rows: usize,
    cols: usize,
    transposed: bool,
}

impl<'a, T> Mat<'a, T> {
    fn new(data: &'a [T], rows: usize, cols: usize) -> Self {
        Self {
            data,
            rows,
            cols,
            transposed: false,
        }
    }

    fn t(self) -> Self {
        Self {
            transposed: !self.transposed,
            ..self
        }
    }

    /// Logical shape and strides.
    fn view(&self) -> (usize, usize, isize, isize) {
        if self.transposed {
            (self.cols, self.rows, 1, self.cols as isize)
        } else {
            (self.rows, self.cols, self.cols as isize, 1)
        }
    }
}

/// `c (m x n, row-major) <- a * b + beta * c`.
fn matmul<T: Real>(a: Mat<'_, T>, b: Mat<'_, T>, c: &mut [T], beta: T) {
    let (m, k, rsa, csa) = a.view();
    let (k2, n, rsb, csb) = b.view();
    assert_eq!(k, k2, "inner dimensions differ");
    assert!(a.data.len() >= a.rows * a.cols && b.data.len() >= b.rows * b.cols);
    assert_eq!(c.len(), m * n);
    // SAFETY: shapes and strides were checked against the slice lengths.
    unsafe {
        T::gemm(
            m,
            k,
            n,
            T::one(),
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub in_channels: usize,
    pub in_size: usize,
    pub convs: Vec<ConvSpec>,
    pub hidden: usize,
    pub outputs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Full,
    Tiny,
    Custom,
}

impl Profile {
    pub fn code(self) -> u8 {
        match self {
            Profile::Full => 0,
            Profile::Tiny => 1,
            Profile::Custom => 2,
        }
    }

    pub fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(Profile::Full),
            1 => Ok(Profile::Tiny),
            2 => Ok(Profile::Custom),
            _ => Err(Error::Checkpoint(format!("unknown profile code {c}"))),
        }
    }
}

impl Architecture {
    fn with_filters(f: [usize; 3], hidden: usize) -> Self {
        Self {
            in_channels: STACK_DEPTH,
            in_size: FRAME_SIZE,
            convs: vec![
                ConvSpec {
                    filters: f[0],
                    kernel: 8,
                    stride: 4,
                },
                ConvSpec {
                    filters: f[1],
                    kernel: 4,
                    stride: 2,
                },
                ConvSpec {
                    filters: f[2],
                    kernel: 3,
                    stride: 1,
                },
            ],
            hidden,
            outputs: crate::policy::N_ACTIONS,
        }
    }

    pub fn full() -> Self {
        Self::with_filters([32, 64, 64], 512)
    }

    pub fn tiny() -> Self {
        Self::with_filters([8, 16, 16], 64)
    }

    pub fn for_profile(p: Profile) -> Option<Self> {
        match p {
            Profile::Full => Some(Self::full()),
            Profile::Tiny => Some(Self::tiny()),
            Profile::Custom => None,
        }
    }

    pub fn profile(&self) -> Profile {
        if *self == Self::full() {
            Profile::Full
        } else if *self == Self::tiny() {
            Profile::Tiny
        } else {
            Profile::Custom
        }
    }

    pub fn input_len(&self) -> usize {
        self.in_channels * self.in_size * self.in_size
    }

    fn validate(&self) -> Result<()> {
        let mut size = self.in_size;
        for c in &self.convs {
            if c.kernel == 0 || c.stride == 0 || c.filters == 0 || size < c.kernel {
                return Err(Error::Config(format!("convolution {c:?} does not fit a {size}px input")));
            }
            size = (size - c.kernel) / c.stride + 1;
        }
        if self.hidden == 0 || self.outputs == 0 || self.in_channels == 0 {
            return Err(Error::Config("empty layer in architecture".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    pub in_size: usize,
    pub out_size: usize,
    /// `out_c x (in_c * k * k)`.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Conv2d<T> {
    fn patch_len(&self) -> usize {
        self.in_c * self.k * self.k
    }

    fn positions(&self) -> usize {
        self.out_size * self.out_size
    }

    fn in_len(&self) -> usize {
        self.in_c * self.in_size * self.in_size
    }

    fn out_len(&self) -> usize {
        self.out_c * self.positions()
    }

    /// Unfolds one sample into a `patch_len x positions` matrix.
    fn im2col(&self, x: &[T], col: &mut [T]) {
        let (k, s, n, o) = (self.k, self.stride, self.in_size, self.out_size);
        let p = self.positions();
        for c in 0..self.in_c {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    let dst = &mut col[row * p..(row + 1) * p];
                    for oy in 0..o {
                        let src = &x[c * n * n + (oy * s + ky) * n + kx..];
                        for ox in 0..o {
                            dst[oy * o + ox] = src[ox * s];
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, col: &[T], dx: &mut [T]) {
        let (k, s, n, o) = (self.k, self.stride, self.in_size, self.out_size);
        let p = self.positions();
        for c in 0..self.in_c {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    let src = &col[row * p..(row + 1) * p];
                    for oy in 0..o {
                        let base = c * n * n + (oy * s + ky) * n + kx;
                        for ox in 0..o {
                            dx[base + ox * s] = dx[base + ox * s] + src[oy * o + ox];
                        }
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub inputs: usize,
    pub outputs: usize,
    /// `outputs x inputs`.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

/// Activations kept from a forward pass for backpropagation.
pub struct Cache<T> {
    batch: usize,
    /// Unfolded inputs per conv layer, all samples back to back.
    cols: Vec<Vec<T>>,
    /// Post-ReLU outputs of each conv layer.
    conv_out: Vec<Vec<T>>,
    /// Post-ReLU hidden layer.
    hidden: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork<T> {
    pub arch: Architecture,
    pub convs: Vec<Conv2d<T>>,
    pub fc1: Dense<T>,
    pub fc2: Dense<T>,
}

fn he_uniform<T: Real, R: Rng + ?Sized>(rng: &mut R, fan_in: usize, n: usize) -> Vec<T> {
    let limit = (6.0 / fan_in as f64).sqrt();
    (0..n).map(|_| T::cast(rng.random_range(-limit..limit))).collect()
}

fn relu_inplace<T: Real>(v: &mut [T]) {
    for x in v {
        if *x < T::zero() {
            *x = T::zero();
        }
    }
}

impl<T: Real> QNetwork<T> {
    /// Deterministic He-uniform initialization with zero biases.
    pub fn new(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut r = rng::seeded(seed);
        let mut convs = Vec::new();
        let mut size = arch.in_size;
        let mut channels = arch.in_channels;
        for c in &arch.convs {
            let out_size = (size - c.kernel) / c.stride + 1;
            let fan_in = channels * c.kernel * c.kernel;
            convs.push(Conv2d {
                in_c: channels,
                out_c: c.filters,
                k: c.kernel,
                stride: c.stride,
                in_size: size,
                out_size,
                weight: he_uniform(&mut r, fan_in, c.filters * fan_in),
                bias: vec![T::zero(); c.filters],
            });
            size = out_size;
            channels = c.filters;
        }
        let flat = channels * size * size;
        let fc1 = Dense {
            inputs: flat,
            outputs: arch.hidden,
            weight: he_uniform(&mut r, flat, flat * arch.hidden),
            bias: vec![T::zero(); arch.hidden],
        };
        let fc2 = Dense {
            inputs: arch.hidden,
            outputs: arch.outputs,
            weight: he_uniform(&mut r, arch.hidden, arch.hidden * arch.outputs),
            bias: vec![T::zero(); arch.outputs],
        };
        Ok(Self { arch, convs, fc1, fc2 })
    }

    pub fn outputs(&self) -> usize {
        self.arch.outputs
    }

    /// Every parameter tensor in declaration order (weight, then bias, per
    /// layer).
    pub fn params(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::new();
        for c in &self.convs {
            out.push(&c.weight);
            out.push(&c.bias);
        }
        for d in [&self.fc1, &self.fc2] {
            out.push(&d.weight);
            out.push(&d.bias);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        for c in &mut self.convs {
            out.push(&mut c.weight);
            out.push(&mut c.bias);
        }
        for d in [&mut self.fc1, &mut self.fc2] {
            out.push(&mut d.weight);
            out.push(&mut d.bias);
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn zero_grads(&self) -> Vec<Vec<T>> {
        self.params().iter().map(|p| vec![T::zero(); p.len()]).collect()
    }

    /// FNV-1a over the parameter bit patterns.
    pub fn param_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for p in self.params() {
            for v in p {
                for b in v.widen().to_bits().to_le_bytes() {
                    h = (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3);
                }
            }
        }
        h
    }

    pub fn copy_from(&mut self, other: &Self) {
        self.clone_from(other);
    }

    fn check_input(&self, input: &[T], batch: usize) -> Result<()> {
        let expected = batch * self.arch.input_len();
        if batch == 0 || input.len() != expected {
            return Err(Error::Shape {
                expected,
                got: input.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, input: &[T], batch: usize) -> Result<Vec<T>> {
        Ok(self.forward_cached(input, batch)?.0)
    }

    /// Output values (`batch x outputs`) and the activations needed by
    /// `backward`.
    pub fn forward_cached(&self, input: &[T], batch: usize) -> Result<(Vec<T>, Cache<T>)> {
        self.check_input(input, batch)?;
        let mut cols = Vec::with_capacity(self.convs.len());
        let mut conv_out: Vec<Vec<T>> = Vec::with_capacity(self.convs.len());
        for (li, conv) in self.convs.iter().enumerate() {
            let x: &[T] = if li == 0 { input } else { &conv_out[li - 1] };
            let (kp, p) = (conv.patch_len(), conv.positions());
            let mut col = vec![T::zero(); batch * kp * p];
            let mut out = vec![T::zero(); batch * conv.out_len()];
            for b in 0..batch {
                let col_b = &mut col[b * kp * p..(b + 1) * kp * p];
                conv.im2col(&x[b * conv.in_len()..(b + 1) * conv.in_len()], col_b);
                let out_b = &mut out[b * conv.out_len()..(b + 1) * conv.out_len()];
                for (o, row) in out_b.chunks_mut(p).enumerate() {
                    row.fill(conv.bias[o]);
                }
                matmul(Mat::new(&conv.weight, conv.out_c, kp), Mat::new(col_b, kp, p), out_b, T::one());
            }
            relu_inplace(&mut out);
            cols.push(col);
            conv_out.push(out);
        }
        let flat = conv_out.last().map(|v| v.as_slice()).unwrap_or(input);
        let mut hidden = dense_forward(&self.fc1, flat, batch);
        relu_inplace(&mut hidden);
        let out = dense_forward(&self.fc2, &hidden, batch);
        Ok((
            out,
            Cache {
                batch,
                cols,
                conv_out,
                hidden,
            },
        ))
    }

    /// Parameter gradients of `sum(d_out * output)`, in `params()` order.
    pub fn backward(&self, input: &[T], cache: &Cache<T>, d_out: &[T]) -> Result<Vec<Vec<T>>> {
        let batch = cache.batch;
        if d_out.len() != batch * self.arch.outputs {
            return Err(Error::Shape {
                expected: batch * self.arch.outputs,
                got: d_out.len(),
            });
        }
        let mut grads = self.zero_grads();
        let nc = self.convs.len();
        let (g_fc2, rest) = grads.split_at_mut(2 * nc + 2);
        let (gw2, gb2) = rest.split_at_mut(1);
        let mut d_hidden = dense_backward(&self.fc2, &cache.hidden, d_out, batch, &mut gw2[0], &mut gb2[0]);
        relu_backward(&cache.hidden, &mut d_hidden);
        let flat = cache.conv_out.last().map(|v| v.as_slice()).unwrap_or(input);
        let (gw1, gb1) = g_fc2[2 * nc..].split_at_mut(1);
        let mut d_x = dense_backward(&self.fc1, flat, &d_hidden, batch, &mut gw1[0], &mut gb1[0]);

        for li in (0..nc).rev() {
            let conv = &self.convs[li];
            relu_backward(&cache.conv_out[li], &mut d_x);
            let (kp, p) = (conv.patch_len(), conv.positions());
            let need_dx = li > 0;
            let mut d_in = if need_dx {
                vec![T::zero(); batch * conv.in_len()]
            } else {
                Vec::new()
            };
            let mut d_col = vec![T::zero(); kp * p];
            let (gw, gb) = g_fc2[2 * li..2 * li + 2].split_at_mut(1);
            for b in 0..batch {
                let d_out_b = &d_x[b * conv.out_len()..(b + 1) * conv.out_len()];
                let col_b = &cache.cols[li][b * kp * p..(b + 1) * kp * p];
                matmul(Mat::new(d_out_b, conv.out_c, p), Mat::new(col_b, kp, p).t(), &mut gw[0], T::one());
                for (o, row) in d_out_b.chunks(p).enumerate() {
                    gb[0][o] = gb[0][o] + row.iter().copied().sum::<T>();
                }
                if need_dx {
                    matmul(Mat::new(&conv.weight, conv.out_c, kp).t(), Mat::new(d_out_b, conv.out_c, p), &mut d_col, T::zero());
                    conv.col2im(&d_col, &mut d_in[b * conv.in_len()..(b + 1) * conv.in_len()]);
                }
            }
            d_x = d_in;
        }
        Ok(grads)
    }

    /// Parameters as `f32` tensors in `params()` order.
    pub fn export_f32(&self) -> Vec<Vec<f32>> {
        self.params()
            .iter()
            .map(|p| p.iter().map(|v| v.widen() as f32).collect())
            .collect()
    }

    pub fn import_f32(&mut self, tensors: &[Vec<f32>]) -> Result<()> {
        let mut params = self.params_mut();
        if tensors.len() != params.len() {
            return Err(Error::Checkpoint(format!("expected {} tensors, found {}", params.len(), tensors.len())));
        }
        for (dst, src) in params.iter_mut().zip(tensors) {
            if dst.len() != src.len() {
                return Err(Error::Shape {
                    expected: dst.len(),
                    got: src.len(),
                });
            }
            for (d, s) in dst.iter_mut().zip(src) {
                *d = T::cast(*s as f64);
            }
        }
        Ok(())
    }

    /// Same weights in another precision.
    pub fn convert<U: Real>(&self) -> QNetwork<U> {
        let mut out = QNetwork::<U>::new(self.arch.clone(), 0).expect("architecture already validated");
        for (dst, src) in out.params_mut().into_iter().zip(self.params()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d = U::cast(s.widen());
            }
        }
        out
    }
}

fn dense_forward<T: Real>(layer: &Dense<T>, x: &[T], batch: usize) -> Vec<T> {
    let mut y = vec![T::zero(); batch * layer.outputs];
    for row in y.chunks_mut(layer.outputs) {
        row.copy_from_slice(&layer.bias);
    }
    matmul(
        Mat::new(x, batch, layer.inputs),
        Mat::new(&layer.weight, layer.outputs, layer.inputs).t(),
        &mut y,
        T::one(),
    );
    y
}

/// Accumulates weight and bias gradients; returns the input gradient.
fn dense_backward<T: Real>(layer: &Dense<T>, x: &[T], dy: &[T], batch: usize, gw: &mut [T], gb: &mut [T]) -> Vec<T> {
    matmul(Mat::new(dy, batch, layer.outputs).t(), Mat::new(x, batch, layer.inputs), gw, T::one());
    for row in dy.chunks(layer.outputs) {
        for (g, d) in gb.iter_mut().zip(row) {
            *g = *g + *d;
        }
    }
    let mut dx = vec![T::zero(); batch * layer.inputs];
    matmul(Mat::new(dy, batch, layer.outputs), Mat::new(&layer.weight, layer.outputs, layer.inputs), &mut dx, T::zero());
    dx
}

fn relu_backward<T: Real>(activated: &[T], grad: &mut [T]) {
    for (g, a) in grad.iter_mut().zip(activated) {
        if *a <= T::zero() {
            *g = T::zero();
        }
    }
}

/// Scales stacked observation bytes into `[0, 1]`.
pub fn normalize_bytes<T: Real>(bytes: &[u8], out: &mut Vec<T>) {
    let scale = T::cast(1.0 / 255.0);
    out.extend(bytes.iter().map(|b| T::cast(*b as f64) * scale));
}

/// Huber loss: quadratic below `delta`, linear above.
pub fn huber(x: f64, delta: f64) -> f64 {
    if x.abs() <= delta {
        0.5 * x * x
    } else {
        delta * (x.abs() - 0.5 * delta)
    }
}

pub fn huber_grad(x: f64, delta: f64) -> f64 {
    x.clamp(-delta, delta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub config: AdamConfig,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    t: u64,
}

impl<T: Real> Adam<T> {
    pub fn new(net: &QNetwork<T>, config: AdamConfig) -> Self {
        Self {
            config,
            m: net.zero_grads(),
            v: net.zero_grads(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, net: &mut QNetwork<T>, grads: &[Vec<T>]) {
        self.t += 1;
        let c = self.config;
        let b1 = T::cast(c.beta1);
        let b2 = T::cast(c.beta2);
        let one = T::one();
        let lr_t = T::cast(c.learning_rate * (1.0 - c.beta2.powi(self.t as i32)).sqrt() / (1.0 - c.beta1.powi(self.t as i32)));
        let eps = T::cast(c.epsilon);
        for (((p, g), m), v) in net.params_mut().into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (one - b1) * g[i];
                v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
                p[i] = p[i] - lr_t * m[i] / (v[i].sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn micro() -> Architecture {
        Architecture {
            in_channels: 2,
            in_size: 12,
            convs: vec![
                ConvSpec {
                    filters: 3,
                    kernel: 4,
                    stride: 2,
                },
                ConvSpec {
                    filters: 4,
                    kernel: 3,
                    stride: 1,
                },
            ],
            hidden: 6,
            outputs: 8,
        }
    }

    fn random_input(n: usize, seed: u64) -> Vec<f64> {
        let mut r = rng::seeded(seed);
        (0..n).map(|_| r.random_range(0.0..1.0)).collect()
    }

    /// Scalar loss `sum(w_i * out_i)` with fixed weights.
    fn probe_loss(net: &QNetwork<f64>, x: &[f64], batch: usize, w: &[f64]) -> f64 {
        net.forward(x, batch).unwrap().iter().zip(w).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn tiny_shapes_and_zero_weights() {
        let mut net = QNetwork::<f32>::new(Architecture::tiny(), 1).unwrap();
        let x = vec![0.5f32; 2 * Architecture::tiny().input_len()];
        assert_eq!(net.forward(&x, 2).unwrap().len(), 16);
        assert!(net.forward(&x[1..], 2).is_err());
        for p in net.params_mut() {
            p.fill(0.0);
        }
        assert!(net.forward(&x, 2).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn gemm_matches_naive() {
        let a: Vec<f64> = (0..6).map(|v| v as f64).collect();
        let b: Vec<f64> = (0..12).map(|v| (v as f64) * 0.5).collect();
        let mut c = vec![0.0; 8];
        matmul(Mat::new(&a, 2, 3), Mat::new(&b, 3, 4), &mut c, 0.0);
        for i in 0..2 {
            for j in 0..4 {
                let s: f64 = (0..3).map(|k| a[i * 3 + k] * b[k * 4 + j]).sum();
                assert_eq!(c[i * 4 + j], s);
            }
        }
        // Transposed read of b (4 x 3 stored) gives a 3 x 4 operand.
        let bt: Vec<f64> = (0..4).flat_map(|j| (0..3).map(move |k| (k * 4 + j) as f64 * 0.5)).collect();
        let mut c2 = vec![0.0; 8];
        matmul(Mat::new(&a, 2, 3), Mat::new(&bt, 4, 3).t(), &mut c2, 0.0);
        assert_eq!(c, c2);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let net = QNetwork::<f64>::new(micro(), 3).unwrap();
        let batch = 2;
        let x = random_input(batch * micro().input_len(), 9);
        let w = random_input(batch * 8, 10);
        let (_, cache) = net.forward_cached(&x, batch).unwrap();
        let grads = net.backward(&x, &cache, &w).unwrap();
        let h = 1e-6;
        for (ti, g) in grads.iter().enumerate() {
            for i in (0..g.len()).step_by(1 + g.len() / 7) {
                let mut plus = net.clone();
                plus.params_mut()[ti][i] += h;
                let mut minus = net.clone();
                minus.params_mut()[ti][i] -= h;
                let fd = (probe_loss(&plus, &x, batch, &w) - probe_loss(&minus, &x, batch, &w)) / (2.0 * h);
                let err = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-8);
                assert!(err < 1e-4 || (fd - g[i]).abs() < 1e-9, "tensor {ti}[{i}]: fd {fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn initialization_is_seeded() {
        let a = QNetwork::<f32>::new(Architecture::tiny(), 5).unwrap();
        let b = QNetwork::<f32>::new(Architecture::tiny(), 5).unwrap();
        let c = QNetwork::<f32>::new(Architecture::tiny(), 6).unwrap();
        assert_eq!(a.param_hash(), b.param_hash());
        assert_ne!(a.param_hash(), c.param_hash());
    }

    #[test]
    fn f32_roundtrip() {
        let a = QNetwork::<f32>::new(Architecture::tiny(), 5).unwrap();
        let mut b = QNetwork::<f32>::new(Architecture::tiny(), 7).unwrap();
        b.import_f32(&a.export_f32()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn huber_pieces() {
        assert_eq!(huber(0.5, 1.0), 0.125);
        assert_eq!(huber(-3.0, 1.0), 2.5);
        assert_eq!(huber_grad(-3.0, 1.0), -1.0);
        assert_eq!(huber_grad(0.25, 1.0), 0.25);
    }

    #[test]
    fn adam_ignores_zero_gradient() {
        let mut net = QNetwork::<f64>::new(micro(), 1).unwrap();
        let before = net.clone();
        let mut opt = Adam::new(&net, AdamConfig::default());
        let zero = net.zero_grads();
        opt.step(&mut net, &zero);
        assert_eq!(net, before);
    }
}
