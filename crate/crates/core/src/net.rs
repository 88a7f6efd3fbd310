//! Configurable conv / ReLU / max-pool / GAP embedding network with
//! hand-written backpropagation.
//!
//! One parameter set serves both inputs of a pair, so the two branches of
//! the dual-source network can never diverge. Arithmetic is generic over
//! [`Real`]: training runs in `f32`, gradient checks in `f64`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Debug;
use core::iter::Sum;
use core::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::BinaryImage;
use crate::math;

pub trait Real:
    Copy
    + Default
    + PartialOrd
    + Debug
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + Sum
    + 'static
{
    const ZERO: Self;
    const ONE: Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn sqrt(self) -> Self;
    fn is_finite(self) -> bool;
}

impl Real for f32 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn sqrt(self) -> Self {
        libm::sqrtf(self)
    }
    #[inline]
    fn is_finite(self) -> bool {
        f32::is_finite(self)
    }
}

impl Real for f64 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
    #[inline]
    fn sqrt(self) -> Self {
        math::sqrt(self)
    }
    #[inline]
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv {
        channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    Relu,
    MaxPool {
        kernel: usize,
        stride: usize,
    },
    /// Global average pooling; always the last layer.
    Gap,
}

/// Channels, height, width of a feature map.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub fn len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    /// Side of the square single-channel input.
    pub input_size: usize,
    pub layers: Vec<LayerSpec>,
    /// Layer whose output is GAP-pooled into the embedding; `None` means the
    /// layer right before the final GAP.
    #[serde(default)]
    pub embed_tap: Option<usize>,
}

impl NetConfig {
    /// Desk-scale default: 64×64 input, three convolutions ending at 64
    /// channels.
    pub fn tiny() -> Self {
        use LayerSpec::*;
        Self {
            input_size: 64,
            layers: vec![
                Conv { channels: 16, kernel: 5, stride: 2, pad: 2 },
                Relu,
                MaxPool { kernel: 2, stride: 2 },
                Conv { channels: 32, kernel: 3, stride: 1, pad: 1 },
                Relu,
                MaxPool { kernel: 2, stride: 2 },
                Conv { channels: 64, kernel: 3, stride: 1, pad: 1 },
                Relu,
                Gap,
            ],
            embed_tap: None,
        }
    }

    /// AlexNet truncated after conv4 with a 13×13 GAP, 227×227 input.
    pub fn paper_alexnet_conv4() -> Self {
        use LayerSpec::*;
        Self {
            input_size: 227,
            layers: vec![
                Conv { channels: 96, kernel: 11, stride: 4, pad: 0 },
                Relu,
                MaxPool { kernel: 3, stride: 2 },
                Conv { channels: 256, kernel: 5, stride: 1, pad: 2 },
                Relu,
                MaxPool { kernel: 3, stride: 2 },
                Conv { channels: 384, kernel: 3, stride: 1, pad: 1 },
                Relu,
                Conv { channels: 384, kernel: 3, stride: 1, pad: 1 },
                Relu,
                Gap,
            ],
            embed_tap: None,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "tiny" => Some(Self::tiny()),
            "paper-alexnet-conv4" => Some(Self::paper_alexnet_conv4()),
            _ => None,
        }
    }

    /// Output shape of every layer, checking the dimension arithmetic.
    pub fn shapes(&self) -> Result<Vec<Shape>> {
        if self.input_size == 0 {
            return Err(Error::Config("input size must be positive".into()));
        }
        match self.layers.last() {
            Some(LayerSpec::Gap) => {}
            _ => return Err(Error::Config("last layer must be GAP".into())),
        }
        let mut shape = Shape {
            c: 1,
            h: self.input_size,
            w: self.input_size,
        };
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            shape = match *layer {
                LayerSpec::Conv {
                    channels,
                    kernel,
                    stride,
                    pad,
                } => {
                    if channels == 0 || kernel == 0 || stride == 0 {
                        return Err(Error::Config(format!("layer {i}: zero conv parameter")));
                    }
                    let (h, w) = (shape.h + 2 * pad, shape.w + 2 * pad);
                    if h < kernel || w < kernel {
                        return Err(Error::Config(format!(
                            "layer {i}: kernel {kernel} larger than padded input {h}x{w}"
                        )));
                    }
                    Shape {
                        c: channels,
                        h: (h - kernel) / stride + 1,
                        w: (w - kernel) / stride + 1,
                    }
                }
                LayerSpec::Relu => shape,
                LayerSpec::MaxPool { kernel, stride } => {
                    if kernel == 0 || stride == 0 {
                        return Err(Error::Config(format!("layer {i}: zero pool parameter")));
                    }
                    if shape.h < kernel || shape.w < kernel {
                        return Err(Error::Config(format!(
                            "layer {i}: pool {kernel} larger than input {}x{}",
                            shape.h, shape.w
                        )));
                    }
                    Shape {
                        c: shape.c,
                        h: (shape.h - kernel) / stride + 1,
                        w: (shape.w - kernel) / stride + 1,
                    }
                }
                LayerSpec::Gap => {
                    if i + 1 != self.layers.len() {
                        return Err(Error::Config(format!("layer {i}: GAP before the end")));
                    }
                    Shape {
                        c: shape.c,
                        h: 1,
                        w: 1,
                    }
                }
            };
            out.push(shape);
        }
        if !self.layers.iter().any(|l| matches!(l, LayerSpec::Conv { .. })) {
            return Err(Error::Config("no convolution layers".into()));
        }
        let tap = self.tap();
        if tap + 1 >= self.layers.len() {
            return Err(Error::Config(format!("embed tap {tap} is not before GAP")));
        }
        Ok(out)
    }

    pub fn tap(&self) -> usize {
        self.embed_tap
            .unwrap_or_else(|| self.layers.len().saturating_sub(2))
    }

    pub fn with_tap(&self, tap: usize) -> Self {
        Self {
            embed_tap: Some(tap),
            ..self.clone()
        }
    }

    /// Candidate taps for layer studies: the activation closing each
    /// convolution block (its ReLU when one follows, else the conv itself).
    pub fn tappable_layers(&self) -> Vec<usize> {
        let n = self.layers.len();
        (0..n)
            .filter(|&i| matches!(self.layers[i], LayerSpec::Conv { .. }))
            .map(|i| {
                if i + 1 < n && self.layers[i + 1] == LayerSpec::Relu {
                    i + 1
                } else {
                    i
                }
            })
            .collect()
    }

    pub fn embedding_dim(&self) -> Result<usize> {
        let shapes = self.shapes()?;
        Ok(shapes[self.tap()].c)
    }

    /// GAP window (height, width) at the tap.
    pub fn gap_window(&self) -> Result<(usize, usize)> {
        let shapes = self.shapes()?;
        let s = shapes[self.tap()];
        Ok((s.h, s.w))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    /// `out × (in·k·k)`, row-major.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> ConvParams<T> {
    fn zeros_like(&self) -> Self {
        Self {
            in_channels: self.in_channels,
            out_channels: self.out_channels,
            kernel: self.kernel,
            weight: vec![T::ZERO; self.weight.len()],
            bias: vec![T::ZERO; self.bias.len()],
        }
    }
}

/// Gradients (or optimizer state) shaped like a network's parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Grads<T> {
    pub convs: Vec<ConvParams<T>>,
}

impl<T: Real> Grads<T> {
    pub fn add_assign(&mut self, other: &Grads<T>) {
        for (a, b) in self.convs.iter_mut().zip(&other.convs) {
            for (x, y) in a.weight.iter_mut().zip(&b.weight) {
                *x += *y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += *y;
            }
        }
    }

    pub fn scale(&mut self, s: T) {
        for c in &mut self.convs {
            c.weight.iter_mut().for_each(|x| *x *= s);
            c.bias.iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.convs
            .iter()
            .all(|c| c.weight.iter().chain(&c.bias).all(|v| v.is_finite()))
    }
}

/// Embedding network `f(·)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Net<T> {
    config: NetConfig,
    shapes: Vec<Shape>,
    /// Parameters of each conv layer, in layer order.
    convs: Vec<ConvParams<T>>,
    seed: u64,
}

/// The trained single-precision network.
pub type EmbeddingNet = Net<f32>;

/// Activations kept from a forward pass for backpropagation.
#[derive(Clone, Debug)]
pub struct Tape<T> {
    /// Output of every layer up to the tap.
    outputs: Vec<Vec<T>>,
    /// im2col buffer per conv layer.
    cols: Vec<Option<Vec<T>>>,
    /// Argmax input index per pooled output.
    argmax: Vec<Option<Vec<u32>>>,
    tap: usize,
    embedding: Vec<T>,
}

impl<T> Tape<T> {
    pub fn embedding(&self) -> &[T] {
        &self.embedding
    }
}

impl<T: Real> Net<T> {
    /// Fan-in scaled uniform initialization, `U(±sqrt(6 / fan_in))`, zero
    /// biases.
    pub fn new(config: NetConfig, seed: u64) -> Result<Self> {
        let shapes = config.shapes()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut convs = Vec::new();
        let mut in_c = 1;
        for (i, layer) in config.layers.iter().enumerate() {
            if let LayerSpec::Conv {
                channels, kernel, ..
            } = *layer
            {
                let fan_in = in_c * kernel * kernel;
                let bound = math::sqrt(6.0 / fan_in as f64);
                let weight = (0..channels * fan_in)
                    .map(|_| T::from_f64(rng.gen_range(-bound..bound)))
                    .collect();
                convs.push(ConvParams {
                    in_channels: in_c,
                    out_channels: channels,
                    kernel,
                    weight,
                    bias: vec![T::ZERO; channels],
                });
            }
            in_c = shapes[i].c;
        }
        Ok(Self {
            config,
            shapes,
            convs,
            seed,
        })
    }

    /// Rebuilds a network from stored parameters, checking every shape.
    pub fn from_parts(config: NetConfig, seed: u64, convs: Vec<ConvParams<T>>) -> Result<Self> {
        let template = Self::new(config, seed)?;
        if template.convs.len() != convs.len() {
            return Err(Error::Config(format!(
                "expected {} conv layers, got {}",
                template.convs.len(),
                convs.len()
            )));
        }
        for (i, (a, b)) in template.convs.iter().zip(&convs).enumerate() {
            if a.in_channels != b.in_channels
                || a.out_channels != b.out_channels
                || a.kernel != b.kernel
                || a.weight.len() != b.weight.len()
                || a.bias.len() != b.bias.len()
            {
                return Err(Error::Config(format!("conv {i}: parameter shape mismatch")));
            }
        }
        Ok(Self {
            convs,
            ..template
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn convs(&self) -> &[ConvParams<T>] {
        &self.convs
    }

    pub fn convs_mut(&mut self) -> &mut [ConvParams<T>] {
        &mut self.convs
    }

    pub fn layer_shapes(&self) -> &[Shape] {
        &self.shapes
    }

    pub fn param_count(&self) -> usize {
        self.convs.iter().map(|c| c.weight.len() + c.bias.len()).sum()
    }

    /// Same parameters, embedding read from another layer.
    pub fn with_tap(&self, tap: usize) -> Result<Self> {
        let config = self.config.with_tap(tap);
        config.shapes()?;
        Ok(Self {
            config,
            ..self.clone()
        })
    }

    pub fn zero_grads(&self) -> Grads<T> {
        Grads {
            convs: self.convs.iter().map(ConvParams::zeros_like).collect(),
        }
    }

    /// Converts a binary raster of the configured input size to reals.
    pub fn input_from(&self, image: &BinaryImage) -> Result<Vec<T>> {
        let n = self.config.input_size;
        if image.dims() != (n, n) {
            return Err(Error::Config(format!(
                "input {:?} does not match network input {n}x{n}",
                image.dims()
            )));
        }
        Ok(image
            .pixels()
            .iter()
            .map(|&p| if p == 1 { T::ONE } else { T::ZERO })
            .collect())
    }

    pub fn forward(&self, image: &BinaryImage) -> Result<Vec<T>> {
        let input = self.input_from(image)?;
        Ok(self.forward_tape(input).embedding)
    }

    pub fn forward_tape(&self, input: Vec<T>) -> Tape<T> {
        let n = self.config.input_size;
        assert_eq!(input.len(), n * n, "input length");
        let tap = self.config.tap();
        let mut outputs: Vec<Vec<T>> = Vec::with_capacity(tap + 1);
        let mut cols = Vec::with_capacity(tap + 1);
        let mut argmax = Vec::with_capacity(tap + 1);
        let mut conv_idx = 0;
        for i in 0..=tap {
            let in_shape = if i == 0 {
                Shape { c: 1, h: n, w: n }
            } else {
                self.shapes[i - 1]
            };
            let x: &[T] = if i == 0 { &input } else { &outputs[i - 1] };
            let out_shape = self.shapes[i];
            match self.config.layers[i] {
                LayerSpec::Conv { stride, pad, .. } => {
                    let p = &self.convs[conv_idx];
                    conv_idx += 1;
                    let col = im2col(x, in_shape, out_shape, p.kernel, stride, pad);
                    let y = conv_forward(p, &col, out_shape);
                    cols.push(Some(col));
                    argmax.push(None);
                    outputs.push(y);
                }
                LayerSpec::Relu => {
                    let y = x
                        .iter()
                        .map(|&v| if v > T::ZERO { v } else { T::ZERO })
                        .collect();
                    cols.push(None);
                    argmax.push(None);
                    outputs.push(y);
                }
                LayerSpec::MaxPool { kernel, stride } => {
                    let (y, idx) = maxpool(x, in_shape, out_shape, kernel, stride);
                    cols.push(None);
                    argmax.push(Some(idx));
                    outputs.push(y);
                }
                LayerSpec::Gap => unreachable!("tap precedes GAP"),
            }
        }
        let s = self.shapes[tap];
        let area = T::from_f64((s.h * s.w) as f64);
        let embedding = outputs[tap]
            .chunks_exact(s.h * s.w)
            .map(|ch| ch.iter().copied().sum::<T>() / area)
            .collect();
        Tape {
            outputs,
            cols,
            argmax,
            tap,
            embedding,
        }
    }

    /// Accumulates `d loss / d params` into `grads` given `d loss / d f`.
    pub fn backward(&self, tape: &Tape<T>, grad_embedding: &[T], grads: &mut Grads<T>) {
        let tap = tape.tap;
        let s = self.shapes[tap];
        let area = s.h * s.w;
        assert_eq!(grad_embedding.len(), s.c);
        let inv = T::ONE / T::from_f64(area as f64);
        let mut g: Vec<T> = grad_embedding
            .iter()
            .flat_map(|&ge| core::iter::repeat_n(ge * inv, area))
            .collect();
        let mut conv_idx = self.config.layers[..=tap]
            .iter()
            .filter(|l| matches!(l, LayerSpec::Conv { .. }))
            .count();
        for i in (0..=tap).rev() {
            let in_shape = if i == 0 {
                Shape {
                    c: 1,
                    h: self.config.input_size,
                    w: self.config.input_size,
                }
            } else {
                self.shapes[i - 1]
            };
            let out_shape = self.shapes[i];
            match self.config.layers[i] {
                LayerSpec::Conv { stride, pad, .. } => {
                    conv_idx -= 1;
                    let p = &self.convs[conv_idx];
                    let col = tape.cols[i].as_ref().expect("conv column buffer");
                    let n = out_shape.h * out_shape.w;
                    let kk = p.in_channels * p.kernel * p.kernel;
                    let gp = &mut grads.convs[conv_idx];
                    for m in 0..p.out_channels {
                        gp.bias[m] += g[m * n..(m + 1) * n].iter().copied().sum::<T>();
                    }
                    let mut m = 0;
                    while m + 4 <= p.out_channels {
                        let gs = [0, 1, 2, 3].map(|i| &g[(m + i) * n..(m + i + 1) * n]);
                        for r in 0..kk {
                            let d = dot4(gs, &col[r * n..(r + 1) * n]);
                            for (i, dv) in d.into_iter().enumerate() {
                                gp.weight[(m + i) * kk + r] += dv;
                            }
                        }
                        m += 4;
                    }
                    for m in m..p.out_channels {
                        let gm = &g[m * n..(m + 1) * n];
                        for r in 0..kk {
                            gp.weight[m * kk + r] += dot(gm, &col[r * n..(r + 1) * n]);
                        }
                    }
                    if i == 0 {
                        break;
                    }
                    // dcol row r sums w[m][r]·g_m over m, in m order.
                    let mut dcol = vec![T::ZERO; kk * n];
                    for (r, d) in dcol.chunks_exact_mut(n).enumerate() {
                        let mut m = 0;
                        while m + 4 <= p.out_channels {
                            let w = |i: usize| p.weight[(m + i) * kk + r];
                            let (w0, w1, w2, w3) = (w(0), w(1), w(2), w(3));
                            let g0 = &g[m * n..(m + 1) * n];
                            let g1 = &g[(m + 1) * n..(m + 2) * n];
                            let g2 = &g[(m + 2) * n..(m + 3) * n];
                            let g3 = &g[(m + 3) * n..(m + 4) * n];
                            for j in 0..n {
                                let mut v = d[j];
                                v += w0 * g0[j];
                                v += w1 * g1[j];
                                v += w2 * g2[j];
                                v += w3 * g3[j];
                                d[j] = v;
                            }
                            m += 4;
                        }
                        for m in m..p.out_channels {
                            axpy(d, p.weight[m * kk + r], &g[m * n..(m + 1) * n]);
                        }
                    }
                    g = col2im(&dcol, in_shape, out_shape, p.kernel, stride, pad);
                }
                LayerSpec::Relu => {
                    let y = &tape.outputs[i];
                    for (gv, &yv) in g.iter_mut().zip(y) {
                        if !(yv > T::ZERO) {
                            *gv = T::ZERO;
                        }
                    }
                }
                LayerSpec::MaxPool { .. } => {
                    let idx = tape.argmax[i].as_ref().expect("pool indices");
                    let mut gin = vec![T::ZERO; in_shape.len()];
                    for (gv, &j) in g.iter().zip(idx) {
                        gin[j as usize] += *gv;
                    }
                    g = gin;
                }
                LayerSpec::Gap => unreachable!(),
            }
        }
    }

    /// `SGD` with momentum and L2 weight decay on weights:
    /// `v ← μ·v − lr·(g + λ·w)`, `w ← w + v`.
    pub fn sgd_step(&mut self, grads: &Grads<T>, velocity: &mut Grads<T>, lr: T, momentum: T, decay: T) {
        for ((p, g), v) in self.convs.iter_mut().zip(&grads.convs).zip(&mut velocity.convs) {
            for ((w, gw), vw) in p.weight.iter_mut().zip(&g.weight).zip(&mut v.weight) {
                *vw = momentum * *vw - lr * (*gw + decay * *w);
                *w += *vw;
            }
            for ((b, gb), vb) in p.bias.iter_mut().zip(&g.bias).zip(&mut v.bias) {
                *vb = momentum * *vb - lr * *gb;
                *b += *vb;
            }
        }
    }

    /// Flat view of all parameters in storage order (weights then bias per
    /// conv).
    pub fn params_flat(&self) -> Vec<T> {
        self.convs
            .iter()
            .flat_map(|c| c.weight.iter().chain(&c.bias).copied())
            .collect()
    }

    pub fn param_mut(&mut self, mut index: usize) -> &mut T {
        for c in &mut self.convs {
            if index < c.weight.len() {
                return &mut c.weight[index];
            }
            index -= c.weight.len();
            if index < c.bias.len() {
                return &mut c.bias[index];
            }
            index -= c.bias.len();
        }
        panic!("parameter index out of range");
    }
}

impl<T: Real> Grads<T> {
    pub fn flat(&self) -> Vec<T> {
        self.convs
            .iter()
            .flat_map(|c| c.weight.iter().chain(&c.bias).copied())
            .collect()
    }
}

/// Converts parameters between precisions.
pub fn convert<A: Real, B: Real>(net: &Net<A>) -> Net<B> {
    Net {
        config: net.config.clone(),
        shapes: net.shapes.clone(),
        convs: net
            .convs
            .iter()
            .map(|c| ConvParams {
                in_channels: c.in_channels,
                out_channels: c.out_channels,
                kernel: c.kernel,
                weight: c.weight.iter().map(|v| B::from_f64(v.to_f64())).collect(),
                bias: c.bias.iter().map(|v| B::from_f64(v.to_f64())).collect(),
            })
            .collect(),
        seed: net.seed,
    }
}

#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::ZERO; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        for j in 0..4 {
            acc[j] += a[4 * i + j] * b[4 * i + j];
        }
    }
    let mut s = acc[0] + acc[1] + acc[2] + acc[3];
    for i in chunks * 4..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// Four [`dot`]s sharing `b`, each with the same lane order as `dot`.
#[inline]
fn dot4<T: Real>(a: [&[T]; 4], b: &[T]) -> [T; 4] {
    let mut acc = [[T::ZERO; 4]; 4];
    let chunks = b.len() / 4;
    for i in 0..chunks {
        for j in 0..4 {
            let bv = b[4 * i + j];
            for (acc, a) in acc.iter_mut().zip(&a) {
                acc[j] += a[4 * i + j] * bv;
            }
        }
    }
    let mut out = acc.map(|l| l[0] + l[1] + l[2] + l[3]);
    for i in chunks * 4..b.len() {
        for (o, a) in out.iter_mut().zip(&a) {
            *o += a[i] * b[i];
        }
    }
    out
}

#[inline]
fn axpy<T: Real>(y: &mut [T], a: T, x: &[T]) {
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv += a * xv;
    }
}

fn im2col<T: Real>(x: &[T], in_s: Shape, out_s: Shape, k: usize, stride: usize, pad: usize) -> Vec<T> {
    let n = out_s.h * out_s.w;
    let mut col = vec![T::ZERO; in_s.c * k * k * n];
    for c in 0..in_s.c {
        let plane = &x[c * in_s.h * in_s.w..(c + 1) * in_s.h * in_s.w];
        for ky in 0..k {
            for kx in 0..k {
                let row = ((c * k + ky) * k + kx) * n;
                for oy in 0..out_s.h {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= in_s.h as isize {
                        continue;
                    }
                    let src = &plane[iy as usize * in_s.w..(iy as usize + 1) * in_s.w];
                    let dst = &mut col[row + oy * out_s.w..row + (oy + 1) * out_s.w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix >= 0 && ix < in_s.w as isize {
                            *d = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
    col
}

fn col2im<T: Real>(col: &[T], in_s: Shape, out_s: Shape, k: usize, stride: usize, pad: usize) -> Vec<T> {
    let n = out_s.h * out_s.w;
    let mut x = vec![T::ZERO; in_s.len()];
    for c in 0..in_s.c {
        let base = c * in_s.h * in_s.w;
        for ky in 0..k {
            for kx in 0..k {
                let row = ((c * k + ky) * k + kx) * n;
                for oy in 0..out_s.h {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= in_s.h as isize {
                        continue;
                    }
                    for ox in 0..out_s.w {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix >= 0 && ix < in_s.w as isize {
                            x[base + iy as usize * in_s.w + ix as usize] += col[row + oy * out_s.w + ox];
                        }
                    }
                }
            }
        }
    }
    x
}

fn conv_forward<T: Real>(p: &ConvParams<T>, col: &[T], out_s: Shape) -> Vec<T> {
    let n = out_s.h * out_s.w;
    let kk = p.in_channels * p.kernel * p.kernel;
    let mut y = vec![T::ZERO; p.out_channels * n];
    for (ym, &b) in y.chunks_exact_mut(n).zip(&p.bias) {
        ym.fill(b);
    }
    // Four output channels per pass over each column row.
    for (blk, block) in y.chunks_mut(4 * n).enumerate() {
        let m0 = 4 * blk;
        if block.len() == 4 * n {
            let (y0, rest) = block.split_at_mut(n);
            let (y1, rest) = rest.split_at_mut(n);
            let (y2, y3) = rest.split_at_mut(n);
            for r in 0..kk {
                let c = &col[r * n..(r + 1) * n];
                let w = |i: usize| p.weight[(m0 + i) * kk + r];
                let (w0, w1, w2, w3) = (w(0), w(1), w(2), w(3));
                for j in 0..n {
                    let cj = c[j];
                    y0[j] += w0 * cj;
                    y1[j] += w1 * cj;
                    y2[j] += w2 * cj;
                    y3[j] += w3 * cj;
                }
            }
        } else {
            for (i, ym) in block.chunks_exact_mut(n).enumerate() {
                let wrow = &p.weight[(m0 + i) * kk..(m0 + i + 1) * kk];
                for (r, &wv) in wrow.iter().enumerate() {
                    axpy(ym, wv, &col[r * n..(r + 1) * n]);
                }
            }
        }
    }
    y
}

fn maxpool<T: Real>(x: &[T], in_s: Shape, out_s: Shape, k: usize, stride: usize) -> (Vec<T>, Vec<u32>) {
    let mut y = Vec::with_capacity(out_s.len());
    let mut idx = Vec::with_capacity(out_s.len());
    for c in 0..in_s.c {
        let base = c * in_s.h * in_s.w;
        for oy in 0..out_s.h {
            for ox in 0..out_s.w {
                let mut best = base + oy * stride * in_s.w + ox * stride;
                for ky in 0..k {
                    for kx in 0..k {
                        let j = base + (oy * stride + ky) * in_s.w + ox * stride + kx;
                        if x[j] > x[best] {
                            best = j;
                        }
                    }
                }
                y.push(x[best]);
                idx.push(best as u32);
            }
        }
    }
    (y, idx)
}

/// Contrastive loss `l·D² + (1−l)·max(m − D, 0)²` with `D = ‖fa − fb‖₂` and
/// its gradients with respect to both embeddings.
pub fn contrastive_loss<T: Real>(fa: &[T], fb: &[T], label: bool, margin: T) -> Result<(T, Vec<T>, Vec<T>)> {
    if fa.len() != fb.len() {
        return Err(Error::arg(format!(
            "embedding lengths differ: {} vs {}",
            fa.len(),
            fb.len()
        )));
    }
    if !(margin > T::ZERO) {
        return Err(Error::arg("margin must be positive"));
    }
    let diff: Vec<T> = fa.iter().zip(fb).map(|(&a, &b)| a - b).collect();
    let d2: T = diff.iter().map(|&d| d * d).sum();
    let two = T::from_f64(2.0);
    if label {
        let ga: Vec<T> = diff.iter().map(|&d| two * d).collect();
        let gb = ga.iter().map(|&g| -g).collect();
        return Ok((d2, ga, gb));
    }
    let dist = d2.sqrt();
    if dist >= margin {
        return Ok((T::ZERO, vec![T::ZERO; fa.len()], vec![T::ZERO; fa.len()]));
    }
    let gap = margin - dist;
    let eps = T::from_f64(1e-12);
    let denom = if dist > eps { dist } else { eps };
    let scale = -two * gap / denom;
    let ga: Vec<T> = diff.iter().map(|&d| scale * d).collect();
    let gb = ga.iter().map(|&g| -g).collect();
    Ok((gap * gap, ga, gb))
}

/// Loss and summed parameter gradient for one labelled pair of inputs.
pub fn pair_gradient<T: Real>(
    net: &Net<T>,
    a: Vec<T>,
    b: Vec<T>,
    label: bool,
    margin: T,
) -> Result<(T, Grads<T>)> {
    let ta = net.forward_tape(a);
    let tb = net.forward_tape(b);
    let (loss, ga, gb) = contrastive_loss(&ta.embedding, &tb.embedding, label, margin)?;
    let mut grads = net.zero_grads();
    net.backward(&ta, &ga, &mut grads);
    net.backward(&tb, &gb, &mut grads);
    Ok((loss, grads))
}
