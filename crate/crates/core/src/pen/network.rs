//! The dual-arm patch embedding network and its hand-written backward pass.
//!
//! Encoder: a stack of 3×3 stride-2 convolutions (padding 1) with SiLU
//! activations, global average pooling, and a dense layer to the embedding
//! dimension `d`. A linear projection head maps the embedding to `d′`
//! dimensions (normalized onto the unit sphere) and a linear classification
//! head maps it to a single logit.
//!
//! Inputs are channel-major (`[c][row][col]`) `f64` tensors in `[0, 1]`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SafeError};
use crate::numerics::l2_normalize;

const KERNEL: usize = 3;
const TAPS: usize = KERNEL * KERNEL;
const IN_CHANNELS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_size: usize,
    pub channels: Vec<usize>,
    pub embed_dim: usize,
    pub proj_dim: usize,
}

impl Architecture {
    /// Three stride-2 conv blocks with 8, 16 and 32 channels.
    pub fn compact(input_size: usize, embed_dim: usize, proj_dim: usize) -> Self {
        Architecture {
            input_size,
            channels: vec![8, 16, 32],
            embed_dim,
            proj_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 || self.embed_dim == 0 || self.proj_dim == 0 {
            return Err(SafeError::InvalidArgument(
                "input size and embedding dimensions must be positive".into(),
            ));
        }
        if self.channels.is_empty() || self.channels.contains(&0) {
            return Err(SafeError::InvalidArgument(
                "encoder needs at least one conv block with positive width".into(),
            ));
        }
        if self.proj_dim > self.embed_dim {
            return Err(SafeError::InvalidArgument(format!(
                "projection dimension {} exceeds embedding dimension {}",
                self.proj_dim, self.embed_dim
            )));
        }
        Ok(())
    }

    pub fn input_len(&self) -> usize {
        IN_CHANNELS * self.input_size * self.input_size
    }

    fn conv_shapes(&self) -> Vec<ConvShape> {
        let mut shapes = Vec::with_capacity(self.channels.len());
        let (mut cin, mut side) = (IN_CHANNELS, self.input_size);
        for &cout in &self.channels {
            let out_side = (side - 1) / 2 + 1;
            shapes.push(ConvShape {
                cin,
                cout,
                in_side: side,
                out_side,
            });
            cin = cout;
            side = out_side;
        }
        shapes
    }

    fn layout(&self) -> Layout {
        let mut offset = 0;
        let mut take = |n: usize| {
            let start = offset;
            offset += n;
            start
        };
        let convs = self
            .conv_shapes()
            .into_iter()
            .map(|shape| {
                let w = take(shape.cout * shape.cin * TAPS);
                let b = take(shape.cout);
                ConvLayer { shape, w, b }
            })
            .collect::<Vec<_>>();
        let last = *self.channels.last().unwrap_or(&IN_CHANNELS);
        let mut dense = |inputs: usize, outputs: usize| {
            let w = take(inputs * outputs);
            let b = take(outputs);
            Dense { inputs, outputs, w, b }
        };
        let embed = dense(last, self.embed_dim);
        let proj = dense(self.embed_dim, self.proj_dim);
        let cls = dense(self.embed_dim, 1);
        Layout {
            convs,
            embed,
            proj,
            cls,
            total: offset,
        }
    }

    pub fn param_count(&self) -> usize {
        self.layout().total
    }

    /// Human-readable layer list, recorded in checkpoints.
    pub fn layer_list(&self) -> Vec<String> {
        let mut layers = Vec::new();
        for s in self.conv_shapes() {
            layers.push(format!(
                "conv3x3s2p1 {}->{} {}x{}->{}x{}",
                s.cin, s.cout, s.in_side, s.in_side, s.out_side, s.out_side
            ));
            layers.push("silu".to_string());
        }
        layers.push("global_avg_pool".to_string());
        let l = self.layout();
        layers.push(format!("dense {}->{} (encoder)", l.embed.inputs, l.embed.outputs));
        layers.push(format!("dense {}->{} + l2norm (projection)", l.proj.inputs, l.proj.outputs));
        layers.push(format!("dense {}->1 + sigmoid (classifier)", l.cls.inputs));
        layers
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct ConvShape {
    cin: usize,
    cout: usize,
    in_side: usize,
    out_side: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct ConvLayer {
    shape: ConvShape,
    w: usize,
    b: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Dense {
    inputs: usize,
    outputs: usize,
    w: usize,
    b: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    convs: Vec<ConvLayer>,
    embed: Dense,
    proj: Dense,
    cls: Dense,
    total: usize,
}

/// All trainable parameters in one flat vector with a fixed ordering:
/// for each conv block its weights `[out][in][ky][kx]` then biases, then the
/// encoder dense layer, the projection head, and the classifier head (each as
/// row-major weights `[out][in]` followed by biases).
#[derive(Debug, Clone, PartialEq)]
pub struct PenParams {
    arch: Architecture,
    layout: Layout,
    values: Vec<f64>,
}

impl PenParams {
    pub fn zeros(arch: &Architecture) -> Result<Self> {
        arch.validate()?;
        let layout = arch.layout();
        Ok(PenParams {
            values: vec![0.0; layout.total],
            arch: arch.clone(),
            layout,
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(arch: &Architecture, rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(arch)?;
        let mut fill = |values: &mut [f64], fan_in: usize, fan_out: usize| {
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for v in values {
                *v = rng.random_range(-a..a);
            }
        };
        let layout = p.layout.clone();
        for c in &layout.convs {
            let n = c.shape.cout * c.shape.cin * TAPS;
            fill(&mut p.values[c.w..c.w + n], c.shape.cin * TAPS, c.shape.cout * TAPS);
        }
        for d in [layout.embed, layout.proj, layout.cls] {
            fill(&mut p.values[d.w..d.w + d.inputs * d.outputs], d.inputs, d.outputs);
        }
        Ok(p)
    }

    pub fn from_values(arch: &Architecture, values: Vec<f64>) -> Result<Self> {
        let mut p = Self::zeros(arch)?;
        if values.len() != p.values.len() {
            return Err(SafeError::DimensionMismatch {
                expected: p.values.len(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SafeError::Validation("parameters must be finite".into()));
        }
        p.values = values;
        Ok(p)
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `true` for weights, `false` for biases.
    pub fn weight_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.values.len()];
        for c in &self.layout.convs {
            mask[c.w..c.b].fill(true);
        }
        for d in [self.layout.embed, self.layout.proj, self.layout.cls] {
            mask[d.w..d.b].fill(true);
        }
        mask
    }

    /// Makes the projection head the identity on its first `d′` coordinates.
    pub fn set_projection_identity(&mut self) {
        let d = self.layout.proj;
        let block = &mut self.values[d.w..d.b + d.outputs];
        block.fill(0.0);
        for i in 0..d.outputs {
            block[i * d.inputs + i] = 1.0;
        }
    }

    /// Overwrites the classifier head with the given weights and bias.
    pub fn set_classifier(&mut self, weights: &[f64], bias: f64) -> Result<()> {
        let d = self.layout.cls;
        if weights.len() != d.inputs {
            return Err(SafeError::DimensionMismatch {
                expected: d.inputs,
                got: weights.len(),
            });
        }
        self.values[d.w..d.b].copy_from_slice(weights);
        self.values[d.b] = bias;
        Ok(())
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

#[inline]
fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

pub(crate) struct ConvCache {
    /// Unfolded receptive fields, `[position][cin·9]`.
    cols: Vec<f64>,
    /// Pre-activation outputs, `[cout][position]`.
    pre: Vec<f64>,
}

/// Intermediate values from one encoder forward pass.
pub(crate) struct EncoderCache {
    convs: Vec<ConvCache>,
    pooled: Vec<f64>,
}

fn im2col(x: &[f64], s: &ConvShape, cols: &mut Vec<f64>) {
    let (side, out) = (s.in_side, s.out_side);
    let k = s.cin * TAPS;
    cols.clear();
    cols.resize(out * out * k, 0.0);
    for oy in 0..out {
        for ox in 0..out {
            let row = &mut cols[(oy * out + ox) * k..(oy * out + ox + 1) * k];
            for ky in 0..KERNEL {
                let iy = (2 * oy + ky) as isize - 1;
                if iy < 0 || iy >= side as isize {
                    continue;
                }
                for kx in 0..KERNEL {
                    let ix = (2 * ox + kx) as isize - 1;
                    if ix < 0 || ix >= side as isize {
                        continue;
                    }
                    let src = iy as usize * side + ix as usize;
                    for c in 0..s.cin {
                        row[c * TAPS + ky * KERNEL + kx] = x[c * side * side + src];
                    }
                }
            }
        }
    }
}

fn col2im_add(dcols: &[f64], s: &ConvShape, dx: &mut [f64]) {
    let (side, out) = (s.in_side, s.out_side);
    let k = s.cin * TAPS;
    for oy in 0..out {
        for ox in 0..out {
            let row = &dcols[(oy * out + ox) * k..(oy * out + ox + 1) * k];
            for ky in 0..KERNEL {
                let iy = (2 * oy + ky) as isize - 1;
                if iy < 0 || iy >= side as isize {
                    continue;
                }
                for kx in 0..KERNEL {
                    let ix = (2 * ox + kx) as isize - 1;
                    if ix < 0 || ix >= side as isize {
                        continue;
                    }
                    let dst = iy as usize * side + ix as usize;
                    for c in 0..s.cin {
                        dx[c * side * side + dst] += row[c * TAPS + ky * KERNEL + kx];
                    }
                }
            }
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

impl PenParams {
    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.arch.input_len() {
            return Err(SafeError::DimensionMismatch {
                expected: self.arch.input_len(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub(crate) fn encoder_forward(&self, x: &[f64]) -> (Vec<f64>, EncoderCache) {
        let mut act = x.to_vec();
        let mut convs = Vec::with_capacity(self.layout.convs.len());
        for layer in &self.layout.convs {
            let s = &layer.shape;
            let k = s.cin * TAPS;
            let positions = s.out_side * s.out_side;
            let mut cols = Vec::new();
            im2col(&act, s, &mut cols);
            let w = &self.values[layer.w..layer.b];
            let b = &self.values[layer.b..layer.b + s.cout];
            let mut pre = vec![0.0; s.cout * positions];
            for o in 0..s.cout {
                let wo = &w[o * k..(o + 1) * k];
                let out = &mut pre[o * positions..(o + 1) * positions];
                for (p, slot) in out.iter_mut().enumerate() {
                    *slot = b[o] + dot(wo, &cols[p * k..(p + 1) * k]);
                }
            }
            act = pre.iter().map(|&v| silu(v)).collect();
            convs.push(ConvCache { cols, pre });
        }
        let last = self.layout.convs.last().expect("validated").shape;
        let positions = last.out_side * last.out_side;
        let pooled: Vec<f64> = act
            .chunks_exact(positions)
            .map(|c| c.iter().sum::<f64>() / positions as f64)
            .collect();
        let z = self.dense_forward(self.layout.embed, &pooled);
        (z, EncoderCache { convs, pooled })
    }

    /// Accumulates parameter gradients for `dz` into `grad`.
    pub(crate) fn encoder_backward(&self, cache: &EncoderCache, dz: &[f64], grad: &mut [f64]) {
        let mut dpooled = vec![0.0; cache.pooled.len()];
        self.dense_backward(self.layout.embed, &cache.pooled, dz, grad, Some(&mut dpooled));

        let last = self.layout.convs.last().expect("validated").shape;
        let positions = last.out_side * last.out_side;
        let mut dact: Vec<f64> = dpooled
            .iter()
            .flat_map(|&g| std::iter::repeat_n(g / positions as f64, positions))
            .collect();

        for (li, layer) in self.layout.convs.iter().enumerate().rev() {
            let s = &layer.shape;
            let k = s.cin * TAPS;
            let positions = s.out_side * s.out_side;
            let cc = &cache.convs[li];
            let dpre: Vec<f64> = dact
                .iter()
                .zip(&cc.pre)
                .map(|(&g, &z)| g * silu_grad(z))
                .collect();
            let need_dx = li > 0;
            let mut dcols = if need_dx { vec![0.0; positions * k] } else { Vec::new() };
            let w = &self.values[layer.w..layer.b];
            let (gw, rest) = grad[layer.w..].split_at_mut(layer.b - layer.w);
            let gb = &mut rest[..s.cout];
            for o in 0..s.cout {
                let go = &dpre[o * positions..(o + 1) * positions];
                gb[o] += go.iter().sum::<f64>();
                let gwo = &mut gw[o * k..(o + 1) * k];
                let wo = &w[o * k..(o + 1) * k];
                for (p, &g) in go.iter().enumerate() {
                    if g == 0.0 {
                        continue;
                    }
                    axpy(g, &cc.cols[p * k..(p + 1) * k], gwo);
                    if need_dx {
                        axpy(g, wo, &mut dcols[p * k..(p + 1) * k]);
                    }
                }
            }
            if need_dx {
                let mut dx = vec![0.0; s.cin * s.in_side * s.in_side];
                col2im_add(&dcols, s, &mut dx);
                dact = dx;
            }
        }
    }

    fn dense_forward(&self, d: Dense, x: &[f64]) -> Vec<f64> {
        let w = &self.values[d.w..d.b];
        let b = &self.values[d.b..d.b + d.outputs];
        (0..d.outputs)
            .map(|o| b[o] + dot(&w[o * d.inputs..(o + 1) * d.inputs], x))
            .collect()
    }

    fn dense_backward(&self, d: Dense, x: &[f64], dy: &[f64], grad: &mut [f64], dx: Option<&mut [f64]>) {
        for (o, &g) in dy.iter().enumerate() {
            grad[d.b + o] += g;
            axpy(g, x, &mut grad[d.w + o * d.inputs..d.w + (o + 1) * d.inputs]);
        }
        if let Some(dx) = dx {
            let w = &self.values[d.w..d.b];
            for (o, &g) in dy.iter().enumerate() {
                axpy(g, &w[o * d.inputs..(o + 1) * d.inputs], dx);
            }
        }
    }

    /// Projection head output before normalization.
    pub(crate) fn projection_raw(&self, z: &[f64]) -> Vec<f64> {
        self.dense_forward(self.layout.proj, z)
    }

    pub(crate) fn projection_backward(&self, z: &[f64], du: &[f64], grad: &mut [f64], dz: &mut [f64]) {
        self.dense_backward(self.layout.proj, z, du, grad, Some(dz));
    }

    pub(crate) fn logit(&self, z: &[f64]) -> f64 {
        self.dense_forward(self.layout.cls, z)[0]
    }

    pub(crate) fn classifier_backward(&self, z: &[f64], dlogit: f64, grad: &mut [f64], dz: &mut [f64]) {
        self.dense_backward(self.layout.cls, z, &[dlogit], grad, Some(dz));
    }
}

/// Embedding `z = f(x)` of a channel-major input in `[0, 1]`.
pub fn encode(params: &PenParams, input: &[f64]) -> Result<Vec<f64>> {
    params.check_input(input)?;
    Ok(params.encoder_forward(input).0)
}

/// Unit-norm contrastive projection `v = g(z) / ‖g(z)‖`.
pub fn project(params: &PenParams, z: &[f64]) -> Result<Vec<f64>> {
    if z.len() != params.arch.embed_dim {
        return Err(SafeError::DimensionMismatch {
            expected: params.arch.embed_dim,
            got: z.len(),
        });
    }
    l2_normalize(&params.projection_raw(z))
}

/// Probability that the patch is Unhealthy.
pub fn classify(params: &PenParams, z: &[f64]) -> Result<f64> {
    if z.len() != params.arch.embed_dim {
        return Err(SafeError::DimensionMismatch {
            expected: params.arch.embed_dim,
            got: z.len(),
        });
    }
    Ok(sigmoid(params.logit(z)))
}

pub(crate) fn sigmoid_of(x: f64) -> f64 {
    sigmoid(x)
}

/// Converts interleaved 8-bit RGB (`[row][col][c]`) to the channel-major
/// `[0, 1]` layout the encoder expects.
pub fn to_input(pixels: &[u8], side: usize) -> Vec<f64> {
    let plane = side * side;
    let mut out = vec![0.0; 3 * plane];
    for (i, px) in pixels.chunks_exact(3).enumerate().take(plane) {
        for c in 0..3 {
            out[c * plane + i] = px[c] as f64 / 255.0;
        }
    }
    out
}
