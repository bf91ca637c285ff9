//! Forward and backward passes for the layer kinds of the network.
//!
//! Every forward returns its output together with a [`LayerCache`]; the
//! matching backward consumes that cache. All functions are pure, so
//! different samples can be pushed through in parallel.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Spatial kernel size of every convolution.
pub const KERNEL: usize = 3;

/// Clamp applied to probabilities before taking logs in [`bce_loss`].
pub const BCE_EPS: f64 = 1e-7;

/// Largest `f64` strictly below one.
const ONE_MINUS_ULP: f64 = 1.0 - f64::EPSILON / 2.0;

/// Weights `[3, 3, c_in, c_out]` and bias `[c_out]` of a 3×3 convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    weights: Tensor,
    bias: Tensor,
}

impl ConvParams {
    pub fn new(weights: Tensor, bias: Tensor) -> Result<Self> {
        let (c_in, c_out) = match *weights.shape() {
            [KERNEL, KERNEL, c_in, c_out] => (c_in, c_out),
            _ => {
                return Err(Error::InvalidShape(format!(
                    "conv weights must be [3, 3, c_in, c_out], got {:?}",
                    weights.shape()
                )))
            }
        };
        if bias.shape() != [c_out] {
            return Err(Error::InvalidShape(format!(
                "conv bias must be [{c_out}], got {:?}",
                bias.shape()
            )));
        }
        debug_assert!(c_in >= 1);
        Ok(Self { weights, bias })
    }

    pub fn zeros(c_in: usize, c_out: usize) -> Result<Self> {
        Self::new(
            Tensor::zeros(&[KERNEL, KERNEL, c_in, c_out])?,
            Tensor::zeros(&[c_out])?,
        )
    }

    pub fn c_in(&self) -> usize {
        self.weights.shape()[2]
    }

    pub fn c_out(&self) -> usize {
        self.weights.shape()[3]
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    pub fn bias(&self) -> &Tensor {
        &self.bias
    }

    pub fn weights_mut(&mut self) -> &mut Tensor {
        &mut self.weights
    }

    pub fn bias_mut(&mut self) -> &mut Tensor {
        &mut self.bias
    }

    pub fn weights_and_bias_mut(&mut self) -> (&mut Tensor, &mut Tensor) {
        (&mut self.weights, &mut self.bias)
    }

    pub fn num_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// State retained by a forward call for its backward call.
#[derive(Debug, Clone)]
pub enum LayerCache {
    Conv {
        input: Tensor,
    },
    Relu {
        input: Tensor,
    },
    Sigmoid {
        output: Tensor,
    },
    /// `argmax[k]` is the flat input offset that won output element `k`.
    MaxPool {
        input_shape: [usize; 3],
        argmax: Vec<usize>,
    },
    Upsample {
        input_shape: [usize; 3],
    },
}

impl LayerCache {
    fn kind(&self) -> &'static str {
        match self {
            LayerCache::Conv { .. } => "conv",
            LayerCache::Relu { .. } => "relu",
            LayerCache::Sigmoid { .. } => "sigmoid",
            LayerCache::MaxPool { .. } => "maxpool",
            LayerCache::Upsample { .. } => "upsample",
        }
    }
}

fn wrong_cache(expected: &str, got: &LayerCache) -> Error {
    Error::State(format!("{expected} backward given a {} cache", got.kind()))
}

fn expect_shape(t: &Tensor, shape: &[usize], what: &str) -> Result<()> {
    if t.shape() != shape {
        return Err(Error::Shape(format!(
            "{what}: expected {shape:?}, got {:?}",
            t.shape()
        )));
    }
    Ok(())
}

/// Gradients of a convolution with respect to its input and parameters.
#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
}

/// 3×3 convolution with one pixel of zero padding on each side, so the
/// output keeps the input's spatial size.
pub fn conv2d_forward(x: &Tensor, p: &ConvParams) -> Result<(Tensor, LayerCache)> {
    let (h, w, c_in) = x.hwc()?;
    if c_in != p.c_in() {
        return Err(Error::Shape(format!(
            "conv expects {} input channels, got {c_in}",
            p.c_in()
        )));
    }
    let c_out = p.c_out();
    let mut y = Tensor::zeros(&[h, w, c_out])?;
    let xs = x.data();
    let ws = p.weights.data();
    let bs = p.bias.data();
    let ys = y.data_mut();

    for i in 0..h {
        for j in 0..w {
            let out = &mut ys[(i * w + j) * c_out..][..c_out];
            out.copy_from_slice(bs);
            for di in 0..KERNEL {
                let Some(ii) = (i + di).checked_sub(1).filter(|&ii| ii < h) else {
                    continue;
                };
                for dj in 0..KERNEL {
                    let Some(jj) = (j + dj).checked_sub(1).filter(|&jj| jj < w) else {
                        continue;
                    };
                    let px = &xs[(ii * w + jj) * c_in..][..c_in];
                    let tap = &ws[(di * KERNEL + dj) * c_in * c_out..][..c_in * c_out];
                    for (&xv, wrow) in px.iter().zip(tap.chunks_exact(c_out)) {
                        for (o, &wv) in out.iter_mut().zip(wrow) {
                            *o += xv * wv;
                        }
                    }
                }
            }
        }
    }
    Ok((y, LayerCache::Conv { input: x.clone() }))
}

pub fn conv2d_backward(grad_y: &Tensor, cache: LayerCache, p: &ConvParams) -> Result<ConvGrads> {
    let LayerCache::Conv { input: x } = cache else {
        return Err(wrong_cache("conv", &cache));
    };
    let (h, w, c_in) = x.hwc()?;
    if c_in != p.c_in() {
        return Err(Error::State(format!(
            "cached input has {c_in} channels but parameters expect {}",
            p.c_in()
        )));
    }
    let c_out = p.c_out();
    expect_shape(grad_y, &[h, w, c_out], "conv upstream gradient")?;

    let mut gx = x.zeros_like();
    let mut gw = p.weights.zeros_like();
    let mut gb = p.bias.zeros_like();
    let xs = x.data();
    let ws = p.weights.data();
    let gys = grad_y.data();
    let gxs = gx.data_mut();
    let gws = gw.data_mut();
    let gbs = gb.data_mut();

    for i in 0..h {
        for j in 0..w {
            let g = &gys[(i * w + j) * c_out..][..c_out];
            for (b, &gv) in gbs.iter_mut().zip(g) {
                *b += gv;
            }
            for di in 0..KERNEL {
                let Some(ii) = (i + di).checked_sub(1).filter(|&ii| ii < h) else {
                    continue;
                };
                for dj in 0..KERNEL {
                    let Some(jj) = (j + dj).checked_sub(1).filter(|&jj| jj < w) else {
                        continue;
                    };
                    let base = (ii * w + jj) * c_in;
                    let tap_off = (di * KERNEL + dj) * c_in * c_out;
                    let tap = &ws[tap_off..][..c_in * c_out];
                    let gtap = &mut gws[tap_off..][..c_in * c_out];
                    for c in 0..c_in {
                        let xv = xs[base + c];
                        let wrow = &tap[c * c_out..][..c_out];
                        let gwrow = &mut gtap[c * c_out..][..c_out];
                        let mut acc = 0.0;
                        for o in 0..c_out {
                            acc += g[o] * wrow[o];
                            gwrow[o] += xv * g[o];
                        }
                        gxs[base + c] += acc;
                    }
                }
            }
        }
    }
    Ok(ConvGrads {
        input: gx,
        weights: gw,
        bias: gb,
    })
}

/// 2×2 max-pooling with stride 2. Ties go to the first maximum in
/// row-major order within the block.
pub fn maxpool2_forward(x: &Tensor) -> Result<(Tensor, LayerCache)> {
    let (h, w, c) = x.hwc()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Shape(format!(
            "max-pool needs even spatial dims, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut y = Tensor::zeros(&[oh, ow, c])?;
    let mut argmax = vec![0usize; oh * ow * c];
    let xs = x.data();
    let ys = y.data_mut();
    for i in 0..oh {
        for j in 0..ow {
            for ch in 0..c {
                let mut best = (2 * i * w + 2 * j) * c + ch;
                for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                    let at = ((2 * i + di) * w + 2 * j + dj) * c + ch;
                    if xs[at] > xs[best] {
                        best = at;
                    }
                }
                let k = (i * ow + j) * c + ch;
                ys[k] = xs[best];
                argmax[k] = best;
            }
        }
    }
    Ok((
        y,
        LayerCache::MaxPool {
            input_shape: [h, w, c],
            argmax,
        },
    ))
}

pub fn maxpool2_backward(grad_y: &Tensor, cache: LayerCache) -> Result<Tensor> {
    let LayerCache::MaxPool {
        input_shape,
        argmax,
    } = cache
    else {
        return Err(wrong_cache("maxpool", &cache));
    };
    let [h, w, c] = input_shape;
    expect_shape(grad_y, &[h / 2, w / 2, c], "max-pool upstream gradient")?;
    let mut gx = Tensor::zeros(&input_shape)?;
    let gxs = gx.data_mut();
    for (&g, &at) in grad_y.data().iter().zip(&argmax) {
        gxs[at] += g;
    }
    Ok(gx)
}

/// Nearest-neighbour 2× upsampling: `y[i, j] = x[i / 2, j / 2]`.
pub fn upsample2_forward(x: &Tensor) -> Result<(Tensor, LayerCache)> {
    let (h, w, c) = x.hwc()?;
    let (oh, ow) = (2 * h, 2 * w);
    let mut y = Tensor::zeros(&[oh, ow, c])?;
    let xs = x.data();
    let ys = y.data_mut();
    for i in 0..oh {
        for j in 0..ow {
            let src = &xs[((i / 2) * w + j / 2) * c..][..c];
            ys[(i * ow + j) * c..][..c].copy_from_slice(src);
        }
    }
    Ok((
        y,
        LayerCache::Upsample {
            input_shape: [h, w, c],
        },
    ))
}

pub fn upsample2_backward(grad_y: &Tensor, cache: LayerCache) -> Result<Tensor> {
    let LayerCache::Upsample { input_shape } = cache else {
        return Err(wrong_cache("upsample", &cache));
    };
    let [h, w, c] = input_shape;
    let (oh, ow) = (2 * h, 2 * w);
    expect_shape(grad_y, &[oh, ow, c], "upsample upstream gradient")?;
    let mut gx = Tensor::zeros(&input_shape)?;
    let gys = grad_y.data();
    let gxs = gx.data_mut();
    for i in 0..oh {
        for j in 0..ow {
            let dst = &mut gxs[((i / 2) * w + j / 2) * c..][..c];
            for (d, &g) in dst.iter_mut().zip(&gys[(i * ow + j) * c..][..c]) {
                *d += g;
            }
        }
    }
    Ok(gx)
}

pub fn relu(x: &Tensor) -> (Tensor, LayerCache) {
    let mut y = x.clone();
    for v in y.data_mut() {
        *v = v.max(0.0);
    }
    (y, LayerCache::Relu { input: x.clone() })
}

/// Passes the gradient where the forward input was strictly positive.
pub fn relu_backward(grad_y: &Tensor, cache: LayerCache) -> Result<Tensor> {
    let LayerCache::Relu { input } = cache else {
        return Err(wrong_cache("relu", &cache));
    };
    expect_shape(grad_y, input.shape(), "relu upstream gradient")?;
    let mut gx = grad_y.clone();
    for (g, &x) in gx.data_mut().iter_mut().zip(input.data()) {
        if x <= 0.0 {
            *g = 0.0;
        }
    }
    Ok(gx)
}

/// Logistic function, kept strictly inside (0, 1) even where `f64` would
/// round to an endpoint.
pub fn sigmoid_scalar(x: f64) -> f64 {
    let y = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    y.clamp(f64::MIN_POSITIVE, ONE_MINUS_ULP)
}

pub fn sigmoid(x: &Tensor) -> (Tensor, LayerCache) {
    let mut y = x.clone();
    for v in y.data_mut() {
        *v = sigmoid_scalar(*v);
    }
    (y.clone(), LayerCache::Sigmoid { output: y })
}

pub fn sigmoid_backward(grad_y: &Tensor, cache: LayerCache) -> Result<Tensor> {
    let LayerCache::Sigmoid { output } = cache else {
        return Err(wrong_cache("sigmoid", &cache));
    };
    expect_shape(grad_y, output.shape(), "sigmoid upstream gradient")?;
    let mut gx = grad_y.clone();
    for (g, &y) in gx.data_mut().iter_mut().zip(output.data()) {
        *g *= y * (1.0 - y);
    }
    Ok(gx)
}

/// Mean per-pixel binary cross-entropy with the positive term weighted by
/// `pos_weight`, and its derivative with respect to `pred`.
pub fn bce_loss(pred: &Tensor, truth: &Tensor, pos_weight: f64) -> Result<(f64, Tensor)> {
    if pred.shape() != truth.shape() {
        return Err(Error::Shape(format!(
            "prediction {:?} vs truth {:?}",
            pred.shape(),
            truth.shape()
        )));
    }
    if !(pos_weight >= 1.0 && pos_weight.is_finite()) {
        return Err(Error::Domain(format!(
            "pos_weight must be finite and >= 1, got {pos_weight}"
        )));
    }
    if let Some(bad) = truth.data().iter().find(|&&y| y != 0.0 && y != 1.0) {
        return Err(Error::Domain(format!("truth value {bad} is not binary")));
    }

    let n = pred.len() as f64;
    let mut grad = pred.zeros_like();
    let mut total = 0.0;
    for ((g, &p), &y) in grad
        .data_mut()
        .iter_mut()
        .zip(pred.data())
        .zip(truth.data())
    {
        let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
        if y == 1.0 {
            total -= pos_weight * p.ln();
            *g = -pos_weight / (p * n);
        } else {
            total -= (1.0 - p).ln();
            *g = 1.0 / ((1.0 - p) * n);
        }
    }
    Ok((total / n, grad))
}
