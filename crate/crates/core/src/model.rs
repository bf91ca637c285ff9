//! The encoder-decoder network: a fixed stack of seven 3×3 convolutions
//! with three 2× max-pools on the way down and three 2× nearest upsamples
//! on the way up, ending in a single-channel sigmoid heat-map.
//!
//! ```text
//! conv 3→16, relu, pool      H   → H/2
//! conv 16→8, relu, pool      H/2 → H/4
//! conv 8→8,  relu, pool      H/4 → H/8
//! conv 8→8,  relu            H/8
//! up, conv 8→8,  relu        H/8 → H/4
//! up, conv 8→16, relu        H/4 → H/2
//! up, conv 16→1, sigmoid     H/2 → H
//! ```

use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::layers::{self, ConvParams, LayerCache};
use crate::tensor::Tensor;

pub const DEFAULT_INPUT_HW: (usize, usize) = (200, 200);

/// `(c_in, c_out)` of each convolution, in order.
pub const CONV_CHANNELS: [(usize, usize); 7] =
    [(3, 16), (16, 8), (8, 8), (8, 8), (8, 8), (8, 16), (16, 1)];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    /// Index into the model's convolution list.
    Conv(usize),
    Relu,
    MaxPool,
    Upsample,
    Sigmoid,
}

#[rustfmt::skip]
pub const TOPOLOGY: [Layer; 20] = {
    use Layer::*;
    [
        Conv(0), Relu, MaxPool,
        Conv(1), Relu, MaxPool,
        Conv(2), Relu, MaxPool,
        Conv(3), Relu,
        Upsample, Conv(4), Relu,
        Upsample, Conv(5), Relu,
        Upsample, Conv(6), Sigmoid,
    ]
};

const CHECKPOINT_MAGIC: &[u8; 4] = b"DADS";
const CHECKPOINT_VERSION: u32 = 1;

static NEXT_STATE_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_state_id() -> u64 {
    NEXT_STATE_ID.fetch_add(1, Ordering::Relaxed)
}

fn check_input_hw((h, w): (usize, usize)) -> Result<()> {
    if h < 8 || w < 8 || h % 8 != 0 || w % 8 != 0 {
        return Err(Error::Shape(format!(
            "input size {h}x{w} must be a positive multiple of 8 in both dims"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct DeepAdsModel {
    input_hw: (usize, usize),
    convs: Vec<ConvParams>,
    // Changes whenever parameters may have changed; ties caches to a state.
    state_id: u64,
}

/// Everything one backward pass needs from its forward pass.
#[derive(Debug)]
pub struct ForwardCache {
    state_id: u64,
    caches: Vec<LayerCache>,
    output_shapes: Vec<Vec<usize>>,
}

impl ForwardCache {
    /// Output shape of each layer in [`TOPOLOGY`] order.
    pub fn output_shapes(&self) -> &[Vec<usize>] {
        &self.output_shapes
    }

    /// Per-layer caches in [`TOPOLOGY`] order.
    pub fn layers(&self) -> &[LayerCache] {
        &self.caches
    }
}

/// Gradient of one convolution's weights and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrad {
    pub weights: Tensor,
    pub bias: Tensor,
}

/// One [`ParamGrad`] per convolution, in topology order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub convs: Vec<ParamGrad>,
}

impl Gradients {
    pub fn zeros_for(model: &DeepAdsModel) -> Self {
        Self {
            convs: model
                .convs
                .iter()
                .map(|p| ParamGrad {
                    weights: p.weights().zeros_like(),
                    bias: p.bias().zeros_like(),
                })
                .collect(),
        }
    }

    pub fn add_scaled(&mut self, other: &Gradients, alpha: f64) -> Result<()> {
        if self.convs.len() != other.convs.len() {
            return Err(Error::Shape("gradient sets differ in length".into()));
        }
        for (a, b) in self.convs.iter_mut().zip(&other.convs) {
            a.weights.add_scaled(&b.weights, alpha)?;
            a.bias.add_scaled(&b.bias, alpha)?;
        }
        Ok(())
    }

    /// Flat view over every gradient tensor, weights before bias per layer.
    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.convs.iter().flat_map(|g| [&g.weights, &g.bias])
    }
}

impl DeepAdsModel {
    /// Uniform fan-in initialisation: weights in ±sqrt(6 / (9 c_in)), zero bias.
    pub fn init(seed: u64, input_hw: (usize, usize)) -> Result<Self> {
        check_input_hw(input_hw)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let convs = CONV_CHANNELS
            .iter()
            .map(|&(c_in, c_out)| {
                let mut p = ConvParams::zeros(c_in, c_out)?;
                let bound = (6.0 / (9 * c_in) as f64).sqrt();
                for w in p.weights_mut().data_mut() {
                    *w = rng.gen_range(-bound..=bound);
                }
                Ok(p)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            input_hw,
            convs,
            state_id: fresh_state_id(),
        })
    }

    /// Model with every weight and bias set to zero.
    pub fn zeros(input_hw: (usize, usize)) -> Result<Self> {
        check_input_hw(input_hw)?;
        let convs = CONV_CHANNELS
            .iter()
            .map(|&(c_in, c_out)| ConvParams::zeros(c_in, c_out))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            input_hw,
            convs,
            state_id: fresh_state_id(),
        })
    }

    pub fn input_hw(&self) -> (usize, usize) {
        self.input_hw
    }

    pub fn convs(&self) -> &[ConvParams] {
        &self.convs
    }

    /// Mutable parameters. Invalidates any outstanding forward caches.
    pub fn convs_mut(&mut self) -> &mut [ConvParams] {
        self.state_id = fresh_state_id();
        &mut self.convs
    }

    pub fn num_params(&self) -> usize {
        self.convs.iter().map(ConvParams::num_params).sum()
    }

    /// Flat view over every parameter tensor, weights before bias per layer.
    pub fn param_tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.convs.iter().flat_map(|p| [p.weights(), p.bias()])
    }

    /// Runs `x` (`[H, W, 3]`) through the network, returning the `[H, W, 1]`
    /// heat-map.
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, ForwardCache)> {
        let (h, w) = self.input_hw;
        if x.shape() != [h, w, 3] {
            return Err(Error::Shape(format!(
                "model expects [{h}, {w}, 3] input, got {:?}",
                x.shape()
            )));
        }
        let mut caches = Vec::with_capacity(TOPOLOGY.len());
        let mut output_shapes = Vec::with_capacity(TOPOLOGY.len());
        let mut act = x.clone();
        for layer in TOPOLOGY {
            let (y, cache) = match layer {
                Layer::Conv(k) => layers::conv2d_forward(&act, &self.convs[k])?,
                Layer::Relu => layers::relu(&act),
                Layer::MaxPool => layers::maxpool2_forward(&act)?,
                Layer::Upsample => layers::upsample2_forward(&act)?,
                Layer::Sigmoid => layers::sigmoid(&act),
            };
            output_shapes.push(y.shape().to_vec());
            caches.push(cache);
            act = y;
        }
        Ok((
            act,
            ForwardCache {
                state_id: self.state_id,
                caches,
                output_shapes,
            },
        ))
    }

    /// Heat-map as an `[H, W]` tensor of probabilities.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        let (heatmap, _) = self.forward(x)?;
        let (h, w) = self.input_hw;
        heatmap.reshape(&[h, w])
    }

    /// Gradients of every parameter given the heat-map gradient.
    pub fn backward(&self, cache: ForwardCache, grad_heatmap: &Tensor) -> Result<Gradients> {
        if cache.state_id != self.state_id {
            return Err(Error::State(
                "forward cache is stale: parameters changed since the forward pass".into(),
            ));
        }
        let (h, w) = self.input_hw;
        if grad_heatmap.shape() != [h, w, 1] {
            return Err(Error::Shape(format!(
                "heat-map gradient must be [{h}, {w}, 1], got {:?}",
                grad_heatmap.shape()
            )));
        }
        let mut grads = Gradients::zeros_for(self);
        let mut g = grad_heatmap.clone();
        for (layer, layer_cache) in TOPOLOGY.iter().zip(cache.caches).rev() {
            g = match *layer {
                Layer::Conv(k) => {
                    let cg = layers::conv2d_backward(&g, layer_cache, &self.convs[k])?;
                    grads.convs[k] = ParamGrad {
                        weights: cg.weights,
                        bias: cg.bias,
                    };
                    cg.input
                }
                Layer::Relu => layers::relu_backward(&g, layer_cache)?,
                Layer::MaxPool => layers::maxpool2_backward(&g, layer_cache)?,
                Layer::Upsample => layers::upsample2_backward(&g, layer_cache)?,
                Layer::Sigmoid => layers::sigmoid_backward(&g, layer_cache)?,
            };
        }
        Ok(grads)
    }

    /// Serialises to the little-endian checkpoint format:
    /// `"DADS"`, version `u32`, height `u32`, width `u32`, then per conv
    /// `c_in u32, c_out u32`, weights and bias as `f64` in row-major order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 8 * self.num_params() + 8 * self.convs.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.input_hw.0 as u32).to_le_bytes());
        out.extend_from_slice(&(self.input_hw.1 as u32).to_le_bytes());
        for p in &self.convs {
            out.extend_from_slice(&(p.c_in() as u32).to_le_bytes());
            out.extend_from_slice(&(p.c_out() as u32).to_le_bytes());
            for v in p.weights().data().iter().chain(p.bias().data()) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4)?;
        if magic != CHECKPOINT_MAGIC {
            return Err(corrupt_at(
                0,
                format!(
                    "bad magic {:?}, expected \"DADS\"",
                    String::from_utf8_lossy(magic)
                ),
            ));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(corrupt_at(
                4,
                format!("unsupported version {version}, expected {CHECKPOINT_VERSION}"),
            ));
        }
        let hw_at = r.pos;
        let input_hw = (r.u32()? as usize, r.u32()? as usize);
        check_input_hw(input_hw).map_err(|e| corrupt_at(hw_at, e.to_string()))?;

        let mut convs = Vec::with_capacity(CONV_CHANNELS.len());
        for (k, &(c_in, c_out)) in CONV_CHANNELS.iter().enumerate() {
            let at = r.pos;
            let got = (r.u32()? as usize, r.u32()? as usize);
            if got != (c_in, c_out) {
                return Err(corrupt_at(
                    at,
                    format!("conv {k} has channels {got:?}, expected ({c_in}, {c_out})"),
                ));
            }
            let mut p = ConvParams::zeros(c_in, c_out)?;
            r.f64s(p.weights_mut().data_mut())?;
            r.f64s(p.bias_mut().data_mut())?;
            convs.push(p);
        }
        if r.pos != bytes.len() {
            return Err(corrupt_at(
                r.pos,
                format!("{} trailing bytes", bytes.len() - r.pos),
            ));
        }
        Ok(Self {
            input_hw,
            convs,
            state_id: fresh_state_id(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

fn corrupt_at(offset: usize, reason: String) -> Error {
    Error::CorruptCheckpoint {
        offset: offset as u64,
        reason,
    }
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(corrupt_at(
                self.bytes.len(),
                format!("truncated: needed {n} bytes from offset {}", self.pos),
            ));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64s(&mut self, out: &mut [f64]) -> Result<()> {
        for v in out {
            let at = self.pos;
            *v = f64::from_le_bytes(self.take(8)?.try_into().unwrap());
            if !v.is_finite() {
                return Err(corrupt_at(at, format!("non-finite parameter {v}")));
            }
        }
        Ok(())
    }
}
