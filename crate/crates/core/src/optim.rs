//! Adam and the mini-batch training loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::layers::bce_loss;
use crate::model::{DeepAdsModel, Gradients};
use crate::tensor::Tensor;

/// Bias-corrected Adam moments and hyperparameters.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub const DEFAULT_LR: f64 = 1e-3;

    /// Zeroed moments for parameter tensors of the given shapes.
    pub fn new<'a>(shapes: impl IntoIterator<Item = &'a [usize]>) -> Result<Self> {
        let m = shapes
            .into_iter()
            .map(Tensor::zeros)
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            v: m.clone(),
            m,
            t: 0,
            lr: Self::DEFAULT_LR,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        })
    }

    pub fn for_model(model: &DeepAdsModel) -> Self {
        Self::new(model.param_tensors().map(Tensor::shape))
            .expect("model parameter shapes are valid")
    }

    pub fn with_lr(mut self, lr: f64) -> Self {
        self.lr = lr;
        self
    }

    /// Number of steps taken so far.
    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn first_moments(&self) -> &[Tensor] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Tensor] {
        &self.v
    }

    /// One Adam update of `params` in place.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[&Tensor]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} tensors, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.shape() != m.shape() || g.shape() != m.shape() {
                return Err(Error::Shape(format!(
                    "param {:?} / grad {:?} do not match optimizer state {:?}",
                    p.shape(),
                    g.shape(),
                    m.shape()
                )));
            }
        }

        self.t += 1;
        let t = self.t as i32;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            let it = p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut());
            for (((p, &g), m), v) in it {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Applies one Adam step to every model parameter.
pub fn adam_step(model: &mut DeepAdsModel, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    let grads: Vec<&Tensor> = grads.tensors().collect();
    let mut params: Vec<&mut Tensor> = model
        .convs_mut()
        .iter_mut()
        .flat_map(|p| {
            let (w, b) = p.weights_and_bias_mut();
            [w, b]
        })
        .collect();
    state.step(&mut params, &grads)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub pos_weight: f64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1,
            batch_size: 4,
            seed: 1,
            pos_weight: 1.0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Domain("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Domain("batch size must be >= 1".into()));
        }
        if !(self.pos_weight >= 1.0 && self.pos_weight.is_finite()) {
            return Err(Error::Domain(format!(
                "pos_weight must be finite and >= 1, got {}",
                self.pos_weight
            )));
        }
        Ok(())
    }

    /// Visiting order of `n` samples in epoch `epoch`.
    pub fn permutation(&self, n: usize, epoch: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        if self.shuffle {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            rng.set_stream(epoch as u64);
            order.shuffle(&mut rng);
        }
        order
    }
}

/// Loss and parameter gradients for a single sample.
pub fn sample_gradients(
    model: &DeepAdsModel,
    sample: &Sample,
    pos_weight: f64,
) -> Result<(f64, Gradients)> {
    let (heatmap, cache) = model.forward(&sample.image)?;
    let hm_shape = heatmap.shape().to_vec();
    let (h, w) = (hm_shape[0], hm_shape[1]);
    let (loss, grad) = bce_loss(&heatmap.reshape(&[h, w])?, &sample.mask, pos_weight)?;
    let grads = model.backward(cache, &grad.reshape(&hm_shape)?)?;
    Ok((loss, grads))
}

/// One pass over `data` in mini-batches, one Adam step per batch with the
/// gradient averaged over the batch. Returns the mean per-pixel loss over
/// the epoch, measured before each batch's update.
pub fn train_epoch(
    model: &mut DeepAdsModel,
    data: &[Sample],
    cfg: &TrainConfig,
    epoch: usize,
    state: &mut AdamState,
) -> Result<f64> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyInput("training set has no samples".into()));
    }
    let (h, w) = model.input_hw();
    if let Some(s) = data.iter().find(|s| s.mask.shape() != [h, w]) {
        return Err(Error::Shape(format!(
            "sample {} is {:?}, model expects {h}x{w}",
            s.id,
            s.mask.shape()
        )));
    }

    let order = cfg.permutation(data.len(), epoch);
    let mut loss_sum = 0.0;
    for batch in order.chunks(cfg.batch_size) {
        let per_sample = batch
            .par_iter()
            .map(|&i| sample_gradients(model, &data[i], cfg.pos_weight))
            .collect::<Result<Vec<_>>>()?;

        // Reduced in batch order so the result does not depend on thread count.
        let scale = 1.0 / batch.len() as f64;
        let mut total = Gradients::zeros_for(model);
        for (loss, g) in &per_sample {
            loss_sum += loss;
            total.add_scaled(g, scale)?;
        }
        adam_step(model, &total, state)?;
    }
    Ok(loss_sum / data.len() as f64)
}

/// Runs `cfg.epochs` epochs, reporting each epoch's mean loss to `on_epoch`
/// (1-based epoch number).
pub fn train(
    model: &mut DeepAdsModel,
    data: &[Sample],
    cfg: &TrainConfig,
    state: &mut AdamState,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let loss = train_epoch(model, data, cfg, epoch, state)?;
        on_epoch(epoch + 1, loss);
        losses.push(loss);
    }
    Ok(losses)
}
