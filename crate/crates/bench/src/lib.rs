//! Deterministic fixtures shared by the benchmarks.

use deepads_core::layers::ConvParams;
use deepads_core::{Sample, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn uniform_tensor(seed: u64, shape: &[usize]) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
    Tensor::from_vec(shape, data).expect("length matches shape")
}

pub fn conv_params(seed: u64, c_in: usize, c_out: usize) -> ConvParams {
    ConvParams::new(
        uniform_tensor(seed, &[3, 3, c_in, c_out]),
        uniform_tensor(seed + 1, &[c_out]),
    )
    .expect("valid conv shapes")
}

pub fn synthetic_batch(count: usize, hw: (usize, usize), seed: u64) -> Vec<Sample> {
    deepads_core::data::gen_synthetic(count, hw, seed)
        .expect("count > 0")
        .into_iter()
        .map(|s| s.sample)
        .collect()
}
