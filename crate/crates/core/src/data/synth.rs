//! Synthetic stand-in scenes: a two-tone vertical gradient background with
//! one flat-coloured convex quadrilateral as the candidate space.
//!
//! Background channels stay in `[0.05, 0.45]` while the quad has one
//! "key" channel in `[0.75, 0.95]`, so that channel's mean inside the mask
//! exceeds the outside mean by well over 0.2 even with noise.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::raster::{rasterize_quad, QuadAnnotation};
use super::Sample;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const NOISE: f64 = 0.05;
const BACKGROUND: (f64, f64) = (0.05, 0.45);
const KEY: (f64, f64) = (0.75, 0.95);
/// Quad area bounds as fractions of the frame.
const AREA: (f64, f64) = (0.08, 0.30);
/// Mask coverage bounds (area bounds widened for pixel quantisation).
const COVERAGE: (f64, f64) = (0.05, 0.35);
const MAX_ATTEMPTS: usize = 256;
/// Corners snap to this grid so they print exactly in `quads.csv`.
const CORNER_STEP: f64 = 1.0 / 16.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSample {
    pub sample: Sample,
    pub quad: QuadAnnotation,
}

fn snap(v: f64) -> f64 {
    (v / CORNER_STEP).round() * CORNER_STEP
}

fn jittered_quad(rng: &mut impl Rng, (h, w): (usize, usize)) -> Option<(QuadAnnotation, Tensor)> {
    let (fh, fw) = (h as f64, w as f64);
    let frame = fh * fw;
    let target = rng.gen_range(0.12..0.22) * frame;
    let aspect: f64 = rng.gen_range(0.5..2.0);
    let rw = (target * aspect).sqrt().min(0.9 * fw);
    let rh = (target / rw).min(0.9 * fh);
    let x0 = rng.gen_range(0.0..=fw - rw);
    let y0 = rng.gen_range(0.0..=fh - rh);
    let jitter = 0.15 * rw.min(rh);
    let mut corners = [(x0, y0), (x0 + rw, y0), (x0 + rw, y0 + rh), (x0, y0 + rh)];
    for (x, y) in &mut corners {
        *x = snap((*x + rng.gen_range(-jitter..=jitter)).clamp(0.0, fw));
        *y = snap((*y + rng.gen_range(-jitter..=jitter)).clamp(0.0, fh));
    }
    let quad = QuadAnnotation::new(corners).ok()?;
    let area = quad.area() / frame;
    if !quad.is_convex() || area < AREA.0 || area > AREA.1 {
        return None;
    }
    let mask = rasterize_quad(&quad, (h, w)).ok()?;
    let coverage = mask.sum() / frame;
    (COVERAGE.0..=COVERAGE.1)
        .contains(&coverage)
        .then_some((quad, mask))
}

/// Centred rectangle on whole pixels covering about a quarter of the frame;
/// used only when random draws keep failing (tiny frames).
fn fallback_quad((h, w): (usize, usize)) -> Result<(QuadAnnotation, Tensor)> {
    let (x0, x1) = ((w / 4) as f64, (w / 4 + (w / 2).max(1)) as f64);
    let (y0, y1) = ((h / 4) as f64, (h / 4 + (h / 2).max(1)) as f64);
    let quad = QuadAnnotation::new([(x0, y0), (x1, y0), (x1, y1), (x0, y1)])?;
    let mask = rasterize_quad(&quad, (h, w))?;
    Ok((quad, mask))
}

fn generate_one(seed: u64, index: usize, (h, w): (usize, usize)) -> Result<SyntheticSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);

    let top: [f64; 3] = std::array::from_fn(|_| rng.gen_range(BACKGROUND.0..=BACKGROUND.1));
    let bottom: [f64; 3] = std::array::from_fn(|_| rng.gen_range(BACKGROUND.0..=BACKGROUND.1));
    let mut fill: [f64; 3] = std::array::from_fn(|_| rng.gen_range(BACKGROUND.0..=BACKGROUND.1));
    fill[rng.gen_range(0..3)] = rng.gen_range(KEY.0..=KEY.1);

    let (quad, mask) = (0..MAX_ATTEMPTS)
        .find_map(|_| jittered_quad(&mut rng, (h, w)))
        .map_or_else(|| fallback_quad((h, w)), Ok)?;

    let mut image = Tensor::zeros(&[h, w, 3])?;
    let px = image.data_mut();
    let m = mask.data();
    for i in 0..h {
        // Smoothstep blend between the two background tones.
        let t = if h > 1 {
            i as f64 / (h - 1) as f64
        } else {
            0.0
        };
        let t = t * t * (3.0 - 2.0 * t);
        for j in 0..w {
            let inside = m[i * w + j] == 1.0;
            for c in 0..3 {
                let base = if inside {
                    fill[c]
                } else {
                    top[c] * (1.0 - t) + bottom[c] * t
                };
                let noisy = base + rng.gen_range(-NOISE..=NOISE);
                px[(i * w + j) * 3 + c] = noisy.clamp(0.0, 1.0);
            }
        }
    }
    Ok(SyntheticSample {
        sample: Sample::new(format!("synth_{index:05}"), image, mask)?,
        quad,
    })
}

/// `count` scenes of size `hw`; sample `k` depends only on `(seed, k)`.
pub fn gen_synthetic(count: usize, hw: (usize, usize), seed: u64) -> Result<Vec<SyntheticSample>> {
    if count == 0 {
        return Err(Error::Domain("sample count must be >= 1".into()));
    }
    if hw.0 == 0 || hw.1 == 0 {
        return Err(Error::InvalidShape(format!("frame {}x{}", hw.0, hw.1)));
    }
    (0..count)
        .into_par_iter()
        .map(|k| generate_one(seed, k, hw))
        .collect()
}
