//! Samples, image codecs, annotation rasterisation, resizing and the
//! synthetic scene generator.

mod dataset;
pub mod netpbm;
mod raster;
mod resize;
mod synth;

pub use dataset::{load_dataset, write_dataset, Dataset, MASK_THRESHOLD};
pub use raster::{rasterize_quad, Point, QuadAnnotation};
pub use resize::{resize_image, resize_mask};
pub use synth::{gen_synthetic, SyntheticSample};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// An input image `[H, W, 3]` in [0, 1] with its binary mask `[H, W]`
/// (1 marks the candidate space).
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image: Tensor,
    pub mask: Tensor,
}

impl Sample {
    pub fn new(id: impl Into<String>, image: Tensor, mask: Tensor) -> Result<Self> {
        let id = id.into();
        let (h, w, c) = image.hwc()?;
        if c != 3 {
            return Err(Error::Shape(format!(
                "{id}: image has {c} channels, expected 3"
            )));
        }
        if mask.shape() != [h, w] {
            return Err(Error::Shape(format!(
                "{id}: mask {:?} does not match image {h}x{w}",
                mask.shape()
            )));
        }
        if mask.data().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Domain(format!("{id}: mask is not binary")));
        }
        Ok(Self { id, image, mask })
    }

    pub fn hw(&self) -> (usize, usize) {
        (self.mask.shape()[0], self.mask.shape()[1])
    }
}
