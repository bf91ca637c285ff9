//! Encoder-decoder network for locating advert candidate spaces in images,
//! trained from scratch, plus the segmentation metrics and ROC protocol used
//! to score heat-maps from it or any other model.

pub mod data;
pub mod error;
mod fsutil;
pub mod layers;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod tensor;

pub use data::{Dataset, QuadAnnotation, Sample};
pub use error::{Error, Result};
pub use fsutil::write_atomic;
pub use layers::ConvParams;
pub use metrics::{ConfusionCounts, MetricReport, RocPoint};
pub use model::{DeepAdsModel, Gradients};
pub use optim::{AdamState, TrainConfig};
pub use tensor::Tensor;
