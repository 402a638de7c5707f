//! Range-view LiDAR segmentation toolkit: rasterization, augmentation,
//! multi-view partitioning, post-processing, metrics and a small
//! transformer-style segmenter.

pub mod augment;
pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod occupancy;
pub mod post;
pub mod raster;
pub mod render;
pub mod types;
pub mod views;

pub use error::{Error, Result};
pub use types::*;

pub use augment::AugmentConfig;
pub use metrics::{ConfusionMatrix, PanopticEval, PqReport};
pub use model::{ModelConfig, Segmenter};
pub use post::KnnParams;
pub use raster::{project_point, rasterize, unproject, Projection};
pub use views::{ViewPartition, ViewRaster};
