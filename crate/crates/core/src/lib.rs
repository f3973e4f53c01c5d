//! Synthetic warehouse pallet scenes with occlusion-aware instance
//! segmentation labels in COCO format.

pub mod annotator;
pub mod camera;
pub mod cli;
pub mod coco;
pub mod error;
pub mod evaluator;
pub mod geometry;
pub mod io;
pub mod parallel;
pub mod raster;
pub mod scene;

pub use error::{Error, Result};
