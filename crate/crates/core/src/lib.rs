//! Real-time skin segmentation.
//!
//! A cheap ternary pre-filter discards most of each frame, then a two-stage
//! seeded diffusion segments skin locally inside the surviving windows.
//!
//! - [`imgio`]: raster carrier, color conversion, PPM/PGM files.
//! - [`model`]: training and persistence of the skin color model.
//! - [`prefilter`]: ternary classification, neighbor refinement, windows.
//! - [`motion`]: frame differencing fused with the ternary image.
//! - [`homogeneity`]: multilevel Otsu labels and Sobel edge maps.
//! - [`diffusion`]: seeds, first and second diffusion, final filter.
//! - [`eval`]: confusion counts, precision/recall/F-score, elimination rate.
//! - [`pipeline`]: per-frame orchestration and stream processing.

pub mod corpus;
pub mod diffusion;
pub mod error;
pub mod eval;
pub mod homogeneity;
pub mod imgio;
pub mod model;
pub mod motion;
pub mod params;
pub mod pipeline;
pub mod polygon;
pub mod prefilter;
pub mod synth;

pub use error::{Error, ModelError, Result, Stage};
