//! Single-image dehazing toolkit.
//!
//! * [`raster`] planar `[0, 1]` images, I/O and colour conversion
//! * [`edge`] statistical, linear and fuzzy gradient maps
//! * [`threshold`] Otsu / entropy / ISODATA thresholds and binary areas
//! * [`sky`] homogeneity-ratio sky detection and fuzzy c-means grouping
//! * [`enhance`] illumination/reflectance split, CLAHE and PDE enhancement
//! * [`metrics`] no-reference and full-reference dehazing metrics
//! * [`harness`] batch driver and CSV outputs
//! * [`synth`] synthetic haze generator

pub mod edge;
pub mod enhance;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod raster;
pub mod sky;
pub mod synth;
pub mod threshold;

pub use error::{Error, Result};
