//! Disk-resident approximate nearest-neighbor search over page-aligned
//! graph nodes with PCA-balanced 4-bit product quantization.

pub mod cache;
pub mod dataset;
pub mod distance;
pub mod error;
pub mod graph;
pub mod index;
pub mod kmeans;
pub mod layout;
pub mod pca;
pub mod pq;
pub mod roofline;
pub mod search;
pub mod store;

pub use error::{Error, Result};
