pub mod bitmap;
pub mod catalog;
pub mod config;
pub mod dataset;
pub mod error;
pub mod filtered;
pub mod harness;
pub mod hnsw;
pub mod io;
pub mod scann;
pub mod storage;
pub mod synth;
pub mod workload;

pub use bitmap::FilterBitmap;
pub use dataset::{brute_force_topk, distance, Dataset, DistanceMetric, Neighbor, RowId, Vector};
pub use error::{Error, Result};
