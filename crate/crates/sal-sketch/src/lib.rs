//! Sliding-window estimators over the last `N` items of a stream.
//!
//! Every sketch is single-writer and answers queries in bounded space.
//! Queries on an empty window return `None`, which callers treat as
//! "not ready".

mod distinct;
mod exp_hist;
mod hash;
mod prev;
mod quantile;
mod sumvar;
mod topk;

pub use distinct::{DistinctSketch, Registers};
pub use exp_hist::ExpHistogram;
pub use hash::{fmix64, fnv1a};
pub use prev::PrevBuffer;
pub use quantile::QuantileSketch;
pub use sumvar::SumVarSketch;
pub use topk::BasicWindowTopK;

/// Error parameter used for exponential histograms unless overridden.
pub const DEFAULT_EPSILON: f64 = 0.01;

/// HyperLogLog precision used by the engine.
pub const DEFAULT_PRECISION: u8 = 12;

/// Number of closed basic windows kept for a window of `window` items.
pub(crate) fn ring_len(window: u64, basic: u64) -> usize {
    window.div_ceil(basic.max(1)) as usize
}
