// `!(x > 0.0)` rejects NaN on purpose; index loops mirror the math.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod error;
pub mod frame;
pub mod io;
pub mod lstm;
pub mod model;
pub mod numerics;
pub mod preprocess;
pub mod scene;
pub mod train;

pub use error::{Error, Result};
