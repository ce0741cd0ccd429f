// Validation code uses `!(x >= lo)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregate;
pub mod deviation;
pub mod error;
pub mod exec;
pub mod geo;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod polarity;
pub mod sentiment;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use exec::Exec;
pub use polarity::Polarity;
