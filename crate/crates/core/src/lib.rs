//! Cross-domain few-shot classification by ridge reconstruction of query
//! feature maps from support feature maps, with prototype recalibration and
//! normalized distribution alignment.

pub mod backbone;
pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod error;
pub mod nda;
pub mod numerics;
pub mod pfa;
pub mod pipeline;
pub mod rng;

pub use error::{DaraError, Result};
