#![no_std]

extern crate alloc;

pub mod baselines;
pub mod error;
pub mod eval;
pub mod market;
pub mod masking;
pub mod model;
pub mod pipeline;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
