//! Core algorithms for click-through-rate prediction with a time-aware
//! attention network, adversarial negative sampling, isotonic output
//! calibration and ranking metrics.
//!
//! Everything in this crate is deterministic given its seeds: forward and
//! backward passes run in a fixed order over plain `f64` buffers, randomness
//! flows from caller-provided ChaCha streams, and maps with observable
//! iteration order are `BTreeMap`s. The crate is `no_std` (with `alloc`);
//! file formats, CLI and orchestration live in the companion `ctr-cli` crate.

#![no_std]
#![deny(unsafe_code)]
// std's inherent f64 methods shadow num_traits::Float under cfg(test)
#![cfg_attr(test, allow(unused_imports))]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod adam;
pub mod calibration;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod gradcheck;
pub mod model;
pub mod param;
pub mod rng;
pub mod sampler;
pub mod synth;
pub mod tape;
pub mod tensor;
pub mod time;

pub use error::{Error, Result};
pub use param::{ParamId, ParamSet, Parameter};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
