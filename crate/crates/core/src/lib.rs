//! Core algorithms for the emergent-language laboratory.
//!
//! Everything here is pure computation over in-memory values: a small
//! reverse-mode autodiff engine with recurrent cells, corpus statistics,
//! synthetic language generators, the discrimination signalling game,
//! transfer and entropy objectives, a Tree-structured Parzen Estimator and
//! post-hoc statistics. File formats, configuration loading, the search
//! orchestrator and the CLI live in the `emlab` crate.
//!
//! The crate is `no_std` (with `alloc`) when the default `std` feature is
//! disabled; `std` only enables runtime CPU feature detection in the matrix
//! kernels.
#![cfg_attr(not(feature = "std"), no_std)]
#![deny(unsafe_op_in_unsafe_fn)]
// `!(x >= 0.0)` deliberately rejects NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod analysis;
pub mod autodiff;
pub mod corpus;
pub mod lm;
pub mod nn;
pub mod objective;
pub mod optim;
pub mod rng;
pub mod siggame;
pub mod synthlang;
pub mod tensor;
pub mod tpe;

mod error;

pub use error::{Error, Result};
pub use tensor::Tensor;
