//! Numerical laboratory for a cut-off Yang-Mills model on T⁴: constrained
//! Fourier-mode propagators, Φ-averaged correlators, and the fermionized
//! perturbation series with Berezin-integral evaluation.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod seeds;
pub mod lie_core;
pub mod mode_space;
pub mod gauge_form;
pub mod correlator;
pub mod perturbation_boson;
pub mod fermion_engine;
pub mod harness;

pub use error::{Error, Result};
