//! Dense f64 tensors, a reverse-mode tape, SplitMix64, Adam and
//! finite-difference gradient checking.

mod adam;
mod gradcheck;
mod prng;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{grad_check, grad_check_fn, grad_check_fn_five_point, relative_error};
pub use prng::Prng;
pub use tape::{log_softmax_rows, softmax_rows, Gradients, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("non-finite value encountered: {0}")]
    NonFiniteValue(String),
}

pub type Result<T> = std::result::Result<T, NumericsError>;
