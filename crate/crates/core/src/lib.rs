//! Reading-comprehension core for the EQuANt model family.
//!
//! A QANet-style convolution + self-attention reader with an answerability
//! head, trained jointly on span extraction and answerability prediction.
//! Everything in this crate is pure computation over in-memory data: a small
//! reverse-mode autodiff engine ([`tensor`]), tokenization and batching
//! ([`corpus`]), the network itself ([`model`]), the joint loss and training
//! state machine ([`train`]) and SQuAD-style scoring ([`eval`]).
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the CLI and
//! the checkpointing loop live in the companion `equant` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod corpus;
pub mod error;
pub mod eval;
pub mod model;
pub mod real;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use real::Real;
pub use tensor::{Tape, Tensor, Var};
