//! Sparse autoregressive networks for high-dimensional density estimation.
//!
//! Each dimension is modeled by an L1-penalized logistic (binary data) or
//! linear-Gaussian (continuous data) regression on all earlier dimensions.
//! On top of the single network the crate provides EM-trained mixtures with
//! untied, tied and automatically shared parameters, and a sequence of gated
//! mixtures over a partition of the dimensions whose likelihood is still exact.
//!
//! All per-dimension fits are independent, so training parallelizes over
//! dimensions through rayon. Results never depend on the number of workers.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arn;
pub mod cli;
pub mod data;
pub mod error;
pub mod format;
pub mod math;
pub mod mixture;
pub mod pnm;
pub mod seqmix;
pub mod solvers;

pub use arn::{AutoregressiveNet, Conditional, GaussianConditional, LogisticConditional};
pub use data::{ColMatrix, DataKind, Dataset, EncodingMeta, MatrixFormat, RawMatrix, Role};
pub use error::{Error, Result};
pub use mixture::{MixtureModel, Responsibilities, SharingMode};
pub use seqmix::{Partition, SequenceModel};
pub use format::{load_model, save_model, Model};
pub use solvers::{SampleWeights, SolverConfig, SparseWeights};
