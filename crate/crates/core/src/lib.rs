//! Variance-reduced stochastic optimization for finite-sum generalized
//! linear models: data handling, losses, sampling and stepsizes, the
//! methods themselves, lazy sparse execution, and diagnostic oracles.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod diag;
pub mod error;
pub mod objective;
pub mod optim;
pub mod schedule;
pub mod synth;
pub mod validate;
pub mod vecfile;

pub use data::{parse_libsvm, read_libsvm_file, write_libsvm, Dataset, RandomSource, SparseRow};
pub use diag::{StopRule, TraceRecord};
pub use error::{Error, Result};
pub use objective::{GlmObjective, LossKind, SmoothnessInfo};
pub use optim::{run, JitMode, Method, RunConfig, RunFailure, Trace};
pub use schedule::{ArmijoParams, Batch, Sampler, Sampling, SamplingScheme, StepsizePolicy};
