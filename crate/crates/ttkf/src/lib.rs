//! Tensor-train Kalman filtering for exponentially long state vectors, with an
//! application to recursive identification of discrete-time MIMO Volterra
//! systems.
//!
//! The state mean is carried as a tensor train whose first core holds a batch
//! index, the covariance as a tensor-train matrix with the same extension, and
//! every filter step (predict, innovate, gain, update) is computed core by
//! core without ever materializing the `n^d`-long state. SVD-based rounding
//! keeps the ranks bounded after each rank-growing operation.
//!
//! Modules:
//! - [`dense`]: dense multi-way arrays, the index conventions, and the small
//!   product zoo (mode-k, Kronecker, Khatri-Rao, column-wise outer) that every
//!   oracle test is built on;
//! - [`tt`]: tensor trains / TT-matrices, addition, rounding, TT-SVD, and the
//!   closed-form initializers;
//! - [`kalman`]: the tensor-train filter and a dense reference filter;
//! - [`volterra`]: Volterra models in TT form, simulation, recursive
//!   identification, and the synthetic experiment generators;
//! - [`io`]: the input/output record CSV schema and the TT container file.

// `!(x > 0.0)` is the NaN-rejecting form of the positivity guards
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dense;
pub mod error;
pub mod io;
pub mod kalman;
pub(crate) mod linalg;
pub mod parallel;
pub mod timing;
pub mod tt;
pub mod volterra;

pub use dense::DenseTensor;
pub use error::{Error, Result};
pub use tt::{RoundingPolicy, TTMatrix, TensorTrain};

/// Dense materialization guard: operations that would allocate a dense tensor
/// with more than this many entries fail with [`Error::SizeGuard`]. Dense code
/// exists as an oracle path, not a production path.
pub const DENSE_SIZE_GUARD: usize = 1 << 20;
