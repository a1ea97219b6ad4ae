//! Minimal dense-tensor core with tape-style reverse-mode automatic
//! differentiation.
//!
//! A [`Graph`] is an arena of executed primitive operations. Every call such as
//! [`Graph::conv2d`] evaluates eagerly, appends a node holding its output value
//! plus whatever the adjoint needs, and returns a [`Var`] handle. Because nodes
//! are appended in execution order the arena is already topologically sorted,
//! so [`Graph::backward`] is a single reverse sweep that sums each node's
//! adjoint contributions into its inputs.
//!
//! ```
//! use numcore::{Graph, Tensor};
//!
//! let mut g = Graph::<f64>::new();
//! let x = g.leaf(Tensor::from_vec(vec![2], vec![1.0, -2.0]).unwrap(), true);
//! let sq = g.mul(x, x).unwrap();
//! let loss = g.sum(sq);
//! g.backward(loss).unwrap();
//! assert_eq!(g.grad(x).unwrap().data(), &[2.0, -4.0]);
//! ```
//!
//! The primitive set is deliberately closed: exactly what the EEGNet,
//! ShallowNet, Deep4Net and TCN architectures need, no general broadcasting.

mod error;
mod graph;
mod kernels;
mod ops;
mod scalar;
mod tensor;

pub mod gradcheck;

pub use error::{Error, Result};
pub use graph::{Graph, Var};
pub use ops::conv::ConvGeom;
pub use ops::norm::{BatchStats, BN_EPS, BN_MOMENTUM};
pub use ops::pool::PoolGeom;
pub use scalar::Scalar;
pub use tensor::Tensor;
