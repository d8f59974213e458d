//! Exact statevector tools for quantum neural tangent kernels: layered
//! variational circuits, their derivative kernels, gradient-descent dynamics
//! with closed-form predictions, and hybrid quantum-classical ensembles.

pub mod ansatz;
pub mod data;
pub mod dynamics;
pub mod error;
pub mod hybrid;
pub mod kernels;
pub mod linalg;
pub mod quantum;
pub mod random;

pub use error::{QntkError, Result};
