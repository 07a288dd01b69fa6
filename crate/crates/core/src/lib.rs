//! Operator-valued positive-definite kernels on finite sample sets.
//!
//! The crate works with kernels `K: S × S → L(H)` where `S` is a finite list of
//! sample points and `H = C^h`. Everything is materialized densely:
//!
//! - [`kernels`] evaluates kernels, flattens them to scalar kernels and
//!   assembles block Gram matrices.
//! - [`rkhs`] factors a block Gram as `K(s, t) = V(s)* V(t)` and relates any
//!   two such factorizations by a unitary.
//! - [`gaussian`] samples `H`-valued Gaussian processes with covariance `K`.
//! - [`ordering`] decides `K ≤ L` and computes the Radon–Nikodym operator.
//! - [`cpmaps`] handles completely positive maps on `M_d`: Choi matrices,
//!   Kraus operators, Stinespring dilations and commutant derivatives.
//! - [`optim`] fits the trace-parametrized kernel regression model over
//!   density operators.
//!
//! Inner products are conjugate-linear in the first argument and linear in
//! the second, everywhere.

pub mod cpmaps;
pub mod error;
pub mod gaussian;
pub mod kernels;
pub mod numerics;
pub mod optim;
pub mod ordering;
pub mod rkhs;

pub use error::{Error, Result};
pub use numerics::{CMatrix, CVector, HermitianMatrix};

pub use num_complex::Complex64;
