//! Adaptive multilevel stochastic Galerkin finite elements for the
//! parametric diffusion problem `-div(a(x, y) grad u) = f` with affine
//! coefficient `a(x, y) = a_0(x) + sum_m y_m a_m(x)`, `y_m` uniform on `[-1, 1]`.

// element kernels index small fixed-size arrays in parallel
#![allow(clippy::needless_range_loop)]

pub mod assembly;
pub mod basis;
pub mod driver;
pub mod error;
pub mod estimator;
pub mod marking;
pub mod mesh;
pub mod overlay;
pub mod problems;
pub mod quadrature;
pub mod sparse;
pub mod system;

pub use error::{Error, Result};
