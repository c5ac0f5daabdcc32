//! Numerical toolkit for T-periodically perturbed autonomous systems
//! `x' = psi(x) + eps*phi(t, x, eps)`: nondegenerate limit cycles and their
//! Floquet data, the Malkin bifurcation function, topological-degree formulas
//! predicting T-periodic solutions, and direct numerical verification of
//! those predictions at small eps.

pub mod adjoint;
pub mod bundled;
pub mod compile;
pub mod cycle;
pub mod degree;
pub mod error;
pub mod expr;
pub mod lcg;
pub mod malkin;
pub mod ode;
pub mod selftest;
pub mod system;
pub mod verify;

pub use error::{Error, Result};
pub use system::SystemSpec;

// re-exported so downstream crates share the exact linear-algebra types
pub use nalgebra;
pub use num_complex;
