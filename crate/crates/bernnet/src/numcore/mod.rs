//! Deterministic dense linear algebra and RNG substrate.
//!
//! All math is 64-bit; every operation has a fixed evaluation order so a
//! seeded run reproduces bitwise on any platform at thread count 1.

mod matrix;
mod rng;
mod solve;

pub use matrix::Matrix;
pub use rng::Rng;
pub use solve::{chebyshev_nodes, polyfit_max_residual, solve};
