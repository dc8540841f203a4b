//! Evolution systems generated by `Δ + <M(t)x + f(t), ∇> - M(t)` on vector
//! fields, their spectral evaluation on a periodic box, decay studies and a
//! mild-solution solver for the projected nonlinear problem.

// `!(x > 0.0)` is deliberate: it rejects NaN along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]
pub mod config;
pub mod error;
pub mod evolution_op;
pub mod experiments;
pub mod field_grid;
pub mod gaussian_kernel;
pub mod kato_solver;
pub mod matrix_flow;

pub use error::{Error, Result};
