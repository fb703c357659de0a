//! Recovery of the initial condition of `c(x) u_t = Δu + q(u)` on a square
//! from lateral Cauchy data, by Carleman-weighted least squares on the
//! coefficients of a spectral time basis.

pub mod assembly;
pub mod basis;
pub mod carleman;
pub mod config;
pub mod error;
pub mod expr;
pub mod forward;
pub mod grid;
pub mod inversion;
pub mod pipeline;
pub mod scenario;
pub mod sparsela;

pub use error::{Error, Result};
