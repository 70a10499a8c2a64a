//! Morris-Shore reduction of bipartite light-matter equations and a
//! spectral simulator for dark-state polaritons of the dual-V
//! stationary-light scheme.

pub mod config;
pub mod dispersion;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod model;
pub mod ms;
pub mod propagator;
pub mod protocols;
pub mod run;

pub use error::{Error, Result};
