//! Spectral data of the Zakharov–Shabat operator attached to closed curves in
//! R³ and S³, and closed finite-gap approximation of such curves.

pub mod algebra;
pub mod cli;
pub mod error;
pub mod frame;
pub mod geometry;
pub mod inverse;
pub mod io;
pub mod potential;
pub mod spectral;
pub mod variation;

pub use error::{Error, Result};
