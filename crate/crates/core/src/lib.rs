pub mod blowup;
pub mod chart;
pub mod error;
pub mod estimates;
pub mod gauge;
pub mod gl;
pub mod grid;
pub mod identity;
pub mod io;
pub mod linalg;
pub mod norms;
pub mod operators;
pub mod optim;
pub mod spectral;
pub mod sweep;

pub use error::{Error, Result};
