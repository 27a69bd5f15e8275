pub mod error;
pub mod geometry;
pub mod quadrature;
pub mod trace_spaces;
pub mod operators;
pub mod oracle;
pub mod incident;
pub mod transmission;
pub mod cq;
pub mod config;
pub mod io;
pub mod verify;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
