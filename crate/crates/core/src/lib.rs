//! Exact structure-algorithm analysis, left-inversion and numerical
//! verification for input-affine polynomial control systems.

pub mod error;
pub mod inversion;
pub mod linear;
pub mod lowdisc;
pub mod model;
pub mod parse;
pub mod structure;
pub mod symbolic;
pub mod verify;

pub use error::{Error, Result};
