//! Numerical laboratory for negatively curved Kähler metrics built from a
//! single scalar generating function.

pub mod calabi;
pub mod comparison;
pub mod dimcount;
pub mod error;
pub mod exprdsl;
pub mod genfun;
pub mod numerics;
pub mod planar;
pub mod radial;
pub mod sampled;

pub use error::{Error, Result};
