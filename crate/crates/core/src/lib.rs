//! Warped-product curvature, weighted minimal graphs and their stability.

pub mod cli;
pub mod error;
pub mod foliation;
pub mod linalg;
pub mod minimize;
pub mod oracle;
pub mod stability;
pub mod surface;
pub mod warp;

pub use error::{Error, Result};
