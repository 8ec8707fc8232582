//! Numerical engine for geometry built on a single two-point scalar: the world
//! function `sigma`. Interval structure, scalar products, Gram-determinant
//! collinearity, geometric objects sampled on coordinate charts, metric-induced
//! world functions with consistency checks, and metric-space axiom audits.

pub mod axioms;
pub mod chart;
pub mod error;
pub mod geometry;
pub mod gram;
pub mod models;
pub mod objects;
pub mod riemann;
pub mod sigma;

pub use chart::{Point, PointChart};
pub use error::Error;
pub use sigma::{CausalClass, Interval, WorldFunction};

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
