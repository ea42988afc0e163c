//! Numerical laboratory for weighted functional inequalities on subelliptic
//! spaces: step-two groups, Grushin and Greiner operators, filiform groups.

pub mod calculus;
pub mod error;
pub mod geometry;
pub mod inequalities;
pub mod isoperimetry;
pub mod measures;
pub mod quadrature;
pub mod rng;

pub use error::{LabError, Result};
pub use geometry::{make_space, Point, Space, SpaceKind};
