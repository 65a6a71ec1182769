//! Discrete surface Ricci flow for circle packing metrics on triangle meshes
//! in Euclidean, hyperbolic and spherical background geometry.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod flow;
pub mod geometry;
pub mod hessian;
pub mod layout;
pub mod mesh;
pub mod obj;
pub mod oracle;
pub mod shapes;
pub mod solver;

pub use error::{Error, Result};
pub use geometry::{Background, CirclePackingMetric, ConformalState, Epsilon, Scheme};
pub use mesh::Mesh;
