//! Analysis of discrete-time switched linear systems `x(t+1) ∈ {A_1 x, ..., A_k x}`:
//! quasi-controllability and its measure, transient overshoot bounds, stability
//! classification and robustness under perturbation.

pub mod classify;
mod dedup;
pub mod error;
pub mod families;
pub mod geometry;
pub mod linalg;
pub mod measures;
pub mod model;
pub mod reachability;
pub mod robustness;
mod serde_util;

pub use error::{Error, Result};
pub use model::{
    induced_matrix_norm, parse_and_validate, vector_norm, FamilyDocument, Matrix, MatrixFamily,
    NormSpec, SystemSpec, Tolerances, Vector,
};
