//! High-order discontinuous Galerkin Poisson solver with geometric
//! multigrid and tensor-product Schwarz smoothers.
//!
//! The discretization is the symmetric interior penalty method on nested
//! meshes of quadrilaterals or hexahedra. Smoothers are additive or
//! multiplicative Schwarz methods on cells or vertex patches whose local
//! solvers use fast diagonalization of separable (Kronecker-sum) matrices.

pub mod dense;
pub mod dgop;
pub mod error;
pub mod experiment;
pub mod fastdiag;
pub mod flops;
pub mod krylov;
pub mod mesh;
pub mod multigrid;
pub mod polybasis;
pub mod smoothers;
pub mod tensor;

pub use error::{Error, Result};
