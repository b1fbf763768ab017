//! Half-space boundary-value problems for linearized kinetic equations on
//! discrete velocity spaces.
//!
//! The pipeline runs roughly in module order: build a velocity grid
//! ([`velocity_space`]), sample a kinetic model on it ([`model_catalog`]),
//! assemble the linearized collision operator ([`collision_operator`]), split
//! its kernel by the sign of the transport form ([`kernel_spectral`]), build the
//! penalized operator ([`penalization`]), solve ([`halfspace_solver`]) and
//! study how the solutions change with the flow speed ([`regime_analysis`]).
//!
//! Grids and quadrature rules are generic over the scalar type; everything
//! from the collision operator on works in `f64`.

pub mod collision_operator;
pub mod error;
pub mod halfspace_solver;
pub mod kernel_spectral;
pub mod linalg;
pub mod model_catalog;
pub mod penalization;
pub mod quadrature;
pub mod regime_analysis;
pub mod velocity_space;

pub use error::{Error, Result};

/// Floating-point scalar accepted by the grid layer.
pub trait Scalar:
    num_traits::Float + num_traits::FromPrimitive + std::fmt::Debug + Send + Sync + 'static
{
}

impl<T> Scalar for T where
    T: num_traits::Float + num_traits::FromPrimitive + std::fmt::Debug + Send + Sync + 'static
{
}

/// Double-precision grid spec.
pub type GridSpec = velocity_space::GridSpec<f64>;
/// Double-precision discrete space.
pub type Space = velocity_space::DiscreteSpace<f64>;
/// Double-precision half-space split.
pub type Split = velocity_space::HalfSpaceSplit<f64>;
/// Dense matrix alias used throughout.
pub type Mat = nalgebra::DMatrix<f64>;
/// Dense vector alias used throughout.
pub type Vector = nalgebra::DVector<f64>;
