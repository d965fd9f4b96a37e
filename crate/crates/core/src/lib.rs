//! Optimal design of validation experiments.

pub mod calibration;
pub mod design;
pub mod distribution;
pub mod ecdf;
pub mod error;
pub mod functional;
pub mod io;
pub mod param;
pub mod projectile;
pub mod rng;
pub mod sampling;
pub mod sensitivity;
pub mod transport;
pub mod validation;

pub use distribution::{Distribution, DistributionSpec};
pub use ecdf::EmpiricalCdf;
pub use error::{Error, Result, Stage};
pub use functional::{ClosureFunctional, FunctionalKind, GradientSource, ModelFunctional};
pub use param::{Bounds, ParameterLayout, ParameterVector};
pub use rng::RngSpec;
pub use sampling::lhs_sample;
pub use sensitivity::{
    eig_sym, influence_matrix, influence_matrix_with_samples, normalized_distance,
    spectral_distance, EigenDecomposition, InfluenceMatrix,
};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/parameters.md")]
    mod parameters {}
    #[doc = include_str!("../../../book/src/influence.md")]
    mod influence {}
    #[doc = include_str!("../../../book/src/scenario.md")]
    mod scenario {}
    #[doc = include_str!("../../../book/src/sensor.md")]
    mod sensor {}
    #[doc = include_str!("../../../book/src/calibration.md")]
    mod calibration {}
    #[doc = include_str!("../../../book/src/validation.md")]
    mod validation {}
    #[doc = include_str!("../../../book/src/projectile.md")]
    mod projectile {}
    #[doc = include_str!("../../../book/src/transport.md")]
    mod transport {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
