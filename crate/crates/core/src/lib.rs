//! Correlated default-count models.
//!
//! Three one-period mechanisms for the number of defaults `L` in a
//! homogeneous pool of `n` obligors:
//!
//! * cumulative contagion (Davis–Lo): each idiosyncratic default infects
//!   each survivor independently with probability `q`;
//! * threshold contagion with immunization (Torri): one infectious default
//!   exposes every non-immune survivor;
//! * a Gaussian common factor (Vasicek).
//!
//! Around them the crate provides exact count distributions, closed-form
//! moments, moment calibration, VaR/ES, KL projections between families,
//! probit-normal hierarchical extensions, maximum-likelihood fitting on
//! annual panels, simulators and an AIC identifiability experiment.

pub mod calibration;
pub mod data;
pub mod divergence;
pub mod error;
pub mod hierarchy;
pub mod inference;
pub mod models;
pub mod moments;
pub mod numerics;
pub mod riskmeasures;
pub mod simulate;

pub use error::{Error, Result};
