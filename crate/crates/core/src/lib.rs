//! Regularized reconstruction of the initial state of a semilinear diffusion
//! equation from noisy discrete final-time data, a noisy source, and a noisy
//! time-dependent diffusion coefficient.
//!
//! The pipeline: sample noisy observations on a midpoint design grid
//! (`random_data`), estimate the final state and source by trigonometric
//! series (`estimator`), then run the quasi-reversibility backward solver
//! with spectral cutoff and truncated nonlinearity (`operators`, `solver`)
//! under the parameter schedules of `params`. `experiment` wires it all into
//! Monte Carlo MISE studies behind the `glqr` CLI.

pub mod error;
pub mod estimator;
pub mod experiment;
pub mod operators;
pub mod params;
pub mod random_data;
pub mod solver;
pub mod spectral;

pub use error::{Error, Result};
