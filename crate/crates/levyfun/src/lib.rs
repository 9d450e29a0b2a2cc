//! Densities, distribution functions, Laplace transforms and moments of
//! exponential and inverse-power integral functionals of integer-valued
//! subordinators, with an ε-lattice extension to general pure-jump
//! subordinators and a Monte Carlo sampler for validation.
//!
//! | module | contents |
//! |---|---|
//! | [`catalog`] | jump laws and process specifications |
//! | [`series`] | driftless `∫ q^{S_t} dt`: Dirichlet-series density |
//! | [`drifted`] | `∫ q^{S_t + μt} dt`: piecewise basis recurrence |
//! | [`general`] | decreasing functionals, inverse-power densities |
//! | [`levy`] | lattice discretization of Lévy measures |
//! | [`mc`] | Monte Carlo sampler and KS statistic |

// `!(x > 0.0)` checks double as NaN rejection.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod catalog;
pub mod dd;
pub mod drifted;
pub mod error;
pub mod general;
pub mod levy;
pub mod mc;
pub mod quad;
pub mod series;
pub mod special;

mod cheb;

pub use catalog::{IvsSpec, JumpPmf};
pub use error::{Error, Result};
pub use series::{ExpFunctionalModel, SeriesOptions};
