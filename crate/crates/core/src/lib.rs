//! Interpolatory product quadrature for Cauchy principal value integrals
//! `CPV∫ w²(t) f(t)/(t − x) dt` with exponential weights `w = exp(−Q)`.

pub mod acceptance;
pub mod approx;
pub mod cache;
pub mod cpv;
pub mod error;
pub mod extended;
pub mod integrand;
pub mod mrs;
pub mod orthopoly;
pub mod quad;
pub mod quadrature;
pub mod second_kind;
pub mod weight;

pub use error::{Error, Result};
pub use integrand::Builtin;
pub use weight::{Family, ValidationReport, WeightSpec, WeightValue};
