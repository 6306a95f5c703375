//! Numerical construction of the global 2x2 parametrix for multi-cut model
//! Riemann-Hilbert problems.
//!
//! The support is a union of N disjoint real intervals (cuts). The associated
//! two-sheeted Riemann surface w^2 = prod (z-a_k)(z-b_k) carries a family of
//! meromorphic differentials with prescribed simple poles; integrating and
//! exponentiating them yields a matrix M(z) that is analytic off the support,
//! tends to the identity at infinity, and satisfies the model jump relations
//! on cuts and gaps. Everything is built from ordinary contour integrals, so
//! no theta functions appear anywhere in the pipeline.

pub mod abelian;
pub mod cli;
pub mod config;
pub mod differentials;
pub mod numerics;
pub mod parametrix;
pub mod period_map;
pub mod second_row;
pub mod surface;

pub use num_complex::Complex64 as C64;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("evaluation at a pole: z = {z}")]
    AtPole { z: C64 },

    #[error("quadrature did not converge: {what} (error {err:.3e} > tolerance {tol:.3e})")]
    QuadratureNonConvergence { what: String, err: f64, tol: f64 },

    #[error("ill-conditioned linear system: {what} (condition {cond:.3e})")]
    IllConditioned { what: String, cond: f64 },

    #[error("period map inversion failed: residual {residual:.3e} after {steps} continuation steps")]
    InversionFailed { residual: f64, steps: usize },

    #[error("sweep resolution too coarse: {0}")]
    CoarseResolution(String),

    #[error("degenerate divisor: {0}")]
    DegenerateDivisor(String),

    #[error("pole/zero cancellation failed near x = {x}: |product| = {magnitude:.3e}")]
    NonCancellation { x: f64, magnitude: f64 },

    #[error("normalization constant unstable: {0}")]
    UnstableNormalization(String),
}

pub type Result<T> = std::result::Result<T, Error>;
