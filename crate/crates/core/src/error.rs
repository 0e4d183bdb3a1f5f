//! Error type shared by every module of the crate.

use crate::solver::SolveResult;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("point {point:?} lies outside the chart bounds")]
    OutsideChart { point: Vec<f64> },

    #[error("point is closer than {margin:e} to the chart boundary; cannot finite-difference")]
    InsufficientMargin { margin: f64 },

    #[error("Killing field is not timelike here: g(K,K) = {gkk}")]
    KillingNotTimelike { gkk: f64 },

    #[error("g0 is not positive definite at a sampled point {point:?}")]
    NotPositiveDefinite { point: Vec<f64> },

    #[error("beta must be positive everywhere on the chart; got {value} at {point:?}")]
    NonPositiveBeta { value: f64, point: Vec<f64> },

    #[error("metric matrix is singular at the evaluation point")]
    SingularMetric,

    #[error("projection onto the submanifold stalled at |Phi| = {residual:.3e}")]
    ProjectionFailed { residual: f64, last: Vec<f64> },

    #[error("submanifold jacobian is rank-deficient at the evaluation point")]
    DegenerateSubmanifold,

    #[error("curve endpoint is off the submanifold: |Phi| = {residual:.3e} > {tol:.1e}")]
    EndpointOffManifold { residual: f64, tol: f64 },

    #[error("curve has a zero-velocity segment (index {segment})")]
    ZeroVelocitySegment { segment: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid curve: {0}")]
    InvalidCurve(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("boundary submanifolds intersect at sampled resolution")]
    NotDisjoint,

    #[error("boundary pair does not satisfy {hypothesis}: {reason}")]
    InvalidBoundary { hypothesis: String, reason: String },

    #[error("no certified geodesic after {restarts} restart(s); best attempt attached")]
    NoGeodesicFound { restarts: usize, best: Box<SolveResult> },

    #[error("optimizer did not reach the first-order tolerance")]
    NotConverged,

    #[error("distance estimation failed: no restart converged")]
    NoDistanceEstimate,

    #[error("refinement diverged; the original result is attached")]
    RefinementFailed { original: Box<SolveResult> },

    #[error("unknown builtin scenario `{0}`")]
    UnknownScenario(String),

    #[error("internal error: {0}")]
    Internal(String),
}
