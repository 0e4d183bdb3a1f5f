//! Normal geodesics connecting two submanifolds of a standard stationary
//! spacetime.
//!
//! A standard stationary spacetime is a product `M0 x R` carrying the metric
//!
//! ```text
//! g(x)[(y,tau),(y,tau)] = g0(x)[y,y] + 2 g0(x)[delta(x),y] tau - beta(x) tau^2
//! ```
//!
//! with `g0` Riemannian, `delta` a vector field and `beta > 0`, so that
//! `K = d/dt` is a timelike Killing field. Along any geodesic `g(zdot, K)` is
//! a constant `C_z`; restricting the energy functional to curves with that
//! conservation law eliminates the time component and leaves a functional `J`
//! of the spatial curve and the time gap `Delta` alone. Minimizers of `J`
//! with endpoints on two submanifolds `P`, `Q` are normal geodesics: they
//! meet both submanifolds g-orthogonally.
//!
//! The crate provides
//!
//! - [`spacetime`]: metric evaluation, Christoffel symbols, per-curve
//!   geodesic diagnostics;
//! - [`submanifolds`]: level-set boundary data, projections, tangent bases;
//! - [`reduction`]: the conserved quantity `C_z`, reconstruction of `t`,
//!   the reduced functional `J` and its discrete gradient;
//! - [`fermat`]: the Randers-type Fermat metrics `F+`, `F-`, arrival times
//!   and lightlike lifts;
//! - [`submersion`]: the base metric `h1` and horizontal lifts (the route
//!   used for fiber-invariant boundary data);
//! - [`solver`]: seeded multi-start minimization with certification of every
//!   output curve against the conservation laws and boundary conditions;
//! - [`scenarios`]: a catalog of built-in spacetimes with known answers.

pub mod error;
mod geom;
pub mod spacetime;
pub mod submanifolds;
pub mod reduction;
pub mod fermat;
pub mod submersion;
pub mod solver;
pub mod scenarios;

pub use error::{Error, Result};
pub use spacetime::{
    CausalCharacter, ChartBounds, MetricField, SpacetimeCurve, SpacetimePoint, TangentVector,
};
pub use submanifolds::{BoundaryPair, Hypothesis, Submanifold};
pub use reduction::{ConservationRecord, ReducedState, SpatialCurve};
pub use fermat::{FermatSide, FermatStructure};
pub use submersion::BaseMetric;
pub use solver::{Diagnostics, SolveParams, SolveResult, Tolerances};
pub use scenarios::Scenario;
