//! Time-optimal saturation of a dissipative spin-1/2.
//!
//! The magnetization is driven from thermal equilibrium to the center of the
//! Bloch ball with a bounded resonant field. The optimal sequence is a bang
//! pulse, a singular arc along the horizontal line `z = z0`, a second bang
//! pulse and a zero-field singular arc along the `z` axis.
//!
//! * [`model`]: normalized planar dynamics, singular locus and feedback.
//! * [`integrator`]: adaptive Dormand–Prince propagation with events.
//! * [`extremal`]: costate flow, switching function, arc propagation,
//!   switching curve and clock-form comparison.
//! * [`synthesis`]: optimal and inversion-recovery schedules, sweeps,
//!   asymptotics and field maps.

// NaN must fail the positivity checks, hence `!(x > 0.0)`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod extremal;
pub mod integrator;
pub mod model;
pub mod synthesis;

pub use integrator::{Direction, EventSpec, Options, Sample, Stop, Trajectory};
pub use model::{NormalizedParams, PhysicalParams, PlanarState, SingularBranch};
