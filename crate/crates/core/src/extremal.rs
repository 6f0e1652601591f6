//! Maximum-principle machinery for the planar system.
//!
//! The pseudo-Hamiltonian is `P . (F0 + u F1)`. Away from the zeros of the
//! switching function `phi = P . F1` the control is bang, `u = 2pi sign(phi)`;
//! on the singular lines it is the feedback [`singular_control`]. The costate
//! is only defined up to a positive factor, so it is renormalized freely.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrator::{self, Direction, EventSpec, IntegrateError, Options, Stop, Trajectory, VectorField};
use crate::model::{
    self, admissibility_bound, control_field, d2r_dot_dtheta2, det_f0_f1, drift_field, flow, horizontal_ordinate,
    polar_diagnostics, singular_control, singular_locus, ModelError, NormalizedParams, PlanarState, SingularBranch,
    LOCUS_TOL,
};

/// Below this `|det(F0, F1)|` the clock form is treated as undefined.
pub const COLLINEAR_GUARD: f64 = 1e-12;
/// Shared-endpoint tolerance for [`clock_compare`].
pub const ENDPOINT_TOL: f64 = 1e-8;
/// Step of the central differences used for the exterior derivative.
pub const CURL_STEP: f64 = 1e-5;
/// Costate norms outside `[1/PMAX, PMAX]` trigger a rescale.
const PMAX: f64 = 1e6;
/// Time allowed for a seeded extremal to reach its switch.
pub const SWITCH_HORIZON: f64 = 3.0;
pub const DEFAULT_SEED_COUNT: usize = 64;
pub const SEED_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExtremalError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error("bang sign disagrees with the switching function (phi = {phi})")]
    SignMismatch { phi: f64 },
    #[error("costate must be nonzero")]
    ZeroAdjoint,
    #[error("state ({y}, {z}) is not on the {branch:?} singular branch")]
    OffBranch { branch: SingularBranch, y: f64, z: f64 },
    #[error("singular control {u} is not admissible at the arc start")]
    ImmediatelyInadmissible { u: f64 },
    #[error("state ({y}, {z}) is not on the singular locus")]
    OffLocus { y: f64, z: f64 },
    #[error("seed y = {0} outside (0, y_min]")]
    InvalidSeed(f64),
    #[error("no admissible seeds: y_min = {0} is below the seed floor")]
    NoSeeds(f64),
    #[error("trajectories do not share endpoints (gap {gap})")]
    EndpointMismatch { gap: f64 },
    #[error("F0 and F1 are collinear near ({y}, {z}); the clock form is undefined")]
    CollinearCrossing { y: f64, z: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdjointState {
    pub p_y: f64,
    pub p_z: f64,
}

impl AdjointState {
    pub fn new(p_y: f64, p_z: f64) -> Self {
        Self { p_y, p_z }
    }

    pub fn norm(&self) -> f64 {
        self.p_y.hypot(self.p_z)
    }

    pub fn scaled(self, k: f64) -> Self {
        Self { p_y: k * self.p_y, p_z: k * self.p_z }
    }

    pub fn normalized(self) -> Result<Self, ExtremalError> {
        let m = self.norm();
        if !(m > 0.0) || !m.is_finite() {
            return Err(ExtremalError::ZeroAdjoint);
        }
        Ok(self.scaled(1.0 / m))
    }

    fn dot(&self, v: [f64; 2]) -> f64 {
        self.p_y * v[0] + self.p_z * v[1]
    }
}

/// `phi = P . F1 = -p_y z + p_z y`.
pub fn switching_function(s: &PlanarState, p: &AdjointState) -> f64 {
    -p.p_y * s.z + p.p_z * s.y
}

pub fn hamiltonian(s: &PlanarState, p: &AdjointState, u: f64, n: &NormalizedParams) -> f64 {
    p.dot(flow(s, u, n))
}

/// `dphi/dtau = P . V` along any extremal.
pub fn switching_rate(s: &PlanarState, p: &AdjointState, n: &NormalizedParams) -> f64 {
    p.dot(model::derived_field(s, n))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtremalPoint {
    pub state: PlanarState,
    pub adjoint: AdjointState,
    pub u: f64,
    pub phi: f64,
    pub h: f64,
}

impl ExtremalPoint {
    pub fn new(state: PlanarState, adjoint: AdjointState, u: f64, n: &NormalizedParams) -> Self {
        Self { state, adjoint, u, phi: switching_function(&state, &adjoint), h: hamiltonian(&state, &adjoint, u, n) }
    }

    fn packed(&self) -> [f64; 4] {
        [self.state.y, self.state.z, self.adjoint.p_y, self.adjoint.p_z]
    }

    fn unpack(x: &[f64; 4], u: f64, n: &NormalizedParams) -> Self {
        Self::new(PlanarState::new(x[0], x[1]), AdjointState::new(x[2], x[3]), u, n)
    }
}

fn extremal_flow(x: &[f64; 4], u: f64, n: &NormalizedParams) -> [f64; 4] {
    let (bg, sg) = (n.big_gamma, n.small_gamma);
    [-bg * x[0] - u * x[1], sg - sg * x[1] + u * x[0], bg * x[2] - u * x[3], u * x[2] + sg * x[3]]
}

/// State velocity `F0 + u F1` and costate velocity `-(D(F0 + u F1))^T P`.
pub fn extremal_rhs(e: &ExtremalPoint, n: &NormalizedParams) -> [f64; 4] {
    extremal_flow(&e.packed(), e.u, n)
}

struct BangField<'a> {
    u: f64,
    n: &'a NormalizedParams,
}

impl VectorField<4> for BangField<'_> {
    fn eval(&self, _tau: f64, x: &[f64; 4]) -> [f64; 4] {
        extremal_flow(x, self.u, self.n)
    }

    fn control(&self, _tau: f64, _x: &[f64; 4]) -> f64 {
        self.u
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BangSign {
    Plus,
    Minus,
}

impl BangSign {
    pub fn control(self) -> f64 {
        match self {
            BangSign::Plus => TAU,
            BangSign::Minus => -TAU,
        }
    }

    pub fn signum(self) -> f64 {
        self.control().signum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArcEnd {
    /// The switching function changed sign.
    Switch,
    /// The named caller event fired.
    Event(String),
    Horizon,
}

/// A constant-control extremal arc, sampled at the integrator's steps.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtremalArc {
    pub points: Vec<(f64, ExtremalPoint)>,
    pub end: ArcEnd,
}

impl ExtremalArc {
    pub fn last(&self) -> &(f64, ExtremalPoint) {
        self.points.last().expect("arc has points")
    }
}

/// Follow `u = sign * 2pi` until `phi` changes sign, a caller event fires or
/// `horizon` elapses. The costate is normalized at the start and rescaled
/// whenever its norm leaves `[1e-6, 1e6]`.
pub fn propagate_bang(
    e0: &ExtremalPoint,
    sign: BangSign,
    stop_events: &[EventSpec<'_, 4>],
    horizon: f64,
    n: &NormalizedParams,
    opts: &Options,
) -> Result<ExtremalArc, ExtremalError> {
    if e0.phi * sign.signum() < -1e-10 {
        return Err(ExtremalError::SignMismatch { phi: e0.phi });
    }
    let u = sign.control();
    let field = BangField { u, n };
    let p0 = e0.adjoint.normalized()?;
    let switch_dir = match sign {
        BangSign::Plus => Direction::Falling,
        BangSign::Minus => Direction::Rising,
    };

    let mut x = ExtremalPoint::new(e0.state, p0, u, n).packed();
    let mut elapsed = 0.0;
    let mut points = vec![(0.0, ExtremalPoint::unpack(&x, u, n))];
    loop {
        let mut events = vec![
            EventSpec::new("switch", switch_dir, |_, x: &[f64; 4]| -x[2] * x[1] + x[3] * x[0]),
            EventSpec::new("rescale", Direction::Rising, |_, x: &[f64; 4]| {
                let m = x[2].hypot(x[3]);
                (m / PMAX).max(1.0 / (m * PMAX)) - 1.0
            }),
        ];
        events.extend(
            stop_events.iter().map(|ev| {
                EventSpec::new(ev.name.clone(), ev.direction, move |t, x: &[f64; 4]| ev.eval(t + elapsed, x))
            }),
        );
        let (traj, stop) = integrator::integrate_until(&field, x, &events, horizon - elapsed, opts)?;
        points.extend(traj.samples[1..].iter().map(|s| (elapsed + s.tau, ExtremalPoint::unpack(&s.state, u, n))));
        match stop {
            Stop::Event { index: 1, tau, state, .. } => {
                let m = state[2].hypot(state[3]);
                x = [state[0], state[1], state[2] / m, state[3] / m];
                elapsed += tau;
            }
            Stop::Event { index: 0, .. } => return Ok(ExtremalArc { points, end: ArcEnd::Switch }),
            Stop::Event { name, .. } => return Ok(ExtremalArc { points, end: ArcEnd::Event(name) }),
            Stop::Horizon { .. } => return Ok(ExtremalArc { points, end: ArcEnd::Horizon }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SingularEnd {
    /// `|u_s|` reached the bound on the horizontal line.
    AdmissibilityLoss,
    /// The vertical arc reached the origin.
    Target,
    Event(String),
    Horizon,
}

/// Singular arc as a planar trajectory annotated with `u_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularArc {
    pub trajectory: Trajectory<2>,
    pub end: SingularEnd,
}

struct HorizontalFeedback<'a> {
    z0: f64,
    n: &'a NormalizedParams,
}

impl VectorField<1> for HorizontalFeedback<'_> {
    fn eval(&self, _tau: f64, x: &[f64; 1]) -> [f64; 1] {
        let u = self.control(0.0, x);
        [-self.n.big_gamma * x[0] - u * self.z0]
    }

    fn control(&self, _tau: f64, x: &[f64; 1]) -> f64 {
        singular_control(&PlanarState::new(x[0], self.z0), self.n).unwrap_or(f64::NAN)
    }
}

struct ZeroControl<'a> {
    n: &'a NormalizedParams,
}

impl VectorField<2> for ZeroControl<'_> {
    fn eval(&self, _tau: f64, x: &[f64; 2]) -> [f64; 2] {
        flow(&PlanarState::new(x[0], x[1]), 0.0, self.n)
    }
}

/// Follow a singular branch from `s0`.
///
/// The horizontal arc is integrated in the reduced coordinate `y` with
/// `z = z0` held fixed and `u = u_s(y, z0)`; it stops when `|u_s|` reaches
/// `2pi`. The vertical arc has `u = 0` and stops at the origin.
pub fn propagate_singular(
    s0: &PlanarState,
    branch: SingularBranch,
    stop_events: &[EventSpec<'_, 2>],
    horizon: f64,
    n: &NormalizedParams,
    opts: &Options,
) -> Result<SingularArc, ExtremalError> {
    match branch {
        SingularBranch::Horizontal => {
            let z0 = horizontal_ordinate(n)?;
            if (s0.z - z0).abs() > LOCUS_TOL {
                return Err(ExtremalError::OffBranch { branch, y: s0.y, z: s0.z });
            }
            let u0 = singular_control(&PlanarState::new(s0.y, z0), n)?;
            if u0.abs() > n.u_max + 1e-9 {
                return Err(ExtremalError::ImmediatelyInadmissible { u: u0 });
            }
            let field = HorizontalFeedback { z0, n };
            let u_max = n.u_max;
            let mut events = vec![EventSpec::new("admissibility", Direction::Rising, |_, x: &[f64; 1]| {
                singular_control(&PlanarState::new(x[0], z0), n).map_or(f64::INFINITY, f64::abs) - u_max
            })];
            events.extend(stop_events.iter().map(|ev| {
                EventSpec::new(ev.name.clone(), ev.direction, move |t, x: &[f64; 1]| ev.eval(t, &[x[0], z0]))
            }));
            let (traj, stop) = integrator::integrate_until(&field, [s0.y], &events, horizon, opts)?;
            let end = match stop {
                Stop::Event { index: 0, .. } => SingularEnd::AdmissibilityLoss,
                Stop::Event { name, .. } => SingularEnd::Event(name),
                Stop::Horizon { .. } => SingularEnd::Horizon,
            };
            let samples = traj
                .samples
                .into_iter()
                .map(|s| integrator::Sample { tau: s.tau, state: [s.state[0], z0], u: s.u, segment: s.segment })
                .collect();
            Ok(SingularArc { trajectory: Trajectory { samples, terminal_event: traj.terminal_event }, end })
        }
        SingularBranch::Vertical => {
            if s0.y.abs() > LOCUS_TOL {
                return Err(ExtremalError::OffBranch { branch, y: s0.y, z: s0.z });
            }
            let field = ZeroControl { n };
            let mut events = vec![EventSpec::new("target", Direction::Rising, |_, x: &[f64; 2]| x[1])];
            events.extend(
                stop_events
                    .iter()
                    .map(|ev| EventSpec::new(ev.name.clone(), ev.direction, move |t, x: &[f64; 2]| ev.eval(t, x))),
            );
            // y stays exactly 0 under u = 0, so the event state is (0, z ~ 0)
            let (traj, stop) = integrator::integrate_until(&field, [0.0, s0.z], &events, horizon, opts)?;
            let end = match stop {
                Stop::Event { index: 0, .. } => SingularEnd::Target,
                Stop::Event { name, .. } => SingularEnd::Event(name),
                Stop::Horizon { .. } => SingularEnd::Horizon,
            };
            Ok(SingularArc { trajectory: traj, end })
        }
    }
}

/// Costate seed on the singular line: unit normal to `F1`, oriented so that
/// `H = P . F0 >= 0`, ties broken toward positive `p_z`.
pub fn adjoint_seed(s: &PlanarState, n: &NormalizedParams) -> Result<AdjointState, ExtremalError> {
    let f1 = control_field(s);
    let p = AdjointState::new(f1[1], -f1[0]).normalized()?;
    let h = p.dot(drift_field(s, n));
    let flip = h < 0.0 || (h == 0.0 && p.p_z < 0.0);
    Ok(if flip { p.scaled(-1.0) } else { p })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchPoint {
    pub seed_y: f64,
    pub state: PlanarState,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingCurve {
    /// Ordered by seed.
    pub points: Vec<SwitchPoint>,
    /// Admissibility-loss point `(y_min, z0)`.
    pub seed: PlanarState,
    /// Seeds whose extremal never switched before the horizon.
    pub missed: Vec<f64>,
}

impl SwitchingCurve {
    pub fn polyline(&self) -> Vec<PlanarState> {
        self.points.iter().map(|p| p.state).collect()
    }
}

/// `count` log-spaced seeds strictly inside `(1e-5, y_min)`.
pub fn default_seeds(n: &NormalizedParams, count: usize) -> Result<Vec<f64>, ExtremalError> {
    let y_min = admissibility_bound(n)?;
    if y_min <= SEED_FLOOR {
        return Err(ExtremalError::NoSeeds(y_min));
    }
    let (a, b) = (SEED_FLOOR.ln(), y_min.ln());
    Ok((1..=count).map(|i| (a + (b - a) * i as f64 / (count + 1) as f64).exp()).collect())
}

/// Extremal with `u = +2pi` from a point of the horizontal line; returns the
/// first subsequent zero of `phi`.
pub fn switch_from_seed(
    n: &NormalizedParams,
    seed: PlanarState,
    adjoint: AdjointState,
    horizon: f64,
    opts: &Options,
) -> Result<Option<SwitchPoint>, ExtremalError> {
    let e0 = ExtremalPoint::new(seed, adjoint, TAU, n);
    let arc = propagate_bang(&e0, BangSign::Plus, &[], horizon, n, opts)?;
    Ok(match arc.end {
        ArcEnd::Switch => {
            let (tau, e) = *arc.last();
            Some(SwitchPoint { seed_y: seed.y, state: e.state, tau })
        }
        _ => None,
    })
}

/// Switching curve from extremals leaving the horizontal singular line with
/// `u = +2pi` below the admissibility bound.
pub fn trace_switching_curve(
    n: &NormalizedParams,
    seeds: &[f64],
    opts: &Options,
) -> Result<SwitchingCurve, ExtremalError> {
    let z0 = horizontal_ordinate(n)?;
    let y_min = admissibility_bound(n)?;
    if let Some(&bad) = seeds.iter().find(|&&y| !(y > 0.0 && y <= y_min)) {
        return Err(ExtremalError::InvalidSeed(bad));
    }
    let trace = |&y: &f64| -> Result<(f64, Option<SwitchPoint>), ExtremalError> {
        let s = PlanarState::new(y, z0);
        let p = adjoint_seed(&s, n)?;
        Ok((y, switch_from_seed(n, s, p, SWITCH_HORIZON, opts)?))
    };
    #[cfg(feature = "parallel")]
    let results: Vec<_> = {
        use rayon::prelude::*;
        seeds.par_iter().map(trace).collect::<Result<_, _>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<_> = seeds.iter().map(trace).collect::<Result<_, _>>()?;

    let mut curve = SwitchingCurve { points: Vec::new(), seed: PlanarState::new(y_min, z0), missed: Vec::new() };
    for (y, hit) in results {
        match hit {
            Some(p) => curve.points.push(p),
            None => curve.missed.push(y),
        }
    }
    Ok(curve)
}

/// Clock form `alpha = (F1_z dy - F1_y dz) / det(F0, F1) = (y dy + z dz) / det(F0, F1)`,
/// normalized by `alpha(F0) = 1`, `alpha(F1) = 0`.
pub fn clock_form(s: &PlanarState, n: &NormalizedParams) -> Result<[f64; 2], ExtremalError> {
    let d = det_f0_f1(s, n);
    if d.abs() < COLLINEAR_GUARD {
        return Err(ExtremalError::CollinearCrossing { y: s.y, z: s.z });
    }
    let f1 = control_field(s);
    Ok([f1[1] / d, -f1[0] / d])
}

/// Coefficient of `dy ^ dz` in `d alpha`, by central differences.
pub fn clock_form_curl(s: &PlanarState, n: &NormalizedParams) -> Result<f64, ExtremalError> {
    let h = CURL_STEP;
    let at = |dy: f64, dz: f64| clock_form(&PlanarState::new(s.y + dy, s.z + dz), n);
    let daz_dy = (at(h, 0.0)?[1] - at(-h, 0.0)?[1]) / (2.0 * h);
    let day_dz = (at(0.0, h)?[0] - at(0.0, -h)?[0]) / (2.0 * h);
    Ok(daz_dy - day_dz)
}

// 5-point Gauss–Legendre on [0, 1].
const GL_NODES: [f64; 5] =
    [0.046_910_077_030_668, 0.230_765_344_947_158_5, 0.5, 0.769_234_655_052_841_5, 0.953_089_922_969_332];
const GL_WEIGHTS: [f64; 5] = [
    0.118_463_442_528_094_5,
    0.239_314_335_249_683_2,
    0.284_444_444_444_444_4,
    0.239_314_335_249_683_2,
    0.118_463_442_528_094_5,
];

/// Line integral of the clock form along a sampled trajectory.
///
/// Each segment is a cubic Hermite interpolant through the sample states,
/// with end velocities `F0 + u F1` from the recorded controls, integrated
/// with 5-point Gauss–Legendre.
pub fn clock_integral(traj: &Trajectory<2>, n: &NormalizedParams) -> Result<f64, ExtremalError> {
    let mut total = 0.0;
    for s in &traj.samples {
        clock_form(&PlanarState::from_array(s.state), n)?;
    }
    for w in traj.samples.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let h = b.tau - a.tau;
        if h <= 0.0 {
            continue;
        }
        let x0 = a.state;
        let x1 = b.state;
        let v0 = flow(&PlanarState::from_array(x0), a.u, n);
        let u_end = if a.segment == b.segment { b.u } else { a.u };
        let v1 = flow(&PlanarState::from_array(x1), u_end, n);
        for (&s, &wt) in GL_NODES.iter().zip(&GL_WEIGHTS) {
            let (s2, s3) = (s * s, s * s * s);
            let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
            let h10 = s3 - 2.0 * s2 + s;
            let h01 = -2.0 * s3 + 3.0 * s2;
            let h11 = s3 - s2;
            let d00 = 6.0 * s2 - 6.0 * s;
            let d10 = 3.0 * s2 - 4.0 * s + 1.0;
            let d01 = -6.0 * s2 + 6.0 * s;
            let d11 = 3.0 * s2 - 2.0 * s;
            let p: [f64; 2] = std::array::from_fn(|i| h00 * x0[i] + h10 * h * v0[i] + h01 * x1[i] + h11 * h * v1[i]);
            let dp: [f64; 2] = std::array::from_fn(|i| d00 * x0[i] + d10 * h * v0[i] + d01 * x1[i] + d11 * h * v1[i]);
            let alpha = clock_form(&PlanarState::from_array(p), n)?;
            total += wt * (alpha[0] * dp[0] + alpha[1] * dp[1]);
        }
    }
    Ok(total)
}

/// Loop integral of the clock form along `a` followed by `b` reversed.
/// Equals `tau_a - tau_b` for admissible trajectories with shared endpoints.
pub fn clock_compare(a: &Trajectory<2>, b: &Trajectory<2>, n: &NormalizedParams) -> Result<f64, ExtremalError> {
    let gap = |p: [f64; 2], q: [f64; 2]| (p[0] - q[0]).hypot(p[1] - q[1]);
    let g = gap(a.first().state, b.first().state).max(gap(a.last().state, b.last().state));
    if g > ENDPOINT_TOL {
        return Err(ExtremalError::EndpointMismatch { gap: g });
    }
    Ok(clock_integral(a, n)? - clock_integral(b, n)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SingularClass {
    TimeMinimizing,
    TimeMaximizing,
}

/// Local extremum type of `|r_dot|` in `theta` at fixed `r`: a maximum marks
/// a time-minimizing singular direction. `None` where `r_dot` vanishes.
pub fn radial_extremum_class(s: &PlanarState, n: &NormalizedParams) -> Result<Option<SingularClass>, ExtremalError> {
    let d = polar_diagnostics(s, n)?;
    let k = d.r_dot.signum() * d2r_dot_dtheta2(s, n)?;
    Ok(if d.r_dot == 0.0 || k == 0.0 {
        None
    } else if k < 0.0 {
        Some(SingularClass::TimeMinimizing)
    } else {
        Some(SingularClass::TimeMaximizing)
    })
}

/// Time-minimizing / time-maximizing character of a singular point.
///
/// With `T1 > T2` the horizontal line is minimizing and the vertical line is
/// minimizing exactly above `z0`. Otherwise the radial-extremum test decides.
pub fn classify_singular_point(s: &PlanarState, n: &NormalizedParams) -> Result<SingularClass, ExtremalError> {
    let locus = singular_locus(n);
    let branch = locus.branch_of(s, LOCUS_TOL).ok_or(ExtremalError::OffLocus { y: s.y, z: s.z })?;
    match (locus.z0, n.big_gamma > n.small_gamma) {
        (Some(z0), true) => Ok(match branch {
            SingularBranch::Horizontal => SingularClass::TimeMinimizing,
            SingularBranch::Vertical if s.z > z0 => SingularClass::TimeMinimizing,
            SingularBranch::Vertical => SingularClass::TimeMaximizing,
        }),
        _ => radial_extremum_class(s, n)?.ok_or(ExtremalError::OffLocus { y: s.y, z: s.z }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PhysicalParams;

    fn reference() -> NormalizedParams {
        PhysicalParams::new(0.740, 0.060, 32.3).unwrap().normalize().unwrap()
    }

    #[test]
    fn switching_function_examples() {
        let s = PlanarState::new(0.3, -0.7);
        assert_eq!(switching_function(&s, &AdjointState::new(0.0, 1.0)), 0.3);
        assert_eq!(switching_function(&s, &AdjointState::new(1.0, 0.0)), 0.7);
        let f1 = control_field(&s);
        let p = AdjointState::new(f1[1], -f1[0]);
        assert_eq!(switching_function(&s, &p), 0.0);
    }

    #[test]
    fn adjoint_velocity_at_the_pole() {
        let n = reference();
        let e = ExtremalPoint::new(PlanarState::NORTH_POLE, AdjointState::new(0.0, 1.0), 0.0, &n);
        let v = extremal_rhs(&e, &n);
        assert_eq!([v[2], v[3]], [0.0, n.small_gamma]);
    }

    #[test]
    fn bang_sign_must_follow_phi() {
        let n = reference();
        let e = ExtremalPoint::new(PlanarState::new(0.5, 0.2), AdjointState::new(0.0, 1.0), TAU, &n);
        assert!(e.phi > 0.0);
        let err = propagate_bang(&e, BangSign::Minus, &[], 1.0, &n, &Options::default());
        assert!(matches!(err, Err(ExtremalError::SignMismatch { .. })));
    }

    #[test]
    fn phi_is_conserved_without_dissipation() {
        let n = NormalizedParams::from_rates(0.0, 0.0).unwrap();
        let e = ExtremalPoint::new(PlanarState::new(0.6, 0.3), AdjointState::new(-0.2, 0.9), TAU, &n);
        let arc = propagate_bang(&e, BangSign::Plus, &[], 2.0, &n, &Options::default()).unwrap();
        assert_eq!(arc.end, ArcEnd::Horizon);
        let phi0 = switching_function(&e.state, &e.adjoint.normalized().unwrap());
        for (_, p) in &arc.points {
            assert!((p.phi - phi0).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_adjoint_rejected() {
        let n = reference();
        let e = ExtremalPoint::new(PlanarState::new(0.5, 0.2), AdjointState::new(0.0, 0.0), TAU, &n);
        assert_eq!(
            propagate_bang(&e, BangSign::Plus, &[], 1.0, &n, &Options::default()),
            Err(ExtremalError::ZeroAdjoint)
        );
    }

    #[test]
    fn singular_branch_preconditions() {
        let n = reference();
        let z0 = horizontal_ordinate(&n).unwrap();
        let y_min = admissibility_bound(&n).unwrap();
        let opts = Options::default();
        assert!(matches!(
            propagate_singular(&PlanarState::new(0.5, z0 + 1e-6), SingularBranch::Horizontal, &[], 1.0, &n, &opts),
            Err(ExtremalError::OffBranch { .. })
        ));
        assert!(matches!(
            propagate_singular(&PlanarState::new(0.5 * y_min, z0), SingularBranch::Horizontal, &[], 1.0, &n, &opts),
            Err(ExtremalError::ImmediatelyInadmissible { .. })
        ));
        assert!(matches!(
            propagate_singular(&PlanarState::new(1e-3, -0.5), SingularBranch::Vertical, &[], 1.0, &n, &opts),
            Err(ExtremalError::OffBranch { .. })
        ));
    }

    #[test]
    fn adjoint_seed_orientation() {
        let n = reference();
        let z0 = horizontal_ordinate(&n).unwrap();
        for y in [1e-4, 3e-3, 0.5] {
            let s = PlanarState::new(y, z0);
            let p = adjoint_seed(&s, &n).unwrap();
            assert!((p.norm() - 1.0).abs() < 1e-15);
            assert!(switching_function(&s, &p).abs() < 1e-16);
            assert!(hamiltonian(&s, &p, 0.0, &n) >= 0.0);
        }
    }

    #[test]
    fn default_seeds_are_inside_the_bound() {
        let n = reference();
        let y_min = admissibility_bound(&n).unwrap();
        let seeds = default_seeds(&n, DEFAULT_SEED_COUNT).unwrap();
        assert_eq!(seeds.len(), 64);
        assert!(seeds[0] > SEED_FLOOR && *seeds.last().unwrap() < y_min);
        assert!(seeds.windows(2).all(|w| w[1] > w[0]));
        let fast = PhysicalParams::new(0.74, 0.06, 1e6).unwrap().normalize().unwrap();
        assert!(matches!(default_seeds(&fast, 8), Err(ExtremalError::NoSeeds(_))));
    }

    #[test]
    fn invalid_seed_rejected() {
        let n = reference();
        assert!(matches!(trace_switching_curve(&n, &[0.5], &Options::default()), Err(ExtremalError::InvalidSeed(_))));
    }

    #[test]
    fn clock_form_normalization() {
        let n = reference();
        for &(y, z) in &[(0.4, -0.3), (-0.2, -0.6), (0.9, 0.2)] {
            let s = PlanarState::new(y, z);
            let a = clock_form(&s, &n).unwrap();
            let f0 = drift_field(&s, &n);
            let f1 = control_field(&s);
            assert!((a[0] * f0[0] + a[1] * f0[1] - 1.0).abs() < 1e-12);
            assert!((a[0] * f1[0] + a[1] * f1[1]).abs() < 1e-12);
        }
        assert!(matches!(clock_form(&PlanarState::NORTH_POLE, &n), Err(ExtremalError::CollinearCrossing { .. })));
    }

    #[test]
    fn classification_examples() {
        let n = reference();
        let z0 = horizontal_ordinate(&n).unwrap();
        let c = |y, z| classify_singular_point(&PlanarState::new(y, z), &n).unwrap();
        assert_eq!(c(0.0, 0.5), SingularClass::TimeMinimizing);
        assert_eq!(c(0.0, 2.0 * z0), SingularClass::TimeMaximizing);
        assert_eq!(c(0.5, z0), SingularClass::TimeMinimizing);
        assert!(matches!(
            classify_singular_point(&PlanarState::new(0.3, 0.3), &n),
            Err(ExtremalError::OffLocus { .. })
        ));
    }

    #[test]
    fn classification_agrees_with_radial_extremum() {
        let n = reference();
        let z0 = horizontal_ordinate(&n).unwrap();
        for i in 0..200 {
            let t = -0.999 + 1.998 * i as f64 / 199.0;
            for s in [PlanarState::new(0.0, t), PlanarState::new(t, z0)] {
                if s.radius() < 1e-9 || (s.z - z0).abs() < 1e-12 && s.y.abs() < 1e-12 {
                    continue;
                }
                let rule = classify_singular_point(&s, &n).unwrap();
                if let Some(geo) = radial_extremum_class(&s, &n).unwrap() {
                    assert_eq!(rule, geo, "{s:?}");
                }
            }
        }
    }

    #[test]
    fn switching_curve_lies_below_the_horizontal_line() {
        let n = reference();
        let z0 = horizontal_ordinate(&n).unwrap();
        let seeds = default_seeds(&n, 8).unwrap();
        let curve = trace_switching_curve(&n, &seeds, &Options::default()).unwrap();
        assert!(curve.missed.is_empty());
        assert_eq!(curve.points.len(), 8);
        for p in &curve.points {
            assert!(p.state.y < 0.0 && p.state.z > z0, "{p:?}");
            assert!(p.tau > 0.5 && p.tau < 1.0, "{p:?}");
        }
        let seq: Vec<f64> = curve.points.iter().map(|p| p.seed_y).collect();
        assert_eq!(seq, seeds);
    }
}
