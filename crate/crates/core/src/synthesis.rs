//! Saturation schedules: the time-optimal bang / singular concatenation, the
//! inversion-recovery baseline, amplitude sweeps and the high-amplitude limit.
//!
//! Everything runs on the `y >= 0` branch by default (first bang `u = -2pi`);
//! [`Branch::Lower`] builds the mirror image.

use std::f64::consts::{LN_2, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extremal::{
    classify_singular_point, default_seeds, propagate_singular, trace_switching_curve, ExtremalError, SingularClass,
    SingularEnd, SwitchingCurve, DEFAULT_SEED_COUNT,
};
use crate::integrator::{
    integrate, integrate_until, Direction, EventSpec, IntegrateError, Options, Sample, Stop, Trajectory, VectorField,
};
use crate::model::{
    admissibility_bound, det_f1_v, flow, horizontal_ordinate, polar_diagnostics, singular_control, ModelError,
    NormalizedParams, PhysicalParams, PlanarState, SingularBranch,
};

/// Normalized distance to the origin accepted at the end of a schedule.
pub const TARGET_TOL: f64 = 1e-6;
/// Consecutive arcs must meet within this distance.
pub const CHAIN_TOL: f64 = 1e-8;
/// Replayed arcs may drift this far from the declared end points.
pub const REPLAY_TOL: f64 = 1e-6;
/// Arc horizons are this many longitudinal relaxation times.
const HORIZON_RELAXATIONS: f64 = 50.0;
const BISECTION_STEPS: usize = 60;
const GOLDEN_TOL: f64 = 1e-10;
/// Step cap on the third arc so the switching-curve test sees a fine polyline.
const ARC3_MAX_STEP: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthesisError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error(transparent)]
    Extremal(#[from] ExtremalError),
    #[error("target unreachable: {0}")]
    Unreachable(Unreachable),
    #[error("inversion recovery never crosses z = 0")]
    IrUnreachable,
    #[error("synthesis needs T1 > T2 (Gamma > gamma); got Gamma = {big_gamma}, gamma = {small_gamma}")]
    UnsupportedRegime { big_gamma: f64, small_gamma: f64 },
    #[error("schedule ends at radius {radius}, above tolerance {tol}")]
    TargetMissed { radius: f64, tol: f64 },
    #[error("arc {arc} does not start where the previous one ended (gap {gap})")]
    ChainMismatch { arc: usize, gap: f64 },
    #[error("replayed arc {arc} ends {gap} away from its declared end")]
    ReplayDrift { arc: usize, gap: f64 },
    #[error("invalid amplitude list: {0}")]
    InvalidAmplitudes(String),
    #[error("two-bang shooting did not converge")]
    ShootingFailed,
    #[error("malformed arc: {0}")]
    MalformedArc(&'static str),
    #[error("asymptotic limit undefined: {0}")]
    Domain(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unreachable {
    /// The first bang did not reach `z = z0` within the horizon.
    Horizon,
    /// `z` stopped decreasing before `z0`.
    Turnaround,
    /// The radius contracted inside `|z0|` first.
    Contraction,
    /// No bang from the horizontal line reaches the negative `z` half-axis.
    NoAxisCrossing,
}

impl std::fmt::Display for Unreachable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Unreachable::Horizon => "first bang does not reach the horizontal singular line within the horizon",
            Unreachable::Turnaround => "first bang turns back above the horizontal singular line",
            Unreachable::Contraction => "first bang contracts inside the horizontal singular line",
            Unreachable::NoAxisCrossing => "no bang from the horizontal singular line reaches the negative z axis",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArcKind {
    Bang,
    SingularHorizontal,
    SingularVertical,
}

impl ArcKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ArcKind::Bang => "bang",
            ArcKind::SingularHorizontal => "singular_horizontal",
            ArcKind::SingularVertical => "singular_vertical",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feedback {
    SingularFeedback,
}

/// Constant control for bang arcs, a feedback marker on singular arcs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ArcControl {
    Constant(f64),
    Feedback(Feedback),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    pub kind: ArcKind,
    pub u: ArcControl,
    pub duration_tau: f64,
    pub start: [f64; 2],
    pub end: [f64; 2],
}

impl Arc {
    fn bang(u: f64, duration_tau: f64, start: [f64; 2], end: [f64; 2]) -> Self {
        Self { kind: ArcKind::Bang, u: ArcControl::Constant(u), duration_tau, start, end }
    }

    fn singular(kind: ArcKind, duration_tau: f64, start: [f64; 2], end: [f64; 2]) -> Self {
        Self { kind, u: ArcControl::Feedback(Feedback::SingularFeedback), duration_tau, start, end }
    }
}

/// Where the horizontal singular arc is left.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Junction {
    /// At the admissibility-loss point `(y_min, z0)`.
    AdmissibilityLoss,
    /// At the departure abscissa minimizing total duration.
    Optimized,
    /// The first bang arrives inside `|y| <= y_min`; no singular arc.
    Direct,
}

/// Outcome of testing the third arc against the switching curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchingCheck {
    pub crosses: bool,
    /// Smallest distance between arc samples and curve points.
    pub clearance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSchedule {
    pub arcs: Vec<Arc>,
    pub total_tau: f64,
    pub total_seconds: f64,
    pub params: PhysicalParams,
    pub normalized: NormalizedParams,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub junction: Option<Junction>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub switching_check: Option<SwitchingCheck>,
}

impl ControlSchedule {
    fn assemble(arcs: Vec<Arc>, params: PhysicalParams, normalized: NormalizedParams) -> Self {
        let total_tau = arcs.iter().map(|a| a.duration_tau).sum();
        Self {
            arcs,
            total_tau,
            total_seconds: params.seconds_from_tau(total_tau),
            params,
            normalized,
            junction: None,
            switching_check: None,
        }
    }

    /// Arc kinds joined with `-`, e.g. `bang-singular_horizontal-bang-singular_vertical`.
    pub fn structure(&self) -> String {
        self.arcs.iter().map(|a| a.kind.as_str()).collect::<Vec<_>>().join("-")
    }

    pub fn start(&self) -> Option<PlanarState> {
        self.arcs.first().map(|a| PlanarState::from_array(a.start))
    }

    pub fn end(&self) -> Option<PlanarState> {
        self.arcs.last().map(|a| PlanarState::from_array(a.end))
    }

    /// Checks that consecutive arcs meet within [`CHAIN_TOL`].
    pub fn check_chain(&self) -> Result<(), SynthesisError> {
        for (i, w) in self.arcs.windows(2).enumerate() {
            let gap = PlanarState::from_array(w[0].end).distance(&PlanarState::from_array(w[1].start));
            if gap > CHAIN_TOL {
                return Err(SynthesisError::ChainMismatch { arc: i + 1, gap });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Branch {
    /// First bang `u = -2pi`, trajectory in `y >= 0`.
    #[default]
    Upper,
    /// First bang `u = +2pi`, trajectory in `y <= 0`.
    Lower,
}

impl Branch {
    fn sigma(self) -> f64 {
        match self {
            Branch::Upper => 1.0,
            Branch::Lower => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthesisOptions {
    pub integrator: Options,
    pub target_tol: f64,
    pub branch: Branch,
    /// Trace the switching curve and test the third arc against it.
    pub check_switching: bool,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self { integrator: Options::default(), target_tol: TARGET_TOL, branch: Branch::Upper, check_switching: true }
    }
}

impl SynthesisOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { integrator: Options::with_tol(tol), ..Self::default() }
    }
}

struct ConstantControl<'a> {
    u: f64,
    n: &'a NormalizedParams,
}

impl VectorField<2> for ConstantControl<'_> {
    fn eval(&self, _tau: f64, x: &[f64; 2]) -> [f64; 2] {
        flow(&PlanarState::from_array(*x), self.u, self.n)
    }

    fn control(&self, _tau: f64, _x: &[f64; 2]) -> f64 {
        self.u
    }
}

fn horizon(n: &NormalizedParams) -> f64 {
    if n.small_gamma > 0.0 {
        HORIZON_RELAXATIONS / n.small_gamma
    } else {
        HORIZON_RELAXATIONS
    }
}

/// Bang with `u = -sigma 2pi` from `x0` until `sigma y` falls through zero.
/// Returns the arc and the landing ordinate, or `None` when `y` turns back
/// first or the horizon elapses.
fn land(
    x0: [f64; 2],
    sigma: f64,
    n: &NormalizedParams,
    opts: &Options,
) -> Result<Option<(Trajectory<2>, f64)>, SynthesisError> {
    let u = -sigma * TAU;
    let field = ConstantControl { u, n };
    let bg = n.big_gamma;
    let events = [
        EventSpec::new("axis", Direction::Falling, |_, x: &[f64; 2]| sigma * x[0]),
        EventSpec::new("turnaround", Direction::Rising, |_, x: &[f64; 2]| sigma * (-bg * x[0] - u * x[1])),
    ];
    let (mut traj, stop) = integrate_until(&field, x0, &events, horizon(n), opts)?;
    match stop {
        Stop::Event { index: 0, state, .. } => {
            if let Some(last) = traj.samples.last_mut() {
                last.state[0] = 0.0;
            }
            Ok(Some((traj, state[1])))
        }
        _ => Ok(None),
    }
}

/// Time along the horizontal arc from `|y| = ya` to `|y| = yb`.
fn horizontal_duration(ya: f64, yb: f64, n: &NormalizedParams, z0: f64) -> f64 {
    let c = singular_control(&PlanarState::new(1.0, z0), n).unwrap_or(f64::NAN).abs();
    let k = c * z0 / n.big_gamma;
    ((ya * ya - k) / (yb * yb - k)).ln() / (2.0 * n.big_gamma)
}

/// Free relaxation time from `(0, z)` with `z < 0` to the origin.
fn vertical_duration(z: f64, n: &NormalizedParams) -> f64 {
    (1.0 - z).ln() / n.small_gamma
}

fn golden_section(mut a: f64, mut b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > GOLDEN_TOL * (1.0 + a.abs()) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

fn end_of(traj: &Trajectory<2>) -> [f64; 2] {
    traj.last().state
}

/// Time-optimal saturation from the north pole: bang to `z = z0`, horizontal
/// singular arc, bang to the `z` axis, free relaxation to the origin.
///
/// The singular arc is left at `(y_min, z0)` whenever the subsequent bang
/// lands on the vertical line between `z0` and `0`. At low amplitudes it
/// does not, and the departure point is instead chosen to minimize total
/// duration; [`ControlSchedule::junction`] records which case applied.
pub fn synthesize_optimal(p: &PhysicalParams, opts: &SynthesisOptions) -> Result<ControlSchedule, SynthesisError> {
    let n = p.normalize()?;
    let (arcs, junction, check) = optimal_arcs(&n, opts)?;
    let mut sched = ControlSchedule::assemble(arcs, *p, n);
    sched.junction = Some(junction);
    sched.switching_check = check;
    Ok(sched)
}

type OptimalArcs = (Vec<Arc>, Junction, Option<SwitchingCheck>);

fn optimal_arcs(n: &NormalizedParams, so: &SynthesisOptions) -> Result<OptimalArcs, SynthesisError> {
    if n.big_gamma <= n.small_gamma {
        return Err(SynthesisError::UnsupportedRegime { big_gamma: n.big_gamma, small_gamma: n.small_gamma });
    }
    let opts = &so.integrator;
    let sigma = so.branch.sigma();
    let u = -sigma * TAU;
    let z0 = horizontal_ordinate(n)?;
    let y_min = admissibility_bound(n)?;

    // Arc 1.
    let field = ConstantControl { u, n };
    let sg = n.small_gamma;
    let events = [
        EventSpec::new("arrival", Direction::Falling, |_, x: &[f64; 2]| x[1] - z0),
        EventSpec::new("turnaround", Direction::Rising, |_, x: &[f64; 2]| sg * (1.0 - x[1]) + u * x[0]),
        EventSpec::new("contraction", Direction::Falling, |_, x: &[f64; 2]| x[0].hypot(x[1]) - z0.abs()),
    ];
    let (arc1, stop) = integrate_until(&field, [0.0, 1.0], &events, horizon(n), opts)?;
    let y1 = match stop {
        Stop::Event { index: 0, state, .. } => state[0].abs(),
        Stop::Event { index: 1, .. } => return Err(SynthesisError::Unreachable(Unreachable::Turnaround)),
        Stop::Event { .. } => return Err(SynthesisError::Unreachable(Unreachable::Contraction)),
        Stop::Horizon { .. } => return Err(SynthesisError::Unreachable(Unreachable::Horizon)),
    };
    let tau1 = arc1.duration();
    let arrival = [sigma * y1, z0];

    // one option set for every third-arc landing: near the feasibility edge the
    // bang grazes y = 0 and the event must be found the same way each time
    let arc3_opts = opts.max_step(opts.max_step.min(ARC3_MAX_STEP));
    let landing = |ys: f64| land([sigma * ys, z0], sigma, n, &arc3_opts);
    let feasible =
        |ys: f64| -> Result<Option<f64>, SynthesisError> { Ok(landing(ys)?.map(|(_, z3)| z3).filter(|&z3| z3 < 0.0)) };
    if feasible(y1)?.is_none() {
        return Err(SynthesisError::Unreachable(Unreachable::NoAxisCrossing));
    }

    let (ys, junction) = if y1 <= y_min {
        (y1, Junction::Direct)
    } else if matches!(feasible(y_min)?, Some(z3) if z3 > z0) {
        (y_min, Junction::AdmissibilityLoss)
    } else {
        let (mut lo, mut hi) = (y_min, y1);
        for _ in 0..BISECTION_STEPS {
            let m = 0.5 * (lo + hi);
            if feasible(m)?.is_some() {
                hi = m;
            } else {
                lo = m;
            }
        }
        let total = |ys: f64| match feasible(ys) {
            Ok(Some(z3)) => {
                let t3 = landing(ys).ok().flatten().map_or(f64::INFINITY, |(t, _)| t.duration());
                horizontal_duration(y1, ys, n, z0) + t3 + vertical_duration(z3, n)
            }
            _ => f64::INFINITY,
        };
        let best = golden_section(hi, y1, total);
        (best, Junction::Optimized)
    };

    let mut arcs = Vec::with_capacity(4);
    let start3 = [sigma * ys, z0];
    if junction == Junction::Direct {
        // arcs 1 and 3 share the control; merge them into one bang from the pole
        let (traj, z3) =
            land([0.0, 1.0], sigma, n, opts)?.ok_or(SynthesisError::Unreachable(Unreachable::NoAxisCrossing))?;
        arcs.push(Arc::bang(u, traj.duration(), [0.0, 1.0], [0.0, z3]));
    } else {
        arcs.push(Arc::bang(u, tau1, [0.0, 1.0], arrival));
        let dep = ys;
        let depart = [EventSpec::new("departure", Direction::Falling, move |_, x: &[f64; 2]| sigma * x[0] - dep)];
        let stops: &[EventSpec<'_, 2>] = if junction == Junction::Optimized { &depart } else { &[] };
        let arc2 = propagate_singular(
            &PlanarState::from_array(arrival),
            SingularBranch::Horizontal,
            stops,
            horizon(n),
            n,
            opts,
        )?;
        if matches!(arc2.end, SingularEnd::Horizon) {
            return Err(SynthesisError::Unreachable(Unreachable::Horizon));
        }
        let tau2 = arc2.trajectory.duration();
        if tau2 > 0.0 {
            arcs.push(Arc::singular(ArcKind::SingularHorizontal, tau2, arrival, start3));
        }
    }

    if junction != Junction::Direct {
        let (arc3, z3) = landing(ys)?.ok_or(SynthesisError::Unreachable(Unreachable::NoAxisCrossing))?;
        arcs.push(Arc::bang(u, arc3.duration(), start3, [0.0, z3]));
    }

    let z3 = arcs.last().expect("bang arc").end[1];
    let arc4 = propagate_singular(&PlanarState::new(0.0, z3), SingularBranch::Vertical, &[], horizon(n), n, opts)?;
    let end = end_of(&arc4.trajectory);
    let radius = end[0].hypot(end[1]);
    if arc4.end != SingularEnd::Target || radius > so.target_tol {
        return Err(SynthesisError::TargetMissed { radius, tol: so.target_tol });
    }
    arcs.push(Arc::singular(ArcKind::SingularVertical, arc4.trajectory.duration(), [0.0, z3], end));

    let check = if so.check_switching && junction != Junction::Direct {
        let arc3 = landing(ys)?.map(|(t, _)| t);
        match (arc3, default_seeds(n, DEFAULT_SEED_COUNT)) {
            (Some(t), Ok(seeds)) => {
                let curve = trace_switching_curve(n, &seeds, opts)?;
                let curve = if sigma < 0.0 { mirror_curve(curve) } else { curve };
                Some(switching_check(&t, &curve))
            }
            _ => None,
        }
    } else {
        None
    };
    Ok((arcs, junction, check))
}

fn mirror_curve(mut c: SwitchingCurve) -> SwitchingCurve {
    for p in &mut c.points {
        p.state = p.state.mirrored();
    }
    c.seed = c.seed.mirrored();
    c
}

fn segments_cross(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let orient = |p: [f64; 2], q: [f64; 2], r: [f64; 2]| (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]);
    let (d1, d2) = (orient(c, d, a), orient(c, d, b));
    let (d3, d4) = (orient(a, b, c), orient(a, b, d));
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

/// Whether the polyline of `traj` crosses the switching curve, and the
/// closest approach between their sample points.
pub fn switching_check(traj: &Trajectory<2>, curve: &SwitchingCurve) -> SwitchingCheck {
    let pts: Vec<[f64; 2]> = curve.points.iter().map(|p| p.state.to_array()).collect();
    let mut crosses = false;
    for w in traj.samples.windows(2) {
        for c in pts.windows(2) {
            crosses |= segments_cross(w[0].state, w[1].state, c[0], c[1]);
        }
    }
    let clearance = traj
        .samples
        .iter()
        .flat_map(|s| pts.iter().map(move |q| PlanarState::from_array(s.state).distance(&PlanarState::from_array(*q))))
        .fold(f64::INFINITY, f64::min);
    SwitchingCheck { crosses, clearance }
}

/// Inversion recovery: bang `u = -2pi` from the pole until the trajectory
/// returns to the `z` axis, then free relaxation until `z` crosses zero.
pub fn inversion_recovery(p: &PhysicalParams, opts: &Options) -> Result<ControlSchedule, SynthesisError> {
    let n = p.normalize()?;
    Ok(ControlSchedule::assemble(inversion_recovery_normalized(&n, opts)?, *p, n))
}

pub fn inversion_recovery_normalized(n: &NormalizedParams, opts: &Options) -> Result<Vec<Arc>, SynthesisError> {
    let (traj, z_ir) = land([0.0, 1.0], 1.0, n, opts)?.ok_or(SynthesisError::IrUnreachable)?;
    if z_ir >= 0.0 || n.small_gamma <= 0.0 {
        return Err(SynthesisError::IrUnreachable);
    }
    let relax = propagate_singular(&PlanarState::new(0.0, z_ir), SingularBranch::Vertical, &[], horizon(n), n, opts)?;
    if relax.end != SingularEnd::Target {
        return Err(SynthesisError::IrUnreachable);
    }
    Ok(vec![
        Arc::bang(-TAU, traj.duration(), [0.0, 1.0], [0.0, z_ir]),
        Arc::singular(ArcKind::SingularVertical, relax.trajectory.duration(), [0.0, z_ir], end_of(&relax.trajectory)),
    ])
}

/// Replays `sched` from `x0` through the integrator. Each arc becomes one
/// trajectory segment; `opts.sample_every` sets uniform resampling.
pub fn simulate_schedule(
    sched: &ControlSchedule,
    x0: PlanarState,
    opts: &Options,
) -> Result<Trajectory<2>, SynthesisError> {
    sched.check_chain()?;
    let mut out = Trajectory::single(x0.to_array(), 0.0);
    let Some(first) = sched.arcs.first() else {
        return Ok(out);
    };
    let gap = x0.distance(&PlanarState::from_array(first.start));
    if gap > CHAIN_TOL {
        return Err(SynthesisError::ChainMismatch { arc: 0, gap });
    }
    let n = &sched.normalized;
    let mut x = x0.to_array();
    for (i, arc) in sched.arcs.iter().enumerate() {
        let traj = replay_arc(arc, x, n, opts)?;
        x = end_of(&traj);
        let gap = PlanarState::from_array(x).distance(&PlanarState::from_array(arc.end));
        if gap > REPLAY_TOL {
            return Err(SynthesisError::ReplayDrift { arc: i, gap });
        }
        if i == 0 {
            out = traj;
        } else {
            out.append(traj);
        }
    }
    out.terminal_event = None;
    Ok(out)
}

fn replay_arc(arc: &Arc, x: [f64; 2], n: &NormalizedParams, opts: &Options) -> Result<Trajectory<2>, SynthesisError> {
    if arc.duration_tau <= 0.0 {
        return Ok(Trajectory::single(x, 0.0));
    }
    let traj = match (arc.kind, arc.u) {
        (ArcKind::Bang, ArcControl::Constant(u)) => integrate(&ConstantControl { u, n }, x, arc.duration_tau, opts)?,
        (ArcKind::SingularVertical, _) => {
            let mut t = integrate(&ConstantControl { u: 0.0, n }, [0.0, x[1]], arc.duration_tau, opts)?;
            for s in &mut t.samples {
                s.state[0] = 0.0;
            }
            t
        }
        (ArcKind::SingularHorizontal, _) => {
            let z0 = arc.start[1];
            let fb = move |_: f64, y: &[f64; 1]| {
                let u = singular_control(&PlanarState::new(y[0], z0), n).unwrap_or(f64::NAN);
                [-n.big_gamma * y[0] - u * z0]
            };
            let t = integrate(&fb, [x[0]], arc.duration_tau, opts)?;
            let samples = t
                .samples
                .into_iter()
                .map(|s| Sample {
                    tau: s.tau,
                    state: [s.state[0], z0],
                    u: singular_control(&PlanarState::new(s.state[0], z0), n).unwrap_or(f64::NAN),
                    segment: s.segment,
                })
                .collect();
            Trajectory { samples, terminal_event: None }
        }
        (ArcKind::Bang, ArcControl::Feedback(_)) => {
            return Err(SynthesisError::MalformedArc("bang arc without a constant control"))
        }
    };
    Ok(traj)
}

/// Constant-control arcs `(u, duration)` chained from `x0`, one segment each.
pub fn bang_sequence(
    x0: PlanarState,
    arcs: &[(f64, f64)],
    n: &NormalizedParams,
    opts: &Options,
) -> Result<Trajectory<2>, SynthesisError> {
    let mut out = Trajectory::single(x0.to_array(), arcs.first().map_or(0.0, |a| a.0));
    for (i, &(u, d)) in arcs.iter().enumerate() {
        let t = integrate(&ConstantControl { u, n }, end_of(&out), d, opts)?;
        if i == 0 {
            out = t;
        } else {
            out.append(t);
        }
    }
    Ok(out)
}

/// Durations of a two-bang path with controls `controls` from `x0` to
/// `target`, by Newton iteration from `guess`.
pub fn shoot_two_bang(
    x0: PlanarState,
    target: PlanarState,
    controls: [f64; 2],
    guess: [f64; 2],
    n: &NormalizedParams,
    opts: &Options,
) -> Result<[f64; 2], SynthesisError> {
    const FD: f64 = 1e-7;
    let reach = |s: [f64; 2]| -> Result<[f64; 2], SynthesisError> {
        if s.iter().any(|&d| !(d > 0.0)) {
            return Err(SynthesisError::ShootingFailed);
        }
        let t = bang_sequence(x0, &[(controls[0], s[0]), (controls[1], s[1])], n, opts)?;
        Ok(end_of(&t))
    };
    let mut s = guess;
    for _ in 0..50 {
        let x = reach(s)?;
        let r = [x[0] - target.y, x[1] - target.z];
        if r[0].hypot(r[1]) < 1e-11 {
            return Ok(s);
        }
        let a = reach([s[0] + FD, s[1]])?;
        let b = reach([s[0], s[1] + FD])?;
        let j = [[(a[0] - x[0]) / FD, (b[0] - x[0]) / FD], [(a[1] - x[1]) / FD, (b[1] - x[1]) / FD]];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det == 0.0 {
            return Err(SynthesisError::ShootingFailed);
        }
        s[0] -= (j[1][1] * r[0] - j[0][1] * r[1]) / det;
        s[1] -= (-j[1][0] * r[0] + j[0][0] * r[1]) / det;
    }
    Err(SynthesisError::ShootingFailed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub omega_hz: f64,
    pub t_opt_s: Option<f64>,
    pub t_ir_s: Option<f64>,
    pub ratio: Option<f64>,
    pub reachable: bool,
    /// Arc structure of the optimal schedule, empty when unreachable.
    pub structure: String,
    pub junction: Option<Junction>,
}

/// Optimal and inversion-recovery durations per amplitude, in input order.
pub fn sweep_ratio(
    p_base: &PhysicalParams,
    omegas: &[f64],
    opts: &SynthesisOptions,
) -> Result<Vec<SweepRow>, SynthesisError> {
    if omegas.is_empty() {
        return Err(SynthesisError::InvalidAmplitudes("empty".into()));
    }
    if let Some(w) = omegas.iter().find(|&&w| !(w > 0.0 && w.is_finite())) {
        return Err(SynthesisError::InvalidAmplitudes(format!("{w} is not a positive amplitude")));
    }
    if omegas.windows(2).any(|w| w[1] < w[0]) {
        return Err(SynthesisError::InvalidAmplitudes("not sorted".into()));
    }
    let row = |&omega: &f64| -> Result<SweepRow, SynthesisError> {
        let p = p_base.with_omega(omega);
        p.validate()?;
        let opt = match synthesize_optimal(&p, opts) {
            Ok(s) => Some(s),
            Err(SynthesisError::Unreachable(_)) => None,
            Err(e) => return Err(e),
        };
        let ir = match inversion_recovery(&p, &opts.integrator) {
            Ok(s) => Some(s.total_seconds),
            Err(SynthesisError::IrUnreachable) => None,
            Err(e) => return Err(e),
        };
        let t_opt = opt.as_ref().map(|s| s.total_seconds);
        Ok(SweepRow {
            omega_hz: omega,
            t_opt_s: t_opt,
            t_ir_s: ir,
            ratio: t_opt.zip(ir).map(|(a, b)| a / b),
            reachable: opt.is_some(),
            structure: opt.as_ref().map(|s| s.structure()).unwrap_or_default(),
            junction: opt.and_then(|s| s.junction),
        })
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        omegas.par_iter().map(row).collect()
    }
    #[cfg(not(feature = "parallel"))]
    omegas.iter().map(row).collect()
}

/// Smallest reachable amplitude in `[lo, hi]` Hz, by bisection to `tol_hz`.
/// `lo` must be unreachable and `hi` reachable.
pub fn reachability_threshold(
    p_base: &PhysicalParams,
    lo: f64,
    hi: f64,
    tol_hz: f64,
    opts: &SynthesisOptions,
) -> Result<f64, SynthesisError> {
    let so = SynthesisOptions { check_switching: false, ..*opts };
    let reachable = |w: f64| match synthesize_optimal(&p_base.with_omega(w), &so) {
        Ok(_) => Ok(true),
        Err(SynthesisError::Unreachable(_)) => Ok(false),
        Err(e) => Err(e),
    };
    if reachable(lo)? || !reachable(hi)? {
        return Err(SynthesisError::InvalidAmplitudes(format!("[{lo}, {hi}] does not bracket the threshold")));
    }
    let (mut lo, mut hi) = (lo, hi);
    while hi - lo > tol_hz {
        let m = 0.5 * (lo + hi);
        if reachable(m)? {
            hi = m;
        } else {
            lo = m;
        }
    }
    Ok(hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticTimes {
    pub t_opt_inf: f64,
    pub t_ir_inf: f64,
    pub ratio_inf: f64,
    /// Coefficient of the limiting horizontal-arc law, in 1/s.
    pub alpha: f64,
}

/// Durations as the control amplitude grows without bound (seconds).
pub fn asymptotic_times(t1: f64, t2: f64) -> Result<AsymptoticTimes, SynthesisError> {
    if !(t2 > 0.0 && t1 > t2 && t1.is_finite()) {
        return Err(SynthesisError::Domain(format!("need t1 > t2 > 0, got t1 = {t1}, t2 = {t2}")));
    }
    let alpha = t2 * (t2 - 2.0 * t1) / (2.0 * t1 * (t1 - t2).powi(2));
    let a = 1.0 - 2.0 / (alpha * t2);
    let b = (2.0 * t1 - t2) / (2.0 * (t1 - t2));
    if !(a > 0.0 && b > 0.0) {
        return Err(SynthesisError::Domain("nonpositive log argument".into()));
    }
    let t_opt_inf = 0.5 * t2 * a.ln() + t1 * b.ln();
    let t_ir_inf = t1 * LN_2;
    Ok(AsymptoticTimes { t_opt_inf, t_ir_inf, ratio_inf: t_opt_inf / t_ir_inf, alpha })
}

/// Limiting singular control on the horizontal line, in rad/s, at ordinate `y`.
pub fn singular_amplitude_limit(t1: f64, t2: f64, y: f64) -> f64 {
    (t2 - 2.0 * t1) / (2.0 * t1 * (t1 - t2) * y)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldCell {
    pub y: f64,
    pub z: f64,
    /// `None` at the origin, where the polar angle is undefined.
    pub dr_dot_dtheta: Option<f64>,
    pub det_f1v: Option<f64>,
    pub on_singular: Option<SingularBranch>,
    pub classification: Option<SingularClass>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldMap {
    pub grid_n: usize,
    /// Row-major, `z` outer and `y` inner.
    pub cells: Vec<FieldCell>,
}

impl FieldMap {
    pub fn node(grid_n: usize, i: usize) -> f64 {
        -1.0 + 2.0 * i as f64 / (grid_n - 1) as f64
    }

    pub fn cell(&self, iy: usize, iz: usize) -> &FieldCell {
        &self.cells[iz * self.grid_n + iy]
    }
}

/// `dr_dot/dtheta` and `det(F1, V)` on a `grid_n x grid_n` grid over
/// `[-1, 1]^2`. Nodes within half a cell of a singular line are tagged with
/// the branch and its classification at the projected point.
pub fn field_map(n: &NormalizedParams, grid_n: usize) -> Result<FieldMap, SynthesisError> {
    if grid_n < 2 {
        return Err(SynthesisError::Domain(format!("grid needs at least 2 nodes, got {grid_n}")));
    }
    let z0 = horizontal_ordinate(n).ok();
    let half = 1.0 / (grid_n - 1) as f64;
    let row = |iz: usize| -> Result<Vec<FieldCell>, SynthesisError> {
        let z = FieldMap::node(grid_n, iz);
        (0..grid_n)
            .map(|iy| {
                let y = FieldMap::node(grid_n, iy);
                let s = PlanarState::new(y, z);
                let values = match polar_diagnostics(&s, n) {
                    Ok(d) => Some((d.dr_dot_dtheta, det_f1_v(&s, n))),
                    Err(ModelError::OriginUndefined) => None,
                    Err(e) => return Err(e.into()),
                };
                let on = match z0 {
                    Some(z0) if (z - z0).abs() <= half => Some((SingularBranch::Horizontal, PlanarState::new(y, z0))),
                    _ if y.abs() <= half => Some((SingularBranch::Vertical, PlanarState::new(0.0, z))),
                    _ => None,
                };
                let classification = match on {
                    Some((_, proj)) => classify_singular_point(&proj, n).ok(),
                    None => None,
                };
                Ok(FieldCell {
                    y,
                    z,
                    dr_dot_dtheta: values.map(|v| v.0),
                    det_f1v: values.map(|v| v.1),
                    on_singular: on.map(|o| o.0),
                    classification,
                })
            })
            .collect()
    };
    #[cfg(feature = "parallel")]
    let rows: Vec<Vec<FieldCell>> = {
        use rayon::prelude::*;
        (0..grid_n).into_par_iter().map(row).collect::<Result<_, _>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<Vec<FieldCell>> = (0..grid_n).map(row).collect::<Result<_, _>>()?;
    Ok(FieldMap { grid_n, cells: rows.into_iter().flatten().collect() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingularLinePoint {
    pub y: f64,
    pub z: f64,
    pub u_s: f64,
    pub admissible: bool,
    pub classification: SingularClass,
}

/// Both singular lines sampled at `samples` points across `[-1, 1]`:
/// `(horizontal, vertical)`. The horizontal line is empty when `Gamma = gamma`.
pub fn singular_lines(
    n: &NormalizedParams,
    samples: usize,
) -> Result<(Vec<SingularLinePoint>, Vec<SingularLinePoint>), SynthesisError> {
    if samples < 2 {
        return Err(SynthesisError::Domain(format!("need at least 2 samples, got {samples}")));
    }
    let point = |s: PlanarState| -> Result<SingularLinePoint, SynthesisError> {
        let u_s = singular_control(&s, n).unwrap_or(f64::INFINITY);
        Ok(SingularLinePoint {
            y: s.y,
            z: s.z,
            u_s,
            admissible: u_s.abs() <= n.u_max,
            classification: classify_singular_point(&s, n)?,
        })
    };
    let t = |i: usize| FieldMap::node(samples, i);
    let horizontal = match horizontal_ordinate(n) {
        Ok(z0) => (0..samples).map(|i| point(PlanarState::new(t(i), z0))).collect::<Result<_, _>>()?,
        Err(_) => Vec::new(),
    };
    let vertical = (0..samples).map(|i| point(PlanarState::new(0.0, t(i)))).collect::<Result<_, _>>()?;
    Ok((horizontal, vertical))
}

/// Reflection `y -> -y` of a schedule.
pub fn mirrored(sched: &ControlSchedule) -> ControlSchedule {
    let flip = |a: [f64; 2]| [-a[0], a[1]];
    let mut out = sched.clone();
    for arc in &mut out.arcs {
        arc.start = flip(arc.start);
        arc.end = flip(arc.end);
        if let ArcControl::Constant(u) = arc.u {
            arc.u = ArcControl::Constant(-u);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> PhysicalParams {
        PhysicalParams::new(0.740, 0.060, 32.3).unwrap()
    }

    #[test]
    fn reference_durations() {
        let s = synthesize_optimal(&reference(), &SynthesisOptions::default()).unwrap();
        assert!((s.total_seconds - 0.2038).abs() < 5e-4, "{}", s.total_seconds);
        assert_eq!(s.structure(), "bang-singular_horizontal-bang-singular_vertical");
        assert_eq!(s.junction, Some(Junction::AdmissibilityLoss));
        let ir = inversion_recovery(&reference(), &Options::default()).unwrap();
        assert!((ir.total_seconds - 0.4782).abs() < 5e-4, "{}", ir.total_seconds);
    }

    #[test]
    fn arc_durations_match_closed_forms() {
        let p = reference();
        let n = p.normalize().unwrap();
        let s = synthesize_optimal(&p, &SynthesisOptions::default()).unwrap();
        let z0 = horizontal_ordinate(&n).unwrap();
        let y_min = admissibility_bound(&n).unwrap();
        let a2 = &s.arcs[1];
        let expect = horizontal_duration(a2.start[0], y_min, &n, z0);
        assert!((a2.duration_tau - expect).abs() < 1e-8, "{} vs {expect}", a2.duration_tau);
        let a4 = &s.arcs[3];
        assert!((a4.duration_tau - vertical_duration(a4.start[1], &n)).abs() < 1e-8);
    }

    #[test]
    fn arc_invariants() {
        let s = synthesize_optimal(&reference(), &SynthesisOptions::default()).unwrap();
        s.check_chain().unwrap();
        for a in &s.arcs {
            assert!(a.duration_tau > 0.0);
            if a.kind == ArcKind::Bang {
                assert_eq!(a.u, ArcControl::Constant(-TAU));
            }
        }
        let end = s.end().unwrap();
        assert!(end.radius() < TARGET_TOL);
    }

    #[test]
    fn reflection_gives_identical_durations() {
        let so = SynthesisOptions { check_switching: false, ..SynthesisOptions::default() };
        let up = synthesize_optimal(&reference(), &so).unwrap();
        let down = synthesize_optimal(&reference(), &SynthesisOptions { branch: Branch::Lower, ..so }).unwrap();
        assert!((up.total_tau - down.total_tau).abs() < 1e-9);
        assert!(down.arcs[1].start[0] < 0.0);
        let m = mirrored(&up);
        for (a, b) in m.arcs.iter().zip(&down.arcs) {
            assert!((a.start[0] - b.start[0]).abs() < 1e-8);
        }
    }

    #[test]
    fn low_amplitude_is_unreachable() {
        let err = synthesize_optimal(&reference().with_omega(2.5), &SynthesisOptions::default()).unwrap_err();
        assert!(matches!(err, SynthesisError::Unreachable(_)), "{err}");
    }

    #[test]
    fn unsupported_regime() {
        let p = PhysicalParams::new(0.06, 0.1, 32.3).unwrap();
        assert!(matches!(
            synthesize_optimal(&p, &SynthesisOptions::default()),
            Err(SynthesisError::UnsupportedRegime { .. })
        ));
    }

    #[test]
    fn ir_without_dissipation_is_unreachable() {
        let n = NormalizedParams::from_rates(0.0, 0.0).unwrap();
        assert_eq!(inversion_recovery_normalized(&n, &Options::default()), Err(SynthesisError::IrUnreachable));
    }

    #[test]
    fn empty_schedule_replays_to_start() {
        let mut s = synthesize_optimal(&reference(), &SynthesisOptions::default()).unwrap();
        s.arcs.clear();
        let t = simulate_schedule(&s, PlanarState::NORTH_POLE, &Options::default()).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.duration(), 0.0);
    }

    #[test]
    fn replay_reaches_origin() {
        let s = synthesize_optimal(&reference(), &SynthesisOptions::default()).unwrap();
        let t = simulate_schedule(&s, PlanarState::NORTH_POLE, &Options::default().sample_every(1e-2)).unwrap();
        let end = PlanarState::from_array(t.last().state);
        assert!(end.radius() < 1e-6, "{end:?}");
        assert_eq!(t.segments(), 4);
        assert!((t.duration() - s.total_tau).abs() < 1e-12);
    }

    #[test]
    fn replay_rejects_wrong_start() {
        let s = synthesize_optimal(&reference(), &SynthesisOptions::default()).unwrap();
        assert!(matches!(
            simulate_schedule(&s, PlanarState::new(0.0, 0.9), &Options::default()),
            Err(SynthesisError::ChainMismatch { arc: 0, .. })
        ));
    }

    #[test]
    fn asymptotic_examples() {
        let a = asymptotic_times(0.740, 0.060).unwrap();
        assert!((a.alpha + 0.12450).abs() < 1e-5);
        assert!((a.t_opt_inf - 0.1998).abs() < 1e-4);
        assert!((a.ratio_inf - 0.389).abs() < 1e-3);
        assert_eq!(a.t_ir_inf, 0.740 * LN_2);
        assert!(asymptotic_times(0.06, 0.74).is_err());
    }

    #[test]
    fn sweep_rejects_bad_lists() {
        let so = SynthesisOptions::default();
        assert!(sweep_ratio(&reference(), &[], &so).is_err());
        assert!(sweep_ratio(&reference(), &[10.0, 5.0], &so).is_err());
        assert!(sweep_ratio(&reference(), &[-1.0], &so).is_err());
    }

    #[test]
    fn field_map_origin_is_null() {
        let n = reference().normalize().unwrap();
        let m = field_map(&n, 21).unwrap();
        let c = m.cell(10, 10);
        assert_eq!((c.y, c.z), (0.0, 0.0));
        assert!(c.dr_dot_dtheta.is_none());
        assert_eq!(m.cells.len(), 441);
    }

    #[test]
    fn golden_section_finds_parabola_minimum() {
        let x = golden_section(0.0, 3.0, |x| (x - 1.3) * (x - 1.3));
        assert!((x - 1.3).abs() < 1e-8);
    }
}
