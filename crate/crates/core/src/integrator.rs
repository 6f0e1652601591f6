//! Adaptive Dormand–Prince 5(4) propagation with dense output and event
//! location.
//!
//! States are fixed-size arrays so the same code drives the planar system
//! (`N = 2`), the state–costate system (`N = 4`) and the reduced singular
//! dynamics (`N = 1`).

use thiserror::Error;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const MIN_TOL: f64 = 1e-13;
pub const MAX_TOL: f64 = 1e-3;
const MIN_STEP: f64 = 1e-15;
/// Events closer than this are considered simultaneous.
pub const EVENT_TIE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrateError {
    #[error("tolerance {0} outside [1e-13, 1e-3]")]
    InvalidTolerance(f64),
    #[error("horizon must be positive and finite (got {0})")]
    InvalidHorizon(f64),
    #[error("step size collapsed below 1e-15 at tau = {tau}")]
    StepUnderflow { tau: f64 },
    #[error("state became non-finite at tau = {tau}")]
    NonFinite { tau: f64 },
}

/// Right-hand side of `x' = f(tau, x)`.
///
/// `control` only annotates samples; it does not enter the dynamics.
pub trait VectorField<const N: usize> {
    fn eval(&self, tau: f64, x: &[f64; N]) -> [f64; N];

    fn control(&self, _tau: f64, _x: &[f64; N]) -> f64 {
        0.0
    }
}

impl<F, const N: usize> VectorField<N> for F
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    fn eval(&self, tau: f64, x: &[f64; N]) -> [f64; N] {
        self(tau, x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Options {
    /// Mixed relative/absolute local error bound per step.
    pub tol: f64,
    pub initial_step: Option<f64>,
    pub max_step: f64,
    /// Record samples on a uniform grid instead of at every accepted step.
    pub sample_every: Option<f64>,
}

impl Default for Options {
    fn default() -> Self {
        Self { tol: DEFAULT_TOL, initial_step: None, max_step: f64::INFINITY, sample_every: None }
    }
}

impl Options {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }

    pub fn max_step(mut self, h: f64) -> Self {
        self.max_step = h;
        self
    }

    pub fn sample_every(mut self, dt: f64) -> Self {
        self.sample_every = Some(dt);
        self
    }

    pub fn initial_step(mut self, h: f64) -> Self {
        self.initial_step = Some(h);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Rising,
    Falling,
    Either,
}

impl Direction {
    /// A guard that starts exactly at zero does not count as crossing.
    fn crossed(self, before: f64, after: f64) -> bool {
        let rising = before < 0.0 && after >= 0.0;
        let falling = before > 0.0 && after <= 0.0;
        match self {
            Direction::Rising => rising,
            Direction::Falling => falling,
            Direction::Either => rising || falling,
        }
    }
}

type Guard<'a, const N: usize> = Box<dyn Fn(f64, &[f64; N]) -> f64 + 'a>;

/// Named zero-crossing condition on `(tau, state)`.
pub struct EventSpec<'a, const N: usize> {
    pub name: String,
    pub direction: Direction,
    guard: Guard<'a, N>,
}

impl<'a, const N: usize> EventSpec<'a, N> {
    pub fn new(name: impl Into<String>, direction: Direction, guard: impl Fn(f64, &[f64; N]) -> f64 + 'a) -> Self {
        Self { name: name.into(), direction, guard: Box::new(guard) }
    }

    pub fn eval(&self, tau: f64, x: &[f64; N]) -> f64 {
        (self.guard)(tau, x)
    }
}

impl<const N: usize> std::fmt::Debug for EventSpec<'_, N> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EventSpec").field("name", &self.name).field("direction", &self.direction).finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample<const N: usize> {
    pub tau: f64,
    pub state: [f64; N],
    /// Control in force from this sample onward.
    pub u: f64,
    /// Index of the arc the sample belongs to when trajectories are chained.
    pub segment: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<const N: usize> {
    pub samples: Vec<Sample<N>>,
    pub terminal_event: Option<String>,
}

impl<const N: usize> Trajectory<N> {
    pub fn single(state: [f64; N], u: f64) -> Self {
        Self { samples: vec![Sample { tau: 0.0, state, u, segment: 0 }], terminal_event: None }
    }

    pub fn first(&self) -> &Sample<N> {
        &self.samples[0]
    }

    pub fn last(&self) -> &Sample<N> {
        self.samples.last().expect("trajectory has at least one sample")
    }

    pub fn duration(&self) -> f64 {
        self.last().tau - self.first().tau
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn segments(&self) -> usize {
        self.samples.last().map_or(0, |s| s.segment + 1)
    }

    /// Chain `next` after `self`. The first sample of `next` replaces the
    /// current last sample so time stays strictly increasing; it starts a
    /// new segment.
    pub fn append(&mut self, next: Trajectory<N>) {
        let offset = self.last().tau;
        let seg = self.last().segment + 1;
        let base = next.samples[0].segment;
        self.samples.pop();
        self.samples.extend(next.samples.into_iter().map(|s| Sample {
            tau: s.tau + offset,
            segment: seg + s.segment - base,
            ..s
        }));
        self.terminal_event = next.terminal_event;
    }
}

/// How an integration ended.
#[derive(Debug, Clone, PartialEq)]
pub enum Stop<const N: usize> {
    Event { index: usize, name: String, tau: f64, state: [f64; N] },
    Horizon { tau: f64, state: [f64; N] },
}

impl<const N: usize> Stop<N> {
    pub fn state(&self) -> [f64; N] {
        match self {
            Stop::Event { state, .. } | Stop::Horizon { state, .. } => *state,
        }
    }

    pub fn tau(&self) -> f64 {
        match self {
            Stop::Event { tau, .. } | Stop::Horizon { tau, .. } => *tau,
        }
    }

    pub fn event_index(&self) -> Option<usize> {
        match self {
            Stop::Event { index, .. } => Some(*index),
            Stop::Horizon { .. } => None,
        }
    }

    pub fn event_name(&self) -> Option<&str> {
        match self {
            Stop::Event { name, .. } => Some(name),
            Stop::Horizon { .. } => None,
        }
    }
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Hairer's continuous extension.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

struct Step<const N: usize> {
    t0: f64,
    h: f64,
    y1: [f64; N],
    k7: [f64; N],
    err: f64,
    cont: [[f64; N]; 5],
}

impl<const N: usize> Step<N> {
    fn dense(&self, t: f64) -> [f64; N] {
        let s = (t - self.t0) / self.h;
        let s1 = 1.0 - s;
        let c = &self.cont;
        std::array::from_fn(|i| c[0][i] + s * (c[1][i] + s1 * (c[2][i] + s * (c[3][i] + s1 * c[4][i]))))
    }
}

fn combo<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    std::array::from_fn(|i| y[i] + h * terms.iter().map(|(a, k)| a * k[i]).sum::<f64>())
}

fn dopri_step<F: VectorField<N>, const N: usize>(
    field: &F,
    t: f64,
    y: &[f64; N],
    k1: &[f64; N],
    h: f64,
    tol: f64,
) -> Step<N> {
    let k2 = field.eval(t + C2 * h, &combo(y, h, &[(A21, k1)]));
    let k3 = field.eval(t + C3 * h, &combo(y, h, &[(A31, k1), (A32, &k2)]));
    let k4 = field.eval(t + C4 * h, &combo(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]));
    let k5 = field.eval(t + C5 * h, &combo(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
    let k6 = field.eval(t + h, &combo(y, h, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]));
    let y1 = combo(y, h, &[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
    let k7 = field.eval(t + h, &y1);

    let mut acc = 0.0;
    for i in 0..N {
        let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        let sc = tol + tol * y[i].abs().max(y1[i].abs());
        acc += (e / sc).powi(2);
    }
    let err = (acc / N as f64).sqrt();

    let mut cont = [[0.0; N]; 5];
    for i in 0..N {
        let diff = y1[i] - y[i];
        let bspl = h * k1[i] - diff;
        cont[0][i] = y[i];
        cont[1][i] = diff;
        cont[2][i] = bspl;
        cont[3][i] = diff - h * k7[i] - bspl;
        cont[4][i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
    }
    Step { t0: t, h, y1, k7, err, cont }
}

fn rms<const N: usize>(v: &[f64; N], y: &[f64; N], tol: f64) -> f64 {
    let s: f64 = (0..N).map(|i| (v[i] / (tol + tol * y[i].abs())).powi(2)).sum();
    (s / N as f64).sqrt()
}

fn initial_step<F: VectorField<N>, const N: usize>(
    field: &F,
    y0: &[f64; N],
    f0: &[f64; N],
    tol: f64,
    horizon: f64,
) -> f64 {
    let d0 = rms(y0, y0, tol);
    let d1 = rms(f0, y0, tol);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(horizon);
    let y1 = combo(y0, h0, &[(1.0, f0)]);
    let f1 = field.eval(h0, &y1);
    let df: [f64; N] = std::array::from_fn(|i| f1[i] - f0[i]);
    let d2 = rms(&df, y0, tol) / h0;
    let dm = d1.max(d2);
    let h1 = if dm <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / dm).powf(0.2) };
    (100.0 * h0).min(h1).min(horizon)
}

fn validate(tol: f64, horizon: f64) -> Result<(), IntegrateError> {
    if !(MIN_TOL..=MAX_TOL).contains(&tol) {
        return Err(IntegrateError::InvalidTolerance(tol));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(IntegrateError::InvalidHorizon(horizon));
    }
    Ok(())
}

/// Propagate to `horizon`.
pub fn integrate<F: VectorField<N>, const N: usize>(
    field: &F,
    x0: [f64; N],
    horizon: f64,
    opts: &Options,
) -> Result<Trajectory<N>, IntegrateError> {
    integrate_until(field, x0, &[], horizon, opts).map(|(traj, _)| traj)
}

/// Propagate until the first event fires or `horizon` is reached.
///
/// Crossings are located by bisection on the dense output; the reported
/// state lies just past the crossing. When two events fire within
/// [`EVENT_TIE`] of each other the one listed first wins.
pub fn integrate_until<F: VectorField<N>, const N: usize>(
    field: &F,
    x0: [f64; N],
    events: &[EventSpec<'_, N>],
    horizon: f64,
    opts: &Options,
) -> Result<(Trajectory<N>, Stop<N>), IntegrateError> {
    validate(opts.tol, horizon)?;
    let tol = opts.tol;

    let mut t = 0.0;
    let mut y = x0;
    let mut f0 = field.eval(t, &y);
    let mut h = opts.initial_step.unwrap_or_else(|| initial_step(field, &y, &f0, tol, horizon));
    let mut guards: Vec<f64> = events.iter().map(|e| e.eval(t, &y)).collect();
    let mut samples = vec![Sample { tau: 0.0, state: x0, u: field.control(0.0, &x0), segment: 0 }];
    let mut next_out = opts.sample_every.map(|dt| (1usize, dt));
    let mut rejected = false;

    let push = |samples: &mut Vec<Sample<N>>, tau: f64, state: [f64; N]| {
        samples.push(Sample { tau, state, u: field.control(tau, &state), segment: 0 });
    };

    loop {
        let remaining = horizon - t;
        if remaining <= 0.0 {
            break;
        }
        let h_try = h.min(opts.max_step).min(remaining);
        let step = dopri_step(field, t, &y, &f0, h_try, tol);

        if !(step.err <= 1.0) {
            if !step.err.is_finite() && !y.iter().all(|v| v.is_finite()) {
                return Err(IntegrateError::NonFinite { tau: t });
            }
            let fac = if step.err.is_finite() { (0.9 * step.err.powf(-0.2)).max(0.2) } else { 0.2 };
            h = h_try * fac;
            rejected = true;
            if h < MIN_STEP {
                return Err(IntegrateError::StepUnderflow { tau: t });
            }
            continue;
        }

        let t1 = if h_try >= remaining { horizon } else { t + h_try };
        if !step.y1.iter().all(|v| v.is_finite()) {
            return Err(IntegrateError::NonFinite { tau: t1 });
        }

        let mut fired: Option<(usize, f64, [f64; N])> = None;
        for (i, ev) in events.iter().enumerate() {
            let g1 = ev.eval(t1, &step.y1);
            if ev.direction.crossed(guards[i], g1) {
                let (te, xe) = refine(ev, &step, t, t1, guards[i]);
                let better = match &fired {
                    None => true,
                    Some((_, tb, _)) => te < *tb - EVENT_TIE,
                };
                if better {
                    fired = Some((i, te, xe));
                }
            }
            guards[i] = g1;
        }

        let end = fired.as_ref().map_or(t1, |f| f.1);
        if let Some((k, dt)) = next_out.as_mut() {
            while (*k as f64) * *dt < end - EVENT_TIE {
                let ts = (*k as f64) * *dt;
                push(&mut samples, ts, step.dense(ts));
                *k += 1;
            }
        }

        if let Some((index, tau, state)) = fired {
            push(&mut samples, tau, state);
            let name = events[index].name.clone();
            return Ok((
                Trajectory { samples, terminal_event: Some(name.clone()) },
                Stop::Event { index, name, tau, state },
            ));
        }

        if next_out.is_none() || t1 == horizon {
            push(&mut samples, t1, step.y1);
        }
        t = t1;
        y = step.y1;
        f0 = step.k7;
        let grow = if step.err == 0.0 { 5.0 } else { (0.9 * step.err.powf(-0.2)).clamp(0.2, 5.0) };
        let grow = if rejected { grow.min(1.0) } else { grow };
        rejected = false;
        h = h_try * grow;
    }

    let state = samples.last().map(|s| s.state).unwrap_or(x0);
    Ok((Trajectory { samples, terminal_event: None }, Stop::Horizon { tau: horizon, state }))
}

fn refine<const N: usize>(ev: &EventSpec<'_, N>, step: &Step<N>, t0: f64, t1: f64, g0: f64) -> (f64, [f64; N]) {
    let (mut a, mut b) = (t0, t1);
    let mut ga = g0;
    let mut xb = step.y1;
    for _ in 0..200 {
        if b - a <= 1e-15 * b.abs().max(1.0) {
            break;
        }
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let xm = step.dense(m);
        let gm = ev.eval(m, &xm);
        if ev.direction.crossed(ga, gm) {
            b = m;
            xb = xm;
        } else {
            a = m;
            ga = gm;
        }
    }
    (b, xb)
}
