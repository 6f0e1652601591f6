//! Normalized planar Bloch system.
//!
//! The magnetization is scaled by its equilibrium value and time by the
//! control amplitude, `tau = (omega_max / 2pi) * t`, so the control bound is
//! always `2pi`. Resonant driving from the pole reduces the problem to the
//! meridian plane `(y, z)`:
//!
//! ```text
//! y' = -Gamma y        - u z
//! z' =  gamma (1 - z)  + u y
//! ```
//!
//! Everything here is a pure function of its arguments.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Normalized control bound.
pub const U_MAX: f64 = TAU;

/// Slack on `|u| <= U_MAX` accepted by [`rhs`].
pub const CONTROL_SLACK: f64 = 1e-12;

/// Distance within which a point counts as lying on a singular branch.
pub const LOCUS_TOL: f64 = 1e-8;

const DENOMINATOR_GUARD: f64 = 1e-14;
const ORIGIN_GUARD: f64 = 1e-14;

pub type Vec2 = [f64; 2];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("control {u} exceeds the bound 2pi")]
    ControlOutOfBounds { u: f64 },
    #[error("degenerate relaxation: Gamma == gamma (T1 == T2), the horizontal singular line is undefined")]
    DegenerateRelaxation,
    #[error("singular control denominator vanishes at ({y}, {z})")]
    SingularDenominator { y: f64, z: f64 },
    #[error("polar angle undefined at the origin")]
    OriginUndefined,
}

/// Relaxation times and control amplitude in laboratory units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// Longitudinal relaxation time, seconds.
    pub t1: f64,
    /// Transverse relaxation time, seconds.
    pub t2: f64,
    /// Maximum control amplitude `omega_max / 2pi`, Hz.
    pub omega_max_hz: f64,
}

impl PhysicalParams {
    pub fn new(t1: f64, t2: f64, omega_max_hz: f64) -> Result<Self, ModelError> {
        let p = Self { t1, t2, omega_max_hz };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let finite_pos = |v: f64| v.is_finite() && v > 0.0;
        if !finite_pos(self.t1) || !finite_pos(self.t2) || !finite_pos(self.omega_max_hz) {
            return Err(ModelError::InvalidParams(format!(
                "t1, t2 and omega_max_hz must be positive and finite (got {}, {}, {})",
                self.t1, self.t2, self.omega_max_hz
            )));
        }
        if self.t2 > 2.0 * self.t1 {
            return Err(ModelError::InvalidParams(format!("t2 = {} exceeds 2 t1 = {}", self.t2, 2.0 * self.t1)));
        }
        Ok(())
    }

    pub fn normalize(&self) -> Result<NormalizedParams, ModelError> {
        normalize(self)
    }

    pub fn with_omega(&self, omega_max_hz: f64) -> Self {
        Self { omega_max_hz, ..*self }
    }

    /// Seconds to normalized time.
    pub fn tau_from_seconds(&self, t: f64) -> f64 {
        t * self.omega_max_hz
    }

    /// Normalized time to seconds.
    pub fn seconds_from_tau(&self, tau: f64) -> f64 {
        tau / self.omega_max_hz
    }
}

/// Dimensionless relaxation rates and control bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedParams {
    /// Transverse rate Gamma.
    pub big_gamma: f64,
    /// Longitudinal rate gamma.
    pub small_gamma: f64,
    pub u_max: f64,
}

impl NormalizedParams {
    /// Rates given directly in normalized units. Zero rates are allowed so
    /// that the dissipation-free limit can be studied; negative rates are not.
    pub fn from_rates(big_gamma: f64, small_gamma: f64) -> Result<Self, ModelError> {
        if !(big_gamma >= 0.0 && small_gamma >= 0.0) || !big_gamma.is_finite() || !small_gamma.is_finite() {
            return Err(ModelError::InvalidParams(format!(
                "rates must be finite and non-negative (got {big_gamma}, {small_gamma})"
            )));
        }
        Ok(Self { big_gamma, small_gamma, u_max: U_MAX })
    }

    pub fn is_degenerate(&self) -> bool {
        self.big_gamma == self.small_gamma
    }
}

/// `Gamma = 2pi / (omega_max T2)`, `gamma = 2pi / (omega_max T1)` with
/// `omega_max = 2pi f`.
pub fn normalize(p: &PhysicalParams) -> Result<NormalizedParams, ModelError> {
    p.validate()?;
    Ok(NormalizedParams {
        big_gamma: 1.0 / (p.omega_max_hz * p.t2),
        small_gamma: 1.0 / (p.omega_max_hz * p.t1),
        u_max: U_MAX,
    })
}

/// Point of the meridian plane.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlanarState {
    pub y: f64,
    pub z: f64,
}

impl PlanarState {
    pub const NORTH_POLE: PlanarState = PlanarState { y: 0.0, z: 1.0 };
    pub const ORIGIN: PlanarState = PlanarState { y: 0.0, z: 0.0 };

    pub const fn new(y: f64, z: f64) -> Self {
        Self { y, z }
    }

    pub fn radius(&self) -> f64 {
        self.y.hypot(self.z)
    }

    pub fn to_array(self) -> Vec2 {
        [self.y, self.z]
    }

    pub fn from_array(a: Vec2) -> Self {
        Self { y: a[0], z: a[1] }
    }

    pub fn distance(&self, other: &PlanarState) -> f64 {
        (self.y - other.y).hypot(self.z - other.z)
    }

    /// Reflection `y -> -y`.
    pub fn mirrored(self) -> Self {
        Self { y: -self.y, z: self.z }
    }
}

/// Drift `F0 = (-Gamma y, gamma - gamma z)`.
pub fn drift_field(s: &PlanarState, n: &NormalizedParams) -> Vec2 {
    [-n.big_gamma * s.y, n.small_gamma - n.small_gamma * s.z]
}

/// Control direction `F1 = (-z, y)`, the infinitesimal rotation about x.
pub fn control_field(s: &PlanarState) -> Vec2 {
    [-s.z, s.y]
}

/// `F0 + u F1` without the bound check.
pub fn flow(s: &PlanarState, u: f64, n: &NormalizedParams) -> Vec2 {
    [-n.big_gamma * s.y - u * s.z, n.small_gamma - n.small_gamma * s.z + u * s.y]
}

/// `F0 + u F1`, rejecting controls beyond the bound.
pub fn rhs(s: &PlanarState, u: f64, n: &NormalizedParams) -> Result<Vec2, ModelError> {
    if !(u.abs() <= n.u_max + CONTROL_SLACK) {
        return Err(ModelError::ControlOutOfBounds { u });
    }
    Ok(flow(s, u, n))
}

/// `V = [F0, F1]`-type field whose product with the costate is `dphi/dtau`.
pub fn derived_field(s: &PlanarState, n: &NormalizedParams) -> Vec2 {
    let d = n.small_gamma - n.big_gamma;
    [-n.small_gamma + d * s.z, d * s.y]
}

pub fn det(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// `det(F1, V)`; vanishes exactly on the singular locus.
pub fn det_f1_v(s: &PlanarState, n: &NormalizedParams) -> f64 {
    det(control_field(s), derived_field(s, n))
}

/// `det(F0, F1)`; the clock form is undefined where it vanishes.
pub fn det_f0_f1(s: &PlanarState, n: &NormalizedParams) -> f64 {
    det(drift_field(s, n), control_field(s))
}

/// Ordinate of the horizontal singular line, `z0 = -gamma / (2 (Gamma - gamma))`.
pub fn horizontal_ordinate(n: &NormalizedParams) -> Result<f64, ModelError> {
    if n.is_degenerate() {
        return Err(ModelError::DegenerateRelaxation);
    }
    Ok(-n.small_gamma / (2.0 * (n.big_gamma - n.small_gamma)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SingularBranch {
    Horizontal,
    Vertical,
}

/// The singular set: the vertical line `y = 0` and, unless the relaxation
/// is degenerate, the horizontal line `z = z0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularLocus {
    pub z0: Option<f64>,
    pub degenerate: bool,
}

impl SingularLocus {
    /// Branch containing `s`, horizontal first when both apply.
    pub fn branch_of(&self, s: &PlanarState, tol: f64) -> Option<SingularBranch> {
        match self.z0 {
            Some(z0) if (s.z - z0).abs() <= tol => Some(SingularBranch::Horizontal),
            _ if s.y.abs() <= tol => Some(SingularBranch::Vertical),
            _ => None,
        }
    }
}

pub fn singular_locus(n: &NormalizedParams) -> SingularLocus {
    match horizontal_ordinate(n) {
        Ok(z0) => SingularLocus { z0: Some(z0), degenerate: false },
        Err(_) => SingularLocus { z0: None, degenerate: true },
    }
}

/// Feedback singular control
///
/// ```text
/// u_s = [-y gamma (Gamma - 2 gamma) - 2 y z0 (gamma^2 - Gamma^2)]
///       / [2 (Gamma - gamma)(y^2 - z0^2) - gamma z0]
/// ```
///
/// Defined wherever the denominator is nonzero so it can be plotted off the
/// locus; it only keeps `phi = 0` on the singular lines. Exactly zero on
/// `y = 0`.
pub fn singular_control(s: &PlanarState, n: &NormalizedParams) -> Result<f64, ModelError> {
    if s.y == 0.0 {
        return Ok(0.0);
    }
    let z0 = horizontal_ordinate(n)?;
    let (bg, sg) = (n.big_gamma, n.small_gamma);
    let num = -s.y * sg * (bg - 2.0 * sg) - 2.0 * s.y * z0 * (sg * sg - bg * bg);
    let den = 2.0 * (bg - sg) * (s.y * s.y - z0 * z0) - sg * z0;
    if den.abs() < DENOMINATOR_GUARD {
        return Err(ModelError::SingularDenominator { y: s.y, z: s.z });
    }
    Ok(num / den)
}

/// Smallest `|y|` at which the horizontal singular control is admissible:
/// `|gamma (gamma - 2 Gamma)| / (2pi (2 Gamma - 2 gamma))`.
pub fn admissibility_bound(n: &NormalizedParams) -> Result<f64, ModelError> {
    if n.is_degenerate() {
        return Err(ModelError::DegenerateRelaxation);
    }
    let (bg, sg) = (n.big_gamma, n.small_gamma);
    Ok((sg * (sg - 2.0 * bg)).abs() / (n.u_max * (2.0 * bg - 2.0 * sg)).abs())
}

/// Radial quantities in polar coordinates `y = r cos(theta)`, `z = r sin(theta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarDiagnostics {
    pub r: f64,
    pub theta: f64,
    /// `-(Gamma cos^2 + gamma sin^2) r + gamma sin(theta)`; independent of u.
    pub r_dot: f64,
    /// `-(gamma - Gamma) r sin(2 theta) + gamma cos(theta)`.
    pub dr_dot_dtheta: f64,
}

pub fn polar_diagnostics(s: &PlanarState, n: &NormalizedParams) -> Result<PolarDiagnostics, ModelError> {
    let r = s.radius();
    if r < ORIGIN_GUARD {
        return Err(ModelError::OriginUndefined);
    }
    let theta = s.z.atan2(s.y);
    let (sin, cos) = theta.sin_cos();
    let (bg, sg) = (n.big_gamma, n.small_gamma);
    Ok(PolarDiagnostics {
        r,
        theta,
        r_dot: -(bg * cos * cos + sg * sin * sin) * r + sg * sin,
        dr_dot_dtheta: -(sg - bg) * r * (2.0 * theta).sin() + sg * cos,
    })
}

/// Second angular derivative of the radial velocity at fixed radius.
pub fn d2r_dot_dtheta2(s: &PlanarState, n: &NormalizedParams) -> Result<f64, ModelError> {
    let r = s.radius();
    if r < ORIGIN_GUARD {
        return Err(ModelError::OriginUndefined);
    }
    let theta = s.z.atan2(s.y);
    Ok(-2.0 * (n.small_gamma - n.big_gamma) * r * (2.0 * theta).cos() - n.small_gamma * theta.sin())
}
