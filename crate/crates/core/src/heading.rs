//! Single-integrator safety filter used to define the safe heading.
//!
//! A proportional tracking velocity `v_p = K_v (p_d - p)` is filtered by the
//! smooth half-Sontag universal formula so that the filtered velocity
//! satisfies `grad(h0) . v_s + alpha h0 >= 0`. The direction of `v_s` is the
//! heading the unicycle is steered towards.

use std::f64::consts::PI;

use thiserror::Error;

use crate::field::{FieldError, GridField};
use crate::scenario::Scenario;
use crate::vehicle::reference;

/// Below this `|grad h0|^2` the filter direction is undefined and `v_p` is
/// returned unchanged.
pub const EPS_B: f64 = 1e-10;
/// Below this speed the heading of `v_s` is undefined.
pub const EPS_V: f64 = 1e-8;

#[derive(Debug, Error, PartialEq)]
#[error("heading undefined: |v_s| = {0:e}")]
pub struct HeadingUndefined(pub f64);

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafeVelocity {
    pub v_p: [f64; 2],
    pub v_s: [f64; 2],
    /// `atan2(v_s)`; `None` when `|v_s| <= EPS_V`.
    pub theta_s: Option<f64>,
    /// Constraint slack `grad(h0) . v_p + alpha h0`.
    pub a: f64,
    /// `|grad h0|^2`.
    pub b: f64,
    pub lambda: f64,
}

impl SafeVelocity {
    pub fn speed(&self) -> f64 {
        self.v_s[0].hypot(self.v_s[1])
    }
}

/// Proportional tracking velocity towards the reference point at `t`.
pub fn nominal_velocity(t: f64, p: [f64; 2], scenario: &Scenario) -> [f64; 2] {
    let [xd, yd] = reference(t, scenario);
    let k = scenario.gains.k_v;
    [k * (xd - p[0]), k * (yd - p[1])]
}

/// Half-Sontag gain `(-a + sqrt(a^2 + alpha_q b^2)) / (2b)`, zero for
/// `b < EPS_B`.
pub fn sontag_lambda(a: f64, b: f64, alpha_q: f64) -> f64 {
    if b < EPS_B {
        return 0.0;
    }
    let q = alpha_q * b * b;
    let root = (a * a + q).sqrt();
    if a > 0.0 {
        // rationalized to avoid cancellation
        q / (2.0 * b * (a + root))
    } else {
        (root - a) / (2.0 * b)
    }
}

/// Filters a given tracking velocity through the half-Sontag formula at `p`.
pub fn filter_velocity(
    v_p: [f64; 2],
    p: [f64; 2],
    field: &GridField,
    scenario: &Scenario,
) -> Result<SafeVelocity, FieldError> {
    let h0 = field.sample(p)?;
    let g = field.gradient(p)?;
    let a = g[0] * v_p[0] + g[1] * v_p[1] + scenario.alpha_slope * h0;
    let b = g[0] * g[0] + g[1] * g[1];
    let lambda = sontag_lambda(a, b, scenario.alpha_q);
    let v_s = if b < EPS_B {
        v_p
    } else {
        [v_p[0] + lambda * g[0], v_p[1] + lambda * g[1]]
    };
    let theta_s = safe_heading(v_s).ok();
    Ok(SafeVelocity {
        v_p,
        v_s,
        theta_s,
        a,
        b,
        lambda,
    })
}

/// Safe single-integrator velocity at `(t, p)`.
pub fn safe_velocity(
    t: f64,
    p: [f64; 2],
    field: &GridField,
    scenario: &Scenario,
) -> Result<SafeVelocity, FieldError> {
    filter_velocity(nominal_velocity(t, p, scenario), p, field, scenario)
}

/// Heading of `v_s` in `(-pi, pi]`.
pub fn safe_heading(v_s: [f64; 2]) -> Result<f64, HeadingUndefined> {
    let n = v_s[0].hypot(v_s[1]);
    if !(n > EPS_V) {
        return Err(HeadingUndefined(n));
    }
    let th = v_s[1].atan2(v_s[0]);
    Ok(if th <= -PI { PI } else { th })
}
