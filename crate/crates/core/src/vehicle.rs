//! Unicycle model, reference trajectory, nominal tracking controllers and the
//! bounded measurement model.

use rand::Rng;

use crate::field::{FieldError, GridField};
use crate::heading::{safe_velocity, wrap_angle, SafeVelocity};
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    /// Heading in `(-pi, pi]`.
    pub theta: f64,
}

impl VehicleState {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.theta]
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlInput {
    pub v: f64,
    pub omega: f64,
}

impl ControlInput {
    pub fn new(v: f64, omega: f64) -> Self {
        Self { v, omega }
    }

    pub fn to_array(self) -> [f64; 2] {
        [self.v, self.omega]
    }

    pub fn from_array(u: [f64; 2]) -> Self {
        Self::new(u[0], u[1])
    }
}

/// Desired position `(x_d(t), y_d(t))`.
pub fn reference(t: f64, scenario: &Scenario) -> [f64; 2] {
    let r = &scenario.reference;
    let xd = r.v_ref * t;
    [xd, r.a_d * (r.c_d * xd + r.phi_d).sin()]
}

/// Bearing from the state to the reference point.
pub fn desired_heading(t: f64, state: &VehicleState, scenario: &Scenario) -> f64 {
    let [xd, yd] = reference(t, scenario);
    (yd - state.y).atan2(xd - state.x)
}

/// Reference-tracking law: `v = K_v |r_e|`, `omega = K_omega (theta_d - theta)`.
pub fn baseline_controller(t: f64, estimate: &VehicleState, scenario: &Scenario) -> ControlInput {
    let [xd, yd] = reference(t, scenario);
    let dist = (xd - estimate.x).hypot(yd - estimate.y);
    let theta_d = desired_heading(t, estimate, scenario);
    ControlInput::new(
        scenario.gains.k_v * dist,
        scenario.gains.k_omega * wrap_angle(theta_d - estimate.theta),
    )
}

/// Nominal input aligned with the safe single-integrator velocity:
/// `v = |v_s|`, `omega = K_omega (theta_s - theta)`. Returns the heading used,
/// which falls back to `fallback_heading` where `v_s` vanishes.
pub fn safe_nominal(
    t: f64,
    estimate: &VehicleState,
    field: &GridField,
    scenario: &Scenario,
    fallback_heading: f64,
) -> Result<(ControlInput, SafeVelocity, f64), FieldError> {
    let sv = safe_velocity(t, estimate.position(), field, scenario)?;
    let theta_s = sv.theta_s.unwrap_or(fallback_heading);
    let u = ControlInput::new(
        sv.speed(),
        scenario.gains.k_omega * wrap_angle(theta_s - estimate.theta),
    );
    Ok((u, sv, theta_s))
}

fn unicycle_rate(s: [f64; 3], u: ControlInput) -> [f64; 3] {
    [u.v * s[2].cos(), u.v * s[2].sin(), u.omega]
}

/// One classical RK4 step of the unicycle under a constant input.
pub fn step_dynamics(state: &VehicleState, input: ControlInput, dt: f64) -> VehicleState {
    let s = [state.x, state.y, state.theta];
    let add = |a: [f64; 3], k: [f64; 3], h: f64| [a[0] + h * k[0], a[1] + h * k[1], a[2] + h * k[2]];
    let k1 = unicycle_rate(s, input);
    let k2 = unicycle_rate(add(s, k1, dt / 2.0), input);
    let k3 = unicycle_rate(add(s, k2, dt / 2.0), input);
    let k4 = unicycle_rate(add(s, k3, dt), input);
    let mut next = [0.0; 3];
    for i in 0..3 {
        next[i] = s[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    VehicleState::new(next[0], next[1], next[2])
}

/// Unit draw in `[-1, 1]^3` scaled by the error box half-widths.
pub fn draw_error(error_box: [f64; 3], rng: &mut impl Rng) -> [f64; 3] {
    let mut e = [0.0; 3];
    for (ei, w) in e.iter_mut().zip(error_box) {
        let u: f64 = rng.gen_range(-1.0..=1.0);
        *ei = w * u;
    }
    e
}

/// Estimate `x_hat = x - e` with the error applied; the true state then lies in
/// `x_hat + E`.
pub fn apply_error(state: &VehicleState, e: [f64; 3]) -> VehicleState {
    VehicleState::new(state.x - e[0], state.y - e[1], state.theta - e[2])
}

/// Bounded measurement: `x_hat = x - e` with `e` uniform in the error box.
pub fn measure(state: &VehicleState, error_box: [f64; 3], rng: &mut impl Rng) -> VehicleState {
    apply_error(state, draw_error(error_box, rng))
}
