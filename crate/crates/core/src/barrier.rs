//! Barrier functions for the unicycle and the derivatives consumed by the
//! robust CBF constraint.
//!
//! [`ModifiedBarrier`] subtracts a heading Lyapunov term from the Poisson
//! field, `h = h0 - (1 - cos(theta - theta_s)) / mu`, so that both inputs
//! appear at first order in `dh/dt`. [`PlainBarrier`] uses `h0` directly; its
//! angular-rate coefficient vanishes identically.

use crate::field::{FieldError, GridField};
use crate::heading::{safe_velocity, wrap_angle};
use crate::scenario::Scenario;

/// Barrier value, partials and Lie-derivative coefficients at one `(t, x)`.
///
/// For the driftless unicycle `L_f = 0`, `L_gv = dh_dx cos(theta) +
/// dh_dy sin(theta)` and `L_gw = dh_dtheta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierEval {
    pub h: f64,
    pub dh_dx: f64,
    pub dh_dy: f64,
    pub dh_dtheta: f64,
    pub dh_dt: f64,
    pub l_gv: f64,
    pub l_gw: f64,
    pub l_f: f64,
}

impl BarrierEval {
    fn assemble(h: f64, dh_dx: f64, dh_dy: f64, dh_dtheta: f64, dh_dt: f64, theta: f64) -> Self {
        Self {
            h,
            dh_dx,
            dh_dy,
            dh_dtheta,
            dh_dt,
            l_gv: dh_dx * theta.cos() + dh_dy * theta.sin(),
            l_gw: dh_dtheta,
            l_f: 0.0,
        }
    }

    /// `L_g h` as a row vector over `(v, omega)`.
    pub fn l_g(&self) -> [f64; 2] {
        [self.l_gv, self.l_gw]
    }

    /// Predicted `dh/dt` under input `u`.
    pub fn h_dot(&self, u: [f64; 2]) -> f64 {
        self.l_f + self.l_gv * u[0] + self.l_gw * u[1] + self.dh_dt
    }
}

pub trait Barrier {
    fn value(&self, t: f64, state: [f64; 3]) -> Result<f64, FieldError>;
    fn eval(&self, t: f64, state: [f64; 3]) -> Result<BarrierEval, FieldError>;
}

/// Where the target heading of the Lyapunov term comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HeadingSource {
    /// Direction of the half-Sontag safe velocity; `fallback` is used where
    /// that velocity vanishes.
    SafeFilter { fallback: f64 },
    /// Fixed heading, independent of time and position.
    Constant(f64),
}

#[derive(Debug, Clone, Copy)]
pub struct ModifiedBarrier<'a> {
    pub field: &'a GridField,
    pub scenario: &'a Scenario,
    pub heading: HeadingSource,
}

impl<'a> ModifiedBarrier<'a> {
    pub fn new(field: &'a GridField, scenario: &'a Scenario, fallback_heading: f64) -> Self {
        Self {
            field,
            scenario,
            heading: HeadingSource::SafeFilter {
                fallback: fallback_heading,
            },
        }
    }

    pub fn with_heading(field: &'a GridField, scenario: &'a Scenario, heading: HeadingSource) -> Self {
        Self {
            field,
            scenario,
            heading,
        }
    }

    /// `theta_s(t, x, y)`.
    pub fn safe_heading(&self, t: f64, p: [f64; 2]) -> Result<f64, FieldError> {
        match self.heading {
            HeadingSource::Constant(th) => Ok(th),
            HeadingSource::SafeFilter { fallback } => {
                let sv = safe_velocity(t, p, self.field, self.scenario)?;
                Ok(sv.theta_s.unwrap_or(fallback))
            }
        }
    }

    pub fn step_xy(&self) -> f64 {
        self.field.spacing / 2.0
    }

    pub fn step_t(&self) -> f64 {
        self.scenario.dt / 10.0
    }
}

impl Barrier for ModifiedBarrier<'_> {
    fn value(&self, t: f64, state: [f64; 3]) -> Result<f64, FieldError> {
        let p = [state[0], state[1]];
        let h0 = self.field.sample(p)?;
        let theta_s = self.safe_heading(t, p)?;
        Ok(h0 - (1.0 - wrap_angle(state[2] - theta_s).cos()) / self.scenario.mu)
    }

    /// Spatial and time partials by central differences of [`Self::value`];
    /// the heading partial is analytic.
    fn eval(&self, t: f64, state: [f64; 3]) -> Result<BarrierEval, FieldError> {
        let [x, y, th] = state;
        let p = [x, y];
        let h0 = self.field.sample(p)?;
        let theta_s = self.safe_heading(t, p)?;
        let diff = wrap_angle(th - theta_s);
        let h = h0 - (1.0 - diff.cos()) / self.scenario.mu;

        let dxy = self.step_xy();
        let dt = self.step_t();
        let dh_dx =
            (self.value(t, [x + dxy, y, th])? - self.value(t, [x - dxy, y, th])?) / (2.0 * dxy);
        let dh_dy =
            (self.value(t, [x, y + dxy, th])? - self.value(t, [x, y - dxy, th])?) / (2.0 * dxy);
        let dh_dt = (self.value(t + dt, state)? - self.value(t - dt, state)?) / (2.0 * dt);
        let dh_dtheta = -diff.sin() / self.scenario.mu;
        Ok(BarrierEval::assemble(h, dh_dx, dh_dy, dh_dtheta, dh_dt, th))
    }
}

/// The Poisson field used directly as a barrier.
#[derive(Debug, Clone, Copy)]
pub struct PlainBarrier<'a> {
    pub field: &'a GridField,
}

impl Barrier for PlainBarrier<'_> {
    fn value(&self, _t: f64, state: [f64; 3]) -> Result<f64, FieldError> {
        self.field.sample([state[0], state[1]])
    }

    fn eval(&self, _t: f64, state: [f64; 3]) -> Result<BarrierEval, FieldError> {
        let p = [state[0], state[1]];
        let h = self.field.sample(p)?;
        let g = self.field.gradient(p)?;
        Ok(BarrierEval::assemble(h, g[0], g[1], 0.0, 0.0, state[2]))
    }
}
