//! Closed-loop simulation of the compared controllers.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::adapt::{adapt_with, sample_perturbations, AdaptationConfig};
use crate::barrier::{Barrier, ModifiedBarrier, PlainBarrier};
use crate::field::{FieldError, GridField};
use crate::pipeline::SafePipeline;
use crate::qp::{plain_constraint, solve_filter, RobustnessParams};
use crate::scenario::{NoiseMode, Scenario};
use crate::vehicle::{
    apply_error, baseline_controller, draw_error, reference, step_dynamics, ControlInput, VehicleState,
};

/// Deadlock signature: the robot moves less than this distance...
pub const DEADLOCK_RADIUS: f64 = 0.05;
/// ...over this window...
pub const DEADLOCK_WINDOW: f64 = 5.0;
/// ...while the tracking error stays above this.
pub const DEADLOCK_MIN_ERROR: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ControllerVariant {
    /// Reference-tracking law filtered by the plain CBF-QP on the Poisson
    /// field.
    VanillaH0,
    /// Safe nominal law with the heading-augmented barrier and zero margin.
    Nonrobust,
    FixedGamma(RobustnessParams),
    /// `gamma1 e^{-eta1 h+}`, `gamma2^2 e^{-eta2 h+}` with `h` at the estimate.
    Tunable {
        gamma: RobustnessParams,
        eta: [f64; 2],
    },
    /// Parameters selected online at every adaptation step.
    Adaptive,
}

impl ControllerVariant {
    pub fn name(&self) -> &'static str {
        match self {
            Self::VanillaH0 => "vanilla_h0",
            Self::Nonrobust => "nonrobust",
            Self::FixedGamma(_) => "fixed_gamma",
            Self::Tunable { .. } => "tunable",
            Self::Adaptive => "adaptive",
        }
    }

    /// Resolves a variant name with parameters taken from the scenario.
    pub fn from_name(name: &str, scenario: &Scenario) -> Result<Self, UnknownVariant> {
        let fixed = RobustnessParams::new(scenario.fixed_gamma[0], scenario.fixed_gamma[1]);
        Ok(match name {
            "vanilla_h0" => Self::VanillaH0,
            "nonrobust" => Self::Nonrobust,
            "fixed_gamma" => Self::FixedGamma(fixed),
            "tunable" => Self::Tunable {
                gamma: fixed,
                eta: scenario.tunable_etas,
            },
            "adaptive" => Self::Adaptive,
            other => return Err(UnknownVariant(other.to_string())),
        })
    }

    /// The five controllers of the comparison study.
    pub fn all(scenario: &Scenario) -> Vec<Self> {
        ALL_NAMES
            .iter()
            .map(|n| Self::from_name(n, scenario).expect("known name"))
            .collect()
    }

    /// Parameters for a given barrier value at the estimate; `None` for the
    /// adaptive variant.
    pub fn scheduled_gamma(&self, h: f64) -> Option<RobustnessParams> {
        match *self {
            Self::VanillaH0 | Self::Nonrobust => Some(RobustnessParams::ZERO),
            Self::FixedGamma(g) => Some(g),
            Self::Tunable { gamma, eta } => {
                let hp = h.max(0.0);
                Some(RobustnessParams::new(
                    gamma.gamma1 * (-eta[0] * hp).exp(),
                    gamma.gamma2 * (-eta[1] * hp / 2.0).exp(),
                ))
            }
            Self::Adaptive => None,
        }
    }
}

pub const ALL_NAMES: [&str; 5] = ["vanilla_h0", "nonrobust", "fixed_gamma", "tunable", "adaptive"];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("unknown controller variant `{0}` (expected one of vanilla_h0, nonrobust, fixed_gamma, tunable, adaptive)")]
pub struct UnknownVariant(pub String);

impl fmt::Display for ControllerVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ControllerVariant {
    type Err = UnknownVariant;

    /// Parses with the paper-preset parameters.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_name(s, &Scenario::paper())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunStatus {
    Completed,
    /// The estimate or the true state left the field extent at `t`.
    LeftWorld { t: f64 },
}

impl RunStatus {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Completed => "completed",
            Self::LeftWorld { .. } => "left_world",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub state: VehicleState,
    pub estimate: VehicleState,
    pub nominal: ControlInput,
    pub input: ControlInput,
    /// Barrier of the controller at the true state.
    pub h_true: f64,
    /// Barrier of the controller at the estimate.
    pub h_est: f64,
    /// Poisson field at the true position.
    pub h0_true: f64,
    pub gamma: RobustnessParams,
    pub feasible: bool,
    pub adapt_evals: usize,
    pub wall_clock_us: f64,
    pub deadlocked: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub variant: String,
    pub dt: f64,
    pub records: Vec<StepRecord>,
    pub status: RunStatus,
}

impl TrajectoryLog {
    pub fn deadlocked(&self) -> bool {
        self.records.iter().any(|r| r.deadlocked)
    }

    /// First time flagged as deadlocked.
    pub fn deadlock_time(&self) -> Option<f64> {
        self.records.iter().find(|r| r.deadlocked).map(|r| r.t)
    }

    pub fn min_h_true(&self) -> f64 {
        self.records.iter().map(|r| r.h_true).fold(f64::INFINITY, f64::min)
    }

    pub fn min_h0_true(&self) -> f64 {
        self.records.iter().map(|r| r.h0_true).fold(f64::INFINITY, f64::min)
    }

    pub fn mean_wall_clock_us(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().map(|r| r.wall_clock_us).sum::<f64>() / self.records.len() as f64
    }

    pub fn final_state(&self) -> Option<VehicleState> {
        self.records.last().map(|r| r.state)
    }
}

/// Flags every step `k` whose trailing window of `window` seconds stayed
/// within `radius` of the position at the window start while the tracking
/// error exceeded `min_error` throughout.
pub fn detect_deadlock(
    times: &[f64],
    positions: &[[f64; 2]],
    tracking_errors: &[f64],
    window: f64,
    radius: f64,
    min_error: f64,
) -> Vec<bool> {
    let n = positions.len();
    let mut flags = vec![false; n];
    if n == 0 {
        return flags;
    }
    let dt = if n > 1 { times[1] - times[0] } else { 1.0 };
    let span = (window / dt).round() as usize;
    for k in span..n {
        let start = k - span;
        let anchor = positions[start];
        flags[k] = (start..=k).all(|j| {
            let p = positions[j];
            (p[0] - anchor[0]).hypot(p[1] - anchor[1]) < radius && tracking_errors[j] > min_error
        });
    }
    flags
}

/// Runs the closed loop on `field` and returns the full log. A run that
/// leaves the field returns the partial log with [`RunStatus::LeftWorld`].
pub fn run_simulation(scenario: &Scenario, field: &GridField, variant: ControllerVariant) -> TrajectoryLog {
    let dt = scenario.dt;
    let margin = 2.0 * field.spacing;
    let mut state = VehicleState::from_array(scenario.x0);
    let mut noise = ChaCha8Rng::seed_from_u64(scenario.seed);
    let frozen = draw_error(scenario.error_box, &mut noise);
    let mut theta_s_prev = state.theta;
    let mut gamma_prev = RobustnessParams::new(scenario.gamma_bounds[0], scenario.gamma_bounds[0]);
    let adapt_cfg = AdaptationConfig::from_scenario(scenario);
    let every = scenario.adaptation.every.max(1);

    let mut records = Vec::with_capacity(scenario.n_steps());
    let mut status = RunStatus::Completed;

    for k in 0..scenario.n_steps() {
        let t = k as f64 * dt;
        let started = Instant::now();
        let e = match scenario.noise {
            NoiseMode::Iid if k == 0 => frozen,
            NoiseMode::Iid => draw_error(scenario.error_box, &mut noise),
            NoiseMode::Frozen => frozen,
        };
        let estimate = apply_error(&state, e);
        if !field.contains(estimate.position(), margin) || !field.contains(state.position(), margin) {
            status = RunStatus::LeftWorld { t };
            break;
        }

        let step = match variant {
            ControllerVariant::VanillaH0 => vanilla_step(t, &state, &estimate, field, scenario),
            _ => safe_step(
                t,
                k,
                &state,
                &estimate,
                field,
                scenario,
                variant,
                &adapt_cfg,
                every,
                &mut theta_s_prev,
                &mut gamma_prev,
            ),
        };
        let step = match step {
            Ok(s) => s,
            Err(_) => {
                status = RunStatus::LeftWorld { t };
                break;
            }
        };

        records.push(StepRecord {
            t,
            state,
            estimate,
            nominal: step.nominal,
            input: step.input,
            h_true: step.h_true,
            h_est: step.h_est,
            h0_true: step.h0_true,
            gamma: step.gamma,
            feasible: step.feasible,
            adapt_evals: step.adapt_evals,
            wall_clock_us: started.elapsed().as_secs_f64() * 1e6,
            deadlocked: false,
        });
        state = step_dynamics(&state, step.input, dt);
    }

    let times: Vec<f64> = records.iter().map(|r| r.t).collect();
    let positions: Vec<[f64; 2]> = records.iter().map(|r| r.state.position()).collect();
    let errors: Vec<f64> = records
        .iter()
        .map(|r| {
            let d = reference(r.t, scenario);
            (d[0] - r.state.x).hypot(d[1] - r.state.y)
        })
        .collect();
    let flags = detect_deadlock(
        &times,
        &positions,
        &errors,
        DEADLOCK_WINDOW,
        DEADLOCK_RADIUS,
        DEADLOCK_MIN_ERROR,
    );
    for (r, f) in records.iter_mut().zip(flags) {
        r.deadlocked = f;
    }

    TrajectoryLog {
        variant: variant.name().to_string(),
        dt,
        records,
        status,
    }
}

struct StepOutput {
    nominal: ControlInput,
    input: ControlInput,
    h_true: f64,
    h_est: f64,
    h0_true: f64,
    gamma: RobustnessParams,
    feasible: bool,
    adapt_evals: usize,
}

fn vanilla_step(
    t: f64,
    state: &VehicleState,
    estimate: &VehicleState,
    field: &GridField,
    scenario: &Scenario,
) -> Result<StepOutput, FieldError> {
    let nominal = baseline_controller(t, estimate, scenario);
    let barrier = PlainBarrier { field };
    let eval = barrier.eval(t, estimate.to_array())?;
    let c = plain_constraint(&eval, scenario.alpha_slope);
    let r = solve_filter(nominal.to_array(), &c, &scenario.input_box);
    let h0_true = field.sample(state.position())?;
    Ok(StepOutput {
        nominal,
        input: ControlInput::from_array(r.u),
        h_true: h0_true,
        h_est: eval.h,
        h0_true,
        gamma: RobustnessParams::ZERO,
        feasible: r.feasible,
        adapt_evals: 0,
    })
}

#[allow(clippy::too_many_arguments)]
fn safe_step(
    t: f64,
    k: usize,
    state: &VehicleState,
    estimate: &VehicleState,
    field: &GridField,
    scenario: &Scenario,
    variant: ControllerVariant,
    adapt_cfg: &AdaptationConfig,
    every: usize,
    theta_s_prev: &mut f64,
    gamma_prev: &mut RobustnessParams,
) -> Result<StepOutput, FieldError> {
    let pipeline = SafePipeline::new(field, scenario, *theta_s_prev);
    let x_hat = estimate.to_array();
    let prepared = pipeline.prepare_state(t, x_hat)?;

    let mut adapt_evals = 0;
    let gamma = match variant.scheduled_gamma(prepared.eval.h) {
        Some(g) => g,
        None if k.is_multiple_of(every) => {
            let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
            rng.set_stream(1 + k as u64);
            let samples = sample_perturbations(x_hat, scenario.error_box, adapt_cfg.n_samples, &mut rng);
            match adapt_with(t, x_hat, &samples, &pipeline, adapt_cfg) {
                Ok(r) => {
                    adapt_evals = r.evaluations;
                    r.gamma
                }
                Err(_) => *gamma_prev,
            }
        }
        None => *gamma_prev,
    };
    *gamma_prev = gamma;
    *theta_s_prev = prepared.theta_s;

    let r = pipeline.filter(&prepared, gamma);
    let truth = ModifiedBarrier::new(field, scenario, prepared.theta_s);
    Ok(StepOutput {
        nominal: ControlInput::from_array(prepared.k_nom),
        input: ControlInput::from_array(r.u),
        h_true: truth.value(t, state.to_array())?,
        h_est: prepared.eval.h,
        h0_true: field.sample(state.position())?,
        gamma,
        feasible: r.feasible,
        adapt_evals,
    })
}
