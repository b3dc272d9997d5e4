//! The closed-loop safe controller: safe nominal input followed by the
//! R-CBF-QP on the heading-augmented barrier, evaluated at a state estimate.

use crate::adapt::ClosedLoopController;
use crate::barrier::{Barrier, BarrierEval, ModifiedBarrier};
use crate::field::{FieldError, GridField};
use crate::qp::{plain_constraint, solve_filter, ConstraintRow, FilterResult, RobustnessParams};
use crate::scenario::Scenario;
use crate::vehicle::{safe_nominal, VehicleState};

/// Everything about one state that does not depend on the robustness
/// parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreparedState {
    pub k_nom: [f64; 2],
    pub theta_s: f64,
    pub eval: BarrierEval,
    /// Constraint with zero robustness margin.
    pub base: ConstraintRow,
}

impl PreparedState {
    pub fn constraint(&self, gamma: RobustnessParams) -> ConstraintRow {
        let mut c = self.base;
        c.rhs += gamma.margin(c.row_norm());
        c
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SafePipeline<'a> {
    pub field: &'a GridField,
    pub scenario: &'a Scenario,
    /// Heading used where the safe velocity vanishes.
    pub fallback_heading: f64,
}

impl<'a> SafePipeline<'a> {
    pub fn new(field: &'a GridField, scenario: &'a Scenario, fallback_heading: f64) -> Self {
        Self {
            field,
            scenario,
            fallback_heading,
        }
    }

    pub fn prepare_state(&self, t: f64, state: [f64; 3]) -> Result<PreparedState, FieldError> {
        let est = VehicleState::from_array(state);
        let (u, _, theta_s) = safe_nominal(t, &est, self.field, self.scenario, self.fallback_heading)?;
        let barrier = ModifiedBarrier::new(self.field, self.scenario, self.fallback_heading);
        let eval = barrier.eval(t, state)?;
        Ok(PreparedState {
            k_nom: u.to_array(),
            theta_s,
            eval,
            base: plain_constraint(&eval, self.scenario.alpha_slope),
        })
    }

    pub fn filter(&self, prepared: &PreparedState, gamma: RobustnessParams) -> FilterResult {
        solve_filter(prepared.k_nom, &prepared.constraint(gamma), &self.scenario.input_box)
    }
}

impl ClosedLoopController for SafePipeline<'_> {
    type Prepared = PreparedState;

    fn prepare(&self, t: f64, state: [f64; 3]) -> Option<PreparedState> {
        self.prepare_state(t, state).ok()
    }

    fn control(&self, prepared: &PreparedState, gamma: RobustnessParams) -> [f64; 2] {
        self.filter(prepared, gamma).u
    }

    fn admissible(&self, prepared: &PreparedState, gamma: RobustnessParams) -> bool {
        self.filter(prepared, gamma).feasible
    }
}
