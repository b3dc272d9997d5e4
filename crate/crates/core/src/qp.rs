//! Exact two-input R-CBF quadratic program.
//!
//! minimize `|u - k_nom|^2` subject to `row . u >= rhs` and the input box.
//! With two variables, one half-plane and four box faces the minimizer is
//! found in closed form: the box projection of `k_nom` if it satisfies the
//! barrier constraint, otherwise the point of the constraint line inside the
//! box that is closest to `k_nom`.

use crate::barrier::BarrierEval;
use crate::scenario::InputBox;

/// Robustness parameters of the barrier condition. Zero gives the plain
/// CBF condition.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RobustnessParams {
    pub gamma1: f64,
    pub gamma2: f64,
}

impl RobustnessParams {
    pub const ZERO: Self = Self {
        gamma1: 0.0,
        gamma2: 0.0,
    };

    pub fn new(gamma1: f64, gamma2: f64) -> Self {
        debug_assert!(gamma1 >= 0.0 && gamma2 >= 0.0);
        Self { gamma1, gamma2 }
    }

    /// Margin `gamma1 |L_g h| + gamma2^2 |L_g h|^2`.
    pub fn margin(&self, lg_norm: f64) -> f64 {
        self.gamma1 * lg_norm + self.gamma2 * self.gamma2 * lg_norm * lg_norm
    }
}

/// Half-plane `row . u >= rhs`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintRow {
    pub row: [f64; 2],
    pub rhs: f64,
}

impl ConstraintRow {
    pub fn slack(&self, u: [f64; 2]) -> f64 {
        self.row[0] * u[0] + self.row[1] * u[1] - self.rhs
    }

    pub fn row_norm(&self) -> f64 {
        self.row[0].hypot(self.row[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterResult {
    pub u: [f64; 2],
    /// Barrier constraint binds at the solution.
    pub active: bool,
    pub feasible: bool,
    /// `row . u - rhs`.
    pub constraint_residual: f64,
}

/// Constraint of the plain CBF condition
/// `L_f h + L_g h u + dh/dt + alpha h >= 0`.
pub fn plain_constraint(eval: &BarrierEval, alpha_slope: f64) -> ConstraintRow {
    ConstraintRow {
        row: eval.l_g(),
        rhs: -eval.l_f - eval.dh_dt - alpha_slope * eval.h,
    }
}

/// Robustified constraint: the plain right-hand side plus
/// `gamma1 |L_g h| + gamma2^2 |L_g h|^2`.
pub fn constraint_terms(eval: &BarrierEval, params: RobustnessParams, alpha_slope: f64) -> ConstraintRow {
    let mut c = plain_constraint(eval, alpha_slope);
    c.rhs += params.margin(c.row_norm());
    c
}

fn clip(u: [f64; 2], lo: [f64; 2], hi: [f64; 2]) -> [f64; 2] {
    [u[0].clamp(lo[0], hi[0]), u[1].clamp(lo[1], hi[1])]
}

/// Box point maximizing `row . u`; ties keep the clipped nominal coordinate.
fn best_effort(row: [f64; 2], k_nom: [f64; 2], lo: [f64; 2], hi: [f64; 2]) -> [f64; 2] {
    let mut u = clip(k_nom, lo, hi);
    for i in 0..2 {
        if row[i] > 0.0 {
            u[i] = hi[i];
        } else if row[i] < 0.0 {
            u[i] = lo[i];
        }
    }
    u
}

/// Exact minimizer of `|u - k_nom|^2` over `{u in box : row . u >= rhs}`.
///
/// When the feasible set is empty the result has `feasible = false` and `u`
/// maximizes `row . u` over the box.
pub fn solve_filter(k_nom: [f64; 2], c: &ConstraintRow, input_box: &InputBox) -> FilterResult {
    let (lo, hi) = (input_box.lower(), input_box.upper());
    let row = c.row;
    let finish = |u: [f64; 2], active: bool, feasible: bool| FilterResult {
        u,
        active,
        feasible,
        constraint_residual: c.slack(u),
    };

    let clipped = clip(k_nom, lo, hi);
    if c.slack(clipped) >= 0.0 {
        return finish(clipped, false, true);
    }

    let best = best_effort(row, k_nom, lo, hi);
    let best_slack = c.slack(best);
    if best_slack < 0.0 {
        return finish(best, false, false);
    }

    // The optimum lies on the line row . u = rhs. Parameterize it by the
    // orthogonal projection p of k_nom and the unit direction d along the line;
    // the cost grows with |s| so clamp s = 0 into the box interval.
    let n2 = row[0] * row[0] + row[1] * row[1];
    let shift = -c.slack(k_nom) / n2;
    let p = [k_nom[0] + shift * row[0], k_nom[1] + shift * row[1]];
    let n = n2.sqrt();
    let d = [-row[1] / n, row[0] / n];
    let (mut s_lo, mut s_hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for i in 0..2 {
        if d[i].abs() < 1e-14 {
            if p[i] < lo[i] - 1e-12 || p[i] > hi[i] + 1e-12 {
                s_lo = f64::INFINITY;
            }
            continue;
        }
        let (a, b) = ((lo[i] - p[i]) / d[i], (hi[i] - p[i]) / d[i]);
        s_lo = s_lo.max(a.min(b));
        s_hi = s_hi.min(a.max(b));
    }
    if s_lo > s_hi {
        // the line only grazes the box; the maximizing vertex is feasible
        return finish(best, true, true);
    }
    let s = 0.0f64.clamp(s_lo, s_hi);
    let u = clip([p[0] + s * d[0], p[1] + s * d[1]], lo, hi);
    if c.slack(u) < -1e-9 * (1.0 + c.rhs.abs()) {
        return finish(best, true, true);
    }
    finish(u, true, true)
}
