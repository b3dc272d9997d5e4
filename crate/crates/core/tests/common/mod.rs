#![allow(clippy::needless_range_loop)]

#![allow(dead_code)]

use rand::Rng;

use rcbf::barrier::{Barrier, ModifiedBarrier};
use rcbf::field::GridField;
use rcbf::qp::ConstraintRow;
use rcbf::scenario::{InputBox, Scenario};

pub fn input_box(r: f64) -> InputBox {
    InputBox {
        v_min: -r,
        v_max: r,
        omega_min: -r,
        omega_max: r,
    }
}

pub fn cost(u: [f64; 2], k: [f64; 2]) -> f64 {
    (u[0] - k[0]).powi(2) + (u[1] - k[1]).powi(2)
}

/// Best objective over a `(n+1) x (n+1)` grid of box points satisfying the
/// constraint, and the distance from `u` to the nearest such point.
pub struct GridOracle {
    pub best: Option<f64>,
    pub nearest: f64,
}

pub fn grid_oracle(k: [f64; 2], c: &ConstraintRow, b: &InputBox, n: usize, u: [f64; 2]) -> GridOracle {
    let (lo, hi) = (b.lower(), b.upper());
    let mut best: Option<f64> = None;
    let mut nearest = f64::INFINITY;
    for i in 0..=n {
        let v = lo[0] + (hi[0] - lo[0]) * i as f64 / n as f64;
        for j in 0..=n {
            let w = lo[1] + (hi[1] - lo[1]) * j as f64 / n as f64;
            if c.row[0] * v + c.row[1] * w < c.rhs {
                continue;
            }
            let f = cost([v, w], k);
            best = Some(best.map_or(f, |b: f64| b.min(f)));
            nearest = nearest.min((v - u[0]).hypot(w - u[1]));
        }
    }
    GridOracle { best, nearest }
}

/// Smallest violation of the KKT conditions of
/// `min |u - k|^2  s.t.  row . u >= rhs, lo <= u <= hi` at `u`, over
/// multipliers `lambda >= 0` of the barrier constraint. Box multipliers are
/// eliminated: a coordinate at a bound only needs the right sign.
pub fn kkt_residual(k: [f64; 2], c: &ConstraintRow, b: &InputBox, u: [f64; 2]) -> f64 {
    let (lo, hi) = (b.lower(), b.upper());
    let r = [u[0] - k[0], u[1] - k[1]];
    let scale = 1.0 + c.rhs.abs() + c.row[0].abs() + c.row[1].abs();
    let slack = c.slack(u);
    let active = slack.abs() <= 1e-10 * scale;
    let violation = |lambda: f64| -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..2 {
            let g = r[i] - lambda * c.row[i];
            let at_lo = (u[i] - lo[i]).abs() <= 1e-12;
            let at_hi = (u[i] - hi[i]).abs() <= 1e-12;
            worst = worst.max(if at_lo && at_hi {
                0.0
            } else if at_lo {
                (-g).max(0.0)
            } else if at_hi {
                g.max(0.0)
            } else {
                g.abs()
            });
        }
        worst
    };
    if !active {
        return violation(0.0).max((-slack).max(0.0));
    }
    let mut candidates = vec![0.0];
    for i in 0..2 {
        if c.row[i] != 0.0 {
            candidates.push((r[i] / c.row[i]).max(0.0));
        }
    }
    candidates.into_iter().map(violation).fold(f64::INFINITY, f64::min)
}

/// `a + b x + c y + d x y` sampled on a grid; its bilinear interpolant and
/// central differences are exact.
pub fn bilinear_field(coeffs: [f64; 4], spacing: f64, origin: [f64; 2], n: [usize; 2]) -> GridField {
    let [a, b, c, d] = coeffs;
    GridField::from_fn(origin, spacing, n[0], n[1], move |x, y| a + b * x + c * y + d * x * y)
}

/// Chain-rule errors `|dh/dt predicted - finite difference|` for steps
/// `eps` and `eps / 2` at `(t, state)` under input `u`.
pub fn chain_rule_errors(
    barrier: &ModifiedBarrier,
    t: f64,
    state: [f64; 3],
    u: [f64; 2],
    eps: f64,
) -> (f64, f64) {
    let e = barrier.eval(t, state).unwrap();
    let predicted = e.h_dot(u);
    let h0 = e.h;
    let err = |eps: f64| {
        let next = [
            state[0] + eps * u[0] * state[2].cos(),
            state[1] + eps * u[0] * state[2].sin(),
            state[2] + eps * u[1],
        ];
        let fd = (barrier.value(t + eps, next).unwrap() - h0) / eps;
        (fd - predicted).abs()
    };
    (err(eps), err(eps / 2.0))
}

pub fn random_state(rng: &mut impl Rng, s: &Scenario, field: &GridField, margin: f64) -> [f64; 3] {
    loop {
        let b = &s.bounds;
        let p = [rng.gen_range(b.x_min..b.x_max), rng.gen_range(b.y_min..b.y_max)];
        if field.contains(p, margin) {
            return [p[0], p[1], rng.gen_range(-3.1..3.1)];
        }
    }
}
