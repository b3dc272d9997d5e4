//! Online selection of the robustness parameters.
//!
//! Perturbed copies of the state estimate are drawn from the error box, the
//! closed-loop input variation `sigma_hat` is measured for each candidate
//! `(gamma1, gamma2)` and the set-inflation measure
//! `max(sigma_hat - gamma1, 0) / (2 gamma2)` is minimized by grid search.

use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::field::GridField;
use crate::pipeline::SafePipeline;
use crate::qp::RobustnessParams;
use crate::scenario::{GridSpacing, Scenario, SearchMode};

#[derive(Debug, Error, PartialEq)]
pub enum AdaptError {
    #[error("degenerate denominator: gamma2 = {0}")]
    DegenerateDenominator(f64),
    #[error("state estimate ({0}, {1}) is outside the field")]
    OutOfField(f64, f64),
}

/// A feedback law whose output depends on the robustness parameters only
/// through a cheap final stage. `prepare` does the parameter-independent
/// work once per state; `control` finishes it for one candidate.
pub trait ClosedLoopController: Sync {
    type Prepared: Send + Sync;

    /// `None` when the controller is undefined at `state` (e.g. off the map).
    fn prepare(&self, t: f64, state: [f64; 3]) -> Option<Self::Prepared>;

    fn control(&self, prepared: &Self::Prepared, gamma: RobustnessParams) -> [f64; 2];

    /// Whether the controller with these parameters is well defined at the
    /// prepared state (e.g. its QP is feasible). Inadmissible candidates are
    /// only selected when no admissible one exists.
    fn admissible(&self, _prepared: &Self::Prepared, _gamma: RobustnessParams) -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptationConfig {
    pub n_samples: usize,
    pub gamma_lo: f64,
    pub gamma_hi: f64,
    pub n1: usize,
    pub n2: usize,
    pub spacing: GridSpacing,
    pub search: SearchMode,
    pub coarse: usize,
    pub refine: usize,
    pub seed: u64,
}

impl AdaptationConfig {
    pub fn from_scenario(scenario: &Scenario) -> Self {
        Self {
            n_samples: scenario.n_samples,
            gamma_lo: scenario.gamma_bounds[0],
            gamma_hi: scenario.gamma_bounds[1],
            n1: scenario.gamma_grid[0],
            n2: scenario.gamma_grid[1],
            spacing: scenario.adaptation.spacing,
            search: scenario.adaptation.search,
            coarse: scenario.adaptation.coarse,
            refine: scenario.adaptation.refine,
            seed: scenario.seed,
        }
    }

    /// Full linear mesh exactly as in the original protocol.
    pub fn paper_exact(mut self) -> Self {
        self.spacing = GridSpacing::Linear;
        self.search = SearchMode::Full;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptationResult {
    pub gamma: RobustnessParams,
    pub sigma_hat_at_opt: f64,
    pub objective: f64,
    /// Number of distinct parameter candidates evaluated.
    pub evaluations: usize,
    /// Perturbed states at which the controller was undefined.
    pub skipped_samples: usize,
    /// False when no candidate was admissible at the estimate.
    pub admissible: bool,
}

/// One row of the objective landscape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandscapePoint {
    pub gamma: RobustnessParams,
    pub sigma_hat: f64,
    pub objective: f64,
    pub admissible: bool,
}

/// `n` points from `lo` to `hi` inclusive.
pub fn mesh_axis(lo: f64, hi: f64, n: usize, spacing: GridSpacing) -> Vec<f64> {
    assert!(n >= 2 && lo > 0.0 && hi >= lo);
    let last = (n - 1) as f64;
    let mut axis: Vec<f64> = (0..n)
        .map(|k| {
            let f = k as f64 / last;
            match spacing {
                GridSpacing::Linear => lo + f * (hi - lo),
                GridSpacing::Log => lo * (hi / lo).powf(f),
            }
        })
        .collect();
    axis[0] = lo;
    axis[n - 1] = hi;
    axis
}

/// `n` perturbed copies `x_hat + e_i`, `e_i` uniform in the error box.
/// Axes with zero half-width are left untouched.
pub fn sample_perturbations(
    x_hat: [f64; 3],
    error_box: [f64; 3],
    n: usize,
    rng: &mut impl Rng,
) -> Vec<[f64; 3]> {
    (0..n)
        .map(|_| {
            let mut x = x_hat;
            for k in 0..3 {
                let u: f64 = rng.gen_range(-1.0..=1.0);
                x[k] += error_box[k] * u;
            }
            x
        })
        .collect()
}

/// Set-inflation measure `max(sigma_hat - gamma1, 0) / (2 gamma2)`.
pub fn inflation_objective(sigma_hat: f64, gamma: RobustnessParams) -> Result<f64, AdaptError> {
    if !(gamma.gamma2 > 0.0) {
        return Err(AdaptError::DegenerateDenominator(gamma.gamma2));
    }
    Ok((sigma_hat - gamma.gamma1).max(0.0) / (2.0 * gamma.gamma2))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaEstimate {
    pub value: f64,
    pub skipped: usize,
}

/// Largest input deviation `|k(t, x_i) - k(t, x_hat)|` over the samples.
/// Samples where the controller is undefined are skipped and counted.
pub fn sigma_hat<C: ClosedLoopController>(
    t: f64,
    x_hat: [f64; 3],
    samples: &[[f64; 3]],
    gamma: RobustnessParams,
    controller: &C,
) -> Result<SigmaEstimate, AdaptError> {
    let center = controller
        .prepare(t, x_hat)
        .ok_or(AdaptError::OutOfField(x_hat[0], x_hat[1]))?;
    let prepared: Vec<Option<C::Prepared>> =
        samples.iter().map(|s| controller.prepare(t, *s)).collect();
    Ok(sigma_from_prepared(controller, &center, &prepared, gamma))
}

fn sigma_from_prepared<C: ClosedLoopController>(
    controller: &C,
    center: &C::Prepared,
    samples: &[Option<C::Prepared>],
    gamma: RobustnessParams,
) -> SigmaEstimate {
    let k0 = controller.control(center, gamma);
    let mut value: f64 = 0.0;
    let mut skipped = 0;
    for s in samples {
        match s {
            Some(p) => {
                let k = controller.control(p, gamma);
                value = value.max((k[0] - k0[0]).hypot(k[1] - k0[1]));
            }
            None => skipped += 1,
        }
    }
    SigmaEstimate { value, skipped }
}

/// Evaluates candidates with memoization on the exact parameter values.
struct Evaluator<'a, C: ClosedLoopController> {
    controller: &'a C,
    center: C::Prepared,
    samples: Vec<Option<C::Prepared>>,
    memo: HashMap<(u64, u64), LandscapePoint>,
}

impl<'a, C: ClosedLoopController> Evaluator<'a, C> {
    fn evaluate(&mut self, candidates: &[RobustnessParams]) -> Vec<LandscapePoint> {
        let missing: Vec<RobustnessParams> = candidates
            .iter()
            .filter(|g| !self.memo.contains_key(&key(g)))
            .copied()
            .collect();
        let fresh: Vec<LandscapePoint> = missing
            .par_iter()
            .map(|g| {
                let sigma =
                    sigma_from_prepared(self.controller, &self.center, &self.samples, *g).value;
                LandscapePoint {
                    gamma: *g,
                    sigma_hat: sigma,
                    objective: inflation_objective(sigma, *g).expect("mesh has gamma2 > 0"),
                    admissible: self.controller.admissible(&self.center, *g),
                }
            })
            .collect();
        for p in fresh {
            self.memo.insert(key(&p.gamma), p);
        }
        candidates.iter().map(|g| self.memo[&key(g)]).collect()
    }
}

fn key(g: &RobustnessParams) -> (u64, u64) {
    (g.gamma1.to_bits(), g.gamma2.to_bits())
}

/// Strict improvement in `(inadmissible, objective, gamma1, gamma2)` order;
/// this is the tie-break towards small parameters and makes the reduction
/// independent of evaluation order.
fn better(a: &LandscapePoint, b: &LandscapePoint) -> bool {
    let k = |p: &LandscapePoint| (!p.admissible, p.objective, p.gamma.gamma1, p.gamma.gamma2);
    k(a) < k(b)
}

fn argmin(points: &[LandscapePoint]) -> LandscapePoint {
    let mut best = points[0];
    for p in &points[1..] {
        if better(p, &best) {
            best = *p;
        }
    }
    best
}

fn mesh(a1: &[f64], a2: &[f64]) -> Vec<RobustnessParams> {
    a1.iter()
        .flat_map(|g1| a2.iter().map(move |g2| RobustnessParams::new(*g1, *g2)))
        .collect()
}

/// Grid search of the inflation objective given perturbed samples of the
/// estimate. The controller is prepared once per sample.
pub fn adapt_with<C: ClosedLoopController>(
    t: f64,
    x_hat: [f64; 3],
    samples: &[[f64; 3]],
    controller: &C,
    config: &AdaptationConfig,
) -> Result<AdaptationResult, AdaptError> {
    let center = controller
        .prepare(t, x_hat)
        .ok_or(AdaptError::OutOfField(x_hat[0], x_hat[1]))?;
    let prepared: Vec<Option<C::Prepared>> =
        samples.par_iter().map(|s| controller.prepare(t, *s)).collect();
    let skipped_samples = prepared.iter().filter(|p| p.is_none()).count();
    let mut ev = Evaluator {
        controller,
        center,
        samples: prepared,
        memo: HashMap::new(),
    };

    let (lo, hi) = (config.gamma_lo, config.gamma_hi);
    let best = match config.search {
        SearchMode::Full => {
            let a1 = mesh_axis(lo, hi, config.n1, config.spacing);
            let a2 = mesh_axis(lo, hi, config.n2, config.spacing);
            argmin(&ev.evaluate(&mesh(&a1, &a2)))
        }
        SearchMode::CoarseFirst => {
            let axis = mesh_axis(lo, hi, config.coarse, config.spacing);
            let coarse_best = argmin(&ev.evaluate(&mesh(&axis, &axis)));
            let bracket = |g: f64| {
                let i = axis.iter().position(|a| *a == g).expect("incumbent on coarse axis");
                (axis[i.saturating_sub(1)], axis[(i + 1).min(axis.len() - 1)])
            };
            let (l1, h1) = bracket(coarse_best.gamma.gamma1);
            let (l2, h2) = bracket(coarse_best.gamma.gamma2);
            let r1 = mesh_axis(l1, h1, config.refine, config.spacing);
            let r2 = mesh_axis(l2, h2, config.refine, config.spacing);
            let refined = argmin(&ev.evaluate(&mesh(&r1, &r2)));
            if better(&refined, &coarse_best) {
                refined
            } else {
                coarse_best
            }
        }
    };
    Ok(AdaptationResult {
        gamma: best.gamma,
        sigma_hat_at_opt: best.sigma_hat,
        objective: best.objective,
        admissible: best.admissible,
        evaluations: ev.memo.len(),
        skipped_samples,
    })
}

/// Objective value at every point of the configured full mesh.
pub fn objective_landscape<C: ClosedLoopController>(
    t: f64,
    x_hat: [f64; 3],
    samples: &[[f64; 3]],
    controller: &C,
    config: &AdaptationConfig,
) -> Result<Vec<LandscapePoint>, AdaptError> {
    let center = controller
        .prepare(t, x_hat)
        .ok_or(AdaptError::OutOfField(x_hat[0], x_hat[1]))?;
    let prepared: Vec<Option<C::Prepared>> =
        samples.par_iter().map(|s| controller.prepare(t, *s)).collect();
    let mut ev = Evaluator {
        controller,
        center,
        samples: prepared,
        memo: HashMap::new(),
    };
    let a1 = mesh_axis(config.gamma_lo, config.gamma_hi, config.n1, config.spacing);
    let a2 = mesh_axis(config.gamma_lo, config.gamma_hi, config.n2, config.spacing);
    Ok(ev.evaluate(&mesh(&a1, &a2)))
}

/// Adapts the parameters for the safe pipeline (safe nominal input followed
/// by the R-CBF-QP) at the estimate `x_hat`, drawing samples from the
/// scenario error box with the scenario seed.
pub fn adapt_gamma(
    t: f64,
    x_hat: [f64; 3],
    scenario: &Scenario,
    field: &GridField,
) -> Result<AdaptationResult, AdaptError> {
    use rand::SeedableRng;
    let config = AdaptationConfig::from_scenario(scenario);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.seed);
    let samples = sample_perturbations(x_hat, scenario.error_box, config.n_samples, &mut rng);
    let pipeline = SafePipeline::new(field, scenario, x_hat[2]);
    adapt_with(t, x_hat, &samples, &pipeline, &config)
}
