//! Declarative scenario description: world geometry, reference trajectory,
//! controller gains, measurement noise and solver knobs.
//!
//! Scenarios are stored as TOML. Every field maps 1:1 onto [`Scenario`];
//! unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("failed to read scenario file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to parse scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("failed to serialize scenario: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

/// Axis-aligned safe rectangle, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RectBounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl RectBounds {
    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }
}

/// Circular keep-out region. The radius is stored already inflated by half
/// the robot length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircleObstacle {
    pub center: [f64; 2],
    pub radius: f64,
}

/// Sinusoidal reference `x_d = v_ref t`, `y_d = a_d sin(c_d x_d + phi_d)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reference {
    pub v_ref: f64,
    pub a_d: f64,
    pub c_d: f64,
    pub phi_d: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gains {
    pub k_v: f64,
    pub k_omega: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputBox {
    pub v_min: f64,
    pub v_max: f64,
    pub omega_min: f64,
    pub omega_max: f64,
}

impl InputBox {
    pub fn lower(&self) -> [f64; 2] {
        [self.v_min, self.omega_min]
    }

    pub fn upper(&self) -> [f64; 2] {
        [self.v_max, self.omega_max]
    }

    pub fn contains(&self, u: [f64; 2]) -> bool {
        u[0] >= self.v_min && u[0] <= self.v_max && u[1] >= self.omega_min && u[1] <= self.omega_max
    }
}

/// Poisson field discretization and solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSettings {
    /// Grid spacing, meters.
    pub resolution: f64,
    /// Extra margin around the safe rectangle covered by the grid, meters.
    /// At least two cells are always added.
    pub padding: f64,
    pub interior_forcing: f64,
    pub exterior_forcing: f64,
    /// Max-norm tolerance on the discrete Laplacian residual.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for FieldSettings {
    fn default() -> Self {
        Self {
            resolution: 0.05,
            padding: 0.25,
            interior_forcing: -4.0,
            exterior_forcing: 4.0,
            tol: 1e-6,
            max_iters: 200_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridSpacing {
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    /// Evaluate the whole `n1 x n2` mesh.
    Full,
    /// Coarse mesh, then a refinement mesh around the incumbent.
    CoarseFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptationSettings {
    pub spacing: GridSpacing,
    pub search: SearchMode,
    /// Points per axis of the coarse mesh.
    pub coarse: usize,
    /// Points per axis of the refinement mesh.
    pub refine: usize,
    /// Re-run the parameter search every `every` control steps.
    pub every: usize,
}

impl Default for AdaptationSettings {
    fn default() -> Self {
        Self {
            spacing: GridSpacing::Log,
            search: SearchMode::CoarseFirst,
            coarse: 20,
            refine: 20,
            every: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// Fresh uniform draw from the error box every step.
    Iid,
    /// One draw held for the whole run.
    Frozen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    /// Control period, seconds.
    pub dt: f64,
    /// Simulated horizon, seconds.
    pub duration: f64,
    pub x0: [f64; 3],
    /// Slope of the linear class-K function `alpha(r) = alpha_slope * r`.
    pub alpha_slope: f64,
    /// Weight of the heading Lyapunov term in the modified barrier.
    pub mu: f64,
    /// Sontag parameter of the single-integrator heading filter.
    pub alpha_q: f64,
    pub n_samples: usize,
    pub gamma_bounds: [f64; 2],
    pub gamma_grid: [usize; 2],
    /// Per-axis half-widths of the measurement error box (m, m, rad).
    pub error_box: [f64; 3],
    pub tunable_etas: [f64; 2],
    /// Robustness parameters of the fixed-gamma variant and the base values
    /// of the tunable variant.
    pub fixed_gamma: [f64; 2],
    pub bounds: RectBounds,
    #[serde(default)]
    pub obstacles: Vec<CircleObstacle>,
    pub reference: Reference,
    pub gains: Gains,
    pub input_box: InputBox,
    #[serde(default)]
    pub field: FieldSettings,
    #[serde(default)]
    pub adaptation: AdaptationSettings,
    #[serde(default = "default_noise")]
    pub noise: NoiseMode,
}

fn default_noise() -> NoiseMode {
    NoiseMode::Iid
}

pub const PAPER_SCENARIO: &str = include_str!("../../../scenarios/paper.scenario");
pub const PAPER_NOMINAL_SCENARIO: &str = include_str!("../../../scenarios/paper_nominal.scenario");
pub const HARDWARE_SCENARIO: &str = include_str!("../../../scenarios/hardware.scenario");

impl Scenario {
    /// Simulation study with the bounded measurement error box.
    pub fn paper() -> Self {
        Self::from_toml_str(PAPER_SCENARIO).expect("bundled paper scenario is valid")
    }

    /// Simulation study without measurement error.
    pub fn paper_nominal() -> Self {
        Self::from_toml_str(PAPER_NOMINAL_SCENARIO).expect("bundled nominal scenario is valid")
    }

    /// Hardware preset: identical to the simulation study except `alpha = 1`.
    pub fn hardware() -> Self {
        Self::from_toml_str(HARDWARE_SCENARIO).expect("bundled hardware scenario is valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let scenario: Scenario = toml::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String, ScenarioError> {
        Ok(toml::to_string(self)?)
    }

    pub fn n_steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let fail = |msg: String| Err(ScenarioError::Invalid(msg));
        let b = &self.bounds;
        if !(b.x_min < b.x_max) || !(b.y_min < b.y_max) {
            return fail(format!("degenerate bounds {b:?}"));
        }
        for (i, o) in self.obstacles.iter().enumerate() {
            if !(o.radius > 0.0) || !o.center.iter().all(|c| c.is_finite()) {
                return fail(format!("obstacle {i} must have finite center and radius > 0"));
            }
        }
        if !(self.gains.k_v >= 0.0) || !(self.gains.k_omega >= 0.0) {
            return fail("gains must be non-negative".into());
        }
        if !(self.alpha_slope > 0.0) {
            return fail("alpha_slope must be > 0".into());
        }
        if !(self.mu > 0.0) {
            return fail("mu must be > 0".into());
        }
        if !(self.alpha_q > 0.0) {
            return fail("alpha_q must be > 0".into());
        }
        let [lo, hi] = self.gamma_bounds;
        if !(lo > 0.0) || !(hi > lo) {
            return fail(format!("gamma_bounds must satisfy 0 < lo < hi, got [{lo}, {hi}]"));
        }
        if self.gamma_grid[0] < 2 || self.gamma_grid[1] < 2 {
            return fail("gamma_grid counts must be >= 2".into());
        }
        if !(self.dt > 0.0) || !(self.duration > 0.0) {
            return fail("dt and duration must be > 0".into());
        }
        if self.n_samples < 1 {
            return fail("n_samples must be >= 1".into());
        }
        if self.error_box.iter().any(|w| !(*w >= 0.0)) {
            return fail("error_box half-widths must be >= 0".into());
        }
        if self.tunable_etas.iter().any(|e| !(*e > 0.0)) {
            return fail("tunable_etas must be > 0".into());
        }
        if self.fixed_gamma.iter().any(|g| !(*g >= 0.0)) {
            return fail("fixed_gamma entries must be >= 0".into());
        }
        let u = &self.input_box;
        if !(u.v_min <= u.v_max) || !(u.omega_min <= u.omega_max) {
            return fail("input box is empty".into());
        }
        let f = &self.field;
        if !(f.resolution > 0.0) || !(f.tol > 0.0) || !(f.padding >= 0.0) {
            return fail("field resolution and tol must be > 0".into());
        }
        if !(f.interior_forcing < 0.0) || !(f.exterior_forcing > 0.0) {
            return fail("forcing must be negative inside and positive outside".into());
        }
        let a = &self.adaptation;
        if a.coarse < 2 || a.refine < 2 || a.every < 1 {
            return fail("adaptation coarse/refine must be >= 2 and every >= 1".into());
        }
        if !self.x0.iter().all(|v| v.is_finite()) {
            return fail("x0 must be finite".into());
        }
        Ok(())
    }
}
