//! Performance metrics of trajectory logs and the comparison table.

use std::io::Read;
use std::path::Path;

use thiserror::Error;

use crate::heading::wrap_angle;
use crate::sim::TrajectoryLog;
use crate::scenario::Scenario;
use crate::vehicle::reference;

pub const DEFAULT_EPS_X: f64 = 0.10;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("optimal trajectory covers [{start}, {end}] but the log spans [{log_start}, {log_end}]")]
    Coverage {
        start: f64,
        end: f64,
        log_start: f64,
        log_end: f64,
    },
    #[error("optimal trajectory times must be strictly increasing")]
    NonMonotoneTime,
    #[error("optimal trajectory file: {0}")]
    Format(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Externally computed optimal trajectory, columns `t,x,y,theta,v,omega`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OptimalTrajectory {
    pub t: Vec<f64>,
    pub state: Vec<[f64; 3]>,
    pub input: Vec<[f64; 2]>,
}

#[derive(Debug, serde::Deserialize)]
struct OptimalRow {
    t: f64,
    x: f64,
    y: f64,
    theta: f64,
    v: f64,
    omega: f64,
}

impl OptimalTrajectory {
    pub fn read(r: impl Read) -> Result<Self, MetricsError> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut out = Self::default();
        for row in rdr.deserialize() {
            let row: OptimalRow = row?;
            out.t.push(row.t);
            out.state.push([row.x, row.y, row.theta]);
            out.input.push([row.v, row.omega]);
        }
        if out.t.is_empty() {
            return Err(MetricsError::Format("no rows".into()));
        }
        if out.t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(MetricsError::NonMonotoneTime);
        }
        Ok(out)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, crate::Error> {
        let file = std::fs::File::open(path)?;
        Ok(Self::read(std::io::BufReader::new(file))?)
    }

    /// Linear interpolation at `t`; the heading is interpolated along the
    /// shorter arc. `t` must lie within the time grid.
    pub fn at(&self, t: f64) -> ([f64; 3], [f64; 2]) {
        let n = self.t.len();
        if n == 1 {
            return (self.state[0], self.input[0]);
        }
        let k = match self.t.partition_point(|s| *s <= t) {
            0 => 0,
            p => (p - 1).min(n - 2),
        };
        let tau = ((t - self.t[k]) / (self.t[k + 1] - self.t[k])).clamp(0.0, 1.0);
        let (a, b) = (self.state[k], self.state[k + 1]);
        let state = [
            a[0] + tau * (b[0] - a[0]),
            a[1] + tau * (b[1] - a[1]),
            wrap_angle(a[2] + tau * wrap_angle(b[2] - a[2])),
        ];
        let (ua, ub) = (self.input[k], self.input[k + 1]);
        let input = [ua[0] + tau * (ub[0] - ua[0]), ua[1] + tau * (ub[1] - ua[1])];
        (state, input)
    }
}

fn tracking_errors<'a>(log: &'a TrajectoryLog, scenario: &'a Scenario) -> impl Iterator<Item = f64> + 'a {
    log.records.iter().map(move |r| {
        let d = reference(r.t, scenario);
        (r.state.x - d[0]).hypot(r.state.y - d[1])
    })
}

/// Time spent with true positional tracking error at or above `eps_x`.
pub fn j_t(log: &TrajectoryLog, scenario: &Scenario, eps_x: f64) -> f64 {
    log.dt * tracking_errors(log, scenario).filter(|e| *e >= eps_x).count() as f64
}

/// `dt * sum |r_e|` over the log.
pub fn tracking_error_integral(log: &TrajectoryLog, scenario: &Scenario) -> f64 {
    log.dt * tracking_errors(log, scenario).sum::<f64>()
}

/// `dt * sum (x - x*)' Q (x - x*) + (u - u*)' R (u - u*)` over the log steps,
/// with the optimum interpolated at each step time.
pub fn j_opt(
    log: &TrajectoryLog,
    optimal: &OptimalTrajectory,
    q: [[f64; 3]; 3],
    r: [[f64; 2]; 2],
) -> Result<f64, MetricsError> {
    let (Some(first), Some(last)) = (log.records.first(), log.records.last()) else {
        return Ok(0.0);
    };
    let (start, end) = (optimal.t[0], *optimal.t.last().expect("nonempty"));
    let slack = 1e-9 * (1.0 + end.abs());
    if first.t < start - slack || last.t > end + slack {
        return Err(MetricsError::Coverage {
            start,
            end,
            log_start: first.t,
            log_end: last.t,
        });
    }
    let mut total = 0.0;
    for rec in &log.records {
        let (xs, us) = optimal.at(rec.t);
        let dx = [rec.state.x - xs[0], rec.state.y - xs[1], wrap_angle(rec.state.theta - xs[2])];
        let du = [rec.input.v - us[0], rec.input.omega - us[1]];
        for i in 0..3 {
            for j in 0..3 {
                total += dx[i] * q[i][j] * dx[j];
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                total += du[i] * r[i][j] * du[j];
            }
        }
    }
    Ok(log.dt * total)
}

pub const IDENTITY_Q: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
pub const IDENTITY_R: [[f64; 2]; 2] = [[1.0, 0.0], [0.0, 1.0]];

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub method: String,
    pub j_t: f64,
    pub j_opt: Option<f64>,
    pub tracking_error: f64,
    pub min_h: f64,
    pub min_h0: f64,
    pub deadlocked: bool,
    pub mean_step_wallclock: f64,
    pub status: String,
}

impl MetricsReport {
    pub fn from_log(
        log: &TrajectoryLog,
        scenario: &Scenario,
        eps_x: f64,
        optimal: Option<&OptimalTrajectory>,
    ) -> Result<Self, MetricsError> {
        Ok(Self {
            method: log.variant.clone(),
            j_t: j_t(log, scenario, eps_x),
            j_opt: optimal
                .map(|o| j_opt(log, o, IDENTITY_Q, IDENTITY_R))
                .transpose()?,
            tracking_error: tracking_error_integral(log, scenario),
            min_h: log.min_h_true(),
            min_h0: log.min_h0_true(),
            deadlocked: log.deadlocked(),
            mean_step_wallclock: log.mean_wall_clock_us(),
            status: log.status.label().to_string(),
        })
    }
}

pub const TABLE_HEADER: &str = "method,J_opt,J_t,tracking_error,min_h,min_h0,deadlocked,status";

/// Rows sorted by `J_t` ascending (ties by method name); missing `J_opt` is
/// written as `--`. Timing is left out so the table is reproducible.
pub fn compare(reports: &[MetricsReport]) -> String {
    let mut sorted: Vec<&MetricsReport> = reports.iter().collect();
    sorted.sort_by(|a, b| a.j_t.total_cmp(&b.j_t).then_with(|| a.method.cmp(&b.method)));
    let mut out = String::from(TABLE_HEADER);
    out.push('\n');
    for r in sorted {
        let j_opt = r.j_opt.map_or_else(|| "--".to_string(), |v| format!("{v:.6}"));
        out.push_str(&format!(
            "{},{},{:.2},{:.6},{:.6},{:.6},{},{}\n",
            r.method, j_opt, r.j_t, r.tracking_error, r.min_h, r.min_h0, r.deadlocked, r.status
        ));
    }
    out
}
