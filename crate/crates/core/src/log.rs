//! CSV form of [`TrajectoryLog`]. Floats are written with 17 significant
//! digits so a log read back is bitwise identical to the one written.

use std::io::{Read, Write};
use std::path::Path;

use crate::qp::RobustnessParams;
use crate::sim::{RunStatus, StepRecord, TrajectoryLog};
use crate::vehicle::{ControlInput, VehicleState};

pub const COLUMNS: [&str; 20] = [
    "t",
    "x",
    "y",
    "theta",
    "x_hat",
    "y_hat",
    "theta_hat",
    "v_nom",
    "omega_nom",
    "v",
    "omega",
    "h_true",
    "h_est",
    "h0_true",
    "gamma1",
    "gamma2",
    "feasible",
    "adapt_evals",
    "wall_clock_us",
    "deadlocked",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Timing {
    /// Write measured per-step wall-clock times.
    Measured,
    /// Write zeros so that repeated runs produce identical files.
    Omitted,
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_log(log: &TrajectoryLog, w: impl Write, timing: Timing) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(COLUMNS)?;
    for r in &log.records {
        let wall = match timing {
            Timing::Measured => r.wall_clock_us,
            Timing::Omitted => 0.0,
        };
        let floats = [
            r.t,
            r.state.x,
            r.state.y,
            r.state.theta,
            r.estimate.x,
            r.estimate.y,
            r.estimate.theta,
            r.nominal.v,
            r.nominal.omega,
            r.input.v,
            r.input.omega,
            r.h_true,
            r.h_est,
            r.h0_true,
            r.gamma.gamma1,
            r.gamma.gamma2,
        ];
        let mut row: Vec<String> = floats.iter().map(|v| fmt_f64(*v)).collect();
        row.push(u8::from(r.feasible).to_string());
        row.push(r.adapt_evals.to_string());
        row.push(fmt_f64(wall));
        row.push(u8::from(r.deadlocked).to_string());
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_log(log: &TrajectoryLog, path: impl AsRef<Path>, timing: Timing) -> Result<(), crate::Error> {
    let file = std::fs::File::create(path)?;
    write_log(log, std::io::BufWriter::new(file), timing)?;
    Ok(())
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("log header does not match the expected columns")]
    Header,
    #[error("row {row}: bad value `{value}` in column {column}")]
    Value {
        row: usize,
        column: &'static str,
        value: String,
    },
    #[error("log has no rows")]
    Empty,
}

/// Reads a log written by [`write_log`]. The variant name is left empty and
/// the status is [`RunStatus::Completed`].
pub fn read_log(r: impl Read) -> Result<TrajectoryLog, LogError> {
    let mut rdr = csv::Reader::from_reader(r);
    if rdr.headers()?.iter().ne(COLUMNS.iter().copied()) {
        return Err(LogError::Header);
    }
    let mut records = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let f = |i: usize| -> Result<f64, LogError> {
            rec[i].parse::<f64>().map_err(|_| LogError::Value {
                row,
                column: COLUMNS[i],
                value: rec[i].to_string(),
            })
        };
        let int = |i: usize| -> Result<usize, LogError> {
            rec[i].parse::<usize>().map_err(|_| LogError::Value {
                row,
                column: COLUMNS[i],
                value: rec[i].to_string(),
            })
        };
        records.push(StepRecord {
            t: f(0)?,
            state: VehicleState {
                x: f(1)?,
                y: f(2)?,
                theta: f(3)?,
            },
            estimate: VehicleState {
                x: f(4)?,
                y: f(5)?,
                theta: f(6)?,
            },
            nominal: ControlInput::new(f(7)?, f(8)?),
            input: ControlInput::new(f(9)?, f(10)?),
            h_true: f(11)?,
            h_est: f(12)?,
            h0_true: f(13)?,
            gamma: RobustnessParams {
                gamma1: f(14)?,
                gamma2: f(15)?,
            },
            feasible: int(16)? != 0,
            adapt_evals: int(17)?,
            wall_clock_us: f(18)?,
            deadlocked: int(19)? != 0,
        });
    }
    let dt = match records.as_slice() {
        [] => return Err(LogError::Empty),
        [_] => 0.0,
        [a, b, ..] => b.t - a.t,
    };
    Ok(TrajectoryLog {
        variant: String::new(),
        dt,
        records,
        status: RunStatus::Completed,
    })
}

pub fn load_log(path: impl AsRef<Path>) -> Result<TrajectoryLog, crate::Error> {
    let file = std::fs::File::open(path)?;
    Ok(read_log(std::io::BufReader::new(file))?)
}
