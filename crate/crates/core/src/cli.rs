//! Command-line interface.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::adapt::{adapt_with, objective_landscape, sample_perturbations, AdaptationConfig};
use crate::field::{build_field, GridField};
use crate::log::{fmt_f64, load_log, save_log, Timing};
use crate::metrics::{compare, MetricsReport, OptimalTrajectory, DEFAULT_EPS_X};
use crate::pipeline::SafePipeline;
use crate::scenario::Scenario;
use crate::sim::{run_simulation, ControllerVariant, TrajectoryLog};
use crate::Error;

/// Environment variable that sets the number of worker threads.
pub const WORKERS_ENV: &str = "RCBF_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "rcbf", version, about = "Robust CBF safety filtering experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the Poisson safety field and write it as a .psf file.
    SolveField {
        /// Scenario file or preset name (paper, paper_nominal, hardware).
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        out: PathBuf,
        /// Grid resolution in meters; defaults to the scenario value.
        #[arg(long)]
        resolution: Option<f64>,
    },
    /// Simulate one controller and write its trajectory log.
    Run {
        #[arg(long)]
        scenario: String,
        /// vanilla_h0, nonrobust, fixed_gamma, tunable or adaptive.
        #[arg(long)]
        variant: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Precomputed field; solved from the scenario when absent.
        #[arg(long)]
        field: Option<PathBuf>,
        /// Full linear 400x400 mesh for the adaptive variant.
        #[arg(long)]
        paper_exact: bool,
        /// Write zeros in the wall-clock column.
        #[arg(long)]
        no_timing: bool,
    },
    /// Simulate all five controllers and tabulate their metrics.
    Compare {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "compare_out")]
        out_dir: PathBuf,
        #[arg(long)]
        field: Option<PathBuf>,
        /// Optimal trajectory CSV used for J_opt.
        #[arg(long)]
        optimal: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_EPS_X)]
        eps_x: f64,
        /// Also write measured step times to timing.csv.
        #[arg(long)]
        timing: bool,
    },
    /// Print the robustness-parameter objective landscape at one state.
    AdaptDemo {
        #[arg(long)]
        scenario: String,
        /// Estimated state as x,y,theta.
        #[arg(long, value_parser = parse_state, allow_hyphen_values = true)]
        state: [f64; 3],
        #[arg(long, default_value_t = 0.0)]
        t: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        field: Option<PathBuf>,
        /// Linear spacing instead of logarithmic.
        #[arg(long)]
        paper_exact: bool,
        /// Write the landscape here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute metrics of a trajectory log.
    Metrics {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        optimal: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_EPS_X)]
        eps_x: f64,
        /// Scenario the log was produced with; defaults to the paper preset.
        #[arg(long, default_value = "paper")]
        scenario: String,
    },
}

fn parse_state(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected x,y,theta, got `{s}`"));
    }
    let mut out = [0.0; 3];
    for (o, p) in out.iter_mut().zip(&parts) {
        *o = p.parse().map_err(|_| format!("not a number: `{p}`"))?;
    }
    Ok(out)
}

/// Loads a scenario file, or a bundled preset when `arg` names one and is
/// not an existing path.
pub fn resolve_scenario(arg: &str) -> Result<Scenario, Error> {
    let path = Path::new(arg);
    if !path.exists() {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or(arg);
        match stem {
            "paper" => return Ok(Scenario::paper()),
            "paper_nominal" => return Ok(Scenario::paper_nominal()),
            "hardware" => return Ok(Scenario::hardware()),
            _ => {}
        }
    }
    Ok(Scenario::load(path)?)
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'a str,
    version: &'a str,
    command: &'a str,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    variant: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    paper_exact: Option<bool>,
    scenario: &'a Scenario,
}

fn write_manifest(
    path: &Path,
    command: &str,
    scenario: &Scenario,
    variant: Option<&str>,
    paper_exact: Option<bool>,
) -> Result<(), Error> {
    let m = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        seed: scenario.seed,
        variant,
        paper_exact,
        scenario,
    };
    let text = toml::to_string(&m).map_err(crate::scenario::ScenarioError::from)?;
    std::fs::write(path, text)?;
    Ok(())
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.toml");
    out.with_file_name(name)
}

fn obtain_field(scenario: &Scenario, path: Option<&Path>) -> Result<GridField, Error> {
    match path {
        Some(p) => Ok(GridField::load(p)?),
        None => Ok(build_field(scenario)?.0),
    }
}

fn make_paper_exact(scenario: &mut Scenario) {
    let config = AdaptationConfig::from_scenario(scenario).paper_exact();
    scenario.adaptation.spacing = config.spacing;
    scenario.adaptation.search = config.search;
}

/// Exit code for an error: 2 for numerical failures, 1 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::World(_) | Error::Field(_) | Error::Adapt(_) => 2,
        _ => 1,
    }
}

fn configure_workers() {
    if let Some(n) = std::env::var(WORKERS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            // a pool may already exist when called twice in one process
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    configure_workers();
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn execute(command: Command) -> Result<(), Error> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match command {
        Command::SolveField {
            scenario,
            out: path,
            resolution,
        } => {
            let mut s = resolve_scenario(&scenario)?;
            if let Some(r) = resolution {
                s.field.resolution = r;
            }
            let (field, report) = build_field(&s)?;
            field.save(&path)?;
            write_manifest(&manifest_path(&path), "solve-field", &s, None, None)?;
            writeln!(
                out,
                "grid {}x{} spacing {} iterations {} residual {:e}",
                field.nx, field.ny, field.spacing, report.iterations, report.residual
            )?;
        }
        Command::Run {
            scenario,
            variant,
            out: path,
            seed,
            field,
            paper_exact,
            no_timing,
        } => {
            let mut s = resolve_scenario(&scenario)?;
            if let Some(seed) = seed {
                s.seed = seed;
            }
            if paper_exact {
                make_paper_exact(&mut s);
            }
            let v = ControllerVariant::from_name(&variant, &s).map_err(|e| Error::Usage(e.to_string()))?;
            let f = obtain_field(&s, field.as_deref())?;
            let log = run_simulation(&s, &f, v);
            let timing = if no_timing { Timing::Omitted } else { Timing::Measured };
            save_log(&log, &path, timing)?;
            write_manifest(&manifest_path(&path), "run", &s, Some(v.name()), Some(paper_exact))?;
            print_summary(&mut out, &log, &s)?;
        }
        Command::Compare {
            scenario,
            seed,
            out_dir,
            field,
            optimal,
            eps_x,
            timing,
        } => {
            let mut s = resolve_scenario(&scenario)?;
            if let Some(seed) = seed {
                s.seed = seed;
            }
            let f = obtain_field(&s, field.as_deref())?;
            let opt = optimal.as_deref().map(OptimalTrajectory::load).transpose()?;
            std::fs::create_dir_all(&out_dir)?;
            let logs: Vec<TrajectoryLog> = ControllerVariant::all(&s)
                .into_par_iter()
                .map(|v| run_simulation(&s, &f, v))
                .collect();
            let mut reports = Vec::new();
            for log in &logs {
                save_log(log, out_dir.join(format!("{}.csv", log.variant)), Timing::Omitted)?;
                reports.push(MetricsReport::from_log(log, &s, eps_x, opt.as_ref())?);
            }
            let table = compare(&reports);
            std::fs::write(out_dir.join("metrics.csv"), &table)?;
            if timing {
                let mut t = String::from("method,mean_step_us,max_step_us\n");
                for log in &logs {
                    let max = log.records.iter().map(|r| r.wall_clock_us).fold(0.0, f64::max);
                    t.push_str(&format!("{},{:.1},{:.1}\n", log.variant, log.mean_wall_clock_us(), max));
                }
                std::fs::write(out_dir.join("timing.csv"), t)?;
            }
            write_manifest(&out_dir.join("manifest.toml"), "compare", &s, None, None)?;
            write!(out, "{table}")?;
        }
        Command::AdaptDemo {
            scenario,
            state,
            t,
            seed,
            field,
            paper_exact,
            out: path,
        } => {
            let mut s = resolve_scenario(&scenario)?;
            if let Some(seed) = seed {
                s.seed = seed;
            }
            let f = obtain_field(&s, field.as_deref())?;
            let mut config = AdaptationConfig::from_scenario(&s);
            if paper_exact {
                config = config.paper_exact();
            }
            let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
            let samples = sample_perturbations(state, s.error_box, config.n_samples, &mut rng);
            let pipeline = SafePipeline::new(&f, &s, state[2]);
            let landscape = objective_landscape(t, state, &samples, &pipeline, &config)?;
            let mut full = config.clone();
            full.search = crate::scenario::SearchMode::Full;
            let best = adapt_with(t, state, &samples, &pipeline, &full)?;
            let mut text = String::from("gamma1,gamma2,sigma_hat,objective,admissible\n");
            for p in &landscape {
                text.push_str(&format!(
                    "{},{},{},{},{}\n",
                    fmt_f64(p.gamma.gamma1),
                    fmt_f64(p.gamma.gamma2),
                    fmt_f64(p.sigma_hat),
                    fmt_f64(p.objective),
                    u8::from(p.admissible)
                ));
            }
            match path {
                Some(p) => {
                    std::fs::write(&p, text)?;
                    write_manifest(&manifest_path(&p), "adapt-demo", &s, None, Some(paper_exact))?;
                }
                None => write!(out, "{text}")?,
            }
            eprintln!(
                "argmin gamma1 {} gamma2 {} sigma_hat {} objective {} ({} candidates, {} samples skipped)",
                best.gamma.gamma1,
                best.gamma.gamma2,
                best.sigma_hat_at_opt,
                best.objective,
                best.evaluations,
                best.skipped_samples
            );
        }
        Command::Metrics {
            log,
            optimal,
            eps_x,
            scenario,
        } => {
            let s = resolve_scenario(&scenario)?;
            let mut l = load_log(&log)?;
            l.variant = log
                .file_stem()
                .and_then(|n| n.to_str())
                .unwrap_or("log")
                .to_string();
            let opt = optimal.as_deref().map(OptimalTrajectory::load).transpose()?;
            let report = MetricsReport::from_log(&l, &s, eps_x, opt.as_ref())?;
            write!(out, "{}", compare(std::slice::from_ref(&report)))?;
            writeln!(out, "mean_step_us,{:.1}", report.mean_step_wallclock)?;
        }
    }
    Ok(())
}

fn print_summary(out: &mut impl Write, log: &TrajectoryLog, s: &Scenario) -> Result<(), Error> {
    let report = MetricsReport::from_log(log, s, DEFAULT_EPS_X, None)?;
    let last = log.final_state();
    writeln!(out, "variant {}", log.variant)?;
    writeln!(out, "status {}", log.status.label())?;
    writeln!(out, "steps {}", log.records.len())?;
    if let Some(st) = last {
        writeln!(out, "final_state {} {} {}", st.x, st.y, st.theta)?;
    }
    writeln!(out, "min_h {}", report.min_h)?;
    writeln!(out, "min_h0 {}", report.min_h0)?;
    writeln!(out, "J_t {}", report.j_t)?;
    writeln!(out, "deadlocked {}", report.deadlocked)?;
    if let Some(t) = log.deadlock_time() {
        writeln!(out, "deadlock_time {t}")?;
    }
    writeln!(out, "mean_step_us {:.1}", report.mean_step_wallclock)?;
    Ok(())
}
