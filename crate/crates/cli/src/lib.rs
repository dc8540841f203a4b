//! `ouflow` command line: configuration ingestion, subcommand dispatch and
//! artifact output.
//!
//! Exit codes: 0 success, 2 validation error (bad flags or config), 3
//! numerical failure (non-convergence, failed checks, truncation).

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use nalgebra::DMatrix;
use serde::Serialize;

use ouflow::config::RunConfig;
use ouflow::evolution_op;
use ouflow::experiments::{self, DataFamily, DecayStudy};
use ouflow::field_grid::VectorField;
use ouflow::gaussian_kernel::make_params;
use ouflow::kato_solver::{self, IterationReport};
use ouflow::matrix_flow;
use ouflow::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Environment variable capping the worker thread count.
pub const THREADS_VAR: &str = "OUFLOW_THREADS";

#[derive(Debug, Parser)]
#[command(name = "ouflow", version, about = "Evolution systems with rotation and drift")]
struct Cli {
    /// Directory for artifacts; overrides `output_dir` from the config.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print U(t,s), U(s,t), Q and g.
    Propagate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        s: Option<f64>,
        #[arg(long)]
        t: Option<f64>,
    },
    /// Evolve a field from s to t.
    Apply {
        #[arg(long)]
        config: PathBuf,
        /// Binary field; defaults to the config's data.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Use oversampled interpolation instead of direct summation.
        #[arg(long)]
        fast: bool,
        /// Also write the result as CSV.
        #[arg(long)]
        csv: bool,
    },
    /// Fit decay exponents of T and ∇T over times.t_list.
    DecayStudy {
        #[arg(long)]
        config: PathBuf,
    },
    /// Mild solution of the nonlinear problem on [0, T0].
    SolveNs {
        #[arg(long)]
        config: PathBuf,
        /// Write every trajectory field as a binary file.
        #[arg(long)]
        export_fields: bool,
    },
    /// Run the estimate suite and write a pass/fail summary.
    Verify {
        #[arg(long)]
        config: PathBuf,
    },
}

/// Parse `args`, run the subcommand and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return EXIT_VALIDATION;
    }
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                EXIT_VALIDATION
            } else {
                EXIT_NUMERICAL
            }
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("{THREADS_VAR}: expected a positive integer, got {value:?}")))?;
    // a second call in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn output_dir(cli_dir: &Option<PathBuf>, cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cli_dir.clone().unwrap_or_else(|| cfg.output_dir.clone());
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<String> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, &text)?;
    Ok(text)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn dispatch(cli: Cli) -> Result<i32> {
    match &cli.command {
        Command::Propagate { config, s, t } => {
            let cfg = RunConfig::load(config)?;
            let s = s.unwrap_or(cfg.times.s);
            let t = t
                .or(cfg.times.t)
                .ok_or_else(|| Error::Config("times.t: required by propagate".into()))?;
            propagate(&cfg, s, t)
        }
        Command::Apply {
            config,
            input,
            fast,
            csv,
        } => {
            let cfg = RunConfig::load(config)?;
            let dir = output_dir(&cli.output_dir, &cfg)?;
            apply(&cfg, input.as_deref(), *fast, *csv, &dir)
        }
        Command::DecayStudy { config } => {
            let cfg = RunConfig::load(config)?;
            let dir = output_dir(&cli.output_dir, &cfg)?;
            decay_study(&cfg, &dir)
        }
        Command::SolveNs { config, export_fields } => {
            let cfg = RunConfig::load(config)?;
            let dir = output_dir(&cli.output_dir, &cfg)?;
            solve_ns(&cfg, *export_fields, &dir)
        }
        Command::Verify { config } => {
            let cfg = RunConfig::load(config)?;
            let dir = output_dir(&cli.output_dir, &cfg)?;
            let summary = experiments::estimate_suite(&cfg)?;
            print!("{}", write_json(&dir.join("verify_summary.json"), &summary)?);
            Ok(if summary.all_pass { EXIT_OK } else { EXIT_NUMERICAL })
        }
    }
}

#[derive(Serialize)]
struct PropagateOutput {
    s: f64,
    t: f64,
    forward: Vec<Vec<f64>>,
    backward: Vec<Vec<f64>>,
    gram: Vec<Vec<f64>>,
    offset: Vec<f64>,
    det_forward: f64,
    trace_integral: f64,
}

fn propagate(cfg: &RunConfig, s: f64, t: f64) -> Result<i32> {
    let m = &cfg.signal_m;
    let tol = cfg.tolerances.propagator;
    let forward = matrix_flow::propagate(m, s, t, tol)?.matrix;
    let backward = matrix_flow::propagate(m, t, s, tol)?.matrix;
    let (gram, offset) = if t > s {
        let params = make_params(m, &cfg.drift(), s, t, tol)?;
        (rows(&params.gram.matrix), params.offset.iter().copied().collect())
    } else {
        let d = cfg.dimension;
        (vec![vec![0.0; d]; d], vec![0.0; d])
    };
    let out = PropagateOutput {
        s,
        t,
        det_forward: forward.determinant(),
        forward: rows(&forward),
        backward: rows(&backward),
        gram,
        offset,
        trace_integral: matrix_flow::trace_integral(m, s, t, tol)?,
    };
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct ApplySummary {
    s: f64,
    t: f64,
    input_norm_2: f64,
    output_norm_2: f64,
    output_max: f64,
    fast_error_estimate: Option<f64>,
    output: PathBuf,
}

fn apply(cfg: &RunConfig, input: Option<&Path>, fast: bool, csv: bool, dir: &Path) -> Result<i32> {
    let phi = match input {
        Some(path) => VectorField::read_binary(std::io::BufReader::new(File::open(path)?))?,
        None => cfg.initial_field()?,
    };
    let s = cfg.times.s;
    let t = cfg
        .times
        .t
        .ok_or_else(|| Error::Config("times.t: required by apply".into()))?;
    let f = cfg.drift();
    let opts = cfg.apply_options();
    let (out, estimate) = if fast {
        let img = evolution_op::apply_t_fast(&cfg.signal_m, &f, s, t, &phi, &opts)?;
        (img.field, Some(img.error_estimate))
    } else {
        (evolution_op::apply_t(&cfg.signal_m, &f, s, t, &phi, &opts)?, None)
    };
    let path = dir.join("applied.bin");
    let mut w = create(&path)?;
    out.write_binary(&mut w)?;
    w.flush()?;
    if csv {
        let mut w = create(&dir.join("applied.csv"))?;
        out.write_csv(&mut w)?;
        w.flush()?;
    }
    let summary = ApplySummary {
        s,
        t,
        input_norm_2: phi.lp_norm(2.0)?,
        output_norm_2: out.lp_norm(2.0)?,
        output_max: out.max_norm(),
        fast_error_estimate: estimate,
        output: path,
    };
    print!("{}", write_json(&dir.join("apply_summary.json"), &summary)?);
    Ok(EXIT_OK)
}

fn write_study(study: &DecayStudy, stem: &str, dir: &Path) -> Result<()> {
    let csv = format!("{stem}.csv");
    let mut w = create(&dir.join(&csv))?;
    study.write_csv(&mut w)?;
    w.flush()?;
    fs::write(dir.join(format!("{stem}.gp")), study.plot_script(&csv))?;
    Ok(())
}

#[derive(Serialize)]
struct StudySummary<'a> {
    value: &'a DecayStudy,
    gradient: &'a DecayStudy,
}

fn decay_study(cfg: &RunConfig, dir: &Path) -> Result<i32> {
    let taus = cfg
        .times
        .t_list
        .as_ref()
        .ok_or_else(|| Error::Config("times.t_list: required by decay-study".into()))?;
    let data = DataFamily::from_config(cfg)?;
    let f = cfg.drift();
    let opts = cfg.apply_options();
    let (p, q) = (cfg.exponents.p.0, cfg.exponents.q.0);
    let s = cfg.times.s;
    let gaps: Vec<f64> = taus.iter().map(|t| t - s).collect();
    let value = experiments::decay_study(&cfg.signal_m, &f, p, q, &data, s, &gaps, &opts)?;
    write_study(&value, "decay_value", dir)?;
    let gradient = experiments::gradient_decay_study(&cfg.signal_m, &f, p, q, &data, s, &gaps, &opts)?;
    write_study(&gradient, "decay_gradient", dir)?;
    let summary = StudySummary {
        value: &value,
        gradient: &gradient,
    };
    print!("{}", write_json(&dir.join("decay_summary.json"), &summary)?);
    Ok(EXIT_OK)
}

fn solve_ns(cfg: &RunConfig, export_fields: bool, dir: &Path) -> Result<i32> {
    let opts = cfg.kato_options()?;
    let u0 = cfg.initial_field()?;
    let (sol, report): (_, IterationReport) = kato_solver::solve_mild(&cfg.signal_m, &cfg.drift(), &u0, &opts)?;
    let mut w = create(&dir.join("profile.csv"))?;
    sol.write_profile_csv(&mut w)?;
    w.flush()?;
    if export_fields {
        sol.export_fields(&dir.join("fields"))?;
    }
    write_json(&dir.join("solve_report.json"), &report)?;
    // the profile is already in profile.csv
    let mut brief = serde_json::to_value(&report)?;
    if let Some(obj) = brief.as_object_mut() {
        obj.remove("profile");
    }
    println!("{}", serde_json::to_string_pretty(&brief)?);
    Ok(EXIT_OK)
}
