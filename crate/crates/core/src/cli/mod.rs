//! Command-line front end.
//!
//! Exit codes: 0 success, 2 a required hypothesis (compatibility, piecewise
//! monotone lag, model validation) does not hold, 1 any other error.

pub mod config;
pub mod output;

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::error::SddeError;
use crate::estimate::{gauss_newton_fit, ObservationSet};
use crate::lag::{classify_pm, lag_profile};
use crate::model::validate_model;
use crate::oracle::{fd_first, fd_second, FdSchedule};
use crate::sens1::{sensitivities, HYPOTHESIS_GRID_DENSITY};
use crate::sens2::{hessian_tensor, solve_second_variation_with};
use crate::solver::{check_compatibility, solve};
use config::{Format, RunConfig};
use output::{write_report, Table};

#[derive(Debug, Parser)]
#[command(name = "sdde", version, about = "Solve delay differential equations with state-dependent delays and their parameter sensitivities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve and tabulate x(t).
    Solve(Common),
    /// Report compatibility of the initial data and monotonicity of the time lag.
    Check(Common),
    /// First-order sensitivities along the configured directions.
    Sens(Common),
    /// Second-order sensitivities for every pair of configured directions.
    Sens2(Common),
    /// Compare sensitivities against finite differences of re-solves.
    FdVerify(Common),
    /// Gauss-Newton fit to observations.
    Fit(Common),
    /// Check the model's declared partial derivatives against finite differences.
    Validate(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration.
    config: PathBuf,
    /// Output format; overrides `output.format`.
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Output file; overrides `output.path`. Standard output when neither is set.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

enum Outcome {
    Done,
    HypothesisFailed(String),
}

/// Parses `argv` (including the program name) and runs one subcommand.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

/// [`run`] with explicit streams for tables and diagnostics.
pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = write!(out, "{}", e.render());
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => 0,
                _ => 1,
            };
        }
    };
    match execute(&cli.command, out) {
        Ok(Outcome::Done) => 0,
        Ok(Outcome::HypothesisFailed(msg)) => {
            let _ = writeln!(err, "hypothesis failure: {msg}");
            2
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            match e.downcast_ref::<SddeError>() {
                Some(SddeError::Hypothesis(_)) => 2,
                _ => 1,
            }
        }
    }
}

struct Ctx {
    cfg: RunConfig,
    base: PathBuf,
    format: Format,
    dest: Option<PathBuf>,
}

impl Ctx {
    fn load(c: &Common) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(&c.config).with_context(|| format!("reading {}", c.config.display()))?;
        let cfg = RunConfig::parse(&text)?;
        let base = c.config.parent().map(Path::to_path_buf).unwrap_or_default();
        let format = c.format.unwrap_or(cfg.output.format);
        let dest = c.output.clone().or_else(|| cfg.output.path.as_ref().map(|p| base.join(p)));
        Ok(Self { cfg, base, format, dest })
    }

    fn sink<'a>(&self, out: &'a mut dyn Write) -> anyhow::Result<Box<dyn Write + 'a>> {
        Ok(match &self.dest {
            Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
            None => Box::new(out),
        })
    }

    fn emit_table(&self, table: &Table, out: &mut dyn Write) -> anyhow::Result<()> {
        let mut sink = self.sink(out)?;
        table.write(&mut sink, self.format)?;
        sink.flush()?;
        Ok(())
    }

    fn emit_report(&self, report: &Value, out: &mut dyn Write) -> anyhow::Result<()> {
        let mut sink = self.sink(out)?;
        write_report(&mut sink, report, self.format)?;
        sink.flush()?;
        Ok(())
    }
}

fn component_columns(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|c| format!("{prefix}{c}")).collect()
}

fn execute(cmd: &Command, out: &mut dyn Write) -> anyhow::Result<Outcome> {
    match cmd {
        Command::Solve(c) => cmd_solve(&Ctx::load(c)?, out),
        Command::Check(c) => cmd_check(&Ctx::load(c)?, out),
        Command::Sens(c) => cmd_sens(&Ctx::load(c)?, out),
        Command::Sens2(c) => cmd_sens2(&Ctx::load(c)?, out),
        Command::FdVerify(c) => cmd_fd_verify(&Ctx::load(c)?, out),
        Command::Fit(c) => cmd_fit(&Ctx::load(c)?, out),
        Command::Validate(c) => cmd_validate(&Ctx::load(c)?, out),
    }
}

fn cmd_solve(ctx: &Ctx, out: &mut dyn Write) -> anyhow::Result<Outcome> {
    let model = ctx.cfg.model()?;
    let gamma = ctx.cfg.parameter()?;
    let traj = solve(&model, &gamma, &ctx.cfg.solve_config())?;
    if let Some(p) = &ctx.cfg.output.trajectory {
        let path = ctx.base.join(p);
        let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        traj.write_columnar(BufWriter::new(f))?;
    }
    let mut cols = vec!["t".to_string()];
    cols.extend(component_columns("x", model.dim()));
    let mut table = Table::new(cols);
    for t in ctx.cfg.times()? {
        let mut row = vec![t];
        row.extend(traj.eval(t)?.iter());
        table.push(row);
    }
    let bps: Vec<Value> = traj.breakpoints().iter().map(|b| json!([b.t, b.generation])).collect();
    ctx.emit_table(&table.with_meta(json!({ "breakpoints": bps, "alpha": traj.end() })), out)?;
    Ok(Outcome::Done)
}

fn cmd_check(ctx: &Ctx, out: &mut dyn Write) -> anyhow::Result<Outcome> {
    let model = ctx.cfg.model()?;
    let gamma = ctx.cfg.parameter()?;
    let cfg = ctx.cfg.solve_config();
    let compat = check_compatibility(&model, &gamma, cfg.compat_tol)?;
    let traj = solve(&model, &gamma, &cfg)?;
    let profile = lag_profile(&model, &gamma, &traj, HYPOTHESIS_GRID_DENSITY, None)?;
    let pm = classify_pm(&profile, 1e-8, 2)?;
    ctx.emit_report(&json!({ "compatibility": compat, "lag": pm }), out)?;
    let mut failed = Vec::new();
    if !compat.compatible {
        failed.push(format!("initial data incompatible (residual {:e})", compat.residual));
    }
    if !pm.is_pm {
        failed.push("time lag not certified piecewise monotone".to_string());
    }
    Ok(if failed.is_empty() { Outcome::Done } else { Outcome::HypothesisFailed(failed.join("; ")) })
}

fn cmd_sens(ctx: &Ctx, out: &mut dyn Write) -> anyhow::Result<Outcome> {
    let model = ctx.cfg.model()?;
    let gamma = ctx.cfg.parameter()?;
    let cfg = ctx.cfg.solve_config();
    let traj = solve(&model, &gamma, &cfg)?;
    let named = ctx.cfg.directions(&gamma)?;
    let dirs: Vec<_> = named.iter().map(|(_, d)| d.clone()).collect();
    let z = sensitivities(&model, &gamma, &traj, &dirs, &cfg)?;
    let mut cols = vec!["t".to_string()];
    for (name, _) in &named {
        cols.extend(component_columns(&format!("z_{name}_"), model.dim()));
    }
    let mut table = Table::new(cols);
    for t in ctx.cfg.times()? {
        let mut row = vec![t];
        for zi in &z {
            row.extend(zi.z.eval(t)?.iter());
        }
        table.push(row);
    }
    let unverified = z.iter().any(|v| v.hypothesis_unverified);
    let ties: usize = z.iter().map(|v| v.tie_flags).sum();
    ctx.emit_table(&table.with_meta(json!({ "hypothesis_unverified": unverified, "tie_flags": ties })), out)?;
    Ok(if unverified {
        Outcome::HypothesisFailed("time lag not certified piecewise monotone; sensitivities may not exist".into())
    } else {
        Outcome::Done
    })
}

fn cmd_sens2(ctx: &Ctx, out: &mut dyn Write) -> anyhow::Result<Outcome> {
    let model = ctx.cfg.model()?;
    let gamma = ctx.cfg.parameter()?;
    let cfg = ctx.cfg.solve_config();
    let traj = solve(&model, &gamma, &cfg)?;
    let named = ctx.cfg.directions(&gamma)?;
    let dirs: Vec<_> = named.iter().map(|(_, d)| d.clone()).collect();
    let tensor = hessian_tensor(&model, &gamma, &traj, &dirs, &cfg)?;
    let mut cols = vec!["t".to_string()];
    let mut pairs = Vec::new();
    for i in 0..named.len() {
        for j in i..named.len() {
            cols.extend(component_columns(&format!("w_{}_{}_", named[i].0, named[j].0), model.dim()));
            pairs.push((i, j));
        }
    }
    let mut table = Table::new(cols);
    for t in ctx.cfg.times()? {
        let mut row = vec![t];
        for &(i, j) in &pairs {
            row.extend(tensor[i][j].w.eval(t)?.iter());
        }
        table.push(row);
    }
    let unverified = tensor.iter().flatten().any(|w| w.hypothesis_unverified);
    ctx.emit_table(&table.with_meta(json!({ "hypothesis_unverified": unverified })), out)?;
    Ok(if unverified {
        Outcome::HypothesisFailed("time lag not piecewise monotone or history not C1; second derivatives may not exist".into())
    } else {
        Outcome::Done
    })
}

fn cmd_fd_verify(ctx: &Ctx, out: &mut dyn Write) -> anyhow::Result<Outcome> {
    let model = ctx.cfg.model()?;
    let gamma = ctx.cfg.parameter()?;
    let cfg = ctx.cfg.solve_config();
    let traj = solve(&model, &gamma, &cfg)?;
    let times = ctx.cfg.times()?;
    let named = ctx.cfg.directions(&gamma)?;
    let dirs: Vec<_> = named.iter().map(|(_, d)| d.clone()).collect();
    let z = sensitivities(&model, &gamma, &traj, &dirs, &cfg)?;
    let fd_cfg = &ctx.cfg.fd;
    let mut worst = 0.0_f64;
    let mut first = Vec::new();
    for ((name, d), zi) in named.iter().zip(&z) {
        let sched = match &fd_cfg.eps_list {
            Some(e) => FdSchedule::new(e.clone(), fd_cfg.richardson)?,
            None => FdSchedule { richardson: fd_cfg.richardson, ..FdSchedule::default_for(&gamma, d) },
        };
        let fd = fd_first(&model, &gamma, d, &times, &sched, &cfg)?;
        let mut dev = 0.0_f64;
        for (k, &t) in times.iter().enumerate() {
            for (a, b) in zi.z.eval(t)?.iter().zip(&fd.values[k]) {
                dev = dev.max((a - b).abs());
            }
        }
        worst = worst.max(dev);
        first.push(json!({
            "direction": name,
            "max_deviation": dev,
            "fd_error_estimate": fd.error.iter().copied().fold(0.0, f64::max),
            "conditioning_warning": fd.conditioning_warning,
        }));
    }
    let compat = check_compatibility(&model, &gamma, cfg.compat_tol)?;
    let mut second = Vec::new();
    if compat.compatible {
        for i in 0..named.len() {
            for j in i..named.len() {
                let w = solve_second_variation_with(&model, &gamma, &traj, &z[i], &z[j], &cfg)?;
                let fd = fd_second(&model, &gamma, &dirs[i], &dirs[j], &times, fd_cfg.second_eps, &cfg)?;
                let mut dev = 0.0_f64;
                for (k, &t) in times.iter().enumerate() {
                    for (a, b) in w.w.eval(t)?.iter().zip(&fd[k]) {
                        dev = dev.max((a - b).abs());
                    }
                }
                worst = worst.max(dev);
                second.push(json!({ "pair": [named[i].0, named[j].0], "max_deviation": dev }));
            }
        }
    }
    let report = json!({
        "first_order": first,
        "second_order": second,
        "second_order_skipped": !compat.compatible,
        "max_deviation": worst,
    });
    ctx.emit_report(&report, out)?;
    Ok(Outcome::Done)
}

fn cmd_fit(ctx: &Ctx, out: &mut dyn Write) -> anyhow::Result<Outcome> {
    let model = ctx.cfg.model()?;
    let gamma = ctx.cfg.parameter()?;
    let cfg = ctx.cfg.solve_config();
    let section = ctx.cfg.fit.as_ref().context("config has no [fit] section")?;
    let path = ctx.base.join(&section.observations);
    let obs = ObservationSet::from_csv(File::open(&path).with_context(|| format!("opening {}", path.display()))?)?;
    let fit = gauss_newton_fit(&model, &gamma, &obs, &section.mask, &ctx.cfg.fit_options(), &cfg)?;
    let report = json!({
        "theta": fit.gamma.theta.iter().collect::<Vec<_>>(),
        "xi": fit.gamma.xi.iter().collect::<Vec<_>>(),
        "iterations": fit.iterations,
        "converged": fit.converged,
        "history": fit.history,
        "singular_values": fit.singular_values,
    });
    ctx.emit_report(&report, out)?;
    Ok(Outcome::Done)
}

fn cmd_validate(ctx: &Ctx, out: &mut dyn Write) -> anyhow::Result<Outcome> {
    let model = ctx.cfg.model()?;
    let v = &ctx.cfg.validate;
    let report = validate_model(&model, v.probes, v.tolerance);
    ctx.emit_report(&serde_json::to_value(&report)?, out)?;
    Ok(if report.passed {
        Outcome::Done
    } else {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        Outcome::HypothesisFailed(format!("declared partials disagree with finite differences: {}", failed.join(", ")))
    })
}
