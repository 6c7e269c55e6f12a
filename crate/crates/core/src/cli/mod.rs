//! The `pendyn` command line: `validate`, `run`, `sweep` and `gallery`.
//!
//! Exit codes: 0 success, 1 validation or configuration failure, 2 runtime
//! failure or usage error.

pub mod config;
pub mod output;
pub mod pipeline;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::{csv_writer, format_float};
use crate::operators::{check_cocoercivity, check_firm_nonexpansiveness};
use crate::problems::{gallery, gallery_scaled, kkt_oracle};
use config::{ExperimentConfig, Metric};
use pipeline::{execute, RunOutcome};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

/// Samples used by the operator property checks in `validate`.
pub const PROPERTY_SAMPLES: usize = 1000;

#[derive(Debug, Parser)]
#[command(
    name = "pendyn",
    version,
    about = "Second-order penalized dynamics: validate, integrate, diagnose"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct CommonArgs {
    /// Experiment config (TOML)
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Overrides the config seed
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check hypotheses, operator properties and oracle certificates without integrating
    Validate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Integrate one configuration and write artifacts
    Run {
        #[command(flatten)]
        common: CommonArgs,
        /// Output directory (overrides outputs.directory)
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// Integrate even when hypothesis checks fail
        #[arg(long)]
        force: bool,
    },
    /// Run the [sweep] table of the config in parallel
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
        /// Maximum concurrent runs
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// List the problem instances
    Gallery {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Result of a command: exit code plus the text destined for stdout.
#[derive(Debug)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
}

fn load(common: &CommonArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn config_failure(e: Error) -> Outcome {
    Outcome {
        code: EXIT_VALIDATION,
        stdout: format!("error: {e}\n"),
    }
}

fn row(out: &mut String, name: &str, ok: bool, detail: &str) {
    let tag = if ok { "pass" } else { "FAIL" };
    let _ = writeln!(out, "  {name:<26} {tag:<4}  {detail}");
}

pub fn cmd_validate(cfg: &ExperimentConfig) -> Outcome {
    let inst = match cfg.instance() {
        Ok(i) => i,
        Err(e) => return config_failure(e),
    };
    let spec = &inst.spec;
    let mut out = format!("problem {} (n = {})\n", inst.name, spec.dim());
    out.push_str(&spec.hypotheses().render());
    let mut ok = spec.regime_supported();

    out.push_str("operator properties\n");
    let lam0 = spec.schedules().lambda.value(0.0);
    let checks = [
        (
            "firm_nonexpansive(J_A)",
            check_firm_nonexpansiveness(spec.a(), lam0, PROPERTY_SAMPLES, cfg.seed),
        ),
        (
            "cocoercive(D)",
            check_cocoercivity(spec.d(), PROPERTY_SAMPLES, cfg.seed),
        ),
        (
            "cocoercive(B)",
            check_cocoercivity(spec.b(), PROPERTY_SAMPLES, cfg.seed.wrapping_add(1)),
        ),
    ];
    for (name, r) in checks {
        match r {
            Ok(r) => {
                row(
                    &mut out,
                    name,
                    r.passed,
                    &format!(
                        "{} samples, max violation {:.3e}",
                        r.samples, r.max_violation
                    ),
                );
                ok &= r.passed;
            }
            Err(e) => {
                row(&mut out, name, false, &e.to_string());
                ok = false;
            }
        }
    }

    out.push_str("solution certificate\n");
    match kkt_oracle(&inst) {
        Ok(s) => {
            let detail = format!(
                "x* = {:?} ({:?}{})",
                s.anchor.x_star.as_slice(),
                s.method,
                if s.unique { "" } else { ", non-unique" }
            );
            row(&mut out, "oracle", true, &detail);
        }
        Err(e) => {
            row(&mut out, "oracle", false, &e.to_string());
            ok = false;
        }
    }
    out.push_str(if ok {
        "result: pass\n"
    } else {
        "result: FAIL\n"
    });
    Outcome {
        code: if ok { EXIT_OK } else { EXIT_VALIDATION },
        stdout: out,
    }
}

fn summarize(o: &RunOutcome) -> String {
    let r = &o.report;
    let mut s = format!(
        "verdict {:?}: |x - x*| = {:.3e}, |x'| = {:.3e}, residual = {:.3e}",
        r.verdict, r.final_distance, r.final_velocity_norm, r.final_residual
    );
    if let Some(e) = r.ergodic_distance {
        let _ = write!(s, ", |xbar - x*| = {e:.3e}");
    }
    s.push('\n');
    for m in o.monitors.iter().filter_map(|m| m.report()) {
        let _ = writeln!(
            s,
            "  monitor {:<14} violation fraction {:.4} over {} points{}",
            m.inequality.name(),
            m.violation_fraction,
            m.points.len(),
            if m.pre_asymptotic {
                " (pre-asymptotic)"
            } else {
                ""
            }
        );
    }
    s
}

pub fn cmd_run(cfg: &ExperimentConfig, out_dir: &Path, force: bool) -> Outcome {
    let inst = match cfg.instance() {
        Ok(i) => i,
        Err(e) => return config_failure(e),
    };
    let mut out = inst.spec.hypotheses().render();
    let supported = inst.spec.regime_supported();
    if !supported && !force {
        out.push_str(
            "hypothesis checks failed; rerun with --force to integrate an unsupported regime\n",
        );
        return Outcome {
            code: EXIT_VALIDATION,
            stdout: out,
        };
    }
    if !supported {
        out.push_str("unsupported regime: integrating anyway, verdicts will be suppressed\n");
    }
    if let Err(e) = output::write_preamble(out_dir, &inst.spec, &cfg.outputs) {
        out.push_str(&format!("error: {e}\n"));
        return Outcome {
            code: EXIT_RUNTIME,
            stdout: out,
        };
    }
    let result = execute(inst, &cfg.integrator).and_then(|o| {
        output::write_artifacts(out_dir, &o, &cfg.outputs)?;
        Ok(o)
    });
    match result {
        Ok(o) => {
            for w in &o.record.warnings {
                out.push_str(&format!("warning: {w}\n"));
            }
            out.push_str(&summarize(&o));
            out.push_str(&format!("artifacts written to {}\n", out_dir.display()));
            Outcome {
                code: EXIT_OK,
                stdout: out,
            }
        }
        Err(e) => {
            let _ = output::write_failure(out_dir, &e);
            out.push_str(&format!("error: {e}\n"));
            Outcome {
                code: EXIT_RUNTIME,
                stdout: out,
            }
        }
    }
}

/// One row of a sweep summary.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub index: usize,
    pub value: f64,
    pub status: String,
    pub verdict: String,
    pub metric: Option<f64>,
    pub final_distance: Option<f64>,
    pub final_velocity: Option<f64>,
    pub ergodic_distance: Option<f64>,
    pub detail: String,
}

fn sweep_one(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    force: bool,
    index: usize,
    value: f64,
) -> SweepRow {
    let sweep = cfg.sweep.as_ref().expect("checked by caller");
    let mut row = SweepRow {
        index,
        value,
        status: String::new(),
        verdict: String::new(),
        metric: None,
        final_distance: None,
        final_velocity: None,
        ergodic_distance: None,
        detail: String::new(),
    };
    let inst = cfg
        .schedules_config()
        .with_parameter(&sweep.parameter, value)
        .and_then(|sc| cfg.instance_with(&sc));
    let inst = match inst {
        Ok(i) => i,
        Err(e) => {
            row.status = "invalid".into();
            row.detail = e.to_string();
            return row;
        }
    };
    if !inst.spec.regime_supported() && !force {
        row.status = "hypothesis-failed".into();
        row.detail = inst.spec.hypotheses().failures().join(" ");
        return row;
    }
    let dir = out_dir.join(format!("run-{index:03}"));
    let result = output::write_preamble(&dir, &inst.spec, &cfg.outputs)
        .and_then(|_| execute(inst, &cfg.integrator))
        .and_then(|o| output::write_artifacts(&dir, &o, &cfg.outputs).map(|_| o));
    match result {
        Ok(o) => {
            let r = &o.report;
            row.status = "ok".into();
            row.verdict = format!("{:?}", r.verdict).to_lowercase();
            row.final_distance = Some(r.final_distance);
            row.final_velocity = Some(r.final_velocity_norm);
            row.ergodic_distance = r.ergodic_distance;
            row.metric = match sweep.metric {
                Metric::FinalDistance => row.final_distance,
                Metric::FinalVelocity => row.final_velocity,
                Metric::ErgodicDistance => row.ergodic_distance,
            };
        }
        Err(e) => {
            let _ = output::write_failure(&dir, &e);
            row.status = "runtime-error".into();
            row.detail = e.to_string();
        }
    }
    row
}

fn opt(v: Option<f64>) -> Result<String> {
    v.map(format_float)
        .transpose()
        .map(Option::unwrap_or_default)
}

fn write_summary(path: &Path, parameter: &str, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv_writer(std::fs::File::create(path)?);
    w.write_record([
        "index",
        "parameter",
        "value",
        "status",
        "verdict",
        "final_distance",
        "final_velocity",
        "ergodic_distance",
        "detail",
    ])?;
    for r in rows {
        w.write_record([
            r.index.to_string(),
            parameter.to_string(),
            format_float(r.value)?,
            r.status.clone(),
            r.verdict.clone(),
            opt(r.final_distance)?,
            opt(r.final_velocity)?,
            opt(r.ergodic_distance)?,
            r.detail.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn render_table(parameter: &str, metric: Metric, rows: &[SweepRow]) -> String {
    let cells: Vec<[String; 5]> = rows
        .iter()
        .map(|r| {
            [
                r.index.to_string(),
                format!("{}", r.value),
                r.status.clone(),
                r.verdict.clone(),
                r.metric
                    .map(|m| format!("{m:.6e}"))
                    .unwrap_or_else(|| "-".into()),
            ]
        })
        .collect();
    let header = [
        "#".to_string(),
        parameter.to_string(),
        "status".into(),
        "verdict".into(),
        metric.name().into(),
    ];
    let widths: Vec<usize> = (0..5)
        .map(|c| {
            cells
                .iter()
                .map(|r| r[c].len())
                .chain([header[c].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |r: &[String; 5]| {
        let mut s = String::new();
        for (c, w) in widths.iter().enumerate() {
            let _ = write!(s, "{:<w$}  ", r[c], w = *w);
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(&header);
    for r in &cells {
        out.push_str(&line(r));
    }
    out
}

pub fn cmd_sweep(cfg: &ExperimentConfig, out_dir: &Path, force: bool, jobs: usize) -> Outcome {
    let usage = |msg: &str| Outcome {
        code: EXIT_RUNTIME,
        stdout: format!("usage error: {msg}\n"),
    };
    let Some(sweep) = &cfg.sweep else {
        return usage("the config has no [sweep] table");
    };
    if sweep.values.is_empty() {
        return usage("sweep.values is empty");
    }
    if jobs == 0 {
        return usage("--jobs must be at least 1");
    }
    if let Err(e) = std::fs::create_dir_all(out_dir) {
        return Outcome {
            code: EXIT_RUNTIME,
            stdout: format!("error: {e}\n"),
        };
    }
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(p) => p,
        Err(e) => {
            return Outcome {
                code: EXIT_RUNTIME,
                stdout: format!("error: {e}\n"),
            }
        }
    };
    let rows: Vec<SweepRow> = pool.install(|| {
        sweep
            .values
            .par_iter()
            .enumerate()
            .map(|(i, &v)| sweep_one(cfg, out_dir, force, i, v))
            .collect()
    });
    let mut out = render_table(&sweep.parameter, sweep.metric, &rows);
    if let Err(e) = write_summary(&out_dir.join("summary.csv"), &sweep.parameter, &rows) {
        out.push_str(&format!("error: {e}\n"));
        return Outcome {
            code: EXIT_RUNTIME,
            stdout: out,
        };
    }
    let code = if rows.iter().any(|r| r.status == "runtime-error") {
        EXIT_RUNTIME
    } else {
        EXIT_OK
    };
    Outcome { code, stdout: out }
}

pub fn cmd_gallery(seed: u64) -> Outcome {
    let mut out = String::new();
    let scaled = gallery_scaled(seed).unwrap_or_default();
    for inst in gallery().iter().chain(scaled.iter()) {
        let _ = writeln!(
            out,
            "{:<36} n={:<3} {:<15} {:<18} {}",
            inst.name,
            inst.spec.dim(),
            format!("{:?}", inst.oracle),
            if inst.strongly_monotone() {
                format!("eta={}", inst.modulus())
            } else {
                "monotone".into()
            },
            inst.description
        );
    }
    Outcome {
        code: EXIT_OK,
        stdout: out,
    }
}

pub fn dispatch(cli: Cli) -> Outcome {
    match cli.command {
        Command::Gallery { seed } => cmd_gallery(seed),
        Command::Validate { common } => match load(&common) {
            Ok(cfg) => cmd_validate(&cfg),
            Err(e) => config_failure(e),
        },
        Command::Run { common, out, force } => match load(&common) {
            Ok(cfg) => {
                let dir = out.unwrap_or_else(|| cfg.outputs.directory.clone());
                cmd_run(&cfg, &dir, force)
            }
            Err(e) => config_failure(e),
        },
        Command::Sweep {
            common,
            out,
            force,
            jobs,
        } => match load(&common) {
            Ok(cfg) => {
                let dir = out.unwrap_or_else(|| cfg.outputs.directory.clone());
                cmd_sweep(&cfg, &dir, force, jobs)
            }
            Err(e) => config_failure(e),
        },
    }
}

/// Parses `args`, runs the command, prints its output and returns the exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => {
            let o = dispatch(cli);
            print!("{}", o.stdout);
            o.code
        }
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                EXIT_RUNTIME
            } else {
                EXIT_OK
            }
        }
    }
}
