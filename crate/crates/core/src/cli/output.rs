//! Artifact files written by `run` and `sweep`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde_json::json;

use super::config::{Format, OutputsConfig};
use super::pipeline::{MonitorOutcome, RunOutcome};
use crate::diagnostics::ergodic_from_record;
use crate::dynamics::SystemSpec;
use crate::error::{Error, Result};
use crate::io::{csv_writer, format_float, format_row};
use crate::problems::OracleSolution;

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn hypotheses_json(spec: &SystemSpec) -> serde_json::Value {
    json!({
        "supported_regime": spec.regime_supported(),
        "failures": spec.hypotheses().failures(),
        "checks": spec.hypotheses(),
        "schedules": spec.schedules(),
    })
}

pub fn oracle_json(o: &OracleSolution) -> serde_json::Value {
    json!({
        "method": o.method,
        "unique": o.unique,
        "levels": o.levels,
        "x_star": o.anchor.x_star.as_slice(),
        "v": o.anchor.v.as_slice(),
        "p": o.anchor.p.as_slice(),
    })
}

/// Written before integration so a failed run still leaves its regime on disk.
pub fn write_preamble(dir: &Path, spec: &SystemSpec, outputs: &OutputsConfig) -> Result<()> {
    fs::create_dir_all(dir)?;
    if outputs.wants(Format::Json) {
        write_json(&dir.join("hypotheses.json"), &hypotheses_json(spec))?;
    }
    Ok(())
}

pub fn write_failure(dir: &Path, err: &Error) -> Result<()> {
    let last_good = match err {
        Error::NonFiniteState { last_good, .. } | Error::StepUnderflow { last_good, .. } => {
            Some(json!({
                "t": last_good.t,
                "x": last_good.x.as_slice(),
                "v": last_good.v.as_slice(),
            }))
        }
        _ => None,
    };
    write_json(
        &dir.join("error.json"),
        &json!({ "error": err.to_string(), "last_good_state": last_good }),
    )
}

pub fn diagnostics_json(out: &RunOutcome) -> serde_json::Value {
    let monitors: Vec<_> = out
        .monitors
        .iter()
        .map(|m| match m {
            MonitorOutcome::Evaluated(r) => json!({
                "inequality": r.inequality,
                "status": "evaluated",
                "points": r.points.len(),
                "violations": r.violations,
                "violation_fraction": r.violation_fraction,
                "max_violation": r.max_violation,
                "window_start": r.window_start,
                "pre_asymptotic": r.pre_asymptotic,
                "detection_rule": r.detection_rule,
                "tolerance_rule": r.tolerance_rule,
            }),
            MonitorOutcome::Skipped { inequality, reason } => json!({
                "inequality": inequality,
                "status": "skipped",
                "reason": reason,
            }),
        })
        .collect();
    json!({
        "problem": {
            "name": out.instance.name,
            "description": out.instance.description,
            "dim": out.instance.spec.dim(),
            "strongly_monotone": out.instance.strongly_monotone(),
            "modulus": out.instance.modulus(),
        },
        "oracle": oracle_json(&out.oracle),
        "constants": out.constants,
        "integration": {
            "stats": out.record.stats,
            "samples": out.record.samples.len(),
            "warnings": out.record.warnings,
            "unsupported_regime": out.record.unsupported_regime,
        },
        "convergence": out.report,
        "monitors": monitors,
        "energy": out.energy,
    })
}

fn write_monitors_csv(path: &Path, out: &RunOutcome) -> Result<()> {
    let mut w = csv_writer(create(path)?);
    w.write_record(["inequality", "t", "lhs", "rhs", "violation"])?;
    for r in out.monitors.iter().filter_map(MonitorOutcome::report) {
        for p in &r.points {
            let mut row = vec![r.inequality.name().to_string()];
            row.extend(format_row([p.t, p.lhs, p.rhs, p.violation])?);
            w.write_record(row)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_ergodic_csv(path: &Path, out: &RunOutcome) -> Result<()> {
    let n = out.record.dim;
    let mut w = csv_writer(create(path)?);
    let mut header = vec!["t".to_string()];
    header.extend((0..n).map(|i| format!("xbar_{i}")));
    header.push("distance".into());
    w.write_record(&header)?;
    for s in out.record.samples.iter().filter(|s| s.t > 0.0) {
        let Some(e) = ergodic_from_record(&out.record, s) else {
            break;
        };
        let d = (&e - &out.oracle.anchor.x_star).norm();
        w.write_record(format_row(
            std::iter::once(s.t).chain(e.iter().copied()).chain([d]),
        )?)?;
    }
    w.flush()?;
    Ok(())
}

fn write_tsv(path: &Path, name: &str, rows: impl Iterator<Item = (f64, f64)>) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "t\t{name}")?;
    for (t, v) in rows {
        writeln!(w, "{}\t{}", format_float(t)?, format_float(v)?)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_artifacts(dir: &Path, out: &RunOutcome, outputs: &OutputsConfig) -> Result<()> {
    fs::create_dir_all(dir)?;
    if outputs.wants(Format::Csv) {
        out.record.write_csv(create(&dir.join("trajectory.csv"))?)?;
        write_monitors_csv(&dir.join("monitors.csv"), out)?;
        write_ergodic_csv(&dir.join("ergodic.csv"), out)?;
    }
    if outputs.wants(Format::Json) {
        write_json(&dir.join("diagnostics.json"), &diagnostics_json(out))?;
        write_json(
            &dir.join("hypotheses.json"),
            &hypotheses_json(&out.instance.spec),
        )?;
    }
    if outputs.wants(Format::Tsv) {
        let plot = dir.join("plotdata");
        fs::create_dir_all(&plot)?;
        let ls = &out.lyapunov;
        write_tsv(
            &plot.join("distance.tsv"),
            "distance",
            ls.iter().map(|s| (s.t, (2.0 * s.h).sqrt())),
        )?;
        write_tsv(
            &plot.join("energy.tsv"),
            "energy",
            ls.iter().map(|s| (s.t, s.energy)),
        )?;
        write_tsv(
            &plot.join("residual.tsv"),
            "residual",
            ls.iter().map(|s| (s.t, s.residual)),
        )?;
    }
    Ok(())
}
