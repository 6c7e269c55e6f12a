//! Oracle, integration and diagnostics for one configured run.

use serde::Serialize;

use crate::diagnostics::{
    constants_for, convergence_report, energy_check, lyapunov_samples, monitor, ConvergenceReport,
    EnergyCheck, Inequality, LemmaConstants, LyapunovSample, RunningIntegrals, ViolationReport,
};
use crate::dynamics::{integrate, IntegratorConfig, TrajectoryRecord};
use crate::error::Result;
use crate::problems::{kkt_oracle, OracleSolution, ProblemInstance};

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum MonitorOutcome {
    Evaluated(ViolationReport),
    Skipped {
        inequality: Inequality,
        reason: String,
    },
}

impl MonitorOutcome {
    pub fn report(&self) -> Option<&ViolationReport> {
        match self {
            MonitorOutcome::Evaluated(r) => Some(r),
            MonitorOutcome::Skipped { .. } => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub instance: ProblemInstance,
    pub oracle: OracleSolution,
    pub constants: LemmaConstants,
    pub record: TrajectoryRecord,
    pub report: ConvergenceReport,
    pub lyapunov: Vec<LyapunovSample>,
    pub monitors: Vec<MonitorOutcome>,
    pub energy: EnergyCheck,
}

impl RunOutcome {
    pub fn monitor(&self, ineq: Inequality) -> Option<&ViolationReport> {
        self.monitors
            .iter()
            .filter_map(MonitorOutcome::report)
            .find(|r| r.inequality == ineq)
    }
}

/// Solves for the zero anchor, integrates with running integrals attached and
/// evaluates every diagnostic. Monitors that cannot run on this record
/// (non-uniform samples, unsupported penalty gap) are reported as skipped.
pub fn execute(instance: ProblemInstance, cfg: &IntegratorConfig) -> Result<RunOutcome> {
    let oracle = kkt_oracle(&instance)?;
    let spec = &instance.spec;
    let mut sink = RunningIntegrals::new(oracle.anchor.x_star.clone());
    let record = integrate(spec, cfg, &mut [&mut sink])?;
    let report = convergence_report(spec, &oracle.anchor, &record)?;
    let constants = constants_for(spec.b());
    let lyapunov = lyapunov_samples(spec, &oracle.anchor, constants.c, &record)?;
    let monitors = Inequality::ALL
        .iter()
        .map(
            |&ineq| match monitor(spec, &oracle.anchor, &constants, &record, ineq) {
                Ok(r) => MonitorOutcome::Evaluated(r),
                Err(e) => MonitorOutcome::Skipped {
                    inequality: ineq,
                    reason: e.to_string(),
                },
            },
        )
        .collect();
    let energy = energy_check(spec, &constants, &record, &lyapunov);
    Ok(RunOutcome {
        instance,
        oracle,
        constants,
        record,
        report,
        lyapunov,
        monitors,
        energy,
    })
}
