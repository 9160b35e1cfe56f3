//! Turning a resolved config into a simulation run.

use std::path::Path;

use feather_core::policy::{AlwaysAdd, HeuristicPolicy};
use feather_core::simcore::{
    run_simulation, FcfsScheduler, FeatherScheduler, ForcedBatchScheduler, RadixScheduler, Scheduler, TreeOrder,
};
use feather_core::workload::{generate, ingest_trace, Workload};
use feather_core::{BanditPolicy, ChtState, Policy, QPolicy, SimOutput};

use crate::config::{ExperimentConfig, SchedulerKind};
use crate::error::CliError;
use crate::output::{write_csv_file, DecisionRow, RequestRow, Schema, StepRow, SummaryRow};

pub struct RunResult {
    pub summary: SummaryRow,
    pub sim: SimOutput,
}

pub fn load_workload(cfg: &ExperimentConfig) -> Result<Workload, CliError> {
    match (&cfg.trace, &cfg.workload) {
        (Some(path), _) => Ok(ingest_trace(path)?),
        (None, Some(spec)) => Ok(generate(spec)?),
        (None, None) => Err(CliError::Invalid("no workload or trace".into())),
    }
}

fn policy(cfg: &ExperimentConfig) -> Result<Policy, CliError> {
    let invalid = |e: feather_core::policy::PolicyError| CliError::Invalid(e.to_string());
    Ok(match cfg.scheduler {
        SchedulerKind::FeatherHeuristic => Policy::Heuristic(HeuristicPolicy::new(cfg.heuristic)),
        SchedulerKind::FeatherBandit => Policy::Bandit(BanditPolicy::new(cfg.bandit).map_err(invalid)?),
        SchedulerKind::FeatherQ => Policy::Q(QPolicy::new(cfg.qlearn).map_err(invalid)?),
        _ => Policy::Greedy(AlwaysAdd),
    })
}

pub fn build_scheduler(cfg: &ExperimentConfig, workload: &Workload) -> Result<Box<dyn Scheduler<f64>>, CliError> {
    Ok(match cfg.scheduler {
        k if k.is_feather() => {
            let cht = ChtState::with_chunk_size(cfg.chunk());
            Box::new(FeatherScheduler::new(cht, policy(cfg)?).with_rebuild(cfg.rebuild))
        }
        SchedulerKind::Fcfs => Box::new(FcfsScheduler::default()),
        SchedulerKind::Lpm => Box::new(RadixScheduler::new(TreeOrder::LongestPrefixMatch)),
        SchedulerKind::Dfsw => Box::new(RadixScheduler::new(TreeOrder::WeightedDfs)),
        SchedulerKind::Forced => {
            let partition = cfg.forced.ok_or_else(|| CliError::Invalid("forced scheduler without [forced]".into()))?;
            Box::new(ForcedBatchScheduler::new(workload, partition))
        }
        _ => unreachable!("feather kinds handled above"),
    })
}

pub fn run(cfg: &ExperimentConfig) -> Result<RunResult, CliError> {
    let workload = load_workload(cfg)?;
    run_on(cfg, &workload)
}

pub fn run_on(cfg: &ExperimentConfig, workload: &Workload) -> Result<RunResult, CliError> {
    let mut scheduler = build_scheduler(cfg, workload)?;
    let sim = run_simulation(workload, scheduler.as_mut(), &cfg.sim_config())?;
    let summary = SummaryRow::new(cfg.scheduler.as_str(), cfg.seed, &sim.metrics);
    Ok(RunResult { summary, sim })
}

/// Write steps, summary, decisions and requests CSVs into `dir`.
pub fn write_run(dir: &Path, result: &RunResult) -> Result<(), CliError> {
    create_dir(dir)?;
    let steps: Vec<StepRow> = result.sim.steps.iter().map(StepRow::from).collect();
    write_csv_file(&dir.join(Schema::Steps.file_name()), Schema::Steps, &steps)?;
    write_csv_file(&dir.join(Schema::Summary.file_name()), Schema::Summary, std::slice::from_ref(&result.summary))?;
    let decisions: Vec<DecisionRow> = result.sim.decisions.iter().map(DecisionRow::from).collect();
    write_csv_file(&dir.join(Schema::Decisions.file_name()), Schema::Decisions, &decisions)?;
    let requests: Vec<RequestRow> = result.sim.requests.iter().map(RequestRow::from).collect();
    write_csv_file(&dir.join(Schema::Requests.file_name()), Schema::Requests, &requests)?;
    Ok(())
}

pub(crate) fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })
}
