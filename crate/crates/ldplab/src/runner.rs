//! Run execution: one (mechanism, epsilon, w, seed) cell of the matrix,
//! and the parallel sweep over a whole config with per-run output files.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;

use ldplab_core::audit::{audit_once_per_window, audit_window_budget, AuditOutcome, Violation};
use ldplab_core::error::Error as CoreError;
use ldplab_core::freq::Histogram;
use ldplab_core::metrics::{cfpu, event_roc, mre, Monitor, RocPoint};
use ldplab_core::seed::{sub_seed, STREAM_MECHANISM};
use ldplab_core::stream::{
    build_mechanism, true_histogram, MechanismConfig, MechanismKind, StreamSnapshot, Strategy,
};

use crate::config::{RunConfig, DEFAULT_DELTA_FRACTION};
use crate::dataset::{Dataset, DatasetSpec};
use crate::error::HarnessError;
use crate::report;

/// One cell of the run matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunSpec {
    pub mechanism: MechanismKind,
    pub epsilon: f64,
    pub w: u64,
    pub seed: u64,
}

impl RunSpec {
    /// Stable identifier naming this run's output files.
    pub fn run_id(&self) -> String {
        format!("{}_e{}_w{}_s{}", self.mechanism.as_str(), self.epsilon, self.w, self.seed)
    }
}

/// Analysis knobs shared by every run of a matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunOptions {
    pub u_min: u64,
    pub monitor: Monitor,
    pub delta_fraction: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { u_min: 1, monitor: Monitor::Mean, delta_fraction: DEFAULT_DELTA_FRACTION }
    }
}

impl From<&RunConfig> for RunOptions {
    fn from(config: &RunConfig) -> Self {
        Self {
            u_min: config.u_min,
            monitor: config.monitor,
            delta_fraction: config.delta_fraction,
        }
    }
}

/// Everything one run produced, before serialization.
#[derive(Debug)]
pub struct RunArtifacts {
    pub truths: Vec<Histogram>,
    pub releases: Vec<Histogram>,
    pub strategies: Vec<Strategy>,
    pub comm_events: Vec<u64>,
    pub mre: f64,
    pub cfpu: f64,
    pub budget_audit: AuditOutcome,
    /// Present only for the sampling mechanisms; budget-division ones
    /// contact everyone every step by design.
    pub participation_audit: Option<AuditOutcome>,
    /// None when the monitored true series is flat (no events to score).
    pub roc: Option<Vec<RocPoint>>,
}

impl RunArtifacts {
    pub fn audit_pass(&self) -> bool {
        self.budget_audit.passed()
            && self.participation_audit.as_ref().is_none_or(AuditOutcome::passed)
    }

    /// Failed audits as (audit name, violation) pairs for the error channel.
    pub fn violations(&self) -> Vec<(&'static str, Violation)> {
        let mut out = Vec::new();
        if let AuditOutcome::Fail(v) = self.budget_audit {
            out.push(("window_budget", v));
        }
        if let Some(AuditOutcome::Fail(v)) = self.participation_audit {
            out.push(("once_per_window", v));
        }
        out
    }
}

fn run_fail(spec: &RunSpec, e: CoreError) -> HarnessError {
    HarnessError::Run(format!("run {}: {e}", spec.run_id()))
}

/// Streams the dataset through the mechanism, then computes metrics, runs
/// both audits and builds the ROC. Deterministic in (dataset, spec, opts).
pub fn execute_run(
    dataset: &Dataset,
    spec: &RunSpec,
    opts: &RunOptions,
) -> Result<RunArtifacts, HarnessError> {
    let d = dataset.domain.d();
    let config = MechanismConfig {
        epsilon: spec.epsilon,
        w: spec.w,
        d,
        n: dataset.n,
        u_min: opts.u_min,
        seed: sub_seed(spec.seed, STREAM_MECHANISM),
    };
    let mut mechanism = build_mechanism(spec.mechanism, config).map_err(|e| run_fail(spec, e))?;

    let t_len = dataset.steps.len();
    let mut truths = Vec::with_capacity(t_len);
    let mut releases = Vec::with_capacity(t_len);
    let mut strategies = Vec::with_capacity(t_len);
    let mut comm_events = Vec::with_capacity(t_len);
    let mut spends = Vec::with_capacity(t_len);
    for (i, values) in dataset.steps.iter().enumerate() {
        let snapshot = StreamSnapshot { t: i as u64 + 1, values };
        let outcome = mechanism.step(&snapshot).map_err(|e| run_fail(spec, e))?;
        truths.push(true_histogram(values, d).map_err(|e| run_fail(spec, e))?);
        releases.push(outcome.release);
        strategies.push(outcome.strategy);
        comm_events.push(outcome.comm_events);
        spends.push(outcome.budget_spent);
    }

    let run_mre = mre(&releases, &truths).map_err(|e| run_fail(spec, e))?;
    let run_cfpu = cfpu(&comm_events, dataset.n).map_err(|e| run_fail(spec, e))?;
    let budget_audit = audit_window_budget(&spends, dataset.n, spec.w, spec.epsilon)
        .map_err(|e| run_fail(spec, e))?;
    let participation_audit = if spec.mechanism.samples_users() {
        Some(audit_once_per_window(&spends, dataset.n, spec.w).map_err(|e| run_fail(spec, e))?)
    } else {
        None
    };
    let roc = match event_roc(&releases, &truths, opts.monitor, opts.delta_fraction) {
        Ok(points) => Some(points),
        Err(CoreError::DegenerateSeries) => None,
        Err(e) => return Err(run_fail(spec, e)),
    };

    Ok(RunArtifacts {
        truths,
        releases,
        strategies,
        comm_events,
        mre: run_mre,
        cfpu: run_cfpu,
        budget_audit,
        participation_audit,
        roc,
    })
}

/// All cells of the config's matrix: mechanisms outermost, then epsilons,
/// windows and seeds innermost. Summary rows keep this order.
pub fn matrix(config: &RunConfig) -> Vec<RunSpec> {
    let mut specs = Vec::new();
    for &mechanism in &config.mechanisms {
        for &epsilon in &config.epsilons {
            for &w in &config.windows {
                for &seed in &config.seeds {
                    specs.push(RunSpec { mechanism, epsilon, w, seed });
                }
            }
        }
    }
    specs
}

/// One summary row.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRecord {
    pub spec: RunSpec,
    pub mre: f64,
    pub cfpu: f64,
    pub audit_pass: bool,
}

/// One audit-violation row for the CSV error channel.
#[derive(Clone, Debug, PartialEq)]
pub struct ViolationRecord {
    pub run_id: String,
    pub audit: &'static str,
    pub violation: Violation,
}

/// What a matrix execution produced.
pub struct MatrixReport {
    /// Completed runs in matrix order. Under fail-fast, cells scheduled
    /// after the first violation are absent.
    pub summaries: Vec<SummaryRecord>,
    pub violations: Vec<ViolationRecord>,
    /// Cells skipped by fail-fast.
    pub skipped: usize,
}

/// Executes every cell in parallel, writing per-run files as runs finish
/// and the summary and violation tables at the end. Violations are data
/// here; the caller decides whether they are fatal.
pub fn execute_matrix(
    config: &RunConfig,
    out_dir: &Path,
    fail_fast: bool,
) -> Result<MatrixReport, HarnessError> {
    std::fs::create_dir_all(out_dir)?;
    let specs = matrix(config);
    let opts = RunOptions::from(config);
    let datasets = realize_datasets(config)?;
    let abort = AtomicBool::new(false);
    let done: Mutex<Vec<(usize, SummaryRecord, Vec<ViolationRecord>)>> = Mutex::new(Vec::new());

    specs
        .par_iter()
        .enumerate()
        .try_for_each(|(index, spec)| -> Result<(), HarnessError> {
            if abort.load(Ordering::Relaxed) {
                return Ok(());
            }
            let dataset = &datasets[&spec.seed];
            let artifacts = execute_run(dataset, spec, &opts)?;
            report::write_run_files(out_dir, &dataset.domain, spec, &opts, &config.dataset, &artifacts)?;
            let record = SummaryRecord {
                spec: *spec,
                mre: artifacts.mre,
                cfpu: artifacts.cfpu,
                audit_pass: artifacts.audit_pass(),
            };
            let run_id = spec.run_id();
            let violations: Vec<ViolationRecord> = artifacts
                .violations()
                .into_iter()
                .map(|(audit, violation)| ViolationRecord { run_id: run_id.clone(), audit, violation })
                .collect();
            if fail_fast && !violations.is_empty() {
                abort.store(true, Ordering::Relaxed);
            }
            done.lock().expect("no panics while holding the lock").push((index, record, violations));
            Ok(())
        })?;

    let mut done = done.into_inner().expect("no panics while holding the lock");
    done.sort_by_key(|(index, ..)| *index);
    let completed = done.len();
    let mut summaries = Vec::with_capacity(completed);
    let mut violations = Vec::new();
    for (_, record, mut v) in done {
        summaries.push(record);
        violations.append(&mut v);
    }
    report::write_atomic(&report::summary_path(out_dir), &report::summary_bytes(&summaries))?;
    report::write_atomic(&report::violations_path(out_dir), &report::violations_bytes(&violations))?;
    Ok(MatrixReport { summaries, violations, skipped: specs.len() - completed })
}

/// One dataset per distinct seed; a file dataset is loaded once and shared.
fn realize_datasets(config: &RunConfig) -> Result<BTreeMap<u64, Arc<Dataset>>, HarnessError> {
    let mut map = BTreeMap::new();
    match &config.dataset {
        DatasetSpec::File { .. } => {
            let shared = Arc::new(config.dataset.realize(0)?);
            for &seed in &config.seeds {
                map.insert(seed, Arc::clone(&shared));
            }
        }
        DatasetSpec::Generated { .. } => {
            for &seed in &config.seeds {
                map.insert(seed, Arc::new(config.dataset.realize(seed)?));
            }
        }
    }
    Ok(map)
}
