//! Output files: per-run traces, ROC curves and metadata, plus the matrix
//! summary table and the violation error channel. All CSV output uses
//! RFC-4180 quoting; every write goes through a sibling temp file and a
//! rename, so readers never observe a partial table.
//!
//! Floats are serialized with the shortest representation that parses back
//! to the same value, which is what makes replayed files byte-identical.

use std::io::Write;
use std::path::{Path, PathBuf};

use ldplab_core::freq::Domain;
use ldplab_core::metrics::{RocPoint, MRE_GAMMA};

use crate::dataset::DatasetSpec;
use crate::error::HarnessError;
use crate::runner::{RunArtifacts, RunOptions, RunSpec, SummaryRecord, ViolationRecord};

/// Metadata layout version; replay refuses files from another version.
pub const META_FORMAT_VERSION: u64 = 1;

/// Column order of `summary.csv`.
pub const SUMMARY_COLUMNS: [&str; 7] =
    ["mechanism", "epsilon", "w", "seed", "mre", "cfpu", "audit_status"];

/// Column order of `violations.csv`.
pub const VIOLATION_COLUMNS: [&str; 6] =
    ["run_id", "audit", "user", "window_end", "observed", "limit"];

pub fn trace_path(dir: &Path, run_id: &str) -> PathBuf {
    dir.join(format!("trace_{run_id}.csv"))
}

pub fn roc_path(dir: &Path, run_id: &str) -> PathBuf {
    dir.join(format!("roc_{run_id}.csv"))
}

pub fn meta_path(dir: &Path, run_id: &str) -> PathBuf {
    dir.join(format!("meta_{run_id}.txt"))
}

pub fn summary_path(dir: &Path) -> PathBuf {
    dir.join("summary.csv")
}

pub fn violations_path(dir: &Path) -> PathBuf {
    dir.join("violations.csv")
}

fn into_bytes(writer: csv::Writer<Vec<u8>>) -> Vec<u8> {
    writer.into_inner().expect("flushing an in-memory csv writer cannot fail")
}

fn write_record<I, F>(writer: &mut csv::Writer<Vec<u8>>, fields: I)
where
    I: IntoIterator<Item = F>,
    F: AsRef<[u8]>,
{
    writer.write_record(fields).expect("writing csv to memory cannot fail");
}

/// One run's trace: step, decision, released and true per-cell
/// frequencies, upload count. Release cells are raw unbiased estimates and
/// may leave `[0, 1]`; clipping is a presentation choice left to readers.
pub fn trace_bytes(domain: &Domain, artifacts: &RunArtifacts) -> Vec<u8> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = vec!["t".into(), "strategy".into()];
    header.extend(domain.labels().iter().map(|l| format!("release_{l}")));
    header.extend(domain.labels().iter().map(|l| format!("truth_{l}")));
    header.push("comm_events".into());
    write_record(&mut writer, &header);
    for (i, strategy) in artifacts.strategies.iter().enumerate() {
        let mut row: Vec<String> = vec![(i + 1).to_string(), strategy.as_str().to_string()];
        row.extend(artifacts.releases[i].0.iter().map(|v| v.to_string()));
        row.extend(artifacts.truths[i].0.iter().map(|v| v.to_string()));
        row.push(artifacts.comm_events[i].to_string());
        write_record(&mut writer, &row);
    }
    into_bytes(writer)
}

/// ROC operating points; header-only when the run had no scorable events
/// (flat monitored truth).
pub fn roc_bytes(roc: Option<&[RocPoint]>) -> Vec<u8> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    write_record(&mut writer, ["fpr", "tpr"]);
    for point in roc.unwrap_or_default() {
        write_record(&mut writer, [point.fpr.to_string(), point.tpr.to_string()]);
    }
    into_bytes(writer)
}

/// Replay metadata: every input the run depends on, in config syntax.
pub fn meta_bytes(spec: &RunSpec, opts: &RunOptions, dataset: &DatasetSpec) -> Vec<u8> {
    let mut pairs: Vec<(&str, String)> = vec![
        ("format_version", META_FORMAT_VERSION.to_string()),
        ("mechanism", spec.mechanism.as_str().to_string()),
        ("epsilon", spec.epsilon.to_string()),
        ("w", spec.w.to_string()),
        ("seed", spec.seed.to_string()),
        ("u_min", opts.u_min.to_string()),
        ("monitor", opts.monitor.as_str().to_string()),
        ("delta_fraction", opts.delta_fraction.to_string()),
        ("gamma", MRE_GAMMA.to_string()),
    ];
    pairs.extend(dataset.meta_pairs());
    let mut out = String::new();
    for (key, value) in pairs {
        out.push_str(key);
        out.push_str(" = ");
        out.push_str(&value);
        out.push('\n');
    }
    out.into_bytes()
}

fn summary_fields(record: &SummaryRecord) -> [String; 7] {
    [
        record.spec.mechanism.as_str().to_string(),
        record.spec.epsilon.to_string(),
        record.spec.w.to_string(),
        record.spec.seed.to_string(),
        record.mre.to_string(),
        record.cfpu.to_string(),
        (if record.audit_pass { "pass" } else { "fail" }).to_string(),
    ]
}

pub fn summary_bytes(records: &[SummaryRecord]) -> Vec<u8> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    write_record(&mut writer, SUMMARY_COLUMNS);
    for record in records {
        write_record(&mut writer, summary_fields(record));
    }
    into_bytes(writer)
}

fn single_line(fields: impl IntoIterator<Item = impl AsRef<[u8]>>) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    write_record(&mut writer, fields);
    let mut line = String::from_utf8(into_bytes(writer)).expect("csv output is utf8");
    while line.ends_with('\n') || line.ends_with('\r') {
        line.pop();
    }
    line
}

/// The summary header exactly as [`summary_bytes`] renders it, without the
/// terminator.
pub fn summary_header_line() -> String {
    single_line(SUMMARY_COLUMNS)
}

/// One summary row exactly as [`summary_bytes`] renders it, without the
/// terminator.
pub fn summary_row_line(record: &SummaryRecord) -> String {
    single_line(summary_fields(record))
}

pub fn violations_bytes(violations: &[ViolationRecord]) -> Vec<u8> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    write_record(&mut writer, VIOLATION_COLUMNS);
    for v in violations {
        write_record(
            &mut writer,
            [
                v.run_id.clone(),
                v.audit.to_string(),
                v.violation.user.to_string(),
                v.violation.window_end.to_string(),
                v.violation.observed.to_string(),
                v.violation.limit.to_string(),
            ],
        );
    }
    into_bytes(writer)
}

/// Writes one run's trace, ROC and metadata files under its own run id.
pub fn write_run_files(
    dir: &Path,
    domain: &Domain,
    spec: &RunSpec,
    opts: &RunOptions,
    dataset: &DatasetSpec,
    artifacts: &RunArtifacts,
) -> Result<(), HarnessError> {
    write_run_files_as(dir, &spec.run_id(), domain, spec, opts, dataset, artifacts)
}

/// Writes one run's files under an explicit id. Replay needs this: its id
/// argument locates the files, while the content follows the metadata even
/// when the two disagree (an edited seed, say).
pub fn write_run_files_as(
    dir: &Path,
    run_id: &str,
    domain: &Domain,
    spec: &RunSpec,
    opts: &RunOptions,
    dataset: &DatasetSpec,
    artifacts: &RunArtifacts,
) -> Result<(), HarnessError> {
    write_atomic(&trace_path(dir, run_id), &trace_bytes(domain, artifacts))?;
    write_atomic(&roc_path(dir, run_id), &roc_bytes(artifacts.roc.as_deref()))?;
    write_atomic(&meta_path(dir, run_id), &meta_bytes(spec, opts, dataset))?;
    Ok(())
}

/// Writes through a temp file in the target's directory, then renames over
/// the target.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.persist(path).map_err(|e| HarnessError::Io(e.error))?;
    Ok(())
}
