//! Re-execution of a completed run from its metadata file.
//!
//! [`replay`] rebuilds the dataset and mechanism from `meta_<run_id>.txt`,
//! reruns them, and rewrites the run's trace, ROC and metadata files plus
//! its summary row. Determinism makes the rewrite byte-identical as long
//! as the metadata is untouched; an edited metadata file (say a different
//! seed) is honored and changes the outputs.

use std::fmt::Display;
use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ldplab_core::generate::GeneratorKind;
use ldplab_core::metrics::{Monitor, MRE_GAMMA};
use ldplab_core::stream::MechanismKind;

use crate::config::{typed, Entries};
use crate::dataset::DatasetSpec;
use crate::error::HarnessError;
use crate::report;
use crate::runner::{execute_run, RunOptions, RunSpec, SummaryRecord};

/// Reruns `run_id` inside `dir` and rewrites its output files. Returns the
/// regenerated summary row (also upserted into `summary.csv`).
pub fn replay(run_id: &str, dir: &Path) -> Result<SummaryRecord, HarnessError> {
    let meta_path = report::meta_path(dir, run_id);
    let text = fs::read_to_string(&meta_path)
        .map_err(|e| HarnessError::MissingMetadata(format!("{}: {e}", meta_path.display())))?;
    let (spec, opts, dataset_spec) = parse_meta(&text)
        .map_err(|msg| HarnessError::Run(format!("metadata {}: {msg}", meta_path.display())))?;

    let dataset = dataset_spec.realize(spec.seed)?;
    let artifacts = execute_run(&dataset, &spec, &opts)?;
    report::write_run_files_as(dir, run_id, &dataset.domain, &spec, &opts, &dataset_spec, &artifacts)?;
    let record = SummaryRecord {
        spec,
        mre: artifacts.mre,
        cfpu: artifacts.cfpu,
        audit_pass: artifacts.audit_pass(),
    };
    upsert_summary_row(dir, &record)?;
    Ok(record)
}

fn take<T: FromStr>(entries: &mut Entries, key: &str) -> Result<T, String>
where
    T::Err: Display,
{
    let (line, raw) = entries.expect_scalar(key)?;
    typed(line, key, &raw)
}

fn parse_meta(text: &str) -> Result<(RunSpec, RunOptions, DatasetSpec), String> {
    let mut entries = Entries::parse(text)?;
    let version: u64 = take(&mut entries, "format_version")?;
    if version != report::META_FORMAT_VERSION {
        return Err(format!(
            "unsupported format_version {version} (this binary writes {})",
            report::META_FORMAT_VERSION
        ));
    }
    let spec = RunSpec {
        mechanism: take::<MechanismKind>(&mut entries, "mechanism")?,
        epsilon: take::<f64>(&mut entries, "epsilon")?,
        w: take::<u64>(&mut entries, "w")?,
        seed: take::<u64>(&mut entries, "seed")?,
    };
    let opts = RunOptions {
        u_min: take::<u64>(&mut entries, "u_min")?,
        monitor: take::<Monitor>(&mut entries, "monitor")?,
        delta_fraction: take::<f64>(&mut entries, "delta_fraction")?,
    };
    let gamma: f64 = take(&mut entries, "gamma")?;
    if gamma != MRE_GAMMA {
        return Err(format!(
            "metadata declares gamma = {gamma}, but this binary computes MRE with {MRE_GAMMA}"
        ));
    }
    let (_, family) = entries.expect_scalar("dataset")?;
    let dataset = match family.as_str() {
        "lns" => DatasetSpec::Generated {
            users: take(&mut entries, "users")?,
            steps: take(&mut entries, "steps")?,
            kind: GeneratorKind::Lns {
                p0: take(&mut entries, "lns_p0")?,
                step_std: take(&mut entries, "lns_step_std")?,
            },
        },
        "sin" => DatasetSpec::Generated {
            users: take(&mut entries, "users")?,
            steps: take(&mut entries, "steps")?,
            kind: GeneratorKind::Sin {
                amplitude: take(&mut entries, "sin_amplitude")?,
                angular_freq: take(&mut entries, "sin_angular_freq")?,
                offset: take(&mut entries, "sin_offset")?,
            },
        },
        "log" => DatasetSpec::Generated {
            users: take(&mut entries, "users")?,
            steps: take(&mut entries, "steps")?,
            kind: GeneratorKind::Log {
                limit: take(&mut entries, "log_limit")?,
                growth: take(&mut entries, "log_growth")?,
            },
        },
        "csv" => DatasetSpec::File { path: PathBuf::from(entries.expect_scalar("csv_path")?.1) },
        other => return Err(format!("unknown dataset family '{other}'")),
    };
    entries.finish()?;
    Ok((spec, opts, dataset))
}

/// Replaces the record's row in `summary.csv` (matched by the mechanism,
/// epsilon, w, seed key), appending when absent and creating the file when
/// missing. Other rows are copied verbatim, so an untouched file round
/// trips byte-identically.
fn upsert_summary_row(dir: &Path, record: &SummaryRecord) -> Result<(), HarnessError> {
    let path = report::summary_path(dir);
    let header = report::summary_header_line();
    let row = report::summary_row_line(record);
    let mut lines: Vec<String> = match fs::read_to_string(&path) {
        Ok(text) => text.lines().map(str::to_string).collect(),
        Err(e) if e.kind() == ErrorKind::NotFound => vec![header.clone()],
        Err(e) => return Err(e.into()),
    };
    if lines.is_empty() {
        lines.push(header.clone());
    }
    if lines[0] != header {
        return Err(HarnessError::Run(format!(
            "{}: unexpected summary header '{}'",
            path.display(),
            lines[0]
        )));
    }
    // The first four fields identify the run; none of them can contain a
    // comma or quote, so a string prefix match is exact.
    let key_len = row
        .match_indices(',')
        .nth(3)
        .map(|(i, _)| i + 1)
        .expect("summary rows have seven fields");
    let needle = &row[..key_len];
    match lines.iter().skip(1).position(|l| l.starts_with(needle)) {
        Some(i) => lines[i + 1] = row,
        None => lines.push(row),
    }
    let mut text = lines.join("\n");
    text.push('\n');
    report::write_atomic(&path, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config;
    use crate::runner::execute_matrix;

    const CONFIG: &str = "mechanism = lpd\nmechanism = lbd\nepsilon = 1\nw = 3\n\
                          seed = 4\nseed = 5\ndataset = lns\nusers = 60\nsteps = 9\n";

    fn run_matrix(dir: &Path) -> Vec<String> {
        let config = config::parse(CONFIG, dir).unwrap();
        let report = execute_matrix(&config, dir, true).unwrap();
        assert_eq!(report.summaries.len(), 4);
        assert!(report.violations.is_empty());
        report.summaries.iter().map(|r| r.spec.run_id()).collect()
    }

    fn read_outputs(dir: &Path, run_id: &str) -> (Vec<u8>, Vec<u8>, Vec<u8>, Vec<u8>) {
        (
            fs::read(report::trace_path(dir, run_id)).unwrap(),
            fs::read(report::roc_path(dir, run_id)).unwrap(),
            fs::read(report::meta_path(dir, run_id)).unwrap(),
            fs::read(report::summary_path(dir)).unwrap(),
        )
    }

    #[test]
    fn replay_reproduces_every_file_byte_for_byte() {
        let dir = tempfile::tempdir().unwrap();
        let ids = run_matrix(dir.path());
        for run_id in &ids {
            let before = read_outputs(dir.path(), run_id);
            let record = replay(run_id, dir.path()).unwrap();
            assert!(record.audit_pass);
            let after = read_outputs(dir.path(), run_id);
            assert_eq!(before, after, "replay of {run_id} changed an output file");
        }
    }

    #[test]
    fn replay_honors_an_edited_seed() {
        let dir = tempfile::tempdir().unwrap();
        let ids = run_matrix(dir.path());
        let run_id = &ids[0];
        let meta_path = report::meta_path(dir.path(), run_id);
        let trace_before = fs::read(report::trace_path(dir.path(), run_id)).unwrap();
        let edited = fs::read_to_string(&meta_path).unwrap().replace("seed = 4", "seed = 77");
        fs::write(&meta_path, edited).unwrap();
        replay(run_id, dir.path()).unwrap();
        let trace_after = fs::read(report::trace_path(dir.path(), run_id)).unwrap();
        assert_ne!(trace_before, trace_after, "a different seed must change the trace");
    }

    #[test]
    fn replay_without_metadata_is_a_missing_metadata_error() {
        let dir = tempfile::tempdir().unwrap();
        let ids = run_matrix(dir.path());
        fs::remove_file(report::meta_path(dir.path(), &ids[0])).unwrap();
        let err = replay(&ids[0], dir.path()).unwrap_err();
        assert!(matches!(err, HarnessError::MissingMetadata(_)), "{err}");
    }

    #[test]
    fn replay_rejects_foreign_gamma_and_version() {
        let dir = tempfile::tempdir().unwrap();
        let ids = run_matrix(dir.path());
        let meta_path = report::meta_path(dir.path(), &ids[0]);
        let original = fs::read_to_string(&meta_path).unwrap();

        fs::write(&meta_path, original.replace("gamma = 0.001", "gamma = 0.01")).unwrap();
        let err = replay(&ids[0], dir.path()).unwrap_err();
        assert!(err.to_string().contains("gamma"), "{err}");

        fs::write(&meta_path, original.replace("format_version = 1", "format_version = 9"))
            .unwrap();
        let err = replay(&ids[0], dir.path()).unwrap_err();
        assert!(err.to_string().contains("format_version"), "{err}");
    }

    #[test]
    fn summary_upsert_replaces_in_place_and_recreates() {
        let dir = tempfile::tempdir().unwrap();
        let ids = run_matrix(dir.path());
        let summary_before = fs::read_to_string(report::summary_path(dir.path())).unwrap();
        assert_eq!(summary_before.lines().count(), 5);

        // Replaying the second run does not reorder or duplicate rows.
        replay(&ids[1], dir.path()).unwrap();
        let summary_after = fs::read_to_string(report::summary_path(dir.path())).unwrap();
        assert_eq!(summary_before, summary_after);

        // A deleted summary grows back with just the replayed row.
        fs::remove_file(report::summary_path(dir.path())).unwrap();
        replay(&ids[1], dir.path()).unwrap();
        let recreated = fs::read_to_string(report::summary_path(dir.path())).unwrap();
        assert_eq!(recreated.lines().count(), 2);
        assert!(summary_before.contains(recreated.lines().nth(1).unwrap()));
    }
}
