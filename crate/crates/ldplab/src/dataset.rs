//! Dataset realization: synthetic binary streams or file-backed trajectories.
//!
//! File datasets are CSV with the exact header `user_id,timestamp,value`.
//! Timestamps are 1-based and the horizon is the largest one present.
//! Every user must have a row at timestamp 1; later gaps carry the last
//! reported value forward. The value domain is the sorted set of distinct
//! labels in the file and users are indexed in sorted id order, so loading
//! is independent of row order.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use ldplab_core::freq::Domain;
use ldplab_core::generate::{generate, GeneratorKind, GeneratorSpec};
use ldplab_core::seed::{sub_seed, STREAM_DATASET};
use ldplab_core::stream::ValueIndex;

use crate::error::HarnessError;

/// Where runs get their data.
#[derive(Clone, Debug, PartialEq)]
pub enum DatasetSpec {
    /// Synthetic binary streams driven by a probability-path family.
    Generated { kind: GeneratorKind, users: u64, steps: u64 },
    /// Trajectories read from a CSV file (absolute path).
    File { path: PathBuf },
}

/// Mechanism-ready data: a fixed population observed over steps `1..=t_len`.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub domain: Domain,
    pub n: u64,
    pub t_len: u64,
    /// `steps[t - 1][u]` is user `u`'s value at step `t`.
    pub steps: Vec<Vec<ValueIndex>>,
}

impl DatasetSpec {
    /// Materializes the data one run sees. Generated specs derive the
    /// dataset sub-seed from the run seed, so every run with the same seed
    /// sees the same dataset and cross-mechanism comparisons stay paired;
    /// file specs ignore the seed.
    pub fn realize(&self, run_seed: u64) -> Result<Dataset, HarnessError> {
        match self {
            DatasetSpec::Generated { kind, users, steps } => {
                let spec = GeneratorSpec {
                    kind: *kind,
                    t_len: *steps,
                    n: *users,
                    seed: sub_seed(run_seed, STREAM_DATASET),
                };
                let steps = generate(&spec)
                    .map_err(|e| HarnessError::Run(format!("dataset synthesis: {e}")))?;
                Ok(Dataset { domain: Domain::binary(), n: *users, t_len: spec.t_len, steps })
            }
            DatasetSpec::File { path } => load_csv(path),
        }
    }

    /// Key-value pairs a replay needs to rebuild this spec exactly.
    /// Defaults are materialized so a later default change cannot silently
    /// shift what an old run replays to.
    pub fn meta_pairs(&self) -> Vec<(&'static str, String)> {
        match self {
            DatasetSpec::Generated { kind, users, steps } => {
                let family = match kind {
                    GeneratorKind::Lns { .. } => "lns",
                    GeneratorKind::Sin { .. } => "sin",
                    GeneratorKind::Log { .. } => "log",
                };
                let mut pairs = vec![
                    ("dataset", family.to_string()),
                    ("users", users.to_string()),
                    ("steps", steps.to_string()),
                ];
                match kind {
                    GeneratorKind::Lns { p0, step_std } => {
                        pairs.push(("lns_p0", p0.to_string()));
                        pairs.push(("lns_step_std", step_std.to_string()));
                    }
                    GeneratorKind::Sin { amplitude, angular_freq, offset } => {
                        pairs.push(("sin_amplitude", amplitude.to_string()));
                        pairs.push(("sin_angular_freq", angular_freq.to_string()));
                        pairs.push(("sin_offset", offset.to_string()));
                    }
                    GeneratorKind::Log { limit, growth } => {
                        pairs.push(("log_limit", limit.to_string()));
                        pairs.push(("log_growth", growth.to_string()));
                    }
                }
                pairs
            }
            DatasetSpec::File { path } => vec![
                ("dataset", "csv".to_string()),
                ("csv_path", path.display().to_string()),
            ],
        }
    }
}

fn load_csv(path: &Path) -> Result<Dataset, HarnessError> {
    let fail = |msg: String| HarnessError::DatasetLoad(format!("{}: {msg}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(|e| fail(e.to_string()))?;
    {
        let headers = reader.headers().map_err(|e| fail(e.to_string()))?;
        let expected = ["user_id", "timestamp", "value"];
        if headers.len() != 3 || headers.iter().zip(expected).any(|(h, e)| h != e) {
            return Err(fail(format!(
                "header must be exactly 'user_id,timestamp,value', got '{}'",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
    }

    let mut rows: BTreeMap<String, BTreeMap<u64, String>> = BTreeMap::new();
    let mut labels: BTreeSet<String> = BTreeSet::new();
    let mut t_len = 0u64;
    for record in reader.records() {
        let record = record.map_err(|e| fail(e.to_string()))?;
        let at = record.position().map_or(0, |p| p.line());
        if record.len() != 3 {
            return Err(fail(format!("line {at}: expected 3 fields, got {}", record.len())));
        }
        let t: u64 = record[1]
            .parse()
            .map_err(|e| fail(format!("line {at}: timestamp '{}': {e}", &record[1])))?;
        if t == 0 {
            return Err(fail(format!("line {at}: timestamps are 1-based")));
        }
        t_len = t_len.max(t);
        labels.insert(record[2].to_string());
        let previous = rows
            .entry(record[0].to_string())
            .or_default()
            .insert(t, record[2].to_string());
        if previous.is_some() {
            return Err(fail(format!(
                "line {at}: duplicate observation for user '{}' at timestamp {t}",
                &record[0]
            )));
        }
    }

    if rows.is_empty() {
        return Err(fail("no data rows".to_string()));
    }
    if labels.len() < 2 {
        return Err(fail(format!(
            "found {} distinct value(s); a frequency domain needs at least 2",
            labels.len()
        )));
    }
    if labels.len() > usize::from(ValueIndex::MAX) + 1 {
        return Err(fail(format!("{} distinct values exceed the value-index space", labels.len())));
    }
    let n = rows.len() as u64;
    if n > u32::MAX as u64 {
        return Err(fail(format!("{n} users exceed the u32 user-index space")));
    }

    let domain =
        Domain::new(labels.into_iter().collect()).map_err(|e| fail(e.to_string()))?;
    let mut steps = vec![vec![0 as ValueIndex; rows.len()]; t_len as usize];
    for (u, (user, times)) in rows.iter().enumerate() {
        if !times.contains_key(&1) {
            return Err(fail(format!(
                "user '{user}' first appears at timestamp {}; every stream must start at 1",
                times.keys().next().expect("user has at least one row")
            )));
        }
        let mut current: ValueIndex = 0;
        for t in 1..=t_len {
            if let Some(label) = times.get(&t) {
                let index = domain.index_of(label).expect("label was collected into the domain");
                current = index as ValueIndex;
            }
            steps[(t - 1) as usize][u] = current;
        }
    }
    Ok(Dataset { domain, n, t_len, steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn csv_file(content: &str) -> tempfile::NamedTempFile {
        let mut file = tempfile::NamedTempFile::new().expect("temp file");
        file.write_all(content.as_bytes()).expect("write");
        file
    }

    fn load(content: &str) -> Result<Dataset, HarnessError> {
        let file = csv_file(content);
        DatasetSpec::File { path: file.path().to_path_buf() }.realize(0)
    }

    #[test]
    fn generated_dataset_shape_and_determinism() {
        let spec = DatasetSpec::Generated {
            kind: GeneratorKind::default_lns(),
            users: 50,
            steps: 7,
        };
        let a = spec.realize(42).unwrap();
        assert_eq!(a.n, 50);
        assert_eq!(a.t_len, 7);
        assert_eq!(a.steps.len(), 7);
        assert!(a.steps.iter().all(|col| col.len() == 50));
        assert_eq!(a.domain.labels(), ["0".to_string(), "1".to_string()]);
        let b = spec.realize(42).unwrap();
        assert_eq!(a.steps, b.steps);
        let c = spec.realize(43).unwrap();
        assert_ne!(a.steps, c.steps);
    }

    #[test]
    fn csv_load_orders_fills_and_measures() {
        // Users and labels arrive unsorted; 'bob' skips t=2 and must carry
        // 'no' forward; horizon is the largest timestamp anywhere.
        let data = load(
            "user_id,timestamp,value\n\
             bob,1,no\n\
             alice,1,yes\n\
             alice,2,no\n\
             alice,3,yes\n\
             bob,3,yes\n",
        )
        .unwrap();
        assert_eq!(data.n, 2);
        assert_eq!(data.t_len, 3);
        assert_eq!(data.domain.labels(), ["no".to_string(), "yes".to_string()]);
        // User order is alice, bob; label indices are no=0, yes=1.
        assert_eq!(data.steps[0], vec![1, 0]);
        assert_eq!(data.steps[1], vec![0, 0]);
        assert_eq!(data.steps[2], vec![1, 1]);
    }

    #[test]
    fn csv_rejects_wrong_header() {
        let err = load("user,timestamp,value\nu1,1,a\nu1,2,b\n").unwrap_err();
        assert!(err.to_string().contains("header"), "{err}");
        assert!(matches!(err, HarnessError::DatasetLoad(_)));
    }

    #[test]
    fn csv_rejects_duplicate_observation() {
        let err = load(
            "user_id,timestamp,value\nu1,1,a\nu1,1,b\nu2,1,b\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("duplicate observation"), "{err}");
    }

    #[test]
    fn csv_rejects_late_first_appearance() {
        let err = load(
            "user_id,timestamp,value\nu1,1,a\nu1,2,b\nu2,2,b\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("first appears at timestamp 2"), "{err}");
    }

    #[test]
    fn csv_rejects_degenerate_shapes() {
        let err = load("user_id,timestamp,value\n").unwrap_err();
        assert!(err.to_string().contains("no data rows"), "{err}");
        let err = load("user_id,timestamp,value\nu1,1,a\nu2,1,a\n").unwrap_err();
        assert!(err.to_string().contains("at least 2"), "{err}");
        let err = load("user_id,timestamp,value\nu1,0,a\nu1,1,b\n").unwrap_err();
        assert!(err.to_string().contains("1-based"), "{err}");
        let err = load("user_id,timestamp,value\nu1,x,a\n").unwrap_err();
        assert!(err.to_string().contains("timestamp 'x'"), "{err}");
    }

    #[test]
    fn missing_file_is_a_load_error() {
        let err = DatasetSpec::File { path: PathBuf::from("/nonexistent/streams.csv") }
            .realize(0)
            .unwrap_err();
        assert!(matches!(err, HarnessError::DatasetLoad(_)));
    }

    #[test]
    fn meta_pairs_round_out_defaults() {
        let spec = DatasetSpec::Generated {
            kind: GeneratorKind::default_log(),
            users: 10,
            steps: 5,
        };
        let pairs = spec.meta_pairs();
        assert!(pairs.contains(&("dataset", "log".to_string())));
        assert!(pairs.contains(&("log_limit", "0.25".to_string())));
        assert!(pairs.contains(&("log_growth", "0.01".to_string())));
    }
}
