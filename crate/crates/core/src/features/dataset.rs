//! Labeled dataset construction from extracted instances.
//!
//! Training sets are balanced by *numbers*: as many distinct benign
//! caller numbers as malicious ones, keeping all of their records.
//! Threshold calibration and first-prediction evaluation instead use
//! every benign record.

use std::collections::HashSet;
use std::io::Write;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::call_log::{CallLog, LabelTable, PhoneId, Province};

use super::stream::{FeatureParams, FeatureStream, RawFeatures};
use super::{FeatureError, FeatureSchema, FeatureSelector};

/// How benign numbers enter a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum Sampling {
    /// As many distinct benign numbers as malicious ones, seeded.
    Balanced { seed: u64 },
    /// Every benign record.
    AllBenign,
}

/// One prediction instance with its provenance.
#[derive(Debug, Clone)]
pub struct Example {
    pub caller: PhoneId,
    pub caller_province: Province,
    pub seq: u64,
    pub call_date: i64,
    pub label: bool,
    pub raw: RawFeatures,
}

/// Every qualifying instance of one log, in stream order.
#[derive(Debug, Clone)]
pub struct ExampleSet {
    pub examples: Vec<Example>,
    pub params: FeatureParams,
}

/// Streams the whole log once and extracts every qualifying instance.
/// An example's label is its caller's label-table entry, independent of
/// how much of the stream precedes it.
pub fn extract_examples(
    log: &CallLog,
    labels: &LabelTable,
    params: FeatureParams,
) -> Result<ExampleSet, FeatureError> {
    let mut stream = FeatureStream::new(log.meta(), params);
    let mut examples = Vec::new();
    for record in log.records() {
        if let Some(raw) = stream.process(record)? {
            examples.push(Example {
                caller: record.caller(),
                // Qualifying records are incoming, so the caller is the
                // other party.
                caller_province: record.other_province.clone(),
                seq: record.seq,
                call_date: record.call_date,
                label: labels.is_malicious(record.caller()),
                raw,
            });
        }
    }
    Ok(ExampleSet { examples, params })
}

/// Encoded matrix with labels and per-row group keys (caller numbers).
#[derive(Debug, Clone)]
pub struct Dataset {
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<bool>,
    pub groups: Vec<PhoneId>,
    pub schema: Arc<FeatureSchema>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn width(&self) -> usize {
        self.schema.width()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }
}

/// Distinct callers in first-appearance order, split by label.
fn distinct_numbers(examples: &[Example]) -> (Vec<PhoneId>, Vec<PhoneId>) {
    let mut seen = HashSet::new();
    let (mut malicious, mut benign) = (Vec::new(), Vec::new());
    for ex in examples {
        if seen.insert(ex.caller) {
            if ex.label {
                malicious.push(ex.caller);
            } else {
                benign.push(ex.caller);
            }
        }
    }
    (malicious, benign)
}

/// Encodes a dataset from instances under a selector and sampling mode.
pub fn build_dataset(
    examples: &[Example],
    selector: &FeatureSelector,
    sampling: Sampling,
) -> Result<Dataset, FeatureError> {
    let schema = Arc::new(FeatureSchema::for_selector(selector)?);
    let keep: Option<HashSet<PhoneId>> = match sampling {
        Sampling::AllBenign => None,
        Sampling::Balanced { seed } => {
            let (malicious, mut benign) = distinct_numbers(examples);
            if malicious.is_empty() {
                return Err(FeatureError::NoMaliciousNumbers);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            benign.shuffle(&mut rng);
            benign.truncate(malicious.len());
            Some(malicious.into_iter().chain(benign).collect())
        }
    };

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut groups = Vec::new();
    let mut buf = Vec::new();
    for ex in examples {
        if let Some(keep) = &keep {
            if !keep.contains(&ex.caller) {
                continue;
            }
        }
        schema.encode_into(&ex.raw, &mut buf);
        rows.push(buf.clone());
        labels.push(ex.label);
        groups.push(ex.caller);
    }
    Ok(Dataset { rows, labels, groups, schema })
}

/// Sidecar description of an exported dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub selector: FeatureSelector,
    pub sampling: Sampling,
    pub schema_fingerprint: u64,
    pub columns: Vec<String>,
    pub rows: usize,
    pub positives: usize,
    pub distinct_numbers: usize,
}

impl DatasetManifest {
    pub fn describe(dataset: &Dataset, selector: &FeatureSelector, sampling: Sampling) -> Self {
        let distinct: HashSet<PhoneId> = dataset.groups.iter().copied().collect();
        DatasetManifest {
            selector: selector.clone(),
            sampling,
            schema_fingerprint: dataset.schema.fingerprint(),
            columns: dataset.schema.column_names(),
            rows: dataset.len(),
            positives: dataset.positives(),
            distinct_numbers: distinct.len(),
        }
    }
}

/// CSV export: header row of schema column names plus `label` and
/// `caller`.
pub fn write_dataset_csv(dataset: &Dataset, mut out: impl Write) -> std::io::Result<()> {
    let mut header = dataset.schema.column_names().join(",");
    header.push_str(",label,caller");
    writeln!(out, "{header}")?;
    for ((row, label), caller) in
        dataset.rows.iter().zip(&dataset.labels).zip(&dataset.groups)
    {
        let mut line = String::with_capacity(row.len() * 8);
        for v in row {
            // Trim integral values for compactness.
            if *v == v.trunc() && v.abs() < 1e15 {
                line.push_str(&format!("{},", *v as i64));
            } else {
                line.push_str(&format!("{v},"));
            }
        }
        writeln!(out, "{line}{},{}", *label as u8, caller)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{generate_log, GeneratorConfig};

    fn tiny_examples() -> ExampleSet {
        let cfg = GeneratorConfig {
            days: 6,
            n_app_users: 25,
            n_benign_others: 80,
            n_malicious: 5,
            malicious_calls_per_number_mean: 20.0,
            malicious_record_fraction_target: 0.05,
            ..GeneratorConfig::default()
        };
        let generated = generate_log(&cfg).unwrap();
        extract_examples(&generated.log, &generated.labels, FeatureParams::default()).unwrap()
    }

    #[test]
    fn balanced_sampling_matches_malicious_number_count() {
        let set = tiny_examples();
        let ds = build_dataset(&set.examples, &FeatureSelector::All, Sampling::Balanced {
            seed: 3,
        })
        .unwrap();
        let (malicious, benign) = {
            let mut m = HashSet::new();
            let mut b = HashSet::new();
            for (g, l) in ds.groups.iter().zip(&ds.labels) {
                if *l {
                    m.insert(*g);
                } else {
                    b.insert(*g);
                }
            }
            (m, b)
        };
        assert_eq!(malicious.len(), 5);
        assert_eq!(benign.len(), 5);
    }

    #[test]
    fn balanced_sampling_is_seed_deterministic() {
        let set = tiny_examples();
        let build =
            |seed| build_dataset(&set.examples, &FeatureSelector::All, Sampling::Balanced { seed })
                .unwrap();
        assert_eq!(build(9).groups, build(9).groups);
        assert_ne!(build(9).groups, build(10).groups);
    }

    #[test]
    fn examples_per_number_match_incoming_record_count() {
        let cfg = GeneratorConfig {
            days: 6,
            n_app_users: 25,
            n_benign_others: 80,
            n_malicious: 5,
            malicious_calls_per_number_mean: 20.0,
            malicious_record_fraction_target: 0.05,
            ..GeneratorConfig::default()
        };
        let generated = generate_log(&cfg).unwrap();
        let set =
            extract_examples(&generated.log, &generated.labels, FeatureParams::default()).unwrap();
        // Recount qualifying records per caller straight from the log.
        let mut expected: std::collections::HashMap<PhoneId, usize> =
            std::collections::HashMap::new();
        for r in generated.log.records() {
            if r.call_type == crate::call_log::CallType::Incoming
                && !generated.log.meta().is_app_user(r.other_phone)
            {
                *expected.entry(r.caller()).or_default() += 1;
            }
        }
        let mut got: std::collections::HashMap<PhoneId, usize> = std::collections::HashMap::new();
        for ex in &set.examples {
            *got.entry(ex.caller).or_default() += 1;
        }
        assert_eq!(expected, got);
    }

    #[test]
    fn all_benign_keeps_every_example() {
        let set = tiny_examples();
        let ds = build_dataset(&set.examples, &FeatureSelector::All, Sampling::AllBenign).unwrap();
        assert_eq!(ds.len(), set.examples.len());
    }

    #[test]
    fn no_malicious_numbers_is_an_error_in_balanced_mode() {
        let set = tiny_examples();
        let benign_only: Vec<Example> =
            set.examples.iter().filter(|e| !e.label).cloned().collect();
        assert!(matches!(
            build_dataset(&benign_only, &FeatureSelector::All, Sampling::Balanced { seed: 0 }),
            Err(FeatureError::NoMaliciousNumbers)
        ));
    }

    #[test]
    fn csv_export_has_header_and_rows() {
        let set = tiny_examples();
        let ds =
            build_dataset(&set.examples, &FeatureSelector::Basic, Sampling::Balanced { seed: 1 })
                .unwrap();
        let mut buf = Vec::new();
        write_dataset_csv(&ds, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        let header = lines.next().unwrap();
        assert!(header.starts_with("is_in_contact,weekday[0],"));
        assert!(header.ends_with("label,caller"));
        assert_eq!(lines.count(), ds.len());
    }
}
