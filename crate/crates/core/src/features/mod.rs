//! The 29 input features and their vector encoding.
//!
//! A prediction instance describes one incoming call to an app user
//! from a non-user caller. Its features split into a *current* block
//! (13 features of the call itself plus counter snapshots taken
//! strictly before it) and a *historic* block (16 per-record features
//! averaged over the caller's prior records). Counter-derived features
//! are *cross-referencing*: they need more than one log record.
//!
//! Encoding: current weekday and hour become one-hot segments, booleans
//! become 0/1, and all counts, durations, gaps, and historic means are
//! log1p-scaled. An auxiliary `history_len` column rides along whenever
//! historic features are selected, so an empty history is
//! distinguishable from true zero means; it is not one of the 29.

mod counters;
mod dataset;
mod stream;

pub use counters::{CounterSnapshot, CounterState};
pub use dataset::{
    build_dataset, extract_examples, write_dataset_csv, Dataset, DatasetManifest, Example,
    ExampleSet, Sampling,
};
pub use stream::{
    aggregate_history, FeatureParams, FeatureStream, HistoricMeans, HistoryRow, RawFeatures,
};

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("record seq {seq} applied out of order (last was seq {last})")]
    OutOfOrder { seq: u64, last: u64 },
    #[error("record seq {seq} is not a prediction instance: {reason}")]
    NotPredictable { seq: u64, reason: String },
    #[error("no malicious numbers available for balanced sampling")]
    NoMaliciousNumbers,
    #[error("invalid feature selection: {0}")]
    InvalidSelector(String),
}

/// One of the 29 named input features, plus the auxiliary history-length
/// column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FeatureId {
    IsInContact,
    Weekday,
    Hour,
    SameLocation,
    CallerOuts,
    CallerIns,
    CallerOutdegree,
    CallerIndegree,
    CalleeOuts,
    CalleeIns,
    CalleeOutdegree,
    CalleeIndegree,
    NCall,
    HistIsInContact,
    HistCallType,
    HistDuration,
    HistWeekday,
    HistHour,
    HistSameLocation,
    HistCallerOuts,
    HistCallerIns,
    HistCallerOutdegree,
    HistCallerIndegree,
    HistCalleeOuts,
    HistCalleeIns,
    HistCalleeOutdegree,
    HistCalleeIndegree,
    HistIsRedial,
    HistGapToNext,
    /// Auxiliary: number of history records behind the historic means.
    HistoryLen,
}

use FeatureId::*;

/// The current block, in canonical order.
pub const CURRENT_FEATURES: [FeatureId; 13] = [
    IsInContact,
    Weekday,
    Hour,
    SameLocation,
    CallerOuts,
    CallerIns,
    CallerOutdegree,
    CallerIndegree,
    CalleeOuts,
    CalleeIns,
    CalleeOutdegree,
    CalleeIndegree,
    NCall,
];

/// The historic block, in canonical order.
pub const HISTORIC_FEATURES: [FeatureId; 16] = [
    HistIsInContact,
    HistCallType,
    HistDuration,
    HistWeekday,
    HistHour,
    HistSameLocation,
    HistCallerOuts,
    HistCallerIns,
    HistCallerOutdegree,
    HistCallerIndegree,
    HistCalleeOuts,
    HistCalleeIns,
    HistCalleeOutdegree,
    HistCalleeIndegree,
    HistIsRedial,
    HistGapToNext,
];

impl FeatureId {
    /// All 29 named features in canonical order (current then historic).
    pub fn roster() -> impl Iterator<Item = FeatureId> {
        CURRENT_FEATURES.into_iter().chain(HISTORIC_FEATURES)
    }

    pub fn name(self) -> &'static str {
        match self {
            IsInContact => "is_in_contact",
            Weekday => "weekday",
            Hour => "hour",
            SameLocation => "same_location",
            CallerOuts => "caller_outs",
            CallerIns => "caller_ins",
            CallerOutdegree => "caller_outdegree",
            CallerIndegree => "caller_indegree",
            CalleeOuts => "callee_outs",
            CalleeIns => "callee_ins",
            CalleeOutdegree => "callee_outdegree",
            CalleeIndegree => "callee_indegree",
            NCall => "n_call",
            HistIsInContact => "hist_is_in_contact",
            HistCallType => "hist_call_type",
            HistDuration => "hist_duration",
            HistWeekday => "hist_weekday",
            HistHour => "hist_hour",
            HistSameLocation => "hist_same_location",
            HistCallerOuts => "hist_caller_outs",
            HistCallerIns => "hist_caller_ins",
            HistCallerOutdegree => "hist_caller_outdegree",
            HistCallerIndegree => "hist_caller_indegree",
            HistCalleeOuts => "hist_callee_outs",
            HistCalleeIns => "hist_callee_ins",
            HistCalleeOutdegree => "hist_callee_outdegree",
            HistCalleeIndegree => "hist_callee_indegree",
            HistIsRedial => "hist_is_redial",
            HistGapToNext => "hist_gap_to_next",
            HistoryLen => "history_len",
        }
    }

    pub fn from_name(name: &str) -> Option<FeatureId> {
        FeatureId::roster().chain([HistoryLen]).find(|f| f.name() == name)
    }

    pub fn is_historic(self) -> bool {
        matches!(
            self,
            HistIsInContact
                | HistCallType
                | HistDuration
                | HistWeekday
                | HistHour
                | HistSameLocation
                | HistCallerOuts
                | HistCallerIns
                | HistCallerOutdegree
                | HistCallerIndegree
                | HistCalleeOuts
                | HistCalleeIns
                | HistCalleeOutdegree
                | HistCalleeIndegree
                | HistIsRedial
                | HistGapToNext
                | HistoryLen
        )
    }

    /// Cross-referencing features need more than one log record.
    pub fn is_crossref(self) -> bool {
        matches!(
            self,
            CallerOuts
                | CallerIns
                | CallerOutdegree
                | CallerIndegree
                | CalleeOuts
                | CalleeIns
                | CalleeOutdegree
                | CalleeIndegree
                | NCall
                | HistCallerOuts
                | HistCallerIns
                | HistCallerOutdegree
                | HistCallerIndegree
                | HistCalleeOuts
                | HistCalleeIns
                | HistCalleeOutdegree
                | HistCalleeIndegree
                | HistIsRedial
                | HistGapToNext
        )
    }
}

impl fmt::Display for FeatureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for FeatureId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for FeatureId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        FeatureId::from_name(&s)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown feature {s:?}")))
    }
}

/// Named feature subsets for ablations and the top-10 analysis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "features")]
pub enum FeatureSelector {
    /// All 29 features.
    All,
    /// The 13 current-call features.
    NoHistoric,
    /// The 10 static features (4 current + 6 historic).
    NoCrossref,
    /// The 4 static current-call features.
    Basic,
    Top10(Vec<FeatureId>),
    Custom(Vec<FeatureId>),
}

impl FeatureSelector {
    /// The selected named features in canonical order. The auxiliary
    /// history-length column is not part of this set.
    pub fn features(&self) -> Result<Vec<FeatureId>, FeatureError> {
        let chosen: Vec<FeatureId> = match self {
            FeatureSelector::All => FeatureId::roster().collect(),
            FeatureSelector::NoHistoric => {
                FeatureId::roster().filter(|f| !f.is_historic()).collect()
            }
            FeatureSelector::NoCrossref => {
                FeatureId::roster().filter(|f| !f.is_crossref()).collect()
            }
            FeatureSelector::Basic => FeatureId::roster()
                .filter(|f| !f.is_historic() && !f.is_crossref())
                .collect(),
            FeatureSelector::Top10(list) | FeatureSelector::Custom(list) => {
                if list.contains(&HistoryLen) {
                    return Err(FeatureError::InvalidSelector(
                        "history_len is auxiliary and cannot be selected".into(),
                    ));
                }
                let set: std::collections::BTreeSet<FeatureId> = list.iter().copied().collect();
                if set.len() != list.len() {
                    return Err(FeatureError::InvalidSelector("duplicate features".into()));
                }
                if matches!(self, FeatureSelector::Top10(_)) && set.len() != 10 {
                    return Err(FeatureError::InvalidSelector(format!(
                        "top-10 selector needs exactly 10 features, got {}",
                        set.len()
                    )));
                }
                if set.is_empty() {
                    return Err(FeatureError::InvalidSelector("empty feature set".into()));
                }
                FeatureId::roster().filter(|f| set.contains(f)).collect()
            }
        };
        Ok(chosen)
    }

    /// Short table label.
    pub fn label(&self) -> &'static str {
        match self {
            FeatureSelector::All => "All",
            FeatureSelector::NoHistoric => "-His",
            FeatureSelector::NoCrossref => "-CR",
            FeatureSelector::Basic => "Basic",
            FeatureSelector::Top10(_) => "Top-10",
            FeatureSelector::Custom(_) => "Custom",
        }
    }
}

/// How one feature maps onto vector columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    Bool,
    OneHot(usize),
    Log1p,
}

impl Encoding {
    pub fn width(self) -> usize {
        match self {
            Encoding::Bool | Encoding::Log1p => 1,
            Encoding::OneHot(k) => k,
        }
    }
}

fn encoding_of(feature: FeatureId) -> Encoding {
    match feature {
        IsInContact | SameLocation => Encoding::Bool,
        Weekday => Encoding::OneHot(7),
        Hour => Encoding::OneHot(24),
        _ => Encoding::Log1p,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaEntry {
    pub feature: FeatureId,
    pub encoding: Encoding,
    pub offset: usize,
}

/// Deterministic column layout for a feature selection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    entries: Vec<SchemaEntry>,
    width: usize,
}

impl FeatureSchema {
    pub fn for_selector(selector: &FeatureSelector) -> Result<FeatureSchema, FeatureError> {
        let mut features = selector.features()?;
        if features.iter().any(|f| f.is_historic()) {
            features.push(HistoryLen);
        }
        let mut entries = Vec::with_capacity(features.len());
        let mut offset = 0;
        for feature in features {
            let encoding = encoding_of(feature);
            entries.push(SchemaEntry { feature, encoding, offset });
            offset += encoding.width();
        }
        Ok(FeatureSchema { entries, width: offset })
    }

    pub fn entries(&self) -> &[SchemaEntry] {
        &self.entries
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Stable hash of the layout; models refuse vectors from a different
    /// schema.
    pub fn fingerprint(&self) -> u64 {
        // FNV-1a, chosen for stability across platforms and runs.
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                hash ^= b as u64;
                hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for entry in &self.entries {
            eat(entry.feature.name().as_bytes());
            eat(&(entry.encoding.width() as u64).to_le_bytes());
            eat(&(entry.offset as u64).to_le_bytes());
        }
        hash
    }

    /// One name per vector column; one-hot columns are `name[i]`.
    pub fn column_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.width);
        for entry in &self.entries {
            match entry.encoding {
                Encoding::OneHot(k) => {
                    names.extend((0..k).map(|i| format!("{}[{i}]", entry.feature.name())))
                }
                _ => names.push(entry.feature.name().to_string()),
            }
        }
        names
    }

    /// The named feature a column belongs to.
    pub fn feature_of_column(&self, column: usize) -> Option<FeatureId> {
        self.entries
            .iter()
            .find(|e| column >= e.offset && column < e.offset + e.encoding.width())
            .map(|e| e.feature)
    }

    pub fn encode_into(&self, raw: &RawFeatures, out: &mut Vec<f64>) {
        out.clear();
        out.resize(self.width, 0.0);
        for entry in &self.entries {
            let v = raw.value(entry.feature);
            match entry.encoding {
                Encoding::Bool => out[entry.offset] = v,
                Encoding::OneHot(k) => {
                    let idx = (v as usize).min(k - 1);
                    out[entry.offset + idx] = 1.0;
                }
                Encoding::Log1p => out[entry.offset] = v.ln_1p(),
            }
        }
    }

    pub fn encode(&self, raw: &RawFeatures) -> Vec<f64> {
        let mut out = Vec::new();
        self.encode_into(raw, &mut out);
        out
    }

    /// Recovers per-feature raw values from an encoded vector: booleans
    /// and one-hot categories exactly, log1p numerics via expm1.
    pub fn decode(&self, values: &[f64]) -> Vec<(FeatureId, f64)> {
        self.entries
            .iter()
            .map(|entry| {
                let v = match entry.encoding {
                    Encoding::Bool => values[entry.offset],
                    Encoding::OneHot(k) => {
                        let seg = &values[entry.offset..entry.offset + k];
                        seg.iter().position(|&x| x == 1.0).unwrap_or(0) as f64
                    }
                    Encoding::Log1p => values[entry.offset].exp_m1(),
                };
                (entry.feature, v)
            })
            .collect()
    }
}

/// A dense encoded vector together with its layout.
#[derive(Debug, Clone)]
pub struct EncodedVector {
    pub values: Vec<f64>,
    pub schema: Arc<FeatureSchema>,
}

/// Encodes one instance under a selector.
pub fn encode(raw: &RawFeatures, selector: &FeatureSelector) -> Result<EncodedVector, FeatureError> {
    let schema = Arc::new(FeatureSchema::for_selector(selector)?);
    let values = schema.encode(raw);
    Ok(EncodedVector { values, schema })
}
