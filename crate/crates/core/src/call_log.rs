//! The anonymized call-record data model and ordered-log storage.
//!
//! One [`CallRecord`] is written from the perspective of an app user:
//! `user_id` is always the app-side party and `call_type` says whether
//! the user received or made the call. The other party is identified by
//! an opaque 32-hex-character id plus its province prefix. A call
//! between two app users appears twice in a log, once per side.
//!
//! Logs are totally ordered by `(call_date, seq)`; every "before the
//! record" computation in the feature engine relies on that order.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Opaque 32-hex-character phone identifier (a salted-hash stand-in).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PhoneId([u8; 16]);

impl PhoneId {
    pub fn from_bytes(bytes: [u8; 16]) -> Self {
        PhoneId(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 16] {
        &self.0
    }

    /// Parses exactly 32 lowercase hex characters.
    pub fn parse(s: &str) -> Result<Self, LogError> {
        let bytes = s.as_bytes();
        if bytes.len() != 32 {
            return Err(LogError::InvalidPhoneId(s.to_string()));
        }
        let mut out = [0u8; 16];
        for (i, chunk) in bytes.chunks_exact(2).enumerate() {
            let hi = hex_val(chunk[0]).ok_or_else(|| LogError::InvalidPhoneId(s.to_string()))?;
            let lo = hex_val(chunk[1]).ok_or_else(|| LogError::InvalidPhoneId(s.to_string()))?;
            out[i] = (hi << 4) | lo;
        }
        Ok(PhoneId(out))
    }

    pub fn to_hex(&self) -> String {
        let mut s = String::with_capacity(32);
        for b in self.0 {
            s.push(HEX[(b >> 4) as usize] as char);
            s.push(HEX[(b & 0xf) as usize] as char);
        }
        s
    }
}

const HEX: &[u8; 16] = b"0123456789abcdef";

fn hex_val(c: u8) -> Option<u8> {
    match c {
        b'0'..=b'9' => Some(c - b'0'),
        b'a'..=b'f' => Some(c - b'a' + 10),
        _ => None,
    }
}

impl fmt::Display for PhoneId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for PhoneId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PhoneId({})", self.to_hex())
    }
}

impl Serialize for PhoneId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for PhoneId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        PhoneId::parse(&s).map_err(|_| D::Error::custom(format!("invalid phone id {s:?}")))
    }
}

/// Province code retained from the leading digits of a number.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Province(pub String);

impl Province {
    pub fn new(code: impl Into<String>) -> Self {
        Province(code.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Province {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Direction of a record from the app user's perspective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallType {
    Incoming,
    Outgoing,
}

/// User-assigned tag of a finished call. Harassment and Fraud are the
/// malicious tags; the rest are benign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallTag {
    None,
    RealEstate,
    Harassment,
    Delivery,
    Fraud,
    Sales,
}

impl CallTag {
    pub fn is_malicious(self) -> bool {
        matches!(self, CallTag::Harassment | CallTag::Fraud)
    }
}

/// One call-log row. Field order is the wire order of the JSONL format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallRecord {
    pub user_id: PhoneId,
    pub call_type: CallType,
    pub other_phone: PhoneId,
    pub other_province: Province,
    pub user_province: Province,
    pub call_date: i64,
    pub call_duration: u32,
    pub call_contact: bool,
    pub call_tag: CallTag,
    pub seq: u64,
}

impl CallRecord {
    /// The party that dialed.
    pub fn caller(&self) -> PhoneId {
        match self.call_type {
            CallType::Incoming => self.other_phone,
            CallType::Outgoing => self.user_id,
        }
    }

    /// The party that was dialed.
    pub fn callee(&self) -> PhoneId {
        match self.call_type {
            CallType::Incoming => self.user_id,
            CallType::Outgoing => self.other_phone,
        }
    }

    pub fn same_location(&self) -> bool {
        self.user_province == self.other_province
    }

    /// `(call_date, seq)`, the total order of a log.
    pub fn order_key(&self) -> (i64, u64) {
        (self.call_date, self.seq)
    }

    pub fn involves(&self, phone: PhoneId) -> bool {
        self.user_id == phone || self.other_phone == phone
    }

    /// The party of this record that is not `phone`.
    pub fn counterpart_of(&self, phone: PhoneId) -> PhoneId {
        if self.user_id == phone {
            self.other_phone
        } else {
            self.user_id
        }
    }
}

/// Sidecar metadata: province set, generation seed, covered time span,
/// and the registry of app-user phone ids.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogMeta {
    pub provinces: Vec<Province>,
    pub seed: u64,
    pub start_epoch: i64,
    pub days: u32,
    pub registry: BTreeSet<PhoneId>,
}

impl LogMeta {
    pub fn is_app_user(&self, phone: PhoneId) -> bool {
        self.registry.contains(&phone)
    }
}

/// Per-number ground-truth labels emitted next to a generated log.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LabelTable {
    pub labels: std::collections::BTreeMap<PhoneId, bool>,
}

impl LabelTable {
    pub fn is_malicious(&self, phone: PhoneId) -> bool {
        self.labels.get(&phone).copied().unwrap_or(false)
    }

    pub fn malicious_count(&self) -> usize {
        self.labels.values().filter(|&&m| m).count()
    }
}

/// An ordered, immutable call log with party indexes for history queries.
#[derive(Debug, Clone)]
pub struct CallLog {
    records: Vec<CallRecord>,
    meta: LogMeta,
    /// phone -> indices of records involving it, in log order
    party_index: HashMap<PhoneId, Vec<u32>>,
}

impl CallLog {
    pub fn new(records: Vec<CallRecord>, meta: LogMeta) -> Self {
        let mut party_index: HashMap<PhoneId, Vec<u32>> = HashMap::new();
        for (i, r) in records.iter().enumerate() {
            party_index.entry(r.user_id).or_default().push(i as u32);
            party_index.entry(r.other_phone).or_default().push(i as u32);
        }
        CallLog { records, meta, party_index }
    }

    pub fn records(&self) -> &[CallRecord] {
        &self.records
    }

    pub fn meta(&self) -> &LogMeta {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// All records whose parties are exactly `{a, b}` with `seq < before`,
    /// in log order.
    pub fn pair_history(&self, a: PhoneId, b: PhoneId, before: u64) -> Vec<&CallRecord> {
        // Walk the shorter party list.
        let (pivot, other) = {
            let la = self.party_index.get(&a).map_or(0, Vec::len);
            let lb = self.party_index.get(&b).map_or(0, Vec::len);
            if la <= lb { (a, b) } else { (b, a) }
        };
        let Some(indices) = self.party_index.get(&pivot) else {
            return Vec::new();
        };
        indices
            .iter()
            .map(|&i| &self.records[i as usize])
            .take_while(|r| r.seq < before)
            .filter(|r| r.counterpart_of(pivot) == other)
            .collect()
    }

    /// All records involving `x` with `seq < before`, in log order.
    pub fn party_history(&self, x: PhoneId, before: u64) -> Vec<&CallRecord> {
        let Some(indices) = self.party_index.get(&x) else {
            return Vec::new();
        };
        indices
            .iter()
            .map(|&i| &self.records[i as usize])
            .take_while(|r| r.seq < before)
            .collect()
    }
}

/// Why a record breaks a log invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViolationKind {
    /// `(call_date, seq)` not strictly greater than the previous record's.
    Ordering,
    DuplicateSeq,
    /// `user_id == other_phone`.
    SelfCall,
    /// `user_id` is not in the app-user registry.
    UnregisteredUser,
    /// A user-to-user call missing its mirrored record on the other side.
    UnmatchedMirror,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ViolationKind::Ordering => "ordering",
            ViolationKind::DuplicateSeq => "duplicate seq",
            ViolationKind::SelfCall => "self call",
            ViolationKind::UnregisteredUser => "unregistered user",
            ViolationKind::UnmatchedMirror => "unmatched mirror record",
        };
        f.write_str(s)
    }
}

/// One invariant violation, attributed to a record position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub index: usize,
    pub seq: u64,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "record {} (seq {}): {}", self.index, self.seq, self.kind)
    }
}

/// Checks every log invariant; returns one violation per offending record.
/// Violations are data, not errors: an empty list means the log is valid.
pub fn validate_log(log: &CallLog) -> Vec<Violation> {
    let records = log.records();
    let registry = &log.meta().registry;
    let mut violations = Vec::new();

    let mut seen_seq: std::collections::HashSet<u64> = std::collections::HashSet::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        if !seen_seq.insert(r.seq) {
            violations.push(Violation { index: i, seq: r.seq, kind: ViolationKind::DuplicateSeq });
        } else if i > 0 && r.order_key() <= records[i - 1].order_key() {
            violations.push(Violation { index: i, seq: r.seq, kind: ViolationKind::Ordering });
        }
        if r.user_id == r.other_phone {
            violations.push(Violation { index: i, seq: r.seq, kind: ViolationKind::SelfCall });
        }
        if !registry.is_empty() && !registry.contains(&r.user_id) {
            violations.push(Violation {
                index: i,
                seq: r.seq,
                kind: ViolationKind::UnregisteredUser,
            });
        }
    }

    // A call between two app users must appear once from each side, with
    // matching date, duration and direction-resolved parties.
    type EventKey = (i64, u32, PhoneId, PhoneId);
    let mut sides: HashMap<EventKey, (Vec<usize>, Vec<usize>)> = HashMap::new();
    for (i, r) in records.iter().enumerate() {
        if registry.contains(&r.user_id) && registry.contains(&r.other_phone) {
            let key = (r.call_date, r.call_duration, r.caller(), r.callee());
            let entry = sides.entry(key).or_default();
            match r.call_type {
                CallType::Outgoing => entry.0.push(i),
                CallType::Incoming => entry.1.push(i),
            }
        }
    }
    for (out_side, in_side) in sides.values() {
        let matched = out_side.len().min(in_side.len());
        for &i in out_side.iter().skip(matched).chain(in_side.iter().skip(matched)) {
            violations.push(Violation {
                index: i,
                seq: records[i].seq,
                kind: ViolationKind::UnmatchedMirror,
            });
        }
    }

    violations.sort_by_key(|v| v.index);
    violations
}

/// Errors from parsing and loading call logs.
#[derive(Debug, Error)]
pub enum LogError {
    #[error("line {line}: malformed record: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: missing field \"{field}\"")]
    MissingField { line: usize, field: &'static str },
    #[error("line {line}: invalid value for field \"{field}\": {reason}")]
    InvalidField { line: usize, field: &'static str, reason: String },
    #[error("invalid phone id {0:?}")]
    InvalidPhoneId(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid meta file: {0}")]
    InvalidMeta(String),
}

/// Parses one JSONL line into a record, reporting the offending field
/// and line number on failure.
pub fn parse_record(line: &str, line_no: usize) -> Result<CallRecord, LogError> {
    let value: serde_json::Value = serde_json::from_str(line)
        .map_err(|e| LogError::Malformed { line: line_no, reason: e.to_string() })?;
    let obj = value
        .as_object()
        .ok_or_else(|| LogError::Malformed { line: line_no, reason: "not a JSON object".into() })?;

    let field = |name: &'static str| -> Result<&serde_json::Value, LogError> {
        obj.get(name).ok_or(LogError::MissingField { line: line_no, field: name })
    };
    let invalid = |name: &'static str, reason: String| LogError::InvalidField {
        line: line_no,
        field: name,
        reason,
    };

    let phone = |name: &'static str| -> Result<PhoneId, LogError> {
        let s = field(name)?
            .as_str()
            .ok_or_else(|| invalid(name, "expected a string".into()))?;
        PhoneId::parse(s).map_err(|_| invalid(name, format!("not a 32-hex phone id: {s:?}")))
    };
    let province = |name: &'static str| -> Result<Province, LogError> {
        let s = field(name)?
            .as_str()
            .ok_or_else(|| invalid(name, "expected a string".into()))?;
        if s.is_empty() {
            return Err(invalid(name, "empty province code".into()));
        }
        Ok(Province::new(s))
    };
    let int = |name: &'static str| -> Result<i64, LogError> {
        field(name)?.as_i64().ok_or_else(|| invalid(name, "expected an integer".into()))
    };

    let call_type: CallType = serde_json::from_value(field("call_type")?.clone())
        .map_err(|e| invalid("call_type", e.to_string()))?;
    let call_tag: CallTag = serde_json::from_value(field("call_tag")?.clone())
        .map_err(|e| invalid("call_tag", e.to_string()))?;

    let call_date = int("call_date")?;
    if call_date < 0 {
        return Err(invalid("call_date", format!("negative timestamp {call_date}")));
    }
    let duration = int("call_duration")?;
    if duration < 0 {
        return Err(invalid("call_duration", format!("negative duration {duration}")));
    }
    let duration = u32::try_from(duration)
        .map_err(|_| invalid("call_duration", format!("duration {duration} out of range")))?;
    let seq = int("seq")?;
    let seq =
        u64::try_from(seq).map_err(|_| invalid("seq", format!("negative sequence {seq}")))?;
    let call_contact = field("call_contact")?
        .as_bool()
        .ok_or_else(|| invalid("call_contact", "expected a boolean".into()))?;

    let record = CallRecord {
        user_id: phone("user_id")?,
        call_type,
        other_phone: phone("other_phone")?,
        other_province: province("other_province")?,
        user_province: province("user_province")?,
        call_date,
        call_duration: duration,
        call_contact,
        call_tag,
        seq,
    };
    if record.user_id == record.other_phone {
        return Err(invalid("other_phone", "equals user_id".into()));
    }
    Ok(record)
}

/// Canonical single-line serialization; the inverse of [`parse_record`].
pub fn serialize_record(record: &CallRecord) -> String {
    serde_json::to_string(record).expect("record serialization cannot fail")
}

/// Reads a JSONL log plus its sidecar meta JSON.
pub fn read_log(
    log_reader: impl BufRead,
    meta_reader: impl std::io::Read,
) -> Result<CallLog, LogError> {
    let meta: LogMeta = serde_json::from_reader(meta_reader)
        .map_err(|e| LogError::InvalidMeta(e.to_string()))?;
    let mut records = Vec::new();
    for (i, line) in log_reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(parse_record(&line, i + 1)?);
    }
    Ok(CallLog::new(records, meta))
}

/// Writes the JSONL log and meta JSON to the given writers.
pub fn write_log(
    log: &CallLog,
    mut log_writer: impl Write,
    mut meta_writer: impl Write,
) -> Result<(), LogError> {
    for record in log.records() {
        writeln!(log_writer, "{}", serialize_record(record))?;
    }
    serde_json::to_writer_pretty(&mut meta_writer, log.meta())
        .map_err(|e| LogError::InvalidMeta(e.to_string()))?;
    meta_writer.write_all(b"\n")?;
    Ok(())
}
