//! Append-only, hash-chained provenance ledger. One JSONL line per
//! inference, each line canonically serialized (sorted keys, floats at 12
//! significant digits) and chained to its predecessor by SHA-256.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{LpfError, Result};

/// Genesis sentinel: 64 zero hex characters.
pub const GENESIS_HASH: &str =
    "0000000000000000000000000000000000000000000000000000000000000000";

/// Per-factor provenance entry.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FactorMeta {
    pub evidence_id: String,
    pub potential: BTreeMap<String, f64>,
    pub weight: f64,
}

/// Immutable audit entry for one inference.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProvenanceRecord {
    pub record_id: String,
    pub timestamp: String,
    pub entity_id: String,
    pub predicate: String,
    pub distribution: BTreeMap<String, f64>,
    pub top_value: String,
    pub confidence: f64,
    pub evidence_chain: Vec<String>,
    pub factor_metadata: Vec<FactorMeta>,
    pub model_versions: BTreeMap<String, String>,
    pub hyperparameters: BTreeMap<String, f64>,
    pub execution_time_ms: f64,
    pub prev_hash: String,
    pub hash: String,
}

/// All caller-supplied fields of a record; ids and hashes are assigned by
/// the ledger on append.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordDraft {
    pub timestamp: String,
    pub entity_id: String,
    pub predicate: String,
    pub distribution: BTreeMap<String, f64>,
    pub top_value: String,
    pub confidence: f64,
    pub evidence_chain: Vec<String>,
    pub factor_metadata: Vec<FactorMeta>,
    pub model_versions: BTreeMap<String, String>,
    pub hyperparameters: BTreeMap<String, f64>,
    pub execution_time_ms: f64,
}

impl RecordDraft {
    fn validate(&self) -> Result<()> {
        let total: f64 = self.distribution.values().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(LpfError::Domain(format!(
                "record distribution sums to {total}, not 1"
            )));
        }
        let max = self
            .distribution
            .values()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        if (self.confidence - max).abs() > 1e-9 {
            return Err(LpfError::Domain(format!(
                "confidence {} is not max(distribution) = {max}",
                self.confidence
            )));
        }
        Ok(())
    }
}

/// Canonical float form: 12 significant digits in exponent notation. Stable
/// under parse-format round trips, so every persisted digit participates in
/// the hash.
fn canonical_float(x: f64) -> String {
    format!("{x:.11e}")
}

fn push_string(out: &mut String, s: &str) {
    out.push_str(&serde_json::to_string(s).expect("string serialization cannot fail"));
}

fn push_key(out: &mut String, first: &mut bool, key: &str) {
    if !*first {
        out.push(',');
    }
    *first = false;
    push_string(out, key);
    out.push(':');
}

fn push_float_map(out: &mut String, map: &BTreeMap<String, f64>) {
    out.push('{');
    let mut first = true;
    for (k, v) in map {
        push_key(out, &mut first, k);
        out.push_str(&canonical_float(*v));
    }
    out.push('}');
}

fn push_string_map(out: &mut String, map: &BTreeMap<String, String>) {
    out.push('{');
    let mut first = true;
    for (k, v) in map {
        push_key(out, &mut first, k);
        push_string(out, v);
    }
    out.push('}');
}

impl ProvenanceRecord {
    /// Canonical serialization: keys in fixed alphabetical order, canonical
    /// floats. With `include_hash` this is exactly the persisted JSONL line;
    /// without it, the byte string the hash covers.
    pub fn canonical_json(&self, include_hash: bool) -> String {
        let mut out = String::with_capacity(512);
        let mut first = true;
        out.push('{');
        push_key(&mut out, &mut first, "confidence");
        out.push_str(&canonical_float(self.confidence));
        push_key(&mut out, &mut first, "distribution");
        push_float_map(&mut out, &self.distribution);
        push_key(&mut out, &mut first, "entity_id");
        push_string(&mut out, &self.entity_id);
        push_key(&mut out, &mut first, "evidence_chain");
        out.push('[');
        for (i, id) in self.evidence_chain.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            push_string(&mut out, id);
        }
        out.push(']');
        push_key(&mut out, &mut first, "execution_time_ms");
        out.push_str(&canonical_float(self.execution_time_ms));
        push_key(&mut out, &mut first, "factor_metadata");
        out.push('[');
        for (i, fm) in self.factor_metadata.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push('{');
            let mut inner_first = true;
            push_key(&mut out, &mut inner_first, "evidence_id");
            push_string(&mut out, &fm.evidence_id);
            push_key(&mut out, &mut inner_first, "potential");
            push_float_map(&mut out, &fm.potential);
            push_key(&mut out, &mut inner_first, "weight");
            out.push_str(&canonical_float(fm.weight));
            out.push('}');
        }
        out.push(']');
        if include_hash {
            push_key(&mut out, &mut first, "hash");
            push_string(&mut out, &self.hash);
        }
        push_key(&mut out, &mut first, "hyperparameters");
        push_float_map(&mut out, &self.hyperparameters);
        push_key(&mut out, &mut first, "model_versions");
        push_string_map(&mut out, &self.model_versions);
        push_key(&mut out, &mut first, "predicate");
        push_string(&mut out, &self.predicate);
        push_key(&mut out, &mut first, "prev_hash");
        push_string(&mut out, &self.prev_hash);
        push_key(&mut out, &mut first, "record_id");
        push_string(&mut out, &self.record_id);
        push_key(&mut out, &mut first, "timestamp");
        push_string(&mut out, &self.timestamp);
        push_key(&mut out, &mut first, "top_value");
        push_string(&mut out, &self.top_value);
        out.push('}');
        out
    }

    /// SHA-256 over the canonical serialization of everything but `hash`.
    pub fn compute_hash(&self) -> String {
        let payload = self.canonical_json(false);
        let digest = Sha256::digest(payload.as_bytes());
        let mut hex = String::with_capacity(64);
        for byte in digest {
            hex.push_str(&format!("{byte:02x}"));
        }
        hex
    }
}

/// Reason a ledger failed verification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BreakReason {
    Unparseable,
    ChainBreak,
    HashMismatch,
    IdSequence,
}

/// Verification outcome: clean, or the first broken link.
#[derive(Debug, Clone, PartialEq)]
pub enum VerifyOutcome {
    Ok { records: usize },
    Broken {
        /// 1-based JSONL line number.
        line: usize,
        record_id: Option<String>,
        reason: BreakReason,
        detail: String,
    },
}

impl VerifyOutcome {
    pub fn is_ok(&self) -> bool {
        matches!(self, VerifyOutcome::Ok { .. })
    }
}

/// Exclusive single-writer handle over a ledger file.
#[derive(Debug)]
pub struct Ledger {
    path: PathBuf,
    count: usize,
    last_hash: String,
}

impl Ledger {
    /// Opens (or creates) a ledger file, scanning any existing records to
    /// recover the chain tip.
    pub fn open(path: &Path) -> Result<Self> {
        if path.exists() {
            let records = read_records(path)?;
            let (count, last_hash) = match records.last() {
                Some(last) => (records.len(), last.hash.clone()),
                None => (0, GENESIS_HASH.to_string()),
            };
            Ok(Self { path: path.to_path_buf(), count, last_hash })
        } else {
            std::fs::File::create(path)?;
            Ok(Self {
                path: path.to_path_buf(),
                count: 0,
                last_hash: GENESIS_HASH.to_string(),
            })
        }
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Assigns the next record id, chains and hashes the record, and appends
    /// one JSONL line. The line is fully serialized before any byte is
    /// written, so a failure leaves the file untouched.
    pub fn append(&mut self, draft: RecordDraft) -> Result<(String, String)> {
        draft.validate()?;
        let record_id = format!("INF{:08}", self.count + 1);
        let mut record = ProvenanceRecord {
            record_id: record_id.clone(),
            timestamp: draft.timestamp,
            entity_id: draft.entity_id,
            predicate: draft.predicate,
            distribution: draft.distribution,
            top_value: draft.top_value,
            confidence: draft.confidence,
            evidence_chain: draft.evidence_chain,
            factor_metadata: draft.factor_metadata,
            model_versions: draft.model_versions,
            hyperparameters: draft.hyperparameters,
            execution_time_ms: draft.execution_time_ms,
            prev_hash: self.last_hash.clone(),
            hash: String::new(),
        };
        record.hash = record.compute_hash();
        let line = record.canonical_json(true);
        let mut file = std::fs::OpenOptions::new().append(true).open(&self.path)?;
        file.write_all(line.as_bytes())?;
        file.write_all(b"\n")?;
        file.flush()?;
        self.count += 1;
        self.last_hash = record.hash.clone();
        Ok((record_id, record.hash))
    }
}

/// Reads and parses every record; malformed lines error with their number.
pub fn read_records(path: &Path) -> Result<Vec<ProvenanceRecord>> {
    let bytes = std::fs::read(path)?;
    let mut records = Vec::new();
    for (i, raw) in bytes.split(|&b| b == b'\n').enumerate() {
        if raw.is_empty() {
            continue;
        }
        let line = std::str::from_utf8(raw).map_err(|e| LpfError::MalformedLine {
            line: i + 1,
            reason: e.to_string(),
        })?;
        let record: ProvenanceRecord =
            serde_json::from_str(line).map_err(|e| LpfError::MalformedLine {
                line: i + 1,
                reason: e.to_string(),
            })?;
        records.push(record);
    }
    Ok(records)
}

/// Recomputes every hash and chain link; returns the first broken link.
pub fn verify(path: &Path) -> Result<VerifyOutcome> {
    let bytes = std::fs::read(path)?;
    let mut prev_hash = GENESIS_HASH.to_string();
    let mut index = 0usize;
    for (i, raw) in bytes.split(|&b| b == b'\n').enumerate() {
        if raw.is_empty() {
            continue;
        }
        let line_no = i + 1;
        let parsed: std::result::Result<ProvenanceRecord, String> = std::str::from_utf8(raw)
            .map_err(|e| e.to_string())
            .and_then(|s| serde_json::from_str(s).map_err(|e| e.to_string()));
        let record = match parsed {
            Ok(r) => r,
            Err(reason) => {
                return Ok(VerifyOutcome::Broken {
                    line: line_no,
                    record_id: None,
                    reason: BreakReason::Unparseable,
                    detail: reason,
                })
            }
        };
        index += 1;
        if record.prev_hash != prev_hash {
            return Ok(VerifyOutcome::Broken {
                line: line_no,
                record_id: Some(record.record_id),
                reason: BreakReason::ChainBreak,
                detail: format!("prev_hash does not match hash of record {}", index - 1),
            });
        }
        let recomputed = record.compute_hash();
        if recomputed != record.hash {
            return Ok(VerifyOutcome::Broken {
                line: line_no,
                record_id: Some(record.record_id),
                reason: BreakReason::HashMismatch,
                detail: "stored hash does not match recomputed hash".into(),
            });
        }
        let expected_id = format!("INF{index:08}");
        if record.record_id != expected_id {
            return Ok(VerifyOutcome::Broken {
                line: line_no,
                record_id: Some(record.record_id),
                reason: BreakReason::IdSequence,
                detail: format!("expected {expected_id}"),
            });
        }
        prev_hash = record.hash;
    }
    Ok(VerifyOutcome::Ok { records: index })
}

/// Fetches one record by id for re-execution: the evidence chain,
/// hyperparameters, model versions, and recorded distribution all ride along.
pub fn replay(path: &Path, record_id: &str) -> Result<ProvenanceRecord> {
    read_records(path)?
        .into_iter()
        .find(|r| r.record_id == record_id)
        .ok_or_else(|| LpfError::NotFound(format!("record {record_id}")))
}
