//! Evidence ingestion and retrieval: deterministic text embedder,
//! entity-predicate hash index, exact cosine reranking, JSONL metadata
//! store, and the canonical-fact fast path.

pub mod embed;
pub mod timeutil;

pub use embed::{cosine_similarity, embed_text, EMBED_DIM};

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{LpfError, Result};
use crate::numerics::DenseVector;

/// One evidence item's metadata (one JSONL row).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EvidenceRecord {
    pub evidence_id: String,
    pub entity_id: String,
    pub predicate: String,
    pub text_content: String,
    pub credibility: f64,
    pub timestamp: String,
    pub evidence_type: String,
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_id: Option<usize>,
    /// Ground-truth tag, present in training corpora only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supports_value: Option<String>,
}

impl EvidenceRecord {
    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.credibility) {
            return Err(LpfError::Domain(format!(
                "credibility {} outside [0, 1]",
                self.credibility
            )));
        }
        timeutil::parse_iso8601(&self.timestamp)?;
        Ok(())
    }
}

/// 384-dim unit-norm (or zero) vectors indexed by embedding id.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingStore {
    vectors: Vec<DenseVector>,
}

impl EmbeddingStore {
    pub fn push(&mut self, vector: DenseVector) -> Result<usize> {
        if vector.len() != EMBED_DIM {
            return Err(LpfError::Domain(format!(
                "embeddings must be {EMBED_DIM}-dim, got {}",
                vector.len()
            )));
        }
        let norm = vector.l2_norm();
        if norm != 0.0 && (norm - 1.0).abs() > 1e-9 {
            return Err(LpfError::Domain(format!(
                "embedding norm {norm} is neither 0 nor 1"
            )));
        }
        self.vectors.push(vector);
        Ok(self.vectors.len() - 1)
    }

    pub fn get(&self, id: usize) -> Result<&DenseVector> {
        self.vectors
            .get(id)
            .ok_or_else(|| LpfError::NotFound(format!("embedding id {id}")))
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

/// Authoritative, high-confidence stored value.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CanonicalFact {
    pub entity_id: String,
    pub predicate: String,
    pub value: String,
    pub confidence: f64,
    pub timestamp: String,
}

/// Minimum confidence for a canonical fact to short-circuit inference.
pub const CANONICAL_MIN_CONFIDENCE: f64 = 0.95;

/// Default staleness window in days.
pub const CANONICAL_STALENESS_DAYS: i64 = 30;

/// Per-row ingestion rejection.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct IngestRejection {
    pub line: Option<usize>,
    pub evidence_id: Option<String>,
    pub reason: String,
}

/// Ingestion statistics.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct IngestReport {
    pub indexed: usize,
    pub embedded: usize,
    pub rejections: Vec<IngestRejection>,
}

/// In-memory evidence index: exact (entity, predicate) lookup plus optional
/// cosine reranking against a query text. Single writer during ingestion;
/// immutable and freely shareable afterwards.
#[derive(Debug, Clone, Default)]
pub struct EvidenceStore {
    records: BTreeMap<String, EvidenceRecord>,
    pair_index: BTreeMap<(String, String), Vec<String>>,
    embeddings: EmbeddingStore,
    /// Sidecar embeddings staged for records ingested later.
    pending_embeddings: BTreeMap<String, DenseVector>,
    canonical: BTreeMap<(String, String), CanonicalFact>,
}

impl EvidenceStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn record(&self, evidence_id: &str) -> Result<&EvidenceRecord> {
        self.records
            .get(evidence_id)
            .ok_or_else(|| LpfError::NotFound(format!("evidence {evidence_id}")))
    }

    /// The embedding backing a record, whatever its origin (sidecar import
    /// or the built-in text embedder).
    pub fn embedding_of(&self, evidence_id: &str) -> Result<&DenseVector> {
        let record = self.record(evidence_id)?;
        let id = record.embedding_id.ok_or_else(|| {
            LpfError::NotFound(format!("evidence {evidence_id} has no embedding"))
        })?;
        self.embeddings.get(id)
    }

    /// Stages precomputed embeddings from a sidecar JSONL file
    /// (`{"evidence_id": ..., "embedding": [384 floats]}` per line); they
    /// take precedence over the text embedder for matching ids.
    pub fn load_embedding_sidecar(&mut self, path: &Path) -> Result<usize> {
        #[derive(serde::Deserialize)]
        struct SidecarRow {
            evidence_id: String,
            embedding: Vec<f64>,
        }
        let file = std::fs::File::open(path)?;
        let mut loaded = 0;
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row: SidecarRow =
                serde_json::from_str(&line).map_err(|e| LpfError::MalformedLine {
                    line: i + 1,
                    reason: e.to_string(),
                })?;
            if row.embedding.len() != EMBED_DIM {
                return Err(LpfError::MalformedLine {
                    line: i + 1,
                    reason: format!("embedding has {} dims", row.embedding.len()),
                });
            }
            let vector = DenseVector::new(row.embedding).map_err(|e| LpfError::MalformedLine {
                line: i + 1,
                reason: e.to_string(),
            })?;
            self.pending_embeddings.insert(row.evidence_id, vector);
            loaded += 1;
        }
        Ok(loaded)
    }

    /// Indexes records: builds the (entity, predicate) → evidence map and
    /// embeds any record without a staged embedding. Duplicates are rejected
    /// row by row, not fatally.
    pub fn ingest_records(&mut self, records: Vec<EvidenceRecord>) -> IngestReport {
        let mut report = IngestReport::default();
        for record in records {
            self.ingest_one(record, None, &mut report);
        }
        report
    }

    fn ingest_one(
        &mut self,
        mut record: EvidenceRecord,
        line: Option<usize>,
        report: &mut IngestReport,
    ) {
        if self.records.contains_key(&record.evidence_id) {
            report.rejections.push(IngestRejection {
                line,
                evidence_id: Some(record.evidence_id.clone()),
                reason: "duplicate evidence_id".into(),
            });
            return;
        }
        if let Err(e) = record.validate() {
            report.rejections.push(IngestRejection {
                line,
                evidence_id: Some(record.evidence_id.clone()),
                reason: e.to_string(),
            });
            return;
        }
        if record.embedding_id.is_none() {
            let vector = match self.pending_embeddings.remove(&record.evidence_id) {
                Some(v) => {
                    let norm = v.l2_norm();
                    if norm > 0.0 {
                        let scaled: Vec<f64> = v.iter().map(|x| x / norm).collect();
                        DenseVector::new(scaled).expect("finite normalized embedding")
                    } else {
                        v
                    }
                }
                None => embed_text(&record.text_content),
            };
            match self.embeddings.push(vector) {
                Ok(id) => {
                    record.embedding_id = Some(id);
                    report.embedded += 1;
                }
                Err(e) => {
                    report.rejections.push(IngestRejection {
                        line,
                        evidence_id: Some(record.evidence_id.clone()),
                        reason: e.to_string(),
                    });
                    return;
                }
            }
        }
        self.pair_index
            .entry((record.entity_id.clone(), record.predicate.clone()))
            .or_default()
            .push(record.evidence_id.clone());
        self.records.insert(record.evidence_id.clone(), record);
        report.indexed += 1;
    }

    /// Ingests a metadata JSONL file; malformed rows are rejected with their
    /// 1-based line number.
    pub fn ingest_jsonl(&mut self, path: &Path) -> Result<IngestReport> {
        let file = std::fs::File::open(path)?;
        let mut report = IngestReport::default();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<EvidenceRecord>(&line) {
                Ok(record) => self.ingest_one(record, Some(i + 1), &mut report),
                Err(e) => report.rejections.push(IngestRejection {
                    line: Some(i + 1),
                    evidence_id: None,
                    reason: e.to_string(),
                }),
            }
        }
        Ok(report)
    }

    /// Writes all records as JSONL, one per line, in evidence-id order.
    pub fn save_jsonl(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        for record in self.records.values() {
            serde_json::to_writer(&mut file, record)?;
            file.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Exact (entity, predicate) lookup, optionally reranked by cosine
    /// similarity to the query text, truncated to `top_k`. Ties break by
    /// ascending evidence id; absent pairs yield an empty list.
    pub fn search(
        &self,
        entity_id: &str,
        predicate: &str,
        top_k: usize,
        query: Option<&str>,
    ) -> Vec<String> {
        debug_assert!(top_k >= 1, "top_k must be >= 1");
        let Some(ids) = self
            .pair_index
            .get(&(entity_id.to_string(), predicate.to_string()))
        else {
            return Vec::new();
        };
        let mut ids = ids.clone();
        if let Some(query_text) = query {
            let query_vec = embed_text(query_text);
            let mut scored: Vec<(f64, String)> = ids
                .into_iter()
                .map(|id| {
                    let score = self
                        .embedding_of(&id)
                        .map(|e| cosine_similarity(&query_vec, e))
                        .unwrap_or(0.0);
                    (score, id)
                })
                .collect();
            scored.sort_by(|a, b| {
                b.0.partial_cmp(&a.0)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then_with(|| a.1.cmp(&b.1))
            });
            ids = scored.into_iter().map(|(_, id)| id).collect();
        }
        ids.truncate(top_k);
        ids
    }

    pub fn insert_canonical(&mut self, fact: CanonicalFact) -> Result<()> {
        timeutil::parse_iso8601(&fact.timestamp)?;
        self.canonical
            .insert((fact.entity_id.clone(), fact.predicate.clone()), fact);
        Ok(())
    }

    pub fn load_canonical_jsonl(&mut self, path: &Path) -> Result<usize> {
        let file = std::fs::File::open(path)?;
        let mut loaded = 0;
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fact: CanonicalFact =
                serde_json::from_str(&line).map_err(|e| LpfError::MalformedLine {
                    line: i + 1,
                    reason: e.to_string(),
                })?;
            self.insert_canonical(fact)?;
            loaded += 1;
        }
        Ok(loaded)
    }

    pub fn save_canonical_jsonl(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        for fact in self.canonical.values() {
            serde_json::to_writer(&mut file, fact)?;
            file.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Fresh-canonical fast path: present iff the fact exists, clears the
    /// confidence gate, and is at most `staleness_days` old at `now`.
    pub fn canonical_get(
        &self,
        entity_id: &str,
        predicate: &str,
        now: &str,
        staleness_days: i64,
    ) -> Result<Option<&CanonicalFact>> {
        let now_secs = timeutil::parse_iso8601(now)?;
        let Some(fact) = self
            .canonical
            .get(&(entity_id.to_string(), predicate.to_string()))
        else {
            return Ok(None);
        };
        if fact.confidence < CANONICAL_MIN_CONFIDENCE {
            return Ok(None);
        }
        let fact_secs = timeutil::parse_iso8601(&fact.timestamp)?;
        if timeutil::days_between(fact_secs, now_secs) > staleness_days {
            return Ok(None);
        }
        Ok(Some(fact))
    }
}
