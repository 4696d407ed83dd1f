//! Synthetic compliance corpus: label-keyed phrase banks with adjacent-label
//! noise, Beta(10,2) credibilities rescaled to [0.65, 0.98], and an
//! entity-stratified 70/15/15 split.

use std::io::Write;
use std::path::Path;

use crate::error::{LpfError, Result};
use crate::evidence::{embed_text, EvidenceRecord, EvidenceStore};
use crate::nets::{EntitySample, EvidenceSample, PredicateSpec};
use crate::numerics::RandomStream;

pub const COMPLIANCE_PREDICATE: &str = "compliance_level";
pub const COMPLIANCE_DOMAIN: [&str; 3] = ["low", "medium", "high"];

const PHRASES_LOW: [&str; 8] = [
    "late tax filings repeatedly flagged by the regulator",
    "penalties imposed for underreporting taxable income",
    "material weaknesses found in internal controls",
    "unresolved audit findings carried over from prior year",
    "substantial discrepancies in reported revenue figures",
    "missing documentation for claimed deductions",
    "history of repeated compliance violations",
    "payroll taxes remitted behind schedule several times",
];

const PHRASES_MEDIUM: [&str; 8] = [
    "filings generally on time with occasional delays",
    "minor discrepancies noted and corrected promptly",
    "internal controls adequate though improvement planned",
    "audit raised moderate follow up questions",
    "partial documentation gaps under remediation",
    "isolated late payment resolved within the quarter",
    "compliance program meets baseline requirements",
    "some findings pending management response",
];

const PHRASES_HIGH: [&str; 8] = [
    "timely and accurate filings across all periods",
    "clean audit opinion with no findings",
    "strong internal controls documented and tested",
    "exemplary record keeping practices maintained",
    "proactive disclosure and full cooperation with auditors",
    "industry leading compliance program in place",
    "zero late filings in recent years",
    "robust tax governance and board oversight",
];

const SOURCES: [&str; 5] = [
    "audit_report",
    "regulatory_filing",
    "certification",
    "internal_review",
    "news_article",
];

const NAME_STEMS: [&str; 10] = [
    "Global Solutions",
    "Tech Industries",
    "Apex Holdings",
    "Summit Partners",
    "Northwind Trading",
    "Bluepeak Logistics",
    "Ironside Manufacturing",
    "Clearwater Finance",
    "Redstone Energy",
    "Silverline Retail",
];

const INDUSTRIES: [&str; 6] = ["Finance", "Technology", "Manufacturing", "Retail", "Energy", "Logistics"];
const COUNTRIES: [&str; 5] = ["US", "UK", "DE", "JP", "CA"];

/// One generated evidence item.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SyntheticEvidence {
    pub text: String,
    pub credibility: f64,
    pub supports_value: String,
}

/// One generated company with its ground-truth label and evidence.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SyntheticEntity {
    pub company_id: String,
    pub company_name: String,
    pub year: u32,
    pub industry: String,
    pub country: String,
    pub revenue: f64,
    pub profit: f64,
    pub tax_paid: f64,
    pub num_employees: u32,
    pub subsidiaries: u32,
    pub on_time_filing: bool,
    pub accurate_reporting: bool,
    pub past_violations: u32,
    pub audit_score: f64,
    pub compliance_level: String,
    pub compliance_score: f64,
    #[serde(skip)]
    pub evidence: Vec<SyntheticEvidence>,
}

/// Entity ids per split.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DatasetSplits {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

/// Generator knobs.
#[derive(Debug, Clone)]
pub struct DatasetOptions {
    pub n_entities: usize,
    pub evidence_per_entity: usize,
    /// Fraction of evidence flipped to support an adjacent label.
    pub noise: f64,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self { n_entities: 900, evidence_per_entity: 5, noise: 0.1 }
    }
}

/// A full generated corpus.
#[derive(Debug, Clone)]
pub struct ComplianceDataset {
    pub entities: Vec<SyntheticEntity>,
    pub records: Vec<EvidenceRecord>,
    pub splits: DatasetSplits,
    pub predicate: PredicateSpec,
}

fn label_index(label: &str) -> usize {
    COMPLIANCE_DOMAIN
        .iter()
        .position(|v| *v == label)
        .expect("label within compliance domain")
}

/// Beta(10, 2) via the integer-shape Gamma identity G(k) = −Σ ln U_i.
fn beta_10_2(stream: &mut RandomStream) -> f64 {
    let gamma = |k: usize, stream: &mut RandomStream| -> f64 {
        -(0..k).map(|_| stream.next_uniform().ln()).sum::<f64>()
    };
    let a = gamma(10, stream);
    let b = gamma(2, stream);
    a / (a + b)
}

fn adjacent_label(label: &str, stream: &mut RandomStream) -> &'static str {
    match label {
        "low" => "medium",
        "high" => "medium",
        _ => {
            if stream.next_uniform() < 0.5 {
                "low"
            } else {
                "high"
            }
        }
    }
}

fn phrase_bank(label: &str) -> &'static [&'static str; 8] {
    match label {
        "low" => &PHRASES_LOW,
        "medium" => &PHRASES_MEDIUM,
        _ => &PHRASES_HIGH,
    }
}

/// Deterministic corpus generation: exact 30/40/30 label counts (remainder
/// to medium), per-evidence adjacent-label noise, and a stratified split
/// hitting round(0.7n)/round(0.15n)/rest exactly.
pub fn generate_compliance_dataset(seed: u64, opts: &DatasetOptions) -> Result<ComplianceDataset> {
    if opts.n_entities == 0 || opts.evidence_per_entity == 0 {
        return Err(LpfError::Domain("dataset must be nonempty".into()));
    }
    if !(0.0..=1.0).contains(&opts.noise) {
        return Err(LpfError::Domain("noise must lie in [0, 1]".into()));
    }
    let mut stream = RandomStream::new(seed, 0);

    // Label pool with exact proportions.
    let n = opts.n_entities;
    let n_low = (0.3 * n as f64).round() as usize;
    let n_high = (0.3 * n as f64).round() as usize;
    let n_medium = n - n_low - n_high;
    let mut labels: Vec<&str> = Vec::with_capacity(n);
    labels.extend(std::iter::repeat_n("low", n_low));
    labels.extend(std::iter::repeat_n("medium", n_medium));
    labels.extend(std::iter::repeat_n("high", n_high));
    stream.shuffle(&mut labels);

    let mut entities = Vec::with_capacity(n);
    let mut records = Vec::with_capacity(n * opts.evidence_per_entity);
    let mut evidence_counter = 0usize;
    for (i, label) in labels.iter().enumerate() {
        let entity_id = format!("C{:04}", i + 1);
        let year = 2020 + (i % 3) as u32;
        let revenue = 1e8 + stream.next_uniform() * 4.9e9;
        let profit = revenue * (0.05 + stream.next_uniform() * 0.20);
        let tax_paid = profit * (0.15 + stream.next_uniform() * 0.15);
        let base_score = match *label {
            "low" => 0.15 + stream.next_uniform() * 0.25,
            "medium" => 0.45 + stream.next_uniform() * 0.25,
            _ => 0.75 + stream.next_uniform() * 0.22,
        };
        let mut evidence = Vec::with_capacity(opts.evidence_per_entity);
        for j in 0..opts.evidence_per_entity {
            evidence_counter += 1;
            let supports = if stream.next_uniform() < opts.noise {
                adjacent_label(label, &mut stream)
            } else {
                label
            };
            let bank = phrase_bank(supports);
            let first = stream.next_below(bank.len());
            let mut second = stream.next_below(bank.len());
            if second == first {
                second = (second + 1) % bank.len();
            }
            let text = format!("{}; {}", bank[first], bank[second]);
            let credibility = 0.65 + 0.33 * beta_10_2(&mut stream);
            let evidence_id = format!("{entity_id}_E{evidence_counter}");
            records.push(EvidenceRecord {
                evidence_id,
                entity_id: entity_id.clone(),
                predicate: COMPLIANCE_PREDICATE.into(),
                text_content: text.clone(),
                credibility,
                timestamp: format!("{year}-{:02}-15T00:00:00Z", (j % 12) + 1),
                evidence_type: "text".into(),
                source: SOURCES[j % SOURCES.len()].into(),
                embedding_id: None,
                supports_value: Some(supports.to_string()),
            });
            evidence.push(SyntheticEvidence {
                text,
                credibility,
                supports_value: supports.to_string(),
            });
        }
        entities.push(SyntheticEntity {
            company_id: entity_id,
            company_name: format!(
                "{} {} {}",
                NAME_STEMS[i % NAME_STEMS.len()],
                ["Inc", "LLC", "Corp"][i % 3],
                i / NAME_STEMS.len() + 1
            ),
            year,
            industry: INDUSTRIES[stream.next_below(INDUSTRIES.len())].into(),
            country: COUNTRIES[stream.next_below(COUNTRIES.len())].into(),
            revenue: (revenue * 100.0).round() / 100.0,
            profit: (profit * 100.0).round() / 100.0,
            tax_paid: (tax_paid * 100.0).round() / 100.0,
            num_employees: 50 + stream.next_below(9951) as u32,
            subsidiaries: stream.next_below(21) as u32,
            on_time_filing: *label != "low" || stream.next_uniform() < 0.2,
            accurate_reporting: *label == "high" || stream.next_uniform() < 0.4,
            past_violations: match *label {
                "low" => 1 + stream.next_below(5) as u32,
                "medium" => stream.next_below(3) as u32,
                _ => stream.next_below(2) as u32,
            },
            audit_score: (base_score * 10_000.0).round() / 100.0,
            compliance_level: label.to_string(),
            compliance_score: (base_score * 1000.0).round() / 1000.0,
            evidence,
        });
    }

    let splits = stratified_split(&entities, &mut stream);
    Ok(ComplianceDataset {
        entities,
        records,
        splits,
        predicate: PredicateSpec::new(COMPLIANCE_PREDICATE, &COMPLIANCE_DOMAIN),
    })
}

/// Per-label shuffled allocation with a deterministic fixup so the global
/// sizes hit round(0.7n) / round(0.15n) / remainder exactly.
fn stratified_split(entities: &[SyntheticEntity], stream: &mut RandomStream) -> DatasetSplits {
    let n = entities.len();
    let target_train = (0.70 * n as f64).round() as usize;
    let target_val = (0.15 * n as f64).round() as usize;

    let k = COMPLIANCE_DOMAIN.len();
    let mut train: Vec<Vec<String>> = vec![Vec::new(); k];
    let mut val: Vec<Vec<String>> = vec![Vec::new(); k];
    let mut test: Vec<Vec<String>> = vec![Vec::new(); k];
    for label in COMPLIANCE_DOMAIN {
        let mut ids: Vec<String> = entities
            .iter()
            .filter(|e| e.compliance_level == label)
            .map(|e| e.company_id.clone())
            .collect();
        stream.shuffle(&mut ids);
        let n_l = ids.len();
        let train_l = (0.70 * n_l as f64).round() as usize;
        let val_l = ((0.15 * n_l as f64).round() as usize).min(n_l - train_l);
        let idx = label_index(label);
        for (pos, id) in ids.into_iter().enumerate() {
            if pos < train_l {
                train[idx].push(id);
            } else if pos < train_l + val_l {
                val[idx].push(id);
            } else {
                test[idx].push(id);
            }
        }
    }
    // Drain per-label rounding drift by moving single entities between
    // splits, preferring the largest donor label group each time.
    let total = |groups: &Vec<Vec<String>>| groups.iter().map(Vec::len).sum::<usize>();
    let richest = |groups: &Vec<Vec<String>>| {
        (0..groups.len())
            .max_by_key(|&i| groups[i].len())
            .expect("nonempty label set")
    };
    while total(&train) > target_train {
        let from = richest(&train);
        let id = train[from].pop().expect("richest train label nonempty");
        test[from].push(id);
    }
    while total(&train) < target_train {
        let from = richest(&test);
        let id = test[from].pop().expect("richest test label nonempty");
        train[from].push(id);
    }
    while total(&val) > target_val {
        let from = richest(&val);
        let id = val[from].pop().expect("richest val label nonempty");
        test[from].push(id);
    }
    while total(&val) < target_val {
        let from = richest(&test);
        let id = test[from].pop().expect("richest test label nonempty");
        val[from].push(id);
    }
    DatasetSplits { train: train.concat(), val: val.concat(), test: test.concat() }
}

/// Evidence-level samples rebuilt from persisted records; every evidence
/// item is labeled with its entity's ground truth.
pub fn evidence_samples_from_records(
    records: &[EvidenceRecord],
    labels: &std::collections::BTreeMap<String, String>,
    split: &[String],
) -> Result<Vec<EvidenceSample>> {
    let in_split: std::collections::BTreeSet<&String> = split.iter().collect();
    records
        .iter()
        .filter(|r| in_split.contains(&r.entity_id))
        .map(|r| {
            let label = labels
                .get(&r.entity_id)
                .ok_or_else(|| LpfError::NotFound(format!("label for {}", r.entity_id)))?;
            Ok(EvidenceSample {
                embedding: embed_text(&r.text_content),
                predicate: r.predicate.clone(),
                label: label_index(label),
            })
        })
        .collect()
}

/// Entity-level samples rebuilt from persisted records, preserving file
/// order within each entity.
pub fn entity_samples_from_records(
    records: &[EvidenceRecord],
    labels: &std::collections::BTreeMap<String, String>,
    split: &[String],
) -> Result<Vec<EntitySample>> {
    let mut grouped: std::collections::BTreeMap<&String, Vec<&EvidenceRecord>> =
        std::collections::BTreeMap::new();
    for record in records {
        grouped.entry(&record.entity_id).or_default().push(record);
    }
    split
        .iter()
        .map(|id| {
            let label = labels
                .get(id)
                .ok_or_else(|| LpfError::NotFound(format!("label for {id}")))?;
            let rows = grouped.get(id).cloned().unwrap_or_default();
            Ok(EntitySample {
                entity_id: id.clone(),
                embeddings: rows.iter().map(|r| embed_text(&r.text_content)).collect(),
                predicate: COMPLIANCE_PREDICATE.into(),
                label: label_index(label),
            })
        })
        .collect()
}

impl ComplianceDataset {
    pub fn label_of(&self, entity_id: &str) -> Result<&str> {
        self.entities
            .iter()
            .find(|e| e.company_id == entity_id)
            .map(|e| e.compliance_level.as_str())
            .ok_or_else(|| LpfError::NotFound(format!("entity {entity_id}")))
    }

    pub fn label_index(&self, label: &str) -> usize {
        label_index(label)
    }

    /// Labeled (entity_id, label index) pairs for one split.
    pub fn labeled_entities(&self, split: &[String]) -> Vec<(String, usize)> {
        split
            .iter()
            .map(|id| {
                let label = self.label_of(id).expect("split ids exist");
                (id.clone(), label_index(label))
            })
            .collect()
    }

    /// Evidence-level training samples for a split; every evidence item is
    /// labeled with its entity's ground truth.
    pub fn evidence_samples(&self, split: &[String]) -> Vec<EvidenceSample> {
        let in_split: std::collections::BTreeSet<&String> = split.iter().collect();
        self.records
            .iter()
            .filter(|r| in_split.contains(&r.entity_id))
            .map(|r| {
                let label = self.label_of(&r.entity_id).expect("record entity exists");
                EvidenceSample {
                    embedding: embed_text(&r.text_content),
                    predicate: r.predicate.clone(),
                    label: label_index(label),
                }
            })
            .collect()
    }

    /// Entity-level samples (all evidence embeddings per entity) for the
    /// aggregator stage.
    pub fn entity_samples(&self, split: &[String]) -> Vec<EntitySample> {
        split
            .iter()
            .map(|id| {
                let entity = self
                    .entities
                    .iter()
                    .find(|e| e.company_id == *id)
                    .expect("split ids exist");
                EntitySample {
                    entity_id: id.clone(),
                    embeddings: entity
                        .evidence
                        .iter()
                        .map(|ev| embed_text(&ev.text))
                        .collect(),
                    predicate: COMPLIANCE_PREDICATE.into(),
                    label: label_index(&entity.compliance_level),
                }
            })
            .collect()
    }

    /// Ingests the whole corpus into a fresh evidence store.
    pub fn build_store(&self) -> EvidenceStore {
        let mut store = EvidenceStore::new();
        let report = store.ingest_records(self.records.clone());
        debug_assert!(report.rejections.is_empty());
        store
    }

    pub fn save_entities_jsonl(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        for entity in &self.entities {
            serde_json::to_writer(&mut file, entity)?;
            file.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save_evidence_jsonl(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        for record in &self.records {
            serde_json::to_writer(&mut file, record)?;
            file.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save_splits_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(&self.splits)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_corpus_shape() {
        let ds = generate_compliance_dataset(42, &DatasetOptions::default()).unwrap();
        assert_eq!(ds.entities.len(), 900);
        assert_eq!(ds.records.len(), 4500);
        assert_eq!(ds.splits.train.len(), 630);
        assert_eq!(ds.splits.val.len(), 135);
        assert_eq!(ds.splits.test.len(), 135);
        let low = ds.entities.iter().filter(|e| e.compliance_level == "low").count();
        let medium = ds.entities.iter().filter(|e| e.compliance_level == "medium").count();
        let high = ds.entities.iter().filter(|e| e.compliance_level == "high").count();
        assert_eq!((low, medium, high), (270, 360, 270));
    }

    #[test]
    fn full_corpus_ingests_into_store() {
        let ds = generate_compliance_dataset(42, &DatasetOptions::default()).unwrap();
        let store = ds.build_store();
        assert_eq!(store.len(), 4500);
        let ids = store.search("C0042", COMPLIANCE_PREDICATE, 10, None);
        assert_eq!(ids.len(), 5);
    }

    #[test]
    fn no_split_leakage_and_full_coverage() {
        let ds = generate_compliance_dataset(7, &DatasetOptions::default()).unwrap();
        let mut seen = std::collections::BTreeSet::new();
        for id in ds
            .splits
            .train
            .iter()
            .chain(&ds.splits.val)
            .chain(&ds.splits.test)
        {
            assert!(seen.insert(id.clone()), "{id} in two splits");
        }
        assert_eq!(seen.len(), 900);
    }

    #[test]
    fn credibilities_in_range_with_plausible_mean() {
        let ds = generate_compliance_dataset(42, &DatasetOptions::default()).unwrap();
        let creds: Vec<f64> = ds.records.iter().map(|r| r.credibility).collect();
        assert!(creds.iter().all(|c| (0.65..=0.98).contains(c)));
        // Beta(10,2) rescaled has mean 0.925; assert the generator's own
        // statistics, not the published empirical summary.
        let mean = creds.iter().sum::<f64>() / creds.len() as f64;
        assert!((mean - 0.925).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn generation_is_deterministic() {
        let opts = DatasetOptions::default();
        let a = generate_compliance_dataset(2024, &opts).unwrap();
        let b = generate_compliance_dataset(2024, &opts).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.splits, b.splits);
        assert_eq!(a.entities, b.entities);
        let c = generate_compliance_dataset(2025, &opts).unwrap();
        assert_ne!(a.records, c.records);
    }

    #[test]
    fn noise_fraction_roughly_respected() {
        let ds = generate_compliance_dataset(11, &DatasetOptions::default()).unwrap();
        let flipped = ds
            .records
            .iter()
            .filter(|r| {
                ds.label_of(&r.entity_id).unwrap() != r.supports_value.as_deref().unwrap()
            })
            .count();
        let fraction = flipped as f64 / ds.records.len() as f64;
        assert!((fraction - 0.1).abs() < 0.02, "noise fraction {fraction}");
        // Flips always land on an adjacent label.
        for r in &ds.records {
            let label = ds.label_of(&r.entity_id).unwrap();
            let supports = r.supports_value.as_deref().unwrap();
            if label != supports {
                assert!(
                    (label == "low" && supports == "medium")
                        || (label == "high" && supports == "medium")
                        || label == "medium",
                    "{label} flipped to non-adjacent {supports}"
                );
            }
        }
    }

    #[test]
    fn evidence_ids_follow_global_numbering() {
        let ds = generate_compliance_dataset(1, &DatasetOptions::default()).unwrap();
        assert_eq!(ds.records[0].evidence_id, "C0001_E1");
        assert_eq!(ds.records[4].evidence_id, "C0001_E5");
        // Entity 42 owns the global range 206..=210.
        assert_eq!(ds.records[205].evidence_id, "C0042_E206");
        assert_eq!(ds.records[209].evidence_id, "C0042_E210");
    }

    #[test]
    fn files_roundtrip_and_are_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let opts = DatasetOptions { n_entities: 30, evidence_per_entity: 5, noise: 0.1 };
        let ds = generate_compliance_dataset(3, &opts).unwrap();
        let ev = dir.path().join("evidence.jsonl");
        let en = dir.path().join("entities.jsonl");
        let sp = dir.path().join("splits.json");
        ds.save_evidence_jsonl(&ev).unwrap();
        ds.save_entities_jsonl(&en).unwrap();
        ds.save_splits_json(&sp).unwrap();
        let bytes1 = std::fs::read(&ev).unwrap();

        let ds2 = generate_compliance_dataset(3, &opts).unwrap();
        ds2.save_evidence_jsonl(&ev).unwrap();
        assert_eq!(bytes1, std::fs::read(&ev).unwrap());

        let mut store = EvidenceStore::new();
        let report = store.ingest_jsonl(&ev).unwrap();
        assert_eq!(report.indexed, 150);
        let splits: DatasetSplits =
            serde_json::from_str(&std::fs::read_to_string(&sp).unwrap()).unwrap();
        assert_eq!(splits, ds.splits);
    }

    #[test]
    fn sample_extraction_matches_split_sizes() {
        let opts = DatasetOptions { n_entities: 40, evidence_per_entity: 5, noise: 0.1 };
        let ds = generate_compliance_dataset(5, &opts).unwrap();
        let train_samples = ds.evidence_samples(&ds.splits.train);
        assert_eq!(train_samples.len(), ds.splits.train.len() * 5);
        let entities = ds.entity_samples(&ds.splits.val);
        assert_eq!(entities.len(), ds.splits.val.len());
        assert!(entities.iter().all(|e| e.embeddings.len() == 5));
    }
}
