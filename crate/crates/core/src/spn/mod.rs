//! Sum-product-network circuits: structural validation (completeness,
//! decomposability), dynamic weighted-likelihood attachment, and exact
//! log-space marginal inference.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{LpfError, Result};
use crate::factors::{apply_weight, SoftFactor};
use crate::numerics::logsumexp;

/// Prior distribution over one predicate's ordered domain.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PriorSpec {
    pub predicate: String,
    pub domain: Vec<String>,
    pub probabilities: Vec<f64>,
}

impl PriorSpec {
    pub fn new(predicate: impl Into<String>, domain: &[&str], probabilities: &[f64]) -> Result<Self> {
        let spec = Self {
            predicate: predicate.into(),
            domain: domain.iter().map(|s| s.to_string()).collect(),
            probabilities: probabilities.to_vec(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn uniform(predicate: impl Into<String>, domain: &[&str]) -> Self {
        let k = domain.len();
        Self {
            predicate: predicate.into(),
            domain: domain.iter().map(|s| s.to_string()).collect(),
            probabilities: vec![1.0 / k as f64; k],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.domain.is_empty() || self.domain.len() != self.probabilities.len() {
            return Err(LpfError::Domain(
                "prior domain and probabilities must align and be nonempty".into(),
            ));
        }
        let unique: BTreeSet<&String> = self.domain.iter().collect();
        if unique.len() != self.domain.len() {
            return Err(LpfError::Domain("prior domain has duplicate values".into()));
        }
        if self.probabilities.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(LpfError::Domain("prior probabilities outside [0, 1]".into()));
        }
        let total: f64 = self.probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(LpfError::Domain(format!("prior sums to {total}, not 1")));
        }
        Ok(())
    }
}

/// Circuit node. Children are arena indices into [`SpnCircuit::nodes`].
#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    /// Mixture over same-scope children with normalized weights.
    Sum { children: Vec<(usize, f64)> },
    /// Factorization over disjoint-scope children.
    Product { children: Vec<usize> },
    /// Categorical leaf over one variable, storing log prior probabilities.
    Leaf { variable: String, log_priors: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpnNode {
    pub kind: NodeKind,
    pub scope: BTreeSet<String>,
}

/// First structural violation found, with the arena path to the node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructuralViolation {
    pub kind: ViolationKind,
    pub node_path: Vec<usize>,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    /// Sum-node children disagree on scope.
    Completeness,
    /// Product-node children share scope variables.
    Decomposability,
    /// Sum-node mixture weights negative or not summing to 1.
    WeightSum,
    /// Cycle or dangling child index.
    Malformed,
    /// Leaf inconsistent with the variable registry.
    LeafShape,
}

impl std::fmt::Display for StructuralViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{:?} violation at node path {:?}: {}",
            self.kind, self.node_path, self.detail
        )
    }
}

/// An immutable, validated probabilistic circuit plus variable registry.
#[derive(Debug, Clone, PartialEq)]
pub struct SpnCircuit {
    nodes: Vec<SpnNode>,
    root: usize,
    variables: BTreeMap<String, Vec<String>>,
}

/// Weighted likelihood attached to a variable in a runtime view. The stored
/// log-potential is the power-weighted factor, so provenance reads directly
/// off the attachment.
#[derive(Debug, Clone)]
pub struct AttachedLikelihood {
    pub evidence_id: String,
    pub weight: f64,
    pub log_potential: Vec<f64>,
}

/// Mutable query-time view over a circuit: hard evidence plus attached soft
/// factors. Cheap to create; the underlying circuit is shared immutably.
#[derive(Debug, Clone)]
pub struct RuntimeSpn<'a> {
    circuit: &'a SpnCircuit,
    attachments: BTreeMap<String, Vec<AttachedLikelihood>>,
    evidence: BTreeMap<String, usize>,
}

/// Instrumentation for the linear-cost property.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalStats {
    pub node_visits: u64,
    /// Scalar accumulations performed inside leaf evaluations.
    pub leaf_ops: u64,
}

/// Marginal over a query variable's ordered domain.
#[derive(Debug, Clone)]
pub struct MarginalResult {
    pub domain: Vec<String>,
    pub probabilities: Vec<f64>,
    /// Normalization constant in linear space (diagnostic).
    pub z: f64,
    pub log_z: f64,
    pub stats: EvalStats,
}

impl MarginalResult {
    pub fn as_map(&self) -> BTreeMap<String, f64> {
        self.domain
            .iter()
            .cloned()
            .zip(self.probabilities.iter().copied())
            .collect()
    }

    /// Argmax with lowest-domain-index tie-break.
    pub fn top(&self) -> (&str, f64) {
        let mut best = 0;
        for (i, p) in self.probabilities.iter().enumerate().skip(1) {
            if *p > self.probabilities[best] {
                best = i;
            }
        }
        (&self.domain[best], self.probabilities[best])
    }
}

impl SpnCircuit {
    /// Root(sum, weight 1) → product → categorical leaf over the predicate.
    pub fn build_single_predicate(prior: &PriorSpec) -> Result<Self> {
        Self::build_multi_predicate(std::slice::from_ref(prior))
    }

    /// Product of independent single-predicate blocks under a unit sum root.
    pub fn build_multi_predicate(priors: &[PriorSpec]) -> Result<Self> {
        if priors.is_empty() {
            return Err(LpfError::Domain("at least one prior required".into()));
        }
        let mut nodes = Vec::new();
        let mut variables = BTreeMap::new();
        let mut leaf_ids = Vec::with_capacity(priors.len());
        for prior in priors {
            prior.validate()?;
            if variables.contains_key(&prior.predicate) {
                return Err(LpfError::Domain(format!(
                    "duplicate predicate {}",
                    prior.predicate
                )));
            }
            variables.insert(prior.predicate.clone(), prior.domain.clone());
            let log_priors = prior.probabilities.iter().map(|p| p.ln()).collect();
            nodes.push(SpnNode {
                kind: NodeKind::Leaf { variable: prior.predicate.clone(), log_priors },
                scope: BTreeSet::from([prior.predicate.clone()]),
            });
            leaf_ids.push(nodes.len() - 1);
        }
        let scope: BTreeSet<String> = variables.keys().cloned().collect();
        nodes.push(SpnNode {
            kind: NodeKind::Product { children: leaf_ids },
            scope: scope.clone(),
        });
        let product_id = nodes.len() - 1;
        nodes.push(SpnNode {
            kind: NodeKind::Sum { children: vec![(product_id, 1.0)] },
            scope,
        });
        let root = nodes.len() - 1;
        let circuit = Self { nodes, root, variables };
        circuit
            .validate()
            .map_err(|v| LpfError::Domain(v.to_string()))?;
        Ok(circuit)
    }

    /// Assembles a circuit from raw parts and returns it unvalidated;
    /// structural tests build deliberately broken circuits this way.
    pub fn from_parts(
        nodes: Vec<SpnNode>,
        root: usize,
        variables: BTreeMap<String, Vec<String>>,
    ) -> Self {
        Self { nodes, root, variables }
    }

    pub fn variables(&self) -> &BTreeMap<String, Vec<String>> {
        &self.variables
    }

    /// True iff the predicate is a registered variable.
    pub fn covers(&self, predicate: &str) -> bool {
        self.variables.contains_key(predicate)
    }

    pub fn domain(&self, predicate: &str) -> Result<&[String]> {
        self.variables
            .get(predicate)
            .map(|d| d.as_slice())
            .ok_or_else(|| LpfError::UnknownPredicate(predicate.to_string()))
    }

    /// Checks completeness, decomposability, weight normalization, leaf
    /// shape, and acyclicity; reports the first violation with a node path.
    pub fn validate(&self) -> std::result::Result<(), StructuralViolation> {
        let mut state = vec![0u8; self.nodes.len()]; // 0 new, 1 on stack, 2 done
        let mut scopes: Vec<Option<BTreeSet<String>>> = vec![None; self.nodes.len()];
        self.validate_node(self.root, &mut vec![self.root], &mut state, &mut scopes)
            .map(|_| ())
    }

    fn validate_node(
        &self,
        idx: usize,
        path: &mut Vec<usize>,
        state: &mut [u8],
        scopes: &mut [Option<BTreeSet<String>>],
    ) -> std::result::Result<BTreeSet<String>, StructuralViolation> {
        if idx >= self.nodes.len() {
            return Err(StructuralViolation {
                kind: ViolationKind::Malformed,
                node_path: path.clone(),
                detail: format!("child index {idx} out of bounds"),
            });
        }
        match state[idx] {
            1 => {
                return Err(StructuralViolation {
                    kind: ViolationKind::Malformed,
                    node_path: path.clone(),
                    detail: "cycle detected".into(),
                })
            }
            2 => return Ok(scopes[idx].clone().expect("computed scope")),
            _ => {}
        }
        state[idx] = 1;
        let node = &self.nodes[idx];
        let scope = match &node.kind {
            NodeKind::Leaf { variable, log_priors } => {
                let domain = self.variables.get(variable).ok_or_else(|| StructuralViolation {
                    kind: ViolationKind::LeafShape,
                    node_path: path.clone(),
                    detail: format!("leaf variable {variable} not in registry"),
                })?;
                if domain.len() != log_priors.len() {
                    return Err(StructuralViolation {
                        kind: ViolationKind::LeafShape,
                        node_path: path.clone(),
                        detail: format!(
                            "leaf for {variable} has {} log-priors for domain of {}",
                            log_priors.len(),
                            domain.len()
                        ),
                    });
                }
                BTreeSet::from([variable.clone()])
            }
            NodeKind::Product { children } => {
                let mut union: BTreeSet<String> = BTreeSet::new();
                for &child in children {
                    path.push(child);
                    let child_scope = self.validate_node(child, path, state, scopes)?;
                    path.pop();
                    if !union.is_disjoint(&child_scope) {
                        let shared: Vec<&String> = union.intersection(&child_scope).collect();
                        return Err(StructuralViolation {
                            kind: ViolationKind::Decomposability,
                            node_path: path.clone(),
                            detail: format!("product children share scope {shared:?}"),
                        });
                    }
                    union.extend(child_scope);
                }
                union
            }
            NodeKind::Sum { children } => {
                if children.is_empty() {
                    return Err(StructuralViolation {
                        kind: ViolationKind::Malformed,
                        node_path: path.clone(),
                        detail: "sum node with no children".into(),
                    });
                }
                if children.iter().any(|(_, w)| *w < 0.0) {
                    return Err(StructuralViolation {
                        kind: ViolationKind::WeightSum,
                        node_path: path.clone(),
                        detail: "negative mixture weight".into(),
                    });
                }
                let total: f64 = children.iter().map(|(_, w)| w).sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(StructuralViolation {
                        kind: ViolationKind::WeightSum,
                        node_path: path.clone(),
                        detail: format!("mixture weights sum to {total}"),
                    });
                }
                let mut shared: Option<BTreeSet<String>> = None;
                for (child, _) in children {
                    path.push(*child);
                    let child_scope = self.validate_node(*child, path, state, scopes)?;
                    path.pop();
                    match &shared {
                        None => shared = Some(child_scope),
                        Some(s) if *s == child_scope => {}
                        Some(s) => {
                            return Err(StructuralViolation {
                                kind: ViolationKind::Completeness,
                                node_path: path.clone(),
                                detail: format!(
                                    "sum children scopes differ: {s:?} vs {child_scope:?}"
                                ),
                            })
                        }
                    }
                }
                shared.expect("nonempty children")
            }
        };
        if node.scope != scope {
            return Err(StructuralViolation {
                kind: ViolationKind::Malformed,
                node_path: path.clone(),
                detail: format!("stored scope {:?} != computed {scope:?}", node.scope),
            });
        }
        state[idx] = 2;
        scopes[idx] = Some(scope.clone());
        Ok(scope)
    }

    /// Fresh runtime view with no evidence and no attachments.
    pub fn runtime(&self) -> RuntimeSpn<'_> {
        RuntimeSpn {
            circuit: self,
            attachments: BTreeMap::new(),
            evidence: BTreeMap::new(),
        }
    }
}

impl<'a> RuntimeSpn<'a> {
    pub fn circuit(&self) -> &SpnCircuit {
        self.circuit
    }

    pub fn attachments(&self) -> &BTreeMap<String, Vec<AttachedLikelihood>> {
        &self.attachments
    }

    /// Attaches a soft factor as a weighted likelihood on its variable. The
    /// power-weight transform happens here, so the stored potential is the
    /// damped one. Attachment order never affects query results.
    pub fn attach_likelihood(&mut self, factor: &SoftFactor) -> Result<()> {
        if factor.variables.len() != 1 {
            return Err(LpfError::Domain(format!(
                "likelihood factors bind exactly one variable, got {:?}",
                factor.variables
            )));
        }
        let variable = &factor.variables[0];
        let domain = self
            .circuit
            .variables
            .get(variable)
            .ok_or_else(|| LpfError::Domain(format!("unknown variable {variable}")))?;
        if factor.potential.len() != domain.len()
            || !domain.iter().all(|v| factor.potential.contains_key(v))
        {
            return Err(LpfError::Domain(format!(
                "factor domain {:?} does not match variable domain {domain:?}",
                factor.potential.keys().collect::<Vec<_>>()
            )));
        }
        let raw: Vec<f64> = domain.iter().map(|v| factor.potential[v]).collect();
        let weighted = apply_weight(&raw, factor.weight)?;
        self.attachments
            .entry(variable.clone())
            .or_default()
            .push(AttachedLikelihood {
                evidence_id: factor.evidence_id.clone(),
                weight: factor.weight,
                log_potential: weighted.iter().map(|p| p.ln()).collect(),
            });
        Ok(())
    }

    /// Conditions all subsequent queries on `variable = value`.
    pub fn set_evidence(&mut self, variable: &str, value: &str) -> Result<()> {
        let domain = self
            .circuit
            .variables
            .get(variable)
            .ok_or_else(|| LpfError::Domain(format!("unknown variable {variable}")))?;
        let idx = domain
            .iter()
            .position(|v| v == value)
            .ok_or_else(|| LpfError::Domain(format!("value {value} not in domain of {variable}")))?;
        self.evidence.insert(variable.to_string(), idx);
        Ok(())
    }

    /// Exact marginal of the query variable, computed entirely in log space
    /// and normalized with logsumexp.
    pub fn marginal(&self, query: &str) -> Result<MarginalResult> {
        let domain = self
            .circuit
            .variables
            .get(query)
            .ok_or_else(|| LpfError::UnknownPredicate(query.to_string()))?
            .clone();
        let mut stats = EvalStats::default();
        let mut log_unnorm = Vec::with_capacity(domain.len());
        for k in 0..domain.len() {
            let mut assignment = self.evidence.clone();
            match assignment.get(query) {
                Some(&fixed) if fixed != k => {
                    log_unnorm.push(f64::NEG_INFINITY);
                    continue;
                }
                _ => {
                    assignment.insert(query.to_string(), k);
                }
            }
            log_unnorm.push(self.eval(self.circuit.root, &assignment, &mut stats));
        }
        let log_z = logsumexp(&log_unnorm)?;
        if log_z == f64::NEG_INFINITY {
            return Err(LpfError::Domain(
                "query has zero probability mass under the attached evidence".into(),
            ));
        }
        let probabilities: Vec<f64> = log_unnorm.iter().map(|l| (l - log_z).exp()).collect();
        Ok(MarginalResult {
            domain,
            probabilities,
            z: log_z.exp(),
            log_z,
            stats,
        })
    }

    /// Bottom-up log-space evaluation under a partial assignment;
    /// unassigned variables are summed out at their leaves.
    fn eval(&self, idx: usize, assignment: &BTreeMap<String, usize>, stats: &mut EvalStats) -> f64 {
        stats.node_visits += 1;
        match &self.circuit.nodes[idx].kind {
            NodeKind::Leaf { variable, log_priors } => {
                let attachments = self.attachments.get(variable);
                let value_log_mass = |k: usize, stats: &mut EvalStats| -> f64 {
                    let mut acc = log_priors[k];
                    stats.leaf_ops += 1;
                    if let Some(list) = attachments {
                        for att in list {
                            acc += att.log_potential[k];
                            stats.leaf_ops += 1;
                        }
                    }
                    acc
                };
                match assignment.get(variable) {
                    Some(&k) => value_log_mass(k, stats),
                    None => {
                        let all: Vec<f64> = (0..log_priors.len())
                            .map(|k| value_log_mass(k, stats))
                            .collect();
                        logsumexp(&all).expect("nonempty domain")
                    }
                }
            }
            NodeKind::Product { children } => children
                .iter()
                .map(|&c| self.eval(c, assignment, stats))
                .sum(),
            NodeKind::Sum { children } => {
                let terms: Vec<f64> = children
                    .iter()
                    .map(|&(c, w)| {
                        if w == 0.0 {
                            f64::NEG_INFINITY
                        } else {
                            w.ln() + self.eval(c, assignment, stats)
                        }
                    })
                    .collect();
                logsumexp(&terms).expect("nonempty children")
            }
        }
    }
}
