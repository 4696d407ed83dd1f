//! Built-in reference scenario: a five-evidence compliance query with
//! published factor potentials, aggregation weights, and posteriors. Replay
//! re-derives everything through the real SPN and aggregation arithmetic and
//! diffs against both a brute-force oracle and the published values.

use crate::error::Result;
use crate::factors::{FactorMetadata, SoftFactor};
use crate::spn::{PriorSpec, SpnCircuit};

/// Published fixture values for the reference scenario.
#[derive(Debug, Clone)]
pub struct WorkedExampleFixture {
    /// Pre-weighted factor potentials over {low, medium, high}.
    pub factor_potentials: [[f64; 3]; 5],
    /// Credibility weights the factors carried before pre-weighting.
    pub factor_weights: [f64; 5],
    /// Published uniform-prior posterior {low, medium, high}.
    pub published_posterior: [f64; 3],
    /// Learned-aggregation mixture weights.
    pub aggregation_weights: [f64; 5],
    /// First coordinate of each posterior mean.
    pub mu_first_coordinates: [f64; 5],
    /// Published aggregate first coordinate.
    pub published_z_agg_first: f64,
    /// Published learned-variant output distribution.
    pub published_learned_distribution: [f64; 3],
}

impl Default for WorkedExampleFixture {
    fn default() -> Self {
        Self {
            factor_potentials: [
                [0.100, 0.223, 0.677],
                [0.092, 0.211, 0.697],
                [0.112, 0.238, 0.650],
                [0.125, 0.251, 0.624],
                [0.085, 0.198, 0.717],
            ],
            factor_weights: [0.70, 0.73, 0.68, 0.66, 0.75],
            published_posterior: [0.0001, 0.0047, 0.9952],
            aggregation_weights: [0.217, 0.209, 0.203, 0.185, 0.223],
            mu_first_coordinates: [0.82, 0.78, 0.75, 0.71, 0.85],
            published_z_agg_first: 0.814,
            published_learned_distribution: [0.019, 0.067, 0.914],
        }
    }
}

/// Replay outcome with every computed value and tolerance check.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct WorkedExampleReport {
    pub domain: Vec<String>,
    pub spn_posterior: Vec<f64>,
    pub spn_oracle: Vec<f64>,
    pub spn_published: Vec<f64>,
    pub max_abs_error_vs_oracle: f64,
    pub max_abs_error_vs_published: f64,
    pub spn_top_value: String,
    pub z_agg_first: f64,
    pub z_agg_published: f64,
    pub z_agg_abs_error: f64,
    pub learned_top_value: String,
    pub elapsed_ms: f64,
    pub failures: Vec<String>,
    pub passed: bool,
}

const DOMAIN: [&str; 3] = ["low", "medium", "high"];

fn fixture_factor(index: usize, potential: &[f64; 3]) -> SoftFactor {
    SoftFactor {
        evidence_id: format!("e{}", index + 1),
        variables: vec!["compliance_level".into()],
        factor_type: "likelihood".into(),
        potential: DOMAIN
            .iter()
            .map(|s| s.to_string())
            .zip(potential.iter().copied())
            .collect(),
        // The fixture potentials are already power-weighted, so they attach
        // at weight 1.
        weight: 1.0,
        metadata: FactorMetadata {
            n_samples: 16,
            temperature: 1.0,
            mean_sigma: 0.105,
            base_confidence: 0.89,
        },
    }
}

/// Brute-force product oracle in plain arithmetic.
fn oracle_posterior(fixture: &WorkedExampleFixture) -> Vec<f64> {
    let mut masses = [1.0 / 3.0; 3];
    for potential in &fixture.factor_potentials {
        for (m, p) in masses.iter_mut().zip(potential) {
            *m *= p;
        }
    }
    let z: f64 = masses.iter().sum();
    masses.iter().map(|m| m / z).collect()
}

/// Replays the reference scenario against the default fixture.
pub fn replay_worked_example() -> Result<WorkedExampleReport> {
    replay_worked_example_with(&WorkedExampleFixture::default())
}

/// Replays against a caller-supplied fixture (tests corrupt it on purpose).
pub fn replay_worked_example_with(
    fixture: &WorkedExampleFixture,
) -> Result<WorkedExampleReport> {
    let started = std::time::Instant::now();
    let mut failures = Vec::new();

    let prior = PriorSpec::uniform("compliance_level", &DOMAIN);
    let circuit = SpnCircuit::build_single_predicate(&prior)?;
    let mut runtime = circuit.runtime();
    for (i, potential) in fixture.factor_potentials.iter().enumerate() {
        runtime.attach_likelihood(&fixture_factor(i, potential))?;
    }
    let marginal = runtime.marginal("compliance_level")?;
    let oracle = oracle_posterior(fixture);

    let max_abs_error_vs_oracle = marginal
        .probabilities
        .iter()
        .zip(&oracle)
        .map(|(p, o)| (p - o).abs())
        .fold(0.0f64, f64::max);
    if max_abs_error_vs_oracle > 1e-9 {
        failures.push(format!(
            "SPN marginal deviates from brute-force oracle by {max_abs_error_vs_oracle:.3e} (> 1e-9)"
        ));
    }
    let max_abs_error_vs_published = marginal
        .probabilities
        .iter()
        .zip(&fixture.published_posterior)
        .map(|(p, e)| (p - e).abs())
        .fold(0.0f64, f64::max);
    if max_abs_error_vs_published > 2e-3 {
        failures.push(format!(
            "SPN marginal deviates from published posterior by {max_abs_error_vs_published:.3e} (> 2e-3)"
        ));
    }
    let spn_top_value = marginal.top().0.to_string();
    if spn_top_value != "high" {
        failures.push(format!("SPN top value is {spn_top_value}, expected high"));
    }

    let z_agg_first: f64 = fixture
        .aggregation_weights
        .iter()
        .zip(&fixture.mu_first_coordinates)
        .map(|(w, m)| w * m)
        .sum();
    let z_agg_abs_error = (z_agg_first - fixture.published_z_agg_first).abs();
    if z_agg_abs_error > 5e-4 {
        failures.push(format!(
            "aggregate first coordinate {z_agg_first:.6} deviates from {} by {z_agg_abs_error:.3e} (> 5e-4)",
            fixture.published_z_agg_first
        ));
    }

    let learned_top_idx = crate::pipeline::argmax(&fixture.published_learned_distribution);
    let learned_top_value = DOMAIN[learned_top_idx].to_string();
    if learned_top_value != "high" {
        failures.push(format!(
            "learned-variant top value is {learned_top_value}, expected high"
        ));
    }

    let elapsed_ms = started.elapsed().as_secs_f64() * 1e3;
    if elapsed_ms >= 1000.0 {
        failures.push(format!("replay took {elapsed_ms:.1} ms (>= 1 s)"));
    }

    Ok(WorkedExampleReport {
        domain: DOMAIN.iter().map(|s| s.to_string()).collect(),
        spn_posterior: marginal.probabilities,
        spn_oracle: oracle,
        spn_published: fixture.published_posterior.to_vec(),
        max_abs_error_vs_oracle,
        max_abs_error_vs_published,
        spn_top_value,
        z_agg_first,
        z_agg_published: fixture.published_z_agg_first,
        z_agg_abs_error,
        learned_top_value,
        elapsed_ms,
        passed: failures.is_empty(),
        failures,
    })
}
