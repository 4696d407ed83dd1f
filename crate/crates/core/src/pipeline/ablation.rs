//! Ablation harness: sweeps one hyperparameter axis with everything else
//! fixed and emits machine-readable rows plus an aligned text table.

use crate::error::{LpfError, Result};
use crate::ledger::Ledger;
use crate::pipeline::{evaluate_entities, EvalMethod, MetricsReport, Orchestrator, QueryOptions};

/// Which knob the sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationAxis {
    NSamples,
    Temperature,
    Alpha,
    TopK,
}

impl AblationAxis {
    pub fn name(&self) -> &'static str {
        match self {
            AblationAxis::NSamples => "n_samples",
            AblationAxis::Temperature => "temperature",
            AblationAxis::Alpha => "alpha",
            AblationAxis::TopK => "top_k",
        }
    }

    /// The sweep grid used by the experiments.
    pub fn default_grid(&self) -> Vec<f64> {
        match self {
            AblationAxis::NSamples => vec![4.0, 8.0, 16.0, 32.0],
            AblationAxis::Temperature => vec![0.8, 1.0, 1.2, 1.5],
            AblationAxis::Alpha => vec![0.1, 1.0, 2.0, 5.0],
            AblationAxis::TopK => vec![1.0, 3.0, 5.0, 10.0, 20.0],
        }
    }

    fn apply(&self, value: f64, opts: &mut QueryOptions) -> Result<()> {
        match self {
            AblationAxis::NSamples => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(LpfError::Domain(format!("n_samples {value} invalid")));
                }
                opts.n_samples = value as usize;
            }
            AblationAxis::Temperature => {
                if value <= 0.0 {
                    return Err(LpfError::Domain(format!("temperature {value} invalid")));
                }
                opts.temperature = value;
            }
            AblationAxis::Alpha => {
                if value < 0.0 {
                    return Err(LpfError::Domain(format!("alpha {value} invalid")));
                }
                opts.alpha = value;
            }
            AblationAxis::TopK => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(LpfError::Domain(format!("top_k {value} invalid")));
                }
                opts.top_k = value as usize;
            }
        }
        Ok(())
    }
}

impl std::str::FromStr for AblationAxis {
    type Err = LpfError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "n_samples" => Ok(AblationAxis::NSamples),
            "temperature" => Ok(AblationAxis::Temperature),
            "alpha" => Ok(AblationAxis::Alpha),
            "top_k" => Ok(AblationAxis::TopK),
            other => Err(LpfError::Domain(format!("unknown ablation axis {other}"))),
        }
    }
}

/// One grid point's outcome.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct AblationRow {
    pub axis: String,
    pub value: f64,
    pub metrics: MetricsReport,
    pub mean_factor_weight: Option<f64>,
}

/// Runs one full evaluation per grid value with otherwise-fixed options.
#[allow(clippy::too_many_arguments)]
pub fn run_ablation(
    orchestrator: &Orchestrator<'_>,
    ledger: &mut Ledger,
    entities: &[(String, usize)],
    predicate: &str,
    axis: AblationAxis,
    values: &[f64],
    base_opts: &QueryOptions,
    seed: u64,
) -> Result<Vec<AblationRow>> {
    if values.is_empty() {
        return Err(LpfError::Domain("ablation grid must be nonempty".into()));
    }
    let mut rows = Vec::with_capacity(values.len());
    for &value in values {
        let mut opts = base_opts.clone();
        axis.apply(value, &mut opts)?;
        let outcome = evaluate_entities(
            orchestrator,
            ledger,
            entities,
            predicate,
            &opts,
            seed,
            EvalMethod::Variant,
        )?;
        rows.push(AblationRow {
            axis: axis.name().into(),
            value,
            metrics: outcome.metrics,
            mean_factor_weight: outcome.mean_factor_weight,
        });
    }
    Ok(rows)
}

/// Plain-text table with aligned columns, one row per grid value.
pub fn ablation_table_text(rows: &[AblationRow]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<12} {:>10} {:>10} {:>10} {:>10} {:>10} {:>12}\n",
        "axis", "value", "accuracy", "macro_f1", "nll", "ece", "mean_weight"
    ));
    for row in rows {
        out.push_str(&format!(
            "{:<12} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>12}\n",
            row.axis,
            row.value,
            row.metrics.accuracy,
            row.metrics.macro_f1,
            row.metrics.nll,
            row.metrics.ece,
            row.mean_factor_weight
                .map(|w| format!("{w:.4}"))
                .unwrap_or_else(|| "-".into()),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_parsing_and_grids() {
        assert_eq!("n_samples".parse::<AblationAxis>().unwrap(), AblationAxis::NSamples);
        assert_eq!("top-k".parse::<AblationAxis>().unwrap(), AblationAxis::TopK);
        assert!("latent_dim".parse::<AblationAxis>().is_err());
        assert_eq!(AblationAxis::NSamples.default_grid(), vec![4.0, 8.0, 16.0, 32.0]);
        assert_eq!(AblationAxis::Temperature.default_grid(), vec![0.8, 1.0, 1.2, 1.5]);
        assert_eq!(AblationAxis::Alpha.default_grid(), vec![0.1, 1.0, 2.0, 5.0]);
        assert_eq!(AblationAxis::TopK.default_grid(), vec![1.0, 3.0, 5.0, 10.0, 20.0]);
    }

    #[test]
    fn apply_validates_values() {
        let mut opts = QueryOptions::default();
        assert!(AblationAxis::NSamples.apply(2.5, &mut opts).is_err());
        assert!(AblationAxis::Temperature.apply(0.0, &mut opts).is_err());
        assert!(AblationAxis::TopK.apply(0.0, &mut opts).is_err());
        AblationAxis::Alpha.apply(5.0, &mut opts).unwrap();
        assert_eq!(opts.alpha, 5.0);
    }

    #[test]
    fn table_renders_one_line_per_row() {
        let metrics = crate::pipeline::compute_metrics(
            &[(vec![0.9, 0.1], 0), (vec![0.2, 0.8], 1)],
            &[1.0, 2.0],
            2,
            10,
        )
        .unwrap();
        let rows = vec![
            AblationRow {
                axis: "alpha".into(),
                value: 0.1,
                metrics: metrics.clone(),
                mean_factor_weight: Some(0.97),
            },
            AblationRow { axis: "alpha".into(), value: 1.0, metrics, mean_factor_weight: None },
        ];
        let text = ablation_table_text(&rows);
        assert_eq!(text.lines().count(), 3);
        assert!(text.contains("mean_weight"));
    }
}
