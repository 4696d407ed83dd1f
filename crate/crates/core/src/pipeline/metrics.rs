//! Evaluation metrics: accuracy, macro/weighted F1, NLL, Brier, ECE over
//! equal-width confidence bins, confusion matrix, selective classification,
//! and runtime statistics.

use crate::error::{LpfError, Result};
use crate::pipeline::argmax;

/// Selective-classification row at one confidence threshold.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SelectiveRow {
    pub threshold: f64,
    pub accepted: usize,
    pub rejected: usize,
    pub coverage: f64,
    /// Absent when nothing clears the threshold.
    pub accuracy_on_accepted: Option<f64>,
}

/// Full metrics suite over one prediction set.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub weighted_f1: f64,
    pub nll: f64,
    pub brier: f64,
    pub ece: f64,
    pub ece_bins: usize,
    /// Rows are true classes, columns predicted classes.
    pub confusion: Vec<Vec<usize>>,
    pub confidence_mean: f64,
    pub confidence_std: f64,
    pub selective: Vec<SelectiveRow>,
    pub runtime_ms_mean: f64,
    pub runtime_ms_total: f64,
}

pub const SELECTIVE_THRESHOLDS: [f64; 5] = [0.5, 0.6, 0.7, 0.8, 0.9];

/// Computes the full metric suite. Predictions are (distribution over
/// classes, true label index); the argmax tie-break is lowest index.
#[allow(clippy::needless_range_loop)]
pub fn compute_metrics(
    predictions: &[(Vec<f64>, usize)],
    runtimes: &[f64],
    n_classes: usize,
    ece_bins: usize,
) -> Result<MetricsReport> {
    if predictions.is_empty() {
        return Err(LpfError::Domain("metrics need at least one prediction".into()));
    }
    if ece_bins == 0 {
        return Err(LpfError::Domain("ECE needs at least one bin".into()));
    }
    for (probs, label) in predictions {
        if probs.len() != n_classes {
            return Err(LpfError::ShapeMismatch(format!(
                "prediction has {} entries for {n_classes} classes",
                probs.len()
            )));
        }
        if *label >= n_classes {
            return Err(LpfError::Domain(format!(
                "label {label} outside domain of {n_classes}"
            )));
        }
    }

    let n = predictions.len();
    let mut confusion = vec![vec![0usize; n_classes]; n_classes];
    let mut nll = 0.0;
    let mut brier = 0.0;
    let mut confidences = Vec::with_capacity(n);
    let mut correct_flags = Vec::with_capacity(n);
    for (probs, label) in predictions {
        let predicted = argmax(probs);
        confusion[*label][predicted] += 1;
        let confidence = probs[predicted];
        confidences.push(confidence);
        correct_flags.push(predicted == *label);
        nll += -probs[*label].max(1e-300).ln();
        for (k, p) in probs.iter().enumerate() {
            let y = if k == *label { 1.0 } else { 0.0 };
            brier += (p - y) * (p - y);
        }
    }
    nll /= n as f64;
    brier /= n as f64;
    let correct = correct_flags.iter().filter(|&&c| c).count();
    let accuracy = correct as f64 / n as f64;

    // Per-class F1.
    let mut macro_f1 = 0.0;
    let mut weighted_f1 = 0.0;
    for k in 0..n_classes {
        let tp = confusion[k][k];
        let fn_: usize = (0..n_classes).filter(|&j| j != k).map(|j| confusion[k][j]).sum();
        let fp: usize = (0..n_classes).filter(|&i| i != k).map(|i| confusion[i][k]).sum();
        let support = tp + fn_;
        let precision = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
        let recall = if support > 0 { tp as f64 / support as f64 } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        macro_f1 += f1 / n_classes as f64;
        weighted_f1 += f1 * support as f64 / n as f64;
    }

    // ECE over equal-width bins on [0, 1]; confidence 1.0 folds into the top
    // bin.
    let mut bin_count = vec![0usize; ece_bins];
    let mut bin_conf = vec![0.0f64; ece_bins];
    let mut bin_correct = vec![0usize; ece_bins];
    for (conf, correct) in confidences.iter().zip(&correct_flags) {
        let bin = ((conf * ece_bins as f64) as usize).min(ece_bins - 1);
        bin_count[bin] += 1;
        bin_conf[bin] += conf;
        if *correct {
            bin_correct[bin] += 1;
        }
    }
    let mut ece = 0.0;
    for b in 0..ece_bins {
        if bin_count[b] == 0 {
            continue;
        }
        let avg_conf = bin_conf[b] / bin_count[b] as f64;
        let avg_acc = bin_correct[b] as f64 / bin_count[b] as f64;
        ece += bin_count[b] as f64 / n as f64 * (avg_acc - avg_conf).abs();
    }

    let confidence_mean = confidences.iter().sum::<f64>() / n as f64;
    let confidence_var = confidences
        .iter()
        .map(|c| (c - confidence_mean).powi(2))
        .sum::<f64>()
        / n as f64;

    // Accepted set at threshold t is confidence strictly greater than t.
    let selective = SELECTIVE_THRESHOLDS
        .iter()
        .map(|&threshold| {
            let accepted_idx: Vec<usize> = (0..n)
                .filter(|&i| confidences[i] > threshold)
                .collect();
            let accepted = accepted_idx.len();
            let correct_accepted =
                accepted_idx.iter().filter(|&&i| correct_flags[i]).count();
            SelectiveRow {
                threshold,
                accepted,
                rejected: n - accepted,
                coverage: accepted as f64 / n as f64,
                accuracy_on_accepted: (accepted > 0)
                    .then(|| correct_accepted as f64 / accepted as f64),
            }
        })
        .collect();

    let runtime_ms_total: f64 = runtimes.iter().sum();
    let runtime_ms_mean = if runtimes.is_empty() {
        0.0
    } else {
        runtime_ms_total / runtimes.len() as f64
    };

    Ok(MetricsReport {
        n,
        accuracy,
        macro_f1,
        weighted_f1,
        nll,
        brier,
        ece,
        ece_bins,
        confusion,
        confidence_mean,
        confidence_std: confidence_var.sqrt(),
        selective,
        runtime_ms_mean,
        runtime_ms_total,
    })
}
