//! Acceptance suite: thirteen numbered criteria covering the reference
//! scenario replay, Monte Carlo behavior, gradient correctness, SPN oracle
//! equivalence, the desk-scale end-to-end run, ablation trends, ledger
//! integrity, and the metrics oracle. One pass/fail line prints per
//! criterion; the test fails if any criterion fails.

use std::collections::BTreeMap;
use std::time::Instant;

use lpf_core::factors::{
    apply_weight, convert, ConversionOptions, FactorMetadata, SoftFactor,
};
use lpf_core::ledger::{self, Ledger, VerifyOutcome};
use lpf_core::nets::{aggregator_loss, elbo_loss_with_noise, seed_search};
use lpf_core::numerics::{DenseVector, RandomStream};
use lpf_core::pipeline::{
    argmax, compute_metrics, evaluate_entities, generate_compliance_dataset,
    replay_worked_example, run_ablation, uncertainty_decompose, AblationAxis, DatasetOptions,
    EvalMethod, Orchestrator, QueryOptions, Variant,
};
use lpf_core::spn::{PriorSpec, SpnCircuit};

struct Outcome {
    index: usize,
    name: &'static str,
    passed: bool,
    detail: String,
}

fn check(index: usize, name: &'static str, result: Result<String, String>) -> Outcome {
    match result {
        Ok(detail) => Outcome { index, name, passed: true, detail },
        Err(detail) => Outcome { index, name, passed: false, detail },
    }
}

#[test]
fn acceptance_criteria() {
    let mut outcomes = vec![
        check(1, "worked-example SPN replay", criterion_1()),
        check(2, "worked-example latent aggregation", criterion_2()),
        check(3, "power-transform fidelity", criterion_3()),
        check(4, "Monte Carlo variance law", criterion_4()),
        check(5, "gradient correctness", criterion_5()),
        check(6, "SPN oracle equivalence", criterion_6()),
        check(7, "unanimous-evidence consistency", criterion_7()),
        check(8, "uncertainty decomposition identity", criterion_8()),
    ];

    // Criteria 9-11 and 13 share one desk-scale training run.
    let desk = DeskScaleRun::execute();
    match desk {
        Ok(desk) => {
            outcomes.push(check(9, "desk-scale end-to-end training", desk.criterion_9()));
            outcomes.push(check(10, "ablation qualitative reproduction", desk.criterion_10()));
            outcomes.push(check(11, "ledger integrity", desk.criterion_11()));
            outcomes.push(check(12, "metrics oracle", criterion_12()));
            outcomes.push(check(13, "selective classification", desk.criterion_13()));
        }
        Err(e) => {
            for (index, name) in [
                (9, "desk-scale end-to-end training"),
                (10, "ablation qualitative reproduction"),
                (11, "ledger integrity"),
                (13, "selective classification"),
            ] {
                outcomes.push(Outcome {
                    index,
                    name,
                    passed: false,
                    detail: format!("desk-scale run failed: {e}"),
                });
            }
            outcomes.push(check(12, "metrics oracle", criterion_12()));
        }
    }

    outcomes.sort_by_key(|o| o.index);
    let mut failures = Vec::new();
    for outcome in &outcomes {
        let status = if outcome.passed { "PASS" } else { "FAIL" };
        println!(
            "criterion {:02} [{status}] {}: {}",
            outcome.index, outcome.name, outcome.detail
        );
        if !outcome.passed {
            failures.push(outcome.index);
        }
    }
    assert!(failures.is_empty(), "failed criteria: {failures:?}");
}

// Criterion 1: uniform prior + the five pre-weighted factors reproduce the
// published posterior within 2e-3 and match the brute-force oracle to 1e-9,
// in under a second.
fn criterion_1() -> Result<String, String> {
    let report = replay_worked_example().map_err(|e| e.to_string())?;
    if report.max_abs_error_vs_oracle > 1e-9 {
        return Err(format!("oracle gap {:.3e} > 1e-9", report.max_abs_error_vs_oracle));
    }
    if report.max_abs_error_vs_published > 2e-3 {
        return Err(format!(
            "published gap {:.3e} > 2e-3",
            report.max_abs_error_vs_published
        ));
    }
    if report.spn_top_value != "high" {
        return Err(format!("top value {}", report.spn_top_value));
    }
    if report.elapsed_ms >= 1000.0 {
        return Err(format!("runtime {:.1} ms >= 1 s", report.elapsed_ms));
    }
    Ok(format!(
        "posterior {:?}, oracle gap {:.2e}, published gap {:.2e}, {:.2} ms",
        report
            .spn_posterior
            .iter()
            .map(|p| (p * 1e4).round() / 1e4)
            .collect::<Vec<_>>(),
        report.max_abs_error_vs_oracle,
        report.max_abs_error_vs_published,
        report.elapsed_ms
    ))
}

// Criterion 2: the published aggregation weights reproduce the 0.814 first
// coordinate within 5e-4.
fn criterion_2() -> Result<String, String> {
    let report = replay_worked_example().map_err(|e| e.to_string())?;
    if report.z_agg_abs_error > 5e-4 {
        return Err(format!(
            "z_agg[0] = {:.6}, gap {:.2e} > 5e-4",
            report.z_agg_first, report.z_agg_abs_error
        ));
    }
    Ok(format!(
        "z_agg[0] = {:.5} vs published {:.3} (gap {:.2e})",
        report.z_agg_first, report.z_agg_published, report.z_agg_abs_error
    ))
}

// Criterion 3: apply_weight matches a brute-force oracle to 1e-12 and the
// published approximate values to 0.015.
fn criterion_3() -> Result<String, String> {
    let dist = [0.048, 0.155, 0.797];
    let powered: Vec<f64> = dist.iter().map(|p: &f64| p.powf(0.70)).collect();
    let z: f64 = powered.iter().sum();
    let oracle: Vec<f64> = powered.iter().map(|p| p / z).collect();
    let got = apply_weight(&dist, 0.70).map_err(|e| e.to_string())?;
    for (g, o) in got.iter().zip(&oracle) {
        if (g - o).abs() > 1e-12 {
            return Err(format!("oracle gap {:.3e} > 1e-12", (g - o).abs()));
        }
    }
    let published = [0.100, 0.223, 0.677];
    for (g, p) in got.iter().zip(&published) {
        if (g - p).abs() > 0.015 {
            return Err(format!("published gap {:.3e} > 0.015", (g - p).abs()));
        }
    }
    Ok(format!(
        "weighted factor [{:.5}, {:.5}, {:.5}]",
        got[0], got[1], got[2]
    ))
}

// Criterion 4: empirical standard deviation of the Monte Carlo potential
// over 200 independent conversions stays within 1.25·sqrt(0.25/M).
fn criterion_4() -> Result<String, String> {
    let started = Instant::now();
    let mut stream = RandomStream::new(404, 0);
    let decoder = test_decoder(&mut stream, 8, &["low", "medium", "high"]);
    let posterior = lpf_core::nets::LatentPosterior::new(
        "e",
        DenseVector::new((0..8).map(|_| stream.next_gaussian()).collect()).unwrap(),
        DenseVector::new(vec![1.0; 8]).unwrap(),
    )
    .unwrap();
    let domain: Vec<String> = decoder.domain("compliance_level").unwrap().to_vec();
    let mut details = Vec::new();
    for m in [4usize, 16, 64] {
        let opts = ConversionOptions { n_samples: m, alpha: 2.0, ..Default::default() };
        let mut values = Vec::with_capacity(200);
        for rep in 0..200u64 {
            let mut s = RandomStream::new(4000 + m as u64, rep);
            let factor = convert(&posterior, "compliance_level", &decoder, &opts, &mut s)
                .map_err(|e| e.to_string())?;
            values.push(factor.potential_vec(&domain).unwrap()[2]);
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
            / values.len() as f64)
            .sqrt();
        let bound = 1.25 * (0.25 / m as f64).sqrt();
        if sd > bound {
            return Err(format!("M={m}: sd {sd:.4} > bound {bound:.4}"));
        }
        details.push(format!("M={m}: sd {sd:.4} <= {bound:.4}"));
    }
    let elapsed = started.elapsed().as_secs_f64();
    if elapsed >= 30.0 {
        return Err(format!("runtime {elapsed:.1} s >= 30 s"));
    }
    Ok(format!("{} ({elapsed:.1} s)", details.join(", ")))
}

// Criterion 5: analytic gradients match central finite differences (step
// 1e-5) within relative error 1e-3 for both trainable losses, on 10 random
// small instances each. A mismatch is retried at step 1e-6: a ReLU unit
// sitting within 1e-5 of its kink makes the coarse difference straddle the
// nondifferentiable point, while a genuine gradient bug survives refinement.
fn criterion_5() -> Result<String, String> {
    let close = |analytic: f64, fd: f64| {
        (analytic - fd).abs() <= 1e-3 * analytic.abs().max(fd.abs()) + 1e-8
    };
    let h = 1e-5;
    let mut checked = 0usize;

    for instance in 0..10u64 {
        let mut stream = RandomStream::new(500 + instance, 0);
        let embed = 4 + stream.next_below(4);
        let latent = 2 + stream.next_below(3);
        let k = 2 + stream.next_below(3);
        let domain: Vec<String> = (0..k).map(|i| format!("v{i}")).collect();
        let domain_refs: Vec<&str> = domain.iter().map(String::as_str).collect();
        let mut encoder = lpf_core::nets::EncoderModel::new(embed, &[5], latent, 0.0, &mut stream);
        let mut decoder = test_decoder_with(&mut stream, latent, &domain_refs);
        let batch: Vec<lpf_core::nets::EvidenceSample> = (0..4)
            .map(|i| lpf_core::nets::EvidenceSample {
                embedding: DenseVector::new(
                    (0..embed).map(|_| stream.next_gaussian()).collect(),
                )
                .unwrap(),
                predicate: "compliance_level".into(),
                label: i % k,
            })
            .collect();
        let eps: Vec<Vec<f64>> = (0..4)
            .map(|_| stream.gaussian_vector(latent).into_vec())
            .collect();
        // Evaluate at a generic parameter point: zero-init biases can leave
        // pre-activations exactly on the ReLU kink, where the subgradient
        // convention and one-sided finite differences legitimately disagree.
        let enc_jittered: Vec<f64> = encoder
            .flatten_params()
            .iter()
            .map(|p| p + stream.next_gaussian() * 0.01)
            .collect();
        encoder.load_params(&enc_jittered).unwrap();
        let dec_jittered: Vec<f64> = decoder
            .flatten_params()
            .iter()
            .map(|p| p + stream.next_gaussian() * 0.01)
            .collect();
        decoder.load_params(&dec_jittered).unwrap();
        let out = elbo_loss_with_noise(&encoder, &decoder, &batch, 0.01, &eps, None)
            .map_err(|e| e.to_string())?;
        let mut analytic = Vec::new();
        out.encoder_grads.append_params(&mut analytic);
        out.decoder_grads.append_params(&mut analytic);
        let enc_count = encoder.param_count();
        let mut flat = encoder.flatten_params();
        flat.extend(decoder.flatten_params());
        for i in 0..flat.len() {
            let mut eval = |delta: f64| {
                let mut p = flat.clone();
                p[i] += delta;
                encoder.load_params(&p[..enc_count]).unwrap();
                decoder.load_params(&p[enc_count..]).unwrap();
                elbo_loss_with_noise(&encoder, &decoder, &batch, 0.01, &eps, None)
                    .unwrap()
                    .loss
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            if !close(analytic[i], fd) {
                let refined = (eval(h / 10.0) - eval(-h / 10.0)) / (2.0 * h / 10.0);
                if !close(analytic[i], refined) {
                    return Err(format!(
                        "elbo instance {instance} param {i}: analytic {} vs fd {fd}",
                        analytic[i]
                    ));
                }
            }
            checked += 1;
        }
        encoder.load_params(&flat[..enc_count]).unwrap();
        decoder.load_params(&flat[enc_count..]).unwrap();
    }

    for instance in 0..10u64 {
        let mut stream = RandomStream::new(600 + instance, 0);
        let latent = 2 + stream.next_below(3);
        let k = 2 + stream.next_below(3);
        let domain: Vec<String> = (0..k).map(|i| format!("v{i}")).collect();
        let domain_refs: Vec<&str> = domain.iter().map(String::as_str).collect();
        let decoder = test_decoder_with(&mut stream, latent, &domain_refs);
        let mut aggregator =
            lpf_core::nets::AggregatorModel::new(latent, &[5, 3], &[4, 3], &[4], 0.0, &mut stream);
        let n = 2 + stream.next_below(4);
        let posteriors: Vec<lpf_core::nets::LatentPosterior> = (0..n)
            .map(|i| {
                lpf_core::nets::LatentPosterior::new(
                    format!("e{i}"),
                    DenseVector::new((0..latent).map(|_| stream.next_gaussian()).collect())
                        .unwrap(),
                    DenseVector::new(
                        (0..latent).map(|_| stream.next_uniform() + 0.05).collect(),
                    )
                    .unwrap(),
                )
                .unwrap()
            })
            .collect();
        let label = stream.next_below(k);
        let agg_jittered: Vec<f64> = aggregator
            .flatten_params()
            .iter()
            .map(|p| p + stream.next_gaussian() * 0.01)
            .collect();
        aggregator.load_params(&agg_jittered).unwrap();
        let (_, grads) =
            aggregator_loss(&decoder, &aggregator, &posteriors, "compliance_level", label, None)
                .map_err(|e| e.to_string())?;
        let mut analytic = Vec::new();
        grads.append_params(&mut analytic);
        let flat = aggregator.flatten_params();
        for i in 0..flat.len() {
            let mut eval = |delta: f64| {
                let mut p = flat.clone();
                p[i] += delta;
                aggregator.load_params(&p).unwrap();
                aggregator_loss(
                    &decoder,
                    &aggregator,
                    &posteriors,
                    "compliance_level",
                    label,
                    None,
                )
                .unwrap()
                .0
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            if !close(analytic[i], fd) {
                let refined = (eval(h / 10.0) - eval(-h / 10.0)) / (2.0 * h / 10.0);
                if !close(analytic[i], refined) {
                    return Err(format!(
                        "aggregator instance {instance} param {i}: analytic {} vs fd {fd}",
                        analytic[i]
                    ));
                }
            }
            checked += 1;
        }
        aggregator.load_params(&flat).unwrap();
    }
    Ok(format!("{checked} parameter gradients within rel err 1e-3"))
}

// Criterion 6: marginals equal brute-force enumeration within 1e-9 on 1000
// random circuits; factor attachment order shifts results by at most 1e-12.
fn criterion_6() -> Result<String, String> {
    let stream = RandomStream::new(606, 0);
    let mut max_oracle_gap = 0.0f64;
    let mut max_order_gap = 0.0f64;
    for rep in 0..1000u64 {
        let mut s = stream.substream(rep);
        let k = 2 + s.next_below(9);
        let n = s.next_below(21);
        let domain: Vec<String> = (0..k).map(|i| format!("v{i}")).collect();
        let domain_refs: Vec<&str> = domain.iter().map(String::as_str).collect();
        let raw: Vec<f64> = (0..k).map(|_| s.next_uniform() + 0.01).collect();
        let total: f64 = raw.iter().sum();
        let probs: Vec<f64> = raw.iter().map(|r| r / total).collect();
        let prior = PriorSpec::new("var", &domain_refs, &probs).map_err(|e| e.to_string())?;
        let circuit = SpnCircuit::build_single_predicate(&prior).map_err(|e| e.to_string())?;
        let mut factors = Vec::with_capacity(n);
        for _ in 0..n {
            let raw: Vec<f64> = (0..k).map(|_| s.next_uniform() + 0.01).collect();
            let total: f64 = raw.iter().sum();
            factors.push(SoftFactor {
                evidence_id: "e".into(),
                variables: vec!["var".into()],
                factor_type: "likelihood".into(),
                potential: domain
                    .iter()
                    .cloned()
                    .zip(raw.iter().map(|r| r / total))
                    .collect(),
                weight: s.next_uniform() * 0.99 + 0.01,
                metadata: FactorMetadata {
                    n_samples: 1,
                    temperature: 1.0,
                    mean_sigma: 0.1,
                    base_confidence: 0.5,
                },
            });
        }
        let mut runtime = circuit.runtime();
        for f in &factors {
            runtime.attach_likelihood(f).map_err(|e| e.to_string())?;
        }
        let got = runtime.marginal("var").map_err(|e| e.to_string())?;

        // Brute-force oracle in plain arithmetic.
        let mut masses = probs.clone();
        for f in &factors {
            let raw: Vec<f64> = domain.iter().map(|v| f.potential[v]).collect();
            let weighted = apply_weight(&raw, f.weight).unwrap();
            for (m, w) in masses.iter_mut().zip(&weighted) {
                *m *= w;
            }
        }
        let z: f64 = masses.iter().sum();
        for (g, m) in got.probabilities.iter().zip(&masses) {
            max_oracle_gap = max_oracle_gap.max((g - m / z).abs());
        }

        // Reversed attachment order.
        let mut reversed = circuit.runtime();
        for f in factors.iter().rev() {
            reversed.attach_likelihood(f).map_err(|e| e.to_string())?;
        }
        let got_rev = reversed.marginal("var").map_err(|e| e.to_string())?;
        for (a, b) in got.probabilities.iter().zip(&got_rev.probabilities) {
            max_order_gap = max_order_gap.max((a - b).abs());
        }
    }
    if max_oracle_gap > 1e-9 {
        return Err(format!("oracle gap {max_oracle_gap:.3e} > 1e-9"));
    }
    if max_order_gap > 1e-12 {
        return Err(format!("order gap {max_order_gap:.3e} > 1e-12"));
    }
    Ok(format!(
        "1000 circuits: max oracle gap {max_oracle_gap:.2e}, max order gap {max_order_gap:.2e}"
    ))
}

// Criterion 7: ten near-deterministic unanimous factors at weight 1 drive
// the posterior above 1 − 1e-6.
fn criterion_7() -> Result<String, String> {
    let prior = PriorSpec::uniform("var", &["a", "b", "c"]);
    let circuit = SpnCircuit::build_single_predicate(&prior).map_err(|e| e.to_string())?;
    let mut runtime = circuit.runtime();
    for _ in 0..10 {
        runtime
            .attach_likelihood(&SoftFactor {
                evidence_id: "e".into(),
                variables: vec!["var".into()],
                factor_type: "likelihood".into(),
                potential: [
                    ("a".to_string(), 0.992),
                    ("b".to_string(), 0.004),
                    ("c".to_string(), 0.004),
                ]
                .into_iter()
                .collect(),
                weight: 1.0,
                metadata: FactorMetadata {
                    n_samples: 1,
                    temperature: 1.0,
                    mean_sigma: 0.1,
                    base_confidence: 1.0,
                },
            })
            .map_err(|e| e.to_string())?;
    }
    let marginal = runtime.marginal("var").map_err(|e| e.to_string())?;
    let p_star = marginal.probabilities[0];
    if p_star < 1.0 - 1e-6 {
        return Err(format!("P(y*) = {p_star} < 1 - 1e-6"));
    }
    Ok(format!("P(y*) = 1 - {:.2e}", 1.0 - p_star))
}

// Criterion 8: total − (epistemic + aleatoric) within 1e-10 on random
// instances; degenerate variance forces epistemic below 1e-6.
fn criterion_8() -> Result<String, String> {
    let mut stream = RandomStream::new(808, 0);
    let decoder = test_decoder(&mut stream, 6, &["low", "medium", "high"]);
    let mut max_identity_gap = 0.0f64;
    for rep in 0..100u64 {
        let mut s = stream.substream(rep);
        let mu: Vec<f64> = (0..6).map(|_| s.next_gaussian()).collect();
        let sigma: Vec<f64> = (0..6).map(|_| s.next_uniform() * 1.5 + 0.02).collect();
        let posterior = lpf_core::nets::LatentPosterior::new(
            "e",
            DenseVector::new(mu).unwrap(),
            DenseVector::new(sigma).unwrap(),
        )
        .unwrap();
        let d = uncertainty_decompose(&[posterior], "compliance_level", &decoder, 8, &mut s)
            .map_err(|e| e.to_string())?;
        for k in 0..3 {
            max_identity_gap =
                max_identity_gap.max((d.total[k] - d.epistemic[k] - d.aleatoric[k]).abs());
        }
    }
    if max_identity_gap > 1e-10 {
        return Err(format!("identity gap {max_identity_gap:.3e} > 1e-10"));
    }
    let tight = lpf_core::nets::LatentPosterior::new(
        "e",
        DenseVector::new(vec![0.4; 6]).unwrap(),
        DenseVector::new(vec![0.0; 6]).unwrap(),
    )
    .unwrap();
    let d = uncertainty_decompose(&[tight], "compliance_level", &decoder, 16, &mut stream)
        .map_err(|e| e.to_string())?;
    let max_epistemic = d.epistemic.iter().copied().fold(0.0f64, f64::max);
    if max_epistemic > 1e-6 {
        return Err(format!("sigma_min epistemic {max_epistemic:.3e} > 1e-6"));
    }
    Ok(format!(
        "identity gap {max_identity_gap:.2e}, degenerate epistemic {max_epistemic:.2e}"
    ))
}

// Criterion 12: metrics match brute-force references within 1e-12 on 100
// random instances, plus the exact perfect-predictor identities.
fn criterion_12() -> Result<String, String> {
    let stream = RandomStream::new(1212, 0);
    for rep in 0..100u64 {
        let mut s = stream.substream(rep);
        let k = 2 + s.next_below(4);
        let n = 1 + s.next_below(1000);
        let predictions: Vec<(Vec<f64>, usize)> = (0..n)
            .map(|_| {
                let raw: Vec<f64> = (0..k).map(|_| s.next_uniform() + 1e-3).collect();
                let total: f64 = raw.iter().sum();
                (raw.iter().map(|r| r / total).collect(), s.next_below(k))
            })
            .collect();
        let m = compute_metrics(&predictions, &[], k, 10).map_err(|e| e.to_string())?;

        // Independent reference implementations.
        let mut nll = 0.0;
        let mut brier = 0.0;
        let mut confusion = vec![vec![0usize; k]; k];
        let mut bins: BTreeMap<usize, Vec<(f64, bool)>> = BTreeMap::new();
        for (p, y) in &predictions {
            nll -= p[*y].ln();
            for (idx, pi) in p.iter().enumerate() {
                brier += (pi - if idx == *y { 1.0 } else { 0.0 }).powi(2);
            }
            let pred = argmax(p);
            confusion[*y][pred] += 1;
            let conf = p[pred];
            bins.entry(((conf * 10.0) as usize).min(9))
                .or_default()
                .push((conf, pred == *y));
        }
        nll /= n as f64;
        brier /= n as f64;
        let mut ece = 0.0;
        for bucket in bins.values() {
            let conf = bucket.iter().map(|(c, _)| c).sum::<f64>() / bucket.len() as f64;
            let acc =
                bucket.iter().filter(|(_, ok)| *ok).count() as f64 / bucket.len() as f64;
            ece += bucket.len() as f64 / n as f64 * (acc - conf).abs();
        }
        let mut macro_f1 = 0.0;
        #[allow(clippy::needless_range_loop)]
        for c in 0..k {
            let tp = confusion[c][c] as f64;
            let fp: usize = (0..k).filter(|&i| i != c).map(|i| confusion[i][c]).sum();
            let fn_: usize = (0..k).filter(|&j| j != c).map(|j| confusion[c][j]).sum();
            let precision = if tp + fp as f64 > 0.0 { tp / (tp + fp as f64) } else { 0.0 };
            let recall = if tp + fn_ as f64 > 0.0 { tp / (tp + fn_ as f64) } else { 0.0 };
            if precision + recall > 0.0 {
                macro_f1 += 2.0 * precision * recall / (precision + recall);
            }
        }
        macro_f1 /= k as f64;

        for (name, ours, reference) in [
            ("nll", m.nll, nll),
            ("brier", m.brier, brier),
            ("ece", m.ece, ece),
            ("macro_f1", m.macro_f1, macro_f1),
        ] {
            if (ours - reference).abs() > 1e-12 {
                return Err(format!(
                    "rep {rep}: {name} {ours} vs reference {reference}"
                ));
            }
        }
    }

    // Exact identities for a perfect one-hot predictor.
    let perfect: Vec<(Vec<f64>, usize)> = (0..30)
        .map(|i| {
            let label = i % 3;
            let mut p = vec![0.0; 3];
            p[label] = 1.0;
            (p, label)
        })
        .collect();
    let m = compute_metrics(&perfect, &[], 3, 10).map_err(|e| e.to_string())?;
    if m.accuracy != 1.0 || m.nll != 0.0 || m.brier != 0.0 || m.ece != 0.0 {
        return Err(format!(
            "perfect predictor: acc {} nll {} brier {} ece {}",
            m.accuracy, m.nll, m.brier, m.ece
        ));
    }
    Ok("100 random instances within 1e-12; perfect-predictor identities exact".into())
}

// ---------------------------------------------------------------------------
// Desk-scale shared run (criteria 9, 10, 11, 13)
// ---------------------------------------------------------------------------

const DATASET_SEED: u64 = 7;
const TRAIN_SEEDS: [u64; 3] = [42, 123, 456];
const EVAL_SEED: u64 = 7;
const NOW: &str = "2026-02-01T00:00:00Z";

struct DeskScaleRun {
    spn_metrics: lpf_core::pipeline::MetricsReport,
    baseline_metrics: lpf_core::pipeline::MetricsReport,
    alpha_rows: Vec<lpf_core::pipeline::AblationRow>,
    topk_rows: Vec<lpf_core::pipeline::AblationRow>,
    train_seconds: f64,
    total_seconds: f64,
    ledger_dir: tempfile::TempDir,
    replay_gap: f64,
    ledger_records: usize,
}

impl DeskScaleRun {
    fn execute() -> Result<Self, String> {
        let t0 = Instant::now();
        let dataset = generate_compliance_dataset(DATASET_SEED, &DatasetOptions::default())
            .map_err(|e| e.to_string())?;
        let train = dataset.evidence_samples(&dataset.splits.train);
        let val = dataset.evidence_samples(&dataset.splits.val);
        let (encoder, decoder, _) = seed_search(
            &train,
            &val,
            vec![dataset.predicate.clone()],
            &lpf_core::nets::TrainOptions::default(),
            &TRAIN_SEEDS,
        )
        .map_err(|e| e.to_string())?;
        let train_seconds = t0.elapsed().as_secs_f64();

        let store = dataset.build_store();
        let orchestrator = Orchestrator::new(&store, &encoder, &decoder, None, &[], NOW)
            .map_err(|e| e.to_string())?;
        let test_entities = dataset.labeled_entities(&dataset.splits.test);
        let ledger_dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let ledger_path = ledger_dir.path().join("ledger.jsonl");
        let mut ledger = Ledger::open(&ledger_path).map_err(|e| e.to_string())?;

        // The evaluation configuration follows the tuned-optimal settings
        // (n=16, T=1.0, alpha=0.1, k=5).
        let opts = QueryOptions { variant: Variant::Spn, alpha: 0.1, ..Default::default() };
        let spn = evaluate_entities(
            &orchestrator,
            &mut ledger,
            &test_entities,
            "compliance_level",
            &opts,
            EVAL_SEED,
            EvalMethod::Variant,
        )
        .map_err(|e| e.to_string())?;
        let baseline = evaluate_entities(
            &orchestrator,
            &mut ledger,
            &test_entities,
            "compliance_level",
            &opts,
            EVAL_SEED,
            EvalMethod::VaeBaseline,
        )
        .map_err(|e| e.to_string())?;

        let alpha_rows = run_ablation(
            &orchestrator,
            &mut ledger,
            &test_entities,
            "compliance_level",
            AblationAxis::Alpha,
            &[0.1, 1.0, 2.0, 5.0],
            &opts,
            EVAL_SEED,
        )
        .map_err(|e| e.to_string())?;
        let topk_rows = run_ablation(
            &orchestrator,
            &mut ledger,
            &test_entities,
            "compliance_level",
            AblationAxis::TopK,
            &[1.0, 3.0, 5.0],
            &opts,
            EVAL_SEED,
        )
        .map_err(|e| e.to_string())?;

        // Replay check: re-execute one recorded query with identical inputs
        // and diff against the recorded distribution.
        let mut stream = RandomStream::new(999, 0);
        let entity = &test_entities[0].0;
        let result = orchestrator
            .handle_query(entity, "compliance_level", &opts, &mut ledger, &mut stream)
            .map_err(|e| e.to_string())?;
        let record_id = result.record_id.clone().ok_or("missing record id")?;
        let bundle = ledger::replay(&ledger_path, &record_id).map_err(|e| e.to_string())?;
        let rerun_dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let mut rerun_ledger =
            Ledger::open(&rerun_dir.path().join("ledger.jsonl")).map_err(|e| e.to_string())?;
        let mut rerun_stream = RandomStream::new(999, 0);
        let rerun = orchestrator
            .handle_query(entity, "compliance_level", &opts, &mut rerun_ledger, &mut rerun_stream)
            .map_err(|e| e.to_string())?;
        let replay_gap = rerun
            .distribution
            .iter()
            .map(|(value, p)| (bundle.distribution[value] - p).abs())
            .fold(0.0f64, f64::max);

        let ledger_records = ledger.len();
        Ok(Self {
            spn_metrics: spn.metrics,
            baseline_metrics: baseline.metrics,
            alpha_rows,
            topk_rows,
            train_seconds,
            total_seconds: t0.elapsed().as_secs_f64(),
            ledger_dir,
            replay_gap,
            ledger_records,
        })
    }

    // Criterion 9: accuracy >= 0.85, strictly above the averaging baseline,
    // ECE <= 0.15, all inside 20 minutes.
    fn criterion_9(&self) -> Result<String, String> {
        if self.spn_metrics.accuracy < 0.85 {
            return Err(format!("accuracy {:.4} < 0.85", self.spn_metrics.accuracy));
        }
        if self.spn_metrics.accuracy <= self.baseline_metrics.accuracy {
            return Err(format!(
                "accuracy {:.4} not strictly above baseline {:.4}",
                self.spn_metrics.accuracy, self.baseline_metrics.accuracy
            ));
        }
        if self.spn_metrics.ece > 0.15 {
            return Err(format!("ECE {:.4} > 0.15", self.spn_metrics.ece));
        }
        if self.total_seconds >= 1200.0 {
            return Err(format!("runtime {:.0} s >= 20 min", self.total_seconds));
        }
        Ok(format!(
            "accuracy {:.4} > baseline {:.4}, ECE {:.4}, train {:.0} s, total {:.0} s",
            self.spn_metrics.accuracy,
            self.baseline_metrics.accuracy,
            self.spn_metrics.ece,
            self.train_seconds,
            self.total_seconds
        ))
    }

    // Criterion 10: mean factor weight strictly decreasing along the alpha
    // grid; accuracy nondecreasing along top_k {1, 3, 5}.
    fn criterion_10(&self) -> Result<String, String> {
        let weights: Vec<f64> = self
            .alpha_rows
            .iter()
            .map(|r| r.mean_factor_weight.ok_or("missing mean factor weight"))
            .collect::<Result<_, _>>()?;
        for pair in weights.windows(2) {
            if pair[1] >= pair[0] {
                return Err(format!("mean weights not strictly decreasing: {weights:?}"));
            }
        }
        let accs: Vec<f64> = self.topk_rows.iter().map(|r| r.metrics.accuracy).collect();
        for pair in accs.windows(2) {
            if pair[1] < pair[0] {
                return Err(format!("top_k accuracy decreasing: {accs:?}"));
            }
        }
        Ok(format!(
            "alpha weights {:?} strictly decreasing; top_k accuracy {:?} nondecreasing",
            weights.iter().map(|w| (w * 1e4).round() / 1e4).collect::<Vec<_>>(),
            accs.iter().map(|a| (a * 1e4).round() / 1e4).collect::<Vec<_>>()
        ))
    }

    // Criterion 11: a 1000+-record ledger verifies clean; mutation and
    // deletion are caught at the right records; replays agree to 1e-9.
    fn criterion_11(&self) -> Result<String, String> {
        let path = self.ledger_dir.path().join("ledger.jsonl");
        if self.ledger_records < 1000 {
            return Err(format!("only {} records accumulated", self.ledger_records));
        }
        match ledger::verify(&path).map_err(|e| e.to_string())? {
            VerifyOutcome::Ok { records } if records == self.ledger_records => {}
            other => return Err(format!("clean ledger verify failed: {other:?}")),
        }

        // Single-byte mutation inside record 500's body.
        let original = std::fs::read(&path).map_err(|e| e.to_string())?;
        let mutated_path = self.ledger_dir.path().join("mutated.jsonl");
        let line_start: usize = {
            let mut count = 0usize;
            let mut offset = 0usize;
            for (i, b) in original.iter().enumerate() {
                if *b == b'\n' {
                    count += 1;
                    if count == 499 {
                        offset = i + 1;
                        break;
                    }
                }
            }
            offset
        };
        let mut mutated = original.clone();
        // Flip a digit in the middle of the record body.
        let target = line_start + 120;
        mutated[target] = if mutated[target] == b'7' { b'8' } else { b'7' };
        std::fs::write(&mutated_path, &mutated).map_err(|e| e.to_string())?;
        match ledger::verify(&mutated_path).map_err(|e| e.to_string())? {
            VerifyOutcome::Broken { line: 500, .. } => {}
            other => return Err(format!("mutation not caught at record 500: {other:?}")),
        }

        // Deletion of record 500 breaks the chain at record 501.
        let deleted_path = self.ledger_dir.path().join("deleted.jsonl");
        let text = String::from_utf8(original).map_err(|e| e.to_string())?;
        let mut lines: Vec<&str> = text.lines().collect();
        lines.remove(499);
        std::fs::write(&deleted_path, lines.join("\n") + "\n").map_err(|e| e.to_string())?;
        match ledger::verify(&deleted_path).map_err(|e| e.to_string())? {
            VerifyOutcome::Broken { record_id: Some(id), .. } if id == "INF00000501" => {}
            other => return Err(format!("deletion not caught at record 501: {other:?}")),
        }

        if self.replay_gap > 1e-9 {
            return Err(format!("replay distribution gap {:.3e} > 1e-9", self.replay_gap));
        }
        Ok(format!(
            "{} records verified; tamper and deletion localized; replay gap {:.2e}",
            self.ledger_records, self.replay_gap
        ))
    }

    // Criterion 13: selective accuracy at threshold 0.9 at least matches the
    // 0.5 threshold.
    fn criterion_13(&self) -> Result<String, String> {
        let at = |t: f64| {
            self.spn_metrics
                .selective
                .iter()
                .find(|row| row.threshold == t)
                .and_then(|row| row.accuracy_on_accepted)
                .ok_or(format!("no accepted predictions at threshold {t}"))
        };
        let low = at(0.5)?;
        let high = at(0.9)?;
        if high < low {
            return Err(format!("accuracy@0.9 {high:.4} < accuracy@0.5 {low:.4}"));
        }
        Ok(format!("accuracy@0.9 {high:.4} >= accuracy@0.5 {low:.4}"))
    }
}

// ---------------------------------------------------------------------------
// helpers
// ---------------------------------------------------------------------------

fn test_decoder(
    stream: &mut RandomStream,
    latent: usize,
    domain: &[&str],
) -> lpf_core::nets::DecoderModel {
    test_decoder_with(stream, latent, domain)
}

fn test_decoder_with(
    stream: &mut RandomStream,
    latent: usize,
    domain: &[&str],
) -> lpf_core::nets::DecoderModel {
    lpf_core::nets::DecoderModel::new(
        latent,
        3,
        &[5],
        vec![lpf_core::nets::PredicateSpec::new("compliance_level", domain)],
        0.0,
        stream,
    )
}
