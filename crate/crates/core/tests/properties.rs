//! Property tests for the numeric kernel, factor transforms, posterior
//! invariants, and persistence round trips.

use lpf_core::evidence::EvidenceRecord;
use lpf_core::factors::{apply_weight, calibration_weight, temperature_scale};
use lpf_core::nets::{kl_to_standard_normal, LatentPosterior};
use lpf_core::numerics::{logsumexp, softmax, DenseVector};
use proptest::prelude::*;

fn finite_vec(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-500.0f64..500.0, 1..max_len)
}

fn simplex(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1e-6f64..1.0, 2..max_len).prop_map(|raw| {
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|r| r / total).collect()
    })
}

proptest! {
    #[test]
    fn logsumexp_bracketed_by_max(v in finite_vec(32)) {
        let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = logsumexp(&v).unwrap();
        prop_assert!(lse >= max - 1e-12);
        prop_assert!(lse <= max + (v.len() as f64).ln() + 1e-12);
    }

    #[test]
    fn softmax_shift_invariant_and_permutation_equivariant(
        v in finite_vec(16),
        shift in -200.0f64..200.0,
    ) {
        let base = softmax(&v).unwrap();
        prop_assert!((base.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let shifted: Vec<f64> = v.iter().map(|x| x + shift).collect();
        let shifted_out = softmax(&shifted).unwrap();
        for (a, b) in base.iter().zip(&shifted_out) {
            prop_assert!((a - b).abs() < 1e-9);
        }
        let mut reversed = v.clone();
        reversed.reverse();
        let mut reversed_out = softmax(&reversed).unwrap();
        reversed_out.reverse();
        for (a, b) in base.iter().zip(&reversed_out) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn factor_transforms_preserve_argmax_and_mass(
        dist in simplex(8),
        temperature in 0.05f64..20.0,
        weight in 0.001f64..1.0,
    ) {
        let argmax = |v: &[f64]| {
            v.iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0
        };
        let base = argmax(&dist);
        let scaled = temperature_scale(&dist, temperature).unwrap();
        prop_assert_eq!(argmax(&scaled), base);
        prop_assert!((scaled.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let damped = apply_weight(&dist, weight).unwrap();
        prop_assert_eq!(argmax(&damped), base);
        prop_assert!((damped.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn calibration_weight_monotone_under_sigma_growth(
        sigma in prop::collection::vec(0.01f64..5.0, 1..16),
        alpha in 0.0f64..10.0,
        bump in 0.01f64..2.0,
    ) {
        let base = DenseVector::new(sigma.clone()).unwrap();
        let bumped = DenseVector::new(sigma.iter().map(|s| s + bump).collect()).unwrap();
        let w0 = calibration_weight(&base, alpha);
        let w1 = calibration_weight(&bumped, alpha);
        prop_assert!(w0 > 0.0 && w0 < 1.0);
        prop_assert!(w1 <= w0 + 1e-15);
        if alpha > 0.0 {
            prop_assert!(w1 < w0);
        }
    }

    #[test]
    fn posterior_confidence_and_kl_invariants(
        pairs in prop::collection::vec((-5.0f64..5.0, 0.01f64..4.0), 1..16),
    ) {
        let (mu, sigma): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let posterior = LatentPosterior::new(
            "e",
            DenseVector::new(mu.clone()).unwrap(),
            DenseVector::new(sigma.clone()).unwrap(),
        )
        .unwrap();
        let expected = 1.0 / (1.0 + sigma.iter().sum::<f64>() / sigma.len() as f64);
        prop_assert!((posterior.confidence - expected).abs() < 1e-12);
        prop_assert!(kl_to_standard_normal(&posterior) >= -1e-12);
    }

    #[test]
    fn evidence_record_jsonl_roundtrip(
        id in "[a-zA-Z0-9_]{1,12}",
        entity in "[a-zA-Z0-9_]{1,12}",
        text in ".{0,80}",
        credibility in 0.0f64..1.0,
    ) {
        let record = EvidenceRecord {
            evidence_id: id,
            entity_id: entity,
            predicate: "compliance_level".into(),
            text_content: text,
            credibility,
            timestamp: "2026-01-10T00:00:00Z".into(),
            evidence_type: "text".into(),
            source: "audit_report".into(),
            embedding_id: None,
            supports_value: None,
        };
        let line = serde_json::to_string(&record).unwrap();
        let back: EvidenceRecord = serde_json::from_str(&line).unwrap();
        prop_assert_eq!(back, record);
    }
}
