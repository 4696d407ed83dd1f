//! Latent posterior factors (LPF): calibrated multi-evidence aggregation.
//!
//! Evidence items are encoded into diagonal-Gaussian latent posteriors,
//! converted into weighted soft likelihood factors by Monte Carlo decoding,
//! and aggregated either by exact sum-product-network inference (`LPF-SPN`)
//! or by a learned latent-space aggregator (`LPF-Learned`). Every inference
//! is written to an append-only, hash-chained provenance ledger.
//!
//! Module map:
//!
//! - [`numerics`]: dense vectors/matrices, stable reductions, a counter-based
//!   deterministic random stream, and the Adam optimizer
//! - [`nets`]: VAE encoder, conditional decoder, learned-aggregator networks,
//!   hand-derived gradients, and the two-stage training loops with seed search
//! - [`factors`]: latent posterior → weighted soft likelihood factor conversion
//! - [`spn`]: sum-product-network circuits with exact log-space marginals
//! - [`evidence`]: deterministic text embedder, entity-predicate index,
//!   JSONL metadata store, and the canonical-fact fast path
//! - [`ledger`]: append-only hash-chained provenance records
//! - [`pipeline`]: the query orchestrator, synthetic dataset generator,
//!   metrics suite, and ablation harness
//! - [`checkpoint`]: model persistence

pub mod checkpoint;
pub mod error;
pub mod evidence;
pub mod factors;
pub mod ledger;
pub mod nets;
pub mod numerics;
pub mod pipeline;
pub mod spn;

pub use error::{LpfError, Result};

#[cfg(test)]
mod concurrency_contract {
    //! Models, stores, circuits, and factors are shareable across threads;
    //! mutable state is confined to training, optimizer state, and streams.

    fn assert_send_sync<T: Send + Sync>() {}

    #[test]
    fn shared_types_are_send_and_sync() {
        assert_send_sync::<crate::numerics::DenseVector>();
        assert_send_sync::<crate::numerics::DenseMatrix>();
        assert_send_sync::<crate::numerics::RandomStream>();
        assert_send_sync::<crate::numerics::AdamState>();
        assert_send_sync::<crate::nets::EncoderModel>();
        assert_send_sync::<crate::nets::DecoderModel>();
        assert_send_sync::<crate::nets::AggregatorModel>();
        assert_send_sync::<crate::nets::LatentPosterior>();
        assert_send_sync::<crate::factors::SoftFactor>();
        assert_send_sync::<crate::spn::SpnCircuit>();
        assert_send_sync::<crate::spn::RuntimeSpn<'static>>();
        assert_send_sync::<crate::evidence::EvidenceStore>();
        assert_send_sync::<crate::ledger::ProvenanceRecord>();
    }
}
