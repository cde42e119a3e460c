//! Retrieval evaluation: metrics, reports, field ablations and the
//! expanded-versus-original similarity analysis.

pub mod ablation;
pub mod metrics;
pub mod report;
pub mod similarity;

pub use ablation::{
    ablate, ablation_suite, AblationReport, AblationSettings, AblationSuite, Protocol, Variant,
};
pub use metrics::{completeness_at_k, ndcg_at_k, recall_at_k, MetricTriple};
pub use report::{evaluate, format_table, Averaging, EvalReport, DEFAULT_KS};
pub use similarity::{
    sample_similarity_pairs, similarity_analysis, SimilarityPair, SimilarityReport,
};
