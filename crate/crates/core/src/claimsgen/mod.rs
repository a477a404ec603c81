//! Synthetic claims datasets with controlled time-dependent confounding.

pub mod corpus;
pub mod dataset;
pub mod generator;
pub mod scenario;
pub mod sequence;

pub use corpus::{ingest_corpus, inject_semisynthetic, Corpus};
pub use dataset::{generate_synthetic, ClaimsDataset, DatasetHeader, DatasetStats, LabeledSample};
pub use generator::{
    gen_occurrence_probs, gen_record_sequence, sample_spline_coeffs, GeneratorParams, Interval,
    SplineArchetype,
};
pub use scenario::{
    assign_treatment, consec_feature, distance_feature, scenario_outcome, scenario_propensity,
    window_feature, ScenarioKind, ScenarioSpec,
};
pub use sequence::{Code, RecordSequence};
