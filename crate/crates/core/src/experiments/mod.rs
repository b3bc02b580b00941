//! Reproducible experiments: two deterministic counterexamples and two
//! simulation studies comparing iterative and bunch refinement.

mod counterexample;
mod gaussian;
mod protein;

pub use counterexample::{
    counterexample_small_prob, pin_probability_limit, q_table, small_prob_model,
    unsuccessful_peeping_report, CounterexampleS4Config, PeepingReport, QTable, SmallProbReport,
};
pub use gaussian::{
    gaussian_model, run_gaussian_experiment, GaussianResult, MeanSd, ReplicateResult, RunRecord,
    SummaryRow,
};
pub use protein::{
    normalize_emission_columns, protein_model, run_protein_experiment, Method, ProteinResult,
    ProteinRow, ProteinSchedule, Renormalization, DEFAULT_SCHEDULE, EMISSION_TABLE,
    PROTEIN_INADMISSIBLE_SEED, PROTEIN_LENGTH,
};
