//! Hidden Markov model segmentation: exact posterior decoding, pin-constrained
//! Viterbi, iterative refinement of low-confidence positions, and bounds on
//! Viterbi classification probabilities.

pub mod bounds;
pub mod error;
pub mod experiments;
pub mod inference;
pub mod io;
pub mod logspace;
pub mod model;
pub mod refine;

pub use error::{Error, Result};
pub use inference::{Decoder, PinSet, PosteriorTables};
pub use model::{EmissionModel, ModelSpec, ObservationSequence, StatePath};
pub use refine::{
    BunchOutcome, BunchSelection, ExitReason, Metrics, RefinementConfig, RefinementTrace, Refiner,
    ReplacementMode,
};
