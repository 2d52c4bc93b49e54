//! Linear-chain CRF over referent masks: neural potentials, exact inference, k-best
//! decoding and likelihood gradients.

pub mod chain;
pub mod inference;
pub mod mask;
pub mod potentials;

pub use chain::{Chain, ChainLogPartition};
pub use inference::{dot_marginals, log_partition_var, map_and_kbest, sequence_nll, sequence_score_var, CrfResult, ScoredSequence};
pub use mask::{ReferentMask, ReferentSequence, NUM_MASKS};
pub use potentials::{log_partition, unstructured_mode, CrfDims, CrfPotentials, CrfScorer, PotentialSet};
