//! Multi-vector (late-interaction) page retrieval with compressed patch embeddings.
//!
//! Pages are stored as sets of patch vectors and scored against multi-token
//! queries with MaxSim. The crate reduces the number of vectors per page by
//! pruning ([`pruning`]) or merging ([`merging`]), measures what that costs in
//! NDCG@k ([`eval`]) and bytes ([`store::memory_footprint`]), and provides the
//! response-potential diagnostics in [`analysis`].
//!
//! Data lives in MVEC files; see [`store::format`].

pub mod analysis;
pub mod cli;
pub mod error;
pub mod eval;
pub mod merging;
pub mod pruning;
pub mod scoring;
pub mod store;
pub mod synthetic;

pub use error::{Error, Result};
pub use eval::{ndcg_at_k, run_sweep, CompressionSpec, EvalReport};
pub use merging::{MergeApproach, MergeSpec};
pub use pruning::{PruneSpec, PruneStrategy};
pub use scoring::{maxsim_score, retrieve_topk, RankedList};
pub use store::{Corpus, DType, Grid, Matrix, PageEmbeddings, QueryEmbeddings, Qrels};
