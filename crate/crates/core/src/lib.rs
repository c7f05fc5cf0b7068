//! Build a problem/method atlas from a corpus of publication abstracts.
//!
//! The pipeline runs in stages, each a module here:
//!
//! * [`corpus`] loads and validates publication records and splits them by year.
//! * [`extraction`] asks a text-generation client for problem, method and usage
//!   aspects plus the AI4Science classification.
//! * [`embedding`] turns aspects into instruction-conditioned vectors.
//! * [`clustering`] lays vectors out in 2D, clusters them and labels clusters.
//! * [`atlas`] builds the problem↔method bipartite graph and its statistics.
//! * [`linkpred`] predicts new problem↔method links four ways.
//! * [`eval`] scores prediction runs.
//! * [`pipeline`] orchestrates all of the above over a project directory.

pub mod atlas;
pub mod clustering;
pub mod corpus;
pub mod embedding;
pub mod eval;
pub mod extraction;
pub mod io;
pub mod linkpred;
pub mod pipeline;
pub mod plot;
pub mod text;

pub use corpus::{Community, Corpus, CorpusSplit, Publication};
pub use extraction::{AspectExtraction, ExtractionSet, GenClient};
