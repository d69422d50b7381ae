//! Multimodal punctuation restoration.
//!
//! Token embeddings from a text encoder and frame embeddings from an
//! acoustic model are joined frame by frame using a forced alignment,
//! projected by a linear fusion layer, and classified in 301-frame windows
//! centred on each token boundary by a dilated time-delay network. The
//! network's posteriors are blended with text-only posteriors to pick one
//! of comma, full stop, question mark or no punctuation per word.

pub mod cli;
pub mod dataset;
pub mod ensemble;
pub mod fusion;
pub mod ingest;
pub mod synth;
pub mod tdnn;
pub mod types;

pub use types::{
    validate_pair, validate_pair_with, AlignmentEntry, AlignmentTable, EmbeddingKind, EmbeddingMatrix, ModalityDims,
    PosteriorRecord, PunctClass, ValidationReport,
};
