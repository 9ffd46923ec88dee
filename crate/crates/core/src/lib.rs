//! Cross-lingual, query-based retrieval and summarization of crisis-related
//! social-media messages.
//!
//! The crate is `no_std` and only needs `alloc`. Everything that touches the
//! filesystem, the network or a wall clock lives in the `crisis-scope`
//! companion crate; this crate holds the algorithms:
//!
//! * [`corpus`]: messages, events, text normalization and cross-validation splits.
//! * [`linguistic`]: pluggable annotators and the 15 message-level features.
//! * [`encoder`]: sentence-embedding backends, the hashing mock and vector helpers.
//! * [`queries`]: structured queries and the six query-similarity features.
//! * [`nn`] and [`models`]: the feature-fusion network, its training loop,
//!   the informative-message classifier and the per-category ranker.
//! * [`summarize`]: regular and diversified (clustered) summarization.
//! * [`evaluate`]: classification metrics, claim recall, report similarity
//!   and the leave-one-language/event-out harnesses.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod corpus;
pub mod encoder;
pub mod evaluate;
pub mod linguistic;
pub mod models;
pub mod nn;
pub mod queries;
pub mod summarize;

mod rng;

pub use corpus::{CategoryId, EventCollection, Message, ReferenceReport, SplitPair};
pub use encoder::{cosine, Embedding, EncoderBackend, MockEncoder};
pub use queries::{Query, QueryEmbeddings, SimilarityFeatures};
