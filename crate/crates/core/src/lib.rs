//! Factual precision scoring for long-form model output.
//!
//! The pipeline splits a subject model's response into sentences, decomposes
//! each sentence into atomic facts with a few-shot prompted model, validates
//! every fact against passages retrieved from a local knowledge base, and
//! reports the fraction of supported facts. The [`evalharness`] module holds
//! the metrics used to compare automatic estimates with human annotations.

pub mod afg;
pub mod afv;
pub mod backends;
pub mod cli;
pub mod corpus;
pub mod evalharness;
pub mod jsonl;
pub mod prompts;
pub mod retrieval;
pub mod scoring;
pub mod text;

mod pool;

pub use afg::{AtomicFact, DemoEntry, FactSet, Sentence, SubjectGeneration};
pub use afv::{Label, ValidationStrategy, Verdict};
pub use backends::{Backend, BackendError, ChatMessage, GenerationParams, Role};
pub use corpus::{Document, KbStore, Passage};
pub use retrieval::{InvertedIndex, KbIndex, RankedHit};
pub use scoring::{RunReport, TopicReport};
