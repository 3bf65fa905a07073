//! Connector-aware compact chain-of-thought corpus tooling.
//!
//! The crate is split along the life of a reasoning corpus:
//!
//! - [`corpus`]: question ingestion, merging, exact and near-duplicate removal.
//! - [`promptkit`]: connector pools and the generation prompt.
//! - [`provider`]: text-generation backends (chat-completion HTTP client, offline mock).
//! - [`gatekeeper`]: trace parsing, the acceptance predicate and connector lints.
//! - [`pipeline`]: generate / validate / retry / drop orchestration with checkpoints.
//! - [`analytics`]: connector counting, corpus statistics, redundancy, scatter and segments.
//! - [`evalkit`]: Acc@k, Pass@1, Success and ART scoring of response dumps.

pub mod analytics;
pub mod corpus;
pub mod evalkit;
pub mod gatekeeper;
pub mod pipeline;
pub mod promptkit;
pub mod provider;

mod jsonl;

pub use analytics::{ConnectorCounts, ConnectorKind, ConnectorMatcher, Tokenizer, TokenizerSpec};
pub use corpus::{QuestionRecord, QuestionSet, Source};
pub use gatekeeper::{FailureReason, GateConfig, ParsedTrace, ValidationReport};
pub use pipeline::{Dataset, DropEntry, PipelineConfig, TraceRecord};
pub use promptkit::{ConnectorPool, GenerationMode, PromptText};
pub use provider::{Backend, GenParams, ProviderError, RawCompletion};

/// The refusal sentinel the prompt asks the generator to emit on unresolvable problems.
pub const REFUSAL_SENTINEL: &str = "Reasoning failed. Unable to provide an answer.";
