//! Connector and length measurements over reasoning traces.
//!
//! All measurements look at the thinking section only. Token counts come from
//! a pluggable [`Tokenizer`]; every report carries the tokenizer name because
//! absolute lengths are tokenizer-dependent.

mod matcher;
mod segments;
mod stats;
mod tokenizer;

pub use matcher::{
    count_connectors, normalize_for_matching, normalize_phrase, ConnectorCounts, ConnectorKind, ConnectorMatch,
    ConnectorMatcher, NormalizedText,
};
pub use segments::{extract_segments, write_segments_csv, Segment};
pub use stats::{
    corpus_stats, redundancy_histogram, render_stats_report, scatter_export, text_stats, trace_stats,
    write_histogram_csv, write_scatter_csv, write_stats_csv, BinSpec, CorpusStats, Histogram, ScatterRow, TraceStats,
};
pub use tokenizer::{Tokenizer, TokenizerSpec};

#[derive(Debug, thiserror::Error)]
pub enum AnalyticsError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("segment window must be positive")]
    ZeroWindow,
    #[error("invalid histogram bins: {0}")]
    BadBins(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
