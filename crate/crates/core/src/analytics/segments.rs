use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{AnalyticsError, ConnectorKind, ConnectorMatcher};
use crate::pipeline::TraceRecord;

/// Context around one connector occurrence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub question_id: String,
    /// Byte offset of the connector in the thinking text.
    pub offset: usize,
    pub before: String,
    /// The connector as written in the trace.
    pub text: String,
    /// The pool phrase it matched.
    pub phrase: String,
    pub kind: ConnectorKind,
    pub after: String,
}

/// `window` characters on each side of every connector, clipped at the trace bounds.
pub fn extract_segments(
    t: &TraceRecord,
    matcher: &ConnectorMatcher,
    window: usize,
) -> Result<Vec<Segment>, AnalyticsError> {
    if window == 0 {
        return Err(AnalyticsError::ZeroWindow);
    }
    let thinking = &t.thinking;
    Ok(matcher
        .find(thinking)
        .into_iter()
        .map(|m| {
            let head = &thinking[..m.start];
            let skip = head.chars().count().saturating_sub(window);
            Segment {
                question_id: t.question_id.clone(),
                offset: m.start,
                before: head.chars().skip(skip).collect(),
                text: thinking[m.start..m.end].to_string(),
                phrase: m.phrase,
                kind: m.kind,
                after: thinking[m.end..].chars().take(window).collect(),
            }
        })
        .collect())
}

pub fn write_segments_csv<W: Write>(segments: &[Segment], w: W) -> Result<(), AnalyticsError> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["question_id", "offset", "kind", "phrase", "before", "text", "after"])?;
    for s in segments {
        csv.write_record([
            s.question_id.as_str(),
            &s.offset.to_string(),
            s.kind.as_str(),
            &s.phrase,
            &s.before,
            &s.text,
            &s.after,
        ])?;
    }
    csv.flush()?;
    Ok(())
}
