use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AnalyticsError, ConnectorMatcher, Tokenizer};
use crate::pipeline::TraceRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStats {
    pub token_len: usize,
    pub connector_total: usize,
    pub distinct_connectors: usize,
    /// `None` when the trace has no tokens.
    pub conn_per_1k: Option<f64>,
    /// Uses per distinct phrase; `None` when no connector occurs.
    pub redundancy: Option<f64>,
}

pub fn text_stats(thinking: &str, tok: &dyn Tokenizer, matcher: &ConnectorMatcher) -> TraceStats {
    let token_len = tok.count(thinking);
    let counts = matcher.count(thinking);
    let connector_total = counts.total;
    let distinct = counts.distinct();
    TraceStats {
        token_len,
        connector_total,
        distinct_connectors: distinct,
        conn_per_1k: (token_len > 0).then(|| 1000.0 * connector_total as f64 / token_len as f64),
        redundancy: (connector_total > 0).then(|| connector_total as f64 / distinct as f64),
    }
}

/// Length and connector statistics of one trace's thinking section.
pub fn trace_stats(t: &TraceRecord, tok: &dyn Tokenizer, matcher: &ConnectorMatcher) -> TraceStats {
    text_stats(&t.thinking, tok, matcher)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub tokenizer: String,
    pub n_samples: usize,
    /// Mean thinking length in tokens.
    pub len_avg: f64,
    /// Micro-average: `1000 * sum(connectors) / sum(tokens)`.
    pub conn_per_1k: f64,
    /// Mean of per-trace Conn/1K over traces with at least one token.
    pub conn_per_1k_macro: Option<f64>,
    pub token_total: usize,
    pub connector_total: usize,
}

pub fn corpus_stats(
    records: &[TraceRecord],
    tok: &dyn Tokenizer,
    matcher: &ConnectorMatcher,
) -> Result<CorpusStats, AnalyticsError> {
    if records.is_empty() {
        return Err(AnalyticsError::EmptyDataset);
    }
    let per_trace: Vec<TraceStats> = records.par_iter().map(|t| trace_stats(t, tok, matcher)).collect();
    let token_total: usize = per_trace.iter().map(|s| s.token_len).sum();
    let connector_total: usize = per_trace.iter().map(|s| s.connector_total).sum();
    let densities: Vec<f64> = per_trace.iter().filter_map(|s| s.conn_per_1k).collect();
    let n = per_trace.len();
    Ok(CorpusStats {
        tokenizer: tok.name().to_string(),
        n_samples: n,
        len_avg: token_total as f64 / n as f64,
        conn_per_1k: if token_total == 0 {
            0.0
        } else {
            1000.0 * connector_total as f64 / token_total as f64
        },
        conn_per_1k_macro: (!densities.is_empty()).then(|| densities.iter().sum::<f64>() / densities.len() as f64),
        token_total,
        connector_total,
    })
}

/// Human-readable table in `Dataset | Len | Conn/1K | # Samples` order.
pub fn render_stats_report(rows: &[(String, CorpusStats)], with_macro: bool) -> String {
    let tokenizer = rows.first().map(|(_, s)| s.tokenizer.as_str()).unwrap_or("-");
    let mut out =
        format!("# tokenizer: {tokenizer}\n# Conn/1K: micro-average, 1000 * total connectors / total tokens\n");
    let width = rows
        .iter()
        .map(|(l, _)| l.len())
        .max()
        .unwrap_or(0)
        .max("Dataset".len());
    out.push_str(&format!("{:<width$}  {:>10}  {:>8}", "Dataset", "Len", "Conn/1K"));
    if with_macro {
        out.push_str(&format!("  {:>13}", "Conn/1K macro"));
    }
    out.push_str(&format!("  {:>9}\n", "# Samples"));
    for (label, s) in rows {
        out.push_str(&format!("{label:<width$}  {:>10.2}  {:>8.2}", s.len_avg, s.conn_per_1k));
        if with_macro {
            match s.conn_per_1k_macro {
                Some(m) => out.push_str(&format!("  {m:>13.2}")),
                None => out.push_str(&format!("  {:>13}", "-")),
            }
        }
        out.push_str(&format!("  {:>9}\n", s.n_samples));
    }
    out
}

pub fn write_stats_csv<W: Write>(rows: &[(String, CorpusStats)], w: W) -> Result<(), AnalyticsError> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record([
        "dataset",
        "len",
        "conn_per_1k",
        "n_samples",
        "conn_per_1k_macro",
        "tokenizer",
    ])?;
    for (label, s) in rows {
        csv.write_record([
            label.clone(),
            format!("{:.4}", s.len_avg),
            format!("{:.4}", s.conn_per_1k),
            s.n_samples.to_string(),
            s.conn_per_1k_macro.map(|m| format!("{m:.4}")).unwrap_or_default(),
            s.tokenizer.clone(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinSpec {
    pub width: f64,
    /// Left edge of the first bin; defaults to the smallest value rounded down
    /// to a multiple of `width`.
    pub start: Option<f64>,
}

impl Default for BinSpec {
    fn default() -> Self {
        BinSpec {
            width: 1.0,
            start: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `counts.len() + 1` edges; bin `i` covers `[edges[i], edges[i+1])`.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// Traces without connectors, whose redundancy is undefined.
    pub undefined: usize,
    pub warnings: Vec<String>,
}

/// Histogram of per-trace redundancy (uses per distinct connector).
pub fn redundancy_histogram(
    records: &[TraceRecord],
    matcher: &ConnectorMatcher,
    bins: BinSpec,
) -> Result<Histogram, AnalyticsError> {
    if !(bins.width.is_finite() && bins.width > 0.0) {
        return Err(AnalyticsError::BadBins(format!(
            "width must be positive, got {}",
            bins.width
        )));
    }
    let values: Vec<Option<f64>> = records
        .par_iter()
        .map(|t| {
            let c = matcher.count(&t.thinking);
            (c.total > 0).then(|| c.total as f64 / c.distinct() as f64)
        })
        .collect();
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    let undefined = values.len() - defined.len();
    let mut warnings = Vec::new();
    if defined.is_empty() {
        let msg = format!("no trace uses a connector; {undefined} traces excluded");
        log::warn!("{msg}");
        warnings.push(msg);
        return Ok(Histogram {
            edges: Vec::new(),
            counts: Vec::new(),
            undefined,
            warnings,
        });
    }
    let min = defined.iter().copied().fold(f64::INFINITY, f64::min);
    let max = defined.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let start = bins.start.unwrap_or_else(|| (min / bins.width).floor() * bins.width);
    if start > min {
        return Err(AnalyticsError::BadBins(format!(
            "start {start} lies above the smallest value {min}"
        )));
    }
    let n_bins = ((max - start) / bins.width).floor() as usize + 1;
    let mut counts = vec![0usize; n_bins];
    for v in &defined {
        let i = (((v - start) / bins.width).floor() as usize).min(n_bins - 1);
        counts[i] += 1;
    }
    let edges = (0..=n_bins).map(|i| start + i as f64 * bins.width).collect();
    if undefined > 0 {
        warnings.push(format!("{undefined} traces without connectors excluded"));
    }
    Ok(Histogram {
        edges,
        counts,
        undefined,
        warnings,
    })
}

pub fn write_histogram_csv<W: Write>(h: &Histogram, w: W) -> Result<(), AnalyticsError> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["bin_start", "bin_end", "count"])?;
    for (i, c) in h.counts.iter().enumerate() {
        csv.write_record([h.edges[i].to_string(), h.edges[i + 1].to_string(), c.to_string()])?;
    }
    csv.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub question_id: String,
    pub connector_total: usize,
    pub token_len: usize,
}

/// One `(question_id, connector_total, token_len)` row per trace.
pub fn scatter_export(records: &[TraceRecord], tok: &dyn Tokenizer, matcher: &ConnectorMatcher) -> Vec<ScatterRow> {
    records
        .par_iter()
        .map(|t| {
            let s = trace_stats(t, tok, matcher);
            ScatterRow {
                question_id: t.question_id.clone(),
                connector_total: s.connector_total,
                token_len: s.token_len,
            }
        })
        .collect()
}

pub fn write_scatter_csv<W: Write>(rows: &[ScatterRow], w: W) -> Result<(), AnalyticsError> {
    let mut csv = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    csv.write_record(["question_id", "connector_total", "token_len"])?;
    for r in rows {
        csv.serialize(r)?;
    }
    csv.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::TokenizerSpec;
    use crate::promptkit::ConnectorPool;

    fn trace(id: &str, thinking: &str) -> TraceRecord {
        TraceRecord::external(id, "", thinking, "")
    }

    fn words(n: usize) -> String {
        vec!["w"; n].join(" ")
    }

    fn matcher() -> ConnectorMatcher {
        ConnectorMatcher::new(&ConnectorPool::base())
    }

    #[test]
    fn density_from_definition() {
        // one-word phrases keep the token count at exactly 400
        let pool = ConnectorPool::new("t", vec!["Yes.".into()], vec!["Hmm.".into()]).unwrap();
        let m = ConnectorMatcher::new(&pool);
        let text = format!("{} Yes. {} Hmm.", words(199), words(199));
        let s = text_stats(&text, &TokenizerSpec::Whitespace, &m);
        assert_eq!(s.token_len, 400);
        assert_eq!(s.connector_total, 2);
        assert_eq!(s.conn_per_1k, Some(5.0));
        assert_eq!(s.redundancy, Some(1.0));
    }

    #[test]
    fn redundancy_of_repeated_phrase() {
        let text = "Yes, that checks out. a Yes, that checks out. b Yes, that checks out.";
        let s = text_stats(text, &TokenizerSpec::Whitespace, &matcher());
        assert_eq!(s.redundancy, Some(3.0));
        let none = text_stats("plain", &TokenizerSpec::Whitespace, &matcher());
        assert_eq!(none.redundancy, None);
        assert_eq!(text_stats("", &TokenizerSpec::Whitespace, &matcher()).conn_per_1k, None);
    }

    #[test]
    fn corpus_uses_micro_average() {
        let pool = ConnectorPool::new("t", vec!["Yes.".into()], vec!["Hmm.".into()]).unwrap();
        let m = ConnectorMatcher::new(&pool);
        let d = [
            trace("a", &format!("{} Yes.", words(99))),
            trace("b", &format!("{} Hmm.", words(299))),
        ];
        let s = corpus_stats(&d, &TokenizerSpec::Whitespace, &m).unwrap();
        assert_eq!(s.len_avg, 200.0);
        assert_eq!(s.conn_per_1k, 5.0);
        let macro_avg = s.conn_per_1k_macro.unwrap();
        assert!((macro_avg - 20.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn single_trace_corpus_equals_trace() {
        let t = trace("a", "Solid logic so far. x y z");
        let s = corpus_stats(std::slice::from_ref(&t), &TokenizerSpec::Whitespace, &matcher()).unwrap();
        let ts = trace_stats(&t, &TokenizerSpec::Whitespace, &matcher());
        assert_eq!(s.len_avg, ts.token_len as f64);
        assert_eq!(Some(s.conn_per_1k), ts.conn_per_1k);
        assert!(corpus_stats(&[], &TokenizerSpec::Whitespace, &matcher()).is_err());
    }

    #[test]
    fn histogram_unit_bins() {
        let one = "Yes, that checks out.";
        let d = [
            trace("a", one),
            trace("b", &format!("{one} Hmm, that might be a dead end.")),
            trace("c", &format!("{one} {one} {one}")),
            trace("d", "no connectors"),
        ];
        let h = redundancy_histogram(&d, &matcher(), BinSpec::default()).unwrap();
        assert_eq!(h.edges, [1.0, 2.0, 3.0, 4.0]);
        assert_eq!(h.counts, [2, 0, 1]);
        assert_eq!(h.undefined, 1);

        let flat = redundancy_histogram(&d[..2], &matcher(), BinSpec::default()).unwrap();
        assert_eq!(flat.counts, [2]);
    }

    #[test]
    fn histogram_of_connectorless_corpus_is_empty() {
        let h = redundancy_histogram(&[trace("a", "x")], &matcher(), BinSpec::default()).unwrap();
        assert!(h.counts.is_empty());
        assert_eq!(h.warnings.len(), 1);
        assert!(redundancy_histogram(
            &[],
            &matcher(),
            BinSpec {
                width: 0.0,
                start: None
            }
        )
        .is_err());
    }

    #[test]
    fn scatter_csv_has_header_even_when_empty() {
        let mut buf = Vec::new();
        write_scatter_csv(&[], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "question_id,connector_total,token_len\n"
        );

        let d = [trace("a", "Solid logic so far. one two")];
        let rows = scatter_export(&d, &TokenizerSpec::Whitespace, &matcher());
        let ts = trace_stats(&d[0], &TokenizerSpec::Whitespace, &matcher());
        assert_eq!(
            (rows[0].connector_total, rows[0].token_len),
            (ts.connector_total, ts.token_len)
        );
    }

    #[test]
    fn report_names_tokenizer_and_columns() {
        let s = corpus_stats(&[trace("a", "x y")], &TokenizerSpec::Whitespace, &matcher()).unwrap();
        let r = render_stats_report(&[("ours".to_string(), s)], false);
        assert!(r.contains("# tokenizer: whitespace"));
        let header = r.lines().nth(2).unwrap();
        let cols: Vec<&str> = header.split("  ").map(str::trim).filter(|c| !c.is_empty()).collect();
        assert_eq!(cols, ["Dataset", "Len", "Conn/1K", "# Samples"]);
    }
}
