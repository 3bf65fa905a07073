//! Acceptance gate. Every criterion prints one `[acceptance]` line with its
//! verdict before asserting, so `cargo test -- --nocapture` shows the table.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::time::{Duration, Instant};

use forge_core::analytics::{corpus_stats, ConnectorMatcher, TokenizerSpec};
use forge_core::corpus::{dedup_exact, dedup_near, QuestionRecord, QuestionSet, Source};
use forge_core::evalkit::{aggregate, average_rows, score_item, DefaultMatcher, EvalItem, FormatMode, MetricsRow};
use forge_core::gatekeeper::{validate_raw, FailureReason, GateConfig};
use forge_core::pipeline::{import_dataset, run_generation, PipelineConfig, DATASET_FILE, DROPS_FILE};
use forge_core::promptkit::{render_prompt, ConnectorPool, GenerationMode};
use forge_core::provider::MockBackend;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(n: u32, title: &str, problems: Vec<String>, elapsed: Duration, budget: Duration) {
    let mut problems = problems;
    if elapsed > budget {
        problems.push(format!("took {elapsed:?}, budget {budget:?}"));
    }
    let verdict = if problems.is_empty() { "PASS" } else { "FAIL" };
    println!("[acceptance] {n}. {title}: {verdict} ({elapsed:.2?})");
    for p in &problems {
        println!("[acceptance]    - {p}");
    }
    assert!(problems.is_empty(), "criterion {n} failed:\n{}", problems.join("\n"));
}

// ---------------------------------------------------------------------------
// 1. gate fixtures

fn filler(n: usize) -> String {
    "careful step ".chars().cycle().take(n).collect()
}

fn wrap(thinking: &str, answer: &str) -> String {
    format!("<thinking>{thinking}</thinking>\n<answer>{answer}</answer>")
}

#[test]
fn c1_gate_fixtures() {
    use FailureReason::*;
    let start = Instant::now();
    let sentinel = "Reasoning failed. Unable to provide an answer.";
    let cases: Vec<(&str, String, Vec<FailureReason>)> = vec![
        ("clean", wrap(&filler(500), "Final Answer: 42"), vec![]),
        ("|r| = 99", wrap(&filler(99), "Final Answer: 42"), vec![TooShort]),
        ("|r| = 100", wrap(&filler(100), "Final Answer: 42"), vec![]),
        ("|r| = 30000", wrap(&filler(30_000), "Final Answer: 42"), vec![]),
        ("|r| = 30001", wrap(&filler(30_001), "Final Answer: 42"), vec![TooLong]),
        (
            "missing thinking markers",
            format!("{}\n<answer>Final Answer: 42</answer>", filler(500)),
            vec![FormatViolation],
        ),
        (
            "unclosed thinking",
            format!("<thinking>{}\n<answer>Final Answer: 42</answer>", filler(500)),
            vec![FormatViolation],
        ),
        (
            "duplicated thinking block",
            format!(
                "<thinking>{0}</thinking><thinking>{0}</thinking><answer>Final Answer: 42</answer>",
                filler(200)
            ),
            vec![FormatViolation],
        ),
        (
            "<answer> inside thinking",
            wrap(&format!("{}<answer>{}", filler(250), filler(242)), "Final Answer: 42"),
            vec![AnswerLeakInThinking],
        ),
        (
            "<thinking> inside answer",
            wrap(&filler(500), "Final Answer: 42 <thinking>"),
            vec![ThinkingLeakInAnswer],
        ),
        (
            "refusal sentinel",
            wrap(&format!("{} {sentinel}", filler(300)), "Final Answer: none"),
            vec![RefusalSentinel],
        ),
        ("missing Final Answer:", wrap(&filler(500), "42"), vec![FormatViolation]),
    ];
    assert_eq!(cases.len(), 12);
    let mut problems = Vec::new();
    for (name, raw, expected) in &cases {
        let (_, report) = validate_raw(raw, &GateConfig::default());
        if report.failures != *expected || report.passed != expected.is_empty() {
            problems.push(format!("{name}: expected {expected:?}, got {:?}", report.failures));
        }
    }
    report(
        1,
        "gate fixtures (12 cases)",
        problems,
        start.elapsed(),
        Duration::from_secs(1),
    );
}

// ---------------------------------------------------------------------------
// 2. end-to-end determinism

fn good_completion(id: &str) -> String {
    wrap(
        &format!(
            "Working on {id}. {} Solid logic so far, and the count is settled.",
            filler(180)
        ),
        &format!("Final Answer: {id}"),
    )
}

fn bad_completions() -> [String; 3] {
    [
        wrap("too short", "Final Answer: 1"),
        format!("no markers at all {}", filler(200)),
        wrap(
            &format!("{} Reasoning failed. Unable to provide an answer.", filler(200)),
            "Final Answer: none",
        ),
    ]
}

/// q00..q16 pass first try, q17 and q18 fail three times then pass, q19 never passes.
fn write_fixtures(dir: &Path) {
    let bad = bad_completions();
    for i in 0..20 {
        let id = format!("q{i:02}");
        match i {
            0..=16 => std::fs::write(dir.join(format!("{id}.txt")), good_completion(&id)).unwrap(),
            17 | 18 => {
                for (n, text) in bad.iter().enumerate() {
                    std::fs::write(dir.join(format!("{id}.{}.txt", n + 1)), text).unwrap();
                }
                std::fs::write(dir.join(format!("{id}.4.txt")), good_completion(&id)).unwrap();
            }
            _ => {
                for (n, text) in bad.iter().cycle().take(6).enumerate() {
                    std::fs::write(dir.join(format!("{id}.{}.txt", n + 1)), text).unwrap();
                }
            }
        }
    }
}

fn twenty_questions() -> QuestionSet {
    QuestionSet::from_records(
        (0..20)
            .map(|i| QuestionRecord::new(format!("q{i:02}"), format!("What is {i} squared?"), Source::Custom))
            .collect(),
        Source::Custom,
    )
    .unwrap()
}

#[test]
fn c2_end_to_end_determinism() {
    let start = Instant::now();
    let fixtures = tempfile::tempdir().unwrap();
    write_fixtures(fixtures.path());
    let qs = twenty_questions();
    let mut problems = Vec::new();
    let mut exports = Vec::new();
    for parallelism in [1, 8] {
        let out = tempfile::tempdir().unwrap();
        let cfg = PipelineConfig {
            parallelism,
            out_dir: Some(out.path().to_path_buf()),
            ..PipelineConfig::default()
        };
        let mock = MockBackend::from_dir(fixtures.path()).unwrap();
        let (dataset, drops) = run_generation(&qs, &cfg, &mock).unwrap();
        if dataset.len() != 19 {
            problems.push(format!(
                "parallelism {parallelism}: dataset has {} records",
                dataset.len()
            ));
        }
        if drops.len() != 1 || drops[0].question_id != "q19" || drops[0].attempts != 6 {
            problems.push(format!("parallelism {parallelism}: unexpected drop log {drops:?}"));
        }
        let attempts: Vec<Option<u32>> = dataset.records.iter().map(|r| r.attempt).collect();
        let mut expected = vec![Some(1); 17];
        expected.extend([Some(4), Some(4)]);
        if attempts != expected {
            problems.push(format!("parallelism {parallelism}: attempts {attempts:?}"));
        }
        let mut ids: Vec<&str> = dataset
            .ids()
            .chain(drops.iter().map(|d| d.question_id.as_str()))
            .collect();
        ids.sort_unstable();
        if ids != qs.ids().collect::<Vec<_>>() {
            problems.push(format!(
                "parallelism {parallelism}: dataset and drops do not partition the input"
            ));
        }
        let reread = import_dataset(&out.path().join(DATASET_FILE)).unwrap();
        if reread.flagged() != 0 {
            problems.push(format!(
                "parallelism {parallelism}: {} exported records fail the gate",
                reread.flagged()
            ));
        }
        let read = |name: &str| std::fs::read(out.path().join(name)).unwrap();
        exports.push((read(DATASET_FILE), read(DROPS_FILE), read("dataset.manifest.json")));
    }
    if exports[0] != exports[1] {
        problems.push("exports differ between parallelism 1 and 8".into());
    }
    report(
        2,
        "end-to-end determinism (20 questions, mock)",
        problems,
        start.elapsed(),
        Duration::from_secs(5),
    );
}

// ---------------------------------------------------------------------------
// 3. dedup oracle

fn oracle_levenshtein(a: &[char], b: &[char]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.iter().enumerate() {
        let mut cur = vec![i + 1; b.len() + 1];
        for (j, cb) in b.iter().enumerate() {
            cur[j + 1] = (prev[j] + usize::from(ca != cb)).min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        prev = cur;
    }
    prev[b.len()]
}

fn oracle_key(text: &str) -> Vec<char> {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
        .chars()
        .collect()
}

fn oracle_similarity(a: &str, b: &str) -> f64 {
    let (a, b) = (oracle_key(a), oracle_key(b));
    let m = a.len().max(b.len());
    if m == 0 {
        1.0
    } else {
        1.0 - oracle_levenshtein(&a, &b) as f64 / m as f64
    }
}

fn is_subsequence(sub: &[&str], of: &[&str]) -> bool {
    let mut it = of.iter();
    sub.iter().all(|s| it.any(|o| o == s))
}

fn planted_corpus() -> (QuestionSet, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let vocab: Vec<String> = (0..3000)
        .map(|_| {
            let len = rng.random_range(3..=9);
            (0..len).map(|_| rng.random_range(b'a'..=b'z') as char).collect()
        })
        .collect();
    let bases: Vec<QuestionRecord> = (0..1391)
        .map(|i| {
            let words: Vec<&str> = (0..12)
                .map(|_| vocab[rng.random_range(0..vocab.len())].as_str())
                .collect();
            QuestionRecord::new(format!("b{i:04}"), words.join(" "), Source::Custom)
        })
        .collect();
    let mut picks: Vec<usize> = (0..bases.len()).collect();
    picks.shuffle(&mut rng);
    let mut rows: Vec<(usize, QuestionRecord)> = bases.iter().cloned().enumerate().map(|(i, r)| (2 * i, r)).collect();
    for (n, &b) in picks[..30].iter().enumerate() {
        let text = if n % 3 == 0 {
            format!("  {}  ", bases[b].text.replace(' ', "   "))
        } else {
            bases[b].text.clone()
        };
        let at = 2 * rng.random_range(b..bases.len()) + 1;
        rows.push((at, QuestionRecord::new(format!("x{n:02}"), text, Source::Custom)));
    }
    for (n, &b) in picks[30..38].iter().enumerate() {
        let mut chars: Vec<char> = bases[b].text.chars().collect();
        let letters: Vec<usize> = (0..chars.len()).filter(|&i| chars[i] != ' ').collect();
        let pos = letters[rng.random_range(0..letters.len())];
        chars[pos] = if chars[pos] == 'q' { 'z' } else { 'q' };
        let at = 2 * rng.random_range(b..bases.len()) + 1;
        rows.push((
            at,
            QuestionRecord::new(format!("n{n}"), chars.into_iter().collect::<String>(), Source::Custom),
        ));
    }
    rows.sort_by_key(|(at, _)| *at);
    let records: Vec<QuestionRecord> = rows.into_iter().map(|(_, r)| r).collect();
    let base_ids = bases.iter().map(|r| r.id.clone()).collect();
    (QuestionSet::from_records(records, Source::Custom).unwrap(), base_ids)
}

#[test]
fn c3_dedup_oracle() {
    let start = Instant::now();
    let (qs, base_ids) = planted_corpus();
    let mut problems = Vec::new();
    if qs.len() != 1429 {
        problems.push(format!("planted corpus has {} items", qs.len()));
    }
    let exact = dedup_exact(&qs);
    let near = dedup_near(&exact.set, 0.9).unwrap();
    let survivors: Vec<&str> = near.set.ids().collect();
    if survivors.len() != 1391 {
        problems.push(format!("{} survivors, expected 1391", survivors.len()));
    }
    if survivors != base_ids.iter().map(String::as_str).collect::<Vec<_>>() {
        problems.push("survivors are not exactly the planted originals".into());
    }
    if exact.drops.len() != 30 || near.drops.len() != 8 {
        problems.push(format!(
            "{} exact and {} near drops",
            exact.drops.len(),
            near.drops.len()
        ));
    }

    let all: Vec<&str> = qs.ids().collect();
    if !is_subsequence(&survivors, &all) {
        problems.push("survivors are not a subsequence of the input".into());
    }
    let again = dedup_near(&dedup_exact(&near.set).set, 0.9).unwrap();
    if again.set != near.set || !again.drops.is_empty() {
        problems.push("dedup is not idempotent".into());
    }

    let text: HashMap<&str, &str> = qs.records.iter().map(|r| (r.id.as_str(), r.text.as_str())).collect();
    for d in exact.drops.iter().chain(&near.drops) {
        let sim = oracle_similarity(text[d.dropped_id.as_str()], text[d.kept_id.as_str()]);
        if sim < 0.9 || (sim - d.similarity).abs() > 1e-12 {
            problems.push(format!(
                "{} vs {}: logged {}, recomputed {sim}",
                d.dropped_id, d.kept_id, d.similarity
            ));
        }
    }
    report(
        3,
        "dedup oracle (1429 planted items)",
        problems,
        start.elapsed(),
        Duration::from_secs(10),
    );
}

// ---------------------------------------------------------------------------
// 4. matcher oracle

fn fold(c: char) -> char {
    match c {
        '‘' | '’' => '\'',
        '“' | '”' => '"',
        c => c,
    }
}

/// Every offset, every phrase: longest match at the leftmost position, then
/// continue after it.
fn naive_scan(text: &str, pool: &ConnectorPool) -> Vec<(usize, String)> {
    let src: Vec<(usize, char)> = text.char_indices().collect();
    let norm: Vec<char> = src
        .iter()
        .map(|&(_, c)| fold(c).to_lowercase().next().unwrap())
        .collect();
    let phrases: Vec<(Vec<char>, &String)> = pool
        .confidence
        .iter()
        .chain(&pool.reflection)
        .map(|p| (p.chars().map(|c| fold(c).to_lowercase().next().unwrap()).collect(), p))
        .collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < norm.len() {
        let best = phrases
            .iter()
            .filter(|(p, _)| norm[i..].starts_with(p))
            .max_by_key(|(p, _)| p.len());
        match best {
            Some((p, phrase)) => {
                out.push((src[i].0, phrase.to_string()));
                i += p.len();
            }
            None => i += 1,
        }
    }
    out
}

fn mutate_phrase(phrase: &str, rng: &mut ChaCha8Rng) -> String {
    let mut s: String = phrase
        .chars()
        .map(|c| match c {
            '\'' | '’' if rng.random_bool(0.5) => {
                if c == '\'' {
                    '’'
                } else {
                    '\''
                }
            }
            c => c,
        })
        .collect();
    match rng.random_range(0..4) {
        0 => s = s.to_uppercase(),
        1 => s = s.to_lowercase(),
        2 => {
            s = s
                .chars()
                .map(|c| {
                    if rng.random_bool(0.3) {
                        c.to_ascii_uppercase()
                    } else {
                        c
                    }
                })
                .collect()
        }
        _ => {}
    }
    if rng.random_bool(0.1) {
        // broken phrase: drop the tail so it must not match
        let keep = s.chars().count() / 2;
        s = s.chars().take(keep).collect();
    }
    s
}

fn random_text(pool: &ConnectorPool, rng: &mut ChaCha8Rng) -> String {
    const WORDS: [&str; 12] = [
        "the", "sum", "so", "then", "that", "this", "we", "check", "x", "is", "’", "wait,",
    ];
    let phrases: Vec<&String> = pool.confidence.iter().chain(&pool.reflection).collect();
    let mut parts = Vec::new();
    for _ in 0..rng.random_range(0..25) {
        if rng.random_bool(0.4) {
            parts.push(mutate_phrase(phrases[rng.random_range(0..phrases.len())], rng));
        } else {
            parts.push(WORDS[rng.random_range(0..WORDS.len())].to_string());
        }
    }
    let sep = [" ", "", "\n", ", "];
    let mut text = String::new();
    for p in parts {
        text.push_str(&p);
        text.push_str(sep[rng.random_range(0..sep.len())]);
    }
    text
}

#[test]
fn c4_matcher_oracle() {
    let start = Instant::now();
    let pool = ConnectorPool::base();
    let matcher = ConnectorMatcher::new(&pool);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut problems = Vec::new();
    let mut total = 0;
    let trials = 2000;
    for n in 0..trials {
        let text = random_text(&pool, &mut rng);
        let expected = naive_scan(&text, &pool);
        let counts = matcher.count(&text);
        let got: Vec<(usize, String)> = counts.positions.iter().map(|m| (m.start, m.phrase.clone())).collect();
        let mut per_phrase: BTreeMap<String, usize> = BTreeMap::new();
        for (_, p) in &expected {
            *per_phrase.entry(p.clone()).or_default() += 1;
        }
        total += expected.len();
        if got != expected || counts.per_phrase != per_phrase || counts.total != expected.len() {
            problems.push(format!("text #{n} {text:?}: oracle {expected:?}, matcher {got:?}"));
            if problems.len() > 5 {
                break;
            }
        }
    }
    if total < trials {
        problems.push(format!("only {total} phrase occurrences across {trials} texts"));
    }
    report(
        4,
        "connector matcher vs naive scan (2000 texts)",
        problems,
        start.elapsed(),
        Duration::from_secs(30),
    );
}

// ---------------------------------------------------------------------------
// 5. metric arithmetic

fn strict(thinking_words: usize, answer: &str) -> String {
    let thinking = vec!["w"; thinking_words].join(" ");
    format!("<thinking>{thinking}</thinking><answer>Final Answer: {answer}</answer>")
}

#[test]
fn c5_metric_arithmetic() {
    let start = Instant::now();
    let item = |id: &str, task: &str, responses: Vec<String>| EvalItem {
        question_id: id.into(),
        task_type: task.into(),
        gold: "12".into(),
        responses,
    };
    let items = [
        // 5 successes, all correct, 10 reasoning tokens each
        item("a", "analysis", (0..5).map(|_| strict(10, "12")).collect()),
        // 4 successes (one lacks the prefix), 3 correct; tokens 4, 6, 8, 10
        item(
            "b",
            "analysis",
            vec![
                strict(4, "12"),
                strict(6, "12"),
                strict(8, "13"),
                strict(10, "012"),
                "<thinking>w</thinking><answer>12</answer>".into(),
            ],
        ),
        // nothing extractable
        item(
            "c",
            "reasoning",
            (0..5).map(|_| "The answer is 12.".to_string()).collect(),
        ),
    ];
    let tok = TokenizerSpec::Whitespace;
    let scores: Vec<_> = items
        .iter()
        .map(|i| score_item(i, FormatMode::Strict, &DefaultMatcher, &tok))
        .collect();
    let mut problems = Vec::new();
    let expect_item = [
        (1.0, 1.0, 1.0, 10.0, false),
        (0.0, 0.75, 0.8, 7.0, false),
        (0.0, 0.0, 0.0, 0.0, true),
    ];
    for (s, e) in scores.iter().zip(expect_item) {
        let got = (s.acc_at_k, s.pass_at_1, s.success_rate, s.art, s.art_undefined);
        if got != e {
            problems.push(format!("item {}: expected {e:?}, got {got:?}", s.question_id));
        }
    }
    let table = aggregate(&scores).unwrap();
    let rows: Vec<(String, f64, f64, f64, f64)> = table
        .rows
        .iter()
        .chain([&table.avg])
        .map(|r| (r.group.clone(), r.acc_at_k, r.pass_at_1, r.success, r.art))
        .collect();
    let expected = vec![
        ("analysis".to_string(), 50.0, 87.5, 90.0, 8.5),
        ("reasoning".to_string(), 0.0, 0.0, 0.0, 0.0),
        ("AVG".to_string(), 25.0, 43.75, 45.0, 4.25),
    ];
    if rows != expected {
        problems.push(format!("table {rows:?}, expected {expected:?}"));
    }
    if table.art_undefined != 1 {
        problems.push(format!("{} items flagged with undefined ART", table.art_undefined));
    }
    report(
        5,
        "metric arithmetic (3 questions x 5 responses)",
        problems,
        start.elapsed(),
        Duration::from_secs(1),
    );
}

// ---------------------------------------------------------------------------
// 6. AVG recomputation over the published S1-Bench table

struct Block {
    model: &'static str,
    lang: &'static str,
    /// analysis, instruction following, knowledge, reasoning; columns Acc@5, Pass@1, Success, ART
    rows: [[f64; 4]; 4],
    avg: [f64; 4],
}

const TABLE: [Block; 10] = [
    Block {
        model: "Qwen2.5-7B-Instruct",
        lang: "EN",
        rows: [
            [100.0, 100.0, 100.0, 49.8],
            [26.47, 57.06, 100.0, 6.79],
            [62.75, 80.00, 100.0, 48.40],
            [66.67, 74.67, 100.0, 67.08],
        ],
        avg: [63.97, 77.93, 100.0, 43.02],
    },
    Block {
        model: "Qwen2.5-7B-Instruct",
        lang: "ZN",
        rows: [
            [94.44, 96.39, 100.0, 37.76],
            [13.79, 21.38, 100.0, 10.54],
            [13.21, 25.28, 100.0, 46.02],
            [41.67, 62.08, 100.0, 51.61],
        ],
        avg: [40.78, 51.28, 100.0, 36.48],
    },
    Block {
        model: "Bespoke-Stratos-7B",
        lang: "EN",
        rows: [
            [100.0, 100.0, 100.0, 830.43],
            [58.82, 96.69, 88.82, 1026.77],
            [100.0, 100.0, 100.0, 830.62],
            [93.33, 98.66, 99.67, 836.27],
        ],
        avg: [88.04, 98.84, 97.12, 881.02],
    },
    Block {
        model: "Bespoke-Stratos-7B",
        lang: "ZN",
        rows: [
            [75.0, 95.24, 99.17, 408.97],
            [65.52, 95.59, 93.79, 771.93],
            [88.68, 97.36, 100.0, 460.63],
            [77.08, 94.98, 99.58, 545.82],
        ],
        avg: [76.57, 95.79, 98.14, 546.84],
    },
    Block {
        model: "s1.1-7B",
        lang: "EN",
        rows: [
            [74.67, 99.16, 94.93, 573.77],
            [47.06, 98.55, 81.18, 2041.02],
            [80.39, 100.0, 94.12, 848.53],
            [70.0, 99.28, 92.67, 1088.92],
        ],
        avg: [68.03, 99.25, 90.73, 1138.06],
    },
    Block {
        model: "s1.1-7B",
        lang: "ZN",
        rows: [
            [63.89, 99.39, 91.11, 299.44],
            [41.38, 99.19, 84.83, 1109.58],
            [84.91, 100.0, 96.23, 329.6],
            [41.67, 99.48, 80.83, 490.29],
        ],
        avg: [57.96, 99.25, 88.25, 557.23],
    },
    Block {
        model: "LIMO-7B-reproduced",
        lang: "EN",
        rows: [
            [49.33, 85.91, 96.53, 806.91],
            [17.65, 89.52, 61.76, 1633.84],
            [72.55, 92.21, 95.69, 975.48],
            [56.67, 81.56, 94.0, 1144.3],
        ],
        avg: [49.05, 87.30, 87.00, 1140.13],
    },
    Block {
        model: "LIMO-7B-reproduced",
        lang: "ZN",
        rows: [
            [5.56, 60.79, 63.06, 368.22],
            [41.38, 90.29, 71.03, 1111.96],
            [35.85, 96.24, 70.19, 573.94],
            [45.83, 78.0, 83.33, 643.32],
        ],
        avg: [32.16, 81.33, 71.90, 674.36],
    },
    Block {
        model: "CAC-CoT-7B",
        lang: "EN",
        rows: [
            [97.33, 99.2, 100.0, 273.97],
            [67.65, 98.12, 94.12, 306.82],
            [84.31, 99.18, 96.08, 256.12],
            [95.00, 98.67, 100.0, 308.13],
        ],
        avg: [86.07, 98.79, 97.55, 286.26],
    },
    Block {
        model: "CAC-CoT-7B",
        lang: "ZN",
        rows: [
            [90.28, 98.33, 99.72, 174.12],
            [65.52, 96.35, 94.48, 287.83],
            [84.91, 99.61, 97.36, 177.47],
            [85.42, 97.49, 99.58, 226.16],
        ],
        avg: [81.53, 97.95, 97.78, 216.39],
    },
];

#[test]
fn c6_table_avg_recomputation() {
    let start = Instant::now();
    const COLUMNS: [&str; 4] = ["Acc@5", "Pass@1", "Success", "ART"];
    const GROUPS: [&str; 4] = [
        "analysis_question",
        "instruction_following",
        "knowledge_question",
        "reasoning_question",
    ];
    let mut problems = Vec::new();
    let mut cells = 0;
    for b in &TABLE {
        let rows: Vec<MetricsRow> = b
            .rows
            .iter()
            .zip(GROUPS)
            .map(|(r, g)| MetricsRow {
                group: g.to_string(),
                acc_at_k: r[0],
                pass_at_1: r[1],
                success: r[2],
                art: r[3],
                n_items: 1,
            })
            .collect();
        let avg = average_rows(&rows);
        let got = [avg.acc_at_k, avg.pass_at_1, avg.success, avg.art];
        for c in 0..4 {
            cells += 1;
            let by_hand = b.rows.iter().map(|r| r[c]).sum::<f64>() / 4.0;
            if (got[c] - by_hand).abs() > 1e-9 {
                problems.push(format!(
                    "{} {} {}: average_rows gave {}, direct mean {by_hand}",
                    b.model, b.lang, COLUMNS[c], got[c]
                ));
            }
            if (got[c] - b.avg[c]).abs() > 0.01 + 1e-9 {
                problems.push(format!(
                    "{} {} {}: mean of task rows is {:.3}, printed AVG is {}",
                    b.model, b.lang, COLUMNS[c], got[c], b.avg[c]
                ));
            }
        }
    }
    assert_eq!(cells, 40);
    report(
        6,
        "AVG rows recomputed from task rows (10 blocks x 4 columns)",
        problems,
        start.elapsed(),
        Duration::from_secs(1),
    );
}

// ---------------------------------------------------------------------------
// 7. golden prompt

#[test]
fn c7_golden_prompt() {
    let start = Instant::now();
    let golden = include_str!("fixtures/prompt_full_base.golden.txt");
    let q = QuestionRecord::new("golden", "How many positive divisors does 36 have?", Source::Custom);
    let rendered = render_prompt(&q, GenerationMode::Full, &ConnectorPool::base()).text;
    let mut problems = Vec::new();
    if rendered != golden {
        let line = rendered.lines().zip(golden.lines()).position(|(a, b)| a != b);
        problems.push(format!(
            "render differs from the golden transcription (first differing line: {line:?})"
        ));
    }
    for needle in [
        "6. Do not use connectors consecutively.",
        "Reasoning failed. Unable to provide an answer.",
    ] {
        if !rendered.contains(needle) {
            problems.push(format!("missing {needle:?}"));
        }
    }
    report(
        7,
        "golden full-mode prompt",
        problems,
        start.elapsed(),
        Duration::from_secs(1),
    );
}

// ---------------------------------------------------------------------------
// 8. corpus-stats ordering against released corpora (optional)

#[test]
fn c8_corpus_stats_ordering() {
    let start = Instant::now();
    let Some(dir) = std::env::var_os("FORGE_CORPORA_DIR") else {
        println!("[acceptance] 8. corpus-stats ordering: SKIP (FORGE_CORPORA_DIR not set)");
        return;
    };
    let dir = Path::new(&dir);
    let names = ["ours", "bespoke", "limo", "s1k"];
    if names.iter().any(|n| !dir.join(format!("{n}.jsonl")).exists()) {
        println!(
            "[acceptance] 8. corpus-stats ordering: SKIP (expected {{ours,bespoke,limo,s1k}}.jsonl in {})",
            dir.display()
        );
        return;
    }
    let matcher = ConnectorMatcher::new(&ConnectorPool::base());
    let tok = TokenizerSpec::Whitespace;
    let stats: Vec<_> = names
        .iter()
        .map(|n| {
            let d = import_dataset(&dir.join(format!("{n}.jsonl"))).unwrap();
            corpus_stats(&d.records, &tok, &matcher).unwrap()
        })
        .collect();
    let mut problems = Vec::new();
    for w in stats.windows(2).zip(names.windows(2)) {
        if w.0[0].len_avg >= w.0[1].len_avg {
            problems.push(format!(
                "Len: {} ({:.2}) is not below {} ({:.2})",
                w.1[0], w.0[0].len_avg, w.1[1], w.0[1].len_avg
            ));
        }
    }
    if stats[1..].iter().any(|s| s.conn_per_1k <= stats[0].conn_per_1k) {
        problems.push("Conn/1K of ours is not the lowest".into());
    }
    for (got, want, what) in [
        (stats[0].len_avg, 1843.43, "Len"),
        (stats[0].conn_per_1k, 2.65, "Conn/1K"),
    ] {
        if (got - want).abs() > 0.15 * want {
            problems.push(format!("ours {what} {got:.2} is outside 15% of {want}"));
        }
    }
    report(
        8,
        "corpus-stats ordering on released corpora",
        problems,
        start.elapsed(),
        Duration::from_secs(600),
    );
}
