//! Fixtures, generators and independent oracles shared by the integration
//! tests and the acceptance suite. Nothing here calls into the crate's
//! chunking, hashing or search code.

#![allow(dead_code)]

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use parlrag::backend::mock::ExtractiveBackend;
use parlrag::backend::{HashEmbedder, RetryPolicy};
use parlrag::enrich::{enrich_corpus, EnrichOptions, EnrichReport};
use parlrag::index::{index_corpus, IndexOptions, IndexReport};
use parlrag::ingest::{chunk_turns, parse_corpus_bytes};
use parlrag::query::{QueryEngine, RetrievalSettings};
use parlrag::store::DataDir;

pub const FIXTURE: &str = include_str!("../fixtures/corpus.jsonl");
pub const FIXTURE_MAX_CHUNK_CHARS: usize = 140;
/// Hand-counted from the fixture: sentence lengths per turn packed at 140.
pub const FIXTURE_DOCS: usize = 2;
pub const FIXTURE_CHUNKS: usize = 9;
/// The fixture turn that splits into three chunks.
pub const FIXTURE_THREE_CHUNK_TURN: &str = "plen-2024-06-01:1";

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// Feature-hash embedding oracle

pub fn oracle_fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Lowercase, split on whitespace, count tokens per `fnv1a % dim` bucket,
/// divide by the L2 norm.
pub fn oracle_hash_embed(text: &str, dim: usize) -> Vec<f64> {
    let mut v = vec![0f64; dim];
    for token in text.to_lowercase().split_whitespace() {
        v[(oracle_fnv1a(token.as_bytes()) % dim as u64) as usize] += 1.0;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

// ---------------------------------------------------------------------------
// Random turns with known sentence structure, and a brute-force packer

const LOWER: &[&str] = &[
    "de", "het", "minister", "begroting", "wet", "energie", "pensioen", "spoor", "klimaat", "zorg", "onderwijs",
    "belasting", "gemeente", "regering", "voorstel", "amendement", "commissie", "budget", "vragen", "antwoord",
    "élève", "straße", "naïef", "ça", "e.g.", "nr.", "art.", "a", "ok", "x", "q&a", "2024", "50%", "über",
];
const UPPER: &[&str] = &["Mijnheer", "De", "Het", "Ik", "We", "Collega", "Élise", "Brussel", "Vlaanderen", "Ça"];
const TERMINATORS: &[&str] = &[".", "!", "?", "?!", "..."];

/// A generated, whitespace-normalized turn text with the character offsets
/// where its sentences start (known by construction).
#[derive(Debug, Clone)]
pub struct GeneratedTurn {
    pub text: String,
    pub sentence_starts: Vec<usize>,
}

/// Sentences start with a capitalized word and end with a terminator; no
/// terminator inside a sentence is ever followed by a capitalized word, so the
/// construction boundaries are exactly the segmentation boundaries. Some
/// sentences are a single unbroken token run, some exceed `budget`.
pub fn random_turn(rng: &mut impl Rng, budget: usize) -> GeneratedTurn {
    let sentences = rng.random_range(1..=7);
    let mut oversized_left = 2;
    let mut text = String::new();
    let mut starts = Vec::new();
    let mut len = 0usize;
    for s in 0..sentences {
        if s > 0 {
            text.push(' ');
            len += 1;
        }
        starts.push(len);
        let mut sentence = String::new();
        sentence.push_str(UPPER.choose(rng).unwrap());
        let kind = rng.random_range(0..10);
        let oversized = kind < 2 && oversized_left > 0;
        if oversized {
            oversized_left -= 1;
        }
        match (oversized, kind) {
            // Long run without spaces.
            (true, 0) => {
                let n = rng.random_range(budget / 2..budget * 2);
                for _ in 0..n {
                    sentence.push(*['a', 'b', 'é', '-'].choose(rng).unwrap());
                }
            }
            // Long sentence with many words.
            (true, _) => {
                let words = rng.random_range(budget / 6..budget / 3);
                for _ in 0..words {
                    sentence.push(' ');
                    sentence.push_str(LOWER.choose(rng).unwrap());
                }
            }
            _ => {
                let words = rng.random_range(0..14);
                for _ in 0..words {
                    sentence.push(' ');
                    sentence.push_str(LOWER.choose(rng).unwrap());
                }
            }
        }
        let unterminated = s + 1 == sentences && rng.random_bool(0.3);
        if !unterminated {
            sentence.push_str(TERMINATORS.choose(rng).unwrap());
        }
        len += sentence.chars().count();
        text.push_str(&sentence);
    }
    GeneratedTurn {
        text,
        sentence_starts: starts,
    }
}

/// Cuts one oversized unit: each piece ends right after the last space among
/// its characters 2..=budget, or after exactly `budget` characters.
fn reference_hard_split(chars: &[char], start: usize, end: usize, budget: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut pos = start;
    while end - pos > budget {
        let mut cut = pos + budget;
        for j in (pos + 1..pos + budget).rev() {
            if chars[j] == ' ' {
                cut = j + 1;
                break;
            }
        }
        out.push((pos, cut));
        pos = cut;
    }
    out.push((pos, end));
    out
}

/// Brute-force packer: enumerates every way to group the pieces into
/// contiguous chunks within the budget and returns the grouping whose chunk
/// lengths are lexicographically greatest (each chunk as full as possible,
/// front to back).
pub fn reference_pack(text: &str, sentence_starts: &[usize], budget: usize) -> Vec<(usize, usize)> {
    let chars: Vec<char> = text.chars().collect();
    if chars.is_empty() {
        return Vec::new();
    }
    let mut pieces = Vec::new();
    for (i, &start) in sentence_starts.iter().enumerate() {
        let end = sentence_starts.get(i + 1).copied().unwrap_or(chars.len());
        pieces.extend(reference_hard_split(&chars, start, end, budget));
    }
    let n = pieces.len();
    assert!(n <= 20, "too many pieces for brute force: {n}");

    let mut best: Option<Vec<(usize, usize)>> = None;
    let mut best_lengths: Vec<usize> = Vec::new();
    // Bit i set = cut between piece i and i + 1.
    for mask in 0u32..(1u32 << (n - 1)) {
        let mut groups = Vec::new();
        let mut group_start = pieces[0].0;
        for i in 0..n {
            let boundary = i + 1 == n || mask & (1 << i) != 0;
            if boundary {
                groups.push((group_start, pieces[i].1));
                if i + 1 < n {
                    group_start = pieces[i + 1].0;
                }
            }
        }
        if groups.iter().any(|(s, e)| e - s > budget) {
            continue;
        }
        let lengths: Vec<usize> = groups.iter().map(|(s, e)| e - s).collect();
        if best.is_none() || lengths > best_lengths {
            best_lengths = lengths;
            best = Some(groups);
        }
    }
    best.expect("every piece fits the budget")
}

// ---------------------------------------------------------------------------
// Synthetic corpora

pub const POLITICIANS: &[(&str, &str)] = &[
    ("Anna Peeters", "Groen"),
    ("Bart Janssens", "N-VA"),
    ("Claire Dubois", "PS"),
    ("David Maes", "CD&V"),
    ("Eva Claes", "Open Vld"),
    ("Farid El Amrani", "PVDA"),
    ("Greet Willems", "Vooruit"),
    ("Hugo Lambert", "MR"),
];

const TOPIC_WORDS: &[&str] = &[
    "pensions", "railways", "childcare", "taxation", "healthcare", "housing", "migration", "defence", "farming",
    "broadband", "education", "justice", "mobility", "climate", "budgeting", "policing",
];

const FILLER: &[&str] = &[
    "the", "minister", "should", "we", "ask", "about", "plan", "for", "next", "year", "more", "less", "funding",
    "clear", "answer", "government", "our", "party", "supports", "opposes", "proposal", "debate", "vote", "law",
    "reform", "cost", "citizens", "region", "federal", "local", "urgent", "report", "figures", "data",
];

/// One JSONL corpus line.
pub fn corpus_line(
    doc_id: &str,
    date: &str,
    session_type: &str,
    sequence: u64,
    speaker: &str,
    party: &str,
    text: &str,
) -> String {
    json!({
        "doc_id": doc_id,
        "session_date": date,
        "session_type": session_type,
        "language": "en",
        "source_url": format!("https://example.org/sessions/{doc_id}"),
        "sequence": sequence,
        "speaker": speaker,
        "party": party,
        "text": text,
    })
    .to_string()
}

fn random_sentence(rng: &mut impl Rng, topic: &str) -> String {
    let words = rng.random_range(5..14);
    let mut out: Vec<String> = Vec::with_capacity(words + 1);
    for w in 0..words {
        let word = if rng.random_bool(0.25) {
            topic
        } else {
            FILLER.choose(rng).unwrap()
        };
        if w == 0 {
            let mut c = word.chars();
            let first = c.next().unwrap().to_uppercase().collect::<String>();
            out.push(first + c.as_str());
        } else {
            out.push(word.to_string());
        }
    }
    out.join(" ") + "."
}

/// A synthetic corpus with `turns` turns spread over documents of at most
/// `turns_per_doc` turns. Each turn is one or two short sentences (well under
/// 200 characters). About 5% of turns repeat an earlier text verbatim, which
/// produces exact score ties.
pub fn synthetic_corpus(seed: u64, turns: usize, turns_per_doc: usize) -> String {
    let mut rng = rng(seed);
    let mut lines = Vec::with_capacity(turns);
    let mut texts: Vec<String> = Vec::new();
    for i in 0..turns {
        let doc = i / turns_per_doc;
        let seq = (i % turns_per_doc) as u64;
        let month = doc % 24;
        let date = format!("{}-{:02}-{:02}", 2023 + month / 12, month % 12 + 1, doc % 27 + 1);
        let session_type = if doc % 3 == 0 { "committee" } else { "plenary" };
        let (speaker, party) = *POLITICIANS.choose(&mut rng).unwrap();
        let text = if !texts.is_empty() && rng.random_bool(0.05) {
            texts.choose(&mut rng).unwrap().clone()
        } else {
            let topic = TOPIC_WORDS.choose(&mut rng).unwrap();
            let mut t = random_sentence(&mut rng, topic);
            if rng.random_bool(0.5) {
                t.push(' ');
                t.push_str(&random_sentence(&mut rng, topic));
            }
            t
        };
        texts.push(text.clone());
        lines.push(corpus_line(
            &format!("doc-{doc:04}"),
            &date,
            session_type,
            seq,
            speaker,
            party,
            &text,
        ));
    }
    lines.join("\n") + "\n"
}

/// Distinctive tokens used nowhere else in synthetic corpora.
pub const PLANTED_TOKENS: &str = "thorium saltreactor isotopeyield";

/// A synthetic corpus of `turns` turns where the turn at `planted_at` is
/// about a topic with [`PLANTED_TOKENS`]. Returns the corpus and the planted
/// turn id.
pub fn planted_corpus(seed: u64, turns: usize, planted_at: usize) -> (String, String) {
    let base = synthetic_corpus(seed, turns, 10);
    let mut lines: Vec<String> = base.lines().map(str::to_string).collect();
    let mut record: Value = serde_json::from_str(&lines[planted_at]).unwrap();
    record["text"] = Value::String(
        "A thorium saltreactor could raise the isotopeyield of our grid. The thorium saltreactor plan needs funding."
            .to_string(),
    );
    let turn_id = format!("{}:{}", record["doc_id"].as_str().unwrap(), record["sequence"]);
    lines[planted_at] = record.to_string();
    (lines.join("\n") + "\n", turn_id)
}

// ---------------------------------------------------------------------------
// Pipeline driver with offline backends

pub struct Built {
    pub dir: DataDir,
    pub enrich: EnrichReport,
    pub index: IndexReport,
}

pub fn no_backoff() -> RetryPolicy {
    RetryPolicy::no_backoff(3)
}

/// Ingest → enrich (extractive mock) → index (hash embedder of `dim`).
pub async fn build_data_dir(root: &Path, corpus: &str, max_chunk_chars: usize, dim: usize) -> Built {
    let dir = DataDir::create(root).unwrap();
    let parsed = parse_corpus_bytes(corpus.as_bytes()).unwrap();
    let chunks = chunk_turns(&parsed.turns, max_chunk_chars);
    dir.write_corpus(&parsed.documents, &parsed.turns, &chunks, false).unwrap();
    let corpus = dir.load_corpus().unwrap();
    let mut store = dir.enrichments().unwrap();
    let options = EnrichOptions {
        max_chunk_chars,
        retry: no_backoff(),
        ..EnrichOptions::default()
    };
    let enrich = enrich_corpus(&corpus, corpus.chunks(), &mut store, &ExtractiveBackend::new(), 4, &options)
        .await
        .unwrap();
    let index = index_corpus(
        &dir,
        &corpus,
        &store,
        &HashEmbedder::new(dim),
        &IndexOptions {
            retry: no_backoff(),
            ..IndexOptions::default()
        },
    )
    .await
    .unwrap();
    Built { dir, enrich, index }
}

pub fn open_engine(
    dir: &DataDir,
    dim: usize,
    generator: Arc<dyn parlrag::backend::GenerationBackend>,
    settings: RetrievalSettings,
    suggestions: Vec<String>,
) -> QueryEngine {
    QueryEngine::open(dir, Arc::new(HashEmbedder::new(dim)), generator, settings, suggestions).unwrap()
}

// ---------------------------------------------------------------------------
// Brute-force search oracle over the raw files of a data directory

#[derive(Debug, Clone, Default)]
pub struct OracleFilter {
    pub politician: Option<String>,
    pub party: Option<String>,
    pub topic: Option<String>,
    pub session_type: Option<String>,
    pub date_from: Option<String>,
    pub date_to: Option<String>,
}

#[derive(Debug, Clone)]
pub struct OracleRow {
    pub chunk_id: String,
    pub vector: Vec<f32>,
    pub politician: String,
    pub party: String,
    pub topic: String,
    pub session_type: String,
    pub session_date: String,
}

pub struct SearchOracle {
    pub dim: usize,
    pub rows: Vec<OracleRow>,
}

fn jsonl(path: &Path) -> Vec<Value> {
    match std::fs::read_to_string(path) {
        Ok(s) => s.lines().filter(|l| !l.trim().is_empty()).map(|l| serde_json::from_str(l).unwrap()).collect(),
        Err(_) => Vec::new(),
    }
}

fn le_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

impl SearchOracle {
    /// Reads `embeddings.bin`, its sidecar and the JSONL stores directly.
    pub fn load(root: &Path) -> Self {
        let bin = std::fs::read(root.join("embeddings.bin")).unwrap();
        assert_eq!(&bin[0..4], b"KRVX");
        assert_eq!(le_u32(&bin, 4), 1);
        let dim = le_u32(&bin, 8) as usize;
        let count = le_u32(&bin, 12) as usize;
        assert_eq!(bin.len(), 16 + 4 * dim * count);
        let ids = jsonl(&root.join("embeddings.idx.jsonl"));
        assert_eq!(ids.len(), count);

        let str_of = |v: &Value, k: &str| v[k].as_str().unwrap_or_default().to_string();
        let chunks: HashMap<String, Value> =
            jsonl(&root.join("chunks.jsonl")).into_iter().map(|c| (str_of(&c, "chunk_id"), c)).collect();
        let turns: HashMap<String, Value> =
            jsonl(&root.join("turns.jsonl")).into_iter().map(|t| (str_of(&t, "turn_id"), t)).collect();
        let docs: HashMap<String, Value> =
            jsonl(&root.join("documents.jsonl")).into_iter().map(|d| (str_of(&d, "doc_id"), d)).collect();
        let enrichments: HashMap<String, Value> =
            jsonl(&root.join("enrichments.jsonl")).into_iter().map(|e| (str_of(&e, "chunk_id"), e)).collect();

        let rows = ids
            .iter()
            .enumerate()
            .map(|(row, id)| {
                let chunk_id = str_of(id, "chunk_id");
                let vector = (0..dim)
                    .map(|j| {
                        let at = 16 + 4 * (row * dim + j);
                        f32::from_le_bytes(bin[at..at + 4].try_into().unwrap())
                    })
                    .collect();
                let e = &enrichments[&chunk_id];
                let turn = &turns[&str_of(&chunks[&chunk_id], "turn_id")];
                let doc = &docs[&str_of(turn, "doc_id")];
                OracleRow {
                    chunk_id,
                    vector,
                    politician: str_of(e, "politician"),
                    party: str_of(e, "party"),
                    topic: str_of(e, "topic"),
                    session_type: str_of(doc, "session_type"),
                    session_date: str_of(doc, "session_date"),
                }
            })
            .collect();
        Self { dim, rows }
    }

    pub fn admits(filter: &OracleFilter, row: &OracleRow) -> bool {
        let eq = |want: &Option<String>, have: &str| want.as_deref().is_none_or(|w| w == have);
        // ISO dates compare correctly as strings.
        eq(&filter.politician, &row.politician)
            && eq(&filter.party, &row.party)
            && eq(&filter.topic, &row.topic)
            && eq(&filter.session_type, &row.session_type)
            && filter.date_from.as_deref().is_none_or(|f| row.session_date.as_str() >= f)
            && filter.date_to.as_deref().is_none_or(|t| row.session_date.as_str() <= t)
    }

    /// Every admitted row scored in f64, reported as f32, fully sorted by
    /// score descending then chunk id ascending, cut to `k`.
    pub fn search(&self, query: &[f32], k: usize, filter: &OracleFilter) -> Vec<(String, f32)> {
        let mut all: Vec<(String, f32)> = self
            .rows
            .iter()
            .filter(|r| Self::admits(filter, r))
            .map(|r| {
                let mut s = 0f64;
                for (a, b) in query.iter().zip(&r.vector) {
                    s += f64::from(*a) * f64::from(*b);
                }
                (r.chunk_id.clone(), s as f32)
            })
            .collect();
        all.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        all.truncate(k);
        all
    }
}

/// A random query of 1 to 5 words drawn from the synthetic vocabularies.
pub fn random_query(rng: &mut impl Rng) -> String {
    let n = rng.random_range(1..=5);
    (0..n)
        .map(|_| {
            if rng.random_bool(0.5) {
                *TOPIC_WORDS.choose(rng).unwrap()
            } else {
                *FILLER.choose(rng).unwrap()
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Filter kinds exercised by the oracle comparisons.
pub const FILTER_KINDS: &[&str] = &[
    "none",
    "politician",
    "party",
    "topic",
    "session_type",
    "date_range",
    "combined",
    "no_match",
];

/// A filter of `kind` with values drawn from `rows`, in both oracle and crate
/// form.
pub fn make_filter(
    rng: &mut impl Rng,
    kind: &str,
    rows: &[OracleRow],
) -> (OracleFilter, parlrag::index::SearchFilter) {
    use parlrag::index::SearchFilter;
    let row = rows.choose(rng).unwrap();
    let mut o = OracleFilter::default();
    match kind {
        "none" => {}
        "politician" => o.politician = Some(row.politician.clone()),
        "party" => o.party = Some(row.party.clone()),
        "topic" => o.topic = Some(row.topic.clone()),
        "session_type" => o.session_type = Some(row.session_type.clone()),
        "date_range" => {
            let other = rows.choose(rng).unwrap();
            let (a, b) = if row.session_date <= other.session_date {
                (&row.session_date, &other.session_date)
            } else {
                (&other.session_date, &row.session_date)
            };
            o.date_from = Some(a.clone());
            o.date_to = Some(b.clone());
        }
        "combined" => {
            o.party = Some(row.party.clone());
            o.session_type = Some(row.session_type.clone());
            o.date_from = Some(row.session_date.clone());
        }
        "no_match" => o.party = Some("Z".into()),
        other => panic!("unknown filter kind {other}"),
    }
    let date = |s: &Option<String>| s.as_ref().map(|d| d.parse().unwrap());
    let f = SearchFilter {
        politician: o.politician.clone(),
        party: o.party.clone(),
        topic: o.topic.clone(),
        session_type: o.session_type.as_ref().map(|s| s.parse().unwrap()),
        date_from: date(&o.date_from),
        date_to: date(&o.date_to),
    };
    (o, f)
}

/// Compares crate hits against oracle hits: same ids in the same order and
/// scores within `tol`. Returns a description of the first difference.
pub fn compare_hits(got: &[parlrag::index::SearchHit], want: &[(String, f32)], tol: f64) -> Result<(), String> {
    if got.len() != want.len() {
        return Err(format!("{} hits, oracle has {}", got.len(), want.len()));
    }
    for (i, (g, w)) in got.iter().zip(want).enumerate() {
        if g.chunk_id != w.0 {
            return Err(format!("rank {}: {} vs oracle {}", i + 1, g.chunk_id, w.0));
        }
        if g.rank != i + 1 {
            return Err(format!("rank field {} at position {}", g.rank, i + 1));
        }
        if (f64::from(g.score) - f64::from(w.1)).abs() > tol {
            return Err(format!("rank {}: score {} vs oracle {}", i + 1, g.score, w.1));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// HTTP helpers

/// Validates `instance` against `schemas/<name>.schema.json`.
pub fn schema_check(name: &str, instance: &Value) -> Result<(), String> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(format!("{name}.schema.json"));
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).map_err(|e| format!("{name}: bad schema: {e}"))?;
    let errors: Vec<String> = validator.iter_errors(instance).map(|e| e.to_string()).collect();
    if errors.is_empty() {
        Ok(())
    } else {
        Err(format!("{name}: {} in {instance}", errors.join("; ")))
    }
}

/// Sends one request through `app` and returns status and parsed JSON body.
/// `peer` sets the client address the rate limiter sees.
pub async fn call(
    app: &axum::Router,
    method: &str,
    uri: &str,
    body: Option<&str>,
    peer: Option<std::net::SocketAddr>,
) -> (u16, Value) {
    use http_body_util::BodyExt;
    use tower::ServiceExt;

    let mut req = axum::http::Request::builder().method(method).uri(uri);
    if body.is_some() {
        req = req.header("content-type", "application/json");
    }
    let mut req = req.body(axum::body::Body::from(body.unwrap_or_default().to_string())).unwrap();
    if let Some(addr) = peer {
        req.extensions_mut().insert(axum::extract::ConnectInfo(addr));
    }
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status().as_u16();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|e| panic!("non-JSON body {bytes:?}: {e}"))
    };
    (status, value)
}

/// A service over `dir` with the echo generator, the hash embedder of `dim`
/// and the given suggestions and rate limit.
pub fn service_state(
    dir: &DataDir,
    dim: usize,
    generator: Arc<dyn parlrag::backend::GenerationBackend>,
    suggestions: Vec<String>,
    rate_limit_per_min: u32,
) -> parlrag::service::AppState {
    let engine = open_engine(dir, dim, generator, RetrievalSettings::default(), suggestions);
    let known: std::collections::HashSet<String> =
        engine.corpus().chunks().iter().map(|c| c.chunk_id.clone()).collect();
    let feedback = parlrag::feedback::FeedbackLog::open(dir.root(), Arc::new(known)).unwrap();
    parlrag::service::AppState::new(engine, feedback, rate_limit_per_min)
}
