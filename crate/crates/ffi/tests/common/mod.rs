#![allow(dead_code)]

use std::path::Path;

use parlrag::backend::mock::ExtractiveBackend;
use parlrag::enrich::{enrich_corpus, EnrichOptions};
use parlrag::index::{index_corpus, IndexOptions};
use parlrag::ingest::{chunk_turns, parse_corpus_bytes};
use parlrag::store::DataDir;
use parlrag::Config;

pub const FIXTURE: &str = include_str!("../../../core/tests/fixtures/corpus.jsonl");
pub const FIXTURE_CHUNKS: usize = 9;

/// Builds a data directory the default configuration can open.
pub fn build_data_dir(root: &Path) {
    let config = Config::default();
    let max_chunk_chars = 140;
    let rt = tokio::runtime::Builder::new_current_thread().build().unwrap();
    rt.block_on(async {
        let dir = DataDir::create(root).unwrap();
        let parsed = parse_corpus_bytes(FIXTURE.as_bytes()).unwrap();
        let chunks = chunk_turns(&parsed.turns, max_chunk_chars);
        dir.write_corpus(&parsed.documents, &parsed.turns, &chunks, false).unwrap();
        let corpus = dir.load_corpus().unwrap();
        let mut store = dir.enrichments().unwrap();
        let options = EnrichOptions {
            max_chunk_chars,
            ..EnrichOptions::default()
        };
        enrich_corpus(&corpus, corpus.chunks(), &mut store, &ExtractiveBackend::new(), 2, &options)
            .await
            .unwrap();
        let embedder = config.embedding_backend(&config.retrieval.embedding_backend, None).unwrap();
        index_corpus(&dir, &corpus, &store, embedder.as_ref(), &IndexOptions::default())
            .await
            .unwrap();
    });
}
