//! Retrieval-augmented question answering over parliamentary debate
//! transcripts.
//!
//! The pipeline runs in stages, each persisting into a data directory:
//! [`ingest`] turns a JSONL transcript corpus into speaker turns and chunks,
//! [`enrich`] summarizes each chunk with a generation backend, [`index`]
//! embeds the summaries into an exact vector index, and [`query`] serves
//! two-stage retrieval and grounded responses. [`service`] exposes the query
//! engine and the [`feedback`] log over HTTP.

pub mod backend;
pub mod config;
pub mod enrich;
pub mod feedback;
pub mod index;
pub mod ingest;
pub mod query;
pub mod service;
pub mod store;

pub use config::Config;
pub use query::QueryEngine;
pub use store::DataDir;
