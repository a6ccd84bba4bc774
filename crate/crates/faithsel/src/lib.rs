//! Selection and evaluation toolkit for call-center dialog summaries.
//!
//! Given a pool of candidate summaries for one dialog, this crate selects the
//! most task-faithful candidate using two semantic signals: the hallucination
//! rate of named entities against the source transcript (NEHR) and the KL
//! divergence between call-type distributions predicted on the candidate and
//! on the full dialog. It also scores summaries with task-semantic metrics
//! (CT-Acc, NE-P/R/F1) plus ROUGE-L.
//!
//! Neural generators, classifiers and NER systems stay outside the crate:
//! their outputs enter through JSON-lines files or the backend wire protocol,
//! and a gazetteer extractor plus a multinomial naive-Bayes classifier serve
//! as built-in reference backends so the whole pipeline runs offline.
//!
//! Module map:
//! - [`corpus`] — dialog data model, turn-markup parsing, corpus statistics, WER
//! - [`annotate`] — entity normalization, gazetteer extraction, annotation ingestion
//! - [`classify`] — call-type distributions, naive-Bayes backend, distribution ingestion
//! - [`backend`] — wire-protocol client shared by classify and annotate
//! - [`criteria`] — KL divergence, NEHR, and the selection strategies
//! - [`metrics`] — CT-Acc, NE-P/R/F1, ROUGE-L, report assembly
//! - [`genharness`] — decoding grids, generation manifests, prompt building,
//!   candidate ingestion

pub mod annotate;
pub mod backend;
pub mod classify;
pub mod corpus;
pub mod criteria;
pub mod genharness;
pub mod metrics;
