//! Call-type distributions and the classifiers that produce them.
//!
//! Distributions come from three sources with one validation path: a built-in
//! multinomial naive-Bayes model (the reference backend, so the selection
//! machinery runs without any neural classifier), JSON-lines files produced
//! by external classifiers, and the remote backend wire protocol.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendClient, BackendError};

/// Sum tolerance for distributions constructed in-process.
pub const SUM_TOLERANCE: f64 = 1e-9;
/// Sum tolerance under which ingested distributions are renormalized; beyond
/// it the data is considered corrupt.
pub const INGEST_RENORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("line {line}: schema violation: {message}")]
    SchemaViolation { line: usize, message: String },
    #[error("{target}: not a distribution: {reason}")]
    NotADistribution { target: String, reason: String },
    #[error("{target}: unknown label {label:?}")]
    UnknownLabel { target: String, label: String },
    #[error("duplicate label {0:?} in inventory")]
    DuplicateLabel(String),
    #[error("inventory is empty")]
    EmptyInventory,
    #[error("call-type inventories differ")]
    InventoryMismatch,
    #[error("no training examples")]
    EmptyCorpus,
    #[error("no training examples for label {0:?}")]
    MissingLabelExamples(String),
    #[error("smoothing constant must be positive, got {0}")]
    InvalidAlpha(f64),
    #[error("model file: {0}")]
    ModelFormat(String),
    #[error("transport: {0}")]
    Transport(String),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<BackendError> for ClassifyError {
    fn from(err: BackendError) -> Self {
        match err {
            BackendError::Transport(msg) => ClassifyError::Transport(msg),
            BackendError::Protocol(msg) => ClassifyError::Protocol(msg),
        }
    }
}

/// A call-type name from a declared inventory.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CallTypeLabel(pub String);

impl CallTypeLabel {
    pub fn new(name: impl Into<String>) -> Self {
        CallTypeLabel(name.into())
    }

    pub fn name(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for CallTypeLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// The fixed, ordered label set of one experiment run. Distributions over
/// different inventories never mix; mismatch is a hard error, never a silent
/// alignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Inventory {
    labels: Vec<CallTypeLabel>,
}

impl Inventory {
    pub fn new(labels: Vec<CallTypeLabel>) -> Result<Arc<Inventory>, ClassifyError> {
        if labels.is_empty() {
            return Err(ClassifyError::EmptyInventory);
        }
        let mut seen = std::collections::HashSet::new();
        for label in &labels {
            if !seen.insert(label.name().to_string()) {
                return Err(ClassifyError::DuplicateLabel(label.name().to_string()));
            }
        }
        Ok(Arc::new(Inventory { labels }))
    }

    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Arc<Inventory>, ClassifyError> {
        Inventory::new(
            names
                .iter()
                .map(|n| CallTypeLabel::new(n.as_ref()))
                .collect(),
        )
    }

    pub fn labels(&self) -> &[CallTypeLabel] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &CallTypeLabel) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// A probability vector over a call-type inventory: every label present,
/// non-negative, summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct CallTypeDistribution {
    inventory: Arc<Inventory>,
    probs: Vec<f64>,
}

impl CallTypeDistribution {
    /// Validating constructor; `target` names the distribution in errors.
    pub fn new(
        inventory: Arc<Inventory>,
        probs: Vec<f64>,
        target: &str,
    ) -> Result<Self, ClassifyError> {
        if probs.len() != inventory.len() {
            return Err(ClassifyError::NotADistribution {
                target: target.to_string(),
                reason: format!(
                    "expected {} probabilities, got {}",
                    inventory.len(),
                    probs.len()
                ),
            });
        }
        for (label, p) in inventory.labels().iter().zip(&probs) {
            if !p.is_finite() || *p < 0.0 {
                return Err(ClassifyError::NotADistribution {
                    target: target.to_string(),
                    reason: format!("probability of {label} is {p}"),
                });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(ClassifyError::NotADistribution {
                target: target.to_string(),
                reason: format!("probabilities sum to {sum}"),
            });
        }
        Ok(CallTypeDistribution { inventory, probs })
    }

    /// Constructor for ingested data: sums off by at most
    /// [`INGEST_RENORM_TOLERANCE`] are renormalized, larger deviations are
    /// rejected.
    pub fn from_ingested(
        inventory: Arc<Inventory>,
        probs: Vec<f64>,
        target: &str,
    ) -> Result<Self, ClassifyError> {
        if probs.len() != inventory.len() {
            return Err(ClassifyError::NotADistribution {
                target: target.to_string(),
                reason: format!(
                    "expected {} probabilities, got {}",
                    inventory.len(),
                    probs.len()
                ),
            });
        }
        for (label, p) in inventory.labels().iter().zip(&probs) {
            if !p.is_finite() || *p < 0.0 {
                return Err(ClassifyError::NotADistribution {
                    target: target.to_string(),
                    reason: format!("probability of {label} is {p}"),
                });
            }
        }
        let sum: f64 = probs.iter().sum();
        // tiny slack so a deviation of exactly 1e-6 (e.g. probs summing to
        // 0.999999) stays on the renormalize side despite float rounding
        if (sum - 1.0).abs() > INGEST_RENORM_TOLERANCE + 1e-12 {
            return Err(ClassifyError::NotADistribution {
                target: target.to_string(),
                reason: format!("probabilities sum to {sum}"),
            });
        }
        let probs = probs.into_iter().map(|p| p / sum).collect();
        CallTypeDistribution::new(inventory, probs, target)
    }

    /// Probability mass entirely on one label.
    pub fn one_hot(
        inventory: Arc<Inventory>,
        label: &CallTypeLabel,
    ) -> Result<Self, ClassifyError> {
        let index = inventory
            .index_of(label)
            .ok_or_else(|| ClassifyError::UnknownLabel {
                target: "one_hot".to_string(),
                label: label.name().to_string(),
            })?;
        let mut probs = vec![0.0; inventory.len()];
        probs[index] = 1.0;
        Ok(CallTypeDistribution { inventory, probs })
    }

    pub fn inventory(&self) -> &Arc<Inventory> {
        &self.inventory
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob_of(&self, label: &CallTypeLabel) -> Option<f64> {
        self.inventory.index_of(label).map(|i| self.probs[i])
    }

    pub fn same_inventory(&self, other: &CallTypeDistribution) -> bool {
        Arc::ptr_eq(&self.inventory, &other.inventory) || self.inventory == other.inventory
    }
}

/// Label of maximal probability; ties go to the lexicographically smallest
/// label name so the decision is deterministic.
pub fn argmax_calltype(distribution: &CallTypeDistribution) -> &CallTypeLabel {
    let labels = distribution.inventory.labels();
    let mut best = 0usize;
    for i in 1..labels.len() {
        let p = distribution.probs[i];
        let best_p = distribution.probs[best];
        if p > best_p || (p == best_p && labels[i].name() < labels[best].name()) {
            best = i;
        }
    }
    &labels[best]
}

// ---------------------------------------------------------------------------
// Naive-Bayes reference backend
// ---------------------------------------------------------------------------

/// Multinomial naive Bayes with add-alpha smoothing over case-folded
/// whitespace tokens. Counts are stored as integers, so identical training
/// data yields bit-identical models and model files.
#[derive(Debug, Clone, PartialEq)]
pub struct NbModel {
    inventory: Arc<Inventory>,
    alpha: f64,
    total_docs: u64,
    doc_counts: Vec<u64>,
    token_counts: BTreeMap<String, Vec<u64>>,
    label_token_totals: Vec<u64>,
}

fn nb_tokens(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

/// Train the reference classifier. Every inventory label needs at least one
/// example and `alpha` must be positive.
pub fn train_nb(
    examples: &[(String, CallTypeLabel)],
    inventory: Arc<Inventory>,
    alpha: f64,
) -> Result<NbModel, ClassifyError> {
    if alpha <= 0.0 || !alpha.is_finite() {
        return Err(ClassifyError::InvalidAlpha(alpha));
    }
    if examples.is_empty() {
        return Err(ClassifyError::EmptyCorpus);
    }
    let mut doc_counts = vec![0u64; inventory.len()];
    let mut token_counts: BTreeMap<String, Vec<u64>> = BTreeMap::new();
    let mut label_token_totals = vec![0u64; inventory.len()];
    for (text, label) in examples {
        let index = inventory
            .index_of(label)
            .ok_or_else(|| ClassifyError::UnknownLabel {
                target: "training example".to_string(),
                label: label.name().to_string(),
            })?;
        doc_counts[index] += 1;
        for token in nb_tokens(text) {
            token_counts.entry(token).or_insert_with(|| vec![0; inventory.len()])[index] += 1;
            label_token_totals[index] += 1;
        }
    }
    for (index, label) in inventory.labels().iter().enumerate() {
        if doc_counts[index] == 0 {
            return Err(ClassifyError::MissingLabelExamples(label.name().to_string()));
        }
    }
    Ok(NbModel {
        inventory,
        alpha,
        total_docs: examples.len() as u64,
        doc_counts,
        token_counts,
        label_token_totals,
    })
}

impl NbModel {
    pub fn inventory(&self) -> &Arc<Inventory> {
        &self.inventory
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn vocabulary_size(&self) -> usize {
        self.token_counts.len()
    }

    pub fn prior(&self, index: usize) -> f64 {
        self.doc_counts[index] as f64 / self.total_docs as f64
    }
}

/// Posterior over the model's inventory. Log-domain scoring with
/// max-subtraction, so long transcripts do not underflow; out-of-vocabulary
/// tokens are ignored and empty text yields the priors.
pub fn predict_distribution(model: &NbModel, text: &str) -> CallTypeDistribution {
    let n = model.inventory.len();
    let vocab = model.vocabulary_size() as f64;
    let mut scores: Vec<f64> = (0..n).map(|i| model.prior(i).ln()).collect();
    for token in nb_tokens(text) {
        if let Some(counts) = model.token_counts.get(&token) {
            for (i, score) in scores.iter_mut().enumerate() {
                let likelihood = (counts[i] as f64 + model.alpha)
                    / (model.label_token_totals[i] as f64 + model.alpha * vocab);
                *score += likelihood.ln();
            }
        }
    }
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= sum;
    }
    CallTypeDistribution {
        inventory: Arc::clone(&model.inventory),
        probs,
    }
}

// versioned model file
#[derive(Serialize, Deserialize)]
struct NbModelFile {
    format: String,
    version: u32,
    alpha: f64,
    inventory: Vec<String>,
    total_docs: u64,
    doc_counts: Vec<u64>,
    label_token_totals: Vec<u64>,
    token_counts: BTreeMap<String, Vec<u64>>,
}

const MODEL_FORMAT: &str = "faithsel-nb";
const MODEL_VERSION: u32 = 1;

/// Serialize a model. Deterministic: identical models produce byte-identical
/// files.
pub fn save_model<W: Write>(model: &NbModel, mut writer: W) -> Result<(), ClassifyError> {
    let file = NbModelFile {
        format: MODEL_FORMAT.to_string(),
        version: MODEL_VERSION,
        alpha: model.alpha,
        inventory: model
            .inventory
            .labels()
            .iter()
            .map(|l| l.name().to_string())
            .collect(),
        total_docs: model.total_docs,
        doc_counts: model.doc_counts.clone(),
        label_token_totals: model.label_token_totals.clone(),
        token_counts: model.token_counts.clone(),
    };
    let json = serde_json::to_string(&file).map_err(|e| ClassifyError::ModelFormat(e.to_string()))?;
    writeln!(writer, "{json}")?;
    Ok(())
}

/// Load and validate a model file.
pub fn load_model<R: BufRead>(mut reader: R) -> Result<NbModel, ClassifyError> {
    let mut contents = String::new();
    reader.read_to_string(&mut contents)?;
    let file: NbModelFile =
        serde_json::from_str(&contents).map_err(|e| ClassifyError::ModelFormat(e.to_string()))?;
    if file.format != MODEL_FORMAT {
        return Err(ClassifyError::ModelFormat(format!(
            "unknown format {:?}",
            file.format
        )));
    }
    if file.version != MODEL_VERSION {
        return Err(ClassifyError::ModelFormat(format!(
            "unsupported version {}",
            file.version
        )));
    }
    if file.alpha <= 0.0 || !file.alpha.is_finite() {
        return Err(ClassifyError::InvalidAlpha(file.alpha));
    }
    let inventory = Inventory::from_names(&file.inventory)?;
    let n = inventory.len();
    if file.doc_counts.len() != n || file.label_token_totals.len() != n {
        return Err(ClassifyError::ModelFormat(
            "count vectors do not match inventory size".to_string(),
        ));
    }
    if file.total_docs == 0 || file.doc_counts.iter().any(|c| *c == 0) {
        return Err(ClassifyError::ModelFormat(
            "model trained without examples for some label".to_string(),
        ));
    }
    if file.doc_counts.iter().sum::<u64>() != file.total_docs {
        return Err(ClassifyError::ModelFormat(
            "doc counts do not sum to total_docs".to_string(),
        ));
    }
    for (token, counts) in &file.token_counts {
        if counts.len() != n {
            return Err(ClassifyError::ModelFormat(format!(
                "token {token:?} has {} counts, expected {n}",
                counts.len()
            )));
        }
    }
    let mut totals = vec![0u64; n];
    for counts in file.token_counts.values() {
        for (i, c) in counts.iter().enumerate() {
            totals[i] = totals[i].saturating_add(*c);
        }
    }
    if totals != file.label_token_totals {
        return Err(ClassifyError::ModelFormat(
            "label token totals do not match token counts".to_string(),
        ));
    }
    Ok(NbModel {
        inventory,
        alpha: file.alpha,
        total_docs: file.total_docs,
        doc_counts: file.doc_counts,
        token_counts: file.token_counts,
        label_token_totals: file.label_token_totals,
    })
}

// ---------------------------------------------------------------------------
// Distribution file ingestion
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct DistributionHeader {
    inventory: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct DistributionLine {
    target_id: String,
    probs: BTreeMap<String, f64>,
}

/// Load the distribution JSON-lines format: a header line declaring the
/// inventory, then one `{"target_id", "probs"}` record per line. Labels
/// absent from a record's map carry probability zero; labels outside the
/// inventory are an error.
pub fn load_distributions<R: BufRead>(
    reader: R,
) -> Result<(Arc<Inventory>, BTreeMap<String, CallTypeDistribution>), ClassifyError> {
    let mut inventory: Option<Arc<Inventory>> = None;
    let mut distributions = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let Some(inventory) = inventory.as_ref() else {
            let header: DistributionHeader =
                serde_json::from_str(&line).map_err(|e| ClassifyError::SchemaViolation {
                    line: line_no,
                    message: format!("expected inventory header: {e}"),
                })?;
            inventory = Some(Inventory::from_names(&header.inventory)?);
            continue;
        };
        let record: DistributionLine =
            serde_json::from_str(&line).map_err(|e| ClassifyError::SchemaViolation {
                line: line_no,
                message: e.to_string(),
            })?;
        let mut probs = vec![0.0f64; inventory.len()];
        for (label, p) in &record.probs {
            let index = inventory
                .index_of(&CallTypeLabel::new(label.clone()))
                .ok_or_else(|| ClassifyError::UnknownLabel {
                    target: record.target_id.clone(),
                    label: label.clone(),
                })?;
            probs[index] = *p;
        }
        let distribution =
            CallTypeDistribution::from_ingested(Arc::clone(inventory), probs, &record.target_id)?;
        if distributions
            .insert(record.target_id.clone(), distribution)
            .is_some()
        {
            return Err(ClassifyError::SchemaViolation {
                line: line_no,
                message: format!("duplicate target_id {:?}", record.target_id),
            });
        }
    }
    let inventory = inventory.ok_or(ClassifyError::SchemaViolation {
        line: 0,
        message: "missing inventory header".to_string(),
    })?;
    Ok((inventory, distributions))
}

/// Write distributions in the format [`load_distributions`] reads, targets in
/// sorted order.
pub fn write_distributions<W: Write>(
    inventory: &Inventory,
    distributions: &BTreeMap<String, CallTypeDistribution>,
    mut writer: W,
) -> Result<(), ClassifyError> {
    let header = DistributionHeader {
        inventory: inventory
            .labels()
            .iter()
            .map(|l| l.name().to_string())
            .collect(),
    };
    writeln!(
        writer,
        "{}",
        serde_json::to_string(&header).map_err(|e| ClassifyError::ModelFormat(e.to_string()))?
    )?;
    for (target_id, distribution) in distributions {
        if distribution.inventory().as_ref() != inventory {
            return Err(ClassifyError::InventoryMismatch);
        }
        let line = DistributionLine {
            target_id: target_id.clone(),
            probs: inventory
                .labels()
                .iter()
                .zip(distribution.probs())
                .map(|(l, p)| (l.name().to_string(), *p))
                .collect(),
        };
        writeln!(
            writer,
            "{}",
            serde_json::to_string(&line).map_err(|e| ClassifyError::ModelFormat(e.to_string()))?
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Remote classifier client
// ---------------------------------------------------------------------------

/// Classify texts through a remote backend speaking the shared wire protocol
/// (`task: "calltype"`). One validated distribution per input text, in input
/// order.
pub fn classify_remote(
    client: &BackendClient,
    inventory: &Arc<Inventory>,
    texts: &[String],
) -> Result<Vec<CallTypeDistribution>, ClassifyError> {
    let outputs = client.request("calltype", texts)?;
    let mut distributions = Vec::with_capacity(outputs.len());
    for (i, output) in outputs.into_iter().enumerate() {
        let target = format!("remote output {i}");
        let map: BTreeMap<String, f64> =
            serde_json::from_value(output).map_err(|e| ClassifyError::Protocol(e.to_string()))?;
        let mut probs = vec![0.0f64; inventory.len()];
        for (label, p) in &map {
            let index = inventory
                .index_of(&CallTypeLabel::new(label.clone()))
                .ok_or_else(|| ClassifyError::UnknownLabel {
                    target: target.clone(),
                    label: label.clone(),
                })?;
            probs[index] = *p;
        }
        distributions.push(CallTypeDistribution::from_ingested(
            Arc::clone(inventory),
            probs,
            &target,
        )?);
    }
    Ok(distributions)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inventory(names: &[&str]) -> Arc<Inventory> {
        Inventory::from_names(names).unwrap()
    }

    fn label(name: &str) -> CallTypeLabel {
        CallTypeLabel::new(name)
    }

    #[test]
    fn inventory_rejects_duplicates_and_empty() {
        assert!(matches!(
            Inventory::from_names(&["A", "A"]),
            Err(ClassifyError::DuplicateLabel(_))
        ));
        assert!(matches!(
            Inventory::from_names::<&str>(&[]),
            Err(ClassifyError::EmptyInventory)
        ));
    }

    #[test]
    fn distribution_validation() {
        let inv = inventory(&["A", "B"]);
        assert!(CallTypeDistribution::new(Arc::clone(&inv), vec![0.7, 0.3], "t").is_ok());
        assert!(matches!(
            CallTypeDistribution::new(Arc::clone(&inv), vec![0.7, 0.2], "t"),
            Err(ClassifyError::NotADistribution { .. })
        ));
        assert!(matches!(
            CallTypeDistribution::new(Arc::clone(&inv), vec![1.2, -0.2], "t"),
            Err(ClassifyError::NotADistribution { .. })
        ));
    }

    #[test]
    fn ingested_distributions_renormalize_within_tolerance() {
        let inv = inventory(&["A", "B"]);
        let d = CallTypeDistribution::from_ingested(Arc::clone(&inv), vec![0.7, 0.299999], "t")
            .unwrap();
        assert!((d.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(matches!(
            CallTypeDistribution::from_ingested(Arc::clone(&inv), vec![0.7, 0.2], "t"),
            Err(ClassifyError::NotADistribution { .. })
        ));
    }

    #[test]
    fn argmax_has_lexicographic_tie_break() {
        let inv = inventory(&["B", "A"]);
        let d = CallTypeDistribution::new(Arc::clone(&inv), vec![0.3, 0.7], "t").unwrap();
        assert_eq!(argmax_calltype(&d).name(), "A");
        let tie = CallTypeDistribution::new(Arc::clone(&inv), vec![0.5, 0.5], "t").unwrap();
        assert_eq!(argmax_calltype(&tie).name(), "A");
    }

    fn toy_model(alpha: f64) -> NbModel {
        let inv = inventory(&["A", "B"]);
        let examples = vec![
            ("go north".to_string(), label("A")),
            ("go south".to_string(), label("B")),
            ("north north".to_string(), label("A")),
        ];
        train_nb(&examples, inv, alpha).unwrap()
    }

    #[test]
    fn nb_posterior_matches_hand_computation() {
        // alpha=1, vocab {go, north, south}:
        //   priors: A=2/3, B=1/3
        //   P(north|A)=4/7, P(go|A)=2/7; P(north|B)=1/5, P(go|B)=2/5
        //   doc "north go": posterior A = 1200/1494 = 200/249
        let model = toy_model(1.0);
        let d = predict_distribution(&model, "north go");
        let expected_a = 200.0 / 249.0;
        assert!((d.prob_of(&label("A")).unwrap() - expected_a).abs() < 1e-12);
        assert!((d.prob_of(&label("B")).unwrap() - (1.0 - expected_a)).abs() < 1e-12);
    }

    #[test]
    fn nb_separable_case_picks_right_label() {
        let inv = inventory(&["A", "B"]);
        let examples = vec![
            ("xx yy xx".to_string(), label("A")),
            ("zz ww".to_string(), label("B")),
        ];
        let model = train_nb(&examples, inv, 1.0).unwrap();
        let d = predict_distribution(&model, "xx yy");
        assert_eq!(argmax_calltype(&d).name(), "A");
        assert!(d.prob_of(&label("A")).unwrap() > 0.8);
    }

    #[test]
    fn nb_balanced_data_gives_uniform_priors() {
        let model = toy_model(1.0);
        assert!((model.prior(0) - 2.0 / 3.0).abs() < 1e-15);
        let d = predict_distribution(&model, "");
        // empty text: posterior equals the priors
        assert!((d.probs()[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((d.probs()[1] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn nb_duplicated_document_keeps_argmax() {
        let inv = inventory(&["A", "B"]);
        let examples = vec![
            ("north wind".to_string(), label("A")),
            ("south sea".to_string(), label("B")),
        ];
        let model = train_nb(&examples, inv, 1.0).unwrap();
        let doc = "north sea north";
        let single = argmax_calltype(&predict_distribution(&model, doc)).clone();
        let doubled = format!("{doc} {doc}");
        assert_eq!(
            argmax_calltype(&predict_distribution(&model, &doubled)),
            &single
        );
    }

    #[test]
    fn nb_training_errors() {
        let inv = inventory(&["A", "B"]);
        assert!(matches!(
            train_nb(&[], Arc::clone(&inv), 1.0),
            Err(ClassifyError::EmptyCorpus)
        ));
        let only_a = vec![("x".to_string(), label("A"))];
        assert!(matches!(
            train_nb(&only_a, Arc::clone(&inv), 1.0),
            Err(ClassifyError::MissingLabelExamples(l)) if l == "B"
        ));
        assert!(matches!(
            train_nb(&only_a, inv, 0.0),
            Err(ClassifyError::InvalidAlpha(_))
        ));
    }

    #[test]
    fn model_roundtrip_is_deterministic() {
        let model = toy_model(1.0);
        let mut bytes_a = Vec::new();
        save_model(&model, &mut bytes_a).unwrap();
        let mut bytes_b = Vec::new();
        save_model(&model, &mut bytes_b).unwrap();
        assert_eq!(bytes_a, bytes_b);
        let loaded = load_model(bytes_a.as_slice()).unwrap();
        assert_eq!(loaded, model);
    }

    #[test]
    fn model_load_rejects_corrupt_files() {
        assert!(matches!(
            load_model("{}".as_bytes()),
            Err(ClassifyError::ModelFormat(_))
        ));
        let model = toy_model(1.0);
        let mut bytes = Vec::new();
        save_model(&model, &mut bytes).unwrap();
        let tampered = String::from_utf8(bytes).unwrap().replace("\"total_docs\":3", "\"total_docs\":7");
        assert!(matches!(
            load_model(tampered.as_bytes()),
            Err(ClassifyError::ModelFormat(_))
        ));
    }

    #[test]
    fn distribution_file_roundtrip() {
        let inv = inventory(&["A", "B"]);
        let mut map = BTreeMap::new();
        map.insert(
            "d1".to_string(),
            CallTypeDistribution::new(Arc::clone(&inv), vec![0.7, 0.3], "d1").unwrap(),
        );
        let mut out = Vec::new();
        write_distributions(&inv, &map, &mut out).unwrap();
        let (loaded_inv, loaded) = load_distributions(out.as_slice()).unwrap();
        assert_eq!(loaded_inv.as_ref(), inv.as_ref());
        assert_eq!(loaded["d1"].probs(), map["d1"].probs());
    }

    #[test]
    fn distribution_load_errors() {
        // header missing
        let no_header = r#"{"target_id":"d1","probs":{"A":1.0}}"#;
        assert!(matches!(
            load_distributions(no_header.as_bytes()),
            Err(ClassifyError::SchemaViolation { line: 1, .. })
        ));
        // negative probability
        let neg = "{\"inventory\":[\"A\",\"B\"]}\n{\"target_id\":\"d1\",\"probs\":{\"A\":1.2,\"B\":-0.2}}";
        assert!(matches!(
            load_distributions(neg.as_bytes()),
            Err(ClassifyError::NotADistribution { .. })
        ));
        // unknown label
        let unknown = "{\"inventory\":[\"A\",\"B\"]}\n{\"target_id\":\"d1\",\"probs\":{\"C\":1.0}}";
        assert!(matches!(
            load_distributions(unknown.as_bytes()),
            Err(ClassifyError::UnknownLabel { .. })
        ));
        // slightly off sums renormalize
        let drift = "{\"inventory\":[\"A\",\"B\"]}\n{\"target_id\":\"d1\",\"probs\":{\"A\":0.7,\"B\":0.299999}}";
        let (_, loaded) = load_distributions(drift.as_bytes()).unwrap();
        assert!((loaded["d1"].probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
