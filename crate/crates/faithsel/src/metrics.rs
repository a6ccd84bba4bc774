//! Task-semantic evaluation: call-type accuracy, entity-overlap
//! precision/recall/F1, ROUGE-L, and their aggregation into per-dialog and
//! corpus-level reports.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::{intersection_size, AnnotateError, EntitySet};
use crate::classify::{argmax_calltype, CallTypeDistribution, CallTypeLabel};
use crate::corpus::DialogRecord;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("label lists have different lengths ({predicted} vs {reference})")]
    LengthMismatch { predicted: usize, reference: usize },
    #[error("label lists are empty")]
    Empty,
    #[error("beta must be positive, got {0}")]
    InvalidBeta(f64),
    #[error("dialog {dialog_id:?}: missing {what}")]
    MissingArtifact { dialog_id: String, what: String },
    #[error(transparent)]
    Annotate(#[from] AnnotateError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Entity-overlap precision, recall and F1 between a generated and a
/// reference summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Fraction of positions with an exact label match.
pub fn ct_accuracy(
    predicted: &[CallTypeLabel],
    reference: &[CallTypeLabel],
) -> Result<f64, MetricsError> {
    if predicted.len() != reference.len() {
        return Err(MetricsError::LengthMismatch {
            predicted: predicted.len(),
            reference: reference.len(),
        });
    }
    if predicted.is_empty() {
        return Err(MetricsError::Empty);
    }
    let matches = predicted
        .iter()
        .zip(reference)
        .filter(|(p, r)| p == r)
        .count();
    Ok(matches as f64 / predicted.len() as f64)
}

/// Entity precision/recall/F1 under the sets' matching config.
///
/// Conventions for empty sets: both empty scores (1,1,1) — an entity-free
/// summary correctly conveys an entity-free reference — and exactly one empty
/// scores (0,0,0).
pub fn ne_prf(generated: &EntitySet, reference: &EntitySet) -> Result<NeScore, MetricsError> {
    match (generated.is_empty(), reference.is_empty()) {
        (true, true) => {
            return Ok(NeScore {
                precision: 1.0,
                recall: 1.0,
                f1: 1.0,
            })
        }
        (true, false) | (false, true) => {
            // still validate configs before answering
            intersection_size(generated, reference)?;
            return Ok(NeScore {
                precision: 0.0,
                recall: 0.0,
                f1: 0.0,
            });
        }
        (false, false) => {}
    }
    let intersection = intersection_size(generated, reference)? as f64;
    let precision = intersection / generated.len() as f64;
    let recall = intersection / reference.len() as f64;
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(NeScore {
        precision,
        recall,
        f1,
    })
}

/// Self-test for the precision/recall swap identity
/// `P(gen, ref) == R(ref, gen)` to 1e-12.
pub fn swap_duality_check(generated: &EntitySet, reference: &EntitySet) -> bool {
    match (ne_prf(generated, reference), ne_prf(reference, generated)) {
        (Ok(forward), Ok(backward)) => (forward.precision - backward.recall).abs() <= 1e-12,
        _ => false,
    }
}

/// Tokenize for ROUGE-L: case fold, split on whitespace, then peel leading
/// and trailing punctuation (any non-alphanumeric character) off each token
/// as separate single-character tokens.
pub fn rouge_tokens(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for raw in text.to_lowercase().split_whitespace() {
        let chars: Vec<char> = raw.chars().collect();
        let mut start = 0;
        let mut end = chars.len();
        while start < end && !chars[start].is_alphanumeric() {
            start += 1;
        }
        while end > start && !chars[end - 1].is_alphanumeric() {
            end -= 1;
        }
        for c in &chars[..start] {
            tokens.push(c.to_string());
        }
        if start < end {
            tokens.push(chars[start..end].iter().collect());
        }
        for c in &chars[end..] {
            tokens.push(c.to_string());
        }
    }
    tokens
}

fn lcs_length<T: Eq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut curr = vec![0usize; b.len() + 1];
    for ai in a {
        for (j, bj) in b.iter().enumerate() {
            curr[j + 1] = if ai == bj {
                prev[j] + 1
            } else {
                prev[j + 1].max(curr[j])
            };
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

/// Summary-level ROUGE-L: the F-measure over longest-common-subsequence
/// precision and recall, `F = (1 + beta^2) P R / (R + beta^2 P)`. Zero when
/// either token list is empty.
pub fn rouge_l<T: Eq>(candidate: &[T], reference: &[T], beta: f64) -> Result<f64, MetricsError> {
    if beta <= 0.0 || !beta.is_finite() {
        return Err(MetricsError::InvalidBeta(beta));
    }
    if candidate.is_empty() || reference.is_empty() {
        return Ok(0.0);
    }
    let lcs = lcs_length(candidate, reference) as f64;
    let precision = lcs / candidate.len() as f64;
    let recall = lcs / reference.len() as f64;
    let beta_sq = beta * beta;
    let denominator = recall + beta_sq * precision;
    if denominator == 0.0 {
        return Ok(0.0);
    }
    Ok((1.0 + beta_sq) * precision * recall / denominator)
}

// ---------------------------------------------------------------------------
// Report assembly
// ---------------------------------------------------------------------------

/// The summary being evaluated for one dialog, with its annotations.
#[derive(Debug, Clone)]
pub struct SummaryArtifact {
    pub text: String,
    pub entities: EntitySet,
    pub distribution: CallTypeDistribution,
    pub external: BTreeMap<String, f64>,
}

/// Which label CT-Acc compares against: the annotated reference call type
/// (default) or the argmax of the dialog classifier's distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CtReference {
    #[default]
    Annotated,
    DialogClassifier,
}

#[derive(Debug, Clone)]
pub struct ReportOptions {
    pub beta: f64,
    pub partial: bool,
    pub ct_reference: CtReference,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            beta: 1.0,
            partial: false,
            ct_reference: CtReference::Annotated,
        }
    }
}

/// Per-dialog metric values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogMetrics {
    pub rouge_l: f64,
    pub ct_correct: bool,
    pub ne: NeScore,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub external: BTreeMap<String, f64>,
}

/// Corpus-level aggregates: arithmetic means of per-dialog values, absent
/// when nothing was evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub n: usize,
    pub rouge_l_mean: Option<f64>,
    pub ct_acc: Option<f64>,
    pub ne_p_mean: Option<f64>,
    pub ne_r_mean: Option<f64>,
    pub ne_f1_mean: Option<f64>,
    /// Means of externally supplied scores over the dialogs that carry them,
    /// with the contributing count.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub external_means: BTreeMap<String, ExternalMean>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExternalMean {
    pub mean: f64,
    pub n: usize,
}

/// A dialog excluded from a partial report and why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedDialog {
    pub dialog_id: String,
    pub missing: String,
}

/// Per-dialog and aggregated metric values for one evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub beta: f64,
    pub per_dialog: BTreeMap<String, DialogMetrics>,
    pub aggregate: AggregateMetrics,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<SkippedDialog>,
}

/// Compute per-dialog metrics for every corpus record and aggregate them.
///
/// Every record needs a summary artifact, a reference synopsis, reference
/// entities, and a reference call-type label. A missing piece is a
/// [`MetricsError::MissingArtifact`] unless `partial` is set, in which case
/// the dialog is excluded and counted in `skipped`.
pub fn build_report(
    corpus: &[DialogRecord],
    summaries: &BTreeMap<String, SummaryArtifact>,
    reference_entities: &BTreeMap<String, EntitySet>,
    dialog_distributions: &BTreeMap<String, CallTypeDistribution>,
    options: &ReportOptions,
) -> Result<MetricReport, MetricsError> {
    if options.beta <= 0.0 || !options.beta.is_finite() {
        return Err(MetricsError::InvalidBeta(options.beta));
    }
    let mut per_dialog = BTreeMap::new();
    let mut skipped = Vec::new();
    for record in corpus {
        match dialog_metrics(record, summaries, reference_entities, dialog_distributions, options) {
            Ok(metrics) => {
                per_dialog.insert(record.id.clone(), metrics);
            }
            Err(MetricsError::MissingArtifact { dialog_id, what }) if options.partial => {
                skipped.push(SkippedDialog {
                    dialog_id,
                    missing: what,
                });
            }
            Err(err) => return Err(err),
        }
    }
    let aggregate = aggregate_metrics(&per_dialog);
    Ok(MetricReport {
        beta: options.beta,
        per_dialog,
        aggregate,
        skipped,
    })
}

fn dialog_metrics(
    record: &DialogRecord,
    summaries: &BTreeMap<String, SummaryArtifact>,
    reference_entities: &BTreeMap<String, EntitySet>,
    dialog_distributions: &BTreeMap<String, CallTypeDistribution>,
    options: &ReportOptions,
) -> Result<DialogMetrics, MetricsError> {
    let missing = |what: &str| MetricsError::MissingArtifact {
        dialog_id: record.id.clone(),
        what: what.to_string(),
    };
    let summary = summaries.get(&record.id).ok_or_else(|| missing("summary"))?;
    let synopsis = record
        .synopsis
        .as_deref()
        .ok_or_else(|| missing("reference synopsis"))?;
    let ref_entities = reference_entities
        .get(&record.id)
        .ok_or_else(|| missing("reference entity annotation"))?;
    let reference_label = match options.ct_reference {
        CtReference::Annotated => record
            .call_type
            .clone()
            .map(CallTypeLabel::new)
            .ok_or_else(|| missing("reference call type"))?,
        CtReference::DialogClassifier => {
            let distribution = dialog_distributions
                .get(&record.id)
                .ok_or_else(|| missing("dialog distribution"))?;
            argmax_calltype(distribution).clone()
        }
    };

    let rouge = rouge_l(
        &rouge_tokens(&summary.text),
        &rouge_tokens(synopsis),
        options.beta,
    )?;
    let predicted = argmax_calltype(&summary.distribution);
    let ne = ne_prf(&summary.entities, ref_entities)?;
    Ok(DialogMetrics {
        rouge_l: rouge,
        ct_correct: *predicted == reference_label,
        ne,
        external: summary.external.clone(),
    })
}

fn aggregate_metrics(per_dialog: &BTreeMap<String, DialogMetrics>) -> AggregateMetrics {
    let n = per_dialog.len();
    if n == 0 {
        return AggregateMetrics {
            n: 0,
            rouge_l_mean: None,
            ct_acc: None,
            ne_p_mean: None,
            ne_r_mean: None,
            ne_f1_mean: None,
            external_means: BTreeMap::new(),
        };
    }
    let count = n as f64;
    let mut rouge_sum = 0.0;
    let mut correct = 0usize;
    let mut p_sum = 0.0;
    let mut r_sum = 0.0;
    let mut f1_sum = 0.0;
    let mut external_sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for metrics in per_dialog.values() {
        rouge_sum += metrics.rouge_l;
        correct += usize::from(metrics.ct_correct);
        p_sum += metrics.ne.precision;
        r_sum += metrics.ne.recall;
        f1_sum += metrics.ne.f1;
        for (name, value) in &metrics.external {
            let entry = external_sums.entry(name.clone()).or_insert((0.0, 0));
            entry.0 += value;
            entry.1 += 1;
        }
    }
    AggregateMetrics {
        n,
        rouge_l_mean: Some(rouge_sum / count),
        ct_acc: Some(correct as f64 / count),
        ne_p_mean: Some(p_sum / count),
        ne_r_mean: Some(r_sum / count),
        ne_f1_mean: Some(f1_sum / count),
        external_means: external_sums
            .into_iter()
            .map(|(name, (sum, k))| {
                (
                    name,
                    ExternalMean {
                        mean: sum / k as f64,
                        n: k,
                    },
                )
            })
            .collect(),
    }
}

fn fmt4(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v:.4}"),
        None => "-".to_string(),
    }
}

impl MetricReport {
    /// Per-dialog flat TSV, one row per dialog sorted by id. Values are
    /// rounded to 4 decimals at presentation only.
    pub fn write_tsv<W: Write>(&self, mut writer: W) -> Result<(), MetricsError> {
        writeln!(writer, "dialog_id\trouge_l\tct_correct\tne_p\tne_r\tne_f1")?;
        for (dialog_id, m) in &self.per_dialog {
            writeln!(
                writer,
                "{dialog_id}\t{:.4}\t{}\t{:.4}\t{:.4}\t{:.4}",
                m.rouge_l, m.ct_correct, m.ne.precision, m.ne.recall, m.ne.f1
            )?;
        }
        Ok(())
    }

    /// One-row aggregate TSV mirroring the evaluation table columns, external
    /// score columns appended by name.
    pub fn write_aggregate_tsv<W: Write>(&self, mut writer: W) -> Result<(), MetricsError> {
        let a = &self.aggregate;
        let mut header = "n\trouge_l\tct_acc\tne_p\tne_r\tne_f1".to_string();
        let mut row = format!(
            "{}\t{}\t{}\t{}\t{}\t{}",
            a.n,
            fmt4(a.rouge_l_mean),
            fmt4(a.ct_acc),
            fmt4(a.ne_p_mean),
            fmt4(a.ne_r_mean),
            fmt4(a.ne_f1_mean)
        );
        for (name, external) in &a.external_means {
            header.push('\t');
            header.push_str(name);
            row.push_str(&format!("\t{:.4}", external.mean));
        }
        writeln!(writer, "{header}")?;
        writeln!(writer, "{row}")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotate::{EntitySpan, EntityType, MatchConfig};
    use crate::classify::{CallTypeDistribution, Inventory};
    use crate::corpus::{parse_turn_markup, DialogRecord, Split};
    use std::sync::Arc;

    fn label(name: &str) -> CallTypeLabel {
        CallTypeLabel::new(name)
    }

    fn labels(names: &[&str]) -> Vec<CallTypeLabel> {
        names.iter().map(|n| label(n)).collect()
    }

    fn entity_set(surfaces: &[&str]) -> EntitySet {
        EntitySet::from_spans(
            surfaces
                .iter()
                .map(|s| EntitySpan {
                    surface: s.to_string(),
                    normalized: String::new(),
                    entity_type: EntityType::Other("t".to_string()),
                    char_range: None,
                })
                .collect(),
            MatchConfig::default(),
        )
    }

    #[test]
    fn ct_accuracy_counts_matches() {
        let a = labels(&["x", "y", "z", "x"]);
        assert_eq!(ct_accuracy(&a, &a).unwrap(), 1.0);
        let b = labels(&["x", "y", "z", "w"]);
        assert_eq!(ct_accuracy(&a, &b).unwrap(), 0.75);
        assert!(matches!(
            ct_accuracy(&a, &labels(&["x"])),
            Err(MetricsError::LengthMismatch { .. })
        ));
        assert!(matches!(
            ct_accuracy(&[], &[]),
            Err(MetricsError::Empty)
        ));
    }

    #[test]
    fn ne_prf_set_arithmetic() {
        let gen = entity_set(&["a", "b"]);
        let reference = entity_set(&["a", "c"]);
        let score = ne_prf(&gen, &reference).unwrap();
        assert_eq!(score.precision, 0.5);
        assert_eq!(score.recall, 0.5);
        assert_eq!(score.f1, 0.5);

        let same = ne_prf(&gen, &gen).unwrap();
        assert_eq!(
            (same.precision, same.recall, same.f1),
            (1.0, 1.0, 1.0)
        );
    }

    #[test]
    fn ne_prf_empty_conventions() {
        let empty = entity_set(&[]);
        let nonempty = entity_set(&["a"]);
        let both = ne_prf(&empty, &empty).unwrap();
        assert_eq!((both.precision, both.recall, both.f1), (1.0, 1.0, 1.0));
        let gen_empty = ne_prf(&empty, &nonempty).unwrap();
        assert_eq!((gen_empty.precision, gen_empty.recall, gen_empty.f1), (0.0, 0.0, 0.0));
        let ref_empty = ne_prf(&nonempty, &empty).unwrap();
        assert_eq!((ref_empty.precision, ref_empty.recall, ref_empty.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn swap_duality_on_fixtures() {
        let gen = entity_set(&["a", "b"]);
        let reference = entity_set(&["a"]);
        let forward = ne_prf(&gen, &reference).unwrap();
        let backward = ne_prf(&reference, &gen).unwrap();
        assert_eq!(forward.precision, 0.5);
        assert_eq!(backward.recall, 0.5);
        assert!(swap_duality_check(&gen, &reference));
        assert!(swap_duality_check(&entity_set(&[]), &entity_set(&[])));
    }

    #[test]
    fn rouge_tokenizer_peels_punctuation() {
        assert_eq!(
            rouge_tokens("Bonjour, le RER!"),
            vec!["bonjour", ",", "le", "rer", "!"]
        );
        assert_eq!(rouge_tokens("l'agent 6h30"), vec!["l'agent", "6h30"]);
        assert_eq!(rouge_tokens("«oui»"), vec!["«", "oui", "»"]);
        assert!(rouge_tokens("  ").is_empty());
    }

    #[test]
    fn rouge_l_hand_example() {
        // cand "a b c", ref "a c d": LCS = 2, P = R = 2/3, F1 = 2/3
        let cand = rouge_tokens("a b c");
        let reference = rouge_tokens("a c d");
        let score = rouge_l(&cand, &reference, 1.0).unwrap();
        assert!((score - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn rouge_l_identity_and_disjoint() {
        let x = rouge_tokens("un deux trois");
        for beta in [0.5, 1.0, 1.2, 8.0] {
            assert_eq!(rouge_l(&x, &x, beta).unwrap(), 1.0);
        }
        let y = rouge_tokens("quatre cinq");
        assert_eq!(rouge_l(&x, &y, 1.0).unwrap(), 0.0);
        let empty: Vec<String> = Vec::new();
        assert_eq!(rouge_l(&x, &empty, 1.0).unwrap(), 0.0);
        assert!(matches!(
            rouge_l(&x, &y, 0.0),
            Err(MetricsError::InvalidBeta(_))
        ));
    }

    fn record(id: &str, synopsis: &str, call_type: &str) -> DialogRecord {
        let transcript = parse_turn_markup("[agent] le RER B vers 6 heures <END>").unwrap();
        let mut record = DialogRecord::new(id, Split::Test, transcript);
        record.synopsis = Some(synopsis.to_string());
        record.call_type = Some(call_type.to_string());
        record
    }

    fn artifact(
        text: &str,
        entities: EntitySet,
        inventory: &Arc<Inventory>,
        probs: Vec<f64>,
    ) -> SummaryArtifact {
        SummaryArtifact {
            text: text.to_string(),
            entities,
            distribution: CallTypeDistribution::new(Arc::clone(inventory), probs, "t").unwrap(),
            external: BTreeMap::new(),
        }
    }

    #[test]
    fn perfect_summary_scores_ones() {
        let inventory = Inventory::from_names(&["Itinerary", "Schedule"]).unwrap();
        let corpus = vec![record("d1", "le RER B vers 6 heures", "Itinerary")];
        let mut summaries = BTreeMap::new();
        summaries.insert(
            "d1".to_string(),
            artifact(
                "le RER B vers 6 heures",
                entity_set(&["RER B", "6 heures"]),
                &inventory,
                vec![1.0, 0.0],
            ),
        );
        let mut reference_entities = BTreeMap::new();
        reference_entities.insert("d1".to_string(), entity_set(&["RER B", "6 heures"]));
        let report = build_report(
            &corpus,
            &summaries,
            &reference_entities,
            &BTreeMap::new(),
            &ReportOptions::default(),
        )
        .unwrap();
        let aggregate = &report.aggregate;
        assert_eq!(aggregate.n, 1);
        assert_eq!(aggregate.rouge_l_mean, Some(1.0));
        assert_eq!(aggregate.ct_acc, Some(1.0));
        assert_eq!(aggregate.ne_p_mean, Some(1.0));
        assert_eq!(aggregate.ne_r_mean, Some(1.0));
        assert_eq!(aggregate.ne_f1_mean, Some(1.0));
    }

    #[test]
    fn two_dialog_aggregate_matches_hand_arithmetic() {
        let inventory = Inventory::from_names(&["Itinerary", "Schedule"]).unwrap();
        let corpus = vec![
            record("d1", "le RER B vers 6 heures", "Itinerary"),
            record("d2", "horaires du matin", "Schedule"),
        ];
        let mut summaries = BTreeMap::new();
        // d1: perfect
        summaries.insert(
            "d1".to_string(),
            artifact(
                "le RER B vers 6 heures",
                entity_set(&["RER B", "6 heures"]),
                &inventory,
                vec![1.0, 0.0],
            ),
        );
        // d2: wrong label, half the entities, rouge 2/3 vs the 3-token synopsis
        // (candidate "horaires du soir": LCS = 2, P = R = 2/3)
        summaries.insert(
            "d2".to_string(),
            artifact(
                "horaires du soir",
                entity_set(&["matin", "soir"]),
                &inventory,
                vec![1.0, 0.0],
            ),
        );
        let mut reference_entities = BTreeMap::new();
        reference_entities.insert("d1".to_string(), entity_set(&["RER B", "6 heures"]));
        reference_entities.insert("d2".to_string(), entity_set(&["matin", "nuit"]));
        let report = build_report(
            &corpus,
            &summaries,
            &reference_entities,
            &BTreeMap::new(),
            &ReportOptions::default(),
        )
        .unwrap();
        let aggregate = &report.aggregate;
        assert_eq!(aggregate.n, 2);
        assert!((aggregate.rouge_l_mean.unwrap() - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
        assert_eq!(aggregate.ct_acc, Some(0.5));
        assert!((aggregate.ne_p_mean.unwrap() - 0.75).abs() < 1e-12);
        assert!((aggregate.ne_r_mean.unwrap() - 0.75).abs() < 1e-12);
        assert!((aggregate.ne_f1_mean.unwrap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn missing_artifacts_error_or_skip() {
        let corpus = vec![record("d1", "syn", "Itinerary")];
        let summaries = BTreeMap::new();
        let reference_entities = BTreeMap::new();
        let strict = build_report(
            &corpus,
            &summaries,
            &reference_entities,
            &BTreeMap::new(),
            &ReportOptions::default(),
        );
        assert!(matches!(
            strict,
            Err(MetricsError::MissingArtifact { dialog_id, what }) if dialog_id == "d1" && what == "summary"
        ));
        let partial = build_report(
            &corpus,
            &summaries,
            &reference_entities,
            &BTreeMap::new(),
            &ReportOptions {
                partial: true,
                ..ReportOptions::default()
            },
        )
        .unwrap();
        assert_eq!(partial.aggregate.n, 0);
        assert_eq!(partial.skipped.len(), 1);
        assert_eq!(partial.aggregate.rouge_l_mean, None);
    }

    #[test]
    fn ct_reference_can_use_dialog_classifier() {
        let inventory = Inventory::from_names(&["Itinerary", "Schedule"]).unwrap();
        // annotated label says Schedule, dialog classifier says Itinerary
        let corpus = vec![record("d1", "le RER B", "Schedule")];
        let mut summaries = BTreeMap::new();
        summaries.insert(
            "d1".to_string(),
            artifact("le RER B", entity_set(&["RER B"]), &inventory, vec![1.0, 0.0]),
        );
        let mut reference_entities = BTreeMap::new();
        reference_entities.insert("d1".to_string(), entity_set(&["RER B"]));
        let mut dialog_distributions = BTreeMap::new();
        dialog_distributions.insert(
            "d1".to_string(),
            CallTypeDistribution::new(Arc::clone(&inventory), vec![0.9, 0.1], "d1").unwrap(),
        );
        let annotated = build_report(
            &corpus,
            &summaries,
            &reference_entities,
            &dialog_distributions,
            &ReportOptions::default(),
        )
        .unwrap();
        assert_eq!(annotated.aggregate.ct_acc, Some(0.0));
        let vs_classifier = build_report(
            &corpus,
            &summaries,
            &reference_entities,
            &dialog_distributions,
            &ReportOptions {
                ct_reference: CtReference::DialogClassifier,
                ..ReportOptions::default()
            },
        )
        .unwrap();
        assert_eq!(vs_classifier.aggregate.ct_acc, Some(1.0));
    }

    #[test]
    fn tsv_outputs_are_stable() {
        let report = MetricReport {
            beta: 1.0,
            per_dialog: BTreeMap::from([(
                "d1".to_string(),
                DialogMetrics {
                    rouge_l: 0.66666,
                    ct_correct: true,
                    ne: NeScore {
                        precision: 0.5,
                        recall: 0.25,
                        f1: 1.0 / 3.0,
                    },
                    external: BTreeMap::from([("bertscore".to_string(), 0.91)]),
                },
            )]),
            aggregate: AggregateMetrics {
                n: 1,
                rouge_l_mean: Some(0.66666),
                ct_acc: Some(1.0),
                ne_p_mean: Some(0.5),
                ne_r_mean: Some(0.25),
                ne_f1_mean: Some(1.0 / 3.0),
                external_means: BTreeMap::from([(
                    "bertscore".to_string(),
                    ExternalMean { mean: 0.91, n: 1 },
                )]),
            },
            skipped: Vec::new(),
        };
        let mut tsv = Vec::new();
        report.write_tsv(&mut tsv).unwrap();
        assert_eq!(
            String::from_utf8(tsv).unwrap(),
            "dialog_id\trouge_l\tct_correct\tne_p\tne_r\tne_f1\nd1\t0.6667\ttrue\t0.5000\t0.2500\t0.3333\n"
        );
        let mut aggregate = Vec::new();
        report.write_aggregate_tsv(&mut aggregate).unwrap();
        assert_eq!(
            String::from_utf8(aggregate).unwrap(),
            "n\trouge_l\tct_acc\tne_p\tne_r\tne_f1\tbertscore\n1\t0.6667\t1.0000\t0.5000\t0.2500\t0.3333\t0.9100\n"
        );
    }
}
