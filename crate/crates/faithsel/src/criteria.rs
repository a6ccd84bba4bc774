//! Summary selection criteria: KL divergence between call-type
//! distributions, the named-entity hallucination ratio (NEHR), and the
//! selection strategies built from them.
//!
//! Selection is deterministic. Ties descend a fixed ladder — NEHR, then KL,
//! then pool position (manifest order) — and `tie_broken` records whether the
//! winner was not unique under the criterion's primary key.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::{entity_in_source, EntitySet, MatchConfig};
use crate::classify::CallTypeDistribution;
use crate::corpus::Transcript;

/// Default smoothing constant for KL divergence.
pub const DEFAULT_EPSILON: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum CriteriaError {
    #[error("call-type inventories differ")]
    InventoryMismatch,
    #[error("smoothing epsilon must be positive, got {0}")]
    InvalidEpsilon(f64),
    #[error("candidate pool for dialog {0:?} is empty")]
    EmptyPool(String),
    #[error("dialog {dialog_id:?}: duplicate candidate id {candidate_id:?}")]
    DuplicateCandidate {
        dialog_id: String,
        candidate_id: String,
    },
    #[error("dialog {dialog_id:?}: no candidate with decode config {config_id:?}")]
    MissingBaselineConfig {
        dialog_id: String,
        config_id: String,
    },
    #[error("line {line}: schema violation: {message}")]
    SchemaViolation { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// One candidate summary with its per-candidate annotations.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub candidate_id: String,
    pub text: String,
    pub decode_config_id: String,
    pub entities: EntitySet,
    pub distribution: CallTypeDistribution,
    pub external_scores: BTreeMap<String, f64>,
}

/// All candidates generated for one dialog, with the dialog-side call-type
/// distribution and source transcript the criteria are computed against.
#[derive(Debug, Clone)]
pub struct CandidatePool {
    dialog_id: String,
    candidates: Vec<Candidate>,
    dialog_distribution: CallTypeDistribution,
    source_transcript: Transcript,
}

impl CandidatePool {
    pub fn new(
        dialog_id: impl Into<String>,
        candidates: Vec<Candidate>,
        dialog_distribution: CallTypeDistribution,
        source_transcript: Transcript,
    ) -> Result<Self, CriteriaError> {
        let dialog_id = dialog_id.into();
        if candidates.is_empty() {
            return Err(CriteriaError::EmptyPool(dialog_id));
        }
        let mut seen = std::collections::HashSet::new();
        for candidate in &candidates {
            if !seen.insert(candidate.candidate_id.clone()) {
                return Err(CriteriaError::DuplicateCandidate {
                    dialog_id,
                    candidate_id: candidate.candidate_id.clone(),
                });
            }
        }
        Ok(CandidatePool {
            dialog_id,
            candidates,
            dialog_distribution,
            source_transcript,
        })
    }

    pub fn dialog_id(&self) -> &str {
        &self.dialog_id
    }

    pub fn candidates(&self) -> &[Candidate] {
        &self.candidates
    }

    pub fn dialog_distribution(&self) -> &CallTypeDistribution {
        &self.dialog_distribution
    }

    pub fn source_transcript(&self) -> &Transcript {
        &self.source_transcript
    }
}

/// Selection strategy names, as spelled on the command line and in output
/// files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    BaselineFirst,
    MinNehr,
    MinKl,
    Combined,
}

impl Criterion {
    pub fn as_str(&self) -> &'static str {
        match self {
            Criterion::BaselineFirst => "baseline_first",
            Criterion::MinNehr => "min_nehr",
            Criterion::MinKl => "min_kl",
            Criterion::Combined => "combined",
        }
    }
}

/// NEHR as an exact ratio of small integers: `absent` hallucinated entities
/// out of `total`. Comparisons (including equality) cross-multiply the
/// ratios, so pools are filtered on exact value equality with no float
/// tolerance: 1/2 equals 2/4. An entity-free summary has NEHR 0 by
/// convention — it hallucinates nothing — and `is_degenerate` flags it so
/// downstream consumers can detect empty-entity winners.
#[derive(Debug, Clone, Copy)]
pub struct NehrValue {
    pub absent: usize,
    pub total: usize,
}

impl NehrValue {
    pub fn value(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.absent as f64 / self.total as f64
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.total == 0
    }

    // (numerator, denominator) with the empty case canonicalized to 0/1
    fn ratio(&self) -> (u128, u128) {
        if self.total == 0 {
            (0, 1)
        } else {
            (self.absent as u128, self.total as u128)
        }
    }
}

impl PartialEq for NehrValue {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == std::cmp::Ordering::Equal
    }
}

impl Eq for NehrValue {}

impl PartialOrd for NehrValue {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for NehrValue {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        let (a_num, a_den) = self.ratio();
        let (b_num, b_den) = other.ratio();
        (a_num * b_den).cmp(&(b_num * a_den))
    }
}

/// KL divergence between two distributions over the same inventory, in nats.
///
/// Both sides are smoothed by adding `epsilon` to every probability and
/// renormalizing, so a zero in either distribution yields a large finite
/// divergence (on the order of `ln(1/epsilon)`) rather than infinity. Always
/// non-negative.
pub fn kl_divergence(
    g: &CallTypeDistribution,
    r: &CallTypeDistribution,
    epsilon: f64,
) -> Result<f64, CriteriaError> {
    if !g.same_inventory(r) {
        return Err(CriteriaError::InventoryMismatch);
    }
    if epsilon <= 0.0 || !epsilon.is_finite() {
        return Err(CriteriaError::InvalidEpsilon(epsilon));
    }
    let k = g.probs().len() as f64;
    let g_norm = 1.0 + k * epsilon;
    let r_norm = 1.0 + k * epsilon;
    let mut sum = 0.0;
    for (gp, rp) in g.probs().iter().zip(r.probs()) {
        let gs = (gp + epsilon) / g_norm;
        let rs = (rp + epsilon) / r_norm;
        if gs > 0.0 {
            sum += gs * (gs / rs).ln();
        }
    }
    Ok(sum.max(0.0))
}

/// Proportion of candidate entities not found in the source transcript.
pub fn nehr(entities: &EntitySet, source: &Transcript) -> NehrValue {
    let config: MatchConfig = *entities.config();
    let total = entities.len();
    let absent = entities
        .spans()
        .iter()
        .filter(|span| !entity_in_source(span, source, &config))
        .count();
    NehrValue { absent, total }
}

/// Variant presence test: an entity counts as present when its key appears in
/// an entity set extracted from the source, instead of the default
/// substring-containment rule. Provided for comparison studies.
pub fn nehr_membership(
    entities: &EntitySet,
    source_entities: &EntitySet,
) -> Result<NehrValue, crate::annotate::AnnotateError> {
    let total = entities.len();
    let present = crate::annotate::intersection_size(entities, source_entities)?;
    Ok(NehrValue {
        absent: total - present,
        total,
    })
}

/// Both criterion values for one candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateScores {
    pub nehr: NehrValue,
    pub kl: f64,
}

/// Outcome of one selection run over one pool.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub dialog_id: String,
    pub criterion: Criterion,
    pub chosen: String,
    pub per_candidate: BTreeMap<String, CandidateScores>,
    pub tie_broken: bool,
}

impl SelectionResult {
    /// Scores of the chosen candidate.
    pub fn chosen_scores(&self) -> &CandidateScores {
        &self.per_candidate[&self.chosen]
    }
}

fn score_pool(pool: &CandidatePool, epsilon: f64) -> Result<Vec<CandidateScores>, CriteriaError> {
    pool.candidates
        .iter()
        .map(|candidate| {
            Ok(CandidateScores {
                nehr: nehr(&candidate.entities, &pool.source_transcript),
                kl: kl_divergence(&candidate.distribution, &pool.dialog_distribution, epsilon)?,
            })
        })
        .collect()
}

fn result_from(
    pool: &CandidatePool,
    criterion: Criterion,
    scores: Vec<CandidateScores>,
    chosen_index: usize,
    tie_broken: bool,
) -> SelectionResult {
    let per_candidate = pool
        .candidates
        .iter()
        .zip(&scores)
        .map(|(candidate, score)| (candidate.candidate_id.clone(), *score))
        .collect();
    SelectionResult {
        dialog_id: pool.dialog_id.clone(),
        criterion,
        chosen: pool.candidates[chosen_index].candidate_id.clone(),
        per_candidate,
        tie_broken,
    }
}

/// Select the candidate with minimal NEHR; ties fall back to lowest KL, then
/// pool order.
pub fn select_min_nehr(
    pool: &CandidatePool,
    epsilon: f64,
) -> Result<SelectionResult, CriteriaError> {
    let scores = score_pool(pool, epsilon)?;
    let min_nehr = scores.iter().map(|s| s.nehr).min().expect("pool nonempty");
    let tied = scores.iter().filter(|s| s.nehr == min_nehr).count();
    let chosen = (0..scores.len())
        .filter(|i| scores[*i].nehr == min_nehr)
        .min_by(|a, b| scores[*a].kl.total_cmp(&scores[*b].kl))
        .expect("pool nonempty");
    Ok(result_from(
        pool,
        Criterion::MinNehr,
        scores,
        chosen,
        tied > 1,
    ))
}

/// Select the candidate whose distribution diverges least from the dialog
/// distribution; ties fall back to pool order.
pub fn select_min_kl(pool: &CandidatePool, epsilon: f64) -> Result<SelectionResult, CriteriaError> {
    let scores = score_pool(pool, epsilon)?;
    let chosen = (0..scores.len())
        .min_by(|a, b| scores[*a].kl.total_cmp(&scores[*b].kl))
        .expect("pool nonempty");
    let tied = scores
        .iter()
        .filter(|s| s.kl == scores[chosen].kl)
        .count();
    Ok(result_from(pool, Criterion::MinKl, scores, chosen, tied > 1))
}

/// Combined criterion: restrict to the exact minimum-NEHR subset, then take
/// the KL argmin within it; ties fall back to pool order.
pub fn select_combined(
    pool: &CandidatePool,
    epsilon: f64,
) -> Result<SelectionResult, CriteriaError> {
    let scores = score_pool(pool, epsilon)?;
    let min_nehr = scores.iter().map(|s| s.nehr).min().expect("pool nonempty");
    let chosen = (0..scores.len())
        .filter(|i| scores[*i].nehr == min_nehr)
        .min_by(|a, b| scores[*a].kl.total_cmp(&scores[*b].kl))
        .expect("pool nonempty");
    let tied_on_kl = (0..scores.len())
        .filter(|i| scores[*i].nehr == min_nehr && scores[*i].kl == scores[chosen].kl)
        .count();
    Ok(result_from(
        pool,
        Criterion::Combined,
        scores,
        chosen,
        tied_on_kl > 1,
    ))
}

/// No-selection baseline: the first pool candidate, optionally restricted to
/// a designated decode config (the first candidate of that config in pool
/// order).
pub fn select_baseline_first(
    pool: &CandidatePool,
    epsilon: f64,
    baseline_config: Option<&str>,
) -> Result<SelectionResult, CriteriaError> {
    let scores = score_pool(pool, epsilon)?;
    let chosen = match baseline_config {
        None => 0,
        Some(config_id) => pool
            .candidates
            .iter()
            .position(|c| c.decode_config_id == config_id)
            .ok_or_else(|| CriteriaError::MissingBaselineConfig {
                dialog_id: pool.dialog_id.clone(),
                config_id: config_id.to_string(),
            })?,
    };
    Ok(result_from(
        pool,
        Criterion::BaselineFirst,
        scores,
        chosen,
        false,
    ))
}

/// Run the given criterion over one pool.
pub fn select(
    pool: &CandidatePool,
    criterion: Criterion,
    epsilon: f64,
    baseline_config: Option<&str>,
) -> Result<SelectionResult, CriteriaError> {
    match criterion {
        Criterion::BaselineFirst => select_baseline_first(pool, epsilon, baseline_config),
        Criterion::MinNehr => select_min_nehr(pool, epsilon),
        Criterion::MinKl => select_min_kl(pool, epsilon),
        Criterion::Combined => select_combined(pool, epsilon),
    }
}

// ---------------------------------------------------------------------------
// Selection result JSON-lines
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct SelectionLine {
    dialog_id: String,
    criterion: Criterion,
    chosen: String,
    scores: BTreeMap<String, ScoreLine>,
    tie_broken: bool,
}

#[derive(Serialize, Deserialize)]
struct ScoreLine {
    nehr: f64,
    kl: f64,
}

/// Write selection results as JSON-lines, one dialog per line, in the order
/// given.
pub fn write_selections<W: Write>(
    results: &[SelectionResult],
    mut writer: W,
) -> Result<(), CriteriaError> {
    for result in results {
        let line = SelectionLine {
            dialog_id: result.dialog_id.clone(),
            criterion: result.criterion,
            chosen: result.chosen.clone(),
            scores: result
                .per_candidate
                .iter()
                .map(|(id, s)| {
                    (
                        id.clone(),
                        ScoreLine {
                            nehr: s.nehr.value(),
                            kl: s.kl,
                        },
                    )
                })
                .collect(),
            tie_broken: result.tie_broken,
        };
        let json = serde_json::to_string(&line).map_err(|e| CriteriaError::SchemaViolation {
            line: 0,
            message: e.to_string(),
        })?;
        writeln!(writer, "{json}")?;
    }
    Ok(())
}

/// The chosen candidate per dialog, as read back from a selection file.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionRecord {
    pub dialog_id: String,
    pub criterion: Criterion,
    pub chosen: String,
    pub tie_broken: bool,
}

/// Load selection results (the fields needed downstream) from JSON-lines.
pub fn load_selections<R: BufRead>(reader: R) -> Result<Vec<SelectionRecord>, CriteriaError> {
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: SelectionLine =
            serde_json::from_str(&line).map_err(|e| CriteriaError::SchemaViolation {
                line: idx + 1,
                message: e.to_string(),
            })?;
        records.push(SelectionRecord {
            dialog_id: parsed.dialog_id,
            criterion: parsed.criterion,
            chosen: parsed.chosen,
            tie_broken: parsed.tie_broken,
        });
    }
    Ok(records)
}
