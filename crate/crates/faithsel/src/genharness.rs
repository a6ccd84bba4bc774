//! Generation harness: decoding-parameter grids, generation manifests,
//! conditioned inputs, few-shot prompt assembly, and ingestion of external
//! generator output into candidate pools.
//!
//! No decoder runs here. Manifests tell an external generator exactly what to
//! produce; its output comes back through candidate JSON-lines and is checked
//! against the manifest's bookkeeping.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::EntitySet;
use crate::classify::{argmax_calltype, CallTypeDistribution, CallTypeLabel, NbModel};
use crate::corpus::{parse_turn_markup, serialize_turn_markup, CorpusError, DialogRecord};
use crate::criteria::{Candidate, CandidatePool, CriteriaError};

/// Values swept in micro-units (value × 10⁶), so grid enumeration is exact
/// integer arithmetic and the emitted floats are bit-stable across runs.
const MICRO: f64 = 1e6;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid sweep range: {0}")]
    InvalidRange(String),
    #[error("invalid decode config: {0}")]
    InvalidConfig(String),
    #[error("separator {separator:?} collides with label {label:?}")]
    SeparatorCollision { separator: String, label: String },
    #[error("no call-type available for dialog {0:?}")]
    MissingDistribution(String),
    #[error("line {line}: unknown dialog {dialog_id:?}")]
    UnknownDialog { line: usize, dialog_id: String },
    #[error("line {line}: unknown config {config_id:?} for dialog {dialog_id:?}")]
    UnknownConfig {
        line: usize,
        dialog_id: String,
        config_id: String,
    },
    #[error("dialog {dialog_id:?}: expected {expected} candidates, got {actual}")]
    CountMismatch {
        dialog_id: String,
        expected: usize,
        actual: usize,
    },
    #[error("dialog {dialog_id:?}: missing {what}")]
    MissingArtifact { dialog_id: String, what: String },
    #[error("line {line}: schema violation: {message}")]
    SchemaViolation { line: usize, message: String },
    #[error(transparent)]
    Markup(#[from] CorpusError),
    #[error(transparent)]
    Pool(#[from] CriteriaError),
    #[error("i/o error: {0}")]
    Io(std::io::Error),
}

impl From<std::io::Error> for HarnessError {
    fn from(err: std::io::Error) -> Self {
        HarnessError::Io(err)
    }
}

// ---------------------------------------------------------------------------
// Decode configs and grids
// ---------------------------------------------------------------------------

/// One decoding strategy an external generator should run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    Greedy,
    Beam {
        size: u32,
        n_best: u32,
    },
    Sample {
        #[serde(skip_serializing_if = "Option::is_none")]
        top_p: Option<f64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        top_k: Option<u32>,
        temperature: f64,
        n_samples: u32,
        #[serde(skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
}

/// A strategy with its content-derived id. The id encodes every knob, so
/// candidate pools are self-describing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub config_id: String,
    pub strategy: Strategy,
}

impl DecodeConfig {
    pub fn new(strategy: Strategy) -> Result<DecodeConfig, HarnessError> {
        validate_strategy(&strategy)?;
        Ok(DecodeConfig {
            config_id: config_id_for(&strategy),
            strategy,
        })
    }

    /// Candidates this config asks the generator to emit.
    pub fn expected_candidates(&self) -> usize {
        match &self.strategy {
            Strategy::Greedy => 1,
            Strategy::Beam { n_best, .. } => *n_best as usize,
            Strategy::Sample { n_samples, .. } => *n_samples as usize,
        }
    }
}

fn validate_strategy(strategy: &Strategy) -> Result<(), HarnessError> {
    match strategy {
        Strategy::Greedy => Ok(()),
        Strategy::Beam { size, n_best } => {
            if *n_best == 0 || *size == 0 || n_best > size {
                Err(HarnessError::InvalidConfig(format!(
                    "beam n_best {n_best} must be in 1..=size {size}"
                )))
            } else {
                Ok(())
            }
        }
        Strategy::Sample {
            top_p,
            top_k,
            temperature,
            n_samples,
            ..
        } => {
            if let Some(p) = top_p {
                if !(*p > 0.0 && *p <= 1.0) {
                    return Err(HarnessError::InvalidConfig(format!("top_p {p} outside (0, 1]")));
                }
            }
            if let Some(k) = top_k {
                if *k == 0 {
                    return Err(HarnessError::InvalidConfig("top_k must be >= 1".to_string()));
                }
            }
            if !(*temperature > 0.0 && temperature.is_finite()) {
                return Err(HarnessError::InvalidConfig(format!(
                    "temperature {temperature} must be positive"
                )));
            }
            if *n_samples == 0 {
                return Err(HarnessError::InvalidConfig("n_samples must be >= 1".to_string()));
            }
            Ok(())
        }
    }
}

fn config_id_for(strategy: &Strategy) -> String {
    match strategy {
        Strategy::Greedy => "greedy".to_string(),
        Strategy::Beam { size, n_best } => format!("beam{size}-best{n_best}"),
        Strategy::Sample {
            top_p,
            top_k,
            temperature,
            n_samples,
            seed,
        } => {
            let mut id = "sample".to_string();
            if let Some(p) = top_p {
                id.push_str(&format!("-p{p:.2}"));
            }
            if let Some(k) = top_k {
                id.push_str(&format!("-k{k}"));
            }
            id.push_str(&format!("-t{temperature:.2}"));
            if *n_samples > 1 {
                id.push_str(&format!("-n{n_samples}"));
            }
            if let Some(s) = seed {
                id.push_str(&format!("-s{s}"));
            }
            id
        }
    }
}

/// A swept parameter range. `inclusive_hi` distinguishes `[lo, hi]` from
/// `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRange {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
    #[serde(default)]
    pub inclusive_hi: bool,
}

impl SweepRange {
    /// Enumerate the swept values exactly: endpoints and step are snapped to
    /// micro-units and stepped by integer index, so no float accumulation
    /// drift and identical bits every run.
    pub fn values(&self) -> Result<Vec<f64>, HarnessError> {
        let to_micro = |x: f64| -> Result<i64, HarnessError> {
            if !x.is_finite() {
                return Err(HarnessError::InvalidRange(format!("non-finite bound {x}")));
            }
            Ok((x * MICRO).round() as i64)
        };
        let lo = to_micro(self.lo)?;
        let hi = to_micro(self.hi)?;
        let step = to_micro(self.step)?;
        if step <= 0 {
            return Err(HarnessError::InvalidRange(format!(
                "step {} must be positive",
                self.step
            )));
        }
        let mut values = Vec::new();
        let mut index = 0i64;
        loop {
            let v = lo + index * step;
            let in_range = if self.inclusive_hi { v <= hi } else { v < hi };
            if !in_range {
                break;
            }
            values.push(v as f64 / MICRO);
            index += 1;
        }
        if values.is_empty() {
            return Err(HarnessError::InvalidRange(format!(
                "range [{}, {}{} step {} is empty",
                self.lo,
                self.hi,
                if self.inclusive_hi { "]" } else { ")" },
                self.step
            )));
        }
        Ok(values)
    }
}

/// How sweep dimensions combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridMode {
    /// One config per swept value, other knobs at defaults.
    #[default]
    IndependentSweeps,
    /// Cartesian product of all swept dimensions.
    CrossProduct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeamSpec {
    pub size: u32,
    pub n_best: u32,
}

/// Declarative description of a decoding grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    #[serde(default)]
    pub mode: GridMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub top_p: Option<SweepRange>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub top_k: Option<SweepRange>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub temperature: Option<SweepRange>,
    #[serde(default)]
    pub include_greedy: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beam: Option<BeamSpec>,
    #[serde(default = "default_n_samples")]
    pub n_samples_per_config: u32,
}

fn default_n_samples() -> u32 {
    1
}

impl GridSpec {
    /// The published sampling setup: top-p in [0.70, 0.95) step 0.05, top-k
    /// in [30, 100) step 15, temperature in [0.7, 1.0] step 0.1, plus greedy
    /// and a 6-wide beam keeping the 6 best.
    pub fn paper_defaults() -> GridSpec {
        GridSpec {
            mode: GridMode::IndependentSweeps,
            top_p: Some(SweepRange {
                lo: 0.70,
                hi: 0.95,
                step: 0.05,
                inclusive_hi: false,
            }),
            top_k: Some(SweepRange {
                lo: 30.0,
                hi: 100.0,
                step: 15.0,
                inclusive_hi: false,
            }),
            temperature: Some(SweepRange {
                lo: 0.7,
                hi: 1.0,
                step: 0.1,
                inclusive_hi: true,
            }),
            include_greedy: true,
            beam: Some(BeamSpec { size: 6, n_best: 6 }),
            n_samples_per_config: 1,
        }
    }
}

const DEFAULT_TEMPERATURE: f64 = 1.0;

fn to_top_k(value: f64) -> Result<u32, HarnessError> {
    let k = value.round();
    if (value - k).abs() > 1e-9 || k < 1.0 || k > u32::MAX as f64 {
        return Err(HarnessError::InvalidRange(format!(
            "top_k value {value} is not a positive integer"
        )));
    }
    Ok(k as u32)
}

/// Materialize a grid spec into concrete decode configs: sample configs per
/// the grid mode, then greedy, then beam. Deterministic for a given spec.
pub fn expand_grid(spec: &GridSpec) -> Result<Vec<DecodeConfig>, HarnessError> {
    if spec.n_samples_per_config == 0 {
        return Err(HarnessError::InvalidConfig(
            "n_samples_per_config must be >= 1".to_string(),
        ));
    }
    let n_samples = spec.n_samples_per_config;
    let mut configs = Vec::new();
    let sample = |top_p: Option<f64>, top_k: Option<u32>, temperature: f64| {
        DecodeConfig::new(Strategy::Sample {
            top_p,
            top_k,
            temperature,
            n_samples,
            seed: None,
        })
    };
    match spec.mode {
        GridMode::IndependentSweeps => {
            if let Some(range) = &spec.top_p {
                for p in range.values()? {
                    configs.push(sample(Some(p), None, DEFAULT_TEMPERATURE)?);
                }
            }
            if let Some(range) = &spec.top_k {
                for k in range.values()? {
                    configs.push(sample(None, Some(to_top_k(k)?), DEFAULT_TEMPERATURE)?);
                }
            }
            if let Some(range) = &spec.temperature {
                for t in range.values()? {
                    configs.push(sample(None, None, t)?);
                }
            }
        }
        GridMode::CrossProduct => {
            let top_ps: Vec<Option<f64>> = match &spec.top_p {
                Some(range) => range.values()?.into_iter().map(Some).collect(),
                None => vec![None],
            };
            let top_ks: Vec<Option<u32>> = match &spec.top_k {
                Some(range) => range
                    .values()?
                    .into_iter()
                    .map(|k| to_top_k(k).map(Some))
                    .collect::<Result<_, _>>()?,
                None => vec![None],
            };
            let temperatures: Vec<f64> = match &spec.temperature {
                Some(range) => range.values()?,
                None => vec![DEFAULT_TEMPERATURE],
            };
            for p in &top_ps {
                for k in &top_ks {
                    for t in &temperatures {
                        configs.push(sample(*p, *k, *t)?);
                    }
                }
            }
        }
    }
    if spec.include_greedy {
        configs.push(DecodeConfig::new(Strategy::Greedy)?);
    }
    if let Some(beam) = &spec.beam {
        configs.push(DecodeConfig::new(Strategy::Beam {
            size: beam.size,
            n_best: beam.n_best,
        })?);
    }
    if configs.is_empty() {
        return Err(HarnessError::InvalidRange("grid produced no configs".to_string()));
    }
    Ok(configs)
}

/// Total candidates a generator should emit for these configs.
pub fn expected_candidates(configs: &[DecodeConfig]) -> usize {
    configs.iter().map(DecodeConfig::expected_candidates).sum()
}

// ---------------------------------------------------------------------------
// Conditioned inputs and prompts
// ---------------------------------------------------------------------------

/// Prefix a serialized transcript with a call type:
/// `label + separator + markup`, bit-exact concatenation.
pub fn build_conditioned_input(
    transcript: &crate::corpus::Transcript,
    call_type: &CallTypeLabel,
    separator: &str,
) -> Result<String, HarnessError> {
    if separator.is_empty() || call_type.name().contains(separator) {
        return Err(HarnessError::SeparatorCollision {
            separator: separator.to_string(),
            label: call_type.name().to_string(),
        });
    }
    let markup = serialize_turn_markup(transcript)?;
    Ok(format!("{}{}{}", call_type.name(), separator, markup))
}

/// Undo [`build_conditioned_input`]: split at the first separator occurrence
/// into `(label, markup)`.
pub fn strip_conditioned_prefix<'a>(input: &'a str, separator: &str) -> Option<(&'a str, &'a str)> {
    input.split_once(separator)
}

/// Default prompt template, with `{EXEMPLAR_DIALOG}`, `{EXEMPLAR_SUMMARY}`
/// and `{TARGET_DIALOG}` placeholders.
pub const DEFAULT_PROMPT_TEMPLATE: &str = include_str!("../resources/prompt_template.txt");

/// Inputs for one-shot prompt assembly. Dialog fields are turn markup and are
/// validated before substitution.
#[derive(Debug, Clone)]
pub struct PromptRequest {
    pub exemplar_dialog: String,
    pub exemplar_summary: String,
    pub target_dialog: String,
    /// Allow a target with zero turns instead of erroring.
    pub allow_empty_target: bool,
}

/// Assemble the instruction, exemplar dialog, exemplar summary and target
/// dialog, in that order, into a prompt. Byte-deterministic for identical
/// inputs.
pub fn build_augmentation_prompt(
    request: &PromptRequest,
    template: &str,
) -> Result<String, HarnessError> {
    parse_turn_markup(&request.exemplar_dialog)?;
    let target = parse_turn_markup(&request.target_dialog)?;
    if target.turns.is_empty() && !request.allow_empty_target {
        return Err(HarnessError::Markup(CorpusError::MalformedMarkup {
            offset: 0,
            reason: "target dialog has no turns".to_string(),
        }));
    }
    Ok(template
        .replace("{EXEMPLAR_DIALOG}", request.exemplar_dialog.trim())
        .replace("{EXEMPLAR_SUMMARY}", request.exemplar_summary.trim())
        .replace("{TARGET_DIALOG}", request.target_dialog.trim()))
}

// ---------------------------------------------------------------------------
// Manifests
// ---------------------------------------------------------------------------

/// Everything an external generator needs for one dialog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationManifest {
    pub dialog_id: String,
    pub input: String,
    pub configs: Vec<DecodeConfig>,
    pub expected_candidates: usize,
}

/// Where conditioning call types come from.
pub enum CallTypeSource<'a> {
    /// Annotated reference labels on the corpus records.
    GoldLabels,
    /// Argmax of per-dialog distributions (external classifier output).
    Distributions(&'a BTreeMap<String, CallTypeDistribution>),
    /// Built-in classifier run on the serialized transcript.
    Model(&'a NbModel),
}

impl CallTypeSource<'_> {
    fn call_type(&self, record: &DialogRecord) -> Result<Option<CallTypeLabel>, HarnessError> {
        match self {
            CallTypeSource::GoldLabels => {
                Ok(record.call_type.clone().map(CallTypeLabel::new))
            }
            CallTypeSource::Distributions(map) => {
                Ok(map.get(&record.id).map(|d| argmax_calltype(d).clone()))
            }
            CallTypeSource::Model(model) => {
                let markup = serialize_turn_markup(&record.transcript)?;
                let distribution = crate::classify::predict_distribution(model, &markup);
                Ok(Some(argmax_calltype(&distribution).clone()))
            }
        }
    }
}

/// Optional input conditioning for manifest emission.
pub enum Conditioning<'a> {
    Off,
    CallType {
        source: CallTypeSource<'a>,
        separator: &'a str,
    },
}

/// One manifest per corpus record, in corpus order. With conditioning on, the
/// input is the predicted (or annotated) call type prepended to the serialized
/// transcript; a dialog the source cannot label is an error.
pub fn emit_manifests(
    corpus: &[DialogRecord],
    configs: &[DecodeConfig],
    conditioning: &Conditioning<'_>,
) -> Result<Vec<GenerationManifest>, HarnessError> {
    let expected = expected_candidates(configs);
    let mut manifests = Vec::with_capacity(corpus.len());
    for record in corpus {
        let input = match conditioning {
            Conditioning::Off => serialize_turn_markup(&record.transcript)?,
            Conditioning::CallType { source, separator } => {
                let label = source
                    .call_type(record)?
                    .ok_or_else(|| HarnessError::MissingDistribution(record.id.clone()))?;
                build_conditioned_input(&record.transcript, &label, separator)?
            }
        };
        manifests.push(GenerationManifest {
            dialog_id: record.id.clone(),
            input,
            configs: configs.to_vec(),
            expected_candidates: expected,
        });
    }
    Ok(manifests)
}

/// Write manifests as JSON-lines.
pub fn write_manifests<W: Write>(
    manifests: &[GenerationManifest],
    mut writer: W,
) -> Result<(), HarnessError> {
    for manifest in manifests {
        let line = serde_json::to_string(manifest).map_err(|e| HarnessError::SchemaViolation {
            line: 0,
            message: e.to_string(),
        })?;
        writeln!(writer, "{line}")?;
    }
    Ok(())
}

/// Load manifests from JSON-lines, revalidating strategy invariants and the
/// expected-candidate sum.
pub fn load_manifests<R: BufRead>(reader: R) -> Result<Vec<GenerationManifest>, HarnessError> {
    let mut manifests = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let manifest: GenerationManifest =
            serde_json::from_str(&line).map_err(|e| HarnessError::SchemaViolation {
                line: idx + 1,
                message: e.to_string(),
            })?;
        if !seen.insert(manifest.dialog_id.clone()) {
            return Err(HarnessError::SchemaViolation {
                line: idx + 1,
                message: format!("duplicate dialog_id {:?}", manifest.dialog_id),
            });
        }
        for config in &manifest.configs {
            validate_strategy(&config.strategy).map_err(|e| HarnessError::SchemaViolation {
                line: idx + 1,
                message: e.to_string(),
            })?;
        }
        let expected = expected_candidates(&manifest.configs);
        if manifest.expected_candidates != expected {
            return Err(HarnessError::SchemaViolation {
                line: idx + 1,
                message: format!(
                    "expected_candidates {} does not match configs (sum {})",
                    manifest.expected_candidates, expected
                ),
            });
        }
        manifests.push(manifest);
    }
    Ok(manifests)
}

// ---------------------------------------------------------------------------
// Candidate ingestion
// ---------------------------------------------------------------------------

/// One generator output line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateLine {
    pub dialog_id: String,
    pub config_id: String,
    pub candidate_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub external_scores: BTreeMap<String, f64>,
}

/// Parse candidate JSON-lines without resolving them against manifests.
pub fn read_candidate_lines<R: BufRead>(reader: R) -> Result<Vec<CandidateLine>, HarnessError> {
    let mut lines = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: CandidateLine =
            serde_json::from_str(&line).map_err(|e| HarnessError::SchemaViolation {
                line: idx + 1,
                message: e.to_string(),
            })?;
        lines.push(parsed);
    }
    Ok(lines)
}

/// Write candidate lines (the format [`read_candidate_lines`] reads).
pub fn write_candidate_lines<W: Write>(
    lines: &[CandidateLine],
    mut writer: W,
) -> Result<(), HarnessError> {
    for line in lines {
        let json = serde_json::to_string(line).map_err(|e| HarnessError::SchemaViolation {
            line: 0,
            message: e.to_string(),
        })?;
        writeln!(writer, "{json}")?;
    }
    Ok(())
}

/// Per-candidate and per-dialog artifacts needed to assemble pools.
pub struct PoolInputs<'a> {
    /// Corpus records by dialog id, for the source transcript.
    pub corpus: &'a BTreeMap<String, &'a DialogRecord>,
    /// Entity sets by candidate id.
    pub candidate_entities: &'a BTreeMap<String, EntitySet>,
    /// Call-type distributions by candidate id (summary classifier).
    pub candidate_distributions: &'a BTreeMap<String, CallTypeDistribution>,
    /// Call-type distributions by dialog id (transcript classifier).
    pub dialog_distributions: &'a BTreeMap<String, CallTypeDistribution>,
}

/// How ingestion treats inconsistencies.
#[derive(Debug, Clone, Copy, Default)]
pub struct IngestMode {
    /// Candidate-count mismatches become errors instead of warnings.
    pub strict: bool,
    /// Dialogs with missing artifacts are skipped and counted instead of
    /// failing the run.
    pub partial: bool,
}

/// Ingestion outcome notes: count-mismatch warnings and dialogs skipped under
/// partial mode.
#[derive(Debug, Default, Clone)]
pub struct IngestReport {
    pub warnings: Vec<String>,
    pub skipped: Vec<(String, String)>,
}

/// Assemble candidate pools from generator output.
///
/// Pools come out in manifest order; within a pool, candidates are ordered by
/// their config's position in the manifest, then candidate id, so shuffled
/// input lines produce identical pools. Candidate counts are checked against
/// each manifest's `expected_candidates`.
pub fn ingest_candidates<R: BufRead>(
    manifests: &[GenerationManifest],
    reader: R,
    inputs: &PoolInputs<'_>,
    mode: IngestMode,
) -> Result<(Vec<CandidatePool>, IngestReport), HarnessError> {
    let manifest_index: BTreeMap<&str, &GenerationManifest> = manifests
        .iter()
        .map(|m| (m.dialog_id.as_str(), m))
        .collect();
    let mut by_dialog: BTreeMap<String, Vec<(usize, CandidateLine)>> = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let parsed: CandidateLine =
            serde_json::from_str(&line).map_err(|e| HarnessError::SchemaViolation {
                line: line_no,
                message: e.to_string(),
            })?;
        let manifest =
            manifest_index
                .get(parsed.dialog_id.as_str())
                .ok_or_else(|| HarnessError::UnknownDialog {
                    line: line_no,
                    dialog_id: parsed.dialog_id.clone(),
                })?;
        let config_position = manifest
            .configs
            .iter()
            .position(|c| c.config_id == parsed.config_id)
            .ok_or_else(|| HarnessError::UnknownConfig {
                line: line_no,
                dialog_id: parsed.dialog_id.clone(),
                config_id: parsed.config_id.clone(),
            })?;
        by_dialog
            .entry(parsed.dialog_id.clone())
            .or_default()
            .push((config_position, parsed));
    }

    let mut report = IngestReport::default();
    let mut pools = Vec::new();
    'dialogs: for manifest in manifests {
        let mut entries = by_dialog.remove(&manifest.dialog_id).unwrap_or_default();
        entries.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.candidate_id.cmp(&b.1.candidate_id)));

        if entries.len() != manifest.expected_candidates {
            if mode.strict {
                return Err(HarnessError::CountMismatch {
                    dialog_id: manifest.dialog_id.clone(),
                    expected: manifest.expected_candidates,
                    actual: entries.len(),
                });
            }
            report.warnings.push(format!(
                "dialog {:?}: expected {} candidates, got {}",
                manifest.dialog_id,
                manifest.expected_candidates,
                entries.len()
            ));
        }

        let mut require = |what: String| -> Result<(), HarnessError> {
            if mode.partial {
                report.skipped.push((manifest.dialog_id.clone(), what));
                Ok(())
            } else {
                Err(HarnessError::MissingArtifact {
                    dialog_id: manifest.dialog_id.clone(),
                    what,
                })
            }
        };

        if entries.is_empty() {
            require("candidates".to_string())?;
            continue;
        }
        let Some(record) = inputs.corpus.get(manifest.dialog_id.as_str()) else {
            require("corpus record".to_string())?;
            continue;
        };
        let Some(dialog_distribution) = inputs.dialog_distributions.get(&manifest.dialog_id)
        else {
            require("dialog distribution".to_string())?;
            continue;
        };

        let mut candidates = Vec::with_capacity(entries.len());
        for (_, line) in entries {
            let Some(entities) = inputs.candidate_entities.get(&line.candidate_id) else {
                require(format!("entity annotation for candidate {:?}", line.candidate_id))?;
                continue 'dialogs;
            };
            let Some(distribution) = inputs.candidate_distributions.get(&line.candidate_id)
            else {
                require(format!("distribution for candidate {:?}", line.candidate_id))?;
                continue 'dialogs;
            };
            candidates.push(Candidate {
                candidate_id: line.candidate_id,
                text: line.text,
                decode_config_id: line.config_id,
                entities: entities.clone(),
                distribution: distribution.clone(),
                external_scores: line.external_scores,
            });
        }
        pools.push(CandidatePool::new(
            manifest.dialog_id.clone(),
            candidates,
            dialog_distribution.clone(),
            record.transcript.clone(),
        )?);
    }
    Ok((pools, report))
}
