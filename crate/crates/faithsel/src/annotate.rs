//! Named-entity acquisition and matching.
//!
//! Entities reach the pipeline two ways: a rule-based gazetteer extractor
//! ([`extract_entities`]) that makes the whole toolkit runnable without any
//! external model, and ingestion of external annotator output
//! ([`load_entity_annotations`]). Either way, every span is normalized under
//! one [`MatchConfig`] so that hallucination checks and entity overlap
//! metrics compare like with like.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::corpus::Transcript;

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("line {line}: schema violation: {message}")]
    SchemaViolation { line: usize, message: String },
    #[error("gazetteer line {line}: {message}")]
    GazetteerFormat { line: usize, message: String },
    #[error("entity sets use different match configs ({left:?} vs {right:?})")]
    ConfigMismatch {
        left: MatchConfig,
        right: MatchConfig,
    },
    #[error("transport: {0}")]
    Transport(String),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<crate::backend::BackendError> for AnnotateError {
    fn from(err: crate::backend::BackendError) -> Self {
        match err {
            crate::backend::BackendError::Transport(msg) => AnnotateError::Transport(msg),
            crate::backend::BackendError::Protocol(msg) => AnnotateError::Protocol(msg),
        }
    }
}

/// Entity categories: a closed domain inventory plus an escape hatch for
/// producers with their own type systems.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EntityType {
    TransportLine,
    Location,
    Organization,
    Person,
    Time,
    Date,
    Numeral,
    Schedule,
    Other(String),
}

impl EntityType {
    pub fn parse(label: &str) -> EntityType {
        match label {
            "transport_line" => EntityType::TransportLine,
            "location" => EntityType::Location,
            "organization" => EntityType::Organization,
            "person" => EntityType::Person,
            "time" => EntityType::Time,
            "date" => EntityType::Date,
            "numeral" => EntityType::Numeral,
            "schedule" => EntityType::Schedule,
            other => EntityType::Other(other.to_string()),
        }
    }

    pub fn as_label(&self) -> &str {
        match self {
            EntityType::TransportLine => "transport_line",
            EntityType::Location => "location",
            EntityType::Organization => "organization",
            EntityType::Person => "person",
            EntityType::Time => "time",
            EntityType::Date => "date",
            EntityType::Numeral => "numeral",
            EntityType::Schedule => "schedule",
            EntityType::Other(label) => label,
        }
    }

    fn is_known_label(label: &str) -> bool {
        !matches!(EntityType::parse(label), EntityType::Other(_))
    }
}

impl Serialize for EntityType {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_label())
    }
}

impl<'de> Deserialize<'de> for EntityType {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let label = String::deserialize(deserializer)?;
        Ok(EntityType::parse(&label))
    }
}

/// Normalization and matching configuration. Entity sets built under
/// different configs never mix.
///
/// Accent folding defaults to off: French has minimal pairs ("a"/"à") that
/// folding would merge. The dedup key defaults to normalized text only, since
/// external annotators use heterogeneous type inventories; `type_aware`
/// includes the entity type in the key. `multiset` keeps repeated mentions
/// instead of set semantics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MatchConfig {
    #[serde(default)]
    pub accent_fold: bool,
    #[serde(default)]
    pub type_aware: bool,
    #[serde(default)]
    pub multiset: bool,
}

/// Normalize an entity surface form: NFC, case fold, collapse internal
/// whitespace, trim, then optional accent folding. Idempotent.
pub fn normalize_entity(surface: &str, config: &MatchConfig) -> String {
    let nfc: String = surface.nfc().collect();
    let folded = nfc.to_lowercase();
    let collapsed = folded.split_whitespace().collect::<Vec<_>>().join(" ");
    if config.accent_fold {
        collapsed.nfd().filter(|c| !is_combining_mark(*c)).collect()
    } else {
        collapsed
    }
}

/// One entity mention. `char_range` is a `[start, end)` pair of character
/// indices into the source text (absent for externally supplied entities
/// without offsets); when present, the source slice at that range equals
/// `surface`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySpan {
    pub surface: String,
    pub normalized: String,
    #[serde(rename = "type")]
    pub entity_type: EntityType,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub char_range: Option<(usize, usize)>,
}

/// Key under which entities are deduplicated and matched.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct EntityKey {
    pub text: String,
    pub entity_type: Option<EntityType>,
}

/// A collection of entity spans, deduplicated under the active key unless
/// the config asks for multiset semantics.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySet {
    spans: Vec<EntitySpan>,
    config: MatchConfig,
}

impl EntitySet {
    pub fn empty(config: MatchConfig) -> Self {
        EntitySet {
            spans: Vec::new(),
            config,
        }
    }

    /// Build a set from raw spans. Every span is re-normalized under
    /// `config`, so matching is config-consistent regardless of producer.
    /// In set mode the first span per key wins; insertion order is kept.
    pub fn from_spans(spans: Vec<EntitySpan>, config: MatchConfig) -> Self {
        let mut seen = BTreeMap::new();
        let mut kept = Vec::new();
        for mut span in spans {
            span.normalized = normalize_entity(&span.surface, &config);
            let key = span_key(&span, &config);
            if config.multiset || seen.insert(key, ()).is_none() {
                kept.push(span);
            }
        }
        EntitySet {
            spans: kept,
            config,
        }
    }

    pub fn spans(&self) -> &[EntitySpan] {
        &self.spans
    }

    pub fn config(&self) -> &MatchConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    /// Count of spans per key: at most 1 per key in set mode, mention counts
    /// in multiset mode.
    pub fn key_counts(&self) -> BTreeMap<EntityKey, usize> {
        let mut counts = BTreeMap::new();
        for span in &self.spans {
            *counts.entry(span_key(span, &self.config)).or_insert(0) += 1;
        }
        counts
    }

    fn check_config(&self, other: &EntitySet) -> Result<(), AnnotateError> {
        if self.config != other.config {
            return Err(AnnotateError::ConfigMismatch {
                left: self.config,
                right: other.config,
            });
        }
        Ok(())
    }
}

fn span_key(span: &EntitySpan, config: &MatchConfig) -> EntityKey {
    EntityKey {
        text: span.normalized.clone(),
        entity_type: if config.type_aware {
            Some(span.entity_type.clone())
        } else {
            None
        },
    }
}

/// Entities of `a` whose key also appears in `b`. In multiset mode each key
/// contributes `min(count_a, count_b)` spans.
pub fn entity_intersection(a: &EntitySet, b: &EntitySet) -> Result<EntitySet, AnnotateError> {
    a.check_config(b)?;
    let b_counts = b.key_counts();
    let mut budget: BTreeMap<EntityKey, usize> = BTreeMap::new();
    let mut kept = Vec::new();
    for span in &a.spans {
        let key = span_key(span, &a.config);
        let available = b_counts.get(&key).copied().unwrap_or(0);
        let used = budget.entry(key).or_insert(0);
        if *used < available {
            *used += 1;
            kept.push(span.clone());
        }
    }
    Ok(EntitySet {
        spans: kept,
        config: a.config,
    })
}

/// Size of the intersection without materializing it.
pub fn intersection_size(a: &EntitySet, b: &EntitySet) -> Result<usize, AnnotateError> {
    a.check_config(b)?;
    let b_counts = b.key_counts();
    Ok(a.key_counts()
        .iter()
        .map(|(key, count)| (*count).min(b_counts.get(key).copied().unwrap_or(0)))
        .sum())
}

/// Does the entity occur in the source transcript? The test is normalized
/// substring containment with token-boundary anchoring on both ends, which is
/// robust to segmentation differences between the annotator that produced the
/// entity and the transcript text. Entities with an empty normalized form are
/// never considered present.
pub fn entity_in_source(entity: &EntitySpan, source: &Transcript, config: &MatchConfig) -> bool {
    let haystack = normalize_entity(&source.joined_text(), config);
    let needle = normalize_entity(&entity.surface, config);
    contains_token_bounded(&haystack, &needle)
}

fn contains_token_bounded(haystack: &str, needle: &str) -> bool {
    if needle.is_empty() {
        return false;
    }
    let mut from = 0;
    while let Some(rel) = haystack[from..].find(needle) {
        let at = from + rel;
        let before_ok = haystack[..at]
            .chars()
            .next_back()
            .is_none_or(|c| !c.is_alphanumeric());
        let after_ok = haystack[at + needle.len()..]
            .chars()
            .next()
            .is_none_or(|c| !c.is_alphanumeric());
        if before_ok && after_ok {
            return true;
        }
        // step past one character and keep scanning
        let step = haystack[at..].chars().next().map_or(1, char::len_utf8);
        from = at + step;
    }
    false
}

// ---------------------------------------------------------------------------
// Gazetteer extraction
// ---------------------------------------------------------------------------

#[derive(Debug)]
enum Pattern {
    Literal(Vec<char>),
    Regex(Regex),
}

#[derive(Debug)]
struct GazetteerEntry {
    entity_type: EntityType,
    pattern: Pattern,
}

/// Surface patterns per entity type: literal phrases (matched case-insensitively
/// at token boundaries) and regular expressions (matched as written).
#[derive(Debug)]
pub struct Gazetteer {
    entries: Vec<GazetteerEntry>,
}

impl Gazetteer {
    pub fn empty() -> Self {
        Gazetteer {
            entries: Vec::new(),
        }
    }

    pub fn add_literal(&mut self, entity_type: EntityType, phrase: &str) {
        self.entries.push(GazetteerEntry {
            entity_type,
            pattern: Pattern::Literal(phrase.chars().map(fold_char).collect()),
        });
    }

    pub fn add_regex(&mut self, entity_type: EntityType, pattern: Regex) {
        self.entries.push(GazetteerEntry {
            entity_type,
            pattern: Pattern::Regex(pattern),
        });
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parse the columnar gazetteer file: `type<TAB>pattern<TAB>kind` per
    /// line, kind one of `literal` | `regex`. Blank lines are skipped.
    pub fn parse<R: BufRead>(reader: R) -> Result<Gazetteer, AnnotateError> {
        let mut gazetteer = Gazetteer::empty();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(AnnotateError::GazetteerFormat {
                    line: idx + 1,
                    message: format!("expected 3 tab-separated fields, got {}", fields.len()),
                });
            }
            let entity_type = EntityType::parse(fields[0]);
            if fields[1].is_empty() {
                return Err(AnnotateError::GazetteerFormat {
                    line: idx + 1,
                    message: "empty pattern".to_string(),
                });
            }
            match fields[2] {
                "literal" => gazetteer.add_literal(entity_type, fields[1]),
                "regex" => {
                    let regex = Regex::new(fields[1]).map_err(|e| AnnotateError::GazetteerFormat {
                        line: idx + 1,
                        message: format!("bad regex: {e}"),
                    })?;
                    gazetteer.add_regex(entity_type, regex);
                }
                other => {
                    return Err(AnnotateError::GazetteerFormat {
                        line: idx + 1,
                        message: format!("unknown pattern kind {other:?}"),
                    })
                }
            }
        }
        Ok(gazetteer)
    }
}

// one lowercase char per input char, so char indices survive folding
fn fold_char(c: char) -> char {
    c.to_lowercase().next().unwrap_or(c)
}

fn builtin_patterns() -> &'static [(EntityType, Regex)] {
    static PATTERNS: OnceLock<Vec<(EntityType, Regex)>> = OnceLock::new();
    PATTERNS.get_or_init(|| {
        vec![
            (
                EntityType::Time,
                Regex::new(r"(?i)\b\d{1,2}(?::\d{2}|\s*h(?:eures?)?(?:\s*\d{1,2})?)\b").unwrap(),
            ),
            (
                EntityType::Date,
                Regex::new(r"(?i)\b\d{1,2}(?:er)?\s+(?:janvier|février|mars|avril|mai|juin|juillet|août|septembre|octobre|novembre|décembre)(?:\s+\d{4})?\b|\b\d{1,2}/\d{1,2}(?:/\d{2,4})?\b").unwrap(),
            ),
            (
                EntityType::Numeral,
                Regex::new(r"\b\d+(?:[.,]\d+)?\b").unwrap(),
            ),
        ]
    })
}

#[derive(Debug)]
struct MatchCandidate {
    start: usize, // char index
    end: usize,   // char index, exclusive
    entity_type: EntityType,
    rank: usize,
}

/// Rule-based entity extraction: gazetteer matches first, then built-in
/// patterns for clock times, dates and numerals over the spans the gazetteer
/// left free. Within each phase resolution is leftmost-first then
/// longest-first, ties broken by pattern order, so output is deterministic
/// and spans never overlap.
pub fn extract_entities(text: &str, gazetteer: &Gazetteer, config: &MatchConfig) -> EntitySet {
    let chars: Vec<char> = text.chars().collect();
    let byte_starts: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
    let folded: Vec<char> = chars.iter().copied().map(fold_char).collect();

    let byte_to_char: BTreeMap<usize, usize> = byte_starts
        .iter()
        .enumerate()
        .map(|(c, b)| (*b, c))
        .chain(std::iter::once((text.len(), chars.len())))
        .collect();

    let mut gazetteer_candidates = Vec::new();
    for (rank, entry) in gazetteer.entries.iter().enumerate() {
        match &entry.pattern {
            Pattern::Literal(pattern) => {
                for start in literal_matches(&folded, pattern) {
                    gazetteer_candidates.push(MatchCandidate {
                        start,
                        end: start + pattern.len(),
                        entity_type: entry.entity_type.clone(),
                        rank,
                    });
                }
            }
            Pattern::Regex(regex) => {
                for m in regex.find_iter(text) {
                    gazetteer_candidates.push(MatchCandidate {
                        start: byte_to_char[&m.start()],
                        end: byte_to_char[&m.end()],
                        entity_type: entry.entity_type.clone(),
                        rank,
                    });
                }
            }
        }
    }
    let mut taken = resolve_leftmost_longest(gazetteer_candidates, &[]);

    let mut builtin_candidates = Vec::new();
    for (rank, (entity_type, regex)) in builtin_patterns().iter().enumerate() {
        for m in regex.find_iter(text) {
            builtin_candidates.push(MatchCandidate {
                start: byte_to_char[&m.start()],
                end: byte_to_char[&m.end()],
                entity_type: entity_type.clone(),
                rank,
            });
        }
    }
    let builtin_taken = resolve_leftmost_longest(builtin_candidates, &taken);
    taken.extend(builtin_taken);
    taken.sort_by_key(|c| c.start);

    let spans = taken
        .into_iter()
        .map(|c| {
            let byte_start = byte_starts[c.start];
            let byte_end = if c.end < byte_starts.len() {
                byte_starts[c.end]
            } else {
                text.len()
            };
            EntitySpan {
                surface: text[byte_start..byte_end].to_string(),
                normalized: String::new(), // filled by from_spans
                entity_type: c.entity_type,
                char_range: Some((c.start, c.end)),
            }
        })
        .collect();
    EntitySet::from_spans(spans, *config)
}

// literal matching over folded chars, anchored at token boundaries
fn literal_matches(haystack: &[char], needle: &[char]) -> Vec<usize> {
    let mut positions = Vec::new();
    if needle.is_empty() || needle.len() > haystack.len() {
        return positions;
    }
    for start in 0..=haystack.len() - needle.len() {
        if haystack[start..start + needle.len()] != *needle {
            continue;
        }
        let before_ok = start == 0 || !haystack[start - 1].is_alphanumeric();
        let end = start + needle.len();
        let after_ok = end == haystack.len() || !haystack[end].is_alphanumeric();
        if before_ok && after_ok {
            positions.push(start);
        }
    }
    positions
}

fn resolve_leftmost_longest(
    mut candidates: Vec<MatchCandidate>,
    blocked: &[MatchCandidate],
) -> Vec<MatchCandidate> {
    candidates.sort_by(|a, b| {
        a.start
            .cmp(&b.start)
            .then(b.end.cmp(&a.end))
            .then(a.rank.cmp(&b.rank))
    });
    let mut taken: Vec<MatchCandidate> = Vec::new();
    for candidate in candidates {
        let overlaps = |other: &MatchCandidate| candidate.start < other.end && other.start < candidate.end;
        if blocked.iter().any(overlaps) || taken.iter().any(overlaps) {
            continue;
        }
        taken.push(candidate);
    }
    taken
}

// ---------------------------------------------------------------------------
// External annotation ingestion
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct AnnotationLine {
    target_id: String,
    entities: Vec<AnnotationEntity>,
}

#[derive(Debug, Serialize, Deserialize)]
struct AnnotationEntity {
    surface: String,
    #[serde(rename = "type")]
    entity_type: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    start: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    end: Option<usize>,
}

/// Ingestion outcome counters. Unknown entity types are mapped to
/// `Other(label)` and counted here rather than treated as errors.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct AnnotationWarnings {
    pub unknown_types: usize,
}

/// Load entity annotations keyed by target id (a dialog id for reference
/// synopses, a candidate id for generated summaries). Multiple lines for one
/// target merge into a single set. Spans are re-normalized under `config` on
/// load.
pub fn load_entity_annotations<R: BufRead>(
    reader: R,
    config: &MatchConfig,
) -> Result<(BTreeMap<String, EntitySet>, AnnotationWarnings), AnnotateError> {
    let mut raw: BTreeMap<String, Vec<EntitySpan>> = BTreeMap::new();
    let mut warnings = AnnotationWarnings::default();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: AnnotationLine =
            serde_json::from_str(&line).map_err(|e| AnnotateError::SchemaViolation {
                line: idx + 1,
                message: e.to_string(),
            })?;
        let spans = raw.entry(parsed.target_id).or_default();
        for entity in parsed.entities {
            if !EntityType::is_known_label(&entity.entity_type) {
                warnings.unknown_types += 1;
            }
            let char_range = match (entity.start, entity.end) {
                (Some(start), Some(end)) if start <= end => Some((start, end)),
                (None, None) => None,
                _ => {
                    return Err(AnnotateError::SchemaViolation {
                        line: idx + 1,
                        message: "start/end must be a valid pair or both absent".to_string(),
                    })
                }
            };
            spans.push(EntitySpan {
                surface: entity.surface,
                normalized: String::new(),
                entity_type: EntityType::parse(&entity.entity_type),
                char_range,
            });
        }
    }
    let sets = raw
        .into_iter()
        .map(|(id, spans)| (id, EntitySet::from_spans(spans, *config)))
        .collect();
    Ok((sets, warnings))
}

/// Annotate texts through a remote NER backend speaking the shared wire
/// protocol (`task: "ner"`). Each output is an array of entity objects in the
/// annotation-line schema; spans are normalized under `config` like any other
/// ingested annotation.
pub fn ner_remote(
    client: &crate::backend::BackendClient,
    texts: &[String],
    config: &MatchConfig,
) -> Result<Vec<EntitySet>, AnnotateError> {
    let outputs = client.request("ner", texts)?;
    let mut sets = Vec::with_capacity(outputs.len());
    for output in outputs {
        let entities: Vec<AnnotationEntity> = serde_json::from_value(output)
            .map_err(|e| AnnotateError::Protocol(format!("decoding ner output: {e}")))?;
        let spans = entities
            .into_iter()
            .map(|e| EntitySpan {
                surface: e.surface,
                normalized: String::new(),
                entity_type: EntityType::parse(&e.entity_type),
                char_range: match (e.start, e.end) {
                    (Some(start), Some(end)) if start <= end => Some((start, end)),
                    _ => None,
                },
            })
            .collect();
        sets.push(EntitySet::from_spans(spans, *config));
    }
    Ok(sets)
}

/// Write annotations in the same JSON-lines schema that [`load_entity_annotations`]
/// reads, one line per target, targets in sorted order.
pub fn write_entity_annotations<W: std::io::Write>(
    sets: &BTreeMap<String, EntitySet>,
    mut writer: W,
) -> Result<(), AnnotateError> {
    for (target_id, set) in sets {
        let line = AnnotationLine {
            target_id: target_id.clone(),
            entities: set
                .spans()
                .iter()
                .map(|s| AnnotationEntity {
                    surface: s.surface.clone(),
                    entity_type: s.entity_type.as_label().to_string(),
                    start: s.char_range.map(|(start, _)| start),
                    end: s.char_range.map(|(_, end)| end),
                })
                .collect(),
        };
        let json = serde_json::to_string(&line).map_err(|e| AnnotateError::SchemaViolation {
            line: 0,
            message: e.to_string(),
        })?;
        writeln!(writer, "{json}")?;
    }
    Ok(())
}
