//! Dialog data model, turn-markup parsing and corpus-level statistics.
//!
//! The canonical on-disk form of a corpus is JSON-lines, one dialog per line
//! (see [`load_corpus`] / [`save_corpus`]). The `[speaker] text <END>` turn
//! markup is an import/export view used for prompts and generator inputs, not
//! a storage format.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Token terminating every turn in the markup view.
pub const END_TOKEN: &str = "<END>";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("malformed turn markup at byte {offset}: {reason}")]
    MalformedMarkup { offset: usize, reason: String },
    #[error("turn {turn_index} contains reserved token {token:?}")]
    TurnContainsReservedToken { turn_index: usize, token: String },
    #[error("line {line}: schema violation: {message}")]
    SchemaViolation { line: usize, message: String },
    #[error("line {line}: duplicate dialog id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("reference token list is empty")]
    EmptyReference,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Who produced a turn. `[null]` in source markup denotes system messages
/// (hold announcements and the like) and maps to `System`; any label outside
/// the known set is kept verbatim in `Other` because source data is noisy.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SpeakerRole {
    Agent,
    Customer,
    System,
    Other(String),
}

impl SpeakerRole {
    /// Parse a bare role label (no brackets). Total: unknown labels become
    /// `Other`, so `parse` followed by [`SpeakerRole::as_label`] is the
    /// identity on every string.
    pub fn parse(label: &str) -> SpeakerRole {
        match label {
            "agent" => SpeakerRole::Agent,
            "customer" => SpeakerRole::Customer,
            "null" => SpeakerRole::System,
            other => SpeakerRole::Other(other.to_string()),
        }
    }

    /// Serialized label, without brackets. `System` serializes as `null`,
    /// the spelling used in source markup.
    pub fn as_label(&self) -> &str {
        match self {
            SpeakerRole::Agent => "agent",
            SpeakerRole::Customer => "customer",
            SpeakerRole::System => "null",
            SpeakerRole::Other(label) => label,
        }
    }
}

impl Serialize for SpeakerRole {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_label())
    }
}

impl<'de> Deserialize<'de> for SpeakerRole {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let label = String::deserialize(deserializer)?;
        Ok(SpeakerRole::parse(&label))
    }
}

/// One turn of a dialog. `text` may be empty (source transcripts contain
/// empty turns) and, once parsed, never contains the `<END>` token or a
/// leading `[role]` marker.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: SpeakerRole,
    pub text: String,
}

/// Provenance of a transcript: manual annotation or an ASR system.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TranscriptSource {
    #[default]
    Manual,
    Asr {
        #[serde(skip_serializing_if = "Option::is_none")]
        system: Option<String>,
    },
}

/// An ordered sequence of turns with provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub turns: Vec<Turn>,
    #[serde(default)]
    pub source: TranscriptSource,
}

impl Transcript {
    pub fn new(turns: Vec<Turn>, source: TranscriptSource) -> Self {
        Transcript { turns, source }
    }

    /// Whitespace-token word count over all turns.
    pub fn word_count(&self) -> usize {
        self.turns
            .iter()
            .map(|t| t.text.split_whitespace().count())
            .sum()
    }

    /// All turn texts joined with single spaces, the text that entity
    /// containment checks run against.
    pub fn joined_text(&self) -> String {
        let texts: Vec<&str> = self.turns.iter().map(|t| t.text.as_str()).collect();
        texts.join(" ")
    }
}

/// Corpus split a dialog belongs to.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Split {
    Hum,
    Aug,
    Test,
    Other(String),
}

impl Split {
    pub fn parse(label: &str) -> Split {
        match label {
            "hum" => Split::Hum,
            "aug" => Split::Aug,
            "test" => Split::Test,
            other => Split::Other(other.to_string()),
        }
    }

    pub fn as_label(&self) -> &str {
        match self {
            Split::Hum => "hum",
            Split::Aug => "aug",
            Split::Test => "test",
            Split::Other(label) => label,
        }
    }
}

impl Serialize for Split {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_label())
    }
}

impl<'de> Deserialize<'de> for Split {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let label = String::deserialize(deserializer)?;
        Ok(Split::parse(&label))
    }
}

/// One conversation: transcript, optional reference synopsis and call type.
///
/// Unknown JSON fields survive a load/save round trip via `extensions`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogRecord {
    pub id: String,
    pub split: Split,
    #[serde(flatten)]
    pub transcript: Transcript,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synopsis: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub call_type: Option<String>,
    #[serde(flatten)]
    pub extensions: serde_json::Map<String, serde_json::Value>,
}

impl DialogRecord {
    pub fn new(id: impl Into<String>, split: Split, transcript: Transcript) -> Self {
        DialogRecord {
            id: id.into(),
            split,
            transcript,
            synopsis: None,
            call_type: None,
            extensions: serde_json::Map::new(),
        }
    }
}

/// Corpus-level counts and means. Means are `None` for empty denominators
/// rather than 0.0, so empty corpora cannot silently pollute aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_dialogs: usize,
    pub mean_conv_len: Option<f64>,
    pub mean_sum_len: Option<f64>,
}

/// Parse the `[role] body <END>` turn markup into a transcript.
///
/// The grammar is `( "[" role "]" SP body SP "<END>" SP? )*`. Empty input
/// yields an empty transcript; any other deviation is a [`CorpusError::MalformedMarkup`]
/// carrying the byte offset of the offending position. The parser never
/// panics on any input.
pub fn parse_turn_markup(input: &str) -> Result<Transcript, CorpusError> {
    let mut turns = Vec::new();
    let mut pos = 0usize;
    loop {
        // skip inter-segment whitespace
        while let Some(c) = input[pos..].chars().next() {
            if c.is_whitespace() {
                pos += c.len_utf8();
            } else {
                break;
            }
        }
        if pos >= input.len() {
            break;
        }
        if !input[pos..].starts_with('[') {
            return Err(CorpusError::MalformedMarkup {
                offset: pos,
                reason: "expected '[role]' marker".to_string(),
            });
        }
        let close = input[pos..].find(']').ok_or(CorpusError::MalformedMarkup {
            offset: pos,
            reason: "unclosed '[role]' marker".to_string(),
        })?;
        let role_label = input[pos + 1..pos + close].trim();
        let speaker = SpeakerRole::parse(role_label);
        let body_start = pos + close + 1;
        let end_rel = input[body_start..]
            .find(END_TOKEN)
            .ok_or(CorpusError::MalformedMarkup {
                offset: pos,
                reason: format!("segment not terminated by {END_TOKEN}"),
            })?;
        let body = input[body_start..body_start + end_rel].trim();
        if starts_with_role_marker(body) {
            return Err(CorpusError::MalformedMarkup {
                offset: body_start,
                reason: "nested '[role]' marker inside segment body".to_string(),
            });
        }
        turns.push(Turn {
            speaker,
            text: body.to_string(),
        });
        pos = body_start + end_rel + END_TOKEN.len();
    }
    Ok(Transcript::new(turns, TranscriptSource::Manual))
}

fn starts_with_role_marker(text: &str) -> bool {
    text.starts_with('[') && text.contains(']')
}

/// Serialize a transcript back into turn markup.
///
/// Inverse of [`parse_turn_markup`] on canonical transcripts (turn texts
/// trimmed and free of reserved tokens). Turn bodies containing `<END>` or a
/// leading `[role]` marker cannot be represented and are rejected; so are
/// role labels containing `]`.
pub fn serialize_turn_markup(transcript: &Transcript) -> Result<String, CorpusError> {
    let mut segments = Vec::with_capacity(transcript.turns.len());
    for (turn_index, turn) in transcript.turns.iter().enumerate() {
        if turn.text.contains(END_TOKEN) {
            return Err(CorpusError::TurnContainsReservedToken {
                turn_index,
                token: END_TOKEN.to_string(),
            });
        }
        if starts_with_role_marker(turn.text.trim_start()) {
            return Err(CorpusError::TurnContainsReservedToken {
                turn_index,
                token: "[...]".to_string(),
            });
        }
        let label = turn.speaker.as_label();
        if label.contains(']') {
            return Err(CorpusError::TurnContainsReservedToken {
                turn_index,
                token: "]".to_string(),
            });
        }
        if turn.text.is_empty() {
            segments.push(format!("[{label}] {END_TOKEN}"));
        } else {
            segments.push(format!("[{label}] {} {END_TOKEN}", turn.text));
        }
    }
    Ok(segments.join(" "))
}

/// Load a corpus from JSON-lines, one [`DialogRecord`] per line.
///
/// Blank lines are skipped. Errors carry 1-based line numbers; duplicate ids
/// are rejected.
pub fn load_corpus<R: BufRead>(reader: R) -> Result<Vec<DialogRecord>, CorpusError> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: DialogRecord =
            serde_json::from_str(&line).map_err(|e| CorpusError::SchemaViolation {
                line: idx + 1,
                message: e.to_string(),
            })?;
        if !seen.insert(record.id.clone()) {
            return Err(CorpusError::DuplicateId {
                line: idx + 1,
                id: record.id,
            });
        }
        records.push(record);
    }
    Ok(records)
}

/// Save a corpus as JSON-lines. Inverse of [`load_corpus`], including unknown
/// fields preserved in each record's extensions.
pub fn save_corpus<W: Write>(records: &[DialogRecord], mut writer: W) -> Result<(), CorpusError> {
    for record in records {
        let line = serde_json::to_string(record).map_err(|e| CorpusError::SchemaViolation {
            line: 0,
            message: e.to_string(),
        })?;
        writeln!(writer, "{line}")?;
    }
    Ok(())
}

/// Dialog count plus mean conversation/summary lengths in whitespace tokens.
/// Records without a synopsis are excluded from `mean_sum_len` only.
pub fn corpus_stats(records: &[DialogRecord]) -> CorpusStats {
    let n_dialogs = records.len();
    let mean_conv_len = if n_dialogs == 0 {
        None
    } else {
        let total: usize = records
            .iter()
            .map(|r| r.transcript.word_count())
            .sum();
        Some(total as f64 / n_dialogs as f64)
    };
    let with_synopsis: Vec<usize> = records
        .iter()
        .filter_map(|r| r.synopsis.as_deref())
        .map(|s| s.split_whitespace().count())
        .collect();
    let mean_sum_len = if with_synopsis.is_empty() {
        None
    } else {
        Some(with_synopsis.iter().sum::<usize>() as f64 / with_synopsis.len() as f64)
    };
    CorpusStats {
        n_dialogs,
        mean_conv_len,
        mean_sum_len,
    }
}

/// Tokenize text for WER: whitespace tokens, case-folded unless disabled.
pub fn wer_tokens(text: &str, case_fold: bool) -> Vec<String> {
    text.split_whitespace()
        .map(|t| {
            if case_fold {
                t.to_lowercase()
            } else {
                t.to_string()
            }
        })
        .collect()
}

/// Word error rate: minimal (substitutions + insertions + deletions) over the
/// reference length, via Levenshtein alignment. May exceed 1.
pub fn word_error_rate<T: Eq>(hypothesis: &[T], reference: &[T]) -> Result<f64, CorpusError> {
    if reference.is_empty() {
        return Err(CorpusError::EmptyReference);
    }
    let edits = edit_distance(hypothesis, reference);
    Ok(edits as f64 / reference.len() as f64)
}

fn edit_distance<T: Eq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut curr = vec![0usize; b.len() + 1];
    for (i, ai) in a.iter().enumerate() {
        curr[0] = i + 1;
        for (j, bj) in b.iter().enumerate() {
            let cost = usize::from(ai != bj);
            curr[j + 1] = (prev[j] + cost).min(prev[j + 1] + 1).min(curr[j] + 1);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn turn(role: SpeakerRole, text: &str) -> Turn {
        Turn {
            speaker: role,
            text: text.to_string(),
        }
    }

    #[test]
    fn parses_two_turn_exemplar() {
        let t = parse_turn_markup(
            "[agent] good morning <END> [customer] yes good morning madam <END>",
        )
        .unwrap();
        assert_eq!(
            t.turns,
            vec![
                turn(SpeakerRole::Agent, "good morning"),
                turn(SpeakerRole::Customer, "yes good morning madam"),
            ]
        );
    }

    #[test]
    fn empty_input_is_empty_transcript() {
        assert!(parse_turn_markup("").unwrap().turns.is_empty());
        assert!(parse_turn_markup("   \n ").unwrap().turns.is_empty());
    }

    #[test]
    fn null_role_maps_to_system_and_back() {
        let t = parse_turn_markup("[null] will answer you <END>").unwrap();
        assert_eq!(t.turns[0].speaker, SpeakerRole::System);
        assert_eq!(
            serialize_turn_markup(&t).unwrap(),
            "[null] will answer you <END>"
        );
    }

    #[test]
    fn unknown_role_round_trips() {
        // "system" is not the canonical spelling, so it stays an Other label
        assert_eq!(
            SpeakerRole::parse("system"),
            SpeakerRole::Other("system".to_string())
        );
        for label in ["agent", "customer", "null", "system", "caller 2"] {
            assert_eq!(SpeakerRole::parse(label).as_label(), label);
        }
    }

    #[test]
    fn empty_turn_body_is_allowed() {
        let t = parse_turn_markup("[agent] a lot of <END> [customer] <END>").unwrap();
        assert_eq!(t.turns[1].text, "");
        let s = serialize_turn_markup(&t).unwrap();
        assert_eq!(s, "[agent] a lot of <END> [customer] <END>");
        assert_eq!(parse_turn_markup(&s).unwrap().turns, t.turns);
    }

    #[test]
    fn stray_tokens_report_offset() {
        let err = parse_turn_markup("hello [agent] hi <END>").unwrap_err();
        match err {
            CorpusError::MalformedMarkup { offset, .. } => assert_eq!(offset, 0),
            other => panic!("unexpected error {other:?}"),
        }
        let err = parse_turn_markup("[agent] hi <END> stray").unwrap_err();
        match err {
            CorpusError::MalformedMarkup { offset, .. } => assert_eq!(offset, 17),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn unterminated_segment_is_an_error() {
        let err = parse_turn_markup("[agent] hello").unwrap_err();
        assert!(matches!(err, CorpusError::MalformedMarkup { offset: 0, .. }));
    }

    #[test]
    fn nested_role_marker_is_an_error() {
        let err = parse_turn_markup("[agent] [customer] hi <END>").unwrap_err();
        assert!(matches!(err, CorpusError::MalformedMarkup { .. }));
        // brackets not at body start are data, not markers
        let t = parse_turn_markup("[agent] take line [B] today <END>").unwrap();
        assert_eq!(t.turns[0].text, "take line [B] today");
    }

    #[test]
    fn serialize_rejects_reserved_tokens() {
        let t = Transcript::new(
            vec![turn(SpeakerRole::Agent, "bad <END> body")],
            TranscriptSource::Manual,
        );
        assert!(matches!(
            serialize_turn_markup(&t),
            Err(CorpusError::TurnContainsReservedToken { .. })
        ));
        let t = Transcript::new(
            vec![turn(SpeakerRole::Agent, "[x] leading marker")],
            TranscriptSource::Manual,
        );
        assert!(matches!(
            serialize_turn_markup(&t),
            Err(CorpusError::TurnContainsReservedToken { .. })
        ));
    }

    #[test]
    fn corpus_roundtrip_preserves_unknown_fields() {
        let line = r#"{"id":"d1","split":"hum","turns":[{"speaker":"agent","text":"hi"}],"source":{"kind":"asr","system":"whisper"},"synopsis":"greeting","call_type":"Itinerary","custom_field":{"x":1}}"#;
        let records = load_corpus(line.as_bytes()).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].extensions["custom_field"]["x"], 1);
        let mut out = Vec::new();
        save_corpus(&records, &mut out).unwrap();
        let again = load_corpus(out.as_slice()).unwrap();
        assert_eq!(records, again);
    }

    #[test]
    fn load_rejects_missing_id_with_line_number() {
        let input = "{\"id\":\"a\",\"split\":\"hum\",\"turns\":[]}\n{\"split\":\"hum\",\"turns\":[]}\n";
        match load_corpus(input.as_bytes()).unwrap_err() {
            CorpusError::SchemaViolation { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn load_rejects_duplicate_ids() {
        let input = "{\"id\":\"a\",\"split\":\"hum\",\"turns\":[]}\n{\"id\":\"a\",\"split\":\"hum\",\"turns\":[]}\n";
        match load_corpus(input.as_bytes()).unwrap_err() {
            CorpusError::DuplicateId { line, id } => {
                assert_eq!(line, 2);
                assert_eq!(id, "a");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn stats_on_single_record() {
        let t = parse_turn_markup("[agent] one two three four five <END> [customer] six seven eight nine ten <END>").unwrap();
        let mut r = DialogRecord::new("d1", Split::Hum, t);
        r.synopsis = Some("a four word synopsis".to_string());
        let stats = corpus_stats(&[r]);
        assert_eq!(stats.n_dialogs, 1);
        assert_eq!(stats.mean_conv_len, Some(10.0));
        assert_eq!(stats.mean_sum_len, Some(4.0));
    }

    #[test]
    fn stats_hand_computed_means() {
        // word counts 3, 5, 7 -> mean 5; synopses 2 and 4 words -> mean 3
        let mut records = Vec::new();
        for (id, conv, syn) in [
            ("a", "w w w", Some("s s")),
            ("b", "w w w w w", None),
            ("c", "w w w w w w w", Some("s s s s")),
        ] {
            let t = parse_turn_markup(&format!("[agent] {conv} <END>")).unwrap();
            let mut r = DialogRecord::new(id, Split::Test, t);
            r.synopsis = syn.map(str::to_string);
            records.push(r);
        }
        let stats = corpus_stats(&records);
        assert_eq!(stats.n_dialogs, 3);
        assert_eq!(stats.mean_conv_len, Some(5.0));
        assert_eq!(stats.mean_sum_len, Some(3.0));
    }

    #[test]
    fn stats_on_empty_corpus_report_absent_means() {
        let stats = corpus_stats(&[]);
        assert_eq!(stats.n_dialogs, 0);
        assert_eq!(stats.mean_conv_len, None);
        assert_eq!(stats.mean_sum_len, None);
    }

    #[test]
    fn wer_identical_is_zero() {
        let toks = wer_tokens("a b c", true);
        assert_eq!(word_error_rate(&toks, &toks).unwrap(), 0.0);
    }

    #[test]
    fn wer_one_substitution_in_three() {
        let hyp = wer_tokens("a b x", true);
        let reference = wer_tokens("a b c", true);
        let wer = word_error_rate(&hyp, &reference).unwrap();
        assert!((wer - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn wer_can_exceed_one_and_rejects_empty_reference() {
        let hyp = wer_tokens("x y z w", true);
        let reference = wer_tokens("a", true);
        assert!(word_error_rate(&hyp, &reference).unwrap() > 1.0);
        let empty: Vec<String> = Vec::new();
        assert!(matches!(
            word_error_rate(&hyp, &empty),
            Err(CorpusError::EmptyReference)
        ));
    }

    #[test]
    fn wer_tokens_case_fold_flag() {
        assert_eq!(wer_tokens("Bonjour LE RER", true), vec!["bonjour", "le", "rer"]);
        assert_eq!(wer_tokens("Bonjour LE", false), vec!["Bonjour", "LE"]);
    }
}
