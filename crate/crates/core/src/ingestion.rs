//! Source extraction, text normalization, sliding-window chunking and
//! context-window feasibility.
//!
//! Token counts come from a [`TokenEstimator`]; the default
//! [`CharHeuristic`] charges one token per four characters, rounded up.
//! Chunk windows are laid out in characters at the same ratio, so a chunk of
//! at most `chunk_size * 4` characters never estimates above `chunk_size`.

use chrono::NaiveTime;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{ChunkId, UnitId};

pub const CHARS_PER_TOKEN: usize = 4;
pub const DEFAULT_CHUNK_SIZE: usize = 256;
pub const DEFAULT_CHUNK_OVERLAP: usize = 64;
pub const DEFAULT_REPLY_RESERVE: usize = 1024;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IngestError {
    #[error("source is empty")]
    EmptySource,
    #[error("source is not valid UTF-8 (first bad byte at offset {offset})")]
    UndecodableBytes { offset: usize },
    #[error("invalid chunking parameters: overlap {overlap} must be below chunk size {chunk_size}")]
    InvalidParams { chunk_size: usize, overlap: usize },
}

pub trait TokenEstimator: Send + Sync {
    fn estimate(&self, text: &str) -> usize;
}

/// `ceil(chars / 4)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct CharHeuristic;

impl TokenEstimator for CharHeuristic {
    fn estimate(&self, text: &str) -> usize {
        text.chars().count().div_ceil(CHARS_PER_TOKEN)
    }
}

pub fn estimate_tokens(text: &str) -> usize {
    CharHeuristic.estimate(text)
}

/// Admin-supplied material before extraction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Source {
    /// Raw bytes of a `.txt` upload.
    PlainText(Vec<u8>),
    /// Transcript records shaped `MM:SS text` (hours allowed).
    TranscriptLines(Vec<String>),
    /// Text produced by an external PDF/.doc extraction adapter.
    PdfText(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentText {
    pub unit_id: UnitId,
    pub text: String,
    pub token_estimate: usize,
}

impl DocumentText {
    /// Wraps already-normalized text, e.g. a stored unit's raw text.
    pub fn from_normalized(unit_id: UnitId, text: impl Into<String>) -> Result<Self, IngestError> {
        let text = text.into();
        if text.is_empty() {
            return Err(IngestError::EmptySource);
        }
        let token_estimate = estimate_tokens(&text);
        Ok(DocumentText {
            unit_id,
            text,
            token_estimate,
        })
    }
}

/// Collapses whitespace and control characters into single spaces and trims.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for ch in text.chars() {
        if ch.is_whitespace() || ch.is_control() {
            pending_space = !out.is_empty();
            continue;
        }
        if pending_space {
            out.push(' ');
            pending_space = false;
        }
        out.push(ch);
    }
    out
}

/// Strips a leading `MM:SS` or `HH:MM:SS` timestamp from a transcript line.
fn strip_timestamp(line: &str) -> &str {
    let trimmed = line.trim_start();
    let end = trimmed
        .find(|c: char| !(c.is_ascii_digit() || c == ':' || c == '.'))
        .unwrap_or(trimmed.len());
    let (stamp, rest) = trimmed.split_at(end);
    let separated = rest.is_empty() || rest.starts_with(char::is_whitespace);
    if separated && is_timestamp(stamp) {
        rest.trim_start()
    } else {
        line
    }
}

fn is_timestamp(stamp: &str) -> bool {
    let stamp = stamp.split('.').next().unwrap_or_default();
    if !stamp.contains(':') {
        return false;
    }
    let parts: Vec<&str> = stamp.split(':').collect();
    let well_formed = parts
        .iter()
        .all(|p| !p.is_empty() && p.len() <= 2 && p.chars().all(|c| c.is_ascii_digit()));
    match parts.len() {
        2 => well_formed && parts[1].parse::<u32>().is_ok_and(|s| s < 60),
        3 => well_formed && NaiveTime::parse_from_str(stamp, "%H:%M:%S").is_ok(),
        _ => false,
    }
}

pub fn extract_text(source: Source, unit_id: UnitId) -> Result<DocumentText, IngestError> {
    let text = match source {
        Source::PlainText(bytes) => {
            let decoded = std::str::from_utf8(&bytes).map_err(|e| IngestError::UndecodableBytes {
                offset: e.valid_up_to(),
            })?;
            normalize(decoded)
        }
        Source::TranscriptLines(lines) => {
            let joined: Vec<&str> = lines.iter().map(|l| strip_timestamp(l)).collect();
            normalize(&joined.join("\n"))
        }
        Source::PdfText(text) => normalize(&text),
    };
    DocumentText::from_normalized(unit_id, text)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: ChunkId,
    pub unit_id: UnitId,
    pub ordinal: u32,
    pub text: String,
    pub token_estimate: usize,
    /// Leading characters shared with the previous chunk.
    pub overlap_chars: usize,
}

/// Sliding-window chunking with window ends pulled back to the nearest
/// whitespace when one exists past the overlap region.
pub fn chunk(doc: &DocumentText, chunk_size: usize, overlap: usize) -> Result<Vec<Chunk>, IngestError> {
    if chunk_size == 0 || overlap >= chunk_size {
        return Err(IngestError::InvalidParams { chunk_size, overlap });
    }
    let chars: Vec<char> = doc.text.chars().collect();
    let total = chars.len();
    let window = chunk_size * CHARS_PER_TOKEN;
    let overlap_chars = overlap * CHARS_PER_TOKEN;

    let mut chunks = Vec::new();
    let mut start = 0usize;
    let mut lead = 0usize;
    loop {
        let ordinal = chunks.len() as u32;
        let end = if total - start <= window {
            total
        } else {
            window_end(&chars, start, start + window, start + overlap_chars)
        };
        let text: String = chars[start..end].iter().collect();
        chunks.push(Chunk {
            chunk_id: ChunkId {
                unit_id: doc.unit_id,
                ordinal,
            },
            unit_id: doc.unit_id,
            ordinal,
            token_estimate: estimate_tokens(&text),
            text,
            overlap_chars: lead,
        });
        if end == total {
            return Ok(chunks);
        }
        start = end - overlap_chars;
        lead = overlap_chars;
    }
}

/// Largest cut in `(floor, hard_end]` adjacent to whitespace, else `hard_end`.
fn window_end(chars: &[char], start: usize, hard_end: usize, floor: usize) -> usize {
    let floor = floor.max(start) + 1;
    (floor..=hard_end)
        .rev()
        .find(|&p| chars[p].is_whitespace() || chars[p - 1].is_whitespace())
        .unwrap_or(hard_end)
}

/// Rebuilds the source text by dropping each chunk's leading overlap.
pub fn stitch(chunks: &[Chunk]) -> String {
    chunks
        .iter()
        .flat_map(|c| c.text.chars().skip(c.overlap_chars))
        .collect()
}

/// True iff the prompt plus the reply reserve fits in the model window.
pub fn fits_context(prompt_tokens: usize, model_window: usize, reply_reserve: usize) -> bool {
    prompt_tokens
        .checked_add(reply_reserve)
        .is_some_and(|needed| needed <= model_window)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const UNIT: UnitId = UnitId(1);

    #[test]
    fn normalizes_plain_text() {
        let doc = extract_text(Source::PlainText(b"Hello   world\n\n".to_vec()), UNIT).unwrap();
        assert_eq!(doc.text, "Hello world");
        // ceil(11 / 4)
        assert_eq!(doc.token_estimate, 3);
    }

    #[test]
    fn strips_transcript_timestamps() {
        let lines = vec!["00:01 Hi".to_string(), "00:02 there".to_string()];
        let doc = extract_text(Source::TranscriptLines(lines), UNIT).unwrap();
        assert_eq!(doc.text, "Hi there");
        let lines = vec!["1:02:03 long".to_string(), "12:5x not a stamp".to_string()];
        let doc = extract_text(Source::TranscriptLines(lines), UNIT).unwrap();
        assert_eq!(doc.text, "long 12:5x not a stamp");
    }

    #[test]
    fn empty_and_undecodable_sources() {
        assert_eq!(
            extract_text(Source::PlainText(Vec::new()), UNIT),
            Err(IngestError::EmptySource)
        );
        assert_eq!(
            extract_text(Source::PlainText(b" \n\t ".to_vec()), UNIT),
            Err(IngestError::EmptySource)
        );
        assert_eq!(
            extract_text(Source::PlainText(vec![b'a', 0xff, b'b']), UNIT),
            Err(IngestError::UndecodableBytes { offset: 1 })
        );
    }

    #[test]
    fn control_characters_become_spaces() {
        assert_eq!(normalize("a\u{0}b\u{7}\u{1b}c"), "a b c");
    }

    #[test]
    fn short_doc_is_one_chunk() {
        let doc = DocumentText::from_normalized(UNIT, "word ".repeat(80).trim_end().to_string()).unwrap();
        assert_eq!(doc.token_estimate, 100);
        let chunks = chunk(&doc, 256, 64).unwrap();
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].text, doc.text);
    }

    #[test]
    fn chunk_count_matches_window_arithmetic() {
        // 600 tokens of 4-char words; every window edge lands on a space.
        let doc = DocumentText::from_normalized(UNIT, "abc ".repeat(600)).unwrap();
        assert_eq!(doc.token_estimate, 600);
        let (n, s, o) = (600usize, 256usize, 64usize);
        let expected = (n - o).div_ceil(s - o);
        assert_eq!(expected, 3);
        assert_eq!(chunk(&doc, s, o).unwrap().len(), expected);
    }

    #[test]
    fn overlap_must_be_below_size() {
        let doc = DocumentText::from_normalized(UNIT, "x").unwrap();
        assert_eq!(
            chunk(&doc, 256, 256),
            Err(IngestError::InvalidParams {
                chunk_size: 256,
                overlap: 256
            })
        );
    }

    #[test]
    fn context_fit() {
        assert!(fits_context(3000, 8192, 1024));
        assert!(!fits_context(8000, 8192, 1024));
        assert!(fits_context(0, 1024, 1024));
        assert!(!fits_context(usize::MAX, 8192, 1));
    }

    fn arb_text() -> impl Strategy<Value = String> {
        proptest::collection::vec(("[a-zé]{1,12}", prop::bool::weighted(0.1)), 1..400).prop_map(|words| {
            let mut s = String::new();
            for (w, glue) in words {
                if !s.is_empty() && !glue {
                    s.push(' ');
                }
                s.push_str(&w);
            }
            s
        })
    }

    proptest! {
        #[test]
        fn stitching_reconstructs_source(text in arb_text(), size in 2usize..40, overlap_frac in 0.0f64..1.0) {
            let overlap = ((size as f64) * overlap_frac) as usize % size;
            let doc = DocumentText::from_normalized(UNIT, text).unwrap();
            let chunks = chunk(&doc, size, overlap).unwrap();
            prop_assert_eq!(stitch(&chunks), doc.text.clone());
            for (i, c) in chunks.iter().enumerate() {
                prop_assert_eq!(c.ordinal as usize, i);
                if i + 1 < chunks.len() {
                    prop_assert!(c.token_estimate <= size);
                }
            }
            for pair in chunks.windows(2) {
                let prev: Vec<char> = pair[0].text.chars().collect();
                let next: String = pair[1].text.chars().take(pair[1].overlap_chars).collect();
                let tail: String = prev[prev.len() - pair[1].overlap_chars..].iter().collect();
                prop_assert_eq!(tail, next);
            }
        }

        #[test]
        fn larger_windows_never_add_chunks(text in arb_text(), size in 2usize..30, grow in 1usize..30, overlap in 0usize..2) {
            let doc = DocumentText::from_normalized(UNIT, text).unwrap();
            let small = chunk(&doc, size, overlap).unwrap().len();
            let large = chunk(&doc, size + grow, overlap).unwrap().len();
            prop_assert!(large <= small);
        }

        #[test]
        fn normalization_is_idempotent(raw in "\\PC{0,200}") {
            let once = normalize(&raw);
            prop_assert_eq!(normalize(&once), once.clone());
            prop_assert!(!once.chars().any(|c| c.is_control()));
        }
    }
}
