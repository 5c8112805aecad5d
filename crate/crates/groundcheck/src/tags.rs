//! The tagged-response grammar: `<think>…</think><reason>…</reason>
//! <answer>…</answer>`, in that order. Parsing is total — arbitrary text
//! yields a [`TaggedResponse`] with `well_formed` reflecting the grammar
//! and whatever spans could be recovered.

use serde::{Deserialize, Serialize};

pub const THINK_OPEN: &str = "<think>";
pub const THINK_CLOSE: &str = "</think>";
pub const REASON_OPEN: &str = "<reason>";
pub const REASON_CLOSE: &str = "</reason>";
pub const ANSWER_OPEN: &str = "<answer>";
pub const ANSWER_CLOSE: &str = "</answer>";

/// A parsed detection response. `think` carries the chain-of-thought,
/// `reason` the user-facing explanation, `answer_text` the raw final
/// answer span.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedResponse {
    pub think: String,
    pub reason: String,
    pub answer_text: String,
    /// Present iff `answer_text` normalizes to "Yes" (1) or "No" (0).
    pub answer_label: Option<u8>,
    pub well_formed: bool,
}

impl TaggedResponse {
    /// Emits the three tagged spans in canonical order. For a well-formed
    /// response this round-trips through [`parse_tagged_response`].
    pub fn serialize_tagged(&self) -> String {
        format!(
            "{THINK_OPEN}{}{THINK_CLOSE}{REASON_OPEN}{}{REASON_CLOSE}{ANSWER_OPEN}{}{ANSWER_CLOSE}",
            self.think, self.reason, self.answer_text
        )
    }
}

/// Maps a final answer span to a binary label: "Yes" → 1, "No" → 0 after
/// trimming surrounding whitespace/punctuation and case-folding. Anything
/// else is None.
pub fn normalize_answer(answer_text: &str) -> Option<u8> {
    let stripped = answer_text
        .trim()
        .trim_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace());
    if stripped.eq_ignore_ascii_case("yes") {
        Some(1)
    } else if stripped.eq_ignore_ascii_case("no") {
        Some(0)
    } else {
        None
    }
}

fn count_occurrences(haystack: &str, needle: &str) -> usize {
    haystack.match_indices(needle).count()
}

/// First `open…close` span: the inner text between the first occurrence
/// of `open` and the first occurrence of `close` after it.
fn first_span(raw: &str, open: &str, close: &str) -> Option<(usize, usize, String)> {
    let start = raw.find(open)?;
    let inner_start = start + open.len();
    let rel_end = raw[inner_start..].find(close)?;
    let end = inner_start + rel_end;
    Some((start, end + close.len(), raw[inner_start..end].to_string()))
}

/// Parses arbitrary text against the tag grammar. Never fails: malformed
/// input yields `well_formed == false` with every recoverable span
/// populated (first well-nested occurrence wins) and the rest empty.
pub fn parse_tagged_response(raw: &str) -> TaggedResponse {
    let think = first_span(raw, THINK_OPEN, THINK_CLOSE);
    let reason = first_span(raw, REASON_OPEN, REASON_CLOSE);
    let answer = first_span(raw, ANSWER_OPEN, ANSWER_CLOSE);

    let exactly_one = [
        (THINK_OPEN, THINK_CLOSE),
        (REASON_OPEN, REASON_CLOSE),
        (ANSWER_OPEN, ANSWER_CLOSE),
    ]
    .iter()
    .all(|(open, close)| {
        count_occurrences(raw, open) == 1 && count_occurrences(raw, close) == 1
    });

    let well_formed = exactly_one
        && match (&think, &reason, &answer) {
            (Some((t0, t1, _)), Some((r0, r1, _)), Some((a0, a1, _))) => {
                t1 <= r0 && r1 <= a0 && t0 < t1 && r0 < r1 && a0 < a1
            }
            _ => false,
        };

    let answer_text = answer.map(|(_, _, s)| s).unwrap_or_default();
    TaggedResponse {
        think: think.map(|(_, _, s)| s).unwrap_or_default(),
        reason: reason.map(|(_, _, s)| s).unwrap_or_default(),
        answer_label: normalize_answer(&answer_text),
        answer_text,
        well_formed,
    }
}
