//! Structured-response parsing and format/style checks.
//!
//! Responses follow the template `<think>{think}</think><answer>{answer}</answer>`,
//! with a variant where the answer tags are absent and everything after
//! `</think>` is the answer. The final answer of a verifiable task is wrapped
//! in a single `<|begin_of_box|>…<|end_of_box|>` span.
//!
//! The special-token strings are fixed byte sequences (configuration
//! constants, not user-configurable) so fixtures stay bit-exact.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const THINK_OPEN: &str = "<think>";
pub const THINK_CLOSE: &str = "</think>";
pub const ANSWER_OPEN: &str = "<answer>";
pub const ANSWER_CLOSE: &str = "</answer>";
pub const BOX_OPEN: &str = "<|begin_of_box|>";
pub const BOX_CLOSE: &str = "<|end_of_box|>";

const STRUCTURAL_TAGS: [&str; 4] = [THINK_OPEN, THINK_CLOSE, ANSWER_OPEN, ANSWER_CLOSE];

/// Whether the generator was run with reasoning enabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseMode {
    Thinking,
    /// Think content must be empty (the `/nothink` regime).
    NonThinking,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("missing </think> close tag")]
    MissingThinkClose,
    #[error("tag order violation: {0}")]
    TagOrderViolation(String),
    #[error("empty answer content")]
    EmptyAnswer,
    #[error("non-empty think content in non-thinking mode")]
    NonEmptyThink,
    #[error("more than one boxed span")]
    MultipleBoxes,
    #[error("unbalanced box markers")]
    UnbalancedBoxMarkers,
}

/// A parsed response, split into its structural segments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuredResponse {
    pub raw_text: String,
    pub think_content: String,
    pub answer_content: String,
    /// Content of the single well-formed boxed span, if any. Malformed
    /// markers leave this `None`; [`format_gate`] rejects them.
    pub boxed_span: Option<String>,
    /// True when the think section was closed by forced insertion rather
    /// than by the generator.
    pub truncated: bool,
    /// Surrogate token count (Unicode scalar values of the raw text).
    pub token_length: usize,
}

impl StructuredResponse {
    /// Canonical tagged rendering of the segments.
    pub fn render(&self) -> String {
        render_tagged(&self.think_content, &self.answer_content)
    }
}

/// Render the tagged template.
pub fn render_tagged(think: &str, answer: &str) -> String {
    format!("{THINK_OPEN}{think}{THINK_CLOSE}{ANSWER_OPEN}{answer}{ANSWER_CLOSE}")
}

/// Render the variant without answer tags.
pub fn render_bare(think: &str, answer: &str) -> String {
    format!("{THINK_OPEN}{think}{THINK_CLOSE}{answer}")
}

/// Wrap a final answer in box markers.
pub fn render_boxed(value: &str) -> String {
    format!("{BOX_OPEN}{value}{BOX_CLOSE}")
}

fn contains_structural_tag(s: &str) -> bool {
    STRUCTURAL_TAGS.iter().any(|t| s.contains(t))
}

/// True when either box marker occurs in the text.
pub fn contains_box_markers(s: &str) -> bool {
    s.contains(BOX_OPEN) || s.contains(BOX_CLOSE)
}

/// Parse a raw response into think/answer segments.
///
/// Text before `<think>` is rejected as a [`ParseError::TagOrderViolation`];
/// in [`ParseMode::NonThinking`] the think section may be absent entirely.
/// Box-marker anomalies do not fail the parse (`boxed_span` is left `None`);
/// they are caught by [`format_gate`].
pub fn parse_response(raw: &str, mode: ParseMode) -> Result<StructuredResponse, ParseError> {
    let (think, rest) = if let Some(after_open) = raw.strip_prefix(THINK_OPEN) {
        let close = after_open
            .find(THINK_CLOSE)
            .ok_or(ParseError::MissingThinkClose)?;
        let think = &after_open[..close];
        if contains_structural_tag(think) {
            return Err(ParseError::TagOrderViolation(
                "structural tag inside think content".into(),
            ));
        }
        (think, &after_open[close + THINK_CLOSE.len()..])
    } else {
        match mode {
            ParseMode::Thinking => {
                if raw.contains(THINK_OPEN) || raw.contains(THINK_CLOSE) {
                    return Err(ParseError::TagOrderViolation(
                        "text before <think>".into(),
                    ));
                }
                return Err(ParseError::MissingThinkClose);
            }
            // Bare answers are accepted when thinking is disabled.
            ParseMode::NonThinking => ("", raw),
        }
    };

    if mode == ParseMode::NonThinking && !think.trim().is_empty() {
        return Err(ParseError::NonEmptyThink);
    }

    let rest = rest.trim();
    let answer = if let Some(after_open) = rest.strip_prefix(ANSWER_OPEN) {
        let inner = after_open
            .strip_suffix(ANSWER_CLOSE)
            .ok_or_else(|| ParseError::TagOrderViolation("unclosed <answer>".into()))?;
        if contains_structural_tag(inner) {
            return Err(ParseError::TagOrderViolation(
                "structural tag inside answer content".into(),
            ));
        }
        inner
    } else {
        if contains_structural_tag(rest) {
            return Err(ParseError::TagOrderViolation(
                "structural tag outside its section".into(),
            ));
        }
        rest
    };

    if answer.trim().is_empty() {
        return Err(ParseError::EmptyAnswer);
    }

    Ok(StructuredResponse {
        raw_text: raw.to_string(),
        think_content: think.to_string(),
        answer_content: answer.to_string(),
        boxed_span: extract_boxed(answer).ok().flatten(),
        truncated: false,
        token_length: raw.chars().count(),
    })
}

/// Extract the text between the single begin/end box marker pair,
/// whitespace-trimmed. `Ok(None)` when no markers occur.
pub fn extract_boxed(answer: &str) -> Result<Option<String>, ParseError> {
    let begins: Vec<usize> = answer.match_indices(BOX_OPEN).map(|(i, _)| i).collect();
    let ends: Vec<usize> = answer.match_indices(BOX_CLOSE).map(|(i, _)| i).collect();
    match (begins.len(), ends.len()) {
        (0, 0) => Ok(None),
        (1, 1) if begins[0] < ends[0] => {
            let inner = &answer[begins[0] + BOX_OPEN.len()..ends[0]];
            Ok(Some(inner.trim().to_string()))
        }
        (1, 1) => Err(ParseError::UnbalancedBoxMarkers),
        (b, e) if b != e => Err(ParseError::UnbalancedBoxMarkers),
        _ => Err(ParseError::MultipleBoxes),
    }
}

/// Thresholds for the style penalty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StyleThresholds {
    /// Mixed CJK/Latin pair ratio above which the penalty triggers.
    pub mixed_script_max: f64,
    /// Repeated-block fraction above which the penalty triggers.
    pub repeat_fraction_max: f64,
    /// Repeated blocks shorter than this never trigger the penalty.
    pub min_repeat_block: usize,
}

impl Default for StyleThresholds {
    fn default() -> Self {
        Self {
            mixed_script_max: 0.3,
            repeat_fraction_max: 0.3,
            min_repeat_block: 8,
        }
    }
}

/// Pure style measurements over a response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleReport {
    /// Fraction of adjacent CJK/Latin letter pairs whose scripts differ
    /// (digits, whitespace and punctuation are excluded from pair counting).
    pub mixed_script_ratio: f64,
    /// Length of the longest block occurring >= 3 times non-overlapping,
    /// divided by segment length (worst segment).
    pub max_repeat_fraction: f64,
    /// Length in chars of that longest repeated block.
    pub longest_repeat_len: usize,
    /// Box markers occur in the answer content.
    pub has_box_markers: bool,
    /// Whether the thresholds fired on this response.
    pub triggered: bool,
}

/// Run the style checks over both think and answer content.
pub fn style_check(resp: &StructuredResponse, thresholds: &StyleThresholds) -> StyleReport {
    style_check_text(&resp.think_content, &resp.answer_content, thresholds)
}

/// Style checks on bare segments, for callers without a full parse.
pub fn style_check_text(think: &str, answer: &str, thresholds: &StyleThresholds) -> StyleReport {
    let (d1, c1) = script_pair_counts(think);
    let (d2, c2) = script_pair_counts(answer);
    let counted = c1 + c2;
    let mixed_script_ratio = if counted == 0 {
        0.0
    } else {
        (d1 + d2) as f64 / counted as f64
    };

    let mut max_repeat_fraction = 0.0f64;
    let mut longest_repeat_len = 0usize;
    for seg in [think, answer] {
        let chars: Vec<char> = seg.chars().collect();
        if chars.is_empty() {
            continue;
        }
        let len = longest_repeated_block(&chars, 3);
        let frac = len as f64 / chars.len() as f64;
        if frac > max_repeat_fraction {
            max_repeat_fraction = frac;
            longest_repeat_len = len;
        }
    }

    let triggered = mixed_script_ratio > thresholds.mixed_script_max
        || (longest_repeat_len >= thresholds.min_repeat_block
            && max_repeat_fraction > thresholds.repeat_fraction_max);

    StyleReport {
        mixed_script_ratio,
        max_repeat_fraction,
        longest_repeat_len,
        has_box_markers: contains_box_markers(answer),
        triggered,
    }
}

/// Structure/box gate: `false` maps to the minimal reward upstream.
///
/// Fails when the box markers are malformed (unbalanced or multiple spans)
/// or when a non-verifiable response carries box markers in its answer.
pub fn format_gate(resp: &StructuredResponse, verifiable: bool) -> bool {
    if extract_boxed(&resp.answer_content).is_err() {
        return false;
    }
    !(!verifiable && contains_box_markers(&resp.answer_content))
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Script {
    Latin,
    Cjk,
}

fn classify_script(c: char) -> Option<Script> {
    if c.is_ascii_alphabetic() {
        Some(Script::Latin)
    } else if ('\u{4E00}'..='\u{9FFF}').contains(&c) {
        Some(Script::Cjk)
    } else {
        None
    }
}

/// (differing pairs, counted pairs) over the filtered letter sequence.
fn script_pair_counts(s: &str) -> (usize, usize) {
    let mut differing = 0;
    let mut counted = 0;
    let mut prev: Option<Script> = None;
    for c in s.chars() {
        let Some(cur) = classify_script(c) else {
            continue;
        };
        if let Some(p) = prev {
            counted += 1;
            if p != cur {
                differing += 1;
            }
        }
        prev = Some(cur);
    }
    (differing, counted)
}

/// Length of the longest block with at least `min_occ` non-overlapping
/// occurrences. Binary search over the block length; for a fixed length,
/// windows are grouped by content and counted greedily left-to-right.
fn longest_repeated_block(chars: &[char], min_occ: usize) -> usize {
    let n = chars.len();
    if n < min_occ {
        return 0;
    }
    let (mut lo, mut hi) = (1usize, n / min_occ);
    let mut best = 0;
    while lo <= hi {
        let mid = lo + (hi - lo) / 2;
        if has_repeated_block(chars, mid, min_occ) {
            best = mid;
            lo = mid + 1;
        } else {
            hi = mid - 1;
        }
    }
    best
}

fn has_repeated_block(chars: &[char], len: usize, min_occ: usize) -> bool {
    debug_assert!(len >= 1);
    // (greedy count, next non-overlapping start) per distinct window
    let mut seen: HashMap<&[char], (usize, usize)> = HashMap::new();
    for start in 0..=(chars.len() - len) {
        let window = &chars[start..start + len];
        let entry = seen.entry(window).or_insert((0, 0));
        if start >= entry.1 {
            entry.0 += 1;
            entry.1 = start + len;
            if entry.0 >= min_occ {
                return true;
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_tagged_template() {
        let r = parse_response("<think>x</think><answer>y</answer>", ParseMode::Thinking).unwrap();
        assert_eq!(r.think_content, "x");
        assert_eq!(r.answer_content, "y");
        assert!(!r.truncated);
    }

    #[test]
    fn parses_bare_answer_variant() {
        let r = parse_response("<think>x</think>y", ParseMode::Thinking).unwrap();
        assert_eq!(r.think_content, "x");
        assert_eq!(r.answer_content, "y");
    }

    #[test]
    fn rejects_reordered_tags() {
        let err = parse_response("<answer>y</answer><think>x</think>", ParseMode::Thinking)
            .unwrap_err();
        assert!(matches!(err, ParseError::TagOrderViolation(_)));
    }

    #[test]
    fn rejects_text_before_think() {
        let err = parse_response("oops<think>x</think>y", ParseMode::Thinking).unwrap_err();
        assert!(matches!(err, ParseError::TagOrderViolation(_)));
    }

    #[test]
    fn rejects_missing_think_close() {
        assert_eq!(
            parse_response("<think>x", ParseMode::Thinking).unwrap_err(),
            ParseError::MissingThinkClose
        );
    }

    #[test]
    fn rejects_nested_think() {
        let err =
            parse_response("<think>a<think>b</think>c</think>x", ParseMode::Thinking).unwrap_err();
        assert!(matches!(err, ParseError::TagOrderViolation(_)));
    }

    #[test]
    fn rejects_empty_answer() {
        assert_eq!(
            parse_response("<think>x</think><answer> </answer>", ParseMode::Thinking).unwrap_err(),
            ParseError::EmptyAnswer
        );
        assert_eq!(
            parse_response("<think>x</think>", ParseMode::Thinking).unwrap_err(),
            ParseError::EmptyAnswer
        );
    }

    #[test]
    fn rejects_trailing_text_after_answer() {
        let err = parse_response(
            "<think>x</think><answer>y</answer>trailing",
            ParseMode::Thinking,
        )
        .unwrap_err();
        assert!(matches!(err, ParseError::TagOrderViolation(_)));
    }

    #[test]
    fn non_thinking_requires_empty_think() {
        let r = parse_response("<think></think><answer>y</answer>", ParseMode::NonThinking)
            .unwrap();
        assert_eq!(r.think_content, "");
        assert_eq!(r.answer_content, "y");

        assert_eq!(
            parse_response("<think>x</think>y", ParseMode::NonThinking).unwrap_err(),
            ParseError::NonEmptyThink
        );

        // Bare answers are fine when thinking is off.
        let r = parse_response("just the answer", ParseMode::NonThinking).unwrap();
        assert_eq!(r.think_content, "");
        assert_eq!(r.answer_content, "just the answer");
    }

    #[test]
    fn whitespace_between_sections_is_tolerated() {
        let r = parse_response(
            "<think> x </think> <answer> y </answer>",
            ParseMode::Thinking,
        )
        .unwrap();
        assert_eq!(r.think_content, " x ");
        assert_eq!(r.answer_content, " y ");
    }

    #[test]
    fn extract_single_box() {
        let got = extract_boxed("The answer is <|begin_of_box|>42<|end_of_box|>.").unwrap();
        assert_eq!(got.as_deref(), Some("42"));
    }

    #[test]
    fn extract_no_box() {
        assert_eq!(extract_boxed("no box here").unwrap(), None);
    }

    #[test]
    fn extract_rejects_multiple_boxes() {
        let err = extract_boxed(
            "<|begin_of_box|>1<|end_of_box|> <|begin_of_box|>2<|end_of_box|>",
        )
        .unwrap_err();
        assert_eq!(err, ParseError::MultipleBoxes);
    }

    #[test]
    fn extract_rejects_unbalanced_markers() {
        assert_eq!(
            extract_boxed("<|begin_of_box|>1").unwrap_err(),
            ParseError::UnbalancedBoxMarkers
        );
        assert_eq!(
            extract_boxed("<|end_of_box|>1<|begin_of_box|>").unwrap_err(),
            ParseError::UnbalancedBoxMarkers
        );
    }

    #[test]
    fn boxed_span_is_populated_from_answer() {
        let raw = "<think>t</think><answer>so <|begin_of_box|>7<|end_of_box|></answer>";
        let r = parse_response(raw, ParseMode::Thinking).unwrap();
        assert_eq!(r.boxed_span.as_deref(), Some("7"));
    }

    #[test]
    fn box_markers_in_think_are_ignored() {
        let raw = "<think>note <|begin_of_box|>x<|end_of_box|></think><answer>y</answer>";
        let r = parse_response(raw, ParseMode::Thinking).unwrap();
        assert_eq!(r.boxed_span, None);
    }

    fn resp_with(think: &str, answer: &str) -> StructuredResponse {
        parse_response(&render_tagged(think, answer), ParseMode::Thinking).unwrap()
    }

    #[test]
    fn style_all_latin_has_zero_mixed_ratio() {
        let r = style_check(&resp_with("some thoughts", "plain latin text"), &StyleThresholds::default());
        assert_eq!(r.mixed_script_ratio, 0.0);
        assert!(!r.triggered);
    }

    #[test]
    fn style_alternating_scripts_ratio_is_one() {
        // 10 chars alternating one CJK and one Latin: all 9 counted pairs differ.
        let alternating = "\u{4E00}a\u{4E01}b\u{4E02}c\u{4E03}d\u{4E04}e";
        assert_eq!(alternating.chars().count(), 10);
        let r = style_check(&resp_with("", alternating), &StyleThresholds::default());
        assert_eq!(r.mixed_script_ratio, 1.0);
    }

    #[test]
    fn style_repeat_fraction_abcabcabc() {
        // "abc" occurs 3 times non-overlapping; 3/9 of the segment.
        let r = style_check(&resp_with("", "abcabcabc"), &StyleThresholds::default());
        assert!((r.max_repeat_fraction - 3.0 / 9.0).abs() < 1e-12);
        assert_eq!(r.longest_repeat_len, 3);
        // Below the minimum block length, so no trigger.
        assert!(!r.triggered);
    }

    #[test]
    fn style_triggers_on_long_repeats() {
        // Six periods of length 18: the 36-char double period fits 3
        // non-overlapping times, giving fraction 1/3 > 0.3.
        let block = "lorem ipsum dolor ";
        let text = block.repeat(6);
        let r = style_check(&resp_with("", &text), &StyleThresholds::default());
        assert_eq!(r.longest_repeat_len, 36);
        assert!(r.max_repeat_fraction > 0.3);
        assert!(r.triggered);
    }

    #[test]
    fn format_gate_penalizes_boxed_nonverifiable() {
        let boxed = resp_with("t", "x <|begin_of_box|>1<|end_of_box|>");
        assert!(!format_gate(&boxed, false));
        assert!(format_gate(&boxed, true));
        let plain = resp_with("t", "no markers");
        assert!(format_gate(&plain, false));
    }

    #[test]
    fn format_gate_rejects_malformed_markers() {
        let raw = render_tagged("t", "<|begin_of_box|>1<|end_of_box|><|begin_of_box|>2<|end_of_box|>");
        let resp = parse_response(&raw, ParseMode::Thinking).unwrap();
        assert_eq!(resp.boxed_span, None);
        assert!(!format_gate(&resp, true));
    }

    /// Exhaustive-scan oracle for the repeated-block length.
    fn repeat_oracle(chars: &[char], min_occ: usize) -> usize {
        let n = chars.len();
        let mut best = 0;
        for len in 1..=n {
            'starts: for start in 0..=(n - len) {
                let block = &chars[start..start + len];
                let mut count = 0;
                let mut pos = 0;
                while pos + len <= n {
                    if &chars[pos..pos + len] == block {
                        count += 1;
                        pos += len;
                    } else {
                        pos += 1;
                    }
                }
                if count >= min_occ {
                    best = len;
                    break 'starts;
                }
            }
        }
        best
    }

    proptest! {
        #[test]
        fn roundtrip_tagged(think in "[a-z0-9 ]{0,24}", answer in "[a-z0-9 ]{1,24}") {
            prop_assume!(!answer.trim().is_empty());
            let r = parse_response(&render_tagged(&think, &answer), ParseMode::Thinking).unwrap();
            prop_assert_eq!(r.think_content, think);
            prop_assert_eq!(r.answer_content, answer);
        }

        #[test]
        fn roundtrip_bare(think in "[a-z0-9 ]{0,24}", answer in "[a-z0-9]{1}[a-z0-9 ]{0,22}[a-z0-9]{1}") {
            let r = parse_response(&render_bare(&think, &answer), ParseMode::Thinking).unwrap();
            prop_assert_eq!(r.think_content, think);
            prop_assert_eq!(r.answer_content, answer);
        }

        #[test]
        fn roundtrip_with_boxed_span(value in "[a-z0-9]{1,12}") {
            let answer = format!("result: {}", render_boxed(&value));
            let r = parse_response(&render_tagged("t", &answer), ParseMode::Thinking).unwrap();
            prop_assert_eq!(r.boxed_span.as_deref(), Some(value.as_str()));
        }

        /// A value comes back iff the marker counts are exactly one balanced
        /// pair, checked against a state-machine oracle over random marker
        /// placements.
        #[test]
        fn box_extraction_matches_grammar_oracle(parts in proptest::collection::vec(0u8..4, 0..8)) {
            let mut s = String::new();
            for p in &parts {
                match p {
                    0 => s.push_str("txt "),
                    1 => s.push_str(BOX_OPEN),
                    2 => s.push_str(BOX_CLOSE),
                    _ => s.push_str("42"),
                }
            }
            // Oracle: scan left to right, tracking span state.
            let mut opens = 0usize;
            let mut closes = 0usize;
            let mut complete = 0usize;
            let mut open_pending = false;
            let mut idx = 0;
            let bytes = s.as_bytes();
            while idx < bytes.len() {
                if s[idx..].starts_with(BOX_OPEN) {
                    opens += 1;
                    open_pending = true;
                    idx += BOX_OPEN.len();
                } else if s[idx..].starts_with(BOX_CLOSE) {
                    closes += 1;
                    if open_pending {
                        complete += 1;
                        open_pending = false;
                    }
                    idx += BOX_CLOSE.len();
                } else {
                    idx += 1;
                }
            }
            let got = extract_boxed(&s);
            if opens == 0 && closes == 0 {
                prop_assert_eq!(got.unwrap(), None);
            } else if opens == 1 && closes == 1 && complete == 1 {
                prop_assert!(got.unwrap().is_some());
            } else {
                prop_assert!(got.is_err());
            }
        }

        #[test]
        fn repeat_scan_matches_exhaustive_oracle(s in "[ab ]{0,32}") {
            let chars: Vec<char> = s.chars().collect();
            prop_assert_eq!(longest_repeated_block(&chars, 3), repeat_oracle(&chars, 3));
        }

        #[test]
        fn style_check_is_pure(s in "[a-z\u{4E00}-\u{4E20} ]{0,40}") {
            let resp = resp_with("t", if s.trim().is_empty() { "x" } else { &s });
            let a = style_check(&resp, &StyleThresholds::default());
            let b = style_check(&resp, &StyleThresholds::default());
            prop_assert_eq!(a, b);
        }
    }
}
