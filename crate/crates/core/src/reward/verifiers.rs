//! Domain verifiers behind the dispatcher.

use serde::{Deserialize, Serialize};

use crate::judge::{normalize_text, JudgeClient};

use super::bbox::{iou, BBox};
use super::numeric::{has_unit_token, numeric_equivalent, parse_pair};
use super::{Domain, RewardRequest, RewardResult, VerdictSource};

fn exact_match(candidate: &str, reference: &str) -> bool {
    normalize_text(candidate) == normalize_text(reference)
}

/// Ask the judge; on transport failure degrade to exact matching with
/// `source = fallback` and a diagnostic noting the degradation.
fn judge_or_fallback(req: &RewardRequest, judge: &dyn JudgeClient, binary: bool) -> RewardResult {
    match judge.judge(&req.question, &req.reference, &req.candidate, req.domain.as_str()) {
        Ok(verdict) => RewardResult {
            score: if verdict.equivalent { 1.0 } else { 0.0 },
            binary,
            source: VerdictSource::Judge,
            diagnostic: format!("judge confidence {:.3}", verdict.confidence),
        },
        Err(e) => RewardResult {
            score: if exact_match(&req.candidate, &req.reference) {
                1.0
            } else {
                0.0
            },
            binary,
            source: VerdictSource::Fallback,
            diagnostic: format!("judge degraded to exact match: {e}"),
        },
    }
}

/// STEM verifier (math, physics, chemistry): numeric path first, then
/// normalized exact match, then the judge. Physics and chemistry route to the
/// judge whenever a unit token is detected in the reference or candidate.
pub fn verify_math(req: &RewardRequest, judge: &dyn JudgeClient, rtol: f64) -> RewardResult {
    let units_first = matches!(req.domain, Domain::Physics | Domain::Chemistry)
        && (has_unit_token(&req.reference) || has_unit_token(&req.candidate));
    if units_first {
        return judge_or_fallback(req, judge, true);
    }
    if parse_pair(&req.candidate, &req.reference).is_some() {
        let eq = numeric_equivalent(&req.candidate, &req.reference, rtol);
        return RewardResult::rule(
            if eq { 1.0 } else { 0.0 },
            true,
            format!("numeric match at rtol {rtol}"),
        );
    }
    if exact_match(&req.candidate, &req.reference) {
        return RewardResult::rule(1.0, true, "exact match");
    }
    judge_or_fallback(req, judge, true)
}

/// Character-level Levenshtein distance over Unicode scalar values.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let substitute = prev[j] + usize::from(ca != cb);
            cur[j + 1] = substitute.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Continuous OCR reward: 1 - d_edit(ans, gt) / max(|ans|, |gt|).
pub fn verify_ocr(candidate: &str, reference: &str) -> RewardResult {
    let d = edit_distance(candidate, reference);
    let longest = candidate.chars().count().max(reference.chars().count());
    let score = if longest == 0 {
        1.0
    } else {
        1.0 - d as f64 / longest as f64
    };
    RewardResult::rule(score, false, format!("edit distance {d} over max len {longest}"))
}

/// Trimmed 4-digit integer in [1000, 2100].
fn year_like(s: &str) -> Option<u32> {
    let t = s.trim();
    if t.len() == 4 && t.chars().all(|c| c.is_ascii_digit()) {
        let v: u32 = t.parse().ok()?;
        (1000..=2100).contains(&v).then_some(v)
    } else {
        None
    }
}

/// Chart verifier: numeric path with the chart tolerance, except year-like
/// values which require exact integer equality; textual path is exact match
/// then judge.
pub fn verify_chart(req: &RewardRequest, judge: &dyn JudgeClient, rtol: f64) -> RewardResult {
    if let (Some(cy), Some(ry)) = (year_like(&req.candidate), year_like(&req.reference)) {
        return RewardResult::rule(
            if cy == ry { 1.0 } else { 0.0 },
            true,
            "year rule: exact integer equality",
        );
    }
    verify_math(req, judge, rtol)
}

/// Non-STEM verifier: numeric-or-exact first for vqa/spatial/video,
/// judge-first for long_document/geoguess.
pub fn verify_generic(req: &RewardRequest, judge: &dyn JudgeClient, rtol: f64) -> RewardResult {
    let binary = req.domain.is_binary();
    match req.domain {
        Domain::LongDocument | Domain::Geoguess => judge_or_fallback(req, judge, binary),
        _ => {
            if parse_pair(&req.candidate, &req.reference).is_some() {
                let eq = numeric_equivalent(&req.candidate, &req.reference, rtol);
                return RewardResult::rule(
                    if eq { 1.0 } else { 0.0 },
                    binary,
                    format!("numeric match at rtol {rtol}"),
                );
            }
            if exact_match(&req.candidate, &req.reference) {
                return RewardResult::rule(1.0, binary, "exact match");
            }
            judge_or_fallback(req, judge, binary)
        }
    }
}

/// One GUI action: a type, an optional target box, an optional text payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<String>,
    /// Target as [x1, y1, x2, y2].
    #[serde(default, skip_serializing_if = "Option::is_none", rename = "box")]
    pub bbox: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

/// GUI sub-task, inferred from the shape of the reference record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GuiSubtask {
    ActionPrediction,
    Grounding,
    Qa,
}

impl GuiSubtask {
    pub fn infer(gt: &ActionRecord) -> Self {
        if gt.action.is_some() {
            GuiSubtask::ActionPrediction
        } else if gt.bbox.is_some() {
            GuiSubtask::Grounding
        } else {
            GuiSubtask::Qa
        }
    }
}

fn record_box(r: &ActionRecord) -> Option<BBox<f64>> {
    r.bbox.and_then(|q| BBox::from_corners(q).ok())
}

fn boxes_agree(pred: &ActionRecord, gt: &ActionRecord, tau: f64) -> bool {
    match (record_box(pred), record_box(gt)) {
        (None, None) => pred.bbox.is_none() && gt.bbox.is_none(),
        (Some(p), Some(g)) => iou(&p, &g) >= tau,
        _ => false,
    }
}

/// GUI-agent verifier. Action prediction requires the action type to match
/// exactly, boxes to agree by IoU >= tau (or both be absent), and text
/// payloads to match exactly when present; grounding is the IoU threshold
/// alone; QA is exact match then judge.
pub fn verify_gui_agent(
    pred: &ActionRecord,
    gt: &ActionRecord,
    tau: f64,
    judge: &dyn JudgeClient,
    question: &str,
) -> RewardResult {
    match GuiSubtask::infer(gt) {
        GuiSubtask::ActionPrediction => {
            let action_ok = match (&pred.action, &gt.action) {
                (Some(p), Some(g)) => p.trim() == g.trim(),
                _ => false,
            };
            let text_ok = match (&pred.text, &gt.text) {
                (None, None) => true,
                (Some(p), Some(g)) => p.trim() == g.trim(),
                _ => false,
            };
            let ok = action_ok && text_ok && boxes_agree(pred, gt, tau);
            RewardResult::rule(
                if ok { 1.0 } else { 0.0 },
                false,
                format!("action prediction: action_ok={action_ok} text_ok={text_ok}"),
            )
        }
        GuiSubtask::Grounding => {
            let ok = boxes_agree(pred, gt, tau);
            RewardResult::rule(if ok { 1.0 } else { 0.0 }, false, "gui grounding by iou")
        }
        GuiSubtask::Qa => {
            let reference = gt.text.clone().unwrap_or_default();
            let candidate = pred.text.clone().unwrap_or_default();
            if !reference.is_empty() && exact_match(&candidate, &reference) {
                return RewardResult::rule(1.0, false, "gui qa exact match");
            }
            let req = RewardRequest {
                domain: Domain::GuiAgent,
                question: question.to_string(),
                reference,
                candidate,
                verifiable: true,
                response: None,
            };
            judge_or_fallback(&req, judge, false)
        }
    }
}
