//! Multi-domain reward system: per-domain verifiers sharing common checks
//! (format gate, style penalty, boxed extraction, exact matching), rule-based
//! paths first, and a pluggable semantic judge as fallback.

pub mod bbox;
pub mod numeric;
mod verifiers;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::judge::JudgeClient;
use crate::parser::{
    contains_box_markers, extract_boxed, format_gate, style_check, style_check_text,
    StructuredResponse, StyleThresholds,
};

pub use bbox::{iou, verify_grounding, verify_grounding_with, BBox, MatchStrategy};
pub use numeric::{has_unit_token, numeric_equivalent, parse_numeric};
pub use verifiers::{
    edit_distance, verify_chart, verify_generic, verify_gui_agent, verify_math, verify_ocr,
    ActionRecord, GuiSubtask,
};

#[derive(Debug, Error)]
pub enum RewardError {
    #[error("unknown domain: {0}")]
    UnknownDomain(String),
    #[error("malformed box: {0}")]
    MalformedBox(String),
    #[error("ground-truth box list is empty")]
    EmptyGroundTruth,
    #[error("iou threshold {0} outside (0, 1)")]
    InvalidThreshold(f64),
    #[error("invalid reference answer: {0}")]
    InvalidReference(String),
}

/// The twelve verifier domains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Math,
    Physics,
    Chemistry,
    LongDocument,
    Chart,
    Ocr,
    Vqa,
    Geoguess,
    Grounding,
    Spatial,
    GuiAgent,
    Video,
}

impl Domain {
    pub const ALL: [Domain; 12] = [
        Domain::Math,
        Domain::Physics,
        Domain::Chemistry,
        Domain::LongDocument,
        Domain::Chart,
        Domain::Ocr,
        Domain::Vqa,
        Domain::Geoguess,
        Domain::Grounding,
        Domain::Spatial,
        Domain::GuiAgent,
        Domain::Video,
    ];

    /// Whether the domain is scored 0/1 rather than continuously.
    pub fn is_binary(self) -> bool {
        !matches!(
            self,
            Domain::Ocr | Domain::Geoguess | Domain::Grounding | Domain::GuiAgent
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Math => "math",
            Domain::Physics => "physics",
            Domain::Chemistry => "chemistry",
            Domain::LongDocument => "long_document",
            Domain::Chart => "chart",
            Domain::Ocr => "ocr",
            Domain::Vqa => "vqa",
            Domain::Geoguess => "geoguess",
            Domain::Grounding => "grounding",
            Domain::Spatial => "spatial",
            Domain::GuiAgent => "gui_agent",
            Domain::Video => "video",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Domain {
    type Err = RewardError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Domain::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| RewardError::UnknownDomain(s.to_string()))
    }
}

/// Where a verdict came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictSource {
    Rule,
    Judge,
    /// Judge was unavailable; degraded to exact matching.
    Fallback,
}

/// A verifier verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardResult {
    /// Score in [0, 1].
    pub score: f64,
    /// Whether this domain is scored 0/1.
    pub binary: bool,
    pub source: VerdictSource,
    pub diagnostic: String,
}

impl RewardResult {
    pub(crate) fn rule(score: f64, binary: bool, diagnostic: impl Into<String>) -> Self {
        Self {
            score,
            binary,
            source: VerdictSource::Rule,
            diagnostic: diagnostic.into(),
        }
    }
}

/// One verification request. `candidate` is the already-extracted boxed span
/// (or the answer content when no box is required). When the full parsed
/// response is attached, the format gate and style checks run over it;
/// otherwise they run over the candidate text alone.
#[derive(Debug, Clone)]
pub struct RewardRequest {
    pub domain: Domain,
    pub question: String,
    pub reference: String,
    pub candidate: String,
    pub verifiable: bool,
    pub response: Option<StructuredResponse>,
}

impl RewardRequest {
    pub fn new(domain: Domain, question: &str, reference: &str, candidate: &str) -> Self {
        Self {
            domain,
            question: question.to_string(),
            reference: reference.to_string(),
            candidate: candidate.to_string(),
            verifiable: true,
            response: None,
        }
    }

    pub fn non_verifiable(mut self) -> Self {
        self.verifiable = false;
        self
    }

    pub fn with_response(mut self, response: StructuredResponse) -> Self {
        self.response = Some(response);
        self
    }
}

/// Tolerances and thresholds for the whole reward system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    pub math_rtol: f64,
    pub physics_rtol: f64,
    pub chemistry_rtol: f64,
    pub chart_rtol: f64,
    /// rtol for the numeric path of vqa/spatial/video.
    pub generic_rtol: f64,
    /// IoU threshold for grounding and GUI-agent checks.
    pub iou_tau: f64,
    pub style: StyleThresholds,
    /// Use maximum-cardinality matching instead of greedy for grounding.
    pub optimal_matching: bool,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            math_rtol: 1e-4,
            physics_rtol: 1e-4,
            chemistry_rtol: 1e-4,
            chart_rtol: 5e-3,
            generic_rtol: 1e-4,
            iou_tau: 0.5,
            style: StyleThresholds::default(),
            optimal_matching: false,
        }
    }
}

impl RewardConfig {
    fn rtol_for(&self, domain: Domain) -> f64 {
        match domain {
            Domain::Math => self.math_rtol,
            Domain::Physics => self.physics_rtol,
            Domain::Chemistry => self.chemistry_rtol,
            Domain::Chart => self.chart_rtol,
            _ => self.generic_rtol,
        }
    }

    fn match_strategy(&self) -> MatchStrategy {
        if self.optimal_matching {
            MatchStrategy::Optimal
        } else {
            MatchStrategy::Greedy
        }
    }
}

/// Parse a candidate/reference box payload: a JSON `[x1,y1,x2,y2]` or a list
/// of them.
pub fn parse_box_list(s: &str) -> Result<Vec<BBox<f64>>, RewardError> {
    let quads: Vec<[f64; 4]> = match serde_json::from_str::<Vec<[f64; 4]>>(s) {
        Ok(list) => list,
        Err(_) => {
            let single: [f64; 4] = serde_json::from_str(s)
                .map_err(|e| RewardError::MalformedBox(format!("{s:?}: {e}")))?;
            vec![single]
        }
    };
    quads.into_iter().map(BBox::from_corners).collect()
}

/// Dispatch a request to its domain verifier. The format gate and style
/// penalty run first: a gate failure or style trigger returns the minimal
/// reward before any domain verifier sees the request.
pub fn score(
    req: &RewardRequest,
    judge: &dyn JudgeClient,
    cfg: &RewardConfig,
) -> Result<RewardResult, RewardError> {
    let gate_ok = match &req.response {
        Some(resp) => format_gate(resp, req.verifiable),
        None => {
            extract_boxed(&req.candidate).is_ok()
                && !(!req.verifiable && contains_box_markers(&req.candidate))
        }
    };
    if !gate_ok {
        return Ok(RewardResult::rule(
            0.0,
            req.domain.is_binary(),
            "format gate failed",
        ));
    }

    let style = match &req.response {
        Some(resp) => style_check(resp, &cfg.style),
        None => style_check_text("", &req.candidate, &cfg.style),
    };
    if style.triggered {
        return Ok(RewardResult::rule(
            0.0,
            req.domain.is_binary(),
            format!(
                "style penalty: mixed_script={:.3} repeat={:.3}",
                style.mixed_script_ratio, style.max_repeat_fraction
            ),
        ));
    }

    match req.domain {
        Domain::Math | Domain::Physics | Domain::Chemistry => {
            Ok(verifiers::verify_math(req, judge, cfg.rtol_for(req.domain)))
        }
        Domain::Ocr => Ok(verifiers::verify_ocr(&req.candidate, &req.reference)),
        Domain::Chart => Ok(verifiers::verify_chart(req, judge, cfg.chart_rtol)),
        Domain::Grounding => {
            let gt = parse_box_list(&req.reference)
                .map_err(|e| RewardError::InvalidReference(e.to_string()))?;
            match parse_box_list(&req.candidate) {
                Ok(pred) => verify_grounding_with(&pred, &gt, cfg.iou_tau, cfg.match_strategy()),
                Err(e) => Ok(RewardResult::rule(
                    0.0,
                    false,
                    format!("candidate boxes unparseable: {e}"),
                )),
            }
        }
        Domain::GuiAgent => {
            let gt: ActionRecord = serde_json::from_str(&req.reference)
                .map_err(|e| RewardError::InvalidReference(format!("action record: {e}")))?;
            match serde_json::from_str::<ActionRecord>(&req.candidate) {
                Ok(pred) => Ok(verifiers::verify_gui_agent(
                    &pred,
                    &gt,
                    cfg.iou_tau,
                    judge,
                    &req.question,
                )),
                Err(e) => Ok(RewardResult::rule(
                    0.0,
                    false,
                    format!("candidate action unparseable: {e}"),
                )),
            }
        }
        Domain::Vqa | Domain::Spatial | Domain::Video | Domain::LongDocument | Domain::Geoguess => {
            Ok(verifiers::verify_generic(req, judge, cfg.generic_rtol))
        }
    }
}
