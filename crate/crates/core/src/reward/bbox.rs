//! Axis-aligned boxes, IoU, and grounding-set matching.

use crate::num::Real;

use super::{RewardError, RewardResult, VerdictSource};

/// Axis-aligned box as the quadruple [x1, y1, x2, y2] in normalized
/// [0, 1000] coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox<R: Real> {
    pub x1: R,
    pub y1: R,
    pub x2: R,
    pub y2: R,
}

impl<R: Real> BBox<R> {
    pub fn new(x1: R, y1: R, x2: R, y2: R) -> Result<Self, RewardError> {
        if !(x1 < x2 && y1 < y2)
            || !(x1.is_finite() && y1.is_finite() && x2.is_finite() && y2.is_finite())
        {
            return Err(RewardError::MalformedBox(format!(
                "[{:?},{:?},{:?},{:?}]",
                x1, y1, x2, y2
            )));
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn from_corners(q: [R; 4]) -> Result<Self, RewardError> {
        Self::new(q[0], q[1], q[2], q[3])
    }

    pub fn area(&self) -> R {
        (self.x2 - self.x1) * (self.y2 - self.y1)
    }

    fn intersection_area(&self, other: &Self) -> R {
        let w = self.x2.min(other.x2) - self.x1.max(other.x1);
        let h = self.y2.min(other.y2) - self.y1.max(other.y1);
        if w > R::zero() && h > R::zero() {
            w * h
        } else {
            R::zero()
        }
    }
}

/// Intersection over union; disjoint boxes give 0.
pub fn iou<R: Real>(a: &BBox<R>, b: &BBox<R>) -> R {
    let inter = a.intersection_area(b);
    if inter <= R::zero() {
        return R::zero();
    }
    inter / (a.area() + b.area() - inter)
}

/// How predicted boxes are matched to ground-truth boxes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MatchStrategy {
    /// Pairs taken in descending IoU order, each box used at most once.
    #[default]
    Greedy,
    /// Maximum-cardinality matching over pairs with IoU above the threshold.
    Optimal,
}

/// Fraction of ground-truth boxes matched with IoU > tau.
pub fn verify_grounding<R: Real>(
    pred: &[BBox<R>],
    gt: &[BBox<R>],
    tau: f64,
) -> Result<RewardResult, RewardError> {
    verify_grounding_with(pred, gt, tau, MatchStrategy::Greedy)
}

pub fn verify_grounding_with<R: Real>(
    pred: &[BBox<R>],
    gt: &[BBox<R>],
    tau: f64,
    strategy: MatchStrategy,
) -> Result<RewardResult, RewardError> {
    if gt.is_empty() {
        return Err(RewardError::EmptyGroundTruth);
    }
    if !(0.0 < tau && tau < 1.0) {
        return Err(RewardError::InvalidThreshold(tau));
    }
    let tau = R::lit(tau);
    let matched = match strategy {
        MatchStrategy::Greedy => greedy_match_count(pred, gt, tau),
        MatchStrategy::Optimal => optimal_match_count(pred, gt, tau),
    };
    Ok(RewardResult {
        score: matched as f64 / gt.len() as f64,
        binary: false,
        source: VerdictSource::Rule,
        diagnostic: format!("{matched}/{} boxes matched at iou > {tau:?}", gt.len()),
    })
}

/// Greedy by descending IoU. Ties are broken on box coordinates rather than
/// list positions so that scores are invariant under permutations of either
/// input list.
fn greedy_match_count<R: Real>(pred: &[BBox<R>], gt: &[BBox<R>], tau: R) -> usize {
    let mut pairs: Vec<(R, usize, usize)> = Vec::new();
    for (gi, g) in gt.iter().enumerate() {
        for (pi, p) in pred.iter().enumerate() {
            let v = iou(g, p);
            if v > tau {
                pairs.push((v, gi, pi));
            }
        }
    }
    pairs.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap()
            .then_with(|| coord_key(&gt[a.1]).partial_cmp(&coord_key(&gt[b.1])).unwrap())
            .then_with(|| coord_key(&pred[a.2]).partial_cmp(&coord_key(&pred[b.2])).unwrap())
    });
    let mut gt_used = vec![false; gt.len()];
    let mut pred_used = vec![false; pred.len()];
    let mut matched = 0;
    for (_, gi, pi) in pairs {
        if !gt_used[gi] && !pred_used[pi] {
            gt_used[gi] = true;
            pred_used[pi] = true;
            matched += 1;
        }
    }
    matched
}

fn coord_key<R: Real>(b: &BBox<R>) -> [R; 4] {
    [b.x1, b.y1, b.x2, b.y2]
}

/// Maximum bipartite matching (Kuhn's augmenting paths) over pairs with
/// IoU > tau.
fn optimal_match_count<R: Real>(pred: &[BBox<R>], gt: &[BBox<R>], tau: R) -> usize {
    let adj: Vec<Vec<usize>> = gt
        .iter()
        .map(|g| {
            pred.iter()
                .enumerate()
                .filter(|(_, p)| iou(g, p) > tau)
                .map(|(pi, _)| pi)
                .collect()
        })
        .collect();
    let mut pred_match: Vec<Option<usize>> = vec![None; pred.len()];
    let mut matched = 0;
    for gi in 0..gt.len() {
        let mut visited = vec![false; pred.len()];
        if augment(gi, &adj, &mut pred_match, &mut visited) {
            matched += 1;
        }
    }
    matched
}

fn augment(
    gi: usize,
    adj: &[Vec<usize>],
    pred_match: &mut [Option<usize>],
    visited: &mut [bool],
) -> bool {
    for &pi in &adj[gi] {
        if visited[pi] {
            continue;
        }
        visited[pi] = true;
        if pred_match[pi].is_none() || augment(pred_match[pi].unwrap(), adj, pred_match, visited) {
            pred_match[pi] = Some(gi);
            return true;
        }
    }
    false
}
