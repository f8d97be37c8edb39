//! Best/worst Pareto fronts over (FLOPs, score) points, the per-bucket
//! attentive selection rule, and box-plot style bucket summaries.
//!
//! A point is on the best front when nothing cheaper-or-equal scores
//! better-or-equal (strictly better in at least one coordinate); it is on
//! the worst front when nothing costlier-or-equal scores worse-or-equal.
//! Exact ties in both coordinates never knock a point off a front.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One evaluated architecture: identifier, cost, and score (higher is
/// better; use negated loss for loss-based scores).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluatedPoint {
    pub arch_id: u64,
    pub flops: f64,
    pub score: f64,
}

/// The two fronts of an evaluated population. A unique extreme point can
/// appear in both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontReport {
    pub best_front: Vec<EvaluatedPoint>,
    pub worst_front: Vec<EvaluatedPoint>,
}

impl FrontReport {
    pub fn compute(points: &[EvaluatedPoint]) -> Result<Self> {
        Ok(FrontReport {
            best_front: best_pareto(points)?,
            worst_front: worst_pareto(points)?,
        })
    }
}

/// Single sweep over flops-sorted points; `flip` negates both coordinates,
/// turning the best-front computation into the worst-front one.
fn front(points: &[EvaluatedPoint], flip: bool) -> Result<Vec<EvaluatedPoint>> {
    if points.is_empty() {
        return Err(Error::EmptyInput("pareto front of empty point set"));
    }
    let key = |p: &EvaluatedPoint| {
        if flip {
            (-p.flops, -p.score)
        } else {
            (p.flops, p.score)
        }
    };
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        let (fa, sa) = key(&points[a]);
        let (fb, sb) = key(&points[b]);
        fa.total_cmp(&fb).then(sb.total_cmp(&sa))
    });
    let mut result = Vec::new();
    let mut best_cheaper = f64::NEG_INFINITY;
    let mut i = 0;
    while i < order.len() {
        let (group_flops, _) = key(&points[order[i]]);
        let mut j = i;
        while j < order.len() && key(&points[order[j]]).0 == group_flops {
            j += 1;
        }
        let group_max = key(&points[order[i]]).1; // group sorted score-descending
        if group_max > best_cheaper {
            for &idx in &order[i..j] {
                if key(&points[idx]).1 == group_max {
                    result.push(points[idx].clone());
                }
            }
            best_cheaper = group_max;
        }
        i = j;
    }
    if flip {
        result.reverse();
    }
    Ok(result)
}

/// Points not dominated by any cheaper-or-equal, better-or-equal point.
pub fn best_pareto(points: &[EvaluatedPoint]) -> Result<Vec<EvaluatedPoint>> {
    front(points, false)
}

/// Points strictly outscored by every costlier-or-equal point.
pub fn worst_pareto(points: &[EvaluatedPoint]) -> Result<Vec<EvaluatedPoint>> {
    front(points, true)
}

/// Which end of the score range attentive selection trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelectionMode {
    Best,
    Worst,
}

/// A same-bin candidate as seen by the selection rule.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCandidate {
    pub score: f64,
    pub flops: f64,
    pub encoding: Vec<u32>,
}

/// Index of the best- (or worst-) scoring candidate; ties go to lower FLOPs,
/// then the lexicographically smaller encoding.
pub fn select_attentive(candidates: &[ScoredCandidate], mode: SelectionMode) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::EmptyInput("attentive selection over no candidates"));
    }
    let mut pick = 0;
    for i in 1..candidates.len() {
        let (a, b) = (&candidates[i], &candidates[pick]);
        let score_order = match mode {
            SelectionMode::Best => a.score.total_cmp(&b.score),
            SelectionMode::Worst => b.score.total_cmp(&a.score),
        };
        let better = score_order
            .then(b.flops.total_cmp(&a.flops))
            .then_with(|| b.encoding.cmp(&a.encoding));
        if better == std::cmp::Ordering::Greater {
            pick = i;
        }
    }
    Ok(pick)
}

/// Five-number summary of one FLOPs bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketSummary {
    pub bucket_lo: f64,
    pub bucket_hi: f64,
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Per-bucket score summaries over half-open FLOPs buckets
/// [edges[i], edges[i+1]); empty buckets report count 0 and NaN statistics.
pub fn bucket_stats(points: &[EvaluatedPoint], bucket_edges: &[f64]) -> Result<Vec<BucketSummary>> {
    if bucket_edges.len() < 2 || !bucket_edges.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::Config(
            "bucket edges must be strictly increasing with at least two entries".into(),
        ));
    }
    let mut summaries = Vec::with_capacity(bucket_edges.len() - 1);
    for window in bucket_edges.windows(2) {
        let (lo, hi) = (window[0], window[1]);
        let mut scores: Vec<f64> = points
            .iter()
            .filter(|p| p.flops >= lo && p.flops < hi)
            .map(|p| p.score)
            .collect();
        scores.sort_by(f64::total_cmp);
        let summary = if scores.is_empty() {
            BucketSummary {
                bucket_lo: lo,
                bucket_hi: hi,
                count: 0,
                min: f64::NAN,
                q1: f64::NAN,
                median: f64::NAN,
                q3: f64::NAN,
                max: f64::NAN,
            }
        } else {
            BucketSummary {
                bucket_lo: lo,
                bucket_hi: hi,
                count: scores.len(),
                min: scores[0],
                q1: quantile(&scores, 0.25),
                median: quantile(&scores, 0.5),
                q3: quantile(&scores, 0.75),
                max: scores[scores.len() - 1],
            }
        };
        summaries.push(summary);
    }
    Ok(summaries)
}

/// O(n^2) check of the front definitions; the independent oracle used by
/// tests and the acceptance suite.
pub fn brute_force_fronts(points: &[EvaluatedPoint]) -> Result<FrontReport> {
    if points.is_empty() {
        return Err(Error::EmptyInput("pareto front of empty point set"));
    }
    let dominated_best = |p: &EvaluatedPoint| {
        points.iter().any(|q| {
            q.flops <= p.flops && q.score >= p.score && (q.flops < p.flops || q.score > p.score)
        })
    };
    let dominated_worst = |p: &EvaluatedPoint| {
        points.iter().any(|q| {
            q.flops >= p.flops && q.score <= p.score && (q.flops > p.flops || q.score < p.score)
        })
    };
    Ok(FrontReport {
        best_front: points.iter().filter(|p| !dominated_best(p)).cloned().collect(),
        worst_front: points.iter().filter(|p| !dominated_worst(p)).cloned().collect(),
    })
}
