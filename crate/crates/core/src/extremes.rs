//! Heatwave / cold-surge events: labeling, temporal-IoU matching and
//! POD / FAR / CSI.
//!
//! Events are labeled per location from daily series. A heatwave is a run
//! of at least [`MIN_EVENT_DAYS`] consecutive days with `Tmax > τ_heat`; a
//! cold surge a run with `Tmin < τ_cold`.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::score::Score;

pub const MIN_EVENT_DAYS: usize = 3;
pub const DEFAULT_GAMMA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum EventKind {
    Heatwave,
    Coldsurge,
}

impl EventKind {
    pub const ALL: [EventKind; 2] = [EventKind::Heatwave, EventKind::Coldsurge];

    pub fn name(self) -> &'static str {
        match self {
            EventKind::Heatwave => "HEATWAVE",
            EventKind::Coldsurge => "COLDSURGE",
        }
    }

    /// Strict exceedance test for one day.
    pub fn exceeds(self, value: f64, threshold: f64) -> bool {
        match self {
            EventKind::Heatwave => value > threshold,
            EventKind::Coldsurge => value < threshold,
        }
    }
}

/// A contiguous event run at one location; `end_day` is inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EventSegment {
    pub location: usize,
    pub kind: EventKind,
    pub start_day: i64,
    pub end_day: i64,
}

impl EventSegment {
    pub fn len_days(&self) -> i64 {
        self.end_day - self.start_day + 1
    }

    fn key(&self) -> (usize, EventKind, i64) {
        (self.location, self.kind, self.start_day)
    }
}

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum ExtremesError {
    #[error("{0} is undefined (zero denominator)")]
    UndefinedScore(ScoreName),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreName {
    Pod,
    Far,
    Csi,
}

impl std::fmt::Display for ScoreName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ScoreName::Pod => "POD",
            ScoreName::Far => "FAR",
            ScoreName::Csi => "CSI",
        })
    }
}

/// Maximal runs of `true` with length at least `min_len`, as inclusive index pairs.
pub fn exceedance_runs(mask: &[bool], min_len: usize) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (i, &m) in mask.iter().chain(std::iter::once(&false)).enumerate() {
        match (m, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                if i - s >= min_len {
                    runs.push((s, i - 1));
                }
                start = None;
            }
            _ => {}
        }
    }
    runs
}

/// Labels events in a daily series aligned day-by-day with its thresholds.
///
/// `first_day` is the day number of `values[0]`; absent days break runs.
pub fn label_events(
    location: usize,
    first_day: i64,
    values: &[Option<f64>],
    thresholds: &[f64],
    kind: EventKind,
) -> Vec<EventSegment> {
    assert_eq!(values.len(), thresholds.len(), "series and thresholds must align");
    let mask: Vec<bool> = values
        .iter()
        .zip(thresholds)
        .map(|(v, &t)| v.is_some_and(|v| kind.exceeds(v, t)))
        .collect();
    exceedance_runs(&mask, MIN_EVENT_DAYS)
        .into_iter()
        .map(|(s, e)| EventSegment {
            location,
            kind,
            start_day: first_day + s as i64,
            end_day: first_day + e as i64,
        })
        .collect()
}

/// Overlap days over union days; 0 for disjoint segments or different
/// locations/kinds.
pub fn temporal_iou(a: &EventSegment, b: &EventSegment) -> f64 {
    if a.location != b.location || a.kind != b.kind {
        return 0.0;
    }
    let inter = (a.end_day.min(b.end_day) - a.start_day.max(b.start_day) + 1).max(0);
    let union = a.len_days() + b.len_days() - inter;
    inter as f64 / union as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub predicted: EventSegment,
    pub truth: EventSegment,
    pub iou: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Contingency {
    #[serde(rename = "tp")]
    pub hits: usize,
    #[serde(rename = "fp")]
    pub false_alarms: usize,
    #[serde(rename = "fn")]
    pub misses: usize,
}

impl std::ops::AddAssign for Contingency {
    fn add_assign(&mut self, o: Self) {
        self.hits += o.hits;
        self.false_alarms += o.false_alarms;
        self.misses += o.misses;
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchResult {
    pub counts: Contingency,
    pub pairs: Vec<MatchedPair>,
}

fn sorted_indices(segs: &[EventSegment]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..segs.len()).collect();
    idx.sort_by_key(|&i| segs[i].key());
    idx
}

/// One-to-one matching of predicted to observed events.
///
/// Candidate pairs with IoU ≥ `gamma` are accepted greedily in descending
/// IoU order (ties: earlier truth start, then earlier predicted start); each
/// event takes part in at most one pair.
pub fn match_events(pred: &[EventSegment], truth: &[EventSegment], gamma: f64) -> MatchResult {
    let pi = sorted_indices(pred);
    let ti = sorted_indices(truth);
    let mut candidates: Vec<(usize, usize, f64)> = Vec::new();
    let mut lo = 0;
    for &p in &pi {
        let ps = &pred[p];
        // Truths are sorted and disjoint per (location, kind), so their ends
        // are sorted too and `lo` only moves forward.
        while lo < ti.len() && {
            let t = &truth[ti[lo]];
            (t.location, t.kind, t.end_day) < (ps.location, ps.kind, ps.start_day)
        } {
            lo += 1;
        }
        let mut k = lo;
        while k < ti.len() {
            let t = &truth[ti[k]];
            if (t.location, t.kind) != (ps.location, ps.kind) || t.start_day > ps.end_day {
                break;
            }
            let iou = temporal_iou(ps, t);
            if iou >= gamma && iou > 0.0 {
                candidates.push((p, ti[k], iou));
            }
            k += 1;
        }
    }
    candidates.sort_by(|a, b| {
        b.2.partial_cmp(&a.2)
            .unwrap_or(Ordering::Equal)
            .then_with(|| truth[a.1].key().cmp(&truth[b.1].key()))
            .then_with(|| pred[a.0].key().cmp(&pred[b.0].key()))
    });
    let mut pred_used = vec![false; pred.len()];
    let mut truth_used = vec![false; truth.len()];
    let mut pairs = Vec::new();
    for (p, t, iou) in candidates {
        if !pred_used[p] && !truth_used[t] {
            pred_used[p] = true;
            truth_used[t] = true;
            pairs.push(MatchedPair {
                predicted: pred[p],
                truth: truth[t],
                iou,
            });
        }
    }
    let hits = pairs.len();
    MatchResult {
        counts: Contingency {
            hits,
            false_alarms: pred.len() - hits,
            misses: truth.len() - hits,
        },
        pairs,
    }
}

fn ratio(num: usize, den: usize, name: ScoreName) -> Result<f64, ExtremesError> {
    if den == 0 {
        Err(ExtremesError::UndefinedScore(name))
    } else {
        Ok(num as f64 / den as f64)
    }
}

/// `TP / (TP + FN)`
pub fn pod(c: &Contingency) -> Result<f64, ExtremesError> {
    ratio(c.hits, c.hits + c.misses, ScoreName::Pod)
}

/// `FP / (TP + FP)`
pub fn far(c: &Contingency) -> Result<f64, ExtremesError> {
    ratio(c.false_alarms, c.hits + c.false_alarms, ScoreName::Far)
}

/// `TP / (TP + FP + FN)`
pub fn csi(c: &Contingency) -> Result<f64, ExtremesError> {
    ratio(c.hits, c.hits + c.false_alarms + c.misses, ScoreName::Csi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoricalScores {
    pub pod: Score,
    pub far: Score,
    pub csi: Score,
}

pub fn categorical_scores(c: &Contingency) -> CategoricalScores {
    CategoricalScores {
        pod: pod(c).into(),
        far: far(c).into(),
        csi: csi(c).into(),
    }
}
