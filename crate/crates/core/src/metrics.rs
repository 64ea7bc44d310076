//! Latitude-weighted deterministic skill scores: WRMSE, ACC, bias and activity.
//!
//! All four use the weighted spatial mean
//! `⟨a⟩_w = (1 / (N_lat N_lon)) Σ_ij w_i a(i, j)` with weights from
//! [`latitude_weights`](crate::grid::latitude_weights). Sums are accumulated
//! row-major with a compensated accumulator so results do not depend on
//! how callers schedule work.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{GridField, VariableId};

/// Below this weighted anomaly norm ACC is reported as degenerate.
pub const DEGENERATE_ANOMALY_NORM: f64 = 1e-30;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("weight vector has {got} entries, grid has {expected} rows")]
    WeightLength { expected: usize, got: usize },
    #[error("anomaly field is constant; correlation undefined")]
    DegenerateAnomaly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Metric {
    Wrmse,
    Acc,
    Bias,
    Activity,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Wrmse, Metric::Acc, Metric::Bias, Metric::Activity];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Wrmse => "WRMSE",
            Metric::Acc => "ACC",
            Metric::Bias => "BIAS",
            Metric::Activity => "ACTIVITY",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub metric: Metric,
    pub variable: VariableId,
    pub lead_hours: u32,
    pub value: f64,
}

/// Neumaier-compensated running sum (effectively double-width precision).
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

fn check_weights(field: &GridField, weights: &[f64]) -> Result<(), MetricError> {
    if weights.len() != field.grid().n_lat() {
        return Err(MetricError::WeightLength {
            expected: field.grid().n_lat(),
            got: weights.len(),
        });
    }
    Ok(())
}

fn check_pair(pred: &GridField, truth: &GridField) -> Result<(), MetricError> {
    check_same_grid(pred, truth)?;
    if pred.valid_time() != truth.valid_time() {
        return Err(MetricError::GridMismatch(format!(
            "valid time {} vs {}",
            pred.valid_time(),
            truth.valid_time()
        )));
    }
    Ok(())
}

fn check_same_grid(a: &GridField, b: &GridField) -> Result<(), MetricError> {
    if !a.same_grid(b) {
        return Err(MetricError::GridMismatch("different grids".into()));
    }
    if a.variable() != b.variable() {
        return Err(MetricError::GridMismatch(format!(
            "variable {} vs {}",
            a.variable(),
            b.variable()
        )));
    }
    Ok(())
}

/// `⟨f(i, j)⟩_w` over a grid of `weights.len()` rows and `n_lon` columns.
fn weighted_mean_by(weights: &[f64], n_lon: usize, mut f: impl FnMut(usize) -> f64) -> f64 {
    let mut acc = CompensatedSum::default();
    for (i, &w) in weights.iter().enumerate() {
        let base = i * n_lon;
        for k in base..base + n_lon {
            acc.add(w * f(k));
        }
    }
    acc.value() / (weights.len() * n_lon) as f64
}

/// `⟨a⟩_w` for a row-major array.
pub fn weighted_mean(values: &[f64], weights: &[f64]) -> f64 {
    let n_lon = values.len() / weights.len().max(1);
    weighted_mean_by(weights, n_lon, |k| values[k])
}

pub fn wrmse(pred: &GridField, truth: &GridField, weights: &[f64]) -> Result<f64, MetricError> {
    check_pair(pred, truth)?;
    check_weights(pred, weights)?;
    let (p, t) = (pred.values(), truth.values());
    let mse = weighted_mean_by(weights, pred.grid().n_lon(), |k| {
        let d = p[k] - t[k];
        d * d
    });
    Ok(mse.sqrt())
}

pub fn bias(pred: &GridField, truth: &GridField, weights: &[f64]) -> Result<f64, MetricError> {
    check_pair(pred, truth)?;
    check_weights(pred, weights)?;
    let (p, t) = (pred.values(), truth.values());
    Ok(weighted_mean_by(weights, pred.grid().n_lon(), |k| p[k] - t[k]))
}

/// Weighted anomaly correlation against the climatological mean `clim`.
pub fn acc(
    pred: &GridField,
    truth: &GridField,
    clim: &GridField,
    weights: &[f64],
) -> Result<f64, MetricError> {
    check_pair(pred, truth)?;
    check_same_grid(pred, clim)?;
    check_weights(pred, weights)?;
    let (p, t, c) = (pred.values(), truth.values(), clim.values());
    let n_lon = pred.grid().n_lon();
    let cross = weighted_mean_by(weights, n_lon, |k| (p[k] - c[k]) * (t[k] - c[k]));
    let pp = weighted_mean_by(weights, n_lon, |k| (p[k] - c[k]) * (p[k] - c[k]));
    let tt = weighted_mean_by(weights, n_lon, |k| (t[k] - c[k]) * (t[k] - c[k]));
    let (np, nt) = (pp.sqrt(), tt.sqrt());
    if np < DEGENERATE_ANOMALY_NORM || nt < DEGENERATE_ANOMALY_NORM {
        return Err(MetricError::DegenerateAnomaly);
    }
    Ok(cross / (np * nt))
}

/// Weighted spread of the forecast anomaly `pred - clim` about its own weighted mean.
pub fn activity(pred: &GridField, clim: &GridField, weights: &[f64]) -> Result<f64, MetricError> {
    check_same_grid(pred, clim)?;
    check_weights(pred, weights)?;
    let (p, c) = (pred.values(), clim.values());
    let n_lon = pred.grid().n_lon();
    let mean = weighted_mean_by(weights, n_lon, |k| p[k] - c[k]);
    let var = weighted_mean_by(weights, n_lon, |k| {
        let d = p[k] - c[k] - mean;
        d * d
    });
    Ok(var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{latitude_weights, GeoGrid};
    use chrono::{TimeZone, Utc};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn mk(grid: &Arc<GeoGrid>, values: Vec<f64>) -> GridField {
        let t = Utc.with_ymd_and_hms(2025, 3, 1, 0, 0, 0).unwrap();
        GridField::new(grid.clone(), VariableId::Z500, t, 24, values).unwrap()
    }

    fn random_triple(seed: u64, n_lat: usize, n_lon: usize) -> (GridField, GridField, GridField, Vec<f64>) {
        let g = Arc::new(GeoGrid::global(n_lat, n_lon).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |s: f64| (0..g.len()).map(|_| rng.random_range(-s..s)).collect::<Vec<_>>();
        let (a, b, c) = (draw(10.0), draw(10.0), draw(3.0));
        let w = latitude_weights(&g);
        (mk(&g, a), mk(&g, b), mk(&g, c), w)
    }

    #[test]
    fn identical_fields() {
        let (p, _, c, w) = random_triple(1, 5, 8);
        assert_eq!(wrmse(&p, &p, &w).unwrap(), 0.0);
        assert_eq!(bias(&p, &p, &w).unwrap(), 0.0);
        assert!((acc(&p, &p, &c, &w).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(activity(&c, &c, &w).unwrap(), 0.0);
    }

    #[test]
    fn constant_offset() {
        let (_, t, c, w) = random_triple(2, 6, 10);
        let p = t.with_values(t.values().iter().map(|v| v + 2.5).collect()).unwrap();
        assert!((wrmse(&p, &t, &w).unwrap() - 2.5).abs() < 1e-12);
        assert!((bias(&p, &t, &w).unwrap() - 2.5).abs() < 1e-12);
        let shifted = c.with_values(c.values().iter().map(|v| v + 4.0).collect()).unwrap();
        assert!(activity(&shifted, &c, &w).unwrap() < 1e-12);
    }

    #[test]
    fn antiparallel_anomalies() {
        let (_, t, c, w) = random_triple(3, 7, 9);
        let p = t
            .with_values(t.values().iter().zip(c.values()).map(|(t, c)| 2.0 * c - t).collect())
            .unwrap();
        assert!((acc(&p, &t, &c, &w).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_anomaly() {
        let (p, t, _, w) = random_triple(4, 4, 8);
        assert_eq!(acc(&p, &t, &t, &w), Err(MetricError::DegenerateAnomaly));
    }

    #[test]
    fn mismatches_are_errors() {
        let (p, _, _, w) = random_triple(5, 4, 8);
        let (q, _, _, _) = random_triple(5, 5, 8);
        assert!(matches!(wrmse(&p, &q, &w), Err(MetricError::GridMismatch(_))));
        assert!(matches!(bias(&p, &p, &w[..3]), Err(MetricError::WeightLength { .. })));
        let later = p.clone().relabel(p.valid_time() + chrono::Duration::hours(6), 30).unwrap();
        assert!(matches!(wrmse(&p, &later, &w), Err(MetricError::GridMismatch(_))));
    }

    #[test]
    fn equatorial_row_is_unweighted() {
        let g = Arc::new(GeoGrid::new(vec![0.0], vec![0.0, 90.0, 180.0, 270.0]).unwrap());
        let w = latitude_weights(&g);
        let p = mk(&g, vec![1.0, 2.0, 3.0, 4.0]);
        let t = mk(&g, vec![0.0, 0.0, 0.0, 0.0]);
        assert!((wrmse(&p, &t, &w).unwrap() - (30.0f64 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(bias(&p, &t, &w).unwrap(), 2.5);
        assert!((activity(&p, &t, &w).unwrap() - 1.25f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::default();
        s.add(1e16);
        for _ in 0..10 {
            s.add(1.0);
        }
        s.add(-1e16);
        assert_eq!(s.value(), 10.0);
    }

    proptest! {
        #[test]
        fn bias_variance_identity(seed in 0u64..10_000, n_lat in 2usize..12, n_lon in 2usize..20) {
            let (p, t, _, w) = random_triple(seed, n_lat, n_lon);
            let r = wrmse(&p, &t, &w).unwrap();
            let b = bias(&p, &t, &w).unwrap();
            let err: Vec<f64> = p.values().iter().zip(t.values()).map(|(a, b)| a - b).collect();
            let var = weighted_mean_by(&w, n_lon, |k| (err[k] - b) * (err[k] - b));
            prop_assert!((r * r - (b * b + var)).abs() <= 1e-10 * (r * r).max(1e-300));
        }

        #[test]
        fn acc_scale_invariant(seed in 0u64..10_000, scale in 0.01f64..100.0) {
            let (p, t, c, w) = random_triple(seed, 6, 11);
            let base = acc(&p, &t, &c, &w).unwrap();
            let scaled = |f: &GridField| f.with_values(
                f.values().iter().zip(c.values()).map(|(v, c)| c + scale * (v - c)).collect()).unwrap();
            let s = acc(&scaled(&p), &scaled(&t), &c, &w).unwrap();
            prop_assert!((base - s).abs() <= 1e-12);
            prop_assert!(base.abs() <= 1.0 + 1e-12);
        }
    }
}
