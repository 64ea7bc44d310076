//! Station pipeline: ±15 min window aggregation onto the 6-hourly axis,
//! ratio QC against reference fields, and station-space scores.

use std::collections::BTreeMap;

use chrono::{DateTime, Duration, Timelike, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::VariableId;
use crate::metrics::{CompensatedSum, DEGENERATE_ANOMALY_NORM};

pub const WINDOW_MINUTES: i64 = 15;
pub const KELVIN_OFFSET: f64 = 273.15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StationError {
    #[error("reference value {reference} for {variable} is not positive in display units")]
    NonPositiveReference { variable: VariableId, reference: f64 },
    #[error("no valid (station, time) pairs")]
    NoValidPairs,
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("timestamp {0} is not on the 00/06/12/18 UTC axis")]
    MisalignedTimestamp(DateTime<Utc>),
    #[error("duplicate station id {0}")]
    DuplicateStation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum QcFlag {
    Raw,
    ReplacedByReference,
    Absent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub id: String,
    pub lat: f64,
    pub lon: f64,
    pub elevation_m: f64,
}

/// Mean of the records within ±15 min of `target`, bounds included.
/// Records are summed in (time, value) order so the result does not depend
/// on input order.
pub fn window_average(raw: &[(DateTime<Utc>, f64)], target: DateTime<Utc>) -> Option<f64> {
    let half = Duration::minutes(WINDOW_MINUTES);
    let mut hits: Vec<(DateTime<Utc>, f64)> = raw
        .iter()
        .copied()
        .filter(|(t, v)| (*t - target).abs() <= half && v.is_finite())
        .collect();
    if hits.is_empty() {
        return None;
    }
    hits.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut acc = CompensatedSum::default();
    for (_, v) in &hits {
        acc.add(*v);
    }
    Some(acc.value() / hits.len() as f64)
}

pub fn is_synoptic(t: DateTime<Utc>) -> bool {
    t.hour() % 6 == 0 && t.minute() == 0 && t.second() == 0 && t.nanosecond() == 0
}

/// Ratio bounds applied in display units (°C, hPa, m/s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcThresholds {
    pub bounds: BTreeMap<VariableId, f64>,
}

impl Default for QcThresholds {
    fn default() -> Self {
        let bounds = [
            (VariableId::T2M, 6.0),
            (VariableId::D2M, 6.0),
            (VariableId::MSL, 9000.0),
            (VariableId::WS10, 7.0),
        ]
        .into_iter()
        .collect();
        Self { bounds }
    }
}

/// SI value in the units the ratio test is written for.
pub fn display_units(variable: VariableId, si: f64) -> f64 {
    match variable {
        VariableId::T2M | VariableId::D2M | VariableId::T850 => si - KELVIN_OFFSET,
        VariableId::MSL => si / 100.0,
        _ => si,
    }
}

/// Replaces `obs` by `reference` when their display-unit ratio exceeds the
/// variable's bound. Variables without a bound pass through as `Raw`.
pub fn qc_ratio_filter(
    obs: f64,
    reference: f64,
    variable: VariableId,
    thresholds: &QcThresholds,
) -> Result<(f64, QcFlag), StationError> {
    let Some(&bound) = thresholds.bounds.get(&variable) else {
        return Ok((obs, QcFlag::Raw));
    };
    let r = display_units(variable, reference);
    if !(r > 0.0) {
        return Err(StationError::NonPositiveReference { variable, reference });
    }
    if display_units(variable, obs) / r > bound {
        Ok((reference, QcFlag::ReplacedByReference))
    } else {
        Ok((obs, QcFlag::Raw))
    }
}

/// Station × time matrix for one variable, station-major.
#[derive(Debug, Clone, PartialEq)]
pub struct StationSeries {
    pub values: Vec<Option<f64>>,
    pub flags: Vec<QcFlag>,
}

impl StationSeries {
    pub fn from_values(values: Vec<Option<f64>>) -> Self {
        let flags = values
            .iter()
            .map(|v| if v.is_some() { QcFlag::Raw } else { QcFlag::Absent })
            .collect();
        Self { values, flags }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationTable {
    pub stations: Vec<Station>,
    pub times: Vec<DateTime<Utc>>,
    pub series: BTreeMap<VariableId, StationSeries>,
}

impl StationTable {
    pub fn new(stations: Vec<Station>, times: Vec<DateTime<Utc>>) -> Result<Self, StationError> {
        if let Some(t) = times.iter().find(|t| !is_synoptic(**t)) {
            return Err(StationError::MisalignedTimestamp(*t));
        }
        let mut seen = std::collections::BTreeSet::new();
        for s in &stations {
            if !seen.insert(s.id.as_str()) {
                return Err(StationError::DuplicateStation(s.id.clone()));
            }
        }
        Ok(Self {
            stations,
            times,
            series: BTreeMap::new(),
        })
    }

    pub fn n_stations(&self) -> usize {
        self.stations.len()
    }

    pub fn index(&self, station: usize, time: usize) -> usize {
        station * self.times.len() + time
    }

    pub fn time_index(&self, t: DateTime<Utc>) -> Option<usize> {
        self.times.binary_search(&t).ok()
    }

    pub fn positions(&self) -> Vec<(f64, f64)> {
        self.stations.iter().map(|s| (s.lat, s.lon)).collect()
    }

    pub fn insert(&mut self, variable: VariableId, values: Vec<Option<f64>>) -> Result<(), StationError> {
        let need = self.stations.len() * self.times.len();
        if values.len() != need {
            return Err(StationError::LengthMismatch(format!(
                "{variable}: {} values for {need} slots",
                values.len()
            )));
        }
        self.series.insert(variable, StationSeries::from_values(values));
        Ok(())
    }

    /// Aggregates raw records per station onto `times` with `window_average`.
    pub fn from_raw(
        stations: Vec<Station>,
        times: Vec<DateTime<Utc>>,
        raw: &BTreeMap<(usize, VariableId), Vec<(DateTime<Utc>, f64)>>,
    ) -> Result<Self, StationError> {
        let mut table = Self::new(stations, times)?;
        let vars: std::collections::BTreeSet<VariableId> = raw.keys().map(|(_, v)| *v).collect();
        for var in vars {
            let mut values = Vec::with_capacity(table.n_stations() * table.times.len());
            for s in 0..table.n_stations() {
                let records = raw.get(&(s, var)).map(Vec::as_slice).unwrap_or(&[]);
                values.extend(table.times.iter().map(|&t| window_average(records, t)));
            }
            table.insert(var, values)?;
        }
        Ok(table)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QcCounts {
    pub raw: usize,
    pub replaced: usize,
    pub absent: usize,
    pub non_positive_reference: usize,
}

/// Applies the ratio test to every `Raw` entry of one variable. `reference`
/// is aligned with the series; non-finite references leave entries as they
/// are. Entries already replaced are not re-tested, so repeat calls are no-ops.
pub fn apply_qc(
    table: &mut StationTable,
    variable: VariableId,
    reference: &[f64],
    thresholds: &QcThresholds,
) -> Result<QcCounts, StationError> {
    let Some(series) = table.series.get_mut(&variable) else {
        return Ok(QcCounts::default());
    };
    if reference.len() != series.values.len() {
        return Err(StationError::LengthMismatch(format!(
            "{variable}: {} references for {} slots",
            reference.len(),
            series.values.len()
        )));
    }
    let mut counts = QcCounts::default();
    for ((value, flag), &r) in series.values.iter_mut().zip(series.flags.iter_mut()).zip(reference) {
        if *flag == QcFlag::Raw && r.is_finite() {
            let obs = value.expect("raw entries carry a value");
            match qc_ratio_filter(obs, r, variable, thresholds) {
                Ok((v, f)) => {
                    *value = Some(v);
                    *flag = f;
                }
                Err(StationError::NonPositiveReference { .. }) => counts.non_positive_reference += 1,
                Err(e) => return Err(e),
            }
        }
        match flag {
            QcFlag::Raw => counts.raw += 1,
            QcFlag::ReplacedByReference => counts.replaced += 1,
            QcFlag::Absent => counts.absent += 1,
        }
    }
    Ok(counts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationScores {
    pub rmse: f64,
    pub bias: f64,
    /// `None` without a climatology or when an anomaly norm vanishes.
    pub acc: Option<f64>,
    pub n_pairs: usize,
}

/// Unweighted scores over (station, time) pairs; absent observations are
/// skipped. `clim`, when given, is aligned with `forecast`.
pub fn station_scores(
    forecast: &[f64],
    obs: &[Option<f64>],
    clim: Option<&[f64]>,
) -> Result<StationScores, StationError> {
    if forecast.len() != obs.len() || clim.is_some_and(|c| c.len() != obs.len()) {
        return Err(StationError::LengthMismatch(format!(
            "{} forecasts, {} observations",
            forecast.len(),
            obs.len()
        )));
    }
    let pairs: Vec<usize> = (0..obs.len()).filter(|&k| obs[k].is_some()).collect();
    if pairs.is_empty() {
        return Err(StationError::NoValidPairs);
    }
    let n = pairs.len() as f64;
    let y = |k: usize| obs[k].expect("filtered");
    let mut se = CompensatedSum::default();
    let mut err = CompensatedSum::default();
    for &k in &pairs {
        let d = forecast[k] - y(k);
        se.add(d * d);
        err.add(d);
    }
    let acc = clim.and_then(|c| {
        let (mut cross, mut pp, mut tt) = (CompensatedSum::default(), CompensatedSum::default(), CompensatedSum::default());
        for &k in &pairs {
            let (a, b) = (forecast[k] - c[k], y(k) - c[k]);
            cross.add(a * b);
            pp.add(a * a);
            tt.add(b * b);
        }
        let (np, nt) = ((pp.value() / n).sqrt(), (tt.value() / n).sqrt());
        (np >= DEGENERATE_ANOMALY_NORM && nt >= DEGENERATE_ANOMALY_NORM).then(|| cross.value() / n / (np * nt))
    });
    Ok(StationScores {
        rmse: (se.value() / n).sqrt(),
        bias: err.value() / n,
        acc,
        n_pairs: pairs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn t(h: u32, m: u32) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2025, 7, 1, h, m, 0).unwrap()
    }

    fn window_oracle(raw: &[(DateTime<Utc>, f64)], target: DateTime<Utc>) -> Option<f64> {
        let kept: Vec<f64> = raw
            .iter()
            .filter(|(tau, _)| (tau.timestamp() - target.timestamp()).abs() <= 900)
            .map(|r| r.1)
            .collect();
        (!kept.is_empty()).then(|| kept.iter().sum::<f64>() / kept.len() as f64)
    }

    #[test]
    fn window_boundaries() {
        let target = t(6, 0);
        assert_eq!(window_average(&[(t(5, 50), 280.0), (t(6, 10), 282.0)], target), Some(281.0));
        assert_eq!(window_average(&[(t(6, 15), 283.5)], target), Some(283.5));
        assert_eq!(window_average(&[(t(5, 45), 283.5)], target), Some(283.5));
        assert_eq!(window_average(&[(t(6, 20), 283.5)], target), None);
        let just_out = t(6, 15) + Duration::seconds(1);
        assert_eq!(window_average(&[(just_out, 1.0)], target), None);
        assert_eq!(window_average(&[], target), None);
    }

    #[test]
    fn qc_examples() {
        let th = QcThresholds::default();
        let k = |c: f64| c + KELVIN_OFFSET;
        assert_eq!(qc_ratio_filter(k(20.0), k(19.0), VariableId::T2M, &th), Ok((k(20.0), QcFlag::Raw)));
        assert_eq!(
            qc_ratio_filter(80.0, 10.0, VariableId::WS10, &th),
            Ok((10.0, QcFlag::ReplacedByReference))
        );
        assert_eq!(qc_ratio_filter(10.0, 10.0, VariableId::WS10, &th), Ok((10.0, QcFlag::Raw)));
        assert_eq!(qc_ratio_filter(70.0, 10.0, VariableId::WS10, &th), Ok((70.0, QcFlag::Raw)));
        assert!(matches!(
            qc_ratio_filter(k(5.0), k(-2.0), VariableId::T2M, &th),
            Err(StationError::NonPositiveReference { .. })
        ));
        assert!(matches!(
            qc_ratio_filter(5.0, 0.0, VariableId::WS10, &th),
            Err(StationError::NonPositiveReference { .. })
        ));
        assert_eq!(qc_ratio_filter(5.0, 0.0, VariableId::Z500, &th), Ok((5.0, QcFlag::Raw)));
    }

    fn wind_table() -> StationTable {
        let stations = (0..3)
            .map(|i| Station { id: format!("S{i}"), lat: 10.0 * i as f64, lon: 5.0, elevation_m: 0.0 })
            .collect();
        let mut table = StationTable::new(stations, vec![t(0, 0), t(6, 0)]).unwrap();
        table
            .insert(VariableId::WS10, vec![Some(4.0), Some(50.0), None, Some(3.0), Some(0.5), Some(2.0)])
            .unwrap();
        table
    }

    #[test]
    fn qc_replaces_outlier_and_is_idempotent() {
        let mut table = wind_table();
        let reference = [4.5, 5.0, 5.0, 0.0, 0.4, 2.0];
        let th = QcThresholds::default();
        let c1 = apply_qc(&mut table, VariableId::WS10, &reference, &th).unwrap();
        assert_eq!(c1, QcCounts { raw: 4, replaced: 1, absent: 1, non_positive_reference: 1 });
        assert_eq!(table.series[&VariableId::WS10].values[1], Some(5.0));
        let snapshot = table.clone();
        let c2 = apply_qc(&mut table, VariableId::WS10, &reference, &th).unwrap();
        assert_eq!(table, snapshot);
        assert_eq!((c2.raw, c2.replaced, c2.absent), (c1.raw, c1.replaced, c1.absent));
    }

    #[test]
    fn table_rejects_misaligned_times() {
        assert!(matches!(
            StationTable::new(vec![], vec![t(3, 0)]),
            Err(StationError::MisalignedTimestamp(_))
        ));
    }

    #[test]
    fn score_examples() {
        let obs = vec![Some(280.0), Some(281.0), None, Some(279.0)];
        let same: Vec<f64> = vec![280.0, 281.0, 0.0, 279.0];
        let s = station_scores(&same, &obs, None).unwrap();
        assert_eq!((s.rmse, s.bias, s.acc, s.n_pairs), (0.0, 0.0, None, 3));
        let plus: Vec<f64> = same.iter().map(|v| v + 1.0).collect();
        let s = station_scores(&plus, &obs, None).unwrap();
        assert_eq!((s.rmse, s.bias), (1.0, 1.0));
        assert_eq!(station_scores(&same, &[None; 4], None), Err(StationError::NoValidPairs));
        let clim = vec![280.0; 4];
        let s = station_scores(&same, &obs, Some(&clim)).unwrap();
        assert!((s.acc.unwrap() - 1.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn window_average_matches_oracle_and_ignores_order(
            recs in prop::collection::vec((-40i64..40, -50.0f64..50.0), 0..12),
            seed in any::<u64>(),
        ) {
            let target = t(12, 0);
            let raw: Vec<(DateTime<Utc>, f64)> = recs.iter().map(|&(m, v)| (target + Duration::minutes(m), v)).collect();
            let got = window_average(&raw, target);
            let want = window_oracle(&raw, target);
            match (got, want) {
                (None, None) => {}
                (Some(a), Some(b)) => prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0)),
                _ => prop_assert!(false, "presence differs"),
            }
            let mut shuffled = raw.clone();
            let n = shuffled.len();
            if n > 1 {
                let mut s = seed;
                for i in (1..n).rev() {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    shuffled.swap(i, (s >> 33) as usize % (i + 1));
                }
            }
            prop_assert_eq!(window_average(&shuffled, target).map(f64::to_bits), got.map(f64::to_bits));
        }

        #[test]
        fn lowering_bound_only_grows_replacements(
            pairs in prop::collection::vec((0.0f64..100.0, 0.1f64..20.0), 1..20),
            hi in 2.0f64..20.0,
            frac in 0.1f64..1.0,
        ) {
            let lo = 1.0 + (hi - 1.0) * frac;
            let mk = |b: f64| QcThresholds { bounds: [(VariableId::WS10, b)].into_iter().collect() };
            for (obs, r) in pairs {
                let at_hi = qc_ratio_filter(obs, r, VariableId::WS10, &mk(hi)).unwrap().1;
                let at_lo = qc_ratio_filter(obs, r, VariableId::WS10, &mk(lo)).unwrap().1;
                if at_hi == QcFlag::ReplacedByReference {
                    prop_assert_eq!(at_lo, QcFlag::ReplacedByReference);
                }
            }
        }

        #[test]
        fn scores_match_pairwise_loop(
            rows in prop::collection::vec((250.0f64..320.0, prop::option::of(250.0f64..320.0), 270.0f64..300.0), 10),
        ) {
            let f: Vec<f64> = rows.iter().map(|r| r.0).collect();
            let o: Vec<Option<f64>> = rows.iter().map(|r| r.1).collect();
            let c: Vec<f64> = rows.iter().map(|r| r.2).collect();
            let n = o.iter().flatten().count();
            let got = station_scores(&f, &o, Some(&c));
            if n == 0 {
                prop_assert_eq!(got, Err(StationError::NoValidPairs));
                return Ok(());
            }
            let got = got.unwrap();
            let (mut se, mut e, mut x, mut pp, mut tt) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for k in 0..10 {
                if let Some(y) = o[k] {
                    se += (f[k] - y).powi(2);
                    e += f[k] - y;
                    x += (f[k] - c[k]) * (y - c[k]);
                    pp += (f[k] - c[k]).powi(2);
                    tt += (y - c[k]).powi(2);
                }
            }
            let nn = n as f64;
            let rel = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs().max(1e-300) + 1e-12;
            prop_assert!(rel(got.rmse, (se / nn).sqrt()));
            prop_assert!(rel(got.bias, e / nn));
            if let Some(a) = got.acc {
                prop_assert!(rel(a, x / (pp * tt).sqrt()));
            }
        }
    }
}
