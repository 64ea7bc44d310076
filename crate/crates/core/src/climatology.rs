//! Daily climatologies: per-calendar-day means (the ACC reference) and the
//! heatwave / cold-surge percentile thresholds.
//!
//! Calendars are 365-day cycles. Feb 29 is dropped from histories and is
//! evaluated against the Feb 28 thresholds.

use chrono::{DateTime, Datelike, NaiveDate, Timelike, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DAYS_PER_YEAR: usize = 365;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClimatologyError {
    #[error("insufficient history: {detail} ({locations} location(s) affected)")]
    InsufficientHistory { detail: String, locations: usize },
    #[error("timestamp {0} is not on a 00/06/12/18 UTC synoptic hour")]
    MisalignedTimestamp(DateTime<Utc>),
    #[error("timestamp {0} repeats or goes backwards")]
    NonMonotoneTime(DateTime<Utc>),
    #[error("expected {expected} locations, got {got}")]
    LocationCount { expected: usize, got: usize },
    #[error("calendar day {0} outside 1..=365")]
    BadDay(usize),
}

/// Day index 1..=365 on the no-leap calendar; Feb 29 maps onto Feb 28.
pub fn calendar_day(date: NaiveDate) -> usize {
    let ord = date.ordinal() as usize;
    if date.leap_year() && ord >= 60 {
        ord - 1
    } else {
        ord
    }
}

/// Like [`calendar_day`] but `None` for Feb 29, which histories drop.
pub fn history_calendar_day(date: NaiveDate) -> Option<usize> {
    if date.month() == 2 && date.day() == 29 {
        None
    } else {
        Some(calendar_day(date))
    }
}

/// Cyclic offset on the 365-day calendar (1-based in, 1-based out).
pub fn wrap_day(day: usize, offset: i64) -> usize {
    ((day as i64 - 1 + offset).rem_euclid(DAYS_PER_YEAR as i64) + 1) as usize
}

fn synoptic_slot(t: DateTime<Utc>) -> Option<usize> {
    if t.minute() != 0 || t.second() != 0 || t.nanosecond() != 0 || t.hour() % 6 != 0 {
        return None;
    }
    Some(t.hour() as usize / 6)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DayStats {
    pub max: f64,
    pub min: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DailyExtremes {
    pub date: NaiveDate,
    /// `None` when the day has fewer than four synoptic samples.
    pub stats: Option<DayStats>,
}

/// Daily max/min (and mean) over the four 6-hourly samples of each UTC day.
pub fn daily_extremes(series: &[(DateTime<Utc>, f64)]) -> Result<Vec<DailyExtremes>, ClimatologyError> {
    let mut sorted: Vec<(DateTime<Utc>, f64)> = series.to_vec();
    sorted.sort_by_key(|(t, _)| *t);
    let mut out: Vec<DailyExtremes> = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let date = sorted[i].0.date_naive();
        let mut slots = [None; 4];
        while i < sorted.len() && sorted[i].0.date_naive() == date {
            let (t, v) = sorted[i];
            let slot = synoptic_slot(t).ok_or(ClimatologyError::MisalignedTimestamp(t))?;
            if slots[slot].replace(v).is_some() {
                return Err(ClimatologyError::NonMonotoneTime(t));
            }
            i += 1;
        }
        let stats = if slots.iter().all(Option::is_some) {
            let v: Vec<f64> = slots.iter().map(|s| s.unwrap()).collect();
            Some(DayStats {
                max: v.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                min: v.iter().cloned().fold(f64::INFINITY, f64::min),
                mean: v.iter().sum::<f64>() / 4.0,
            })
        } else {
            None
        };
        out.push(DailyExtremes { date, stats });
    }
    Ok(out)
}

/// Daily max/min/mean for every location of a field stream.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyFields {
    pub date: NaiveDate,
    pub max: Vec<f64>,
    pub min: Vec<f64>,
    pub mean: Vec<f64>,
}

/// Streams 6-hourly location vectors into complete [`DailyFields`].
///
/// Samples must arrive in strictly increasing time order; days missing any
/// of the four synoptic hours are dropped.
#[derive(Debug)]
pub struct DailyFieldAccumulator {
    n_locations: usize,
    last: Option<DateTime<Utc>>,
    date: Option<NaiveDate>,
    seen: [bool; 4],
    max: Vec<f64>,
    min: Vec<f64>,
    sum: Vec<f64>,
    done: Vec<DailyFields>,
}

impl DailyFieldAccumulator {
    pub fn new(n_locations: usize) -> Self {
        Self {
            n_locations,
            last: None,
            date: None,
            seen: [false; 4],
            max: vec![f64::NEG_INFINITY; n_locations],
            min: vec![f64::INFINITY; n_locations],
            sum: vec![0.0; n_locations],
            done: Vec::new(),
        }
    }

    pub fn push(&mut self, time: DateTime<Utc>, values: &[f64]) -> Result<(), ClimatologyError> {
        if values.len() != self.n_locations {
            return Err(ClimatologyError::LocationCount {
                expected: self.n_locations,
                got: values.len(),
            });
        }
        let slot = synoptic_slot(time).ok_or(ClimatologyError::MisalignedTimestamp(time))?;
        if self.last.is_some_and(|l| time <= l) {
            return Err(ClimatologyError::NonMonotoneTime(time));
        }
        self.last = Some(time);
        let date = time.date_naive();
        if self.date != Some(date) {
            self.flush();
            self.date = Some(date);
        }
        self.seen[slot] = true;
        for (k, &v) in values.iter().enumerate() {
            self.max[k] = self.max[k].max(v);
            self.min[k] = self.min[k].min(v);
            self.sum[k] += v;
        }
        Ok(())
    }

    fn flush(&mut self) {
        if let Some(date) = self.date.take() {
            if self.seen.iter().all(|s| *s) {
                self.done.push(DailyFields {
                    date,
                    max: self.max.clone(),
                    min: self.min.clone(),
                    mean: self.sum.iter().map(|s| s / 4.0).collect(),
                });
            }
        }
        self.seen = [false; 4];
        self.max.fill(f64::NEG_INFINITY);
        self.min.fill(f64::INFINITY);
        self.sum.fill(0.0);
    }

    /// Completed days so far (the day in progress is not included).
    pub fn drain_complete(&mut self) -> Vec<DailyFields> {
        std::mem::take(&mut self.done)
    }

    pub fn finish(mut self) -> Vec<DailyFields> {
        self.flush();
        self.done
    }
}

/// A (year × calendar day × location) stack of daily values; absent entries
/// are stored as NaN and reported as `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyStack {
    years: Vec<i32>,
    n_locations: usize,
    values: Vec<f64>,
}

impl DailyStack {
    pub fn new(years: Vec<i32>, n_locations: usize) -> Self {
        let len = years.len() * DAYS_PER_YEAR * n_locations;
        Self {
            years,
            n_locations,
            values: vec![f64::NAN; len],
        }
    }

    pub fn years(&self) -> &[i32] {
        &self.years
    }

    pub fn n_locations(&self) -> usize {
        self.n_locations
    }

    fn offset(&self, year_idx: usize, day: usize) -> usize {
        assert!((1..=DAYS_PER_YEAR).contains(&day), "calendar day {day} out of range");
        (year_idx * DAYS_PER_YEAR + day - 1) * self.n_locations
    }

    pub fn get(&self, year_idx: usize, day: usize, loc: usize) -> Option<f64> {
        let v = self.values[self.offset(year_idx, day) + loc];
        (!v.is_nan()).then_some(v)
    }

    pub fn set(&mut self, year_idx: usize, day: usize, loc: usize, value: Option<f64>) {
        let o = self.offset(year_idx, day);
        self.values[o + loc] = value.unwrap_or(f64::NAN);
    }

    /// Raw day slice with NaN for absent entries.
    pub fn day(&self, year_idx: usize, day: usize) -> &[f64] {
        let o = self.offset(year_idx, day);
        &self.values[o..o + self.n_locations]
    }

    pub fn set_day(&mut self, year_idx: usize, day: usize, values: &[f64]) -> Result<(), ClimatologyError> {
        if values.len() != self.n_locations {
            return Err(ClimatologyError::LocationCount {
                expected: self.n_locations,
                got: values.len(),
            });
        }
        let o = self.offset(year_idx, day);
        self.values[o..o + self.n_locations].copy_from_slice(values);
        Ok(())
    }

    /// Fills the stack from daily fields of one year; Feb 29 is skipped.
    pub fn fill_year(&mut self, year_idx: usize, days: &[DailyFields], pick: impl Fn(&DailyFields) -> &[f64]) -> Result<(), ClimatologyError> {
        for d in days {
            if let Some(day) = history_calendar_day(d.date) {
                self.set_day(year_idx, day, pick(d))?;
            }
        }
        Ok(())
    }
}

/// Daily maxima and minima over the historical years.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyHistory {
    pub daily_max: DailyStack,
    pub daily_min: DailyStack,
}

impl DailyHistory {
    pub fn new(years: Vec<i32>, n_locations: usize) -> Self {
        Self {
            daily_max: DailyStack::new(years.clone(), n_locations),
            daily_min: DailyStack::new(years, n_locations),
        }
    }

    pub fn years(&self) -> &[i32] {
        self.daily_max.years()
    }

    pub fn n_locations(&self) -> usize {
        self.daily_max.n_locations()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConfig {
    pub q_heat: f64,
    pub q_cold: f64,
    pub half_window: usize,
    /// Smallest pool a threshold may be computed from.
    pub min_pool: usize,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self {
            q_heat: 0.9,
            q_cold: 0.1,
            half_window: 7,
            min_pool: 15,
        }
    }
}

/// Percentile estimator name recorded alongside persisted thresholds.
pub const PERCENTILE_METHOD: &str = "linear-interpolation (p*(n-1) index into sorted pool)";

/// Linear interpolation between the closest order statistics of a sorted sample.
pub fn percentile_linear(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty pool");
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    if lo + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
}

/// Per (calendar day, location) heatwave and cold-surge thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdField {
    pub n_locations: usize,
    pub years: Vec<i32>,
    pub config: ThresholdConfig,
    tau_heat: Vec<f64>,
    tau_cold: Vec<f64>,
}

impl ThresholdField {
    pub fn from_parts(
        n_locations: usize,
        years: Vec<i32>,
        config: ThresholdConfig,
        tau_heat: Vec<f64>,
        tau_cold: Vec<f64>,
    ) -> Result<Self, ClimatologyError> {
        let need = DAYS_PER_YEAR * n_locations;
        if tau_heat.len() != need || tau_cold.len() != need {
            return Err(ClimatologyError::LocationCount {
                expected: need,
                got: tau_heat.len().min(tau_cold.len()),
            });
        }
        Ok(Self {
            n_locations,
            years,
            config,
            tau_heat,
            tau_cold,
        })
    }

    pub fn tau_heat(&self, day: usize, loc: usize) -> f64 {
        self.tau_heat[(day - 1) * self.n_locations + loc]
    }

    pub fn tau_cold(&self, day: usize, loc: usize) -> f64 {
        self.tau_cold[(day - 1) * self.n_locations + loc]
    }

    /// Thresholds laid out `[day][location]`.
    pub fn heat_values(&self) -> &[f64] {
        &self.tau_heat
    }

    pub fn cold_values(&self) -> &[f64] {
        &self.tau_cold
    }
}

fn gather_pool(stack: &DailyStack, loc: usize, day: usize, half_window: usize, pool: &mut Vec<f64>) {
    pool.clear();
    let hw = half_window as i64;
    for y in 0..stack.years().len() {
        for off in -hw..=hw {
            if let Some(v) = stack.get(y, wrap_day(day, off), loc) {
                pool.push(v);
            }
        }
    }
    pool.sort_by(f64::total_cmp);
}

/// Percentile thresholds over pooled (year × window-day) samples.
///
/// The window wraps across the year boundary, so day 1 pools days 359–365
/// of the same year alongside days 1–8.
pub fn build_thresholds(history: &DailyHistory, config: &ThresholdConfig) -> Result<ThresholdField, ClimatologyError> {
    let n_years = history.years().len();
    let n_loc = history.n_locations();
    if n_years < 2 {
        return Err(ClimatologyError::InsufficientHistory {
            detail: format!("{n_years} year(s) of history, need at least 2"),
            locations: n_loc,
        });
    }
    let per_loc: Vec<Option<(Vec<f64>, Vec<f64>)>> = (0..n_loc)
        .into_par_iter()
        .map(|loc| {
            let mut pool = Vec::with_capacity(n_years * (2 * config.half_window + 1));
            let mut heat = Vec::with_capacity(DAYS_PER_YEAR);
            let mut cold = Vec::with_capacity(DAYS_PER_YEAR);
            for day in 1..=DAYS_PER_YEAR {
                gather_pool(&history.daily_max, loc, day, config.half_window, &mut pool);
                if pool.len() < config.min_pool {
                    return None;
                }
                heat.push(percentile_linear(&pool, config.q_heat));
                gather_pool(&history.daily_min, loc, day, config.half_window, &mut pool);
                if pool.len() < config.min_pool {
                    return None;
                }
                cold.push(percentile_linear(&pool, config.q_cold));
            }
            Some((heat, cold))
        })
        .collect();
    let short = per_loc.iter().filter(|p| p.is_none()).count();
    if short > 0 {
        return Err(ClimatologyError::InsufficientHistory {
            detail: format!("threshold pool smaller than {} samples", config.min_pool),
            locations: short,
        });
    }
    let mut tau_heat = vec![0.0; DAYS_PER_YEAR * n_loc];
    let mut tau_cold = vec![0.0; DAYS_PER_YEAR * n_loc];
    for (loc, p) in per_loc.into_iter().enumerate() {
        let (h, c) = p.expect("checked above");
        for d in 0..DAYS_PER_YEAR {
            tau_heat[d * n_loc + loc] = h[d];
            tau_cold[d * n_loc + loc] = c[d];
        }
    }
    Ok(ThresholdField {
        n_locations: n_loc,
        years: history.years().to_vec(),
        config: *config,
        tau_heat,
        tau_cold,
    })
}

/// Per-calendar-day mean over years, per location.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyMeanClimatology {
    pub n_locations: usize,
    pub years: Vec<i32>,
    values: Vec<f64>,
}

impl DailyMeanClimatology {
    pub fn from_parts(n_locations: usize, years: Vec<i32>, values: Vec<f64>) -> Result<Self, ClimatologyError> {
        if values.len() != DAYS_PER_YEAR * n_locations {
            return Err(ClimatologyError::LocationCount {
                expected: DAYS_PER_YEAR * n_locations,
                got: values.len(),
            });
        }
        Ok(Self {
            n_locations,
            years,
            values,
        })
    }

    pub fn day(&self, day: usize) -> &[f64] {
        let o = (day - 1) * self.n_locations;
        &self.values[o..o + self.n_locations]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

pub fn build_daily_mean_climatology(stack: &DailyStack) -> Result<DailyMeanClimatology, ClimatologyError> {
    let n_years = stack.years().len();
    let n_loc = stack.n_locations();
    if n_years == 0 {
        return Err(ClimatologyError::InsufficientHistory {
            detail: "no historical years".into(),
            locations: n_loc,
        });
    }
    let mut values = Vec::with_capacity(DAYS_PER_YEAR * n_loc);
    let mut empty = vec![false; n_loc];
    for day in 1..=DAYS_PER_YEAR {
        for (loc, e) in empty.iter_mut().enumerate() {
            let (mut sum, mut n) = (0.0, 0usize);
            for y in 0..n_years {
                if let Some(v) = stack.get(y, day, loc) {
                    sum += v;
                    n += 1;
                }
            }
            if n == 0 {
                *e = true;
                values.push(f64::NAN);
            } else {
                values.push(sum / n as f64);
            }
        }
    }
    let short = empty.iter().filter(|e| **e).count();
    if short > 0 {
        return Err(ClimatologyError::InsufficientHistory {
            detail: "calendar day without any historical sample".into(),
            locations: short,
        });
    }
    Ok(DailyMeanClimatology {
        n_locations: n_loc,
        years: stack.years().to_vec(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{Duration, TimeZone};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sorted_oracle(mut pool: Vec<f64>, q: f64) -> f64 {
        pool.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let pos = q * (pool.len() as f64 - 1.0);
        let below = pos.floor() as usize;
        let above = (below + 1).min(pool.len() - 1);
        pool[below] + (pos - below as f64) * (pool[above] - pool[below])
    }

    fn random_history(seed: u64, years: usize, n_loc: usize) -> DailyHistory {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut h = DailyHistory::new((2013..2013 + years as i32).collect(), n_loc);
        for y in 0..years {
            for d in 1..=DAYS_PER_YEAR {
                for l in 0..n_loc {
                    let lo: f64 = rng.random_range(250.0..300.0);
                    let hi = lo + rng.random_range(0.0..15.0);
                    h.daily_max.set(y, d, l, Some(hi));
                    h.daily_min.set(y, d, l, Some(lo));
                }
            }
        }
        h
    }

    #[test]
    fn calendar_drops_feb29() {
        let d = |y, m, dd| NaiveDate::from_ymd_opt(y, m, dd).unwrap();
        assert_eq!(calendar_day(d(2023, 1, 1)), 1);
        assert_eq!(calendar_day(d(2023, 12, 31)), 365);
        assert_eq!(calendar_day(d(2024, 2, 28)), 59);
        assert_eq!(calendar_day(d(2024, 2, 29)), 59);
        assert_eq!(calendar_day(d(2024, 3, 1)), 60);
        assert_eq!(calendar_day(d(2024, 12, 31)), 365);
        assert_eq!(history_calendar_day(d(2024, 2, 29)), None);
        assert_eq!(wrap_day(1, -7), 359);
        assert_eq!(wrap_day(365, 1), 1);
    }

    #[test]
    fn daily_extremes_basic() {
        let t = Utc.with_ymd_and_hms(2025, 6, 1, 0, 0, 0).unwrap();
        let series: Vec<_> = [280.0, 285.0, 290.0, 283.0, 300.0, 300.0]
            .iter()
            .enumerate()
            .map(|(k, v)| (t + Duration::hours(6 * k as i64), *v))
            .collect();
        let out = daily_extremes(&series).unwrap();
        assert_eq!(out.len(), 2);
        let s = out[0].stats.unwrap();
        assert_eq!((s.max, s.min), (290.0, 280.0));
        assert!(out[1].stats.is_none());
        assert!(daily_extremes(&[(t + Duration::hours(3), 1.0)]).is_err());
    }

    #[test]
    fn daily_extremes_constant_day() {
        let t = Utc.with_ymd_and_hms(2025, 6, 2, 0, 0, 0).unwrap();
        let series: Vec<_> = (0..4).map(|k| (t + Duration::hours(6 * k), 300.0)).collect();
        let s = daily_extremes(&series).unwrap()[0].stats.unwrap();
        assert_eq!((s.max, s.min), (300.0, 300.0));
    }

    #[test]
    fn daily_extremes_sinusoid_envelope() {
        let start = Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap();
        let temp = |d: f64, h: f64| {
            285.0 + 10.0 * (2.0 * std::f64::consts::PI * d / 365.0).sin()
                + 3.0 * (2.0 * std::f64::consts::PI * h / 24.0 - std::f64::consts::PI / 2.0).sin()
        };
        let mut series = Vec::new();
        for step in 0..365 * 4 {
            let t = start + Duration::hours(6 * step);
            let d = (step / 4) as f64 + (step % 4) as f64 * 0.25;
            series.push((t, temp(d, (6 * (step % 4)) as f64)));
        }
        let out = daily_extremes(&series).unwrap();
        assert_eq!(out.len(), 365);
        for (day, e) in out.iter().enumerate() {
            let samples: Vec<f64> = (0..4).map(|k| temp(day as f64 + k as f64 * 0.25, 6.0 * k as f64)).collect();
            let s = e.stats.unwrap();
            let hi = samples.iter().cloned().fold(f64::MIN, f64::max);
            let lo = samples.iter().cloned().fold(f64::MAX, f64::min);
            assert!((s.max - hi).abs() < 1e-9 && (s.min - lo).abs() < 1e-9);
        }
    }

    #[test]
    fn accumulator_matches_daily_extremes() {
        let start = Utc.with_ymd_and_hms(2024, 2, 28, 0, 0, 0).unwrap();
        let mut acc = DailyFieldAccumulator::new(2);
        let mut single = Vec::new();
        for k in 0..12 {
            let t = start + Duration::hours(6 * k);
            let v = [(k as f64 * 1.7).sin() * 10.0, k as f64];
            acc.push(t, &v).unwrap();
            single.push((t, v[0]));
        }
        let days = acc.finish();
        let reference = daily_extremes(&single).unwrap();
        assert_eq!(days.len(), 3);
        for (d, r) in days.iter().zip(&reference) {
            assert_eq!(d.date, r.date);
            assert_eq!(d.max[0], r.stats.unwrap().max);
            assert_eq!(d.min[0], r.stats.unwrap().min);
        }
        let mut acc = DailyFieldAccumulator::new(1);
        acc.push(start, &[1.0]).unwrap();
        assert!(acc.push(start, &[1.0]).is_err());
    }

    #[test]
    fn degenerate_pool() {
        let mut h = DailyHistory::new(vec![2020, 2021], 1);
        for y in 0..2 {
            for d in 1..=DAYS_PER_YEAR {
                h.daily_max.set(y, d, 0, Some(288.0));
                h.daily_min.set(y, d, 0, Some(288.0));
            }
        }
        let t = build_thresholds(&h, &ThresholdConfig::default()).unwrap();
        assert_eq!(t.tau_heat(100, 0), 288.0);
        assert_eq!(t.tau_cold(100, 0), 288.0);
    }

    #[test]
    fn ramp_pool() {
        // 12 years × 15 window days holding the values 1..=180 around day 200
        let mut h = DailyHistory::new((2013..2025).collect(), 1);
        let mut v = 1.0;
        for y in 0..12 {
            for off in -7..=7 {
                let d = wrap_day(200, off);
                h.daily_max.set(y, d, 0, Some(v));
                h.daily_min.set(y, d, 0, Some(v));
                v += 1.0;
            }
        }
        for y in 0..12 {
            for d in 1..=DAYS_PER_YEAR {
                if h.daily_max.get(y, d, 0).is_none() {
                    h.daily_max.set(y, d, 0, Some(0.0));
                    h.daily_min.set(y, d, 0, Some(0.0));
                }
            }
        }
        let t = build_thresholds(&h, &ThresholdConfig::default()).unwrap();
        assert!((t.tau_heat(200, 0) - 162.1).abs() < 1e-12);
        assert!((t.tau_cold(200, 0) - 18.9).abs() < 1e-12);
        let pool: Vec<f64> = (1..=180).map(f64::from).collect();
        assert_eq!(t.tau_heat(200, 0), sorted_oracle(pool.clone(), 0.9));
        assert_eq!(t.tau_cold(200, 0), sorted_oracle(pool, 0.1));
    }

    #[test]
    fn random_pools_match_oracle() {
        let h = random_history(7, 12, 3);
        let t = build_thresholds(&h, &ThresholdConfig::default()).unwrap();
        for day in [1, 2, 7, 8, 180, 358, 359, 365] {
            for loc in 0..3 {
                let mut hp = Vec::new();
                let mut cp = Vec::new();
                for y in 0..12 {
                    for off in -7i64..=7 {
                        let d = wrap_day(day, off);
                        hp.push(h.daily_max.get(y, d, loc).unwrap());
                        cp.push(h.daily_min.get(y, d, loc).unwrap());
                    }
                }
                assert_eq!(hp.len(), 180);
                assert_eq!(t.tau_heat(day, loc), sorted_oracle(hp, 0.9));
                assert_eq!(t.tau_cold(day, loc), sorted_oracle(cp, 0.1));
            }
        }
    }

    #[test]
    fn insufficient_history() {
        let h = random_history(1, 1, 2);
        assert!(matches!(
            build_thresholds(&h, &ThresholdConfig::default()),
            Err(ClimatologyError::InsufficientHistory { locations: 2, .. })
        ));
        let mut h = random_history(1, 2, 2);
        for y in 0..2 {
            for d in 1..=DAYS_PER_YEAR {
                if d % 5 == 0 {
                    h.daily_max.set(y, d, 1, None);
                }
            }
        }
        // 12 of 15 window days survive per year: pools shrink but stay above the floor
        assert!(build_thresholds(&h, &ThresholdConfig::default()).is_ok());
        for y in 0..2 {
            for d in 1..=DAYS_PER_YEAR {
                if d % 5 < 3 {
                    h.daily_max.set(y, d, 1, None);
                }
            }
        }
        match build_thresholds(&h, &ThresholdConfig::default()) {
            Err(ClimatologyError::InsufficientHistory { locations, .. }) => assert_eq!(locations, 1),
            other => panic!("expected InsufficientHistory, got {other:?}"),
        }
    }

    #[test]
    fn window_wrap_matches_rotation() {
        let h = random_history(11, 3, 2);
        let mut rotated = DailyHistory::new(h.years().to_vec(), 2);
        for y in 0..3 {
            for d in 1..=DAYS_PER_YEAR {
                for l in 0..2 {
                    let nd = wrap_day(d, 100);
                    rotated.daily_max.set(y, nd, l, h.daily_max.get(y, d, l));
                    rotated.daily_min.set(y, nd, l, h.daily_min.get(y, d, l));
                }
            }
        }
        let cfg = ThresholdConfig::default();
        let a = build_thresholds(&h, &cfg).unwrap();
        let b = build_thresholds(&rotated, &cfg).unwrap();
        for d in [1, 2, 364, 365] {
            for l in 0..2 {
                assert_eq!(a.tau_heat(d, l), b.tau_heat(wrap_day(d, 100), l));
                assert_eq!(a.tau_cold(d, l), b.tau_cold(wrap_day(d, 100), l));
            }
        }
    }

    #[test]
    fn daily_mean_climatology() {
        let mut s = DailyStack::new(vec![2020], 2);
        for d in 1..=DAYS_PER_YEAR {
            s.set_day(0, d, &[d as f64, -(d as f64)]).unwrap();
        }
        let c = build_daily_mean_climatology(&s).unwrap();
        assert_eq!(c.day(17), &[17.0, -17.0]);

        let mut s = DailyStack::new(vec![2020, 2021], 1);
        for d in 1..=DAYS_PER_YEAR {
            s.set(0, d, 0, Some(280.5));
            s.set(1, d, 0, Some(282.5));
        }
        assert!(build_daily_mean_climatology(&s).unwrap().values().iter().all(|&v| v == 281.5));

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = DailyStack::new(vec![1, 2, 3], 4);
        for y in 0..3 {
            for d in 1..=DAYS_PER_YEAR {
                for l in 0..4 {
                    s.set(y, d, l, Some(rng.random_range(-5.0..5.0)));
                }
            }
        }
        let c = build_daily_mean_climatology(&s).unwrap();
        for d in 1..=DAYS_PER_YEAR {
            for l in 0..4 {
                let oracle = (0..3).map(|y| s.get(y, d, l).unwrap()).sum::<f64>() / 3.0;
                assert!((c.day(d)[l] - oracle).abs() <= 1e-12 * oracle.abs().max(1.0));
            }
        }
        assert!(build_daily_mean_climatology(&DailyStack::new(vec![], 1)).is_err());
    }

    proptest! {
        #[test]
        fn raising_a_sample_never_lowers_thresholds(seed in 0u64..200, day in 1usize..=365, bump in 0.0f64..30.0) {
            let h = random_history(seed, 2, 1);
            let cfg = ThresholdConfig::default();
            let before = build_thresholds(&h, &cfg).unwrap();
            let mut raised = h.clone();
            let v = raised.daily_max.get(0, day, 0).unwrap();
            raised.daily_max.set(0, day, 0, Some(v + bump));
            let w = raised.daily_min.get(1, day, 0).unwrap();
            raised.daily_min.set(1, day, 0, Some(w + bump));
            let after = build_thresholds(&raised, &cfg).unwrap();
            for d in 1..=DAYS_PER_YEAR {
                prop_assert!(after.tau_heat(d, 0) >= before.tau_heat(d, 0));
                prop_assert!(after.tau_cold(d, 0) >= before.tau_cold(d, 0));
                prop_assert!(after.tau_heat(d, 0) >= after.tau_cold(d, 0));
            }
        }
    }
}
