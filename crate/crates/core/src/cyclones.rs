//! Minimum-pressure cyclone tracking and track/intensity verification over
//! homogeneous storm samples.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{haversine_km, normalize_lon, GridField, VariableId, EARTH_RADIUS_KM};

/// Plausible minimum sea-level pressure range (exclusive bounds), Pa.
pub const MSLP_BAND_PA: (f64, f64) = (85_000.0, 105_000.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CycloneError {
    #[error("seed ({lat}, {lon}) lies outside the forecast domain")]
    SeedOutsideDomain { lat: f64, lon: f64 },
    #[error("tracker input mismatch: {0}")]
    InputMismatch(String),
    #[error("storm {storm_id} has no {source_name} fix at lead {lead_hours} h")]
    MissingFix {
        storm_id: String,
        source_name: String,
        lead_hours: u32,
    },
    #[error("fix value out of range: {0}")]
    UnitOutOfRange(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StormFix {
    pub time: DateTime<Utc>,
    pub lat: f64,
    pub lon: f64,
    pub min_mslp_pa: f64,
    pub max_wind_ms: f64,
}

impl StormFix {
    pub fn validate(&self) -> Result<(), CycloneError> {
        if !(self.min_mslp_pa > MSLP_BAND_PA.0 && self.min_mslp_pa < MSLP_BAND_PA.1) {
            return Err(CycloneError::UnitOutOfRange(format!(
                "MSLP {} Pa outside ({}, {})",
                self.min_mslp_pa, MSLP_BAND_PA.0, MSLP_BAND_PA.1
            )));
        }
        if !(self.max_wind_ms >= 0.0) || !self.max_wind_ms.is_finite() {
            return Err(CycloneError::UnitOutOfRange(format!("wind {} m/s", self.max_wind_ms)));
        }
        if !(-90.0..=90.0).contains(&self.lat) || !self.lon.is_finite() {
            return Err(CycloneError::UnitOutOfRange(format!("position ({}, {})", self.lat, self.lon)));
        }
        Ok(())
    }

    pub fn position(&self) -> (f64, f64) {
        (self.lat, self.lon)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TrackSource {
    Truth,
    Model { name: String, init_source: String },
}

impl TrackSource {
    pub fn label(&self) -> String {
        match self {
            TrackSource::Truth => "truth".to_string(),
            TrackSource::Model { name, .. } => name.clone(),
        }
    }
}

/// Time-ordered fixes for one storm from one source. `tracked_mask[k]`
/// refers to lead `6k` hours after `init_time`.
#[derive(Debug, Clone, PartialEq)]
pub struct StormTrack {
    pub storm_id: String,
    pub source: TrackSource,
    pub init_time: DateTime<Utc>,
    pub fixes: Vec<StormFix>,
    pub tracked_mask: Vec<bool>,
}

impl StormTrack {
    /// A best-track style record: every fix counts as tracked.
    pub fn truth(storm_id: impl Into<String>, fixes: Vec<StormFix>) -> Result<Self, CycloneError> {
        let storm_id = storm_id.into();
        let init_time = fixes
            .first()
            .map(|f| f.time)
            .ok_or_else(|| CycloneError::InputMismatch(format!("storm {storm_id} has no fixes")))?;
        for w in fixes.windows(2) {
            if w[1].time - w[0].time != Duration::hours(6) {
                return Err(CycloneError::InputMismatch(format!(
                    "storm {storm_id}: fixes at {} and {} are not 6 h apart",
                    w[0].time, w[1].time
                )));
            }
        }
        let n = fixes.len();
        Ok(Self {
            storm_id,
            source: TrackSource::Truth,
            init_time,
            fixes,
            tracked_mask: vec![true; n],
        })
    }

    pub fn fix_at(&self, time: DateTime<Utc>) -> Option<&StormFix> {
        self.fixes
            .binary_search_by_key(&time, |f| f.time)
            .ok()
            .map(|i| &self.fixes[i])
    }

    pub fn tracked_at(&self, lead_hours: u32) -> bool {
        lead_hours % 6 == 0
            && self
                .tracked_mask
                .get((lead_hours / 6) as usize)
                .copied()
                .unwrap_or(false)
    }

    pub fn fix_at_lead(&self, lead_hours: u32) -> Option<&StormFix> {
        if !self.tracked_at(lead_hours) {
            return None;
        }
        self.fix_at(self.init_time + Duration::hours(lead_hours as i64))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    pub search_radius_km: f64,
    pub wind_radius_km: f64,
    pub pressure_cutoff_pa: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            search_radius_km: 450.0,
            wind_radius_km: 250.0,
            pressure_cutoff_pa: 100_500.0,
        }
    }
}

/// Grid points within `radius_km` of `center`, as flat indices.
fn points_within(field: &GridField, center: (f64, f64), radius_km: f64) -> Vec<usize> {
    let grid = field.grid();
    let radius_deg = (radius_km / EARTH_RADIUS_KM).to_degrees();
    let mut out = Vec::new();
    for (i, &lat) in grid.lat_deg().iter().enumerate() {
        if (lat - center.0).abs() > radius_deg + 1e-9 {
            continue;
        }
        for (j, &lon) in grid.lon_deg().iter().enumerate() {
            if haversine_km(center, (lat, lon)) <= radius_km {
                out.push(grid.index(i, j));
            }
        }
    }
    out
}

fn on_open_boundary(field: &GridField, idx: usize) -> bool {
    let g = field.grid();
    let (i, j) = (idx / g.n_lon(), idx % g.n_lon());
    let edge_row = g.n_lat() > 1 && (i == 0 || i == g.n_lat() - 1) && g.lat_deg()[i].abs() < 90.0;
    let edge_col = !g.wraps_lon() && (j == 0 || j == g.n_lon() - 1);
    edge_row || edge_col
}

fn check_inputs(msl: &[GridField], u10: &[GridField], v10: &[GridField]) -> Result<(), CycloneError> {
    if msl.len() != u10.len() || msl.len() != v10.len() {
        return Err(CycloneError::InputMismatch(format!(
            "{} MSL, {} U10, {} V10 fields",
            msl.len(),
            u10.len(),
            v10.len()
        )));
    }
    for (k, ((p, u), v)) in msl.iter().zip(u10).zip(v10).enumerate() {
        if p.variable() != VariableId::MSL || u.variable() != VariableId::U10 || v.variable() != VariableId::V10 {
            return Err(CycloneError::InputMismatch(format!("step {k}: wrong variables")));
        }
        if !p.same_grid(u) || !p.same_grid(v) || !p.same_grid(&msl[0]) {
            return Err(CycloneError::InputMismatch(format!("step {k}: grids differ")));
        }
        if p.valid_time() != u.valid_time() || p.valid_time() != v.valid_time() {
            return Err(CycloneError::InputMismatch(format!("step {k}: valid times differ")));
        }
        if k > 0 && p.valid_time() - msl[k - 1].valid_time() != Duration::hours(6) {
            return Err(CycloneError::InputMismatch(format!("step {k}: not on a 6 h cadence")));
        }
    }
    Ok(())
}

/// Follows a pressure minimum through a forecast sequence starting from `seed`.
///
/// At each step the centre is the lowest MSL within the search radius of the
/// previous centre (ties go to the northernmost, then westernmost point).
/// Tracking stops for good once no point in range is below the cutoff or the
/// minimum sits on the open edge of a regional domain.
pub fn track_storm(
    storm_id: &str,
    source: TrackSource,
    msl: &[GridField],
    u10: &[GridField],
    v10: &[GridField],
    seed: (f64, f64),
    config: &TrackerConfig,
) -> Result<StormTrack, CycloneError> {
    check_inputs(msl, u10, v10)?;
    let first = msl
        .first()
        .ok_or_else(|| CycloneError::InputMismatch("empty field sequence".into()))?;
    let grid = first.grid();
    let lats = grid.lat_deg();
    let lon = normalize_lon(seed.1);
    let lat_ok = seed.0 <= lats[0] && seed.0 >= lats[lats.len() - 1];
    let lons = grid.lon_deg();
    let lon_ok = grid.wraps_lon() || (lon >= lons[0] && lon <= lons[lons.len() - 1]);
    if !lat_ok || !lon_ok {
        return Err(CycloneError::SeedOutsideDomain { lat: seed.0, lon: seed.1 });
    }

    let mut center = (seed.0, lon);
    let mut fixes = Vec::new();
    let mut mask = vec![false; msl.len()];
    for (k, p) in msl.iter().enumerate() {
        let values = p.values();
        let best = points_within(p, center, config.search_radius_km)
            .into_iter()
            .filter(|&idx| values[idx] < config.pressure_cutoff_pa)
            .min_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
        let Some(idx) = best else { break };
        if on_open_boundary(p, idx) {
            break;
        }
        let (i, j) = (idx / grid.n_lon(), idx % grid.n_lon());
        center = (lats[i], lons[j]);
        let (u, v) = (u10[k].values(), v10[k].values());
        let max_wind = points_within(p, center, config.wind_radius_km)
            .into_iter()
            .map(|q| u[q].hypot(v[q]))
            .fold(0.0, f64::max);
        fixes.push(StormFix {
            time: p.valid_time(),
            lat: center.0,
            lon: center.1,
            min_mslp_pa: values[idx],
            max_wind_ms: max_wind,
        });
        mask[k] = true;
    }
    Ok(StormTrack {
        storm_id: storm_id.to_string(),
        source,
        init_time: first.valid_time() - Duration::hours(first.lead_hours() as i64),
        fixes,
        tracked_mask: mask,
    })
}

/// One verification case: a storm seeded from one initialization.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TrackKey {
    pub storm_id: String,
    pub init: DateTime<Utc>,
}

pub type ModelTracks = BTreeMap<TrackKey, StormTrack>;

/// Per-lead set of cases tracked by every model and present in the truth.
pub fn homogeneous_sample(
    models: &BTreeMap<String, ModelTracks>,
    truth: &BTreeMap<String, StormTrack>,
    leads_hours: &[u32],
) -> BTreeMap<u32, BTreeSet<TrackKey>> {
    let keys: BTreeSet<&TrackKey> = models.values().flat_map(|m| m.keys()).collect();
    leads_hours
        .iter()
        .map(|&lead| {
            let set = keys
                .iter()
                .filter(|k| {
                    !models.is_empty()
                        && models
                            .values()
                            .all(|m| m.get(*k).is_some_and(|t| t.tracked_at(lead)))
                        && truth
                            .get(&k.storm_id)
                            .and_then(|t| t.fix_at(k.init + Duration::hours(lead as i64)))
                            .is_some()
                })
                .map(|k| (*k).clone())
                .collect();
            (lead, set)
        })
        .collect()
}

fn paired_fixes<'a>(
    model: &'a ModelTracks,
    truth: &'a BTreeMap<String, StormTrack>,
    sample: &BTreeSet<TrackKey>,
    lead_hours: u32,
) -> Result<Vec<(&'a StormFix, &'a StormFix)>, CycloneError> {
    sample
        .iter()
        .map(|k| {
            let missing = |source_name: &str| CycloneError::MissingFix {
                storm_id: k.storm_id.clone(),
                source_name: source_name.to_string(),
                lead_hours,
            };
            let m = model
                .get(k)
                .and_then(|t| t.fix_at_lead(lead_hours))
                .ok_or_else(|| missing("model"))?;
            let t = truth
                .get(&k.storm_id)
                .and_then(|t| t.fix_at(k.init + Duration::hours(lead_hours as i64)))
                .ok_or_else(|| missing("truth"))?;
            Ok((m, t))
        })
        .collect()
}

/// Mean great-circle distance (km) between model and truth centres over the
/// sample; `None` when the sample is empty.
pub fn track_dpe(
    model: &ModelTracks,
    truth: &BTreeMap<String, StormTrack>,
    sample: &BTreeSet<TrackKey>,
    lead_hours: u32,
) -> Result<Option<f64>, CycloneError> {
    let pairs = paired_fixes(model, truth, sample, lead_hours)?;
    if pairs.is_empty() {
        return Ok(None);
    }
    let total: f64 = pairs
        .iter()
        .map(|(m, t)| haversine_km(m.position(), t.position()))
        .sum();
    Ok(Some(total / pairs.len() as f64))
}

/// Intensity errors, model minus truth. Pressure in hPa, wind in m/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntensityErrors {
    pub mae_p_hpa: f64,
    pub bias_p_hpa: f64,
    pub mae_v_ms: f64,
    pub bias_v_ms: f64,
}

pub fn intensity_errors(
    model: &ModelTracks,
    truth: &BTreeMap<String, StormTrack>,
    sample: &BTreeSet<TrackKey>,
    lead_hours: u32,
) -> Result<Option<IntensityErrors>, CycloneError> {
    let pairs = paired_fixes(model, truth, sample, lead_hours)?;
    if pairs.is_empty() {
        return Ok(None);
    }
    let n = pairs.len() as f64;
    let (mut mae_p, mut bias_p, mut mae_v, mut bias_v) = (0.0, 0.0, 0.0, 0.0);
    for (m, t) in &pairs {
        let dp = (m.min_mslp_pa - t.min_mslp_pa) / 100.0;
        let dv = m.max_wind_ms - t.max_wind_ms;
        mae_p += dp.abs();
        bias_p += dp;
        mae_v += dv.abs();
        bias_v += dv;
    }
    Ok(Some(IntensityErrors {
        mae_p_hpa: mae_p / n,
        bias_p_hpa: bias_p / n,
        mae_v_ms: mae_v / n,
        bias_v_ms: bias_v / n,
    }))
}
