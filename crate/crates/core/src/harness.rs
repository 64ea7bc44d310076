//! Synthetic truth (seasonal + diurnal cycle, spatially smoothed AR(1) noise,
//! analytic vortices, planted temperature episodes) and reference
//! forecasters. Everything is seeded; emitted values are rounded to f32 so
//! they survive the on-disk format unchanged.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Datelike, Duration, NaiveDate, TimeZone, Timelike, Utc};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cyclones::{StormFix, StormTrack};
use crate::grid::{cos_lat, haversine_km, normalize_lon, GeoGrid, GridError, GridField, VariableId, EARTH_RADIUS_KM};
use crate::io::{self, IoError, RegionBox, RunManifest, StationFiles};
use crate::stations::Station;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Io(#[from] IoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GridSpec {
    Global {
        n_lat: usize,
        n_lon: usize,
    },
    Regular {
        lat_start: f64,
        lat_step: f64,
        n_lat: usize,
        lon_start: f64,
        lon_step: f64,
        n_lon: usize,
    },
}

impl GridSpec {
    pub fn build(&self) -> Result<GeoGrid, GridError> {
        match *self {
            GridSpec::Global { n_lat, n_lon } => GeoGrid::global(n_lat, n_lon),
            GridSpec::Regular {
                lat_start,
                lat_step,
                n_lat,
                lon_start,
                lon_step,
                n_lon,
            } => GeoGrid::regular(lat_start, lat_step, n_lat, lon_start, lon_step, n_lon),
        }
    }
}

/// Deterministic cycle plus red noise for one variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessSpec {
    pub mean: f64,
    /// Added per degree of |latitude|.
    #[serde(default)]
    pub lat_gradient: f64,
    #[serde(default)]
    pub seasonal_amplitude: f64,
    /// Day of year of the seasonal maximum.
    #[serde(default = "default_peak_day")]
    pub seasonal_peak_day: f64,
    #[serde(default)]
    pub diurnal_amplitude: f64,
    /// Local solar hour of the diurnal maximum.
    #[serde(default = "default_peak_hour")]
    pub diurnal_peak_hour: f64,
    #[serde(default)]
    pub noise_std: f64,
    /// AR(1) coefficient per 6 h step.
    #[serde(default)]
    pub lag1: f64,
    /// Gaussian smoothing length of the spatial noise, km.
    #[serde(default)]
    pub correlation_km: f64,
}

fn default_peak_day() -> f64 {
    196.0
}

fn default_peak_hour() -> f64 {
    15.0
}

impl ProcessSpec {
    pub fn constant(mean: f64) -> Self {
        Self {
            mean,
            lat_gradient: 0.0,
            seasonal_amplitude: 0.0,
            seasonal_peak_day: default_peak_day(),
            diurnal_amplitude: 0.0,
            diurnal_peak_hour: default_peak_hour(),
            noise_std: 0.0,
            lag1: 0.0,
            correlation_km: 0.0,
        }
    }

    /// The noise-free part of the process.
    pub fn deterministic(&self, t: DateTime<Utc>, lat: f64, lon: f64) -> f64 {
        let hour = t.hour() as f64 + t.minute() as f64 / 60.0;
        let doy = t.ordinal0() as f64 + hour / 24.0;
        let local = hour + normalize_lon(lon) / 15.0;
        self.mean
            + self.lat_gradient * lat.abs()
            + self.seasonal_amplitude * (2.0 * PI * (doy - self.seasonal_peak_day) / 365.25).cos()
            + self.diurnal_amplitude * (2.0 * PI * (local - self.diurnal_peak_hour) / 24.0).cos()
    }
}

fn default_vmax() -> f64 {
    35.0
}

fn default_rmw() -> f64 {
    100.0
}

/// Gaussian MSL depression `depth · exp(-d²/L²)` moving at a constant
/// velocity, with a cyclonic wind profile peaking at `rmw_km`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VortexSpec {
    pub storm_id: String,
    pub start: DateTime<Utc>,
    pub duration_hours: u32,
    pub lat: f64,
    pub lon: f64,
    pub depth_pa: f64,
    pub efold_km: f64,
    /// Translation, m/s towards east and north.
    pub u_ms: f64,
    pub v_ms: f64,
    #[serde(default = "default_vmax")]
    pub max_wind_ms: f64,
    #[serde(default = "default_rmw")]
    pub rmw_km: f64,
}

impl VortexSpec {
    pub fn active(&self, t: DateTime<Utc>) -> bool {
        t >= self.start && t <= self.start + Duration::hours(self.duration_hours as i64)
    }

    /// Analytic centre: latitude advances with `v_ms`, longitude with `u_ms`
    /// scaled by the starting latitude's circle.
    pub fn center(&self, t: DateTime<Utc>) -> (f64, f64) {
        let secs = (t - self.start).num_seconds() as f64;
        let r_m = EARTH_RADIUS_KM * 1000.0;
        let lat = self.lat + (self.v_ms * secs / r_m).to_degrees();
        let lon = self.lon + (self.u_ms * secs / (r_m * cos_lat(self.lat))).to_degrees();
        (lat, normalize_lon(lon))
    }

    pub fn pressure_anomaly(&self, d_km: f64) -> f64 {
        -self.depth_pa * (-(d_km / self.efold_km).powi(2)).exp()
    }

    pub fn tangential_wind(&self, d_km: f64) -> f64 {
        let x = d_km / self.rmw_km;
        self.max_wind_ms * x * (1.0 - x).exp()
    }

    /// Cyclonic (u, v) at a point: counter-clockwise north of the equator.
    pub fn wind(&self, center: (f64, f64), lat: f64, lon: f64) -> (f64, f64) {
        let d = haversine_km(center, (lat, lon));
        if d == 0.0 {
            return (0.0, 0.0);
        }
        let mut dlon = normalize_lon(lon) - center.1;
        if dlon > 180.0 {
            dlon -= 360.0;
        } else if dlon < -180.0 {
            dlon += 360.0;
        }
        let dx = EARTH_RADIUS_KM * cos_lat(0.5 * (lat + center.0)) * dlon.to_radians();
        let dy = EARTH_RADIUS_KM * (lat - center.0).to_radians();
        let norm = dx.hypot(dy);
        if norm == 0.0 {
            return (0.0, 0.0);
        }
        let s = if center.0 >= 0.0 { 1.0 } else { -1.0 };
        let vt = self.tangential_wind(d) * s;
        (-vt * dy / norm, vt * dx / norm)
    }
}

/// T2M offset over whole days at the node nearest (`lat`, `lon`), or every
/// node within `radius_km`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeSpec {
    pub lat: f64,
    pub lon: f64,
    pub start: NaiveDate,
    pub days: u32,
    pub amplitude: f64,
    #[serde(default)]
    pub radius_km: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForecasterSpec {
    Persistence { name: String },
    Smoothed { name: String, kernel_width: usize },
    Perfect { name: String },
}

impl ForecasterSpec {
    pub fn name(&self) -> &str {
        match self {
            ForecasterSpec::Persistence { name } | ForecasterSpec::Smoothed { name, .. } | ForecasterSpec::Perfect { name } => name,
        }
    }
}

/// Multiplies one observation, to exercise QC.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutlierSpec {
    pub station: usize,
    pub time: DateTime<Utc>,
    pub variable: VariableId,
    pub factor: f64,
}

/// Stations placed on grid nodes; each synoptic value is reported twice,
/// 10 minutes either side of the hour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationSpec {
    /// (row, column) grid nodes.
    pub nodes: Vec<(usize, usize)>,
    #[serde(default)]
    pub outliers: Vec<OutlierSpec>,
}

fn default_max_lead() -> u32 {
    io::DEFAULT_MAX_LEAD_HOURS
}

fn default_init_every() -> u32 {
    24
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticScenario {
    pub seed: u64,
    pub grid: GridSpec,
    /// First initialization time; evaluation truth starts here.
    pub start: DateTime<Utc>,
    /// Number of days carrying initializations.
    pub days: u32,
    /// Whole calendar years of history before the start year.
    #[serde(default)]
    pub history_years: u32,
    #[serde(default = "default_max_lead")]
    pub max_lead_hours: u32,
    #[serde(default = "default_init_every")]
    pub init_every_hours: u32,
    pub variables: BTreeMap<VariableId, ProcessSpec>,
    #[serde(default)]
    pub vortices: Vec<VortexSpec>,
    #[serde(default)]
    pub episodes: Vec<EpisodeSpec>,
    #[serde(default)]
    pub forecasters: Vec<ForecasterSpec>,
    #[serde(default)]
    pub stations: Option<StationSpec>,
    #[serde(default)]
    pub regions: BTreeMap<String, RegionBox>,
}

impl SyntheticScenario {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::InvalidScenario(m));
        if self.variables.is_empty() {
            return bad("no variables".into());
        }
        if let Some(v) = self.variables.keys().find(|v| v.is_derived()) {
            return bad(format!("{v} is derived and cannot be generated"));
        }
        for (v, p) in &self.variables {
            if !(p.lag1.abs() < 1.0) || p.noise_std < 0.0 || p.correlation_km < 0.0 {
                return bad(format!("{v}: need |lag1| < 1, noise_std >= 0, correlation_km >= 0"));
            }
        }
        if self.start.minute() != 0 || self.start.second() != 0 || self.start.hour() % 6 != 0 {
            return bad("start must be a synoptic hour".into());
        }
        if self.init_every_hours == 0 || self.init_every_hours % 6 != 0 || self.max_lead_hours % 6 != 0 {
            return bad("init spacing and max lead must be positive multiples of 6 h".into());
        }
        for f in &self.forecasters {
            if let ForecasterSpec::Smoothed { kernel_width, .. } = f {
                if kernel_width % 2 == 0 {
                    return bad(format!("smoothing width {kernel_width} must be odd"));
                }
            }
        }
        if !self.vortices.is_empty()
            && [VariableId::MSL, VariableId::U10, VariableId::V10]
                .iter()
                .any(|v| !self.variables.contains_key(v))
        {
            return bad("vortices need MSL, U10 and V10".into());
        }
        for v in &self.vortices {
            if !(v.efold_km > 0.0 && v.rmw_km > 0.0 && v.depth_pa >= 0.0) {
                return bad(format!("vortex {}: lengths must be positive", v.storm_id));
            }
        }
        if !self.episodes.is_empty() && !self.variables.contains_key(&VariableId::T2M) {
            return bad("episodes need T2M".into());
        }
        let grid = self.grid.build()?;
        if let Some(s) = &self.stations {
            if let Some(&(i, j)) = s.nodes.iter().find(|(i, j)| *i >= grid.n_lat() || *j >= grid.n_lon()) {
                return bad(format!("station node ({i}, {j}) outside the grid"));
            }
        }
        Ok(())
    }

    pub fn init_times(&self) -> Vec<DateTime<Utc>> {
        let n = self.days as i64 * 24 / self.init_every_hours as i64;
        (0..n)
            .map(|k| self.start + Duration::hours(k * self.init_every_hours as i64))
            .collect()
    }

    pub fn history_year_list(&self) -> Vec<i32> {
        let y = self.start.year();
        (y - self.history_years as i32..y).collect()
    }

    fn generation_start(&self) -> DateTime<Utc> {
        match self.history_year_list().first() {
            Some(&y) => Utc.with_ymd_and_hms(y, 1, 1, 0, 0, 0).single().expect("valid date"),
            None => self.start,
        }
    }

    /// Last truth time: the final initialization plus the maximum lead.
    pub fn truth_end(&self) -> DateTime<Utc> {
        let last_init = self.init_times().last().copied().unwrap_or(self.start);
        last_init + Duration::hours(self.max_lead_hours as i64)
    }
}

/// Generated truth: history years and the evaluation period, 6-hourly.
#[derive(Debug, Clone)]
pub struct SyntheticRun {
    pub grid: Arc<GeoGrid>,
    pub history: BTreeMap<VariableId, Vec<GridField>>,
    pub truth: BTreeMap<VariableId, Vec<GridField>>,
    pub best_track: Vec<StormTrack>,
}

impl SyntheticRun {
    pub fn truth_at(&self, var: VariableId, t: DateTime<Utc>) -> Option<&GridField> {
        let fields = self.truth.get(&var)?;
        let first = fields.first()?.valid_time();
        let k = (t - first).num_hours();
        if k < 0 || k % 6 != 0 {
            return None;
        }
        fields.get((k / 6) as usize).filter(|f| f.valid_time() == t)
    }
}

pub fn quantize(v: f64) -> f64 {
    v as f32 as f64
}

/// Normalized 1-D Gaussian taps for a smoothing length in grid steps.
fn gaussian_taps(sigma_steps: f64) -> Vec<f64> {
    if !(sigma_steps > 1e-6) {
        return vec![1.0];
    }
    let half = (3.0 * sigma_steps).ceil() as i64;
    (-half..=half)
        .map(|k| (-0.5 * (k as f64 / sigma_steps).powi(2)).exp())
        .collect()
}

/// Separable Gaussian smoothing of white noise, rescaled per node to unit
/// variance (so truncated kernels at open edges keep the same variance).
struct NoiseShaper {
    n_lat: usize,
    n_lon: usize,
    wraps: bool,
    lat_taps: Vec<f64>,
    lon_taps: Vec<f64>,
    scale: Vec<f64>,
}

impl NoiseShaper {
    fn new(grid: &GeoGrid, correlation_km: f64) -> Self {
        let dy = grid.lat_spacing_km();
        let dx = grid.lon_spacing_deg().to_radians() * EARTH_RADIUS_KM;
        let sig = |d: f64| if d > 0.0 { correlation_km / d } else { 0.0 };
        let lat_taps = gaussian_taps(sig(dy));
        let lon_taps = gaussian_taps(sig(dx).min(grid.n_lon() as f64 / 6.0));
        let mut shaper = Self {
            n_lat: grid.n_lat(),
            n_lon: grid.n_lon(),
            wraps: grid.wraps_lon(),
            lat_taps,
            lon_taps,
            scale: Vec::new(),
        };
        // variance of filtered unit white noise = Σ over contributing taps²
        let lat_var: Vec<f64> = (0..shaper.n_lat)
            .map(|i| shaper.lat_contrib(i).map(|(_, w)| w * w).sum())
            .collect();
        let lon_var: Vec<f64> = (0..shaper.n_lon)
            .map(|j| shaper.lon_contrib(j).map(|(_, w)| w * w).sum())
            .collect();
        shaper.scale = lat_var
            .iter()
            .flat_map(|a| lon_var.iter().map(move |b| 1.0 / (a * b).sqrt()))
            .collect();
        shaper
    }

    fn lat_contrib(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let half = (self.lat_taps.len() / 2) as i64;
        let n = self.n_lat as i64;
        self.lat_taps.iter().enumerate().filter_map(move |(k, &w)| {
            let src = i as i64 + k as i64 - half;
            (0..n).contains(&src).then_some((src as usize, w))
        })
    }

    fn lon_contrib(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let half = (self.lon_taps.len() / 2) as i64;
        let n = self.n_lon as i64;
        let wraps = self.wraps;
        self.lon_taps.iter().enumerate().filter_map(move |(k, &w)| {
            let src = j as i64 + k as i64 - half;
            if wraps {
                Some((src.rem_euclid(n) as usize, w))
            } else {
                (0..n).contains(&src).then_some((src as usize, w))
            }
        })
    }

    fn shape(&self, white: &[f64]) -> Vec<f64> {
        let (n_lat, n_lon) = (self.n_lat, self.n_lon);
        let mut tmp = vec![0.0; white.len()];
        for i in 0..n_lat {
            for j in 0..n_lon {
                tmp[i * n_lon + j] = self.lon_contrib(j).map(|(s, w)| w * white[i * n_lon + s]).sum();
            }
        }
        let mut out = vec![0.0; white.len()];
        for i in 0..n_lat {
            for j in 0..n_lon {
                let v: f64 = self.lat_contrib(i).map(|(s, w)| w * tmp[s * n_lon + j]).sum();
                out[i * n_lon + j] = v * self.scale[i * n_lon + j];
            }
        }
        out
    }
}

fn variable_stream_index(var: VariableId) -> u64 {
    VariableId::ALL.iter().position(|v| *v == var).expect("listed") as u64
}

/// Streams one variable's truth from `start`, 6-hourly.
pub struct VariableGenerator<'a> {
    scenario: &'a SyntheticScenario,
    grid: Arc<GeoGrid>,
    var: VariableId,
    process: ProcessSpec,
    shaper: NoiseShaper,
    rng: ChaCha8Rng,
    state: Vec<f64>,
    episode_nodes: Vec<Vec<usize>>,
    next_time: DateTime<Utc>,
}

impl<'a> VariableGenerator<'a> {
    pub fn new(scenario: &'a SyntheticScenario, grid: Arc<GeoGrid>, var: VariableId) -> Self {
        let process = scenario.variables[&var];
        let shaper = NoiseShaper::new(&grid, process.correlation_km);
        let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
        rng.set_stream(variable_stream_index(var));
        let state = if process.noise_std > 0.0 {
            let white: Vec<f64> = (0..grid.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
            shaper.shape(&white).iter().map(|x| x * process.noise_std).collect()
        } else {
            vec![0.0; grid.len()]
        };
        let episode_nodes = if var == VariableId::T2M {
            scenario.episodes.iter().map(|e| episode_nodes(&grid, e)).collect()
        } else {
            Vec::new()
        };
        Self {
            scenario,
            grid,
            var,
            process,
            shaper,
            rng,
            state,
            episode_nodes,
            next_time: scenario.generation_start(),
        }
    }

    fn advance_noise(&mut self) {
        let p = self.process;
        if p.noise_std == 0.0 {
            return;
        }
        let white: Vec<f64> = (0..self.grid.len()).map(|_| StandardNormal.sample(&mut self.rng)).collect();
        let shaped = self.shaper.shape(&white);
        let innov = (1.0 - p.lag1 * p.lag1).sqrt() * p.noise_std;
        for (s, e) in self.state.iter_mut().zip(shaped) {
            *s = p.lag1 * *s + innov * e;
        }
    }

    pub fn next_field(&mut self) -> GridField {
        let t = self.next_time;
        let g = &self.grid;
        let mut values = Vec::with_capacity(g.len());
        for &lat in g.lat_deg() {
            for &lon in g.lon_deg() {
                values.push(self.process.deterministic(t, lat, lon));
            }
        }
        for (v, n) in values.iter_mut().zip(&self.state) {
            *v += n;
        }
        for vortex in self.scenario.vortices.iter().filter(|v| v.active(t)) {
            let c = vortex.center(t);
            for (i, &lat) in g.lat_deg().iter().enumerate() {
                for (j, &lon) in g.lon_deg().iter().enumerate() {
                    let k = g.index(i, j);
                    match self.var {
                        VariableId::MSL => values[k] += vortex.pressure_anomaly(haversine_km(c, (lat, lon))),
                        VariableId::U10 => values[k] += vortex.wind(c, lat, lon).0,
                        VariableId::V10 => values[k] += vortex.wind(c, lat, lon).1,
                        _ => {}
                    }
                }
            }
        }
        for (e, nodes) in self.scenario.episodes.iter().zip(&self.episode_nodes) {
            let day = t.date_naive();
            if day >= e.start && day < e.start + Duration::days(e.days as i64) {
                for &k in nodes {
                    values[k] += e.amplitude;
                }
            }
        }
        let values = values.into_iter().map(quantize).collect();
        self.advance_noise();
        self.next_time = t + Duration::hours(6);
        GridField::new(self.grid.clone(), self.var, t, 0, values).expect("finite synthetic values")
    }
}

fn episode_nodes(grid: &GeoGrid, e: &EpisodeSpec) -> Vec<usize> {
    let mut best = (f64::INFINITY, 0);
    let mut within = Vec::new();
    for (i, &lat) in grid.lat_deg().iter().enumerate() {
        for (j, &lon) in grid.lon_deg().iter().enumerate() {
            let d = haversine_km((e.lat, e.lon), (lat, lon));
            if d < best.0 {
                best = (d, grid.index(i, j));
            }
            if d <= e.radius_km {
                within.push(grid.index(i, j));
            }
        }
    }
    if within.is_empty() {
        vec![best.1]
    } else {
        within
    }
}

/// Best-track fixes for a vortex: analytic centre, background minus depth,
/// and peak tangential wind on top of the background wind at the centre.
pub fn vortex_best_track(scenario: &SyntheticScenario, v: &VortexSpec) -> Option<StormTrack> {
    let end = scenario.truth_end();
    let bg = |var: VariableId, t: DateTime<Utc>, c: (f64, f64)| {
        scenario.variables.get(&var).map_or(0.0, |p| p.deterministic(t, c.0, c.1))
    };
    let mut fixes = Vec::new();
    let mut t = v.start;
    while v.active(t) && t <= end {
        let c = v.center(t);
        fixes.push(StormFix {
            time: t,
            lat: c.0,
            lon: c.1,
            min_mslp_pa: bg(VariableId::MSL, t, c) - v.depth_pa,
            max_wind_ms: v.max_wind_ms + bg(VariableId::U10, t, c).hypot(bg(VariableId::V10, t, c)),
        });
        t += Duration::hours(6);
    }
    StormTrack::truth(v.storm_id.clone(), fixes).ok()
}

/// Generates history and evaluation truth for every variable (variables in
/// parallel, each from its own RNG stream).
pub fn generate_truth(scenario: &SyntheticScenario) -> Result<SyntheticRun, HarnessError> {
    scenario.validate()?;
    let grid = Arc::new(scenario.grid.build()?);
    let start = scenario.start;
    let end = scenario.truth_end();
    let gen_start = scenario.generation_start();
    let n_steps = ((end - gen_start).num_hours() / 6 + 1) as usize;
    let vars: Vec<VariableId> = scenario.variables.keys().copied().collect();
    let streams: Vec<(VariableId, Vec<GridField>, Vec<GridField>)> = vars
        .par_iter()
        .map(|&var| {
            let mut gen = VariableGenerator::new(scenario, grid.clone(), var);
            let mut history = Vec::new();
            let mut truth = Vec::new();
            for _ in 0..n_steps {
                let f = gen.next_field();
                if f.valid_time() < start {
                    if f.valid_time().year() < start.year() {
                        history.push(f);
                    }
                } else {
                    truth.push(f);
                }
            }
            (var, history, truth)
        })
        .collect();
    let mut run = SyntheticRun {
        grid,
        history: BTreeMap::new(),
        truth: BTreeMap::new(),
        best_track: scenario
            .vortices
            .iter()
            .filter_map(|v| vortex_best_track(scenario, v))
            .collect(),
    };
    for (var, h, t) in streams {
        if !h.is_empty() {
            run.history.insert(var, h);
        }
        run.truth.insert(var, t);
    }
    Ok(run)
}

/// Every lead equals the initial state.
pub fn persistence_forecast(init: &GridField, leads: &[u32]) -> Result<Vec<GridField>, GridError> {
    leads
        .iter()
        .map(|&l| init.clone().relabel(init.valid_time() + Duration::hours(l as i64), l))
        .collect()
}

/// Centred zonal moving average of odd `width` (wrapping on global grids,
/// truncated at the edges of regional ones).
pub fn zonal_boxcar(field: &GridField, width: usize) -> Result<GridField, GridError> {
    if width % 2 == 0 {
        return Err(GridError::InvalidAxis(format!("boxcar width {width} must be odd")));
    }
    if width == 1 {
        return Ok(field.clone());
    }
    let g = field.grid();
    let n = g.n_lon() as i64;
    let half = (width / 2) as i64;
    let mut out = Vec::with_capacity(g.len());
    for i in 0..g.n_lat() {
        let row = field.row(i);
        for j in 0..n {
            let (mut sum, mut count) = (0.0, 0usize);
            for k in j - half..=j + half {
                let src = if g.wraps_lon() {
                    Some(k.rem_euclid(n))
                } else {
                    (0..n).contains(&k).then_some(k)
                };
                if let Some(s) = src {
                    sum += row[s as usize];
                    count += 1;
                }
            }
            out.push(sum / count as f64);
        }
    }
    field.with_values(out)
}

/// Width at a lead: 1 at lead 0, then `1 + (kernel_width - 1) · ⌈lead/24⌉`,
/// capped at the widest odd window the row allows.
pub fn smoothing_width(kernel_width: usize, lead_hours: u32, n_lon: usize) -> usize {
    let cap = if n_lon % 2 == 1 { n_lon } else { n_lon.saturating_sub(1).max(1) };
    let days = lead_hours.div_ceil(24) as usize;
    (1 + kernel_width.saturating_sub(1) * days).min(cap)
}

/// Persistence smoothed zonally, more strongly at longer leads.
pub fn smoothed_forecast(init: &GridField, leads: &[u32], kernel_width: usize) -> Result<Vec<GridField>, GridError> {
    if kernel_width % 2 == 0 {
        return Err(GridError::InvalidAxis(format!("kernel width {kernel_width} must be odd")));
    }
    leads
        .iter()
        .map(|&l| {
            let w = smoothing_width(kernel_width, l, init.grid().n_lon());
            let s = zonal_boxcar(init, w)?;
            let q: Vec<f64> = s.values().iter().map(|&v| quantize(v)).collect();
            init.with_values(q)?.relabel(init.valid_time() + Duration::hours(l as i64), l)
        })
        .collect()
}

/// A forecast for one (forecaster, variable, init), all leads.
pub fn forecast(
    spec: &ForecasterSpec,
    run: &SyntheticRun,
    var: VariableId,
    init: DateTime<Utc>,
    leads: &[u32],
) -> Result<Vec<GridField>, HarnessError> {
    let missing = |t: DateTime<Utc>| HarnessError::InvalidScenario(format!("no {var} truth at {t}"));
    let init_field = run.truth_at(var, init).ok_or_else(|| missing(init))?;
    Ok(match spec {
        ForecasterSpec::Persistence { .. } => persistence_forecast(init_field, leads)?,
        ForecasterSpec::Smoothed { kernel_width, .. } => smoothed_forecast(init_field, leads, *kernel_width)?,
        ForecasterSpec::Perfect { .. } => leads
            .iter()
            .map(|&l| {
                let t = init + Duration::hours(l as i64);
                let f = run.truth_at(var, t).ok_or_else(|| missing(t))?;
                Ok(f.clone().relabel(t, l)?)
            })
            .collect::<Result<_, HarnessError>>()?,
    })
}

pub fn station_list(grid: &GeoGrid, spec: &StationSpec) -> Vec<Station> {
    spec.nodes
        .iter()
        .enumerate()
        .map(|(k, &(i, j))| Station {
            id: format!("ST{k:04}"),
            lat: grid.lat_deg()[i],
            lon: grid.lon_deg()[j],
            elevation_m: 0.0,
        })
        .collect()
}

/// Raw station reports sampled from truth at the station nodes over the
/// evaluation period. WS10 is reported when U10 and V10 exist.
pub fn station_observations(run: &SyntheticRun, spec: &StationSpec) -> Vec<io::RawObservation> {
    let grid = &run.grid;
    let stations = station_list(grid, spec);
    let mut vars: Vec<VariableId> = [VariableId::T2M, VariableId::D2M, VariableId::MSL]
        .into_iter()
        .filter(|v| run.truth.contains_key(v))
        .collect();
    let wind = run.truth.contains_key(&VariableId::U10) && run.truth.contains_key(&VariableId::V10);
    if wind {
        vars.push(VariableId::WS10);
    }
    let times: Vec<DateTime<Utc>> = run
        .truth
        .values()
        .next()
        .map(|f| f.iter().map(GridField::valid_time).collect())
        .unwrap_or_default();
    let mut out = Vec::new();
    for (k, (st, &(i, j))) in stations.iter().zip(&spec.nodes).enumerate() {
        let node = grid.index(i, j);
        for &t in &times {
            for &var in &vars {
                let value = if var == VariableId::WS10 {
                    let u = run.truth_at(VariableId::U10, t).expect("aligned").values()[node];
                    let v = run.truth_at(VariableId::V10, t).expect("aligned").values()[node];
                    u.hypot(v)
                } else {
                    run.truth_at(var, t).expect("aligned").values()[node]
                };
                let factor = spec
                    .outliers
                    .iter()
                    .filter(|o| o.station == k && o.time == t && o.variable == var)
                    .fold(1.0, |acc, o| acc * o.factor);
                for offset in [-10, 10] {
                    out.push(io::RawObservation {
                        station_id: st.id.clone(),
                        time: t + Duration::minutes(offset),
                        variable: var,
                        value: value * factor,
                    });
                }
            }
        }
    }
    out
}

/// Relative file layout of a written dataset.
pub mod layout {
    pub const TRUTH: &str = "truth/{var}/{valid}.rbg";
    pub const HISTORY: &str = "history/{var}/{valid}.rbg";
    pub const MODELS: &str = "models/{model}/{init}/{var}_{lead}.rbg";
    pub const CLIMATOLOGY: &str = "climatology/{var}_daily_mean.rbg";
    pub const THRESHOLDS: &str = "climatology/T2M_thresholds.rbg";
    pub const BEST_TRACK: &str = "besttrack.csv";
    pub const STATION_META: &str = "stations/meta.csv";
    pub const STATION_OBS: &str = "stations/obs.csv";
    pub const MANIFEST: &str = "manifest.json";
}

/// Manifest describing a scenario written with [`layout`]; climatology and
/// thresholds are listed only when `with_climatology` is set.
pub fn scenario_manifest(scenario: &SyntheticScenario, run: &SyntheticRun, with_climatology: bool) -> RunManifest {
    let has_history = !run.history.is_empty();
    RunManifest {
        truth: layout::TRUTH.into(),
        models: scenario
            .forecasters
            .iter()
            .map(|f| (f.name().to_string(), layout::MODELS.to_string()))
            .collect(),
        init_times: scenario.init_times(),
        max_lead_hours: scenario.max_lead_hours,
        lead_hours: None,
        variables: scenario.variables.keys().copied().collect(),
        regions: scenario.regions.clone(),
        climatology: (has_history && with_climatology).then(|| layout::CLIMATOLOGY.into()),
        thresholds: (has_history && with_climatology && run.truth.contains_key(&VariableId::T2M))
            .then(|| layout::THRESHOLDS.into()),
        history: has_history.then(|| io::HistorySpec {
            pattern: layout::HISTORY.into(),
            years: scenario.history_year_list(),
        }),
        best_track: (!run.best_track.is_empty()).then(|| layout::BEST_TRACK.into()),
        stations: scenario.stations.as_ref().map(|_| StationFiles {
            meta: layout::STATION_META.into(),
            obs: layout::STATION_OBS.into(),
        }),
    }
}

/// Writes truth, history, forecasts, best track and station files under
/// `dir` and returns the manifest path. Climatology stores are not written
/// here; the manifest written omits them.
pub fn write_dataset(scenario: &SyntheticScenario, run: &SyntheticRun, dir: &Path) -> Result<PathBuf, HarnessError> {
    let manifest = scenario_manifest(scenario, run, false);
    let resolve = |p: String| dir.join(p);
    let fields: Vec<&GridField> = run.truth.values().flatten().chain(run.history.values().flatten()).collect();
    fields.par_iter().try_for_each(|f| {
        let pattern = if f.valid_time() < scenario.start { layout::HISTORY } else { layout::TRUTH };
        let p = io::expand_pattern(pattern, None, Some(f.variable()), Some(f.valid_time()), None, None);
        io::write_grid(f, &resolve(p))
    })?;
    let leads: Vec<u32> = (0..=scenario.max_lead_hours).step_by(6).collect();
    let jobs: Vec<(&ForecasterSpec, VariableId, DateTime<Utc>)> = scenario
        .forecasters
        .iter()
        .flat_map(|f| {
            scenario
                .variables
                .keys()
                .flat_map(move |&v| scenario.init_times().into_iter().map(move |t| (f, v, t)))
        })
        .collect();
    jobs.par_iter().try_for_each(|&(spec, var, init)| -> Result<(), HarnessError> {
        for f in forecast(spec, run, var, init, &leads)? {
            let p = io::expand_pattern(
                layout::MODELS,
                Some(spec.name()),
                Some(var),
                Some(f.valid_time()),
                Some(init),
                Some(f.lead_hours()),
            );
            io::write_grid(&f, &resolve(p))?;
        }
        Ok(())
    })?;
    if !run.best_track.is_empty() {
        io::write_besttrack(&resolve(layout::BEST_TRACK.into()), &run.best_track)?;
    }
    if let Some(spec) = &scenario.stations {
        io::write_station_csvs(
            &resolve(layout::STATION_META.into()),
            &resolve(layout::STATION_OBS.into()),
            &station_list(&run.grid, spec),
            &station_observations(run, spec),
        )?;
    }
    let path = resolve(layout::MANIFEST.into());
    io::write_manifest(&path, &manifest)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::RowTransform;
    use proptest::prelude::*;

    fn basic(seed: u64) -> SyntheticScenario {
        let mut variables = BTreeMap::new();
        variables.insert(
            VariableId::T2M,
            ProcessSpec {
                mean: 285.0,
                lat_gradient: -0.4,
                seasonal_amplitude: 8.0,
                diurnal_amplitude: 3.0,
                noise_std: 1.5,
                lag1: 0.9,
                correlation_km: 800.0,
                ..ProcessSpec::constant(0.0)
            },
        );
        SyntheticScenario {
            seed,
            grid: GridSpec::Global { n_lat: 9, n_lon: 16 },
            start: Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap(),
            days: 3,
            history_years: 0,
            max_lead_hours: 24,
            init_every_hours: 24,
            variables,
            vortices: vec![],
            episodes: vec![],
            forecasters: vec![],
            stations: None,
            regions: BTreeMap::new(),
        }
    }

    #[test]
    fn same_seed_same_stream() {
        let a = generate_truth(&basic(7)).unwrap();
        let b = generate_truth(&basic(7)).unwrap();
        let c = generate_truth(&basic(8)).unwrap();
        assert_eq!(a.truth, b.truth);
        assert_ne!(a.truth, c.truth);
        assert_eq!(a.truth[&VariableId::T2M].len(), 3 * 4 + 1);
    }

    #[test]
    fn noise_free_equals_closed_form() {
        let mut s = basic(1);
        s.variables.get_mut(&VariableId::T2M).unwrap().noise_std = 0.0;
        let run = generate_truth(&s).unwrap();
        let p = s.variables[&VariableId::T2M];
        for f in &run.truth[&VariableId::T2M] {
            for (i, &lat) in run.grid.lat_deg().iter().enumerate() {
                for (j, &lon) in run.grid.lon_deg().iter().enumerate() {
                    assert_eq!(f.at(i, j), quantize(p.deterministic(f.valid_time(), lat, lon)));
                }
            }
        }
    }

    #[test]
    fn noise_has_requested_spread() {
        let mut s = basic(3);
        s.days = 200;
        s.variables.insert(VariableId::Z500, ProcessSpec { noise_std: 2.0, lag1: 0.5, correlation_km: 1500.0, ..ProcessSpec::constant(0.0) });
        let run = generate_truth(&s).unwrap();
        let vals: Vec<f64> = run.truth[&VariableId::Z500].iter().flat_map(|f| f.values().to_vec()).collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!((sd - 2.0).abs() < 0.25, "sd {sd}");
    }

    #[test]
    fn persistence_and_width_one() {
        let run = generate_truth(&basic(2)).unwrap();
        let init = &run.truth[&VariableId::T2M][0];
        let p = persistence_forecast(init, &[0, 6, 24]).unwrap();
        for f in &p {
            assert_eq!(f.values(), init.values());
        }
        assert_eq!(p[2].lead_hours(), 24);
        let s = smoothed_forecast(init, &[0, 6, 24], 1).unwrap();
        assert_eq!(s, p);
        assert!(smoothed_forecast(init, &[6], 4).is_err());
        assert_eq!(smoothing_width(5, 0, 16), 1);
        assert_eq!(smoothing_width(5, 12, 16), 5);
        assert_eq!(smoothing_width(3, 72, 161), 7);
        assert_eq!(smoothing_width(5, 240, 16), 15);
    }

    #[test]
    fn boxcar_transfer_on_pure_cosine() {
        for (n, k) in [(16usize, 1usize), (64, 3), (144, 7)] {
            let grid = Arc::new(GeoGrid::regular(45.0, -1.0, 1, 0.0, 360.0 / n as f64, n).unwrap());
            let t = Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap();
            let f = GridField::from_fn(grid, VariableId::Z500, t, 0, |_, lon| {
                3.0 * (k as f64 * lon.to_radians()).cos()
            })
            .unwrap();
            let s = zonal_boxcar(&f, 5).unwrap();
            let mut tr = RowTransform::new(n);
            let e0 = tr.energy(f.row(0), 1.0)[k];
            let e1 = tr.energy(s.row(0), 1.0)[k];
            let x = PI * k as f64 / n as f64;
            let h = (5.0 * x).sin() / (5.0 * x.sin());
            assert!((e1 / e0 - h * h).abs() < 1e-12, "n {n}: {} vs {}", e1 / e0, h * h);
        }
    }

    #[test]
    fn planted_episode_is_the_only_event() {
        use crate::climatology::{build_thresholds, DailyFieldAccumulator, DailyHistory, ThresholdConfig, calendar_day};
        use crate::extremes::{label_events, EventKind};
        let mut s = basic(5);
        s.grid = GridSpec::Regular { lat_start: 50.0, lat_step: -5.0, n_lat: 3, lon_start: 0.0, lon_step: 5.0, n_lon: 3 };
        s.days = 365;
        s.max_lead_hours = 0;
        s.history_years = 12;
        let t2m = s.variables.get_mut(&VariableId::T2M).unwrap();
        t2m.noise_std = 0.0;
        t2m.diurnal_amplitude = 0.0;
        s.episodes.push(EpisodeSpec {
            lat: 45.0,
            lon: 5.0,
            start: NaiveDate::from_ymd_opt(2025, 4, 10).unwrap(),
            days: 5,
            amplitude: 8.0,
            radius_km: 0.0,
        });
        let run = generate_truth(&s).unwrap();
        let years = s.history_year_list();
        let n = run.grid.len();
        let mut hist = DailyHistory::new(years.clone(), n);
        let mut acc = DailyFieldAccumulator::new(n);
        for f in &run.history[&VariableId::T2M] {
            acc.push(f.valid_time(), f.values()).unwrap();
        }
        let days = acc.finish();
        for (y, year) in years.iter().enumerate() {
            let mine: Vec<_> = days.iter().filter(|d| d.date.year() == *year).cloned().collect();
            hist.daily_max.fill_year(y, &mine, |d| &d.max).unwrap();
            hist.daily_min.fill_year(y, &mine, |d| &d.min).unwrap();
        }
        let th = build_thresholds(&hist, &ThresholdConfig::default()).unwrap();
        let mut acc = DailyFieldAccumulator::new(n);
        for f in &run.truth[&VariableId::T2M] {
            acc.push(f.valid_time(), f.values()).unwrap();
        }
        let truth_days = acc.finish();
        let node = run.grid.index(1, 1);
        let mut all = Vec::new();
        for loc in 0..n {
            let vals: Vec<Option<f64>> = truth_days.iter().map(|d| Some(d.max[loc])).collect();
            let taus: Vec<f64> = truth_days.iter().map(|d| th.tau_heat(calendar_day(d.date), loc)).collect();
            all.extend(label_events(loc, 0, &vals, &taus, EventKind::Heatwave));
        }
        assert_eq!(all.len(), 1, "{all:?}");
        assert_eq!(all[0].location, node);
        assert_eq!(all[0].len_days(), 5);
        assert_eq!(all[0].start_day, NaiveDate::from_ymd_opt(2025, 4, 10).unwrap().ordinal0() as i64);
    }

    #[test]
    fn vortex_best_track_follows_center() {
        let mut s = basic(1);
        s.variables.insert(VariableId::MSL, ProcessSpec::constant(101_300.0));
        s.variables.insert(VariableId::U10, ProcessSpec::constant(0.0));
        s.variables.insert(VariableId::V10, ProcessSpec::constant(0.0));
        let v = VortexSpec {
            storm_id: "X".into(),
            start: s.start,
            duration_hours: 24,
            lat: 20.0,
            lon: 140.0,
            depth_pa: 3000.0,
            efold_km: 300.0,
            u_ms: -5.0,
            v_ms: 0.0,
            max_wind_ms: 35.0,
            rmw_km: 100.0,
        };
        s.vortices.push(v.clone());
        let bt = vortex_best_track(&s, &v).unwrap();
        assert_eq!(bt.fixes.len(), 5);
        assert_eq!(bt.fixes[0].min_mslp_pa, 98_300.0);
        let moved = haversine_km(bt.fixes[0].position(), bt.fixes[4].position());
        assert!((moved - 432.0).abs() < 1.0, "{moved}");
        assert!(bt.fixes[4].lon < 140.0);
        let (u, v_) = v.wind((20.0, 140.0), 20.0, 141.0);
        assert!(u.abs() < 1e-9 && v_ > 0.0, "east of a northern storm the wind blows north");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn smoothing_never_increases_row_variance(seed in any::<u64>(), width in prop::sample::select(vec![3usize, 5, 7, 9])) {
            let run = generate_truth(&basic(seed)).unwrap();
            let f = &run.truth[&VariableId::T2M][0];
            let s = zonal_boxcar(f, width).unwrap();
            for i in 0..f.grid().n_lat() {
                let var = |r: &[f64]| {
                    let m = r.iter().sum::<f64>() / r.len() as f64;
                    r.iter().map(|v| (v - m).powi(2)).sum::<f64>()
                };
                prop_assert!(var(s.row(i)) <= var(f.row(i)) * (1.0 + 1e-12) + 1e-12);
            }
        }
    }
}
