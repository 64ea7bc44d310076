//! Orchestration: reads a run through a [`FieldSource`], builds the
//! climatology it needs and assembles a deterministic [`Scorecard`].
//!
//! Work fans out over (model, variable, lead) with rayon; results are
//! collected in task order so output never depends on scheduling.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use chrono::{DateTime, Datelike, Duration, NaiveDate, Timelike, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::climatology::{
    build_daily_mean_climatology, build_thresholds, calendar_day, ClimatologyError, DailyFieldAccumulator,
    DailyFields, DailyHistory, DailyMeanClimatology, DailyStack, ThresholdConfig, ThresholdField,
};
use crate::cyclones::{
    homogeneous_sample, intensity_errors, track_dpe, track_storm, CycloneError, ModelTracks, StormTrack, TrackKey,
    TrackSource, TrackerConfig,
};
use crate::extremes::{categorical_scores, label_events, match_events, Contingency, EventKind, EventSegment, DEFAULT_GAMMA};
use crate::grid::{derive_wind_speed, interp_to_stations, latitude_weights, GeoGrid, GridError, GridField, VariableId};
use crate::harness::{self, ForecasterSpec, HarnessError, SyntheticRun, SyntheticScenario};
use crate::io::{self, IoError, LoadedManifest, RegionBox, RunManifest};
use crate::metrics::{self, CompensatedSum, Metric, MetricError};
use crate::score::Score;
use crate::spectra::{self, SpectraError};
use crate::stations::{apply_qc, station_scores, QcCounts, QcThresholds, StationError, StationTable};

pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const DEFAULT_SPECTRA_LEADS: [u32; 4] = [6, 72, 120, 240];
pub const DEFAULT_EXTREME_LEAD_DAYS: [u32; 4] = [1, 3, 7, 10];
pub const DEFAULT_CYCLONE_LEADS: [u32; 3] = [24, 72, 120];
pub const GLOBAL_REGION: &str = "global";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Climatology(#[from] ClimatologyError),
    #[error(transparent)]
    Cyclone(#[from] CycloneError),
    #[error(transparent)]
    Station(#[from] StationError),
    #[error(transparent)]
    Spectra(#[from] SpectraError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("inconsistent input: {0}")]
    Inconsistent(String),
}

impl PipelineError {
    /// True for problems the user fixes by changing inputs; false for
    /// failures of the data to support the computation.
    pub fn is_input_error(&self) -> bool {
        !matches!(
            self,
            PipelineError::Climatology(ClimatologyError::InsufficientHistory { .. })
                | PipelineError::Metric(_)
                | PipelineError::Spectra(_)
        )
    }
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

/// Where fields and auxiliary inputs come from.
pub trait FieldSource: Sync {
    fn manifest(&self) -> &RunManifest;
    fn manifest_sha256(&self) -> &str;
    fn truth(&self, var: VariableId, valid: DateTime<Utc>) -> Result<GridField>;
    fn forecast(&self, model: &str, var: VariableId, init: DateTime<Utc>, lead: u32) -> Result<GridField>;
    /// Historical fields of one variable in time order.
    fn for_each_history(&self, var: VariableId, f: &mut dyn FnMut(GridField) -> Result<()>) -> Result<()>;
    fn climatology_store(&self, var: VariableId) -> Result<Option<(Arc<GeoGrid>, DailyMeanClimatology)>>;
    fn threshold_store(&self) -> Result<Option<(Arc<GeoGrid>, ThresholdField)>>;
    fn best_track(&self) -> Result<Vec<StormTrack>>;
    fn station_table(&self) -> Result<Option<StationTable>>;

    fn leads(&self) -> Vec<u32> {
        let m = self.manifest();
        match &m.lead_hours {
            Some(l) => l.clone(),
            None => (0..=m.max_lead_hours).step_by(6).collect(),
        }
    }
}

fn check_label(field: &GridField, var: VariableId, valid: DateTime<Utc>, what: &str) -> Result<()> {
    if field.variable() != var || field.valid_time() != valid {
        return Err(PipelineError::Inconsistent(format!(
            "{what}: expected {var} valid {valid}, file holds {} valid {}",
            field.variable(),
            field.valid_time()
        )));
    }
    Ok(())
}

/// Reads everything from the paths a manifest names.
pub struct DiskSource {
    loaded: LoadedManifest,
}

impl DiskSource {
    pub fn new(loaded: LoadedManifest) -> Self {
        Self { loaded }
    }

    pub fn open(path: &std::path::Path) -> Result<Self> {
        Ok(Self::new(LoadedManifest::load(path)?))
    }

    pub fn loaded(&self) -> &LoadedManifest {
        &self.loaded
    }
}

impl FieldSource for DiskSource {
    fn manifest(&self) -> &RunManifest {
        &self.loaded.manifest
    }

    fn manifest_sha256(&self) -> &str {
        &self.loaded.sha256
    }

    fn truth(&self, var: VariableId, valid: DateTime<Utc>) -> Result<GridField> {
        let path = self.loaded.truth_path(var, valid);
        let f = io::read_grid(&path)?;
        check_label(&f, var, valid, &path.display().to_string())?;
        Ok(f)
    }

    fn forecast(&self, model: &str, var: VariableId, init: DateTime<Utc>, lead: u32) -> Result<GridField> {
        let path = self
            .loaded
            .model_path(model, var, init, lead)
            .ok_or_else(|| PipelineError::MissingInput(format!("model {model} not in manifest")))?;
        let f = io::read_grid(&path)?;
        check_label(&f, var, init + Duration::hours(lead as i64), &path.display().to_string())?;
        if f.lead_hours() != lead {
            return Err(PipelineError::Inconsistent(format!(
                "{}: expected lead {lead}, file holds {}",
                path.display(),
                f.lead_hours()
            )));
        }
        Ok(f)
    }

    fn for_each_history(&self, var: VariableId, f: &mut dyn FnMut(GridField) -> Result<()>) -> Result<()> {
        let Some(h) = &self.loaded.manifest.history else {
            return Ok(());
        };
        for t in io::synoptic_times_of_years(&h.years) {
            let path = self.loaded.history_path(var, t).expect("history listed");
            let field = io::read_grid(&path)?;
            check_label(&field, var, t, &path.display().to_string())?;
            f(field)?;
        }
        Ok(())
    }

    fn climatology_store(&self, var: VariableId) -> Result<Option<(Arc<GeoGrid>, DailyMeanClimatology)>> {
        let Some(path) = self.loaded.climatology_path(var) else {
            return Ok(None);
        };
        let (grid, v, clim) = io::read_climatology(&path)?;
        if v != var {
            return Err(PipelineError::Inconsistent(format!("{}: holds {v}, expected {var}", path.display())));
        }
        Ok(Some((grid, clim)))
    }

    fn threshold_store(&self) -> Result<Option<(Arc<GeoGrid>, ThresholdField)>> {
        match self.loaded.thresholds_path() {
            Some(p) => Ok(Some(io::read_thresholds(&p)?)),
            None => Ok(None),
        }
    }

    fn best_track(&self) -> Result<Vec<StormTrack>> {
        match self.loaded.best_track_path() {
            Some(p) => Ok(io::read_besttrack(&p)?),
            None => Ok(Vec::new()),
        }
    }

    fn station_table(&self) -> Result<Option<StationTable>> {
        match self.loaded.station_paths() {
            Some((meta, obs)) => Ok(Some(io::read_station_csvs(&meta, &obs)?)),
            None => Ok(None),
        }
    }
}

/// Serves a generated scenario without touching disk. Auxiliary inputs pass
/// through the same canonical forms the file readers produce.
pub struct MemorySource<'a> {
    scenario: &'a SyntheticScenario,
    run: &'a SyntheticRun,
    manifest: RunManifest,
    sha256: String,
    best_track: Vec<StormTrack>,
    stations: Option<StationTable>,
}

impl<'a> MemorySource<'a> {
    pub fn new(scenario: &'a SyntheticScenario, run: &'a SyntheticRun) -> Result<Self> {
        let manifest = harness::scenario_manifest(scenario, run, false);
        let sha256 = hex::encode(Sha256::digest(io::manifest_bytes(&manifest)));
        let stations = match &scenario.stations {
            Some(spec) => {
                let list = harness::station_list(&run.grid, spec);
                let ids: BTreeMap<&str, usize> = list.iter().enumerate().map(|(k, s)| (s.id.as_str(), k)).collect();
                let mut raw: BTreeMap<(usize, VariableId), Vec<(DateTime<Utc>, f64)>> = BTreeMap::new();
                for o in harness::station_observations(run, spec) {
                    raw.entry((ids[o.station_id.as_str()], o.variable)).or_default().push((o.time, o.value));
                }
                Some(io::assemble_station_table(list, &raw)?)
            }
            None => None,
        };
        Ok(Self {
            scenario,
            run,
            manifest,
            sha256,
            best_track: io::canonical_besttrack(&run.best_track),
            stations,
        })
    }

    fn forecaster(&self, model: &str) -> Result<&ForecasterSpec> {
        self.scenario
            .forecasters
            .iter()
            .find(|f| f.name() == model)
            .ok_or_else(|| PipelineError::MissingInput(format!("model {model} not in scenario")))
    }
}

impl FieldSource for MemorySource<'_> {
    fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    fn manifest_sha256(&self) -> &str {
        &self.sha256
    }

    fn truth(&self, var: VariableId, valid: DateTime<Utc>) -> Result<GridField> {
        self.run
            .truth_at(var, valid)
            .cloned()
            .ok_or_else(|| PipelineError::MissingInput(format!("no {var} truth valid {valid}")))
    }

    fn forecast(&self, model: &str, var: VariableId, init: DateTime<Utc>, lead: u32) -> Result<GridField> {
        let spec = self.forecaster(model)?;
        let mut f = harness::forecast(spec, self.run, var, init, &[lead])?;
        Ok(f.pop().expect("one lead requested"))
    }

    fn for_each_history(&self, var: VariableId, f: &mut dyn FnMut(GridField) -> Result<()>) -> Result<()> {
        for field in self.run.history.get(&var).into_iter().flatten() {
            f(field.clone())?;
        }
        Ok(())
    }

    fn climatology_store(&self, _var: VariableId) -> Result<Option<(Arc<GeoGrid>, DailyMeanClimatology)>> {
        Ok(None)
    }

    fn threshold_store(&self) -> Result<Option<(Arc<GeoGrid>, ThresholdField)>> {
        Ok(None)
    }

    fn best_track(&self) -> Result<Vec<StormTrack>> {
        Ok(self.best_track.clone())
    }

    fn station_table(&self) -> Result<Option<StationTable>> {
        Ok(self.stations.clone())
    }
}

/// Daily-mean climatologies per variable and, when requested, T2M
/// extreme thresholds.
#[derive(Debug, Clone, Default)]
pub struct ClimatologySet {
    pub daily_mean: BTreeMap<VariableId, DailyMeanClimatology>,
    pub thresholds: Option<ThresholdField>,
}

impl ClimatologySet {
    pub fn day_field(&self, grid: &Arc<GeoGrid>, var: VariableId, valid: DateTime<Utc>) -> Option<GridField> {
        let clim = self.daily_mean.get(&var)?;
        let day = calendar_day(valid.date_naive());
        GridField::new(grid.clone(), var, valid, 0, clim.day(day).to_vec()).ok()
    }
}

fn same_grid(a: &GeoGrid, b: &GeoGrid, what: &str) -> Result<()> {
    if a != b {
        return Err(PipelineError::Inconsistent(format!("{what} is on a different grid than the truth")));
    }
    Ok(())
}

/// The grid of the run, taken from the first truth field.
pub fn run_grid(src: &dyn FieldSource) -> Result<Arc<GeoGrid>> {
    let m = src.manifest();
    let (var, init) = m
        .variables
        .first()
        .zip(m.init_times.first())
        .ok_or_else(|| PipelineError::MissingInput("manifest lists no variables or init times".into()))?;
    Ok(src.truth(*var, *init)?.grid_arc().clone())
}

/// Daily fields of the history years, split per year.
fn history_days(src: &dyn FieldSource, var: VariableId, n: usize) -> Result<Vec<DailyFields>> {
    let mut acc = DailyFieldAccumulator::new(n);
    src.for_each_history(var, &mut |f| {
        if f.values().len() != n {
            return Err(PipelineError::Inconsistent(format!("{var} history is on a different grid")));
        }
        acc.push(f.valid_time(), f.values())?;
        Ok(())
    })?;
    Ok(acc.finish())
}

fn year_slices(days: &[DailyFields], years: &[i32]) -> Vec<Vec<DailyFields>> {
    years
        .iter()
        .map(|&y| days.iter().filter(|d| d.date.year() == y).cloned().collect())
        .collect()
}

/// Loads stores the manifest lists and builds the rest from history.
/// Variables without either are left out (their ACC becomes n/a).
pub fn build_climatology(
    src: &dyn FieldSource,
    grid: &Arc<GeoGrid>,
    vars: &[VariableId],
    want_thresholds: bool,
    config: &ThresholdConfig,
) -> Result<ClimatologySet> {
    let years: Vec<i32> = src.manifest().history.as_ref().map(|h| h.years.clone()).unwrap_or_default();
    let n = grid.len();
    let mut set = ClimatologySet::default();
    let mut todo = Vec::new();
    for &var in vars {
        match src.climatology_store(var)? {
            Some((g, c)) => {
                same_grid(&g, grid, &format!("{var} climatology store"))?;
                set.daily_mean.insert(var, c);
            }
            None if !years.is_empty() => todo.push(var),
            None => {}
        }
    }
    if want_thresholds {
        if let Some((g, th)) = src.threshold_store()? {
            same_grid(&g, grid, "threshold store")?;
            set.thresholds = Some(th);
        } else if years.is_empty() {
            return Err(PipelineError::Climatology(ClimatologyError::InsufficientHistory {
                detail: "no threshold store and no history listed".into(),
                locations: n,
            }));
        } else if !todo.contains(&VariableId::T2M) {
            todo.push(VariableId::T2M);
        }
    }
    let need_thresholds = want_thresholds && set.thresholds.is_none();
    let built: Vec<(VariableId, Option<DailyMeanClimatology>, Option<ThresholdField>)> = todo
        .par_iter()
        .map(|&var| -> Result<_> {
            let days = history_days(src, var, n)?;
            let per_year = year_slices(&days, &years);
            let mut mean = DailyStack::new(years.clone(), n);
            for (y, d) in per_year.iter().enumerate() {
                mean.fill_year(y, d, |d| &d.mean)?;
            }
            let clim = if vars.contains(&var) {
                Some(build_daily_mean_climatology(&mean)?)
            } else {
                None
            };
            let th = if var == VariableId::T2M && need_thresholds {
                let mut hist = DailyHistory::new(years.clone(), n);
                for (y, d) in per_year.iter().enumerate() {
                    hist.daily_max.fill_year(y, d, |d| &d.max)?;
                    hist.daily_min.fill_year(y, d, |d| &d.min)?;
                }
                Some(build_thresholds(&hist, config)?)
            } else {
                None
            };
            Ok((var, clim, th))
        })
        .collect::<Result<_>>()?;
    for (var, clim, th) in built {
        if let Some(c) = clim {
            set.daily_mean.insert(var, c);
        }
        if th.is_some() {
            set.thresholds = th;
        }
    }
    Ok(set)
}

fn values_sha256(values: impl IntoIterator<Item = f64>) -> String {
    let mut h = Sha256::new();
    for v in values {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Content hash of a threshold field: heat then cold values as f64le.
pub fn thresholds_sha256(th: &ThresholdField) -> String {
    values_sha256(th.heat_values().iter().chain(th.cold_values()).copied())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub engine_version: String,
    pub manifest_sha256: String,
    /// Content hash (f64le values) of the thresholds used, if any.
    pub thresholds_sha256: Option<String>,
    /// Content hashes of the daily-mean climatologies used.
    pub climatology_sha256: BTreeMap<VariableId, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricEntry {
    pub model: String,
    pub variable: VariableId,
    pub lead_hours: u32,
    pub metric: Metric,
    pub value: Score,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEntry {
    /// Model name, or `truth`.
    pub source: String,
    pub variable: VariableId,
    pub lead_hours: u32,
    pub n_samples: usize,
    /// Mean energy per zonal wavenumber 0..=N_lon/2.
    pub energy: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremesEntry {
    pub model: String,
    pub region: String,
    pub kind: EventKind,
    pub lead_days: u32,
    pub hits: usize,
    pub false_alarms: usize,
    pub misses: usize,
    pub pod: Score,
    pub far: Score,
    pub csi: Score,
}

/// One labeled event, for the segment CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub source: String,
    pub lead_days: u32,
    pub location: usize,
    pub kind: EventKind,
    pub start: NaiveDate,
    pub end: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycloneEntry {
    pub model: String,
    pub lead_hours: u32,
    pub n_cases: usize,
    pub dpe_km: Score,
    pub mae_p_hpa: Score,
    pub bias_p_hpa: Score,
    pub mae_v_ms: Score,
    pub bias_v_ms: Score,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationEntry {
    pub model: String,
    pub variable: VariableId,
    pub lead_hours: u32,
    pub rmse: Score,
    pub bias: Score,
    pub acc: Score,
    pub n_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scorecard {
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Vec<MetricEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectra: Option<Vec<SpectrumEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extremes: Option<Vec<ExtremesEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cyclones: Option<Vec<CycloneEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stations: Option<Vec<StationEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qc: Option<BTreeMap<VariableId, QcCounts>>,
}

impl Scorecard {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scorecard serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    /// Overrides the manifest's lead list.
    pub leads: Option<Vec<u32>>,
    pub spectra_leads: Vec<u32>,
    pub extreme_lead_days: Vec<u32>,
    pub cyclone_leads: Vec<u32>,
    pub gamma: f64,
    pub tracker: TrackerConfig,
    pub thresholds: ThresholdConfig,
    pub qc: QcThresholds,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            leads: None,
            spectra_leads: DEFAULT_SPECTRA_LEADS.to_vec(),
            extreme_lead_days: DEFAULT_EXTREME_LEAD_DAYS.to_vec(),
            cyclone_leads: DEFAULT_CYCLONE_LEADS.to_vec(),
            gamma: DEFAULT_GAMMA,
            tracker: TrackerConfig::default(),
            thresholds: ThresholdConfig::default(),
            qc: QcThresholds::default(),
        }
    }
}

/// Output of the evaluation sections; track and event lists are for the
/// CSV side outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub scorecard: Scorecard,
    pub tracks: Vec<StormTrack>,
    pub events: Vec<EventRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sections {
    pub metrics: bool,
    pub spectra: bool,
    pub extremes: bool,
    pub cyclones: bool,
    pub stations: bool,
}

impl Sections {
    pub const EVALUATE: Sections = Sections { metrics: true, spectra: true, extremes: false, cyclones: false, stations: false };
    pub const EXTREMES: Sections = Sections { metrics: false, spectra: false, extremes: true, cyclones: false, stations: false };
    pub const CYCLONES: Sections = Sections { metrics: false, spectra: false, extremes: false, cyclones: true, stations: false };
    pub const STATIONS: Sections = Sections { metrics: false, spectra: false, extremes: false, cyclones: false, stations: true };
    pub const ALL: Sections = Sections { metrics: true, spectra: true, extremes: true, cyclones: true, stations: true };
}

struct Context<'a> {
    src: &'a dyn FieldSource,
    grid: Arc<GeoGrid>,
    leads: Vec<u32>,
    lead_set: BTreeSet<u32>,
    models: Vec<String>,
    opts: &'a EvalOptions,
}

impl Context<'_> {
    fn inits(&self) -> &[DateTime<Utc>] {
        &self.src.manifest().init_times
    }

    fn variables(&self) -> &[VariableId] {
        &self.src.manifest().variables
    }

    fn has_var(&self, v: VariableId) -> bool {
        self.variables().contains(&v)
    }
}

pub fn evaluate(src: &dyn FieldSource, opts: &EvalOptions, sections: Sections) -> Result<Evaluation> {
    let grid = run_grid(src)?;
    let leads = match &opts.leads {
        Some(l) => {
            let avail: BTreeSet<u32> = src.leads().into_iter().collect();
            if let Some(bad) = l.iter().find(|x| !avail.contains(x)) {
                return Err(PipelineError::MissingInput(format!("lead {bad} h is not covered by the manifest")));
            }
            l.clone()
        }
        None => src.leads(),
    };
    let ctx = Context {
        src,
        grid: grid.clone(),
        lead_set: leads.iter().copied().collect(),
        leads,
        models: src.manifest().models.keys().cloned().collect(),
        opts,
    };
    let clim_vars: Vec<VariableId> = if sections.metrics || sections.stations {
        ctx.variables().to_vec()
    } else {
        Vec::new()
    };
    let clim = build_climatology(src, &grid, &clim_vars, sections.extremes, &opts.thresholds)?;
    let provenance = Provenance {
        engine_version: ENGINE_VERSION.to_string(),
        manifest_sha256: src.manifest_sha256().to_string(),
        thresholds_sha256: clim.thresholds.as_ref().map(thresholds_sha256),
        climatology_sha256: clim
            .daily_mean
            .iter()
            .map(|(v, c)| (*v, values_sha256(c.values().iter().copied())))
            .collect(),
    };
    let mut out = Evaluation {
        scorecard: Scorecard {
            provenance,
            metrics: None,
            spectra: None,
            extremes: None,
            cyclones: None,
            stations: None,
            qc: None,
        },
        tracks: Vec::new(),
        events: Vec::new(),
    };
    if sections.metrics {
        out.scorecard.metrics = Some(metrics_section(&ctx, &clim)?);
    }
    if sections.spectra {
        out.scorecard.spectra = Some(spectra_section(&ctx)?);
    }
    if sections.extremes {
        let (entries, events) = extremes_section(&ctx, &clim)?;
        out.scorecard.extremes = Some(entries);
        out.events = events;
    }
    if sections.cyclones {
        let (entries, tracks) = cyclones_section(&ctx)?;
        out.scorecard.cyclones = Some(entries);
        out.tracks = tracks;
    }
    if sections.stations {
        let (entries, qc) = stations_section(&ctx, &clim)?;
        out.scorecard.stations = Some(entries);
        out.scorecard.qc = Some(qc);
    }
    Ok(out)
}

fn metrics_section(ctx: &Context, clim: &ClimatologySet) -> Result<Vec<MetricEntry>> {
    let weights = latitude_weights(&ctx.grid);
    let tasks: Vec<(&str, VariableId, u32)> = ctx
        .models
        .iter()
        .flat_map(|m| {
            ctx.variables()
                .iter()
                .flat_map(move |&v| ctx.leads.iter().map(move |&l| (m.as_str(), v, l)))
        })
        .collect();
    let per_task: Vec<Vec<MetricEntry>> = tasks
        .par_iter()
        .map(|&(model, var, lead)| -> Result<Vec<MetricEntry>> {
            let mut sums: BTreeMap<Metric, (CompensatedSum, usize)> = BTreeMap::new();
            let mut add = |m: Metric, v: f64| {
                let e = sums.entry(m).or_default();
                e.0.add(v);
                e.1 += 1;
            };
            for &init in ctx.inits() {
                let valid = init + Duration::hours(lead as i64);
                let pred = ctx.src.forecast(model, var, init, lead)?;
                let truth = ctx.src.truth(var, valid)?;
                same_grid(pred.grid(), &ctx.grid, &format!("{model} {var} forecast"))?;
                add(Metric::Wrmse, metrics::wrmse(&pred, &truth, &weights)?);
                add(Metric::Bias, metrics::bias(&pred, &truth, &weights)?);
                if let Some(c) = clim.day_field(&ctx.grid, var, valid) {
                    match metrics::acc(&pred, &truth, &c, &weights) {
                        Ok(a) => add(Metric::Acc, a),
                        Err(MetricError::DegenerateAnomaly) => {}
                        Err(e) => return Err(e.into()),
                    }
                    add(Metric::Activity, metrics::activity(&pred, &c, &weights)?);
                }
            }
            Ok(Metric::ALL
                .iter()
                .map(|&metric| {
                    let (value, n) = match sums.get(&metric) {
                        Some((s, n)) if *n > 0 => (Score::Value(s.value() / *n as f64), *n),
                        _ => (Score::NotAvailable, 0),
                    };
                    MetricEntry {
                        model: model.to_string(),
                        variable: var,
                        lead_hours: lead,
                        metric,
                        value,
                        n_samples: n,
                    }
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(per_task.into_iter().flatten().collect())
}

fn spectra_section(ctx: &Context) -> Result<Vec<SpectrumEntry>> {
    if spectra::midlatitude_rows(ctx.grid.lat_deg()).is_empty() {
        log::warn!("grid has no mid-latitude rows; spectra skipped");
        return Ok(Vec::new());
    }
    let leads: Vec<u32> = ctx.opts.spectra_leads.iter().copied().filter(|l| ctx.lead_set.contains(l)).collect();
    let sources: Vec<Option<&str>> = std::iter::once(None).chain(ctx.models.iter().map(|m| Some(m.as_str()))).collect();
    let leads = &leads;
    let tasks: Vec<(Option<&str>, VariableId, u32)> = sources
        .iter()
        .flat_map(|&s| {
            ctx.variables()
                .iter()
                .flat_map(move |&v| leads.iter().map(move |&l| (s, v, l)))
        })
        .collect();
    tasks
        .par_iter()
        .map(|&(source, var, lead)| -> Result<SpectrumEntry> {
            let mut total = vec![0.0; ctx.grid.n_lon() / 2 + 1];
            for &init in ctx.inits() {
                let f = match source {
                    Some(m) => ctx.src.forecast(m, var, init, lead)?,
                    None => ctx.src.truth(var, init + Duration::hours(lead as i64))?,
                };
                let s = spectra::midlatitude_spectrum(&f)?;
                for (a, e) in total.iter_mut().zip(&s.energy) {
                    *a += e;
                }
            }
            let n = ctx.inits().len();
            total.iter_mut().for_each(|v| *v /= n as f64);
            Ok(SpectrumEntry {
                source: source.unwrap_or("truth").to_string(),
                variable: var,
                lead_hours: lead,
                n_samples: n,
                energy: total,
            })
        })
        .collect()
}

/// Daily T2M max/min at every location.
type DailyExtremesField = (Vec<f64>, Vec<f64>);

fn daily_max_min(fields: &[GridField]) -> DailyExtremesField {
    let n = fields[0].values().len();
    let mut max = vec![f64::NEG_INFINITY; n];
    let mut min = vec![f64::INFINITY; n];
    for f in fields {
        for (k, &v) in f.values().iter().enumerate() {
            max[k] = max[k].max(v);
            min[k] = min[k].min(v);
        }
    }
    (max, min)
}

fn midnight(d: NaiveDate) -> DateTime<Utc> {
    d.and_hms_opt(0, 0, 0).expect("midnight").and_utc()
}

fn region_list(ctx: &Context) -> Vec<(String, RegionBox)> {
    std::iter::once((GLOBAL_REGION.to_string(), RegionBox::GLOBAL))
        .chain(ctx.src.manifest().regions.iter().map(|(k, v)| (k.clone(), *v)))
        .collect()
}

/// Event verification. Lead day `d` of target day `c` uses the forecast
/// initialized at 00 UTC on day `c - (d - 1)`, hours `24(d-1) + {0,6,12,18}`.
fn extremes_section(ctx: &Context, clim: &ClimatologySet) -> Result<(Vec<ExtremesEntry>, Vec<EventRecord>)> {
    if !ctx.has_var(VariableId::T2M) {
        return Err(PipelineError::MissingInput("extremes need T2M in the manifest".into()));
    }
    let th = clim.thresholds.as_ref().expect("requested");
    let n = ctx.grid.len();
    let init_days: BTreeSet<NaiveDate> = ctx
        .inits()
        .iter()
        .filter(|t| t.hour() == 0)
        .map(|t| t.date_naive())
        .collect();
    let mut lead_days = Vec::new();
    for &d in &ctx.opts.extreme_lead_days {
        let hours: Vec<u32> = (0..4).map(|k| 24 * (d.max(1) - 1) + 6 * k).collect();
        if d >= 1 && hours.iter().all(|h| ctx.lead_set.contains(h)) {
            lead_days.push((d, hours));
        } else {
            log::warn!("lead day {d} not covered by the forecast leads; skipped");
        }
    }
    // union of target days
    let target_days: BTreeSet<NaiveDate> = lead_days
        .iter()
        .flat_map(|(d, _)| init_days.iter().map(move |i| *i + Duration::days(*d as i64 - 1)))
        .collect();
    let truth_daily: BTreeMap<NaiveDate, DailyExtremesField> = target_days
        .par_iter()
        .map(|&day| -> Result<_> {
            let fields = (0..4)
                .map(|k| ctx.src.truth(VariableId::T2M, midnight(day) + Duration::hours(6 * k)))
                .collect::<Result<Vec<_>>>()?;
            Ok((day, daily_max_min(&fields)))
        })
        .collect::<Result<_>>()?;

    let regions = region_list(ctx);
    let location_regions: Vec<Vec<usize>> = (0..n)
        .map(|loc| {
            let (i, j) = (loc / ctx.grid.n_lon(), loc % ctx.grid.n_lon());
            let p = (ctx.grid.lat_deg()[i], ctx.grid.lon_deg()[j]);
            regions
                .iter()
                .enumerate()
                .filter(|(_, (_, r))| r.contains(p.0, p.1))
                .map(|(k, _)| k)
                .collect()
        })
        .collect();

    let tasks: Vec<(&str, &(u32, Vec<u32>))> = ctx
        .models
        .iter()
        .flat_map(|m| lead_days.iter().map(move |ld| (m.as_str(), ld)))
        .collect();
    let results: Vec<(Vec<ExtremesEntry>, Vec<EventRecord>)> = tasks
        .par_iter()
        .map(|&(model, (d, hours))| -> Result<_> {
            let days: Vec<NaiveDate> = init_days.iter().map(|i| *i + Duration::days(*d as i64 - 1)).collect();
            let first = days[0];
            let span = (*days.last().expect("non-empty") - first).num_days() as usize + 1;
            let mut pred_daily: Vec<Option<DailyExtremesField>> = vec![None; span];
            let fc: Vec<(usize, DailyExtremesField)> = days
                .par_iter()
                .map(|&day| -> Result<_> {
                    let init = midnight(day - Duration::days(*d as i64 - 1));
                    let fields = hours
                        .iter()
                        .map(|&h| ctx.src.forecast(model, VariableId::T2M, init, h))
                        .collect::<Result<Vec<_>>>()?;
                    Ok(((day - first).num_days() as usize, daily_max_min(&fields)))
                })
                .collect::<Result<_>>()?;
            for (k, v) in fc {
                pred_daily[k] = Some(v);
            }
            let day_of = |k: usize| first + Duration::days(k as i64);
            let taus: Vec<usize> = (0..span).map(|k| calendar_day(day_of(k))).collect();
            let mut counts = vec![[Contingency::default(); 2]; regions.len()];
            let mut events = Vec::new();
            for loc in 0..n {
                for (ki, kind) in EventKind::ALL.iter().enumerate() {
                    let pick = |f: &DailyExtremesField| match kind {
                        EventKind::Heatwave => f.0[loc],
                        EventKind::Coldsurge => f.1[loc],
                    };
                    let tau: Vec<f64> = taus
                        .iter()
                        .map(|&c| match kind {
                            EventKind::Heatwave => th.tau_heat(c, loc),
                            EventKind::Coldsurge => th.tau_cold(c, loc),
                        })
                        .collect();
                    let pv: Vec<Option<f64>> = pred_daily.iter().map(|x| x.as_ref().map(pick)).collect();
                    let tv: Vec<Option<f64>> = (0..span)
                        .map(|k| pred_daily[k].as_ref().and(truth_daily.get(&day_of(k)).map(pick)))
                        .collect();
                    let ps = label_events(loc, 0, &pv, &tau, *kind);
                    let ts = label_events(loc, 0, &tv, &tau, *kind);
                    let m = match_events(&ps, &ts, ctx.opts.gamma);
                    for &r in &location_regions[loc] {
                        let c = &mut counts[r][ki];
                        c.hits += m.counts.hits;
                        c.false_alarms += m.counts.false_alarms;
                        c.misses += m.counts.misses;
                    }
                    let record = |source: &str, s: &EventSegment| EventRecord {
                        source: source.to_string(),
                        lead_days: *d,
                        location: s.location,
                        kind: s.kind,
                        start: day_of(s.start_day as usize),
                        end: day_of(s.end_day as usize),
                    };
                    events.extend(ps.iter().map(|s| record(model, s)));
                    events.extend(ts.iter().map(|s| record("truth", s)));
                }
            }
            let entries = regions
                .iter()
                .enumerate()
                .flat_map(|(r, (name, _))| {
                    EventKind::ALL.iter().enumerate().map(move |(ki, &kind)| (r, name, ki, kind))
                })
                .map(|(r, name, ki, kind)| {
                    let c = counts[r][ki];
                    let s = categorical_scores(&c);
                    ExtremesEntry {
                        model: model.to_string(),
                        region: name.clone(),
                        kind,
                        lead_days: *d,
                        hits: c.hits,
                        false_alarms: c.false_alarms,
                        misses: c.misses,
                        pod: s.pod,
                        far: s.far,
                        csi: s.csi,
                    }
                })
                .collect();
            Ok((entries, events))
        })
        .collect::<Result<_>>()?;
    let mut entries = Vec::new();
    let mut events = Vec::new();
    for (e, ev) in results {
        entries.extend(e);
        events.extend(ev);
    }
    Ok((entries, events))
}

/// Seeds each best-track storm at every initialization where it has a fix
/// and tracks it through the forecast.
fn cyclones_section(ctx: &Context) -> Result<(Vec<CycloneEntry>, Vec<StormTrack>)> {
    for v in [VariableId::MSL, VariableId::U10, VariableId::V10] {
        if !ctx.has_var(v) {
            return Err(PipelineError::MissingInput(format!("cyclone tracking needs {v} in the manifest")));
        }
    }
    let leads: Vec<u32> = ctx.opts.cyclone_leads.iter().copied().filter(|l| ctx.lead_set.contains(l)).collect();
    let max_lead = leads.iter().copied().max().unwrap_or(0);
    let steps: Vec<u32> = (0..=max_lead).step_by(6).collect();
    if let Some(gap) = steps.iter().find(|l| !ctx.lead_set.contains(l)) {
        return Err(PipelineError::MissingInput(format!("tracking needs every 6 h lead; {gap} h is missing")));
    }
    let best = ctx.src.best_track()?;
    let truth: BTreeMap<String, StormTrack> = best.into_iter().map(|t| (t.storm_id.clone(), t)).collect();
    let cases: Vec<(&StormTrack, DateTime<Utc>)> = ctx
        .inits()
        .iter()
        .flat_map(|&init| truth.values().filter(move |t| t.fix_at(init).is_some()).map(move |t| (t, init)))
        .collect();
    let mut models: BTreeMap<String, ModelTracks> = BTreeMap::new();
    for model in &ctx.models {
        let tracks: Vec<Option<StormTrack>> = cases
            .par_iter()
            .map(|&(storm, init)| -> Result<Option<StormTrack>> {
                let load = |v: VariableId| -> Result<Vec<GridField>> {
                    steps.iter().map(|&l| ctx.src.forecast(model, v, init, l)).collect()
                };
                let (msl, u, v) = (load(VariableId::MSL)?, load(VariableId::U10)?, load(VariableId::V10)?);
                let seed = storm.fix_at(init).expect("filtered").position();
                let source = TrackSource::Model {
                    name: model.clone(),
                    init_source: io::stamp(init),
                };
                match track_storm(&storm.storm_id, source, &msl, &u, &v, seed, &ctx.opts.tracker) {
                    Ok(t) => Ok(Some(t)),
                    Err(CycloneError::SeedOutsideDomain { .. }) => {
                        log::warn!("storm {} at {init}: seed outside the domain", storm.storm_id);
                        Ok(None)
                    }
                    Err(e) => Err(e.into()),
                }
            })
            .collect::<Result<_>>()?;
        let map = tracks
            .into_iter()
            .flatten()
            .map(|t| {
                (
                    TrackKey {
                        storm_id: t.storm_id.clone(),
                        init: t.init_time,
                    },
                    t,
                )
            })
            .collect();
        models.insert(model.clone(), map);
    }
    let sample = homogeneous_sample(&models, &truth, &leads);
    let mut entries = Vec::new();
    for (name, tracks) in &models {
        for &lead in &leads {
            let s = &sample[&lead];
            let dpe = track_dpe(tracks, &truth, s, lead)?;
            let ie = intensity_errors(tracks, &truth, s, lead)?;
            entries.push(CycloneEntry {
                model: name.clone(),
                lead_hours: lead,
                n_cases: s.len(),
                dpe_km: dpe.into(),
                mae_p_hpa: ie.map(|e| e.mae_p_hpa).into(),
                bias_p_hpa: ie.map(|e| e.bias_p_hpa).into(),
                mae_v_ms: ie.map(|e| e.mae_v_ms).into(),
                bias_v_ms: ie.map(|e| e.bias_v_ms).into(),
            });
        }
    }
    let tracks = models.into_values().flat_map(|m| m.into_values()).collect();
    Ok((entries, tracks))
}

/// Grid field of `var` at `valid` from a getter; WS10 is derived from U10/V10.
fn field_or_derived(
    var: VariableId,
    get: &dyn Fn(VariableId) -> Result<GridField>,
) -> Result<GridField> {
    if var == VariableId::WS10 {
        Ok(derive_wind_speed(&get(VariableId::U10)?, &get(VariableId::V10)?)?)
    } else {
        get(var)
    }
}

fn station_var_available(ctx: &Context, var: VariableId) -> bool {
    if var == VariableId::WS10 {
        ctx.has_var(VariableId::U10) && ctx.has_var(VariableId::V10)
    } else {
        ctx.has_var(var)
    }
}

/// QC against truth interpolated to the stations, then scores forecasts
/// interpolated the same way.
fn stations_section(
    ctx: &Context,
    clim: &ClimatologySet,
) -> Result<(Vec<StationEntry>, BTreeMap<VariableId, QcCounts>)> {
    let mut table = ctx
        .src
        .station_table()?
        .ok_or_else(|| PipelineError::MissingInput("manifest lists no station files".into()))?;
    let positions = table.positions();
    let n_st = table.n_stations();
    let truth_times: BTreeSet<DateTime<Utc>> = ctx
        .inits()
        .iter()
        .flat_map(|&i| ctx.src.leads().into_iter().map(move |l| i + Duration::hours(l as i64)))
        .collect();
    let vars: Vec<VariableId> = table
        .series
        .keys()
        .copied()
        .filter(|&v| station_var_available(ctx, v))
        .collect();
    let mut qc = BTreeMap::new();
    for &var in &vars {
        let times = table.times.clone();
        let columns: Vec<Vec<f64>> = times
            .par_iter()
            .map(|&t| -> Result<Vec<f64>> {
                if !truth_times.contains(&t) {
                    return Ok(vec![f64::NAN; n_st]);
                }
                let f = field_or_derived(var, &|v| ctx.src.truth(v, t))?;
                Ok(interp_to_stations(&f, &positions)?)
            })
            .collect::<Result<_>>()?;
        let mut reference = vec![f64::NAN; n_st * times.len()];
        for (ti, col) in columns.iter().enumerate() {
            for (s, &r) in col.iter().enumerate() {
                reference[table.index(s, ti)] = r;
            }
        }
        qc.insert(var, apply_qc(&mut table, var, &reference, &ctx.opts.qc)?);
    }

    let tasks: Vec<(&str, VariableId, u32)> = ctx
        .models
        .iter()
        .flat_map(|m| vars.iter().flat_map(move |&v| ctx.leads.iter().map(move |&l| (m.as_str(), v, l))))
        .collect();
    let table = &table;
    let entries = tasks
        .par_iter()
        .map(|&(model, var, lead)| -> Result<StationEntry> {
            let series = &table.series[&var];
            let mut fc = Vec::new();
            let mut obs = Vec::new();
            let mut cl = Vec::new();
            let use_clim = clim.daily_mean.contains_key(&var);
            for &init in ctx.inits() {
                let valid = init + Duration::hours(lead as i64);
                let Some(ti) = table.time_index(valid) else { continue };
                let f = field_or_derived(var, &|v| ctx.src.forecast(model, v, init, lead))?;
                fc.extend(interp_to_stations(&f, &positions)?);
                obs.extend((0..n_st).map(|s| series.values[table.index(s, ti)]));
                if use_clim {
                    let c = clim.day_field(&ctx.grid, var, valid).expect("present");
                    cl.extend(interp_to_stations(&c, &positions)?);
                }
            }
            let na = StationEntry {
                model: model.to_string(),
                variable: var,
                lead_hours: lead,
                rmse: Score::NotAvailable,
                bias: Score::NotAvailable,
                acc: Score::NotAvailable,
                n_pairs: 0,
            };
            match station_scores(&fc, &obs, use_clim.then_some(cl.as_slice())) {
                Ok(s) => Ok(StationEntry {
                    rmse: Score::Value(s.rmse),
                    bias: Score::Value(s.bias),
                    acc: s.acc.into(),
                    n_pairs: s.n_pairs,
                    ..na
                }),
                Err(StationError::NoValidPairs) => Ok(na),
                Err(e) => Err(e.into()),
            }
        })
        .collect::<Result<_>>()?;
    Ok((entries, qc))
}

/// Generates a scenario, writes it under `dir` together with climatology
/// stores built from its history, and returns the manifest path.
pub fn synthesize(scenario: &SyntheticScenario, dir: &std::path::Path) -> Result<std::path::PathBuf> {
    let run = harness::generate_truth(scenario)?;
    let manifest_path = harness::write_dataset(scenario, &run, dir)?;
    if run.history.is_empty() {
        return Ok(manifest_path);
    }
    let src = MemorySource::new(scenario, &run)?;
    let vars: Vec<VariableId> = scenario.variables.keys().copied().collect();
    let want_th = scenario.variables.contains_key(&VariableId::T2M) && scenario.history_years >= 2;
    let clim = build_climatology(&src, &run.grid, &vars, want_th, &ThresholdConfig::default())?;
    let manifest = harness::scenario_manifest(scenario, &run, true);
    write_stores(&manifest, dir, &run.grid, &clim)?;
    let mut manifest = manifest;
    if clim.thresholds.is_none() {
        manifest.thresholds = None;
    }
    io::write_manifest(&manifest_path, &manifest)?;
    Ok(manifest_path)
}

/// Writes daily-mean and threshold stores to the manifest's store paths.
pub fn write_stores(manifest: &RunManifest, base: &std::path::Path, grid: &GeoGrid, clim: &ClimatologySet) -> Result<()> {
    if let Some(pattern) = &manifest.climatology {
        for (var, c) in &clim.daily_mean {
            let p = base.join(io::expand_pattern(pattern, None, Some(*var), None, None, None));
            io::write_climatology(&p, grid, *var, c)?;
        }
    }
    if let (Some(p), Some(th)) = (&manifest.thresholds, &clim.thresholds) {
        io::write_thresholds(&base.join(p), grid, VariableId::T2M, th)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{GridSpec, ProcessSpec};
    use chrono::TimeZone;

    fn scenario() -> SyntheticScenario {
        let mut variables = BTreeMap::new();
        variables.insert(
            VariableId::Z500,
            ProcessSpec { noise_std: 30.0, lag1: 0.9, correlation_km: 1000.0, seasonal_amplitude: 50.0, ..ProcessSpec::constant(5500.0) },
        );
        variables.insert(
            VariableId::T2M,
            ProcessSpec { noise_std: 1.0, lag1: 0.8, correlation_km: 600.0, seasonal_amplitude: 6.0, diurnal_amplitude: 2.0, ..ProcessSpec::constant(285.0) },
        );
        SyntheticScenario {
            seed: 11,
            grid: GridSpec::Global { n_lat: 9, n_lon: 12 },
            start: Utc.with_ymd_and_hms(2025, 3, 1, 0, 0, 0).unwrap(),
            days: 4,
            history_years: 2,
            max_lead_hours: 48,
            init_every_hours: 24,
            variables,
            vortices: vec![],
            episodes: vec![],
            forecasters: vec![
                ForecasterSpec::Persistence { name: "persist".into() },
                ForecasterSpec::Smoothed { name: "smooth".into(), kernel_width: 3 },
            ],
            stations: None,
            regions: BTreeMap::new(),
        }
    }

    #[test]
    fn persistence_lead_zero_is_exact_and_acc_present() {
        let s = scenario();
        let run = harness::generate_truth(&s).unwrap();
        let src = MemorySource::new(&s, &run).unwrap();
        let ev = evaluate(&src, &EvalOptions::default(), Sections::EVALUATE).unwrap();
        let m = ev.scorecard.metrics.unwrap();
        assert_eq!(m.len(), 2 * 2 * 9 * 4);
        for e in m.iter().filter(|e| e.lead_hours == 0 && e.model == "persist") {
            match e.metric {
                Metric::Wrmse | Metric::Bias => assert_eq!(e.value, Score::Value(0.0)),
                Metric::Acc => assert_eq!(e.value, Score::Value(1.0)),
                Metric::Activity => assert!(e.value.is_available()),
            }
            assert_eq!(e.n_samples, 4);
        }
        assert_eq!(ev.scorecard.provenance.climatology_sha256.len(), 2);
        let spectra = ev.scorecard.spectra.unwrap();
        assert_eq!(spectra.len(), 3 * 2);
        assert!(spectra.iter().all(|s| s.lead_hours == 6));
    }

    #[test]
    fn acc_is_na_without_history() {
        let mut s = scenario();
        s.history_years = 0;
        let run = harness::generate_truth(&s).unwrap();
        let src = MemorySource::new(&s, &run).unwrap();
        let ev = evaluate(&src, &EvalOptions::default(), Sections::EVALUATE).unwrap();
        for e in ev.scorecard.metrics.unwrap() {
            if matches!(e.metric, Metric::Acc | Metric::Activity) {
                assert_eq!(e.value, Score::NotAvailable);
                assert_eq!(e.n_samples, 0);
            }
        }
        let err = evaluate(&src, &EvalOptions::default(), Sections::EXTREMES).unwrap_err();
        assert!(!err.is_input_error(), "{err}");
    }

    #[test]
    fn per_init_mean_matches_direct_loop() {
        let s = scenario();
        let run = harness::generate_truth(&s).unwrap();
        let src = MemorySource::new(&s, &run).unwrap();
        let opts = EvalOptions { leads: Some(vec![24]), ..EvalOptions::default() };
        let ev = evaluate(&src, &opts, Sections::EVALUATE).unwrap();
        let w = latitude_weights(&run.grid);
        let mut total = 0.0;
        for init in s.init_times() {
            let f = harness::forecast(&s.forecasters[1], &run, VariableId::T2M, init, &[24]).unwrap();
            let t = run.truth_at(VariableId::T2M, init + Duration::hours(24)).unwrap();
            total += metrics::wrmse(&f[0], t, &w).unwrap();
        }
        let got = ev
            .scorecard
            .metrics
            .unwrap()
            .into_iter()
            .find(|e| e.model == "smooth" && e.variable == VariableId::T2M && e.metric == Metric::Wrmse)
            .unwrap();
        let want = total / 4.0;
        assert!((got.value.value().unwrap() - want).abs() <= 1e-12 * want);
    }
}
