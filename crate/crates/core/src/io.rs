//! Readers and writers: flat binary grids with JSON sidecars, day-indexed
//! climatology stores, best-track and station CSVs, and run manifests.
//!
//! A grid file `foo.rbg` is a little-endian payload next to `foo.rbg.json`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::climatology::{DailyMeanClimatology, ThresholdConfig, ThresholdField, DAYS_PER_YEAR};
use crate::cyclones::{StormFix, StormTrack};
use crate::grid::{normalize_lon, GeoGrid, GridError, GridField, VariableId};
use crate::stations::{is_synoptic, Station, StationError, StationTable, WINDOW_MINUTES};

pub const GRID_MAGIC: &str = "RBGRID1";
pub const DEFAULT_MAX_LEAD_HOURS: u32 = 240;
pub const TIME_STAMP_FORMAT: &str = "%Y%m%d%H";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{}: bad magic {found:?}", path.display())]
    BadMagic { path: PathBuf, found: String },
    #[error("{}: unsupported dtype {dtype:?}", path.display())]
    UnsupportedDtype { path: PathBuf, dtype: String },
    #[error("{}: checksum mismatch (header {expected:08x}, payload {actual:08x})", path.display())]
    ChecksumMismatch { path: PathBuf, expected: u32, actual: u32 },
    #[error("{}: header implies {expected} payload bytes, found {actual}", path.display())]
    HeaderPayloadShapeMismatch { path: PathBuf, expected: u64, actual: u64 },
    #[error("{}: non-finite value at index {index}", path.display())]
    NonFiniteValue { path: PathBuf, index: usize },
    #[error("{}: {source}", path.display())]
    Grid { path: PathBuf, source: GridError },
    #[error("{}: only regular grids can be written", path.display())]
    IrregularGrid { path: PathBuf },
    #[error("{}: derived variable {variable} is never stored", path.display())]
    DerivedVariable { path: PathBuf, variable: VariableId },
    #[error("{}: storm {storm_id}: time {time} is not after the previous fix", path.display())]
    NonMonotoneTime { path: PathBuf, storm_id: String, time: DateTime<Utc> },
    #[error("{}: storm {storm_id}: fix at {time} breaks the 6 h cadence", path.display())]
    IrregularCadence { path: PathBuf, storm_id: String, time: DateTime<Utc> },
    #[error("{}:{line}: {detail}", path.display())]
    UnitOutOfRange { path: PathBuf, line: u64, detail: String },
    #[error("{}:{line}: unknown station {id}", path.display())]
    UnknownStation { path: PathBuf, line: u64, id: String },
    #[error("{}:{line}: duplicate observation ({station}, {time}, {variable})", path.display())]
    DuplicateObservation {
        path: PathBuf,
        line: u64,
        station: String,
        time: DateTime<Utc>,
        variable: VariableId,
    },
    #[error("{}: {source}", path.display())]
    Station { path: PathBuf, source: StationError },
    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("{}: {detail}", path.display())]
    Manifest { path: PathBuf, detail: String },
    #[error("{}: {detail}", path.display())]
    Store { path: PathBuf, detail: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoreKind {
    /// 365 layers of daily means.
    DailyMean,
    /// 365 heatwave layers followed by 365 cold-surge layers.
    Thresholds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreInfo {
    pub kind: StoreKind,
    pub depth: usize,
    pub years: Vec<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold_config: Option<ThresholdConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFileHeader {
    pub magic: String,
    pub variable: VariableId,
    pub unit: String,
    pub valid_time: DateTime<Utc>,
    pub lead_hours: u32,
    pub n_lat: usize,
    pub n_lon: usize,
    pub lat_start: f64,
    pub lat_step: f64,
    pub lon_start: f64,
    pub lon_step: f64,
    pub dtype: String,
    pub checksum: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub store: Option<StoreInfo>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".json");
    PathBuf::from(s)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut tmp = path.as_os_str().to_os_string();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn encode(values: &[f64]) -> (&'static str, Vec<u8>) {
    if values.iter().all(|&v| (v as f32) as f64 == v) {
        ("f32le", values.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect())
    } else {
        ("f64le", values.iter().flat_map(|&v| v.to_le_bytes()).collect())
    }
}

fn write_raw(
    path: &Path,
    grid: &GeoGrid,
    variable: VariableId,
    valid_time: DateTime<Utc>,
    lead_hours: u32,
    store: Option<StoreInfo>,
    values: &[f64],
) -> Result<(), IoError> {
    if variable.is_derived() {
        return Err(IoError::DerivedVariable {
            path: path.to_path_buf(),
            variable,
        });
    }
    let axes = grid.regular_axes().ok_or_else(|| IoError::IrregularGrid {
        path: path.to_path_buf(),
    })?;
    let (dtype, payload) = encode(values);
    let header = GridFileHeader {
        magic: GRID_MAGIC.to_string(),
        variable,
        unit: variable.unit().to_string(),
        valid_time,
        lead_hours,
        n_lat: grid.n_lat(),
        n_lon: grid.n_lon(),
        lat_start: axes.lat_start,
        lat_step: axes.lat_step,
        lon_start: axes.lon_start,
        lon_step: axes.lon_step,
        dtype: dtype.to_string(),
        checksum: crc32fast::hash(&payload),
        store,
    };
    let mut json = serde_json::to_vec_pretty(&header).expect("header serializes");
    json.push(b'\n');
    write_atomic(path, &payload)?;
    write_atomic(&sidecar_path(path), &json)
}

/// Writes `field` as payload plus sidecar. Values exactly representable in
/// f32 are stored as `f32le`, anything else as `f64le`, so the round trip is
/// always lossless.
pub fn write_grid(field: &GridField, path: &Path) -> Result<(), IoError> {
    write_raw(
        path,
        field.grid(),
        field.variable(),
        field.valid_time(),
        field.lead_hours(),
        None,
        field.values(),
    )
}

struct RawGrid {
    header: GridFileHeader,
    grid: Arc<GeoGrid>,
    values: Vec<f64>,
}

/// Builds the north-to-south, [0, 360) grid for a header, with the row and
/// column permutation needed to bring stored values into that order.
fn normalized_axes(path: &Path, h: &GridFileHeader) -> Result<(GeoGrid, bool, usize), IoError> {
    let grid_err = |source| IoError::Grid {
        path: path.to_path_buf(),
        source,
    };
    let flip = h.n_lat > 1 && h.lat_step > 0.0;
    let (lat_start, lat_step) = if flip {
        (h.lat_start + (h.n_lat - 1) as f64 * h.lat_step, -h.lat_step)
    } else {
        (h.lat_start, h.lat_step)
    };
    let lons: Vec<f64> = (0..h.n_lon)
        .map(|j| normalize_lon(h.lon_start + j as f64 * h.lon_step))
        .collect();
    let roll = (1..lons.len()).find(|&j| lons[j] < lons[j - 1]).unwrap_or(0);
    let lon_start = lons.get(roll).copied().unwrap_or(h.lon_start);
    let grid = GeoGrid::regular(lat_start, lat_step, h.n_lat, lon_start, h.lon_step, h.n_lon).map_err(grid_err)?;
    Ok((grid, flip, roll))
}

fn read_raw(path: &Path) -> Result<RawGrid, IoError> {
    let side = sidecar_path(path);
    let json = fs::read(&side).map_err(io_err(&side))?;
    let header: GridFileHeader = serde_json::from_slice(&json).map_err(|source| IoError::Json {
        path: side.clone(),
        source,
    })?;
    if header.magic != GRID_MAGIC {
        return Err(IoError::BadMagic {
            path: side,
            found: header.magic,
        });
    }
    let width = match header.dtype.as_str() {
        "f32le" => 4u64,
        "f64le" => 8u64,
        _ => {
            return Err(IoError::UnsupportedDtype {
                path: side,
                dtype: header.dtype,
            })
        }
    };
    let depth = header.store.as_ref().map_or(1, |s| s.depth) as u64;
    let payload = fs::read(path).map_err(io_err(path))?;
    let expected = (header.n_lat as u64)
        .checked_mul(header.n_lon as u64)
        .and_then(|n| n.checked_mul(depth))
        .and_then(|n| n.checked_mul(width));
    if expected != Some(payload.len() as u64) {
        return Err(IoError::HeaderPayloadShapeMismatch {
            path: path.to_path_buf(),
            expected: expected.unwrap_or(u64::MAX),
            actual: payload.len() as u64,
        });
    }
    let actual = crc32fast::hash(&payload);
    if actual != header.checksum {
        return Err(IoError::ChecksumMismatch {
            path: path.to_path_buf(),
            expected: header.checksum,
            actual,
        });
    }
    let stored: Vec<f64> = if width == 4 {
        payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect()
    } else {
        payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect()
    };
    if let Some(index) = stored.iter().position(|v| !v.is_finite()) {
        return Err(IoError::NonFiniteValue {
            path: path.to_path_buf(),
            index,
        });
    }
    let (grid, flip, roll) = normalized_axes(path, &header)?;
    let (n_lat, n_lon) = (header.n_lat, header.n_lon);
    let values = if !flip && roll == 0 {
        stored
    } else {
        let mut out = Vec::with_capacity(stored.len());
        for layer in stored.chunks_exact(n_lat * n_lon) {
            for i in 0..n_lat {
                let src = if flip { n_lat - 1 - i } else { i };
                let row = &layer[src * n_lon..(src + 1) * n_lon];
                out.extend_from_slice(&row[roll..]);
                out.extend_from_slice(&row[..roll]);
            }
        }
        out
    };
    Ok(RawGrid {
        header,
        grid: Arc::new(grid),
        values,
    })
}

pub fn read_grid(path: &Path) -> Result<GridField, IoError> {
    let raw = read_raw(path)?;
    if raw.header.store.is_some() {
        return Err(IoError::Store {
            path: path.to_path_buf(),
            detail: "file is a climatology store, not a single field".into(),
        });
    }
    GridField::new(
        raw.grid,
        raw.header.variable,
        raw.header.valid_time,
        raw.header.lead_hours,
        raw.values,
    )
    .map_err(|source| IoError::Grid {
        path: path.to_path_buf(),
        source,
    })
}

fn store_epoch() -> DateTime<Utc> {
    DateTime::<Utc>::UNIX_EPOCH
}

pub fn write_climatology(
    path: &Path,
    grid: &GeoGrid,
    variable: VariableId,
    clim: &DailyMeanClimatology,
) -> Result<(), IoError> {
    let info = StoreInfo {
        kind: StoreKind::DailyMean,
        depth: DAYS_PER_YEAR,
        years: clim.years.clone(),
        threshold_config: None,
    };
    write_raw(path, grid, variable, store_epoch(), 0, Some(info), clim.values())
}

fn read_store(path: &Path, kind: StoreKind) -> Result<(RawGrid, StoreInfo), IoError> {
    let raw = read_raw(path)?;
    let info = raw.header.store.clone().ok_or_else(|| IoError::Store {
        path: path.to_path_buf(),
        detail: "not a climatology store".into(),
    })?;
    let depth = match kind {
        StoreKind::DailyMean => DAYS_PER_YEAR,
        StoreKind::Thresholds => 2 * DAYS_PER_YEAR,
    };
    if info.kind != kind || info.depth != depth {
        return Err(IoError::Store {
            path: path.to_path_buf(),
            detail: format!("expected {kind:?} store of depth {depth}, found {:?} of depth {}", info.kind, info.depth),
        });
    }
    Ok((raw, info))
}

pub fn read_climatology(path: &Path) -> Result<(Arc<GeoGrid>, VariableId, DailyMeanClimatology), IoError> {
    let (raw, info) = read_store(path, StoreKind::DailyMean)?;
    let n = raw.grid.len();
    let clim = DailyMeanClimatology::from_parts(n, info.years, raw.values).map_err(|e| IoError::Store {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    Ok((raw.grid, raw.header.variable, clim))
}

pub fn write_thresholds(path: &Path, grid: &GeoGrid, variable: VariableId, field: &ThresholdField) -> Result<(), IoError> {
    let info = StoreInfo {
        kind: StoreKind::Thresholds,
        depth: 2 * DAYS_PER_YEAR,
        years: field.years.clone(),
        threshold_config: Some(field.config),
    };
    let mut values = field.heat_values().to_vec();
    values.extend_from_slice(field.cold_values());
    write_raw(path, grid, variable, store_epoch(), 0, Some(info), &values)
}

pub fn read_thresholds(path: &Path) -> Result<(Arc<GeoGrid>, ThresholdField), IoError> {
    let (raw, info) = read_store(path, StoreKind::Thresholds)?;
    let n = raw.grid.len();
    let mut heat = raw.values;
    let cold = heat.split_off(DAYS_PER_YEAR * n);
    let config = info.threshold_config.unwrap_or_default();
    let field = ThresholdField::from_parts(n, info.years, config, heat, cold).map_err(|e| IoError::Store {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    Ok((raw.grid, field))
}

/// SHA-256 of a file's bytes, hex encoded.
pub fn file_sha256(path: &Path) -> Result<String, IoError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BestTrackRow {
    storm_id: String,
    iso_time: DateTime<Utc>,
    lat: f64,
    lon: f64,
    mslp_hpa: f64,
    wind_ms: f64,
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>, IoError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> IoError + '_ {
    move |source| IoError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// Truth tracks grouped by storm id, sorted by id. Rows of one storm must
/// appear in increasing time at 6 h spacing.
/// A best track as it reads back after [`write_besttrack`]: pressures pass
/// through hPa and longitudes are normalized.
pub fn canonical_besttrack(tracks: &[StormTrack]) -> Vec<StormTrack> {
    let mut out: Vec<StormTrack> = tracks
        .iter()
        .map(|t| {
            let mut t = t.clone();
            for f in &mut t.fixes {
                f.min_mslp_pa = (f.min_mslp_pa / 100.0) * 100.0;
                f.lon = normalize_lon(f.lon);
            }
            t
        })
        .collect();
    out.sort_by(|a, b| a.storm_id.cmp(&b.storm_id));
    out
}

pub fn read_besttrack(path: &Path) -> Result<Vec<StormTrack>, IoError> {
    let mut rdr = csv_reader(path)?;
    let mut storms: BTreeMap<String, Vec<StormFix>> = BTreeMap::new();
    for (k, rec) in rdr.deserialize::<BestTrackRow>().enumerate() {
        let row = rec.map_err(csv_err(path))?;
        let line = k as u64 + 2;
        let fix = StormFix {
            time: row.iso_time,
            lat: row.lat,
            lon: normalize_lon(row.lon),
            min_mslp_pa: row.mslp_hpa * 100.0,
            max_wind_ms: row.wind_ms,
        };
        fix.validate().map_err(|e| IoError::UnitOutOfRange {
            path: path.to_path_buf(),
            line,
            detail: e.to_string(),
        })?;
        let fixes = storms.entry(row.storm_id.clone()).or_default();
        if let Some(prev) = fixes.last() {
            if fix.time <= prev.time {
                return Err(IoError::NonMonotoneTime {
                    path: path.to_path_buf(),
                    storm_id: row.storm_id,
                    time: fix.time,
                });
            }
            if fix.time - prev.time != Duration::hours(6) {
                return Err(IoError::IrregularCadence {
                    path: path.to_path_buf(),
                    storm_id: row.storm_id,
                    time: fix.time,
                });
            }
        }
        fixes.push(fix);
    }
    storms
        .into_iter()
        .map(|(id, fixes)| {
            StormTrack::truth(id, fixes).map_err(|e| IoError::Manifest {
                path: path.to_path_buf(),
                detail: e.to_string(),
            })
        })
        .collect()
}

pub fn write_besttrack(path: &Path, tracks: &[StormTrack]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for t in tracks {
        for f in &t.fixes {
            w.serialize(BestTrackRow {
                storm_id: t.storm_id.clone(),
                iso_time: f.time,
                lat: f.lat,
                lon: f.lon,
                mslp_hpa: f.min_mslp_pa / 100.0,
                wind_ms: f.max_wind_ms,
            })
            .map_err(csv_err(path))?;
        }
    }
    let bytes = w.into_inner().expect("in-memory writer");
    write_atomic(path, &bytes)
}

#[derive(Debug, Serialize)]
struct TrackRow<'a> {
    storm_id: &'a str,
    source: String,
    init_time: DateTime<Utc>,
    lead_hours: u32,
    tracked: bool,
    iso_time: Option<DateTime<Utc>>,
    lat: Option<f64>,
    lon: Option<f64>,
    mslp_hpa: Option<f64>,
    wind_ms: Option<f64>,
}

/// Tracker output: one row per (track, lead), untracked leads left blank.
pub fn write_tracks_csv(path: &Path, tracks: &[StormTrack]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for t in tracks {
        for (k, &tracked) in t.tracked_mask.iter().enumerate() {
            let lead = 6 * k as u32;
            let fix = t.fix_at_lead(lead);
            w.serialize(TrackRow {
                storm_id: &t.storm_id,
                source: t.source.label(),
                init_time: t.init_time,
                lead_hours: lead,
                tracked,
                iso_time: fix.map(|f| f.time),
                lat: fix.map(|f| f.lat),
                lon: fix.map(|f| f.lon),
                mslp_hpa: fix.map(|f| f.min_mslp_pa / 100.0),
                wind_ms: fix.map(|f| f.max_wind_ms),
            })
            .map_err(csv_err(path))?;
        }
    }
    write_atomic(path, &w.into_inner().expect("in-memory writer"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StationMetaRow {
    id: String,
    lat: f64,
    lon: f64,
    elev_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ObservationRow {
    station_id: String,
    iso_time: DateTime<Utc>,
    variable: VariableId,
    value_si: f64,
}

/// A raw observation before window aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct RawObservation {
    pub station_id: String,
    pub time: DateTime<Utc>,
    pub variable: VariableId,
    pub value: f64,
}

fn nearest_synoptic(t: DateTime<Utc>) -> DateTime<Utc> {
    let six = 6 * 3600;
    let s = t.timestamp();
    let base = s.div_euclid(six) * six;
    let r = if s - base >= six - (s - base) { base + six } else { base };
    DateTime::from_timestamp(r, 0).expect("in range")
}

/// Station metadata plus raw observations, aggregated onto the contiguous
/// 6-hourly axis spanning every synoptic time with at least one record in
/// its window.
pub fn read_station_csvs(meta_path: &Path, obs_path: &Path) -> Result<StationTable, IoError> {
    let mut stations = Vec::new();
    let mut ids: BTreeMap<String, usize> = BTreeMap::new();
    for rec in csv_reader(meta_path)?.deserialize::<StationMetaRow>() {
        let row = rec.map_err(csv_err(meta_path))?;
        if ids.insert(row.id.clone(), stations.len()).is_some() {
            return Err(IoError::Station {
                path: meta_path.to_path_buf(),
                source: StationError::DuplicateStation(row.id),
            });
        }
        if !(-90.0..=90.0).contains(&row.lat) || !row.lon.is_finite() || !row.elev_m.is_finite() {
            return Err(IoError::UnitOutOfRange {
                path: meta_path.to_path_buf(),
                line: stations.len() as u64 + 2,
                detail: format!("station {} position ({}, {})", row.id, row.lat, row.lon),
            });
        }
        stations.push(Station {
            id: row.id,
            lat: row.lat,
            lon: normalize_lon(row.lon),
            elevation_m: row.elev_m,
        });
    }

    let mut raw: BTreeMap<(usize, VariableId), Vec<(DateTime<Utc>, f64)>> = BTreeMap::new();
    let mut seen: BTreeSet<(usize, DateTime<Utc>, VariableId)> = BTreeSet::new();
    for (k, rec) in csv_reader(obs_path)?.deserialize::<ObservationRow>().enumerate() {
        let line = k as u64 + 2;
        let row = rec.map_err(csv_err(obs_path))?;
        let &s = ids.get(&row.station_id).ok_or_else(|| IoError::UnknownStation {
            path: obs_path.to_path_buf(),
            line,
            id: row.station_id.clone(),
        })?;
        if !row.value_si.is_finite() {
            return Err(IoError::UnitOutOfRange {
                path: obs_path.to_path_buf(),
                line,
                detail: format!("non-finite value {}", row.value_si),
            });
        }
        if !seen.insert((s, row.iso_time, row.variable)) {
            return Err(IoError::DuplicateObservation {
                path: obs_path.to_path_buf(),
                line,
                station: row.station_id,
                time: row.iso_time,
                variable: row.variable,
            });
        }
        raw.entry((s, row.variable)).or_default().push((row.iso_time, row.value_si));
    }
    assemble_station_table(stations, &raw).map_err(|source| IoError::Station {
        path: obs_path.to_path_buf(),
        source,
    })
}

/// Builds the station table from raw records: the time axis is the
/// contiguous 6-hourly span of synoptic times with at least one record in
/// their window.
pub fn assemble_station_table(
    stations: Vec<Station>,
    raw: &BTreeMap<(usize, VariableId), Vec<(DateTime<Utc>, f64)>>,
) -> Result<StationTable, StationError> {
    let window = Duration::minutes(WINDOW_MINUTES);
    let targets: BTreeSet<DateTime<Utc>> = raw
        .values()
        .flatten()
        .filter_map(|&(tau, _)| {
            let t = nearest_synoptic(tau);
            ((tau - t).abs() <= window).then_some(t)
        })
        .collect();
    let times: Vec<DateTime<Utc>> = match (targets.first(), targets.last()) {
        (Some(&a), Some(&b)) => {
            let n = (b - a).num_hours() / 6;
            (0..=n).map(|k| a + Duration::hours(6 * k)).collect()
        }
        _ => Vec::new(),
    };
    StationTable::from_raw(stations, times, raw)
}

pub fn write_station_csvs(
    meta_path: &Path,
    obs_path: &Path,
    stations: &[Station],
    observations: &[RawObservation],
) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for s in stations {
        w.serialize(StationMetaRow {
            id: s.id.clone(),
            lat: s.lat,
            lon: s.lon,
            elev_m: s.elevation_m,
        })
        .map_err(csv_err(meta_path))?;
    }
    write_atomic(meta_path, &w.into_inner().expect("in-memory writer"))?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for o in observations {
        w.serialize(ObservationRow {
            station_id: o.station_id.clone(),
            iso_time: o.time,
            variable: o.variable,
            value_si: o.value,
        })
        .map_err(csv_err(obs_path))?;
    }
    write_atomic(obs_path, &w.into_inner().expect("in-memory writer"))
}

/// Latitude/longitude box; `lon_min > lon_max` wraps through 0°.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionBox {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl RegionBox {
    pub const GLOBAL: RegionBox = RegionBox {
        lat_min: -90.0,
        lat_max: 90.0,
        lon_min: 0.0,
        lon_max: 360.0,
    };

    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        if lat < self.lat_min || lat > self.lat_max {
            return false;
        }
        if self.lon_min == 0.0 && self.lon_max >= 360.0 {
            return true;
        }
        let (lon, lo, hi) = (normalize_lon(lon), normalize_lon(self.lon_min), normalize_lon(self.lon_max));
        if lo <= hi {
            lon >= lo && lon <= hi
        } else {
            lon >= lo || lon <= hi
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistorySpec {
    /// Pattern with `{var}` and `{valid}`.
    pub pattern: String,
    pub years: Vec<i32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationFiles {
    pub meta: String,
    pub obs: String,
}

fn default_max_lead() -> u32 {
    DEFAULT_MAX_LEAD_HOURS
}

/// Run description. Patterns may use `{var}`, `{valid}`, `{init}`, `{lead}`
/// (zero-padded to three digits) and `{model}`; times format as `YYYYMMDDHH`.
/// Relative paths resolve against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub truth: String,
    pub models: BTreeMap<String, String>,
    pub init_times: Vec<DateTime<Utc>>,
    #[serde(default = "default_max_lead")]
    pub max_lead_hours: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lead_hours: Option<Vec<u32>>,
    pub variables: Vec<VariableId>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub regions: BTreeMap<String, RegionBox>,
    /// Daily-mean store pattern with `{var}`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub climatology: Option<String>,
    /// T2M threshold store.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub history: Option<HistorySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_track: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stations: Option<StationFiles>,
}

pub fn stamp(t: DateTime<Utc>) -> String {
    t.format(TIME_STAMP_FORMAT).to_string()
}

pub fn expand_pattern(
    pattern: &str,
    model: Option<&str>,
    var: Option<VariableId>,
    valid: Option<DateTime<Utc>>,
    init: Option<DateTime<Utc>>,
    lead: Option<u32>,
) -> String {
    let mut s = pattern.to_string();
    if let Some(m) = model {
        s = s.replace("{model}", m);
    }
    if let Some(v) = var {
        s = s.replace("{var}", v.name());
    }
    if let Some(t) = valid {
        s = s.replace("{valid}", &stamp(t));
    }
    if let Some(t) = init {
        s = s.replace("{init}", &stamp(t));
    }
    if let Some(l) = lead {
        s = s.replace("{lead}", &format!("{l:03}"));
    }
    s
}

/// All 6-hourly times of the listed calendar years.
pub fn synoptic_times_of_years(years: &[i32]) -> Vec<DateTime<Utc>> {
    let mut out = Vec::new();
    for &y in years {
        let Some(start) = chrono::NaiveDate::from_ymd_opt(y, 1, 1) else { continue };
        let Some(end) = chrono::NaiveDate::from_ymd_opt(y + 1, 1, 1) else { continue };
        let mut t = start.and_hms_opt(0, 0, 0).expect("midnight").and_utc();
        let end = end.and_hms_opt(0, 0, 0).expect("midnight").and_utc();
        while t < end {
            out.push(t);
            t += Duration::hours(6);
        }
    }
    out
}

/// A parsed manifest with its location and content hash.
#[derive(Debug, Clone)]
pub struct LoadedManifest {
    pub manifest: RunManifest,
    pub path: PathBuf,
    pub base_dir: PathBuf,
    pub sha256: String,
}

impl LoadedManifest {
    /// Parses, checks internal consistency, and confirms every referenced
    /// file exists.
    pub fn load(path: &Path) -> Result<Self, IoError> {
        let loaded = Self::parse(path)?;
        loaded.check_files()?;
        Ok(loaded)
    }

    /// Parses and checks consistency without touching referenced files.
    pub fn parse(path: &Path) -> Result<Self, IoError> {
        let bytes = fs::read(path).map_err(io_err(path))?;
        let manifest: RunManifest = serde_json::from_slice(&bytes).map_err(|source| IoError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        let bad = |detail: String| IoError::Manifest {
            path: path.to_path_buf(),
            detail,
        };
        if let Some(v) = manifest.variables.iter().find(|v| v.is_derived()) {
            return Err(bad(format!("derived variable {v} cannot be listed")));
        }
        if let Some(l) = manifest
            .lead_hours
            .iter()
            .flatten()
            .find(|&&l| l > manifest.max_lead_hours || l % 6 != 0)
        {
            return Err(bad(format!(
                "lead {l} h is not a multiple of 6 within max lead {} h",
                manifest.max_lead_hours
            )));
        }
        if manifest.max_lead_hours % 6 != 0 {
            return Err(bad(format!("max lead {} h is not a multiple of 6", manifest.max_lead_hours)));
        }
        if let Some(t) = manifest.init_times.iter().find(|t| !is_synoptic(**t)) {
            return Err(bad(format!("init time {t} is not a synoptic hour")));
        }
        if manifest.init_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(bad("init times must strictly increase".into()));
        }
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self {
            sha256: hex::encode(Sha256::digest(&bytes)),
            manifest,
            path: path.to_path_buf(),
            base_dir,
        })
    }

    pub fn resolve(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn leads(&self) -> Vec<u32> {
        match &self.manifest.lead_hours {
            Some(l) => l.clone(),
            None => (0..=self.manifest.max_lead_hours).step_by(6).collect(),
        }
    }

    pub fn truth_path(&self, var: VariableId, valid: DateTime<Utc>) -> PathBuf {
        self.resolve(&expand_pattern(&self.manifest.truth, None, Some(var), Some(valid), None, None))
    }

    pub fn model_path(&self, model: &str, var: VariableId, init: DateTime<Utc>, lead: u32) -> Option<PathBuf> {
        let pattern = self.manifest.models.get(model)?;
        let valid = init + Duration::hours(lead as i64);
        Some(self.resolve(&expand_pattern(
            pattern,
            Some(model),
            Some(var),
            Some(valid),
            Some(init),
            Some(lead),
        )))
    }

    pub fn history_path(&self, var: VariableId, valid: DateTime<Utc>) -> Option<PathBuf> {
        let h = self.manifest.history.as_ref()?;
        Some(self.resolve(&expand_pattern(&h.pattern, None, Some(var), Some(valid), None, None)))
    }

    pub fn climatology_path(&self, var: VariableId) -> Option<PathBuf> {
        let c = self.manifest.climatology.as_ref()?;
        Some(self.resolve(&expand_pattern(c, None, Some(var), None, None, None)))
    }

    pub fn thresholds_path(&self) -> Option<PathBuf> {
        self.manifest.thresholds.as_ref().map(|p| self.resolve(p))
    }

    pub fn best_track_path(&self) -> Option<PathBuf> {
        self.manifest.best_track.as_ref().map(|p| self.resolve(p))
    }

    pub fn station_paths(&self) -> Option<(PathBuf, PathBuf)> {
        self.manifest
            .stations
            .as_ref()
            .map(|s| (self.resolve(&s.meta), self.resolve(&s.obs)))
    }

    fn require(path: PathBuf) -> Result<(), IoError> {
        if path.is_file() {
            Ok(())
        } else {
            Err(IoError::MissingFile(path))
        }
    }

    fn require_grid(path: PathBuf) -> Result<(), IoError> {
        let side = sidecar_path(&path);
        Self::require(path)?;
        Self::require(side)
    }

    pub fn check_files(&self) -> Result<(), IoError> {
        let m = &self.manifest;
        let leads = self.leads();
        for &var in &m.variables {
            for &init in &m.init_times {
                for &lead in &leads {
                    Self::require_grid(self.truth_path(var, init + Duration::hours(lead as i64)))?;
                    for model in m.models.keys() {
                        Self::require_grid(self.model_path(model, var, init, lead).expect("model listed"))?;
                    }
                }
            }
            if let Some(p) = self.climatology_path(var) {
                Self::require_grid(p)?;
            }
            if let Some(h) = &m.history {
                for t in synoptic_times_of_years(&h.years) {
                    Self::require_grid(self.history_path(var, t).expect("history listed"))?;
                }
            }
        }
        if let Some(p) = self.thresholds_path() {
            Self::require_grid(p)?;
        }
        if let Some(p) = self.best_track_path() {
            Self::require(p)?;
        }
        if let Some((a, b)) = self.station_paths() {
            Self::require(a)?;
            Self::require(b)?;
        }
        Ok(())
    }
}

pub fn manifest_bytes(manifest: &RunManifest) -> Vec<u8> {
    let mut json = serde_json::to_vec_pretty(manifest).expect("manifest serializes");
    json.push(b'\n');
    json
}

pub fn write_manifest(path: &Path, manifest: &RunManifest) -> Result<(), IoError> {
    write_atomic(path, &manifest_bytes(manifest))
}
