//! Regular latitude/longitude grids, area weights, bilinear interpolation and
//! great-circle distance.
//!
//! Rows run north to south and columns run eastward from 0° to 360°; every
//! reader normalizes to this orientation before building a [`GeoGrid`].

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean Earth radius shared by great-circle distances and zonal spectra.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Coordinates closer than this to an axis end are clamped onto it.
const AXIS_EPS_DEG: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("invalid grid axis: {0}")]
    InvalidAxis(String),
    #[error("field has {got} values, grid needs {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },
    #[error("target ({lat}, {lon}) lies outside the source grid")]
    TargetOutsideDomain { lat: f64, lon: f64 },
    #[error("lead {0} h is not a multiple of 6 h")]
    LeadNotSynoptic(u32),
    #[error("fields are defined on different grids")]
    GridMismatch,
}

/// Verification variables with their canonical SI units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum VariableId {
    T2M,
    U10,
    V10,
    D2M,
    MSL,
    /// 10-m wind speed, only ever derived from U10/V10.
    WS10,
    Z500,
    T850,
    Q700,
    U850,
}

impl VariableId {
    pub const ALL: [VariableId; 10] = [
        VariableId::T2M,
        VariableId::U10,
        VariableId::V10,
        VariableId::D2M,
        VariableId::MSL,
        VariableId::WS10,
        VariableId::Z500,
        VariableId::T850,
        VariableId::Q700,
        VariableId::U850,
    ];

    pub fn name(self) -> &'static str {
        match self {
            VariableId::T2M => "T2M",
            VariableId::U10 => "U10",
            VariableId::V10 => "V10",
            VariableId::D2M => "D2M",
            VariableId::MSL => "MSL",
            VariableId::WS10 => "WS10",
            VariableId::Z500 => "Z500",
            VariableId::T850 => "T850",
            VariableId::Q700 => "Q700",
            VariableId::U850 => "U850",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            VariableId::T2M | VariableId::D2M | VariableId::T850 => "K",
            VariableId::U10 | VariableId::V10 | VariableId::WS10 | VariableId::U850 => "m/s",
            VariableId::MSL => "Pa",
            VariableId::Z500 => "m2/s2",
            VariableId::Q700 => "kg/kg",
        }
    }

    pub fn is_derived(self) -> bool {
        matches!(self, VariableId::WS10)
    }
}

impl fmt::Display for VariableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for VariableId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        VariableId::ALL
            .iter()
            .copied()
            .find(|v| v.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown variable '{s}'"))
    }
}

/// Start/step description of a regular grid, kept so files can be written
/// and re-read with bit-identical coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularAxes {
    pub lat_start: f64,
    pub lat_step: f64,
    pub lon_start: f64,
    pub lon_step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeoGrid {
    lat_deg: Vec<f64>,
    lon_deg: Vec<f64>,
    wraps_lon: bool,
    regular: Option<RegularAxes>,
}

/// Maps longitudes given in [-180, 180) (or any other range) into [0, 360).
pub fn normalize_lon(lon: f64) -> f64 {
    let l = lon.rem_euclid(360.0);
    if l >= 360.0 {
        0.0
    } else {
        l
    }
}

/// Cosine of latitude, exactly zero at the poles.
pub fn cos_lat(lat_deg: f64) -> f64 {
    if lat_deg.abs() >= 90.0 {
        0.0
    } else {
        lat_deg.to_radians().cos()
    }
}

impl GeoGrid {
    pub fn new(lat_deg: Vec<f64>, lon_deg: Vec<f64>) -> Result<Self, GridError> {
        if lat_deg.is_empty() || lon_deg.is_empty() {
            return Err(GridError::InvalidAxis("empty axis".into()));
        }
        if let Some(bad) = lat_deg.iter().find(|v| !v.is_finite() || v.abs() > 90.0) {
            return Err(GridError::InvalidAxis(format!("latitude {bad} out of [-90, 90]")));
        }
        if let Some(bad) = lon_deg.iter().find(|v| !v.is_finite() || **v < 0.0 || **v >= 360.0) {
            return Err(GridError::InvalidAxis(format!("longitude {bad} out of [0, 360)")));
        }
        if lat_deg.windows(2).any(|w| w[1] >= w[0]) {
            return Err(GridError::InvalidAxis("latitudes must strictly decrease".into()));
        }
        if lon_deg.windows(2).any(|w| w[1] <= w[0]) {
            return Err(GridError::InvalidAxis("longitudes must strictly increase".into()));
        }
        let wraps_lon = detect_wrap(&lon_deg);
        Ok(Self {
            lat_deg,
            lon_deg,
            wraps_lon,
            regular: None,
        })
    }

    /// Regular grid from start/step pairs. `lat_step` must be negative
    /// (north to south) whenever `n_lat > 1`.
    pub fn regular(
        lat_start: f64,
        lat_step: f64,
        n_lat: usize,
        lon_start: f64,
        lon_step: f64,
        n_lon: usize,
    ) -> Result<Self, GridError> {
        if n_lat == 0 || n_lon == 0 {
            return Err(GridError::InvalidAxis("empty axis".into()));
        }
        if n_lat > 1 && lat_step >= 0.0 {
            return Err(GridError::InvalidAxis("lat_step must be negative".into()));
        }
        if n_lon > 1 && lon_step <= 0.0 {
            return Err(GridError::InvalidAxis("lon_step must be positive".into()));
        }
        let lon_start = normalize_lon(lon_start);
        let lat: Vec<f64> = (0..n_lat)
            .map(|i| {
                let v = lat_start + i as f64 * lat_step;
                if v.abs() > 90.0 && v.abs() - 90.0 <= AXIS_EPS_DEG {
                    90.0f64.copysign(v)
                } else {
                    v
                }
            })
            .collect();
        let lon: Vec<f64> = (0..n_lon).map(|j| lon_start + j as f64 * lon_step).collect();
        let mut grid = Self::new(lat, lon)?;
        grid.regular = Some(RegularAxes {
            lat_start,
            lat_step,
            lon_start,
            lon_step,
        });
        Ok(grid)
    }

    /// Global grid with poles included and `n_lon` uniform columns from 0°.
    pub fn global(n_lat: usize, n_lon: usize) -> Result<Self, GridError> {
        if n_lat < 2 {
            return Err(GridError::InvalidAxis("global grid needs at least 2 rows".into()));
        }
        Self::regular(
            90.0,
            -180.0 / (n_lat - 1) as f64,
            n_lat,
            0.0,
            360.0 / n_lon as f64,
            n_lon,
        )
    }

    /// The 0.25° evaluation grid (721 × 1440).
    pub fn quarter_degree() -> Self {
        Self::regular(90.0, -0.25, 721, 0.0, 0.25, 1440).expect("static grid is valid")
    }

    pub fn n_lat(&self) -> usize {
        self.lat_deg.len()
    }

    pub fn n_lon(&self) -> usize {
        self.lon_deg.len()
    }

    pub fn len(&self) -> usize {
        self.n_lat() * self.n_lon()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lat_deg(&self) -> &[f64] {
        &self.lat_deg
    }

    pub fn lon_deg(&self) -> &[f64] {
        &self.lon_deg
    }

    pub fn wraps_lon(&self) -> bool {
        self.wraps_lon
    }

    pub fn regular_axes(&self) -> Option<RegularAxes> {
        self.regular
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.n_lon() + col
    }

    /// Representative spacing in km along a meridian (used for smoothing
    /// lengths and tracker tolerances).
    pub fn lat_spacing_km(&self) -> f64 {
        if self.n_lat() < 2 {
            return 0.0;
        }
        let span = self.lat_deg[0] - self.lat_deg[self.n_lat() - 1];
        span / (self.n_lat() - 1) as f64 * EARTH_RADIUS_KM.to_radians()
    }

    pub fn lon_spacing_deg(&self) -> f64 {
        if self.n_lon() < 2 {
            return 360.0;
        }
        (self.lon_deg[self.n_lon() - 1] - self.lon_deg[0]) / (self.n_lon() - 1) as f64
    }

    fn lat_stencil(&self, lat: f64) -> Option<Stencil> {
        let n = self.n_lat();
        let north = self.lat_deg[0];
        let south = self.lat_deg[n - 1];
        if !lat.is_finite() {
            return None;
        }
        let lat = if lat > north && lat - north <= AXIS_EPS_DEG {
            north
        } else if lat < south && south - lat <= AXIS_EPS_DEG {
            south
        } else {
            lat
        };
        if lat > north || lat < south {
            return None;
        }
        let k = self.lat_deg.partition_point(|&v| v > lat);
        if k < n && self.lat_deg[k] == lat {
            return Some(Stencil::node(k));
        }
        let i = k - 1;
        let t = (self.lat_deg[i] - lat) / (self.lat_deg[i] - self.lat_deg[i + 1]);
        Some(Stencil { lo: i, hi: i + 1, t })
    }

    fn lon_stencil(&self, lon: f64) -> Option<Stencil> {
        if !lon.is_finite() {
            return None;
        }
        let n = self.n_lon();
        let l = normalize_lon(lon);
        let first = self.lon_deg[0];
        let last = self.lon_deg[n - 1];
        if self.wraps_lon {
            let k = self.lon_deg.partition_point(|&v| v <= l);
            if k == 0 {
                let span = first + 360.0 - last;
                return Some(Stencil {
                    lo: n - 1,
                    hi: 0,
                    t: (l + 360.0 - last) / span,
                });
            }
            let j = k - 1;
            if self.lon_deg[j] == l {
                return Some(Stencil::node(j));
            }
            if j == n - 1 {
                let span = first + 360.0 - last;
                return Some(Stencil {
                    lo: n - 1,
                    hi: 0,
                    t: (l - last) / span,
                });
            }
            let t = (l - self.lon_deg[j]) / (self.lon_deg[j + 1] - self.lon_deg[j]);
            return Some(Stencil { lo: j, hi: j + 1, t });
        }
        let l = if l < first && first - l <= AXIS_EPS_DEG {
            first
        } else if l > last && l - last <= AXIS_EPS_DEG {
            last
        } else {
            l
        };
        if l < first || l > last {
            return None;
        }
        let k = self.lon_deg.partition_point(|&v| v <= l);
        let j = k - 1;
        if self.lon_deg[j] == l {
            return Some(Stencil::node(j));
        }
        let t = (l - self.lon_deg[j]) / (self.lon_deg[j + 1] - self.lon_deg[j]);
        Some(Stencil { lo: j, hi: j + 1, t })
    }
}

fn detect_wrap(lon: &[f64]) -> bool {
    if lon.len() < 2 {
        return false;
    }
    let step = lon[1] - lon[0];
    let uniform = lon
        .windows(2)
        .all(|w| ((w[1] - w[0]) - step).abs() <= 1e-9 * step.max(1.0));
    uniform && (step * lon.len() as f64 - 360.0).abs() <= 1e-6
}

/// One-dimensional interpolation support: `value = v[lo] + t * (v[hi] - v[lo])`.
#[derive(Debug, Clone, Copy)]
struct Stencil {
    lo: usize,
    hi: usize,
    t: f64,
}

impl Stencil {
    fn node(k: usize) -> Self {
        Stencil { lo: k, hi: k, t: 0.0 }
    }
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

/// A single-variable, single-valid-time field on a [`GeoGrid`], stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    grid: Arc<GeoGrid>,
    variable: VariableId,
    valid_time: DateTime<Utc>,
    lead_hours: u32,
    values: Vec<f64>,
}

impl GridField {
    pub fn new(
        grid: Arc<GeoGrid>,
        variable: VariableId,
        valid_time: DateTime<Utc>,
        lead_hours: u32,
        values: Vec<f64>,
    ) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::ShapeMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFinite { index });
        }
        if lead_hours % 6 != 0 {
            return Err(GridError::LeadNotSynoptic(lead_hours));
        }
        Ok(Self {
            grid,
            variable,
            valid_time,
            lead_hours,
            values,
        })
    }

    /// Builds a field by evaluating `f(lat, lon)` at every node.
    pub fn from_fn(
        grid: Arc<GeoGrid>,
        variable: VariableId,
        valid_time: DateTime<Utc>,
        lead_hours: u32,
        mut f: impl FnMut(f64, f64) -> f64,
    ) -> Result<Self, GridError> {
        let mut values = Vec::with_capacity(grid.len());
        for &lat in grid.lat_deg() {
            for &lon in grid.lon_deg() {
                values.push(f(lat, lon));
            }
        }
        Self::new(grid, variable, valid_time, lead_hours, values)
    }

    /// Same metadata, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self, GridError> {
        Self::new(
            self.grid.clone(),
            self.variable,
            self.valid_time,
            self.lead_hours,
            values,
        )
    }

    pub fn relabel(mut self, valid_time: DateTime<Utc>, lead_hours: u32) -> Result<Self, GridError> {
        if lead_hours % 6 != 0 {
            return Err(GridError::LeadNotSynoptic(lead_hours));
        }
        self.valid_time = valid_time;
        self.lead_hours = lead_hours;
        Ok(self)
    }

    pub fn grid(&self) -> &GeoGrid {
        &self.grid
    }

    pub fn grid_arc(&self) -> &Arc<GeoGrid> {
        &self.grid
    }

    pub fn variable(&self) -> VariableId {
        self.variable
    }

    pub fn valid_time(&self) -> DateTime<Utc> {
        self.valid_time
    }

    pub fn lead_hours(&self) -> u32 {
        self.lead_hours
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.values[self.grid.index(row, col)]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let n = self.grid.n_lon();
        &self.values[row * n..(row + 1) * n]
    }

    pub fn same_grid(&self, other: &GridField) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    fn sample(&self, lat: Stencil, lon: Stencil) -> f64 {
        let n = self.grid.n_lon();
        let v = &self.values;
        let north = lerp(v[lat.lo * n + lon.lo], v[lat.lo * n + lon.hi], lon.t);
        if lat.lo == lat.hi {
            return north;
        }
        let south = lerp(v[lat.hi * n + lon.lo], v[lat.hi * n + lon.hi], lon.t);
        lerp(north, south, lat.t)
    }
}

/// Normalized area weights `w_i = N_lat cos(φ_i) / Σ_k cos(φ_k)`; their mean is 1.
///
/// A grid whose rows all sit on the poles has no area; every weight is then 0.
pub fn latitude_weights(grid: &GeoGrid) -> Vec<f64> {
    let cosines: Vec<f64> = grid.lat_deg().iter().map(|&lat| cos_lat(lat)).collect();
    let total: f64 = cosines.iter().sum();
    if total <= 0.0 {
        return vec![0.0; cosines.len()];
    }
    let n = grid.n_lat() as f64;
    cosines.iter().map(|c| n * c / total).collect()
}

/// Bilinear regridding in (lat, lon), wrapping in longitude when the source is global.
pub fn regrid_bilinear(field: &GridField, target: &Arc<GeoGrid>) -> Result<GridField, GridError> {
    let src = field.grid();
    let lat_st: Vec<Stencil> = target
        .lat_deg()
        .iter()
        .map(|&lat| {
            src.lat_stencil(lat)
                .ok_or(GridError::TargetOutsideDomain { lat, lon: target.lon_deg()[0] })
        })
        .collect::<Result<_, _>>()?;
    let lon_st: Vec<Stencil> = target
        .lon_deg()
        .iter()
        .map(|&lon| {
            src.lon_stencil(lon)
                .ok_or(GridError::TargetOutsideDomain { lat: target.lat_deg()[0], lon })
        })
        .collect::<Result<_, _>>()?;
    let mut values = Vec::with_capacity(target.len());
    for la in &lat_st {
        for lo in &lon_st {
            values.push(field.sample(*la, *lo));
        }
    }
    GridField::new(
        target.clone(),
        field.variable,
        field.valid_time,
        field.lead_hours,
        values,
    )
}

/// Bilinear interpolation at arbitrary (lat, lon) points using the regridding kernel.
pub fn interp_to_stations(field: &GridField, stations: &[(f64, f64)]) -> Result<Vec<f64>, GridError> {
    let grid = field.grid();
    stations
        .iter()
        .map(|&(lat, lon)| {
            let la = grid.lat_stencil(lat);
            let lo = grid.lon_stencil(lon);
            match (la, lo) {
                (Some(la), Some(lo)) => Ok(field.sample(la, lo)),
                _ => Err(GridError::TargetOutsideDomain { lat, lon }),
            }
        })
        .collect()
}

/// 10-m wind speed √(u² + v²) from component fields on the same grid.
pub fn derive_wind_speed(u10: &GridField, v10: &GridField) -> Result<GridField, GridError> {
    if !u10.same_grid(v10) {
        return Err(GridError::GridMismatch);
    }
    let values = u10
        .values()
        .iter()
        .zip(v10.values())
        .map(|(u, v)| u.hypot(*v))
        .collect();
    GridField::new(
        u10.grid.clone(),
        VariableId::WS10,
        u10.valid_time,
        u10.lead_hours,
        values,
    )
}

/// Great-circle (haversine) distance in km between two (lat, lon) points in degrees.
pub fn haversine_km(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (lat1, lon1) = (a.0.to_radians(), a.1);
    let (lat2, lon2) = (b.0.to_radians(), b.1);
    let dlon = (lon2 - lon1).rem_euclid(360.0).to_radians();
    let s_lat = ((lat2 - lat1) / 2.0).sin();
    let s_lon = (dlon / 2.0).sin();
    let h = (s_lat * s_lat + lat1.cos() * lat2.cos() * s_lon * s_lon).clamp(0.0, 1.0);
    2.0 * EARTH_RADIUS_KM * h.sqrt().asin()
}
