//! Zonal energy spectra of gridded fields.
//!
//! For row `i` the longitudinal DFT is normalized by `1/N_lon`, and the
//! energy per wavenumber is `S_0 = C_i |F_0|²`, `S_k = 2 C_i |F_k|²` for
//! `k > 0`, with `C_i = 2πR cos φ_i` in metres. The factor 2 is applied to
//! every positive wavenumber including the Nyquist bin of even-length rows,
//! so Parseval only holds exactly for rows without Nyquist energy.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{cos_lat, GridField, VariableId, EARTH_RADIUS_KM};

pub const MIDLAT_MIN_DEG: f64 = 30.0;
pub const MIDLAT_MAX_DEG: f64 = 60.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectraError {
    #[error("row {row} at latitude {lat}° has a degenerate circumference")]
    PolarRow { row: usize, lat: f64 },
    #[error("row {0} is out of range")]
    RowOutOfRange(usize),
    #[error("no grid row lies strictly between {min}° and {max}° latitude")]
    EmptyBand { min: f64, max: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatBand {
    pub min_abs_lat: f64,
    pub max_abs_lat: f64,
    /// Row indices averaged into the spectrum, north to south.
    pub rows: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZonalSpectrum {
    pub variable: VariableId,
    pub lead_hours: u32,
    /// `energy[k]` for zonal wavenumbers `k = 0..=N_lon/2`.
    pub energy: Vec<f64>,
    pub band: LatBand,
}

impl ZonalSpectrum {
    pub fn wavenumbers(&self) -> impl Iterator<Item = usize> {
        0..self.energy.len()
    }
}

/// Physical length of the latitude circle in metres.
pub fn circumference_m(lat_deg: f64) -> f64 {
    2.0 * std::f64::consts::PI * EARTH_RADIUS_KM * 1000.0 * cos_lat(lat_deg)
}

/// Reusable forward transform for rows of one length.
pub struct RowTransform {
    fft: Arc<dyn Fft<f64>>,
    buf: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
}

impl RowTransform {
    pub fn new(n_lon: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(n_lon);
        let scratch = vec![Complex::default(); fft.get_inplace_scratch_len()];
        Self {
            fft,
            buf: vec![Complex::default(); n_lon],
            scratch,
        }
    }

    /// Energy spectrum of one row scaled by `circumference`.
    pub fn energy(&mut self, row: &[f64], circumference: f64) -> Vec<f64> {
        let n = row.len();
        assert_eq!(n, self.buf.len(), "row length does not match the planned transform");
        for (b, &x) in self.buf.iter_mut().zip(row) {
            *b = Complex::new(x, 0.0);
        }
        self.fft.process_with_scratch(&mut self.buf, &mut self.scratch);
        let inv_n = 1.0 / n as f64;
        (0..=n / 2)
            .map(|k| {
                let f = self.buf[k] * inv_n;
                let factor = if k == 0 { 1.0 } else { 2.0 };
                factor * circumference * f.norm_sqr()
            })
            .collect()
    }
}

pub fn zonal_spectrum_row(field: &GridField, row: usize) -> Result<Vec<f64>, SpectraError> {
    let grid = field.grid();
    let lat = *grid
        .lat_deg()
        .get(row)
        .ok_or(SpectraError::RowOutOfRange(row))?;
    let c = circumference_m(lat);
    if c <= 0.0 {
        return Err(SpectraError::PolarRow { row, lat });
    }
    Ok(RowTransform::new(grid.n_lon()).energy(field.row(row), c))
}

/// Rows with `30° < |φ| < 60°` in either hemisphere.
pub fn midlatitude_rows(lat_deg: &[f64]) -> Vec<usize> {
    lat_deg
        .iter()
        .enumerate()
        .filter(|(_, lat)| lat.abs() > MIDLAT_MIN_DEG && lat.abs() < MIDLAT_MAX_DEG)
        .map(|(i, _)| i)
        .collect()
}

/// Unweighted mean of row spectra over the mid-latitude band.
pub fn midlatitude_spectrum(field: &GridField) -> Result<ZonalSpectrum, SpectraError> {
    let grid = field.grid();
    let rows = midlatitude_rows(grid.lat_deg());
    if rows.is_empty() {
        return Err(SpectraError::EmptyBand {
            min: MIDLAT_MIN_DEG,
            max: MIDLAT_MAX_DEG,
        });
    }
    let mut transform = RowTransform::new(grid.n_lon());
    let mut total = vec![0.0; grid.n_lon() / 2 + 1];
    for &i in &rows {
        let s = transform.energy(field.row(i), circumference_m(grid.lat_deg()[i]));
        for (acc, v) in total.iter_mut().zip(s) {
            *acc += v;
        }
    }
    let n = rows.len() as f64;
    total.iter_mut().for_each(|v| *v /= n);
    Ok(ZonalSpectrum {
        variable: field.variable(),
        lead_hours: field.lead_hours(),
        energy: total,
        band: LatBand {
            min_abs_lat: MIDLAT_MIN_DEG,
            max_abs_lat: MIDLAT_MAX_DEG,
            rows,
        },
    })
}
