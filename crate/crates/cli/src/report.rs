//! Scorecard to CSV tables plus a plain-text summary.

use std::fs;
use std::path::Path;

use serde::Serialize;
use wxverify_core::pipeline::Scorecard;

use crate::{write_csv, CliError, Result};

#[derive(Serialize)]
struct SpectrumRow<'a> {
    source: &'a str,
    variable: &'a str,
    lead_hours: u32,
    wavenumber: usize,
    energy: f64,
}

#[derive(Serialize)]
struct QcRow<'a> {
    variable: &'a str,
    raw: usize,
    replaced: usize,
    absent: usize,
    non_positive_reference: usize,
}

pub fn run(path: &Path, out: Option<&Path>) -> Result<()> {
    let bytes = fs::read(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    let card: Scorecard =
        serde_json::from_slice(&bytes).map_err(|source| CliError::Json { path: path.to_path_buf(), source })?;
    if let Some(dir) = out {
        write_tables(&card, dir)?;
    }
    print!("{}", summary(&card));
    Ok(())
}

fn write_tables(card: &Scorecard, dir: &Path) -> Result<()> {
    if let Some(m) = &card.metrics {
        write_csv(&dir.join("metrics.csv"), m)?;
    }
    if let Some(s) = &card.spectra {
        let rows: Vec<SpectrumRow> = s
            .iter()
            .flat_map(|e| {
                e.energy.iter().enumerate().map(move |(k, &energy)| SpectrumRow {
                    source: &e.source,
                    variable: e.variable.name(),
                    lead_hours: e.lead_hours,
                    wavenumber: k,
                    energy,
                })
            })
            .collect();
        write_csv(&dir.join("spectra.csv"), &rows)?;
    }
    if let Some(e) = &card.extremes {
        write_csv(&dir.join("extremes.csv"), e)?;
    }
    if let Some(c) = &card.cyclones {
        write_csv(&dir.join("cyclones.csv"), c)?;
    }
    if let Some(s) = &card.stations {
        write_csv(&dir.join("stations.csv"), s)?;
    }
    if let Some(qc) = &card.qc {
        let rows: Vec<QcRow> = qc
            .iter()
            .map(|(v, c)| QcRow {
                variable: v.name(),
                raw: c.raw,
                replaced: c.replaced,
                absent: c.absent,
                non_positive_reference: c.non_positive_reference,
            })
            .collect();
        write_csv(&dir.join("qc.csv"), &rows)?;
    }
    Ok(())
}

fn summary(card: &Scorecard) -> String {
    use std::fmt::Write;

    let mut s = String::new();
    let p = &card.provenance;
    let _ = writeln!(s, "engine {}  manifest {}", p.engine_version, &p.manifest_sha256[..12.min(p.manifest_sha256.len())]);
    if let Some(m) = &card.metrics {
        let _ = writeln!(s, "\nmetrics ({} entries)", m.len());
        let last = m.iter().map(|e| e.lead_hours).max().unwrap_or(0);
        for e in m.iter().filter(|e| e.lead_hours == last) {
            let _ = writeln!(s, "  {:<14} {:<5} {:>4}h {:<9} {}", e.model, e.variable, e.lead_hours, e.metric.name(), e.value);
        }
    }
    if let Some(sp) = &card.spectra {
        let _ = writeln!(s, "\nspectra ({} entries)", sp.len());
    }
    if let Some(ex) = &card.extremes {
        let _ = writeln!(s, "\nextremes");
        for e in ex.iter().filter(|e| e.region == wxverify_core::pipeline::GLOBAL_REGION) {
            let _ = writeln!(
                s,
                "  {:<14} {:<9} day {:>2}  POD {}  FAR {}  CSI {}",
                e.model,
                e.kind.name(),
                e.lead_days,
                e.pod,
                e.far,
                e.csi
            );
        }
    }
    if let Some(c) = &card.cyclones {
        let _ = writeln!(s, "\ncyclones");
        for e in c {
            let _ = writeln!(
                s,
                "  {:<14} {:>4}h  n={}  DPE {} km  MSLP bias {} hPa  wind bias {} m/s",
                e.model, e.lead_hours, e.n_cases, e.dpe_km, e.bias_p_hpa, e.bias_v_ms
            );
        }
    }
    if let Some(st) = &card.stations {
        let _ = writeln!(s, "\nstations ({} entries)", st.len());
    }
    if let Some(qc) = &card.qc {
        for (v, c) in qc {
            let _ = writeln!(s, "  QC {:<5} raw {}  replaced {}  absent {}", v, c.raw, c.replaced, c.absent);
        }
    }
    s
}
