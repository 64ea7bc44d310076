#![allow(dead_code)]

use std::collections::BTreeMap;

use chrono::{NaiveDate, TimeZone, Utc};
use wxverify_core::harness::{EpisodeSpec, GridSpec, OutlierSpec, ProcessSpec, StationSpec, VortexSpec};
use wxverify_core::io::RegionBox;
use wxverify_core::{ForecasterSpec, SyntheticScenario, VariableId};

/// Regional 2.5° box over the western Pacific with every feature switched on.
pub fn full_scenario() -> SyntheticScenario {
    let start = Utc.with_ymd_and_hms(2024, 8, 1, 0, 0, 0).unwrap();
    let mut variables = BTreeMap::new();
    variables.insert(
        VariableId::T2M,
        ProcessSpec {
            lat_gradient: -0.5,
            seasonal_amplitude: 6.0,
            diurnal_amplitude: 3.0,
            noise_std: 0.8,
            lag1: 0.85,
            correlation_km: 500.0,
            ..ProcessSpec::constant(305.0)
        },
    );
    variables.insert(
        VariableId::MSL,
        ProcessSpec { noise_std: 80.0, lag1: 0.9, correlation_km: 800.0, ..ProcessSpec::constant(101_300.0) },
    );
    variables.insert(VariableId::U10, ProcessSpec { noise_std: 1.0, lag1: 0.7, ..ProcessSpec::constant(2.0) });
    variables.insert(VariableId::V10, ProcessSpec { noise_std: 1.0, lag1: 0.7, ..ProcessSpec::constant(-1.0) });
    let mut regions = BTreeMap::new();
    regions.insert("north".to_string(), RegionBox { lat_min: 40.0, lat_max: 60.0, lon_min: 100.0, lon_max: 160.0 });
    SyntheticScenario {
        seed: 2024,
        grid: GridSpec::Regular { lat_start: 60.0, lat_step: -2.5, n_lat: 17, lon_start: 100.0, lon_step: 2.5, n_lon: 25 },
        start,
        days: 12,
        history_years: 2,
        max_lead_hours: 72,
        init_every_hours: 24,
        variables,
        vortices: vec![VortexSpec {
            storm_id: "WP01".into(),
            start,
            duration_hours: 15 * 24,
            lat: 30.0,
            lon: 135.0,
            depth_pa: 3000.0,
            efold_km: 400.0,
            u_ms: -4.0,
            v_ms: 1.5,
            max_wind_ms: 30.0,
            rmw_km: 150.0,
        }],
        episodes: vec![EpisodeSpec {
            lat: 45.0,
            lon: 120.0,
            start: NaiveDate::from_ymd_opt(2024, 8, 4).unwrap(),
            days: 4,
            amplitude: 12.0,
            radius_km: 0.0,
        }],
        forecasters: vec![
            ForecasterSpec::Persistence { name: "persistence".into() },
            ForecasterSpec::Smoothed { name: "smoothed".into(), kernel_width: 3 },
            ForecasterSpec::Perfect { name: "perfect".into() },
        ],
        stations: Some(StationSpec {
            nodes: vec![(2, 3), (5, 10), (8, 8), (12, 20), (16, 24)],
            outliers: vec![OutlierSpec {
                station: 1,
                time: start + chrono::Duration::hours(30),
                variable: VariableId::WS10,
                factor: 10.0,
            }],
        }),
        regions,
    }
}

/// Noise-free T2M only, so the planted episodes are the only events.
pub fn quiet_t2m(days: u32, episodes: Vec<EpisodeSpec>, forecasters: Vec<ForecasterSpec>) -> SyntheticScenario {
    let mut variables = BTreeMap::new();
    variables.insert(
        VariableId::T2M,
        ProcessSpec { seasonal_amplitude: 8.0, ..ProcessSpec::constant(290.0) },
    );
    SyntheticScenario {
        seed: 1,
        grid: GridSpec::Regular { lat_start: 50.0, lat_step: -5.0, n_lat: 3, lon_start: 0.0, lon_step: 5.0, n_lon: 4 },
        start: Utc.with_ymd_and_hms(2023, 5, 1, 0, 0, 0).unwrap(),
        days,
        history_years: 3,
        max_lead_hours: 240,
        init_every_hours: 24,
        variables,
        vortices: vec![],
        episodes,
        forecasters,
        stations: None,
        regions: BTreeMap::new(),
    }
}
