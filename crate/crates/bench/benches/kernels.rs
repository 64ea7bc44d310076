use std::sync::Arc;

use chrono::{TimeZone, Utc};
use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wxverify_core::climatology::{build_thresholds, DailyHistory, DAYS_PER_YEAR};
use wxverify_core::extremes::{label_events, match_events};
use wxverify_core::grid::latitude_weights;
use wxverify_core::metrics::{acc, wrmse};
use wxverify_core::spectra::midlatitude_spectrum;
use wxverify_core::{EventKind, GeoGrid, GridField, ThresholdConfig, VariableId};

fn random_field(grid: &Arc<GeoGrid>, rng: &mut ChaCha8Rng, offset: f64) -> GridField {
    let t = Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap();
    let values = (0..grid.len()).map(|_| offset + rng.random_range(-5.0..5.0)).collect();
    GridField::new(grid.clone(), VariableId::T2M, t, 0, values).unwrap()
}

fn metrics(c: &mut Criterion) {
    let grid = Arc::new(GeoGrid::quarter_degree());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (p, t, clim) = (random_field(&grid, &mut rng, 281.0), random_field(&grid, &mut rng, 280.0), random_field(&grid, &mut rng, 279.0));
    let w = latitude_weights(&grid);
    let mut g = c.benchmark_group("metrics_721x1440");
    g.sample_size(20);
    g.bench_function("wrmse", |b| b.iter(|| wrmse(black_box(&p), black_box(&t), &w).unwrap()));
    g.bench_function("acc", |b| b.iter(|| acc(black_box(&p), black_box(&t), &clim, &w).unwrap()));
    g.finish();
}

fn spectra(c: &mut Criterion) {
    let mut g = c.benchmark_group("midlatitude_spectrum");
    g.sample_size(20);
    for (n_lat, n_lon) in [(181, 360), (721, 1440)] {
        let grid = Arc::new(GeoGrid::global(n_lat, n_lon).unwrap());
        let f = random_field(&grid, &mut ChaCha8Rng::seed_from_u64(2), 0.0);
        g.bench_with_input(BenchmarkId::from_parameter(format!("{n_lat}x{n_lon}")), &f, |b, f| {
            b.iter(|| midlatitude_spectrum(black_box(f)).unwrap())
        });
    }
    g.finish();
}

fn thresholds(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n_loc = 256;
    let mut hist = DailyHistory::new((2010..2022).collect(), n_loc);
    for y in 0..12 {
        for day in 1..=DAYS_PER_YEAR {
            for loc in 0..n_loc {
                let v = rng.random_range(270.0..310.0);
                hist.daily_max.set(y, day, loc, Some(v + 3.0));
                hist.daily_min.set(y, day, loc, Some(v - 3.0));
            }
        }
    }
    let mut g = c.benchmark_group("thresholds");
    g.sample_size(10);
    g.bench_function("12y_256loc", |b| b.iter(|| build_thresholds(black_box(&hist), &ThresholdConfig::default()).unwrap()));
    g.finish();
}

fn events(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 3650;
    let values: Vec<Option<f64>> = (0..n).map(|_| Some(rng.random_range(0.0..1.0))).collect();
    let shifted: Vec<Option<f64>> = values.iter().skip(1).chain(values.first()).copied().collect();
    let th = vec![0.4; n];
    c.bench_function("label_and_match_10y", |b| {
        b.iter(|| {
            let truth = label_events(0, 0, black_box(&values), &th, EventKind::Heatwave);
            let pred = label_events(0, 0, black_box(&shifted), &th, EventKind::Heatwave);
            match_events(&pred, &truth, 0.5)
        })
    });
}

criterion_group!(benches, metrics, spectra, thresholds, events);
criterion_main!(benches);
