//! `wxverify`: scorecards from a run manifest.
//!
//! Exit status is 0 on success, 2 when the inputs need fixing and 3 when the
//! data cannot support the computation (for example too little history).

mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;
use wxverify_core::io::{self, LoadedManifest};
use wxverify_core::pipeline::{self, DiskSource, EvalOptions, Evaluation, PipelineError, Sections};
use wxverify_core::{SyntheticScenario, ThresholdConfig, VariableId};

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Pipeline(e) if !e.is_input_error() => 3,
            _ => 2,
        }
    }
}

impl From<io::IoError> for CliError {
    fn from(e: io::IoError) -> Self {
        CliError::Pipeline(e.into())
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "wxverify", version, about = "Forecast verification scorecards")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, env = "RB_WORKERS", global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Scorecard JSON to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Grid metrics and zonal spectra.
    Evaluate {
        #[command(flatten)]
        run: RunArgs,
        /// Lead hours, comma separated (default: the manifest's leads).
        #[arg(long, value_delimiter = ',')]
        leads: Option<Vec<u32>>,
        /// Spectrum lead hours.
        #[arg(long, value_delimiter = ',')]
        spectra_leads: Option<Vec<u32>>,
    },
    /// Heatwave and cold-surge detection scores.
    Extremes {
        #[command(flatten)]
        run: RunArgs,
        /// Lead days.
        #[arg(long, value_delimiter = ',')]
        leads: Option<Vec<u32>>,
        /// Temporal IoU needed for a hit.
        #[arg(long)]
        gamma: Option<f64>,
        /// Threshold store replacing the manifest's.
        #[arg(long)]
        thresholds: Option<PathBuf>,
    },
    /// Tropical-cyclone track and intensity errors.
    Cyclones {
        #[command(flatten)]
        run: RunArgs,
        /// Lead hours.
        #[arg(long, value_delimiter = ',')]
        leads: Option<Vec<u32>>,
        /// Best-track CSV replacing the manifest's.
        #[arg(long)]
        besttrack: Option<PathBuf>,
    },
    /// Station QC and station scores.
    Stations {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',')]
        leads: Option<Vec<u32>>,
    },
    /// Builds daily-mean and threshold stores from the manifest history.
    BuildClimatology {
        #[arg(long)]
        manifest: PathBuf,
        /// Directory for the stores and the rewritten manifest.
        #[arg(long)]
        out: PathBuf,
    },
    /// Writes a synthetic dataset from a scenario document.
    Synth {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Flattens a scorecard into CSV tables and prints a summary.
    Report {
        #[arg(long)]
        scorecard: PathBuf,
        /// Directory for the CSV tables.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    match cli.command {
        Command::Evaluate { run, leads, spectra_leads } => {
            let mut opts = EvalOptions { leads, ..EvalOptions::default() };
            if let Some(s) = spectra_leads {
                opts.spectra_leads = s;
            }
            let ev = evaluate_manifest(open(&run.manifest)?, &opts, Sections::EVALUATE)?;
            write_scorecard(&run.out, &ev)
        }
        Command::Extremes { run, leads, gamma, thresholds } => {
            let mut opts = EvalOptions::default();
            if let Some(l) = leads {
                opts.extreme_lead_days = l;
            }
            if let Some(g) = gamma {
                if !(g > 0.0 && g <= 1.0) {
                    return Err(CliError::Usage(format!("--gamma {g} outside (0, 1]")));
                }
                opts.gamma = g;
            }
            let mut loaded = LoadedManifest::parse(&run.manifest)?;
            if let Some(p) = thresholds {
                loaded.manifest.thresholds = Some(absolute(&p)?);
            }
            loaded.check_files()?;
            let ev = evaluate_manifest(loaded, &opts, Sections::EXTREMES)?;
            write_scorecard(&run.out, &ev)?;
            let path = sibling(&run.out, "events");
            write_csv(&path, &ev.events)
        }
        Command::Cyclones { run, leads, besttrack } => {
            let mut opts = EvalOptions::default();
            if let Some(l) = leads {
                opts.cyclone_leads = l;
            }
            let mut loaded = LoadedManifest::parse(&run.manifest)?;
            if let Some(p) = besttrack {
                loaded.manifest.best_track = Some(absolute(&p)?);
            }
            loaded.check_files()?;
            let ev = evaluate_manifest(loaded, &opts, Sections::CYCLONES)?;
            write_scorecard(&run.out, &ev)?;
            Ok(io::write_tracks_csv(&sibling(&run.out, "tracks"), &ev.tracks)?)
        }
        Command::Stations { run, leads } => {
            let opts = EvalOptions { leads, ..EvalOptions::default() };
            let ev = evaluate_manifest(open(&run.manifest)?, &opts, Sections::STATIONS)?;
            write_scorecard(&run.out, &ev)
        }
        Command::BuildClimatology { manifest, out } => build_climatology(&manifest, &out),
        Command::Synth { scenario, out, seed } => {
            let bytes = fs::read(&scenario).map_err(|source| CliError::Io { path: scenario.clone(), source })?;
            let mut s: SyntheticScenario =
                serde_json::from_slice(&bytes).map_err(|source| CliError::Json { path: scenario.clone(), source })?;
            if let Some(seed) = seed {
                s.seed = seed;
            }
            let path = pipeline::synthesize(&s, &out)?;
            println!("{}", path.display());
            Ok(())
        }
        Command::Report { scorecard, out } => report::run(&scorecard, out.as_deref()),
    }
}

fn open(manifest: &Path) -> Result<LoadedManifest> {
    Ok(LoadedManifest::load(manifest)?)
}

fn evaluate_manifest(loaded: LoadedManifest, opts: &EvalOptions, sections: Sections) -> Result<Evaluation> {
    let src = DiskSource::new(loaded);
    Ok(pipeline::evaluate(&src, opts, sections)?)
}

fn absolute(p: &Path) -> Result<String> {
    let abs = if p.is_absolute() {
        p.to_path_buf()
    } else {
        std::env::current_dir()
            .map_err(|source| CliError::Io { path: p.to_path_buf(), source })?
            .join(p)
    };
    Ok(abs.to_string_lossy().into_owned())
}

/// `out/card.json` with tag `events` becomes `out/card_events.csv`.
fn sibling(out: &Path, tag: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "scorecard".into());
    out.with_file_name(format!("{stem}_{tag}.csv"))
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })
        }
        _ => Ok(()),
    }
}

fn write_scorecard(path: &Path, ev: &Evaluation) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, ev.scorecard.to_json()).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn write_csv<T: serde::Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    ensure_parent(path)?;
    let csv_err = |source| CliError::Csv { path: path.to_path_buf(), source };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn build_climatology(manifest: &Path, out: &Path) -> Result<()> {
    use wxverify_core::harness::layout;

    // Existing stores are ignored so everything is rebuilt from history.
    let mut loaded = LoadedManifest::load(manifest)?;
    loaded.manifest.climatology = None;
    loaded.manifest.thresholds = None;
    let mut rebased = loaded.manifest.clone();
    let abs = |p: &str| loaded.resolve(p).to_string_lossy().into_owned();
    rebased.truth = abs(&rebased.truth);
    for pattern in rebased.models.values_mut() {
        *pattern = abs(pattern);
    }
    if let Some(h) = rebased.history.as_mut() {
        h.pattern = abs(&h.pattern);
    }
    rebased.best_track = rebased.best_track.as_deref().map(abs);
    if let Some(s) = rebased.stations.as_mut() {
        s.meta = abs(&s.meta);
        s.obs = abs(&s.obs);
    }

    let src = DiskSource::new(loaded);
    let grid = pipeline::run_grid(&src)?;
    let vars: Vec<VariableId> = rebased.variables.clone();
    let want_thresholds = vars.contains(&VariableId::T2M);
    let clim = pipeline::build_climatology(&src, &grid, &vars, want_thresholds, &ThresholdConfig::default())?;
    if clim.daily_mean.is_empty() && clim.thresholds.is_none() {
        return Err(CliError::Usage(format!("{}: no history to build from", manifest.display())));
    }

    rebased.climatology = if clim.daily_mean.len() == vars.len() {
        Some(layout::CLIMATOLOGY.to_string())
    } else {
        log::warn!("no history for some variables; daily-mean stores not listed");
        None
    };
    rebased.thresholds = clim.thresholds.as_ref().map(|_| layout::THRESHOLDS.to_string());
    fs::create_dir_all(out).map_err(|source| CliError::Io { path: out.to_path_buf(), source })?;
    pipeline::write_stores(&rebased, out, &grid, &clim)?;
    let path = out.join(layout::MANIFEST);
    io::write_manifest(&path, &rebased)?;
    println!("{}", path.display());
    Ok(())
}
