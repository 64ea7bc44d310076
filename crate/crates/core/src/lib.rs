//! Forecast verification engine: latitude-weighted skill scores, zonal
//! spectra, percentile-threshold extremes, cyclone tracking, station QC and
//! a deterministic scorecard pipeline.

pub mod climatology;
pub mod cyclones;
pub mod extremes;
pub mod grid;
pub mod harness;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod score;
pub mod spectra;
pub mod stations;

pub use climatology::{DailyMeanClimatology, ThresholdConfig, ThresholdField};
pub use cyclones::{StormFix, StormTrack, TrackSource, TrackerConfig};
pub use extremes::{Contingency, EventKind, EventSegment, MatchResult};
pub use grid::{GeoGrid, GridError, GridField, VariableId, EARTH_RADIUS_KM};
pub use harness::{ForecasterSpec, SyntheticRun, SyntheticScenario};
pub use io::{IoError, LoadedManifest, RunManifest};
pub use metrics::Metric;
pub use pipeline::{DiskSource, EvalOptions, Evaluation, FieldSource, MemorySource, PipelineError, Scorecard, Sections};
pub use score::Score;
pub use stations::{QcFlag, QcThresholds, Station, StationTable};
