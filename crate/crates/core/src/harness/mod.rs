//! Experiment drivers: ensembles, sweeps, presets and data ingestion.

mod ensemble;
mod intraday;
mod presets;
mod split;
mod sweep;

pub use ensemble::{parallel_map, run_ensemble, sample_seed, summarize, EnsembleSummary, Estimate};
pub use intraday::{ingest_intraday, intervals_csv, IngestError, IntervalSummary, IntradayReport, MIN_VOLUME_MW};
pub use presets::{
    describe_presets, run_preset, Manifest, ManifestRun, PresetError, PresetOptions, PresetOutput, PRESETS,
    SYNTHETIC_LADDER_CSV,
};
pub use split::{split_by_weight, WeightSplit};
pub use sweep::{summary_fields, sweep, sweep_csv, SweepError, SweepRow, SweepSpec, SUMMARY_COLUMNS};
