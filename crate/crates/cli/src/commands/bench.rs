use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};

use lbmkit::bench::{calibrate_bandwidth_table, llc_bytes, multistream_update, BenchConfig, MIN_MEASUREMENT_SECONDS};
use lbmkit::ecm::EcmMachine;
use lbmkit::propagation::StoreHint;

use super::{available_threads, parse_counts, parse_store, Ctx};
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchCmdConfig {
    pub streams: Vec<usize>,
    /// Empty: 1 up to the available cores.
    pub threads: Vec<usize>,
    pub store: StoreHint,
    pub repetitions: usize,
    pub min_seconds: f64,
    /// Total working set as a multiple of the last-level cache.
    pub working_set_factor: u64,
    /// Overrides the detected last-level cache size.
    pub llc_bytes: Option<u64>,
    /// Writes a machine config with the measured bandwidth here.
    pub calibrate: Option<PathBuf>,
    /// Clock the operator fixed for this run; detected and flagged when absent.
    pub freq_ghz: Option<f64>,
}

impl Default for BenchCmdConfig {
    fn default() -> Self {
        BenchCmdConfig {
            streams: vec![19, 1],
            threads: Vec::new(),
            store: StoreHint::Normal,
            repetitions: 3,
            min_seconds: MIN_MEASUREMENT_SECONDS,
            working_set_factor: 4,
            llc_bytes: None,
            calibrate: None,
            freq_ghz: None,
        }
    }
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Stream counts, comma list.
    #[arg(long)]
    pub streams: Option<String>,
    /// Thread counts, `1..4` or a comma list (the global --threads runs one count).
    #[arg(long)]
    pub threads_list: Option<String>,
    #[arg(long, value_parser = parse_store)]
    pub store: Option<StoreHint>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub working_set_factor: Option<u64>,
    /// Cache size in bytes used for working-set sizing instead of the detected one.
    #[arg(long)]
    pub llc_bytes: Option<u64>,
    /// Measure the saturated 19-stream bandwidth and write a machine config.
    #[arg(long)]
    pub calibrate: Option<PathBuf>,
    #[arg(long)]
    pub freq: Option<f64>,
}

#[derive(Serialize)]
struct MachineFile<'a> {
    machine: &'a EcmMachine,
}

pub fn exec(a: &BenchArgs, mut cfg: BenchCmdConfig, ctx: &Ctx, global_threads: Option<usize>) -> Result<(), CliError> {
    let inv = CliError::Invalid;
    if let Some(s) = &a.streams {
        cfg.streams = parse_counts(s, false).map_err(inv)?;
    }
    if let Some(t) = &a.threads_list {
        cfg.threads = parse_counts(t, false).map_err(CliError::Invalid)?;
    } else if let Some(t) = global_threads {
        cfg.threads = vec![t];
    }
    if cfg.threads.is_empty() {
        cfg.threads = (1..=available_threads()).collect();
    }
    cfg.store = a.store.unwrap_or(cfg.store);
    cfg.repetitions = a.reps.unwrap_or(cfg.repetitions);
    cfg.working_set_factor = a.working_set_factor.unwrap_or(cfg.working_set_factor);
    cfg.llc_bytes = a.llc_bytes.or(cfg.llc_bytes);
    cfg.calibrate = a.calibrate.clone().or(cfg.calibrate);
    cfg.freq_ghz = a.freq.or(cfg.freq_ghz);

    let llc = cfg.llc_bytes.unwrap_or_else(llc_bytes);
    let base = |streams: usize, threads: usize| BenchConfig {
        store: cfg.store,
        repetitions: cfg.repetitions,
        min_seconds: cfg.min_seconds,
        ..BenchConfig::sized_for(streams, llc, cfg.working_set_factor, threads)
    };

    if let Some(path) = &cfg.calibrate {
        let cal = calibrate_bandwidth_table(cfg.freq_ghz, &cfg.threads, &base(19, 1), llc)?;
        let machine = cal.machine(&EcmMachine::reference())?;
        let text =
            toml::to_string(&MachineFile { machine: &machine }).map_err(|e| CliError::Internal(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
        return ctx.emit(&cfg, &cal.runs);
    }

    let mut rows = Vec::new();
    for &t in &cfg.threads {
        for &s in &cfg.streams {
            rows.push(multistream_update(&base(s, t), llc)?);
        }
    }
    ctx.emit(&cfg, &rows)
}
