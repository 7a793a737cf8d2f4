use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};

use lbmkit::ecm::{ecm_table, EcmConfig, EcmKernelSpec, EcmMachine, EcmWorkload, OverlapPolicy};
use lbmkit::power::{argmin_cores, energy_to_solution, f_opt, sweep, ChipPerfModel, PowerParams, SweepConfig};
use lbmkit::propagation::{AaPhase, SimdWidth};
use lbmkit::scaling::{predict_parallel, ClusterSpec, CommModel, ScalingOptions, Workload};

use super::{parse_counts, Ctx};
use crate::CliError;

const MODEL_FREQS: [f64; 4] = [1.2, 1.7, 2.3, 2.7];

fn parse_policies(v: &[String]) -> Result<Vec<OverlapPolicy>, CliError> {
    let mut out = Vec::new();
    for s in v {
        if s == "all" {
            out.extend(OverlapPolicy::ALL);
        } else {
            out.push(OverlapPolicy::parse(s)?);
        }
    }
    Ok(out)
}

fn even_avx() -> EcmWorkload {
    EcmWorkload::Single(EcmKernelSpec::aa(AaPhase::Even, SimdWidth::Avx, 1.0).expect("preset"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum P0Scaling {
    /// Serial performance from the ECM model at each tabulated clock.
    #[default]
    Ecm,
    /// Base-clock value scaled linearly with the clock.
    Linear,
}

fn chip_model(
    kernel: &EcmWorkload,
    m: &EcmMachine,
    policy: OverlapPolicy,
    p0: P0Scaling,
) -> lbmkit::Result<ChipPerfModel> {
    match p0 {
        P0Scaling::Ecm => ChipPerfModel::from_ecm(kernel, m, policy),
        P0Scaling::Linear => ChipPerfModel::from_ecm_linear(kernel, m, policy),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EcmCmdConfig {
    pub machine: EcmMachine,
    pub workloads: Vec<EcmWorkload>,
    /// Empty: the machine's tabulated clocks.
    pub freqs: Vec<f64>,
    pub policies: Vec<OverlapPolicy>,
    pub cores: usize,
}

impl Default for EcmCmdConfig {
    fn default() -> Self {
        let base = EcmConfig::default();
        EcmCmdConfig {
            cores: base.machine.cores_per_chip,
            machine: base.machine,
            workloads: base.workloads,
            freqs: Vec::new(),
            policies: OverlapPolicy::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Args)]
pub struct EcmArgs {
    #[arg(long, value_delimiter = ',')]
    pub freq: Option<Vec<f64>>,
    /// none, partial-l1, full or all.
    #[arg(long, value_delimiter = ',')]
    pub policy: Option<Vec<String>>,
    #[arg(long)]
    pub cores: Option<usize>,
    /// Keep only these workloads.
    #[arg(long, value_delimiter = ',')]
    pub kernel: Option<Vec<String>>,
}

pub fn ecm(a: &EcmArgs, mut cfg: EcmCmdConfig, ctx: &Ctx) -> Result<(), CliError> {
    if let Some(f) = &a.freq {
        cfg.freqs = f.clone();
    }
    if let Some(p) = &a.policy {
        cfg.policies = parse_policies(p)?;
    }
    cfg.cores = a.cores.unwrap_or(cfg.cores);
    if let Some(names) = &a.kernel {
        cfg.workloads.retain(|w| names.iter().any(|n| n == w.name()));
        if cfg.workloads.is_empty() {
            return Err(CliError::Invalid(format!("no workload named {names:?}")));
        }
    }
    if cfg.freqs.is_empty() {
        cfg.freqs = cfg.machine.frequencies();
    }
    let model = EcmConfig {
        machine: cfg.machine.clone(),
        workloads: cfg.workloads.clone(),
    };
    let rows = ecm_table(&model, &cfg.freqs, &cfg.policies, cfg.cores)?;
    ctx.emit(&cfg, &rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PowerCmdConfig {
    pub machine: EcmMachine,
    pub kernel: EcmWorkload,
    pub policy: OverlapPolicy,
    pub p0_scaling: P0Scaling,
    /// Full grid with markers instead of the per-clock summary.
    pub sweep: bool,
    pub freqs: Vec<f64>,
    pub t_min: usize,
    pub t_max: usize,
    pub work_flups: f64,
    pub params: Vec<PowerParams>,
    pub turbo: Option<lbmkit::table::Table1d>,
}

impl Default for PowerCmdConfig {
    fn default() -> Self {
        let machine = EcmMachine::reference();
        PowerCmdConfig {
            t_max: machine.cores_per_chip,
            machine,
            kernel: even_avx(),
            policy: OverlapPolicy::NoOverlap,
            p0_scaling: P0Scaling::Ecm,
            sweep: false,
            freqs: (12..=27).map(|k| k as f64 / 10.0).collect(),
            t_min: 1,
            work_flups: 1e10,
            params: vec![PowerParams::chip(), PowerParams::system_per_socket()],
            turbo: None,
        }
    }
}

#[derive(Debug, Args)]
pub struct PowerArgs {
    #[arg(long)]
    pub sweep: bool,
    #[arg(long, value_delimiter = ',')]
    pub freq: Option<Vec<f64>>,
    /// Fixed amount of work in FLUPs.
    #[arg(long)]
    pub work: Option<f64>,
    #[arg(long)]
    pub t_max: Option<usize>,
    #[arg(long, value_enum)]
    pub p0: Option<P0Scaling>,
}

#[derive(Debug, Serialize)]
struct PowerSummaryRow {
    set: usize,
    w0: f64,
    f_ghz: f64,
    t_sat: usize,
    argmin_t: usize,
    energy_at_sat_j: f64,
    energy_min_j: f64,
    /// Energy-optimal clock for `t_sat` cores below saturation.
    f_opt_ghz: f64,
}

pub fn power(a: &PowerArgs, mut cfg: PowerCmdConfig, ctx: &Ctx) -> Result<(), CliError> {
    cfg.sweep |= a.sweep;
    if let Some(f) = &a.freq {
        cfg.freqs = f.clone();
    }
    cfg.work_flups = a.work.unwrap_or(cfg.work_flups);
    cfg.t_max = a.t_max.unwrap_or(cfg.t_max);
    cfg.p0_scaling = a.p0.unwrap_or(cfg.p0_scaling);
    if cfg.work_flups.is_nan() || cfg.work_flups <= 0.0 {
        return Err(CliError::Invalid("work must be positive".into()));
    }
    let m = chip_model(&cfg.kernel, &cfg.machine, cfg.policy, cfg.p0_scaling)?;
    if cfg.sweep {
        let sc = SweepConfig {
            freqs: cfg.freqs.clone(),
            t_min: cfg.t_min,
            t_max: cfg.t_max,
            work_flups: cfg.work_flups,
            params: cfg.params.clone(),
            turbo: cfg.turbo.clone(),
        };
        let rows = sweep(&sc, &m)?;
        return ctx.emit(&cfg, &rows);
    }
    let mut rows = Vec::new();
    for (set, p) in cfg.params.iter().enumerate() {
        p.validate()?;
        for &f in &cfg.freqs {
            let ts = m.saturation_cores(f).min(m.cores);
            let best = argmin_cores(f, &m, p, cfg.work_flups)?;
            rows.push(PowerSummaryRow {
                set,
                w0: p.w0,
                f_ghz: f,
                t_sat: ts,
                argmin_t: best,
                energy_at_sat_j: energy_to_solution(f, ts, &m, p, cfg.work_flups)?,
                energy_min_j: energy_to_solution(f, best, &m, p, cfg.work_flups)?,
                f_opt_ghz: f_opt(ts as f64, p, None),
            });
        }
    }
    ctx.emit(&cfg, &rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScaleCmdConfig {
    pub cluster: ClusterSpec,
    pub kernel: EcmWorkload,
    pub policy: OverlapPolicy,
    pub p0_scaling: P0Scaling,
    /// CSV of measured effective bandwidths; the built-in fixture when absent.
    pub comm_table: Option<PathBuf>,
    pub workload: Workload,
    pub nodes: Vec<usize>,
    pub ppc: Vec<usize>,
    pub freqs: Vec<f64>,
    pub options: ScalingOptions,
}

impl Default for ScaleCmdConfig {
    fn default() -> Self {
        ScaleCmdConfig {
            cluster: ClusterSpec::default(),
            kernel: even_avx(),
            policy: OverlapPolicy::NoOverlap,
            p0_scaling: P0Scaling::Ecm,
            comm_table: None,
            workload: Workload::large_packed_bed(1000),
            nodes: vec![4, 8, 16, 32, 64, 128],
            ppc: (1..=8).collect(),
            freqs: MODEL_FREQS.to_vec(),
            options: ScalingOptions::default(),
        }
    }
}

#[derive(Debug, Args)]
pub struct ScaleArgs {
    /// `4..128` (doubling) or a comma list.
    #[arg(long)]
    pub nodes: Option<String>,
    /// `1..8` or a comma list.
    #[arg(long)]
    pub ppc: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub freq: Option<Vec<f64>>,
    #[arg(long)]
    pub comm_table: Option<PathBuf>,
    /// Node count that efficiency is normalized to.
    #[arg(long)]
    pub baseline: Option<usize>,
    #[arg(long)]
    pub node_baseline_watts: Option<f64>,
}

pub fn scale(a: &ScaleArgs, mut cfg: ScaleCmdConfig, ctx: &Ctx) -> Result<(), CliError> {
    if let Some(n) = &a.nodes {
        cfg.nodes = parse_counts(n, true).map_err(CliError::Invalid)?;
    }
    if let Some(p) = &a.ppc {
        cfg.ppc = parse_counts(p, false).map_err(CliError::Invalid)?;
    }
    if let Some(f) = &a.freq {
        cfg.freqs = f.clone();
    }
    cfg.comm_table = a.comm_table.clone().or(cfg.comm_table);
    cfg.options.baseline_nodes = a.baseline.unwrap_or(cfg.options.baseline_nodes);
    cfg.cluster.node_baseline_watts = a.node_baseline_watts.unwrap_or(cfg.cluster.node_baseline_watts);

    let cm = match &cfg.comm_table {
        Some(p) => {
            let f = std::fs::File::open(p).map_err(|e| CliError::Invalid(format!("{}: {e}", p.display())))?;
            CommModel::read_csv(f)?
        }
        None => CommModel::fixture(),
    };
    let chip = chip_model(&cfg.kernel, &cfg.cluster.machine, cfg.policy, cfg.p0_scaling)?;
    let mut rows = Vec::new();
    for &f in &cfg.freqs {
        for &ppc in &cfg.ppc {
            for &n in &cfg.nodes {
                rows.push(predict_parallel(
                    &cfg.workload,
                    n,
                    ppc,
                    f,
                    &cfg.cluster,
                    &cm,
                    &chip,
                    &cfg.options,
                )?);
            }
        }
    }
    ctx.emit(&cfg, &rows)
}
