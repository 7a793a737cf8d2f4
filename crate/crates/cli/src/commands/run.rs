use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};

use lbmkit::d3q19::{TrtParams, LAMBDA_POISEUILLE};
use lbmkit::geometry::{build_sparse, gen_channel, load_geometry, SparseLattice};
use lbmkit::propagation::{run, Scheme, SchemeId, SimState, SimdWidth, StoreHint};
use lbmkit::verify::{poiseuille, PoiseuilleConfig};

use super::{parse_simd, Ctx};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeName {
    Aa,
    Pull,
    PullSplit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Voxel file; a channel of `dims` is used when absent.
    pub geometry: Option<PathBuf>,
    pub dims: [usize; 3],
    pub scheme: SchemeName,
    /// Non-temporal write-back for `pull-split`.
    pub streaming_stores: bool,
    pub simd: SimdWidth,
    pub steps: u64,
    pub tau_plus: f64,
    pub magic_lambda: f64,
    pub body_force: [f64; 3],
    /// Relative perturbation of the initial equilibrium.
    pub amplitude: f64,
    pub checksum: bool,
    /// CSV of density and velocity per fluid node after the run.
    pub dump: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            geometry: None,
            dims: [64, 16, 16],
            scheme: SchemeName::Aa,
            streaming_stores: false,
            simd: SimdWidth::Avx,
            steps: 100,
            tau_plus: 0.8,
            magic_lambda: LAMBDA_POISEUILLE,
            body_force: [1e-6, 0.0, 0.0],
            amplitude: 0.01,
            checksum: false,
            dump: None,
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub geometry: Option<PathBuf>,
    #[arg(long, num_args = 3, value_names = ["NX", "NY", "NZ"])]
    pub dims: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeName>,
    /// Streaming stores for pull-split.
    #[arg(long)]
    pub nt: bool,
    #[arg(long, value_parser = parse_simd)]
    pub simd: Option<SimdWidth>,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub amplitude: Option<f64>,
    #[arg(long)]
    pub checksum: bool,
    #[arg(long)]
    pub dump: Option<PathBuf>,
}

impl RunArgs {
    fn apply(&self, mut c: RunConfig) -> RunConfig {
        c.geometry = self.geometry.clone().or(c.geometry);
        if let Some(d) = &self.dims {
            c.dims = [d[0], d[1], d[2]];
        }
        c.scheme = self.scheme.unwrap_or(c.scheme);
        c.streaming_stores |= self.nt;
        c.simd = self.simd.unwrap_or(c.simd);
        c.steps = self.steps.unwrap_or(c.steps);
        c.tau_plus = self.tau.unwrap_or(c.tau_plus);
        c.magic_lambda = self.lambda.unwrap_or(c.magic_lambda);
        c.amplitude = self.amplitude.unwrap_or(c.amplitude);
        c.checksum |= self.checksum;
        c.dump = self.dump.clone().or(c.dump);
        c
    }
}

impl RunConfig {
    fn scheme(&self) -> Scheme {
        match self.scheme {
            SchemeName::Aa => Scheme::AaPattern,
            SchemeName::Pull => Scheme::PullTwoLattice,
            SchemeName::PullSplit => Scheme::PullSplit {
                store: if self.streaming_stores {
                    StoreHint::Streaming
                } else {
                    StoreHint::Normal
                },
            },
        }
    }

    fn lattice(&self) -> lbmkit::Result<SparseLattice> {
        let g = match &self.geometry {
            Some(p) => load_geometry(p)?,
            None => gen_channel(self.dims[0], self.dims[1], self.dims[2])?,
        };
        build_sparse(&g)
    }
}

#[derive(Debug, Serialize)]
struct RunRow {
    scheme: SchemeName,
    streaming_stores: bool,
    simd: SimdWidth,
    threads: usize,
    steps: u64,
    n_fluid: usize,
    flups: u64,
    wall_time: f64,
    mflups: f64,
    bytes_per_flup: f64,
    bandwidth_gbs: f64,
    even_seconds: f64,
    odd_seconds: f64,
    checksum_sum: Option<f64>,
    checksum_l2: Option<f64>,
}

pub fn exec(a: &RunArgs, cfg: RunConfig, ctx: &Ctx) -> Result<(), CliError> {
    let cfg = a.apply(cfg);
    let lat = cfg.lattice()?;
    let scheme = cfg.scheme();
    let trt = TrtParams::new(cfg.tau_plus, cfg.magic_lambda, cfg.body_force)?;
    let mut st = SimState::perturbed(&lat, scheme, ctx.seed, cfg.amplitude, trt)?;
    let rep = run(&lat, &mut st, cfg.steps, SchemeId::new(scheme, cfg.simd), ctx.threads)?;
    let sum = cfg.checksum.then(|| st.checksum(&lat)).flatten();
    if let Some(path) = &cfg.dump {
        dump(&lat, &st, path)?;
    }
    let row = RunRow {
        scheme: cfg.scheme,
        streaming_stores: cfg.streaming_stores,
        simd: cfg.simd,
        threads: rep.threads,
        steps: rep.n_steps,
        n_fluid: rep.n_fluid,
        flups: rep.flups,
        wall_time: rep.wall_time,
        mflups: rep.mflups,
        bytes_per_flup: rep.bytes_per_flup,
        bandwidth_gbs: rep.bandwidth_gbs,
        even_seconds: rep.even_seconds,
        odd_seconds: rep.odd_seconds,
        checksum_sum: sum.map(|c| c.sum),
        checksum_l2: sum.map(|c| c.l2),
    };
    ctx.emit(&cfg, &[row])
}

fn dump(lat: &SparseLattice, st: &SimState, path: &std::path::Path) -> Result<(), CliError> {
    let fields = st
        .macroscopic(lat)
        .ok_or_else(|| CliError::Internal("state is mid AA step pair".into()))?;
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
    let io = |e: csv::Error| CliError::Internal(e.to_string());
    w.write_record(["x", "y", "z", "rho", "ux", "uy", "uz"]).map_err(io)?;
    for (c, (rho, u)) in lat.coords().iter().zip(fields) {
        w.serialize((c[0], c[1], c[2], rho, u[0], u[1], u[2])).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Internal(e.to_string()))
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Fluid layers between the walls.
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub tau_plus: Option<Vec<f64>>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub max_steps: Option<u64>,
    #[arg(long, value_parser = parse_simd)]
    pub simd: Option<SimdWidth>,
}

#[derive(Debug, Serialize)]
struct VerifyRow {
    tau_plus: f64,
    body_force: f64,
    steps: u64,
    converged: bool,
    l2_error: f64,
    u_center: f64,
    u_center_analytic: f64,
    tau_error_spread: f64,
    passed: bool,
}

pub fn verify(a: &VerifyArgs, mut cfg: PoiseuilleConfig, ctx: &Ctx) -> Result<(), CliError> {
    cfg.width = a.width.unwrap_or(cfg.width);
    cfg.tau_plus = a.tau_plus.clone().unwrap_or(cfg.tau_plus);
    cfg.magic_lambda = a.lambda.unwrap_or(cfg.magic_lambda);
    cfg.max_steps = a.max_steps.unwrap_or(cfg.max_steps);
    cfg.simd_width = a.simd.unwrap_or(cfg.simd_width);
    cfg.threads = ctx.threads;
    let rep = poiseuille(&cfg)?;
    let rows: Vec<VerifyRow> = rep
        .runs
        .iter()
        .map(|r| VerifyRow {
            tau_plus: r.tau_plus,
            body_force: r.body_force,
            steps: r.steps,
            converged: r.converged,
            l2_error: r.l2_error,
            u_center: r.u_center,
            u_center_analytic: r.u_center_analytic,
            tau_error_spread: rep.tau_error_spread,
            passed: rep.passed,
        })
        .collect();
    ctx.emit(&cfg, &rows)?;
    if rep.passed {
        Ok(())
    } else {
        let worst = rep.runs.iter().map(|r| r.l2_error).fold(0.0, f64::max);
        Err(CliError::Failed(format!(
            "Poiseuille profile error {worst:.4} (limit {}), spread {:.2e} (limit {})",
            cfg.tolerance, rep.tau_error_spread, cfg.tau_tolerance
        )))
    }
}
