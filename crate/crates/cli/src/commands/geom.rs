use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};

use lbmkit::geometry::{
    build_sparse, gen_channel, gen_packed_bed, gen_plane_channel, save_geometry, GeometryStats, PackedBedParams,
    VoxelGeometry,
};

use super::Ctx;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeomKind {
    /// Square duct along x, walls on four sides.
    Channel,
    /// Walls in y only.
    Plane,
    /// Tube along x filled with random spheres.
    Packing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeomConfig {
    pub kind: GeomKind,
    pub dims: [usize; 3],
    /// Packing only; defaults to the largest tube fitting the cross-section.
    pub tube_radius: Option<f64>,
    pub sphere_radius: f64,
    pub solid_fraction: f64,
    pub simd_width: usize,
    /// PDF copies counted in `lattice_bytes`.
    pub n_lattices: u64,
    pub file: Option<PathBuf>,
}

impl Default for GeomConfig {
    fn default() -> Self {
        GeomConfig {
            kind: GeomKind::Channel,
            dims: [100, 20, 20],
            tube_radius: None,
            sphere_radius: 3.0,
            solid_fraction: 0.35,
            simd_width: 4,
            n_lattices: 1,
            file: None,
        }
    }
}

#[derive(Debug, Args)]
pub struct GeomArgs {
    #[arg(value_enum)]
    pub kind: Option<GeomKind>,
    #[arg(long, num_args = 3, value_names = ["NX", "NY", "NZ"])]
    pub dims: Option<Vec<usize>>,
    #[arg(long)]
    pub tube_radius: Option<f64>,
    #[arg(long)]
    pub sphere_radius: Option<f64>,
    #[arg(long)]
    pub solid_fraction: Option<f64>,
    #[arg(long)]
    pub simd_width: Option<usize>,
    /// Voxel file to write (a JSON sidecar is written next to it).
    #[arg(long)]
    pub file: Option<PathBuf>,
}

impl GeomArgs {
    fn apply(&self, mut c: GeomConfig) -> GeomConfig {
        if let Some(k) = self.kind {
            c.kind = k;
        }
        if let Some(d) = &self.dims {
            c.dims = [d[0], d[1], d[2]];
        }
        c.tube_radius = self.tube_radius.or(c.tube_radius);
        c.sphere_radius = self.sphere_radius.unwrap_or(c.sphere_radius);
        c.solid_fraction = self.solid_fraction.unwrap_or(c.solid_fraction);
        c.simd_width = self.simd_width.unwrap_or(c.simd_width);
        c.file = self.file.clone().or(c.file);
        c
    }
}

#[derive(Debug, Serialize)]
struct GeomRow {
    kind: GeomKind,
    nx: usize,
    ny: usize,
    nz: usize,
    n_fluid: usize,
    porosity: f64,
    lattice_bytes: u64,
    idx_bytes: u64,
    simd_width: usize,
    vectorizable_fraction: f64,
    bounce_links: usize,
    file: String,
}

pub fn generate(c: &GeomConfig, seed: u64) -> lbmkit::Result<VoxelGeometry> {
    let [nx, ny, nz] = c.dims;
    match c.kind {
        GeomKind::Channel => gen_channel(nx, ny, nz),
        GeomKind::Plane => gen_plane_channel(nx, ny, nz),
        GeomKind::Packing => gen_packed_bed(&PackedBedParams {
            dims: c.dims,
            tube_radius: c.tube_radius.unwrap_or((ny.min(nz) as f64 - 1.0) / 2.0),
            sphere_radius: c.sphere_radius,
            seed,
            target_solid_fraction: c.solid_fraction,
        }),
    }
}

pub fn exec(a: &GeomArgs, cfg: GeomConfig, ctx: &Ctx) -> Result<(), CliError> {
    let cfg = a.apply(cfg);
    lbmkit::propagation::SimdWidth::from_lanes(cfg.simd_width)?;
    let g = generate(&cfg, ctx.seed)?;
    let s = build_sparse(&g)?;
    let st = GeometryStats::compute(&g, &s, cfg.n_lattices, cfg.simd_width);
    if let Some(path) = &cfg.file {
        save_geometry(&g, path, ctx.meta(&cfg))?;
    }
    let row = GeomRow {
        kind: cfg.kind,
        nx: cfg.dims[0],
        ny: cfg.dims[1],
        nz: cfg.dims[2],
        n_fluid: st.n_fluid,
        porosity: st.porosity,
        lattice_bytes: st.lattice_bytes,
        idx_bytes: st.idx_bytes,
        simd_width: st.simd_width,
        vectorizable_fraction: st.vectorizable_fraction,
        bounce_links: s.bounce_back_count(),
        file: cfg.file.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
    };
    ctx.emit(&cfg, &[row])
}
