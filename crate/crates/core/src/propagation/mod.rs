//! Time stepping over a [`SparseLattice`].
//!
//! Two-lattice schemes (pull, pull-split) keep post-collision values and
//! stream-then-collide into the other lattice. The one-lattice AA pattern
//! alternates a node-local even step with a neighbor-access odd step and
//! stores post-stream values between step pairs. [`SimState::pre_collision`]
//! gives the same view for every scheme, so states are directly comparable.

mod kernels;
mod run;

pub use run::{run, step_aa, step_pull, RunReport};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::d3q19::{self, opposite, NodePdfs, TrtParams, Q, WEIGHTS};
use crate::error::{Error, Result};
use crate::geometry::{is_bounce, SparseLattice};

/// Store instruction flavor of the pull-split write-back.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StoreHint {
    #[default]
    Normal,
    /// Non-temporal stores: no write-allocate traffic.
    Streaming,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Scheme {
    PullTwoLattice,
    PullSplit { store: StoreHint },
    AaPattern,
}

impl Scheme {
    pub fn lattices(self) -> usize {
        match self {
            Scheme::AaPattern => 1,
            _ => 2,
        }
    }
}

/// Number of nodes updated together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimdWidth {
    Scalar,
    Sse,
    #[default]
    Avx,
}

impl SimdWidth {
    pub fn lanes(self) -> usize {
        match self {
            SimdWidth::Scalar => 1,
            SimdWidth::Sse => 2,
            SimdWidth::Avx => 4,
        }
    }

    pub fn from_lanes(lanes: usize) -> Result<Self> {
        match lanes {
            1 => Ok(SimdWidth::Scalar),
            2 => Ok(SimdWidth::Sse),
            4 => Ok(SimdWidth::Avx),
            _ => Err(Error::InvalidParameter(format!(
                "SIMD width must be 1, 2 or 4, got {lanes}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemeId {
    pub scheme: Scheme,
    pub simd_width: SimdWidth,
}

impl SchemeId {
    pub fn new(scheme: Scheme, simd_width: SimdWidth) -> Self {
        SchemeId { scheme, simd_width }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AaPhase {
    Even,
    Odd,
}

/// Memory traffic of one fluid lattice-node update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrafficSpec {
    pub bytes_per_flup: f64,
    pub pdf_load: f64,
    pub pdf_store: f64,
    pub write_allocate: f64,
    pub idx_load: f64,
}

const PDF_STREAM: f64 = (Q * 8) as f64;
const IDX_STREAM: f64 = (d3q19::Q_LINKS * 4) as f64;

/// Bytes moved between core and memory per FLUP.
///
/// The AA odd step needs adjacency data only for the non-vectorizable share
/// of nodes, so its traffic interpolates between 304 and 376 bytes.
pub fn traffic_per_flup(scheme: Scheme, phase: Option<AaPhase>, vector_fraction: f64) -> Result<TrafficSpec> {
    if !(0.0..=1.0).contains(&vector_fraction) {
        return Err(Error::InvalidParameter(format!(
            "vector fraction {vector_fraction} outside [0, 1]"
        )));
    }
    let (write_allocate, idx_load) = match (scheme, phase) {
        (Scheme::PullTwoLattice, None)
        | (
            Scheme::PullSplit {
                store: StoreHint::Normal,
            },
            None,
        ) => (PDF_STREAM, IDX_STREAM),
        (
            Scheme::PullSplit {
                store: StoreHint::Streaming,
            },
            None,
        ) => (0.0, IDX_STREAM),
        (Scheme::AaPattern, Some(AaPhase::Even)) => (0.0, 0.0),
        (Scheme::AaPattern, Some(AaPhase::Odd)) => (0.0, (1.0 - vector_fraction) * IDX_STREAM),
        (s, p) => {
            return Err(Error::InvalidParameter(format!(
                "phase {p:?} is not valid for scheme {s:?}"
            )))
        }
    };
    let (pdf_load, pdf_store) = (PDF_STREAM, PDF_STREAM);
    Ok(TrafficSpec {
        bytes_per_flup: pdf_load + pdf_store + write_allocate + idx_load,
        pdf_load,
        pdf_store,
        write_allocate,
        idx_load,
    })
}

/// Average traffic of a full step (AA: even and odd weighted 1:1).
pub fn mean_traffic(scheme: Scheme, vector_fraction: f64) -> Result<f64> {
    Ok(match scheme {
        Scheme::AaPattern => {
            0.5 * (traffic_per_flup(scheme, Some(AaPhase::Even), vector_fraction)?.bytes_per_flup
                + traffic_per_flup(scheme, Some(AaPhase::Odd), vector_fraction)?.bytes_per_flup)
        }
        _ => traffic_per_flup(scheme, None, vector_fraction)?.bytes_per_flup,
    })
}

/// Solver state: SoA PDF storage, one array of `n` values per direction.
#[derive(Debug, Clone)]
pub struct SimState {
    n: usize,
    pub(crate) a: Vec<f64>,
    pub(crate) b: Option<Vec<f64>>,
    pub(crate) phase: AaPhase,
    pub(crate) time_step: u64,
    pub trt: TrtParams,
}

/// Source slot of the post-stream value `(d, i)`: the upstream neighbor's
/// `d` entry, or the node's own reflected entry at a wall.
#[inline]
fn stream_source(lat: &SparseLattice, d: usize, i: usize) -> (usize, usize) {
    if d == 0 {
        return (0, i);
    }
    let raw = lat.raw_links(opposite(d))[i];
    if is_bounce(raw) {
        (opposite(d), i)
    } else {
        (d, raw as usize)
    }
}

impl SimState {
    /// Builds a state whose post-stream (pre-collision) PDFs equal `pre`,
    /// laid out direction-major (`pre[d * n + i]`).
    pub fn from_pre_collision(lat: &SparseLattice, scheme: Scheme, pre: Vec<f64>, trt: TrtParams) -> Result<Self> {
        trt.validate()?;
        let n = lat.n_fluid();
        if pre.len() != Q * n {
            return Err(Error::SizeMismatch {
                state: pre.len() / Q,
                lattice: n,
            });
        }
        let (a, b) = match scheme {
            Scheme::AaPattern => (pre, None),
            _ => {
                let mut post = vec![0.0; Q * n];
                for d in 0..Q {
                    for i in 0..n {
                        let (sd, si) = stream_source(lat, d, i);
                        post[sd * n + si] = pre[d * n + i];
                    }
                }
                (post, Some(vec![0.0; Q * n]))
            }
        };
        Ok(SimState {
            n,
            a,
            b,
            phase: AaPhase::Even,
            time_step: 0,
            trt,
        })
    }

    /// Uniform equilibrium everywhere.
    pub fn uniform(lat: &SparseLattice, scheme: Scheme, rho: f64, u: [f64; 3], trt: TrtParams) -> Result<Self> {
        let n = lat.n_fluid();
        let eq = d3q19::equilibrium(rho, u)?;
        let mut pre = vec![0.0; Q * n];
        for d in 0..Q {
            pre[d * n..(d + 1) * n].fill(eq.0[d]);
        }
        Self::from_pre_collision(lat, scheme, pre, trt)
    }

    /// Rest equilibrium with seeded relative perturbations of size `amplitude`.
    pub fn perturbed(lat: &SparseLattice, scheme: Scheme, seed: u64, amplitude: f64, trt: TrtParams) -> Result<Self> {
        Self::from_pre_collision(lat, scheme, perturbed_pdfs(lat.n_fluid(), seed, amplitude), trt)
    }

    pub fn n_fluid(&self) -> usize {
        self.n
    }

    pub fn time_step(&self) -> u64 {
        self.time_step
    }

    pub fn phase(&self) -> AaPhase {
        self.phase
    }

    pub fn is_one_lattice(&self) -> bool {
        self.b.is_none()
    }

    pub(crate) fn check_lattice(&self, lat: &SparseLattice) -> Result<()> {
        if lat.n_fluid() != self.n {
            return Err(Error::SizeMismatch {
                state: self.n,
                lattice: lat.n_fluid(),
            });
        }
        Ok(())
    }

    /// Sum over all stored PDFs.
    pub fn total_mass(&self) -> f64 {
        self.a.iter().sum()
    }

    /// Post-stream PDFs, direction-major. `None` for an AA state between
    /// the even and the odd step, where values sit in swapped slots.
    pub fn pre_collision(&self, lat: &SparseLattice) -> Option<Vec<f64>> {
        if self.check_lattice(lat).is_err() {
            return None;
        }
        match self.b {
            None => (self.phase == AaPhase::Even).then(|| self.a.clone()),
            Some(_) => {
                let n = self.n;
                let mut pre = vec![0.0; Q * n];
                for d in 0..Q {
                    for i in 0..n {
                        let (sd, si) = stream_source(lat, d, i);
                        pre[d * n + i] = self.a[sd * n + si];
                    }
                }
                Some(pre)
            }
        }
    }

    /// Density and velocity per node from the post-stream PDFs. Velocities
    /// include half of the body-force impulse.
    pub fn macroscopic(&self, lat: &SparseLattice) -> Option<Vec<(f64, [f64; 3])>> {
        let pre = self.pre_collision(lat)?;
        let n = self.n;
        let g = self.trt.body_force;
        Some(
            (0..n)
                .map(|i| {
                    let mut f = NodePdfs::zeros();
                    for d in 0..Q {
                        f.0[d] = pre[d * n + i];
                    }
                    let (rho, j) = d3q19::moments(&f);
                    let u = [
                        j[0] / rho + 0.5 * g[0],
                        j[1] / rho + 0.5 * g[1],
                        j[2] / rho + 0.5 * g[2],
                    ];
                    (rho, u)
                })
                .collect(),
        )
    }

    /// Order-fixed sum and L2 norm of the post-stream PDFs.
    pub fn checksum(&self, lat: &SparseLattice) -> Option<Checksum> {
        let pre = self.pre_collision(lat)?;
        Some(Checksum {
            sum: pre.iter().sum(),
            l2: pre.iter().map(|v| v * v).sum::<f64>().sqrt(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Checksum {
    pub sum: f64,
    pub l2: f64,
}

/// Rest-equilibrium PDFs with seeded relative noise, direction-major.
pub fn perturbed_pdfs(n: usize, seed: u64, amplitude: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pre = vec![0.0; Q * n];
    for d in 0..Q {
        for v in &mut pre[d * n..(d + 1) * n] {
            *v = WEIGHTS[d] * (1.0 + amplitude * (2.0 * rng.gen::<f64>() - 1.0));
        }
    }
    pre
}
