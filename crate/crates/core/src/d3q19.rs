//! D3Q19 velocity set and the two-relaxation-time (TRT) collision operator.
//!
//! Directions are numbered so that every non-rest direction `d` has its
//! opposite at `d + 1` (odd `d`) or `d - 1` (even `d`). The pull-split
//! kernel writes directions in those `(d, d + 1)` pairs.

use crate::error::{Error, Result};

/// Number of discrete velocities.
pub const Q: usize = 19;

/// Number of non-rest directions, i.e. adjacency entries per node.
pub const Q_LINKS: usize = 18;

/// Discrete velocities `e_d`.
pub const VELOCITIES: [[i32; 3]; Q] = [
    [0, 0, 0],
    [1, 0, 0],
    [-1, 0, 0],
    [0, 1, 0],
    [0, -1, 0],
    [0, 0, 1],
    [0, 0, -1],
    [1, 1, 0],
    [-1, -1, 0],
    [1, -1, 0],
    [-1, 1, 0],
    [1, 0, 1],
    [-1, 0, -1],
    [1, 0, -1],
    [-1, 0, 1],
    [0, 1, 1],
    [0, -1, -1],
    [0, 1, -1],
    [0, -1, 1],
];

/// Lattice weights in units of 1/36 (12 rest, 2 axis, 1 diagonal).
pub const WEIGHTS_36THS: [u32; Q] = [12, 2, 2, 2, 2, 2, 2, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1];

const W_REST: f64 = 1.0 / 3.0;
const W_AXIS: f64 = 1.0 / 18.0;
const W_DIAG: f64 = 1.0 / 36.0;

/// Lattice weights `w_d`.
pub const WEIGHTS: [f64; Q] = [
    W_REST, W_AXIS, W_AXIS, W_AXIS, W_AXIS, W_AXIS, W_AXIS, W_DIAG, W_DIAG, W_DIAG, W_DIAG, W_DIAG, W_DIAG, W_DIAG,
    W_DIAG, W_DIAG, W_DIAG, W_DIAG, W_DIAG,
];

/// Opposite direction table.
pub const OPPOSITE: [usize; Q] = [0, 2, 1, 4, 3, 6, 5, 8, 7, 10, 9, 12, 11, 14, 13, 16, 15, 18, 17];

/// One of the 19 lattice directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Direction(u8);

impl Direction {
    pub const REST: Direction = Direction(0);

    pub fn new(index: usize) -> Option<Self> {
        (index < Q).then_some(Direction(index as u8))
    }

    pub fn all() -> impl Iterator<Item = Direction> {
        (0..Q as u8).map(Direction)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn velocity(self) -> [i32; 3] {
        VELOCITIES[self.index()]
    }

    pub fn weight(self) -> f64 {
        WEIGHTS[self.index()]
    }

    pub fn opposite(self) -> Direction {
        Direction(OPPOSITE[self.index()] as u8)
    }

    pub fn is_rest(self) -> bool {
        self.0 == 0
    }
}

/// Opposite of direction index `d`.
#[inline(always)]
pub fn opposite(d: usize) -> usize {
    OPPOSITE[d]
}

/// The 19 distribution values of one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodePdfs(pub [f64; Q]);

impl NodePdfs {
    pub fn zeros() -> Self {
        NodePdfs([0.0; Q])
    }

    pub fn density(&self) -> f64 {
        self.0.iter().sum()
    }
}

/// TRT relaxation parameters and a constant body force.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrtParams {
    pub tau_plus: f64,
    pub magic_lambda: f64,
    pub body_force: [f64; 3],
}

/// Magic parameter that places bounce-back walls exactly halfway for Poiseuille flow.
pub const LAMBDA_POISEUILLE: f64 = 3.0 / 16.0;

impl TrtParams {
    pub fn new(tau_plus: f64, magic_lambda: f64, body_force: [f64; 3]) -> Result<Self> {
        let p = TrtParams {
            tau_plus,
            magic_lambda,
            body_force,
        };
        p.validate()?;
        Ok(p)
    }

    /// BGK-equivalent parameters: both rates equal `tau`.
    pub fn bgk(tau: f64) -> Result<Self> {
        Self::new(tau, (tau - 0.5) * (tau - 0.5), [0.0; 3])
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau_plus > 0.5) || !self.tau_plus.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "tau_plus must exceed 0.5, got {}",
                self.tau_plus
            )));
        }
        if !(self.magic_lambda > 0.0) || !self.magic_lambda.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "magic lambda must be positive, got {}",
                self.magic_lambda
            )));
        }
        if self.body_force.iter().any(|g| !g.is_finite()) {
            return Err(Error::InvalidParameter("body force must be finite".into()));
        }
        Ok(())
    }

    pub fn tau_minus(&self) -> f64 {
        self.magic_lambda / (self.tau_plus - 0.5) + 0.5
    }

    /// Kinematic viscosity in lattice units.
    pub fn viscosity(&self) -> f64 {
        (self.tau_plus - 0.5) / 3.0
    }

    pub(crate) fn consts(&self) -> CollisionConsts {
        CollisionConsts {
            omega_plus: 1.0 / self.tau_plus,
            omega_minus: 1.0 / self.tau_minus(),
            force: self.body_force,
        }
    }
}

impl Default for TrtParams {
    fn default() -> Self {
        TrtParams {
            tau_plus: 0.8,
            magic_lambda: LAMBDA_POISEUILLE,
            body_force: [0.0; 3],
        }
    }
}

/// Precomputed rates used inside the kernels.
#[derive(Debug, Clone, Copy)]
pub(crate) struct CollisionConsts {
    pub omega_plus: f64,
    pub omega_minus: f64,
    pub force: [f64; 3],
}

/// Second-order equilibrium for density `rho` and velocity `u`.
pub fn equilibrium(rho: f64, u: [f64; 3]) -> Result<NodePdfs> {
    if !(rho > 0.0) {
        return Err(Error::NonPositiveDensity(rho));
    }
    let usq = u[0] * u[0] + u[1] * u[1] + u[2] * u[2];
    let mut f = [0.0; Q];
    for (d, out) in f.iter_mut().enumerate() {
        let e = VELOCITIES[d];
        let eu = e[0] as f64 * u[0] + e[1] as f64 * u[1] + e[2] as f64 * u[2];
        *out = WEIGHTS[d] * rho * (1.0 + 3.0 * eu + 4.5 * eu * eu - 1.5 * usq);
    }
    Ok(NodePdfs(f))
}

/// Density and momentum of a node.
pub fn moments(f: &NodePdfs) -> (f64, [f64; 3]) {
    let mut rho = 0.0;
    let mut j = [0.0; 3];
    for (d, &fd) in f.0.iter().enumerate() {
        rho += fd;
        let e = VELOCITIES[d];
        for a in 0..3 {
            j[a] += fd * e[a] as f64;
        }
    }
    (rho, j)
}

/// TRT collision of a single node, including the body force.
pub fn trt_collide(f: &NodePdfs, p: &TrtParams) -> Result<NodePdfs> {
    p.validate()?;
    let rho = f.density();
    if !(rho > 0.0) {
        return Err(Error::NonPositiveDensity(rho));
    }
    let mut lanes: [[f64; 1]; Q] = [[0.0]; Q];
    for d in 0..Q {
        lanes[d][0] = f.0[d];
    }
    collide_lanes(&mut lanes, &p.consts());
    let mut out = [0.0; Q];
    for d in 0..Q {
        out[d] = lanes[d][0];
    }
    Ok(NodePdfs(out))
}

/// Collides `W` independent nodes in place.
///
/// Every lane performs exactly the same sequence of floating-point
/// operations, so the result does not depend on `W`.
#[inline(always)]
pub(crate) fn collide_lanes<const W: usize>(f: &mut [[f64; W]; Q], c: &CollisionConsts) {
    let mut rho = [0.0; W];
    let mut ux = [0.0; W];
    let mut uy = [0.0; W];
    let mut uz = [0.0; W];
    let mut usq = [0.0; W];

    for k in 0..W {
        let mut r = 0.0;
        for fd in f.iter() {
            r += fd[k];
        }
        let jx = (f[1][k] - f[2][k])
            + (f[7][k] - f[8][k])
            + (f[9][k] - f[10][k])
            + (f[11][k] - f[12][k])
            + (f[13][k] - f[14][k]);
        let jy = (f[3][k] - f[4][k]) + (f[7][k] - f[8][k]) - (f[9][k] - f[10][k])
            + (f[15][k] - f[16][k])
            + (f[17][k] - f[18][k]);
        let jz = (f[5][k] - f[6][k]) + (f[11][k] - f[12][k]) - (f[13][k] - f[14][k]) + (f[15][k] - f[16][k])
            - (f[17][k] - f[18][k]);
        let inv = 1.0 / r;
        rho[k] = r;
        ux[k] = jx * inv;
        uy[k] = jy * inv;
        uz[k] = jz * inv;
        usq[k] = ux[k] * ux[k] + uy[k] * uy[k] + uz[k] * uz[k];
    }

    for k in 0..W {
        let feq0 = W_REST * rho[k] * (1.0 - 1.5 * usq[k]);
        f[0][k] -= c.omega_plus * (f[0][k] - feq0);
    }

    let mut d = 1;
    while d < Q {
        let e = VELOCITIES[d];
        let (ex, ey, ez) = (e[0] as f64, e[1] as f64, e[2] as f64);
        let w = WEIGHTS[d];
        let fe = 3.0 * w * (ex * c.force[0] + ey * c.force[1] + ez * c.force[2]);
        for k in 0..W {
            let eu = ex * ux[k] + ey * uy[k] + ez * uz[k];
            let wr = w * rho[k];
            let feq_even = wr * (1.0 + 4.5 * eu * eu - 1.5 * usq[k]);
            let feq_odd = wr * 3.0 * eu;
            let fi = f[d][k];
            let fo = f[d + 1][k];
            let even = c.omega_plus * (0.5 * (fi + fo) - feq_even);
            let odd = c.omega_minus * (0.5 * (fi - fo) - feq_odd);
            let force = fe * rho[k];
            f[d][k] = fi - even - odd + force;
            f[d + 1][k] = fo - even + odd - force;
        }
        d += 2;
    }
}
