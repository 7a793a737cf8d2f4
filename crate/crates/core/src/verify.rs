//! Force-driven plane Poiseuille flow against its analytic parabola.

use serde::{Deserialize, Serialize};

use crate::d3q19::{TrtParams, LAMBDA_POISEUILLE};
use crate::error::{Error, Result};
use crate::geometry::{build_sparse, gen_plane_channel};
use crate::propagation::{run, Scheme, SchemeId, SimState, SimdWidth};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoiseuilleConfig {
    /// Fluid layers between the two walls.
    pub width: usize,
    pub tau_plus: Vec<f64>,
    pub magic_lambda: f64,
    /// Target centerline velocity; sets the body force for each tau.
    pub u_max: f64,
    pub tolerance: f64,
    /// Largest accepted spread of the L2 error across `tau_plus` values.
    pub tau_tolerance: f64,
    pub max_steps: u64,
    pub check_every: u64,
    /// Converged once the largest profile change over `check_every` steps,
    /// relative to `u_max`, drops below this.
    pub convergence: f64,
    pub simd_width: SimdWidth,
    pub threads: usize,
}

impl Default for PoiseuilleConfig {
    fn default() -> Self {
        PoiseuilleConfig {
            width: 40,
            tau_plus: vec![0.8, 1.1],
            magic_lambda: LAMBDA_POISEUILLE,
            u_max: 0.01,
            tolerance: 0.02,
            tau_tolerance: 0.001,
            max_steps: 400_000,
            check_every: 1000,
            convergence: 1e-10,
            simd_width: SimdWidth::Avx,
            threads: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoiseuilleRun {
    pub tau_plus: f64,
    pub body_force: f64,
    pub steps: u64,
    pub converged: bool,
    pub l2_error: f64,
    pub u_center: f64,
    pub u_center_analytic: f64,
    /// Simulated and analytic x-velocity per fluid layer, wall to wall.
    pub profile: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoiseuilleReport {
    pub runs: Vec<PoiseuilleRun>,
    pub tau_error_spread: f64,
    pub passed: bool,
}

/// Analytic velocity at fluid layer `k` (1-based) for walls half a cell
/// outside the outermost fluid layers.
pub fn analytic_velocity(k: usize, width: usize, g: f64, nu: f64) -> f64 {
    let y = k as f64;
    g / (2.0 * nu) * (y - 0.5) * (width as f64 + 0.5 - y)
}

pub fn poiseuille(cfg: &PoiseuilleConfig) -> Result<PoiseuilleReport> {
    if cfg.width < 4 {
        return Err(Error::InvalidParameter(format!(
            "channel width {} too small for a profile check (need >= 4 layers)",
            cfg.width
        )));
    }
    if cfg.tau_plus.is_empty() || cfg.check_every == 0 || cfg.check_every % 2 == 1 {
        return Err(Error::InvalidParameter(
            "need at least one tau_plus and an even positive check_every".into(),
        ));
    }
    if !(cfg.u_max > 0.0) || !(cfg.tolerance > 0.0) {
        return Err(Error::InvalidParameter("u_max and tolerance must be positive".into()));
    }
    let runs = cfg
        .tau_plus
        .iter()
        .map(|&tau| run_one(cfg, tau))
        .collect::<Result<Vec<_>>>()?;
    let lo = runs.iter().map(|r| r.l2_error).fold(f64::INFINITY, f64::min);
    let hi = runs.iter().map(|r| r.l2_error).fold(0.0, f64::max);
    let tau_error_spread = hi - lo;
    let passed =
        runs.iter().all(|r| r.converged && r.l2_error <= cfg.tolerance) && tau_error_spread <= cfg.tau_tolerance;
    Ok(PoiseuilleReport {
        runs,
        tau_error_spread,
        passed,
    })
}

fn run_one(cfg: &PoiseuilleConfig, tau: f64) -> Result<PoiseuilleRun> {
    let h = cfg.width;
    let lat = build_sparse(&gen_plane_channel(1, h + 2, 1)?)?;
    let probe = TrtParams::new(tau, cfg.magic_lambda, [0.0; 3])?;
    let nu = probe.viscosity();
    let center = (h as f64 + 1.0) / 2.0;
    let g = cfg.u_max * 2.0 * nu / ((center - 0.5) * (h as f64 + 0.5 - center));
    let trt = TrtParams::new(tau, cfg.magic_lambda, [g, 0.0, 0.0])?;

    let id = SchemeId::new(Scheme::AaPattern, cfg.simd_width);
    let mut state = SimState::uniform(&lat, Scheme::AaPattern, 1.0, [0.0; 3], trt)?;
    let layers: Vec<usize> = lat.coords().iter().map(|c| c[1] as usize).collect();
    let profile_of = |s: &SimState| -> Vec<f64> {
        let mac = s.macroscopic(&lat).expect("even phase");
        let mut u = vec![0.0; h];
        for (m, &k) in mac.iter().zip(&layers) {
            u[k - 1] = m.1[0];
        }
        u
    };

    let mut prev = profile_of(&state);
    let mut steps = 0;
    let mut converged = false;
    while steps < cfg.max_steps {
        run(&lat, &mut state, cfg.check_every, id, cfg.threads)?;
        steps += cfg.check_every;
        let cur = profile_of(&state);
        let change = cur.iter().zip(&prev).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prev = cur;
        if change / cfg.u_max < cfg.convergence {
            converged = true;
            break;
        }
    }

    let profile: Vec<(f64, f64)> = (1..=h).map(|k| (prev[k - 1], analytic_velocity(k, h, g, nu))).collect();
    let num: f64 = profile.iter().map(|(u, a)| (u - a).powi(2)).sum();
    let den: f64 = profile.iter().map(|(_, a)| a * a).sum();
    let mid = h / 2;
    Ok(PoiseuilleRun {
        tau_plus: tau,
        body_force: g,
        steps,
        converged,
        l2_error: (num / den).sqrt(),
        u_center: prev[mid],
        u_center_analytic: analytic_velocity(mid + 1, h, g, nu),
        profile,
    })
}
