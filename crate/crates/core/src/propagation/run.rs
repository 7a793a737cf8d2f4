use std::ops::Range;
use std::sync::Barrier;
use std::thread;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::kernels::{self, PdfPtr};
use super::{mean_traffic, traffic_per_flup, AaPhase, Scheme, SchemeId, SimState, SimdWidth, StoreHint};
use crate::d3q19::CollisionConsts;
use crate::error::{Error, Result};
use crate::geometry::{vectorizable_fraction, SparseLattice};

/// Timing of a [`run`] call.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub scheme: SchemeId,
    pub threads: usize,
    pub n_steps: u64,
    pub n_fluid: usize,
    pub flups: u64,
    pub wall_time: f64,
    pub mflups: f64,
    /// Modeled memory traffic per FLUP, averaged over AA phases.
    pub bytes_per_flup: f64,
    /// `mflups * bytes_per_flup`, in GB/s.
    pub bandwidth_gbs: f64,
    /// Wall time spent in AA even steps (all steps for pull schemes).
    pub even_seconds: f64,
    pub odd_seconds: f64,
}

/// Advances `state` by `n_steps` time steps using `threads` workers.
///
/// AA runs must use an even number of steps so that the state ends in its
/// natural layout.
pub fn run(lat: &SparseLattice, state: &mut SimState, n_steps: u64, id: SchemeId, threads: usize) -> Result<RunReport> {
    if n_steps == 0 {
        return Err(Error::InvalidParameter("n_steps must be positive".into()));
    }
    if id.scheme == Scheme::AaPattern && n_steps % 2 == 1 {
        return Err(Error::OddAaSteps(n_steps));
    }
    let start = Instant::now();
    let [even_seconds, odd_seconds] = advance(lat, state, n_steps, id, threads)?;
    let wall_time = start.elapsed().as_secs_f64();

    let n_fluid = lat.n_fluid();
    let flups = n_fluid as u64 * n_steps;
    let vf = vectorizable_fraction(lat, id.simd_width.lanes());
    let bytes_per_flup = match id.scheme {
        Scheme::AaPattern => mean_traffic(id.scheme, vf)?,
        s => traffic_per_flup(s, None, vf)?.bytes_per_flup,
    };
    let mflups = flups as f64 / wall_time.max(f64::MIN_POSITIVE) / 1e6;
    Ok(RunReport {
        scheme: id,
        threads: threads.max(1),
        n_steps,
        n_fluid,
        flups,
        wall_time,
        mflups,
        bytes_per_flup,
        bandwidth_gbs: mflups * bytes_per_flup / 1e3,
        even_seconds,
        odd_seconds,
    })
}

/// One two-lattice step on the calling thread.
pub fn step_pull(
    lat: &SparseLattice,
    state: &mut SimState,
    split: bool,
    store: StoreHint,
    width: SimdWidth,
) -> Result<()> {
    let scheme = if split {
        Scheme::PullSplit { store }
    } else {
        Scheme::PullTwoLattice
    };
    advance(lat, state, 1, SchemeId::new(scheme, width), 1).map(|_| ())
}

/// One AA step (even or odd, following the state's phase) on the calling thread.
pub fn step_aa(lat: &SparseLattice, state: &mut SimState, width: SimdWidth) -> Result<()> {
    advance(lat, state, 1, SchemeId::new(Scheme::AaPattern, width), 1).map(|_| ())
}

/// Splits `0..n` into `parts` contiguous ranges whose starts are multiples of `w`.
fn split_ranges(n: usize, parts: usize, w: usize) -> Vec<Range<usize>> {
    let blocks = n.div_ceil(w);
    let per = blocks.div_ceil(parts).max(1);
    (0..parts)
        .map(|p| {
            let lo = (p * per * w).min(n);
            let hi = ((p + 1) * per * w).min(n);
            lo..hi
        })
        .collect()
}

struct Ctx<'a> {
    lat: &'a SparseLattice,
    a: PdfPtr,
    b: Option<PdfPtr>,
    groups: &'a [bool],
    consts: CollisionConsts,
    scheme: Scheme,
    start_phase: AaPhase,
    n_steps: u64,
    barrier: &'a Barrier,
}

fn advance(lat: &SparseLattice, state: &mut SimState, n_steps: u64, id: SchemeId, threads: usize) -> Result<[f64; 2]> {
    state.check_lattice(lat)?;
    state.trt.validate()?;
    if threads == 0 {
        return Err(Error::InvalidParameter("threads must be positive".into()));
    }
    let aa = id.scheme == Scheme::AaPattern;
    if aa != state.is_one_lattice() {
        return Err(Error::SchemeMismatch(format!(
            "{:?} on a {}-lattice state",
            id.scheme,
            if state.is_one_lattice() { "one" } else { "two" }
        )));
    }

    let n = state.n_fluid();
    let w = id.simd_width.lanes();
    let ranges = split_ranges(n, threads, w);
    let groups = if aa { lat.vector_groups(w) } else { Vec::new() };
    let barrier = Barrier::new(ranges.len());
    let ctx = Ctx {
        lat,
        a: PdfPtr::new(&mut state.a, n),
        b: state.b.as_mut().map(|b| PdfPtr::new(b, n)),
        groups: &groups,
        consts: state.trt.consts(),
        scheme: id.scheme,
        start_phase: state.phase,
        n_steps,
        barrier: &barrier,
    };
    let work = |r: Range<usize>, lead: bool| match w {
        1 => sweep::<1>(&ctx, r, lead),
        2 => sweep::<2>(&ctx, r, lead),
        _ => sweep::<4>(&ctx, r, lead),
    };
    let times = thread::scope(|s| {
        let work = &work;
        for r in ranges.iter().skip(1).cloned() {
            s.spawn(move || work(r, false));
        }
        work(ranges[0].clone(), true)
    });

    if let Some(b) = state.b.as_mut() {
        if n_steps % 2 == 1 {
            std::mem::swap(&mut state.a, b);
        }
    } else if n_steps % 2 == 1 {
        state.phase = match state.phase {
            AaPhase::Even => AaPhase::Odd,
            AaPhase::Odd => AaPhase::Even,
        };
    }
    state.time_step += n_steps;
    Ok(times)
}

fn sweep<const W: usize>(ctx: &Ctx<'_>, r: Range<usize>, lead: bool) -> [f64; 2] {
    let mut times = [0.0; 2];
    let mut phase = ctx.start_phase;
    for step in 0..ctx.n_steps {
        let t = Instant::now();
        let (src, dst) = match ctx.b {
            Some(b) if step % 2 == 1 => (b, ctx.a),
            Some(b) => (ctx.a, b),
            None => (ctx.a, ctx.a),
        };
        // SAFETY: ranges are disjoint and every step ends at the barrier.
        unsafe {
            match ctx.scheme {
                Scheme::PullTwoLattice => kernels::pull(ctx.lat, src, dst, r.clone(), &ctx.consts),
                Scheme::PullSplit { store } => {
                    kernels::pull_split::<W>(ctx.lat, src, dst, r.clone(), &ctx.consts, store);
                    if store == StoreHint::Streaming {
                        kernels::store_fence();
                    }
                }
                Scheme::AaPattern => match phase {
                    AaPhase::Even => kernels::aa_even::<W>(ctx.a, r.clone(), &ctx.consts),
                    AaPhase::Odd => kernels::aa_odd::<W>(ctx.lat, ctx.a, ctx.groups, r.clone(), &ctx.consts),
                },
            }
        }
        ctx.barrier.wait();
        if lead {
            let slot = if ctx.scheme == Scheme::AaPattern && phase == AaPhase::Odd {
                1
            } else {
                0
            };
            times[slot] += t.elapsed().as_secs_f64();
        }
        if ctx.scheme == Scheme::AaPattern {
            phase = match phase {
                AaPhase::Even => AaPhase::Odd,
                AaPhase::Odd => AaPhase::Even,
            };
        }
    }
    times
}
