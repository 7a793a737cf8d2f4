//! Node-range kernels shared by all threads.
//!
//! Workers write through [`PdfPtr`] because the slots a node touches are
//! spread over 19 direction arrays and cannot be carved into disjoint
//! `&mut` slices. Soundness rests on one property per kernel:
//!
//! * pull / pull-split: node `i` writes only `dst[d][i]` and reads only `src`;
//! * AA even: node `i` reads and writes only its own 19 slots;
//! * AA odd: node `i` reads and writes the set `{(opp(d), up_d(i)) or (d, i)}`,
//!   and these sets partition the lattice (the write for `d` lands in the
//!   slot read by the neighbor for `opp(d)`), so no two nodes share a slot.
//!
//! Within a node all reads happen before any write.

use std::ops::Range;

use crate::d3q19::{collide_lanes, opposite, CollisionConsts, Q};
use crate::geometry::{is_bounce, SparseLattice};
use crate::propagation::StoreHint;

#[derive(Clone, Copy)]
pub(crate) struct PdfPtr {
    ptr: *mut f64,
    n: usize,
}

// SAFETY: see the module docs; callers hand each thread a disjoint node range.
unsafe impl Send for PdfPtr {}
unsafe impl Sync for PdfPtr {}

impl PdfPtr {
    pub(crate) fn new(buf: &mut [f64], n: usize) -> Self {
        debug_assert_eq!(buf.len(), Q * n);
        PdfPtr {
            ptr: buf.as_mut_ptr(),
            n,
        }
    }

    #[inline(always)]
    unsafe fn get(self, d: usize, i: usize) -> f64 {
        *self.ptr.add(d * self.n + i)
    }

    #[inline(always)]
    unsafe fn set(self, d: usize, i: usize, v: f64) {
        *self.ptr.add(d * self.n + i) = v;
    }

    #[inline(always)]
    unsafe fn set_streaming(self, d: usize, i: usize, v: f64) {
        #[cfg(target_arch = "x86_64")]
        {
            std::arch::x86_64::_mm_stream_si64(self.ptr.add(d * self.n + i) as *mut i64, v.to_bits() as i64);
        }
        #[cfg(not(target_arch = "x86_64"))]
        {
            self.set(d, i, v);
        }
    }
}

/// Orders preceding streaming stores before later loads from other threads.
#[inline]
pub(crate) fn store_fence() {
    #[cfg(target_arch = "x86_64")]
    unsafe {
        std::arch::x86_64::_mm_sfence();
    }
}

/// Two-lattice pull, one node at a time.
///
/// # Safety
/// `src` and `dst` are distinct `Q * n` buffers; no other thread touches
/// `dst` entries of nodes in `range`.
pub(crate) unsafe fn pull(lat: &SparseLattice, src: PdfPtr, dst: PdfPtr, range: Range<usize>, c: &CollisionConsts) {
    for i in range {
        let mut f = [[0.0f64; 1]; Q];
        f[0][0] = src.get(0, i);
        for d in 1..Q {
            let o = opposite(d);
            let raw = *lat.raw_links(o).get_unchecked(i);
            f[d][0] = if is_bounce(raw) {
                src.get(o, i)
            } else {
                src.get(d, raw as usize)
            };
        }
        collide_lanes(&mut f, c);
        for d in 0..Q {
            dst.set(d, i, f[d][0]);
        }
    }
}

/// Pull-split: gathers `W` nodes into a 19 x `W` buffer, collides, then
/// writes the buffer back two directions at a time.
///
/// # Safety
/// As for [`pull`].
pub(crate) unsafe fn pull_split<const W: usize>(
    lat: &SparseLattice,
    src: PdfPtr,
    dst: PdfPtr,
    range: Range<usize>,
    c: &CollisionConsts,
    store: StoreHint,
) {
    let mut i = range.start;
    while i + W <= range.end {
        let mut buf = [[0.0f64; W]; Q];
        for k in 0..W {
            buf[0][k] = src.get(0, i + k);
        }
        for d in 1..Q {
            let o = opposite(d);
            let row = lat.raw_links(o);
            for k in 0..W {
                let raw = *row.get_unchecked(i + k);
                buf[d][k] = if is_bounce(raw) {
                    src.get(o, i + k)
                } else {
                    src.get(d, raw as usize)
                };
            }
        }
        collide_lanes(&mut buf, c);
        write_pairs(dst, i, &buf, store);
        i += W;
    }
    while i < range.end {
        let mut buf = [[0.0f64; 1]; Q];
        buf[0][0] = src.get(0, i);
        for d in 1..Q {
            let o = opposite(d);
            let raw = *lat.raw_links(o).get_unchecked(i);
            buf[d][0] = if is_bounce(raw) {
                src.get(o, i)
            } else {
                src.get(d, raw as usize)
            };
        }
        collide_lanes(&mut buf, c);
        write_pairs(dst, i, &buf, store);
        i += 1;
    }
}

#[inline(always)]
unsafe fn write_pairs<const W: usize>(dst: PdfPtr, i: usize, buf: &[[f64; W]; Q], store: StoreHint) {
    let put = |d: usize, k: usize| match store {
        StoreHint::Normal => dst.set(d, i + k, buf[d][k]),
        StoreHint::Streaming => dst.set_streaming(d, i + k, buf[d][k]),
    };
    for k in 0..W {
        put(0, k);
    }
    let mut d = 1;
    while d < Q {
        for k in 0..W {
            put(d, k);
        }
        for k in 0..W {
            put(d + 1, k);
        }
        d += 2;
    }
}

/// AA even step: node-local, results go to the opposite slots.
///
/// # Safety
/// `range` is owned by the calling thread for this phase.
pub(crate) unsafe fn aa_even<const W: usize>(a: PdfPtr, range: Range<usize>, c: &CollisionConsts) {
    let mut i = range.start;
    while i + W <= range.end {
        let mut f = [[0.0f64; W]; Q];
        for d in 0..Q {
            for k in 0..W {
                f[d][k] = a.get(d, i + k);
            }
        }
        collide_lanes(&mut f, c);
        for d in 0..Q {
            let o = opposite(d);
            for k in 0..W {
                a.set(o, i + k, f[d][k]);
            }
        }
        i += W;
    }
    while i < range.end {
        let mut f = [[0.0f64; 1]; Q];
        for d in 0..Q {
            f[d][0] = a.get(d, i);
        }
        collide_lanes(&mut f, c);
        for d in 0..Q {
            a.set(opposite(d), i, f[d][0]);
        }
        i += 1;
    }
}

/// AA odd step: reads from and writes to neighbors.
///
/// Aligned groups flagged in `groups` take the consecutive-chunk path; all
/// other nodes go through the per-node indirect path. `range.start` must be
/// a multiple of `W`.
///
/// # Safety
/// `range` is owned by the calling thread for this phase.
pub(crate) unsafe fn aa_odd<const W: usize>(
    lat: &SparseLattice,
    a: PdfPtr,
    groups: &[bool],
    range: Range<usize>,
    c: &CollisionConsts,
) {
    debug_assert_eq!(range.start % W, 0);
    let mut i = range.start;
    while i + W <= range.end {
        if *groups.get_unchecked(i / W) {
            aa_odd_chunk::<W>(lat, a, i, c);
        } else {
            for k in 0..W {
                aa_odd_node(lat, a, i + k, c);
            }
        }
        i += W;
    }
    while i < range.end {
        aa_odd_node(lat, a, i, c);
        i += 1;
    }
}

#[inline(always)]
unsafe fn aa_odd_chunk<const W: usize>(lat: &SparseLattice, a: PdfPtr, i: usize, c: &CollisionConsts) {
    let mut f = [[0.0f64; W]; Q];
    for k in 0..W {
        f[0][k] = a.get(0, i + k);
    }
    for d in 1..Q {
        let o = opposite(d);
        let raw = *lat.raw_links(o).get_unchecked(i);
        let (sd, si) = if is_bounce(raw) { (d, i) } else { (o, raw as usize) };
        for k in 0..W {
            f[d][k] = a.get(sd, si + k);
        }
    }
    collide_lanes(&mut f, c);
    for k in 0..W {
        a.set(0, i + k, f[0][k]);
    }
    for d in 1..Q {
        let raw = *lat.raw_links(d).get_unchecked(i);
        let (td, ti) = if is_bounce(raw) {
            (opposite(d), i)
        } else {
            (d, raw as usize)
        };
        for k in 0..W {
            a.set(td, ti + k, f[d][k]);
        }
    }
}

#[inline(always)]
unsafe fn aa_odd_node(lat: &SparseLattice, a: PdfPtr, i: usize, c: &CollisionConsts) {
    let mut f = [[0.0f64; 1]; Q];
    f[0][0] = a.get(0, i);
    for d in 1..Q {
        let o = opposite(d);
        let raw = *lat.raw_links(o).get_unchecked(i);
        f[d][0] = if is_bounce(raw) {
            a.get(d, i)
        } else {
            a.get(o, raw as usize)
        };
    }
    collide_lanes(&mut f, c);
    a.set(0, i, f[0][0]);
    for d in 1..Q {
        let raw = *lat.raw_links(d).get_unchecked(i);
        if is_bounce(raw) {
            a.set(opposite(d), i, f[d][0]);
        } else {
            a.set(d, raw as usize, f[d][0]);
        }
    }
}
