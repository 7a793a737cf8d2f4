//! Voxel geometries and their sparse (fluid-only) representation.
//!
//! A [`SparseLattice`] keeps only fluid nodes in a 1-D vector and connects
//! them through an adjacency list with one 32-bit entry per node and
//! non-rest direction. Entries either name the fluid neighbor in that
//! direction or mark a halfway bounce-back link.

mod generate;
mod io;

pub use generate::{gen_channel, gen_packed_bed, gen_plane_channel, PackedBedParams};
pub use io::{load_geometry, save_geometry, sidecar_path, GeometrySidecar, HEADER_LEN, MAGIC};

use serde::{Deserialize, Serialize};

use crate::d3q19::{opposite, Direction, Q, Q_LINKS, VELOCITIES};
use crate::error::{Error, Result};

/// Fluid/solid flag grid, stored x-fastest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoxelGeometry {
    dims: [usize; 3],
    flags: Vec<bool>,
    periodic: [bool; 3],
}

impl VoxelGeometry {
    /// All-fluid box.
    pub fn new(dims: [usize; 3], periodic: [bool; 3]) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::InvalidDimensions {
                dims,
                reason: "every extent must be at least 1".into(),
            });
        }
        if dims.iter().any(|&n| n > u32::MAX as usize) {
            return Err(Error::InvalidDimensions {
                dims,
                reason: "extent exceeds 32-bit range".into(),
            });
        }
        Ok(VoxelGeometry {
            dims,
            flags: vec![true; dims[0] * dims[1] * dims[2]],
            periodic,
        })
    }

    pub fn from_flags(dims: [usize; 3], flags: Vec<bool>, periodic: [bool; 3]) -> Result<Self> {
        let mut g = Self::new(dims, periodic)?;
        if flags.len() != g.flags.len() {
            return Err(Error::InvalidDimensions {
                dims,
                reason: format!("flag array has {} entries, expected {}", flags.len(), g.flags.len()),
            });
        }
        g.flags = flags;
        Ok(g)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn periodic(&self) -> [bool; 3] {
        self.periodic
    }

    pub fn flags(&self) -> &[bool] {
        &self.flags
    }

    pub fn voxel_count(&self) -> usize {
        self.flags.len()
    }

    #[inline]
    pub fn linear(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    pub fn is_fluid(&self, x: usize, y: usize, z: usize) -> bool {
        self.flags[self.linear(x, y, z)]
    }

    pub fn set_fluid(&mut self, x: usize, y: usize, z: usize, fluid: bool) {
        let i = self.linear(x, y, z);
        self.flags[i] = fluid;
    }

    pub fn fluid_count(&self) -> usize {
        self.flags.iter().filter(|f| **f).count()
    }

    /// Neighbor of `(x, y, z)` along `e`, wrapping on periodic axes.
    /// `None` means the neighbor lies outside a non-periodic boundary.
    pub fn neighbor(&self, p: [usize; 3], e: [i32; 3]) -> Option<[usize; 3]> {
        let mut q = [0usize; 3];
        for a in 0..3 {
            let n = self.dims[a] as i64;
            let mut c = p[a] as i64 + e[a] as i64;
            if c < 0 || c >= n {
                if !self.periodic[a] {
                    return None;
                }
                c = c.rem_euclid(n);
            }
            q[a] = c as usize;
        }
        Some(q)
    }

    fn neighbor_is_fluid(&self, p: [usize; 3], e: [i32; 3]) -> Option<[usize; 3]> {
        self.neighbor(p, e).filter(|q| self.is_fluid(q[0], q[1], q[2]))
    }
}

/// Linearization of fluid voxels into the 1-D node vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeOrdering {
    /// x is the outermost loop and z the innermost. Contiguous index ranges
    /// are slabs of whole cross-sections, so equal 1-D chunks cut the
    /// geometry perpendicular to x.
    #[default]
    XOuter,
    /// Classic x-fastest scan (x innermost).
    XInner,
}

/// Adjacency entry of a node in one direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    Fluid(u32),
    /// Wall link; the value travels back into the reflected direction of
    /// the same node.
    BounceBack {
        reflected: Direction,
    },
}

pub(crate) const BOUNCE_FLAG: u32 = 1 << 31;

#[inline(always)]
pub(crate) fn is_bounce(raw: u32) -> bool {
    raw & BOUNCE_FLAG != 0
}

fn decode(raw: u32) -> Link {
    if is_bounce(raw) {
        Link::BounceBack {
            reflected: Direction::new((raw & !BOUNCE_FLAG) as usize).expect("valid direction"),
        }
    } else {
        Link::Fluid(raw)
    }
}

/// Fluid nodes plus adjacency list.
#[derive(Debug, Clone)]
pub struct SparseLattice {
    dims: [usize; 3],
    ordering: NodeOrdering,
    coords: Vec<[u32; 3]>,
    /// Direction-major: entry for node `i`, direction `d` (1..19) at `(d - 1) * n + i`.
    links: Vec<u32>,
}

/// Builds the fluid-only lattice with the default ordering.
pub fn build_sparse(g: &VoxelGeometry) -> Result<SparseLattice> {
    build_sparse_ordered(g, NodeOrdering::default())
}

pub fn build_sparse_ordered(g: &VoxelGeometry, ordering: NodeOrdering) -> Result<SparseLattice> {
    let [nx, ny, nz] = g.dims;
    let n = g.fluid_count();
    if n == 0 {
        return Err(Error::EmptyGeometry);
    }
    if n >= BOUNCE_FLAG as usize {
        return Err(Error::InvalidParameter(format!(
            "{n} fluid nodes exceed the 31-bit adjacency index range"
        )));
    }

    let mut coords = Vec::with_capacity(n);
    let mut push = |x: usize, y: usize, z: usize| {
        if g.is_fluid(x, y, z) {
            coords.push([x as u32, y as u32, z as u32]);
        }
    };
    match ordering {
        NodeOrdering::XOuter => {
            for x in 0..nx {
                for y in 0..ny {
                    for z in 0..nz {
                        push(x, y, z);
                    }
                }
            }
        }
        NodeOrdering::XInner => {
            for z in 0..nz {
                for y in 0..ny {
                    for x in 0..nx {
                        push(x, y, z);
                    }
                }
            }
        }
    }

    let mut node_of = vec![u32::MAX; g.voxel_count()];
    for (i, c) in coords.iter().enumerate() {
        node_of[g.linear(c[0] as usize, c[1] as usize, c[2] as usize)] = i as u32;
    }

    let mut links = vec![0u32; Q_LINKS * n];
    for d in 1..Q {
        let row = &mut links[(d - 1) * n..d * n];
        for (i, c) in coords.iter().enumerate() {
            let p = [c[0] as usize, c[1] as usize, c[2] as usize];
            row[i] = match g.neighbor_is_fluid(p, VELOCITIES[d]) {
                Some(q) => node_of[g.linear(q[0], q[1], q[2])],
                None => BOUNCE_FLAG | opposite(d) as u32,
            };
        }
    }

    Ok(SparseLattice {
        dims: g.dims,
        ordering,
        coords,
        links,
    })
}

impl SparseLattice {
    pub fn n_fluid(&self) -> usize {
        self.coords.len()
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn ordering(&self) -> NodeOrdering {
        self.ordering
    }

    pub fn coords(&self) -> &[[u32; 3]] {
        &self.coords
    }

    /// Neighbor of `node` in direction `d` (1..19).
    pub fn link(&self, node: usize, d: usize) -> Link {
        decode(self.raw_links(d)[node])
    }

    /// Raw adjacency row of direction `d` (1..19).
    #[inline(always)]
    pub fn raw_links(&self, d: usize) -> &[u32] {
        debug_assert!((1..Q).contains(&d));
        let n = self.n_fluid();
        &self.links[(d - 1) * n..d * n]
    }

    pub fn bounce_back_count(&self) -> usize {
        self.links.iter().filter(|r| is_bounce(**r)).count()
    }

    /// Per aligned group of `width` nodes, whether the group can be updated
    /// from consecutive memory in the neighbor-access step. The trailing
    /// partial group (if any) is never vectorizable.
    pub fn vector_groups(&self, width: usize) -> Vec<bool> {
        assert!(width >= 1, "SIMD width must be at least 1");
        let n = self.n_fluid();
        let groups = n / width;
        (0..groups)
            .map(|gi| {
                let base = gi * width;
                (1..Q).all(|d| {
                    let row = self.raw_links(d);
                    let first = row[base];
                    (1..width).all(|k| {
                        let r = row[base + k];
                        if is_bounce(first) {
                            is_bounce(r)
                        } else {
                            !is_bounce(r) && r == first + k as u32
                        }
                    })
                })
            })
            .collect()
    }
}

/// Fraction of fluid nodes that fall into vectorizable aligned groups.
pub fn vectorizable_fraction(s: &SparseLattice, width: usize) -> f64 {
    let n = s.n_fluid();
    let good = s.vector_groups(width).iter().filter(|g| **g).count();
    (good * width) as f64 / n as f64
}

/// Size and structure summary of a sparse lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryStats {
    pub n_fluid: usize,
    pub porosity: f64,
    pub lattice_bytes: u64,
    pub idx_bytes: u64,
    pub simd_width: usize,
    pub vectorizable_fraction: f64,
}

/// Bytes of PDF storage for `n_lattices` copies of `n_fluid` nodes.
pub fn lattice_bytes(n_fluid: u64, n_lattices: u64) -> u64 {
    n_lattices * Q as u64 * 8 * n_fluid
}

/// Bytes of the adjacency list (4-byte entries).
pub fn idx_bytes(n_fluid: u64) -> u64 {
    Q_LINKS as u64 * 4 * n_fluid
}

impl GeometryStats {
    pub fn compute(g: &VoxelGeometry, s: &SparseLattice, n_lattices: u64, width: usize) -> Self {
        let n = s.n_fluid() as u64;
        GeometryStats {
            n_fluid: s.n_fluid(),
            porosity: s.n_fluid() as f64 / g.voxel_count() as f64,
            lattice_bytes: lattice_bytes(n, n_lattices),
            idx_bytes: idx_bytes(n),
            simd_width: width,
            vectorizable_fraction: vectorizable_fraction(s, width),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn check_reciprocity(s: &SparseLattice) -> usize {
        let mut fluid_links = 0;
        for d in 1..Q {
            for i in 0..s.n_fluid() {
                if let Link::Fluid(j) = s.link(i, d) {
                    assert!((j as usize) < s.n_fluid());
                    assert_eq!(s.link(j as usize, opposite(d)), Link::Fluid(i as u32));
                    fluid_links += 1;
                }
            }
        }
        fluid_links
    }

    /// Counts (node, direction) pairs whose geometric neighbor is solid,
    /// straight from the flag grid.
    fn solid_neighbor_pairs(g: &VoxelGeometry) -> usize {
        let [nx, ny, nz] = g.dims();
        let mut count = 0;
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    if !g.is_fluid(x, y, z) {
                        continue;
                    }
                    for e in VELOCITIES.iter().skip(1) {
                        let mut solid = false;
                        let mut q = [x as i64, y as i64, z as i64];
                        for a in 0..3 {
                            q[a] += e[a] as i64;
                            let n = g.dims()[a] as i64;
                            if q[a] < 0 || q[a] >= n {
                                if g.periodic()[a] {
                                    q[a] = (q[a] + n) % n;
                                } else {
                                    solid = true;
                                }
                            }
                        }
                        if solid || !g.is_fluid(q[0] as usize, q[1] as usize, q[2] as usize) {
                            count += 1;
                        }
                    }
                }
            }
        }
        count
    }

    #[test]
    fn single_node_channel() {
        let g = gen_channel(1, 3, 3).unwrap();
        let s = build_sparse(&g).unwrap();
        assert_eq!(s.n_fluid(), 1);
        for d in 1..Q {
            let e = VELOCITIES[d];
            match s.link(0, d) {
                Link::Fluid(j) => {
                    assert_eq!(j, 0);
                    assert_eq!(e, [e[0], 0, 0]);
                }
                Link::BounceBack { reflected } => {
                    assert_ne!(e, [e[0], 0, 0]);
                    assert_eq!(reflected.index(), opposite(d));
                }
            }
        }
        assert_eq!(s.bounce_back_count(), 16);
    }

    #[test]
    fn channel_reciprocity_and_bounce_count() {
        let g = gen_channel(100, 20, 20).unwrap();
        for ord in [NodeOrdering::XOuter, NodeOrdering::XInner] {
            let s = build_sparse_ordered(&g, ord).unwrap();
            assert_eq!(s.n_fluid(), 32_400);
            let fl = check_reciprocity(&s);
            assert_eq!(fl + s.bounce_back_count(), 18 * s.n_fluid());
            assert_eq!(s.bounce_back_count(), solid_neighbor_pairs(&g));
        }
    }

    #[test]
    fn packed_bed_bounce_count() {
        let g = gen_packed_bed(&PackedBedParams {
            dims: [40, 24, 24],
            tube_radius: 11.0,
            sphere_radius: 4.0,
            seed: 5,
            target_solid_fraction: 0.3,
        })
        .unwrap();
        let s = build_sparse(&g).unwrap();
        check_reciprocity(&s);
        assert_eq!(s.bounce_back_count(), solid_neighbor_pairs(&g));
    }

    #[test]
    fn ordering_layouts() {
        let g = gen_channel(3, 4, 5).unwrap();
        let outer = build_sparse(&g).unwrap();
        let c = outer.coords();
        assert_eq!(c[0], [0, 1, 1]);
        assert_eq!(c[1], [0, 1, 2]);
        let inner = build_sparse_ordered(&g, NodeOrdering::XInner).unwrap();
        assert_eq!(inner.coords()[1], [1, 1, 1]);
    }

    #[test]
    fn empty_geometry_rejected() {
        let g = VoxelGeometry::from_flags([2, 2, 2], vec![false; 8], [true; 3]).unwrap();
        assert!(matches!(build_sparse(&g), Err(Error::EmptyGeometry)));
        assert!(VoxelGeometry::from_flags([2, 2, 2], vec![true; 7], [true; 3]).is_err());
    }

    #[test]
    fn vectorizable_fraction_channel() {
        let s = build_sparse(&gen_channel(100, 80, 80).unwrap()).unwrap();
        assert_eq!(vectorizable_fraction(&s, 1), 1.0);
        let f4 = vectorizable_fraction(&s, 4);
        assert!(f4 >= 0.9, "{f4}");
        let f8 = vectorizable_fraction(&s, 8);
        assert!(f8 <= f4);
    }

    #[test]
    fn vectorizable_fraction_exact_small_channel() {
        // 18-long z rows starting at offsets 0 and 2 mod 4: three aligned
        // interior groups of four in each row.
        let s = build_sparse(&gen_channel(8, 20, 20).unwrap()).unwrap();
        let f = vectorizable_fraction(&s, 4);
        assert!((f - 12.0 / 18.0).abs() < 1e-12, "{f}");
    }

    #[test]
    fn packed_bed_less_vectorizable_than_channel() {
        let dims = [120, 40, 40];
        let ch = build_sparse(&gen_channel(dims[0], dims[1], dims[2]).unwrap()).unwrap();
        let pb = gen_packed_bed(&PackedBedParams {
            dims,
            tube_radius: 19.0,
            sphere_radius: 4.0,
            seed: 42,
            target_solid_fraction: 0.35,
        })
        .unwrap();
        let pb = build_sparse(&pb).unwrap();
        assert!(vectorizable_fraction(&pb, 4) < vectorizable_fraction(&ch, 4));
    }

    #[test]
    fn byte_formulas_match_reference_sizes() {
        // one-lattice AA storage, decimal gigabytes
        let n = 19_000_000;
        let lat = lattice_bytes(n, 1) as f64 / 1e9;
        let idx = idx_bytes(n) as f64 / 1e9;
        assert!((lat - 2.9).abs() / 2.9 < 0.05, "{lat}");
        assert!((idx - 1.4).abs() / 1.4 < 0.05, "{idx}");
        assert_eq!(lattice_bytes(n, 2), 2 * lattice_bytes(n, 1));
        let n = 25_000_000;
        assert!((lattice_bytes(n, 1) as f64 / 1e9 - 3.8).abs() / 3.8 < 0.05);
        assert!((idx_bytes(n) as f64 / 1e9 - 1.8).abs() / 1.8 < 0.05);
    }

    #[test]
    fn stats_formulas() {
        let g = gen_channel(10, 5, 5).unwrap();
        let s = build_sparse(&g).unwrap();
        let st = GeometryStats::compute(&g, &s, 1, 4);
        assert_eq!(st.n_fluid, 90);
        assert_eq!(st.lattice_bytes, 19 * 8 * 90);
        assert_eq!(st.idx_bytes, 18 * 4 * 90);
        assert!((st.porosity - 90.0 / 250.0).abs() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn channel_fluid_count(nx in 1usize..12, ny in 3usize..10, nz in 3usize..10) {
            let g = gen_channel(nx, ny, nz).unwrap();
            let s = build_sparse(&g).unwrap();
            prop_assert_eq!(s.n_fluid(), nx * (ny - 2) * (nz - 2));
            check_reciprocity(&s);
            prop_assert_eq!(s.bounce_back_count(), solid_neighbor_pairs(&g));
        }
    }
}
