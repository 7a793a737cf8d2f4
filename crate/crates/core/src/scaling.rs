//! One-dimensional domain decomposition, halo volumes and a multi-node
//! performance and energy extrapolation.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::d3q19::{Q, VELOCITIES};
use crate::ecm::EcmMachine;
use crate::error::{Error, Result};
use crate::geometry::{is_bounce, SparseLattice};
use crate::power::{power, ChipPerfModel, PowerParams};

/// Bytes per exchanged PDF.
pub const PDF_BYTES: u64 = 8;

/// Contiguous equal chunks of the fluid-node vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partitioning {
    pub n_ranks: usize,
    /// `n_ranks + 1` cut points, first 0, last `n_fluid`.
    pub boundaries: Vec<usize>,
}

impl Partitioning {
    pub fn counts(&self) -> Vec<usize> {
        self.boundaries.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn rank_of(&self, node: usize) -> usize {
        self.boundaries.partition_point(|&b| b <= node) - 1
    }
}

/// Splits `n_fluid` nodes over `n_ranks`; the first `n_fluid % n_ranks`
/// ranks get one node more.
pub fn partition_count(n_fluid: usize, n_ranks: usize) -> Result<Partitioning> {
    if n_ranks == 0 || n_ranks > n_fluid {
        return Err(Error::TooManyRanks {
            ranks: n_ranks,
            nodes: n_fluid,
        });
    }
    let (q, r) = (n_fluid / n_ranks, n_fluid % n_ranks);
    let mut boundaries = Vec::with_capacity(n_ranks + 1);
    let mut at = 0;
    boundaries.push(0);
    for k in 0..n_ranks {
        at += q + usize::from(k < r);
        boundaries.push(at);
    }
    Ok(Partitioning { n_ranks, boundaries })
}

pub fn partition(s: &SparseLattice, n_ranks: usize) -> Result<Partitioning> {
    partition_count(s.n_fluid(), n_ranks)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairVolume {
    /// Rank owning the PDFs.
    pub from: usize,
    /// Rank reading them.
    pub to: usize,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommVolume {
    /// Per ordered rank pair, links that do not cross a periodic boundary.
    pub pairs: Vec<PairVolume>,
    /// Links crossing a periodic boundary between different ranks, or, for a
    /// single rank, all periodic links.
    pub wrap_bytes: u64,
}

impl CommVolume {
    pub fn bytes(&self, from: usize, to: usize) -> u64 {
        self.pairs
            .iter()
            .find(|p| p.from == from && p.to == to)
            .map_or(0, |p| p.bytes)
    }

    pub fn total_bytes(&self) -> u64 {
        self.pairs.iter().map(|p| p.bytes).sum()
    }

    /// Bytes received by each rank per step, wrap links excluded.
    pub fn per_rank_bytes(&self, n_ranks: usize) -> Vec<u64> {
        let mut v = vec![0; n_ranks];
        for p in &self.pairs {
            v[p.to] += p.bytes;
        }
        v
    }
}

fn wraps(s: &SparseLattice, i: usize, j: usize, d: usize) -> bool {
    let (a, b) = (s.coords()[i], s.coords()[j]);
    (0..3).any(|k| b[k] as i64 != a[k] as i64 + VELOCITIES[d][k] as i64)
}

/// PDFs crossing rank boundaries per time step: node `i` on rank `r` reads
/// one value from each fluid neighbor on another rank.
pub fn comm_volume(s: &SparseLattice, p: &Partitioning) -> Result<CommVolume> {
    if *p.boundaries.last().unwrap_or(&0) != s.n_fluid() {
        return Err(Error::SizeMismatch {
            state: *p.boundaries.last().unwrap_or(&0),
            lattice: s.n_fluid(),
        });
    }
    let mut counts = std::collections::BTreeMap::<(usize, usize), u64>::new();
    let mut wrap = 0u64;
    for d in 1..Q {
        let row = s.raw_links(d);
        for r in 0..p.n_ranks {
            for i in p.boundaries[r]..p.boundaries[r + 1] {
                let raw = row[i];
                if is_bounce(raw) {
                    continue;
                }
                let j = raw as usize;
                let owner = if p.boundaries[r] <= j && j < p.boundaries[r + 1] {
                    r
                } else {
                    p.rank_of(j)
                };
                let wrapped = wraps(s, i, j, d);
                if wrapped && (owner != r || p.n_ranks == 1) {
                    wrap += 1;
                } else if owner != r && !wrapped {
                    *counts.entry((owner, r)).or_default() += 1;
                }
            }
        }
    }
    Ok(CommVolume {
        pairs: counts
            .into_iter()
            .map(|((from, to), n)| PairVolume {
                from,
                to,
                bytes: n * PDF_BYTES,
            })
            .collect(),
        wrap_bytes: wrap * PDF_BYTES,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommEntry {
    pub msg_bytes: f64,
    pub f_ghz: f64,
    pub ppn: f64,
    pub gbps: f64,
}

/// Effective per-process ring-shift bandwidth over message size, clock and
/// processes per node. Interpolation is linear in `ln(msg)`, `f` and `ppn`,
/// clamped at the table edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<CommEntry>", into = "Vec<CommEntry>")]
pub struct CommModel {
    entries: Vec<CommEntry>,
    ppns: Vec<f64>,
    freqs: Vec<f64>,
    sizes: Vec<f64>,
}

fn axis(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    v
}

/// Bracketing indices and weight of the upper one, clamped.
fn bracket(xs: &[f64], x: f64) -> (usize, usize, f64) {
    if xs.len() == 1 || x <= xs[0] {
        return (0, 0, 0.0);
    }
    let last = xs.len() - 1;
    if x >= xs[last] {
        return (last, last, 0.0);
    }
    let k = xs.partition_point(|&v| v <= x);
    (k - 1, k, (x - xs[k - 1]) / (xs[k] - xs[k - 1]))
}

impl CommModel {
    /// Entries must form a full grid over the distinct sizes, clocks and ppn values.
    pub fn new(entries: Vec<CommEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyTable("communication model".into()));
        }
        if entries
            .iter()
            .any(|e| !(e.msg_bytes > 0.0 && e.f_ghz > 0.0 && e.ppn > 0.0 && e.gbps > 0.0))
        {
            return Err(Error::InvalidParameter(
                "communication table values must be positive".into(),
            ));
        }
        let ppns = axis(entries.iter().map(|e| e.ppn).collect());
        let freqs = axis(entries.iter().map(|e| e.f_ghz).collect());
        let sizes = axis(entries.iter().map(|e| e.msg_bytes.ln()).collect());
        let m = CommModel {
            entries,
            ppns,
            freqs,
            sizes,
        };
        if m.entries.len() != m.ppns.len() * m.freqs.len() * m.sizes.len() {
            return Err(Error::InvalidParameter("communication table is not a full grid".into()));
        }
        for &p in &m.ppns {
            for &f in &m.freqs {
                for &s in &m.sizes {
                    m.lookup(p, f, s)?;
                }
            }
        }
        Ok(m)
    }

    fn lookup(&self, ppn: f64, f: f64, ln_size: f64) -> Result<f64> {
        self.entries
            .iter()
            .find(|e| {
                (e.ppn - ppn).abs() < 1e-9 && (e.f_ghz - f).abs() < 1e-9 && (e.msg_bytes.ln() - ln_size).abs() < 1e-9
            })
            .map(|e| e.gbps)
            .ok_or_else(|| Error::InvalidParameter("communication table is not a full grid".into()))
    }

    pub fn entries(&self) -> &[CommEntry] {
        &self.entries
    }

    /// Qualitative stand-in for a measured ring-shift benchmark on a
    /// two-socket, 16-core node: per-process bandwidth falls with ppn, and at
    /// full nodes the lowest clock loses about 35% in the mid-size window.
    /// Values are approximate, not measurements.
    pub fn fixture() -> Self {
        let sizes = [1e3, 1e4, 1e5, 1e6, 1e7];
        let shape = [0.2, 0.55, 1.0, 1.0, 0.95];
        let ppn_bw = [
            (1.0, 5.0, 0.85),
            (2.0, 4.0, 0.8),
            (4.0, 2.8, 0.75),
            (8.0, 1.8, 0.7),
            (16.0, 1.1, 0.65),
        ];
        let mut entries = Vec::new();
        for &(ppn, bw, low_clock) in &ppn_bw {
            for (&s, &k) in sizes.iter().zip(&shape) {
                entries.push(CommEntry {
                    msg_bytes: s,
                    f_ghz: 2.7,
                    ppn,
                    gbps: bw * k,
                });
                entries.push(CommEntry {
                    msg_bytes: s,
                    f_ghz: 1.2,
                    ppn,
                    gbps: bw * k * low_clock,
                });
            }
        }
        CommModel::new(entries).expect("static fixture")
    }

    /// Bandwidth with no communication cost at all.
    pub fn unlimited() -> Self {
        CommModel::new(vec![CommEntry {
            msg_bytes: 1.0,
            f_ghz: 1.0,
            ppn: 1.0,
            gbps: f64::MAX,
        }])
        .expect("static")
    }

    /// Per-process bandwidth in GB/s.
    pub fn eff_bandwidth(&self, msg_bytes: f64, f: f64, ppn: f64) -> Result<f64> {
        if !(msg_bytes > 0.0 && f > 0.0 && ppn > 0.0) {
            return Err(Error::InvalidParameter("bandwidth query needs positive inputs".into()));
        }
        let (p0, p1, wp) = bracket(&self.ppns, ppn);
        let (f0, f1, wf) = bracket(&self.freqs, f);
        let (s0, s1, ws) = bracket(&self.sizes, msg_bytes.ln());
        let mut acc = 0.0;
        for (pi, pw) in [(p0, 1.0 - wp), (p1, wp)] {
            for (fi, fw) in [(f0, 1.0 - wf), (f1, wf)] {
                for (si, sw) in [(s0, 1.0 - ws), (s1, ws)] {
                    let w = pw * fw * sw;
                    if w > 0.0 {
                        acc += w * self.lookup(self.ppns[pi], self.freqs[fi], self.sizes[si])?;
                    }
                }
            }
        }
        Ok(acc)
    }

    /// Reads `msg_bytes,f_ghz,ppn,gbps` CSV with a header row.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(r);
        let entries = rd.deserialize().collect::<std::result::Result<Vec<CommEntry>, _>>()?;
        Self::new(entries)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for e in &self.entries {
            wr.serialize(e)?;
        }
        wr.flush()?;
        Ok(())
    }
}

impl TryFrom<Vec<CommEntry>> for CommModel {
    type Error = Error;
    fn try_from(v: Vec<CommEntry>) -> Result<Self> {
        CommModel::new(v)
    }
}

impl From<CommModel> for Vec<CommEntry> {
    fn from(m: CommModel) -> Self {
        m.entries
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub sockets_per_node: usize,
    pub cores_per_socket: usize,
    /// Constant power per node on top of the sockets.
    pub node_baseline_watts: f64,
    pub chip_power: PowerParams,
    pub machine: EcmMachine,
}

impl Default for ClusterSpec {
    fn default() -> Self {
        ClusterSpec {
            sockets_per_node: 2,
            cores_per_socket: 8,
            node_baseline_watts: 0.0,
            chip_power: PowerParams::chip(),
            machine: EcmMachine::reference(),
        }
    }
}

/// Problem size seen by the extrapolator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Workload {
    pub n_fluid: f64,
    /// Bytes each rank exchanges with one neighbor per step.
    pub halo_bytes: f64,
    pub steps: u64,
}

impl Workload {
    /// Large packed bed: 8000 x 160 x 160 voxels, 157e6 fluid nodes, halo
    /// from the mean fluid cross-section and five crossing directions.
    pub fn large_packed_bed(steps: u64) -> Self {
        let n = 157e6;
        Workload {
            n_fluid: n,
            halo_bytes: 5.0 * n / 8000.0 * PDF_BYTES as f64,
            steps,
        }
    }

    /// Halo size taken from an actual lattice cut into `ranks` parts
    /// (largest per-pair volume).
    pub fn from_lattice(s: &SparseLattice, ranks: usize, steps: u64) -> Result<Self> {
        let v = comm_volume(s, &partition(s, ranks)?)?;
        let halo = v.pairs.iter().map(|p| p.bytes).max().unwrap_or(0);
        Ok(Workload {
            n_fluid: s.n_fluid() as f64,
            halo_bytes: halo as f64,
            steps,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParallelPrediction {
    pub nodes: usize,
    pub ppc: usize,
    pub f_ghz: f64,
    pub ranks: usize,
    pub perf_mflups: f64,
    pub efficiency: f64,
    pub energy_j: f64,
    pub compute_s: f64,
    pub comm_s: f64,
    pub step_s: f64,
    pub msg_bytes: f64,
    pub comm_gbps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingOptions {
    /// Efficiency is normalized to this node count.
    pub baseline_nodes: usize,
    /// Share of the shorter of compute and communication hidden behind the other.
    pub overlap: f64,
}

impl Default for ScalingOptions {
    fn default() -> Self {
        ScalingOptions {
            baseline_nodes: 4,
            overlap: 0.0,
        }
    }
}

struct StepTimes {
    compute: f64,
    comm: f64,
    step: f64,
    msg: f64,
    gbps: f64,
}

#[allow(clippy::too_many_arguments)]
fn step_times(
    w: &Workload,
    nodes: usize,
    ppc: usize,
    f: f64,
    c: &ClusterSpec,
    cm: &CommModel,
    chip: &ChipPerfModel,
    overlap: f64,
) -> Result<StepTimes> {
    let sockets = (nodes * c.sockets_per_node) as f64;
    let compute = w.n_fluid / (sockets * chip.perf(f, ppc) * 1e6);
    let ranks = nodes * c.sockets_per_node * ppc;
    let (comm, gbps) = if ranks > 1 && w.halo_bytes > 0.0 {
        let ppn = (c.sockets_per_node * ppc) as f64;
        let bw = cm.eff_bandwidth(w.halo_bytes, f, ppn)?;
        (2.0 * w.halo_bytes / (bw * 1e9), bw)
    } else {
        (0.0, f64::INFINITY)
    };
    let step = compute + comm - overlap * compute.min(comm);
    Ok(StepTimes {
        compute,
        comm,
        step,
        msg: w.halo_bytes,
        gbps,
    })
}

/// Strong-scaling prediction with synchronous halo exchange: each rank
/// computes its share at the chip's per-core rate, then swaps one halo with
/// each of its two neighbors.
#[allow(clippy::too_many_arguments)]
pub fn predict_parallel(
    w: &Workload,
    nodes: usize,
    ppc: usize,
    f: f64,
    c: &ClusterSpec,
    cm: &CommModel,
    chip: &ChipPerfModel,
    opts: &ScalingOptions,
) -> Result<ParallelPrediction> {
    if c.sockets_per_node == 0 || c.cores_per_socket == 0 || chip.cores < c.cores_per_socket {
        return Err(Error::InvalidParameter("inconsistent cluster specification".into()));
    }
    if ppc == 0 || ppc > c.cores_per_socket {
        return Err(Error::InvalidParameter(format!(
            "ppc {ppc} outside 1..={}",
            c.cores_per_socket
        )));
    }
    if opts.baseline_nodes == 0 || nodes < opts.baseline_nodes {
        return Err(Error::InvalidParameter(format!(
            "nodes {nodes} below the baseline {}",
            opts.baseline_nodes
        )));
    }
    if !(0.0..=1.0).contains(&opts.overlap) || !(w.n_fluid > 0.0) || !(f > 0.0) {
        return Err(Error::InvalidParameter(
            "overlap must lie in [0, 1]; work and clock positive".into(),
        ));
    }
    c.chip_power.validate()?;
    let ranks = nodes * c.sockets_per_node * ppc;
    if ranks as f64 > w.n_fluid {
        return Err(Error::TooManyRanks {
            ranks,
            nodes: w.n_fluid as usize,
        });
    }
    let t = step_times(w, nodes, ppc, f, c, cm, chip, opts.overlap)?;
    let base = step_times(w, opts.baseline_nodes, ppc, f, c, cm, chip, opts.overlap)?;
    let perf = w.n_fluid / t.step / 1e6;
    let base_perf = w.n_fluid / base.step / 1e6;
    let efficiency = (perf / nodes as f64) / (base_perf / opts.baseline_nodes as f64);
    let node_power = c.node_baseline_watts + c.sockets_per_node as f64 * power(f, ppc as f64, &c.chip_power);
    Ok(ParallelPrediction {
        nodes,
        ppc,
        f_ghz: f,
        ranks,
        perf_mflups: perf,
        efficiency,
        energy_j: nodes as f64 * node_power * t.step * w.steps as f64,
        compute_s: t.compute,
        comm_s: t.comm,
        step_s: t.step,
        msg_bytes: t.msg,
        comm_gbps: t.gbps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ecm::{EcmKernelSpec, EcmWorkload, OverlapPolicy};
    use crate::geometry::{
        build_sparse, build_sparse_ordered, gen_channel, gen_packed_bed, NodeOrdering, PackedBedParams,
    };
    use crate::propagation::{AaPhase, SimdWidth};
    use proptest::prelude::*;

    /// Direct recount over every adjacency entry.
    fn brute_force(s: &SparseLattice, p: &Partitioning) -> (u64, u64) {
        let rank = |i: usize| {
            (0..p.n_ranks)
                .find(|&r| p.boundaries[r] <= i && i < p.boundaries[r + 1])
                .unwrap()
        };
        let (mut direct, mut wrap) = (0, 0);
        for i in 0..s.n_fluid() {
            for d in 1..Q {
                if let crate::geometry::Link::Fluid(j) = s.link(i, d) {
                    let j = j as usize;
                    let c = (s.coords()[i], s.coords()[j]);
                    let wrapped = (0..3).any(|k| c.1[k] as i64 - c.0[k] as i64 != VELOCITIES[d][k] as i64);
                    if wrapped && (rank(i) != rank(j) || p.n_ranks == 1) {
                        wrap += 8;
                    } else if rank(i) != rank(j) && !wrapped {
                        direct += 8;
                    }
                }
            }
        }
        (direct, wrap)
    }

    #[test]
    fn partition_examples() {
        assert_eq!(partition_count(10, 3).unwrap().counts(), vec![4, 3, 3]);
        assert_eq!(partition_count(10, 1).unwrap().counts(), vec![10]);
        assert_eq!(partition_count(5, 5).unwrap().counts(), vec![1; 5]);
        assert!(matches!(partition_count(3, 4), Err(Error::TooManyRanks { .. })));
        let p = partition_count(10, 3).unwrap();
        assert_eq!((p.rank_of(3), p.rank_of(4), p.rank_of(9)), (0, 1, 2));
    }

    #[test]
    fn channel_two_rank_volume() {
        let s = build_sparse(&gen_channel(100, 20, 20).unwrap()).unwrap();
        let v = comm_volume(&s, &partition(&s, 2).unwrap()).unwrap();
        // five crossing directions on 18x18 nodes, minus diagonals cut by the walls
        assert_eq!(v.bytes(0, 1), (5 * 324 - 72) * 8);
        assert_eq!(v.bytes(0, 1), 12_384);
        assert!(v.bytes(0, 1) <= 5 * 18 * 18 * 8);
        assert_eq!(v.bytes(1, 0), v.bytes(0, 1));
        assert_eq!(v.wrap_bytes, 2 * 12_384);
    }

    #[test]
    fn single_rank_has_only_wrap_volume() {
        let s = build_sparse(&gen_channel(10, 6, 6).unwrap()).unwrap();
        let v = comm_volume(&s, &partition(&s, 1).unwrap()).unwrap();
        assert_eq!(v.total_bytes(), 0);
        assert_eq!(v.wrap_bytes, 2 * (5 * 16 - 16) * 8);
    }

    #[test]
    fn volume_matches_brute_force_and_is_symmetric() {
        let geoms = vec![
            build_sparse(&gen_channel(30, 8, 7).unwrap()).unwrap(),
            build_sparse_ordered(&gen_channel(12, 9, 5).unwrap(), NodeOrdering::XInner).unwrap(),
            build_sparse(
                &gen_packed_bed(&PackedBedParams {
                    dims: [40, 16, 16],
                    tube_radius: 7.5,
                    sphere_radius: 3.0,
                    seed: 4,
                    target_solid_fraction: 0.3,
                })
                .unwrap(),
            )
            .unwrap(),
        ];
        for s in &geoms {
            for ranks in [1, 2, 3, 7] {
                let p = partition(s, ranks).unwrap();
                let v = comm_volume(s, &p).unwrap();
                assert_eq!((v.total_bytes(), v.wrap_bytes), brute_force(s, &p));
                for pv in &v.pairs {
                    assert_eq!(v.bytes(pv.to, pv.from), pv.bytes);
                }
            }
        }
    }

    #[test]
    fn interior_volume_independent_of_rank_count() {
        let s = build_sparse(&gen_channel(64, 10, 10).unwrap()).unwrap();
        let mut seen = Vec::new();
        for ranks in [2, 4, 8, 16] {
            let v = comm_volume(&s, &partition(&s, ranks).unwrap()).unwrap();
            for r in 0..ranks - 1 {
                seen.push(v.bytes(r, r + 1));
            }
        }
        assert!(seen.iter().all(|&b| b == seen[0] && b > 0));
    }

    #[test]
    fn bandwidth_interpolation() {
        let cm = CommModel::fixture();
        assert!((cm.eff_bandwidth(1e5, 2.7, 16.0).unwrap() - 1.1).abs() < 1e-12);
        // halfway in ln(size) is the arithmetic mean of the two entries
        let mid = (1e4f64 * 1e5).sqrt();
        let expect = 0.5 * (1.1 * 0.55 + 1.1);
        assert!((cm.eff_bandwidth(mid, 2.7, 16.0).unwrap() - expect).abs() < 1e-12);
        // clamped outside the table
        assert_eq!(
            cm.eff_bandwidth(1e9, 3.5, 64.0).unwrap(),
            cm.eff_bandwidth(1e7, 2.7, 16.0).unwrap()
        );
        for msg in [1e5, 3e5, 1e6] {
            let r = cm.eff_bandwidth(msg, 1.2, 16.0).unwrap() / cm.eff_bandwidth(msg, 2.7, 16.0).unwrap();
            assert!((r - 0.65).abs() < 1e-9);
        }
        assert!(CommModel::new(vec![]).is_err());
    }

    #[test]
    fn comm_model_csv_round_trip() {
        let cm = CommModel::fixture();
        let mut buf = Vec::new();
        cm.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("msg_bytes,f_ghz,ppn,gbps"));
        assert_eq!(CommModel::read_csv(text.as_bytes()).unwrap(), cm);
        let partial = "msg_bytes,f_ghz,ppn,gbps\n1000,2.7,1,1.0\n1000,1.2,16,1.0\n";
        assert!(CommModel::read_csv(partial.as_bytes()).is_err());
    }

    fn chip() -> ChipPerfModel {
        let w = EcmWorkload::Single(EcmKernelSpec::aa(AaPhase::Even, SimdWidth::Avx, 1.0).unwrap());
        ChipPerfModel::from_ecm(&w, &EcmMachine::reference(), OverlapPolicy::NoOverlap).unwrap()
    }

    #[test]
    fn baseline_efficiency_is_one_and_free_comm_is_ideal() {
        let (c, m, w) = (ClusterSpec::default(), chip(), Workload::large_packed_bed(100));
        let o = ScalingOptions::default();
        let p = predict_parallel(&w, 4, 6, 2.7, &c, &CommModel::fixture(), &m, &o).unwrap();
        assert_eq!(p.efficiency, 1.0);
        for nodes in [4, 16, 128] {
            let p = predict_parallel(&w, nodes, 6, 2.7, &c, &CommModel::unlimited(), &m, &o).unwrap();
            assert!((p.efficiency - 1.0).abs() < 1e-9);
        }
        assert!(predict_parallel(&w, 2, 6, 2.7, &c, &CommModel::fixture(), &m, &o).is_err());
        assert!(predict_parallel(&w, 8, 9, 2.7, &c, &CommModel::fixture(), &m, &o).is_err());
    }

    #[test]
    fn directional_behaviour_under_fixture() {
        let (c, m, w, cm) = (
            ClusterSpec::default(),
            chip(),
            Workload::large_packed_bed(100),
            CommModel::fixture(),
        );
        let o = ScalingOptions::default();
        let pp = |n, ppc, f| predict_parallel(&w, n, ppc, f, &c, &cm, &m, &o).unwrap();
        assert!(pp(128, 8, 1.2).efficiency < pp(128, 8, 2.7).efficiency);
        for nodes in [32, 64, 128] {
            let ts = m.saturation_cores(2.7);
            for ppc in ts..8 {
                assert!(pp(nodes, ppc + 1, 2.7).perf_mflups < pp(nodes, ppc, 2.7).perf_mflups);
            }
        }
        let mut last = 0.0;
        for nodes in [4, 8, 16, 32, 64, 128] {
            let e = pp(nodes, 8, 2.7).energy_j;
            assert!(e > last);
            last = e;
        }
    }

    #[test]
    fn overlap_hides_communication() {
        let (c, m, w, cm) = (
            ClusterSpec::default(),
            chip(),
            Workload::large_packed_bed(1),
            CommModel::fixture(),
        );
        let o = ScalingOptions {
            overlap: 1.0,
            ..Default::default()
        };
        let p = predict_parallel(&w, 64, 8, 2.7, &c, &cm, &m, &o).unwrap();
        assert!((p.step_s - p.compute_s.max(p.comm_s)).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn partition_sizes_differ_by_at_most_one(n in 1usize..100_000, k in 1usize..5000) {
            prop_assume!(k <= n);
            let p = partition_count(n, k).unwrap();
            let c = p.counts();
            prop_assert_eq!(c.iter().sum::<usize>(), n);
            prop_assert!(c.iter().max().unwrap() - c.iter().min().unwrap() <= 1);
            prop_assert!(p.boundaries.windows(2).all(|w| w[0] < w[1]));
        }
    }
}
