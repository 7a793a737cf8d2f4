//! Execution-cache-memory model for a single core plus the bandwidth
//! saturation law for a chip.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::propagation::{traffic_per_flup, AaPhase, Scheme, SimdWidth, TrafficSpec};
use crate::table::Table1d;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcmMachine {
    pub cache_line_bytes: f64,
    /// Applies to both L1-L2 and L2-L3 transfers.
    pub inter_cache_bytes_per_cycle: f64,
    /// Cycles per 32-byte (half line) transfer.
    pub half_line_cycles: f64,
    /// Saturated memory bandwidth in GB/s, keyed by clock in GHz.
    pub bandwidth_table: Table1d,
    /// Interpolate (clamped, linear) between tabulated frequencies.
    #[serde(default = "yes")]
    pub interpolate: bool,
    pub base_frequency: f64,
    pub cores_per_chip: usize,
    /// Set when the table does not come from a per-frequency measurement.
    #[serde(default)]
    pub bandwidth_note: Option<String>,
}

fn yes() -> bool {
    true
}

impl EcmMachine {
    /// Eight-core 2.7 GHz chip with approximate saturated 19-stream bandwidths.
    /// The 1.7 and 2.7 GHz values are measured; 1.2 and 2.3 GHz are estimates.
    pub fn reference() -> Self {
        EcmMachine {
            cache_line_bytes: 64.0,
            inter_cache_bytes_per_cycle: 32.0,
            half_line_cycles: 1.0,
            bandwidth_table: Table1d::new(vec![(1.2, 29.0), (1.7, 33.0), (2.3, 35.0), (2.7, 36.0)])
                .expect("static table"),
            interpolate: true,
            base_frequency: 2.7,
            cores_per_chip: 8,
            bandwidth_note: Some("approximate fixture: 1.2 and 2.3 GHz estimated".into()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cache_line_bytes > 0.0 && self.inter_cache_bytes_per_cycle > 0.0 && self.half_line_cycles >= 0.0) {
            return Err(Error::InvalidParameter(
                "cache transfer parameters must be positive".into(),
            ));
        }
        if self.bandwidth_table.points().iter().any(|p| !(p.0 > 0.0 && p.1 > 0.0)) {
            return Err(Error::InvalidParameter(
                "bandwidth table entries must be positive".into(),
            ));
        }
        if !(self.base_frequency > 0.0) || self.cores_per_chip == 0 {
            return Err(Error::InvalidParameter(
                "base frequency and core count must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Saturated memory bandwidth (GB/s) at clock `f` (GHz).
    pub fn bandwidth(&self, f: f64) -> Result<f64> {
        match self.bandwidth_table.exact(f) {
            Some(b) => Ok(b),
            None if self.interpolate => Ok(self.bandwidth_table.lerp(f)),
            None => Err(Error::MissingBandwidth(f)),
        }
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.bandwidth_table.xs().collect()
    }
}

/// Cycle and data-volume inputs for one unit of work (one cache line of results).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcmKernelSpec {
    pub name: String,
    pub unit_flups: f64,
    /// In-core execution cycles per unit, data in L1.
    pub core_cycles: f64,
    /// Full cache lines moved per unit between each pair of cache levels.
    pub line_transfers: f64,
    /// Additional half-line transfers per unit (adjacency loads).
    pub half_transfers: f64,
    pub mem_bytes: f64,
    /// L1 port cycles spent on loads and stores; only the partial-overlap
    /// policy uses it. Clamped to `core_cycles`.
    pub l1_occupancy: f64,
}

/// Measured in-core cycles per 8 FLUPs for AA steps.
pub fn aa_core_cycles(phase: AaPhase, width: SimdWidth) -> Result<f64> {
    // per AVX/scalar instruction sequence, scaled to 8 node updates
    match (phase, width) {
        (AaPhase::Even, SimdWidth::Avx) => Ok(160.0 * 2.0),
        (AaPhase::Odd, SimdWidth::Avx) => Ok(212.0 * 2.0),
        (AaPhase::Even, SimdWidth::Scalar) => Ok(158.0 * 8.0),
        (AaPhase::Odd, SimdWidth::Scalar) => Ok(160.0 * 8.0),
        (_, SimdWidth::Sse) => Err(Error::InvalidParameter("no core cycle data for SSE width".into())),
    }
}

impl EcmKernelSpec {
    /// Builds the transfer inputs from per-FLUP traffic so that the model and
    /// the byte accounting share a single source.
    pub fn from_traffic(name: impl Into<String>, core_cycles: f64, t: &TrafficSpec) -> Self {
        let unit = 8.0;
        let line = 64.0;
        let load_lines = t.pdf_load * unit / line;
        let store_lines = (t.pdf_store + t.write_allocate) * unit / line;
        let idx_half = t.idx_load * unit / 32.0;
        EcmKernelSpec {
            name: name.into(),
            unit_flups: unit,
            core_cycles,
            line_transfers: load_lines + store_lines,
            half_transfers: idx_half,
            mem_bytes: t.bytes_per_flup * unit,
            // one cycle per loaded line, two per stored line
            l1_occupancy: (load_lines + idx_half / 2.0) + 2.0 * t.pdf_store * unit / line,
        }
    }

    pub fn aa(phase: AaPhase, width: SimdWidth, vector_fraction: f64) -> Result<Self> {
        let t = traffic_per_flup(Scheme::AaPattern, Some(phase), vector_fraction)?;
        let name = format!(
            "aa-{}-{}",
            match phase {
                AaPhase::Even => "even",
                AaPhase::Odd => "odd",
            },
            match width {
                SimdWidth::Scalar => "scalar",
                SimdWidth::Sse => "sse",
                SimdWidth::Avx => "avx",
            }
        );
        Ok(Self::from_traffic(name, aa_core_cycles(phase, width)?, &t))
    }

    /// FLUPs per byte of memory traffic.
    pub fn intensity(&self) -> f64 {
        self.unit_flups / self.mem_bytes
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            self.unit_flups,
            self.core_cycles,
            self.line_transfers,
            self.half_transfers,
            self.mem_bytes,
        ];
        if self.unit_flups <= 0.0 || fields.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || self.l1_occupancy < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "kernel {}: inputs must be non-negative",
                self.name
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OverlapPolicy {
    /// All contributions add up.
    #[serde(alias = "none")]
    NoOverlap,
    /// Non-load/store core work overlaps L1-L2 transfers only.
    #[serde(alias = "partial")]
    PartialL1,
    /// Core work overlaps all transfers, which still serialize among themselves.
    #[serde(alias = "full")]
    FullOverlap,
}

impl OverlapPolicy {
    pub const ALL: [OverlapPolicy; 3] = [
        OverlapPolicy::NoOverlap,
        OverlapPolicy::PartialL1,
        OverlapPolicy::FullOverlap,
    ];

    pub fn label(self) -> &'static str {
        match self {
            OverlapPolicy::NoOverlap => "none",
            OverlapPolicy::PartialL1 => "partial-l1",
            OverlapPolicy::FullOverlap => "full",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" | "no-overlap" => Ok(OverlapPolicy::NoOverlap),
            "partial" | "partial-l1" => Ok(OverlapPolicy::PartialL1),
            "full" | "full-overlap" => Ok(OverlapPolicy::FullOverlap),
            _ => Err(Error::InvalidParameter(format!("unknown overlap policy '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferCycles {
    pub l1_l2: f64,
    pub l2_l3: f64,
    pub mem: f64,
}

pub fn transfer_cycles(spec: &EcmKernelSpec, m: &EcmMachine, f: f64) -> Result<TransferCycles> {
    if !(f > 0.0) {
        return Err(Error::InvalidParameter(format!("frequency {f} must be positive")));
    }
    let per_line = m.cache_line_bytes / m.inter_cache_bytes_per_cycle;
    let inter = spec.line_transfers * per_line + spec.half_transfers * m.half_line_cycles;
    let mem = if spec.mem_bytes == 0.0 {
        0.0
    } else {
        spec.mem_bytes * f / m.bandwidth(f)?
    };
    Ok(TransferCycles {
        l1_l2: inter,
        l2_l3: inter,
        mem,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SerialPrediction {
    /// Cycles per unit of work, unrounded.
    pub cycles: f64,
    pub p0_mflups: f64,
    pub core: f64,
    pub transfers: TransferCycles,
}

fn combine(core: f64, occ: f64, t: &TransferCycles, policy: OverlapPolicy) -> f64 {
    match policy {
        OverlapPolicy::NoOverlap => core + t.l1_l2 + t.l2_l3 + t.mem,
        OverlapPolicy::PartialL1 => core.max(occ.min(core) + t.l1_l2) + t.l2_l3 + t.mem,
        OverlapPolicy::FullOverlap => core.max(t.l1_l2 + t.l2_l3 + t.mem),
    }
}

/// MFLUP/s for `unit_flups` updates taking `cycles` at `f` GHz.
pub fn mflups_from_cycles(unit_flups: f64, f: f64, cycles: f64) -> f64 {
    unit_flups * f * 1e3 / cycles
}

pub fn predict_serial(spec: &EcmKernelSpec, m: &EcmMachine, f: f64, policy: OverlapPolicy) -> Result<SerialPrediction> {
    spec.validate()?;
    let t = transfer_cycles(spec, m, f)?;
    let cycles = combine(spec.core_cycles, spec.l1_occupancy, &t, policy);
    Ok(SerialPrediction {
        cycles,
        p0_mflups: mflups_from_cycles(spec.unit_flups, f, cycles),
        core: spec.core_cycles,
        transfers: t,
    })
}

/// Average over an even/odd step pair, weighted 1:1.
pub fn predict_pair(
    even: &EcmKernelSpec,
    odd: &EcmKernelSpec,
    m: &EcmMachine,
    f: f64,
    policy: OverlapPolicy,
) -> Result<SerialPrediction> {
    let a = predict_serial(even, m, f, policy)?;
    let b = predict_serial(odd, m, f, policy)?;
    let avg = |x: f64, y: f64| 0.5 * (x + y);
    let cycles = avg(a.cycles, b.cycles);
    Ok(SerialPrediction {
        cycles,
        p0_mflups: mflups_from_cycles(even.unit_flups, f, cycles),
        core: avg(a.core, b.core),
        transfers: TransferCycles {
            l1_l2: avg(a.transfers.l1_l2, b.transfers.l1_l2),
            l2_l3: avg(a.transfers.l2_l3, b.transfers.l2_l3),
            mem: avg(a.transfers.mem, b.transfers.mem),
        },
    })
}

/// Bandwidth-bound performance in MFLUP/s for intensity in FLUP/byte and
/// bandwidth in GB/s.
pub fn pmax(intensity: f64, bandwidth_gbs: f64) -> f64 {
    intensity * bandwidth_gbs * 1e3
}

/// Chip performance with `t` active cores.
pub fn predict_scaling(p0: f64, pmax: f64, t: usize) -> f64 {
    (t as f64 * p0).min(pmax)
}

/// Smallest core count reaching `pmax`.
pub fn saturation_cores(p0: f64, pmax: f64) -> usize {
    (pmax / p0).ceil().max(1.0) as usize
}

/// A kernel, or an even/odd pair averaged 1:1, as evaluated by [`ecm_table`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EcmWorkload {
    Single(EcmKernelSpec),
    Pair {
        name: String,
        even: EcmKernelSpec,
        odd: EcmKernelSpec,
    },
}

impl EcmWorkload {
    pub fn name(&self) -> &str {
        match self {
            EcmWorkload::Single(k) => &k.name,
            EcmWorkload::Pair { name, .. } => name,
        }
    }

    pub fn predict(&self, m: &EcmMachine, f: f64, policy: OverlapPolicy) -> Result<SerialPrediction> {
        match self {
            EcmWorkload::Single(k) => predict_serial(k, m, f, policy),
            EcmWorkload::Pair { even, odd, .. } => predict_pair(even, odd, m, f, policy),
        }
    }

    /// FLUPs per byte, using the mean traffic of a pair.
    pub fn intensity(&self) -> f64 {
        match self {
            EcmWorkload::Single(k) => k.intensity(),
            EcmWorkload::Pair { even, odd, .. } => even.unit_flups / (0.5 * (even.mem_bytes + odd.mem_bytes)),
        }
    }

    pub fn pmax(&self, m: &EcmMachine, f: f64) -> Result<f64> {
        Ok(pmax(self.intensity(), m.bandwidth(f)?))
    }

    /// AA step pair at the given width.
    pub fn aa_pair(width: SimdWidth, vector_fraction: f64) -> Result<Self> {
        let even = EcmKernelSpec::aa(AaPhase::Even, width, vector_fraction)?;
        let odd = EcmKernelSpec::aa(AaPhase::Odd, width, vector_fraction)?;
        let name = even.name.replace("-even", "");
        Ok(EcmWorkload::Pair { name, even, odd })
    }
}

/// Machine plus the workloads to evaluate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcmConfig {
    pub machine: EcmMachine,
    pub workloads: Vec<EcmWorkload>,
}

impl Default for EcmConfig {
    /// AA steps of the empty channel (all nodes vectorizable).
    fn default() -> Self {
        let mut workloads = Vec::new();
        for w in [SimdWidth::Avx, SimdWidth::Scalar] {
            for p in [AaPhase::Even, AaPhase::Odd] {
                workloads.push(EcmWorkload::Single(EcmKernelSpec::aa(p, w, 1.0).expect("preset")));
            }
            workloads.push(EcmWorkload::aa_pair(w, 1.0).expect("preset"));
        }
        EcmConfig {
            machine: EcmMachine::reference(),
            workloads,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcmRow {
    pub kernel: String,
    pub f_ghz: f64,
    pub t: usize,
    pub policy: String,
    /// Cycles per unit of work, rounded to the nearest cycle.
    pub cycles: f64,
    pub mflups: f64,
    pub pmax_mflups: f64,
    pub t_sat: usize,
}

/// Predictions for every workload, frequency, policy and core count `1..=cores`.
pub fn ecm_table(cfg: &EcmConfig, freqs: &[f64], policies: &[OverlapPolicy], cores: usize) -> Result<Vec<EcmRow>> {
    cfg.machine.validate()?;
    if freqs.is_empty() || policies.is_empty() || cores == 0 {
        return Err(Error::InvalidParameter("empty frequency, policy or core list".into()));
    }
    let mut rows = Vec::new();
    for w in &cfg.workloads {
        for &f in freqs {
            let pm = w.pmax(&cfg.machine, f)?;
            for &pol in policies {
                let pred = w.predict(&cfg.machine, f, pol)?;
                let t_sat = saturation_cores(pred.p0_mflups, pm);
                for t in 1..=cores {
                    rows.push(EcmRow {
                        kernel: w.name().to_string(),
                        f_ghz: f,
                        t,
                        policy: pol.label().into(),
                        cycles: pred.cycles.round(),
                        mflups: predict_scaling(pred.p0_mflups, pm, t),
                        pmax_mflups: pm,
                        t_sat,
                    });
                }
            }
        }
    }
    Ok(rows)
}
