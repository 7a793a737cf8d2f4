//! Chip power, energy to solution and the energy/performance sweep.

use serde::{Deserialize, Serialize};

use crate::ecm::{saturation_cores, EcmMachine, EcmWorkload, OverlapPolicy};
use crate::error::{Error, Result};
use crate::table::Table1d;

/// What the baseline power `w0` covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PowerScope {
    #[default]
    Chip,
    /// Chip plus its share of the node baseline.
    SystemPerSocket,
    /// A constant added per node on top of the sockets.
    PerNodeAdded,
}

/// `W(f, t) = w0 + (w1 f + w2 f^2) t` with f in GHz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerParams {
    pub w0: f64,
    #[serde(default)]
    pub w1: f64,
    pub w2: f64,
    #[serde(default)]
    pub scope: PowerScope,
}

impl PowerParams {
    pub fn chip() -> Self {
        PowerParams {
            w0: 23.0,
            w1: 0.0,
            w2: 1.0,
            scope: PowerScope::Chip,
        }
    }

    pub fn system_per_socket() -> Self {
        PowerParams {
            w0: 73.0,
            scope: PowerScope::SystemPerSocket,
            ..Self::chip()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.w0 >= 0.0) || !(self.w2 > 0.0) || !self.w1.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "power parameters need w0 >= 0 and w2 > 0 (got w0={}, w2={})",
                self.w0, self.w2
            )));
        }
        Ok(())
    }

    pub fn with_added_baseline(mut self, watts: f64) -> Self {
        self.w0 += watts;
        self
    }
}

/// Power in watts at `f` GHz with `t` active cores.
pub fn power(f: f64, t: f64, p: &PowerParams) -> f64 {
    p.w0 + (p.w1 * f + p.w2 * f * f) * t
}

/// Serial performance as a function of clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum P0Source {
    /// `P0(f) = p0_at_f0 * f / f0`.
    Linear { p0_at_f0: f64, f0: f64 },
    /// Tabulated per clock, interpolated.
    Table { table: Table1d },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChipPerfModel {
    pub p0: P0Source,
    /// Saturated chip performance (MFLUP/s) per clock.
    pub pmax_table: Table1d,
    pub cores: usize,
}

impl ChipPerfModel {
    /// Per-clock serial and saturated performance from the ECM model at the
    /// machine's tabulated frequencies.
    pub fn from_ecm(w: &EcmWorkload, m: &EcmMachine, policy: OverlapPolicy) -> Result<Self> {
        let mut p0 = Vec::new();
        let mut pm = Vec::new();
        for f in m.frequencies() {
            p0.push((f, w.predict(m, f, policy)?.p0_mflups));
            pm.push((f, w.pmax(m, f)?));
        }
        Ok(ChipPerfModel {
            p0: P0Source::Table {
                table: Table1d::new(p0)?,
            },
            pmax_table: Table1d::new(pm)?,
            cores: m.cores_per_chip,
        })
    }

    /// Like [`from_ecm`](Self::from_ecm), but with the serial performance
    /// taken at the base clock and scaled linearly in `f`.
    pub fn from_ecm_linear(w: &EcmWorkload, m: &EcmMachine, policy: OverlapPolicy) -> Result<Self> {
        let mut model = Self::from_ecm(w, m, policy)?;
        model.p0 = P0Source::Linear {
            p0_at_f0: w.predict(m, m.base_frequency, policy)?.p0_mflups,
            f0: m.base_frequency,
        };
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |t: &Table1d| t.points().iter().all(|p| p.0 > 0.0 && p.1 > 0.0);
        let ok = match &self.p0 {
            P0Source::Linear { p0_at_f0, f0 } => *p0_at_f0 > 0.0 && *f0 > 0.0,
            P0Source::Table { table } => pos(table),
        };
        if !ok || !pos(&self.pmax_table) || self.cores == 0 {
            return Err(Error::InvalidParameter(
                "performance model entries must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn p0(&self, f: f64) -> f64 {
        match &self.p0 {
            P0Source::Linear { p0_at_f0, f0 } => p0_at_f0 * f / f0,
            P0Source::Table { table } => table.lerp(f),
        }
    }

    pub fn pmax(&self, f: f64) -> f64 {
        self.pmax_table.lerp(f)
    }

    /// Chip performance in MFLUP/s.
    pub fn perf(&self, f: f64, t: usize) -> f64 {
        (t as f64 * self.p0(f)).min(self.pmax(f))
    }

    pub fn saturation_cores(&self, f: f64) -> usize {
        saturation_cores(self.p0(f), self.pmax(f))
    }
}

fn check_point(f: f64, t: usize, cores: usize) -> Result<()> {
    if !(f > 0.0) || t == 0 || t > cores {
        return Err(Error::InvalidParameter(format!(
            "need f > 0 and 1 <= t <= {cores} (got f={f}, t={t})"
        )));
    }
    Ok(())
}

pub fn perf(f: f64, t: usize, m: &ChipPerfModel) -> Result<f64> {
    check_point(f, t, m.cores)?;
    Ok(m.perf(f, t))
}

/// Joules for `work_flups` updates.
pub fn energy_to_solution(f: f64, t: usize, m: &ChipPerfModel, p: &PowerParams, work_flups: f64) -> Result<f64> {
    if !(work_flups > 0.0) {
        return Err(Error::InvalidParameter("work must be positive".into()));
    }
    let perf = perf(f, t, m)?;
    Ok(power(f, t as f64, p) / (perf * 1e6) * work_flups)
}

/// Clock minimizing energy when performance is not saturated.
pub fn f_opt(t: f64, p: &PowerParams, clamp: Option<(f64, f64)>) -> f64 {
    let f = (p.w0 / (p.w2 * t)).sqrt();
    match clamp {
        Some((lo, hi)) => f.clamp(lo, hi),
        None => f,
    }
}

/// Energy-delay product in joule-seconds.
pub fn edp(energy: f64, time: f64) -> f64 {
    energy * time
}

/// Points `(P, E)` of constant energy-delay product for fixed work.
/// With time `= work / P`, energy is proportional to performance.
pub fn edp_isoline(edp_value: f64, work_flups: f64, perfs: &[f64]) -> Vec<(f64, f64)> {
    perfs.iter().map(|&p| (p, edp_value * p * 1e6 / work_flups)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub freqs: Vec<f64>,
    pub t_min: usize,
    pub t_max: usize,
    pub work_flups: f64,
    pub params: Vec<PowerParams>,
    /// Clock used with `t` active cores instead of the grid clock.
    #[serde(default)]
    pub turbo: Option<Table1d>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// Index into `SweepConfig::params`.
    pub set: usize,
    pub w0: f64,
    pub f_ghz: f64,
    pub t: usize,
    pub perf_mflups: f64,
    pub power_w: f64,
    pub energy_j: f64,
    pub time_s: f64,
    pub edp: f64,
    pub label: String,
}

pub const LABEL_GRID: &str = "grid";
pub const LABEL_SATURATION: &str = "saturation";
pub const LABEL_MIN_ENERGY: &str = "min-energy";
pub const LABEL_OPT_MIN_ENERGY: &str = "opt-space-min-energy";
pub const LABEL_OPT_MAX_PERF: &str = "opt-space-max-perf";
pub const LABEL_TURBO: &str = "turbo";

fn row(set: usize, p: &PowerParams, m: &ChipPerfModel, f: f64, t: usize, work: f64, label: &str) -> Result<SweepRow> {
    let perf = perf(f, t, m)?;
    let power_w = power(f, t as f64, p);
    let energy_j = power_w / (perf * 1e6) * work;
    let time_s = work / (perf * 1e6);
    Ok(SweepRow {
        set,
        w0: p.w0,
        f_ghz: f,
        t,
        perf_mflups: perf,
        power_w,
        energy_j,
        time_s,
        edp: edp(energy_j, time_s),
        label: label.into(),
    })
}

/// Full grid over clocks and core counts for each parameter set, followed
/// by marker rows: the saturation point per clock, the global energy
/// minimum, and the two points bounding the optimization space (lowest
/// energy among saturation points, highest saturated performance).
pub fn sweep(cfg: &SweepConfig, m: &ChipPerfModel) -> Result<Vec<SweepRow>> {
    m.validate()?;
    if cfg.freqs.is_empty() || cfg.params.is_empty() || cfg.t_min == 0 || cfg.t_min > cfg.t_max {
        return Err(Error::InvalidParameter(
            "sweep needs clocks, parameter sets and 1 <= t_min <= t_max".into(),
        ));
    }
    let mut rows = Vec::new();
    for (set, p) in cfg.params.iter().enumerate() {
        p.validate()?;
        let start = rows.len();
        for &f in &cfg.freqs {
            for t in cfg.t_min..=cfg.t_max {
                rows.push(row(set, p, m, f, t, cfg.work_flups, LABEL_GRID)?);
            }
        }
        let grid: Vec<SweepRow> = rows[start..].to_vec();

        let mut sats = Vec::new();
        for &f in &cfg.freqs {
            let ts = m.saturation_cores(f).clamp(cfg.t_min, cfg.t_max);
            sats.push(row(set, p, m, f, ts, cfg.work_flups, LABEL_SATURATION)?);
        }
        let min_e = grid
            .iter()
            .min_by(|a, b| a.energy_j.total_cmp(&b.energy_j))
            .expect("non-empty grid");
        let opt_lo = sats
            .iter()
            .min_by(|a, b| a.energy_j.total_cmp(&b.energy_j))
            .expect("non-empty");
        let opt_hi = sats
            .iter()
            .max_by(|a, b| {
                a.perf_mflups
                    .total_cmp(&b.perf_mflups)
                    .then(b.energy_j.total_cmp(&a.energy_j))
            })
            .expect("non-empty");
        let relabel = |r: &SweepRow, l: &str| SweepRow {
            label: l.into(),
            ..r.clone()
        };
        let markers = [
            relabel(min_e, LABEL_MIN_ENERGY),
            relabel(opt_lo, LABEL_OPT_MIN_ENERGY),
            relabel(opt_hi, LABEL_OPT_MAX_PERF),
        ];
        rows.extend(sats);
        rows.extend(markers);

        if let Some(turbo) = &cfg.turbo {
            for t in cfg.t_min..=cfg.t_max {
                rows.push(row(set, p, m, turbo.lerp(t as f64), t, cfg.work_flups, LABEL_TURBO)?);
            }
        }
    }
    Ok(rows)
}

/// Relative spread `max/min - 1` of energy over the saturation points of
/// each clock.
pub fn saturation_energy_spread(freqs: &[f64], m: &ChipPerfModel, p: &PowerParams, work: f64) -> Result<f64> {
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for &f in freqs {
        let ts = m.saturation_cores(f).min(m.cores);
        let e = energy_to_solution(f, ts, m, p, work)?;
        lo = lo.min(e);
        hi = hi.max(e);
    }
    Ok(hi / lo - 1.0)
}

/// Core count with the lowest energy at clock `f`.
pub fn argmin_cores(f: f64, m: &ChipPerfModel, p: &PowerParams, work: f64) -> Result<usize> {
    let mut best = (1, f64::INFINITY);
    for t in 1..=m.cores {
        let e = energy_to_solution(f, t, m, p, work)?;
        if e < best.1 {
            best = (t, e);
        }
    }
    Ok(best.0)
}

/// Dense-grid energy minimum over clock at fixed `t`; returns the clock.
pub fn argmin_frequency(
    t: usize,
    lo: f64,
    hi: f64,
    step: f64,
    m: &ChipPerfModel,
    p: &PowerParams,
    work: f64,
) -> Result<f64> {
    if !(step > 0.0) || !(hi >= lo) {
        return Err(Error::InvalidParameter("bad frequency grid".into()));
    }
    let n = ((hi - lo) / step).round() as usize;
    let mut best = (lo, f64::INFINITY);
    for k in 0..=n {
        let f = lo + k as f64 * step;
        let e = energy_to_solution(f, t, m, p, work)?;
        if e < best.1 {
            best = (f, e);
        }
    }
    Ok(best.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn linear(p0: f64, pmax: f64) -> ChipPerfModel {
        ChipPerfModel {
            p0: P0Source::Linear { p0_at_f0: p0, f0: 2.7 },
            pmax_table: Table1d::new(vec![(2.7, pmax)]).unwrap(),
            cores: 8,
        }
    }

    #[test]
    fn power_reference_points() {
        let p = PowerParams::chip();
        assert!((power(2.7, 8.0, &p) - 81.32).abs() < 1e-12);
        assert_eq!(power(2.7, 0.0, &p), 23.0);
        let dyn1 = power(1.0, 4.0, &p) - p.w0;
        let dyn2 = power(2.0, 4.0, &p) - p.w0;
        assert!((dyn2 - 4.0 * dyn1).abs() < 1e-12);
        assert!(PowerParams { w2: 0.0, ..p }.validate().is_err());
    }

    #[test]
    fn perf_reference_points() {
        let m = linear(33.0, 118.4);
        assert_eq!(perf(2.7, 1, &m).unwrap(), 33.0);
        assert_eq!(perf(2.7, 8, &m).unwrap(), 118.4);
        assert!(perf(2.7, 9, &m).is_err());
        assert!(perf(2.7, 0, &m).is_err());
        assert!((m.p0(1.35) - 16.5).abs() < 1e-12);
    }

    #[test]
    fn energy_is_proportional_to_work() {
        let (m, p) = (linear(33.0, 118.4), PowerParams::chip());
        let e1 = energy_to_solution(2.7, 4, &m, &p, 1e9).unwrap();
        let e2 = energy_to_solution(2.7, 4, &m, &p, 2e9).unwrap();
        assert!((e2 - 2.0 * e1).abs() < 1e-12 * e2);
        assert!(energy_to_solution(2.7, 4, &m, &p, 0.0).is_err());
    }

    #[test]
    fn optimal_frequency() {
        let p = PowerParams::chip();
        assert!((f_opt(6.0, &p, None) - 1.958).abs() < 1e-3);
        let q = PowerParams { w0: 4.0 * p.w0, ..p };
        assert!((f_opt(6.0, &q, None) - 2.0 * f_opt(6.0, &p, None)).abs() < 1e-12);
        assert!(f_opt(1e12, &p, None) < 1e-4);
        assert_eq!(f_opt(6.0, &p, Some((1.2, 1.5))), 1.5);
    }

    #[test]
    fn grid_argmin_frequency_matches_closed_form() {
        // never saturated
        let m = linear(10.0, 1e6);
        let p = PowerParams::chip();
        for t in 1..=8 {
            let f = argmin_frequency(t, 0.5, 6.0, 0.01, &m, &p, 1e9).unwrap();
            assert!((f - f_opt(t as f64, &p, None)).abs() <= 0.01, "t={t}");
        }
    }

    #[test]
    fn edp_relations() {
        assert_eq!(edp(10.0, 1.0), 2.0 * edp(10.0, 0.5));
        let work = 1e9;
        let (e, p) = (5.0, 50.0);
        let d1 = edp(e, work / (p * 1e6));
        let d2 = edp(2.0 * e, work / (2.0 * p * 1e6));
        assert!((d1 - d2).abs() < 1e-15);
        let line = edp_isoline(d1, work, &[25.0, 50.0, 100.0]);
        assert!((line[1].1 - e).abs() < 1e-12);
        assert!((line[2].1 / line[0].1 - 4.0).abs() < 1e-12);
    }

    fn sweep_cfg(params: Vec<PowerParams>) -> SweepConfig {
        SweepConfig {
            freqs: vec![1.2, 1.7, 2.3, 2.7],
            t_min: 1,
            t_max: 8,
            work_flups: 1e10,
            params,
            turbo: None,
        }
    }

    fn ecm_model() -> ChipPerfModel {
        let w = EcmWorkload::Single(
            crate::ecm::EcmKernelSpec::aa(
                crate::propagation::AaPhase::Even,
                crate::propagation::SimdWidth::Avx,
                1.0,
            )
            .unwrap(),
        );
        ChipPerfModel::from_ecm(&w, &EcmMachine::reference(), OverlapPolicy::NoOverlap).unwrap()
    }

    #[test]
    fn sweep_markers_and_consistency() {
        let m = ecm_model();
        let p = PowerParams::chip();
        let rows = sweep(&sweep_cfg(vec![p]), &m).unwrap();
        assert_eq!(rows.iter().filter(|r| r.label == LABEL_GRID).count(), 32);
        assert_eq!(rows.iter().filter(|r| r.label == LABEL_SATURATION).count(), 4);
        let min_e = rows.iter().find(|r| r.label == LABEL_MIN_ENERGY).unwrap();
        assert!(rows.iter().all(|r| r.energy_j >= min_e.energy_j));
        let g = rows
            .iter()
            .find(|r| r.label == LABEL_GRID && r.t == 3 && r.f_ghz == 1.7)
            .unwrap();
        assert_eq!(g.energy_j, energy_to_solution(1.7, 3, &m, &p, 1e10).unwrap());
        assert!(rows.iter().any(|r| r.label == LABEL_OPT_MAX_PERF));
    }

    #[test]
    fn added_baseline_shifts_energy_exactly() {
        let m = ecm_model();
        let p = PowerParams::chip();
        let a = sweep(&sweep_cfg(vec![p]), &m).unwrap();
        let b = sweep(&sweep_cfg(vec![p.with_added_baseline(50.0)]), &m).unwrap();
        let grid = |rows: &[SweepRow]| {
            rows.iter()
                .filter(|r| r.label == LABEL_GRID)
                .cloned()
                .collect::<Vec<_>>()
        };
        for (x, y) in grid(&a).iter().zip(&grid(&b)) {
            let shift = 1e10 * 50.0 / (x.perf_mflups * 1e6);
            assert!((y.energy_j - x.energy_j - shift).abs() < 1e-9 * y.energy_j);
        }
    }

    #[test]
    fn system_baseline_damps_spread() {
        let m = ecm_model();
        let f = [1.2, 1.7, 2.3, 2.7];
        let chip = saturation_energy_spread(&f, &m, &PowerParams::chip(), 1e10).unwrap();
        let sys = saturation_energy_spread(&f, &m, &PowerParams::system_per_socket(), 1e10).unwrap();
        assert!(sys < chip && sys <= 0.5 * chip, "{chip} {sys}");
    }

    #[test]
    fn turbo_rows_use_the_table_clock() {
        let m = ecm_model();
        let mut cfg = sweep_cfg(vec![PowerParams::chip()]);
        cfg.turbo = Some(Table1d::new(vec![(1.0, 3.5), (8.0, 3.0)]).unwrap());
        let rows = sweep(&cfg, &m).unwrap();
        let t1 = rows.iter().find(|r| r.label == LABEL_TURBO && r.t == 1).unwrap();
        assert_eq!(t1.f_ghz, 3.5);
    }

    proptest! {
        #[test]
        fn minimum_energy_sits_at_or_just_below_saturation(
            w0 in 1.0f64..200.0, w2 in 0.1f64..5.0, p0 in 5.0f64..60.0, pmax in 20.0f64..300.0, f in 1.0f64..3.0,
        ) {
            let m = ChipPerfModel {
                p0: P0Source::Linear { p0_at_f0: p0, f0: 2.0 },
                pmax_table: Table1d::new(vec![(2.0, pmax)]).unwrap(),
                cores: 64,
            };
            let p = PowerParams { w0, w1: 0.0, w2, scope: PowerScope::Chip };
            let ts = m.saturation_cores(f);
            prop_assume!(ts <= m.cores);
            let best = argmin_cores(f, &m, &p, 1e9).unwrap();
            prop_assert!(best == ts || best + 1 == ts, "best {} ts {}", best, ts);
            if ts > 1 {
                let e_s = energy_to_solution(f, ts, &m, &p, 1e9).unwrap();
                let e_b = energy_to_solution(f, ts - 1, &m, &p, 1e9).unwrap();
                if e_s <= e_b {
                    prop_assert_eq!(best, ts);
                }
            }
        }

        #[test]
        fn energy_unit_invariance(scale in 0.01f64..100.0, f in 1.0f64..3.0, t in 1usize..=8) {
            let m = linear(33.0, 118.4);
            let p = PowerParams::chip();
            let ms = ChipPerfModel {
                p0: P0Source::Linear { p0_at_f0: 33.0 * scale, f0: 2.7 },
                pmax_table: Table1d::new(vec![(2.7, 118.4 * scale)]).unwrap(),
                cores: 8,
            };
            let ps = PowerParams { w0: 23.0 * scale, w2: scale, ..p };
            let a = energy_to_solution(f, t, &m, &p, 1e9).unwrap();
            let b = energy_to_solution(f, t, &ms, &ps, 1e9).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a);
        }

        #[test]
        fn higher_pmax_lowers_saturated_energy(k in 1.01f64..3.0) {
            let p = PowerParams::chip();
            let a = linear(1e4, 100.0);
            let b = linear(1e4, 100.0 * k);
            let ea = energy_to_solution(2.7, 8, &a, &p, 1e9).unwrap();
            let eb = energy_to_solution(2.7, 8, &b, &p, 1e9).unwrap();
            prop_assert!((ea / eb - k).abs() < 1e-12);
        }
    }
}
