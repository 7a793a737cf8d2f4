//! Multi-stream in-place update benchmark: `a_k[i] = s * a_k[i]` over many
//! arrays at once, mimicking the streaming pattern of an LBM sweep.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Barrier;
use std::thread;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::ecm::EcmMachine;
use crate::error::{Error, Result};
use crate::power::{power, PowerParams};
use crate::propagation::StoreHint;

/// Set to any value to skip pinning worker threads to cores.
pub const NO_PIN_ENV: &str = "LBMKIT_NO_PIN";

/// Used when the last-level cache size cannot be read.
pub const FALLBACK_LLC_BYTES: u64 = 32 << 20;

/// Shortest accepted timed interval per measurement.
pub const MIN_MEASUREMENT_SECONDS: f64 = 0.2;

// One cache line per stream per step keeps all streams in flight together.
const BLOCK: usize = 8;
const MAX_SWEEPS: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub n_streams: usize,
    /// Elements per stream.
    pub array_len: usize,
    pub threads: usize,
    pub store: StoreHint,
    pub repetitions: usize,
    pub min_seconds: f64,
}

impl BenchConfig {
    /// Sized to `factor` times the given cache in total.
    pub fn sized_for(n_streams: usize, llc_bytes: u64, factor: u64, threads: usize) -> Self {
        let total = llc_bytes * factor;
        BenchConfig {
            n_streams,
            array_len: (total / 8).div_ceil(n_streams as u64) as usize,
            threads,
            store: StoreHint::Normal,
            repetitions: 3,
            min_seconds: MIN_MEASUREMENT_SECONDS,
        }
    }

    pub fn working_set(&self) -> u64 {
        (self.n_streams * self.array_len * 8) as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub threads: usize,
    pub streams: usize,
    pub array_len: usize,
    pub store: StoreHint,
    /// Bytes accounted for one timed measurement.
    pub bytes_moved: u64,
    /// Best (shortest) measurement.
    pub wall_time: f64,
    pub bandwidth_gbs: f64,
    pub sweeps: usize,
    pub repetitions: usize,
    pub pinned: bool,
    pub accounting: String,
}

/// Memory traffic of one sweep: load, write-allocate and store per element
/// with normal stores, load and store with streaming stores.
pub fn bytes_per_sweep(n_streams: usize, array_len: usize, store: StoreHint) -> u64 {
    let per_elem = match store {
        StoreHint::Normal => 3,
        StoreHint::Streaming => 2,
    };
    per_elem * 8 * (n_streams * array_len) as u64
}

pub fn accounting_note(store: StoreHint) -> &'static str {
    match store {
        StoreHint::Normal => "3x footprint per sweep (load + write-allocate + store)",
        StoreHint::Streaming => "2x footprint per sweep (load + streaming store)",
    }
}

/// Largest cache size reported under sysfs for cpu0, in bytes.
pub fn detect_llc_bytes() -> Option<u64> {
    let base = std::path::Path::new("/sys/devices/system/cpu/cpu0/cache");
    let mut best: Option<(u32, u64)> = None;
    for entry in std::fs::read_dir(base).ok()? {
        let dir = entry.ok()?.path();
        let level = std::fs::read_to_string(dir.join("level"))
            .ok()
            .and_then(|s| s.trim().parse::<u32>().ok());
        let size = std::fs::read_to_string(dir.join("size"))
            .ok()
            .and_then(|s| parse_cache_size(&s));
        if let (Some(l), Some(s)) = (level, size) {
            if best.is_none_or(|b| (l, s) > b) {
                best = Some((l, s));
            }
        }
    }
    best.map(|b| b.1)
}

/// Parses sysfs cache sizes such as `107520K` or `32M`.
pub fn parse_cache_size(s: &str) -> Option<u64> {
    let s = s.trim();
    let (num, mult) = match s.chars().last()? {
        'K' | 'k' => (&s[..s.len() - 1], 1u64 << 10),
        'M' | 'm' => (&s[..s.len() - 1], 1 << 20),
        'G' | 'g' => (&s[..s.len() - 1], 1 << 30),
        _ => (s, 1),
    };
    num.trim().parse::<u64>().ok().map(|n| n * mult)
}

pub fn llc_bytes() -> u64 {
    detect_llc_bytes().unwrap_or(FALLBACK_LLC_BYTES)
}

/// Nominal clock in GHz from the CPU model string or the current clock.
pub fn detect_frequency_ghz() -> Option<f64> {
    let info = std::fs::read_to_string("/proc/cpuinfo").ok()?;
    for line in info.lines() {
        if line.starts_with("model name") {
            if let Some(at) = line.rfind('@') {
                let v = line[at + 1..].trim().trim_end_matches("GHz").trim();
                if let Ok(f) = v.parse::<f64>() {
                    return Some(f);
                }
            }
        }
    }
    info.lines()
        .find(|l| l.starts_with("cpu MHz"))
        .and_then(|l| l.split(':').nth(1))
        .and_then(|v| v.trim().parse::<f64>().ok())
        .map(|mhz| mhz / 1e3)
}

#[cfg(target_os = "linux")]
fn pin_to_core(core: usize) -> bool {
    let ncpu = thread::available_parallelism().map_or(1, |n| n.get());
    // SAFETY: cpu_set_t is plain data; the calls only read the set we build.
    unsafe {
        let mut set: libc::cpu_set_t = std::mem::zeroed();
        libc::CPU_ZERO(&mut set);
        libc::CPU_SET(core % ncpu, &mut set);
        libc::sched_setaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &set) == 0
    }
}

#[cfg(not(target_os = "linux"))]
fn pin_to_core(_core: usize) -> bool {
    false
}

#[inline]
fn store(dst: &mut f64, v: f64, hint: StoreHint) {
    match hint {
        StoreHint::Normal => *dst = v,
        #[cfg(target_arch = "x86_64")]
        // SAFETY: `dst` is a valid, aligned f64 slot.
        StoreHint::Streaming => unsafe {
            std::arch::x86_64::_mm_stream_si64(dst as *mut f64 as *mut i64, v.to_bits() as i64)
        },
        #[cfg(not(target_arch = "x86_64"))]
        StoreHint::Streaming => *dst = v,
    }
}

/// One sweep over this thread's share of every stream.
fn sweep_chunks(chunks: &mut [&mut [f64]], s: f64, hint: StoreHint) {
    let len = chunks.first().map_or(0, |c| c.len());
    let mut lo = 0;
    while lo < len {
        let hi = (lo + BLOCK).min(len);
        for c in chunks.iter_mut() {
            for v in &mut c[lo..hi] {
                store(v, s * *v, hint);
            }
        }
        lo = hi;
    }
    if hint == StoreHint::Streaming {
        #[cfg(target_arch = "x86_64")]
        // SAFETY: fence instruction only.
        unsafe {
            std::arch::x86_64::_mm_sfence()
        };
    }
}

fn split_for_threads(arrays: &mut [Vec<f64>], threads: usize) -> Vec<Vec<&mut [f64]>> {
    let len = arrays.first().map_or(0, |a| a.len());
    let per = len.div_ceil(threads).max(1);
    let mut out: Vec<Vec<&mut [f64]>> = (0..threads).map(|_| Vec::new()).collect();
    for a in arrays.iter_mut() {
        let mut rest: &mut [f64] = a.as_mut_slice();
        for slot in out.iter_mut() {
            let take = per.min(rest.len());
            let (head, tail) = rest.split_at_mut(take);
            slot.push(head);
            rest = tail;
        }
    }
    out
}

/// Scales all arrays by `s` once, using `threads` workers.
pub fn update_sweep(arrays: &mut [Vec<f64>], s: f64, threads: usize, hint: StoreHint) -> Result<()> {
    check_arrays(arrays, threads)?;
    let parts = split_for_threads(arrays, threads);
    thread::scope(|sc| {
        for mut p in parts {
            sc.spawn(move || sweep_chunks(&mut p, s, hint));
        }
    });
    Ok(())
}

fn check_arrays(arrays: &[Vec<f64>], threads: usize) -> Result<()> {
    if arrays.is_empty() || threads == 0 {
        return Err(Error::InvalidParameter(
            "need at least one stream and one thread".into(),
        ));
    }
    if arrays.iter().any(|a| a.len() != arrays[0].len()) {
        return Err(Error::InvalidParameter("streams must have equal length".into()));
    }
    Ok(())
}

/// Timed runs of the update kernel.
///
/// Each measurement runs an even number of sweeps alternating `s = 2` and
/// `s = 0.5`, so the arrays return to their initial values exactly. The
/// sweep count grows until a measurement lasts at least `min_seconds`.
pub fn multistream_update(cfg: &BenchConfig, llc_bytes: u64) -> Result<BenchResult> {
    if cfg.n_streams == 0 || cfg.threads == 0 || cfg.array_len == 0 {
        return Err(Error::InvalidParameter(
            "streams, threads and length must be positive".into(),
        ));
    }
    if cfg.repetitions < 3 {
        return Err(Error::InvalidParameter("at least 3 repetitions are required".into()));
    }
    if !(cfg.min_seconds >= MIN_MEASUREMENT_SECONDS) {
        return Err(Error::TimerResolution(cfg.min_seconds));
    }
    let required = 4 * llc_bytes;
    if cfg.working_set() < required {
        return Err(Error::WorkingSetTooSmall {
            working_set: cfg.working_set() as usize,
            required: required as usize,
        });
    }

    let mut arrays: Vec<Vec<f64>> = (0..cfg.n_streams)
        .map(|k| (0..cfg.array_len).map(|i| 1.0 + ((i + k) % 7) as f64).collect())
        .collect();
    let check: Vec<f64> = arrays.iter().map(|a| a[a.len() / 2]).collect();

    let pin = std::env::var_os(NO_PIN_ENV).is_none();
    let pinned = AtomicUsize::new(0);
    let sweeps = AtomicUsize::new(0);
    let barrier = Barrier::new(cfg.threads + 1);
    let hint = cfg.store;
    let parts = split_for_threads(&mut arrays, cfg.threads);

    let (best, used) = thread::scope(|sc| -> Result<(f64, usize)> {
        for (t, mut p) in parts.into_iter().enumerate() {
            let (barrier, sweeps, pinned) = (&barrier, &sweeps, &pinned);
            sc.spawn(move || {
                if pin && pin_to_core(t) {
                    pinned.fetch_add(1, Ordering::Relaxed);
                }
                loop {
                    barrier.wait();
                    let n = sweeps.load(Ordering::Acquire);
                    if n == 0 {
                        break;
                    }
                    for k in 0..n {
                        sweep_chunks(&mut p, if k % 2 == 0 { 2.0 } else { 0.5 }, hint);
                    }
                    barrier.wait();
                }
            });
        }
        let measure = |n: usize| {
            sweeps.store(n, Ordering::Release);
            let t0 = Instant::now();
            barrier.wait();
            barrier.wait();
            t0.elapsed().as_secs_f64()
        };
        let mut n = 2;
        let result = loop {
            let t = measure(n);
            if t >= cfg.min_seconds {
                let mut best = t;
                for _ in 1..cfg.repetitions {
                    best = best.min(measure(n));
                }
                break Ok((best, n));
            }
            if n >= MAX_SWEEPS {
                break Err(Error::TimerResolution(t));
            }
            let grow = (cfg.min_seconds / t.max(1e-9) * 1.2).ceil() as usize;
            n = (n * grow.clamp(2, 64)).min(MAX_SWEEPS);
            n += n % 2;
        };
        sweeps.store(0, Ordering::Release);
        barrier.wait();
        result
    })?;

    for (a, &c) in arrays.iter().zip(&check) {
        if a[a.len() / 2] != c {
            return Err(Error::InvalidParameter("update kernel produced wrong values".into()));
        }
    }
    let bytes_moved = bytes_per_sweep(cfg.n_streams, cfg.array_len, cfg.store) * used as u64;
    Ok(BenchResult {
        threads: cfg.threads,
        streams: cfg.n_streams,
        array_len: cfg.array_len,
        store: cfg.store,
        bytes_moved,
        wall_time: best,
        bandwidth_gbs: bytes_moved as f64 / best / 1e9,
        sweeps: used,
        repetitions: cfg.repetitions,
        pinned: pinned.load(Ordering::Relaxed) == cfg.threads,
        accounting: accounting_note(cfg.store).into(),
    })
}

/// Same total footprint in a single stream.
pub fn single_stream_reference(cfg: &BenchConfig, llc_bytes: u64) -> Result<BenchResult> {
    let single = BenchConfig {
        n_streams: 1,
        array_len: cfg.array_len * cfg.n_streams,
        ..cfg.clone()
    };
    multistream_update(&single, llc_bytes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub f_ghz: f64,
    /// Saturated bandwidth: best over the thread counts tried.
    pub bandwidth_gbs: f64,
    /// True when the clock was detected rather than set by the operator.
    pub flagged: bool,
    pub runs: Vec<BenchResult>,
}

impl Calibration {
    /// Records the measured bandwidth in the machine's table.
    pub fn apply_to(&self, m: &mut EcmMachine) {
        m.bandwidth_table.insert(self.f_ghz, self.bandwidth_gbs);
        m.bandwidth_note = self.flagged.then(|| {
            format!(
                "single row measured at detected clock {:.2} GHz, no frequency control",
                self.f_ghz
            )
        });
    }

    /// A machine whose table holds only this measurement.
    pub fn machine(&self, template: &EcmMachine) -> Result<EcmMachine> {
        let mut m = template.clone();
        m.bandwidth_table = crate::table::Table1d::new(vec![(self.f_ghz, self.bandwidth_gbs)])?;
        m.bandwidth_note = None;
        self.apply_to(&mut m);
        Ok(m)
    }
}

/// Measures the saturated 19-stream bandwidth at the current clock.
/// `f_ghz` labels the run when the operator has fixed the clock; otherwise
/// the nominal clock is detected and the result is flagged.
pub fn calibrate_bandwidth_table(
    f_ghz: Option<f64>,
    threads_list: &[usize],
    base: &BenchConfig,
    llc: u64,
) -> Result<Calibration> {
    if threads_list.is_empty() {
        return Err(Error::InvalidParameter("no thread counts given".into()));
    }
    let (f, flagged) = match f_ghz {
        Some(f) if f > 0.0 => (f, false),
        Some(f) => return Err(Error::InvalidParameter(format!("clock {f} must be positive"))),
        None => (detect_frequency_ghz().unwrap_or(1.0), true),
    };
    let runs = threads_list
        .iter()
        .map(|&t| {
            multistream_update(
                &BenchConfig {
                    threads: t,
                    ..base.clone()
                },
                llc,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let bandwidth_gbs = runs.iter().map(|r| r.bandwidth_gbs).fold(0.0, f64::max);
    Ok(Calibration {
        f_ghz: f,
        bandwidth_gbs,
        flagged,
        runs,
    })
}

/// Source of power readings during a run.
pub trait PowerReader {
    fn name(&self) -> &str;
    /// Average power in watts at clock `f` with `t` active cores.
    fn read_watts(&mut self, f: f64, t: usize) -> Result<f64>;
}

/// Reports the power model instead of a hardware counter.
#[derive(Debug, Clone)]
pub struct ModelPowerReader {
    pub params: PowerParams,
}

impl PowerReader for ModelPowerReader {
    fn name(&self) -> &str {
        "model"
    }

    fn read_watts(&mut self, f: f64, t: usize) -> Result<f64> {
        self.params.validate()?;
        Ok(power(f, t as f64, &self.params))
    }
}
