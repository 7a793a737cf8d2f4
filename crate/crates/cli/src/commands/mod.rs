pub mod bench;
pub mod geom;
pub mod models;
pub mod run;

use std::path::PathBuf;

use serde::Serialize;
use serde_json::{json, Value};

use lbmkit::propagation::{SimdWidth, StoreHint};

use crate::config::{self, Loaded};
use crate::output::{self, Format};
use crate::{Cli, CliError, Command};

pub const DEFAULT_SEED: u64 = 42;

/// Global flags after merging with any recorded values.
pub struct Ctx {
    pub command: &'static str,
    pub seed: u64,
    pub threads: usize,
    pub format: Format,
    pub out: Option<PathBuf>,
}

impl Ctx {
    pub fn meta<C: Serialize>(&self, cfg: &C) -> Value {
        json!({
            "tool": "lbmkit",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "seed": self.seed,
            "threads": self.threads,
            "config": cfg,
        })
    }

    pub fn emit<C: Serialize, R: Serialize>(&self, cfg: &C, rows: &[R]) -> Result<(), CliError> {
        output::emit(&self.meta(cfg), rows, self.format, self.out.as_deref())
    }
}

pub fn available_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn load<T: serde::de::DeserializeOwned + Default>(cli: &Cli, command: &'static str) -> Result<(T, Ctx), CliError> {
    let Loaded { config, seed, threads } = config::load::<T>(cli.config.as_deref(), command)?;
    let threads = cli.threads.or(threads).unwrap_or_else(available_threads);
    if threads == 0 {
        return Err(CliError::Invalid("--threads must be positive".into()));
    }
    let ctx = Ctx {
        command,
        seed: cli.seed.or(seed).unwrap_or(DEFAULT_SEED),
        threads,
        format: cli.format,
        out: cli.out.clone(),
    };
    Ok((config, ctx))
}

pub fn dispatch(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Geom(a) => {
            let (cfg, ctx) = load(&cli, "geom")?;
            geom::exec(a, cfg, &ctx)
        }
        Command::Run(a) => {
            let (cfg, ctx) = load(&cli, "run")?;
            run::exec(a, cfg, &ctx)
        }
        Command::Verify(a) => {
            let (cfg, ctx) = load(&cli, "verify")?;
            run::verify(a, cfg, &ctx)
        }
        Command::Ecm(a) => {
            let (cfg, ctx) = load(&cli, "ecm")?;
            models::ecm(a, cfg, &ctx)
        }
        Command::Power(a) => {
            let (cfg, ctx) = load(&cli, "power")?;
            models::power(a, cfg, &ctx)
        }
        Command::Scale(a) => {
            let (cfg, ctx) = load(&cli, "scale")?;
            models::scale(a, cfg, &ctx)
        }
        Command::Bench(a) => {
            let (cfg, ctx) = load(&cli, "bench")?;
            bench::exec(a, cfg, &ctx, cli.threads)
        }
    }
}

pub fn parse_simd(s: &str) -> Result<SimdWidth, String> {
    match s {
        "scalar" | "1" => Ok(SimdWidth::Scalar),
        "sse" | "2" => Ok(SimdWidth::Sse),
        "avx" | "4" => Ok(SimdWidth::Avx),
        _ => Err(format!("unknown SIMD width '{s}' (scalar, sse, avx)")),
    }
}

pub fn parse_store(s: &str) -> Result<StoreHint, String> {
    match s {
        "normal" => Ok(StoreHint::Normal),
        "streaming" | "nt" => Ok(StoreHint::Streaming),
        _ => Err(format!("unknown store hint '{s}' (normal, streaming)")),
    }
}

/// `a,b,c`, `a..b` (step 1) or `a..b` doubling when `doubling` is set.
pub fn parse_counts(s: &str, doubling: bool) -> Result<Vec<usize>, String> {
    let num = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("bad count '{t}'"));
    if let Some((a, b)) = s.split_once("..") {
        let (a, b) = (num(a)?, num(b.trim_start_matches('='))?);
        if a == 0 || a > b {
            return Err(format!("bad range '{s}'"));
        }
        let mut v = Vec::new();
        let mut x = a;
        while x <= b {
            v.push(x);
            x = if doubling { x * 2 } else { x + 1 };
        }
        return Ok(v);
    }
    s.split(',').map(num).collect()
}
