mod cli;

use clap::{Parser, Subcommand};
use cli::config::Config;
use ofl_core::OflError;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "ofl", version, about = "Exchange-noise oscillator chain experiments")]
struct Args {
    #[command(subcommand)]
    command: Command,
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides `out` in the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; falls back to OFL_THREADS.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Draw single-site values from the invariant measure.
    Sample,
    /// Run the chain from stationary starts.
    Simulate,
    /// Martingale quadratic variation along exact paths.
    Qv,
    /// Two-point correlation and its comparison with the kernel.
    Correlate,
    /// Evaluate the fractional kernel on a grid.
    Kernel,
    /// Poisson-equation norm scaling.
    Poisson,
    /// Mode-coupling classification at thermodynamic points.
    Nlfh,
    /// Limit SPDE spectra and energy estimates.
    Spde,
    /// Second-order Boltzmann–Gibbs diagnostic.
    Bg2,
    /// Check a potential against the structural assumptions.
    ValidatePotential,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Sample => "sample",
            Command::Simulate => "simulate",
            Command::Qv => "qv",
            Command::Correlate => "correlate",
            Command::Kernel => "kernel",
            Command::Poisson => "poisson",
            Command::Nlfh => "nlfh",
            Command::Spde => "spde",
            Command::Bg2 => "bg2",
            Command::ValidatePotential => "validate-potential",
        }
    }
}

fn fail(e: &OflError) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        OflError::Config(_) => ExitCode::from(2),
        OflError::Io(_) => ExitCode::from(1),
        _ => ExitCode::from(3),
    }
}

fn threads(arg: Option<usize>) -> Result<Option<usize>, OflError> {
    if arg.is_some() {
        return Ok(arg);
    }
    match std::env::var("OFL_THREADS") {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| OflError::Config(format!("OFL_THREADS='{v}' is not a number"))),
        Err(_) => Ok(None),
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let command = args.command.name();
    let prepared = (|| -> Result<(Config, u64, PathBuf, Option<usize>), OflError> {
        let cfg = match &args.config {
            Some(p) => Config::parse(&std::fs::read_to_string(p).map_err(|e| OflError::Config(format!("{}: {e}", p.display())))?)?,
            None => Config::default(),
        };
        cfg.check(command)?;
        let seed = cli::resolve_seed(args.seed, &cfg);
        let out = args.out.clone().or(cfg.out.as_ref().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("out"));
        Ok((cfg, seed, out, threads(args.threads)?))
    })();
    let (cfg, seed, out, nthreads) = match prepared {
        Ok(v) => v,
        Err(e) => return fail(&e),
    };
    if let Some(n) = nthreads {
        // Results never depend on the pool size.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let start = Instant::now();
    let outcome = match cli::run(command, &cfg, seed) {
        Ok(o) => o,
        Err(e) => return fail(&e),
    };
    let manifest = serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "experiment": command,
        "seed": seed,
        "config": cfg,
        "wall_time_s": start.elapsed().as_secs_f64(),
        "events": { "exchanges": outcome.exchanges, "ode_steps": outcome.ode_steps },
        "files": outcome.files.iter().map(|f| f.0.clone()).collect::<Vec<_>>(),
        "results": outcome.results,
    });
    let write = || -> std::io::Result<()> {
        std::fs::create_dir_all(&out)?;
        for (name, text) in &outcome.files {
            std::fs::write(out.join(name), text)?;
        }
        std::fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest).unwrap() + "\n")
    };
    if let Err(e) = write() {
        return fail(&OflError::from(e));
    }
    println!("{command}: wrote {} files to {}", outcome.files.len() + 1, out.display());
    ExitCode::SUCCESS
}
