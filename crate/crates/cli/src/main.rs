//! `wgspec <mode> --config <path>`: runs one stage of the waveguide
//! spectral pipeline and writes JSON/CSV results with a manifest.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use wgspec_core::config::{load_config, Mode};
use wgspec_core::error::ConfigError;
use wgspec_core::output::write_error;
use wgspec_core::pipeline::{run, RunContext};
use wgspec_core::{Error, Execution, Result};

#[derive(Debug, Parser)]
#[command(name = "wgspec", version, about = "Spectral asymptotics of thin curved waveguides")]
struct Args {
    /// homogenize | effective | localize | verify | oracle
    mode: Mode,
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.directory`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of eigenpairs; overrides `run.eigenpairs`.
    #[arg(long)]
    eigenpairs: Option<usize>,
    /// Comma-separated scales; overrides `run.scales`.
    #[arg(long, value_delimiter = ',')]
    scales: Option<Vec<f64>>,
    /// Run every loop on the calling thread.
    #[arg(long)]
    sequential: bool,
}

fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var("WGSPEC_THREADS") {
        Ok(v) if v.trim().is_empty() => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(ConfigError::Value { key: "WGSPEC_THREADS".into(), message: format!("expected a positive integer, got `{v}`") }.into()),
        },
        Err(_) => Ok(None),
    }
}

fn main_inner(args: &Args, out_hint: &mut Option<PathBuf>) -> Result<()> {
    let threads = threads_from_env()?;
    wgspec_core::exec::init_thread_pool(threads);
    let mut cfg = load_config(&args.config)?;
    if cfg.run.mode != args.mode {
        log::warn!("mode `{}` from the command line replaces `{}` from the config", args.mode, cfg.run.mode);
        cfg.run.mode = args.mode;
    }
    if let Some(n) = args.eigenpairs {
        cfg.run.eigenpairs = n;
    }
    if let Some(s) = &args.scales {
        cfg.run.scales = s.clone();
    }
    let out_dir = match &args.out {
        Some(o) => o.clone(),
        None => args.config.parent().unwrap_or(Path::new(".")).join(&cfg.output.directory),
    };
    *out_hint = Some(out_dir.clone());
    cfg.validate()?;
    let ctx = RunContext {
        base_dir: args.config.parent().unwrap_or(Path::new(".")).to_path_buf(),
        out_dir,
        exec: if args.sequential { Execution::Sequential } else { Execution::Parallel },
        threads,
    };
    let outcome = run(&cfg, &ctx)?;
    println!("manifest_hash {}", outcome.manifest_hash);
    for f in &outcome.files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let mut out_hint = args.out.clone();
    match main_inner(&args, &mut out_hint) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(&e, out_hint.as_deref()),
    }
}

fn report(e: &Error, out: Option<&Path>) -> ExitCode {
    eprintln!("error: {e}");
    if let Some(dir) = out {
        if let Err(w) = write_error(dir, e) {
            eprintln!("error: could not write error.json: {w}");
        }
    }
    ExitCode::from(e.exit_code() as u8)
}
