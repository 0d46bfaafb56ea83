//! `varcurv`: command-line front end for varcurv-core.

mod commands;
mod config;
mod manifest;

use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::Parser;

use commands::{Artifacts, Command, NAMES};
use manifest::{compare_outputs, RunManifest, MANIFEST};

#[derive(Parser, Debug)]
#[command(name = "varcurv", version, about = "Discrete variational mean curvature tools", args_override_self = true)]
struct Cli {
    /// Log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

/// Runs one command into its `--out` directory and writes the manifest.
fn execute(mut cmd: Command) -> Result<RunManifest> {
    let start = Instant::now();
    cmd.absolutize_inputs()?;
    let dir = cmd.common().out.clone();
    if dir.join(MANIFEST).exists() {
        log::warn!("{} already holds a manifest; it is replaced", dir.display());
    }
    let mut out = Artifacts::new(dir.clone())?;
    cmd.run(&mut out)?;
    let manifest = RunManifest {
        command: cmd.name().to_string(),
        inputs: cmd.inputs(),
        outputs: out.outputs,
        seed: cmd.seed(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_seconds: start.elapsed().as_secs_f64(),
        parameters: cmd,
    };
    manifest.write(&dir)?;
    Ok(manifest)
}

/// Ok(true) when every output of the original run is reproduced byte for byte.
fn replay(path: &std::path::Path, out: std::path::PathBuf) -> Result<bool> {
    let original = RunManifest::read(path)?;
    let original_dir = path.parent().context("manifest: no parent directory")?;
    let mut cmd = original.parameters.clone();
    cmd.common_mut().out = out.clone();
    let again = execute(cmd)?;
    let mut differing = compare_outputs(original_dir, &out, &original.outputs);
    if again.outputs != original.outputs {
        differing.push("(output list)".into());
    }
    if differing.is_empty() {
        println!("replay identical: {} outputs", original.outputs.len());
        Ok(true)
    } else {
        eprintln!("replay differs: {}", differing.join(", "));
        Ok(false)
    }
}

fn main() -> ExitCode {
    let args = match config::expand(std::env::args().collect(), &NAMES) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    // clap exits with status 2 on usage errors
    let cli = Cli::parse_from(args);
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Replay(r) => replay(&r.manifest, r.common.out),
        cmd => execute(cmd).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            let diverged = e
                .chain()
                .any(|c| matches!(c.downcast_ref(), Some(varcurv_core::Error::NonConvergence(_))));
            ExitCode::from(if diverged { 1 } else { 2 })
        }
    }
}
