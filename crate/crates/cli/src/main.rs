//! `panosphere <command> --config path [--flag value ...]`

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use panosphere_core::config::RunConfig;
use panosphere_core::pipeline::{run_command, COMMANDS};
use panosphere_core::Error;

#[derive(Parser, Debug)]
#[command(name = "panosphere", version, about = "Spherical panorama outpainting toolkit")]
struct Cli {
    /// One of: synth, shmap, mask, fit-codebook, reconstruct, fit-model,
    /// outpaint, freq-report, metrics, pipeline
    #[arg(value_parser = COMMANDS)]
    command: String,

    /// JSON config file, or the manifest.json of an earlier run
    #[arg(long)]
    config: Option<PathBuf>,

    /// Config overrides as `--key value` or `--key=value`; flags win over the file
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "OVERRIDES")]
    overrides: Vec<String>,
}

fn parse_overrides(raw: &[String]) -> Result<Vec<(String, String)>, Error> {
    let mut out = Vec::new();
    let mut it = raw.iter();
    while let Some(tok) = it.next() {
        let key = tok
            .strip_prefix("--")
            .ok_or_else(|| Error::Config(format!("expected --key, found {tok:?}")))?;
        match key.split_once('=') {
            Some((k, v)) => out.push((k.to_string(), v.to_string())),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| Error::Config(format!("--{key} needs a value")))?;
                out.push((key.to_string(), v.clone()));
            }
        }
    }
    Ok(out)
}

fn init_threads() -> Result<(), Error> {
    let Ok(v) = std::env::var("PANOSPHERE_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("PANOSPHERE_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))
}

fn run(cli: &Cli) -> Result<(), Error> {
    init_threads()?;
    let overrides = parse_overrides(&cli.overrides)?;
    let cfg = RunConfig::load(cli.config.as_deref(), &overrides)?;
    let report = run_command(&cli.command, &cfg)?;
    println!("{}", report.dir.display());
    println!("{}", serde_json::to_string_pretty(&report.summary)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("panosphere {}: {e}", cli.command);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
