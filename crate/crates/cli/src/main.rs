use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use zyglab::experiments::{self, EXPERIMENTS};

#[derive(Parser)]
#[command(name = "zyglab", version, about = "Run zyglab experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print every experiment with its description and topic
    ListExperiments,
    #[command(external_subcommand)]
    Run(Vec<String>),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// TOML file with an optional `seed`, `out` and a `[params]` table
    #[arg(long)]
    config: Option<PathBuf>,
    /// use the cheap preset
    #[arg(long)]
    small: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// output directory (default `out/<experiment>`)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Parser, Debug)]
#[command(no_binary_name = true)]
struct RunCli {
    #[command(flatten)]
    args: RunArgs,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    seed: Option<u64>,
    out: Option<PathBuf>,
    small: Option<bool>,
    params: Option<toml::Table>,
}

fn read_config(path: &Path) -> anyhow::Result<ConfigFile> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn usage_error(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    eprintln!("usage: zyglab <experiment> --config <path> [--small] [--seed S] [--out DIR]");
    eprintln!("       zyglab list-experiments");
    ExitCode::from(2)
}

fn list() {
    let width = EXPERIMENTS.iter().map(|e| e.name.len()).max().unwrap_or(0);
    for e in EXPERIMENTS {
        println!("{:width$}  {}  [{}]", e.name, e.description, e.topic);
    }
}

fn run(name: &str, rest: &[String]) -> ExitCode {
    if experiments::info(name).is_none() {
        return usage_error(format!("unknown experiment `{name}`"));
    }
    let args = match RunCli::try_parse_from(rest) {
        Ok(c) => c.args,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(2);
        }
    };
    let cfg = match args.config.as_deref().map(read_config).transpose() {
        Ok(c) => c.unwrap_or_default(),
        Err(e) => return usage_error(format!("{e:#}")),
    };
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    let small = args.small || cfg.small.unwrap_or(false);
    let out = args.out.or(cfg.out).unwrap_or_else(|| PathBuf::from("out").join(name));
    let params = match cfg.params.map(serde_json::to_value).transpose() {
        Ok(p) => p,
        Err(e) => return usage_error(e),
    };

    let report = match experiments::run_named(name, params.as_ref(), small, seed) {
        Ok(r) => r,
        Err(e @ zyglab::Error::Config(_)) => return usage_error(e),
        Err(e) => {
            eprintln!("error: {name}: {e}");
            return ExitCode::from(1);
        }
    };
    if let Err(e) = report.write_dir(&out).map_err(|e| anyhow!("writing {}: {e}", out.display())) {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    print!("{}", report.summary());
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let failed = report.failed_checks();
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        let names: Vec<&str> = failed.iter().map(|c| c.name.as_str()).collect();
        eprintln!("{name}: failed {}", names.join(", "));
        ExitCode::from(1)
    }
}

fn main() -> ExitCode {
    if let Some(n) = std::env::var("ZYGLAB_THREADS").ok().and_then(|s| s.parse::<usize>().ok()) {
        zyglab::par::init_threads(n);
    }
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match cli.command {
        Command::ListExperiments => {
            list();
            ExitCode::SUCCESS
        }
        Command::Run(argv) => run(&argv[0], &argv[1..]),
    }
}
