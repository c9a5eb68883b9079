//! `heatlab` — command-line driver for the heat-equation laboratory.
//!
//! Exit codes: 0 on success, 1 on numerical failure or (without
//! `--allow-inconclusive`) any inconclusive verdict, 2 on configuration
//! errors. Config errors produce no output files.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Outcome;
use config::ExperimentConfig;

/// Deterministic seed recorded in every manifest; all randomized internals
/// derive from it so identical configs give bit-identical outputs.
const RUN_SEED: u64 = 7_305_041;

#[derive(Parser)]
#[command(name = "heatlab", version, about = "heat equation laboratory")]
struct Cli {
    /// Experiment configuration file
    #[arg(long, global = true, default_value = "configs/default.cfg")]
    config: PathBuf,

    /// Where to write outputs (overrides HEATLAB_OUTPUT_DIR and the config)
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,

    /// Exit 0 even when some verdicts are inconclusive
    #[arg(long, global = true)]
    allow_inconclusive: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Admissibility, subcriticality and the strong-subcritical sufficient test
    Classify,
    /// Scan probe points for membership in the singular set
    Scan,
    /// Capacity of the probe set, with dual certificates
    Capacity,
    /// Remaining-potential mass psi at the probes, plus blow-up verdicts
    Psi,
    /// Evolve the data measure and record slices, masses and absorption
    Solve,
    /// Reduced measure via the level-truncation sweep
    Reduce,
    /// Kernel estimate from a mollified point source
    Kernel,
    /// Initial-trace extraction with the lower-bound consistency check
    Trace,
    /// Built-in oracle suite; independent of the experiment parameters
    Validate,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Classify => "classify",
            Command::Scan => "scan",
            Command::Capacity => "capacity",
            Command::Psi => "psi",
            Command::Solve => "solve",
            Command::Reduce => "reduce",
            Command::Kernel => "kernel",
            Command::Trace => "trace",
            Command::Validate => "validate",
        }
    }
}

fn run(cmd: Command, cfg: &ExperimentConfig) -> heatlab_core::Result<Outcome> {
    match cmd {
        Command::Classify => commands::classify(cfg),
        Command::Scan => commands::scan(cfg),
        Command::Capacity => commands::capacity(cfg),
        Command::Psi => commands::psi_cmd(cfg),
        Command::Solve => commands::solve(cfg),
        Command::Reduce => commands::reduce_cmd(cfg),
        Command::Kernel => commands::kernel(cfg),
        Command::Trace => commands::trace(cfg),
        Command::Validate => commands::validate(cfg),
    }
}

fn manifest(cmd: Command, cfg: &ExperimentConfig, out: &Outcome) -> String {
    let mut m = String::new();
    m.push_str(&format!("command = {}\n", cmd.name()));
    m.push_str(&format!("version = {}\n", env!("CARGO_PKG_VERSION")));
    m.push_str(&format!("seed = {RUN_SEED}\n"));
    m.push_str("\n[config]\n");
    for (section, key, value) in &cfg.entries {
        m.push_str(&format!("{section}.{key} = {value}\n"));
    }
    m.push_str("\n[outputs]\n");
    let mut names: Vec<(usize, &str)> =
        out.files.iter().map(|(n, c)| (c.len(), n.as_str())).collect();
    names.sort_by(|a, b| a.1.cmp(b.1));
    for (size, name) in names {
        m.push_str(&format!("{name} = {size} bytes\n"));
    }
    m
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    let cfg = match config::load(&cli.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };

    let out_dir = cli
        .output_dir
        .or_else(|| std::env::var_os("HEATLAB_OUTPUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| cfg.output_dir.clone());

    let outcome = match run(cli.command, &cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("{}: {e}", cli.command.name());
            return ExitCode::from(1);
        }
    };

    if let Err(e) = std::fs::create_dir_all(&out_dir) {
        eprintln!("cannot create output directory {}: {e}", out_dir.display());
        return ExitCode::from(1);
    }
    let mut files = outcome.files.clone();
    files.push(("manifest.txt".into(), manifest(cli.command, &cfg, &outcome)));
    for (name, contents) in &files {
        if let Err(e) = std::fs::write(out_dir.join(name), contents) {
            eprintln!("cannot write {name}: {e}");
            return ExitCode::from(1);
        }
    }

    for line in &outcome.summary {
        println!("{line}");
    }
    println!(
        "{}: {} files -> {} ({} inconclusive, {} failed)",
        cli.command.name(),
        files.len(),
        out_dir.display(),
        outcome.inconclusive,
        outcome.failures
    );

    if outcome.failures > 0 || (outcome.inconclusive > 0 && !cli.allow_inconclusive) {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}
