//! `mfgsim`: validate scenarios and run minimal-time MFG experiments.

use clap::{Args, Parser, Subcommand};
use mintime_mfg::runner::{self, Mode, RunManifest, RunOutcome};
use mintime_mfg::scenario::{ResolveOptions, Scenario};
use mintime_mfg::{ErrorCategory, MfgError};
use serde_json::json;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "mfgsim", version, about = "Minimal-time mean field games with state constraints")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario and print it with every default filled in.
    Validate {
        #[arg(long)]
        config: PathBuf,
        /// Accept a penalization band at or above the computed threshold.
        #[arg(long)]
        allow_eps_override: bool,
    },
    /// Run one scenario (TOML) or re-run a manifest.json.
    Run(RunArgs),
    /// Run the same scenario for several seeds, one subdirectory each.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; must not exist.
    #[arg(long)]
    out: PathBuf,
    /// solve-ocp, equilibrium, penalty-study or audit. Required unless re-running a manifest.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 means one per core. Recorded in the manifest.
    #[arg(long, env = "MFG_THREADS")]
    threads: Option<usize>,
    #[arg(long)]
    allow_eps_override: bool,
}

fn fail(e: &MfgError) -> ExitCode {
    let cat = e.category();
    eprintln!("error[{}]: {e}", cat.as_str());
    ExitCode::from(cat.exit_code() as u8)
}

fn is_manifest(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "json")
}

fn manifest_for(args: &RunArgs) -> Result<RunManifest, MfgError> {
    let mut m = if is_manifest(&args.config) {
        RunManifest::load(&args.config)?
    } else {
        let scenario = Scenario::load(&args.config)?;
        let mode = args
            .mode
            .as_deref()
            .ok_or_else(|| MfgError::Config(vec![mintime_mfg::ConfigIssue { path: "--mode".into(), message: "required for a scenario file".into() }]))?
            .parse()?;
        RunManifest {
            tool: runner::TOOL.into(),
            version: runner::VERSION.into(),
            mode,
            seed: scenario.seed,
            threads: 0,
            allow_eps_override: false,
            scenario,
        }
    };
    if let Some(mode) = &args.mode {
        m.mode = mode.parse::<Mode>()?;
    }
    if let Some(seed) = args.seed {
        m.seed = seed;
    }
    if let Some(t) = args.threads {
        m.threads = t;
    }
    m.allow_eps_override |= args.allow_eps_override;
    Ok(m)
}

fn report(o: &RunOutcome) {
    let verdict = o.metrics["results"]["verdict"].as_str().unwrap_or("done");
    println!("{}: {verdict}", o.dir.display());
}

fn run_one(m: &RunManifest, out: &Path) -> Result<RunOutcome, MfgError> {
    runner::run_manifest(m, out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { config, allow_eps_override } => {
            let loaded = if is_manifest(&config) { RunManifest::load(&config).map(|m| m.scenario) } else { Scenario::load(&config) };
            match loaded.and_then(|s| s.resolve(ResolveOptions { allow_eps_override })) {
                Ok(s) => {
                    print!("{}", s.to_toml());
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
        Command::Run(args) => {
            let result = manifest_for(&args).and_then(|m| run_one(&m, &args.out));
            match result {
                Ok(o) => {
                    report(&o);
                    if o.stalled {
                        ExitCode::from(ErrorCategory::Stall.exit_code() as u8)
                    } else {
                        ExitCode::SUCCESS
                    }
                }
                Err(e) => fail(&e),
            }
        }
        Command::Sweep { run, seeds } => {
            let base = match manifest_for(&run) {
                Ok(m) => m,
                Err(e) => return fail(&e),
            };
            if run.out.exists() {
                return fail(&MfgError::Io {
                    path: run.out.display().to_string(),
                    source: std::io::Error::new(std::io::ErrorKind::AlreadyExists, "output directory already exists"),
                });
            }
            if let Err(e) = std::fs::create_dir_all(&run.out) {
                return fail(&MfgError::Io { path: run.out.display().to_string(), source: e });
            }
            let mut rows = Vec::new();
            let mut worst: Option<ErrorCategory> = None;
            for seed in seeds {
                let m = RunManifest { seed, ..base.clone() };
                let dir = run.out.join(format!("seed-{seed}"));
                match run_one(&m, &dir) {
                    Ok(o) => {
                        report(&o);
                        if o.stalled {
                            worst.get_or_insert(ErrorCategory::Stall);
                        }
                        rows.push(json!({"seed": seed, "dir": dir.file_name().map(|f| f.to_string_lossy().into_owned()), "results": o.metrics["results"]}));
                    }
                    Err(e) => {
                        eprintln!("seed {seed}: error[{}]: {e}", e.category().as_str());
                        worst = Some(e.category());
                        rows.push(json!({"seed": seed, "error": e.category().as_str(), "message": e.to_string()}));
                    }
                }
            }
            let summary = json!({ "mode": base.mode, "runs": rows });
            if let Err(e) = mintime_mfg::io::write_json(&run.out.join("sweep.json"), &summary) {
                return fail(&e);
            }
            match worst {
                None => ExitCode::SUCCESS,
                Some(c) => ExitCode::from(c.exit_code() as u8),
            }
        }
    }
}
