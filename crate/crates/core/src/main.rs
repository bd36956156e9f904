use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use mbsense::harness::{presets, runner, Scenario};
use mbsense::synth::write_slices_csv;

/// Multiband ranging simulator.
#[derive(Parser)]
#[command(name = "mbsense", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file or preset and write CSV outputs.
    Run {
        /// Scenario file (TOML) or preset name.
        scenario: String,
        /// Comma-separated method names.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// List built-in presets.
    ListPresets,
    /// Check a scenario; exits nonzero when it is invalid.
    Validate { scenario: String },
    /// Write the measured CFR slices of trial 0 at one slot as CSV.
    DumpCfr {
        scenario: String,
        #[arg(long, default_value_t = 0)]
        slot: usize,
        /// Dump the slices after offset compensation.
        #[arg(long)]
        compensated: bool,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a preset as a scenario file.
    ExportPreset {
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(arg: &str) -> anyhow::Result<Scenario> {
    let path = Path::new(arg);
    if path.exists() {
        return Scenario::load(path).with_context(|| format!("reading {arg}"));
    }
    match presets::get(arg) {
        Ok(sc) => Ok(sc),
        Err(_) => bail!("'{arg}' is neither a scenario file nor a preset (see list-presets)"),
    }
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> anyhow::Result<()> {
    match out {
        Some(p) => std::fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => Ok(std::io::stdout().write_all(bytes)?),
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run {
            scenario,
            methods,
            trials,
            seed,
            out,
        } => {
            let opts = runner::RunOptions { methods, trials, seed };
            let sc = opts.apply(&load(&scenario)?);
            let report = runner::run_scenario(&sc)?;
            runner::write_outputs(&report, &out)?;
            for s in &report.summaries {
                let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
                println!(
                    "{:<14} snr {:>9}  rmse {:>8} m  frt {:>6}  detected {}/{}  failures {}",
                    s.method.name(),
                    s.condition.label(),
                    fmt(s.rmse_m),
                    fmt(s.frt),
                    s.detected,
                    s.targets,
                    s.failures
                );
            }
            println!("wrote {}", out.display());
        }
        Command::ListPresets => {
            for name in presets::names() {
                println!("{name:<18} {}", presets::describe(name).unwrap_or_default());
            }
        }
        Command::Validate { scenario } => {
            let sc = load(&scenario)?;
            let setup = sc.validate()?;
            println!(
                "{}: ok (K = {}, virtual {:.4} GHz, effective {:.4} GHz, {} subsystems, {} subbands)",
                sc.name,
                setup.plan.num_subcarriers(),
                setup.report.virtual_bandwidth / 1e9,
                setup.report.effective_bandwidth / 1e9,
                setup.subsystems.len(),
                setup.num_subbands()
            );
        }
        Command::DumpCfr {
            scenario,
            slot,
            compensated,
            out,
        } => {
            let sc = load(&scenario)?;
            let slices = runner::dump_slices(&sc, slot, compensated)?;
            let mut buf = Vec::new();
            write_slices_csv(&mut buf, &slices)?;
            emit(out.as_deref(), &buf)?;
        }
        Command::ExportPreset { name, out } => {
            let sc = presets::get(&name)?;
            emit(out.as_deref(), sc.to_toml_string()?.as_bytes())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MBSENSE_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
