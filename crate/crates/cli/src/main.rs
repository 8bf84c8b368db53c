//! `xref`: run, sweep and inspect cross-referencing test campaigns.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::warn;
use xref_core::config::parse_config;
use xref_core::engine::load_manifests;
use xref_core::scheduler::{build_hub, load_run, run_with_hub};
use xref_core::sweep::{sweep, Axis};
use xref_core::synthetic::Scenario;
use xref_core::{EngineDescriptor, Error, Result, RunConfig, RunReport};

/// Overrides `output_dir` from the configuration file.
const OUTPUT_DIR_ENV: &str = "XREF_OUTPUT_DIR";

#[derive(Parser)]
#[command(name = "xref", version, about = "Differential testing of speech recognizers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one campaign and write cases.jsonl, report.json and report.csv.
    Run {
        config: PathBuf,
        /// Directory of adapter manifests (*.json) registering external engines.
        #[arg(long)]
        adapters: Option<PathBuf>,
    },
    /// Re-run a configuration once per value of one parameter.
    Sweep {
        config: PathBuf,
        /// `visibility=4,12,40`, `estimator=none,builtin-nb`, `asrs=a,b;a,b,c` or `chunking`.
        #[arg(long)]
        axis: String,
        /// CSV destination; defaults to `<output_dir>/sweep-<axis>.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        adapters: Option<PathBuf>,
    },
    /// Print the table of a finished run directory.
    Report {
        run_dir: PathBuf,
        /// Print report.json instead of the table.
        #[arg(long)]
        json: bool,
    },
    /// Write a synthetic corpus and a matching config.json with simulated engines.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 500)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// ASR count, target included.
        #[arg(long, default_value_t = 4)]
        asrs: usize,
        #[arg(long, default_value_t = 0.2)]
        trigger_fraction: f64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, adapters } => cmd_run(&config, adapters.as_deref()),
        Command::Sweep {
            config,
            axis,
            out,
            adapters,
        } => cmd_sweep(&config, &axis, out.as_deref(), adapters.as_deref()),
        Command::Report { run_dir, json } => cmd_report(&run_dir, json),
        Command::Synth {
            out,
            size,
            seed,
            asrs,
            trigger_fraction,
        } => cmd_synth(&out, size, seed, asrs, trigger_fraction),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_config(path: &Path) -> Result<RunConfig> {
    let mut config = parse_config(path)?;
    if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV).filter(|d| !d.is_empty()) {
        config.output_dir = PathBuf::from(dir);
    }
    Ok(config)
}

fn adapters(dir: Option<&Path>) -> Result<Vec<EngineDescriptor>> {
    dir.map_or_else(|| Ok(Vec::new()), load_manifests)
}

fn cmd_run(config_path: &Path, adapter_dir: Option<&Path>) -> Result<()> {
    let config = load_config(config_path)?;
    let hub = build_hub(&config, &adapters(adapter_dir)?)?;
    let out = run_with_hub(&config, &hub)?;
    print_report(&out.report);
    println!("run directory: {}", out.run_dir.display());
    Ok(())
}

fn print_report(report: &RunReport) {
    if report.totals.cases_processed == 0 {
        warn!("no cases were processed");
        eprintln!("warning: no cases were processed");
    }
    print!("{}", report.render_table());
}

fn cmd_sweep(config_path: &Path, axis: &str, out: Option<&Path>, adapter_dir: Option<&Path>) -> Result<()> {
    let config = load_config(config_path)?;
    let axis: Axis = axis.parse()?;
    let hub = build_hub(&config, &adapters(adapter_dir)?)?;
    let csv_path = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| config.output_dir.join(format!("sweep-{}.csv", axis.name())));
    if let Some(parent) = csv_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    let mut writer = BufWriter::new(file);
    let result = sweep(
        &config,
        &axis,
        |cfg| {
            let out = run_with_hub(cfg, &hub)?;
            log::info!("setting done: {}", out.run_dir.display());
            Ok(out.report)
        },
        Some(&mut writer),
    );
    writer.flush().map_err(|e| Error::io(&csv_path, e))?;
    let report = result?;
    println!("{:>24} {:>12}", axis.name(), "total_failed");
    for row in &report.rows {
        println!("{:>24} {:>12}", row.setting, row.total_failed);
    }
    println!("sweep csv: {}", csv_path.display());
    Ok(())
}

fn cmd_report(run_dir: &Path, json: bool) -> Result<()> {
    let (report, _) = load_run(run_dir)?;
    if json {
        print!("{}", report.to_json());
    } else {
        print_report(&report);
    }
    Ok(())
}

fn cmd_synth(out: &Path, size: usize, seed: u64, asrs: usize, trigger_fraction: f64) -> Result<()> {
    if asrs < 2 {
        return Err(Error::config("asrs", "cross-referencing needs at least two ASRs"));
    }
    if size == 0 {
        return Err(Error::config("size", "must be positive"));
    }
    if !(0.0..=1.0).contains(&trigger_fraction) {
        return Err(Error::config("trigger_fraction", "must lie in [0, 1]"));
    }
    let scenario = Scenario {
        corpus_size: size,
        num_asrs: asrs,
        trigger_fraction,
        seed,
        ..Default::default()
    };
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let corpus_path = out.join("corpus.txt");
    let mut text = scenario.texts().join("\n");
    text.push('\n');
    std::fs::write(&corpus_path, text).map_err(|e| Error::io(&corpus_path, e))?;

    let mut config = scenario.config();
    config.corpus = PathBuf::from("corpus.txt");
    config.output_dir = PathBuf::from("out");
    let json = serde_json::to_string_pretty(&config).map_err(|e| Error::Internal(e.to_string()))?;
    let config_path = out.join("config.json");
    std::fs::write(&config_path, json + "\n").map_err(|e| Error::io(&config_path, e))?;
    println!("wrote {} and {}", corpus_path.display(), config_path.display());
    Ok(())
}
