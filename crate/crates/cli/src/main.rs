use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use qkd_tha_cli::{execute, write_csv, Document, Plan, Preset};

/// Finite-key rates of decoy-state QKD under Trojan-horse leakage.
#[derive(Parser)]
#[command(name = "qkd-tha", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep every variant of a scenario over its distances and write CSV.
    Run {
        /// Scenario file; overlays the preset when both are given.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output CSV, `-` for stdout.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        /// Worker threads; defaults to one per core.
        #[arg(long, env = "THA_QKD_THREADS")]
        threads: Option<usize>,
    },
    /// Print a bundled scenario file.
    Preset {
        #[arg(value_enum)]
        name: Preset,
    },
}

const CONFIG_ERROR: u8 = 1;
const PIPELINE_ERROR: u8 = 2;

fn load(config: Option<&Path>, preset: Option<Preset>) -> Result<Plan> {
    let mut doc = match preset {
        Some(p) => Document::parse(p.text()).with_context(|| format!("preset {}", p.name()))?,
        None => Document::default(),
    };
    match config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            doc = doc.merge(Document::parse(&text).with_context(|| path.display().to_string())?);
        }
        None if preset.is_none() => bail!("give --config, --preset or both"),
        None => {}
    }
    Plan::from_document(&doc)
}

fn output(path: &Path) -> Result<Box<dyn Write>> {
    if path == Path::new("-") {
        return Ok(Box::new(io::stdout().lock()));
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(Box::new(BufWriter::new(f)))
}

fn run(
    config: Option<&Path>,
    out: &Path,
    preset: Option<Preset>,
    threads: Option<usize>,
) -> Result<ExitCode, (u8, anyhow::Error)> {
    let plan = load(config, preset).map_err(|e| (CONFIG_ERROR, e))?;
    if let Some(n) = threads {
        if n == 0 {
            return Err((CONFIG_ERROR, anyhow::anyhow!("--threads must be at least 1")));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| (PIPELINE_ERROR, e.into()))?;
    }
    let sink = output(out).map_err(|e| (PIPELINE_ERROR, e))?;
    for line in qkd_tha_cli::run::budget_lines(&plan) {
        eprintln!("budget {line}");
    }
    let start = Instant::now();
    let rows = execute(&plan);
    write_csv(&rows, sink).map_err(|e| (PIPELINE_ERROR, e))?;
    let failed: Vec<_> = rows.iter().filter_map(|r| r.outcome.as_ref().err().map(|e| (r, e))).collect();
    for (r, e) in &failed {
        eprintln!("error {} at {} km: {e}", r.variant, r.distance_km);
    }
    eprintln!(
        "wrote {} rows ({} variants x {} distances) in {:.2} s",
        rows.len(),
        plan.variants.len(),
        plan.distances_km.len(),
        start.elapsed().as_secs_f64()
    );
    Ok(if failed.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(PIPELINE_ERROR) })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(CONFIG_ERROR) } else { ExitCode::SUCCESS };
        }
    };
    match cli.command {
        Command::Preset { name } => {
            print!("{}", name.text());
            ExitCode::SUCCESS
        }
        Command::Run { config, out, preset, threads } => match run(config.as_deref(), &out, preset, threads) {
            Ok(code) => code,
            Err((code, e)) => {
                eprintln!("error: {e:#}");
                ExitCode::from(code)
            }
        },
    }
}
