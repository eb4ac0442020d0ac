use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use coenet::config::{GeneratorConfigFile, RunConfig};
use coenet::export::{from_graph_json, write_edge_csv, write_graphml, GraphJson};
use coenet::ingest::{write_enrolments, write_students};
use coenet::pipeline::run_pipeline;
use coenet_core::synth::generate_synthetic;

/// Co-enrolment network analysis: synthetic cohorts, RCP-normalized
/// standard networks, community detection, and sub-population entropy.
#[derive(Parser)]
#[command(name = "coenet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort (enrolments.csv, students.csv, ground truth).
    Generate {
        /// Generator config (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Generation seed.
        #[arg(long)]
        seed: u64,
        /// Output directory (default: current directory).
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run the full pipeline described by a run config.
    Run {
        /// Run config (TOML).
        #[arg(long)]
        config: PathBuf,
    },
    /// Re-export one slice's pruned network from a finished run.
    Export {
        /// Output directory of a previous `coenet run`.
        #[arg(long)]
        run_dir: PathBuf,
        /// Slice id to export.
        #[arg(long)]
        slice: String,
        #[arg(long, value_enum)]
        format: ExportFormat,
        /// Destination file (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ExportFormat {
    Graphml,
    EdgeCsv,
    Json,
}

fn generate(config: &Path, seed: u64, out: &Path) -> Result<()> {
    let file = GeneratorConfigFile::load(config).map_err(|e| anyhow!("{e}"))?;
    let generator = file.to_generator_config().map_err(|e| anyhow!("{e}"))?;
    let cohort = generate_synthetic(&generator, seed).map_err(|e| anyhow!("{e}"))?;

    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut enrolments = Vec::new();
    write_enrolments(&mut enrolments, &cohort.records)?;
    fs::write(out.join("enrolments.csv"), enrolments)?;
    let mut students = Vec::new();
    write_students(&mut students, &cohort.students)?;
    fs::write(out.join("students.csv"), students)?;

    // Planted assignments, for checking recovered structure downstream.
    let truth = serde_json::json!({
        "standard_blocks": cohort.standard_blocks,
        "student_groups": cohort.student_groups,
    });
    fs::write(
        out.join("ground_truth.json"),
        serde_json::to_vec_pretty(&truth)?,
    )?;
    eprintln!(
        "generated {} enrolments for {} students into {}",
        cohort.records.len(),
        cohort.students.len(),
        out.display()
    );
    Ok(())
}

fn export(run_dir: &Path, slice: &str, format: ExportFormat, out: Option<&Path>) -> Result<()> {
    let source = run_dir.join(format!("{slice}.rcp.graph.json"));
    let text = fs::read_to_string(&source)
        .with_context(|| format!("reading {} (was the slice skipped?)", source.display()))?;
    let json: GraphJson = serde_json::from_str(&text)?;
    let (graph, partition) = from_graph_json(&json)?;

    let mut buf = Vec::new();
    match format {
        ExportFormat::Graphml => write_graphml(&mut buf, &graph, partition.as_ref())?,
        ExportFormat::EdgeCsv => write_edge_csv(&mut buf, &graph)?,
        ExportFormat::Json => buf = text.into_bytes(),
    }
    match out {
        Some(path) => fs::write(path, buf).with_context(|| format!("writing {}", path.display()))?,
        None => {
            use std::io::Write;
            std::io::stdout().write_all(&buf)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Generate { config, seed, out } => match generate(&config, seed, &out) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::from(2)
            }
        },
        Command::Run { config } => {
            let (run_config, text) = match RunConfig::load(&config) {
                Ok(loaded) => loaded,
                Err(errors) => {
                    eprintln!("invalid config:");
                    for line in &errors.errors {
                        eprintln!("  {line}");
                    }
                    return ExitCode::from(2);
                }
            };
            match run_pipeline(&run_config, &text) {
                Ok(outcome) => {
                    for warning in &outcome.manifest.warnings {
                        eprintln!("warning: {warning}");
                    }
                    eprintln!(
                        "wrote {} artifact(s) to {}",
                        outcome.manifest.artifacts.len(),
                        outcome.output_dir.display()
                    );
                    if outcome.failed_slices.is_empty() {
                        ExitCode::SUCCESS
                    } else {
                        eprintln!("failed slices: {}", outcome.failed_slices.join(", "));
                        ExitCode::from(1)
                    }
                }
                Err(e) => {
                    eprintln!("error: {e:#}");
                    ExitCode::from(1)
                }
            }
        }
        Command::Export {
            run_dir,
            slice,
            format,
            out,
        } => match export(&run_dir, &slice, format, out.as_deref()) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::from(1)
            }
        },
    }
}
