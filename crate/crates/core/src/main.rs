use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hybrist::experiment::{parse_config_with_preset, run_experiment, ExperimentSpec, Preset};
use hybrist::mobility::{export_trace, run_mobility, MobilityConfig, TraceFormat};
use hybrist::road::{build_topology, validate_network};

#[derive(Parser)]
#[command(
    name = "hybrist",
    version,
    about = "Vehicular mobility and ad hoc network co-simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full mobility and network sweep and write CSV results.
    Run {
        config: PathBuf,
        #[arg(long)]
        preset: Option<Preset>,
        /// Worker threads; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Output directory, overriding `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export mobility traces only, one file per model, fleet size and seed.
    Trace {
        config: PathBuf,
        #[arg(long)]
        format: TraceFormat,
        #[arg(long)]
        preset: Option<Preset>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config and the road networks it builds.
    Validate {
        config: PathBuf,
        #[arg(long)]
        preset: Option<Preset>,
    },
}

fn load(path: &Path, preset: Option<Preset>) -> Result<ExperimentSpec, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_config_with_preset(&text, preset).map_err(|e| format!("{}: {e}", path.display()))
}

fn run(
    config: &Path,
    preset: Option<Preset>,
    jobs: usize,
    out: Option<PathBuf>,
) -> Result<bool, String> {
    let mut spec = load(config, preset)?;
    if let Some(dir) = out {
        spec.output_dir = dir;
    }
    let outcome = run_experiment(&spec, jobs).map_err(|e| e.to_string())?;
    let failed = outcome.rows.iter().filter(|r| r.outcome.is_err()).count();
    for f in &outcome.files {
        println!("{}", f.display());
    }
    eprintln!("{} runs, {} failed", outcome.rows.len(), failed);
    Ok(failed == 0)
}

fn trace(
    config: &Path,
    format: TraceFormat,
    preset: Option<Preset>,
    out: Option<PathBuf>,
) -> Result<bool, String> {
    let spec = load(config, preset)?;
    let dir = out.unwrap_or_else(|| spec.output_dir.clone());
    fs::create_dir_all(&dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    let ext = match format {
        TraceFormat::Ns2Movement => "tcl",
        TraceFormat::NativeCsv => "csv",
    };
    for &model in &spec.models {
        let net = build_topology(&spec.topology, model).map_err(|e| e.to_string())?;
        for &vehicles in &spec.vehicle_counts {
            for &seed in &spec.seeds {
                let cfg = MobilityConfig {
                    vehicle_count: vehicles,
                    seed,
                    ..spec.mobility.clone()
                };
                let trace =
                    run_mobility(&net, &cfg).map_err(|e| format!("{model} seed {seed}: {e}"))?;
                let path = dir.join(format!(
                    "{}_{vehicles}v_seed{seed}.{ext}",
                    model.as_str().to_lowercase()
                ));
                fs::write(&path, export_trace(&trace, format))
                    .map_err(|e| format!("{}: {e}", path.display()))?;
                println!("{}", path.display());
            }
        }
    }
    Ok(true)
}

fn validate(config: &Path, preset: Option<Preset>) -> Result<bool, String> {
    let spec = load(config, preset)?;
    let mut ok = true;
    for &model in &spec.models {
        let net = build_topology(&spec.topology, model).map_err(|e| format!("{model}: {e}"))?;
        let violations = validate_network(&net);
        if violations.is_empty() {
            println!(
                "{model}: {} nodes, {} edges, {} stations",
                net.nodes().len(),
                net.edges().len(),
                net.stations().len()
            );
        } else {
            ok = false;
            for v in violations {
                println!("{model}: {v:?}");
            }
        }
    }
    println!("{} sweep points", spec.point_count());
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            preset,
            jobs,
            out,
        } => run(&config, preset, jobs, out),
        Command::Trace {
            config,
            format,
            preset,
            out,
        } => trace(&config, format, preset, out),
        Command::Validate { config, preset } => validate(&config, preset),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
