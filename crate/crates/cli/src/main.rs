use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tamperid::harness::{
    example1_suite, example2_suite, example3_suite, run_experiment, write_outputs, ConfigMap, ExperimentConfig, Preset,
};
use tamperid::Error;

/// Configuration problems: unknown keys, bad values, unreadable files.
const EXIT_CONFIG: u8 = 2;
/// Some replicas failed; outputs were written from the rest.
const EXIT_PARTIAL: u8 = 3;
const EXIT_RUNTIME: u8 = 1;

#[derive(Parser)]
#[command(name = "tamperid", version, about = "Identification from tampered binary observations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Gradient estimator, known and unknown flip probabilities.
    Example1(Common),
    /// Newton estimator with a decaying input variance.
    Example2(Common),
    /// Adaptive tracking with the Newton estimator.
    Example3(Common),
    /// Run a single experiment from a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Check a config file and print the resolved settings.
    Validate {
        #[arg(long)]
        config: PathBuf,
        /// Override `key=value`; may be repeated.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
}

#[derive(Args)]
struct Common {
    /// Override `key=value`; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    replicas: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write a gnuplot script next to each CSV.
    #[arg(long)]
    emit_gnuplot: bool,
}

struct Failure {
    code: u8,
    line: String,
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        let code = match err {
            Error::InvalidParameter { .. } | Error::Config(_) | Error::Degenerate { .. } => EXIT_CONFIG,
            _ => EXIT_RUNTIME,
        };
        let line = match err.key() {
            Some(key) => format!("error key={key}: {err}"),
            None => format!("error: {err}"),
        };
        Failure { code, line }
    }
}

fn read_config(path: &PathBuf) -> Result<ConfigMap, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure {
        code: EXIT_CONFIG,
        line: format!("error file={}: {e}", path.display()),
    })?;
    Ok(ConfigMap::parse(&text)?)
}

fn apply_common(map: &mut ConfigMap, common: &Common) -> Result<(), Failure> {
    if let Some(n) = common.replicas {
        map.set("experiment.replicas", &n.to_string())?;
    }
    if let Some(s) = common.seed {
        map.set("seeds.base", &s.to_string())?;
    }
    for assignment in &common.set {
        map.apply_override(assignment)?;
    }
    Ok(())
}

fn run_presets(presets: Vec<Preset>, common: &Common) -> Result<(), Failure> {
    // validate everything before spending time on any run
    let mut configs = Vec::with_capacity(presets.len());
    for mut preset in presets {
        apply_common(&mut preset.config, common)?;
        configs.push((preset.name, ExperimentConfig::from_map(&preset.config)?));
    }
    let mut partial = Vec::new();
    for (name, cfg) in configs {
        let result = run_experiment(&cfg)?;
        let files = write_outputs(&result, &common.out, &name, common.emit_gnuplot)?;
        println!(
            "{name}: {} replicas, {} failed, {:.1}s -> {}",
            result.series.replicas,
            result.failures.len(),
            result.wall_time.as_secs_f64(),
            files.csv.display()
        );
        if !result.is_complete() {
            partial.push(name);
        }
    }
    if partial.is_empty() {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_PARTIAL,
            line: format!("error partial={}: some replicas failed, see the manifest", partial.join(",")),
        })
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Example1(common) => run_presets(example1_suite(), &common),
        Command::Example2(common) => run_presets(example2_suite(), &common),
        Command::Example3(common) => run_presets(example3_suite(), &common),
        Command::Run { config, common } => {
            let map = read_config(&config)?;
            let name = config
                .file_stem()
                .map_or_else(|| "run".to_string(), |s| s.to_string_lossy().into_owned());
            run_presets(vec![Preset { name, config: map }], &common)
        }
        Command::Validate { config, set } => {
            let mut map = read_config(&config)?;
            for assignment in &set {
                map.apply_override(assignment)?;
            }
            ExperimentConfig::from_map(&map)?;
            print!("{}", map.to_text());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.line);
            ExitCode::from(f.code)
        }
    }
}
