use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use lincore::checks::{run_check, CRITERIA};
use lincore::experiments::{
    run_noise, run_rates, run_scaling, run_stability, run_train_seq, Manifest, NoiseConfig, OutputFile,
    RatesConfig, ScalingConfig, StabilityConfig, TrainSeqConfig,
};
use lincore::trainers::Objective;

/// Experiments and self-checks for linear-core surrogate losses.
#[derive(Debug, Parser)]
#[command(name = "lincore", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Seed for every random draw of the run (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for CSV, JSON and manifest output.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// JSON file with overrides of the command's default configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Biased-coin excess curves and their log-log slopes.
    Rates,
    /// Rate slopes across core widths.
    Stability,
    /// Per-update wall-clock time against label-set size.
    Scaling,
    /// Train a chain model and write its history.
    TrainSeq(TrainSeqArgs),
    /// Linear classifiers under instance-dependent label noise.
    Noise,
    /// Run the acceptance criteria.
    Selftest(SelftestArgs),
}

#[derive(Debug, Args)]
struct TrainSeqArgs {
    #[arg(long)]
    objective: Option<Objective>,
    /// Label-set size.
    #[arg(long = "Y")]
    labels: Option<usize>,
    /// Sequence length.
    #[arg(long = "L")]
    len: Option<usize>,
}

#[derive(Debug, Args)]
struct SelftestArgs {
    /// Comma-separated criterion numbers; all of them by default.
    #[arg(long, value_delimiter = ',')]
    criteria: Vec<u8>,
}

enum Failure {
    Usage(String),
    Run(String),
}

impl From<lincore::Error> for Failure {
    fn from(e: lincore::Error) -> Self {
        Failure::Run(e.to_string())
    }
}

trait Seeded {
    fn seed_mut(&mut self) -> &mut u64;
}

macro_rules! seeded {
    ($($t:ty),*) => {$(
        impl Seeded for $t {
            fn seed_mut(&mut self) -> &mut u64 {
                &mut self.seed
            }
        }
    )*};
}

seeded!(RatesConfig, StabilityConfig, ScalingConfig, TrainSeqConfig, NoiseConfig);

fn load_config<C: DeserializeOwned + Default + Seeded>(global: &Global) -> Result<C, Failure> {
    let mut config = match &global.config {
        None => C::default(),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| Failure::Usage(format!("invalid config {}: {e}", path.display())))?
        }
    };
    if let Some(seed) = global.seed {
        *config.seed_mut() = seed;
    }
    Ok(config)
}

fn prepare_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Run(format!("cannot create {}: {e}", dir.display())))
}

/// Runs one experiment and writes its outputs plus a manifest.
fn experiment<C, R>(
    name: &str,
    global: &Global,
    config: C,
    run: impl FnOnce(&C) -> lincore::Result<R>,
    write: impl FnOnce(&R, &Path) -> lincore::Result<Vec<OutputFile>>,
) -> Result<(), Failure>
where
    C: Serialize + Seeded,
{
    let mut config = config;
    let seed = *config.seed_mut();
    prepare_dir(&global.out_dir)?;
    let mut manifest = Manifest::new(name, seed, &config)?;
    let start = Instant::now();
    let report = run(&config)?;
    manifest.timings.insert("run".into(), start.elapsed().as_secs_f64());
    let start = Instant::now();
    manifest.outputs = write(&report, &global.out_dir)?;
    manifest.timings.insert("write".into(), start.elapsed().as_secs_f64());
    manifest.write(&global.out_dir)?;
    for out in &manifest.outputs {
        println!("wrote {}", global.out_dir.join(&out.name).display());
    }
    Ok(())
}

fn selftest(global: &Global, args: &SelftestArgs) -> Result<(), Failure> {
    let ids: Vec<u8> = if args.criteria.is_empty() {
        CRITERIA.iter().map(|(id, _)| *id).collect()
    } else {
        args.criteria.clone()
    };
    if let Some(bad) = ids.iter().find(|id| !CRITERIA.iter().any(|(c, _)| c == *id)) {
        return Err(Failure::Usage(format!("no criterion {bad}; valid numbers are 1 to {}", CRITERIA.len())));
    }
    prepare_dir(&global.out_dir)?;
    let mut manifest = Manifest::new("selftest", global.seed.unwrap_or(0), &serde_json::json!({ "criteria": ids }))?;
    let mut results = Vec::new();
    let mut failed = Vec::new();
    for id in ids {
        let outcome = run_check(id);
        println!("{outcome}");
        manifest.timings.insert(format!("criterion_{id}"), outcome.seconds);
        if !outcome.passed {
            failed.push(id);
        }
        results.push(serde_json::json!({
            "id": outcome.id,
            "name": outcome.name,
            "passed": outcome.passed,
            "detail": outcome.detail,
        }));
    }
    let text = serde_json::to_string_pretty(&results).map_err(|e| Failure::Run(e.to_string()))?;
    std::fs::write(global.out_dir.join("selftest.json"), text + "\n")
        .map_err(|e| Failure::Run(e.to_string()))?;
    manifest.outputs = vec![OutputFile::new("selftest.json")];
    manifest.write(&global.out_dir)?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Run(format!("failing criteria: {failed:?}")))
    }
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    let g = &cli.global;
    match &cli.command {
        Command::Rates => experiment("rates", g, load_config::<RatesConfig>(g)?, run_rates, |r, d| r.write(d)),
        Command::Stability => experiment(
            "stability",
            g,
            load_config::<StabilityConfig>(g)?,
            run_stability,
            |r, d| r.write(d),
        ),
        Command::Scaling => experiment(
            "scaling",
            g,
            load_config::<ScalingConfig>(g)?,
            run_scaling,
            |r, d| r.write(d),
        ),
        Command::TrainSeq(args) => {
            let mut config = load_config::<TrainSeqConfig>(g)?;
            if let Some(objective) = args.objective {
                config.objective = objective;
            }
            if let Some(labels) = args.labels {
                config.labels = labels;
            }
            if let Some(len) = args.len {
                config.len = len;
            }
            experiment("train-seq", g, config, run_train_seq, |r, d| r.write(d))
        }
        Command::Noise => experiment("noise", g, load_config::<NoiseConfig>(g)?, run_noise, |r, d| r.write(d)),
        Command::Selftest(args) => selftest(g, args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
