use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use hamflow_cli::commands::{cmd_eval, cmd_gen, cmd_infer, cmd_predict, cmd_train};
use hamflow_cli::config::RunConfig;
use hamflow_cli::repro::{run_repro, Figure, ReproOptions, ReproScale};
use hamflow_cli::{selftest, CliError, CliResult};
use hamflow_core::io::read_json;
use hamflow_core::neural::Direction;
use hamflow_core::pipeline::Split;

#[derive(Parser)]
#[command(name = "hamflow", version, about = "Driven spin-system simulation and bidirectional sequence models")]
struct Cli {
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum DirectionArg {
    Dynamics,
    Hamiltonian,
}

impl From<DirectionArg> for Direction {
    fn from(d: DirectionArg) -> Self {
        match d {
            DirectionArg::Dynamics => Direction::Dynamics,
            DirectionArg::Hamiltonian => Direction::Hamiltonian,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Validation,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Validation => Split::Validation,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset.
    Gen {
        #[arg(long)]
        config: PathBuf,
        /// Overrides HAMFLOW_SEED and the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides paths.data_dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one direction on a generated dataset.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        direction: DirectionArg,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue an interrupted run from its last completed epoch.
        #[arg(long)]
        resume: bool,
        /// Serial gradient reduction.
        #[arg(long)]
        deterministic: bool,
    },
    /// Predict observables from field CSVs (`t,B`, physical units).
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// One CSV per driving field, in the system's field order.
        #[arg(long = "field", required = true)]
        fields: Vec<PathBuf>,
        /// Initial Bloch vector `x,y,z`; give one to repeat it on every site.
        #[arg(long = "initial", allow_hyphen_values = true)]
        initial: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Infer driving fields from an observable CSV.
    Infer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        observables: PathBuf,
        #[arg(long = "initial", allow_hyphen_values = true)]
        initial: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a model on a dataset split.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        #[arg(long)]
        allow_train_split: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reproduce a figure at desk scale.
    Repro {
        #[arg(value_enum)]
        figure: Figure,
        #[arg(long, default_value = "repro")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// JSON file replacing the desk-scale data and training sizes.
        #[arg(long)]
        scale: Option<PathBuf>,
        #[arg(long)]
        deterministic: bool,
    },
    /// Run the simulator, sampler and gradient oracle suites.
    Selftest,
}

fn load_config(path: &Path, seed: Option<u64>) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    cfg.apply_seed(seed)?;
    Ok(cfg)
}

fn env_seed() -> CliResult<Option<u64>> {
    match std::env::var(hamflow_cli::config::SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("HAMFLOW_SEED must be an unsigned integer, got {v:?}"))),
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .map_err(|e| CliError::Usage(format!("--jobs: {e}")))?;
    }
    match cli.command {
        Command::Gen { config, seed, out } => {
            let mut cfg = load_config(&config, seed)?;
            if let Some(out) = out {
                cfg.paths.data_dir = out;
            }
            let g = cmd_gen(&cfg)?;
            println!("manifest {}", g.manifest.content_hash);
            println!("records {}", g.manifest.record_count);
        }
        Command::Train { config, direction, seed, data, out, resume, deterministic } => {
            let mut cfg = load_config(&config, seed)?;
            if let Some(d) = data {
                cfg.paths.data_dir = d;
            }
            if let Some(o) = out {
                cfg.paths.out_dir = o;
            }
            let a = cmd_train(&cfg, direction.into(), resume, deterministic)?;
            println!("manifest {}", a.manifest_hash);
            println!("best_epoch {}", a.best_epoch);
        }
        Command::Predict { model, fields, initial, out } => {
            let s = cmd_predict(&model, &fields, &initial, &out)?;
            println!("points {}", s.len());
        }
        Command::Infer { model, observables, initial, out } => {
            let r = cmd_infer(&model, &observables, &initial, &out)?;
            println!("closed_loop_mse {:e}", r.closed_loop_mse);
        }
        Command::Eval { model, data, split, allow_train_split, out } => {
            let r = cmd_eval(&model, &data, split.into(), allow_train_split, &out)?;
            println!("train_window_mse {:e}", r.train_window_mse);
            if let Some(e) = r.extrapolation_window_mse {
                println!("extrapolation_window_mse {e:e}");
            }
        }
        Command::Repro { figure, out, seed, scale, deterministic } => {
            let scale = match scale {
                Some(p) => read_json::<ReproScale>(&p).map_err(|e| CliError::Config {
                    path: p.clone(),
                    key: "(root)".into(),
                    message: e.to_string(),
                })?,
                None => ReproScale::desk(figure),
            };
            let seed = match seed {
                Some(s) => s,
                None => env_seed()?.unwrap_or(0),
            };
            let opts = ReproOptions { out_dir: out, seed, deterministic, scale };
            let summary = run_repro(figure, &opts)?;
            for c in &summary.criteria {
                let tag = if c.passed { "PASS" } else { "FAIL" };
                println!("[{tag}] criterion {} {}: {:e} {} {:e}", c.id, c.name, c.value, c.comparison, c.threshold);
            }
            summary.check()?;
        }
        Command::Selftest => {
            let results = selftest::run_all();
            for r in &results {
                println!("{}", r.line());
            }
            let failed: Vec<String> = results.iter().filter(|r| !r.passed).map(|r| r.id.to_string()).collect();
            if !failed.is_empty() {
                return Err(CliError::Acceptance(format!("criteria {} failed", failed.join(", "))));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
