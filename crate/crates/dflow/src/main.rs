//! `dflow` command line: config-driven experiment runs plus flag
//! equivalents for the individual tasks.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use dflow::config::{
    CheckKind, ExperimentConfig, FieldSpec, SamplerSpec, TaskSpec,
};
use dflow::forms::{BProfile, FunctionalSpec};
use dflow::runner::{self, RunOptions, EXIT_CONFIG_ERROR};
use dflow::space::FiniteSpace;

#[derive(Parser)]
#[command(
    name = "dflow",
    about = "Nonlinear Dirichlet forms on finite graphs: flows, domination checks, capacity, reconstruction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonRunArgs {
    /// output directory for report files
    #[arg(long)]
    out: Option<PathBuf>,
    /// base seed override (also via DFLOW_SEED)
    #[arg(long)]
    seed: Option<u64>,
    /// worker thread count
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct SingleTaskArgs {
    /// space description file (JSON)
    #[arg(long)]
    space: PathBuf,
    #[command(flatten)]
    common: CommonRunArgs,
}

#[derive(Subcommand)]
enum Command {
    /// Run every task of a config file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: CommonRunArgs,
    },
    /// Run one inequality checker.
    Check {
        #[command(flatten)]
        single: SingleTaskArgs,
        /// functional spec: inline JSON or @file.json
        #[arg(long)]
        functional: String,
        /// reference form for barthelemy / base for cone_monotone
        #[arg(long)]
        base: Option<String>,
        #[arg(long, value_enum)]
        check: CheckArg,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// comma-separated alpha sweep for alpha_truncation
        #[arg(long)]
        alphas: Option<String>,
    },
    /// Evolve a gradient flow.
    Evolve {
        #[command(flatten)]
        single: SingleTaskArgs,
        #[arg(long)]
        functional: String,
        /// initial field: inline JSON FieldSpec or @file.json
        #[arg(long)]
        initial: String,
        #[arg(long)]
        t_end: f64,
        #[arg(long)]
        steps: usize,
        #[arg(long, default_value_t = 1e-11)]
        tol: f64,
        #[arg(long)]
        expect_ratio: Option<f64>,
        #[arg(long)]
        ratio_tol: Option<f64>,
        /// write the trajectory as CSV next to the report
        #[arg(long)]
        export_csv: bool,
    },
    /// Norm-capacity of a vertex set.
    Capacity {
        #[command(flatten)]
        single: SingleTaskArgs,
        #[arg(long)]
        functional: String,
        /// comma-separated vertex indices
        #[arg(long)]
        set: String,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long)]
        expected_value: Option<f64>,
    },
    /// Reconstruct a perturbation integrand from evaluations.
    Reconstruct {
        #[command(flatten)]
        single: SingleTaskArgs,
        /// profile spec: inline JSON or @file.json
        #[arg(long)]
        profile: String,
        /// comma-separated per-vertex measure weights
        #[arg(long)]
        mu: String,
        /// target fields: inline JSON array of FieldSpec or @file.json
        #[arg(long)]
        targets: String,
        #[arg(long, default_value_t = 20)]
        ladder_depth: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Two-sided sandwich ordering along trajectories.
    Sandwich {
        #[command(flatten)]
        single: SingleTaskArgs,
        #[arg(long)]
        neumann: String,
        #[arg(long)]
        robin: String,
        #[arg(long)]
        dirichlet: String,
        #[arg(long)]
        initial: String,
        #[arg(long)]
        t_end: f64,
        #[arg(long)]
        steps: usize,
        #[arg(long, default_value_t = 1e-11)]
        prox_tol: f64,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
}

#[derive(clap::ValueEnum, Clone, Copy)]
enum CheckArg {
    Submodular,
    AlphaTruncation,
    Barthelemy,
    Locality,
    ConeMonotone,
    AbsInequality,
}

impl From<CheckArg> for CheckKind {
    fn from(value: CheckArg) -> Self {
        match value {
            CheckArg::Submodular => CheckKind::Submodular,
            CheckArg::AlphaTruncation => CheckKind::AlphaTruncation,
            CheckArg::Barthelemy => CheckKind::Barthelemy,
            CheckArg::Locality => CheckKind::Locality,
            CheckArg::ConeMonotone => CheckKind::ConeMonotone,
            CheckArg::AbsInequality => CheckKind::AbsInequality,
        }
    }
}

/// Inline JSON, or `@path` to read it from a file.
fn json_arg<T: serde::de::DeserializeOwned>(arg: &str) -> Result<T, String> {
    let text = if let Some(path) = arg.strip_prefix('@') {
        std::fs::read_to_string(path).map_err(|e| format!("cannot read {path}: {e}"))?
    } else {
        arg.to_string()
    };
    serde_json::from_str(&text).map_err(|e| format!("invalid JSON argument: {e}"))
}

fn comma_list<T: std::str::FromStr>(arg: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    arg.split(',')
        .filter(|s| !s.is_empty())
        .map(|s| s.trim().parse::<T>().map_err(|e| e.to_string()))
        .collect()
}

fn load_space(path: &std::path::Path) -> Result<Arc<FiniteSpace>, String> {
    FiniteSpace::load(path).map_err(|e| format!("cannot load space: {e}"))
}

fn options(common: &CommonRunArgs) -> RunOptions {
    RunOptions {
        output_dir: common.out.clone(),
        seed: common.seed,
        workers: common.workers,
    }
}

fn single_task(
    single: &SingleTaskArgs,
    functionals: BTreeMap<String, FunctionalSpec>,
    task: TaskSpec,
) -> i32 {
    match load_space(&single.space) {
        Ok(space) => runner::run_single(space, functionals, task, &options(&single.common)),
        Err(message) => {
            eprintln!("configuration error: {message}");
            EXIT_CONFIG_ERROR
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32, String> {
    match cli.command {
        Command::Run { config, common } => match ExperimentConfig::load(&config) {
            Ok(experiment) => Ok(runner::run(&experiment, &options(&common))),
            Err(e) => {
                eprintln!("configuration error: {e}");
                Ok(EXIT_CONFIG_ERROR)
            }
        },
        Command::Check {
            single,
            functional,
            base,
            check,
            samples,
            tol,
            alphas,
        } => {
            let f_spec: FunctionalSpec = json_arg(&functional)?;
            let mut functionals = BTreeMap::new();
            functionals.insert("f".to_string(), f_spec);
            let base_name = match base {
                Some(b) => {
                    functionals.insert("base".to_string(), json_arg(&b)?);
                    Some("base".to_string())
                }
                None => None,
            };
            let alphas = alphas.map(|a| comma_list::<f64>(&a)).transpose()?;
            let task = TaskSpec::Check {
                name: "check".to_string(),
                check: check.into(),
                functional: "f".to_string(),
                base: base_name,
                sampler: SamplerSpec {
                    seed: single.common.seed,
                    count: samples,
                    kind: None,
                },
                alphas,
                tol,
            };
            Ok(single_task(&single, functionals, task))
        }
        Command::Evolve {
            single,
            functional,
            initial,
            t_end,
            steps,
            tol,
            expect_ratio,
            ratio_tol,
            export_csv,
        } => {
            let f_spec: FunctionalSpec = json_arg(&functional)?;
            let initial: FieldSpec = json_arg(&initial)?;
            let mut functionals = BTreeMap::new();
            functionals.insert("f".to_string(), f_spec);
            let task = TaskSpec::Evolve {
                name: "evolve".to_string(),
                functional: "f".to_string(),
                initial,
                t_end,
                steps,
                tol,
                expect_ratio,
                ratio_tol,
                export_csv,
            };
            Ok(single_task(&single, functionals, task))
        }
        Command::Capacity {
            single,
            functional,
            set,
            tol,
            expected_value,
        } => {
            let f_spec: FunctionalSpec = json_arg(&functional)?;
            let set = comma_list::<usize>(&set)?;
            let mut functionals = BTreeMap::new();
            functionals.insert("f".to_string(), f_spec);
            let task = TaskSpec::Capacity {
                name: "capacity".to_string(),
                functional: "f".to_string(),
                set,
                tol,
                expected_value,
                value_tol: None,
            };
            Ok(single_task(&single, functionals, task))
        }
        Command::Reconstruct {
            single,
            profile,
            mu,
            targets,
            ladder_depth,
            tol,
        } => {
            let profile: BProfile = json_arg(&profile)?;
            let mu = comma_list::<f64>(&mu)?;
            let targets: Vec<FieldSpec> = json_arg(&targets)?;
            let task = TaskSpec::Reconstruct {
                name: "reconstruct".to_string(),
                profile,
                mu,
                targets,
                ladder_depth,
                tol,
            };
            Ok(single_task(&single, BTreeMap::new(), task))
        }
        Command::Sandwich {
            single,
            neumann,
            robin,
            dirichlet,
            initial,
            t_end,
            steps,
            prox_tol,
            tol,
        } => {
            let mut functionals = BTreeMap::new();
            functionals.insert("neumann".to_string(), json_arg(&neumann)?);
            functionals.insert("robin".to_string(), json_arg(&robin)?);
            functionals.insert("dirichlet".to_string(), json_arg(&dirichlet)?);
            let initial: FieldSpec = json_arg(&initial)?;
            let task = TaskSpec::Sandwich {
                name: "sandwich".to_string(),
                neumann: "neumann".to_string(),
                robin: "robin".to_string(),
                dirichlet: "dirichlet".to_string(),
                initial,
                t_end,
                steps,
                prox_tol,
                tol,
            };
            Ok(single_task(&single, functionals, task))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(message) => {
            eprintln!("configuration error: {message}");
            ExitCode::from(EXIT_CONFIG_ERROR as u8)
        }
    }
}
