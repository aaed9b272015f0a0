//! Task execution: run an [`Experiment`], write one JSON report per task,
//! print a summary table, and map the outcome to an exit code.
//!
//! Exit code contract: `0` all checks pass, `1` at least one check failed
//! its tolerance, `2` configuration error (decided before this module
//! runs), `3` solver failure.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::capacity;
use crate::config::{CheckKind, Experiment, FieldSpec, TaskSpec};
use crate::forms::{BProfile, FunctionalSpec, VertexMeasure};
use crate::properties;
use crate::rieszmarkov::{self, Dictionary, SignedPsi};
use crate::semigroup::{self, spec_hash, Trajectory};
use crate::space::{Field, FiniteSpace, VertexSet};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG_ERROR: i32 = 2;
pub const EXIT_SOLVER_FAILURE: i32 = 3;

#[derive(Debug, Clone, Serialize)]
pub struct TaskOutcome {
    pub name: String,
    pub kind: &'static str,
    pub pass: bool,
    pub solver_failure: bool,
    pub summary: String,
    pub report: serde_json::Value,
}

impl TaskOutcome {
    fn failed_solver(name: &str, kind: &'static str, message: String) -> TaskOutcome {
        TaskOutcome {
            name: name.to_string(),
            kind,
            pass: false,
            solver_failure: true,
            summary: message.clone(),
            report: json!({ "error": message }),
        }
    }
}

pub struct RunOptions {
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
}

fn evolve_from(
    spec: &FunctionalSpec,
    u0: &Field,
    t_end: f64,
    steps: usize,
    tol: f64,
) -> Result<Trajectory, String> {
    semigroup::evolve(spec, u0, t_end, steps, tol).map_err(|e| e.to_string())
}

#[allow(clippy::too_many_arguments)]
fn run_check(
    experiment: &Experiment,
    name: &str,
    check: CheckKind,
    functional: &str,
    base: &Option<String>,
    sampler: &properties::Sampler,
    alphas: &Option<Vec<f64>>,
    tol: f64,
) -> TaskOutcome {
    let space = &experiment.space;
    let f_spec = experiment
        .functional(name, functional)
        .expect("validated")
        .clone();
    let eval_f = move |u: &Field| f_spec.eval(u).expect("validated spec");
    let base_spec = base
        .as_ref()
        .map(|b| experiment.functional(name, b).expect("validated").clone());

    let result: Result<(bool, serde_json::Value, String), String> = (|| {
        match check {
            CheckKind::Submodular => {
                let report = properties::check_submodular(space, &eval_f, sampler, tol)
                    .map_err(|e| e.to_string())?;
                let pass = report.report.pass;
                let summary = format!(
                    "worst gap {:.3e} over {} samples",
                    report.report.worst, report.report.checked
                );
                Ok((pass, serde_json::to_value(&report).unwrap(), summary))
            }
            CheckKind::AlphaTruncation => {
                let alphas = alphas.clone().unwrap_or_else(|| vec![0.1, 1.0, 10.0]);
                let report =
                    properties::check_alpha_truncation(space, &eval_f, sampler, &alphas, tol)
                        .map_err(|e| e.to_string())?;
                let pass = report.pass;
                let summary =
                    format!("worst gap {:.3e} over {} samples", report.worst, report.checked);
                Ok((pass, serde_json::to_value(&report).unwrap(), summary))
            }
            CheckKind::Barthelemy => {
                let e_spec = base_spec.expect("validated");
                let eval_e = move |u: &Field| e_spec.eval(u).expect("validated spec");
                let report =
                    properties::check_barthelemy(space, &eval_f, &eval_e, sampler, tol)
                        .map_err(|e| e.to_string())?;
                let pass = report.pass;
                let summary = format!(
                    "worst gap {:.3e}, {} vacuous",
                    report.worst, report.vacuous
                );
                Ok((pass, serde_json::to_value(&report).unwrap(), summary))
            }
            CheckKind::Locality => {
                let report = properties::check_locality(space, &eval_f, sampler, tol)
                    .map_err(|e| e.to_string())?;
                let pass = report.pass;
                let summary =
                    format!("worst defect {:.3e} over {} pairs", report.worst, report.checked);
                Ok((pass, serde_json::to_value(&report).unwrap(), summary))
            }
            CheckKind::ConeMonotone => {
                let report = match base_spec {
                    Some(e_spec) => {
                        let psi = move |u: &Field| {
                            let fv = eval_f(u);
                            if fv.is_infinite() {
                                return f64::INFINITY;
                            }
                            fv - e_spec.eval(u).expect("validated spec")
                        };
                        properties::check_cone_monotone(space, &psi, sampler, tol)
                    }
                    None => properties::check_cone_monotone(space, &eval_f, sampler, tol),
                }
                .map_err(|e| e.to_string())?;
                let pass = report.pass;
                let summary =
                    format!("worst gap {:.3e} over {} pairs", report.worst, report.checked);
                Ok((pass, serde_json::to_value(&report).unwrap(), summary))
            }
            CheckKind::AbsInequality => {
                let report = properties::check_abs_inequality(space, &eval_f, sampler, tol)
                    .map_err(|e| e.to_string())?;
                let pass = report.pass;
                let summary =
                    format!("worst gap {:.3e} over {} samples", report.worst, report.checked);
                Ok((pass, serde_json::to_value(&report).unwrap(), summary))
            }
        }
    })();

    match result {
        Ok((pass, report, summary)) => TaskOutcome {
            name: name.to_string(),
            kind: "check",
            pass,
            solver_failure: false,
            summary,
            report,
        },
        Err(message) => TaskOutcome::failed_solver(name, "check", message),
    }
}

#[allow(clippy::too_many_arguments)]
fn run_evolve(
    experiment: &Experiment,
    name: &str,
    functional: &str,
    initial: &FieldSpec,
    t_end: f64,
    steps: usize,
    tol: f64,
    expect_ratio: Option<f64>,
    ratio_tol: Option<f64>,
    export_csv: bool,
    base_seed: u64,
    out_dir: &Path,
) -> TaskOutcome {
    let spec = experiment.functional(name, functional).expect("validated");
    let u0 = initial
        .resolve(&experiment.space, base_seed)
        .expect("validated");
    let trajectory = match evolve_from(spec, &u0, t_end, steps, tol) {
        Ok(t) => t,
        Err(message) => return TaskOutcome::failed_solver(name, "evolve", message),
    };
    let final_state = trajectory.final_state();
    let mut pass = true;
    let mut ratio_worst = None;
    if let Some(ratio) = expect_ratio {
        let tol = ratio_tol.unwrap_or(1e-3);
        let worst = u0
            .values()
            .iter()
            .zip(final_state.values())
            .fold(0.0f64, |acc, (&a, &b)| acc.max((b - ratio * a).abs()));
        pass = worst <= tol;
        ratio_worst = Some(worst);
    }
    if export_csv {
        let mut buffer = Vec::new();
        trajectory.write_csv(&mut buffer).expect("in-memory write");
        let _ = write_atomic(&out_dir.join(format!("{name}.csv")), &buffer);
    }
    let report = json!({
        "generator": trajectory.generator(),
        "spec_hash": spec_hash(spec),
        "steps": steps,
        "t_end": t_end,
        "prox_tol": tol,
        "projected_initial": trajectory.projected_initial(),
        "initial": u0.values(),
        "final": final_state.values(),
        "final_l2_norm": final_state.l2_norm(),
        "ratio_worst": ratio_worst,
    });
    TaskOutcome {
        name: name.to_string(),
        kind: "evolve",
        pass,
        solver_failure: false,
        summary: match ratio_worst {
            Some(w) => format!("final vs ratio: worst {w:.3e}"),
            None => format!("final L2 norm {:.6e}", final_state.l2_norm()),
        },
        report,
    }
}

#[allow(clippy::too_many_arguments)]
fn run_dominate(
    experiment: &Experiment,
    name: &str,
    lower: &str,
    upper: &str,
    initial: &FieldSpec,
    t_end: f64,
    steps: usize,
    prox_tol: f64,
    tol: f64,
    expect_violation: bool,
    base_seed: u64,
) -> TaskOutcome {
    let lower_spec = experiment.functional(name, lower).expect("validated");
    let upper_spec = experiment.functional(name, upper).expect("validated");
    let u0 = initial
        .resolve(&experiment.space, base_seed)
        .expect("validated");
    let result = (|| -> Result<(bool, serde_json::Value, String), String> {
        let dominated = evolve_from(lower_spec, &u0, t_end, steps, prox_tol)?;
        let dominating = evolve_from(upper_spec, &u0.abs(), t_end, steps, prox_tol)?;
        let report = semigroup::check_trajectory_domination(&dominated, &dominating, tol)
            .map_err(|e| e.to_string())?;
        let pass = if expect_violation {
            !report.pass
        } else {
            report.pass
        };
        let summary = format!(
            "max violation {:.3e} at step {} vertex {}{}",
            report.max_violation,
            report.at_step,
            report.at_vertex,
            if expect_violation {
                " (violation expected)"
            } else {
                ""
            }
        );
        Ok((pass, serde_json::to_value(&report).unwrap(), summary))
    })();
    match result {
        Ok((pass, report, summary)) => TaskOutcome {
            name: name.to_string(),
            kind: "dominate",
            pass,
            solver_failure: false,
            summary,
            report,
        },
        Err(message) => TaskOutcome::failed_solver(name, "dominate", message),
    }
}

fn run_capacity(
    experiment: &Experiment,
    name: &str,
    functional: &str,
    set: &[usize],
    tol: f64,
    expected_value: Option<f64>,
    value_tol: Option<f64>,
) -> TaskOutcome {
    let spec = experiment.functional(name, functional).expect("validated");
    let set = VertexSet::new(set.to_vec());
    match capacity::normcap(&experiment.space, spec, &set, tol) {
        Ok(result) => {
            let mut pass = true;
            let mut delta = None;
            if let Some(expected) = expected_value {
                let vt = value_tol.unwrap_or(3.0 * tol);
                let d = (result.value - expected).abs();
                pass = d <= vt;
                delta = Some(d);
            }
            let report = json!({
                "value": result.value,
                "minimizer": result.minimizer.values(),
                "outer_tol": result.outer_tol,
                "inner_tol": result.inner_tol,
                "expected_delta": delta,
            });
            TaskOutcome {
                name: name.to_string(),
                kind: "capacity",
                pass,
                solver_failure: false,
                summary: format!("normcap = {:.8}", result.value),
                report,
            }
        }
        Err(capacity::CapacityError::InfiniteCapacity) => TaskOutcome {
            name: name.to_string(),
            kind: "capacity",
            pass: expected_value.is_none(),
            solver_failure: false,
            summary: "capacity is infinite".to_string(),
            report: json!({ "value": "inf" }),
        },
        Err(e) => TaskOutcome::failed_solver(name, "capacity", e.to_string()),
    }
}

#[allow(clippy::too_many_arguments)]
fn run_reconstruct(
    experiment: &Experiment,
    name: &str,
    profile: &BProfile,
    mu: &[f64],
    targets: &[FieldSpec],
    ladder_depth: usize,
    tol: f64,
    base_seed: u64,
) -> TaskOutcome {
    let space = Arc::clone(&experiment.space);
    let measure = VertexMeasure::new(mu.to_vec()).expect("validated");
    let psi = match SignedPsi::from_profile(Arc::clone(&space), profile.clone(), measure) {
        Ok(p) => p,
        Err(e) => return TaskOutcome::failed_solver(name, "reconstruct", e.to_string()),
    };
    let fields: Vec<Field> = targets
        .iter()
        .map(|t| t.resolve(&space, base_seed).expect("validated"))
        .collect();
    let ladder = Dictionary::default_ladder(ladder_depth);
    let result = (|| -> Result<(bool, serde_json::Value, String), String> {
        let (glued, reference) =
            rieszmarkov::reconstruct_signed(&psi, &fields, &ladder).map_err(|e| e.to_string())?;
        let top = *ladder.last().expect("ladder is nonempty");
        let report = rieszmarkov::verify_signed_representation(&psi, &glued, &reference, &fields, top)
            .map_err(|e| e.to_string())?;
        let pass = report.worst_vs_ladder_bound <= tol && report.infinite_mismatches == 0;
        let summary = format!(
            "worst |psi - ∫B| {:.3e}, vs ladder bound {:.3e}",
            report.worst_abs, report.worst_vs_ladder_bound
        );
        let value = json!({
            "representation": report,
            "ladder_top": top,
            "reference_measure": reference.weights(),
            "reconstruction": serde_json::to_value(&glued).unwrap(),
        });
        Ok((pass, value, summary))
    })();
    match result {
        Ok((pass, report, summary)) => TaskOutcome {
            name: name.to_string(),
            kind: "reconstruct",
            pass,
            solver_failure: false,
            summary,
            report,
        },
        Err(message) => TaskOutcome::failed_solver(name, "reconstruct", message),
    }
}

/// Worst pointwise violations of the two-sided sandwich ordering.
#[derive(Debug, Clone, Serialize)]
pub struct SandwichReport {
    /// worst `|R_t u| − S_t|u|` over both signs of the initial datum
    pub low_vs_mid_worst: f64,
    /// worst `|R_t u| − (−S_t(−|u|))`
    pub low_vs_mid_reflected_worst: f64,
    /// worst `|S_t u| − T_t|u|`
    pub mid_vs_high_worst: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Evolve the three flows from `±u0` and check the pointwise orderings at
/// every step: `|R_t u| ≤ S_t|u|`, `|R_t u| ≤ −S_t(−|u|)`, and
/// `|S_t u| ≤ T_t|u|`.
#[allow(clippy::too_many_arguments)]
pub fn sandwich(
    neumann: &FunctionalSpec,
    robin: &FunctionalSpec,
    dirichlet: &FunctionalSpec,
    u0: &Field,
    t_end: f64,
    steps: usize,
    prox_tol: f64,
    tol: f64,
) -> Result<SandwichReport, String> {
    if !u0.is_nonnegative() {
        return Err("sandwich initial data must be nonnegative".to_string());
    }
    let minus_u0 = u0.scale(-1.0);
    let t_pos = evolve_from(neumann, u0, t_end, steps, prox_tol)?;
    let s_pos = evolve_from(robin, u0, t_end, steps, prox_tol)?;
    let s_neg = evolve_from(robin, &minus_u0, t_end, steps, prox_tol)?;
    let r_pos = evolve_from(dirichlet, u0, t_end, steps, prox_tol)?;
    let r_neg = evolve_from(dirichlet, &minus_u0, t_end, steps, prox_tol)?;

    let mut low_mid = f64::NEG_INFINITY;
    let mut low_mid_reflected = f64::NEG_INFINITY;
    let mut mid_high = f64::NEG_INFINITY;
    for r in [&r_pos, &r_neg] {
        for (k, state) in r.states().iter().enumerate() {
            for (i, &rv) in state.values().iter().enumerate() {
                let s_abs = s_pos.states()[k].values()[i];
                let s_reflected = -s_neg.states()[k].values()[i];
                low_mid = low_mid.max(rv.abs() - s_abs);
                low_mid_reflected = low_mid_reflected.max(rv.abs() - s_reflected);
            }
        }
    }
    for s in [&s_pos, &s_neg] {
        for (k, state) in s.states().iter().enumerate() {
            for (i, &sv) in state.values().iter().enumerate() {
                let t_abs = t_pos.states()[k].values()[i];
                mid_high = mid_high.max(sv.abs() - t_abs);
            }
        }
    }
    let pass = low_mid <= tol && low_mid_reflected <= tol && mid_high <= tol;
    Ok(SandwichReport {
        low_vs_mid_worst: low_mid,
        low_vs_mid_reflected_worst: low_mid_reflected,
        mid_vs_high_worst: mid_high,
        tol,
        pass,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_sandwich(
    experiment: &Experiment,
    name: &str,
    neumann: &str,
    robin: &str,
    dirichlet: &str,
    initial: &FieldSpec,
    t_end: f64,
    steps: usize,
    prox_tol: f64,
    tol: f64,
    base_seed: u64,
) -> TaskOutcome {
    let neumann = experiment.functional(name, neumann).expect("validated");
    let robin = experiment.functional(name, robin).expect("validated");
    let dirichlet = experiment.functional(name, dirichlet).expect("validated");
    let u0 = initial
        .resolve(&experiment.space, base_seed)
        .expect("validated");
    match sandwich(neumann, robin, dirichlet, &u0, t_end, steps, prox_tol, tol) {
        Ok(report) => TaskOutcome {
            name: name.to_string(),
            kind: "sandwich",
            pass: report.pass,
            solver_failure: false,
            summary: format!(
                "worst orderings: low/mid {:.3e}, reflected {:.3e}, mid/high {:.3e}",
                report.low_vs_mid_worst,
                report.low_vs_mid_reflected_worst,
                report.mid_vs_high_worst
            ),
            report: serde_json::to_value(&report).unwrap(),
        },
        Err(message) => TaskOutcome::failed_solver(name, "sandwich", message),
    }
}

fn run_task(
    experiment: &Experiment,
    task: &TaskSpec,
    base_seed: u64,
    out_dir: &Path,
) -> TaskOutcome {
    match task {
        TaskSpec::Check {
            name,
            check,
            functional,
            base,
            sampler,
            alphas,
            tol,
        } => {
            let sampler = sampler.build(base_seed);
            run_check(
                experiment, name, *check, functional, base, &sampler, alphas, *tol,
            )
        }
        TaskSpec::Evolve {
            name,
            functional,
            initial,
            t_end,
            steps,
            tol,
            expect_ratio,
            ratio_tol,
            export_csv,
        } => run_evolve(
            experiment,
            name,
            functional,
            initial,
            *t_end,
            *steps,
            *tol,
            *expect_ratio,
            *ratio_tol,
            *export_csv,
            base_seed,
            out_dir,
        ),
        TaskSpec::Dominate {
            name,
            lower,
            upper,
            initial,
            t_end,
            steps,
            prox_tol,
            tol,
            expect_violation,
        } => run_dominate(
            experiment,
            name,
            lower,
            upper,
            initial,
            *t_end,
            *steps,
            *prox_tol,
            *tol,
            *expect_violation,
            base_seed,
        ),
        TaskSpec::Capacity {
            name,
            functional,
            set,
            tol,
            expected_value,
            value_tol,
        } => run_capacity(
            experiment,
            name,
            functional,
            set,
            *tol,
            *expected_value,
            *value_tol,
        ),
        TaskSpec::Reconstruct {
            name,
            profile,
            mu,
            targets,
            ladder_depth,
            tol,
        } => run_reconstruct(
            experiment,
            name,
            profile,
            mu,
            targets,
            *ladder_depth,
            *tol,
            base_seed,
        ),
        TaskSpec::Sandwich {
            name,
            neumann,
            robin,
            dirichlet,
            initial,
            t_end,
            steps,
            prox_tol,
            tol,
        } => run_sandwich(
            experiment,
            name,
            neumann,
            robin,
            dirichlet,
            initial,
            *t_end,
            *steps,
            *prox_tol,
            *tol,
            base_seed,
        ),
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}

fn unix_timestamp() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Run every task of the experiment, write per-task reports into the
/// output directory, print the summary table, and return the exit code.
pub fn run(experiment: &Experiment, options: &RunOptions) -> i32 {
    let base_seed = options
        .seed
        .or_else(|| {
            std::env::var("DFLOW_SEED")
                .ok()
                .and_then(|s| s.parse().ok())
        })
        .unwrap_or(experiment.config.seed);
    let workers = options.workers.unwrap_or(experiment.config.workers).max(1);
    let out_dir = options
        .output_dir
        .clone()
        .or_else(|| {
            experiment
                .config
                .output_dir
                .as_ref()
                .map(|d| experiment.base_dir.join(d))
        })
        .unwrap_or_else(|| experiment.base_dir.join("reports"));
    if let Err(e) = std::fs::create_dir_all(&out_dir) {
        eprintln!("cannot create output directory {}: {e}", out_dir.display());
        return EXIT_CONFIG_ERROR;
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool");
    let outcomes: Vec<TaskOutcome> = pool.install(|| {
        experiment
            .config
            .tasks
            .par_iter()
            .map(|task| run_task(experiment, task, base_seed, &out_dir))
            .collect()
    });

    for outcome in &outcomes {
        let wrapped = json!({
            "task": outcome.name,
            "type": outcome.kind,
            "seed": base_seed,
            "pass": outcome.pass,
            "solver_failure": outcome.solver_failure,
            "summary": outcome.summary,
            "report": outcome.report,
            "timestamp": unix_timestamp(),
        });
        let path = out_dir.join(format!("{}.json", outcome.name));
        let text = serde_json::to_string_pretty(&wrapped).expect("report serialization");
        if let Err(e) = write_atomic(&path, text.as_bytes()) {
            eprintln!("cannot write report {}: {e}", path.display());
        }
    }

    println!("{:<24} {:<12} {:<6} summary", "task", "type", "pass");
    for outcome in &outcomes {
        println!(
            "{:<24} {:<12} {:<6} {}",
            outcome.name,
            outcome.kind,
            if outcome.pass { "PASS" } else { "FAIL" },
            outcome.summary
        );
    }

    if outcomes.iter().any(|o| o.solver_failure) {
        EXIT_SOLVER_FAILURE
    } else if outcomes.iter().any(|o| !o.pass) {
        EXIT_CHECK_FAILED
    } else {
        EXIT_PASS
    }
}

/// Convenience used by CLI subcommands: run a single task against an
/// ad-hoc experiment.
pub fn run_single(
    space: Arc<FiniteSpace>,
    functionals: std::collections::BTreeMap<String, FunctionalSpec>,
    task: TaskSpec,
    options: &RunOptions,
) -> i32 {
    let config = crate::config::ExperimentConfig {
        schema_version: crate::config::SCHEMA_VERSION,
        space: String::new(),
        functionals,
        seed: 0,
        workers: 1,
        output_dir: None,
        tasks: vec![task],
    };
    let experiment = Experiment {
        config,
        space,
        base_dir: std::env::current_dir().unwrap_or_else(|_| PathBuf::from(".")),
    };
    if let Err(e) = experiment.validate() {
        eprintln!("configuration error: {e}");
        return EXIT_CONFIG_ERROR;
    }
    run(&experiment, options)
}
