//! Experiment configuration: one JSON file describing a space, named
//! functionals, and a list of tasks with their tolerances and seeds.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forms::{BProfile, FormError, FunctionalSpec, VertexMeasure};
use crate::properties::{Sampler, SamplerKind};
use crate::space::{Field, FiniteSpace, SpaceError};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported schema version {0}")]
    SchemaVersion(u32),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Form(#[from] FormError),
    #[error("task {task}: unknown functional {name:?}")]
    UnknownFunctional { task: String, name: String },
    #[error("task {task}: {message}")]
    Invalid { task: String, message: String },
    #[error("duplicate task name {0:?}")]
    DuplicateTask(String),
}

/// How an initial or target field is specified in a config.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldSpec {
    Values { values: Vec<f64> },
    Random { random: RandomField },
    Bump { bump: BumpField },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RandomField {
    pub kind: RandomKind,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_scale")]
    pub scale: f64,
}

fn default_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RandomKind {
    Uniform,
    Nonnegative,
    Gaussian,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BumpField {
    pub vertex: usize,
    pub height: f64,
}

impl FieldSpec {
    pub fn resolve(
        &self,
        space: &Arc<FiniteSpace>,
        base_seed: u64,
    ) -> Result<Field, SpaceError> {
        match self {
            FieldSpec::Values { values } => Field::new(space, values.clone()),
            FieldSpec::Random { random } => {
                let kind = match random.kind {
                    RandomKind::Uniform => SamplerKind::UniformBox {
                        lo: -random.scale,
                        hi: random.scale,
                    },
                    RandomKind::Nonnegative => SamplerKind::Nonnegative { hi: random.scale },
                    RandomKind::Gaussian => SamplerKind::Gaussian {
                        scale: random.scale,
                    },
                };
                let sampler = Sampler::new(random.seed.unwrap_or(base_seed), 1, kind);
                Ok(sampler.fields(space).remove(0))
            }
            FieldSpec::Bump { bump } => {
                let mut values = vec![0.0; space.n()];
                if bump.vertex >= space.n() {
                    return Err(SpaceError::IndexOutOfRange {
                        index: bump.vertex,
                        n: space.n(),
                    });
                }
                values[bump.vertex] = bump.height;
                Field::new(space, values)
            }
        }
    }
}

/// Sampler parameters for check tasks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplerSpec {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(flatten, default)]
    pub kind: Option<SamplerKind>,
}

fn default_count() -> usize {
    200
}

impl Default for SamplerSpec {
    fn default() -> Self {
        SamplerSpec {
            seed: None,
            count: default_count(),
            kind: None,
        }
    }
}

impl SamplerSpec {
    pub fn build(&self, base_seed: u64) -> Sampler {
        Sampler::new(
            self.seed.unwrap_or(base_seed),
            self.count,
            self.kind.unwrap_or_default(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Submodular,
    AlphaTruncation,
    Barthelemy,
    Locality,
    ConeMonotone,
    AbsInequality,
}

fn default_tol() -> f64 {
    1e-10
}

fn default_prox_tol() -> f64 {
    1e-11
}

fn default_ladder_depth() -> usize {
    20
}

/// One task of an experiment run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TaskSpec {
    /// Run one inequality checker against a named functional.
    Check {
        name: String,
        check: CheckKind,
        functional: String,
        /// the reference form `E` for `barthelemy`, or the base to
        /// subtract for `cone_monotone`
        #[serde(default)]
        base: Option<String>,
        #[serde(default)]
        sampler: SamplerSpec,
        #[serde(default)]
        alphas: Option<Vec<f64>>,
        #[serde(default = "default_tol")]
        tol: f64,
    },
    /// Evolve a gradient flow and optionally compare the final state
    /// against `ratio · initial`.
    Evolve {
        name: String,
        functional: String,
        initial: FieldSpec,
        t_end: f64,
        steps: usize,
        #[serde(default = "default_prox_tol")]
        tol: f64,
        #[serde(default)]
        expect_ratio: Option<f64>,
        #[serde(default)]
        ratio_tol: Option<f64>,
        /// also write the trajectory as `<name>.csv` next to the report
        #[serde(default)]
        export_csv: bool,
    },
    /// Check `|S_t u| ≤ T_t |u|` along trajectories: `lower` generates
    /// `S`, `upper` generates `T`.
    Dominate {
        name: String,
        lower: String,
        upper: String,
        initial: FieldSpec,
        t_end: f64,
        steps: usize,
        #[serde(default = "default_prox_tol")]
        prox_tol: f64,
        #[serde(default = "default_tol")]
        tol: f64,
        /// negative control: the task passes when the violation exceeds
        /// the tolerance
        #[serde(default)]
        expect_violation: bool,
    },
    /// Norm-capacity of a vertex set.
    Capacity {
        name: String,
        functional: String,
        set: Vec<usize>,
        #[serde(default = "default_tol")]
        tol: f64,
        #[serde(default)]
        expected_value: Option<f64>,
        #[serde(default)]
        value_tol: Option<f64>,
    },
    /// Reconstruct the integrand of a profile-built functional from its
    /// evaluations and verify the representation at ladder resolution.
    Reconstruct {
        name: String,
        profile: BProfile,
        mu: Vec<f64>,
        targets: Vec<FieldSpec>,
        #[serde(default = "default_ladder_depth")]
        ladder_depth: usize,
        #[serde(default = "default_tol")]
        tol: f64,
    },
    /// Two-sided ordering `dirichlet ≤ robin ≤ neumann` along
    /// trajectories from `±initial` (initial must be nonnegative).
    Sandwich {
        name: String,
        neumann: String,
        robin: String,
        dirichlet: String,
        initial: FieldSpec,
        t_end: f64,
        steps: usize,
        #[serde(default = "default_prox_tol")]
        prox_tol: f64,
        #[serde(default = "default_tol")]
        tol: f64,
    },
}

impl TaskSpec {
    pub fn name(&self) -> &str {
        match self {
            TaskSpec::Check { name, .. }
            | TaskSpec::Evolve { name, .. }
            | TaskSpec::Dominate { name, .. }
            | TaskSpec::Capacity { name, .. }
            | TaskSpec::Reconstruct { name, .. }
            | TaskSpec::Sandwich { name, .. } => name,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            TaskSpec::Check { .. } => "check",
            TaskSpec::Evolve { .. } => "evolve",
            TaskSpec::Dominate { .. } => "dominate",
            TaskSpec::Capacity { .. } => "capacity",
            TaskSpec::Reconstruct { .. } => "reconstruct",
            TaskSpec::Sandwich { .. } => "sandwich",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "schema_version_default")]
    pub schema_version: u32,
    /// path of the space description file, relative to the config file
    pub space: String,
    #[serde(default)]
    pub functionals: BTreeMap<String, FunctionalSpec>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub output_dir: Option<String>,
    pub tasks: Vec<TaskSpec>,
}

fn schema_version_default() -> u32 {
    SCHEMA_VERSION
}

fn default_workers() -> usize {
    1
}

/// A parsed, validated experiment: space loaded, every name resolved.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub space: Arc<FiniteSpace>,
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<ExperimentConfig, ConfigError> {
        let config: ExperimentConfig = serde_json::from_str(text)?;
        if config.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::SchemaVersion(config.schema_version));
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Experiment, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let config = ExperimentConfig::from_json_str(&text)?;
        let base_dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        let space_path = base_dir.join(&config.space);
        let space = FiniteSpace::load(&space_path)?;
        let experiment = Experiment {
            config,
            space,
            base_dir,
        };
        experiment.validate()?;
        Ok(experiment)
    }
}

impl Experiment {
    pub fn functional(&self, task: &str, name: &str) -> Result<&FunctionalSpec, ConfigError> {
        self.config
            .functionals
            .get(name)
            .ok_or_else(|| ConfigError::UnknownFunctional {
                task: task.to_string(),
                name: name.to_string(),
            })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, spec) in &self.config.functionals {
            spec.validate(&self.space).map_err(|e| ConfigError::Invalid {
                task: format!("functional {name:?}"),
                message: e.to_string(),
            })?;
        }
        let mut seen = std::collections::BTreeSet::new();
        for task in &self.config.tasks {
            if !seen.insert(task.name().to_string()) {
                return Err(ConfigError::DuplicateTask(task.name().to_string()));
            }
            self.validate_task(task)?;
        }
        Ok(())
    }

    fn require_positive(&self, task: &str, label: &str, value: f64) -> Result<(), ConfigError> {
        if value > 0.0 && value.is_finite() {
            Ok(())
        } else {
            Err(ConfigError::Invalid {
                task: task.to_string(),
                message: format!("{label} must be positive, got {value}"),
            })
        }
    }

    fn validate_task(&self, task: &TaskSpec) -> Result<(), ConfigError> {
        let name = task.name().to_string();
        match task {
            TaskSpec::Check {
                check,
                functional,
                base,
                tol,
                alphas,
                ..
            } => {
                self.functional(&name, functional)?;
                if let Some(base) = base {
                    self.functional(&name, base)?;
                }
                if *check == CheckKind::Barthelemy && base.is_none() {
                    return Err(ConfigError::Invalid {
                        task: name,
                        message: "barthelemy needs a base functional".to_string(),
                    });
                }
                if let Some(alphas) = alphas {
                    for &a in alphas {
                        self.require_positive(&name, "alpha", a)?;
                    }
                }
                self.require_positive(&name, "tol", *tol)
            }
            TaskSpec::Evolve {
                functional,
                initial,
                t_end,
                steps,
                tol,
                ..
            } => {
                self.functional(&name, functional)?;
                initial
                    .resolve(&self.space, self.config.seed)
                    .map_err(|e| ConfigError::Invalid {
                        task: name.clone(),
                        message: e.to_string(),
                    })?;
                if *steps == 0 {
                    return Err(ConfigError::Invalid {
                        task: name,
                        message: "steps must be positive".to_string(),
                    });
                }
                self.require_positive(&name, "t_end", *t_end)?;
                self.require_positive(&name, "tol", *tol)
            }
            TaskSpec::Dominate {
                lower,
                upper,
                initial,
                t_end,
                steps,
                prox_tol,
                tol,
                ..
            } => {
                self.functional(&name, lower)?;
                self.functional(&name, upper)?;
                initial
                    .resolve(&self.space, self.config.seed)
                    .map_err(|e| ConfigError::Invalid {
                        task: name.clone(),
                        message: e.to_string(),
                    })?;
                if *steps == 0 {
                    return Err(ConfigError::Invalid {
                        task: name,
                        message: "steps must be positive".to_string(),
                    });
                }
                self.require_positive(&name, "t_end", *t_end)?;
                self.require_positive(&name, "prox_tol", *prox_tol)?;
                self.require_positive(&name, "tol", *tol)
            }
            TaskSpec::Capacity {
                functional,
                set,
                tol,
                ..
            } => {
                self.functional(&name, functional)?;
                crate::space::VertexSet::new(set.clone())
                    .validate(self.space.n())
                    .map_err(|e| ConfigError::Invalid {
                        task: name.clone(),
                        message: e.to_string(),
                    })?;
                self.require_positive(&name, "tol", *tol)
            }
            TaskSpec::Reconstruct {
                profile,
                mu,
                targets,
                ladder_depth,
                tol,
                ..
            } => {
                profile.validate().map_err(|e| ConfigError::Invalid {
                    task: name.clone(),
                    message: e.to_string(),
                })?;
                VertexMeasure::new(mu.clone()).map_err(|e| ConfigError::Invalid {
                    task: name.clone(),
                    message: e.to_string(),
                })?;
                if mu.len() != self.space.n() {
                    return Err(ConfigError::Invalid {
                        task: name,
                        message: "mu length does not match the space".to_string(),
                    });
                }
                for t in targets {
                    t.resolve(&self.space, self.config.seed).map_err(|e| {
                        ConfigError::Invalid {
                            task: name.clone(),
                            message: e.to_string(),
                        }
                    })?;
                }
                if *ladder_depth == 0 || *ladder_depth > 50 {
                    return Err(ConfigError::Invalid {
                        task: name,
                        message: "ladder_depth must lie in 1..=50".to_string(),
                    });
                }
                self.require_positive(&name, "tol", *tol)
            }
            TaskSpec::Sandwich {
                neumann,
                robin,
                dirichlet,
                initial,
                t_end,
                steps,
                prox_tol,
                tol,
                ..
            } => {
                self.functional(&name, neumann)?;
                self.functional(&name, robin)?;
                self.functional(&name, dirichlet)?;
                let u0 = initial
                    .resolve(&self.space, self.config.seed)
                    .map_err(|e| ConfigError::Invalid {
                        task: name.clone(),
                        message: e.to_string(),
                    })?;
                if !u0.is_nonnegative() {
                    return Err(ConfigError::Invalid {
                        task: name,
                        message: "sandwich initial data must be nonnegative".to_string(),
                    });
                }
                if *steps == 0 {
                    return Err(ConfigError::Invalid {
                        task: name,
                        message: "steps must be positive".to_string(),
                    });
                }
                self.require_positive(&name, "t_end", *t_end)?;
                self.require_positive(&name, "prox_tol", *prox_tol)?;
                self.require_positive(&name, "tol", *tol)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_space(dir: &Path) -> PathBuf {
        let space = FiniteSpace::path(4);
        let path = dir.join("space.json");
        std::fs::write(&path, space.to_json()).unwrap();
        path
    }

    #[test]
    fn minimal_config_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        write_space(dir.path());
        let config_json = r#"{
            "schema_version": 1,
            "space": "space.json",
            "seed": 7,
            "functionals": {
                "quad": {"type": "quadratic", "scale": 1.0},
                "p2": {"type": "graph_p_energy", "exponents": [2.0, 2.0, 2.0]}
            },
            "tasks": [
                {"type": "check", "name": "sub", "check": "submodular",
                 "functional": "p2", "sampler": {"count": 50, "kind": "uniform_box", "lo": -1.0, "hi": 1.0}},
                {"type": "evolve", "name": "decay", "functional": "quad",
                 "initial": {"values": [1.0, 0.5, -0.5, 0.25]},
                 "t_end": 1.0, "steps": 64, "expect_ratio": 0.3697112123, "ratio_tol": 0.01}
            ]
        }"#;
        let config_path = dir.path().join("config.json");
        std::fs::write(&config_path, config_json).unwrap();
        let experiment = ExperimentConfig::load(&config_path).unwrap();
        assert_eq!(experiment.config.tasks.len(), 2);
        assert_eq!(experiment.config.tasks[0].kind(), "check");
    }

    #[test]
    fn unknown_functional_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_space(dir.path());
        let config_json = r#"{
            "space": "space.json",
            "functionals": {},
            "tasks": [
                {"type": "evolve", "name": "x", "functional": "missing",
                 "initial": {"values": [0.0, 0.0, 0.0, 0.0]}, "t_end": 1.0, "steps": 4}
            ]
        }"#;
        let config_path = dir.path().join("config.json");
        std::fs::write(&config_path, config_json).unwrap();
        assert!(matches!(
            ExperimentConfig::load(&config_path),
            Err(ConfigError::UnknownFunctional { .. })
        ));
    }

    #[test]
    fn negative_sandwich_data_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_space(dir.path());
        let config_json = r#"{
            "space": "space.json",
            "functionals": {
                "e": {"type": "graph_p_energy", "exponents": [2.0, 2.0, 2.0]}
            },
            "tasks": [
                {"type": "sandwich", "name": "s", "neumann": "e", "robin": "e",
                 "dirichlet": "e", "initial": {"values": [1.0, -1.0, 0.0, 0.0]},
                 "t_end": 0.5, "steps": 4}
            ]
        }"#;
        let config_path = dir.path().join("config.json");
        std::fs::write(&config_path, config_json).unwrap();
        assert!(matches!(
            ExperimentConfig::load(&config_path),
            Err(ConfigError::Invalid { .. })
        ));
    }

    #[test]
    fn duplicate_task_names_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_space(dir.path());
        let config_json = r#"{
            "space": "space.json",
            "functionals": {"z": {"type": "zero"}},
            "tasks": [
                {"type": "capacity", "name": "same", "functional": "z", "set": [0]},
                {"type": "capacity", "name": "same", "functional": "z", "set": [1]}
            ]
        }"#;
        let config_path = dir.path().join("config.json");
        std::fs::write(&config_path, config_json).unwrap();
        assert!(matches!(
            ExperimentConfig::load(&config_path),
            Err(ConfigError::DuplicateTask(_))
        ));
    }

    #[test]
    fn field_specs_resolve() {
        let space = FiniteSpace::path(4);
        let values = FieldSpec::Values {
            values: vec![1.0, 2.0, 3.0, 4.0],
        };
        assert_eq!(
            values.resolve(&space, 0).unwrap().values(),
            &[1.0, 2.0, 3.0, 4.0]
        );
        let bump = FieldSpec::Bump {
            bump: BumpField {
                vertex: 2,
                height: 5.0,
            },
        };
        assert_eq!(bump.resolve(&space, 0).unwrap().values(), &[0.0, 0.0, 5.0, 0.0]);
        let random = FieldSpec::Random {
            random: RandomField {
                kind: RandomKind::Nonnegative,
                seed: Some(3),
                scale: 2.0,
            },
        };
        let a = random.resolve(&space, 0).unwrap();
        let b = random.resolve(&space, 99).unwrap();
        assert_eq!(a, b); // explicit seed wins over the base seed
        assert!(a.is_nonnegative());
    }
}
