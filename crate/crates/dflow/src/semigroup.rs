//! Gradient-flow semigroups by implicit Euler proximal stepping.
//!
//! Each step of [`evolve`] solves the backward-Euler inclusion
//! `u_{k+1} = argmin ½‖u − u_k‖²_{L²(m)} + h·F(u)`, so a trajectory is an
//! iterated resolvent. Domination and contraction statements that hold at
//! the resolvent level therefore hold at every discrete step, up to
//! solver tolerance.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forms::FunctionalSpec;
use crate::solver::{prox, ProxError};
use crate::space::{Field, SpaceError};

#[derive(Debug, Error)]
pub enum EvolveError {
    #[error("prox failed at step {step}: {source}")]
    Prox {
        step: usize,
        #[source]
        source: ProxError,
    },
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("t_end must be positive, got {0}")]
    BadHorizon(f64),
    #[error("steps must be positive")]
    NoSteps,
    #[error("trajectories have different time grids")]
    GridMismatch,
}

/// A discrete trajectory `t_k ↦ u_k` of a gradient flow.
#[derive(Debug, Clone)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Vec<Field>,
    generator: String,
    steps_per_unit: f64,
    projected_initial: bool,
    tol: f64,
}

impl Trajectory {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[Field] {
        &self.states
    }

    pub fn initial(&self) -> &Field {
        &self.states[0]
    }

    pub fn final_state(&self) -> &Field {
        self.states.last().expect("trajectory is never empty")
    }

    pub fn generator(&self) -> &str {
        &self.generator
    }

    pub fn steps_per_unit(&self) -> f64 {
        self.steps_per_unit
    }

    /// Whether the initial datum had to be projected onto the hard
    /// constraints of the generator before stepping.
    pub fn projected_initial(&self) -> bool {
        self.projected_initial
    }

    pub fn same_grid(&self, other: &Trajectory) -> bool {
        self.times.len() == other.times.len()
            && self
                .times
                .iter()
                .zip(&other.times)
                .all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + a.abs()))
    }

    /// CSV export with header `time,v0,…,v{n−1}`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.states[0].len();
        let header: Vec<String> = std::iter::once("time".to_string())
            .chain((0..n).map(|i| format!("v{i}")))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for (t, state) in self.times.iter().zip(&self.states) {
            let row: Vec<String> = std::iter::once(format!("{t}"))
                .chain(state.values().iter().map(|v| format!("{v}")))
                .collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct TrajectoryJson<'a> {
            generator: &'a str,
            steps_per_unit: f64,
            tol: f64,
            projected_initial: bool,
            times: &'a [f64],
            states: Vec<&'a [f64]>,
        }
        serde_json::to_string_pretty(&TrajectoryJson {
            generator: &self.generator,
            steps_per_unit: self.steps_per_unit,
            tol: self.tol,
            projected_initial: self.projected_initial,
            times: &self.times,
            states: self.states.iter().map(|s| s.values()).collect(),
        })
        .expect("trajectory serialization cannot fail")
    }
}

/// Project a field onto the hard constraints of a spec: zero on
/// Dirichlet-restricted vertices, clamped into well boxes.
fn project_onto_constraints(spec: &FunctionalSpec, u: &Field) -> Field {
    fn walk(spec: &FunctionalSpec, values: &mut [f64]) {
        match spec {
            FunctionalSpec::Zero
            | FunctionalSpec::Quadratic { .. }
            | FunctionalSpec::GraphPEnergy { .. } => {}
            FunctionalSpec::Perturbed { base, profile, mu } => {
                walk(base, values);
                if let crate::forms::BProfile::Well { a, b } = profile {
                    for (v, &w) in mu.weights().iter().enumerate() {
                        if w > 0.0 {
                            values[v] = values[v].clamp(*a, *b);
                        }
                    }
                }
            }
            FunctionalSpec::DirichletRestricted { base, set } => {
                walk(base, values);
                for &v in set.indices() {
                    values[v] = 0.0;
                }
            }
        }
    }
    let mut values = u.values().to_vec();
    walk(spec, &mut values);
    Field::new(u.space(), values).expect("projection preserves finiteness")
}

/// Evolve the gradient flow of `spec` from `u0` over `[0, t_end]` with a
/// uniform implicit-Euler step `h = t_end/steps`. Initial data outside the
/// constraint set are projected first and the projection is recorded on
/// the trajectory.
pub fn evolve(
    spec: &FunctionalSpec,
    u0: &Field,
    t_end: f64,
    steps: usize,
    tol: f64,
) -> Result<Trajectory, EvolveError> {
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(EvolveError::BadHorizon(t_end));
    }
    if steps == 0 {
        return Err(EvolveError::NoSteps);
    }
    let h = t_end / steps as f64;
    let start = project_onto_constraints(spec, u0);
    let projected_initial = start != *u0;

    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    times.push(0.0);
    states.push(start);
    for k in 0..steps {
        let next = prox(spec, h, &states[k], tol)
            .map_err(|source| EvolveError::Prox { step: k, source })?;
        times.push(h * (k + 1) as f64);
        states.push(next);
    }
    Ok(Trajectory {
        times,
        states,
        generator: generator_label(spec),
        steps_per_unit: steps as f64 / t_end,
        projected_initial,
        tol,
    })
}

/// Short content hash of a spec, used to tag trajectories and reports.
pub fn spec_hash(spec: &FunctionalSpec) -> String {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(spec.to_json().as_bytes());
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    format!("spec:{}", &hex[..16])
}

fn generator_label(spec: &FunctionalSpec) -> String {
    spec_hash(spec)
}

/// Outcome of a pointwise trajectory comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DominationReport {
    /// `max_{k,i} (|S_k,i| − T_k,i)`; negative when domination holds
    /// strictly.
    pub max_violation: f64,
    pub at_step: usize,
    pub at_vertex: usize,
    pub tol: f64,
    pub pass: bool,
}

/// Default comparison tolerance, `1e−8` scaled by the sup norm of the
/// initial datum of the dominated trajectory.
pub fn default_domination_tol(u0: &Field) -> f64 {
    1e-8 * u0.linf_norm().max(1.0)
}

/// Check `|S_t f| ≤ T_t |f|` along two trajectories on the same grid:
/// `dominated` plays `S` (evolved from `f`), `dominating` plays `T`
/// (evolved from `|f|`).
pub fn check_trajectory_domination(
    dominated: &Trajectory,
    dominating: &Trajectory,
    tol: f64,
) -> Result<DominationReport, EvolveError> {
    if !dominated.same_grid(dominating) {
        return Err(EvolveError::GridMismatch);
    }
    let mut max_violation = f64::NEG_INFINITY;
    let mut at_step = 0;
    let mut at_vertex = 0;
    for (k, (s, t)) in dominated.states.iter().zip(&dominating.states).enumerate() {
        s.check_same_space(t)?;
        for (i, (&sv, &tv)) in s.values().iter().zip(t.values()).enumerate() {
            let violation = sv.abs() - tv;
            if violation > max_violation {
                max_violation = violation;
                at_step = k;
                at_vertex = i;
            }
        }
    }
    Ok(DominationReport {
        max_violation,
        at_step,
        at_vertex,
        tol,
        pass: max_violation <= tol,
    })
}

/// Results of the three structural semigroup checks on sampled pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContractionReport {
    pub pairs: usize,
    /// worst `‖S_t u − S_t v‖_{L²} − ‖u − v‖_{L²}`
    pub l2_worst: f64,
    /// worst violation of `u ≤ v ⇒ S_t u ≤ S_t v` (checked on meet/join)
    pub order_worst: f64,
    /// worst `‖S_t u − S_t v‖_∞ − ‖u − v‖_∞`
    pub linf_worst: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Verify L² nonexpansiveness, order preservation, and L∞ contraction of
/// the flow of `spec` on the given pairs. Order preservation is checked on
/// the ordered pair `(u ∧ v, u ∨ v)` derived from each sample.
pub fn contraction_checks(
    spec: &FunctionalSpec,
    pairs: &[(Field, Field)],
    t_end: f64,
    steps: usize,
    prox_tol: f64,
    tol: f64,
) -> Result<ContractionReport, EvolveError> {
    let mut l2_worst = f64::NEG_INFINITY;
    let mut order_worst = f64::NEG_INFINITY;
    let mut linf_worst = f64::NEG_INFINITY;
    for (u, v) in pairs {
        let su = evolve(spec, u, t_end, steps, prox_tol)?;
        let sv = evolve(spec, v, t_end, steps, prox_tol)?;
        let du = su.initial();
        let dv = sv.initial();
        l2_worst = l2_worst.max(
            su.final_state().l2_dist(sv.final_state())? - du.l2_dist(dv)?,
        );
        linf_worst = linf_worst.max(
            su.final_state().linf_dist(sv.final_state())? - du.linf_dist(dv)?,
        );

        let lo = u.meet(v)?;
        let hi = u.join(v)?;
        let slo = evolve(spec, &lo, t_end, steps, prox_tol)?;
        let shi = evolve(spec, &hi, t_end, steps, prox_tol)?;
        for (a, b) in slo.states.iter().zip(&shi.states) {
            for (&x, &y) in a.values().iter().zip(b.values()) {
                order_worst = order_worst.max(x - y);
            }
        }
    }
    let pass = l2_worst <= tol && order_worst <= tol && linf_worst <= tol;
    Ok(ContractionReport {
        pairs: pairs.len(),
        l2_worst,
        order_worst,
        linf_worst,
        tol,
        pass,
    })
}
