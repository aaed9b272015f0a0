//! Norm-capacity of vertex sets.
//!
//! `normcap(A) = inf{‖u‖_D : u ≥ 1 on A}` where `‖·‖_D` is the Luxemburg
//! norm of the Dirichlet space of a form `E`. On a finite space with the
//! discrete topology every set is its own open neighborhood, so the
//! constraint is simply `u ≥ 1 on A` and the infimum is computed by an
//! outer bisection on the candidate norm value with an inner convex
//! feasibility solve: a level `t` is feasible iff
//! `min{E₁(w) : w ≥ 1/t on A} ≤ 1`.
//!
//! With all vertex masses positive, `normcap({x}) ≥ sqrt(m_x) > 0`
//! whenever the indicator of `x` has finite norm, so nonempty polar sets
//! do not occur for the built-in forms; measure-theoretic absolute
//! continuity against the capacity is vacuous at this scale and the
//! reconstruction machinery only requires reference measures to be
//! nonnegative.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forms::{FormError, FunctionalSpec};
use crate::solver::{minimize_e1_with_lower_bounds, ProxError};
use crate::space::{Field, FiniteSpace, SpaceError, VertexSet};
use std::sync::Arc;

#[derive(Debug, Error)]
pub enum CapacityError {
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Form(#[from] FormError),
    #[error("inner feasibility solve failed: {0}")]
    Solver(#[from] ProxError),
    #[error("no field of finite norm lies above 1 on the set: capacity is infinite")]
    InfiniteCapacity,
    #[error("tolerance must be strictly positive, got {0}")]
    BadTolerance(f64),
}

/// Result of a capacity computation.
#[derive(Debug, Clone)]
pub struct CapacityResult {
    pub value: f64,
    pub minimizer: Field,
    /// outer bisection width at termination
    pub outer_tol: f64,
    /// inner solver certificate tolerance
    pub inner_tol: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CapacityResultJson {
    pub value: f64,
    pub minimizer: Vec<f64>,
    pub outer_tol: f64,
    pub inner_tol: f64,
}

impl CapacityResult {
    pub fn to_json_value(&self) -> CapacityResultJson {
        CapacityResultJson {
            value: self.value,
            minimizer: self.minimizer.values().to_vec(),
            outer_tol: self.outer_tol,
            inner_tol: self.inner_tol,
        }
    }
}

/// Inner solve: is `min{E₁(w) : w ≥ 1/t on A} ≤ 1`?
fn feasible_at(
    space: &Arc<FiniteSpace>,
    spec: &FunctionalSpec,
    set: &VertexSet,
    t: f64,
    inner_tol: f64,
) -> Result<Option<Vec<f64>>, CapacityError> {
    let mut lower = vec![f64::NEG_INFINITY; space.n()];
    for &v in set.indices() {
        lower[v] = 1.0 / t;
    }
    match minimize_e1_with_lower_bounds(space, spec, &lower, inner_tol) {
        Ok(solution) => {
            if solution.objective <= 1.0 {
                Ok(Some(solution.point))
            } else {
                Ok(None)
            }
        }
        Err(ProxError::InfeasibleConstraints { .. }) => Err(CapacityError::InfiniteCapacity),
        Err(e) => Err(e.into()),
    }
}

/// Compute `normcap(A)` for the form `spec`, with `normcap(∅) = 0`.
///
/// The returned minimizer satisfies the constraint exactly (`≥ 1` on `A`)
/// and its Luxemburg norm is within `tol` of the reported value.
pub fn normcap(
    space: &Arc<FiniteSpace>,
    spec: &FunctionalSpec,
    set: &VertexSet,
    tol: f64,
) -> Result<CapacityResult, CapacityError> {
    if !(tol > 0.0) {
        return Err(CapacityError::BadTolerance(tol));
    }
    set.validate(space.n())?;
    spec.validate(space)?;
    if set.is_empty() {
        return Ok(CapacityResult {
            value: 0.0,
            minimizer: Field::zeros(space),
            outer_tol: tol,
            inner_tol: tol,
        });
    }
    let inner_tol = (tol * 1e-3).min(1e-9);

    // Bracket: grow t until feasible.
    let indicator = set.indicator(space);
    let mut hi = indicator.l2_norm().max(1.0);
    let mut doublings = 0;
    let mut witness = loop {
        if let Some(w) = feasible_at(space, spec, set, hi, inner_tol)? {
            break (hi, w);
        }
        hi *= 2.0;
        doublings += 1;
        if doublings > 60 {
            return Err(CapacityError::InfiniteCapacity);
        }
    };
    let mut lo = 0.0;
    let mut iterations = 0;
    while hi - lo > tol && iterations < 300 {
        let mid = 0.5 * (lo + hi);
        match feasible_at(space, spec, set, mid, inner_tol)? {
            Some(w) => {
                hi = mid;
                witness = (mid, w);
            }
            None => lo = mid,
        }
        iterations += 1;
    }

    let (t, w) = witness;
    let minimizer = Field::new(space, w.iter().map(|x| t * x).collect())?;
    Ok(CapacityResult {
        value: hi,
        minimizer,
        outer_tol: tol,
        inner_tol,
    })
}

/// Worst observed violations of the capacity lemmas over set families.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CapacityLemmasReport {
    pub pairs: usize,
    /// worst `normcap(A ∪ B) − normcap(A) − normcap(B)`
    pub subadditivity_worst: f64,
    /// worst `normcap(A) − normcap(B)` over nested `A ⊆ B`
    pub monotonicity_worst: f64,
    /// worst `normcap(∪ A_n) − Σ normcap(A_n)` over supplied families
    pub union_bound_worst: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Verify subadditivity and monotonicity on pairs, and the countable
/// (here: finite) subadditivity bound on whole families; all within
/// `3·tol` bisection slack.
pub fn check_capacity_lemmas(
    space: &Arc<FiniteSpace>,
    spec: &FunctionalSpec,
    pairs: &[(VertexSet, VertexSet)],
    families: &[Vec<VertexSet>],
    tol: f64,
) -> Result<CapacityLemmasReport, CapacityError> {
    let slack = 3.0 * tol;
    let mut subadd = f64::NEG_INFINITY;
    let mut mono = f64::NEG_INFINITY;
    for (a, b) in pairs {
        let ca = normcap(space, spec, a, tol)?.value;
        let cb = normcap(space, spec, b, tol)?.value;
        let cu = normcap(space, spec, &a.union(b), tol)?.value;
        subadd = subadd.max(cu - ca - cb);
        if a.is_subset_of(b) {
            mono = mono.max(ca - cb);
        } else {
            // monotonicity against the union instead
            mono = mono.max(ca - cu).max(cb - cu);
        }
    }
    let mut union_bound = f64::NEG_INFINITY;
    for family in families {
        let mut sum = 0.0;
        let mut all = VertexSet::empty();
        for a in family {
            sum += normcap(space, spec, a, tol)?.value;
            all = all.union(a);
        }
        let cu = normcap(space, spec, &all, tol)?.value;
        union_bound = union_bound.max(cu - sum);
    }
    let pass = subadd <= slack && mono <= slack && union_bound <= slack;
    Ok(CapacityLemmasReport {
        pairs: pairs.len(),
        subadditivity_worst: subadd,
        monotonicity_worst: mono,
        union_bound_worst: union_bound,
        tol,
        pass,
    })
}
