//! The algebra of convex energy functionals `F : L²(X,m) → [0,∞]`.
//!
//! A [`FunctionalSpec`] is a closed tree of built-in variants: the zero
//! functional, the mass-weighted quadratic, graph p-energies with per-edge
//! exponents, zero-order perturbations `u ↦ base(u) + Σₓ B(x,u(x))·μ(x)`,
//! and Dirichlet restrictions (`+∞` off the subspace `{u = 0 on set}`).
//!
//! Values live in the extended half-line `[0, ∞]`, represented as `f64`
//! with `f64::INFINITY` as the distinguished infinite value. Sums obey
//! `∞ + finite = ∞` and comparisons are total (no NaN is ever produced:
//! the only indeterminate product `∞·0` is avoided by skipping vertices
//! of measure zero).

use std::fmt;


use serde::de::{self, SeqAccess, Visitor};
use serde::ser::SerializeSeq;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::space::{Field, FiniteSpace, SpaceError, VertexSet};

#[derive(Debug, Error)]
pub enum FormError {
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("exponent {0} out of range: graph energies need 1 < p < ∞")]
    BadExponent(f64),
    #[error("expected {expected} per-edge exponents, got {got}")]
    ExponentCount { expected: usize, got: usize },
    #[error("power-law profile needs c_plus, c_minus >= 0 and q >= 1")]
    BadPowerLaw,
    #[error("well profile needs finite a <= 0 <= b")]
    BadWell,
    #[error("table profile step {0:?} is invalid")]
    BadTableStep((f64, f64)),
    #[error("vertex measure must be nonnegative and finite")]
    BadMeasure,
    #[error("field is not in the domain of the form")]
    NotInDomain,
    #[error("functional is not differentiable at the requested field (vertex {0})")]
    NotDifferentiable(usize),
    #[error("functional is infinite at the requested field")]
    InfiniteValue,
    #[error("tolerance must be strictly positive, got {0}")]
    BadTolerance(f64),
}

/// One step of a table profile: the function jumps to `level` strictly
/// beyond `at` (moving away from zero). Serialized as `[at, level]` with
/// `"inf"` accepted for an infinite level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableStep {
    pub at: f64,
    pub level: f64,
}

impl Serialize for TableStep {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(2))?;
        seq.serialize_element(&self.at)?;
        if self.level.is_finite() {
            seq.serialize_element(&self.level)?;
        } else {
            seq.serialize_element("inf")?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for TableStep {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct StepVisitor;
        impl<'de> Visitor<'de> for StepVisitor {
            type Value = TableStep;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                write!(f, "a [threshold, level] pair with level a number or \"inf\"")
            }
            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<TableStep, A::Error> {
                let at: f64 = seq
                    .next_element()?
                    .ok_or_else(|| de::Error::invalid_length(0, &self))?;
                #[derive(Deserialize)]
                #[serde(untagged)]
                enum Level {
                    Num(f64),
                    Word(String),
                }
                let level = match seq
                    .next_element::<Level>()?
                    .ok_or_else(|| de::Error::invalid_length(1, &self))?
                {
                    Level::Num(v) => v,
                    Level::Word(w) if w == "inf" => f64::INFINITY,
                    Level::Word(w) => {
                        return Err(de::Error::custom(format!("unknown level {w:?}")))
                    }
                };
                if seq.next_element::<serde_json::Value>()?.is_some() {
                    return Err(de::Error::invalid_length(3, &self));
                }
                Ok(TableStep { at, level })
            }
        }
        deserializer.deserialize_seq(StepVisitor)
    }
}

/// Per-vertex integrand descriptor `B(x, ·)`: bi-monotone (nonincreasing on
/// `(−∞,0)`, nondecreasing on `(0,∞)`), lower semicontinuous, `B(x,0) = 0`,
/// possibly `+∞`-valued. The same curve applies at every vertex; spatial
/// variation enters through the measure it is paired with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BProfile {
    Zero,
    /// `B(s) = c_plus·s^q` for `s ≥ 0`, `c_minus·|s|^q` for `s < 0`.
    PowerLaw { c_plus: f64, c_minus: f64, q: f64 },
    /// `B(s) = 0` on `[a, b]`, `+∞` outside; `a = b = 0` encodes a hard
    /// Dirichlet condition.
    Well { a: f64, b: f64 },
    /// Step function: `B(s) = sup{level : 0 < at < s}` for `s ≥ 0` using
    /// the `pos` steps, and symmetrically `sup{level : s < at < 0}` for
    /// `s ≤ 0` using `neg`. The strict comparison makes the value at a
    /// jump equal the limit from the side nearer zero, hence lower
    /// semicontinuous.
    Table {
        pos: Vec<TableStep>,
        neg: Vec<TableStep>,
    },
}

impl BProfile {
    pub fn validate(&self) -> Result<(), FormError> {
        match self {
            BProfile::Zero => Ok(()),
            BProfile::PowerLaw { c_plus, c_minus, q } => {
                if *c_plus >= 0.0 && *c_minus >= 0.0 && *q >= 1.0 && q.is_finite() {
                    Ok(())
                } else {
                    Err(FormError::BadPowerLaw)
                }
            }
            BProfile::Well { a, b } => {
                if a.is_finite() && b.is_finite() && *a <= 0.0 && *b >= 0.0 {
                    Ok(())
                } else {
                    Err(FormError::BadWell)
                }
            }
            BProfile::Table { pos, neg } => {
                for s in pos {
                    if !(s.at >= 0.0 && s.at.is_finite() && s.level >= 0.0) {
                        return Err(FormError::BadTableStep((s.at, s.level)));
                    }
                }
                for s in neg {
                    if !(s.at <= 0.0 && s.at.is_finite() && s.level >= 0.0) {
                        return Err(FormError::BadTableStep((s.at, s.level)));
                    }
                }
                Ok(())
            }
        }
    }

    /// Evaluate `B(s)`; may return `+∞`.
    pub fn value(&self, s: f64) -> f64 {
        match self {
            BProfile::Zero => 0.0,
            BProfile::PowerLaw { c_plus, c_minus, q } => {
                if s >= 0.0 {
                    c_plus * s.powf(*q)
                } else {
                    c_minus * (-s).powf(*q)
                }
            }
            BProfile::Well { a, b } => {
                if s >= *a && s <= *b {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            BProfile::Table { pos, neg } => {
                let mut v = 0.0f64;
                if s > 0.0 {
                    for step in pos {
                        if step.at < s {
                            v = v.max(step.level);
                        }
                    }
                } else if s < 0.0 {
                    for step in neg {
                        if step.at > s {
                            v = v.max(step.level);
                        }
                    }
                }
                v
            }
        }
    }

    /// Derivative of `B` at `s` where it exists; `Err` carries no vertex
    /// context here (the caller attaches it).
    fn derivative(&self, s: f64) -> Result<f64, ()> {
        match self {
            BProfile::Zero => Ok(0.0),
            BProfile::PowerLaw { c_plus, c_minus, q } => {
                if *q > 1.0 {
                    let c = if s >= 0.0 { *c_plus } else { *c_minus };
                    Ok(c * *q * s.abs().powf(*q - 1.0) * if s >= 0.0 { 1.0 } else { -1.0 })
                } else if s > 0.0 {
                    Ok(*c_plus)
                } else if s < 0.0 {
                    Ok(-*c_minus)
                } else if *c_plus == 0.0 && *c_minus == 0.0 {
                    Ok(0.0)
                } else {
                    Err(())
                }
            }
            BProfile::Well { a, b } => {
                if s > *a && s < *b {
                    Ok(0.0)
                } else {
                    Err(())
                }
            }
            BProfile::Table { pos, neg } => {
                if self.value(s).is_infinite() {
                    return Err(());
                }
                let at_jump = pos.iter().chain(neg).any(|step| step.at == s);
                if at_jump {
                    Err(())
                } else {
                    Ok(0.0)
                }
            }
        }
    }

    /// Whether the profile is convex as a function on the line. Step
    /// tables with finite jumps are bi-monotone but not convex; they take
    /// part in evaluation and reconstruction, not in gradient flows.
    pub fn is_convex(&self) -> bool {
        match self {
            BProfile::Zero | BProfile::PowerLaw { .. } | BProfile::Well { .. } => true,
            BProfile::Table { pos, neg } => pos
                .iter()
                .chain(neg)
                .all(|step| step.level == 0.0 || step.level.is_infinite()),
        }
    }
}

/// Nonnegative mass per vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VertexMeasure {
    weights: Vec<f64>,
}

impl VertexMeasure {
    pub fn new(weights: Vec<f64>) -> Result<Self, FormError> {
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(FormError::BadMeasure);
        }
        Ok(VertexMeasure { weights })
    }

    pub fn zeros(n: usize) -> Self {
        VertexMeasure {
            weights: vec![0.0; n],
        }
    }

    /// Unit mass on the given vertices, zero elsewhere.
    pub fn on_set(n: usize, set: &VertexSet, w: f64) -> Result<Self, FormError> {
        if !(w >= 0.0) {
            return Err(FormError::BadMeasure);
        }
        let mut weights = vec![0.0; n];
        for &v in set.indices() {
            weights[v] = w;
        }
        Ok(VertexMeasure { weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn add(&self, other: &VertexMeasure) -> VertexMeasure {
        VertexMeasure {
            weights: self
                .weights
                .iter()
                .zip(&other.weights)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn scale(&self, c: f64) -> VertexMeasure {
        VertexMeasure {
            weights: self.weights.iter().map(|w| c * w).collect(),
        }
    }
}

/// A convex functional on `L²(X, m)`, built as a tree of variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FunctionalSpec {
    Zero,
    /// `(scale/2)·‖u‖²_{L²(m)}`.
    Quadratic { scale: f64 },
    /// `Σ_e w_e |u_i − u_j|^{p_e} / p_e` with one exponent per edge.
    GraphPEnergy { exponents: Vec<f64> },
    /// `base(u) + Σₓ B(x, u(x))·μ(x)`; vertices with `μ(x) = 0` do not
    /// contribute even when `B` is infinite there.
    Perturbed {
        base: Box<FunctionalSpec>,
        profile: BProfile,
        mu: VertexMeasure,
    },
    /// `base(u)` if `u` vanishes identically on `set`, `+∞` otherwise.
    DirichletRestricted {
        base: Box<FunctionalSpec>,
        set: VertexSet,
    },
}

impl FunctionalSpec {
    /// Graph energy with the same exponent on every edge.
    pub fn graph_p(space: &FiniteSpace, p: f64) -> Self {
        FunctionalSpec::GraphPEnergy {
            exponents: vec![p; space.edges().len()],
        }
    }

    pub fn perturbed(base: FunctionalSpec, profile: BProfile, mu: VertexMeasure) -> Self {
        FunctionalSpec::Perturbed {
            base: Box::new(base),
            profile,
            mu,
        }
    }

    pub fn restricted(base: FunctionalSpec, set: VertexSet) -> Self {
        FunctionalSpec::DirichletRestricted {
            base: Box::new(base),
            set,
        }
    }

    /// Structural validation against a space: exponent ranges and counts,
    /// profile parameter ranges, measure lengths, set indices.
    pub fn validate(&self, space: &FiniteSpace) -> Result<(), FormError> {
        match self {
            FunctionalSpec::Zero => Ok(()),
            FunctionalSpec::Quadratic { scale } => {
                if *scale > 0.0 && scale.is_finite() {
                    Ok(())
                } else {
                    Err(FormError::BadExponent(*scale))
                }
            }
            FunctionalSpec::GraphPEnergy { exponents } => {
                if exponents.len() != space.edges().len() {
                    return Err(FormError::ExponentCount {
                        expected: space.edges().len(),
                        got: exponents.len(),
                    });
                }
                for &p in exponents {
                    if !(p > 1.0) || !p.is_finite() {
                        return Err(FormError::BadExponent(p));
                    }
                }
                Ok(())
            }
            FunctionalSpec::Perturbed { base, profile, mu } => {
                base.validate(space)?;
                profile.validate()?;
                if mu.len() != space.n() {
                    return Err(FormError::BadMeasure);
                }
                Ok(())
            }
            FunctionalSpec::DirichletRestricted { base, set } => {
                base.validate(space)?;
                set.validate(space.n())?;
                Ok(())
            }
        }
    }

    /// Exact functional value in `[0, ∞]`.
    pub fn eval(&self, u: &Field) -> Result<f64, FormError> {
        let space = u.space();
        match self {
            FunctionalSpec::Zero => Ok(0.0),
            FunctionalSpec::Quadratic { scale } => {
                let n2: f64 = u
                    .values()
                    .iter()
                    .zip(space.masses())
                    .map(|(&v, &m)| m * v * v)
                    .sum();
                Ok(0.5 * scale * n2)
            }
            FunctionalSpec::GraphPEnergy { exponents } => {
                if exponents.len() != space.edges().len() {
                    return Err(FormError::ExponentCount {
                        expected: space.edges().len(),
                        got: exponents.len(),
                    });
                }
                let mut total = 0.0;
                for (e, &p) in space.edges().iter().zip(exponents) {
                    let d = (u.values()[e.i] - u.values()[e.j]).abs();
                    total += e.weight * d.powf(p) / p;
                }
                Ok(total)
            }
            FunctionalSpec::Perturbed { base, profile, mu } => {
                let mut total = base.eval(u)?;
                for (x, &w) in mu.weights().iter().enumerate() {
                    if w > 0.0 {
                        total += w * profile.value(u.values()[x]);
                        if total.is_infinite() {
                            return Ok(f64::INFINITY);
                        }
                    }
                }
                Ok(total)
            }
            FunctionalSpec::DirichletRestricted { base, set } => {
                if set.indices().iter().any(|&x| u.values()[x] != 0.0) {
                    Ok(f64::INFINITY)
                } else {
                    base.eval(u)
                }
            }
        }
    }

    /// The `L²(m)`-gradient at `u`, where the functional is finite and
    /// differentiable. The Euclidean gradient is the returned field
    /// multiplied componentwise by the masses.
    pub fn l2_gradient(&self, u: &Field) -> Result<Field, FormError> {
        let space = u.space();
        let grad = self.euclidean_gradient(u)?;
        let values = grad
            .iter()
            .zip(space.masses())
            .map(|(g, m)| g / m)
            .collect();
        Ok(Field::new(space, values)?)
    }

    /// Euclidean gradient `∂F/∂uᵢ` as a plain vector.
    pub(crate) fn euclidean_gradient(&self, u: &Field) -> Result<Vec<f64>, FormError> {
        let space = u.space();
        let mut g = vec![0.0; space.n()];
        self.accumulate_euclidean_gradient(u, &mut g)?;
        Ok(g)
    }

    fn accumulate_euclidean_gradient(&self, u: &Field, g: &mut [f64]) -> Result<(), FormError> {
        let space = u.space();
        match self {
            FunctionalSpec::Zero => Ok(()),
            FunctionalSpec::Quadratic { scale } => {
                for ((gi, &v), &m) in g.iter_mut().zip(u.values()).zip(space.masses()) {
                    *gi += scale * m * v;
                }
                Ok(())
            }
            FunctionalSpec::GraphPEnergy { exponents } => {
                if exponents.len() != space.edges().len() {
                    return Err(FormError::ExponentCount {
                        expected: space.edges().len(),
                        got: exponents.len(),
                    });
                }
                for (e, &p) in space.edges().iter().zip(exponents) {
                    let d = u.values()[e.i] - u.values()[e.j];
                    let slope = e.weight * d.abs().powf(p - 1.0) * d.signum_or_zero();
                    g[e.i] += slope;
                    g[e.j] -= slope;
                }
                Ok(())
            }
            FunctionalSpec::Perturbed { base, profile, mu } => {
                base.accumulate_euclidean_gradient(u, g)?;
                for (x, &w) in mu.weights().iter().enumerate() {
                    if w > 0.0 {
                        let s = u.values()[x];
                        if profile.value(s).is_infinite() {
                            return Err(FormError::InfiniteValue);
                        }
                        let d = profile
                            .derivative(s)
                            .map_err(|_| FormError::NotDifferentiable(x))?;
                        g[x] += w * d;
                    }
                }
                Ok(())
            }
            FunctionalSpec::DirichletRestricted { base, set } => {
                if set.is_empty() {
                    base.accumulate_euclidean_gradient(u, g)
                } else {
                    Err(FormError::NotDifferentiable(set.indices()[0]))
                }
            }
        }
    }

    /// Whether `eval(-u) = eval(u)` holds structurally.
    pub fn is_symmetric(&self) -> bool {
        match self {
            FunctionalSpec::Zero
            | FunctionalSpec::Quadratic { .. }
            | FunctionalSpec::GraphPEnergy { .. } => true,
            FunctionalSpec::Perturbed { base, profile, mu } => {
                base.is_symmetric()
                    && (mu.weights().iter().all(|&w| w == 0.0)
                        || match profile {
                            BProfile::Zero => true,
                            BProfile::PowerLaw { c_plus, c_minus, .. } => c_plus == c_minus,
                            BProfile::Well { a, b } => *a == -*b,
                            BProfile::Table { pos, neg } => {
                                pos.len() == neg.len()
                                    && pos.iter().zip(neg).all(|(p, n)| {
                                        p.at == -n.at && p.level == n.level
                                    })
                            }
                        })
            }
            FunctionalSpec::DirichletRestricted { base, .. } => base.is_symmetric(),
        }
    }

    /// Whether every profile in the tree is convex, so the whole
    /// functional is convex and can drive a gradient flow.
    pub fn is_convex(&self) -> bool {
        match self {
            FunctionalSpec::Zero
            | FunctionalSpec::Quadratic { .. }
            | FunctionalSpec::GraphPEnergy { .. } => true,
            FunctionalSpec::Perturbed { base, profile, .. } => {
                base.is_convex() && profile.is_convex()
            }
            FunctionalSpec::DirichletRestricted { base, .. } => base.is_convex(),
        }
    }

    /// Canonical JSON encoding of the spec tree.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("spec serialization cannot fail")
    }

    pub fn from_json_str(s: &str) -> Result<Self, FormError> {
        let spec: FunctionalSpec =
            serde_json::from_str(s).map_err(|e| FormError::Space(SpaceError::Json(e)))?;
        Ok(spec)
    }
}

trait SignumOrZero {
    fn signum_or_zero(self) -> f64;
}

impl SignumOrZero for f64 {
    fn signum_or_zero(self) -> f64 {
        if self > 0.0 {
            1.0
        } else if self < 0.0 {
            -1.0
        } else {
            0.0
        }
    }
}

/// `E₁(u) = ‖u‖²_{L²(m)} + E(u)`, the Luxemburg gauge integrand.
pub fn e1(spec: &FunctionalSpec, u: &Field) -> Result<f64, FormError> {
    let n = u.l2_norm();
    Ok(n * n + spec.eval(u)?)
}

/// Luxemburg norm `inf{λ > 0 : E₁(u/λ) ≤ 1}` of `u` in the Dirichlet
/// space of `spec`, computed by monotone bisection. Returns
/// [`FormError::NotInDomain`] when no scaling brings `E₁` below one.
pub fn luxemburg_norm(spec: &FunctionalSpec, u: &Field, tol: f64) -> Result<f64, FormError> {
    if !(tol > 0.0) {
        return Err(FormError::BadTolerance(tol));
    }
    if u.values().iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let feasible = |lambda: f64| -> Result<bool, FormError> {
        Ok(e1(spec, &u.scale(1.0 / lambda))? <= 1.0)
    };
    let mut hi = u.l2_norm().max(1.0);
    let mut doublings = 0;
    while !feasible(hi)? {
        hi *= 2.0;
        doublings += 1;
        if doublings > 60 {
            return Err(FormError::NotInDomain);
        }
    }
    let mut lo = 0.0;
    let mut iterations = 0;
    while hi - lo > tol && iterations < 300 {
        let mid = 0.5 * (lo + hi);
        if feasible(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
        iterations += 1;
    }
    Ok(hi)
}
