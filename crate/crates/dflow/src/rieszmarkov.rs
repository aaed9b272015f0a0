//! Constructive Riesz–Markov machinery on finite spaces.
//!
//! Given a black-box functional `ψ` on the nonnegative cone that is
//! monotone, local, and vanishes at zero, the set function
//! `μ_u(K) = inf{ψ(f) : f ≥ u on K, f ≥ 0}` is computed exactly as
//! `ψ(u·1_K)` (the infimum is attained at the smallest feasible field).
//! Per-vertex masses yield Radon–Nikodym densities against a reference
//! measure built from a dictionary of fields, and the integrand is
//! recovered as the step function
//! `B(x, s) = sup{B_{f_n}(x) : f_n(x) < s}` on the convex hull of the
//! dictionary values at `x` (together with zero), `+∞` outside.
//!
//! Signed functionals are handled by splitting `ψ₁(u) = ψ(u)`,
//! `ψ₂(u) = ψ(−u)` on the positive cone, reconstructing both against a
//! common reference measure, and gluing the two step functions into one
//! bi-monotone integrand.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forms::{BProfile, FormError, FunctionalSpec, VertexMeasure};
use crate::space::{Field, FiniteSpace, SpaceError, VertexSet};

#[derive(Debug, Error)]
pub enum RieszMarkovError {
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Form(#[from] FormError),
    #[error("field must be nonnegative for positive-cone evaluation")]
    NegativeField,
    #[error("psi is infinite on a dictionary entry or restriction; the measure is not finite")]
    InfiniteMass,
    #[error(
        "absolute continuity violated at vertex {vertex}: mass {mass} against zero reference"
    )]
    AbsoluteContinuity { vertex: usize, mass: f64 },
    #[error("dictionary entry {0} is not nonnegative")]
    BadDictionaryEntry(usize),
    #[error("ladder values must increase strictly inside (0, 1)")]
    BadLadder,
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// A black-box functional on the nonnegative cone of a space.
#[derive(Clone)]
pub struct PsiOracle {
    space: Arc<FiniteSpace>,
    eval: Arc<dyn Fn(&Field) -> f64 + Send + Sync>,
    domain_hint: String,
}

impl PsiOracle {
    pub fn from_fn(
        space: Arc<FiniteSpace>,
        eval: impl Fn(&Field) -> f64 + Send + Sync + 'static,
        domain_hint: impl Into<String>,
    ) -> Self {
        PsiOracle {
            space,
            eval: Arc::new(eval),
            domain_hint: domain_hint.into(),
        }
    }

    /// `ψ(f) = Σₓ B(f(x))·μ(x)` for a profile and a vertex measure.
    pub fn from_profile(
        space: Arc<FiniteSpace>,
        profile: BProfile,
        mu: VertexMeasure,
    ) -> Result<Self, RieszMarkovError> {
        profile.validate()?;
        let hint = format!("profile perturbation, total mass {}", mu.total());
        Ok(PsiOracle {
            space,
            eval: Arc::new(move |u: &Field| {
                let mut total = 0.0;
                for (x, &w) in mu.weights().iter().enumerate() {
                    if w > 0.0 {
                        total += w * profile.value(u.values()[x]);
                    }
                }
                total
            }),
            domain_hint: hint,
        })
    }

    /// `ψ = F − E` on the domain of `F`, `+∞` outside.
    pub fn from_difference(
        space: Arc<FiniteSpace>,
        f_spec: FunctionalSpec,
        e_spec: FunctionalSpec,
    ) -> Self {
        PsiOracle {
            space,
            eval: Arc::new(move |u: &Field| {
                let fv = f_spec.eval(u).expect("validated spec");
                if fv.is_infinite() {
                    return f64::INFINITY;
                }
                let ev = e_spec.eval(u).expect("validated spec");
                if ev.is_infinite() {
                    return f64::INFINITY;
                }
                fv - ev
            }),
            domain_hint: "difference of forms".to_string(),
        }
    }

    pub fn space(&self) -> &Arc<FiniteSpace> {
        &self.space
    }

    pub fn domain_hint(&self) -> &str {
        &self.domain_hint
    }

    /// Evaluate on a nonnegative field.
    pub fn eval(&self, u: &Field) -> Result<f64, RieszMarkovError> {
        if !u.is_nonnegative() {
            return Err(RieszMarkovError::NegativeField);
        }
        Ok((self.eval)(u))
    }

    fn eval_unchecked(&self, u: &Field) -> f64 {
        (self.eval)(u)
    }

    /// Validate the standing hypotheses by sampling: `ψ(0) = 0`, monotone
    /// on the cone, local on disjoint supports.
    pub fn validate(
        &self,
        sampler: &crate::properties::Sampler,
        tol: f64,
    ) -> Result<PsiValidation, RieszMarkovError> {
        let zero_value = self.eval(&Field::zeros(&self.space))?;
        let eval = |u: &Field| self.eval_unchecked(u);
        let monotone =
            crate::properties::check_cone_monotone(&self.space, &eval, sampler, tol)?;
        let local = crate::properties::check_locality(&self.space, &eval, sampler, tol)?;
        Ok(PsiValidation {
            zero_value,
            monotone_worst: monotone.worst,
            locality_worst: local.worst,
            pass: zero_value == 0.0 && monotone.pass && local.pass,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PsiValidation {
    pub zero_value: f64,
    pub monotone_worst: f64,
    pub locality_worst: f64,
    pub pass: bool,
}

/// A functional evaluable on signed fields, to be split into two
/// positive-cone oracles.
#[derive(Clone)]
pub struct SignedPsi {
    space: Arc<FiniteSpace>,
    eval: Arc<dyn Fn(&Field) -> f64 + Send + Sync>,
}

impl SignedPsi {
    pub fn from_fn(
        space: Arc<FiniteSpace>,
        eval: impl Fn(&Field) -> f64 + Send + Sync + 'static,
    ) -> Self {
        SignedPsi {
            space,
            eval: Arc::new(eval),
        }
    }

    pub fn from_profile(
        space: Arc<FiniteSpace>,
        profile: BProfile,
        mu: VertexMeasure,
    ) -> Result<Self, RieszMarkovError> {
        profile.validate()?;
        Ok(SignedPsi {
            space,
            eval: Arc::new(move |u: &Field| {
                let mut total = 0.0;
                for (x, &w) in mu.weights().iter().enumerate() {
                    if w > 0.0 {
                        total += w * profile.value(u.values()[x]);
                    }
                }
                total
            }),
        })
    }

    pub fn space(&self) -> &Arc<FiniteSpace> {
        &self.space
    }

    pub fn eval(&self, u: &Field) -> f64 {
        (self.eval)(u)
    }
}

/// Split a signed functional into the pair `ψ₁(u) = ψ(u)`,
/// `ψ₂(u) = ψ(−u)` of positive-cone oracles.
pub fn decompose_signed(psi: &SignedPsi) -> (PsiOracle, PsiOracle) {
    let pos = {
        let eval = Arc::clone(&psi.eval);
        PsiOracle {
            space: Arc::clone(&psi.space),
            eval: Arc::new(move |u: &Field| eval(u)),
            domain_hint: "positive part of signed functional".to_string(),
        }
    };
    let neg = {
        let eval = Arc::clone(&psi.eval);
        PsiOracle {
            space: Arc::clone(&psi.space),
            eval: Arc::new(move |u: &Field| eval(&u.scale(-1.0))),
            domain_hint: "negative part of signed functional".to_string(),
        }
    };
    (pos, neg)
}

/// `μ_u(K) = inf{ψ(f) : f ≥ u on K, f ≥ 0} = ψ(u·1_K)`.
///
/// The infimum is attained at `u·1_K` because `ψ` is monotone on the
/// nonnegative cone and every feasible `f` dominates `u·1_K` pointwise.
/// An infinite value means `u·1_K` leaves the domain of `ψ` and is
/// reported as [`RieszMarkovError::InfiniteMass`].
pub fn mu_u(psi: &PsiOracle, u: &Field, set: &VertexSet) -> Result<f64, RieszMarkovError> {
    if !u.is_nonnegative() {
        return Err(RieszMarkovError::NegativeField);
    }
    set.validate(psi.space.n())?;
    let mass = psi.eval_unchecked(&u.masked(set));
    if mass.is_infinite() {
        return Err(RieszMarkovError::InfiniteMass);
    }
    Ok(mass)
}

/// Per-vertex masses `x ↦ μ_u({x})` as a vertex measure.
pub fn vertex_masses(psi: &PsiOracle, u: &Field) -> Result<VertexMeasure, RieszMarkovError> {
    let n = psi.space.n();
    let mut masses = Vec::with_capacity(n);
    for x in 0..n {
        masses.push(mu_u(psi, u, &VertexSet::new(vec![x]))?);
    }
    Ok(VertexMeasure::new(masses)?)
}

/// Radon–Nikodym density of `mu_u` against `mu`: the per-vertex ratio,
/// zero where both vanish, and a named error where `mu_u` charges a
/// vertex of zero reference mass.
pub fn radon_nikodym(
    mu_u_values: &VertexMeasure,
    mu: &VertexMeasure,
) -> Result<Vec<f64>, RieszMarkovError> {
    mu_u_values
        .weights()
        .iter()
        .zip(mu.weights())
        .enumerate()
        .map(|(vertex, (&num, &den))| {
            if den > 0.0 {
                Ok(num / den)
            } else if num == 0.0 {
                Ok(0.0)
            } else {
                Err(RieszMarkovError::AbsoluteContinuity { vertex, mass: num })
            }
        })
        .collect()
}

/// Worst gaps of the five structural lemmas of the set function `μ_u`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasureLemmasReport {
    /// worst `|μ_u(K₁∪K₂) − μ_u(K₁) − μ_u(K₂)|` over disjoint pairs
    pub additivity_worst: f64,
    /// worst `μ_u(K₁) − μ_u(K₂)` over nested pairs `K₁ ⊆ K₂`
    pub monotonicity_worst: f64,
    /// worst `μ_u(K₁∪K₂) + μ_u(K₁∩K₂) − μ_u(K₁) − μ_u(K₂)`
    pub submodularity_worst: f64,
    /// worst `μ_u(G) − μ_v(G)` over `G ⊆ {u ≤ v}`
    pub comparison_worst: f64,
    /// worst `μ_u(K)` over `K ⊆ {u = 0}`
    pub zero_set_worst: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Check additivity on disjoint compacts, monotonicity, submodularity,
/// the comparison lemma, and vanishing on the zero set, over the supplied
/// set families.
pub fn check_measure_lemmas(
    psi: &PsiOracle,
    u: &Field,
    v: &Field,
    sets: &[(VertexSet, VertexSet)],
    tol: f64,
) -> Result<MeasureLemmasReport, RieszMarkovError> {
    let mut additivity: f64 = f64::NEG_INFINITY;
    let mut monotonicity: f64 = f64::NEG_INFINITY;
    let mut submodularity: f64 = f64::NEG_INFINITY;
    let mut comparison: f64 = f64::NEG_INFINITY;
    let mut zero_set: f64 = f64::NEG_INFINITY;

    let below: VertexSet = VertexSet::new(
        (0..psi.space.n())
            .filter(|&x| u.values()[x] <= v.values()[x])
            .collect(),
    );
    let zeros: VertexSet = VertexSet::new(
        (0..psi.space.n())
            .filter(|&x| u.values()[x] == 0.0)
            .collect(),
    );

    for (k1, k2) in sets {
        let m1 = mu_u(psi, u, k1)?;
        let m2 = mu_u(psi, u, k2)?;
        let union = mu_u(psi, u, &k1.union(k2))?;
        let inter = mu_u(psi, u, &k1.intersection(k2))?;
        if k1.intersection(k2).is_empty() {
            additivity = additivity.max((union - m1 - m2).abs());
        }
        if k1.is_subset_of(k2) {
            monotonicity = monotonicity.max(m1 - m2);
        }
        monotonicity = monotonicity.max(m1 - union).max(m2 - union);
        submodularity = submodularity.max(union + inter - m1 - m2);

        let g = k1.intersection(&below);
        comparison = comparison.max(mu_u(psi, u, &g)? - mu_u(psi, v, &g)?);
        let z = k1.intersection(&zeros);
        zero_set = zero_set.max(mu_u(psi, u, &z)?);
    }

    let pass = additivity.max(monotonicity).max(submodularity) <= tol
        && comparison <= tol
        && zero_set <= tol;
    Ok(MeasureLemmasReport {
        additivity_worst: additivity,
        monotonicity_worst: monotonicity,
        submodularity_worst: submodularity,
        comparison_worst: comparison,
        zero_set_worst: zero_set,
        tol,
        pass,
    })
}

/// A finite ordered family of nonnegative bounded fields. For every
/// reconstruction target `u` the family also contains the scaled copies
/// `λ_m·u` along a ladder `λ_m ↑ 1`, followed by `u` itself.
#[derive(Clone)]
pub struct Dictionary {
    entries: Vec<Field>,
    ladder: Vec<f64>,
}

impl Dictionary {
    /// The default ladder `λ_m = 1 − 2^{−m}`, `m = 1..=depth`.
    pub fn default_ladder(depth: usize) -> Vec<f64> {
        (1..=depth).map(|m| 1.0 - 0.5f64.powi(m as i32)).collect()
    }

    pub fn new(entries: Vec<Field>) -> Result<Self, RieszMarkovError> {
        for (k, e) in entries.iter().enumerate() {
            if !e.is_nonnegative() {
                return Err(RieszMarkovError::BadDictionaryEntry(k));
            }
        }
        Ok(Dictionary {
            entries,
            ladder: Vec::new(),
        })
    }

    /// Ladder copies `λ₁u, …, λ_du, u` for every target, concatenated in
    /// target order.
    pub fn for_targets(targets: &[Field], ladder: &[f64]) -> Result<Self, RieszMarkovError> {
        let mut prev = 0.0;
        for &l in ladder {
            if !(l > prev && l < 1.0) {
                return Err(RieszMarkovError::BadLadder);
            }
            prev = l;
        }
        let mut entries = Vec::with_capacity(targets.len() * (ladder.len() + 1));
        for (k, target) in targets.iter().enumerate() {
            if !target.is_nonnegative() {
                return Err(RieszMarkovError::BadDictionaryEntry(k));
            }
            for &l in ladder {
                entries.push(target.scale(l));
            }
            entries.push(target.clone());
        }
        Ok(Dictionary {
            entries,
            ladder: ladder.to_vec(),
        })
    }

    pub fn entries(&self) -> &[Field] {
        &self.entries
    }

    pub fn ladder(&self) -> &[f64] {
        &self.ladder
    }

    /// Largest ladder value below one, when a ladder was declared.
    pub fn ladder_top(&self) -> Option<f64> {
        self.ladder.last().copied()
    }

    pub fn union(&self, other: &Dictionary) -> Dictionary {
        let mut entries = self.entries.clone();
        entries.extend(other.entries.iter().cloned());
        let ladder = if self.ladder == other.ladder {
            self.ladder.clone()
        } else if self.ladder.is_empty() {
            other.ladder.clone()
        } else {
            self.ladder.clone()
        };
        Dictionary { entries, ladder }
    }
}

/// Reference measure `μ(G) = Σₙ 2^{−n}·μ_{f_n}(G) / (1 + μ_{f_n}(X))`
/// over the dictionary entries, the sum truncated at the dictionary size
/// and `n` starting at one.
pub fn build_reference_measure(
    psi: &PsiOracle,
    dictionary: &Dictionary,
) -> Result<VertexMeasure, RieszMarkovError> {
    let n = psi.space.n();
    let mut total = vec![0.0; n];
    let mut weight = 1.0;
    for entry in dictionary.entries() {
        weight *= 0.5;
        let masses = vertex_masses(psi, entry)?;
        let full: f64 = masses.total();
        let scale = weight / (1.0 + full);
        for (t, &m) in total.iter_mut().zip(masses.weights()) {
            *t += scale * m;
        }
    }
    Ok(VertexMeasure::new(total)?)
}

/// Common reference measure for two functionals: the sum of their
/// individual reference measures over the union dictionary.
pub fn build_common_reference_measure(
    psi_a: &PsiOracle,
    dict_a: &Dictionary,
    psi_b: &PsiOracle,
    dict_b: &Dictionary,
) -> Result<VertexMeasure, RieszMarkovError> {
    let union = dict_a.union(dict_b);
    let mu_a = build_reference_measure(psi_a, &union)?;
    let mu_b = build_reference_measure(psi_b, &union)?;
    Ok(mu_a.add(&mu_b))
}

/// The reconstructed integrand at one vertex: thresholds with prefix-max
/// levels, plus the reach `upper = max f_n(x)` of the dictionary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexCurve {
    /// `(threshold, level)` pairs sorted by threshold, levels
    /// nondecreasing after prefix-maxing
    pub steps: Vec<(f64, f64)>,
    /// upper end of `I(x)`, the convex hull of dictionary values and zero
    pub upper: f64,
}

impl VertexCurve {
    /// `sup{level : threshold < s}` for `0 ≤ s ≤ upper`, `+∞` beyond;
    /// the empty supremum is zero, so the value at zero is zero.
    pub fn value(&self, s: f64) -> f64 {
        if s > self.upper {
            return f64::INFINITY;
        }
        let mut level = 0.0f64;
        for &(threshold, l) in &self.steps {
            if threshold < s {
                level = l;
            } else {
                break;
            }
        }
        level
    }
}

/// Per-vertex reconstructed integrand `B(x, ·)` on the nonnegative axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructedB {
    pub curves: Vec<VertexCurve>,
    pub ladder_top: Option<f64>,
}

impl ReconstructedB {
    pub fn value(&self, x: usize, s: f64) -> f64 {
        debug_assert!(s >= 0.0, "positive-cone integrand evaluated at {s}");
        self.curves[x].value(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reconstruction serialization cannot fail")
    }

    pub fn from_json_str(s: &str) -> Result<Self, RieszMarkovError> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Reconstruct the integrand of `ψ` from dictionary densities against the
/// reference measure `mu`.
pub fn reconstruct_b(
    psi: &PsiOracle,
    dictionary: &Dictionary,
    mu: &VertexMeasure,
) -> Result<ReconstructedB, RieszMarkovError> {
    let n = psi.space.n();
    let mut raw: Vec<Vec<(f64, f64)>> = vec![Vec::new(); n];
    let mut upper = vec![0.0f64; n];
    for entry in dictionary.entries() {
        let masses = vertex_masses(psi, entry)?;
        let density = radon_nikodym(&masses, mu)?;
        for x in 0..n {
            let threshold = entry.values()[x];
            raw[x].push((threshold, density[x]));
            upper[x] = upper[x].max(threshold);
        }
    }
    let curves = raw
        .into_iter()
        .zip(upper)
        .map(|(mut steps, upper)| {
            steps.sort_by(|a, b| a.0.total_cmp(&b.0));
            // prefix max makes the step function nondecreasing; merged
            // duplicates keep the larger level automatically
            let mut level = 0.0f64;
            for step in steps.iter_mut() {
                level = level.max(step.1);
                step.1 = level;
            }
            steps.dedup_by(|next, prev| {
                if next.0 == prev.0 {
                    prev.1 = next.1;
                    true
                } else {
                    false
                }
            });
            VertexCurve { steps, upper }
        })
        .collect();
    Ok(ReconstructedB {
        curves,
        ladder_top: dictionary.ladder_top(),
    })
}

/// Weak support check of a reference measure against a reconstruction:
/// vertices charged by `mu` at which every dictionary density vanishes.
/// A nonempty result is legitimate for a common measure shared by two
/// functionals (one side may not charge a vertex the other does), so this
/// reports rather than errors.
pub fn support_defect(b: &ReconstructedB, mu: &VertexMeasure) -> Vec<usize> {
    mu.weights()
        .iter()
        .enumerate()
        .filter(|&(x, &w)| {
            w > 0.0 && b.curves[x].steps.iter().all(|&(_, level)| level == 0.0)
        })
        .map(|(x, _)| x)
        .collect()
}

/// Discrepancy report of `ψ(u)` against `Σₓ B(x, u(x))·μ(x)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RepresentationReport {
    pub fields_checked: usize,
    /// worst `|ψ(u) − Σ B·μ|` over fields with both sides finite
    pub worst_abs: f64,
    /// worst discrepancy relative to the per-field ladder bound
    /// `ψ(u) − ψ(λ_top·u)` (only meaningful when a ladder was declared)
    pub worst_vs_ladder_bound: f64,
    /// fields where both sides were infinite (they match)
    pub infinite_matches: usize,
    /// fields where exactly one side was infinite (hard mismatch)
    pub infinite_mismatches: usize,
}

fn integrate_against(
    b: impl Fn(usize, f64) -> f64,
    u: &Field,
    mu: &VertexMeasure,
) -> f64 {
    let mut total = 0.0;
    for (x, &w) in mu.weights().iter().enumerate() {
        if w > 0.0 {
            total += w * b(x, u.values()[x]);
            if total.is_infinite() {
                return f64::INFINITY;
            }
        }
    }
    total
}

/// Verify `ψ(u) = ∫ B(x, u(x)) dμ` on nonnegative test fields. The
/// reported ladder comparison uses the per-field resolution bound
/// `ψ(u) − ψ(λ_top·u) ≥ 0`.
pub fn verify_representation(
    psi: &PsiOracle,
    b: &ReconstructedB,
    mu: &VertexMeasure,
    test_fields: &[Field],
) -> Result<RepresentationReport, RieszMarkovError> {
    let mut worst_abs: f64 = 0.0;
    let mut worst_vs_bound: f64 = f64::NEG_INFINITY;
    let mut infinite_matches = 0;
    let mut infinite_mismatches = 0;
    for u in test_fields {
        if !u.is_nonnegative() {
            return Err(RieszMarkovError::NegativeField);
        }
        let psi_u = psi.eval_unchecked(u);
        let integral = integrate_against(|x, s| b.value(x, s), u, mu);
        match (psi_u.is_infinite(), integral.is_infinite()) {
            (true, true) => infinite_matches += 1,
            (false, false) => {
                let diff = (psi_u - integral).abs();
                worst_abs = worst_abs.max(diff);
                if let Some(top) = b.ladder_top {
                    let bound = psi_u - psi.eval_unchecked(&u.scale(top));
                    worst_vs_bound = worst_vs_bound.max(diff - bound);
                }
            }
            _ => infinite_mismatches += 1,
        }
    }
    Ok(RepresentationReport {
        fields_checked: test_fields.len(),
        worst_abs,
        worst_vs_ladder_bound: worst_vs_bound,
        infinite_matches,
        infinite_mismatches,
    })
}

/// Bi-monotone integrand glued from two positive-cone reconstructions:
/// `B(x, s) = B₊(x, s)` for `s ≥ 0` and `B₋(x, −s)` for `s < 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignedReconstructedB {
    pub pos: ReconstructedB,
    pub neg: ReconstructedB,
}

impl SignedReconstructedB {
    pub fn value(&self, x: usize, s: f64) -> f64 {
        if s >= 0.0 {
            self.pos.value(x, s)
        } else {
            self.neg.value(x, -s)
        }
    }
}

/// Full signed pipeline: split `ψ`, build a common reference measure from
/// the ladders of the positive and negative parts of the targets, and
/// reconstruct both sides.
pub fn reconstruct_signed(
    psi: &SignedPsi,
    targets: &[Field],
    ladder: &[f64],
) -> Result<(SignedReconstructedB, VertexMeasure), RieszMarkovError> {
    let (psi_pos, psi_neg) = decompose_signed(psi);
    let pos_targets: Vec<Field> = targets.iter().map(|u| u.pos_part()).collect();
    let neg_targets: Vec<Field> = targets.iter().map(|u| u.neg_part()).collect();
    let dict_pos = Dictionary::for_targets(&pos_targets, ladder)?;
    let dict_neg = Dictionary::for_targets(&neg_targets, ladder)?;
    let mu = build_common_reference_measure(&psi_pos, &dict_pos, &psi_neg, &dict_neg)?;
    let b_pos = reconstruct_b(&psi_pos, &dict_pos, &mu)?;
    let b_neg = reconstruct_b(&psi_neg, &dict_neg, &mu)?;
    Ok((
        SignedReconstructedB {
            pos: b_pos,
            neg: b_neg,
        },
        mu,
    ))
}

/// Discrepancy of a signed representation on signed test fields, with the
/// same ladder-resolution comparison as [`verify_representation`].
pub fn verify_signed_representation(
    psi: &SignedPsi,
    b: &SignedReconstructedB,
    mu: &VertexMeasure,
    test_fields: &[Field],
    ladder_top: f64,
) -> Result<RepresentationReport, RieszMarkovError> {
    let mut worst_abs: f64 = 0.0;
    let mut worst_vs_bound: f64 = f64::NEG_INFINITY;
    let mut infinite_matches = 0;
    let mut infinite_mismatches = 0;
    for u in test_fields {
        let psi_u = psi.eval(u);
        let integral = integrate_against(|x, s| b.value(x, s), u, mu);
        match (psi_u.is_infinite(), integral.is_infinite()) {
            (true, true) => infinite_matches += 1,
            (false, false) => {
                let diff = (psi_u - integral).abs();
                worst_abs = worst_abs.max(diff);
                let bound = psi_u - psi.eval(&u.scale(ladder_top));
                worst_vs_bound = worst_vs_bound.max(diff - bound);
            }
            _ => infinite_mismatches += 1,
        }
    }
    Ok(RepresentationReport {
        fields_checked: test_fields.len(),
        worst_abs,
        worst_vs_ladder_bound: worst_vs_bound,
        infinite_matches,
        infinite_mismatches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;

    fn space10() -> Arc<FiniteSpace> {
        FiniteSpace::new(
            (1..=10).map(|k| 0.25 * k as f64).collect(),
            (0..9).map(|i| (i, i + 1, 1.0)).collect(),
            vec![],
        )
        .unwrap()
    }

    /// ψ(f) = Σ b_x f_x² μ_x — separable quadratic oracle with closed
    /// forms for everything.
    fn separable_oracle(space: &Arc<FiniteSpace>, b: Vec<f64>, mu: Vec<f64>) -> PsiOracle {
        let b2 = b.clone();
        let mu2 = mu.clone();
        PsiOracle::from_fn(
            Arc::clone(space),
            move |u: &Field| {
                u.values()
                    .iter()
                    .zip(&b2)
                    .zip(&mu2)
                    .map(|((&f, &bb), &m)| bb * f * f * m)
                    .sum()
            },
            "separable quadratic",
        )
    }

    fn f(space: &Arc<FiniteSpace>, v: &[f64]) -> Field {
        Field::new(space, v.to_vec()).unwrap()
    }

    #[test]
    fn mu_u_closed_forms() {
        let s = FiniteSpace::new(vec![1.0, 1.0, 1.0], vec![], vec![]).unwrap();
        let b = vec![2.0, 3.0, 4.0];
        let mu = vec![0.5, 1.0, 1.5];
        let psi = separable_oracle(&s, b.clone(), mu.clone());
        let u = f(&s, &[1.0, 2.0, 0.5]);
        // K = {0, 2}
        let k = VertexSet::new(vec![0, 2]);
        let expected = b[0] * 1.0 * mu[0] + b[2] * 0.25 * mu[2];
        assert!((mu_u(&psi, &u, &k).unwrap() - expected).abs() < 1e-15);
        // empty set
        assert_eq!(mu_u(&psi, &u, &VertexSet::empty()).unwrap(), 0.0);
        // full space equals psi(u)
        let full = VertexSet::full(3);
        assert_eq!(mu_u(&psi, &u, &full).unwrap(), psi.eval(&u).unwrap());
    }

    #[test]
    fn infinite_mass_is_a_named_error() {
        let s = FiniteSpace::new(vec![1.0, 1.0], vec![], vec![]).unwrap();
        let psi = PsiOracle::from_profile(
            Arc::clone(&s),
            BProfile::Well { a: 0.0, b: 1.0 },
            VertexMeasure::new(vec![1.0, 1.0]).unwrap(),
        )
        .unwrap();
        let u = f(&s, &[2.0, 0.5]);
        assert!(matches!(
            mu_u(&psi, &u, &VertexSet::new(vec![0])),
            Err(RieszMarkovError::InfiniteMass)
        ));
        assert!(mu_u(&psi, &u, &VertexSet::new(vec![1])).is_ok());
        let signed = f(&s, &[-1.0, 0.0]);
        assert!(matches!(
            mu_u(&psi, &signed, &VertexSet::new(vec![1])),
            Err(RieszMarkovError::NegativeField)
        ));
    }

    #[test]
    fn mu_u_is_the_infimum_over_feasible_fields() {
        // random search over feasible f ≥ u·1_K stays above ψ(u·1_K)
        let s = space10();
        let psi = separable_oracle(
            &s,
            (0..10).map(|k| 0.5 + 0.1 * k as f64).collect(),
            vec![1.0; 10],
        );
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let u = f(
            &s,
            &(0..10)
                .map(|_| rng.random_range(0.0..2.0))
                .collect::<Vec<_>>(),
        );
        let k = VertexSet::new(vec![1, 4, 7]);
        let inf = mu_u(&psi, &u, &k).unwrap();
        for _ in 0..200 {
            let candidate: Vec<f64> = (0..10)
                .map(|x| {
                    let base = if k.contains(x) { u.values()[x] } else { 0.0 };
                    base + rng.random_range(0.0..1.0)
                })
                .collect();
            let value = psi.eval(&f(&s, &candidate)).unwrap();
            assert!(value >= inf - 1e-12);
        }
    }

    #[test]
    fn measure_lemmas_hold_exactly_for_separable_oracles() {
        let s = space10();
        let psi = separable_oracle(
            &s,
            (0..10).map(|k| 0.3 + 0.2 * k as f64).collect(),
            (0..10).map(|k| 0.1 * (k + 1) as f64).collect(),
        );
        let u = f(&s, &[0.0, 1.0, 0.5, 0.0, 2.0, 0.25, 0.75, 0.0, 1.5, 0.1]);
        let v = u.scale(1.5);
        let sets = vec![
            (VertexSet::new(vec![0, 1, 2]), VertexSet::new(vec![5, 6])),
            (VertexSet::new(vec![1, 2]), VertexSet::new(vec![1, 2, 3, 4])),
            (VertexSet::new(vec![0, 3, 7]), VertexSet::new(vec![3, 7, 9])),
            (VertexSet::new(vec![4, 8]), VertexSet::new(vec![2, 4, 8])),
        ];
        let report = check_measure_lemmas(&psi, &u, &v, &sets, 1e-12).unwrap();
        assert!(report.pass, "{report:?}");
    }

    #[test]
    fn radon_nikodym_density_and_violation() {
        let s = FiniteSpace::new(vec![1.0, 1.0, 1.0], vec![], vec![]).unwrap();
        let b = vec![2.0, 3.0, 4.0];
        let mu_ref = VertexMeasure::new(vec![0.5, 1.0, 0.0]).unwrap();
        let psi = separable_oracle(&s, b.clone(), mu_ref.weights().to_vec());
        let u = f(&s, &[1.0, 2.0, 3.0]);
        let masses = vertex_masses(&psi, &u).unwrap();
        let density = radon_nikodym(&masses, &mu_ref).unwrap();
        // B_u(x) = b_x u_x² where the reference charges x
        assert!((density[0] - 2.0).abs() < 1e-14);
        assert!((density[1] - 12.0).abs() < 1e-14);
        assert_eq!(density[2], 0.0);
        // u = 0 → density ≡ 0
        let zero_masses = vertex_masses(&psi, &Field::zeros(&s)).unwrap();
        assert!(radon_nikodym(&zero_masses, &mu_ref)
            .unwrap()
            .iter()
            .all(|&d| d == 0.0));
        // mass off the support of the reference measure is an error
        let bad = VertexMeasure::new(vec![0.0, 0.0, 5.0]).unwrap();
        assert!(matches!(
            radon_nikodym(&bad, &mu_ref),
            Err(RieszMarkovError::AbsoluteContinuity { vertex: 2, .. })
        ));
    }

    #[test]
    fn reference_measure_formula() {
        let s = FiniteSpace::new(vec![1.0, 1.0], vec![], vec![]).unwrap();
        let psi = separable_oracle(&s, vec![1.0, 1.0], vec![1.0, 1.0]);
        // dictionary = {0} → zero measure
        let zero_dict = Dictionary::new(vec![Field::zeros(&s)]).unwrap();
        let m = build_reference_measure(&psi, &zero_dict).unwrap();
        assert!(m.weights().iter().all(|&w| w == 0.0));

        // single f with μ_f(X) = 1 → μ = μ_f / 4
        let g = f(&s, &[1.0, 0.0]); // ψ(g·1_{x}) masses: (1, 0), total 1
        let single = Dictionary::new(vec![g.clone()]).unwrap();
        let m = build_reference_measure(&psi, &single).unwrap();
        assert!((m.weights()[0] - 0.25).abs() < 1e-15);
        assert_eq!(m.weights()[1], 0.0);

        // two identical entries → (1/2 + 1/4)·μ_f/(1 + μ_f(X))
        let double = Dictionary::new(vec![g.clone(), g]).unwrap();
        let m = build_reference_measure(&psi, &double).unwrap();
        assert!((m.weights()[0] - 0.75 * 0.5).abs() < 1e-15);
    }

    #[test]
    fn reconstruction_hits_the_ladder_resolution() {
        let s = space10();
        let b: Vec<f64> = (0..10).map(|k| 0.4 + 0.15 * k as f64).collect();
        let mu0: Vec<f64> = vec![1.0; 10];
        let psi = separable_oracle(&s, b.clone(), mu0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let u = f(
            &s,
            &(0..10)
                .map(|_| rng.random_range(0.1..2.0))
                .collect::<Vec<_>>(),
        );
        let ladder = Dictionary::default_ladder(12);
        let dict = Dictionary::for_targets(std::slice::from_ref(&u), &ladder).unwrap();
        let mu = build_reference_measure(&psi, &dict).unwrap();
        let rec = reconstruct_b(&psi, &dict, &mu).unwrap();

        // B(x, u(x)) picks the largest rung strictly below u(x):
        // level b_x (λ_top u_x)² against the truth b_x u_x².
        let top = *ladder.last().unwrap();
        let report = verify_representation(&psi, &rec, &mu, &[u.clone()]).unwrap();
        let truth = psi.eval(&u).unwrap();
        let expected_gap = (1.0 - top * top) * truth;
        assert!((report.worst_abs - expected_gap).abs() < 1e-10);
        assert!(report.worst_vs_ladder_bound <= 1e-12);

        // curve values: zero at zero, +∞ beyond the dictionary reach
        assert_eq!(rec.value(0, 0.0), 0.0);
        assert!(rec.value(0, u.values()[0] * 1.5).is_infinite());
    }

    #[test]
    fn reconstructed_curves_are_monotone_and_lsc() {
        let s = space10();
        let psi = separable_oracle(&s, vec![1.0; 10], vec![1.0; 10]);
        let u = f(&s, &[0.5, 1.0, 1.5, 2.0, 0.25, 0.75, 1.25, 1.75, 0.1, 0.9]);
        let dict =
            Dictionary::for_targets(&[u.clone()], &Dictionary::default_ladder(8)).unwrap();
        let mu = build_reference_measure(&psi, &dict).unwrap();
        let rec = reconstruct_b(&psi, &dict, &mu).unwrap();
        for x in 0..10 {
            let curve = &rec.curves[x];
            // nondecreasing levels
            for w in curve.steps.windows(2) {
                assert!(w[0].1 <= w[1].1);
                assert!(w[0].0 < w[1].0);
            }
            // lsc at the jumps: the value at a threshold equals the value
            // just below it
            for &(threshold, _) in &curve.steps {
                if threshold > 0.0 && threshold <= curve.upper {
                    let below = curve.value(threshold * (1.0 - 1e-12));
                    assert_eq!(curve.value(threshold), below);
                }
            }
        }
    }

    #[test]
    fn density_monotonicity_along_the_ladder() {
        let s = space10();
        let psi = separable_oracle(
            &s,
            (0..10).map(|k| 0.2 + 0.1 * k as f64).collect(),
            vec![0.7; 10],
        );
        let u = f(&s, &[1.0, 0.0, 0.5, 2.0, 0.1, 0.9, 1.4, 0.0, 0.3, 1.1]);
        let dict =
            Dictionary::for_targets(&[u.clone()], &Dictionary::default_ladder(6)).unwrap();
        let mu = build_reference_measure(&psi, &dict).unwrap();
        let mut previous: Option<Vec<f64>> = None;
        for entry in dict.entries() {
            let density =
                radon_nikodym(&vertex_masses(&psi, entry).unwrap(), &mu).unwrap();
            if let Some(prev) = previous {
                for x in 0..10 {
                    assert!(prev[x] <= density[x] + 1e-12);
                }
            }
            previous = Some(density);
        }
        // convergence of the masses along the ladder: μ_{λu}(G) → μ_u(G)
        let g = VertexSet::new(vec![0, 3, 6]);
        let mu_total = mu_u(&psi, &u, &g).unwrap();
        let lam = 1.0 - 0.5f64.powi(6);
        let approx = mu_u(&psi, &u.scale(lam), &g).unwrap();
        assert!((mu_total - approx).abs() <= (1.0 - lam * lam) * mu_total + 1e-12);
    }

    #[test]
    fn signed_split_and_glue() {
        let s = space10();
        let mu0 = VertexMeasure::new(vec![0.5; 10]).unwrap();
        let profile = BProfile::PowerLaw {
            c_plus: 1.0,
            c_minus: 2.0,
            q: 2.0,
        };
        let psi = SignedPsi::from_profile(Arc::clone(&s), profile, mu0).unwrap();
        // symmetric check of the split
        let (pos, neg) = decompose_signed(&psi);
        let w = f(&s, &[1.0, 0.5, 0.0, 2.0, 0.1, 0.0, 0.7, 1.2, 0.3, 0.9]);
        assert_eq!(pos.eval(&w).unwrap(), psi.eval(&w));
        assert_eq!(neg.eval(&w).unwrap(), psi.eval(&w.scale(-1.0)));

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let targets: Vec<Field> = (0..5)
            .map(|_| {
                f(
                    &s,
                    &(0..10)
                        .map(|_| rng.random_range(-1.5..1.5))
                        .collect::<Vec<_>>(),
                )
            })
            .collect();
        let ladder = Dictionary::default_ladder(14);
        let (glued, mu) = reconstruct_signed(&psi, &targets, &ladder).unwrap();
        let top = *ladder.last().unwrap();
        let report =
            verify_signed_representation(&psi, &glued, &mu, &targets, top).unwrap();
        assert_eq!(report.infinite_mismatches, 0);
        assert!(report.worst_vs_ladder_bound <= 1e-12, "{report:?}");

        // glued slopes: coefficient 1 on the right, 2 on the left, at
        // ladder resolution
        let u = &targets[0];
        for x in 0..10 {
            let su = u.values()[x];
            if su > 0.05 {
                let b_val = glued.value(x, su) * mu.weights()[x];
                let truth = 1.0 * su * su * 0.5;
                assert!(b_val <= truth + 1e-12 && b_val >= top * top * truth - 1e-12);
            }
            if su < -0.05 {
                let b_val = glued.value(x, su) * mu.weights()[x];
                let truth = 2.0 * su * su * 0.5;
                assert!(b_val <= truth + 1e-12 && b_val >= top * top * truth - 1e-12);
            }
        }
    }

    #[test]
    fn symmetric_signed_psi_splits_into_equal_oracles() {
        let s = space10();
        let mu0 = VertexMeasure::new(vec![1.0; 10]).unwrap();
        let profile = BProfile::PowerLaw {
            c_plus: 3.0,
            c_minus: 3.0,
            q: 2.0,
        };
        let psi = SignedPsi::from_profile(Arc::clone(&s), profile, mu0).unwrap();
        let (pos, neg) = decompose_signed(&psi);
        let u = f(&s, &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]);
        assert_eq!(pos.eval(&u).unwrap(), neg.eval(&u).unwrap());

        // ψ ≡ 0 reconstructs to B ≡ 0
        let zero_psi = SignedPsi::from_fn(Arc::clone(&s), |_| 0.0);
        let (glued, mu) =
            reconstruct_signed(&zero_psi, &[u.clone()], &Dictionary::default_ladder(5))
                .unwrap();
        assert!(mu.weights().iter().all(|&w| w == 0.0));
        let report = verify_signed_representation(
            &zero_psi,
            &glued,
            &mu,
            &[u],
            1.0 - 0.5f64.powi(5),
        )
        .unwrap();
        assert_eq!(report.worst_abs, 0.0);
    }

    #[test]
    fn well_profile_representation_is_exact_inside_and_infinite_outside() {
        // ψ(f) = Σ (f² + well_{[0,1]}(f))·μ₀: finite with quadratic growth
        // inside the well, +∞ outside.
        let s = FiniteSpace::new(vec![1.0, 1.0, 1.0], vec![], vec![]).unwrap();
        let mu0 = vec![1.0, 1.0, 0.5];
        let well = BProfile::Well { a: 0.0, b: 1.0 };
        let psi = {
            let mu0 = mu0.clone();
            let well = well.clone();
            PsiOracle::from_fn(
                Arc::clone(&s),
                move |u: &Field| {
                    u.values()
                        .iter()
                        .zip(&mu0)
                        .map(|(&f, &m)| m * (f * f + well.value(f)))
                        .sum()
                },
                "quadratic inside a well",
            )
        };
        let inside = f(&s, &[0.5, 0.9, 0.2]);
        let dict = Dictionary::for_targets(
            std::slice::from_ref(&inside),
            &Dictionary::default_ladder(10),
        )
        .unwrap();
        let mu = build_reference_measure(&psi, &dict).unwrap();
        let rec = reconstruct_b(&psi, &dict, &mu).unwrap();
        let report = verify_representation(&psi, &rec, &mu, &[inside.clone()]).unwrap();
        assert_eq!(report.infinite_mismatches, 0);
        assert!(report.worst_vs_ladder_bound <= 1e-12, "{report:?}");

        // Outside the well the dictionary cannot reach the value, so the
        // reconstructed integrand is +∞ there and both sides agree.
        let outside = f(&s, &[1.5, 0.5, 0.0]);
        assert!(psi.eval(&outside).unwrap().is_infinite());
        let report = verify_representation(&psi, &rec, &mu, &[outside]).unwrap();
        assert_eq!(report.infinite_matches, 1);
        assert_eq!(report.infinite_mismatches, 0);
    }

    #[test]
    fn psi_validation_flags_violations() {
        let s = space10();
        let good = separable_oracle(&s, vec![1.0; 10], vec![1.0; 10]);
        let sampler = crate::properties::Sampler::new(
            3,
            100,
            crate::properties::SamplerKind::Nonnegative { hi: 2.0 },
        );
        assert!(good.validate(&sampler, 1e-12).unwrap().pass);

        // a non-monotone functional is rejected
        let bad = PsiOracle::from_fn(
            Arc::clone(&s),
            |u: &Field| (2.0 - u.values()[0]).abs(),
            "non-monotone",
        );
        let v = bad.validate(&sampler, 1e-12).unwrap();
        assert!(!v.pass);
    }

    #[test]
    fn support_defect_flags_uncharged_vertices() {
        let s = FiniteSpace::new(vec![1.0, 1.0, 1.0], vec![], vec![]).unwrap();
        // psi only sees vertices 0 and 1
        let psi = separable_oracle(&s, vec![1.0, 1.0, 0.0], vec![1.0, 1.0, 1.0]);
        let u = f(&s, &[1.0, 0.5, 2.0]);
        let dict =
            Dictionary::for_targets(&[u], &Dictionary::default_ladder(4)).unwrap();
        let own = build_reference_measure(&psi, &dict).unwrap();
        let rec = reconstruct_b(&psi, &dict, &own).unwrap();
        // against its own reference measure the support matches
        assert!(support_defect(&rec, &own).is_empty());
        // an external measure charging vertex 2 is flagged there
        let external = own.add(&VertexMeasure::new(vec![0.0, 0.0, 1.0]).unwrap());
        let rec = reconstruct_b(&psi, &dict, &external).unwrap();
        assert_eq!(support_defect(&rec, &external), vec![2]);
    }

    #[test]
    fn reconstruction_json_round_trip() {
        let s = space10();
        let psi = separable_oracle(&s, vec![1.0; 10], vec![1.0; 10]);
        let u = f(&s, &[0.5, 1.0, 1.5, 2.0, 0.25, 0.75, 1.25, 1.75, 0.1, 0.9]);
        let dict =
            Dictionary::for_targets(&[u.clone()], &Dictionary::default_ladder(6)).unwrap();
        let mu = build_reference_measure(&psi, &dict).unwrap();
        let rec = reconstruct_b(&psi, &dict, &mu).unwrap();
        let json = rec.to_json();
        let back = ReconstructedB::from_json_str(&json).unwrap();
        assert_eq!(back, rec);
        // replay verification with the imported curve
        let report = verify_representation(&psi, &back, &mu, &[u]).unwrap();
        assert!(report.worst_vs_ladder_bound <= 1e-12);
    }
}
