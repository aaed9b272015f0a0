//! Sampling-based checkers for the structural inequalities of
//! Dirichlet-form theory.
//!
//! Every check reports the signed worst violation `LHS − RHS` over its
//! samples, so negative means satisfied; a check passes when the worst
//! violation stays below the tolerance. Samples where the right-hand side
//! is infinite are vacuously satisfied and counted separately. Each
//! report carries the witness inputs of the worst case, and re-evaluating
//! the witness reproduces the reported violation.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::space::{Field, FiniteSpace, SpaceError};
use std::sync::Arc;

/// Field generator variants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SamplerKind {
    UniformBox { lo: f64, hi: f64 },
    Gaussian { scale: f64 },
    Nonnegative { hi: f64 },
    DisjointSupportPairs { hi: f64 },
    ComonotonePairs { hi: f64 },
}

impl Default for SamplerKind {
    fn default() -> Self {
        SamplerKind::UniformBox { lo: -1.0, hi: 1.0 }
    }
}

/// Deterministic field sampler: identical seeds give identical samples.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sampler {
    pub seed: u64,
    pub count: usize,
    #[serde(flatten)]
    pub kind: SamplerKind,
}

impl Sampler {
    pub fn new(seed: u64, count: usize, kind: SamplerKind) -> Self {
        Sampler { seed, count, kind }
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    fn draw(&self, rng: &mut ChaCha8Rng, space: &Arc<FiniteSpace>) -> Field {
        let n = space.n();
        let values: Vec<f64> = match self.kind {
            SamplerKind::UniformBox { lo, hi } => {
                (0..n).map(|_| rng.random_range(lo..hi)).collect()
            }
            SamplerKind::Gaussian { scale } => (0..n)
                .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                .collect(),
            SamplerKind::Nonnegative { hi }
            | SamplerKind::DisjointSupportPairs { hi }
            | SamplerKind::ComonotonePairs { hi } => {
                (0..n).map(|_| rng.random_range(0.0..hi)).collect()
            }
        };
        Field::new(space, values).expect("sampled values are finite")
    }

    /// A stream of single fields of the configured variant.
    pub fn fields(&self, space: &Arc<FiniteSpace>) -> Vec<Field> {
        let mut rng = self.rng();
        (0..self.count).map(|_| self.draw(&mut rng, space)).collect()
    }

    /// Pairs of independent fields of the configured variant.
    pub fn pairs(&self, space: &Arc<FiniteSpace>) -> Vec<(Field, Field)> {
        let mut rng = self.rng();
        (0..self.count)
            .map(|_| (self.draw(&mut rng, space), self.draw(&mut rng, space)))
            .collect()
    }

    /// Pairs `(u, v)` with `u` signed and `v ≥ 0`.
    pub fn signed_nonneg_pairs(&self, space: &Arc<FiniteSpace>) -> Vec<(Field, Field)> {
        let mut rng = self.rng();
        let n = space.n();
        (0..self.count)
            .map(|_| {
                let u: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
                let v: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
                (
                    Field::new(space, u).expect("finite"),
                    Field::new(space, v).expect("finite"),
                )
            })
            .collect()
    }

    /// Pairs with pointwise-disjoint supports: `|u| ∧ |v| = 0`.
    pub fn disjoint_pairs(&self, space: &Arc<FiniteSpace>) -> Vec<(Field, Field)> {
        let mut rng = self.rng();
        let n = space.n();
        let hi = match self.kind {
            SamplerKind::DisjointSupportPairs { hi } => hi,
            _ => 1.0,
        };
        (0..self.count)
            .map(|_| {
                let mut u = vec![0.0; n];
                let mut v = vec![0.0; n];
                for i in 0..n {
                    let x = rng.random_range(-hi..hi);
                    if rng.random_bool(0.5) {
                        u[i] = x;
                    } else {
                        v[i] = x;
                    }
                }
                (
                    Field::new(space, u).expect("finite"),
                    Field::new(space, v).expect("finite"),
                )
            })
            .collect()
    }

    /// Comonotone pairs: both entries are nondecreasing transforms of a
    /// common sample, so `(uᵢ − uⱼ)(vᵢ − vⱼ) ≥ 0` for all `i, j`.
    pub fn comonotone_pairs(&self, space: &Arc<FiniteSpace>) -> Vec<(Field, Field)> {
        let mut rng = self.rng();
        let n = space.n();
        let hi = match self.kind {
            SamplerKind::ComonotonePairs { hi } => hi,
            _ => 1.0,
        };
        (0..self.count)
            .map(|_| {
                let base: Vec<f64> = (0..n).map(|_| rng.random_range(-hi..hi)).collect();
                let transform = |rng: &mut ChaCha8Rng| {
                    let a = rng.random_range(0.0..2.0);
                    let b = rng.random_range(0.0..2.0);
                    let knee = rng.random_range(-hi..hi);
                    let shift = rng.random_range(-0.5..0.5);
                    move |s: f64| a * s + b * (s - knee).max(0.0) + shift
                };
                let f = transform(&mut rng);
                let g = transform(&mut rng);
                let u: Vec<f64> = base.iter().map(|&s| f(s)).collect();
                let v: Vec<f64> = base.iter().map(|&s| g(s)).collect();
                (
                    Field::new(space, u).expect("finite"),
                    Field::new(space, v).expect("finite"),
                )
            })
            .collect()
    }

    /// Ordered pairs `0 ≤ v ≤ u` on the positive cone.
    pub fn ordered_nonneg_pairs(&self, space: &Arc<FiniteSpace>) -> Vec<(Field, Field)> {
        let mut rng = self.rng();
        let n = space.n();
        let hi = match self.kind {
            SamplerKind::Nonnegative { hi } => hi,
            _ => 1.0,
        };
        (0..self.count)
            .map(|_| {
                let u: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..hi)).collect();
                let v: Vec<f64> = u
                    .iter()
                    .map(|&x| x * rng.random_range(0.0..1.0))
                    .collect();
                (
                    Field::new(space, u).expect("finite"),
                    Field::new(space, v).expect("finite"),
                )
            })
            .collect()
    }
}

/// Worst-case inputs of a check, stored for replay.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct Witness {
    pub fields: Vec<(String, Vec<f64>)>,
    pub parameter: Option<f64>,
}

/// Outcome of one sampling check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub checked: usize,
    /// samples skipped because the right-hand side was infinite
    pub vacuous: usize,
    /// worst `LHS − RHS`; negative means the inequality held strictly
    pub worst: f64,
    pub witness: Option<Witness>,
    pub tol: f64,
    pub pass: bool,
}

impl CheckReport {
    fn collect<I: IntoIterator<Item = (f64, Witness)>>(
        name: &str,
        samples: I,
        tol: f64,
    ) -> CheckReport {
        let mut checked = 0;
        let mut vacuous = 0;
        let mut worst = f64::NEG_INFINITY;
        let mut witness = None;
        for (gap, w) in samples {
            if gap.is_nan() {
                vacuous += 1;
                continue;
            }
            checked += 1;
            if gap > worst {
                worst = gap;
                witness = Some(w);
            }
        }
        CheckReport {
            name: name.to_string(),
            checked,
            vacuous,
            worst,
            witness,
            tol,
            pass: worst <= tol,
        }
    }
}

/// Extended-arithmetic gap `LHS − RHS`: `NaN` encodes a vacuous sample
/// (infinite right-hand side), `+∞` a hard violation.
fn extended_gap(lhs: f64, rhs: f64) -> f64 {
    if rhs.is_infinite() {
        f64::NAN
    } else if lhs.is_infinite() {
        f64::INFINITY
    } else {
        lhs - rhs
    }
}

fn witness2(a: &str, u: &Field, b: &str, v: &Field) -> Witness {
    Witness {
        fields: vec![
            (a.to_string(), u.values().to_vec()),
            (b.to_string(), v.values().to_vec()),
        ],
        parameter: None,
    }
}

/// `E(u ∧ v) + E(u ∨ v) − E(u) − E(v)` in extended arithmetic.
pub fn submodular_gap(
    eval: &dyn Fn(&Field) -> f64,
    u: &Field,
    v: &Field,
) -> Result<f64, SpaceError> {
    let lhs = eval(&u.meet(v)?) + eval(&u.join(v)?);
    let rhs = eval(u) + eval(v);
    Ok(extended_gap(lhs, rhs))
}

/// Report of the first Dirichlet-form inequality, together with the
/// modularity probe on comonotone pairs (worst absolute equality gap).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubmodularReport {
    #[serde(flatten)]
    pub report: CheckReport,
    pub comonotone_pairs: usize,
    /// worst `|E(u∧v) + E(u∨v) − E(u) − E(v)|` over comonotone pairs
    pub comonotone_equality_gap: f64,
}

pub fn check_submodular(
    space: &Arc<FiniteSpace>,
    eval: &dyn Fn(&Field) -> f64,
    sampler: &Sampler,
    tol: f64,
) -> Result<SubmodularReport, SpaceError> {
    let mut samples = Vec::with_capacity(sampler.count);
    for (u, v) in sampler.pairs(space) {
        let gap = submodular_gap(eval, &u, &v)?;
        samples.push((gap, witness2("u", &u, "v", &v)));
    }
    let report = CheckReport::collect("submodular", samples, tol);

    let mut comono_worst: f64 = 0.0;
    let comono = sampler.comonotone_pairs(space);
    let comonotone_pairs = comono.len();
    for (u, v) in comono {
        let gap = submodular_gap(eval, &u, &v)?;
        if gap.is_finite() {
            comono_worst = comono_worst.max(gap.abs());
        }
    }
    Ok(SubmodularReport {
        report,
        comonotone_pairs,
        comonotone_equality_gap: comono_worst,
    })
}

/// `E(v + w) + E(u − w) − E(u) − E(v)` with `w` the alpha interpolant.
pub fn alpha_truncation_gap(
    eval: &dyn Fn(&Field) -> f64,
    u: &Field,
    v: &Field,
    alpha: f64,
) -> Result<f64, SpaceError> {
    let w = u.alpha_midpoint(v, alpha)?;
    let lhs = eval(&v.add(&w)?) + eval(&u.sub(&w)?);
    let rhs = eval(u) + eval(v);
    Ok(extended_gap(lhs, rhs))
}

pub fn check_alpha_truncation(
    space: &Arc<FiniteSpace>,
    eval: &dyn Fn(&Field) -> f64,
    sampler: &Sampler,
    alphas: &[f64],
    tol: f64,
) -> Result<CheckReport, SpaceError> {
    let mut samples = Vec::with_capacity(sampler.count * alphas.len());
    for (u, v) in sampler.pairs(space) {
        for &alpha in alphas {
            let gap = alpha_truncation_gap(eval, &u, &v, alpha)?;
            let mut w = witness2("u", &u, "v", &v);
            w.parameter = Some(alpha);
            samples.push((gap, w));
        }
    }
    Ok(CheckReport::collect("alpha_truncation", samples, tol))
}

/// Domination inequality gap
/// `F((|u| ∧ v)·sgn u) + E(|u| ∨ v) − F(u) − E(v)` for `v ≥ 0`.
pub fn barthelemy_gap(
    eval_f: &dyn Fn(&Field) -> f64,
    eval_e: &dyn Fn(&Field) -> f64,
    u: &Field,
    v: &Field,
) -> Result<f64, SpaceError> {
    let au = u.abs();
    let inner = au.meet(v)?.mul(&u.sgn())?;
    let lhs = eval_f(&inner) + eval_e(&au.join(v)?);
    let rhs = eval_f(u) + eval_e(v);
    Ok(extended_gap(lhs, rhs))
}

pub fn check_barthelemy(
    space: &Arc<FiniteSpace>,
    eval_f: &dyn Fn(&Field) -> f64,
    eval_e: &dyn Fn(&Field) -> f64,
    sampler: &Sampler,
    tol: f64,
) -> Result<CheckReport, SpaceError> {
    let mut samples = Vec::with_capacity(sampler.count);
    for (u, v) in sampler.signed_nonneg_pairs(space) {
        let gap = barthelemy_gap(eval_f, eval_e, &u, &v)?;
        samples.push((gap, witness2("u", &u, "v", &v)));
    }
    Ok(CheckReport::collect("barthelemy", samples, tol))
}

/// Locality defect `|φ(u+v) − φ(u) − φ(v)|` on disjoint supports; the
/// defect is reported as a signed violation of `0`.
pub fn locality_gap(
    eval: &dyn Fn(&Field) -> f64,
    u: &Field,
    v: &Field,
) -> Result<f64, SpaceError> {
    let sum = eval(&u.add(v)?);
    let parts = eval(u) + eval(v);
    if sum.is_infinite() && parts.is_infinite() {
        return Ok(f64::NAN);
    }
    if sum.is_infinite() || parts.is_infinite() {
        return Ok(f64::INFINITY);
    }
    Ok((sum - parts).abs())
}

pub fn check_locality(
    space: &Arc<FiniteSpace>,
    eval: &dyn Fn(&Field) -> f64,
    sampler: &Sampler,
    tol: f64,
) -> Result<CheckReport, SpaceError> {
    let mut samples = Vec::with_capacity(sampler.count);
    for (u, v) in sampler.disjoint_pairs(space) {
        debug_assert!(u
            .abs()
            .meet(&v.abs())
            .map(|w| w.values().iter().all(|&x| x == 0.0))
            .unwrap_or(false));
        let gap = locality_gap(eval, &u, &v)?;
        samples.push((gap, witness2("u", &u, "v", &v)));
    }
    Ok(CheckReport::collect("locality", samples, tol))
}

/// Cone monotonicity gap `ψ(v) − ψ(u)` for `0 ≤ v ≤ u` (and the mirror
/// image on the negative cone).
pub fn cone_monotone_gap(
    eval: &dyn Fn(&Field) -> f64,
    small: &Field,
    large: &Field,
) -> f64 {
    extended_gap(eval(small), eval(large))
}

pub fn check_cone_monotone(
    space: &Arc<FiniteSpace>,
    eval: &dyn Fn(&Field) -> f64,
    sampler: &Sampler,
    tol: f64,
) -> Result<CheckReport, SpaceError> {
    let mut samples = Vec::with_capacity(2 * sampler.count);
    for (u, v) in sampler.ordered_nonneg_pairs(space) {
        // positive cone: 0 ≤ v ≤ u
        samples.push((cone_monotone_gap(eval, &v, &u), witness2("v", &v, "u", &u)));
        // negative cone: −u ≤ −v ≤ 0, monotone decreasing
        let nu = u.scale(-1.0);
        let nv = v.scale(-1.0);
        samples.push((
            cone_monotone_gap(eval, &nv, &nu),
            witness2("v", &nv, "u", &nu),
        ));
    }
    Ok(CheckReport::collect("cone_monotone", samples, tol))
}

/// `E(|u|) − E(u)` for symmetric `E`.
pub fn abs_inequality_gap(eval: &dyn Fn(&Field) -> f64, u: &Field) -> f64 {
    extended_gap(eval(&u.abs()), eval(u))
}

pub fn check_abs_inequality(
    space: &Arc<FiniteSpace>,
    eval: &dyn Fn(&Field) -> f64,
    sampler: &Sampler,
    tol: f64,
) -> Result<CheckReport, SpaceError> {
    let mut samples = Vec::with_capacity(sampler.count);
    for u in sampler.fields(space) {
        let gap = abs_inequality_gap(eval, &u);
        samples.push((
            gap,
            Witness {
                fields: vec![("u".to_string(), u.values().to_vec())],
                parameter: None,
            },
        ));
    }
    Ok(CheckReport::collect("abs_inequality", samples, tol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::{BProfile, FunctionalSpec, VertexMeasure};
    use crate::space::FiniteSpace;

    fn eval_fn(spec: FunctionalSpec) -> impl Fn(&Field) -> f64 {
        move |u: &Field| spec.eval(u).expect("eval")
    }

    fn f(space: &Arc<FiniteSpace>, v: &[f64]) -> Field {
        Field::new(space, v.to_vec()).unwrap()
    }

    #[test]
    fn anti_comonotone_witness_has_strict_gap() {
        let s = FiniteSpace::new(vec![1.0, 1.0], vec![(0, 1, 1.0)], vec![]).unwrap();
        let e = eval_fn(FunctionalSpec::graph_p(&s, 2.0));
        let u = f(&s, &[0.0, 1.0]);
        let v = f(&s, &[1.0, 0.0]);
        let gap = submodular_gap(&e, &u, &v).unwrap();
        assert!((gap - (-1.0)).abs() < 1e-15);
        // idempotent pair
        assert_eq!(submodular_gap(&e, &u, &u).unwrap(), 0.0);
    }

    #[test]
    fn quadratic_is_modular() {
        let s = FiniteSpace::path(5);
        let e = eval_fn(FunctionalSpec::Quadratic { scale: 1.0 });
        let sampler = Sampler::new(11, 100, SamplerKind::UniformBox { lo: -2.0, hi: 2.0 });
        let report = check_submodular(&s, &e, &sampler, 1e-12).unwrap();
        assert!(report.report.pass);
        // meet² + join² = u² + v² pointwise, so the equality gap vanishes
        // on every pair, not just comonotone ones.
        assert!(report.report.worst.abs() < 1e-12);
        assert!(report.comonotone_equality_gap < 1e-12);
    }

    #[test]
    fn graph_energies_are_submodular_but_not_modular() {
        let s = FiniteSpace::cycle(5);
        let e = eval_fn(FunctionalSpec::graph_p(&s, 3.0));
        let sampler = Sampler::new(5, 200, SamplerKind::UniformBox { lo: -1.0, hi: 1.0 });
        let report = check_submodular(&s, &e, &sampler, 1e-10).unwrap();
        assert!(report.report.pass, "worst {}", report.report.worst);
    }

    #[test]
    fn alpha_truncation_sweep() {
        let s = FiniteSpace::cycle(5);
        let sampler = Sampler::new(7, 200, SamplerKind::UniformBox { lo: -1.5, hi: 1.5 });
        let alphas = [0.1, 1.0, 10.0];
        for spec in [
            FunctionalSpec::Quadratic { scale: 1.0 },
            FunctionalSpec::graph_p(&s, 3.0),
        ] {
            let e = eval_fn(spec);
            let report = check_alpha_truncation(&s, &e, &sampler, &alphas, 1e-10).unwrap();
            assert!(report.pass, "worst {}", report.worst);
        }
        // u = v gives w = 0 and gap exactly 0.
        let e = eval_fn(FunctionalSpec::graph_p(&s, 3.0));
        let u = f(&s, &[1.0, -0.5, 0.25, 2.0, 0.0]);
        assert_eq!(alpha_truncation_gap(&e, &u, &u, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn nonconvex_table_perturbation_fails_alpha_truncation() {
        // A finite step perturbation is bi-monotone but not convex; the
        // checker must catch the violation of the second inequality.
        let s = FiniteSpace::new(vec![1.0], vec![], vec![]).unwrap();
        let spec = FunctionalSpec::perturbed(
            FunctionalSpec::Zero,
            BProfile::Table {
                pos: vec![crate::forms::TableStep { at: 0.95, level: 1.0 }],
                neg: vec![],
            },
            VertexMeasure::new(vec![1.0]).unwrap(),
        );
        let e = eval_fn(spec);
        let u = f(&s, &[1.2]);
        let v = f(&s, &[0.9]);
        let gap = alpha_truncation_gap(&e, &u, &v, 0.1).unwrap();
        assert!(gap > 0.5, "expected a violation, got {gap}");
    }

    #[test]
    fn barthelemy_specializations() {
        let s = FiniteSpace::path(4);
        let quad = eval_fn(FunctionalSpec::Quadratic { scale: 1.0 });
        // v = 0 reduces to E(|u|) ≤ F(u) when F(0) = E(0) = 0.
        let u = f(&s, &[1.0, -2.0, 0.5, -0.25]);
        let zero = Field::zeros(&s);
        let gap = barthelemy_gap(&quad, &quad, &u, &zero).unwrap();
        assert!(gap <= 1e-12);
        // F = E: a Dirichlet form dominates itself.
        let sampler = Sampler::new(3, 200, SamplerKind::default());
        let report = check_barthelemy(&s, &quad, &quad, &sampler, 1e-10).unwrap();
        assert!(report.pass, "worst {}", report.worst);
    }

    #[test]
    fn barthelemy_for_perturbed_pair() {
        let s = FiniteSpace::path(5);
        let base = FunctionalSpec::graph_p(&s, 2.0);
        let mu = VertexMeasure::on_set(5, s.boundary(), 1.0).unwrap();
        let perturbed = FunctionalSpec::perturbed(
            base.clone(),
            BProfile::PowerLaw {
                c_plus: 1.5,
                c_minus: 0.5,
                q: 2.0,
            },
            mu,
        );
        let e = eval_fn(base);
        let ff = eval_fn(perturbed);
        let sampler = Sampler::new(17, 300, SamplerKind::default());
        let report = check_barthelemy(&s, &ff, &e, &sampler, 1e-10).unwrap();
        assert!(report.pass, "worst {}", report.worst);
    }

    #[test]
    fn barthelemy_infinite_f_is_vacuous() {
        let s = FiniteSpace::path(3);
        let mu = VertexMeasure::new(vec![1.0, 0.0, 0.0]).unwrap();
        let wall = FunctionalSpec::perturbed(
            FunctionalSpec::Quadratic { scale: 1.0 },
            BProfile::Well { a: -0.1, b: 0.1 },
            mu,
        );
        let e = eval_fn(FunctionalSpec::Quadratic { scale: 1.0 });
        let ff = eval_fn(wall);
        let sampler = Sampler::new(23, 200, SamplerKind::default());
        let report = check_barthelemy(&s, &ff, &e, &sampler, 1e-10).unwrap();
        assert!(report.pass, "worst {}", report.worst);
        assert!(report.vacuous > 0, "expected vacuous samples");
        assert_eq!(report.vacuous + report.checked, 200);
    }

    #[test]
    fn locality_of_pointwise_and_disconnected_functionals() {
        // Two disconnected edges: fields supported on different components.
        let s = FiniteSpace::new(
            vec![1.0; 4],
            vec![(0, 1, 1.0), (2, 3, 1.0)],
            vec![],
        )
        .unwrap();
        let e = eval_fn(FunctionalSpec::graph_p(&s, 2.0));
        let u = f(&s, &[1.0, -1.0, 0.0, 0.0]);
        let v = f(&s, &[0.0, 0.0, 2.0, 1.0]);
        assert_eq!(locality_gap(&e, &u, &v).unwrap(), 0.0);

        // Pointwise perturbations are local for any disjoint supports.
        let mu = VertexMeasure::new(vec![1.0; 4]).unwrap();
        let pointwise = eval_fn(FunctionalSpec::perturbed(
            FunctionalSpec::Zero,
            BProfile::PowerLaw {
                c_plus: 1.0,
                c_minus: 2.0,
                q: 2.0,
            },
            mu,
        ));
        let sampler = Sampler::new(29, 200, SamplerKind::DisjointSupportPairs { hi: 2.0 });
        let report = check_locality(&s, &pointwise, &sampler, 1e-12).unwrap();
        assert!(report.pass, "worst {}", report.worst);

        // u = 0: φ(v) = φ(0) + φ(v) because φ(0) = 0.
        let zero = Field::zeros(&s);
        assert_eq!(locality_gap(&pointwise, &zero, &v).unwrap(), 0.0);
    }

    #[test]
    fn connected_graph_energy_is_not_local() {
        let s = FiniteSpace::path(4);
        let e = eval_fn(FunctionalSpec::graph_p(&s, 2.0));
        let u = f(&s, &[1.0, 0.0, 0.0, 0.0]);
        let v = f(&s, &[0.0, 2.0, 0.0, 0.0]);
        assert!(locality_gap(&e, &u, &v).unwrap() > 0.1);
    }

    #[test]
    fn cone_monotonicity_of_perturbations() {
        let s = FiniteSpace::path(4);
        let mu = VertexMeasure::new(vec![0.5, 1.0, 0.0, 2.0]).unwrap();
        let psi = eval_fn(FunctionalSpec::perturbed(
            FunctionalSpec::Zero,
            BProfile::PowerLaw {
                c_plus: 1.0,
                c_minus: 2.0,
                q: 2.0,
            },
            mu,
        ));
        let sampler = Sampler::new(31, 200, SamplerKind::Nonnegative { hi: 2.0 });
        let report = check_cone_monotone(&s, &psi, &sampler, 1e-12).unwrap();
        assert!(report.pass, "worst {}", report.worst);
        // v = u has gap exactly 0; psi ≡ 0 likewise.
        let u = f(&s, &[1.0, 2.0, 0.0, 0.5]);
        assert_eq!(cone_monotone_gap(&psi, &u, &u), 0.0);
        let zero_psi = eval_fn(FunctionalSpec::Zero);
        assert_eq!(cone_monotone_gap(&zero_psi, &u, &u), 0.0);
    }

    #[test]
    fn abs_inequality_examples() {
        let s = FiniteSpace::new(vec![1.0, 1.0], vec![(0, 1, 1.0)], vec![]).unwrap();
        let e = eval_fn(FunctionalSpec::graph_p(&s, 2.0));
        // u ≥ 0: |u| = u, gap 0.
        let u = f(&s, &[1.0, 2.0]);
        assert_eq!(abs_inequality_gap(&e, &u), 0.0);
        // u = (−1, 1): E(|u|) = 0, E(u) = 2 · gap −2.
        let w = f(&s, &[-1.0, 1.0]);
        assert!((abs_inequality_gap(&e, &w) - (-2.0)).abs() < 1e-15);
        // quadratic depends on |u| only
        let q = eval_fn(FunctionalSpec::Quadratic { scale: 1.0 });
        let sampler = Sampler::new(37, 200, SamplerKind::Gaussian { scale: 1.5 });
        let report = check_abs_inequality(&s, &q, &sampler, 1e-12).unwrap();
        assert!(report.pass && report.worst.abs() < 1e-12);
    }

    #[test]
    fn witnesses_reproduce_reported_violations() {
        let s = FiniteSpace::cycle(6);
        let e = eval_fn(FunctionalSpec::graph_p(&s, 3.0));
        let sampler = Sampler::new(41, 150, SamplerKind::UniformBox { lo: -2.0, hi: 2.0 });
        let report = check_submodular(&s, &e, &sampler, 1e-10).unwrap();
        let witness = report.report.witness.as_ref().unwrap();
        let u = f(&s, &witness.fields[0].1);
        let v = f(&s, &witness.fields[1].1);
        let gap = submodular_gap(&e, &u, &v).unwrap();
        let rel = (gap - report.report.worst).abs() / report.report.worst.abs().max(1e-30);
        assert!(rel < 1e-14);

        let alphas = [0.5, 2.0];
        let report = check_alpha_truncation(&s, &e, &sampler, &alphas, 1e-10).unwrap();
        let witness = report.witness.as_ref().unwrap();
        let u = f(&s, &witness.fields[0].1);
        let v = f(&s, &witness.fields[1].1);
        let gap = alpha_truncation_gap(&e, &u, &v, witness.parameter.unwrap()).unwrap();
        let rel = (gap - report.worst).abs() / report.worst.abs().max(1e-30);
        assert!(rel < 1e-14);
    }

    #[test]
    fn perturbation_does_not_change_the_submodular_gap() {
        // Pointwise terms satisfy the lattice identity with equality, so
        // the gap of base + perturbation matches the gap of the base on
        // every pair.
        let s = FiniteSpace::path(5);
        let base = FunctionalSpec::graph_p(&s, 2.0);
        let mu = VertexMeasure::new(vec![1.0, 0.0, 0.5, 0.0, 2.0]).unwrap();
        let perturbed = FunctionalSpec::perturbed(
            base.clone(),
            BProfile::PowerLaw {
                c_plus: 2.0,
                c_minus: 1.0,
                q: 3.0,
            },
            mu,
        );
        let eb = eval_fn(base);
        let ep = eval_fn(perturbed);
        let sampler = Sampler::new(43, 120, SamplerKind::UniformBox { lo: -1.0, hi: 1.0 });
        for (u, v) in sampler.pairs(&s) {
            let gb = submodular_gap(&eb, &u, &v).unwrap();
            let gp = submodular_gap(&ep, &u, &v).unwrap();
            assert!((gb - gp).abs() < 1e-12, "{gb} vs {gp}");
        }
        let rb = check_submodular(&s, &eb, &sampler, 1e-10).unwrap();
        let rp = check_submodular(&s, &ep, &sampler, 1e-10).unwrap();
        assert!((rb.report.worst - rp.report.worst).abs() < 1e-12);
    }

    #[test]
    fn sampler_is_deterministic() {
        let s = FiniteSpace::path(4);
        let a = Sampler::new(99, 10, SamplerKind::Gaussian { scale: 1.0 }).fields(&s);
        let b = Sampler::new(99, 10, SamplerKind::Gaussian { scale: 1.0 }).fields(&s);
        assert_eq!(a, b);
        let c = Sampler::new(100, 10, SamplerKind::Gaussian { scale: 1.0 }).fields(&s);
        assert_ne!(a, c);
    }

    #[test]
    fn comonotone_pairs_are_comonotone() {
        let s = FiniteSpace::path(5);
        let sampler = Sampler::new(7, 50, SamplerKind::ComonotonePairs { hi: 2.0 });
        for (u, v) in sampler.comonotone_pairs(&s) {
            for i in 0..5 {
                for j in 0..5 {
                    let du = u.values()[i] - u.values()[j];
                    let dv = v.values()[i] - v.values()[j];
                    assert!(du * dv >= -1e-12);
                }
            }
        }
    }
}
