//! Finite weighted measure spaces and the fields living on them.
//!
//! A [`FiniteSpace`] is a vertex set with strictly positive masses (the
//! measure `m`), a weighted edge list, and an optional set of boundary
//! vertices. A [`Field`] is a real-valued function on the vertices, i.e.
//! an element of `L²(X, m)`. All lattice and truncation operations used
//! by the form machinery live here.

use std::fmt;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

static NEXT_SPACE_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Debug, Error)]
pub enum SpaceError {
    #[error("mass at vertex {0} must be strictly positive and finite")]
    NonpositiveMass(usize),
    #[error("edge ({i},{j}) has nonpositive or nonfinite weight")]
    NonpositiveWeight { i: usize, j: usize },
    #[error("self-loop at vertex {0}")]
    SelfLoop(usize),
    #[error("duplicate edge ({i},{j})")]
    DuplicateEdge { i: usize, j: usize },
    #[error("vertex index {index} out of range for space with {n} vertices")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("field value at vertex {0} is not finite")]
    NonFiniteValue(usize),
    #[error("fields belong to different spaces")]
    SpaceMismatch,
    #[error("truncation level must be nonnegative, got {0}")]
    NegativeTruncation(f64),
    #[error("alpha must be strictly positive, got {0}")]
    NonpositiveAlpha(f64),
    #[error("vertex count must be positive")]
    EmptySpace,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Undirected weighted edge, stored with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "(usize, usize, f64)", into = "(usize, usize, f64)")]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

impl From<(usize, usize, f64)> for Edge {
    fn from((i, j, weight): (usize, usize, f64)) -> Self {
        Edge { i, j, weight }
    }
}

impl From<Edge> for (usize, usize, f64) {
    fn from(e: Edge) -> Self {
        (e.i, e.j, e.weight)
    }
}

/// A subset of vertex indices, kept sorted and deduplicated.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VertexSet {
    indices: Vec<usize>,
}

impl VertexSet {
    pub fn new(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        VertexSet { indices }
    }

    pub fn empty() -> Self {
        VertexSet::default()
    }

    pub fn full(n: usize) -> Self {
        VertexSet {
            indices: (0..n).collect(),
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, v: usize) -> bool {
        self.indices.binary_search(&v).is_ok()
    }

    pub fn is_subset_of(&self, other: &VertexSet) -> bool {
        self.indices.iter().all(|v| other.contains(*v))
    }

    pub fn union(&self, other: &VertexSet) -> VertexSet {
        let mut v = self.indices.clone();
        v.extend_from_slice(&other.indices);
        VertexSet::new(v)
    }

    pub fn intersection(&self, other: &VertexSet) -> VertexSet {
        VertexSet {
            indices: self
                .indices
                .iter()
                .copied()
                .filter(|v| other.contains(*v))
                .collect(),
        }
    }

    pub fn validate(&self, n: usize) -> Result<(), SpaceError> {
        match self.indices.iter().find(|&&v| v >= n) {
            Some(&index) => Err(SpaceError::IndexOutOfRange { index, n }),
            None => Ok(()),
        }
    }

    /// Indicator field of the set.
    pub fn indicator(&self, space: &Arc<FiniteSpace>) -> Field {
        let mut values = vec![0.0; space.n()];
        for &v in &self.indices {
            values[v] = 1.0;
        }
        Field {
            space: Arc::clone(space),
            values,
        }
    }
}

impl From<Vec<usize>> for VertexSet {
    fn from(v: Vec<usize>) -> Self {
        VertexSet::new(v)
    }
}

#[derive(Serialize, Deserialize)]
struct SpaceFile {
    n: usize,
    masses: Vec<f64>,
    edges: Vec<Edge>,
    #[serde(default)]
    boundary: Vec<usize>,
}

/// A finite vertex set with strictly positive masses and a weighted edge
/// list; the discrete measure space `(X, m)` with `supp(m) = X`.
///
/// Boundary vertices are ordinary vertices carrying mass. They do not
/// constrain anything by themselves; Dirichlet-type conditions are imposed
/// by functionals, not by the space.
#[derive(Debug, Clone)]
pub struct FiniteSpace {
    id: u64,
    n: usize,
    masses: Vec<f64>,
    edges: Vec<Edge>,
    boundary: VertexSet,
}

impl FiniteSpace {
    pub fn new(
        masses: Vec<f64>,
        edges: Vec<(usize, usize, f64)>,
        boundary: Vec<usize>,
    ) -> Result<Arc<Self>, SpaceError> {
        let n = masses.len();
        if n == 0 {
            return Err(SpaceError::EmptySpace);
        }
        for (i, &m) in masses.iter().enumerate() {
            if !(m > 0.0) || !m.is_finite() {
                return Err(SpaceError::NonpositiveMass(i));
            }
        }
        let mut normalized: Vec<Edge> = Vec::with_capacity(edges.len());
        for (a, b, w) in edges {
            if a == b {
                return Err(SpaceError::SelfLoop(a));
            }
            let (i, j) = if a < b { (a, b) } else { (b, a) };
            if j >= n {
                return Err(SpaceError::IndexOutOfRange { index: j, n });
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(SpaceError::NonpositiveWeight { i, j });
            }
            normalized.push(Edge { i, j, weight: w });
        }
        let mut seen: Vec<(usize, usize)> = normalized.iter().map(|e| (e.i, e.j)).collect();
        seen.sort_unstable();
        for pair in seen.windows(2) {
            if pair[0] == pair[1] {
                return Err(SpaceError::DuplicateEdge {
                    i: pair[0].0,
                    j: pair[0].1,
                });
            }
        }
        let boundary = VertexSet::new(boundary);
        boundary.validate(n)?;
        Ok(Arc::new(FiniteSpace {
            id: NEXT_SPACE_ID.fetch_add(1, Ordering::Relaxed),
            n,
            masses,
            edges: normalized,
            boundary,
        }))
    }

    /// Path graph on `n` vertices with unit masses and unit edge weights;
    /// the two endpoints are recorded as boundary vertices.
    pub fn path(n: usize) -> Arc<Self> {
        let edges = (0..n.saturating_sub(1)).map(|i| (i, i + 1, 1.0)).collect();
        let boundary = if n > 1 { vec![0, n - 1] } else { vec![] };
        FiniteSpace::new(vec![1.0; n], edges, boundary).expect("path graph is always valid")
    }

    /// Cycle graph on `n >= 3` vertices with unit masses and weights.
    pub fn cycle(n: usize) -> Arc<Self> {
        let mut edges: Vec<(usize, usize, f64)> =
            (0..n - 1).map(|i| (i, i + 1, 1.0)).collect();
        edges.push((0, n - 1, 1.0));
        FiniteSpace::new(vec![1.0; n], edges, vec![]).expect("cycle graph is always valid")
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn mass(&self, i: usize) -> f64 {
        self.masses[i]
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn boundary(&self) -> &VertexSet {
        &self.boundary
    }

    pub fn from_json_str(s: &str) -> Result<Arc<Self>, SpaceError> {
        let file: SpaceFile = serde_json::from_str(s)?;
        if file.masses.len() != file.n {
            return Err(SpaceError::LengthMismatch {
                expected: file.n,
                got: file.masses.len(),
            });
        }
        FiniteSpace::new(
            file.masses,
            file.edges.iter().map(|e| (e.i, e.j, e.weight)).collect(),
            file.boundary,
        )
    }

    pub fn load(path: &Path) -> Result<Arc<Self>, SpaceError> {
        let text = std::fs::read_to_string(path)?;
        FiniteSpace::from_json_str(&text)
    }

    pub fn to_json(&self) -> String {
        let file = SpaceFile {
            n: self.n,
            masses: self.masses.clone(),
            edges: self.edges.clone(),
            boundary: self.boundary.indices().to_vec(),
        };
        serde_json::to_string_pretty(&file).expect("space serialization cannot fail")
    }
}

fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// A real-valued function on the vertices of a [`FiniteSpace`].
#[derive(Clone)]
pub struct Field {
    space: Arc<FiniteSpace>,
    values: Vec<f64>,
}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Field(space {}, {:?})", self.space.id, self.values)
    }
}

impl PartialEq for Field {
    fn eq(&self, other: &Self) -> bool {
        self.space.id == other.space.id && self.values == other.values
    }
}

impl Field {
    pub fn new(space: &Arc<FiniteSpace>, values: Vec<f64>) -> Result<Self, SpaceError> {
        if values.len() != space.n() {
            return Err(SpaceError::LengthMismatch {
                expected: space.n(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(SpaceError::NonFiniteValue(i));
        }
        Ok(Field {
            space: Arc::clone(space),
            values,
        })
    }

    pub fn zeros(space: &Arc<FiniteSpace>) -> Self {
        Field {
            space: Arc::clone(space),
            values: vec![0.0; space.n()],
        }
    }

    pub fn constant(space: &Arc<FiniteSpace>, c: f64) -> Result<Self, SpaceError> {
        Field::new(space, vec![c; space.n()])
    }

    pub fn space(&self) -> &Arc<FiniteSpace> {
        &self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check_same_space(&self, other: &Field) -> Result<(), SpaceError> {
        if self.space.id == other.space.id {
            Ok(())
        } else {
            Err(SpaceError::SpaceMismatch)
        }
    }

    fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field, SpaceError> {
        self.check_same_space(other)?;
        Ok(Field {
            space: Arc::clone(&self.space),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            space: Arc::clone(&self.space),
            values: self.values.iter().map(|&a| f(a)).collect(),
        }
    }

    /// Pointwise minimum `u ∧ v`.
    pub fn meet(&self, other: &Field) -> Result<Field, SpaceError> {
        self.zip_map(other, f64::min)
    }

    /// Pointwise maximum `u ∨ v`.
    pub fn join(&self, other: &Field) -> Result<Field, SpaceError> {
        self.zip_map(other, f64::max)
    }

    /// Pointwise clamp to `[-c, c]`, i.e. `-c ∨ u ∧ c`.
    pub fn truncate(&self, c: f64) -> Result<Field, SpaceError> {
        if !(c >= 0.0) {
            return Err(SpaceError::NegativeTruncation(c));
        }
        Ok(self.map(|a| a.clamp(-c, c)))
    }

    /// The interpolating field `½((u−v+α)₊ − (u−v−α)₋)` from the second
    /// Dirichlet-form inequality, with `x₊ = max(x,0)` and `x₋ = max(−x,0)`.
    ///
    /// Pointwise this equals `(u−v)/2` as `α → 0` and `u−v` once
    /// `α ≥ ‖u−v‖_∞`.
    pub fn alpha_midpoint(&self, other: &Field, alpha: f64) -> Result<Field, SpaceError> {
        if !(alpha > 0.0) {
            return Err(SpaceError::NonpositiveAlpha(alpha));
        }
        self.zip_map(other, |a, b| {
            let d = a - b;
            0.5 * ((d + alpha).max(0.0) - (-(d - alpha)).max(0.0))
        })
    }

    /// Mass-weighted norm `sqrt(Σ mᵢ uᵢ²)`.
    pub fn l2_norm(&self) -> f64 {
        self.values
            .iter()
            .zip(self.space.masses())
            .map(|(&v, &m)| m * v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn l2_dist(&self, other: &Field) -> Result<f64, SpaceError> {
        self.check_same_space(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .zip(self.space.masses())
            .map(|((&a, &b), &m)| m * (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }

    pub fn linf_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn linf_dist(&self, other: &Field) -> Result<f64, SpaceError> {
        self.check_same_space(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |acc, (&a, &b)| acc.max((a - b).abs())))
    }

    /// Pointwise positive part `max(u, 0)`.
    pub fn pos_part(&self) -> Field {
        self.map(|a| a.max(0.0))
    }

    /// Pointwise negative part `max(−u, 0)`, so that `u = u₊ − u₋`.
    pub fn neg_part(&self) -> Field {
        self.map(|a| (-a).max(0.0))
    }

    pub fn abs(&self) -> Field {
        self.map(f64::abs)
    }

    /// Pointwise sign with `sgn(0) = 0`.
    pub fn sgn(&self) -> Field {
        self.map(sgn)
    }

    pub fn scale(&self, c: f64) -> Field {
        self.map(|a| c * a)
    }

    pub fn add(&self, other: &Field) -> Result<Field, SpaceError> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Result<Field, SpaceError> {
        self.zip_map(other, |a, b| a - b)
    }

    /// Pointwise product.
    pub fn mul(&self, other: &Field) -> Result<Field, SpaceError> {
        self.zip_map(other, |a, b| a * b)
    }

    /// Restriction `u·1_K`: the field agreeing with `u` on `set` and
    /// vanishing elsewhere.
    pub fn masked(&self, set: &VertexSet) -> Field {
        let mut values = vec![0.0; self.values.len()];
        for &v in set.indices() {
            values[v] = self.values[v];
        }
        Field {
            space: Arc::clone(&self.space),
            values,
        }
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.iter().all(|&v| v >= 0.0)
    }

    /// Pointwise `u ≤ v + tol`.
    pub fn le(&self, other: &Field, tol: f64) -> Result<bool, SpaceError> {
        self.check_same_space(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .all(|(&a, &b)| a <= b + tol))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_vertex() -> Arc<FiniteSpace> {
        FiniteSpace::new(vec![1.0, 1.0], vec![(0, 1, 1.0)], vec![]).unwrap()
    }

    fn f(space: &Arc<FiniteSpace>, v: &[f64]) -> Field {
        Field::new(space, v.to_vec()).unwrap()
    }

    #[test]
    fn meet_join_pointwise() {
        let s = two_vertex();
        let u = f(&s, &[0.0, 1.0]);
        let v = f(&s, &[1.0, 0.0]);
        assert_eq!(u.meet(&v).unwrap().values(), &[0.0, 0.0]);
        assert_eq!(u.join(&v).unwrap().values(), &[1.0, 1.0]);
        assert_eq!(u.meet(&u).unwrap(), u);
    }

    #[test]
    fn truncate_clamps() {
        let s = two_vertex();
        let u = f(&s, &[-2.0, 3.0]);
        assert_eq!(u.truncate(1.0).unwrap().values(), &[-1.0, 1.0]);
        assert_eq!(u.truncate(0.0).unwrap().values(), &[0.0, 0.0]);
        let small = f(&s, &[0.5, -0.5]);
        assert_eq!(small.truncate(1.0).unwrap(), small);
        assert!(matches!(
            u.truncate(-1.0),
            Err(SpaceError::NegativeTruncation(_))
        ));
    }

    #[test]
    fn alpha_midpoint_formula() {
        let s = two_vertex();
        let u = f(&s, &[1.0, 1.0]);
        // u = v: w = 0
        let w = u.alpha_midpoint(&u, 1.0).unwrap();
        assert_eq!(w.values(), &[0.0, 0.0]);
        // u - v = 2 with alpha = 1: w = 1.5
        let v = f(&s, &[-1.0, -1.0]);
        let w = u.alpha_midpoint(&v, 1.0).unwrap();
        assert_eq!(w.values(), &[1.5, 1.5]);
        // u - v = -2 with alpha = 1: w = -1.5
        let w = v.alpha_midpoint(&u, 1.0).unwrap();
        assert_eq!(w.values(), &[-1.5, -1.5]);
        assert!(matches!(
            u.alpha_midpoint(&v, 0.0),
            Err(SpaceError::NonpositiveAlpha(_))
        ));
    }

    #[test]
    fn alpha_midpoint_exact_beyond_linf_gap() {
        // For alpha >= ‖u−v‖_∞ the formula evaluates to u − v exactly.
        let s = two_vertex();
        let u = f(&s, &[2.0, -1.0]);
        let v = f(&s, &[0.5, 0.5]);
        let gap = u.sub(&v).unwrap();
        let w = u.alpha_midpoint(&v, gap.linf_norm() + 1.0).unwrap();
        assert_eq!(w, gap);
    }

    #[test]
    fn norms_and_signs() {
        let s = two_vertex();
        let u = f(&s, &[1.0, 1.0]);
        assert!((u.l2_norm() - 2f64.sqrt()).abs() < 1e-15);
        let s3 = FiniteSpace::new(vec![1.0, 1.0, 1.0], vec![], vec![]).unwrap();
        let w = f(&s3, &[-3.0, 0.0, 2.0]);
        assert_eq!(w.sgn().values(), &[-1.0, 0.0, 1.0]);
        let p = f(&s, &[-1.0, 2.0]);
        assert_eq!(p.pos_part().values(), &[0.0, 2.0]);
        assert_eq!(p.neg_part().values(), &[1.0, 0.0]);
    }

    #[test]
    fn weighted_norm_uses_masses() {
        let s = FiniteSpace::new(vec![4.0, 9.0], vec![], vec![]).unwrap();
        let u = f(&s, &[1.0, 1.0]);
        assert!((u.l2_norm() - 13f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn space_mismatch_is_detected() {
        let a = two_vertex();
        let b = two_vertex();
        let u = f(&a, &[1.0, 0.0]);
        let v = f(&b, &[1.0, 0.0]);
        assert!(matches!(u.meet(&v), Err(SpaceError::SpaceMismatch)));
        assert!(matches!(u.l2_dist(&v), Err(SpaceError::SpaceMismatch)));
    }

    #[test]
    fn truncated_meet_against_nonneg_bound() {
        // (|u| ∧ v)·sgn(u) stays below both |u| and v when v ≥ 0.
        let s = two_vertex();
        let u = f(&s, &[-2.0, 0.5]);
        let v = f(&s, &[1.0, 0.25]);
        let w = u.abs().meet(&v).unwrap().mul(&u.sgn()).unwrap();
        for i in 0..2 {
            assert!(w.values()[i].abs() <= u.values()[i].abs());
            assert!(w.values()[i].abs() <= v.values()[i]);
        }
    }

    #[test]
    fn space_validation_errors() {
        assert!(matches!(
            FiniteSpace::new(vec![1.0, -1.0], vec![], vec![]),
            Err(SpaceError::NonpositiveMass(1))
        ));
        assert!(matches!(
            FiniteSpace::new(vec![1.0, 1.0], vec![(0, 0, 1.0)], vec![]),
            Err(SpaceError::SelfLoop(0))
        ));
        assert!(matches!(
            FiniteSpace::new(vec![1.0, 1.0], vec![(0, 1, 1.0), (1, 0, 2.0)], vec![]),
            Err(SpaceError::DuplicateEdge { .. })
        ));
        assert!(matches!(
            FiniteSpace::new(vec![1.0, 1.0], vec![(0, 1, 0.0)], vec![]),
            Err(SpaceError::NonpositiveWeight { .. })
        ));
        assert!(matches!(
            FiniteSpace::new(vec![1.0, 1.0], vec![(0, 3, 1.0)], vec![]),
            Err(SpaceError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn json_round_trip_and_rejection() {
        let s = FiniteSpace::new(vec![1.0, 2.0, 3.0], vec![(0, 1, 1.5), (1, 2, 0.5)], vec![0])
            .unwrap();
        let parsed = FiniteSpace::from_json_str(&s.to_json()).unwrap();
        assert_eq!(parsed.masses(), s.masses());
        assert_eq!(parsed.edges(), s.edges());
        assert_eq!(parsed.boundary(), s.boundary());

        let bad = r#"{"n":2,"masses":[1.0,0.0],"edges":[],"boundary":[]}"#;
        assert!(FiniteSpace::from_json_str(bad).is_err());
        let bad_w = r#"{"n":2,"masses":[1.0,1.0],"edges":[[0,1,-2.0]],"boundary":[]}"#;
        assert!(FiniteSpace::from_json_str(bad_w).is_err());
    }

    #[test]
    fn vertex_set_operations() {
        let a = VertexSet::new(vec![3, 1, 1]);
        let b = VertexSet::new(vec![2, 3]);
        assert_eq!(a.indices(), &[1, 3]);
        assert_eq!(a.union(&b).indices(), &[1, 2, 3]);
        assert_eq!(a.intersection(&b).indices(), &[3]);
        assert!(a.intersection(&b).is_subset_of(&a));
        assert!(a.validate(3).is_err());
        assert!(a.validate(4).is_ok());
    }

    proptest! {
        #[test]
        fn join_plus_meet_is_sum(xs in proptest::collection::vec(-1e6f64..1e6, 5),
                                 ys in proptest::collection::vec(-1e6f64..1e6, 5)) {
            let s = FiniteSpace::new(vec![1.0; 5], vec![], vec![]).unwrap();
            let u = Field::new(&s, xs).unwrap();
            let v = Field::new(&s, ys).unwrap();
            let sum = u.add(&v).unwrap();
            let lattice_sum = u.join(&v).unwrap().add(&u.meet(&v).unwrap()).unwrap();
            prop_assert_eq!(sum, lattice_sum);
        }

        #[test]
        fn lattice_ops_are_linf_nonexpansive(
            xs in proptest::collection::vec(-100f64..100.0, 4),
            ys in proptest::collection::vec(-100f64..100.0, 4),
            zs in proptest::collection::vec(-100f64..100.0, 4),
            c in 0f64..10.0,
        ) {
            let s = FiniteSpace::new(vec![1.0; 4], vec![], vec![]).unwrap();
            let u = Field::new(&s, xs).unwrap();
            let v = Field::new(&s, ys).unwrap();
            let w = Field::new(&s, zs).unwrap();
            let d = u.linf_dist(&v).unwrap();
            prop_assert!(u.meet(&w).unwrap().linf_dist(&v.meet(&w).unwrap()).unwrap() <= d + 1e-12);
            prop_assert!(u.join(&w).unwrap().linf_dist(&v.join(&w).unwrap()).unwrap() <= d + 1e-12);
            prop_assert!(u.truncate(c).unwrap().linf_dist(&v.truncate(c).unwrap()).unwrap() <= d + 1e-12);
            prop_assert!(u.abs().linf_dist(&v.abs()).unwrap() <= d + 1e-12);
        }

        #[test]
        fn truncated_sign_composition_bounds(
            xs in proptest::collection::vec(-50f64..50.0, 4),
            ys in proptest::collection::vec(0f64..50.0, 4),
        ) {
            let s = FiniteSpace::new(vec![1.0; 4], vec![], vec![]).unwrap();
            let u = Field::new(&s, xs).unwrap();
            let v = Field::new(&s, ys).unwrap();
            let w = u.abs().meet(&v).unwrap().mul(&u.sgn()).unwrap();
            for i in 0..4 {
                prop_assert!(w.values()[i].abs() <= u.values()[i].abs() + 1e-12);
                prop_assert!(w.values()[i].abs() <= v.values()[i] + 1e-12);
            }
        }
    }
}
