//! Exact optimal transport between finitely supported measures, and
//! displacement interpolation between measures on a Euclidean point set.

mod simplex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{FiniteMeasure, JointMeasure};

/// Tolerance on the marginals of a [`TransportPlan`].
pub const MARGINAL_TOLERANCE: f64 = 1e-9;

/// Coordinate tolerance when merging interpolated support points.
pub const DEDUP_TOLERANCE: f64 = 1e-12;

/// Nonnegative ground costs between two indexed supports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CostRepr", into = "CostRepr")]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CostRepr {
    entries: Vec<Vec<f64>>,
}

impl TryFrom<CostRepr> for CostMatrix {
    type Error = Error;
    fn try_from(r: CostRepr) -> Result<Self> {
        CostMatrix::from_matrix(r.entries)
    }
}

impl From<CostMatrix> for CostRepr {
    fn from(c: CostMatrix) -> Self {
        CostRepr { entries: c.to_matrix() }
    }
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || rows * cols != entries.len() {
            return Err(Error::dim(format!(
                "{} cost entries for a {rows}x{cols} matrix",
                entries.len()
            )));
        }
        if let Some(c) = entries.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
            return Err(Error::Config(format!(
                "cost entry {c} is not a finite nonnegative number"
            )));
        }
        Ok(Self { rows, cols, entries })
    }

    pub fn from_matrix(m: Vec<Vec<f64>>) -> Result<Self> {
        let rows = m.len();
        let cols = m.first().map_or(0, Vec::len);
        if m.iter().any(|r| r.len() != cols) {
            return Err(Error::dim("ragged cost matrix"));
        }
        Self::new(rows, cols, m.into_iter().flatten().collect())
    }

    /// Pairwise Euclidean distances between two point sets.
    pub fn euclidean(a: &EmbeddedSupport, b: &EmbeddedSupport) -> Result<Self> {
        if a.dim != b.dim {
            return Err(Error::dim(format!("supports of dimension {} and {}", a.dim, b.dim)));
        }
        let entries = a
            .points
            .iter()
            .flat_map(|x| b.points.iter().map(move |y| euclidean(x, y)))
            .collect();
        Self::new(a.len(), b.len(), entries)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.cols + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn to_matrix(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.cols).map(<[f64]>::to_vec).collect()
    }

    fn has_zero_diagonal(&self) -> bool {
        self.rows == self.cols && (0..self.rows).all(|i| self.get(i, i) == 0.0)
    }
}

pub(crate) fn euclidean(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// A coupling of two finite measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PlanRepr", into = "PlanRepr")]
pub struct TransportPlan {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    source: FiniteMeasure,
    target: FiniteMeasure,
}

#[derive(Serialize, Deserialize)]
struct PlanRepr {
    rows: usize,
    cols: usize,
    weights: Vec<Vec<f64>>,
}

impl TryFrom<PlanRepr> for TransportPlan {
    type Error = Error;
    fn try_from(r: PlanRepr) -> Result<Self> {
        if r.weights.len() != r.rows || r.weights.iter().any(|w| w.len() != r.cols) {
            return Err(Error::dim(format!(
                "plan declared {}x{} but weights have a different shape",
                r.rows, r.cols
            )));
        }
        let joint = JointMeasure::from_matrix(r.weights)?;
        TransportPlan::from_joint(&joint)
    }
}

impl From<TransportPlan> for PlanRepr {
    fn from(p: TransportPlan) -> Self {
        PlanRepr {
            rows: p.rows,
            cols: p.cols,
            weights: p.to_matrix(),
        }
    }
}

impl TransportPlan {
    /// Validates `weights` (row-major) against the declared marginals.
    pub fn new(weights: Vec<f64>, source: FiniteMeasure, target: FiniteMeasure) -> Result<Self> {
        let (rows, cols) = (source.len(), target.len());
        if weights.len() != rows * cols {
            return Err(Error::dim(format!(
                "{} plan weights for {rows}x{cols} marginals",
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::InvalidMeasure(format!("plan weight {w}")));
        }
        for i in 0..rows {
            let s: f64 = weights[i * cols..(i + 1) * cols].iter().sum();
            if (s - source[i]).abs() > MARGINAL_TOLERANCE {
                return Err(Error::Config(format!(
                    "plan row {i} sums to {s}, marginal is {}",
                    source[i]
                )));
            }
        }
        for j in 0..cols {
            let s: f64 = (0..rows).map(|i| weights[i * cols + j]).sum();
            if (s - target[j]).abs() > MARGINAL_TOLERANCE {
                return Err(Error::Config(format!(
                    "plan column {j} sums to {s}, marginal is {}",
                    target[j]
                )));
            }
        }
        Ok(Self {
            rows,
            cols,
            weights,
            source,
            target,
        })
    }

    pub fn from_joint(joint: &JointMeasure) -> Result<Self> {
        Self::new(joint.weights().to_vec(), joint.row_marginal(), joint.col_marginal())
    }

    /// `a (x) b`.
    pub fn independent(a: &FiniteMeasure, b: &FiniteMeasure) -> Self {
        let joint = JointMeasure::product_of(a, b);
        Self {
            rows: a.len(),
            cols: b.len(),
            weights: joint.weights().to_vec(),
            source: a.clone(),
            target: b.clone(),
        }
    }

    /// Mass of `a` kept in place.
    pub fn diagonal(a: &FiniteMeasure) -> Self {
        let n = a.len();
        let mut weights = vec![0.0; n * n];
        for (i, w) in a.weights().iter().enumerate() {
            weights[i * n + i] = *w;
        }
        Self {
            rows: n,
            cols: n,
            weights,
            source: a.clone(),
            target: a.clone(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.cols + j]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn source(&self) -> &FiniteMeasure {
        &self.source
    }

    pub fn target(&self) -> &FiniteMeasure {
        &self.target
    }

    pub fn to_matrix(&self) -> Vec<Vec<f64>> {
        self.weights.chunks(self.cols).map(<[f64]>::to_vec).collect()
    }

    /// `<plan, cost^p>`.
    pub fn cost(&self, cost: &CostMatrix, p: f64) -> Result<f64> {
        if cost.rows != self.rows || cost.cols != self.cols {
            return Err(Error::dim(format!(
                "{}x{} cost for a {}x{} plan",
                cost.rows, cost.cols, self.rows, self.cols
            )));
        }
        Ok(self
            .weights
            .iter()
            .zip(&cost.entries)
            .filter(|(w, _)| **w > 0.0)
            .map(|(w, c)| w * c.powf(p))
            .sum())
    }

    /// Positive-mass cells `(i, j, mass)` in row-major order.
    pub fn atoms(&self) -> Vec<(usize, usize, f64)> {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 0.0)
            .map(|(c, w)| (c / self.cols, c % self.cols, *w))
            .collect()
    }
}

/// Points in `R^dim`, indexed in the order given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SupportRepr", into = "SupportRepr")]
pub struct EmbeddedSupport {
    dim: usize,
    points: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct SupportRepr {
    dim: usize,
    points: Vec<Vec<f64>>,
}

impl TryFrom<SupportRepr> for EmbeddedSupport {
    type Error = Error;
    fn try_from(r: SupportRepr) -> Result<Self> {
        EmbeddedSupport::new(r.dim, r.points)
    }
}

impl From<EmbeddedSupport> for SupportRepr {
    fn from(e: EmbeddedSupport) -> Self {
        SupportRepr {
            dim: e.dim,
            points: e.points,
        }
    }
}

impl EmbeddedSupport {
    pub fn new(dim: usize, points: Vec<Vec<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Config("embedding with no points".into()));
        }
        if let Some(i) = points.iter().position(|p| p.len() != dim) {
            return Err(Error::dim(format!(
                "point {i} has {} coordinates, expected {dim}",
                points[i].len()
            )));
        }
        if points.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::Config("embedding coordinates must be finite".into()));
        }
        Ok(Self { dim, points })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }
}

/// `W_p(mu, nu)` under `cost`, together with an optimal plan.
///
/// Identical inputs over a cost with zero diagonal short-circuit to the
/// diagonal plan so the distance is exactly zero.
pub fn wasserstein(mu: &FiniteMeasure, nu: &FiniteMeasure, cost: &CostMatrix, p: f64) -> Result<(f64, TransportPlan)> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::Domain(format!("order p = {p} must be >= 1")));
    }
    if cost.rows != mu.len() || cost.cols != nu.len() {
        return Err(Error::Config(format!(
            "{}x{} cost between measures of size {} and {}",
            cost.rows,
            cost.cols,
            mu.len(),
            nu.len()
        )));
    }
    if mu == nu && cost.has_zero_diagonal() {
        return Ok((0.0, TransportPlan::diagonal(mu)));
    }

    // Solve on the positive-mass rows and columns only.
    let rows: Vec<usize> = mu.support().collect();
    let cols: Vec<usize> = nu.support().collect();
    let supply: Vec<f64> = rows.iter().map(|&i| mu[i]).collect();
    let demand: Vec<f64> = cols.iter().map(|&j| nu[j]).collect();
    let reduced_cost: Vec<f64> = rows
        .iter()
        .flat_map(|&i| cols.iter().map(move |&j| cost.get(i, j).powf(p)))
        .collect();
    let sol = simplex::solve(&supply, &demand, &reduced_cost)?;

    let mut weights = vec![0.0; mu.len() * nu.len()];
    for (a, &i) in rows.iter().enumerate() {
        for (b, &j) in cols.iter().enumerate() {
            weights[i * nu.len() + j] = sol.flow[a * cols.len() + b];
        }
    }
    let plan = TransportPlan::new(weights, mu.clone(), nu.clone())
        .map_err(|e| Error::Solver(format!("solver returned an infeasible plan: {e}")))?;
    let distance = plan.cost(cost, p)?.max(0.0).powf(1.0 / p);
    Ok((distance, plan))
}

/// One time slice of a displacement interpolation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeodesicPoint {
    pub t: f64,
    pub support: EmbeddedSupport,
    pub measure: FiniteMeasure,
    /// Index into `support` of each plan atom at this time.
    pub atom_location: Vec<usize>,
}

/// A constant-speed `W_2` geodesic realised by moving each atom of an
/// optimal plan along its segment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Geodesic {
    pub plan: TransportPlan,
    pub distance: f64,
    pub steps: Vec<GeodesicPoint>,
}

fn check_times(times: &[f64]) -> Result<()> {
    let ok =
        times.len() >= 2 && times[0] == 0.0 && *times.last().unwrap() == 1.0 && times.windows(2).all(|w| w[0] < w[1]);
    if ok {
        Ok(())
    } else {
        Err(Error::Config(
            "geodesic times must increase strictly from 0 to 1".into(),
        ))
    }
}

/// `k / K` for `k = 0..=K`.
pub fn uniform_times(k: usize) -> Vec<f64> {
    (0..=k).map(|i| i as f64 / k as f64).collect()
}

/// Geodesic between `mu` and `nu`, both supported on `emb`, under the
/// Euclidean metric.
pub fn geodesic(mu: &FiniteMeasure, nu: &FiniteMeasure, emb: &EmbeddedSupport, times: &[f64]) -> Result<Geodesic> {
    let cost = CostMatrix::euclidean(emb, emb)?;
    geodesic_with_cost(mu, nu, emb, &cost, times)
}

/// As [`geodesic`], but with a caller-supplied ground cost that must be the
/// Euclidean metric of `emb`.
pub fn geodesic_with_cost(
    mu: &FiniteMeasure,
    nu: &FiniteMeasure,
    emb: &EmbeddedSupport,
    cost: &CostMatrix,
    times: &[f64],
) -> Result<Geodesic> {
    check_times(times)?;
    if mu.len() != emb.len() || nu.len() != emb.len() {
        return Err(Error::dim(format!(
            "measures of size {} and {} on an embedding of {} points",
            mu.len(),
            nu.len(),
            emb.len()
        )));
    }
    let reference = CostMatrix::euclidean(emb, emb)?;
    if cost.rows != reference.rows
        || cost.cols != reference.cols
        || cost
            .entries
            .iter()
            .zip(&reference.entries)
            .any(|(a, b)| (a - b).abs() > 1e-9 * (1.0 + b))
    {
        return Err(Error::UnsupportedGeometry(
            "displacement interpolation needs the Euclidean metric of the embedding".into(),
        ));
    }
    let (distance, plan) = wasserstein(mu, nu, &reference, 2.0)?;
    let atoms = plan.atoms();
    let steps = times
        .iter()
        .map(|&t| {
            if t == 0.0 {
                GeodesicPoint {
                    t,
                    support: emb.clone(),
                    measure: mu.clone(),
                    atom_location: atoms.iter().map(|a| a.0).collect(),
                }
            } else if t == 1.0 {
                GeodesicPoint {
                    t,
                    support: emb.clone(),
                    measure: nu.clone(),
                    atom_location: atoms.iter().map(|a| a.1).collect(),
                }
            } else {
                interpolate(emb, &atoms, t)
            }
        })
        .collect();
    Ok(Geodesic { plan, distance, steps })
}

fn interpolate(emb: &EmbeddedSupport, atoms: &[(usize, usize, f64)], t: f64) -> GeodesicPoint {
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut mass: Vec<f64> = Vec::new();
    let mut atom_location = Vec::with_capacity(atoms.len());
    for &(i, j, w) in atoms {
        let x = emb.point(i);
        let y = emb.point(j);
        let z: Vec<f64> = x.iter().zip(y).map(|(a, b)| (1.0 - t) * a + t * b).collect();
        let found = points
            .iter()
            .position(|p| p.iter().zip(&z).all(|(a, b)| (a - b).abs() <= DEDUP_TOLERANCE));
        let idx = match found {
            Some(k) => {
                mass[k] += w;
                k
            }
            None => {
                points.push(z);
                mass.push(w);
                points.len() - 1
            }
        };
        atom_location.push(idx);
    }
    GeodesicPoint {
        t,
        support: EmbeddedSupport { dim: emb.dim, points },
        measure: FiniteMeasure::new(mass).expect("plan atoms carry unit mass"),
        atom_location,
    }
}

/// Couplings between neighbouring time slices, induced by moving each plan
/// atom along its segment.
pub fn consecutive_couplings(geo: &Geodesic, plan: &TransportPlan) -> Result<Vec<TransportPlan>> {
    if plan != &geo.plan {
        return Err(Error::Config(
            "plan does not match the one the geodesic was built from".into(),
        ));
    }
    let atoms = plan.atoms();
    geo.steps
        .windows(2)
        .map(|w| {
            let (a, b) = (&w[0], &w[1]);
            let cols = b.measure.len();
            let mut weights = vec![0.0; a.measure.len() * cols];
            for (k, &(_, _, mass)) in atoms.iter().enumerate() {
                weights[a.atom_location[k] * cols + b.atom_location[k]] += mass;
            }
            TransportPlan::new(weights, a.measure.clone(), b.measure.clone())
        })
        .collect()
}
