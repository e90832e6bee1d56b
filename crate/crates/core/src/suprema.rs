//! Expected suprema of processes with Orlicz-controlled increments on finite
//! metric spaces: ball masses, the majorizing-measure integral, the
//! resulting upper bound, and Monte Carlo estimates to compare against.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mc::{self, McConfig};
use crate::measures::{FiniteMeasure, MarkovKernel};
use crate::orlicz::psi_unchecked;

/// Accuracy of the symmetry, diagonal and triangle checks.
const METRIC_TOLERANCE: f64 = 1e-12;

/// Slack allowed in the increment condition for rounding.
const INCREMENT_TOLERANCE: f64 = 1e-9;

/// Smallest weight the optimizer gives any point.
pub const MU_FLOOR: f64 = 1e-6;

/// Largest lattice the grid optimizer will scan.
pub const GRID_LIMIT: u64 = 10_000_000;

/// Increment variance per squared distance for calibrated gaussian
/// processes: `E[exp(G^2 / d^2)] = (1 - 2 * 3/8)^{-1/2} = 2`.
pub const GAUSSIAN_CALIBRATION: f64 = 0.375;

#[derive(Serialize, Deserialize)]
struct SpaceRepr {
    dist: Vec<Vec<f64>>,
}

/// A finite set with a distance matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpaceRepr", into = "SpaceRepr")]
pub struct FiniteMetricSpace {
    size: usize,
    dist: Vec<f64>,
}

impl TryFrom<SpaceRepr> for FiniteMetricSpace {
    type Error = Error;
    fn try_from(r: SpaceRepr) -> Result<Self> {
        Self::from_matrix(r.dist)
    }
}

impl From<FiniteMetricSpace> for SpaceRepr {
    fn from(s: FiniteMetricSpace) -> Self {
        SpaceRepr { dist: s.to_matrix() }
    }
}

impl FiniteMetricSpace {
    /// Validates symmetry, the zero diagonal, nonnegativity and the triangle
    /// inequality to `1e-12` relative to the diameter.
    pub fn new(size: usize, dist: Vec<f64>) -> Result<Self> {
        if size == 0 || dist.len() != size * size {
            return Err(Error::dim(format!(
                "{} distances for a space of {size} points",
                dist.len()
            )));
        }
        if let Some(d) = dist.iter().find(|d| !d.is_finite() || **d < 0.0) {
            return Err(Error::Domain(format!(
                "distance {d} is not a finite nonnegative number"
            )));
        }
        let diam = dist.iter().cloned().fold(0.0, f64::max);
        let tol = METRIC_TOLERANCE * diam.max(1.0);
        let at = |i: usize, j: usize| dist[i * size + j];
        for i in 0..size {
            if at(i, i) != 0.0 {
                return Err(Error::Domain(format!("d({i}, {i}) = {} is not zero", at(i, i))));
            }
            for j in 0..size {
                if (at(i, j) - at(j, i)).abs() > tol {
                    return Err(Error::Domain(format!("d({i}, {j}) != d({j}, {i})")));
                }
                for k in 0..size {
                    if at(i, k) > at(i, j) + at(j, k) + tol {
                        return Err(Error::Domain(format!("triangle inequality fails for ({i}, {j}, {k})")));
                    }
                }
            }
        }
        Ok(Self { size, dist })
    }

    pub fn from_matrix(m: Vec<Vec<f64>>) -> Result<Self> {
        let size = m.len();
        if m.iter().any(|r| r.len() != size) {
            return Err(Error::dim("distance matrix is not square"));
        }
        Self::new(size, m.into_iter().flatten().collect())
    }

    /// Euclidean distances between points.
    pub fn euclidean(points: &[Vec<f64>]) -> Result<Self> {
        let size = points.len();
        let mut dist = vec![0.0; size * size];
        for i in 0..size {
            for j in 0..size {
                dist[i * size + j] = crate::transport::euclidean(&points[i], &points[j]);
            }
        }
        Self::new(size, dist)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.size + j]
    }

    pub fn diam(&self) -> f64 {
        self.dist.iter().cloned().fold(0.0, f64::max)
    }

    pub fn to_matrix(&self) -> Vec<Vec<f64>> {
        self.dist.chunks(self.size).map(|r| r.to_vec()).collect()
    }

    /// The space with every distance multiplied by `a > 0`.
    pub fn scaled(&self, a: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::Domain(format!("scale {a} must be positive")));
        }
        Ok(Self {
            size: self.size,
            dist: self.dist.iter().map(|d| a * d).collect(),
        })
    }

    fn check_measure(&self, mu: &FiniteMeasure) -> Result<()> {
        if mu.len() == self.size {
            Ok(())
        } else {
            Err(Error::dim(format!(
                "measure of size {} on a space of {} points",
                mu.len(),
                self.size
            )))
        }
    }
}

/// `mu(B(t, eps))` with the closed ball `{u : d(u, t) <= eps}`.
pub fn ball_mass(mu: &FiniteMeasure, space: &FiniteMetricSpace, t: usize, eps: f64) -> Result<f64> {
    space.check_measure(mu)?;
    if t >= space.size {
        return Err(Error::dim(format!(
            "point {t} outside a space of {} points",
            space.size
        )));
    }
    Ok((0..space.size).filter(|u| space.get(t, *u) <= eps).map(|u| mu[u]).sum())
}

/// `(r_j, mu(B(t, r_j)))` at the sorted distinct distances from `t`: the
/// ball mass is constant on each `[r_j, r_{j+1})`.
fn ball_steps(mu: &FiniteMeasure, space: &FiniteMetricSpace, t: usize) -> Vec<(f64, f64)> {
    let mut order: Vec<usize> = (0..space.size).collect();
    order.sort_by(|a, b| space.get(t, *a).total_cmp(&space.get(t, *b)).then(a.cmp(b)));
    let mut steps: Vec<(f64, f64)> = Vec::new();
    let mut mass = 0.0;
    for u in order {
        let r = space.get(t, u);
        mass += mu[u];
        match steps.last_mut() {
            Some(last) if last.0 == r => last.1 = mass,
            _ => steps.push((r, mass)),
        }
    }
    steps
}

/// `int_0^{diam} (log 1 / mu(B(t, eps)))^{1/p} d eps` as an exact step sum.
fn point_integral(mu: &FiniteMeasure, space: &FiniteMetricSpace, t: usize, p: f64) -> f64 {
    let diam = space.diam();
    let steps = ball_steps(mu, space, t);
    let mut total = 0.0;
    for (j, (r, mass)) in steps.iter().enumerate() {
        let next = steps.get(j + 1).map_or(diam, |s| s.0);
        let len = next - r;
        if len <= 0.0 {
            continue;
        }
        if *mass <= 0.0 {
            return f64::INFINITY;
        }
        let log = (1.0 / mass).ln().max(0.0);
        total += len * log.powf(1.0 / p);
    }
    total
}

fn check_p(p: f64) -> Result<()> {
    if p.is_finite() && p >= 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("exponent p = {p} must be a finite number >= 1")))
    }
}

/// `sum_t nu_t int_0^{diam} (log 1 / mu(B(t, eps)))^{1/p} d eps`; `+inf` when
/// some `t` charged by `nu` sees an empty ball on an interval of positive
/// length.
pub fn majorizing_integral(mu: &FiniteMeasure, nu: &FiniteMeasure, space: &FiniteMetricSpace, p: f64) -> Result<f64> {
    check_p(p)?;
    space.check_measure(mu)?;
    space.check_measure(nu)?;
    let mut total = 0.0;
    for t in nu.support() {
        total += nu[t] * point_integral(mu, space, t, p);
    }
    Ok(total)
}

/// `2^{2/p} * 4 * (2 diam + majorizing_integral)`: the expected-supremum
/// bound for a selector with law `nu`, with the explicit constants of the
/// ball-kernel chaining argument at ratio 2, rescaled from unit diameter.
pub fn ft_bound(mu: &FiniteMeasure, nu: &FiniteMeasure, space: &FiniteMetricSpace, p: f64) -> Result<f64> {
    let integral = majorizing_integral(mu, nu, space, p)?;
    Ok(2f64.powf(2.0 / p) * 4.0 * (2.0 * space.diam() + integral))
}

/// A centered process indexed by the points of a space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProcessSpec {
    /// Centered gaussian vector with the given covariance.
    Gaussian { cov: Vec<Vec<f64>>, p: f64 },
    /// Finitely many sample paths with their probabilities.
    Tabulated {
        paths: Vec<Vec<f64>>,
        weights: Vec<f64>,
        p: f64,
    },
}

impl ProcessSpec {
    pub fn p(&self) -> f64 {
        match self {
            ProcessSpec::Gaussian { p, .. } | ProcessSpec::Tabulated { p, .. } => *p,
        }
    }

    pub fn size(&self) -> usize {
        match self {
            ProcessSpec::Gaussian { cov, .. } => cov.len(),
            ProcessSpec::Tabulated { paths, .. } => paths.first().map_or(0, |x| x.len()),
        }
    }

    /// The covariance scaled by `a^2` (paths scaled by `a`).
    pub fn scaled(&self, a: f64) -> Self {
        match self {
            ProcessSpec::Gaussian { cov, p } => ProcessSpec::Gaussian {
                cov: cov.iter().map(|r| r.iter().map(|c| a * a * c).collect()).collect(),
                p: *p,
            },
            ProcessSpec::Tabulated { paths, weights, p } => ProcessSpec::Tabulated {
                paths: paths.iter().map(|r| r.iter().map(|x| a * x).collect()).collect(),
                weights: weights.clone(),
                p: *p,
            },
        }
    }
}

fn covariance_matrix(cov: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = cov.len();
    if cov.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidProcess("covariance is not square".into()));
    }
    let m = DMatrix::from_fn(n, n, |i, j| cov[i][j]);
    let scale = m.amax().max(1.0);
    for i in 0..n {
        for j in 0..n {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::InvalidProcess("covariance is not symmetric".into()));
            }
        }
    }
    Ok(m)
}

/// Eigen-factor `L` with `L L^T = cov`; rejects covariances with an
/// eigenvalue below `-1e-10 * max |cov|`.
fn factor(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(cov.clone());
    let scale = cov.amax().max(f64::MIN_POSITIVE);
    if eig.eigenvalues.iter().any(|l| *l < -1e-10 * scale) {
        return Err(Error::InvalidProcess("covariance is not positive semidefinite".into()));
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots))
}

/// `max_{u != v} E[psi_p(|X_u - X_v| / d(u, v))]`; fails when it exceeds 1.
///
/// Gaussian processes use the closed form `(1 - 2 v / d^2)^{-1/2} - 1` for
/// the increment variance `v` and must have `p = 2`; tabulated processes are
/// summed over their paths.
pub fn check_increments(proc: &ProcessSpec, space: &FiniteMetricSpace) -> Result<f64> {
    let n = space.size();
    if proc.size() != n {
        return Err(Error::InvalidProcess(format!(
            "process on {} points for a space of {n}",
            proc.size()
        )));
    }
    check_p(proc.p()).map_err(|e| Error::InvalidProcess(e.to_string()))?;
    let mut worst = 0.0f64;
    for u in 0..n {
        for v in u + 1..n {
            let d = space.get(u, v);
            let value = match proc {
                ProcessSpec::Gaussian { cov, p } => {
                    if *p != 2.0 {
                        return Err(Error::InvalidProcess(
                            "gaussian processes are checked at p = 2; tabulate other exponents".into(),
                        ));
                    }
                    let var = (cov[u][u] + cov[v][v] - 2.0 * cov[u][v]).max(0.0);
                    if var == 0.0 {
                        0.0
                    } else if d == 0.0 || 2.0 * var >= d * d {
                        f64::INFINITY
                    } else {
                        (1.0 - 2.0 * var / (d * d)).powf(-0.5) - 1.0
                    }
                }
                ProcessSpec::Tabulated { paths, weights, p } => {
                    let mut acc = 0.0;
                    for (x, w) in paths.iter().zip(weights) {
                        let gap = (x[u] - x[v]).abs();
                        if gap == 0.0 || *w == 0.0 {
                            continue;
                        }
                        acc += if d == 0.0 {
                            f64::INFINITY
                        } else {
                            w * psi_unchecked(gap / d, *p)
                        };
                    }
                    acc
                }
            };
            if value > 1.0 + INCREMENT_TOLERANCE {
                return Err(Error::InvalidProcess(format!(
                    "increment condition fails at ({u}, {v}): E[psi] = {value}"
                )));
            }
            worst = worst.max(value);
        }
    }
    Ok(worst)
}

/// The gaussian process with `Var(X_u - X_v) = (3/8) d(u, v)^2`, built from
/// the doubly centered Gram matrix of the target increment variances.
///
/// When those variances are not realizable, the negative part of the Gram
/// spectrum is dropped and the resulting covariance is scaled so that the
/// tightest pair meets the increment condition with equality.
pub fn gaussian_from_metric(space: &FiniteMetricSpace, p: f64) -> Result<ProcessSpec> {
    if p != 2.0 {
        return Err(Error::InvalidProcess("gaussian calibration needs p = 2".into()));
    }
    let n = space.size();
    let target = DMatrix::from_fn(n, n, |i, j| GAUSSIAN_CALIBRATION * space.get(i, j).powi(2));
    let center = DMatrix::from_fn(n, n, |i, j| f64::from(i == j) - 1.0 / n as f64);
    let gram = -0.5 * &center * &target * &center;
    let gram = (&gram + gram.transpose()) * 0.5;
    let eig = SymmetricEigen::new(gram.clone());
    let scale = gram.amax().max(f64::MIN_POSITIVE);
    if eig.eigenvalues.iter().all(|l| *l >= -1e-10 * scale) {
        let cov = (0..n).map(|i| (0..n).map(|j| gram[(i, j)]).collect()).collect();
        return Ok(ProcessSpec::Gaussian { cov, p });
    }
    let clipped =
        &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0))) * eig.eigenvectors.transpose();
    let cov: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| clipped[(i, j)]).collect()).collect();
    gaussian_scaled(space, cov)
}

/// Scales a covariance so that `max_{u != v} Var(X_u - X_v) / ((3/8) d^2) = 1`.
pub fn gaussian_scaled(space: &FiniteMetricSpace, cov: Vec<Vec<f64>>) -> Result<ProcessSpec> {
    let m = covariance_matrix(&cov)?;
    factor(&m)?;
    let n = space.size();
    if m.nrows() != n {
        return Err(Error::InvalidProcess(format!(
            "covariance on {} points for a space of {n}",
            m.nrows()
        )));
    }
    let mut ratio = 0.0f64;
    for u in 0..n {
        for v in u + 1..n {
            let var = (m[(u, u)] + m[(v, v)] - 2.0 * m[(u, v)]).max(0.0);
            let d = space.get(u, v);
            if var > 0.0 {
                if d == 0.0 {
                    return Err(Error::InvalidProcess(format!(
                        "points {u} and {v} are at distance 0 but their increment varies"
                    )));
                }
                ratio = ratio.max(var / (GAUSSIAN_CALIBRATION * d * d));
            }
        }
    }
    let a = if ratio > 0.0 { 1.0 / ratio } else { 1.0 };
    Ok(ProcessSpec::Gaussian {
        cov: cov.iter().map(|r| r.iter().map(|c| a * c).collect()).collect(),
        p: 2.0,
    })
}

/// How the index `tau` is chosen from a sample path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selector {
    /// The maximizing index, lowest index on ties.
    Argmax,
    Fixed(usize),
    /// For tabulated processes: a kernel from path index to points.
    Randomized(MarkovKernel),
}

/// A Monte Carlo estimate of `E[X_tau]` together with the empirical law of
/// `tau`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub selector_law: Vec<f64>,
    pub samples: u64,
    pub seed: u64,
}

fn argmax(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in x.iter().enumerate() {
        if *v > x[best] {
            best = i;
        }
    }
    best
}

enum Sampler {
    Gaussian(DMatrix<f64>),
    Tabulated(WeightedIndex<f64>),
}

/// Estimates `E[X_tau]` from `cfg.samples` paths after checking the
/// increment condition.
pub fn expected_sup_mc(
    proc: &ProcessSpec,
    space: &FiniteMetricSpace,
    selector: &Selector,
    cfg: McConfig,
) -> Result<SupEstimate> {
    check_increments(proc, space)?;
    let n = space.size();
    match selector {
        Selector::Fixed(t) if *t >= n => {
            return Err(Error::Config(format!("fixed index {t} outside {n} points")));
        }
        Selector::Randomized(k) => {
            let ProcessSpec::Tabulated { paths, .. } = proc else {
                return Err(Error::Config("randomized selectors need a tabulated process".into()));
            };
            if k.input_size() != paths.len() || k.output_size() != n {
                return Err(Error::Config("selector kernel does not match the process".into()));
            }
        }
        _ => {}
    }
    let sampler = match proc {
        ProcessSpec::Gaussian { cov, .. } => Sampler::Gaussian(factor(&covariance_matrix(cov)?)?),
        ProcessSpec::Tabulated { paths, weights, .. } => {
            if weights.len() != paths.len() || paths.iter().any(|x| x.len() != n) {
                return Err(Error::InvalidProcess("paths and weights disagree in shape".into()));
            }
            Sampler::Tabulated(WeightedIndex::new(weights).map_err(|e| Error::InvalidProcess(e.to_string()))?)
        }
    };
    let moments = mc::run(cfg, n + 1, |rng, out| {
        let (x, path): (Vec<f64>, usize) = match (&sampler, proc) {
            (Sampler::Gaussian(l), _) => {
                let g: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
                ((0..n).map(|i| (0..n).map(|j| l[(i, j)] * g[j]).sum()).collect(), 0)
            }
            (Sampler::Tabulated(w), ProcessSpec::Tabulated { paths, .. }) => {
                let k = w.sample(rng);
                (paths[k].clone(), k)
            }
            _ => unreachable!("sampler matches the process"),
        };
        let tau = match selector {
            Selector::Argmax => argmax(&x),
            Selector::Fixed(t) => *t,
            Selector::Randomized(k) => {
                let row = k.row(path).weights();
                WeightedIndex::new(row).expect("valid kernel row").sample(rng)
            }
        };
        out.iter_mut().for_each(|o| *o = 0.0);
        out[0] = x[tau];
        out[1 + tau] = 1.0;
    });
    Ok(SupEstimate {
        mean: moments[0].mean(),
        stderr: moments[0].stderr(),
        selector_law: moments[1..].iter().map(|m| m.mean()).collect(),
        samples: cfg.samples,
        seed: cfg.seed,
    })
}

/// How [`optimize_mu`] searches the simplex.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MuSearch {
    /// Every point of the lattice `{k / resolution}` in the simplex.
    Grid { resolution: u32 },
    /// Mirror descent on the simplex from a seeded start.
    ExponentiatedGradient { iters: u32, step: f64 },
}

/// Raises every weight to at least [`MU_FLOOR`] and renormalizes.
fn floored(w: &[f64]) -> FiniteMeasure {
    FiniteMeasure::from_unnormalized(w.iter().map(|x| x.max(MU_FLOOR)).collect()).expect("positive weights")
}

fn lattice_size(points: usize, resolution: u32) -> u64 {
    // C(resolution + points - 1, points - 1), saturating.
    let (n, k) = (resolution as u64 + points as u64 - 1, points as u64 - 1);
    let k = k.min(n - k);
    let mut c: u64 = 1;
    for i in 0..k {
        c = match c.checked_mul(n - i) {
            Some(x) => x / (i + 1),
            None => return u64::MAX,
        };
        if c > GRID_LIMIT {
            return u64::MAX;
        }
    }
    c
}

/// Minimizes [`ft_bound`] over full-support `mu` for a fixed selector law
/// `nu`. The uniform measure is always a candidate, so the result is never
/// worse than it.
pub fn optimize_mu(
    nu: &FiniteMeasure,
    space: &FiniteMetricSpace,
    p: f64,
    search: MuSearch,
    seed: u64,
) -> Result<(FiniteMeasure, f64)> {
    let n = space.size();
    let uniform = FiniteMeasure::uniform(n)?;
    let mut best = (uniform.clone(), ft_bound(&uniform, nu, space, p)?);
    let consider = |mu: FiniteMeasure, best: &mut (FiniteMeasure, f64)| -> Result<()> {
        let value = ft_bound(&mu, nu, space, p)?;
        if value < best.1 {
            *best = (mu, value);
        }
        Ok(())
    };
    match search {
        MuSearch::Grid { resolution } => {
            if resolution == 0 {
                return Err(Error::Config("grid resolution must be positive".into()));
            }
            if lattice_size(n, resolution) > GRID_LIMIT {
                return Err(Error::Config(format!(
                    "a lattice of resolution {resolution} on {n} points exceeds {GRID_LIMIT} cells"
                )));
            }
            let mut counts = vec![0u32; n];
            counts[n - 1] = resolution;
            loop {
                let w: Vec<f64> = counts.iter().map(|c| *c as f64 / resolution as f64).collect();
                consider(floored(&w), &mut best)?;
                if !next_composition(&mut counts) {
                    break;
                }
            }
        }
        MuSearch::ExponentiatedGradient { iters, step } => {
            if !(step > 0.0 && step.is_finite()) {
                return Err(Error::Config(format!("step {step} must be positive")));
            }
            let mut rng = mc::stream_rng(seed, 0);
            let mut w: Vec<f64> = (0..n).map(|_| 1.0 + 0.1 * rng.random::<f64>()).collect();
            let total: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x /= total);
            for _ in 0..iters {
                let mu = floored(&w);
                let g = gradient(&mu, nu, space, p);
                let scale = g.iter().fold(0.0f64, |a, x| a.max(x.abs()));
                consider(mu.clone(), &mut best)?;
                if scale == 0.0 {
                    break;
                }
                let mut next: Vec<f64> = mu
                    .weights()
                    .iter()
                    .zip(&g)
                    .map(|(m, gi)| m * (-step * gi / scale).exp())
                    .collect();
                let total: f64 = next.iter().sum();
                next.iter_mut().for_each(|x| *x /= total);
                w = next;
            }
            consider(floored(&w), &mut best)?;
        }
    }
    Ok(best)
}

/// Advances `counts` to the next composition of their sum in
/// lexicographic order of the prefix; false after the last one.
fn next_composition(counts: &mut [u32]) -> bool {
    let n = counts.len();
    if n < 2 {
        return false;
    }
    // Find the rightmost position before the last with room to grow.
    let last = counts[n - 1];
    if last == 0 {
        // Carry: move mass from the rightmost nonzero prefix entry.
        let Some(i) = (0..n - 1).rev().find(|i| counts[*i] > 0) else {
            return false;
        };
        if i == 0 {
            return false;
        }
        let moved = counts[i];
        counts[i] = 0;
        counts[i - 1] += 1;
        counts[n - 1] = moved - 1;
        return true;
    }
    counts[n - 2] += 1;
    counts[n - 1] = last - 1;
    true
}

/// Gradient of the majorizing integral with respect to `mu`.
fn gradient(mu: &FiniteMeasure, nu: &FiniteMeasure, space: &FiniteMetricSpace, p: f64) -> Vec<f64> {
    let n = space.size();
    let diam = space.diam();
    let mut g = vec![0.0; n];
    for t in nu.support() {
        let steps = ball_steps(mu, space, t);
        for (j, (r, mass)) in steps.iter().enumerate() {
            let next = steps.get(j + 1).map_or(diam, |s| s.0);
            let len = next - r;
            if len <= 0.0 || *mass >= 1.0 - 1e-15 {
                continue;
            }
            let log = (1.0 / mass).ln().max(1e-12);
            let dv = -len * log.powf(1.0 / p - 1.0) / (p * mass);
            for (u, gu) in g.iter_mut().enumerate() {
                if space.get(t, u) <= *r {
                    *gu += nu[t] * dv;
                }
            }
        }
    }
    g
}

/// Monte Carlo check of the telescoping identity behind the bound: with
/// ball kernels `Q_k(. | w) = mu(. & B(tau, 2^{-k} diam)) / mu(B(tau, 2^{-k} diam))`,
/// `X_tau - <mu, X> = sum_k <Q_k - Q_{k-1}, X>` path by path, so the
/// estimates of both sides must agree.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TelescopeCheck {
    pub direct: f64,
    pub telescoped: f64,
    /// Per-level estimates of `E <Q_k - Q_{k-1}, X>`.
    pub increments: Vec<f64>,
    pub stderr: f64,
}

pub fn telescope_check(
    proc: &ProcessSpec,
    space: &FiniteMetricSpace,
    mu: &FiniteMeasure,
    cfg: McConfig,
) -> Result<TelescopeCheck> {
    check_increments(proc, space)?;
    space.check_measure(mu)?;
    let ProcessSpec::Gaussian { cov, .. } = proc else {
        return Err(Error::Config("the telescoping check samples gaussian processes".into()));
    };
    let l = factor(&covariance_matrix(cov)?)?;
    let n = space.size();
    let diam = space.diam();
    let min_gap = (0..n * n)
        .map(|k| space.get(k / n, k % n))
        .filter(|d| *d > 0.0)
        .fold(f64::INFINITY, f64::min);
    // Levels until the ball around tau is {tau} itself.
    let levels = if diam == 0.0 {
        0
    } else {
        let mut k = 0;
        while diam * 0.5f64.powi(k) >= min_gap {
            k += 1;
        }
        k as usize
    };
    let width = 2 + levels;
    let moments = mc::run(cfg, width, |rng, out| {
        let g: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let x: Vec<f64> = (0..n).map(|i| (0..n).map(|j| l[(i, j)] * g[j]).sum()).collect();
        let tau = argmax(&x);
        let ball_mean = |radius: f64| -> f64 {
            let (mut num, mut den) = (0.0, 0.0);
            for u in 0..n {
                if space.get(tau, u) <= radius {
                    num += mu[u] * x[u];
                    den += mu[u];
                }
            }
            if den > 0.0 {
                num / den
            } else {
                x[tau]
            }
        };
        let mut prev: f64 = mu.weights().iter().zip(&x).map(|(m, v)| m * v).sum();
        let mut sum = 0.0;
        for k in 1..=levels {
            let cur = if k == levels {
                x[tau]
            } else {
                ball_mean(diam * 0.5f64.powi(k as i32))
            };
            out[2 + k - 1] = cur - prev;
            sum += cur - prev;
            prev = cur;
        }
        out[0] = x[tau];
        out[1] = sum;
    });
    Ok(TelescopeCheck {
        direct: moments[0].mean(),
        telescoped: moments[1].mean(),
        increments: moments[2..].iter().map(|m| m.mean()).collect(),
        stderr: moments[0].stderr() + moments[1].stderr(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn two_point() -> FiniteMetricSpace {
        FiniteMetricSpace::from_matrix(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()
    }

    #[test]
    fn rejects_non_metrics() {
        assert!(FiniteMetricSpace::from_matrix(vec![vec![0.0, 1.0], vec![2.0, 0.0]]).is_err());
        let bad = vec![vec![0.0, 1.0, 3.0], vec![1.0, 0.0, 1.0], vec![3.0, 1.0, 0.0]];
        assert!(FiniteMetricSpace::from_matrix(bad).is_err());
    }

    #[test]
    fn ball_masses() {
        let s = two_point();
        let mu = FiniteMeasure::uniform(2).unwrap();
        assert_eq!(ball_mass(&mu, &s, 0, 0.0).unwrap(), 0.5);
        assert_eq!(ball_mass(&mu, &s, 0, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn two_point_integral_and_bound() {
        let s = two_point();
        let mu = FiniteMeasure::uniform(2).unwrap();
        for p in [1.0, 2.0, 3.0] {
            let v = majorizing_integral(&mu, &mu, &s, p).unwrap();
            assert_relative_eq!(v, 2f64.ln().powf(1.0 / p), max_relative = 1e-15);
        }
        let b = ft_bound(&mu, &mu, &s, 2.0).unwrap();
        assert_relative_eq!(b, 8.0 * (2.0 + 2f64.ln().sqrt()), max_relative = 1e-15);
    }

    #[test]
    fn empty_balls_give_infinite_integral() {
        let s = two_point();
        let mu = FiniteMeasure::dirac(2, 1).unwrap();
        let nu = FiniteMeasure::dirac(2, 0).unwrap();
        assert_eq!(majorizing_integral(&mu, &nu, &s, 2.0).unwrap(), f64::INFINITY);
        assert!(majorizing_integral(&mu, &mu, &s, 2.0).unwrap().is_finite());
    }

    #[test]
    fn single_point_space() {
        let s = FiniteMetricSpace::from_matrix(vec![vec![0.0]]).unwrap();
        let mu = FiniteMeasure::uniform(1).unwrap();
        assert_eq!(ft_bound(&mu, &mu, &s, 2.0).unwrap(), 0.0);
        let proc = gaussian_from_metric(&s, 2.0).unwrap();
        let est = expected_sup_mc(&proc, &s, &Selector::Argmax, McConfig::new(100, 1)).unwrap();
        assert_eq!(est.mean, 0.0);
        assert_eq!(est.stderr, 0.0);
    }

    #[test]
    fn calibrated_gaussian_meets_the_condition() {
        let s = two_point();
        let proc = gaussian_from_metric(&s, 2.0).unwrap();
        let ProcessSpec::Gaussian { cov, .. } = &proc else {
            panic!()
        };
        let var = cov[0][0] + cov[1][1] - 2.0 * cov[0][1];
        assert_relative_eq!(var, 0.375, max_relative = 1e-14);
        let worst = check_increments(&proc, &s).unwrap();
        assert_relative_eq!(worst, 1.0, max_relative = 1e-12);
        let hot = proc.scaled(1.01);
        assert!(matches!(check_increments(&hot, &s), Err(Error::InvalidProcess(_))));
    }

    #[test]
    fn compositions_cover_the_lattice() {
        let mut c = vec![0, 0, 4];
        let mut seen = std::collections::BTreeSet::from([c.clone()]);
        while next_composition(&mut c) {
            assert_eq!(c.iter().sum::<u32>(), 4);
            assert!(seen.insert(c.clone()));
        }
        assert_eq!(seen.len(), 15);
        assert_eq!(lattice_size(3, 4), 15);
    }

    #[test]
    fn optimizer_never_loses_to_uniform() {
        let s = FiniteMetricSpace::euclidean(&[vec![0.0], vec![0.1], vec![1.0]]).unwrap();
        let nu = FiniteMeasure::uniform(3).unwrap();
        let base = ft_bound(&nu, &nu, &s, 2.0).unwrap();
        let (_, g) = optimize_mu(&nu, &s, 2.0, MuSearch::Grid { resolution: 10 }, 0).unwrap();
        let (_, e) = optimize_mu(
            &nu,
            &s,
            2.0,
            MuSearch::ExponentiatedGradient { iters: 50, step: 0.5 },
            3,
        )
        .unwrap();
        assert!(g <= base && e <= base);
    }
}
