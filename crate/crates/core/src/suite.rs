//! Seeded generators of random instances. Instance `i` of a suite is drawn
//! from its own random stream, so suites can be sliced and evaluated in
//! parallel without changing any instance.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::learning::{AlgorithmSpec, LearningProblem};
use crate::mc::stream_rng;
use crate::measures::FiniteMeasure;
use crate::suprema::FiniteMetricSpace;
use crate::transport::EmbeddedSupport;

/// Size limits of generated learning problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ProblemShape {
    pub max_m: usize,
    pub max_n: usize,
    pub max_hypotheses: usize,
    pub embedding_dim: usize,
}

impl Default for ProblemShape {
    fn default() -> Self {
        Self {
            max_m: 3,
            max_n: 3,
            max_hypotheses: 6,
            embedding_dim: 2,
        }
    }
}

/// A probability vector with every weight at least `floor / len`.
pub fn random_measure<R: Rng>(rng: &mut R, len: usize, floor: f64) -> FiniteMeasure {
    let w: Vec<f64> = (0..len).map(|_| floor + rng.random::<f64>()).collect();
    FiniteMeasure::from_unnormalized(w).expect("positive weights")
}

/// A probability vector where each weight is zero with probability `sparsity`
/// (at least one weight stays positive).
pub fn random_sparse_measure<R: Rng>(rng: &mut R, len: usize, sparsity: f64) -> FiniteMeasure {
    let keep = rng.random_range(0..len);
    let w: Vec<f64> = (0..len)
        .map(|i| {
            if i != keep && rng.random::<f64>() < sparsity {
                0.0
            } else {
                0.05 + rng.random::<f64>()
            }
        })
        .collect();
    FiniteMeasure::from_unnormalized(w).expect("one positive weight")
}

/// A problem with losses uniform on `[0, 1]`, bounded-loss mode with
/// bound 1, a random data law and a random planar embedding.
pub fn random_problem<R: Rng>(rng: &mut R, shape: ProblemShape) -> Result<LearningProblem> {
    let m = rng.random_range(1..=shape.max_m);
    let n = rng.random_range(1..=shape.max_n);
    let nw = rng.random_range(1..=shape.max_hypotheses);
    let loss: Vec<f64> = (0..nw * m).map(|_| rng.random::<f64>()).collect();
    let p_z = random_measure(rng, m, 0.1);
    let points = (0..nw)
        .map(|_| (0..shape.embedding_dim).map(|_| rng.random::<f64>()).collect())
        .collect();
    LearningProblem::new(m, n, loss, p_z)?
        .with_bound(1.0)?
        .with_embedding(EmbeddedSupport::new(shape.embedding_dim, points)?)
}

/// Problem `index` of the suite with the given seed.
pub fn suite_problem(seed: u64, index: u64, shape: ProblemShape) -> Result<LearningProblem> {
    random_problem(&mut stream_rng(seed, index), shape)
}

/// The first `count` problems of a suite.
pub fn problem_suite(seed: u64, count: u64, shape: ProblemShape) -> Result<Vec<LearningProblem>> {
    (0..count).map(|i| suite_problem(seed, i, shape)).collect()
}

/// A space of `1..=max_size` points: uniform points in the unit square,
/// or on a line when `line` is set.
pub fn random_space<R: Rng>(rng: &mut R, max_size: usize, line: bool) -> Result<FiniteMetricSpace> {
    let size = rng.random_range(1..=max_size);
    let dim = if line { 1 } else { 2 };
    let points: Vec<Vec<f64>> = (0..size)
        .map(|_| (0..dim).map(|_| rng.random::<f64>()).collect())
        .collect();
    FiniteMetricSpace::euclidean(&points)
}

/// Space `index` of the suite with the given seed; odd indices are line
/// metrics.
pub fn suite_space(seed: u64, index: u64, max_size: usize) -> Result<FiniteMetricSpace> {
    random_space(&mut stream_rng(seed, index), max_size, index % 2 == 1)
}

/// The algorithms every suite problem is paired with: Gibbs posteriors with
/// a uniform prior at `beta` in `{0, 1, 10}`, and ERM.
pub fn suite_algorithms() -> Vec<(&'static str, AlgorithmSpec)> {
    vec![
        ("gibbs_0", AlgorithmSpec::Gibbs { beta: 0.0, prior: None }),
        ("gibbs_1", AlgorithmSpec::Gibbs { beta: 1.0, prior: None }),
        (
            "gibbs_10",
            AlgorithmSpec::Gibbs {
                beta: 10.0,
                prior: None,
            },
        ),
        ("erm", AlgorithmSpec::Erm),
    ]
}

/// A generator for one stream of a suite.
pub fn suite_rng(seed: u64, index: u64) -> ChaCha8Rng {
    stream_rng(seed, index)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_is_reproducible_and_in_shape() {
        let shape = ProblemShape::default();
        let a = problem_suite(3, 20, shape).unwrap();
        let b = problem_suite(3, 20, shape).unwrap();
        assert_eq!(a, b);
        for p in &a {
            assert!(p.m() <= 3 && p.n() <= 3 && p.hypotheses() <= 6);
            assert!((0..p.hypotheses()).all(|w| p.loss_row(w).iter().all(|l| (0.0..=1.0).contains(l))));
        }
        assert_ne!(a[0], problem_suite(4, 1, shape).unwrap()[0]);
    }

    #[test]
    fn sparse_measures_keep_mass() {
        let mut rng = suite_rng(1, 0);
        for _ in 0..100 {
            let m = random_sparse_measure(&mut rng, 5, 0.7);
            assert!(m.support().count() >= 1);
        }
    }
}
