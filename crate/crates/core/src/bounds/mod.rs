//! Generalization bounds on finite learning problems.
//!
//! Each bound returns a [`BoundReport`] holding its right-hand side, broken
//! into additive components, next to the left-hand side obtained by exact
//! enumeration (or Monte Carlo when a problem is too large to enumerate).
//! High-probability bounds return a [`TailReport`] with the exact
//! probability of the violation event instead.

mod chain;
mod coupling;
mod expectation;
mod family;
mod geodesic;
mod tail;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learning::{expected_gen, sample_law, Algorithm, GenMoments, LearningProblem};
use crate::measures::FiniteMeasure;

pub use chain::{
    bound_chain, bound_stochastic_chain, chain_metric, check_chain_metric, partition_chain, ChainReports, ChainSpec,
    Partition, ProjectionChain,
};
pub use coupling::{bound_coupling, bound_coupling_simplified, default_couplings, loss_distance, mixture_reference};
pub use expectation::{bound_cmi, bound_mi, bound_thm1, bound_thm1_mc, bound_thm2, mi_relaxation};
pub use family::{evaluate_exact, evaluate_family, evaluate_tails, evaluate_tails_exact, BoundFamily, FamilyOptions};
pub use geodesic::{bound_wasserstein_geodesic, geodesic_metric_scale};
pub use tail::{
    bound_tail_thm6, bound_transductive_thm7, partition_chain_tail_rhs, tail_pointwise_check, tail_pointwise_check_mc,
    TailCase, TailEstimate, TailReport,
};

/// Which generalization quantity a bound controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LhsKind {
    /// `E|gen(W, S)|`.
    Absolute,
    /// `E[gen(W, S)]`.
    Signed,
    /// The probability that a high-probability bound fails; its right-hand
    /// side is the confidence level `delta`.
    ViolationProbability,
}

/// How the left-hand side was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Exact,
    MonteCarlo { seed: u64, samples: u64, stderr: f64 },
}

/// A named value in a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub name: String,
    pub value: f64,
}

impl Term {
    pub fn new(name: impl Into<String>, value: f64) -> Self {
        Self {
            name: name.into(),
            value,
        }
    }
}

/// The evaluated sides of one bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub bound_name: String,
    pub lhs: f64,
    pub lhs_kind: LhsKind,
    pub rhs: f64,
    pub slack: f64,
    /// Additive terms whose sum is `rhs`.
    pub components: Vec<Term>,
    /// Intermediate quantities that are not part of the sum.
    pub diagnostics: Vec<Term>,
    pub mode: Mode,
}

impl BoundReport {
    fn exact(name: &str, lhs: f64, lhs_kind: LhsKind, components: Vec<Term>) -> Self {
        let rhs = components.iter().map(|t| t.value).sum::<f64>();
        Self {
            bound_name: name.to_string(),
            lhs,
            lhs_kind,
            rhs,
            slack: rhs - lhs,
            components,
            diagnostics: Vec::new(),
            mode: Mode::Exact,
        }
    }

    fn with_diagnostics(mut self, diagnostics: Vec<Term>) -> Self {
        self.diagnostics = diagnostics;
        self
    }

    pub fn component(&self, name: &str) -> Option<f64> {
        find(&self.components, name)
    }

    pub fn diagnostic(&self, name: &str) -> Option<f64> {
        find(&self.diagnostics, name)
    }

    /// `slack >= -tol`; for Monte Carlo reports the tolerance is widened by
    /// four standard errors.
    pub fn holds(&self, tol: f64) -> bool {
        let widen = match self.mode {
            Mode::Exact => 0.0,
            Mode::MonteCarlo { stderr, .. } => 4.0 * stderr,
        };
        self.slack >= -tol - widen
    }
}

fn find(terms: &[Term], name: &str) -> Option<f64> {
    terms.iter().find(|t| t.name == name).map(|t| t.value)
}

/// Exact quantities shared by the bounds: the enumerated samples, their law,
/// the population and empirical risks and the hypothesis marginal.
pub(crate) struct Model<'a> {
    pub prob: &'a LearningProblem,
    pub alg: &'a Algorithm,
    pub samples: Vec<Vec<usize>>,
    pub p_s: FiniteMeasure,
    pub pop: Vec<f64>,
    /// `emp[s * N + w]`.
    pub emp: Vec<f64>,
    pub p_w: FiniteMeasure,
    pub gen: GenMoments,
}

impl<'a> Model<'a> {
    pub fn new(prob: &'a LearningProblem, alg: &'a Algorithm) -> Result<Self> {
        let p_s = sample_law(prob)?;
        if alg.kernel().input_size() != p_s.len() || alg.kernel().output_size() != prob.hypotheses() {
            return Err(Error::dim(format!(
                "algorithm maps {} samples to {} hypotheses; problem has {} and {}",
                alg.kernel().input_size(),
                alg.kernel().output_size(),
                p_s.len(),
                prob.hypotheses()
            )));
        }
        let samples: Vec<Vec<usize>> = (0..p_s.len()).map(|i| prob.sample(i).indices).collect();
        let nw = prob.hypotheses();
        let pop = (0..nw).map(|w| prob.pop_risk(w)).collect();
        let emp = samples
            .iter()
            .flat_map(|s| (0..nw).map(move |w| prob.emp_risk(w, s)))
            .collect();
        let p_w = alg.kernel().mix(&p_s)?;
        let gen = expected_gen(prob, alg)?;
        Ok(Self {
            prob,
            alg,
            samples,
            p_s,
            pop,
            emp,
            p_w,
            gen,
        })
    }

    pub fn ns(&self) -> usize {
        self.samples.len()
    }

    pub fn nw(&self) -> usize {
        self.prob.hypotheses()
    }

    pub fn n(&self) -> f64 {
        self.prob.n() as f64
    }

    pub fn gen(&self, s: usize, w: usize) -> f64 {
        self.pop[w] - self.emp[s * self.nw() + w]
    }

    /// Largest absolute loss; sets the scale of rounding tolerances.
    pub fn loss_scale(&self) -> f64 {
        (0..self.nw())
            .flat_map(|w| self.prob.loss_row(w).iter())
            .fold(0.0f64, |a, l| a.max(l.abs()))
    }
}

/// Loss-difference row `loss(u, .) - loss(v, .)`.
pub(crate) fn loss_diff(prob: &LearningProblem, u: usize, v: usize) -> Vec<f64> {
    prob.loss_row(u)
        .iter()
        .zip(prob.loss_row(v))
        .map(|(a, b)| a - b)
        .collect()
}

/// Maximum absolute entrywise difference of two weight vectors.
pub(crate) fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_sums_components() {
        let r = BoundReport::exact(
            "t",
            1.0,
            LhsKind::Signed,
            vec![Term::new("a", 0.5), Term::new("b", 0.75)],
        );
        assert_eq!(r.rhs, 1.25);
        assert_eq!(r.slack, 0.25);
        assert_eq!(r.component("b"), Some(0.75));
        assert!(r.holds(0.0));
        let json = serde_json::to_string(&r.mode).unwrap();
        assert_eq!(json, "\"exact\"");
    }
}
