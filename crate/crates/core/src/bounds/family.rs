//! Named groups of bounds evaluated with default settings, as run by the
//! batch runner.

use serde::{Deserialize, Serialize};

use super::chain::{bound_chain, bound_stochastic_chain, chain_metric, partition_chain, ChainSpec, Partition};
use super::coupling::{bound_coupling, bound_coupling_simplified, default_couplings, mixture_reference};
use super::expectation::{bound_cmi, bound_mi, bound_thm1, bound_thm1_mc, bound_thm2};
use super::geodesic::bound_wasserstein_geodesic;
use super::tail::{bound_tail_thm6, bound_transductive_thm7, tail_pointwise_check, tail_pointwise_check_mc};
use super::BoundReport;
use crate::error::{Error, Result};
use crate::learning::{sample_law, Algorithm, AlgorithmSpec, LearningProblem};
use crate::mc::McConfig;
use crate::measures::FiniteMeasure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundFamily {
    /// The change-of-measure bound against a reference `Q_W`.
    Thm1,
    /// The mutual-information bound.
    Mi,
    /// The conditional mutual-information bound and its supersample form.
    Cmi,
    /// The coupling bound and its simplified form.
    Coupling,
    /// The chained bound over a binary partition hierarchy.
    Chain,
    /// The stochastic chain over the same hierarchy.
    Stochain,
    /// The chain along Wasserstein geodesics.
    Wass,
    /// The transductive high-probability chained bound.
    Transductive,
}

impl BoundFamily {
    pub const ALL: [BoundFamily; 8] = [
        BoundFamily::Thm1,
        BoundFamily::Mi,
        BoundFamily::Cmi,
        BoundFamily::Coupling,
        BoundFamily::Chain,
        BoundFamily::Stochain,
        BoundFamily::Wass,
        BoundFamily::Transductive,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BoundFamily::Thm1 => "thm1",
            BoundFamily::Mi => "mi",
            BoundFamily::Cmi => "cmi",
            BoundFamily::Coupling => "coupling",
            BoundFamily::Chain => "chain",
            BoundFamily::Stochain => "stochain",
            BoundFamily::Wass => "wass",
            BoundFamily::Transductive => "transductive",
        }
    }
}

impl std::str::FromStr for BoundFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BoundFamily::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown bound {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FamilyOptions {
    /// Reference measure for the change-of-measure bounds; the exact
    /// hypothesis marginal when `None` (uniform on the Monte Carlo path).
    pub q_w: Option<FiniteMeasure>,
    /// Confidence level of the high-probability bounds.
    pub delta: f64,
    /// Number of geodesic steps.
    pub geodesic_steps: usize,
    /// Fallback for problems above the enumeration cap, where available.
    pub mc: Option<McConfig>,
}

impl Default for FamilyOptions {
    fn default() -> Self {
        Self {
            q_w: None,
            delta: 0.1,
            geodesic_steps: 4,
            mc: None,
        }
    }
}

/// The binary partition hierarchy chain with a uniform prior, carrying the
/// increment metric when the loss is bounded.
fn default_chain(prob: &LearningProblem, alg: &Algorithm) -> Result<(ChainSpec, super::chain::ProjectionChain)> {
    let pc = partition_chain(prob, alg, &Partition::binary_hierarchy(prob.hypotheses()))?;
    let prior = FiniteMeasure::uniform(prob.hypotheses())?;
    let mut spec = ChainSpec::from_projection(&pc, &prior)?;
    if prob.bound().is_some() {
        spec = spec.with_metric(chain_metric(prob)?)?;
    }
    Ok((spec, pc))
}

fn exact_q(prob: &LearningProblem, alg: &Algorithm, opts: &FamilyOptions) -> Result<FiniteMeasure> {
    match &opts.q_w {
        Some(q) => Ok(q.clone()),
        None => alg.kernel().mix(&sample_law(prob)?),
    }
}

fn mc_fallback(prob: &LearningProblem, opts: &FamilyOptions) -> Result<Option<McConfig>> {
    match prob.enumerable_samples() {
        Ok(_) => Ok(None),
        Err(e @ Error::CapExceeded { .. }) => opts.mc.map(Some).ok_or(e),
        Err(e) => Err(e),
    }
}

/// Evaluates `families` on one problem and algorithm, in the given order.
///
/// Above the enumeration cap only the change-of-measure bound has a Monte
/// Carlo path; with `opts.mc` set it is used, and every other family
/// reports the cap error.
pub fn evaluate_family(
    prob: &LearningProblem,
    spec: &AlgorithmSpec,
    families: &[BoundFamily],
    opts: &FamilyOptions,
) -> Result<Vec<BoundReport>> {
    if let Some(cfg) = mc_fallback(prob, opts)? {
        let q = match &opts.q_w {
            Some(q) => q.clone(),
            None => FiniteMeasure::uniform(prob.hypotheses())?,
        };
        return families
            .iter()
            .map(|f| match f {
                BoundFamily::Thm1 => bound_thm1_mc(prob, spec, &q, cfg),
                _ => Err(Error::Config(format!(
                    "bound {} needs exact enumeration, which exceeds the cap",
                    f.name()
                ))),
            })
            .collect();
    }
    evaluate_exact(prob, &spec.materialize(prob)?, families, opts)
}

/// [`evaluate_family`] for an enumerated algorithm.
pub fn evaluate_exact(
    prob: &LearningProblem,
    alg: &Algorithm,
    families: &[BoundFamily],
    opts: &FamilyOptions,
) -> Result<Vec<BoundReport>> {
    let q = exact_q(prob, alg, opts)?;
    let mut out = Vec::new();
    for family in families {
        match family {
            BoundFamily::Thm1 => out.push(bound_thm1(prob, alg, &q)?),
            BoundFamily::Mi => out.push(bound_mi(prob, alg)?),
            BoundFamily::Cmi => {
                out.push(bound_cmi(prob, alg)?);
                out.push(bound_thm2(prob, alg)?);
            }
            BoundFamily::Coupling => {
                let couplings = default_couplings(prob, alg, &q)?;
                let mu = mixture_reference(prob, &couplings)?;
                out.push(bound_coupling(prob, alg, &q, &couplings, &mu)?);
                out.push(bound_coupling_simplified(prob, alg, &q, &couplings, &mu)?);
            }
            BoundFamily::Chain => {
                let (chain, _) = default_chain(prob, alg)?;
                let reports = bound_chain(prob, alg, &chain)?;
                out.push(reports.loss);
                out.extend(reports.metric);
            }
            BoundFamily::Stochain => {
                let (_, pc) = default_chain(prob, alg)?;
                out.extend(bound_stochastic_chain(prob, alg, &pc)?);
            }
            BoundFamily::Wass => out.push(bound_wasserstein_geodesic(prob, alg, opts.geodesic_steps)?),
            BoundFamily::Transductive => {
                let (chain, _) = default_chain(prob, alg)?;
                let p_k = FiniteMeasure::uniform(chain.links())?;
                out.push(bound_transductive_thm7(prob, alg, &chain, &p_k, opts.delta)?.to_bound_report());
            }
        }
    }
    Ok(out)
}

/// The three high-probability bounds at level `opts.delta`: the pointwise
/// display, the per-sample bound and the transductive chained bound. Above
/// the enumeration cap only the pointwise check runs, by Monte Carlo.
pub fn evaluate_tails(prob: &LearningProblem, spec: &AlgorithmSpec, opts: &FamilyOptions) -> Result<Vec<BoundReport>> {
    if let Some(cfg) = mc_fallback(prob, opts)? {
        let q = match &opts.q_w {
            Some(q) => q.clone(),
            None => FiniteMeasure::uniform(prob.hypotheses())?,
        };
        return Ok(vec![
            tail_pointwise_check_mc(prob, spec, &q, opts.delta, cfg)?.to_bound_report("pointwise")
        ]);
    }
    evaluate_tails_exact(prob, &spec.materialize(prob)?, opts)
}

/// [`evaluate_tails`] for an enumerated algorithm.
pub fn evaluate_tails_exact(prob: &LearningProblem, alg: &Algorithm, opts: &FamilyOptions) -> Result<Vec<BoundReport>> {
    let q = exact_q(prob, alg, opts)?;
    let mut out = vec![
        tail_pointwise_check(prob, alg, &q, opts.delta)?.to_bound_report(),
        bound_tail_thm6(prob, alg, &q, opts.delta)?.to_bound_report(),
    ];
    out.extend(evaluate_exact(prob, alg, &[BoundFamily::Transductive], opts)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::suite::{suite_problem, ProblemShape};

    #[test]
    fn names_roundtrip() {
        for f in BoundFamily::ALL {
            assert_eq!(f.name().parse::<BoundFamily>().unwrap(), f);
        }
        assert!(matches!("nope".parse::<BoundFamily>(), Err(Error::Config(_))));
    }

    #[test]
    fn every_family_reports_on_a_suite_problem() {
        let prob = suite_problem(5, 0, ProblemShape::default()).unwrap();
        let spec = AlgorithmSpec::Gibbs { beta: 1.0, prior: None };
        let reports = evaluate_family(&prob, &spec, &BoundFamily::ALL, &FamilyOptions::default()).unwrap();
        assert!(reports.len() >= 11);
        assert!(reports.iter().all(|r| r.holds(1e-9)), "{reports:?}");
        let tails = evaluate_tails(&prob, &spec, &FamilyOptions::default()).unwrap();
        let names: Vec<_> = tails.iter().map(|r| r.bound_name.as_str()).collect();
        assert_eq!(names, ["pointwise", "thm6", "thm7"]);
    }

    #[test]
    fn cap_switches_to_monte_carlo_or_fails() {
        let prob = suite_problem(5, 1, ProblemShape::default()).unwrap().with_cap(1);
        let spec = AlgorithmSpec::Erm;
        let opts = FamilyOptions::default();
        assert!(matches!(
            evaluate_family(&prob, &spec, &[BoundFamily::Thm1], &opts),
            Err(Error::CapExceeded { .. })
        ));
        let opts = FamilyOptions {
            mc: Some(McConfig::new(2000, 3)),
            ..opts
        };
        let r = evaluate_family(&prob, &spec, &[BoundFamily::Thm1], &opts).unwrap();
        assert!(matches!(r[0].mode, super::super::Mode::MonteCarlo { .. }));
        assert!(evaluate_family(&prob, &spec, &[BoundFamily::Mi], &opts).is_err());
        assert_eq!(evaluate_tails(&prob, &spec, &opts).unwrap().len(), 1);
    }
}
