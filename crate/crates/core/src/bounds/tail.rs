//! High-probability bounds, checked by computing the exact probability of
//! the event on which they fail.

use rand::distr::weighted::WeightedIndex;
use serde::Serialize;

use super::chain::{ChainSpec, ProjectionChain};
use super::coupling::all_diffs;
use super::{BoundReport, LhsKind, Mode, Model, Term};
use crate::error::{Error, Result};
use crate::learning::{subgaussian_sigma, Algorithm, AlgorithmSpec, LearningProblem};
use crate::mc::{self, McConfig};
use crate::measures::{kl_raw, FiniteMeasure};
use crate::orlicz::psi_inv_unchecked;

/// Violations are declared when `lhs > rhs + ROUNDING * (largest |loss|)`,
/// so that sums of identical losses rounding away from their mean do not
/// count.
const ROUNDING: f64 = 1e-12;

/// One outcome of the variable a tail bound is stated over.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailCase {
    pub probability: f64,
    pub lhs: f64,
    pub rhs: f64,
}

/// The exact law of a high-probability bound's two sides.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailReport {
    pub bound_name: String,
    pub delta: f64,
    /// Total probability of the outcomes with `lhs > rhs`.
    pub violation_probability: f64,
    /// `max (lhs - rhs)` over outcomes with positive probability.
    pub max_excess: f64,
    pub cases: Vec<TailCase>,
}

impl TailReport {
    fn new(name: &str, delta: f64, cases: Vec<TailCase>, tol: f64) -> Self {
        let mut violation = 0.0;
        let mut excess = f64::NEG_INFINITY;
        for c in &cases {
            if c.probability > 0.0 {
                excess = excess.max(c.lhs - c.rhs);
                if c.lhs > c.rhs + tol {
                    violation += c.probability;
                }
            }
        }
        Self {
            bound_name: name.to_string(),
            delta,
            violation_probability: violation,
            max_excess: excess,
            cases,
        }
    }

    /// The bound holds when its failure probability is at most `delta`.
    pub fn holds(&self) -> bool {
        self.violation_probability <= self.delta
    }

    /// The failure probability as the left-hand side of a report whose
    /// right-hand side is `delta`.
    pub fn to_bound_report(&self) -> BoundReport {
        BoundReport {
            bound_name: self.bound_name.clone(),
            lhs: self.violation_probability,
            lhs_kind: LhsKind::ViolationProbability,
            rhs: self.delta,
            slack: self.delta - self.violation_probability,
            components: vec![Term::new("delta", self.delta)],
            diagnostics: vec![Term::new("max_excess", self.max_excess)],
            mode: Mode::Exact,
        }
    }
}

/// A Monte Carlo estimate of a failure probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailEstimate {
    pub delta: f64,
    pub probability: f64,
    pub stderr: f64,
    pub samples: u64,
    pub seed: u64,
}

impl TailEstimate {
    /// As [`TailReport::to_bound_report`], in Monte Carlo mode.
    pub fn to_bound_report(&self, name: &str) -> BoundReport {
        BoundReport {
            bound_name: name.to_string(),
            lhs: self.probability,
            lhs_kind: LhsKind::ViolationProbability,
            rhs: self.delta,
            slack: self.delta - self.probability,
            components: vec![Term::new("delta", self.delta)],
            diagnostics: Vec::new(),
            mode: Mode::MonteCarlo {
                seed: self.seed,
                samples: self.samples,
                stderr: self.stderr,
            },
        }
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta <= 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("confidence level {delta} must lie in (0, 1]")))
    }
}

fn check_q(prob: &LearningProblem, q_w: &FiniteMeasure) -> Result<()> {
    if q_w.len() == prob.hypotheses() {
        Ok(())
    } else {
        Err(Error::dim(format!(
            "reference measure of size {} over {} hypotheses",
            q_w.len(),
            prob.hypotheses()
        )))
    }
}

/// `sigma sqrt(6 / n) (psi_2^{-1}(p / q) + sqrt(log(1 / delta)))`.
fn pointwise_threshold(sigma: f64, n: f64, p: f64, q: f64, delta: f64) -> f64 {
    if q <= 0.0 {
        return f64::INFINITY;
    }
    sigma * (6.0 / n).sqrt() * (psi_inv_unchecked(p / q, 2.0) + (1.0 / delta).ln().sqrt())
}

/// The exact law of `|gen(W, S)|` against
/// `sigma sqrt(6 / n) (psi_2^{-1}(dP_{W|S} / dQ_W)(W) + sqrt(log(1 / delta)))`
/// under `P_S (x) P_{W|S}`.
pub fn tail_pointwise_check(
    prob: &LearningProblem,
    alg: &Algorithm,
    q_w: &FiniteMeasure,
    delta: f64,
) -> Result<TailReport> {
    check_delta(delta)?;
    check_q(prob, q_w)?;
    let model = Model::new(prob, alg)?;
    let sigma = subgaussian_sigma(prob)?;
    let mut cases = Vec::new();
    for s in 0..model.ns() {
        for (w, p) in alg.row(s).weights().iter().enumerate() {
            let mass = model.p_s[s] * p;
            if mass > 0.0 {
                cases.push(TailCase {
                    probability: mass,
                    lhs: model.gen(s, w).abs(),
                    rhs: pointwise_threshold(sigma, model.n(), *p, q_w[w], delta),
                });
            }
        }
    }
    Ok(TailReport::new(
        "pointwise",
        delta,
        cases,
        ROUNDING * model.loss_scale(),
    ))
}

/// [`tail_pointwise_check`] by sampling `S` and weighting each hypothesis by
/// its exact posterior mass.
pub fn tail_pointwise_check_mc(
    prob: &LearningProblem,
    spec: &AlgorithmSpec,
    q_w: &FiniteMeasure,
    delta: f64,
    cfg: McConfig,
) -> Result<TailEstimate> {
    check_delta(delta)?;
    check_q(prob, q_w)?;
    spec.validate(prob)?;
    let sigma = subgaussian_sigma(prob)?;
    let n = prob.n() as f64;
    let sampler = WeightedIndex::new(prob.p_z().weights()).map_err(|e| Error::InvalidMeasure(e.to_string()))?;
    let pop: Vec<f64> = (0..prob.hypotheses()).map(|w| prob.pop_risk(w)).collect();
    let tol = ROUNDING
        * (0..prob.hypotheses())
            .flat_map(|w| prob.loss_row(w).iter())
            .fold(0.0f64, |a, l| a.max(l.abs()));
    let moments = mc::run(cfg, 1, |rng, out| {
        let mut s = vec![0; prob.n()];
        prob.draw_sample(rng, &sampler, &mut s);
        let row = spec.row(prob, &s).expect("validated algorithm");
        out[0] = row
            .weights()
            .iter()
            .enumerate()
            .filter(|(w, p)| {
                **p > 0.0
                    && (pop[*w] - prob.emp_risk(*w, &s)).abs()
                        > pointwise_threshold(sigma, n, **p, q_w[*w], delta) + tol
            })
            .map(|(_, p)| p)
            .sum();
    });
    Ok(TailEstimate {
        delta,
        probability: moments[0].mean(),
        stderr: moments[0].stderr(),
        samples: cfg.samples,
        seed: cfg.seed,
    })
}

/// Per sample, `<P_{W|S}, |gen|>` against
/// `sqrt(24 sigma^2 / n) (<P_{W|S}, psi_2^{-1}(dP_{W|S} / dQ_W)> + 1 + sqrt(log(2 / delta)))`.
pub fn bound_tail_thm6(prob: &LearningProblem, alg: &Algorithm, q_w: &FiniteMeasure, delta: f64) -> Result<TailReport> {
    check_delta(delta)?;
    check_q(prob, q_w)?;
    let model = Model::new(prob, alg)?;
    let sigma = subgaussian_sigma(prob)?;
    let scale = (24.0 * sigma * sigma / model.n()).sqrt();
    let confidence = (2.0 / delta).ln().sqrt();
    let cases = (0..model.ns())
        .map(|s| {
            let mut lhs = 0.0;
            let mut density = 0.0;
            for (w, p) in alg.row(s).weights().iter().enumerate() {
                if *p > 0.0 {
                    lhs += p * model.gen(s, w).abs();
                    density += if q_w[w] > 0.0 {
                        p * psi_inv_unchecked(p / q_w[w], 2.0)
                    } else {
                        f64::INFINITY
                    };
                }
            }
            TailCase {
                probability: model.p_s[s],
                lhs,
                rhs: scale * (density + 1.0 + confidence),
            }
        })
        .collect();
    Ok(TailReport::new("thm6", delta, cases, ROUNDING * model.loss_scale()))
}

/// `sum_i diff(z_i)^2` per (sample, pair), indexed `s * N^2 + u * N + v`.
fn square_sums(model: &Model<'_>, diffs: &[Vec<f64>]) -> Vec<f64> {
    model
        .samples
        .iter()
        .flat_map(|s| diffs.iter().map(move |d| s.iter().map(|z| d[*z] * d[*z]).sum::<f64>()))
        .collect()
}

fn check_levels(p_k: &FiniteMeasure, links: usize) -> Result<()> {
    if p_k.len() != links {
        return Err(Error::dim(format!(
            "level weights of size {} for {links} links",
            p_k.len()
        )));
    }
    if p_k.weights().iter().any(|p| *p <= 0.0) {
        return Err(Error::Domain("level weights must be strictly positive".into()));
    }
    Ok(())
}

/// Per supersample `s~ = (s', s)`, the transductive gap
/// `sum_w (P_{W|S=s} - Q_W)(w) (L'_n(w) - L_n(w))` against
/// `sqrt(96 / n) sum_k (sqrt(<rho_k, d^2_{s~}>) + <P_k, d_{s~} psi_2^{-1}(dP_k / drho_k)>
///  + <P_k, d_{s~}> sqrt(log(2 / (p_k delta))))`
/// with `P_k = P_{W_k W_{k-1}|S=s}` and
/// `d^2_{s~}(u, v) = (1 / 2n) sum_i (diff(z_i)^2 + diff(z'_i)^2)`.
///
/// Outcomes are indexed `s' * m^n + s`.
pub fn bound_transductive_thm7(
    prob: &LearningProblem,
    alg: &Algorithm,
    chain: &ChainSpec,
    p_k: &FiniteMeasure,
    delta: f64,
) -> Result<TailReport> {
    check_delta(delta)?;
    chain.check_endpoints(alg)?;
    check_levels(p_k, chain.links())?;
    let model = Model::new(prob, alg)?;
    let nw = model.nw();
    let ns = model.ns();
    let n = model.n();
    let sq = square_sums(&model, &all_diffs(prob));
    let q = chain.kernels()[0].row(0).weights();
    let confidence: Vec<f64> = p_k.weights().iter().map(|p| (2.0 / (p * delta)).ln().sqrt()).collect();
    let scale = (96.0 / n).sqrt();
    let mut cases = Vec::with_capacity(ns * ns);
    for sp in 0..ns {
        for s in 0..ns {
            let row = alg.row(s).weights();
            let lhs: f64 = (0..nw)
                .map(|w| (row[w] - q[w]) * (model.emp[sp * nw + w] - model.emp[s * nw + w]))
                .sum();
            let dist = |k: usize| ((sq[s * nw * nw + k] + sq[sp * nw * nw + k]) / (2.0 * n)).sqrt();
            let mut rhs = 0.0;
            for k in 1..=chain.links() {
                let reference = chain.reference(k);
                let spread: f64 = reference
                    .weights()
                    .iter()
                    .enumerate()
                    .filter(|(_, r)| **r > 0.0)
                    .map(|(k, r)| r * dist(k).powi(2))
                    .sum();
                let (mut density, mut mean) = (0.0, 0.0);
                for (u, v, mass) in chain.couplings(k)[s].atoms() {
                    let d = dist(u * nw + v);
                    if d == 0.0 {
                        continue;
                    }
                    let r = reference.get(u, v);
                    density += if r > 0.0 {
                        mass * d * psi_inv_unchecked(mass / r, 2.0)
                    } else {
                        f64::INFINITY
                    };
                    mean += mass * d;
                }
                rhs += spread.sqrt() + density + mean * confidence[k - 1];
            }
            cases.push(TailCase {
                probability: model.p_s[sp] * model.p_s[s],
                lhs,
                rhs: scale * rhs,
            });
        }
    }
    Ok(TailReport::new("thm7", delta, cases, ROUNDING * model.loss_scale()))
}

/// The partition-chain form of [`bound_transductive_thm7`], per `s~`:
/// `sqrt(96 / n) sum_k (sqrt(<pi_k (x) K_k, d^2>)
///  + sqrt(2 <P_{W_k|S} (x) K_k, d^2> (D(P_{W_k|S} || pi_k) + log(2e / (p_k delta)))))`
/// where `K_k` sends a level-`k` representative to its level-`k-1` one.
pub fn partition_chain_tail_rhs(
    prob: &LearningProblem,
    alg: &Algorithm,
    chain: &ProjectionChain,
    prior: &FiniteMeasure,
    p_k: &FiniteMeasure,
    delta: f64,
) -> Result<Vec<f64>> {
    check_delta(delta)?;
    let links = chain.kernels.len() - 1;
    check_levels(p_k, links)?;
    let model = Model::new(prob, alg)?;
    let nw = model.nw();
    let ns = model.ns();
    let n = model.n();
    let sq = square_sums(&model, &all_diffs(prob));
    let priors: Vec<Vec<f64>> = (0..=links).map(|k| chain.project(k, prior)).collect();
    let log_terms: Vec<f64> = p_k
        .weights()
        .iter()
        .map(|p| (2.0 * std::f64::consts::E / (p * delta)).ln())
        .collect();
    let scale = (96.0 / n).sqrt();
    let mut out = Vec::with_capacity(ns * ns);
    for sp in 0..ns {
        for s in 0..ns {
            let d2 = |u: usize, v: usize| {
                let k = u * nw + v;
                (sq[s * nw * nw + k] + sq[sp * nw * nw + k]) / (2.0 * n)
            };
            let mut rhs = 0.0;
            for k in 1..=links {
                let prev = &chain.maps[k - 1];
                let row = chain.kernels[k].row(s).weights();
                let prior_spread: f64 = priors[k].iter().enumerate().map(|(a, p)| p * d2(a, prev[a])).sum();
                let post_spread: f64 = row.iter().enumerate().map(|(a, p)| p * d2(a, prev[a])).sum();
                let div = kl_raw(row, &priors[k]);
                rhs += prior_spread.sqrt() + (2.0 * post_spread * (div + log_terms[k - 1])).sqrt();
            }
            out.push(scale * rhs);
        }
    }
    Ok(out)
}
