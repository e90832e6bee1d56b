//! Chained coupling bounds: the posterior is connected to an
//! data-independent reference through intermediate kernels and each link
//! pays its own coupling cost.

use serde::Serialize;

use super::coupling::{all_diffs, check_couplings, density_expectation, simplified_terms};
use super::{loss_diff, max_gap, BoundReport, LhsKind, Model, Term};
use crate::error::{Error, Result};
use crate::learning::{sample_law, Algorithm, LearningProblem};
use crate::measures::{kl_term, FiniteMeasure, JointMeasure, MarkovKernel};
use crate::orlicz::{orlicz_norm, DiscreteRandomVariable};
use crate::transport::TransportPlan;

/// Rows of the first kernel and of the last kernel against the algorithm
/// must agree to this accuracy.
const ENDPOINT_TOLERANCE: f64 = 1e-12;

/// Largest factorization residual accepted by the Markov check.
const MARKOV_TOLERANCE: f64 = 1e-9;

/// A chain of kernels `P_{W_k|S}`, `k = 0..=K`, with per-sample couplings of
/// neighbouring levels and one reference measure per link.
///
/// `couplings[k - 1][s]` couples `P_{W_k|S=s}` (rows) with
/// `P_{W_{k-1}|S=s}` (columns) and `references[k - 1]` is the matching
/// reference over `W x W`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainSpec {
    kernels: Vec<MarkovKernel>,
    couplings: Vec<Vec<TransportPlan>>,
    references: Vec<JointMeasure>,
    metric: Option<Vec<f64>>,
}

impl ChainSpec {
    pub fn new(
        kernels: Vec<MarkovKernel>,
        couplings: Vec<Vec<TransportPlan>>,
        references: Vec<JointMeasure>,
    ) -> Result<Self> {
        if kernels.len() < 2 {
            return Err(Error::Chain("a chain needs at least two kernels".into()));
        }
        let links = kernels.len() - 1;
        if couplings.len() != links || references.len() != links {
            return Err(Error::Chain(format!(
                "{} kernels need {links} coupling families and references, got {} and {}",
                kernels.len(),
                couplings.len(),
                references.len()
            )));
        }
        let (inputs, outputs) = (kernels[0].input_size(), kernels[0].output_size());
        if kernels
            .iter()
            .any(|k| k.input_size() != inputs || k.output_size() != outputs)
        {
            return Err(Error::Chain("kernels differ in shape".into()));
        }
        for k in 1..=links {
            check_couplings(
                &couplings[k - 1],
                kernels[k].rows(),
                kernels[k - 1].rows(),
                &references[k - 1],
            )
            .map_err(|e| Error::Chain(format!("link {k}: {e}")))?;
        }
        Ok(Self {
            kernels,
            couplings,
            references,
            metric: None,
        })
    }

    /// A one-link chain from the reference `q_w` to the algorithm.
    pub fn single(
        alg: &Algorithm,
        q_w: &FiniteMeasure,
        couplings: Vec<TransportPlan>,
        reference: JointMeasure,
    ) -> Result<Self> {
        let q = MarkovKernel::constant(alg.kernel().input_size(), q_w.clone())?;
        Self::new(vec![q, alg.kernel().clone()], vec![couplings], vec![reference])
    }

    /// The chain of partition projections, coupled through the projection
    /// maps, with references `pi_k (x) P_{W_{k-1}|W_k}` where `pi_k` is the
    /// projection of `prior`.
    pub fn from_projection(chain: &ProjectionChain, prior: &FiniteMeasure) -> Result<Self> {
        let nw = chain.kernels[0].output_size();
        if prior.len() != nw {
            return Err(Error::dim(format!(
                "prior of size {} over {nw} hypotheses",
                prior.len()
            )));
        }
        let mut couplings = Vec::new();
        let mut references = Vec::new();
        for k in 1..chain.kernels.len() {
            let prev = &chain.maps[k - 1];
            let plans = chain.kernels[k]
                .rows()
                .iter()
                .zip(chain.kernels[k - 1].rows())
                .map(|(row, target)| {
                    let mut w = vec![0.0; nw * nw];
                    for (a, p) in row.weights().iter().enumerate() {
                        if *p > 0.0 {
                            w[a * nw + prev[a]] = *p;
                        }
                    }
                    TransportPlan::new(w, row.clone(), target.clone())
                })
                .collect::<Result<Vec<_>>>()?;
            let pi = chain.project(k, prior);
            let mut r = vec![0.0; nw * nw];
            for (a, p) in pi.iter().enumerate() {
                if *p > 0.0 {
                    r[a * nw + prev[a]] = *p;
                }
            }
            couplings.push(plans);
            references.push(JointMeasure::new(nw, nw, r)?);
        }
        Self::new(chain.kernels.clone(), couplings, references)
    }

    /// Attaches a metric on `W` for the Orlicz-increment form of the bound.
    pub fn with_metric(mut self, metric: Vec<f64>) -> Result<Self> {
        let nw = self.kernels[0].output_size();
        if metric.len() != nw * nw {
            return Err(Error::dim(format!(
                "metric with {} entries over {nw} hypotheses",
                metric.len()
            )));
        }
        self.metric = Some(metric);
        Ok(self)
    }

    /// Number of links `K`.
    pub fn links(&self) -> usize {
        self.kernels.len() - 1
    }

    pub fn kernels(&self) -> &[MarkovKernel] {
        &self.kernels
    }

    pub fn couplings(&self, k: usize) -> &[TransportPlan] {
        &self.couplings[k - 1]
    }

    pub fn reference(&self, k: usize) -> &JointMeasure {
        &self.references[k - 1]
    }

    pub fn metric(&self) -> Option<&[f64]> {
        self.metric.as_deref()
    }

    /// Checks the endpoints: the first kernel ignores the sample and the
    /// last one is the algorithm.
    pub(crate) fn check_endpoints(&self, alg: &Algorithm) -> Result<()> {
        let first = &self.kernels[0];
        if first.input_size() != alg.kernel().input_size() || first.output_size() != alg.kernel().output_size() {
            return Err(Error::Chain("chain and algorithm differ in shape".into()));
        }
        let row0 = first.row(0).weights();
        if first
            .rows()
            .iter()
            .any(|r| max_gap(r.weights(), row0) > ENDPOINT_TOLERANCE)
        {
            return Err(Error::Chain("the first kernel depends on the sample".into()));
        }
        let last = self.kernels.last().expect("at least two kernels");
        if last
            .rows()
            .iter()
            .zip(alg.kernel().rows())
            .any(|(a, b)| max_gap(a.weights(), b.weights()) > ENDPOINT_TOLERANCE)
        {
            return Err(Error::Chain("the last kernel is not the algorithm".into()));
        }
        Ok(())
    }
}

/// Evaluations of a chain: the loss-distance form always, the metric form
/// when the chain carries a metric.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainReports {
    pub loss: BoundReport,
    pub metric: Option<BoundReport>,
}

/// `E[gen] <= sqrt(48 / n) sum_k E[(d_l + d_{S,l})(W_k, W_{k-1})
/// psi_2^{-1}(dP_{W_k W_{k-1}|S} / drho_k) + d_l(W'_k, W'_{k-1})]`, and with a
/// metric `d` satisfying the increment condition,
/// `E[gen] <= sqrt(2 / n) sum_k E[d(W_k, W_{k-1}) psi_2^{-1}(...) + d(W'_k, W'_{k-1})]`.
pub fn bound_chain(prob: &LearningProblem, alg: &Algorithm, chain: &ChainSpec) -> Result<ChainReports> {
    chain.check_endpoints(alg)?;
    let model = Model::new(prob, alg)?;
    let d_loss = super::coupling::loss_distance(prob);
    let diffs = all_diffs(prob);
    let scale = (48.0 / model.n()).sqrt();
    let mut components = Vec::new();
    for k in 1..=chain.links() {
        let (density, fluctuation) = simplified_terms(&model, chain.couplings(k), chain.reference(k), &d_loss, &diffs);
        components.push(Term::new(format!("level{k}_density"), scale * density));
        components.push(Term::new(format!("level{k}_fluctuation"), scale * fluctuation));
    }
    let loss = BoundReport::exact("chain", model.gen.signed, LhsKind::Signed, components);

    let metric = match chain.metric() {
        None => None,
        Some(d) => {
            let worst = check_chain_metric(prob, d)?;
            let nw = model.nw();
            let scale = (2.0 / model.n()).sqrt();
            let mut components = Vec::new();
            for k in 1..=chain.links() {
                let reference = chain.reference(k);
                let density = density_expectation(&model, chain.couplings(k), reference, |_, u, v| d[u * nw + v]);
                let fluctuation = reference.weights().iter().zip(d).map(|(r, x)| r * x).sum::<f64>();
                components.push(Term::new(format!("level{k}_density"), scale * density));
                components.push(Term::new(format!("level{k}_fluctuation"), scale * fluctuation));
            }
            Some(
                BoundReport::exact("chain_metric", model.gen.signed, LhsKind::Signed, components)
                    .with_diagnostics(vec![Term::new("increment_ratio", worst)]),
            )
        }
    };
    Ok(ChainReports { loss, metric })
}

/// `d(u, v) = sqrt(6) * range(loss(u, .) - loss(v, .)) / 2`, row-major
/// `N x N`. By Hoeffding's lemma the centered sum of `n` loss differences
/// then has `psi_2` norm at most `sqrt(n) d(u, v)`.
pub fn chain_metric(prob: &LearningProblem) -> Result<Vec<f64>> {
    if prob.bound().is_none() {
        return Err(Error::Config(
            "the chain metric needs a problem in bounded-loss mode".into(),
        ));
    }
    let nw = prob.hypotheses();
    let mut out = vec![0.0; nw * nw];
    for u in 0..nw {
        for v in 0..nw {
            if u != v {
                let d = loss_diff(prob, u, v);
                let hi = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lo = d.iter().cloned().fold(f64::INFINITY, f64::min);
                out[u * nw + v] = 6f64.sqrt() * (hi - lo) / 2.0;
            }
        }
    }
    Ok(out)
}

/// Checks `||sum_i (lbar(u, Z_i) - lbar(v, Z_i))||_{psi_2} <= sqrt(n) d(u, v)`
/// for every pair by computing the Orlicz norm of the exact law of the sum.
/// Returns the largest ratio of the two sides.
pub fn check_chain_metric(prob: &LearningProblem, metric: &[f64]) -> Result<f64> {
    let nw = prob.hypotheses();
    if metric.len() != nw * nw {
        return Err(Error::dim(format!(
            "metric with {} entries over {nw} hypotheses",
            metric.len()
        )));
    }
    let p_s = sample_law(prob)?;
    let samples: Vec<Vec<usize>> = (0..p_s.len()).map(|i| prob.sample(i).indices).collect();
    let root_n = (prob.n() as f64).sqrt();
    let scale = (0..nw)
        .flat_map(|w| prob.loss_row(w).iter())
        .fold(0.0f64, |a, l| a.max(l.abs()));
    let mut worst = 0.0f64;
    for u in 0..nw {
        for v in 0..nw {
            if u == v {
                continue;
            }
            let diff = loss_diff(prob, u, v);
            let mean = prob.p_z().expect(&diff)?;
            let values: Vec<f64> = samples
                .iter()
                .map(|s| s.iter().map(|z| diff[*z] - mean).sum())
                .collect();
            let norm = orlicz_norm(&DiscreteRandomVariable::new(values, p_s.clone())?, 2.0)?;
            let cap = root_n * metric[u * nw + v];
            if norm > cap * (1.0 + 1e-9) + 1e-12 * scale {
                return Err(Error::Chain(format!(
                    "metric fails the increment condition at ({u}, {v}): norm {norm} > {cap}"
                )));
            }
            if cap > 0.0 {
                worst = worst.max(norm / cap);
            }
        }
    }
    Ok(worst)
}

/// A partition of `{0, .., N-1}` into nonempty cells.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Partition {
    cells: Vec<Vec<usize>>,
    label: Vec<usize>,
}

impl Partition {
    pub fn new(size: usize, cells: Vec<Vec<usize>>) -> Result<Self> {
        let mut label = vec![usize::MAX; size];
        for (c, cell) in cells.iter().enumerate() {
            if cell.is_empty() {
                return Err(Error::Config(format!("cell {c} is empty")));
            }
            for &w in cell {
                if w >= size || label[w] != usize::MAX {
                    return Err(Error::Config(format!("element {w} is out of range or in two cells")));
                }
                label[w] = c;
            }
        }
        if label.contains(&usize::MAX) {
            return Err(Error::Config("cells do not cover the set".into()));
        }
        Ok(Self { cells, label })
    }

    pub fn whole(size: usize) -> Self {
        Self {
            cells: vec![(0..size).collect()],
            label: vec![0; size],
        }
    }

    pub fn singletons(size: usize) -> Self {
        Self {
            cells: (0..size).map(|w| vec![w]).collect(),
            label: (0..size).collect(),
        }
    }

    /// `{W}`, then each cell halved by index until only singletons remain.
    pub fn binary_hierarchy(size: usize) -> Vec<Self> {
        let mut levels = vec![Self::whole(size)];
        while levels.last().expect("nonempty").cells.len() < size {
            let cells = levels
                .last()
                .expect("nonempty")
                .cells
                .iter()
                .flat_map(|c| {
                    if c.len() == 1 {
                        vec![c.clone()]
                    } else {
                        let (a, b) = c.split_at(c.len().div_ceil(2));
                        vec![a.to_vec(), b.to_vec()]
                    }
                })
                .collect();
            levels.push(Self::new(size, cells).expect("halving keeps a partition"));
        }
        levels
    }

    pub fn size(&self) -> usize {
        self.label.len()
    }

    pub fn cells(&self) -> &[Vec<usize>] {
        &self.cells
    }

    /// The lowest index in the cell of `w`.
    pub fn representative(&self, w: usize) -> usize {
        *self.cells[self.label[w]].iter().min().expect("nonempty cell")
    }

    pub fn is_singletons(&self) -> bool {
        self.cells.len() == self.size()
    }

    /// True when every cell of `self` lies inside a cell of `coarser`.
    pub fn refines(&self, coarser: &Partition) -> bool {
        self.cells
            .iter()
            .all(|c| c.iter().all(|w| coarser.label[*w] == coarser.label[c[0]]))
    }
}

/// Projections `P_{W_k|S} = sum_w P_{W|S}(A_k(w)) delta_{rep_k(w)}` of an
/// algorithm onto an increasing sequence of partitions. The singleton
/// partition is appended when the sequence does not end with it (or has a
/// single level), so the last kernel is the algorithm.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectionChain {
    pub kernels: Vec<MarkovKernel>,
    /// `maps[k][w]`: the level-`k` representative of `w`.
    pub maps: Vec<Vec<usize>>,
    /// Largest factorization residual of `S - W_k - W_{k-1}`.
    pub markov_residual: f64,
}

impl ProjectionChain {
    /// `pi_k(a) = pi(rep_k^{-1}(a))`.
    pub fn project(&self, k: usize, prior: &FiniteMeasure) -> Vec<f64> {
        let mut out = vec![0.0; prior.len()];
        for (w, p) in prior.weights().iter().enumerate() {
            out[self.maps[k][w]] += p;
        }
        out
    }
}

pub fn partition_chain(prob: &LearningProblem, alg: &Algorithm, partitions: &[Partition]) -> Result<ProjectionChain> {
    let nw = prob.hypotheses();
    if partitions.is_empty() {
        return Err(Error::Chain("no partitions given".into()));
    }
    let mut levels: Vec<Partition> = partitions.to_vec();
    if levels.iter().any(|p| p.size() != nw) {
        return Err(Error::Chain(format!("partitions must cover {nw} hypotheses")));
    }
    for (k, pair) in levels.windows(2).enumerate() {
        if !pair[1].refines(&pair[0]) {
            return Err(Error::Chain(format!(
                "partition {} does not refine partition {k}",
                k + 1
            )));
        }
    }
    if levels.len() == 1 || !levels.last().expect("nonempty").is_singletons() {
        levels.push(Partition::singletons(nw));
    }
    let maps: Vec<Vec<usize>> = levels
        .iter()
        .map(|p| (0..nw).map(|w| p.representative(w)).collect())
        .collect();
    let kernels = maps
        .iter()
        .map(|map| {
            let rows = alg
                .kernel()
                .rows()
                .iter()
                .map(|row| {
                    let mut out = vec![0.0; nw];
                    for (w, p) in row.weights().iter().enumerate() {
                        out[map[w]] += p;
                    }
                    FiniteMeasure::new(out)
                })
                .collect::<Result<Vec<_>>>()?;
            MarkovKernel::new(rows)
        })
        .collect::<Result<Vec<_>>>()?;

    // p(s, a, b) = p(s, a) p(a, b) / p(a) for W_k = a, W_{k-1} = b.
    let p_s = sample_law(prob)?;
    let mut residual = 0.0f64;
    for k in 1..levels.len() {
        let mut joint = vec![0.0; p_s.len() * nw * nw];
        for (s, ps) in p_s.weights().iter().enumerate() {
            for (w, p) in alg.row(s).weights().iter().enumerate() {
                joint[(s * nw + maps[k][w]) * nw + maps[k - 1][w]] += ps * p;
            }
        }
        let mut sa = vec![0.0; p_s.len() * nw];
        let mut ab = vec![0.0; nw * nw];
        let mut a_mass = vec![0.0; nw];
        for s in 0..p_s.len() {
            for a in 0..nw {
                for b in 0..nw {
                    let x = joint[(s * nw + a) * nw + b];
                    sa[s * nw + a] += x;
                    ab[a * nw + b] += x;
                    a_mass[a] += x;
                }
            }
        }
        for s in 0..p_s.len() {
            for a in 0..nw {
                if a_mass[a] == 0.0 {
                    continue;
                }
                for b in 0..nw {
                    let predicted = sa[s * nw + a] * ab[a * nw + b] / a_mass[a];
                    residual = residual.max((joint[(s * nw + a) * nw + b] - predicted).abs());
                }
            }
        }
    }
    if residual > MARKOV_TOLERANCE {
        return Err(Error::Chain(format!(
            "conditional independence fails with residual {residual:e}"
        )));
    }
    Ok(ProjectionChain {
        kernels,
        maps,
        markov_residual: residual,
    })
}

/// `D(P_{S|W_k = a} || P_S)` for each `a`, together with the law of `W_k`.
fn posterior_divergences(p_s: &FiniteMeasure, kernel: &MarkovKernel) -> Result<(Vec<f64>, Vec<f64>)> {
    let law = kernel.mix(p_s)?.into_weights();
    if kernel.is_constant() {
        return Ok((law.clone(), vec![0.0; law.len()]));
    }
    let div = law
        .iter()
        .enumerate()
        .map(|(a, pa)| {
            if *pa == 0.0 {
                return 0.0;
            }
            p_s.weights()
                .iter()
                .zip(kernel.rows())
                .map(|(ps, row)| kl_term(ps * row[a] / pa, *ps))
                .sum()
        })
        .collect();
    Ok((law, div))
}

/// The stochastic chain `W_0 ~ P_W` independent of everything, then the
/// partition projections of `chain`, with the chain metric:
///
/// - `sqrt(2 / n) sum_k E[d(W_k, W_{k-1}) (sqrt(D(P_{S|W_k} || P_S)) + 1)]`;
/// - `sqrt(2 / n) sum_k sqrt(E[d^2(W_k, W_{k-1})]) (sqrt(I(W_k; S)) + 2)`.
pub fn bound_stochastic_chain(
    prob: &LearningProblem,
    alg: &Algorithm,
    chain: &ProjectionChain,
) -> Result<[BoundReport; 2]> {
    let model = Model::new(prob, alg)?;
    let last = chain.kernels.last().ok_or_else(|| Error::Chain("empty chain".into()))?;
    if last
        .rows()
        .iter()
        .zip(alg.kernel().rows())
        .any(|(a, b)| max_gap(a.weights(), b.weights()) > ENDPOINT_TOLERANCE)
    {
        return Err(Error::Chain("the last kernel is not the algorithm".into()));
    }
    let d = chain_metric(prob)?;
    let nw = model.nw();
    let scale = (2.0 / model.n()).sqrt();
    let p_w = model.p_w.weights();
    let mut divergence = Vec::new();
    let mut information = Vec::new();
    let mut diagnostics = vec![Term::new("markov_residual", chain.markov_residual)];
    for (i, kernel) in chain.kernels.iter().enumerate() {
        let k = i + 1;
        let (law, div) = posterior_divergences(&model.p_s, kernel)?;
        let mut first = 0.0;
        let mut second = 0.0;
        for (a, pa) in law.iter().enumerate() {
            if *pa == 0.0 {
                continue;
            }
            let (dist, dist_sq) = if i == 0 {
                let row = &d[a * nw..(a + 1) * nw];
                (
                    row.iter().zip(p_w).map(|(x, p)| p * x).sum::<f64>(),
                    row.iter().zip(p_w).map(|(x, p)| p * x * x).sum::<f64>(),
                )
            } else {
                let x = d[a * nw + chain.maps[i - 1][a]];
                (x, x * x)
            };
            first += pa * dist * (div[a].sqrt() + 1.0);
            second += pa * dist_sq;
        }
        let mi: f64 = law.iter().zip(&div).map(|(p, x)| p * x).sum();
        divergence.push(Term::new(format!("level{k}"), scale * first));
        information.push(Term::new(
            format!("level{k}"),
            scale * second.sqrt() * (mi.sqrt() + 2.0),
        ));
        diagnostics.push(Term::new(format!("level{k}_mutual_information"), mi));
    }
    Ok([
        BoundReport::exact("stochastic_chain", model.gen.signed, LhsKind::Signed, divergence)
            .with_diagnostics(diagnostics.clone()),
        BoundReport::exact("stochastic_chain_mi", model.gen.signed, LhsKind::Signed, information)
            .with_diagnostics(diagnostics),
    ])
}
