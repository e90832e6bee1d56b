//! The chained bound along `W_2` geodesics from each posterior to the
//! hypothesis marginal.

use std::collections::BTreeMap;

use super::{BoundReport, LhsKind, Model, Term};
use crate::error::{Error, Result};
use crate::learning::{Algorithm, LearningProblem};
use crate::measures::kl_term;
use crate::transport::{consecutive_couplings, euclidean, geodesic, uniform_times, EmbeddedSupport};

/// `sqrt(6) L` where `L = max_{u != v, z} |l(u, z) - l(v, z)| / |x_u - x_v|`
/// is the Lipschitz constant of the losses on the embedding.
///
/// Extending each `l(., z)` to the whole space with the same constant, the
/// metric `sqrt(6) L |x - y|` dominates the Hoeffding increment metric
/// everywhere, so it is valid at the intermediate points of a geodesic.
pub fn geodesic_metric_scale(prob: &LearningProblem) -> Result<f64> {
    let emb = embedding(prob)?;
    let nw = prob.hypotheses();
    let mut lip = 0.0f64;
    for u in 0..nw {
        for v in u + 1..nw {
            let gap = prob
                .loss_row(u)
                .iter()
                .zip(prob.loss_row(v))
                .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
            if gap == 0.0 {
                continue;
            }
            let dist = euclidean(emb.point(u), emb.point(v));
            if dist == 0.0 {
                return Err(Error::UnsupportedGeometry(format!(
                    "hypotheses {u} and {v} share a location but differ in loss"
                )));
            }
            lip = lip.max(gap / dist);
        }
    }
    Ok(6f64.sqrt() * lip)
}

fn embedding(prob: &LearningProblem) -> Result<&EmbeddedSupport> {
    let emb = prob
        .embedding()
        .ok_or_else(|| Error::UnsupportedGeometry("the hypotheses need a Euclidean embedding".into()))?;
    if emb.len() != prob.hypotheses() {
        return Err(Error::dim(format!(
            "embedding of {} points for {} hypotheses",
            emb.len(),
            prob.hypotheses()
        )));
    }
    Ok(emb)
}

/// Locations met along all geodesics, merged up to rounding.
#[derive(Default)]
struct Registry {
    points: Vec<Vec<f64>>,
}

impl Registry {
    fn id(&mut self, x: &[f64]) -> usize {
        let tol = 1e-12 * (1.0 + x.iter().fold(0.0f64, |a, v| a.max(v.abs())));
        if let Some(k) = self
            .points
            .iter()
            .position(|p| p.iter().zip(x).all(|(a, b)| (a - b).abs() <= tol))
        {
            return k;
        }
        self.points.push(x.to_vec());
        self.points.len() - 1
    }
}

type Coupling = BTreeMap<(usize, usize), f64>;

/// `E[gen] <= sqrt(2 / n) (2 E[W_2(P_{W|S}, P_W)]
///            + sum_k E[W_2(rho_k, rho_{k-1}) sqrt(D(P_{W_k W_{k-1}|S} || P_{W_k W_{k-1}}))])`
///
/// along the constant-speed geodesic from `P_{W|S=s}` to `P_W` at times
/// `k / K`, with ground metric `geodesic_metric_scale * |x - y|`. Neighbouring
/// slices are coupled by moving the atoms of the optimal plan, and the
/// reference of each link is the `P_S`-mixture of its couplings.
pub fn bound_wasserstein_geodesic(prob: &LearningProblem, alg: &Algorithm, steps: usize) -> Result<BoundReport> {
    if steps == 0 {
        return Err(Error::Config("a geodesic chain needs at least one step".into()));
    }
    let emb = embedding(prob)?;
    let model = Model::new(prob, alg)?;
    let scale = geodesic_metric_scale(prob)?;
    let times = uniform_times(steps);
    let mut registry = Registry::default();
    let mut distance = 0.0;
    // links[k][s]: the coupling of slices k and k + 1 on registry ids.
    let mut links: Vec<Vec<Coupling>> = vec![Vec::with_capacity(model.ns()); steps];
    for s in 0..model.ns() {
        let geo = geodesic(alg.row(s), &model.p_w, emb, &times)?;
        distance += model.p_s[s] * geo.distance;
        let plans = consecutive_couplings(&geo, &geo.plan)?;
        for (k, plan) in plans.iter().enumerate() {
            let (a, b) = (&geo.steps[k], &geo.steps[k + 1]);
            let mut coupling = Coupling::new();
            for (i, j, mass) in plan.atoms() {
                let key = (registry.id(a.support.point(i)), registry.id(b.support.point(j)));
                *coupling.entry(key).or_insert(0.0) += mass;
            }
            links[k].push(coupling);
        }
    }

    let root = (2.0 / model.n()).sqrt();
    let mut components = vec![Term::new("endpoint", root * 2.0 * scale * distance)];
    for (k, couplings) in links.iter().enumerate() {
        let reference = mix(&model, couplings);
        let mut total = 0.0;
        for (s, coupling) in couplings.iter().enumerate() {
            let ps = model.p_s[s];
            if ps == 0.0 {
                continue;
            }
            let cost: f64 = coupling
                .iter()
                .map(|((a, b), m)| m * euclidean(&registry.points[*a], &registry.points[*b]).powi(2))
                .sum();
            let w2 = scale * cost.sqrt();
            if w2 == 0.0 {
                continue;
            }
            total += ps * w2 * divergence(coupling, &reference).sqrt();
        }
        components.push(Term::new(format!("level{}", k + 1), root * total));
    }
    Ok(
        BoundReport::exact("wasserstein_geodesic", model.gen.signed, LhsKind::Signed, components).with_diagnostics(
            vec![
                Term::new("metric_scale", scale),
                Term::new("expected_w2", scale * distance),
            ],
        ),
    )
}

fn mix(model: &Model<'_>, couplings: &[Coupling]) -> Coupling {
    if couplings.iter().all(|c| c == &couplings[0]) {
        return couplings[0].clone();
    }
    let mut out = Coupling::new();
    for (s, c) in couplings.iter().enumerate() {
        let ps = model.p_s[s];
        if ps > 0.0 {
            for (key, m) in c {
                *out.entry(*key).or_insert(0.0) += ps * m;
            }
        }
    }
    out
}

fn divergence(p: &Coupling, q: &Coupling) -> f64 {
    let mut d = 0.0;
    let mut covered = 0.0;
    for (key, m) in p {
        let r = q.get(key).copied().unwrap_or(0.0);
        d += kl_term(*m, r);
        covered += r;
    }
    d + (q.values().sum::<f64>() - covered).max(0.0)
}
