//! Coupling bounds on `E[gen]`: the posterior is coupled with the reference
//! and only the loss differences along the coupling are paid for.

use super::{loss_diff, max_gap, BoundReport, LhsKind, Model, Term};
use crate::error::{Error, Result};
use crate::learning::{Algorithm, LearningProblem};
use crate::measures::{FiniteMeasure, JointMeasure};
use crate::orlicz::psi_inv_unchecked;
use crate::transport::{wasserstein, CostMatrix, TransportPlan, MARGINAL_TOLERANCE};

/// `d_l(u, v) = ||loss(u, .) - loss(v, .)||_{L^2(P_Z)}`, row-major `N x N`.
pub fn loss_distance(prob: &LearningProblem) -> Vec<f64> {
    let nw = prob.hypotheses();
    let p_z = prob.p_z().weights();
    let mut out = vec![0.0; nw * nw];
    for u in 0..nw {
        for v in 0..nw {
            if u != v {
                let d = loss_diff(prob, u, v);
                out[u * nw + v] = d.iter().zip(p_z).map(|(a, p)| p * a * a).sum::<f64>().sqrt();
            }
        }
    }
    out
}

/// `W_2`-optimal couplings of each posterior row with `q_w`: Euclidean cost
/// on the embedding when the problem has one, `d_l` otherwise.
pub fn default_couplings(prob: &LearningProblem, alg: &Algorithm, q_w: &FiniteMeasure) -> Result<Vec<TransportPlan>> {
    let nw = prob.hypotheses();
    let cost = match prob.embedding() {
        Some(e) => CostMatrix::euclidean(e, e)?,
        None => CostMatrix::new(nw, nw, loss_distance(prob))?,
    };
    alg.kernel()
        .rows()
        .iter()
        .map(|row| wasserstein(row, q_w, &cost, 2.0).map(|(_, plan)| plan))
        .collect()
}

/// The `P_S`-mixture of per-sample couplings; identical couplings give
/// themselves back exactly.
pub fn mixture_reference(prob: &LearningProblem, couplings: &[TransportPlan]) -> Result<JointMeasure> {
    let p_s = crate::learning::sample_law(prob)?;
    mixture(&p_s, couplings)
}

pub(crate) fn mixture(p_s: &FiniteMeasure, couplings: &[TransportPlan]) -> Result<JointMeasure> {
    if couplings.len() != p_s.len() {
        return Err(Error::dim(format!(
            "{} couplings for {} samples",
            couplings.len(),
            p_s.len()
        )));
    }
    let first = &couplings[0];
    if couplings.iter().all(|c| c.weights() == first.weights()) {
        return JointMeasure::new(first.rows(), first.cols(), first.weights().to_vec());
    }
    let mut out = vec![0.0; first.weights().len()];
    for (p, c) in p_s.weights().iter().zip(couplings) {
        if *p > 0.0 {
            for (o, x) in out.iter_mut().zip(c.weights()) {
                *o += p * x;
            }
        }
    }
    JointMeasure::new(first.rows(), first.cols(), out)
}

/// Checks that coupling `s` has marginals `(source row s, target row s)`.
pub(crate) fn check_couplings(
    plans: &[TransportPlan],
    source: &[FiniteMeasure],
    target: &[FiniteMeasure],
    reference: &JointMeasure,
) -> Result<()> {
    if plans.len() != source.len() {
        return Err(Error::Config(format!(
            "{} couplings for {} samples",
            plans.len(),
            source.len()
        )));
    }
    for (s, plan) in plans.iter().enumerate() {
        let (a, b) = (&source[s], &target[s]);
        if plan.rows() != a.len() || plan.cols() != b.len() {
            return Err(Error::Config(format!(
                "coupling {s} is {}x{}, expected {}x{}",
                plan.rows(),
                plan.cols(),
                a.len(),
                b.len()
            )));
        }
        let gap = max_gap(plan.source().weights(), a.weights()).max(max_gap(plan.target().weights(), b.weights()));
        if gap > MARGINAL_TOLERANCE {
            return Err(Error::Config(format!("coupling {s} has marginals off by {gap:e}")));
        }
    }
    if reference.rows() != plans[0].rows() || reference.cols() != plans[0].cols() {
        return Err(Error::Config(format!(
            "reference measure is {}x{}, couplings are {}x{}",
            reference.rows(),
            reference.cols(),
            plans[0].rows(),
            plans[0].cols()
        )));
    }
    Ok(())
}

/// `E[f(U, V, S) psi_2^{-1}(dP_{UV|S} / d ref)]` with `(U, V) ~ plan_S`;
/// `+inf` when some coupling is not dominated by the reference.
pub(crate) fn density_expectation(
    model: &Model<'_>,
    plans: &[TransportPlan],
    reference: &JointMeasure,
    mut f: impl FnMut(usize, usize, usize) -> f64,
) -> f64 {
    let mut total = 0.0;
    for (s, plan) in plans.iter().enumerate() {
        let ps = model.p_s[s];
        if ps == 0.0 {
            continue;
        }
        let mut inner = 0.0;
        for (u, v, mass) in plan.atoms() {
            let weight = f(s, u, v);
            if weight == 0.0 {
                continue;
            }
            let r = reference.get(u, v);
            if r <= 0.0 {
                return f64::INFINITY;
            }
            inner += mass * weight * psi_inv_unchecked(mass / r, 2.0);
        }
        total += ps * inner;
    }
    total
}

/// Pairwise loss differences `loss(u, .) - loss(v, .)` indexed `u * N + v`.
pub(crate) fn all_diffs(prob: &LearningProblem) -> Vec<Vec<f64>> {
    let nw = prob.hypotheses();
    (0..nw * nw).map(|k| loss_diff(prob, k / nw, k % nw)).collect()
}

/// `d_{S,l}(u, v)` on one sample.
pub(crate) fn sample_distance(diff: &[f64], s: &[usize]) -> f64 {
    (s.iter().map(|z| diff[*z] * diff[*z]).sum::<f64>() / s.len() as f64).sqrt()
}

/// The two sums of the loss-distance coupling bound:
/// `E[(d_l + d_{S,l})(U, V) psi_2^{-1}(dP_{UV|S} / d ref)]` and
/// `E_ref[d_l]`.
pub(crate) fn simplified_terms(
    model: &Model<'_>,
    plans: &[TransportPlan],
    reference: &JointMeasure,
    d_loss: &[f64],
    diffs: &[Vec<f64>],
) -> (f64, f64) {
    let nw = model.nw();
    let density = density_expectation(model, plans, reference, |s, u, v| {
        if u == v {
            0.0
        } else {
            d_loss[u * nw + v] + sample_distance(&diffs[u * nw + v], &model.samples[s])
        }
    });
    let fluctuation = reference.weights().iter().zip(d_loss).map(|(r, d)| r * d).sum::<f64>();
    (density, fluctuation)
}

fn validate(model: &Model<'_>, q_w: &FiniteMeasure, couplings: &[TransportPlan], mu_uv: &JointMeasure) -> Result<()> {
    if q_w.len() != model.nw() {
        return Err(Error::dim(format!(
            "reference measure of size {} over {} hypotheses",
            q_w.len(),
            model.nw()
        )));
    }
    let targets = vec![q_w.clone(); model.ns()];
    check_couplings(couplings, model.alg.kernel().rows(), &targets, mu_uv)
}

/// The coupling bound with the sample-dependent scale
/// `sigma^2(u, v, s~) = sum_i ((l(u, z'_i) - l(v, z'_i)) - (l(u, z_i) - l(v, z_i)))^2`:
///
/// `E[gen] <= sqrt(24) / n E[sigma(U, V, S~) psi_2^{-1}(dP_{UV|S} / dmu_UV)
///            + sqrt(E[sigma^2(U', V', S~) | S~])]`
///
/// with `(U, V) ~ P_{UV|S}`, `(U', V') ~ mu_UV` and `S'` an independent copy.
pub fn bound_coupling(
    prob: &LearningProblem,
    alg: &Algorithm,
    q_w: &FiniteMeasure,
    couplings: &[TransportPlan],
    mu_uv: &JointMeasure,
) -> Result<BoundReport> {
    let model = Model::new(prob, alg)?;
    validate(&model, q_w, couplings, mu_uv)?;
    let nw = model.nw();
    let ns = model.ns();
    let diffs = all_diffs(prob);
    let sigma = |diff: &[f64], z: &[usize], zp: &[usize]| -> f64 {
        z.iter()
            .zip(zp)
            .map(|(a, b)| (diff[*b] - diff[*a]).powi(2))
            .sum::<f64>()
    };

    let density = density_expectation(&model, couplings, mu_uv, |s, u, v| {
        if u == v {
            return 0.0;
        }
        let diff = &diffs[u * nw + v];
        let z = &model.samples[s];
        (0..ns)
            .map(|sp| model.p_s[sp] * sigma(diff, z, &model.samples[sp]).sqrt())
            .sum::<f64>()
    });

    let ref_atoms: Vec<(usize, f64)> = mu_uv
        .weights()
        .iter()
        .enumerate()
        .filter(|(k, r)| **r > 0.0 && k / nw != k % nw)
        .map(|(k, r)| (k, *r))
        .collect();
    let mut fluctuation = 0.0;
    for s in 0..ns {
        for sp in 0..ns {
            let mass = model.p_s[s] * model.p_s[sp];
            if mass == 0.0 {
                continue;
            }
            let (z, zp) = (&model.samples[s], &model.samples[sp]);
            let second: f64 = ref_atoms.iter().map(|(k, r)| r * sigma(&diffs[*k], z, zp)).sum();
            fluctuation += mass * second.sqrt();
        }
    }

    let scale = 24f64.sqrt() / model.n();
    Ok(BoundReport::exact(
        "coupling",
        model.gen.signed,
        LhsKind::Signed,
        vec![
            Term::new("density", scale * density),
            Term::new("fluctuation", scale * fluctuation),
        ],
    ))
}

/// The coupling bound with population and empirical loss distances:
///
/// `E[gen] <= sqrt(48 / n) E[(d_l + d_{S,l})(U, V) psi_2^{-1}(dP_{UV|S} / dmu_UV)
///            + d_l(U', V')]`.
pub fn bound_coupling_simplified(
    prob: &LearningProblem,
    alg: &Algorithm,
    q_w: &FiniteMeasure,
    couplings: &[TransportPlan],
    mu_uv: &JointMeasure,
) -> Result<BoundReport> {
    let model = Model::new(prob, alg)?;
    validate(&model, q_w, couplings, mu_uv)?;
    let d_loss = loss_distance(prob);
    let diffs = all_diffs(prob);
    let (density, fluctuation) = simplified_terms(&model, couplings, mu_uv, &d_loss, &diffs);
    let scale = (48.0 / model.n()).sqrt();
    Ok(BoundReport::exact(
        "coupling_simplified",
        model.gen.signed,
        LhsKind::Signed,
        vec![
            Term::new("density", scale * density),
            Term::new("fluctuation", scale * fluctuation),
        ],
    ))
}
