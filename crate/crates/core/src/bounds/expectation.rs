//! Bounds on `E|gen|` through information measures: the density form, its
//! mutual-information relaxation, and the supersample (conditional) forms.

use rand::distr::weighted::WeightedIndex;

use super::{BoundReport, LhsKind, Mode, Model, Term};
use crate::error::{Error, Result};
use crate::learning::{delta_bound, subgaussian_sigma, supersample_joint, Algorithm, AlgorithmSpec, LearningProblem};
use crate::mc::{self, McConfig};
use crate::measures::{conditional_divergence, kl_raw, mutual_information, product, FiniteMeasure, MarkovKernel};
use crate::orlicz::psi_inv_unchecked;

fn check_q(prob: &LearningProblem, q_w: &FiniteMeasure) -> Result<()> {
    if q_w.len() != prob.hypotheses() {
        return Err(Error::dim(format!(
            "reference measure of size {} over {} hypotheses",
            q_w.len(),
            prob.hypotheses()
        )));
    }
    Ok(())
}

/// `<row, psi_2^{-1}(row / q)>`; `None` when `row` is not absolutely
/// continuous with respect to `q`.
fn density_term(row: &[f64], q: &[f64]) -> Option<f64> {
    let mut acc = 0.0;
    for (p, r) in row.iter().zip(q) {
        if *p > 0.0 {
            if *r <= 0.0 {
                return None;
            }
            acc += p * psi_inv_unchecked(p / r, 2.0);
        }
    }
    Some(acc)
}

/// `E|gen| <= sqrt(12 sigma^2 / n) (E[psi_2^{-1}(dP_{W|S} / dQ_W)] + 1)`.
///
/// A reference that misses part of some posterior gives `rhs = +inf` and
/// counts the offending samples in the `singular_samples` diagnostic.
pub fn bound_thm1(prob: &LearningProblem, alg: &Algorithm, q_w: &FiniteMeasure) -> Result<BoundReport> {
    check_q(prob, q_w)?;
    let model = Model::new(prob, alg)?;
    let sigma = subgaussian_sigma(prob)?;
    let scale = (12.0 * sigma * sigma / model.n()).sqrt();
    let mut density = 0.0;
    let mut singular = 0usize;
    for s in 0..model.ns() {
        let ps = model.p_s[s];
        if ps == 0.0 {
            continue;
        }
        match density_term(alg.row(s).weights(), q_w.weights()) {
            Some(t) => density += ps * t,
            None => singular += 1,
        }
    }
    if singular > 0 {
        density = f64::INFINITY;
    }
    Ok(BoundReport::exact(
        "thm1",
        model.gen.absolute,
        LhsKind::Absolute,
        vec![Term::new("density", scale * density), Term::new("constant", scale)],
    )
    .with_diagnostics(vec![
        Term::new("sigma", sigma),
        Term::new("expected_psi_inv", density),
        Term::new("singular_samples", singular as f64),
    ]))
}

/// [`bound_thm1`] with both the left side and the density term estimated by
/// sampling `S`; each draw averages exactly over the algorithm's output.
pub fn bound_thm1_mc(
    prob: &LearningProblem,
    spec: &AlgorithmSpec,
    q_w: &FiniteMeasure,
    cfg: McConfig,
) -> Result<BoundReport> {
    check_q(prob, q_w)?;
    spec.validate(prob)?;
    let sigma = subgaussian_sigma(prob)?;
    let scale = (12.0 * sigma * sigma / prob.n() as f64).sqrt();
    let sampler = WeightedIndex::new(prob.p_z().weights()).map_err(|e| Error::InvalidMeasure(e.to_string()))?;
    let pop: Vec<f64> = (0..prob.hypotheses()).map(|w| prob.pop_risk(w)).collect();
    let moments = mc::run(cfg, 2, |rng, out| {
        let mut s = vec![0; prob.n()];
        prob.draw_sample(rng, &sampler, &mut s);
        let row = spec.row(prob, &s).expect("validated algorithm");
        let mut absolute = 0.0;
        for (w, pw) in row.weights().iter().enumerate() {
            if *pw > 0.0 {
                absolute += pw * (pop[w] - prob.emp_risk(w, &s)).abs();
            }
        }
        out[0] = absolute;
        out[1] = density_term(row.weights(), q_w.weights()).unwrap_or(f64::INFINITY);
    });
    let density = moments[1].mean();
    let mut report = BoundReport::exact(
        "thm1",
        moments[0].mean(),
        LhsKind::Absolute,
        vec![Term::new("density", scale * density), Term::new("constant", scale)],
    )
    .with_diagnostics(vec![
        Term::new("sigma", sigma),
        Term::new("expected_psi_inv", density),
        Term::new("expected_psi_inv_stderr", moments[1].stderr()),
    ]);
    // The rhs is estimated too; widen by the stderr of both sides.
    let stderr = moments[0].stderr() + scale * moments[1].stderr();
    report.mode = Mode::MonteCarlo {
        seed: cfg.seed,
        samples: cfg.samples,
        stderr,
    };
    Ok(report)
}

/// `E|gen| <= sqrt(24 sigma^2 / n (I(W; S) + 4))`.
///
/// Diagnostics include the golden-formula residual
/// `|D(P_{W|S} || U | P_S) - I(W; S) - D(P_W || U)|` against the uniform
/// reference `U`, computed through independent routes.
pub fn bound_mi(prob: &LearningProblem, alg: &Algorithm) -> Result<BoundReport> {
    let model = Model::new(prob, alg)?;
    let sigma = subgaussian_sigma(prob)?;
    let joint = product(&model.p_s, alg.kernel())?;
    let mi = mutual_information(&joint);
    let rhs = (24.0 * sigma * sigma / model.n() * (mi + 4.0)).sqrt();

    let uniform = FiniteMeasure::uniform(model.nw())?;
    let reference = MarkovKernel::constant(model.ns(), uniform.clone())?;
    let conditional = conditional_divergence(alg.kernel(), &reference, &model.p_s)?;
    let marginal = kl_raw(joint.col_marginal().weights(), uniform.weights());
    let residual = (conditional - mi - marginal).abs();

    Ok(
        BoundReport::exact("mi", model.gen.absolute, LhsKind::Absolute, vec![Term::new("mi", rhs)]).with_diagnostics(
            vec![
                Term::new("sigma", sigma),
                Term::new("mutual_information", mi),
                Term::new("golden_residual", residual),
            ],
        ),
    )
}

/// `sqrt(24 sigma^2 / n (D(P_{W|S} || Q_W | P_S) + 4))`: the bound obtained
/// from the density form for a fixed reference `Q_W`. Minimised by
/// `Q_W = P_W`, where it equals the right side of [`bound_mi`].
pub fn mi_relaxation(prob: &LearningProblem, alg: &Algorithm, q_w: &FiniteMeasure) -> Result<f64> {
    check_q(prob, q_w)?;
    let model = Model::new(prob, alg)?;
    let sigma = subgaussian_sigma(prob)?;
    let reference = MarkovKernel::constant(model.ns(), q_w.clone())?;
    let d = conditional_divergence(alg.kernel(), &reference, &model.p_s)?;
    Ok((24.0 * sigma * sigma / model.n() * (d + 4.0)).sqrt())
}

struct SupersampleTerms {
    cmi: f64,
    delta_sq: f64,
    thm2: f64,
    golden_residual: f64,
}

fn supersample_terms(model: &Model<'_>) -> Result<SupersampleTerms> {
    let prob = model.prob;
    let ss = supersample_joint(prob, model.alg)?;
    let cmi = ss.cmi();
    let m = prob.m();
    let delta = delta_bound(prob);
    let p_z = prob.p_z().weights();
    let mut delta_sq = 0.0;
    for z in 0..m {
        for zp in 0..m {
            delta_sq += p_z[z] * p_z[zp] * delta[z * m + zp].powi(2);
        }
    }

    // Exact Thm 2 expectation with Q_{W|S~} the sign-averaged kernel, and
    // the conditional golden formula against a uniform reference.
    let nw = model.nw();
    let ne = ss.sign_patterns();
    let sign_mass = 1.0 / ne as f64;
    let uniform = vec![1.0 / nw as f64; nw];
    let (mut thm2, mut conditional, mut marginal) = (0.0, 0.0, 0.0);
    let mut q = vec![0.0; nw];
    for st in 0..ss.sample_count() * ss.sample_count() {
        let (sp, s) = ss.split(st);
        let mass = model.p_s[sp] * model.p_s[s];
        if mass == 0.0 {
            continue;
        }
        let (zp, z) = (&model.samples[sp], &model.samples[s]);
        let norm = z
            .iter()
            .zip(zp)
            .map(|(a, b)| delta[a * m + b].powi(2))
            .sum::<f64>()
            .sqrt();
        let rows: Vec<&[f64]> = (0..ne)
            .map(|e| model.alg.row(ss.mixed_index(prob, e, z, zp)).weights())
            .collect();
        q.iter_mut().for_each(|x| *x = 0.0);
        for row in &rows {
            for (qw, p) in q.iter_mut().zip(*row) {
                *qw += sign_mass * p;
            }
        }
        let mut inner = 0.0;
        for row in &rows {
            let t = density_term(row, &q).expect("each row is dominated by the sign average");
            inner += sign_mass * (t + 1.0);
            conditional += mass * sign_mass * kl_raw(row, &uniform);
        }
        thm2 += mass * norm * inner;
        marginal += mass * kl_raw(&q, &uniform);
    }
    let thm2 = 12f64.sqrt() / model.n() * thm2;
    Ok(SupersampleTerms {
        cmi,
        delta_sq,
        thm2,
        golden_residual: (conditional - cmi - marginal).abs(),
    })
}

/// `E|gen| <= sqrt(24 / n E[Delta^2(Z, Z')] (I(W; eps | S~) + 4))`.
///
/// Diagnostics carry the conditional mutual information, the `n log 2`
/// ceiling, the right side of [`bound_thm2`] and the conditional
/// golden-formula residual.
pub fn bound_cmi(prob: &LearningProblem, alg: &Algorithm) -> Result<BoundReport> {
    let model = Model::new(prob, alg)?;
    let t = supersample_terms(&model)?;
    let rhs = (24.0 / model.n() * t.delta_sq * (t.cmi + 4.0)).sqrt();
    Ok(BoundReport::exact(
        "cmi",
        model.gen.absolute,
        LhsKind::Absolute,
        vec![Term::new("cmi", rhs)],
    )
    .with_diagnostics(vec![
        Term::new("conditional_mutual_information", t.cmi),
        Term::new("cmi_ceiling", model.n() * std::f64::consts::LN_2),
        Term::new("expected_delta_sq", t.delta_sq),
        Term::new("thm2_rhs", t.thm2),
        Term::new("golden_residual", t.golden_residual),
    ]))
}

/// `E|gen| <= sqrt(12) / n E[||Delta(S~)|| (psi_2^{-1}(dP_{W|S~eps} / dQ_{W|S~}) + 1)]`
/// with `Q_{W|S~}` the average of the algorithm over the sign patterns.
pub fn bound_thm2(prob: &LearningProblem, alg: &Algorithm) -> Result<BoundReport> {
    let model = Model::new(prob, alg)?;
    let t = supersample_terms(&model)?;
    Ok(BoundReport::exact(
        "thm2",
        model.gen.absolute,
        LhsKind::Absolute,
        vec![Term::new("supersample", t.thm2)],
    ))
}
