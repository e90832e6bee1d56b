//! Seeded property suites for the core inequalities. Trial `i` draws from
//! its own random stream, trials run in parallel, and the worst case is
//! picked by (violation, trial index), so summaries do not depend on the
//! number of workers.

use rand::seq::IndexedRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::measures::{
    conditional_divergence, conditional_mutual_information, kl_divergence, mutual_information, product, FiniteMeasure,
    JointMeasure3, MarkovKernel,
};
use crate::orlicz::{check_psi_kl, check_psi_properties, check_sum_to_integral, decorrelation_terms, psi_inv, Profile};
use crate::suite::{random_measure, random_sparse_measure, suite_rng};
use crate::transport::{geodesic, wasserstein, CostMatrix, EmbeddedSupport};

/// Exponents exercised by the Orlicz suites.
pub const EXPONENTS: [f64; 4] = [1.0, 1.5, 2.0, 3.0];

/// Largest support drawn by the suites.
pub const MAX_SUPPORT: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Lemma,
    Psi,
    Golden,
    Transport,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Lemma, Suite::Psi, Suite::Golden, Suite::Transport];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Lemma => "lemma",
            Suite::Psi => "psi",
            Suite::Golden => "golden",
            Suite::Transport => "transport",
        }
    }

    /// The pass threshold on the reported violation.
    pub fn default_tolerance(self) -> f64 {
        match self {
            Suite::Lemma | Suite::Psi => 1e-12,
            Suite::Golden => 1e-9,
            Suite::Transport => 1e-6,
        }
    }

    /// Trials used when the caller does not choose.
    pub fn default_trials(self) -> u64 {
        match self {
            Suite::Lemma | Suite::Psi => 10_000,
            Suite::Golden => 1_000,
            Suite::Transport => 100,
        }
    }
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown suite {s:?}")))
    }
}

/// The outcome of one suite. `max_violation` is `None` when no check ran.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteSummary {
    pub suite: &'static str,
    pub trials: u64,
    pub max_violation: Option<f64>,
    pub worst_case_input: Value,
    pub tolerance: f64,
    pub passed: bool,
}

/// One checked inequality: its violation (positive means it failed) and
/// the input that produced it.
type Check = (f64, Value);

fn worst(checks: impl IntoIterator<Item = Check>) -> Option<Check> {
    let mut best: Option<Check> = None;
    for c in checks {
        // NaN counts as the worst possible outcome.
        let v = if c.0.is_nan() { f64::INFINITY } else { c.0 };
        if best.as_ref().is_none_or(|b| v > b.0) {
            best = Some((v, c.1));
        }
    }
    best
}

/// Runs `trials` trials of `suite` from `seed`, failing when the worst
/// violation exceeds `tol` (the suite default when `None`).
pub fn run_suite(suite: Suite, trials: u64, seed: u64, tol: Option<f64>) -> Result<SuiteSummary> {
    let tolerance = tol.unwrap_or_else(|| suite.default_tolerance());
    if tolerance.is_nan() || tolerance < 0.0 {
        return Err(Error::Config(format!("tolerance {tolerance} must be nonnegative")));
    }
    let per_trial: Vec<Check> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = suite_rng(seed, i);
            let checks = match suite {
                Suite::Lemma => lemma_trial(&mut rng)?,
                Suite::Psi => psi_trial(&mut rng)?,
                Suite::Golden => golden_trial(&mut rng)?,
                Suite::Transport => transport_trial(&mut rng)?,
            };
            Ok(worst(checks).map(|(v, input)| (v, json!({ "trial": i, "input": input }))))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let mut checks = per_trial;
    if suite == Suite::Psi && trials > 0 {
        checks.extend(psi_grid()?);
    }
    let found = worst(checks);
    let passed = found.as_ref().is_none_or(|(v, _)| *v <= tolerance);
    let (max_violation, worst_case_input) = match found {
        Some((v, input)) => (Some(v), input),
        None => (None, Value::Null),
    };
    Ok(SuiteSummary {
        suite: suite.name(),
        trials,
        max_violation,
        worst_case_input,
        tolerance,
        passed,
    })
}

fn values<R: Rng>(rng: &mut R, len: usize, top: f64) -> Vec<f64> {
    (0..len).map(|_| top * rng.random::<f64>()).collect()
}

/// `mu << nu` with `nu` possibly sparse, supports of at most eight atoms,
/// `f, g >= 0` on a random scale.
fn lemma_trial<R: Rng>(rng: &mut R) -> Result<Vec<Check>> {
    let len = rng.random_range(1..=MAX_SUPPORT);
    let nu = random_sparse_measure(rng, len, 0.3);
    let mu_raw: Vec<f64> = nu
        .weights()
        .iter()
        .map(|w| {
            if *w > 0.0 && rng.random::<f64>() < 0.8 {
                rng.random::<f64>()
            } else {
                0.0
            }
        })
        .collect();
    let mu = if mu_raw.iter().any(|w| *w > 0.0) {
        FiniteMeasure::from_unnormalized(mu_raw)?
    } else {
        nu.clone()
    };
    let f_scale = 10f64.powf(rng.random_range(-2.0..2.0));
    let g_scale = 3.0 * rng.random::<f64>();
    let f = values(rng, len, f_scale);
    let g = values(rng, len, g_scale);
    let p = *EXPONENTS.choose(rng).expect("nonempty");
    let t = decorrelation_terms(&mu, &nu, &f, &g, p)?;
    let input = json!({ "mu": mu.weights(), "nu": nu.weights(), "f": f, "g": g, "p": p });
    Ok(vec![(t.lhs - t.rhs1.min(t.rhs2), input)])
}

fn property_checks(triples: &[(f64, f64, f64)]) -> Result<Vec<Check>> {
    Ok(check_psi_properties(triples)?
        .into_iter()
        .filter_map(|v| {
            v.argmax_input.map(|[x, p, q]| {
                (
                    v.max_violation,
                    json!({ "check": "psi_property", "item": v.item, "x": x, "p": p, "q": q }),
                )
            })
        })
        .collect())
}

/// The change-of-measure bound for a random pair, the elementary `psi_p`
/// inequalities at a random point, and the sum-to-integral sandwich for a
/// random step profile.
fn psi_trial<R: Rng>(rng: &mut R) -> Result<Vec<Check>> {
    let mut out = Vec::new();

    let len = rng.random_range(1..=MAX_SUPPORT);
    let nu = random_sparse_measure(rng, len, 0.3);
    let mu_raw: Vec<f64> = nu
        .weights()
        .iter()
        .map(|w| {
            if *w > 0.0 && rng.random::<f64>() < 0.7 {
                rng.random::<f64>().powi(3)
            } else {
                0.0
            }
        })
        .collect();
    let mu = if mu_raw.iter().any(|w| *w > 0.0) {
        FiniteMeasure::from_unnormalized(mu_raw)?
    } else {
        nu.clone()
    };
    let p = *EXPONENTS.choose(rng).expect("nonempty");
    let (lhs, rhs) = check_psi_kl(&mu, &nu, p)?;
    out.push((
        lhs - rhs,
        json!({ "check": "psi_kl", "mu": mu.weights(), "nu": nu.weights(), "p": p }),
    ));

    let x = if rng.random::<bool>() {
        10.0 * rng.random::<f64>()
    } else {
        10f64.powf(rng.random_range(-6.0..6.0))
    };
    let p = *EXPONENTS.choose(rng).expect("nonempty");
    let q = rng.random_range(1.0..6.0);
    out.extend(property_checks(&[(x, p, q)])?);

    let pieces = rng.random_range(1..=6);
    let mut knots: Vec<f64> = (1..pieces).map(|_| rng.random_range(1e-3..1.0)).collect();
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    knots.push(1.0);
    let mut values: Vec<f64> = (0..knots.len()).map(|_| rng.random_range(0.01..10.0)).collect();
    values.sort_by(|a, b| b.total_cmp(a));
    let r = rng.random_range(2.0..6.0);
    let k = rng.random_range(1..=12);
    let s = check_sum_to_integral(
        &Profile::Step {
            knots: knots.clone(),
            values: values.clone(),
        },
        r,
        k,
    )?;
    out.push((
        (s.lhs - s.mid).max(s.mid - s.rhs),
        json!({ "check": "sum_to_integral", "knots": knots, "values": values, "r": r, "k": k }),
    ));
    Ok(out)
}

/// The declared deterministic grids: `x` in `[0, 10]` at step `0.01` for
/// every exponent and `q` in `{1, 2, 5}`, and the sum-to-integral sandwich
/// for the profiles `psi_p^{-1}(1 / e)`.
fn psi_grid() -> Result<Vec<Check>> {
    let mut triples = Vec::new();
    for &p in &EXPONENTS {
        for q in [1.0, 2.0, 5.0] {
            for i in 0..=1000 {
                triples.push((i as f64 / 100.0, p, q));
            }
        }
    }
    let mut out = property_checks(&triples)?;
    for &p in &EXPONENTS {
        let f = move |e: f64| psi_inv(1.0 / e, p).unwrap_or(f64::NAN);
        for r in [2.0, 3.0, 4.0] {
            for k in [1, 5, 20] {
                let s = check_sum_to_integral(&Profile::Function(&f), r, k)?;
                out.push((
                    (s.lhs - s.mid).max(s.mid - s.rhs),
                    json!({ "check": "sum_to_integral", "profile": "psi_inv(1/e)", "p": p, "r": r, "k": k }),
                ));
            }
        }
    }
    Ok(out)
}

fn random_kernel<R: Rng>(rng: &mut R, inputs: usize, outputs: usize) -> Result<MarkovKernel> {
    MarkovKernel::new((0..inputs).map(|_| random_sparse_measure(rng, outputs, 0.3)).collect())
}

/// Both golden formulas: the divergence decomposition on a random pair
/// `(P_X, P_{Y|X})` against a full-support `Q_Y`, and its conditional form
/// on a random three-way joint against a full-support kernel `Q_{Y|Z}`.
fn golden_trial<R: Rng>(rng: &mut R) -> Result<Vec<Check>> {
    let nx = rng.random_range(1..=MAX_SUPPORT);
    let ny = rng.random_range(1..=MAX_SUPPORT);
    let p_x = random_sparse_measure(rng, nx, 0.3);
    let p_yx = random_kernel(rng, nx, ny)?;
    let q_y = random_measure(rng, ny, 0.05);
    let joint = product(&p_x, &p_yx)?;
    let lhs = conditional_divergence(&p_yx, &MarkovKernel::constant(nx, q_y.clone())?, &p_x)?;
    let rhs = mutual_information(&joint) + kl_divergence(&joint.col_marginal(), &q_y)?;
    let first = (
        (lhs - rhs).abs(),
        json!({ "check": "golden", "p_x": p_x.weights(), "p_y_given_x": p_yx.rows().iter().map(|r| r.weights()).collect::<Vec<_>>(), "q_y": q_y.weights() }),
    );

    let dims = [
        rng.random_range(1..=4),
        rng.random_range(1..=4),
        rng.random_range(1..=4),
    ];
    let [nx, ny, nz] = dims;
    let weights = random_sparse_measure(rng, nx * ny * nz, 0.3).into_weights();
    let joint3 = JointMeasure3::new(dims, weights.clone())?;
    let q = random_kernel(rng, nz, ny)?;
    let q = MarkovKernel::new(
        q.rows()
            .iter()
            .map(|r| FiniteMeasure::from_unnormalized(r.weights().iter().map(|w| w + 0.05).collect()))
            .collect::<Result<_>>()?,
    )?;
    // D(P_{Y|XZ} || Q_{Y|Z} | P_{XZ}) = I(X; Y | Z) + D(P_{Y|Z} || Q_{Y|Z} | P_Z)
    let xz = joint3.xz_marginal();
    let yz = joint3.yz_marginal();
    let z = joint3.z_marginal();
    let row = |cells: Vec<f64>| -> Result<FiniteMeasure> {
        if cells.iter().sum::<f64>() > 0.0 {
            FiniteMeasure::from_unnormalized(cells)
        } else {
            FiniteMeasure::uniform(ny)
        }
    };
    let mut p_y_xz = Vec::with_capacity(nx * nz);
    let mut q_y_xz = Vec::with_capacity(nx * nz);
    for x in 0..nx {
        for k in 0..nz {
            p_y_xz.push(row((0..ny).map(|y| joint3.get(x, y, k)).collect())?);
            q_y_xz.push(q.row(k).clone());
        }
    }
    let p_y_z: Vec<FiniteMeasure> = (0..nz)
        .map(|k| row((0..ny).map(|y| yz[y * nz + k]).collect()))
        .collect::<Result<_>>()?;
    let lhs = conditional_divergence(
        &MarkovKernel::new(p_y_xz)?,
        &MarkovKernel::new(q_y_xz)?,
        &FiniteMeasure::new(xz)?,
    )?;
    let rhs = conditional_mutual_information(&joint3) + conditional_divergence(&MarkovKernel::new(p_y_z)?, &q, &z)?;
    let second = (
        (lhs - rhs).abs(),
        json!({ "check": "conditional_golden", "dims": dims, "joint": weights, "q_y_given_z": q.rows().iter().map(|r| r.weights()).collect::<Vec<_>>() }),
    );
    Ok(vec![first, second])
}

/// Relative deviation from `W_2(rho_s, rho_t) = (t - s) W_2(mu, nu)` over
/// every pair of slices of a random Euclidean geodesic.
fn transport_trial<R: Rng>(rng: &mut R) -> Result<Vec<Check>> {
    let len = rng.random_range(1..=MAX_SUPPORT);
    let dim = rng.random_range(1..=3);
    let points: Vec<Vec<f64>> = (0..len).map(|_| values(rng, dim, 1.0)).collect();
    let emb = EmbeddedSupport::new(dim, points.clone())?;
    let mu = random_sparse_measure(rng, len, 0.4);
    let nu = random_sparse_measure(rng, len, 0.4);
    let mut times: Vec<f64> = (0..rng.random_range(0..=3)).map(|_| rng.random::<f64>()).collect();
    times.push(0.0);
    times.push(1.0);
    times.sort_by(f64::total_cmp);
    times.dedup();
    let geo = geodesic(&mu, &nu, &emb, &times)?;
    let mut violation = 0.0f64;
    for a in 0..geo.steps.len() {
        for b in a + 1..geo.steps.len() {
            let (sa, sb) = (&geo.steps[a], &geo.steps[b]);
            let cost = CostMatrix::euclidean(&sa.support, &sb.support)?;
            let (w, _) = wasserstein(&sa.measure, &sb.measure, &cost, 2.0)?;
            let expected = (sb.t - sa.t) * geo.distance;
            let dev = (w - expected).abs();
            violation = violation.max(if geo.distance > 0.0 { dev / geo.distance } else { dev });
        }
    }
    Ok(vec![(
        violation,
        json!({ "points": points, "mu": mu.weights(), "nu": nu.weights(), "times": times }),
    )])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_trials_pass_vacuously() {
        for suite in Suite::ALL {
            let s = run_suite(suite, 0, 1, None).unwrap();
            assert!(s.passed);
            assert_eq!(s.max_violation, None);
        }
    }

    #[test]
    fn small_runs_pass_and_repeat() {
        for suite in Suite::ALL {
            let a = run_suite(suite, 40, 9, None).unwrap();
            assert!(a.passed, "{a:?}");
            assert_eq!(a, run_suite(suite, 40, 9, None).unwrap());
        }
    }

    #[test]
    fn negative_tolerance_is_a_config_error() {
        assert!(matches!(
            run_suite(Suite::Lemma, 1, 0, Some(-1.0)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn suite_names_roundtrip() {
        for suite in Suite::ALL {
            assert_eq!(suite.name().parse::<Suite>().unwrap(), suite);
        }
        assert!("all".parse::<Suite>().is_err());
    }
}
