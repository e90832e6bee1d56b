//! Bounds against values derived by hand on tiny problems.

use approx::assert_relative_eq;
use genbound::bounds::*;
use genbound::learning::*;
use genbound::measures::*;
use genbound::suite::{suite_algorithms, suite_problem, ProblemShape};
use genbound::transport::{EmbeddedSupport, TransportPlan};

/// Two instances, two hypotheses with mirrored 0/1 losses, fair data.
fn mirrored(n: usize) -> LearningProblem {
    LearningProblem::new(2, n, vec![0.0, 1.0, 1.0, 0.0], FiniteMeasure::uniform(2).unwrap())
        .unwrap()
        .with_bound(1.0)
        .unwrap()
        .with_embedding(EmbeddedSupport::new(1, vec![vec![0.0], vec![1.0]]).unwrap())
        .unwrap()
}

fn p_w(prob: &LearningProblem, alg: &Algorithm) -> FiniteMeasure {
    alg.kernel().mix(&sample_law(prob).unwrap()).unwrap()
}

#[test]
fn change_of_measure_bound_for_one_sample_erm() {
    // ERM on one sample picks the hypothesis with zero loss on it, so
    // gen = 1/2 - 0 on every sample, P_W is uniform and the density is 2.
    let prob = mirrored(1);
    let alg = erm_algorithm(&prob).unwrap();
    let r = bound_thm1(&prob, &alg, &p_w(&prob, &alg)).unwrap();
    assert_relative_eq!(r.lhs, 0.5, epsilon = 1e-15);
    let sigma: f64 = 0.5;
    let expected = (12.0 * sigma * sigma).sqrt() * (3f64.ln().sqrt() + 1.0);
    assert_relative_eq!(r.rhs, expected, max_relative = 1e-14);
    assert_eq!(r.lhs_kind, LhsKind::Absolute);
}

#[test]
fn mutual_information_bound_for_one_sample_erm() {
    // W is a bijection of S, so I(W; S) = log 2.
    let prob = mirrored(1);
    let alg = erm_algorithm(&prob).unwrap();
    let r = bound_mi(&prob, &alg).unwrap();
    assert_relative_eq!(
        r.diagnostic("mutual_information").unwrap(),
        2f64.ln(),
        max_relative = 1e-14
    );
    assert_relative_eq!(r.rhs, (6.0 * (2f64.ln() + 4.0)).sqrt(), max_relative = 1e-14);
    assert!(r.diagnostic("golden_residual").unwrap() <= 1e-12);
}

#[test]
fn reference_choice_is_optimal_at_the_marginal() {
    let prob = suite_problem(3, 4, ProblemShape::default()).unwrap();
    for (_, spec) in suite_algorithms() {
        let alg = spec.materialize(&prob).unwrap();
        let mi = bound_mi(&prob, &alg).unwrap().rhs;
        let at_marginal = mi_relaxation(&prob, &alg, &p_w(&prob, &alg)).unwrap();
        assert_relative_eq!(mi, at_marginal, max_relative = 1e-12);
        let nw = prob.hypotheses();
        for a in 0..nw {
            let mut w = vec![0.2; nw];
            w[a] += 1.0;
            let q = FiniteMeasure::from_unnormalized(w).unwrap();
            assert!(mi_relaxation(&prob, &alg, &q).unwrap() >= mi - 1e-12);
        }
    }
}

#[test]
fn supersample_bound_for_a_data_ignoring_algorithm() {
    // Delta(z, z') = 1 off the diagonal, so E[Delta^2] = 1/2, and the
    // conditional mutual information vanishes.
    let prob = mirrored(1);
    let alg = ignore_algorithm(&prob, &FiniteMeasure::uniform(2).unwrap()).unwrap();
    let r = bound_cmi(&prob, &alg).unwrap();
    assert_eq!(r.diagnostic("conditional_mutual_information"), Some(0.0));
    assert_relative_eq!(r.diagnostic("expected_delta_sq").unwrap(), 0.5, epsilon = 1e-15);
    assert_relative_eq!(r.rhs, (96.0 * 0.5f64).sqrt(), max_relative = 1e-14);
    assert_relative_eq!(r.lhs, 0.5, epsilon = 1e-15);
}

#[test]
fn zero_cases_for_data_ignoring_algorithms() {
    let prob = mirrored(2);
    let prior = FiniteMeasure::new(vec![0.3, 0.7]).unwrap();
    let alg = ignore_algorithm(&prob, &prior).unwrap();
    let q = p_w(&prob, &alg);
    let couplings = default_couplings(&prob, &alg, &q).unwrap();
    let mu = mixture_reference(&prob, &couplings).unwrap();
    assert_eq!(bound_coupling(&prob, &alg, &q, &couplings, &mu).unwrap().rhs, 0.0);
    assert_eq!(
        bound_coupling_simplified(&prob, &alg, &q, &couplings, &mu).unwrap().rhs,
        0.0
    );
    for k in [1, 2, 4] {
        let r = bound_wasserstein_geodesic(&prob, &alg, k).unwrap();
        assert_eq!((r.lhs, r.rhs), (0.0, 0.0));
    }
}

#[test]
fn one_link_chain_equals_the_simplified_coupling_bound() {
    for i in 0..20 {
        let prob = suite_problem(8, i, ProblemShape::default()).unwrap();
        for (_, spec) in suite_algorithms() {
            let alg = spec.materialize(&prob).unwrap();
            let q = p_w(&prob, &alg);
            let couplings = default_couplings(&prob, &alg, &q).unwrap();
            let mu = mixture_reference(&prob, &couplings).unwrap();
            let simple = bound_coupling_simplified(&prob, &alg, &q, &couplings, &mu).unwrap();
            let chain = ChainSpec::single(&alg, &q, couplings, mu).unwrap();
            let r = bound_chain(&prob, &alg, &chain).unwrap().loss;
            assert_eq!(r.rhs.to_bits(), simple.rhs.to_bits());
            assert_eq!(r.lhs.to_bits(), simple.lhs.to_bits());
            assert_eq!(r.component("level1_density"), simple.component("density"));
            assert_eq!(r.component("level1_fluctuation"), simple.component("fluctuation"));
        }
    }
}

#[test]
fn per_sample_bound_is_constant_for_a_data_ignoring_algorithm() {
    let prob = mirrored(2);
    let prior = FiniteMeasure::new(vec![0.6, 0.4]).unwrap();
    let alg = ignore_algorithm(&prob, &prior).unwrap();
    let delta: f64 = 0.1;
    let r = bound_tail_thm6(&prob, &alg, &prior, delta).unwrap();
    let expected = (24.0 * 0.25 / 2.0f64).sqrt() * (1.0 + (2.0 / delta).ln().sqrt());
    // The density term is <P, psi^{-1}(1)> = sqrt(log 2) for every sample.
    let with_density = expected + (24.0 * 0.25 / 2.0f64).sqrt() * 2f64.ln().sqrt();
    for c in &r.cases {
        assert_relative_eq!(c.rhs, with_density, max_relative = 1e-14);
    }
    assert!(r.holds());
}

#[test]
fn pointwise_event_is_empty_without_fluctuation() {
    // Constant rows: sigma = 0 and gen = 0 on every sample.
    let prob = LearningProblem::new(
        2,
        2,
        vec![0.2, 0.2, 0.9, 0.9],
        FiniteMeasure::new(vec![0.4, 0.6]).unwrap(),
    )
    .unwrap()
    .with_bound(1.0)
    .unwrap();
    let alg = gibbs_algorithm(&prob, 1.0, &FiniteMeasure::uniform(2).unwrap()).unwrap();
    let r = tail_pointwise_check(&prob, &alg, &FiniteMeasure::uniform(2).unwrap(), 0.05).unwrap();
    assert_eq!(r.violation_probability, 0.0);
}

#[test]
fn transductive_gap_vanishes_when_the_algorithm_is_its_reference() {
    let prob = mirrored(2);
    let prior = FiniteMeasure::new(vec![0.25, 0.75]).unwrap();
    let alg = ignore_algorithm(&prob, &prior).unwrap();
    let ns = sample_law(&prob).unwrap().len();
    let diag = TransportPlan::diagonal(&prior);
    let reference = JointMeasure::new(2, 2, diag.weights().to_vec()).unwrap();
    let chain = ChainSpec::single(&alg, &prior, vec![diag; ns], reference).unwrap();
    let r = bound_transductive_thm7(&prob, &alg, &chain, &FiniteMeasure::uniform(1).unwrap(), 0.1).unwrap();
    assert!(r.cases.iter().all(|c| c.lhs == 0.0));
    assert_eq!(r.violation_probability, 0.0);
}

#[test]
fn partition_chain_dominates_the_transductive_rhs() {
    let delta = 0.1;
    for i in 0..30 {
        let prob = suite_problem(12, i, ProblemShape::default()).unwrap();
        for (_, spec) in suite_algorithms() {
            let alg = spec.materialize(&prob).unwrap();
            let pc = partition_chain(&prob, &alg, &Partition::binary_hierarchy(prob.hypotheses())).unwrap();
            let prior = FiniteMeasure::uniform(prob.hypotheses()).unwrap();
            let chain = ChainSpec::from_projection(&pc, &prior).unwrap();
            let p_k = FiniteMeasure::uniform(chain.links()).unwrap();
            let t7 = bound_transductive_thm7(&prob, &alg, &chain, &p_k, delta).unwrap();
            let direct = partition_chain_tail_rhs(&prob, &alg, &pc, &prior, &p_k, delta).unwrap();
            assert_eq!(direct.len(), t7.cases.len());
            for (a, c) in direct.iter().zip(&t7.cases) {
                assert!(*a >= c.rhs - 1e-12 * c.rhs.abs().max(1.0), "{a} < {}", c.rhs);
            }
        }
    }
}

#[test]
fn partition_projections_satisfy_the_markov_property() {
    for i in 0..20 {
        let prob = suite_problem(2, i, ProblemShape::default()).unwrap();
        let alg = gibbs_algorithm(&prob, 10.0, &FiniteMeasure::uniform(prob.hypotheses()).unwrap()).unwrap();
        let pc = partition_chain(&prob, &alg, &Partition::binary_hierarchy(prob.hypotheses())).unwrap();
        assert!(pc.markov_residual <= 1e-12);
        assert_eq!(pc.kernels.last().unwrap(), alg.kernel());
    }
}

#[test]
fn geodesic_bound_holds_for_every_step_count() {
    let prob = LearningProblem::new(
        2,
        2,
        vec![0.0, 1.0, 0.5, 0.5, 1.0, 0.0],
        FiniteMeasure::new(vec![0.4, 0.6]).unwrap(),
    )
    .unwrap()
    .with_bound(1.0)
    .unwrap()
    .with_embedding(EmbeddedSupport::new(2, vec![vec![0.0, 0.0], vec![0.5, 0.1], vec![1.0, 0.0]]).unwrap())
    .unwrap();
    for beta in [1.0, 10.0] {
        let alg = gibbs_algorithm(&prob, beta, &FiniteMeasure::uniform(3).unwrap()).unwrap();
        for k in [1, 2, 4] {
            let r = bound_wasserstein_geodesic(&prob, &alg, k).unwrap();
            assert!(r.slack >= 0.0, "beta {beta} K {k}: {r:?}");
            assert_eq!(r.components.len(), k + 1);
        }
    }
}

#[test]
fn conditional_mutual_information_respects_its_ceiling() {
    for i in 0..50 {
        let prob = suite_problem(21, i, ProblemShape::default()).unwrap();
        for (_, spec) in suite_algorithms() {
            let r = bound_cmi(&prob, &spec.materialize(&prob).unwrap()).unwrap();
            let cmi = r.diagnostic("conditional_mutual_information").unwrap();
            assert!(cmi <= r.diagnostic("cmi_ceiling").unwrap() + 1e-12);
            assert!(r.diagnostic("golden_residual").unwrap() <= 1e-9);
        }
    }
}
