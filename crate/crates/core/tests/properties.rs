//! Randomized invariants.

use genbound::bounds::*;
use genbound::learning::*;
use genbound::measures::*;
use genbound::orlicz::*;
use genbound::suite::{random_measure, suite_problem, suite_rng, ProblemShape};
use genbound::transport::{wasserstein, CostMatrix, EmbeddedSupport};
use proptest::prelude::*;

fn measure(w: Vec<f64>) -> FiniteMeasure {
    FiniteMeasure::from_unnormalized(w).unwrap()
}

fn exponent() -> impl Strategy<Value = f64> {
    prop::sample::select(vec![1.0, 1.5, 2.0, 3.0])
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300) || a == b
}

/// Relative closeness, with quantities below rounding of the loss scale
/// `unit` counted as zero.
fn scaled_close(a: f64, b: f64, unit: f64) -> bool {
    rel_close(a, b, 1e-9) || (a - b).abs() <= 1e-12 * unit
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn divergence_is_nonnegative_and_vanishes_on_the_diagonal(pair in (1usize..8).prop_flat_map(|n| {
        (prop::collection::vec(0.01f64..1.0, n), prop::collection::vec(0.01f64..1.0, n))
    })) {
        let (a, b) = (measure(pair.0), measure(pair.1));
        prop_assert!(kl_divergence(&a, &b).unwrap() >= 0.0);
        prop_assert!(kl_divergence(&a, &a).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn product_then_marginals_recover_the_inputs(
        rows in 1usize..5,
        cols in 1usize..5,
        seed in any::<u64>(),
    ) {
        let mut rng = suite_rng(seed, 0);
        let p_x = random_measure(&mut rng, rows, 0.05);
        let k = MarkovKernel::new((0..rows).map(|_| random_measure(&mut rng, cols, 0.05)).collect()).unwrap();
        let joint = product(&p_x, &k).unwrap();
        for (a, b) in joint.row_marginal().weights().iter().zip(p_x.weights()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        for (ra, rb) in joint.conditional().rows().iter().zip(k.rows()) {
            for (a, b) in ra.weights().iter().zip(rb.weights()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn psi_and_its_inverse_roundtrip(x in 0.0f64..50.0, p in exponent()) {
        let y = psi_inv(psi(x, p).unwrap(), p).unwrap();
        prop_assert!(rel_close(y, x, 1e-10) || (x < 1e-10 && y < 1e-10));
    }

    #[test]
    fn orlicz_norm_is_homogeneous(
        vals in prop::collection::vec(-5.0f64..5.0, 1..6),
        a in 0.01f64..100.0,
        p in exponent(),
    ) {
        let law = FiniteMeasure::uniform(vals.len()).unwrap();
        let x = DiscreteRandomVariable::new(vals, law).unwrap();
        let base = orlicz_norm(&x, p).unwrap();
        prop_assert!(rel_close(orlicz_norm(&x.scaled(a), p).unwrap(), a * base, 1e-9));
    }

    #[test]
    fn bounded_two_point_variables_meet_the_subgaussian_norm_bound(lo in -3.0f64..0.0, hi in 0.0f64..3.0, w in 0.01f64..0.99) {
        // Centered two-point variable on [lo, hi], sigma = range / 2.
        let mean = w * lo + (1.0 - w) * hi;
        let x = DiscreteRandomVariable::new(vec![lo - mean, hi - mean], FiniteMeasure::new(vec![w, 1.0 - w]).unwrap()).unwrap();
        let sigma = (hi - lo) / 2.0;
        prop_assert!(orlicz_norm(&x, 2.0).unwrap() <= 6f64.sqrt() * sigma + 1e-12);
    }

    #[test]
    fn decorrelation_holds(
        inst in (1usize..=8).prop_flat_map(|n| (
            prop::collection::vec(0.0f64..1.0, n),
            prop::collection::vec(0.01f64..1.0, n),
            prop::collection::vec(0.0f64..10.0, n),
            prop::collection::vec(0.0f64..3.0, n),
        )),
        p in exponent(),
    ) {
        let (mut mu, nu, f, g) = inst;
        mu[0] += 0.01;
        let t = decorrelation_terms(&measure(mu), &measure(nu), &f, &g, p).unwrap();
        prop_assert!(t.lhs <= t.rhs1 + 1e-12 && t.lhs <= t.rhs2 + 1e-12, "{t:?}");
    }

    #[test]
    fn change_of_measure_moment_is_below_its_divergence_bound(
        pair in (1usize..8).prop_flat_map(|n| (prop::collection::vec(0.0f64..1.0, n), prop::collection::vec(0.01f64..1.0, n))),
        p in exponent(),
    ) {
        let (mut mu, nu) = pair;
        mu[0] += 0.01;
        let (lhs, rhs) = check_psi_kl(&measure(mu), &measure(nu), p).unwrap();
        prop_assert!(lhs <= rhs + 1e-12);
    }

    #[test]
    fn wasserstein_is_a_metric_below_its_quadratic_version(
        pts in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 2), 1..6),
        seed in any::<u64>(),
    ) {
        let n = pts.len();
        let emb = EmbeddedSupport::new(2, pts).unwrap();
        let cost = CostMatrix::euclidean(&emb, &emb).unwrap();
        let mut rng = suite_rng(seed, 1);
        let [a, b, c] = [0, 1, 2].map(|_| random_measure(&mut rng, n, 0.0));
        let w = |x: &FiniteMeasure, y: &FiniteMeasure, p: f64| wasserstein(x, y, &cost, p).unwrap().0;
        prop_assert!(w(&a, &c, 2.0) <= w(&a, &b, 2.0) + w(&b, &c, 2.0) + 1e-8);
        prop_assert!(w(&a, &b, 1.0) <= w(&a, &b, 2.0) + 1e-9);
        let (_, plan) = wasserstein(&a, &b, &cost, 2.0).unwrap();
        for i in 0..n {
            let row: f64 = (0..n).map(|j| plan.get(i, j)).sum();
            let col: f64 = (0..n).map(|j| plan.get(j, i)).sum();
            prop_assert!((row - a[i]).abs() <= 1e-9 && (col - b[i]).abs() <= 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Scaling the losses by `a` while keeping the algorithm's kernel scales
    /// every side of every expectation bound by `a`, and leaves failure
    /// probabilities unchanged.
    #[test]
    fn bounds_are_homogeneous_in_loss_units(seed in any::<u64>(), a in 0.05f64..20.0, beta in 0.0f64..10.0) {
        let prob = suite_problem(seed, 0, ProblemShape::default()).unwrap();
        let scaled = prob.scaled(a).unwrap();
        let plain: Vec<_> = BoundFamily::ALL.into_iter().filter(|f| *f != BoundFamily::Transductive).collect();
        let opts = FamilyOptions::default();
        for spec in [AlgorithmSpec::Erm, AlgorithmSpec::Gibbs { beta, prior: None }] {
            let alg = spec.materialize(&prob).unwrap();
            let alg_scaled = Algorithm::new(&scaled, alg.kernel().clone()).unwrap();
            let base = evaluate_exact(&prob, &alg, &plain, &opts).unwrap();
            let other = evaluate_exact(&scaled, &alg_scaled, &plain, &opts).unwrap();
            for (r, s) in base.iter().zip(&other) {
                prop_assert_eq!(&r.bound_name, &s.bound_name);
                prop_assert!(scaled_close(s.lhs, a * r.lhs, a), "{} lhs {} vs {}", r.bound_name, s.lhs, a * r.lhs);
                prop_assert!(scaled_close(s.rhs, a * r.rhs, a), "{} rhs {} vs {}", r.bound_name, s.rhs, a * r.rhs);
            }
            let base = evaluate_tails_exact(&prob, &alg, &opts).unwrap();
            let other = evaluate_tails_exact(&scaled, &alg_scaled, &opts).unwrap();
            for (r, s) in base.iter().zip(&other) {
                prop_assert!((r.lhs - s.lhs).abs() <= 1e-12, "{}", r.bound_name);
            }
        }
    }

    #[test]
    fn every_bound_dominates_on_random_problems(seed in any::<u64>()) {
        let prob = suite_problem(seed, 0, ProblemShape::default()).unwrap();
        for beta in [0.0, 1.0, 10.0] {
            let reports = evaluate_family(&prob, &AlgorithmSpec::Gibbs { beta, prior: None }, &BoundFamily::ALL, &FamilyOptions::default()).unwrap();
            for r in reports {
                prop_assert!(r.holds(1e-9), "{r:?}");
            }
        }
    }

    #[test]
    fn enumeration_and_monte_carlo_agree(seed in any::<u64>()) {
        let prob = suite_problem(seed, 0, ProblemShape::default()).unwrap();
        let spec = AlgorithmSpec::Gibbs { beta: 1.0, prior: None };
        let exact = expected_gen(&prob, &spec.materialize(&prob).unwrap()).unwrap();
        let mc = expected_gen_mc(&prob, &spec, genbound::mc::McConfig::new(20_000, seed)).unwrap();
        prop_assert!((mc.absolute - exact.absolute).abs() <= 4.0 * mc.absolute_stderr + 1e-12, "{mc:?} vs {exact:?}");
    }
}
