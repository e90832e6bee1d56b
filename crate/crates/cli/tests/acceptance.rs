//! The acceptance criteria, each at its stated tolerance and time limit.
//! Prints one pass/fail line per criterion; run with `--nocapture` to see
//! them.

use std::process::Command;
use std::time::{Duration, Instant};

use genbound::bounds::*;
use genbound::learning::{sample_law, AlgorithmSpec};
use genbound::mc::McConfig;
use genbound::measures::FiniteMeasure;
use genbound::suite::{suite_algorithms, suite_problem, suite_space, ProblemShape};
use genbound::suprema::{expected_sup_mc, ft_bound, gaussian_from_metric, optimize_mu, MuSearch, Selector};
use genbound::verify::{run_suite, Suite};
use rayon::prelude::*;

const SEED: u64 = 20_241_015;
const PROBLEMS: u64 = 200;

struct Outcome {
    ok: bool,
    detail: String,
}

fn suite_criterion(suite: Suite, trials: u64, tol: f64) -> Outcome {
    let s = run_suite(suite, trials, SEED, Some(tol)).expect("suite runs");
    Outcome {
        ok: s.passed && s.trials == trials,
        detail: format!("{} trials, max violation {:?} (tol {tol:e})", s.trials, s.max_violation),
    }
}

/// Every (problem, algorithm) pair of the seeded domination suite.
fn pairs() -> Vec<(u64, AlgorithmSpec)> {
    (0..PROBLEMS)
        .flat_map(|i| suite_algorithms().into_iter().map(move |(_, spec)| (i, spec)))
        .collect()
}

fn domination() -> Outcome {
    let shape = ProblemShape::default();
    let results: Vec<(usize, f64, Option<String>)> = pairs()
        .par_iter()
        .map(|(i, spec)| {
            let prob = suite_problem(SEED, *i, shape).unwrap();
            let alg = spec.materialize(&prob).unwrap();
            let plain: Vec<_> = BoundFamily::ALL
                .into_iter()
                .filter(|f| !matches!(f, BoundFamily::Transductive | BoundFamily::Wass))
                .collect();
            let mut reports = evaluate_exact(&prob, &alg, &plain, &FamilyOptions::default()).unwrap();
            for k in [1, 2, 4] {
                reports.push(bound_wasserstein_geodesic(&prob, &alg, k).unwrap());
            }
            let worst = reports.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min);
            let bad = reports
                .iter()
                .find(|r| r.slack.is_nan() || r.slack < -1e-9)
                .map(|r| format!("problem {i} {spec:?} {}: slack {}", r.bound_name, r.slack));
            (reports.len(), worst, bad)
        })
        .collect();
    let evaluations: usize = results.iter().map(|r| r.0).sum();
    let worst = results.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let bad: Vec<_> = results.into_iter().filter_map(|r| r.2).collect();
    Outcome {
        ok: bad.is_empty(),
        detail: format!(
            "{evaluations} evaluations, min slack {worst:e}{}",
            bad.first().map_or(String::new(), |b| format!(", first failure {b}"))
        ),
    }
}

fn zero_cases() -> Outcome {
    let shape = ProblemShape::default();
    let mut worst = 0.0f64;
    let mut checked = 0;
    for i in 0..PROBLEMS {
        let prob = suite_problem(SEED, i, shape).unwrap();
        let nw = prob.hypotheses();
        let skewed: Vec<f64> = (0..nw).map(|w| 1.0 + w as f64).collect();
        let sum: f64 = skewed.iter().sum();
        for spec in [
            AlgorithmSpec::Gibbs { beta: 0.0, prior: None },
            AlgorithmSpec::Ignore {
                prior: Some(skewed.iter().map(|w| w / sum).collect()),
            },
        ] {
            let alg = spec.materialize(&prob).unwrap();
            let q = alg.kernel().mix(&sample_law(&prob).unwrap()).unwrap();
            let couplings = default_couplings(&prob, &alg, &q).unwrap();
            let mu = mixture_reference(&prob, &couplings).unwrap();
            worst = worst.max(bound_coupling(&prob, &alg, &q, &couplings, &mu).unwrap().rhs.abs());
            for k in [1, 2, 4] {
                worst = worst.max(bound_wasserstein_geodesic(&prob, &alg, k).unwrap().rhs.abs());
            }
            let cmi = bound_cmi(&prob, &alg).unwrap();
            worst = worst.max(cmi.diagnostic("conditional_mutual_information").unwrap().abs());
            checked += 1;
        }
    }
    Outcome {
        ok: worst <= 1e-12,
        detail: format!("{checked} data-ignoring cases, largest term {worst:e}"),
    }
}

fn cmi_ceiling() -> Outcome {
    let shape = ProblemShape::default();
    let excess: Vec<f64> = pairs()
        .par_iter()
        .map(|(i, spec)| {
            let prob = suite_problem(SEED, *i, shape).unwrap();
            let r = bound_cmi(&prob, &spec.materialize(&prob).unwrap()).unwrap();
            r.diagnostic("conditional_mutual_information").unwrap() - prob.n() as f64 * std::f64::consts::LN_2
        })
        .collect();
    let worst = excess.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Outcome {
        ok: excess.iter().all(|e| *e <= 1e-12),
        detail: format!("{} cases, max I - n log 2 = {worst:e}", excess.len()),
    }
}

fn tails() -> Outcome {
    let shape = ProblemShape::default();
    let results: Vec<(f64, Option<String>)> = pairs()
        .par_iter()
        .map(|(i, spec)| {
            let prob = suite_problem(SEED, *i, shape).unwrap();
            let alg = spec.materialize(&prob).unwrap();
            let mut worst = 0.0f64;
            let mut bad = None;
            for delta in [0.05, 0.1, 0.25] {
                let opts = FamilyOptions {
                    delta,
                    ..FamilyOptions::default()
                };
                for r in evaluate_tails_exact(&prob, &alg, &opts).unwrap() {
                    worst = worst.max(r.lhs / delta);
                    if r.lhs > delta {
                        bad.get_or_insert(format!(
                            "problem {i} {spec:?} {} delta {delta}: {}",
                            r.bound_name, r.lhs
                        ));
                    }
                }
            }
            (worst, bad)
        })
        .collect();
    let worst = results.iter().map(|r| r.0).fold(0.0, f64::max);
    let bad: Vec<_> = results.into_iter().filter_map(|r| r.1).collect();
    Outcome {
        ok: bad.is_empty(),
        detail: format!(
            "{} cases x 3 levels x 3 bounds, max violation / delta {worst:.4}{}",
            PROBLEMS * 4,
            bad.first().map_or(String::new(), |b| format!(", first failure {b}"))
        ),
    }
}

fn majorizing_measure() -> Outcome {
    let search = MuSearch::ExponentiatedGradient { iters: 200, step: 0.3 };
    let rows: Vec<(bool, bool, f64)> = (0..50u64)
        .into_par_iter()
        .map(|i| {
            let space = suite_space(SEED, i, 16).unwrap();
            let proc = gaussian_from_metric(&space, 2.0).unwrap();
            let est = expected_sup_mc(&proc, &space, &Selector::Argmax, McConfig::new(100_000, SEED + i)).unwrap();
            let nu = FiniteMeasure::from_unnormalized(est.selector_law.clone()).unwrap();
            let uniform = ft_bound(&FiniteMeasure::uniform(space.size()).unwrap(), &nu, &space, 2.0).unwrap();
            let (_, optimized) = optimize_mu(&nu, &space, 2.0, search, SEED + i).unwrap();
            (
                est.mean <= uniform + 4.0 * est.stderr,
                optimized <= uniform,
                est.mean / uniform,
            )
        })
        .collect();
    let ratio = rows.iter().map(|r| r.2).fold(0.0, f64::max);
    Outcome {
        ok: rows.iter().all(|r| r.0 && r.1),
        detail: format!(
            "50 spaces, {} MC below bound, {} optimized within baseline, max mc/bound {ratio:.4}",
            rows.iter().filter(|r| r.0).count(),
            rows.iter().filter(|r| r.1).count()
        ),
    }
}

fn run_cli(args: &[&str], workers: &str) -> (Option<i32>, Vec<u8>) {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let status = Command::new(env!("CARGO_BIN_EXE_genbound"))
        .args(args)
        .args(["--seed", "7", "--workers", workers, "--out"])
        .arg(&out)
        .env_remove("GENBOUND_SEED")
        .status()
        .unwrap();
    (status.code(), std::fs::read(&out).unwrap_or_default())
}

fn determinism() -> Outcome {
    let commands: [&[&str]; 4] = [
        &["verify", "--suite", "all", "--trials", "500"],
        &["bounds", "--trials", "40"],
        &["tail", "--trials", "40"],
        &["ft", "--trials", "10", "--mc-samples", "20000", "--mu-mode", "both"],
    ];
    let mut same = 0;
    let mut failures = Vec::new();
    for args in commands {
        let (c1, a) = run_cli(args, "1");
        let (c8, b) = run_cli(args, "8");
        if c1 == Some(0) && c8 == Some(0) && !a.is_empty() && a == b {
            same += 1;
        } else {
            failures.push(args[0]);
        }
    }
    Outcome {
        ok: failures.is_empty(),
        detail: format!(
            "{same}/4 commands byte-identical across 1 and 8 workers{}",
            if failures.is_empty() {
                String::new()
            } else {
                format!(", differing: {failures:?}")
            }
        ),
    }
}

#[test]
fn acceptance_criteria() {
    type Criterion = (u32, &'static str, Duration, fn() -> Outcome);
    let criteria: [Criterion; 10] = [
        (1, "decorrelation lemma suite", Duration::from_secs(10), || {
            suite_criterion(Suite::Lemma, 10_000, 1e-12)
        }),
        (2, "psi_p calculus suites", Duration::from_secs(10), || {
            suite_criterion(Suite::Psi, 10_000, 1e-12)
        }),
        (3, "golden formulas", Duration::from_secs(5), || {
            suite_criterion(Suite::Golden, 1_000, 1e-9)
        }),
        (4, "domination suite", Duration::from_secs(300), domination),
        (5, "zero cases", Duration::MAX, zero_cases),
        (6, "CMI ceiling", Duration::MAX, cmi_ceiling),
        (7, "tail bounds", Duration::from_secs(300), tails),
        (8, "geodesic property", Duration::MAX, || {
            suite_criterion(Suite::Transport, 100, 1e-6)
        }),
        (
            9,
            "majorizing-measure bound",
            Duration::from_secs(120),
            majorizing_measure,
        ),
        (10, "determinism", Duration::MAX, determinism),
    ];
    let mut failed = Vec::new();
    for (id, name, limit, run) in criteria {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let ok = outcome.ok && elapsed <= limit;
        let limit = if limit == Duration::MAX {
            String::new()
        } else {
            format!(" (limit {limit:?})")
        };
        println!(
            "criterion {id:>2} {}: {name}: {}; {elapsed:.2?}{limit}",
            if ok { "PASS" } else { "FAIL" },
            outcome.detail
        );
        if !ok {
            failed.push(id);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
