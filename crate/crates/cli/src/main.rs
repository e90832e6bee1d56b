//! `genbound`: batch runner and verification harness.
//!
//! Exit codes: 0 when every check passes, 1 when a bound or property is
//! violated, 2 on configuration errors.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Deserialize;

use genbound::bounds::{evaluate_family, evaluate_tails, BoundFamily, BoundReport, FamilyOptions, Mode};
use genbound::learning::{AlgorithmSpec, LearningProblem, ProblemConfig};
use genbound::mc::McConfig;
use genbound::measures::FiniteMeasure;
use genbound::suite::{suite_algorithms, suite_problem, suite_space, ProblemShape};
use genbound::suprema::{
    expected_sup_mc, ft_bound, gaussian_from_metric, optimize_mu, FiniteMetricSpace, MuSearch, ProcessSpec, Selector,
};
use genbound::verify::{run_suite, Suite, SuiteSummary};

/// Slack below which an expectation bound counts as violated.
const SLACK_TOL: f64 = 1e-9;

#[derive(Parser)]
#[command(
    name = "genbound",
    version,
    about = "Exact generalization bounds on finite learning problems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Seed of every random choice; overrides GENBOUND_SEED.
    #[arg(long, env = "GENBOUND_SEED", default_value_t = 1)]
    seed: u64,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; the output does not depend on it.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the property suites and write a JSON summary.
    Verify {
        /// Suite to run.
        #[arg(long, value_enum, default_value_t = SuiteArg::All)]
        suite: SuiteArg,
        /// Trials per suite; each suite has its own default.
        #[arg(long)]
        trials: Option<u64>,
        /// Pass threshold on the worst violation; each suite has its own default.
        #[arg(long)]
        tol: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate expectation bounds and write one CSV row per problem and bound.
    Bounds {
        /// Problem file; the seeded random suite when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated bound families.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "thm1,mi,cmi,coupling,chain,stochain,wass,transductive"
        )]
        bounds: Vec<String>,
        /// Confidence levels of the transductive bound.
        #[arg(long, value_delimiter = ',', default_value = "0.1")]
        delta: Vec<f64>,
        /// Monte Carlo samples for problems above the enumeration cap.
        #[arg(long)]
        mc_samples: Option<u64>,
        /// Number of suite problems when no config is given.
        #[arg(long, default_value_t = 200)]
        trials: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate the high-probability bounds by their exact failure probability.
    Tail {
        /// Problem file; the seeded random suite when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated confidence levels.
        #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.25")]
        delta: Vec<f64>,
        /// Monte Carlo samples for problems above the enumeration cap.
        #[arg(long)]
        mc_samples: Option<u64>,
        /// Number of suite problems when no config is given.
        #[arg(long, default_value_t = 200)]
        trials: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Compare the majorizing-measure bound with a Monte Carlo supremum.
    Ft {
        /// Space or space-and-process file; the seeded space suite when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Increment exponent of the calibrated gaussian process.
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        /// Majorizing measure: uniform, optimized from uniform, or both rows.
        #[arg(long, value_enum, default_value_t = MuMode::Uniform)]
        mu_mode: MuMode,
        /// Monte Carlo samples of the supremum per space.
        #[arg(long, default_value_t = 100_000)]
        mc_samples: u64,
        /// Number of suite spaces when no config is given.
        #[arg(long, default_value_t = 50)]
        trials: u64,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SuiteArg {
    Lemma,
    Psi,
    Golden,
    Transport,
    All,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MuMode {
    Uniform,
    Optimized,
    Both,
}

enum Outcome {
    Pass,
    Violation,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Violation) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    let workers = match &cli.command {
        Command::Verify { common, .. }
        | Command::Bounds { common, .. }
        | Command::Tail { common, .. }
        | Command::Ft { common, .. } => common.workers,
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        if w == 0 {
            bail!("--workers must be positive");
        }
        pool = pool.num_threads(w);
    }
    let pool = pool.build().context("building the worker pool")?;
    pool.install(|| match cli.command {
        Command::Verify {
            suite,
            trials,
            tol,
            common,
        } => cmd_verify(suite, trials, tol, &common),
        Command::Bounds {
            config,
            bounds,
            delta,
            mc_samples,
            trials,
            common,
        } => {
            let families = parse_families(&bounds)?;
            cmd_bounds(config.as_deref(), &families, &delta, mc_samples, trials, &common)
        }
        Command::Tail {
            config,
            delta,
            mc_samples,
            trials,
            common,
        } => cmd_tail(config.as_deref(), &delta, mc_samples, trials, &common),
        Command::Ft {
            config,
            p,
            mu_mode,
            mc_samples,
            trials,
            common,
        } => cmd_ft(config.as_deref(), p, mu_mode, mc_samples, trials, &common),
    })
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> anyhow::Result<()> {
    match out {
        Some(path) => fs::write(path, bytes).with_context(|| format!("writing {}", path.display())),
        None => std::io::stdout().write_all(bytes).context("writing to standard output"),
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn float(x: f64) -> String {
    format!("{x:.16e}")
}

fn outcome(ok: bool) -> Outcome {
    if ok {
        Outcome::Pass
    } else {
        Outcome::Violation
    }
}

fn cmd_verify(suite: SuiteArg, trials: Option<u64>, tol: Option<f64>, common: &Common) -> anyhow::Result<Outcome> {
    let suites: Vec<Suite> = match suite {
        SuiteArg::Lemma => vec![Suite::Lemma],
        SuiteArg::Psi => vec![Suite::Psi],
        SuiteArg::Golden => vec![Suite::Golden],
        SuiteArg::Transport => vec![Suite::Transport],
        SuiteArg::All => Suite::ALL.to_vec(),
    };
    let summaries: Vec<SuiteSummary> = suites
        .iter()
        .map(|s| run_suite(*s, trials.unwrap_or_else(|| s.default_trials()), common.seed, tol))
        .collect::<Result<_, _>>()?;
    let mut json = if summaries.len() == 1 {
        serde_json::to_vec_pretty(&summaries[0])?
    } else {
        serde_json::to_vec_pretty(&summaries)?
    };
    json.push(b'\n');
    emit(common.out.as_deref(), &json)?;
    Ok(outcome(summaries.iter().all(|s| s.passed)))
}

fn parse_families(names: &[String]) -> anyhow::Result<Vec<BoundFamily>> {
    let mut out = Vec::new();
    for name in names {
        let f: BoundFamily = name.trim().parse()?;
        if !out.contains(&f) {
            out.push(f);
        }
    }
    if out.is_empty() {
        bail!("no bounds requested");
    }
    Ok(out)
}

/// Problems to evaluate, as read from a config file.
#[derive(Deserialize)]
#[serde(untagged)]
enum ProblemInput {
    Suite { suite: SuiteInput },
    Many(Vec<ProblemConfig>),
    One(ProblemConfig),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SuiteInput {
    count: u64,
    #[serde(default)]
    max_m: Option<usize>,
    #[serde(default)]
    max_n: Option<usize>,
    #[serde(default)]
    max_hypotheses: Option<usize>,
}

struct Job {
    problem_id: u64,
    algorithm: String,
    problem: LearningProblem,
    spec: AlgorithmSpec,
}

fn algorithm_label(spec: &AlgorithmSpec) -> String {
    match spec {
        AlgorithmSpec::Gibbs { beta, .. } => format!("gibbs_{beta}"),
        AlgorithmSpec::Erm => "erm".into(),
        AlgorithmSpec::Ignore { .. } => "ignore".into(),
    }
}

fn suite_jobs(seed: u64, count: u64, shape: ProblemShape) -> anyhow::Result<Vec<Job>> {
    let mut jobs = Vec::new();
    for i in 0..count {
        let problem = suite_problem(seed, i, shape)?;
        for (name, spec) in suite_algorithms() {
            jobs.push(Job {
                problem_id: i,
                algorithm: name.into(),
                problem: problem.clone(),
                spec,
            });
        }
    }
    Ok(jobs)
}

fn load_jobs(config: Option<&Path>, trials: u64, seed: u64) -> anyhow::Result<Vec<Job>> {
    let Some(path) = config else {
        return suite_jobs(seed, trials, ProblemShape::default());
    };
    Ok(match read_json::<ProblemInput>(path)? {
        ProblemInput::Suite { suite } => {
            let d = ProblemShape::default();
            let shape = ProblemShape {
                max_m: suite.max_m.unwrap_or(d.max_m),
                max_n: suite.max_n.unwrap_or(d.max_n),
                max_hypotheses: suite.max_hypotheses.unwrap_or(d.max_hypotheses),
                ..d
            };
            if shape.max_m == 0 || shape.max_n == 0 || shape.max_hypotheses == 0 {
                bail!("suite sizes must be positive");
            }
            suite_jobs(seed, suite.count, shape)?
        }
        ProblemInput::Many(list) => list
            .into_iter()
            .enumerate()
            .map(|(i, c)| Job {
                problem_id: i as u64,
                algorithm: algorithm_label(&c.algorithm),
                problem: c.problem,
                spec: c.algorithm,
            })
            .collect(),
        ProblemInput::One(c) => vec![Job {
            problem_id: 0,
            algorithm: algorithm_label(&c.algorithm),
            problem: c.problem,
            spec: c.algorithm,
        }],
    })
}

fn check_deltas(deltas: &[f64]) -> anyhow::Result<()> {
    if deltas.is_empty() {
        bail!("no confidence level given");
    }
    if let Some(d) = deltas.iter().find(|d| !(**d > 0.0 && **d <= 1.0)) {
        bail!("confidence level {d} must lie in (0, 1]");
    }
    Ok(())
}

fn mc_config(samples: Option<u64>, seed: u64) -> anyhow::Result<Option<McConfig>> {
    match samples {
        Some(0) => bail!("--mc-samples must be positive"),
        Some(s) => Ok(Some(McConfig::new(s, seed))),
        None => Ok(None),
    }
}

const BOUND_HEADER: [&str; 12] = [
    "bound_name",
    "mode",
    "lhs",
    "rhs",
    "slack",
    "n",
    "m",
    "N",
    "seed",
    "components_json",
    "problem_id",
    "algorithm",
];

fn bound_record(job: &Job, r: &BoundReport, seed: u64) -> anyhow::Result<Vec<String>> {
    let mode = match r.mode {
        Mode::Exact => "exact",
        Mode::MonteCarlo { .. } => "mc",
    };
    Ok(vec![
        r.bound_name.clone(),
        mode.into(),
        float(r.lhs),
        float(r.rhs),
        float(r.slack),
        job.problem.n().to_string(),
        job.problem.m().to_string(),
        job.problem.hypotheses().to_string(),
        seed.to_string(),
        serde_json::to_string(&r.components)?,
        job.problem_id.to_string(),
        job.algorithm.clone(),
    ])
}

/// Evaluates every job in parallel, writes the rows in job order and
/// reports whether every row passed `tol`.
fn write_reports<F>(jobs: &[Job], seed: u64, tol: f64, out: Option<&Path>, eval: F) -> anyhow::Result<Outcome>
where
    F: Fn(&Job) -> genbound::Result<Vec<BoundReport>> + Sync,
{
    let results: Vec<Vec<BoundReport>> = jobs
        .par_iter()
        .map(|job| eval(job).with_context(|| format!("problem {} with algorithm {}", job.problem_id, job.algorithm)))
        .collect::<anyhow::Result<_>>()?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(BOUND_HEADER)?;
    let mut ok = true;
    for (job, reports) in jobs.iter().zip(&results) {
        for r in reports {
            ok &= r.holds(tol);
            w.write_record(bound_record(job, r, seed)?)?;
        }
    }
    emit(out, &w.into_inner()?)?;
    Ok(outcome(ok))
}

fn cmd_bounds(
    config: Option<&Path>,
    families: &[BoundFamily],
    deltas: &[f64],
    mc_samples: Option<u64>,
    trials: u64,
    common: &Common,
) -> anyhow::Result<Outcome> {
    check_deltas(deltas)?;
    let mc = mc_config(mc_samples, common.seed)?;
    let jobs = load_jobs(config, trials, common.seed)?;
    let plain: Vec<BoundFamily> = families
        .iter()
        .copied()
        .filter(|f| *f != BoundFamily::Transductive)
        .collect();
    let transductive = families.contains(&BoundFamily::Transductive);
    write_reports(&jobs, common.seed, SLACK_TOL, common.out.as_deref(), |job| {
        let opts = FamilyOptions {
            mc,
            ..FamilyOptions::default()
        };
        let mut reports = if plain.is_empty() {
            Vec::new()
        } else {
            evaluate_family(&job.problem, &job.spec, &plain, &opts)?
        };
        if transductive {
            for &delta in deltas {
                let opts = FamilyOptions { delta, ..opts.clone() };
                reports.extend(evaluate_family(
                    &job.problem,
                    &job.spec,
                    &[BoundFamily::Transductive],
                    &opts,
                )?);
            }
        }
        Ok(reports)
    })
}

fn cmd_tail(
    config: Option<&Path>,
    deltas: &[f64],
    mc_samples: Option<u64>,
    trials: u64,
    common: &Common,
) -> anyhow::Result<Outcome> {
    check_deltas(deltas)?;
    let mc = mc_config(mc_samples, common.seed)?;
    let jobs = load_jobs(config, trials, common.seed)?;
    // Exact failure probabilities must not exceed delta at all.
    write_reports(&jobs, common.seed, 0.0, common.out.as_deref(), |job| {
        let mut reports = Vec::new();
        for &delta in deltas {
            let opts = FamilyOptions {
                delta,
                mc,
                ..FamilyOptions::default()
            };
            reports.extend(evaluate_tails(&job.problem, &job.spec, &opts)?);
        }
        Ok(reports)
    })
}

/// A space, optionally with an explicit process.
#[derive(Deserialize)]
#[serde(untagged)]
enum SpaceInput {
    WithProcess {
        space: FiniteMetricSpace,
        process: ProcessSpec,
    },
    Space(FiniteMetricSpace),
}

/// Largest space of the seeded suite.
const SUITE_SPACE_SIZE: usize = 16;

const FT_SEARCH: MuSearch = MuSearch::ExponentiatedGradient { iters: 200, step: 0.3 };

fn cmd_ft(
    config: Option<&Path>,
    p: f64,
    mu_mode: MuMode,
    samples: u64,
    trials: u64,
    common: &Common,
) -> anyhow::Result<Outcome> {
    if samples == 0 {
        bail!("--mc-samples must be positive");
    }
    let seed = common.seed;
    let cases: Vec<(u64, FiniteMetricSpace, Option<ProcessSpec>)> = match config {
        Some(path) => match read_json::<SpaceInput>(path)? {
            SpaceInput::WithProcess { space, process } => vec![(0, space, Some(process))],
            SpaceInput::Space(space) => vec![(0, space, None)],
        },
        None => (0..trials)
            .map(|i| Ok((i, suite_space(seed, i, SUITE_SPACE_SIZE)?, None)))
            .collect::<genbound::Result<_>>()?,
    };
    let modes: &[MuMode] = match mu_mode {
        MuMode::Uniform => &[MuMode::Uniform],
        MuMode::Optimized => &[MuMode::Optimized],
        MuMode::Both => &[MuMode::Uniform, MuMode::Optimized],
    };
    let rows: Vec<Vec<(MuMode, f64, f64, f64)>> = cases
        .par_iter()
        .map(|(id, space, process)| -> anyhow::Result<_> {
            let process = match process {
                Some(proc) => proc.clone(),
                None => gaussian_from_metric(space, p)?,
            };
            let est = expected_sup_mc(&process, space, &Selector::Argmax, McConfig::new(samples, seed))
                .with_context(|| format!("space {id}"))?;
            let nu = FiniteMeasure::from_unnormalized(est.selector_law.clone())?;
            let p = process.p();
            modes
                .iter()
                .map(|mode| {
                    let bound = match mode {
                        MuMode::Optimized => optimize_mu(&nu, space, p, FT_SEARCH, seed)?.1,
                        _ => ft_bound(&FiniteMeasure::uniform(space.size())?, &nu, space, p)?,
                    };
                    Ok((*mode, bound, est.mean, est.stderr))
                })
                .collect()
        })
        .collect::<anyhow::Result<_>>()?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "space_id",
        "p",
        "mu_mode",
        "bound",
        "mc_mean",
        "mc_stderr",
        "samples",
        "seed",
    ])?;
    let mut ok = true;
    for ((id, _, process), rows) in cases.iter().zip(&rows) {
        let p = process.as_ref().map_or(p, ProcessSpec::p);
        for (mode, bound, mean, stderr) in rows {
            if mean - 4.0 * stderr > *bound {
                ok = false;
            }
            let mode = if *mode == MuMode::Optimized {
                "optimized"
            } else {
                "uniform"
            };
            w.write_record([
                id.to_string(),
                float(p),
                mode.to_string(),
                float(*bound),
                float(*mean),
                float(*stderr),
                samples.to_string(),
                seed.to_string(),
            ])?;
        }
    }
    emit(common.out.as_deref(), &w.into_inner()?)?;
    Ok(outcome(ok))
}
