//! Finite learning problems: losses, risks, algorithms as Markov kernels over
//! enumerated samples, the supersample construction and the Monte Carlo
//! fallback for problems too large to enumerate.
//!
//! Samples of size `n` over `Z = {0, .., m-1}` are enumerated
//! lexicographically with the first coordinate most significant, so sample
//! `s` has index `sum_i s_i m^(n-1-i)`.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mc::{self, McConfig};
use crate::measures::{conditional_mutual_information, FiniteMeasure, JointMeasure, JointMeasure3, MarkovKernel};
use crate::transport::EmbeddedSupport;

/// Default limit on enumerated joint cells.
pub const DEFAULT_CAP: u128 = 1_000_000;

/// A finite instance space, hypothesis space, loss and data law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProblemRepr", into = "ProblemRepr")]
pub struct LearningProblem {
    m: usize,
    hypotheses: usize,
    n: usize,
    /// Row-major `hypotheses x m`.
    loss: Vec<f64>,
    p_z: FiniteMeasure,
    bound: Option<f64>,
    sigma: Option<f64>,
    embedding: Option<EmbeddedSupport>,
    cap: u128,
}

#[derive(Serialize, Deserialize)]
struct ProblemRepr {
    m: usize,
    #[serde(rename = "N")]
    hypotheses: usize,
    n: usize,
    loss: Vec<Vec<f64>>,
    p_z: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    embedding: Option<EmbeddedSupport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cap: Option<u64>,
}

impl TryFrom<ProblemRepr> for LearningProblem {
    type Error = Error;
    fn try_from(r: ProblemRepr) -> Result<Self> {
        if r.loss.len() != r.hypotheses || r.loss.iter().any(|row| row.len() != r.m) {
            return Err(Error::Config(format!(
                "loss must be an N x m = {} x {} matrix",
                r.hypotheses, r.m
            )));
        }
        let mut prob = LearningProblem::new(
            r.m,
            r.n,
            r.loss.into_iter().flatten().collect(),
            FiniteMeasure::new(r.p_z)?,
        )?;
        if let Some(b) = r.bound {
            prob = prob.with_bound(b)?;
        }
        if let Some(s) = r.sigma {
            prob = prob.with_sigma(s)?;
        }
        if let Some(e) = r.embedding {
            prob = prob.with_embedding(e)?;
        }
        if let Some(c) = r.cap {
            prob = prob.with_cap(c as u128);
        }
        Ok(prob)
    }
}

impl From<LearningProblem> for ProblemRepr {
    fn from(p: LearningProblem) -> Self {
        ProblemRepr {
            m: p.m,
            hypotheses: p.hypotheses,
            n: p.n,
            loss: p.loss.chunks(p.m).map(<[f64]>::to_vec).collect(),
            p_z: p.p_z.into_weights(),
            bound: p.bound,
            sigma: p.sigma,
            embedding: p.embedding,
            cap: (p.cap != DEFAULT_CAP).then_some(p.cap as u64),
        }
    }
}

impl LearningProblem {
    /// `loss` is row-major with one row of length `m` per hypothesis.
    pub fn new(m: usize, n: usize, loss: Vec<f64>, p_z: FiniteMeasure) -> Result<Self> {
        if m == 0 || n == 0 || loss.is_empty() || !loss.len().is_multiple_of(m) {
            return Err(Error::Config(format!(
                "need m >= 1, n >= 1 and a loss table with rows of length m; got m = {m}, n = {n}, {} entries",
                loss.len()
            )));
        }
        if p_z.len() != m {
            return Err(Error::Config(format!("data law over {} points for m = {m}", p_z.len())));
        }
        if let Some(v) = loss.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Config(format!("loss value {v} is not finite and nonnegative")));
        }
        Ok(Self {
            m,
            hypotheses: loss.len() / m,
            n,
            loss,
            p_z,
            bound: None,
            sigma: None,
            embedding: None,
            cap: DEFAULT_CAP,
        })
    }

    /// Declares bounded-loss mode with losses in `[0, b]`.
    pub fn with_bound(mut self, b: f64) -> Result<Self> {
        if !(b.is_finite() && b >= 0.0) {
            return Err(Error::Config(format!("loss bound {b} must be finite and nonnegative")));
        }
        if let Some(v) = self.loss.iter().find(|v| **v > b) {
            return Err(Error::Config(format!("loss value {v} exceeds the declared bound {b}")));
        }
        self.bound = Some(b);
        Ok(self)
    }

    /// An explicit subgaussian constant, overriding the range-based one.
    pub fn with_sigma(mut self, sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::Config(format!("sigma {sigma} must be finite and nonnegative")));
        }
        self.sigma = Some(sigma);
        Ok(self)
    }

    pub fn with_embedding(mut self, e: EmbeddedSupport) -> Result<Self> {
        if e.len() != self.hypotheses {
            return Err(Error::Config(format!(
                "embedding has {} points for {} hypotheses",
                e.len(),
                self.hypotheses
            )));
        }
        self.embedding = Some(e);
        Ok(self)
    }

    pub fn with_cap(mut self, cap: u128) -> Self {
        self.cap = cap;
        self
    }

    /// The same problem with every loss multiplied by `a > 0`.
    pub fn scaled(&self, a: f64) -> Result<Self> {
        let mut out = Self::new(
            self.m,
            self.n,
            self.loss.iter().map(|v| a * v).collect(),
            self.p_z.clone(),
        )?;
        out.cap = self.cap;
        out.embedding = self.embedding.clone();
        if let Some(b) = self.bound {
            out = out.with_bound(a * b)?;
        }
        if let Some(s) = self.sigma {
            out = out.with_sigma(a * s)?;
        }
        Ok(out)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of hypotheses.
    pub fn hypotheses(&self) -> usize {
        self.hypotheses
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p_z(&self) -> &FiniteMeasure {
        &self.p_z
    }

    pub fn bound(&self) -> Option<f64> {
        self.bound
    }

    pub fn sigma_override(&self) -> Option<f64> {
        self.sigma
    }

    pub fn embedding(&self) -> Option<&EmbeddedSupport> {
        self.embedding.as_ref()
    }

    pub fn cap(&self) -> u128 {
        self.cap
    }

    pub fn loss(&self, w: usize, z: usize) -> f64 {
        self.loss[w * self.m + z]
    }

    pub fn loss_row(&self, w: usize) -> &[f64] {
        &self.loss[w * self.m..(w + 1) * self.m]
    }

    /// `m^n`, or `None` on overflow.
    pub fn sample_count(&self) -> Option<u128> {
        (self.m as u128).checked_pow(self.n as u32)
    }

    /// Fails with [`Error::CapExceeded`] when `cells` is above the cap.
    pub fn check_cap(&self, cells: Option<u128>) -> Result<usize> {
        match cells {
            Some(c) if c <= self.cap => Ok(c as usize),
            Some(c) => Err(Error::CapExceeded {
                cells: c,
                cap: self.cap,
            }),
            None => Err(Error::CapExceeded {
                cells: u128::MAX,
                cap: self.cap,
            }),
        }
    }

    /// Number of enumerated samples, subject to the cap on `m^n N` cells.
    pub fn enumerable_samples(&self) -> Result<usize> {
        let samples = self.sample_count();
        self.check_cap(samples.and_then(|s| s.checked_mul(self.hypotheses as u128)))?;
        Ok(samples.unwrap() as usize)
    }

    pub fn sample(&self, index: usize) -> Sample {
        let mut z = vec![0; self.n];
        let mut rest = index;
        for slot in z.iter_mut().rev() {
            *slot = rest % self.m;
            rest /= self.m;
        }
        Sample { indices: z }
    }

    pub fn sample_index(&self, s: &Sample) -> Result<usize> {
        self.check_sample(s)?;
        Ok(s.indices.iter().fold(0, |acc, z| acc * self.m + z))
    }

    fn check_sample(&self, s: &Sample) -> Result<()> {
        if s.indices.len() != self.n {
            return Err(Error::dim(format!(
                "sample of length {} for n = {}",
                s.indices.len(),
                self.n
            )));
        }
        if let Some(z) = s.indices.iter().find(|z| **z >= self.m) {
            return Err(Error::dim(format!("instance index {z} outside 0..{}", self.m)));
        }
        Ok(())
    }

    fn check_w(&self, w: usize) -> Result<()> {
        if w < self.hypotheses {
            Ok(())
        } else {
            Err(Error::dim(format!("hypothesis {w} outside 0..{}", self.hypotheses)))
        }
    }

    /// `P_Z^n(s)`.
    pub fn sample_probability(&self, s: &Sample) -> f64 {
        s.indices.iter().map(|z| self.p_z[*z]).product()
    }

    /// `L(w) = <P_Z, loss(w, .)>`.
    pub fn population_risk(&self, w: usize) -> Result<f64> {
        self.check_w(w)?;
        Ok(self.pop_risk(w))
    }

    pub(crate) fn pop_risk(&self, w: usize) -> f64 {
        self.p_z.expect(self.loss_row(w)).expect("row length is m")
    }

    /// `L_n(w, s)`: the mean loss over the sample.
    pub fn empirical_risk(&self, w: usize, s: &Sample) -> Result<f64> {
        self.check_w(w)?;
        self.check_sample(s)?;
        Ok(self.emp_risk(w, &s.indices))
    }

    pub(crate) fn emp_risk(&self, w: usize, s: &[usize]) -> f64 {
        let row = self.loss_row(w);
        s.iter().map(|z| row[*z]).sum::<f64>() / s.len() as f64
    }

    /// `L(w) - L_n(w, s)`.
    pub fn gen_error(&self, w: usize, s: &Sample) -> Result<f64> {
        Ok(self.population_risk(w)? - self.empirical_risk(w, s)?)
    }

    pub(crate) fn draw_sample<R: Rng>(&self, rng: &mut R, sampler: &WeightedIndex<f64>, out: &mut [usize]) {
        for z in out.iter_mut() {
            *z = sampler.sample(rng);
        }
    }
}

/// An ordered `n`-tuple of instance indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sample {
    pub indices: Vec<usize>,
}

impl Sample {
    pub fn new(indices: Vec<usize>) -> Self {
        Self { indices }
    }
}

/// Declarative description of one of the built-in algorithms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AlgorithmSpec {
    /// Posterior proportional to `prior(w) exp(-beta n L_n(w))`.
    Gibbs {
        beta: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        prior: Option<Vec<f64>>,
    },
    /// Deterministic empirical risk minimizer, lowest index on ties.
    Erm,
    /// Ignores the data and outputs the prior.
    Ignore {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        prior: Option<Vec<f64>>,
    },
}

fn resolve_prior(prob: &LearningProblem, prior: &Option<Vec<f64>>) -> Result<FiniteMeasure> {
    let p = match prior {
        Some(w) => FiniteMeasure::new(w.clone())?,
        None => FiniteMeasure::uniform(prob.hypotheses)?,
    };
    if p.len() != prob.hypotheses {
        return Err(Error::Config(format!(
            "prior over {} points for {} hypotheses",
            p.len(),
            prob.hypotheses
        )));
    }
    Ok(p)
}

impl AlgorithmSpec {
    pub fn validate(&self, prob: &LearningProblem) -> Result<()> {
        match self {
            AlgorithmSpec::Gibbs { beta, prior } => {
                if !(beta.is_finite() && *beta >= 0.0) {
                    return Err(Error::Config(format!("beta = {beta} must be finite and >= 0")));
                }
                resolve_prior(prob, prior).map(|_| ())
            }
            AlgorithmSpec::Erm => Ok(()),
            AlgorithmSpec::Ignore { prior } => resolve_prior(prob, prior).map(|_| ()),
        }
    }

    /// True when every row is the same measure.
    pub fn is_data_independent(&self) -> bool {
        match self {
            AlgorithmSpec::Gibbs { beta, .. } => *beta == 0.0,
            AlgorithmSpec::Erm => false,
            AlgorithmSpec::Ignore { .. } => true,
        }
    }

    /// The output law on sample `s`.
    pub fn row(&self, prob: &LearningProblem, s: &[usize]) -> Result<FiniteMeasure> {
        match self {
            AlgorithmSpec::Gibbs { beta, prior } => {
                let prior = resolve_prior(prob, prior)?;
                Ok(gibbs_row(prob, *beta, &prior, s))
            }
            AlgorithmSpec::Erm => Ok(erm_row(prob, s)),
            AlgorithmSpec::Ignore { prior } => resolve_prior(prob, prior),
        }
    }

    pub fn materialize(&self, prob: &LearningProblem) -> Result<Algorithm> {
        self.validate(prob)?;
        match self {
            AlgorithmSpec::Gibbs { beta, prior } => gibbs_algorithm(prob, *beta, &resolve_prior(prob, prior)?),
            AlgorithmSpec::Erm => erm_algorithm(prob),
            AlgorithmSpec::Ignore { prior } => ignore_algorithm(prob, &resolve_prior(prob, prior)?),
        }
    }
}

/// A learning problem together with the algorithm to run on it, as read
/// from a problem file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemConfig {
    #[serde(flatten)]
    pub problem: LearningProblem,
    pub algorithm: AlgorithmSpec,
}

/// A learning algorithm: one output law per enumerated sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Algorithm {
    kernel: MarkovKernel,
}

impl Algorithm {
    pub fn new(prob: &LearningProblem, kernel: MarkovKernel) -> Result<Self> {
        let samples = prob.enumerable_samples()?;
        if kernel.input_size() != samples || kernel.output_size() != prob.hypotheses {
            return Err(Error::dim(format!(
                "kernel is {}x{}, problem needs {}x{}",
                kernel.input_size(),
                kernel.output_size(),
                samples,
                prob.hypotheses
            )));
        }
        Ok(Self { kernel })
    }

    pub fn kernel(&self) -> &MarkovKernel {
        &self.kernel
    }

    pub fn row(&self, s: usize) -> &FiniteMeasure {
        self.kernel.row(s)
    }

    pub fn is_data_independent(&self) -> bool {
        self.kernel.is_constant()
    }
}

fn gibbs_row(prob: &LearningProblem, beta: f64, prior: &FiniteMeasure, s: &[usize]) -> FiniteMeasure {
    if beta == 0.0 {
        return prior.clone();
    }
    let n = prob.n as f64;
    let logits: Vec<f64> = (0..prob.hypotheses)
        .map(|w| {
            if prior[w] > 0.0 {
                prior[w].ln() - beta * n * prob.emp_risk(w, s)
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
    FiniteMeasure::from_unnormalized(weights).expect("prior has positive mass")
}

fn erm_row(prob: &LearningProblem, s: &[usize]) -> FiniteMeasure {
    let mut best = 0;
    let mut best_risk = prob.emp_risk(0, s);
    for w in 1..prob.hypotheses {
        let r = prob.emp_risk(w, s);
        if r < best_risk {
            best = w;
            best_risk = r;
        }
    }
    FiniteMeasure::dirac(prob.hypotheses, best).expect("index in range")
}

fn build(prob: &LearningProblem, row: impl Fn(&[usize]) -> FiniteMeasure) -> Result<Algorithm> {
    let samples = prob.enumerable_samples()?;
    let rows = (0..samples).map(|i| row(&prob.sample(i).indices)).collect();
    Ok(Algorithm {
        kernel: MarkovKernel::new(rows)?,
    })
}

pub fn gibbs_algorithm(prob: &LearningProblem, beta: f64, prior: &FiniteMeasure) -> Result<Algorithm> {
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(Error::Config(format!("beta = {beta} must be finite and >= 0")));
    }
    if prior.len() != prob.hypotheses {
        return Err(Error::Config("prior size differs from the hypothesis count".into()));
    }
    build(prob, |s| gibbs_row(prob, beta, prior, s))
}

pub fn erm_algorithm(prob: &LearningProblem) -> Result<Algorithm> {
    build(prob, |s| erm_row(prob, s))
}

pub fn ignore_algorithm(prob: &LearningProblem, prior: &FiniteMeasure) -> Result<Algorithm> {
    if prior.len() != prob.hypotheses {
        return Err(Error::Config("prior size differs from the hypothesis count".into()));
    }
    let samples = prob.enumerable_samples()?;
    Ok(Algorithm {
        kernel: MarkovKernel::constant(samples, prior.clone())?,
    })
}

/// Law of the sample: `P_Z^n` over enumerated samples.
pub fn sample_law(prob: &LearningProblem) -> Result<FiniteMeasure> {
    let samples = prob.enumerable_samples()?;
    let w = (0..samples).map(|i| prob.sample_probability(&prob.sample(i))).collect();
    FiniteMeasure::new(w)
}

/// `P_S (x) P_{W|S}` over (sample index, hypothesis).
pub fn exact_joint(prob: &LearningProblem, alg: &Algorithm) -> Result<JointMeasure> {
    let p_s = sample_law(prob)?;
    crate::measures::product(&p_s, &alg.kernel)
}

/// `E[gen]` and `E|gen|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GenMoments {
    pub signed: f64,
    pub absolute: f64,
}

/// Exact `E[gen(W, S)]` and `E|gen(W, S)|` by enumeration.
pub fn expected_gen(prob: &LearningProblem, alg: &Algorithm) -> Result<GenMoments> {
    let samples = prob.enumerable_samples()?;
    let pop: Vec<f64> = (0..prob.hypotheses).map(|w| prob.pop_risk(w)).collect();
    let mut signed = 0.0;
    let mut absolute = 0.0;
    for i in 0..samples {
        let s = prob.sample(i);
        let ps = prob.sample_probability(&s);
        if ps == 0.0 {
            continue;
        }
        for (w, pw) in alg.row(i).weights().iter().enumerate() {
            if *pw > 0.0 {
                let g = pop[w] - prob.emp_risk(w, &s.indices);
                signed += ps * pw * g;
                absolute += ps * pw * g.abs();
            }
        }
    }
    if alg.is_data_independent() {
        // E[L_n(w)] = L(w) for every fixed w; drop the rounding residue.
        signed = 0.0;
    }
    Ok(GenMoments { signed, absolute })
}

/// A Monte Carlo estimate of the generalization moments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GenEstimate {
    pub signed: f64,
    pub absolute: f64,
    pub signed_stderr: f64,
    pub absolute_stderr: f64,
    pub samples: u64,
    pub seed: u64,
}

/// Estimates the generalization moments by sampling `S` and averaging over
/// the exact output law of the algorithm on each draw.
pub fn expected_gen_mc(prob: &LearningProblem, spec: &AlgorithmSpec, cfg: McConfig) -> Result<GenEstimate> {
    spec.validate(prob)?;
    let sampler = WeightedIndex::new(prob.p_z.weights()).map_err(|e| Error::InvalidMeasure(e.to_string()))?;
    let pop: Vec<f64> = (0..prob.hypotheses).map(|w| prob.pop_risk(w)).collect();
    let moments = mc::run(cfg, 2, |rng, out| {
        let mut s = vec![0; prob.n];
        prob.draw_sample(rng, &sampler, &mut s);
        let row = spec.row(prob, &s).expect("validated algorithm");
        let (mut signed, mut absolute) = (0.0, 0.0);
        for (w, pw) in row.weights().iter().enumerate() {
            if *pw > 0.0 {
                let g = pop[w] - prob.emp_risk(w, &s);
                signed += pw * g;
                absolute += pw * g.abs();
            }
        }
        out[0] = signed;
        out[1] = absolute;
    });
    Ok(GenEstimate {
        signed: moments[0].mean(),
        absolute: moments[1].mean(),
        signed_stderr: moments[0].stderr(),
        absolute_stderr: moments[1].stderr(),
        samples: cfg.samples,
        seed: cfg.seed,
    })
}

/// The supersample law: `(eps, W, S~)` with `S~ = (S', S)` drawn from
/// `P_Z^{2n}`, independent uniform signs `eps`, and `W` drawn from the
/// algorithm fed with `S^eps`.
///
/// Indices: `s~ = s' * m^n + s`; sign pattern `e` has `eps_i = -1` (take
/// `z'_i`) when bit `i` of `e` is set and `+1` (take `z_i`) otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Supersample {
    n: usize,
    samples: usize,
    joint: JointMeasure3,
}

impl Supersample {
    /// The joint indexed `(e, w, s~)`.
    pub fn joint(&self) -> &JointMeasure3 {
        &self.joint
    }

    pub fn sample_count(&self) -> usize {
        self.samples
    }

    pub fn sign_patterns(&self) -> usize {
        1 << self.n
    }

    /// Splits `s~` into `(s', s)` sample indices.
    pub fn split(&self, s_tilde: usize) -> (usize, usize) {
        (s_tilde / self.samples, s_tilde % self.samples)
    }

    /// `eps_i` for pattern `e`.
    pub fn sign(&self, e: usize, i: usize) -> i8 {
        if e >> i & 1 == 1 {
            -1
        } else {
            1
        }
    }

    /// `I(W; eps | S~)`.
    pub fn cmi(&self) -> f64 {
        conditional_mutual_information(&self.joint)
    }

    /// Law of `(S^eps, W)` over (sample index, hypothesis).
    pub fn training_marginal(&self, prob: &LearningProblem) -> Result<JointMeasure> {
        let [ne, nw, nst] = self.joint.dims();
        let mut out = vec![0.0; self.samples * nw];
        for st in 0..nst {
            let (sp, s) = self.split(st);
            let (zp, z) = (prob.sample(sp).indices, prob.sample(s).indices);
            for e in 0..ne {
                let se = self.mixed_index(prob, e, &z, &zp);
                for w in 0..nw {
                    out[se * nw + w] += self.joint.get(e, w, st);
                }
            }
        }
        JointMeasure::new(self.samples, nw, out)
    }

    /// Index of `S^eps` built from the coordinates of `s` and `s'`.
    pub fn mixed_index(&self, prob: &LearningProblem, e: usize, z: &[usize], zp: &[usize]) -> usize {
        (0..self.n).fold(0, |acc, i| {
            acc * prob.m + if self.sign(e, i) > 0 { z[i] } else { zp[i] }
        })
    }
}

pub fn supersample_joint(prob: &LearningProblem, alg: &Algorithm) -> Result<Supersample> {
    let samples = prob.enumerable_samples()?;
    let pairs = (samples as u128) * (samples as u128);
    let signs = 1u128 << prob.n.min(100);
    let cells = pairs
        .checked_mul(signs)
        .and_then(|c| c.checked_mul(prob.hypotheses as u128));
    prob.check_cap(cells)?;
    let nst = samples * samples;
    let ne = 1usize << prob.n;
    let nw = prob.hypotheses;
    let p_s: Vec<f64> = (0..samples).map(|i| prob.sample_probability(&prob.sample(i))).collect();
    let mut weights = vec![0.0; ne * nw * nst];
    let proto = Supersample {
        n: prob.n,
        samples,
        joint: JointMeasure3::new([1, 1, 1], vec![1.0])?,
    };
    let sign_mass = 1.0 / ne as f64;
    for st in 0..nst {
        let (sp, s) = proto.split(st);
        let mass = p_s[sp] * p_s[s];
        if mass == 0.0 {
            continue;
        }
        let (zp, z) = (prob.sample(sp).indices, prob.sample(s).indices);
        for e in 0..ne {
            let row = alg.row(proto.mixed_index(prob, e, &z, &zp));
            for (w, pw) in row.weights().iter().enumerate() {
                weights[(e * nw + w) * nst + st] = mass * sign_mass * pw;
            }
        }
    }
    Ok(Supersample {
        joint: JointMeasure3::new([ne, nw, nst], weights)?,
        ..proto
    })
}

/// A subgaussian constant valid for every `loss(w, Z)`: the explicit
/// override if present, otherwise half the largest per-hypothesis range in
/// bounded-loss mode.
pub fn subgaussian_sigma(prob: &LearningProblem) -> Result<f64> {
    if let Some(s) = prob.sigma {
        return Ok(s);
    }
    if prob.bound.is_none() {
        return Err(Error::SigmaRequired);
    }
    Ok((0..prob.hypotheses)
        .map(|w| {
            let row = prob.loss_row(w);
            let hi = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = row.iter().cloned().fold(f64::INFINITY, f64::min);
            (hi - lo) / 2.0
        })
        .fold(0.0, f64::max))
}

/// `Delta(z, z') = max_w |loss(w, z) - loss(w, z')|`, row-major `m x m`.
pub fn delta_bound(prob: &LearningProblem) -> Vec<f64> {
    let m = prob.m;
    let mut out = vec![0.0; m * m];
    for z in 0..m {
        for zp in 0..m {
            out[z * m + zp] = (0..prob.hypotheses)
                .map(|w| (prob.loss(w, z) - prob.loss(w, zp)).abs())
                .fold(0.0, f64::max);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn problem(m: usize, n: usize, loss: &[f64], p_z: &[f64]) -> LearningProblem {
        LearningProblem::new(m, n, loss.to_vec(), FiniteMeasure::new(p_z.to_vec()).unwrap())
            .unwrap()
            .with_bound(1.0)
            .unwrap()
    }

    #[test]
    fn risk_examples() {
        let p = problem(2, 1, &[0.0, 1.0], &[0.5, 0.5]);
        let s = Sample::new(vec![0]);
        assert_abs_diff_eq!(p.gen_error(0, &s).unwrap(), 0.5);
        assert!(p.gen_error(1, &s).is_err());
        assert!(p.gen_error(0, &Sample::new(vec![2])).is_err());

        let c = problem(3, 2, &[0.4; 6], &[0.2, 0.3, 0.5]);
        for i in 0..9 {
            for w in 0..2 {
                assert_abs_diff_eq!(c.gen_error(w, &c.sample(i)).unwrap(), 0.0, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn enumeration_order() {
        let p = problem(3, 2, &[0.0; 3], &[0.2, 0.3, 0.5]);
        assert_eq!(p.sample(0).indices, vec![0, 0]);
        assert_eq!(p.sample(1).indices, vec![0, 1]);
        assert_eq!(p.sample(3).indices, vec![1, 0]);
        assert_eq!(p.sample(8).indices, vec![2, 2]);
        for i in 0..9 {
            assert_eq!(p.sample_index(&p.sample(i)).unwrap(), i);
        }
    }

    #[test]
    fn gibbs_examples() {
        let p = problem(2, 1, &[0.0, 1.0, 1.0, 0.0], &[0.5, 0.5]);
        let prior = FiniteMeasure::new(vec![0.3, 0.7]).unwrap();
        let a = gibbs_algorithm(&p, 0.0, &prior).unwrap();
        assert!(a.kernel().rows().iter().all(|r| r == &prior));

        let a = gibbs_algorithm(&p, 1.0, &prior).unwrap();
        let e = (-1.0f64).exp();
        let z = 0.3 + 0.7 * e;
        assert_abs_diff_eq!(a.row(0)[0], 0.3 / z, epsilon = 1e-15);
        assert_abs_diff_eq!(a.row(0)[1], 0.7 * e / z, epsilon = 1e-15);

        let a = gibbs_algorithm(&p, 1e3, &prior).unwrap();
        assert!(a.row(1)[1] >= 1.0 - 1e-6);
        assert_abs_diff_eq!(a.row(1).weights().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn erm_examples() {
        let single = problem(2, 2, &[0.1, 0.9], &[0.5, 0.5]);
        let a = erm_algorithm(&single).unwrap();
        assert!(a.kernel().rows().iter().all(|r| r[0] == 1.0));

        let flat = problem(2, 1, &[0.5; 6], &[0.5, 0.5]);
        let a = erm_algorithm(&flat).unwrap();
        assert!(a.kernel().rows().iter().all(|r| r[0] == 1.0));
    }

    #[test]
    fn joint_and_generalization() {
        let p = problem(3, 1, &[0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0], &[0.2, 0.3, 0.5]);
        let a = erm_algorithm(&p).unwrap();
        let j = exact_joint(&p, &a).unwrap();
        assert_eq!(j.row_marginal(), sample_law(&p).unwrap());
        let h = p.p_z().entropy();
        assert_abs_diff_eq!(crate::measures::mutual_information(&j), h, epsilon = 1e-12);

        let ign = ignore_algorithm(&p, &FiniteMeasure::uniform(3).unwrap()).unwrap();
        assert_eq!(expected_gen(&p, &ign).unwrap().signed, 0.0);
        assert_abs_diff_eq!(
            crate::measures::mutual_information(&exact_joint(&p, &ign).unwrap()),
            0.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn supersample_marginal_matches() {
        let p = problem(2, 1, &[0.0, 1.0, 0.7, 0.2, 0.4, 0.4], &[0.3, 0.7]);
        let a = gibbs_algorithm(&p, 2.0, &FiniteMeasure::uniform(3).unwrap()).unwrap();
        let ss = supersample_joint(&p, &a).unwrap();
        assert_eq!(ss.joint().dims(), [2, 3, 4]);
        let lhs = ss.training_marginal(&p).unwrap();
        let rhs = exact_joint(&p, &a).unwrap();
        for (x, y) in lhs.weights().iter().zip(rhs.weights()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
        assert!(ss.cmi() <= p.n() as f64 * std::f64::consts::LN_2 + 1e-12);
    }

    #[test]
    fn sigma_and_delta() {
        let p = problem(2, 1, &[0.0, 1.0], &[0.5, 0.5]);
        assert_eq!(subgaussian_sigma(&p).unwrap(), 0.5);
        let c = problem(2, 1, &[0.3, 0.3], &[0.5, 0.5]);
        assert_eq!(subgaussian_sigma(&c).unwrap(), 0.0);
        let u = LearningProblem::new(2, 1, vec![0.0, 3.0], FiniteMeasure::uniform(2).unwrap()).unwrap();
        assert_eq!(subgaussian_sigma(&u), Err(Error::SigmaRequired));
        assert_eq!(subgaussian_sigma(&u.with_sigma(2.0).unwrap()).unwrap(), 2.0);

        let p = problem(3, 1, &[0.0, 0.5, 1.0], &[0.2, 0.3, 0.5]);
        let d = delta_bound(&p);
        assert_eq!(d[0], 0.0);
        assert_eq!(d[2], 1.0);
        assert_eq!(d[5], 0.5);
    }

    #[test]
    fn cap_is_enforced() {
        let p = problem(3, 3, &[0.0; 6], &[0.2, 0.3, 0.5]).with_cap(50);
        assert!(matches!(
            erm_algorithm(&p),
            Err(Error::CapExceeded { cells: 54, cap: 50 })
        ));
    }

    #[test]
    fn problem_json() {
        let text = r#"{"m":2,"N":2,"n":1,"loss":[[0,1],[1,0]],"p_z":[0.5,0.5],"bound":1,
            "algorithm":{"kind":"gibbs","beta":1.0,"prior":[0.5,0.5]}}"#;
        let cfg: ProblemConfig = serde_json::from_str(text).unwrap();
        assert_eq!(cfg.problem.hypotheses(), 2);
        assert_eq!(cfg.problem.bound(), Some(1.0));
        assert!(matches!(cfg.algorithm, AlgorithmSpec::Gibbs { beta, .. } if beta == 1.0));
        let bad = r#"{"m":2,"N":2,"n":1,"loss":[[0,1]],"p_z":[0.5,0.5],"algorithm":{"kind":"erm"}}"#;
        assert!(serde_json::from_str::<ProblemConfig>(bad).is_err());
    }
}
