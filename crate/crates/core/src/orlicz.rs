//! The exponential Orlicz family `psi_p(x) = exp(x^p) - 1`, its inverse,
//! Orlicz norms of finitely supported variables, and checkers for the
//! change-of-measure inequalities built on them.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::{kl_divergence, FiniteMeasure};

fn check_p(p: f64) -> Result<()> {
    if p.is_finite() && p >= 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("exponent p = {p} must be a finite number >= 1")))
    }
}

fn check_arg(x: f64) -> Result<()> {
    if x >= 0.0 && !x.is_nan() {
        Ok(())
    } else {
        Err(Error::Domain(format!("argument {x} must be nonnegative")))
    }
}

/// `exp(x^p) - 1`.
pub fn psi(x: f64, p: f64) -> Result<f64> {
    check_p(p)?;
    check_arg(x)?;
    Ok(psi_unchecked(x, p))
}

/// `(ln(1 + x))^(1/p)`.
pub fn psi_inv(x: f64, p: f64) -> Result<f64> {
    check_p(p)?;
    check_arg(x)?;
    Ok(psi_inv_unchecked(x, p))
}

#[inline]
pub(crate) fn psi_unchecked(x: f64, p: f64) -> f64 {
    x.powf(p).exp_m1()
}

#[inline]
pub(crate) fn psi_inv_unchecked(x: f64, p: f64) -> f64 {
    x.ln_1p().powf(1.0 / p)
}

/// `ln(exp(y) - 1)` without overflow; `-inf` at `y = 0`.
fn ln_expm1(y: f64) -> f64 {
    if y > 30.0 {
        y + (-(-y).exp()).ln_1p()
    } else {
        y.exp_m1().ln()
    }
}

/// `ln(1 + x^q)` for large `x` without forming `x^q`.
fn ln1p_pow(x: f64, q: f64) -> f64 {
    if x > 1.0 {
        q * x.ln() + x.powf(-q).ln_1p()
    } else {
        x.powf(q).ln_1p()
    }
}

/// A real random variable with finitely many values.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteRandomVariable {
    values: Vec<f64>,
    law: FiniteMeasure,
}

impl DiscreteRandomVariable {
    pub fn new(values: Vec<f64>, law: FiniteMeasure) -> Result<Self> {
        if values.len() != law.len() {
            return Err(Error::dim(format!(
                "{} values against a law of size {}",
                values.len(),
                law.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("value {v} is not finite")));
        }
        Ok(Self { values, law })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn law(&self) -> &FiniteMeasure {
        &self.law
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| a * v).collect(),
            law: self.law.clone(),
        }
    }
}

/// `inf { c > 0 : E[psi_p(|X| / c)] <= 1 }`.
///
/// The result is the upper end of the final bisection bracket, so it is
/// always a feasible scale.
pub fn orlicz_norm(x: &DiscreteRandomVariable, p: f64) -> Result<f64> {
    check_p(p)?;
    let atoms: Vec<(f64, f64)> = x
        .values
        .iter()
        .zip(x.law.weights())
        .filter(|(v, w)| **w > 0.0 && **v != 0.0)
        .map(|(v, w)| (v.abs(), *w))
        .collect();
    let Some(&(top, top_mass)) = atoms.iter().max_by(|a, b| a.0.total_cmp(&b.0)) else {
        return Ok(0.0);
    };
    let moment = |c: f64| -> f64 { atoms.iter().map(|(v, w)| w * psi_unchecked(v / c, p)).sum() };

    // At `hi` every atom has psi <= 1; at `lo` the largest atom alone
    // already contributes 1.
    let mut hi = top / psi_inv_unchecked(1.0, p);
    let mut lo = top / psi_inv_unchecked(1.0 / top_mass, p);
    if moment(lo) <= 1.0 {
        return Ok(lo);
    }
    for _ in 0..200 {
        if hi - lo <= 1e-13 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if moment(mid) <= 1.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Worst observed violation of one inequality over a grid.
///
/// For the two exponential items the violation is `(lhs - rhs) / max(1, rhs)`
/// evaluated in log space, so values stay finite where `exp(x^p)` would
/// overflow. The two inverse items report `lhs - rhs` directly.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyViolation {
    pub item: &'static str,
    pub max_violation: f64,
    pub argmax_input: Option<[f64; 3]>,
}

impl PropertyViolation {
    fn new(item: &'static str) -> Self {
        Self {
            item,
            max_violation: f64::NEG_INFINITY,
            argmax_input: None,
        }
    }

    fn record(&mut self, v: f64, input: [f64; 3]) {
        if v > self.max_violation || self.argmax_input.is_none() {
            self.max_violation = v;
            self.argmax_input = Some(input);
        }
    }
}

fn scaled_gap(ln_lhs: f64, ln_rhs: f64) -> f64 {
    if ln_lhs == f64::NEG_INFINITY && ln_rhs == f64::NEG_INFINITY {
        return 0.0;
    }
    if ln_rhs <= 0.0 {
        ln_lhs.exp() - ln_rhs.exp()
    } else {
        (ln_lhs - ln_rhs).exp_m1()
    }
}

/// Evaluates the four elementary `psi_p` inequalities on `(x, p, q)` triples:
///
/// 1. `psi_p(x / 2^(1/p))^2 <= psi_p(x)`
/// 2. `x psi_p(x / 4^(1/p)) <= 2^(1/p) psi_p(x / 2^(1/p))`
/// 3. `psi_p^{-1}(x^q) <= q^(1/p) psi_p^{-1}(x)`
/// 4. `psi_p^{-1}(x) <= ln(x)^(1/p) + 1` for `x >= 1`
pub fn check_psi_properties(grid: &[(f64, f64, f64)]) -> Result<Vec<PropertyViolation>> {
    let mut items = [
        PropertyViolation::new("i"),
        PropertyViolation::new("ii"),
        PropertyViolation::new("iii"),
        PropertyViolation::new("iv"),
    ];
    for &(x, p, q) in grid {
        check_p(p)?;
        check_arg(x)?;
        if !(q >= 1.0 && q.is_finite()) {
            return Err(Error::Domain(format!("power q = {q} must be >= 1")));
        }
        let input = [x, p, q];
        let xp = x.powf(p);

        items[0].record(scaled_gap(2.0 * ln_expm1(xp / 2.0), ln_expm1(xp)), input);

        let ln_lhs = x.ln() + ln_expm1(xp / 4.0);
        let ln_rhs = std::f64::consts::LN_2 / p + ln_expm1(xp / 2.0);
        items[1].record(scaled_gap(ln_lhs, ln_rhs), input);

        let lhs = ln1p_pow(x, q).powf(1.0 / p);
        let rhs = q.powf(1.0 / p) * psi_inv_unchecked(x, p);
        items[2].record(lhs - rhs, input);

        if x >= 1.0 {
            let lhs = psi_inv_unchecked(x, p);
            let rhs = x.ln().powf(1.0 / p) + 1.0;
            items[3].record(lhs - rhs, input);
        }
    }
    Ok(items.into())
}

/// A nonincreasing positive function on `(0, 1]`.
pub enum Profile<'a> {
    /// Piecewise constant: `values[i]` on `(knots[i-1], knots[i]]`, with an
    /// implicit `knots[-1] = 0` and `knots.last() == 1`.
    Step { knots: Vec<f64>, values: Vec<f64> },
    /// Any callable; monotonicity is checked on a dense sample.
    Function(&'a dyn Fn(f64) -> f64),
}

/// The three sides of the sum-to-integral sandwich
/// `sum_{k=1}^K r^-k f(r^-k) <= r int_0^1 f <= r^2 sum_{k>=0} r^-k f(r^-k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SumIntegral {
    pub lhs: f64,
    pub mid: f64,
    pub rhs: f64,
}

impl SumIntegral {
    pub fn holds(&self, tol: f64) -> bool {
        self.lhs <= self.mid + tol && self.mid <= self.rhs + tol
    }
}

fn step_eval(knots: &[f64], values: &[f64], e: f64) -> f64 {
    let i = knots.partition_point(|k| *k < e);
    values[i.min(values.len() - 1)]
}

pub fn check_sum_to_integral(f: &Profile<'_>, r: f64, k: u32) -> Result<SumIntegral> {
    if !(r >= 2.0 && r.is_finite()) {
        return Err(Error::Domain(format!("ratio r = {r} must be >= 2")));
    }
    match f {
        Profile::Step { knots, values } => step_sandwich(knots, values, r, k),
        Profile::Function(g) => function_sandwich(*g, r, k),
    }
}

fn step_sandwich(knots: &[f64], values: &[f64], r: f64, k: u32) -> Result<SumIntegral> {
    if knots.is_empty() || knots.len() != values.len() {
        return Err(Error::dim("step profile needs one value per knot"));
    }
    if knots.last() != Some(&1.0) || knots[0] <= 0.0 || knots.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain(
            "step knots must increase strictly inside (0, 1] and end at 1".into(),
        ));
    }
    if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::Domain("step values must be finite and positive".into()));
    }
    if values.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::Domain("step profile is not nonincreasing".into()));
    }
    let f = |e: f64| step_eval(knots, values, e);
    let lhs: f64 = (1..=k).map(|j| r.powi(-(j as i32)) * f(r.powi(-(j as i32)))).sum();
    let mut prev = 0.0;
    let mut integral = 0.0;
    for (kn, v) in knots.iter().zip(values) {
        integral += (kn - prev) * v;
        prev = *kn;
    }
    // Below the first knot the summand is geometric.
    let mut tail = 0.0;
    let mut j = 0i32;
    loop {
        let e = r.powi(-j);
        if e <= knots[0] {
            tail += values[0] * e / (1.0 - 1.0 / r);
            break;
        }
        tail += e * f(e);
        j += 1;
    }
    Ok(SumIntegral {
        lhs,
        mid: r * integral,
        rhs: r * r * tail,
    })
}

#[allow(clippy::too_many_arguments)]
fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
}

fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson(f, a, b, fa, fm, fb, whole, tol * whole.abs(), 24)
}

const DYADIC_PIECES: i32 = 1000;
const QUADRATURE_TOL: f64 = 1e-10;

fn function_sandwich(f: &dyn Fn(f64) -> f64, r: f64, k: u32) -> Result<SumIntegral> {
    // Monotonicity and positivity on a log-spaced sample of (0, r].
    let mut prev = f64::INFINITY;
    let top = r.ln();
    let bottom = (1e-300f64).ln();
    let samples = 4000;
    for i in 0..=samples {
        let e = (bottom + (top - bottom) * i as f64 / samples as f64).exp();
        let v = f(e);
        if v.is_nan() || v <= 0.0 {
            return Err(Error::Domain(format!("f({e}) = {v} is not positive")));
        }
        if v > prev * (1.0 + 1e-12) {
            return Err(Error::Domain(format!("f increases near {e}")));
        }
        prev = v;
    }

    let lhs: f64 = (1..=k).map(|j| r.powi(-(j as i32)) * f(r.powi(-(j as i32)))).sum();

    // int_0^1 f as a sum over dyadic pieces [2^-j-1, 2^-j].
    let mut integral = 0.0;
    let mut converged = false;
    for j in 0..DYADIC_PIECES {
        let b = 2f64.powi(-j);
        let piece = integrate(f, 0.5 * b, b, QUADRATURE_TOL);
        if !piece.is_finite() {
            return Err(Error::NonIntegrable(format!("quadrature overflow near {b}")));
        }
        integral += piece;
        if piece <= 1e-14 * integral.max(f64::MIN_POSITIVE) && j >= 8 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonIntegrable("dyadic contributions near 0 do not vanish".into()));
    }

    let mut tail = 0.0;
    let mut j = 0i32;
    loop {
        let e = r.powi(-j);
        let term = e * f(e);
        if !term.is_finite() {
            return Err(Error::NonIntegrable(format!("sum term overflows at {e}")));
        }
        tail += term;
        if term <= 1e-17 * tail && j >= 8 {
            break;
        }
        j += 1;
        if e == 0.0 || j > 4000 {
            return Err(Error::NonIntegrable("geometric sum does not converge".into()));
        }
    }
    Ok(SumIntegral {
        lhs,
        mid: r * integral,
        rhs: r * r * tail,
    })
}

/// `<mu, f g>` and the two upper bounds of the decorrelation inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecorrelationTerms {
    pub lhs: f64,
    pub rhs1: f64,
    pub rhs2: f64,
}

/// `d mu / d nu` on the support of `nu`; zero off it.
pub(crate) fn density(mu: &FiniteMeasure, nu: &FiniteMeasure) -> Result<Vec<f64>> {
    if mu.len() != nu.len() {
        return Err(Error::dim(format!("measures of size {} and {}", mu.len(), nu.len())));
    }
    mu.weights()
        .iter()
        .zip(nu.weights())
        .enumerate()
        .map(|(i, (m, n))| {
            if *n > 0.0 {
                Ok(m / n)
            } else if *m > 0.0 {
                Err(Error::AbsoluteContinuity(format!(
                    "atom {i} has mass {m} under mu and none under nu"
                )))
            } else {
                Ok(0.0)
            }
        })
        .collect()
}

pub fn decorrelation_terms(
    mu: &FiniteMeasure,
    nu: &FiniteMeasure,
    f: &[f64],
    g: &[f64],
    p: f64,
) -> Result<DecorrelationTerms> {
    check_p(p)?;
    let dens = density(mu, nu)?;
    if f.len() != mu.len() || g.len() != mu.len() {
        return Err(Error::dim("f and g must match the support size"));
    }
    if f.iter().chain(g).any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Domain("f and g must be finite and nonnegative".into()));
    }
    let mw = mu.weights();
    let nw = nu.weights();
    let two = 2f64.powf(1.0 / p);
    let four = 4f64.powf(1.0 / p);

    let mut lhs = 0.0;
    let mut density_term = 0.0;
    let mut l1_mu = 0.0;
    for i in 0..mw.len() {
        if mw[i] > 0.0 {
            lhs += mw[i] * f[i] * g[i];
            density_term += mw[i] * f[i] * psi_inv_unchecked(dens[i], p);
            l1_mu += mw[i] * f[i];
        }
    }
    let mut regularity = 0.0;
    let mut l2_nu = 0.0;
    let mut max_exp = f64::NEG_INFINITY;
    for i in 0..nw.len() {
        if nw[i] > 0.0 {
            if f[i] > 0.0 {
                regularity += nw[i] * f[i] * psi_unchecked(g[i], p);
            }
            l2_nu += nw[i] * f[i] * f[i];
            max_exp = max_exp.max(g[i].powf(p));
        }
    }
    let lse = max_exp
        + nw.iter()
            .zip(g)
            .filter(|(w, _)| **w > 0.0)
            .map(|(w, v)| w * (v.powf(p) - max_exp).exp())
            .sum::<f64>()
            .ln();
    let tail = if l1_mu > 0.0 {
        four * l1_mu * lse.max(0.0).powf(1.0 / p)
    } else {
        0.0
    };
    Ok(DecorrelationTerms {
        lhs,
        rhs1: two * density_term + regularity,
        rhs2: two * l2_nu.sqrt() + four * density_term + tail,
    })
}

/// `(<mu, psi_p^{-1}(d mu / d nu)>, (D(mu || nu) + 1)^(1/p))`.
pub fn check_psi_kl(mu: &FiniteMeasure, nu: &FiniteMeasure, p: f64) -> Result<(f64, f64)> {
    check_p(p)?;
    let dens = density(mu, nu)?;
    let lhs = mu
        .weights()
        .iter()
        .zip(&dens)
        .filter(|(w, _)| **w > 0.0)
        .map(|(w, d)| w * psi_inv_unchecked(*d, p))
        .sum();
    let rhs = (kl_divergence(mu, nu)? + 1.0).powf(1.0 / p);
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn m(w: &[f64]) -> FiniteMeasure {
        FiniteMeasure::new(w.to_vec()).unwrap()
    }

    #[test]
    fn psi_examples() {
        assert_eq!(psi(0.0, 2.0).unwrap(), 0.0);
        assert_relative_eq!(psi(2f64.ln().sqrt(), 2.0).unwrap(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(psi(1.0, 1.0).unwrap(), std::f64::consts::E - 1.0, epsilon = 1e-15);
        assert!(matches!(psi(-1.0, 2.0), Err(Error::Domain(_))));
        assert!(matches!(psi(1.0, 0.5), Err(Error::Domain(_))));

        assert_eq!(psi_inv(0.0, 3.0).unwrap(), 0.0);
        assert_relative_eq!(psi_inv(1.0, 2.0).unwrap(), 0.832_554_611_157_697_7, epsilon = 1e-15);
        assert_relative_eq!(psi_inv(std::f64::consts::E - 1.0, 1.0).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn norm_examples() {
        let zero = DiscreteRandomVariable::new(vec![0.0, 0.0], m(&[0.5, 0.5])).unwrap();
        assert_eq!(orlicz_norm(&zero, 2.0).unwrap(), 0.0);

        for p in [1.0, 1.5, 2.0, 3.0] {
            let c = DiscreteRandomVariable::new(vec![-1.7, 1.7], m(&[0.3, 0.7])).unwrap();
            assert_relative_eq!(
                orlicz_norm(&c, p).unwrap(),
                1.7 / 2f64.ln().powf(1.0 / p),
                max_relative = 1e-10
            );
        }

        // 0.5 (e^{1/c} - 1) = 1  =>  c = 1 / ln 3
        let two_point = DiscreteRandomVariable::new(vec![0.0, 1.0], m(&[0.5, 0.5])).unwrap();
        assert_relative_eq!(
            orlicz_norm(&two_point, 1.0).unwrap(),
            1.0 / 3f64.ln(),
            max_relative = 1e-10
        );
    }

    #[test]
    fn psi_property_examples() {
        let report = check_psi_properties(&[(0.0, 2.0, 3.0)]).unwrap();
        assert!(report[..3].iter().all(|r| r.max_violation <= 0.0));
        assert!(report[3].argmax_input.is_none());

        let report = check_psi_properties(&[(1.0, 2.0, 1.0)]).unwrap();
        assert!(report[3].max_violation <= 0.0);
        assert_relative_eq!(report[3].max_violation, 2f64.ln().sqrt() - 1.0, epsilon = 1e-15);

        let mut grid = Vec::new();
        for i in 0..=1000 {
            for p in [1.0, 1.5, 2.0, 3.0] {
                for q in [1.0, 2.0, 5.0] {
                    grid.push((i as f64 / 100.0, p, q));
                }
            }
        }
        for item in check_psi_properties(&grid).unwrap() {
            assert!(item.max_violation <= 1e-12, "{item:?}");
        }
    }

    #[test]
    fn sum_integral_examples() {
        let one = Profile::Step {
            knots: vec![1.0],
            values: vec![1.0],
        };
        let s = check_sum_to_integral(&one, 2.0, 3).unwrap();
        assert_abs_diff_eq!(s.lhs, 0.875, epsilon = 1e-15);
        assert_abs_diff_eq!(s.mid, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.rhs, 8.0, epsilon = 1e-15);

        let constant = |_: f64| 1.0;
        let s = check_sum_to_integral(&Profile::Function(&constant), 2.0, 3).unwrap();
        assert_abs_diff_eq!(s.mid, 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s.rhs, 8.0, epsilon = 1e-9);

        let blowup = |e: f64| 1.0 / e;
        assert!(matches!(
            check_sum_to_integral(&Profile::Function(&blowup), 2.0, 3),
            Err(Error::NonIntegrable(_))
        ));
        let increasing = |e: f64| e;
        assert!(matches!(
            check_sum_to_integral(&Profile::Function(&increasing), 2.0, 3),
            Err(Error::Domain(_))
        ));

        let root = |e: f64| e.powf(-0.5);
        let s = check_sum_to_integral(&Profile::Function(&root), 3.0, 10).unwrap();
        assert_relative_eq!(s.mid, 6.0, max_relative = 1e-8);
        assert!(s.holds(0.0));
    }

    #[test]
    fn decorrelation_examples() {
        let mu = m(&[0.2, 0.3, 0.5]);
        let nu = m(&[0.4, 0.4, 0.2]);
        let t = decorrelation_terms(&mu, &nu, &[1.0, 2.0, 0.5], &[0.0; 3], 2.0).unwrap();
        assert_eq!(t.lhs, 0.0);
        assert!(t.rhs1 >= 0.0 && t.rhs2 >= 0.0);

        for p in [1.0, 2.0, 3.0] {
            let c = 0.7;
            let t = decorrelation_terms(&nu, &nu, &[1.0; 3], &[c; 3], p).unwrap();
            assert_relative_eq!(t.lhs, c, epsilon = 1e-15);
            let expected = 2f64.powf(1.0 / p) * 2f64.ln().powf(1.0 / p) + psi(c, p).unwrap();
            assert_relative_eq!(t.rhs1, expected, epsilon = 1e-14);
        }

        let singular = decorrelation_terms(&m(&[0.5, 0.5]), &m(&[1.0, 0.0]), &[1.0; 2], &[1.0; 2], 2.0);
        assert!(matches!(singular, Err(Error::AbsoluteContinuity(_))));
    }

    #[test]
    fn psi_kl_examples() {
        let nu = m(&[0.1, 0.6, 0.3]);
        for p in [1.0, 2.0, 3.0] {
            let (lhs, rhs) = check_psi_kl(&nu, &nu, p).unwrap();
            assert_relative_eq!(lhs, 2f64.ln().powf(1.0 / p), epsilon = 1e-15);
            assert_eq!(rhs, 1.0);
        }
        let (lhs, rhs) = check_psi_kl(&m(&[1.0, 0.0]), &m(&[0.5, 0.5]), 2.0).unwrap();
        assert_relative_eq!(lhs, 3f64.ln().sqrt(), epsilon = 1e-15);
        assert_relative_eq!(rhs, (2f64.ln() + 1.0).sqrt(), epsilon = 1e-15);
        assert!(lhs <= rhs);
    }
}
