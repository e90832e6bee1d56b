//! Finite-support probability calculus.
//!
//! All divergences are in nats. The conventions for degenerate atoms are the
//! usual measure-theoretic ones: `0 log(0/q) = 0`, and any atom with `p > 0`
//! and `q = 0` makes the divergence `+inf`. Infinite values are returned as
//! `f64::INFINITY`, never as errors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on the total mass of a measure.
pub const MASS_TOLERANCE: f64 = 1e-12;

/// Drift above [`MASS_TOLERANCE`] but below this is renormalized away;
/// anything larger is rejected.
pub const RENORMALIZE_LIMIT: f64 = 1e-9;

fn normalize(mut weights: Vec<f64>, what: &str) -> Result<Vec<f64>> {
    if weights.is_empty() {
        return Err(Error::InvalidMeasure(format!("{what}: empty support")));
    }
    if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !w.is_finite() || **w < 0.0) {
        return Err(Error::InvalidMeasure(format!(
            "{what}: weight {i} is {w}, expected a finite nonnegative number"
        )));
    }
    let total: f64 = weights.iter().sum();
    let drift = (total - 1.0).abs();
    if drift <= MASS_TOLERANCE {
        Ok(weights)
    } else if drift <= RENORMALIZE_LIMIT {
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(weights)
    } else {
        Err(Error::InvalidMeasure(format!("{what}: total mass {total} is not 1")))
    }
}

/// `q * phi(p / q)` with `phi(x) = x ln x - x + 1`.
///
/// Summing these terms gives `D(p || q)` whenever both sides have unit mass,
/// and every term is nonnegative, so rounding cannot drive a divergence below
/// zero.
#[inline]
pub(crate) fn kl_term(p: f64, q: f64) -> f64 {
    if p <= 0.0 {
        q.max(0.0)
    } else if q <= 0.0 {
        f64::INFINITY
    } else {
        (p * (p / q).ln() - p + q).max(0.0)
    }
}

/// A probability vector over `{0, .., len-1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureRepr")]
pub struct FiniteMeasure {
    weights: Vec<f64>,
}

#[derive(Deserialize)]
struct MeasureRepr {
    weights: Vec<f64>,
}

impl TryFrom<MeasureRepr> for FiniteMeasure {
    type Error = Error;
    fn try_from(r: MeasureRepr) -> Result<Self> {
        FiniteMeasure::new(r.weights)
    }
}

impl FiniteMeasure {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        Ok(Self {
            weights: normalize(weights, "measure")?,
        })
    }

    /// Normalizes arbitrary nonnegative weights with positive total.
    pub fn from_unnormalized(weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::InvalidMeasure(format!(
                "cannot normalize weights with total {total}"
            )));
        }
        Self::new(weights.into_iter().map(|w| w / total).collect())
    }

    pub fn uniform(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::InvalidMeasure("uniform over empty support".into()));
        }
        Ok(Self {
            weights: vec![1.0 / len as f64; len],
        })
    }

    pub fn dirac(len: usize, at: usize) -> Result<Self> {
        if at >= len {
            return Err(Error::dim(format!("dirac at {at} outside support of size {len}")));
        }
        let mut weights = vec![0.0; len];
        weights[at] = 1.0;
        Ok(Self { weights })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.weights
    }

    /// `<self, f>`.
    pub fn expect(&self, f: &[f64]) -> Result<f64> {
        if f.len() != self.len() {
            return Err(Error::dim(format!(
                "function of length {} against measure of length {}",
                f.len(),
                self.len()
            )));
        }
        Ok(self
            .weights
            .iter()
            .zip(f)
            .filter(|(w, _)| **w > 0.0)
            .map(|(w, v)| w * v)
            .sum())
    }

    pub fn is_absolutely_continuous(&self, other: &FiniteMeasure) -> bool {
        self.len() == other.len()
            && self
                .weights
                .iter()
                .zip(&other.weights)
                .all(|(p, q)| *p <= 0.0 || *q > 0.0)
    }

    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 0.0)
            .map(|(i, _)| i)
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self
            .weights
            .iter()
            .filter(|w| **w > 0.0)
            .map(|w| w * w.ln())
            .sum::<f64>()
    }
}

impl std::ops::Index<usize> for FiniteMeasure {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.weights[i]
    }
}

/// A row-stochastic table: one [`FiniteMeasure`] per input index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelRepr", into = "KernelRepr")]
pub struct MarkovKernel {
    rows: Vec<FiniteMeasure>,
}

#[derive(Serialize, Deserialize)]
struct KernelRepr {
    rows: Vec<Vec<f64>>,
}

impl TryFrom<KernelRepr> for MarkovKernel {
    type Error = Error;
    fn try_from(r: KernelRepr) -> Result<Self> {
        MarkovKernel::from_rows(r.rows)
    }
}

impl From<MarkovKernel> for KernelRepr {
    fn from(k: MarkovKernel) -> Self {
        KernelRepr {
            rows: k.rows.into_iter().map(FiniteMeasure::into_weights).collect(),
        }
    }
}

impl MarkovKernel {
    pub fn new(rows: Vec<FiniteMeasure>) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::InvalidMeasure("kernel with no rows".into()));
        };
        let width = first.len();
        if let Some(i) = rows.iter().position(|r| r.len() != width) {
            return Err(Error::dim(format!(
                "kernel row {i} has {} outputs, row 0 has {width}",
                rows[i].len()
            )));
        }
        Ok(Self { rows })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(rows.into_iter().map(FiniteMeasure::new).collect::<Result<Vec<_>>>()?)
    }

    /// The kernel that ignores its input.
    pub fn constant(input_size: usize, row: FiniteMeasure) -> Result<Self> {
        if input_size == 0 {
            return Err(Error::InvalidMeasure("kernel with no rows".into()));
        }
        Ok(Self {
            rows: vec![row; input_size],
        })
    }

    pub fn input_size(&self) -> usize {
        self.rows.len()
    }

    pub fn output_size(&self) -> usize {
        self.rows[0].len()
    }

    pub fn row(&self, x: usize) -> &FiniteMeasure {
        &self.rows[x]
    }

    pub fn rows(&self) -> &[FiniteMeasure] {
        &self.rows
    }

    /// True when every row is bitwise identical to the first.
    pub fn is_constant(&self) -> bool {
        self.rows.iter().all(|r| r == &self.rows[0])
    }

    /// Output marginal `sum_x base[x] * row[x]`.
    ///
    /// A kernel whose rows are all identical returns that row exactly.
    pub fn mix(&self, base: &FiniteMeasure) -> Result<FiniteMeasure> {
        if base.len() != self.input_size() {
            return Err(Error::dim(format!(
                "base of size {} for kernel with {} inputs",
                base.len(),
                self.input_size()
            )));
        }
        if self.is_constant() {
            return Ok(self.rows[0].clone());
        }
        let mut out = vec![0.0; self.output_size()];
        for (b, row) in base.weights().iter().zip(&self.rows) {
            if *b > 0.0 {
                for (o, r) in out.iter_mut().zip(row.weights()) {
                    *o += b * r;
                }
            }
        }
        FiniteMeasure::new(out)
    }
}

/// A probability matrix indexed by `(x, y)`, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "JointRepr", into = "JointRepr")]
pub struct JointMeasure {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct JointRepr {
    weights: Vec<Vec<f64>>,
}

impl TryFrom<JointRepr> for JointMeasure {
    type Error = Error;
    fn try_from(r: JointRepr) -> Result<Self> {
        JointMeasure::from_matrix(r.weights)
    }
}

impl From<JointMeasure> for JointRepr {
    fn from(j: JointMeasure) -> Self {
        JointRepr { weights: j.to_matrix() }
    }
}

impl JointMeasure {
    pub fn new(rows: usize, cols: usize, weights: Vec<f64>) -> Result<Self> {
        if rows * cols != weights.len() || rows == 0 || cols == 0 {
            return Err(Error::dim(format!(
                "{} weights for a {rows}x{cols} joint",
                weights.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            weights: normalize(weights, "joint measure")?,
        })
    }

    pub fn from_matrix(m: Vec<Vec<f64>>) -> Result<Self> {
        let rows = m.len();
        let cols = m.first().map_or(0, Vec::len);
        if m.iter().any(|r| r.len() != cols) {
            return Err(Error::dim("ragged joint matrix"));
        }
        Self::new(rows, cols, m.into_iter().flatten().collect())
    }

    pub fn product_of(a: &FiniteMeasure, b: &FiniteMeasure) -> Self {
        let weights = a
            .weights()
            .iter()
            .flat_map(|x| b.weights().iter().map(move |y| x * y))
            .collect();
        Self {
            rows: a.len(),
            cols: b.len(),
            weights,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.weights[x * self.cols + y]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn to_matrix(&self) -> Vec<Vec<f64>> {
        self.weights.chunks(self.cols).map(<[f64]>::to_vec).collect()
    }

    pub fn row_marginal(&self) -> FiniteMeasure {
        let w = self.weights.chunks(self.cols).map(|r| r.iter().sum()).collect();
        FiniteMeasure::new(w).expect("row sums of a valid joint")
    }

    pub fn col_marginal(&self) -> FiniteMeasure {
        let mut w = vec![0.0; self.cols];
        for r in self.weights.chunks(self.cols) {
            for (o, v) in w.iter_mut().zip(r) {
                *o += v;
            }
        }
        FiniteMeasure::new(w).expect("column sums of a valid joint")
    }

    /// The conditional law of `y` given `x`. Rows of zero mass get the
    /// uniform law; they carry no weight in any expectation.
    pub fn conditional(&self) -> MarkovKernel {
        let rows = self
            .weights
            .chunks(self.cols)
            .map(|r| {
                FiniteMeasure::from_unnormalized(r.to_vec())
                    .unwrap_or_else(|_| FiniteMeasure::uniform(self.cols).unwrap())
            })
            .collect();
        MarkovKernel { rows }
    }

    pub fn as_measure(&self) -> FiniteMeasure {
        FiniteMeasure {
            weights: self.weights.clone(),
        }
    }
}

/// A probability array indexed by `(x, y, z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointMeasure3 {
    dims: [usize; 3],
    weights: Vec<f64>,
}

impl JointMeasure3 {
    pub fn new(dims: [usize; 3], weights: Vec<f64>) -> Result<Self> {
        if dims.iter().product::<usize>() != weights.len() || dims.contains(&0) {
            return Err(Error::dim(format!("{} weights for a {:?} joint", weights.len(), dims)));
        }
        Ok(Self {
            dims,
            weights: normalize(weights, "three-way joint")?,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (x * self.dims[1] + y) * self.dims[2] + z
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.weights[self.index(x, y, z)]
    }

    /// Marginal over `(x, z)`, indexed `x * nz + z`.
    pub fn xz_marginal(&self) -> Vec<f64> {
        let [nx, ny, nz] = self.dims;
        let mut out = vec![0.0; nx * nz];
        for x in 0..nx {
            for y in 0..ny {
                for z in 0..nz {
                    out[x * nz + z] += self.get(x, y, z);
                }
            }
        }
        out
    }

    /// Marginal over `(y, z)`, indexed `y * nz + z`.
    pub fn yz_marginal(&self) -> Vec<f64> {
        let [nx, ny, nz] = self.dims;
        let mut out = vec![0.0; ny * nz];
        for x in 0..nx {
            for y in 0..ny {
                for z in 0..nz {
                    out[y * nz + z] += self.get(x, y, z);
                }
            }
        }
        out
    }

    pub fn z_marginal(&self) -> FiniteMeasure {
        let [nx, ny, nz] = self.dims;
        let mut out = vec![0.0; nz];
        for x in 0..nx {
            for y in 0..ny {
                for (z, o) in out.iter_mut().enumerate() {
                    *o += self.get(x, y, z);
                }
            }
        }
        FiniteMeasure::new(out).expect("marginal of a valid joint")
    }

    /// Collapses `z` into the joint law of `(x, y)`.
    pub fn xy_marginal(&self) -> JointMeasure {
        let [nx, ny, nz] = self.dims;
        let mut out = vec![0.0; nx * ny];
        for x in 0..nx {
            for y in 0..ny {
                out[x * ny + y] = (0..nz).map(|z| self.get(x, y, z)).sum();
            }
        }
        JointMeasure::new(nx, ny, out).expect("marginal of a valid joint")
    }
}

/// `P_X (x) P_{Y|X}`.
pub fn product(p_x: &FiniteMeasure, k: &MarkovKernel) -> Result<JointMeasure> {
    if k.input_size() != p_x.len() {
        return Err(Error::dim(format!(
            "kernel with {} inputs against a measure of size {}",
            k.input_size(),
            p_x.len()
        )));
    }
    let cols = k.output_size();
    let weights = p_x
        .weights()
        .iter()
        .zip(k.rows())
        .flat_map(|(px, row)| row.weights().iter().map(move |r| px * r))
        .collect();
    Ok(JointMeasure {
        rows: p_x.len(),
        cols,
        weights,
    })
}

/// `D(mu || nu)` in nats; `+inf` when `mu` is not absolutely continuous
/// with respect to `nu`.
pub fn kl_divergence(mu: &FiniteMeasure, nu: &FiniteMeasure) -> Result<f64> {
    if mu.len() != nu.len() {
        return Err(Error::dim(format!(
            "divergence between measures of size {} and {}",
            mu.len(),
            nu.len()
        )));
    }
    Ok(kl_raw(mu.weights(), nu.weights()))
}

pub(crate) fn kl_raw(p: &[f64], q: &[f64]) -> f64 {
    let mut d = 0.0;
    for (a, b) in p.iter().zip(q) {
        d += kl_term(*a, *b);
        if d == f64::INFINITY {
            break;
        }
    }
    d
}

/// `I(X; Y) = D(P_XY || P_X (x) P_Y)`.
pub fn mutual_information(joint: &JointMeasure) -> f64 {
    let px = joint.row_marginal();
    let py = joint.col_marginal();
    let mut total = 0.0;
    for x in 0..joint.rows {
        for y in 0..joint.cols {
            total += kl_term(joint.get(x, y), px[x] * py[y]);
        }
    }
    total
}

/// `D(P || Q | base) = sum_u base[u] D(P_u || Q_u)`.
///
/// Inputs with zero base mass do not contribute, even when their rows are
/// singular.
pub fn conditional_divergence(p: &MarkovKernel, q: &MarkovKernel, base: &FiniteMeasure) -> Result<f64> {
    if p.input_size() != q.input_size() || p.output_size() != q.output_size() || base.len() != p.input_size() {
        return Err(Error::dim(format!(
            "conditional divergence of {}x{} and {}x{} kernels over base of size {}",
            p.input_size(),
            p.output_size(),
            q.input_size(),
            q.output_size(),
            base.len()
        )));
    }
    let mut total = 0.0;
    for ((b, pr), qr) in base.weights().iter().zip(p.rows()).zip(q.rows()) {
        if *b > 0.0 {
            total += b * kl_raw(pr.weights(), qr.weights());
        }
    }
    Ok(total)
}

/// `I(X; Y | Z)` for a joint indexed `(x, y, z)`.
pub fn conditional_mutual_information(joint: &JointMeasure3) -> f64 {
    let [nx, ny, nz] = joint.dims;
    let xz = joint.xz_marginal();
    let yz = joint.yz_marginal();
    let z = joint.z_marginal();
    let mut total = 0.0;
    for x in 0..nx {
        for y in 0..ny {
            for k in 0..nz {
                let pz = z[k];
                if pz <= 0.0 {
                    continue;
                }
                let reference = xz[x * nz + k] * yz[y * nz + k] / pz;
                total += kl_term(joint.get(x, y, k), reference);
            }
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn m(w: &[f64]) -> FiniteMeasure {
        FiniteMeasure::new(w.to_vec()).unwrap()
    }

    #[test]
    fn constructor_tolerances() {
        assert!(FiniteMeasure::new(vec![0.5, 0.5 + 5e-13]).is_ok());
        let r = FiniteMeasure::new(vec![0.5, 0.5 + 5e-10]).unwrap();
        assert_abs_diff_eq!(r.weights().iter().sum::<f64>(), 1.0, epsilon = 1e-15);
        assert!(FiniteMeasure::new(vec![0.5, 0.6]).is_err());
        assert!(FiniteMeasure::new(vec![1.5, -0.5]).is_err());
        assert!(FiniteMeasure::new(vec![]).is_err());
        assert!(FiniteMeasure::new(vec![f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn product_examples() {
        let j = product(&m(&[1.0]), &MarkovKernel::from_rows(vec![vec![0.3, 0.7]]).unwrap()).unwrap();
        assert_eq!(j.to_matrix(), vec![vec![0.3, 0.7]]);

        let id = MarkovKernel::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let j = product(&m(&[0.5, 0.5]), &id).unwrap();
        assert_eq!(j.to_matrix(), vec![vec![0.5, 0.0], vec![0.0, 0.5]]);

        let k = MarkovKernel::from_rows(vec![vec![0.2, 0.8], vec![0.6, 0.4]]).unwrap();
        let j = product(&m(&[0.25, 0.75]), &k).unwrap();
        let expected = [0.25 * 0.2, 0.25 * 0.8, 0.75 * 0.6, 0.75 * 0.4];
        for (a, b) in j.weights().iter().zip(expected) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(j.get(0, 0), 0.05, epsilon = 1e-15);
        assert_abs_diff_eq!(j.get(1, 0), 0.45, epsilon = 1e-15);

        let bad = product(&m(&[0.5, 0.5]), &MarkovKernel::from_rows(vec![vec![1.0]]).unwrap());
        assert!(matches!(bad, Err(Error::Dimension(_))));
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_divergence(&m(&[0.5, 0.5]), &m(&[0.5, 0.5])).unwrap(), 0.0);
        assert_abs_diff_eq!(
            kl_divergence(&m(&[1.0, 0.0]), &m(&[0.5, 0.5])).unwrap(),
            std::f64::consts::LN_2,
            epsilon = 1e-15
        );
        // 0.75 ln 1.5 + 0.25 ln 0.5
        assert_abs_diff_eq!(
            kl_divergence(&m(&[0.75, 0.25]), &m(&[0.5, 0.5])).unwrap(),
            0.130_812_035_941_137_38,
            epsilon = 1e-12
        );
        assert_eq!(kl_divergence(&m(&[0.5, 0.5]), &m(&[1.0, 0.0])).unwrap(), f64::INFINITY);
        assert!(kl_divergence(&m(&[1.0]), &m(&[0.5, 0.5])).is_err());
    }

    #[test]
    fn mutual_information_examples() {
        let indep = JointMeasure::product_of(&m(&[0.3, 0.7]), &m(&[0.4, 0.6]));
        assert_abs_diff_eq!(mutual_information(&indep), 0.0, epsilon = 1e-15);

        let bit = JointMeasure::from_matrix(vec![vec![0.5, 0.0], vec![0.0, 0.5]]).unwrap();
        assert_abs_diff_eq!(mutual_information(&bit), std::f64::consts::LN_2, epsilon = 1e-15);

        // ln 2 - h(0.1)
        let bsc = MarkovKernel::from_rows(vec![vec![0.9, 0.1], vec![0.1, 0.9]]).unwrap();
        let j = product(&m(&[0.5, 0.5]), &bsc).unwrap();
        assert_abs_diff_eq!(mutual_information(&j), 0.368_064_207_168_497, epsilon = 1e-12);
    }

    #[test]
    fn conditional_divergence_examples() {
        let p = MarkovKernel::from_rows(vec![vec![0.2, 0.8], vec![0.6, 0.4]]).unwrap();
        assert_eq!(conditional_divergence(&p, &p, &m(&[0.5, 0.5])).unwrap(), 0.0);

        let a = MarkovKernel::from_rows(vec![vec![0.75, 0.25]]).unwrap();
        let b = MarkovKernel::from_rows(vec![vec![0.5, 0.5]]).unwrap();
        assert_eq!(
            conditional_divergence(&a, &b, &m(&[1.0])).unwrap(),
            kl_divergence(a.row(0), b.row(0)).unwrap()
        );

        // an infinite row with zero base mass is ignored
        let q = MarkovKernel::from_rows(vec![vec![1.0, 0.0], vec![0.5, 0.5]]).unwrap();
        assert!(conditional_divergence(&p, &q, &m(&[0.0, 1.0])).unwrap().is_finite());
        assert!(conditional_divergence(&p, &q, &m(&[0.5, 0.5])).unwrap().is_infinite());
    }

    #[test]
    fn cmi_degenerate_cases() {
        // X and Y independent given Z
        let px = [[0.3, 0.7], [0.6, 0.4]];
        let py = [[0.1, 0.9], [0.8, 0.2]];
        let pz = [0.25, 0.75];
        let mut w = vec![0.0; 8];
        for x in 0..2 {
            for y in 0..2 {
                for z in 0..2 {
                    w[(x * 2 + y) * 2 + z] = pz[z] * px[z][x] * py[z][y];
                }
            }
        }
        let j = JointMeasure3::new([2, 2, 2], w).unwrap();
        assert_abs_diff_eq!(conditional_mutual_information(&j), 0.0, epsilon = 1e-15);

        // constant Z reduces to plain mutual information
        let xy = JointMeasure::from_matrix(vec![vec![0.4, 0.1], vec![0.2, 0.3]]).unwrap();
        let j = JointMeasure3::new([2, 2, 1], xy.weights().to_vec()).unwrap();
        assert_abs_diff_eq!(
            conditional_mutual_information(&j),
            mutual_information(&xy),
            epsilon = 1e-15
        );
    }

    #[test]
    fn mix_of_constant_kernel_is_exact() {
        let row = m(&[0.1, 0.2, 0.7]);
        let k = MarkovKernel::constant(3, row.clone()).unwrap();
        assert_eq!(k.mix(&m(&[0.3, 0.3, 0.4])).unwrap(), row);
    }

    #[test]
    fn json_shapes() {
        let mu: FiniteMeasure = serde_json::from_str(r#"{"weights":[0.25,0.75]}"#).unwrap();
        assert_eq!(mu.weights(), &[0.25, 0.75]);
        assert!(serde_json::from_str::<FiniteMeasure>(r#"{"weights":[0.25,0.25]}"#).is_err());
        let k: MarkovKernel = serde_json::from_str(r#"{"rows":[[1.0,0.0],[0.5,0.5]]}"#).unwrap();
        assert_eq!(serde_json::to_string(&k).unwrap(), r#"{"rows":[[1.0,0.0],[0.5,0.5]]}"#);
    }
}
