//! Eigenvalue spectra, empirical spectral distributions and resolvents.

use std::io::{BufRead, Write};

use faer::diag::Diag;
use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::evd::{self, ComputeEigenvectors};
use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, Par};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::SymmetricMatrix;

/// Smallest |Im z| accepted by resolvent-type evaluations.
pub const MIN_IMAG: f64 = 1e-9;

/// Eigenvalue tolerance `1e-9 * order * max|entry|`.
pub fn tol_eig(m: &SymmetricMatrix) -> f64 {
    1e-9 * m.order() as f64 * m.max_abs()
}

/// Spectral rank cutoff `order * eps * max|eigenvalue|`.
pub fn tol_rank(eigenvalues: &[f64]) -> f64 {
    let max = eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    eigenvalues.len() as f64 * f64::EPSILON * max
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixKind {
    Tau,
    H,
    Custom,
}

impl MatrixKind {
    pub fn tag(self) -> &'static str {
        match self {
            MatrixKind::Tau => "tau",
            MatrixKind::H => "h",
            MatrixKind::Custom => "custom",
        }
    }
}

impl std::str::FromStr for MatrixKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tau" => Ok(MatrixKind::Tau),
            "h" => Ok(MatrixKind::H),
            "custom" => Ok(MatrixKind::Custom),
            other => Err(Error::Parse(format!("unknown matrix kind `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumMeta {
    pub n: Option<usize>,
    pub p: usize,
    /// `p / n`
    pub q: Option<f64>,
    /// `2p / (n(n-1))`
    pub q_prime: Option<f64>,
    pub source: MatrixKind,
}

impl SpectrumMeta {
    pub fn for_samples(n: usize, p: usize, source: MatrixKind) -> Self {
        Self {
            n: Some(n),
            p,
            q: Some(p as f64 / n as f64),
            q_prime: Some(2.0 * p as f64 / (n * (n - 1)) as f64),
            source,
        }
    }

    pub fn custom(p: usize) -> Self {
        Self { n: None, p, q: None, q_prime: None, source: MatrixKind::Custom }
    }
}

/// Full symmetric eigendecomposition `M = Q diag(values) Q^T`.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    pub vectors: Mat<f64>,
}

impl EigenDecomposition {
    /// `||M - Q L Q^T||_F / ||M||_F`
    pub fn relative_residual(&self, m: &SymmetricMatrix) -> f64 {
        let p = m.order();
        let scaled = Mat::from_fn(p, p, |i, j| self.vectors[(i, j)] * self.values[j]);
        let mut rebuilt = m.to_faer();
        matmul(rebuilt.as_mut(), Accum::Add, scaled.as_ref(), self.vectors.transpose(), -1.0, Par::Seq);
        let norm = m.frobenius_norm();
        let err = rebuilt.norm_l2();
        if norm == 0.0 {
            err
        } else {
            err / norm
        }
    }

    /// `max |Q^T Q - I|`
    pub fn orthogonality_error(&self) -> f64 {
        let p = self.values.len();
        let mut g = Mat::<f64>::zeros(p, p);
        matmul(g.as_mut(), Accum::Replace, self.vectors.transpose(), self.vectors.as_ref(), 1.0, Par::Seq);
        let mut worst = 0.0f64;
        for i in 0..p {
            for j in 0..p {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - target).abs());
            }
        }
        worst
    }
}

fn run_evd(m: &SymmetricMatrix, with_vectors: bool) -> Result<(Vec<f64>, Option<Mat<f64>>)> {
    let p = m.order();
    if m.lower().iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("matrix has non-finite entries".into()));
    }
    let a = m.to_faer();
    let mut s = Diag::<f64>::zeros(p);
    let mut u = with_vectors.then(|| Mat::<f64>::zeros(p, p));
    let compute = if with_vectors { ComputeEigenvectors::Yes } else { ComputeEigenvectors::No };
    let par = Par::Seq;
    let mut mem = MemBuffer::new(evd::self_adjoint_evd_scratch::<f64>(p, compute, par, Default::default()));
    evd::self_adjoint_evd(
        a.as_ref(),
        s.as_mut(),
        u.as_mut().map(|u| u.as_mut()),
        par,
        MemStack::new(&mut mem),
        Default::default(),
    )
    .map_err(|_| Error::NoConvergence)?;
    let values: Vec<f64> = s.as_ref().column_vector().iter().copied().collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NoConvergence);
    }
    Ok((values, u))
}

/// Eigenvalues and orthonormal eigenvectors, ascending.
pub fn eigen_symmetric(m: &SymmetricMatrix) -> Result<EigenDecomposition> {
    let (values, vectors) = run_evd(m, true)?;
    Ok(EigenDecomposition { values, vectors: vectors.expect("requested eigenvectors") })
}

/// Eigenvalues only, ascending.
pub fn eigenvalues(m: &SymmetricMatrix) -> Result<Vec<f64>> {
    let (mut values, _) = run_evd(m, false)?;
    values.sort_unstable_by(f64::total_cmp);
    Ok(values)
}

/// Sorted eigenvalues of one matrix, with where they came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
    meta: SpectrumMeta,
}

impl Spectrum {
    pub fn new(mut eigenvalues: Vec<f64>, meta: SpectrumMeta) -> Self {
        eigenvalues.sort_unstable_by(f64::total_cmp);
        Self { eigenvalues, meta }
    }

    pub fn from_matrix(m: &SymmetricMatrix, meta: SpectrumMeta) -> Result<Self> {
        Ok(Self::new(eigenvalues(m)?, meta))
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn meta(&self) -> &SpectrumMeta {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.eigenvalues.iter().sum::<f64>() / self.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max(&self) -> f64 {
        self.eigenvalues[self.len() - 1]
    }

    pub fn count_at_most(&self, threshold: f64) -> usize {
        self.eigenvalues.partition_point(|&v| v <= threshold)
    }

    pub fn esd(&self) -> EmpiricalDistribution {
        EmpiricalDistribution::from_sorted(self.eigenvalues.clone())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let opt = |v: Option<f64>| v.map_or_else(|| "none".to_string(), |v| v.to_string());
        writeln!(
            w,
            "# source={} n={} p={} q={} q_prime={}",
            self.meta.source.tag(),
            self.meta.n.map_or_else(|| "none".to_string(), |n| n.to_string()),
            self.meta.p,
            opt(self.meta.q),
            opt(self.meta.q_prime),
        )?;
        for v in &self.eigenvalues {
            writeln!(w, "{v}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut values = Vec::new();
        let mut meta = SpectrumMeta::custom(0);
        let parse_err = |s: &str| Error::Parse(format!("bad spectrum field `{s}`"));
        for line in r.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(header) = line.strip_prefix('#') {
                for field in header.split_whitespace() {
                    let Some((key, v)) = field.split_once('=') else { continue };
                    let num = |v: &str| -> Result<Option<f64>> {
                        if v == "none" {
                            Ok(None)
                        } else {
                            v.parse().map(Some).map_err(|_| parse_err(v))
                        }
                    };
                    match key {
                        "source" => meta.source = v.parse()?,
                        "n" => meta.n = num(v)?.map(|x| x as usize),
                        "q" => meta.q = num(v)?,
                        "q_prime" => meta.q_prime = num(v)?,
                        _ => {}
                    }
                }
                continue;
            }
            values.push(line.parse::<f64>().map_err(|_| parse_err(line))?);
        }
        meta.p = values.len();
        Ok(Self::new(values, meta))
    }
}

/// Anything with a right-continuous CDF that can be compared in sup norm.
pub trait DistributionFunction {
    fn cdf(&self, x: f64) -> f64;
    /// `lim_{t -> x-} F(t)`
    fn cdf_left(&self, x: f64) -> f64;
    /// Points where the CDF jumps or where its supremum distance to a step
    /// function may be attained.
    fn jump_points(&self) -> Vec<f64>;
}

/// Step CDF with mass `1/len` at each support point.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalDistribution {
    points: Vec<f64>,
}

impl EmpiricalDistribution {
    pub fn new(mut points: Vec<f64>) -> Self {
        points.sort_unstable_by(f64::total_cmp);
        Self { points }
    }

    fn from_sorted(points: Vec<f64>) -> Self {
        debug_assert!(points.windows(2).all(|w| w[0] <= w[1]));
        Self { points }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Renormalized distribution of the points `<= cut`.
    pub fn restricted_to_at_most(&self, cut: f64) -> Self {
        let k = self.points.partition_point(|&v| v <= cut);
        Self { points: self.points[..k].to_vec() }
    }

    pub fn histogram(&self, bins: usize) -> Histogram {
        let bins = bins.max(1);
        let (lo, hi) = match (self.points.first(), self.points.last()) {
            (Some(&lo), Some(&hi)) if hi > lo => (lo, hi),
            (Some(&lo), _) => (lo - 0.5, lo + 0.5),
            _ => (0.0, 1.0),
        };
        let width = (hi - lo) / bins as f64;
        let edges: Vec<f64> = (0..=bins).map(|b| if b == bins { hi } else { lo + b as f64 * width }).collect();
        let mut counts = vec![0u64; bins];
        for &v in &self.points {
            let b = (((v - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        Histogram { edges, counts }
    }

    /// Freedman-Diaconis bin count, never fewer than 30.
    pub fn freedman_diaconis_bins(&self) -> usize {
        const FLOOR: usize = 30;
        const CAP: usize = 10_000;
        let len = self.points.len();
        if len < 4 {
            return FLOOR;
        }
        let q = |f: f64| self.points[((len - 1) as f64 * f).round() as usize];
        let iqr = q(0.75) - q(0.25);
        let range = self.points[len - 1] - self.points[0];
        if iqr <= 0.0 || range <= 0.0 {
            return FLOOR;
        }
        let width = 2.0 * iqr / (len as f64).cbrt();
        ((range / width).ceil() as usize).clamp(FLOOR, CAP)
    }
}

impl DistributionFunction for EmpiricalDistribution {
    fn cdf(&self, x: f64) -> f64 {
        self.points.partition_point(|&v| v <= x) as f64 / self.points.len() as f64
    }

    fn cdf_left(&self, x: f64) -> f64 {
        self.points.partition_point(|&v| v < x) as f64 / self.points.len() as f64
    }

    fn jump_points(&self) -> Vec<f64> {
        let mut pts = self.points.clone();
        pts.dedup();
        pts
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

/// Sup-norm distance between two CDFs, evaluated on both sides of every
/// jump point of either argument.
pub fn ks_distance<A, B>(a: &A, b: &B) -> f64
where
    A: DistributionFunction + ?Sized,
    B: DistributionFunction + ?Sized,
{
    let mut pts = a.jump_points();
    pts.extend(b.jump_points());
    pts.iter().fold(0.0f64, |worst, &x| {
        let right = (a.cdf(x) - b.cdf(x)).abs();
        let left = (a.cdf_left(x) - b.cdf_left(x)).abs();
        worst.max(right).max(left)
    })
}

fn check_off_axis(z: Complex64) -> Result<()> {
    if z.im.abs() < MIN_IMAG || !z.re.is_finite() || !z.im.is_finite() {
        return Err(Error::NearRealAxis { re: z.re, im: z.im });
    }
    Ok(())
}

/// `(1/p) sum 1/(z - lambda_i)`
pub fn stieltjes_from_eigenvalues(eigenvalues: &[f64], z: Complex64) -> Result<Complex64> {
    check_off_axis(z)?;
    let sum: Complex64 = eigenvalues.iter().map(|&l| (z - l).inv()).sum();
    Ok(sum / eigenvalues.len() as f64)
}

pub fn stieltjes_empirical(s: &Spectrum, z: Complex64) -> Result<Complex64> {
    stieltjes_from_eigenvalues(s.eigenvalues(), z)
}

/// Dense row-major complex square matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix {
    order: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.order + j]
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.order).map(|i| self.get(i, i)).sum()
    }

    /// `max |(zI - M) G - I|` with `self = G`.
    pub fn resolvent_residual(&self, m: &SymmetricMatrix, z: Complex64) -> f64 {
        let p = self.order;
        let mut worst = 0.0f64;
        for i in 0..p {
            for j in 0..p {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..p {
                    let a = if i == k { z - m.get(i, k) } else { Complex64::new(-m.get(i, k), 0.0) };
                    acc += a * self.get(k, j);
                }
                if i == j {
                    acc -= 1.0;
                }
                worst = worst.max(acc.norm());
            }
        }
        worst
    }
}

/// `(zI - M)^{-1}` by LU factorization with partial pivoting.
pub fn resolvent(m: &SymmetricMatrix, z: Complex64) -> Result<ComplexMatrix> {
    check_off_axis(z)?;
    let p = m.order();
    let mut lu: Vec<Complex64> = (0..p * p)
        .map(|t| {
            let (i, j) = (t / p, t % p);
            let v = Complex64::new(-m.get(i, j), 0.0);
            if i == j {
                v + z
            } else {
                v
            }
        })
        .collect();
    let mut perm: Vec<usize> = (0..p).collect();
    for col in 0..p {
        let pivot = (col..p)
            .max_by(|&a, &b| lu[a * p + col].norm().total_cmp(&lu[b * p + col].norm()))
            .expect("non-empty range");
        if lu[pivot * p + col].norm() == 0.0 {
            return Err(Error::SingularFactorization);
        }
        if pivot != col {
            for j in 0..p {
                lu.swap(col * p + j, pivot * p + j);
            }
            perm.swap(col, pivot);
        }
        let d = lu[col * p + col];
        for i in col + 1..p {
            let f = lu[i * p + col] / d;
            lu[i * p + col] = f;
            for j in col + 1..p {
                let u = lu[col * p + j];
                lu[i * p + j] -= f * u;
            }
        }
    }
    // Solve L U g = P e_c for every column c.
    let mut data = vec![Complex64::new(0.0, 0.0); p * p];
    let mut y = vec![Complex64::new(0.0, 0.0); p];
    for c in 0..p {
        for i in 0..p {
            let mut acc = if perm[i] == c { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) };
            for k in 0..i {
                acc -= lu[i * p + k] * y[k];
            }
            y[i] = acc;
        }
        for i in (0..p).rev() {
            let mut acc = y[i];
            for k in i + 1..p {
                acc -= lu[i * p + k] * data[k * p + c];
            }
            data[i * p + c] = acc / lu[i * p + i];
        }
    }
    Ok(ComplexMatrix { order: p, data })
}

/// Number of eigenvalues with `|lambda| > tol_rank`.
pub fn numerical_rank(m: &SymmetricMatrix) -> Result<usize> {
    Ok(rank_from_eigenvalues(&eigenvalues(m)?))
}

pub fn rank_from_eigenvalues(eigenvalues: &[f64]) -> usize {
    let tol = tol_rank(eigenvalues);
    eigenvalues.iter().filter(|v| v.abs() > tol).count()
}
