//! Hoeffding decomposition of pairwise kernels.
//!
//! For an antisymmetric kernel `phi` and `u(x) = E[phi(x, Y)]`, every pair
//! comparison splits as `phi(x_i, x_j) = u(x_i) - u(x_j) + vbar_ij`, where the
//! residual `vbar` is centered and uncorrelated with both projections. With
//! `phi = sign` this is the decomposition behind the Kendall matrix, and the
//! Gram matrix `H = (1/M) Vbar Vbar^T` of the residuals carries the
//! quadratic-regime limit law.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{DataMatrix, MarginalKind};
use crate::error::{Error, Result};
use crate::kendall::pair_count;
use crate::matrix::{gram, product_abt, SymmetricMatrix};

/// Tolerance of the antisymmetry spot check.
pub const ANTISYMMETRY_TOL: f64 = 1e-12;

/// How the single-sample projection `u` is obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionMode {
    /// Population conditional expectation under the known marginal
    /// (`2F(x) - 1` for the sign kernel).
    ExactCdf,
    /// Leave-one-out sample mean `(1/(n-1)) sum_{j != i} phi(x_i, x_j)`;
    /// for the sign kernel `(2 rank - n - 1) / (n - 1)`.
    EmpiricalRank,
}

impl ProjectionMode {
    pub fn tag(self) -> &'static str {
        match self {
            ProjectionMode::ExactCdf => "exact_cdf",
            ProjectionMode::EmpiricalRank => "empirical_rank",
        }
    }
}

impl fmt::Display for ProjectionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for ProjectionMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact_cdf" => Ok(ProjectionMode::ExactCdf),
            "empirical_rank" => Ok(ProjectionMode::EmpiricalRank),
            other => Err(Error::Parse(format!("unknown projection mode `{other}`"))),
        }
    }
}

/// A user-supplied two-argument kernel.
#[derive(Clone)]
pub struct CustomKernel {
    pub name: String,
    pub f: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    pub bound: f64,
}

impl fmt::Debug for CustomKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomKernel").field("name", &self.name).field("bound", &self.bound).finish()
    }
}

/// Bounded antisymmetric kernels `phi(x, y) = -phi(y, x)`.
#[derive(Clone, Debug)]
pub enum KernelSpec {
    /// `sign(x - y)`
    Sign,
    /// `sin(pi (x - y))`
    Sine,
    /// `atan(x) - atan(y)`; its residual vanishes identically.
    Additive,
    Custom(CustomKernel),
}

impl KernelSpec {
    pub fn name(&self) -> &str {
        match self {
            KernelSpec::Sign => "sign",
            KernelSpec::Sine => "sine",
            KernelSpec::Additive => "additive",
            KernelSpec::Custom(c) => &c.name,
        }
    }

    #[inline]
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            KernelSpec::Sign => {
                if x > y {
                    1.0
                } else if x < y {
                    -1.0
                } else {
                    0.0
                }
            }
            KernelSpec::Sine => (std::f64::consts::PI * (x - y)).sin(),
            KernelSpec::Additive => x.atan() - y.atan(),
            KernelSpec::Custom(c) => (c.f)(x, y),
        }
    }

    /// Declared bound on `|phi|`.
    pub fn bound(&self) -> f64 {
        match self {
            KernelSpec::Sign | KernelSpec::Sine => 1.0,
            KernelSpec::Additive => std::f64::consts::PI,
            KernelSpec::Custom(c) => c.bound,
        }
    }

    /// `E[phi(x, Y)]` in closed form, when one is implemented.
    pub fn closed_form_conditional_mean(&self, x: f64, marginal: MarginalKind) -> Option<f64> {
        match self {
            KernelSpec::Sign => Some(2.0 * marginal.cdf(x) - 1.0),
            KernelSpec::Additive => {
                let mean_atan = match marginal {
                    MarginalKind::Uniform01 => std::f64::consts::FRAC_PI_4 - 0.5 * std::f64::consts::LN_2,
                    MarginalKind::StandardGaussian | MarginalKind::StandardCauchy => 0.0,
                };
                Some(x.atan() - mean_atan)
            }
            KernelSpec::Sine | KernelSpec::Custom(_) => None,
        }
    }

    fn has_closed_form(&self) -> bool {
        self.closed_form_conditional_mean(0.5, MarginalKind::Uniform01).is_some()
    }

    /// Checks `phi(x,y) = -phi(y,x)` and the declared bound on 256 draws.
    pub fn check(&self, marginal: MarginalKind, seed: u64) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_a5a5_0f0f_1234);
        for _ in 0..256 {
            let (x, y) = (marginal.sample(&mut rng), marginal.sample(&mut rng));
            let (a, b) = (self.eval(x, y), self.eval(y, x));
            let residual = a + b;
            if residual.abs() > ANTISYMMETRY_TOL || !residual.is_finite() {
                return Err(Error::KernelNotAntisymmetric { name: self.name().to_string(), x, y, residual });
            }
            if a.abs() > self.bound() {
                return Err(Error::InvalidParameter(format!(
                    "kernel `{}` exceeds its bound {} at ({x}, {y})",
                    self.name(),
                    self.bound()
                )));
            }
        }
        Ok(())
    }
}

impl FromStr for KernelSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sign" => Ok(KernelSpec::Sign),
            "sine" => Ok(KernelSpec::Sine),
            "additive" => Ok(KernelSpec::Additive),
            other => Err(Error::Parse(format!("unknown kernel `{other}`"))),
        }
    }
}

/// Inner estimation of `E[phi(x, Y)]` for kernels without a closed form.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InnerConfig {
    /// Number of inner draws, one per equal-probability stratum.
    pub size: usize,
    pub seed: u64,
}

impl Default for InnerConfig {
    fn default() -> Self {
        Self { size: 2048, seed: 0x1a2b_3c4d }
    }
}

/// Evaluator for `u(x) = E[phi(x, Y)]`.
///
/// Without a closed form, a single stratified sample `y_k = F^{-1}((k + U_k)/K)`
/// is drawn once and shared by every `x`.
pub struct ConditionalMean<'a> {
    kernel: &'a KernelSpec,
    marginal: MarginalKind,
    nodes: Option<Vec<f64>>,
}

impl<'a> ConditionalMean<'a> {
    pub fn new(kernel: &'a KernelSpec, marginal: MarginalKind, inner: InnerConfig) -> Result<Self> {
        if kernel.has_closed_form() {
            return Ok(Self { kernel, marginal, nodes: None });
        }
        if inner.size == 0 {
            return Err(Error::InvalidParameter("inner sample size must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(inner.seed);
        let k = inner.size as f64;
        let nodes = (0..inner.size)
            .map(|s| {
                let u: f64 = rand::Rng::sample(&mut rng, rand::distr::Open01);
                marginal.quantile((s as f64 + u) / k)
            })
            .collect();
        Ok(Self { kernel, marginal, nodes: Some(nodes) })
    }

    pub fn is_closed_form(&self) -> bool {
        self.nodes.is_none()
    }

    pub fn eval(&self, x: f64) -> f64 {
        match &self.nodes {
            None => self.kernel.closed_form_conditional_mean(x, self.marginal).expect("closed form"),
            Some(nodes) => nodes.iter().map(|&y| self.kernel.eval(x, y)).sum::<f64>() / nodes.len() as f64,
        }
    }
}

/// Projections `u` (p x n) and residuals `vbar` (p x M) of one data matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct HoeffdingParts {
    u: Vec<f64>,
    vbar: Vec<f64>,
    p: usize,
    n: usize,
    mode: ProjectionMode,
}

impl HoeffdingParts {
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pair_count(&self) -> usize {
        pair_count(self.n)
    }

    pub fn mode(&self) -> ProjectionMode {
        self.mode
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn u_row(&self, k: usize) -> &[f64] {
        &self.u[k * self.n..(k + 1) * self.n]
    }

    pub fn vbar(&self) -> &[f64] {
        &self.vbar
    }

    pub fn vbar_row(&self, k: usize) -> &[f64] {
        let m = self.pair_count();
        &self.vbar[k * m..(k + 1) * m]
    }

    /// `max |phi(x_ki, x_kj) - (u_ki - u_kj + vbar_k,(ij))|` over all entries.
    pub fn reconstruction_error(&self, x: &DataMatrix, kernel: &KernelSpec) -> f64 {
        let n = self.n;
        let mut worst = 0.0f64;
        for k in 0..self.p {
            let (row, u, vb) = (x.row(k), self.u_row(k), self.vbar_row(k));
            let mut t = 0;
            for i in 0..n {
                for j in i + 1..n {
                    let v = kernel.eval(row[i], row[j]);
                    worst = worst.max((v - (u[i] - u[j] + vb[t])).abs());
                    t += 1;
                }
            }
        }
        worst
    }

    /// Row-major `p x M` matrix of `u_ki - u_kj`.
    fn projection_differences(&self) -> Vec<f64> {
        let n = self.n;
        let mut d = Vec::with_capacity(self.p * self.pair_count());
        for k in 0..self.p {
            let u = self.u_row(k);
            for i in 0..n {
                for j in i + 1..n {
                    d.push(u[i] - u[j]);
                }
            }
        }
        d
    }
}

/// Decomposition of the sign kernel.
pub fn hoeffding_parts(x: &DataMatrix, mode: ProjectionMode) -> Result<HoeffdingParts> {
    kernel_parts(x, &KernelSpec::Sign, mode, InnerConfig::default())
}

/// Decomposition of an arbitrary bounded antisymmetric kernel.
pub fn kernel_parts(
    x: &DataMatrix,
    kernel: &KernelSpec,
    mode: ProjectionMode,
    inner: InnerConfig,
) -> Result<HoeffdingParts> {
    let (p, n) = (x.p(), x.n());
    let m = pair_count(n);
    kernel.check(x.marginal().unwrap_or(MarginalKind::Uniform01), x.seed().unwrap_or(0))?;
    let u: Vec<f64> = match mode {
        ProjectionMode::ExactCdf => {
            let marginal = x.marginal().ok_or(Error::NoClosedFormCdf)?;
            let cm = ConditionalMean::new(kernel, marginal, inner)?;
            x.values().par_iter().map(|&v| cm.eval(v)).collect()
        }
        ProjectionMode::EmpiricalRank => {
            let denom = (n - 1) as f64;
            x.rows()
                .flat_map(|row| {
                    (0..n).map(move |i| {
                        let s: f64 = (0..n).filter(|&j| j != i).map(|j| kernel.eval(row[i], row[j])).sum();
                        s / denom
                    })
                })
                .collect()
        }
    };
    let mut vbar = vec![0.0; p * m];
    vbar.par_chunks_mut(m).enumerate().for_each(|(k, out)| {
        let row = x.row(k);
        let uk = &u[k * n..(k + 1) * n];
        let mut t = 0;
        for i in 0..n {
            for j in i + 1..n {
                out[t] = kernel.eval(row[i], row[j]) - uk[i] + uk[j];
                t += 1;
            }
        }
    });
    Ok(HoeffdingParts { u, vbar, p, n, mode })
}

/// `H = (1/M) Vbar Vbar^T`.
pub fn h_matrix(parts: &HoeffdingParts) -> SymmetricMatrix {
    let m = parts.pair_count();
    gram(&parts.vbar, parts.p, m).div_entries(m as f64)
}

/// `H` with its first row and column removed, built from the residuals of
/// variables `1..p` only.
pub fn h_matrix_without_first(parts: &HoeffdingParts) -> SymmetricMatrix {
    let m = parts.pair_count();
    gram(&parts.vbar[m..], parts.p - 1, m).div_entries(m as f64)
}

/// Generalized Kendall matrix `(1/M) sum_{i<j} phi_(ij) phi_(ij)^T`.
/// With the sign kernel this reproduces [`crate::kendall::tau`] exactly.
pub fn kernel_tau(x: &DataMatrix, kernel: &KernelSpec) -> SymmetricMatrix {
    let (p, n) = (x.p(), x.n());
    let m = pair_count(n);
    let mut v = vec![0.0; p * m];
    v.par_chunks_mut(m).enumerate().for_each(|(k, out)| {
        let row = x.row(k);
        let mut t = 0;
        for i in 0..n {
            for j in i + 1..n {
                out[t] = kernel.eval(row[i], row[j]);
                t += 1;
            }
        }
    });
    gram(&v, p, m).div_entries(m as f64)
}

/// `A = tau - H` assembled from the projections: with `D_(ij) = U_i - U_j`,
/// `A = (1/M) (D D^T + D Vbar^T + Vbar D^T)`.
pub fn a_matrix(parts: &HoeffdingParts) -> SymmetricMatrix {
    let m = parts.pair_count();
    let d = parts.projection_differences();
    let dd = gram(&d, parts.p, m);
    let cross = product_abt(&d, &parts.vbar, parts.p, m);
    SymmetricMatrix::from_fn(parts.p, |i, j| (dd.get(i, j) + cross[(i, j)] + cross[(j, i)]) / m as f64)
}

/// `sum_{i<j} A1_(ij) = (1/M) D D^T`, summed pair by pair.
pub fn a1_pairwise(parts: &HoeffdingParts) -> SymmetricMatrix {
    let m = parts.pair_count();
    gram(&parts.projection_differences(), parts.p, m).div_entries(m as f64)
}

/// The same sum as `(2/(n-1)) sum_i (U_i - <U>)(U_i - <U>)^T`.
pub fn a1_projector_form(parts: &HoeffdingParts) -> SymmetricMatrix {
    let (p, n) = (parts.p, parts.n);
    let mut centered = parts.u.clone();
    for k in 0..p {
        let row = &mut centered[k * n..(k + 1) * n];
        let mean = row.iter().sum::<f64>() / n as f64;
        row.iter_mut().for_each(|v| *v -= mean);
    }
    let g = gram(&centered, p, n);
    let c = 2.0 / (n - 1) as f64;
    SymmetricMatrix::from_fn(p, |i, j| c * g.get(i, j))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaConfig {
    pub mc_samples: usize,
    pub inner: InnerConfig,
    pub seed: u64,
}

impl Default for AlphaConfig {
    fn default() -> Self {
        Self { mc_samples: 100_000, inner: InnerConfig::default(), seed: 1 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
    pub closed_form_inner: bool,
}

/// Monte-Carlo estimate of `alpha = E[(phi(X1,X2) - u(X1) + u(X2))^2]`, the
/// scale of the quadratic-regime law for kernel `phi`.
pub fn alpha_coefficient(kernel: &KernelSpec, marginal: MarginalKind, cfg: AlphaConfig) -> Result<AlphaEstimate> {
    if cfg.mc_samples < 10_000 {
        return Err(Error::InvalidParameter(format!(
            "alpha estimation needs at least 1e4 samples, got {}",
            cfg.mc_samples
        )));
    }
    kernel.check(marginal, cfg.seed)?;
    let cm = ConditionalMean::new(kernel, marginal, cfg.inner)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut mean, mut m2) = (0.0f64, 0.0f64);
    for s in 0..cfg.mc_samples {
        let (x1, x2) = (marginal.sample(&mut rng), marginal.sample(&mut rng));
        let r = kernel.eval(x1, x2) - cm.eval(x1) + cm.eval(x2);
        let sq = r * r;
        let delta = sq - mean;
        mean += delta / (s + 1) as f64;
        m2 += delta * (sq - mean);
    }
    let n = cfg.mc_samples as f64;
    let var = m2 / (n - 1.0);
    Ok(AlphaEstimate { value: mean, std_error: (var / n).sqrt(), samples: cfg.mc_samples, closed_form_inner: cm.is_closed_form() })
}
