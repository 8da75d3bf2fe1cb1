//! Seeded verification campaigns. Every campaign returns an
//! [`ExperimentReport`] whose metrics carry their own bound and verdict.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{generate, DataMatrix, MarginalKind};
use crate::error::Result;
use crate::hoeffding::{h_matrix, hoeffding_parts, HoeffdingParts, ProjectionMode};
use crate::kendall::{tau, DEFAULT_SIGN_BUDGET};
use crate::matrix::SymmetricMatrix;
use crate::spectral::{MatrixKind, Spectrum, SpectrumMeta};

mod figures;
mod identities;
mod lsd;

pub use figures::{fig1, fig2, FigureData, FigurePanel, PanelAnnotations};
pub use identities::{covariance_table, rank_bound, verify_concentration, verify_resolvent_identity, zero_onset};
pub use lsd::{run_kernel_generalization, run_linear_lsd, run_quadratic_lsd, run_tau_quadratic};

/// Fixed evaluation points for resolvent-type checks.
pub const Z_GRID: [Complex64; 3] =
    [Complex64::new(1.0, 0.5), Complex64::new(0.5, 1.0), Complex64::new(2.0, 0.25)];

/// Names accepted by the `experiment` subcommand.
pub const EXPERIMENT_NAMES: [&str; 9] = [
    "quadratic-lsd",
    "tau-quadratic",
    "linear-lsd",
    "resolvent-identity",
    "concentration",
    "covariance",
    "kernel",
    "rank-bound",
    "zero-onset",
];

/// What a metric is compared against.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Bound {
    AtMost { limit: f64 },
    AtLeast { limit: f64 },
    Within { target: f64, tolerance: f64 },
    /// A yes/no property stored as 1 or 0.
    Holds,
    /// Informational only.
    Reported,
}

impl Bound {
    fn admits(self, value: f64) -> bool {
        match self {
            Bound::AtMost { limit } => value <= limit,
            Bound::AtLeast { limit } => value >= limit,
            Bound::Within { target, tolerance } => (value - target).abs() <= tolerance,
            Bound::Holds => value == 1.0,
            Bound::Reported => true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub name: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
    pub bound: Bound,
    pub passed: bool,
}

impl Metric {
    pub fn new(name: impl Into<String>, value: f64, bound: Bound) -> Self {
        Self { name: name.into(), value, std_error: None, bound, passed: value.is_finite() && bound.admits(value) }
    }

    pub fn reported(name: impl Into<String>, value: f64) -> Self {
        Self::new(name, value, Bound::Reported)
    }

    pub fn holds(name: impl Into<String>, ok: bool) -> Self {
        Self::new(name, if ok { 1.0 } else { 0.0 }, Bound::Holds)
    }

    pub fn with_std_error(mut self, se: f64) -> Self {
        self.std_error = Some(se);
        self
    }
}

/// Shared knobs of the seeded campaigns.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Campaign {
    pub seeds: usize,
    pub base_seed: u64,
    pub marginal: MarginalKind,
    pub mode: ProjectionMode,
}

impl Default for Campaign {
    fn default() -> Self {
        Self { seeds: 5, base_seed: 1, marginal: MarginalKind::Uniform01, mode: ProjectionMode::ExactCdf }
    }
}

impl Campaign {
    pub fn with_seeds(mut self, seeds: usize) -> Self {
        self.seeds = seeds;
        self
    }

    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds as u64).map(|s| self.base_seed.wrapping_add(s)).collect()
    }

    /// Runs `f` on every seed in parallel and returns results in seed order.
    pub(crate) fn map_seeds<T, F>(&self, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(u64) -> Result<T> + Sync + Send,
    {
        self.seed_list().into_par_iter().map(f).collect()
    }

    pub(crate) fn data(&self, p: usize, n: usize, seed: u64) -> Result<DataMatrix> {
        generate(p, n, self.marginal, seed)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentInputs {
    pub n: Vec<usize>,
    pub p: Vec<usize>,
    pub seeds: Vec<u64>,
    pub marginal: MarginalKind,
    pub mode: ProjectionMode,
    /// Experiment-specific parameters (tolerances, z values, kernel).
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl ExperimentInputs {
    pub(crate) fn new(n: Vec<usize>, p: Vec<usize>, c: &Campaign) -> Self {
        Self { n, p, seeds: c.seed_list(), marginal: c.marginal, mode: c.mode, extra: BTreeMap::new() }
    }

    pub(crate) fn with(mut self, key: &str, value: impl Serialize) -> Self {
        self.extra.insert(key.to_string(), serde_json::to_value(value).expect("serializable input"));
        self
    }
}

/// A spectrum retained for artifact output, labelled with its seed.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelledSpectrum {
    pub seed: u64,
    pub spectrum: Spectrum,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub inputs: ExperimentInputs,
    pub metrics: Vec<Metric>,
    pub passed: bool,
    /// Files written next to the report; filled in by the caller that writes them.
    pub artifacts: Vec<String>,
    #[serde(skip)]
    pub spectra: Vec<LabelledSpectrum>,
}

impl ExperimentReport {
    pub(crate) fn new(name: &str, inputs: ExperimentInputs, metrics: Vec<Metric>) -> Self {
        let passed = metrics.iter().all(|m| m.passed);
        Self { name: name.to_string(), inputs, metrics, passed, artifacts: Vec::new(), spectra: Vec::new() }
    }

    pub(crate) fn with_spectra(mut self, spectra: Vec<LabelledSpectrum>) -> Self {
        self.spectra = spectra;
        self
    }

    pub fn metric(&self, name: &str) -> Option<&Metric> {
        self.metrics.iter().find(|m| m.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Metric> {
        self.metrics.iter().filter(|m| !m.passed)
    }
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard error of the mean.
pub(crate) fn std_error(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    if values.len() < 2 {
        return f64::INFINITY;
    }
    let m = mean(values);
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (var / n).sqrt()
}

/// Mean and standard error of complex samples, the error taken as
/// `sqrt((var Re + var Im) / N)`.
pub(crate) fn complex_mean_se(values: &[Complex64]) -> (Complex64, f64) {
    let re: Vec<f64> = values.iter().map(|v| v.re).collect();
    let im: Vec<f64> = values.iter().map(|v| v.im).collect();
    (Complex64::new(mean(&re), mean(&im)), std_error(&re).hypot(std_error(&im)))
}

/// Kendall matrix, Hoeffding parts and `H` for one data matrix.
pub(crate) struct Decomposed {
    pub tau: SymmetricMatrix,
    pub parts: HoeffdingParts,
    pub h: SymmetricMatrix,
}

pub(crate) fn decompose(x: &DataMatrix, mode: ProjectionMode, with_tau: bool) -> Result<Decomposed> {
    let parts = hoeffding_parts(x, mode)?;
    let h = h_matrix(&parts);
    let tau = if with_tau { tau(x, DEFAULT_SIGN_BUDGET) } else { SymmetricMatrix::zeros(0) };
    Ok(Decomposed { tau, parts, h })
}

pub(crate) fn spectrum_of(m: &SymmetricMatrix, n: usize, source: MatrixKind) -> Result<Spectrum> {
    Spectrum::from_matrix(m, SpectrumMeta::for_samples(n, m.order(), source))
}
