//! Seeded synthetic data matrices with continuous marginals.
//!
//! Row `k` of a generated matrix is drawn from its own ChaCha8 stream
//! (`seed`, stream `k`), so rows can be produced in parallel and the output
//! never depends on the thread count.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Cauchy, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Redraws allowed per tied entry before generation gives up.
pub const TIE_RETRY_CAP: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginalKind {
    Uniform01,
    StandardGaussian,
    StandardCauchy,
}

impl MarginalKind {
    pub const ALL: [MarginalKind; 3] = [
        MarginalKind::Uniform01,
        MarginalKind::StandardGaussian,
        MarginalKind::StandardCauchy,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            MarginalKind::Uniform01 => "uniform01",
            MarginalKind::StandardGaussian => "standard_gaussian",
            MarginalKind::StandardCauchy => "standard_cauchy",
        }
    }

    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            MarginalKind::Uniform01 => rng.sample(Open01),
            MarginalKind::StandardGaussian => rng.sample(StandardNormal),
            MarginalKind::StandardCauchy => Cauchy::new(0.0, 1.0).unwrap().sample(rng),
        }
    }

    pub fn cdf(self, x: f64) -> f64 {
        match self {
            MarginalKind::Uniform01 => x.clamp(0.0, 1.0),
            MarginalKind::StandardGaussian => standard_normal().cdf(x),
            MarginalKind::StandardCauchy => 0.5 + x.atan() / std::f64::consts::PI,
        }
    }

    /// Inverse CDF on (0, 1).
    pub fn quantile(self, u: f64) -> f64 {
        match self {
            MarginalKind::Uniform01 => u,
            MarginalKind::StandardGaussian => {
                // One Newton step on top of the library inverse, which is only
                // accurate to about 1e-10.
                let d = standard_normal();
                let x = d.inverse_cdf(u);
                x - (d.cdf(x) - u) / d.pdf(x)
            }
            MarginalKind::StandardCauchy => (std::f64::consts::PI * (u - 0.5)).tan(),
        }
    }
}

fn standard_normal() -> Normal {
    Normal::standard()
}

impl fmt::Display for MarginalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for MarginalKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform01" | "uniform" => Ok(MarginalKind::Uniform01),
            "standard_gaussian" | "gaussian" | "normal" => Ok(MarginalKind::StandardGaussian),
            "standard_cauchy" | "cauchy" => Ok(MarginalKind::StandardCauchy),
            other => Err(Error::Parse(format!("unknown marginal `{other}`"))),
        }
    }
}

/// A p x n table of observations: rows are variables, columns are samples.
///
/// Every row holds pairwise distinct values. `marginal` and `seed` record
/// provenance; they are `None` for matrices loaded from external data.
#[derive(Clone, Debug, PartialEq)]
pub struct DataMatrix {
    values: Vec<f64>,
    p: usize,
    n: usize,
    seed: Option<u64>,
    marginal: Option<MarginalKind>,
}

impl DataMatrix {
    /// Builds a matrix from row-major values, rejecting ties and non-finite entries.
    pub fn from_rows(values: Vec<f64>, p: usize, n: usize) -> Result<Self> {
        check_dims(p, n)?;
        if values.len() != p * n {
            return Err(Error::InvalidDimensions(format!(
                "expected {} values for a {p}x{n} matrix, got {}",
                p * n,
                values.len()
            )));
        }
        for (row, chunk) in values.chunks_exact(n).enumerate() {
            if let Some(&bad) = chunk.iter().find(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter(format!("non-finite value {bad} in row {row}")));
            }
            if let Some(value) = first_tie(chunk) {
                return Err(Error::TieDetected { row, value });
            }
        }
        Ok(Self { values, p, n, seed: None, marginal: None })
    }

    pub fn with_provenance(mut self, marginal: Option<MarginalKind>, seed: Option<u64>) -> Self {
        self.marginal = marginal;
        self.seed = seed;
        self
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn marginal(&self) -> Option<MarginalKind> {
        self.marginal
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.n..(k + 1) * self.n]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.n)
    }

    pub fn get(&self, k: usize, i: usize) -> f64 {
        self.values[k * self.n + i]
    }

    /// Applies `f` to every entry of row `k`. `f` must be strictly increasing
    /// on the row's values or the no-ties invariant may break.
    pub fn map_row<F: Fn(f64) -> f64>(&self, k: usize, f: F) -> Result<Self> {
        let mut values = self.values.clone();
        for v in &mut values[k * self.n..(k + 1) * self.n] {
            *v = f(*v);
        }
        Ok(Self::from_rows(values, self.p, self.n)?.with_provenance(self.marginal, self.seed))
    }

    /// CSV with a `# p=.. n=.. marginal=.. seed=..` header line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "# p={} n={} marginal={} seed={}",
            self.p,
            self.n,
            self.marginal.map_or("unknown", |m| m.tag()),
            self.seed.map_or_else(|| "none".to_string(), |s| s.to_string())
        )?;
        for row in self.rows() {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    /// Reads the CSV layout written by [`DataMatrix::write_csv`]. Other `#`
    /// lines are skipped; without a header the provenance is left empty.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut marginal = None;
        let mut seed = None;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for line in r.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(header) = line.strip_prefix('#') {
                for field in header.split_whitespace() {
                    match field.split_once('=') {
                        Some(("marginal", v)) if v != "unknown" => marginal = Some(v.parse()?),
                        Some(("seed", v)) if v != "none" => {
                            seed = Some(v.parse().map_err(|_| Error::Parse(format!("bad seed `{v}`")))?)
                        }
                        _ => {}
                    }
                }
                continue;
            }
            let row = line
                .split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad number `{s}`"))))
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        let p = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Parse("ragged rows in data matrix".into()));
        }
        let values = rows.into_iter().flatten().collect();
        Ok(Self::from_rows(values, p, n)?.with_provenance(marginal, seed))
    }
}

fn check_dims(p: usize, n: usize) -> Result<()> {
    if p < 1 || n < 2 {
        return Err(Error::InvalidDimensions(format!("need p >= 1 and n >= 2, got p={p}, n={n}")));
    }
    Ok(())
}

fn first_tie(row: &[f64]) -> Option<f64> {
    let mut sorted = row.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    sorted.windows(2).find(|w| w[0] == w[1]).map(|w| w[0])
}

/// Draws a p x n matrix with i.i.d. entries from `marginal`.
pub fn generate(p: usize, n: usize, marginal: MarginalKind, seed: u64) -> Result<DataMatrix> {
    check_dims(p, n)?;
    let mut values = vec![0.0; p * n];
    values
        .par_chunks_mut(n)
        .enumerate()
        .try_for_each(|(row, out)| fill_row(out, row, marginal, seed))?;
    Ok(DataMatrix { values, p, n, seed: Some(seed), marginal: Some(marginal) })
}

fn fill_row(out: &mut [f64], row: usize, marginal: MarginalKind, seed: u64) -> Result<()> {
    let mut rng = row_rng(seed, row);
    for v in out.iter_mut() {
        *v = marginal.sample(&mut rng);
    }
    // Redraw later duplicates from the same stream until the row is tie-free.
    let mut retries = 0;
    loop {
        let dup = duplicate_positions(out);
        if dup.is_empty() {
            return Ok(());
        }
        retries += 1;
        if retries > TIE_RETRY_CAP {
            return Err(Error::TieRetryExhausted { row, retries: TIE_RETRY_CAP });
        }
        for i in dup {
            out[i] = marginal.sample(&mut rng);
        }
    }
}

fn duplicate_positions(row: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
    order.windows(2).filter(|w| row[w[0]] == row[w[1]]).map(|w| w[1]).collect()
}

/// The generator for row `row` of a matrix drawn with `seed`.
pub fn row_rng(seed: u64, row: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(row as u64);
    rng
}
