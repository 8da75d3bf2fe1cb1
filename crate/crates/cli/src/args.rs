use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kendall_core::datagen::MarginalKind;
use kendall_core::hoeffding::ProjectionMode;
use num_complex::Complex64;
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(
    name = "kendall-lab",
    version,
    about = "Kendall correlation matrices, their Hoeffding decomposition and Marchenko-Pastur checks"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Sample count; a comma-separated list where a command takes several.
    #[arg(long, global = true, value_delimiter = ',')]
    pub n: Vec<usize>,
    /// Variable count; a comma-separated list where a command takes several.
    #[arg(long, global = true, value_delimiter = ',')]
    pub p: Vec<usize>,
    /// Seed, or first seed of a campaign.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Number of consecutive seeds in a campaign.
    #[arg(long, global = true)]
    pub seeds: Option<usize>,
    #[arg(long, global = true, default_value = "uniform01")]
    pub marginal: MarginalKind,
    #[arg(long, global = true, default_value = "exact_cdf")]
    pub mode: ProjectionMode,
    /// sign, sine or additive
    #[arg(long, global = true)]
    pub kernel: Option<String>,
    /// Histogram bins (default: Freedman-Diaconis, at least 30).
    #[arg(long, global = true)]
    pub bins: Option<usize>,
    #[arg(long, global = true, env = "KS_OUT_DIR", default_value = ".")]
    pub out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Worker threads; never changes numerical output.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
    /// Binary lower triangle (matrices only).
    Bin,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixArg {
    Tau,
    H,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeArg {
    Linear,
    Quadratic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FigureArg {
    Fig1,
    Fig2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentName {
    QuadraticLsd,
    TauQuadratic,
    LinearLsd,
    ResolventIdentity,
    Concentration,
    Covariance,
    Kernel,
    RankBound,
    ZeroOnset,
}

impl ExperimentName {
    pub fn tag(self) -> &'static str {
        match self {
            ExperimentName::QuadraticLsd => "quadratic-lsd",
            ExperimentName::TauQuadratic => "tau-quadratic",
            ExperimentName::LinearLsd => "linear-lsd",
            ExperimentName::ResolventIdentity => "resolvent-identity",
            ExperimentName::Concentration => "concentration",
            ExperimentName::Covariance => "covariance",
            ExperimentName::Kernel => "kernel",
            ExperimentName::RankBound => "rank-bound",
            ExperimentName::ZeroOnset => "zero-onset",
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a data matrix.
    Gen,
    /// Kendall matrix of generated or loaded data.
    Tau {
        /// Data CSV to use instead of generating.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Gram matrix H of the Hoeffding residuals.
    Hmat {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Eigenvalues of tau or H, with a histogram.
    Spectrum {
        #[arg(long, value_enum, default_value_t = MatrixArg::Tau)]
        matrix: MatrixArg,
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Density and CDF grid of shift + scale * Y_q.
    Law {
        /// Take the law of a regime for --n and --p.
        #[arg(long, value_enum)]
        regime: Option<RegimeArg>,
        #[arg(long)]
        q: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[arg(long, default_value_t = 0.0)]
        shift: f64,
        #[arg(long, default_value_t = 401)]
        points: usize,
    },
    /// Monte-Carlo estimate of the kernel coefficient alpha.
    Alpha {
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        /// Inner sample size for kernels without a closed-form projection.
        #[arg(long, default_value_t = 2048)]
        inner: usize,
    },
    /// Data files for the two histogram figures.
    Figure {
        #[arg(value_enum)]
        which: FigureArg,
    },
    /// Run a verification campaign and write its report.
    Experiment {
        #[arg(value_enum)]
        name: ExperimentName,
        #[arg(long)]
        tolerance: Option<f64>,
        /// Evaluation points such as 1+0.5i, comma separated.
        #[arg(long, value_delimiter = ',', value_parser = parse_complex)]
        z: Vec<Complex64>,
        /// Known alpha for the kernel experiment.
        #[arg(long)]
        alpha: Option<f64>,
        /// q' for the concentration experiment.
        #[arg(long)]
        q_prime: Option<f64>,
        /// Variables drawn by the covariance experiment.
        #[arg(long)]
        samples: Option<usize>,
        /// Larger (n, p) rerun for the quadratic-lsd decay check.
        #[arg(long)]
        decay_n: Option<usize>,
        #[arg(long)]
        decay_p: Option<usize>,
    },
}

/// Parses `a+bi`, `a-bi`, `bi` or `a`.
pub fn parse_complex(s: &str) -> Result<Complex64, String> {
    let t = s.trim().replace(' ', "");
    let bad = || format!("cannot parse `{s}` as a complex number like 1+0.5i");
    let Some(body) = t.strip_suffix('i') else {
        return t.parse::<f64>().map(|re| Complex64::new(re, 0.0)).map_err(|_| bad());
    };
    // split at the last sign that is not an exponent sign or the leading sign
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let (re, im) = match split {
        Some(k) => (&body[..k], &body[k..]),
        None => ("0", body),
    };
    let im = match im {
        "" | "+" => "1",
        "-" => "-1",
        other => other,
    };
    Ok(Complex64::new(re.parse().map_err(|_| bad())?, im.parse().map_err(|_| bad())?))
}
