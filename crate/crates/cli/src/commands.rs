use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use kendall_core::datagen::{generate, DataMatrix};
use kendall_core::experiments::{self, Campaign, ExperimentReport, FigureData, Z_GRID};
use kendall_core::hoeffding::{alpha_coefficient, h_matrix, hoeffding_parts, AlphaConfig, InnerConfig, KernelSpec};
use kendall_core::kendall::{tau, DEFAULT_SIGN_BUDGET};
use kendall_core::laws::{law_for_regime, MpLaw, Regime};
use kendall_core::matrix::SymmetricMatrix;
use kendall_core::spectral::{MatrixKind, Spectrum, SpectrumMeta};
use num_complex::Complex64;
use serde_json::json;

use crate::args::{Cli, Command, Common, ExperimentName, FigureArg, Format, MatrixArg, RegimeArg};
use crate::error::{CliError, CliResult};
use crate::output::{Output, RunConfig};

const DEFAULT_SEED: u64 = 1;
const DEFAULT_N: usize = 70;
const DEFAULT_P: usize = 1225;
const FIG2_P: [usize; 4] = [300, 400, 500, 600];
const LAW_GRID_POINTS: usize = 401;
/// Matrices up to this order are echoed to stdout.
const ECHO_ORDER: usize = 8;

pub fn run(cli: &Cli) -> CliResult<()> {
    let c = &cli.common;
    match &cli.command {
        Command::Gen => cmd_gen(c),
        Command::Tau { input } => cmd_matrix(c, MatrixArg::Tau, input.as_deref()),
        Command::Hmat { input } => cmd_matrix(c, MatrixArg::H, input.as_deref()),
        Command::Spectrum { matrix, input } => cmd_spectrum(c, *matrix, input.as_deref()),
        Command::Law { regime, q, scale, shift, points } => cmd_law(c, *regime, *q, *scale, *shift, *points),
        Command::Alpha { samples, inner } => cmd_alpha(c, *samples, *inner),
        Command::Figure { which } => cmd_figure(c, *which),
        Command::Experiment { name, tolerance, z, alpha, q_prime, samples, decay_n, decay_p } => {
            let opts = ExperimentOptions {
                tolerance: *tolerance,
                z: z.clone(),
                alpha: *alpha,
                q_prime: *q_prime,
                samples: *samples,
                decay: match (decay_n, decay_p) {
                    (Some(n), Some(p)) => Some((*n, *p)),
                    (None, None) => None,
                    _ => return Err(CliError::Usage("--decay-n and --decay-p go together".into())),
                },
            };
            cmd_experiment(c, *name, opts)
        }
    }
}

fn single(values: &[usize], default: usize, flag: &str) -> CliResult<usize> {
    match values {
        [] => Ok(default),
        [v] => Ok(*v),
        _ => Err(CliError::Usage(format!("--{flag} takes a single value here"))),
    }
}

fn list_or(values: &[usize], default: &[usize]) -> Vec<usize> {
    if values.is_empty() {
        default.to_vec()
    } else {
        values.to_vec()
    }
}

fn config(c: &Common, subcommand: &str, n: Vec<usize>, p: Vec<usize>, seeds: usize) -> RunConfig {
    RunConfig {
        subcommand: subcommand.to_string(),
        n,
        p,
        seed: c.seed.unwrap_or(DEFAULT_SEED),
        seeds,
        marginal: c.marginal,
        mode: c.mode,
        kernel: c.kernel.clone(),
        bins: c.bins,
        format: c.format,
        threads: c.threads,
        params: BTreeMap::new(),
    }
}

fn kernel_spec(c: &Common, default: &str) -> CliResult<KernelSpec> {
    c.kernel.as_deref().unwrap_or(default).parse().map_err(|e: kendall_core::Error| CliError::Usage(e.to_string()))
}

fn join(values: &[usize]) -> String {
    values.iter().map(ToString::to_string).collect::<Vec<_>>().join("-")
}

fn read_data(path: &Path) -> CliResult<DataMatrix> {
    let file = File::open(path).map_err(|source| CliError::Read { path: path.to_path_buf(), source })?;
    Ok(DataMatrix::read_csv(BufReader::new(file))?)
}

/// Loaded or generated data, the run configuration, and a file-name stem.
fn data_source(c: &Common, subcommand: &str, input: Option<&Path>) -> CliResult<(DataMatrix, RunConfig, String)> {
    match input {
        Some(path) => {
            let x = read_data(path)?;
            let seed_label = x.seed().map_or_else(|| "input".to_string(), |s| s.to_string());
            let mut cfg = config(c, subcommand, vec![x.n()], vec![x.p()], 1).param("input", path);
            if let Some(s) = x.seed() {
                cfg.seed = s;
            }
            if let Some(m) = x.marginal() {
                cfg.marginal = m;
            }
            let stem = format!("{}_{}_{seed_label}", x.n(), x.p());
            Ok((x, cfg, stem))
        }
        None => {
            let n = single(&c.n, DEFAULT_N, "n")?;
            let p = single(&c.p, DEFAULT_P, "p")?;
            let cfg = config(c, subcommand, vec![n], vec![p], 1);
            let x = generate(p, n, c.marginal, cfg.seed)?;
            let stem = format!("{n}_{p}_{}", cfg.seed);
            Ok((x, cfg, stem))
        }
    }
}

fn cmd_gen(c: &Common) -> CliResult<()> {
    let (x, cfg, stem) = data_source(c, "gen", None)?;
    let mut out = Output::new(&c.out, &cfg)?;
    let path = match c.format {
        Format::Csv => out.csv(&format!("gen_{stem}.csv"), |w| x.write_csv(w))?,
        Format::Json => {
            let rows: Vec<&[f64]> = x.rows().collect();
            out.json(
                &format!("gen_{stem}.json"),
                json!({ "p": x.p(), "n": x.n(), "marginal": x.marginal(), "seed": x.seed(), "rows": rows }),
            )?
        }
        Format::Bin => return Err(CliError::Usage("binary output is only available for matrices".into())),
    };
    println!("wrote {} (p={}, n={}, marginal={})", path.display(), x.p(), x.n(), cfg.marginal);
    Ok(())
}

fn build_matrix(x: &DataMatrix, which: MatrixArg, c: &Common) -> CliResult<SymmetricMatrix> {
    Ok(match which {
        MatrixArg::Tau => tau(x, DEFAULT_SIGN_BUDGET),
        MatrixArg::H => h_matrix(&hoeffding_parts(x, c.mode)?),
    })
}

fn kind_of(which: MatrixArg) -> MatrixKind {
    match which {
        MatrixArg::Tau => MatrixKind::Tau,
        MatrixArg::H => MatrixKind::H,
    }
}

fn print_summary(s: &Spectrum, m: &SymmetricMatrix) {
    let meta = s.meta();
    let opt = |v: Option<f64>| v.map_or_else(|| "none".to_string(), |v| format!("{v:.6}"));
    println!(
        "n={} p={} q={} q'={} trace/p={:.6} min_eig={:.6e} max_eig={:.6}",
        meta.n.map_or_else(|| "none".to_string(), |n| n.to_string()),
        meta.p,
        opt(meta.q),
        opt(meta.q_prime),
        m.trace() / m.order() as f64,
        s.min(),
        s.max()
    );
}

fn cmd_matrix(c: &Common, which: MatrixArg, input: Option<&Path>) -> CliResult<()> {
    let sub = match which {
        MatrixArg::Tau => "tau",
        MatrixArg::H => "hmat",
    };
    let (x, cfg, stem) = data_source(c, sub, input)?;
    let m = build_matrix(&x, which, c)?;
    let label = kind_of(which).tag();
    let mut out = Output::new(&c.out, &cfg)?;
    let path = match c.format {
        Format::Csv => out.csv(&format!("{label}_{stem}.csv"), |w| m.write_csv(w))?,
        Format::Json => {
            let rows: Vec<Vec<f64>> = (0..m.order()).map(|i| (0..m.order()).map(|j| m.get(i, j)).collect()).collect();
            out.json(&format!("{label}_{stem}.json"), json!({ "order": m.order(), "rows": rows }))?
        }
        Format::Bin => {
            let mut buf = Vec::new();
            m.write_binary(&mut buf)?;
            out.raw(&format!("{label}_{stem}.bin"), &buf)?
        }
    };
    let s = Spectrum::from_matrix(&m, SpectrumMeta::for_samples(x.n(), x.p(), kind_of(which)))?;
    print_summary(&s, &m);
    if m.order() <= ECHO_ORDER {
        for i in 0..m.order() {
            let row: Vec<String> = (0..m.order()).map(|j| format!("{:.6}", m.get(i, j))).collect();
            println!("{}", row.join(" "));
        }
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn histogram_json(s: &Spectrum, bins: Option<usize>) -> serde_json::Value {
    let esd = s.esd();
    let h = esd.histogram(bins.unwrap_or_else(|| esd.freedman_diaconis_bins()));
    let m = s.meta();
    json!({
        "edges": h.edges,
        "counts": h.counts,
        "n": m.n,
        "p": m.p,
        "q": m.q,
        "q_prime": m.q_prime,
        "source": m.source.tag(),
    })
}

fn write_spectrum(out: &mut Output, stem: &str, s: &Spectrum, c: &Common) -> CliResult<()> {
    match c.format {
        Format::Json => {
            out.json(&format!("{stem}.spectrum.json"), json!({ "eigenvalues": s.eigenvalues(), "meta": s.meta() }))?;
        }
        _ => {
            out.csv(&format!("{stem}.spectrum.csv"), |w| s.write_csv(w))?;
        }
    }
    out.json(&format!("{stem}.hist.json"), histogram_json(s, c.bins))?;
    Ok(())
}

fn cmd_spectrum(c: &Common, which: MatrixArg, input: Option<&Path>) -> CliResult<()> {
    let (x, cfg, stem) = data_source(c, "spectrum", input)?;
    let cfg = cfg.param("matrix", which);
    let m = build_matrix(&x, which, c)?;
    let s = Spectrum::from_matrix(&m, SpectrumMeta::for_samples(x.n(), x.p(), kind_of(which)))?;
    let mut out = Output::new(&c.out, &cfg)?;
    write_spectrum(&mut out, &format!("spectrum_{}_{stem}", kind_of(which).tag()), &s, c)?;
    print_summary(&s, &m);
    println!("wrote {}", out.written().join(", "));
    Ok(())
}

fn cmd_law(
    c: &Common,
    regime: Option<RegimeArg>,
    q: Option<f64>,
    scale: f64,
    shift: f64,
    points: usize,
) -> CliResult<()> {
    let (law, cfg, stem) = match regime {
        Some(r) => {
            let n = single(&c.n, DEFAULT_N, "n")?;
            let p = single(&c.p, DEFAULT_P, "p")?;
            let regime = match r {
                RegimeArg::Linear => Regime::Linear,
                RegimeArg::Quadratic => Regime::Quadratic,
            };
            let stem = format!("law_{}_{n}_{p}", match r {
                RegimeArg::Linear => "linear",
                RegimeArg::Quadratic => "quadratic",
            });
            (law_for_regime(n, p, regime), config(c, "law", vec![n], vec![p], 1).param("regime", r), stem)
        }
        None => {
            let q = q.ok_or_else(|| CliError::Usage("law needs --regime or --q".into()))?;
            (MpLaw::new(q, scale, shift)?, config(c, "law", vec![], vec![], 1), format!("law_q{q}_a{scale}_b{shift}"))
        }
    };
    let cfg = cfg.param("q", law.q()).param("scale", law.scale()).param("shift", law.shift()).param("points", points);
    let mut out = Output::new(&c.out, &cfg)?;
    let (lo, hi) = law.edges();
    let path = match c.format {
        Format::Json => out.json(
            &format!("{stem}.json"),
            json!({ "q": law.q(), "scale": law.scale(), "shift": law.shift(), "edges": [lo, hi],
                    "atom": law.atom(), "mean": law.mean(), "grid": law.grid(points) }),
        )?,
        _ => out.csv(&format!("{stem}.csv"), |w| law.write_grid_csv(points, w))?,
    };
    println!(
        "q={} scale={} shift={} edges=[{lo:.6}, {hi:.6}] atom={:.6} mean={:.6}",
        law.q(),
        law.scale(),
        law.shift(),
        law.atom(),
        law.mean()
    );
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_alpha(c: &Common, samples: usize, inner: usize) -> CliResult<()> {
    let kernel = kernel_spec(c, "sign")?;
    let seed = c.seed.unwrap_or(DEFAULT_SEED);
    let cfg = config(c, "alpha", vec![], vec![], 1)
        .param("samples", samples)
        .param("inner", inner)
        .param("kernel", kernel.name());
    let est = alpha_coefficient(&kernel, c.marginal, AlphaConfig {
        mc_samples: samples,
        inner: InnerConfig { size: inner, seed },
        seed,
    })?;
    let mut out = Output::new(&c.out, &cfg)?;
    let path = out.json(&format!("alpha_{}_{}_{seed}.json", kernel.name(), c.marginal), json!({
        "kernel": kernel.name(),
        "marginal": c.marginal,
        "alpha": est.value,
        "std_error": est.std_error,
        "samples": est.samples,
        "closed_form_inner": est.closed_form_inner,
    }))?;
    println!("alpha({}, {}) = {:.6} +/- {:.6}", kernel.name(), c.marginal, est.value, est.std_error);
    println!("wrote {}", path.display());
    Ok(())
}

const PLOT_STUB: &str = r##"# Overlays each eigenvalue histogram with its limit density.
# Usage: python3 PLOT_NAME   (run inside the output directory; needs matplotlib)
import glob
import json

import matplotlib.pyplot as plt

for hist_path in sorted(glob.glob("FIG_*.hist.json")):
    h = json.load(open(hist_path))
    edges, counts = h["edges"], h["counts"]
    total = sum(counts)
    widths = [b - a for a, b in zip(edges, edges[1:])]
    heights = [c / (total * w) if w > 0 else 0 for c, w in zip(counts, widths)]
    fig, ax = plt.subplots()
    ax.bar(edges[:-1], heights, width=widths, align="edge", alpha=0.6)
    xs, ds = [], []
    for line in open(hist_path.replace(".hist.json", ".law.csv")):
        if line.startswith("#") or line.startswith("lambda"):
            continue
        x, d, _ = map(float, line.split(","))
        xs.append(x)
        ds.append(d)
    ax.plot(xs, ds, color="red")
    ann = h.get("annotations", {})
    if "mean_line" in ann:
        ax.axvline(ann["mean_line"], color="black", linestyle="--")
    ax.set_title(f"n={h['n']} p={h['p']} q'={h['q_prime']:.4f}")
    fig.savefig(hist_path.replace(".hist.json", ".png"), dpi=120)
"##;

fn figure_files(out: &mut Output, fig: &FigureData) -> CliResult<()> {
    let mut annotations = Vec::new();
    for panel in &fig.panels {
        let a = &panel.annotations;
        let stem = format!("{}_{}_{}_{}", fig.name, a.n, a.p, a.seed);
        out.csv(&format!("{stem}.spectrum.csv"), |w| panel.spectrum.write_csv(w))?;
        let mut hist = histogram_json(&panel.spectrum, None);
        hist["edges"] = json!(panel.histogram.edges);
        hist["counts"] = json!(panel.histogram.counts);
        hist["annotations"] = serde_json::to_value(a)?;
        out.json(&format!("{stem}.hist.json"), hist)?;
        out.csv(&format!("{stem}.law.csv"), |w| panel.law.write_grid_csv(LAW_GRID_POINTS, w))?;
        annotations.push(a.clone());
        println!(
            "{}: n={} p={} q={:.4} q'={:.4} ks={:.4} outliers={} quadratic_edges=[{:.5}, {:.5}] linear_edges=[{:.5}, {:.5}]",
            panel.label,
            a.n,
            a.p,
            a.q,
            a.q_prime,
            a.ks,
            a.outliers,
            a.quadratic_edges[0],
            a.quadratic_edges[1],
            a.linear_edges[0],
            a.linear_edges[1]
        );
    }
    out.json(&format!("{}_annotations.json", fig.name), json!({ "panels": annotations }))?;
    let plot_name = format!("{}_plot.py", fig.name);
    out.text(&plot_name, &PLOT_STUB.replace("FIG", &fig.name).replace("PLOT_NAME", &plot_name))?;
    Ok(())
}

fn cmd_figure(c: &Common, which: FigureArg) -> CliResult<()> {
    let n = single(&c.n, DEFAULT_N, "n")?;
    let campaign = Campaign { seeds: 1, base_seed: c.seed.unwrap_or(DEFAULT_SEED), marginal: c.marginal, mode: c.mode };
    let (fig, p) = match which {
        FigureArg::Fig1 => {
            let p = single(&c.p, DEFAULT_P, "p")?;
            (experiments::fig1(n, p, &campaign, c.bins)?, vec![p])
        }
        FigureArg::Fig2 => {
            let p = list_or(&c.p, &FIG2_P);
            (experiments::fig2(n, &p, &campaign, c.bins)?, p)
        }
    };
    let cfg = config(c, "figure", vec![n], p, 1).param("which", which);
    let mut out = Output::new(&c.out, &cfg)?;
    figure_files(&mut out, &fig)?;
    println!("wrote {} files to {}", out.written().len(), c.out.display());
    Ok(())
}

struct ExperimentOptions {
    tolerance: Option<f64>,
    z: Vec<Complex64>,
    alpha: Option<f64>,
    q_prime: Option<f64>,
    samples: Option<usize>,
    decay: Option<(usize, usize)>,
}

fn cmd_experiment(c: &Common, name: ExperimentName, o: ExperimentOptions) -> CliResult<()> {
    use ExperimentName as E;
    let default_seeds = match name {
        E::QuadraticLsd | E::Kernel => 5,
        E::ResolventIdentity => 2000,
        E::Concentration => 200,
        E::RankBound | E::ZeroOnset => 3,
        E::TauQuadratic | E::LinearLsd | E::Covariance => 1,
    };
    let campaign = Campaign {
        seeds: c.seeds.unwrap_or(default_seeds),
        base_seed: c.seed.unwrap_or(DEFAULT_SEED),
        marginal: c.marginal,
        mode: c.mode,
    };
    let z_or = |default: &[Complex64]| if o.z.is_empty() { default.to_vec() } else { o.z.clone() };
    let (report, n, p): (ExperimentReport, Vec<usize>, Vec<usize>) = match name {
        E::QuadraticLsd => {
            let (n, p) = (single(&c.n, 70, "n")?, single(&c.p, 1225, "p")?);
            (experiments::run_quadratic_lsd(n, p, &campaign, o.tolerance.unwrap_or(0.05), o.decay)?, vec![n], vec![p])
        }
        E::TauQuadratic => {
            let (n, p) = (single(&c.n, 70, "n")?, list_or(&c.p, &FIG2_P));
            (experiments::run_tau_quadratic(n, &p, &campaign, o.tolerance.unwrap_or(0.06))?, vec![n], p)
        }
        E::LinearLsd => {
            let (n, p) = (single(&c.n, 2000, "n")?, single(&c.p, 200, "p")?);
            (experiments::run_linear_lsd(n, p, &campaign, o.tolerance.unwrap_or(0.03))?, vec![n], vec![p])
        }
        E::ResolventIdentity => {
            let (n, p) = (single(&c.n, 30, "n")?, single(&c.p, 80, "p")?);
            let zs = z_or(&Z_GRID[..2]);
            (experiments::verify_resolvent_identity(n, p, &zs, &campaign)?, vec![n], vec![p])
        }
        E::Concentration => {
            let n = list_or(&c.n, &[30, 50, 70]);
            let z = z_or(&Z_GRID[..1]);
            let [z] = z[..] else { return Err(CliError::Usage("concentration takes a single --z".into())) };
            let r = experiments::verify_concentration(&n, o.q_prime.unwrap_or(0.5), z, &campaign)?;
            let p = r.inputs.p.clone();
            (r, n, p)
        }
        E::Covariance => {
            let n = single(&c.n, 8, "n")?;
            let rows = o.samples.unwrap_or(100_000);
            (experiments::covariance_table(n, rows, &campaign)?, vec![n], vec![rows])
        }
        E::Kernel => {
            let (n, p) = (single(&c.n, 70, "n")?, single(&c.p, 1225, "p")?);
            let kernel = kernel_spec(c, "sine")?;
            let r = experiments::run_kernel_generalization(&kernel, n, p, &campaign, o.alpha, o.tolerance.unwrap_or(0.06))?;
            (r, vec![n], vec![p])
        }
        E::RankBound => {
            let (n, p) = (single(&c.n, 20, "n")?, single(&c.p, 100, "p")?);
            (experiments::rank_bound(n, p, &campaign)?, vec![n], vec![p])
        }
        E::ZeroOnset => {
            let (n, p) = (single(&c.n, 10, "n")?, single(&c.p, 60, "p")?);
            (experiments::zero_onset(n, p, &campaign)?, vec![n], vec![p])
        }
    };
    let mut cfg = config(c, "experiment", n.clone(), p.clone(), campaign.seeds).param("name", name.tag());
    cfg.seed = campaign.base_seed;
    for (key, value) in &report.inputs.extra {
        cfg = cfg.param(key, value);
    }
    let mut out = Output::new(&c.out, &cfg)?;
    for ls in &report.spectra {
        let m = ls.spectrum.meta();
        let stem = format!("{}_{}_{}_{}", name.tag(), m.n.unwrap_or(0), m.p, ls.seed);
        write_spectrum(&mut out, &stem, &ls.spectrum, c)?;
    }
    let mut report = report;
    report.artifacts = out.written().to_vec();
    let stem = format!("{}_{}_{}_{}", name.tag(), join(&n), join(&p), campaign.base_seed);
    let path = out.json(&format!("{stem}.json"), &report)?;

    let mut stdout = std::io::stdout().lock();
    for m in &report.metrics {
        let se = m.std_error.map_or_else(String::new, |s| format!(" +/- {s:.3e}"));
        let _ = writeln!(stdout, "[{}] {} = {:.6e}{se}", if m.passed { "ok" } else { "FAIL" }, m.name, m.value);
    }
    let _ = writeln!(stdout, "{}: {} ({})", name.tag(), if report.passed { "passed" } else { "FAILED" }, path.display());
    if report.passed {
        Ok(())
    } else {
        Err(CliError::ExperimentFailed(name.tag().to_string()))
    }
}
