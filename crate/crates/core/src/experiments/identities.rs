//! Exact and Monte-Carlo identities around `H`: the one-row resolvent
//! identity, concentration of the Stieltjes transform, the covariance of the
//! residuals, and the rank bound linking the spectra of tau and `H`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hoeffding::{a_matrix, hoeffding_parts};
use crate::kendall::{pair_count, tau, DEFAULT_SIGN_BUDGET};
use crate::laws::MpLaw;
use crate::spectral::{
    eigen_symmetric, eigenvalues, ks_distance, rank_from_eigenvalues, resolvent, stieltjes_from_eigenvalues, tol_eig,
    EmpiricalDistribution, MatrixKind, MIN_IMAG,
};

use super::{
    complex_mean_se, decompose, mean, spectrum_of, std_error, Bound, Campaign, ExperimentInputs, ExperimentReport,
    LabelledSpectrum, Metric,
};

/// Smallest `|Im z|` used by the Monte-Carlo resolvent checks.
pub const MIN_EXPERIMENT_IMAG: f64 = 0.05;

struct ResolventSample {
    /// `h^T G h` at each z
    c: Vec<Complex64>,
    /// same at conj(z)
    c_conj: Vec<Complex64>,
    /// `(1/(p-1)) tr G`
    g: Vec<Complex64>,
    /// `tr(H~ G)`
    tr_hg: Vec<Complex64>,
    /// `|h^T G h|` difference between the eigen route and the LU route
    lu_gap: f64,
}

/// Monte Carlo of `C = E[h^T G_{H~}(z) h]`, where `h` is the first column of
/// `H` without its diagonal entry and `H~` is `H` without row and column 1,
/// against `(-q'' + q'' z E[g^{p-1}(z)]) / 3` with `q'' = 2(p-1)/(n(n-1))`.
///
/// Both sides are estimated from the same draws, so the comparison uses the
/// standard error of the per-seed difference.
pub fn verify_resolvent_identity(
    n: usize,
    p: usize,
    zs: &[Complex64],
    campaign: &Campaign,
) -> Result<ExperimentReport> {
    if p < 3 || n < 3 {
        return Err(Error::InvalidDimensions(format!("resolvent identity needs n, p >= 3, got n={n} p={p}")));
    }
    if let Some(z) = zs.iter().find(|z| z.im.abs() < MIN_EXPERIMENT_IMAG) {
        return Err(Error::NearRealAxis { re: z.re, im: z.im });
    }
    let m = pair_count(n) as f64;
    let q2 = (p - 1) as f64 / m;
    let first_seed = campaign.base_seed;
    let samples = campaign.map_seeds(|seed| {
        let x = campaign.data(p, n, seed)?;
        let h = crate::hoeffding::h_matrix(&hoeffding_parts(&x, campaign.mode)?);
        let h1: Vec<f64> = (1..p).map(|a| h.get(a, 0)).collect();
        let reduced = h.minor(0);
        let eig = eigen_symmetric(&reduced)?;
        let w: Vec<f64> = (0..p - 1)
            .map(|k| (0..p - 1).map(|a| eig.vectors[(a, k)] * h1[a]).sum::<f64>())
            .collect();
        let quad_form = |z: Complex64| -> Complex64 {
            w.iter().zip(&eig.values).map(|(&wk, &l)| wk * wk / (z - l)).sum()
        };
        let mut s = ResolventSample { c: vec![], c_conj: vec![], g: vec![], tr_hg: vec![], lu_gap: 0.0 };
        for &z in zs {
            let c = quad_form(z);
            s.c.push(c);
            s.c_conj.push(quad_form(z.conj()));
            s.g.push(stieltjes_from_eigenvalues(&eig.values, z)?);
            s.tr_hg.push(eig.values.iter().map(|&l| l / (z - l)).sum());
            if seed == first_seed {
                let g = resolvent(&reduced, z)?;
                let mut lu = Complex64::new(0.0, 0.0);
                for a in 0..p - 1 {
                    for b in 0..p - 1 {
                        lu += h1[a] * g.get(a, b) * h1[b];
                    }
                }
                s.lu_gap = s.lu_gap.max((lu - c).norm() / c.norm().max(MIN_IMAG));
            }
        }
        Ok(s)
    })?;

    let mut metrics = vec![Metric::reported("q_double_prime", q2)];
    for (zi, &z) in zs.iter().enumerate() {
        let tag = format!("z={}{:+}i", z.re, z.im);
        let c: Vec<Complex64> = samples.iter().map(|s| s.c[zi]).collect();
        let g: Vec<Complex64> = samples.iter().map(|s| s.g[zi]).collect();
        let (c_est, c_se) = complex_mean_se(&c);
        let (g_est, _) = complex_mean_se(&g);
        let rhs = (-q2 + q2 * z * g_est) / 3.0;
        let paired: Vec<Complex64> = samples.iter().map(|s| s.c[zi] - (-q2 + q2 * z * s.g[zi]) / 3.0).collect();
        let (diff, diff_se) = complex_mean_se(&paired);
        metrics.push(Metric::reported(format!("c_est_re[{tag}]"), c_est.re).with_std_error(c_se));
        metrics.push(Metric::reported(format!("c_est_im[{tag}]"), c_est.im).with_std_error(c_se));
        metrics.push(Metric::reported(format!("rhs_re[{tag}]"), rhs.re));
        metrics.push(Metric::reported(format!("rhs_im[{tag}]"), rhs.im));
        metrics.push(
            Metric::new(format!("abs_difference[{tag}]"), diff.norm(), Bound::AtMost { limit: 3.0 * diff_se })
                .with_std_error(diff_se),
        );

        let trace_route: Vec<Complex64> = samples.iter().map(|s| s.c[zi] - s.tr_hg[zi] / (3.0 * m)).collect();
        let (tdiff, tse) = complex_mean_se(&trace_route);
        metrics.push(
            Metric::new(format!("trace_route_difference[{tag}]"), tdiff.norm(), Bound::AtMost { limit: 3.0 * tse })
                .with_std_error(tse),
        );
        let conj_gap = samples.iter().map(|s| (s.c_conj[zi] - s.c[zi].conj()).norm()).fold(0.0, f64::max);
        metrics.push(Metric::new(format!("conjugate_symmetry_gap[{tag}]"), conj_gap, Bound::AtMost { limit: 1e-12 }));
    }
    metrics.push(Metric::new("lu_route_relative_gap", samples[0].lu_gap, Bound::AtMost { limit: 1e-8 }));
    let inputs = ExperimentInputs::new(vec![n], vec![p], campaign)
        .with("z", zs.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>());
    Ok(ExperimentReport::new("resolvent-identity", inputs, metrics))
}

/// Across-seed variance of `g^p(z)` for `H` along `n_list`, with
/// `p = round(q' n(n-1)/2)`.
pub fn verify_concentration(
    n_list: &[usize],
    q_prime: f64,
    z: Complex64,
    campaign: &Campaign,
) -> Result<ExperimentReport> {
    if n_list.len() < 2 || campaign.seeds < 2 {
        return Err(Error::InvalidParameter("concentration needs two sizes and two seeds".into()));
    }
    let mut metrics = Vec::new();
    let mut curve = Vec::new();
    let mut ps = Vec::new();
    let mut last_gap = 0.0;
    for &n in n_list {
        let p = (q_prime * pair_count(n) as f64).round().max(1.0) as usize;
        ps.push(p);
        let g = campaign.map_seeds(|seed| {
            let d = decompose(&campaign.data(p, n, seed)?, campaign.mode, false)?;
            stieltjes_from_eigenvalues(&eigenvalues(&d.h)?, z)
        })?;
        let (g_mean, _) = complex_mean_se(&g);
        let var = g.iter().map(|v| (v - g_mean).norm_sqr()).sum::<f64>() / (g.len() - 1) as f64;
        let law = MpLaw::new(p as f64 / pair_count(n) as f64, 1.0 / 3.0, 0.0)?;
        last_gap = (g_mean - law.stieltjes(z)?).norm();
        metrics.push(Metric::reported(format!("variance[n={n}]"), var));
        metrics.push(Metric::reported(format!("law_gap[n={n}]"), last_gap));
        curve.push((n as f64, var));
    }
    metrics.push(Metric::holds("variance_strictly_decreasing", curve.windows(2).all(|w| w[1].1 < w[0].1)));
    let (first, last) = (curve[0].1, curve[curve.len() - 1].1);
    metrics.push(Metric::new("variance_ratio_last_first", last / first, Bound::AtMost { limit: 0.5 }));
    metrics.push(Metric::new("log_log_slope", log_log_slope(&curve), Bound::AtMost { limit: -0.5 }));
    metrics.push(Metric::new("law_gap_largest_n", last_gap, Bound::AtMost { limit: 0.02 }));
    let inputs = ExperimentInputs::new(n_list.to_vec(), ps, campaign).with("q_prime", q_prime).with("z", [z.re, z.im]);
    Ok(ExperimentReport::new("concentration", inputs, metrics))
}

/// Least-squares slope of `ln y` against `ln x`.
fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let (mx, my) = (mean(&xs), mean(&ys));
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Second moments of the residuals: `E[vbar^2] = 1/3`, zero for two pairs
/// sharing one index and for disjoint pairs, and no correlation between a
/// projection and a residual. Each of the `rows` variables contributes one
/// independent sample per category.
pub fn covariance_table(n: usize, rows: usize, campaign: &Campaign) -> Result<ExperimentReport> {
    if n < 4 {
        return Err(Error::InvalidDimensions(format!("covariance table needs n >= 4, got {n}")));
    }
    let x = campaign.data(rows, n, campaign.base_seed)?;
    let parts = hoeffding_parts(&x, campaign.mode)?;
    let pairs: Vec<(usize, usize)> = crate::kendall::pairs(n).map(|pi| (pi.i, pi.j)).collect();
    let mut equal = Vec::with_capacity(rows);
    let mut shared = Vec::with_capacity(rows);
    let mut disjoint = Vec::with_capacity(rows);
    let (mut u_in, mut u_out, mut v01) = (Vec::new(), Vec::new(), Vec::new());
    for k in 0..rows {
        let v = parts.vbar_row(k);
        let (mut eq, mut sh, mut dj) = ((0.0, 0usize), (0.0, 0usize), (0.0, 0usize));
        for (a, &(i1, j1)) in pairs.iter().enumerate() {
            eq.0 += v[a] * v[a];
            eq.1 += 1;
            for (b, &(i2, j2)) in pairs.iter().enumerate().skip(a + 1) {
                let common = [i2, j2].iter().filter(|&&t| t == i1 || t == j1).count();
                let slot = if common == 0 { &mut dj } else { &mut sh };
                slot.0 += v[a] * v[b];
                slot.1 += 1;
            }
        }
        equal.push(eq.0 / eq.1 as f64);
        shared.push(sh.0 / sh.1 as f64);
        disjoint.push(dj.0 / dj.1 as f64);
        let u = parts.u_row(k);
        u_in.push(u[0]);
        u_out.push(u[2]);
        v01.push(v[0]);
    }
    let mut metrics = Vec::new();
    for (name, values, target) in
        [("equal_pairs", &equal, 1.0 / 3.0), ("shared_index_pairs", &shared, 0.0), ("disjoint_pairs", &disjoint, 0.0)]
    {
        metrics.push(
            Metric::new(name, mean(values), Bound::Within { target, tolerance: 0.01 }).with_std_error(std_error(values)),
        );
    }
    let limit = 4.0 / (rows as f64).sqrt();
    metrics.push(Metric::new("corr_u_i_vbar_ij", correlation(&u_in, &v01).abs(), Bound::AtMost { limit }));
    metrics.push(Metric::new("corr_u_k_vbar_ij", correlation(&u_out, &v01).abs(), Bound::AtMost { limit }));
    metrics.push(Metric::new("effective_samples", rows as f64, Bound::AtLeast { limit: 1e5 }));
    let inputs = ExperimentInputs::new(vec![n], vec![rows], &campaign.with_seeds(1));
    Ok(ExperimentReport::new("covariance", inputs, metrics))
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let sab: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let saa: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let sbb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    sab / (saa * sbb).sqrt()
}

/// Per seed: `KS(F^tau, F^H) <= rank(tau - H)/p <= 5n/p`, and the direct
/// assembly of `A` agrees with `tau - H`.
pub fn rank_bound(n: usize, p: usize, campaign: &Campaign) -> Result<ExperimentReport> {
    let per_seed = campaign.map_seeds(|seed| {
        let d = decompose(&campaign.data(p, n, seed)?, campaign.mode, true)?;
        let diff = d.tau.sub(&d.h);
        let rank = rank_from_eigenvalues(&eigenvalues(&diff)?);
        let ks = ks_distance(&EmpiricalDistribution::new(eigenvalues(&d.tau)?), &EmpiricalDistribution::new(eigenvalues(&d.h)?));
        let assembly_gap = a_matrix(&d.parts).max_abs_diff(&diff);
        Ok((seed, rank, ks, assembly_gap))
    })?;
    let mut metrics = Vec::new();
    for (seed, rank, ks, gap) in &per_seed {
        let rank_over_p = *rank as f64 / p as f64;
        metrics.push(Metric::new(format!("rank[seed={seed}]"), *rank as f64, Bound::AtMost { limit: 5.0 * n as f64 }));
        metrics.push(Metric::new(format!("ks_tau_h[seed={seed}]"), *ks, Bound::AtMost { limit: rank_over_p }));
        metrics.push(Metric::new(format!("a_assembly_gap[seed={seed}]"), *gap, Bound::AtMost { limit: 1e-10 }));
    }
    Ok(ExperimentReport::new("rank-bound", ExperimentInputs::new(vec![n], vec![p], campaign), metrics))
}

/// Beyond `p = M` the Kendall matrix is singular: at least `p - M`
/// eigenvalues sit at zero.
pub fn zero_onset(n: usize, p: usize, campaign: &Campaign) -> Result<ExperimentReport> {
    let m = pair_count(n);
    let per_seed = campaign.map_seeds(|seed| {
        let t = tau(&campaign.data(p, n, seed)?, DEFAULT_SIGN_BUDGET);
        let s = spectrum_of(&t, n, MatrixKind::Tau)?;
        let zeros = s.count_at_most(tol_eig(&t));
        Ok((seed, zeros, s.mean(), s))
    })?;
    let expected = p.saturating_sub(m) as f64;
    let mut metrics = vec![Metric::reported("pair_count", m as f64)];
    for (seed, zeros, mean_eig, _) in &per_seed {
        metrics.push(Metric::new(format!("zero_eigenvalues[seed={seed}]"), *zeros as f64, Bound::AtLeast {
            limit: expected,
        }));
        metrics.push(Metric::new(format!("mean_eigenvalue[seed={seed}]"), *mean_eig, Bound::Within {
            target: 1.0,
            tolerance: 1e-8,
        }));
    }
    let spectra = per_seed.into_iter().map(|(seed, _, _, spectrum)| LabelledSpectrum { seed, spectrum }).collect();
    Ok(ExperimentReport::new("zero-onset", ExperimentInputs::new(vec![n], vec![p], campaign), metrics)
        .with_spectra(spectra))
}
