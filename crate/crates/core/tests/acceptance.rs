//! Acceptance criteria C1-C10, one line per criterion.
//!
//! Run with `cargo test -p kendall-core --test acceptance`. Exits nonzero if
//! any criterion fails.

mod oracles;

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use kendall_core::datagen::{generate, DataMatrix, MarginalKind};
use kendall_core::experiments::{
    covariance_table, rank_bound, run_kernel_generalization, run_linear_lsd, run_quadratic_lsd,
    verify_concentration, verify_resolvent_identity, zero_onset, Campaign, ExperimentReport,
};
use kendall_core::hoeffding::KernelSpec;
use kendall_core::kendall::{pair_signs, tau_fast, tau_from_signs, tau_naive};
use kendall_core::laws::{law_for_regime, MpLaw, Regime};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn require(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn report_outcome(r: &ExperimentReport, summary: String) -> Outcome {
    if r.passed {
        Ok(summary)
    } else {
        let failed: Vec<String> = r.failures().map(|m| format!("{}={:.6}", m.name, m.value)).collect();
        Err(format!("{summary}; failed: {}", failed.join(", ")))
    }
}

fn value(r: &ExperimentReport, name: &str) -> f64 {
    r.metric(name).map_or(f64::NAN, |m| m.value)
}

fn c1_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let fixture = DataMatrix::from_rows(vec![1.0, 2.0, 3.0, 3.0, 1.0, 2.0], 2, 3).map_err(|e| e.to_string())?;
    let t = tau_naive(&fixture);
    if t.get(0, 1) != -1.0 / 3.0 || tau_fast(&fixture) != t || tau_from_signs(&pair_signs(&fixture)) != t {
        return Err(format!("fixture gave {}", t.get(0, 1)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..200 {
        let p = rng.random_range(1..=10);
        let n = rng.random_range(2..=50);
        let marginal = MarginalKind::ALL[case % 3];
        let x = generate(p, n, marginal, rng.random()).map_err(|e| e.to_string())?;
        let naive = tau_naive(&x);
        if tau_fast(&x) != naive || tau_from_signs(&pair_signs(&x)) != naive {
            return Err(format!("instance {case} (p={p}, n={n}) differs"));
        }
        for k in 0..p {
            for l in 0..=k {
                let (s, m) = oracles::kendall_pair(x.row(k), x.row(l));
                if naive.get(k, l) != s as f64 / m as f64 {
                    return Err(format!("instance {case} entry ({k},{l}) disagrees with the counting oracle"));
                }
            }
        }
    }
    let elapsed = start.elapsed();
    require(elapsed < Duration::from_secs(10), format!("200 instances + fixture bit-exact in {elapsed:.2?}"))
}

fn c2_quadratic_lsd() -> Outcome {
    let r = run_quadratic_lsd(70, 1225, &Campaign::default().with_seeds(5), 0.05, Some((140, 4900)))
        .map_err(|e| e.to_string())?;
    let q_prime = law_for_regime(70, 1225, Regime::Quadratic).q();
    if (q_prime - 2450.0 / 4830.0).abs() > 1e-15 {
        return Err(format!("q' = {q_prime}"));
    }
    report_outcome(
        &r,
        format!(
            "q'={q_prime:.4} mean KS={:.4} (<= 0.05), KS at n=140,p=4900 = {:.4}, trace/p={:.4}",
            value(&r, "mean_ks"),
            value(&r, "ks_at_n140_p4900"),
            value(&r, "trace_over_p")
        ),
    )
}

fn c3_linear_lsd() -> Outcome {
    let r = run_linear_lsd(2000, 200, &Campaign::default().with_seeds(1), 0.03).map_err(|e| e.to_string())?;
    report_outcome(
        &r,
        format!(
            "KS={:.4} (<= 0.03), wrong-law KS={:.4} (>= 0.2)",
            value(&r, "ks[seed=1]"),
            value(&r, "wrong_law_ks[seed=1]")
        ),
    )
}

fn c4_rank_bound() -> Outcome {
    let mut parts = Vec::new();
    let mut failures = Vec::new();
    for (n, p) in [(20, 100), (30, 300), (70, 600)] {
        let r = rank_bound(n, p, &Campaign::default().with_seeds(3)).map_err(|e| e.to_string())?;
        let max_rank = r.metrics.iter().filter(|m| m.name.starts_with("rank")).fold(0.0f64, |a, m| a.max(m.value));
        let max_ks = r.metrics.iter().filter(|m| m.name.starts_with("ks_tau_h")).fold(0.0f64, |a, m| a.max(m.value));
        parts.push(format!("(n={n},p={p}) rank<={max_rank} KS<={max_ks:.4}"));
        if !r.passed {
            failures.extend(r.failures().map(|m| format!("n={n},p={p}: {}={}", m.name, m.value)));
        }
    }
    require(failures.is_empty(), format!("{}{}", parts.join("; "), if failures.is_empty() { String::new() } else { format!("; failed: {}", failures.join(", ")) }))
}

fn c5_covariance() -> Outcome {
    let r = covariance_table(8, 100_000, &Campaign::default()).map_err(|e| e.to_string())?;
    report_outcome(
        &r,
        format!(
            "equal={:.4} shared={:.5} disjoint={:.5} over 1e5 samples",
            value(&r, "equal_pairs"),
            value(&r, "shared_index_pairs"),
            value(&r, "disjoint_pairs")
        ),
    )
}

fn c6_resolvent() -> Outcome {
    let zs = [Complex64::new(1.0, 0.5), Complex64::new(0.5, 1.0)];
    let r = verify_resolvent_identity(30, 80, &zs, &Campaign::default().with_seeds(2000)).map_err(|e| e.to_string())?;
    let detail: Vec<String> = ["z=1+0.5i", "z=0.5+1i"]
        .iter()
        .map(|tag| {
            let m = r.metric(&format!("abs_difference[{tag}]"));
            m.map_or(String::from("missing"), |m| {
                format!("{tag}: |diff|={:.2e} vs 3SE={:.2e}", m.value, 3.0 * m.std_error.unwrap_or(f64::NAN))
            })
        })
        .collect();
    report_outcome(&r, detail.join("; "))
}

fn c7_law_internals() -> Outcome {
    for q in [0.1, 0.5, 1.0, 2.0, 17.5] {
        let law = MpLaw::standard(q).map_err(|e| e.to_string())?;
        let total = law.atom() + oracles::mp_integral(q, |_| 1.0, 400);
        if (total - 1.0).abs() > 1e-8 {
            return Err(format!("normalization at q={q}: {total}"));
        }
        let first = oracles::mp_integral(q, |y| y, 400);
        if (first - 1.0).abs() > 1e-8 || (law.moment(2).map_err(|e| e.to_string())? - oracles::mp_integral(q, |y| y * y, 400)).abs() > 1e-8 {
            return Err(format!("moments at q={q}"));
        }
        let (lo, hi) = law.standard_edges();
        for i in 1..20 {
            let x = lo + (hi - lo) * i as f64 / 20.0;
            let g = law.stieltjes(Complex64::new(x, 1e-6)).map_err(|e| e.to_string())?;
            let recovered = -g.im / std::f64::consts::PI;
            if (recovered - law.density(x)).abs() > 1e-4 {
                return Err(format!("inversion at q={q}, x={x}: {recovered} vs {}", law.density(x)));
            }
        }
    }
    let linear = law_for_regime(2000, 200, Regime::Linear);
    let quadratic = law_for_regime(70, 1225, Regime::Quadratic);
    let (m1, m2) = (linear.moment(1).map_err(|e| e.to_string())?, quadratic.moment(1).map_err(|e| e.to_string())?);
    require(
        (m1 - 1.0).abs() <= 1e-10 && (m2 - 1.0 / 3.0).abs() <= 1e-10,
        format!("normalization, inversion ok; means {m1} and {m2}"),
    )
}

fn c8_zero_onset() -> Outcome {
    let r = zero_onset(10, 60, &Campaign::default().with_seeds(3)).map_err(|e| e.to_string())?;
    let zeros = r.metrics.iter().filter(|m| m.name.starts_with("zero_eigenvalues")).fold(f64::INFINITY, |a, m| a.min(m.value));
    report_outcome(&r, format!("min zero count over seeds = {zeros} (>= 15)"))
}

fn c9_kernels() -> Outcome {
    let c = Campaign::default().with_seeds(5);
    let sign = run_kernel_generalization(&KernelSpec::Sign, 70, 1225, &c, Some(1.0 / 3.0), 0.05).map_err(|e| e.to_string())?;
    let additive = run_kernel_generalization(&KernelSpec::Additive, 70, 1225, &c, None, 0.06).map_err(|e| e.to_string())?;
    let alpha = oracles::sine_alpha_quadrature(64);
    let closed = 0.5 - 4.0 / std::f64::consts::PI.powi(2);
    if (alpha - closed).abs() > 1e-12 {
        return Err(format!("quadrature alpha {alpha} vs {closed}"));
    }
    let sine = run_kernel_generalization(&KernelSpec::Sine, 70, 1225, &c, Some(alpha), 0.06).map_err(|e| e.to_string())?;
    let collapsed = additive
        .metrics
        .iter()
        .filter(|m| m.name.starts_with("collapsed_fraction"))
        .fold(1.0f64, |a, m| a.min(m.value));
    let summary = format!(
        "sign KS={:.4}; additive collapsed fraction>={collapsed:.3}; sine alpha={alpha:.5} est={:.5} KS={:.4}",
        value(&sign, "mean_ks"),
        value(&sine, "alpha_estimate"),
        value(&sine, "mean_ks")
    );
    let failed: Vec<String> = [&sign, &additive, &sine]
        .iter()
        .flat_map(|r| r.failures().map(|m| format!("{}:{}={}", r.inputs.extra["kernel"], m.name, m.value)))
        .collect();
    require(failed.is_empty(), if failed.is_empty() { summary } else { format!("{summary}; failed: {}", failed.join(", ")) })
}

fn c10_concentration() -> Outcome {
    let r = verify_concentration(&[30, 50, 70], 0.5, Complex64::new(1.0, 0.5), &Campaign::default().with_seeds(200))
        .map_err(|e| e.to_string())?;
    report_outcome(
        &r,
        format!(
            "var n=30 {:.3e}, n=50 {:.3e}, n=70 {:.3e}; ratio {:.3}",
            value(&r, "variance[n=30]"),
            value(&r, "variance[n=50]"),
            value(&r, "variance[n=70]"),
            value(&r, "variance_ratio_last_first")
        ),
    )
}

type Criterion = (&'static str, &'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("C1", "tau oracle equivalence", c1_oracle_equivalence),
        ("C2", "quadratic-regime law of H", c2_quadratic_lsd),
        ("C3", "linear-regime law of tau", c3_linear_lsd),
        ("C4", "rank bound between tau and H", c4_rank_bound),
        ("C5", "residual covariance table", c5_covariance),
        ("C6", "resolvent identity", c6_resolvent),
        ("C7", "Marchenko-Pastur internals", c7_law_internals),
        ("C8", "zero-eigenvalue onset", c8_zero_onset),
        ("C9", "kernel generalization", c9_kernels),
        ("C10", "concentration trend", c10_concentration),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| a.starts_with('C')).collect();
    let mut failed = 0;
    for (id, title, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| f == id) {
            continue;
        }
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let elapsed = start.elapsed();
        match outcome {
            Ok(detail) => println!("[PASS] {id} {title}: {detail} ({elapsed:.1?})"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {id} {title}: {detail} ({elapsed:.1?})");
            }
        }
    }
    if failed == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criteria failed");
        ExitCode::FAILURE
    }
}
