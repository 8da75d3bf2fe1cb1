//! Reference computations kept apart from the library code paths.
#![allow(dead_code)]

use std::f64::consts::PI;

/// Gauss-Legendre nodes and weights on [-1, 1] (Newton on P_k).
pub fn gauss_legendre(k: usize) -> Vec<(f64, f64)> {
    (0..k)
        .map(|i| {
            let mut x = (PI * (i as f64 + 0.75) / (k as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for m in 2..=k {
                    let p2 = ((2 * m - 1) as f64 * x * p1 - (m - 1) as f64 * p0) / m as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = k as f64 * (x * p1 - p0) / (x * x - 1.0);
                let step = p1 / dp;
                x -= step;
                if step.abs() < 1e-16 {
                    break;
                }
            }
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

/// Gauss-Legendre integral of `f` over `[a, b]` with `k` nodes.
pub fn gl_integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, k: usize) -> f64 {
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    gauss_legendre(k).iter().map(|&(x, w)| w * f(c + h * x)).sum::<f64>() * h
}

/// `int g(y) rho_q(y) dy` over the continuous part of the standard MP law,
/// with `y = lo + (hi - lo) sin^2 t`, which removes both edge singularities.
pub fn mp_integral<F: Fn(f64) -> f64>(q: f64, g: F, k: usize) -> f64 {
    let (lo, hi) = ((1.0 - q.sqrt()).powi(2), (1.0 + q.sqrt()).powi(2));
    gl_integrate(
        |t| {
            let (s, c) = t.sin_cos();
            let y = lo + (hi - lo) * s * s;
            // density * dy/dt, with sqrt((hi-y)(y-lo)) = (hi-lo) s c
            let jac = 2.0 * (hi - lo) * s * c;
            let dens_num = (hi - lo) * s * c;
            g(y) * dens_num * jac / (2.0 * PI * q * y)
        },
        0.0,
        PI / 2.0,
        k,
    )
}

/// `alpha` for the sine kernel on uniform(0,1): the inner mean
/// `u(x) = int_0^1 sin(pi(x - y)) dy` and the outer double integral are both
/// Gauss-Legendre sums.
pub fn sine_alpha_quadrature(k: usize) -> f64 {
    let nodes: Vec<(f64, f64)> = gauss_legendre(k).into_iter().map(|(x, w)| (0.5 * (x + 1.0), 0.5 * w)).collect();
    let phi = |x: f64, y: f64| (PI * (x - y)).sin();
    let u: Vec<f64> = nodes.iter().map(|&(x, _)| nodes.iter().map(|&(y, w)| w * phi(x, y)).sum()).collect();
    let mut total = 0.0;
    for (a, &(x1, w1)) in nodes.iter().enumerate() {
        for (b, &(x2, w2)) in nodes.iter().enumerate() {
            let r = phi(x1, x2) - u[a] + u[b];
            total += w1 * w2 * r * r;
        }
    }
    total
}

/// Kendall coefficient by explicit concordance counting in rationals.
pub fn kendall_pair(a: &[f64], b: &[f64]) -> (i64, i64) {
    let n = a.len();
    let mut s = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            let c = (a[i] - a[j]) * (b[i] - b[j]);
            s += if c > 0.0 { 1 } else { -1 };
        }
    }
    (s, (n * (n - 1) / 2) as i64)
}
