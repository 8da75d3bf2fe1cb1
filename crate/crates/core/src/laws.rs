//! The Marchenko-Pastur family and its affine images `shift + scale * Y_q`.
//!
//! `Y_q` has mean 1, continuous density on `[(1-sqrt q)^2, (1+sqrt q)^2]`
//! and, for `q > 1`, an atom of mass `1 - 1/q` at zero.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;
use crate::spectral::{DistributionFunction, MIN_IMAG};

const QUAD_TOL: f64 = 1e-13;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MpLaw {
    q: f64,
    scale: f64,
    shift: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `p / n -> q`, limit `1/3 + (2/3) Y_q`
    Linear,
    /// `2p / (n(n-1)) -> q'`, limit `(1/3) Y_q'`
    Quadratic,
}

impl std::str::FromStr for Regime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Regime::Linear),
            "quadratic" => Ok(Regime::Quadratic),
            other => Err(Error::Parse(format!("unknown regime `{other}`"))),
        }
    }
}

/// Limit law of the Kendall spectrum for `n` samples of dimension `p`.
pub fn law_for_regime(n: usize, p: usize, regime: Regime) -> MpLaw {
    assert!(n >= 2 && p >= 1);
    match regime {
        Regime::Linear => MpLaw { q: p as f64 / n as f64, scale: 2.0 / 3.0, shift: 1.0 / 3.0 },
        Regime::Quadratic => MpLaw { q: 2.0 * p as f64 / (n * (n - 1)) as f64, scale: 1.0 / 3.0, shift: 0.0 },
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LawGridPoint {
    pub x: f64,
    pub density: f64,
    pub cdf: f64,
}

impl MpLaw {
    pub fn new(q: f64, scale: f64, shift: f64) -> Result<Self> {
        if !(q > 0.0 && q.is_finite()) {
            return Err(Error::InvalidParameter(format!("q must be positive, got {q}")));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidParameter(format!("scale must be positive, got {scale}")));
        }
        if !(shift >= 0.0 && shift.is_finite()) {
            return Err(Error::InvalidParameter(format!("shift must be nonnegative, got {shift}")));
        }
        Ok(Self { q, scale, shift })
    }

    pub fn standard(q: f64) -> Result<Self> {
        Self::new(q, 1.0, 0.0)
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// `(lambda_-, lambda_+)` of the unscaled law.
    pub fn standard_edges(&self) -> (f64, f64) {
        let s = self.q.sqrt();
        ((1.0 - s).powi(2), (1.0 + s).powi(2))
    }

    /// Edges of the continuous part after the affine map.
    pub fn edges(&self) -> (f64, f64) {
        let (lo, hi) = self.standard_edges();
        (self.shift + self.scale * lo, self.shift + self.scale * hi)
    }

    /// Mass of the point at `shift`.
    pub fn atom(&self) -> f64 {
        if self.q > 1.0 {
            1.0 - 1.0 / self.q
        } else {
            0.0
        }
    }

    fn standardize(&self, x: f64) -> f64 {
        (x - self.shift) / self.scale
    }

    fn standard_density(&self, y: f64) -> f64 {
        let (lo, hi) = self.standard_edges();
        if y <= lo || y >= hi || y <= 0.0 {
            return 0.0;
        }
        ((hi - y) * (y - lo)).sqrt() / (2.0 * PI * self.q * y)
    }

    /// Density of the continuous part.
    pub fn density(&self, x: f64) -> f64 {
        self.standard_density(self.standardize(x)) / self.scale
    }

    /// Continuous mass of `Y_q` on `(-inf, y]`, closed form.
    fn standard_continuous_cdf(&self, y: f64) -> f64 {
        let q = self.q;
        let (lo, hi) = self.standard_edges();
        if y <= lo {
            return 0.0;
        }
        if y >= hi {
            return q.min(1.0) / q;
        }
        let mid = 1.0 + q;
        let half_width = 2.0 * q.sqrt();
        let t = ((mid - y) / half_width).clamp(-1.0, 1.0).acos();
        let gap = (1.0 - q).abs();
        let arc = if gap == 0.0 {
            0.0
        } else {
            let ratio = (1.0 + q.sqrt()) / (1.0 - q.sqrt()).abs();
            2.0 * gap * (ratio * (0.5 * t).tan()).atan()
        };
        let value = (mid * t + half_width * t.sin() - arc) / (2.0 * PI * q);
        value.clamp(0.0, q.min(1.0) / q)
    }

    /// `P(X <= x)` including the atom.
    pub fn cdf(&self, x: f64) -> f64 {
        let y = self.standardize(x);
        let atom = if y >= 0.0 { self.atom() } else { 0.0 };
        (atom + self.standard_continuous_cdf(y)).min(1.0)
    }

    /// `P(X < x)`.
    pub fn cdf_left(&self, x: f64) -> f64 {
        let y = self.standardize(x);
        let atom = if y > 0.0 { self.atom() } else { 0.0 };
        (atom + self.standard_continuous_cdf(y)).min(1.0)
    }

    /// Continuous mass of `Y_q` on `[lambda_-, y]` by quadrature, with
    /// `lambda = lambda_- + t^2` and `lambda = lambda_+ - t^2` near the
    /// edges so that the square-root (and, at `q = 1`, the `1/sqrt`)
    /// behavior is smoothed out.
    fn standard_continuous_quadrature(&self, y: f64) -> f64 {
        let q = self.q;
        let (lo, hi) = self.standard_edges();
        if y <= lo {
            return 0.0;
        }
        let w = hi - lo;
        let lower_piece = |t: f64| t * t * (w - t * t).max(0.0).sqrt() / (PI * q * (lo + t * t));
        let upper_piece = |t: f64| t * t * (w - t * t).max(0.0).sqrt() / (PI * q * (hi - t * t));
        let mid = 0.5 * (lo + hi);
        let from_lo = |u: f64| quad::integrate(lower_piece, 0.0, (u - lo).sqrt(), QUAD_TOL);
        let to_hi = |u: f64| quad::integrate(upper_piece, 0.0, (hi - u).sqrt(), QUAD_TOL);
        if y <= mid {
            from_lo(y)
        } else {
            from_lo(mid) + to_hi(mid) - to_hi(y.min(hi))
        }
    }

    /// Same as [`MpLaw::cdf`] but integrating the density numerically.
    pub fn cdf_quadrature(&self, x: f64) -> f64 {
        let y = self.standardize(x);
        let atom = if y >= 0.0 { self.atom() } else { 0.0 };
        atom + self.standard_continuous_quadrature(y)
    }

    /// Stieltjes transform `E[1 / (z - X)]`.
    pub fn stieltjes(&self, z: Complex64) -> Result<Complex64> {
        let w = (z - self.shift) / self.scale;
        let (lo, hi) = self.standard_edges();
        if w.im.abs() < MIN_IMAG && ((w.re >= lo && w.re <= hi) || (self.atom() > 0.0 && w.re.abs() < MIN_IMAG)) {
            return Err(Error::OnSupport { re: z.re, im: z.im });
        }
        let s = (w - hi).sqrt() * (w - lo).sqrt();
        let a = w - 1.0 + self.q;
        // g = (a - s) / (2 q w) = 2 / (a + s); use whichever side avoids cancellation.
        let g = if (a + s).norm() >= (a - s).norm() { 2.0 / (a + s) } else { (a - s) / (2.0 * self.q * w) };
        Ok(g / self.scale)
    }

    /// `E[X^k]` for `k` in `1..=4`, from the Narayana moments of `Y_q`.
    pub fn moment(&self, k: u32) -> Result<f64> {
        if !(1..=4).contains(&k) {
            return Err(Error::MomentOrder(k));
        }
        let q = self.q;
        let m = [1.0, 1.0, 1.0 + q, 1.0 + 3.0 * q + q * q, 1.0 + 6.0 * q + 6.0 * q * q + q * q * q];
        let binom = |n: u32, r: u32| -> f64 { (1..=r).fold(1.0, |acc, i| acc * f64::from(n - r + i) / f64::from(i)) };
        Ok((0..=k)
            .map(|j| binom(k, j) * self.shift.powi((k - j) as i32) * self.scale.powi(j as i32) * m[j as usize])
            .sum())
    }

    pub fn mean(&self) -> f64 {
        self.shift + self.scale
    }

    /// Density/CDF table covering the support with a 5% margin.
    pub fn grid(&self, points: usize) -> Vec<LawGridPoint> {
        let (lo, hi) = self.edges();
        let lo = lo.min(self.shift);
        let margin = 0.05 * (hi - lo);
        let (a, b) = (lo - margin, hi + margin);
        let points = points.max(2);
        (0..points)
            .map(|i| {
                let x = a + (b - a) * i as f64 / (points - 1) as f64;
                LawGridPoint { x, density: self.density(x), cdf: self.cdf(x) }
            })
            .collect()
    }

    pub fn write_grid_csv<W: Write>(&self, points: usize, mut w: W) -> Result<()> {
        writeln!(w, "# q={} scale={} shift={} atom={}", self.q, self.scale, self.shift, self.atom())?;
        writeln!(w, "lambda,density,cdf")?;
        for pt in self.grid(points) {
            writeln!(w, "{},{},{}", pt.x, pt.density, pt.cdf)?;
        }
        Ok(())
    }
}

impl DistributionFunction for MpLaw {
    fn cdf(&self, x: f64) -> f64 {
        MpLaw::cdf(self, x)
    }

    fn cdf_left(&self, x: f64) -> f64 {
        MpLaw::cdf_left(self, x)
    }

    fn jump_points(&self) -> Vec<f64> {
        if self.atom() > 0.0 {
            vec![self.shift]
        } else {
            Vec::new()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{ks_distance, EmpiricalDistribution};

    const QS: [f64; 5] = [0.1, 0.5, 1.0, 2.0, 17.5];

    fn quad_stieltjes(law: &MpLaw, z: Complex64) -> Complex64 {
        // Integrate in the standard variable with edge substitutions.
        let (lo, hi) = law.standard_edges();
        let mid = 0.5 * (lo + hi);
        let w = hi - lo;
        let q = law.q();
        let kernel = |y: f64| (z - (law.shift() + law.scale() * y)).inv();
        let part = |re: bool| {
            let pick = |c: Complex64| if re { c.re } else { c.im };
            let low = |t: f64| t * t * (w - t * t).sqrt() / (PI * q * (lo + t * t)) * pick(kernel(lo + t * t));
            let high = |t: f64| t * t * (w - t * t).sqrt() / (PI * q * (hi - t * t)) * pick(kernel(hi - t * t));
            quad::integrate(low, 0.0, (mid - lo).sqrt(), 1e-13) + quad::integrate(high, 0.0, (hi - mid).sqrt(), 1e-13)
        };
        let atom = law.atom() * kernel(0.0);
        Complex64::new(part(true), part(false)) + atom
    }

    #[test]
    fn normalization_by_quadrature() {
        for q in QS {
            let law = MpLaw::standard(q).unwrap();
            let (_, hi) = law.edges();
            let total = law.cdf_quadrature(hi);
            assert!((total - 1.0).abs() < 1e-8, "q={q}: {total}");
        }
    }

    #[test]
    fn closed_form_cdf_agrees_with_quadrature() {
        for q in QS {
            for (a, b) in [(1.0, 0.0), (1.0 / 3.0, 0.0), (2.0 / 3.0, 1.0 / 3.0)] {
                let law = MpLaw::new(q, a, b).unwrap();
                let (lo, hi) = law.edges();
                for i in 0..=40 {
                    let x = lo + (hi - lo) * i as f64 / 40.0;
                    let d = (law.cdf(x) - law.cdf_quadrature(x)).abs();
                    assert!(d < 1e-8, "q={q} a={a} x={x}: {d}");
                }
            }
        }
    }

    #[test]
    fn cdf_boundaries_and_atom() {
        let law = MpLaw::standard(2.0).unwrap();
        assert_eq!(law.cdf(-0.1), 0.0);
        assert_eq!(law.cdf_left(0.0), 0.0);
        assert!((law.cdf(1e-12) - 0.5).abs() < 1e-6);
        assert!((law.cdf(law.edges().1) - 1.0).abs() < 1e-8);
        let small = MpLaw::standard(0.25).unwrap();
        assert_eq!(small.cdf(0.0), 0.0);
        assert!((small.cdf(small.edges().1) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn density_values() {
        let law = MpLaw::standard(1.0).unwrap();
        assert_eq!(law.density(4.0), 0.0);
        let q = 0.25;
        let law = MpLaw::standard(q).unwrap();
        let (lo, hi) = law.edges();
        let total = quad::integrate(|x| law.density(x), lo, hi, 1e-10);
        assert!((total - 1.0).abs() < 1e-6);
    }

    #[test]
    fn scaled_edges() {
        let law = MpLaw::new(0.5, 1.0 / 3.0, 0.0).unwrap();
        let (lo, hi) = law.edges();
        assert!((lo - 0.028595).abs() < 1e-5, "{lo}");
        assert!((hi - 0.971405).abs() < 1e-5, "{hi}");
    }

    #[test]
    fn edge_square_root_behavior() {
        for q in [0.1, 0.5, 2.0] {
            let law = MpLaw::standard(q).unwrap();
            let (lo, hi) = law.edges();
            let c = 1.0 / (2.0 * PI * q) * (hi - lo).sqrt() / lo.clamp(1e-3, 1.0) * 2.0;
            for k in 1..30 {
                let d = 10f64.powf(-(k as f64) / 5.0);
                assert!(law.density(lo + d) <= c * d.sqrt());
                assert!(law.density(hi - d) <= c * d.sqrt());
            }
        }
    }

    #[test]
    fn stieltjes_decays_like_inverse_z() {
        for q in QS {
            let law = MpLaw::new(q, 1.0 / 3.0, 0.0).unwrap();
            let z = Complex64::new(0.0, 1e6);
            let g = law.stieltjes(z).unwrap();
            // g(z) = 1/z + E[X]/z^2 + O(z^-3)
            assert!((g * z - 1.0).norm() < 1e-6, "q={q}");
            assert!((g * z - 1.0 - law.mean() / z).norm() < 1e-9, "q={q}");
        }
    }

    #[test]
    fn stieltjes_matches_quadrature() {
        for q in QS {
            for (a, b) in [(1.0, 0.0), (2.0 / 3.0, 1.0 / 3.0)] {
                let law = MpLaw::new(q, a, b).unwrap();
                let z = Complex64::new(1.0, 1.0);
                let d = (law.stieltjes(z).unwrap() - quad_stieltjes(&law, z)).norm();
                assert!(d < 1e-7, "q={q}: {d}");
            }
        }
    }

    #[test]
    fn stieltjes_herglotz_and_support_errors() {
        let law = MpLaw::new(2.0, 1.0 / 3.0, 0.0).unwrap();
        for re in [-1.0, 0.0, 0.3, 1.0, 4.0] {
            for im in [-1.0, -0.05, 0.05, 1.0] {
                let g = law.stieltjes(Complex64::new(re, im)).unwrap();
                assert!(g.im * im < 0.0);
            }
        }
        assert!(law.stieltjes(Complex64::new(1.0, 0.0)).is_err());
        assert!(law.stieltjes(Complex64::new(0.0, 0.0)).is_err());
        assert!(law.stieltjes(Complex64::new(-1.0, 0.0)).is_ok());
    }

    #[test]
    fn stieltjes_inversion_recovers_density() {
        for q in QS {
            let law = MpLaw::new(q, 1.0 / 3.0, 0.0).unwrap();
            let (lo, hi) = law.edges();
            for i in 1..20 {
                let x = lo + (hi - lo) * i as f64 / 20.0;
                let g = law.stieltjes(Complex64::new(x, 1e-6)).unwrap();
                let d = (-g.im / PI - law.density(x)).abs();
                assert!(d < 1e-4, "q={q} x={x}: {d}");
            }
        }
    }

    #[test]
    fn moments() {
        let quad = law_for_regime(70, 1225, Regime::Quadratic);
        assert!((quad.moment(1).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        let lin = law_for_regime(70, 1225, Regime::Linear);
        assert!((lin.moment(1).unwrap() - 1.0).abs() < 1e-12);
        assert!(lin.moment(0).is_err());
        assert!(lin.moment(5).is_err());
        for q in [0.3, 1.5] {
            let law = MpLaw::new(q, 0.7, 0.2).unwrap();
            let (lo, hi) = MpLaw::standard(q).unwrap().standard_edges();
            for k in 1..=4u32 {
                let f = |y: f64| (0.2 + 0.7 * y).powi(k as i32) * MpLaw::standard(q).unwrap().density(y);
                let cont = quad::integrate(f, lo, hi, 1e-12);
                let atom = law.atom() * 0.2f64.powi(k as i32);
                assert!((law.moment(k).unwrap() - cont - atom).abs() < 1e-8, "q={q} k={k}");
            }
        }
    }

    #[test]
    fn regime_parameters() {
        let quad = law_for_regime(70, 1225, Regime::Quadratic);
        assert!((quad.q() - 2450.0 / 4830.0).abs() < 1e-15);
        assert_eq!((quad.scale(), quad.shift()), (1.0 / 3.0, 0.0));
        let lin = law_for_regime(70, 1225, Regime::Linear);
        assert_eq!(lin.q(), 17.5);
        assert_eq!(law_for_regime(2000, 200, Regime::Linear).q(), 0.1);
    }

    #[test]
    fn point_mass_against_atom() {
        let e = EmpiricalDistribution::new(vec![0.0; 10]);
        let law = MpLaw::standard(2.0).unwrap();
        assert!((ks_distance(&e, &law) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn invalid_parameters() {
        assert!(MpLaw::new(0.0, 1.0, 0.0).is_err());
        assert!(MpLaw::new(1.0, -1.0, 0.0).is_err());
        assert!(MpLaw::new(1.0, 1.0, -0.5).is_err());
    }
}
