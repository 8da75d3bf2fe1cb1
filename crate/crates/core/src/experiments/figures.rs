//! Data behind the two histogram figures: the `H` spectrum against
//! `(1/3) Y_q'`, and tau spectra for growing `p` at fixed `n`.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::laws::{law_for_regime, MpLaw, Regime};
use crate::spectral::{ks_distance, Histogram, MatrixKind, Spectrum};

use super::lsd::BULK_MARGIN;
use super::{decompose, spectrum_of, Campaign};

/// Values drawn on top of a histogram.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PanelAnnotations {
    pub n: usize,
    pub p: usize,
    pub q: f64,
    pub q_prime: f64,
    pub seed: u64,
    /// Mean of the quadratic-regime law.
    pub mean_line: f64,
    /// Continuous support of `(1/3) Y_q'`.
    pub quadratic_edges: [f64; 2],
    /// Continuous support of `1/3 + (2/3) Y_q`.
    pub linear_edges: [f64; 2],
    /// KS distance of the plotted spectrum (bulk only for tau) to `(1/3) Y_q'`.
    pub ks: f64,
    /// Eigenvalues beyond the bulk cut; zero for `H`.
    pub outliers: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FigurePanel {
    pub label: String,
    pub spectrum: Spectrum,
    pub histogram: Histogram,
    pub law: MpLaw,
    pub annotations: PanelAnnotations,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FigureData {
    pub name: String,
    pub panels: Vec<FigurePanel>,
}

fn annotations(n: usize, p: usize, seed: u64, ks: f64, outliers: usize) -> PanelAnnotations {
    let quad = law_for_regime(n, p, Regime::Quadratic);
    let lin = law_for_regime(n, p, Regime::Linear);
    let (ql, qh) = quad.edges();
    let (ll, lh) = lin.edges();
    PanelAnnotations {
        n,
        p,
        q: lin.q(),
        q_prime: quad.q(),
        seed,
        mean_line: quad.mean(),
        quadratic_edges: [ql, qh],
        linear_edges: [ll, lh],
        ks,
        outliers,
    }
}

fn bins_for(spectrum: &Spectrum, bins: Option<usize>) -> usize {
    bins.unwrap_or_else(|| spectrum.esd().freedman_diaconis_bins())
}

/// Histogram of the `H` spectrum with the `(1/3) Y_q'` overlay.
pub fn fig1(n: usize, p: usize, campaign: &Campaign, bins: Option<usize>) -> Result<FigureData> {
    let seed = campaign.base_seed;
    let d = decompose(&campaign.data(p, n, seed)?, campaign.mode, false)?;
    let spectrum = spectrum_of(&d.h, n, MatrixKind::H)?;
    let law = law_for_regime(n, p, Regime::Quadratic);
    let esd = spectrum.esd();
    let panel = FigurePanel {
        label: format!("h_n{n}_p{p}"),
        histogram: esd.histogram(bins_for(&spectrum, bins)),
        annotations: annotations(n, p, seed, ks_distance(&esd, &law), 0),
        spectrum,
        law,
    };
    Ok(FigureData { name: "fig1".into(), panels: vec![panel] })
}

/// One tau histogram per `p`, each with its own `(1/3) Y_q'` overlay.
pub fn fig2(n: usize, p_list: &[usize], campaign: &Campaign, bins: Option<usize>) -> Result<FigureData> {
    let seed = campaign.base_seed;
    let panels = p_list
        .iter()
        .map(|&p| {
            let d = decompose(&campaign.data(p, n, seed)?, campaign.mode, true)?;
            let spectrum = spectrum_of(&d.tau, n, MatrixKind::Tau)?;
            let law = law_for_regime(n, p, Regime::Quadratic);
            let esd = spectrum.esd();
            let bulk = esd.restricted_to_at_most(law.edges().1 * (1.0 + BULK_MARGIN));
            let outliers = esd.len() - bulk.len();
            Ok(FigurePanel {
                label: format!("tau_n{n}_p{p}"),
                histogram: esd.histogram(bins_for(&spectrum, bins)),
                annotations: annotations(n, p, seed, ks_distance(&bulk, &law), outliers),
                spectrum,
                law,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FigureData { name: "fig2".into(), panels })
}
