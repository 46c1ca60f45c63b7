//! Blow-up models when the drift `h = b . xi` is not constant: harmonic
//! oscillators at interior minimizers and half-line Airy problems at ends.

use serde::{Deserialize, Serialize};

use crate::eigensolve::{airy_halfline, harmonic_oscillator, LineSpectrum};
use crate::error::{LocalizationError, Result};
use crate::exec::Execution;
use crate::geometry::{classify_h, HClassification, WaveguideGeometry};

#[derive(Debug, Clone)]
pub struct LocalizationOptions {
    pub cells: usize,
    pub tol: f64,
    pub exec: Execution,
}

impl Default for LocalizationOptions {
    fn default() -> Self {
        LocalizationOptions { cells: 2048, tol: 1e-10, exec: Execution::Parallel }
    }
}

/// One well of the blow-up model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WellModel {
    /// `-r phi'' + c t^2 phi` with `c = h''(s) / 2`.
    Oscillator { s: f64, hpp: f64, c: f64 },
    /// `-r phi'' + slope t phi` on the half-line.
    Airy { s: f64, slope: f64 },
}

impl WellModel {
    pub fn s(&self) -> f64 {
        match self {
            WellModel::Oscillator { s, .. } | WellModel::Airy { s, .. } => *s,
        }
    }
}

/// Effective eigenvalue with the index of the well it belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelledEta {
    pub value: f64,
    pub well: usize,
    /// Level within its own well.
    pub level: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    /// `lambda = mu_C / delta^2 + h0 / delta + eta / delta^(1/2)`.
    Interior,
    /// `lambda = mu_C / delta^2 + h0 / delta + eta / delta^(2/3)`.
    Endpoint,
}

impl Scaling {
    pub fn eta_exponent(self) -> f64 {
        match self {
            Scaling::Interior => 0.5,
            Scaling::Endpoint => 2.0 / 3.0,
        }
    }

    /// Exponent of the stretched variable `t = delta^(-p) (s - s0)`.
    pub fn blowup_exponent(self) -> f64 {
        match self {
            Scaling::Interior => 0.25,
            Scaling::Endpoint => 1.0 / 3.0,
        }
    }

    /// Exponent of the amplitude factor `delta^q` preserving the L2 norm.
    pub fn amplitude_exponent(self) -> f64 {
        0.5 * self.blowup_exponent()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationModel {
    pub class: HClassification,
    pub wells: Vec<WellModel>,
    pub r: f64,
    pub mu_c: f64,
    /// Minimum value of `h`.
    pub h0: f64,
    pub scaling: Scaling,
    /// Per-well spectra in well order.
    pub spectra: Vec<Vec<f64>>,
    /// Truncation sensitivity per well and level.
    pub sensitivity: Vec<Vec<f64>>,
    /// Ascending merge of all well spectra.
    pub eta: Vec<LabelledEta>,
}

impl LocalizationModel {
    /// Predicted `lambda_j(delta)` for the first `count` merged levels.
    pub fn predict(&self, delta: f64, count: usize) -> Vec<f64> {
        let p = self.scaling.eta_exponent();
        self.eta
            .iter()
            .take(count)
            .map(|e| self.mu_c / (delta * delta) + self.h0 / delta + e.value / delta.powf(p))
            .collect()
    }
}

/// Ascending merge of per-well spectra; ties are ordered by well position so
/// the result does not depend on the order wells are listed in.
pub fn merge_spectra(wells: &[WellModel], spectra: &[Vec<f64>]) -> Vec<LabelledEta> {
    let mut all: Vec<LabelledEta> = spectra
        .iter()
        .enumerate()
        .flat_map(|(w, sp)| sp.iter().enumerate().map(move |(level, &value)| LabelledEta { value, well: w, level }))
        .collect();
    all.sort_by(|a, b| {
        a.value
            .total_cmp(&b.value)
            .then(wells[a.well].s().total_cmp(&wells[b.well].s()))
            .then(a.level.cmp(&b.level))
    });
    all
}

fn well_spectrum(w: &WellModel, r: f64, count: usize, cells: usize) -> Result<LineSpectrum> {
    match *w {
        WellModel::Oscillator { c, .. } => harmonic_oscillator(r, c, count, cells),
        WellModel::Airy { slope, .. } => airy_halfline(r, slope, count, cells),
    }
}

/// Builds the blow-up model for `h = b . xi` with `count` levels per well.
pub fn localize(
    geom: &WaveguideGeometry,
    b: [f64; 2],
    mu_c: f64,
    r: f64,
    count: usize,
    opts: &LocalizationOptions,
) -> Result<LocalizationModel> {
    if !(r > 0.0) {
        return Err(LocalizationError::NoDiscreteSpectrum(format!("kinetic coefficient must be positive, got {r}")).into());
    }
    let class = classify_h(geom, b, opts.tol)?;
    let (wells, h0, scaling) = match &class {
        HClassification::Propagation { .. } => {
            return Err(LocalizationError::NoDiscreteSpectrum("h is constant; the propagation model applies".into()).into())
        }
        HClassification::InteriorSingle { well } => {
            (vec![WellModel::Oscillator { s: well.s, hpp: well.hpp, c: 0.5 * well.hpp }], well.h, Scaling::Interior)
        }
        HClassification::InteriorMulti { wells } => {
            let h0 = wells.iter().map(|w| w.h).fold(f64::INFINITY, f64::min);
            (wells.iter().map(|w| WellModel::Oscillator { s: w.s, hpp: w.hpp, c: 0.5 * w.hpp }).collect(), h0, Scaling::Interior)
        }
        HClassification::Endpoint { ends } => {
            let h0 = ends.iter().map(|e| e.h).fold(f64::INFINITY, f64::min);
            (ends.iter().map(|e| WellModel::Airy { s: e.s, slope: e.slope }).collect(), h0, Scaling::Endpoint)
        }
    };
    localize_wells(class, wells, h0, scaling, mu_c, r, count, opts)
}

/// Spectra for explicitly given wells.
#[allow(clippy::too_many_arguments)]
pub fn localize_wells(
    class: HClassification,
    wells: Vec<WellModel>,
    h0: f64,
    scaling: Scaling,
    mu_c: f64,
    r: f64,
    count: usize,
    opts: &LocalizationOptions,
) -> Result<LocalizationModel> {
    let solved = opts.exec.try_map(&wells, |w| well_spectrum(w, r, count, opts.cells))?;
    let spectra: Vec<Vec<f64>> = solved.iter().map(|s| s.values.clone()).collect();
    let sensitivity = solved.iter().map(|s| s.sensitivity.clone()).collect();
    let eta = merge_spectra(&wells, &spectra);
    Ok(LocalizationModel { class, wells, r, mu_c, h0, scaling, spectra, sensitivity, eta })
}

/// Density of a field along the guide, `rho(s) = int |v(s, x)|^2 dx`, given
/// at quadrature points in `s` with weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceDensity {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub density: Vec<f64>,
}

/// Second moment `int (s - s0)^2 |v|^2` of a field normalized in L2.
pub fn concentration_diagnostic(rho: &SliceDensity, s0: f64) -> f64 {
    rho.points
        .iter()
        .zip(&rho.weights)
        .zip(&rho.density)
        .map(|((s, w), d)| w * (s - s0).powi(2) * d)
        .sum()
}
