//! Centre-line geometry of a thin tube: curvature, frame rotation and the
//! derived quantities `xi`, `tau` and the metric weight `beta`.
//!
//! The curvature vector in the rotated cross-section frame is
//! `xi(s) = k(s) (cos(theta - alpha), -sin(theta - alpha))`, the torsion-like
//! twist rate is `tau = theta'`, and `beta(s, x) = 1 - delta xi(s).x`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{GeometryError, LocalizationError, Result};
use crate::expr::{Expression, Jet2, Var, Vars};

/// A scalar function of arc length.
#[derive(Clone)]
pub enum Profile {
    Constant(f64),
    Expr(Expression),
    /// Samples on an increasing grid, interpolated linearly.
    Sampled { s: Vec<f64>, values: Vec<f64> },
    /// Arbitrary closure; derivatives use five-point centred differences.
    Function(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::Constant(c) => write!(f, "Constant({c})"),
            Profile::Expr(e) => write!(f, "Expr({e})"),
            Profile::Sampled { s, .. } => write!(f, "Sampled({} points)", s.len()),
            Profile::Function(_) => write!(f, "Function"),
        }
    }
}

impl Profile {
    pub fn expr(src: &str) -> Result<Profile> {
        let e = Expression::parse(src).map_err(GeometryError::from)?;
        e.check_variables(&[Var::S]).map_err(GeometryError::from)?;
        Ok(Profile::Expr(e))
    }

    pub fn function(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Profile {
        Profile::Function(Arc::new(f))
    }

    pub fn sampled(s: Vec<f64>, values: Vec<f64>) -> Result<Profile> {
        if s.len() < 2 || s.len() != values.len() {
            return Err(GeometryError::Invalid("sampled profile needs at least two (s, value) pairs".into()).into());
        }
        if s.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(GeometryError::Invalid("sample positions must be strictly increasing".into()).into());
        }
        if s.iter().chain(values.iter()).any(|v| !v.is_finite()) {
            return Err(GeometryError::Invalid("non-finite sample".into()).into());
        }
        Ok(Profile::Sampled { s, values })
    }

    pub fn value(&self, s: f64) -> Result<f64> {
        Ok(match self {
            Profile::Constant(c) => *c,
            Profile::Expr(e) => e.eval(&Vars::s(s)).map_err(GeometryError::from)?,
            Profile::Sampled { s: grid, values } => interp(grid, values, s),
            Profile::Function(f) => f(s),
        })
    }

    /// Value, first and second derivative at `s`.
    pub fn jet(&self, s: f64) -> Result<Jet2> {
        match self {
            Profile::Constant(c) => Ok(Jet2::constant(*c)),
            Profile::Expr(e) => Ok(e.eval_jet(&Vars::s(s), Var::S).map_err(GeometryError::from)?),
            Profile::Sampled { s: grid, values } => {
                let (d1, d2) = sampled_derivatives(grid, values);
                Ok(Jet2 { v: interp(grid, values, s), d1: interp(grid, &d1, s), d2: interp(grid, &d2, s) })
            }
            Profile::Function(f) => {
                let h = 1e-3 * (1.0 + s.abs());
                let (fm2, fm1, f0, fp1, fp2) = (f(s - 2.0 * h), f(s - h), f(s), f(s + h), f(s + 2.0 * h));
                Ok(Jet2 {
                    v: f0,
                    d1: (fm2 - 8.0 * fm1 + 8.0 * fp1 - fp2) / (12.0 * h),
                    d2: (-fm2 + 16.0 * fm1 - 30.0 * f0 + 16.0 * fp1 - fp2) / (12.0 * h * h),
                })
            }
        }
    }

    fn is_zero_on(&self, grid: &[f64]) -> Result<bool> {
        for &s in grid {
            if self.value(s)? != 0.0 {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

fn interp(grid: &[f64], values: &[f64], s: f64) -> f64 {
    let n = grid.len();
    if s <= grid[0] {
        return values[0];
    }
    if s >= grid[n - 1] {
        return values[n - 1];
    }
    let i = grid.partition_point(|&g| g <= s).saturating_sub(1).min(n - 2);
    let t = (s - grid[i]) / (grid[i + 1] - grid[i]);
    values[i] + t * (values[i + 1] - values[i])
}

fn sampled_derivatives(grid: &[f64], v: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = grid.len();
    let mut d1 = vec![0.0; n];
    for i in 0..n {
        let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
        d1[i] = (v[b] - v[a]) / (grid[b] - grid[a]);
    }
    let mut d2 = vec![0.0; n];
    if n >= 3 {
        for i in 0..n {
            let c = i.clamp(1, n - 2);
            let (hl, hr) = (grid[c] - grid[c - 1], grid[c + 1] - grid[c]);
            d2[i] = 2.0 * ((v[c + 1] - v[c]) / hr - (v[c] - v[c - 1]) / hl) / (hl + hr);
        }
    }
    (d1, d2)
}

/// Validated centre-line data together with a uniform sample grid.
#[derive(Debug, Clone)]
pub struct WaveguideGeometry {
    pub l: f64,
    pub k: Profile,
    pub alpha: Profile,
    pub theta: Profile,
    pub samples: Vec<f64>,
    pub xi_sup: f64,
    pub lipschitz_xi: f64,
    pub warnings: Vec<String>,
}

/// Builds and validates a geometry sampled at `n_samples` uniform points.
pub fn build_geometry(l: f64, k: Profile, alpha: Profile, theta: Profile, n_samples: usize) -> Result<WaveguideGeometry> {
    if !(l.is_finite() && l > 0.0) {
        return Err(GeometryError::Invalid(format!("length must be positive and finite, got {l}")).into());
    }
    if n_samples < 3 {
        return Err(GeometryError::Invalid("at least three samples are required".into()).into());
    }
    let samples: Vec<f64> = (0..n_samples).map(|i| l * i as f64 / (n_samples - 1) as f64).collect();
    let mut g = WaveguideGeometry { l, k, alpha, theta, samples, xi_sup: 0.0, lipschitz_xi: 0.0, warnings: Vec::new() };
    let mut xis = Vec::with_capacity(n_samples);
    for &s in &g.samples {
        let xi = g.xi(s)?;
        let tau = g.tau(s)?;
        if !(xi[0].is_finite() && xi[1].is_finite() && tau.is_finite()) {
            return Err(GeometryError::Invalid(format!("non-finite curvature or twist at s = {s}")).into());
        }
        xis.push(xi);
    }
    g.xi_sup = xis.iter().map(|x| x[0].hypot(x[1])).fold(0.0, f64::max);
    let ds = l / (n_samples - 1) as f64;
    g.lipschitz_xi = xis
        .windows(2)
        .map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]) / ds)
        .fold(0.0, f64::max);
    if g.lipschitz_xi > 1e3 * (1.0 + g.xi_sup) / l {
        g.warnings.push(format!(
            "curvature vector varies rapidly (Lipschitz estimate {:.3e}); consider more samples",
            g.lipschitz_xi
        ));
    }
    Ok(g)
}

impl WaveguideGeometry {
    /// Straight, untwisted guide of length `l`.
    pub fn straight(l: f64) -> Result<WaveguideGeometry> {
        build_geometry(l, Profile::Constant(0.0), Profile::Constant(0.0), Profile::Constant(0.0), 257)
    }

    fn check(&self, s: f64) -> Result<()> {
        let slack = 1e-12 * self.l;
        if !(s >= -slack && s <= self.l + slack) {
            return Err(GeometryError::OutOfDomain { s, l: self.l }.into());
        }
        Ok(())
    }

    pub fn xi_jet(&self, s: f64) -> Result<[Jet2; 2]> {
        self.check(s)?;
        let k = self.k.jet(s)?;
        let phi = self.theta.jet(s)?.sub(self.alpha.jet(s)?);
        Ok([k.mul(phi.cos()), k.mul(phi.sin()).neg()])
    }

    pub fn xi(&self, s: f64) -> Result<[f64; 2]> {
        self.check(s)?;
        let k = self.k.value(s)?;
        let phi = self.theta.value(s)? - self.alpha.value(s)?;
        Ok([k * phi.cos(), -k * phi.sin()])
    }

    /// `tau = theta'` and its derivative.
    pub fn tau_jet(&self, s: f64) -> Result<(f64, f64)> {
        self.check(s)?;
        let t = self.theta.jet(s)?;
        Ok((t.d1, t.d2))
    }

    pub fn tau(&self, s: f64) -> Result<f64> {
        Ok(self.tau_jet(s)?.0)
    }

    /// `h(s) = b . xi(s)` with its first two derivatives.
    pub fn h_jet(&self, b: [f64; 2], s: f64) -> Result<Jet2> {
        let [x1, x2] = self.xi_jet(s)?;
        Ok(x1.scale(b[0]).add(x2.scale(b[1])))
    }

    pub fn h(&self, b: [f64; 2], s: f64) -> Result<f64> {
        let xi = self.xi(s)?;
        Ok(b[0] * xi[0] + b[1] * xi[1])
    }

    pub fn is_untwisted(&self) -> Result<bool> {
        Ok(match &self.theta {
            Profile::Constant(_) => true,
            _ => {
                for &s in &self.samples {
                    if self.tau(s)? != 0.0 {
                        return Ok(false);
                    }
                }
                true
            }
        })
    }

    pub fn is_straight(&self) -> Result<bool> {
        self.k.is_zero_on(&self.samples)
    }

    /// Upper bound of `delta |xi| |x|` on the tube; `beta > 0` when below 1.
    pub fn beta_bound(&self, delta: f64, x_sup: f64) -> f64 {
        delta * self.xi_sup * x_sup
    }

    /// Fails unless `beta > 0` on the tube at scale `delta`.
    pub fn check_beta(&self, delta: f64, x_sup: f64) -> Result<()> {
        let bound = self.beta_bound(delta, x_sup);
        if bound >= 1.0 {
            return Err(GeometryError::BetaNotPositive { bound }.into());
        }
        Ok(())
    }

    /// Metric weight `beta(s, x) = 1 - delta xi(s).x`.
    pub fn eval_beta(&self, s: f64, x: [f64; 2], delta: f64) -> Result<f64> {
        let xi = self.xi(s)?;
        Ok(1.0 - delta * (xi[0] * x[0] + xi[1] * x[1]))
    }
}

/// End of the guide where an endpoint minimum sits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum End {
    Left,
    Right,
}

/// Nondegenerate interior minimizer of `h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Well {
    pub s: f64,
    pub h: f64,
    pub hpp: f64,
}

/// Minimum at an end of the guide; `slope` is the one-sided derivative of
/// `h` pointing into the guide (positive).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EndWell {
    pub end: End,
    pub s: f64,
    pub h: f64,
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum HClassification {
    Propagation { h: f64 },
    InteriorSingle { well: Well },
    InteriorMulti { wells: Vec<Well> },
    /// One endpoint, or both when the minimum is attained at both ends.
    Endpoint { ends: Vec<EndWell> },
}

impl HClassification {
    pub fn name(&self) -> &'static str {
        match self {
            HClassification::Propagation { .. } => "propagation",
            HClassification::InteriorSingle { .. } => "interior_single",
            HClassification::InteriorMulti { .. } => "interior_multi",
            HClassification::Endpoint { .. } => "endpoint",
        }
    }
}

/// Locates a critical point of `h` in `[lo, hi]` by safeguarded Newton on `h'`.
fn refine_minimum(geom: &WaveguideGeometry, b: [f64; 2], mut lo: f64, mut hi: f64, start: f64) -> Result<f64> {
    let d = |s: f64| geom.h_jet(b, s).map(|j| j.d1);
    let (dlo, dhi) = (d(lo)?, d(hi)?);
    if !(dlo <= 0.0 && dhi >= 0.0) {
        return Ok(start);
    }
    let mut s = start;
    for _ in 0..200 {
        let j = geom.h_jet(b, s)?;
        if j.d1 == 0.0 {
            return Ok(s);
        }
        if j.d1 < 0.0 {
            lo = s;
        } else {
            hi = s;
        }
        let newton = if j.d2 > 0.0 { s - j.d1 / j.d2 } else { f64::NAN };
        let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - s).abs() <= 1e-15 * (1.0 + s.abs()) || hi - lo <= 1e-15 * geom.l {
            return Ok(next);
        }
        s = next;
    }
    Ok(s)
}

/// Classifies the global minimizers of `h(s) = b . xi(s)` on the sample grid.
/// `tol` is relative to `1 + max |h|`.
pub fn classify_h(geom: &WaveguideGeometry, b: [f64; 2], tol: f64) -> Result<HClassification> {
    let hs: Vec<f64> = geom.samples.iter().map(|&s| geom.h(b, s)).collect::<Result<_>>()?;
    let n = hs.len();
    let amax = hs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let abs_tol = tol * (1.0 + amax);
    let max = hs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = hs.iter().cloned().fold(f64::INFINITY, f64::min);
    if max - min <= abs_tol {
        return Ok(HClassification::Propagation { h: hs.iter().sum::<f64>() / n as f64 });
    }
    let group_tol = abs_tol.max(1e-9 * (max - min));
    let mut interior = Vec::new();
    let mut ends = Vec::new();
    for i in 0..n {
        let left_ok = i == 0 || hs[i] <= hs[i - 1];
        let right_ok = i == n - 1 || hs[i] <= hs[i + 1];
        if !(left_ok && right_ok) || hs[i] > min + (max - min) * 0.5 {
            continue;
        }
        let s = geom.samples[i];
        if i == 0 || i == n - 1 {
            let j = geom.h_jet(b, s)?;
            let slope = if i == 0 { j.d1 } else { -j.d1 };
            if slope > abs_tol {
                let end = if i == 0 { End::Left } else { End::Right };
                ends.push(EndWell { end, s, h: j.v, slope });
                continue;
            }
            if slope < -abs_tol {
                continue;
            }
            // a critical point at the end: treat as an interior candidate
            // on the one-sided bracket
        }
        let lo = geom.samples[i.saturating_sub(1)];
        let hi = geom.samples[(i + 1).min(n - 1)];
        let s0 = refine_minimum(geom, b, lo, hi, s)?;
        let j = geom.h_jet(b, s0)?;
        interior.push((s0, j, i == 0 || i == n - 1));
    }
    let gmin = interior.iter().map(|w| w.1.v).chain(ends.iter().map(|e| e.h)).fold(f64::INFINITY, f64::min);
    interior.retain(|w| w.1.v <= gmin + group_tol);
    ends.retain(|e| e.h <= gmin + group_tol);
    interior.dedup_by(|a, b| (a.0 - b.0).abs() <= 1e-9 * geom.l);
    for (s, j, at_end) in &interior {
        if *at_end {
            return Err(LocalizationError::Unsupported(format!("minimum at s = {s} with vanishing one-sided slope")).into());
        }
        if !(j.d2 > abs_tol) || j.d1.abs() > 1e-6 * (1.0 + j.d2.abs()) * geom.l {
            return Err(LocalizationError::DegenerateMinimum { s: *s, value: j.d2 }.into());
        }
    }
    match (interior.len(), ends.len()) {
        (0, 0) => Err(LocalizationError::Unsupported("no minimizer found on the sample grid".into()).into()),
        (0, _) => Ok(HClassification::Endpoint { ends }),
        (1, 0) => {
            let (s, j, _) = interior[0];
            Ok(HClassification::InteriorSingle { well: Well { s, h: j.v, hpp: j.d2 } })
        }
        (_, 0) => Ok(HClassification::InteriorMulti {
            wells: interior.iter().map(|(s, j, _)| Well { s: *s, h: j.v, hpp: j.d2 }).collect(),
        }),
        _ => Err(LocalizationError::Unsupported("global minimum attained both inside and at an end".into()).into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xi_for_planar_curve() {
        let g = build_geometry(1.0, Profile::Constant(2.0), Profile::Constant(0.0), Profile::Constant(0.0), 33).unwrap();
        assert_eq!(g.xi(0.3).unwrap(), [2.0, 0.0]);
        assert_eq!(g.tau(0.3).unwrap(), 0.0);
        assert_eq!(g.xi_sup, 2.0);
        assert!(g.is_untwisted().unwrap());
    }

    #[test]
    fn tau_is_derivative_of_theta() {
        let g = build_geometry(2.0, Profile::Constant(1.0), Profile::Constant(0.0), Profile::expr("0.5*s^2").unwrap(), 33)
            .unwrap();
        assert!((g.tau(1.2).unwrap() - 1.2).abs() < 1e-15);
        let xi = g.xi(1.2).unwrap();
        assert!((xi[0] - (0.72f64).cos()).abs() < 1e-15);
        assert!((xi[1] + (0.72f64).sin()).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_inputs() {
        let z = || Profile::Constant(0.0);
        assert!(build_geometry(0.0, z(), z(), z(), 9).is_err());
        assert!(build_geometry(-1.0, z(), z(), z(), 9).is_err());
        assert!(build_geometry(f64::NAN, z(), z(), z(), 9).is_err());
        assert!(build_geometry(1.0, Profile::Constant(f64::INFINITY), z(), z(), 9).is_err());
        assert!(Profile::expr("s + x1").is_err());
        let g = build_geometry(1.0, z(), z(), z(), 9).unwrap();
        assert!(matches!(g.xi(1.5), Err(crate::Error::Geometry(GeometryError::OutOfDomain { .. }))));
    }

    #[test]
    fn beta_positivity_guard() {
        let g = build_geometry(1.0, Profile::Constant(3.0), Profile::Constant(0.0), Profile::Constant(0.0), 9).unwrap();
        assert!(g.check_beta(0.1, 1.0).is_ok());
        assert!(g.check_beta(0.5, 1.0).is_err());
        assert!((g.eval_beta(0.0, [1.0, 5.0], 0.1).unwrap() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn sampled_and_function_derivatives() {
        let s: Vec<f64> = (0..=400).map(|i| i as f64 / 400.0).collect();
        let v: Vec<f64> = s.iter().map(|x| x * x * x).collect();
        let p = Profile::sampled(s, v).unwrap();
        let j = p.jet(0.5).unwrap();
        assert!((j.d1 - 0.75).abs() < 1e-4);
        assert!((j.d2 - 3.0).abs() < 1e-6);
        let f = Profile::function(|s| (2.0 * s).sin());
        let j = f.jet(0.3).unwrap();
        assert!((j.d1 - 2.0 * (0.6f64).cos()).abs() < 1e-9);
        assert!((j.d2 + 4.0 * (0.6f64).sin()).abs() < 1e-6);
    }

    #[test]
    fn classification_examples() {
        let line = |k: Profile| build_geometry(1.0, k, Profile::Constant(0.0), Profile::Constant(0.0), 257).unwrap();
        let g = line(Profile::expr("cos(2*pi*s)").unwrap());
        assert_eq!(classify_h(&g, [0.0, 0.0], 1e-10).unwrap(), HClassification::Propagation { h: 0.0 });
        match classify_h(&g, [1.0, 0.0], 1e-10).unwrap() {
            HClassification::InteriorSingle { well } => {
                assert!((well.s - 0.5).abs() < 1e-12);
                assert!((well.hpp - 4.0 * std::f64::consts::PI.powi(2)).abs() < 1e-9);
            }
            c => panic!("{c:?}"),
        }
        let g = line(Profile::expr("s").unwrap());
        match classify_h(&g, [1.0, 0.0], 1e-10).unwrap() {
            HClassification::Endpoint { ends } => {
                assert_eq!(ends.len(), 1);
                assert_eq!(ends[0].end, End::Left);
                assert!((ends[0].slope - 1.0).abs() < 1e-12);
            }
            c => panic!("{c:?}"),
        }
        let g = line(Profile::expr("cos(4*pi*s)").unwrap());
        match classify_h(&g, [1.0, 0.0], 1e-10).unwrap() {
            HClassification::InteriorMulti { wells } => {
                assert_eq!(wells.len(), 2);
                assert!((wells[0].s - 0.25).abs() < 1e-12 && (wells[1].s - 0.75).abs() < 1e-12);
            }
            c => panic!("{c:?}"),
        }
        let g = line(Profile::expr("(s - 0.5)^4").unwrap());
        assert!(matches!(
            classify_h(&g, [1.0, 0.0], 1e-10),
            Err(crate::Error::Localization(LocalizationError::DegenerateMinimum { .. }))
        ));
    }

    #[test]
    fn classification_ignores_offsets() {
        let g = build_geometry(1.0, Profile::expr("(s - 0.3)^2").unwrap(), Profile::Constant(0.0), Profile::Constant(0.0), 129).unwrap();
        let h = build_geometry(1.0, Profile::expr("(s - 0.3)^2 + 5").unwrap(), Profile::Constant(0.0), Profile::Constant(0.0), 129).unwrap();
        let (a, b) = (classify_h(&g, [1.0, 0.0], 1e-10).unwrap(), classify_h(&h, [1.0, 0.0], 1e-10).unwrap());
        match (a, b) {
            (HClassification::InteriorSingle { well: x }, HClassification::InteriorSingle { well: y }) => {
                assert!((x.s - y.s).abs() < 1e-12 && (x.hpp - y.hpp).abs() < 1e-9);
            }
            c => panic!("{c:?}"),
        }
    }
}
