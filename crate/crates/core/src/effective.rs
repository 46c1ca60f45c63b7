//! Effective one-dimensional models along the guide: potentials for both
//! regimes, the propagation criterion and the assembled spectra.

use serde::{Deserialize, Serialize};

use crate::coefficient::Coefficient;
use crate::cross_section::{fourth_moment, third_moment, AuxiliaryFields, CrossSectionSolution, CsOptions};
use crate::eigensolve::{solve_line, LineProblem};
use crate::error::{EffectiveError, Result};
use crate::fem::{integrate, try_integrate, Mesh, TriangleRule};
use crate::geometry::WaveguideGeometry;
use crate::homogenization::HomogenizedTensors;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Oscillating coefficient with period equal to the thickness.
    Homogenized,
    /// Non-oscillating coefficient, thickness only.
    Inhomogeneous,
}

/// Cross-section integrals that enter the homogenized potentials. Indices
/// follow the formulas they serve; `None` marks integrals needing `w_hat`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomogenizedIntegrals {
    /// `int r_ijkl d2_ij w d2_kl w` with symmetrized `R`.
    pub fourth_volume: f64,
    /// Boundary flux left over from the two integrations by parts.
    pub fourth_boundary: f64,
    /// `int p_ijk (d3_ijk w) w_bar` with symmetrized `P`.
    pub p_wbar: f64,
    /// `int d_i w w_bar`.
    pub grad_wbar: [f64; 2],
    /// `int (d2_ij w) w = -int d_i w d_j w`.
    pub hess_w: [[f64; 2]; 2],
    /// `int x_m (d_i w) w`, indexed `[m][i]`.
    pub x_grad: [[f64; 2]; 2],
    /// `int (d_i w) w_hat_l`, indexed `[i][l]`.
    pub grad_what: Option<[[f64; 2]; 2]>,
    /// `int p_ijk (d3_ijk w) w_hat_l`.
    pub p_what: Option<[f64; 2]>,
    /// `int (Rx)_i (d_j w) (Rx)_k (d_l w)`.
    pub torsion: [[[[f64; 2]; 2]; 2]; 2],
}

/// Integrals of the inhomogeneous regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InhomogeneousIntegrals {
    pub b: [f64; 2],
    pub bmat: [[f64; 2]; 2],
    /// `int a |grad w . Rx|^2`.
    pub twist_energy: f64,
    /// `int a (grad w . Rx) w`.
    pub twist_drift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveModel {
    pub regime: Regime,
    pub l: f64,
    /// Ground eigenvalue of the limiting cross-section problem.
    pub mu0: f64,
    pub r: f64,
    pub s: Vec<f64>,
    pub q_h: f64,
    pub q_xi: Vec<f64>,
    pub q_tau: Vec<f64>,
    pub q_c: Vec<f64>,
    pub drift: Vec<f64>,
    pub conjectural: bool,
    pub homogenized: Option<HomogenizedIntegrals>,
    pub inhomogeneous: Option<InhomogeneousIntegrals>,
    pub tensors: Option<HomogenizedTensors>,
}

impl EffectiveModel {
    /// Total potential per sample.
    pub fn q(&self) -> Vec<f64> {
        (0..self.s.len())
            .map(|i| match self.regime {
                Regime::Homogenized => self.q_h + self.q_xi[i] + self.q_tau[i],
                Regime::Inhomogeneous => self.q_tau[i] + self.q_c[i],
            })
            .collect()
    }

    /// Piecewise linear interpolation of the total potential.
    pub fn potential(&self) -> impl Fn(f64) -> f64 + Sync + '_ {
        let q = self.q();
        move |t: f64| interp(&self.s, &q, t)
    }

    /// `q_xi` from the unsimplified formula, which uses `w_hat`.
    pub fn q_xi_unsimplified(&self, xi: [f64; 2]) -> Result<f64> {
        let (Some(ints), Some(t)) = (&self.homogenized, &self.tensors) else {
            return Err(EffectiveError::Dependency("homogenized integrals".into()).into());
        };
        q_xi_unsimplified(ints, t, xi)
    }

    /// Same as [`EffectiveModel::q_xi_unsimplified`] for the simplified formula.
    pub fn q_xi_simplified(&self, xi: [f64; 2]) -> Result<f64> {
        let (Some(ints), Some(t)) = (&self.homogenized, &self.tensors) else {
            return Err(EffectiveError::Dependency("homogenized integrals".into()).into());
        };
        Ok(q_xi_simplified(ints, t, xi))
    }
}

pub fn interp(x: &[f64], y: &[f64], t: f64) -> f64 {
    let n = x.len();
    if n == 1 || t <= x[0] {
        return y[0];
    }
    if t >= x[n - 1] {
        return y[n - 1];
    }
    let i = x.partition_point(|v| *v <= t).clamp(1, n - 1);
    let f = (t - x[i - 1]) / (x[i] - x[i - 1]);
    y[i - 1] + f * (y[i] - y[i - 1])
}

fn rot(x: [f64; 2]) -> [f64; 2] {
    [x[1], -x[0]]
}

/// Cross-section integrals of the homogenized regime.
pub fn homogenized_integrals(
    mesh: &Mesh,
    tensors: &HomogenizedTensors,
    cs: &CrossSectionSolution,
    aux: &AuxiliaryFields,
    opts: &CsOptions,
) -> Result<HomogenizedIntegrals> {
    let (Some(wbar), Some(rec)) = (&aux.wbar, &aux.derivatives) else {
        return Err(EffectiveError::Dependency("w_bar and recovered derivatives of w_H".into()).into());
    };
    let rule = TriangleRule::of_degree(opts.quadrature_degree)?;
    let exec = opts.exec;
    let w = &cs.w;
    let (fourth_volume, fourth_boundary) = fourth_moment(mesh, w, rec, &tensors.r_sym(), opts)?;
    let ps = tensors.p_sym();
    let p_wbar = third_moment(mesh, rec, wbar, &ps, opts)?;
    let mut grad_wbar = [0.0; 2];
    let mut hess_w = [[0.0; 2]; 2];
    let mut x_grad = [[0.0; 2]; 2];
    for i in 0..2 {
        grad_wbar[i] = integrate(mesh, &rule, exec, |q| q.gradient(w)[i] * q.value(wbar));
        for j in 0..2 {
            hess_w[i][j] = -integrate(mesh, &rule, exec, |q| {
                let g = q.gradient(w);
                g[i] * g[j]
            });
            x_grad[i][j] = integrate(mesh, &rule, exec, |q| q.x[i] * q.gradient(w)[j] * q.value(w));
        }
    }
    let (grad_what, p_what) = match &aux.what {
        Some(what) => {
            let mut g = [[0.0; 2]; 2];
            let mut p = [0.0; 2];
            for l in 0..2 {
                for i in 0..2 {
                    g[i][l] = integrate(mesh, &rule, exec, |q| q.gradient(w)[i] * q.value(&what[l]));
                }
                p[l] = third_moment(mesh, rec, &what[l], &ps, opts)?;
            }
            (Some(g), Some(p))
        }
        None => (None, None),
    };
    let mut torsion = [[[[0.0; 2]; 2]; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    torsion[i][j][k][l] = integrate(mesh, &rule, exec, |q| {
                        let rx = rot(q.x);
                        let g = q.gradient(w);
                        rx[i] * g[j] * rx[k] * g[l]
                    });
                }
            }
        }
    }
    Ok(HomogenizedIntegrals { fourth_volume, fourth_boundary, p_wbar, grad_wbar, hess_w, x_grad, grad_what, p_what, torsion })
}

/// `q_H = -R int (d4 w) w + P int (d3 w) w_bar`.
pub fn q_h(ints: &HomogenizedIntegrals) -> f64 {
    -(ints.fourth_volume + ints.fourth_boundary) + ints.p_wbar
}

/// Simplified curvature potential
/// `-Q xi.xi / 4 - 2 Q_ij xi_j int d_i w w_bar - S_ijk xi_k int (d2_ij w) w`.
pub fn q_xi_simplified(ints: &HomogenizedIntegrals, t: &HomogenizedTensors, xi: [f64; 2]) -> f64 {
    let q = t.q;
    let mut v = -0.25 * t.q_form(xi);
    for i in 0..2 {
        for j in 0..2 {
            v -= 2.0 * q[i][j] * xi[j] * ints.grad_wbar[i];
            for k in 0..2 {
                v -= t.s[i][j][k] * xi[k] * ints.hess_w[i][j];
            }
        }
    }
    v
}

/// Unsimplified curvature potential, term by term.
pub fn q_xi_unsimplified(ints: &HomogenizedIntegrals, t: &HomogenizedTensors, xi: [f64; 2]) -> Result<f64> {
    let (Some(gw), Some(pw)) = (ints.grad_what, ints.p_what) else {
        return Err(EffectiveError::Dependency("w_hat integrals".into()).into());
    };
    let q = t.q;
    let mut v = xi[0] * pw[0] + xi[1] * pw[1];
    for i in 0..2 {
        for j in 0..2 {
            let qx = q[i][j] * xi[j];
            let xdot = xi[0] * ints.x_grad[0][i] + xi[1] * ints.x_grad[1][i];
            let what_xi = gw[i][0] * xi[0] + gw[i][1] * xi[1];
            v += qx * xdot - qx * ints.grad_wbar[i] - qx * what_xi;
            for k in 0..2 {
                v -= t.s[i][j][k] * xi[k] * ints.hess_w[i][j];
            }
        }
    }
    Ok(v)
}

/// Twist potential of the homogenized regime, `tau^2 T_ijkl int (Rx)_i d_j w (Rx)_k d_l w`.
pub fn q_tau_homogenized(ints: &HomogenizedIntegrals, t: &HomogenizedTensors, tau: f64) -> f64 {
    let mut v = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    v += t.t[i][j][k][l] * ints.torsion[i][j][k][l];
                }
            }
        }
    }
    tau * tau * v
}

fn sample<T: Send>(geom: &WaveguideGeometry, opts: &CsOptions, f: impl Fn(f64) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    opts.exec.try_map(&geom.samples, |&s| f(s))
}

/// Homogenized-regime model. `q_xi` uses the simplified formula.
pub fn compute_potential_homogenized(
    geom: &WaveguideGeometry,
    mesh: &Mesh,
    tensors: &HomogenizedTensors,
    cs: &CrossSectionSolution,
    aux: &AuxiliaryFields,
    opts: &CsOptions,
) -> Result<EffectiveModel> {
    let ints = homogenized_integrals(mesh, tensors, cs, aux, opts)?;
    let qh = q_h(&ints);
    let per: Vec<(f64, f64, f64)> = sample(geom, opts, |s| {
        let xi = geom.xi(s)?;
        let tau = geom.tau(s)?;
        let qx = if xi == [0.0, 0.0] { 0.0 } else { q_xi_simplified(&ints, tensors, xi) };
        let qt = if tau == 0.0 { 0.0 } else { q_tau_homogenized(&ints, tensors, tau) };
        Ok((qx, qt, tau))
    })?;
    let conjectural = per.iter().any(|p| p.2 != 0.0);
    Ok(EffectiveModel {
        regime: Regime::Homogenized,
        l: geom.l,
        mu0: cs.mu,
        r: tensors.abar,
        s: geom.samples.clone(),
        q_h: qh,
        q_xi: per.iter().map(|p| p.0).collect(),
        q_tau: per.iter().map(|p| p.1).collect(),
        q_c: vec![0.0; geom.samples.len()],
        drift: vec![0.0; geom.samples.len()],
        conjectural,
        homogenized: Some(ints),
        inhomogeneous: None,
        tensors: Some(tensors.clone()),
    })
}

/// Inhomogeneous-regime model.
pub fn compute_potential_inhomogeneous(
    geom: &WaveguideGeometry,
    mesh: &Mesh,
    a: &Coefficient,
    cs: &CrossSectionSolution,
    aux: &AuxiliaryFields,
    opts: &CsOptions,
) -> Result<EffectiveModel> {
    let (Some(b), Some(bmat)) = (aux.b, aux.bmat) else {
        return Err(EffectiveError::Dependency("b and B".into()).into());
    };
    let rule = TriangleRule::of_degree(opts.quadrature_degree)?;
    let w = &cs.w;
    let r = try_integrate(mesh, &rule, opts.exec, |q| Ok(a.eval(q.x)? * q.value(w).powi(2)))?;
    let twist_energy = try_integrate(mesh, &rule, opts.exec, |q| {
        let g = q.gradient(w);
        let rx = rot(q.x);
        Ok(a.eval(q.x)? * (g[0] * rx[0] + g[1] * rx[1]).powi(2))
    })?;
    let twist_drift = try_integrate(mesh, &rule, opts.exec, |q| {
        let g = q.gradient(w);
        let rx = rot(q.x);
        Ok(a.eval(q.x)? * (g[0] * rx[0] + g[1] * rx[1]) * q.value(w))
    })?;
    let per: Vec<(f64, f64, f64)> = sample(geom, opts, |s| {
        let xi = geom.xi(s)?;
        let (tau, dtau) = geom.tau_jet(s)?;
        let qc = (0..2).map(|i| (0..2).map(|j| bmat[i][j] * xi[i] * xi[j]).sum::<f64>()).sum::<f64>();
        let mut qt = 0.0;
        if tau != 0.0 {
            qt += tau * tau * twist_energy;
        }
        if dtau != 0.0 {
            qt -= dtau * twist_drift;
        }
        Ok((qc, qt, b[0] * xi[0] + b[1] * xi[1]))
    })?;
    Ok(EffectiveModel {
        regime: Regime::Inhomogeneous,
        l: geom.l,
        mu0: cs.mu,
        r,
        s: geom.samples.clone(),
        q_h: 0.0,
        q_xi: vec![0.0; geom.samples.len()],
        q_tau: per.iter().map(|p| p.1).collect(),
        q_c: per.iter().map(|p| p.0).collect(),
        drift: per.iter().map(|p| p.2).collect(),
        conjectural: false,
        homogenized: None,
        inhomogeneous: Some(InhomogeneousIntegrals { b, bmat, twist_energy, twist_drift }),
        tensors: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagationCheck {
    pub propagates: bool,
    pub spread: f64,
    pub h: Vec<f64>,
}

/// `h = b . xi` is constant along the guide up to `tol (1 + max |h|)`.
pub fn check_propagation(model: &EffectiveModel, tol: f64) -> PropagationCheck {
    let h = model.drift.clone();
    let max = h.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = h.iter().cloned().fold(f64::INFINITY, f64::min);
    let amax = h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let spread = max - min;
    PropagationCheck { propagates: spread <= tol * (1.0 + amax), spread, h }
}

#[derive(Debug, Clone)]
pub struct SpectrumOptions {
    pub cells: usize,
    /// Combine two line resolutions to cancel the leading discretization error.
    pub richardson: bool,
    pub propagation_tol: f64,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        SpectrumOptions { cells: 512, richardson: false, propagation_tol: 1e-10 }
    }
}

/// `lambda_j(scale) = leading + drift + eta_j` for each requested scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralDecomposition {
    pub regime: Regime,
    pub scales: Vec<f64>,
    pub leading: Vec<f64>,
    pub drift: Vec<f64>,
    pub eta: Vec<f64>,
    pub lambda: Vec<Vec<f64>>,
    pub mode_nodes: Vec<f64>,
    pub mode_profile: Vec<Vec<f64>>,
    pub conjectural: bool,
}

/// Solves `-r phi'' + q phi = eta phi` on `(0, l)` and assembles the spectra.
pub fn effective_spectrum(model: &EffectiveModel, count: usize, scales: &[f64], opts: &SpectrumOptions) -> Result<SpectralDecomposition> {
    if scales.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(EffectiveError::Scale(format!("scales must be positive, got {scales:?}")).into());
    }
    let mut drift0 = 0.0;
    if model.regime == Regime::Inhomogeneous {
        let p = check_propagation(model, opts.propagation_tol);
        if !p.propagates {
            return Err(EffectiveError::LocalizationRequired { spread: p.spread }.into());
        }
        drift0 = p.h.iter().sum::<f64>() / p.h.len() as f64;
    }
    if !(model.r > 0.0) {
        return Err(EffectiveError::Dependency(format!("kinetic coefficient must be positive, got {}", model.r)).into());
    }
    let pot = model.potential();
    let solve = |cells: usize| solve_line(&LineProblem { a: 0.0, b: model.l, r: model.r, potential: &pot, cells }, count);
    let fine = solve(opts.cells)?;
    let eta = if opts.richardson {
        let coarse = solve(opts.cells / 2)?;
        fine.values.iter().zip(&coarse.values).map(|(f, c)| f + (f - c) / 15.0).collect()
    } else {
        fine.values.clone()
    };
    let leading: Vec<f64> = scales.iter().map(|s| model.mu0 / (s * s)).collect();
    let drift: Vec<f64> = scales.iter().map(|s| if drift0 == 0.0 { 0.0 } else { drift0 / s }).collect();
    let lambda = leading.iter().zip(&drift).map(|(l, d)| eta.iter().map(|e| l + d + e).collect()).collect();
    Ok(SpectralDecomposition {
        regime: model.regime,
        scales: scales.to_vec(),
        leading,
        drift,
        eta,
        lambda,
        mode_nodes: fine.nodes,
        mode_profile: fine.vectors,
        conjectural: model.conjectural,
    })
}
