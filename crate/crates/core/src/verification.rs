//! Brute-force oracles and convergence studies: perturbed cross-section
//! sweeps against the asymptotic prediction, integration-by-parts identity
//! residuals and a direct eigensolver for the full tube.

use serde::{Deserialize, Serialize};

use crate::coefficient::Coefficient;
use crate::cross_section::{
    compute_b, solve_auxiliaries, solve_auxiliaries_inhomogeneous, solve_homogenized_cs, solve_inhomogeneous_cs,
    solve_perturbed_cs, AuxiliaryFields, CrossSectionSolution, CsCoefficient, CsOptions,
};
use crate::eigensolve::{smallest_eigenpairs, EigenOptions};
use crate::effective::{homogenized_integrals, q_h, q_xi_simplified};
use crate::error::{Result, VerificationError};
use crate::exec::Execution;
use crate::fem::{for_each_qp, gauss_legendre, integrate, DofMap, Mesh, TriangleRule};
use crate::geometry::WaveguideGeometry;
use crate::homogenization::{homogenize, CellOptions, HomogenizedTensors};
use crate::localization::SliceDensity;
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyCase {
    /// Non-oscillating `a(x)` on a curved guide, scale `delta`.
    BetaOnly,
    /// Oscillating `a(x / eps)` with `beta = 1`.
    HomogenizeOnly,
    /// Oscillating `a(x / eps)` on a curved guide with `delta = eps`.
    Combined,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FloorEstimate {
    /// Repeat the finest scale on a uniformly refined mesh.
    Refine,
    Skip,
}

#[derive(Debug, Clone)]
pub struct StudyOptions {
    pub cs: CsOptions,
    pub cell: CellOptions,
    pub floor: FloorEstimate,
}

impl Default for StudyOptions {
    fn default() -> Self {
        StudyOptions { cs: CsOptions::default(), cell: CellOptions::default(), floor: FloorEstimate::Refine }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub case: StudyCase,
    pub s: f64,
    pub scales: Vec<f64>,
    pub errors: Vec<f64>,
    pub predicted: Vec<f64>,
    /// Lowest two eigenvalues per scale.
    pub details: Vec<Vec<f64>>,
    /// Limit eigenvalue on the same mesh.
    pub reference: f64,
    /// First- and second-order coefficients of the prediction.
    pub first_order: f64,
    pub second_order: f64,
    /// Log-log least-squares slope; `None` when the errors are at the floor.
    pub slope: Option<f64>,
    pub exact: bool,
    pub machine_floor: f64,
    /// Change of the finest-scale error under one mesh refinement.
    pub mesh_floor: Option<f64>,
    /// Number of scales entering the slope fit.
    pub fitted: usize,
    pub slope_without_finest: Option<f64>,
    /// Intercept of `(mu - reference - first_order scale) / scale^2` fitted
    /// linearly in the scale; estimates `second_order`.
    pub intercept: Option<f64>,
    pub monotone: bool,
    pub warnings: Vec<String>,
}

impl ConvergenceReport {
    /// `scale,error` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scale,error,mu,predicted\n");
        for i in 0..self.scales.len() {
            out.push_str(&format!(
                "{:.17e},{:.17e},{:.17e},{:.17e}\n",
                self.scales[i], self.errors[i], self.details[i][0], self.predicted[i]
            ));
        }
        out
    }
}

/// Limit data of a study: reference eigenvalue and the two correction
/// coefficients at the chosen `s`.
struct Prediction {
    mu0: f64,
    c1: f64,
    c2: f64,
}

fn predict(
    case: StudyCase,
    mesh: &Mesh,
    geom: &WaveguideGeometry,
    a: &Coefficient,
    tensors: Option<&HomogenizedTensors>,
    s: f64,
    opts: &StudyOptions,
) -> Result<Prediction> {
    let xi = geom.xi(s)?;
    match case {
        StudyCase::BetaOnly => {
            let cs = solve_inhomogeneous_cs(mesh, a, 2, &opts.cs)?;
            let b = compute_b(mesh, a, &cs.w, &opts.cs)?;
            let aux = solve_auxiliaries_inhomogeneous(mesh, a, &cs, b, false, &opts.cs)?;
            let bm = aux.bmat.expect("B is computed with the inhomogeneous auxiliaries");
            let c2 = (0..2).map(|i| (0..2).map(|j| bm[i][j] * xi[i] * xi[j]).sum::<f64>()).sum();
            Ok(Prediction { mu0: cs.mu, c1: b[0] * xi[0] + b[1] * xi[1], c2 })
        }
        StudyCase::HomogenizeOnly | StudyCase::Combined => {
            let t = tensors.expect("tensors are computed before the prediction");
            let cs = solve_homogenized_cs(mesh, t.q, 2, &opts.cs)?;
            let aux = solve_auxiliaries(mesh, t, &cs, false, &opts.cs)?;
            let ints = homogenized_integrals(mesh, t, &cs, &aux, &opts.cs)?;
            let mut c2 = q_h(&ints);
            if case == StudyCase::Combined {
                c2 += q_xi_simplified(&ints, t, xi);
            }
            Ok(Prediction { mu0: cs.mu, c1: 0.0, c2 })
        }
    }
}

fn measure(
    case: StudyCase,
    mesh: &Mesh,
    geom: &WaveguideGeometry,
    a: &Coefficient,
    s: f64,
    scale: f64,
    opts: &StudyOptions,
) -> Result<Vec<f64>> {
    let sol = match case {
        StudyCase::BetaOnly => solve_perturbed_cs(mesh, CsCoefficient::Plain(a), geom, scale, s, 2, &opts.cs)?,
        StudyCase::HomogenizeOnly => {
            solve_perturbed_cs(mesh, CsCoefficient::Oscillating { cell: a, eps: scale }, geom, 0.0, s, 2, &opts.cs)?
        }
        StudyCase::Combined => {
            solve_perturbed_cs(mesh, CsCoefficient::Oscillating { cell: a, eps: scale }, geom, scale, s, 2, &opts.cs)?
        }
    };
    Ok(sol.values())
}

/// Least-squares line `y = c0 + c1 x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len() as f64;
    if x.len() < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let c1 = sxy / sxx;
    Some((my - c1 * mx, c1))
}

fn log_slope(scales: &[f64], errors: &[f64]) -> Option<f64> {
    let lx: Vec<f64> = scales.iter().map(|s| s.ln()).collect();
    let ly: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    linear_fit(&lx, &ly).map(|f| f.1)
}

/// Errors `|mu(scale) - mu0 - c1 scale - c2 scale^2|` over a decreasing list
/// of scales, with their log-log slope.
pub fn convergence_study(
    case: StudyCase,
    geom: &WaveguideGeometry,
    a: &Coefficient,
    mesh: &Mesh,
    s: f64,
    scales: &[f64],
    opts: &StudyOptions,
) -> Result<ConvergenceReport> {
    if scales.len() < 2 {
        return Err(VerificationError::Invalid("a study needs at least two scales".into()).into());
    }
    if scales.iter().any(|v| !(*v > 0.0 && v.is_finite())) || scales.windows(2).any(|w| w[1] >= w[0]) {
        return Err(VerificationError::Invalid(format!("scales must be positive and strictly decreasing, got {scales:?}")).into());
    }
    let tensors = match case {
        StudyCase::BetaOnly => None,
        _ => Some(homogenize(a, &opts.cell)?.1),
    };
    let pred = predict(case, mesh, geom, a, tensors.as_ref(), s, opts)?;
    let details = opts.cs.exec.try_map(scales, |&sc| measure(case, mesh, geom, a, s, sc, opts))?;
    let predicted: Vec<f64> = scales.iter().map(|&sc| pred.mu0 + pred.c1 * sc + pred.c2 * sc * sc).collect();
    let errors: Vec<f64> = details.iter().zip(&predicted).map(|(d, p)| (d[0] - p).abs()).collect();

    let mut warnings = Vec::new();
    let mesh_floor = match opts.floor {
        FloorEstimate::Skip => None,
        FloorEstimate::Refine => {
            let fine = mesh.refined()?;
            let pf = predict(case, &fine, geom, a, tensors.as_ref(), s, opts)?;
            let sc = *scales.last().expect("non-empty");
            let mf = measure(case, &fine, geom, a, s, sc, opts)?;
            let ef = (mf[0] - (pf.mu0 + pf.c1 * sc + pf.c2 * sc * sc)).abs();
            Some((ef - errors[errors.len() - 1]).abs())
        }
    };
    let scale_mu = details.iter().map(|d| d[0].abs()).fold(pred.mu0.abs(), f64::max);
    let machine_floor = 10.0 * f64::EPSILON * scale_mu;
    let exact = errors.iter().all(|e| *e <= machine_floor);
    let monotone = errors.windows(2).all(|w| w[1] < w[0]);
    if !monotone && !exact {
        warnings.push("error sequence is not monotone; the mesh error floor may be reached".into());
    }
    let (slope, fitted, slope_without_finest) = if errors.iter().any(|e| *e <= machine_floor) {
        if !exact {
            warnings.push("some errors are at machine precision; no slope is fitted".into());
        }
        (None, 0, None)
    } else {
        let floor = mesh_floor.unwrap_or(0.0);
        let keep: Vec<usize> = (0..scales.len()).filter(|&i| errors[i] > floor).collect();
        if keep.len() < scales.len() {
            warnings.push(format!("{} scale(s) below the mesh error floor {floor:.3e} left out of the fit", scales.len() - keep.len()));
        }
        let xs: Vec<f64> = keep.iter().map(|&i| scales[i]).collect();
        let es: Vec<f64> = keep.iter().map(|&i| errors[i]).collect();
        let slope = log_slope(&xs, &es);
        let without = if xs.len() >= 3 { log_slope(&xs[..xs.len() - 1], &es[..es.len() - 1]) } else { None };
        if let (Some(a), Some(b)) = (slope, without) {
            if (a - b).abs() >= 0.2 {
                warnings.push(format!("slope changes from {b:.3} to {a:.3} when the finest scale is added"));
            }
        }
        (slope, xs.len(), without)
    };
    let ys: Vec<f64> = details.iter().zip(scales).map(|(d, &sc)| (d[0] - pred.mu0 - pred.c1 * sc) / (sc * sc)).collect();
    let intercept = linear_fit(scales, &ys).map(|f| f.0);
    Ok(ConvergenceReport {
        case,
        s,
        scales: scales.to_vec(),
        errors,
        predicted,
        details,
        reference: pred.mu0,
        first_order: pred.c1,
        second_order: pred.c2,
        slope,
        exact,
        machine_floor,
        mesh_floor,
        fitted,
        slope_without_finest,
        intercept,
        monotone,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityResidual {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityTable {
    pub xi: [f64; 2],
    pub rows: Vec<IdentityResidual>,
}

impl IdentityTable {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.name == name).map(|r| r.value)
    }

    pub fn max_abs(&self) -> f64 {
        self.rows.iter().fold(0.0, |m, r| m.max(r.value.abs()))
    }
}

/// Residuals of the integration-by-parts identities behind the simplified
/// curvature potential, plus normalization and side conditions.
pub fn identity_checks(
    mesh: &Mesh,
    tensors: &HomogenizedTensors,
    cs: &CrossSectionSolution,
    aux: &AuxiliaryFields,
    xi: [f64; 2],
    opts: &CsOptions,
) -> Result<IdentityTable> {
    let ints = homogenized_integrals(mesh, tensors, cs, aux, opts)?;
    let (Some(gw), Some(pw), Some(what), Some(wbar)) = (ints.grad_what, ints.p_what, &aux.what, &aux.wbar) else {
        return Err(VerificationError::Invalid("identity checks need w_bar and w_hat".into()).into());
    };
    let q = tensors.q;
    let rule = TriangleRule::of_degree(opts.quadrature_degree)?;
    let w = &cs.w;
    let mut rows = Vec::new();
    let mut push = |name: &str, value: f64| rows.push(IdentityResidual { name: name.into(), value });
    for i in 0..2 {
        push(&format!("x_gradient_{}", i + 1), xi[0] * ints.x_grad[0][i] + xi[1] * ints.x_grad[1][i] + 0.5 * xi[i]);
    }
    let mut contraction = 0.25 * tensors.q_form(xi);
    let mut pq = xi[0] * pw[0] + xi[1] * pw[1];
    for i in 0..2 {
        for j in 0..2 {
            contraction += q[i][j] * xi[j] * (gw[i][0] * xi[0] + gw[i][1] * xi[1]);
            pq += q[i][j] * xi[j] * ints.grad_wbar[i];
        }
    }
    push("what_contraction", contraction);
    push("p_q_relation", pq);
    push("normalization", integrate(mesh, &rule, opts.exec, |p| p.value(w).powi(2)) - 1.0);
    push("wbar_orthogonality", integrate(mesh, &rule, opts.exec, |p| p.value(w) * p.value(wbar)));
    for (k, f) in what.iter().enumerate() {
        push(&format!("what{}_orthogonality", k + 1), integrate(mesh, &rule, opts.exec, |p| p.value(w) * p.value(f)));
    }
    Ok(IdentityTable { xi, rows })
}

#[derive(Debug, Clone)]
pub struct OracleOptions {
    pub quadrature_degree: usize,
    /// Gauss points per element along the guide.
    pub s_points: usize,
    pub max_unknowns: usize,
    pub max_nonzeros: usize,
    /// Shift for the eigensolver; `None` uses a fraction of `mu_C / delta^2`.
    pub shift: Option<f64>,
    pub eigen: EigenOptions,
    pub exec: Execution,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            quadrature_degree: 4,
            s_points: 4,
            max_unknowns: 400_000,
            max_nonzeros: 80_000_000,
            shift: None,
            eigen: EigenOptions { tol: 1e-10, ..Default::default() },
            exec: Execution::Parallel,
        }
    }
}

/// Eigenpairs of the full tube operator on a product mesh.
#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub delta: f64,
    pub values: Vec<f64>,
    pub residuals: Vec<f64>,
    pub n_s: usize,
    pub x_dofs: usize,
    pub unknowns: usize,
    pub nonzeros: usize,
    /// `int beta |v(s, x)|^2 dx` per pair, at the Gauss points in `s`.
    pub densities: Vec<SliceDensity>,
    /// Eigenvectors indexed `s_dof * x_dofs + x_dof`.
    pub vectors: Vec<Vec<f64>>,
}

/// Quadratic Lagrange shape functions on `[0, 1]` and their derivatives.
fn shape_1d(t: f64) -> ([f64; 3], [f64; 3]) {
    (
        [2.0 * (t - 0.5) * (t - 1.0), 4.0 * t * (1.0 - t), 2.0 * t * (t - 0.5)],
        [4.0 * t - 3.0, 4.0 - 8.0 * t, 4.0 * t - 1.0],
    )
}

struct XPoint {
    x: [f64; 2],
    w: f64,
    a: f64,
    phi: [f64; 6],
    grad: [[f64; 2]; 6],
    /// `grad phi . Rx` with `Rx = (x2, -x1)`.
    twist: [f64; 6],
}

struct SPoint {
    s: f64,
    w: f64,
    n: [f64; 3],
    dn: [f64; 3],
    xi: [f64; 2],
    tau: f64,
}

fn sorted_rows(n: usize, pairs: impl Iterator<Item = (usize, usize)>) -> Vec<Vec<usize>> {
    let mut rows = vec![Vec::new(); n];
    for (i, j) in pairs {
        rows[i].push(j);
    }
    for r in rows.iter_mut() {
        r.sort_unstable();
        r.dedup();
    }
    rows
}

/// Lowest `count` Dirichlet eigenpairs of
/// `-div((a / beta) d d^T grad u) - delta^-2 div_x(beta a grad_x u) = lambda beta u`
/// on `(0, l) x omega`, with `d = (1, tau Rx)` and `beta = 1 - delta xi(s).x`.
/// The basis is quadratic in `s` on `n_s` uniform elements times the finite
/// element space of `mesh` in the cross section.
pub fn direct_tube_oracle(
    geom: &WaveguideGeometry,
    a: &Coefficient,
    delta: f64,
    mesh: &Mesh,
    n_s: usize,
    count: usize,
    opts: &OracleOptions,
) -> Result<OracleSolution> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(VerificationError::Invalid(format!("scale must be positive, got {delta}")).into());
    }
    if n_s < 2 {
        return Err(VerificationError::Invalid("at least two elements along the guide are needed".into()).into());
    }
    geom.check_beta(delta, mesh.x_sup())?;
    let xd = DofMap::dirichlet(mesh);
    let nx = xd.n_dofs;
    let ns = 2 * n_s - 1;
    let unknowns = ns * nx;
    let npe = mesh.order.nodes_per_element();
    let x_rows = sorted_rows(
        nx,
        (0..mesh.n_elements()).flat_map(|e| {
            let d: Vec<usize> = mesh.element(e).iter().filter_map(|&n| xd.node_to_dof[n]).collect();
            d.iter().flat_map(|&i| d.iter().map(move |&j| (i, j))).collect::<Vec<_>>()
        }),
    );
    let s_dof = |g: usize| (g >= 1 && g <= ns).then(|| g - 1);
    let s_rows = sorted_rows(
        ns,
        (0..n_s).flat_map(|e| {
            let d: Vec<usize> = (2 * e..=2 * e + 2).filter_map(s_dof).collect();
            d.iter().flat_map(|&i| d.iter().map(move |&j| (i, j))).collect::<Vec<_>>()
        }),
    );
    let x_nnz: usize = x_rows.iter().map(|r| r.len()).sum();
    let s_nnz: usize = s_rows.iter().map(|r| r.len()).sum();
    let nonzeros = x_nnz * s_nnz;
    if unknowns > opts.max_unknowns || nonzeros > opts.max_nonzeros {
        return Err(VerificationError::Resource(format!(
            "{unknowns} unknowns and {nonzeros} nonzeros exceed the limits {} and {}",
            opts.max_unknowns, opts.max_nonzeros
        ))
        .into());
    }

    let rule = TriangleRule::of_degree(opts.quadrature_degree)?;
    let xpts: Vec<Result<Vec<XPoint>>> = opts.exec.map_range(mesh.n_elements(), |e| {
        let mut v = Vec::new();
        let mut err = None;
        for_each_qp(mesh, &rule, e, |q| {
            match a.eval(q.x) {
                Ok(av) => {
                    let mut twist = [0.0; 6];
                    for (t, g) in twist.iter_mut().zip(&q.grad) {
                        *t = g[0] * q.x[1] - g[1] * q.x[0];
                    }
                    v.push(XPoint { x: q.x, w: q.w, a: av, phi: q.phi, grad: q.grad, twist });
                }
                Err(x) => err = Some(x),
            }
        });
        match err {
            Some(x) => Err(x),
            None => Ok(v),
        }
    });
    let xpts: Vec<Vec<XPoint>> = xpts.into_iter().collect::<Result<_>>()?;
    for p in xpts.iter().flatten() {
        if !(p.a > 0.0) {
            return Err(crate::error::FemError::Coercivity { value: p.a, x: p.x[0], y: p.x[1] }.into());
        }
    }
    let (gx, gw) = gauss_legendre(opts.s_points);
    let hs = geom.l / n_s as f64;
    let spts: Vec<Vec<SPoint>> = (0..n_s)
        .map(|e| {
            gx.iter()
                .zip(&gw)
                .map(|(&r, &w)| {
                    let t = 0.5 * (r + 1.0);
                    let s = (e as f64 + t) * hs;
                    let (n, dn) = shape_1d(t);
                    Ok(SPoint { s, w: 0.5 * w * hs, n, dn: dn.map(|d| d / hs), xi: geom.xi(s)?, tau: geom.tau(s)? })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let rows: Vec<Vec<usize>> = (0..unknowns)
        .map(|r| {
            let (si, xi) = (r / nx, r % nx);
            s_rows[si].iter().flat_map(|&sj| x_rows[xi].iter().map(move |&xj| sj * nx + xj)).collect()
        })
        .collect();
    let mut k = CsrMatrix::with_pattern(rows.clone());
    let mut m = CsrMatrix::with_pattern(rows);
    let inv_d2 = 1.0 / (delta * delta);
    let nl = 3 * npe;
    let chunk = 4;
    for start in (0..n_s).step_by(chunk) {
        let end = (start + chunk).min(n_s);
        let pairs: Vec<(usize, usize)> = (start..end).flat_map(|es| (0..mesh.n_elements()).map(move |ex| (es, ex))).collect();
        let locals = opts.exec.map(&pairs, |&(es, ex)| {
            let mut kl = vec![0.0; nl * nl];
            let mut ml = vec![0.0; nl * nl];
            let mut dphi = vec![0.0; nl];
            let mut val = vec![0.0; nl];
            for sp in &spts[es] {
                for xp in &xpts[ex] {
                    let beta = 1.0 - delta * (sp.xi[0] * xp.x[0] + sp.xi[1] * xp.x[1]);
                    let w = sp.w * xp.w;
                    let c1 = w * xp.a / beta;
                    let c2 = w * beta * xp.a * inv_d2;
                    let cm = w * beta;
                    for al in 0..3 {
                        for i in 0..npe {
                            let p = al * npe + i;
                            dphi[p] = sp.dn[al] * xp.phi[i] + sp.tau * sp.n[al] * xp.twist[i];
                            val[p] = sp.n[al] * xp.phi[i];
                        }
                    }
                    for al in 0..3 {
                        for i in 0..npe {
                            let p = al * npe + i;
                            for be in 0..3 {
                                let nn = sp.n[al] * sp.n[be];
                                for j in 0..npe {
                                    let q = be * npe + j;
                                    let gg = xp.grad[i][0] * xp.grad[j][0] + xp.grad[i][1] * xp.grad[j][1];
                                    kl[p * nl + q] += c1 * dphi[p] * dphi[q] + c2 * nn * gg;
                                    ml[p * nl + q] += cm * val[p] * val[q];
                                }
                            }
                        }
                    }
                }
            }
            (kl, ml)
        });
        for (&(es, ex), (kl, ml)) in pairs.iter().zip(locals) {
            let nodes = mesh.element(ex);
            let n2d = &xd.node_to_dof;
            let dofs: Vec<Option<usize>> = (0..3)
                .flat_map(|al| {
                    let sd = s_dof(2 * es + al);
                    nodes.iter().map(move |&n| match (sd, n2d[n]) {
                        (Some(s), Some(x)) => Some(s * nx + x),
                        _ => None,
                    })
                })
                .collect();
            for (p, dp) in dofs.iter().enumerate() {
                let Some(r) = dp else { continue };
                for (q, dq) in dofs.iter().enumerate() {
                    let Some(c) = dq else { continue };
                    k.add(*r, *c, kl[p * nl + q]);
                    m.add(*r, *c, ml[p * nl + q]);
                }
            }
        }
    }

    let mut eo = opts.eigen.clone();
    eo.count = count;
    eo.shift = match opts.shift {
        Some(s) => Some(s),
        None => {
            let cs = solve_inhomogeneous_cs(mesh, a, 2, &CsOptions { exec: opts.exec, ..Default::default() })?;
            Some(0.98 * cs.mu * inv_d2)
        }
    };
    let spec = smallest_eigenpairs(&k, &m, &eo)?;

    let densities = spec
        .vectors
        .iter()
        .map(|v| {
            let mut rho = SliceDensity { points: Vec::new(), weights: Vec::new(), density: Vec::new() };
            for (es, sps) in spts.iter().enumerate() {
                for sp in sps {
                    let mut slice = vec![0.0; mesh.n_nodes()];
                    for al in 0..3 {
                        let Some(sd) = s_dof(2 * es + al) else { continue };
                        for (xdof, &node) in xd.dof_to_node.iter().enumerate() {
                            slice[node] += sp.n[al] * v[sd * nx + xdof];
                        }
                    }
                    let d: f64 = xpts
                        .iter()
                        .enumerate()
                        .map(|(e, pts)| {
                            let el = mesh.element(e);
                            pts.iter()
                                .map(|p| {
                                    let u: f64 = (0..npe).map(|i| p.phi[i] * slice[el[i]]).sum();
                                    let beta = 1.0 - delta * (sp.xi[0] * p.x[0] + sp.xi[1] * p.x[1]);
                                    p.w * beta * u * u
                                })
                                .sum::<f64>()
                        })
                        .sum();
                    rho.points.push(sp.s);
                    rho.weights.push(sp.w);
                    rho.density.push(d);
                }
            }
            rho
        })
        .collect();

    Ok(OracleSolution {
        delta,
        values: spec.values,
        residuals: spec.residuals,
        n_s,
        x_dofs: nx,
        unknowns,
        nonzeros: k.nnz(),
        densities,
        vectors: spec.vectors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{unit_square_mesh, Order};
    use std::f64::consts::PI;

    #[test]
    fn fits() {
        let (c0, c1) = linear_fit(&[1.0, 2.0, 3.0], &[3.0, 5.0, 7.0]).unwrap();
        assert!((c0 - 1.0).abs() < 1e-14 && (c1 - 2.0).abs() < 1e-14);
        let s = log_slope(&[0.1, 0.05, 0.025], &[1e-3, 1.25e-4, 1.5625e-5]).unwrap();
        assert!((s - 3.0).abs() < 1e-12);
    }

    #[test]
    fn straight_constant_study_is_exact() {
        let g = WaveguideGeometry::straight(1.0).unwrap();
        let mesh = unit_square_mesh(8, Order::P2).unwrap();
        let r = convergence_study(
            StudyCase::BetaOnly,
            &g,
            &Coefficient::Constant(1.0),
            &mesh,
            0.5,
            &[0.25, 0.125, 0.0625],
            &StudyOptions { floor: FloorEstimate::Skip, ..Default::default() },
        )
        .unwrap();
        assert!(r.exact);
        assert!(r.slope.is_none());
    }

    #[test]
    fn scales_must_decrease() {
        let g = WaveguideGeometry::straight(1.0).unwrap();
        let mesh = unit_square_mesh(4, Order::P2).unwrap();
        let e = convergence_study(StudyCase::BetaOnly, &g, &Coefficient::Constant(1.0), &mesh, 0.5, &[0.1, 0.2], &StudyOptions::default());
        assert!(e.is_err());
    }

    #[test]
    fn straight_tube_is_separable() {
        let g = WaveguideGeometry::straight(1.0).unwrap();
        let mesh = unit_square_mesh(6, Order::P2).unwrap();
        let delta = 0.1;
        let o = direct_tube_oracle(&g, &Coefficient::Constant(1.0), delta, &mesh, 8, 2, &OracleOptions::default()).unwrap();
        let cs = solve_inhomogeneous_cs(&mesh, &Coefficient::Constant(1.0), 2, &CsOptions::default()).unwrap();
        let line = |j: f64| {
            let m = crate::eigensolve::solve_line(
                &crate::eigensolve::LineProblem { a: 0.0, b: 1.0, r: 1.0, potential: &|_| 0.0, cells: 8 },
                2,
            )
            .unwrap();
            m.values[j as usize]
        };
        assert!((o.values[0] - (cs.mu / (delta * delta) + line(0.0))).abs() < 1e-8 * o.values[0]);
        assert!((o.values[1] - (cs.mu / (delta * delta) + line(1.0))).abs() < 1e-8 * o.values[1]);
        assert!((o.values[0] - (2.0 * PI * PI / (delta * delta) + PI * PI)).abs() < 1e-3 * o.values[0]);
        let total: f64 = o.densities[0].weights.iter().zip(&o.densities[0].density).map(|(w, d)| w * d).sum();
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn resource_guard() {
        let g = WaveguideGeometry::straight(1.0).unwrap();
        let mesh = unit_square_mesh(6, Order::P2).unwrap();
        let opts = OracleOptions { max_unknowns: 100, ..Default::default() };
        let e = direct_tube_oracle(&g, &Coefficient::Constant(1.0), 0.1, &mesh, 8, 2, &opts).unwrap_err();
        assert_eq!(e.exit_code(), 4);
    }
}
