//! Dirichlet eigenproblems on the cross section and the auxiliary fields of
//! the second-order expansion.
//!
//! The auxiliary problems are singular at the ground eigenvalue. They are
//! solved on the orthogonal complement of the ground state: the load is made
//! compatible by removing its component along the kernel, one unknown where
//! the ground state is largest is pinned, and the result is projected back.
//! This reproduces the solution of the bordered system with a multiplier.

use crate::coefficient::Coefficient;
use crate::eigensolve::{smallest_eigenpairs, EigenOptions, Normalization};
use crate::error::{CrossSectionError, EigenError, FemError, Result};
use crate::exec::Execution;
use crate::fem::{assemble, assemble_load, boundary_integral, eval_at, integrate, recover_derivatives, DofMap, Domain, Mesh, Operator, Qp, Recovered, TriangleRule};
use crate::geometry::WaveguideGeometry;
use crate::homogenization::HomogenizedTensors;
use crate::sparse::{dot, CsrMatrix, PinnedFactor};

#[derive(Debug, Clone)]
pub struct CsOptions {
    pub quadrature_degree: usize,
    pub exec: Execution,
    pub eigen: EigenOptions,
    /// Relative Fredholm defect tolerated for loads that are compatible by
    /// construction.
    pub compat_tol: f64,
    /// Tolerance for loads built from recovered higher derivatives, whose
    /// compatibility only holds up to discretization error.
    pub recovered_compat_tol: f64,
}

impl Default for CsOptions {
    fn default() -> Self {
        CsOptions {
            quadrature_degree: 4,
            exec: Execution::Parallel,
            eigen: EigenOptions::default(),
            compat_tol: 1e-8,
            recovered_compat_tol: 1e-3,
        }
    }
}

/// Ground pair and optional further pairs; fields are nodal values on the mesh.
#[derive(Debug, Clone)]
pub struct CrossSectionSolution {
    pub mu: f64,
    pub w: Vec<f64>,
    pub higher: Vec<(f64, Vec<f64>)>,
    pub residual: f64,
    pub normalization: Normalization,
}

impl CrossSectionSolution {
    pub fn values(&self) -> Vec<f64> {
        std::iter::once(self.mu).chain(self.higher.iter().map(|h| h.0)).collect()
    }

    pub fn gap(&self) -> Option<f64> {
        self.higher.first().map(|h| h.0 - self.mu)
    }
}

#[derive(Debug, Clone, Default)]
pub struct AuxiliaryFields {
    pub wbar: Option<Vec<f64>>,
    pub what: Option<[Vec<f64>; 2]>,
    pub b: Option<[f64; 2]>,
    pub bmat: Option<[[f64; 2]; 2]>,
    /// Matrix field `wbar_ij` stored as `[w11, w12, w21, w22]`.
    pub wbar_mat: Option<Vec<Vec<f64>>>,
    /// Recovered derivatives of the ground state.
    pub derivatives: Option<Recovered>,
    /// `(stage, relative Fredholm defect)` per solve.
    pub defects: Vec<(String, f64)>,
}

/// Coefficient of a perturbed problem: fixed `a(x)` or oscillating `a(x / eps)`.
#[derive(Debug, Clone, Copy)]
pub enum CsCoefficient<'a> {
    Plain(&'a Coefficient),
    Oscillating { cell: &'a Coefficient, eps: f64 },
}

impl CsCoefficient<'_> {
    pub fn eval(&self, x: [f64; 2]) -> Result<f64> {
        match self {
            CsCoefficient::Plain(a) => a.eval(x),
            CsCoefficient::Oscillating { cell, eps } => cell.eval_scaled(x, *eps),
        }
    }
}

fn check_spd(q: [[f64; 2]; 2]) -> Result<()> {
    let det = q[0][0] * q[1][1] - q[0][1] * q[1][0];
    if !(q[0][0] > 0.0 && det > 0.0) || (q[0][1] - q[1][0]).abs() > 1e-12 * q[0][0].abs().max(q[1][1].abs()) {
        return Err(CrossSectionError::Consistency(format!("matrix {q:?} is not symmetric positive definite")).into());
    }
    Ok(())
}

fn eigen_solve(
    mesh: &Mesh,
    tensor: impl Fn([f64; 2]) -> Result<[[f64; 2]; 2]> + Sync + Send,
    weight: impl Fn([f64; 2]) -> Result<f64> + Sync + Send,
    count: usize,
    normalization: Normalization,
    opts: &CsOptions,
) -> Result<(CrossSectionSolution, Operator)> {
    let rule = TriangleRule::of_degree(opts.quadrature_degree)?;
    let dofs = DofMap::dirichlet(mesh);
    let op = assemble(mesh, &dofs, &rule, opts.exec, tensor, weight)?;
    let want = count.max(2).min(dofs.n_dofs);
    let mut eo = opts.eigen.clone();
    eo.count = want;
    let spec = smallest_eigenpairs(&op.stiffness, &op.mass, &eo)?;
    let mut pairs = spec.values.iter().zip(&spec.vectors).map(|(v, x)| (*v, dofs.expand(x)));
    let (mu, w) = pairs.next().expect("at least one pair");
    let higher: Vec<(f64, Vec<f64>)> = pairs.take(count.saturating_sub(1).max(1)).collect();
    let wmax = w.iter().fold(0.0f64, |m, v| m.max(*v));
    let wmin = w.iter().fold(0.0f64, |m, v| m.min(*v));
    if wmin < -1e-3 * wmax {
        return Err(EigenError::NotConverged(format!("ground state changes sign (min {wmin:e}, max {wmax:e})")).into());
    }
    if let Some((mu1, _)) = higher.first() {
        if !(mu1 - mu > 1e-10 * mu.abs()) {
            return Err(EigenError::NotConverged(format!("ground eigenvalue {mu} is not simple (next {mu1})")).into());
        }
    }
    let sol = CrossSectionSolution { mu, w, higher, residual: spec.residuals[0], normalization };
    Ok((sol, op))
}

/// Eigenpairs of `-div(Q grad w) = mu w` with Dirichlet conditions.
pub fn solve_homogenized_cs(mesh: &Mesh, q: [[f64; 2]; 2], count: usize, opts: &CsOptions) -> Result<CrossSectionSolution> {
    check_spd(q)?;
    Ok(eigen_solve(mesh, |_| Ok(q), |_| Ok(1.0), count, Normalization::L2, opts)?.0)
}

/// Eigenpairs of `-div(a grad w) = mu w` with Dirichlet conditions.
pub fn solve_inhomogeneous_cs(mesh: &Mesh, a: &Coefficient, count: usize, opts: &CsOptions) -> Result<CrossSectionSolution> {
    let tensor = |x: [f64; 2]| {
        let v = a.eval(x)?;
        Ok([[v, 0.0], [0.0, v]])
    };
    Ok(eigen_solve(mesh, tensor, |_| Ok(1.0), count, Normalization::L2, opts)?.0)
}

/// Elements per period of `a(x / eps)` on a mesh, measured along the axes.
pub fn elements_per_period(mesh: &Mesh, eps: f64) -> f64 {
    eps * std::f64::consts::SQRT_2 / mesh.h
}

/// Eigenpairs of `-div(a beta grad w) = mu beta w` with
/// `beta = 1 - delta xi(s).x`, normalized by `int beta w^2 = 1`.
pub fn solve_perturbed_cs(
    mesh: &Mesh,
    coef: CsCoefficient,
    geom: &WaveguideGeometry,
    delta: f64,
    s: f64,
    count: usize,
    opts: &CsOptions,
) -> Result<CrossSectionSolution> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(CrossSectionError::Scale(format!("scale must be non-negative, got {delta}")).into());
    }
    let xi = geom.xi(s)?;
    let bound = delta * xi[0].hypot(xi[1]) * mesh.x_sup();
    if bound >= 1.0 {
        return Err(CrossSectionError::Scale(format!("beta is not positive at s = {s}: delta |xi| sup|x| = {bound}")).into());
    }
    if let CsCoefficient::Oscillating { eps, .. } = coef {
        if !(eps > 0.0) {
            return Err(CrossSectionError::Scale(format!("period must be positive, got {eps}")).into());
        }
        let per = elements_per_period(mesh, eps);
        if per < 8.0 - 1e-9 {
            return Err(FemError::Resolution(format!("{per:.2} elements per period of length {eps}; at least 8 are needed")).into());
        }
        if matches!(mesh.domain, Domain::UnitSquare | Domain::CenteredSquare) && ((1.0 / eps) - (1.0 / eps).round()).abs() > 1e-9 {
            return Err(CrossSectionError::Scale(format!("period {eps} does not tile the unit square")).into());
        }
    }
    let beta = |x: [f64; 2]| 1.0 - delta * (xi[0] * x[0] + xi[1] * x[1]);
    let tensor = |x: [f64; 2]| {
        let v = coef.eval(x)? * beta(x);
        Ok([[v, 0.0], [0.0, v]])
    };
    let normalization = if delta == 0.0 || xi == [0.0, 0.0] { Normalization::L2 } else { Normalization::MassWeighted };
    Ok(eigen_solve(mesh, tensor, |x| Ok(beta(x)), count, normalization, opts)?.0)
}

/// Solver for `(K - mu M) u = f` restricted to fields orthogonal to `w`.
struct SingularSolver {
    dofs: DofMap,
    factor: PinnedFactor,
    mass: CsrMatrix,
    w: Vec<f64>,
    mw: Vec<f64>,
}

impl SingularSolver {
    fn new(mesh: &Mesh, op: &Operator, mu: f64, w_full: &[f64]) -> Result<SingularSolver> {
        let _ = mesh;
        let shifted = op.stiffness.combine(1.0, &op.mass, -mu);
        let w = op.dofs.restrict(w_full);
        let pin = w
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |(bi, bv), (i, v)| if v.abs() > bv { (i, v.abs()) } else { (bi, bv) })
            .0;
        let factor = PinnedFactor::new(&shifted, pin)?;
        let mw = op.mass.mul_vec(&w);
        Ok(SingularSolver { dofs: op.dofs.clone(), factor, mass: op.mass.clone(), w, mw })
    }

    /// Returns the full nodal solution and the Fredholm defect `|w.f|`
    /// divided by `scale`.
    fn solve(&self, stage: &str, load: &[f64], scale: f64, tol: f64) -> Result<(Vec<f64>, f64)> {
        let lam = dot(&self.w, load);
        let rel = if scale > 0.0 { lam.abs() / scale } else { lam.abs() };
        if rel > tol {
            return Err(CrossSectionError::Compatibility { stage: stage.to_string(), defect: rel, tol }.into());
        }
        let f: Vec<f64> = load.iter().zip(&self.mw).map(|(f, m)| f - lam * m).collect();
        let mut u = self.factor.solve(&f);
        let c = dot(&u, &self.mw);
        u.iter_mut().zip(&self.w).for_each(|(x, w)| *x -= c * w);
        let _ = &self.mass;
        Ok((self.dofs.expand(&u), rel))
    }
}

/// Natural scale of a load for relative defects: `sum |f_i| * max |w_i|`.
fn load_scale(load: &[f64], w: &[f64]) -> f64 {
    load.iter().map(|v| v.abs()).sum::<f64>() * w.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Hessian of a field from recovered nodal second derivatives.
pub fn hessian_at(q: &Qp, r: &Recovered) -> [[f64; 2]; 2] {
    let d11 = q.value(&r.second[0]);
    let d12 = q.value(&r.second[1]);
    let d22 = q.value(&r.second[2]);
    [[d11, d12], [d12, d22]]
}

/// Third derivatives from recovered nodal values, `d[i][j][k]`.
pub fn third_at(q: &Qp, r: &Recovered) -> [[[f64; 2]; 2]; 2] {
    let t = r.third.as_ref().expect("third derivatives recovered");
    let v: Vec<f64> = t.iter().map(|f| q.value(f)).collect();
    let mut out = [[[0.0; 2]; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                out[i][j][k] = v[i + j + k];
            }
        }
    }
    out
}

fn dirichlet_op(mesh: &Mesh, tensor: impl Fn([f64; 2]) -> Result<[[f64; 2]; 2]> + Sync + Send, opts: &CsOptions) -> Result<Operator> {
    let rule = TriangleRule::of_degree(opts.quadrature_degree)?;
    assemble(mesh, &DofMap::dirichlet(mesh), &rule, opts.exec, tensor, |_| Ok(1.0))
}

/// `w_bar` and (when `xi_needed`) `w_hat` of the homogenized expansion.
pub fn solve_auxiliaries(
    mesh: &Mesh,
    tensors: &HomogenizedTensors,
    sol: &CrossSectionSolution,
    xi_needed: bool,
    opts: &CsOptions,
) -> Result<AuxiliaryFields> {
    let q = tensors.q;
    check_spd(q)?;
    let rule = TriangleRule::of_degree(opts.quadrature_degree)?;
    let op = dirichlet_op(mesh, |_| Ok(q), opts)?;
    let solver = SingularSolver::new(mesh, &op, sol.mu, &sol.w)?;
    let rec = recover_derivatives(mesh, &sol.w, 3, opts.exec)?;
    let w = &sol.w;
    let mut aux = AuxiliaryFields::default();

    // P d3 w against v, integrated by parts once: -P_ijk d2_ij w d_k v.
    let ps = tensors.p_sym();
    let load = assemble_load(mesh, &op.dofs, &rule, opts.exec, |qp| {
        let hs = hessian_at(qp, &rec);
        let mut g = [0.0; 2];
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    g[k] -= ps[i][j][k] * hs[i][j];
                }
            }
        }
        (0.0, g)
    });
    let pmax = tensors.p.iter().flatten().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let hess_grad = integrate(mesh, &rule, opts.exec, |qp| {
        let hs = hessian_at(qp, &rec);
        let g = qp.gradient(w);
        hs.iter().flatten().map(|v| v.abs()).sum::<f64>() * (g[0].abs() + g[1].abs())
    });
    let (wbar, d) = solver.solve("wbar", &load, 8.0 * pmax * hess_grad, opts.recovered_compat_tol)?;
    aux.defects.push(("wbar".into(), d));
    aux.wbar = Some(wbar);

    if xi_needed {
        let mut fields = Vec::new();
        for k in 0..2 {
            let load = assemble_load(mesh, &op.dofs, &rule, opts.exec, |qp| {
                let g = qp.gradient(w);
                (-(q[0][k] * g[0] + q[1][k] * g[1]), [0.0; 2])
            });
            let wd = op.dofs.restrict(w);
            let stage = format!("what{}", k + 1);
            let (u, d) = solver.solve(&stage, &load, load_scale(&load, &wd), opts.compat_tol)?;
            aux.defects.push((stage, d));
            fields.push(u);
        }
        let f1 = fields.pop().expect("two components");
        let f0 = fields.pop().expect("two components");
        aux.what = Some([f0, f1]);
    }
    aux.derivatives = Some(rec);
    Ok(aux)
}

/// `w_bar_2(s)` for a given curvature vector and second-order eigenvalue
/// `mu2 = q_H + q_xi(s)`.
pub fn solve_wbar2(
    mesh: &Mesh,
    tensors: &HomogenizedTensors,
    sol: &CrossSectionSolution,
    aux: &AuxiliaryFields,
    xi: [f64; 2],
    mu2: f64,
    opts: &CsOptions,
) -> Result<(Vec<f64>, f64)> {
    let (Some(wbar), Some(what), Some(rec)) = (&aux.wbar, &aux.what, &aux.derivatives) else {
        return Err(CrossSectionError::Consistency("w_bar_2 needs w_bar, w_hat and recovered derivatives".into()).into());
    };
    let q = tensors.q;
    let rule = TriangleRule::of_degree(opts.quadrature_degree)?;
    let op = dirichlet_op(mesh, |_| Ok(q), opts)?;
    let solver = SingularSolver::new(mesh, &op, sol.mu, &sol.w)?;
    let w1: Vec<f64> = (0..wbar.len()).map(|n| wbar[n] + xi[0] * what[0][n] + xi[1] * what[1][n]).collect();
    let rec1 = recover_derivatives(mesh, &w1, 2, opts.exec)?;
    let (ps, rs, s) = (tensors.p_sym(), tensors.r_sym(), tensors.s);
    let w = &sol.w;
    let mut scale_terms = 0.0;
    let load = assemble_load(mesh, &op.dofs, &rule, opts.exec, |qp| {
        let t3 = third_at(qp, rec);
        let h0 = hessian_at(qp, rec);
        let h1 = hessian_at(qp, &rec1);
        let g0 = qp.gradient(w);
        let g1 = qp.gradient(&w1);
        let xdot = xi[0] * qp.x[0] + xi[1] * qp.x[1];
        let mut f0 = mu2 * qp.value(w);
        let mut f1 = [0.0; 2];
        for i in 0..2 {
            for j in 0..2 {
                let qxi = q[i][j] * xi[j];
                f0 -= qxi * g1[i] + qxi * xdot * g0[i];
                for k in 0..2 {
                    f0 += s[i][j][k] * xi[k] * h0[i][j];
                    f1[k] -= ps[i][j][k] * h1[i][j];
                    for l in 0..2 {
                        f1[l] -= rs[i][j][k][l] * t3[i][j][k];
                    }
                }
            }
        }
        (f0, f1)
    });
    let wd = op.dofs.restrict(w);
    scale_terms += load_scale(&load, &wd);
    let (u, d) = solver.solve("wbar2", &load, scale_terms, opts.recovered_compat_tol)?;
    Ok((u, d))
}

/// `b = int a grad(w) w`.
pub fn compute_b(mesh: &Mesh, a: &Coefficient, w: &[f64], opts: &CsOptions) -> Result<[f64; 2]> {
    let rule = TriangleRule::of_degree(opts.quadrature_degree)?;
    let mut b = [0.0; 2];
    for (k, bk) in b.iter_mut().enumerate() {
        *bk = crate::fem::try_integrate(mesh, &rule, opts.exec, |qp| Ok(a.eval(qp.x)? * qp.gradient(w)[k] * qp.value(w)))?;
    }
    Ok(b)
}

/// `w_hat`, `B` and optionally the matrix field `w_bar` of the inhomogeneous
/// expansion.
pub fn solve_auxiliaries_inhomogeneous(
    mesh: &Mesh,
    a: &Coefficient,
    sol: &CrossSectionSolution,
    b: [f64; 2],
    with_wbar: bool,
    opts: &CsOptions,
) -> Result<AuxiliaryFields> {
    let rule = TriangleRule::of_degree(opts.quadrature_degree)?;
    let op = dirichlet_op(
        mesh,
        |x| {
            let v = a.eval(x)?;
            Ok([[v, 0.0], [0.0, v]])
        },
        opts,
    )?;
    let solver = SingularSolver::new(mesh, &op, sol.mu, &sol.w)?;
    let w = &sol.w;
    let wd = op.dofs.restrict(w);
    let av = |qp: &Qp| a.eval(qp.x).expect("coefficient validated during assembly");
    let mut aux = AuxiliaryFields { b: Some(b), ..Default::default() };

    let mut what = Vec::new();
    for k in 0..2 {
        let load = assemble_load(mesh, &op.dofs, &rule, opts.exec, |qp| {
            (-av(qp) * qp.gradient(w)[k] + b[k] * qp.value(w), [0.0; 2])
        });
        let stage = format!("what{}", k + 1);
        let (u, d) = solver.solve(&stage, &load, load_scale(&load, &wd), opts.compat_tol)?;
        aux.defects.push((stage, d));
        what.push(u);
    }

    let mut bm = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            bm[i][j] = integrate(mesh, &rule, opts.exec, |qp| {
                av(qp) * (qp.gradient(&what[j])[i] + qp.gradient(w)[i] * qp.x[j]) * qp.value(w)
            });
        }
    }
    aux.bmat = Some(bm);

    if with_wbar {
        let mut fields = Vec::new();
        for i in 0..2 {
            for j in 0..2 {
                let load = assemble_load(mesh, &op.dofs, &rule, opts.exec, |qp| {
                    let a = av(qp);
                    let f = -a * (qp.gradient(&what[j])[i] + qp.gradient(w)[i] * qp.x[j]) + b[i] * qp.value(&what[j]) + bm[i][j] * qp.value(w);
                    (f, [0.0; 2])
                });
                let stage = format!("wbar{}{}", i + 1, j + 1);
                let (u, d) = solver.solve(&stage, &load, load_scale(&load, &wd), opts.compat_tol)?;
                aux.defects.push((stage, d));
                fields.push(u);
            }
        }
        aux.wbar_mat = Some(fields);
    }
    let f1 = what.pop().expect("two components");
    let f0 = what.pop().expect("two components");
    aux.what = Some([f0, f1]);
    Ok(aux)
}

/// `int (d4_ijkl w) w` for the fully symmetric contraction with `r`, by two
/// integrations by parts. Returns the volume part `int r d2_ij w d2_kl w`
/// and the boundary part `-oint r n_k d2_ij w d_l w` separately.
pub fn fourth_moment(mesh: &Mesh, w: &[f64], rec: &Recovered, r: &[[[[f64; 2]; 2]; 2]; 2], opts: &CsOptions) -> Result<(f64, f64)> {
    let rule = TriangleRule::of_degree(opts.quadrature_degree)?;
    let volume = integrate(mesh, &rule, opts.exec, |qp| {
        let h = hessian_at(qp, rec);
        let mut s = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        s += r[i][j][k][l] * h[i][j] * h[k][l];
                    }
                }
            }
        }
        s
    });
    let boundary = -boundary_integral(mesh, 4, |_, n, e, rp| {
        let h = [
            [eval_at(mesh, e, rp, &rec.second[0]).0, eval_at(mesh, e, rp, &rec.second[1]).0],
            [eval_at(mesh, e, rp, &rec.second[1]).0, eval_at(mesh, e, rp, &rec.second[2]).0],
        ];
        let g = eval_at(mesh, e, rp, w).1;
        let mut s = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        s += r[i][j][k][l] * n[k] * h[i][j] * g[l];
                    }
                }
            }
        }
        s
    });
    Ok((volume, boundary))
}

/// `int p_ijk (d3_ijk w) v` integrated by parts once: `-int p d2_ij w d_k v`.
pub fn third_moment(mesh: &Mesh, rec: &Recovered, v: &[f64], p: &[[[f64; 2]; 2]; 2], opts: &CsOptions) -> Result<f64> {
    let rule = TriangleRule::of_degree(opts.quadrature_degree)?;
    Ok(integrate(mesh, &rule, opts.exec, |qp| {
        let h = hessian_at(qp, rec);
        let g = qp.gradient(v);
        let mut s = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    s -= p[i][j][k] * h[i][j] * g[k];
                }
            }
        }
        s
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{disk_mesh, unit_square_mesh, Order};
    use std::f64::consts::PI;

    fn opts() -> CsOptions {
        CsOptions { exec: Execution::Sequential, ..Default::default() }
    }

    #[test]
    fn homogenized_unit_square() {
        let m = unit_square_mesh(16, Order::P2).unwrap();
        let s = solve_homogenized_cs(&m, [[1.0, 0.0], [0.0, 1.0]], 3, &opts()).unwrap();
        assert!((s.mu - 2.0 * PI * PI).abs() < 1e-4 * s.mu, "{}", s.mu);
        let err = m.nodes.iter().zip(&s.w).map(|(p, w)| (w - 2.0 * (PI * p[0]).sin() * (PI * p[1]).sin()).abs()).fold(0.0, f64::max);
        assert!(err < 1e-3, "{err}");
        let s = solve_homogenized_cs(&m, [[1.6, 0.0], [0.0, 2.5]], 1, &opts()).unwrap();
        assert!((s.mu - 4.1 * PI * PI).abs() < 1e-4 * s.mu);
        assert!(solve_homogenized_cs(&m, [[1.0, 2.0], [2.0, 1.0]], 1, &opts()).is_err());
    }

    #[test]
    fn disk_ground_state() {
        let m = disk_mesh(1.0, 12, Order::P2).unwrap();
        let s = solve_homogenized_cs(&m, [[1.0, 0.0], [0.0, 1.0]], 1, &opts()).unwrap();
        assert!((s.mu - 5.783185962946784).abs() < 2e-3 * s.mu, "{}", s.mu);
    }

    #[test]
    fn coefficient_scaling_is_linear() {
        let m = unit_square_mesh(8, Order::P2).unwrap();
        let s1 = solve_inhomogeneous_cs(&m, &Coefficient::Constant(1.0), 1, &opts()).unwrap();
        let s4 = solve_inhomogeneous_cs(&m, &Coefficient::Constant(4.0), 1, &opts()).unwrap();
        assert!((s4.mu - 4.0 * s1.mu).abs() < 1e-10 * s4.mu);
        let lin = solve_inhomogeneous_cs(&m, &Coefficient::expr_x("1 + x1").unwrap(), 1, &opts()).unwrap();
        assert!(lin.mu > s1.mu && lin.mu < 2.0 * s1.mu);
    }

    #[test]
    fn straight_perturbation_is_unperturbed() {
        let m = unit_square_mesh(8, Order::P2).unwrap();
        let g = WaveguideGeometry::straight(1.0).unwrap();
        let a = Coefficient::expr_x("1 + x1").unwrap();
        let p = solve_perturbed_cs(&m, CsCoefficient::Plain(&a), &g, 0.3, 0.5, 1, &opts()).unwrap();
        let u = solve_inhomogeneous_cs(&m, &a, 1, &opts()).unwrap();
        assert_eq!(p.mu, u.mu);
    }

    #[test]
    fn oscillating_resolution_is_enforced() {
        let m = unit_square_mesh(16, Order::P2).unwrap();
        let g = WaveguideGeometry::straight(1.0).unwrap();
        let a = Coefficient::expr_y("2 + cos(2*pi*y1)").unwrap();
        let c = CsCoefficient::Oscillating { cell: &a, eps: 0.25 };
        assert!(solve_perturbed_cs(&m, c, &g, 0.0, 0.0, 1, &opts()).is_err());
        let c = CsCoefficient::Oscillating { cell: &a, eps: 0.5 };
        assert!(solve_perturbed_cs(&m, c, &g, 0.0, 0.0, 1, &opts()).is_ok());
    }

    #[test]
    fn what_matches_closed_form() {
        // For constant Q the solution is w_hat_k = (x_k - c_k) w_H / 2 with
        // c the centre of mass of w_H^2.
        let m = unit_square_mesh(16, Order::P2).unwrap();
        let q = [[1.6, 0.3], [0.3, 2.5]];
        let t = HomogenizedTensors {
            abar: 1.0,
            q,
            p: [[[0.0; 2]; 2]; 2],
            s: [[[0.0; 2]; 2]; 2],
            r: [[[[0.0; 2]; 2]; 2]; 2],
            t: [[[[0.0; 2]; 2]; 2]; 2],
            q_asymmetry: 0.0,
            harmonic_mean: 1.0,
        };
        let s = solve_homogenized_cs(&m, q, 1, &opts()).unwrap();
        let aux = solve_auxiliaries(&m, &t, &s, true, &opts()).unwrap();
        assert!(aux.wbar.as_ref().unwrap().iter().all(|v| v.abs() < 1e-12));
        let what = aux.what.unwrap();
        for k in 0..2 {
            let err = m.nodes.iter().enumerate().map(|(n, p)| (what[k][n] - 0.5 * (p[k] - 0.5) * s.w[n]).abs()).fold(0.0, f64::max);
            assert!(err < 1e-3, "{err}");
        }
    }

    #[test]
    fn unit_coefficient_b_and_bmat() {
        let m = unit_square_mesh(16, Order::P2).unwrap();
        let a = Coefficient::Constant(1.0);
        let s = solve_inhomogeneous_cs(&m, &a, 1, &opts()).unwrap();
        let b = compute_b(&m, &a, &s.w, &opts()).unwrap();
        assert!(b[0].abs() < 1e-12 && b[1].abs() < 1e-12);
        let aux = solve_auxiliaries_inhomogeneous(&m, &a, &s, b, true, &opts()).unwrap();
        let bm = aux.bmat.unwrap();
        assert!((bm[0][0] + 0.25).abs() < 1e-4 && (bm[1][1] + 0.25).abs() < 1e-4, "{bm:?}");
        assert!(bm[0][1].abs() < 1e-6 && bm[1][0].abs() < 1e-6);
    }
}
