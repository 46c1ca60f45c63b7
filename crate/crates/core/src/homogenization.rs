//! Periodic cell correctors and the homogenized tensors built from them.
//!
//! Every corrector solves `-div(a grad u) = f` on the unit cell with periodic
//! conditions and zero mean, with `f` given in weak form. The discrete
//! mean-value constraint is imposed exactly by pinning one unknown, removing
//! the discrete compatibility defect from the load and projecting the
//! solution onto mean-zero fields.

use serde::{Deserialize, Serialize};

use crate::coefficient::Coefficient;
use crate::error::{HomogenizationError, Result};
use crate::exec::Execution;
use crate::fem::{assemble, assemble_load, cell_mesh, integrate, CellMesh, DofMap, Order, Qp, TriangleRule};
use crate::sparse::{dot, PinnedFactor};

#[derive(Debug, Clone)]
pub struct CellOptions {
    pub resolution: usize,
    pub order: Order,
    pub quadrature_degree: usize,
    /// Relative size of the Fredholm defect that is treated as an error.
    pub compat_tol: f64,
    /// Relative asymmetry of `Q` that is treated as an error.
    pub symmetry_tol: f64,
    pub exec: Execution,
}

impl Default for CellOptions {
    fn default() -> Self {
        CellOptions {
            resolution: 64,
            order: Order::P2,
            quadrature_degree: 4,
            compat_tol: 1e-8,
            symmetry_tol: 1e-10,
            exec: Execution::Parallel,
        }
    }
}

/// Correctors as nodal fields on the cell mesh. Index conventions:
/// `zeta[2 i + j]`, `lambda[4 i + 2 j + k]`, and likewise for the others.
#[derive(Debug, Clone)]
pub struct CellCorrectors {
    pub cell: CellMesh,
    pub phi: Vec<Vec<f64>>,
    pub zeta: Vec<Vec<f64>>,
    pub kappa: Vec<Vec<f64>>,
    pub lambda: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
    /// `(stage, relative Fredholm defect)` for every solve.
    pub defects: Vec<(String, f64)>,
    /// Largest corrector gradient `max |grad phi_i|` over quadrature points.
    pub max_grad_phi: f64,
    /// Homogenized matrix computed on the way (before symmetrization).
    pub q_raw: [[f64; 2]; 2],
    pub p: [[[f64; 2]; 2]; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomogenizedTensors {
    pub abar: f64,
    pub q: [[f64; 2]; 2],
    pub p: [[[f64; 2]; 2]; 2],
    pub s: [[[f64; 2]; 2]; 2],
    pub r: [[[[f64; 2]; 2]; 2]; 2],
    pub t: [[[[f64; 2]; 2]; 2]; 2],
    /// `|Q12 - Q21| / max |Q_ij|` before symmetrization.
    pub q_asymmetry: f64,
    /// `(int 1/a)^-1`, the lower classical bound.
    pub harmonic_mean: f64,
}

impl HomogenizedTensors {
    /// Eigenvalues of `Q` in ascending order.
    pub fn q_eigenvalues(&self) -> [f64; 2] {
        sym_eigenvalues(self.q)
    }

    /// Part of `P` seen by a contraction with a symmetric third-derivative
    /// tensor: the average over all index permutations.
    pub fn p_sym(&self) -> [[[f64; 2]; 2]; 2] {
        let mut out = [[[0.0; 2]; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    let p = &self.p;
                    out[i][j][k] = (p[i][j][k] + p[i][k][j] + p[j][i][k] + p[j][k][i] + p[k][i][j] + p[k][j][i]) / 6.0;
                }
            }
        }
        out
    }

    /// Fully symmetrized `R`, the part seen by fourth derivatives.
    pub fn r_sym(&self) -> [[[[f64; 2]; 2]; 2]; 2] {
        let mut out = [[[[0.0; 2]; 2]; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        let idx = [i, j, k, l];
                        let mut sum = 0.0;
                        for perm in PERMUTATIONS4 {
                            let q = perm.map(|p| idx[p]);
                            sum += self.r[q[0]][q[1]][q[2]][q[3]];
                        }
                        out[i][j][k][l] = sum / 24.0;
                    }
                }
            }
        }
        out
    }

    /// `Q xi . xi`.
    pub fn q_form(&self, xi: [f64; 2]) -> f64 {
        (0..2).map(|i| (0..2).map(|j| self.q[i][j] * xi[i] * xi[j]).sum::<f64>()).sum()
    }
}

const PERMUTATIONS4: [[usize; 4]; 24] = [
    [0, 1, 2, 3], [0, 1, 3, 2], [0, 2, 1, 3], [0, 2, 3, 1], [0, 3, 1, 2], [0, 3, 2, 1],
    [1, 0, 2, 3], [1, 0, 3, 2], [1, 2, 0, 3], [1, 2, 3, 0], [1, 3, 0, 2], [1, 3, 2, 0],
    [2, 0, 1, 3], [2, 0, 3, 1], [2, 1, 0, 3], [2, 1, 3, 0], [2, 3, 0, 1], [2, 3, 1, 0],
    [3, 0, 1, 2], [3, 0, 2, 1], [3, 1, 0, 2], [3, 1, 2, 0], [3, 2, 0, 1], [3, 2, 1, 0],
];

pub fn sym_eigenvalues(q: [[f64; 2]; 2]) -> [f64; 2] {
    let m = 0.5 * (q[0][0] + q[1][1]);
    let d = (0.25 * (q[0][0] - q[1][1]).powi(2) + q[0][1] * q[1][0]).max(0.0).sqrt();
    [m - d, m + d]
}

struct CellSolver<'a> {
    cell: &'a CellMesh,
    dofs: DofMap,
    rule: TriangleRule,
    factor: PinnedFactor,
    /// `int psi_i` per unknown.
    mass_vec: Vec<f64>,
    /// Lower bound on the load scale, `int |a|`; loads that cancel
    /// pointwise would otherwise turn round-off into a large relative defect.
    scale_floor: f64,
    compat_tol: f64,
}

impl CellSolver<'_> {
    /// Solves for the mean-zero periodic field with load `f(qp) = (f0, f1)`
    /// meaning `v -> int f0 v + f1 . grad v`. Returns the nodal field and
    /// the relative defect.
    fn solve(&self, stage: &str, f: impl Fn(&Qp) -> (f64, [f64; 2]) + Sync + Send) -> Result<(Vec<f64>, f64)> {
        let mesh = &self.cell.mesh;
        let mut load = assemble_load(mesh, &self.dofs, &self.rule, Execution::Sequential, f);
        let defect: f64 = load.iter().sum();
        let scale: f64 = load.iter().map(|v| v.abs()).sum::<f64>().max(self.scale_floor).max(1e-300);
        let total: f64 = self.mass_vec.iter().sum();
        let rel = defect.abs() / scale;
        if rel > self.compat_tol && defect.abs() > 1e-14 {
            return Err(HomogenizationError::Compatibility { stage: stage.to_string(), defect: rel, tol: self.compat_tol }.into());
        }
        for (l, c) in load.iter_mut().zip(&self.mass_vec) {
            *l -= defect * c / total;
        }
        let mut u = self.factor.solve(&load);
        let mean = dot(&u, &self.mass_vec) / total;
        u.iter_mut().for_each(|x| *x -= mean);
        Ok((self.dofs.expand(&u), rel))
    }
}

fn cell_integral(cell: &CellMesh, rule: &TriangleRule, exec: Execution, f: impl Fn(&Qp) -> f64 + Sync + Send) -> f64 {
    integrate(&cell.mesh, rule, exec, f)
}

/// Solves the five corrector families for a periodic coefficient.
pub fn solve_cell_problems(a: &Coefficient, opts: &CellOptions) -> Result<CellCorrectors> {
    let cell = cell_mesh(opts.resolution, opts.order)?;
    solve_cell_problems_on(cell, a, opts)
}

/// As [`solve_cell_problems`] on a given cell mesh.
pub fn solve_cell_problems_on(cell: CellMesh, a: &Coefficient, opts: &CellOptions) -> Result<CellCorrectors> {
    let rule = TriangleRule::of_degree(opts.quadrature_degree)?;
    let exec = opts.exec;
    let dofs = DofMap::periodic(&cell);
    let op = assemble(
        &cell.mesh,
        &dofs,
        &rule,
        exec,
        |x| {
            let v = a.eval_periodic(x)?;
            Ok([[v, 0.0], [0.0, v]])
        },
        |_| Ok(1.0),
    )?;
    let factor = PinnedFactor::new(&op.stiffness, 0)?;
    let mass_vec = assemble_load(&cell.mesh, &dofs, &rule, Execution::Sequential, |_| (1.0, [0.0; 2]));
    let av = |q: &Qp| a.eval_periodic(q.x).expect("coefficient validated during assembly");
    let scale_floor = cell_integral(&cell, &rule, exec, |q| av(q).abs());
    let solver = CellSolver { cell: &cell, dofs, rule: rule.clone(), factor, mass_vec, scale_floor, compat_tol: opts.compat_tol };
    let delta = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 };
    let mut defects = Vec::new();

    let phi_res = exec.map_range(2, |i| solver.solve(&format!("phi{}", i + 1), |q| {
        let a = av(q);
        let mut g = [0.0; 2];
        g[i] = -a;
        (0.0, g)
    }));
    let mut phi = Vec::new();
    for (i, r) in phi_res.into_iter().enumerate() {
        let (u, d) = r?;
        defects.push((format!("phi{}", i + 1), d));
        phi.push(u);
    }

    let mut q_raw = [[0.0; 2]; 2];
    let abar = cell_integral(&cell, &rule, exec, |q| av(q));
    for i in 0..2 {
        for j in 0..2 {
            q_raw[i][j] = abar * delta(i, j) + cell_integral(&cell, &rule, exec, |q| av(q) * q.gradient(&phi[i])[j]);
        }
    }

    let pairs: Vec<(usize, usize)> = (0..2).flat_map(|i| (0..2).map(move |j| (i, j))).collect();
    let zeta_res = exec.map(&pairs, |&(i, j)| {
        solver.solve(&format!("zeta{}{}", i + 1, j + 1), |q| {
            let a = av(q);
            let p = q.value(&phi[i]);
            let gp = q.gradient(&phi[i]);
            let mut g = [0.0; 2];
            g[j] = -a * p;
            (a * delta(i, j) + a * gp[j] - q_raw[i][j], g)
        })
    });
    let kappa_res = exec.map(&pairs, |&(i, j)| {
        solver.solve(&format!("kappa{}{}", i + 1, j + 1), |q| {
            let a = av(q);
            let gp = q.gradient(&phi[i]);
            (-a * delta(i, j) - a * gp[j] + q_raw[i][j], [0.0; 2])
        })
    });
    let mut zeta = Vec::new();
    let mut kappa = Vec::new();
    for (&(i, j), (z, k)) in pairs.iter().zip(zeta_res.into_iter().zip(kappa_res)) {
        let (z, dz) = z?;
        let (k, dk) = k?;
        defects.push((format!("zeta{}{}", i + 1, j + 1), dz));
        defects.push((format!("kappa{}{}", i + 1, j + 1), dk));
        zeta.push(z);
        kappa.push(k);
    }

    let triples: Vec<(usize, usize, usize)> =
        (0..2).flat_map(|i| (0..2).flat_map(move |j| (0..2).map(move |k| (i, j, k)))).collect();
    let mut p = [[[0.0; 2]; 2]; 2];
    for &(i, j, k) in &triples {
        p[i][j][k] = cell_integral(&cell, &rule, exec, |q| {
            let a = av(q);
            a * delta(i, j) * q.value(&phi[k]) + a * q.gradient(&zeta[2 * i + j])[k]
        });
    }

    let lambda_res = exec.map(&triples, |&(i, j, k)| {
        solver.solve(&format!("lambda{}{}{}", i + 1, j + 1, k + 1), |q| {
            let a = av(q);
            let z = &zeta[2 * i + j];
            let pk = q.value(&phi[k]);
            let mut g = [0.0; 2];
            g[k] = -a * q.value(z);
            (a * delta(i, j) * pk + a * q.gradient(z)[k] - q_raw[i][j] * pk - p[i][j][k], g)
        })
    });
    let theta_res = exec.map(&triples, |&(i, j, k)| {
        solver.solve(&format!("theta{}{}{}", i + 1, j + 1, k + 1), |q| {
            let a = av(q);
            let mut g = [0.0; 2];
            g[k] = -(a * q.gradient(&phi[i])[j] + delta(i, j) * a);
            (0.0, g)
        })
    });
    let mut lambda = Vec::new();
    let mut theta = Vec::new();
    for (&(i, j, k), (l, t)) in triples.iter().zip(lambda_res.into_iter().zip(theta_res)) {
        let (l, dl) = l?;
        let (t, dt) = t?;
        defects.push((format!("lambda{}{}{}", i + 1, j + 1, k + 1), dl));
        defects.push((format!("theta{}{}{}", i + 1, j + 1, k + 1), dt));
        lambda.push(l);
        theta.push(t);
    }

    let grads: Vec<f64> = exec.map_range(cell.mesh.n_elements(), |e| {
        let mut m = 0.0f64;
        crate::fem::for_each_qp(&cell.mesh, &rule, e, |q| {
            for f in &phi {
                let g = q.gradient(f);
                m = m.max(g[0].hypot(g[1]));
            }
        });
        m
    });
    let max_grad_phi = grads.into_iter().fold(0.0, f64::max);
    Ok(CellCorrectors { cell, phi, zeta, kappa, lambda, theta, defects, max_grad_phi, q_raw, p })
}

/// Homogenized tensors from solved correctors.
pub fn compute_tensors(c: &CellCorrectors, a: &Coefficient, opts: &CellOptions) -> Result<HomogenizedTensors> {
    let rule = TriangleRule::of_degree(opts.quadrature_degree)?;
    let exec = opts.exec;
    let cell = &c.cell;
    let av = |q: &Qp| a.eval_periodic(q.x).expect("coefficient validated during assembly");
    let delta = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 };
    let abar = cell_integral(cell, &rule, exec, |q| av(q));
    let harmonic_mean = 1.0 / cell_integral(cell, &rule, exec, |q| 1.0 / av(q));

    let qr = c.q_raw;
    let scale = qr.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let q_asymmetry = (qr[0][1] - qr[1][0]).abs() / scale;
    if q_asymmetry > opts.symmetry_tol {
        return Err(HomogenizationError::Asymmetric { defect: q_asymmetry, tol: opts.symmetry_tol }.into());
    }
    let off = 0.5 * (qr[0][1] + qr[1][0]);
    let q = [[qr[0][0], off], [off, qr[1][1]]];

    let mut s = [[[0.0; 2]; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                s[i][j][k] = cell_integral(cell, &rule, exec, |qp| {
                    let a = av(qp);
                    a * qp.gradient(&c.kappa[2 * i + k])[j]
                        - a * qp.gradient(&c.zeta[2 * i + j])[k]
                        - a * qp.value(&c.phi[i]) * delta(j, k)
                });
            }
        }
    }
    let mut r = [[[[0.0; 2]; 2]; 2]; 2];
    let mut t = [[[[0.0; 2]; 2]; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    r[i][j][k][l] = cell_integral(cell, &rule, exec, |qp| {
                        let a = av(qp);
                        a * delta(i, j) * qp.value(&c.zeta[2 * k + l]) + a * qp.gradient(&c.lambda[4 * i + 2 * j + k])[l]
                    });
                    t[i][j][k][l] = q[i][j] * delta(k, l)
                        + cell_integral(cell, &rule, exec, |qp| av(qp) * qp.gradient(&c.theta[4 * i + 2 * j + k])[l]);
                }
            }
        }
    }
    Ok(HomogenizedTensors { abar, q, p: c.p, s, r, t, q_asymmetry, harmonic_mean })
}

/// Correctors and tensors in one call.
pub fn homogenize(a: &Coefficient, opts: &CellOptions) -> Result<(CellCorrectors, HomogenizedTensors)> {
    let c = solve_cell_problems(a, opts)?;
    let t = compute_tensors(&c, a, opts)?;
    Ok((c, t))
}

/// `Q` from the energy form `int a (grad phi_i + e_i) . (grad phi_j + e_j)`.
pub fn q_energy_form(c: &CellCorrectors, a: &Coefficient, opts: &CellOptions) -> Result<[[f64; 2]; 2]> {
    let rule = TriangleRule::of_degree(opts.quadrature_degree)?;
    let mut q = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            q[i][j] = cell_integral(&c.cell, &rule, opts.exec, |qp| {
                let a = a.eval_periodic(qp.x).expect("validated");
                let mut gi = qp.gradient(&c.phi[i]);
                let mut gj = qp.gradient(&c.phi[j]);
                gi[i] += 1.0;
                gj[j] += 1.0;
                a * (gi[0] * gj[0] + gi[1] * gj[1])
            });
        }
    }
    Ok(q)
}

/// Mean of a corrector over the cell.
pub fn corrector_mean(c: &CellCorrectors, field: &[f64], opts: &CellOptions) -> Result<f64> {
    let rule = TriangleRule::of_degree(opts.quadrature_degree)?;
    Ok(cell_integral(&c.cell, &rule, opts.exec, |q| q.value(field)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(n: usize) -> CellOptions {
        CellOptions { resolution: n, ..Default::default() }
    }

    #[test]
    fn constant_coefficient_has_trivial_correctors() {
        let a = Coefficient::Constant(3.0);
        let (c, t) = homogenize(&a, &opts(8)).unwrap();
        let all = c.phi.iter().chain(&c.zeta).chain(&c.kappa).chain(&c.lambda).chain(&c.theta);
        for f in all {
            assert!(f.iter().all(|v| v.abs() < 1e-12));
        }
        assert!((t.abar - 3.0).abs() < 1e-13);
        assert!((t.q[0][0] - 3.0).abs() < 1e-13 && t.q[0][1].abs() < 1e-13);
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    assert!(t.p[i][j][k].abs() < 1e-12 && t.s[i][j][k].abs() < 1e-12);
                    for l in 0..2 {
                        assert!(t.r[i][j][k][l].abs() < 1e-12);
                        let e = if i == j && k == l { 3.0 } else { 0.0 };
                        assert!((t.t[i][j][k][l] - e).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn layered_coefficient_is_exact() {
        let a = Coefficient::function(|y| if y[0] < 0.5 { 1.0 } else { 4.0 });
        let (c, t) = homogenize(&a, &opts(8)).unwrap();
        assert!((t.abar - 2.5).abs() < 1e-13);
        assert!((t.q[0][0] - 1.6).abs() < 1e-12);
        assert!((t.q[1][1] - 2.5).abs() < 1e-12);
        assert!(t.q[0][1].abs() < 1e-12);
        assert!(c.phi[1].iter().all(|v| v.abs() < 1e-12));
        assert!((t.harmonic_mean - 1.6).abs() < 1e-13);
    }
}
