//! Element loops: bilinear forms, load functionals and integrals.

use crate::error::{FemError, Result};
use crate::exec::Execution;
use crate::sparse::CsrMatrix;

use super::mesh::{CellMesh, Mesh, Order};
use super::quadrature::TriangleRule;

/// Shape functions and reference gradients at `(x, y)`.
pub fn shape(order: Order, p: [f64; 2]) -> ([f64; 6], [[f64; 2]; 6]) {
    let (x, y) = (p[0], p[1]);
    let l0 = 1.0 - x - y;
    match order {
        Order::P1 => (
            [l0, x, y, 0.0, 0.0, 0.0],
            [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0], [0.0; 2], [0.0; 2], [0.0; 2]],
        ),
        Order::P2 => (
            [l0 * (2.0 * l0 - 1.0), x * (2.0 * x - 1.0), y * (2.0 * y - 1.0), 4.0 * l0 * x, 4.0 * x * y, 4.0 * y * l0],
            [
                [1.0 - 4.0 * l0, 1.0 - 4.0 * l0],
                [4.0 * x - 1.0, 0.0],
                [0.0, 4.0 * y - 1.0],
                [4.0 * (l0 - x), -4.0 * x],
                [4.0 * y, 4.0 * x],
                [-4.0 * y, 4.0 * (l0 - y)],
            ],
        ),
    }
}

/// Data at one quadrature point of one element.
#[derive(Debug, Clone)]
pub struct Qp<'a> {
    pub element: usize,
    pub nodes: &'a [usize],
    pub x: [f64; 2],
    /// Quadrature weight times the Jacobian determinant.
    pub w: f64,
    pub phi: [f64; 6],
    pub grad: [[f64; 2]; 6],
}

impl Qp<'_> {
    /// Value of a nodal field.
    pub fn value(&self, f: &[f64]) -> f64 {
        self.nodes.iter().enumerate().map(|(i, &n)| self.phi[i] * f[n]).sum()
    }

    pub fn gradient(&self, f: &[f64]) -> [f64; 2] {
        let mut g = [0.0; 2];
        for (i, &n) in self.nodes.iter().enumerate() {
            g[0] += self.grad[i][0] * f[n];
            g[1] += self.grad[i][1] * f[n];
        }
        g
    }
}

/// Affine element map data.
pub struct ElementMap {
    pub origin: [f64; 2],
    pub jac: [[f64; 2]; 2],
    pub det: f64,
    /// Inverse transpose of the Jacobian.
    pub jit: [[f64; 2]; 2],
}

impl ElementMap {
    pub fn new(v: [[f64; 2]; 3]) -> ElementMap {
        let jac = [[v[1][0] - v[0][0], v[2][0] - v[0][0]], [v[1][1] - v[0][1], v[2][1] - v[0][1]]];
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        let jit = [[jac[1][1] / det, -jac[1][0] / det], [-jac[0][1] / det, jac[0][0] / det]];
        ElementMap { origin: v[0], jac, det, jit }
    }

    pub fn to_physical(&self, r: [f64; 2]) -> [f64; 2] {
        [
            self.origin[0] + self.jac[0][0] * r[0] + self.jac[0][1] * r[1],
            self.origin[1] + self.jac[1][0] * r[0] + self.jac[1][1] * r[1],
        ]
    }

    pub fn to_reference(&self, x: [f64; 2]) -> [f64; 2] {
        let d = [x[0] - self.origin[0], x[1] - self.origin[1]];
        // inverse Jacobian = transpose of jit
        [self.jit[0][0] * d[0] + self.jit[1][0] * d[1], self.jit[0][1] * d[0] + self.jit[1][1] * d[1]]
    }

    pub fn grad(&self, g: [f64; 2]) -> [f64; 2] {
        [self.jit[0][0] * g[0] + self.jit[0][1] * g[1], self.jit[1][0] * g[0] + self.jit[1][1] * g[1]]
    }
}

/// Calls `f` for every quadrature point of element `e`.
pub fn for_each_qp<'a>(mesh: &'a Mesh, rule: &TriangleRule, e: usize, mut f: impl FnMut(&Qp<'a>)) {
    let map = ElementMap::new(mesh.vertices_of(e));
    let nodes = mesh.element(e);
    let npe = nodes.len();
    for (r, w) in rule.points.iter().zip(&rule.weights) {
        let (phi, gref) = shape(mesh.order, *r);
        let mut grad = [[0.0; 2]; 6];
        for i in 0..npe {
            grad[i] = map.grad(gref[i]);
        }
        f(&Qp { element: e, nodes, x: map.to_physical(*r), w: w * map.det.abs(), phi, grad });
    }
}

/// `sum_e sum_q w f(qp)`, with per-element partial sums added in element order.
pub fn integrate(mesh: &Mesh, rule: &TriangleRule, exec: Execution, f: impl Fn(&Qp) -> f64 + Sync + Send) -> f64 {
    let parts = exec.map_range(mesh.n_elements(), |e| {
        let mut s = 0.0;
        for_each_qp(mesh, rule, e, |q| s += q.w * f(q));
        s
    });
    parts.iter().sum()
}

/// Fallible version of [`integrate`].
pub fn try_integrate(
    mesh: &Mesh,
    rule: &TriangleRule,
    exec: Execution,
    f: impl Fn(&Qp) -> Result<f64> + Sync + Send,
) -> Result<f64> {
    let parts = exec.map_range(mesh.n_elements(), |e| {
        let mut s = 0.0;
        let mut err = None;
        for_each_qp(mesh, rule, e, |q| match f(q) {
            Ok(v) => s += q.w * v,
            Err(x) => {
                if err.is_none() {
                    err = Some(x)
                }
            }
        });
        err.map_or(Ok(s), Err)
    });
    let mut total = 0.0;
    for p in parts {
        total += p?;
    }
    Ok(total)
}

/// Maps mesh nodes to unknowns.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    pub node_to_dof: Vec<Option<usize>>,
    pub n_dofs: usize,
    /// One node per unknown.
    pub dof_to_node: Vec<usize>,
}

impl DofMap {
    /// Homogeneous Dirichlet conditions on all boundary nodes.
    pub fn dirichlet(mesh: &Mesh) -> DofMap {
        let mut node_to_dof = vec![None; mesh.n_nodes()];
        let mut dof_to_node = Vec::new();
        for (i, b) in mesh.on_boundary.iter().enumerate() {
            if !b {
                node_to_dof[i] = Some(dof_to_node.len());
                dof_to_node.push(i);
            }
        }
        DofMap { n_dofs: dof_to_node.len(), node_to_dof, dof_to_node }
    }

    /// Periodic identification on a cell mesh.
    pub fn periodic(cell: &CellMesh) -> DofMap {
        let n = cell.mesh.n_nodes();
        let mut rep_dof = vec![None; n];
        let mut dof_to_node = Vec::new();
        for i in 0..n {
            let r = cell.representative[i];
            if r == i {
                rep_dof[i] = Some(dof_to_node.len());
                dof_to_node.push(i);
            }
        }
        let node_to_dof = (0..n).map(|i| rep_dof[cell.representative[i]]).collect();
        DofMap { n_dofs: dof_to_node.len(), node_to_dof, dof_to_node }
    }

    /// Nodal vector from unknowns; constrained nodes are zero.
    pub fn expand(&self, u: &[f64]) -> Vec<f64> {
        self.node_to_dof.iter().map(|d| d.map_or(0.0, |d| u[d])).collect()
    }

    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.dof_to_node.iter().map(|&n| full[n]).collect()
    }
}

/// Stiffness and mass matrices of `int A grad u . grad v` and `int m u v`.
#[derive(Debug, Clone)]
pub struct Operator {
    pub stiffness: CsrMatrix,
    pub mass: CsrMatrix,
    pub dofs: DofMap,
}

/// Assembles `int A(x) grad u . grad v` and `int m(x) u v`. The tensor must
/// be symmetric positive definite at every quadrature point.
pub fn assemble(
    mesh: &Mesh,
    dofs: &DofMap,
    rule: &TriangleRule,
    exec: Execution,
    tensor: impl Fn([f64; 2]) -> Result<[[f64; 2]; 2]> + Sync + Send,
    mass_weight: impl Fn([f64; 2]) -> Result<f64> + Sync + Send,
) -> Result<Operator> {
    let npe = mesh.order.nodes_per_element();
    type Local = (Vec<(usize, usize, f64)>, Vec<(usize, usize, f64)>);
    let locals: Vec<Result<Local>> = exec.map_range(mesh.n_elements(), |e| {
        let mut kl = [[0.0; 6]; 6];
        let mut ml = [[0.0; 6]; 6];
        let mut err = None;
        for_each_qp(mesh, rule, e, |q| {
            if err.is_some() {
                return;
            }
            let a = match tensor(q.x) {
                Ok(a) => a,
                Err(x) => {
                    err = Some(x);
                    return;
                }
            };
            let tr = a[0][0] + a[1][1];
            let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
            if !(det > 0.0 && tr > 0.0) || !det.is_finite() {
                let lmin = 0.5 * (tr - (tr * tr - 4.0 * det).max(0.0).sqrt());
                err = Some(FemError::Coercivity { value: lmin, x: q.x[0], y: q.x[1] }.into());
                return;
            }
            let mw = match mass_weight(q.x) {
                Ok(m) => m,
                Err(x) => {
                    err = Some(x);
                    return;
                }
            };
            for i in 0..npe {
                let gi = q.grad[i];
                let agi = [a[0][0] * gi[0] + a[0][1] * gi[1], a[1][0] * gi[0] + a[1][1] * gi[1]];
                for j in 0..npe {
                    let gj = q.grad[j];
                    kl[i][j] += q.w * (agi[0] * gj[0] + agi[1] * gj[1]);
                    ml[i][j] += q.w * mw * q.phi[i] * q.phi[j];
                }
            }
        });
        if let Some(x) = err {
            return Err(x);
        }
        let nodes = mesh.element(e);
        let mut kt = Vec::with_capacity(npe * npe);
        let mut mt = Vec::with_capacity(npe * npe);
        for i in 0..npe {
            let Some(di) = dofs.node_to_dof[nodes[i]] else { continue };
            for j in 0..npe {
                let Some(dj) = dofs.node_to_dof[nodes[j]] else { continue };
                kt.push((di, dj, kl[i][j]));
                mt.push((di, dj, ml[i][j]));
            }
        }
        Ok((kt, mt))
    });
    let mut kt = Vec::with_capacity(mesh.n_elements() * npe * npe);
    let mut mt = Vec::with_capacity(mesh.n_elements() * npe * npe);
    for l in locals {
        let (k, m) = l?;
        kt.extend(k);
        mt.extend(m);
    }
    Ok(Operator {
        stiffness: CsrMatrix::from_triplets(dofs.n_dofs, kt),
        mass: CsrMatrix::from_triplets(dofs.n_dofs, mt),
        dofs: dofs.clone(),
    })
}

/// Assembles the functional `v -> int f0 v + f1 . grad v` into unknowns.
pub fn assemble_load(
    mesh: &Mesh,
    dofs: &DofMap,
    rule: &TriangleRule,
    exec: Execution,
    f: impl Fn(&Qp) -> (f64, [f64; 2]) + Sync + Send,
) -> Vec<f64> {
    let npe = mesh.order.nodes_per_element();
    let locals = exec.map_range(mesh.n_elements(), |e| {
        let mut fl = [0.0; 6];
        for_each_qp(mesh, rule, e, |q| {
            let (f0, f1) = f(q);
            for i in 0..npe {
                fl[i] += q.w * (f0 * q.phi[i] + f1[0] * q.grad[i][0] + f1[1] * q.grad[i][1]);
            }
        });
        fl
    });
    let mut out = vec![0.0; dofs.n_dofs];
    for (e, fl) in locals.iter().enumerate() {
        for (i, &n) in mesh.element(e).iter().enumerate() {
            if let Some(d) = dofs.node_to_dof[n] {
                out[d] += fl[i];
            }
        }
    }
    out
}

/// Full nodal mass matrix `int m u v` over all nodes (no constraints).
pub fn nodal_mass(mesh: &Mesh, rule: &TriangleRule, exec: Execution) -> CsrMatrix {
    let all = DofMap {
        node_to_dof: (0..mesh.n_nodes()).map(Some).collect(),
        n_dofs: mesh.n_nodes(),
        dof_to_node: (0..mesh.n_nodes()).collect(),
    };
    assemble(mesh, &all, rule, exec, |_| Ok([[1.0, 0.0], [0.0, 1.0]]), |_| Ok(1.0))
        .map(|o| o.mass)
        .expect("unit coefficients are coercive")
}

/// Nodal interpolant of a function.
pub fn interpolate(mesh: &Mesh, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
    mesh.nodes.iter().map(|&p| f(p)).collect()
}

/// Integral over the boundary of `g(point, outward normal, element, reference point)`
/// using `n`-point Gauss rules on each edge.
pub fn boundary_integral(mesh: &Mesh, n: usize, mut g: impl FnMut([f64; 2], [f64; 2], usize, [f64; 2]) -> f64) -> f64 {
    let (gx, gw) = super::quadrature::gauss_legendre(n);
    let corners = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
    let mut total = 0.0;
    for &(e, i) in &mesh.boundary_edges {
        let v = mesh.vertices_of(e);
        let (a, b) = (v[i], v[(i + 1) % 3]);
        let len = (b[0] - a[0]).hypot(b[1] - a[1]);
        // vertices are counter-clockwise, so the outward normal is the edge
        // direction rotated clockwise
        let normal = [(b[1] - a[1]) / len, -(b[0] - a[0]) / len];
        let (ra, rb) = (corners[i], corners[(i + 1) % 3]);
        for (x, w) in gx.iter().zip(&gw) {
            let t = 0.5 * (x + 1.0);
            let p = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
            let r = [ra[0] + t * (rb[0] - ra[0]), ra[1] + t * (rb[1] - ra[1])];
            total += 0.5 * w * len * g(p, normal, e, r);
        }
    }
    total
}

/// Value and gradient of a nodal field at a reference point of element `e`.
pub fn eval_at(mesh: &Mesh, e: usize, r: [f64; 2], f: &[f64]) -> (f64, [f64; 2]) {
    let map = ElementMap::new(mesh.vertices_of(e));
    let (phi, gref) = shape(mesh.order, r);
    let mut v = 0.0;
    let mut g = [0.0; 2];
    for (i, &n) in mesh.element(e).iter().enumerate() {
        v += phi[i] * f[n];
        let gi = map.grad(gref[i]);
        g[0] += gi[0] * f[n];
        g[1] += gi[1] * f[n];
    }
    (v, g)
}
