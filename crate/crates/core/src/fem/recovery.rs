//! Higher derivatives of a finite element field by least-squares patch
//! recovery: a cubic polynomial is fitted to the nodal values around each
//! node and differentiated there.

use nalgebra::{DMatrix, DVector};

use crate::error::{FemError, Result};
use crate::exec::Execution;

use super::mesh::Mesh;

/// Recovered nodal derivatives of one scalar field.
#[derive(Debug, Clone)]
pub struct Recovered {
    /// `d11, d12, d22`.
    pub second: [Vec<f64>; 3],
    /// `d111, d112, d122, d222`, present when order 3 was requested.
    pub third: Option<[Vec<f64>; 4]>,
}

impl Recovered {
    /// `d_ij` as a nodal field.
    pub fn d2(&self, i: usize, j: usize) -> &[f64] {
        match (i, j) {
            (0, 0) => &self.second[0],
            (1, 1) => &self.second[2],
            _ => &self.second[1],
        }
    }

    /// `d_ijk` as a nodal field.
    pub fn d3(&self, i: usize, j: usize, k: usize) -> Option<&[f64]> {
        let t = self.third.as_ref()?;
        Some(&t[i + j + k])
    }
}

const MIN_PATCH: usize = 16;

/// Nodes used for the fit at each node: the elements around the node, grown
/// by element rings until enough points are available.
fn patches(mesh: &Mesh) -> Vec<Vec<usize>> {
    let node_elems = mesh.node_elements();
    (0..mesh.n_nodes())
        .map(|p| {
            let mut elems: Vec<usize> = node_elems[p].clone();
            let mut nodes: Vec<usize> = Vec::new();
            for _ in 0..4 {
                nodes = elems.iter().flat_map(|&e| mesh.element(e).iter().copied()).collect();
                nodes.sort_unstable();
                nodes.dedup();
                if nodes.len() >= MIN_PATCH {
                    break;
                }
                elems = nodes.iter().flat_map(|&n| node_elems[n].iter().copied()).collect();
                elems.sort_unstable();
                elems.dedup();
            }
            nodes
        })
        .collect()
}

/// Recovers derivatives of order 2 (and 3 when `order == 3`) of a nodal field.
pub fn recover_derivatives(mesh: &Mesh, field: &[f64], order: usize, exec: Execution) -> Result<Recovered> {
    if !(2..=3).contains(&order) {
        return Err(FemError::UnsupportedOrder(order).into());
    }
    if field.len() != mesh.n_nodes() {
        return Err(FemError::Dimension { got: field.len(), expected: mesh.n_nodes() }.into());
    }
    let patches = patches(mesh);
    let fits: Vec<Result<[f64; 7]>> = exec.map_range(mesh.n_nodes(), |p| fit(mesh, field, p, &patches[p]));
    let n = mesh.n_nodes();
    let mut second = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut third = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for (p, f) in fits.into_iter().enumerate() {
        let d = f?;
        for k in 0..3 {
            second[k][p] = d[k];
        }
        for k in 0..4 {
            third[k][p] = d[3 + k];
        }
    }
    Ok(Recovered { second, third: (order == 3).then_some(third) })
}

fn fit(mesh: &Mesh, field: &[f64], p: usize, patch: &[usize]) -> Result<[f64; 7]> {
    let c = mesh.nodes[p];
    let scale = patch
        .iter()
        .map(|&q| (mesh.nodes[q][0] - c[0]).hypot(mesh.nodes[q][1] - c[1]))
        .fold(0.0, f64::max);
    if patch.len() < 10 || scale == 0.0 {
        return Err(FemError::Mesh(format!("patch around node {p} is too small for a cubic fit")).into());
    }
    let rows = patch.len();
    let mut a = DMatrix::<f64>::zeros(rows, 10);
    let mut b = DVector::<f64>::zeros(rows);
    for (r, &q) in patch.iter().enumerate() {
        let x = (mesh.nodes[q][0] - c[0]) / scale;
        let y = (mesh.nodes[q][1] - c[1]) / scale;
        let mono = [1.0, x, y, x * x, x * y, y * y, x * x * x, x * x * y, x * y * y, y * y * y];
        for (k, m) in mono.iter().enumerate() {
            a[(r, k)] = *m;
        }
        b[r] = field[q];
    }
    let qr = a.qr();
    let qtb = qr.q().transpose() * b;
    let coef = qr
        .r()
        .solve_upper_triangular(&qtb)
        .ok_or_else(|| FemError::Mesh(format!("patch fit at node {p} is rank deficient")))?;
    let s2 = scale * scale;
    let s3 = s2 * scale;
    Ok([
        2.0 * coef[3] / s2,
        coef[4] / s2,
        2.0 * coef[5] / s2,
        6.0 * coef[6] / s3,
        2.0 * coef[7] / s3,
        2.0 * coef[8] / s3,
        6.0 * coef[9] / s3,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::assembly::interpolate;
    use crate::fem::mesh::{disk_mesh, unit_square_mesh, Order};

    #[test]
    fn cubic_fields_are_recovered_exactly() {
        let m = unit_square_mesh(4, Order::P2).unwrap();
        let f = interpolate(&m, |p| {
            let (x, y) = (p[0], p[1]);
            1.0 + x - y + 2.0 * x * x - x * y + 0.5 * y * y + x * x * x - 2.0 * x * y * y + 0.25 * y * y * y
        });
        let r = recover_derivatives(&m, &f, 3, Execution::Sequential).unwrap();
        for (i, p) in m.nodes.iter().enumerate() {
            let (x, y) = (p[0], p[1]);
            assert!((r.second[0][i] - (4.0 + 6.0 * x)).abs() < 1e-9);
            assert!((r.second[1][i] - (-1.0 - 4.0 * y)).abs() < 1e-9, "{i} {p:?} {}", r.second[1][i]);
            assert!((r.second[2][i] - (1.0 - 4.0 * x + 1.5 * y)).abs() < 1e-9);
            let t = r.third.as_ref().unwrap();
            assert!((t[0][i] - 6.0).abs() < 1e-8);
            assert!(t[1][i].abs() < 1e-8);
            assert!((t[2][i] + 4.0).abs() < 1e-8);
            assert!((t[3][i] - 1.5).abs() < 1e-8);
        }
    }

    #[test]
    fn smooth_field_converges() {
        let err = |n: usize| {
            let m = disk_mesh(1.0, n, Order::P2).unwrap();
            let f = interpolate(&m, |p| (p[0] + 0.5 * p[1]).sin());
            let r = recover_derivatives(&m, &f, 2, Execution::Parallel).unwrap();
            m.nodes
                .iter()
                .enumerate()
                .map(|(i, p)| (r.second[0][i] + (p[0] + 0.5 * p[1]).sin()).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(6), err(12));
        assert!(e2 < e1 / 3.0, "{e1} {e2}");
    }

    #[test]
    fn rejects_unsupported_order() {
        let m = unit_square_mesh(2, Order::P2).unwrap();
        let f = vec![0.0; m.n_nodes()];
        assert!(matches!(
            recover_derivatives(&m, &f, 4, Execution::Sequential),
            Err(crate::Error::Fem(FemError::UnsupportedOrder(4)))
        ));
    }
}
