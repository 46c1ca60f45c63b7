//! Triangular meshes with linear or quadratic Lagrange nodes.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{FemError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Order {
    P1,
    #[default]
    P2,
}

impl Order {
    pub fn nodes_per_element(self) -> usize {
        match self {
            Order::P1 => 3,
            Order::P2 => 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    UnitSquare,
    /// `(-1/2, 1/2)^2`, centred on the guide axis.
    CenteredSquare,
    Rectangle { lx: f64, ly: f64 },
    Disk { radius: f64 },
    Polygon { vertices: Vec<[f64; 2]> },
    Imported,
}

/// Conforming triangulation. Vertices come first in `nodes`, followed by edge
/// midpoints for quadratic meshes. Element nodes are ordered
/// `[v0, v1, v2, m01, m12, m20]` with counter-clockwise vertices.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub order: Order,
    pub domain: Domain,
    pub nodes: Vec<[f64; 2]>,
    pub n_vertices: usize,
    elements: Vec<usize>,
    /// Whether each node lies on the boundary.
    pub on_boundary: Vec<bool>,
    /// Boundary edges as `(element, local edge)`; local edge `i` joins
    /// vertices `i` and `(i + 1) % 3`.
    pub boundary_edges: Vec<(usize, usize)>,
    /// Longest edge.
    pub h: f64,
}

impl Mesh {
    /// Builds a mesh from vertices and vertex triangles, fixing orientation
    /// and adding midpoint nodes for quadratic order.
    pub fn from_triangles(vertices: Vec<[f64; 2]>, triangles: &[[usize; 3]], order: Order, domain: Domain) -> Result<Mesh> {
        let nv = vertices.len();
        if triangles.is_empty() {
            return Err(FemError::Mesh("no triangles".into()).into());
        }
        if vertices.iter().any(|p| !(p[0].is_finite() && p[1].is_finite())) {
            return Err(FemError::Mesh("non-finite vertex coordinate".into()).into());
        }
        let mut used = vec![false; nv];
        let mut tris = Vec::with_capacity(triangles.len());
        let mut h = 0.0f64;
        for (e, t) in triangles.iter().enumerate() {
            if t.iter().any(|&i| i >= nv) {
                return Err(FemError::Mesh(format!("triangle {e} references a missing vertex")).into());
            }
            let [a, b, c] = *t;
            if a == b || b == c || a == c {
                return Err(FemError::Mesh(format!("triangle {e} repeats a vertex")).into());
            }
            let (pa, pb, pc) = (vertices[a], vertices[b], vertices[c]);
            let area2 = (pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]);
            let emax = dist(pa, pb).max(dist(pb, pc)).max(dist(pc, pa));
            if area2.abs() <= 1e-14 * emax * emax {
                return Err(FemError::Mesh(format!("triangle {e} is degenerate")).into());
            }
            h = h.max(emax);
            used[a] = true;
            used[b] = true;
            used[c] = true;
            tris.push(if area2 > 0.0 { [a, b, c] } else { [a, c, b] });
        }
        if let Some(i) = used.iter().position(|u| !u) {
            return Err(FemError::Mesh(format!("vertex {i} is not used by any triangle")).into());
        }

        let mut edge_id: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edge_count: Vec<usize> = Vec::new();
        let mut edge_verts: Vec<(usize, usize)> = Vec::new();
        let mut tri_edges = Vec::with_capacity(tris.len());
        for t in &tris {
            let mut te = [0usize; 3];
            for i in 0..3 {
                let (a, b) = (t[i], t[(i + 1) % 3]);
                let key = (a.min(b), a.max(b));
                let id = *edge_id.entry(key).or_insert_with(|| {
                    edge_count.push(0);
                    edge_verts.push(key);
                    edge_count.len() - 1
                });
                edge_count[id] += 1;
                te[i] = id;
            }
            tri_edges.push(te);
        }
        if let Some(id) = edge_count.iter().position(|&c| c > 2) {
            return Err(FemError::Mesh(format!("edge {:?} is shared by more than two triangles", edge_verts[id])).into());
        }

        let mut nodes = vertices;
        let npe = order.nodes_per_element();
        let mut elements = Vec::with_capacity(npe * tris.len());
        if order == Order::P2 {
            for &(a, b) in &edge_verts {
                let (pa, pb) = (nodes[a], nodes[b]);
                nodes.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
            }
        }
        for (t, te) in tris.iter().zip(&tri_edges) {
            elements.extend_from_slice(t);
            if order == Order::P2 {
                elements.extend(te.iter().map(|&id| nv + id));
            }
        }
        let mut on_boundary = vec![false; nodes.len()];
        let mut boundary_edges = Vec::new();
        for (e, te) in tri_edges.iter().enumerate() {
            for (i, &id) in te.iter().enumerate() {
                if edge_count[id] == 1 {
                    boundary_edges.push((e, i));
                    let (a, b) = edge_verts[id];
                    on_boundary[a] = true;
                    on_boundary[b] = true;
                    if order == Order::P2 {
                        on_boundary[nv + id] = true;
                    }
                }
            }
        }
        Ok(Mesh { order, domain, nodes, n_vertices: nv, elements, on_boundary, boundary_edges, h })
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len() / self.order.nodes_per_element()
    }

    pub fn element(&self, e: usize) -> &[usize] {
        let npe = self.order.nodes_per_element();
        &self.elements[e * npe..(e + 1) * npe]
    }

    pub fn vertices_of(&self, e: usize) -> [[f64; 2]; 3] {
        let el = self.element(e);
        [self.nodes[el[0]], self.nodes[el[1]], self.nodes[el[2]]]
    }

    /// Vertex triangles, for export.
    pub fn triangles(&self) -> Vec<[usize; 3]> {
        (0..self.n_elements()).map(|e| {
            let el = self.element(e);
            [el[0], el[1], el[2]]
        }).collect()
    }

    /// Largest `|x|` over the nodes.
    pub fn x_sup(&self) -> f64 {
        self.nodes.iter().map(|p| p[0].hypot(p[1])).fold(0.0, f64::max)
    }

    pub fn area(&self) -> f64 {
        (0..self.n_elements())
            .map(|e| {
                let [a, b, c] = self.vertices_of(e);
                0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
            })
            .sum()
    }

    /// Same topology with a different element order.
    pub fn with_order(&self, order: Order) -> Result<Mesh> {
        let verts = self.nodes[..self.n_vertices].to_vec();
        Mesh::from_triangles(verts, &self.triangles(), order, self.domain.clone())
    }

    /// Uniform refinement: every triangle is split into four through its
    /// edge midpoints. Curved boundaries are not followed.
    pub fn refined(&self) -> Result<Mesh> {
        let mut verts = self.nodes[..self.n_vertices].to_vec();
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<[f64; 2]>| {
            *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let (p, q) = (verts[a], verts[b]);
                verts.push([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]);
                verts.len() - 1
            })
        };
        let mut tris = Vec::with_capacity(4 * self.n_elements());
        for [a, b, c] in self.triangles() {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            tris.extend([[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
        }
        Mesh::from_triangles(verts, &tris, self.order, self.domain.clone())
    }

    /// For each node, the elements that contain it.
    pub fn node_elements(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_nodes()];
        for e in 0..self.n_elements() {
            for &n in self.element(e) {
                out[n].push(e);
            }
        }
        out
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Structured `nx x ny` triangulation of `(0, lx) x (0, ly)`. Diagonals
/// alternate in a checkerboard pattern, so for even counts the mesh is
/// invariant under reflection in either midline and under point reflection
/// about the centre.
pub fn rectangle_mesh(lx: f64, ly: f64, nx: usize, ny: usize, order: Order) -> Result<Mesh> {
    if nx == 0 || ny == 0 || !(lx > 0.0 && ly > 0.0) {
        return Err(FemError::Mesh("rectangle needs positive sides and cell counts".into()).into());
    }
    let idx = |i: usize, j: usize| j * (nx + 1) + i;
    let mut verts = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            verts.push([lx * i as f64 / nx as f64, ly * j as f64 / ny as f64]);
        }
    }
    let mut tris = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            if (i + j) % 2 == 0 {
                tris.push([a, b, c]);
                tris.push([a, c, d]);
            } else {
                tris.push([a, b, d]);
                tris.push([b, c, d]);
            }
        }
    }
    let domain = if lx == 1.0 && ly == 1.0 { Domain::UnitSquare } else { Domain::Rectangle { lx, ly } };
    Mesh::from_triangles(verts, &tris, order, domain)
}

pub fn unit_square_mesh(n: usize, order: Order) -> Result<Mesh> {
    rectangle_mesh(1.0, 1.0, n, n, order)
}

/// Unit square centred at the origin, `(-1/2, 1/2)^2`.
pub fn centered_square_mesh(n: usize, order: Order) -> Result<Mesh> {
    let m = rectangle_mesh(1.0, 1.0, n, n, Order::P1)?;
    let verts = m.nodes.iter().map(|p| [p[0] - 0.5, p[1] - 0.5]).collect();
    Mesh::from_triangles(verts, &m.triangles(), order, Domain::CenteredSquare)
}

/// Disk of the given radius with `rings` concentric rings of `6 i` vertices.
/// Boundary vertices lie on the circle; edges are straight.
pub fn disk_mesh(radius: f64, rings: usize, order: Order) -> Result<Mesh> {
    if rings == 0 || !(radius > 0.0) {
        return Err(FemError::Mesh("disk needs a positive radius and at least one ring".into()).into());
    }
    let mut verts = vec![[0.0, 0.0]];
    let mut ring_start = vec![0usize];
    for i in 1..=rings {
        ring_start.push(verts.len());
        let m = 6 * i;
        let r = radius * i as f64 / rings as f64;
        for k in 0..m {
            let t = 2.0 * std::f64::consts::PI * k as f64 / m as f64;
            verts.push([r * t.cos(), r * t.sin()]);
        }
    }
    let mut tris = Vec::new();
    for i in 1..=rings {
        let outer_n = 6 * i;
        let inner_n = if i == 1 { 1 } else { 6 * (i - 1) };
        let (os, is) = (ring_start[i], ring_start[i - 1]);
        if inner_n == 1 {
            for k in 0..outer_n {
                tris.push([0, os + k, os + (k + 1) % outer_n]);
            }
            continue;
        }
        // zipper between the two rings by angle
        let (mut a, mut b) = (0usize, 0usize);
        while a < inner_n || b < outer_n {
            let next_in = (a + 1) as f64 / inner_n as f64;
            let next_out = (b + 1) as f64 / outer_n as f64;
            if b < outer_n && (a >= inner_n || next_out <= next_in) {
                tris.push([is + a % inner_n, os + b % outer_n, os + (b + 1) % outer_n]);
                b += 1;
            } else {
                tris.push([is + a % inner_n, os + b % outer_n, is + (a + 1) % inner_n]);
                a += 1;
            }
        }
    }
    Mesh::from_triangles(verts, &tris, order, Domain::Disk { radius })
}

/// Simple polygon, triangulated by ear clipping and then split uniformly
/// into `n^2` sub-triangles per ear.
pub fn polygon_mesh(vertices: &[[f64; 2]], n: usize, order: Order) -> Result<Mesh> {
    let nv = vertices.len();
    if nv < 3 || n == 0 {
        return Err(FemError::Mesh("polygon needs at least three vertices and n >= 1".into()).into());
    }
    let area2: f64 = (0..nv)
        .map(|i| {
            let (p, q) = (vertices[i], vertices[(i + 1) % nv]);
            p[0] * q[1] - q[0] * p[1]
        })
        .sum();
    if area2.abs() < 1e-14 {
        return Err(FemError::Mesh("polygon has zero area".into()).into());
    }
    for i in 0..nv {
        for j in i + 1..nv {
            if j == i + 1 || (i == 0 && j == nv - 1) {
                continue;
            }
            let (a, b) = (vertices[i], vertices[(i + 1) % nv]);
            let (c, d) = (vertices[j], vertices[(j + 1) % nv]);
            if segments_intersect(a, b, c, d) {
                return Err(FemError::Mesh(format!("polygon edges {i} and {j} intersect")).into());
            }
        }
    }
    let ccw = area2 > 0.0;
    let mut ring: Vec<usize> = if ccw { (0..nv).collect() } else { (0..nv).rev().collect() };
    let mut ears = Vec::new();
    let mut guard = 0;
    while ring.len() > 3 {
        let m = ring.len();
        let mut clipped = false;
        for k in 0..m {
            let (ia, ib, ic) = (ring[(k + m - 1) % m], ring[k], ring[(k + 1) % m]);
            let (a, b, c) = (vertices[ia], vertices[ib], vertices[ic]);
            if cross(a, b, c) <= 1e-14 {
                continue;
            }
            let blocked = ring.iter().any(|&j| j != ia && j != ib && j != ic && in_triangle(vertices[j], a, b, c));
            if !blocked {
                ears.push([ia, ib, ic]);
                ring.remove(k);
                clipped = true;
                break;
            }
        }
        guard += 1;
        if !clipped || guard > 4 * nv {
            return Err(FemError::Mesh("ear clipping failed; polygon may be degenerate".into()).into());
        }
    }
    ears.push([ring[0], ring[1], ring[2]]);

    // Conforming uniform refinement: points on shared edges are generated once.
    let mut verts: Vec<[f64; 2]> = vertices.to_vec();
    let mut edge_pts: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    let mut tris = Vec::new();
    for ear in &ears {
        let mut lattice: HashMap<(usize, usize), usize> = HashMap::new();
        let [a, b, c] = *ear;
        let (pa, pb, pc) = (vertices[a], vertices[b], vertices[c]);
        for i in 0..=n {
            for j in 0..=(n - i) {
                // barycentric weights (n - i - j, i, j) on (a, b, c)
                let k = n - i - j;
                let id = if i == 0 && j == 0 {
                    a
                } else if i == n {
                    b
                } else if j == n {
                    c
                } else if j == 0 {
                    edge_point(&mut verts, &mut edge_pts, vertices, a, b, i, n)
                } else if i == 0 {
                    edge_point(&mut verts, &mut edge_pts, vertices, a, c, j, n)
                } else if k == 0 {
                    edge_point(&mut verts, &mut edge_pts, vertices, b, c, j, n)
                } else {
                    let (u, v) = (i as f64 / n as f64, j as f64 / n as f64);
                    verts.push([
                        pa[0] + u * (pb[0] - pa[0]) + v * (pc[0] - pa[0]),
                        pa[1] + u * (pb[1] - pa[1]) + v * (pc[1] - pa[1]),
                    ]);
                    verts.len() - 1
                };
                lattice.insert((i, j), id);
            }
        }
        for i in 0..n {
            for j in 0..(n - i) {
                tris.push([lattice[&(i, j)], lattice[&(i + 1, j)], lattice[&(i, j + 1)]]);
                if i + j + 1 < n {
                    tris.push([lattice[&(i + 1, j)], lattice[&(i + 1, j + 1)], lattice[&(i, j + 1)]]);
                }
            }
        }
    }
    Mesh::from_triangles(verts, &tris, order, Domain::Polygon { vertices: vertices.to_vec() })
}

/// The `t`-th of `n - 1` interior points on edge `(p, q)`, counted from `p`.
fn edge_point(
    verts: &mut Vec<[f64; 2]>,
    cache: &mut HashMap<(usize, usize), Vec<usize>>,
    poly: &[[f64; 2]],
    p: usize,
    q: usize,
    t: usize,
    n: usize,
) -> usize {
    let (lo, hi) = (p.min(q), p.max(q));
    let ids = cache.entry((lo, hi)).or_insert_with(|| {
        (1..n)
            .map(|s| {
                let u = s as f64 / n as f64;
                let (a, b) = (poly[lo], poly[hi]);
                verts.push([a[0] + u * (b[0] - a[0]), a[1] + u * (b[1] - a[1])]);
                verts.len() - 1
            })
            .collect()
    });
    let s = if p == lo { t } else { n - t };
    ids[s - 1]
}

fn cross(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])
}

fn in_triangle(p: [f64; 2], a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> bool {
    cross(a, b, p) >= 0.0 && cross(b, c, p) >= 0.0 && cross(c, a, p) >= 0.0
}

fn segments_intersect(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    let on = |p: [f64; 2], q: [f64; 2], r: [f64; 2]| {
        cross(p, q, r) == 0.0
            && r[0] >= p[0].min(q[0])
            && r[0] <= p[0].max(q[0])
            && r[1] >= p[1].min(q[1])
            && r[1] <= p[1].max(q[1])
    };
    on(c, d, a) || on(c, d, b) || on(a, b, c) || on(a, b, d)
}

/// Unit cell mesh with periodic identification of opposite sides.
#[derive(Debug, Clone)]
pub struct CellMesh {
    pub mesh: Mesh,
    /// Representative node of each node's periodic class.
    pub representative: Vec<usize>,
    pub n: usize,
}

/// `n x n` structured mesh of the unit cell; `n` must be even so that the
/// diagonal pattern is itself periodic.
pub fn cell_mesh(n: usize, order: Order) -> Result<CellMesh> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(FemError::Mesh(format!("periodic cell mesh needs an even cell count, got {n}")).into());
    }
    let mesh = unit_square_mesh(n, order)?;
    let scale = match order {
        Order::P1 => n as f64,
        Order::P2 => 2.0 * n as f64,
    };
    let m = scale as i64;
    let key = |p: [f64; 2]| ((p[0] * scale).round() as i64, (p[1] * scale).round() as i64);
    let mut lookup: HashMap<(i64, i64), usize> = HashMap::new();
    for (i, p) in mesh.nodes.iter().enumerate() {
        lookup.insert(key(*p), i);
    }
    let representative = mesh
        .nodes
        .iter()
        .map(|p| {
            let (a, b) = key(*p);
            lookup[&(a % m, b % m)]
        })
        .collect();
    Ok(CellMesh { mesh, representative, n })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_square_counts() {
        let m = unit_square_mesh(4, Order::P2).unwrap();
        assert_eq!(m.n_vertices, 25);
        assert_eq!(m.n_nodes(), 81);
        assert_eq!(m.n_elements(), 32);
        assert_eq!(m.on_boundary.iter().filter(|b| **b).count(), 32);
        assert!((m.area() - 1.0).abs() < 1e-14);
        assert_eq!(m.boundary_edges.len(), 16);
    }

    #[test]
    fn refinement_quarters_elements() {
        let m = unit_square_mesh(3, Order::P2).unwrap();
        let r = m.refined().unwrap();
        assert_eq!(r.n_elements(), 4 * m.n_elements());
        assert_eq!(r.n_vertices, m.n_nodes());
        assert!((r.area() - 1.0).abs() < 1e-14);
        assert!((r.h - 0.5 * m.h).abs() < 1e-14);
    }

    #[test]
    fn square_mesh_is_reflection_symmetric() {
        let m = unit_square_mesh(6, Order::P1).unwrap();
        let mut a: Vec<[i64; 6]> = Vec::new();
        let mut b: Vec<[i64; 6]> = Vec::new();
        let k = |x: f64| (x * 12.0).round() as i64;
        for t in m.triangles() {
            let mut p: Vec<(i64, i64)> = t.iter().map(|&i| (k(m.nodes[i][0]), k(m.nodes[i][1]))).collect();
            p.sort();
            a.push([p[0].0, p[0].1, p[1].0, p[1].1, p[2].0, p[2].1]);
            let mut q: Vec<(i64, i64)> = t.iter().map(|&i| (12 - k(m.nodes[i][0]), k(m.nodes[i][1]))).collect();
            q.sort();
            b.push([q[0].0, q[0].1, q[1].0, q[1].1, q[2].0, q[2].1]);
        }
        a.sort();
        b.sort();
        assert_eq!(a, b);
    }

    #[test]
    fn disk_area_and_boundary() {
        let m = disk_mesh(1.0, 8, Order::P2).unwrap();
        assert_eq!(m.n_vertices, 1 + 3 * 8 * 9);
        assert_eq!(m.n_elements(), 6 * 64);
        let exact_polygon = 0.5 * 48.0 * (2.0 * std::f64::consts::PI / 48.0).sin();
        assert!((m.area() - exact_polygon).abs() < 1e-12);
        for (i, p) in m.nodes[..m.n_vertices].iter().enumerate() {
            let on_circle = (p[0].hypot(p[1]) - 1.0).abs() < 1e-12;
            assert_eq!(on_circle, m.on_boundary[i]);
        }
    }

    #[test]
    fn polygon_is_conforming() {
        let l_shape = [[0.0, 0.0], [2.0, 0.0], [2.0, 1.0], [1.0, 1.0], [1.0, 2.0], [0.0, 2.0]];
        let m = polygon_mesh(&l_shape, 3, Order::P2).unwrap();
        assert!((m.area() - 3.0).abs() < 1e-12);
        // boundary length equals polygon perimeter
        let mut len = 0.0;
        for &(e, i) in &m.boundary_edges {
            let v = m.vertices_of(e);
            len += dist(v[i], v[(i + 1) % 3]);
        }
        assert!((len - 8.0).abs() < 1e-12);
        let bow_tie = [[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]];
        assert!(polygon_mesh(&bow_tie, 2, Order::P1).is_err());
    }

    #[test]
    fn rejects_degenerate_input() {
        let v = vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]];
        assert!(Mesh::from_triangles(v, &[[0, 1, 2]], Order::P1, Domain::Imported).is_err());
        assert!(cell_mesh(5, Order::P2).is_err());
    }

    #[test]
    fn cell_representatives() {
        let c = cell_mesh(4, Order::P2).unwrap();
        let classes: std::collections::BTreeSet<usize> = c.representative.iter().copied().collect();
        assert_eq!(classes.len(), 64);
        for (i, &r) in c.representative.iter().enumerate() {
            let (p, q) = (c.mesh.nodes[i], c.mesh.nodes[r]);
            assert!(q[0] < 1.0 && q[1] < 1.0);
            assert!(((p[0] - q[0]).rem_euclid(1.0)).min(1.0 - (p[0] - q[0]).rem_euclid(1.0)) < 1e-12);
        }
    }
}
