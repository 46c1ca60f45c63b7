//! Plain-text mesh exchange.
//!
//! Layout: a vertex count, one `x y` line per vertex, a triangle count, one
//! `i j k` line per triangle (0-based vertex indices), a boundary count and
//! one boundary vertex index per line. Blank lines and lines starting with
//! `#` are ignored. Quadratic nodes are regenerated on import.

use std::fmt::Write as _;

use crate::error::{FemError, Result};

use super::mesh::{Domain, Mesh, Order};

pub fn export_mesh(mesh: &Mesh) -> String {
    let mut s = String::new();
    let nv = mesh.n_vertices;
    let _ = writeln!(s, "{nv}");
    for p in &mesh.nodes[..nv] {
        let _ = writeln!(s, "{:?} {:?}", p[0], p[1]);
    }
    let tris = mesh.triangles();
    let _ = writeln!(s, "{}", tris.len());
    for t in &tris {
        let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
    }
    let boundary: Vec<usize> = (0..nv).filter(|&i| mesh.on_boundary[i]).collect();
    let _ = writeln!(s, "{}", boundary.len());
    for b in boundary {
        let _ = writeln!(s, "{b}");
    }
    s
}

pub fn import_mesh(text: &str, order: Order) -> Result<Mesh> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let mut next = |what: &str| -> Result<(usize, Vec<&str>)> {
        let (n, l) = lines.next().ok_or_else(|| FemError::Io(format!("unexpected end of file while reading {what}")))?;
        Ok((n, l.split_whitespace().collect()))
    };
    let count = |(n, f): (usize, Vec<&str>), what: &str| -> Result<usize> {
        f.first()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| FemError::Io(format!("line {n}: expected {what} count")).into())
    };
    let nv = count(next("vertex count")?, "vertex")?;
    let mut verts = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (n, f) = next("vertices")?;
        let p: Vec<f64> = f.iter().filter_map(|v| v.parse().ok()).collect();
        if f.len() != 2 || p.len() != 2 {
            return Err(FemError::Io(format!("line {n}: expected two coordinates")).into());
        }
        verts.push([p[0], p[1]]);
    }
    let nt = count(next("triangle count")?, "triangle")?;
    let mut tris = Vec::with_capacity(nt);
    for _ in 0..nt {
        let (n, f) = next("triangles")?;
        let t: Vec<usize> = f.iter().filter_map(|v| v.parse().ok()).collect();
        if f.len() != 3 || t.len() != 3 {
            return Err(FemError::Io(format!("line {n}: expected three vertex indices")).into());
        }
        tris.push([t[0], t[1], t[2]]);
    }
    let nb = count(next("boundary count")?, "boundary")?;
    let mut listed = Vec::with_capacity(nb);
    for _ in 0..nb {
        let (n, f) = next("boundary indices")?;
        let b: usize = f
            .first()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| FemError::Io(format!("line {n}: expected a vertex index")))?;
        listed.push(b);
    }
    let mesh = Mesh::from_triangles(verts, &tris, order, Domain::Imported)?;
    let mut derived: Vec<usize> = (0..mesh.n_vertices).filter(|&i| mesh.on_boundary[i]).collect();
    listed.sort_unstable();
    derived.sort_unstable();
    if listed != derived {
        return Err(FemError::Io("boundary list does not match the triangulation".into()).into());
    }
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::mesh::disk_mesh;

    #[test]
    fn round_trip() {
        let m = disk_mesh(1.5, 3, Order::P2).unwrap();
        let text = export_mesh(&m);
        let back = import_mesh(&text, Order::P2).unwrap();
        assert_eq!(back.nodes, m.nodes);
        assert_eq!(back.triangles(), m.triangles());
        assert_eq!(back.on_boundary, m.on_boundary);
    }

    #[test]
    fn reports_bad_lines() {
        let err = import_mesh("3\n0 0\n1 0\n0 x\n1\n0 1 2\n3\n0\n1\n2\n", Order::P1).unwrap_err();
        assert!(err.to_string().contains("line 4"), "{err}");
    }
}
