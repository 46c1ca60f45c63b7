//! One-dimensional Schrodinger-type problems `-r u'' + q(t) u = eta u` with
//! Dirichlet ends, discretized by quadratic finite elements on a uniform grid.

use crate::error::{EigenError, Result};
use crate::sparse::CsrMatrix;

use super::{smallest_eigenpairs, EigenOptions};

const GAUSS4_X: [f64; 4] = [
    -0.861_136_311_594_052_6,
    -0.339_981_043_584_856_3,
    0.339_981_043_584_856_3,
    0.861_136_311_594_052_6,
];
const GAUSS4_W: [f64; 4] = [
    0.347_854_845_137_453_9,
    0.652_145_154_862_546_1,
    0.652_145_154_862_546_1,
    0.347_854_845_137_453_9,
];

/// `-r u'' + q u = eta u` on `(a, b)`, `u(a) = u(b) = 0`.
pub struct LineProblem<'a> {
    pub a: f64,
    pub b: f64,
    pub r: f64,
    pub potential: &'a (dyn Fn(f64) -> f64 + Sync),
    pub cells: usize,
}

#[derive(Debug, Clone)]
pub struct LineSpectrum {
    pub values: Vec<f64>,
    /// Nodal values on `nodes`, including the zero end values, normalized in L2.
    pub vectors: Vec<Vec<f64>>,
    pub nodes: Vec<f64>,
    /// Half-width (oscillator) or length (half-line) of the truncated domain.
    pub truncation: f64,
    /// `eta_j(T) - eta_j(1.2 T)` for truncated unbounded problems.
    pub sensitivity: Vec<f64>,
}

fn basis(x: f64) -> ([f64; 3], [f64; 3]) {
    // x in [0, 1]; nodes 0, 1/2, 1
    (
        [2.0 * (x - 0.5) * (x - 1.0), 4.0 * x * (1.0 - x), 2.0 * x * (x - 0.5)],
        [4.0 * x - 3.0, 4.0 - 8.0 * x, 4.0 * x - 1.0],
    )
}

/// Solves a line problem for its lowest `count` eigenpairs.
pub fn solve_line(p: &LineProblem, count: usize) -> Result<LineSpectrum> {
    if !(p.b > p.a) || !(p.r > 0.0) || p.cells < 2 {
        return Err(EigenError::Invalid("line problem needs b > a, r > 0 and at least two cells".into()).into());
    }
    let n_cells = p.cells;
    let h = (p.b - p.a) / n_cells as f64;
    let n_nodes = 2 * n_cells + 1;
    let ndof = n_nodes - 2;
    if count > ndof {
        return Err(EigenError::Invalid(format!("{count} eigenpairs requested from {ndof} unknowns")).into());
    }
    let mut kt = Vec::with_capacity(9 * n_cells);
    let mut mt = Vec::with_capacity(9 * n_cells);
    let mut qmin = f64::INFINITY;
    for e in 0..n_cells {
        let x0 = p.a + e as f64 * h;
        let mut kl = [[0.0; 3]; 3];
        let mut ml = [[0.0; 3]; 3];
        for (gx, gw) in GAUSS4_X.iter().zip(GAUSS4_W) {
            let xi = 0.5 * (gx + 1.0);
            let w = 0.5 * gw * h;
            let (phi, dphi) = basis(xi);
            let q = (p.potential)(x0 + xi * h);
            if !q.is_finite() {
                return Err(EigenError::Invalid(format!("non-finite potential at t = {}", x0 + xi * h)).into());
            }
            qmin = qmin.min(q);
            for i in 0..3 {
                for j in 0..3 {
                    kl[i][j] += w * (p.r * dphi[i] * dphi[j] / (h * h) + q * phi[i] * phi[j]);
                    ml[i][j] += w * phi[i] * phi[j];
                }
            }
        }
        for i in 0..3 {
            let gi = 2 * e + i;
            if gi == 0 || gi == n_nodes - 1 {
                continue;
            }
            for j in 0..3 {
                let gj = 2 * e + j;
                if gj == 0 || gj == n_nodes - 1 {
                    continue;
                }
                kt.push((gi - 1, gj - 1, kl[i][j]));
                mt.push((gi - 1, gj - 1, ml[i][j]));
            }
        }
    }
    let k = CsrMatrix::from_triplets(ndof, kt);
    let m = CsrMatrix::from_triplets(ndof, mt);
    let lower = qmin + 0.5 * p.r * (std::f64::consts::PI / (p.b - p.a)).powi(2);
    let opts = EigenOptions { shift: Some(lower), ..EigenOptions::count(count) };
    let spec = smallest_eigenpairs(&k, &m, &opts)?;
    let nodes: Vec<f64> = (0..n_nodes).map(|i| p.a + 0.5 * h * i as f64).collect();
    let vectors = spec
        .vectors
        .iter()
        .map(|v| {
            let mut full = vec![0.0; n_nodes];
            full[1..n_nodes - 1].copy_from_slice(v);
            full
        })
        .collect();
    Ok(LineSpectrum { values: spec.values, vectors, nodes, truncation: p.b - p.a, sensitivity: Vec::new() })
}

/// Half-width used for the oscillator with `count` levels, in units of
/// `(r / c)^(1/4)`.
pub fn oscillator_truncation(count: usize) -> f64 {
    1.5 * (2.0 * (2.0 * count as f64 + 3.0)).sqrt()
}

/// Length used for the half-line problem with `count` levels, in units of
/// `(r / slope)^(1/3)`.
pub fn airy_truncation(count: usize) -> f64 {
    let k = count as f64;
    (3.0 * std::f64::consts::PI * (4.0 * k + 3.0) / 8.0).powf(2.0 / 3.0) + 12.0
}

/// `-r u'' + c t^2 u = eta u` on the line, truncated to `(-T, T)`.
pub fn harmonic_oscillator(r: f64, c: f64, count: usize, cells: usize) -> Result<LineSpectrum> {
    if !(r > 0.0 && c > 0.0) {
        return Err(EigenError::Invalid(format!("oscillator needs r > 0 and c > 0, got r = {r}, c = {c}")).into());
    }
    let len = (r / c).powf(0.25);
    let t = len * oscillator_truncation(count);
    let pot = move |x: f64| c * x * x;
    let mut base = solve_line(&LineProblem { a: -t, b: t, r, potential: &pot, cells }, count)?;
    let wide_cells = (cells as f64 * 1.2).round() as usize;
    let wide = solve_line(&LineProblem { a: -1.2 * t, b: 1.2 * t, r, potential: &pot, cells: wide_cells }, count)?;
    base.sensitivity = base.values.iter().zip(&wide.values).map(|(a, b)| a - b).collect();
    base.truncation = t;
    Ok(base)
}

/// `-r u'' + slope t u = eta u` on the half-line `t > 0`, truncated to `(0, T)`.
pub fn airy_halfline(r: f64, slope: f64, count: usize, cells: usize) -> Result<LineSpectrum> {
    if !(r > 0.0 && slope > 0.0) {
        return Err(EigenError::Invalid(format!("half-line problem needs r > 0 and slope > 0, got {r}, {slope}")).into());
    }
    let len = (r / slope).powf(1.0 / 3.0);
    let t = len * airy_truncation(count);
    let pot = move |x: f64| slope * x;
    let mut base = solve_line(&LineProblem { a: 0.0, b: t, r, potential: &pot, cells }, count)?;
    let wide_cells = (cells as f64 * 1.2).round() as usize;
    let wide = solve_line(&LineProblem { a: 0.0, b: 1.2 * t, r, potential: &pot, cells: wide_cells }, count)?;
    base.sensitivity = base.values.iter().zip(&wide.values).map(|(a, b)| a - b).collect();
    base.truncation = t;
    Ok(base)
}
