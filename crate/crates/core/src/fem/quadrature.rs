//! Quadrature rules on the reference triangle `{x, y >= 0, x + y <= 1}` and
//! on `[-1, 1]`.

use crate::error::{FemError, Result};

/// Points in reference coordinates with weights summing to 1/2.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleRule {
    pub degree: usize,
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl TriangleRule {
    /// A rule exact for polynomials up to `degree`.
    pub fn of_degree(degree: usize) -> Result<TriangleRule> {
        let (points, weights) = match degree {
            0 | 1 => (vec![[1.0 / 3.0, 1.0 / 3.0]], vec![0.5]),
            2 => {
                let (a, b) = (1.0 / 6.0, 2.0 / 3.0);
                (vec![[a, a], [b, a], [a, b]], vec![1.0 / 6.0; 3])
            }
            4 => {
                let (a, wa) = (0.445_948_490_915_965, 0.223_381_589_678_011);
                let (b, wb) = (0.091_576_213_509_771, 0.109_951_743_655_322);
                let pts = vec![[a, a], [1.0 - 2.0 * a, a], [a, 1.0 - 2.0 * a], [b, b], [1.0 - 2.0 * b, b], [b, 1.0 - 2.0 * b]];
                (pts, [wa, wa, wa, wb, wb, wb].iter().map(|w| 0.5 * w).collect())
            }
            3 | 5 => {
                let (a, wa) = (0.470_142_064_105_115, 0.132_394_152_788_506);
                let (b, wb) = (0.101_286_507_323_456, 0.125_939_180_544_827);
                let c = 1.0 / 3.0;
                let pts = vec![
                    [c, c],
                    [a, a],
                    [1.0 - 2.0 * a, a],
                    [a, 1.0 - 2.0 * a],
                    [b, b],
                    [1.0 - 2.0 * b, b],
                    [b, 1.0 - 2.0 * b],
                ];
                (pts, [0.225, wa, wa, wa, wb, wb, wb].iter().map(|w| 0.5 * w).collect())
            }
            d if d <= 30 => collapsed_rule(d.div_ceil(2) + 1),
            d => return Err(FemError::Mesh(format!("no triangle rule of degree {d}")).into()),
        };
        Ok(TriangleRule { degree, points, weights })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Gauss-Legendre product rule mapped to the triangle by collapsing one side.
fn collapsed_rule(n: usize) -> (Vec<[f64; 2]>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let mut pts = Vec::with_capacity(n * n);
    let mut wts = Vec::with_capacity(n * n);
    for i in 0..n {
        let u = 0.5 * (x[i] + 1.0);
        for j in 0..n {
            let v = 0.5 * (x[j] + 1.0);
            pts.push([u, v * (1.0 - u)]);
            wts.push(0.25 * w[i] * w[j] * (1.0 - u));
        }
    }
    (pts, wts)
}

/// `n`-point Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[n - 1 - i] = z;
        w[n - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn monomial_integral(p: u32, q: u32) -> f64 {
        // int_T x^p y^q = p! q! / (p + q + 2)!
        let f = |k: u32| (1..=k).map(|v| v as f64).product::<f64>();
        f(p) * f(q) / f(p + q + 2)
    }

    #[test]
    fn rules_integrate_monomials_exactly() {
        for degree in [1, 2, 4, 5, 6, 8, 10] {
            let r = TriangleRule::of_degree(degree).unwrap();
            for p in 0..=degree as u32 {
                for q in 0..=(degree as u32 - p) {
                    let s: f64 = r.points.iter().zip(&r.weights).map(|(x, w)| w * x[0].powi(p as i32) * x[1].powi(q as i32)).sum();
                    let e = monomial_integral(p, q);
                    assert!((s - e).abs() < 1e-14, "degree {degree}, x^{p} y^{q}: {s} vs {e}");
                }
            }
        }
    }

    #[test]
    fn gauss_legendre_exactness() {
        let (x, w) = gauss_legendre(5);
        for k in 0..10 {
            let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k)).sum();
            let e = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
            assert!((s - e).abs() < 1e-14);
        }
    }
}
