//! Generalized symmetric eigenproblems `K v = lambda M v`.
//!
//! Large problems use shift-invert Lanczos in the `M` inner product with full
//! reorthogonalization, locking of converged pairs, an extra pass from a
//! fresh start vector to pick up missed multiplicities, and a final
//! Rayleigh-Ritz refinement. Small problems are solved densely.

mod line;

pub use line::{
    airy_halfline, airy_truncation, harmonic_oscillator, oscillator_truncation, solve_line, LineProblem,
    LineSpectrum,
};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{EigenError, Result};
use crate::sparse::{dot, CsrMatrix, SpdFactor};

/// How eigenvectors are scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `v^T M v = 1` with the assembled (unweighted) mass matrix.
    L2,
    /// `v^T M v = 1` with a weighted mass matrix, e.g. `beta`.
    MassWeighted,
}

#[derive(Debug, Clone)]
pub struct EigenOptions {
    pub count: usize,
    /// Relative tolerance for the Ritz residual estimates.
    pub tol: f64,
    /// Initial shift; `None` starts at zero and backs off if needed.
    pub shift: Option<f64>,
    pub seed: u64,
    /// Problems up to this size are solved densely.
    pub dense_limit: usize,
    pub max_restarts: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions { count: 6, tol: 1e-11, shift: None, seed: 0x5eed, dense_limit: 300, max_restarts: 40 }
    }
}

impl EigenOptions {
    pub fn count(count: usize) -> Self {
        EigenOptions { count, ..Default::default() }
    }
}

/// Eigenpairs in ascending order with `v^T M v = 1` and a positive
/// coefficient sum (or positive largest entry when the sum vanishes).
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    /// `|K v - lambda M v| / |K v|` per pair.
    pub residuals: Vec<f64>,
    pub normalization: Normalization,
    pub shift: f64,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn gap(&self) -> Option<f64> {
        (self.values.len() >= 2).then(|| self.values[1] - self.values[0])
    }
}

/// Lowest `opts.count` eigenpairs of the pencil `(K, M)`; `M` must be SPD
/// and `K` symmetric and bounded below.
pub fn smallest_eigenpairs(k: &CsrMatrix, m: &CsrMatrix, opts: &EigenOptions) -> Result<Spectrum> {
    let n = k.n();
    if m.n() != n {
        return Err(EigenError::Invalid("stiffness and mass sizes differ".into()).into());
    }
    if opts.count == 0 || opts.count > n {
        return Err(EigenError::Invalid(format!("cannot compute {} eigenpairs of a {n}x{n} pencil", opts.count)).into());
    }
    let (values, vectors, shift) = if n <= opts.dense_limit {
        let (v, x) = dense_pencil(k, m, opts.count)?;
        (v, x, opts.shift.unwrap_or(0.0))
    } else {
        lanczos(k, m, opts)?
    };
    let mut spec = Spectrum { values, vectors, residuals: Vec::new(), normalization: Normalization::L2, shift };
    finalize(k, m, &mut spec);
    Ok(spec)
}

fn finalize(k: &CsrMatrix, m: &CsrMatrix, spec: &mut Spectrum) {
    spec.residuals.clear();
    for (lam, v) in spec.values.iter().zip(spec.vectors.iter_mut()) {
        let nrm = m.form(v, v).sqrt();
        v.iter_mut().for_each(|x| *x /= nrm);
        fix_sign(v);
        let kv = k.mul_vec(v);
        let mv = m.mul_vec(v);
        let r: f64 = kv.iter().zip(&mv).map(|(a, b)| (a - lam * b).powi(2)).sum::<f64>().sqrt();
        let kn = dot(&kv, &kv).sqrt();
        spec.residuals.push(if kn > 0.0 { r / kn } else { r });
    }
}

/// Flips `v` so that its entries sum to a positive number; if the sum is
/// negligible the entry of largest magnitude is made positive.
pub fn fix_sign(v: &mut [f64]) {
    let sum: f64 = v.iter().sum();
    let l1: f64 = v.iter().map(|x| x.abs()).sum();
    let flip = if sum.abs() > 1e-8 * l1 {
        sum < 0.0
    } else {
        let (mut best, mut bi) = (0.0, 0);
        for (i, x) in v.iter().enumerate() {
            if x.abs() > best + 1e-12 * l1 {
                best = x.abs();
                bi = i;
            }
        }
        v.get(bi).is_some_and(|x| *x < 0.0)
    };
    if flip {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn dense_pencil(k: &CsrMatrix, m: &CsrMatrix, count: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = k.n();
    let kd = DMatrix::from_fn(n, n, |i, j| 0.5 * (k.get(i, j) + k.get(j, i)));
    let md = DMatrix::from_fn(n, n, |i, j| 0.5 * (m.get(i, j) + m.get(j, i)));
    let (vals, vecs) = dense_generalized(&kd, &md)?;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
    let values = idx[..count].iter().map(|&i| vals[i]).collect();
    let vectors = idx[..count].iter().map(|&i| vecs.column(i).iter().copied().collect()).collect();
    Ok((values, vectors))
}

/// Dense `K x = lambda M x` via Cholesky of `M`; columns of the returned
/// matrix are `M`-orthonormal eigenvectors.
fn dense_generalized(kd: &DMatrix<f64>, md: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let chol = md
        .clone()
        .cholesky()
        .ok_or_else(|| EigenError::Factorization("mass matrix is not positive definite".into()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| EigenError::Factorization("singular mass factor".into()))?;
    let c = &linv * kd * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let x = linv.transpose() * eig.eigenvectors;
    Ok((eig.eigenvalues.iter().copied().collect(), x))
}

struct Pass {
    /// Ritz values `lambda` ascending with vectors and convergence flags.
    ritz: Vec<(f64, Vec<f64>, bool)>,
}

/// One Lanczos run for the operator `(K - sigma M)^{-1} M`, keeping the basis
/// `M`-orthogonal to `locked`.
#[allow(clippy::too_many_arguments)]
fn lanczos_pass(
    fac: &SpdFactor,
    m: &CsrMatrix,
    sigma: f64,
    locked: &[Vec<f64>],
    locked_m: &[Vec<f64>],
    start: Vec<f64>,
    max_dim: usize,
    want: usize,
    tol: f64,
) -> Pass {
    let n = m.n();
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(max_dim);
    let mut mq: Vec<Vec<f64>> = Vec::with_capacity(max_dim);
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();

    let mut w = start;
    orthogonalize(&mut w, locked, locked_m, &q, &mq, m);
    let mut mw = m.mul_vec(&w);
    let mut b = dot(&w, &mw).sqrt();
    let mut ritz = Vec::new();
    for j in 0..max_dim {
        if !(b > 0.0) || !b.is_finite() {
            break;
        }
        w.iter_mut().for_each(|x| *x /= b);
        mw.iter_mut().for_each(|x| *x /= b);
        if j > 0 {
            beta.push(b);
        }
        q.push(std::mem::take(&mut w));
        mq.push(std::mem::take(&mut mw));

        let mut z = fac.solve(&mq[j]);
        let a = dot(&z, &mq[j]);
        alpha.push(a);
        orthogonalize(&mut z, locked, locked_m, &q, &mq, m);
        mw = m.mul_vec(&z);
        b = dot(&z, &mw).max(0.0).sqrt();
        w = z;

        let dim = j + 1;
        let check = dim >= want.min(n) && (dim % 5 == 0 || dim == max_dim || b <= 1e-14 * a.abs());
        if check {
            ritz = ritz_pairs(&alpha, &beta, b, &q, sigma, tol);
            let done = ritz.len() >= want && ritz.iter().take(want).all(|r| r.2);
            if done {
                break;
            }
        }
        if b <= 1e-14 * a.abs().max(1e-300) {
            break;
        }
    }
    if ritz.is_empty() && !alpha.is_empty() {
        ritz = ritz_pairs(&alpha, &beta, b, &q, sigma, tol);
    }
    Pass { ritz }
}

fn ritz_pairs(
    alpha: &[f64],
    beta: &[f64],
    b_next: f64,
    q: &[Vec<f64>],
    sigma: f64,
    tol: f64,
) -> Vec<(f64, Vec<f64>, bool)> {
    let d = alpha.len();
    let t = DMatrix::from_fn(d, d, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j {
            beta[i]
        } else if j + 1 == i {
            beta[j]
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(t);
    let mut out: Vec<(f64, Vec<f64>, bool)> = Vec::new();
    for i in 0..d {
        let theta = eig.eigenvalues[i];
        if theta == 0.0 {
            continue;
        }
        let s = eig.eigenvectors.column(i);
        let est = (b_next * s[d - 1]).abs();
        let converged = est <= tol * theta.abs();
        let n = q[0].len();
        let mut x = vec![0.0; n];
        for (k, qk) in q.iter().enumerate() {
            let c = s[k];
            for (xi, qi) in x.iter_mut().zip(qk) {
                *xi += c * qi;
            }
        }
        out.push((sigma + 1.0 / theta, x, converged));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// Two rounds of classical Gram-Schmidt in the `M` inner product.
fn orthogonalize(w: &mut [f64], locked: &[Vec<f64>], locked_m: &[Vec<f64>], q: &[Vec<f64>], mq: &[Vec<f64>], _m: &CsrMatrix) {
    for _ in 0..2 {
        for (v, mv) in locked.iter().zip(locked_m).chain(q.iter().zip(mq)) {
            let c = dot(w, mv);
            for (wi, vi) in w.iter_mut().zip(v) {
                *wi -= c * vi;
            }
        }
    }
}

fn random_vector(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0 + 0.25).collect()
}

/// Factors `K - sigma M`, lowering `sigma` until the factorization succeeds.
/// `floor` is a shift known to be below the spectrum, if any.
fn factor_shifted(k: &CsrMatrix, m: &CsrMatrix, mut sigma: f64, floor: Option<f64>) -> Result<(f64, SpdFactor)> {
    let scale = {
        let kd = k.diagonal();
        let md = m.diagonal();
        let num: f64 = kd.iter().map(|x| x.abs()).sum();
        let den: f64 = md.iter().sum();
        (num / den.max(1e-300)).max(1e-12)
    };
    let mut step = 1e-3 * scale.max(sigma.abs());
    for _ in 0..80 {
        if let Ok(f) = SpdFactor::new(&k.combine(1.0, m, -sigma)) {
            return Ok((sigma, f));
        }
        sigma = match floor {
            Some(fl) if fl < sigma => 0.5 * (sigma + fl),
            _ => {
                let s = sigma - step;
                step *= 2.0;
                s
            }
        };
    }
    Err(EigenError::Factorization("could not find a shift below the spectrum".into()).into())
}

fn lanczos(k: &CsrMatrix, m: &CsrMatrix, opts: &EigenOptions) -> Result<(Vec<f64>, Vec<Vec<f64>>, f64)> {
    let n = k.n();
    let want = opts.count;
    let (mut sigma, mut fac) = factor_shifted(k, m, opts.shift.unwrap_or(0.0), None)?;
    let mut good_sigma = sigma;

    let mut locked: Vec<Vec<f64>> = Vec::new();
    let mut locked_m: Vec<Vec<f64>> = Vec::new();
    let mut locked_vals: Vec<f64> = Vec::new();
    let mut start = random_vector(n, opts.seed);
    let mut seed = opts.seed;
    let mut fresh = true;

    for _ in 0..opts.max_restarts {
        let remaining = if locked.len() >= want { 1 } else { want - locked.len() };
        let max_dim = (n - locked.len()).min((3 * remaining + 40).max(60));
        let pass = lanczos_pass(&fac, m, sigma, &locked, &locked_m, start.clone(), max_dim, remaining, opts.tol);

        let cutoff = if locked.len() >= want { locked_vals[want - 1] } else { f64::INFINITY };
        let mut added = false;
        let mut pending: Option<Vec<f64>> = None;
        for (lam, x, conv) in pass.ritz.iter() {
            if *lam >= cutoff - 1e-10 * cutoff.abs() {
                break;
            }
            if !*conv {
                pending = Some(x.clone());
                break;
            }
            let mx = m.mul_vec(x);
            let nrm = dot(x, &mx).sqrt();
            locked.push(x.iter().map(|v| v / nrm).collect());
            locked_m.push(mx.iter().map(|v| v / nrm).collect());
            locked_vals.push(*lam);
            added = true;
        }
        sort_locked(&mut locked, &mut locked_m, &mut locked_vals);

        if locked.len() >= want && pending.is_none() {
            // Stop once a run from a fresh random vector finds nothing new.
            if fresh && !added {
                break;
            }
            seed = seed.wrapping_add(0x9e37_79b9);
            start = random_vector(n, seed);
            fresh = true;
            continue;
        }
        fresh = false;
        start = match pending {
            Some(x) => x,
            None => {
                seed = seed.wrapping_add(0x9e37_79b9);
                fresh = true;
                random_vector(n, seed)
            }
        };

        // Move the shift towards the wanted cluster when that is safe.
        let est: Vec<f64> = pass.ritz.iter().map(|r| r.0).take(want).collect();
        if let (Some(&lo), Some(&hi)) = (est.first(), est.last()) {
            let mut target = lo - 0.5 * (hi - lo).max(1e-6 * lo.abs());
            if let Some(&l0) = locked_vals.first() {
                target = target.min(l0 - 1e-3 * (hi - l0).max(1e-6 * l0.abs()));
            }
            if target > sigma {
                let (s, f) = factor_shifted(k, m, target, Some(good_sigma))?;
                if s > sigma {
                    sigma = s;
                    fac = f;
                    good_sigma = s;
                }
            }
        }
    }
    if locked.len() < want {
        return Err(EigenError::NotConverged(format!("{} of {want} eigenpairs converged", locked.len())).into());
    }
    locked.truncate(want);
    let refined = rayleigh_ritz(k, m, &fac, &locked)?;
    Ok((refined.0, refined.1, sigma))
}

fn sort_locked(x: &mut Vec<Vec<f64>>, mx: &mut Vec<Vec<f64>>, vals: &mut Vec<f64>) {
    let mut idx: Vec<usize> = (0..vals.len()).collect();
    idx.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
    *x = idx.iter().map(|&i| std::mem::take(&mut x[i])).collect();
    *mx = idx.iter().map(|&i| std::mem::take(&mut mx[i])).collect();
    *vals = idx.iter().map(|&i| vals[i]).collect();
}

/// One step of subspace iteration followed by Rayleigh-Ritz on the result.
fn rayleigh_ritz(k: &CsrMatrix, m: &CsrMatrix, fac: &SpdFactor, x: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let p = x.len();
    let y: Vec<Vec<f64>> = x.iter().map(|v| fac.solve(&m.mul_vec(v))).collect();
    let ky: Vec<Vec<f64>> = y.iter().map(|v| k.mul_vec(v)).collect();
    let my: Vec<Vec<f64>> = y.iter().map(|v| m.mul_vec(v)).collect();
    let kr = DMatrix::from_fn(p, p, |i, j| 0.5 * (dot(&y[i], &ky[j]) + dot(&y[j], &ky[i])));
    let mr = DMatrix::from_fn(p, p, |i, j| 0.5 * (dot(&y[i], &my[j]) + dot(&y[j], &my[i])));
    let (vals, c) = dense_generalized(&kr, &mr)?;
    let mut idx: Vec<usize> = (0..p).collect();
    idx.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
    let n = x[0].len();
    let mut values = Vec::with_capacity(p);
    let mut vectors = Vec::with_capacity(p);
    for &i in &idx {
        let mut v = vec![0.0; n];
        for (j, yj) in y.iter().enumerate() {
            let cj = c[(j, i)];
            for (vi, yi) in v.iter_mut().zip(yj) {
                *vi += cj * yi;
            }
        }
        values.push(vals[i]);
        vectors.push(v);
    }
    Ok((values, vectors))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_laplacian(n: usize) -> (CsrMatrix, CsrMatrix) {
        let h = 1.0 / (n + 1) as f64;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0 / (h * h)));
            if i + 1 < n {
                t.push((i, i + 1, -1.0 / (h * h)));
                t.push((i + 1, i, -1.0 / (h * h)));
            }
        }
        (CsrMatrix::from_triplets(n, t), CsrMatrix::identity(n))
    }

    fn exact(n: usize, j: usize) -> f64 {
        let h = 1.0 / (n + 1) as f64;
        let s = ((j + 1) as f64 * std::f64::consts::PI * h / 2.0).sin();
        4.0 * s * s / (h * h)
    }

    #[test]
    fn lanczos_matches_closed_form_fd_eigenvalues() {
        let n = 2000;
        let (k, m) = fd_laplacian(n);
        let s = smallest_eigenpairs(&k, &m, &EigenOptions::count(5)).unwrap();
        for j in 0..5 {
            assert!((s.values[j] - exact(n, j)).abs() / exact(n, j) < 1e-10, "{j}: {}", s.values[j]);
            assert!(s.residuals[j] < 1e-8, "residual {}", s.residuals[j]);
        }
        assert!(s.vectors[0].iter().sum::<f64>() > 0.0);
    }

    #[test]
    fn dense_and_lanczos_agree() {
        let n = 250;
        let (k, m) = fd_laplacian(n);
        let d = smallest_eigenpairs(&k, &m, &EigenOptions::count(4)).unwrap();
        let l = smallest_eigenpairs(&k, &m, &EigenOptions { dense_limit: 10, ..EigenOptions::count(4) }).unwrap();
        for j in 0..4 {
            assert!((d.values[j] - l.values[j]).abs() < 1e-9 * d.values[j]);
        }
    }

    #[test]
    fn finds_repeated_eigenvalues() {
        // two decoupled copies of the same chain
        let n = 400;
        let (k1, _) = fd_laplacian(n);
        let mut t = Vec::new();
        for i in 0..n {
            for (j, v) in k1.row(i) {
                t.push((i, j, v));
                t.push((i + n, j + n, v));
            }
        }
        let k = CsrMatrix::from_triplets(2 * n, t);
        let m = CsrMatrix::identity(2 * n);
        let s = smallest_eigenpairs(&k, &m, &EigenOptions::count(4)).unwrap();
        assert!((s.values[0] - exact(n, 0)).abs() < 1e-8 * exact(n, 0));
        assert!((s.values[1] - exact(n, 0)).abs() < 1e-8 * exact(n, 0));
        assert!((s.values[2] - exact(n, 1)).abs() < 1e-8 * exact(n, 1));
        assert!((s.values[3] - exact(n, 1)).abs() < 1e-8 * exact(n, 1));
    }

    #[test]
    fn large_offset_spectrum_uses_adaptive_shift() {
        let n = 1500;
        let (k, m) = fd_laplacian(n);
        let big = k.combine(1.0, &m, 1e7);
        let s = smallest_eigenpairs(&big, &m, &EigenOptions::count(3)).unwrap();
        for j in 0..3 {
            let e = exact(n, j) + 1e7;
            assert!((s.values[j] - e).abs() < 1e-10 * e, "{} vs {e}", s.values[j]);
        }
    }

    #[test]
    fn rejects_bad_counts() {
        let (k, m) = fd_laplacian(5);
        assert!(smallest_eigenpairs(&k, &m, &EigenOptions::count(0)).is_err());
        assert!(smallest_eigenpairs(&k, &m, &EigenOptions::count(6)).is_err());
    }
}
