//! Acceptance suite: one PASS/FAIL line per criterion. Runs as a plain
//! binary so the lines are always printed; exits nonzero on any failure.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use wgspec_core::coefficient::Coefficient;
use wgspec_core::config::parse_config;
use wgspec_core::cross_section::{
    compute_b, solve_auxiliaries, solve_auxiliaries_inhomogeneous, solve_homogenized_cs, solve_inhomogeneous_cs, CsOptions,
};
use wgspec_core::effective::{
    compute_potential_homogenized, compute_potential_inhomogeneous, effective_spectrum, homogenized_integrals,
    q_xi_simplified, q_xi_unsimplified, SpectrumOptions,
};
use wgspec_core::eigensolve::{airy_halfline, harmonic_oscillator};
use wgspec_core::fem::{centered_square_mesh, unit_square_mesh, Mesh, Order};
use wgspec_core::geometry::{build_geometry, Profile, WaveguideGeometry};
use wgspec_core::homogenization::{homogenize, CellOptions, HomogenizedTensors};
use wgspec_core::localization::concentration_diagnostic;
use wgspec_core::pipeline::{run, RunContext};
use wgspec_core::verification::{
    convergence_study, direct_tube_oracle, identity_checks, linear_fit, FloorEstimate, OracleOptions, StudyCase,
    StudyOptions,
};
use wgspec_core::Execution;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn layered() -> Coefficient {
    Coefficient::function(|y| if y[0] < 0.5 { 1.0 } else { 4.0 })
}

const SMOOTH_2D: &str = "2 + cos(2*pi*y1) + 0.5*sin(2*pi*(y1 + y2))";

fn geometry(k: &str, alpha: &str) -> WaveguideGeometry {
    build_geometry(1.0, Profile::expr(k).unwrap(), Profile::expr(alpha).unwrap(), Profile::Constant(0.0), 257).unwrap()
}

fn cell_tensors(a: &Coefficient, resolution: usize) -> HomogenizedTensors {
    homogenize(a, &CellOptions { resolution, ..Default::default() }).unwrap().1
}

/// Straight tube, `a = 1`: effective spectrum against the separable formula.
fn criterion_1() -> Outcome {
    let start = Instant::now();
    let t = cell_tensors(&Coefficient::Constant(1.0), 8);
    let mesh = unit_square_mesh(64, Order::P2).unwrap();
    let geom = WaveguideGeometry::straight(1.0).unwrap();
    let cs_opts = CsOptions::default();
    let cs = solve_homogenized_cs(&mesh, t.q, 2, &cs_opts).unwrap();
    let aux = solve_auxiliaries(&mesh, &t, &cs, false, &cs_opts).unwrap();
    let model = compute_potential_homogenized(&geom, &mesh, &t, &cs, &aux, &cs_opts).unwrap();
    let scales = [0.1, 0.05, 0.02];
    let spec = effective_spectrum(&model, 4, &scales, &SpectrumOptions::default()).unwrap();
    let mut worst: f64 = 0.0;
    for (k, eps) in scales.iter().enumerate() {
        for j in 0..4 {
            let exact = 2.0 * PI * PI / (eps * eps) + ((j + 1) as f64 * PI).powi(2);
            worst = worst.max(rel(spec.lambda[k][j], exact));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(worst < 1e-3 && secs < 30.0, format!("max relative error {worst:.2e}, {secs:.1} s"))
}

/// Layered and smooth cell tensors: analytic values, symmetry and bounds.
fn criterion_2() -> Outcome {
    let t = cell_tensors(&layered(), 64);
    let q_err = [rel(t.q[0][0], 1.6), rel(t.q[1][1], 2.5), t.q[0][1].abs(), t.q[1][0].abs()]
        .into_iter()
        .fold(0.0f64, f64::max);
    let abar_err = (t.abar - 2.5).abs();
    let sym = (t.q[0][1] - t.q[1][0]).abs();
    let mut bounds = Vec::new();
    for a in [layered(), Coefficient::expr_y("2 + cos(2*pi*y1)").unwrap(), Coefficient::expr_y(SMOOTH_2D).unwrap()] {
        let t = cell_tensors(&a, 64);
        let ev = t.q_eigenvalues();
        let slack = 1e-10 * t.abar;
        bounds.push(t.harmonic_mean - slack <= ev[0] && ev[1] <= t.abar + slack);
    }
    let ok = abar_err < 1e-12 && q_err < 1e-3 && sym < 1e-12 && bounds.iter().all(|b| *b);
    check(ok, format!("abar error {abar_err:.1e}, Q error {q_err:.2e}, symmetry defect {sym:.1e}, bounds {bounds:?}"))
}

/// Curvature rate for `a = 1` and the layered intercept fit.
fn criterion_3() -> Outcome {
    let start = Instant::now();
    let geom = geometry("1 + 0.5*s", "0.3");
    let one = Coefficient::Constant(1.0);
    let mesh = unit_square_mesh(32, Order::P2).unwrap();
    let s = 0.5;
    let scales: Vec<f64> = (3..=6).map(|k| 0.5f64.powi(k)).collect();
    let report = convergence_study(StudyCase::BetaOnly, &geom, &one, &mesh, s, &scales, &StudyOptions::default()).unwrap();
    let xi = geom.xi(s).unwrap();
    let xi2 = xi[0] * xi[0] + xi[1] * xi[1];
    let errors: Vec<f64> = scales
        .iter()
        .zip(&report.details)
        .map(|(d, mu)| (mu[0] - report.reference + 0.25 * d * d * xi2).abs())
        .collect();
    let (lx, ly): (Vec<f64>, Vec<f64>) = scales.iter().zip(&errors).map(|(d, e)| (d.ln(), e.ln())).unzip();
    let slope = linear_fit(&lx, &ly).map_or(f64::NAN, |f| f.1);
    let floor_ok = report.mesh_floor.is_some_and(|f| f < 0.1 * errors[errors.len() - 1]);
    let beta_secs = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let straight = WaveguideGeometry::straight(1.0).unwrap();
    let fine = unit_square_mesh(256, Order::P2).unwrap();
    let opts = StudyOptions {
        cell: CellOptions { resolution: 16, ..Default::default() },
        floor: FloorEstimate::Skip,
        ..Default::default()
    };
    let eps = [0.125, 0.0625, 0.03125];
    let layer = convergence_study(StudyCase::HomogenizeOnly, &straight, &layered(), &fine, 0.5, &eps, &opts).unwrap();
    let intercept = layer.intercept.unwrap_or(f64::NAN);
    let q_h = layer.second_order;
    let layer_secs = start.elapsed().as_secs_f64();
    let ok = slope >= 2.5 && floor_ok && rel(intercept, q_h) < 0.1 && beta_secs < 300.0 && layer_secs < 300.0;
    check(
        ok,
        format!(
            "slope {slope:.3} ({beta_secs:.1} s); intercept {intercept:.5} vs q_H {q_h:.5}, rel {:.2e} ({layer_secs:.1} s)",
            rel(intercept, q_h)
        ),
    )
}

/// Integration-by-parts identities on the unit square at `n = 96`.
fn criterion_4() -> Outcome {
    let t = cell_tensors(&Coefficient::expr_y(SMOOTH_2D).unwrap(), 64);
    let mesh = unit_square_mesh(96, Order::P2).unwrap();
    let opts = CsOptions::default();
    let cs = solve_homogenized_cs(&mesh, t.q, 2, &opts).unwrap();
    let aux = solve_auxiliaries(&mesh, &t, &cs, true, &opts).unwrap();
    let mut worst: f64 = 0.0;
    for xi in [[1.0, 0.0], [0.8, -0.6], [-0.4, 1.3]] {
        let table = identity_checks(&mesh, &t, &cs, &aux, xi, &opts).unwrap();
        for name in ["x_gradient_1", "x_gradient_2", "what_contraction", "p_q_relation"] {
            worst = worst.max(table.get(name).unwrap().abs());
        }
    }
    check(worst < 1e-4, format!("max residual {worst:.2e}"))
}

/// Simplified and unsimplified curvature potentials on two pairs.
fn criterion_5() -> Outcome {
    let mesh = unit_square_mesh(96, Order::P2).unwrap();
    let opts = CsOptions::default();
    let pairs = [("2 + cos(2*pi*y1)", geometry("1 + 0.5*s", "0.3"), 0.5), (SMOOTH_2D, geometry("2 - s^2", "pi*s"), 0.3)];
    let mut details = Vec::new();
    let mut worst: f64 = 0.0;
    for (a, geom, s) in pairs {
        let t = cell_tensors(&Coefficient::expr_y(a).unwrap(), 64);
        let cs = solve_homogenized_cs(&mesh, t.q, 2, &opts).unwrap();
        let aux = solve_auxiliaries(&mesh, &t, &cs, true, &opts).unwrap();
        let ints = homogenized_integrals(&mesh, &t, &cs, &aux, &opts).unwrap();
        let xi = geom.xi(s).unwrap();
        let simple = q_xi_simplified(&ints, &t, xi);
        let full = q_xi_unsimplified(&ints, &t, xi).unwrap();
        let r = rel(full, simple);
        worst = worst.max(r);
        details.push(format!("{simple:.8} vs {full:.8}"));
    }
    check(worst < 1e-6, format!("{}, max relative difference {worst:.2e}", details.join("; ")))
}

/// `Ai(x)` from its Maclaurin series.
fn airy_ai(x: f64) -> f64 {
    const AI0: f64 = 0.355_028_053_887_817_2;
    const AIP0: f64 = 0.258_819_403_792_806_8;
    let x3 = x * x * x;
    let (mut f, mut g) = (1.0, x);
    let (mut tf, mut tg) = (1.0, x);
    for k in 0..200 {
        let k = k as f64;
        tf *= x3 / ((3.0 * k + 2.0) * (3.0 * k + 3.0));
        tg *= x3 / ((3.0 * k + 3.0) * (3.0 * k + 4.0));
        f += tf;
        g += tg;
        if tf.abs() < 1e-18 * f.abs().max(1.0) && tg.abs() < 1e-18 * g.abs().max(1.0) {
            break;
        }
    }
    AI0 * f - AIP0 * g
}

/// Magnitudes of the first `count` zeros of `Ai`, by scanning and bisection.
fn airy_zeros(count: usize) -> Vec<f64> {
    let mut zeros = Vec::new();
    let step = 0.01;
    let mut x = 0.0;
    while zeros.len() < count {
        let (a, b) = (x, x - step);
        if airy_ai(a).signum() != airy_ai(b).signum() {
            let (mut lo, mut hi) = (b, a);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if airy_ai(mid).signum() == airy_ai(lo).signum() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            zeros.push(-0.5 * (lo + hi));
        }
        x = b;
    }
    zeros
}

/// Oscillator and half-line spectra against closed forms, and exact scaling.
fn criterion_6() -> Outcome {
    let cells = 2048;
    let mut osc: f64 = 0.0;
    for (r, c) in [(1.0, 1.0), (0.7, 2.3)] {
        let sp = harmonic_oscillator(r, c, 6, cells).unwrap();
        for j in 0..6 {
            osc = osc.max(rel(sp.values[j], (2 * j + 1) as f64 * (r * c).sqrt()));
        }
    }
    let zeros = airy_zeros(4);
    let known = [2.338_107_410_459_767, 4.087_949_444_130_97, 5.520_559_828_095_551, 6.786_708_090_071_759];
    let oracle_err = zeros.iter().zip(known).fold(0.0f64, |m, (z, k)| m.max(rel(*z, k)));
    let mut airy: f64 = 0.0;
    for (r, slope) in [(1.0, 1.0), (1.7, 0.6)] {
        let sp = airy_halfline(r, slope, 4, cells).unwrap();
        for (v, z) in sp.values.iter().zip(&zeros) {
            airy = airy.max(rel(*v, z * (r * slope * slope).cbrt()));
        }
    }
    let base_o = harmonic_oscillator(1.0, 1.0, 6, cells).unwrap();
    let base_a = airy_halfline(1.0, 1.0, 4, cells).unwrap();
    let mut scaling: f64 = 0.0;
    for (r, c) in [(0.25, 9.0), (3.0, 0.5)] {
        let o = harmonic_oscillator(r, c, 6, cells).unwrap();
        let a = airy_halfline(r, c, 4, cells).unwrap();
        for j in 0..6 {
            scaling = scaling.max(rel(o.values[j], base_o.values[j] * (r * c).sqrt()));
        }
        for j in 0..4 {
            scaling = scaling.max(rel(a.values[j], base_a.values[j] * (r * c * c).cbrt()));
        }
    }
    let ok = osc < 1e-4 && airy < 1e-4 && oracle_err < 1e-9 && scaling < 1e-10;
    check(
        ok,
        format!("oscillator {osc:.1e}, Airy {airy:.1e} (series zeros vs tables {oracle_err:.1e}), scaling {scaling:.1e}"),
    )
}

/// Direct three-dimensional oracle against the propagation model.
fn criterion_7() -> Outcome {
    let start = Instant::now();
    let geom = geometry("1 + 0.5*sin(pi*s)", "0");
    let a = Coefficient::expr_x("1 + x1^2 + x2^2").unwrap();
    let mesh = centered_square_mesh(16, Order::P2).unwrap();
    let opts = CsOptions::default();
    let cs = solve_inhomogeneous_cs(&mesh, &a, 2, &opts).unwrap();
    let b = compute_b(&mesh, &a, &cs.w, &opts).unwrap();
    let aux = solve_auxiliaries_inhomogeneous(&mesh, &a, &cs, b, false, &opts).unwrap();
    let model = compute_potential_inhomogeneous(&geom, &mesh, &a, &cs, &aux, &opts).unwrap();
    let eta0 = effective_spectrum(&model, 1, &[0.1], &SpectrumOptions::default()).unwrap().eta[0];
    let mut dist = Vec::new();
    let mut est = Vec::new();
    for delta in [0.2, 0.1, 0.05] {
        let sol = direct_tube_oracle(&geom, &a, delta, &mesh, 32, 1, &OracleOptions::default()).unwrap();
        let e = sol.values[0] - cs.mu / (delta * delta);
        est.push(e);
        dist.push((e - eta0).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    let decreasing = dist.windows(2).all(|w| w[1] < w[0]);
    let final_rel = dist[2] / eta0.abs();
    check(
        decreasing && final_rel < 0.05 && secs < 600.0 && b[0].abs().max(b[1].abs()) < 1e-8,
        format!("eta {eta0:.5}, estimates {est:.5?}, final relative error {final_rel:.2e}, {secs:.1} s"),
    )
}

/// Drift vector under point symmetry and a symmetry-breaking coefficient.
fn criterion_8() -> Outcome {
    let tol = 1e-8;
    let opts = CsOptions::default();
    let drift = |a: &Coefficient, mesh: &Mesh| {
        let cs = solve_inhomogeneous_cs(mesh, a, 2, &opts).unwrap();
        compute_b(mesh, a, &cs.w, &opts).unwrap()
    };
    let coarse = centered_square_mesh(16, Order::P2).unwrap();
    let fine = centered_square_mesh(64, Order::P2).unwrap();
    let sym = drift(&Coefficient::expr_x("1 + x1^2 + x2^2").unwrap(), &coarse);
    let tilt = Coefficient::expr_x("1 + x1").unwrap();
    let bc = drift(&tilt, &coarse);
    let bf = drift(&tilt, &fine);
    let sym_norm = sym[0].hypot(sym[1]);
    let ok = sym_norm < tol && bc[1].abs() < tol && bc[0].abs() > 10.0 * tol && rel(bc[0], bf[0]) < 0.01;
    check(ok, format!("|b| symmetric {sym_norm:.1e}; tilted b = ({:.8}, {:.1e}), fine b1 {:.8}", bc[0], bc[1], bf[0]))
}

/// Concentration of the oracle ground state at a single interior well.
fn criterion_9() -> Outcome {
    let geom = geometry("4", "6*(s - 0.5)");
    let a = Coefficient::expr_x("1 + x1").unwrap();
    let mesh = centered_square_mesh(8, Order::P2).unwrap();
    let mut moments = Vec::new();
    for delta in [0.04, 0.02, 0.01, 0.005] {
        let sol = direct_tube_oracle(&geom, &a, delta, &mesh, 64, 1, &OracleOptions::default()).unwrap();
        moments.push(concentration_diagnostic(&sol.densities[0], 0.5));
    }
    let ratios: Vec<f64> = moments.windows(2).map(|w| w[1] / w[0]).collect();
    check(ratios.iter().all(|r| *r <= 0.8), format!("moments {moments:.5?}, ratios {ratios:.3?}"))
}

const DETERMINISM: &str = r#"
[geometry]
k = "1 + 0.5*s"
alpha = 0.3

[cross_section]
resolution = 12

[coefficient]
kind = "cross_section"
expr = "1 + x1^2 + x2^2"

[run]
mode = "verify"
scales = [0.125, 0.0625]

[output]
formats = ["json", "csv"]
"#;

/// Two runs of one configuration give identical result files.
fn criterion_10() -> Outcome {
    let cfg = parse_config(DETERMINISM).unwrap();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut outputs = Vec::new();
    for d in &dirs {
        let ctx = RunContext { base_dir: ".".into(), out_dir: d.path().to_path_buf(), exec: Execution::Parallel, threads: None };
        run(&cfg, &ctx).unwrap();
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(d.path())
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.file_name().unwrap() != "manifest.json")
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
            .collect();
        files.sort();
        outputs.push(files);
    }
    let n = outputs[0].len();
    check(n >= 2 && outputs[0] == outputs[1], format!("{n} payload files compared"))
}

fn main() {
    let criteria: [(usize, fn() -> Outcome); 10] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
    ];
    let only: Option<usize> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let mut failed = 0;
    for (n, f) in criteria {
        if only.is_some_and(|o| o != n) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("criterion {n}: PASS ({d}) [{secs:.1} s]"),
            Err(d) => {
                failed += 1;
                println!("criterion {n}: FAIL ({d}) [{secs:.1} s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
