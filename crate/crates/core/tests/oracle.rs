//! Direct tube oracle against the one-dimensional models.

use wgspec_core::coefficient::Coefficient;
use wgspec_core::cross_section::{compute_b, solve_auxiliaries_inhomogeneous, solve_inhomogeneous_cs, CsOptions};
use wgspec_core::effective::{compute_potential_inhomogeneous, effective_spectrum, SpectrumOptions};
use wgspec_core::fem::{centered_square_mesh, disk_mesh, Order};
use wgspec_core::geometry::{build_geometry, Profile};
use wgspec_core::verification::{direct_tube_oracle, OracleOptions};

#[test]
fn twist_does_not_couple_to_the_radial_ground_state() {
    let a = Coefficient::Constant(1.0);
    let plain = build_geometry(1.0, Profile::Constant(0.0), Profile::Constant(0.0), Profile::Constant(0.0), 65).unwrap();
    let twisted = build_geometry(1.0, Profile::Constant(0.0), Profile::Constant(0.0), Profile::expr("1.5*s").unwrap(), 65).unwrap();
    let opts = OracleOptions::default();
    let mut gaps = Vec::new();
    for rings in [4, 8] {
        let mesh = disk_mesh(0.5, rings, Order::P2).unwrap();
        let p = direct_tube_oracle(&plain, &a, 0.1, &mesh, 8, 1, &opts).unwrap();
        let t = direct_tube_oracle(&twisted, &a, 0.1, &mesh, 8, 1, &opts).unwrap();
        gaps.push((p.values[0] - t.values[0]).abs() / p.values[0]);
    }
    // The only gap is the polygonal mesh breaking rotational symmetry.
    assert!(gaps[1] < gaps[0] && gaps[1] < 1e-5, "{gaps:?}");
}

#[test]
fn constant_drift_is_removed_at_order_one_over_delta() {
    let geom = build_geometry(1.0, Profile::Constant(1.0), Profile::Constant(0.0), Profile::Constant(0.0), 65).unwrap();
    let a = Coefficient::expr_x("1 + x1").unwrap();
    let mesh = centered_square_mesh(6, Order::P2).unwrap();
    let opts = CsOptions::default();
    let cs = solve_inhomogeneous_cs(&mesh, &a, 2, &opts).unwrap();
    let b = compute_b(&mesh, &a, &cs.w, &opts).unwrap();
    let aux = solve_auxiliaries_inhomogeneous(&mesh, &a, &cs, b, false, &opts).unwrap();
    let model = compute_potential_inhomogeneous(&geom, &mesh, &a, &cs, &aux, &opts).unwrap();
    let eta = effective_spectrum(&model, 1, &[0.1], &SpectrumOptions::default()).unwrap().eta[0];
    let drift = b[0];
    let mut dist = Vec::new();
    for delta in [0.2, 0.1, 0.05] {
        let sol = direct_tube_oracle(&geom, &a, delta, &mesh, 16, 1, &OracleOptions::default()).unwrap();
        dist.push((sol.values[0] - cs.mu / (delta * delta) - drift / delta - eta).abs());
    }
    assert!(dist.windows(2).all(|w| w[1] < w[0]), "{dist:?}");
    assert!(dist[2] < 0.05 * eta, "{dist:?} {eta}");
}
