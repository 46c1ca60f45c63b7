//! End-to-end runs: configuration in, result files and manifest out.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use crate::coefficient::Coefficient;
use crate::config::{CoefficientKind, Format, Mode, RunConfig};
use crate::cross_section::{
    compute_b, solve_auxiliaries, solve_auxiliaries_inhomogeneous, solve_homogenized_cs, solve_inhomogeneous_cs,
    CrossSectionSolution, CsOptions,
};
use crate::effective::{
    compute_potential_homogenized, compute_potential_inhomogeneous, effective_spectrum, homogenized_integrals,
    q_xi_simplified, q_xi_unsimplified, EffectiveModel, SpectrumOptions,
};
use crate::error::Result;
use crate::exec::Execution;
use crate::fem::Mesh;
use crate::geometry::WaveguideGeometry;
use crate::homogenization::{homogenize, CellOptions};
use crate::localization::{localize, LocalizationOptions};
use crate::output::{content_hash, to_json, write_file, CsvTable};
use crate::verification::{convergence_study, direct_tube_oracle, identity_checks, OracleOptions, StudyOptions};

/// Solver options derived from a configuration.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub cs: CsOptions,
    pub cell: CellOptions,
    pub spectrum: SpectrumOptions,
    pub localization: LocalizationOptions,
    pub oracle: OracleOptions,
}

impl RunOptions {
    pub fn from_config(cfg: &RunConfig, exec: Execution) -> Self {
        let mut cs = CsOptions { exec, ..Default::default() };
        cs.eigen.seed = cfg.run.seed;
        let mut cell = CellOptions { order: cfg.cross_section.order, exec, ..Default::default() };
        if let Some(c) = &cfg.coefficient {
            cell.resolution = c.cell_resolution;
        }
        let mut spectrum = SpectrumOptions::default();
        let mut localization = LocalizationOptions { exec, ..Default::default() };
        if let Some(n) = cfg.run.line_cells {
            spectrum.cells = n;
            localization.cells = n;
        }
        let mut oracle = OracleOptions { exec, ..Default::default() };
        oracle.eigen.seed = cfg.run.seed;
        RunOptions { cs, cell, spectrum, localization, oracle }
    }

    fn tolerances(&self) -> Tolerances {
        Tolerances {
            eigen: self.cs.eigen.tol,
            cross_section_compatibility: self.cs.compat_tol,
            recovered_compatibility: self.cs.recovered_compat_tol,
            cell_compatibility: self.cell.compat_tol,
            q_symmetry: self.cell.symmetry_tol,
            propagation: self.spectrum.propagation_tol,
            localization: self.localization.tol,
            oracle_eigen: self.oracle.eigen.tol,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Tolerances {
    pub eigen: f64,
    pub cross_section_compatibility: f64,
    pub recovered_compatibility: f64,
    pub cell_compatibility: f64,
    pub q_symmetry: f64,
    pub propagation: f64,
    pub localization: f64,
    pub oracle_eigen: f64,
}

/// Numeric payload of a run and its plot tables.
#[derive(Debug, Clone)]
pub struct Payload {
    pub data: Value,
    pub tables: Vec<CsvTable>,
}

#[derive(Debug, Clone)]
pub struct RunContext {
    /// Directory against which relative file names in the config resolve.
    pub base_dir: PathBuf,
    pub out_dir: PathBuf,
    pub exec: Execution,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub manifest_hash: String,
    pub payload: Payload,
    pub files: Vec<PathBuf>,
    pub wall_time: f64,
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("result types serialize to JSON")
}

/// Hash over everything that determines the numbers of a run; the output
/// directory is left out.
pub fn manifest_hash(cfg: &RunConfig, opts: &RunOptions) -> Result<String> {
    let mut numeric = cfg.clone();
    numeric.output.directory.clear();
    content_hash(&json!({
        "version": env!("CARGO_PKG_VERSION"),
        "config": to_value(&numeric),
        "tolerances": to_value(&opts.tolerances()),
        "seed": cfg.run.seed,
    }))
}

/// Runs the configured mode and writes result files to `ctx.out_dir`.
pub fn run(cfg: &RunConfig, ctx: &RunContext) -> Result<RunOutcome> {
    cfg.validate()?;
    let start = Instant::now();
    let opts = RunOptions::from_config(cfg, ctx.exec);
    let hash = manifest_hash(cfg, &opts)?;
    let payload = execute(cfg, &ctx.base_dir, &opts)?;
    let wall_time = start.elapsed().as_secs_f64();

    let mut files = Vec::new();
    if cfg.output.formats.contains(&Format::Json) {
        let result = json!({ "manifest_hash": hash, "mode": cfg.run.mode, "data": payload.data });
        files.push(write_file(&ctx.out_dir, "result.json", &to_json(&result)?)?);
    }
    if cfg.output.formats.contains(&Format::Csv) {
        for t in &payload.tables {
            files.push(write_file(&ctx.out_dir, &format!("{}.csv", t.name), &t.render(&hash))?);
        }
    }
    let manifest = json!({
        "manifest_hash": hash,
        "version": env!("CARGO_PKG_VERSION"),
        "mode": cfg.run.mode,
        "config": to_value(cfg),
        "tolerances": to_value(&opts.tolerances()),
        "seed": cfg.run.seed,
        "threads": ctx.threads,
        "execution": ctx.exec,
        "wall_time_seconds": wall_time,
        "files": files.iter().filter_map(|p| p.file_name()).map(|n| n.to_string_lossy().into_owned()).collect::<Vec<_>>(),
    });
    files.push(write_file(&ctx.out_dir, "manifest.json", &to_json(&manifest)?)?);
    log::info!("{} finished in {wall_time:.2} s", cfg.run.mode);
    Ok(RunOutcome { manifest_hash: hash, payload, files, wall_time })
}

/// Computes the payload of a run without writing anything.
pub fn execute(cfg: &RunConfig, base_dir: &Path, opts: &RunOptions) -> Result<Payload> {
    match cfg.run.mode {
        Mode::Homogenize => run_homogenize(cfg, base_dir, opts),
        Mode::Effective => run_effective(cfg, base_dir, opts),
        Mode::Localize => run_localize(cfg, base_dir, opts),
        Mode::Verify => run_verify(cfg, base_dir, opts),
        Mode::Oracle => run_oracle(cfg, base_dir, opts),
    }
}

struct Inputs {
    geom: WaveguideGeometry,
    mesh: Mesh,
    a: Coefficient,
    kind: CoefficientKind,
}

fn inputs(cfg: &RunConfig, base: &Path) -> Result<Inputs> {
    let geom = cfg.build_geometry(base)?;
    let mesh = cfg.build_mesh(base)?;
    let a = cfg.build_coefficient(base, Some(&mesh))?;
    let kind = cfg.coefficient.as_ref().expect("validated").kind;
    Ok(Inputs { geom, mesh, a, kind })
}

fn run_homogenize(cfg: &RunConfig, base: &Path, opts: &RunOptions) -> Result<Payload> {
    let a = cfg.build_coefficient(base, None)?;
    let (corr, t) = homogenize(&a, &opts.cell)?;
    let ev = t.q_eigenvalues();
    let slack = 1e-9 * t.abar;
    let bounded = ev[0] >= t.harmonic_mean - slack && ev[1] <= t.abar + slack;
    let data = json!({
        "tensors": to_value(&t),
        "q_eigenvalues": ev,
        "bounds": { "harmonic_mean": t.harmonic_mean, "arithmetic_mean": t.abar, "satisfied": bounded },
        "q_energy_asymmetry": t.q_asymmetry,
        "defects": corr.defects,
        "max_grad_phi": corr.max_grad_phi,
    });
    let mut table = CsvTable::new("correctors", &["y1", "y2", "phi1", "phi2"]);
    for (n, y) in corr.cell.mesh.nodes.iter().enumerate() {
        table.push(vec![y[0], y[1], corr.phi[0][n], corr.phi[1][n]]);
    }
    Ok(Payload { data, tables: vec![table] })
}

/// Cross-section solution, drift vector and potentials of the
/// non-oscillating regime.
fn inhomogeneous_model(inp: &Inputs, opts: &RunOptions) -> Result<(CrossSectionSolution, [f64; 2], EffectiveModel)> {
    let cs = solve_inhomogeneous_cs(&inp.mesh, &inp.a, 2, &opts.cs)?;
    let b = compute_b(&inp.mesh, &inp.a, &cs.w, &opts.cs)?;
    let aux = solve_auxiliaries_inhomogeneous(&inp.mesh, &inp.a, &cs, b, false, &opts.cs)?;
    let model = compute_potential_inhomogeneous(&inp.geom, &inp.mesh, &inp.a, &cs, &aux, &opts.cs)?;
    Ok((cs, b, model))
}

fn potential_table(m: &EffectiveModel) -> CsvTable {
    let mut t = CsvTable::new("potential", &["s", "q_h", "q_xi", "q_tau", "q_c", "drift", "total"]);
    for i in 0..m.s.len() {
        let total = m.q_h + m.q_xi[i] + m.q_tau[i] + m.q_c[i];
        t.push(vec![m.s[i], m.q_h, m.q_xi[i], m.q_tau[i], m.q_c[i], m.drift[i], total]);
    }
    t
}

fn run_effective(cfg: &RunConfig, base: &Path, opts: &RunOptions) -> Result<Payload> {
    let inp = inputs(cfg, base)?;
    let model = match inp.kind {
        CoefficientKind::PeriodicCell => {
            let (_, t) = homogenize(&inp.a, &opts.cell)?;
            let cs = solve_homogenized_cs(&inp.mesh, t.q, 2, &opts.cs)?;
            let aux = solve_auxiliaries(&inp.mesh, &t, &cs, false, &opts.cs)?;
            compute_potential_homogenized(&inp.geom, &inp.mesh, &t, &cs, &aux, &opts.cs)?
        }
        CoefficientKind::CrossSection => inhomogeneous_model(&inp, opts)?.2,
    };
    let spec = effective_spectrum(&model, cfg.run.eigenpairs, &cfg.run.scales, &opts.spectrum)?;
    let mut lambda = CsvTable::new("lambda", &["scale", "j", "lambda"]);
    for (k, sc) in spec.scales.iter().enumerate() {
        for (j, v) in spec.lambda[k].iter().enumerate() {
            lambda.push(vec![*sc, j as f64, *v]);
        }
    }
    let mut eta = CsvTable::new("eta", &["j", "eta"]);
    for (j, v) in spec.eta.iter().enumerate() {
        eta.push(vec![j as f64, *v]);
    }
    let mut header = vec!["s".to_string()];
    header.extend((0..spec.mode_profile.len()).map(|j| format!("phi{j}")));
    let mut modes = CsvTable { name: "modes".into(), header, rows: Vec::new() };
    for (i, s) in spec.mode_nodes.iter().enumerate() {
        let mut row = vec![*s];
        row.extend(spec.mode_profile.iter().map(|p| p[i]));
        modes.push(row);
    }
    let tables = vec![potential_table(&model), lambda, eta, modes];
    Ok(Payload { data: json!({ "model": to_value(&model), "spectrum": to_value(&spec) }), tables })
}

fn run_localize(cfg: &RunConfig, base: &Path, opts: &RunOptions) -> Result<Payload> {
    let inp = inputs(cfg, base)?;
    let (cs, b, model) = inhomogeneous_model(&inp, opts)?;
    let loc = localize(&inp.geom, b, cs.mu, model.r, cfg.run.eigenpairs, &opts.localization)?;
    let predictions: Vec<Value> = cfg
        .run
        .scales
        .iter()
        .map(|&d| json!({ "scale": d, "lambda": loc.predict(d, cfg.run.eigenpairs) }))
        .collect();
    let mut eta = CsvTable::new("eta", &["index", "well", "level", "s", "eta"]);
    for (i, e) in loc.eta.iter().enumerate() {
        eta.push(vec![i as f64, e.well as f64, e.level as f64, loc.wells[e.well].s(), e.value]);
    }
    let data = json!({
        "mu_c": cs.mu,
        "b": b,
        "r": model.r,
        "model": to_value(&loc),
        "predictions": predictions,
    });
    Ok(Payload { data, tables: vec![potential_table(&model), eta] })
}

fn run_verify(cfg: &RunConfig, base: &Path, opts: &RunOptions) -> Result<Payload> {
    let inp = inputs(cfg, base)?;
    let case = cfg.study_case().expect("validated");
    let s = cfg.s_point();
    let so = StudyOptions { cs: opts.cs.clone(), cell: opts.cell.clone(), ..Default::default() };
    let report = convergence_study(case, &inp.geom, &inp.a, &inp.mesh, s, &cfg.run.scales, &so)?;
    let mut data = json!({ "study": to_value(&report) });
    if inp.kind == CoefficientKind::PeriodicCell {
        let xi = inp.geom.xi(s)?;
        let (_, t) = homogenize(&inp.a, &opts.cell)?;
        let cs = solve_homogenized_cs(&inp.mesh, t.q, 2, &opts.cs)?;
        let aux = solve_auxiliaries(&inp.mesh, &t, &cs, true, &opts.cs)?;
        let ints = homogenized_integrals(&inp.mesh, &t, &cs, &aux, &opts.cs)?;
        let ids = identity_checks(&inp.mesh, &t, &cs, &aux, xi, &opts.cs)?;
        let simplified = q_xi_simplified(&ints, &t, xi);
        let unsimplified = q_xi_unsimplified(&ints, &t, xi)?;
        data["identities"] = to_value(&ids);
        data["q_xi"] = json!({ "xi": xi, "simplified": simplified, "unsimplified": unsimplified });
    }
    let mut table = CsvTable::new("study", &["scale", "error", "mu", "predicted"]);
    for i in 0..report.scales.len() {
        table.push(vec![report.scales[i], report.errors[i], report.details[i][0], report.predicted[i]]);
    }
    Ok(Payload { data, tables: vec![table] })
}

fn run_oracle(cfg: &RunConfig, base: &Path, opts: &RunOptions) -> Result<Payload> {
    let inp = inputs(cfg, base)?;
    let mu_c = solve_inhomogeneous_cs(&inp.mesh, &inp.a, 2, &opts.cs)?.mu;
    let mut runs = Vec::new();
    let mut dens = CsvTable::new("densities", &["scale", "s", "weight", "density"]);
    for &delta in &cfg.run.scales {
        let sol = direct_tube_oracle(&inp.geom, &inp.a, delta, &inp.mesh, cfg.run.oracle_elements, cfg.run.eigenpairs, &opts.oracle)?;
        let shifted: Vec<f64> = sol.values.iter().map(|v| v - mu_c / (delta * delta)).collect();
        if let Some(d) = sol.densities.first() {
            for i in 0..d.points.len() {
                dens.push(vec![delta, d.points[i], d.weights[i], d.density[i]]);
            }
        }
        runs.push(json!({
            "scale": delta,
            "values": sol.values,
            "residuals": sol.residuals,
            "shifted": shifted,
            "unknowns": sol.unknowns,
            "nonzeros": sol.nonzeros,
        }));
    }
    let mut values = CsvTable::new("oracle", &["scale", "j", "lambda"]);
    for r in &runs {
        let d = r["scale"].as_f64().unwrap_or(f64::NAN);
        for (j, v) in r["values"].as_array().into_iter().flatten().enumerate() {
            values.push(vec![d, j as f64, v.as_f64().unwrap_or(f64::NAN)]);
        }
    }
    Ok(Payload { data: json!({ "mu_c": mu_c, "runs": runs }), tables: vec![values, dens] })
}
