//! Run configuration: TOML parsing with defaults, validation before any
//! solve, and construction of the numerical inputs.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::coefficient::{Coefficient, GridField};
use crate::error::{ConfigError, Error, ExprError, Result};
use crate::expr::Expression;
use crate::fem::{centered_square_mesh, disk_mesh, import_mesh, unit_square_mesh, Mesh, Order};
use crate::geometry::{build_geometry, Profile, WaveguideGeometry};
use crate::verification::StudyCase;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Homogenize,
    Effective,
    Localize,
    Verify,
    Oracle,
}

impl Mode {
    pub const ALL: [Mode; 5] = [Mode::Homogenize, Mode::Effective, Mode::Localize, Mode::Verify, Mode::Oracle];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Homogenize => "homogenize",
            Mode::Effective => "effective",
            Mode::Localize => "localize",
            Mode::Verify => "verify",
            Mode::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Mode> {
        Mode::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
            ConfigError::Value { key: "run.mode".into(), message: format!("unknown mode `{s}`") }.into()
        })
    }
}

/// A profile along the guide: a number, an expression in `s`, or a file of
/// `(s, value)` rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileSpec {
    Value(f64),
    Expr(String),
    File { file: String },
}

impl Default for ProfileSpec {
    fn default() -> Self {
        ProfileSpec::Value(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryConfig {
    pub l: f64,
    pub k: ProfileSpec,
    pub alpha: ProfileSpec,
    pub theta: ProfileSpec,
    pub samples: usize,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            l: 1.0,
            k: ProfileSpec::default(),
            alpha: ProfileSpec::default(),
            theta: ProfileSpec::default(),
            samples: 257,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    #[default]
    UnitSquare,
    CenteredSquare,
    Disk,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CrossSectionConfig {
    pub domain: DomainKind,
    pub resolution: usize,
    pub order: Order,
    /// Disk radius.
    pub radius: f64,
    /// Mesh file for `domain = "file"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh_file: Option<String>,
}

impl Default for CrossSectionConfig {
    fn default() -> Self {
        CrossSectionConfig { domain: DomainKind::UnitSquare, resolution: 64, order: Order::P2, radius: 1.0, mesh_file: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientKind {
    /// `a(y)` on the unit cell, used as `a(x / eps)`.
    PeriodicCell,
    /// `a(x)` on the cross section.
    CrossSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientConfig {
    pub kind: CoefficientKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expr: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_file: Option<String>,
    #[serde(default = "default_resolution")]
    pub cell_resolution: usize,
}

fn default_resolution() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunBlock {
    pub mode: Mode,
    #[serde(default = "default_eigenpairs")]
    pub eigenpairs: usize,
    #[serde(default)]
    pub scales: Vec<f64>,
    /// Arc length for pointwise studies; defaults to the midpoint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub study: Option<StudyCase>,
    /// Cells of the one-dimensional effective and blow-up problems; the
    /// module defaults apply when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line_cells: Option<usize>,
    /// Elements along the guide for the direct oracle.
    #[serde(default = "default_oracle_elements")]
    pub oracle_elements: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_eigenpairs() -> usize {
    6
}

fn default_oracle_elements() -> usize {
    32
}

fn default_seed() -> u64 {
    0x5eed
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: String,
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { directory: "wgspec-out".into(), formats: vec![Format::Json] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub cross_section: CrossSectionConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficient: Option<CoefficientConfig>,
    pub run: RunBlock,
    #[serde(default)]
    pub output: OutputConfig,
}

/// 1-based line and column of a byte offset.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

fn value_error(key: &str, message: impl Into<String>) -> Error {
    ConfigError::Value { key: key.into(), message: message.into() }.into()
}

/// Located message for an expression error, pointing into the TOML text
/// when the expression can be found there.
fn expr_error(text: Option<&str>, key: &str, src: &str, e: &ExprError) -> Error {
    let loc = text.and_then(|t| t.find(&format!("\"{src}\"")).map(|off| line_col(t, off + 1 + e.position().saturating_sub(1))));
    let message = match loc {
        Some((line, col)) => format!("{e} (line {line}, column {col})"),
        None => e.to_string(),
    };
    value_error(key, message)
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| {
        let msg = match e.span() {
            Some(span) => {
                let (line, col) = line_col(text, span.start);
                format!("line {line}, column {col}: {}", e.message())
            }
            None => e.message().to_string(),
        };
        ConfigError::Parse(msg)
    })?;
    cfg.validate_with(Some(text))?;
    Ok(cfg)
}

/// Reads a configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Read { path: path.display().to_string(), message: e.to_string() })?;
    parse_config(&text)
}

impl RunConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration types serialize to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_with(None)
    }

    fn validate_with(&self, text: Option<&str>) -> Result<()> {
        let g = &self.geometry;
        if !(g.l > 0.0 && g.l.is_finite()) {
            return Err(value_error("geometry.l", format!("must be positive, got {}", g.l)));
        }
        if g.samples < 3 {
            return Err(value_error("geometry.samples", "at least 3 samples are needed"));
        }
        for (key, p) in [("geometry.k", &g.k), ("geometry.alpha", &g.alpha), ("geometry.theta", &g.theta)] {
            match p {
                ProfileSpec::Value(v) if !v.is_finite() => return Err(value_error(key, "must be finite")),
                ProfileSpec::Expr(src) => {
                    let e = Expression::parse(src).map_err(|e| expr_error(text, key, src, &e))?;
                    e.check_variables(&[crate::expr::Var::S]).map_err(|e| expr_error(text, key, src, &e))?;
                }
                _ => {}
            }
        }
        let cs = &self.cross_section;
        if cs.resolution < 2 {
            return Err(value_error("cross_section.resolution", "must be at least 2"));
        }
        if cs.domain == DomainKind::Disk && !(cs.radius > 0.0 && cs.radius.is_finite()) {
            return Err(value_error("cross_section.radius", "must be positive"));
        }
        if (cs.domain == DomainKind::File) != cs.mesh_file.is_some() {
            return Err(value_error("cross_section.mesh_file", "is required exactly when domain = \"file\""));
        }
        if let Some(c) = &self.coefficient {
            match (&c.expr, &c.grid_file) {
                (Some(src), None) => {
                    let e = Expression::parse(src).map_err(|e| expr_error(text, "coefficient.expr", src, &e))?;
                    let vars: &[crate::expr::Var] = match c.kind {
                        CoefficientKind::PeriodicCell => &[crate::expr::Var::Y1, crate::expr::Var::Y2],
                        CoefficientKind::CrossSection => &[crate::expr::Var::X1, crate::expr::Var::X2],
                    };
                    e.check_variables(vars).map_err(|e| expr_error(text, "coefficient.expr", src, &e))?;
                }
                (None, Some(_)) => {}
                _ => return Err(value_error("coefficient", "exactly one of `expr` and `grid_file` is required")),
            }
            if c.cell_resolution < 2 || c.cell_resolution % 2 != 0 {
                return Err(value_error("coefficient.cell_resolution", "must be even and at least 2"));
            }
        }
        let r = &self.run;
        if r.eigenpairs == 0 {
            return Err(value_error("run.eigenpairs", "must be at least 1"));
        }
        if r.scales.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(value_error("run.scales", "scales must be positive and finite"));
        }
        if let Some(s) = r.s {
            if !(0.0..=g.l).contains(&s) {
                return Err(value_error("run.s", format!("must lie in [0, {}]", g.l)));
            }
        }
        if r.line_cells.is_some_and(|c| c < 4) {
            return Err(value_error("run.line_cells", "must be at least 4"));
        }
        if r.oracle_elements < 2 {
            return Err(value_error("run.oracle_elements", "must be at least 2"));
        }
        if self.output.formats.is_empty() {
            return Err(value_error("output.formats", "at least one format is required"));
        }
        let kind = self.coefficient.as_ref().map(|c| c.kind);
        let need = |want: Option<CoefficientKind>| -> Result<CoefficientKind> {
            let Some(k) = kind else {
                return Err(value_error("coefficient", format!("mode `{}` needs a [coefficient] block", r.mode)));
            };
            match want {
                Some(w) if w != k => Err(value_error(
                    "coefficient.kind",
                    format!("mode `{}` needs kind = \"{}\"", r.mode, kind_name(w)),
                )),
                _ => Ok(k),
            }
        };
        match r.mode {
            Mode::Homogenize => {
                need(Some(CoefficientKind::PeriodicCell))?;
            }
            Mode::Effective => {
                need(None)?;
                if r.scales.is_empty() {
                    return Err(value_error("run.scales", "mode `effective` needs at least one scale"));
                }
            }
            Mode::Localize => {
                need(Some(CoefficientKind::CrossSection))?;
            }
            Mode::Verify => {
                let k = need(None)?;
                if r.scales.len() < 2 || r.scales.windows(2).any(|w| w[1] >= w[0]) {
                    return Err(value_error("run.scales", "mode `verify` needs at least two strictly decreasing scales"));
                }
                let study = self.study_case().expect("coefficient present");
                let ok = match study {
                    StudyCase::BetaOnly => k == CoefficientKind::CrossSection,
                    _ => k == CoefficientKind::PeriodicCell,
                };
                if !ok {
                    return Err(value_error("run.study", format!("study does not match coefficient kind `{}`", kind_name(k))));
                }
            }
            Mode::Oracle => {
                need(Some(CoefficientKind::CrossSection))?;
                if r.scales.is_empty() {
                    return Err(value_error("run.scales", "mode `oracle` needs at least one scale"));
                }
            }
        }
        Ok(())
    }

    /// Study case, defaulting by coefficient kind and guide curvature.
    pub fn study_case(&self) -> Option<StudyCase> {
        if let Some(s) = self.run.study {
            return Some(s);
        }
        let k = self.coefficient.as_ref()?.kind;
        Some(match k {
            CoefficientKind::CrossSection => StudyCase::BetaOnly,
            CoefficientKind::PeriodicCell if self.geometry.k == ProfileSpec::Value(0.0) => StudyCase::HomogenizeOnly,
            CoefficientKind::PeriodicCell => StudyCase::Combined,
        })
    }

    /// Point along the guide for pointwise studies.
    pub fn s_point(&self) -> f64 {
        self.run.s.unwrap_or(0.5 * self.geometry.l)
    }
}

fn kind_name(k: CoefficientKind) -> &'static str {
    match k {
        CoefficientKind::PeriodicCell => "periodic_cell",
        CoefficientKind::CrossSection => "cross_section",
    }
}

fn read_file(base: &Path, name: &str) -> Result<String> {
    let path = base.join(name);
    std::fs::read_to_string(&path).map_err(|e| ConfigError::Read { path: path.display().to_string(), message: e.to_string() }.into())
}

fn load_profile(base: &Path, key: &str, p: &ProfileSpec) -> Result<Profile> {
    match p {
        ProfileSpec::Value(v) => Ok(Profile::Constant(*v)),
        ProfileSpec::Expr(src) => Profile::expr(src),
        ProfileSpec::File { file } => {
            let text = read_file(base, file)?;
            let mut s = Vec::new();
            let mut v = Vec::new();
            for (n, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let cols: Vec<f64> = line
                    .split(|c: char| c == ',' || c.is_whitespace())
                    .filter(|t| !t.is_empty())
                    .map(str::parse)
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| value_error(key, format!("{file}: line {}: malformed number", n + 1)))?;
                if cols.len() != 2 {
                    return Err(value_error(key, format!("{file}: line {}: expected two columns", n + 1)));
                }
                s.push(cols[0]);
                v.push(cols[1]);
            }
            Profile::sampled(s, v)
        }
    }
}

impl RunConfig {
    /// Geometry with file paths resolved against `base`.
    pub fn build_geometry(&self, base: &Path) -> Result<WaveguideGeometry> {
        let g = &self.geometry;
        build_geometry(
            g.l,
            load_profile(base, "geometry.k", &g.k)?,
            load_profile(base, "geometry.alpha", &g.alpha)?,
            load_profile(base, "geometry.theta", &g.theta)?,
            g.samples,
        )
    }

    pub fn build_mesh(&self, base: &Path) -> Result<Mesh> {
        let cs = &self.cross_section;
        match cs.domain {
            DomainKind::UnitSquare => unit_square_mesh(cs.resolution, cs.order),
            DomainKind::CenteredSquare => centered_square_mesh(cs.resolution, cs.order),
            DomainKind::Disk => disk_mesh(cs.radius, cs.resolution, cs.order),
            DomainKind::File => {
                let name = cs.mesh_file.as_deref().expect("validated");
                import_mesh(&read_file(base, name)?, cs.order)
            }
        }
    }

    pub fn build_coefficient(&self, base: &Path, mesh: Option<&Mesh>) -> Result<Coefficient> {
        let c = self.coefficient.as_ref().ok_or_else(|| value_error("coefficient", "missing [coefficient] block"))?;
        match (&c.expr, &c.grid_file) {
            (Some(src), _) => match c.kind {
                CoefficientKind::PeriodicCell => Coefficient::expr_y(src),
                CoefficientKind::CrossSection => Coefficient::expr_x(src),
            },
            (None, Some(file)) => {
                let text = read_file(base, file)?;
                let (origin, size) = match (c.kind, mesh) {
                    (CoefficientKind::CrossSection, Some(m)) => bounding_box(m),
                    _ => ([0.0, 0.0], [1.0, 1.0]),
                };
                Ok(Coefficient::Grid(GridField::parse(&text, origin, size)?))
            }
            (None, None) => Err(value_error("coefficient", "exactly one of `expr` and `grid_file` is required")),
        }
    }
}

fn bounding_box(m: &Mesh) -> ([f64; 2], [f64; 2]) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in &m.nodes {
        for i in 0..2 {
            lo[i] = lo[i].min(p[i]);
            hi[i] = hi[i].max(p[i]);
        }
    }
    (lo, [hi[0] - lo[0], hi[1] - lo[1]])
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[coefficient]
kind = "periodic_cell"
expr = "2+cos(2*pi*y1)"

[run]
mode = "homogenize"
"#;

    #[test]
    fn defaults_are_filled() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.cross_section.resolution, 64);
        assert_eq!(c.cross_section.order, Order::P2);
        assert_eq!(c.run.eigenpairs, 6);
        assert_eq!(c.output.formats, vec![Format::Json]);
        assert_eq!(c.geometry.l, 1.0);
    }

    #[test]
    fn unknown_key_is_named() {
        let e = parse_config("[geomtry]\nl = 1.0\n[run]\nmode = \"homogenize\"\n").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("geomtry"), "{msg}");
        assert!(msg.contains("line 1"), "{msg}");
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn localize_needs_coefficient() {
        let e = parse_config("[run]\nmode = \"localize\"\n").unwrap_err();
        assert!(e.to_string().contains("coefficient"));
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn bad_expression_is_located() {
        let text = "[coefficient]\nkind = \"periodic_cell\"\nexpr = \"1+*2\"\n[run]\nmode = \"homogenize\"\n";
        let msg = parse_config(text).unwrap_err().to_string();
        assert!(msg.contains("position 3"), "{msg}");
        assert!(msg.contains("line 3, column 11"), "{msg}");
    }

    #[test]
    fn round_trip() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(parse_config(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn study_follows_kind() {
        let mut c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.study_case(), Some(StudyCase::HomogenizeOnly));
        c.geometry.k = ProfileSpec::Expr("1".into());
        assert_eq!(c.study_case(), Some(StudyCase::Combined));
    }

    #[test]
    fn mode_names_parse() {
        for m in Mode::ALL {
            assert_eq!(m.name().parse::<Mode>().unwrap(), m);
        }
        assert!("fit".parse::<Mode>().is_err());
    }
}
