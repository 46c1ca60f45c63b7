//! Scalar coefficient fields on the plane.

use std::fmt;
use std::sync::Arc;

use crate::error::{FemError, Result};
use crate::expr::{Expression, Var, Vars};

/// Piecewise-constant values on a uniform grid over a rectangle; row `j`
/// holds the cells with `y` in the `j`-th strip.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub origin: [f64; 2],
    pub size: [f64; 2],
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<f64>,
}

impl GridField {
    pub fn new(origin: [f64; 2], size: [f64; 2], nx: usize, ny: usize, values: Vec<f64>) -> Result<GridField> {
        if nx == 0 || ny == 0 || values.len() != nx * ny || !(size[0] > 0.0 && size[1] > 0.0) {
            return Err(FemError::Mesh(format!("grid of {nx}x{ny} cells needs {} values", nx * ny)).into());
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FemError::Mesh("non-finite grid value".into()).into());
        }
        Ok(GridField { origin, size, nx, ny, values })
    }

    /// Parses rows of comma- or whitespace-separated numbers; the first row
    /// is the cells with the smallest `y`.
    pub fn parse(text: &str, origin: [f64; 2], size: [f64; 2]) -> Result<GridField> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row: std::result::Result<Vec<f64>, _> =
                line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).map(str::parse).collect();
            rows.push(row.map_err(|_| FemError::Io(format!("line {}: malformed number", n + 1)))?);
        }
        let nx = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != nx) {
            return Err(FemError::Io("grid rows have different lengths".into()).into());
        }
        let ny = rows.len();
        GridField::new(origin, size, nx, ny, rows.concat())
    }

    pub fn eval(&self, p: [f64; 2]) -> f64 {
        let fx = ((p[0] - self.origin[0]) / self.size[0] * self.nx as f64).floor();
        let fy = ((p[1] - self.origin[1]) / self.size[1] * self.ny as f64).floor();
        let i = (fx.max(0.0) as usize).min(self.nx - 1);
        let j = (fy.max(0.0) as usize).min(self.ny - 1);
        self.values[j * self.nx + i]
    }
}

#[derive(Clone)]
pub enum Coefficient {
    Constant(f64),
    /// Expression in `x1, x2` or in `y1, y2`.
    Expr(Expression),
    Function(Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>),
    Grid(GridField),
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficient::Constant(c) => write!(f, "Constant({c})"),
            Coefficient::Expr(e) => write!(f, "Expr({e})"),
            Coefficient::Function(_) => write!(f, "Function"),
            Coefficient::Grid(g) => write!(f, "Grid({}x{})", g.nx, g.ny),
        }
    }
}

impl Coefficient {
    pub fn function(f: impl Fn([f64; 2]) -> f64 + Send + Sync + 'static) -> Coefficient {
        Coefficient::Function(Arc::new(f))
    }

    /// Parses an expression in the cross-section variables `x1, x2`.
    pub fn expr_x(src: &str) -> Result<Coefficient> {
        let e = Expression::parse(src).map_err(FemError::from)?;
        e.check_variables(&[Var::X1, Var::X2]).map_err(FemError::from)?;
        Ok(Coefficient::Expr(e))
    }

    /// Parses an expression in the cell variables `y1, y2`.
    pub fn expr_y(src: &str) -> Result<Coefficient> {
        let e = Expression::parse(src).map_err(FemError::from)?;
        e.check_variables(&[Var::Y1, Var::Y2]).map_err(FemError::from)?;
        Ok(Coefficient::Expr(e))
    }

    /// Value at `p`; expressions see `p` both as `(x1, x2)` and `(y1, y2)`.
    pub fn eval(&self, p: [f64; 2]) -> Result<f64> {
        let v = match self {
            Coefficient::Constant(c) => *c,
            Coefficient::Expr(e) => {
                let vars = Vars { x1: p[0], x2: p[1], y1: p[0], y2: p[1], ..Default::default() };
                e.eval(&vars).map_err(FemError::from)?
            }
            Coefficient::Function(f) => f(p),
            Coefficient::Grid(g) => g.eval(p),
        };
        if !v.is_finite() {
            return Err(FemError::Coercivity { value: v, x: p[0], y: p[1] }.into());
        }
        Ok(v)
    }

    /// Value of the 1-periodic extension at `y`.
    pub fn eval_periodic(&self, y: [f64; 2]) -> Result<f64> {
        self.eval([y[0].rem_euclid(1.0), y[1].rem_euclid(1.0)])
    }

    /// Value of `a(x / eps)` for a periodic cell coefficient.
    pub fn eval_scaled(&self, x: [f64; 2], eps: f64) -> Result<f64> {
        self.eval_periodic([x[0] / eps, x[1] / eps])
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Coefficient::Constant(_))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn periodic_wrap() {
        let a = Coefficient::function(|p| if p[0] < 0.5 { 1.0 } else { 4.0 });
        assert_eq!(a.eval_periodic([1.25, 0.0]).unwrap(), 1.0);
        assert_eq!(a.eval_periodic([-0.25, 0.3]).unwrap(), 4.0);
        assert_eq!(a.eval_scaled([0.15, 0.0], 0.25).unwrap(), 4.0);
    }

    #[test]
    fn grid_lookup() {
        let g = GridField::parse("1, 2\n3 4\n", [0.0, 0.0], [1.0, 1.0]).unwrap();
        assert_eq!(g.eval([0.1, 0.1]), 1.0);
        assert_eq!(g.eval([0.9, 0.1]), 2.0);
        assert_eq!(g.eval([0.1, 0.9]), 3.0);
        assert_eq!(g.eval([1.0, 1.0]), 4.0);
        assert!(GridField::parse("1 2\n3\n", [0.0, 0.0], [1.0, 1.0]).is_err());
    }

    #[test]
    fn expression_variables_are_checked() {
        assert!(Coefficient::expr_y("2 + cos(2*pi*y1)").is_ok());
        assert!(Coefficient::expr_y("2 + x1").is_err());
        let a = Coefficient::expr_x("1 + x1").unwrap();
        assert_eq!(a.eval([0.5, 0.2]).unwrap(), 1.5);
    }
}
