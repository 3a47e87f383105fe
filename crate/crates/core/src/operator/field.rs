use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::geometry::{AnnotatedCloud, SingularManifold, SingularityKind};
use crate::numeric::{dot, project};

/// A smooth function of the ambient point, used as the restriction of a
/// field to one piece.
pub trait PieceFunction: Send + Sync + fmt::Debug {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
    fn hessian(&self, _x: &[f64]) -> Option<Vec<Vec<f64>>> {
        None
    }
}

/// Expression with symbolically derived gradient and Hessian.
#[derive(Debug, Clone)]
pub struct ExprFunction {
    expr: Expr,
    grad: Vec<Expr>,
    hess: Vec<Vec<Expr>>,
}

impl ExprFunction {
    pub fn new(expr: Expr, ambient_dim: usize) -> Result<Self> {
        if let Some(v) = expr.max_var() {
            if v >= ambient_dim {
                return Err(Error::param(
                    "field",
                    format!("uses x{} but the ambient dimension is {ambient_dim}", v + 1),
                ));
            }
        }
        let grad: Vec<Expr> = (0..ambient_dim).map(|i| expr.derivative(i).fold()).collect();
        let hess = grad
            .iter()
            .map(|g| (0..ambient_dim).map(|j| g.derivative(j).fold()).collect())
            .collect();
        Ok(Self { expr, grad, hess })
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }
}

impl PieceFunction for ExprFunction {
    fn value(&self, x: &[f64]) -> f64 {
        self.expr.eval(x)
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.grad.iter().map(|g| g.eval(x)).collect()
    }
    fn hessian(&self, x: &[f64]) -> Option<Vec<Vec<f64>>> {
        Some(self.hess.iter().map(|row| row.iter().map(|h| h.eval(x)).collect()).collect())
    }
}

/// Piecewise-smooth scalar field: one function per piece, or one shared by all.
#[derive(Debug, Clone)]
pub struct ScalarField {
    spec: String,
    shared: Option<Arc<dyn PieceFunction>>,
    per_piece: Vec<Arc<dyn PieceFunction>>,
}

/// Tolerance for values of neighbouring pieces at shared singular points.
pub const CONTINUITY_TOL: f64 = 1e-9;

impl ScalarField {
    pub fn shared(spec: impl Into<String>, f: Arc<dyn PieceFunction>) -> Self {
        Self { spec: spec.into(), shared: Some(f), per_piece: Vec::new() }
    }

    pub fn per_piece(spec: impl Into<String>, fs: Vec<Arc<dyn PieceFunction>>) -> Self {
        Self { spec: spec.into(), shared: None, per_piece: fs }
    }

    pub fn constant(c: f64) -> Self {
        Self::shared(format!("const:{c}"), Arc::new(ExprFunction::new(Expr::Const(c), 0).expect("constant")))
    }

    /// Parses a field spec:
    /// `const:c`, `coord:k` (one-based), `d1field` (`(x1+0.2)^2 + x2^2`),
    /// `expr:E`, or `pieces:E0;E1;…` with one expression per piece. A spec
    /// without a kind prefix is read as an expression.
    pub fn parse(spec: &str, ambient_dim: usize) -> Result<Self> {
        let spec = spec.trim();
        let one = |e: Expr| -> Result<Self> { Ok(Self::shared(spec, Arc::new(ExprFunction::new(e, ambient_dim)?))) };
        if spec == "d1field" {
            return one(Expr::parse("(x1 + 0.2)^2 + x2^2")?);
        }
        let Some((head, body)) = spec.split_once(':') else {
            return Expr::parse(spec)
                .map_err(|e| Error::Parse(format!("field spec `{spec}` is neither a preset nor an expression ({e})")))
                .and_then(one);
        };
        match head {
            "const" => one(Expr::Const(Expr::parse_constant(body)?)),
            "coord" => {
                let k: usize = body
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("coord index `{body}`")))?;
                if k == 0 || k > ambient_dim {
                    return Err(Error::param("field", format!("coordinate {k} outside 1..={ambient_dim}")));
                }
                one(Expr::Var(k - 1))
            }
            "expr" => one(Expr::parse(body)?),
            "pieces" => {
                let fs = body
                    .split(';')
                    .map(|s| Ok(Arc::new(ExprFunction::new(Expr::parse(s)?, ambient_dim)?) as Arc<dyn PieceFunction>))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Self::per_piece(spec, fs))
            }
            other => Err(Error::Unknown {
                what: "field kind",
                name: other.to_string(),
                available: "const, coord, d1field, expr, pieces".into(),
            }),
        }
    }

    pub fn spec(&self) -> &str {
        &self.spec
    }

    pub fn function(&self, piece: usize) -> Result<&Arc<dyn PieceFunction>> {
        match &self.shared {
            Some(f) => Ok(f),
            None => self
                .per_piece
                .get(piece)
                .ok_or_else(|| Error::MissingValue(format!("field has no expression for piece {piece}"))),
        }
    }

    pub fn value(&self, piece: usize, x: &[f64]) -> Result<f64> {
        Ok(self.function(piece)?.value(x))
    }

    pub fn gradient(&self, piece: usize, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.function(piece)?.gradient(x))
    }

    /// Derivative along `dir` from the side `dir` points into, evaluated
    /// just off `x` so that kinks such as `abs` resolve to the correct side.
    pub fn one_sided_derivative(&self, piece: usize, x: &[f64], dir: &[f64]) -> Result<f64> {
        let f = self.function(piece)?;
        let h = 1e-9 * (1.0 + crate::numeric::norm(x));
        let y: Vec<f64> = x.iter().zip(dir).map(|(a, b)| a + h * b).collect();
        Ok(dot(&f.gradient(&y), dir))
    }

    /// Field values at every cloud point.
    pub fn sample(&self, cloud: &AnnotatedCloud) -> Result<Vec<f64>> {
        (0..cloud.len()).map(|i| self.value(cloud.piece_of(i), cloud.point(i))).collect()
    }

    /// Largest disagreement between the two pieces' values on sampled
    /// points of every two-piece singular set; errors above [`CONTINUITY_TOL`].
    pub fn check_continuity(&self, m: &SingularManifold) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for s in m.singularities() {
            if s.kind == SingularityKind::Boundary {
                continue;
            }
            for x in s.locus.samples(9) {
                let a = self.value(s.pieces[0], &x)?;
                let b = self.value(s.pieces[1], &x)?;
                worst = worst.max((a - b).abs());
            }
        }
        if worst > CONTINUITY_TOL {
            return Err(Error::param("field", format!("pieces disagree by {worst:.3e} on a shared singular set")));
        }
        Ok(worst)
    }

    /// Weighted Laplacian `Δf + (2/p)⟨∇p, ∇f⟩` on a flat piece, using the
    /// tangent projection of the ambient gradient and Hessian.
    pub fn weighted_laplacian(&self, m: &SingularManifold, piece: usize, x: &[f64]) -> Result<f64> {
        let pc = m.piece(piece)?;
        let f = self.function(piece)?;
        let hess = f
            .hessian(x)
            .ok_or_else(|| Error::MissingValue("field has no Hessian".into()))?;
        let basis = pc.chart.tangent_basis(&pc.chart.invert(x));
        let trace: f64 = basis
            .iter()
            .map(|t| t.iter().enumerate().map(|(i, ti)| ti * dot(&hess[i], t)).sum::<f64>())
            .sum();
        let p = m.density().value(piece, x);
        let grad_p = project(&m.density().gradient(piece, x), &basis);
        let grad_f = project(&f.gradient(x), &basis);
        Ok(trace + 2.0 / p * dot(&grad_p, &grad_f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_builtin, Params};

    #[test]
    fn presets_parse() {
        let f = ScalarField::parse("d1field", 2).unwrap();
        assert_eq!(f.value(0, &[0.0, 1.0]).unwrap(), 0.04 + 1.0);
        assert_eq!(f.gradient(0, &[0.0, 1.0]).unwrap(), vec![0.4, 2.0]);
        let c = ScalarField::parse("const:pi", 3).unwrap();
        assert_eq!(c.value(5, &[1.0, 2.0, 3.0]).unwrap(), std::f64::consts::PI);
        assert!(ScalarField::parse("coord:3", 2).is_err());
        assert!(ScalarField::parse("expr:x3", 2).is_err());
    }

    #[test]
    fn continuity_check() {
        let m = build_builtin("crossing_segments", &Params::new()).unwrap();
        assert!(ScalarField::parse("pieces:abs(x1);x2", 2).unwrap().check_continuity(&m).is_ok());
        assert!(ScalarField::parse("pieces:1;0", 2).unwrap().check_continuity(&m).is_err());
    }

    #[test]
    fn one_sided_derivatives_of_abs() {
        let f = ScalarField::parse("expr:abs(x1)", 2).unwrap();
        assert_eq!(f.one_sided_derivative(0, &[0.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(f.one_sided_derivative(0, &[0.0, 0.0], &[-1.0, 0.0]).unwrap(), 1.0);
    }

    #[test]
    fn weighted_laplacian_with_exponential_density() {
        let m = build_builtin("interval", &Params::new().with("density_slope", 1.0)).unwrap();
        let f = ScalarField::parse("coord:1", 1).unwrap();
        assert!((f.weighted_laplacian(&m, 0, &[0.3]).unwrap() - 2.0).abs() < 1e-14);
    }
}
