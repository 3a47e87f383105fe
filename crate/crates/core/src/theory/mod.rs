//! Closed-form limits of the graph Laplacian near regular and singular
//! points, the quadrature oracle for the functional Laplacian, and the
//! concentration bound with its bandwidth schedules.

mod bound;
mod limits;
mod quadrature;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use bound::{bandwidth_schedule, bound_thm4, bound_thm4_raw, BoundParams, Regime};
pub use limits::{
    edge_coefficients, normal_cdf, predict_boundary, predict_edge, predict_interior, predict_interior_with,
    predict_intersection, predict_intersection_codim1, predict_intersection_with, Convention, LimitKind,
    LimitPrediction, Order,
};
pub use quadrature::{field_oscillation, kernel_mass, quadrature_lt, resolution_for, MIN_RESOLUTION};

use crate::error::{Error, Result};
use crate::geometry::{Annotation, SingularManifold, SingularityKind};
use crate::numeric::dot;
use crate::operator::ScalarField;
use crate::registry::{Named, Registry};

/// Everything a limit model needs about one query point.
pub struct PointContext<'a> {
    pub manifold: &'a SingularManifold,
    pub field: &'a ScalarField,
    pub piece: usize,
    pub x: &'a [f64],
    pub annotation: &'a Annotation,
    pub t: f64,
    pub convention: Convention,
}

impl PointContext<'_> {
    fn r(&self) -> f64 {
        self.annotation.r(self.t)
    }

    fn spec(&self) -> Result<&crate::geometry::SingularitySpec> {
        let k = self
            .annotation
            .singularity
            .ok_or_else(|| Error::MissingValue("annotation has no singular set".into()))?;
        Ok(&self.manifold.singularities()[k])
    }

    fn other_piece(&self) -> Result<usize> {
        let s = self.spec()?;
        s.pieces
            .iter()
            .copied()
            .find(|&p| p != self.piece)
            .ok_or_else(|| Error::param("annotation", "singular set has no second piece"))
    }

    fn d(&self) -> usize {
        self.manifold.intrinsic_dim()
    }

    /// Density at `x₀` taken from the query point's own piece.
    fn p0(&self) -> f64 {
        self.manifold.density().value(self.piece, &self.annotation.x0)
    }

    fn n2(&self) -> Result<&[f64]> {
        self.annotation
            .n2
            .as_deref()
            .ok_or_else(|| Error::MissingValue("second normal".into()))
    }

    fn theta(&self) -> Result<f64> {
        self.annotation.theta.ok_or_else(|| Error::MissingValue("angle".into()))
    }
}

/// A closed-form limit, selectable by name.
pub trait LimitModel: Named + Send + Sync {
    fn kind(&self) -> LimitKind;
    fn predict(&self, ctx: &PointContext<'_>) -> Result<LimitPrediction>;
}

pub struct InteriorModel;
pub struct BoundaryModel;
pub struct IntersectionModel;
pub struct EdgeModel;
pub struct IntersectionCodim1Model;

impl Named for InteriorModel {
    fn name(&self) -> &'static str {
        "interior"
    }
}

impl LimitModel for InteriorModel {
    fn kind(&self) -> LimitKind {
        LimitKind::Interior
    }
    fn predict(&self, ctx: &PointContext<'_>) -> Result<LimitPrediction> {
        let m = ctx.manifold;
        let pc = m.piece(ctx.piece)?;
        let basis = pc.chart.tangent_basis(&pc.chart.invert(ctx.x));
        let f = ctx.field.function(ctx.piece)?;
        let hess = f.hessian(ctx.x);
        let trace = hess.map(|h| {
            basis
                .iter()
                .map(|t| t.iter().enumerate().map(|(i, ti)| ti * dot(&h[i], t)).sum::<f64>())
                .sum::<f64>()
        });
        let tangential = |g: Vec<f64>| crate::numeric::project(&g, &basis);
        let grad_p = tangential(m.density().gradient(ctx.piece, ctx.x));
        let grad_f = tangential(f.gradient(ctx.x));
        predict_interior_with(ctx.convention, m.density().value(ctx.piece, ctx.x), &grad_p, trace, &grad_f, ctx.d())
    }
}

impl Named for BoundaryModel {
    fn name(&self) -> &'static str {
        "boundary"
    }
}

impl LimitModel for BoundaryModel {
    fn kind(&self) -> LimitKind {
        LimitKind::Boundary
    }
    fn predict(&self, ctx: &PointContext<'_>) -> Result<LimitPrediction> {
        let a = ctx.annotation;
        let dn = dot(&ctx.field.gradient(ctx.piece, &a.x0)?, &a.n1);
        predict_boundary(ctx.p0(), dn, ctx.r(), ctx.d())
    }
}

impl Named for IntersectionModel {
    fn name(&self) -> &'static str {
        "intersection"
    }
}

impl LimitModel for IntersectionModel {
    fn kind(&self) -> LimitKind {
        LimitKind::Intersection
    }
    fn predict(&self, ctx: &PointContext<'_>) -> Result<LimitPrediction> {
        let a = ctx.annotation;
        let other = ctx.other_piece()?;
        let dn1 = dot(&ctx.field.gradient(ctx.piece, &a.x0)?, &a.n1);
        let dn2 = dot(&ctx.field.gradient(other, &a.x0)?, ctx.n2()?);
        predict_intersection_with(ctx.convention, ctx.p0(), dn1, dn2, ctx.r(), ctx.theta()?, ctx.d())
    }
}

impl Named for EdgeModel {
    fn name(&self) -> &'static str {
        "edge"
    }
}

impl LimitModel for EdgeModel {
    fn kind(&self) -> LimitKind {
        LimitKind::Edge
    }
    fn predict(&self, ctx: &PointContext<'_>) -> Result<LimitPrediction> {
        let a = ctx.annotation;
        let other = ctx.other_piece()?;
        let dn1 = ctx.field.one_sided_derivative(ctx.piece, &a.x0, &a.n1)?;
        let dn2 = ctx.field.one_sided_derivative(other, &a.x0, ctx.n2()?)?;
        predict_edge(ctx.p0(), dn1, dn2, ctx.r(), ctx.theta()?, ctx.d())
    }
}

impl Named for IntersectionCodim1Model {
    fn name(&self) -> &'static str {
        "intersection_codim1"
    }
}

impl LimitModel for IntersectionCodim1Model {
    fn kind(&self) -> LimitKind {
        LimitKind::IntersectionCodim1
    }
    /// Evaluated at the locus point `x₀`: the four half-pieces meeting there
    /// contribute their one-sided inward derivatives.
    fn predict(&self, ctx: &PointContext<'_>) -> Result<LimitPrediction> {
        let a = ctx.annotation;
        let other = ctx.other_piece()?;
        let n1 = &a.n1;
        let n2 = ctx.n2()?;
        let neg = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<_>>();
        let f = ctx.field;
        let derivs = [
            f.one_sided_derivative(ctx.piece, &a.x0, n1)?,
            f.one_sided_derivative(ctx.piece, &a.x0, &neg(n1))?,
            f.one_sided_derivative(other, &a.x0, n2)?,
            f.one_sided_derivative(other, &a.x0, &neg(n2))?,
        ];
        predict_intersection_codim1(ctx.p0(), derivs, ctx.d())
    }
}

pub fn limit_registry() -> Registry<dyn LimitModel> {
    let mut reg: Registry<dyn LimitModel> = Registry::new("limit model");
    reg.register(Arc::new(InteriorModel))
        .register(Arc::new(BoundaryModel))
        .register(Arc::new(IntersectionModel))
        .register(Arc::new(EdgeModel))
        .register(Arc::new(IntersectionCodim1Model));
    reg
}

/// Name of the default model for an annotation.
pub fn model_for(annotation: &Annotation) -> &'static str {
    if annotation.regular {
        return "interior";
    }
    match annotation.kind {
        None => "interior",
        Some(SingularityKind::Boundary) => "boundary",
        Some(SingularityKind::Intersection) => "intersection",
        Some(SingularityKind::Edge) => "edge",
    }
}

/// Empirical-versus-theoretical comparison at one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionReport {
    pub kind: LimitKind,
    pub t: f64,
    pub r: f64,
    pub theta: Option<f64>,
    pub coefficient: f64,
    pub components: BTreeMap<String, f64>,
    pub oracle_value: Option<f64>,
    pub empirical_value: Option<f64>,
    pub relative_error: Option<f64>,
}

impl PredictionReport {
    /// `relative_error` compares the empirical value (or the oracle value when
    /// no empirical value is given) with the prediction at `t`.
    pub fn new(
        pred: &LimitPrediction,
        annotation: &Annotation,
        t: f64,
        oracle_value: Option<f64>,
        empirical_value: Option<f64>,
    ) -> Self {
        let predicted = pred.value(t);
        let observed = empirical_value.or(oracle_value);
        let relative_error = observed.map(|v| {
            if predicted == 0.0 {
                v.abs()
            } else {
                (v - predicted).abs() / predicted.abs()
            }
        });
        Self {
            kind: pred.kind,
            t,
            r: if annotation.r_ambient.is_finite() { annotation.r(t) } else { f64::NAN },
            theta: annotation.theta,
            coefficient: pred.coefficient,
            components: pred.components.clone(),
            oracle_value,
            empirical_value,
            relative_error,
        }
    }
}
