use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use libm::erfc;

use crate::error::{Error, Result};

/// Standard normal CDF via the complementary error function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitKind {
    Interior,
    Boundary,
    Intersection,
    Edge,
    IntersectionCodim1,
}

impl LimitKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            LimitKind::Interior => "interior",
            LimitKind::Boundary => "boundary",
            LimitKind::Intersection => "intersection",
            LimitKind::Edge => "edge",
            LimitKind::IntersectionCodim1 => "intersection_codim1",
        }
    }
}

impl fmt::Display for LimitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Asymptotic order of the leading term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Order {
    /// `O(1)`
    #[serde(rename = "O(1)")]
    One,
    /// `O(t^{-1/2})`
    #[serde(rename = "O(t^-1/2)")]
    InvSqrtT,
}

/// Leading-order prediction of `L_t f(x)`: `coefficient` multiplies `1/√t`
/// when `order` is [`Order::InvSqrtT`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitPrediction {
    pub kind: LimitKind,
    pub coefficient: f64,
    pub order: Order,
    pub components: BTreeMap<String, f64>,
}

impl LimitPrediction {
    fn new(kind: LimitKind, coefficient: f64, order: Order, components: &[(&str, f64)]) -> Self {
        Self {
            kind,
            coefficient,
            order,
            components: components.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    /// The predicted value at bandwidth `t`.
    pub fn value(&self, t: f64) -> f64 {
        match self.order {
            Order::One => self.coefficient,
            Order::InvSqrtT => self.coefficient / t.sqrt(),
        }
    }
}

/// Which constants to use where the published formulas and direct
/// integration of the functional Laplacian disagree.
///
/// `AsPublished` takes the interior constant `−½π^{d/2}` and the `+∂_{n₁}f₁`
/// intersection term verbatim. `OracleCalibrated` uses `−¼π^{d/2}` and
/// `−∂_{n₁}f₁`, which is what the Gaussian integrals evaluate to for the
/// kernel `t^{−d/2}e^{−‖x−y‖²/t}` with normals pointing toward `x₀`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    #[default]
    AsPublished,
    OracleCalibrated,
}

impl Convention {
    pub fn interior_constant(self) -> f64 {
        match self {
            Convention::AsPublished => 0.5,
            Convention::OracleCalibrated => 0.25,
        }
    }

    pub fn intersection_first_sign(self) -> f64 {
        match self {
            Convention::AsPublished => 1.0,
            Convention::OracleCalibrated => -1.0,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "published" | "as_published" => Ok(Convention::AsPublished),
            "calibrated" | "oracle_calibrated" => Ok(Convention::OracleCalibrated),
            other => Err(Error::Unknown {
                what: "convention",
                name: other.to_string(),
                available: "calibrated, published".into(),
            }),
        }
    }
}

fn check_r(r: f64) -> Result<()> {
    if r >= 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(Error::param("r", format!("must be finite and non-negative, got {r}")))
    }
}

/// `−c π^{d/2} p(x)[Δf + (2/p)⟨∇p, ∇f⟩]` with `c` from the convention.
pub fn predict_interior_with(
    conv: Convention,
    p: f64,
    grad_p: &[f64],
    f_hess_trace: Option<f64>,
    grad_f: &[f64],
    d: usize,
) -> Result<LimitPrediction> {
    let lap = f_hess_trace.ok_or_else(|| Error::MissingValue("Hessian trace of f".into()))?;
    let drift: f64 = grad_p.iter().zip(grad_f).map(|(a, b)| a * b).sum::<f64>() * 2.0 / p;
    let weighted = lap + drift;
    let coef = -conv.interior_constant() * PI.powf(d as f64 / 2.0) * p * weighted;
    Ok(LimitPrediction::new(
        LimitKind::Interior,
        coef,
        Order::One,
        &[("p", p), ("weighted_laplacian", weighted)],
    ))
}

/// Interior limit with the published constant.
pub fn predict_interior(p: f64, grad_p: &[f64], f_hess_trace: Option<f64>, grad_f: &[f64], d: usize) -> Result<LimitPrediction> {
    predict_interior_with(Convention::AsPublished, p, grad_p, f_hess_trace, grad_f, d)
}

/// Coefficient of `1/√t` near a boundary: `−(π^{(d−1)/2}/2) e^{−r²} p(x₀) ∂_n f(x₀)`.
pub fn predict_boundary(p_at_x0: f64, dn_f_at_x0: f64, r: f64, d: usize) -> Result<LimitPrediction> {
    check_r(r)?;
    let decay = (-r * r).exp();
    let coef = -0.5 * PI.powf((d as f64 - 1.0) / 2.0) * decay * p_at_x0 * dn_f_at_x0;
    Ok(LimitPrediction::new(
        LimitKind::Boundary,
        coef,
        Order::InvSqrtT,
        &[("p", p_at_x0), ("dn_f", dn_f_at_x0), ("decay", decay)],
    ))
}

fn check_open_angle(theta: f64) -> Result<()> {
    if theta > 0.0 && theta < PI {
        Ok(())
    } else {
        Err(Error::param("theta", format!("must lie in (0, π), got {theta}")))
    }
}

/// Coefficient of `1/√t` near a transversal intersection:
/// `π^{d/2} r e^{−r² sin²θ} p(x₀)(s·∂_{n₁}f₁ + cosθ ∂_{n₂}f₂)` with `s = ±1` per
/// convention. At `r = 0` the coefficient is zero and the order drops to `O(1)`.
pub fn predict_intersection_with(
    conv: Convention,
    p_at_x0: f64,
    dn1_f1: f64,
    dn2_f2: f64,
    r: f64,
    theta: f64,
    d: usize,
) -> Result<LimitPrediction> {
    check_r(r)?;
    check_open_angle(theta)?;
    let s = theta.sin();
    let profile = r * (-r * r * s * s).exp();
    let bracket = conv.intersection_first_sign() * dn1_f1 + theta.cos() * dn2_f2;
    let coef = PI.powf(d as f64 / 2.0) * profile * p_at_x0 * bracket;
    let order = if r == 0.0 { Order::One } else { Order::InvSqrtT };
    Ok(LimitPrediction::new(
        LimitKind::Intersection,
        if r == 0.0 { 0.0 } else { coef },
        order,
        &[("p", p_at_x0), ("dn1_f1", dn1_f1), ("dn2_f2", dn2_f2), ("profile", profile)],
    ))
}

/// Intersection coefficient with the published sign.
pub fn predict_intersection(p_at_x0: f64, dn1_f1: f64, dn2_f2: f64, r: f64, theta: f64, d: usize) -> Result<LimitPrediction> {
    predict_intersection_with(Convention::AsPublished, p_at_x0, dn1_f1, dn2_f2, r, theta, d)
}

/// `α(r,θ)` and `β(r,θ)` of the edge limit.
pub fn edge_coefficients(r: f64, theta: f64, d: usize) -> (f64, f64) {
    let d = d as f64;
    let base = 0.5 * PI.powf((d - 1.0) / 2.0) * (-r * r).exp();
    let s = theta.sin();
    let cross = r * PI.powf(d / 2.0) * normal_cdf(std::f64::consts::SQRT_2 * r * theta.cos()) * (-r * r * s * s).exp();
    (base - cross, base + cross * theta.cos())
}

/// Coefficient of `1/√t` near an edge: `−p(x₀)[α ∂_{n₁}f + β ∂_{n₂}f]`.
pub fn predict_edge(p_at_x0: f64, dn1_f: f64, dn2_f: f64, r: f64, theta: f64, d: usize) -> Result<LimitPrediction> {
    check_r(r)?;
    if !(theta > 0.0 && theta <= PI) {
        return Err(Error::param("theta", format!("must lie in (0, π], got {theta}")));
    }
    let (alpha, beta) = edge_coefficients(r, theta, d);
    let coef = -p_at_x0 * (alpha * dn1_f + beta * dn2_f);
    Ok(LimitPrediction::new(
        LimitKind::Edge,
        coef,
        Order::InvSqrtT,
        &[("p", p_at_x0), ("alpha", alpha), ("beta", beta), ("dn1_f", dn1_f), ("dn2_f", dn2_f)],
    ))
}

/// Codimension-one intersection viewed as four half-pieces glued along the
/// locus: `−(π^{(d−1)/2}/2) p [Σ one-sided inward derivatives]`, coefficient of `1/√t`.
pub fn predict_intersection_codim1(p_at_x0: f64, one_sided: [f64; 4], d: usize) -> Result<LimitPrediction> {
    let sum: f64 = one_sided.iter().sum();
    let coef = -0.5 * PI.powf((d as f64 - 1.0) / 2.0) * p_at_x0 * sum;
    Ok(LimitPrediction::new(
        LimitKind::IntersectionCodim1,
        coef,
        Order::InvSqrtT,
        &[
            ("p", p_at_x0),
            ("d_plus_n1", one_sided[0]),
            ("d_minus_n1", one_sided[1]),
            ("d_plus_n2", one_sided[2]),
            ("d_minus_n2", one_sided[3]),
        ],
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn interior_examples() {
        let v = predict_interior(1.0, &[0.0], Some(2.0), &[1.0], 1).unwrap();
        assert!((v.coefficient + PI.sqrt()).abs() < 1e-14);
        let v = predict_interior(3.0, &[0.0, 0.0], Some(0.0), &[1.0, 2.0], 2).unwrap();
        assert_eq!(v.coefficient, 0.0);
        // p ∝ e^x, f = x: Δ_{p²} f = 2
        let p = 0.7;
        let v = predict_interior(p, &[p], Some(0.0), &[1.0], 1).unwrap();
        assert!((v.coefficient + PI.sqrt() * p).abs() < 1e-14);
        assert!(predict_interior(1.0, &[0.0], None, &[0.0], 1).is_err());
        let c = predict_interior_with(Convention::OracleCalibrated, 1.0, &[0.0], Some(2.0), &[0.0], 1).unwrap();
        assert!((c.coefficient + 0.5 * PI.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn boundary_examples() {
        assert_eq!(predict_boundary(1.0, 1.0, 0.0, 1).unwrap().coefficient, -0.5);
        assert!(predict_boundary(1.0, 1.0, 40.0, 1).unwrap().coefficient.abs() < 1e-300);
        let v = predict_boundary(2.0, 0.5, 1.0, 3).unwrap();
        assert!((v.coefficient + PI * (-1.0f64).exp() / 2.0).abs() < 1e-14);
        assert!((v.coefficient + 0.57786).abs() < 1e-5);
    }

    #[test]
    fn intersection_examples() {
        let z = predict_intersection(1.0, 1.0, 5.0, 0.0, 1.0, 1).unwrap();
        assert_eq!(z.coefficient, 0.0);
        assert_eq!(z.order, Order::One);
        let v = predict_intersection(1.0, 1.0, 123.0, 1.0, PI / 2.0, 1).unwrap();
        assert!((v.coefficient - PI.sqrt() * (-1.0f64).exp()).abs() < 1e-12);
        assert!((v.coefficient - 0.65191).abs() < 1e-3);
        assert!(predict_intersection(1.0, 1.0, 1.0, 1.0, PI, 1).is_err());
    }

    #[test]
    fn intersection_profile_peak() {
        let theta: f64 = 1.1;
        let peak = 1.0 / (2.0f64.sqrt() * theta.sin());
        let f = |r: f64| predict_intersection(1.0, 1.0, 0.0, r, theta, 1).unwrap().coefficient;
        assert!(f(peak) > f(peak * 0.99) && f(peak) > f(peak * 1.01));
    }

    #[test]
    fn edge_examples() {
        let v = predict_edge(1.0, 1.0, 0.0, 1.0, PI / 2.0, 2).unwrap();
        let e = (-1.0f64).exp();
        assert!((v.components["alpha"] - e * (0.5 * PI.sqrt() - PI / 2.0)).abs() < 1e-14);
        assert!((v.components["alpha"] + 0.25178).abs() < 1e-3);
        assert!((v.components["beta"] - 0.5 * PI.sqrt() * e).abs() < 1e-15);
        assert!((v.components["beta"] - 0.32611).abs() < 1e-3);
    }

    #[test]
    fn codim1_examples() {
        assert_eq!(predict_intersection_codim1(1.0, [1.0, -1.0, 0.3, -0.3], 2).unwrap().coefficient, 0.0);
        assert_eq!(predict_intersection_codim1(1.0, [0.0; 4], 2).unwrap().coefficient, 0.0);
        let v = predict_intersection_codim1(0.5, [1.0, 1.0, 0.0, 0.0], 1).unwrap();
        assert_eq!(v.coefficient, -0.5);
    }

    #[test]
    fn normal_cdf_values() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!((normal_cdf(1.0) - 0.8413447460685429).abs() < 2e-15);
        assert!((normal_cdf(-3.0) - 0.0013498980316300946).abs() < 1e-17);
    }

    proptest! {
        #[test]
        fn edge_r0_consistency(theta in 0.01f64..PI, d in 1usize..5) {
            let (a, b) = edge_coefficients(0.0, theta, d);
            let base = 0.5 * PI.powf((d as f64 - 1.0) / 2.0);
            prop_assert!((a - base).abs() < 1e-15 && (b - base).abs() < 1e-15);
        }

        #[test]
        fn flat_gluing_null(r in 0.0f64..6.0, g in -3.0f64..3.0, d in 1usize..4) {
            let v = predict_edge(1.3, g, -g, r, PI, d).unwrap();
            prop_assert!(v.coefficient.abs() < 1e-15 * (1.0 + g.abs()));
        }

        #[test]
        fn intersection_zero_at_origin(theta in 0.01f64..3.1, a in -5.0f64..5.0, b in -5.0f64..5.0) {
            prop_assert_eq!(predict_intersection(1.0, a, b, 0.0, theta, 2).unwrap().coefficient, 0.0);
        }
    }
}
