use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Constants of the concentration bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub c_v: f64,
    pub c_m: f64,
    /// Bound on the summand's field difference, `sup|f(x) − f(y)|`.
    pub m: f64,
    /// Upper bound of the density.
    pub b: f64,
    pub d: usize,
}

impl BoundParams {
    /// `C_m = M`, `C_v = M²·b·C_g`.
    pub fn from_constants(m: f64, b: f64, c_g: f64, d: usize) -> Result<Self> {
        let p = Self { c_v: m * m * b * c_g, c_m: m, m, b, d };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("C_v", self.c_v), ("C_m", self.c_m), ("M", self.m), ("b", self.b)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be positive, got {v}")));
            }
        }
        if self.d == 0 {
            return Err(Error::param("d", "must be at least 1"));
        }
        Ok(())
    }
}

/// Raw (unclamped) bound `2n exp(−n t^{d/2+2} ε² / (2C_v + 2C_m ε t/3))`.
pub fn bound_thm4_raw(params: &BoundParams, n: usize, t: f64, eps: f64) -> f64 {
    let n_f = n as f64;
    let num = n_f * t.powf(params.d as f64 / 2.0 + 2.0) * eps * eps;
    let den = 2.0 * params.c_v + 2.0 * params.c_m * eps * t / 3.0;
    2.0 * n_f * (-num / den).exp()
}

/// Probability bound on `|L_{n,t}f(x) − L_t f(x)| > ε`, clamped to 1.
pub fn bound_thm4(params: &BoundParams, n: usize, t: f64, eps: f64) -> Result<f64> {
    params.validate()?;
    if n == 0 || !(t > 0.0) || !(eps > 0.0) {
        return Err(Error::param("n, t, eps", "must all be positive"));
    }
    Ok(bound_thm4_raw(params, n, t, eps).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Interior,
    Singular,
}

impl std::str::FromStr for Regime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "interior" => Ok(Regime::Interior),
            "singular" => Ok(Regime::Singular),
            other => Err(Error::Unknown { what: "regime", name: other.into(), available: "interior, singular".into() }),
        }
    }
}

/// Bandwidth schedule `(log n / n)^{2/(d+4)} g(n)` (interior) or
/// `(log n / n)^{2/(d+2)} g(n)` (singular) with `g(n) = (log n)^{g_log_exponent}`.
pub fn bandwidth_schedule(n: usize, d: usize, regime: Regime, g_log_exponent: f64) -> Result<f64> {
    if n < 3 {
        return Err(Error::param("n", "schedule needs n >= 3"));
    }
    if d == 0 {
        return Err(Error::param("d", "must be at least 1"));
    }
    let ln = (n as f64).ln();
    let base = ln / n as f64;
    let exponent = match regime {
        Regime::Interior => 2.0 / (d as f64 + 4.0),
        Regime::Singular => 2.0 / (d as f64 + 2.0),
    };
    Ok(base.powf(exponent) * ln.powf(g_log_exponent))
}
