//! Metric geometry: 1D metric factors, 2D diagonal metrics, deformations, and
//! the Laplace-Beltrami coefficients derived from them.
//!
//! A 1D geometry is described by a factor `h(q)` with inverse metric
//! `g^qq = h^2`; its Laplace-Beltrami operator is `h d/dq (h d/dq)`, i.e.
//! second-order coefficient `h^2` and first-order coefficient `h h'`. A 2D
//! geometry is a diagonal inverse metric `(g^qq, g^ww)`; the operator expands
//! to `A d2/dq2 + B d2/dw2 + C d/dq + D d/dw` with `A = g^qq`, `B = g^ww`,
//! `C = sqrt(g^qq g^ww) d/dq (g^qq / sqrt(g^qq g^ww))` and the symmetric
//! expression in `w` for `D`.
//!
//! All factors must be strictly positive on the domain of interest; positivity
//! is certified by dense sampling (1000 points per axis) at construction time.

use crate::error::{Error, Result};
use crate::expr::{ExprAst, VarSet};

/// Number of positivity samples per axis.
const POSITIVITY_SAMPLES: usize = 1000;

fn axis_samples(lo: f64, hi: f64) -> impl Iterator<Item = f64> {
    let step = (hi - lo) / (POSITIVITY_SAMPLES - 1) as f64;
    (0..POSITIVITY_SAMPLES).map(move |i| lo + step * i as f64)
}

fn require_vars(expr: &ExprAst, names: &[&str], what: &str) -> Result<()> {
    let expected = VarSet::new(names)?;
    if expr.vars() != &expected {
        return Err(Error::InvalidInput(format!(
            "{what} must be declared over the variables {names:?}"
        )));
    }
    Ok(())
}

/// One-dimensional metric factor `h(q)` on a positive interval.
#[derive(Debug, Clone)]
pub struct MetricFactor1D {
    h: ExprAst,
    q_min: f64,
    q_max: f64,
}

impl MetricFactor1D {
    /// Builds a metric factor over `q`, certifying `h > 0` by sampling.
    pub fn new(h: ExprAst, q_min: f64, q_max: f64) -> Result<Self> {
        require_vars(&h, &["q"], "metric factor h")?;
        if !(q_min > 0.0) || !(q_max > q_min) || !q_max.is_finite() {
            return Err(Error::InvalidInput(format!(
                "metric factor domain must satisfy 0 < q_min < q_max, got [{q_min}, {q_max}]"
            )));
        }
        for q in axis_samples(q_min, q_max) {
            let v = h.eval(&[q])?;
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Positivity(format!(
                    "metric factor h is not strictly positive: h({q}) = {v}"
                )));
            }
        }
        Ok(Self { h, q_min, q_max })
    }

    pub fn h(&self) -> &ExprAst {
        &self.h
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.q_min, self.q_max)
    }
}

/// Two-dimensional diagonal inverse metric `(g^qq, g^ww)` on a positive box.
#[derive(Debug, Clone)]
pub struct DiagonalMetric2D {
    g11: ExprAst,
    g22: ExprAst,
    q_min: f64,
    q_max: f64,
    w_min: f64,
    w_max: f64,
}

impl DiagonalMetric2D {
    /// Builds a diagonal metric over `(q, w)`, certifying both components
    /// strictly positive on the sampled tensor grid.
    pub fn new(
        g11: ExprAst,
        g22: ExprAst,
        q_bounds: (f64, f64),
        w_bounds: (f64, f64),
    ) -> Result<Self> {
        require_vars(&g11, &["q", "w"], "metric component g^qq")?;
        require_vars(&g22, &["q", "w"], "metric component g^ww")?;
        let (q_min, q_max) = q_bounds;
        let (w_min, w_max) = w_bounds;
        if !(q_min > 0.0) || !(q_max > q_min) || !(w_min > 0.0) || !(w_max > w_min) {
            return Err(Error::InvalidInput(format!(
                "metric domain must satisfy 0 < min < max per axis, got q [{q_min}, {q_max}], w [{w_min}, {w_max}]"
            )));
        }
        for (expr, name) in [(&g11, "g^qq"), (&g22, "g^ww")] {
            for q in axis_samples(q_min, q_max) {
                for w in axis_samples(w_min, w_max) {
                    let v = expr.eval(&[q, w])?;
                    if !(v > 0.0) || !v.is_finite() {
                        return Err(Error::Positivity(format!(
                            "metric component {name} is not strictly positive: value {v} at (q, w) = ({q}, {w})"
                        )));
                    }
                }
            }
        }
        Ok(Self {
            g11,
            g22,
            q_min,
            q_max,
            w_min,
            w_max,
        })
    }

    pub fn g11(&self) -> &ExprAst {
        &self.g11
    }

    pub fn g22(&self) -> &ExprAst {
        &self.g22
    }

    pub fn q_domain(&self) -> (f64, f64) {
        (self.q_min, self.q_max)
    }

    pub fn w_domain(&self) -> (f64, f64) {
        (self.w_min, self.w_max)
    }
}

/// Deformation parameters applied to a base geometry.
///
/// `theta` scales the coordinate deformations `f(q)` (and `g(w)` for 2D
/// metrics); `eta` is the momentum-shift strength used by the second 2D
/// deformation. Unused pieces stay at zero / `None`.
#[derive(Debug, Clone)]
pub struct DeformationSpec {
    theta: f64,
    f: ExprAst,
    g: Option<ExprAst>,
    eta: f64,
}

impl DeformationSpec {
    pub fn new(theta: f64, f: ExprAst, g: Option<ExprAst>, eta: f64) -> Result<Self> {
        if !theta.is_finite() || !eta.is_finite() {
            return Err(Error::InvalidInput(
                "deformation strengths must be finite".into(),
            ));
        }
        require_vars(&f, &["q"], "deformation profile f")?;
        if let Some(g) = &g {
            require_vars(g, &["w"], "deformation profile g")?;
        }
        Ok(Self { theta, f, g, eta })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn f(&self) -> &ExprAst {
        &self.f
    }

    pub fn g(&self) -> Option<&ExprAst> {
        self.g.as_ref()
    }

    /// The multiplicative factor `1 + theta*f(q)` over `{q}`.
    pub fn factor_q(&self) -> ExprAst {
        let vs = self.f.vars().clone();
        vs.constant(1.0).add(&vs.constant(self.theta).mul(&self.f))
    }

    /// The multiplicative factor `1 + theta*g(w)` over `{w}`.
    pub fn factor_w(&self) -> Result<ExprAst> {
        let g = self.g.as_ref().ok_or_else(|| {
            Error::InvalidInput("deformation profile g(w) is required but missing".into())
        })?;
        let vs = g.vars().clone();
        Ok(vs.constant(1.0).add(&vs.constant(self.theta).mul(g)))
    }

    /// Certifies `1 + theta*f > 0` on the q interval (and `1 + theta*g > 0`
    /// on the w interval when g is present).
    pub fn validate_positive(&self, q: (f64, f64), w: Option<(f64, f64)>) -> Result<()> {
        let factor = self.factor_q();
        for qv in axis_samples(q.0, q.1) {
            let v = factor.eval(&[qv])?;
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Positivity(format!(
                    "degenerate deformation: 1 + theta*f({qv}) = {v}"
                )));
            }
        }
        if let Some((w_min, w_max)) = w {
            let factor = self.factor_w()?;
            for wv in axis_samples(w_min, w_max) {
                let v = factor.eval(&[wv])?;
                if !(v > 0.0) || !v.is_finite() {
                    return Err(Error::Positivity(format!(
                        "degenerate deformation: 1 + theta*g({wv}) = {v}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Laplace-Beltrami coefficients of a 1D factor: `(h^2, h h')`.
pub fn lb_coefficients_1d(metric: &MetricFactor1D) -> Result<(ExprAst, ExprAst)> {
    let h = metric.h();
    let a2 = h.pow(2);
    let a1 = h.mul(&h.differentiate("q")?);
    Ok((a2, a1))
}

/// Laplace-Beltrami coefficients of a 2D diagonal metric: `(A, B, C, D)` such
/// that the operator is `A d2/dq2 + B d2/dw2 + C d/dq + D d/dw`.
pub fn lb_coefficients_2d(
    metric: &DiagonalMetric2D,
) -> Result<(ExprAst, ExprAst, ExprAst, ExprAst)> {
    let g11 = metric.g11();
    let g22 = metric.g22();
    let sqrt_g = g11.mul(g22).sqrt();
    let c = sqrt_g.mul(&g11.div(&sqrt_g).differentiate("q")?);
    let d = sqrt_g.mul(&g22.div(&sqrt_g).differentiate("w")?);
    Ok((g11.clone(), g22.clone(), c, d))
}

/// Applies a coordinate deformation to a 1D factor: `h_theta = h*(1 + theta*f)`.
/// The deformation factor and the resulting metric factor are both certified
/// strictly positive on the base domain.
pub fn deformed_factor_1d(
    base: &MetricFactor1D,
    deformation: &DeformationSpec,
) -> Result<MetricFactor1D> {
    let (q_min, q_max) = base.domain();
    deformation.validate_positive((q_min, q_max), None)?;
    let factor = deformation.factor_q();
    MetricFactor1D::new(base.h().mul(&factor), q_min, q_max)
}

/// The extra generator terms produced by the momentum-shift deformation of
/// the 2D model: the first-order-in-q coefficient `eta*q^2*w^2` and the scalar
/// term `eta^2/2*q^2*w^3`, both over `(q, w)`.
pub fn eta_potential_terms(eta: f64) -> (ExprAst, ExprAst) {
    let vs = VarSet::new(&["q", "w"]).expect("static variable set");
    let q = vs.var("q").expect("q declared");
    let w = vs.var("w").expect("w declared");
    let linear = vs.constant(eta).mul(&q.pow(2)).mul(&w.pow(2));
    let scalar = vs.constant(0.5 * eta * eta).mul(&q.pow(2)).mul(&w.pow(3));
    (linear, scalar)
}
