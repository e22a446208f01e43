//! Model catalogue and generator assembly.
//!
//! Every model yields a parabolic generator for the forward-in-tau pricing
//! equation
//!
//! ```text
//! dC/dtau = a2 C_qq + b2 C_ww + a1 C_q + b1 C_w + a0 C,     tau = T - t,
//! ```
//!
//! with the payoff as the tau = 0 slice. The catalogue:
//!
//! * `Bs1`: kinetic term from the metric factor `h = q` scaled by `sigma^2/2`.
//!   Matching the standard discounted dynamics pins `r = sigma^2/2`.
//! * `Bs2`: adds a velocity coupling `alpha*q` to the drift and `alpha^2/2` to
//!   the scalar term; matching pins `alpha = r - sigma^2/2` with no constraint
//!   on `r`.
//! * `NcBs1` / `NcBs2`: the same construction on the deformed factor
//!   `h = q*(1 + theta*f(q))`. Price chart only.
//! * `Mg`: 2D diagonal metric `g^qq = q^2 w`, `g^ww = 2 xi^2 w^2`, kinetic
//!   prefactor 1/2.
//! * `NcMgTheta`: the 2D metric built from deformed coordinates,
//!   `g^qq = w (q (1 + theta*f(q)))^2`, `g^ww = 2 xi^2 (w (1 + theta*g(w)))^2`.
//! * `NcMgEta`: the momentum-shift deformation of `Mg`; adds `eta*q^2*w^2` to
//!   the q drift and `eta^2/2*q^2*w^3` to the scalar term.
//!
//! One-dimensional models support a price chart (variable `q`) and, for the
//! undeformed models, a log chart (variable `x = ln q`) where the kinetic term
//! collapses to a constant-coefficient second derivative.

use crate::error::{Error, Result};
use crate::expr::{ExprAst, VarSet};
use crate::geometry::{
    deformed_factor_1d, eta_potential_terms, lb_coefficients_1d, lb_coefficients_2d,
    DeformationSpec, DiagonalMetric2D, MetricFactor1D,
};

/// Relative tolerance for drift-matching equality constraints.
const MATCH_TOLERANCE: f64 = 1e-12;

/// Documentation string for the time convention; run reports quote it so a
/// reader can tell which rotation and time direction the numbers assume.
pub fn wick_sign_convention() -> &'static str {
    "time runs forward in tau = T - t: the payoff sits at tau = 0 and prices \
     evolve by dC/dtau = a2 C_qq + b2 C_ww + a1 C_q + b1 C_w + a0 C, the \
     Wick-rotated (t -> -i tau) Schrodinger flow of the model Hamiltonian"
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Bs1,
    Bs2,
    NcBs1,
    NcBs2,
    Mg,
    NcMgTheta,
    NcMgEta,
}

impl ModelKind {
    pub fn is_two_dim(self) -> bool {
        matches!(
            self,
            ModelKind::Mg | ModelKind::NcMgTheta | ModelKind::NcMgEta
        )
    }
}

/// Spatial coordinate chart for 1D models.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Chart {
    /// Price coordinate `q`.
    Price,
    /// Log coordinate `x = ln q`.
    Log,
}

/// Scalar potential choice.
#[derive(Debug, Clone)]
pub enum Potential {
    /// Pin the scalar term so the generator reproduces the standard
    /// discounted dynamics: total scalar `r`, plus the per-model drift
    /// matching constraint.
    MatchBs,
    /// Explicit potential over the price variables (`q`, or `q` and `w`).
    Expr(ExprAst),
}

/// A fully specified model. Build instances through the per-kind
/// constructors, which only accept the parameters that model uses.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    kind: ModelKind,
    sigma: f64,
    r: f64,
    alpha: Option<f64>,
    xi: f64,
    deformation: Option<DeformationSpec>,
    potential: Potential,
    chart: Chart,
}

impl ModelSpec {
    pub fn bs1(sigma: f64, r: f64, potential: Potential, chart: Chart) -> Result<Self> {
        check_sigma(sigma)?;
        check_rate(r)?;
        Ok(Self {
            kind: ModelKind::Bs1,
            sigma,
            r,
            alpha: None,
            xi: 0.0,
            deformation: None,
            potential,
            chart,
        })
    }

    pub fn bs2(
        sigma: f64,
        r: f64,
        alpha: Option<f64>,
        potential: Potential,
        chart: Chart,
    ) -> Result<Self> {
        check_sigma(sigma)?;
        check_rate(r)?;
        if let Some(a) = alpha {
            if !a.is_finite() {
                return Err(Error::InvalidInput("alpha must be finite".into()));
            }
        }
        Ok(Self {
            kind: ModelKind::Bs2,
            sigma,
            r,
            alpha,
            xi: 0.0,
            deformation: None,
            potential,
            chart,
        })
    }

    /// Deformed 1D model without velocity coupling. Price chart only: the
    /// deformation profile is written in the price variable.
    pub fn ncbs1(sigma: f64, r: f64, theta: f64, f: ExprAst, potential: Potential) -> Result<Self> {
        check_sigma(sigma)?;
        check_rate(r)?;
        let deformation = DeformationSpec::new(theta, f, None, 0.0)?;
        Ok(Self {
            kind: ModelKind::NcBs1,
            sigma,
            r,
            alpha: None,
            xi: 0.0,
            deformation: Some(deformation),
            potential,
            chart: Chart::Price,
        })
    }

    /// Deformed 1D model with velocity coupling. Price chart only.
    pub fn ncbs2(
        sigma: f64,
        r: f64,
        alpha: Option<f64>,
        theta: f64,
        f: ExprAst,
        potential: Potential,
    ) -> Result<Self> {
        check_sigma(sigma)?;
        check_rate(r)?;
        if let Some(a) = alpha {
            if !a.is_finite() {
                return Err(Error::InvalidInput("alpha must be finite".into()));
            }
        }
        let deformation = DeformationSpec::new(theta, f, None, 0.0)?;
        Ok(Self {
            kind: ModelKind::NcBs2,
            sigma,
            r,
            alpha,
            xi: 0.0,
            deformation: Some(deformation),
            potential,
            chart: Chart::Price,
        })
    }

    /// Two-dimensional model on the metric `(q^2 w, 2 xi^2 w^2)`.
    pub fn mg(xi: f64, r: f64, potential: Potential) -> Result<Self> {
        check_xi(xi)?;
        check_rate(r)?;
        Ok(Self {
            kind: ModelKind::Mg,
            sigma: 0.0,
            r,
            alpha: None,
            xi,
            deformation: None,
            potential,
            chart: Chart::Price,
        })
    }

    /// Coordinate-deformed 2D model: both metric legs pick up their factor.
    pub fn ncmg_theta(
        xi: f64,
        r: f64,
        theta: f64,
        f: ExprAst,
        g: ExprAst,
        potential: Potential,
    ) -> Result<Self> {
        check_xi(xi)?;
        check_rate(r)?;
        let deformation = DeformationSpec::new(theta, f, Some(g), 0.0)?;
        Ok(Self {
            kind: ModelKind::NcMgTheta,
            sigma: 0.0,
            r,
            alpha: None,
            xi,
            deformation: Some(deformation),
            potential,
            chart: Chart::Price,
        })
    }

    /// Momentum-shift deformed 2D model.
    pub fn ncmg_eta(xi: f64, r: f64, eta: f64, potential: Potential) -> Result<Self> {
        check_xi(xi)?;
        check_rate(r)?;
        let q_only = VarSet::new(&["q"])?;
        let deformation = DeformationSpec::new(0.0, q_only.constant(0.0), None, eta)?;
        Ok(Self {
            kind: ModelKind::NcMgEta,
            sigma: 0.0,
            r,
            alpha: None,
            xi,
            deformation: Some(deformation),
            potential,
            chart: Chart::Price,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn rate(&self) -> f64 {
        self.r
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn chart(&self) -> Chart {
        self.chart
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn deformation(&self) -> Option<&DeformationSpec> {
        self.deformation.as_ref()
    }

    /// Effective velocity coupling for `Bs2`/`NcBs2`: the matched value
    /// `r - sigma^2/2` under [`Potential::MatchBs`] (an explicitly supplied
    /// `alpha` must agree and is then used verbatim, so a stated zero stays
    /// an exact zero), the supplied `alpha` otherwise.
    pub fn effective_alpha(&self) -> Result<f64> {
        match self.potential {
            Potential::MatchBs => {
                let matched = self.r - 0.5 * self.sigma * self.sigma;
                if let Some(a) = self.alpha {
                    if (a - matched).abs() > MATCH_TOLERANCE * matched.abs().max(1.0) {
                        return Err(Error::Constraint(format!(
                            "match-BS requires alpha = r - sigma^2/2 = {matched}, got {a}"
                        )));
                    }
                    return Ok(a);
                }
                Ok(matched)
            }
            Potential::Expr(_) => self.alpha.ok_or_else(|| {
                Error::InvalidInput("alpha is required when the potential is explicit".into())
            }),
        }
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidInput(format!(
            "sigma must be strictly positive and finite, got {sigma}"
        )));
    }
    Ok(())
}

fn check_xi(xi: f64) -> Result<()> {
    if !(xi > 0.0) || !xi.is_finite() {
        return Err(Error::InvalidInput(format!(
            "xi must be strictly positive and finite, got {xi}"
        )));
    }
    Ok(())
}

fn check_rate(r: f64) -> Result<()> {
    if !r.is_finite() {
        return Err(Error::InvalidInput(format!("r must be finite, got {r}")));
    }
    Ok(())
}

/// Spatial domain the generator will be used on, in chart coordinates for 1D
/// models (price `q`, or `x = ln q` on the log chart) and price coordinates
/// `(q, w)` for 2D models.
#[derive(Debug, Clone, Copy)]
pub struct Domain {
    pub lo: f64,
    pub hi: f64,
    pub w: Option<(f64, f64)>,
}

impl Domain {
    pub fn interval(lo: f64, hi: f64) -> Self {
        Self { lo, hi, w: None }
    }

    pub fn rect(q: (f64, f64), w: (f64, f64)) -> Self {
        Self {
            lo: q.0,
            hi: q.1,
            w: Some(w),
        }
    }
}

/// Coefficient tuple of an assembled generator. One-dimensional generators
/// leave `b2`/`b1` unset.
#[derive(Debug, Clone)]
pub struct GeneratorCoefficients {
    a2: ExprAst,
    a1: ExprAst,
    a0: ExprAst,
    b2: Option<ExprAst>,
    b1: Option<ExprAst>,
}

impl GeneratorCoefficients {
    pub fn new_1d(a2: ExprAst, a1: ExprAst, a0: ExprAst) -> Result<Self> {
        for (e, name) in [(&a2, "a2"), (&a1, "a1"), (&a0, "a0")] {
            if e.vars().len() != 1 {
                return Err(Error::InvalidInput(format!(
                    "1D coefficient {name} must have exactly one variable"
                )));
            }
            if e.vars() != a2.vars() {
                return Err(Error::InvalidInput(
                    "generator coefficients must share one variable set".into(),
                ));
            }
        }
        Ok(Self {
            a2,
            a1,
            a0,
            b2: None,
            b1: None,
        })
    }

    pub fn new_2d(a2: ExprAst, b2: ExprAst, a1: ExprAst, b1: ExprAst, a0: ExprAst) -> Result<Self> {
        for (e, name) in [
            (&a2, "a2"),
            (&b2, "b2"),
            (&a1, "a1"),
            (&b1, "b1"),
            (&a0, "a0"),
        ] {
            if e.vars().len() != 2 {
                return Err(Error::InvalidInput(format!(
                    "2D coefficient {name} must have exactly two variables"
                )));
            }
            if e.vars() != a2.vars() {
                return Err(Error::InvalidInput(
                    "generator coefficients must share one variable set".into(),
                ));
            }
        }
        Ok(Self {
            a2,
            a1,
            a0,
            b2: Some(b2),
            b1: Some(b1),
        })
    }

    pub fn dim(&self) -> usize {
        if self.b2.is_some() {
            2
        } else {
            1
        }
    }

    pub fn a2(&self) -> &ExprAst {
        &self.a2
    }

    pub fn a1(&self) -> &ExprAst {
        &self.a1
    }

    pub fn a0(&self) -> &ExprAst {
        &self.a0
    }

    pub fn b2(&self) -> Option<&ExprAst> {
        self.b2.as_ref()
    }

    pub fn b1(&self) -> Option<&ExprAst> {
        self.b1.as_ref()
    }

    /// Applies the generator to a smooth expression over the same variables:
    /// `a2 f_qq + b2 f_ww + a1 f_q + b1 f_w + a0 f` with exact symbolic
    /// derivatives of `f`.
    pub fn apply_to(&self, f: &ExprAst) -> Result<ExprAst> {
        let names: Vec<String> = f.vars().names().to_vec();
        let q = names[0].as_str();
        let fq = f.differentiate(q)?;
        let fqq = fq.differentiate(q)?;
        let mut out = self
            .a2
            .mul(&fqq)
            .add(&self.a1.mul(&fq))
            .add(&self.a0.mul(f));
        if let (Some(b2), Some(b1)) = (&self.b2, &self.b1) {
            let w = names[1].as_str();
            let fw = f.differentiate(w)?;
            let fww = fw.differentiate(w)?;
            out = out.add(&b2.mul(&fww)).add(&b1.mul(&fw));
        }
        Ok(out)
    }
}

/// Builds the generator coefficients of `spec` on `domain`.
///
/// Positivity of every diffusion coefficient is certified on the domain
/// (through the metric constructions), drift-matching constraints are
/// enforced, and deformations are validated non-degenerate.
pub fn build_generator(spec: &ModelSpec, domain: &Domain) -> Result<GeneratorCoefficients> {
    if spec.kind.is_two_dim() {
        let w = domain
            .w
            .ok_or_else(|| Error::InvalidInput("2D model requires a w domain".into()))?;
        build_2d(spec, (domain.lo, domain.hi), w)
    } else {
        build_1d(spec, domain.lo, domain.hi)
    }
}

fn build_1d(spec: &ModelSpec, lo: f64, hi: f64) -> Result<GeneratorCoefficients> {
    let c = 0.5 * spec.sigma * spec.sigma;
    match (spec.kind, spec.chart) {
        (ModelKind::Bs1 | ModelKind::Bs2, Chart::Log) => {
            let xs = VarSet::new(&["x"])?;
            let a2 = xs.constant(c);
            let a1 = match spec.kind {
                ModelKind::Bs2 => xs.constant(spec.effective_alpha()?),
                _ => xs.constant(0.0),
            };
            let a0 = scalar_term_1d(spec, &xs, Chart::Log)?;
            GeneratorCoefficients::new_1d(a2, a1, a0)
        }
        (ModelKind::Bs1 | ModelKind::Bs2, Chart::Price) => {
            let qs = VarSet::new(&["q"])?;
            let metric = MetricFactor1D::new(qs.var("q")?, lo, hi)?;
            let (k2, k1) = lb_coefficients_1d(&metric)?;
            let a2 = qs.constant(c).mul(&k2);
            let mut a1 = qs.constant(c).mul(&k1);
            if spec.kind == ModelKind::Bs2 {
                let alpha = spec.effective_alpha()?;
                a1 = a1.add(&qs.constant(alpha).mul(metric.h()));
            }
            let a0 = scalar_term_1d(spec, &qs, Chart::Price)?;
            GeneratorCoefficients::new_1d(a2, a1, a0)
        }
        (ModelKind::NcBs1 | ModelKind::NcBs2, Chart::Price) => {
            let qs = VarSet::new(&["q"])?;
            let base = MetricFactor1D::new(qs.var("q")?, lo, hi)?;
            let deformation = spec
                .deformation
                .as_ref()
                .expect("deformed models carry a deformation");
            let metric = deformed_factor_1d(&base, deformation)?;
            let (k2, k1) = lb_coefficients_1d(&metric)?;
            let a2 = qs.constant(c).mul(&k2);
            let mut a1 = qs.constant(c).mul(&k1);
            if spec.kind == ModelKind::NcBs2 {
                let alpha = spec.effective_alpha()?;
                a1 = a1.add(&qs.constant(alpha).mul(metric.h()));
            }
            let a0 = scalar_term_1d(spec, &qs, Chart::Price)?;
            GeneratorCoefficients::new_1d(a2, a1, a0)
        }
        (kind, Chart::Log) => Err(Error::Constraint(format!(
            "{kind:?} requires the price chart: its deformation profile is written in q"
        ))),
        _ => unreachable!("2D kinds are handled by build_2d"),
    }
}

/// Scalar coefficient `a0` of a 1D model. Matching pins the total scalar term
/// to `r` (with the per-model drift constraint); an explicit potential is
/// taken as written, plus `alpha^2/2` for the velocity-coupled models. On the
/// log chart an explicit potential in `q` is rewritten via `q = exp(x)`.
fn scalar_term_1d(spec: &ModelSpec, vs: &VarSet, chart: Chart) -> Result<ExprAst> {
    let velocity_shift = match spec.kind {
        ModelKind::Bs2 | ModelKind::NcBs2 => {
            let alpha = spec.effective_alpha()?;
            Some(0.5 * alpha * alpha)
        }
        _ => None,
    };
    match &spec.potential {
        Potential::MatchBs => {
            if matches!(spec.kind, ModelKind::Bs1 | ModelKind::NcBs1) {
                let c = 0.5 * spec.sigma * spec.sigma;
                if (spec.r - c).abs() > MATCH_TOLERANCE * c.abs().max(1.0) {
                    return Err(Error::Constraint(format!(
                        "match-BS for this model requires r = sigma^2/2 = {c}, got r = {}",
                        spec.r
                    )));
                }
            }
            Ok(vs.constant(-spec.r))
        }
        Potential::Expr(u) => {
            let u = match chart {
                Chart::Price => u.with_vars(vs)?,
                Chart::Log => {
                    let x = vs.var("x")?;
                    u.substitute("q", &x.exp())?
                }
            };
            let total = match velocity_shift {
                Some(shift) => u.add(&vs.constant(shift)),
                None => u,
            };
            Ok(total.neg())
        }
    }
}

fn build_2d(spec: &ModelSpec, q: (f64, f64), w: (f64, f64)) -> Result<GeneratorCoefficients> {
    let vs = VarSet::new(&["q", "w"])?;
    let qv = vs.var("q")?;
    let wv = vs.var("w")?;
    let two_xi2 = vs.constant(2.0 * spec.xi * spec.xi);

    let metric = match spec.kind {
        ModelKind::NcMgTheta => {
            let deformation = spec
                .deformation
                .as_ref()
                .expect("deformed models carry a deformation");
            deformation.validate_positive(q, Some(w))?;
            let factor_q = deformation.factor_q().with_vars(&vs)?;
            let factor_w = deformation.factor_w()?.with_vars(&vs)?;
            let g11 = wv.mul(&qv.mul(&factor_q).pow(2));
            let g22 = two_xi2.mul(&wv.mul(&factor_w).pow(2));
            DiagonalMetric2D::new(g11, g22, q, w)?
        }
        _ => {
            let g11 = wv.mul(&qv.pow(2));
            let g22 = two_xi2.mul(&wv.pow(2));
            DiagonalMetric2D::new(g11, g22, q, w)?
        }
    };

    let (ka, kb, kc, kd) = lb_coefficients_2d(&metric)?;
    let half = vs.constant(0.5);
    let a2 = half.mul(&ka);
    let b2 = half.mul(&kb);
    let mut a1 = half.mul(&kc);
    let b1 = half.mul(&kd);

    let mut a0 = match &spec.potential {
        Potential::MatchBs => vs.constant(-spec.r),
        Potential::Expr(u) => u.with_vars(&vs)?.neg(),
    };

    if spec.kind == ModelKind::NcMgEta {
        let eta = spec
            .deformation
            .as_ref()
            .expect("eta model carries a deformation")
            .eta();
        let (linear, scalar) = eta_potential_terms(eta);
        a1 = a1.add(&linear.with_vars(&vs)?);
        a0 = a0.sub(&scalar.with_vars(&vs)?);
    }

    GeneratorCoefficients::new_2d(a2, b2, a1, b1, a0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::{RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
        let u = (rng.next_u64() >> 11) as f64 * (1.0 / 9007199254740992.0);
        lo + (hi - lo) * u
    }

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn bs1_price_chart_coefficients() {
        let spec = ModelSpec::bs1(0.2, 0.02, Potential::MatchBs, Chart::Price).unwrap();
        let gen = build_generator(&spec, &Domain::interval(12.5, 800.0)).unwrap();
        assert!(rel_close(gen.a2().eval(&[100.0]).unwrap(), 200.0, 1e-12));
        assert!(rel_close(gen.a1().eval(&[100.0]).unwrap(), 2.0, 1e-12));
        assert_eq!(gen.a0().eval(&[100.0]).unwrap(), -0.02);
    }

    #[test]
    fn bs1_log_chart_is_constant_coefficient() {
        let spec = ModelSpec::bs1(0.2, 0.02, Potential::MatchBs, Chart::Log).unwrap();
        let gen = build_generator(&spec, &Domain::interval(3.0, 6.0)).unwrap();
        assert!(rel_close(gen.a2().eval(&[4.0]).unwrap(), 0.02, 1e-12));
        assert_eq!(gen.a1().eval(&[4.0]).unwrap(), 0.0);
        assert_eq!(gen.a0().eval(&[4.0]).unwrap(), -0.02);
    }

    #[test]
    fn bs1_match_constrains_rate() {
        let spec = ModelSpec::bs1(0.2, 0.05, Potential::MatchBs, Chart::Log).unwrap();
        match build_generator(&spec, &Domain::interval(3.0, 6.0)) {
            Err(Error::Constraint(msg)) => assert!(msg.contains("sigma^2/2")),
            other => panic!("expected constraint violation, got {other:?}"),
        }
    }

    #[test]
    fn bs2_matches_standard_drift_and_discount() {
        let spec = ModelSpec::bs2(0.2, 0.05, None, Potential::MatchBs, Chart::Price).unwrap();
        let gen = build_generator(&spec, &Domain::interval(12.5, 800.0)).unwrap();
        // a1 = sigma^2/2 * q + alpha * q = r * q once matched.
        assert!(rel_close(gen.a1().eval(&[100.0]).unwrap(), 5.0, 1e-12));
        assert_eq!(gen.a0().eval(&[100.0]).unwrap(), -0.05);
    }

    #[test]
    fn bs2_rejects_inconsistent_alpha() {
        let spec = ModelSpec::bs2(0.2, 0.05, Some(0.05), Potential::MatchBs, Chart::Log).unwrap();
        assert!(matches!(
            build_generator(&spec, &Domain::interval(3.0, 6.0)),
            Err(Error::Constraint(_))
        ));
    }

    #[test]
    fn bs2_exploratory_requires_alpha() {
        let qs = VarSet::new(&["q"]).unwrap();
        let u = qs.constant(0.03);
        let spec = ModelSpec::bs2(0.2, 0.05, None, Potential::Expr(u), Chart::Price).unwrap();
        assert!(matches!(
            build_generator(&spec, &Domain::interval(12.5, 800.0)),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn ncbs1_deformed_coefficients() {
        let qs = VarSet::new(&["q"]).unwrap();
        let sigma = std::f64::consts::SQRT_2; // kinetic prefactor exactly 1
        let spec = ModelSpec::ncbs1(
            sigma,
            0.0,
            0.1,
            qs.var("q").unwrap(),
            Potential::Expr(qs.constant(0.0)),
        )
        .unwrap();
        let gen = build_generator(&spec, &Domain::interval(0.5, 10.0)).unwrap();
        // h = q(1 + 0.1 q): h(2) = 2.4, h'(2) = 1.4.
        assert!(rel_close(gen.a2().eval(&[2.0]).unwrap(), 2.4 * 2.4, 1e-12));
        assert!(rel_close(gen.a1().eval(&[2.0]).unwrap(), 2.4 * 1.4, 1e-12));
    }

    #[test]
    fn ncbs1_zero_theta_reduces_to_bs1_bitwise() {
        let qs = VarSet::new(&["q"]).unwrap();
        let f = ExprAst::parse("q/100", &qs).unwrap();
        let base = ModelSpec::bs1(0.2, 0.02, Potential::MatchBs, Chart::Price).unwrap();
        let deformed = ModelSpec::ncbs1(0.2, 0.02, 0.0, f, Potential::MatchBs).unwrap();
        let domain = Domain::interval(12.5, 800.0);
        let g0 = build_generator(&base, &domain).unwrap();
        let g1 = build_generator(&deformed, &domain).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let q = [uniform(&mut rng, 12.5, 800.0)];
            for (a, b) in [(g0.a2(), g1.a2()), (g0.a1(), g1.a1()), (g0.a0(), g1.a0())] {
                assert_eq!(
                    a.eval(&q).unwrap().to_bits(),
                    b.eval(&q).unwrap().to_bits(),
                    "coefficient differs at q = {}",
                    q[0]
                );
            }
        }
    }

    #[test]
    fn mg_coefficients_match_operator_expansion() {
        let spec = ModelSpec::mg(0.4, 0.02, Potential::MatchBs).unwrap();
        let domain = Domain::rect((12.5, 800.0), (0.0032, 0.32));
        let gen = build_generator(&spec, &domain).unwrap();
        let pt = [100.0, 0.04];
        assert!(rel_close(gen.a2().eval(&pt).unwrap(), 200.0, 1e-12));
        assert!(rel_close(
            gen.b2().unwrap().eval(&pt).unwrap(),
            2.56e-4,
            1e-12
        ));
        assert!(rel_close(gen.a1().eval(&pt).unwrap(), 2.0, 1e-12));
        assert!(rel_close(
            gen.b1().unwrap().eval(&pt).unwrap(),
            0.0032,
            1e-12
        ));
        assert_eq!(gen.a0().eval(&pt).unwrap(), -0.02);
    }

    #[test]
    fn ncmg_theta_zero_reduces_to_mg_bitwise() {
        let qs = VarSet::new(&["q"]).unwrap();
        let ws = VarSet::new(&["w"]).unwrap();
        let f = ExprAst::parse("q/100", &qs).unwrap();
        let g = ExprAst::parse("w", &ws).unwrap();
        let base = ModelSpec::mg(0.4, 0.02, Potential::MatchBs).unwrap();
        let deformed = ModelSpec::ncmg_theta(0.4, 0.02, 0.0, f, g, Potential::MatchBs).unwrap();
        let domain = Domain::rect((12.5, 800.0), (0.0032, 0.32));
        let g0 = build_generator(&base, &domain).unwrap();
        let g1 = build_generator(&deformed, &domain).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..200 {
            let pt = [
                uniform(&mut rng, 12.5, 800.0),
                uniform(&mut rng, 0.0032, 0.32),
            ];
            for (a, b) in [
                (g0.a2(), g1.a2()),
                (g0.a1(), g1.a1()),
                (g0.a0(), g1.a0()),
                (g0.b2().unwrap(), g1.b2().unwrap()),
                (g0.b1().unwrap(), g1.b1().unwrap()),
            ] {
                assert_eq!(
                    a.eval(&pt).unwrap().to_bits(),
                    b.eval(&pt).unwrap().to_bits(),
                    "coefficient differs at {pt:?}"
                );
            }
        }
    }

    #[test]
    fn ncmg_eta_adds_drift_and_scalar_terms() {
        let spec = ModelSpec::ncmg_eta(0.4, 0.02, 0.1, Potential::MatchBs).unwrap();
        let domain = Domain::rect((12.5, 800.0), (0.0032, 0.32));
        let gen = build_generator(&spec, &domain).unwrap();
        let pt = [100.0, 0.04];
        assert!(rel_close(gen.a1().eval(&pt).unwrap(), 3.6, 1e-12));
        assert!(rel_close(gen.a0().eval(&pt).unwrap(), -0.0232, 1e-12));
    }

    #[test]
    fn log_and_price_charts_agree_through_the_chain_rule() {
        let r = 0.5 * 0.2 * 0.2;
        let price = ModelSpec::bs1(0.2, r, Potential::MatchBs, Chart::Price).unwrap();
        let log = ModelSpec::bs1(0.2, r, Potential::MatchBs, Chart::Log).unwrap();
        let gp = build_generator(&price, &Domain::interval(12.5, 800.0)).unwrap();
        let gl = build_generator(&log, &Domain::interval(12.5_f64.ln(), 800.0_f64.ln())).unwrap();

        let qs = VarSet::new(&["q"]).unwrap();
        let xs = VarSet::new(&["x"]).unwrap();
        let c = ExprAst::parse("q^2*exp(-q/100)", &qs).unwrap();
        let v = c.substitute("q", &xs.var("x").unwrap().exp()).unwrap();
        let gq = gp.apply_to(&c).unwrap();
        let gx = gl.apply_to(&v).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let q = uniform(&mut rng, 12.5, 800.0);
            let a = gq.eval(&[q]).unwrap();
            let b = gx.eval(&[q.ln()]).unwrap();
            assert!(
                (a - b).abs() <= 1e-10 * a.abs().max(1.0),
                "charts disagree at q = {q}: {a} vs {b}"
            );
        }
    }

    #[test]
    fn parameter_validation() {
        assert!(ModelSpec::bs1(0.0, 0.02, Potential::MatchBs, Chart::Log).is_err());
        assert!(ModelSpec::mg(-0.5, 0.02, Potential::MatchBs).is_err());
        assert!(ModelSpec::bs1(0.2, f64::NAN, Potential::MatchBs, Chart::Log).is_err());
    }

    #[test]
    fn convention_string_names_the_time_direction() {
        let s = wick_sign_convention();
        assert!(s.contains("tau = T - t"));
        assert!(s.contains("tau = 0"));
    }
}
