//! End-to-end pricing orchestration: builds the generator for a model,
//! chooses the computational domain, assembles, evolves, and interpolates
//! the price at the instrument's spot. Also hosts the convergence-study
//! machinery used by the command-line `converge` mode.

use crate::discretize::{
    assemble_1d, assemble_2d, default_boundaries_1d, default_boundaries_2d, Grid1D, Grid2D,
    OptionKind, Payoff,
};
use crate::error::{Error, Result};
use crate::models::{build_generator, Chart, Domain, ModelKind, ModelSpec, Potential};
use crate::oracles::bs_closed_form;
use crate::solve::{evolve_1d, evolve_2d, Scheme, Surface1D, Surface2D};

/// What is being priced: payoff, spot, optional initial variance for
/// two-factor models, and time to maturity.
#[derive(Debug, Clone, Copy)]
pub struct Instrument {
    payoff: Payoff,
    s0: f64,
    w0: Option<f64>,
    maturity: f64,
}

impl Instrument {
    pub fn new(
        kind: OptionKind,
        strike: f64,
        s0: f64,
        w0: Option<f64>,
        maturity: f64,
    ) -> Result<Self> {
        let payoff = Payoff::new(kind, strike)?;
        if !s0.is_finite() || !(s0 > 0.0) {
            return Err(Error::InvalidInput(format!(
                "spot must be positive and finite, got {s0}"
            )));
        }
        if let Some(w) = w0 {
            if !w.is_finite() || !(w > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "initial variance must be positive and finite, got {w}"
                )));
            }
        }
        if !maturity.is_finite() || !(maturity > 0.0) {
            return Err(Error::InvalidInput(format!(
                "maturity must be positive and finite, got {maturity}"
            )));
        }
        Ok(Self {
            payoff,
            s0,
            w0,
            maturity,
        })
    }

    pub fn payoff(&self) -> &Payoff {
        &self.payoff
    }

    pub fn s0(&self) -> f64 {
        self.s0
    }

    pub fn w0(&self) -> Option<f64> {
        self.w0
    }

    pub fn maturity(&self) -> f64 {
        self.maturity
    }
}

/// Grid and stepping controls. Domains are price bounds (per-axis for the
/// variance axis) and default to the standard truncations when absent:
/// `[K/8, 8K]` in the price chart, `ln S0 ± 6 sigma sqrt(T)` in the log
/// chart, and `w in [0.01 * (8 w0), 8 w0]` on the variance axis.
#[derive(Debug, Clone)]
pub struct Numerics {
    pub n: usize,
    pub n_w: usize,
    pub steps: usize,
    pub scheme: Scheme,
    pub domain: Option<(f64, f64)>,
    pub w_domain: Option<(f64, f64)>,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            n: 400,
            n_w: 80,
            steps: 400,
            scheme: Scheme::CrankNicolson,
            domain: None,
            w_domain: None,
        }
    }
}

/// A priced 1D run: the full surface plus the interpolated spot price.
#[derive(Debug, Clone)]
pub struct Priced1D {
    pub surface: Surface1D,
    pub price: f64,
    pub max_cell_peclet: f64,
}

/// A priced 2D run.
#[derive(Debug, Clone)]
pub struct Priced2D {
    pub surface: Surface2D,
    pub price: f64,
    pub max_cell_peclet: f64,
}

/// Result of a pricing run, one or two dimensional per the model kind.
#[derive(Debug, Clone)]
pub enum Priced {
    OneDim(Priced1D),
    TwoDim(Priced2D),
}

impl Priced {
    pub fn price(&self) -> f64 {
        match self {
            Priced::OneDim(p) => p.price,
            Priced::TwoDim(p) => p.price,
        }
    }

    pub fn max_cell_peclet(&self) -> f64 {
        match self {
            Priced::OneDim(p) => p.max_cell_peclet,
            Priced::TwoDim(p) => p.max_cell_peclet,
        }
    }
}

/// Default price-axis bounds for a model and instrument.
pub fn auto_price_domain(spec: &ModelSpec, inst: &Instrument) -> (f64, f64) {
    match spec.chart() {
        Chart::Price => {
            let k = inst.payoff().strike;
            (k / 8.0, 8.0 * k)
        }
        Chart::Log => {
            let width = 6.0 * spec.sigma() * inst.maturity().sqrt();
            (inst.s0() * (-width).exp(), inst.s0() * width.exp())
        }
    }
}

/// Default variance-axis bounds: `w_max = 8 w0`, floored at one percent of
/// `w_max` because the generator degenerates at `w = 0`.
pub fn auto_variance_domain(w0: f64) -> (f64, f64) {
    let w_max = 8.0 * w0;
    (0.01 * w_max, w_max)
}

fn validated_bounds(name: &str, lo: f64, hi: f64, inside: f64) -> Result<()> {
    if !lo.is_finite() || !hi.is_finite() || !(lo > 0.0) || !(hi > lo) {
        return Err(Error::InvalidInput(format!(
            "{name} domain must satisfy 0 < lo < hi, got [{lo}, {hi}]"
        )));
    }
    if !(lo < inside && inside < hi) {
        return Err(Error::InvalidInput(format!(
            "{name} domain [{lo}, {hi}] does not contain the evaluation point {inside}"
        )));
    }
    Ok(())
}

/// Prices a one-dimensional model.
pub fn price_1d(spec: &ModelSpec, inst: &Instrument, num: &Numerics) -> Result<Priced1D> {
    if spec.kind().is_two_dim() {
        return Err(Error::InvalidInput(format!(
            "{:?} is a two-factor model; price_1d covers one-dimensional models",
            spec.kind()
        )));
    }
    let (lo, hi) = num.domain.unwrap_or_else(|| auto_price_domain(spec, inst));
    validated_bounds("price", lo, hi, inst.s0())?;
    let gen = build_generator(spec, &Domain::interval(lo, hi))?;
    let (c_lo, c_hi) = match spec.chart() {
        Chart::Price => (lo, hi),
        Chart::Log => (lo.ln(), hi.ln()),
    };
    let grid = Grid1D::uniform(spec.chart(), c_lo, c_hi, num.n)?;
    let bc = default_boundaries_1d(inst.payoff(), &gen, &grid)?;
    let op = assemble_1d(&gen, &grid, &bc)?;
    let payoff = inst.payoff().sample(&grid);
    let surface = evolve_1d(&op, &payoff, inst.maturity(), num.steps, num.scheme)?;
    let price = surface.price_at(inst.s0())?;
    Ok(Priced1D {
        surface,
        price,
        max_cell_peclet: op.max_cell_peclet,
    })
}

/// Prices a two-dimensional model.
pub fn price_2d(spec: &ModelSpec, inst: &Instrument, num: &Numerics) -> Result<Priced2D> {
    if !spec.kind().is_two_dim() {
        return Err(Error::InvalidInput(format!(
            "{:?} is one-dimensional; price_2d covers two-factor models",
            spec.kind()
        )));
    }
    let w0 = inst.w0().ok_or_else(|| {
        Error::InvalidInput("two-factor models need an initial variance w0".into())
    })?;
    let (q_lo, q_hi) = num.domain.unwrap_or_else(|| auto_price_domain(spec, inst));
    let (w_lo, w_hi) = num.w_domain.unwrap_or_else(|| auto_variance_domain(w0));
    validated_bounds("price", q_lo, q_hi, inst.s0())?;
    validated_bounds("variance", w_lo, w_hi, w0)?;
    let gen = build_generator(spec, &Domain::rect((q_lo, q_hi), (w_lo, w_hi)))?;
    let grid = Grid2D::new(
        Grid1D::uniform(Chart::Price, q_lo, q_hi, num.n)?,
        Grid1D::uniform(Chart::Price, w_lo, w_hi, num.n_w)?,
    )?;
    let bc = default_boundaries_2d(inst.payoff(), &gen, &grid)?;
    let op = assemble_2d(&gen, &grid, &bc)?;
    let payoff = inst.payoff().sample_2d(&grid);
    let surface = evolve_2d(&op, &payoff, inst.maturity(), num.steps)?;
    let price = surface.price_at(inst.s0(), w0)?;
    Ok(Priced2D {
        surface,
        price,
        max_cell_peclet: op.max_cell_peclet,
    })
}

/// Prices any model, dispatching on its dimensionality.
pub fn price(spec: &ModelSpec, inst: &Instrument, num: &Numerics) -> Result<Priced> {
    if spec.kind().is_two_dim() {
        Ok(Priced::TwoDim(price_2d(spec, inst, num)?))
    } else {
        Ok(Priced::OneDim(price_1d(spec, inst, num)?))
    }
}

/// Closed-form reference price when one exists: the rate-matched BS-family
/// models reproduce the textbook formula exactly, other models have none.
pub fn closed_form_reference(spec: &ModelSpec, inst: &Instrument) -> Result<Option<f64>> {
    let matched = matches!(spec.potential(), Potential::MatchBs)
        && matches!(spec.kind(), ModelKind::Bs1 | ModelKind::Bs2);
    if !matched {
        return Ok(None);
    }
    Ok(Some(bs_closed_form(
        inst.s0(),
        inst.payoff().strike,
        spec.rate(),
        spec.sigma(),
        inst.maturity(),
        inst.payoff().kind,
    )?))
}

/// One rung of a convergence ladder.
#[derive(Debug, Clone, Copy)]
pub struct ConvergenceRow {
    pub n: usize,
    pub steps: usize,
    pub price: f64,
    pub reference: f64,
    pub error: f64,
    /// Error of the previous rung divided by this rung's error.
    pub ratio: Option<f64>,
    /// `log2` of the ratio; near 2 for a second-order scheme when the ladder
    /// doubles resolution rung to rung.
    pub observed_order: Option<f64>,
}

/// Runs a 1D model over a ladder of `(n, steps)` pairs and reports errors
/// against a reference price: the closed form when the model has one,
/// otherwise a run at twice the finest ladder resolution.
pub fn convergence_study(
    spec: &ModelSpec,
    inst: &Instrument,
    num: &Numerics,
    ladder: &[(usize, usize)],
) -> Result<Vec<ConvergenceRow>> {
    if spec.kind().is_two_dim() {
        return Err(Error::InvalidInput(
            "convergence studies cover one-dimensional models".into(),
        ));
    }
    if ladder.is_empty() {
        return Err(Error::InvalidInput("convergence ladder is empty".into()));
    }
    let reference = match closed_form_reference(spec, inst)? {
        Some(v) => v,
        None => {
            let (n_max, s_max) = ladder
                .iter()
                .fold((0, 0), |acc, &(n, s)| (acc.0.max(n), acc.1.max(s)));
            let fine = Numerics {
                n: 2 * n_max - 1,
                steps: 2 * s_max,
                ..num.clone()
            };
            price_1d(spec, inst, &fine)?.price
        }
    };
    let mut rows = Vec::with_capacity(ladder.len());
    let mut prev_error: Option<f64> = None;
    for &(n, steps) in ladder {
        let run = price_1d(
            spec,
            inst,
            &Numerics {
                n,
                steps,
                ..num.clone()
            },
        )?;
        let error = (run.price - reference).abs();
        let ratio = prev_error.map(|p| p / error);
        rows.push(ConvergenceRow {
            n,
            steps,
            price: run.price,
            reference,
            error,
            ratio,
            observed_order: ratio.map(f64::log2),
        });
        prev_error = Some(error);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bs1_matched(chart: Chart) -> ModelSpec {
        ModelSpec::bs1(0.2, 0.02, Potential::MatchBs, chart).unwrap()
    }

    fn atm_call() -> Instrument {
        Instrument::new(OptionKind::Call, 100.0, 100.0, None, 1.0).unwrap()
    }

    #[test]
    fn bs1_log_chart_matches_the_closed_form() {
        let spec = bs1_matched(Chart::Log);
        let inst = atm_call();
        let run = price_1d(&spec, &inst, &Numerics::default()).unwrap();
        let reference = closed_form_reference(&spec, &inst).unwrap().unwrap();
        assert!(
            (run.price / reference - 1.0).abs() < 5e-3,
            "pde {} vs closed form {reference}",
            run.price
        );
    }

    #[test]
    fn bs1_price_chart_matches_the_closed_form() {
        let spec = bs1_matched(Chart::Price);
        let inst = atm_call();
        let run = price_1d(&spec, &inst, &Numerics::default()).unwrap();
        let reference = closed_form_reference(&spec, &inst).unwrap().unwrap();
        assert!(
            (run.price / reference - 1.0).abs() < 1e-2,
            "pde {} vs closed form {reference}",
            run.price
        );
    }

    #[test]
    fn bs2_carries_a_general_rate() {
        let spec = ModelSpec::bs2(0.2, 0.05, None, Potential::MatchBs, Chart::Log).unwrap();
        let inst = atm_call();
        let run = price_1d(&spec, &inst, &Numerics::default()).unwrap();
        let reference = closed_form_reference(&spec, &inst).unwrap().unwrap();
        assert!(
            (run.price / reference - 1.0).abs() < 5e-3,
            "pde {} vs closed form {reference}",
            run.price
        );
    }

    #[test]
    fn dispatch_rejects_dimension_mismatches() {
        let bs = bs1_matched(Chart::Log);
        let mg = ModelSpec::mg(0.5, 0.02, Potential::MatchBs).unwrap();
        let inst = atm_call();
        assert!(price_2d(&bs, &inst, &Numerics::default()).is_err());
        assert!(price_1d(&mg, &inst, &Numerics::default()).is_err());
        // 2D pricing without w0 is rejected.
        assert!(price(&mg, &inst, &Numerics::default()).is_err());
    }

    #[test]
    fn spot_outside_the_domain_is_rejected() {
        let spec = bs1_matched(Chart::Price);
        let inst = Instrument::new(OptionKind::Call, 100.0, 900.0, None, 1.0).unwrap();
        // Auto domain is [12.5, 800], which excludes a spot of 900.
        assert!(price_1d(&spec, &inst, &Numerics::default()).is_err());
    }

    #[test]
    fn convergence_rows_report_against_the_closed_form() {
        let spec = bs1_matched(Chart::Log);
        let inst = atm_call();
        let rows = convergence_study(&spec, &inst, &Numerics::default(), &[(101, 50), (201, 100)])
            .unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].ratio.is_none());
        assert!(rows[1].ratio.is_some());
        let reference = closed_form_reference(&spec, &inst).unwrap().unwrap();
        assert_eq!(rows[0].reference, reference);
        assert!(rows[1].error < rows[0].error);
    }
}
