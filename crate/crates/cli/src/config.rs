//! Run-configuration schema and its translation into engine types.
//!
//! A run file is TOML with five blocks: `[model]`, `[instrument]`,
//! `[numerics]`, `[oracle]`, and `[output]`. Only the first two are
//! mandatory. Every key is validated here so that diagnostics name the
//! offending key before any numerical work starts.

use std::path::Path;

use serde::Deserialize;

use wickpde::discretize::OptionKind;
use wickpde::expr::{ExprAst, VarSet};
use wickpde::models::{Chart, ModelKind, ModelSpec, Potential};
use wickpde::pricer::{Instrument, Numerics};
use wickpde::solve::Scheme;

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelBlock,
    pub instrument: InstrumentBlock,
    #[serde(default)]
    pub numerics: NumericsBlock,
    #[serde(default)]
    pub oracle: OracleBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    /// One of `bs1`, `bs2`, `ncbs1`, `ncbs2`, `mg`, `ncmg-theta`, `ncmg-eta`.
    pub kind: String,
    pub sigma: Option<f64>,
    pub r: Option<f64>,
    pub xi: Option<f64>,
    pub alpha: Option<f64>,
    pub theta: Option<f64>,
    pub eta: Option<f64>,
    /// Price-variance noise correlation. Accepted for the two-factor kinds
    /// for config portability, but the implemented family fixes it to zero.
    pub rho: Option<f64>,
    /// Deformation profile in `q` (ncbs1, ncbs2, ncmg-theta).
    pub f: Option<String>,
    /// Deformation profile in `w` (ncmg-theta).
    pub g: Option<String>,
    /// `"match-bs"` (default), a number, or an expression in the price
    /// variables (`q`, plus `w` for two-factor kinds).
    pub potential: Option<PotentialCfg>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum PotentialCfg {
    Named(String),
    Level(f64),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstrumentBlock {
    /// `call` or `put`.
    pub kind: String,
    pub strike: f64,
    pub s0: f64,
    /// Initial variance; required by the two-factor kinds.
    pub w0: Option<f64>,
    pub maturity: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumericsBlock {
    /// `price` (default) or `log`; `log` applies to bs1 and bs2 only.
    pub chart: Option<String>,
    pub n: Option<usize>,
    pub n_w: Option<usize>,
    pub steps: Option<usize>,
    /// `crank-nicolson` (default) or `implicit-euler`.
    pub scheme: Option<String>,
    /// `"auto"` or `[lo, hi]` price bounds.
    pub domain: Option<DomainCfg>,
    /// `"auto"` or `[lo, hi]` variance bounds (two-factor kinds).
    pub w_domain: Option<DomainCfg>,
    /// Explicit `[n, steps]` rungs for `converge`; overrides `levels`.
    pub ladder: Option<Vec<[usize; 2]>>,
    /// Rung count for the derived ladder that halves resolution per level
    /// down from `(n, steps)`. Defaults to 3.
    pub levels: Option<u32>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum DomainCfg {
    Keyword(String),
    Bounds([f64; 2]),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleBlock {
    /// Any of `closed-form`, `heat-transform`, `mc-gbm`, `mc-mg`. Defaults
    /// to the model's natural reference when one applies.
    pub enable: Option<Vec<String>>,
    pub paths: Option<u64>,
    pub mc_steps: Option<u32>,
    pub seed: Option<u64>,
    /// Relative tolerance gate for `compare`, default 0.02.
    pub rel_tol: Option<f64>,
    /// Monte Carlo gate width in standard errors, default 3.
    pub mc_sigmas: Option<f64>,
    pub w_floor: Option<f64>,
    pub heat_n: Option<usize>,
    pub heat_steps: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputBlock {
    /// CSV artifact name; defaults to `<command>.csv`.
    pub csv: Option<String>,
    /// Run report name; defaults to `report.txt`.
    pub report: Option<String>,
}

/// Oracle selection after applicability checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleKind {
    ClosedForm,
    HeatTransform,
    McGbm,
    McMg,
}

impl OracleKind {
    pub fn label(self) -> &'static str {
        match self {
            OracleKind::ClosedForm => "closed-form",
            OracleKind::HeatTransform => "heat-transform",
            OracleKind::McGbm => "mc-gbm",
            OracleKind::McMg => "mc-mg",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "closed-form" => Some(OracleKind::ClosedForm),
            "heat-transform" => Some(OracleKind::HeatTransform),
            "mc-gbm" => Some(OracleKind::McGbm),
            "mc-mg" => Some(OracleKind::McMg),
            _ => None,
        }
    }
}

/// Oracle parameters with defaults applied and the seed override folded in.
#[derive(Debug, Clone)]
pub struct OracleSettings {
    pub enabled: Vec<OracleKind>,
    pub paths: u64,
    pub mc_steps: u32,
    pub seed: u64,
    pub rel_tol: f64,
    pub mc_sigmas: f64,
    pub w_floor: f64,
    pub heat_n: usize,
    pub heat_steps: usize,
}

/// A config translated into engine types, ready to run.
pub struct Resolved {
    pub spec: ModelSpec,
    pub inst: Instrument,
    pub num: Numerics,
    pub ladder: Vec<(usize, usize)>,
    pub oracle: OracleSettings,
    pub csv_name: Option<String>,
    pub report_name: Option<String>,
}

pub fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("config parse failure: {e}")))
}

pub fn resolve(cfg: &RunConfig, seed_override: Option<u64>) -> Result<Resolved, CliError> {
    let chart = parse_chart(cfg.numerics.chart.as_deref())?;
    let spec = build_model(&cfg.model, chart)?;
    let inst = build_instrument(&cfg.instrument, &spec)?;
    let num = build_numerics(&cfg.numerics)?;
    let ladder = build_ladder(&cfg.numerics, &num)?;
    let oracle = build_oracle(&cfg.oracle, &spec, seed_override)?;
    Ok(Resolved {
        spec,
        inst,
        num,
        ladder,
        oracle,
        csv_name: cfg.output.csv.clone(),
        report_name: cfg.output.report.clone(),
    })
}

/// Config-file spelling of a model kind, for diagnostics and reports.
pub fn kind_name(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::Bs1 => "bs1",
        ModelKind::Bs2 => "bs2",
        ModelKind::NcBs1 => "ncbs1",
        ModelKind::NcBs2 => "ncbs2",
        ModelKind::Mg => "mg",
        ModelKind::NcMgTheta => "ncmg-theta",
        ModelKind::NcMgEta => "ncmg-eta",
    }
}

fn parse_chart(s: Option<&str>) -> Result<Chart, CliError> {
    match s {
        None | Some("price") => Ok(Chart::Price),
        Some("log") => Ok(Chart::Log),
        Some(other) => Err(CliError::Config(format!(
            "numerics.chart `{other}` must be `price` or `log`"
        ))),
    }
}

fn need(v: Option<f64>, key: &str, kind: &str) -> Result<f64, CliError> {
    v.ok_or_else(|| CliError::Config(format!("model.{key} is required for kind `{kind}`")))
}

fn need_expr(
    v: Option<&String>,
    key: &str,
    kind: &str,
    vars: &VarSet,
) -> Result<ExprAst, CliError> {
    let src =
        v.ok_or_else(|| CliError::Config(format!("model.{key} is required for kind `{kind}`")))?;
    ExprAst::parse(src, vars).map_err(|e| CliError::Config(format!("model.{key}: {e}")))
}

fn build_potential(p: Option<&PotentialCfg>, vars: &VarSet) -> Result<Potential, CliError> {
    match p {
        None => Ok(Potential::MatchBs),
        Some(PotentialCfg::Named(s)) if s == "match-bs" => Ok(Potential::MatchBs),
        Some(PotentialCfg::Named(s)) => ExprAst::parse(s, vars)
            .map(Potential::Expr)
            .map_err(|e| CliError::Config(format!("model.potential: {e}"))),
        Some(PotentialCfg::Level(v)) => {
            if !v.is_finite() {
                return Err(CliError::Config(format!(
                    "model.potential must be finite, got {v}"
                )));
            }
            Ok(Potential::Expr(vars.constant(*v)))
        }
    }
}

fn unknown_kind(other: &str) -> CliError {
    CliError::Config(format!(
        "model.kind `{other}` is not one of bs1, bs2, ncbs1, ncbs2, mg, ncmg-theta, ncmg-eta"
    ))
}

fn build_model(m: &ModelBlock, chart: Chart) -> Result<ModelSpec, CliError> {
    let kind = m.kind.as_str();
    let allowed: &[&str] = match kind {
        "bs1" => &["sigma", "r", "potential"],
        "bs2" => &["sigma", "r", "alpha", "potential"],
        "ncbs1" => &["sigma", "r", "theta", "f", "potential"],
        "ncbs2" => &["sigma", "r", "alpha", "theta", "f", "potential"],
        "mg" => &["xi", "r", "rho", "potential"],
        "ncmg-theta" => &["xi", "r", "theta", "f", "g", "rho", "potential"],
        "ncmg-eta" => &["xi", "r", "eta", "rho", "potential"],
        other => return Err(unknown_kind(other)),
    };
    let present = [
        ("sigma", m.sigma.is_some()),
        ("r", m.r.is_some()),
        ("xi", m.xi.is_some()),
        ("alpha", m.alpha.is_some()),
        ("theta", m.theta.is_some()),
        ("eta", m.eta.is_some()),
        ("rho", m.rho.is_some()),
        ("f", m.f.is_some()),
        ("g", m.g.is_some()),
    ];
    for (key, set) in present {
        if set && !allowed.contains(&key) {
            return Err(CliError::Config(format!(
                "model.{key} does not apply to kind `{kind}`"
            )));
        }
    }
    if let Some(rho) = m.rho {
        if rho != 0.0 {
            return Err(CliError::Constraint(format!(
                "model.rho = {rho}: the implemented family has uncorrelated price and variance noise, so rho must be 0"
            )));
        }
    }
    let two_dim = matches!(kind, "mg" | "ncmg-theta" | "ncmg-eta");
    if two_dim && chart == Chart::Log {
        return Err(CliError::Constraint(format!(
            "kind `{kind}` is priced in the price chart only; remove numerics.chart = \"log\""
        )));
    }

    let vq = VarSet::new(&["q"]).expect("valid variable list");
    let vw = VarSet::new(&["w"]).expect("valid variable list");
    let vqw = VarSet::new(&["q", "w"]).expect("valid variable list");
    let potential = build_potential(m.potential.as_ref(), if two_dim { &vqw } else { &vq })?;

    // BS1-family drift matching pins r to sigma^2/2, so the rate may be
    // omitted there and is derived instead of duplicated.
    let match_bs = matches!(potential, Potential::MatchBs);
    let rate = |r: Option<f64>, sigma: f64| -> Result<f64, CliError> {
        match r {
            Some(r) => Ok(r),
            None if matches!(kind, "bs1" | "ncbs1") && match_bs => Ok(0.5 * sigma * sigma),
            None => Err(CliError::Config(format!(
                "model.r is required for kind `{kind}`"
            ))),
        }
    };

    let spec = match kind {
        "bs1" => {
            let sigma = need(m.sigma, "sigma", kind)?;
            ModelSpec::bs1(sigma, rate(m.r, sigma)?, potential, chart)?
        }
        "bs2" => {
            let sigma = need(m.sigma, "sigma", kind)?;
            let r = need(m.r, "r", kind)?;
            ModelSpec::bs2(sigma, r, m.alpha, potential, chart)?
        }
        "ncbs1" => {
            let sigma = need(m.sigma, "sigma", kind)?;
            let theta = need(m.theta, "theta", kind)?;
            let f = need_expr(m.f.as_ref(), "f", kind, &vq)?;
            ModelSpec::ncbs1(sigma, rate(m.r, sigma)?, theta, f, potential)?
        }
        "ncbs2" => {
            let sigma = need(m.sigma, "sigma", kind)?;
            let r = need(m.r, "r", kind)?;
            let theta = need(m.theta, "theta", kind)?;
            let f = need_expr(m.f.as_ref(), "f", kind, &vq)?;
            ModelSpec::ncbs2(sigma, r, m.alpha, theta, f, potential)?
        }
        "mg" => {
            let xi = need(m.xi, "xi", kind)?;
            let r = need(m.r, "r", kind)?;
            ModelSpec::mg(xi, r, potential)?
        }
        "ncmg-theta" => {
            let xi = need(m.xi, "xi", kind)?;
            let r = need(m.r, "r", kind)?;
            let theta = need(m.theta, "theta", kind)?;
            let f = need_expr(m.f.as_ref(), "f", kind, &vq)?;
            let g = need_expr(m.g.as_ref(), "g", kind, &vw)?;
            ModelSpec::ncmg_theta(xi, r, theta, f, g, potential)?
        }
        "ncmg-eta" => {
            let xi = need(m.xi, "xi", kind)?;
            let r = need(m.r, "r", kind)?;
            let eta = need(m.eta, "eta", kind)?;
            ModelSpec::ncmg_eta(xi, r, eta, potential)?
        }
        _ => unreachable!("kind validated above"),
    };
    // A log chart on a price-chart-only 1D kind is rejected by the generator
    // builder at pricing time; the 2D kinds never reach it, hence the early
    // check above.
    Ok(spec)
}

fn build_instrument(i: &InstrumentBlock, spec: &ModelSpec) -> Result<Instrument, CliError> {
    let kind = match i.kind.as_str() {
        "call" => OptionKind::Call,
        "put" => OptionKind::Put,
        other => {
            return Err(CliError::Config(format!(
                "instrument.kind `{other}` must be `call` or `put`"
            )))
        }
    };
    if spec.kind().is_two_dim() && i.w0.is_none() {
        return Err(CliError::Config(
            "instrument.w0 is required for two-factor models".into(),
        ));
    }
    Ok(Instrument::new(kind, i.strike, i.s0, i.w0, i.maturity)?)
}

fn parse_scheme(s: Option<&str>) -> Result<Scheme, CliError> {
    match s {
        None | Some("crank-nicolson") => Ok(Scheme::CrankNicolson),
        Some("implicit-euler") => Ok(Scheme::ImplicitEuler),
        Some(other) => Err(CliError::Config(format!(
            "numerics.scheme `{other}` must be `crank-nicolson` or `implicit-euler`"
        ))),
    }
}

fn parse_domain(d: Option<&DomainCfg>, key: &str) -> Result<Option<(f64, f64)>, CliError> {
    match d {
        None => Ok(None),
        Some(DomainCfg::Keyword(s)) if s == "auto" => Ok(None),
        Some(DomainCfg::Keyword(s)) => Err(CliError::Config(format!(
            "{key} `{s}` must be \"auto\" or a [lo, hi] pair"
        ))),
        Some(DomainCfg::Bounds([lo, hi])) => Ok(Some((*lo, *hi))),
    }
}

fn build_numerics(nb: &NumericsBlock) -> Result<Numerics, CliError> {
    let mut num = Numerics::default();
    if let Some(n) = nb.n {
        num.n = n;
    }
    if let Some(n_w) = nb.n_w {
        num.n_w = n_w;
    }
    if let Some(steps) = nb.steps {
        num.steps = steps;
    }
    num.scheme = parse_scheme(nb.scheme.as_deref())?;
    num.domain = parse_domain(nb.domain.as_ref(), "numerics.domain")?;
    num.w_domain = parse_domain(nb.w_domain.as_ref(), "numerics.w_domain")?;
    Ok(num)
}

fn build_ladder(nb: &NumericsBlock, num: &Numerics) -> Result<Vec<(usize, usize)>, CliError> {
    if let Some(rows) = &nb.ladder {
        if rows.is_empty() {
            return Err(CliError::Config("numerics.ladder must not be empty".into()));
        }
        return Ok(rows.iter().map(|&[n, steps]| (n, steps)).collect());
    }
    let levels = nb.levels.unwrap_or(3);
    if levels == 0 || levels > 12 {
        return Err(CliError::Config(format!(
            "numerics.levels must be between 1 and 12, got {levels}"
        )));
    }
    let mut ladder = Vec::with_capacity(levels as usize);
    for shift in (0..levels).rev() {
        let n = ((num.n.max(3) - 1) >> shift) + 1;
        let steps = (num.steps >> shift).max(1);
        ladder.push((n.max(3), steps));
    }
    Ok(ladder)
}

// The `!(x > 0.0)` guards fail on NaN; `partial_cmp` would lose that.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
fn build_oracle(
    ob: &OracleBlock,
    spec: &ModelSpec,
    seed_override: Option<u64>,
) -> Result<OracleSettings, CliError> {
    let bs_equivalent = matches!(spec.kind(), ModelKind::Bs1 | ModelKind::Bs2)
        && matches!(spec.potential(), Potential::MatchBs);
    let mg_plain = spec.kind() == ModelKind::Mg && matches!(spec.potential(), Potential::MatchBs);

    let enabled = match &ob.enable {
        Some(names) => {
            let mut v = Vec::new();
            for name in names {
                let kind = OracleKind::parse(name).ok_or_else(|| {
                    CliError::Config(format!(
                        "oracle.enable entry `{name}` is not one of closed-form, heat-transform, mc-gbm, mc-mg"
                    ))
                })?;
                let applies = match kind {
                    OracleKind::McMg => mg_plain,
                    _ => bs_equivalent,
                };
                if !applies {
                    let need = match kind {
                        OracleKind::McMg => "kind `mg`",
                        _ => "kind `bs1` or `bs2`",
                    };
                    return Err(CliError::Config(format!(
                        "oracle `{}` requires {need} with potential = \"match-bs\", got kind `{}`",
                        kind.label(),
                        kind_name(spec.kind()),
                    )));
                }
                if !v.contains(&kind) {
                    v.push(kind);
                }
            }
            v
        }
        None if bs_equivalent => vec![OracleKind::ClosedForm],
        None if mg_plain => vec![OracleKind::McMg],
        None => Vec::new(),
    };

    let rel_tol = ob.rel_tol.unwrap_or(0.02);
    if !(rel_tol > 0.0) || !rel_tol.is_finite() {
        return Err(CliError::Config(format!(
            "oracle.rel_tol must be positive and finite, got {rel_tol}"
        )));
    }
    let mc_sigmas = ob.mc_sigmas.unwrap_or(3.0);
    if !(mc_sigmas >= 0.0) || !mc_sigmas.is_finite() {
        return Err(CliError::Config(format!(
            "oracle.mc_sigmas must be non-negative and finite, got {mc_sigmas}"
        )));
    }
    Ok(OracleSettings {
        enabled,
        paths: ob.paths.unwrap_or(200_000),
        mc_steps: ob.mc_steps.unwrap_or(200),
        seed: seed_override.or(ob.seed).unwrap_or(1),
        rel_tol,
        mc_sigmas,
        w_floor: ob.w_floor.unwrap_or(1e-4),
        heat_n: ob.heat_n.unwrap_or(2001),
        heat_steps: ob.heat_steps.unwrap_or(400),
    })
}
