//! The four subcommands, sharing config resolution and artifact plumbing.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use wickpde::checks;
use wickpde::models::{Chart, ModelKind};
use wickpde::oracles;
use wickpde::pricer::{self, auto_price_domain, auto_variance_domain, Priced};
use wickpde::solve::{Surface1D, Surface2D};

use crate::config::{self, kind_name, OracleKind, PotentialCfg, Resolved, RunConfig};
use crate::output::{artifact_path, cell, ensure_out_dir, write_text, Report};
use crate::CliError;

/// Flag state shared by every command.
pub struct Ctx {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub quiet: bool,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        artifact_path(self.out_dir.as_deref(), name)
    }
}

fn warn_peclet(peclet: f64) {
    if peclet > 1.0 {
        eprintln!(
            "warning: max cell Peclet number {peclet} exceeds 1; drift dominates diffusion on the coarsest cells, consider a finer grid"
        );
    }
}

/// Echoes the resolved run setup into the report. Values come from the
/// resolved types so derived quantities (matched rates, auto domains) appear
/// as the solver actually used them.
fn describe(report: &mut Report, cfg: &RunConfig, res: &Resolved) {
    let spec = &res.spec;
    let two_dim = spec.kind().is_two_dim();
    report.kv("model.kind", kind_name(spec.kind()));
    if two_dim {
        report.kv("model.xi", spec.xi());
    } else {
        report.kv("model.sigma", spec.sigma());
    }
    report.kv("model.r", spec.rate());
    if let Some(a) = cfg.model.alpha {
        report.kv("model.alpha", a);
    } else if matches!(spec.kind(), ModelKind::Bs2 | ModelKind::NcBs2) {
        report.kv("model.alpha", "matched");
    }
    if let Some(v) = cfg.model.theta {
        report.kv("model.theta", v);
    }
    if let Some(v) = cfg.model.eta {
        report.kv("model.eta", v);
    }
    if let Some(src) = &cfg.model.f {
        report.kv("model.f", src);
    }
    if let Some(src) = &cfg.model.g {
        report.kv("model.g", src);
    }
    let potential = match &cfg.model.potential {
        None => "match-bs".to_string(),
        Some(PotentialCfg::Named(s)) => s.clone(),
        Some(PotentialCfg::Level(v)) => format!("{v}"),
    };
    report.kv("model.potential", potential);

    let inst = &cfg.instrument;
    report.kv("instrument.kind", &inst.kind);
    report.kv("instrument.strike", inst.strike);
    report.kv("instrument.s0", inst.s0);
    if let Some(w0) = inst.w0 {
        report.kv("instrument.w0", w0);
    }
    report.kv("instrument.maturity", inst.maturity);

    let num = &res.num;
    report.kv(
        "numerics.chart",
        match spec.chart() {
            Chart::Price => "price",
            Chart::Log => "log",
        },
    );
    report.kv("numerics.n", num.n);
    if two_dim {
        report.kv("numerics.n_w", num.n_w);
    }
    report.kv("numerics.steps", num.steps);
    report.kv("numerics.scheme", num.scheme.label());
    let auto = num.domain.is_none();
    let (lo, hi) = num
        .domain
        .unwrap_or_else(|| auto_price_domain(spec, &res.inst));
    report.kv(
        "numerics.domain",
        format!("[{lo}, {hi}]{}", if auto { " (auto)" } else { "" }),
    );
    if two_dim {
        let auto_w = num.w_domain.is_none();
        let (wlo, whi) = num
            .w_domain
            .unwrap_or_else(|| auto_variance_domain(res.inst.w0().expect("2D instrument")));
        report.kv(
            "numerics.w_domain",
            format!("[{wlo}, {whi}]{}", if auto_w { " (auto)" } else { "" }),
        );
    }
}

fn slice_csv_1d(surface: &Surface1D) -> String {
    let mut out = String::from("q,value\n");
    let grid = surface.grid();
    for (i, v) in surface.terminal().iter().enumerate() {
        writeln!(out, "{},{}", grid.price(i), v).expect("string write");
    }
    out
}

fn slice_csv_2d(surface: &Surface2D) -> String {
    let mut out = String::from("q,w,value\n");
    let grid = surface.grid();
    let values = surface.terminal();
    for i in 0..grid.q.n() {
        for j in 0..grid.w.n() {
            writeln!(
                out,
                "{},{},{}",
                grid.q.price(i),
                grid.w.price(j),
                values[grid.idx(i, j)]
            )
            .expect("string write");
        }
    }
    out
}

pub fn price(cfg: &RunConfig, ctx: &Ctx) -> Result<(), CliError> {
    let res = config::resolve(cfg, ctx.seed)?;
    ensure_out_dir(ctx.out_dir.as_deref())?;

    let start = Instant::now();
    let priced = pricer::price(&res.spec, &res.inst, &res.num)?;
    let elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
    warn_peclet(priced.max_cell_peclet());

    let csv = match &priced {
        Priced::OneDim(p) => slice_csv_1d(&p.surface),
        Priced::TwoDim(p) => slice_csv_2d(&p.surface),
    };
    let csv_path = ctx.path(res.csv_name.as_deref().unwrap_or("price.csv"));
    write_text(&csv_path, &csv)?;

    let mut report = Report::new("price");
    describe(&mut report, cfg, &res);
    report.blank();
    report.kv("price", priced.price());
    report.kv("max_cell_peclet", priced.max_cell_peclet());
    let report_path = ctx.path(res.report_name.as_deref().unwrap_or("report.txt"));
    write_text(&report_path, &report.render())?;

    if !ctx.quiet {
        println!("price = {}", priced.price());
        println!("wrote {} and {}", csv_path.display(), report_path.display());
        println!("solve time: {elapsed_ms:.1} ms");
    }
    Ok(())
}

struct MethodRow {
    method: &'static str,
    price: f64,
    stderr: Option<f64>,
}

pub fn compare(cfg: &RunConfig, ctx: &Ctx) -> Result<(), CliError> {
    let res = config::resolve(cfg, ctx.seed)?;
    if res.oracle.enabled.is_empty() {
        return Err(CliError::Config(format!(
            "no oracle applies to kind `{}` with this potential; compare needs at least one",
            kind_name(res.spec.kind())
        )));
    }
    ensure_out_dir(ctx.out_dir.as_deref())?;

    let start = Instant::now();
    let priced = pricer::price(&res.spec, &res.inst, &res.num)?;
    warn_peclet(priced.max_cell_peclet());
    let pde = priced.price();

    let s0 = res.inst.s0();
    let strike = res.inst.payoff().strike;
    let maturity = res.inst.maturity();
    let kind = res.inst.payoff().kind;
    let orc = &res.oracle;
    let mut rows = Vec::with_capacity(orc.enabled.len());
    for oracle in &orc.enabled {
        let row = match oracle {
            OracleKind::ClosedForm => MethodRow {
                method: "closed-form",
                price: pricer::closed_form_reference(&res.spec, &res.inst)?
                    .expect("applicability checked during config resolution"),
                stderr: None,
            },
            OracleKind::HeatTransform => MethodRow {
                method: "heat-transform",
                price: oracles::heat_transform_price(
                    s0,
                    strike,
                    res.spec.rate(),
                    res.spec.sigma(),
                    maturity,
                    orc.heat_n,
                    orc.heat_steps,
                    kind,
                )?,
                stderr: None,
            },
            OracleKind::McGbm => {
                let est = oracles::mc_gbm_price(
                    s0,
                    strike,
                    res.spec.rate(),
                    res.spec.sigma(),
                    maturity,
                    orc.paths,
                    orc.seed,
                    kind,
                )?;
                MethodRow {
                    method: "mc-gbm",
                    price: est.price,
                    stderr: Some(est.std_error),
                }
            }
            OracleKind::McMg => {
                let est = oracles::mc_mg_price(
                    s0,
                    res.inst.w0().expect("two-factor instruments carry w0"),
                    strike,
                    res.spec.rate(),
                    res.spec.xi(),
                    maturity,
                    orc.paths,
                    orc.mc_steps,
                    orc.seed,
                    kind,
                    orc.w_floor,
                )?;
                MethodRow {
                    method: "mc-mg",
                    price: est.price,
                    stderr: Some(est.std_error),
                }
            }
        };
        rows.push(row);
    }
    let elapsed_ms = start.elapsed().as_secs_f64() * 1e3;

    let mut csv = String::from("method,price,reference,abs_err,rel_err,stderr\n");
    writeln!(csv, "pde,{pde},,,,").expect("string write");
    let mut failures = Vec::new();
    let mut report = Report::new("compare");
    describe(&mut report, cfg, &res);
    report.blank();
    report.kv("pde_price", pde);
    report.kv("max_cell_peclet", priced.max_cell_peclet());
    if rows.iter().any(|r| r.stderr.is_some()) {
        report.kv("oracle.paths", orc.paths);
        report.kv("oracle.seed", orc.seed);
    }
    report.kv("oracle.rel_tol", orc.rel_tol);

    for row in &rows {
        let abs_err = (row.price - pde).abs();
        let rel_err = abs_err / pde.abs();
        writeln!(
            csv,
            "{},{},{},{},{},{}",
            row.method,
            row.price,
            pde,
            abs_err,
            rel_err,
            cell(row.stderr)
        )
        .expect("string write");

        let gate = match row.stderr {
            Some(se) => (orc.mc_sigmas * se).max(orc.rel_tol * pde.abs()),
            None => orc.rel_tol * pde.abs(),
        };
        let passed = abs_err <= gate;
        report.line(format!(
            "oracle {}: price = {}  abs_err = {}  gate = {}  status = {}",
            row.method,
            row.price,
            abs_err,
            gate,
            if passed { "pass" } else { "fail" }
        ));
        if !ctx.quiet {
            println!(
                "{:<14} price = {:<22} abs_err = {:<22} gate = {}",
                row.method, row.price, abs_err, gate
            );
        }
        if !passed {
            failures.push(format!(
                "{}: |{} - {}| = {} exceeds gate {}",
                row.method, row.price, pde, abs_err, gate
            ));
        }
    }
    report.line(format!(
        "gates: {} of {} passed",
        rows.len() - failures.len(),
        rows.len()
    ));

    let csv_path = ctx.path(res.csv_name.as_deref().unwrap_or("compare.csv"));
    write_text(&csv_path, &csv)?;
    let report_path = ctx.path(res.report_name.as_deref().unwrap_or("report.txt"));
    write_text(&report_path, &report.render())?;

    if !ctx.quiet {
        println!("pde price = {pde}");
        println!("wrote {} and {}", csv_path.display(), report_path.display());
        println!("total time: {elapsed_ms:.1} ms");
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Gate(failures.join("; ")))
    }
}

pub fn converge(cfg: &RunConfig, ctx: &Ctx) -> Result<(), CliError> {
    let res = config::resolve(cfg, ctx.seed)?;
    ensure_out_dir(ctx.out_dir.as_deref())?;

    let start = Instant::now();
    let rows = pricer::convergence_study(&res.spec, &res.inst, &res.num, &res.ladder)?;
    let elapsed_ms = start.elapsed().as_secs_f64() * 1e3;

    let mut csv = String::from("n,steps,price,reference,error,ratio,observed_order\n");
    let mut report = Report::new("converge");
    describe(&mut report, cfg, &res);
    report.blank();
    for row in &rows {
        writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            row.n,
            row.steps,
            row.price,
            row.reference,
            row.error,
            cell(row.ratio),
            cell(row.observed_order)
        )
        .expect("string write");
        report.line(format!(
            "rung n = {} steps = {}: error = {}  observed_order = {}",
            row.n,
            row.steps,
            row.error,
            row.observed_order
                .map_or_else(|| "-".to_string(), |o| format!("{o}"))
        ));
        if !ctx.quiet {
            println!(
                "n = {:<6} steps = {:<6} error = {:<22} order = {}",
                row.n,
                row.steps,
                row.error,
                row.observed_order
                    .map_or_else(|| "-".to_string(), |o| format!("{o}"))
            );
        }
    }

    let csv_path = ctx.path(res.csv_name.as_deref().unwrap_or("converge.csv"));
    write_text(&csv_path, &csv)?;
    let report_path = ctx.path(res.report_name.as_deref().unwrap_or("report.txt"));
    write_text(&report_path, &report.render())?;

    if !ctx.quiet {
        println!("wrote {} and {}", csv_path.display(), report_path.display());
        println!("total time: {elapsed_ms:.1} ms");
    }
    Ok(())
}

pub fn check(ctx: &Ctx) -> Result<(), CliError> {
    let seed = ctx.seed.unwrap_or(7);
    let results = checks::run_all(seed);
    if !ctx.quiet {
        for r in &results {
            println!(
                "{:<20} {}  {}",
                r.name,
                if r.passed { "pass" } else { "FAIL" },
                r.detail
            );
        }
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed == 0 {
        Ok(())
    } else {
        Err(CliError::Gate(format!(
            "{failed} of {} property checks failed",
            results.len()
        )))
    }
}
