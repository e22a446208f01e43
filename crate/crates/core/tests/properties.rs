//! Randomized and structural properties of the core library: parser
//! round-trips, derivative linearity, the Laplace-Beltrami expansion against
//! a finite-difference oracle, discrete operator consistency, and row-sum
//! conservation.

use proptest::prelude::*;

use wickpde::discretize::{assemble_1d, Boundary1D, Face, Grid1D};
use wickpde::expr::{ExprAst, VarSet};
use wickpde::geometry::{lb_coefficients_2d, DiagonalMetric2D};
use wickpde::models::{Chart, GeneratorCoefficients};

fn vq() -> VarSet {
    VarSet::new(&["q"]).unwrap()
}

/// Expression-source strategy covering the whole grammar.
fn expr_source() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        Just("q".to_string()),
        (3u32..250).prop_map(|c| format!("{}", c as f64 / 100.0)),
    ];
    leaf.prop_recursive(4, 64, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} + {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} - {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} * {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} / {b})")),
            (inner.clone(), 1u32..4).prop_map(|(a, e)| format!("({a})^{e}")),
            inner.clone().prop_map(|a| format!("(-{a})")),
            inner.clone().prop_map(|a| format!("exp({a})")),
            inner.clone().prop_map(|a| format!("ln({a})")),
            inner.prop_map(|a| format!("sqrt({a})")),
        ]
    })
}

proptest! {
    /// Printing an expression and reparsing it reproduces the same values
    /// bit for bit wherever the original evaluates.
    #[test]
    fn display_round_trip_preserves_evaluation(src in expr_source(), x in 0.5f64..2.0) {
        let vars = vq();
        if let Ok(ast) = ExprAst::parse(&src, &vars) {
            let printed = ast.to_string();
            let reparsed = ExprAst::parse(&printed, &vars)
                .unwrap_or_else(|e| panic!("reparse of `{printed}` failed: {e}"));
            match (ast.eval(&[x]), reparsed.eval(&[x])) {
                (Ok(a), Ok(b)) => prop_assert_eq!(a.to_bits(), b.to_bits()),
                (Err(_), Err(_)) => {}
                (a, b) => prop_assert!(false, "eval mismatch: {a:?} vs {b:?}"),
            }
        }
    }

    /// Differentiation is linear: D(a f + b g) = a Df + b Dg.
    #[test]
    fn differentiation_is_linear(
        f_src in expr_source(),
        g_src in expr_source(),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
        x in 0.6f64..1.9,
    ) {
        let vars = vq();
        let (f, g) = match (ExprAst::parse(&f_src, &vars), ExprAst::parse(&g_src, &vars)) {
            (Ok(f), Ok(g)) => (f, g),
            _ => return Ok(()),
        };
        let combo_src = format!("({a} * ({f_src}) + {b} * ({g_src}))");
        let combo = match ExprAst::parse(&combo_src, &vars) {
            Ok(c) => c,
            Err(_) => return Ok(()),
        };
        let (dc, df, dg) = (
            combo.differentiate("q").unwrap(),
            f.differentiate("q").unwrap(),
            g.differentiate("q").unwrap(),
        );
        if let (Ok(lhs), Ok(dfv), Ok(dgv)) = (dc.eval(&[x]), df.eval(&[x]), dg.eval(&[x])) {
            let rhs = a * dfv + b * dgv;
            if lhs.is_finite() && rhs.is_finite() && rhs.abs() < 1e12 {
                prop_assert!(
                    (lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs().max(rhs.abs())),
                    "D(combo) = {lhs} but a Df + b Dg = {rhs}"
                );
            }
        }
    }

    /// The symbolic first-order Laplace-Beltrami coefficients match a
    /// finite-difference evaluation of the divergence form for a family of
    /// smooth diagonal metrics.
    #[test]
    fn laplace_beltrami_matches_divergence_form(
        c1 in 0.2f64..2.0,
        c2 in 0.2f64..2.0,
        q in 0.6f64..1.8,
        w in 0.6f64..1.8,
    ) {
        let vars = VarSet::new(&["q", "w"]).unwrap();
        let g11 = ExprAst::parse(&format!("({c1} + q^2) * w"), &vars).unwrap();
        let g22 = ExprAst::parse(&format!("({c2} + w^2) * (1 + q^2)"), &vars).unwrap();
        let metric = DiagonalMetric2D::new(g11.clone(), g22.clone(), (0.5, 2.0), (0.5, 2.0)).unwrap();
        let (_, _, c_sym, d_sym) = lb_coefficients_2d(&metric).unwrap();

        let s = |q: f64, w: f64| (g11.eval(&[q, w]).unwrap() * g22.eval(&[q, w]).unwrap()).sqrt();
        let h = 1e-5;
        let fq = |q: f64, w: f64| g11.eval(&[q, w]).unwrap() / s(q, w);
        let fw = |q: f64, w: f64| g22.eval(&[q, w]).unwrap() / s(q, w);
        let c_fd = s(q, w) * (fq(q + h, w) - fq(q - h, w)) / (2.0 * h);
        let d_fd = s(q, w) * (fw(q, w + h) - fw(q, w - h)) / (2.0 * h);

        let cs = c_sym.eval(&[q, w]).unwrap();
        let ds = d_sym.eval(&[q, w]).unwrap();
        prop_assert!((cs - c_fd).abs() <= 1e-6 * (1.0 + cs.abs()), "C: {cs} vs fd {c_fd}");
        prop_assert!((ds - d_fd).abs() <= 1e-6 * (1.0 + ds.abs()), "D: {ds} vs fd {d_fd}");
    }

    /// With zero drift and zero scalar term, interior row sums vanish
    /// exactly whatever the diffusion profile.
    #[test]
    fn interior_row_sums_vanish_for_pure_diffusion(
        c in 0.1f64..5.0,
        p in 0u32..3,
        n in 5usize..40,
    ) {
        let vars = vq();
        let gen = GeneratorCoefficients::new_1d(
            ExprAst::parse(&format!("{c} * q^{p} + 0.3"), &vars).unwrap(),
            ExprAst::parse("0", &vars).unwrap(),
            ExprAst::parse("0", &vars).unwrap(),
        )
        .unwrap();
        let grid = Grid1D::uniform(Chart::Price, 0.5, 3.5, n).unwrap();
        let bc = Boundary1D {
            lo: Face::dirichlet(|_, _| 0.0),
            hi: Face::dirichlet(|_, _| 0.0),
        };
        let op = assemble_1d(&gen, &grid, &bc).unwrap();
        for i in 1..n - 1 {
            prop_assert_eq!(op.op.sub[i] + op.op.diag[i] + op.op.sup[i], 0.0);
        }
    }
}

/// Applying the assembled operator to samples of a smooth function
/// converges to the analytic generator action at second order.
#[test]
fn assembled_operator_is_second_order_consistent() {
    let vars = vq();
    let gen = GeneratorCoefficients::new_1d(
        ExprAst::parse("0.02 * q^2", &vars).unwrap(),
        ExprAst::parse("0.02 * q", &vars).unwrap(),
        ExprAst::parse("0 - 0.02", &vars).unwrap(),
    )
    .unwrap();
    let u = |q: f64| (0.01 * q).sin() + (-q / 300.0).exp();
    let du = |q: f64| 0.01 * (0.01 * q).cos() - (-q / 300.0).exp() / 300.0;
    let d2u = |q: f64| -1e-4 * (0.01 * q).sin() + (-q / 300.0).exp() / 9e4;
    let exact = |q: f64| 0.02 * q * q * d2u(q) + 0.02 * q * du(q) - 0.02 * u(q);

    let bc = Boundary1D {
        lo: Face::dirichlet(|_, _| 0.0),
        hi: Face::dirichlet(|_, _| 0.0),
    };
    let mut errors = Vec::new();
    for n in [101usize, 201, 401] {
        let grid = Grid1D::uniform(Chart::Price, 50.0, 250.0, n).unwrap();
        let op = assemble_1d(&gen, &grid, &bc).unwrap();
        let samples: Vec<f64> = (0..n).map(|i| u(grid.node(i))).collect();
        let mut out = vec![0.0; n];
        op.op.apply(&samples, &mut out);
        let err = (1..n - 1)
            .map(|i| (out[i] - exact(grid.node(i))).abs())
            .fold(0.0f64, f64::max);
        errors.push(err);
    }
    for pair in errors.windows(2) {
        let order = (pair[0] / pair[1]).log2();
        assert!(
            order >= 1.9,
            "observed consistency order {order} (errors {errors:?})"
        );
    }
}
