//! Spatial discretization: uniform grids, boundary conditions, payoffs, and
//! central-difference assembly of generator coefficients into banded
//! operators.
//!
//! Interior rows use standard second-order central differences,
//!
//! ```text
//! sub = a2/dx^2 - a1/(2 dx),  diag = -2 a2/dx^2 + a0,  sup = a2/dx^2 + a1/(2 dx),
//! ```
//!
//! with no upwinding; assembly records the largest cell Peclet number
//! `|a1| dx / (2 a2)` so callers can warn when it exceeds one. Boundary faces
//! are either Dirichlet (value prescribed per time and transverse coordinate)
//! or zero-second-derivative rows, which impose the PDE at the face with
//! `u_xx = 0` and a one-sided first derivative, keeping every row
//! tridiagonal.
//!
//! Two-dimensional operators are stored as per-line tridiagonal families (one
//! family sweeping q on each w line, one sweeping w on each q line) with the
//! scalar coefficient `a0` split evenly between the two families, the layout
//! the Douglas splitting consumes directly. Node `(i, j)` of a flattened 2D
//! field lives at index `i * n_w + j`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::ExprAst;
use crate::models::{Chart, GeneratorCoefficients};

/// Option payoff type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptionKind {
    Call,
    Put,
}

/// Vanilla terminal payoff.
#[derive(Debug, Clone, Copy)]
pub struct Payoff {
    pub kind: OptionKind,
    pub strike: f64,
}

impl Payoff {
    pub fn new(kind: OptionKind, strike: f64) -> Result<Self> {
        if !(strike > 0.0) || !strike.is_finite() {
            return Err(Error::InvalidInput(format!(
                "strike must be strictly positive, got {strike}"
            )));
        }
        Ok(Self { kind, strike })
    }

    pub fn value(&self, price: f64) -> f64 {
        match self.kind {
            OptionKind::Call => (price - self.strike).max(0.0),
            OptionKind::Put => (self.strike - price).max(0.0),
        }
    }

    /// Payoff sampled at the grid's price nodes.
    pub fn sample(&self, grid: &Grid1D) -> Vec<f64> {
        (0..grid.n()).map(|i| self.value(grid.price(i))).collect()
    }

    /// Payoff sampled over a 2D grid, flattened as `i * n_w + j`.
    pub fn sample_2d(&self, grid: &Grid2D) -> Vec<f64> {
        let mut out = Vec::with_capacity(grid.q.n() * grid.w.n());
        for i in 0..grid.q.n() {
            let v = self.value(grid.q.price(i));
            for _ in 0..grid.w.n() {
                out.push(v);
            }
        }
        out
    }
}

/// Uniform 1D grid in a chart coordinate.
#[derive(Debug, Clone)]
pub struct Grid1D {
    chart: Chart,
    lo: f64,
    hi: f64,
    n: usize,
}

impl Grid1D {
    /// Uniform grid of `n >= 3` nodes on `[lo, hi]`. Price-chart bounds must
    /// be strictly positive.
    pub fn uniform(chart: Chart, lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidInput(format!(
                "grid needs at least 3 nodes, got {n}"
            )));
        }
        if !lo.is_finite() || !hi.is_finite() || !(hi > lo) {
            return Err(Error::InvalidInput(format!(
                "grid bounds must be finite with lo < hi, got [{lo}, {hi}]"
            )));
        }
        if chart == Chart::Price && !(lo > 0.0) {
            return Err(Error::InvalidInput(format!(
                "price-chart grids require lo > 0, got {lo}"
            )));
        }
        Ok(Self { chart, lo, hi, n })
    }

    pub fn chart(&self) -> Chart {
        self.chart
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    /// Chart coordinate of node `i`.
    pub fn node(&self, i: usize) -> f64 {
        self.lo + self.spacing() * i as f64
    }

    /// Price at node `i` (`exp` of the coordinate on the log chart).
    pub fn price(&self, i: usize) -> f64 {
        match self.chart {
            Chart::Price => self.node(i),
            Chart::Log => self.node(i).exp(),
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    /// Chart coordinate of a price.
    pub fn coord_of_price(&self, price: f64) -> Result<f64> {
        match self.chart {
            Chart::Price => Ok(price),
            Chart::Log => {
                if price > 0.0 {
                    Ok(price.ln())
                } else {
                    Err(Error::InvalidInput(format!(
                        "log-chart coordinates require a positive price, got {price}"
                    )))
                }
            }
        }
    }

    /// Bracketing node and interpolation weight for a chart coordinate.
    /// Errors when the coordinate falls outside the grid hull.
    pub fn locate(&self, coord: f64) -> Result<(usize, f64)> {
        let span = 1e-12 * (self.hi - self.lo).abs();
        if coord < self.lo - span || coord > self.hi + span {
            return Err(Error::InvalidInput(format!(
                "coordinate {coord} lies outside the grid hull [{}, {}]",
                self.lo, self.hi
            )));
        }
        let t = ((coord - self.lo) / self.spacing()).clamp(0.0, (self.n - 1) as f64);
        let i = (t.floor() as usize).min(self.n - 2);
        Ok((i, t - i as f64))
    }
}

/// Tensor grid for 2D models; both axes are price-chart coordinates.
#[derive(Debug, Clone)]
pub struct Grid2D {
    pub q: Grid1D,
    pub w: Grid1D,
}

impl Grid2D {
    pub fn new(q: Grid1D, w: Grid1D) -> Result<Self> {
        if q.chart() != Chart::Price || w.chart() != Chart::Price {
            return Err(Error::InvalidInput(
                "2D grids use price-chart coordinates on both axes".into(),
            ));
        }
        Ok(Self { q, w })
    }

    /// Flat index of node `(i, j)`.
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.w.n() + j
    }
}

/// Dirichlet boundary value as a function of `(tau, transverse coordinate)`.
/// The transverse coordinate is the other axis's price coordinate in 2D and
/// is passed as zero in 1D.
pub type FaceFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Boundary treatment of one grid face.
#[derive(Clone)]
pub enum Face {
    Dirichlet(FaceFn),
    /// Impose the PDE at the face with vanishing second derivative and a
    /// one-sided first derivative.
    ZeroSecondDerivative,
}

impl std::fmt::Debug for Face {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Face::Dirichlet(_) => f.write_str("Dirichlet"),
            Face::ZeroSecondDerivative => f.write_str("ZeroSecondDerivative"),
        }
    }
}

impl Face {
    pub fn dirichlet<F>(f: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        Face::Dirichlet(Arc::new(f))
    }

    pub fn is_dirichlet(&self) -> bool {
        matches!(self, Face::Dirichlet(_))
    }
}

/// Boundary conditions of a 1D problem.
#[derive(Debug, Clone)]
pub struct Boundary1D {
    pub lo: Face,
    pub hi: Face,
}

/// Boundary conditions of a 2D problem, one face per side of the box.
#[derive(Debug, Clone)]
pub struct Boundary2D {
    pub q_lo: Face,
    pub q_hi: Face,
    pub w_lo: Face,
    pub w_hi: Face,
}

/// Tridiagonal matrix stored by rows; `sub[0]` and `sup[n-1]` are unused and
/// kept at zero.
#[derive(Debug, Clone)]
pub struct Tridiagonal {
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
}

impl Tridiagonal {
    pub fn zeros(n: usize) -> Self {
        Self {
            sub: vec![0.0; n],
            diag: vec![0.0; n],
            sup: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Matrix-vector product `out = T u`.
    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        let n = self.len();
        debug_assert_eq!(u.len(), n);
        debug_assert_eq!(out.len(), n);
        for i in 0..n {
            let mut v = self.diag[i] * u[i];
            if i > 0 {
                v += self.sub[i] * u[i - 1];
            }
            if i + 1 < n {
                v += self.sup[i] * u[i + 1];
            }
            out[i] = v;
        }
    }
}

/// Assembled 1D spatial operator plus the boundary data needed to step it.
#[derive(Debug, Clone)]
pub struct BandedOperator1D {
    pub op: Tridiagonal,
    pub grid: Grid1D,
    pub bc: Boundary1D,
    /// Largest interior cell Peclet number `|a1| dx / (2 a2)` encountered.
    pub max_cell_peclet: f64,
}

/// Assembled 2D spatial operator: one tridiagonal family per sweep direction,
/// with `a0` split evenly between them.
#[derive(Debug, Clone)]
pub struct BandedOperator2D {
    /// q-direction operator on each w line; `lq[j]` has `n_q` rows.
    pub lq: Vec<Tridiagonal>,
    /// w-direction operator on each q line; `lw[i]` has `n_w` rows.
    pub lw: Vec<Tridiagonal>,
    pub grid: Grid2D,
    pub bc: Boundary2D,
    pub max_cell_peclet: f64,
}

fn eval_on_grid(expr: &ExprAst, grid: &Grid1D, name: &str) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(grid.n());
    for i in 0..grid.n() {
        let x = grid.node(i);
        let v = expr.eval(&[x])?;
        if !v.is_finite() {
            return Err(Error::Numerics(format!(
                "non-finite coefficient {name} = {v} at node {i} (coordinate {x})"
            )));
        }
        out.push(v);
    }
    Ok(out)
}

fn eval_on_grid_2d(expr: &ExprAst, grid: &Grid2D, name: &str) -> Result<Vec<f64>> {
    let (nq, nw) = (grid.q.n(), grid.w.n());
    let mut out = Vec::with_capacity(nq * nw);
    for i in 0..nq {
        let q = grid.q.node(i);
        for j in 0..nw {
            let w = grid.w.node(j);
            let v = expr.eval(&[q, w])?;
            if !v.is_finite() {
                return Err(Error::Numerics(format!(
                    "non-finite coefficient {name} = {v} at node ({i}, {j}) (q = {q}, w = {w})"
                )));
            }
            out.push(v);
        }
    }
    Ok(out)
}

fn cell_peclet(a1: f64, a2: f64, dx: f64) -> f64 {
    if a2 > 0.0 {
        a1.abs() * dx / (2.0 * a2)
    } else if a1 == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Fills the face rows of a tridiagonal operator: Dirichlet rows are zeroed
/// (their values are prescribed by the stepper), zero-second-derivative rows
/// impose `a1 u_x + a0 u` with a one-sided difference.
fn fill_face_rows(
    tri: &mut Tridiagonal,
    lo: &Face,
    hi: &Face,
    a1: (f64, f64),
    a0: (f64, f64),
    dx: f64,
) {
    let n = tri.len();
    match lo {
        Face::Dirichlet(_) => {}
        Face::ZeroSecondDerivative => {
            tri.diag[0] = a0.0 - a1.0 / dx;
            tri.sup[0] = a1.0 / dx;
        }
    }
    match hi {
        Face::Dirichlet(_) => {}
        Face::ZeroSecondDerivative => {
            tri.diag[n - 1] = a0.1 + a1.1 / dx;
            tri.sub[n - 1] = -a1.1 / dx;
        }
    }
}

/// Assembles a 1D generator into a tridiagonal operator on `grid`.
pub fn assemble_1d(
    gen: &GeneratorCoefficients,
    grid: &Grid1D,
    bc: &Boundary1D,
) -> Result<BandedOperator1D> {
    if gen.dim() != 1 {
        return Err(Error::InvalidInput(
            "assemble_1d requires a one-dimensional generator".into(),
        ));
    }
    let n = grid.n();
    let dx = grid.spacing();
    let a2 = eval_on_grid(gen.a2(), grid, "a2")?;
    let a1 = eval_on_grid(gen.a1(), grid, "a1")?;
    let a0 = eval_on_grid(gen.a0(), grid, "a0")?;

    let mut tri = Tridiagonal::zeros(n);
    let mut peclet: f64 = 0.0;
    for i in 1..n - 1 {
        let d2 = a2[i] / (dx * dx);
        let d1 = a1[i] / (2.0 * dx);
        tri.sub[i] = d2 - d1;
        tri.diag[i] = -2.0 * d2 + a0[i];
        tri.sup[i] = d2 + d1;
        peclet = peclet.max(cell_peclet(a1[i], a2[i], dx));
    }
    fill_face_rows(
        &mut tri,
        &bc.lo,
        &bc.hi,
        (a1[0], a1[n - 1]),
        (a0[0], a0[n - 1]),
        dx,
    );

    Ok(BandedOperator1D {
        op: tri,
        grid: grid.clone(),
        bc: bc.clone(),
        max_cell_peclet: peclet,
    })
}

/// Assembles a 2D generator into per-line tridiagonal families on `grid`.
pub fn assemble_2d(
    gen: &GeneratorCoefficients,
    grid: &Grid2D,
    bc: &Boundary2D,
) -> Result<BandedOperator2D> {
    if gen.dim() != 2 {
        return Err(Error::InvalidInput(
            "assemble_2d requires a two-dimensional generator".into(),
        ));
    }
    let (nq, nw) = (grid.q.n(), grid.w.n());
    let (dq, dw) = (grid.q.spacing(), grid.w.spacing());
    let a2 = eval_on_grid_2d(gen.a2(), grid, "a2")?;
    let b2 = eval_on_grid_2d(gen.b2().expect("2D generator"), grid, "b2")?;
    let a1 = eval_on_grid_2d(gen.a1(), grid, "a1")?;
    let b1 = eval_on_grid_2d(gen.b1().expect("2D generator"), grid, "b1")?;
    let a0 = eval_on_grid_2d(gen.a0(), grid, "a0")?;
    let at = |i: usize, j: usize| i * nw + j;

    let mut peclet: f64 = 0.0;

    let mut lq = Vec::with_capacity(nw);
    for j in 0..nw {
        let mut tri = Tridiagonal::zeros(nq);
        for i in 1..nq - 1 {
            let k = at(i, j);
            let d2 = a2[k] / (dq * dq);
            let d1 = a1[k] / (2.0 * dq);
            tri.sub[i] = d2 - d1;
            tri.diag[i] = -2.0 * d2 + 0.5 * a0[k];
            tri.sup[i] = d2 + d1;
            peclet = peclet.max(cell_peclet(a1[k], a2[k], dq));
        }
        fill_face_rows(
            &mut tri,
            &bc.q_lo,
            &bc.q_hi,
            (a1[at(0, j)], a1[at(nq - 1, j)]),
            (0.5 * a0[at(0, j)], 0.5 * a0[at(nq - 1, j)]),
            dq,
        );
        lq.push(tri);
    }

    let mut lw = Vec::with_capacity(nq);
    for i in 0..nq {
        let mut tri = Tridiagonal::zeros(nw);
        for j in 1..nw - 1 {
            let k = at(i, j);
            let e2 = b2[k] / (dw * dw);
            let e1 = b1[k] / (2.0 * dw);
            tri.sub[j] = e2 - e1;
            tri.diag[j] = -2.0 * e2 + 0.5 * a0[k];
            tri.sup[j] = e2 + e1;
            peclet = peclet.max(cell_peclet(b1[k], b2[k], dw));
        }
        fill_face_rows(
            &mut tri,
            &bc.w_lo,
            &bc.w_hi,
            (b1[at(i, 0)], b1[at(i, nw - 1)]),
            (0.5 * a0[at(i, 0)], 0.5 * a0[at(i, nw - 1)]),
            dw,
        );
        lw.push(tri);
    }

    Ok(BandedOperator2D {
        lq,
        lw,
        grid: grid.clone(),
        bc: bc.clone(),
        max_cell_peclet: peclet,
    })
}

/// Discount rate implied by the scalar coefficient at a point: `-a0`.
/// Returns NaN when the coefficient cannot be evaluated; steppers surface the
/// NaN as a boundary error rather than silently using it.
fn implied_rate(a0: &ExprAst, point: &[f64]) -> f64 {
    match a0.eval(point) {
        Ok(v) => -v,
        Err(_) => f64::NAN,
    }
}

/// Default 1D boundary conditions for a vanilla payoff: Dirichlet on both
/// faces with the asymptotic value, discounting the strike at the rate the
/// scalar coefficient implies at that face.
///
/// * Call: `0` at the lower face, `s_hi - K exp(-r tau)` at the upper face.
/// * Put: `K exp(-r tau) - s_lo` at the lower face, `0` at the upper face.
pub fn default_boundaries_1d(
    payoff: &Payoff,
    gen: &GeneratorCoefficients,
    grid: &Grid1D,
) -> Result<Boundary1D> {
    if gen.dim() != 1 {
        return Err(Error::InvalidInput(
            "default_boundaries_1d requires a one-dimensional generator".into(),
        ));
    }
    let k = payoff.strike;
    let s_lo = grid.price(0);
    let s_hi = grid.price(grid.n() - 1);
    let rate_lo = implied_rate(gen.a0(), &[grid.node(0)]);
    let rate_hi = implied_rate(gen.a0(), &[grid.node(grid.n() - 1)]);
    if !rate_lo.is_finite() || !rate_hi.is_finite() {
        return Err(Error::Numerics(
            "scalar coefficient a0 is not finite at a boundary face".into(),
        ));
    }
    Ok(match payoff.kind {
        OptionKind::Call => Boundary1D {
            lo: Face::dirichlet(|_, _| 0.0),
            hi: Face::dirichlet(move |tau, _| s_hi - k * (-rate_hi * tau).exp()),
        },
        OptionKind::Put => Boundary1D {
            lo: Face::dirichlet(move |tau, _| k * (-rate_lo * tau).exp() - s_lo),
            hi: Face::dirichlet(|_, _| 0.0),
        },
    })
}

/// Default 2D boundary conditions: Dirichlet asymptotics on the q faces (the
/// discount rate may vary along the face when `a0` does) and
/// zero-second-derivative rows on both w faces.
pub fn default_boundaries_2d(
    payoff: &Payoff,
    gen: &GeneratorCoefficients,
    grid: &Grid2D,
) -> Result<Boundary2D> {
    if gen.dim() != 2 {
        return Err(Error::InvalidInput(
            "default_boundaries_2d requires a two-dimensional generator".into(),
        ));
    }
    let k = payoff.strike;
    let q_lo = grid.q.price(0);
    let q_hi = grid.q.price(grid.q.n() - 1);
    // Fail early if the implied rate is broken anywhere on the q faces.
    for j in 0..grid.w.n() {
        let w = grid.w.node(j);
        if !implied_rate(gen.a0(), &[q_lo, w]).is_finite()
            || !implied_rate(gen.a0(), &[q_hi, w]).is_finite()
        {
            return Err(Error::Numerics(
                "scalar coefficient a0 is not finite on a q face".into(),
            ));
        }
    }
    let a0_lo = gen.a0().clone();
    let a0_hi = gen.a0().clone();
    let (q_lo_face, q_hi_face) = match payoff.kind {
        OptionKind::Call => (
            Face::dirichlet(|_, _| 0.0),
            Face::dirichlet(move |tau, w| {
                q_hi - k * (-implied_rate(&a0_hi, &[q_hi, w]) * tau).exp()
            }),
        ),
        OptionKind::Put => (
            Face::dirichlet(move |tau, w| {
                k * (-implied_rate(&a0_lo, &[q_lo, w]) * tau).exp() - q_lo
            }),
            Face::dirichlet(|_, _| 0.0),
        ),
    };
    Ok(Boundary2D {
        q_lo: q_lo_face,
        q_hi: q_hi_face,
        w_lo: Face::ZeroSecondDerivative,
        w_hi: Face::ZeroSecondDerivative,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::VarSet;
    use crate::models::{ModelSpec, Potential};

    fn synthetic_1d(a2: &str, a1: &str, a0: &str) -> GeneratorCoefficients {
        let vs = VarSet::new(&["q"]).unwrap();
        GeneratorCoefficients::new_1d(
            ExprAst::parse(a2, &vs).unwrap(),
            ExprAst::parse(a1, &vs).unwrap(),
            ExprAst::parse(a0, &vs).unwrap(),
        )
        .unwrap()
    }

    fn dirichlet_zero() -> Boundary1D {
        Boundary1D {
            lo: Face::dirichlet(|_, _| 0.0),
            hi: Face::dirichlet(|_, _| 0.0),
        }
    }

    #[test]
    fn bs1_interior_row_follows_central_difference_formula() {
        let gen = synthetic_1d("0.02*q^2", "0.02*q", "0-0.02");
        let grid = Grid1D::uniform(Chart::Price, 50.0, 150.0, 101).unwrap();
        let bc = dirichlet_zero();
        let op = assemble_1d(&gen, &grid, &bc).unwrap();
        // Node 50 sits at q = 100 with dq = 1: a2 = 200, a1 = 2.
        let i = 50;
        assert!((op.op.sub[i] - 199.0).abs() <= 1e-12 * 199.0);
        assert!((op.op.diag[i] + 400.02).abs() <= 1e-12 * 400.02);
        assert!((op.op.sup[i] - 201.0).abs() <= 1e-12 * 201.0);
    }

    #[test]
    fn unit_heat_row_is_the_classic_stencil() {
        let gen = synthetic_1d("1", "0", "0");
        let grid = Grid1D::uniform(Chart::Price, 1.0, 11.0, 11).unwrap();
        let op = assemble_1d(&gen, &grid, &dirichlet_zero()).unwrap();
        assert_eq!(op.op.sub[5], 1.0);
        assert_eq!(op.op.diag[5], -2.0);
        assert_eq!(op.op.sup[5], 1.0);
    }

    #[test]
    fn zero_drift_interior_row_sums_vanish_identically() {
        let gen = synthetic_1d("q^2+1", "0", "0");
        let grid = Grid1D::uniform(Chart::Price, 0.7, 9.7, 37).unwrap();
        let op = assemble_1d(&gen, &grid, &dirichlet_zero()).unwrap();
        for i in 1..grid.n() - 1 {
            let sum = op.op.sub[i] + op.op.diag[i] + op.op.sup[i];
            assert_eq!(sum, 0.0, "row {i} sum is {sum}");
        }
    }

    #[test]
    fn zero_second_derivative_face_rows_use_one_sided_drift() {
        let gen = synthetic_1d("q^2", "1", "0");
        let grid = Grid1D::uniform(Chart::Price, 1.0, 3.0, 5).unwrap();
        let bc = Boundary1D {
            lo: Face::ZeroSecondDerivative,
            hi: Face::ZeroSecondDerivative,
        };
        let op = assemble_1d(&gen, &grid, &bc).unwrap();
        let dx = grid.spacing();
        assert_eq!(op.op.diag[0], -1.0 / dx);
        assert_eq!(op.op.sup[0], 1.0 / dx);
        assert_eq!(op.op.diag[4], 1.0 / dx);
        assert_eq!(op.op.sub[4], -1.0 / dx);
    }

    #[test]
    fn dirichlet_face_rows_stay_zeroed() {
        let gen = synthetic_1d("q^2", "q", "1");
        let grid = Grid1D::uniform(Chart::Price, 1.0, 2.0, 5).unwrap();
        let op = assemble_1d(&gen, &grid, &dirichlet_zero()).unwrap();
        assert_eq!(op.op.diag[0], 0.0);
        assert_eq!(op.op.sup[0], 0.0);
        assert_eq!(op.op.diag[4], 0.0);
        assert_eq!(op.op.sub[4], 0.0);
    }

    #[test]
    fn non_finite_coefficient_is_reported_with_location() {
        let gen = synthetic_1d("exp(q^2)", "0", "0");
        let grid = Grid1D::uniform(Chart::Price, 1.0, 100.0, 11).unwrap();
        match assemble_1d(&gen, &grid, &dirichlet_zero()) {
            Err(Error::Numerics(msg)) => assert!(msg.contains("a2")),
            other => panic!("expected numerics error, got {other:?}"),
        }
    }

    #[test]
    fn peclet_number_is_recorded() {
        let gen = synthetic_1d("1", "10", "0");
        let grid = Grid1D::uniform(Chart::Price, 1.0, 11.0, 11).unwrap();
        let op = assemble_1d(&gen, &grid, &dirichlet_zero()).unwrap();
        assert!((op.max_cell_peclet - 5.0).abs() < 1e-12);
    }

    #[test]
    fn grids_are_uniform_and_increasing() {
        let grid = Grid1D::uniform(Chart::Log, -1.3, 2.9, 57).unwrap();
        let nodes = grid.nodes();
        let dx = grid.spacing();
        for i in 1..nodes.len() {
            let step = nodes[i] - nodes[i - 1];
            assert!(step > 0.0);
            assert!((step - dx).abs() <= 1e-12 * dx.abs());
        }
    }

    #[test]
    fn grid_rejects_degenerate_inputs() {
        assert!(Grid1D::uniform(Chart::Price, 1.0, 2.0, 2).is_err());
        assert!(Grid1D::uniform(Chart::Price, 2.0, 1.0, 5).is_err());
        assert!(Grid1D::uniform(Chart::Price, -1.0, 2.0, 5).is_err());
        assert!(Grid1D::uniform(Chart::Log, -3.0, 3.0, 5).is_ok());
    }

    #[test]
    fn payoff_sampling_respects_the_chart() {
        let payoff = Payoff::new(OptionKind::Call, 100.0).unwrap();
        let grid =
            Grid1D::uniform(Chart::Log, 100.0_f64.ln() - 1.0, 100.0_f64.ln() + 1.0, 3).unwrap();
        let values = payoff.sample(&grid);
        assert_eq!(values[0], 0.0);
        // The middle node reconstructs the strike only to rounding, so the
        // call payoff there is at most a few ulps of the strike.
        assert!(values[1].abs() <= 1e-12 * 100.0);
        let s_hi = 100.0 * 1.0_f64.exp();
        assert!((values[2] - (s_hi - 100.0)).abs() < 1e-12);
    }

    #[test]
    fn default_boundaries_discount_the_strike() {
        let spec = ModelSpec::bs2(
            0.2,
            0.05,
            None,
            Potential::MatchBs,
            crate::models::Chart::Price,
        )
        .unwrap();
        let gen =
            crate::models::build_generator(&spec, &crate::models::Domain::interval(12.5, 800.0))
                .unwrap();
        let grid = Grid1D::uniform(Chart::Price, 12.5, 800.0, 64).unwrap();
        let call = Payoff::new(OptionKind::Call, 100.0).unwrap();
        let bc = default_boundaries_1d(&call, &gen, &grid).unwrap();
        match &bc.hi {
            Face::Dirichlet(f) => {
                let got = f(1.0, 0.0);
                let expected = grid.price(63) - 100.0 * (-0.05_f64).exp();
                assert!((got - expected).abs() <= 1e-12 * expected.abs());
            }
            other => panic!("expected Dirichlet, got {other:?}"),
        }
        let put = Payoff::new(OptionKind::Put, 100.0).unwrap();
        let bc = default_boundaries_1d(&put, &gen, &grid).unwrap();
        match &bc.lo {
            Face::Dirichlet(f) => {
                let got = f(0.5, 0.0);
                let expected = 100.0 * (-0.025_f64).exp() - 12.5;
                assert!((got - expected).abs() <= 1e-12 * expected.abs());
            }
            other => panic!("expected Dirichlet, got {other:?}"),
        }
    }

    #[test]
    fn two_dimensional_assembly_splits_a0_evenly() {
        let spec = ModelSpec::mg(0.4, 0.02, Potential::MatchBs).unwrap();
        let gen = crate::models::build_generator(
            &spec,
            &crate::models::Domain::rect((50.0, 150.0), (0.01, 0.09)),
        )
        .unwrap();
        let q = Grid1D::uniform(Chart::Price, 50.0, 150.0, 5).unwrap();
        let w = Grid1D::uniform(Chart::Price, 0.01, 0.09, 5).unwrap();
        let grid = Grid2D::new(q, w).unwrap();
        let payoff = Payoff::new(OptionKind::Call, 100.0).unwrap();
        let bc = default_boundaries_2d(&payoff, &gen, &grid).unwrap();
        let op = assemble_2d(&gen, &grid, &bc).unwrap();
        // Check the a0 split at interior node (2, 2): the two diagonal
        // contributions recombine to the full operator diagonal.
        let (i, j) = (2, 2);
        let (qv, wv) = (grid.q.node(i), grid.w.node(j));
        let a2 = gen.a2().eval(&[qv, wv]).unwrap();
        let b2 = gen.b2().unwrap().eval(&[qv, wv]).unwrap();
        let a0 = gen.a0().eval(&[qv, wv]).unwrap();
        let dq = grid.q.spacing();
        let dw = grid.w.spacing();
        let total = op.lq[j].diag[i] + op.lw[i].diag[j];
        let expected = -2.0 * a2 / (dq * dq) - 2.0 * b2 / (dw * dw) + a0;
        assert!((total - expected).abs() <= 1e-12 * expected.abs());
        // w faces carry operator rows, q faces are prescribed.
        assert!(op.lw[2].diag[0] != 0.0);
        assert_eq!(op.lq[0].diag[0], 0.0);
    }

    #[test]
    fn locate_brackets_and_rejects_out_of_hull() {
        let grid = Grid1D::uniform(Chart::Price, 1.0, 2.0, 11).unwrap();
        let (i, t) = grid.locate(1.25).unwrap();
        assert_eq!(i, 2);
        assert!((t - 0.5).abs() < 1e-9);
        assert!(grid.locate(2.5).is_err());
        assert!(grid.locate(0.5).is_err());
    }
}
