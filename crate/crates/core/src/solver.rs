//! Log-barrier interior-point solver for the concave subproblems.
//!
//! A [`ConvexSubproblem`] maximizes a linear objective over box bounds,
//! linear rows and *perspective rows*
//!
//! ```text
//! weight * t * log2(1 + gain * s / t) >= c0 + sum_j c_j x_j
//! ```
//!
//! where `t` and `s` are variables. The left side is jointly concave in
//! `(t, s)` with Hessian
//!
//! ```text
//! -(weight / ln 2) * gain^2 / (t + gain s)^2 * [[s^2 / t, -s], [-s, t]]
//! ```
//!
//! so every feasible set is convex. The solver runs a phase-I problem to
//! find a strictly feasible point, then follows the central path with
//! damped Newton centering.

use std::f64::consts::LN_2;
use std::fmt;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numeric::ln_1p_minus_ratio;

pub const DEFAULT_TOL: f64 = 1e-8;

/// Barrier parameter growth per outer iteration (mu reduction 0.2).
const BARRIER_GROWTH: f64 = 5.0;
const ARMIJO_C: f64 = 1e-4;
const BACKTRACK: f64 = 0.5;
const MAX_NEWTON: usize = 200;
const MAX_OUTER: usize = 80;

/// Constraint families, used for diagnostics and residual reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RowFamily {
    CommonThroughput,
    MinRate,
    CommonSlack,
    IndividualSlack,
    InterferenceSlack,
    Energy,
    Time,
    SubSlot,
    Bound,
    Other,
}

impl fmt::Display for RowFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RowFamily::CommonThroughput => "common-data throughput",
            RowFamily::MinRate => "min-rate",
            RowFamily::CommonSlack => "common-stage slack coupling",
            RowFamily::IndividualSlack => "individual-stage slack coupling",
            RowFamily::InterferenceSlack => "interference slack coupling",
            RowFamily::Energy => "energy budget",
            RowFamily::Time => "latency budget",
            RowFamily::SubSlot => "sub-slot partition",
            RowFamily::Bound => "variable bound",
            RowFamily::Other => "other",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearRow {
    pub family: RowFamily,
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AffineExpr {
    pub constant: f64,
    pub coeffs: Vec<(usize, f64)>,
}

impl AffineExpr {
    pub fn constant(c: f64) -> Self {
        AffineExpr { constant: c, coeffs: Vec::new() }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.coeffs.iter().map(|&(j, c)| c * x[j]).sum::<f64>()
    }
}

/// `weight * t * log2(1 + gain * s / t) >= rhs(x)` with `t = x[time_var]`,
/// `s = x[slack_var]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerspectiveRow {
    pub family: RowFamily,
    pub time_var: usize,
    pub slack_var: usize,
    pub gain: f64,
    pub weight: f64,
    pub rhs: AffineExpr,
}

impl PerspectiveRow {
    /// Left-hand side value.
    pub fn lhs(&self, t: f64, s: f64) -> f64 {
        if t == 0.0 {
            return 0.0;
        }
        self.weight * t * (self.gain * s / t).ln_1p() / LN_2
    }
}

/// Named, contiguous variable blocks partitioning the variable vector.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VarLayout {
    blocks: Vec<(String, Range<usize>)>,
    len: usize,
}

impl VarLayout {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: &str, len: usize) -> Range<usize> {
        let r = self.len..self.len + len;
        self.blocks.push((name.to_string(), r.clone()));
        self.len += len;
        r
    }

    pub fn block(&self, name: &str) -> Option<Range<usize>> {
        self.blocks.iter().find(|(n, _)| n == name).map(|(_, r)| r.clone())
    }

    pub fn blocks(&self) -> impl Iterator<Item = (&str, Range<usize>)> {
        self.blocks.iter().map(|(n, r)| (n.as_str(), r.clone()))
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// A declarative concave maximization problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexSubproblem {
    pub layout: VarLayout,
    /// Maximize `objective . x`.
    pub objective: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub linear: Vec<LinearRow>,
    pub perspective: Vec<PerspectiveRow>,
}

impl ConvexSubproblem {
    pub fn new(layout: VarLayout) -> Self {
        let n = layout.len();
        ConvexSubproblem {
            layout,
            objective: vec![0.0; n],
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
            linear: Vec::new(),
            perspective: Vec::new(),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.layout.len()
    }

    pub fn n_rows(&self) -> usize {
        self.linear.len() + self.perspective.len()
    }

    pub fn set_bounds(&mut self, j: usize, lo: f64, hi: f64) {
        self.lower[j] = lo;
        self.upper[j] = hi;
    }

    pub fn fix(&mut self, j: usize, value: f64) {
        self.set_bounds(j, value, value);
    }

    pub fn is_fixed(&self, j: usize) -> bool {
        self.lower[j] == self.upper[j]
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, x)| c * x).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_vars();
        let bad = |m: String| Err(Error::Subproblem(m));
        if self.objective.len() != n || self.lower.len() != n || self.upper.len() != n {
            return bad("objective/bounds length differs from layout".into());
        }
        for j in 0..n {
            if !(self.lower[j] <= self.upper[j]) || self.lower[j].is_nan() {
                return bad(format!("variable {j} has empty bounds"));
            }
        }
        let in_range = |j: usize| j < n;
        for row in &self.linear {
            if !row.coeffs.iter().all(|&(j, c)| in_range(j) && c.is_finite()) || !row.rhs.is_finite() {
                return bad(format!("bad {} row", row.family));
            }
        }
        for row in &self.perspective {
            if !in_range(row.time_var) || !in_range(row.slack_var) || row.time_var == row.slack_var {
                return bad(format!("bad variable reference in {} row", row.family));
            }
            if !(row.weight > 0.0 && row.gain > 0.0 && row.gain.is_finite()) {
                return bad(format!("{} row must have positive weight and gain", row.family));
            }
            let t = row.time_var;
            if !(self.lower[t] > 0.0 || self.upper[t] == 0.0) {
                return bad(format!("time variable {t} needs a positive lower bound"));
            }
            if self.lower[row.slack_var] < 0.0 {
                return bad(format!("slack variable {} must be non-negative", row.slack_var));
            }
            if !row.rhs.coeffs.iter().all(|&(j, c)| in_range(j) && c.is_finite()) {
                return bad(format!("bad right-hand side in {} row", row.family));
            }
        }
        Ok(())
    }

    /// Per-row slack `lhs - rhs` in satisfied orientation: negative entries
    /// are violations. Bounds are not included.
    pub fn row_slacks(&self, x: &[f64]) -> Vec<(RowFamily, f64)> {
        let lin = self.linear.iter().map(|row| {
            let ax: f64 = row.coeffs.iter().map(|&(j, c)| c * x[j]).sum();
            let s = match row.sense {
                Sense::Le => row.rhs - ax,
                Sense::Ge => ax - row.rhs,
            };
            (row.family, s)
        });
        let per = self.perspective.iter().map(|row| {
            let t = x[row.time_var];
            let s = x[row.slack_var];
            let lhs = if t <= 0.0 { if t == 0.0 { 0.0 } else { f64::NEG_INFINITY } } else { row.lhs(t, s) };
            (row.family, lhs - row.rhs.eval(x))
        });
        lin.chain(per).collect()
    }

    /// Largest violation over rows and bounds (0 when feasible).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self.row_slacks(x).into_iter().map(|(_, s)| -s);
        let bounds = (0..self.n_vars()).map(|j| (self.lower[j] - x[j]).max(x[j] - self.upper[j]));
        rows.chain(bounds).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub x: Vec<f64>,
    pub objective: f64,
    pub status: SolveStatus,
    /// Max of stationarity, primal violation and duality gap.
    pub kkt_residual: f64,
    /// For infeasible problems: the constraint family that stays violated
    /// at the phase-I optimum.
    pub diagnosis: Option<RowFamily>,
    pub newton_steps: usize,
}

impl SolveOutcome {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

/// Solves from the center of the bounding box.
pub fn solve(problem: &ConvexSubproblem, tol: f64) -> Result<SolveOutcome> {
    solve_from(problem, tol, None)
}

/// Solves from an optional warm start; the start is pulled strictly inside
/// the box before use. The returned objective is never below the warm
/// start's when that start is feasible.
pub fn solve_from(problem: &ConvexSubproblem, tol: f64, start: Option<&[f64]>) -> Result<SolveOutcome> {
    problem.validate()?;
    if let Some(s) = start {
        if s.len() != problem.n_vars() {
            return Err(Error::Subproblem("warm start has wrong length".into()));
        }
    }
    let mut barrier = Barrier::new(problem);
    let y0 = barrier.interior_start(start);

    let y = if barrier.has_rows() {
        match barrier.phase_one(y0, tol) {
            PhaseOne::Feasible(y) => y,
            PhaseOne::Infeasible(family, steps) => {
                return Ok(SolveOutcome {
                    x: barrier.full(&barrier.last_y),
                    objective: 0.0,
                    status: SolveStatus::Infeasible,
                    kkt_residual: f64::INFINITY,
                    diagnosis: Some(family),
                    newton_steps: steps,
                });
            }
            PhaseOne::Failed(steps) => {
                return Ok(barrier.failure(steps));
            }
        }
    } else {
        y0
    };

    let outcome = barrier.phase_two(y, tol);
    // keep the warm start if numerical drift put the barrier point below it
    if let (Some(s), Ok(out)) = (start, &outcome) {
        if out.is_optimal()
            && problem.max_violation(s) <= tol
            && problem.objective_value(s) > out.objective
        {
            let mut out = out.clone();
            out.x = s.to_vec();
            out.objective = problem.objective_value(s);
            return Ok(out);
        }
    }
    outcome
}

enum PhaseOne {
    Feasible(Vec<f64>),
    Infeasible(RowFamily, usize),
    Failed(usize),
}

#[derive(Clone, Copy)]
enum Con<'a> {
    Lower(usize, f64),
    Upper(usize, f64),
    Linear(&'a LinearRow),
    Persp(&'a PerspectiveRow),
}

impl Con<'_> {
    fn relaxable(&self) -> bool {
        matches!(self, Con::Linear(_) | Con::Persp(_))
    }

    fn family(&self) -> RowFamily {
        match self {
            Con::Lower(..) | Con::Upper(..) => RowFamily::Bound,
            Con::Linear(r) => r.family,
            Con::Persp(r) => r.family,
        }
    }
}

struct Barrier<'a> {
    problem: &'a ConvexSubproblem,
    /// reduced index -> full index
    free: Vec<usize>,
    /// full index -> reduced index
    pos: Vec<Option<usize>>,
    cons: Vec<Con<'a>>,
    /// Phase-I auxiliary variable is active (appended as the last reduced coordinate).
    aux: bool,
    last_y: Vec<f64>,
}

struct Local {
    value: f64,
    grad: Vec<(usize, f64)>,
    /// Hessian of the constraint function itself (perspective rows only).
    hess: Option<[(usize, usize, f64); 3]>,
}

impl<'a> Barrier<'a> {
    fn new(problem: &'a ConvexSubproblem) -> Self {
        let n = problem.n_vars();
        let free: Vec<usize> = (0..n).filter(|&j| !problem.is_fixed(j)).collect();
        let mut pos = vec![None; n];
        for (k, &j) in free.iter().enumerate() {
            pos[j] = Some(k);
        }
        let mut cons = Vec::new();
        for &j in &free {
            if problem.lower[j].is_finite() {
                cons.push(Con::Lower(j, problem.lower[j]));
            }
            if problem.upper[j].is_finite() {
                cons.push(Con::Upper(j, problem.upper[j]));
            }
        }
        cons.extend(problem.linear.iter().map(Con::Linear));
        cons.extend(problem.perspective.iter().map(Con::Persp));
        Barrier { problem, free, pos, cons, aux: false, last_y: Vec::new() }
    }

    fn has_rows(&self) -> bool {
        self.cons.iter().any(|c| c.relaxable())
    }

    fn dim(&self) -> usize {
        self.free.len() + usize::from(self.aux)
    }

    fn full(&self, y: &[f64]) -> Vec<f64> {
        let p = self.problem;
        let mut x: Vec<f64> = (0..p.n_vars()).map(|j| p.lower[j]).collect();
        for (k, &j) in self.free.iter().enumerate() {
            x[j] = y[k];
        }
        x
    }

    fn interior_start(&self, start: Option<&[f64]>) -> Vec<f64> {
        let p = self.problem;
        self.free
            .iter()
            .map(|&j| {
                let (lo, hi) = (p.lower[j], p.upper[j]);
                let mid = match (lo.is_finite(), hi.is_finite()) {
                    (true, true) => 0.5 * (lo + hi),
                    (true, false) => lo + 1.0,
                    (false, true) => hi - 1.0,
                    (false, false) => 0.0,
                };
                let Some(s) = start else { return mid };
                let v = s[j];
                if !v.is_finite() {
                    return mid;
                }
                match (lo.is_finite(), hi.is_finite()) {
                    (true, true) => {
                        let m = 1e-3 * (hi - lo);
                        v.clamp(lo + m, hi - m)
                    }
                    (true, false) => v.max(lo + 1e-3 * (1.0 + lo.abs())),
                    (false, true) => v.min(hi - 1e-3 * (1.0 + hi.abs())),
                    (false, false) => v,
                }
            })
            .collect()
    }

    /// Value and derivatives of constraint `c` at full point `x`; `None`
    /// when outside the perspective domain.
    fn local(&self, c: &Con<'_>, x: &[f64]) -> Option<Local> {
        match *c {
            Con::Lower(j, lb) => Some(Local { value: x[j] - lb, grad: vec![(j, 1.0)], hess: None }),
            Con::Upper(j, ub) => Some(Local { value: ub - x[j], grad: vec![(j, -1.0)], hess: None }),
            Con::Linear(row) => {
                let sign = match row.sense {
                    Sense::Le => -1.0,
                    Sense::Ge => 1.0,
                };
                let ax: f64 = row.coeffs.iter().map(|&(j, a)| a * x[j]).sum();
                Some(Local {
                    value: sign * (ax - row.rhs),
                    grad: row.coeffs.iter().map(|&(j, a)| (j, sign * a)).collect(),
                    hess: None,
                })
            }
            Con::Persp(row) => {
                let (ti, si) = (row.time_var, row.slack_var);
                let (t, s) = (x[ti], x[si]);
                let w = row.weight / LN_2;
                let g = row.gain;
                let mut grad: Vec<(usize, f64)> = row.rhs.coeffs.iter().map(|&(j, a)| (j, -a)).collect();
                if t == 0.0 {
                    // time fixed at zero: the row is the constant 0 >= rhs
                    return Some(Local { value: -row.rhs.eval(x), grad, hess: None });
                }
                let r = g * s / t;
                if !(t > 0.0) || !(1.0 + r > 0.0) || !r.is_finite() {
                    return None;
                }
                let q = w * t * r.ln_1p();
                grad.push((ti, w * ln_1p_minus_ratio(r)));
                grad.push((si, w * g / (1.0 + r)));
                let k = w / (t * (1.0 + r) * (1.0 + r));
                let hess = [(ti, ti, -k * r * r), (si, si, -k * g * g), (ti, si, k * g * r)];
                Some(Local { value: q - row.rhs.eval(x), grad, hess: Some(hess) })
            }
        }
    }

    /// Constraint values in the current phase; `None` outside the domain.
    fn values(&self, y: &[f64]) -> Option<Vec<f64>> {
        let x = self.full(y);
        let z = if self.aux { y[self.free.len()] } else { 0.0 };
        self.cons
            .iter()
            .map(|c| {
                let v = self.local(c, &x)?.value + if c.relaxable() { z } else { 0.0 };
                (v > 0.0 && v.is_finite()).then_some(v)
            })
            .collect()
    }

    fn objective_linear(&self, y: &[f64]) -> f64 {
        if self.aux {
            y[self.free.len()]
        } else {
            -self.problem.objective_value(&self.full(y))
        }
    }

    fn barrier_value(&self, y: &[f64], tbar: f64) -> Option<f64> {
        let h = self.values(y)?;
        Some(tbar * self.objective_linear(y) - h.iter().map(|v| v.ln()).sum::<f64>())
    }

    fn derivatives(&self, y: &[f64], tbar: f64) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let n = self.dim();
        let x = self.full(y);
        let z = if self.aux { y[self.free.len()] } else { 0.0 };
        let mut g = DVector::zeros(n);
        let mut h = DMatrix::zeros(n, n);
        if self.aux {
            g[n - 1] = tbar;
        } else {
            for (k, &j) in self.free.iter().enumerate() {
                g[k] = -tbar * self.problem.objective[j];
            }
        }
        let mut dense = vec![0.0; n];
        for c in &self.cons {
            let loc = self.local(c, &x)?;
            let relax = self.aux && c.relaxable();
            let value = loc.value + if relax { z } else { 0.0 };
            if !(value > 0.0) {
                return None;
            }
            dense.iter_mut().for_each(|v| *v = 0.0);
            for &(j, a) in &loc.grad {
                if let Some(k) = self.pos[j] {
                    dense[k] += a;
                }
            }
            if relax {
                dense[n - 1] = 1.0;
            }
            let inv = 1.0 / value;
            for a in 0..n {
                if dense[a] == 0.0 {
                    continue;
                }
                g[a] -= dense[a] * inv;
                for b in 0..n {
                    if dense[b] != 0.0 {
                        h[(a, b)] += dense[a] * dense[b] * inv * inv;
                    }
                }
            }
            if let Some(hess) = loc.hess {
                for (i, j, v) in hess {
                    if let (Some(a), Some(b)) = (self.pos[i], self.pos[j]) {
                        h[(a, b)] -= v * inv;
                        if a != b {
                            h[(b, a)] -= v * inv;
                        }
                    }
                }
            }
        }
        Some((g, h))
    }

    /// Newton direction with Jacobi scaling; a small diagonal shift is
    /// added when the factorization breaks down.
    fn newton_direction(g: &DVector<f64>, h: &DMatrix<f64>) -> Option<DVector<f64>> {
        let n = g.len();
        let d: Vec<f64> = (0..n).map(|i| 1.0 / h[(i, i)].max(1e-300).sqrt()).collect();
        let mut scaled = h.clone();
        for i in 0..n {
            for j in 0..n {
                scaled[(i, j)] *= d[i] * d[j];
            }
        }
        let rhs = DVector::from_iterator(n, (0..n).map(|i| -g[i] * d[i]));
        let mut shift = 0.0;
        for _ in 0..8 {
            let mut m = scaled.clone();
            for i in 0..n {
                m[(i, i)] += shift;
            }
            if let Some(ch) = m.cholesky() {
                let u = ch.solve(&rhs);
                if u.iter().all(|v| v.is_finite()) {
                    return Some(DVector::from_iterator(n, (0..n).map(|i| u[i] * d[i])));
                }
            }
            shift = if shift == 0.0 { 1e-14 } else { shift * 100.0 };
        }
        None
    }

    /// Damped Newton minimization of the barrier function at fixed `tbar`.
    /// Returns the number of steps, or `None` on failure. In phase I,
    /// stops as soon as the auxiliary variable turns negative.
    fn center(&self, y: &mut Vec<f64>, tbar: f64, steps: &mut usize) -> Option<()> {
        for _ in 0..MAX_NEWTON {
            if self.aux && y[self.free.len()] < 0.0 {
                return Some(());
            }
            let (g, h) = self.derivatives(y, tbar)?;
            let dir = Self::newton_direction(&g, &h)?;
            let decrement = -g.dot(&dir);
            if decrement.is_nan() {
                return None;
            }
            let f0 = self.barrier_value(y, tbar)?;
            // below the resolution of f0 no Armijo decrease is representable
            if decrement / 2.0 <= 1e-11f64.max(256.0 * f64::EPSILON * (1.0 + f0.abs())) {
                return Some(());
            }
            let mut step = 1.0;
            let mut accepted = false;
            for _ in 0..80 {
                let cand: Vec<f64> = y.iter().zip(dir.iter()).map(|(v, d)| v + step * d).collect();
                if let Some(f) = self.barrier_value(&cand, tbar) {
                    if f <= f0 - ARMIJO_C * step * decrement {
                        *y = cand;
                        accepted = true;
                        break;
                    }
                }
                step *= BACKTRACK;
            }
            *steps += 1;
            if !accepted {
                // no representable decrease left: centered to working precision
                return (decrement < 1e-6).then_some(());
            }
        }
        // iteration cap: accept when the remaining decrement is negligible
        let (g, h) = self.derivatives(y, tbar)?;
        let dir = Self::newton_direction(&g, &h)?;
        (-g.dot(&dir) < 1e-6).then_some(())
    }

    fn phase_one(&mut self, y0: Vec<f64>, tol: f64) -> PhaseOne {
        let x0 = self.full(&y0);
        let mut worst: f64 = 0.0;
        for c in &self.cons {
            match self.local(c, &x0) {
                Some(loc) if c.relaxable() => worst = worst.max(-loc.value),
                Some(_) => {}
                None => return PhaseOne::Failed(0),
            }
        }
        let strictly = self.values(&y0).is_some();
        if strictly {
            return PhaseOne::Feasible(y0);
        }
        self.aux = true;
        let mut y = y0;
        y.push(worst + 1.0);
        let m = self.cons.len() as f64;
        let mut tbar = 1.0;
        let mut steps = 0;
        for _ in 0..MAX_OUTER {
            if self.center(&mut y, tbar, &mut steps).is_none() {
                self.aux = false;
                self.last_y = y[..self.free.len()].to_vec();
                return PhaseOne::Failed(steps);
            }
            let z = y[self.free.len()];
            if z < 0.0 {
                self.aux = false;
                y.pop();
                return PhaseOne::Feasible(y);
            }
            if m / tbar < tol * 1e-2 || z - m / tbar > 0.0 {
                break;
            }
            tbar *= BARRIER_GROWTH;
        }
        // the auxiliary variable cannot reach zero: report the row family
        // that is most violated at the phase-I optimum
        let x = self.full(&y[..self.free.len()]);
        let family = self
            .cons
            .iter()
            .filter(|c| c.relaxable())
            .filter_map(|c| self.local(c, &x).map(|l| (c.family(), l.value)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(f, _)| f)
            .unwrap_or(RowFamily::Other);
        self.aux = false;
        self.last_y = y[..self.free.len()].to_vec();
        PhaseOne::Infeasible(family, steps)
    }

    fn phase_two(&mut self, mut y: Vec<f64>, tol: f64) -> Result<SolveOutcome> {
        let m = self.cons.len() as f64;
        let mut tbar = 1.0;
        let mut steps = 0;
        for _ in 0..MAX_OUTER {
            if self.center(&mut y, tbar, &mut steps).is_none() {
                return Ok(self.failure(steps));
            }
            if m / tbar <= tol {
                break;
            }
            tbar *= BARRIER_GROWTH;
        }
        let x = self.full(&y);
        let residual = self.kkt_residual(&y, tbar);
        let status = if residual <= tol { SolveStatus::Optimal } else { SolveStatus::NumericalFailure };
        Ok(SolveOutcome {
            objective: self.problem.objective_value(&x),
            x,
            status,
            kkt_residual: residual,
            diagnosis: None,
            newton_steps: steps,
        })
    }

    /// Duals are `1 / (tbar h_i)`; stationarity is measured relative to the
    /// objective scale.
    fn kkt_residual(&self, y: &[f64], tbar: f64) -> f64 {
        let Some((g, h)) = self.derivatives(y, tbar) else { return f64::INFINITY };
        // Newton-decrement form of stationarity, invariant to variable scaling
        let stationarity = match Self::newton_direction(&g, &h) {
            Some(dir) => (-g.dot(&dir)).max(0.0).sqrt() / tbar,
            None => f64::INFINITY,
        };
        let x = self.full(y);
        let primal = self.problem.max_violation(&x);
        let gap = self.cons.len() as f64 / tbar;
        stationarity.max(primal).max(gap)
    }

    fn failure(&self, steps: usize) -> SolveOutcome {
        let x = self.full(&self.interior_start(None));
        SolveOutcome {
            objective: self.problem.objective_value(&x),
            x,
            status: SolveStatus::NumericalFailure,
            kkt_residual: f64::INFINITY,
            diagnosis: None,
            newton_steps: steps,
        }
    }
}

/// Midpoint-concavity probe of every perspective row's left-hand side over
/// random pairs inside the box (time variables floored at a small positive
/// value). Returns `false` on the first violation beyond `1e-10` relative.
pub fn concavity_probe(problem: &ConvexSubproblem, n_samples: usize, seed: u64) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let range = |j: usize, floor: f64| -> (f64, f64) {
        let lo = problem.lower[j].max(floor);
        let hi = if problem.upper[j].is_finite() { problem.upper[j] } else { lo + 10.0 };
        (lo, hi.max(lo))
    };
    for row in &problem.perspective {
        let (tlo, thi) = range(row.time_var, 1e-6);
        let (slo, shi) = range(row.slack_var, 0.0);
        for _ in 0..n_samples {
            let mut draw = || (rng.random_range(tlo..=thi), rng.random_range(slo..=shi));
            let (a, b) = (draw(), draw());
            let lam: f64 = rng.random_range(1e-6..1.0);
            let mid = row.lhs(lam * a.0 + (1.0 - lam) * b.0, lam * a.1 + (1.0 - lam) * b.1);
            let chord = lam * row.lhs(a.0, a.1) + (1.0 - lam) * row.lhs(b.0, b.1);
            if mid < chord - 1e-10 * (1.0 + chord.abs()) {
                return false;
            }
        }
    }
    true
}
