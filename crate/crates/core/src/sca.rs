//! Successive convex approximation for the max-min individual throughput.
//!
//! The individual-stage rate of every device except the last decoded one is
//! a difference of two concave perspective terms,
//!
//! ```text
//! g1(tau, S2) - g2(tau, S3),   g(tau, S) = tau W log2(1 + S / tau)
//! ```
//!
//! with slack variables `S2_n <= sum_{j>=n} E_j gamma_j` and
//! `S3_n >= sum_{k>n} E_k gamma_k`. Replacing `g2` by its tangent plane at a
//! local point `(tau[m], S3[m])` gives a concave restriction of the problem;
//! each iteration solves that restriction and moves the local point to the
//! solution. The objective sequence is nondecreasing because the previous
//! iterate stays feasible for the next restriction.
//!
//! Variables are passed to the solver in scaled units: durations over
//! `T_max`, energies over each device's budget, slacks over their largest
//! attainable value and throughput over `W T_max`.

use std::time::{Duration, Instant};

use crate::channel::{ChannelRealization, Scenario};
use crate::error::{Error, Result};
use crate::model::{self, Allocation, TAU_MIN_FRACTION};
use crate::numeric::{ln_1p_minus_ratio, log2_1p, perspective_bits};
use crate::solver::{
    self, AffineExpr, ConvexSubproblem, LinearRow, PerspectiveRow, RowFamily, Sense, SolveStatus,
    VarLayout,
};

use std::f64::consts::LN_2;
use std::ops::Range;

/// Local expansion point: the individual-stage duration and the
/// interference slacks `S3_n`, `n < N`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlackPoint {
    pub tau_i: f64,
    pub s3: Vec<f64>,
}

/// Slack variables at a solution. `c2`/`c3` are the common-stage analogues
/// used only when every device must deliver the common data itself.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SlackVars {
    pub s1: f64,
    pub s2: Vec<f64>,
    pub s3: Vec<f64>,
    pub c2: Vec<f64>,
    pub c3: Vec<f64>,
}

impl SlackVars {
    /// Slack values with every coupling tight at `allocation`.
    pub fn tight(allocation: &Allocation, gamma: &[f64], per_device_common: bool) -> Self {
        let tail = |e: &[f64], from: usize| -> f64 { (from..gamma.len()).map(|k| e[k] * gamma[k]).sum() };
        let n = gamma.len();
        let s2 = (0..n).map(|i| tail(&allocation.e_i, i)).collect();
        let s3 = (0..n.saturating_sub(1)).map(|i| tail(&allocation.e_i, i + 1)).collect();
        let (c2, c3) = if per_device_common {
            (
                (0..n).map(|i| tail(&allocation.e_c, i)).collect(),
                (0..n.saturating_sub(1)).map(|i| tail(&allocation.e_c, i + 1)).collect(),
            )
        } else {
            (Vec::new(), Vec::new())
        };
        SlackVars { s1: tail(&allocation.e_c, 0), s2, s3, c2, c3 }
    }
}

/// First-order coefficients of `g2` at a local point.
#[derive(Debug, Clone, PartialEq)]
pub struct TaylorTerms {
    /// Value of `g2` at the point (bits).
    pub b: Vec<f64>,
    /// Partial derivative in the stage duration (bits / s).
    pub d: Vec<f64>,
    /// Partial derivative in the slack (bits per unit of `E gamma`).
    pub q: Vec<f64>,
}

impl TaylorTerms {
    /// The tangent-plane upper bound of `g2` for row `n`.
    pub fn upper_bound(&self, n: usize, point: &SlackPoint, tau: f64, s3: f64) -> f64 {
        self.b[n] + self.d[n] * (tau - point.tau_i) + self.q[n] * (s3 - point.s3[n])
    }
}

/// The concave subtrahend `g2(tau, S) = tau W log2(1 + S / tau)`.
pub fn g2(tau: f64, s3: f64, w: f64) -> f64 {
    perspective_bits(tau, s3, w)
}

/// Linearization coefficients at `point`.
pub fn taylor_terms(point: &SlackPoint, w: f64) -> Result<TaylorTerms> {
    taylor_terms_at(point.tau_i, &point.s3, w)
}

fn taylor_terms_at(tau: f64, s3: &[f64], w: f64) -> Result<TaylorTerms> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Domain(format!("expansion point needs positive duration, got {tau}")));
    }
    if let Some(s) = s3.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
        return Err(Error::Domain(format!("expansion point needs non-negative slack, got {s}")));
    }
    let mut t = TaylorTerms { b: Vec::new(), d: Vec::new(), q: Vec::new() };
    for &s in s3 {
        let r = s / tau;
        t.b.push(tau * w * log2_1p(r));
        t.d.push(w / LN_2 * ln_1p_minus_ratio(r));
        t.q.push(w / (LN_2 * (1.0 + r)));
    }
    Ok(t)
}

/// How the common data is delivered in stage 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommonStage {
    /// All devices cooperate; only the sum throughput must reach `K`.
    Cooperative,
    /// Only the device at this decode position transmits common data.
    SingleDevice(usize),
    /// Every device must deliver all `K` bits on its own (NOMA, same order).
    PerDevice,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaOptions {
    /// Relative objective improvement below which the loop stops.
    pub eps: f64,
    /// Maximum number of outer iterations.
    pub n_max: usize,
    /// Subproblem solver tolerance (scaled units).
    pub tol: f64,
}

impl Default for ScaOptions {
    fn default() -> Self {
        ScaOptions { eps: 1e-4, n_max: 50, tol: solver::DEFAULT_TOL }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaStatus {
    Converged,
    IterLimit,
    Infeasible,
    /// The very first subproblem failed; there is no certified iterate.
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// Min individual throughput of the iterate (bits).
    pub phi: f64,
    /// Optimal value of the restricted subproblem (bits).
    pub subproblem_phi: f64,
    pub status: SolveStatus,
    pub kkt_residual: f64,
    pub newton_steps: usize,
    /// Largest relative gap between the subproblem's `S1`, `S2`, `S3` and
    /// the sums they bound.
    pub slack_gap: f64,
    pub wall_time: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaTrace {
    pub iterations: Vec<IterationRecord>,
    pub status: ScaStatus,
}

impl ScaTrace {
    pub fn phi(&self) -> Vec<f64> {
        self.iterations.iter().map(|r| r.phi).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaOutcome {
    pub allocation: Allocation,
    pub slacks: SlackVars,
    /// Min individual throughput at the returned allocation (bits); 0 when
    /// infeasible.
    pub objective: f64,
    pub trace: ScaTrace,
}

impl ScaOutcome {
    fn without_solution(n: usize, status: ScaStatus, iterations: Vec<IterationRecord>) -> Self {
        ScaOutcome {
            allocation: Allocation::zeros(n),
            slacks: SlackVars::default(),
            objective: 0.0,
            trace: ScaTrace { iterations, status },
        }
    }
}

/// Starting point: half the latency budget and half of every energy budget
/// for the individual stage.
pub fn default_init(scenario: &Scenario, channel: &ChannelRealization) -> SlackPoint {
    let e_i: Vec<f64> = scenario.e_max_sorted(channel).iter().map(|e| e / 2.0).collect();
    let gamma = &channel.gamma;
    let s3 = (0..gamma.len().saturating_sub(1))
        .map(|n| (n + 1..gamma.len()).map(|k| e_i[k] * gamma[k]).sum())
        .collect();
    SlackPoint { tau_i: scenario.t_max_s / 2.0, s3 }
}

/// Per-device minimal common-stage energies for the given stage duration,
/// when every device must deliver `K` bits under SIC. `None` if some
/// target is not representable.
fn per_device_min_energy(k_bits: f64, tau: f64, w: f64, gamma: &[f64]) -> Option<Vec<f64>> {
    let theta = (k_bits / (tau * w) * LN_2).exp_m1();
    let n = gamma.len();
    let e: Vec<f64> = (0..n)
        .map(|i| tau * theta * (1.0 + theta).powi((n - 1 - i) as i32) / gamma[i])
        .collect();
    e.iter().all(|v| v.is_finite()).then_some(e)
}

/// A strictly feasible common-stage operating point when every device must
/// deliver `K` bits, or `None` when no such point exists.
pub fn per_device_common_start(scenario: &Scenario, channel: &ChannelRealization) -> Option<(f64, Vec<f64>)> {
    let e_max = scenario.e_max_sorted(channel);
    let w = scenario.bandwidth_hz;
    let k = scenario.k_common_bits;
    let tau_hi = scenario.t_max_s * (1.0 - 2.0 * TAU_MIN_FRACTION);
    let fits = |tau: f64| -> bool {
        per_device_min_energy(k, tau, w, &channel.gamma)
            .is_some_and(|e| e.iter().zip(&e_max).all(|(e, m)| e < m))
    };
    if !fits(tau_hi) {
        return None;
    }
    let (mut lo, mut hi) = (0.0, tau_hi);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if fits(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let tau = 0.5 * (hi + tau_hi);
    let e = per_device_min_energy(k, tau, w, &channel.gamma)?;
    let headroom = e.iter().zip(&e_max).map(|(e, m)| m / e).fold(f64::INFINITY, f64::min);
    let scale = 0.5 * (1.0 + headroom.min(1e6));
    Some((tau, e.iter().map(|v| v * scale).collect()))
}

#[derive(Debug, Clone)]
struct Scales {
    time: f64,
    rate: f64,
    energy: Vec<f64>,
    s1: f64,
    s2: Vec<f64>,
    s3: Vec<f64>,
}

/// A subproblem in scaled units together with the maps between the
/// solver's variable vector and physical quantities.
#[derive(Debug, Clone)]
pub struct PreparedSubproblem {
    pub problem: ConvexSubproblem,
    pub stage: CommonStage,
    scales: Scales,
    gamma: Vec<f64>,
    phi: usize,
    tau_c: usize,
    tau_i: usize,
    e_c: Range<usize>,
    e_i: Range<usize>,
    s1: usize,
    s2: Range<usize>,
    s3: Range<usize>,
    c2: Range<usize>,
    c3: Range<usize>,
}

impl PreparedSubproblem {
    /// Solver vector for a physical point.
    pub fn encode(&self, allocation: &Allocation, slacks: &SlackVars, phi: f64) -> Vec<f64> {
        let sc = &self.scales;
        let mut x = vec![0.0; self.problem.n_vars()];
        x[self.phi] = phi / sc.rate;
        x[self.tau_c] = allocation.tau_c / sc.time;
        x[self.tau_i] = allocation.tau_i / sc.time;
        for (n, j) in self.e_c.clone().enumerate() {
            x[j] = allocation.e_c[n] / sc.energy[n];
        }
        for (n, j) in self.e_i.clone().enumerate() {
            x[j] = allocation.e_i[n] / sc.energy[n];
        }
        x[self.s1] = slacks.s1 / sc.s1;
        for (n, j) in self.s2.clone().enumerate() {
            x[j] = slacks.s2[n] / sc.s2[n];
        }
        for (n, j) in self.s3.clone().enumerate() {
            x[j] = slacks.s3[n] / sc.s3[n];
        }
        for (n, j) in self.c2.clone().enumerate() {
            x[j] = slacks.c2[n] / sc.s2[n];
        }
        for (n, j) in self.c3.clone().enumerate() {
            x[j] = slacks.c3[n] / sc.s3[n];
        }
        for (j, v) in x.iter_mut().enumerate() {
            if self.problem.is_fixed(j) {
                *v = self.problem.lower[j];
            }
        }
        x
    }

    /// Physical allocation, slacks and `phi` (bits) of a solver vector.
    pub fn decode(&self, x: &[f64]) -> (Allocation, SlackVars, f64) {
        let sc = &self.scales;
        let e = |r: &Range<usize>| -> Vec<f64> {
            r.clone().enumerate().map(|(n, j)| x[j].max(0.0) * sc.energy[n]).collect()
        };
        let s = |r: &Range<usize>, scale: &[f64]| -> Vec<f64> {
            r.clone().enumerate().map(|(n, j)| x[j] * scale[n]).collect()
        };
        let allocation = Allocation {
            tau_c: x[self.tau_c] * sc.time,
            tau_i: x[self.tau_i] * sc.time,
            e_c: e(&self.e_c),
            e_i: e(&self.e_i),
        };
        let slacks = SlackVars {
            s1: x[self.s1] * sc.s1,
            s2: s(&self.s2, &sc.s2),
            s3: s(&self.s3, &sc.s3),
            c2: s(&self.c2, &sc.s2_common()),
            c3: s(&self.c3, &sc.s3_common()),
        };
        (allocation, slacks, x[self.phi] * sc.rate)
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }
}

impl Scales {
    // common-stage slacks share the individual-stage scales: both bound
    // sums of E_max gamma over the same device tails
    fn s2_common(&self) -> Vec<f64> {
        self.s2.clone()
    }

    fn s3_common(&self) -> Vec<f64> {
        self.s3.clone()
    }
}

/// Builds the concave restriction for the cooperative scheme at `point`.
pub fn build_subproblem(
    scenario: &Scenario,
    channel: &ChannelRealization,
    point: &SlackPoint,
) -> Result<PreparedSubproblem> {
    build_subproblem_for(CommonStage::Cooperative, scenario, channel, point, None)
}

/// Builds the concave restriction for any stage-1 variant. `common_point`
/// is the stage-1 expansion point `(tau^C, C3)` and is required for
/// [`CommonStage::PerDevice`] with `K > 0`.
pub fn build_subproblem_for(
    stage: CommonStage,
    scenario: &Scenario,
    channel: &ChannelRealization,
    point: &SlackPoint,
    common_point: Option<&SlackPoint>,
) -> Result<PreparedSubproblem> {
    scenario.validate()?;
    let n = channel.n_devices();
    if n != scenario.n_devices {
        return Err(Error::InvalidScenario("channel and scenario disagree on device count".into()));
    }
    if point.s3.len() != n - 1 {
        return Err(Error::Domain(format!("expansion point has {} slacks, need {}", point.s3.len(), n - 1)));
    }
    if let CommonStage::SingleDevice(i) = stage {
        if i >= n {
            return Err(Error::Domain(format!("device {i} out of range")));
        }
    }
    let gamma = channel.gamma.clone();
    let e_max = scenario.e_max_sorted(channel);
    let w = scenario.bandwidth_hz;
    let t_max = scenario.t_max_s;
    let k = scenario.k_common_bits;
    let has_common = k > 0.0;
    let per_device = stage == CommonStage::PerDevice && has_common;

    let eg: Vec<f64> = e_max.iter().zip(&gamma).map(|(e, g)| e * g).collect();
    let tail = |from: usize| -> f64 { eg[from..].iter().sum() };
    let scales = Scales {
        time: t_max,
        rate: w * t_max,
        energy: e_max.clone(),
        s1: match stage {
            CommonStage::SingleDevice(i) => eg[i],
            _ => tail(0),
        },
        s2: (0..n).map(tail).collect(),
        s3: (1..n).map(tail).collect(),
    };

    let mut layout = VarLayout::new();
    let phi = layout.push("phi", 1).start;
    let tau_c = layout.push("tau_c", 1).start;
    let tau_i = layout.push("tau_i", 1).start;
    let e_c = layout.push("e_c", n);
    let e_i = layout.push("e_i", n);
    let s1 = layout.push("s1", 1).start;
    let s2 = layout.push("s2", n);
    let s3 = layout.push("s3", n - 1);
    let (c2, c3) = if per_device {
        (layout.push("c2", n), layout.push("c3", n - 1))
    } else {
        (0..0, 0..0)
    };

    let mut p = ConvexSubproblem::new(layout);
    let tau_min = TAU_MIN_FRACTION;
    p.objective[phi] = 1.0;
    let phi_cap = log2_1p(eg[n - 1] / t_max) + 1.0;
    p.set_bounds(phi, -1.0, phi_cap);
    p.set_bounds(tau_i, tau_min, 1.0);
    for j in e_i.clone().chain(s2.clone()).chain(s3.clone()).chain(c2.clone()).chain(c3.clone()) {
        p.set_bounds(j, 0.0, 1.0);
    }
    if has_common {
        p.set_bounds(tau_c, tau_min, 1.0);
        for (m, j) in e_c.clone().enumerate() {
            let allowed = match stage {
                CommonStage::SingleDevice(i) => m == i,
                _ => true,
            };
            if allowed {
                p.set_bounds(j, 0.0, 1.0);
            } else {
                p.fix(j, 0.0);
            }
        }
        if per_device {
            p.fix(s1, 0.0);
        } else {
            p.set_bounds(s1, 0.0, 1.0);
        }
    } else {
        p.fix(tau_c, 0.0);
        p.fix(s1, 0.0);
        for j in e_c.clone() {
            p.fix(j, 0.0);
        }
    }

    // energy and latency budgets
    for m in 0..n {
        p.linear.push(LinearRow {
            family: RowFamily::Energy,
            coeffs: vec![(e_c.start + m, 1.0), (e_i.start + m, 1.0)],
            sense: Sense::Le,
            rhs: 1.0,
        });
    }
    p.linear.push(LinearRow {
        family: RowFamily::Time,
        coeffs: vec![(tau_c, 1.0), (tau_i, 1.0)],
        sense: Sense::Le,
        rhs: 1.0,
    });

    // slack couplings: slack * scale <= / >= sum_j E'_j E_max_j gamma_j
    let coupling = |family, slack: usize, scale: f64, energies: &Range<usize>, from: usize, sense| LinearRow {
        family,
        coeffs: std::iter::once((slack, 1.0))
            .chain((from..n).map(|j| (energies.start + j, -eg[j] / scale)))
            .collect(),
        sense,
        rhs: 0.0,
    };
    for m in 0..n {
        p.linear.push(coupling(RowFamily::IndividualSlack, s2.start + m, scales.s2[m], &e_i, m, Sense::Le));
    }
    for m in 0..n - 1 {
        p.linear.push(coupling(RowFamily::InterferenceSlack, s3.start + m, scales.s3[m], &e_i, m + 1, Sense::Ge));
    }

    let k_scaled = k / scales.rate;
    if has_common && !per_device {
        let from = 0;
        let mut row = coupling(RowFamily::CommonSlack, s1, scales.s1, &e_c, from, Sense::Le);
        if let CommonStage::SingleDevice(i) = stage {
            row.coeffs.retain(|&(j, _)| j == s1 || j == e_c.start + i);
        }
        p.linear.push(row);
        p.perspective.push(PerspectiveRow {
            family: RowFamily::CommonThroughput,
            time_var: tau_c,
            slack_var: s1,
            gain: scales.s1 / t_max,
            weight: 1.0,
            rhs: AffineExpr::constant(k_scaled),
        });
    }

    // linearized D.C. rows: g1(tau, S2) - g2_hat(tau, S3) >= rhs
    let dc_rows = |p: &mut ConvexSubproblem,
                   family,
                   time: usize,
                   slack2: &Range<usize>,
                   slack3: &Range<usize>,
                   at: &SlackPoint,
                   base: AffineExpr|
     -> Result<()> {
        let terms = taylor_terms_at(at.tau_i, &at.s3, w)?;
        for m in 0..n {
            let mut rhs = base.clone();
            if m + 1 < n {
                // B + D (tau - tau0) + Q (S3 - S3_0), rescaled to solver units
                rhs.constant += (terms.b[m] - terms.d[m] * at.tau_i - terms.q[m] * at.s3[m]) / scales.rate;
                rhs.coeffs.push((time, terms.d[m] * t_max / scales.rate));
                rhs.coeffs.push((slack3.start + m, terms.q[m] * scales.s3[m] / scales.rate));
            }
            p.perspective.push(PerspectiveRow {
                family,
                time_var: time,
                slack_var: slack2.start + m,
                gain: scales.s2[m] / t_max,
                weight: 1.0,
                rhs,
            });
        }
        Ok(())
    };

    if per_device {
        let cp = common_point.ok_or_else(|| Error::Domain("per-device common stage needs a common expansion point".into()))?;
        if cp.s3.len() != n - 1 {
            return Err(Error::Domain("common expansion point has wrong length".into()));
        }
        for m in 0..n {
            p.linear.push(coupling(RowFamily::CommonSlack, c2.start + m, scales.s2[m], &e_c, m, Sense::Le));
        }
        for m in 0..n - 1 {
            p.linear.push(coupling(RowFamily::CommonSlack, c3.start + m, scales.s3[m], &e_c, m + 1, Sense::Ge));
        }
        dc_rows(&mut p, RowFamily::CommonThroughput, tau_c, &c2, &c3, cp, AffineExpr::constant(k_scaled))?;
    }

    dc_rows(&mut p, RowFamily::MinRate, tau_i, &s2, &s3, point, AffineExpr { constant: 0.0, coeffs: vec![(phi, 1.0)] })?;

    Ok(PreparedSubproblem { problem: p, stage, scales, gamma, phi, tau_c, tau_i, e_c, e_i, s1, s2, s3, c2, c3 })
}

fn slack_gap(raw: &SlackVars, tight: &SlackVars) -> f64 {
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
    let mut gap = rel(raw.s1, tight.s1);
    for (a, b) in raw.s2.iter().zip(&tight.s2).chain(raw.s3.iter().zip(&tight.s3)) {
        gap = gap.max(rel(*a, *b));
    }
    gap
}

/// Runs the cooperative scheme from `init` (or [`default_init`]).
pub fn sca_solve(
    scenario: &Scenario,
    channel: &ChannelRealization,
    init: Option<SlackPoint>,
    opts: &ScaOptions,
) -> Result<ScaOutcome> {
    sca_solve_for(CommonStage::Cooperative, scenario, channel, init, opts)
}

/// Whether stage 1 can be met at all under `stage`.
pub fn common_stage_feasible(stage: CommonStage, scenario: &Scenario, channel: &ChannelRealization) -> bool {
    let k = scenario.k_common_bits;
    if k == 0.0 {
        return true;
    }
    // durations are floored at tau_min, so stage 1 gets at most T (1 - tau_min)
    let usable = Scenario { t_max_s: scenario.t_max_s * (1.0 - TAU_MIN_FRACTION), ..scenario.clone() };
    match stage {
        CommonStage::Cooperative => model::max_common_capacity(&usable, channel) > k,
        CommonStage::SingleDevice(i) => model::single_device_capacity(&usable, channel, i) > k,
        CommonStage::PerDevice => per_device_common_start(scenario, channel).is_some(),
    }
}

/// The SCA loop for any stage-1 variant.
pub fn sca_solve_for(
    stage: CommonStage,
    scenario: &Scenario,
    channel: &ChannelRealization,
    init: Option<SlackPoint>,
    opts: &ScaOptions,
) -> Result<ScaOutcome> {
    scenario.validate()?;
    let n = channel.n_devices();
    if n != scenario.n_devices {
        return Err(Error::InvalidScenario("channel and scenario disagree on device count".into()));
    }
    if !common_stage_feasible(stage, scenario, channel) {
        return Ok(ScaOutcome::without_solution(n, ScaStatus::Infeasible, Vec::new()));
    }
    let w = scenario.bandwidth_hz;
    let gamma = &channel.gamma;
    let per_device = stage == CommonStage::PerDevice && scenario.k_common_bits > 0.0;

    let explicit_init = init.is_some();
    let mut point = init.unwrap_or_else(|| default_init(scenario, channel));
    let mut common_point = None;
    if per_device {
        let (tau_c, e_c) = per_device_common_start(scenario, channel)
            .ok_or_else(|| Error::Domain("no feasible per-device common stage".into()))?;
        let s3 = (1..n).map(|m| (m..n).map(|k| e_c[k] * gamma[k]).sum()).collect();
        common_point = Some(SlackPoint { tau_i: tau_c, s3 });
        if !explicit_init {
            // expand stage 2 where it can actually live next to this stage 1
            let e_max = scenario.e_max_sorted(channel);
            let e_i: Vec<f64> = e_max.iter().zip(&e_c).map(|(m, c)| 0.5 * (m - c)).collect();
            point = SlackPoint {
                tau_i: (scenario.t_max_s - tau_c).max(scenario.t_max_s * TAU_MIN_FRACTION),
                s3: (1..n).map(|m| (m..n).map(|k| e_i[k] * gamma[k]).sum()).collect(),
            };
        }
    }

    let mut records: Vec<IterationRecord> = Vec::new();
    let mut best: Option<(Allocation, SlackVars, f64)> = None;
    let mut status = ScaStatus::IterLimit;

    for _m in 0..opts.n_max {
        let started = Instant::now();
        let prepared = build_subproblem_for(stage, scenario, channel, &point, common_point.as_ref())?;
        let outcome = solver::solve(&prepared.problem, opts.tol)?;
        let (allocation, raw, sub_phi) = prepared.decode(&outcome.x);
        let mut record = IterationRecord {
            slack_gap: slack_gap(&raw, &SlackVars::tight(&allocation, gamma, per_device)),
            phi: f64::NAN,
            subproblem_phi: sub_phi,
            status: outcome.status,
            kkt_residual: outcome.kkt_residual,
            newton_steps: outcome.newton_steps,
            wall_time: Duration::ZERO,
        };
        match outcome.status {
            SolveStatus::Optimal => {}
            SolveStatus::Infeasible if best.is_none() => {
                record.wall_time = started.elapsed();
                records.push(record);
                return Ok(ScaOutcome::without_solution(n, ScaStatus::Infeasible, records));
            }
            _ if best.is_none() => {
                record.wall_time = started.elapsed();
                records.push(record);
                return Ok(ScaOutcome::without_solution(n, ScaStatus::NumericalFailure, records));
            }
            _ => {
                // keep the last certified iterate
                status = ScaStatus::IterLimit;
                break;
            }
        }

        // tightening the couplings keeps every row satisfied and can only
        // raise the rates
        let slacks = SlackVars::tight(&allocation, gamma, per_device);
        let phi = model::objective_min_individual(&allocation, gamma, w)?;
        record.wall_time = started.elapsed();

        let previous = best.as_ref().map(|b| b.2);
        if let Some(prev) = previous {
            if phi < prev {
                // solver drift below the incumbent: the incumbent is the
                // fixed point of the iteration
                record.phi = prev;
                records.push(record);
                status = ScaStatus::Converged;
                break;
            }
        }
        record.phi = phi;
        records.push(record);
        point = SlackPoint { tau_i: allocation.tau_i, s3: slacks.s3.clone() };
        if per_device {
            common_point = Some(SlackPoint { tau_i: allocation.tau_c, s3: slacks.c3.clone() });
        }
        best = Some((allocation, slacks, phi));
        if let Some(prev) = previous {
            if (phi - prev) / prev.max(1.0) <= opts.eps {
                status = ScaStatus::Converged;
                break;
            }
        }
    }

    let (allocation, slacks, objective) = best.expect("at least one certified iterate");
    Ok(ScaOutcome { allocation, slacks, objective, trace: ScaTrace { iterations: records, status } })
}
