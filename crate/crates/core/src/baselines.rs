//! Comparison schemes built on the same optimization machinery.
//!
//! - **S-NOMA**: a single device offloads all common data, individual data
//!   uses NOMA. Every device is tried as the common-data carrier.
//! - **S-OMA**: common data as in S-NOMA, individual data over exclusive
//!   sub-slots. The problem is jointly concave and needs one solve per
//!   candidate.
//! - **Benchmark**: every device must deliver all common data on its own
//!   over a NOMA stage 1.

use std::fmt;
use std::str::FromStr;

use crate::channel::{ChannelRealization, Scenario};
use crate::error::{Error, Result};
use crate::model::{self, Allocation};
use crate::numeric::{log2_1p, perspective_bits};
use crate::sca::{self, CommonStage, ScaOptions, ScaOutcome, ScaStatus, ScaTrace};
use crate::solver::{
    self, AffineExpr, ConvexSubproblem, LinearRow, PerspectiveRow, RowFamily, Sense, SolveStatus, VarLayout,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    Proposed,
    SNoma,
    SOma,
    Benchmark,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Proposed, Scheme::SNoma, Scheme::SOma, Scheme::Benchmark];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::SNoma => "s-noma",
            Scheme::SOma => "s-oma",
            Scheme::Benchmark => "benchmark",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Domain(format!("unknown scheme '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeStatus {
    Feasible,
    Infeasible,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeResult {
    pub scheme: Scheme,
    /// Min individual-stage throughput (bits); 0 unless feasible.
    pub objective: f64,
    pub allocation: Allocation,
    /// Per-device common-stage bits, decode order.
    pub common_bits: Vec<f64>,
    /// Per-device individual-stage bits, decode order.
    pub individual_bits: Vec<f64>,
    pub status: SchemeStatus,
    pub trace: Option<ScaTrace>,
    /// Decode position of the common-data carrier (S-NOMA, S-OMA).
    pub selected_device: Option<usize>,
    /// Individual-stage sub-slot durations (S-OMA).
    pub oma_slots: Option<Vec<f64>>,
}

impl SchemeResult {
    fn empty(scheme: Scheme, n: usize, status: SchemeStatus, trace: Option<ScaTrace>) -> Self {
        SchemeResult {
            scheme,
            objective: 0.0,
            allocation: Allocation::zeros(n),
            common_bits: vec![0.0; n],
            individual_bits: vec![0.0; n],
            status,
            trace,
            selected_device: None,
            oma_slots: None,
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.status == SchemeStatus::Feasible
    }
}

fn from_sca(scheme: Scheme, out: ScaOutcome, channel: &ChannelRealization, w: f64) -> Result<SchemeResult> {
    let n = channel.n_devices();
    let status = match out.trace.status {
        ScaStatus::Converged | ScaStatus::IterLimit => SchemeStatus::Feasible,
        ScaStatus::Infeasible => SchemeStatus::Infeasible,
        ScaStatus::NumericalFailure => SchemeStatus::NumericalFailure,
    };
    if status != SchemeStatus::Feasible {
        return Ok(SchemeResult::empty(scheme, n, status, Some(out.trace)));
    }
    let a = &out.allocation;
    Ok(SchemeResult {
        scheme,
        objective: out.objective,
        common_bits: model::common_rates(a.tau_c, &a.e_c, &channel.gamma, w)?,
        individual_bits: model::individual_rates(a.tau_i, &a.e_i, &channel.gamma, w)?,
        allocation: out.allocation,
        status,
        trace: Some(out.trace),
        selected_device: None,
        oma_slots: None,
    })
}

/// The cooperative scheme.
pub fn solve_proposed(scenario: &Scenario, channel: &ChannelRealization, opts: &ScaOptions) -> Result<SchemeResult> {
    let out = sca::sca_solve(scenario, channel, None, opts)?;
    from_sca(Scheme::Proposed, out, channel, scenario.bandwidth_hz)
}

/// Keeps the best candidate; on equal objectives the earlier (stronger)
/// device wins.
fn pick_best(candidates: Vec<SchemeResult>, scheme: Scheme, n: usize) -> SchemeResult {
    let mut best: Option<SchemeResult> = None;
    let mut any_failure = false;
    for c in candidates {
        match c.status {
            SchemeStatus::Feasible => {
                if best.as_ref().is_none_or(|b| c.objective > b.objective) {
                    best = Some(c);
                }
            }
            SchemeStatus::NumericalFailure => any_failure = true,
            SchemeStatus::Infeasible => {}
        }
    }
    best.unwrap_or_else(|| {
        let status = if any_failure { SchemeStatus::NumericalFailure } else { SchemeStatus::Infeasible };
        SchemeResult::empty(scheme, n, status, None)
    })
}

/// Single-device common stage, NOMA individual stage.
pub fn solve_s_noma(scenario: &Scenario, channel: &ChannelRealization, opts: &ScaOptions) -> Result<SchemeResult> {
    scenario.validate()?;
    let n = channel.n_devices();
    let w = scenario.bandwidth_hz;
    let mut candidates = Vec::with_capacity(n);
    for i in 0..n {
        let out = sca::sca_solve_for(CommonStage::SingleDevice(i), scenario, channel, None, opts)?;
        let mut r = from_sca(Scheme::SNoma, out, channel, w)?;
        r.selected_device = Some(i);
        candidates.push(r);
    }
    Ok(pick_best(candidates, Scheme::SNoma, n))
}

/// Per-device individual-stage bits over orthogonal sub-slots.
pub fn oma_rates(slots: &[f64], e_i: &[f64], gamma: &[f64], w: f64) -> Vec<f64> {
    slots
        .iter()
        .zip(e_i)
        .zip(gamma)
        .map(|((&t, &e), &g)| perspective_bits(t, e * g, w))
        .collect()
}

/// S-OMA for one common-data carrier, in a single concave solve.
pub fn solve_s_oma_candidate(
    scenario: &Scenario,
    channel: &ChannelRealization,
    carrier: usize,
    tol: f64,
) -> Result<SchemeResult> {
    scenario.validate()?;
    let n = channel.n_devices();
    if carrier >= n {
        return Err(Error::Domain(format!("device {carrier} out of range")));
    }
    let w = scenario.bandwidth_hz;
    let t_max = scenario.t_max_s;
    let k = scenario.k_common_bits;
    let gamma = &channel.gamma;
    let e_max = scenario.e_max_sorted(channel);
    let eg: Vec<f64> = e_max.iter().zip(gamma).map(|(e, g)| e * g).collect();
    let rate_scale = w * t_max;

    if !sca::common_stage_feasible(CommonStage::SingleDevice(carrier), scenario, channel) {
        return Ok(SchemeResult::empty(Scheme::SOma, n, SchemeStatus::Infeasible, None));
    }

    let mut layout = VarLayout::new();
    let phi = layout.push("phi", 1).start;
    let tau_c = layout.push("tau_c", 1).start;
    let slots = layout.push("t", n);
    let e_c = layout.push("e_c", n);
    let e_i = layout.push("e_i", n);
    let mut p = ConvexSubproblem::new(layout);
    p.objective[phi] = 1.0;
    let cap = eg.iter().map(|v| log2_1p(v / t_max)).fold(f64::INFINITY, f64::min);
    p.set_bounds(phi, -1.0, cap + 1.0);
    for j in slots.clone() {
        p.set_bounds(j, model::TAU_MIN_FRACTION, 1.0);
    }
    for j in e_i.clone() {
        p.set_bounds(j, 0.0, 1.0);
    }
    for (m, j) in e_c.clone().enumerate() {
        if m == carrier && k > 0.0 {
            p.set_bounds(j, 0.0, 1.0);
        } else {
            p.fix(j, 0.0);
        }
    }
    if k > 0.0 {
        p.set_bounds(tau_c, model::TAU_MIN_FRACTION, 1.0);
        p.perspective.push(PerspectiveRow {
            family: RowFamily::CommonThroughput,
            time_var: tau_c,
            slack_var: e_c.start + carrier,
            gain: eg[carrier] / t_max,
            weight: 1.0,
            rhs: AffineExpr::constant(k / rate_scale),
        });
    } else {
        p.fix(tau_c, 0.0);
    }
    for m in 0..n {
        p.linear.push(LinearRow {
            family: RowFamily::Energy,
            coeffs: vec![(e_c.start + m, 1.0), (e_i.start + m, 1.0)],
            sense: Sense::Le,
            rhs: 1.0,
        });
        p.perspective.push(PerspectiveRow {
            family: RowFamily::MinRate,
            time_var: slots.start + m,
            slack_var: e_i.start + m,
            gain: eg[m] / t_max,
            weight: 1.0,
            rhs: AffineExpr { constant: 0.0, coeffs: vec![(phi, 1.0)] },
        });
    }
    p.linear.push(LinearRow {
        family: RowFamily::SubSlot,
        coeffs: std::iter::once((tau_c, 1.0)).chain(slots.clone().map(|j| (j, 1.0))).collect(),
        sense: Sense::Le,
        rhs: 1.0,
    });

    let out = solver::solve(&p, tol)?;
    match out.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => return Ok(SchemeResult::empty(Scheme::SOma, n, SchemeStatus::Infeasible, None)),
        SolveStatus::NumericalFailure => {
            return Ok(SchemeResult::empty(Scheme::SOma, n, SchemeStatus::NumericalFailure, None))
        }
    }
    let x = &out.x;
    let t: Vec<f64> = slots.clone().map(|j| x[j].max(0.0) * t_max).collect();
    let energy = |r: &std::ops::Range<usize>| -> Vec<f64> {
        r.clone().enumerate().map(|(m, j)| x[j].max(0.0) * e_max[m]).collect()
    };
    let allocation = Allocation {
        tau_c: x[tau_c].max(0.0) * t_max,
        tau_i: t.iter().sum(),
        e_c: energy(&e_c),
        e_i: energy(&e_i),
    };
    let individual_bits = oma_rates(&t, &allocation.e_i, gamma, w);
    let objective = individual_bits.iter().copied().fold(f64::INFINITY, f64::min);
    let mut common_bits = vec![0.0; n];
    common_bits[carrier] = perspective_bits(allocation.tau_c, allocation.e_c[carrier] * gamma[carrier], w);
    Ok(SchemeResult {
        scheme: Scheme::SOma,
        objective,
        allocation,
        common_bits,
        individual_bits,
        status: SchemeStatus::Feasible,
        trace: None,
        selected_device: Some(carrier),
        oma_slots: Some(t),
    })
}

/// Single-device common stage, orthogonal individual stage.
pub fn solve_s_oma(scenario: &Scenario, channel: &ChannelRealization, opts: &ScaOptions) -> Result<SchemeResult> {
    let n = channel.n_devices();
    let candidates = (0..n)
        .map(|i| solve_s_oma_candidate(scenario, channel, i, opts.tol))
        .collect::<Result<Vec<_>>>()?;
    Ok(pick_best(candidates, Scheme::SOma, n))
}

/// Every device delivers the full common data in a NOMA stage 1.
pub fn solve_benchmark(scenario: &Scenario, channel: &ChannelRealization, opts: &ScaOptions) -> Result<SchemeResult> {
    let out = sca::sca_solve_for(CommonStage::PerDevice, scenario, channel, None, opts)?;
    from_sca(Scheme::Benchmark, out, channel, scenario.bandwidth_hz)
}

pub fn solve_scheme(
    scheme: Scheme,
    scenario: &Scenario,
    channel: &ChannelRealization,
    opts: &ScaOptions,
) -> Result<SchemeResult> {
    match scheme {
        Scheme::Proposed => solve_proposed(scenario, channel, opts),
        Scheme::SNoma => solve_s_noma(scenario, channel, opts),
        Scheme::SOma => solve_s_oma(scenario, channel, opts),
        Scheme::Benchmark => solve_benchmark(scenario, channel, opts),
    }
}
