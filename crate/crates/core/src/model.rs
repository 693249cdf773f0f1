//! Rate expressions, the max-min objective and constraint residuals.
//!
//! Every vector here is in decode order, matching
//! [`ChannelRealization::gamma`]. Rates are in bits over the stage duration,
//! evaluated in energy form: power is `E / tau`.

use crate::channel::{ChannelRealization, Scenario};
use crate::error::{Error, Result};
use crate::numeric::{log2_1p, perspective_bits};

/// Fraction of `T_max` used as the lower bound on both stage durations
/// inside the optimizer.
pub const TAU_MIN_FRACTION: f64 = 1e-9;

/// Decision variables in energy form.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub tau_c: f64,
    pub tau_i: f64,
    pub e_c: Vec<f64>,
    pub e_i: Vec<f64>,
}

impl Allocation {
    pub fn zeros(n: usize) -> Self {
        Allocation { tau_c: 0.0, tau_i: 0.0, e_c: vec![0.0; n], e_i: vec![0.0; n] }
    }

    /// Transmit powers `(P^C, P^I)`; a zero-length stage gives zero power.
    pub fn powers(&self) -> (Vec<f64>, Vec<f64>) {
        let p = |e: &[f64], tau: f64| -> Vec<f64> {
            e.iter().map(|&e| if tau > 0.0 { e / tau } else { 0.0 }).collect()
        };
        (p(&self.e_c, self.tau_c), p(&self.e_i, self.tau_i))
    }
}

fn check_stage(tau: f64, e: &[f64], gamma: &[f64]) -> Result<bool> {
    if e.len() != gamma.len() {
        return Err(Error::Domain(format!(
            "energy vector has {} entries, gamma has {}",
            e.len(),
            gamma.len()
        )));
    }
    if tau < 0.0 || !tau.is_finite() {
        return Err(Error::Domain(format!("stage duration must be non-negative, got {tau}")));
    }
    if tau == 0.0 {
        if e.iter().any(|&x| x > 0.0) {
            return Err(Error::Domain("positive energy in a zero-length stage".into()));
        }
        return Ok(false);
    }
    Ok(true)
}

/// Throughput of device `n` (0-based decode position) in a NOMA stage,
/// treating all later-decoded devices as interference.
fn sic_rate(n: usize, tau: f64, e: &[f64], gamma: &[f64], w: f64) -> Result<f64> {
    if n >= gamma.len() {
        return Err(Error::Domain(format!("device index {n} out of range")));
    }
    if !check_stage(tau, e, gamma)? {
        return Ok(0.0);
    }
    let interference: f64 = (n + 1..gamma.len()).map(|k| e[k] * gamma[k] / tau).sum();
    let sinr = (e[n] * gamma[n] / tau) / (1.0 + interference);
    Ok(tau * w * log2_1p(sinr))
}

fn sum_rate(tau: f64, e: &[f64], gamma: &[f64], w: f64) -> Result<f64> {
    if !check_stage(tau, e, gamma)? {
        return Ok(0.0);
    }
    let s: f64 = e.iter().zip(gamma).map(|(e, g)| e * g).sum();
    Ok(perspective_bits(tau, s, w))
}

/// Common-stage bits delivered by device `n`.
pub fn common_rate(n: usize, tau_c: f64, e_c: &[f64], gamma: &[f64], w: f64) -> Result<f64> {
    sic_rate(n, tau_c, e_c, gamma, w)
}

/// Total common-stage bits; equals the sum of [`common_rate`] over devices.
pub fn common_sum_rate(tau_c: f64, e_c: &[f64], gamma: &[f64], w: f64) -> Result<f64> {
    sum_rate(tau_c, e_c, gamma, w)
}

/// Individual-stage bits delivered by device `n`.
pub fn individual_rate(n: usize, tau_i: f64, e_i: &[f64], gamma: &[f64], w: f64) -> Result<f64> {
    sic_rate(n, tau_i, e_i, gamma, w)
}

pub fn individual_rates(tau_i: f64, e_i: &[f64], gamma: &[f64], w: f64) -> Result<Vec<f64>> {
    (0..gamma.len()).map(|n| individual_rate(n, tau_i, e_i, gamma, w)).collect()
}

pub fn common_rates(tau_c: f64, e_c: &[f64], gamma: &[f64], w: f64) -> Result<Vec<f64>> {
    (0..gamma.len()).map(|n| common_rate(n, tau_c, e_c, gamma, w)).collect()
}

/// The max-min objective: the smallest individual-stage throughput.
pub fn objective_min_individual(allocation: &Allocation, gamma: &[f64], w: f64) -> Result<f64> {
    let rates = individual_rates(allocation.tau_i, &allocation.e_i, gamma, w)?;
    Ok(rates.into_iter().fold(f64::INFINITY, f64::min))
}

/// Constraint residuals of an allocation; positive entries are violations.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    /// `E_n^C + E_n^I - E_{n,max}` per device (decode order).
    pub energy: Vec<f64>,
    /// `tau^C + tau^I - T_max`.
    pub time: f64,
    /// `K - common_sum_rate`.
    pub common_data: f64,
    /// Largest negative part over durations and energies, as a positive number.
    pub nonnegativity: f64,
    pub worst_violation: f64,
    pub feasible: bool,
}

/// Evaluates all constraints of the original problem. Never fails on finite
/// input: an undefined common rate (energy in a zero-length stage) is
/// reported as a full `K` shortfall.
pub fn check_feasibility(
    allocation: &Allocation,
    scenario: &Scenario,
    channel: &ChannelRealization,
    tol: f64,
) -> FeasibilityReport {
    let e_max = scenario.e_max_sorted(channel);
    let energy: Vec<f64> = (0..e_max.len())
        .map(|n| {
            allocation.e_c.get(n).copied().unwrap_or(0.0)
                + allocation.e_i.get(n).copied().unwrap_or(0.0)
                - e_max[n]
        })
        .collect();
    let time = allocation.tau_c + allocation.tau_i - scenario.t_max_s;
    let delivered = common_sum_rate(
        allocation.tau_c.max(0.0),
        &allocation.e_c,
        &channel.gamma,
        scenario.bandwidth_hz,
    )
    .unwrap_or(0.0);
    let common_data = scenario.k_common_bits - delivered;
    let nonnegativity = std::iter::once(allocation.tau_c)
        .chain(std::iter::once(allocation.tau_i))
        .chain(allocation.e_c.iter().copied())
        .chain(allocation.e_i.iter().copied())
        .map(|v| (-v).max(0.0))
        .fold(0.0, f64::max);
    // common-data residual is in bits; compare it relative to K
    let common_scaled = if scenario.k_common_bits > 0.0 {
        common_data / scenario.k_common_bits
    } else {
        common_data
    };
    let worst_violation = energy
        .iter()
        .copied()
        .chain([time, common_scaled, nonnegativity])
        .fold(f64::NEG_INFINITY, f64::max)
        .max(0.0);
    FeasibilityReport {
        energy,
        time,
        common_data,
        nonnegativity,
        worst_violation,
        feasible: worst_violation <= tol,
    }
}

/// Largest common-stage throughput reachable when every device spends its
/// whole budget over the whole latency budget.
pub fn max_common_capacity(scenario: &Scenario, channel: &ChannelRealization) -> f64 {
    let e_max = scenario.e_max_sorted(channel);
    let s: f64 = e_max.iter().zip(&channel.gamma).map(|(e, g)| e * g).sum();
    perspective_bits(scenario.t_max_s, s, scenario.bandwidth_hz)
}

/// Single-device version of [`max_common_capacity`] for decode position `n`.
pub fn single_device_capacity(scenario: &Scenario, channel: &ChannelRealization, n: usize) -> f64 {
    let e_max = scenario.e_max_sorted(channel);
    perspective_bits(scenario.t_max_s, e_max[n] * channel.gamma[n], scenario.bandwidth_hz)
}
