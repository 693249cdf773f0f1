//! Seeded Monte-Carlo sweeps, aggregation and the exhaustive grid oracle.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::baselines::{self, Scheme, SchemeResult, SchemeStatus};
use crate::channel::{sample_channel, ChannelRealization, Scenario};
use crate::error::{Error, Result};
use crate::metrics;
use crate::model::{self, Allocation};
use crate::numeric::log2_1p;
use crate::sca::{self, ScaOptions, ScaStatus};

pub const CSV_HEADER: &str = "sweep,scheme,metric,mean,stderr,n_ok,n_fail";

#[derive(Debug, Clone, PartialEq)]
pub enum SweepAxis {
    /// Common-data size in bits.
    K(Vec<f64>),
    /// Device count; every device gets the base scenario's budget.
    N(Vec<usize>),
    /// Budget of the device at 1-based channel `rank` (1 = strongest).
    DeviceEnergy { rank: usize, values: Vec<f64> },
}

impl SweepAxis {
    pub fn len(&self) -> usize {
        match self {
            SweepAxis::K(v) => v.len(),
            SweepAxis::N(v) => v.len(),
            SweepAxis::DeviceEnergy { values, .. } => values.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The sweep value at `i` as written to CSV.
    pub fn value(&self, i: usize) -> f64 {
        match self {
            SweepAxis::K(v) => v[i],
            SweepAxis::N(v) => v[i] as f64,
            SweepAxis::DeviceEnergy { values, .. } => values[i],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub base: Scenario,
    pub axis: SweepAxis,
    pub schemes: Vec<Scheme>,
    pub n_trials: usize,
    pub master_seed: u64,
    pub sca: ScaOptions,
    /// Worker threads; 1 runs serially.
    pub threads: usize,
}

impl ExperimentConfig {
    pub fn new(base: Scenario, axis: SweepAxis) -> Self {
        ExperimentConfig {
            base,
            axis,
            schemes: Scheme::ALL.to_vec(),
            n_trials: 100,
            master_seed: 0,
            sca: ScaOptions::default(),
            threads: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Experiment(m));
        if self.n_trials == 0 {
            return bad("n_trials must be at least 1".into());
        }
        if self.axis.is_empty() {
            return bad("sweep has no values".into());
        }
        if self.schemes.is_empty() {
            return bad("no schemes selected".into());
        }
        if self.threads == 0 {
            return bad("threads must be at least 1".into());
        }
        if self.axis.len() > u32::MAX as usize || self.n_trials > u32::MAX as usize {
            return bad("sweep or trial count too large".into());
        }
        for i in 0..self.axis.len() {
            self.scenario_at(i)?.validate()?;
        }
        if let SweepAxis::DeviceEnergy { rank, .. } = self.axis {
            if rank == 0 || rank > self.base.n_devices {
                return bad(format!("device rank {rank} outside 1..={}", self.base.n_devices));
            }
        }
        Ok(())
    }

    /// Scenario for sweep index `i`, before any channel-dependent budget.
    pub fn scenario_at(&self, i: usize) -> Result<Scenario> {
        Ok(match &self.axis {
            SweepAxis::K(v) => Scenario { k_common_bits: v[i], ..self.base.clone() },
            SweepAxis::N(v) => {
                let e = uniform_budget(&self.base)?;
                self.base.with_devices(v[i], e)
            }
            SweepAxis::DeviceEnergy { .. } => self.base.clone(),
        })
    }
}

fn uniform_budget(s: &Scenario) -> Result<f64> {
    match s.e_max_j.first() {
        Some(&e) if s.e_max_j.iter().all(|&v| v == e) => Ok(e),
        _ => Err(Error::Experiment("a device-count sweep needs one common e_max_j".into())),
    }
}

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of one trial. The map is a bijection of `(sweep, trial)` for
/// indices below `2^32`, so child seeds never collide within a run.
pub fn child_seed(master: u64, sweep: usize, trial: usize) -> u64 {
    let key = ((sweep as u64) << 32) | (trial as u64 & 0xffff_ffff);
    mix(master.wrapping_add(mix(key)))
}

/// Everything kept from one scheme solve.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub sweep: usize,
    pub trial: usize,
    pub scheme: Scheme,
    pub status: SchemeStatus,
    pub objective: f64,
    pub fairness: Option<f64>,
    pub time_ratio: Option<f64>,
    /// Total stage-1 over total stage-2 energy.
    pub energy_ratio: Option<f64>,
    pub device_share: Option<f64>,
}

fn record(sweep: usize, trial: usize, r: &SchemeResult, share_pos: Option<usize>) -> TrialRecord {
    let feasible = r.is_feasible();
    let ratios = metrics::stage_ratios(&r.allocation);
    TrialRecord {
        sweep,
        trial,
        scheme: r.scheme,
        status: r.status,
        objective: r.objective,
        fairness: feasible
            .then(|| metrics::jain_index(&r.common_bits).ok().map(|f| f.index))
            .flatten(),
        time_ratio: feasible.then_some(ratios.time).filter(|v| v.is_finite()),
        energy_ratio: feasible.then_some(ratios.total_energy).filter(|v| v.is_finite()),
        device_share: share_pos.filter(|_| feasible).and_then(|p| metrics::common_share(&r.common_bits, p)),
    }
}

/// Solves every scheme on one channel draw.
pub fn run_trial(config: &ExperimentConfig, sweep: usize, trial: usize) -> Vec<TrialRecord> {
    let seed = child_seed(config.master_seed, sweep, trial);
    let failed = |scheme| TrialRecord {
        sweep,
        trial,
        scheme,
        status: SchemeStatus::NumericalFailure,
        objective: 0.0,
        fairness: None,
        time_ratio: None,
        energy_ratio: None,
        device_share: None,
    };
    let setup = config.scenario_at(sweep).and_then(|mut s| {
        let ch = sample_channel(&s, seed)?;
        let mut share_pos = None;
        if let SweepAxis::DeviceEnergy { rank, values } = &config.axis {
            s.e_max_j[ch.order[rank - 1]] = values[sweep];
            share_pos = Some(rank - 1);
        }
        Ok((s, ch, share_pos))
    });
    let Ok((scenario, channel, share_pos)) = setup else {
        return config.schemes.iter().map(|&k| failed(k)).collect();
    };
    config
        .schemes
        .iter()
        .map(|&k| match baselines::solve_scheme(k, &scenario, &channel, &config.sca) {
            Ok(r) => record(sweep, trial, &r, share_pos),
            Err(_) => failed(k),
        })
        .collect()
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub sweep: f64,
    pub scheme: Scheme,
    pub metric: &'static str,
    pub mean: f64,
    pub stderr: f64,
    pub n_ok: usize,
    pub n_fail: usize,
}

fn mean_stderr(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Aggregates records into rows. Records are sorted by `(sweep, trial)`
/// first, so the result does not depend on execution order.
pub fn aggregate(config: &ExperimentConfig, records: &[TrialRecord]) -> Vec<AggregateRow> {
    let mut sorted: Vec<&TrialRecord> = records.iter().collect();
    sorted.sort_by_key(|r| (r.sweep, r.scheme, r.trial));
    let mut rows = Vec::new();
    for sweep in 0..config.axis.len() {
        for &scheme in &config.schemes {
            let group: Vec<&TrialRecord> =
                sorted.iter().copied().filter(|r| r.sweep == sweep && r.scheme == scheme).collect();
            let ok: Vec<&TrialRecord> =
                group.iter().copied().filter(|r| r.status != SchemeStatus::NumericalFailure).collect();
            let n_fail = group.len() - ok.len();
            let mut push = |metric: &'static str, values: Vec<f64>| {
                let (mean, stderr) = mean_stderr(&values);
                rows.push(AggregateRow {
                    sweep: config.axis.value(sweep),
                    scheme,
                    metric,
                    mean,
                    stderr,
                    n_ok: values.len(),
                    n_fail,
                });
            };
            push("objective", ok.iter().map(|r| r.objective).collect());
            push("fairness", ok.iter().filter_map(|r| r.fairness).collect());
            push("time_ratio", ok.iter().filter_map(|r| r.time_ratio).collect());
            push("energy_ratio", ok.iter().filter_map(|r| r.energy_ratio).collect());
            push(
                "infeasible_fraction",
                ok.iter().map(|r| if r.status == SchemeStatus::Infeasible { 1.0 } else { 0.0 }).collect(),
            );
            if matches!(config.axis, SweepAxis::DeviceEnergy { .. }) {
                push("device_share", ok.iter().filter_map(|r| r.device_share).collect());
            }
        }
    }
    rows
}

/// Runs all trials on a bounded pool and returns the per-trial records in
/// `(sweep, trial)` order.
pub fn run_trials(config: &ExperimentConfig) -> Result<Vec<TrialRecord>> {
    config.validate()?;
    let items: Vec<(usize, usize)> =
        (0..config.axis.len()).flat_map(|s| (0..config.n_trials).map(move |t| (s, t))).collect();
    let run = || -> Vec<TrialRecord> {
        items.par_iter().flat_map_iter(|&(s, t)| run_trial(config, s, t)).collect()
    };
    if config.threads == 1 {
        return Ok(items.iter().flat_map(|&(s, t)| run_trial(config, s, t)).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| Error::Experiment(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(run))
}

pub fn run_monte_carlo(config: &ExperimentConfig) -> Result<Vec<AggregateRow>> {
    let records = run_trials(config)?;
    Ok(aggregate(config, &records))
}

pub fn rows_to_csv(rows: &[AggregateRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.sweep, r.scheme, r.metric, r.mean, r.stderr, r.n_ok, r.n_fail
        );
    }
    out
}

/// Writes `contents` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

const MAX_STENCIL_MOVES: usize = 200;

/// Best point found by [`grid_oracle`].
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub objective: f64,
    pub allocation: Allocation,
}

/// Smallest energy of the last common-stage device that completes `K`
/// bits given the others; `None` if `tau` is zero.
fn min_common_energy(k: f64, tau: f64, w: f64, partial: f64, gamma_last: f64) -> Option<f64> {
    if tau <= 0.0 {
        return None;
    }
    let need = tau * (k / (tau * w) * std::f64::consts::LN_2).exp_m1();
    Some(((need - partial) / gamma_last).max(0.0) * (1.0 + 1e-12))
}

struct Grid<'a> {
    scenario: &'a Scenario,
    gamma: &'a [f64],
    e_max: Vec<f64>,
}

impl Grid<'_> {
    /// Completes `(tau_c, e1c, e1i, e2i)` to an allocation, or `None` if
    /// the common data cannot be delivered inside the budgets.
    fn allocation(&self, tau_c: f64, e1c: f64, ei: &[f64]) -> Option<Allocation> {
        let s = self.scenario;
        let n = self.gamma.len();
        let k = s.k_common_bits;
        let mut e_c = vec![0.0; n];
        if k > 0.0 {
            if n == 1 {
                e_c[0] = min_common_energy(k, tau_c, s.bandwidth_hz, 0.0, self.gamma[0])?;
            } else {
                e_c[0] = e1c;
                e_c[1] = min_common_energy(k, tau_c, s.bandwidth_hz, e1c * self.gamma[0], self.gamma[1])?;
            }
        }
        if e_c.iter().zip(&self.e_max).any(|(c, m)| c > m) {
            return None;
        }
        let e_i: Vec<f64> = ei.iter().zip(&self.e_max).zip(&e_c).map(|((f, m), c)| f * (m - c)).collect();
        Some(Allocation { tau_c, tau_i: s.t_max_s - tau_c, e_c, e_i })
    }

    fn value(&self, a: &Allocation) -> f64 {
        let w = self.scenario.bandwidth_hz;
        let n = self.gamma.len();
        (0..n)
            .map(|i| {
                let interference: f64 = (i + 1..n).map(|j| a.e_i[j] * self.gamma[j]).sum();
                if a.tau_i <= 0.0 {
                    0.0
                } else {
                    a.tau_i * w * log2_1p(a.e_i[i] * self.gamma[i] / (a.tau_i + interference))
                }
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Exhaustive search over `(tau^C, E_1^C, E^I)` for `N <= 2`, followed by
/// three rounds of local refinement with halved cells. Each round walks a
/// 5-point-per-axis stencil until the incumbent stops moving.
///
/// The last device's common energy is not gridded: for each grid point it
/// is set to the least amount that delivers `K`, since any more only takes
/// energy from stage 2. Individual energies are gridded as fractions of
/// what stage 1 leaves, on a linear grid merged with a logarithmic one. Returns `Ok(None)` when no grid point is feasible.
pub fn grid_oracle(scenario: &Scenario, channel: &ChannelRealization, resolution: usize) -> Result<Option<OracleResult>> {
    scenario.validate()?;
    let n = channel.n_devices();
    if n > 2 {
        return Err(Error::Domain(format!("grid oracle supports at most 2 devices, got {n}")));
    }
    if resolution < 32 {
        return Err(Error::Domain(format!("grid resolution must be at least 32, got {resolution}")));
    }
    let grid = Grid { scenario, gamma: &channel.gamma, e_max: scenario.e_max_sorted(channel) };
    let t_max = scenario.t_max_s;
    let res = resolution;
    let frac = |j: usize| j as f64 / (res - 1) as f64;
    let e1c_steps = if n == 2 && scenario.k_common_bits > 0.0 { res } else { 1 };
    // linear points plus log-spaced ones down to 1e-9: the best share of the
    // leftover energy spans many decades across channel draws
    let mut fractions: Vec<f64> = (0..res).map(frac).collect();
    fractions.extend((0..res).map(|j| 10f64.powf(-9.0 * (1.0 - frac(j)))));
    fractions.sort_by(f64::total_cmp);
    fractions.dedup();
    let ei_grid = |d: usize| if d < n { fractions.clone() } else { vec![0.0] };

    // point = (tau_c, e1c, f1, f2) with the f's fractions of remaining energy
    let mut best: Option<(f64, [f64; 4])> = None;
    let consider = |p: [f64; 4], best: &mut Option<(f64, [f64; 4])>| {
        if let Some(a) = grid.allocation(p[0], p[1], &[p[2], p[3]][..n]) {
            let v = grid.value(&a);
            if best.is_none_or(|b| v > b.0) {
                *best = Some((v, p));
            }
        }
    };
    for kt in 0..res {
        let tau_c = kt as f64 * t_max / res as f64;
        for kc in 0..e1c_steps {
            let e1c = if e1c_steps > 1 { frac(kc) * grid.e_max[0] } else { 0.0 };
            if grid.allocation(tau_c, e1c, &vec![0.0; n]).is_none() {
                continue;
            }
            for &a in &ei_grid(0) {
                for &b in &ei_grid(1) {
                    consider([tau_c, e1c, a, b], &mut best);
                }
            }
        }
    }
    let Some((_, mut center)) = best else {
        return Ok(None);
    };
    let mut h = [t_max / res as f64, grid.e_max[0] / (res - 1) as f64, frac(1), frac(1)];
    // fractions also move multiplicatively, by 2^(offset * hl)
    let mut hl = 1.0;
    let hi = [t_max, grid.e_max[0], 1.0, 1.0];
    let active = [true, e1c_steps > 1, true, n == 2];
    for _ in 0..3 {
        for v in h.iter_mut() {
            *v *= 0.5;
        }
        hl *= 0.5;
        let offsets: Vec<[i32; 4]> = (0..625)
            .map(|i| [i % 5, (i / 5) % 5, (i / 25) % 5, i / 125].map(|o| o - 2))
            .filter(|o| (0..4).all(|d| active[d] || o[d] == 0))
            .collect();
        // walk the stencil until the incumbent stops moving at this scale
        for _ in 0..MAX_STENCIL_MOVES {
            let base = center;
            for o in &offsets {
                let p: [f64; 4] = std::array::from_fn(|d| (base[d] + o[d] as f64 * h[d]).clamp(0.0, hi[d]));
                consider(p, &mut best);
                let q: [f64; 4] = std::array::from_fn(|d| {
                    if d < 2 {
                        p[d]
                    } else {
                        (base[d] * (o[d] as f64 * hl).exp2()).min(1.0)
                    }
                });
                consider(q, &mut best);
            }
            center = best.expect("incumbent exists").1;
            if center == base {
                break;
            }
        }
    }
    let (objective, p) = best.expect("incumbent exists");
    let allocation = grid.allocation(p[0], p[1], &[p[2], p[3]][..n]).expect("incumbent is feasible");
    Ok(Some(OracleResult { objective, allocation }))
}

/// Per-iteration objective of one SCA run, with the grid oracle when the
/// instance is small enough.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub phi: Vec<f64>,
    pub status: ScaStatus,
    pub oracle: Option<f64>,
}

pub fn convergence_experiment(
    scenario: &Scenario,
    channel: &ChannelRealization,
    opts: &ScaOptions,
    grid_resolution: usize,
) -> Result<ConvergenceReport> {
    let out = sca::sca_solve(scenario, channel, None, opts)?;
    let feasible = matches!(out.trace.status, ScaStatus::Converged | ScaStatus::IterLimit);
    let phi = if feasible { out.trace.phi() } else { Vec::new() };
    let oracle = if channel.n_devices() <= 2 && feasible {
        grid_oracle(scenario, channel, grid_resolution)?.map(|o| o.objective)
    } else {
        None
    };
    Ok(ConvergenceReport { phi, status: out.trace.status, oracle })
}

/// Whether an allocation returned by the oracle passes the model checks.
pub fn oracle_is_feasible(result: &OracleResult, scenario: &Scenario, channel: &ChannelRealization) -> bool {
    model::check_feasibility(&result.allocation, scenario, channel, 1e-9).feasible
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn child_seeds_are_distinct() {
        let mut seen = std::collections::HashSet::new();
        for s in 0..50 {
            for t in 0..200 {
                assert!(seen.insert(child_seed(7, s, t)));
            }
        }
        assert_ne!(child_seed(1, 0, 0), child_seed(2, 0, 0));
    }

    #[test]
    fn mean_stderr_small_cases() {
        assert_eq!(mean_stderr(&[3.0]), (3.0, 0.0));
        let (m, s) = mean_stderr(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
        assert!(mean_stderr(&[]).0.is_nan());
    }

    #[test]
    fn oracle_single_device_closed_form() {
        let s = Scenario { k_common_bits: 0.0, ..Scenario::reference(1) };
        let ch = sample_channel(&s, 5).unwrap();
        let o = grid_oracle(&s, &ch, 32).unwrap().unwrap();
        let want = s.t_max_s * s.bandwidth_hz * log2_1p(0.2 * ch.gamma[0] / s.t_max_s);
        assert!((o.objective - want).abs() / want < 1e-12, "{} vs {want}", o.objective);
    }

    #[test]
    fn oracle_envelope() {
        let s = Scenario::reference(3);
        let ch = sample_channel(&s, 0).unwrap();
        assert!(grid_oracle(&s, &ch, 64).is_err());
        let s = Scenario::reference(2);
        let ch = sample_channel(&s, 0).unwrap();
        assert!(grid_oracle(&s, &ch, 16).is_err());
    }

    #[test]
    fn csv_has_header_and_lf() {
        let rows = vec![AggregateRow {
            sweep: 1e6,
            scheme: Scheme::Proposed,
            metric: "objective",
            mean: 2.5,
            stderr: 0.0,
            n_ok: 1,
            n_fail: 0,
        }];
        let csv = rows_to_csv(&rows);
        assert_eq!(csv, "sweep,scheme,metric,mean,stderr,n_ok,n_fail\n1000000,proposed,objective,2.5,0,1,0\n");
    }
}
