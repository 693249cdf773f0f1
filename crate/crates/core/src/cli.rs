//! Command-line interface: `solve`, `sweep` and `convergence`.
//!
//! Exit codes: 0 on success, 2 when the instance is infeasible, 1 on any
//! error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::baselines::{self, Scheme, SchemeResult, SchemeStatus};
use crate::channel::{sample_channel, ChannelRealization};
use crate::config::{self, RunConfig};
use crate::error::{Error, Result};
use crate::harness::{self, ExperimentConfig, SweepAxis};
use crate::metrics;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "noma-offload", version, about = "Two-stage NOMA offloading: time and power allocation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one channel draw and write the allocation.
    Solve(Common),
    /// Monte-Carlo sweep over K, N or the third device's energy budget.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        axis: Axis,
        /// `start:stop:step` (inclusive) or a comma-separated list.
        #[arg(long)]
        values: String,
    },
    /// Per-iteration objective of one run, with the grid oracle for N <= 2.
    Convergence(Common),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    K,
    N,
    E3,
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, env = "NOMA_OFFLOAD_THREADS")]
    pub threads: Option<usize>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Comma-separated scheme names.
    #[arg(long)]
    pub schemes: Option<String>,
    /// `key=value` override applied after the config file.
    #[arg(long = "set")]
    pub overrides: Vec<String>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let mut pairs = config::parse_overrides(&self.overrides)?;
        if let Some(seed) = self.seed {
            pairs.push(("seed".into(), seed.to_string()));
        }
        if let Some(s) = &self.schemes {
            pairs.push(("schemes".into(), s.clone()));
        }
        cfg.apply(&pairs)?;
        Ok(cfg)
    }

    fn threads(&self) -> usize {
        self.threads
            .filter(|&t| t > 0)
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }
}

/// Parses `start:stop:step` or `a,b,c`.
pub fn parse_values(spec: &str) -> Result<Vec<f64>> {
    let bad = |m: &str| Error::config("values", format!("{m}: '{spec}'"));
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() == 3 {
        let nums: Vec<f64> = parts
            .iter()
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad("not a number")))
            .collect::<Result<_>>()?;
        let (a, b, step) = (nums[0], nums[1], nums[2]);
        if !(step > 0.0) || !(b >= a) || !a.is_finite() || !b.is_finite() {
            return Err(bad("need start <= stop and a positive step"));
        }
        let count = ((b - a) / step * (1.0 + 1e-12) + 1e-9).floor() as usize + 1;
        if count > 1_000_000 {
            return Err(bad("too many values"));
        }
        return Ok((0..count).map(|i| a + i as f64 * step).collect());
    }
    if parts.len() != 1 {
        return Err(bad("expected start:stop:step or a comma list"));
    }
    let v: Vec<f64> = spec
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad("not a number")))
        .collect::<Result<_>>()?;
    if v.is_empty() {
        return Err(bad("no values"));
    }
    Ok(v)
}

struct Manifest {
    command: &'static str,
    config: String,
    extra: Vec<(String, String)>,
    outputs: Vec<String>,
    started: Instant,
}

impl Manifest {
    fn new(command: &'static str, cfg: &RunConfig) -> Self {
        Manifest { command, config: cfg.echo(), extra: Vec::new(), outputs: Vec::new(), started: Instant::now() }
    }

    fn write(&self, dir: &Path, seed: u64) -> Result<()> {
        let mut s = String::new();
        let _ = writeln!(s, "# run manifest");
        let _ = writeln!(s, "# version = {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "# command = {}", self.command);
        let _ = writeln!(s, "# master_seed = {seed}");
        for (k, v) in &self.extra {
            let _ = writeln!(s, "# {k} = {v}");
        }
        let _ = writeln!(s, "# outputs = {}", self.outputs.join(", "));
        let _ = writeln!(s, "# wall_time_s = {:.3}", self.started.elapsed().as_secs_f64());
        s.push_str(&self.config);
        harness::write_atomic(&dir.join("manifest.txt"), &s)
    }
}

fn allocation_csv(results: &[SchemeResult], channel: &ChannelRealization) -> String {
    let mut s = String::from("scheme,status,position,device,gamma,tau_c_s,tau_i_s,e_c_j,e_i_j,common_bits,individual_bits\n");
    for r in results {
        let status = match r.status {
            SchemeStatus::Feasible => "feasible",
            SchemeStatus::Infeasible => "infeasible",
            SchemeStatus::NumericalFailure => "numerical_failure",
        };
        let a = &r.allocation;
        for n in 0..channel.n_devices() {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.scheme,
                status,
                n,
                channel.order[n],
                channel.gamma[n],
                a.tau_c,
                a.tau_i,
                a.e_c[n],
                a.e_i[n],
                r.common_bits[n],
                r.individual_bits[n]
            );
        }
    }
    s
}

fn cmd_solve(common: &Common) -> Result<i32> {
    let cfg = common.resolve()?;
    let mut manifest = Manifest::new("solve", &cfg);
    std::fs::create_dir_all(&common.out)?;
    let channel = sample_channel(&cfg.scenario, cfg.seed)?;
    let mut schemes = vec![Scheme::Proposed];
    if common.schemes.is_some() {
        schemes = cfg.schemes.clone();
    }
    let mut results = Vec::new();
    for &k in &schemes {
        results.push(baselines::solve_scheme(k, &cfg.scenario, &channel, &cfg.sca)?);
    }
    for r in &results {
        println!("{}: {:?}, phi = {} bits", r.scheme, r.status, r.objective);
        if r.is_feasible() {
            let a = &r.allocation;
            let fair = metrics::jain_index(&r.common_bits)?;
            let ratios = metrics::stage_ratios(a);
            println!("  tau_c = {} s, tau_i = {} s, time ratio = {}", a.tau_c, a.tau_i, ratios.time);
            println!("  common bits     = {:?}", r.common_bits);
            println!("  individual bits = {:?}", r.individual_bits);
            println!("  energy ratios   = {:?}", ratios.energy);
            println!("  jain index      = {}{}", fair.index, if fair.vacuous { " (no common data)" } else { "" });
        }
    }
    harness::write_atomic(&common.out.join("allocation.csv"), &allocation_csv(&results, &channel))?;
    manifest.outputs.push("allocation.csv".into());
    manifest.write(&common.out, cfg.seed)?;
    Ok(if results[0].is_feasible() {
        EXIT_OK
    } else if results[0].status == SchemeStatus::Infeasible {
        EXIT_INFEASIBLE
    } else {
        EXIT_ERROR
    })
}

fn cmd_sweep(common: &Common, axis: Axis, values: &str) -> Result<i32> {
    let cfg = common.resolve()?;
    let vals = parse_values(values)?;
    let sweep = match axis {
        Axis::K => SweepAxis::K(vals.clone()),
        Axis::N => SweepAxis::N(
            vals.iter()
                .map(|&v| {
                    (v >= 1.0 && v.fract() == 0.0)
                        .then_some(v as usize)
                        .ok_or_else(|| Error::config("values", format!("device count must be a positive integer, got {v}")))
                })
                .collect::<Result<_>>()?,
        ),
        Axis::E3 => SweepAxis::DeviceEnergy { rank: 3, values: vals.clone() },
    };
    let experiment = ExperimentConfig {
        base: cfg.scenario.clone(),
        axis: sweep,
        schemes: cfg.schemes.clone(),
        n_trials: cfg.n_trials,
        master_seed: cfg.seed,
        sca: cfg.sca,
        threads: common.threads(),
    };
    let mut manifest = Manifest::new("sweep", &cfg);
    let name = match axis {
        Axis::K => "sweep_k.csv",
        Axis::N => "sweep_n.csv",
        Axis::E3 => "sweep_e3.csv",
    };
    manifest.extra.push(("axis".into(), format!("{axis:?}").to_lowercase()));
    manifest.extra.push(("values".into(), values.to_string()));
    std::fs::create_dir_all(&common.out)?;
    let rows = harness::run_monte_carlo(&experiment)?;
    harness::write_atomic(&common.out.join(name), &harness::rows_to_csv(&rows))?;
    println!("wrote {} rows to {}", rows.len(), common.out.join(name).display());
    manifest.outputs.push(name.into());
    manifest.write(&common.out, cfg.seed)?;
    Ok(EXIT_OK)
}

fn cmd_convergence(common: &Common) -> Result<i32> {
    let cfg = common.resolve()?;
    let mut manifest = Manifest::new("convergence", &cfg);
    std::fs::create_dir_all(&common.out)?;
    let channel = sample_channel(&cfg.scenario, cfg.seed)?;
    let report = harness::convergence_experiment(&cfg.scenario, &channel, &cfg.sca, cfg.grid_resolution)?;
    let mut csv = String::from("iteration,phi_bits\n");
    for (m, phi) in report.phi.iter().enumerate() {
        let _ = writeln!(csv, "{},{}", m + 1, phi);
    }
    if let Some(o) = report.oracle {
        let _ = writeln!(csv, "oracle,{o}");
    } else if channel.n_devices() > 2 {
        let note = "grid oracle omitted: it supports at most 2 devices";
        eprintln!("note: {note}");
        manifest.extra.push(("note".into(), note.into()));
    }
    harness::write_atomic(&common.out.join("convergence.csv"), &csv)?;
    println!("status {:?}, {} iterations", report.status, report.phi.len());
    manifest.outputs.push("convergence.csv".into());
    manifest.write(&common.out, cfg.seed)?;
    Ok(if report.phi.is_empty() { EXIT_INFEASIBLE } else { EXIT_OK })
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Solve(c) => cmd_solve(c),
        Command::Sweep { common, axis, values } => cmd_sweep(common, *axis, values),
        Command::Convergence(c) => cmd_convergence(c),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_ranges() {
        assert_eq!(parse_values("1e6:3e6:1e6").unwrap(), vec![1e6, 2e6, 3e6]);
        assert_eq!(parse_values("1e6:12e6:1e6").unwrap().len(), 12);
        assert_eq!(parse_values("0.1:0.3:0.05").unwrap().len(), 5);
        assert_eq!(parse_values("2,3,4").unwrap(), vec![2.0, 3.0, 4.0]);
        assert!(parse_values("3:1:1").is_err());
        assert!(parse_values("1:2").is_err());
        assert!(parse_values("a,b").is_err());
    }
}
