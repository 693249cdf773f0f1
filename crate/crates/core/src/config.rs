//! Flat `key = value` configuration files.
//!
//! ```text
//! # reference setup
//! n_devices = 4
//! k_common_bits = 6e6
//! e_max_j = 0.2            # one value for every device, or a list
//! schemes = proposed, s-noma
//! ```
//!
//! Numbers are SI (Hz, s, J, bits) except `noise_psd_dbm_hz`. Unknown keys
//! are rejected. [`RunConfig::echo`] writes a file that parses back to the
//! same configuration.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::baselines::Scheme;
use crate::channel::Scenario;
use crate::error::{Error, Result};
use crate::sca::ScaOptions;

pub const KEYS: [&str; 15] = [
    "n_devices",
    "bandwidth_hz",
    "noise_psd_dbm_hz",
    "pathloss_exp",
    "t_max_s",
    "k_common_bits",
    "e_max_j",
    "cell_radius_m",
    "min_dist_m",
    "seed",
    "n_trials",
    "eps",
    "n_max",
    "schemes",
    "grid_resolution",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub seed: u64,
    pub n_trials: usize,
    pub sca: ScaOptions,
    pub schemes: Vec<Scheme>,
    pub grid_resolution: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scenario: Scenario::reference(4),
            seed: 0,
            n_trials: 100,
            sca: ScaOptions::default(),
            schemes: Scheme::ALL.to_vec(),
            grid_resolution: 64,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| Error::config(key, format!("cannot parse '{}'", value.trim())))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value.split(',').map(|v| parse_num(key, v)).collect()
}

impl RunConfig {
    /// Parses config text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(line, format!("line {} is not of the form key = value", lineno + 1))
            })?;
            pairs.push((key.trim().to_string(), value.trim().to_string()));
        }
        let mut cfg = RunConfig::default();
        cfg.apply(&pairs)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Applies `key = value` pairs in order. A scalar `e_max_j` is
    /// broadcast to every device after all pairs are read.
    pub fn apply(&mut self, pairs: &[(String, String)]) -> Result<()> {
        let mut e_max: Option<Vec<f64>> = None;
        let s = &mut self.scenario;
        for (key, value) in pairs {
            let key = key.as_str();
            match key {
                "n_devices" => s.n_devices = parse_num(key, value)?,
                "bandwidth_hz" => s.bandwidth_hz = parse_num(key, value)?,
                "noise_psd_dbm_hz" => s.noise_psd_dbm_hz = parse_num(key, value)?,
                "pathloss_exp" => s.pathloss_exp = parse_num(key, value)?,
                "t_max_s" => s.t_max_s = parse_num(key, value)?,
                "k_common_bits" => s.k_common_bits = parse_num(key, value)?,
                "e_max_j" => e_max = Some(parse_list(key, value)?),
                "cell_radius_m" => s.cell_radius_m = parse_num(key, value)?,
                "min_dist_m" => s.min_dist_m = parse_num(key, value)?,
                "seed" => self.seed = parse_num(key, value)?,
                "n_trials" => self.n_trials = parse_num(key, value)?,
                "eps" => self.sca.eps = parse_num(key, value)?,
                "n_max" => self.sca.n_max = parse_num(key, value)?,
                "schemes" => self.schemes = parse_schemes(value)?,
                "grid_resolution" => self.grid_resolution = parse_num(key, value)?,
                _ => return Err(Error::config(key, "unknown key")),
            }
        }
        let n = s.n_devices;
        match e_max {
            Some(v) if v.len() == 1 => s.e_max_j = vec![v[0]; n],
            Some(v) => s.e_max_j = v,
            None if s.e_max_j.len() != n => {
                let e = s.e_max_j.first().copied().unwrap_or(0.2);
                s.e_max_j = vec![e; n];
            }
            None => {}
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate().map_err(|e| match e {
            Error::InvalidScenario(m) if m.starts_with("e_max_j") || m.starts_with("every e_max_j") => {
                Error::config("e_max_j", m)
            }
            other => other,
        })?;
        if self.n_trials == 0 {
            return Err(Error::config("n_trials", "must be at least 1"));
        }
        if !(self.sca.eps > 0.0 && self.sca.eps.is_finite()) {
            return Err(Error::config("eps", "must be positive"));
        }
        if self.sca.n_max == 0 {
            return Err(Error::config("n_max", "must be at least 1"));
        }
        if self.schemes.is_empty() {
            return Err(Error::config("schemes", "list is empty"));
        }
        if self.grid_resolution < 32 {
            return Err(Error::config("grid_resolution", "must be at least 32"));
        }
        Ok(())
    }

    /// Every key with its resolved value.
    pub fn echo(&self) -> String {
        let s = &self.scenario;
        let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        let schemes = self.schemes.iter().map(|k| k.name()).collect::<Vec<_>>().join(", ");
        let mut out = String::new();
        let _ = writeln!(out, "n_devices = {}", s.n_devices);
        let _ = writeln!(out, "bandwidth_hz = {}", s.bandwidth_hz);
        let _ = writeln!(out, "noise_psd_dbm_hz = {}", s.noise_psd_dbm_hz);
        let _ = writeln!(out, "pathloss_exp = {}", s.pathloss_exp);
        let _ = writeln!(out, "t_max_s = {}", s.t_max_s);
        let _ = writeln!(out, "k_common_bits = {}", s.k_common_bits);
        let _ = writeln!(out, "e_max_j = {}", list(&s.e_max_j));
        let _ = writeln!(out, "cell_radius_m = {}", s.cell_radius_m);
        let _ = writeln!(out, "min_dist_m = {}", s.min_dist_m);
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "n_trials = {}", self.n_trials);
        let _ = writeln!(out, "eps = {}", self.sca.eps);
        let _ = writeln!(out, "n_max = {}", self.sca.n_max);
        let _ = writeln!(out, "schemes = {schemes}");
        let _ = writeln!(out, "grid_resolution = {}", self.grid_resolution);
        out
    }
}

pub fn parse_schemes(value: &str) -> Result<Vec<Scheme>> {
    let mut out: Vec<Scheme> = Vec::new();
    for item in value.split(',').filter(|v| !v.trim().is_empty()) {
        let s: Scheme = item.parse().map_err(|_| Error::config("schemes", format!("unknown scheme '{}'", item.trim())))?;
        if !out.contains(&s) {
            out.push(s);
        }
    }
    Ok(out)
}

/// Splits `key=value` override strings.
pub fn parse_overrides(items: &[String]) -> Result<Vec<(String, String)>> {
    items
        .iter()
        .map(|item| {
            item.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Error::config(item.as_str(), "override must look like key=value"))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_setup() {
        let c = RunConfig::parse("").unwrap();
        assert_eq!(c.scenario, Scenario::reference(4));
        assert_eq!(c.n_trials, 100);
    }

    #[test]
    fn comments_blank_lines_and_broadcast() {
        let c = RunConfig::parse("# header\n\nn_devices = 3  # three\ne_max_j = 0.1\nk_common_bits=1e6\n").unwrap();
        assert_eq!(c.scenario.e_max_j, vec![0.1; 3]);
        assert_eq!(c.scenario.k_common_bits, 1e6);
        let c = RunConfig::parse("n_devices = 2\ne_max_j = 0.1, 0.3\n").unwrap();
        assert_eq!(c.scenario.e_max_j, vec![0.1, 0.3]);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::parse("bandwith_hz = 1e6\n").unwrap_err();
        assert!(err.to_string().contains("bandwith_hz"), "{err}");
        let err = RunConfig::parse("t_max_s = soon\n").unwrap_err();
        assert!(err.to_string().contains("t_max_s"), "{err}");
        let err = RunConfig::parse("n_devices = 2\ne_max_j = 0.1, 0.2, 0.3\n").unwrap_err();
        assert!(err.to_string().contains("e_max_j"), "{err}");
        assert!(RunConfig::parse("just words\n").is_err());
    }

    #[test]
    fn echo_roundtrips() {
        let c = RunConfig::parse(
            "n_devices = 3\ne_max_j = 0.1, 0.2, 0.30000000000000004\nseed = 18446744073709551615\nschemes = s-oma, proposed\neps = 1e-5\n",
        )
        .unwrap();
        let back = RunConfig::parse(&c.echo()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.echo(), c.echo());
    }

    #[test]
    fn overrides_apply_in_order() {
        let mut c = RunConfig::default();
        let o = parse_overrides(&["k_common_bits=2e6".into(), "n_devices = 2".into()]).unwrap();
        c.apply(&o).unwrap();
        assert_eq!(c.scenario.k_common_bits, 2e6);
        assert_eq!(c.scenario.e_max_j.len(), 2);
        assert!(parse_overrides(&["oops".into()]).is_err());
    }
}
