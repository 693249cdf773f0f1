//! Network geometry, Rayleigh fading and decode-ordered channel gains.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};

/// Static experiment parameters. All quantities are SI except the noise
/// density, which stays in dBm/Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub n_devices: usize,
    pub bandwidth_hz: f64,
    pub noise_psd_dbm_hz: f64,
    pub pathloss_exp: f64,
    pub t_max_s: f64,
    pub k_common_bits: f64,
    /// Energy budget per device, indexed by original device id.
    pub e_max_j: Vec<f64>,
    pub cell_radius_m: f64,
    pub min_dist_m: f64,
}

impl Scenario {
    /// The reference simulation setup: 1 MHz, -174 dBm/Hz, pathloss exponent
    /// 3, 1 s latency budget, 200 m cell, 0.2 J per device and K = 6 Mbits.
    pub fn reference(n_devices: usize) -> Self {
        Scenario {
            n_devices,
            bandwidth_hz: 1e6,
            noise_psd_dbm_hz: -174.0,
            pathloss_exp: 3.0,
            t_max_s: 1.0,
            k_common_bits: 6e6,
            e_max_j: vec![0.2; n_devices],
            cell_radius_m: 200.0,
            min_dist_m: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidScenario(msg));
        if self.n_devices == 0 {
            return bad("n_devices must be at least 1".into());
        }
        if !(self.bandwidth_hz > 0.0 && self.bandwidth_hz.is_finite()) {
            return bad(format!("bandwidth_hz must be positive, got {}", self.bandwidth_hz));
        }
        if !self.noise_psd_dbm_hz.is_finite() {
            return bad("noise_psd_dbm_hz must be finite".into());
        }
        if !(self.pathloss_exp >= 0.0 && self.pathloss_exp.is_finite()) {
            return bad(format!("pathloss_exp must be non-negative, got {}", self.pathloss_exp));
        }
        if !(self.t_max_s > 0.0 && self.t_max_s.is_finite()) {
            return bad(format!("t_max_s must be positive, got {}", self.t_max_s));
        }
        if !(self.k_common_bits >= 0.0 && self.k_common_bits.is_finite()) {
            return bad(format!("k_common_bits must be non-negative, got {}", self.k_common_bits));
        }
        if self.e_max_j.len() != self.n_devices {
            return bad(format!(
                "e_max_j has {} entries for {} devices",
                self.e_max_j.len(),
                self.n_devices
            ));
        }
        if let Some(e) = self.e_max_j.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
            return bad(format!("every e_max_j must be positive, got {e}"));
        }
        if !(self.min_dist_m > 0.0 && self.min_dist_m < self.cell_radius_m) {
            return bad(format!(
                "need 0 < min_dist_m < cell_radius_m, got {} and {}",
                self.min_dist_m, self.cell_radius_m
            ));
        }
        Ok(())
    }

    /// Energy budgets permuted into decode order.
    pub fn e_max_sorted(&self, channel: &ChannelRealization) -> Vec<f64> {
        channel.order.iter().map(|&id| self.e_max_j[id]).collect()
    }

    /// The same scenario with a different device count; budgets are
    /// replaced by `e_max` for every device.
    pub fn with_devices(&self, n_devices: usize, e_max: f64) -> Self {
        Scenario { n_devices, e_max_j: vec![e_max; n_devices], ..self.clone() }
    }
}

/// One fading draw. `gamma` and `order` are in decode order (strongest
/// first); `gains` stays indexed by original device id.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub gains: Vec<f64>,
    pub gamma: Vec<f64>,
    /// `order[k]` is the original device id decoded at position `k`.
    pub order: Vec<usize>,
    pub sigma2_w: f64,
}

impl ChannelRealization {
    /// Builds a realization from per-device gains, sorting them into decode
    /// order. Ties keep the lower original id first.
    pub fn from_gains(gains: Vec<f64>, sigma2_w: f64) -> Result<Self> {
        if gains.is_empty() {
            return Err(Error::InvalidScenario("no devices".into()));
        }
        if !(sigma2_w > 0.0 && sigma2_w.is_finite()) {
            return Err(Error::Domain(format!("noise power must be positive, got {sigma2_w}")));
        }
        let mut order: Vec<usize> = (0..gains.len()).collect();
        // stable sort: equal gains keep ascending id
        order.sort_by(|&a, &b| gains[b].total_cmp(&gains[a]));
        let gamma: Vec<f64> = order.iter().map(|&id| gains[id] / sigma2_w).collect();
        if let Some(g) = gamma.iter().find(|g| !(**g > 0.0 && g.is_finite())) {
            return Err(Error::Domain(format!("normalized gain must be positive and finite, got {g}")));
        }
        Ok(ChannelRealization { gains, gamma, order, sigma2_w })
    }

    /// A realization with given normalized gains, already in decode order.
    /// Mostly for tests and hand-built instances.
    pub fn from_gamma(gamma: Vec<f64>) -> Result<Self> {
        Self::from_gains(gamma, 1.0)
    }

    pub fn n_devices(&self) -> usize {
        self.gamma.len()
    }

    /// Sorted position of the original device `id`.
    pub fn rank_of(&self, id: usize) -> Option<usize> {
        self.order.iter().position(|&d| d == id)
    }
}

/// Noise power `N0 * W` in watts.
pub fn noise_power(scenario: &Scenario) -> f64 {
    10f64.powf((scenario.noise_psd_dbm_hz - 30.0) / 10.0) * scenario.bandwidth_hz
}

/// Pathloss-scaled gain `|g|^2 d^-alpha`.
pub fn channel_gain(fading_power: f64, distance_m: f64, pathloss_exp: f64) -> f64 {
    fading_power * distance_m.powf(-pathloss_exp)
}

/// Draws device distances uniformly by area on the annulus
/// `[min_dist_m, cell_radius_m]` and unit-mean exponential fading powers,
/// then sorts into decode order. Identical seeds give identical draws.
pub fn sample_channel(scenario: &Scenario, seed: u64) -> Result<ChannelRealization> {
    scenario.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r2_lo = scenario.min_dist_m * scenario.min_dist_m;
    let r2_hi = scenario.cell_radius_m * scenario.cell_radius_m;
    let gains = (0..scenario.n_devices)
        .map(|_| {
            let d = rng.random_range(r2_lo..=r2_hi).sqrt();
            let fading: f64 = Exp1.sample(&mut rng);
            channel_gain(fading, d, scenario.pathloss_exp)
        })
        .collect();
    ChannelRealization::from_gains(gains, noise_power(scenario))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn noise_power_conversions() {
        let mut s = Scenario::reference(1);
        s.bandwidth_hz = 1.0;
        assert!(rel(noise_power(&s), 10f64.powf(-20.4)) < 1e-12);
        assert!(rel(noise_power(&s), 3.981e-21) < 1e-3);
        s.bandwidth_hz = 1e6;
        assert!(rel(noise_power(&s), 3.981e-15) < 1e-3);
        s.bandwidth_hz = 1.0;
        s.noise_psd_dbm_hz = 0.0;
        assert!(rel(noise_power(&s), 1e-3) < 1e-12);
    }

    #[test]
    fn unit_case() {
        let gain = channel_gain(1.0, 1.0, 3.0);
        let ch = ChannelRealization::from_gains(vec![gain], 1.0).unwrap();
        assert_eq!(ch.gamma, vec![1.0]);
        assert_eq!(ch.order, vec![0]);
    }

    #[test]
    fn gamma_sorted_and_order_is_permutation() {
        let s = Scenario::reference(3);
        for seed in 0..50 {
            let ch = sample_channel(&s, seed).unwrap();
            assert!(ch.gamma.windows(2).all(|w| w[0] >= w[1]));
            let mut ids = ch.order.clone();
            ids.sort();
            assert_eq!(ids, vec![0, 1, 2]);
            for (k, &id) in ch.order.iter().enumerate() {
                assert_eq!(ch.gamma[k], ch.gains[id] / ch.sigma2_w);
            }
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let s = Scenario::reference(4);
        assert_eq!(sample_channel(&s, 42).unwrap(), sample_channel(&s, 42).unwrap());
        assert_ne!(sample_channel(&s, 42).unwrap(), sample_channel(&s, 43).unwrap());
    }

    #[test]
    fn ties_keep_original_order() {
        let ch = ChannelRealization::from_gains(vec![1.0, 2.0, 1.0, 2.0], 1.0).unwrap();
        assert_eq!(ch.order, vec![1, 3, 0, 2]);
    }

    #[test]
    fn rejects_zero_devices() {
        let s = Scenario::reference(0);
        assert!(matches!(sample_channel(&s, 1), Err(Error::InvalidScenario(_))));
    }

    #[test]
    fn invalid_geometry_rejected() {
        let mut s = Scenario::reference(2);
        s.min_dist_m = 300.0;
        assert!(s.validate().is_err());
        let mut s = Scenario::reference(2);
        s.e_max_j[1] = 0.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn fading_is_unit_mean() {
        // distances fixed at 1 m so gains are the fading powers themselves
        let mut s = Scenario::reference(1);
        s.pathloss_exp = 0.0;
        let n = 10_000;
        let mean: f64 = (0..n)
            .map(|seed| sample_channel(&s, seed).unwrap().gains[0])
            .sum::<f64>()
            / n as f64;
        assert!((mean - 1.0).abs() < 0.05, "mean {mean}");
    }

    #[test]
    fn pathloss_monotone_in_distance() {
        let mut prev = f64::INFINITY;
        for d in [1.0, 2.0, 10.0, 50.0, 199.0, 200.0] {
            let g = channel_gain(0.7, d, 3.0);
            assert!(g <= prev);
            prev = g;
        }
    }
}
