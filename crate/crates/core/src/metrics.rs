//! Evaluation quantities: Jain fairness, per-stage bits and stage ratios.

use crate::channel::ChannelRealization;
use crate::error::{Error, Result};
use crate::model::{self, Allocation};

/// Jain's index together with a flag for the all-zero convention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fairness {
    pub index: f64,
    /// `true` when every entry was zero and the index was set to 1.
    pub vacuous: bool,
}

/// `(sum x)^2 / (N sum x^2)`. An all-zero input is treated as perfectly
/// fair and flagged.
pub fn jain_index(x: &[f64]) -> Result<Fairness> {
    if x.is_empty() {
        return Err(Error::Domain("jain index of an empty vector".into()));
    }
    if let Some(v) = x.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::Domain(format!("jain index needs finite non-negative entries, got {v}")));
    }
    // scale by the largest entry so squares cannot overflow or underflow
    let peak = x.iter().copied().fold(0.0, f64::max);
    if peak == 0.0 {
        return Ok(Fairness { index: 1.0, vacuous: true });
    }
    let sum: f64 = x.iter().map(|v| v / peak).sum();
    let sq: f64 = x.iter().map(|v| (v / peak).powi(2)).sum();
    let index = (sum * sum / (x.len() as f64 * sq)).min(1.0);
    Ok(Fairness { index, vacuous: false })
}

/// Per-device bits delivered in each stage, decode order.
#[derive(Debug, Clone, PartialEq)]
pub struct StageBits {
    pub common: Vec<f64>,
    pub individual: Vec<f64>,
}

pub fn stage_bits(allocation: &Allocation, channel: &ChannelRealization, w: f64) -> Result<StageBits> {
    Ok(StageBits {
        common: model::common_rates(allocation.tau_c, &allocation.e_c, &channel.gamma, w)?,
        individual: model::individual_rates(allocation.tau_i, &allocation.e_i, &channel.gamma, w)?,
    })
}

/// Stage-1 over stage-2 resource ratios. A zero denominator gives
/// `INFINITY` (or `NaN` for `0/0`); check with [`f64::is_finite`].
#[derive(Debug, Clone, PartialEq)]
pub struct StageRatios {
    pub energy: Vec<f64>,
    /// Total stage-1 energy over total stage-2 energy.
    pub total_energy: f64,
    pub time: f64,
}

impl StageRatios {
    /// Mean of the finite energy ratios, `None` if there are none.
    pub fn mean_energy(&self) -> Option<f64> {
        let finite: Vec<f64> = self.energy.iter().copied().filter(|v| v.is_finite()).collect();
        (!finite.is_empty()).then(|| finite.iter().sum::<f64>() / finite.len() as f64)
    }
}

fn ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        if a == 0.0 {
            f64::NAN
        } else {
            f64::INFINITY
        }
    } else {
        a / b
    }
}

pub fn stage_ratios(allocation: &Allocation) -> StageRatios {
    StageRatios {
        energy: allocation.e_c.iter().zip(&allocation.e_i).map(|(c, i)| ratio(*c, *i)).collect(),
        total_energy: ratio(allocation.e_c.iter().sum(), allocation.e_i.iter().sum()),
        time: ratio(allocation.tau_c, allocation.tau_i),
    }
}

/// Share of the stage-1 bits contributed by decode position `n`; `None`
/// when no common data was sent.
pub fn common_share(common_bits: &[f64], n: usize) -> Option<f64> {
    let total: f64 = common_bits.iter().sum();
    (total > 0.0).then(|| common_bits.get(n).copied().unwrap_or(0.0) / total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jain_examples() {
        assert_eq!(jain_index(&[1.0, 1.0, 1.0, 1.0]).unwrap().index, 1.0);
        assert!((jain_index(&[1.0, 0.0, 0.0, 0.0]).unwrap().index - 0.25).abs() < 1e-15);
        assert!((jain_index(&[1.0, 2.0, 3.0]).unwrap().index - 6.0 / 7.0).abs() < 1e-15);
        let z = jain_index(&[0.0, 0.0]).unwrap();
        assert!(z.vacuous && z.index == 1.0);
        assert!(jain_index(&[1.0, -1.0]).is_err());
        assert!(jain_index(&[]).is_err());
        assert!(jain_index(&[f64::NAN]).is_err());
    }

    #[test]
    fn jain_extreme_magnitudes() {
        assert!((jain_index(&[1e200, 1e200]).unwrap().index - 1.0).abs() < 1e-15);
        assert!((jain_index(&[1e-200, 0.0]).unwrap().index - 0.5).abs() < 1e-15);
    }

    #[test]
    fn ratio_examples() {
        let a = Allocation { tau_c: 0.5, tau_i: 0.5, e_c: vec![0.0, 0.1], e_i: vec![0.2, 0.0] };
        let r = stage_ratios(&a);
        assert_eq!(r.time, 1.0);
        assert_eq!(r.energy[0], 0.0);
        assert!(r.energy[1].is_infinite());
        assert_eq!(r.mean_energy(), Some(0.0));
        assert!((r.total_energy - 0.5).abs() < 1e-15);
        let z = Allocation::zeros(2);
        let r = stage_ratios(&z);
        assert!(r.time.is_nan());
        assert_eq!(r.mean_energy(), None);
    }

    #[test]
    fn zero_common_energy_gives_zero_bits() {
        let ch = ChannelRealization::from_gamma(vec![4.0, 2.0]).unwrap();
        let a = Allocation { tau_c: 0.5, tau_i: 0.5, e_c: vec![0.0, 0.5], e_i: vec![0.5, 0.5] };
        let b = stage_bits(&a, &ch, 1.0).unwrap();
        assert_eq!(b.common[0], 0.0);
        assert!((b.common[1] - 0.5 * 3.0f64.log2()).abs() < 1e-15);
        assert_eq!(common_share(&b.common, 1), Some(1.0));
        assert_eq!(common_share(&[0.0, 0.0], 0), None);
    }
}
