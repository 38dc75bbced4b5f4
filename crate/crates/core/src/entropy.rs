//! Min-entropy of the quantized Gaussian source and extractor sizing.

use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::bits::KeepMask;
use crate::error::{Error, Result};

/// Quantizer geometry.
///
/// Code `c` is centered on `offset_mv + c * step`; codes below 0 or above
/// `2^bits - 1` saturate at the edge codes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdcGeometry {
    pub bits: u32,
    /// Input range mapped onto the `2^bits` codes, in mV.
    pub full_scale_mv: f64,
    /// Voltage of code 0, in mV.
    pub offset_mv: f64,
}

/// Reconstructed input range: with `sigma_q = 85.2 mV` it puts the largest
/// bin probability at 0.011.
pub const DEFAULT_FULL_SCALE_MV: f64 = 601.0;

impl Default for AdcGeometry {
    fn default() -> Self {
        Self::centered(8, DEFAULT_FULL_SCALE_MV)
    }
}

impl AdcGeometry {
    /// Geometry whose mid-scale code `2^(bits-1)` is centered on 0 mV.
    pub fn centered(bits: u32, full_scale_mv: f64) -> Self {
        let mut adc = Self {
            bits,
            full_scale_mv,
            offset_mv: 0.0,
        };
        adc.offset_mv = -(adc.mid_code() as f64) * adc.step_mv();
        adc
    }

    pub fn validate(&self) -> Result<()> {
        if self.bits == 0 || self.bits > 16 {
            return Err(Error::Config(format!("adc bits {} outside 1..=16", self.bits)));
        }
        if !(self.full_scale_mv > 0.0) || !self.full_scale_mv.is_finite() {
            return Err(Error::Config("adc full scale must be positive".into()));
        }
        if !self.offset_mv.is_finite() {
            return Err(Error::Config("adc offset must be finite".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn codes(&self) -> usize {
        1usize << self.bits
    }

    #[inline]
    pub fn max_code(&self) -> u32 {
        (1u32 << self.bits) - 1
    }

    #[inline]
    pub fn mid_code(&self) -> u32 {
        1u32 << (self.bits - 1)
    }

    #[inline]
    pub fn step_mv(&self) -> f64 {
        self.full_scale_mv / self.codes() as f64
    }

    #[inline]
    pub fn code_voltage(&self, code: u32) -> f64 {
        self.offset_mv + code as f64 * self.step_mv()
    }

    /// Voltage at the center of the mid-scale code.
    #[inline]
    pub fn mid_scale_mv(&self) -> f64 {
        self.code_voltage(self.mid_code())
    }

    /// Lower boundary of code `c` (meaningful for `1 <= c <= max_code`).
    #[inline]
    pub fn lower_edge_mv(&self, code: u32) -> f64 {
        self.offset_mv + (code as f64 - 0.5) * self.step_mv()
    }

    #[inline]
    pub fn quantize(&self, v_mv: f64) -> u32 {
        let x = ((v_mv - self.offset_mv) / self.step_mv()).round();
        if x <= 0.0 {
            0
        } else if x >= self.max_code() as f64 {
            self.max_code()
        } else {
            x as u32
        }
    }
}

/// Source model for the entropy evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EntropyModel {
    /// Quantum to classical noise power ratio.
    pub gamma: f64,
    /// Measured `<V(t)^2>` in mV^2.
    pub mean_square_voltage: f64,
    pub adc: AdcGeometry,
}

impl Default for EntropyModel {
    fn default() -> Self {
        Self {
            gamma: 6.87,
            mean_square_voltage: 8311.0,
            adc: AdcGeometry::default(),
        }
    }
}

impl EntropyModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) {
            return Err(Error::Config(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(self.mean_square_voltage > 0.0) {
            return Err(Error::Config(format!(
                "mean square voltage must be positive, got {}",
                self.mean_square_voltage
            )));
        }
        self.adc.validate()
    }
}

/// Standard deviation of the quantum part of the signal, in mV.
pub fn sigma_q(model: &EntropyModel) -> f64 {
    (model.gamma / (model.gamma + 1.0) * model.mean_square_voltage).sqrt()
}

/// Outcome of a min-entropy evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MinEntropy {
    /// `-log2(p_max)`, bits per sample.
    pub bits: f64,
    pub p_max: f64,
    pub argmax_code: u32,
    /// One code holds all but at most `2^-64` of the mass.
    pub degenerate: bool,
}

/// Upper tail `P[Z > z]` of the standard normal.
#[inline]
fn upper_tail(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// Probability mass of each ADC code for a Gaussian signal `N(mean, sigma^2)`
/// with saturating edge codes.
pub fn bin_probabilities(sigma: f64, adc: &AdcGeometry, mean_mv: f64) -> Vec<f64> {
    let max = adc.max_code();
    (0..=max)
        .map(|c| {
            let lo = if c == 0 {
                f64::NEG_INFINITY
            } else {
                (adc.lower_edge_mv(c) - mean_mv) / sigma
            };
            let hi = if c == max {
                f64::INFINITY
            } else {
                (adc.lower_edge_mv(c + 1) - mean_mv) / sigma
            };
            // Evaluate on the side of the mean where the tail is small.
            if lo >= 0.0 {
                upper_tail(lo) - upper_tail(hi)
            } else if hi <= 0.0 {
                upper_tail(-hi) - upper_tail(-lo)
            } else {
                1.0 - upper_tail(-lo) - upper_tail(hi)
            }
        })
        .collect()
}

/// Min-entropy per sample of a mid-scale-centered Gaussian after quantization.
pub fn min_entropy_gaussian(sigma: f64, adc: &AdcGeometry) -> Result<MinEntropy> {
    min_entropy_gaussian_at(sigma, adc, adc.mid_scale_mv())
}

/// As [`min_entropy_gaussian`] with an explicit signal mean, for drift studies.
pub fn min_entropy_gaussian_at(sigma: f64, adc: &AdcGeometry, mean_mv: f64) -> Result<MinEntropy> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Config(format!("sigma must be positive and finite, got {sigma}")));
    }
    adc.validate()?;
    let probs = bin_probabilities(sigma, adc, mean_mv);
    let (argmax, &p_max) = probs
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("at least one code");
    let rest: f64 = probs
        .iter()
        .enumerate()
        .filter(|&(c, _)| c != argmax)
        .map(|(_, p)| p)
        .sum();
    let p_max = p_max.min(1.0);
    Ok(MinEntropy {
        bits: (-p_max.log2()).max(0.0),
        p_max,
        argmax_code: argmax as u32,
        degenerate: rest <= 2f64.powi(-64),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiscardBudget {
    /// Worst-case min-entropy left per sample.
    pub per_sample: f64,
    /// Min-entropy per kept raw bit.
    pub per_raw_bit: f64,
    pub kept_bits: u32,
    pub dropped_bits: u32,
}

/// Worst-case accounting for dropped ADC bits: every dropped bit is assumed
/// to have carried a full bit of min-entropy.
pub fn budget_after_discard(h: f64, keep_mask: u8) -> Result<DiscardBudget> {
    let mask = KeepMask::new(keep_mask)?;
    if !(h >= 0.0) {
        return Err(Error::Config(format!("min-entropy must be non-negative, got {h}")));
    }
    let per_sample = (h - mask.dropped() as f64).max(0.0);
    Ok(DiscardBudget {
        per_sample,
        per_raw_bit: per_sample / mask.kept() as f64,
        kept_bits: mask.kept(),
        dropped_bits: mask.dropped(),
    })
}

/// Slack absorbing binary rounding of inputs such as `0.7` before flooring.
const FLOOR_SLACK: f64 = 1e-9;

/// Largest output length allowed by the leftover hash lemma:
/// `floor(n * h - 2 * epsilon_exponent)`.
pub fn leftover_hash_m(n: usize, h_per_bit: f64, epsilon_exponent: u32) -> Result<usize> {
    if n == 0 {
        return Err(Error::Config("n must be >= 1".into()));
    }
    if !(h_per_bit > 0.0 && h_per_bit <= 1.0) {
        return Err(Error::EntropyBudgetTooSmall {
            value: n as f64 * h_per_bit.max(0.0) - 2.0 * epsilon_exponent as f64,
        });
    }
    if epsilon_exponent == 0 {
        return Err(Error::Config("epsilon exponent must be >= 1".into()));
    }
    let value = n as f64 * h_per_bit - 2.0 * epsilon_exponent as f64;
    let m = (value + FLOOR_SLACK).floor();
    if m < 1.0 {
        return Err(Error::EntropyBudgetTooSmall { value });
    }
    Ok(m as usize)
}

/// `m / (n * h_per_bit)`.
pub fn extraction_efficiency(m: usize, n: usize, h_per_bit: f64) -> f64 {
    m as f64 / (n as f64 * h_per_bit)
}

/// Full entropy chain for one configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct EntropyBudget {
    pub gamma: f64,
    pub sigma_q: f64,
    pub p_max: f64,
    pub h_min_per_sample: f64,
    pub kept_bits_per_sample: u32,
    pub h_min_after_discard: f64,
    pub h_min_per_raw_bit: f64,
    pub n: usize,
    pub epsilon_exponent: u32,
    /// Configured output length.
    pub m: usize,
    /// Largest output length the budget allows.
    pub m_max: usize,
    pub extraction_efficiency: f64,
    pub degenerate: bool,
}

impl EntropyBudget {
    pub fn compute(
        model: &EntropyModel,
        keep_mask: KeepMask,
        n: usize,
        m: usize,
        epsilon_exponent: u32,
    ) -> Result<Self> {
        model.validate()?;
        let sigma = sigma_q(model);
        let h = min_entropy_gaussian(sigma, &model.adc)?;
        let discard = budget_after_discard(h.bits, keep_mask.bits())?;
        let m_max = leftover_hash_m(n, discard.per_raw_bit, epsilon_exponent)?;
        Ok(Self {
            gamma: model.gamma,
            sigma_q: sigma,
            p_max: h.p_max,
            h_min_per_sample: h.bits,
            kept_bits_per_sample: discard.kept_bits,
            h_min_after_discard: discard.per_sample,
            h_min_per_raw_bit: discard.per_raw_bit,
            n,
            epsilon_exponent,
            m,
            m_max,
            extraction_efficiency: extraction_efficiency(m, n, discard.per_raw_bit),
            degenerate: h.degenerate,
        })
    }

    /// Refuses an output length above the leftover-hash bound.
    pub fn check(&self) -> Result<()> {
        if self.m > self.m_max {
            return Err(Error::BudgetExceeded {
                m: self.m,
                max: self.m_max,
            });
        }
        Ok(())
    }
}

impl fmt::Display for EntropyBudget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "gamma: {}", self.gamma)?;
        writeln!(f, "sigma_q: {:.4}", self.sigma_q)?;
        writeln!(f, "p_max: {:.6}", self.p_max)?;
        writeln!(f, "h_min_sample: {:.4}", self.h_min_per_sample)?;
        writeln!(f, "kept_bits: {}", self.kept_bits_per_sample)?;
        writeln!(f, "h_min_after_discard: {:.4}", self.h_min_after_discard)?;
        writeln!(f, "h_min_bit: {:.4}", self.h_min_per_raw_bit)?;
        writeln!(f, "n: {}", self.n)?;
        writeln!(f, "m: {}", self.m)?;
        writeln!(f, "m_max: {}", self.m_max)?;
        writeln!(f, "epsilon_exponent: {}", self.epsilon_exponent)?;
        writeln!(f, "efficiency: {:.4}", self.extraction_efficiency)?;
        if self.degenerate {
            writeln!(f, "warning: degenerate distribution")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn sigma_q_examples() {
        let m = EntropyModel::default();
        assert_abs_diff_eq!(sigma_q(&m), 85.2, epsilon = 0.1);
        let all_quantum = EntropyModel {
            gamma: 1e9,
            mean_square_voltage: 100.0,
            ..m
        };
        assert_abs_diff_eq!(sigma_q(&all_quantum), 10.0, epsilon = 1e-6);
        let half = EntropyModel {
            gamma: 1.0,
            mean_square_voltage: 8.0,
            ..m
        };
        assert_abs_diff_eq!(sigma_q(&half), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn default_adc_centers_code_128_on_zero() {
        let adc = AdcGeometry::default();
        assert_eq!(adc.quantize(0.0), 128);
        assert_abs_diff_eq!(adc.mid_scale_mv(), 0.0, epsilon = 1e-12);
        assert_eq!(adc.quantize(-1e6), 0);
        assert_eq!(adc.quantize(1e6), 255);
    }

    #[test]
    fn probabilities_sum_to_one() {
        for sigma in [0.5, 10.0, 85.2, 500.0] {
            let s: f64 = bin_probabilities(sigma, &AdcGeometry::default(), 0.0).iter().sum();
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn reference_operating_point() {
        let h = min_entropy_gaussian(85.2, &AdcGeometry::default()).unwrap();
        assert_abs_diff_eq!(h.p_max, 0.011, epsilon = 0.0005);
        assert_abs_diff_eq!(h.bits, 6.5, epsilon = 0.1);
        assert_eq!(h.argmax_code, 128);
        assert!(!h.degenerate);
    }

    #[test]
    fn huge_sigma_is_bounded_by_adc_bits() {
        let adc = AdcGeometry::default();
        let h = min_entropy_gaussian(1e6 * adc.full_scale_mv, &adc).unwrap();
        assert!(h.bits <= 8.0);
        assert!(h.bits >= 0.0);
    }

    #[test]
    fn tiny_sigma_is_degenerate() {
        let adc = AdcGeometry::default();
        let h = min_entropy_gaussian(adc.full_scale_mv / 1e6, &adc).unwrap();
        assert!(h.degenerate);
        assert!(h.bits < 1e-9);
    }

    #[test]
    fn nonpositive_sigma_rejected() {
        assert!(min_entropy_gaussian(0.0, &AdcGeometry::default()).is_err());
    }

    #[test]
    fn discard_examples() {
        let d = budget_after_discard(6.5, KeepMask::DEFAULT.bits()).unwrap();
        assert_eq!(d.per_sample, 3.5);
        assert_eq!(d.per_raw_bit, 0.7);
        let d = budget_after_discard(6.5, 0xff).unwrap();
        assert_eq!((d.per_sample, d.per_raw_bit), (6.5, 0.8125));
        let d = budget_after_discard(2.0, KeepMask::DEFAULT.bits()).unwrap();
        assert_eq!((d.per_sample, d.per_raw_bit), (0.0, 0.0));
        assert!(matches!(budget_after_discard(6.5, 0), Err(Error::EmptyKeepMask)));
    }

    #[test]
    fn leftover_hash_examples() {
        assert_eq!(leftover_hash_m(1520, 0.7, 20).unwrap(), 1024);
        assert!(matches!(
            leftover_hash_m(1520, 0.7, 532),
            Err(Error::EntropyBudgetTooSmall { .. })
        ));
        assert_eq!(leftover_hash_m(100, 1.0, 10).unwrap(), 80);
        assert!(leftover_hash_m(1520, 0.0, 20).is_err());
        // floors rather than rounds
        assert_eq!(leftover_hash_m(10, 0.99, 1).unwrap(), 7);
    }

    #[test]
    fn efficiency_examples() {
        assert_abs_diff_eq!(extraction_efficiency(1024, 1520, 0.7), 0.962, epsilon = 0.005);
        assert_abs_diff_eq!(extraction_efficiency(760, 1520, 0.5), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(extraction_efficiency(512, 1520, 0.7), 0.481, epsilon = 0.0005);
    }

    #[test]
    fn default_budget_admits_default_geometry() {
        let b = EntropyBudget::compute(&EntropyModel::default(), KeepMask::DEFAULT, 1520, 1024, 20)
            .unwrap();
        b.check().unwrap();
        assert!(b.m_max >= 1024);
        assert!((b.m_max as f64) <= 1520.0 * b.h_min_per_raw_bit);
        let text = b.to_string();
        for key in ["gamma:", "sigma_q:", "h_min_sample:", "kept_bits:", "h_min_bit:", "n:", "m:", "epsilon_exponent:", "efficiency:"] {
            assert!(text.lines().any(|l| l.starts_with(key)), "missing {key}");
        }
    }

    #[test]
    fn budget_gate_rejects_overdraw() {
        let b = EntropyBudget::compute(&EntropyModel::default(), KeepMask::DEFAULT, 1520, 1200, 20)
            .unwrap();
        assert!(matches!(b.check(), Err(Error::BudgetExceeded { m: 1200, .. })));
    }
}
