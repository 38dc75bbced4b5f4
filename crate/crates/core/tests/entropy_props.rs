use std::f64::consts::PI;

use proptest::prelude::*;
use qrng_core::bits::KeepMask;
use qrng_core::entropy::{
    budget_after_discard, leftover_hash_m, min_entropy_gaussian, AdcGeometry, EntropyBudget, EntropyModel,
};

fn gauss_pdf(x: f64, sigma: f64) -> f64 {
    (-0.5 * (x / sigma).powi(2)).exp() / (sigma * (2.0 * PI).sqrt())
}

fn simpson(a: f64, b: f64, sigma: f64, panels: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let h = (b - a) / panels as f64;
    let mut s = gauss_pdf(a, sigma) + gauss_pdf(b, sigma);
    for i in 1..panels {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * gauss_pdf(a + i as f64 * h, sigma);
    }
    s * h / 3.0
}

/// Largest bin mass by integrating the density over each code's interval.
fn brute_force_p_max(sigma: f64, adc: &AdcGeometry) -> f64 {
    let codes = adc.codes() as u32;
    let lo_tail = -14.0 * sigma;
    let hi_tail = 14.0 * sigma;
    (0..codes)
        .map(|c| {
            let a = if c == 0 { lo_tail.min(adc.lower_edge_mv(1)) } else { adc.lower_edge_mv(c) };
            let b = if c + 1 == codes { hi_tail.max(adc.lower_edge_mv(c)) } else { adc.lower_edge_mv(c + 1) };
            let panels = (((b - a) / sigma * 400.0) as usize).clamp(200, 400_000) & !1;
            simpson(a, b, sigma, panels)
        })
        .fold(0.0, f64::max)
}

#[test]
fn matches_brute_force_integration() {
    let adc = AdcGeometry::default();
    for frac in [0.01, 0.05, 0.14, 0.3, 1.0] {
        let sigma = frac * adc.full_scale_mv;
        let h = min_entropy_gaussian(sigma, &adc).unwrap().bits;
        let brute = -brute_force_p_max(sigma, &adc).log2();
        assert!((h - brute).abs() < 1e-6, "sigma/fs {frac}: {h} vs {brute}");
    }
}

#[test]
fn non_decreasing_below_clipping() {
    let adc = AdcGeometry::default();
    let mut prev = 0.0;
    for i in 0..=38 {
        let frac = 0.01 + 0.005 * i as f64;
        let h = min_entropy_gaussian(frac * adc.full_scale_mv, &adc).unwrap().bits;
        assert!(h >= prev - 1e-12, "H dropped at sigma/fs = {frac}: {prev} -> {h}");
        prev = h;
    }
}

#[test]
fn sigma_q_reference_point() {
    let b = EntropyBudget::compute(&EntropyModel::default(), KeepMask::DEFAULT, 1520, 1024, 20).unwrap();
    assert!((b.sigma_q - 85.2).abs() <= 0.1);
    assert!(b.m <= b.m_max);
    assert!(b.m as f64 <= b.n as f64 * b.h_min_per_raw_bit);
}

proptest! {
    #[test]
    fn entropy_is_within_adc_bits(log_sigma in -3.0f64..7.0) {
        let adc = AdcGeometry::default();
        let h = min_entropy_gaussian(10f64.powf(log_sigma), &adc).unwrap().bits;
        prop_assert!((0.0..=8.0).contains(&h), "h = {}", h);
    }

    #[test]
    fn discard_accounting(h in 0.0f64..8.0, mask in 1u8..=255) {
        let d = budget_after_discard(h, mask).unwrap();
        let kept = mask.count_ones();
        prop_assert_eq!(d.kept_bits, kept);
        let expect = (h - f64::from(8 - kept)).max(0.0);
        prop_assert!((d.per_sample - expect).abs() < 1e-12);
        prop_assert!((d.per_raw_bit - expect / f64::from(kept)).abs() < 1e-12);
    }

    #[test]
    fn leftover_hash_never_overdraws(n in 1usize..5000, h in 0.0f64..=1.0, e in 1u32..64) {
        if let Ok(m) = leftover_hash_m(n, h, e) {
            prop_assert!(m as f64 <= n as f64 * h + 1e-9);
            prop_assert!(m as f64 <= n as f64 * h - 2.0 * f64::from(e) + 1.0);
        }
    }

    #[test]
    fn budget_gate_follows_leftover_hash(gamma in 0.5f64..50.0, m in 1usize..1520) {
        let model = EntropyModel { gamma, ..EntropyModel::default() };
        let b = EntropyBudget::compute(&model, KeepMask::DEFAULT, 1520, m, 20).unwrap();
        prop_assert_eq!(b.check().is_ok(), m <= b.m_max);
    }
}
