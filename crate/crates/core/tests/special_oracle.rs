mod common {
    pub mod hp;
}

use common::hp::Oracle;
use gmmcc_core::special::{std_normal_cdf, std_normal_inv_cdf, std_normal_pdf};

#[test]
fn oracle_sanity() {
    let o = Oracle::new();
    assert_eq!(o.cdf(0.0), 0.5);
    // 1/√(2π)
    assert!((o.pdf(0.0) - 0.398_942_280_401_432_7).abs() < 1e-17);
    // Φ(1) + Φ(−1) = 1
    assert!((o.cdf(1.0) + o.cdf(-1.0) - 1.0).abs() < 1e-16);
}

#[test]
fn cdf_matches_oracle_on_coarse_grid() {
    let o = Oracle::new();
    let mut worst = 0.0f64;
    for i in -320..=320 {
        let z = i as f64 * 0.025;
        worst = worst.max((std_normal_cdf(z).unwrap() - o.cdf(z)).abs());
    }
    assert!(worst <= 1e-12, "worst = {worst:e}");
}

#[test]
fn pdf_matches_oracle() {
    let o = Oracle::new();
    for z in [-7.5, -3.3, -1.0, -0.125, 0.0, 0.7, 2.5, 6.466] {
        let (a, b) = (std_normal_pdf(z).unwrap(), o.pdf(z));
        assert!((a - b).abs() <= 1e-15 * b.max(1e-300) + 1e-300, "z = {z}: {a} vs {b}");
    }
}

#[test]
fn tail_relative_accuracy() {
    // Deep in the lower tail the absolute criterion is vacuous; check
    // relative agreement instead.
    let o = Oracle::new();
    for z in [-8.0, -6.466, -5.0, -3.0] {
        let (a, b) = (std_normal_cdf(z).unwrap(), o.cdf(z));
        assert!(((a - b) / b).abs() < 1e-13, "z = {z}: {a} vs {b}");
    }
}

#[test]
fn inverse_round_trip_against_oracle() {
    let o = Oracle::new();
    for p in [1e-10, 1e-4, 0.05, 0.5, 0.9, 0.999] {
        let z = std_normal_inv_cdf(p).unwrap();
        assert!((o.cdf(z) - p).abs() <= 1e-15 + 1e-12 * p, "p = {p}");
    }
}
