//! Reference values computed from long runs, with their tolerance bands.

use rdsw_core::cocycles::estimate_spectrum;
use rdsw_core::operator::{build_transfer_ulam, spectral_gap, SpectrumMethod};
use rdsw_core::gallery;

const DIAG_ROT_CHI_TOP: f64 = 0.1706;
const ANTON_ULAM_GAP: f64 = 0.2243;

#[test]
fn diag_rot_top_exponent() {
    let s = estimate_spectrum(&gallery::diag_rot(), 100_000, 32, 11).unwrap();
    let top = s.chis[1];
    assert!((top - DIAG_ROT_CHI_TOP).abs() < 0.005, "chi_top = {top}");
    assert!(s.stderr[1] < 0.005);
}

#[test]
fn anton_ulam_gap_dense() {
    let op = build_transfer_ulam(&gallery::anton(), 1024).unwrap();
    let r = spectral_gap(&op, 4).unwrap();
    assert_eq!(r.method, SpectrumMethod::Dense);
    assert!((r.moduli[0] - 1.0).abs() < 1e-9);
    assert!((r.gap - ANTON_ULAM_GAP).abs() < 0.02, "gap = {}", r.gap);
}

#[test]
fn anton_ulam_gap_krylov_agrees() {
    let op = build_transfer_ulam(&gallery::anton(), 4096).unwrap();
    let r = spectral_gap(&op, 4).unwrap();
    assert_eq!(r.method, SpectrumMethod::ArnoldiEstimate);
    assert!((r.gap - ANTON_ULAM_GAP).abs() < 0.02, "gap = {}", r.gap);
}
