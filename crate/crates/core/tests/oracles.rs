//! Closed-form values checked against the estimators.

use std::f64::consts::LN_2;

use rdsw_core::cocycles::estimate_spectrum;
use rdsw_core::limit_laws::estimate_sigma2;
use rdsw_core::lyapunov::estimate_gamma;
use rdsw_core::measures::{estimate_stationary, wasserstein1_to_lebesgue};
use rdsw_core::operator::{build_transfer_ulam, leading_eigen, ulam_gamma};
use rdsw_core::{gallery, Observable};

/// Autocovariance sum for the coordinate under `{x/2, (x+1)/2}`:
/// `Var = 1/12` and `Cov(X_0, X_k) = 2^-k / 12`.
fn binary_affine_sigma2() -> f64 {
    let var = 1.0 / 12.0;
    let mut acc = var;
    let mut c = var;
    for _ in 1..200 {
        c *= 0.5;
        acc += 2.0 * c;
    }
    acc
}

#[test]
fn sigma2_matches_autocovariance_sum() {
    let sys = gallery::binary_affine();
    let h = Observable::coordinate(sys.space()).unwrap();
    let est = estimate_sigma2(&sys, &h, 4096, 256, 17).unwrap();
    let truth = binary_affine_sigma2();
    assert!((truth - 0.25).abs() < 1e-15);
    assert!((est.sigma2 - truth).abs() < 4.0 * est.stderr, "{} +- {}", est.sigma2, est.stderr);
}

#[test]
fn affine_gamma_is_the_mean_log_slope() {
    let sys = gallery::slope_pair();
    let est = estimate_gamma(&sys, 20_000, 64, 0.3, 5).unwrap();
    let truth = -1.5 * LN_2;
    assert!((est.gamma - truth).abs() < 4.0 * est.stderr + 1e-12, "{est:?}");
    assert!((est.one_step_integral - truth).abs() < 1e-12);
}

#[test]
fn rotations_have_zero_fiber_exponent() {
    let sys = gallery::two_rotations();
    assert!(ulam_gamma(&sys, 256).unwrap().abs() < 1e-12);
    let est = estimate_gamma(&sys, 1000, 32, 0.1, 3).unwrap();
    assert!(est.gamma.abs() < 1e-12);
}

#[test]
fn lebesgue_is_stationary_for_binary_affine() {
    let sys = gallery::binary_affine();
    let m = estimate_stationary(&sys, 64, 200_000, 8).unwrap();
    // Kolmogorov-type bound for 2e5 samples, generous
    assert!(wasserstein1_to_lebesgue(&m).unwrap() < 5e-3);

    let op = build_transfer_ulam(&sys, 64).unwrap();
    let lead = leading_eigen(&op, 1e-13, 10_000);
    assert!(lead.converged);
    assert!((lead.eigenvalue - 1.0).abs() < 1e-12);
    for v in &lead.vector {
        assert!((v - 1.0 / 64.0).abs() < 1e-12);
    }
}

#[test]
fn single_hyperbolic_spectrum_is_log_eigenvalues() {
    let c = gallery::single_hyperbolic();
    let s = estimate_spectrum(&c, 2000, 4, 1).unwrap();
    // triangular with diagonal (2, 1/2): both exponents are exact up to O(1/n)
    assert!((s.chis[1] - LN_2).abs() < 2e-3, "{:?}", s.chis);
    assert!((s.chis[0] + LN_2).abs() < 2e-3, "{:?}", s.chis);
}

#[test]
fn rotation_only_has_vanishing_spectrum() {
    let s = estimate_spectrum(&gallery::rotation_only(), 1000, 2, 1).unwrap();
    assert!(s.chis.iter().all(|c| c.abs() < 1e-12), "{:?}", s.chis);
}

#[test]
fn spectrum_sums_to_mean_log_det() {
    let c = gallery::diag_rot();
    let s = estimate_spectrum(&c, 5000, 8, 2).unwrap();
    let total: f64 = s.chis.iter().sum();
    assert!((total - c.mean_log_det()).abs() < 1e-9, "{total}");
}
