//! Linear cocycles over Bernoulli shifts: random matrix products, their
//! Lyapunov spectrum, and the induced projective systems.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::geometry::{Point, ProjectivePoint, MAX_DIM};
use crate::linalg::SquareMatrix;
use crate::parallel::map_replicas;
use crate::stats;
use crate::synchronization::local_contraction_probe;
use crate::systems::{MapSpec, SystemSpec};
use crate::words::{cumulative, derive_seed, SymbolSource, WordStream};

/// Steps between QR re-orthonormalizations.
pub const REORTHONORMALIZE_EVERY: usize = 16;
/// Log-scale below which a segment factor is treated as singular.
pub const LOG_SCALE_FLOOR: f64 = -700.0;

/// Finite family of invertible `d x d` matrices with probabilities.
#[derive(Debug, Clone)]
pub struct CocycleSpec {
    matrices: Vec<SquareMatrix>,
    probs: Vec<f64>,
    cumulative: Arc<[f64]>,
    dim: usize,
}

impl CocycleSpec {
    pub fn new(matrices: Vec<SquareMatrix>, probs: Vec<f64>) -> Result<Self> {
        let dim = matrices
            .first()
            .ok_or_else(|| invalid("matrices", "must be nonempty"))?
            .dim();
        if !(2..=MAX_DIM).contains(&dim) {
            return Err(invalid("matrices", format!("dimension {dim} outside 2..={MAX_DIM}")));
        }
        if probs.len() != matrices.len() {
            return Err(invalid(
                "probs",
                format!("{} entries for {} matrices", probs.len(), matrices.len()),
            ));
        }
        for (i, m) in matrices.iter().enumerate() {
            if m.dim() != dim {
                return Err(invalid("matrices", format!("matrix {i} is not {dim}x{dim}")));
            }
            if !(m.det().abs() > 1e-12) {
                return Err(Error::NotInjective { index: i });
            }
        }
        let cumulative = cumulative(&probs)?.into();
        Ok(Self {
            matrices,
            probs,
            cumulative,
            dim,
        })
    }

    pub fn matrices(&self) -> &[SquareMatrix] {
        &self.matrices
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn word_stream(&self, seed: u64, stream_id: u64) -> WordStream {
        WordStream::from_cumulative(self.cumulative.clone(), seed, stream_id)
    }

    /// `E_mu log|det A|`, the exact sum of all exponents.
    pub fn mean_log_det(&self) -> f64 {
        self.matrices
            .iter()
            .zip(&self.probs)
            .map(|(m, p)| p * m.det().abs().ln())
            .sum()
    }
}

/// Running product `A(i_k) ... A(i_1)` kept as `W R_acc exp(log_scale)`:
/// `W` holds the product since the last re-orthonormalization applied to
/// an orthonormal frame, `R_acc` the product of the triangular factors
/// (rescaled to unit max entry), and `log_r` the accumulated log-moduli
/// of the triangular diagonals.
#[derive(Debug, Clone)]
pub struct LogProduct {
    frame: SquareMatrix,
    r_acc: Vec<f64>,
    r_log_scale: f64,
    log_r: [f64; MAX_DIM],
    steps: usize,
    pending: usize,
}

impl LogProduct {
    pub fn new(dim: usize) -> Self {
        Self {
            frame: SquareMatrix::identity(dim),
            r_acc: SquareMatrix::identity(dim).rows().concat(),
            r_log_scale: 0.0,
            log_r: [0.0; MAX_DIM],
            steps: 0,
            pending: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.frame.dim()
    }

    /// Number of factors multiplied so far.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Left-multiplies by `a`.
    pub fn push(&mut self, a: &SquareMatrix) -> Result<()> {
        self.frame = a.mul(&self.frame);
        self.steps += 1;
        self.pending += 1;
        if self.pending == REORTHONORMALIZE_EVERY {
            self.reorthonormalize()?;
        }
        Ok(())
    }

    fn reorthonormalize(&mut self) -> Result<()> {
        let d = self.dim();
        let w = self.frame.clone();
        let mut q = w.clone();
        q.qr_in_place();
        // R = Q^T W, upper triangular
        let mut r = vec![0.0; d * d];
        for i in 0..d {
            for j in i..d {
                r[i * d + j] = (0..d).map(|k| q.get(k, i) * w.get(k, j)).sum();
            }
        }
        for i in 0..d {
            let l = r[i * d + i].abs().ln();
            if !(l > LOG_SCALE_FLOOR) || !l.is_finite() {
                return Err(Error::OverflowGuard {
                    step: self.steps,
                    log_scale: l,
                });
            }
            self.log_r[i] += l;
        }
        let mut acc = vec![0.0; d * d];
        for i in 0..d {
            for j in i..d {
                acc[i * d + j] = (i..=j).map(|k| r[i * d + k] * self.r_acc[k * d + j]).sum();
            }
        }
        let scale = acc.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for v in &mut acc {
            *v /= scale;
        }
        self.r_log_scale += scale.ln();
        self.r_acc = acc;
        self.frame = q;
        self.pending = 0;
        Ok(())
    }

    /// Flushes pending factors into the triangular bookkeeping.
    pub fn finish(&mut self) -> Result<()> {
        if self.pending > 0 {
            self.reorthonormalize()?;
        }
        Ok(())
    }

    /// Accumulated `log|R_kk|`, in frame order. Divided by the number of
    /// steps these are the finite-time Lyapunov exponents.
    pub fn log_r_diagonal(&mut self) -> Result<Vec<f64>> {
        self.finish()?;
        Ok(self.log_r[..self.dim()].to_vec())
    }

    /// Log singular values of the product, descending. Accurate while the
    /// condition number of the product stays within double precision.
    pub fn log_singular_values(&mut self) -> Result<Vec<f64>> {
        self.finish()?;
        let d = self.dim();
        let m = DMatrix::from_row_slice(d, d, &self.r_acc);
        let mut sv: Vec<f64> = m
            .singular_values()
            .iter()
            .map(|s| s.ln() + self.r_log_scale)
            .collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        Ok(sv)
    }

    /// The product itself, when its entries are representable.
    pub fn product(&mut self) -> Result<SquareMatrix> {
        self.finish()?;
        if self.r_log_scale.abs() > 700.0 {
            return Err(Error::OverflowGuard {
                step: self.steps,
                log_scale: self.r_log_scale,
            });
        }
        let d = self.dim();
        let s = self.r_log_scale.exp();
        let r = SquareMatrix::from_row_major(d, self.r_acc.iter().map(|v| v * s).collect())?;
        Ok(self.frame.mul(&r))
    }
}

/// Multiplies `n` matrices drawn from `word`, re-orthonormalizing every
/// [`REORTHONORMALIZE_EVERY`] steps.
pub fn product_stream<S: SymbolSource>(c: &CocycleSpec, word: &mut S, n: usize) -> Result<LogProduct> {
    if n == 0 {
        return Err(invalid("n", "must be >= 1"));
    }
    let mut p = LogProduct::new(c.dim);
    for _ in 0..n {
        p.push(&c.matrices[word.next_symbol()])?;
    }
    p.finish()?;
    Ok(p)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumEstimate {
    /// `chi_1 <= ... <= chi_d`.
    pub chis: Vec<f64>,
    pub stderr: Vec<f64>,
    /// `chi_d - chi_{d-1}`.
    pub gap_top: f64,
    /// `exp((chi_{d-1} - chi_d) / 2)`.
    pub q_lc: f64,
    pub n: usize,
    pub replicas: usize,
    pub seed: u64,
}

/// Lyapunov spectrum from `replicas` independent products of length `n`.
pub fn estimate_spectrum(c: &CocycleSpec, n: usize, replicas: usize, seed: u64) -> Result<SpectrumEstimate> {
    if n < 1000 {
        return Err(invalid("n", "must be >= 1000"));
    }
    if replicas == 0 {
        return Err(invalid("replicas", "must be >= 1"));
    }
    let per: Vec<Result<Vec<f64>>> = map_replicas(replicas, |r| {
        let mut w = c.word_stream(seed, r);
        let mut p = product_stream(c, &mut w, n)?;
        let mut chis: Vec<f64> = p.log_r_diagonal()?.iter().map(|l| l / n as f64).collect();
        chis.sort_by(f64::total_cmp);
        Ok(chis)
    });
    let per: Vec<Vec<f64>> = per.into_iter().collect::<Result<_>>()?;
    let d = c.dim;
    let mut chis = Vec::with_capacity(d);
    let mut stderr = Vec::with_capacity(d);
    for k in 0..d {
        let col: Vec<f64> = per.iter().map(|v| v[k]).collect();
        chis.push(stats::mean(&col));
        stderr.push(stats::stderr(&col));
    }
    let gap_top = chis[d - 1] - chis[d - 2];
    Ok(SpectrumEstimate {
        q_lc: (-gap_top / 2.0).exp(),
        chis,
        stderr,
        gap_top,
        n,
        replicas,
        seed,
    })
}

/// The induced system `x -> A(i) x / ‖A(i) x‖` on the projective space.
pub fn projective_system(c: &CocycleSpec) -> SystemSpec {
    let maps = c
        .matrices
        .iter()
        .map(|m| MapSpec::ProjectiveLinear { matrix: m.clone() })
        .collect();
    SystemSpec::new(maps, c.probs.clone()).expect("cocycle matrices are invertible")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LcRateReport {
    pub fraction: f64,
    pub q_lc: f64,
    pub q_target: f64,
    pub gap_top: f64,
    pub gap_stderr: f64,
}

/// Spectrum run used to calibrate `q_lc` in [`verify_lc_rate`].
pub const LC_SPECTRUM_STEPS: usize = 10_000;
pub const LC_SPECTRUM_REPLICAS: usize = 32;

/// Fraction of words contracting `B(x, radius)` at rate
/// `q_target = (1 + q_lc)/2`, with `q_lc` from an estimated spectrum.
/// Refuses when the estimated top gap is not positive.
pub fn verify_lc_rate(
    c: &CocycleSpec,
    x: &ProjectivePoint,
    radius: f64,
    n: usize,
    replicas: usize,
    seed: u64,
) -> Result<LcRateReport> {
    let spec = estimate_spectrum(
        c,
        LC_SPECTRUM_STEPS,
        LC_SPECTRUM_REPLICAS,
        derive_seed(seed, 0x1c),
    )?;
    let d = c.dim;
    let gap_stderr = (spec.stderr[d - 1].powi(2) + spec.stderr[d - 2].powi(2)).sqrt();
    if !(spec.gap_top > (3.0 * gap_stderr).max(1e-6)) {
        return Err(Error::HypothesisFailed(format!(
            "top Lyapunov gap {:.3e} is not positive (stderr {:.3e})",
            spec.gap_top, gap_stderr
        )));
    }
    let q_target = (1.0 + spec.q_lc) / 2.0;
    let fraction = lc_fraction(c, x, radius, n, replicas, q_target, seed)?;
    Ok(LcRateReport {
        fraction,
        q_lc: spec.q_lc,
        q_target,
        gap_top: spec.gap_top,
        gap_stderr,
    })
}

/// Fraction of words contracting `B(x, radius)` at rate `q_target` on the
/// projective system.
pub fn lc_fraction(
    c: &CocycleSpec,
    x: &ProjectivePoint,
    radius: f64,
    n: usize,
    replicas: usize,
    q_target: f64,
    seed: u64,
) -> Result<f64> {
    if x.dim() != c.dim {
        return Err(Error::PhaseSpaceMismatch {
            expected: "projective space of the cocycle dimension",
            found: "projective point of another dimension",
        });
    }
    let sys = projective_system(c);
    local_contraction_probe(&sys, &Point::Projective(*x), radius, n, replicas, q_target, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gallery;
    use crate::geometry::projective_distance;
    use crate::words::FixedWord;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, LN_2};

    fn single(m: SquareMatrix) -> CocycleSpec {
        CocycleSpec::new(vec![m], vec![1.0]).unwrap()
    }

    #[test]
    fn diagonal_powers() {
        let c = single(SquareMatrix::diag(&[2.0, 0.5]));
        let mut p = product_stream(&c, &mut FixedWord::new(vec![0; 10]), 10).unwrap();
        let sv = p.log_singular_values().unwrap();
        assert!((sv[0] - 10.0 * LN_2).abs() < 1e-12);
        assert!((sv[1] + 10.0 * LN_2).abs() < 1e-12);
    }

    #[test]
    fn identity_products() {
        let c = single(SquareMatrix::identity(3));
        let mut p = product_stream(&c, &mut FixedWord::new(vec![0; 40]), 40).unwrap();
        assert_eq!(p.product().unwrap(), SquareMatrix::identity(3));
    }

    #[test]
    fn hyperbolic_top_growth() {
        let c = gallery::single_hyperbolic();
        let mut p = product_stream(&c, &mut FixedWord::new(vec![0; 20]), 20).unwrap();
        let sv = p.log_singular_values().unwrap();
        assert!((sv[0] / 20.0 - LN_2).abs() < 0.01);
    }

    #[test]
    fn product_matches_direct_multiplication() {
        let c = gallery::diag_rot();
        let word: Vec<usize> = (0..37).map(|k| (k * 7 + k / 3) % 2).collect();
        let mut direct = SquareMatrix::identity(2);
        for &s in &word {
            direct = c.matrices()[s].mul(&direct);
        }
        let mut p = product_stream(&c, &mut FixedWord::new(word), 37).unwrap();
        let got = p.product().unwrap();
        let scale = direct.rows().concat().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for r in 0..2 {
            for col in 0..2 {
                assert!((got.get(r, col) - direct.get(r, col)).abs() < 1e-12 * scale);
            }
        }
    }

    #[test]
    fn spectra_of_simple_cocycles() {
        let s = estimate_spectrum(&single(SquareMatrix::diag(&[2.0, 0.5])), 1000, 4, 1).unwrap();
        assert!((s.chis[0] + LN_2).abs() < 1e-12 && (s.chis[1] - LN_2).abs() < 1e-12);
        assert!(s.q_lc > 0.0 && s.q_lc < 1.0);
        let r = estimate_spectrum(&gallery::rotation_only(), 1000, 4, 1).unwrap();
        assert!(r.chis.iter().all(|c| c.abs() < 1e-12));
        assert!(estimate_spectrum(&gallery::rotation_only(), 999, 4, 1).is_err());
    }

    #[test]
    fn projective_actions() {
        let sys = projective_system(&single(SquareMatrix::diag(&[2.0, 0.5])));
        let e1 = Point::Projective(ProjectivePoint::basis(2, 0).unwrap());
        assert_eq!(sys.apply(0, &e1), e1);
        let diag = Point::Projective(ProjectivePoint::new(&[FRAC_1_SQRT_2, FRAC_1_SQRT_2]).unwrap());
        let expect = ProjectivePoint::new(&[2.0, 0.5]).unwrap();
        match sys.apply(0, &diag) {
            Point::Projective(p) => assert!(projective_distance(&p, &expect) < 1e-15),
            _ => unreachable!(),
        }
        let rot = projective_system(&single(SquareMatrix::rotation(FRAC_PI_2)));
        match rot.apply(0, &e1) {
            Point::Projective(p) => {
                let e2 = ProjectivePoint::basis(2, 1).unwrap();
                assert!(projective_distance(&p, &e2) < 1e-15);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn sign_flips_do_not_change_distances_through_maps() {
        let sys = projective_system(&gallery::diag_rot());
        let u = [0.3, -0.8];
        let v = [-0.6, 0.1];
        let pu = Point::Projective(ProjectivePoint::new(&u).unwrap());
        let pv = Point::Projective(ProjectivePoint::new(&v).unwrap());
        let nu = Point::Projective(ProjectivePoint::new(&[-u[0], -u[1]]).unwrap());
        for i in 0..2 {
            let a = sys.space().distance(&sys.apply(i, &pu), &sys.apply(i, &pv)).unwrap();
            let b = sys.space().distance(&sys.apply(i, &nu), &sys.apply(i, &pv)).unwrap();
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn lc_rate_refusals_and_fixed_direction() {
        let e1 = ProjectivePoint::basis(2, 0).unwrap();
        assert!(matches!(
            verify_lc_rate(&gallery::rotation_only(), &e1, 1e-3, 50, 10, 3),
            Err(Error::HypothesisFailed(_))
        ));
        let rep = verify_lc_rate(&single(SquareMatrix::diag(&[2.0, 0.5])), &e1, 1e-3, 100, 20, 3).unwrap();
        assert_eq!(rep.fraction, 1.0);
    }

    #[test]
    fn rejects_singular_matrices() {
        let m = SquareMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!(matches!(
            CocycleSpec::new(vec![m], vec![1.0]),
            Err(Error::NotInjective { index: 0 })
        ));
    }
}
