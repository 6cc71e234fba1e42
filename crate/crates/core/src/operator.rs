//! Ulam discretizations of the transfer operator `Ph(x) = sum_i p_i h(f_i x)`
//! and of the Laplace-Markov operator `Q phi(j, x) = sum_i p_i phi(i, f_j x)`
//! on 1-D phase spaces, with spectral estimates, Hölder norms on grids,
//! and the identity `Q^n phi(j, x) = E phi(i_n, f_{i_{n-1}} ... f_{i_1} f_j x)`.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{reduce_unit, snowflake_unchecked, PhaseSpace};
use crate::limit_laws::Observable;
use crate::parallel::map_replicas;
use crate::stats;
use crate::systems::{MapSpec, SystemSpec};
use crate::words::{SymbolSource, ENUMERATION_BUDGET};

/// Largest number of cells.
pub const MAX_CELLS: usize = 1 << 16;
/// Samples per cell when overlaps cannot be computed from preimages.
pub const QUADRATURE_SAMPLES: usize = 64;
/// Operators up to this size are solved densely.
pub const DENSE_LIMIT: usize = 2048;
/// Restarts of the Arnoldi estimate.
pub const ARNOLDI_RESTARTS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    Transfer,
    LaplaceMarkov,
}

/// Sparse row-stochastic matrix on `blocks x k` states, stored by rows.
/// State `(j, a)` has index `j * k + a`.
#[derive(Debug, Clone, PartialEq)]
pub struct UlamOperator {
    kind: OperatorKind,
    space: PhaseSpace,
    k: usize,
    blocks: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
    exact: bool,
}

impl UlamOperator {
    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn space(&self) -> PhaseSpace {
        self.space
    }

    pub fn cells(&self) -> usize {
        self.k
    }

    pub fn blocks(&self) -> usize {
        self.blocks
    }

    pub fn dim(&self) -> usize {
        self.k * self.blocks
    }

    /// False when some overlaps came from quadrature.
    pub fn is_exact(&self) -> bool {
        self.exact
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()]
            .iter()
            .zip(&self.vals[span])
            .map(|(c, v)| (*c as usize, *v))
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|e| e.0 == c).map_or(0.0, |e| e.1)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.dim()).map(|r| self.row(r).map(|e| e.1).sum()).collect()
    }

    /// Measure side: `v -> v P`.
    pub fn apply_measure(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (r, vr) in v.iter().enumerate() {
            if *vr != 0.0 {
                for (c, w) in self.row(r) {
                    out[c] += vr * w;
                }
            }
        }
        out
    }

    /// Function side: `h -> P h`.
    pub fn apply_function(&self, h: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|r| self.row(r).map(|(c, w)| w * h[c]).sum())
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for r in 0..n {
            for (c, w) in self.row(r) {
                m[(r, c)] = w;
            }
        }
        m
    }

    /// Coordinate-list text: one `row col value` line per stored entry.
    pub fn write_coo<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "row col value")?;
        for r in 0..self.dim() {
            for (c, v) in self.row(r) {
                writeln!(w, "{r} {c} {}", crate::format_real(v))?;
            }
        }
        Ok(())
    }

    fn from_rows(
        kind: OperatorKind,
        space: PhaseSpace,
        k: usize,
        blocks: usize,
        rows: Vec<BTreeMap<usize, f64>>,
        exact: bool,
    ) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for row in rows {
            for (c, v) in row {
                if v > 0.0 {
                    cols.push(c as u32);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Self {
            kind,
            space,
            k,
            blocks,
            row_ptr,
            cols,
            vals,
            exact,
        }
    }
}

fn check_cells(sys: &SystemSpec, k: usize) -> Result<()> {
    sys.require_one_dimensional()?;
    if k == 0 || !k.is_power_of_two() || k > MAX_CELLS {
        return Err(invalid("k_cells", format!("must be a power of two <= {MAX_CELLS}")));
    }
    Ok(())
}

fn cell_of(space: PhaseSpace, k: usize, x: f64) -> usize {
    let x = if space == PhaseSpace::Circle { reduce_unit(x) } else { x.clamp(0.0, 1.0) };
    ((x * k as f64) as usize).min(k - 1)
}

/// Solves `F(t) = v` for the monotone lift `F` on `[lo, hi]`.
fn inverse_lift(map: &MapSpec, v: f64, lo: f64, hi: f64) -> f64 {
    match map {
        MapSpec::AffineInterval { a, b } => ((v - b) / a).clamp(lo, hi),
        MapSpec::Rotation { c } => (v - c).clamp(lo, hi),
        _ => {
            let increasing = map.lift(hi) >= map.lift(lo);
            let (mut a, mut b) = (lo, hi);
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if m <= a || m >= b {
                    break;
                }
                if (map.lift(m) < v) == increasing {
                    a = m;
                } else {
                    b = m;
                }
            }
            0.5 * (a + b)
        }
    }
}

/// `(b, |cell_a ∩ f^{-1}(cell_b)| / |cell_a|)` for every cell `a`. The
/// flag is false when quadrature was used.
fn map_overlaps(map: &MapSpec, space: PhaseSpace, k: usize) -> (Vec<Vec<(usize, f64)>>, bool) {
    let kf = k as f64;
    let circle = space == PhaseSpace::Circle;
    if !map.is_monotone() {
        let rows = map_replicas(k, |a| {
            let mut row = BTreeMap::new();
            for s in 0..QUADRATURE_SAMPLES {
                let x = (a as f64 + (s as f64 + 0.5) / QUADRATURE_SAMPLES as f64) / kf;
                *row.entry(cell_of(space, k, map.apply_scalar(x))).or_insert(0.0) +=
                    1.0 / QUADRATURE_SAMPLES as f64;
            }
            row.into_iter().collect()
        });
        return (rows, false);
    }
    let rows = map_replicas(k, |a| {
        let lo = a as f64 / kf;
        let hi = (a as f64 + 1.0) / kf;
        let (fa, fb) = (map.lift(lo), map.lift(hi));
        let (vmin, vmax) = if fa <= fb { (fa, fb) } else { (fb, fa) };
        let mut cuts = vec![lo];
        let mut m = (vmin * kf).floor() + 1.0;
        while m / kf < vmax {
            if !circle && (m <= 0.0 || m >= kf) {
                m += 1.0;
                continue;
            }
            cuts.push(inverse_lift(map, m / kf, lo, hi));
            m += 1.0;
        }
        cuts.push(hi);
        cuts.sort_by(f64::total_cmp);
        let mut row: BTreeMap<usize, f64> = BTreeMap::new();
        for w in cuts.windows(2) {
            let len = w[1] - w[0];
            if len > 0.0 {
                let b = cell_of(space, k, map.apply_scalar(0.5 * (w[0] + w[1])));
                *row.entry(b).or_insert(0.0) += len * kf;
            }
        }
        row.into_iter().collect()
    });
    (rows, true)
}

/// Ulam matrix of the transfer operator on `k` equal cells:
/// entry `(a, b) = sum_i p_i |cell_a ∩ f_i^{-1}(cell_b)| / |cell_a|`.
pub fn build_transfer_ulam(sys: &SystemSpec, k: usize) -> Result<UlamOperator> {
    check_cells(sys, k)?;
    let space = sys.space();
    let mut rows: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); k];
    let mut exact = true;
    for (map, p) in sys.maps().iter().zip(sys.probs()) {
        let (ov, ex) = map_overlaps(map, space, k);
        exact &= ex;
        for (row, entries) in rows.iter_mut().zip(ov) {
            for (b, w) in entries {
                *row.entry(b).or_insert(0.0) += p * w;
            }
        }
    }
    Ok(UlamOperator::from_rows(OperatorKind::Transfer, space, k, 1, rows, exact))
}

/// Ulam matrix of the Laplace-Markov operator on symbols x cells: from
/// `(j, a)` to `(i, b)` with weight `p_i |cell_a ∩ f_j^{-1}(cell_b)| / |cell_a|`.
pub fn build_laplace_markov(sys: &SystemSpec, k: usize) -> Result<UlamOperator> {
    check_cells(sys, k)?;
    let space = sys.space();
    let n = sys.len();
    let mut rows = Vec::with_capacity(n * k);
    let mut exact = true;
    for map in sys.maps() {
        let (ov, ex) = map_overlaps(map, space, k);
        exact &= ex;
        for entries in ov {
            let mut row = BTreeMap::new();
            for (i, p) in sys.probs().iter().enumerate() {
                for &(b, w) in &entries {
                    *row.entry(i * k + b).or_insert(0.0) += p * w;
                }
            }
            rows.push(row);
        }
    }
    Ok(UlamOperator::from_rows(OperatorKind::LaplaceMarkov, space, k, n, rows, exact))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeadingEigen {
    pub eigenvalue: f64,
    /// Nonnegative with unit mass.
    pub vector: Vec<f64>,
    /// `‖v P - eigenvalue v‖_1`.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Power iteration on the measure side from the uniform vector.
pub fn leading_eigen(op: &UlamOperator, tol: f64, max_iter: usize) -> LeadingEigen {
    let n = op.dim();
    let mut v = vec![1.0 / n as f64; n];
    let mut eigenvalue = 1.0;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        let w = op.apply_measure(&v);
        let mass: f64 = w.iter().sum();
        eigenvalue = mass / v.iter().sum::<f64>();
        residual = w.iter().zip(&v).map(|(a, b)| (a - eigenvalue * b).abs()).sum();
        iterations += 1;
        if residual <= tol {
            break;
        }
        v = w.iter().map(|x| x / mass).collect();
    }
    LeadingEigen {
        eigenvalue,
        converged: residual <= tol,
        vector: v,
        residual,
        iterations,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumMethod {
    Dense,
    /// Deflated restarted Arnoldi; an estimate, not a certified spectrum.
    ArnoldiEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralReport {
    /// `|lambda_1| >= |lambda_2| >= ...`.
    pub moduli: Vec<f64>,
    /// `(re, im)` in the same order.
    pub eigenvalues: Vec<(f64, f64)>,
    /// `1 - |lambda_2|`.
    pub gap: f64,
    pub method: SpectrumMethod,
}

/// The `m_eigs` eigenvalues of largest modulus.
pub fn spectral_gap(op: &UlamOperator, m_eigs: usize) -> Result<SpectralReport> {
    if m_eigs < 2 {
        return Err(invalid("m_eigs", "must be >= 2"));
    }
    let n = op.dim();
    let m = m_eigs.min(n);
    let (mut eigs, method) = if n <= DENSE_LIMIT {
        (dense_eigenvalues(op.to_dense())?, SpectrumMethod::Dense)
    } else {
        (arnoldi_deflated(op, m), SpectrumMethod::ArnoldiEstimate)
    };
    eigs.sort_by(|a, b| b.norm().total_cmp(&a.norm()).then(b.re.total_cmp(&a.re)));
    eigs.truncate(m);
    let moduli: Vec<f64> = eigs.iter().map(|z| z.norm()).collect();
    let gap = 1.0 - moduli.get(1).copied().unwrap_or(0.0);
    Ok(SpectralReport {
        eigenvalues: eigs.iter().map(|z| (z.re, z.im)).collect(),
        moduli,
        gap,
        method,
    })
}

/// Iteration cap of one Schur decomposition attempt.
const SCHUR_MAX_ITER: usize = 100_000;
/// Relative size below which a subdiagonal entry is deflated.
const SCHUR_EPS: f64 = 1e-13;

/// Eigenvalues via a real Schur decomposition. Unimodular spectra (such
/// as permutations) can stall the QR iteration, so failed attempts are
/// retried on `M + c I`.
fn dense_eigenvalues(m: DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    let n = m.nrows();
    for shift in [0.0, 0.5, 0.3125] {
        let shifted = &m + DMatrix::<f64>::identity(n, n) * shift;
        if let Some(s) = shifted.try_schur(SCHUR_EPS, SCHUR_MAX_ITER) {
            return Ok(s.complex_eigenvalues().iter().map(|z| z - shift).collect());
        }
    }
    Err(Error::Unsupported("Schur iteration did not converge".into()))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Ritz values of the function-side operator with the leading pair
/// `(1, pi)` deflated, prefixed by the leading eigenvalue.
fn arnoldi_deflated(op: &UlamOperator, wanted: usize) -> Vec<Complex<f64>> {
    let n = op.dim();
    let lead = leading_eigen(op, 1e-13, 100_000);
    let pi = lead.vector.clone();
    let apply = |x: &[f64]| -> Vec<f64> {
        let mut y = op.apply_function(x);
        let s: f64 = pi.iter().zip(x).map(|(a, b)| a * b).sum();
        for v in &mut y {
            *v -= lead.eigenvalue * s;
        }
        y
    };
    let krylov = (2 * wanted + 20).min(n);
    // deterministic, generic start vector
    let mut start: Vec<f64> = (0..n).map(|i| ((i as f64 + 1.0) * 0.618_033_988_75).fract() - 0.5).collect();
    let mut ritz = Vec::new();
    for _ in 0..ARNOLDI_RESTARTS {
        let (h, size) = arnoldi(&apply, &start, krylov);
        let hm = DMatrix::from_fn(size, size, |r, c| h[r][c]);
        let Ok(mut ev) = dense_eigenvalues(hm) else {
            break;
        };
        ev.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
        ritz = ev.clone();
        if size < krylov {
            break;
        }
        // exact-shift polynomial filter with the unwanted Ritz values
        let mut v = start.clone();
        let mut k = wanted + 2;
        while k < ev.len() {
            let z = ev[k];
            if z.im.abs() < 1e-14 {
                let av = apply(&v);
                v = av.iter().zip(&v).map(|(a, b)| a - z.re * b).collect();
                k += 1;
            } else {
                let av = apply(&v);
                let aav = apply(&av);
                let (s, p) = (2.0 * z.re, z.norm_sqr());
                v = (0..n).map(|i| aav[i] - s * av[i] + p * v[i]).collect();
                k += 2;
            }
            let nv = norm(&v);
            if nv == 0.0 || !nv.is_finite() {
                break;
            }
            v.iter_mut().for_each(|x| *x /= nv);
        }
        if norm(&v) > 0.0 {
            start = v;
        }
    }
    let mut out = vec![Complex::new(lead.eigenvalue, 0.0)];
    out.extend(ritz);
    out
}

/// Upper Hessenberg matrix of `size` Arnoldi steps.
fn arnoldi<F: Fn(&[f64]) -> Vec<f64>>(apply: &F, start: &[f64], steps: usize) -> (Vec<Vec<f64>>, usize) {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(steps + 1);
    let s = norm(start);
    basis.push(start.iter().map(|x| x / s).collect());
    let mut h = vec![vec![0.0; steps]; steps + 1];
    for j in 0..steps {
        let mut w = apply(&basis[j]);
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            for (i, b) in basis.iter().enumerate() {
                let c: f64 = b.iter().zip(&w).map(|(p, q)| p * q).sum();
                h[i][j] += c;
                w.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let nw = norm(&w);
        h[j + 1][j] = nw;
        if nw < 1e-12 {
            return (h, j + 1);
        }
        basis.push(w.iter().map(|x| x / nw).collect());
    }
    (h, steps)
}

/// Observable on symbols x points: `phi(i, x) = scale_i h(x) + offset_i`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairObservable {
    pub h: Observable,
    pub scales: Vec<f64>,
    pub offsets: Vec<f64>,
}

impl PairObservable {
    /// `phi(i, x) = h(x)`.
    pub fn point(h: Observable) -> Self {
        Self {
            h,
            scales: Vec::new(),
            offsets: Vec::new(),
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::point(Observable::constant(c))
    }

    /// Per-symbol scales and offsets; an empty vector means 1 and 0.
    pub fn new(h: Observable, scales: Vec<f64>, offsets: Vec<f64>) -> Self {
        Self { h, scales, offsets }
    }

    #[inline]
    pub fn eval(&self, i: usize, x: f64) -> f64 {
        let s = self.scales.get(i).copied().unwrap_or(1.0);
        let o = self.offsets.get(i).copied().unwrap_or(0.0);
        s * self.h.eval(x) + o
    }

    fn check_symbols(&self, n: usize) -> Result<()> {
        if (!self.scales.is_empty() && self.scales.len() != n) || (!self.offsets.is_empty() && self.offsets.len() != n) {
            return Err(invalid("phi", format!("per-symbol coefficients must have {n} entries")));
        }
        Ok(())
    }

    /// Values at cell midpoints, indexed like the Laplace-Markov states.
    pub fn on_grid(&self, blocks: usize, k: usize) -> Vec<f64> {
        (0..blocks)
            .flat_map(|j| (0..k).map(move |a| self.eval(j, (a as f64 + 0.5) / k as f64)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QnIdentity {
    pub kernel_value: f64,
    pub monte_carlo_value: f64,
    pub stderr: f64,
    pub z_score: f64,
    /// `|z| < 4`.
    pub pass: bool,
}

/// Largest `n` accepted by [`qn_identity_test`].
pub const QN_MAX_STEPS: usize = 20;

/// `Q^n phi(j, x)` by applying the operator `n` times along every word.
pub fn qn_kernel(sys: &SystemSpec, phi: &PairObservable, j: usize, x: f64, n: usize) -> Result<f64> {
    let words = (sys.len() as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if words > ENUMERATION_BUDGET {
        return Err(Error::EnumerationBudget {
            words,
            budget: ENUMERATION_BUDGET,
        });
    }
    fn rec(sys: &SystemSpec, phi: &PairObservable, j: usize, x: f64, n: usize) -> f64 {
        if n == 0 {
            return phi.eval(j, x);
        }
        let y = sys.apply_1d(j, x);
        sys.probs()
            .iter()
            .enumerate()
            .map(|(i, p)| p * rec(sys, phi, i, y, n - 1))
            .sum()
    }
    Ok(rec(sys, phi, j, x, n))
}

/// Compares [`qn_kernel`] with the skew-product average
/// `E phi(i_n, f_{i_{n-1}} ... f_{i_1}(f_j x))` over `replicas` words.
pub fn qn_identity_test(
    sys: &SystemSpec,
    phi: &PairObservable,
    j: usize,
    x: f64,
    n: usize,
    replicas: usize,
    seed: u64,
) -> Result<QnIdentity> {
    sys.require_one_dimensional()?;
    sys.point(x)?;
    phi.check_symbols(sys.len())?;
    if j >= sys.len() {
        return Err(invalid("j", "symbol out of range"));
    }
    if n == 0 || n > QN_MAX_STEPS {
        return Err(invalid("n", format!("must be in 1..={QN_MAX_STEPS}")));
    }
    if replicas < 2 {
        return Err(invalid("replicas", "must be >= 2"));
    }
    let kernel_value = qn_kernel(sys, phi, j, x, n)?;
    let y0 = sys.apply_1d(j, x);
    let samples: Vec<f64> = map_replicas(replicas, |r| {
        let mut w = sys.word_stream(seed, r);
        let mut y = y0;
        for _ in 1..n {
            y = sys.apply_1d(w.next_symbol(), y);
        }
        phi.eval(w.next_symbol(), y)
    });
    let monte_carlo_value = stats::mean(&samples);
    let stderr = stats::stderr(&samples);
    let gap = kernel_value - monte_carlo_value;
    let z_score = if stderr > 0.0 {
        gap / stderr
    } else if gap.abs() <= 1e-12 * (1.0 + kernel_value.abs()) {
        0.0
    } else {
        gap.signum() * f64::INFINITY
    };
    Ok(QnIdentity {
        kernel_value,
        monte_carlo_value,
        stderr,
        z_score,
        pass: z_score.abs() < 4.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HolderNormEstimate {
    pub sup_norm: f64,
    /// Grid supremum of `|phi(j,x) - phi(j,y)| / d(x,y)^alpha`; a lower
    /// bound for the true seminorm.
    pub seminorm_alpha: f64,
    pub alpha: f64,
    pub grid_k: usize,
}

impl HolderNormEstimate {
    pub fn norm(&self) -> f64 {
        self.sup_norm + self.seminorm_alpha
    }
}

/// Largest grid for [`holder_norm`].
pub const HOLDER_MAX_GRID: usize = 1 << 12;

/// Sup norm and Hölder seminorm of `phi` over all pairs of a uniform grid
/// of `grid_k` points, for each of `n_symbols` symbols.
pub fn holder_norm(
    phi: &PairObservable,
    n_symbols: usize,
    space: PhaseSpace,
    alpha: f64,
    grid_k: usize,
) -> Result<HolderNormEstimate> {
    crate::geometry::check_alpha(alpha)?;
    if !space.is_one_dimensional() {
        return Err(Error::Unsupported("Hölder norms need a 1-D phase space".into()));
    }
    if !(2..=HOLDER_MAX_GRID).contains(&grid_k) {
        return Err(invalid("grid_k", format!("must be in 2..={HOLDER_MAX_GRID}")));
    }
    phi.check_symbols(n_symbols)?;
    let step = if space == PhaseSpace::Circle {
        1.0 / grid_k as f64
    } else {
        1.0 / (grid_k - 1) as f64
    };
    let xs: Vec<f64> = (0..grid_k).map(|a| a as f64 * step).collect();
    let per: Vec<(f64, f64)> = map_replicas(n_symbols, |j| {
        let vals: Vec<f64> = xs.iter().map(|x| phi.eval(j as usize, *x)).collect();
        let sup = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut semi = 0.0f64;
        for a in 0..grid_k {
            for b in a + 1..grid_k {
                let d = space.distance_1d(xs[a], xs[b]);
                semi = semi.max((vals[a] - vals[b]).abs() / snowflake_unchecked(d, alpha));
            }
        }
        (sup, semi)
    });
    Ok(HolderNormEstimate {
        sup_norm: per.iter().fold(0.0, |m, p| m.max(p.0)),
        seminorm_alpha: per.iter().fold(0.0, |m, p| m.max(p.1)),
        alpha,
        grid_k,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BiLipschitzBound {
    /// `L` with `d/L <= d(f_j x, f_j y) <= L d` on the grid.
    pub l: f64,
    /// From derivatives; otherwise from secants between grid neighbors.
    pub from_derivatives: bool,
}

/// Grid maximum of `|f_j'|` and `1/|f_j'|` (or of secant ratios when
/// derivatives are missing).
pub fn bi_lipschitz_bound(sys: &SystemSpec, grid: usize) -> Result<BiLipschitzBound> {
    sys.require_one_dimensional()?;
    if grid < 2 {
        return Err(invalid("grid", "must be >= 2"));
    }
    let space = sys.space();
    let from_derivatives = sys.has_derivatives();
    let mut l = 1.0f64;
    for j in 0..sys.len() {
        for a in 0..grid {
            let x = a as f64 / grid as f64;
            let r = if from_derivatives {
                sys.derivative_1d(j, x)
            } else {
                let y = (a as f64 + 1.0) / grid as f64;
                let y = if space == PhaseSpace::Circle { y } else { y.min(1.0) };
                let d = space.distance_1d(x, y);
                space.distance_1d(sys.apply_1d(j, x), sys.apply_1d(j, y)) / d
            };
            l = l.max(r).max(1.0 / r);
        }
    }
    Ok(BiLipschitzBound { l, from_derivatives })
}

/// `‖Q^n phi - (int phi d pi) 1‖_inf` on the grid for `n = 0..=n_max`,
/// with `pi` the leading measure-side eigenvector.
pub fn operator_decay(op: &UlamOperator, phi_grid: &[f64], n_max: usize) -> Result<Vec<f64>> {
    if phi_grid.len() != op.dim() {
        return Err(invalid("phi_grid", format!("need {} values", op.dim())));
    }
    let pi = leading_eigen(op, 1e-13, 100_000).vector;
    let mean: f64 = pi.iter().zip(phi_grid).map(|(a, b)| a * b).sum();
    let mut f = phi_grid.to_vec();
    let mut out = Vec::with_capacity(n_max + 1);
    for step in 0..=n_max {
        out.push(f.iter().fold(0.0f64, |m, v| m.max((v - mean).abs())));
        if step < n_max {
            f = op.apply_function(&f);
        }
    }
    Ok(out)
}

/// Midpoint samples per cell in [`ulam_gamma`].
pub const GAMMA_CELL_SAMPLES: usize = 16;

/// `int sum_i p_i log|f_i'| d nu` with `nu` the Ulam stationary vector.
pub fn ulam_gamma(sys: &SystemSpec, k: usize) -> Result<f64> {
    sys.require_derivatives()?;
    let op = build_transfer_ulam(sys, k)?;
    let pi = leading_eigen(&op, 1e-13, 100_000).vector;
    let mut acc = 0.0;
    for (a, w) in pi.iter().enumerate() {
        let mut cell = 0.0;
        for s in 0..GAMMA_CELL_SAMPLES {
            let x = (a as f64 + (s as f64 + 0.5) / GAMMA_CELL_SAMPLES as f64) / k as f64;
            cell += sys
                .probs()
                .iter()
                .enumerate()
                .map(|(i, p)| p * sys.log_derivative_1d(i, x))
                .sum::<f64>();
        }
        acc += w * cell / GAMMA_CELL_SAMPLES as f64;
    }
    Ok(acc)
}

/// One case of the operator identity battery.
#[derive(Debug, Clone)]
pub struct QnCase {
    pub label: &'static str,
    pub system: SystemSpec,
    pub phi: PairObservable,
    pub j: usize,
    pub x: f64,
    pub n: usize,
}

/// Twelve fixed `(system, phi, j, x, n)` cases.
pub fn qn_battery() -> Result<Vec<QnCase>> {
    use crate::gallery;
    let coord = |s: &SystemSpec| Observable::coordinate(s.space());
    let ba = gallery::binary_affine();
    let sp = gallery::slope_pair();
    let an = gallery::anton();
    let mp = gallery::moebius_pair();
    let tr = gallery::two_rotations();
    let cos_c = Observable::cos2pi(PhaseSpace::Circle)?;
    let sin_c = Observable::new(crate::limit_laws::ObservableKind::Sin2pi, 1.0, std::f64::consts::TAU, PhaseSpace::Circle)?;
    let case = |label, system: &SystemSpec, phi, j, x, n| QnCase {
        label,
        system: system.clone(),
        phi,
        j,
        x,
        n,
    };
    Ok(vec![
        case("binary_affine_constant", &ba, PairObservable::constant(1.0), 0, 0.3, 5),
        case("binary_affine_coordinate_n3", &ba, PairObservable::point(coord(&ba)?), 0, 0.0, 3),
        case("binary_affine_coordinate_n1", &ba, PairObservable::point(coord(&ba)?), 1, 0.7, 1),
        case(
            "binary_affine_symbol_weighted",
            &ba,
            PairObservable::new(coord(&ba)?, vec![1.0, -2.0], vec![0.0, 0.5]),
            1,
            0.2,
            8,
        ),
        case("slope_pair_coordinate", &sp, PairObservable::point(coord(&sp)?), 0, 0.9, 12),
        case(
            "slope_pair_symbol_offset",
            &sp,
            PairObservable::new(Observable::constant(0.0), vec![], vec![1.0, 3.0]),
            1,
            0.4,
            6,
        ),
        case("anton_cos", &an, PairObservable::point(cos_c.clone()), 0, 0.3, 6),
        case("anton_sin_n1", &an, PairObservable::point(sin_c.clone()), 2, 0.8, 1),
        case(
            "anton_symbol_weighted",
            &an,
            PairObservable::new(cos_c.clone(), vec![1.0, 0.5, -1.0], vec![]),
            1,
            0.55,
            9,
        ),
        case("moebius_pair_cos", &mp, PairObservable::point(cos_c.clone()), 0, 0.1, 10),
        case("moebius_pair_sin", &mp, PairObservable::point(sin_c), 1, 0.6, 15),
        case("two_rotations_cos", &tr, PairObservable::point(cos_c), 1, 0.25, 12),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gallery;

    fn one_map(m: MapSpec) -> SystemSpec {
        SystemSpec::new(vec![m], vec![1.0]).unwrap()
    }

    #[test]
    fn binary_affine_rows_and_uniform_vector() {
        let op = build_transfer_ulam(&gallery::binary_affine(), 4).unwrap();
        assert!(op.is_exact());
        for a in 0..4 {
            assert_eq!(op.get(a, a / 2), 0.5);
            assert_eq!(op.get(a, 2 + a / 2), 0.5);
        }
        let big = build_transfer_ulam(&gallery::binary_affine(), 256).unwrap();
        let e = leading_eigen(&big, 1e-14, 1000);
        assert!(e.vector.iter().all(|v| (v - 1.0 / 256.0).abs() < 1e-10));
        assert!((e.eigenvalue - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rotation_and_identity_matrices() {
        let op = build_transfer_ulam(&one_map(MapSpec::rotation(0.25)), 4).unwrap();
        for a in 0..4 {
            assert_eq!(op.get(a, (a + 1) % 4), 1.0);
        }
        let e = leading_eigen(&op, 1e-14, 10);
        assert!(e.vector.iter().all(|v| *v == 0.25));
        let id = build_transfer_ulam(&one_map(MapSpec::affine(1.0, 0.0)), 8).unwrap();
        for a in 0..8 {
            assert_eq!(id.row(a).collect::<Vec<_>>(), vec![(a, 1.0)]);
        }
        let s = spectral_gap(&op, 4).unwrap();
        assert!(s.moduli.iter().all(|m| (m - 1.0).abs() < 1e-10));
        assert!(s.gap.abs() < 1e-10);
    }

    #[test]
    fn contraction_concentrates_mass() {
        let k = 64;
        let op = build_transfer_ulam(&gallery::single_contraction(), k).unwrap();
        let e = leading_eigen(&op, 1e-13, 1000);
        assert!(e.vector[0] + e.vector[1] >= 1.0 - 1.0 / k as f64);
    }

    #[test]
    fn rows_are_stochastic() {
        for id in ["binary_affine", "slope_pair", "anton", "two_rotations", "moebius_pair"] {
            let sys = gallery::system(id).unwrap();
            for op in [build_transfer_ulam(&sys, 128).unwrap(), build_laplace_markov(&sys, 64).unwrap()] {
                assert!(op.row_sums().iter().all(|s| (s - 1.0).abs() < 1e-10), "{id}");
            }
        }
    }

    #[test]
    fn laplace_markov_structure() {
        let sys = gallery::binary_affine();
        let q = build_laplace_markov(&sys, 16).unwrap();
        let v: Vec<f64> = vec![0.5 / 16.0; 32];
        let w = q.apply_measure(&v);
        assert!(w.iter().zip(&v).all(|(a, b)| (a - b).abs() < 1e-15));
        let single = gallery::single_contraction();
        let t = build_transfer_ulam(&single, 16).unwrap();
        let q1 = build_laplace_markov(&single, 16).unwrap();
        assert_eq!(t.to_dense(), q1.to_dense());
    }

    #[test]
    fn duality_between_sides() {
        let sys = gallery::anton();
        let op = build_transfer_ulam(&sys, 64).unwrap();
        let u = vec![1.0 / 64.0; 64];
        let h: Vec<f64> = (0..64).map(|a| ((a * 37 % 11) as f64).sin()).collect();
        let lhs: f64 = op.apply_measure(&u).iter().zip(&h).map(|(a, b)| a * b).sum();
        let rhs: f64 = op.apply_function(&h).iter().zip(&u).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-14);
    }

    #[test]
    fn qn_base_cases() {
        let sys = gallery::binary_affine();
        let one = qn_identity_test(&sys, &PairObservable::constant(1.0), 0, 0.4, 4, 100, 1).unwrap();
        assert_eq!((one.kernel_value, one.monte_carlo_value), (1.0, 1.0));
        let phi = PairObservable::new(Observable::coordinate(PhaseSpace::Interval).unwrap(), vec![1.0, 3.0], vec![]);
        let k1 = qn_kernel(&sys, &phi, 1, 0.6, 1).unwrap();
        let y = 0.5 * 0.6 + 0.5;
        assert_eq!(k1, 0.5 * y + 0.5 * 3.0 * y);
        // E[X_3] from f_0(0) = 0 over the four words of length two
        let k3 = qn_kernel(&sys, &PairObservable::point(phi.h.clone()), 0, 0.0, 3).unwrap();
        let oracle: f64 = [0.0, 0.5, 0.25, 0.75].iter().sum::<f64>() / 4.0;
        assert_eq!(k3, oracle);
    }

    #[test]
    fn qn_battery_passes() {
        for (s, c) in qn_battery().unwrap().iter().enumerate() {
            let r = qn_identity_test(&c.system, &c.phi, c.j, c.x, c.n, 20_000, s as u64).unwrap();
            assert!(r.pass, "{}: {r:?}", c.label);
        }
    }

    #[test]
    fn holder_norm_examples() {
        let c = holder_norm(&PairObservable::constant(2.0), 2, PhaseSpace::Circle, 1.0, 64).unwrap();
        assert_eq!(c.seminorm_alpha, 0.0);
        assert_eq!(c.sup_norm, 2.0);
        let cos = PairObservable::point(Observable::cos2pi(PhaseSpace::Circle).unwrap());
        let e = holder_norm(&cos, 1, PhaseSpace::Circle, 1.0, 256).unwrap();
        assert!(e.seminorm_alpha >= 6.0 && e.seminorm_alpha <= std::f64::consts::TAU);
        // the coordinate is not Lipschitz on the circle: the wrap pair dominates
        let x = PairObservable::point(Observable::coordinate(PhaseSpace::Interval).unwrap());
        let w = holder_norm(&x, 1, PhaseSpace::Circle, 1.0, 128).unwrap();
        assert!((w.seminorm_alpha - 127.0).abs() < 1e-9);
    }

    #[test]
    fn gamma_from_ulam_vector() {
        let g = ulam_gamma(&gallery::slope_pair(), 1 << 12).unwrap();
        assert!((g + 1.5 * std::f64::consts::LN_2).abs() < 1e-12);
        let bl = bi_lipschitz_bound(&gallery::slope_pair(), 64).unwrap();
        assert_eq!(bl.l, 4.0);
    }

    #[test]
    fn decay_is_geometric_for_binary_affine() {
        let sys = gallery::binary_affine();
        let q = build_laplace_markov(&sys, 64).unwrap();
        let phi = PairObservable::point(Observable::coordinate(PhaseSpace::Interval).unwrap());
        let d = operator_decay(&q, &phi.on_grid(2, 64), 5).unwrap();
        // one step maps phi to x -> f_j(x), with the same spread
        for w in d[1..].windows(2) {
            assert!(w[1] <= 0.5 * w[0] + 1e-12);
        }
    }

    #[test]
    fn arnoldi_agrees_with_dense_solve() {
        let op = build_transfer_ulam(&gallery::anton(), 256).unwrap();
        let dense = spectral_gap(&op, 3).unwrap();
        let mut ev = arnoldi_deflated(&op, 3);
        ev.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
        assert!((ev[1].norm() - dense.moduli[1]).abs() < 1e-6, "{ev:?} {dense:?}");
    }
}
