//! Quenched limit laws for Hölder observables along random orbits: law of
//! large numbers gaps, asymptotic variance, a Kolmogorov-Smirnov check of
//! the normalized sums, and the iterated-logarithm statistic.
//!
//! Sums are `S_n = sum_{k<n} h(X_k)`. All accumulations subtract a
//! reference value first, so a constant observable yields exact zeros.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::{invalid, Error, Result};
use crate::geometry::{snowflake_unchecked, PhaseSpace};
use crate::measures::estimate_stationary;
use crate::parallel::map_replicas;
use crate::stats;
use crate::systems::SystemSpec;
use crate::words::{derive_seed, SymbolSource};

/// Base function of an observable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObservableKind {
    /// `h(x) = x`.
    Coordinate,
    /// `h(x) = cos(2 pi x)`.
    Cos2pi,
    /// `h(x) = sin(2 pi x)`.
    Sin2pi,
    /// Piecewise-linear interpolation of `values` at the knots
    /// `j / (m - 1)`, `j = 0..m`.
    CustomTabulated { values: Vec<f64> },
    Constant { value: f64 },
    /// Control functional `1{i_{k+1} = symbol}`: reads the symbol about to
    /// be applied instead of the point, so its summands are i.i.d.
    SymbolIndicator { symbol: usize },
}

/// A real observable `scale * base(x) + offset` with a declared Hölder
/// bound `|h(x) - h(y)| <= holder_const d(x,y)^holder_alpha`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Observable {
    pub kind: ObservableKind,
    pub holder_alpha: f64,
    pub holder_const: f64,
    pub scale: f64,
    pub offset: f64,
}

/// Random pairs used by the Hölder spot check.
pub const HOLDER_CHECK_PAIRS: usize = 10_000;

impl Observable {
    /// Builds an observable and spot-checks its declared Hölder bound on
    /// [`HOLDER_CHECK_PAIRS`] pairs of the given 1-D space.
    pub fn new(kind: ObservableKind, holder_alpha: f64, holder_const: f64, space: PhaseSpace) -> Result<Self> {
        crate::geometry::check_alpha(holder_alpha)?;
        if !(holder_const >= 0.0) || !holder_const.is_finite() {
            return Err(invalid("holder_const", "must be finite and nonnegative"));
        }
        if let ObservableKind::CustomTabulated { values } = &kind {
            if values.len() < 2 || values.iter().any(|v| !v.is_finite()) {
                return Err(invalid("values", "need at least two finite values"));
            }
        }
        let h = Self {
            kind,
            holder_alpha,
            holder_const,
            scale: 1.0,
            offset: 0.0,
        };
        h.spot_check(space)?;
        Ok(h)
    }

    pub fn coordinate(space: PhaseSpace) -> Result<Self> {
        Self::new(ObservableKind::Coordinate, 1.0, 1.0, space)
    }

    pub fn cos2pi(space: PhaseSpace) -> Result<Self> {
        Self::new(ObservableKind::Cos2pi, 1.0, TAU, space)
    }

    pub fn constant(value: f64) -> Self {
        Self {
            kind: ObservableKind::Constant { value },
            holder_alpha: 1.0,
            holder_const: 0.0,
            scale: 1.0,
            offset: 0.0,
        }
    }

    pub fn symbol_indicator(symbol: usize) -> Self {
        Self {
            kind: ObservableKind::SymbolIndicator { symbol },
            holder_alpha: 1.0,
            holder_const: 0.0,
            scale: 1.0,
            offset: 0.0,
        }
    }

    /// `a h + b`.
    pub fn affine(&self, a: f64, b: f64) -> Self {
        Self {
            kind: self.kind.clone(),
            holder_alpha: self.holder_alpha,
            holder_const: self.holder_const * a.abs(),
            scale: self.scale * a,
            offset: self.offset * a + b,
        }
    }

    pub fn depends_on_symbol(&self) -> bool {
        matches!(self.kind, ObservableKind::SymbolIndicator { .. })
    }

    fn base(&self, x: f64, next: usize) -> f64 {
        match &self.kind {
            ObservableKind::Coordinate => x,
            ObservableKind::Cos2pi => (TAU * x).cos(),
            ObservableKind::Sin2pi => (TAU * x).sin(),
            ObservableKind::CustomTabulated { values } => {
                let m = values.len() - 1;
                let t = (x.clamp(0.0, 1.0) * m as f64).min(m as f64);
                let j = (t.floor() as usize).min(m - 1);
                let f = t - j as f64;
                values[j] * (1.0 - f) + values[j + 1] * f
            }
            ObservableKind::Constant { value } => *value,
            ObservableKind::SymbolIndicator { symbol } => f64::from(u8::from(next == *symbol)),
        }
    }

    /// `h(x)` for point observables.
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.eval_step(x, usize::MAX)
    }

    /// Summand at state `x` when symbol `next` is applied next.
    #[inline]
    pub fn eval_step(&self, x: f64, next: usize) -> f64 {
        self.scale * self.base(x, next) + self.offset
    }

    /// `E[h]` under `m x mu`: symbol-dependent summands are averaged over
    /// the next symbol.
    pub fn integrate(&self, m: &crate::measures::EmpiricalMeasure, probs: &[f64]) -> Result<f64> {
        let c = m
            .coords()
            .ok_or_else(|| Error::Unsupported("observables on projective space".into()))?;
        let w = m.weights();
        let h0 = self.eval_step(c[0], 0);
        let mut acc = 0.0;
        for (x, wx) in c.iter().zip(w) {
            let v = if self.depends_on_symbol() {
                probs
                    .iter()
                    .enumerate()
                    .map(|(i, p)| p * (self.eval_step(*x, i) - h0))
                    .sum::<f64>()
            } else {
                self.eval(*x) - h0
            };
            acc += wx * v;
        }
        Ok(h0 + acc)
    }

    fn spot_check(&self, space: PhaseSpace) -> Result<()> {
        if self.depends_on_symbol() {
            return Ok(());
        }
        if !space.is_one_dimensional() {
            return Err(Error::Unsupported("observables need a 1-D phase space".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x401d);
        let wrap = space == PhaseSpace::Circle;
        for k in 0..HOLDER_CHECK_PAIRS {
            let (x, y) = match k % 4 {
                0 | 1 => (rng.random::<f64>(), rng.random::<f64>()),
                2 => {
                    let x: f64 = rng.random();
                    let d = 10f64.powf(-rng.random_range(1.0..8.0));
                    let y = if wrap {
                        crate::geometry::reduce_unit(x + d)
                    } else if x + d <= 1.0 {
                        x + d
                    } else {
                        x - d
                    };
                    (x, y)
                }
                _ => {
                    // pairs straddling the ends of [0, 1)
                    let d = 10f64.powf(-rng.random_range(1.0..8.0)) / 2.0;
                    (d, 1.0 - d)
                }
            };
            let dist = space.distance_1d(x, y);
            let lhs = (self.eval(x) - self.eval(y)).abs();
            let rhs = self.holder_const * snowflake_unchecked(dist, self.holder_alpha);
            if lhs > rhs * (1.0 + 1e-9) + 1e-12 {
                return Err(invalid(
                    "holder_const",
                    format!(
                        "|h({x}) - h({y})| = {lhs:.6e} exceeds {:.6e} d^{} = {rhs:.6e}",
                        self.holder_const, self.holder_alpha
                    ),
                ));
            }
        }
        Ok(())
    }
}

/// Sums `sum_{k < c} (h(X_k) - center)` at each checkpoint `c`
/// (ascending), along `word` from `x0`.
fn checkpoint_sums<S: SymbolSource>(
    sys: &SystemSpec,
    h: &Observable,
    x0: f64,
    word: &mut S,
    checkpoints: &[usize],
    center: f64,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut x = x0;
    let mut acc = 0.0;
    let mut k = 0;
    for &c in checkpoints {
        while k < c {
            let s = word.next_symbol();
            acc += h.eval_step(x, s) - center;
            x = sys.apply_1d(s, x);
            k += 1;
        }
        out.push(acc);
    }
    out
}

/// About `count` geometric checkpoints from `start` to `n` inclusive.
pub fn geometric_checkpoints(start: usize, n: usize, count: usize) -> Vec<usize> {
    let start = start.clamp(1, n.max(1));
    let count = count.max(1);
    let ratio = (n as f64 / start as f64).powf(1.0 / count.saturating_sub(1).max(1) as f64);
    let mut out: Vec<usize> = (0..count)
        .map(|j| ((start as f64) * ratio.powi(j as i32)).round() as usize)
        .map(|c| c.clamp(start, n))
        .collect();
    out.push(n);
    out.sort_unstable();
    out.dedup();
    out
}

fn require_scalar(sys: &SystemSpec) -> Result<()> {
    sys.require_one_dimensional()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SllnReport {
    pub nu_hat: f64,
    /// `(n_k, S_{n_k}/n_k, |S_{n_k}/n_k - nu_hat|)`.
    pub checkpoints: Vec<(usize, f64, f64)>,
    pub sigma2_hat: f64,
    /// `3 sqrt(sigma2_hat / n)`.
    pub threshold: f64,
    pub pass: bool,
}

/// Stationary burn-in used for the reference mean.
pub const NU_BURN_IN: usize = 1000;
/// Minimum orbit length of the stationary estimate behind `nu_hat`.
pub const NU_MIN_SAMPLES: usize = 1_000_000;

/// Law-of-large-numbers gaps of one orbit from `x0` against `nu_hat`,
/// the mean of `h` under an independent stationary estimate.
pub fn slln_check(
    sys: &SystemSpec,
    h: &Observable,
    x0: f64,
    n: usize,
    checkpoints: usize,
    seed: u64,
) -> Result<SllnReport> {
    require_scalar(sys)?;
    sys.point(x0)?;
    if n == 0 {
        return Err(invalid("n", "must be >= 1"));
    }
    let m = estimate_stationary(sys, NU_BURN_IN, (4 * n).max(NU_MIN_SAMPLES), derive_seed(seed, 0x4e))?;
    let nu_hat = h.integrate(&m, sys.probs())?;
    let cps = geometric_checkpoints(10.min(n), n, checkpoints);
    let mut word = sys.word_stream(seed, 0);
    let sums = checkpoint_sums(sys, h, x0, &mut word, &cps, nu_hat);
    let rows: Vec<(usize, f64, f64)> = cps
        .iter()
        .zip(&sums)
        .map(|(&c, s)| (c, nu_hat + s / c as f64, (s / c as f64).abs()))
        .collect();
    let sig = estimate_sigma2(sys, h, n.clamp(64, 4096), 64, derive_seed(seed, 0x52))?;
    let threshold = 3.0 * (sig.sigma2 / n as f64).sqrt();
    let pass = rows.last().expect("n >= 1").2 < threshold;
    Ok(SllnReport {
        nu_hat,
        checkpoints: rows,
        sigma2_hat: sig.sigma2,
        threshold,
        pass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sigma2Estimate {
    pub sigma2: f64,
    pub stderr: f64,
    pub nu_hat: f64,
    pub batch_sigma2: f64,
    pub batch_stderr: f64,
    /// Replica and batch-means estimates differ by more than three
    /// combined standard errors.
    pub disagreement: bool,
    pub n: usize,
    pub replicas: usize,
}

/// Batches per replica in the batch-means cross-check.
pub const BATCHES: usize = 16;
/// Stationary atoms drawn per replica when choosing initial points.
const START_THINNING: usize = 16;

/// `sigma^2(h) = lim E(S_n - n nu)^2 / n` with initial points drawn from
/// an estimated stationary measure, plus a batch-means cross-estimate.
pub fn estimate_sigma2(sys: &SystemSpec, h: &Observable, n: usize, replicas: usize, seed: u64) -> Result<Sigma2Estimate> {
    require_scalar(sys)?;
    if replicas < 30 {
        return Err(invalid("replicas", "must be >= 30"));
    }
    if n < BATCHES {
        return Err(invalid("n", format!("must be >= {BATCHES}")));
    }
    let m = estimate_stationary(sys, NU_BURN_IN, replicas * START_THINNING, derive_seed(seed, 0x53))?;
    let starts = m.coords().expect("1-D");
    let center = h.eval_step(starts[0], 0);
    let len = n / BATCHES;
    let mut cps: Vec<usize> = (1..=BATCHES).map(|b| b * len).collect();
    if *cps.last().expect("nonempty") != n {
        cps.push(n);
    }
    let per: Vec<Vec<f64>> = map_replicas(replicas, |r| {
        let mut word = sys.word_stream(seed, r);
        checkpoint_sums(sys, h, starts[r as usize * START_THINNING], &mut word, &cps, center)
    });
    let totals: Vec<f64> = per.iter().map(|v| *v.last().expect("nonempty")).collect();
    let mean_total = stats::mean(&totals);
    let nu_hat = center + mean_total / n as f64;
    let sq: Vec<f64> = totals
        .iter()
        .map(|t| (t - mean_total).powi(2) / n as f64)
        .collect();
    let r = replicas as f64;
    let sigma2 = sq.iter().sum::<f64>() / (r - 1.0);
    let stderr = stats::variance(&sq).sqrt() / r.sqrt();
    // batch means, centered on the pooled mean
    let drift = (nu_hat - center) * len as f64;
    let batch_per_rep: Vec<f64> = per
        .iter()
        .map(|v| {
            let mut prev = 0.0;
            let mut acc = 0.0;
            for &vb in &v[..BATCHES] {
                let s = vb - prev;
                prev = vb;
                acc += (s - drift).powi(2) / len as f64;
            }
            acc / BATCHES as f64
        })
        .collect();
    let batch_sigma2 = stats::mean(&batch_per_rep);
    let batch_stderr = stats::stderr(&batch_per_rep);
    let combined = (stderr.powi(2) + batch_stderr.powi(2)).sqrt();
    Ok(Sigma2Estimate {
        sigma2,
        stderr,
        nu_hat,
        batch_sigma2,
        batch_stderr,
        disagreement: (sigma2 - batch_sigma2).abs() > 3.0 * combined,
        n,
        replicas,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum CltVerdict {
    Pass,
    Fail,
    /// Zero plug-in variance; `ok` when every centered sum vanishes.
    DegenerateNormal { ok: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CltReport {
    pub ks_stat: f64,
    pub threshold: f64,
    pub verdict: CltVerdict,
    pub nu_hat: f64,
    pub sigma2_hat: f64,
    /// `(S_n - n nu_hat) / sqrt(n sigma2_hat)` per replica.
    pub normalized: Vec<f64>,
    pub n: usize,
    pub replicas: usize,
}

impl CltReport {
    pub fn pass(&self) -> bool {
        matches!(self.verdict, CltVerdict::Pass | CltVerdict::DegenerateNormal { ok: true })
    }
}

/// Plug-in variance below which the normalized sums are degenerate.
pub const DEGENERATE_VARIANCE: f64 = 1e-12;

/// Kolmogorov-Smirnov distance between the normalized sums of `replicas`
/// independent words from the fixed point `x0` and the standard normal.
/// The threshold is `1.63/sqrt(replicas) + 0.01`.
pub fn clt_test(sys: &SystemSpec, h: &Observable, x0: f64, n: usize, replicas: usize, seed: u64) -> Result<CltReport> {
    require_scalar(sys)?;
    sys.point(x0)?;
    if replicas < 30 {
        return Err(invalid("replicas", "must be >= 30"));
    }
    if n == 0 {
        return Err(invalid("n", "must be >= 1"));
    }
    let center = h.eval_step(x0, 0);
    let totals: Vec<f64> = map_replicas(replicas, |r| {
        let mut word = sys.word_stream(seed, r);
        checkpoint_sums(sys, h, x0, &mut word, &[n], center)[0]
    });
    let mean_total = stats::mean(&totals);
    let nu_hat = center + mean_total / n as f64;
    let sigma2_hat = stats::variance(&totals) / n as f64;
    let threshold = 1.63 / (replicas as f64).sqrt() + 0.01;
    let nf = n as f64;
    if sigma2_hat < DEGENERATE_VARIANCE {
        let centered: Vec<f64> = totals.iter().map(|t| (t - mean_total) / nf.sqrt()).collect();
        let ok = centered.iter().all(|v| v.abs() < 1e-9);
        return Ok(CltReport {
            ks_stat: 0.0,
            threshold,
            verdict: CltVerdict::DegenerateNormal { ok },
            nu_hat,
            sigma2_hat,
            normalized: centered,
            n,
            replicas,
        });
    }
    let scale = (nf * sigma2_hat).sqrt();
    let normalized: Vec<f64> = totals.iter().map(|t| (t - mean_total) / scale).collect();
    let ks_stat = stats::ks_statistic(&normalized, stats::standard_normal_cdf);
    Ok(CltReport {
        ks_stat,
        threshold,
        verdict: if ks_stat < threshold {
            CltVerdict::Pass
        } else {
            CltVerdict::Fail
        },
        nu_hat,
        sigma2_hat,
        normalized,
        n,
        replicas,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LilReport {
    /// Per replica: `max_c (S_c - c nu_hat) / sqrt(2 c log log c sigma2_hat)`.
    pub statistics: Vec<f64>,
    pub median: f64,
    pub nu_hat: f64,
    pub sigma2_hat: f64,
    pub checkpoints: Vec<usize>,
    /// Median within `[0.5, 1.5]`.
    pub pass: bool,
}

/// First checkpoint of the iterated-logarithm statistic.
pub const LIL_START: usize = 100;
/// Ratio between consecutive checkpoints.
pub const LIL_RATIO: f64 = 1.05;

/// Replica distribution of the running maximum of the normalized
/// iterated-logarithm statistic over geometric checkpoints up to `n_max`.
pub fn lil_statistic(
    sys: &SystemSpec,
    h: &Observable,
    x0: f64,
    n_max: usize,
    seed: u64,
    replicas: usize,
) -> Result<LilReport> {
    require_scalar(sys)?;
    sys.point(x0)?;
    if n_max < 10_000 {
        return Err(invalid("n_max", "must be >= 10^4"));
    }
    if replicas == 0 {
        return Err(invalid("replicas", "must be >= 1"));
    }
    let mut cps = Vec::new();
    let mut c = LIL_START as f64;
    while (c as usize) < n_max {
        let k = c.round() as usize;
        if cps.last() != Some(&k) {
            cps.push(k);
        }
        c *= LIL_RATIO;
    }
    cps.push(n_max);
    let center = h.eval_step(x0, 0);
    let per: Vec<Vec<f64>> = map_replicas(replicas, |r| {
        let mut word = sys.word_stream(seed, r);
        checkpoint_sums(sys, h, x0, &mut word, &cps, center)
    });
    let finals: Vec<f64> = per.iter().map(|v| *v.last().expect("nonempty")).collect();
    let drift = stats::mean(&finals) / n_max as f64;
    let nu_hat = center + drift;
    let sig = estimate_sigma2(sys, h, 4096, 256, derive_seed(seed, 0x11))?;
    let sigma2_hat = sig.sigma2;
    let statistics: Vec<f64> = per
        .iter()
        .map(|v| {
            if sigma2_hat < DEGENERATE_VARIANCE {
                return 0.0;
            }
            cps.iter()
                .zip(v)
                .map(|(&c, s)| {
                    let cf = c as f64;
                    (s - cf * drift) / (2.0 * cf * cf.ln().ln() * sigma2_hat).sqrt()
                })
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let median = stats::median(&statistics);
    Ok(LilReport {
        pass: (0.5..=1.5).contains(&median),
        statistics,
        median,
        nu_hat,
        sigma2_hat,
        checkpoints: cps,
    })
}

/// Summary of the limit laws for one observable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitLawReport {
    pub nu_h: f64,
    pub sigma2: f64,
    pub sigma2_stderr: f64,
    pub ks_stat: f64,
    pub ks_threshold: f64,
    pub clt_pass: bool,
    pub lil_stat: f64,
    pub lil_pass: bool,
    pub n: usize,
    pub replicas: usize,
    pub lil_n_max: usize,
    pub lil_replicas: usize,
    pub seed: u64,
}

/// Runs [`estimate_sigma2`], [`clt_test`] and [`lil_statistic`] with
/// seeds derived from `seed`.
#[allow(clippy::too_many_arguments)]
pub fn limit_law_report(
    sys: &SystemSpec,
    h: &Observable,
    x0: f64,
    n: usize,
    replicas: usize,
    lil_n_max: usize,
    lil_replicas: usize,
    seed: u64,
) -> Result<LimitLawReport> {
    let sig = estimate_sigma2(sys, h, n, replicas, derive_seed(seed, 1))?;
    let clt = clt_test(sys, h, x0, n, replicas, derive_seed(seed, 2))?;
    let lil = lil_statistic(sys, h, x0, lil_n_max, derive_seed(seed, 3), lil_replicas)?;
    Ok(LimitLawReport {
        nu_h: sig.nu_hat,
        sigma2: sig.sigma2,
        sigma2_stderr: sig.stderr,
        ks_stat: clt.ks_stat,
        ks_threshold: clt.threshold,
        clt_pass: clt.pass(),
        lil_stat: lil.median,
        lil_pass: lil.pass,
        n,
        replicas,
        lil_n_max,
        lil_replicas,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gallery;

    #[test]
    fn holder_spot_check() {
        assert!(Observable::coordinate(PhaseSpace::Interval).is_ok());
        assert!(Observable::coordinate(PhaseSpace::Circle).is_err());
        assert!(Observable::cos2pi(PhaseSpace::Circle).is_ok());
        assert!(Observable::new(ObservableKind::Cos2pi, 1.0, 5.0, PhaseSpace::Circle).is_err());
        let tab = ObservableKind::CustomTabulated {
            values: vec![0.0, 1.0, 0.0],
        };
        assert!(Observable::new(tab.clone(), 1.0, 2.0, PhaseSpace::Circle).is_ok());
        assert!(Observable::new(tab, 1.0, 1.9, PhaseSpace::Circle).is_err());
    }

    #[test]
    fn tabulated_interpolates() {
        let h = Observable::new(
            ObservableKind::CustomTabulated {
                values: vec![0.0, 2.0, 1.0],
            },
            1.0,
            4.0,
            PhaseSpace::Interval,
        )
        .unwrap();
        assert_eq!(h.eval(0.25), 1.0);
        assert_eq!(h.eval(0.75), 1.5);
        assert_eq!(h.eval(1.0), 1.0);
    }

    #[test]
    fn checkpoints_are_geometric() {
        let c = geometric_checkpoints(10, 100_000, 5);
        assert_eq!(c, vec![10, 100, 1000, 10_000, 100_000]);
    }

    #[test]
    fn constant_observable_is_exactly_degenerate() {
        let sys = gallery::binary_affine();
        let h = Observable::constant(0.3);
        let s = slln_check(&sys, &h, 0.2, 10_000, 5, 1).unwrap();
        assert!(s.checkpoints.iter().all(|c| c.2 == 0.0));
        let sig = estimate_sigma2(&sys, &h, 256, 30, 1).unwrap();
        assert_eq!(sig.sigma2, 0.0);
        let clt = clt_test(&sys, &h, 0.0, 256, 30, 1).unwrap();
        assert_eq!(clt.verdict, CltVerdict::DegenerateNormal { ok: true });
        let lil = lil_statistic(&sys, &h, 0.0, 10_000, 1, 4).unwrap();
        assert!(lil.statistics.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn binary_affine_variance_and_affine_invariance() {
        let sys = gallery::binary_affine();
        let h = Observable::coordinate(PhaseSpace::Interval).unwrap();
        let s = estimate_sigma2(&sys, &h, 4096, 400, 3).unwrap();
        assert!((s.sigma2 - 0.25).abs() < 0.025, "{s:?}");
        assert!(!s.disagreement, "{s:?}");
        let g = h.affine(-3.0, 2.0);
        let t = estimate_sigma2(&sys, &g, 4096, 400, 3).unwrap();
        assert!((t.sigma2 / s.sigma2 - 9.0).abs() / 9.0 < 1e-10);

        let c1 = clt_test(&sys, &h, 0.25, 1000, 500, 4).unwrap();
        let c2 = clt_test(&sys, &g, 0.25, 1000, 500, 4).unwrap();
        assert!(c1.pass());
        assert!((c1.ks_stat - c2.ks_stat).abs() < 1e-9);
    }

    #[test]
    fn single_contraction_averages_to_fixed_point() {
        let sys = gallery::single_contraction();
        let h = Observable::coordinate(PhaseSpace::Interval).unwrap();
        let s = slln_check(&sys, &h, 1.0, 100_000, 6, 1).unwrap();
        assert!(s.nu_hat < 1e-300);
        let last = s.checkpoints.last().unwrap();
        assert!(last.1 < 3e-5);
        let sig = estimate_sigma2(&sys, &h, 1024, 30, 1).unwrap();
        assert!(sig.sigma2 < 1e-12);
    }

    #[test]
    fn symbol_indicator_integrates_to_probability() {
        let sys = gallery::slope_pair();
        let h = Observable::symbol_indicator(1);
        let m = estimate_stationary(&sys, 10, 100, 1).unwrap();
        assert!((h.integrate(&m, sys.probs()).unwrap() - 0.5).abs() < 1e-15);
    }
}
