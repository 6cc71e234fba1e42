//! Fiber Lyapunov exponent, deviation probabilities of finite-time
//! exponents and synchronization rates, and distortion diagnostics.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::geometry::{reduce_unit, PhaseSpace};
use crate::limit_laws::geometric_checkpoints;
use crate::measures::estimate_stationary;
use crate::parallel::map_replicas;
use crate::stats::{self, Z99};
use crate::systems::SystemSpec;
use crate::words::{derive_seed, fold_words, SymbolSource};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaEstimate {
    pub gamma: f64,
    pub stderr: f64,
    /// `int sum_i p_i log|f_i'| d nu_hat`.
    pub one_step_integral: f64,
    pub integral_stderr: f64,
    /// Orbit and integral estimates agree within three combined errors.
    pub consistent: bool,
    pub n: usize,
    pub replicas: usize,
}

/// Independent stationary runs behind the one-step integral.
pub const INTEGRAL_BATCHES: usize = 32;

fn mean_log_derivative(sys: &SystemSpec, x: f64) -> f64 {
    sys.probs()
        .iter()
        .enumerate()
        .map(|(i, p)| p * sys.log_derivative_1d(i, x))
        .sum()
}

/// `gamma = E log|f_{i_1}'(x)|` as the replica mean of `(1/n) log|(f_i^n)'(x0)|`.
pub fn estimate_gamma(sys: &SystemSpec, n: usize, replicas: usize, x0: f64, seed: u64) -> Result<GammaEstimate> {
    sys.require_one_dimensional()?;
    sys.require_derivatives()?;
    sys.point(x0)?;
    if replicas < 30 {
        return Err(invalid("replicas", "must be >= 30"));
    }
    if n == 0 {
        return Err(invalid("n", "must be >= 1"));
    }
    let per: Vec<f64> = map_replicas(replicas, |r| {
        let mut w = sys.word_stream(seed, r);
        let mut x = x0;
        let mut acc = stats::CompensatedSum::default();
        for _ in 0..n {
            let s = w.next_symbol();
            acc.add(sys.log_derivative_1d(s, x));
            x = sys.apply_1d(s, x);
        }
        acc.value() / n as f64
    });
    let gamma = stats::mean(&per);
    let stderr = stats::stderr(&per);
    let samples = n.max(10_000);
    let batches: Vec<Result<f64>> = map_replicas(INTEGRAL_BATCHES, |b| {
        let m = estimate_stationary(sys, 1000, samples, derive_seed(seed, 0x6a00 + b))?;
        m.integrate(|x| mean_log_derivative(sys, x))
    });
    let batches: Vec<f64> = batches.into_iter().collect::<Result<_>>()?;
    let one_step_integral = stats::mean(&batches);
    let integral_stderr = stats::stderr(&batches);
    let combined = (stderr.powi(2) + integral_stderr.powi(2)).sqrt();
    Ok(GammaEstimate {
        gamma,
        stderr,
        one_step_integral,
        integral_stderr,
        consistent: (gamma - one_step_integral).abs() <= 3.0 * combined + 1e-9,
        n,
        replicas,
    })
}

/// One cell of a deviation table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LdCell {
    pub epsilon: f64,
    pub n: usize,
    pub prob: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Probability summed over all words rather than sampled.
    pub exact: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LdCurve {
    pub epsilons: Vec<f64>,
    pub horizons: Vec<usize>,
    pub gamma_hat: f64,
    /// Row-major over `(epsilon, n)`.
    pub cells: Vec<LdCell>,
    /// Per epsilon; `+inf` when every probability is zero.
    pub fitted_rates: Vec<f64>,
    /// Slope of the finite fitted rates against `epsilon^2`.
    pub h_hat: Option<f64>,
    pub h_r2: Option<f64>,
    /// Horizons with more than half of the mass censored.
    pub unusable_horizons: Vec<usize>,
    /// `(1/n) E log(d_n / d_0) - gamma_hat` at the largest usable horizon
    /// (pair curves only).
    pub mean_log_gap: Option<f64>,
}

impl LdCurve {
    pub fn cell(&self, e: usize, h: usize) -> &LdCell {
        &self.cells[e * self.horizons.len() + h]
    }

    pub fn probs(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.prob).collect()
    }

    /// Probabilities non-increasing in epsilon: exactly for enumerated
    /// cells, up to overlapping confidence intervals otherwise.
    pub fn monotone_in_epsilon(&self) -> bool {
        let mut order: Vec<usize> = (0..self.epsilons.len()).collect();
        order.sort_by(|a, b| self.epsilons[*a].total_cmp(&self.epsilons[*b]));
        (0..self.horizons.len()).all(|h| {
            order.windows(2).all(|w| {
                let (a, b) = (self.cell(w[0], h), self.cell(w[1], h));
                if a.exact && b.exact {
                    b.prob <= a.prob
                } else {
                    b.ci_low <= a.ci_high
                }
            })
        })
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "epsilon,n,prob,ci_low,ci_high,exact,fitted_rate")?;
        for (k, c) in self.cells.iter().enumerate() {
            let rate = self.fitted_rates[k / self.horizons.len()];
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                crate::format_real(c.epsilon),
                c.n,
                crate::format_real(c.prob),
                crate::format_real(c.ci_low),
                crate::format_real(c.ci_high),
                c.exact,
                crate::format_real(rate)
            )?;
        }
        Ok(())
    }
}

/// Word count up to which deviation probabilities are enumerated.
pub const EXACT_WORD_LIMIT: u128 = 1 << 20;
/// Distances below this are censored in pair deviations.
pub const DISTANCE_FLOOR: f64 = 1e-300;

/// Default epsilon grid `{0.05, 0.1, ..., 0.5} |gamma|`.
pub fn default_epsilons(gamma_hat: f64) -> Vec<f64> {
    (1..=10).map(|k| 0.05 * k as f64 * gamma_hat.abs()).collect()
}

#[derive(Debug, Clone, Copy)]
enum Tracked {
    /// `log|(f_i^n)'(x)|`.
    Derivative,
    /// `log(d(X_n^x, X_n^y) / d(x, y))`, accumulated step by step.
    Pair,
}

#[derive(Debug, Clone, Copy)]
struct Track {
    x: f64,
    y: f64,
    log: f64,
    censored: bool,
}

impl Track {
    fn step(&self, sys: &SystemSpec, kind: Tracked, s: usize) -> Track {
        match kind {
            Tracked::Derivative => Track {
                x: sys.apply_1d(s, self.x),
                y: self.y,
                log: self.log + sys.log_derivative_1d(s, self.x),
                censored: false,
            },
            Tracked::Pair => {
                let (nx, ny) = (sys.apply_1d(s, self.x), sys.apply_1d(s, self.y));
                if self.censored {
                    return Track { x: nx, y: ny, ..*self };
                }
                let space = sys.space();
                let d0 = space.distance_1d(self.x, self.y);
                let d1 = space.distance_1d(nx, ny);
                if d1 < DISTANCE_FLOOR {
                    Track {
                        x: nx,
                        y: ny,
                        log: self.log + (DISTANCE_FLOOR / d0).ln(),
                        censored: true,
                    }
                } else {
                    Track {
                        x: nx,
                        y: ny,
                        log: self.log + (d1 / d0).ln(),
                        censored: false,
                    }
                }
            }
        }
    }
}

/// Per-horizon tallies: violating mass per epsilon, censored mass, and the
/// mass-weighted sum of `log / n`.
#[derive(Debug, Clone)]
struct Tally {
    violating: Vec<f64>,
    censored: f64,
    log_sum: f64,
}

impl Tally {
    fn new(k: usize) -> Self {
        Self {
            violating: vec![0.0; k],
            censored: 0.0,
            log_sum: 0.0,
        }
    }

    fn add(&mut self, t: &Track, n: usize, epsilons: &[f64], gamma: f64, w: f64) {
        let dev = (t.log / n as f64 - gamma).abs();
        for (v, e) in self.violating.iter_mut().zip(epsilons) {
            if dev > *e {
                *v += w;
            }
        }
        if t.censored {
            self.censored += w;
        }
        self.log_sum += w * t.log / n as f64;
    }
}

#[allow(clippy::too_many_arguments)]
fn deviation_curve(
    sys: &SystemSpec,
    kind: Tracked,
    start: Track,
    epsilons: &[f64],
    horizons: &[usize],
    replicas: usize,
    seed: u64,
    gamma_hat: f64,
    exact_limit: u128,
) -> Result<LdCurve> {
    if epsilons.is_empty() || epsilons.iter().any(|e| !(*e > 0.0)) {
        return Err(invalid("epsilons", "need positive values"));
    }
    if horizons.is_empty() || horizons.contains(&0) {
        return Err(invalid("horizons", "need positive values"));
    }
    if !gamma_hat.is_finite() {
        return Err(invalid("gamma_hat", "must be finite"));
    }
    let nsym = sys.len() as u128;
    let affordable = |n: usize| {
        let mut total: u128 = 1;
        for _ in 0..n {
            total = total.saturating_mul(nsym);
            if total > exact_limit {
                return false;
            }
        }
        true
    };
    let k = epsilons.len();
    let mut tallies: Vec<(Tally, bool)> = Vec::with_capacity(horizons.len());
    // Monte Carlo horizons share one pass per word
    let mut sampled: Vec<usize> = horizons.iter().copied().filter(|&n| !affordable(n)).collect();
    sampled.sort_unstable();
    sampled.dedup();
    let mc: Vec<Tally> = if sampled.is_empty() {
        Vec::new()
    } else {
        if replicas == 0 {
            return Err(invalid("replicas", "must be >= 1 for sampled horizons"));
        }
        let per: Vec<Vec<Track>> = map_replicas(replicas, |r| {
            let mut w = sys.word_stream(seed, r);
            let mut t = start;
            let mut out = Vec::with_capacity(sampled.len());
            let mut done = 0;
            for &n in &sampled {
                while done < n {
                    t = t.step(sys, kind, w.next_symbol());
                    done += 1;
                }
                out.push(t);
            }
            out
        });
        let weight = 1.0 / replicas as f64;
        sampled
            .iter()
            .enumerate()
            .map(|(j, &n)| {
                let mut tally = Tally::new(k);
                for row in &per {
                    tally.add(&row[j], n, epsilons, gamma_hat, weight);
                }
                tally
            })
            .collect()
    };
    for &n in horizons {
        if affordable(n) {
            let mut tally = Tally::new(k);
            fold_words(
                sys.probs(),
                n,
                start,
                &|t: &Track, s| t.step(sys, kind, s),
                &mut |t: &Track, w| tally.add(t, n, epsilons, gamma_hat, w),
            )?;
            tallies.push((tally, true));
        } else {
            let j = sampled.binary_search(&n).expect("sampled horizon");
            tallies.push((mc[j].clone(), false));
        }
    }

    let mut cells = Vec::with_capacity(k * horizons.len());
    for (e, &eps) in epsilons.iter().enumerate() {
        for (&n, (tally, exact)) in horizons.iter().zip(&tallies) {
            let prob = tally.violating[e].clamp(0.0, 1.0);
            let (ci_low, ci_high) = if *exact {
                (prob, prob)
            } else {
                let hits = (prob * replicas as f64).round() as u64;
                stats::wilson_interval(hits, replicas as u64, Z99)
            };
            cells.push(LdCell {
                epsilon: eps,
                n,
                prob,
                ci_low,
                ci_high,
                exact: *exact,
            });
        }
    }
    let unusable: Vec<usize> = horizons
        .iter()
        .zip(&tallies)
        .filter(|(_, (t, _))| t.censored > 0.5)
        .map(|(n, _)| *n)
        .collect();
    let fitted_rates: Vec<f64> = (0..k)
        .map(|e| {
            let pts: Vec<(f64, f64)> = horizons
                .iter()
                .enumerate()
                .filter(|(_, n)| !unusable.contains(n))
                .map(|(h, &n)| (n as f64, cells[e * horizons.len() + h].prob))
                .filter(|(_, p)| *p > 0.0)
                .collect();
            fit_rate(&pts)
        })
        .collect();
    let finite: Vec<(f64, f64)> = epsilons
        .iter()
        .zip(&fitted_rates)
        .filter(|(_, r)| r.is_finite())
        .map(|(e, r)| (e * e, *r))
        .collect();
    let fit = stats::ols(
        &finite.iter().map(|p| p.0).collect::<Vec<_>>(),
        &finite.iter().map(|p| p.1).collect::<Vec<_>>(),
    );
    let mean_log_gap = match kind {
        Tracked::Derivative => None,
        Tracked::Pair => horizons
            .iter()
            .zip(&tallies)
            .filter(|(n, _)| !unusable.contains(n))
            .max_by_key(|(n, _)| **n)
            .map(|(_, (t, _))| t.log_sum - gamma_hat),
    };
    Ok(LdCurve {
        epsilons: epsilons.to_vec(),
        horizons: horizons.to_vec(),
        gamma_hat,
        cells,
        fitted_rates,
        h_hat: fit.map(|f| f.slope),
        h_r2: fit.map(|f| f.r2),
        unusable_horizons: unusable,
        mean_log_gap,
    })
}

/// Decay rate of `p(n)` from points `(n, p)` with `p > 0`: the OLS slope
/// of `-log p` against `n`, clamped at zero; `-log p / n` for a single
/// point and `+inf` for none.
pub fn fit_rate(points: &[(f64, f64)]) -> f64 {
    match points.len() {
        0 => f64::INFINITY,
        1 => (-points[0].1.ln() / points[0].0).max(0.0),
        _ => {
            let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
            let ys: Vec<f64> = points.iter().map(|p| -p.1.ln()).collect();
            match stats::ols(&xs, &ys) {
                Some(f) => f.slope.max(0.0),
                None => (ys[0] / xs[0]).max(0.0),
            }
        }
    }
}

/// Deviation probabilities `P(|(1/n) log|(f_i^n)'(x0)| - gamma_hat| > eps)`.
/// Horizons with at most 2^20 words are summed exactly.
pub fn ld_curve(
    sys: &SystemSpec,
    x0: f64,
    epsilons: &[f64],
    horizons: &[usize],
    replicas: usize,
    seed: u64,
    gamma_hat: f64,
) -> Result<LdCurve> {
    ld_curve_with_limit(sys, x0, epsilons, horizons, replicas, seed, gamma_hat, EXACT_WORD_LIMIT)
}

/// [`ld_curve`] with a custom enumeration limit; `0` forces sampling.
#[allow(clippy::too_many_arguments)]
pub fn ld_curve_with_limit(
    sys: &SystemSpec,
    x0: f64,
    epsilons: &[f64],
    horizons: &[usize],
    replicas: usize,
    seed: u64,
    gamma_hat: f64,
    exact_limit: u128,
) -> Result<LdCurve> {
    sys.require_one_dimensional()?;
    sys.require_derivatives()?;
    sys.point(x0)?;
    let start = Track {
        x: x0,
        y: x0,
        log: 0.0,
        censored: false,
    };
    deviation_curve(
        sys,
        Tracked::Derivative,
        start,
        epsilons,
        horizons,
        replicas,
        seed,
        gamma_hat,
        exact_limit,
    )
}

/// Deviation probabilities of `(1/n) log(d(X_n^x, X_n^y) / d(x, y))` from
/// `gamma_hat`, with the same estimation rules as [`ld_curve`].
#[allow(clippy::too_many_arguments)]
pub fn sync_ld_curve(
    sys: &SystemSpec,
    x: f64,
    y: f64,
    epsilons: &[f64],
    horizons: &[usize],
    replicas: usize,
    seed: u64,
    gamma_hat: f64,
) -> Result<LdCurve> {
    sync_ld_curve_with_limit(sys, x, y, epsilons, horizons, replicas, seed, gamma_hat, EXACT_WORD_LIMIT)
}

#[allow(clippy::too_many_arguments)]
pub fn sync_ld_curve_with_limit(
    sys: &SystemSpec,
    x: f64,
    y: f64,
    epsilons: &[f64],
    horizons: &[usize],
    replicas: usize,
    seed: u64,
    gamma_hat: f64,
    exact_limit: u128,
) -> Result<LdCurve> {
    sys.require_one_dimensional()?;
    sys.point(x)?;
    sys.point(y)?;
    if !(sys.space().distance_1d(x, y) > 0.0) {
        return Err(Error::Precondition("x and y must differ".into()));
    }
    let start = Track {
        x,
        y,
        log: 0.0,
        censored: false,
    };
    deviation_curve(
        sys,
        Tracked::Pair,
        start,
        epsilons,
        horizons,
        replicas,
        seed,
        gamma_hat,
        exact_limit,
    )
}

/// `omega(delta) = max_j max_{d(z,w) <= delta} |log|f_j'(z)| - log|f_j'(w)||`
/// by maximization over a uniform grid of `grid` points per map, plus the
/// exact offsets `delta`. Values are non-decreasing along the sorted ladder.
pub fn modulus_of_continuity(sys: &SystemSpec, deltas: &[f64], grid: usize) -> Result<Vec<(f64, f64)>> {
    sys.require_one_dimensional()?;
    sys.require_derivatives()?;
    if grid < 2 {
        return Err(invalid("grid", "must be >= 2"));
    }
    if deltas.iter().any(|d| !(*d > 0.0)) {
        return Err(invalid("deltas", "need positive values"));
    }
    let mut ladder = deltas.to_vec();
    ladder.sort_by(f64::total_cmp);
    let space = sys.space();
    let circle = space == PhaseSpace::Circle;
    let h = if circle { 1.0 / grid as f64 } else { 1.0 / (grid - 1) as f64 };
    let zs: Vec<f64> = (0..grid).map(|k| k as f64 * h).collect();
    let dmax = ladder.last().copied().unwrap_or(0.0).min(space.diameter());
    let max_off = ((dmax / h).floor() as usize).min(grid - 1);
    let logs: Vec<Vec<f64>> = (0..sys.len())
        .map(|j| zs.iter().map(|&z| sys.log_derivative_1d(j, z)).collect())
        .collect();
    // best[m]: largest variation between grid points m cells apart
    let mut best = vec![0.0f64; max_off + 1];
    for lj in &logs {
        for (m, b) in best.iter_mut().enumerate().skip(1) {
            for a in 0..grid {
                let c = if circle {
                    (a + m) % grid
                } else if a + m < grid {
                    a + m
                } else {
                    break;
                };
                *b = b.max((lj[a] - lj[c]).abs());
            }
        }
    }
    let mut out = Vec::with_capacity(ladder.len());
    let mut running = 0.0f64;
    for &d in &ladder {
        let d_eff = d.min(space.diameter());
        let m = ((d_eff / h).floor() as usize).min(max_off);
        running = running.max(best[..=m].iter().fold(0.0f64, |a, b| a.max(*b)));
        for j in 0..sys.len() {
            for &z in &zs {
                let w = if circle {
                    reduce_unit(z + d_eff)
                } else if z + d_eff <= 1.0 {
                    z + d_eff
                } else {
                    continue;
                };
                running = running.max((sys.log_derivative_1d(j, z) - sys.log_derivative_1d(j, w)).abs());
            }
        }
        out.push((d, running));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistortionReport {
    /// `(delta, omega(delta))`.
    pub omega_grid: Vec<(f64, f64)>,
    pub checkpoints: Vec<usize>,
    /// `log E max_{z,w in I_i} (f_i^n)'(z) / (f_i^n)'(w)` per checkpoint.
    pub log_mean_max_ratio: Vec<f64>,
    /// `log_mean_max_ratio / n` at the largest checkpoint.
    pub rate: f64,
    /// `rate < 0.05`.
    pub tempered: bool,
    pub replicas: usize,
    pub seed: u64,
}

/// Grid points tracked on each arc.
pub const ARC_GRID: usize = 32;
/// Grid points per map for the modulus of continuity.
pub const MODULUS_GRID: usize = 4096;
/// Bound on the distortion growth rate for the tempered verdict.
pub const TEMPERED_RATE: f64 = 0.05;

/// An arc between the paired points, tracked through lifted endpoints and
/// a grid of interior points carrying `log|(f_i^k)'|`.
#[derive(Debug, Clone)]
struct Arc {
    lo: f64,
    hi: f64,
    pts: Vec<f64>,
    logs: Vec<f64>,
}

impl Arc {
    fn new(lo: f64, hi: f64) -> Self {
        let pts = (0..ARC_GRID)
            .map(|k| reduce_unit(lo + (hi - lo) * k as f64 / (ARC_GRID - 1) as f64))
            .collect();
        Self {
            lo,
            hi,
            pts,
            logs: vec![0.0; ARC_GRID],
        }
    }

    fn step(&mut self, sys: &SystemSpec, s: usize, circle: bool) {
        let (a, b) = (sys.lift_1d(s, self.lo), sys.lift_1d(s, self.hi));
        let shift = if circle { a.floor() } else { 0.0 };
        self.lo = a - shift;
        self.hi = b - shift;
        for (p, l) in self.pts.iter_mut().zip(&mut self.logs) {
            *l += sys.log_derivative_1d(s, *p);
            *p = sys.apply_1d(s, *p);
        }
    }

    fn length(&self) -> f64 {
        (self.hi - self.lo).abs()
    }

    fn log_max_ratio(&self) -> f64 {
        let (mn, mx) = self
            .logs
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
        mx - mn
    }
}

/// Distortion of `f_i^n` on the contracted arc between `x` and `y`, and
/// the modulus of continuity of `log|f_j'|` on `delta_ladder`.
pub fn distortion_report(
    sys: &SystemSpec,
    x: f64,
    y: f64,
    n: usize,
    replicas: usize,
    delta_ladder: &[f64],
    seed: u64,
) -> Result<DistortionReport> {
    sys.require_one_dimensional()?;
    sys.require_derivatives()?;
    sys.point(x)?;
    sys.point(y)?;
    if n == 0 || replicas == 0 {
        return Err(invalid("n", "n and replicas must be >= 1"));
    }
    if !(sys.space().distance_1d(x, y) > 0.0) {
        return Err(Error::Precondition("x and y must differ".into()));
    }
    let omega_grid = modulus_of_continuity(sys, delta_ladder, MODULUS_GRID)?;
    let circle = sys.space() == PhaseSpace::Circle;
    let (a, b) = if x <= y { (x, y) } else { (y, x) };
    let checkpoints = geometric_checkpoints(1, n, (n as f64).log2().ceil() as usize + 1);
    let per: Vec<Vec<f64>> = map_replicas(replicas, |r| {
        let mut w = sys.word_stream(seed, r);
        let mut arcs = vec![Arc::new(a, b)];
        if circle {
            arcs.push(Arc::new(b, a + 1.0));
        }
        let mut out = Vec::with_capacity(checkpoints.len());
        let mut done = 0;
        for &c in &checkpoints {
            while done < c {
                let s = w.next_symbol();
                for arc in &mut arcs {
                    arc.step(sys, s, circle);
                }
                done += 1;
            }
            // the arc whose image is shorter is the contracted one
            let chosen = arcs
                .iter()
                .min_by(|p, q| p.length().total_cmp(&q.length()))
                .expect("at least one arc");
            out.push(chosen.log_max_ratio());
        }
        out
    });
    let log_mean_max_ratio: Vec<f64> = (0..checkpoints.len())
        .map(|j| {
            let col: Vec<f64> = per.iter().map(|v| v[j]).collect();
            log_mean_exp(&col)
        })
        .collect();
    let rate = log_mean_max_ratio.last().copied().unwrap_or(0.0) / n as f64;
    Ok(DistortionReport {
        omega_grid,
        checkpoints,
        log_mean_max_ratio,
        rate,
        tempered: rate < TEMPERED_RATE,
        replicas,
        seed,
    })
}

fn log_mean_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b));
    if !m.is_finite() {
        return m;
    }
    m + (xs.iter().map(|x| (x - m).exp()).sum::<f64>() / xs.len() as f64).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gallery;
    use crate::systems::MapSpec;
    use std::f64::consts::LN_2;

    fn rotation_system() -> SystemSpec {
        SystemSpec::uniform(vec![MapSpec::rotation(0.3), MapSpec::rotation(0.7)]).unwrap()
    }

    #[test]
    fn gamma_of_gallery_systems() {
        let g = estimate_gamma(&gallery::binary_affine(), 1000, 30, 0.3, 1).unwrap();
        assert!((g.gamma + LN_2).abs() < 1e-12);
        assert_eq!(g.stderr, 0.0);
        assert!(g.consistent);
        let r = estimate_gamma(&rotation_system(), 1000, 30, 0.3, 1).unwrap();
        assert_eq!(r.gamma, 0.0);
        let s = estimate_gamma(&gallery::slope_pair(), 4000, 64, 0.3, 1).unwrap();
        assert!((s.gamma + 1.5 * LN_2).abs() < 4.0 * s.stderr + 1e-3, "{s:?}");
        assert!(s.consistent, "{s:?}");
    }

    #[test]
    fn deterministic_exponent_has_no_deviations() {
        let sys = gallery::binary_affine();
        let c = ld_curve(&sys, 0.3, &[0.01, 0.1], &[4, 10, 30], 100, 1, -LN_2).unwrap();
        assert!(c.probs().iter().all(|p| *p == 0.0));
        assert!(c.fitted_rates.iter().all(|r| *r == f64::INFINITY));
        let rot = ld_curve(&rotation_system(), 0.3, &[0.01], &[5, 40], 100, 1, 0.0).unwrap();
        assert!(rot.probs().iter().all(|p| *p == 0.0));
    }

    #[test]
    fn slope_pair_matches_binomial_tail() {
        let sys = gallery::slope_pair();
        let eps = 0.2 * LN_2;
        let c = ld_curve(&sys, 0.3, &[eps], &[16], 0, 1, -1.5 * LN_2).unwrap();
        // |B - 8| / 16 > 0.2 for B ~ Binomial(16, 1/2)
        let mut binom = [1u64; 17];
        for k in 1..=16 {
            binom[k] = binom[k - 1] * (17 - k as u64) / k as u64;
        }
        let oracle: f64 = (0..=16)
            .filter(|b| (*b as f64 - 8.0).abs() > 3.2)
            .map(|b| binom[b] as f64 / 65536.0)
            .sum();
        assert_eq!(c.cells[0].prob.to_bits(), oracle.to_bits());
        assert!(c.cells[0].exact);
    }

    #[test]
    fn affine_pair_curve_equals_derivative_curve() {
        let sys = gallery::slope_pair();
        let eps = [0.1, 0.2, 0.4];
        let hs = [4, 8, 12];
        let a = ld_curve(&sys, 0.25, &eps, &hs, 0, 1, -1.5 * LN_2).unwrap();
        let b = sync_ld_curve(&sys, 0.25, 0.75, &eps, &hs, 0, 1, -1.5 * LN_2).unwrap();
        assert_eq!(a.probs(), b.probs());
        assert!(a.monotone_in_epsilon());
        assert!(sync_ld_curve(&sys, 0.25, 0.25, &eps, &hs, 0, 1, 0.0).is_err());
    }

    #[test]
    fn sampled_probabilities_cover_enumeration() {
        let sys = gallery::slope_pair();
        let eps = [0.1, 0.3];
        let exact = ld_curve(&sys, 0.3, &eps, &[10], 0, 1, -1.5 * LN_2).unwrap();
        for seed in 0..4 {
            let mc = ld_curve_with_limit(&sys, 0.3, &eps, &[10], 2000, seed, -1.5 * LN_2, 0).unwrap();
            for (e, m) in exact.cells.iter().zip(&mc.cells) {
                assert!(!m.exact);
                assert!(m.ci_low <= e.prob && e.prob <= m.ci_high, "{e:?} {m:?}");
            }
        }
    }

    #[test]
    fn rate_fit_conventions() {
        assert_eq!(fit_rate(&[]), f64::INFINITY);
        assert!((fit_rate(&[(10.0, (-5.0f64).exp())]) - 0.5).abs() < 1e-12);
        let pts: Vec<(f64, f64)> = (1..5).map(|n| (n as f64, (-0.3 * n as f64).exp())).collect();
        assert!((fit_rate(&pts) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn affine_and_rotation_distortion_is_trivial() {
        let r = distortion_report(&gallery::slope_pair(), 0.2, 0.7, 64, 8, &[0.1], 1).unwrap();
        assert!(r.log_mean_max_ratio.iter().all(|v| *v == 0.0));
        assert_eq!(r.omega_grid, vec![(0.1, 0.0)]);
        let r = distortion_report(&rotation_system(), 0.2, 0.7, 64, 8, &[0.1], 1).unwrap();
        assert!(r.log_mean_max_ratio.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn moebius_pair_modulus_and_tempered_distortion() {
        let sys = gallery::moebius_pair();
        let ladder = [1e-4, 1e-3, 1e-2, 1e-1];
        let r = distortion_report(&sys, 0.1, 0.4, 1000, 16, &ladder, 5).unwrap();
        let om: Vec<f64> = r.omega_grid.iter().map(|p| p.1).collect();
        assert!(om.windows(2).all(|w| w[0] <= w[1]));
        assert!(om[0] < 0.01 * om[3]);
        assert!(r.tempered, "{r:?}");
    }
}
