//! Paired orbits driven by a common word: distance traces and exponential
//! rate fits, averaged distance sums, ball-contraction probes, the search
//! for a snowflake exponent under which one step contracts on average, and
//! proximality probes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::geometry::{check_alpha, snowflake_unchecked, PhaseSpace, Point, ProjectivePoint};
use crate::parallel::{map_replicas, sum_vectors};
use crate::stats::{self, Z99};
use crate::systems::SystemSpec;
use crate::words::{derive_seed, fold_words, SymbolSource};

/// Distances at or below this value are treated as numerically zero.
pub const CENSOR_FLOOR: f64 = 1e-14;
/// Minimum number of above-floor entries for a rate fit.
pub const MIN_FIT_POINTS: usize = 8;
/// Points tracked per ball in the projective contraction probe.
pub const BALL_SAMPLE: usize = 64;

/// Distances `d(X_k^x, X_k^y)` for `k = 0..=n` along one word.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyncTrace {
    pub distances: Vec<f64>,
    pub seed: Option<u64>,
    pub stream_id: Option<u64>,
}

/// Least-squares line through `(k, log d_k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub rate: f64,
    pub intercept: f64,
    pub r2: f64,
    /// First step whose distance fell to the floor.
    pub censored_at: Option<usize>,
    pub points_used: usize,
}

/// Runs both orbits on the same `word` for `n` steps.
pub fn paired_orbit<S: SymbolSource>(
    sys: &SystemSpec,
    x: &Point,
    y: &Point,
    word: &mut S,
    n: usize,
) -> Result<SyncTrace> {
    let space = sys.space();
    let d0 = space.distance(x, y)?;
    let mut distances = Vec::with_capacity(n + 1);
    distances.push(d0);
    match (x.coordinate(), y.coordinate()) {
        (Some(mut a), Some(mut b)) => {
            for _ in 0..n {
                let s = word.next_symbol();
                a = sys.apply_1d(s, a);
                b = sys.apply_1d(s, b);
                distances.push(space.distance_1d(a, b));
            }
        }
        _ => {
            let (mut a, mut b) = (*x, *y);
            for _ in 0..n {
                let s = word.next_symbol();
                a = sys.apply(s, &a);
                b = sys.apply(s, &b);
                distances.push(space.distance_unchecked(&a, &b));
            }
        }
    }
    let prov = word.origin();
    Ok(SyncTrace {
        distances,
        seed: prov.map(|p| p.0),
        stream_id: prov.map(|p| p.1),
    })
}

/// Fits `log d_k ~ rate k + intercept` on entries above [`CENSOR_FLOOR`].
pub fn fit_sync_rate(trace: &SyncTrace) -> Result<RateFit> {
    let censored_at = trace.distances.iter().position(|d| *d <= CENSOR_FLOOR);
    let (ks, logs): (Vec<f64>, Vec<f64>) = trace
        .distances
        .iter()
        .enumerate()
        .filter(|(_, d)| **d > CENSOR_FLOOR)
        .map(|(k, d)| (k as f64, d.ln()))
        .unzip();
    if ks.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientData {
            needed: MIN_FIT_POINTS,
            found: ks.len(),
        });
    }
    let fit = stats::ols(&ks, &logs).expect("distinct abscissae");
    Ok(RateFit {
        rate: fit.slope,
        intercept: fit.intercept,
        r2: fit.r2,
        censored_at,
        points_used: ks.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AverageSyncSum {
    /// `sum_{k<=m} E[D^alpha(X_k^x, X_k^y)]` for `m = 0..=n`.
    pub partial_sums: Vec<f64>,
    /// `E[D^alpha(X_k^x, X_k^y)]` per step.
    pub increments: Vec<f64>,
    /// Sums flatten: the last tenth of the steps adds under 1% of the total.
    pub bounded: bool,
    pub replicas: usize,
}

/// Monte Carlo partial sums of the expected snowflaked distance.
pub fn average_sync_sum(
    sys: &SystemSpec,
    x: &Point,
    y: &Point,
    alpha: f64,
    n: usize,
    replicas: usize,
    seed: u64,
) -> Result<AverageSyncSum> {
    check_alpha(alpha)?;
    if replicas < 100 {
        return Err(invalid("replicas", "must be >= 100"));
    }
    sys.space().distance(x, y)?;
    let totals = sum_vectors(replicas, n + 1, |r, acc| {
        let mut w = sys.word_stream(seed, r);
        let trace = paired_orbit(sys, x, y, &mut w, n).expect("points checked");
        for (a, d) in acc.iter_mut().zip(&trace.distances) {
            *a += snowflake_unchecked(*d, alpha);
        }
    });
    let increments: Vec<f64> = totals.iter().map(|t| t / replicas as f64).collect();
    let mut acc = 0.0;
    let partial_sums: Vec<f64> = increments
        .iter()
        .map(|v| {
            acc += v;
            acc
        })
        .collect();
    let total = *partial_sums.last().expect("n + 1 entries");
    let tail_start = (n as f64 * 0.9).floor() as usize;
    let tail = total - partial_sums[tail_start];
    let bounded = total == 0.0 || tail < 0.01 * total;
    Ok(AverageSyncSum {
        partial_sums,
        increments,
        bounded,
        replicas,
    })
}

/// A ball tracked through the dynamics.
enum Ball {
    /// Lifted endpoints of an arc (circle) or segment (interval).
    Arc(f64, f64),
    Sample(Vec<Point>),
}

fn initial_ball(space: PhaseSpace, x: &Point, radius: f64, seed: u64) -> Ball {
    match (space, x) {
        (PhaseSpace::Circle, Point::Circle(c)) => {
            let r = radius.min(0.5);
            Ball::Arc(c.coordinate() - r, c.coordinate() + r)
        }
        (PhaseSpace::Interval, Point::Interval(c)) => {
            let c = c.coordinate();
            Ball::Arc((c - radius).max(0.0), (c + radius).min(1.0))
        }
        (PhaseSpace::Projective { dim: 2 }, Point::Projective(p)) => {
            let h = radius.clamp(0.0, 1.0).asin();
            let t0 = p.angle();
            let pts = (0..BALL_SAMPLE)
                .map(|j| {
                    let t = t0 - h + 2.0 * h * j as f64 / (BALL_SAMPLE - 1) as f64;
                    Point::Projective(ProjectivePoint::from_angle(t))
                })
                .collect();
            Ball::Sample(pts)
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xba11));
            let mut pts = vec![*x];
            while pts.len() < BALL_SAMPLE {
                pts.push(space.offset(x, radius, &mut rng));
            }
            Ball::Sample(pts)
        }
    }
}

fn ball_diameter(space: PhaseSpace, ball: &Ball) -> f64 {
    match ball {
        Ball::Arc(a, b) => {
            let len = (b - a).abs();
            match space {
                PhaseSpace::Circle => len.min(0.5),
                _ => len,
            }
        }
        Ball::Sample(pts) => match space {
            // points stay ordered along an arc of the projective line
            PhaseSpace::Projective { dim: 2 } => {
                let (first, last) = (&pts[0], &pts[pts.len() - 1]);
                pts.iter()
                    .map(|p| {
                        space
                            .distance_unchecked(first, p)
                            .max(space.distance_unchecked(last, p))
                    })
                    .fold(0.0, f64::max)
            }
            _ => {
                let mut best = 0.0f64;
                for i in 0..pts.len() {
                    for j in i + 1..pts.len() {
                        best = best.max(space.distance_unchecked(&pts[i], &pts[j]));
                    }
                }
                best
            }
        },
    }
}

fn advance_ball(sys: &SystemSpec, s: usize, ball: &mut Ball) {
    match ball {
        Ball::Arc(a, b) => {
            if sys.space() == PhaseSpace::Circle {
                let (fa, fb) = (sys.lift_1d(s, *a), sys.lift_1d(s, *b));
                let shift = fa.floor();
                *a = fa - shift;
                *b = fb - shift;
            } else {
                let (fa, fb) = (sys.apply_1d(s, *a), sys.apply_1d(s, *b));
                *a = fa.min(fb);
                *b = fa.max(fb);
            }
        }
        Ball::Sample(pts) => {
            for p in pts.iter_mut() {
                *p = sys.apply(s, p);
            }
        }
    }
}

/// Fraction of `replicas` words along which
/// `diam f_i^k(B(x, radius)) <= q_target^k` for every `k <= n`.
///
/// On 1-D spaces the ball image is exact (endpoint images of a monotone
/// map); on projective spaces the ball is tracked by [`BALL_SAMPLE`]
/// points.
pub fn local_contraction_probe(
    sys: &SystemSpec,
    x: &Point,
    radius: f64,
    n: usize,
    replicas: usize,
    q_target: f64,
    seed: u64,
) -> Result<f64> {
    if !(radius > 0.0) {
        return Err(invalid("radius", "must be positive"));
    }
    if replicas == 0 {
        return Err(invalid("replicas", "must be >= 1"));
    }
    let space = sys.space();
    space.check(x)?;
    if space.is_one_dimensional() {
        crate::measures::check_injective(sys)?;
    }
    let hits: Vec<bool> = map_replicas(replicas, |r| {
        let mut word = sys.word_stream(seed, r);
        let mut ball = initial_ball(space, x, radius, seed);
        let mut bound = 1.0;
        if ball_diameter(space, &ball) > bound {
            return false;
        }
        for _ in 0..n {
            advance_ball(sys, word.next_symbol(), &mut ball);
            bound *= q_target;
            if ball_diameter(space, &ball) > bound {
                return false;
            }
        }
        true
    });
    Ok(hits.iter().filter(|h| **h).count() as f64 / replicas as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaRow {
    pub alpha: f64,
    /// Max over pairs of the estimated one-`k`-step contraction ratio.
    pub lambda_hat: f64,
    /// Max over pairs of the 99% upper confidence bound of the ratio.
    pub lambda_ub: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionSearch {
    pub rows: Vec<AlphaRow>,
    pub best_alpha: f64,
    pub lambda_hat: f64,
    pub lambda_ub: f64,
    /// `lambda_ub < 1` with a relative rounding margin of `1e-6`.
    pub certified: bool,
    pub exact: bool,
    pub pairs: usize,
}

/// Largest `N^k` evaluated by exact enumeration in the contraction search.
pub const SEARCH_EXACT_WORDS: u128 = 1 << 12;
/// Words per pair on the Monte Carlo path of the contraction search.
pub const SEARCH_WORDS: usize = 256;
const CERTIFY_MARGIN: f64 = 1e-6;

/// Sampled pairs: a third near-diagonal with separations `1e-1..1e-6`, a
/// sixth antipodal, the rest uniform.
pub fn search_pairs(space: PhaseSpace, pairs: usize, seed: u64) -> Vec<(Point, Point)> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xca));
    let mut out = Vec::with_capacity(pairs);
    let mut p = 0usize;
    while out.len() < pairs {
        let x = space.sample_uniform(&mut rng);
        let y = match p % 6 {
            0 | 1 => {
                let delta = 10f64.powi(-(1 + ((p / 6) % 6) as i32));
                space.offset(&x, delta, &mut rng)
            }
            2 => space.antipode(&x, &mut rng),
            _ => space.sample_uniform(&mut rng),
        };
        p += 1;
        if space.distance_unchecked(&x, &y) > 0.0 {
            out.push((x, y));
        }
    }
    out
}

/// Searches `alphas` for the snowflake exponent minimizing
/// `lambda_hat = max_pairs E[d^alpha(X_k^x, X_k^y)] / d^alpha(x, y)`.
pub fn contraction_on_average_search(
    sys: &SystemSpec,
    alphas: &[f64],
    pairs: usize,
    k: usize,
    seed: u64,
) -> Result<ContractionSearch> {
    if alphas.is_empty() {
        return Err(invalid("alphas", "must be nonempty"));
    }
    for &a in alphas {
        check_alpha(a)?;
    }
    if pairs == 0 {
        return Err(invalid("pairs", "must be >= 1"));
    }
    if k == 0 {
        return Err(invalid("k", "must be >= 1"));
    }
    let space = sys.space();
    let pair_list = search_pairs(space, pairs, seed);
    let words = (sys.len() as u128).checked_pow(k as u32).unwrap_or(u128::MAX);
    let exact = words <= SEARCH_EXACT_WORDS;
    let na = alphas.len();
    // per pair: (estimate, upper bound) per alpha
    let per_pair: Vec<Vec<(f64, f64)>> = map_replicas(pair_list.len(), |pi| {
        let (x, y) = pair_list[pi as usize];
        let d0 = space.distance_unchecked(&x, &y);
        let base: Vec<f64> = alphas.iter().map(|a| snowflake_unchecked(d0, *a)).collect();
        if exact {
            let mut sums = vec![0.0; na];
            fold_words(
                sys.probs(),
                k,
                (x, y),
                &|(a, b): &(Point, Point), s| (sys.apply(s, a), sys.apply(s, b)),
                &mut |(a, b), w| {
                    let d = space.distance_unchecked(a, b);
                    for (j, al) in alphas.iter().enumerate() {
                        sums[j] += w * snowflake_unchecked(d, *al);
                    }
                },
            )
            .expect("budget checked");
            sums.iter().zip(&base).map(|(s, b)| (s / b, s / b)).collect()
        } else {
            let mut samples = vec![Vec::with_capacity(SEARCH_WORDS); na];
            for r in 0..SEARCH_WORDS as u64 {
                let mut w = sys.word_stream(derive_seed(seed, pi), r);
                let (mut a, mut b) = (x, y);
                for _ in 0..k {
                    let s = w.next_symbol();
                    a = sys.apply(s, &a);
                    b = sys.apply(s, &b);
                }
                let d = space.distance_unchecked(&a, &b);
                for (j, al) in alphas.iter().enumerate() {
                    samples[j].push(snowflake_unchecked(d, *al) / base[j]);
                }
            }
            samples
                .iter()
                .map(|v| {
                    let m = stats::mean(v);
                    (m, m + Z99 * stats::stderr(v))
                })
                .collect()
        }
    });
    let rows: Vec<AlphaRow> = alphas
        .iter()
        .enumerate()
        .map(|(j, &alpha)| AlphaRow {
            alpha,
            lambda_hat: per_pair.iter().map(|p| p[j].0).fold(0.0, f64::max),
            lambda_ub: per_pair.iter().map(|p| p[j].1).fold(0.0, f64::max),
        })
        .collect();
    let best = rows
        .iter()
        .min_by(|a, b| a.lambda_hat.total_cmp(&b.lambda_hat))
        .expect("nonempty");
    Ok(ContractionSearch {
        best_alpha: best.alpha,
        lambda_hat: best.lambda_hat,
        lambda_ub: best.lambda_ub,
        certified: best.lambda_ub < 1.0 - CERTIFY_MARGIN,
        rows: rows.clone(),
        exact,
        pairs: pair_list.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Proximity {
    ProximalEvidence { min_distance: f64 },
    NoApproachBelow { min_distance: f64 },
}

impl Proximity {
    pub fn min_distance(&self) -> f64 {
        match self {
            Proximity::ProximalEvidence { min_distance } | Proximity::NoApproachBelow { min_distance } => {
                *min_distance
            }
        }
    }
}

/// Smallest distance reached by each pair over `replicas` words of length
/// `horizon`; proximal evidence when it drops below `tol`.
pub fn proximality_probe(
    sys: &SystemSpec,
    pairs: &[(Point, Point)],
    horizon: usize,
    replicas: usize,
    tol: f64,
    seed: u64,
) -> Result<Vec<Proximity>> {
    let space = sys.space();
    for (x, y) in pairs {
        space.distance(x, y)?;
    }
    Ok(pairs
        .iter()
        .map(|(x, y)| {
            let mins = map_replicas(replicas, |r| {
                let mut w = sys.word_stream(seed, r);
                let trace = paired_orbit(sys, x, y, &mut w, horizon).expect("checked");
                trace.distances.iter().copied().fold(f64::INFINITY, f64::min)
            });
            let min_distance = mins.into_iter().fold(space.distance_unchecked(x, y), f64::min);
            if min_distance < tol {
                Proximity::ProximalEvidence { min_distance }
            } else {
                Proximity::NoApproachBelow { min_distance }
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gallery;
    use crate::systems::MapSpec;
    use std::f64::consts::LN_2;

    fn ip(x: f64) -> Point {
        Point::Interval(crate::geometry::IntervalPoint::new(x).unwrap())
    }

    fn cp(x: f64) -> Point {
        Point::Circle(crate::geometry::CirclePoint::new(x))
    }

    #[test]
    fn binary_affine_halves_distances() {
        let sys = gallery::binary_affine();
        let mut w = sys.word_stream(4, 0);
        let t = paired_orbit(&sys, &ip(0.125), &ip(0.875), &mut w, 40).unwrap();
        for (k, d) in t.distances.iter().enumerate() {
            assert_eq!(*d, 0.75 * 0.5f64.powi(k as i32));
        }
        assert_eq!(t.seed, Some(4));
        let f = fit_sync_rate(&t).unwrap();
        assert!((f.rate + LN_2).abs() < 1e-9);
        assert!((f.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identical_points_give_zeros() {
        let sys = gallery::anton();
        let mut w = sys.word_stream(1, 0);
        let t = paired_orbit(&sys, &cp(0.3), &cp(0.3), &mut w, 50).unwrap();
        assert!(t.distances.iter().all(|d| *d == 0.0));
        assert!(matches!(fit_sync_rate(&t), Err(Error::InsufficientData { .. })));
    }

    #[test]
    fn anton_pair_stays_apart() {
        let sys = gallery::anton();
        let mut w = sys.word_stream(7, 0);
        let t = paired_orbit(&sys, &cp(0.3), &cp(0.8), &mut w, 10_000).unwrap();
        assert!(t.distances.iter().all(|d| *d >= 0.375));
        assert!(fit_sync_rate(&t).unwrap().rate.abs() < 0.01);
    }

    #[test]
    fn rotation_rate_is_zero() {
        let sys = SystemSpec::uniform(vec![MapSpec::rotation(0.375)]).unwrap();
        let mut w = sys.word_stream(1, 0);
        let t = paired_orbit(&sys, &cp(0.25), &cp(0.5), &mut w, 100).unwrap();
        assert_eq!(fit_sync_rate(&t).unwrap().rate, 0.0);
    }

    #[test]
    fn swapping_points_is_bit_exact() {
        for sys in [gallery::anton(), gallery::moebius_pair()] {
            let a = paired_orbit(&sys, &cp(0.11), &cp(0.61), &mut sys.word_stream(3, 2), 500).unwrap();
            let b = paired_orbit(&sys, &cp(0.61), &cp(0.11), &mut sys.word_stream(3, 2), 500).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn average_sums() {
        let sys = gallery::binary_affine();
        let s = average_sync_sum(&sys, &ip(0.25), &ip(0.75), 1.0, 60, 100, 1).unwrap();
        assert!((s.partial_sums[60] - 1.0).abs() < 1e-12);
        assert!(s.bounded);
        assert!(s.partial_sums.windows(2).all(|w| w[1] >= w[0]));
        let z = average_sync_sum(&sys, &ip(0.25), &ip(0.25), 1.0, 10, 100, 1).unwrap();
        assert!(z.partial_sums.iter().all(|v| *v == 0.0));
        assert!(average_sync_sum(&sys, &ip(0.25), &ip(0.75), 1.0, 10, 99, 1).is_err());

        let anton = gallery::anton();
        let a = average_sync_sum(&anton, &cp(0.3), &cp(0.8), 1.0, 200, 100, 1).unwrap();
        assert!(a.increments.iter().all(|v| *v >= 0.375));
        assert!(!a.bounded);
    }

    #[test]
    fn contraction_probe_examples() {
        let single = gallery::single_contraction();
        assert_eq!(local_contraction_probe(&single, &ip(0.4), 0.1, 50, 20, 0.6, 1).unwrap(), 1.0);
        let ba = gallery::binary_affine();
        assert_eq!(local_contraction_probe(&ba, &ip(0.4), 0.1, 50, 20, 0.6, 1).unwrap(), 1.0);
        let rot = SystemSpec::uniform(vec![MapSpec::rotation(0.1)]).unwrap();
        assert_eq!(local_contraction_probe(&rot, &cp(0.4), 0.01, 50, 20, 0.9, 1).unwrap(), 0.0);
    }

    #[test]
    fn contraction_probe_monotone_in_radius() {
        let sys = gallery::moebius_pair();
        let mut prev = 0.0;
        for r in [1e-1, 1e-2, 1e-3, 1e-4] {
            let f = local_contraction_probe(&sys, &cp(0.3), r, 200, 200, 0.95, 5).unwrap();
            assert!(f >= prev);
            prev = f;
        }
    }

    #[test]
    fn search_examples() {
        let ba = gallery::binary_affine();
        let s = contraction_on_average_search(&ba, &[1.0], 1000, 1, 1).unwrap();
        assert!((s.lambda_hat - 0.5).abs() < 1e-9);
        assert!(s.certified && s.exact);
        let h = contraction_on_average_search(&ba, &[0.5], 1000, 1, 1).unwrap();
        assert!((h.lambda_hat - 0.5f64.sqrt()).abs() < 1e-9);
        let rot = SystemSpec::uniform(vec![MapSpec::rotation(0.3)]).unwrap();
        let r = contraction_on_average_search(&rot, &[0.5, 1.0], 1000, 3, 1).unwrap();
        assert!((r.lambda_hat - 1.0).abs() < 1e-6);
        assert!(!r.certified);
    }

    #[test]
    fn envelope_bounds_average_sums() {
        let ba = gallery::binary_affine();
        let s = contraction_on_average_search(&ba, &[1.0], 1000, 1, 2).unwrap();
        let sums = average_sync_sum(&ba, &ip(0.1), &ip(0.9), 1.0, 80, 200, 2).unwrap();
        let bound = 0.8 / (1.0 - s.lambda_ub) * 1.1;
        assert!(sums.partial_sums.iter().all(|v| *v <= bound));
    }

    #[test]
    fn proximality_examples() {
        let ba = gallery::binary_affine();
        let v = proximality_probe(&ba, &[(ip(0.0), ip(1.0)), (ip(0.3), ip(0.3))], 40, 4, 1e-6, 1).unwrap();
        assert!(v.iter().all(|p| matches!(p, Proximity::ProximalEvidence { .. })));
        let anton = gallery::anton();
        let v = proximality_probe(&anton, &[(cp(0.3), cp(0.8))], 2000, 8, 0.3, 1).unwrap();
        match v[0] {
            Proximity::NoApproachBelow { min_distance } => assert!(min_distance >= 0.375),
            other => panic!("{other:?}"),
        }
    }
}
