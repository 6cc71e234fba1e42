//! Probability measures on the phase space as weighted atoms: the Markov
//! push-forward, stationary-measure estimation, Wasserstein-1 distances on
//! 1-D spaces, and a Dirac-versus-nonatomic diagnostic.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::format_real;
use crate::geometry::{reduce_unit, PhaseSpace, Point, ProjectivePoint};
use crate::parallel::map_replicas;
use crate::systems::SystemSpec;
use crate::words::{derive_seed, SymbolSource};

const WEIGHT_TOLERANCE: f64 = 1e-10;
const START_TAG: u64 = 0x5747_4152;

#[derive(Debug, Clone, PartialEq)]
enum Atoms {
    Scalar(Vec<f64>),
    Projective(Vec<ProjectivePoint>),
}

/// Finite weighted sample standing in for an element of `Prob(M)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    space: PhaseSpace,
    atoms: Atoms,
    weights: Vec<f64>,
}

fn check_weights(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(invalid("weights", "measure needs at least one atom"));
    }
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(invalid("weights", "must be finite and nonnegative"));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > WEIGHT_TOLERANCE {
        return Err(invalid("weights", format!("sum to {total}, expected 1")));
    }
    Ok(())
}

impl EmpiricalMeasure {
    pub fn new(space: PhaseSpace, points: &[Point], weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(invalid("weights", "one weight per atom"));
        }
        for p in points {
            space.check(p)?;
        }
        check_weights(&weights)?;
        let atoms = if space.is_one_dimensional() {
            Atoms::Scalar(points.iter().map(|p| p.coordinate().expect("1-D")).collect())
        } else {
            Atoms::Projective(
                points
                    .iter()
                    .map(|p| match p {
                        Point::Projective(q) => *q,
                        _ => unreachable!("checked"),
                    })
                    .collect(),
            )
        };
        Ok(Self {
            space,
            atoms,
            weights,
        })
    }

    /// Atoms at scalar coordinates of a 1-D space.
    pub fn from_coords(space: PhaseSpace, coords: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        space.require_1d()?;
        if coords.len() != weights.len() {
            return Err(invalid("weights", "one weight per atom"));
        }
        for &c in &coords {
            space.point(c)?;
        }
        check_weights(&weights)?;
        let coords = match space {
            PhaseSpace::Circle => coords.into_iter().map(reduce_unit).collect(),
            _ => coords,
        };
        Ok(Self {
            space,
            atoms: Atoms::Scalar(coords),
            weights,
        })
    }

    /// Equal weights on the given coordinates.
    pub fn uniform_coords(space: PhaseSpace, coords: Vec<f64>) -> Result<Self> {
        let n = coords.len();
        Self::from_coords(space, coords, vec![1.0 / n.max(1) as f64; n])
    }

    pub fn dirac(space: PhaseSpace, p: &Point) -> Result<Self> {
        Self::new(space, std::slice::from_ref(p), vec![1.0])
    }

    /// Equal weights at the midpoints `(j + 1/2)/k` of `k` equal cells.
    pub fn uniform_grid(space: PhaseSpace, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(invalid("k", "must be >= 1"));
        }
        Self::uniform_coords(space, (0..k).map(|j| (j as f64 + 0.5) / k as f64).collect())
    }

    pub fn space(&self) -> PhaseSpace {
        self.space
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Scalar coordinates, for 1-D spaces.
    pub fn coords(&self) -> Option<&[f64]> {
        match &self.atoms {
            Atoms::Scalar(c) => Some(c),
            Atoms::Projective(_) => None,
        }
    }

    pub fn point(&self, k: usize) -> Point {
        match &self.atoms {
            Atoms::Scalar(c) => self.space.point(c[k]).expect("stored coordinates are valid"),
            Atoms::Projective(p) => Point::Projective(p[k]),
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `sum_k w_k f(x_k)` over scalar atoms.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> Result<f64> {
        let c = self.coords().ok_or_else(|| Error::Unsupported("integration on projective atoms".into()))?;
        Ok(c.iter().zip(&self.weights).map(|(x, w)| w * f(*x)).sum())
    }

    /// Kish effective sample size `1 / sum w^2`.
    pub fn effective_size(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    /// Systematic resampling to `budget` equally weighted atoms.
    pub fn resample_systematic(&self, budget: usize, seed: u64) -> Result<Self> {
        if budget == 0 {
            return Err(invalid("budget", "must be >= 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u0: f64 = rng.random::<f64>() / budget as f64;
        // scalar atoms are swept in coordinate order, which makes the picks
        // stratified quantiles
        let mut order: Vec<usize> = (0..self.len()).collect();
        if let Atoms::Scalar(c) = &self.atoms {
            order.sort_by(|a, b| c[*a].total_cmp(&c[*b]));
        }
        let mut picks = Vec::with_capacity(budget);
        let mut cum = self.weights[order[0]];
        let mut k = 0;
        for j in 0..budget {
            let u = u0 + j as f64 / budget as f64;
            while u >= cum && k + 1 < self.len() {
                k += 1;
                cum += self.weights[order[k]];
            }
            picks.push(order[k]);
        }
        let w = vec![1.0 / budget as f64; budget];
        let atoms = match &self.atoms {
            Atoms::Scalar(c) => Atoms::Scalar(picks.iter().map(|&k| c[k]).collect()),
            Atoms::Projective(p) => Atoms::Projective(picks.iter().map(|&k| p[k]).collect()),
        };
        Ok(Self {
            space: self.space,
            atoms,
            weights: w,
        })
    }

    /// Weighted concatenation `sum_j c_j m_j`; the coefficients must sum
    /// to 1.
    pub fn merge(parts: &[(f64, &EmpiricalMeasure)]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| invalid("parts", "must be nonempty"))?.1;
        let space = first.space;
        let mut weights = Vec::new();
        let mut scalar = Vec::new();
        let mut proj = Vec::new();
        for (c, m) in parts {
            if m.space != space {
                return Err(Error::PhaseSpaceMismatch {
                    expected: space.name(),
                    found: m.space.name(),
                });
            }
            weights.extend(m.weights.iter().map(|w| w * c));
            match &m.atoms {
                Atoms::Scalar(x) => scalar.extend_from_slice(x),
                Atoms::Projective(x) => proj.extend_from_slice(x),
            }
        }
        check_weights(&weights)?;
        let atoms = if space.is_one_dimensional() {
            Atoms::Scalar(scalar)
        } else {
            Atoms::Projective(proj)
        };
        Ok(Self {
            space,
            atoms,
            weights,
        })
    }

    /// CSV with header `x,weight` (1-D) or `v0,..,v{d-1},weight`, reals
    /// with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        match &self.atoms {
            Atoms::Scalar(c) => {
                writeln!(w, "x,weight")?;
                for (x, p) in c.iter().zip(&self.weights) {
                    writeln!(w, "{},{}", format_real(*x), format_real(*p))?;
                }
            }
            Atoms::Projective(pts) => {
                let d = pts.first().map_or(0, |p| p.dim());
                let head: Vec<String> = (0..d).map(|k| format!("v{k}")).collect();
                writeln!(w, "{},weight", head.join(","))?;
                for (p, wt) in pts.iter().zip(&self.weights) {
                    let coords: Vec<String> = p.representative().iter().map(|v| format_real(*v)).collect();
                    writeln!(w, "{},{}", coords.join(","), format_real(*wt))?;
                }
            }
        }
        Ok(())
    }
}

impl PhaseSpace {
    fn require_1d(&self) -> Result<()> {
        if self.is_one_dimensional() {
            Ok(())
        } else {
            Err(Error::Unsupported(format!("{} atoms need a 1-D space", self.name())))
        }
    }
}

/// `sum_i p_i (f_i)_* m`: each atom `(x, w)` becomes `N` atoms
/// `(f_i(x), p_i w)`.
pub fn markov_push(sys: &SystemSpec, m: &EmpiricalMeasure) -> Result<EmpiricalMeasure> {
    if m.space != sys.space() {
        return Err(Error::PhaseSpaceMismatch {
            expected: sys.space().name(),
            found: m.space.name(),
        });
    }
    let n = sys.len();
    let mut weights = Vec::with_capacity(m.len() * n);
    let atoms = match &m.atoms {
        Atoms::Scalar(c) => {
            let mut out = Vec::with_capacity(c.len() * n);
            for (x, w) in c.iter().zip(&m.weights) {
                for (i, p) in sys.probs().iter().enumerate() {
                    out.push(sys.apply_1d(i, *x));
                    weights.push(p * w);
                }
            }
            Atoms::Scalar(out)
        }
        Atoms::Projective(pts) => {
            let mut out = Vec::with_capacity(pts.len() * n);
            for (x, w) in pts.iter().zip(&m.weights) {
                for (i, p) in sys.probs().iter().enumerate() {
                    match sys.apply(i, &Point::Projective(*x)) {
                        Point::Projective(q) => out.push(q),
                        _ => unreachable!("projective maps stay projective"),
                    }
                    weights.push(p * w);
                }
            }
            Atoms::Projective(out)
        }
    };
    Ok(EmpiricalMeasure {
        space: m.space,
        atoms,
        weights,
    })
}

/// [`markov_push`] followed by systematic resampling when the atom count
/// exceeds `budget`.
pub fn markov_push_resampled(
    sys: &SystemSpec,
    m: &EmpiricalMeasure,
    budget: usize,
    seed: u64,
) -> Result<EmpiricalMeasure> {
    let pushed = markov_push(sys, m)?;
    if pushed.len() > budget {
        pushed.resample_systematic(budget, seed)
    } else {
        Ok(pushed)
    }
}

/// Occupation measure of one orbit: `burn_in` discarded steps, then
/// `samples` points with weight `1/samples`.
pub fn estimate_stationary(sys: &SystemSpec, burn_in: usize, samples: usize, seed: u64) -> Result<EmpiricalMeasure> {
    estimate_stationary_sharded(sys, burn_in, samples, 1, seed)
}

/// Occupation measures of `shards` independent orbits (stream id = shard
/// index), each with its own burn-in, merged by concatenation.
pub fn estimate_stationary_sharded(
    sys: &SystemSpec,
    burn_in: usize,
    samples: usize,
    shards: usize,
    seed: u64,
) -> Result<EmpiricalMeasure> {
    if samples == 0 {
        return Err(invalid("samples", "must be >= 1"));
    }
    if shards == 0 || shards > samples {
        return Err(invalid("shards", "must be in 1..=samples"));
    }
    let space = sys.space();
    let parts: Vec<Atoms> = map_replicas(shards, |s| {
        let count = samples / shards + usize::from((s as usize) < samples % shards);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, START_TAG ^ s));
        let start = space.sample_uniform(&mut rng);
        let mut word = sys.word_stream(seed, s);
        match start {
            Point::Projective(_) => {
                let mut x = start;
                for _ in 0..burn_in {
                    x = sys.skew_step(&mut word, &x).1;
                }
                let mut out = Vec::with_capacity(count);
                for _ in 0..count {
                    if let Point::Projective(q) = x {
                        out.push(q);
                    }
                    x = sys.skew_step(&mut word, &x).1;
                }
                Atoms::Projective(out)
            }
            _ => {
                let mut x = start.coordinate().expect("1-D");
                for _ in 0..burn_in {
                    x = sys.apply_1d(word.next_symbol(), x);
                }
                let mut out = Vec::with_capacity(count);
                for _ in 0..count {
                    out.push(x);
                    x = sys.apply_1d(word.next_symbol(), x);
                }
                Atoms::Scalar(out)
            }
        }
    });
    let atoms = match parts.first() {
        Some(Atoms::Scalar(_)) => Atoms::Scalar(
            parts
                .into_iter()
                .flat_map(|a| match a {
                    Atoms::Scalar(v) => v,
                    Atoms::Projective(_) => unreachable!(),
                })
                .collect(),
        ),
        _ => Atoms::Projective(
            parts
                .into_iter()
                .flat_map(|a| match a {
                    Atoms::Projective(v) => v,
                    Atoms::Scalar(_) => unreachable!(),
                })
                .collect(),
        ),
    };
    Ok(EmpiricalMeasure {
        space,
        atoms,
        weights: vec![1.0 / samples as f64; samples],
    })
}

fn sorted_atoms(m: &EmpiricalMeasure) -> Result<Vec<(f64, f64)>> {
    let c = m
        .coords()
        .ok_or_else(|| Error::Unsupported("Wasserstein distance on projective space".into()))?;
    let mut v: Vec<(f64, f64)> = c.iter().copied().zip(m.weights.iter().copied()).collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(v)
}

/// Piecewise-constant `F_a - F_b` on `[0, 1]` as `(length, value)` pieces.
fn cdf_difference(a: &[(f64, f64)], b: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pieces = Vec::with_capacity(a.len() + b.len() + 1);
    let (mut i, mut j) = (0, 0);
    let mut pos = 0.0;
    let mut diff = 0.0;
    loop {
        let next = match (a.get(i), b.get(j)) {
            (Some(x), Some(y)) => x.0.min(y.0),
            (Some(x), None) => x.0,
            (None, Some(y)) => y.0,
            (None, None) => break,
        };
        if next > pos {
            pieces.push((next - pos, diff));
            pos = next;
        }
        while i < a.len() && a[i].0 == next {
            diff += a[i].1;
            i += 1;
        }
        while j < b.len() && b[j].0 == next {
            diff -= b[j].1;
            j += 1;
        }
    }
    if pos < 1.0 {
        pieces.push((1.0 - pos, diff));
    }
    pieces
}

/// Median of a piecewise-constant function w.r.t. Lebesgue measure.
fn weighted_median(pieces: &[(f64, f64)]) -> f64 {
    let mut v: Vec<(f64, f64)> = pieces.iter().map(|&(l, d)| (d, l)).collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = v.iter().map(|p| p.1).sum();
    let mut acc = 0.0;
    for (d, l) in &v {
        acc += l;
        if acc >= total / 2.0 {
            return *d;
        }
    }
    v.last().map_or(0.0, |p| p.0)
}

/// Exact Wasserstein-1 distance between two measures on the interval
/// (area between CDFs) or the circle (minimum over CDF shifts).
pub fn wasserstein1(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Result<f64> {
    if a.space != b.space {
        return Err(Error::PhaseSpaceMismatch {
            expected: a.space.name(),
            found: b.space.name(),
        });
    }
    let pieces = cdf_difference(&sorted_atoms(a)?, &sorted_atoms(b)?);
    let shift = match a.space {
        PhaseSpace::Circle => weighted_median(&pieces),
        _ => 0.0,
    };
    Ok(pieces.iter().map(|(l, d)| l * (d - shift).abs()).sum())
}

/// `int_a^b |t - x| dx`.
fn abs_integral(t: f64, a: f64, b: f64) -> f64 {
    if t <= a {
        ((b - t).powi(2) - (a - t).powi(2)) / 2.0
    } else if t >= b {
        ((t - a).powi(2) - (t - b).powi(2)) / 2.0
    } else {
        ((t - a).powi(2) + (b - t).powi(2)) / 2.0
    }
}

/// Exact Wasserstein-1 distance to Lebesgue measure on the 1-D space.
pub fn wasserstein1_to_lebesgue(m: &EmpiricalMeasure) -> Result<f64> {
    let atoms = sorted_atoms(m)?;
    // segments [x_k, x_{k+1}) with constant CDF value c_k
    let mut segs = Vec::with_capacity(atoms.len() + 1);
    let mut pos = 0.0;
    let mut cdf = 0.0;
    for (x, w) in &atoms {
        if *x > pos {
            segs.push((pos, *x, cdf));
            pos = *x;
        }
        cdf += w;
    }
    if pos < 1.0 {
        segs.push((pos, 1.0, cdf));
    }
    let shift = match m.space {
        PhaseSpace::Circle => {
            // Lebesgue median of g(x) = F(x) - x: measure{g <= s} = 1/2
            let below = |s: f64| -> f64 {
                segs.iter()
                    .map(|&(a, b, c)| (b - (c - s).max(a)).clamp(0.0, b - a))
                    .sum()
            };
            let (mut lo, mut hi) = (-1.0, 1.0);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if below(mid) < 0.5 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        }
        _ => 0.0,
    };
    Ok(segs.iter().map(|&(a, b, c)| abs_integral(c - shift, a, b)).sum())
}

/// Outcome of [`atom_diagnostic`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AtomVerdict {
    DiracAtCommonFixedPoint,
    NonatomicConsistent,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AtomReport {
    pub verdict: AtomVerdict,
    pub common_fixed_point: Option<f64>,
    pub mass_near_fixed_point: f64,
    pub max_ball_mass: f64,
    pub nonatomic_threshold: f64,
    pub effective_size: f64,
}

/// Ball radius of the atom diagnostic.
pub const ATOM_RADIUS: f64 = 1e-3;
/// Mass fraction near a common fixed point that counts as a Dirac measure.
pub const DIRAC_MASS: f64 = 0.99;
/// Minimum effective sample size for a nonatomic verdict.
pub const MIN_EFFECTIVE_SIZE: f64 = 1000.0;
const FIXED_POINT_GRID: usize = 4096;
const FIXED_POINT_TOL: f64 = 1e-9;

/// Grid monotonicity probe of every map's lift.
pub fn check_injective(sys: &SystemSpec) -> Result<()> {
    sys.require_one_dimensional()?;
    for (index, m) in sys.maps().iter().enumerate() {
        if !m.is_monotone() {
            return Err(Error::NotInjective { index });
        }
        let vals: Vec<f64> = (0..=FIXED_POINT_GRID)
            .map(|k| m.lift(k as f64 / FIXED_POINT_GRID as f64))
            .collect();
        let inc = vals.windows(2).all(|w| w[1] > w[0]);
        let dec = vals.windows(2).all(|w| w[1] < w[0]);
        if !(inc || dec) {
            return Err(Error::NotInjective { index });
        }
    }
    Ok(())
}

/// Points fixed by every map, up to `1e-9`.
pub fn common_fixed_points(sys: &SystemSpec) -> Result<Vec<f64>> {
    sys.require_one_dimensional()?;
    let space = sys.space();
    let grid: Vec<f64> = (0..=FIXED_POINT_GRID)
        .map(|k| k as f64 / FIXED_POINT_GRID as f64)
        .collect();
    let mut candidates = Vec::new();
    for m in sys.maps() {
        let disp = |x: f64| m.lift(x) - x;
        let vals: Vec<f64> = grid.iter().map(|&x| disp(x)).collect();
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min).floor() as i64;
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max).ceil() as i64;
        let levels: Vec<f64> = match space {
            PhaseSpace::Circle => (lo..=hi).map(|v| v as f64).collect(),
            _ => vec![0.0],
        };
        for level in levels {
            for k in 0..grid.len() {
                let g = vals[k] - level;
                if g.abs() < 1e-12 {
                    candidates.push(grid[k]);
                }
                if k + 1 < grid.len() {
                    let g2 = vals[k + 1] - level;
                    if g * g2 < 0.0 {
                        let (mut a, mut b) = (grid[k], grid[k + 1]);
                        for _ in 0..80 {
                            let mid = 0.5 * (a + b);
                            if (disp(mid) - level) * g < 0.0 {
                                b = mid;
                            } else {
                                a = mid;
                            }
                        }
                        candidates.push(0.5 * (a + b));
                    }
                }
            }
        }
    }
    let mut out: Vec<f64> = Vec::new();
    for c in candidates {
        let c = if space == PhaseSpace::Circle { reduce_unit(c) } else { c };
        let common = (0..sys.len()).all(|i| space.distance_1d(sys.apply_1d(i, c), c) < FIXED_POINT_TOL);
        if common && out.iter().all(|o| space.distance_1d(*o, c) > 1e-6) {
            out.push(c);
        }
    }
    Ok(out)
}

/// Largest mass of a closed ball of radius `r` (1-D sliding window).
pub fn max_ball_mass(m: &EmpiricalMeasure, r: f64) -> Result<f64> {
    let mut atoms = sorted_atoms(m)?;
    if m.space == PhaseSpace::Circle {
        let wrapped: Vec<(f64, f64)> = atoms.iter().map(|(x, w)| (x + 1.0, *w)).collect();
        atoms.extend(wrapped);
    }
    let n = m.len();
    let mut best = 0.0f64;
    let mut acc = 0.0;
    let mut hi = 0;
    for lo in 0..n {
        while hi < atoms.len() && hi < lo + n && atoms[hi].0 <= atoms[lo].0 + 2.0 * r {
            acc += atoms[hi].1;
            hi += 1;
        }
        best = best.max(acc);
        acc -= atoms[lo].1;
    }
    Ok(best.min(1.0))
}

/// Classifies `m` as a Dirac mass at a common fixed point, consistent
/// with a nonatomic law, or inconclusive.
///
/// Dirac: some common fixed point carries at least 99% of the mass within
/// distance `1e-3`. Nonatomic: the effective sample size is at least 1000
/// and no ball of radius `1e-3` holds more than five times the uniform
/// ball mass plus three binomial standard deviations.
pub fn atom_diagnostic(sys: &SystemSpec, m: &EmpiricalMeasure) -> Result<AtomReport> {
    check_injective(sys)?;
    if m.space != sys.space() {
        return Err(Error::PhaseSpaceMismatch {
            expected: sys.space().name(),
            found: m.space.name(),
        });
    }
    let space = sys.space();
    let coords = m.coords().expect("1-D");
    let mut best_fp = None;
    let mut best_mass = 0.0;
    for fp in common_fixed_points(sys)? {
        let mass: f64 = coords
            .iter()
            .zip(&m.weights)
            .filter(|(x, _)| space.distance_1d(**x, fp) <= ATOM_RADIUS)
            .map(|(_, w)| w)
            .sum();
        if best_fp.is_none() || mass > best_mass {
            best_fp = Some(fp);
            best_mass = mass;
        }
    }
    let ess = m.effective_size();
    let p = 2.0 * ATOM_RADIUS;
    let sigma = (p * (1.0 - p) / ess).sqrt();
    let threshold = 5.0 * (p + 3.0 * sigma);
    let max_mass = max_ball_mass(m, ATOM_RADIUS)?;
    let verdict = if best_fp.is_some() && best_mass >= DIRAC_MASS {
        AtomVerdict::DiracAtCommonFixedPoint
    } else if ess >= MIN_EFFECTIVE_SIZE && max_mass < threshold {
        AtomVerdict::NonatomicConsistent
    } else {
        AtomVerdict::Inconclusive
    };
    Ok(AtomReport {
        verdict,
        common_fixed_point: best_fp,
        mass_near_fixed_point: best_mass,
        max_ball_mass: max_mass,
        nonatomic_threshold: threshold,
        effective_size: ess,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gallery;
    use crate::systems::MapSpec;

    fn circle(c: Vec<f64>) -> EmpiricalMeasure {
        EmpiricalMeasure::uniform_coords(PhaseSpace::Circle, c).unwrap()
    }

    #[test]
    fn push_dirac_under_binary_affine() {
        let sys = gallery::binary_affine();
        let d0 = EmpiricalMeasure::from_coords(PhaseSpace::Interval, vec![0.0], vec![1.0]).unwrap();
        let m = markov_push(&sys, &d0).unwrap();
        assert_eq!(m.coords().unwrap(), &[0.0, 0.5]);
        assert_eq!(m.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn push_under_single_rotation() {
        let sys = SystemSpec::uniform(vec![MapSpec::rotation(0.25)]).unwrap();
        let m = circle(vec![0.1, 0.8]);
        let p = markov_push(&sys, &m).unwrap();
        let c = p.coords().unwrap();
        assert!((c[0] - 0.35).abs() < 1e-15 && (c[1] - 0.05).abs() < 1e-15);
        assert_eq!(p.total_mass(), 1.0);
    }

    #[test]
    fn grid_pushed_stays_close_to_uniform() {
        let sys = gallery::binary_affine();
        let g = EmpiricalMeasure::uniform_grid(PhaseSpace::Interval, 1 << 10).unwrap();
        let p = markov_push(&sys, &g).unwrap();
        assert!(wasserstein1_to_lebesgue(&p).unwrap() <= 1.0 / 1024.0);
        assert!((p.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn wasserstein_examples() {
        let a = circle(vec![0.1]);
        let b = circle(vec![0.8]);
        assert!((wasserstein1(&a, &b).unwrap() - 0.3).abs() < 1e-15);
        let m = circle(vec![0.1, 0.4, 0.45]);
        assert_eq!(wasserstein1(&m, &m).unwrap(), 0.0);
        let d0 = EmpiricalMeasure::from_coords(PhaseSpace::Interval, vec![0.0], vec![1.0]).unwrap();
        let g = EmpiricalMeasure::uniform_grid(PhaseSpace::Interval, 1000).unwrap();
        assert!((wasserstein1(&d0, &g).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn lebesgue_distance_of_grids() {
        // midpoint grid of k cells is at distance 1/(4k) from Lebesgue
        let g = EmpiricalMeasure::uniform_grid(PhaseSpace::Interval, 64).unwrap();
        assert!((wasserstein1_to_lebesgue(&g).unwrap() - 1.0 / 256.0).abs() < 1e-15);
        let gc = EmpiricalMeasure::uniform_grid(PhaseSpace::Circle, 64).unwrap();
        assert!((wasserstein1_to_lebesgue(&gc).unwrap() - 1.0 / 256.0).abs() < 1e-12);
        // Dirac on the circle: mean distance to a point is 1/4
        let d = circle(vec![0.3]);
        assert!((wasserstein1_to_lebesgue(&d).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn stationary_binary_affine() {
        let sys = gallery::binary_affine();
        let m = estimate_stationary(&sys, 1000, 200_000, 5).unwrap();
        assert!(wasserstein1_to_lebesgue(&m).unwrap() < 0.01);
        assert_eq!(m, estimate_stationary(&sys, 1000, 200_000, 5).unwrap());
        let pushed = markov_push(&sys, &m).unwrap();
        assert!(wasserstein1(&pushed, &m).unwrap() <= 3.0 / (200_000f64).sqrt());
    }

    #[test]
    fn stationary_single_contraction() {
        let sys = gallery::single_contraction();
        let m = estimate_stationary(&sys, 60, 1000, 1).unwrap();
        let d0 = EmpiricalMeasure::from_coords(PhaseSpace::Interval, vec![0.0], vec![1.0]).unwrap();
        assert!(wasserstein1(&m, &d0).unwrap() <= 2f64.powi(-60) + 1e-12);
    }

    #[test]
    fn sharding_is_deterministic() {
        let sys = gallery::anton();
        let a = estimate_stationary_sharded(&sys, 100, 10_001, 4, 9).unwrap();
        let b = estimate_stationary_sharded(&sys, 100, 10_001, 4, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 10_001);
    }

    #[test]
    fn resampling_keeps_budget() {
        let sys = gallery::binary_affine();
        let mut m = EmpiricalMeasure::uniform_grid(PhaseSpace::Interval, 16).unwrap();
        for step in 0..12 {
            m = markov_push_resampled(&sys, &m, 4096, step).unwrap();
            assert!(m.len() <= 4096);
        }
        assert!(wasserstein1_to_lebesgue(&m).unwrap() < 0.02);
    }

    #[test]
    fn atom_examples() {
        let sys = SystemSpec::uniform(vec![MapSpec::affine(0.5, 0.0), MapSpec::affine(1.0 / 3.0, 0.0)]).unwrap();
        let m = estimate_stationary(&sys, 100, 1000, 2).unwrap();
        let r = atom_diagnostic(&sys, &m).unwrap();
        assert_eq!(r.verdict, AtomVerdict::DiracAtCommonFixedPoint);
        assert_eq!(r.common_fixed_point, Some(0.0));

        let ba = gallery::binary_affine();
        let m = estimate_stationary(&ba, 1000, 100_000, 2).unwrap();
        assert_eq!(atom_diagnostic(&ba, &m).unwrap().verdict, AtomVerdict::NonatomicConsistent);

        let tiny = estimate_stationary(&ba, 1000, 10, 2).unwrap();
        assert_eq!(atom_diagnostic(&ba, &tiny).unwrap().verdict, AtomVerdict::Inconclusive);
    }

    #[test]
    fn csv_uses_full_precision() {
        let m = circle(vec![0.1, 1.0 / 3.0]);
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x,weight");
        let x: f64 = lines[2].split(',').next().unwrap().parse().unwrap();
        assert_eq!(x, 1.0 / 3.0);
    }
}
