//! Iterated function systems with probabilities: map families, orbit
//! evaluation along words, the skew product, and chain-rule accumulation of
//! log-derivatives.
//!
//! Words are always consumed left to right, so after `n` symbols the orbit
//! point is `f_{i_n} ∘ ... ∘ f_{i_1}(x)`.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{reduce_unit, CirclePoint, IntervalPoint, PhaseSpace, Point, ProjectivePoint};
use crate::linalg::SquareMatrix;
use crate::words::{cumulative, SymbolSource, WordStream};

/// Grid resolution of the load-time diffeomorphism check.
pub const DIFFEO_CHECK_GRID: usize = 2048;
const MIN_DERIVATIVE: f64 = 1e-9;

/// One member of a map family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapSpec {
    /// `x -> a x + b` on `[0, 1]`.
    AffineInterval { a: f64, b: f64 },
    /// `x -> x + c mod 1`.
    Rotation { c: f64 },
    /// Action of a `2x2` matrix with positive determinant on the circle,
    /// identified with the projective line via `x -> direction(pi x)`.
    MoebiusCircle { matrix: [[f64; 2]; 2] },
    /// `x -> x + c + amp/(2 pi m) sin(2 pi m (x - phase)) mod 1`, derivative
    /// `1 + amp cos(2 pi m (x - phase))`.
    PerturbedRotation {
        c: f64,
        amp: f64,
        #[serde(default = "one")]
        harmonic: u32,
        #[serde(default)]
        phase: f64,
    },
    /// Degree-one circle map interpolated through knots.
    TabulatedMonotone(TabulatedMap),
    /// Projective action `v -> A v / ‖A v‖`.
    ProjectiveLinear { matrix: SquareMatrix },
}

fn one() -> u32 {
    1
}

impl MapSpec {
    pub fn affine(a: f64, b: f64) -> Self {
        MapSpec::AffineInterval { a, b }
    }

    pub fn rotation(c: f64) -> Self {
        MapSpec::Rotation { c }
    }

    pub fn perturbed_rotation(c: f64, amp: f64) -> Self {
        MapSpec::PerturbedRotation {
            c,
            amp,
            harmonic: 1,
            phase: 0.0,
        }
    }

    pub fn space(&self) -> PhaseSpace {
        match self {
            MapSpec::AffineInterval { .. } => PhaseSpace::Interval,
            MapSpec::ProjectiveLinear { matrix } => PhaseSpace::Projective { dim: matrix.dim() },
            _ => PhaseSpace::Circle,
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            MapSpec::AffineInterval { .. } => "affine_interval",
            MapSpec::Rotation { .. } => "rotation",
            MapSpec::MoebiusCircle { .. } => "moebius_circle",
            MapSpec::PerturbedRotation { .. } => "perturbed_rotation",
            MapSpec::TabulatedMonotone(_) => "tabulated_monotone",
            MapSpec::ProjectiveLinear { .. } => "projective_linear",
        }
    }

    fn validate(&self, index: usize) -> Result<()> {
        let bad = |reason: String| Error::NotDiffeomorphism { index, reason };
        match self {
            MapSpec::AffineInterval { a, b } => {
                if *a == 0.0 || !a.is_finite() || !b.is_finite() {
                    return Err(bad(format!("slope {a} must be finite and nonzero")));
                }
                let (lo, hi) = (b.min(a + b), b.max(a + b));
                if lo < 0.0 || hi > 1.0 {
                    return Err(invalid("b", format!("map {index} does not send [0,1] into itself")));
                }
            }
            MapSpec::Rotation { c } => {
                if !c.is_finite() {
                    return Err(invalid("c", "must be finite"));
                }
            }
            MapSpec::MoebiusCircle { matrix } => {
                let det = matrix[0][0] * matrix[1][1] - matrix[0][1] * matrix[1][0];
                if !(det > 0.0) {
                    return Err(bad(format!("determinant {det} must be positive")));
                }
            }
            MapSpec::PerturbedRotation { amp, harmonic, .. } => {
                if !(amp.abs() < 1.0) {
                    return Err(bad(format!("|amp| = {} must be < 1", amp.abs())));
                }
                if *harmonic == 0 {
                    return Err(invalid("harmonic", "must be >= 1"));
                }
            }
            MapSpec::TabulatedMonotone(_) => {}
            MapSpec::ProjectiveLinear { matrix } => {
                if matrix.dim() < 2 || matrix.det().abs() <= 1e-12 {
                    return Err(bad("matrix must be invertible with d >= 2".into()));
                }
            }
        }
        if self.has_derivative() && self.space().is_one_dimensional() {
            for k in 0..DIFFEO_CHECK_GRID {
                let x = k as f64 / DIFFEO_CHECK_GRID as f64;
                let d = self.derivative_unchecked(x);
                if !(d > MIN_DERIVATIVE) || !d.is_finite() {
                    return Err(bad(format!("derivative {d} at x = {x}")));
                }
            }
        }
        Ok(())
    }

    /// Whether `derivative` queries are supported.
    pub fn has_derivative(&self) -> bool {
        match self {
            MapSpec::TabulatedMonotone(t) => t.has_derivative(),
            MapSpec::ProjectiveLinear { .. } => false,
            _ => true,
        }
    }

    /// Whether the map is monotone (orientation-preserving or reversing)
    /// on its 1-D phase space.
    pub fn is_monotone(&self) -> bool {
        match self {
            MapSpec::TabulatedMonotone(t) => t.monotone,
            MapSpec::ProjectiveLinear { .. } => false,
            _ => true,
        }
    }

    /// Image of a scalar coordinate, reduced into the phase space.
    #[inline]
    pub fn apply_scalar(&self, x: f64) -> f64 {
        match self {
            MapSpec::AffineInterval { a, b } => (a * x + b).clamp(0.0, 1.0),
            _ => reduce_unit(self.lift(x)),
        }
    }

    /// Real lift of a degree-one circle map (or the map itself on the
    /// interval): increasing, with `F(t + 1) = F(t) + 1` on the circle.
    #[inline]
    pub fn lift(&self, t: f64) -> f64 {
        match self {
            MapSpec::AffineInterval { a, b } => a * t + b,
            MapSpec::Rotation { c } => t + c,
            MapSpec::PerturbedRotation {
                c,
                amp,
                harmonic,
                phase,
            } => {
                let m = *harmonic as f64;
                t + c + amp / (TAU * m) * (TAU * m * (t - phase)).sin()
            }
            MapSpec::MoebiusCircle { matrix } => moebius_lift(matrix, t),
            MapSpec::TabulatedMonotone(tab) => tab.lift(t),
            MapSpec::ProjectiveLinear { .. } => f64::NAN,
        }
    }

    /// `|f'(x)|` without support checks.
    #[inline]
    pub(crate) fn derivative_unchecked(&self, x: f64) -> f64 {
        match self {
            MapSpec::AffineInterval { a, .. } => a.abs(),
            MapSpec::Rotation { .. } => 1.0,
            MapSpec::PerturbedRotation {
                amp,
                harmonic,
                phase,
                ..
            } => (1.0 + amp * (TAU * *harmonic as f64 * (x - phase)).cos()).abs(),
            MapSpec::MoebiusCircle { matrix } => {
                let (s, c) = (PI * x).sin_cos();
                let w0 = matrix[0][0] * c + matrix[0][1] * s;
                let w1 = matrix[1][0] * c + matrix[1][1] * s;
                let det = matrix[0][0] * matrix[1][1] - matrix[0][1] * matrix[1][0];
                det.abs() / (w0 * w0 + w1 * w1)
            }
            MapSpec::TabulatedMonotone(tab) => tab.derivative(x).abs(),
            MapSpec::ProjectiveLinear { .. } => f64::NAN,
        }
    }

    pub fn apply_point(&self, x: &Point) -> Point {
        match (self, x) {
            (MapSpec::ProjectiveLinear { matrix }, Point::Projective(p)) => {
                let w = matrix.mul_vec(p.representative());
                Point::Projective(ProjectivePoint::from_raw(p.dim(), w).unwrap_or(*p))
            }
            (MapSpec::AffineInterval { .. }, Point::Interval(p)) => {
                Point::Interval(IntervalPoint::clamped(self.apply_scalar(p.coordinate())))
            }
            (_, Point::Circle(p)) => Point::Circle(CirclePoint::new(self.apply_scalar(p.coordinate()))),
            _ => *x,
        }
    }
}

/// Continuous lift of a Moebius circle map: angle of `A e1` plus the
/// counterclockwise angle from `A e1` to `A v(theta)`, which lies in
/// `[0, pi)` for `theta` in `[0, pi)` when `det A > 0`.
fn moebius_lift(m: &[[f64; 2]; 2], t: f64) -> f64 {
    let n = t.floor();
    let theta = PI * (t - n);
    let (s, c) = theta.sin_cos();
    let (a0, a1) = (m[0][0], m[1][0]);
    let w0 = m[0][0] * c + m[0][1] * s;
    let w1 = m[1][0] * c + m[1][1] * s;
    let mut base = a1.atan2(a0);
    if base < 0.0 {
        base += PI;
    }
    if base >= PI {
        base -= PI;
    }
    let cross = a0 * w1 - a1 * w0;
    let dot = a0 * w0 + a1 * w1;
    let rel = cross.max(0.0).atan2(dot);
    n + (base + rel) / PI
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TabulatedRaw {
    knots: Vec<f64>,
    values: Vec<f64>,
    #[serde(default)]
    slopes: Option<Vec<f64>>,
}

/// Degree-one circle map through knots `(x_j, y_j)` with `x_j` strictly
/// increasing in `[0,1)` and lift values `y_j` strictly increasing with
/// `y_last < y_0 + 1`, extended periodically. Cubic Hermite interpolation
/// uses the supplied node slopes when present (enabling derivative
/// queries) and monotone Fritsch-Butland slopes otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TabulatedRaw", into = "TabulatedRaw")]
pub struct TabulatedMap {
    knots: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
    supplied_slopes: bool,
    monotone: bool,
}

impl TryFrom<TabulatedRaw> for TabulatedMap {
    type Error = Error;
    fn try_from(r: TabulatedRaw) -> Result<Self> {
        TabulatedMap::new(r.knots, r.values, r.slopes)
    }
}

impl From<TabulatedMap> for TabulatedRaw {
    fn from(t: TabulatedMap) -> Self {
        TabulatedRaw {
            knots: t.knots,
            values: t.values,
            slopes: t.supplied_slopes.then_some(t.slopes),
        }
    }
}

impl TabulatedMap {
    pub fn new(knots: Vec<f64>, values: Vec<f64>, slopes: Option<Vec<f64>>) -> Result<Self> {
        let n = knots.len();
        if n < 2 || values.len() != n {
            return Err(invalid("knots", "need at least two knots and matching values"));
        }
        if knots[0] < 0.0 || knots[n - 1] >= 1.0 || knots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("knots", "must be strictly increasing in [0, 1)"));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) || values[n - 1] >= values[0] + 1.0 {
            return Err(invalid(
                "values",
                "lift values must be strictly increasing with last < first + 1",
            ));
        }
        let supplied = slopes.is_some();
        let slopes = match slopes {
            Some(s) => {
                if s.len() != n || s.iter().any(|v| !v.is_finite()) {
                    return Err(invalid("slopes", "need one finite slope per knot"));
                }
                s
            }
            None => monotone_slopes(&knots, &values),
        };
        let mut t = Self {
            knots,
            values,
            slopes,
            supplied_slopes: supplied,
            monotone: true,
        };
        t.monotone = t.probe_monotone();
        Ok(t)
    }

    pub fn has_derivative(&self) -> bool {
        self.supplied_slopes && self.monotone
    }

    /// Extended node `j` in `0..=n`, with node `n` the periodic copy of 0.
    fn node(&self, j: usize) -> (f64, f64, f64) {
        let n = self.knots.len();
        if j == n {
            (self.knots[0] + 1.0, self.values[0] + 1.0, self.slopes[0])
        } else {
            (self.knots[j], self.values[j], self.slopes[j])
        }
    }

    fn locate(&self, t: f64) -> (f64, f64, usize) {
        let mut shift = t.floor();
        let mut s = t - shift;
        if s < self.knots[0] {
            s += 1.0;
            shift -= 1.0;
        }
        let j = match self.knots.binary_search_by(|k| k.total_cmp(&s)) {
            Ok(j) => j,
            Err(j) => j - 1,
        };
        (s, shift, j)
    }

    fn lift(&self, t: f64) -> f64 {
        let (s, shift, j) = self.locate(t);
        let (x0, y0, m0) = self.node(j);
        let (x1, y1, m1) = self.node(j + 1);
        let h = x1 - x0;
        let u = (s - x0) / h;
        let (u2, u3) = (u * u, u * u * u);
        let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
        let h10 = u3 - 2.0 * u2 + u;
        let h01 = -2.0 * u3 + 3.0 * u2;
        let h11 = u3 - u2;
        shift + h00 * y0 + h10 * h * m0 + h01 * y1 + h11 * h * m1
    }

    fn derivative(&self, t: f64) -> f64 {
        let (s, _, j) = self.locate(t);
        let (x0, y0, m0) = self.node(j);
        let (x1, y1, m1) = self.node(j + 1);
        let h = x1 - x0;
        let u = (s - x0) / h;
        let u2 = u * u;
        let d00 = 6.0 * u2 - 6.0 * u;
        let d10 = 3.0 * u2 - 4.0 * u + 1.0;
        let d01 = -6.0 * u2 + 6.0 * u;
        let d11 = 3.0 * u2 - 2.0 * u;
        (d00 * y0 + d01 * y1) / h + d10 * m0 + d11 * m1
    }

    fn probe_monotone(&self) -> bool {
        let mut prev = self.lift(0.0);
        for k in 1..=DIFFEO_CHECK_GRID {
            let v = self.lift(k as f64 / DIFFEO_CHECK_GRID as f64);
            if v <= prev {
                return false;
            }
            prev = v;
        }
        if self.supplied_slopes {
            return (0..DIFFEO_CHECK_GRID)
                .all(|k| self.derivative(k as f64 / DIFFEO_CHECK_GRID as f64) > MIN_DERIVATIVE);
        }
        true
    }
}

/// Fritsch-Butland slopes for a periodic increasing node sequence.
fn monotone_slopes(knots: &[f64], values: &[f64]) -> Vec<f64> {
    let n = knots.len();
    let h: Vec<f64> = (0..n)
        .map(|j| {
            if j + 1 < n {
                knots[j + 1] - knots[j]
            } else {
                knots[0] + 1.0 - knots[n - 1]
            }
        })
        .collect();
    let delta: Vec<f64> = (0..n)
        .map(|j| {
            let dy = if j + 1 < n {
                values[j + 1] - values[j]
            } else {
                values[0] + 1.0 - values[n - 1]
            };
            dy / h[j]
        })
        .collect();
    (0..n)
        .map(|j| {
            let jm = (j + n - 1) % n;
            let (hl, hr, dl, dr) = (h[jm], h[j], delta[jm], delta[j]);
            3.0 * (hl + hr) / ((2.0 * hr + hl) / dl + (hr + 2.0 * hl) / dr)
        })
        .collect()
}

/// A finite IFS with a non-degenerate probability vector.
#[derive(Debug, Clone)]
pub struct SystemSpec {
    space: PhaseSpace,
    maps: Vec<MapSpec>,
    probs: Vec<f64>,
    cumulative: Arc<[f64]>,
    has_derivatives: bool,
}

impl SystemSpec {
    pub fn new(maps: Vec<MapSpec>, probs: Vec<f64>) -> Result<Self> {
        let first = maps.first().ok_or_else(|| invalid("maps", "must be nonempty"))?;
        let space = first.space();
        for m in &maps {
            if m.space() != space {
                return Err(Error::PhaseSpaceMismatch {
                    expected: space.name(),
                    found: m.space().name(),
                });
            }
        }
        if probs.len() != maps.len() {
            return Err(invalid(
                "probs",
                format!("{} entries for {} maps", probs.len(), maps.len()),
            ));
        }
        let cumulative = cumulative(&probs)?;
        for (i, m) in maps.iter().enumerate() {
            m.validate(i)?;
        }
        let has_derivatives = maps.iter().all(MapSpec::has_derivative);
        Ok(Self {
            space,
            maps,
            probs,
            cumulative: cumulative.into(),
            has_derivatives,
        })
    }

    /// Uniform probabilities over the maps.
    pub fn uniform(maps: Vec<MapSpec>) -> Result<Self> {
        let n = maps.len().max(1);
        Self::new(maps, vec![1.0 / n as f64; n])
    }

    pub fn space(&self) -> PhaseSpace {
        self.space
    }

    pub fn maps(&self) -> &[MapSpec] {
        &self.maps
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn has_derivatives(&self) -> bool {
        self.has_derivatives
    }

    pub fn require_derivatives(&self) -> Result<()> {
        match self.maps.iter().position(|m| !m.has_derivative()) {
            Some(index) => Err(Error::NoDerivative { index }),
            None => Ok(()),
        }
    }

    pub fn require_one_dimensional(&self) -> Result<()> {
        if self.space.is_one_dimensional() {
            Ok(())
        } else {
            Err(Error::Unsupported(format!(
                "operation needs a 1-D phase space, system acts on {}",
                self.space.name()
            )))
        }
    }

    pub fn word_stream(&self, seed: u64, stream_id: u64) -> WordStream {
        WordStream::from_cumulative(self.cumulative.clone(), seed, stream_id)
    }

    pub fn point(&self, x: f64) -> Result<Point> {
        self.space.point(x)
    }

    #[inline]
    pub fn apply(&self, i: usize, x: &Point) -> Point {
        self.maps[i].apply_point(x)
    }

    #[inline]
    pub fn apply_1d(&self, i: usize, x: f64) -> f64 {
        self.maps[i].apply_scalar(x)
    }

    #[inline]
    pub fn lift_1d(&self, i: usize, t: f64) -> f64 {
        self.maps[i].lift(t)
    }

    #[inline]
    pub fn log_derivative_1d(&self, i: usize, x: f64) -> f64 {
        self.maps[i].derivative_unchecked(x).ln()
    }

    #[inline]
    pub fn derivative_1d(&self, i: usize, x: f64) -> f64 {
        self.maps[i].derivative_unchecked(x)
    }

    /// One skew-product step `T(i, x) = (sigma(i), f_{i_1}(x))`.
    #[inline]
    pub fn skew_step<S: SymbolSource>(&self, word: &mut S, x: &Point) -> (usize, Point) {
        let s = word.next_symbol();
        (s, self.apply(s, x))
    }

    /// Scalar version of [`SystemSpec::skew_step`] for 1-D systems.
    #[inline]
    pub fn skew_step_1d<S: SymbolSource>(&self, word: &mut S, x: f64) -> (usize, f64) {
        let s = word.next_symbol();
        (s, self.apply_1d(s, x))
    }
}

/// `f(x)` for a single map, checked against the map's phase space.
pub fn apply_map(m: &MapSpec, x: &Point) -> Result<Point> {
    m.space().check(x)?;
    Ok(m.apply_point(x))
}

/// `|f'(x)|` for a single map.
pub fn derivative(m: &MapSpec, x: &Point) -> Result<f64> {
    m.space().check(x)?;
    if !m.has_derivative() {
        return Err(Error::NoDerivative { index: 0 });
    }
    let c = x
        .coordinate()
        .ok_or_else(|| Error::Unsupported("derivative on projective space".into()))?;
    Ok(m.derivative_unchecked(c))
}

/// Orbit record along one word.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub points: Vec<Point>,
    /// `log_deriv_partial[k] = sum_{j<k} log|f'_{i_{j+1}}(X_j)|`; empty when
    /// the system has no derivative data.
    pub log_deriv_partial: Vec<f64>,
    pub word_prefix: Vec<usize>,
}

/// `X_0, ..., X_n` along `word`, with log-derivative partial sums.
pub fn iterate<S: SymbolSource>(
    sys: &SystemSpec,
    x0: &Point,
    word: &mut S,
    n: usize,
) -> Result<TrajectoryRecord> {
    sys.space.check(x0)?;
    let track = sys.has_derivatives && sys.space.is_one_dimensional();
    let mut points = Vec::with_capacity(n + 1);
    let mut word_prefix = Vec::with_capacity(n);
    let mut log_deriv_partial = Vec::with_capacity(if track { n + 1 } else { 0 });
    let mut x = *x0;
    let mut acc = 0.0;
    points.push(x);
    if track {
        log_deriv_partial.push(0.0);
    }
    for _ in 0..n {
        let s = word.next_symbol();
        if track {
            acc += sys.log_derivative_1d(s, x.coordinate().expect("1-D"));
            log_deriv_partial.push(acc);
        }
        x = sys.apply(s, &x);
        points.push(x);
        word_prefix.push(s);
    }
    Ok(TrajectoryRecord {
        points,
        log_deriv_partial,
        word_prefix,
    })
}

/// Skew-product state: a position in a symbol stream and a phase point.
#[derive(Debug, Clone)]
pub struct SkewState<S> {
    pub word: S,
    pub point: Point,
}

/// Advances a skew-product state by one symbol.
pub fn skew_step<S: SymbolSource>(sys: &SystemSpec, state: SkewState<S>) -> SkewState<S> {
    let SkewState { mut word, point } = state;
    let (_, point) = sys.skew_step(&mut word, &point);
    SkewState { word, point }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gallery;
    use crate::words::FixedWord;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(x: f64) -> Point {
        Point::Circle(CirclePoint::new(x))
    }

    fn i(x: f64) -> Point {
        Point::Interval(IntervalPoint::new(x).unwrap())
    }

    #[test]
    fn apply_map_examples() {
        assert_eq!(apply_map(&MapSpec::affine(0.5, 0.0), &i(0.8)).unwrap(), i(0.4));
        assert_eq!(apply_map(&MapSpec::rotation(0.5), &c(0.75)).unwrap(), c(0.25));
        assert_eq!(
            apply_map(&MapSpec::perturbed_rotation(0.0, 0.5), &c(0.0)).unwrap(),
            c(0.0)
        );
        assert!(matches!(
            apply_map(&MapSpec::rotation(0.5), &i(0.3)),
            Err(Error::PhaseSpaceMismatch { .. })
        ));
    }

    #[test]
    fn derivative_examples() {
        assert_eq!(derivative(&MapSpec::affine(0.5, 0.0), &i(0.7)).unwrap(), 0.5);
        assert_eq!(derivative(&MapSpec::rotation(0.3), &c(0.1)).unwrap(), 1.0);
        // 1 + 0.5 cos(0)
        assert_eq!(
            derivative(&MapSpec::perturbed_rotation(0.0, 0.5), &c(0.0)).unwrap(),
            1.5
        );
        let tab = TabulatedMap::new(vec![0.0, 0.5], vec![0.1, 0.4], None).unwrap();
        assert!(matches!(
            derivative(&MapSpec::TabulatedMonotone(tab), &c(0.2)),
            Err(Error::NoDerivative { .. })
        ));
    }

    #[test]
    fn invalid_maps_rejected() {
        assert!(SystemSpec::uniform(vec![MapSpec::perturbed_rotation(0.0, 1.2)]).is_err());
        assert!(SystemSpec::uniform(vec![MapSpec::affine(0.0, 0.5)]).is_err());
        assert!(SystemSpec::uniform(vec![MapSpec::affine(0.5, 0.7)]).is_err());
        assert!(SystemSpec::uniform(vec![MapSpec::MoebiusCircle {
            matrix: [[0.0, 1.0], [1.0, 0.0]]
        }])
        .is_err());
        assert!(SystemSpec::uniform(vec![MapSpec::affine(0.5, 0.0), MapSpec::rotation(0.1)]).is_err());
        assert!(matches!(
            SystemSpec::new(vec![MapSpec::rotation(0.1)], vec![0.9]),
            Err(Error::ProbsNotNormalized { .. })
        ));
    }

    #[test]
    fn iterate_examples() {
        let sys = gallery::binary_affine();
        let rec = iterate(&sys, &i(0.0), &mut FixedWord::new(vec![0, 1]), 2).unwrap();
        assert_eq!(rec.points[2], i(0.5));
        assert_eq!(rec.word_prefix, vec![0, 1]);

        let mut w = sys.word_stream(5, 0);
        let rec = iterate(&sys, &i(0.3), &mut w, 40).unwrap();
        let expect = 40.0 * 0.5f64.ln();
        assert!((rec.log_deriv_partial[40] - expect).abs() < 1e-12);

        let rot = gallery::two_rotations();
        let rec = iterate(&rot, &c(0.3), &mut rot.word_stream(1, 1), 50).unwrap();
        assert!(rec.log_deriv_partial.iter().all(|v| *v == 0.0));
        assert_eq!(rec.points.len(), 51);
    }

    #[test]
    fn skew_step_examples() {
        let sys = gallery::binary_affine();
        let st = SkewState {
            word: FixedWord::new(vec![1, 0]),
            point: i(0.0),
        };
        let st = skew_step(&sys, st);
        assert_eq!(st.point, i(0.5));

        let rot = SystemSpec::uniform(vec![MapSpec::rotation(0.5)]).unwrap();
        let mut st = SkewState {
            word: rot.word_stream(0, 0),
            point: c(0.1),
        };
        st = skew_step(&rot, st);
        st = skew_step(&rot, st);
        assert!((st.point.coordinate().unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(st.word.position(), 2);
    }

    #[test]
    fn skew_steps_agree_with_iterate() {
        let sys = gallery::anton();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let seed: u64 = rng.random();
            let x0 = c(rng.random());
            let n = 37;
            let rec = iterate(&sys, &x0, &mut sys.word_stream(seed, 3), n).unwrap();
            let mut st = SkewState {
                word: sys.word_stream(seed, 3),
                point: x0,
            };
            for _ in 0..n {
                st = skew_step(&sys, st);
            }
            assert_eq!(st.point, rec.points[n]);
        }
    }

    #[test]
    fn determinism() {
        let sys = gallery::moebius_pair();
        let a = iterate(&sys, &c(0.2), &mut sys.word_stream(8, 2), 500).unwrap();
        let b = iterate(&sys, &c(0.2), &mut sys.word_stream(8, 2), 500).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn chain_rule_against_central_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let systems = [gallery::anton(), gallery::moebius_pair(), gallery::slope_pair()];
        for case in 0..100 {
            let sys = &systems[case % systems.len()];
            let seed: u64 = rng.random();
            let n = 6;
            let x: f64 = 0.05 + 0.9 * rng.random::<f64>();
            let rec = iterate(sys, &sys.point(x).unwrap(), &mut sys.word_stream(seed, 0), n).unwrap();
            let word = rec.word_prefix.clone();
            // lift composition avoids wrap-around in the difference quotient
            let run = |t: f64| word.iter().fold(t, |acc, &s| match sys.space() {
                PhaseSpace::Circle => sys.lift_1d(s, acc),
                _ => sys.apply_1d(s, acc),
            });
            let h = 1e-6;
            let fd = (run(x + h) - run(x - h)) / (2.0 * h);
            let analytic = rec.log_deriv_partial[n].exp();
            let rel = (fd.abs() - analytic).abs() / analytic;
            assert!(rel < 1e-4, "case {case}: fd {fd} vs {analytic}");
        }
    }

    #[test]
    fn lifts_are_degree_one() {
        for sys in [gallery::anton(), gallery::moebius_pair(), gallery::two_rotations()] {
            for (k, m) in sys.maps().iter().enumerate() {
                for t in [0.0, 0.13, 0.5, 0.77, 0.999] {
                    let d = m.lift(t + 1.0) - m.lift(t);
                    assert!((d - 1.0).abs() < 1e-12, "map {k} at {t}: {d}");
                    assert!((reduce_unit(m.lift(t)) - m.apply_scalar(t)).abs() < 1e-12
                        || (reduce_unit(m.lift(t)) - m.apply_scalar(t)).abs() > 1.0 - 1e-12);
                }
                let mut prev = m.lift(0.0);
                for j in 1..=1000 {
                    let v = m.lift(j as f64 / 1000.0);
                    assert!(v > prev);
                    prev = v;
                }
            }
        }
    }

    #[test]
    fn tabulated_interpolates_knots_and_is_periodic() {
        let tab = TabulatedMap::new(
            vec![0.0, 0.25, 0.5, 0.75],
            vec![0.1, 0.3, 0.6, 0.85],
            Some(vec![0.8, 1.0, 1.2, 1.0]),
        )
        .unwrap();
        let m = MapSpec::TabulatedMonotone(tab);
        assert!((m.lift(0.25) - 0.3).abs() < 1e-15);
        assert!((m.lift(1.5) - 1.6).abs() < 1e-15);
        assert!((m.lift(-0.25) - (0.85 - 1.0)).abs() < 1e-15);
        assert!(m.has_derivative());
        let h = 1e-7;
        for x in [0.1, 0.3, 0.6, 0.9] {
            let fd = (m.lift(x + h) - m.lift(x - h)) / (2.0 * h);
            assert!((fd - m.derivative_unchecked(x)).abs() < 1e-6);
        }
    }
}
