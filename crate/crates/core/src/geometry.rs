//! Phase spaces and their metrics.
//!
//! Three compact spaces are supported: the circle `[0,1)` with the arc
//! metric, the unit interval with the absolute-value metric, and real
//! projective space of dimension `d - 1` (for `2 <= d <= 8`) with the
//! wedge-product metric `‖x ∧ y‖`. Any of them can be snowflaked by an
//! exponent `alpha` in `(0, 1]`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Largest supported ambient dimension for projective points.
pub const MAX_DIM: usize = 8;

/// Reduces a real number into `[0, 1)`.
#[inline]
pub fn reduce_unit(x: f64) -> f64 {
    let r = x.rem_euclid(1.0);
    // rem_euclid rounds tiny negative inputs up to exactly 1.0
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Arc distance on the circle `[0,1)`: `min(|x-y|, 1-|x-y|)`.
#[inline]
pub fn circle_distance_raw(x: f64, y: f64) -> f64 {
    let d = (x - y).abs();
    d.min(1.0 - d)
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct CirclePoint(f64);

impl CirclePoint {
    pub fn new(x: f64) -> Self {
        Self(reduce_unit(x))
    }

    pub fn coordinate(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct IntervalPoint(f64);

impl IntervalPoint {
    pub fn new(x: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&x) {
            Ok(Self(x))
        } else {
            Err(invalid("x", format!("{x} is outside [0, 1]")))
        }
    }

    /// Clamps into `[0, 1]`; used after map application to absorb rounding.
    pub fn clamped(x: f64) -> Self {
        Self(x.clamp(0.0, 1.0))
    }

    pub fn coordinate(self) -> f64 {
        self.0
    }
}

/// A line through the origin of `R^d`, stored as a unit representative
/// whose first nonzero component is positive.
#[derive(Debug, Clone, Copy)]
pub struct ProjectivePoint {
    dim: usize,
    coords: [f64; MAX_DIM],
}

impl ProjectivePoint {
    pub fn new(v: &[f64]) -> Result<Self> {
        let dim = v.len();
        if !(2..=MAX_DIM).contains(&dim) {
            return Err(invalid("dim", format!("{dim} is outside 2..={MAX_DIM}")));
        }
        let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(invalid("representative", "must be a finite nonzero vector"));
        }
        let mut coords = [0.0; MAX_DIM];
        for (dst, src) in coords.iter_mut().zip(v) {
            *dst = src / norm;
        }
        let mut p = Self { dim, coords };
        p.canonicalize();
        Ok(p)
    }

    /// Direction at angle `theta` in the plane `R^2`.
    pub fn from_angle(theta: f64) -> Self {
        let mut coords = [0.0; MAX_DIM];
        coords[0] = theta.cos();
        coords[1] = theta.sin();
        let mut p = Self { dim: 2, coords };
        p.canonicalize();
        p
    }

    /// Standard basis direction `e_k` in `R^dim`.
    pub fn basis(dim: usize, k: usize) -> Result<Self> {
        let mut v = vec![0.0; dim];
        if k >= dim {
            return Err(invalid("k", format!("{k} >= dim {dim}")));
        }
        v[k] = 1.0;
        Self::new(&v)
    }

    pub(crate) fn from_raw(dim: usize, raw: [f64; MAX_DIM]) -> Option<Self> {
        let norm = raw[..dim].iter().map(|c| c * c).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return None;
        }
        let mut coords = [0.0; MAX_DIM];
        for k in 0..dim {
            coords[k] = raw[k] / norm;
        }
        let mut p = Self { dim, coords };
        p.canonicalize();
        Some(p)
    }

    fn canonicalize(&mut self) {
        if let Some(first) = self.coords[..self.dim].iter().find(|c| **c != 0.0) {
            if *first < 0.0 {
                for c in &mut self.coords[..self.dim] {
                    *c = -*c;
                }
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn representative(&self) -> &[f64] {
        &self.coords[..self.dim]
    }

    /// Angle in `[0, pi)` of a planar direction.
    pub fn angle(&self) -> f64 {
        let t = self.coords[1].atan2(self.coords[0]);
        if t < 0.0 {
            t + std::f64::consts::PI
        } else {
            t
        }
    }
}

impl PartialEq for ProjectivePoint {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.representative() == other.representative()
    }
}

pub fn circle_distance(x: CirclePoint, y: CirclePoint) -> f64 {
    circle_distance_raw(x.0, y.0)
}

pub fn interval_distance(x: IntervalPoint, y: IntervalPoint) -> f64 {
    (x.0 - y.0).abs()
}

/// Norm of the wedge product of two unit representatives.
pub fn projective_distance(x: &ProjectivePoint, y: &ProjectivePoint) -> f64 {
    let (a, b) = (x.representative(), y.representative());
    let d = a.len().min(b.len());
    let mut acc = 0.0;
    for i in 0..d {
        for j in i + 1..d {
            let w = a[i] * b[j] - a[j] * b[i];
            acc += w * w;
        }
    }
    acc.sqrt().min(1.0)
}

/// `dist^alpha`, the snowflake of a metric value.
pub fn snowflake(dist: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if dist < 0.0 || dist.is_nan() {
        return Err(invalid("dist", format!("{dist} is negative")));
    }
    Ok(snowflake_unchecked(dist, alpha))
}

#[inline]
pub(crate) fn snowflake_unchecked(dist: f64, alpha: f64) -> f64 {
    if alpha == 1.0 {
        dist
    } else if dist == 0.0 {
        0.0
    } else {
        dist.powf(alpha)
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(invalid("alpha", format!("{alpha} is outside (0, 1]")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseSpace {
    Circle,
    Interval,
    Projective,
}

/// A base metric together with its snowflake exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricKind {
    pub base: BaseSpace,
    pub alpha: f64,
}

impl MetricKind {
    pub fn new(base: BaseSpace, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self { base, alpha })
    }

    pub fn distance(&self, x: &Point, y: &Point) -> Result<f64> {
        let d = match (self.base, x, y) {
            (BaseSpace::Circle, Point::Circle(a), Point::Circle(b)) => circle_distance(*a, *b),
            (BaseSpace::Interval, Point::Interval(a), Point::Interval(b)) => {
                interval_distance(*a, *b)
            }
            (BaseSpace::Projective, Point::Projective(a), Point::Projective(b)) => {
                projective_distance(a, b)
            }
            _ => {
                return Err(Error::PhaseSpaceMismatch {
                    expected: base_name(self.base),
                    found: x.space_name(),
                })
            }
        };
        Ok(snowflake_unchecked(d, self.alpha))
    }
}

fn base_name(b: BaseSpace) -> &'static str {
    match b {
        BaseSpace::Circle => "circle",
        BaseSpace::Interval => "interval",
        BaseSpace::Projective => "projective",
    }
}

/// A point of one of the supported phase spaces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Point {
    Circle(CirclePoint),
    Interval(IntervalPoint),
    Projective(ProjectivePoint),
}

impl Point {
    pub fn space_name(&self) -> &'static str {
        match self {
            Point::Circle(_) => "circle",
            Point::Interval(_) => "interval",
            Point::Projective(_) => "projective",
        }
    }

    /// Scalar coordinate of a circle or interval point.
    pub fn coordinate(&self) -> Option<f64> {
        match self {
            Point::Circle(p) => Some(p.coordinate()),
            Point::Interval(p) => Some(p.coordinate()),
            Point::Projective(_) => None,
        }
    }
}

/// The phase space a system acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhaseSpace {
    Circle,
    Interval,
    Projective { dim: usize },
}

impl PhaseSpace {
    pub fn name(&self) -> &'static str {
        match self {
            PhaseSpace::Circle => "circle",
            PhaseSpace::Interval => "interval",
            PhaseSpace::Projective { .. } => "projective",
        }
    }

    pub fn is_one_dimensional(&self) -> bool {
        !matches!(self, PhaseSpace::Projective { .. })
    }

    pub fn diameter(&self) -> f64 {
        match self {
            PhaseSpace::Circle => 0.5,
            PhaseSpace::Interval | PhaseSpace::Projective { .. } => 1.0,
        }
    }

    pub fn contains(&self, p: &Point) -> bool {
        match (self, p) {
            (PhaseSpace::Circle, Point::Circle(_)) | (PhaseSpace::Interval, Point::Interval(_)) => {
                true
            }
            (PhaseSpace::Projective { dim }, Point::Projective(q)) => q.dim() == *dim,
            _ => false,
        }
    }

    pub fn check(&self, p: &Point) -> Result<()> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(Error::PhaseSpaceMismatch {
                expected: self.name(),
                found: p.space_name(),
            })
        }
    }

    /// Builds a point from a scalar coordinate (1-D spaces only).
    pub fn point(&self, x: f64) -> Result<Point> {
        match self {
            PhaseSpace::Circle => Ok(Point::Circle(CirclePoint::new(x))),
            PhaseSpace::Interval => Ok(Point::Interval(IntervalPoint::new(x)?)),
            PhaseSpace::Projective { .. } => Err(Error::Unsupported(
                "scalar coordinates on projective space".into(),
            )),
        }
    }

    /// Scalar distance between two coordinates of a 1-D space.
    #[inline]
    pub fn distance_1d(&self, x: f64, y: f64) -> f64 {
        match self {
            PhaseSpace::Circle => circle_distance_raw(x, y),
            _ => (x - y).abs(),
        }
    }

    pub fn distance(&self, x: &Point, y: &Point) -> Result<f64> {
        self.check(x)?;
        self.check(y)?;
        Ok(match (x, y) {
            (Point::Circle(a), Point::Circle(b)) => circle_distance(*a, *b),
            (Point::Interval(a), Point::Interval(b)) => interval_distance(*a, *b),
            (Point::Projective(a), Point::Projective(b)) => projective_distance(a, b),
            _ => unreachable!("checked above"),
        })
    }

    /// Distance without phase-space checks; callers guarantee membership.
    #[inline]
    pub(crate) fn distance_unchecked(&self, x: &Point, y: &Point) -> f64 {
        match (x, y) {
            (Point::Circle(a), Point::Circle(b)) => circle_distance(*a, *b),
            (Point::Interval(a), Point::Interval(b)) => interval_distance(*a, *b),
            (Point::Projective(a), Point::Projective(b)) => projective_distance(a, b),
            _ => f64::NAN,
        }
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        match self {
            PhaseSpace::Circle => Point::Circle(CirclePoint::new(rng.random::<f64>())),
            PhaseSpace::Interval => Point::Interval(IntervalPoint::clamped(rng.random::<f64>())),
            PhaseSpace::Projective { dim } => loop {
                // Gaussian directions are uniform on the sphere
                let mut raw = [0.0; MAX_DIM];
                for c in raw.iter_mut().take(*dim) {
                    *c = gaussian(rng);
                }
                if let Some(p) = ProjectivePoint::from_raw(*dim, raw) {
                    break Point::Projective(p);
                }
            },
        }
    }

    /// A point at distance approximately `delta` from `x`.
    pub fn offset<R: Rng + ?Sized>(&self, x: &Point, delta: f64, rng: &mut R) -> Point {
        match (self, x) {
            (PhaseSpace::Circle, Point::Circle(p)) => {
                Point::Circle(CirclePoint::new(p.coordinate() + delta))
            }
            (PhaseSpace::Interval, Point::Interval(p)) => {
                let c = p.coordinate();
                let y = if c + delta <= 1.0 { c + delta } else { c - delta };
                Point::Interval(IntervalPoint::clamped(y))
            }
            (PhaseSpace::Projective { dim }, Point::Projective(p)) => {
                // rotate toward a random orthogonal direction by angle asin(delta)
                let v = p.representative();
                let mut w = [0.0; MAX_DIM];
                loop {
                    for c in w.iter_mut().take(*dim) {
                        *c = gaussian(rng);
                    }
                    let dot: f64 = (0..*dim).map(|k| w[k] * v[k]).sum();
                    for k in 0..*dim {
                        w[k] -= dot * v[k];
                    }
                    let n = (0..*dim).map(|k| w[k] * w[k]).sum::<f64>().sqrt();
                    if n > 1e-8 {
                        for c in w.iter_mut().take(*dim) {
                            *c /= n;
                        }
                        break;
                    }
                }
                let t = delta.clamp(0.0, 1.0).asin();
                let mut raw = [0.0; MAX_DIM];
                for k in 0..*dim {
                    raw[k] = t.cos() * v[k] + t.sin() * w[k];
                }
                Point::Projective(ProjectivePoint::from_raw(*dim, raw).unwrap_or(*p))
            }
            _ => *x,
        }
    }

    /// A point at (or near) maximal distance from `x`.
    pub fn antipode<R: Rng + ?Sized>(&self, x: &Point, rng: &mut R) -> Point {
        match (self, x) {
            (PhaseSpace::Circle, Point::Circle(p)) => {
                Point::Circle(CirclePoint::new(p.coordinate() + 0.5))
            }
            (PhaseSpace::Interval, Point::Interval(p)) => {
                let c = p.coordinate();
                Point::Interval(IntervalPoint::clamped(if c < 0.5 { 1.0 } else { 0.0 }))
            }
            (PhaseSpace::Projective { .. }, _) => self.offset(x, 1.0, rng),
            _ => *x,
        }
    }
}

pub(crate) fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // Box-Muller, one branch
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn circle_distance_examples() {
        let d = |a, b| circle_distance(CirclePoint::new(a), CirclePoint::new(b));
        assert_eq!(d(0.25, 0.75), 0.5);
        assert!((d(0.1, 0.9) - 0.2).abs() < 1e-15);
        assert_eq!(d(0.3, 0.3), 0.0);
    }

    #[test]
    fn reduction_is_idempotent() {
        for x in [-1e-17, -0.25, 1.0, 3.75, 0.999_999_999_999_999_9] {
            let r = reduce_unit(x);
            assert!((0.0..1.0).contains(&r), "{x} -> {r}");
            assert_eq!(reduce_unit(r), r);
        }
    }

    #[test]
    fn projective_distance_examples() {
        let e1 = ProjectivePoint::basis(2, 0).unwrap();
        let e2 = ProjectivePoint::basis(2, 1).unwrap();
        let diag = ProjectivePoint::new(&[1.0, 1.0]).unwrap();
        assert_eq!(projective_distance(&e1, &e2), 1.0);
        assert_eq!(projective_distance(&e1, &e1), 0.0);
        // det [[1, 1/sqrt2], [0, 1/sqrt2]] by hand
        assert!((projective_distance(&e1, &diag) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn projective_sign_flip_is_same_point() {
        let a = ProjectivePoint::new(&[0.3, -0.4, 0.5]).unwrap();
        let b = ProjectivePoint::new(&[-0.3, 0.4, -0.5]).unwrap();
        assert_eq!(a, b);
        let c = ProjectivePoint::new(&[0.1, 0.2, 0.9]).unwrap();
        assert_eq!(projective_distance(&a, &c), projective_distance(&b, &c));
    }

    #[test]
    fn snowflake_examples_and_errors() {
        assert!((snowflake(0.5, 0.5).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(snowflake(0.0, 0.3).unwrap(), 0.0);
        assert_eq!(snowflake(1.0, 0.7).unwrap(), 1.0);
        assert!(snowflake(0.5, 0.0).is_err());
        assert!(snowflake(0.5, 1.5).is_err());
        assert!(snowflake(-0.1, 0.5).is_err());
    }

    #[test]
    fn triangle_inequalities_on_random_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let proj = PhaseSpace::Projective { dim: 3 };
        for _ in 0..10_000 {
            let (a, b, c): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
            let d = circle_distance_raw;
            assert!(d(a, c) <= d(a, b) + d(b, c) + 1e-12);
            assert!(d(a, b) <= 0.5);
            for alpha in [0.25, 0.5, 0.9] {
                let s = |u, v| snowflake_unchecked(d(u, v), alpha);
                assert!(s(a, c) <= s(a, b) + s(b, c) + 1e-12);
            }
            let (x, y, z) = (
                proj.sample_uniform(&mut rng),
                proj.sample_uniform(&mut rng),
                proj.sample_uniform(&mut rng),
            );
            let pd = |u: &Point, v: &Point| proj.distance(u, v).unwrap();
            assert!(pd(&x, &z) <= pd(&x, &y) + pd(&y, &z) + 1e-12);
            assert!(pd(&x, &y) <= 1.0);
        }
    }

    #[test]
    fn metric_kind_rejects_mismatch() {
        let m = MetricKind::new(BaseSpace::Circle, 1.0).unwrap();
        let p = Point::Interval(IntervalPoint::new(0.5).unwrap());
        assert!(m.distance(&p, &p).is_err());
        assert!(MetricKind::new(BaseSpace::Circle, 0.0).is_err());
    }
}
