//! Built-in systems and cocycles with known analytic facts.

use std::f64::consts::{FRAC_PI_4, SQRT_2};

use serde::Serialize;

use crate::cocycles::CocycleSpec;
use crate::error::{Error, Result};
use crate::linalg::SquareMatrix;
use crate::systems::{MapSpec, SystemSpec};

/// Perturbation amplitude of the two four-fixed-point maps in `anton`:
/// `f(x) = x + ANTON_AMP/(4 pi) sin(4 pi (x - phase))`, so the derivative
/// ranges over `[1 - ANTON_AMP, 1 + ANTON_AMP]`.
pub const ANTON_AMP: f64 = 0.6;

pub const SYSTEM_IDS: [&str; 6] = [
    "binary_affine",
    "slope_pair",
    "single_contraction",
    "anton",
    "two_rotations",
    "moebius_pair",
];

pub const COCYCLE_IDS: [&str; 3] = ["diag_rot", "single_hyperbolic", "rotation_only"];

/// `{x/2, (x+1)/2}` on `[0,1]` with equal weights; Lebesgue is stationary.
pub fn binary_affine() -> SystemSpec {
    SystemSpec::uniform(vec![MapSpec::affine(0.5, 0.0), MapSpec::affine(0.5, 0.5)])
        .expect("valid gallery system")
}

/// `{x/2, x/4 + 3/4}` with equal weights; `gamma = -1.5 log 2`.
pub fn slope_pair() -> SystemSpec {
    SystemSpec::uniform(vec![MapSpec::affine(0.5, 0.0), MapSpec::affine(0.25, 0.75)])
        .expect("valid gallery system")
}

/// The single contraction `x/2`.
pub fn single_contraction() -> SystemSpec {
    SystemSpec::uniform(vec![MapSpec::affine(0.5, 0.0)]).expect("valid gallery system")
}

/// Two four-fixed-point circle diffeomorphisms and the half rotation.
///
/// `f1` fixes `{0, 1/4, 1/2, 3/4}` (repelling at 0 and 1/2), `f2` is `f1`
/// conjugated by the rotation by 1/8 and fixes `{1/8, 3/8, 5/8, 7/8}`, and
/// `f3(x) = x + 1/2`. Pairs from `[1/4,3/8] x [3/4,7/8]` never come closer
/// than 3/8.
pub fn anton() -> SystemSpec {
    let bump = |phase| MapSpec::PerturbedRotation {
        c: 0.0,
        amp: ANTON_AMP,
        harmonic: 2,
        phase,
    };
    SystemSpec::uniform(vec![bump(0.0), bump(0.125), MapSpec::rotation(0.5)])
        .expect("valid gallery system")
}

/// Two rotations by rationally independent irrational angles.
pub fn two_rotations() -> SystemSpec {
    SystemSpec::uniform(vec![
        MapSpec::rotation(SQRT_2 - 1.0),
        MapSpec::rotation((5f64.sqrt() - 1.0) / 2.0),
    ])
    .expect("valid gallery system")
}

/// Circle action of `diag(2, 1/2)` and of the rotation by `pi/4`; the
/// circle model of the `diag_rot` cocycle.
pub fn moebius_pair() -> SystemSpec {
    let (s, c) = FRAC_PI_4.sin_cos();
    SystemSpec::uniform(vec![
        MapSpec::MoebiusCircle {
            matrix: [[2.0, 0.0], [0.0, 0.5]],
        },
        MapSpec::MoebiusCircle {
            matrix: [[c, -s], [s, c]],
        },
    ])
    .expect("valid gallery system")
}

pub fn diag_rot() -> CocycleSpec {
    CocycleSpec::new(
        vec![SquareMatrix::diag(&[2.0, 0.5]), SquareMatrix::rotation(FRAC_PI_4)],
        vec![0.5, 0.5],
    )
    .expect("valid gallery cocycle")
}

pub fn single_hyperbolic() -> CocycleSpec {
    CocycleSpec::new(
        vec![SquareMatrix::from_rows(&[vec![2.0, 1.0], vec![0.0, 0.5]]).expect("2x2")],
        vec![1.0],
    )
    .expect("valid gallery cocycle")
}

pub fn rotation_only() -> CocycleSpec {
    CocycleSpec::new(vec![SquareMatrix::rotation(1.0)], vec![1.0]).expect("valid gallery cocycle")
}

pub fn system(id: &str) -> Result<SystemSpec> {
    let sys = match id {
        "binary_affine" => binary_affine(),
        "slope_pair" => slope_pair(),
        "single_contraction" => single_contraction(),
        "anton" => {
            let s = anton();
            check_anton(&s)?;
            s
        }
        "two_rotations" => two_rotations(),
        "moebius_pair" => moebius_pair(),
        other => {
            return Err(Error::InvalidParameter {
                name: "system",
                reason: format!("unknown gallery system `{other}`"),
            })
        }
    };
    Ok(sys)
}

pub fn cocycle(id: &str) -> Result<CocycleSpec> {
    match id {
        "diag_rot" => Ok(diag_rot()),
        "single_hyperbolic" => Ok(single_hyperbolic()),
        "rotation_only" => Ok(rotation_only()),
        other => Err(Error::InvalidParameter {
            name: "cocycle",
            reason: format!("unknown gallery cocycle `{other}`"),
        }),
    }
}

/// Verifies the fixed-point and derivative constraints of the `anton`
/// system numerically.
pub fn check_anton(sys: &SystemSpec) -> Result<()> {
    let fail = |reason: String| Err(Error::HypothesisFailed(reason));
    let f1_fixed = [0.0, 0.25, 0.5, 0.75];
    let f2_fixed = [0.125, 0.375, 0.625, 0.875];
    for (map, pts) in [(0, f1_fixed), (1, f2_fixed)] {
        for x in pts {
            let y = sys.apply_1d(map, x);
            if crate::geometry::circle_distance_raw(x, y) > 1e-15 {
                return fail(format!("f{} does not fix {x}", map + 1));
            }
        }
        // no other fixed points: f(x) - x changes sign only at the four listed
        let m = &sys.maps()[map];
        let grid = 4096;
        let mut sign_changes = 0;
        let mut prev = (m.lift(0.5 / grid as f64) - 0.5 / grid as f64).signum();
        for k in 1..grid {
            let t = (k as f64 + 0.5) / grid as f64;
            let s = (m.lift(t) - t).signum();
            if s != prev {
                sign_changes += 1;
                prev = s;
            }
        }
        if sign_changes + 1 != 4 && sign_changes != 4 {
            return fail(format!("f{} has {sign_changes} sign changes", map + 1));
        }
    }
    let d = |map: usize, x: f64| sys.derivative_1d(map, x);
    let min_expanding = [d(0, 0.0), d(0, 0.5), d(1, 0.125), d(1, 0.625)]
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let max_contracting = [d(0, 0.25), d(0, 0.75), d(1, 0.375), d(1, 0.875)]
        .into_iter()
        .fold(0.0, f64::max);
    if !(min_expanding > 1.0) {
        return fail(format!("repelling derivatives min {min_expanding} <= 1"));
    }
    if !(max_contracting < 1.0) {
        return fail(format!("attracting derivatives max {max_contracting} >= 1"));
    }
    let r = sys.apply_1d(2, 0.25);
    if r != 0.75 {
        return fail("f3 is not the half rotation".into());
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct GalleryEntry {
    pub id: &'static str,
    pub kind: &'static str,
    pub space: String,
    pub facts: Vec<&'static str>,
}

/// Built-in systems and cocycles with their documented exact quantities.
pub fn list_gallery() -> Vec<GalleryEntry> {
    let sys = |id, space: &str, facts| GalleryEntry {
        id,
        kind: "system",
        space: space.to_string(),
        facts,
    };
    let coc = |id, facts| GalleryEntry {
        id,
        kind: "cocycle",
        space: "projective line P^1".to_string(),
        facts,
    };
    vec![
        sys(
            "binary_affine",
            "interval [0,1]",
            vec![
                "maps {x/2, (x+1)/2}, p = (1/2, 1/2)",
                "gamma = -log 2 (exact, constant slopes)",
                "stationary measure = Lebesgue (exact)",
                "sync rate = log(1/2) on every word (exact)",
                "sigma^2(coordinate) = 1/4 (autocovariance sum)",
            ],
        ),
        sys(
            "slope_pair",
            "interval [0,1]",
            vec![
                "maps {x/2, x/4 + 3/4}, p = (1/2, 1/2)",
                "gamma = -(3/2) log 2 (exact)",
                "finite-time exponent = -log 2 (1 + B/n), B ~ Binomial(n, 1/2)",
            ],
        ),
        sys(
            "single_contraction",
            "interval [0,1]",
            vec![
                "map {x/2}; stationary measure = Dirac at 0",
                "gamma = -log 2",
            ],
        ),
        sys(
            "anton",
            "circle [0,1)",
            vec![
                "f1 fixes {0,1/4,1/2,3/4}, f2 fixes {1/8,3/8,5/8,7/8}, f3 = x + 1/2",
                "non-proximal; (LC) holds; not synchronizing despite local contraction",
                "pairs in [1/4,3/8] x [3/4,7/8] stay >= 3/8 apart on every word",
                "concrete f1, f2 are one admissible realization (amp = 0.6, harmonic 2)",
            ],
        ),
        sys(
            "two_rotations",
            "circle [0,1)",
            vec![
                "rotations by sqrt(2)-1 and (sqrt(5)-1)/2",
                "gamma = 0; Lebesgue is invariant for every map ((H) fails)",
                "never synchronizes: distances are constant",
            ],
        ),
        sys(
            "moebius_pair",
            "circle [0,1) = projective line",
            vec![
                "circle action of diag(2,1/2) and rotation by pi/4",
                "smooth (analytic) diffeomorphisms; (H) holds",
                "circle model of the diag_rot cocycle",
            ],
        ),
        coc(
            "diag_rot",
            vec![
                "{diag(2,1/2), R(pi/4)}, p = (1/2, 1/2)",
                "strongly irreducible, simple top exponent (by construction)",
                "chi_1 + chi_2 = 0 (determinant 1)",
            ],
        ),
        coc(
            "single_hyperbolic",
            vec![
                "{[[2,1],[0,1/2]]}",
                "chi = (-log 2, log 2) (eigenvalue moduli)",
                "not strongly irreducible (e1 invariant)",
            ],
        ),
        coc(
            "rotation_only",
            vec!["{R(1)}", "chi = (0, 0); no gap, (LC) rate undefined"],
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anton_constraints_hold() {
        check_anton(&anton()).unwrap();
        assert!(system("anton").is_ok());
    }

    #[test]
    fn every_id_loads() {
        for id in SYSTEM_IDS {
            system(id).unwrap();
        }
        for id in COCYCLE_IDS {
            cocycle(id).unwrap();
        }
        assert!(system("nope").is_err());
    }

    #[test]
    fn listing_contains_documented_entries() {
        let g = list_gallery();
        let find = |id: &str| g.iter().find(|e| e.id == id).unwrap();
        assert!(find("binary_affine").facts.iter().any(|f| f.contains("gamma = -log 2")));
        assert!(find("anton")
            .facts
            .iter()
            .any(|f| f.contains("non-proximal; (LC) holds; not synchronizing despite local contraction")));
        assert_eq!(find("diag_rot").kind, "cocycle");
    }
}
