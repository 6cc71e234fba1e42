//! Fixtures shared by the criterion benches.

use rdsw_core::{gallery, Point, SystemSpec};

/// A gallery system with a pair of starting points in its phase space.
pub fn system_with_pair(id: &str, x: f64, y: f64) -> (SystemSpec, Point, Point) {
    let sys = gallery::system(id).expect("gallery id");
    let px = sys.point(x).expect("x in phase space");
    let py = sys.point(y).expect("y in phase space");
    (sys, px, py)
}
