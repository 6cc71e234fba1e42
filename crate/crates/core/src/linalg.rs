//! Small dense square matrices (`d <= 8`) with just enough linear algebra
//! for cocycles and projective maps.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::MAX_DIM;

/// Row-major `d x d` real matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SquareMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl TryFrom<Vec<Vec<f64>>> for SquareMatrix {
    type Error = crate::error::Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(&rows)
    }
}

impl From<SquareMatrix> for Vec<Vec<f64>> {
    fn from(m: SquareMatrix) -> Self {
        m.rows()
    }
}

impl SquareMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(invalid("matrix", format!("dimension {dim} outside 1..={MAX_DIM}")));
        }
        if rows.iter().any(|r| r.len() != dim) {
            return Err(invalid("matrix", "rows must all have length d"));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(invalid("matrix", "entries must be finite"));
        }
        Ok(Self {
            dim,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(invalid("matrix", "row-major data must have d*d entries"));
        }
        let rows: Vec<Vec<f64>> = data.chunks(dim).map(|r| r.to_vec()).collect();
        Self::from_rows(&rows)
    }

    pub fn identity(dim: usize) -> Self {
        let mut data = vec![0.0; dim * dim];
        for k in 0..dim {
            data[k * dim + k] = 1.0;
        }
        Self { dim, data }
    }

    pub fn diag(entries: &[f64]) -> Self {
        let dim = entries.len();
        let mut m = Self::identity(dim);
        for (k, e) in entries.iter().enumerate() {
            m.data[k * dim + k] = *e;
        }
        m
    }

    /// Planar rotation by `theta`.
    pub fn rotation(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self {
            dim: 2,
            data: vec![c, -s, s, c],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.dim + c]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.dim).map(|r| r.to_vec()).collect()
    }

    #[inline]
    pub fn mul_vec(&self, v: &[f64]) -> [f64; MAX_DIM] {
        let d = self.dim;
        let mut out = [0.0; MAX_DIM];
        for r in 0..d {
            let row = &self.data[r * d..(r + 1) * d];
            out[r] = row.iter().zip(v).map(|(a, b)| a * b).sum();
        }
        out
    }

    pub fn mul(&self, other: &SquareMatrix) -> SquareMatrix {
        let d = self.dim;
        let mut data = vec![0.0; d * d];
        for r in 0..d {
            for c in 0..d {
                data[r * d + c] = (0..d).map(|k| self.get(r, k) * other.get(k, c)).sum();
            }
        }
        SquareMatrix { dim: d, data }
    }

    /// Determinant by partial-pivot elimination.
    pub fn det(&self) -> f64 {
        let d = self.dim;
        let mut a = self.data.clone();
        let mut det = 1.0;
        for col in 0..d {
            let pivot = (col..d)
                .max_by(|&x, &y| a[x * d + col].abs().total_cmp(&a[y * d + col].abs()))
                .expect("nonempty");
            if a[pivot * d + col] == 0.0 {
                return 0.0;
            }
            if pivot != col {
                for k in 0..d {
                    a.swap(pivot * d + k, col * d + k);
                }
                det = -det;
            }
            let p = a[col * d + col];
            det *= p;
            for r in col + 1..d {
                let f = a[r * d + col] / p;
                for k in col..d {
                    a[r * d + k] -= f * a[col * d + k];
                }
            }
        }
        det
    }

    /// Householder QR: overwrites `self` with `Q` and returns the diagonal
    /// of `R` (signed).
    pub fn qr_in_place(&mut self) -> [f64; MAX_DIM] {
        let d = self.dim;
        let mut r = self.data.clone();
        let mut q = SquareMatrix::identity(d).data;
        let mut diag = [0.0; MAX_DIM];
        for col in 0..d {
            let norm = (col..d).map(|k| r[k * d + col].powi(2)).sum::<f64>().sqrt();
            if norm == 0.0 {
                diag[col] = 0.0;
                continue;
            }
            let alpha = if r[col * d + col] > 0.0 { -norm } else { norm };
            let mut v = [0.0; MAX_DIM];
            for k in col..d {
                v[k] = r[k * d + col];
            }
            v[col] -= alpha;
            let vnorm2: f64 = (col..d).map(|k| v[k] * v[k]).sum();
            if vnorm2 > 0.0 {
                // R <- H R
                for c in col..d {
                    let s: f64 = (col..d).map(|k| v[k] * r[k * d + c]).sum::<f64>() * 2.0 / vnorm2;
                    for k in col..d {
                        r[k * d + c] -= s * v[k];
                    }
                }
                // Q <- Q H
                for row in 0..d {
                    let s: f64 =
                        (col..d).map(|k| q[row * d + k] * v[k]).sum::<f64>() * 2.0 / vnorm2;
                    for k in col..d {
                        q[row * d + k] -= s * v[k];
                    }
                }
            }
            diag[col] = r[col * d + col];
        }
        self.data = q;
        diag
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qr_reconstructs() {
        let a = SquareMatrix::from_rows(&[
            vec![2.0, 1.0, 0.5],
            vec![0.3, -1.0, 2.0],
            vec![1.0, 0.0, 1.0],
        ])
        .unwrap();
        let mut q = a.clone();
        let diag = q.qr_in_place();
        // Q^T A is upper triangular with the returned diagonal
        let d = 3;
        for r in 0..d {
            for c in 0..d {
                let v: f64 = (0..d).map(|k| q.get(k, r) * a.get(k, c)).sum();
                if r > c {
                    assert!(v.abs() < 1e-12);
                }
                if r == c {
                    assert!((v - diag[r]).abs() < 1e-12);
                }
            }
        }
        let prod: f64 = diag[..3].iter().product();
        assert!((prod.abs() - a.det().abs()).abs() < 1e-12);
    }

    #[test]
    fn det_examples() {
        assert_eq!(SquareMatrix::diag(&[2.0, 0.5]).det(), 1.0);
        assert!((SquareMatrix::rotation(0.3).det() - 1.0).abs() < 1e-15);
        assert!(SquareMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
    }
}
