//! Small dense row-major matrix and vector kernel.
//!
//! Only what the Levenberg-Marquardt loop needs: products, the Gram matrix
//! `AᵀA`, the transposed product `Aᵀv`, and a Cholesky solve for symmetric
//! positive-definite systems. Everything is `f64`.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

fn check_finite(data: &[f64], what: &str) -> Result<()> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NumericOverflow(format!(
            "{what} entry {i} is not finite ({})",
            data[i]
        ))),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(data: Vec<f64>) -> Result<Self> {
        check_finite(&data, "vector")?;
        Ok(Vector(data))
    }

    pub fn zeros(len: usize) -> Self {
        Vector(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn dot(&self, other: &Vector) -> Result<f64> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch {
                op: "dot",
                expected: self.len(),
                found: other.len(),
            });
        }
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum())
    }

    pub fn norm_inf(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn norm2(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `self - other`, rejecting non-finite results.
    pub fn sub(&self, other: &Vector) -> Result<Vector> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch {
                op: "sub",
                expected: self.len(),
                found: other.len(),
            });
        }
        Vector::new(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }
}

impl Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for Vector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid(format!(
                "matrix must be at least 1x1, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                op: "Matrix::new",
                expected: rows * cols,
                found: data.len(),
            });
        }
        check_finite(&data, "matrix")?;
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch {
                op: "Matrix::from_rows",
                expected: cols,
                found: bad.len(),
            });
        }
        Matrix::new(rows.len(), cols, rows.concat())
    }

    /// # Panics
    /// Panics if either dimension is zero.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix must be at least 1x1");
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub(crate) fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, b: &Matrix) -> Result<Matrix> {
        if self.cols != b.rows {
            return Err(Error::DimensionMismatch {
                op: "matmul",
                expected: self.cols,
                found: b.rows,
            });
        }
        let mut out = Matrix::zeros(self.rows, b.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
            for (k, &a_ik) in self.row(i).iter().enumerate() {
                if a_ik == 0.0 {
                    continue;
                }
                for (o, &b_kj) in out_row.iter_mut().zip(b.row(k)) {
                    *o += a_ik * b_kj;
                }
            }
        }
        check_finite(&out.data, "matmul result")?;
        Ok(out)
    }

    pub fn matvec(&self, v: &Vector) -> Result<Vector> {
        if self.cols != v.len() {
            return Err(Error::DimensionMismatch {
                op: "matvec",
                expected: self.cols,
                found: v.len(),
            });
        }
        Vector::new(
            (0..self.rows)
                .map(|i| self.row(i).iter().zip(v.iter()).map(|(a, b)| a * b).sum())
                .collect(),
        )
    }

    /// `Aᵀv` without materialising the transpose.
    pub fn tr_matvec(&self, v: &Vector) -> Result<Vector> {
        if self.rows != v.len() {
            return Err(Error::DimensionMismatch {
                op: "tr_matvec",
                expected: self.rows,
                found: v.len(),
            });
        }
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * vi;
            }
        }
        Vector::new(out)
    }

    /// Gram matrix `AᵀA`, accumulated row by row over the upper triangle
    /// and mirrored, so the result is exactly symmetric.
    pub fn gram(&self) -> Result<Matrix> {
        let n = self.cols;
        let mut g = vec![0.0; n * n];
        for i in 0..self.rows {
            let r = self.row(i);
            for (a, &ra) in r.iter().enumerate() {
                if ra == 0.0 {
                    continue;
                }
                let g_row = &mut g[a * n..(a + 1) * n];
                for b in a..n {
                    g_row[b] += ra * r[b];
                }
            }
        }
        for a in 0..n {
            for b in 0..a {
                g[a * n + b] = g[b * n + a];
            }
        }
        check_finite(&g, "gram result")?;
        Ok(Matrix {
            rows: n,
            cols: n,
            data: g,
        })
    }

    /// Returns `self + mu·I`. Requires a square matrix.
    pub fn add_diagonal(&self, mu: f64) -> Result<Matrix> {
        if self.rows != self.cols {
            return Err(Error::DimensionMismatch {
                op: "add_diagonal",
                expected: self.rows,
                found: self.cols,
            });
        }
        let mut out = self.clone();
        for i in 0..self.rows {
            out[(i, i)] += mu;
        }
        check_finite(&out.data, "damped matrix")?;
        Ok(out)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Relative tolerance used to accept a matrix as symmetric.
pub const SYMMETRY_TOL: f64 = 1e-9;

/// Solves `a·x = b` for symmetric positive-definite `a` by Cholesky
/// factorisation `a = L·Lᵀ` followed by two triangular solves.
///
/// A non-positive pivot yields [`Error::NotPositiveDefinite`]; the matrix is
/// never regularised here.
pub fn solve_spd(a: &Matrix, b: &Vector) -> Result<Vector> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::DimensionMismatch {
            op: "solve_spd (square)",
            expected: n,
            found: a.cols(),
        });
    }
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            op: "solve_spd (rhs)",
            expected: n,
            found: b.len(),
        });
    }
    let scale = a.max_abs().max(f64::MIN_POSITIVE);
    for i in 0..n {
        for j in 0..i {
            if (a[(i, j)] - a[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::invalid(format!(
                    "solve_spd: matrix not symmetric at ({i},{j})"
                )));
            }
        }
    }

    // Lower factor, row-major, only j <= i used. Reads the lower triangle of a.
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let dot: f64 = (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum();
            let s = a[(i, j)] - dot;
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return Err(Error::NotPositiveDefinite { pivot: i });
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }

    // L y = b
    let mut y = vec![0.0; n];
    for i in 0..n {
        let dot: f64 = (0..i).map(|k| l[i * n + k] * y[k]).sum();
        y[i] = (b[i] - dot) / l[i * n + i];
    }
    // Lᵀ x = y
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let dot: f64 = (i + 1..n).map(|k| l[k * n + i] * x[k]).sum();
        x[i] = (y[i] - dot) / l[i * n + i];
    }
    Vector::new(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
        let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        Matrix::new(rows, cols, data).unwrap()
    }

    fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
        let m = random_matrix(rng, n, n);
        m.transpose()
            .matmul(&m)
            .unwrap()
            .add_diagonal(1.0)
            .unwrap()
    }

    #[test]
    fn identity_matmul_is_noop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_matrix(&mut rng, 3, 3);
        assert_eq!(Matrix::identity(3).matmul(&m).unwrap(), m);
    }

    #[test]
    fn zero_matmul_annihilates() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = random_matrix(&mut rng, 3, 4);
        let z = Matrix::zeros(2, 3);
        assert_eq!(z.matmul(&m).unwrap(), Matrix::zeros(2, 4));
    }

    #[test]
    fn matmul_hand_example() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![5.0], vec![6.0]]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.as_slice(), &[17.0, 39.0]);
        assert_eq!((c.rows(), c.cols()), (2, 1));
    }

    #[test]
    fn matmul_rejects_mismatch() {
        let a = Matrix::zeros(2, 3);
        assert!(matches!(
            a.matmul(&Matrix::zeros(2, 2)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn matvec_examples() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let v = Vector::new(vec![5.0, 6.0]).unwrap();
        assert_eq!(a.matvec(&v).unwrap().as_slice(), &[17.0, 39.0]);
        assert_eq!(Matrix::identity(2).matvec(&v).unwrap(), v);
        assert_eq!(a.matvec(&Vector::zeros(2)).unwrap(), Vector::zeros(2));
        assert!(a.matvec(&Vector::zeros(3)).is_err());
    }

    #[test]
    fn tr_matvec_and_gram_match_transpose_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_matrix(&mut rng, 7, 4);
        let v = Vector::new((0..7).map(|i| i as f64 - 3.0).collect()).unwrap();
        let at = a.transpose();
        let direct = at.matvec(&v).unwrap();
        let fused = a.tr_matvec(&v).unwrap();
        for i in 0..4 {
            assert!((direct[i] - fused[i]).abs() < 1e-12);
        }
        let g1 = at.matmul(&a).unwrap();
        let g2 = a.gram().unwrap();
        for (x, y) in g1.as_slice().iter().zip(g2.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn new_rejects_bad_shapes_and_nan() {
        assert!(Matrix::new(0, 1, vec![]).is_err());
        assert!(Matrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(matches!(
            Matrix::new(1, 1, vec![f64::NAN]),
            Err(Error::NumericOverflow(_))
        ));
        assert!(Vector::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn solve_identity_and_diagonal() {
        let b = Vector::new(vec![1.5, -2.0, 3.0]).unwrap();
        assert_eq!(solve_spd(&Matrix::identity(3), &b).unwrap(), b);
        let d = Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 4.0]]).unwrap();
        let x = solve_spd(&d, &Vector::new(vec![2.0, 4.0]).unwrap()).unwrap();
        assert!(x.iter().all(|v| (v - 1.0).abs() < 1e-15), "{x:?}");
    }

    #[test]
    fn solve_reports_indefinite_pivot() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        let b = Vector::new(vec![1.0, 1.0]).unwrap();
        assert!(matches!(
            solve_spd(&a, &b),
            Err(Error::NotPositiveDefinite { pivot: 1 })
        ));
        let z = Matrix::zeros(2, 2);
        assert!(matches!(
            solve_spd(&z, &b),
            Err(Error::NotPositiveDefinite { pivot: 0 })
        ));
    }

    #[test]
    fn solve_rejects_asymmetric() {
        let a = Matrix::from_rows(&[vec![2.0, 1.0], vec![0.0, 2.0]]).unwrap();
        let b = Vector::new(vec![1.0, 1.0]).unwrap();
        assert!(matches!(solve_spd(&a, &b), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn solve_residual_seeded_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for &n in &[1usize, 2, 5, 17, 64, 108, 256] {
            let a = random_spd(&mut rng, n);
            let b = Vector::new((0..n).map(|_| rng.random_range(-10.0..10.0)).collect()).unwrap();
            let x = solve_spd(&a, &b).unwrap();
            let r = a.matvec(&x).unwrap().sub(&b).unwrap();
            assert!(
                r.norm_inf() / b.norm_inf().max(1.0) <= 1e-8,
                "n = {n}: residual {}",
                r.norm_inf()
            );
        }
    }

    #[test]
    fn damped_gram_factorizes_for_tiny_mu() {
        // Rank-deficient J: duplicate columns.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let base = random_matrix(&mut rng, 6, 3);
        let mut rows = Vec::new();
        for i in 0..6 {
            let r = base.row(i);
            rows.push(vec![r[0], r[1], r[2], r[0], r[1]]);
        }
        let j = Matrix::from_rows(&rows).unwrap();
        let g = j.gram().unwrap();
        let b = Vector::new(vec![1.0; 5]).unwrap();
        let x = solve_spd(&g.add_diagonal(1e-6).unwrap(), &b).unwrap();
        assert!(x.iter().all(|v| v.is_finite()));
    }

    mod props {
        use super::{random_matrix, random_spd};
        use crate::linalg::{solve_spd, Vector};
        use proptest::prelude::*;
        use rand::{Rng as _, SeedableRng};
        use rand_chacha::ChaCha8Rng;

        proptest! {
            #[test]
            fn matmul_associative(seed in any::<u64>(), r in 1usize..6, k in 1usize..6, s in 1usize..6, c in 1usize..6) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let a = random_matrix(&mut rng, r, k);
                let b = random_matrix(&mut rng, k, s);
                let cm = random_matrix(&mut rng, s, c);
                let left = a.matmul(&b).unwrap().matmul(&cm).unwrap();
                let right = a.matmul(&b.matmul(&cm).unwrap()).unwrap();
                let scale = left.max_abs().max(1.0);
                for (x, y) in left.as_slice().iter().zip(right.as_slice()) {
                    prop_assert!((x - y).abs() <= 1e-9 * scale);
                }
            }

            #[test]
            fn solve_spd_residual_bound(seed in any::<u64>(), n in 1usize..40) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let a = random_spd(&mut rng, n);
                let b = Vector::new((0..n).map(|_| rng.random_range(-5.0..5.0)).collect()).unwrap();
                let x = solve_spd(&a, &b).unwrap();
                let r = a.matvec(&x).unwrap().sub(&b).unwrap();
                prop_assert!(r.norm_inf() / b.norm_inf().max(1.0) <= 1e-8);
            }

            #[test]
            fn damped_gram_is_positive_definite(seed in any::<u64>(), rows in 1usize..12, cols in 1usize..10) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let j = random_matrix(&mut rng, rows, cols);
                let g = j.gram().unwrap().add_diagonal(1e-12).unwrap();
                let b = Vector::new(vec![1.0; cols]).unwrap();
                prop_assert!(solve_spd(&g, &b).is_ok());
            }
        }
    }
}
