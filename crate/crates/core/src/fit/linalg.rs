//! Dense least squares by Householder QR.

use crate::scalar::Scalar;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    /// Panics if the rows have different lengths.
    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self { rows: rows.len(), cols, data }
    }

    pub fn with_capacity(cols: usize, rows: usize) -> Self {
        Self { rows: 0, cols, data: Vec::with_capacity(rows * cols) }
    }

    pub fn push_row(&mut self, row: &[T]) {
        assert_eq!(row.len(), self.cols, "row length");
        self.data.extend_from_slice(row);
        self.rows += 1;
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    /// Rows selected by `keep`, in order.
    pub fn select_rows(&self, keep: &[bool]) -> Self {
        let mut out = Self::with_capacity(self.cols, keep.iter().filter(|k| **k).count());
        for (i, _) in keep.iter().enumerate().filter(|(_, k)| **k) {
            out.push_row(self.row(i));
        }
        out
    }
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + *x * *y)
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LeastSquares<T> {
    pub beta: Vec<T>,
    /// `(X' W X)^{-1}`.
    pub xtwx_inv: Vec<Vec<T>>,
}

/// Index of the first column that is (numerically) a linear combination of the
/// preceding ones, or of a column beyond the number of usable rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct RankDeficient(pub usize);

/// Minimises `sum w_i (y_i - x_i' b)^2 + ridge * |b|^2`.
pub(crate) fn weighted_least_squares<T: Scalar>(
    x: &Matrix<T>,
    y: &[T],
    w: &[T],
    ridge: T,
) -> Result<LeastSquares<T>, RankDeficient> {
    let p = x.cols();
    let extra = if ridge > T::zero() { p } else { 0 };
    let n = x.rows() + extra;
    // column-major copy of sqrt(W) X, with ridge rows appended
    let mut a: Vec<Vec<T>> = vec![Vec::with_capacity(n); p];
    let mut b: Vec<T> = Vec::with_capacity(n);
    for i in 0..x.rows() {
        let s = w[i].sqrt();
        for (j, col) in a.iter_mut().enumerate() {
            col.push(s * x.get(i, j));
        }
        b.push(s * y[i]);
    }
    for r in 0..extra {
        for (j, col) in a.iter_mut().enumerate() {
            col.push(if j == r { ridge.sqrt() } else { T::zero() });
        }
        b.push(T::zero());
    }
    let tol = T::epsilon().sqrt();
    let norms: Vec<T> = a.iter().map(|c| dot(c, c).sqrt()).collect();
    for j in 0..p {
        if j >= n {
            return Err(RankDeficient(j));
        }
        let alpha = dot(&a[j][j..], &a[j][j..]).sqrt();
        if norms[j] == T::zero() || alpha <= tol * norms[j] {
            return Err(RankDeficient(j));
        }
        // Householder vector v = x - sign(x0) |x| e1, stored in place of column j
        let sign = if a[j][j] >= T::zero() { T::one() } else { -T::one() };
        let mut v: Vec<T> = a[j][j..].to_vec();
        v[0] = v[0] + sign * alpha;
        let vnorm2 = dot(&v, &v);
        let (head, tail) = a.split_at_mut(j + 1);
        for col in tail.iter_mut() {
            let f = (T::one() + T::one()) * dot(&v, &col[j..]) / vnorm2;
            for (c, vi) in col[j..].iter_mut().zip(&v) {
                *c = *c - f * *vi;
            }
        }
        let f = (T::one() + T::one()) * dot(&v, &b[j..]) / vnorm2;
        for (c, vi) in b[j..].iter_mut().zip(&v) {
            *c = *c - f * *vi;
        }
        let col = &mut head[j];
        col[j] = -sign * alpha;
        for c in col[j + 1..].iter_mut() {
            *c = T::zero();
        }
    }
    // R is a[j][i] for i <= j
    let r = |i: usize, j: usize| a[j][i];
    let mut beta = vec![T::zero(); p];
    for i in (0..p).rev() {
        let s = (i + 1..p).fold(b[i], |acc, j| acc - r(i, j) * beta[j]);
        beta[i] = s / r(i, i);
    }
    // R^{-1}, upper triangular
    let mut rinv = vec![vec![T::zero(); p]; p];
    for c in 0..p {
        rinv[c][c] = T::one() / r(c, c);
        for i in (0..c).rev() {
            let s = (i + 1..=c).fold(T::zero(), |acc, j| acc + r(i, j) * rinv[j][c]);
            rinv[i][c] = -s / r(i, i);
        }
    }
    let mut xtwx_inv = vec![vec![T::zero(); p]; p];
    for i in 0..p {
        for j in 0..p {
            let start = i.max(j);
            xtwx_inv[i][j] = (start..p).fold(T::zero(), |acc, m| acc + rinv[i][m] * rinv[j][m]);
        }
    }
    Ok(LeastSquares { beta, xtwx_inv })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        let x = Matrix::<f64>::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 2.0]]);
        let y = [1.0, 3.0, 5.0];
        let ls = weighted_least_squares(&x, &y, &[1.0; 3], 0.0).unwrap();
        assert!((ls.beta[0] - 1.0).abs() < 1e-12 && (ls.beta[1] - 2.0).abs() < 1e-12);
        // (X'X)^{-1} for this design: [[5, -3], [-3, 3]] / 6
        assert!((ls.xtwx_inv[0][0] - 5.0 / 6.0).abs() < 1e-12);
        assert!((ls.xtwx_inv[0][1] + 0.5).abs() < 1e-12);
        assert!((ls.xtwx_inv[1][1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn detects_collinear_column() {
        let x = Matrix::<f64>::from_rows(&[
            vec![1.0, 2.0, 4.0],
            vec![1.0, 3.0, 6.0],
            vec![1.0, 5.0, 10.0],
            vec![1.0, 1.0, 2.0],
        ]);
        let err = weighted_least_squares(&x, &[1.0; 4], &[1.0; 4], 0.0).unwrap_err();
        assert_eq!(err, RankDeficient(2));
        let short = Matrix::<f64>::from_rows(&[vec![1.0, 2.0]]);
        assert_eq!(weighted_least_squares(&short, &[1.0], &[1.0], 0.0).unwrap_err(), RankDeficient(1));
    }

    #[test]
    fn ridge_makes_singular_design_solvable() {
        let x = Matrix::<f64>::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        let ls = weighted_least_squares(&x, &[2.0, 2.0], &[1.0, 1.0], 1e-6).unwrap();
        assert!((ls.beta[0] - ls.beta[1]).abs() < 1e-9 && (ls.beta[0] + ls.beta[1] - 2.0).abs() < 1e-5);
    }
}
