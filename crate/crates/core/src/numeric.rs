//! Dense linear-algebra solvers: homogeneous least squares, ordinary least
//! squares and projection onto the nearest rotation.
//!
//! All three are thin layers over the SVD provided by `nalgebra`; what lives
//! here is the problem setup, the degeneracy checks and the sign conventions.

use std::ops::{Index, IndexMut};

use nalgebra::{DMatrix, DVector, Matrix3};
use thiserror::Error;

use crate::geometry::Rotation3;

/// Relative gap between the two smallest singular values below which the
/// homogeneous solution is not unique.
pub const RANK_GAP_TOLERANCE: f64 = 1e-10;

/// Smallest singular value accepted by [`nearest_rotation`].
pub const ROTATION_SINGULAR_FLOOR: f64 = 1e-12;

/// Components of a unit vector at or below this magnitude count as zero when
/// fixing its sign.
const SIGN_ZERO: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericError {
    #[error("rank deficient: smallest singular values {smallest:e} and {next:e} are not separated")]
    RankDeficient { smallest: f64, next: f64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("degenerate matrix: smallest singular value {0:e}")]
    Degenerate(f64),
    #[error("non-finite matrix entry")]
    NonFinite,
    #[error("singular value decomposition did not converge")]
    NoConvergence,
}

/// Dense row-major real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NumericError> {
        if rows == 0 || cols == 0 || rows * cols != data.len() {
            return Err(NumericError::ShapeMismatch(format!(
                "{rows}x{cols} matrix from {} entries",
                data.len()
            )));
        }
        if !data.iter().all(|x| x.is_finite()) {
            return Err(NumericError::NonFinite);
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, NumericError> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        if rows.iter().any(|r| r.as_ref().len() != cols) {
            return Err(NumericError::ShapeMismatch("ragged rows".into()));
        }
        let data = rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect();
        Self::new(rows.len(), cols, data)
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

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub fn from_dmatrix(m: &DMatrix<f64>) -> Self {
        let data = (0..m.nrows())
            .flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)]))
            .collect();
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }

    pub fn mul(&self, other: &Matrix) -> Result<Matrix, NumericError> {
        if self.cols != other.rows {
            return Err(NumericError::ShapeMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(Self::from_dmatrix(&(self.to_dmatrix() * other.to_dmatrix())))
    }

    pub fn transpose(&self) -> Matrix {
        Self::from_dmatrix(&self.to_dmatrix().transpose())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Flip `v` so that its last nonzero component is positive.
pub fn canonicalize_sign(v: &mut [f64]) {
    if let Some(last) = v.iter().rev().find(|x| x.abs() > SIGN_ZERO) {
        if *last < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Singular values (descending) and the matching right-singular vectors as
/// columns of `V`. Pads with zero rows so that `V` is always square.
fn full_right_svd(a: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>), NumericError> {
    let (r, c) = a.shape();
    let padded;
    let a = if r < c {
        padded = a.clone().resize_vertically(c, 0.0);
        &padded
    } else {
        a
    };
    let svd = a
        .clone()
        .try_svd(false, true, f64::EPSILON, 0)
        .ok_or(NumericError::NoConvergence)?;
    let v_t = svd.v_t.ok_or(NumericError::NoConvergence)?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let sigma = order.iter().map(|&i| svd.singular_values[i]).collect();
    let v = DMatrix::from_fn(c, order.len(), |row, k| v_t[(order[k], row)]);
    Ok((sigma, v))
}

/// Unit vector `v` minimizing `‖A·v‖₂`: the right-singular vector of the
/// smallest singular value, with its last nonzero component made positive.
///
/// Fails with [`NumericError::RankDeficient`] when the two smallest singular
/// values are within [`RANK_GAP_TOLERANCE`] of each other relative to the
/// largest, since the minimizing direction is then not unique.
pub fn solve_homogeneous(a: &Matrix) -> Result<Vec<f64>, NumericError> {
    if a.cols < 2 || a.rows + 1 < a.cols {
        return Err(NumericError::ShapeMismatch(format!(
            "homogeneous system needs rows >= cols - 1 and cols >= 2, got {}x{}",
            a.rows, a.cols
        )));
    }
    let (sigma, v) = full_right_svd(&a.to_dmatrix())?;
    let n = sigma.len();
    let (smallest, next, largest) = (sigma[n - 1], sigma[n - 2], sigma[0]);
    if largest <= 0.0 || next - smallest <= RANK_GAP_TOLERANCE * largest {
        return Err(NumericError::RankDeficient { smallest, next });
    }
    let mut x: Vec<f64> = v.column(n - 1).iter().copied().collect();
    canonicalize_sign(&mut x);
    Ok(x)
}

/// `Z` minimizing `‖b − A·Z‖_F`; the minimum-norm minimizer when `A` is rank
/// deficient.
pub fn solve_least_squares(a: &Matrix, b: &Matrix) -> Result<Matrix, NumericError> {
    if a.rows != b.rows {
        return Err(NumericError::ShapeMismatch(format!(
            "A has {} rows but b has {}",
            a.rows, b.rows
        )));
    }
    let svd = a
        .to_dmatrix()
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or(NumericError::NoConvergence)?;
    let sigma_max = svd.singular_values.max();
    let cutoff = (a.rows.max(a.cols) as f64) * f64::EPSILON * sigma_max;
    let z = svd
        .solve(&b.to_dmatrix(), cutoff)
        .map_err(|e| NumericError::ShapeMismatch(e.to_string()))?;
    Ok(Matrix::from_dmatrix(&z))
}

/// Singular values of `a` in descending order.
pub fn singular_values(a: &Matrix) -> Result<Vec<f64>, NumericError> {
    let sv = a
        .to_dmatrix()
        .try_svd(false, false, f64::EPSILON, 0)
        .ok_or(NumericError::NoConvergence)?
        .singular_values;
    let mut sv: Vec<f64> = sv.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

/// Closest proper rotation to `m` in the Frobenius norm: `U·Vᵀ` from
/// `m = U·D·Vᵀ`, with the column of `U` belonging to the smallest singular
/// value negated when that product would be a reflection.
pub fn nearest_rotation(m: &Matrix3<f64>) -> Result<Rotation3, NumericError> {
    if !m.iter().all(|x| x.is_finite()) {
        return Err(NumericError::NonFinite);
    }
    let svd = m
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or(NumericError::NoConvergence)?;
    let (mut u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(NumericError::NoConvergence),
    };
    let (imin, smin) = svd.singular_values.argmin();
    if smin < ROTATION_SINGULAR_FLOOR {
        return Err(NumericError::Degenerate(smin));
    }
    if (u * v_t).determinant() < 0.0 {
        u.column_mut(imin).neg_mut();
    }
    Ok(Rotation3::from_matrix_unchecked(u * v_t))
}

/// `‖A·x‖₂` for a column vector `x`.
pub fn residual_norm(a: &Matrix, x: &[f64]) -> f64 {
    (a.to_dmatrix() * DVector::from_column_slice(x)).norm()
}
