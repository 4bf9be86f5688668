//! Dense column-major matrices, one-sided Jacobi SVD and Cholesky solves.
//!
//! Everything here is plain `f64` arithmetic with no BLAS dependency. Matrices
//! are stored column-major so that a data sample (a column) is a contiguous
//! slice.

use crate::error::{Result, RpcaError};

/// Column-major real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    /// Builds a matrix from column-major data, rejecting bad lengths and
    /// non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(RpcaError::Dimension(format!(
                "data length {} does not match {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(RpcaError::NonFinite(format!(
                "entry ({}, {}) is {}",
                pos % rows.max(1),
                pos / rows.max(1),
                data[pos]
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix by evaluating `f(row, col)` for every entry.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Stacks equal-length column vectors side by side.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let rows = columns.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows * columns.len());
        for c in columns {
            if c.len() != rows {
                return Err(RpcaError::Dimension(format!(
                    "column of length {} in a matrix with {} rows",
                    c.len(),
                    rows
                )));
            }
            data.extend_from_slice(c);
        }
        Self::new(rows, columns.len(), data)
    }

    /// Diagonal matrix with the given entries.
    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            m.data[i * n + i] = *v;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Raw column-major storage.
    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[col * self.rows + row]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[col * self.rows + row] = value;
    }

    #[inline]
    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    #[inline]
    pub fn column_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn set_column(&mut self, j: usize, values: &[f64]) {
        self.column_mut(j).copy_from_slice(values);
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.cols).map(|j| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for j in 0..self.cols {
            for i in 0..self.rows {
                t.data[i * self.cols + j] = self.data[j * self.rows + i];
            }
        }
        t
    }

    /// Keeps the first `k` columns.
    pub fn leading_columns(&self, k: usize) -> Self {
        assert!(k <= self.cols);
        Self {
            rows: self.rows,
            cols: k,
            data: self.data[..k * self.rows].to_vec(),
        }
    }

    /// Returns the sub-matrix made of the given columns, in order.
    pub fn select_columns(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.rows);
        for &j in idx {
            data.extend_from_slice(self.column(j));
        }
        Self {
            rows: self.rows,
            cols: idx.len(),
            data,
        }
    }

    /// Frobenius norm.
    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm_sq().sqrt()
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        dot(&self.data, &self.data)
    }

    /// Sum of absolute values of every entry.
    pub fn l1_norm(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// Largest absolute entry-wise difference; panics on shape mismatch.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |acc, (a, b)| acc.max((a - b).abs()))
    }

    pub fn scale(&self, alpha: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| alpha * v).collect(),
        }
    }

    pub fn scale_in_place(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|v| *v *= alpha);
    }

    fn check_same_shape(&self, other: &Self, what: &str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(RpcaError::Dimension(format!(
                "{what}: {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other, "add")?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other, "sub")?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    /// `self += alpha * other`.
    pub fn axpy_in_place(&mut self, alpha: f64, other: &Self) -> Result<()> {
        self.check_same_shape(other, "axpy")?;
        axpy(alpha, &other.data, &mut self.data);
        Ok(())
    }

    /// Matrix product `self · other`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(RpcaError::Dimension(format!(
                "matmul: {}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for j in 0..other.cols {
            let dst = &mut out.data[j * self.rows..(j + 1) * self.rows];
            for k in 0..self.cols {
                let b = other.data[j * other.rows + k];
                if b != 0.0 {
                    axpy(b, self.column(k), dst);
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · other` without forming the transpose.
    pub fn t_matmul(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows {
            return Err(RpcaError::Dimension(format!(
                "t_matmul: ({}x{})ᵀ times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(Self::from_fn(self.cols, other.cols, |i, j| {
            dot(self.column(i), other.column(j))
        }))
    }

    /// `self · otherᵀ` without forming the transpose.
    pub fn matmul_t(&self, other: &Self) -> Result<Self> {
        if self.cols != other.cols {
            return Err(RpcaError::Dimension(format!(
                "matmul_t: {}x{} times ({}x{})ᵀ",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.rows);
        for k in 0..self.cols {
            let a = self.column(k);
            for j in 0..other.rows {
                let b = other.data[k * other.rows + j];
                if b != 0.0 {
                    axpy(b, a, &mut out.data[j * self.rows..(j + 1) * self.rows]);
                }
            }
        }
        Ok(out)
    }

    /// Matrix-vector product `self · v`.
    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.rows];
        self.matvec_into(v, &mut out)?;
        Ok(out)
    }

    /// `out = self · v`, skipping zero entries of `v`.
    pub fn matvec_into(&self, v: &[f64], out: &mut [f64]) -> Result<()> {
        if v.len() != self.cols || out.len() != self.rows {
            return Err(RpcaError::Dimension(format!(
                "matvec: {}x{} times vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        out.iter_mut().for_each(|o| *o = 0.0);
        self.matvec_acc(v, out);
        Ok(())
    }

    /// `out += self · v` (no shape checks; callers guarantee them).
    #[inline]
    pub(crate) fn matvec_acc(&self, v: &[f64], out: &mut [f64]) {
        for (k, &vk) in v.iter().enumerate() {
            if vk != 0.0 {
                axpy(vk, self.column(k), out);
            }
        }
    }

    /// `out += self · v` touching every column, so the cost does not depend
    /// on the sparsity of `v`.
    pub(crate) fn matvec_dense_acc(&self, v: &[f64], out: &mut [f64]) {
        for (k, &vk) in v.iter().enumerate() {
            axpy(vk, self.column(k), out);
        }
    }

    /// `selfᵀ · v`.
    pub fn t_matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.rows {
            return Err(RpcaError::Dimension(format!(
                "t_matvec: ({}x{})ᵀ times vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.cols).map(|j| dot(self.column(j), v)).collect())
    }

    /// Rank-one update `self += alpha · a · bᵀ`.
    pub fn rank_one_update(&mut self, alpha: f64, a: &[f64], b: &[f64]) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(b.len(), self.cols);
        for (j, &bj) in b.iter().enumerate() {
            let c = alpha * bj;
            if c != 0.0 {
                axpy(c, a, self.column_mut(j));
            }
        }
    }

    /// Adds `alpha` to every diagonal entry.
    pub fn add_diagonal(&mut self, alpha: f64) {
        let n = self.rows.min(self.cols);
        for i in 0..n {
            self.data[i * self.rows + i] += alpha;
        }
    }

    /// Largest deviation from symmetry, `max |a_ij − a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for j in 0..self.cols.min(self.rows) {
            for i in 0..j {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest singular value.
    pub fn spectral_norm(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        svd(self).sigma.first().copied().unwrap_or(0.0)
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += alpha * x`.
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

pub fn sub_vec(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Thin singular value decomposition `a = u_left · diag(sigma) · v_rightᵀ`.
#[derive(Debug, Clone)]
pub struct SpectralFactorization {
    /// m×r, orthonormal columns.
    pub u_left: DenseMatrix,
    /// Non-increasing, length r = min(m, n).
    pub sigma: Vec<f64>,
    /// n×r, orthonormal columns.
    pub v_right: DenseMatrix,
}

impl SpectralFactorization {
    pub fn rank(&self, tol: f64) -> usize {
        self.sigma.iter().filter(|s| **s > tol).count()
    }

    /// Rebuilds `u_left · diag(sigma) · v_rightᵀ`.
    pub fn reconstruct(&self) -> DenseMatrix {
        let mut us = self.u_left.clone();
        for (j, s) in self.sigma.iter().enumerate() {
            us.column_mut(j).iter_mut().for_each(|v| *v *= s);
        }
        us.matmul_t(&self.v_right)
            .expect("factor shapes are consistent by construction")
    }
}

const JACOBI_TOL: f64 = 1e-14;
const JACOBI_MAX_SWEEPS: usize = 60;

/// Singular value decomposition by one-sided (Hestenes) Jacobi rotations.
///
/// Works on the taller orientation of `a`; wide inputs are transposed and the
/// factors swapped on return. Singular vectors belonging to numerically zero
/// singular values are completed to an orthonormal set.
pub fn svd(a: &DenseMatrix) -> SpectralFactorization {
    if a.rows() < a.cols() {
        let t = svd_tall(&a.transpose());
        return SpectralFactorization {
            u_left: t.v_right,
            sigma: t.sigma,
            v_right: t.u_left,
        };
    }
    svd_tall(a)
}

fn svd_tall(a: &DenseMatrix) -> SpectralFactorization {
    let (m, n) = a.shape();
    let mut work = a.clone();
    let mut v = DenseMatrix::identity(n);

    for _sweep in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let (alpha, beta, gamma) = {
                    let cp = work.column(p);
                    let cq = work.column(q);
                    (dot(cp, cp), dot(cq, cq), dot(cp, cq))
                };
                if gamma == 0.0 || gamma.abs() <= JACOBI_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(work.as_mut_slice(), m, p, q, c, s);
                rotate_columns(v.as_mut_slice(), n, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut sigma: Vec<f64> = (0..n).map(|j| norm2(work.column(j))).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]));

    let mut u_left = DenseMatrix::zeros(m, n);
    let mut v_right = DenseMatrix::zeros(n, n);
    let sigma_max = order.first().map_or(0.0, |&i| sigma[i]);
    // Below this the normalized column is dominated by rounding and is rebuilt
    // by orthogonal completion instead.
    let cutoff = sigma_max * (m.max(n) as f64) * f64::EPSILON * 16.0;
    let mut sorted_sigma = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        let s = sigma[src];
        v_right.set_column(dst, v.column(src));
        if s > cutoff && s > 0.0 {
            let col: Vec<f64> = work.column(src).iter().map(|x| x / s).collect();
            u_left.set_column(dst, &col);
            sorted_sigma.push(s);
        } else {
            sorted_sigma.push(if s.is_finite() { s } else { 0.0 });
        }
    }
    sigma = sorted_sigma;

    // Re-orthogonalize small-σ columns against the accurate ones, completing
    // from the canonical basis where a column is missing.
    let mut basis_probe = 0usize;
    for j in 0..n {
        if sigma[j] > cutoff && sigma[j] > 0.0 {
            continue;
        }
        let mut candidate = u_left.column(j).to_vec();
        loop {
            for _ in 0..2 {
                for k in 0..j {
                    let proj = dot(u_left.column(k), &candidate);
                    axpy(-proj, u_left.column(k), &mut candidate);
                }
            }
            let nrm = norm2(&candidate);
            if nrm > 0.5 {
                candidate.iter_mut().for_each(|x| *x /= nrm);
                break;
            }
            // Fall back to the next canonical basis vector.
            candidate = vec![0.0; m];
            candidate[basis_probe % m] = 1.0;
            basis_probe += 1;
            assert!(basis_probe <= 2 * m, "orthogonal completion failed");
        }
        u_left.set_column(j, &candidate);
    }

    SpectralFactorization { u_left, sigma, v_right }
}

#[inline]
fn rotate_columns(data: &mut [f64], rows: usize, p: usize, q: usize, c: f64, s: f64) {
    let (head, tail) = data.split_at_mut(q * rows);
    let cp = &mut head[p * rows..(p + 1) * rows];
    let cq = &mut tail[..rows];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (xp, yq) = (*x, *y);
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

/// Cholesky factorization `a = g · gᵀ` of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    /// Lower-triangular factor, column-major.
    factor: DenseMatrix,
}

impl Cholesky {
    pub fn new(a: &DenseMatrix) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(RpcaError::Dimension(format!(
                "cholesky of a non-square {}x{} matrix",
                a.rows(),
                a.cols()
            )));
        }
        let mut g = DenseMatrix::zeros(n, n);
        let scale = (0..n).fold(0.0f64, |acc, i| acc.max(a.get(i, i).abs()));
        for j in 0..n {
            let mut d = a.get(j, j);
            for k in 0..j {
                d -= g.get(j, k) * g.get(j, k);
            }
            if !(d > scale * 1e-14) || !d.is_finite() {
                return Err(RpcaError::IllConditioned(format!(
                    "pivot {j} is {d:e} (matrix not numerically positive definite)"
                )));
            }
            let djj = d.sqrt();
            g.set(j, j, djj);
            for i in (j + 1)..n {
                let mut v = a.get(i, j);
                for k in 0..j {
                    v -= g.get(i, k) * g.get(j, k);
                }
                g.set(i, j, v / djj);
            }
        }
        Ok(Self { factor: g })
    }

    pub fn dim(&self) -> usize {
        self.factor.rows()
    }

    /// Solves `a · x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.dim();
        let g = &self.factor;
        for i in 0..n {
            let mut v = b[i];
            for k in 0..i {
                v -= g.get(i, k) * b[k];
            }
            b[i] = v / g.get(i, i);
        }
        for i in (0..n).rev() {
            let mut v = b[i];
            for k in (i + 1)..n {
                v -= g.get(k, i) * b[k];
            }
            b[i] = v / g.get(i, i);
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// Solves `a · X = B` column by column.
    pub fn solve_matrix(&self, b: &DenseMatrix) -> DenseMatrix {
        let mut x = b.clone();
        for j in 0..b.cols() {
            self.solve_in_place(x.column_mut(j));
        }
        x
    }

    pub fn inverse(&self) -> DenseMatrix {
        self.solve_matrix(&DenseMatrix::identity(self.dim()))
    }
}

/// Solves `X · a = b` for symmetric positive-definite `a` (right division).
pub fn solve_right_spd(b: &DenseMatrix, a: &DenseMatrix) -> Result<DenseMatrix> {
    if b.cols() != a.rows() {
        return Err(RpcaError::Dimension(format!(
            "right division of {}x{} by {}x{}",
            b.rows(),
            b.cols(),
            a.rows(),
            a.cols()
        )));
    }
    let chol = Cholesky::new(a)?;
    // X a = B  ⇔  a Xᵀ = Bᵀ (a symmetric).
    Ok(chol.solve_matrix(&b.transpose()).transpose())
}
