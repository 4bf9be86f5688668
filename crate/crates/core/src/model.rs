//! Regularization parameters, projection results, the soft-thresholding
//! operator, nuclear-norm factorizations and the cost functionals of the
//! convex, factorized and per-sample problems.

use crate::error::{Result, RpcaError};
use crate::linalg::{dot, svd, DenseMatrix};

/// Regularization weights: ridge weight on the low-rank factors, per-component
/// ℓ₁ thresholds on the outliers, and the rank bound.
#[derive(Debug, Clone, PartialEq)]
pub struct RegParams {
    lambda_star: f64,
    lambda: Vec<f64>,
    q: usize,
}

impl RegParams {
    pub fn new(lambda_star: f64, lambda: Vec<f64>, q: usize) -> Result<Self> {
        if !(lambda_star > 0.0) || !lambda_star.is_finite() {
            return Err(RpcaError::InvalidParameter(format!(
                "lambda_star must be positive and finite, got {lambda_star}"
            )));
        }
        if let Some(bad) = lambda.iter().find(|l| !(**l >= 0.0) || !l.is_finite()) {
            return Err(RpcaError::InvalidParameter(format!(
                "thresholds must be finite and non-negative, got {bad}"
            )));
        }
        if q == 0 {
            return Err(RpcaError::InvalidParameter("rank bound q must be >= 1".into()));
        }
        Ok(Self { lambda_star, lambda, q })
    }

    /// Broadcasts a scalar threshold to all `m` components.
    pub fn uniform(lambda_star: f64, lambda: f64, m: usize, q: usize) -> Result<Self> {
        Self::new(lambda_star, vec![lambda; m], q)
    }

    pub fn lambda_star(&self) -> f64 {
        self.lambda_star
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn q(&self) -> usize {
        self.q
    }

    /// Data dimension the thresholds were built for.
    pub fn dim(&self) -> usize {
        self.lambda.len()
    }

    pub fn with_q(&self, q: usize) -> Result<Self> {
        Self::new(self.lambda_star, self.lambda.clone(), q)
    }

    pub(crate) fn check_dim(&self, m: usize) -> Result<()> {
        if self.lambda.len() != m {
            return Err(RpcaError::Dimension(format!(
                "{} thresholds for data of dimension {m}",
                self.lambda.len()
            )));
        }
        Ok(())
    }
}

/// A coefficient/outlier pair produced by a solver or encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Code {
    pub s: Vec<f64>,
    pub o: Vec<f64>,
}

/// Per-sample robust projection `(s, o)` with solver diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub s: Vec<f64>,
    pub o: Vec<f64>,
    pub iterations: usize,
    pub final_cost: f64,
    /// Cost after each iteration; empty unless tracing was requested.
    pub cost_trace: Vec<f64>,
    pub converged: bool,
}

impl Projection {
    pub fn code(&self) -> Code {
        Code {
            s: self.s.clone(),
            o: self.o.clone(),
        }
    }
}

/// Component-wise soft-thresholding `sign(v)·max(|v| − λ, 0)`.
///
/// `|v| == λ` maps to zero.
pub fn soft_threshold(v: &[f64], lambda: &[f64]) -> Result<Vec<f64>> {
    if v.len() != lambda.len() {
        return Err(RpcaError::Dimension(format!(
            "soft_threshold: vector of length {} with {} thresholds",
            v.len(),
            lambda.len()
        )));
    }
    Ok(v.iter().zip(lambda).map(|(&x, &l)| shrink(x, l)).collect())
}

#[inline]
pub(crate) fn shrink(x: f64, l: f64) -> f64 {
    if x > l {
        x - l
    } else if x < -l {
        x + l
    } else {
        0.0
    }
}

/// Sum of singular values.
pub fn nuclear_norm(l: &DenseMatrix) -> f64 {
    if l.as_slice().is_empty() {
        return 0.0;
    }
    svd(l).sigma.iter().sum()
}

/// Balanced rank-`q` factorization `l ≈ u · s` with `u = U_L Σ^{1/2}` and
/// `s = Σ^{1/2} V_Lᵀ`, which attains the nuclear norm of the truncation as
/// `½(‖u‖²_F + ‖s‖²_F)`.
pub fn svd_factorize(l: &DenseMatrix, q: usize) -> Result<(DenseMatrix, DenseMatrix)> {
    let (m, n) = l.shape();
    if q == 0 || q > m.min(n) {
        return Err(RpcaError::Dimension(format!(
            "rank {q} out of range for a {m}x{n} matrix"
        )));
    }
    let f = svd(l);
    let mut u = DenseMatrix::zeros(m, q);
    let mut s = DenseMatrix::zeros(q, n);
    for k in 0..q {
        let root = f.sigma[k].sqrt();
        for i in 0..m {
            u.set(i, k, f.u_left.get(i, k) * root);
        }
        for j in 0..n {
            s.set(k, j, f.v_right.get(j, k) * root);
        }
    }
    Ok((u, s))
}

fn check_vec(name: &str, v: &[f64], expected: usize) -> Result<()> {
    if v.len() != expected {
        return Err(RpcaError::Dimension(format!(
            "{name} has length {}, expected {expected}",
            v.len()
        )));
    }
    Ok(())
}

/// Per-sample objective `½‖x − u·s − o‖² + (λ*/2)‖s‖² + Σᵢ λᵢ|oᵢ|`.
pub fn projection_cost(x: &[f64], s: &[f64], o: &[f64], u: &DenseMatrix, p: &RegParams) -> Result<f64> {
    let (m, q) = u.shape();
    check_vec("x", x, m)?;
    check_vec("s", s, q)?;
    check_vec("o", o, m)?;
    p.check_dim(m)?;
    let mut r = x.to_vec();
    for (ri, oi) in r.iter_mut().zip(o) {
        *ri -= oi;
    }
    for (k, &sk) in s.iter().enumerate() {
        crate::linalg::axpy(-sk, u.column(k), &mut r);
    }
    Ok(0.5 * dot(&r, &r) + 0.5 * p.lambda_star * dot(s, s) + weighted_l1(o, &p.lambda))
}

pub(crate) fn weighted_l1(o: &[f64], lambda: &[f64]) -> f64 {
    o.iter().zip(lambda).map(|(v, l)| l * v.abs()).sum()
}

/// `Σᵢⱼ λᵢ |o_ij|` with the per-row thresholds.
fn weighted_l1_matrix(o: &DenseMatrix, lambda: &[f64]) -> f64 {
    (0..o.cols()).map(|j| weighted_l1(o.column(j), lambda)).sum()
}

fn check_shape(name: &str, a: &DenseMatrix, rows: usize, cols: usize) -> Result<()> {
    if a.shape() != (rows, cols) {
        return Err(RpcaError::Dimension(format!(
            "{name} is {}x{}, expected {rows}x{cols}",
            a.rows(),
            a.cols()
        )));
    }
    Ok(())
}

/// Factorized objective
/// `½‖X − US − O‖²_F + (λ*/2)(‖U‖²_F + ‖S‖²_F) + Σ λᵢ|O_ij|`.
pub fn factorized_cost(
    x: &DenseMatrix,
    u: &DenseMatrix,
    s: &DenseMatrix,
    o: &DenseMatrix,
    p: &RegParams,
) -> Result<f64> {
    let (m, n) = x.shape();
    let q = u.cols();
    check_shape("U", u, m, q)?;
    check_shape("S", s, q, n)?;
    check_shape("O", o, m, n)?;
    p.check_dim(m)?;
    let mut r = x.sub(o)?;
    r.axpy_in_place(-1.0, &u.matmul(s)?)?;
    Ok(0.5 * r.frobenius_norm_sq()
        + 0.5 * p.lambda_star * (u.frobenius_norm_sq() + s.frobenius_norm_sq())
        + weighted_l1_matrix(o, &p.lambda))
}

/// Convex objective `½‖X − L − O‖²_F + λ*‖L‖_* + Σ λᵢ|O_ij|`.
pub fn convex_cost(x: &DenseMatrix, l: &DenseMatrix, o: &DenseMatrix, p: &RegParams) -> Result<f64> {
    let (m, n) = x.shape();
    check_shape("L", l, m, n)?;
    check_shape("O", o, m, n)?;
    p.check_dim(m)?;
    let r = x.sub(l)?.sub(o)?;
    Ok(0.5 * r.frobenius_norm_sq() + p.lambda_star * nuclear_norm(l) + weighted_l1_matrix(o, &p.lambda))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(
            soft_threshold(&[2.0, -0.5, 0.0], &[1.0; 3]).unwrap(),
            vec![1.0, 0.0, 0.0]
        );
        let v = [0.3, -7.0, 1e-9];
        assert_eq!(soft_threshold(&v, &[0.0; 3]).unwrap(), v.to_vec());
        assert_eq!(soft_threshold(&[1.0, 1.0], &[0.5, 1.5]).unwrap(), vec![0.5, 0.0]);
        // Tie at the threshold goes to zero.
        assert_eq!(soft_threshold(&[1.0, -1.0], &[1.0, 1.0]).unwrap(), vec![0.0, 0.0]);
        assert!(matches!(
            soft_threshold(&[1.0], &[1.0, 1.0]),
            Err(RpcaError::Dimension(_))
        ));
    }

    #[test]
    fn reg_params_validation() {
        assert!(RegParams::uniform(0.0, 0.1, 3, 1).is_err());
        assert!(RegParams::uniform(0.1, -0.1, 3, 1).is_err());
        assert!(RegParams::uniform(0.1, 0.1, 3, 0).is_err());
        assert!(RegParams::new(0.1, vec![0.1, f64::NAN], 1).is_err());
        let p = RegParams::uniform(0.1, 0.2, 3, 2).unwrap();
        assert_eq!(p.lambda(), &[0.2, 0.2, 0.2]);
    }

    #[test]
    fn nuclear_norm_basics() {
        assert!((nuclear_norm(&DenseMatrix::identity(4)) - 4.0).abs() < 1e-13);
        assert_eq!(nuclear_norm(&DenseMatrix::zeros(3, 2)), 0.0);
    }

    #[test]
    fn svd_factorize_rank_one_and_zero() {
        let a = [1.0, -2.0, 0.5];
        let b = [2.0, 1.0];
        let l = DenseMatrix::from_fn(3, 2, |i, j| a[i] * b[j]);
        let (u, s) = svd_factorize(&l, 1).unwrap();
        let half = 0.5 * (u.frobenius_norm_sq() + s.frobenius_norm_sq());
        assert!((half - nuclear_norm(&l)).abs() < 1e-12);
        assert!(u.matmul(&s).unwrap().max_abs_diff(&l) < 1e-12);

        let (u, s) = svd_factorize(&DenseMatrix::zeros(3, 2), 2).unwrap();
        assert_eq!(u.max_abs(), 0.0);
        assert_eq!(s.max_abs(), 0.0);
        assert!(svd_factorize(&l, 3).is_err());
        assert!(svd_factorize(&l, 0).is_err());
    }

    #[test]
    fn cost_trivial_cases() {
        let p = RegParams::uniform(0.1, 0.3, 3, 2).unwrap();
        let u = DenseMatrix::zeros(3, 2);
        assert_eq!(projection_cost(&[0.0; 3], &[0.0; 2], &[0.0; 3], &u, &p).unwrap(), 0.0);
        let x = [1.0, -2.0, 0.5];
        let c = projection_cost(&x, &[0.0; 2], &x, &u, &p).unwrap();
        assert!((c - 0.3 * 3.5).abs() < 1e-15);
        assert!(projection_cost(&x, &[0.0; 3], &x, &u, &p).is_err());

        let z = DenseMatrix::zeros(3, 4);
        let zs = DenseMatrix::zeros(2, 4);
        assert_eq!(factorized_cost(&z, &u, &zs, &z, &p).unwrap(), 0.0);
        let xm = DenseMatrix::from_fn(3, 4, |i, j| (i as f64) - (j as f64));
        let c = convex_cost(&xm, &z, &z, &p).unwrap();
        assert!((c - 0.5 * xm.frobenius_norm_sq()).abs() < 1e-12);
    }

    #[test]
    fn factorized_single_column_decomposes() {
        let p = RegParams::uniform(0.2, 0.1, 3, 2).unwrap();
        let u = DenseMatrix::from_fn(3, 2, |i, j| 0.3 * i as f64 - 0.7 * j as f64 + 0.1);
        let x = [1.0, 0.0, -1.5];
        let s = [0.4, -0.2];
        let o = [0.0, 0.6, 0.0];
        let xm = DenseMatrix::new(3, 1, x.to_vec()).unwrap();
        let sm = DenseMatrix::new(2, 1, s.to_vec()).unwrap();
        let om = DenseMatrix::new(3, 1, o.to_vec()).unwrap();
        let f = factorized_cost(&xm, &u, &sm, &om, &p).unwrap();
        let g = projection_cost(&x, &s, &o, &u, &p).unwrap() + 0.1 * u.frobenius_norm_sq();
        assert!((f - g).abs() < 1e-13);
    }
}
