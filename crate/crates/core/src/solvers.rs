//! Exact solvers.
//!
//! * [`robust_project`] solves the per-sample problem
//!   `min ½‖x − U s − o‖² + (λ*/2)‖s‖² + Σ λᵢ|oᵢ|` by alternating exact
//!   minimization over `s` and `o`.
//! * [`batch_rpca`] runs block-coordinate descent on the factorized problem
//!   over `(U, S, O)`.
//! * [`convex_rpca_reference`] alternates the two proximal maps of the convex
//!   nuclear-norm problem and is used as a correctness oracle.
//!
//! The `s`-block minimizer is `(UᵀU + λ*I)⁻¹Uᵀ(x − o)`. Note the plus sign:
//! the classic statement of the alternating scheme prints `UᵀU − λ*I`, which
//! is not the minimizer and can be indefinite. The output map likewise carries
//! the `Uᵀ` factor, `s = (UᵀU + λ*I)⁻¹Uᵀ(x − o)`.

use crate::error::{Result, RpcaError};
use crate::linalg::{axpy, dot, norm_inf, svd, Cholesky, DenseMatrix};
use crate::model::{factorized_cost, projection_cost, shrink, svd_factorize, weighted_l1, Projection, RegParams};

/// Stopping rule shared by the iterative solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub record_cost_trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 5000,
            record_cost_trace: false,
        }
    }
}

impl SolverConfig {
    pub fn new(tol: f64, max_iter: usize) -> Result<Self> {
        let cfg = Self {
            tol,
            max_iter,
            record_cost_trace: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_trace(mut self) -> Self {
        self.record_cost_trace = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || !self.tol.is_finite() {
            return Err(RpcaError::InvalidParameter(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(RpcaError::InvalidParameter("max_iter must be >= 1".into()));
        }
        Ok(())
    }
}

/// `(UᵀU + λ*I)⁻¹Uᵀ` for a fixed dictionary, shared by every column projected
/// against it.
#[derive(Debug, Clone)]
pub struct ProjectionOperator {
    u: DenseMatrix,
    /// q×m coefficient map.
    h: DenseMatrix,
}

impl ProjectionOperator {
    pub fn new(u: &DenseMatrix, lambda_star: f64) -> Result<Self> {
        let mut gram = u.t_matmul(u)?;
        gram.add_diagonal(lambda_star);
        let chol = Cholesky::new(&gram)?;
        let h = chol.solve_matrix(&u.transpose());
        Ok(Self { u: u.clone(), h })
    }

    pub fn dictionary(&self) -> &DenseMatrix {
        &self.u
    }

    /// The q×m map `x − o ↦ s`.
    pub fn coefficient_map(&self) -> &DenseMatrix {
        &self.h
    }

    /// `s = H (x − o)`.
    pub fn coefficients(&self, residual: &[f64]) -> Vec<f64> {
        let mut s = vec![0.0; self.h.rows()];
        self.h.matvec_acc(residual, &mut s);
        s
    }

    /// `out += U · H · d`.
    fn apply_w_acc(&self, d: &[f64], out: &mut [f64]) {
        let t = self.coefficients(d);
        self.u.matvec_acc(&t, out);
    }
}

fn check_projection_inputs(x: &[f64], u: &DenseMatrix, p: &RegParams) -> Result<()> {
    if x.len() != u.rows() {
        return Err(RpcaError::Dimension(format!(
            "sample of length {} against a {}x{} dictionary",
            x.len(),
            u.rows(),
            u.cols()
        )));
    }
    p.check_dim(x.len())
}

/// Robust low-dimensional projection of one sample onto dictionary `u`.
///
/// Iterates `o = π_λ(b); b ← b + W(o − y); y ← o` from `b = (I − W)x`,
/// `y = 0`, with `W = U(UᵀU + λ*I)⁻¹Uᵀ`, and stops once
/// `‖o_k − o_{k−1}‖∞ ≤ tol`.
pub fn robust_project(x: &[f64], u: &DenseMatrix, p: &RegParams, cfg: &SolverConfig) -> Result<Projection> {
    check_projection_inputs(x, u, p)?;
    cfg.validate()?;
    let op = ProjectionOperator::new(u, p.lambda_star())?;
    Ok(run_alternation(
        x,
        &op,
        p,
        cfg.max_iter,
        Some(cfg.tol),
        cfg.record_cost_trace,
        None,
    ))
}

/// Same as [`robust_project`] with a precomputed operator and an optional warm
/// start for `o`. Starting from `o₀` the first `s` is the exact minimizer
/// given `o₀`, so the cost never exceeds that of `(s(o₀), o₀)`.
pub fn robust_project_with(
    x: &[f64],
    op: &ProjectionOperator,
    p: &RegParams,
    cfg: &SolverConfig,
    warm_o: Option<&[f64]>,
) -> Result<Projection> {
    check_projection_inputs(x, op.dictionary(), p)?;
    cfg.validate()?;
    if let Some(o) = warm_o {
        if o.len() != x.len() {
            return Err(RpcaError::Dimension("warm start length differs from sample".into()));
        }
    }
    Ok(run_alternation(
        x,
        op,
        p,
        cfg.max_iter,
        Some(cfg.tol),
        cfg.record_cost_trace,
        warm_o,
    ))
}

/// Exactly `iterations` steps of the alternation with no early exit. This is
/// the computation an untrained encoder of the same depth performs.
pub fn alternating_iterations(x: &[f64], u: &DenseMatrix, p: &RegParams, iterations: usize) -> Result<Projection> {
    check_projection_inputs(x, u, p)?;
    let op = ProjectionOperator::new(u, p.lambda_star())?;
    Ok(run_alternation(x, &op, p, iterations, None, true, None))
}

fn run_alternation(
    x: &[f64],
    op: &ProjectionOperator,
    p: &RegParams,
    max_iter: usize,
    tol: Option<f64>,
    trace: bool,
    warm_o: Option<&[f64]>,
) -> Projection {
    let m = x.len();
    let lambda = p.lambda();
    let mut y = warm_o.map_or_else(|| vec![0.0; m], <[f64]>::to_vec);
    // b = x − W(x − y)
    let mut b = x.to_vec();
    let mut neg = crate::linalg::sub_vec(&y, x);
    op.apply_w_acc(&neg, &mut b);

    let mut o = y.clone();
    let mut cost_trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    for _ in 0..max_iter {
        for i in 0..m {
            o[i] = shrink(b[i], lambda[i]);
            neg[i] = o[i] - y[i];
        }
        iterations += 1;
        let delta = norm_inf(&neg);
        op.apply_w_acc(&neg, &mut b);
        std::mem::swap(&mut y, &mut o);
        if trace {
            cost_trace.push(cost_at(x, &y, op, p));
        }
        if tol.is_some_and(|t| delta <= t) {
            converged = true;
            break;
        }
    }
    // y holds the latest o.
    let o = y;
    let s = op.coefficients(&crate::linalg::sub_vec(x, &o));
    let final_cost = projection_cost(x, &s, &o, op.dictionary(), p).expect("dimensions checked");
    Projection {
        s,
        o,
        iterations,
        final_cost,
        cost_trace,
        converged: converged || tol.is_none(),
    }
}

fn cost_at(x: &[f64], o: &[f64], op: &ProjectionOperator, p: &RegParams) -> f64 {
    let s = op.coefficients(&crate::linalg::sub_vec(x, o));
    projection_cost(x, &s, o, op.dictionary(), p).expect("dimensions checked")
}

/// First-order optimality certificate for the per-sample problem.
///
/// Returns the larger of the `s`-gradient norm `‖Uᵀr − λ*s‖∞` and the worst
/// ℓ₁ subgradient violation of `o`, where `r = x − U s − o`.
pub fn kkt_residual(x: &[f64], s: &[f64], o: &[f64], u: &DenseMatrix, p: &RegParams) -> Result<f64> {
    let (m, q) = u.shape();
    if x.len() != m || o.len() != m || s.len() != q {
        return Err(RpcaError::Dimension(format!(
            "kkt_residual: x {}, s {}, o {} against {m}x{q}",
            x.len(),
            s.len(),
            o.len()
        )));
    }
    p.check_dim(m)?;
    let mut r = crate::linalg::sub_vec(x, o);
    for (k, &sk) in s.iter().enumerate() {
        axpy(-sk, u.column(k), &mut r);
    }
    let ls = p.lambda_star();
    let grad_s = (0..q).fold(0.0f64, |acc, k| acc.max((dot(u.column(k), &r) - ls * s[k]).abs()));
    let grad_o = r.iter().zip(o).zip(p.lambda()).fold(0.0f64, |acc, ((&ri, &oi), &li)| {
        let v = if oi != 0.0 {
            (ri - li * oi.signum()).abs()
        } else {
            (ri.abs() - li).max(0.0)
        };
        acc.max(v)
    });
    Ok(grad_s.max(grad_o))
}

/// [`kkt_residual`] for a [`Projection`].
pub fn projection_kkt(x: &[f64], proj: &Projection, u: &DenseMatrix, p: &RegParams) -> Result<f64> {
    kkt_residual(x, &proj.s, &proj.o, u, p)
}

/// Result of [`batch_rpca`].
#[derive(Debug, Clone)]
pub struct BatchDecomposition {
    pub u: DenseMatrix,
    pub s: DenseMatrix,
    pub o: DenseMatrix,
    /// Factorized cost at initialization followed by one entry per outer
    /// iteration.
    pub cost_trace: Vec<f64>,
    /// Worst per-column KKT residual of the final `(S, O)` given `U`.
    pub kkt_residual: f64,
    /// Spectral norm of `X − US − O`.
    pub residual_spectral_norm: f64,
    /// Frobenius norm of `X − US − O`.
    pub residual_frobenius_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl BatchDecomposition {
    pub fn low_rank(&self) -> DenseMatrix {
        self.u.matmul(&self.s).expect("factor shapes are consistent")
    }

    pub fn final_cost(&self) -> f64 {
        *self.cost_trace.last().expect("trace holds at least the initial cost")
    }

    /// Global-optimality condition `‖X − US − O‖² ≤ λ*` read with the spectral
    /// and with the Frobenius norm, in that order.
    pub fn stationarity_bound(&self, lambda_star: f64) -> (bool, bool) {
        (
            self.residual_spectral_norm.powi(2) <= lambda_star,
            self.residual_frobenius_norm.powi(2) <= lambda_star,
        )
    }
}

/// Block-coordinate descent on the factorized problem.
///
/// Each outer iteration projects every column against the current `U`
/// (warm-started from the previous outliers) and then sets
/// `U ← (X − O)Sᵀ(SSᵀ + λ*I)⁻¹`. Stops when the relative change of the
/// factorized cost is at most `cfg.tol`.
pub fn batch_rpca(x: &DenseMatrix, p: &RegParams, cfg: &SolverConfig) -> Result<BatchDecomposition> {
    cfg.validate()?;
    let (m, n) = x.shape();
    p.check_dim(m)?;
    let q = p.q();
    if q > m.min(n) {
        return Err(RpcaError::Dimension(format!("rank bound {q} exceeds min({m}, {n})")));
    }
    let ls = p.lambda_star();
    let (mut u, _) = svd_factorize(x, q)?;
    let mut s = DenseMatrix::zeros(q, n);
    let mut o = DenseMatrix::zeros(m, n);
    let inner = SolverConfig {
        tol: cfg.tol.min(1e-9),
        max_iter: 5000,
        record_cost_trace: false,
    };

    let mut cost_trace = vec![factorized_cost(x, &u, &s, &o, p)?];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iter {
        iterations += 1;
        let op = ProjectionOperator::new(&u, ls)?;
        for j in 0..n {
            let proj = run_alternation(
                x.column(j),
                &op,
                p,
                inner.max_iter,
                Some(inner.tol),
                false,
                Some(o.column(j)),
            );
            s.set_column(j, &proj.s);
            o.set_column(j, &proj.o);
        }
        let mut sst = s.matmul_t(&s)?;
        sst.add_diagonal(ls);
        u = crate::linalg::solve_right_spd(&x.sub(&o)?.matmul_t(&s)?, &sst)?;

        let cost = factorized_cost(x, &u, &s, &o, p)?;
        let prev = *cost_trace.last().expect("non-empty");
        cost_trace.push(cost);
        if (prev - cost).abs() <= cfg.tol * prev.abs().max(f64::MIN_POSITIVE) || prev == 0.0 {
            converged = true;
            break;
        }
    }

    let mut kkt = 0.0f64;
    for j in 0..n {
        kkt = kkt.max(kkt_residual(x.column(j), s.column(j), o.column(j), &u, p)?);
    }
    let mut residual = x.sub(&o)?;
    residual.axpy_in_place(-1.0, &u.matmul(&s)?)?;
    Ok(BatchDecomposition {
        residual_spectral_norm: residual.spectral_norm(),
        residual_frobenius_norm: residual.frobenius_norm(),
        u,
        s,
        o,
        cost_trace,
        kkt_residual: kkt,
        iterations,
        converged,
    })
}

/// Result of [`convex_rpca_reference`].
#[derive(Debug, Clone)]
pub struct ConvexDecomposition {
    pub l: DenseMatrix,
    pub o: DenseMatrix,
    /// Convex cost after every iteration.
    pub cost_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl ConvexDecomposition {
    pub fn final_cost(&self) -> f64 {
        self.cost_trace.last().copied().unwrap_or(0.0)
    }
}

/// Two-block proximal alternation for the convex problem:
/// `L ← svt(X − O, λ*)`, `O ← π_λ(X − L)` row-wise. Each update is an exact
/// block minimization, so the cost is non-increasing.
///
/// Stops when `max(‖ΔL‖_F, ‖ΔO‖_F) ≤ tol · (1 + ‖X‖_F)`.
pub fn convex_rpca_reference(x: &DenseMatrix, p: &RegParams, cfg: &SolverConfig) -> Result<ConvexDecomposition> {
    cfg.validate()?;
    let (m, n) = x.shape();
    p.check_dim(m)?;
    let lambda = p.lambda();
    let scale = 1.0 + x.frobenius_norm();
    let mut l = DenseMatrix::zeros(m, n);
    let mut o = DenseMatrix::zeros(m, n);
    let mut cost_trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iter {
        iterations += 1;
        let (l_new, nuclear) = svt_with_norm(&x.sub(&o)?, p.lambda_star());
        let mut o_new = DenseMatrix::zeros(m, n);
        let mut l1 = 0.0;
        let mut fit = 0.0;
        for j in 0..n {
            let (xc, lc) = (x.column(j), l_new.column(j));
            let oc = o_new.column_mut(j);
            for i in 0..m {
                let v = xc[i] - lc[i];
                oc[i] = shrink(v, lambda[i]);
                let r = v - oc[i];
                fit += r * r;
            }
            l1 += weighted_l1(oc, lambda);
        }
        cost_trace.push(0.5 * fit + p.lambda_star() * nuclear + l1);
        let dl = l_new.sub(&l)?.frobenius_norm();
        let dn = o_new.sub(&o)?.frobenius_norm();
        l = l_new;
        o = o_new;
        if dl.max(dn) <= cfg.tol * scale {
            converged = true;
            break;
        }
    }
    Ok(ConvexDecomposition {
        l,
        o,
        cost_trace,
        iterations,
        converged,
    })
}

/// Singular value thresholding `U diag(max(σ − τ, 0)) Vᵀ`, the proximal map
/// of `τ‖·‖_*`.
pub fn svt(a: &DenseMatrix, tau: f64) -> Result<DenseMatrix> {
    if !(tau >= 0.0) {
        return Err(RpcaError::InvalidParameter(format!(
            "svt threshold must be >= 0, got {tau}"
        )));
    }
    Ok(svt_with_norm(a, tau).0)
}

/// SVT result together with its nuclear norm.
fn svt_with_norm(a: &DenseMatrix, tau: f64) -> (DenseMatrix, f64) {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return (a.clone(), 0.0);
    }
    let f = svd(a);
    let mut out = DenseMatrix::zeros(m, n);
    let mut nuclear = 0.0;
    for (k, &sigma) in f.sigma.iter().enumerate() {
        let shrunk = sigma - tau;
        if shrunk <= 0.0 {
            break;
        }
        nuclear += shrunk;
        let uk: Vec<f64> = f.u_left.column(k).iter().map(|v| v * shrunk).collect();
        out.rank_one_update(1.0, &uk, f.v_right.column(k));
    }
    (out, nuclear)
}
