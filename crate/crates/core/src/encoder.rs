//! Feed-forward encoder whose layers unroll the alternating projection solver.
//!
//! With parameters `W` (m×m), `H` (q×m) and thresholds `λ`, a K-layer encoder
//! computes
//!
//! ```text
//! b₀ = (I − W) x,  o₀ = 0
//! o_k = π_λ(b_{k−1}),  b_k = b_{k−1} + W (o_k − o_{k−1})      k = 1..K
//! s = H (x − o_K),  o = o_K
//! ```
//!
//! Initialized with `H = (UᵀU + λ*I)⁻¹Uᵀ` and `W = U H` it reproduces K
//! iterations of the exact solver. `W`, `H` and `λ` are shared by all layers.

use crate::error::{Result, RpcaError};
use crate::linalg::{axpy, DenseMatrix};
use crate::model::{projection_cost, shrink, Code, Projection, RegParams};
use crate::solvers::ProjectionOperator;

/// Learnable encoder parameters plus the decoder dictionary `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub w: DenseMatrix,
    pub h: DenseMatrix,
    pub lambda: Vec<f64>,
    pub u: DenseMatrix,
    pub layers: usize,
}

impl EncoderParams {
    /// Checks shapes, finiteness and the sign of the thresholds.
    pub fn new(w: DenseMatrix, h: DenseMatrix, lambda: Vec<f64>, u: DenseMatrix, layers: usize) -> Result<Self> {
        let theta = Self {
            w,
            h,
            lambda,
            u,
            layers,
        };
        theta.validate()?;
        Ok(theta)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.w.rows();
        let q = self.h.rows();
        if self.w.cols() != m || self.h.cols() != m || self.lambda.len() != m || self.u.shape() != (m, q) {
            return Err(RpcaError::Dimension(format!(
                "encoder shapes: W {:?}, H {:?}, lambda {}, U {:?}",
                self.w.shape(),
                self.h.shape(),
                self.lambda.len(),
                self.u.shape()
            )));
        }
        if self.layers == 0 {
            return Err(RpcaError::InvalidParameter("encoder needs at least one layer".into()));
        }
        if self.lambda.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
            return Err(RpcaError::InvalidParameter("thresholds must be finite and >= 0".into()));
        }
        if !(self.w.is_finite() && self.h.is_finite() && self.u.is_finite()) {
            return Err(RpcaError::NonFinite("encoder parameters".into()));
        }
        Ok(())
    }

    /// Data dimension m.
    pub fn dim(&self) -> usize {
        self.w.rows()
    }

    /// Code dimension q.
    pub fn code_dim(&self) -> usize {
        self.h.rows()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(RpcaError::Dimension(format!(
                "sample of length {} for an encoder of dimension {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(())
    }
}

/// Parameters reproducing the exact solver: `H = (UᵀU + λ*I)⁻¹Uᵀ`, `W = U H`.
pub fn encoder_init(u: &DenseMatrix, p: &RegParams, layers: usize) -> Result<EncoderParams> {
    p.check_dim(u.rows())?;
    let op = ProjectionOperator::new(u, p.lambda_star())?;
    let h = op.coefficient_map().clone();
    let w = u.matmul(&h)?;
    EncoderParams::new(w, h, p.lambda().to_vec(), u.clone(), layers)
}

/// Intermediate values kept by [`forward`] for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// `b₀ … b_K`.
    pub b_per_layer: Vec<Vec<f64>>,
    /// `o₁ … o_K`.
    pub o_per_layer: Vec<Vec<f64>>,
    /// `|b_{k−1}| > λ` for each layer k.
    pub active_mask_per_layer: Vec<Vec<bool>>,
}

impl ForwardTrace {
    /// Smallest distance `||bᵢ| − λᵢ|` over every layer's thresholding input;
    /// gradients are exact when this is positive.
    pub fn boundary_margin(&self, lambda: &[f64]) -> f64 {
        let layers = self.o_per_layer.len();
        self.b_per_layer[..layers]
            .iter()
            .flat_map(|b| b.iter().zip(lambda).map(|(v, l)| (v.abs() - l).abs()))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Runs the encoder on one sample, keeping the trace.
pub fn forward(theta: &EncoderParams, x: &[f64]) -> Result<(Code, ForwardTrace)> {
    theta.check_input(x)?;
    let mut trace = ForwardTrace {
        b_per_layer: Vec::with_capacity(theta.layers + 1),
        o_per_layer: Vec::with_capacity(theta.layers),
        active_mask_per_layer: Vec::with_capacity(theta.layers),
    };
    let code = run(theta, x, Some(&mut trace));
    Ok((code, trace))
}

/// Runs the encoder on one sample without recording a trace.
pub fn encode(theta: &EncoderParams, x: &[f64]) -> Result<Code> {
    theta.check_input(x)?;
    Ok(run(theta, x, None))
}

/// Encodes and evaluates the per-sample cost with the decoder dictionary.
pub fn encode_with_cost(theta: &EncoderParams, x: &[f64], p: &RegParams) -> Result<Projection> {
    let code = encode(theta, x)?;
    let final_cost = projection_cost(x, &code.s, &code.o, &theta.u, p)?;
    Ok(Projection {
        s: code.s,
        o: code.o,
        iterations: theta.layers,
        final_cost,
        cost_trace: Vec::new(),
        converged: true,
    })
}

fn run(theta: &EncoderParams, x: &[f64], mut trace: Option<&mut ForwardTrace>) -> Code {
    let m = x.len();
    let lambda = &theta.lambda;
    let mut b = x.to_vec();
    let mut wx = vec![0.0; m];
    theta.w.matvec_dense_acc(x, &mut wx);
    for (bi, wi) in b.iter_mut().zip(&wx) {
        *bi -= wi;
    }
    let mut y = vec![0.0; m];
    let mut o = vec![0.0; m];
    let mut d = vec![0.0; m];
    for _ in 0..theta.layers {
        for i in 0..m {
            o[i] = shrink(b[i], lambda[i]);
            d[i] = o[i] - y[i];
        }
        if let Some(t) = trace.as_deref_mut() {
            t.b_per_layer.push(b.clone());
            t.o_per_layer.push(o.clone());
            t.active_mask_per_layer
                .push(b.iter().zip(lambda).map(|(v, l)| v.abs() > *l).collect());
        }
        theta.w.matvec_dense_acc(&d, &mut b);
        std::mem::swap(&mut y, &mut o);
    }
    if let Some(t) = trace {
        t.b_per_layer.push(b);
    }
    let residual: Vec<f64> = x.iter().zip(&y).map(|(a, c)| a - c).collect();
    let mut s = vec![0.0; theta.code_dim()];
    theta.h.matvec_acc(&residual, &mut s);
    Code { s, o: y }
}

/// Gradients of a scalar loss with respect to the encoder parameters and input.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGrads {
    pub w: DenseMatrix,
    pub h: DenseMatrix,
    pub lambda: Vec<f64>,
    pub x: Vec<f64>,
}

impl EncoderGrads {
    pub fn zeros(m: usize, q: usize) -> Self {
        Self {
            w: DenseMatrix::zeros(m, m),
            h: DenseMatrix::zeros(q, m),
            lambda: vec![0.0; m],
            x: vec![0.0; m],
        }
    }

    /// `self += alpha · other`.
    pub fn add_scaled(&mut self, alpha: f64, other: &Self) {
        axpy(alpha, other.w.as_slice(), self.w.as_mut_slice());
        axpy(alpha, other.h.as_slice(), self.h.as_mut_slice());
        axpy(alpha, &other.lambda, &mut self.lambda);
        axpy(alpha, &other.x, &mut self.x);
    }

    pub fn is_finite(&self) -> bool {
        self.w.is_finite() && self.h.is_finite() && self.lambda.iter().chain(&self.x).all(|v| v.is_finite())
    }
}

/// Reverse-mode derivatives of `(s, o) = forward(theta, x)` contracted with
/// the output adjoints `grad_s` and `grad_o`.
///
/// The thresholding derivative is 1 (w.r.t. `b`) and `−sign(b)` (w.r.t. `λ`)
/// on active units and 0 elsewhere, including at `|b| = λ`.
pub fn backward(
    theta: &EncoderParams,
    x: &[f64],
    trace: &ForwardTrace,
    grad_s: &[f64],
    grad_o: &[f64],
) -> Result<EncoderGrads> {
    theta.check_input(x)?;
    let (m, q) = (theta.dim(), theta.code_dim());
    let k_layers = theta.layers;
    if grad_s.len() != q || grad_o.len() != m {
        return Err(RpcaError::Dimension(format!(
            "output adjoints of length {} and {} for q={q}, m={m}",
            grad_s.len(),
            grad_o.len()
        )));
    }
    if trace.o_per_layer.len() != k_layers
        || trace.b_per_layer.len() != k_layers + 1
        || trace.b_per_layer.iter().any(|b| b.len() != m)
    {
        return Err(RpcaError::Dimension("trace does not belong to this encoder".into()));
    }

    let mut g = EncoderGrads::zeros(m, q);
    let o_last = &trace.o_per_layer[k_layers - 1];
    let x_minus_o: Vec<f64> = x.iter().zip(o_last).map(|(a, b)| a - b).collect();
    g.h.rank_one_update(1.0, grad_s, &x_minus_o);
    let hts = theta.h.t_matvec(grad_s)?;
    axpy(1.0, &hts, &mut g.x);

    // Adjoint of o_k and of b_k while walking the layers backwards.
    let mut o_bar: Vec<f64> = grad_o.iter().zip(&hts).map(|(a, b)| a - b).collect();
    let mut b_bar = vec![0.0; m];
    let mut b_bar_nonzero = false;
    let zeros = vec![0.0; m];
    for k in (1..=k_layers).rev() {
        let o_k = &trace.o_per_layer[k - 1];
        let o_prev = if k >= 2 { &trace.o_per_layer[k - 2] } else { &zeros };
        let b_prev = &trace.b_per_layer[k - 1];

        // b_k = b_{k−1} + W (o_k − o_{k−1})
        let wtb = if b_bar_nonzero {
            let wtb = theta.w.t_matvec(&b_bar)?;
            axpy(1.0, &wtb, &mut o_bar);
            let delta: Vec<f64> = o_k.iter().zip(o_prev).map(|(a, b)| a - b).collect();
            g.w.rank_one_update(1.0, &b_bar, &delta);
            Some(wtb)
        } else {
            None
        };

        // o_k = π_λ(b_{k−1})
        for i in 0..m {
            if b_prev[i].abs() > theta.lambda[i] {
                b_bar[i] += o_bar[i];
                g.lambda[i] -= b_prev[i].signum() * o_bar[i];
            }
        }
        b_bar_nonzero = b_bar.iter().any(|v| *v != 0.0);

        match wtb {
            Some(wtb) => o_bar.iter_mut().zip(&wtb).for_each(|(ob, w)| *ob = -w),
            None => o_bar.iter_mut().for_each(|ob| *ob = 0.0),
        }
    }

    // b₀ = x − W x
    if b_bar_nonzero {
        let wtb = theta.w.t_matvec(&b_bar)?;
        for i in 0..m {
            g.x[i] += b_bar[i] - wtb[i];
        }
        g.w.rank_one_update(-1.0, &b_bar, x);
    }
    Ok(g)
}

/// Column-wise [`encode`]; returns `(S, O)`.
pub fn forward_batch(theta: &EncoderParams, x: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix)> {
    if x.rows() != theta.dim() {
        return Err(RpcaError::Dimension(format!(
            "batch with {} rows for an encoder of dimension {}",
            x.rows(),
            theta.dim()
        )));
    }
    let n = x.cols();
    let mut s = DenseMatrix::zeros(theta.code_dim(), n);
    let mut o = DenseMatrix::zeros(theta.dim(), n);
    for j in 0..n {
        let code = run(theta, x.column(j), None);
        s.set_column(j, &code.s);
        o.set_column(j, &code.o);
    }
    Ok((s, o))
}
