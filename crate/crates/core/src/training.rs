//! Losses and stochastic gradient training for the unrolled encoder.
//!
//! Two objectives are supported: a supervised squared error against target
//! codes, and the unsupervised per-sample cost of the encoder's own output.
//! Training can optionally refit the decoder dictionary in closed form from
//! discounted code statistics, the same update the online solver uses.

use rand::seq::SliceRandom;

use crate::encoder::{backward, encode, forward, EncoderGrads, EncoderParams};
use crate::error::{Result, RpcaError};
use crate::linalg::{axpy, dot, sub_vec, DenseMatrix};
use crate::model::{projection_cost, RegParams};
use crate::online::OnlineState;
use crate::solvers::{robust_project, SolverConfig};
use crate::synth::rng_from_seed;

/// Step-size schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecaySchedule {
    Constant,
    /// `μ_t = μ₀ / (1 + t / T_half)`. `None` uses a quarter of the total step
    /// count.
    InverseTime {
        half_life: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub step0: f64,
    pub decay: DecaySchedule,
    pub minibatch: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Forgetting factor for the dictionary statistics.
    pub beta: f64,
    /// Refit the dictionary every this many steps; 0 keeps it frozen.
    pub dict_update_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            step0: 1e-3,
            decay: DecaySchedule::InverseTime { half_life: None },
            minibatch: 10,
            epochs: 10,
            seed: 0,
            beta: 1.0,
            dict_update_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step0 >= 0.0) || !self.step0.is_finite() {
            return Err(RpcaError::InvalidParameter(format!(
                "step0 must be finite and >= 0, got {}",
                self.step0
            )));
        }
        if self.minibatch == 0 {
            return Err(RpcaError::InvalidParameter("minibatch must be >= 1".into()));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(RpcaError::InvalidParameter(format!(
                "beta must lie in (0, 1], got {}",
                self.beta
            )));
        }
        if let DecaySchedule::InverseTime { half_life: Some(t) } = self.decay {
            if !(t > 0.0) {
                return Err(RpcaError::InvalidParameter("decay half-life must be positive".into()));
            }
        }
        Ok(())
    }

    fn step_size(&self, t: usize, total_steps: usize) -> f64 {
        match self.decay {
            DecaySchedule::Constant => self.step0,
            DecaySchedule::InverseTime { half_life } => {
                let t_half = half_life.unwrap_or((total_steps as f64 / 4.0).max(1.0));
                self.step0 / (1.0 + t as f64 / t_half)
            }
        }
    }
}

/// Target codes `(s*, o*)`, one column per training sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedTargets {
    pub s_star: DenseMatrix,
    pub o_star: DenseMatrix,
}

/// Training objective.
#[derive(Debug, Clone, Copy)]
pub enum Objective<'a> {
    Supervised(&'a SupervisedTargets),
    Unsupervised,
}

/// `½‖s − s*‖² + ½‖o − o*‖²` and its gradients.
pub fn loss_supervised(
    theta: &EncoderParams,
    x: &[f64],
    target_s: &[f64],
    target_o: &[f64],
) -> Result<(f64, EncoderGrads)> {
    if target_s.len() != theta.code_dim() || target_o.len() != theta.dim() {
        return Err(RpcaError::Dimension(format!(
            "targets of length {} and {} for q={}, m={}",
            target_s.len(),
            target_o.len(),
            theta.code_dim(),
            theta.dim()
        )));
    }
    let (code, trace) = forward(theta, x)?;
    let gs = sub_vec(&code.s, target_s);
    let go = sub_vec(&code.o, target_o);
    let value = 0.5 * (dot(&gs, &gs) + dot(&go, &go));
    let grads = backward(theta, x, &trace, &gs, &go)?;
    Ok((value, grads))
}

/// Value and gradients of the unsupervised per-sample cost.
#[derive(Debug, Clone)]
pub struct UnsupervisedLoss {
    pub value: f64,
    pub grads: EncoderGrads,
    /// `∂f/∂U = −r sᵀ`.
    pub grad_u: DenseMatrix,
}

/// `f(x, h(x, Θ))` with `f = ½‖x − Us − o‖² + (λ*/2)‖s‖² + Σ λᵢ|oᵢ|` and its
/// gradients. The input gradient `grads.x` includes the direct `∂f/∂x = r`
/// term, so it is the total derivative of the loss with respect to `x`.
pub fn loss_unsupervised(theta: &EncoderParams, x: &[f64], p: &RegParams) -> Result<UnsupervisedLoss> {
    if theta.code_dim() != p.q() {
        return Err(RpcaError::Dimension(format!(
            "encoder code dimension {} differs from rank bound {}",
            theta.code_dim(),
            p.q()
        )));
    }
    p.check_dim(theta.dim())?;
    let (code, trace) = forward(theta, x)?;
    let value = projection_cost(x, &code.s, &code.o, &theta.u, p)?;
    let mut r = sub_vec(x, &code.o);
    for (k, &sk) in code.s.iter().enumerate() {
        axpy(-sk, theta.u.column(k), &mut r);
    }
    let ls = p.lambda_star();
    let mut grad_s = theta.u.t_matvec(&r)?;
    for (g, s) in grad_s.iter_mut().zip(&code.s) {
        *g = -*g + ls * s;
    }
    let grad_o: Vec<f64> = r
        .iter()
        .zip(&code.o)
        .zip(p.lambda())
        .map(|((ri, oi), li)| {
            let sign = if *oi > 0.0 {
                1.0
            } else if *oi < 0.0 {
                -1.0
            } else {
                0.0
            };
            -ri + li * sign
        })
        .collect();
    let mut grads = backward(theta, x, &trace, &grad_s, &grad_o)?;
    axpy(1.0, &r, &mut grads.x);
    let mut grad_u = DenseMatrix::zeros(theta.dim(), theta.code_dim());
    grad_u.rank_one_update(-1.0, &r, &code.s);
    Ok(UnsupervisedLoss { value, grads, grad_u })
}

/// Mean loss and mean gradient over the listed columns.
pub fn minibatch_gradient(
    theta: &EncoderParams,
    data: &DenseMatrix,
    columns: &[usize],
    objective: Objective<'_>,
    p: &RegParams,
) -> Result<(f64, EncoderGrads)> {
    let mut total = EncoderGrads::zeros(theta.dim(), theta.code_dim());
    let mut loss = 0.0;
    let scale = 1.0 / columns.len() as f64;
    for &j in columns {
        let (value, grads) = sample_loss(theta, data.column(j), j, objective, p)?;
        loss += value;
        total.add_scaled(scale, &grads);
    }
    Ok((loss * scale, total))
}

fn sample_loss(
    theta: &EncoderParams,
    x: &[f64],
    j: usize,
    objective: Objective<'_>,
    p: &RegParams,
) -> Result<(f64, EncoderGrads)> {
    match objective {
        Objective::Supervised(t) => loss_supervised(theta, x, t.s_star.column(j), t.o_star.column(j)),
        Objective::Unsupervised => loss_unsupervised(theta, x, p).map(|l| (l.value, l.grads)),
    }
}

/// Applies `Θ ← Θ − μ ∇` and clamps the thresholds at zero.
pub fn apply_update(theta: &mut EncoderParams, grads: &EncoderGrads, step: f64) {
    axpy(-step, grads.w.as_slice(), theta.w.as_mut_slice());
    axpy(-step, grads.h.as_slice(), theta.h.as_mut_slice());
    for (l, g) in theta.lambda.iter_mut().zip(&grads.lambda) {
        *l = (*l - step * g).max(0.0);
    }
}

/// One row of the training history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Number of parameter updates taken by the end of this epoch.
    pub step: usize,
    /// Mean minibatch loss over the epoch, each measured before its update.
    pub mean_loss: f64,
}

/// Minibatch SGD over `Θ = {W, H, λ}`.
///
/// Every epoch visits a fresh seeded permutation of the columns in chunks of
/// `minibatch`. When `dict_update_every > 0`, every that many steps the
/// current minibatch is encoded, its statistics are folded into discounted
/// accumulators and `U` is refit in closed form.
pub fn sgd_train(
    theta: &EncoderParams,
    data: &DenseMatrix,
    objective: Objective<'_>,
    p: &RegParams,
    cfg: &TrainConfig,
) -> Result<(EncoderParams, Vec<EpochRecord>)> {
    cfg.validate()?;
    theta.validate()?;
    let n = data.cols();
    if n == 0 {
        return Err(RpcaError::InvalidParameter("training data has no columns".into()));
    }
    if data.rows() != theta.dim() {
        return Err(RpcaError::Dimension(format!(
            "training data has {} rows, encoder dimension is {}",
            data.rows(),
            theta.dim()
        )));
    }
    if let Objective::Supervised(t) = objective {
        if t.s_star.cols() != n || t.o_star.cols() != n {
            return Err(RpcaError::Dimension("targets do not match the training set".into()));
        }
    }

    let epochs = cfg.epochs.max(1);
    let batches_per_epoch = n.div_ceil(cfg.minibatch);
    let total_steps = epochs * batches_per_epoch;
    let mut rng = rng_from_seed(cfg.seed);
    let mut theta = theta.clone();
    let mut dict = (cfg.dict_update_every > 0)
        .then(|| OnlineState::new(theta.u.clone(), cfg.beta))
        .transpose()?;
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(epochs);
    let mut step = 0;

    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.minibatch) {
            let (loss, grads) = minibatch_gradient(&theta, data, batch, objective, p)?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(RpcaError::Divergence { step, loss });
            }
            epoch_loss += loss;
            apply_update(&mut theta, &grads, cfg.step_size(step, total_steps));
            step += 1;
            if let Some(state) = dict.as_mut() {
                if step % cfg.dict_update_every == 0 {
                    refit_dictionary(&mut theta, state, data, batch, p)?;
                }
            }
        }
        history.push(EpochRecord {
            epoch,
            step,
            mean_loss: epoch_loss / batches_per_epoch as f64,
        });
    }
    Ok((theta, history))
}

fn refit_dictionary(
    theta: &mut EncoderParams,
    state: &mut OnlineState,
    data: &DenseMatrix,
    batch: &[usize],
    p: &RegParams,
) -> Result<()> {
    for &j in batch {
        let x = data.column(j);
        let code = encode(theta, x)?;
        state.accumulate(&code.s, &sub_vec(x, &code.o))?;
    }
    state.refit(p.lambda_star())?;
    theta.u = state.dictionary().clone();
    Ok(())
}

/// Exact per-column projections used as supervision targets.
pub fn make_supervised_targets(
    x: &DenseMatrix,
    u: &DenseMatrix,
    p: &RegParams,
    cfg: &SolverConfig,
) -> Result<SupervisedTargets> {
    let (m, n) = x.shape();
    let cfg = SolverConfig {
        tol: cfg.tol.min(1e-10),
        ..*cfg
    };
    let mut s_star = DenseMatrix::zeros(u.cols(), n);
    let mut o_star = DenseMatrix::zeros(m, n);
    for j in 0..n {
        let proj = robust_project(x.column(j), u, p, &cfg)?;
        s_star.set_column(j, &proj.s);
        o_star.set_column(j, &proj.o);
    }
    Ok(SupervisedTargets { s_star, o_star })
}

/// Mean per-sample cost of the encoder's codes over the columns of `x`.
pub fn mean_encoder_cost(theta: &EncoderParams, x: &DenseMatrix, p: &RegParams) -> Result<f64> {
    let costs = encoder_costs(theta, x, p)?;
    Ok(costs.iter().sum::<f64>() / costs.len().max(1) as f64)
}

/// Per-column cost of the encoder's codes.
pub fn encoder_costs(theta: &EncoderParams, x: &DenseMatrix, p: &RegParams) -> Result<Vec<f64>> {
    (0..x.cols())
        .map(|j| {
            let code = encode(theta, x.column(j))?;
            projection_cost(x.column(j), &code.s, &code.o, &theta.u, p)
        })
        .collect()
}

/// Trains on a stream in arrival order. Each block of `cfg.minibatch`
/// consecutive samples is first encoded and scored with the current model,
/// then used for one gradient step and, when `dict_update_every > 0`, for a
/// dictionary refit with forgetting factor `cfg.beta`.
///
/// Returns the per-sample costs measured before the model saw each sample.
pub fn stream_train(
    theta: &mut EncoderParams,
    stream: &DenseMatrix,
    p: &RegParams,
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let n = stream.cols();
    let total_steps = n.div_ceil(cfg.minibatch);
    let mut dict = (cfg.dict_update_every > 0)
        .then(|| OnlineState::new(theta.u.clone(), cfg.beta))
        .transpose()?;
    let mut costs = Vec::with_capacity(n);
    let idx: Vec<usize> = (0..n).collect();
    for (step, block) in idx.chunks(cfg.minibatch).enumerate() {
        for &j in block {
            let x = stream.column(j);
            let code = encode(theta, x)?;
            costs.push(projection_cost(x, &code.s, &code.o, &theta.u, p)?);
        }
        let (loss, grads) = minibatch_gradient(theta, stream, block, Objective::Unsupervised, p)?;
        if !loss.is_finite() || !grads.is_finite() {
            return Err(RpcaError::Divergence { step, loss });
        }
        apply_update(theta, &grads, cfg.step_size(step, total_steps));
        if let Some(state) = dict.as_mut() {
            if (step + 1) % cfg.dict_update_every == 0 {
                refit_dictionary(theta, state, stream, block, p)?;
            }
        }
    }
    Ok(costs)
}

/// Means over windows of `window` consecutive values advanced by `step`.
/// A series shorter than one window yields its overall mean.
pub fn windowed_means(values: &[f64], window: usize, step: usize) -> Vec<f64> {
    if values.is_empty() || window == 0 || step == 0 {
        return Vec::new();
    }
    if values.len() <= window {
        return vec![values.iter().sum::<f64>() / values.len() as f64];
    }
    (0..=values.len() - window)
        .step_by(step)
        .map(|start| values[start..start + window].iter().sum::<f64>() / window as f64)
        .collect()
}
