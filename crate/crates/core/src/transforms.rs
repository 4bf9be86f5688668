//! Sub-pixel planar translation of image-shaped samples and per-sample
//! alignment by descending the encoder objective over the shift.
//!
//! Samples are row-major rasterized images: pixel `(row, col)` sits at index
//! `row * width + col`. Translating by `(dx, dy)` samples the source at
//! `(col − dx, row − dy)` with bilinear interpolation; coordinates outside the
//! image replicate the nearest edge pixel.

use crate::encoder::EncoderParams;
use crate::error::{Result, RpcaError};
use crate::linalg::dot;
use crate::model::{Projection, RegParams};
use crate::training::loss_unsupervised;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImageGrid {
    pub width: usize,
    pub height: usize,
}

impl ImageGrid {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(RpcaError::InvalidParameter("image grid must be non-empty".into()));
        }
        Ok(Self { width, height })
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.pixels() {
            return Err(RpcaError::Dimension(format!(
                "sample of length {} on a {}x{} grid",
                x.len(),
                self.width,
                self.height
            )));
        }
        Ok(())
    }
}

/// Horizontal and vertical shift in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TransformParams {
    pub dx: f64,
    pub dy: f64,
}

impl TransformParams {
    pub fn new(dx: f64, dy: f64) -> Self {
        Self { dx, dy }
    }

    fn clamped(self, max_shift: f64) -> (Self, bool) {
        let c = Self {
            dx: self.dx.clamp(-max_shift, max_shift),
            dy: self.dy.clamp(-max_shift, max_shift),
        };
        (c, c != self)
    }
}

/// Bilinear cell lookup along one axis: lower index, fractional offset, and
/// whether the coordinate fell inside the image (derivative non-zero).
#[inline]
fn axis_cell(coord: f64, len: usize) -> (usize, usize, f64, bool) {
    if len == 1 {
        return (0, 0, 0.0, false);
    }
    let max = (len - 1) as f64;
    let inside = (0.0..=max).contains(&coord);
    let c = coord.clamp(0.0, max);
    let i0 = (c.floor() as usize).min(len - 2);
    (i0, i0 + 1, c - i0 as f64, inside)
}

/// Translates `x` by `alpha`.
pub fn warp(x: &[f64], grid: ImageGrid, alpha: TransformParams) -> Result<Vec<f64>> {
    grid.check(x)?;
    if alpha.dx == 0.0 && alpha.dy == 0.0 {
        return Ok(x.to_vec());
    }
    let (w, h) = (grid.width, grid.height);
    let mut out = vec![0.0; x.len()];
    for row in 0..h {
        let (y0, y1, fy, _) = axis_cell(row as f64 - alpha.dy, h);
        for col in 0..w {
            let (x0, x1, fx, _) = axis_cell(col as f64 - alpha.dx, w);
            let top = (1.0 - fx) * x[y0 * w + x0] + fx * x[y0 * w + x1];
            let bottom = (1.0 - fx) * x[y1 * w + x0] + fx * x[y1 * w + x1];
            out[row * w + col] = (1.0 - fy) * top + fy * bottom;
        }
    }
    Ok(out)
}

/// Partial derivatives of [`warp`] with respect to `dx` and `dy`.
pub fn warp_jacobian(x: &[f64], grid: ImageGrid, alpha: TransformParams) -> Result<(Vec<f64>, Vec<f64>)> {
    grid.check(x)?;
    let (w, h) = (grid.width, grid.height);
    let mut d_dx = vec![0.0; x.len()];
    let mut d_dy = vec![0.0; x.len()];
    for row in 0..h {
        let (y0, y1, fy, y_in) = axis_cell(row as f64 - alpha.dy, h);
        for col in 0..w {
            let (x0, x1, fx, x_in) = axis_cell(col as f64 - alpha.dx, w);
            let (i00, i01, i10, i11) = (x[y0 * w + x0], x[y0 * w + x1], x[y1 * w + x0], x[y1 * w + x1]);
            let idx = row * w + col;
            // Source coordinates move opposite to the shift.
            if x_in {
                d_dx[idx] = -((1.0 - fy) * (i01 - i00) + fy * (i11 - i10));
            }
            if y_in {
                d_dy[idx] = -((1.0 - fx) * (i10 - i00) + fx * (i11 - i01));
            }
        }
    }
    Ok((d_dx, d_dy))
}

/// Settings for [`align_project`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignConfig {
    /// Length in pixels of the first trial move of each line search.
    pub step: f64,
    pub max_iter: usize,
    /// Relative cost change below which a descent run stops.
    pub tol: f64,
    pub max_shift: f64,
    pub armijo: f64,
    /// Also start from the four unit shifts around `alpha0`.
    pub multi_start: bool,
}

impl Default for AlignConfig {
    fn default() -> Self {
        Self {
            step: 1.0,
            max_iter: 100,
            tol: 1e-6,
            max_shift: 8.0,
            armijo: 1e-4,
            multi_start: true,
        }
    }
}

/// Outcome of [`align_project`].
#[derive(Debug, Clone)]
pub struct Alignment {
    pub alpha: TransformParams,
    pub projection: Projection,
    /// Objective at `alpha`.
    pub cost: f64,
    /// Objective at the starting `alpha0`.
    pub initial_cost: f64,
    /// A shift hit the `max_shift` box.
    pub clamped: bool,
}

/// Objective `f(T_α x, h(T_α x))` and its gradient with respect to `α`.
pub fn alignment_objective(
    theta: &EncoderParams,
    x: &[f64],
    grid: ImageGrid,
    p: &RegParams,
    alpha: TransformParams,
) -> Result<(f64, [f64; 2])> {
    let warped = warp(x, grid, alpha)?;
    let loss = loss_unsupervised(theta, &warped, p)?;
    let (jx, jy) = warp_jacobian(x, grid, alpha)?;
    Ok((loss.value, [dot(&loss.grads.x, &jx), dot(&loss.grads.x, &jy)]))
}

fn objective_value(
    theta: &EncoderParams,
    x: &[f64],
    grid: ImageGrid,
    p: &RegParams,
    alpha: TransformParams,
) -> Result<f64> {
    let warped = warp(x, grid, alpha)?;
    let code = crate::encoder::encode(theta, &warped)?;
    crate::model::projection_cost(&warped, &code.s, &code.o, &theta.u, p)
}

struct Descent {
    alpha: TransformParams,
    cost: f64,
    iterations: usize,
    clamped: bool,
}

fn descend(
    theta: &EncoderParams,
    x: &[f64],
    grid: ImageGrid,
    p: &RegParams,
    start: TransformParams,
    cfg: &AlignConfig,
) -> Result<Descent> {
    let (mut alpha, mut clamped) = start.clamped(cfg.max_shift);
    let (mut cost, mut grad) = alignment_objective(theta, x, grid, p, alpha)?;
    check_finite(cost)?;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        let gnorm = grad[0].hypot(grad[1]);
        if gnorm == 0.0 {
            break;
        }
        let mut t = cfg.step / gnorm;
        let mut accepted = None;
        for _ in 0..40 {
            let trial = TransformParams::new(alpha.dx - t * grad[0], alpha.dy - t * grad[1]);
            let (trial, hit) = trial.clamped(cfg.max_shift);
            let moved = [trial.dx - alpha.dx, trial.dy - alpha.dy];
            let c = objective_value(theta, x, grid, p, trial)?;
            check_finite(c)?;
            if c <= cost + cfg.armijo * (grad[0] * moved[0] + grad[1] * moved[1])
                && (moved[0] != 0.0 || moved[1] != 0.0)
            {
                accepted = Some((trial, c, hit));
                break;
            }
            t *= 0.5;
        }
        let Some((next, next_cost, hit)) = accepted else {
            break;
        };
        let change = cost - next_cost;
        alpha = next;
        clamped |= hit;
        let (c, g) = alignment_objective(theta, x, grid, p, alpha)?;
        cost = c;
        grad = g;
        if change <= cfg.tol * cost.abs().max(1.0) {
            break;
        }
    }
    Ok(Descent {
        alpha,
        cost,
        iterations,
        clamped,
    })
}

fn check_finite(c: f64) -> Result<()> {
    if c.is_finite() {
        Ok(())
    } else {
        Err(RpcaError::NonFinite("alignment objective diverged".into()))
    }
}

/// Finds the shift that minimizes the encoder objective of the warped sample
/// by gradient descent with Armijo backtracking, optionally from several
/// starting shifts. The returned cost never exceeds the cost at `alpha0`.
pub fn align_project(
    theta: &EncoderParams,
    x: &[f64],
    grid: ImageGrid,
    p: &RegParams,
    alpha0: TransformParams,
    cfg: &AlignConfig,
) -> Result<Alignment> {
    grid.check(x)?;
    if !(cfg.max_shift >= 0.0) || !(cfg.step > 0.0) || cfg.max_iter == 0 {
        return Err(RpcaError::InvalidParameter(
            "alignment config needs max_shift >= 0, step > 0, max_iter >= 1".into(),
        ));
    }
    let (start, _) = alpha0.clamped(cfg.max_shift);
    let initial_cost = objective_value(theta, x, grid, p, start)?;
    check_finite(initial_cost)?;

    let mut starts = vec![start];
    if cfg.multi_start && cfg.max_shift > 1.0 {
        for (ex, ey) in [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)] {
            starts.push(TransformParams::new(start.dx + ex, start.dy + ey));
        }
    }
    let mut best = Descent {
        alpha: start,
        cost: initial_cost,
        iterations: 0,
        clamped: alpha0 != start,
    };
    let mut total_iterations = 0;
    for s in starts {
        let d = descend(theta, x, grid, p, s, cfg)?;
        total_iterations += d.iterations;
        if d.cost < best.cost {
            best = d;
        }
    }
    let warped = warp(x, grid, best.alpha)?;
    let code = crate::encoder::encode(theta, &warped)?;
    Ok(Alignment {
        alpha: best.alpha,
        projection: Projection {
            s: code.s,
            o: code.o,
            iterations: total_iterations,
            final_cost: best.cost,
            cost_trace: Vec::new(),
            converged: true,
        },
        cost: best.cost,
        initial_cost,
        clamped: best.clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> ImageGrid {
        ImageGrid::new(8, 6).unwrap()
    }

    fn ramp(slope: f64) -> Vec<f64> {
        (0..48).map(|i| slope * (i % 8) as f64).collect()
    }

    #[test]
    fn identity_shift_is_exact() {
        let x: Vec<f64> = (0..48).map(|i| (i as f64 * 0.37).sin()).collect();
        assert_eq!(warp(&x, grid(), TransformParams::default()).unwrap(), x);
    }

    #[test]
    fn integer_shift_moves_pixels() {
        let mut x = vec![0.0; 48];
        x[2 * 8 + 3] = 1.0;
        let out = warp(&x, grid(), TransformParams::new(1.0, 0.0)).unwrap();
        let mut expect = vec![0.0; 48];
        expect[2 * 8 + 4] = 1.0;
        assert_eq!(out, expect);
        let out = warp(&x, grid(), TransformParams::new(0.0, -1.0)).unwrap();
        assert_eq!(out[8 + 3], 1.0);
    }

    #[test]
    fn half_pixel_ramp_shift() {
        let x = ramp(2.0);
        let out = warp(&x, grid(), TransformParams::new(0.5, 0.0)).unwrap();
        for row in 0..6 {
            for col in 1..8 {
                let expect = 2.0 * (col as f64 - 0.5);
                assert!((out[row * 8 + col] - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn jacobian_of_constant_and_ramp() {
        let c = vec![3.0; 48];
        let (jx, jy) = warp_jacobian(&c, grid(), TransformParams::new(0.3, -0.2)).unwrap();
        assert!(jx.iter().chain(&jy).all(|v| *v == 0.0));
        let (jx, _) = warp_jacobian(&ramp(1.5), grid(), TransformParams::new(0.3, 0.0)).unwrap();
        for row in 0..6 {
            for col in 1..8 {
                assert!((jx[row * 8 + col] + 1.5).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn grid_mismatch_is_an_error() {
        assert!(warp(&[0.0; 47], grid(), TransformParams::default()).is_err());
        assert!(warp_jacobian(&[0.0; 49], grid(), TransformParams::default()).is_err());
        assert!(ImageGrid::new(0, 3).is_err());
    }
}
