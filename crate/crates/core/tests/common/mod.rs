//! Test-local reference implementations, written without the crate's solvers
//! so they can serve as independent oracles.
#![allow(dead_code)]

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rpca_core::DenseMatrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Orthonormal columns by modified Gram-Schmidt of a Gaussian draw.
pub fn orthonormal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(cols);
    while q.len() < cols {
        let mut v = gaussian_vec(rng, rows);
        for _ in 0..2 {
            for b in &q {
                let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-8 {
            q.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    DenseMatrix::from_columns(&q).unwrap()
}

/// Inverse by Gauss-Jordan elimination with partial pivoting.
pub fn inverse(a: &DenseMatrix) -> DenseMatrix {
    let n = a.rows();
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row = a.row(i);
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
        m.swap(c, p);
        let d = m[c][c];
        m[c].iter_mut().for_each(|v| *v /= d);
        for r in 0..n {
            if r != c {
                let f = m[r][c];
                if f != 0.0 {
                    let pivot = m[c].clone();
                    m[r].iter_mut().zip(&pivot).for_each(|(v, pv)| *v -= f * pv);
                }
            }
        }
    }
    DenseMatrix::from_fn(n, n, |i, j| m[i][n + j])
}

pub fn shrink(v: f64, l: f64) -> f64 {
    if v > l {
        v - l
    } else if v < -l {
        v + l
    } else {
        0.0
    }
}

/// `H = (UᵀU + λ*I)⁻¹ Uᵀ`.
pub fn ridge_map(u: &DenseMatrix, lambda_star: f64) -> DenseMatrix {
    let mut g = u.t_matmul(u).unwrap();
    g.add_diagonal(lambda_star);
    inverse(&g).matmul(&u.transpose()).unwrap()
}

/// `iterations` rounds of the alternating scheme written out directly:
/// `o = π(b)`, `b ← b + W(o − y)`, `y = o`, starting from `b = x − Wx`,
/// with `s = H(x − o)` at the end.
pub fn naive_alternation(
    x: &[f64],
    u: &DenseMatrix,
    lambda_star: f64,
    lambda: &[f64],
    iterations: usize,
) -> (Vec<f64>, Vec<f64>) {
    let h = ridge_map(u, lambda_star);
    let w = u.matmul(&h).unwrap();
    let wx = w.matvec(x).unwrap();
    let mut b: Vec<f64> = x.iter().zip(&wx).map(|(a, c)| a - c).collect();
    let mut y = vec![0.0; x.len()];
    for _ in 0..iterations {
        let o: Vec<f64> = b.iter().zip(lambda).map(|(v, l)| shrink(*v, *l)).collect();
        let d: Vec<f64> = o.iter().zip(&y).map(|(a, c)| a - c).collect();
        let wd = w.matvec(&d).unwrap();
        b.iter_mut().zip(&wd).for_each(|(v, c)| *v += c);
        y = o;
    }
    let r: Vec<f64> = x.iter().zip(&y).map(|(a, c)| a - c).collect();
    (h.matvec(&r).unwrap(), y)
}

/// Optimality violation of `(s, o)` for
/// `½‖x − Us − o‖² + (λ*/2)‖s‖² + Σ λᵢ|oᵢ|`: the largest of
/// `‖Uᵀr − λ*s‖∞`, `|rᵢ − λᵢ sign(oᵢ)|` on the support and `(|rᵢ| − λᵢ)₊` off it.
pub fn kkt_oracle(x: &[f64], s: &[f64], o: &[f64], u: &DenseMatrix, lambda_star: f64, lambda: &[f64]) -> f64 {
    let us = u.matvec(s).unwrap();
    let r: Vec<f64> = (0..x.len()).map(|i| x[i] - us[i] - o[i]).collect();
    let utr = u.t_matvec(&r).unwrap();
    let mut worst = utr
        .iter()
        .zip(s)
        .map(|(g, si)| (g - lambda_star * si).abs())
        .fold(0.0, f64::max);
    for i in 0..x.len() {
        let v = if o[i] != 0.0 {
            (r[i] - lambda[i] * o[i].signum()).abs()
        } else {
            (r[i].abs() - lambda[i]).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

/// `½‖x − Us − o‖² + (λ*/2)‖s‖² + Σ λᵢ|oᵢ|`.
pub fn cost_oracle(x: &[f64], s: &[f64], o: &[f64], u: &DenseMatrix, lambda_star: f64, lambda: &[f64]) -> f64 {
    let us = u.matvec(s).unwrap();
    let fit: f64 = (0..x.len()).map(|i| (x[i] - us[i] - o[i]).powi(2)).sum();
    let energy: f64 = s.iter().map(|v| v * v).sum();
    let l1: f64 = o.iter().zip(lambda).map(|(v, l)| l * v.abs()).sum();
    0.5 * fit + 0.5 * lambda_star * energy + l1
}

/// Central differences of `f` with respect to every entry of `params`.
pub fn central_diff(params: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..params.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let up = f(&p);
            p[i] = orig - h;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `‖a − b‖ / max(‖b‖, floor)`.
pub fn rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / norm.max(floor)
}

/// A random encoder with perturbed (trained-looking) parameters and an input
/// whose thresholding inputs stay at least `1e-3` away from `±λ` at every
/// layer. Returns `None` when the draw violates that margin.
pub fn guarded_config(seed: u64) -> Option<(rpca_core::EncoderParams, Vec<f64>, rpca_core::RegParams)> {
    let (m, q, layers) = (8, 3, 3);
    let mut r = rng(seed);
    let u = gaussian(&mut r, m, q);
    let lambda_star = r.random_range(0.1..1.0);
    let lambda: Vec<f64> = (0..m).map(|_| r.random_range(0.2..0.6)).collect();
    let p = rpca_core::RegParams::new(lambda_star, lambda, q).unwrap();
    let mut theta = rpca_core::encoder_init(&u, &p, layers).unwrap();
    let dw = gaussian(&mut r, m, m).scale(0.05);
    let dh = gaussian(&mut r, q, m).scale(0.05);
    theta.w.axpy_in_place(1.0, &dw).unwrap();
    theta.h.axpy_in_place(1.0, &dh).unwrap();
    for l in theta.lambda.iter_mut() {
        *l += r.random_range(-0.05..0.05);
    }
    let s = gaussian_vec(&mut r, q);
    let mut x = u.matvec(&s).unwrap();
    for v in x.iter_mut() {
        *v += 0.1 * r.sample::<f64, _>(StandardNormal);
    }
    for _ in 0..2 {
        let i = r.random_range(0..m);
        x[i] += if r.random::<bool>() { 3.0 } else { -3.0 };
    }
    let (_, trace) = rpca_core::forward(&theta, &x).unwrap();
    (trace.boundary_margin(&theta.lambda) >= 1e-3).then_some((theta, x, p))
}
