//! Wall-clock comparison of the encoder forward pass against the exact
//! projection and the convex reference, all run one column at a time.

use std::time::Instant;

use rand::Rng;

use crate::encoder::{encode, encoder_init};
use crate::error::{Result, RpcaError};
use crate::linalg::DenseMatrix;
use crate::model::RegParams;
use crate::solvers::{convex_rpca_reference, robust_project, SolverConfig};
use crate::synth::{gaussian_matrix, gaussian_vector, rng_from_seed};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchSpec {
    pub m: usize,
    pub q: usize,
    pub layers: usize,
    pub trials: usize,
    pub lambda_star: f64,
    pub lambda: f64,
    pub seed: u64,
}

/// Medians over the trial columns, in microseconds.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub spec: BenchSpec,
    pub forward_us_per_layer: f64,
    pub forward_us_per_column: f64,
    pub exact_us_per_column: f64,
    pub convex_us_per_column: f64,
    pub exact_iterations: f64,
    pub convex_iterations: f64,
    pub speedup_vs_exact: f64,
    pub speedup_vs_convex: f64,
}

impl BenchReport {
    /// `key: value` lines.
    pub fn to_report(&self) -> String {
        let s = &self.spec;
        format!(
            "m: {}\nq: {}\nlayers: {}\ntrials: {}\nforward_us_per_layer: {:.3}\nforward_us_per_column: {:.3}\n\
             exact_us_per_column: {:.3}\nexact_median_iterations: {}\nconvex_us_per_column: {:.3}\n\
             convex_median_iterations: {}\nspeedup_vs_exact: {:.4}\nspeedup_vs_convex: {:.4}\n",
            s.m,
            s.q,
            s.layers,
            s.trials,
            self.forward_us_per_layer,
            self.forward_us_per_column,
            self.exact_us_per_column,
            self.exact_iterations,
            self.convex_us_per_column,
            self.convex_iterations,
            self.speedup_vs_exact,
            self.speedup_vs_convex
        )
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn micros<T>(f: impl FnOnce() -> Result<T>) -> Result<(f64, T)> {
    let t = Instant::now();
    let out = f()?;
    Ok((t.elapsed().as_secs_f64() * 1e6, out))
}

/// Test columns `U s + o` with a random dictionary, Gaussian codes and 5%
/// outliers of magnitude 5.
pub fn bench_columns(m: usize, q: usize, n: usize, seed: u64) -> (DenseMatrix, DenseMatrix) {
    let mut rng = rng_from_seed(seed);
    let u = gaussian_matrix(&mut rng, m, q).scale(1.0 / (q as f64).sqrt());
    let mut x = DenseMatrix::zeros(m, n);
    for j in 0..n {
        let s = gaussian_vector(&mut rng, q);
        let col = u.matvec(&s).expect("q-vector");
        let dst = x.column_mut(j);
        dst.copy_from_slice(&col);
        for v in dst.iter_mut() {
            if rng.random::<f64>() < 0.05 {
                *v += if rng.random::<bool>() { 5.0 } else { -5.0 };
            }
        }
    }
    (u, x)
}

/// Times the untrained `layers`-deep encoder, [`robust_project`] to 1e-6 and
/// [`convex_rpca_reference`] on single columns to 1e-6. One warm-up column
/// precedes the timed trials.
pub fn run_bench(spec: &BenchSpec) -> Result<BenchReport> {
    if spec.m == 0 || spec.q == 0 || spec.q > spec.m || spec.layers == 0 || spec.trials == 0 {
        return Err(RpcaError::InvalidParameter(
            "bench needs m >= q >= 1, layers >= 1 and trials >= 1".into(),
        ));
    }
    let p = RegParams::uniform(spec.lambda_star, spec.lambda, spec.m, spec.q)?;
    let (u, x) = bench_columns(spec.m, spec.q, spec.trials + 1, spec.seed);
    let theta = encoder_init(&u, &p, spec.layers)?;
    let cfg = SolverConfig::new(1e-6, 100_000)?;

    let (mut fwd, mut exact, mut convex, mut exact_it, mut convex_it) = (vec![], vec![], vec![], vec![], vec![]);
    for j in 0..=spec.trials {
        let col = x.column(j);
        let single = DenseMatrix::new(spec.m, 1, col.to_vec())?;
        let (tf, _) = micros(|| encode(&theta, col))?;
        let (te, pe) = micros(|| robust_project(col, &u, &p, &cfg))?;
        let (tc, pc) = micros(|| convex_rpca_reference(&single, &p, &cfg))?;
        if j == 0 {
            continue;
        }
        fwd.push(tf);
        exact.push(te);
        convex.push(tc);
        exact_it.push(pe.iterations as f64);
        convex_it.push(pc.iterations as f64);
    }
    let f = median(fwd);
    let e = median(exact);
    let c = median(convex);
    Ok(BenchReport {
        spec: *spec,
        forward_us_per_layer: f / spec.layers as f64,
        forward_us_per_column: f,
        exact_us_per_column: e,
        convex_us_per_column: c,
        exact_iterations: median(exact_it),
        convex_iterations: median(convex_it),
        speedup_vs_exact: e / f,
        speedup_vs_convex: c / f,
    })
}
