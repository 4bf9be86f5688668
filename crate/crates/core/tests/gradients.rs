mod common;

use common::{central_diff, gaussian_vec, guarded_config, rel_err, rng};
use rpca_core::training::loss_unsupervised;
use rpca_core::*;

const H: f64 = 1e-6;
const FLOOR: f64 = 1e-8;
const TOL: f64 = 1e-5;

fn configs(n: usize) -> Vec<(EncoderParams, Vec<f64>, RegParams)> {
    (100..).filter_map(guarded_config).take(n).collect()
}

fn perturbed(theta: &EncoderParams, block: &str, v: &[f64]) -> EncoderParams {
    let mut th = theta.clone();
    match block {
        "w" => th.w.as_mut_slice().copy_from_slice(v),
        "h" => th.h.as_mut_slice().copy_from_slice(v),
        "lambda" => th.lambda.copy_from_slice(v),
        "u" => th.u.as_mut_slice().copy_from_slice(v),
        _ => unreachable!(),
    }
    th
}

fn block<'a>(theta: &'a EncoderParams, name: &str) -> &'a [f64] {
    match name {
        "w" => theta.w.as_slice(),
        "h" => theta.h.as_slice(),
        "lambda" => &theta.lambda,
        "u" => theta.u.as_slice(),
        _ => unreachable!(),
    }
}

#[test]
fn supervised_gradients_match_finite_differences() {
    for (k, (theta, x, _)) in configs(10).into_iter().enumerate() {
        let mut r = rng(k as u64);
        let ts = gaussian_vec(&mut r, theta.code_dim());
        let to = gaussian_vec(&mut r, theta.dim());
        let (_, g) = loss_supervised(&theta, &x, &ts, &to).unwrap();
        for (name, analytic) in [("w", g.w.as_slice()), ("h", g.h.as_slice()), ("lambda", &g.lambda[..])] {
            let fd = central_diff(block(&theta, name), H, |v| {
                loss_supervised(&perturbed(&theta, name, v), &x, &ts, &to).unwrap().0
            });
            let e = rel_err(analytic, &fd, FLOOR);
            assert!(e < TOL, "config {k} block {name}: {e:e}");
        }
        let fd = central_diff(&x, H, |v| loss_supervised(&theta, v, &ts, &to).unwrap().0);
        assert!(rel_err(&g.x, &fd, FLOOR) < TOL, "config {k} input");
    }
}

#[test]
fn unsupervised_gradients_match_finite_differences() {
    for (k, (theta, x, p)) in configs(10).into_iter().enumerate() {
        let l = loss_unsupervised(&theta, &x, &p).unwrap();
        let g = &l.grads;
        for (name, analytic) in [
            ("w", g.w.as_slice()),
            ("h", g.h.as_slice()),
            ("lambda", &g.lambda[..]),
            ("u", l.grad_u.as_slice()),
        ] {
            let fd = central_diff(block(&theta, name), H, |v| {
                loss_unsupervised(&perturbed(&theta, name, v), &x, &p).unwrap().value
            });
            let e = rel_err(analytic, &fd, FLOOR);
            assert!(e < TOL, "config {k} block {name}: {e:e}");
        }
        let fd = central_diff(&x, H, |v| loss_unsupervised(&theta, v, &p).unwrap().value);
        assert!(rel_err(&g.x, &fd, FLOOR) < TOL, "config {k} input");
    }
}

#[test]
fn margin_guard_accepts_enough_draws() {
    let accepted = (0..200).filter(|&s| guarded_config(s).is_some()).count();
    assert!(accepted > 20, "only {accepted} of 200 draws passed the margin guard");
}
