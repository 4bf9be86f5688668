use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rpca_core::io::{load_encoder, load_matrix, save_encoder, save_matrix, write_pgm, GrayImage, PgmEncoding};
use rpca_core::{
    blob_frames, encoder_init, generate, robust_project, svd, svd_factorize, warp, DenseMatrix, ImageGrid, RegParams,
    SolverConfig, SynthSpec, TransformParams,
};
use tempfile::TempDir;

fn rpca(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rpca"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> HashMap<String, String> {
    let out = rpca(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    parse_report(&String::from_utf8(out.stdout).unwrap())
}

fn parse_report(text: &str) -> HashMap<String, String> {
    text.lines()
        .filter_map(|l| l.split_once(": "))
        .map(|(k, v)| (k.to_owned(), v.to_owned()))
        .collect()
}

fn num(r: &HashMap<String, String>, key: &str) -> f64 {
    r.get(key).unwrap_or_else(|| panic!("missing {key}")).parse().unwrap()
}

fn code(args: &[&str], cwd: &Path) -> i32 {
    rpca(args, cwd).status.code().unwrap()
}

fn csv_column(path: &Path, col: usize) -> Vec<f64> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(col).unwrap().parse().unwrap())
        .collect()
}

fn acceptance_synth(dir: &Path) {
    ok(
        &[
            "synth",
            "--m",
            "50",
            "--n",
            "100",
            "--rank",
            "3",
            "--outlier-fraction",
            "0.05",
            "--outlier-magnitude",
            "10",
            "--noise-sigma",
            "0.01",
            "--seed",
            "7",
            "--out-x",
            "x.rpcm",
        ],
        dir,
    );
}

#[test]
fn synth_is_deterministic_and_exactly_low_rank_when_clean() {
    let d = TempDir::new().unwrap();
    for name in ["a.rpcm", "b.rpcm"] {
        ok(
            &[
                "synth", "--m", "20", "--n", "30", "--rank", "2", "--seed", "3", "--out-x", name,
            ],
            d.path(),
        );
    }
    assert_eq!(
        std::fs::read(d.path().join("a.rpcm")).unwrap(),
        std::fs::read(d.path().join("b.rpcm")).unwrap()
    );
    ok(
        &[
            "synth",
            "--m",
            "20",
            "--n",
            "30",
            "--rank",
            "2",
            "--outlier-fraction",
            "0",
            "--noise-sigma",
            "0",
            "--out-x",
            "c.csv",
            "--out-o",
            "o.csv",
        ],
        d.path(),
    );
    let x = load_matrix(d.path().join("c.csv")).unwrap();
    let f = svd(&x);
    assert_eq!(f.rank(1e-10 * f.sigma[0]), 2);
    assert_eq!(load_matrix(d.path().join("o.csv")).unwrap().max_abs(), 0.0);
}

#[test]
fn synth_rejects_bad_rank() {
    let d = TempDir::new().unwrap();
    assert_eq!(
        code(
            &["synth", "--m", "5", "--n", "5", "--rank", "6", "--out-x", "x.rpcm"],
            d.path()
        ),
        2
    );
}

#[test]
fn decompose_zero_matrix_gives_zero_outputs() {
    let d = TempDir::new().unwrap();
    save_matrix(d.path().join("z.rpcm"), &DenseMatrix::zeros(6, 5)).unwrap();
    for method in ["factorized", "convex"] {
        let r = ok(
            &[
                "decompose",
                "z.rpcm",
                "--method",
                method,
                "--rank",
                "2",
                "--out",
                method,
            ],
            d.path(),
        );
        assert_eq!(num(&r, "convex_cost"), 0.0);
        let o = load_matrix(d.path().join(format!("{method}.O.rpcm"))).unwrap();
        assert_eq!(o.max_abs(), 0.0);
        assert!(d.path().join(format!("{method}.report.txt")).exists());
    }
    let s = load_matrix(d.path().join("factorized.S.rpcm")).unwrap();
    assert_eq!(s.max_abs(), 0.0);
    assert_eq!(load_matrix(d.path().join("convex.L.rpcm")).unwrap().max_abs(), 0.0);
}

#[test]
fn decompose_usage_errors() {
    let d = TempDir::new().unwrap();
    assert_eq!(
        code(&["decompose", "missing.rpcm", "--rank", "2", "--out", "o"], d.path()),
        2
    );
    save_matrix(d.path().join("z.rpcm"), &DenseMatrix::zeros(4, 4)).unwrap();
    assert_eq!(code(&["decompose", "z.rpcm", "--out", "o"], d.path()), 2);
    assert_eq!(
        code(
            &[
                "decompose",
                "z.rpcm",
                "--rank",
                "2",
                "--lambda-star",
                "-1",
                "--out",
                "o"
            ],
            d.path()
        ),
        2
    );
    assert_eq!(
        code(
            &["decompose", "z.rpcm", "--rank", "2", "--nope", "--out", "o"],
            d.path()
        ),
        2
    );
}

#[test]
fn decompose_methods_agree_on_acceptance_instance() {
    let d = TempDir::new().unwrap();
    acceptance_synth(d.path());
    let reg = ["--lambda-star", "3", "--lambda", "0.3"];
    let mut args = vec!["decompose", "x.rpcm", "--rank", "3", "--out", "f"];
    args.extend(reg);
    let f = ok(&args, d.path());
    let mut args = vec!["decompose", "x.rpcm", "--method", "convex", "--out", "c"];
    args.extend(reg);
    let c = ok(&args, d.path());
    let (a, b) = (num(&f, "convex_cost"), num(&c, "convex_cost"));
    assert!((a - b).abs() <= 0.01 * b, "{a} vs {b}");
    assert_eq!(f["converged"], "true");
}

fn small_data(dir: &Path) {
    let x = generate(&SynthSpec {
        m: 16,
        n: 40,
        rank: 3,
        outlier_fraction: 0.05,
        outlier_magnitude: 5.0,
        noise_sigma: 0.01,
        seed: 4,
    })
    .unwrap()
    .x;
    save_matrix(dir.join("x.rpcm"), &x).unwrap();
}

#[test]
fn train_with_zero_step_returns_initialization() {
    let d = TempDir::new().unwrap();
    small_data(d.path());
    ok(
        &[
            "train", "x.rpcm", "--rank", "3", "--layers", "4", "--epochs", "1", "--step0", "0", "--lambda", "0.3",
            "--out", "e.rpce",
        ],
        d.path(),
    );
    let x = load_matrix(d.path().join("x.rpcm")).unwrap();
    let p = RegParams::uniform(0.1, 0.3, 16, 3).unwrap();
    let (u, _) = svd_factorize(&x, 3).unwrap();
    let expect = encoder_init(&u, &p, 4).unwrap();
    assert_eq!(load_encoder(d.path().join("e.rpce")).unwrap(), expect);
    let history = std::fs::read_to_string(d.path().join("e.rpce.history.csv")).unwrap();
    assert!(history.starts_with("step,epoch,mean_loss\n"));
    assert_eq!(history.lines().count(), 2);
}

#[test]
fn train_is_deterministic_in_every_mode() {
    let d = TempDir::new().unwrap();
    small_data(d.path());
    for mode in ["supervised", "unsupervised", "unsupervised-dict"] {
        for name in ["a.rpce", "b.rpce"] {
            let r = ok(
                &[
                    "train", "x.rpcm", "--mode", mode, "--rank", "3", "--epochs", "3", "--step0", "1e-3", "--lambda",
                    "0.3", "--seed", "9", "--out", name,
                ],
                d.path(),
            );
            assert_eq!(r["mode"], mode);
        }
        assert_eq!(
            std::fs::read(d.path().join("a.rpce")).unwrap(),
            std::fs::read(d.path().join("b.rpce")).unwrap()
        );
    }
}

#[test]
fn train_divergence_exits_nonzero() {
    let d = TempDir::new().unwrap();
    small_data(d.path());
    let out = rpca(
        &[
            "train",
            "x.rpcm",
            "--rank",
            "3",
            "--epochs",
            "50",
            "--step0",
            "1e6",
            "--constant-step",
            "--lambda",
            "0.3",
            "--out",
            "e.rpce",
        ],
        d.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("diverged at step"));
}

#[test]
fn encode_outputs_and_deep_truncation() {
    let d = TempDir::new().unwrap();
    small_data(d.path());
    let x = load_matrix(d.path().join("x.rpcm")).unwrap();
    let p = RegParams::uniform(0.1, 0.3, 16, 3).unwrap();
    let (u, _) = svd_factorize(&x, 3).unwrap();
    save_encoder(d.path().join("deep.rpce"), &encoder_init(&u, &p, 500).unwrap()).unwrap();

    let r = ok(
        &["encode", "deep.rpce", "x.rpcm", "--lambda", "0.3", "--out", "e"],
        d.path(),
    );
    assert_eq!(num(&r, "columns"), 40.0);
    assert_eq!(load_matrix(d.path().join("e.S.rpcm")).unwrap().shape(), (3, 40));
    assert_eq!(load_matrix(d.path().join("e.O.rpcm")).unwrap().shape(), (16, 40));
    assert_eq!(load_matrix(d.path().join("e.recon.rpcm")).unwrap().shape(), (16, 40));
    let costs = csv_column(&d.path().join("e.costs.csv"), 1);
    for (j, c) in costs.iter().enumerate() {
        let exact = robust_project(x.column(j), &u, &p, &SolverConfig::default()).unwrap();
        assert!(
            (c - exact.final_cost).abs() <= 1e-6,
            "column {j}: {c} vs {}",
            exact.final_cost
        );
    }

    save_matrix(d.path().join("zero.rpcm"), &DenseMatrix::zeros(16, 3)).unwrap();
    ok(&["encode", "deep.rpce", "zero.rpcm", "--out", "z"], d.path());
    assert_eq!(load_matrix(d.path().join("z.S.rpcm")).unwrap().max_abs(), 0.0);
    assert_eq!(load_matrix(d.path().join("z.O.rpcm")).unwrap().max_abs(), 0.0);

    save_matrix(d.path().join("bad.rpcm"), &DenseMatrix::zeros(15, 3)).unwrap();
    assert_eq!(code(&["encode", "deep.rpce", "bad.rpcm", "--out", "b"], d.path()), 2);
}

fn stream(seeds: &[(u64, usize)]) -> DenseMatrix {
    let blocks: Vec<DenseMatrix> = seeds
        .iter()
        .map(|&(seed, n)| {
            generate(&SynthSpec {
                m: 30,
                n,
                rank: 3,
                outlier_fraction: 0.05,
                outlier_magnitude: 5.0,
                noise_sigma: 0.01,
                seed,
            })
            .unwrap()
            .x
        })
        .collect();
    let cols: Vec<Vec<f64>> = blocks
        .iter()
        .flat_map(|b| (0..b.cols()).map(move |j| b.column(j).to_vec()))
        .collect();
    DenseMatrix::from_columns(&cols).unwrap()
}

#[test]
fn online_usage_and_single_step() {
    let d = TempDir::new().unwrap();
    save_matrix(d.path().join("s.rpcm"), &stream(&[(1, 20)])).unwrap();
    assert_eq!(
        code(
            &["online", "s.rpcm", "--rank", "3", "--warmup", "20", "--out", "o"],
            d.path()
        ),
        2
    );
    let r = ok(
        &["online", "s.rpcm", "--rank", "3", "--warmup", "19", "--out", "o"],
        d.path(),
    );
    assert_eq!(num(&r, "samples"), 1.0);
    assert_eq!(csv_column(&d.path().join("o.costs.csv"), 1).len(), 1);
    assert_eq!(load_matrix(d.path().join("o.U.rpcm")).unwrap().shape(), (30, 3));
}

#[test]
fn online_stationary_stream_stabilizes() {
    let d = TempDir::new().unwrap();
    save_matrix(d.path().join("s.rpcm"), &stream(&[(2, 600)])).unwrap();
    let r = ok(
        &[
            "online", "s.rpcm", "--rank", "3", "--lambda", "0.3", "--warmup", "50", "--out", "o",
        ],
        d.path(),
    );
    let (last, overall) = (num(&r, "last_window_mean_cost"), num(&r, "overall_mean_cost"));
    assert!((last - overall).abs() <= 0.1 * overall, "{last} vs {overall}");
    assert!(num(&r, "linear_system_residual") <= 1e-10);
}

#[test]
fn online_forgetting_tracks_a_shifted_stream() {
    let d = TempDir::new().unwrap();
    save_matrix(d.path().join("s.rpcm"), &stream(&[(3, 300), (4, 500)])).unwrap();
    let mut last = Vec::new();
    for beta in ["0.9", "1.0"] {
        let r = ok(
            &[
                "online", "s.rpcm", "--rank", "3", "--lambda", "0.3", "--warmup", "100", "--beta", beta, "--out", beta,
            ],
            d.path(),
        );
        last.push(num(&r, "last_window_mean_cost"));
    }
    assert!(last[0] < last[1], "{last:?}");
}

/// Blob frames mapped into [0.05, 0.95] so PGM clamping never triggers.
fn frames(n: usize, seed: u64) -> DenseMatrix {
    let x = blob_frames(16, 16, n, 4, seed).unwrap();
    let (lo, hi) = x
        .as_slice()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    DenseMatrix::from_fn(x.rows(), x.cols(), |i, j| 0.05 + 0.9 * (x.get(i, j) - lo) / (hi - lo))
}

fn align_setup(dir: &Path) -> (ImageGrid, DenseMatrix) {
    let grid = ImageGrid::new(16, 16).unwrap();
    let data = frames(240, 5);
    let train = data.select_columns(&(0..200).collect::<Vec<_>>());
    let test = data.select_columns(&(200..240).collect::<Vec<_>>());
    let p = RegParams::uniform(0.01, 0.05, 256, 5).unwrap();
    let (u, _) = svd_factorize(&train, 5).unwrap();
    save_encoder(dir.join("enc.rpce"), &encoder_init(&u, &p, 5).unwrap()).unwrap();
    (grid, test)
}

fn write_frames(dir: &Path, grid: ImageGrid, x: &DenseMatrix, shifts: &[(f64, f64)]) -> PathBuf {
    std::fs::create_dir_all(dir).unwrap();
    for j in 0..x.cols() {
        let (sx, sy) = shifts[j];
        let pixels = warp(x.column(j), grid, TransformParams::new(sx, sy)).unwrap();
        let img = GrayImage { grid, pixels };
        write_pgm(dir.join(format!("f{j:03}.pgm")), &img, 65535, PgmEncoding::Binary).unwrap();
    }
    dir.to_path_buf()
}

#[test]
fn align_recovers_known_shifts_and_leaves_aligned_frames() {
    let d = TempDir::new().unwrap();
    let (grid, test) = align_setup(d.path());
    let reg = ["--lambda-star", "0.01", "--lambda", "0.05"];

    write_frames(&d.path().join("aligned"), grid, &test, &vec![(0.0, 0.0); test.cols()]);
    let mut args = vec!["align", "aligned", "--encoder", "enc.rpce", "--out", "out_a"];
    args.extend(reg);
    let r = ok(&args, d.path());
    assert!(num(&r, "mean_abs_dx") <= 0.3 && num(&r, "mean_abs_dy") <= 0.3, "{r:?}");

    let shifts: Vec<(f64, f64)> = (0..test.cols())
        .map(|j| {
            let t = j as f64;
            (2.0 * (0.7 * t).sin(), 2.0 * (1.3 * t + 0.4).cos())
        })
        .collect();
    write_frames(&d.path().join("shifted"), grid, &test, &shifts);
    let mut args = vec!["align", "shifted", "--encoder", "enc.rpce", "--out", "out_s"];
    args.extend(reg);
    ok(&args, d.path());
    let csv = d.path().join("out_s/alignment.csv");
    let (dx, dy) = (csv_column(&csv, 1), csv_column(&csv, 2));
    let err: f64 = shifts
        .iter()
        .zip(dx.iter().zip(&dy))
        .map(|((sx, sy), (ax, ay))| 0.5 * ((ax + sx).abs() + (ay + sy).abs()))
        .sum::<f64>()
        / shifts.len() as f64;
    assert!(err <= 0.2, "mean abs error {err}");
    assert!(d.path().join("out_s/f000_aligned.pgm").exists());
    assert!(d.path().join("out_s/f000_outliers.pgm").exists());
}

#[test]
fn align_usage_errors() {
    let d = TempDir::new().unwrap();
    align_setup(d.path());
    std::fs::create_dir(d.path().join("empty")).unwrap();
    assert_eq!(
        code(&["align", "empty", "--encoder", "enc.rpce", "--out", "o"], d.path()),
        2
    );
    let small = ImageGrid::new(8, 8).unwrap();
    let x = DenseMatrix::from_fn(64, 2, |i, _| i as f64 / 64.0);
    write_frames(&d.path().join("small"), small, &x, &[(0.0, 0.0); 2]);
    assert_eq!(
        code(&["align", "small", "--encoder", "enc.rpce", "--out", "o"], d.path()),
        2
    );
}

#[test]
fn align_with_training_epochs_writes_encoder() {
    let d = TempDir::new().unwrap();
    let (grid, test) = align_setup(d.path());
    let x = test.select_columns(&(0..8).collect::<Vec<_>>());
    write_frames(&d.path().join("fr"), grid, &x, &[(0.5, -0.5); 8]);
    let r = ok(
        &[
            "align",
            "fr",
            "--encoder",
            "enc.rpce",
            "--lambda-star",
            "0.01",
            "--lambda",
            "0.05",
            "--train-epochs",
            "1",
            "--out",
            "o",
        ],
        d.path(),
    );
    assert_eq!(num(&r, "frames"), 8.0);
    assert!(num(&r, "mean_cost_aligned") <= num(&r, "mean_cost_unaligned"));
    assert!(load_encoder(d.path().join("o/encoder.rpce")).is_ok());
}

#[test]
fn bench_reports_and_rejects_zero_trials() {
    let d = TempDir::new().unwrap();
    assert_eq!(code(&["bench", "--trials", "0"], d.path()), 2);
    let mut per_layer = Vec::new();
    for layers in ["5", "20"] {
        let r = ok(
            &[
                "bench", "--m", "400", "--q", "10", "--layers", layers, "--trials", "15", "--lambda", "0.3",
            ],
            d.path(),
        );
        for key in [
            "forward_us_per_column",
            "exact_us_per_column",
            "convex_us_per_column",
            "speedup_vs_convex",
        ] {
            assert!(num(&r, key) > 0.0, "{key}");
        }
        per_layer.push(num(&r, "forward_us_per_layer"));
    }
    let ratio = per_layer[0] / per_layer[1];
    assert!((0.5..=2.0).contains(&ratio), "{per_layer:?}");
}
