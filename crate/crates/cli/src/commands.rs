use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rpca_core::io::{format_pgm, write_atomic};
use rpca_core::training::{mean_encoder_cost, windowed_means};
use rpca_core::transforms::alignment_objective;
use rpca_core::{
    align_project, batch_rpca, convex_cost, convex_rpca_reference, encoder_init, forward_batch, generate, load_encoder,
    load_matrix, make_supervised_targets, online_init, projection_cost, read_pgm, run_bench, save_encoder, save_matrix,
    sgd_train, svd_factorize, warp, AlignConfig, BenchSpec, DenseMatrix, GrayImage, ImageGrid, Objective, PgmEncoding,
    RegParams, RpcaError, SolverConfig, SynthSpec, TrainConfig, TransformParams,
};

use crate::{Format, Method, RegArgs, SolverArgs, TrainMode};

pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<RpcaError> for CliError {
    fn from(e: RpcaError) -> Self {
        match e {
            RpcaError::Dimension(_) | RpcaError::InvalidParameter(_) => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

fn value_name(v: impl clap::ValueEnum) -> String {
    v.to_possible_value()
        .map(|p| p.get_name().to_owned())
        .unwrap_or_default()
}

type CliResult = Result<(), CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn input_matrix(path: &Path) -> Result<DenseMatrix, CliError> {
    load_matrix(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

fn output(prefix: &str, name: &str, ext: &str) -> PathBuf {
    PathBuf::from(format!("{prefix}.{name}.{ext}"))
}

fn write_text(path: &Path, text: &str) -> CliResult {
    write_atomic(path, text.as_bytes()).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// Ordered `key: value` lines.
#[derive(Default)]
struct Report(String);

impl Report {
    fn put(&mut self, key: &str, value: impl fmt::Display) -> &mut Self {
        let _ = writeln!(self.0, "{key}: {value}");
        self
    }

    fn emit(&self, file: Option<&Path>) -> CliResult {
        print!("{}", self.0);
        if let Some(path) = file {
            write_text(path, &self.0)?;
        }
        Ok(())
    }
}

fn reg_params(reg: RegArgs, m: usize, q: usize) -> Result<RegParams, CliError> {
    Ok(RegParams::uniform(reg.lambda_star, reg.lambda, m, q)?)
}

fn solver_config(s: SolverArgs) -> Result<SolverConfig, CliError> {
    Ok(SolverConfig::new(s.tol, s.max_iter)?)
}

fn csv_series(header: &str, values: &[f64]) -> String {
    let mut out = format!("{header}\n");
    for (i, v) in values.iter().enumerate() {
        let _ = writeln!(out, "{i},{v:?}");
    }
    out
}

pub fn synth(spec: SynthSpec, out_x: &Path, out_l: Option<&Path>, out_o: Option<&Path>) -> CliResult {
    let d = generate(&spec)?;
    save_matrix(out_x, &d.x)?;
    if let Some(p) = out_l {
        save_matrix(p, &d.l)?;
    }
    if let Some(p) = out_o {
        save_matrix(p, &d.o)?;
    }
    let outliers = d.o.as_slice().iter().filter(|v| **v != 0.0).count();
    Report::default()
        .put("rows", spec.m)
        .put("cols", spec.n)
        .put("rank", spec.rank)
        .put("outliers", outliers)
        .put("seed", spec.seed)
        .emit(None)
}

pub fn decompose(
    x_path: &Path,
    method: Method,
    rank: Option<usize>,
    reg: RegArgs,
    solver: SolverArgs,
    format: Format,
    out: &str,
) -> CliResult {
    let x = input_matrix(x_path)?;
    let (m, n) = x.shape();
    let cfg = solver_config(solver)?;
    let ext = format.ext();
    let started = Instant::now();
    let mut report = Report::default();
    report.put("method", value_name(method)).put("rows", m).put("cols", n);
    match method {
        Method::Factorized => {
            let q = rank.ok_or_else(|| usage("--rank is required for the factorized method"))?;
            let p = reg_params(reg, m, q)?;
            let d = batch_rpca(&x, &p, &cfg)?;
            let elapsed = started.elapsed().as_secs_f64();
            save_matrix(output(out, "U", ext), &d.u)?;
            save_matrix(output(out, "S", ext), &d.s)?;
            save_matrix(output(out, "O", ext), &d.o)?;
            let (spectral, frobenius) = d.stationarity_bound(p.lambda_star());
            report
                .put("rank", q)
                .put("converged", d.converged)
                .put("iterations", d.iterations)
                .put("factorized_cost", d.final_cost())
                .put("convex_cost", convex_cost(&x, &d.low_rank(), &d.o, &p)?)
                .put("kkt_residual", d.kkt_residual)
                .put("residual_spectral_norm", d.residual_spectral_norm)
                .put("residual_frobenius_norm", d.residual_frobenius_norm)
                .put("stationarity_spectral", spectral)
                .put("stationarity_frobenius", frobenius)
                .put("wall_time_s", elapsed);
        }
        Method::Convex => {
            let p = reg_params(reg, m, rank.unwrap_or(1))?;
            let d = convex_rpca_reference(&x, &p, &cfg)?;
            let elapsed = started.elapsed().as_secs_f64();
            save_matrix(output(out, "L", ext), &d.l)?;
            save_matrix(output(out, "O", ext), &d.o)?;
            report
                .put("converged", d.converged)
                .put("iterations", d.iterations)
                .put("convex_cost", d.final_cost())
                .put("wall_time_s", elapsed);
        }
    }
    report.emit(Some(&output(out, "report", "txt")))
}

#[allow(clippy::too_many_arguments)]
pub fn train(
    x_path: &Path,
    mode: TrainMode,
    layers: usize,
    rank: usize,
    reg: RegArgs,
    cfg: &TrainConfig,
    out: &Path,
    history: Option<&Path>,
) -> CliResult {
    let x = input_matrix(x_path)?;
    let p = reg_params(reg, x.rows(), rank)?;
    let (u, _) = svd_factorize(&x, rank)?;
    let theta0 = encoder_init(&u, &p, layers)?;
    let targets = match mode {
        TrainMode::Supervised => Some(make_supervised_targets(&x, &u, &p, &SolverConfig::default())?),
        _ => None,
    };
    let objective = match &targets {
        Some(t) => Objective::Supervised(t),
        None => Objective::Unsupervised,
    };
    let (theta, records) = sgd_train(&theta0, &x, objective, &p, cfg).map_err(|e| match e {
        RpcaError::Divergence { step, loss } => {
            CliError::Runtime(format!("training diverged at step {step} (loss {loss})"))
        }
        other => other.into(),
    })?;
    save_encoder(out, &theta)?;
    let mut csv = String::from("step,epoch,mean_loss\n");
    for r in &records {
        let _ = writeln!(csv, "{},{},{:?}", r.step, r.epoch, r.mean_loss);
    }
    let history = history.map(Path::to_path_buf).unwrap_or_else(|| {
        let mut s = out.as_os_str().to_owned();
        s.push(".history.csv");
        PathBuf::from(s)
    });
    write_text(&history, &csv)?;
    Report::default()
        .put("mode", value_name(mode))
        .put("layers", layers)
        .put("rank", rank)
        .put("epochs", records.len())
        .put("steps", records.last().map_or(0, |r| r.step))
        .put("final_mean_loss", records.last().map_or(f64::NAN, |r| r.mean_loss))
        .put("untrained_cost", mean_encoder_cost(&theta0, &x, &p)?)
        .put("trained_cost", mean_encoder_cost(&theta, &x, &p)?)
        .emit(None)
}

pub fn encode(encoder: &Path, x_path: &Path, reg: RegArgs, format: Format, out: &str) -> CliResult {
    let theta = load_encoder(encoder).map_err(|e| usage(format!("cannot read {}: {e}", encoder.display())))?;
    let x = input_matrix(x_path)?;
    if x.rows() != theta.dim() {
        return Err(usage(format!(
            "data has {} rows, encoder expects {}",
            x.rows(),
            theta.dim()
        )));
    }
    let p = reg_params(reg, theta.dim(), theta.code_dim())?;
    let (s, o) = forward_batch(&theta, &x)?;
    let recon = theta.u.matmul(&s)?.add(&o)?;
    let costs = (0..x.cols())
        .map(|j| projection_cost(x.column(j), s.column(j), o.column(j), &theta.u, &p))
        .collect::<Result<Vec<_>, _>>()?;
    let ext = format.ext();
    save_matrix(output(out, "S", ext), &s)?;
    save_matrix(output(out, "O", ext), &o)?;
    save_matrix(output(out, "recon", ext), &recon)?;
    write_text(&output(out, "costs", "csv"), &csv_series("column,cost", &costs))?;
    Report::default()
        .put("columns", x.cols())
        .put("layers", theta.layers)
        .put("mean_cost", costs.iter().sum::<f64>() / costs.len().max(1) as f64)
        .emit(None)
}

#[allow(clippy::too_many_arguments)]
pub fn online(
    x_path: &Path,
    rank: usize,
    reg: RegArgs,
    solver: SolverArgs,
    beta: f64,
    warmup: usize,
    (window, window_step): (usize, usize),
    format: Format,
    out: &str,
) -> CliResult {
    let x = input_matrix(x_path)?;
    let (m, n) = x.shape();
    if warmup == 0 || warmup >= n {
        return Err(usage(format!("warmup must lie in 1..{n}, got {warmup}")));
    }
    if window == 0 || window_step == 0 {
        return Err(usage("window and window step must be positive"));
    }
    let p = reg_params(reg, m, rank)?;
    let cfg = solver_config(solver)?;
    let head: Vec<usize> = (0..warmup).collect();
    let (u0, _) = svd_factorize(&x.select_columns(&head), rank)?;
    let mut state = online_init(u0, beta)?;
    let mut costs = Vec::with_capacity(n - warmup);
    for j in warmup..n {
        costs.push(state.step(x.column(j), &p, &cfg)?.final_cost);
    }
    let windows = windowed_means(&costs, window, window_step);
    let ext = format.ext();
    save_matrix(output(out, "U", ext), state.dictionary())?;
    write_text(&output(out, "costs", "csv"), &csv_series("sample,cost", &costs))?;
    write_text(
        &output(out, "windows", "csv"),
        &csv_series("window,mean_cost", &windows),
    )?;
    Report::default()
        .put("samples", costs.len())
        .put("beta", beta)
        .put("window", window)
        .put("window_step", window_step)
        .put("windows", windows.len())
        .put("overall_mean_cost", costs.iter().sum::<f64>() / costs.len() as f64)
        .put("first_window_mean_cost", windows[0])
        .put("last_window_mean_cost", windows[windows.len() - 1])
        .put("linear_system_residual", state.linear_system_residual(p.lambda_star()))
        .emit(Some(&output(out, "report", "txt")))
}

fn load_frames(dir: &Path) -> Result<(Vec<String>, ImageGrid, DenseMatrix), CliError> {
    let entries = fs::read_dir(dir).map_err(|e| usage(format!("cannot read {}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(usage(format!("no .pgm frames in {}", dir.display())));
    }
    let mut names = Vec::with_capacity(paths.len());
    let mut columns = Vec::with_capacity(paths.len());
    let mut grid = None;
    for path in &paths {
        let img = read_pgm(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        match grid {
            None => grid = Some(img.grid),
            Some(g) if g != img.grid => {
                return Err(usage(format!(
                    "{} has a different size from the first frame",
                    path.display()
                )))
            }
            _ => {}
        }
        names.push(
            path.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
        );
        columns.push(img.pixels);
    }
    let grid = grid.expect("at least one frame");
    Ok((names, grid, DenseMatrix::from_columns(&columns)?))
}

pub fn align(
    frames_dir: &Path,
    encoder: &Path,
    reg: RegArgs,
    acfg: &AlignConfig,
    train_epochs: usize,
    tcfg: &TrainConfig,
    out: &Path,
) -> CliResult {
    let mut theta = load_encoder(encoder).map_err(|e| usage(format!("cannot read {}: {e}", encoder.display())))?;
    let (names, grid, frames) = load_frames(frames_dir)?;
    if grid.pixels() != theta.dim() {
        return Err(usage(format!(
            "frames have {} pixels, encoder expects {}",
            grid.pixels(),
            theta.dim()
        )));
    }
    let p = reg_params(reg, theta.dim(), theta.code_dim())?;
    let n = frames.cols();
    let mut alphas = vec![TransformParams::default(); n];

    let align_all = |theta: &rpca_core::EncoderParams, alphas: &mut Vec<TransformParams>| {
        (0..n)
            .map(|j| {
                let a = align_project(theta, frames.column(j), grid, &p, alphas[j], acfg)?;
                alphas[j] = a.alpha;
                Ok(a)
            })
            .collect::<Result<Vec<_>, RpcaError>>()
    };
    for epoch in 0..train_epochs {
        align_all(&theta, &mut alphas)?;
        let warped: Vec<Vec<f64>> = (0..n)
            .map(|j| warp(frames.column(j), grid, alphas[j]))
            .collect::<Result<_, _>>()?;
        let cfg = TrainConfig {
            seed: tcfg.seed.wrapping_add(epoch as u64),
            ..*tcfg
        };
        theta = sgd_train(
            &theta,
            &DenseMatrix::from_columns(&warped)?,
            Objective::Unsupervised,
            &p,
            &cfg,
        )?
        .0;
    }
    let results = align_all(&theta, &mut alphas)?;

    fs::create_dir_all(out).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", out.display())))?;
    let mut csv = String::from("frame,dx,dy,cost_unaligned,cost_aligned\n");
    let (mut sum_dx, mut sum_dy, mut sum_before, mut sum_after, mut improved) = (0.0, 0.0, 0.0, 0.0, 0);
    for (j, a) in results.iter().enumerate() {
        let (unaligned, _) = alignment_objective(&theta, frames.column(j), grid, &p, TransformParams::default())?;
        let _ = writeln!(
            csv,
            "{},{:?},{:?},{:?},{:?}",
            names[j], a.alpha.dx, a.alpha.dy, unaligned, a.cost
        );
        sum_dx += a.alpha.dx.abs();
        sum_dy += a.alpha.dy.abs();
        sum_before += unaligned;
        sum_after += a.cost;
        improved += usize::from(a.cost < unaligned);
        let aligned = GrayImage {
            grid,
            pixels: warp(frames.column(j), grid, a.alpha)?,
        };
        let outliers = GrayImage {
            grid,
            pixels: a.projection.o.iter().map(|v| v.abs()).collect(),
        };
        let aligned_path = out.join(format!("{}_aligned.pgm", names[j]));
        write_atomic(&aligned_path, &format_pgm(&aligned, 255, PgmEncoding::Binary)?)?;
        let outlier_path = out.join(format!("{}_outliers.pgm", names[j]));
        write_atomic(&outlier_path, &format_pgm(&outliers, 255, PgmEncoding::Binary)?)?;
    }
    write_text(&out.join("alignment.csv"), &csv)?;
    if train_epochs > 0 {
        save_encoder(out.join("encoder.rpce"), &theta)?;
    }
    let nf = n as f64;
    Report::default()
        .put("frames", n)
        .put("width", grid.width)
        .put("height", grid.height)
        .put("train_epochs", train_epochs)
        .put("mean_abs_dx", sum_dx / nf)
        .put("mean_abs_dy", sum_dy / nf)
        .put("mean_cost_unaligned", sum_before / nf)
        .put("mean_cost_aligned", sum_after / nf)
        .put("improved_frames", improved)
        .emit(None)
}

pub fn bench(spec: &BenchSpec) -> CliResult {
    let r = run_bench(spec)?;
    print!("{}", r.to_report());
    Ok(())
}
