//! `rpca`: robust PCA from the command line.
//!
//! Exit status is 0 on success, 2 on usage errors (bad flags, unreadable or
//! mismatched inputs) and 1 on runtime failures.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "rpca", version, about = "Robust PCA: exact, convex and learned encoders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Regularization weights shared by most commands.
#[derive(Args, Clone, Copy, Debug)]
pub struct RegArgs {
    /// Weight of the nuclear-norm / code-energy term.
    #[arg(long, default_value_t = 0.1)]
    pub lambda_star: f64,
    /// Outlier threshold, the same for every coordinate.
    #[arg(long, default_value_t = 1e-2)]
    pub lambda: f64,
}

#[derive(Args, Clone, Copy, Debug)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long, default_value_t = 5000)]
    pub max_iter: usize,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Rpcm,
    Csv,
}

impl Format {
    pub fn ext(self) -> &'static str {
        match self {
            Format::Rpcm => "rpcm",
            Format::Csv => "csv",
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Factorized,
    Convex,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum TrainMode {
    Supervised,
    Unsupervised,
    UnsupervisedDict,
}

#[derive(Subcommand)]
enum Command {
    /// Generate X = L + N + O with its ground truth.
    Synth {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        rank: usize,
        #[arg(long, default_value_t = 0.05)]
        outlier_fraction: f64,
        #[arg(long, default_value_t = 10.0)]
        outlier_magnitude: f64,
        #[arg(long, default_value_t = 0.01)]
        noise_sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_x: PathBuf,
        #[arg(long)]
        out_l: Option<PathBuf>,
        #[arg(long)]
        out_o: Option<PathBuf>,
    },
    /// Batch decomposition of a data matrix.
    Decompose {
        x: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::Factorized)]
        method: Method,
        /// Dictionary size (factorized method).
        #[arg(long)]
        rank: Option<usize>,
        #[command(flatten)]
        reg: RegArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, value_enum, default_value_t = Format::Rpcm)]
        format: Format,
        /// Output prefix; files are written as `<out>.<name>.<ext>`.
        #[arg(long)]
        out: String,
    },
    /// Train an encoder on the columns of a data matrix.
    Train {
        x: PathBuf,
        #[arg(long, value_enum, default_value_t = TrainMode::Unsupervised)]
        mode: TrainMode,
        #[arg(long, default_value_t = 5)]
        layers: usize,
        #[arg(long)]
        rank: usize,
        #[command(flatten)]
        reg: RegArgs,
        #[arg(long, default_value_t = 10)]
        epochs: usize,
        #[arg(long, default_value_t = 1e-3)]
        step0: f64,
        #[arg(long, default_value_t = 10)]
        minibatch: usize,
        /// Steps until the step size halves (default: a quarter of all steps).
        #[arg(long)]
        half_life: Option<f64>,
        /// Keep the step size fixed at `step0`.
        #[arg(long)]
        constant_step: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        /// Steps between dictionary refits in `unsupervised-dict` mode.
        #[arg(long, default_value_t = 1)]
        dict_every: usize,
        /// Encoder file (RPCE).
        #[arg(long)]
        out: PathBuf,
        /// Loss-history CSV (default: `<out>.history.csv`).
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Encode the columns of a data matrix with a trained encoder.
    Encode {
        encoder: PathBuf,
        x: PathBuf,
        #[command(flatten)]
        reg: RegArgs,
        #[arg(long, value_enum, default_value_t = Format::Rpcm)]
        format: Format,
        #[arg(long)]
        out: String,
    },
    /// Online decomposition with closed-form dictionary updates.
    Online {
        x: PathBuf,
        #[arg(long)]
        rank: usize,
        #[command(flatten)]
        reg: RegArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        /// Columns used for the initial dictionary.
        #[arg(long)]
        warmup: usize,
        #[arg(long, default_value_t = 100)]
        window: usize,
        #[arg(long, default_value_t = 10)]
        window_step: usize,
        #[arg(long, value_enum, default_value_t = Format::Rpcm)]
        format: Format,
        #[arg(long)]
        out: String,
    },
    /// Align PGM frames by minimizing the encoder objective over shifts.
    Align {
        frames: PathBuf,
        #[arg(long)]
        encoder: PathBuf,
        #[command(flatten)]
        reg: RegArgs,
        #[arg(long, default_value_t = 8.0)]
        max_shift: f64,
        #[arg(long, default_value_t = 100)]
        max_iter: usize,
        /// Alternate alignment passes with one training epoch on the aligned
        /// frames this many times before the final pass.
        #[arg(long, default_value_t = 0)]
        train_epochs: usize,
        #[arg(long, default_value_t = 1e-4)]
        step0: f64,
        #[arg(long, default_value_t = 10)]
        minibatch: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Time the encoder against the exact and convex solvers.
    Bench {
        #[arg(long, default_value_t = 3168)]
        m: usize,
        #[arg(long, default_value_t = 50)]
        q: usize,
        #[arg(long, default_value_t = 5)]
        layers: usize,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[command(flatten)]
        reg: RegArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth {
            m,
            n,
            rank,
            outlier_fraction,
            outlier_magnitude,
            noise_sigma,
            seed,
            out_x,
            out_l,
            out_o,
        } => commands::synth(
            rpca_core::SynthSpec {
                m,
                n,
                rank,
                outlier_fraction,
                outlier_magnitude,
                noise_sigma,
                seed,
            },
            &out_x,
            out_l.as_deref(),
            out_o.as_deref(),
        ),
        Command::Decompose {
            x,
            method,
            rank,
            reg,
            solver,
            format,
            out,
        } => commands::decompose(&x, method, rank, reg, solver, format, &out),
        Command::Train {
            x,
            mode,
            layers,
            rank,
            reg,
            epochs,
            step0,
            minibatch,
            half_life,
            constant_step,
            seed,
            beta,
            dict_every,
            out,
            history,
        } => {
            let decay = if constant_step {
                rpca_core::DecaySchedule::Constant
            } else {
                rpca_core::DecaySchedule::InverseTime { half_life }
            };
            let cfg = rpca_core::TrainConfig {
                step0,
                decay,
                minibatch,
                epochs,
                seed,
                beta,
                dict_update_every: if mode == TrainMode::UnsupervisedDict {
                    dict_every
                } else {
                    0
                },
            };
            commands::train(&x, mode, layers, rank, reg, &cfg, &out, history.as_deref())
        }
        Command::Encode {
            encoder,
            x,
            reg,
            format,
            out,
        } => commands::encode(&encoder, &x, reg, format, &out),
        Command::Online {
            x,
            rank,
            reg,
            solver,
            beta,
            warmup,
            window,
            window_step,
            format,
            out,
        } => commands::online(&x, rank, reg, solver, beta, warmup, (window, window_step), format, &out),
        Command::Align {
            frames,
            encoder,
            reg,
            max_shift,
            max_iter,
            train_epochs,
            step0,
            minibatch,
            seed,
            out,
        } => {
            let acfg = rpca_core::AlignConfig {
                max_shift,
                max_iter,
                ..Default::default()
            };
            let tcfg = rpca_core::TrainConfig {
                step0,
                decay: rpca_core::DecaySchedule::Constant,
                minibatch,
                epochs: 1,
                seed,
                ..Default::default()
            };
            commands::align(&frames, &encoder, reg, &acfg, train_epochs, &tcfg, &out)
        }
        Command::Bench {
            m,
            q,
            layers,
            trials,
            reg,
            seed,
        } => commands::bench(&rpca_core::BenchSpec {
            m,
            q,
            layers,
            trials,
            lambda_star: reg.lambda_star,
            lambda: reg.lambda,
            seed,
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rpca: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
