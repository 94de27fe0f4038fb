use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dualsep::diagnostics::{self, Angle, Image, Raster};
use dualsep::io::{self, CompressionReport, RunConfig};
use dualsep::lambda::{self, LambdaEstimate};
use dualsep::metrics::{self, MetricsReport, Truth, SYNTHETIC_HEADER, FIT_HEADER};
use dualsep::models::{AnalyticParams, SignalModel};
use dualsep::separation::{predict_grid, train, TrainConfig};
use dualsep::synth::{self, SynthBundle};
use dualsep::{Error, Grid, Result};

const MODEL_FILE: &str = "model.dsck";
const LOSS_TRACE: &str = "loss_trace.csv";
const SEPARATION_META: &str = "separation.toml";

#[derive(Parser)]
#[command(name = "dualsep", version, about = "Separate gridded measurements into a convolved model signal and a smooth background")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every command; they override values from `--config`.
#[derive(Args, Clone, Default)]
struct Common {
    /// Flat key = value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Kernel window radius.
    #[arg(long, global = true)]
    r: Option<usize>,
    /// Background penalty weight.
    #[arg(long, global = true)]
    lambda: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    /// Output file or directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Train even when the grid exceeds the compute budget.
    #[arg(long, global = true)]
    force: bool,
}

/// Where the observed grid and its signal model come from.
#[derive(Args, Clone)]
struct DataArgs {
    /// Synthetic bundle directory (observed grid, ground truth, manifest).
    #[arg(long, conflicts_with = "observed")]
    data: Option<PathBuf>,
    /// Observed grid file.
    #[arg(long)]
    observed: Option<PathBuf>,
    /// Gridded signal model; defaults to the analytic model from the config.
    #[arg(long)]
    signal_grid: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic bundle with known components.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        grid_size: Option<usize>,
        /// Poisson count scale; 0 disables noise.
        #[arg(long)]
        noise_scale: Option<f64>,
    },
    /// Estimate the background penalty weight from the data.
    EstimateLambda {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Train the kernel and background networks; writes a checkpoint and loss trace.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        /// Use the estimated lambda instead of a fixed one.
        #[arg(long, conflicts_with = "lambda")]
        auto_lambda: bool,
    },
    /// Evaluate a checkpoint on its grid; writes total, signal and background grids.
    Separate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
    },
    /// Score a separation against the observed data (and ground truth when available).
    Metrics {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        /// Directory written by `separate`.
        #[arg(long)]
        separation: PathBuf,
    },
    /// Projections, Fourier slice, diagonal slice, heatmap and difference histogram.
    Diagnose {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        grid: PathBuf,
        /// Reference grid for the pixel-difference histogram.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        bins: Option<usize>,
    },
    /// Raw data size against checkpoint size.
    ReportCompression {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        raw: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Train over the r × lambda lattice and tabulate the results by RMSE.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth {
            common,
            grid_size,
            noise_scale,
        } => {
            let mut cfg = run_config(&common)?;
            cfg.grid_size = grid_size.or(cfg.grid_size);
            cfg.noise_scale = noise_scale.or(cfg.noise_scale);
            let out = require_out(&common)?;
            let bundle = synth::generate(&cfg.synth_config()?)?;
            io::write_synth_bundle(&bundle, &out)?;
            println!("wrote synthetic bundle ({} cells) to {}", bundle.observed.len(), out.display());
            Ok(())
        }
        Command::EstimateLambda { common, data } => {
            let cfg = run_config(&common)?;
            let input = load_input(&data, &cfg)?;
            let est = estimate(&input, &cfg)?;
            print!("{}", render_estimate(&est));
            if let Some(out) = &common.out {
                write_text(out, &render_estimate(&est))?;
            }
            Ok(())
        }
        Command::Train {
            common,
            data,
            auto_lambda,
        } => {
            let cfg = run_config(&common)?;
            let input = load_input(&data, &cfg)?;
            let mut tc = cfg.train_config()?;
            if auto_lambda {
                let est = estimate(&input, &cfg)?;
                print!("{}", render_estimate(&est));
                tc.lambda = est.lambda;
            }
            let out = require_out(&common)?;
            create_dir(&out)?;
            let res = train(&input.observed, &input.signal, &tc)?;
            io::save_checkpoint(&res.bundle, out.join(MODEL_FILE))?;
            let mut trace = String::from("epoch,loss\n");
            for (e, l) in res.loss_trace.iter().enumerate() {
                trace.push_str(&format!("{e},{l}\n"));
            }
            write_text(&out.join(LOSS_TRACE), &trace)?;
            println!(
                "trained r = {}, lambda = {}, epochs = {}, final loss = {}",
                tc.r,
                tc.lambda,
                res.loss_trace.len(),
                res.loss_trace.last().copied().unwrap_or(f64::NAN)
            );
            println!("wrote {} and {}", out.join(MODEL_FILE).display(), out.join(LOSS_TRACE).display());
            Ok(())
        }
        Command::Separate { common, model } => {
            let bundle = io::load_checkpoint(&model)?;
            let out = require_out(&common)?;
            create_dir(&out)?;
            let (total, signal, background) = predict_grid(&bundle)?;
            check_finite(&total)?;
            let residual = decomposition_residual(&total, &signal, &background);
            io::write_grid(&total, out.join("total.grd"))?;
            io::write_grid(&signal, out.join("signal.grd"))?;
            io::write_grid(&background, out.join("background.grd"))?;
            write_text(
                &out.join(SEPARATION_META),
                &format!("r = {}\nlambda = {}\n", bundle.meta.r, bundle.meta.lambda),
            )?;
            println!("decomposition_residual = {residual}");
            println!("wrote total.grd, signal.grd, background.grd to {}", out.display());
            Ok(())
        }
        Command::Metrics {
            common,
            data,
            separation,
        } => {
            let cfg = run_config(&common)?;
            let input = load_input(&data, &cfg)?;
            let total = io::read_grid(separation.join("total.grd"))?;
            let signal = io::read_grid(separation.join("signal.grd"))?;
            let background = io::read_grid(separation.join("background.grd"))?;
            let meta = RunConfig::load(separation.join(SEPARATION_META)).unwrap_or_default();
            let r = common.r.or(meta.r).unwrap_or(0);
            let lambda = common.lambda.or(meta.lambda).unwrap_or(f64::NAN);
            let truth = input.truth.as_ref().map(|t| Truth {
                signal: &t.signal,
                background: &t.background,
            });
            let rep = metrics::evaluate(&input.observed, &total, &signal, &background, truth, r, lambda)?;
            println!("decomposition_residual = {}", decomposition_residual(&total, &signal, &background));
            print!("{}", rep.key_values());
            if let Some(out) = &common.out {
                create_dir(out)?;
                write_text(&out.join("fit.csv"), &format!("{FIT_HEADER}\n{}\n", rep.fit_row()))?;
                if truth.is_some() {
                    write_text(&out.join("synthetic.csv"), &format!("{SYNTHETIC_HEADER}\n{}\n", rep.synthetic_row()))?;
                }
                write_text(&out.join("metrics.txt"), &rep.key_values())?;
            }
            Ok(())
        }
        Command::Diagnose {
            common,
            grid,
            reference,
            bins,
        } => {
            let cfg = run_config(&common)?;
            let g = io::read_grid(&grid)?;
            let out = require_out(&common)?;
            create_dir(&out)?;
            let written = diagnose(&g, reference.as_deref(), bins.unwrap_or(cfg.bins()), &out)?;
            println!("wrote {} to {}", written.join(", "), out.display());
            Ok(())
        }
        Command::ReportCompression { raw, model, .. } => {
            let rep = CompressionReport::from_files(&raw, &model)?;
            print!("{}", rep.render());
            Ok(())
        }
        Command::Sweep { common, data } => {
            let cfg = run_config(&common)?;
            let input = load_input(&data, &cfg)?;
            let base = cfg.train_config()?;
            let rows = sweep(&input, &base, &cfg.sweep_r(), &cfg.sweep_lambda())?;
            let header = if input.truth.is_some() { SYNTHETIC_HEADER } else { FIT_HEADER };
            let mut table = format!("{header}\n");
            for rep in &rows {
                let row = if input.truth.is_some() { rep.synthetic_row() } else { rep.fit_row() };
                table.push_str(&row);
                table.push('\n');
            }
            print!("{table}");
            if let Some(out) = &common.out {
                write_text(out, &table)?;
            }
            Ok(())
        }
    }
}

fn run_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.r = common.r.or(cfg.r);
    cfg.lambda = common.lambda.or(cfg.lambda);
    cfg.seed = common.seed.or(cfg.seed);
    cfg.epochs = common.epochs.or(cfg.epochs);
    if common.force {
        cfg.force = Some(true);
    }
    Ok(cfg)
}

fn require_out(common: &Common) -> Result<PathBuf> {
    common
        .out
        .clone()
        .ok_or_else(|| Error::Config("this command needs --out".into()))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn check_finite(g: &Grid) -> Result<()> {
    if g.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { op: "prediction" })
    }
}

fn decomposition_residual(total: &Grid, signal: &Grid, background: &Grid) -> f64 {
    total
        .values()
        .iter()
        .zip(signal.values())
        .zip(background.values())
        .map(|((t, s), b)| (t - (s + b)).abs())
        .fold(0.0, f64::max)
}

struct Input {
    observed: Grid,
    signal: SignalModel,
    truth: Option<SynthBundle>,
}

fn load_input(data: &DataArgs, cfg: &RunConfig) -> Result<Input> {
    let (observed, truth) = match (&data.data, &data.observed) {
        (Some(dir), _) => {
            let b = io::read_synth_bundle(dir)?;
            (b.observed.clone(), Some(b))
        }
        (None, Some(p)) => (io::read_grid(p)?, None),
        (None, None) => return Err(Error::Config("need --data or --observed".into())),
    };
    let signal = match (&data.signal_grid, &truth) {
        (Some(p), _) => SignalModel::Gridded(io::read_grid(p)?),
        (None, Some(b)) => b.config.signal_model(),
        (None, None) => {
            let d = AnalyticParams::default();
            SignalModel::Analytic(AnalyticParams {
                j: cfg.signal_j.unwrap_or(d.j),
                jp: cfg.signal_jp.unwrap_or(d.jp),
                amplitude: cfg.signal_amplitude.unwrap_or(d.amplitude),
                width: cfg.signal_width.unwrap_or(d.width),
                z: cfg.signal_z.unwrap_or(d.z),
            })
        }
    };
    Ok(Input { observed, signal, truth })
}

fn estimate(input: &Input, cfg: &RunConfig) -> Result<LambdaEstimate> {
    let r = cfg.r.unwrap_or(TrainConfig::default().r);
    let mask = lambda::derive_support_for_kernel(&input.signal, input.observed.axes(), cfg.tau(), r)?;
    lambda::estimate_lambda(&input.observed, &mask, cfg.lpf_sigma(), &cfg.fit_config())
}

fn render_estimate(est: &LambdaEstimate) -> String {
    format!(
        "lambda = {}\nnumerator = {}\ndenominator = {}\noutside_cells = {}\n",
        est.lambda, est.numerator, est.denominator, est.outside_cells
    )
}

fn csv_series(header: &str, values: &[f64]) -> String {
    let mut out = format!("index,{header}\n");
    for (i, v) in values.iter().enumerate() {
        out.push_str(&format!("{i},{v}\n"));
    }
    out
}

fn diagnose(g: &Grid, reference: Option<&Path>, bins: usize, out: &Path) -> Result<Vec<String>> {
    let img = Image::from_grid(g)?;
    let mut written = Vec::new();
    let mut emit = |name: &str, text: String| -> Result<()> {
        write_text(&out.join(name), &text)?;
        written.push(name.to_string());
        Ok(())
    };
    emit("projection_0.csv", csv_series("value", &diagnostics::radon_projection(&img, Angle::Zero)))?;
    emit("projection_45.csv", csv_series("value", &diagnostics::radon_projection(&img, Angle::Diagonal)))?;
    emit("fourier_slice.csv", csv_series("magnitude", &diagnostics::fourier_central_slice(&img)))?;
    if img.rows == img.cols {
        emit("diagonal.csv", csv_series("value", &diagnostics::diagonal_slice(&img)?))?;
    }
    let raster = Raster::from_image(&img);
    emit("heatmap_scale.csv", raster.scale_csv())?;
    if let Some(p) = reference {
        let r = io::read_grid(p)?;
        let h = diagnostics::pixel_diff_histogram(g, &r, bins)?;
        let mut text = String::from("lo,hi,count\n");
        for (k, c) in h.counts.iter().enumerate() {
            text.push_str(&format!("{},{},{c}\n", h.edges[k], h.edges[k + 1]));
        }
        emit("histogram.csv", text)?;
        let mut text = String::from("reference,value\n");
        for (b, a) in &h.scatter {
            text.push_str(&format!("{b},{a}\n"));
        }
        emit("scatter.csv", text)?;
    }
    let path = out.join("heatmap.pgm");
    fs::write(&path, raster.to_pgm()).map_err(|e| Error::Io { path, source: e })?;
    written.push("heatmap.pgm".into());
    Ok(written)
}

fn sweep(input: &Input, base: &TrainConfig, rs: &[usize], lambdas: &[f64]) -> Result<Vec<MetricsReport>> {
    let mut rows = Vec::new();
    for &r in rs {
        for &lambda in lambdas {
            let tc = TrainConfig { r, lambda, ..base.clone() };
            let res = train(&input.observed, &input.signal, &tc)?;
            let truth = input.truth.as_ref().map(|t| Truth {
                signal: &t.signal,
                background: &t.background,
            });
            rows.push(metrics::evaluate(
                &input.observed,
                &res.total,
                &res.signal,
                &res.background,
                truth,
                r,
                lambda,
            )?);
            eprintln!("r = {r}, lambda = {lambda}: rmse = {}", rows.last().map_or(f64::NAN, |m| m.rmse));
        }
    }
    rows.sort_by(|a, b| a.rmse.total_cmp(&b.rmse));
    Ok(rows)
}
