//! Command-line front end.
//!
//! Every subcommand writes CSV (to `--out` or stdout) preceded by `#` lines
//! echoing the resolved configuration. Exit codes: 0 success, 1 usage or
//! configuration error, 2 data error, 3 numerical failure.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bench::data::{load_libsvm, normalize_unit_box, project_sphere, Dataset};
use crate::bench::experiment::{
    fit_task_model, run_approx_experiment, run_task_experiment, ExperimentConfig, MethodKind, Task, TrainedModel,
};
use crate::error::{Error, Result};
use crate::features::{Coupling, FeatureBuilder};
use crate::kernels::KernelSpec;
use crate::numerics::Rng;
use crate::spectrum::dump_csv;
use crate::variance::{variance_report, ReportConfig};

#[derive(Parser, Debug)]
#[command(name = "gorf", version, about = "Random features for stationary indefinite kernels")]
struct Cli {
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Tabulate the radial spectrum and norm CDFs of a kernel.
    Spectrum(SpectrumArgs),
    /// Closed-form and Monte-Carlo variances over a grid of ‖z‖.
    Variance(VarianceArgs),
    /// Relative Gram-matrix error of feature maps on dataset subsamples.
    Approx(ExperimentArgs),
    /// Classification or regression with lifted features, repeated over splits.
    Bench(ExperimentArgs),
    /// Fit one model and save it as JSON.
    Train(TrainArgs),
    /// Apply a saved model to a dataset.
    Predict(PredictArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CouplingArg {
    Stacked,
    Truncated,
    Block,
}

impl From<CouplingArg> for Coupling {
    fn from(c: CouplingArg) -> Self {
        match c {
            CouplingArg::Stacked => Coupling::Stacked,
            CouplingArg::Truncated => Coupling::Truncated,
            CouplingArg::Block => Coupling::Block,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TaskArg {
    Classify,
    Regress,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Classify => Task::Classify,
            TaskArg::Regress => Task::Regress,
        }
    }
}

#[derive(Args, Debug)]
struct SpectrumArgs {
    /// Inline kernel (e.g. `delta-gaussian:a=1/-1,sigma=1/10`) or a TOML file.
    #[arg(long)]
    kernel: String,
    #[arg(long)]
    dim: Option<usize>,
    /// Grid points in the dump.
    #[arg(long, default_value_t = 512)]
    points: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VarianceArgs {
    #[arg(long)]
    kernel: String,
    #[arg(long)]
    dim: Option<usize>,
    /// Feature count (default: the dimension).
    #[arg(long)]
    s: Option<usize>,
    /// Comma-separated ‖z‖ values.
    #[arg(long, value_delimiter = ',')]
    z_grid: Option<Vec<f64>>,
    /// Independent models per grid point for the empirical columns.
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    /// Draws per Monte-Carlo term of the semi-closed gap.
    #[arg(long, default_value_t = 100_000)]
    gap_trials: usize,
    #[arg(long, value_enum, default_value = "stacked")]
    coupling: CouplingArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// TOML experiment config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    kernel: Option<String>,
    /// Comma-separated subset of GRFF, GORF, RFF, ORF, RM, TS.
    #[arg(long, value_delimiter = ',')]
    method: Option<Vec<String>>,
    /// Feature counts as multiples of the dimension, e.g. `0.5,1,2,8`.
    #[arg(long, value_delimiter = ',')]
    s_multiples: Option<Vec<f64>>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Rows per repetition; 0 keeps every row.
    #[arg(long)]
    subsample: Option<usize>,
    #[arg(long, value_enum)]
    coupling: Option<CouplingArg>,
    /// Learning task for `bench`.
    #[arg(long, value_enum)]
    task: Option<TaskArg>,
    #[arg(long)]
    train_size: Option<usize>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Held-out data; without it the dataset is split.
    #[arg(long)]
    test: Option<PathBuf>,
    /// Where to write the held-out split when `--test` is absent.
    #[arg(long)]
    test_out: Option<PathBuf>,
    #[arg(long)]
    kernel: String,
    #[arg(long, default_value = "GORF")]
    method: String,
    /// Feature count as a multiple of the dimension.
    #[arg(long, default_value_t = 8.0)]
    s_multiples: f64,
    #[arg(long, value_enum)]
    task: TaskArg,
    #[arg(long, value_enum, default_value = "stacked")]
    coupling: CouplingArg,
    #[arg(long)]
    train_size: Option<usize>,
    #[arg(long, default_value_t = 0.8)]
    train_fraction: f64,
    #[arg(long, default_value_t = 1000.0)]
    c: f64,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output model JSON.
    #[arg(long)]
    model: PathBuf,
    /// Metrics CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    /// Predictions CSV (the metric goes to stderr).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn read_kernel(text: &str, dim: Option<usize>) -> Result<KernelSpec> {
    let path = Path::new(text);
    if path.is_file() {
        let body = std::fs::read_to_string(path)?;
        return KernelSpec::from_toml(&body, dim);
    }
    KernelSpec::parse(text, dim)
}

fn echo(out: &mut dyn Write, pairs: &[(&str, String)]) -> Result<()> {
    for (k, v) in pairs {
        writeln!(out, "# {k} = {v}")?;
    }
    Ok(())
}

fn cmd_spectrum(a: &SpectrumArgs) -> Result<()> {
    let spec = read_kernel(&a.kernel, a.dim)?;
    let builder = FeatureBuilder::new(&spec)?;
    let mut out = output(&a.out)?;
    let (mp, mn) = builder.prepared.masses();
    echo(
        &mut out,
        &[
            ("kernel", spec.label()),
            ("dim", spec.dim.to_string()),
            ("points", a.points.to_string()),
            ("mass_pos", mp.to_string()),
            ("mass_neg", mn.to_string()),
        ],
    )?;
    dump_csv(&builder.prepared, a.points, &mut out)?;
    out.flush()?;
    Ok(())
}

fn cmd_variance(a: &VarianceArgs) -> Result<()> {
    let spec = read_kernel(&a.kernel, a.dim)?;
    let builder = FeatureBuilder::new(&spec)?;
    let zmax = if spec.requires_sphere() { 2.0 } else { 3.0 };
    let grid = a
        .z_grid
        .clone()
        .unwrap_or_else(|| (0..=12).map(|i| zmax * i as f64 / 12.0).collect());
    let cfg = ReportConfig {
        s: a.s.unwrap_or(spec.dim),
        grid,
        trials: a.trials,
        gap_trials: a.gap_trials,
        coupling: a.coupling.into(),
        seed: a.seed,
    };
    let report = variance_report(&builder, &cfg)?;
    let mut out = output(&a.out)?;
    echo(
        &mut out,
        &[
            ("kernel", report.kernel.clone()),
            ("d", report.d.to_string()),
            ("s", report.s.to_string()),
            ("coupling", report.coupling.name().to_string()),
            ("trials", report.trials.to_string()),
            ("gap_trials", cfg.gap_trials.to_string()),
            ("seed", report.seed.to_string()),
        ],
    )?;
    report.write_csv(&mut out)?;
    Ok(())
}

fn experiment_config(a: &ExperimentArgs, task: Task, dim: usize) -> Result<ExperimentConfig> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::from_toml(&std::fs::read_to_string(p)?)?,
        None => {
            let kernel = a
                .kernel
                .as_deref()
                .ok_or_else(|| Error::Spec("--kernel is required without --config".into()))?;
            ExperimentConfig::new(read_kernel(kernel, Some(dim))?, task)
        }
    };
    if let Some(k) = &a.kernel {
        cfg.kernel = read_kernel(k, Some(dim))?;
    }
    cfg.kernel = cfg.kernel.with_dim(dim);
    cfg.task = task;
    if let Some(m) = &a.method {
        cfg.methods = m.iter().map(|s| MethodKind::parse(s)).collect::<Result<_>>()?;
    }
    if let Some(s) = &a.s_multiples {
        cfg.s_multiples = s.clone();
    }
    if let Some(r) = a.reps {
        cfg.reps = r;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(n) = a.subsample {
        cfg.subsample = (n > 0).then_some(n);
    }
    if let Some(c) = a.coupling {
        cfg.coupling = c.into();
    }
    if let Some(t) = a.train_size {
        cfg.train_size = Some(t);
    }
    if let Some(c) = a.c {
        cfg.svm_c = c;
    }
    if let Some(l) = a.lambda {
        cfg.ridge_lambda = Some(l);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn check_compatible(cfg: &ExperimentConfig) -> Result<()> {
    for m in &cfg.methods {
        if matches!(m, MethodKind::Rm | MethodKind::Ts) && !cfg.kernel.requires_sphere() {
            return Err(Error::Incompatible(format!(
                "{} needs a dot-product kernel, got {}",
                m.name(),
                cfg.kernel.label()
            )));
        }
    }
    Ok(())
}

fn finish_report(report: &crate::bench::ExperimentReport, out: &Option<PathBuf>) -> Result<()> {
    let mut w = output(out)?;
    report.write_csv(&mut w)?;
    if let Some(r) = report.results.iter().find(|r| r.error.is_some()) {
        return Err(Error::Experiment(format!(
            "{} at s={}: {}",
            r.method.name(),
            r.s,
            r.error.as_deref().unwrap_or("")
        )));
    }
    Ok(())
}

fn cmd_approx(a: &ExperimentArgs) -> Result<()> {
    let raw = load_libsvm(&a.dataset, None)?;
    let cfg = experiment_config(a, Task::Approx, raw.dim())?;
    check_compatible(&cfg)?;
    let mut data = normalize_unit_box(&raw)?;
    if cfg.kernel.requires_sphere() {
        data = project_sphere(&data)?;
    }
    let report = run_approx_experiment(&cfg, &data, &mut Rng::new(cfg.seed))?;
    finish_report(&report, &a.out)
}

fn cmd_bench(a: &ExperimentArgs) -> Result<()> {
    let raw = load_libsvm(&a.dataset, None)?;
    let task = a.task.map(Task::from).ok_or_else(|| Error::Spec("--task is required".into()))?;
    let cfg = experiment_config(a, task, raw.dim())?;
    check_compatible(&cfg)?;
    let report = run_task_experiment(&cfg, &raw, &mut Rng::new(cfg.seed))?;
    finish_report(&report, &a.out)
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let data = load_libsvm(&a.dataset, None)?;
    let d = data.dim();
    let mut cfg = ExperimentConfig::new(read_kernel(&a.kernel, Some(d))?.with_dim(d), a.task.into());
    let method = MethodKind::parse(&a.method)?;
    cfg.methods = vec![method];
    cfg.s_multiples = vec![a.s_multiples];
    cfg.coupling = a.coupling.into();
    cfg.seed = a.seed;
    cfg.svm_c = a.c;
    cfg.ridge_lambda = a.lambda;
    cfg.train_fraction = a.train_fraction;
    cfg.train_size = a.train_size;
    cfg.validate()?;
    check_compatible(&cfg)?;

    let rng = Rng::new(a.seed);
    let (train, test): (Dataset, Dataset) = match &a.test {
        Some(p) => (data, load_libsvm(p, Some(d))?),
        None => {
            let n = a
                .train_size
                .unwrap_or_else(|| (a.train_fraction * data.len() as f64).round() as usize);
            data.split(n, &mut rng.split(0))?
        }
    };
    if let Some(p) = &a.test_out {
        crate::bench::data::save_libsvm(&test, p)?;
    }
    let builder = if matches!(method, MethodKind::Rm | MethodKind::Ts) {
        None
    } else {
        Some(FeatureBuilder::new(&cfg.kernel)?)
    };
    let s = cfg.s_values(d)[0];
    let model = fit_task_model(&cfg, builder.as_ref(), method, s, &train, &mut rng.split(1))?;
    let metric = model.evaluate(&test)?;
    std::fs::write(&a.model, model.to_json())?;

    let mut out = output(&a.out)?;
    for line in cfg.to_toml().lines() {
        writeln!(out, "# {line}")?;
    }
    writeln!(out, "method,s,train_rows,test_rows,metric,value")?;
    writeln!(
        out,
        "{},{s},{},{},{},{metric}",
        method.name(),
        train.len(),
        test.len(),
        if cfg.task == Task::Regress { "rmse" } else { "accuracy" }
    )?;
    out.flush()?;
    Ok(())
}

fn cmd_predict(a: &PredictArgs) -> Result<()> {
    let model = TrainedModel::from_json(&std::fs::read_to_string(&a.model)?)?;
    let data = load_libsvm(&a.dataset, Some(model.kernel.dim))?;
    let pred = model.predict(&data)?;
    let metric = model.evaluate(&data)?;
    let mut out = output(&a.out)?;
    writeln!(out, "# model = {}", a.model.display())?;
    writeln!(out, "# kernel = {}", model.kernel.label())?;
    writeln!(out, "# method = {}", model.method.name())?;
    writeln!(out, "# {} = {metric}", if model.task == Task::Regress { "rmse" } else { "accuracy" })?;
    writeln!(out, "row,truth,prediction")?;
    for (i, (t, p)) in data.y.iter().zip(&pred).enumerate() {
        writeln!(out, "{i},{t},{p}")?;
    }
    out.flush()?;
    eprintln!("{metric}");
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Spectrum(a) => cmd_spectrum(a),
        Command::Variance(a) => cmd_variance(a),
        Command::Approx(a) => cmd_approx(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
    }
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let threads = cli.threads.unwrap_or(0);
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    match pool.install(|| dispatch(&cli)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
