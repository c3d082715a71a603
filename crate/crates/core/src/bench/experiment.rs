//! Approximation-error and downstream-task experiments.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::{project_sphere, BoxScaler, Dataset};
use super::learners::{
    accuracy, predict_ridge, predict_svm, rmse, train_linear_svm, train_ridge, Features, RidgeModel, SvmModel,
    SvmParams,
};
use crate::baselines::{build_maclaurin, build_tensor_sketch, Baseline};
use crate::error::{Error, Result};
use crate::features::{lift_rows, Coupling, FeatureBuilder, FeatureModel, Method};
use crate::kernels::{gram_matrix, KernelSpec};
use crate::numerics::{DenseMatrix, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodKind {
    Grff,
    Gorf,
    Rff,
    Orf,
    Rm,
    Ts,
}

impl MethodKind {
    pub const ALL: [MethodKind; 6] =
        [MethodKind::Grff, MethodKind::Gorf, MethodKind::Rff, MethodKind::Orf, MethodKind::Rm, MethodKind::Ts];

    pub fn name(self) -> &'static str {
        match self {
            MethodKind::Grff => "GRFF",
            MethodKind::Gorf => "GORF",
            MethodKind::Rff => "RFF",
            MethodKind::Orf => "ORF",
            MethodKind::Rm => "RM",
            MethodKind::Ts => "TS",
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(text.trim()))
            .ok_or_else(|| Error::Spec(format!("unknown method {text:?} (expected GRFF, GORF, RFF, ORF, RM or TS)")))
    }

    fn random_features(self) -> Option<Method> {
        match self {
            MethodKind::Grff => Some(Method::Grff),
            MethodKind::Gorf => Some(Method::Gorf),
            MethodKind::Rff => Some(Method::Rff),
            MethodKind::Orf => Some(Method::Orf),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Approx,
    Classify,
    Regress,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kernel: KernelSpec,
    pub task: Task,
    pub methods: Vec<MethodKind>,
    /// Feature counts as multiples of the input dimension.
    pub s_multiples: Vec<f64>,
    pub reps: usize,
    /// Rows drawn per repetition; `None` keeps every row.
    pub subsample: Option<usize>,
    pub seed: u64,
    #[serde(default)]
    pub coupling: Coupling,
    /// Training rows per repetition for learning tasks; the rest is test.
    pub train_size: Option<usize>,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default = "default_c")]
    pub svm_c: f64,
    /// Ridge penalty; defaults to 1/(2C).
    pub ridge_lambda: Option<f64>,
}

fn default_train_fraction() -> f64 {
    0.8
}
fn default_c() -> f64 {
    1000.0
}

impl ExperimentConfig {
    pub fn new(kernel: KernelSpec, task: Task) -> Self {
        ExperimentConfig {
            kernel,
            task,
            methods: vec![MethodKind::Grff, MethodKind::Gorf],
            s_multiples: vec![0.5, 1.0, 2.0, 8.0],
            reps: 10,
            subsample: Some(1000),
            seed: 0,
            coupling: Coupling::default(),
            train_size: None,
            train_fraction: default_train_fraction(),
            svm_c: default_c(),
            ridge_lambda: None,
        }
    }

    pub fn s_values(&self, d: usize) -> Vec<usize> {
        self.s_multiples.iter().map(|m| ((m * d as f64).round() as usize).max(1)).collect()
    }

    pub fn lambda(&self) -> f64 {
        self.ridge_lambda.unwrap_or(1.0 / (2.0 * self.svm_c))
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::Spec("reps must be at least 1".into()));
        }
        if self.methods.is_empty() || self.s_multiples.is_empty() {
            return Err(Error::Spec("need at least one method and one feature count".into()));
        }
        if self.s_multiples.iter().any(|m| !(*m > 0.0)) {
            return Err(Error::Spec("feature multiples must be positive".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Spec("train_fraction must lie in (0, 1)".into()));
        }
        if !(self.svm_c > 0.0) {
            return Err(Error::Spec("svm_c must be positive".into()));
        }
        self.kernel.validate()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Spec(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RepResult {
    pub method: MethodKind,
    pub s: usize,
    pub rep: usize,
    pub value: Option<f64>,
    pub seconds: f64,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub method: MethodKind,
    pub s: usize,
    pub mean: f64,
    pub std: f64,
    pub reps: usize,
    pub failures: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub metric: &'static str,
    pub dim: usize,
    pub results: Vec<RepResult>,
    pub summary: Vec<Summary>,
    pub seconds: f64,
}

impl ExperimentReport {
    pub fn get(&self, method: MethodKind, s: usize) -> Option<&Summary> {
        self.summary.iter().find(|r| r.method == method && r.s == s)
    }

    pub fn values(&self, method: MethodKind, s: usize) -> Vec<f64> {
        self.results
            .iter()
            .filter(|r| r.method == method && r.s == s)
            .filter_map(|r| r.value)
            .collect()
    }

    pub fn has_failures(&self) -> bool {
        self.results.iter().any(|r| r.error.is_some())
    }

    /// Config echo as `#` comment lines, then one row per repetition and one
    /// `mean` row per (method, s).
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        for line in self.config.to_toml().lines() {
            writeln!(out, "# {line}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["kind", "method", "s", "rep", "metric", "value", "std", "seconds", "error"])
            .map_err(|e| Error::Serde(e.to_string()))?;
        for r in &self.results {
            w.write_record([
                "rep".to_string(),
                r.method.name().to_string(),
                r.s.to_string(),
                r.rep.to_string(),
                self.metric.to_string(),
                r.value.map(|v| v.to_string()).unwrap_or_default(),
                String::new(),
                format!("{:.6}", r.seconds),
                r.error.clone().unwrap_or_default(),
            ])
            .map_err(|e| Error::Serde(e.to_string()))?;
        }
        for m in &self.summary {
            w.write_record([
                "mean".to_string(),
                m.method.name().to_string(),
                m.s.to_string(),
                m.reps.to_string(),
                self.metric.to_string(),
                m.mean.to_string(),
                m.std.to_string(),
                String::new(),
                if m.failures > 0 { format!("{} failed", m.failures) } else { String::new() },
            ])
            .map_err(|e| Error::Serde(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// ‖K − K̂‖_F / ‖K‖_F.
pub fn relative_error(exact: &DenseMatrix, approx: &DenseMatrix) -> Result<f64> {
    if exact.rows() != approx.rows() || exact.cols() != approx.cols() {
        return Err(Error::DimensionMismatch { expected: exact.rows() * exact.cols(), got: approx.rows() * approx.cols() });
    }
    let den = exact.frobenius();
    if den == 0.0 {
        return Err(Error::ZeroDenominator("exact Gram matrix has zero norm"));
    }
    let num: f64 = exact.as_slice().iter().zip(approx.as_slice()).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(num.sqrt() / den)
}

/// A random feature model or a baseline, as used by the learners.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "map", rename_all = "lowercase")]
pub enum FeatureMap {
    Random(FeatureModel),
    Baseline(Baseline),
}

impl FeatureMap {
    pub fn build(
        builder: Option<&FeatureBuilder>,
        spec: &KernelSpec,
        method: MethodKind,
        coupling: Coupling,
        s: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        if let Some(m) = method.random_features() {
            let b = builder.ok_or_else(|| Error::Incompatible(format!("no spectrum available for {}", method.name())))?;
            return Ok(FeatureMap::Random(b.build(m, coupling, s, rng)?));
        }
        Ok(FeatureMap::Baseline(match method {
            MethodKind::Rm => Baseline::Maclaurin(build_maclaurin(spec, s, rng)?),
            _ => Baseline::Sketch(build_tensor_sketch(spec, s, rng)?),
        }))
    }

    /// Row-major features and their width.
    pub fn feature_rows(&self, x: &DenseMatrix) -> Result<(Vec<f64>, usize)> {
        match self {
            FeatureMap::Random(m) => Ok((lift_rows(m, x)?, 4 * m.s)),
            FeatureMap::Baseline(b) => Ok((b.feature_rows(x)?, b.width())),
        }
    }

    pub fn approx_gram(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        match self {
            FeatureMap::Random(m) => crate::features::approx_gram(m, x),
            FeatureMap::Baseline(b) => b.approx_gram(x),
        }
    }
}

fn summarize(config: &ExperimentConfig, s_values: &[usize], results: &[RepResult]) -> Vec<Summary> {
    let mut out = Vec::new();
    for &method in &config.methods {
        for &s in s_values {
            let vals: Vec<f64> = results
                .iter()
                .filter(|r| r.method == method && r.s == s)
                .filter_map(|r| r.value)
                .collect();
            let failures = results.iter().filter(|r| r.method == method && r.s == s && r.error.is_some()).count();
            let n = vals.len();
            let mean = if n > 0 { vals.iter().sum::<f64>() / n as f64 } else { f64::NAN };
            let std = if n > 1 {
                (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else if n == 1 {
                0.0
            } else {
                f64::NAN
            };
            out.push(Summary { method, s, mean, std, reps: n, failures });
        }
    }
    out
}

fn needs_spectrum(config: &ExperimentConfig) -> bool {
    config.methods.iter().any(|m| m.random_features().is_some())
}

/// Builds the spectrum once; a failure is reported per method later.
fn spectrum_for(config: &ExperimentConfig, spec: &KernelSpec) -> std::result::Result<FeatureBuilder, String> {
    if !needs_spectrum(config) {
        return Err("unused".into());
    }
    FeatureBuilder::new(spec).map_err(|e| e.to_string())
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> (Result<T>, f64) {
    let t = Instant::now();
    let r = f();
    (r, t.elapsed().as_secs_f64())
}

fn record(method: MethodKind, s: usize, rep: usize, out: (Result<f64>, f64)) -> RepResult {
    let (value, seconds) = out;
    match value {
        Ok(v) => RepResult { method, s, rep, value: Some(v), seconds, error: None },
        Err(e) => RepResult { method, s, rep, value: None, seconds, error: Some(e.to_string()) },
    }
}

/// Relative Gram error of every (method, s) on random row subsets.
///
/// Repetition r uses stream r of a generator seeded from `rng`; within a
/// repetition all methods at the same s start from the same state, so the
/// random-feature methods share their norm draws.
pub fn run_approx_experiment(config: &ExperimentConfig, data: &Dataset, rng: &mut Rng) -> Result<ExperimentReport> {
    config.validate()?;
    let start = Instant::now();
    let d = data.dim();
    let spec = config.kernel.with_dim(d);
    if spec.requires_sphere() {
        for i in 0..data.len() {
            let r = data.x.row(i);
            let n = crate::numerics::dot(&r, &r).sqrt();
            if (n - 1.0).abs() > 1e-8 {
                return Err(Error::OffSphere(n));
            }
        }
    }
    let builder = spectrum_for(config, &spec);
    let s_values = config.s_values(d);
    let base = Rng::new(rng.next_seed());
    let per_rep: Vec<Vec<RepResult>> = (0..config.reps)
        .into_par_iter()
        .map(|rep| -> Result<Vec<RepResult>> {
            let rep_rng = base.split(rep as u64);
            let sub = data.subsample(config.subsample.unwrap_or(data.len()), &mut rep_rng.split(0));
            let exact = gram_matrix(&spec, &sub.x)?;
            let mut out = Vec::new();
            for (si, &s) in s_values.iter().enumerate() {
                let stream = rep_rng.split(1 + si as u64);
                for &method in &config.methods {
                    let res = timed(|| {
                        let b = match (&builder, method.random_features()) {
                            (Err(e), Some(_)) => return Err(Error::Spec(e.clone())),
                            (Ok(b), _) => Some(b),
                            _ => None,
                        };
                        let map = FeatureMap::build(b, &spec, method, config.coupling, s, &mut stream.clone())?;
                        relative_error(&exact, &map.approx_gram(&sub.x)?)
                    });
                    out.push(record(method, s, rep, res));
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let results: Vec<RepResult> = per_rep.into_iter().flatten().collect();
    Ok(ExperimentReport {
        summary: summarize(config, &s_values, &results),
        config: config.clone(),
        metric: "relative_error",
        dim: d,
        results,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "learner", rename_all = "lowercase")]
pub enum Learner {
    Ridge { model: RidgeModel, y_mean: f64 },
    Svm(SvmModel),
}

/// Everything needed to predict on raw inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub kernel: KernelSpec,
    pub method: MethodKind,
    pub task: Task,
    pub scaler: BoxScaler,
    pub sphere: bool,
    pub features: FeatureMap,
    pub learner: Learner,
}

impl TrainedModel {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("models always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Serde(e.to_string()))
    }

    fn prepare(&self, data: &Dataset) -> Result<Dataset> {
        let scaled = self.scaler.apply(data)?;
        if self.sphere {
            project_sphere(&scaled)
        } else {
            Ok(scaled)
        }
    }

    pub fn predict(&self, data: &Dataset) -> Result<Vec<f64>> {
        let x = self.prepare(data)?;
        let (rows, width) = self.features.feature_rows(&x.x)?;
        let f = Features::new(&rows, x.len(), width)?;
        Ok(match &self.learner {
            Learner::Ridge { model, y_mean } => predict_ridge(model, f).into_iter().map(|p| p + y_mean).collect(),
            Learner::Svm(m) => predict_svm(m, f),
        })
    }

    /// Accuracy for classification, RMSE for regression.
    pub fn evaluate(&self, data: &Dataset) -> Result<f64> {
        let pred = self.predict(data)?;
        Ok(match self.task {
            Task::Regress => rmse(&pred, &data.y),
            _ => pred.iter().zip(&data.y).filter(|(p, t)| p == t).count() as f64 / data.len() as f64,
        })
    }
}

/// Normalize with training statistics, lift, and fit the task's learner.
pub fn fit_task_model(
    config: &ExperimentConfig,
    builder: Option<&FeatureBuilder>,
    method: MethodKind,
    s: usize,
    train: &Dataset,
    rng: &mut Rng,
) -> Result<TrainedModel> {
    let spec = config.kernel.with_dim(train.dim());
    let scaler = BoxScaler::fit(train)?;
    let sphere = spec.requires_sphere();
    let mut x = scaler.apply(train)?;
    if sphere {
        x = project_sphere(&x)?;
    }
    let features = FeatureMap::build(builder, &spec, method, config.coupling, s, rng)?;
    let (rows, width) = features.feature_rows(&x.x)?;
    let f = Features::new(&rows, x.len(), width)?;
    let learner = match config.task {
        Task::Regress => {
            let y_mean = x.y.iter().sum::<f64>() / x.len() as f64;
            let yc: Vec<f64> = x.y.iter().map(|v| v - y_mean).collect();
            Learner::Ridge { model: train_ridge(f, &yc, config.lambda())?, y_mean }
        }
        Task::Classify => {
            let params = SvmParams { c: config.svm_c, ..SvmParams::default() };
            let m = train_linear_svm(f, &x.y, &params)?;
            debug_assert!(accuracy(&m, f, &x.y).is_finite());
            Learner::Svm(m)
        }
        Task::Approx => return Err(Error::Spec("the approx task has no learner".into())),
    };
    Ok(TrainedModel { kernel: spec, method, task: config.task, scaler, sphere, features, learner })
}

/// Train/test metric of every (method, s) over random splits.
pub fn run_task_experiment(config: &ExperimentConfig, data: &Dataset, rng: &mut Rng) -> Result<ExperimentReport> {
    config.validate()?;
    if config.task == Task::Approx {
        return Err(Error::Spec("use run_approx_experiment for the approx task".into()));
    }
    if config.task == Task::Classify && data.classes().len() < 2 {
        return Err(Error::Data("classification needs at least two distinct labels".into()));
    }
    let start = Instant::now();
    let d = data.dim();
    let spec = config.kernel.with_dim(d);
    let builder = spectrum_for(config, &spec);
    let s_values = config.s_values(d);
    let base = Rng::new(rng.next_seed());
    let per_rep: Vec<Vec<RepResult>> = (0..config.reps)
        .into_par_iter()
        .map(|rep| -> Result<Vec<RepResult>> {
            let rep_rng = base.split(rep as u64);
            let mut split_rng = rep_rng.split(0);
            let sub = data.subsample(config.subsample.unwrap_or(data.len()), &mut split_rng);
            let n_train = config
                .train_size
                .unwrap_or_else(|| (config.train_fraction * sub.len() as f64).round() as usize);
            let (train, test) = sub.split(n_train, &mut split_rng)?;
            let mut out = Vec::new();
            for (si, &s) in s_values.iter().enumerate() {
                let stream = rep_rng.split(1 + si as u64);
                for &method in &config.methods {
                    let res = timed(|| {
                        let b = match (&builder, method.random_features()) {
                            (Err(e), Some(_)) => return Err(Error::Spec(e.clone())),
                            (Ok(b), _) => Some(b),
                            _ => None,
                        };
                        let model = fit_task_model(config, b, method, s, &train, &mut stream.clone())?;
                        model.evaluate(&test)
                    });
                    out.push(record(method, s, rep, res));
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let results: Vec<RepResult> = per_rep.into_iter().flatten().collect();
    Ok(ExperimentReport {
        summary: summarize(config, &s_values, &results),
        config: config.clone(),
        metric: if config.task == Task::Regress { "rmse" } else { "accuracy" },
        dim: d,
        results,
        seconds: start.elapsed().as_secs_f64(),
    })
}
