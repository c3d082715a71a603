//! Datasets, learners and the experiment protocols built on them.

pub mod data;
pub mod experiment;
pub mod learners;

pub use data::{load_libsvm, normalize_unit_box, project_sphere, save_libsvm, BoxScaler, Dataset};
pub use experiment::{
    relative_error, run_approx_experiment, run_task_experiment, ExperimentConfig, ExperimentReport, MethodKind,
    Task, TrainedModel,
};
pub use learners::{accuracy, rmse, train_linear_svm, train_ridge, Features, SvmParams};
