//! Direct multi-horizon Lasso forecasting on monthly panels, comparing
//! a conventional feature set with one chosen from the knowledge graph.

mod experiment;
mod lasso;
mod metrics;
mod panel;
pub mod synthetic;

use thiserror::Error;

pub use experiment::{
    kg_feature_set, run_experiment, ExperimentConfig, ExperimentInputs, ForecastReport, ModelResult,
    ReportRow, TargetSpec,
};
pub use lasso::{
    fit_lasso, fit_lasso_with, fit_path, lambda_grid, lambda_max, select_lambda, validation_curve,
    LassoFit, LassoOptions,
};
pub use metrics::{dm_test, evaluate, evaluate_months, Accuracy, DmResult, Loss};
pub use panel::{
    build_design_matrix, load_panel, read_panel, AliasMap, DesignColumn, DesignMatrix, ForecastTask,
    Month, TimeSeriesPanel,
};

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error("{path}: {source}")]
    Path {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error("duplicate month {0}")]
    DuplicateMonth(Month),
    #[error("months out of order: {next} after {prev}")]
    Unordered { prev: Month, next: Month },
    #[error("month gap: {next} follows {prev}")]
    MonthGap { prev: Month, next: Month },
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("no usable rows for {target:?} at horizon {horizon}")]
    NoUsableRows { target: String, horizon: usize },
    #[error("{rows} rows is too few for validation (need at least {needed})")]
    InsufficientRows { rows: usize, needed: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("zero actual at {at}; MAPE undefined")]
    ZeroActual { at: String },
    #[error("series of length {len} is too short for horizon {horizon}")]
    TooShort { len: usize, horizon: usize },
    #[error("identical loss series; DM statistic is degenerate")]
    DegenerateDm,
    #[error("long-run variance not positive")]
    NonPositiveVariance,
    #[error("entity {0:?} maps to no panel column")]
    NoTargetColumn(String),
    #[error(transparent)]
    Graph(#[from] crate::kgraph::GraphError),
    #[error("{0}")]
    Config(String),
    #[error("target {target:?}{}: {source}", horizon.map(|h| format!(" horizon {h}")).unwrap_or_default())]
    Task {
        target: String,
        horizon: Option<usize>,
        source: Box<ForecastError>,
    },
}

impl ForecastError {
    fn in_task(self, target: &str, horizon: Option<usize>) -> Self {
        ForecastError::Task {
            target: target.to_string(),
            horizon,
            source: Box::new(self),
        }
    }
}
