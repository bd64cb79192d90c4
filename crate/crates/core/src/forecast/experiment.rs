use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lasso::{fit_lasso, lambda_grid, lambda_max, select_lambda};
use super::metrics::{dm_test, evaluate_months, DmResult, Loss};
use super::panel::{build_design_matrix, AliasMap, DesignMatrix, ForecastTask, Month, TimeSeriesPanel};
use super::ForecastError;
use crate::kgraph::KnowledgeGraph;

/// Panel columns for the graph neighbours of `target`, led by the
/// target's own history. Columns with any gap over the span on which the
/// target is observed are dropped.
pub fn kg_feature_set(
    graph: &KnowledgeGraph,
    target: &str,
    panel: &TimeSeriesPanel,
    aliases: &AliasMap,
    hops: usize,
) -> Result<Vec<String>, ForecastError> {
    let linked = graph.linked_variables(target, hops)?;
    let own = aliases.columns(target, panel);
    let Some(&history) = own.first() else {
        return Err(ForecastError::NoTargetColumn(target.to_string()));
    };
    let col = panel.column(history).expect("alias columns exist in the panel");
    let first = col.iter().position(Option::is_some);
    let last = col.iter().rposition(Option::is_some);
    let (Some(first), Some(last)) = (first, last) else {
        return Err(ForecastError::NoTargetColumn(target.to_string()));
    };
    let available = |name: &str| {
        panel
            .column(name)
            .is_some_and(|c| c[first..=last].iter().all(Option::is_some))
    };
    let mut out = vec![history.to_string()];
    for entity in &linked {
        for c in aliases.columns(entity, panel) {
            if available(c) && !out.iter().any(|o| o == c) {
                out.push(c.to_string());
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    /// Name used in reports and plot file names.
    pub label: String,
    /// Graph entity the KG features are gathered around.
    pub entity: String,
    pub column: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub targets: Vec<TargetSpec>,
    pub horizons: Vec<usize>,
    pub lags: usize,
    pub test_fraction: f64,
    pub folds: usize,
    pub grid_size: usize,
    pub grid_ratio: f64,
    pub hops: usize,
    pub loss: Loss,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            targets: Vec::new(),
            horizons: (1..=12).collect(),
            lags: 3,
            test_fraction: 0.2,
            folds: 3,
            grid_size: 50,
            grid_ratio: 1e-3,
            hops: 1,
            loss: Loss::Squared,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ForecastError> {
        let bad = |m: &str| Err(ForecastError::Config(m.to_string()));
        if self.targets.is_empty() {
            return bad("no targets");
        }
        if self.horizons.is_empty() || self.horizons.iter().any(|&h| !(1..=12).contains(&h)) {
            return bad("horizons must be a non-empty subset of 1..=12");
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad("test_fraction must lie in (0, 1)");
        }
        if self.folds == 0 || self.grid_size == 0 || !(self.grid_ratio > 0.0 && self.grid_ratio < 1.0) {
            return bad("folds and grid_size must be positive and grid_ratio in (0, 1)");
        }
        Ok(())
    }
}

pub struct ExperimentInputs<'a> {
    /// Conventional macro series; every column is a baseline feature.
    pub baseline: &'a TimeSeriesPanel,
    /// Alternative series the graph can point at.
    pub alternative: &'a TimeSeriesPanel,
    pub graph: &'a KnowledgeGraph,
    pub aliases: &'a AliasMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResult {
    pub features: Vec<String>,
    pub lambda: f64,
    /// Design columns with non-zero coefficients.
    pub selected: Vec<String>,
    pub mape: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub target: String,
    pub horizon: usize,
    pub train_rows: usize,
    pub test_rows: usize,
    pub test_start: Month,
    pub test_end: Month,
    pub baseline: ModelResult,
    pub kg: ModelResult,
    /// Baseline loss minus KG loss; positive favours the KG model.
    /// Absent when the test is undefined on this sample.
    pub dm: Option<DmResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dm_note: Option<String>,
}

impl ReportRow {
    pub fn dm_p(&self) -> Option<f64> {
        self.dm.map(|d| d.p_value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastReport {
    pub config: ExperimentConfig,
    pub rows: Vec<ReportRow>,
}

struct Fitted {
    result: ModelResult,
    predictions: Vec<f64>,
}

fn fit_and_predict(
    train: &DesignMatrix,
    test: &DesignMatrix,
    features: Vec<String>,
    cfg: &ExperimentConfig,
) -> Result<Fitted, ForecastError> {
    let lmax = lambda_max(train.x.view(), train.y.view())?;
    let grid = lambda_grid(lmax, cfg.grid_size, cfg.grid_ratio);
    let lambda = select_lambda(train.x.view(), train.y.view(), &grid, cfg.folds)?;
    let fit = fit_lasso(train.x.view(), train.y.view(), lambda)?;
    let predictions = fit.predict(test.x.view());
    let actual = test.y.as_slice().expect("contiguous");
    let acc = evaluate_months(&predictions, actual, &test.months.iter().map(|m| m.offset(test.horizon as i64)).collect::<Vec<_>>())?;
    Ok(Fitted {
        result: ModelResult {
            features,
            lambda,
            selected: fit.active.iter().map(|&j| train.columns[j].to_string()).collect(),
            mape: acc.mape,
            rmse: acc.rmse,
        },
        predictions,
    })
}

fn run_task(
    panel: &TimeSeriesPanel,
    spec: &TargetSpec,
    horizon: usize,
    baseline_features: &[String],
    kg_features: &[String],
    cfg: &ExperimentConfig,
) -> Result<ReportRow, ForecastError> {
    let task = |features: &[String]| ForecastTask {
        target: spec.column.clone(),
        horizon,
        lags: cfg.lags,
        features: features.to_vec(),
        test_fraction: cfg.test_fraction,
    };
    let base = build_design_matrix(panel, &task(baseline_features))?;
    let kg = build_design_matrix(panel, &task(kg_features))?;
    // Both models are scored on the same months.
    let common: BTreeSet<Month> = base
        .months
        .iter()
        .copied()
        .collect::<BTreeSet<_>>()
        .intersection(&kg.months.iter().copied().collect())
        .copied()
        .collect();
    let (base, kg) = (base.select_months(&common), kg.select_months(&common));
    if base.rows() == 0 {
        return Err(ForecastError::NoUsableRows {
            target: spec.column.clone(),
            horizon,
        });
    }
    let (base_train, base_test) = base.split(cfg.test_fraction);
    let (kg_train, kg_test) = kg.split(cfg.test_fraction);
    let b = fit_and_predict(&base_train, &base_test, baseline_features.to_vec(), cfg)?;
    let k = fit_and_predict(&kg_train, &kg_test, kg_features.to_vec(), cfg)?;
    let actual = base_test.y.as_slice().expect("contiguous");
    let (dm, dm_note) = match dm_test(
        &cfg.loss.losses(&b.predictions, actual),
        &cfg.loss.losses(&k.predictions, actual),
        horizon,
    ) {
        Ok(d) => (Some(d), None),
        Err(e @ (ForecastError::NonPositiveVariance | ForecastError::DegenerateDm)) => (None, Some(e.to_string())),
        Err(e) => return Err(e),
    };
    Ok(ReportRow {
        target: spec.label.clone(),
        horizon,
        train_rows: base_train.rows(),
        test_rows: base_test.rows(),
        test_start: base_test.target_month(0),
        test_end: base_test.target_month(base_test.rows() - 1),
        baseline: b.result,
        kg: k.result,
        dm,
        dm_note,
    })
}

/// Baseline and KG-guided Lasso forecasts for every target and horizon.
pub fn run_experiment(
    inputs: &ExperimentInputs<'_>,
    cfg: &ExperimentConfig,
) -> Result<ForecastReport, ForecastError> {
    cfg.validate()?;
    let panel = inputs.baseline.join(inputs.alternative)?;
    let baseline_features: Vec<String> = inputs.baseline.column_names().to_vec();
    let mut jobs = Vec::new();
    for spec in &cfg.targets {
        let kg = kg_feature_set(inputs.graph, &spec.entity, &panel, inputs.aliases, cfg.hops)
            .map_err(|e| e.in_task(&spec.label, None))?;
        if kg[0] != spec.column {
            return Err(ForecastError::Config(format!(
                "entity {:?} resolves to column {:?}, expected {:?}",
                spec.entity, kg[0], spec.column
            )));
        }
        for &h in &cfg.horizons {
            jobs.push((spec, h, kg.clone()));
        }
    }
    let rows = jobs
        .par_iter()
        .map(|(spec, h, kg)| {
            run_task(&panel, spec, *h, &baseline_features, kg, cfg).map_err(|e| e.in_task(&spec.label, Some(*h)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ForecastReport {
        config: cfg.clone(),
        rows,
    })
}

impl ForecastReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("target,horizon,model,mape,rmse,dm_p\n");
        for r in &self.rows {
            for (model, m) in [("baseline", &r.baseline), ("kg", &r.kg)] {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    r.target,
                    r.horizon,
                    model,
                    m.mape,
                    m.rmse,
                    r.dm_p().map(|p| p.to_string()).unwrap_or_default()
                );
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is plain data") + "\n"
    }

    pub fn targets(&self) -> Vec<&str> {
        let mut seen: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !seen.contains(&r.target.as_str()) {
                seen.push(&r.target);
            }
        }
        seen
    }

    /// Two panels (MAPE, RMSE) of error against horizon for one target.
    pub fn plot_svg(&self, target: &str) -> String {
        let rows: Vec<&ReportRow> = self.rows.iter().filter(|r| r.target == target).collect();
        let (w, h) = (920.0, 360.0);
        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
        let metrics: [(&str, fn(&ModelResult) -> f64); 2] = [("MAPE (%)", |m| m.mape), ("RMSE", |m| m.rmse)];
        for (panel, (name, get)) in metrics.iter().enumerate() {
            let x0 = 60.0 + panel as f64 * (w / 2.0);
            let (pw, ph, y0) = (w / 2.0 - 100.0, h - 110.0, 40.0);
            let values: Vec<f64> = rows.iter().flat_map(|r| [get(&r.baseline), get(&r.kg)]).collect();
            let top = values.iter().cloned().fold(0.0f64, f64::max).max(1e-12) * 1.1;
            let hs: Vec<usize> = rows.iter().map(|r| r.horizon).collect();
            let (hmin, hmax) = (
                *hs.iter().min().unwrap_or(&1) as f64,
                *hs.iter().max().unwrap_or(&1) as f64,
            );
            let sx = |hz: usize| {
                if hmax > hmin {
                    x0 + (hz as f64 - hmin) / (hmax - hmin) * pw
                } else {
                    x0 + pw / 2.0
                }
            };
            let sy = |v: f64| y0 + ph - v / top * ph;
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="14">{target}: {name}</text>"#,
                x0 + pw / 2.0
            );
            let _ = writeln!(
                svg,
                r#"<path d="M{x0:.1},{y0:.1} V{:.1} H{:.1}" fill="none" stroke="black"/>"#,
                y0 + ph,
                x0 + pw
            );
            for &hz in &hs {
                let _ = writeln!(
                    svg,
                    r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{hz}</text>"#,
                    sx(hz),
                    y0 + ph + 16.0
                );
            }
            for frac in [0.0, 0.5, 1.0] {
                let v = top * frac;
                let _ = writeln!(
                    svg,
                    r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.3}</text>"#,
                    x0 - 6.0,
                    sy(v) + 4.0
                );
            }
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">horizon (months ahead)</text>"#,
                x0 + pw / 2.0,
                y0 + ph + 34.0
            );
            let series: [(&str, &str, &str, fn(&ReportRow) -> &ModelResult); 2] = [
                ("baseline", "#888888", "6,4", |r| &r.baseline),
                ("KG-based", "#c0392b", "none", |r| &r.kg),
            ];
            for (i, (label, colour, dash, pick)) in series.iter().enumerate() {
                let points: Vec<String> = rows
                    .iter()
                    .map(|r| format!("{:.1},{:.1}", sx(r.horizon), sy(get(pick(r)))))
                    .collect();
                let _ = writeln!(
                    svg,
                    r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="2" stroke-dasharray="{dash}"/>"#,
                    points.join(" ")
                );
                let ly = h - 30.0 + i as f64 * 16.0 - 16.0;
                let _ = writeln!(
                    svg,
                    r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{colour}" stroke-width="2" stroke-dasharray="{dash}"/><text x="{:.1}" y="{:.1}">{label}</text>"#,
                    x0 + pw - 110.0,
                    x0 + pw - 80.0,
                    x0 + pw - 74.0,
                    ly + 4.0
                );
            }
        }
        svg.push_str("</svg>\n");
        svg
    }

    /// Writes report.csv, report.json and one `<target>_errors.svg` per
    /// target into `dir`, returning the paths in that order.
    pub fn write_all(&self, dir: &Path) -> Result<Vec<PathBuf>, ForecastError> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let mut put = |name: String, body: String| -> Result<(), ForecastError> {
            let path = dir.join(name);
            std::fs::write(&path, body)?;
            written.push(path);
            Ok(())
        };
        put("report.csv".into(), self.to_csv())?;
        put("report.json".into(), self.to_json())?;
        for t in self.targets() {
            let stem: String = t
                .chars()
                .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
                .collect();
            put(format!("{stem}_errors.svg"), self.plot_svg(t))?;
        }
        Ok(written)
    }
}
