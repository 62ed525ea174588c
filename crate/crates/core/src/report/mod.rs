//! CSV tables and SVG figures. Figures are drawn from the CSV files only.

mod svg;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::runner::AnalysisReport;
use crate::stats::RegressionResult;

pub use svg::{render_curves, render_deltas, render_regression_table, render_scatter};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("i/o error at {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv error in {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("cannot render: {0}")]
    Render(String),
}

pub const CURVES_CSV: &str = "curves.csv";
pub const AUC_CSV: &str = "auc.csv";
pub const DELTAS_CSV: &str = "deltas.csv";
pub const PAIRED_DELTAS_CSV: &str = "paired_deltas.csv";
pub const QUALITY_CSV: &str = "data_quality.csv";
pub const DIFFICULTY_IMAGES_CSV: &str = "difficulty_images.csv";
pub const DIFFICULTY_LEVELS_CSV: &str = "difficulty_levels.csv";
pub const CORRELATION_CSV: &str = "correlation.csv";
pub const REGRESSION_DIFFICULTY_CSV: &str = "regression_difficulty.csv";
pub const REGRESSION_SIMPLICITY_CSV: &str = "regression_simplicity.csv";
pub const ANALYSIS_JSON: &str = "analysis.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub sweep: String,
    pub label: String,
    pub n: u32,
    pub mean_p_wrong: f64,
    /// Empty when fewer than two trials.
    pub stderr: Option<f64>,
    pub trials: usize,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucRow {
    pub sweep: String,
    pub label: String,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub label: String,
    pub name: String,
    pub auc_condition_1: f64,
    pub auc_condition_2: f64,
    pub delta: f64,
    pub pairs: usize,
    pub t_statistic: f64,
    pub p_value: f64,
    pub df: usize,
    pub degenerate: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedDeltaRow {
    pub label: String,
    pub name: String,
    pub pair: usize,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityRow {
    pub sweep: String,
    pub n: u32,
    pub planned: usize,
    pub ok: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyImageRow {
    pub stimulus_id: String,
    pub level: u8,
    pub difficulty: f64,
    pub simplicity: f64,
    pub difficulty_norm: f64,
    pub logit_correct: f64,
    pub p_correct_0: f64,
    pub auc: f64,
    pub passed: bool,
    /// Min-max normalized AUC over passing images; empty for flagged ones.
    pub auc_normalized: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRow {
    pub level: u8,
    pub mean_auc: f64,
    pub images: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub scope: String,
    pub rho: f64,
    pub p_value: f64,
    pub n: usize,
}

/// One row of a regression table: Task, Variable, β, SE, t, p.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionRow {
    #[serde(rename = "Task")]
    pub task: String,
    #[serde(rename = "Variable")]
    pub variable: String,
    #[serde(rename = "β")]
    pub beta: f64,
    #[serde(rename = "SE")]
    pub se: f64,
    #[serde(rename = "t")]
    pub t: f64,
    #[serde(rename = "p")]
    pub p: f64,
}

pub fn regression_rows(task: &str, fit: &RegressionResult<f64>) -> Vec<RegressionRow> {
    (0..fit.terms.len())
        .filter(|&i| fit.terms[i] != "intercept")
        .map(|i| RegressionRow {
            task: task.to_string(),
            variable: fit.terms[i].clone(),
            beta: fit.coefficients[i],
            se: fit.standard_errors[i],
            t: fit.t_values[i],
            p: fit.p_values[i],
        })
        .collect()
}

pub fn write_csv<R: Serialize>(path: &Path, rows: &[R], header: &[&str]) -> Result<(), ReportError> {
    let csv_err = |source| ReportError::Csv { path: path.to_path_buf(), source };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    if rows.is_empty() && !header.is_empty() {
        w.write_record(header).map_err(csv_err)?;
    }
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|source| ReportError::Io { path: path.to_path_buf(), source })
}

pub fn read_csv<R: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<R>, ReportError> {
    let csv_err = |source| ReportError::Csv { path: path.to_path_buf(), source };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().collect::<Result<Vec<R>, _>>().map_err(csv_err)
}

/// Writes every table of `report` into `dir`; returns the paths written.
pub fn export_tables(report: &AnalysisReport, dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    fs::create_dir_all(dir).map_err(|source| ReportError::Io { path: dir.to_path_buf(), source })?;
    let mut written = Vec::new();
    let mut put = |name: &str, f: &dyn Fn(&Path) -> Result<(), ReportError>| {
        let path = dir.join(name);
        f(&path)?;
        written.push(path);
        Ok::<_, ReportError>(())
    };

    let curve_rows: Vec<CurveRow> = report
        .curves
        .iter()
        .flat_map(|c| {
            (0..c.curve.n_grid.len()).map(move |i| CurveRow {
                sweep: c.sweep.clone(),
                label: c.label.clone(),
                n: c.curve.n_grid[i],
                mean_p_wrong: c.curve.mean_p_wrong[i],
                stderr: c.curve.stderr[i],
                trials: c.curve.trials_per_point[i],
                auc: c.curve.auc,
            })
        })
        .collect();
    put(CURVES_CSV, &|p| write_csv(p, &curve_rows, &["sweep", "label", "n", "mean_p_wrong", "stderr", "trials", "auc"]))?;
    let auc_rows: Vec<AucRow> = report
        .curves
        .iter()
        .map(|c| AucRow { sweep: c.sweep.clone(), label: c.label.clone(), auc: c.curve.auc })
        .collect();
    put(AUC_CSV, &|p| write_csv(p, &auc_rows, &["sweep", "label", "auc"]))?;

    let delta_rows: Vec<DeltaRow> = report
        .deltas
        .iter()
        .map(|d| DeltaRow {
            label: d.score.label.slug().into(),
            name: d.name.clone(),
            auc_condition_1: d.score.auc_condition_1,
            auc_condition_2: d.score.auc_condition_2,
            delta: d.score.delta,
            pairs: d.score.paired_samples.len(),
            t_statistic: d.test.statistic,
            p_value: d.test.p_value,
            df: d.test.df,
            degenerate: d
                .test
                .degenerate
                .map(|g| serde_json::to_value(g).unwrap().as_str().unwrap_or_default().to_string())
                .unwrap_or_default(),
        })
        .collect();
    let delta_header = [
        "label", "name", "auc_condition_1", "auc_condition_2", "delta", "pairs", "t_statistic", "p_value", "df",
        "degenerate",
    ];
    put(DELTAS_CSV, &|p| write_csv(p, &delta_rows, &delta_header))?;
    let paired: Vec<PairedDeltaRow> = report
        .deltas
        .iter()
        .flat_map(|d| {
            d.score.paired_samples.iter().enumerate().map(move |(pair, &delta)| PairedDeltaRow {
                label: d.score.label.slug().into(),
                name: d.name.clone(),
                pair,
                delta,
            })
        })
        .collect();
    put(PAIRED_DELTAS_CSV, &|p| write_csv(p, &paired, &["label", "name", "pair", "delta"]))?;

    let quality: Vec<QualityRow> = report
        .quality
        .iter()
        .map(|q| QualityRow { sweep: q.sweep.clone(), n: q.n, planned: q.planned, ok: q.ok, failed: q.failed })
        .collect();
    put(QUALITY_CSV, &|p| write_csv(p, &quality, &["sweep", "n", "planned", "ok", "failed"]))?;

    if let Some(d) = &report.difficulty {
        let passing: Vec<f64> = d.rows.iter().filter(|r| r.passed).map(|r| r.auc).collect();
        let norm = crate::stats::min_max_normalize(&passing);
        let mut k = 0;
        let images: Vec<DifficultyImageRow> = d
            .rows
            .iter()
            .map(|r| {
                let auc_normalized = r.passed.then(|| {
                    k += 1;
                    norm.values[k - 1]
                });
                DifficultyImageRow {
                    stimulus_id: r.stimulus_id.clone(),
                    level: r.level,
                    difficulty: r.difficulty,
                    simplicity: r.simplicity,
                    difficulty_norm: r.difficulty_norm,
                    logit_correct: r.logit_correct,
                    p_correct_0: r.p_correct_0,
                    auc: r.auc,
                    passed: r.passed,
                    auc_normalized,
                }
            })
            .collect();
        put(DIFFICULTY_IMAGES_CSV, &|p| write_csv(p, &images, &[]))?;
        let levels: Vec<LevelRow> = d
            .level_means
            .iter()
            .map(|l| LevelRow { level: l.level, mean_auc: l.mean_auc, images: l.images })
            .collect();
        put(DIFFICULTY_LEVELS_CSV, &|p| write_csv(p, &levels, &["level", "mean_auc", "images"]))?;
        let corr = vec![
            CorrelationRow {
                scope: "level_vs_mean_auc".into(),
                rho: d.spearman_level.rho,
                p_value: d.spearman_level.p_value,
                n: d.spearman_level.n,
            },
            CorrelationRow {
                scope: "image_difficulty_vs_auc".into(),
                rho: d.spearman_image.rho,
                p_value: d.spearman_image.p_value,
                n: d.spearman_image.n,
            },
        ];
        put(CORRELATION_CSV, &|p| write_csv(p, &corr, &[]))?;
        let task = report.task.slug();
        let header = ["Task", "Variable", "β", "SE", "t", "p"];
        let rd = regression_rows(task, &d.regression_difficulty);
        put(REGRESSION_DIFFICULTY_CSV, &|p| write_csv(p, &rd, &header))?;
        let rs = regression_rows(task, &d.regression_simplicity);
        put(REGRESSION_SIMPLICITY_CSV, &|p| write_csv(p, &rs, &header))?;
    }

    let json = serde_json::to_string_pretty(report).expect("report serializes");
    put(ANALYSIS_JSON, &|p| fs::write(p, &json).map_err(|source| ReportError::Io { path: p.to_path_buf(), source }))?;
    Ok(written)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FigureKind {
    CurveFamily,
    BarDelta,
    ScatterDifficulty,
    TableRegression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureSpec {
    pub kind: FigureKind,
    pub inputs: Vec<PathBuf>,
    pub title: String,
    pub output: PathBuf,
}

/// Renders one figure from its CSV inputs and writes the SVG.
pub fn render_figure(spec: &FigureSpec) -> Result<String, ReportError> {
    for input in &spec.inputs {
        if !input.exists() {
            return Err(ReportError::Render(format!("missing input {}", input.display())));
        }
    }
    let first = spec.inputs.first().ok_or_else(|| ReportError::Render("figure has no inputs".into()))?;
    let svg = match spec.kind {
        FigureKind::CurveFamily => render_curves(&spec.title, &read_csv::<CurveRow>(first)?)?,
        FigureKind::BarDelta => render_deltas(&spec.title, &read_csv::<DeltaRow>(first)?)?,
        FigureKind::ScatterDifficulty => render_scatter(&spec.title, &read_csv::<DifficultyImageRow>(first)?)?,
        FigureKind::TableRegression => {
            let mut rows = Vec::new();
            for input in &spec.inputs {
                rows.extend(read_csv::<RegressionRow>(input)?);
            }
            render_regression_table(&spec.title, &rows)?
        }
    };
    if let Some(dir) = spec.output.parent() {
        fs::create_dir_all(dir).map_err(|source| ReportError::Io { path: dir.to_path_buf(), source })?;
    }
    fs::write(&spec.output, &svg).map_err(|source| ReportError::Io { path: spec.output.clone(), source })?;
    Ok(svg)
}

/// Figure specs for whichever tables exist in `analysis_dir`.
pub fn default_figures(analysis_dir: &Path, figures_dir: &Path, title: &str) -> Vec<FigureSpec> {
    let mut specs = Vec::new();
    let has_rows = |name: &str| {
        fs::read_to_string(analysis_dir.join(name)).map(|t| t.lines().count() > 1).unwrap_or(false)
    };
    if has_rows(CURVES_CSV) {
        specs.push(FigureSpec {
            kind: FigureKind::CurveFamily,
            inputs: vec![analysis_dir.join(CURVES_CSV)],
            title: format!("{title}: conformity curves"),
            output: figures_dir.join("curves.svg"),
        });
    }
    if has_rows(DELTAS_CSV) {
        specs.push(FigureSpec {
            kind: FigureKind::BarDelta,
            inputs: vec![analysis_dir.join(DELTAS_CSV)],
            title: format!("{title}: AUC differences"),
            output: figures_dir.join("deltas.svg"),
        });
    }
    if has_rows(DIFFICULTY_IMAGES_CSV) {
        specs.push(FigureSpec {
            kind: FigureKind::ScatterDifficulty,
            inputs: vec![analysis_dir.join(DIFFICULTY_IMAGES_CSV)],
            title: format!("{title}: difficulty vs performance"),
            output: figures_dir.join("difficulty_scatter.svg"),
        });
    }
    if has_rows(REGRESSION_DIFFICULTY_CSV) {
        specs.push(FigureSpec {
            kind: FigureKind::TableRegression,
            inputs: vec![analysis_dir.join(REGRESSION_DIFFICULTY_CSV), analysis_dir.join(REGRESSION_SIMPLICITY_CSV)],
            title: format!("{title}: regression of normalized conformity"),
            output: figures_dir.join("regression.svg"),
        });
    }
    specs
}

/// Renders all default figures; returns the SVG paths.
pub fn render_all(analysis_dir: &Path, figures_dir: &Path, title: &str) -> Result<Vec<PathBuf>, ReportError> {
    let specs = default_figures(analysis_dir, figures_dir, title);
    for spec in &specs {
        render_figure(spec)?;
    }
    Ok(specs.into_iter().map(|s| s.output).collect())
}
