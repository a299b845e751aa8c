//! Correlation, scaling, regression and feature importance over the
//! property/accuracy records of randomly structured models.

mod forest;
mod ridge;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::ExperimentRecord;
use crate::metrics::PROPERTY_NAMES;
use crate::numerics::Rng;

pub use forest::{fit_random_forest, ForestConfig, RandomForest};
pub use ridge::{fit_ridge, fit_ridge_cv, Ridge, RIDGE_LAMBDAS};

/// Product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::domain(format!(
            "pearson needs two equal-length lists of at least 2 values, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::domain("correlation with a constant list is undefined"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// `1 - SS_res / SS_tot`.
pub fn r_squared(pred: &[f64], actual: &[f64]) -> Result<f64> {
    if pred.len() != actual.len() || actual.len() < 2 {
        return Err(Error::domain(
            "r_squared needs two equal-length lists of at least 2 values",
        ));
    }
    let mean = actual.iter().sum::<f64>() / actual.len() as f64;
    let ss_tot: f64 = actual.iter().map(|a| (a - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::domain("r_squared against a constant target is undefined"));
    }
    let ss_res: f64 = pred.iter().zip(actual).map(|(p, a)| (a - p).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// R² of a held-out fit. A constant held-out target scores 1 for exact
/// predictions and 0 otherwise.
fn held_out_r_squared(pred: &[f64], actual: &[f64]) -> Result<f64> {
    match r_squared(pred, actual) {
        Err(Error::Domain(_)) if pred.len() == actual.len() && !actual.is_empty() => {
            let exact = pred.iter().zip(actual).all(|(p, a)| (p - a).abs() <= 1e-12);
            Ok(if exact { 1.0 } else { 0.0 })
        }
        r => r,
    }
}

/// Named feature columns, row-major, plus the target.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub target: Vec<f64>,
}

impl FeatureTable {
    pub fn new(columns: Vec<String>, rows: Vec<Vec<f64>>, target: Vec<f64>) -> Result<Self> {
        if rows.len() != target.len() {
            return Err(Error::input(format!(
                "{} rows but {} targets",
                rows.len(),
                target.len()
            )));
        }
        if let Some(r) = rows.iter().find(|r| r.len() != columns.len()) {
            return Err(Error::input(format!(
                "row of {} values for {} columns",
                r.len(),
                columns.len()
            )));
        }
        if rows.iter().flatten().chain(&target).any(|v| !v.is_finite()) {
            return Err(Error::input("feature table holds a non-finite value"));
        }
        Ok(FeatureTable { columns, rows, target })
    }

    /// The 23 properties against `test_acc`; all records must share one
    /// variant.
    pub fn from_records(records: &[ExperimentRecord]) -> Result<Self> {
        if let Some(first) = records.first() {
            if let Some(other) = records.iter().find(|r| r.variant != first.variant) {
                return Err(Error::input(format!(
                    "records mix variants {} and {}",
                    first.variant, other.variant
                )));
            }
        }
        FeatureTable::new(
            PROPERTY_NAMES.iter().map(|s| s.to_string()).collect(),
            records.iter().map(|r| r.properties.values().to_vec()).collect(),
            records.iter().map(|r| r.test_acc).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    /// Keeps the named columns, in the given order.
    pub fn select(&self, names: &[&str]) -> Result<Self> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| {
                self.columns
                    .iter()
                    .position(|c| c == n)
                    .ok_or_else(|| Error::input(format!("no column {n:?}")))
            })
            .collect::<Result<_>>()?;
        Ok(FeatureTable {
            columns: names.iter().map(|s| s.to_string()).collect(),
            rows: self.rows.iter().map(|r| idx.iter().map(|&i| r[i]).collect()).collect(),
            target: self.target.clone(),
        })
    }

    fn subset_rows(&self, idx: &[usize]) -> Self {
        FeatureTable {
            columns: self.columns.clone(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            target: idx.iter().map(|&i| self.target[i]).collect(),
        }
    }
}

/// Per-column `(v - min) / (max - min)`; constant columns become 0. The
/// target is left as is.
pub fn minmax_scale(table: &FeatureTable) -> FeatureTable {
    let mut out = table.clone();
    for c in 0..table.columns.len() {
        let (lo, hi) = table
            .rows
            .iter()
            .map(|r| r[c])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        for r in &mut out.rows {
            r[c] = if hi > lo { (r[c] - lo) / (hi - lo) } else { 0.0 };
        }
    }
    out
}

/// Shuffled split with `round(ratio · n)` training rows.
pub fn split(table: &FeatureTable, ratio: f64, rng: &mut Rng) -> Result<(FeatureTable, FeatureTable)> {
    if table.len() < 10 {
        return Err(Error::domain(format!(
            "splitting needs at least 10 rows, got {}",
            table.len()
        )));
    }
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::domain(format!("split ratio {ratio} outside [0, 1]")));
    }
    let mut order: Vec<usize> = (0..table.len()).collect();
    rng.shuffle(&mut order);
    let n_train = (ratio * table.len() as f64).round() as usize;
    Ok((
        table.subset_rows(&order[..n_train]),
        table.subset_rows(&order[n_train..]),
    ))
}

/// Pearson r of every feature column against the target; `None` where the
/// column is constant.
pub fn correlation_report(table: &FeatureTable) -> Result<Vec<(String, Option<f64>)>> {
    if table.is_empty() {
        return Err(Error::domain("correlation report of an empty table"));
    }
    let mut out = Vec::with_capacity(table.columns.len());
    for name in &table.columns {
        let col = table.column(name).expect("own column");
        let r = match pearson(&col, &table.target) {
            Ok(r) => Some(r),
            Err(Error::Domain(_)) if table.len() >= 2 && is_constant(&col) && !is_constant(&table.target) => None,
            Err(e) => return Err(e),
        };
        out.push((name.clone(), r));
    }
    Ok(out)
}

fn is_constant(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] == w[1])
}

/// The four property subsets used for the importance study.
pub const SUBSETS: [(&str, &[&str]); 4] = [
    ("all", &PROPERTY_NAMES),
    (
        "only_nodes_and_edges",
        &["nodes", "edges", "source_nodes", "sink_nodes"],
    ),
    (
        "without_nodes_and_edges",
        &[
            "layers",
            "diameter",
            "density",
            "average_shortest_path_length",
            "eccentricity_mean",
            "eccentricity_var",
            "eccentricity_std",
            "degree_mean",
            "degree_var",
            "degree_std",
            "closeness_mean",
            "closeness_var",
            "closeness_std",
            "nodes_betweenness_mean",
            "nodes_betweenness_var",
            "nodes_betweenness_std",
            "edge_betweenness_mean",
            "edge_betweenness_var",
            "edge_betweenness_std",
        ],
    ),
    (
        "only_variances",
        &[
            "eccentricity_var",
            "degree_var",
            "closeness_var",
            "nodes_betweenness_var",
            "edge_betweenness_var",
        ],
    ),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regressor {
    Ridge,
    RandomForest,
}

impl Regressor {
    pub fn as_str(self) -> &'static str {
        match self {
            Regressor::Ridge => "ridge",
            Regressor::RandomForest => "random_forest",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub regressor: Regressor,
    pub subset: String,
    pub r_squared: f64,
    /// Forest importances by column; empty for ridge.
    pub importances: Vec<(String, f64)>,
}

/// Min-max scales, splits 0.9/0.1, and fits both regressors on each
/// property subset. Every fit sees the same split.
pub fn regression_study(table: &FeatureTable, forest: &ForestConfig, seed: u64) -> Result<Vec<FitReport>> {
    if table.len() < 20 {
        return Err(Error::domain(format!(
            "regression study needs at least 20 rows, got {}",
            table.len()
        )));
    }
    let scaled = minmax_scale(table);
    let (train, test) = split(&scaled, 0.9, &mut Rng::new(seed))?;
    let mut out = Vec::new();
    for (name, columns) in SUBSETS {
        let (tr, te) = (train.select(columns)?, test.select(columns)?);
        let (ridge, _) = fit_ridge_cv(&tr.rows, &tr.target)?;
        out.push(FitReport {
            regressor: Regressor::Ridge,
            subset: name.to_string(),
            r_squared: held_out_r_squared(&ridge.predict_all(&te.rows), &te.target)?,
            importances: Vec::new(),
        });
        let rf = fit_random_forest(&tr.rows, &tr.target, forest, seed)?;
        out.push(FitReport {
            regressor: Regressor::RandomForest,
            subset: name.to_string(),
            r_squared: held_out_r_squared(&rf.predict_all(&te.rows), &te.target)?,
            importances: columns
                .iter()
                .map(|c| c.to_string())
                .zip(rf.importances().to_vec())
                .collect(),
        });
    }
    Ok(out)
}

/// Random-forest R² and importances for each property subset.
pub fn importance_circumstances(table: &FeatureTable, forest: &ForestConfig, seed: u64) -> Result<Vec<FitReport>> {
    Ok(regression_study(table, forest, seed)?
        .into_iter()
        .filter(|r| r.regressor == Regressor::RandomForest)
        .collect())
}

fn csv_out(path: &Path, banner: Option<&str>) -> Result<BufWriter<File>> {
    let mut out = BufWriter::new(File::create(path)?);
    if let Some(b) = banner {
        writeln!(out, "# {b}")?;
    }
    Ok(out)
}

/// `property,pearson_r`; constant properties leave the value empty.
pub fn write_correlations(path: &Path, report: &[(String, Option<f64>)], banner: Option<&str>) -> Result<()> {
    let mut out = csv_out(path, banner)?;
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(["property", "pearson_r"])?;
        for (name, r) in report {
            w.write_record([name.clone(), r.map(|v| v.to_string()).unwrap_or_default()])?;
        }
        w.flush()?;
    }
    out.flush()?;
    Ok(())
}

/// `regressor,subset,r_squared`.
pub fn write_r_squared(path: &Path, fits: &[FitReport], banner: Option<&str>) -> Result<()> {
    let mut out = csv_out(path, banner)?;
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(["regressor", "subset", "r_squared"])?;
        for f in fits {
            w.write_record([f.regressor.as_str(), &f.subset, &f.r_squared.to_string()])?;
        }
        w.flush()?;
    }
    out.flush()?;
    Ok(())
}

/// `property,importance` for one subset.
pub fn write_importances(path: &Path, fit: &FitReport, banner: Option<&str>) -> Result<()> {
    let mut out = csv_out(path, banner)?;
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(["property", "importance"])?;
        for (name, v) in &fit.importances {
            w.write_record([name.as_str(), &v.to_string()])?;
        }
        w.flush()?;
    }
    out.flush()?;
    Ok(())
}

/// Two-column `x,y` scatter data: one property against accuracy.
pub fn write_scatter(path: &Path, table: &FeatureTable, property: &str, banner: Option<&str>) -> Result<()> {
    let x = table
        .column(property)
        .ok_or_else(|| Error::input(format!("no column {property:?}")))?;
    let mut out = csv_out(path, banner)?;
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record([property, "test_acc"])?;
        for (a, b) in x.iter().zip(&table.target) {
            w.write_record([a.to_string(), b.to_string()])?;
        }
        w.flush()?;
    }
    out.flush()?;
    Ok(())
}

/// Correlations keyed by property, for lookups.
pub fn correlation_map(report: &[(String, Option<f64>)]) -> BTreeMap<String, Option<f64>> {
    report.iter().cloned().collect()
}
