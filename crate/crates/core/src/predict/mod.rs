//! Built-in predictors and metrics.
//!
//! Two model families are available: ridge regression over an encoded
//! design ([`encode`], [`ridge`]) and a histogram GBDT that reads numeric,
//! categorical and missing cells natively ([`gbdt`]). Every non-target
//! column of the training table is a feature.

pub mod encode;
pub mod gbdt;
pub mod metrics;
pub mod ridge;

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::{DType, Table};

pub use encode::{encode_features, Encoder, ONE_HOT_MAX_LEVELS, TARGET_SMOOTHING};
pub use gbdt::{GbdtModel, GbdtParams};
pub use metrics::{auc, average_ranks, r2, Metric};
pub use ridge::{default_alpha_grid, fit_ridge, RidgeFit};

pub const MODEL_MAGIC: &[u8; 8] = b"LKJMODEL";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Task {
    Regression,
    BinaryClassification,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Regression => "regression",
            Task::BinaryClassification => "classification",
        }
    }

    pub fn metric(self) -> Metric {
        match self {
            Task::Regression => Metric::R2,
            Task::BinaryClassification => Metric::Auc,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "regression" => Ok(Task::Regression),
            "classification" | "binary" => Ok(Task::BinaryClassification),
            other => Err(Error::InvalidParameter(format!("unknown task `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelKind {
    Ridge { alpha_grid: Vec<f64> },
    GbdtLite(GbdtParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorConfig {
    pub kind: ModelKind,
    pub task: Task,
}

impl PredictorConfig {
    pub fn ridge(task: Task) -> PredictorConfig {
        PredictorConfig {
            kind: ModelKind::Ridge {
                alpha_grid: default_alpha_grid(),
            },
            task,
        }
    }

    pub fn gbdt(task: Task) -> PredictorConfig {
        PredictorConfig {
            kind: ModelKind::GbdtLite(GbdtParams::default()),
            task,
        }
    }

    /// `ridge` or `gbdt`.
    pub fn from_name(name: &str, task: Task) -> Result<PredictorConfig> {
        match name.to_ascii_lowercase().as_str() {
            "ridge" => Ok(PredictorConfig::ridge(task)),
            "gbdt" | "gbdt_lite" | "gbdtlite" => Ok(PredictorConfig::gbdt(task)),
            other => Err(Error::InvalidParameter(format!("unknown predictor `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            ModelKind::Ridge { .. } => "ridge",
            ModelKind::GbdtLite(_) => "gbdt",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            ModelKind::Ridge { alpha_grid } => {
                if alpha_grid.is_empty() || alpha_grid.iter().any(|a| !(*a > 0.0)) {
                    return Err(Error::InvalidParameter(
                        "alpha grid must hold positive values".into(),
                    ));
                }
                Ok(())
            }
            ModelKind::GbdtLite(p) => p.validate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Learned {
    Constant(f64),
    Ridge { encoder: Encoder, fit: RidgeFit },
    Gbdt(GbdtModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    config: PredictorConfig,
    target: String,
    schema: Vec<(String, DType)>,
    /// Sorted training labels for classification.
    classes: Vec<String>,
    learned: Learned,
    working_bytes: usize,
}

/// Rows with a non-null target and the numeric target per row. For
/// classification the positive class is the lexicographically larger
/// canonical label (or `positive` when given) and targets are {0, 1}.
fn targets(
    table: &Table,
    target: &str,
    task: Task,
    positive: Option<&str>,
) -> Result<(Vec<usize>, Vec<f64>, Vec<String>)> {
    let col = table.require_column(target)?;
    let mut rows = Vec::new();
    let mut y = Vec::new();
    match task {
        Task::Regression => {
            if col.dtype() != DType::Numeric {
                return Err(Error::Model(format!(
                    "regression target `{target}` is not numeric"
                )));
            }
            for (i, c) in col.cells().iter().enumerate() {
                if let Some(v) = c.as_f64() {
                    rows.push(i);
                    y.push(v);
                }
            }
            if rows.is_empty() {
                return Err(Error::Model(format!("target `{target}` is all null")));
            }
            Ok((rows, y, Vec::new()))
        }
        Task::BinaryClassification => {
            let keys: Vec<Option<String>> = col.cells().iter().map(|c| c.canonical_key()).collect();
            let classes: BTreeSet<&str> = keys.iter().flatten().map(String::as_str).collect();
            if classes.is_empty() {
                return Err(Error::Model(format!("target `{target}` is all null")));
            }
            if positive.is_none() && classes.len() > 2 {
                return Err(Error::Model(format!(
                    "target `{target}` has {} classes; only binary tasks are supported",
                    classes.len()
                )));
            }
            let classes: Vec<String> = classes.into_iter().map(String::from).collect();
            let pos = positive.unwrap_or_else(|| classes.last().unwrap());
            for (i, k) in keys.iter().enumerate() {
                if let Some(k) = k {
                    rows.push(i);
                    y.push((k == pos) as u8 as f64);
                }
            }
            Ok((rows, y, classes))
        }
    }
}

/// Training rows and targets used by [`fit`].
pub fn training_targets(table: &Table, target: &str, task: Task) -> Result<(Vec<usize>, Vec<f64>)> {
    targets(table, target, task, None).map(|(r, y, _)| (r, y))
}

/// Fits a predictor on every non-target column of `table`. A table
/// without feature columns yields the constant (mean) model.
pub fn fit(table: &Table, target: &str, cfg: &PredictorConfig, seed: u64) -> Result<FittedModel> {
    cfg.validate()?;
    let (rows, y, classes) = targets(table, target, cfg.task, None)?;
    let features = table.drop_columns(&[target]).take(&rows);
    let schema: Vec<(String, DType)> = features
        .columns()
        .iter()
        .map(|c| (c.name().to_string(), c.dtype()))
        .collect();
    let n = y.len();
    let mean = y.iter().sum::<f64>() / n as f64;
    let classification = cfg.task == Task::BinaryClassification;

    let (learned, working_bytes) = if features.n_cols() == 0 {
        (Learned::Constant(mean), 8 * n)
    } else {
        match &cfg.kind {
            ModelKind::Ridge { alpha_grid } => {
                let encoder = Encoder::fit(&features, &y)?;
                let x = encoder.transform(&features)?;
                let p = x.ncols();
                let yt: Vec<f64> = if classification {
                    y.iter().map(|v| 2.0 * v - 1.0).collect()
                } else {
                    y.clone()
                };
                let fit = fit_ridge(&x, &yt, alpha_grid)?;
                let k = n.min(p);
                (Learned::Ridge { encoder, fit }, 8 * (2 * n * p + k * k + n))
            }
            ModelKind::GbdtLite(params) => {
                let m = GbdtModel::fit(&features, &y, classification, params, seed)?;
                (
                    Learned::Gbdt(m),
                    GbdtModel::working_bytes(n, features.n_cols()),
                )
            }
        }
    };
    Ok(FittedModel {
        config: cfg.clone(),
        target: target.to_string(),
        schema,
        classes,
        learned,
        working_bytes,
    })
}

impl FittedModel {
    pub fn config(&self) -> &PredictorConfig {
        &self.config
    }

    pub fn task(&self) -> Task {
        self.config.task
    }

    pub fn target(&self) -> &str {
        &self.target
    }

    pub fn schema(&self) -> &[(String, DType)] {
        &self.schema
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.learned, Learned::Constant(_))
    }

    pub fn gbdt(&self) -> Option<&GbdtModel> {
        match &self.learned {
            Learned::Gbdt(m) => Some(m),
            _ => None,
        }
    }

    pub fn ridge(&self) -> Option<&RidgeFit> {
        match &self.learned {
            Learned::Ridge { fit, .. } => Some(fit),
            _ => None,
        }
    }

    /// Approximate bytes of the training design built during the fit.
    pub fn working_bytes(&self) -> usize {
        self.working_bytes
    }

    pub fn positive_label(&self) -> Option<&str> {
        self.classes.last().map(String::as_str)
    }

    fn check_schema(&self, table: &Table) -> Result<()> {
        for (name, dtype) in &self.schema {
            let col = table.column(name).ok_or_else(|| {
                Error::SchemaMismatch(format!("feature column `{name}` is missing"))
            })?;
            if col.dtype() != *dtype {
                return Err(Error::SchemaMismatch(format!(
                    "feature column `{name}` is {} but the model was trained on {dtype}",
                    col.dtype()
                )));
            }
        }
        Ok(())
    }

    /// Predictions for every row: values for regression, and for
    /// classification a score increasing with the positive class.
    pub fn predict(&self, table: &Table) -> Result<Vec<f64>> {
        self.check_schema(table)?;
        match &self.learned {
            Learned::Constant(c) => {
                let v = if self.config.task == Task::BinaryClassification
                    && matches!(self.config.kind, ModelKind::Ridge { .. })
                {
                    2.0 * c - 1.0
                } else {
                    *c
                };
                Ok(vec![v; table.n_rows()])
            }
            Learned::Ridge { encoder, fit } => Ok(fit.predict(&encoder.transform(table)?)),
            Learned::Gbdt(m) => m.predict(table),
        }
    }

    /// Score at which a row is labeled positive.
    pub fn decision_threshold(&self) -> f64 {
        match self.config.kind {
            ModelKind::Ridge { .. } => 0.0,
            ModelKind::GbdtLite(_) => 0.5,
        }
    }

    /// Predicted class labels (classification only).
    pub fn predict_labels(&self, table: &Table) -> Result<Vec<String>> {
        if self.config.task != Task::BinaryClassification {
            return Err(Error::Model("labels exist only for classification".into()));
        }
        let pos = self.classes.last().cloned().unwrap_or_default();
        let neg = if self.classes.len() > 1 {
            self.classes[0].clone()
        } else {
            String::new()
        };
        let t = self.decision_threshold();
        Ok(self
            .predict(table)?
            .into_iter()
            .map(|s| if s > t { pos.clone() } else { neg.clone() })
            .collect())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&MODEL_FORMAT_VERSION.to_le_bytes());
        let body = bincode::serialize(self).map_err(|e| Error::Model(e.to_string()))?;
        out.extend_from_slice(&body);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<FittedModel> {
        if bytes.len() < 12 || &bytes[..8] != MODEL_MAGIC {
            return Err(Error::Model("not a model file".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != MODEL_FORMAT_VERSION {
            return Err(Error::Model(format!(
                "model format version {version} unsupported (expected {MODEL_FORMAT_VERSION})"
            )));
        }
        bincode::deserialize(&bytes[12..]).map_err(|e| Error::Model(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<FittedModel> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        FittedModel::from_bytes(&bytes)
    }
}

/// Evaluates `model` on the rows of `table` with a non-null target.
pub fn score(model: &FittedModel, table: &Table, target: &str, metric: Metric) -> Result<f64> {
    if metric == Metric::Auc && model.task() != Task::BinaryClassification {
        return Err(Error::InvalidParameter("AUC needs a classification model".into()));
    }
    let (rows, y, _) = targets(table, target, model.task(), model.positive_label())?;
    let pred = model.predict(&table.take(&rows))?;
    metric.compute(&y, &pred)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::Column;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn regression_table(n: usize, seed: u64) -> Table {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c: Vec<&str> = (0..n).map(|_| ["p", "q"][rng.gen_range(0..2)]).collect();
        let y: Vec<f64> = x
            .iter()
            .zip(&c)
            .map(|(x, c)| 3.0 * x + if *c == "p" { 1.0 } else { -1.0 })
            .collect();
        Table::new(
            "t",
            vec![
                Column::numeric("x", x.into_iter().map(Some)),
                Column::categorical("c", c.into_iter().map(Some)),
                Column::numeric("y", y.into_iter().map(Some)),
            ],
        )
        .unwrap()
    }

    #[test]
    fn both_models_fit_a_simple_signal() {
        let t = regression_table(400, 1);
        for cfg in [PredictorConfig::ridge(Task::Regression), PredictorConfig::gbdt(Task::Regression)] {
            let m = fit(&t, "y", &cfg, 0).unwrap();
            let s = score(&m, &t, "y", Metric::R2).unwrap();
            assert!(s > 0.9, "{} r2={s}", cfg.name());
        }
    }

    #[test]
    fn schema_mismatch_rejected() {
        let t = regression_table(100, 2);
        let m = fit(&t, "y", &PredictorConfig::ridge(Task::Regression), 0).unwrap();
        let missing = t.drop_columns(&["x"]);
        assert!(matches!(m.predict(&missing), Err(Error::SchemaMismatch(_))));
        let retyped = t
            .drop_columns(&["x"])
            .with_columns(vec![Column::categorical("x", (0..100).map(|_| Some("a")))])
            .unwrap();
        assert!(matches!(m.predict(&retyped), Err(Error::SchemaMismatch(_))));
    }

    #[test]
    fn featureless_table_is_constant() {
        let t = Table::new("t", vec![Column::numeric("y", [1.0, 2.0, 6.0].map(Some))]).unwrap();
        let m = fit(&t, "y", &PredictorConfig::gbdt(Task::Regression), 0).unwrap();
        assert!(m.is_constant());
        assert_eq!(m.predict(&t).unwrap(), vec![3.0; 3]);
        assert_eq!(score(&m, &t, "y", Metric::R2).unwrap(), 0.0);
    }

    #[test]
    fn classification_labels_and_auc() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<f64> = (0..300).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<&str> = x.iter().map(|v| if *v > 0.1 { "yes" } else { "no" }).collect();
        let t = Table::new(
            "t",
            vec![
                Column::numeric("x", x.iter().copied().map(Some)),
                Column::categorical("y", y.iter().copied().map(Some)),
            ],
        )
        .unwrap();
        for cfg in [
            PredictorConfig::ridge(Task::BinaryClassification),
            PredictorConfig::gbdt(Task::BinaryClassification),
        ] {
            let m = fit(&t, "y", &cfg, 0).unwrap();
            assert_eq!(m.positive_label(), Some("yes"));
            assert!(score(&m, &t, "y", Metric::Auc).unwrap() > 0.95);
            let labels = m.predict_labels(&t).unwrap();
            let acc = labels.iter().zip(&y).filter(|(a, b)| a == b).count();
            assert!(acc > 270, "{} acc={acc}", cfg.name());
        }
    }

    #[test]
    fn model_bytes_roundtrip() {
        let t = regression_table(200, 3);
        for cfg in [PredictorConfig::ridge(Task::Regression), PredictorConfig::gbdt(Task::Regression)] {
            let m = fit(&t, "y", &cfg, 0).unwrap();
            let bytes = m.to_bytes().unwrap();
            let back = FittedModel::from_bytes(&bytes).unwrap();
            assert_eq!(back, m);
            assert_eq!(back.to_bytes().unwrap(), bytes);
            assert_eq!(fit(&t, "y", &cfg, 0).unwrap().to_bytes().unwrap(), bytes);
        }
        assert!(FittedModel::from_bytes(b"LKJMODEL\x09\0\0\0").is_err());
    }

    #[test]
    fn multiclass_is_rejected() {
        let t = Table::new(
            "t",
            vec![
                Column::numeric("x", [1.0, 2.0, 3.0].map(Some)),
                Column::categorical("y", ["a", "b", "c"].map(Some)),
            ],
        )
        .unwrap();
        assert!(fit(&t, "y", &PredictorConfig::ridge(Task::BinaryClassification), 0).is_err());
    }
}
