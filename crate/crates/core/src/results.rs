//! Result documents: one JSON record per experiment carrying the resolved
//! configuration, per-seed metrics, and seed aggregates, plus the table and
//! series formatters the report command prints. Formatters only read stored
//! fields; nothing is recomputed from counts at print time.

use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::trainer::{aggregate_seeds, AggregateReport};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub metrics: MetricsReport,
    /// Parameter count for the graph models, estimator count for ensembles
    /// (selected count for QBoost).
    pub model_size: usize,
    pub train_time_s: f64,
    pub infer_time_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepF2 {
    pub step: u32,
    /// Mean test F2 at this step across seeds.
    pub f2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub schema_version: u32,
    pub model_kind: String,
    /// Full resolved configuration for provenance.
    pub config: serde_json::Value,
    pub per_seed: Vec<SeedResult>,
    /// Present with two or more seeds.
    pub aggregate: Option<AggregateReport>,
    pub mean_model_size: f64,
    pub mean_train_time_s: f64,
    pub mean_infer_time_s: f64,
    pub per_step_f2: Vec<StepF2>,
}

impl ResultDocument {
    pub fn new(
        model_kind: &str,
        config: serde_json::Value,
        per_seed: Vec<SeedResult>,
        per_step_f2: Vec<StepF2>,
    ) -> Result<Self> {
        if per_seed.is_empty() {
            return Err(Error::Report("a result document needs at least one seed".into()));
        }
        let reports: Vec<MetricsReport> = per_seed.iter().map(|s| s.metrics).collect();
        let aggregate = if reports.len() >= 2 {
            Some(aggregate_seeds(&reports)?)
        } else {
            None
        };
        let n = per_seed.len() as f64;
        let mean = |pick: fn(&SeedResult) -> f64| per_seed.iter().map(pick).sum::<f64>() / n;
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            model_kind: model_kind.to_string(),
            config,
            mean_model_size: mean(|s| s.model_size as f64),
            mean_train_time_s: mean(|s| s.train_time_s),
            mean_infer_time_s: mean(|s| s.infer_time_s),
            per_seed,
            aggregate,
            per_step_f2,
        })
    }

    /// Headline test F2: the seed mean, or the single seed's value.
    pub fn headline_f2(&self) -> f64 {
        match &self.aggregate {
            Some(a) => a.f2.mean,
            None => self.per_seed[0].metrics.f2,
        }
    }

    fn headline(&self, pick: fn(&MetricsReport) -> f64, agg: fn(&AggregateReport) -> f64) -> f64 {
        match &self.aggregate {
            Some(a) => agg(a),
            None => pick(&self.per_seed[0].metrics),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::Report(format!("serializing result document: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Self = serde_json::from_str(text)
            .map_err(|e| Error::Report(format!("parsing result document: {e}")))?;
        if doc.schema_version != SCHEMA_VERSION {
            return Err(Error::Report(format!(
                "incompatible schema version {} (supported: {SCHEMA_VERSION})",
                doc.schema_version
            )));
        }
        Ok(doc)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Aligned comparison table sorted by headline F2, best first. `±` columns
/// appear when a document carries an aggregate.
pub fn format_table(docs: &[ResultDocument]) -> Result<String> {
    if docs.is_empty() {
        return Err(Error::Report("no result documents to tabulate".into()));
    }
    let mut order: Vec<&ResultDocument> = docs.iter().collect();
    order.sort_by(|a, b| b.headline_f2().total_cmp(&a.headline_f2()));

    let name_width = order
        .iter()
        .map(|d| d.model_kind.len())
        .chain(["model".len()])
        .max()
        .unwrap();
    let mut out = format!(
        "{:<name_width$}  {:>15} {:>15} {:>15} {:>15} {:>9} {:>9} {:>9}\n",
        "model", "F2", "F1", "precision", "recall", "size", "train_s", "infer_s"
    );
    for doc in order {
        let cell = |pick: fn(&MetricsReport) -> f64,
                    mean: fn(&AggregateReport) -> f64,
                    std: fn(&AggregateReport) -> f64| match &doc.aggregate {
            Some(a) => format!("{:.4} ± {:.4}", mean(a), std(a)),
            None => format!("{:.4}", pick(&doc.per_seed[0].metrics)),
        };
        out.push_str(&format!(
            "{:<name_width$}  {:>15} {:>15} {:>15} {:>15} {:>9.1} {:>9.2} {:>9.3}\n",
            doc.model_kind,
            cell(|m| m.f2, |a| a.f2.mean, |a| a.f2.std),
            cell(|m| m.f1, |a| a.f1.mean, |a| a.f1.std),
            cell(|m| m.precision, |a| a.precision.mean, |a| a.precision.std),
            cell(|m| m.recall, |a| a.recall.mean, |a| a.recall.std),
            doc.mean_model_size,
            doc.mean_train_time_s,
            doc.mean_infer_time_s,
        ));
    }
    Ok(out)
}

/// Plot-ready per-time-step series: `step,f2` with a header line.
pub fn step_series_text(doc: &ResultDocument) -> String {
    let mut out = String::from("step,f2\n");
    for row in &doc.per_step_f2 {
        out.push_str(&format!("{},{:.6}\n", row.step, row.f2));
    }
    out
}

// Used by tests and the report command to confirm headline extraction stays
// consistent with the aggregate fields.
impl ResultDocument {
    pub fn headline_row(&self) -> (f64, f64, f64, f64) {
        (
            self.headline_f2(),
            self.headline(|m| m.f1, |a| a.f1.mean),
            self.headline(|m| m.precision, |a| a.precision.mean),
            self.headline(|m| m.recall, |a| a.recall.mean),
        )
    }
}
