//! End-to-end experiment runner: one resolved configuration in, one result
//! document out. Covers the four model families (graph networks, tree
//! ensembles, QUBO-selected ensembles, and hybrids that feed network
//! embeddings into an ensemble) under a shared protocol: fit on the train
//! steps, tune the decision threshold for F2 on the validation steps, report
//! ground-truth metrics on the test steps.

use crate::dense::Dense;
use crate::elliptic::{
    self, DatasetSplit, FeatureMode, TimeStepGraph, LOCAL_FEATURES, TOTAL_FEATURES,
};
use crate::error::{Error, Result};
use crate::forest::{self, ForestModel, GbtParams, RfParams};
use crate::gcn::{GcnConfig, GcnModel, GnnModel};
use crate::cp::{CpGcnConfig, CpGcnModel};
use crate::metrics::{self, MetricsReport};
use crate::qboost::{self, QBoostParams};
use crate::results::{ResultDocument, SeedResult, StepF2};
use crate::trainer::{self, EmbeddingTable, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::str::FromStr;
use std::time::Instant;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "gcn")]
    Gcn,
    #[serde(rename = "cp-gcn")]
    CpGcn,
    #[serde(rename = "rf")]
    Rf,
    #[serde(rename = "gbt")]
    Gbt,
    #[serde(rename = "qboost")]
    QBoost,
    #[serde(rename = "gcn+rf")]
    GcnRf,
    #[serde(rename = "cp-gcn+rf")]
    CpGcnRf,
    #[serde(rename = "cp-gcn+qboost")]
    CpGcnQBoost,
}

impl ModelKind {
    pub const ALL: [ModelKind; 8] = [
        ModelKind::Gcn,
        ModelKind::CpGcn,
        ModelKind::Rf,
        ModelKind::Gbt,
        ModelKind::QBoost,
        ModelKind::GcnRf,
        ModelKind::CpGcnRf,
        ModelKind::CpGcnQBoost,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Gcn => "gcn",
            ModelKind::CpGcn => "cp-gcn",
            ModelKind::Rf => "rf",
            ModelKind::Gbt => "gbt",
            ModelKind::QBoost => "qboost",
            ModelKind::GcnRf => "gcn+rf",
            ModelKind::CpGcnRf => "cp-gcn+rf",
            ModelKind::CpGcnQBoost => "cp-gcn+qboost",
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let known: Vec<&str> = ModelKind::ALL.iter().map(|k| k.name()).collect();
                Error::Config(format!(
                    "unknown model kind {s:?}; expected one of {}",
                    known.join(", ")
                ))
            })
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Fully resolved experiment: model kind plus every stage's hyperparameters.
/// The document emitted by [`run_experiment`] embeds a JSON copy of this
/// struct, so a result file alone reproduces its run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model_kind: ModelKind,
    pub train: TrainConfig,
    /// Fraction of labeled training nodes hidden before fitting, for the
    /// semi-supervised protocol. Zero leaves the training labels untouched.
    pub mask_fraction: f64,
    pub split: DatasetSplit,
    pub gcn: GcnConfig,
    pub cp: CpGcnConfig,
    pub rf: RfParams,
    pub gbt: GbtParams,
    pub qboost: QBoostParams,
}

impl ExperimentConfig {
    pub fn new(model_kind: ModelKind) -> Self {
        Self {
            model_kind,
            train: TrainConfig::default(),
            mask_fraction: 0.0,
            split: DatasetSplit::default(),
            gcn: GcnConfig::default(),
            cp: CpGcnConfig::default(),
            rf: RfParams::default(),
            gbt: GbtParams::default(),
            qboost: QBoostParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.train.seeds.is_empty() {
            return Err(Error::Config("seed list must be nonempty".into()));
        }
        if !(0.0..=1.0).contains(&self.mask_fraction) {
            return Err(Error::Config(format!(
                "mask fraction {} outside [0, 1]",
                self.mask_fraction
            )));
        }
        Ok(())
    }
}

struct SeedOutcome {
    metrics: MetricsReport,
    model_size: usize,
    train_time_s: f64,
    infer_time_s: f64,
    per_step: Vec<(u32, f64)>,
}

/// Runs the configured pipeline once per seed and aggregates the results.
/// Each seed deterministically derives its model, mask, and ensemble seeds
/// from one master stream, so repeated invocations agree on every metric.
pub fn run_experiment(
    graphs: &[TimeStepGraph<f64>],
    cfg: &ExperimentConfig,
) -> Result<ResultDocument> {
    cfg.validate()?;
    let (train_g, val_g, test_g) = elliptic::temporal_split(graphs.to_vec(), &cfg.split)?;
    if train_g.is_empty() || val_g.is_empty() || test_g.is_empty() {
        return Err(Error::Config(
            "each split segment must contain at least one time step".into(),
        ));
    }

    let mut per_seed = Vec::with_capacity(cfg.train.seeds.len());
    let mut step_acc: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for &seed in &cfg.train.seeds {
        let mut master = ChaCha8Rng::seed_from_u64(seed);
        let model_seed: u64 = master.gen();
        let mask_seed: u64 = master.gen();
        let ensemble_seed: u64 = master.gen();

        let train_masked = if cfg.mask_fraction > 0.0 {
            elliptic::mask_label_fraction(train_g.clone(), cfg.mask_fraction, mask_seed)?
        } else {
            train_g.clone()
        };

        let outcome = run_seed(
            cfg,
            &train_masked,
            &val_g,
            &test_g,
            model_seed,
            ensemble_seed,
        )?;
        for &(step, f2) in &outcome.per_step {
            step_acc.entry(step).or_default().push(f2);
        }
        per_seed.push(SeedResult {
            seed,
            metrics: outcome.metrics,
            model_size: outcome.model_size,
            train_time_s: outcome.train_time_s,
            infer_time_s: outcome.infer_time_s,
        });
    }

    let per_step_f2 = step_acc
        .into_iter()
        .map(|(step, f2s)| StepF2 {
            step,
            f2: f2s.iter().sum::<f64>() / f2s.len() as f64,
        })
        .collect();
    let config = serde_json::to_value(cfg)
        .map_err(|e| Error::Report(format!("serializing config: {e}")))?;
    ResultDocument::new(cfg.model_kind.name(), config, per_seed, per_step_f2)
}

fn run_seed(
    cfg: &ExperimentConfig,
    train_g: &[TimeStepGraph<f64>],
    val_g: &[TimeStepGraph<f64>],
    test_g: &[TimeStepGraph<f64>],
    model_seed: u64,
    ensemble_seed: u64,
) -> Result<SeedOutcome> {
    match cfg.model_kind {
        ModelKind::Gcn => {
            let mut model = GcnModel::new(cfg.gcn.clone(), model_seed)?;
            run_gnn(&mut model, train_g, val_g, test_g, &cfg.train)
        }
        ModelKind::CpGcn => {
            let mut model = CpGcnModel::new(cfg.cp.clone(), model_seed)?;
            run_gnn(&mut model, train_g, val_g, test_g, &cfg.train)
        }
        ModelKind::Rf => {
            let mut rf = cfg.rf;
            rf.seed = ensemble_seed;
            run_ensemble(train_g, val_g, test_g, |x, y| forest::fit_random_forest(x, y, &rf))
        }
        ModelKind::Gbt => {
            run_ensemble(train_g, val_g, test_g, |x, y| forest::fit_gbt(x, y, &cfg.gbt))
        }
        ModelKind::QBoost => {
            let mut qb = cfg.qboost.clone();
            qb.seed = ensemble_seed;
            run_qboost(train_g, val_g, test_g, &qb)
        }
        ModelKind::GcnRf => {
            let mut model = GcnModel::new(cfg.gcn.clone(), model_seed)?;
            let mut rf = cfg.rf;
            rf.seed = ensemble_seed;
            run_hybrid(&mut model, train_g, val_g, test_g, &cfg.train, |x, y| {
                forest::fit_random_forest(x, y, &rf)
            })
        }
        ModelKind::CpGcnRf => {
            let mut model = CpGcnModel::new(cfg.cp.clone(), model_seed)?;
            let mut rf = cfg.rf;
            rf.seed = ensemble_seed;
            run_hybrid(&mut model, train_g, val_g, test_g, &cfg.train, |x, y| {
                forest::fit_random_forest(x, y, &rf)
            })
        }
        ModelKind::CpGcnQBoost => {
            let mut model = CpGcnModel::new(cfg.cp.clone(), model_seed)?;
            let mut qb = cfg.qboost.clone();
            qb.seed = ensemble_seed;
            run_hybrid_qboost(&mut model, train_g, val_g, test_g, &cfg.train, &qb)
        }
    }
}

/// Drops the aggregated feature columns when the model expects the local
/// slice; passes graphs through when widths already agree.
fn narrowed(graphs: &[TimeStepGraph<f64>], in_dim: usize) -> Result<Vec<TimeStepGraph<f64>>> {
    let cols = graphs[0].features.cols();
    if cols == in_dim {
        return Ok(graphs.to_vec());
    }
    if cols == TOTAL_FEATURES && in_dim == LOCAL_FEATURES {
        return Ok(graphs.iter().map(|g| g.narrow(FeatureMode::Local93)).collect());
    }
    Err(Error::Config(format!(
        "model expects {in_dim} input features but the graphs carry {cols}"
    )))
}

fn run_gnn<M: GnnModel<f64>>(
    model: &mut M,
    train_g: &[TimeStepGraph<f64>],
    val_g: &[TimeStepGraph<f64>],
    test_g: &[TimeStepGraph<f64>],
    train_cfg: &TrainConfig,
) -> Result<SeedOutcome> {
    let train_n = narrowed(train_g, model.in_dim())?;
    let val_n = narrowed(val_g, model.in_dim())?;
    let test_n = narrowed(test_g, model.in_dim())?;

    let fit_start = Instant::now();
    let fitted = trainer::train(model, &train_n, &val_n, train_cfg)?;
    let train_time_s = fit_start.elapsed().as_secs_f64();

    let infer_start = Instant::now();
    let report = trainer::evaluate(model, &test_n, fitted.threshold)?;
    let infer_time_s = infer_start.elapsed().as_secs_f64();

    let per_step = trainer::evaluate_per_step(model, &test_n, fitted.threshold)?
        .into_iter()
        .map(|(step, m)| (step, m.f2))
        .collect();
    Ok(SeedOutcome {
        metrics: report,
        model_size: model.parameter_count(),
        train_time_s,
        infer_time_s,
        per_step,
    })
}

/// Labeled rows of the stacked per-step feature matrices: `(features,
/// signed labels, signed truth, steps)`. Labels follow the visible
/// (possibly masked) view; truth always follows `full_labels`.
fn labeled_table(
    graphs: &[TimeStepGraph<f64>],
    use_full: bool,
) -> (Dense<f64>, Vec<i8>, Vec<u32>) {
    let mut rows = Vec::new();
    let mut y = Vec::new();
    let mut steps = Vec::new();
    for g in graphs {
        let labels = if use_full { &g.full_labels } else { &g.labels };
        for (i, label) in labels.iter().enumerate() {
            if let Some(sign) = label.sign() {
                rows.push(g.features.row(i).to_vec());
                y.push(sign);
                steps.push(g.step);
            }
        }
    }
    (Dense::from_rows(&rows), y, steps)
}

fn table_from_embeddings(table: &EmbeddingTable<f64>, use_full: bool) -> (Dense<f64>, Vec<i8>, Vec<u32>) {
    let labels = if use_full { &table.full_labels } else { &table.labels };
    let mut rows = Vec::new();
    let mut y = Vec::new();
    let mut steps = Vec::new();
    for (i, label) in labels.iter().enumerate() {
        if let Some(sign) = label.sign() {
            rows.push(table.features.row(i).to_vec());
            y.push(sign);
            steps.push(table.steps[i]);
        }
    }
    (Dense::from_rows(&rows), y, steps)
}

fn signed_to_truth(y: &[i8]) -> Vec<bool> {
    y.iter().map(|&s| s > 0).collect()
}

/// Tunes the F2 threshold on validation scores, then scores the test rows
/// and returns overall metrics plus the per-step F2 series.
fn threshold_and_score(
    val_scores: &[f64],
    y_val: &[i8],
    test_scores: &[f64],
    y_test: &[i8],
    test_steps: &[u32],
) -> Result<(MetricsReport, Vec<(u32, f64)>)> {
    let (tau, _) = trainer::select_threshold(val_scores, &signed_to_truth(y_val), 2.0)?;
    let pred: Vec<bool> = test_scores.iter().map(|&s| s >= tau).collect();
    let truth = signed_to_truth(y_test);
    let report = metrics::report(metrics::confusion(&pred, &truth)?, tau);

    let mut groups: BTreeMap<u32, (Vec<bool>, Vec<bool>)> = BTreeMap::new();
    for ((&p, &t), &step) in pred.iter().zip(&truth).zip(test_steps) {
        let entry = groups.entry(step).or_default();
        entry.0.push(p);
        entry.1.push(t);
    }
    let mut per_step = Vec::with_capacity(groups.len());
    for (step, (p, t)) in groups {
        per_step.push((step, metrics::report(metrics::confusion(&p, &t)?, tau).f2));
    }
    Ok((report, per_step))
}

fn run_ensemble(
    train_g: &[TimeStepGraph<f64>],
    val_g: &[TimeStepGraph<f64>],
    test_g: &[TimeStepGraph<f64>],
    fit: impl FnOnce(&Dense<f64>, &[i8]) -> Result<ForestModel>,
) -> Result<SeedOutcome> {
    let (x_train, y_train, _) = labeled_table(train_g, false);
    let (x_val, y_val, _) = labeled_table(val_g, false);
    let (x_test, y_test, test_steps) = labeled_table(test_g, true);

    let fit_start = Instant::now();
    let model = fit(&x_train, &y_train)?;
    let val_scores = forest::predict_scores(&model, &x_val)?;
    let train_time_s = fit_start.elapsed().as_secs_f64();

    let infer_start = Instant::now();
    let test_scores = forest::predict_scores(&model, &x_test)?;
    let infer_time_s = infer_start.elapsed().as_secs_f64();

    let (report, per_step) =
        threshold_and_score(&val_scores, &y_val, &test_scores, &y_test, &test_steps)?;
    Ok(SeedOutcome {
        metrics: report,
        model_size: model.trees.len(),
        train_time_s,
        infer_time_s,
        per_step,
    })
}

fn run_qboost(
    train_g: &[TimeStepGraph<f64>],
    val_g: &[TimeStepGraph<f64>],
    test_g: &[TimeStepGraph<f64>],
    params: &QBoostParams,
) -> Result<SeedOutcome> {
    let (x_train, y_train, _) = labeled_table(train_g, false);
    let (x_val, y_val, _) = labeled_table(val_g, false);
    let (x_test, y_test, test_steps) = labeled_table(test_g, true);

    let fit_start = Instant::now();
    let model = qboost::fit(&x_train, &y_train, &x_val, &y_val, params)?;
    let val_scores = qboost::predict_scores(&model, &x_val)?;
    let train_time_s = fit_start.elapsed().as_secs_f64();

    let infer_start = Instant::now();
    let test_scores = qboost::predict_scores(&model, &x_test)?;
    let infer_time_s = infer_start.elapsed().as_secs_f64();

    let (report, per_step) =
        threshold_and_score(&val_scores, &y_val, &test_scores, &y_test, &test_steps)?;
    Ok(SeedOutcome {
        metrics: report,
        model_size: model.selected_count(),
        train_time_s,
        infer_time_s,
        per_step,
    })
}

fn run_hybrid<M: GnnModel<f64>>(
    model: &mut M,
    train_g: &[TimeStepGraph<f64>],
    val_g: &[TimeStepGraph<f64>],
    test_g: &[TimeStepGraph<f64>],
    train_cfg: &TrainConfig,
    fit: impl FnOnce(&Dense<f64>, &[i8]) -> Result<ForestModel>,
) -> Result<SeedOutcome> {
    let train_n = narrowed(train_g, model.in_dim())?;
    let val_n = narrowed(val_g, model.in_dim())?;
    let test_n = narrowed(test_g, model.in_dim())?;

    let fit_start = Instant::now();
    trainer::train(model, &train_n, &val_n, train_cfg)?;
    let emb_train = trainer::extract_embeddings(model, &train_n)?;
    let emb_val = trainer::extract_embeddings(model, &val_n)?;
    let (x_train, y_train, _) = table_from_embeddings(&emb_train, false);
    let (x_val, y_val, _) = table_from_embeddings(&emb_val, false);
    let ensemble = fit(&x_train, &y_train)?;
    let val_scores = forest::predict_scores(&ensemble, &x_val)?;
    let train_time_s = fit_start.elapsed().as_secs_f64();

    let infer_start = Instant::now();
    let emb_test = trainer::extract_embeddings(model, &test_n)?;
    let (x_test, y_test, test_steps) = table_from_embeddings(&emb_test, true);
    let test_scores = forest::predict_scores(&ensemble, &x_test)?;
    let infer_time_s = infer_start.elapsed().as_secs_f64();

    let (report, per_step) =
        threshold_and_score(&val_scores, &y_val, &test_scores, &y_test, &test_steps)?;
    Ok(SeedOutcome {
        metrics: report,
        model_size: ensemble.trees.len(),
        train_time_s,
        infer_time_s,
        per_step,
    })
}

fn run_hybrid_qboost<M: GnnModel<f64>>(
    model: &mut M,
    train_g: &[TimeStepGraph<f64>],
    val_g: &[TimeStepGraph<f64>],
    test_g: &[TimeStepGraph<f64>],
    train_cfg: &TrainConfig,
    params: &QBoostParams,
) -> Result<SeedOutcome> {
    let train_n = narrowed(train_g, model.in_dim())?;
    let val_n = narrowed(val_g, model.in_dim())?;
    let test_n = narrowed(test_g, model.in_dim())?;

    let fit_start = Instant::now();
    trainer::train(model, &train_n, &val_n, train_cfg)?;
    let emb_train = trainer::extract_embeddings(model, &train_n)?;
    let emb_val = trainer::extract_embeddings(model, &val_n)?;
    let (x_train, y_train, _) = table_from_embeddings(&emb_train, false);
    let (x_val, y_val, _) = table_from_embeddings(&emb_val, false);
    let ensemble = qboost::fit(&x_train, &y_train, &x_val, &y_val, params)?;
    let val_scores = qboost::predict_scores(&ensemble, &x_val)?;
    let train_time_s = fit_start.elapsed().as_secs_f64();

    let infer_start = Instant::now();
    let emb_test = trainer::extract_embeddings(model, &test_n)?;
    let (x_test, y_test, test_steps) = table_from_embeddings(&emb_test, true);
    let test_scores = qboost::predict_scores(&ensemble, &x_test)?;
    let infer_time_s = infer_start.elapsed().as_secs_f64();

    let (report, per_step) =
        threshold_and_score(&val_scores, &y_val, &test_scores, &y_test, &test_steps)?;
    Ok(SeedOutcome {
        metrics: report,
        model_size: ensemble.selected_count(),
        train_time_s,
        infer_time_s,
        per_step,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn sep_graphs() -> Vec<TimeStepGraph<f64>> {
        let base = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/elliptic-sep");
        let raw = elliptic::load_dataset::<f64>(
            &base.join("elliptic_txs_features.csv"),
            &base.join("elliptic_txs_edgelist.csv"),
            &base.join("elliptic_txs_classes.csv"),
        )
        .unwrap();
        elliptic::build_timestep_graphs(&raw).unwrap()
    }

    fn sep_split() -> DatasetSplit {
        DatasetSplit {
            train_steps: 1..=4,
            val_steps: 5..=5,
            test_steps: 6..=6,
        }
    }

    fn quick_train(seeds: Vec<u64>) -> TrainConfig {
        TrainConfig {
            epochs: 30,
            learning_rate: 0.01,
            seeds,
            ..TrainConfig::default()
        }
    }

    fn small_gnn_cfgs() -> (GcnConfig, CpGcnConfig) {
        (
            GcnConfig {
                in_dim: LOCAL_FEATURES,
                linear_sizes: (12, 8),
                conv_sizes: (12, 4),
                out_dim: 2,
                skip_connection: false,
            },
            CpGcnConfig {
                in_dim: LOCAL_FEATURES,
                linear_sizes: (8, 5),
                conv_sizes: (6, 3),
                ranks: (4, 3),
                out_dim: 2,
            },
        )
    }

    #[test]
    fn model_kind_parses_every_name_and_rejects_unknown() {
        for kind in ModelKind::ALL {
            assert_eq!(kind.name().parse::<ModelKind>().unwrap(), kind);
        }
        let err = "xgboost".parse::<ModelKind>().unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
        assert!(err.to_string().contains("unknown model kind"));
    }

    #[test]
    fn model_kind_serializes_as_its_name() {
        let json = serde_json::to_string(&ModelKind::CpGcnRf).unwrap();
        assert_eq!(json, "\"cp-gcn+rf\"");
        let back: ModelKind = serde_json::from_str(&json).unwrap();
        assert_eq!(back, ModelKind::CpGcnRf);
    }

    #[test]
    fn empty_seed_list_is_a_config_error() {
        let mut cfg = ExperimentConfig::new(ModelKind::Rf);
        cfg.train.seeds = vec![];
        let err = run_experiment(&sep_graphs(), &cfg).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }

    #[test]
    fn rf_on_separable_fixture_reaches_perfect_f2() {
        let mut cfg = ExperimentConfig::new(ModelKind::Rf);
        cfg.split = sep_split();
        cfg.train.seeds = vec![0, 1];
        let doc = run_experiment(&sep_graphs(), &cfg).unwrap();
        assert_eq!(doc.model_kind, "rf");
        assert_eq!(doc.per_seed.len(), 2);
        for sr in &doc.per_seed {
            assert_eq!(sr.metrics.f2, 1.0, "seed {}: {:?}", sr.seed, sr.metrics);
            assert_eq!(sr.model_size, 50);
        }
        assert_eq!(doc.aggregate.as_ref().unwrap().f2.mean, 1.0);
        assert_eq!(doc.per_step_f2, vec![StepF2 { step: 6, f2: 1.0 }]);
    }

    #[test]
    fn gbt_and_qboost_run_on_the_fixture() {
        let graphs = sep_graphs();
        let mut cfg = ExperimentConfig::new(ModelKind::Gbt);
        cfg.split = sep_split();
        cfg.train.seeds = vec![0];
        let doc = run_experiment(&graphs, &cfg).unwrap();
        assert_eq!(doc.per_seed[0].metrics.f2, 1.0, "{:?}", doc.per_seed[0].metrics);

        let mut cfg = ExperimentConfig::new(ModelKind::QBoost);
        cfg.split = sep_split();
        cfg.train.seeds = vec![0];
        cfg.qboost.n_learners = 12;
        cfg.qboost.sweeps = 200;
        cfg.qboost.restarts = 4;
        let doc = run_experiment(&graphs, &cfg).unwrap();
        let sr = &doc.per_seed[0];
        assert_eq!(sr.metrics.f2, 1.0, "{:?}", sr.metrics);
        assert!(sr.model_size >= 1);
        assert!(sr.model_size <= 12);
    }

    #[test]
    fn gnn_kinds_produce_finite_metrics_and_parameter_sizes() {
        let graphs = sep_graphs();
        let (gcn, cp) = small_gnn_cfgs();
        for kind in [ModelKind::Gcn, ModelKind::CpGcn] {
            let mut cfg = ExperimentConfig::new(kind);
            cfg.split = sep_split();
            cfg.train = quick_train(vec![0]);
            cfg.gcn = gcn.clone();
            cfg.cp = cp.clone();
            let doc = run_experiment(&graphs, &cfg).unwrap();
            let sr = &doc.per_seed[0];
            let expected = match kind {
                ModelKind::Gcn => cfg.gcn.parameter_count(),
                _ => cfg.cp.parameter_count(),
            };
            assert_eq!(sr.model_size, expected);
            assert!(sr.metrics.f2.is_finite());
            assert_eq!(doc.per_step_f2.len(), 1);
            assert_eq!(doc.per_step_f2[0].step, 6);
        }
    }

    #[test]
    fn hybrid_kinds_use_embeddings_and_final_stage_sizes() {
        let graphs = sep_graphs();
        let (gcn, cp) = small_gnn_cfgs();
        let mut cfg = ExperimentConfig::new(ModelKind::CpGcnRf);
        cfg.split = sep_split();
        cfg.train = quick_train(vec![0]);
        cfg.gcn = gcn;
        cfg.cp = cp;
        let doc = run_experiment(&graphs, &cfg).unwrap();
        let sr = &doc.per_seed[0];
        assert_eq!(sr.model_size, 50, "hybrid reports the forest size");
        assert!(sr.metrics.f2.is_finite());

        cfg.model_kind = ModelKind::CpGcnQBoost;
        cfg.qboost.n_learners = 10;
        cfg.qboost.sweeps = 200;
        cfg.qboost.restarts = 4;
        let doc = run_experiment(&graphs, &cfg).unwrap();
        let sr = &doc.per_seed[0];
        assert!(sr.model_size >= 1 && sr.model_size <= 10);
        assert!(sr.metrics.f2.is_finite());
    }

    #[test]
    fn repeated_runs_agree_on_every_metric_field() {
        let graphs = sep_graphs();
        let (gcn, cp) = small_gnn_cfgs();
        for kind in [ModelKind::Rf, ModelKind::Gcn] {
            let mut cfg = ExperimentConfig::new(kind);
            cfg.split = sep_split();
            cfg.train = quick_train(vec![0, 1]);
            cfg.gcn = gcn.clone();
            cfg.cp = cp.clone();
            let a = run_experiment(&graphs, &cfg).unwrap();
            let b = run_experiment(&graphs, &cfg).unwrap();
            for (sa, sb) in a.per_seed.iter().zip(&b.per_seed) {
                assert_eq!(sa.metrics, sb.metrics, "kind {}", kind);
                assert_eq!(sa.model_size, sb.model_size);
            }
            assert_eq!(a.per_step_f2, b.per_step_f2);
            assert_eq!(
                a.aggregate.as_ref().unwrap().f2.mean,
                b.aggregate.as_ref().unwrap().f2.mean
            );
        }
    }

    #[test]
    fn masking_labels_changes_the_training_view_only() {
        let graphs = sep_graphs();
        let mut cfg = ExperimentConfig::new(ModelKind::Rf);
        cfg.split = sep_split();
        cfg.train.seeds = vec![0];
        cfg.mask_fraction = 0.5;
        let doc = run_experiment(&graphs, &cfg).unwrap();
        assert_eq!(
            doc.per_seed[0].metrics.tp + doc.per_seed[0].metrics.fn_,
            4,
            "test evaluation still sees every ground-truth illicit node"
        );
    }

    #[test]
    fn document_embeds_the_resolved_config() {
        let mut cfg = ExperimentConfig::new(ModelKind::Rf);
        cfg.split = sep_split();
        cfg.train.seeds = vec![0];
        let doc = run_experiment(&sep_graphs(), &cfg).unwrap();
        assert_eq!(doc.config["model_kind"], "rf");
        assert_eq!(doc.config["rf"]["n_estimators"], 50);
        let back: ExperimentConfig = serde_json::from_value(doc.config.clone()).unwrap();
        assert_eq!(back.model_kind, ModelKind::Rf);
    }
}
