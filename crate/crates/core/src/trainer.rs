//! Full-batch training loop shared by both graph classifiers, plus the
//! threshold search and seed aggregation used by every model family.
//!
//! One epoch forwards every training graph, accumulates gradients of the
//! summed loss, and applies a single Adam update. The loop always runs to the
//! configured epoch count; "early stopping" only means the parameters with
//! the best validation loss are the ones kept at the end.

use crate::dense::Dense;
use crate::elliptic::{Label, TimeStepGraph};
use crate::error::{Error, Result};
use crate::gcn::GnnModel;
use crate::metrics::{self, MetricsReport};
use crate::optim::ParameterStore;
use crate::scalar::Scalar;
use crate::tape::Tape;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// `(illicit, licit)` loss weights.
    pub class_weights: (f64, f64),
    /// Keep the best-validation-loss checkpoint instead of the final epoch.
    pub early_stop: bool,
    /// Seeds for repeated runs; `train` itself uses the model's own seed,
    /// the experiment driver loops over these.
    pub seeds: Vec<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            learning_rate: 1e-3,
            weight_decay: 5e-5,
            class_weights: (0.7, 0.3),
            early_stop: true,
            seeds: vec![0, 1, 2, 3, 4],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_f2: f64,
}

/// Trained parameters together with the validation-selected threshold.
#[derive(Clone, Debug)]
pub struct TrainedClassifier<T: Scalar> {
    pub params: ParameterStore<T>,
    pub best_epoch: usize,
    pub threshold: f64,
    pub history: Vec<EpochRecord>,
}

/// Trains `model` in place and leaves it at the retained checkpoint.
pub fn train<T: Scalar, M: GnnModel<T>>(
    model: &mut M,
    train_graphs: &[TimeStepGraph<T>],
    val_graphs: &[TimeStepGraph<T>],
    cfg: &TrainConfig,
) -> Result<TrainedClassifier<T>> {
    if cfg.epochs == 0 {
        return Err(Error::Config("epochs must be at least 1".into()));
    }
    if train_graphs.is_empty() || val_graphs.is_empty() {
        return Err(Error::Config(
            "training and validation graph lists must both be nonempty".into(),
        ));
    }
    if train_graphs.iter().map(|g| g.labeled_count()).sum::<usize>() == 0 {
        return Err(Error::Config(
            "no labeled training nodes; nothing to fit".into(),
        ));
    }

    let weights = (
        T::from_f64(cfg.class_weights.0),
        T::from_f64(cfg.class_weights.1),
    );
    let lr = T::from_f64(cfg.learning_rate);
    let wd = T::from_f64(cfg.weight_decay);
    let (b1, b2, eps) = (
        T::from_f64(0.9),
        T::from_f64(0.999),
        T::from_f64(1e-8),
    );

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut best_params = model.params().clone();

    for epoch in 1..=cfg.epochs {
        let mut train_loss = 0.0;
        for graph in train_graphs {
            let mut tape = Tape::new();
            let out = model.forward(&mut tape, graph)?;
            let loss = tape.weighted_cross_entropy(out.probs, &graph.labels, weights)?;
            let value = tape.value(loss).get(0, 0).to_f64();
            if !value.is_finite() {
                return Err(Error::Fit(format!(
                    "non-finite training loss at epoch {epoch}"
                )));
            }
            train_loss += value;
            tape.backward(loss, model.params_mut())?;
        }
        model.params_mut().adam_step(lr, b1, b2, eps, wd, epoch);

        let (val_loss, scores, truth) = validation_pass(model, val_graphs, weights)?;
        if !val_loss.is_finite() {
            return Err(Error::Fit(format!(
                "non-finite validation loss at epoch {epoch}"
            )));
        }
        // Single-class validation labels make the threshold search fail;
        // the curve records 0 rather than aborting an otherwise valid epoch.
        let val_f2 = select_threshold(&scores, &truth, 2.0)
            .map(|(_, f)| f)
            .unwrap_or(0.0);
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_f2,
        });

        if cfg.early_stop && val_loss < best_val {
            best_val = val_loss;
            best_epoch = epoch;
            best_params = model.params().clone();
        }
    }

    if cfg.early_stop {
        model.set_params(best_params);
    } else {
        best_epoch = cfg.epochs;
    }

    let (_, scores, truth) = validation_pass(model, val_graphs, weights)?;
    let (threshold, _) = select_threshold(&scores, &truth, 2.0)?;

    Ok(TrainedClassifier {
        params: model.params().clone(),
        best_epoch,
        threshold,
        history,
    })
}

fn validation_pass<T: Scalar, M: GnnModel<T>>(
    model: &M,
    graphs: &[TimeStepGraph<T>],
    weights: (T, T),
) -> Result<(f64, Vec<f64>, Vec<bool>)> {
    let mut total = 0.0;
    let mut scores = Vec::new();
    let mut truth = Vec::new();
    for graph in graphs {
        let mut tape = Tape::new();
        let out = model.forward(&mut tape, graph)?;
        let loss = tape.weighted_cross_entropy(out.probs, &graph.labels, weights)?;
        total += tape.value(loss).get(0, 0).to_f64();
        let probs = tape.value(out.probs);
        for (i, label) in graph.labels.iter().enumerate() {
            if label.is_labeled() {
                scores.push(probs.get(i, 0).to_f64());
                truth.push(*label == Label::Illicit);
            }
        }
    }
    Ok((total, scores, truth))
}

/// Grid-searches tau over {0.000, 0.001, ..., 1.000} for the best F-beta of
/// the predicate `score >= tau`, breaking ties toward the smallest tau.
/// Returns `(tau, f_beta)`. Labels must contain both classes.
pub fn select_threshold(scores: &[f64], truth: &[bool], beta: f64) -> Result<(f64, f64)> {
    if scores.len() != truth.len() {
        return Err(Error::shape(
            "select_threshold",
            format!("{} scores for {} labels", scores.len(), truth.len()),
        ));
    }
    let positives = truth.iter().filter(|&&t| t).count();
    if positives == 0 || positives == truth.len() || truth.is_empty() {
        return Err(Error::Fit(
            "threshold selection needs both classes in the labels".into(),
        ));
    }

    const GRID: usize = 1000;
    // Largest grid index k with k/GRID <= s, or -1 if even tau=0 exceeds s.
    // The float division in the comparison is the same one used to build tau,
    // so boundary scores land on the correct side of their own grid point.
    let cutoff = |s: f64| -> isize {
        if !(s >= 0.0) {
            return -1;
        }
        let mut k = ((s * GRID as f64).floor() as isize).clamp(0, GRID as isize);
        while k + 1 <= GRID as isize && (k + 1) as f64 / GRID as f64 <= s {
            k += 1;
        }
        while k > 0 && k as f64 / GRID as f64 > s {
            k -= 1;
        }
        k
    };

    let mut tp_hist = vec![0usize; GRID + 2];
    let mut fp_hist = vec![0usize; GRID + 2];
    for (&s, &t) in scores.iter().zip(truth) {
        let k = cutoff(s);
        if k >= 0 {
            if t {
                tp_hist[k as usize] += 1;
            } else {
                fp_hist[k as usize] += 1;
            }
        }
    }

    let mut best_k = 0usize;
    let mut best_f = -1.0;
    let (mut tp, mut fp) = (0usize, 0usize);
    // Suffix sums walked from the top: at grid index k the predicted
    // positives are exactly the samples with cutoff >= k.
    let mut row = vec![(0usize, 0usize); GRID + 1];
    for k in (0..=GRID).rev() {
        tp += tp_hist[k];
        fp += fp_hist[k];
        row[k] = (tp, fp);
    }
    for (k, &(tp, fp)) in row.iter().enumerate() {
        let precision = if tp + fp == 0 {
            0.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let recall = tp as f64 / positives as f64;
        let f = metrics::f_beta(precision, recall, beta);
        if f > best_f {
            best_f = f;
            best_k = k;
        }
    }
    Ok((best_k as f64 / GRID as f64, best_f))
}

/// Scores every labeled node (ground-truth labels) and thresholds at `tau`.
pub fn evaluate<T: Scalar, M: GnnModel<T>>(
    model: &M,
    graphs: &[TimeStepGraph<T>],
    threshold: f64,
) -> Result<MetricsReport> {
    let mut pred = Vec::new();
    let mut truth = Vec::new();
    for graph in graphs {
        let mut tape = Tape::new();
        let out = model.forward(&mut tape, graph)?;
        let probs = tape.value(out.probs);
        for (i, label) in graph.full_labels.iter().enumerate() {
            if label.is_labeled() {
                pred.push(probs.get(i, 0).to_f64() >= threshold);
                truth.push(*label == Label::Illicit);
            }
        }
    }
    let counts = metrics::confusion(&pred, &truth)?;
    Ok(metrics::report(counts, threshold))
}

/// Per-time-step breakdown of `evaluate`, in ascending step order.
pub fn evaluate_per_step<T: Scalar, M: GnnModel<T>>(
    model: &M,
    graphs: &[TimeStepGraph<T>],
    threshold: f64,
) -> Result<Vec<(u32, MetricsReport)>> {
    let mut rows = Vec::with_capacity(graphs.len());
    for graph in graphs {
        rows.push((
            graph.step,
            evaluate(model, std::slice::from_ref(graph), threshold)?,
        ));
    }
    rows.sort_by_key(|(step, _)| *step);
    Ok(rows)
}

/// Node embeddings plus alignment metadata, rows in graph order.
#[derive(Clone, Debug)]
pub struct EmbeddingTable<T: Scalar> {
    pub ids: Vec<u64>,
    pub steps: Vec<u32>,
    pub features: Dense<T>,
    pub labels: Vec<Label>,
    pub full_labels: Vec<Label>,
}

/// Runs the trained encoder over `graphs` and collects the concatenated
/// hidden representation for every node, labeled or not.
pub fn extract_embeddings<T: Scalar, M: GnnModel<T>>(
    model: &M,
    graphs: &[TimeStepGraph<T>],
) -> Result<EmbeddingTable<T>> {
    let width = model.embedding_width();
    let total: usize = graphs.iter().map(|g| g.n_nodes()).sum();
    let mut features = Dense::zeros(total, width);
    let mut ids = Vec::with_capacity(total);
    let mut steps = Vec::with_capacity(total);
    let mut labels = Vec::with_capacity(total);
    let mut full_labels = Vec::with_capacity(total);
    let mut row = 0;
    for graph in graphs {
        let mut tape = Tape::new();
        let out = model.forward(&mut tape, graph)?;
        let emb = tape.value(out.embedding);
        for i in 0..graph.n_nodes() {
            features.row_mut(row).copy_from_slice(emb.row(i));
            ids.push(graph.node_index[i]);
            steps.push(graph.step);
            labels.push(graph.labels[i]);
            full_labels.push(graph.full_labels[i]);
            row += 1;
        }
    }
    Ok(EmbeddingTable {
        ids,
        steps,
        features,
        labels,
        full_labels,
    })
}

/// Training curve as comma-delimited text with a header row.
pub fn history_to_text(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_loss,val_loss,val_f2\n");
    for r in history {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6}\n",
            r.epoch, r.train_loss, r.val_loss, r.val_f2
        ));
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateStat {
    pub mean: f64,
    pub std: f64,
}

/// Mean and sample standard deviation over seeds for each headline metric.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub n: usize,
    pub precision: AggregateStat,
    pub recall: AggregateStat,
    pub f1: AggregateStat,
    pub f2: AggregateStat,
}

pub fn aggregate_seeds(reports: &[MetricsReport]) -> Result<AggregateReport> {
    if reports.len() < 2 {
        return Err(Error::Aggregation(format!(
            "need at least 2 seed runs to aggregate, got {}",
            reports.len()
        )));
    }
    let stat = |pick: fn(&MetricsReport) -> f64| {
        let n = reports.len() as f64;
        let mean = reports.iter().map(pick).sum::<f64>() / n;
        let var = reports
            .iter()
            .map(|r| {
                let d = pick(r) - mean;
                d * d
            })
            .sum::<f64>()
            / (n - 1.0);
        AggregateStat {
            mean,
            std: var.sqrt(),
        }
    };
    Ok(AggregateReport {
        n: reports.len(),
        precision: stat(|r| r.precision),
        recall: stat(|r| r.recall),
        f1: stat(|r| r.f1),
        f2: stat(|r| r.f2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gcn::{GcnConfig, GcnModel};
    use crate::sparse::SparseSym;

    fn toy_config() -> GcnConfig {
        GcnConfig {
            in_dim: 4,
            linear_sizes: (6, 4),
            conv_sizes: (6, 4),
            out_dim: 2,
            skip_connection: false,
        }
    }

    /// Eight nodes, linearly separable on feature 0, intra-class chains.
    fn toy_graph(step: u32, jitter: f64) -> TimeStepGraph<f64> {
        let n = 8;
        let mut features = Dense::zeros(n, 4);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let illicit = i < 4;
            let sign = if illicit { 1.0 } else { -1.0 };
            features.set(i, 0, sign * (1.5 + 0.1 * i as f64) + 0.01 * jitter);
            features.set(i, 1, 0.2 * (i as f64 - 3.5));
            features.set(i, 2, -0.1 * sign);
            features.set(i, 3, 0.05 * jitter);
            labels.push(if illicit { Label::Illicit } else { Label::Licit });
        }
        let edges = [(0, 1), (1, 2), (2, 3), (4, 5), (5, 6), (6, 7)];
        TimeStepGraph {
            step,
            adjacency_norm: SparseSym::normalized_adjacency(n, &edges).unwrap(),
            features,
            labels: labels.clone(),
            full_labels: labels,
            node_index: (0..n as u64).map(|i| step as u64 * 100 + i).collect(),
        }
    }

    fn quick_config(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            learning_rate: 0.01,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn separable_toy_reaches_perfect_validation_f2() {
        let train = vec![toy_graph(1, 0.0), toy_graph(2, 1.0)];
        let val = vec![toy_graph(3, 2.0)];
        let test = vec![toy_graph(4, -1.0)];
        let mut model = GcnModel::<f64>::new(toy_config(), 7).unwrap();
        let fitted = train_model(&mut model, &train, &val, &quick_config(150));
        let last = fitted.history.last().unwrap();
        assert_eq!(fitted.history.len(), 150, "must run every epoch");
        assert_eq!(last.val_f2, 1.0, "validation F2 should reach 1.0");
        let report = evaluate(&model, &test, fitted.threshold).unwrap();
        assert_eq!(report.f2, 1.0, "{report:?}");
        assert_eq!((report.tp, report.tn), (4, 4));
        assert!(fitted.best_epoch >= 1 && fitted.best_epoch <= 150);
    }

    fn train_model(
        model: &mut GcnModel<f64>,
        train_graphs: &[TimeStepGraph<f64>],
        val_graphs: &[TimeStepGraph<f64>],
        cfg: &TrainConfig,
    ) -> TrainedClassifier<f64> {
        train(model, train_graphs, val_graphs, cfg).unwrap()
    }

    #[test]
    fn training_loss_decreases_on_toy() {
        let train_graphs = vec![toy_graph(1, 0.0)];
        let val = vec![toy_graph(2, 1.0)];
        let mut model = GcnModel::<f64>::new(toy_config(), 3).unwrap();
        let fitted = train_model(&mut model, &train_graphs, &val, &quick_config(60));
        let first = fitted.history.first().unwrap().train_loss;
        let last = fitted.history.last().unwrap().train_loss;
        assert!(
            last < first * 0.5,
            "loss should at least halve: {first} -> {last}"
        );
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let train_graphs = vec![toy_graph(1, 0.0)];
        let val = vec![toy_graph(2, 0.5)];
        let mut model = GcnModel::<f64>::new(toy_config(), 11).unwrap();
        let before: Vec<Vec<f64>> = model
            .params
            .iter_values()
            .map(|(_, v)| v.data().to_vec())
            .collect();
        let cfg = TrainConfig {
            epochs: 5,
            learning_rate: 0.0,
            weight_decay: 0.0,
            ..TrainConfig::default()
        };
        let fitted = train_model(&mut model, &train_graphs, &val, &cfg);
        let after: Vec<Vec<f64>> = model
            .params
            .iter_values()
            .map(|(_, v)| v.data().to_vec())
            .collect();
        assert_eq!(before, after, "lr=0 must leave parameters untouched");
        let h0 = &fitted.history[0];
        for h in &fitted.history {
            assert_eq!(h.train_loss, h0.train_loss, "history must be flat");
            assert_eq!(h.val_loss, h0.val_loss);
        }
    }

    #[test]
    fn same_seed_reproduces_run_bit_for_bit() {
        let train_graphs = vec![toy_graph(1, 0.0), toy_graph(2, 1.0)];
        let val = vec![toy_graph(3, 2.0)];
        let cfg = quick_config(40);
        let run = || {
            let mut model = GcnModel::<f64>::new(toy_config(), 21).unwrap();
            let fitted = train(&mut model, &train_graphs, &val, &cfg).unwrap();
            let flat: Vec<f64> = model
                .params
                .iter_values()
                .flat_map(|(_, v)| v.data().to_vec())
                .collect();
            (flat, fitted.threshold, fitted.history)
        };
        let a = run();
        let b = run();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        assert_eq!(a.2, b.2);
    }

    #[test]
    fn unlabeled_training_set_is_config_error() {
        let mut g = toy_graph(1, 0.0);
        g.labels = vec![Label::Unknown; 8];
        let val = vec![toy_graph(2, 0.0)];
        let mut model = GcnModel::<f64>::new(toy_config(), 0).unwrap();
        let err = train(&mut model, &[g], &val, &quick_config(3)).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }

    #[test]
    fn empty_graph_lists_are_config_errors() {
        let g = vec![toy_graph(1, 0.0)];
        let mut model = GcnModel::<f64>::new(toy_config(), 0).unwrap();
        assert!(matches!(
            train(&mut model, &[], &g, &quick_config(3)),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            train(&mut model, &g, &[], &quick_config(3)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn threshold_grid_prefers_smallest_tau() {
        // Perfect split is reachable for tau in (0.2, 0.6]; the smallest
        // grid point above 0.2 is 0.201.
        let (tau, f) = select_threshold(&[0.2, 0.6, 0.9], &[false, true, true], 2.0).unwrap();
        assert_eq!(tau, 0.201);
        assert_eq!(f, 1.0);

        // Inverted scores: best achievable is the all-positive baseline.
        let (tau, f) = select_threshold(&[0.9, 0.5, 0.1], &[false, false, true], 2.0).unwrap();
        assert_eq!(tau, 0.0);
        let baseline = metrics::f_beta(1.0 / 3.0, 1.0, 2.0);
        assert!((f - baseline).abs() < 1e-12);

        // Constant scores: every tau below the score ties, take the smallest.
        let (tau, _) = select_threshold(&[0.7, 0.7, 0.7], &[true, false, true], 2.0).unwrap();
        assert_eq!(tau, 0.0);
    }

    #[test]
    fn threshold_boundary_scores_count_as_positive() {
        // score == tau satisfies the >= predicate, so 0.6 flips exactly at
        // the 0.600 grid point and perfect F2 extends through it.
        let scores = [0.3, 0.6, 0.8];
        let truth = [false, true, true];
        let (tau, f) = select_threshold(&scores, &truth, 2.0).unwrap();
        assert_eq!(f, 1.0);
        assert_eq!(tau, 0.301);
        let pred: Vec<bool> = scores.iter().map(|&s| s >= 0.6).collect();
        let counts = metrics::confusion(&pred, &truth).unwrap();
        assert_eq!(counts, (2, 0, 0, 1));
    }

    #[test]
    fn threshold_matches_brute_force_on_random_scores() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let n = rng.gen_range(2..40);
            let scores: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            let mut truth: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
            truth[0] = true;
            truth[n - 1] = false;
            let (tau, f) = select_threshold(&scores, &truth, 2.0).unwrap();
            let mut best = (-1.0, 0.0);
            for k in 0..=1000 {
                let t = k as f64 / 1000.0;
                let pred: Vec<bool> = scores.iter().map(|&s| s >= t).collect();
                let (tp, fp, fn_, _) = metrics::confusion(&pred, &truth).unwrap();
                let p = if tp + fp == 0 {
                    0.0
                } else {
                    tp as f64 / (tp + fp) as f64
                };
                let r = if tp + fn_ == 0 {
                    0.0
                } else {
                    tp as f64 / (tp + fn_) as f64
                };
                let fb = metrics::f_beta(p, r, 2.0);
                if fb > best.0 {
                    best = (fb, t);
                }
            }
            assert_eq!(f, best.0, "scores {scores:?}");
            assert_eq!(tau, best.1, "scores {scores:?}");
        }
    }

    #[test]
    fn single_class_labels_are_rejected() {
        assert!(select_threshold(&[0.1, 0.9], &[true, true], 2.0).is_err());
        assert!(select_threshold(&[0.1, 0.9], &[false, false], 2.0).is_err());
        assert!(select_threshold(&[], &[], 2.0).is_err());
        assert!(select_threshold(&[0.5], &[true, false], 2.0).is_err());
    }

    #[test]
    fn evaluate_union_equals_summed_confusion() {
        let a = toy_graph(1, 0.0);
        let b = toy_graph(2, 3.0);
        let model = GcnModel::<f64>::new(toy_config(), 13).unwrap();
        let ra = evaluate(&model, std::slice::from_ref(&a), 0.5).unwrap();
        let rb = evaluate(&model, std::slice::from_ref(&b), 0.5).unwrap();
        let both = evaluate(&model, &[a, b], 0.5).unwrap();
        assert_eq!(both.tp, ra.tp + rb.tp);
        assert_eq!(both.fp, ra.fp + rb.fp);
        assert_eq!(both.fn_, ra.fn_ + rb.fn_);
        assert_eq!(both.tn, ra.tn + rb.tn);
    }

    #[test]
    fn evaluate_scores_masked_nodes_with_ground_truth() {
        let mut g = toy_graph(1, 0.0);
        g.labels = vec![Label::Unknown; 8];
        let model = GcnModel::<f64>::new(toy_config(), 13).unwrap();
        let r = evaluate(&model, &[g], 0.5).unwrap();
        assert_eq!(r.tp + r.fp + r.fn_ + r.tn, 8);
    }

    #[test]
    fn per_step_rows_are_sorted_and_match_union() {
        let graphs = vec![toy_graph(4, 1.0), toy_graph(2, 0.0)];
        let model = GcnModel::<f64>::new(toy_config(), 13).unwrap();
        let rows = evaluate_per_step(&model, &graphs, 0.5).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].0, 2);
        assert_eq!(rows[1].0, 4);
        let union = evaluate(&model, &graphs, 0.5).unwrap();
        assert_eq!(rows[0].1.tp + rows[1].1.tp, union.tp);
    }

    #[test]
    fn embeddings_align_with_node_ids() {
        let graphs = vec![toy_graph(1, 0.0), toy_graph(2, 1.0)];
        let model = GcnModel::<f64>::new(toy_config(), 9).unwrap();
        let table = extract_embeddings(&model, &graphs).unwrap();
        assert_eq!(table.features.rows(), 16);
        assert_eq!(table.features.cols(), model.embedding_width());
        assert_eq!(table.ids.len(), 16);
        assert_eq!(table.ids[0], 100);
        assert_eq!(table.ids[8], 200);
        assert_eq!(table.steps[..8], [1; 8]);
        assert!(table.features.is_finite());

        let again = extract_embeddings(&model, &graphs).unwrap();
        assert_eq!(table.features.data(), again.features.data());
    }

    #[test]
    fn history_text_round_trips_epochs() {
        let history = vec![
            EpochRecord {
                epoch: 1,
                train_loss: 0.5,
                val_loss: 0.6,
                val_f2: 0.25,
            },
            EpochRecord {
                epoch: 2,
                train_loss: 0.4,
                val_loss: 0.55,
                val_f2: 0.5,
            },
        ];
        let text = history_to_text(&history);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "epoch,train_loss,val_loss,val_f2");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("1,0.500000,0.600000,"));
    }

    #[test]
    fn aggregate_matches_hand_computation() {
        let mk = |f2: f64| MetricsReport {
            tp: 0,
            fp: 0,
            fn_: 0,
            tn: 0,
            precision: f2,
            recall: f2,
            f1: f2,
            f2,
            threshold: 0.5,
        };
        let agg = aggregate_seeds(&[mk(0.60), mk(0.62)]).unwrap();
        assert!((agg.f2.mean - 0.61).abs() < 1e-15);
        assert!((agg.f2.std - 0.0002f64.sqrt()).abs() < 1e-12);
        assert!((agg.f2.std - 0.014142135623730951).abs() < 1e-12);
        assert_eq!(agg.n, 2);

        assert!(matches!(
            aggregate_seeds(&[mk(0.5)]),
            Err(Error::Aggregation(_))
        ));
        assert!(matches!(aggregate_seeds(&[]), Err(Error::Aggregation(_))));
    }
}
