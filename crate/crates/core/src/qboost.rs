//! QBoost: select a subset of weak learners by minimizing a QUBO that
//! trades squared vote error against an L0 sparsity penalty, solved
//! exhaustively when small and by simulated annealing otherwise.

use crate::dense::Dense;
use crate::error::{Error, Result};
use crate::metrics;
use crate::scalar::Scalar;
use crate::tree::{self, DecisionTree};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Exhaustive search is authoritative up to this many variables.
pub const BRUTE_FORCE_LIMIT: usize = 22;

/// Shallow trees plus their ±1 predictions on the training rows; column `i`
/// of `outputs` is learner `i` over the same row order.
#[derive(Clone, Debug)]
pub struct WeakLearnerPool {
    pub learners: Vec<DecisionTree>,
    pub outputs: Dense<f64>,
    pub n_features: usize,
}

impl WeakLearnerPool {
    pub fn n_learners(&self) -> usize {
        self.learners.len()
    }
}

/// Symmetric QUBO with a constant offset: `energy(w) = wᵀQw + offset`.
#[derive(Clone, Debug)]
pub struct QuboProblem {
    pub q: Dense<f64>,
    pub offset: f64,
}

impl QuboProblem {
    pub fn n(&self) -> usize {
        self.q.rows()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let n = self.n();
        (0..n).all(|i| (0..i).all(|j| (self.q.get(i, j) - self.q.get(j, i)).abs() <= tol))
    }

    pub fn energy(&self, w: &[bool]) -> f64 {
        assert_eq!(w.len(), self.n(), "assignment length mismatch");
        let selected: Vec<usize> = (0..w.len()).filter(|&i| w[i]).collect();
        let mut e = self.offset;
        for (a, &i) in selected.iter().enumerate() {
            e += self.q.get(i, i);
            for &j in &selected[a + 1..] {
                e += self.q.get(i, j) + self.q.get(j, i);
            }
        }
        e
    }

    /// Largest |Q_ij| over all entries; 0 for an empty problem.
    pub fn max_abs_entry(&self) -> f64 {
        self.q.data().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Plain-text export: variable count, offset, then the upper triangle
    /// row by row (row `i` holds `Q_ij` for `j >= i`, space-separated).
    pub fn to_text(&self) -> String {
        let n = self.n();
        let mut out = format!("{n}\n{}\n", self.offset);
        for i in 0..n {
            let row: Vec<String> = (i..n).map(|j| self.q.get(i, j).to_string()).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }
}

/// Fitted selection over a pool.
#[derive(Clone, Debug)]
pub struct QBoostModel {
    pub pool: WeakLearnerPool,
    pub selected: Vec<bool>,
    pub lambda: f64,
}

impl QBoostModel {
    pub fn selected_count(&self) -> usize {
        self.selected.iter().filter(|&&s| s).count()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QBoostParams {
    pub n_learners: usize,
    pub max_depth: usize,
    /// Candidate λ values in units of S/N² (scaled by the training size and
    /// pool size inside `fit`, so the penalty competes with per-learner loss
    /// terms at any scale).
    pub lambda_grid: Vec<f64>,
    pub sweeps: usize,
    pub restarts: usize,
    pub t_cold: f64,
    pub seed: u64,
}

impl Default for QBoostParams {
    fn default() -> Self {
        Self {
            n_learners: 50,
            max_depth: 3,
            lambda_grid: vec![0.0, 0.01, 0.05, 0.1, 0.5],
            sweeps: 2000,
            restarts: 10,
            t_cold: 1e-3,
            seed: 0,
        }
    }
}

/// Fits `n` shallow trees on bootstrap resamples with √d feature
/// subsampling and tabulates their ±1 training predictions.
pub fn build_pool<T: Scalar>(
    x: &Dense<T>,
    y: &[i8],
    n: usize,
    max_depth: usize,
    seed: u64,
) -> Result<WeakLearnerPool> {
    if n == 0 {
        return Err(Error::Config("build_pool: need at least 1 learner".into()));
    }
    let rows = x.rows();
    let weights = vec![1.0; y.len()];
    let subsample = ((x.cols() as f64).sqrt().floor() as usize).max(1);
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let tree_seeds: Vec<u64> = (0..n).map(|_| master.gen()).collect();
    let learners = tree_seeds
        .par_iter()
        .map(|&tree_seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(tree_seed);
            let bootstrap: Vec<usize> = (0..rows).map(|_| rng.gen_range(0..rows)).collect();
            let split_seed = rng.gen();
            tree::fit_tree_on_rows(x, y, &weights, &bootstrap, max_depth, Some(subsample), split_seed)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut outputs = Dense::zeros(rows, n);
    for s in 0..rows {
        let row = x.row(s);
        for (i, learner) in learners.iter().enumerate() {
            outputs.set(s, i, learner.predict_row(row));
        }
    }
    Ok(WeakLearnerPool {
        learners,
        outputs,
        n_features: x.cols(),
    })
}

/// Expands `Σ_s ((1/N)Σ_i w_i h_is − y_s)² + λΣ_i w_i` into QUBO form using
/// `w_i² = w_i`:
///
/// - `Q_ii = (1/N²)Σ_s h_is² − (2/N)Σ_s h_is y_s + λ`
/// - `Q_ij = (1/N²)Σ_s h_is h_js` for `i ≠ j` (each triangle carries half
///   of the pair's coefficient)
/// - `offset = Σ_s y_s²`
pub fn build_qubo(pool: &WeakLearnerPool, y: &[i8], lambda: f64) -> Result<QuboProblem> {
    let h = &pool.outputs;
    let (s_rows, n) = (h.rows(), h.cols());
    if y.len() != s_rows {
        return Err(Error::shape(
            "build_qubo",
            format!("{} labels for {} pool rows", y.len(), s_rows),
        ));
    }
    if n == 0 {
        return Err(Error::Config("build_qubo: empty pool".into()));
    }
    let n_f = n as f64;
    let hth = h.matmul_tn(h)?;
    let mut hy = vec![0.0; n];
    for s in 0..s_rows {
        let ys = y[s] as f64;
        let row = h.row(s);
        for i in 0..n {
            hy[i] += row[i] * ys;
        }
    }
    let mut q = Dense::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut v = hth.get(i, j) / (n_f * n_f);
            if i == j {
                v += -2.0 * hy[i] / n_f + lambda;
            }
            q.set(i, j, v);
        }
    }
    let offset = y.iter().map(|&v| (v as f64) * (v as f64)).sum();
    Ok(QuboProblem { q, offset })
}

/// Energy change from flipping variable `k` given the current assignment:
/// `±(Q_kk + 2·Σ_{j set, j≠k} Q_kj)`.
fn flip_delta(q: &QuboProblem, state: &[bool], k: usize) -> f64 {
    let mut cross = 0.0;
    for (j, &on) in state.iter().enumerate() {
        if on && j != k {
            cross += q.q.get(k, j);
        }
    }
    let d = q.q.get(k, k) + 2.0 * cross;
    if state[k] {
        -d
    } else {
        d
    }
}

/// Exhaustive minimum over all 2^N assignments; ties break toward the
/// assignment with the smallest value as a binary integer (bit `i` = w_i).
pub fn solve_brute_force(q: &QuboProblem) -> Result<(Vec<bool>, f64)> {
    let n = q.n();
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::Capacity(format!(
            "brute force handles at most {BRUTE_FORCE_LIMIT} variables, got {n}"
        )));
    }
    let mut state = vec![false; n];
    let mut energy = q.offset;
    let mut best = (energy, 0u64);
    for mask in 1u64..(1u64 << n) {
        // Incremental update: mask-1 -> mask flips exactly the bits where
        // the two differ (the trailing carry run).
        let diff = mask ^ (mask - 1);
        for k in 0..n {
            if diff >> k & 1 == 1 {
                energy += flip_delta(q, &state, k);
                state[k] = mask >> k & 1 == 1;
            }
        }
        if energy < best.0 {
            best = (energy, mask);
        }
    }
    let w: Vec<bool> = (0..n).map(|i| best.1 >> i & 1 == 1).collect();
    // Replay the winner directly; the scan's energy is incremental.
    Ok((w.clone(), q.energy(&w)))
}

pub fn default_t_hot(q: &QuboProblem) -> f64 {
    (2.0 * q.max_abs_entry()).max(1e-3)
}

/// Single-flip Metropolis annealing on a geometric temperature ladder from
/// `t_hot` to `t_cold` across `sweeps` full sweeps, repeated from
/// independent random starts; the best state ever seen wins. Restart seeds
/// derive from one master stream, so runs are reproducible and restarts can
/// execute in parallel.
pub fn solve_simulated_annealing(
    q: &QuboProblem,
    sweeps: usize,
    restarts: usize,
    t_hot: f64,
    t_cold: f64,
    seed: u64,
) -> Result<(Vec<bool>, f64)> {
    if sweeps == 0 || restarts == 0 || t_hot <= 0.0 || t_cold <= 0.0 {
        return Err(Error::Config(
            "solve_simulated_annealing: sweeps, restarts, and temperatures must be positive".into(),
        ));
    }
    let n = q.n();
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let restart_seeds: Vec<u64> = (0..restarts).map(|_| master.gen()).collect();
    let ratio = t_cold / t_hot;
    let runs: Vec<(f64, Vec<bool>)> = restart_seeds
        .par_iter()
        .map(|&rs| {
            let mut rng = ChaCha8Rng::seed_from_u64(rs);
            let mut state: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
            let mut energy = q.energy(&state);
            let mut best = (energy, state.clone());
            for sweep in 0..sweeps {
                let frac = if sweeps > 1 {
                    sweep as f64 / (sweeps - 1) as f64
                } else {
                    0.0
                };
                let temp = t_hot * ratio.powf(frac);
                for k in 0..n {
                    let delta = flip_delta(q, &state, k);
                    if delta <= 0.0 || rng.gen::<f64>() < (-delta / temp).exp() {
                        state[k] = !state[k];
                        energy += delta;
                        if energy < best.0 {
                            best = (energy, state.clone());
                        }
                    }
                }
            }
            best
        })
        .collect();
    let (_, w) = runs
        .into_iter()
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .expect("at least one restart");
    // Report the exact energy of the returned state, not the drifting
    // incremental value.
    let energy = q.energy(&w);
    Ok((w, energy))
}

/// Builds one pool, then for each λ in the grid solves the QUBO and keeps
/// the subset with the best validation F2 of its majority vote. λ values
/// are scaled by S/N²; empty selections are skipped, and if every λ yields
/// one the fit fails.
pub fn fit<T: Scalar>(
    x_train: &Dense<T>,
    y_train: &[i8],
    x_val: &Dense<T>,
    y_val: &[i8],
    params: &QBoostParams,
) -> Result<QBoostModel> {
    if params.lambda_grid.is_empty() {
        return Err(Error::Config("fit: lambda grid must be nonempty".into()));
    }
    if y_val.len() != x_val.rows() {
        return Err(Error::shape(
            "fit",
            format!("{} validation labels for {} rows", y_val.len(), x_val.rows()),
        ));
    }
    let mut master = ChaCha8Rng::seed_from_u64(params.seed);
    let pool_seed = master.gen();
    let solver_seed = master.gen();
    let pool = build_pool(x_train, y_train, params.n_learners, params.max_depth, pool_seed)?;
    let n = pool.n_learners();
    let scale = y_train.len() as f64 / (n as f64 * n as f64);

    // Validation outputs tabulated once; every λ candidate reuses them.
    let mut val_h = Dense::zeros(x_val.rows(), n);
    for s in 0..x_val.rows() {
        let row = x_val.row(s);
        for (i, learner) in pool.learners.iter().enumerate() {
            val_h.set(s, i, learner.predict_row(row));
        }
    }
    let val_truth: Vec<bool> = y_val.iter().map(|&v| v == 1).collect();

    let mut best: Option<(f64, Vec<bool>, f64)> = None;
    for &mult in &params.lambda_grid {
        let lambda = mult * scale;
        let qubo = build_qubo(&pool, y_train, lambda)?;
        let (w, _) = if n <= BRUTE_FORCE_LIMIT {
            solve_brute_force(&qubo)?
        } else {
            solve_simulated_annealing(
                &qubo,
                params.sweeps,
                params.restarts,
                default_t_hot(&qubo),
                params.t_cold,
                solver_seed,
            )?
        };
        if !w.iter().any(|&b| b) {
            continue;
        }
        let pred: Vec<bool> = (0..val_h.rows())
            .map(|s| vote_score(&val_h, &w, s) >= 0.5)
            .collect();
        let counts = metrics::confusion(&pred, &val_truth)?;
        let f2 = metrics::report(counts, 0.5).f2;
        if best.as_ref().map_or(true, |(bf, _, _)| f2 > *bf) {
            best = Some((f2, w, lambda));
        }
    }
    let Some((_, selected, lambda)) = best else {
        return Err(Error::Fit(
            "every λ candidate selected an empty ensemble; retry with smaller λ values".into(),
        ));
    };
    Ok(QBoostModel {
        pool,
        selected,
        lambda,
    })
}

fn vote_score(h: &Dense<f64>, selected: &[bool], row: usize) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (i, &on) in selected.iter().enumerate() {
        if on {
            sum += h.get(row, i);
            count += 1;
        }
    }
    (1.0 + sum / count as f64) / 2.0
}

/// Vote margin of the selected learners mapped into [0, 1]:
/// `(1 + mean_i h_i(x)) / 2`.
pub fn predict_scores<T: Scalar>(model: &QBoostModel, x: &Dense<T>) -> Result<Vec<f64>> {
    if model.selected_count() == 0 {
        return Err(Error::Fit("no learners selected; fit before predicting".into()));
    }
    if x.cols() != model.pool.n_features {
        return Err(Error::shape(
            "predict_scores",
            format!(
                "model expects {} features, rows have {}",
                model.pool.n_features,
                x.cols()
            ),
        ));
    }
    let selected: Vec<&DecisionTree> = model
        .pool
        .learners
        .iter()
        .zip(&model.selected)
        .filter_map(|(t, &on)| on.then_some(t))
        .collect();
    let k = selected.len() as f64;
    Ok((0..x.rows())
        .into_par_iter()
        .map(|s| {
            let row = x.row(s);
            let sum: f64 = selected.iter().map(|t| t.predict_row(row)).sum();
            (1.0 + sum / k) / 2.0
        })
        .collect())
}
