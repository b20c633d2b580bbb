//! Tree ensembles: bootstrap random forests with Gini trees and a
//! second-order gradient-boosted variant with logistic loss. Both emit
//! per-row scores in [0, 1]; thresholding happens downstream.

use crate::dense::Dense;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tree::{self, DecisionTree, TreeNode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const DEFAULT_ESTIMATORS: usize = 50;
pub const DEFAULT_CLASS_WEIGHTS: (f64, f64) = (0.7, 0.3);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ForestKind {
    RandomForest,
    Gbt,
}

impl ForestKind {
    fn name(self) -> &'static str {
        match self {
            ForestKind::RandomForest => "random_forest",
            ForestKind::Gbt => "gbt",
        }
    }
}

/// A fitted ensemble. `learning_rate` and `base_score` only matter for the
/// boosted kind and stay 0 for random forests.
#[derive(Clone, Debug, PartialEq)]
pub struct ForestModel {
    pub kind: ForestKind,
    pub trees: Vec<DecisionTree>,
    pub n_features: usize,
    pub learning_rate: f64,
    pub base_score: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RfParams {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub seed: u64,
    /// `(illicit, licit)` sample weights; `None` weighs all rows equally.
    pub class_weights: Option<(f64, f64)>,
}

impl Default for RfParams {
    fn default() -> Self {
        Self {
            n_estimators: DEFAULT_ESTIMATORS,
            max_depth: 8,
            seed: 0,
            class_weights: Some(DEFAULT_CLASS_WEIGHTS),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GbtParams {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub l2_reg: f64,
    pub class_weights: Option<(f64, f64)>,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self {
            n_estimators: DEFAULT_ESTIMATORS,
            learning_rate: 0.1,
            max_depth: 4,
            l2_reg: 1.0,
            class_weights: Some(DEFAULT_CLASS_WEIGHTS),
        }
    }
}

fn row_weights(y: &[i8], class_weights: Option<(f64, f64)>) -> Vec<f64> {
    let (wp, wn) = class_weights.unwrap_or((1.0, 1.0));
    y.iter().map(|&v| if v == 1 { wp } else { wn }).collect()
}

/// Bootstrap ensemble of Gini trees with per-node √d feature subsampling.
/// Each tree derives its bootstrap and split randomness from one draw of a
/// master stream, so trees are independent and the fit parallelizes without
/// changing results.
pub fn fit_random_forest<T: Scalar>(
    x: &Dense<T>,
    y: &[i8],
    params: &RfParams,
) -> Result<ForestModel> {
    if params.n_estimators == 0 {
        return Err(Error::Config("fit_random_forest: need at least 1 tree".into()));
    }
    let weights = row_weights(y, params.class_weights);
    let n = x.rows();
    let subsample = ((x.cols() as f64).sqrt().floor() as usize).max(1);
    let mut master = ChaCha8Rng::seed_from_u64(params.seed);
    let tree_seeds: Vec<u64> = (0..params.n_estimators).map(|_| master.gen()).collect();
    let trees = tree_seeds
        .par_iter()
        .map(|&tree_seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(tree_seed);
            let rows: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            let split_seed = rng.gen();
            tree::fit_tree_on_rows(
                x,
                y,
                &weights,
                &rows,
                params.max_depth,
                Some(subsample),
                split_seed,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ForestModel {
        kind: ForestKind::RandomForest,
        trees,
        n_features: x.cols(),
        learning_rate: 0.0,
        base_score: 0.0,
    })
}

/// Additive logistic-loss boosting: each round fits a regression tree to the
/// current gradients `w·(p − y)` and hessians `w·p·(1−p)`; the base score is
/// the weighted log-odds of the positive class. Fully deterministic.
pub fn fit_gbt<T: Scalar>(x: &Dense<T>, y: &[i8], params: &GbtParams) -> Result<ForestModel> {
    if params.n_estimators == 0 {
        return Err(Error::Config("fit_gbt: need at least 1 round".into()));
    }
    if params.l2_reg < 0.0 {
        return Err(Error::Config("fit_gbt: l2_reg must be nonnegative".into()));
    }
    let weights = row_weights(y, params.class_weights);
    let n = y.len();
    if n != x.rows() {
        return Err(Error::shape(
            "fit_gbt",
            format!("{} targets for {} rows", n, x.rows()),
        ));
    }
    if y.iter().any(|&v| v != 1 && v != -1) {
        return Err(Error::Config("fit_gbt: labels must be +1 or -1".into()));
    }
    let y01: Vec<f64> = y.iter().map(|&v| if v == 1 { 1.0 } else { 0.0 }).collect();
    let w_pos: f64 = weights
        .iter()
        .zip(&y01)
        .map(|(w, t)| w * t)
        .sum();
    let w_all: f64 = weights.iter().sum();
    // Single-class targets would put the log-odds at infinity.
    let p_bar = (w_pos / w_all).clamp(1e-7, 1.0 - 1e-7);
    let base_score = (p_bar / (1.0 - p_bar)).ln();

    let mut margins = vec![base_score; n];
    let mut trees = Vec::with_capacity(params.n_estimators);
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    for _ in 0..params.n_estimators {
        for i in 0..n {
            let p = sigmoid(margins[i]);
            grad[i] = weights[i] * (p - y01[i]);
            hess[i] = (weights[i] * p * (1.0 - p)).max(1e-16);
        }
        let tree = tree::fit_regression_tree(x, &grad, &hess, params.max_depth, params.l2_reg)?;
        for i in 0..n {
            margins[i] += params.learning_rate * tree.predict_row(x.row(i));
        }
        trees.push(tree);
    }
    Ok(ForestModel {
        kind: ForestKind::Gbt,
        trees,
        n_features: x.cols(),
        learning_rate: params.learning_rate,
        base_score,
    })
}

pub fn sigmoid(m: f64) -> f64 {
    if m >= 0.0 {
        1.0 / (1.0 + (-m).exp())
    } else {
        let e = m.exp();
        e / (1.0 + e)
    }
}

/// Per-row score in [0, 1]: vote fraction for forests, sigmoid margin for
/// boosting. Rows are scored independently.
pub fn predict_scores<T: Scalar>(model: &ForestModel, x: &Dense<T>) -> Result<Vec<f64>> {
    if model.trees.is_empty() {
        return Err(Error::Fit("forest has no trees; fit before predicting".into()));
    }
    if x.cols() != model.n_features {
        return Err(Error::shape(
            "predict_scores",
            format!(
                "model expects {} features, rows have {}",
                model.n_features,
                x.cols()
            ),
        ));
    }
    let score_row = |i: usize| -> f64 {
        let row = x.row(i);
        match model.kind {
            ForestKind::RandomForest => {
                let votes = model
                    .trees
                    .iter()
                    .filter(|t| t.predict_row(row) > 0.0)
                    .count();
                votes as f64 / model.trees.len() as f64
            }
            ForestKind::Gbt => {
                let margin: f64 = model
                    .trees
                    .iter()
                    .map(|t| model.learning_rate * t.predict_row(row))
                    .sum();
                sigmoid(model.base_score + margin)
            }
        }
    };
    Ok((0..x.rows()).into_par_iter().map(score_row).collect())
}

/// Text schema, one record per line:
///
/// ```text
/// amlkit-forest v1
/// kind <random_forest|gbt>
/// n_features <d>
/// learning_rate <f>
/// base_score <f>
/// tree <index> nodes <count>
/// split <feature> <threshold> <left> <right>
/// leaf <score>
/// end
/// ```
///
/// Node lines appear in array order; child indices refer into the same
/// tree's node array and always point forward.
pub fn to_text(model: &ForestModel) -> String {
    let mut out = String::from("amlkit-forest v1\n");
    out.push_str(&format!("kind {}\n", model.kind.name()));
    out.push_str(&format!("n_features {}\n", model.n_features));
    out.push_str(&format!("learning_rate {}\n", model.learning_rate));
    out.push_str(&format!("base_score {}\n", model.base_score));
    for (i, tree) in model.trees.iter().enumerate() {
        out.push_str(&format!("tree {} nodes {}\n", i, tree.nodes.len()));
        for node in &tree.nodes {
            match node {
                TreeNode::Split {
                    feature_index,
                    threshold,
                    left,
                    right,
                } => out.push_str(&format!("split {feature_index} {threshold} {left} {right}\n")),
                TreeNode::Leaf { score } => out.push_str(&format!("leaf {score}\n")),
            }
        }
    }
    out.push_str("end\n");
    out
}

pub fn from_text(text: &str) -> Result<ForestModel> {
    let bad = |line: usize, detail: String| Error::Parse {
        path: "<forest-text>".into(),
        line,
        detail,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end()));
    let mut expect = |key: &str| -> Result<(usize, String)> {
        for (ln, line) in lines.by_ref() {
            if line.is_empty() {
                continue;
            }
            return match line.strip_prefix(key).map(str::trim) {
                Some(rest) => Ok((ln, rest.to_string())),
                None => Err(bad(ln, format!("expected {key:?} record, got {line:?}"))),
            };
        }
        Err(bad(0, format!("missing {key:?} record")))
    };

    let (ln, header) = expect("amlkit-forest")?;
    if header != "v1" {
        return Err(bad(ln, format!("unsupported version {header:?}")));
    }
    let (ln, kind) = expect("kind ")?;
    let kind = match kind.as_str() {
        "random_forest" => ForestKind::RandomForest,
        "gbt" => ForestKind::Gbt,
        other => return Err(bad(ln, format!("unknown kind {other:?}"))),
    };
    let parse = |ln: usize, s: &str, what: &str| -> Result<f64> {
        s.parse()
            .map_err(|_| bad(ln, format!("invalid {what} {s:?}")))
    };
    let (ln, nf) = expect("n_features ")?;
    let n_features = parse(ln, &nf, "feature count")? as usize;
    let (ln, lr) = expect("learning_rate ")?;
    let learning_rate = parse(ln, &lr, "learning rate")?;
    let (ln, bs) = expect("base_score ")?;
    let base_score = parse(ln, &bs, "base score")?;

    let mut trees = Vec::new();
    loop {
        let Some((ln, line)) = lines.by_ref().find(|(_, l)| !l.is_empty()) else {
            return Err(bad(0, "missing \"end\" record".into()));
        };
        if line == "end" {
            break;
        }
        let rest = line
            .strip_prefix("tree ")
            .ok_or_else(|| bad(ln, format!("expected tree record, got {line:?}")))?;
        let mut parts = rest.split_whitespace();
        let index: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(ln, "missing tree index".into()))?;
        if index != trees.len() {
            return Err(bad(ln, format!("tree {index} out of order")));
        }
        let count: usize = match (parts.next(), parts.next()) {
            (Some("nodes"), Some(c)) => c
                .parse()
                .map_err(|_| bad(ln, format!("invalid node count {c:?}")))?,
            _ => return Err(bad(ln, "expected \"nodes <count>\"".into())),
        };
        if count == 0 {
            return Err(bad(ln, "a tree needs at least one node".into()));
        }
        let mut nodes = Vec::with_capacity(count);
        for k in 0..count {
            let (nln, nline) = lines
                .next()
                .ok_or_else(|| bad(ln, "truncated tree".into()))?;
            let fields: Vec<&str> = nline.split_whitespace().collect();
            let node = match fields.as_slice() {
                ["split", f, t, l, r] => {
                    let feature_index: usize = f
                        .parse()
                        .map_err(|_| bad(nln, format!("invalid feature {f:?}")))?;
                    let (left, right): (usize, usize) = (
                        l.parse()
                            .map_err(|_| bad(nln, format!("invalid child {l:?}")))?,
                        r.parse()
                            .map_err(|_| bad(nln, format!("invalid child {r:?}")))?,
                    );
                    if feature_index >= n_features {
                        return Err(bad(nln, format!("feature {feature_index} out of range")));
                    }
                    if left <= k || right <= k || left >= count || right >= count {
                        return Err(bad(nln, "child indices must point forward".into()));
                    }
                    TreeNode::Split {
                        feature_index,
                        threshold: parse(nln, t, "threshold")?,
                        left,
                        right,
                    }
                }
                ["leaf", s] => TreeNode::Leaf {
                    score: parse(nln, s, "leaf score")?,
                },
                _ => return Err(bad(nln, format!("bad node record {nline:?}"))),
            };
            nodes.push(node);
        }
        trees.push(DecisionTree {
            nodes,
            max_depth: 0,
        });
    }
    for tree in &mut trees {
        tree.max_depth = tree.depth();
    }
    if trees.is_empty() {
        return Err(bad(0, "forest has no trees".into()));
    }
    Ok(ForestModel {
        kind,
        trees,
        n_features,
        learning_rate,
        base_score,
    })
}

pub fn save(model: &ForestModel, path: &Path) -> Result<()> {
    std::fs::write(path, to_text(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<ForestModel> {
    from_text(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}
