//! Loading the Elliptic-format transaction files and building per-time-step
//! graphs with normalized adjacencies.
//!
//! The features file carries `id, time_step` and then 165 numeric columns:
//! 93 local features followed by 72 aggregated ones. [`RawDataset`] stores a
//! 166-wide feature matrix laid out `[93 local | 72 aggregated | time step]`,
//! so the local block is a prefix and the full width matches the dataset's
//! published feature count.

use crate::dense::Dense;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sparse::SparseSym;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::ops::RangeInclusive;
use std::path::Path;

pub const LOCAL_FEATURES: usize = 93;
pub const AGGREGATED_FEATURES: usize = 72;
pub const TOTAL_FEATURES: usize = LOCAL_FEATURES + AGGREGATED_FEATURES + 1;
/// Numeric columns in the features file after the id and time-step columns.
const RAW_FEATURE_COLS: usize = LOCAL_FEATURES + AGGREGATED_FEATURES;

/// Node class. Illicit is the positive class throughout.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Label {
    Illicit,
    Licit,
    Unknown,
}

impl Label {
    pub fn is_labeled(self) -> bool {
        !matches!(self, Label::Unknown)
    }

    /// +1 for illicit, −1 for licit, None for unlabeled.
    pub fn sign(self) -> Option<i8> {
        match self {
            Label::Illicit => Some(1),
            Label::Licit => Some(-1),
            Label::Unknown => None,
        }
    }
}

/// Which feature columns a model consumes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureMode {
    Local93,
    All166,
}

impl FeatureMode {
    pub fn width(self) -> usize {
        match self {
            FeatureMode::Local93 => LOCAL_FEATURES,
            FeatureMode::All166 => TOTAL_FEATURES,
        }
    }
}

/// The dataset as parsed, before any per-step partitioning.
#[derive(Clone, Debug, PartialEq)]
pub struct RawDataset<T> {
    pub node_ids: Vec<u64>,
    pub time_step: Vec<u32>,
    /// N×166, `[93 local | 72 aggregated | time step]`.
    pub features: Dense<T>,
    pub labels: Vec<Label>,
    pub edges: Vec<(u64, u64)>,
    index: HashMap<u64, usize>,
}

impl<T: Scalar> RawDataset<T> {
    /// Assemble a dataset, enforcing unique ids and edge integrity.
    pub fn new(
        node_ids: Vec<u64>,
        time_step: Vec<u32>,
        features: Dense<T>,
        labels: Vec<Label>,
        edges: Vec<(u64, u64)>,
    ) -> Result<Self> {
        let n = node_ids.len();
        if time_step.len() != n || labels.len() != n || features.rows() != n {
            return Err(Error::Integrity(format!(
                "inconsistent row counts: {n} ids, {} steps, {} labels, {} feature rows",
                time_step.len(),
                labels.len(),
                features.rows()
            )));
        }
        if features.cols() != TOTAL_FEATURES {
            return Err(Error::Integrity(format!(
                "feature matrix must have {TOTAL_FEATURES} columns, found {}",
                features.cols()
            )));
        }
        let mut index = HashMap::with_capacity(n);
        for (i, &id) in node_ids.iter().enumerate() {
            if index.insert(id, i).is_some() {
                return Err(Error::Integrity(format!("duplicate node id {id}")));
            }
        }
        for &(u, v) in &edges {
            if !index.contains_key(&u) {
                return Err(Error::Integrity(format!("edge references unknown id {u}")));
            }
            if !index.contains_key(&v) {
                return Err(Error::Integrity(format!("edge references unknown id {v}")));
            }
        }
        Ok(Self { node_ids, time_step, features, labels, edges, index })
    }

    pub fn n(&self) -> usize {
        self.node_ids.len()
    }

    pub fn index_of(&self, id: u64) -> Option<usize> {
        self.index.get(&id).copied()
    }
}

/// One time step of the transaction graph, ready for a model.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeStepGraph<T> {
    pub step: u32,
    pub adjacency_norm: SparseSym<T>,
    /// S×d feature block; d is 166 as built, or 93 after [`Self::narrow`].
    pub features: Dense<T>,
    /// Labels as seen by training (possibly masked to Unknown).
    pub labels: Vec<Label>,
    /// Labels as loaded, kept for scoring after masking experiments.
    pub full_labels: Vec<Label>,
    /// Local row → global transaction id.
    pub node_index: Vec<u64>,
}

impl<T: Scalar> TimeStepGraph<T> {
    pub fn n_nodes(&self) -> usize {
        self.node_index.len()
    }

    pub fn labeled_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_labeled()).count()
    }

    /// Copy of this graph with only the selected feature columns.
    pub fn narrow(&self, mode: FeatureMode) -> Self {
        let width = mode.width();
        if width == self.features.cols() {
            return self.clone();
        }
        let mut features = Dense::zeros(self.features.rows(), width);
        for i in 0..self.features.rows() {
            features
                .row_mut(i)
                .copy_from_slice(&self.features.row(i)[..width]);
        }
        Self { features, ..self.clone() }
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(|l| l.trim_end_matches('\r').to_string()).collect())
}

fn parse_err(path: &Path, line: usize, detail: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        detail: detail.into(),
    }
}

/// Parse the three Elliptic-layout files. The features file has no header;
/// the edges and labels files may start with one (any first line that does
/// not parse as data is skipped).
pub fn load_dataset<T: Scalar>(
    features_path: &Path,
    edges_path: &Path,
    labels_path: &Path,
) -> Result<RawDataset<T>> {
    let mut node_ids = Vec::new();
    let mut time_step = Vec::new();
    let mut rows: Vec<T> = Vec::new();
    for (ln, line) in read_lines(features_path)?.iter().enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 2 + RAW_FEATURE_COLS {
            return Err(parse_err(
                features_path,
                ln + 1,
                format!("expected {} columns, found {}", 2 + RAW_FEATURE_COLS, fields.len()),
            ));
        }
        let id: u64 = fields[0]
            .trim()
            .parse()
            .map_err(|_| parse_err(features_path, ln + 1, format!("invalid id {:?}", fields[0])))?;
        let step: u32 = fields[1].trim().parse().map_err(|_| {
            parse_err(features_path, ln + 1, format!("invalid time step {:?}", fields[1]))
        })?;
        if step == 0 {
            return Err(parse_err(features_path, ln + 1, "time step must be ≥ 1"));
        }
        for f in &fields[2..] {
            let v: f64 = f.trim().parse().map_err(|_| {
                parse_err(features_path, ln + 1, format!("invalid feature value {f:?}"))
            })?;
            rows.push(T::from_f64(v));
        }
        rows.push(T::from_usize(step as usize));
        node_ids.push(id);
        time_step.push(step);
    }
    let features = Dense::from_vec(node_ids.len(), TOTAL_FEATURES, rows);

    let mut labels = vec![Label::Unknown; node_ids.len()];
    let index: HashMap<u64, usize> = node_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    for (ln, line) in read_lines(labels_path)?.iter().enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 2 {
            return Err(parse_err(
                labels_path,
                ln + 1,
                format!("expected 2 columns, found {}", fields.len()),
            ));
        }
        let id: u64 = match fields[0].trim().parse() {
            Ok(id) => id,
            Err(_) if ln == 0 => continue,
            Err(_) => {
                return Err(parse_err(labels_path, ln + 1, format!("invalid id {:?}", fields[0])))
            }
        };
        let label = match fields[1].trim() {
            "1" => Label::Illicit,
            "2" => Label::Licit,
            "unknown" => Label::Unknown,
            other => {
                return Err(parse_err(labels_path, ln + 1, format!("invalid class {other:?}")))
            }
        };
        let Some(&row) = index.get(&id) else {
            return Err(Error::Integrity(format!("labels file references unknown id {id}")));
        };
        labels[row] = label;
    }

    let mut edges = Vec::new();
    for (ln, line) in read_lines(edges_path)?.iter().enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 2 {
            return Err(parse_err(
                edges_path,
                ln + 1,
                format!("expected 2 columns, found {}", fields.len()),
            ));
        }
        let parsed: (std::result::Result<u64, _>, std::result::Result<u64, _>) =
            (fields[0].trim().parse(), fields[1].trim().parse());
        match parsed {
            (Ok(u), Ok(v)) => edges.push((u, v)),
            _ if ln == 0 => continue,
            _ => {
                return Err(parse_err(edges_path, ln + 1, format!("invalid edge row {line:?}")))
            }
        }
    }

    RawDataset::new(node_ids, time_step, features, labels, edges)
}

/// Copy of the selected feature columns of the whole dataset.
pub fn select_features<T: Scalar>(raw: &RawDataset<T>, mode: FeatureMode) -> Dense<T> {
    let width = mode.width();
    let mut out = Dense::zeros(raw.features.rows(), width);
    for i in 0..raw.features.rows() {
        out.row_mut(i).copy_from_slice(&raw.features.row(i)[..width]);
    }
    out
}

/// Partition nodes by time step and build one normalized graph per step,
/// ordered by ascending step. Node order within a step follows file order.
pub fn build_timestep_graphs<T: Scalar>(raw: &RawDataset<T>) -> Result<Vec<TimeStepGraph<T>>> {
    let mut members: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (row, &step) in raw.time_step.iter().enumerate() {
        members.entry(step).or_default().push(row);
    }
    // Global row → (step, local row).
    let mut local_of = vec![(0u32, 0usize); raw.n()];
    for (&step, rows) in &members {
        for (local, &row) in rows.iter().enumerate() {
            local_of[row] = (step, local);
        }
    }
    let mut step_edges: BTreeMap<u32, Vec<(usize, usize)>> = BTreeMap::new();
    for &(u, v) in &raw.edges {
        let (ru, rv) = (raw.index_of(u).unwrap(), raw.index_of(v).unwrap());
        let ((su, lu), (sv, lv)) = (local_of[ru], local_of[rv]);
        if su != sv {
            return Err(Error::Integrity(format!(
                "edge ({u}, {v}) crosses time steps {su} and {sv}"
            )));
        }
        step_edges.entry(su).or_default().push((lu, lv));
    }
    let mut graphs = Vec::with_capacity(members.len());
    for (&step, rows) in &members {
        let s = rows.len();
        let mut features = Dense::zeros(s, raw.features.cols());
        let mut labels = Vec::with_capacity(s);
        let mut node_index = Vec::with_capacity(s);
        for (local, &row) in rows.iter().enumerate() {
            features.row_mut(local).copy_from_slice(raw.features.row(row));
            labels.push(raw.labels[row]);
            node_index.push(raw.node_ids[row]);
        }
        let edges = step_edges.get(&step).map(Vec::as_slice).unwrap_or(&[]);
        let adjacency_norm = SparseSym::normalized_adjacency(s, edges)?;
        graphs.push(TimeStepGraph {
            step,
            adjacency_norm,
            features,
            full_labels: labels.clone(),
            labels,
            node_index,
        });
    }
    Ok(graphs)
}

/// Inclusive step ranges for the temporal split. A range with
/// `start > end` is empty.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train_steps: RangeInclusive<u32>,
    pub val_steps: RangeInclusive<u32>,
    pub test_steps: RangeInclusive<u32>,
}

impl Default for DatasetSplit {
    fn default() -> Self {
        Self {
            train_steps: 1..=29,
            val_steps: 30..=34,
            test_steps: 35..=49,
        }
    }
}

impl DatasetSplit {
    /// Every step in `1..=t_max` must fall in exactly one range.
    pub fn validate(&self, t_max: u32) -> Result<()> {
        for step in 1..=t_max {
            let hits = [&self.train_steps, &self.val_steps, &self.test_steps]
                .iter()
                .filter(|r| r.contains(&step))
                .count();
            match hits {
                0 => {
                    return Err(Error::Config(format!(
                        "step {step} is covered by no split range"
                    )))
                }
                1 => {}
                _ => {
                    return Err(Error::Config(format!(
                        "step {step} is covered by overlapping split ranges"
                    )))
                }
            }
        }
        Ok(())
    }
}

/// Partition graphs into (train, val, test) lists, order preserved.
pub fn temporal_split<T: Scalar>(
    graphs: Vec<TimeStepGraph<T>>,
    split: &DatasetSplit,
) -> Result<(Vec<TimeStepGraph<T>>, Vec<TimeStepGraph<T>>, Vec<TimeStepGraph<T>>)> {
    let t_max = graphs
        .iter()
        .map(|g| g.step)
        .max()
        .ok_or_else(|| Error::Config("no graphs to split".into()))?;
    split.validate(t_max)?;
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for g in graphs {
        if split.train_steps.contains(&g.step) {
            train.push(g);
        } else if split.val_steps.contains(&g.step) {
            val.push(g);
        } else {
            test.push(g);
        }
    }
    Ok((train, val, test))
}

/// Set exactly `⌊fraction·L⌋` of the L currently labeled nodes to Unknown,
/// chosen uniformly with the given seed. `full_labels` keeps the originals.
pub fn mask_label_fraction<T: Scalar>(
    mut graphs: Vec<TimeStepGraph<T>>,
    fraction: f64,
    seed: u64,
) -> Result<Vec<TimeStepGraph<T>>> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Config(format!("mask fraction {fraction} outside [0, 1]")));
    }
    let mut labeled: Vec<(usize, usize)> = Vec::new();
    for (gi, g) in graphs.iter().enumerate() {
        for (row, l) in g.labels.iter().enumerate() {
            if l.is_labeled() {
                labeled.push((gi, row));
            }
        }
    }
    let k = (fraction * labeled.len() as f64).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = labeled.len();
    for i in 0..k {
        let j = rng.gen_range(i..n);
        labeled.swap(i, j);
    }
    for &(gi, row) in &labeled[..k] {
        graphs[gi].labels[row] = Label::Unknown;
    }
    Ok(graphs)
}
