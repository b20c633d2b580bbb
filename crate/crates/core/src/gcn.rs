//! The graph-convolutional classifier: two parallel branches (plain linear
//! layers and graph convolutions over the normalized adjacency) whose
//! outputs are concatenated into the penultimate embedding, plus an
//! optional skip term that adds `X·W_skip` directly to the logits.

use crate::elliptic::TimeStepGraph;
use crate::error::{Error, Result};
use crate::optim::ParameterStore;
use crate::scalar::Scalar;
use crate::sparse::SparseSym;
use crate::tape::{Tape, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GcnConfig {
    pub in_dim: usize,
    pub linear_sizes: (usize, usize),
    pub conv_sizes: (usize, usize),
    pub out_dim: usize,
    pub skip_connection: bool,
}

impl Default for GcnConfig {
    fn default() -> Self {
        Self {
            in_dim: 93,
            linear_sizes: (50, 30),
            conv_sizes: (50, 10),
            out_dim: 2,
            skip_connection: false,
        }
    }
}

impl GcnConfig {
    pub fn embedding_width(&self) -> usize {
        self.linear_sizes.1 + self.conv_sizes.1
    }

    /// Total scalar parameters implied by the shapes, biases included.
    pub fn parameter_count(&self) -> usize {
        let (l1, l2) = self.linear_sizes;
        let (c1, c2) = self.conv_sizes;
        let dense = |i: usize, o: usize| i * o + o;
        let mut n = dense(self.in_dim, l1)
            + dense(l1, l2)
            + dense(self.in_dim, c1)
            + dense(c1, c2)
            + dense(self.embedding_width(), self.out_dim);
        if self.skip_connection {
            n += self.in_dim * self.out_dim;
        }
        n
    }

    fn validate(&self) -> Result<()> {
        let sizes = [
            self.in_dim,
            self.linear_sizes.0,
            self.linear_sizes.1,
            self.conv_sizes.0,
            self.conv_sizes.1,
        ];
        if sizes.iter().any(|&s| s == 0) {
            return Err(Error::Config("all layer sizes must be ≥ 1".into()));
        }
        if self.out_dim != 2 {
            return Err(Error::Config(format!(
                "binary classifier requires out_dim 2, got {}",
                self.out_dim
            )));
        }
        Ok(())
    }
}

/// Forward-pass handles into the tape.
pub struct GnnOutput {
    pub logits: Var,
    pub probs: Var,
    pub embedding: Var,
}

/// Common surface of the graph classifiers, generic over architecture so
/// the trainer works with both the plain and the tensorized variant.
pub trait GnnModel<T: Scalar> {
    fn params(&self) -> &ParameterStore<T>;
    fn params_mut(&mut self) -> &mut ParameterStore<T>;
    fn set_params(&mut self, params: ParameterStore<T>);
    fn in_dim(&self) -> usize;
    fn embedding_width(&self) -> usize;
    fn parameter_count(&self) -> usize;
    /// Metadata recorded in checkpoints (architecture identifiers).
    fn checkpoint_meta(&self) -> BTreeMap<String, String>;
    fn forward<'g>(
        &self,
        tape: &mut Tape<'g, T>,
        graph: &'g TimeStepGraph<T>,
    ) -> Result<GnnOutput>;
}

#[derive(Clone, Debug)]
pub struct GcnModel<T> {
    pub config: GcnConfig,
    pub params: ParameterStore<T>,
}

impl<T: Scalar> GcnModel<T> {
    /// Glorot-initialized weights, zero biases. Weight matrices draw from
    /// one seeded stream in a fixed declaration order, so a seed pins the
    /// whole model.
    pub fn new(config: GcnConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParameterStore::new();
        let (l1, l2) = config.linear_sizes;
        let (c1, c2) = config.conv_sizes;
        let mut dense_layer = |params: &mut ParameterStore<T>,
                               name: &str,
                               i: usize,
                               o: usize|
         -> Result<()> {
            params.insert(&format!("{name}.w"), crate::dense::Dense::glorot(i, o, &mut rng))?;
            params.insert(&format!("{name}.b"), crate::dense::Dense::zeros(1, o))
        };
        dense_layer(&mut params, "linear1", config.in_dim, l1)?;
        dense_layer(&mut params, "linear2", l1, l2)?;
        dense_layer(&mut params, "conv1", config.in_dim, c1)?;
        dense_layer(&mut params, "conv2", c1, c2)?;
        dense_layer(&mut params, "out", config.embedding_width(), config.out_dim)?;
        if config.skip_connection {
            params.insert(
                "skip.w",
                crate::dense::Dense::glorot(config.in_dim, config.out_dim, &mut rng),
            )?;
        }
        Ok(Self { config, params })
    }
}

/// One graph convolution: `ReLU(Ã·H·W + b)` with the bias broadcast per row.
pub fn gcn_layer<'g, T: Scalar>(
    tape: &mut Tape<'g, T>,
    adj: &'g SparseSym<T>,
    h: Var,
    w: Var,
    b: Var,
) -> Result<Var> {
    let hw = tape.matmul(h, w)?;
    let mixed = tape.spmm(adj, hw)?;
    let shifted = tape.add_bias_row(mixed, b)?;
    Ok(tape.relu(shifted))
}

/// A linear layer `ReLU(X·W + b)` shared by both branch stacks.
pub(crate) fn relu_linear<'g, T: Scalar>(
    tape: &mut Tape<'g, T>,
    params: &ParameterStore<T>,
    name: &str,
    x: Var,
) -> Result<Var> {
    let w = tape.param(params, &format!("{name}.w"))?;
    let b = tape.param(params, &format!("{name}.b"))?;
    let xw = tape.matmul(x, w)?;
    let shifted = tape.add_bias_row(xw, b)?;
    Ok(tape.relu(shifted))
}

impl<T: Scalar> GnnModel<T> for GcnModel<T> {
    fn params(&self) -> &ParameterStore<T> {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParameterStore<T> {
        &mut self.params
    }

    fn set_params(&mut self, params: ParameterStore<T>) {
        self.params = params;
    }

    fn in_dim(&self) -> usize {
        self.config.in_dim
    }

    fn embedding_width(&self) -> usize {
        self.config.embedding_width()
    }

    fn parameter_count(&self) -> usize {
        self.config.parameter_count()
    }

    fn checkpoint_meta(&self) -> BTreeMap<String, String> {
        let mut meta = BTreeMap::new();
        meta.insert("arch".to_string(), "gcn".to_string());
        meta.insert("skip".to_string(), self.config.skip_connection.to_string());
        meta
    }

    fn forward<'g>(
        &self,
        tape: &mut Tape<'g, T>,
        graph: &'g TimeStepGraph<T>,
    ) -> Result<GnnOutput> {
        if graph.features.cols() != self.config.in_dim {
            return Err(Error::shape(
                "gcn_forward",
                format!(
                    "graph features are {} wide, model expects {}",
                    graph.features.cols(),
                    self.config.in_dim
                ),
            ));
        }
        let x = tape.constant(graph.features.clone());
        let lin1 = relu_linear(tape, &self.params, "linear1", x)?;
        let lin2 = relu_linear(tape, &self.params, "linear2", lin1)?;
        let adj = &graph.adjacency_norm;
        let c1w = tape.param(&self.params, "conv1.w")?;
        let c1b = tape.param(&self.params, "conv1.b")?;
        let conv1 = gcn_layer(tape, adj, x, c1w, c1b)?;
        let c2w = tape.param(&self.params, "conv2.w")?;
        let c2b = tape.param(&self.params, "conv2.b")?;
        let conv2 = gcn_layer(tape, adj, conv1, c2w, c2b)?;
        let embedding = tape.concat_cols(lin2, conv2)?;
        let ow = tape.param(&self.params, "out.w")?;
        let ob = tape.param(&self.params, "out.b")?;
        let projected = tape.matmul(embedding, ow)?;
        let mut logits = tape.add_bias_row(projected, ob)?;
        if self.config.skip_connection {
            let sw = tape.param(&self.params, "skip.w")?;
            let skip = tape.matmul(x, sw)?;
            logits = tape.add(logits, skip)?;
        }
        let probs = tape.row_softmax(logits);
        Ok(GnnOutput { logits, probs, embedding })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::Dense;
    use crate::elliptic::Label;
    use crate::gradcheck::finite_difference_check;

    fn toy_graph(n: usize, edges: &[(usize, usize)], width: usize) -> TimeStepGraph<f64> {
        let features = Dense::from_vec(
            n,
            width,
            (0..n * width)
                .map(|i| ((i * 37 % 19) as f64 - 9.0) / 10.0)
                .collect(),
        );
        TimeStepGraph {
            step: 1,
            adjacency_norm: SparseSym::normalized_adjacency(n, edges).unwrap(),
            features,
            labels: vec![Label::Unknown; n],
            full_labels: vec![Label::Unknown; n],
            node_index: (0..n as u64).collect(),
        }
    }

    #[test]
    fn layer_reduces_to_identity() {
        let adj = SparseSym::normalized_adjacency(3, &[]).unwrap();
        let h_val = Dense::from_rows(&[vec![1.0, 0.5], vec![0.0, 2.0], vec![3.0, 0.1]]);
        let mut tape = Tape::new();
        let h = tape.constant(h_val.clone());
        let w = tape.constant(Dense::eye(2));
        let b = tape.constant(Dense::zeros(1, 2));
        let out = gcn_layer(&mut tape, &adj, h, w, b).unwrap();
        assert_eq!(tape.value(out), &h_val);
    }

    #[test]
    fn layer_hand_example() {
        // One edge on two nodes: Ã is the all-0.5 matrix.
        let adj = SparseSym::normalized_adjacency(2, &[(0, 1)]).unwrap();
        let mut tape = Tape::new();
        let h = tape.constant(Dense::from_rows(&[vec![2.0, 0.0], vec![0.0, 2.0]]));
        let w = tape.constant(Dense::eye(2));
        let b = tape.constant(Dense::zeros(1, 2));
        let out = gcn_layer(&mut tape, &adj, h, w, b).unwrap();
        assert_eq!(tape.value(out).data(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn layer_gradient_matches_finite_differences() {
        let adj = SparseSym::normalized_adjacency(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)])
            .unwrap();
        let h = Dense::from_vec(
            5,
            4,
            (0..20).map(|i| ((i * 13 % 17) as f64 - 8.0) / 4.0).collect(),
        );
        let mut store = ParameterStore::new();
        store
            .insert(
                "w",
                Dense::from_vec(4, 3, (0..12).map(|i| ((i * 7 % 11) as f64 - 5.0) / 6.0).collect()),
            )
            .unwrap();
        store
            .insert("b", Dense::from_rows(&[vec![0.2, -0.4, 0.15]]))
            .unwrap();
        let err = finite_difference_check(
            |s: &mut ParameterStore<f64>, with_grad| {
                let mut tape = Tape::new();
                let hv = tape.constant(h.clone());
                let w = tape.param(s, "w").unwrap();
                let b = tape.param(s, "b").unwrap();
                let out = gcn_layer(&mut tape, &adj, hv, w, b).unwrap();
                let sq = tape.hadamard(out, out).unwrap();
                let loss = tape.sum(sq);
                if with_grad {
                    tape.backward(loss, s).unwrap();
                }
                tape.value(loss).get(0, 0)
            },
            &mut store,
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-5, "rel err {err}");
    }

    #[test]
    fn forward_shapes_and_probability_rows() {
        let config = GcnConfig::default();
        let model = GcnModel::<f64>::new(config, 3).unwrap();
        let graph = toy_graph(6, &[(0, 1), (1, 2), (3, 4)], 93);
        let mut tape = Tape::new();
        let out = model.forward(&mut tape, &graph).unwrap();
        assert_eq!(tape.value(out.embedding).cols(), 40);
        assert_eq!(tape.value(out.logits).cols(), 2);
        let probs = tape.value(out.probs);
        for i in 0..probs.rows() {
            let s: f64 = probs.row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(probs.row(i).iter().all(|&p| (0.0..=1.0).contains(&p)));
        }
    }

    #[test]
    fn wrong_feature_width_is_shape_error() {
        let model = GcnModel::<f64>::new(GcnConfig::default(), 0).unwrap();
        let graph = toy_graph(3, &[], 166);
        let mut tape = Tape::new();
        assert!(model.forward(&mut tape, &graph).is_err());
    }

    #[test]
    fn zeroed_skip_model_is_logistic_on_bias() {
        let config = GcnConfig { skip_connection: true, ..GcnConfig::default() };
        let mut model = GcnModel::<f64>::new(config, 1).unwrap();
        let names: Vec<String> = model.params.names().map(str::to_string).collect();
        for name in names {
            model.params.value_mut(&name).unwrap().fill(0.0);
        }
        model
            .params
            .value_mut("out.b")
            .unwrap()
            .data_mut()
            .copy_from_slice(&[0.3, -0.2]);
        let graph = toy_graph(4, &[(0, 1), (2, 3)], 93);
        let mut tape = Tape::new();
        let out = model.forward(&mut tape, &graph).unwrap();
        let expected_pos = (0.3f64).exp() / ((0.3f64).exp() + (-0.2f64).exp());
        let probs = tape.value(out.probs);
        for i in 0..4 {
            assert!((probs.get(i, 0) - expected_pos).abs() < 1e-12);
        }
    }

    #[test]
    fn node_permutation_permutes_logits() {
        let model = GcnModel::<f64>::new(GcnConfig::default(), 9).unwrap();
        let graph = toy_graph(5, &[(0, 1), (1, 2), (2, 3), (3, 4)], 93);
        // Reverse the node order.
        let perm: Vec<usize> = (0..5).rev().collect();
        let mut permuted_features = Dense::zeros(5, 93);
        for (new, &old) in perm.iter().enumerate() {
            permuted_features.row_mut(new).copy_from_slice(graph.features.row(old));
        }
        let permuted = TimeStepGraph {
            step: 1,
            adjacency_norm: SparseSym::normalized_adjacency(
                5,
                &[(4, 3), (3, 2), (2, 1), (1, 0)],
            )
            .unwrap(),
            features: permuted_features,
            labels: graph.labels.clone(),
            full_labels: graph.full_labels.clone(),
            node_index: graph.node_index.clone(),
        };
        let mut tape_a = Tape::new();
        let out_a = model.forward(&mut tape_a, &graph).unwrap();
        let mut tape_b = Tape::new();
        let out_b = model.forward(&mut tape_b, &permuted).unwrap();
        let la = tape_a.value(out_a.logits);
        let lb = tape_b.value(out_b.logits);
        for (new, &old) in perm.iter().enumerate() {
            for c in 0..2 {
                assert!((la.get(old, c) - lb.get(new, c)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_weights_give_constant_logits() {
        let mut model = GcnModel::<f64>::new(GcnConfig::default(), 2).unwrap();
        let names: Vec<String> = model.params.names().map(str::to_string).collect();
        for name in names {
            model.params.value_mut(&name).unwrap().fill(0.0);
        }
        let graph = toy_graph(4, &[(0, 1)], 93);
        let mut tape = Tape::new();
        let out = model.forward(&mut tape, &graph).unwrap();
        let logits = tape.value(out.logits);
        for i in 1..4 {
            assert_eq!(logits.row(i), logits.row(0));
        }
    }

    #[test]
    fn parameter_counts() {
        // A single 93→50 dense layer contributes 93·50 weights + 50 biases.
        assert_eq!(93 * 50 + 50, 4700);
        let config = GcnConfig::default();
        let model = GcnModel::<f64>::new(config.clone(), 0).unwrap();
        assert_eq!(config.parameter_count(), 11522);
        assert_eq!(model.parameter_count(), model.params.total_len());
        let skip = GcnConfig { skip_connection: true, ..config };
        let skip_model = GcnModel::<f64>::new(skip.clone(), 0).unwrap();
        assert_eq!(skip.parameter_count(), 11522 + 186);
        assert_eq!(skip_model.params.total_len(), 11708);
    }

    #[test]
    fn same_seed_same_model() {
        let a = GcnModel::<f64>::new(GcnConfig::default(), 5).unwrap();
        let b = GcnModel::<f64>::new(GcnConfig::default(), 5).unwrap();
        assert_eq!(a.params.value("linear1.w").unwrap(), b.params.value("linear1.w").unwrap());
        let c = GcnModel::<f64>::new(GcnConfig::default(), 6).unwrap();
        assert_ne!(a.params.value("linear1.w").unwrap(), c.params.value("linear1.w").unwrap());
    }

    #[test]
    fn gradient_of_full_model_matches_finite_differences() {
        let config = GcnConfig {
            in_dim: 4,
            linear_sizes: (3, 2),
            conv_sizes: (3, 2),
            out_dim: 2,
            skip_connection: true,
        };
        let mut model = GcnModel::<f64>::new(config, 11).unwrap();
        // Zero biases leave dead-ReLU rows exactly at the kink, where
        // central differences are meaningless; nudge them off it.
        for name in ["linear1.b", "linear2.b", "conv1.b", "conv2.b", "out.b"] {
            for (j, v) in model.params.value_mut(name).unwrap().data_mut().iter_mut().enumerate() {
                *v = 0.05 + 0.03 * j as f64;
            }
        }
        let graph = toy_graph(6, &[(0, 1), (1, 2), (2, 3), (4, 5)], 4);
        let labels = [
            Label::Illicit,
            Label::Licit,
            Label::Unknown,
            Label::Illicit,
            Label::Licit,
            Label::Unknown,
        ];
        let mut store = model.params.clone();
        let err = finite_difference_check(
            |s: &mut ParameterStore<f64>, with_grad| {
                let eval = GcnModel { config: model.config.clone(), params: s.clone() };
                let mut tape = Tape::new();
                let out = eval.forward(&mut tape, &graph).unwrap();
                let loss = tape
                    .weighted_cross_entropy(out.probs, &labels, (0.7, 0.3))
                    .unwrap();
                if with_grad {
                    tape.backward(loss, s).unwrap();
                }
                tape.value(loss).get(0, 0)
            },
            &mut store,
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-5, "rel err {err}");
    }
}
