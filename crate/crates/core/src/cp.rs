//! Tensorized aggregation: a partially symmetric CP-decomposed multilinear
//! map with product pooling over each node's neighborhood, an explicit
//! tensor-contraction oracle for correctness tests, and the CP-GCN model.
//!
//! A rank-R layer holds a factor matrix `W` shared across all input modes,
//! an output factor `M`, and two biases. Oracle mode applies the plain
//! product over the neighbor set with identity nonlinearity, matching the
//! exact multilinear semantics; production (weighted) mode uses softplus
//! and a log-domain geometric mean weighted by the normalized adjacency,
//! which keeps magnitudes bounded for any node degree.

use crate::dense::Dense;
use crate::elliptic::TimeStepGraph;
use crate::error::{Error, Result};
use crate::gcn::{relu_linear, GnnModel, GnnOutput};
use crate::optim::ParameterStore;
use crate::scalar::Scalar;
use crate::sparse::SparseSym;
use crate::tape::{softplus_stable, Tape, Var};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Clamp bounds applied to pooled factors before the log.
pub const CLAMP_LO: f64 = 1e-8;
pub const CLAMP_HI: f64 = 1e8;

/// Parameters of one CP layer: `W` is d_in×R (shared across input modes),
/// `b_w` is 1×R, `M` is R×d_out, `b_m` is 1×d_out.
#[derive(Clone, Debug, PartialEq)]
pub struct CpLayerParams<T> {
    pub rank: usize,
    pub w: Dense<T>,
    pub b_w: Dense<T>,
    pub m: Dense<T>,
    pub b_m: Dense<T>,
}

impl<T: Scalar> CpLayerParams<T> {
    pub fn new_seeded(d_in: usize, d_out: usize, rank: usize, rng: &mut impl Rng) -> Self {
        Self {
            rank,
            w: Dense::glorot(d_in, rank, rng),
            b_w: Dense::zeros(1, rank),
            m: Dense::glorot(rank, d_out, rng),
            b_m: Dense::zeros(1, d_out),
        }
    }

    pub fn d_in(&self) -> usize {
        self.w.rows()
    }

    pub fn d_out(&self) -> usize {
        self.m.cols()
    }

    /// `R·(d_in+d_out) + R + d_out`.
    pub fn parameter_count(&self) -> usize {
        self.rank * (self.d_in() + self.d_out()) + self.rank + self.d_out()
    }

    /// Register this layer's matrices under `prefix.{w,bw,m,bm}`.
    pub fn insert_into(&self, store: &mut ParameterStore<T>, prefix: &str) -> Result<()> {
        store.insert(&format!("{prefix}.w"), self.w.clone())?;
        store.insert(&format!("{prefix}.bw"), self.b_w.clone())?;
        store.insert(&format!("{prefix}.m"), self.m.clone())?;
        store.insert(&format!("{prefix}.bm"), self.b_m.clone())
    }

    /// Extract a layer previously registered under `prefix`.
    pub fn from_store(store: &ParameterStore<T>, prefix: &str) -> Result<Self> {
        let w = store.value(&format!("{prefix}.w"))?.clone();
        let b_w = store.value(&format!("{prefix}.bw"))?.clone();
        let m = store.value(&format!("{prefix}.m"))?.clone();
        let b_m = store.value(&format!("{prefix}.bm"))?.clone();
        Ok(Self { rank: w.cols(), w, b_w, m, b_m })
    }
}

/// Dense tensor of arbitrary order, row-major with the last index fastest.
/// Desk-scale only; used to verify the CP layer against explicit
/// contraction.
#[derive(Clone, Debug, PartialEq)]
pub struct FullTensor<T> {
    dims: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> FullTensor<T> {
    pub fn zeros(dims: Vec<usize>) -> Self {
        let len = dims.iter().product();
        Self { dims, data: vec![T::zero(); len] }
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn dim(&self, axis: usize) -> usize {
        self.dims[axis]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, idx: &[usize]) -> T {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: T) {
        let o = self.offset(idx);
        self.data[o] = v;
    }

    fn offset(&self, idx: &[usize]) -> usize {
        assert_eq!(idx.len(), self.dims.len(), "index order mismatch");
        let mut o = 0;
        for (i, (&ix, &d)) in idx.iter().zip(&self.dims).enumerate() {
            assert!(ix < d, "index {ix} out of bounds for axis {i} of size {d}");
            o = o * d + ix;
        }
        o
    }
}

/// Materialize the full tensor encoded by rank-R factors: entry
/// `(i₁,…,i_k,o)` is `Σ_r W[i₁,r]·…·W[i_k,r]·M[r,o]`. Biases are not part
/// of the tensor.
pub fn materialize_cp_tensor<T: Scalar>(params: &CpLayerParams<T>, k: usize) -> FullTensor<T> {
    let d_in = params.d_in();
    let d_out = params.d_out();
    let mut dims = vec![d_in; k];
    dims.push(d_out);
    let mut t = FullTensor::zeros(dims);
    let mut idx = vec![0usize; k + 1];
    for flat in 0..t.len() {
        let mut val = T::zero();
        for r in 0..params.rank {
            let mut p = params.m.get(r, idx[k]);
            for &i in &idx[..k] {
                p *= params.w.get(i, r);
            }
            val += p;
        }
        t.data[flat] = val;
        for pos in (0..=k).rev() {
            idx[pos] += 1;
            if idx[pos] < t.dims[pos] {
                break;
            }
            idx[pos] = 0;
        }
    }
    t
}

/// Exact multi-mode contraction `T ×₁ x₁ ×₂ … ×_k x_k`, leaving the last
/// (output) mode: `out[o] = Σ_{i₁..i_k} T[i₁,…,i_k,o]·x₁[i₁]·…·x_k[i_k]`.
pub fn cp_contract_reference<T: Scalar>(t: &FullTensor<T>, inputs: &[&[T]]) -> Result<Vec<T>> {
    let k = inputs.len();
    if t.ndim() != k + 1 {
        return Err(Error::shape(
            "cp_contract_reference",
            format!("{}-mode tensor contracted with {k} inputs", t.ndim()),
        ));
    }
    for (j, x) in inputs.iter().enumerate() {
        if x.len() != t.dim(j) {
            return Err(Error::shape(
                "cp_contract_reference",
                format!("input {j} has length {}, mode size is {}", x.len(), t.dim(j)),
            ));
        }
    }
    let d_out = t.dim(k);
    let mut out = vec![T::zero(); d_out];
    let mut idx = vec![0usize; k + 1];
    for flat in 0..t.len() {
        let mut prod = t.data[flat];
        for (j, x) in inputs.iter().enumerate() {
            prod *= x[idx[j]];
        }
        out[idx[k]] += prod;
        for pos in (0..=k).rev() {
            idx[pos] += 1;
            if idx[pos] < t.dims[pos] {
                break;
            }
            idx[pos] = 0;
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolMode {
    /// Identity nonlinearity, plain product over the neighbor set.
    Oracle,
    /// Softplus nonlinearity, adjacency-weighted geometric mean in the
    /// log domain with clamping.
    Weighted,
}

/// Forward pass of one CP pooling layer (no trailing nonlinearity).
/// For node v: `z_u = σ(H_u·W + b_w)` over neighbors u (self included via
/// the adjacency diagonal), factors pooled per mode, then `pooled·M + b_m`.
pub fn cp_pool_forward<T: Scalar>(
    params: &CpLayerParams<T>,
    adj: &SparseSym<T>,
    h: &Dense<T>,
    mode: PoolMode,
) -> Result<Dense<T>> {
    if h.cols() != params.d_in() {
        return Err(Error::shape(
            "cp_pool_forward",
            format!("features are {} wide, layer expects {}", h.cols(), params.d_in()),
        ));
    }
    if h.rows() != adj.n() {
        return Err(Error::shape(
            "cp_pool_forward",
            format!("{} feature rows for {} nodes", h.rows(), adj.n()),
        ));
    }
    let r = params.rank;
    let mut z = h.matmul(&params.w)?;
    for i in 0..z.rows() {
        for (v, &b) in z.row_mut(i).iter_mut().zip(params.b_w.data()) {
            *v += b;
        }
    }
    if mode == PoolMode::Weighted {
        z = z.map(softplus_stable);
    }
    let (lo, hi) = (T::from_f64(CLAMP_LO), T::from_f64(CLAMP_HI));
    let mut pooled = Dense::zeros(h.rows(), r);
    for v in 0..adj.n() {
        let row = pooled.row_mut(v);
        match mode {
            PoolMode::Oracle => {
                row.iter_mut().for_each(|x| *x = T::one());
                for (u, _) in adj.row(v) {
                    for (p, &zu) in row.iter_mut().zip(z.row(u)) {
                        *p *= zu;
                    }
                }
            }
            PoolMode::Weighted => {
                for (u, a) in adj.row(v) {
                    for (p, &zu) in row.iter_mut().zip(z.row(u)) {
                        *p += a * zu.max(lo).min(hi).ln();
                    }
                }
                row.iter_mut().for_each(|x| *x = x.exp());
            }
        }
        if row.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric {
                node: v.to_string(),
                detail: "pooled factor is not finite".into(),
            });
        }
    }
    let mut out = pooled.matmul(&params.m)?;
    for i in 0..out.rows() {
        for (v, &b) in out.row_mut(i).iter_mut().zip(params.b_m.data()) {
            *v += b;
        }
        if out.row(i).iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric {
                node: i.to_string(),
                detail: "layer output is not finite".into(),
            });
        }
    }
    Ok(out)
}

/// Taped weighted-mode CP layer built from tape primitives, for training.
/// Matches [`cp_pool_forward`] with [`PoolMode::Weighted`].
pub fn cp_layer_taped<'g, T: Scalar>(
    tape: &mut Tape<'g, T>,
    params: &ParameterStore<T>,
    prefix: &str,
    adj: &'g SparseSym<T>,
    h: Var,
) -> Result<Var> {
    let w = tape.param(params, &format!("{prefix}.w"))?;
    let bw = tape.param(params, &format!("{prefix}.bw"))?;
    let m = tape.param(params, &format!("{prefix}.m"))?;
    let bm = tape.param(params, &format!("{prefix}.bm"))?;
    let hw = tape.matmul(h, w)?;
    let pre = tape.add_bias_row(hw, bw)?;
    let z = tape.softplus(pre);
    let lnz = tape.clamp_ln(z, T::from_f64(CLAMP_LO), T::from_f64(CLAMP_HI));
    let mixed = tape.spmm(adj, lnz)?;
    let pooled = tape.exp(mixed);
    let pm = tape.matmul(pooled, m)?;
    tape.add_bias_row(pm, bm)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CpGcnConfig {
    pub in_dim: usize,
    pub linear_sizes: (usize, usize),
    pub conv_sizes: (usize, usize),
    pub ranks: (usize, usize),
    pub out_dim: usize,
}

impl Default for CpGcnConfig {
    fn default() -> Self {
        Self {
            in_dim: 93,
            linear_sizes: (25, 15),
            conv_sizes: (12, 5),
            ranks: (10, 4),
            out_dim: 2,
        }
    }
}

impl CpGcnConfig {
    pub fn embedding_width(&self) -> usize {
        self.linear_sizes.1 + self.conv_sizes.1
    }

    pub fn parameter_count(&self) -> usize {
        let (l1, l2) = self.linear_sizes;
        let (c1, c2) = self.conv_sizes;
        let (r1, r2) = self.ranks;
        let dense = |i: usize, o: usize| i * o + o;
        let cp = |d_in: usize, d_out: usize, r: usize| r * (d_in + d_out) + r + d_out;
        dense(self.in_dim, l1)
            + dense(l1, l2)
            + cp(self.in_dim, c1, r1)
            + cp(c1, c2, r2)
            + dense(self.embedding_width(), self.out_dim)
    }

    fn validate(&self) -> Result<()> {
        let sizes = [
            self.in_dim,
            self.linear_sizes.0,
            self.linear_sizes.1,
            self.conv_sizes.0,
            self.conv_sizes.1,
            self.ranks.0,
            self.ranks.1,
        ];
        if sizes.iter().any(|&s| s == 0) {
            return Err(Error::Config("all sizes and ranks must be ≥ 1".into()));
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

/// Same two-branch wiring as the plain model, with the graph convolutions
/// replaced by weighted-mode CP pooling layers (each followed by ReLU).
#[derive(Clone, Debug)]
pub struct CpGcnModel<T> {
    pub config: CpGcnConfig,
    pub params: ParameterStore<T>,
}

impl<T: Scalar> CpGcnModel<T> {
    pub fn new(config: CpGcnConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParameterStore::new();
        let (l1, l2) = config.linear_sizes;
        let (c1, c2) = config.conv_sizes;
        params.insert("linear1.w", Dense::glorot(config.in_dim, l1, &mut rng))?;
        params.insert("linear1.b", Dense::zeros(1, l1))?;
        params.insert("linear2.w", Dense::glorot(l1, l2, &mut rng))?;
        params.insert("linear2.b", Dense::zeros(1, l2))?;
        CpLayerParams::new_seeded(config.in_dim, c1, config.ranks.0, &mut rng)
            .insert_into(&mut params, "cp1")?;
        CpLayerParams::new_seeded(c1, c2, config.ranks.1, &mut rng)
            .insert_into(&mut params, "cp2")?;
        params.insert(
            "out.w",
            Dense::glorot(config.embedding_width(), config.out_dim, &mut rng),
        )?;
        params.insert("out.b", Dense::zeros(1, config.out_dim))?;
        Ok(Self { config, params })
    }
}

impl<T: Scalar> GnnModel<T> for CpGcnModel<T> {
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
        meta.insert("arch".to_string(), "cp-gcn".to_string());
        meta.insert(
            "ranks".to_string(),
            format!("{},{}", self.config.ranks.0, self.config.ranks.1),
        );
        meta
    }

    fn forward<'g>(
        &self,
        tape: &mut Tape<'g, T>,
        graph: &'g TimeStepGraph<T>,
    ) -> Result<GnnOutput> {
        if graph.features.cols() != self.config.in_dim {
            return Err(Error::shape(
                "cp_gcn_forward",
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
        let cp1 = cp_layer_taped(tape, &self.params, "cp1", adj, x)?;
        let cp1 = tape.relu(cp1);
        let cp2 = cp_layer_taped(tape, &self.params, "cp2", adj, cp1)?;
        let cp2 = tape.relu(cp2);
        let embedding = tape.concat_cols(lin2, cp2)?;
        let ow = tape.param(&self.params, "out.w")?;
        let ob = tape.param(&self.params, "out.b")?;
        let projected = tape.matmul(embedding, ow)?;
        let logits = tape.add_bias_row(projected, ob)?;
        let probs = tape.row_softmax(logits);
        Ok(GnnOutput { logits, probs, embedding })
    }
}
