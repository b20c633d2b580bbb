//! Reverse-mode automatic differentiation on a flat operation tape.
//!
//! The tape records matrix-level primitives during the forward pass and
//! replays adjoints in exact reverse order during [`Tape::backward`],
//! accumulating parameter gradients into a [`ParameterStore`]. One tape
//! serves one forward/backward pair; training builds a fresh tape per
//! graph per epoch.

use crate::dense::Dense;
use crate::elliptic::Label;
use crate::error::{Error, Result};
use crate::optim::ParameterStore;
use crate::scalar::Scalar;
use crate::sparse::SparseSym;

/// Handle to a tape node. Only valid for the tape that produced it.
#[derive(Clone, Copy, Debug)]
pub struct Var(usize);

enum Op<'g, T: Scalar> {
    Param(String),
    Const,
    MatMul(usize, usize),
    SpMm(&'g SparseSym<T>, usize),
    Relu(usize),
    Softplus(usize),
    ClampLn { x: usize, lo: T, hi: T },
    Exp(usize),
    Hadamard(usize, usize),
    Add(usize, usize),
    AddBiasRow { x: usize, bias: usize },
    ConcatCols(usize, usize),
    RowSoftmax(usize),
    Sum(usize),
    /// Stores the precomputed ∂loss/∂probs so backward is a scaled copy.
    CrossEntropy { probs: usize, coeff: Dense<T> },
}

pub struct Tape<'g, T: Scalar> {
    ops: Vec<Op<'g, T>>,
    values: Vec<Dense<T>>,
    needs: Vec<bool>,
    /// Set when a cross-entropy node saw zero labeled rows.
    pub warned_unlabeled: bool,
}

impl<'g, T: Scalar> Default for Tape<'g, T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'g, T: Scalar> Tape<'g, T> {
    pub fn new() -> Self {
        Self {
            ops: Vec::new(),
            values: Vec::new(),
            needs: Vec::new(),
            warned_unlabeled: false,
        }
    }

    pub fn value(&self, v: Var) -> &Dense<T> {
        &self.values[v.0]
    }

    fn push(&mut self, op: Op<'g, T>, value: Dense<T>, needs: bool) -> Var {
        self.ops.push(op);
        self.values.push(value);
        self.needs.push(needs);
        Var(self.values.len() - 1)
    }

    /// Record a parameter leaf; value is copied out of the store.
    pub fn param(&mut self, store: &ParameterStore<T>, name: &str) -> Result<Var> {
        let value = store.value(name)?.clone();
        Ok(self.push(Op::Param(name.to_string()), value, true))
    }

    pub fn constant(&mut self, value: Dense<T>) -> Var {
        self.push(Op::Const, value, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.values[a.0].matmul(&self.values[b.0])?;
        let needs = self.needs[a.0] || self.needs[b.0];
        Ok(self.push(Op::MatMul(a.0, b.0), value, needs))
    }

    pub fn spmm(&mut self, adj: &'g SparseSym<T>, h: Var) -> Result<Var> {
        let value = adj.spmm(&self.values[h.0])?;
        let needs = self.needs[h.0];
        Ok(self.push(Op::SpMm(adj, h.0), value, needs))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.values[x.0].map(|v| v.max(T::zero()));
        let needs = self.needs[x.0];
        self.push(Op::Relu(x.0), value, needs)
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        let value = self.values[x.0].map(softplus_stable);
        let needs = self.needs[x.0];
        self.push(Op::Softplus(x.0), value, needs)
    }

    /// ln(clamp(x, lo, hi)); gradient is zero in the clamped region.
    pub fn clamp_ln(&mut self, x: Var, lo: T, hi: T) -> Var {
        let value = self.values[x.0].map(|v| v.max(lo).min(hi).ln());
        let needs = self.needs[x.0];
        self.push(Op::ClampLn { x: x.0, lo, hi }, value, needs)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let value = self.values[x.0].map(|v| v.exp());
        let needs = self.needs[x.0];
        self.push(Op::Exp(x.0), value, needs)
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (&self.values[a.0], &self.values[b.0]);
        if va.rows() != vb.rows() || va.cols() != vb.cols() {
            return Err(Error::shape(
                "hadamard",
                format!("{}x{} vs {}x{}", va.rows(), va.cols(), vb.rows(), vb.cols()),
            ));
        }
        let mut value = va.clone();
        for (x, &y) in value.data_mut().iter_mut().zip(vb.data()) {
            *x *= y;
        }
        let needs = self.needs[a.0] || self.needs[b.0];
        Ok(self.push(Op::Hadamard(a.0, b.0), value, needs))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (&self.values[a.0], &self.values[b.0]);
        if va.rows() != vb.rows() || va.cols() != vb.cols() {
            return Err(Error::shape(
                "add",
                format!("{}x{} vs {}x{}", va.rows(), va.cols(), vb.rows(), vb.cols()),
            ));
        }
        let mut value = va.clone();
        value.add_assign(vb);
        let needs = self.needs[a.0] || self.needs[b.0];
        Ok(self.push(Op::Add(a.0, b.0), value, needs))
    }

    /// `x + bias` with `bias` a 1×cols row broadcast over all rows.
    pub fn add_bias_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (vx, vb) = (&self.values[x.0], &self.values[bias.0]);
        if vb.rows() != 1 || vb.cols() != vx.cols() {
            return Err(Error::shape(
                "add_bias_row",
                format!("bias {}x{} for data {}x{}", vb.rows(), vb.cols(), vx.rows(), vx.cols()),
            ));
        }
        let mut value = vx.clone();
        for i in 0..value.rows() {
            for (o, &b) in value.row_mut(i).iter_mut().zip(vb.data()) {
                *o += b;
            }
        }
        let needs = self.needs[x.0] || self.needs[bias.0];
        Ok(self.push(Op::AddBiasRow { x: x.0, bias: bias.0 }, value, needs))
    }

    /// Column-wise concatenation `[a | b]`.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (&self.values[a.0], &self.values[b.0]);
        if va.rows() != vb.rows() {
            return Err(Error::shape(
                "concat_cols",
                format!("{} rows vs {} rows", va.rows(), vb.rows()),
            ));
        }
        let mut value = Dense::zeros(va.rows(), va.cols() + vb.cols());
        for i in 0..va.rows() {
            let row = value.row_mut(i);
            row[..va.cols()].copy_from_slice(va.row(i));
            row[va.cols()..].copy_from_slice(vb.row(i));
        }
        let needs = self.needs[a.0] || self.needs[b.0];
        Ok(self.push(Op::ConcatCols(a.0, b.0), value, needs))
    }

    /// Per-row softmax with max-subtraction stabilization.
    pub fn row_softmax(&mut self, x: Var) -> Var {
        let vx = &self.values[x.0];
        let mut value = vx.clone();
        for i in 0..value.rows() {
            let row = value.row_mut(i);
            let m = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut z = T::zero();
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                z += *v;
            }
            for v in row.iter_mut() {
                *v /= z;
            }
        }
        let needs = self.needs[x.0];
        self.push(Op::RowSoftmax(x.0), value, needs)
    }

    /// Sum of all entries as a 1×1 matrix.
    pub fn sum(&mut self, x: Var) -> Var {
        let mut total = T::zero();
        for &v in self.values[x.0].data() {
            total += v;
        }
        let needs = self.needs[x.0];
        self.push(Op::Sum(x.0), Dense::from_vec(1, 1, vec![total]), needs)
    }

    /// Class-weighted cross-entropy over labeled rows, averaged by the
    /// labeled count. Column 0 of `probs` is the illicit class, column 1
    /// licit. Unlabeled rows contribute zero; zero labeled rows give loss
    /// 0 and set [`Tape::warned_unlabeled`].
    pub fn weighted_cross_entropy(
        &mut self,
        probs: Var,
        labels: &[Label],
        class_weights: (T, T),
    ) -> Result<Var> {
        let vp = &self.values[probs.0];
        if vp.cols() != 2 {
            return Err(Error::shape(
                "weighted_cross_entropy",
                format!("expected S×2 probabilities, got {}x{}", vp.rows(), vp.cols()),
            ));
        }
        if labels.len() != vp.rows() {
            return Err(Error::shape(
                "weighted_cross_entropy",
                format!("{} labels for {} rows", labels.len(), vp.rows()),
            ));
        }
        let floor = T::from_f64(1e-12);
        let labeled = labels.iter().filter(|l| l.is_labeled()).count();
        let mut coeff = Dense::zeros(vp.rows(), 2);
        let mut loss = T::zero();
        if labeled == 0 {
            self.warned_unlabeled = true;
        } else {
            let inv_n = T::one() / T::from_usize(labeled);
            for (s, label) in labels.iter().enumerate() {
                let (col, w) = match label {
                    Label::Illicit => (0, class_weights.0),
                    Label::Licit => (1, class_weights.1),
                    Label::Unknown => continue,
                };
                let p = vp.get(s, col);
                let clamped = p.max(floor);
                loss -= w * clamped.ln() * inv_n;
                if p > floor {
                    coeff.set(s, col, -w / p * inv_n);
                }
            }
        }
        let needs = self.needs[probs.0];
        Ok(self.push(
            Op::CrossEntropy { probs: probs.0, coeff },
            Dense::from_vec(1, 1, vec![loss]),
            needs,
        ))
    }

    /// Run the adjoint pass from scalar node `loss`, accumulating into the
    /// `grad` buffers of `store`. Errors if `loss` is not 1×1 or not finite.
    pub fn backward(&self, loss: Var, store: &mut ParameterStore<T>) -> Result<()> {
        let lv = &self.values[loss.0];
        if lv.rows() != 1 || lv.cols() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be 1×1, got {}x{}", lv.rows(), lv.cols()),
            ));
        }
        if !lv.get(0, 0).is_finite() {
            return Err(Error::Numeric {
                node: "loss".into(),
                detail: format!("non-finite loss value {}", lv.get(0, 0)),
            });
        }
        let mut grads: Vec<Option<Dense<T>>> = vec![None; self.values.len()];
        grads[loss.0] = Some(Dense::from_vec(1, 1, vec![T::one()]));
        for i in (0..=loss.0).rev() {
            if !self.needs[i] {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            match &self.ops[i] {
                Op::Param(name) => store.grad_mut(name)?.add_assign(&g),
                Op::Const => {}
                Op::MatMul(a, b) => {
                    if self.needs[*a] {
                        let da = g.matmul_nt(&self.values[*b])?;
                        accumulate(&mut grads, *a, da);
                    }
                    if self.needs[*b] {
                        let db = self.values[*a].matmul_tn(&g)?;
                        accumulate(&mut grads, *b, db);
                    }
                }
                Op::SpMm(adj, h) => {
                    if self.needs[*h] {
                        // The adjacency is symmetric, so Ãᵀ·G = Ã·G.
                        accumulate(&mut grads, *h, adj.spmm(&g)?);
                    }
                }
                Op::Relu(x) => {
                    if self.needs[*x] {
                        let mut dx = g;
                        for (d, &v) in dx.data_mut().iter_mut().zip(self.values[*x].data()) {
                            if v <= T::zero() {
                                *d = T::zero();
                            }
                        }
                        accumulate(&mut grads, *x, dx);
                    }
                }
                Op::Softplus(x) => {
                    if self.needs[*x] {
                        let mut dx = g;
                        for (d, &v) in dx.data_mut().iter_mut().zip(self.values[*x].data()) {
                            *d *= T::one() / (T::one() + (-v).exp());
                        }
                        accumulate(&mut grads, *x, dx);
                    }
                }
                Op::ClampLn { x, lo, hi } => {
                    if self.needs[*x] {
                        let mut dx = g;
                        for (d, &v) in dx.data_mut().iter_mut().zip(self.values[*x].data()) {
                            if v > *lo && v < *hi {
                                *d /= v;
                            } else {
                                *d = T::zero();
                            }
                        }
                        accumulate(&mut grads, *x, dx);
                    }
                }
                Op::Exp(x) => {
                    if self.needs[*x] {
                        let mut dx = g;
                        for (d, &y) in dx.data_mut().iter_mut().zip(self.values[i].data()) {
                            *d *= y;
                        }
                        accumulate(&mut grads, *x, dx);
                    }
                }
                Op::Hadamard(a, b) => {
                    if self.needs[*a] {
                        let mut da = g.clone();
                        for (d, &v) in da.data_mut().iter_mut().zip(self.values[*b].data()) {
                            *d *= v;
                        }
                        accumulate(&mut grads, *a, da);
                    }
                    if self.needs[*b] {
                        let mut db = g;
                        for (d, &v) in db.data_mut().iter_mut().zip(self.values[*a].data()) {
                            *d *= v;
                        }
                        accumulate(&mut grads, *b, db);
                    }
                }
                Op::Add(a, b) => {
                    if self.needs[*a] {
                        accumulate(&mut grads, *a, g.clone());
                    }
                    if self.needs[*b] {
                        accumulate(&mut grads, *b, g);
                    }
                }
                Op::AddBiasRow { x, bias } => {
                    if self.needs[*bias] {
                        accumulate(&mut grads, *bias, g.col_sums());
                    }
                    if self.needs[*x] {
                        accumulate(&mut grads, *x, g);
                    }
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.values[*a].cols();
                    if self.needs[*a] {
                        let mut da = Dense::zeros(g.rows(), ca);
                        for r in 0..g.rows() {
                            da.row_mut(r).copy_from_slice(&g.row(r)[..ca]);
                        }
                        accumulate(&mut grads, *a, da);
                    }
                    if self.needs[*b] {
                        let cb = g.cols() - ca;
                        let mut db = Dense::zeros(g.rows(), cb);
                        for r in 0..g.rows() {
                            db.row_mut(r).copy_from_slice(&g.row(r)[ca..]);
                        }
                        accumulate(&mut grads, *b, db);
                    }
                }
                Op::RowSoftmax(x) => {
                    if self.needs[*x] {
                        let y = &self.values[i];
                        let mut dx = g;
                        for r in 0..dx.rows() {
                            let yr = y.row(r);
                            let gr = dx.row_mut(r);
                            let mut dot = T::zero();
                            for (&gv, &yv) in gr.iter().zip(yr) {
                                dot += gv * yv;
                            }
                            for (gv, &yv) in gr.iter_mut().zip(yr) {
                                *gv = yv * (*gv - dot);
                            }
                        }
                        accumulate(&mut grads, *x, dx);
                    }
                }
                Op::Sum(x) => {
                    if self.needs[*x] {
                        let s = g.get(0, 0);
                        let src = &self.values[*x];
                        let dx = Dense::from_vec(
                            src.rows(),
                            src.cols(),
                            vec![s; src.len()],
                        );
                        accumulate(&mut grads, *x, dx);
                    }
                }
                Op::CrossEntropy { probs, coeff } => {
                    if self.needs[*probs] {
                        let s = g.get(0, 0);
                        let mut dp = coeff.clone();
                        dp.scale(s);
                        accumulate(&mut grads, *probs, dp);
                    }
                }
            }
        }
        Ok(())
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Dense<T>>], idx: usize, delta: Dense<T>) {
    match &mut grads[idx] {
        Some(existing) => existing.add_assign(&delta),
        slot @ None => *slot = Some(delta),
    }
}

pub(crate) fn softplus_stable<T: Scalar>(x: T) -> T {
    // max(x,0) + ln(1 + e^{-|x|}) avoids overflow on either tail.
    x.max(T::zero()) + (T::one() + (-x.abs()).exp()).ln()
}
