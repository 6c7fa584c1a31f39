//! Append-only computation tape with eager forward evaluation and exact
//! reverse-mode gradients. Node handles only ever reference earlier nodes,
//! so the recorded graph is acyclic by construction.

use rand::RngExt;
use rand_chacha::ChaCha8Rng;

use super::tensor::{gemm, Tensor};
use super::AdError;

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

struct Node {
    value: Tensor,
    needs_grad: bool,
    op: Op,
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    /// x [n,q] + bias [1,q] broadcast over rows.
    AddBias(Var, Var),
    Add(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    /// Horizontal concatenation of same-height blocks.
    Concat(Var, Var),
    LayerNorm {
        x: Var,
        gain: Var,
        shift: Var,
        normalized: Vec<f64>,
        inv_std: Vec<f64>, // one per row
    },
    BatchNormTrain {
        x: Var,
        gamma: Var,
        beta: Var,
        normalized: Vec<f64>,
        inv_std: Vec<f64>, // one per column
    },
    BatchNormEval {
        x: Var,
        gamma: Var,
        beta: Var,
        normalized: Vec<f64>,
        inv_std: Vec<f64>, // from running stats, one per column
    },
    Dropout {
        x: Var,
        mask: Vec<f64>, // entries 0 or 1/(1−rate)
    },
    /// Per-row attention: each of the n rows of q/k/v holds one sample's
    /// flattened token matrix.
    Attention {
        q: Var,
        k: Var,
        v: Var,
        tq: usize,
        tk: usize,
        dk: usize,
        dv: usize,
        weights: Vec<f64>, // n·tq·tk softmax weights
    },
    /// (1/n)·Σ_{i,j} (pred − target)²: mean over rows, sum over columns.
    Mse {
        pred: Var,
        target: Tensor,
    },
    SumSquares(Var),
}

pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    poisoned: Option<String>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), grads: Vec::new(), poisoned: None }
    }

    /// First op whose output turned non-finite, if any.
    pub fn poisoned(&self) -> Option<&str> {
        self.poisoned.as_deref()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient buffer for `v`; `None` until backward reaches it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        let t = self.value(v);
        assert_eq!(t.shape(), (1, 1), "expected scalar node");
        t.data[0]
    }

    fn push(&mut self, value: Tensor, needs_grad: bool, op: Op) -> Var {
        if self.poisoned.is_none() && !value.all_finite() {
            self.poisoned = Some(op_name(&op).to_string());
        }
        self.nodes.push(Node { value, needs_grad, op });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Registers a trainable leaf (values copied from the caller).
    pub fn param(&mut self, t: &Tensor) -> Var {
        self.push(t.clone(), true, Op::Leaf)
    }

    /// Registers a non-trainable leaf.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, false, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (ar, ac) = self.value(a).shape();
        let (br, bc) = self.value(b).shape();
        assert_eq!(ac, br, "matmul inner dimensions disagree: {ar}×{ac} · {br}×{bc}");
        let mut out = Tensor::zeros(ar, bc);
        gemm(
            ar,
            ac,
            bc,
            1.0,
            &self.nodes[a.0].value.data,
            false,
            &self.nodes[b.0].value.data,
            false,
            0.0,
            &mut out.data,
        );
        let ng = self.needs(a) || self.needs(b);
        self.push(out, ng, Op::MatMul(a, b))
    }

    pub fn add_bias(&mut self, x: Var, bias: Var) -> Var {
        let (n, q) = self.value(x).shape();
        assert_eq!(self.value(bias).shape(), (1, q), "bias must be 1×{q}");
        let mut out = self.value(x).clone();
        for r in 0..n {
            for c in 0..q {
                out.data[r * q + c] += self.nodes[bias.0].value.data[c];
            }
        }
        let ng = self.needs(x) || self.needs(bias);
        self.push(out, ng, Op::AddBias(x, bias))
    }

    /// Affine layer: x·w + bias.
    pub fn dense(&mut self, x: Var, w: Var, bias: Var) -> Var {
        let m = self.matmul(x, w);
        self.add_bias(m, bias)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).shape(), self.value(b).shape(), "add shape mismatch");
        let mut out = self.value(a).clone();
        for (o, v) in out.data.iter_mut().zip(&self.nodes[b.0].value.data) {
            *o += v;
        }
        let ng = self.needs(a) || self.needs(b);
        self.push(out, ng, Op::Add(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let mut out = self.value(a).clone();
        for o in &mut out.data {
            *o *= c;
        }
        let ng = self.needs(a);
        self.push(out, ng, Op::Scale(a, c))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for o in &mut out.data {
            *o = o.max(0.0);
        }
        let ng = self.needs(a);
        self.push(out, ng, Op::Relu(a))
    }

    pub fn concat(&mut self, a: Var, b: Var) -> Var {
        let (ar, ac) = self.value(a).shape();
        let (br, bc) = self.value(b).shape();
        assert_eq!(ar, br, "concat row mismatch");
        let mut out = Tensor::zeros(ar, ac + bc);
        for r in 0..ar {
            out.data[r * (ac + bc)..r * (ac + bc) + ac]
                .copy_from_slice(self.nodes[a.0].value.row(r));
            out.data[r * (ac + bc) + ac..(r + 1) * (ac + bc)]
                .copy_from_slice(self.nodes[b.0].value.row(r));
        }
        let ng = self.needs(a) || self.needs(b);
        self.push(out, ng, Op::Concat(a, b))
    }

    /// Per-row standardization followed by learned gain/shift.
    pub fn layer_norm(&mut self, x: Var, gain: Var, shift: Var, eps: f64) -> Var {
        let (n, p) = self.value(x).shape();
        assert!(p >= 1);
        assert_eq!(self.value(gain).shape(), (1, p), "gain must be 1×{p}");
        assert_eq!(self.value(shift).shape(), (1, p), "shift must be 1×{p}");
        let mut normalized = vec![0.0; n * p];
        let mut inv_std = vec![0.0; n];
        let mut out = Tensor::zeros(n, p);
        for r in 0..n {
            let row = self.nodes[x.0].value.row(r);
            let mean = row.iter().sum::<f64>() / p as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / p as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[r] = is;
            for c in 0..p {
                let nv = (row[c] - mean) * is;
                normalized[r * p + c] = nv;
                out.data[r * p + c] = nv * self.nodes[gain.0].value.data[c]
                    + self.nodes[shift.0].value.data[c];
            }
        }
        let ng = self.needs(x) || self.needs(gain) || self.needs(shift);
        self.push(out, ng, Op::LayerNorm { x, gain, shift, normalized, inv_std })
    }

    /// Per-column standardization by batch statistics; returns the output
    /// node plus the batch mean/variance so the caller can update running
    /// statistics.
    pub fn batch_norm_train(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
    ) -> Result<(Var, Vec<f64>, Vec<f64>), AdError> {
        let (n, p) = self.value(x).shape();
        if n < 2 {
            return Err(AdError::BatchTooSmall { got: n });
        }
        assert_eq!(self.value(gamma).shape(), (1, p));
        assert_eq!(self.value(beta).shape(), (1, p));
        let mut mean = vec![0.0; p];
        let mut var = vec![0.0; p];
        for r in 0..n {
            for c in 0..p {
                mean[c] += self.nodes[x.0].value.data[r * p + c];
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        for r in 0..n {
            for c in 0..p {
                let d = self.nodes[x.0].value.data[r * p + c] - mean[c];
                var[c] += d * d;
            }
        }
        for v in &mut var {
            *v /= n as f64;
        }
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let mut normalized = vec![0.0; n * p];
        let mut out = Tensor::zeros(n, p);
        for r in 0..n {
            for c in 0..p {
                let nv = (self.nodes[x.0].value.data[r * p + c] - mean[c]) * inv_std[c];
                normalized[r * p + c] = nv;
                out.data[r * p + c] = nv * self.nodes[gamma.0].value.data[c]
                    + self.nodes[beta.0].value.data[c];
            }
        }
        let ng = self.needs(x) || self.needs(gamma) || self.needs(beta);
        let node = self.push(out, ng, Op::BatchNormTrain { x, gamma, beta, normalized, inv_std });
        Ok((node, mean, var))
    }

    /// Normalization by frozen running statistics: deterministic, per-sample.
    pub fn batch_norm_eval(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running_mean: &[f64],
        running_var: &[f64],
        eps: f64,
    ) -> Var {
        let (n, p) = self.value(x).shape();
        assert_eq!(running_mean.len(), p);
        assert_eq!(running_var.len(), p);
        assert_eq!(self.value(gamma).shape(), (1, p));
        assert_eq!(self.value(beta).shape(), (1, p));
        let inv_std: Vec<f64> = running_var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let mut normalized = vec![0.0; n * p];
        let mut out = Tensor::zeros(n, p);
        for r in 0..n {
            for c in 0..p {
                let nv = (self.nodes[x.0].value.data[r * p + c] - running_mean[c]) * inv_std[c];
                normalized[r * p + c] = nv;
                out.data[r * p + c] = nv * self.nodes[gamma.0].value.data[c]
                    + self.nodes[beta.0].value.data[c];
            }
        }
        let ng = self.needs(x) || self.needs(gamma) || self.needs(beta);
        self.push(out, ng, Op::BatchNormEval { x, gamma, beta, normalized, inv_std })
    }

    /// Training-mode dropout: zeroes each element with probability `rate`
    /// and scales survivors by 1/(1−rate). Eval mode is simply the absence
    /// of this node.
    pub fn dropout(&mut self, x: Var, rate: f64, rng: &mut ChaCha8Rng) -> Result<Var, AdError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(AdError::BadRate { rate });
        }
        if rate == 0.0 {
            return Ok(x);
        }
        let keep_scale = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..self.value(x).len())
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep_scale })
            .collect();
        let mut out = self.value(x).clone();
        for (o, m) in out.data.iter_mut().zip(&mask) {
            *o *= m;
        }
        let ng = self.needs(x);
        Ok(self.push(out, ng, Op::Dropout { x, mask }))
    }

    /// Scaled-dot attention applied row-wise: row i of `q`/`k`/`v` holds
    /// sample i's flattened [tq,dk]/[tk,dk]/[tk,dv] token matrices; the
    /// output row is the flattened [tq,dv] result.
    pub fn attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        tq: usize,
        tk: usize,
        dk: usize,
        dv: usize,
    ) -> Var {
        let n = self.value(q).rows;
        assert_eq!(self.value(q).cols, tq * dk, "q row width must be tq·dk");
        assert_eq!(self.value(k).shape(), (n, tk * dk), "k must be n×(tk·dk)");
        assert_eq!(self.value(v).shape(), (n, tk * dv), "v must be n×(tk·dv)");
        let scale = 1.0 / (dk as f64).sqrt();
        let mut weights = vec![0.0; n * tq * tk];
        let mut out = Tensor::zeros(n, tq * dv);
        let mut scores = vec![0.0; tq * tk];
        for i in 0..n {
            let qi = self.nodes[q.0].value.row(i);
            let ki = self.nodes[k.0].value.row(i);
            let vi = self.nodes[v.0].value.row(i);
            // scores = (Q·Kᵀ)·scale
            gemm(tq, dk, tk, scale, qi, false, ki, true, 0.0, &mut scores);
            let w = &mut weights[i * tq * tk..(i + 1) * tq * tk];
            for r in 0..tq {
                softmax_row(&scores[r * tk..(r + 1) * tk], &mut w[r * tk..(r + 1) * tk]);
            }
            // out row = flatten(W·V)
            gemm(
                tq,
                tk,
                dv,
                1.0,
                w,
                false,
                vi,
                false,
                0.0,
                &mut out.data[i * tq * dv..(i + 1) * tq * dv],
            );
        }
        let ng = self.needs(q) || self.needs(k) || self.needs(v);
        self.push(out, ng, Op::Attention { q, k, v, tq, tk, dk, dv, weights })
    }

    /// Attention weights of the most recently added attention node
    /// (inspection hook for invariant tests).
    pub fn attention_weights(&self, node: Var) -> Option<&[f64]> {
        match &self.nodes[node.0].op {
            Op::Attention { weights, .. } => Some(weights),
            _ => None,
        }
    }

    /// Squared-error objective: mean over rows of the squared row error
    /// (sum across output columns).
    pub fn mse(&mut self, pred: Var, target: &Tensor) -> Var {
        assert_eq!(self.value(pred).shape(), target.shape(), "mse shape mismatch");
        let n = target.rows as f64;
        let sum: f64 = self.nodes[pred.0]
            .value
            .data
            .iter()
            .zip(&target.data)
            .map(|(p, t)| (p - t) * (p - t))
            .sum();
        let ng = self.needs(pred);
        self.push(Tensor::scalar(sum / n), ng, Op::Mse { pred, target: target.clone() })
    }

    /// Σ aᵢ² as a scalar node (building block for weight penalties).
    pub fn sum_squares(&mut self, a: Var) -> Var {
        let sum: f64 = self.nodes[a.0].value.data.iter().map(|v| v * v).sum();
        let ng = self.needs(a);
        self.push(Tensor::scalar(sum), ng, Op::SumSquares(a))
    }

    /// Reverse-mode sweep from a scalar node; gradients are then readable
    /// through [`Tape::grad`].
    pub fn backward(&mut self, loss: Var) {
        assert_eq!(self.value(loss).shape(), (1, 1), "backward needs a scalar loss");
        self.grads = vec![None; self.nodes.len()];
        self.grads[loss.0] = Some(vec![1.0]);

        for id in (0..=loss.0).rev() {
            if self.grads[id].is_none() || !self.nodes[id].needs_grad {
                continue;
            }
            let gout = self.grads[id].take().unwrap();
            self.dispatch_backward(id, &gout);
            self.grads[id] = Some(gout);
        }
    }

    fn accumulate(&mut self, v: Var, update: impl FnOnce(&mut [f64])) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        let len = self.nodes[v.0].value.len();
        let slot = &mut self.grads[v.0];
        if slot.is_none() {
            *slot = Some(vec![0.0; len]);
        }
        update(slot.as_mut().unwrap());
    }

    fn dispatch_backward(&mut self, id: usize, gout: &[f64]) {
        // Shapes and cached values are read before mutation; ops are
        // matched by moving the enum data out temporarily where needed.
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (a, b) = (*a, *b);
                let (m, kk) = self.value(a).shape();
                let n = self.value(b).cols;
                if self.needs(a) {
                    let bdata = self.nodes[b.0].value.data.clone();
                    self.accumulate(a, |g| {
                        gemm(m, n, kk, 1.0, gout, false, &bdata, true, 1.0, g);
                    });
                }
                if self.needs(b) {
                    let adata = self.nodes[a.0].value.data.clone();
                    self.accumulate(b, |g| {
                        gemm(kk, m, n, 1.0, &adata, true, gout, false, 1.0, g);
                    });
                }
            }
            Op::AddBias(x, bias) => {
                let (x, bias) = (*x, *bias);
                let (n, q) = self.value(x).shape();
                self.accumulate(x, |g| {
                    for (gi, go) in g.iter_mut().zip(gout) {
                        *gi += go;
                    }
                });
                self.accumulate(bias, |g| {
                    for r in 0..n {
                        for c in 0..q {
                            g[c] += gout[r * q + c];
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                let (a, b) = (*a, *b);
                for v in [a, b] {
                    self.accumulate(v, |g| {
                        for (gi, go) in g.iter_mut().zip(gout) {
                            *gi += go;
                        }
                    });
                }
            }
            Op::Scale(a, c) => {
                let (a, c) = (*a, *c);
                self.accumulate(a, |g| {
                    for (gi, go) in g.iter_mut().zip(gout) {
                        *gi += c * go;
                    }
                });
            }
            Op::Relu(a) => {
                let a = *a;
                let xdata = self.nodes[a.0].value.data.clone();
                self.accumulate(a, |g| {
                    for ((gi, go), x) in g.iter_mut().zip(gout).zip(&xdata) {
                        if *x > 0.0 {
                            *gi += go;
                        }
                    }
                });
            }
            Op::Concat(a, b) => {
                let (a, b) = (*a, *b);
                let (n, ac) = self.value(a).shape();
                let bc = self.value(b).cols;
                let w = ac + bc;
                self.accumulate(a, |g| {
                    for r in 0..n {
                        for c in 0..ac {
                            g[r * ac + c] += gout[r * w + c];
                        }
                    }
                });
                self.accumulate(b, |g| {
                    for r in 0..n {
                        for c in 0..bc {
                            g[r * bc + c] += gout[r * w + ac + c];
                        }
                    }
                });
            }
            Op::LayerNorm { x, gain, shift, normalized, inv_std } => {
                let (x, gain, shift) = (*x, *gain, *shift);
                let (n, p) = self.value(x).shape();
                let normalized = normalized.clone();
                let inv_std = inv_std.clone();
                let gdata = self.nodes[gain.0].value.data.clone();
                self.accumulate(gain, |g| {
                    for r in 0..n {
                        for c in 0..p {
                            g[c] += gout[r * p + c] * normalized[r * p + c];
                        }
                    }
                });
                self.accumulate(shift, |g| {
                    for r in 0..n {
                        for c in 0..p {
                            g[c] += gout[r * p + c];
                        }
                    }
                });
                self.accumulate(x, |g| {
                    for r in 0..n {
                        let mut mean_dn = 0.0;
                        let mut mean_dn_nv = 0.0;
                        for c in 0..p {
                            let dn = gout[r * p + c] * gdata[c];
                            mean_dn += dn;
                            mean_dn_nv += dn * normalized[r * p + c];
                        }
                        mean_dn /= p as f64;
                        mean_dn_nv /= p as f64;
                        for c in 0..p {
                            let dn = gout[r * p + c] * gdata[c];
                            g[r * p + c] += inv_std[r]
                                * (dn - mean_dn - normalized[r * p + c] * mean_dn_nv);
                        }
                    }
                });
            }
            Op::BatchNormTrain { x, gamma, beta, normalized, inv_std } => {
                let (x, gamma, beta) = (*x, *gamma, *beta);
                let (n, p) = self.value(x).shape();
                let normalized = normalized.clone();
                let inv_std = inv_std.clone();
                let gdata = self.nodes[gamma.0].value.data.clone();
                self.accumulate(gamma, |g| {
                    for r in 0..n {
                        for c in 0..p {
                            g[c] += gout[r * p + c] * normalized[r * p + c];
                        }
                    }
                });
                self.accumulate(beta, |g| {
                    for r in 0..n {
                        for c in 0..p {
                            g[c] += gout[r * p + c];
                        }
                    }
                });
                self.accumulate(x, |g| {
                    for c in 0..p {
                        let mut mean_dn = 0.0;
                        let mut mean_dn_nv = 0.0;
                        for r in 0..n {
                            let dn = gout[r * p + c] * gdata[c];
                            mean_dn += dn;
                            mean_dn_nv += dn * normalized[r * p + c];
                        }
                        mean_dn /= n as f64;
                        mean_dn_nv /= n as f64;
                        for r in 0..n {
                            let dn = gout[r * p + c] * gdata[c];
                            g[r * p + c] += inv_std[c]
                                * (dn - mean_dn - normalized[r * p + c] * mean_dn_nv);
                        }
                    }
                });
            }
            Op::BatchNormEval { x, gamma, beta, normalized, inv_std } => {
                let (x, gamma, beta) = (*x, *gamma, *beta);
                let (n, p) = self.value(x).shape();
                let normalized = normalized.clone();
                let inv_std = inv_std.clone();
                let gdata = self.nodes[gamma.0].value.data.clone();
                self.accumulate(gamma, |g| {
                    for r in 0..n {
                        for c in 0..p {
                            g[c] += gout[r * p + c] * normalized[r * p + c];
                        }
                    }
                });
                self.accumulate(beta, |g| {
                    for r in 0..n {
                        for c in 0..p {
                            g[c] += gout[r * p + c];
                        }
                    }
                });
                self.accumulate(x, |g| {
                    for r in 0..n {
                        for c in 0..p {
                            g[r * p + c] += gout[r * p + c] * gdata[c] * inv_std[c];
                        }
                    }
                });
            }
            Op::Dropout { x, mask } => {
                let x = *x;
                let mask = mask.clone();
                self.accumulate(x, |g| {
                    for ((gi, go), m) in g.iter_mut().zip(gout).zip(&mask) {
                        *gi += go * m;
                    }
                });
            }
            Op::Attention { q, k, v, tq, tk, dk, dv, weights } => {
                let (q, k, v) = (*q, *k, *v);
                let (tq, tk, dk, dv) = (*tq, *tk, *dk, *dv);
                let weights = weights.clone();
                let n = self.value(q).rows;
                let scale = 1.0 / (dk as f64).sqrt();
                let qdata = self.nodes[q.0].value.data.clone();
                let kdata = self.nodes[k.0].value.data.clone();
                let vdata = self.nodes[v.0].value.data.clone();
                let mut gq = vec![0.0; qdata.len()];
                let mut gk = vec![0.0; kdata.len()];
                let mut gv = vec![0.0; vdata.len()];
                let mut d_weights = vec![0.0; tq * tk];
                let mut d_scores = vec![0.0; tq * tk];
                for i in 0..n {
                    let w = &weights[i * tq * tk..(i + 1) * tq * tk];
                    let go = &gout[i * tq * dv..(i + 1) * tq * dv];
                    let vi = &vdata[i * tk * dv..(i + 1) * tk * dv];
                    let qi = &qdata[i * tq * dk..(i + 1) * tq * dk];
                    let ki = &kdata[i * tk * dk..(i + 1) * tk * dk];
                    // dV = Wᵀ·dO
                    gemm(tk, tq, dv, 1.0, w, true, go, false, 1.0, &mut gv[i * tk * dv..(i + 1) * tk * dv]);
                    // dW = dO·Vᵀ
                    gemm(tq, dv, tk, 1.0, go, false, vi, true, 0.0, &mut d_weights);
                    // Softmax backward per row: dS_j = W_j·(dW_j − Σ_k dW_k·W_k)
                    for r in 0..tq {
                        let wr = &w[r * tk..(r + 1) * tk];
                        let dwr = &d_weights[r * tk..(r + 1) * tk];
                        let dot: f64 = wr.iter().zip(dwr).map(|(a, b)| a * b).sum();
                        for c in 0..tk {
                            d_scores[r * tk + c] = wr[c] * (dwr[c] - dot);
                        }
                    }
                    // dQ = scale·dS·K ; dK = scale·dSᵀ·Q
                    gemm(tq, tk, dk, scale, &d_scores, false, ki, false, 1.0, &mut gq[i * tq * dk..(i + 1) * tq * dk]);
                    gemm(tk, tq, dk, scale, &d_scores, true, qi, false, 1.0, &mut gk[i * tk * dk..(i + 1) * tk * dk]);
                }
                self.accumulate(q, |g| {
                    for (gi, s) in g.iter_mut().zip(&gq) {
                        *gi += s;
                    }
                });
                self.accumulate(k, |g| {
                    for (gi, s) in g.iter_mut().zip(&gk) {
                        *gi += s;
                    }
                });
                self.accumulate(v, |g| {
                    for (gi, s) in g.iter_mut().zip(&gv) {
                        *gi += s;
                    }
                });
            }
            Op::Mse { pred, target } => {
                let pred = *pred;
                let n = target.rows as f64;
                let pdata = self.nodes[pred.0].value.data.clone();
                let tdata = target.data.clone();
                let g0 = gout[0];
                self.accumulate(pred, |g| {
                    for (gi, (p, t)) in g.iter_mut().zip(pdata.iter().zip(&tdata)) {
                        *gi += g0 * 2.0 / n * (p - t);
                    }
                });
            }
            Op::SumSquares(a) => {
                let a = *a;
                let adata = self.nodes[a.0].value.data.clone();
                let g0 = gout[0];
                self.accumulate(a, |g| {
                    for (gi, x) in g.iter_mut().zip(&adata) {
                        *gi += g0 * 2.0 * x;
                    }
                });
            }
        }
    }
}

fn softmax_row(scores: &[f64], out: &mut [f64]) {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, s) in out.iter_mut().zip(scores) {
        *o = (s - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::MatMul(..) => "matmul",
        Op::AddBias(..) => "add_bias",
        Op::Add(..) => "add",
        Op::Scale(..) => "scale",
        Op::Relu(..) => "relu",
        Op::Concat(..) => "concat",
        Op::LayerNorm { .. } => "layer_norm",
        Op::BatchNormTrain { .. } => "batch_norm_train",
        Op::BatchNormEval { .. } => "batch_norm_eval",
        Op::Dropout { .. } => "dropout",
        Op::Attention { .. } => "attention",
        Op::Mse { .. } => "mse",
        Op::SumSquares(..) => "sum_squares",
    }
}
