//! Tape-based reverse-mode differentiation over [`Matrix`] values.
//!
//! The op set is exactly what the caption transformer needs. Nodes are
//! appended in evaluation order, so walking the tape backwards visits every
//! node after all of its consumers.

use super::tensor::{gemm, Matrix, Scalar, View};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

/// Shape of a batched attention call: `batch` query sequences of length
/// `tq`, attending over key/value sequences of length `tk`.
#[derive(Debug, Clone)]
pub struct AttnSpec {
    pub batch: usize,
    pub tq: usize,
    pub tk: usize,
    pub heads: usize,
    pub causal: bool,
    /// Key/value sequence used by each query sequence; identity when `None`.
    pub kv_map: Option<Vec<usize>>,
}

impl AttnSpec {
    fn kv_of(&self, b: usize) -> usize {
        self.kv_map.as_ref().map_or(b, |m| m[b])
    }
}

enum Op<F> {
    Input,
    Param(usize),
    MatMul(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    /// row `r` of x gets row `r % period` of pos
    AddPos(NodeId, NodeId, usize),
    Add(NodeId, NodeId),
    LayerNorm {
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
        mean: Vec<F>,
        rstd: Vec<F>,
    },
    Gelu(NodeId),
    Attention {
        q: NodeId,
        k: NodeId,
        v: NodeId,
        spec: AttnSpec,
        probs: Vec<F>,
    },
    Embed(NodeId, Vec<u32>),
    CrossEntropy {
        logits: NodeId,
        targets: Vec<u32>,
        weights: Vec<F>,
        probs: Matrix<F>,
    },
}

enum Value<F> {
    Owned(Matrix<F>),
    Param(usize),
}

struct Node<F> {
    value: Value<F>,
    op: Op<F>,
    requires_grad: bool,
}

pub const LN_EPS: f64 = 1e-5;

pub struct Graph<'p, F> {
    params: &'p [Matrix<F>],
    param_nodes: Vec<Option<NodeId>>,
    nodes: Vec<Node<F>>,
}

impl<'p, F: Scalar> Graph<'p, F> {
    pub fn new(params: &'p [Matrix<F>]) -> Self {
        Graph {
            params,
            param_nodes: vec![None; params.len()],
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Matrix<F> {
        match &self.nodes[id.0].value {
            Value::Owned(m) => m,
            Value::Param(i) => &self.params[*i],
        }
    }

    fn push(&mut self, value: Matrix<F>, op: Op<F>, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn req(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    pub fn input(&mut self, value: Matrix<F>) -> NodeId {
        self.push(value, Op::Input, false)
    }

    pub fn param(&mut self, index: usize) -> NodeId {
        if let Some(id) = self.param_nodes[index] {
            return id;
        }
        self.nodes.push(Node {
            value: Value::Param(index),
            op: Op::Param(index),
            requires_grad: true,
        });
        let id = NodeId(self.nodes.len() - 1);
        self.param_nodes[index] = Some(id);
        id
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.cols, bv.rows, "matmul: {}x{} · {}x{}", av.rows, av.cols, bv.rows, bv.cols);
        let mut out = Matrix::zeros(av.rows, bv.cols);
        gemm(av.rows, av.cols, bv.cols, F::one(), av.view(), bv.view(), F::zero(), &mut out.data, 0, bv.cols);
        let r = self.req(&[a, b]);
        self.push(out, Op::MatMul(a, b), r)
    }

    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> NodeId {
        let (xv, bv) = (self.value(x), self.value(bias));
        assert_eq!((bv.rows, bv.cols), (1, xv.cols), "bias shape");
        let mut out = xv.clone();
        for r in 0..out.rows {
            for (o, &b) in out.row_mut(r).iter_mut().zip(&bv.data) {
                *o += b;
            }
        }
        let req = self.req(&[x, bias]);
        self.push(out, Op::AddBias(x, bias), req)
    }

    pub fn add_pos(&mut self, x: NodeId, pos: NodeId, period: usize) -> NodeId {
        let (xv, pv) = (self.value(x), self.value(pos));
        assert_eq!(xv.cols, pv.cols, "positional width");
        assert!(period <= pv.rows && xv.rows % period == 0, "positional period");
        let mut out = xv.clone();
        for r in 0..out.rows {
            let p = pv.row(r % period);
            for (o, &b) in out.row_mut(r).iter_mut().zip(p) {
                *o += b;
            }
        }
        let req = self.req(&[x, pos]);
        self.push(out, Op::AddPos(x, pos, period), req)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        let req = self.req(&[a, b]);
        self.push(out, Op::Add(a, b), req)
    }

    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> NodeId {
        let (xv, gv, bv) = (self.value(x), self.value(gain), self.value(bias));
        let d = xv.cols;
        let eps = F::from_f64_lossy(LN_EPS);
        let inv_d = F::one() / F::from_usize(d).unwrap();
        let mut out = Matrix::zeros(xv.rows, d);
        let mut mean = Vec::with_capacity(xv.rows);
        let mut rstd = Vec::with_capacity(xv.rows);
        for r in 0..xv.rows {
            let row = xv.row(r);
            let mu = row.iter().copied().sum::<F>() * inv_d;
            let var = row.iter().map(|&v| (v - mu) * (v - mu)).sum::<F>() * inv_d;
            let rs = F::one() / (var + eps).sqrt();
            for ((o, &v), (&g, &b)) in out.row_mut(r).iter_mut().zip(row).zip(gv.data.iter().zip(&bv.data)) {
                *o = (v - mu) * rs * g + b;
            }
            mean.push(mu);
            rstd.push(rs);
        }
        let req = self.req(&[x, gain, bias]);
        self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                mean,
                rstd,
            },
            req,
        )
    }

    pub fn gelu(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x);
        let out = Matrix::from_vec(xv.rows, xv.cols, xv.data.iter().map(|&v| gelu(v)).collect());
        let req = self.req(&[x]);
        self.push(out, Op::Gelu(x), req)
    }

    /// Multi-head scaled dot-product attention over row-stacked sequences.
    pub fn attention(&mut self, q: NodeId, k: NodeId, v: NodeId, spec: AttnSpec) -> NodeId {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let d = qv.cols;
        assert_eq!(qv.rows, spec.batch * spec.tq, "attention: query rows");
        assert_eq!((kv.cols, vv.cols), (d, d), "attention: widths");
        assert_eq!(kv.rows, vv.rows, "attention: key/value rows");
        assert!(d % spec.heads == 0, "attention: heads");
        assert!(!spec.causal || spec.tq == spec.tk, "causal attention needs square blocks");
        let dh = d / spec.heads;
        let scale = F::one() / F::from_usize(dh).unwrap().sqrt();
        let (tq, tk) = (spec.tq, spec.tk);
        let block = tq * tk;
        let mut probs = vec![F::zero(); spec.batch * spec.heads * block];
        let mut out = Matrix::zeros(qv.rows, d);
        for b in 0..spec.batch {
            let kb = spec.kv_of(b);
            assert!((kb + 1) * tk <= kv.rows, "attention: kv index");
            for h in 0..spec.heads {
                let p = &mut probs[(b * spec.heads + h) * block..][..block];
                let q_off = b * tq * d + h * dh;
                let k_off = kb * tk * d + h * dh;
                gemm(
                    tq,
                    dh,
                    tk,
                    scale,
                    View::new(&qv.data, q_off, d),
                    View::new(&kv.data, k_off, d).t(),
                    F::zero(),
                    p,
                    0,
                    tk,
                );
                for i in 0..tq {
                    let row = &mut p[i * tk..(i + 1) * tk];
                    let valid = if spec.causal { i + 1 } else { tk };
                    softmax_in_place(&mut row[..valid]);
                    for x in &mut row[valid..] {
                        *x = F::zero();
                    }
                }
                gemm(
                    tq,
                    tk,
                    dh,
                    F::one(),
                    View::new(p, 0, tk),
                    View::new(&vv.data, k_off, d),
                    F::zero(),
                    &mut out.data,
                    q_off,
                    d,
                );
            }
        }
        let req = self.req(&[q, k, v]);
        self.push(out, Op::Attention { q, k, v, spec, probs }, req)
    }

    pub fn embed(&mut self, table: NodeId, ids: Vec<u32>) -> NodeId {
        let tv = self.value(table);
        let mut out = Matrix::zeros(ids.len(), tv.cols);
        for (r, &id) in ids.iter().enumerate() {
            out.row_mut(r).copy_from_slice(tv.row(id as usize));
        }
        let req = self.req(&[table]);
        self.push(out, Op::Embed(table, ids), req)
    }

    /// `Σ_i weights[i] · (−log softmax(logits_i)[targets[i]])` as a 1×1 node.
    pub fn cross_entropy(&mut self, logits: NodeId, targets: Vec<u32>, weights: Vec<F>) -> NodeId {
        let lv = self.value(logits);
        assert_eq!(targets.len(), lv.rows);
        assert_eq!(weights.len(), lv.rows);
        let mut probs = lv.clone();
        let mut loss = F::zero();
        for r in 0..probs.rows {
            let row = probs.row_mut(r);
            softmax_in_place(row);
            if weights[r] != F::zero() {
                loss -= weights[r] * row[targets[r] as usize].ln();
            }
        }
        let req = self.req(&[logits]);
        self.push(
            Matrix::from_vec(1, 1, vec![loss]),
            Op::CrossEntropy {
                logits,
                targets,
                weights,
                probs,
            },
            req,
        )
    }

    /// Gradients of the scalar node `loss` with respect to every parameter
    /// used on this tape (`None` for untouched parameters).
    pub fn backward(&self, loss: NodeId) -> Vec<Option<Matrix<F>>> {
        let mut grads: Vec<Option<Matrix<F>>> = (0..self.nodes.len()).map(|_| None).collect();
        let lv = self.value(loss);
        grads[loss.0] = Some(Matrix::from_vec(lv.rows, lv.cols, vec![F::one(); lv.len()]));
        let mut param_grads: Vec<Option<Matrix<F>>> = vec![None; self.params.len()];

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Input => {}
                Op::Param(p) => param_grads[*p] = Some(g),
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    if self.nodes[a.0].requires_grad {
                        let da = grad_slot(&mut grads, *a, av.rows, av.cols);
                        gemm(av.rows, g.cols, av.cols, F::one(), g.view(), bv.view().t(), F::one(), &mut da.data, 0, av.cols);
                    }
                    if self.nodes[b.0].requires_grad {
                        let db = grad_slot(&mut grads, *b, bv.rows, bv.cols);
                        gemm(bv.rows, av.rows, bv.cols, F::one(), av.view().t(), g.view(), F::one(), &mut db.data, 0, bv.cols);
                    }
                }
                Op::AddBias(x, bias) => {
                    if self.nodes[bias.0].requires_grad {
                        let db = grad_slot(&mut grads, *bias, 1, g.cols);
                        for r in 0..g.rows {
                            for (d, &v) in db.data.iter_mut().zip(g.row(r)) {
                                *d += v;
                            }
                        }
                    }
                    self.pass_through(&mut grads, *x, &g);
                }
                Op::AddPos(x, pos, period) => {
                    if self.nodes[pos.0].requires_grad {
                        let pv = self.value(*pos);
                        let dp = grad_slot(&mut grads, *pos, pv.rows, pv.cols);
                        for r in 0..g.rows {
                            for (d, &v) in dp.row_mut(r % period).iter_mut().zip(g.row(r)) {
                                *d += v;
                            }
                        }
                    }
                    self.pass_through(&mut grads, *x, &g);
                }
                Op::Add(a, b) => {
                    self.pass_through(&mut grads, *a, &g);
                    self.pass_through(&mut grads, *b, &g);
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    mean,
                    rstd,
                } => self.layer_norm_backward(&mut grads, &g, *x, *gain, *bias, mean, rstd),
                Op::Gelu(x) => {
                    if self.nodes[x.0].requires_grad {
                        let xv = self.value(*x);
                        let dx = grad_slot(&mut grads, *x, xv.rows, xv.cols);
                        for ((d, &xi), &gi) in dx.data.iter_mut().zip(&xv.data).zip(&g.data) {
                            *d += gi * gelu_grad(xi);
                        }
                    }
                }
                Op::Attention { q, k, v, spec, probs } => {
                    self.attention_backward(&mut grads, &g, *q, *k, *v, spec, probs)
                }
                Op::Embed(table, ids) => {
                    if self.nodes[table.0].requires_grad {
                        let tv = self.value(*table);
                        let dt = grad_slot(&mut grads, *table, tv.rows, tv.cols);
                        for (r, &id) in ids.iter().enumerate() {
                            for (d, &v) in dt.row_mut(id as usize).iter_mut().zip(g.row(r)) {
                                *d += v;
                            }
                        }
                    }
                }
                Op::CrossEntropy {
                    logits,
                    targets,
                    weights,
                    probs,
                } => {
                    if self.nodes[logits.0].requires_grad {
                        let up = g.data[0];
                        let dl = grad_slot(&mut grads, *logits, probs.rows, probs.cols);
                        for r in 0..probs.rows {
                            let w = weights[r] * up;
                            if w == F::zero() {
                                continue;
                            }
                            let drow = dl.row_mut(r);
                            for (d, &p) in drow.iter_mut().zip(probs.row(r)) {
                                *d += w * p;
                            }
                            drow[targets[r] as usize] -= w;
                        }
                    }
                }
            }
        }
        param_grads
    }

    fn pass_through(&self, grads: &mut [Option<Matrix<F>>], x: NodeId, g: &Matrix<F>) {
        if !self.nodes[x.0].requires_grad {
            return;
        }
        match &mut grads[x.0] {
            Some(existing) => existing.add_assign(g),
            slot @ None => *slot = Some(g.clone()),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn layer_norm_backward(
        &self,
        grads: &mut [Option<Matrix<F>>],
        g: &Matrix<F>,
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
        mean: &[F],
        rstd: &[F],
    ) {
        let xv = self.value(x);
        let gv = self.value(gain);
        let d = xv.cols;
        let inv_d = F::one() / F::from_usize(d).unwrap();
        let mut dgain = vec![F::zero(); d];
        let mut dbias = vec![F::zero(); d];
        let mut dx = Matrix::zeros(xv.rows, d);
        let mut dxhat = vec![F::zero(); d];
        let mut xhat = vec![F::zero(); d];
        for r in 0..xv.rows {
            let (mu, rs) = (mean[r], rstd[r]);
            let grow = g.row(r);
            let mut sum_dxhat = F::zero();
            let mut sum_dxhat_xhat = F::zero();
            for j in 0..d {
                xhat[j] = (xv.data[r * d + j] - mu) * rs;
                dgain[j] += grow[j] * xhat[j];
                dbias[j] += grow[j];
                dxhat[j] = grow[j] * gv.data[j];
                sum_dxhat += dxhat[j];
                sum_dxhat_xhat += dxhat[j] * xhat[j];
            }
            let (m1, m2) = (sum_dxhat * inv_d, sum_dxhat_xhat * inv_d);
            for (j, o) in dx.row_mut(r).iter_mut().enumerate() {
                *o = rs * (dxhat[j] - m1 - xhat[j] * m2);
            }
        }
        if self.nodes[gain.0].requires_grad {
            let s = grad_slot(grads, gain, 1, d);
            for (a, b) in s.data.iter_mut().zip(dgain) {
                *a += b;
            }
        }
        if self.nodes[bias.0].requires_grad {
            let s = grad_slot(grads, bias, 1, d);
            for (a, b) in s.data.iter_mut().zip(dbias) {
                *a += b;
            }
        }
        self.pass_through(grads, x, &dx);
    }

    #[allow(clippy::too_many_arguments)]
    fn attention_backward(
        &self,
        grads: &mut [Option<Matrix<F>>],
        g: &Matrix<F>,
        q: NodeId,
        k: NodeId,
        v: NodeId,
        spec: &AttnSpec,
        probs: &[F],
    ) {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let d = qv.cols;
        let dh = d / spec.heads;
        let scale = F::one() / F::from_usize(dh).unwrap().sqrt();
        let (tq, tk) = (spec.tq, spec.tk);
        let block = tq * tk;
        let mut dq = Matrix::zeros(qv.rows, d);
        let mut dk = Matrix::zeros(kv.rows, d);
        let mut dv = Matrix::zeros(vv.rows, d);
        let mut dp = vec![F::zero(); block];
        for b in 0..spec.batch {
            let kb = spec.kv_of(b);
            for h in 0..spec.heads {
                let p = &probs[(b * spec.heads + h) * block..][..block];
                let q_off = b * tq * d + h * dh;
                let k_off = kb * tk * d + h * dh;
                // dP = dO · Vᵀ
                gemm(tq, dh, tk, F::one(), View::new(&g.data, q_off, d), View::new(&vv.data, k_off, d).t(), F::zero(), &mut dp, 0, tk);
                // dV += Pᵀ · dO
                gemm(tk, tq, dh, F::one(), View::new(p, 0, tk).t(), View::new(&g.data, q_off, d), F::one(), &mut dv.data, k_off, d);
                // dS = P ⊙ (dP − rowsum(dP ⊙ P))
                for i in 0..tq {
                    let pr = &p[i * tk..(i + 1) * tk];
                    let dr = &mut dp[i * tk..(i + 1) * tk];
                    let dot: F = pr.iter().zip(dr.iter()).map(|(&a, &b)| a * b).sum();
                    for (x, &pi) in dr.iter_mut().zip(pr) {
                        *x = pi * (*x - dot);
                    }
                }
                gemm(tq, tk, dh, scale, View::new(&dp, 0, tk), View::new(&kv.data, k_off, d), F::one(), &mut dq.data, q_off, d);
                gemm(tk, tq, dh, scale, View::new(&dp, 0, tk).t(), View::new(&qv.data, q_off, d), F::one(), &mut dk.data, k_off, d);
            }
        }
        self.pass_through(grads, q, &dq);
        self.pass_through(grads, k, &dk);
        self.pass_through(grads, v, &dv);
    }
}

fn grad_slot<F: Scalar>(grads: &mut [Option<Matrix<F>>], id: NodeId, rows: usize, cols: usize) -> &mut Matrix<F> {
    grads[id.0].get_or_insert_with(|| Matrix::zeros(rows, cols))
}

pub fn softmax_in_place<F: Scalar>(row: &mut [F]) {
    let max = row.iter().copied().fold(F::neg_infinity(), F::max);
    let mut sum = F::zero();
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    let inv = F::one() / sum;
    for x in row.iter_mut() {
        *x *= inv;
    }
}

pub fn log_softmax<F: Scalar>(row: &[F]) -> Vec<F> {
    let max = row.iter().copied().fold(F::neg_infinity(), F::max);
    let lse = row.iter().map(|&x| (x - max).exp()).sum::<F>().ln() + max;
    row.iter().map(|&x| x - lse).collect()
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

fn gelu<F: Scalar>(x: F) -> F {
    let c = F::from_f64_lossy(GELU_C);
    let a = F::from_f64_lossy(GELU_A);
    let half = F::from_f64_lossy(0.5);
    half * x * (F::one() + (c * (x + a * x * x * x)).tanh())
}

fn gelu_grad<F: Scalar>(x: F) -> F {
    let c = F::from_f64_lossy(GELU_C);
    let a = F::from_f64_lossy(GELU_A);
    let half = F::from_f64_lossy(0.5);
    let three = F::from_f64_lossy(3.0);
    let t = (c * (x + a * x * x * x)).tanh();
    half * (F::one() + t) + half * x * (F::one() - t * t) * c * (F::one() + three * a * x * x)
}

#[cfg(test)]
mod tests {
    use super::*;

    // central differences of a scalar function of one parameter matrix
    fn numeric_grad(params: &mut [Matrix<f64>], which: usize, f: &dyn Fn(&[Matrix<f64>]) -> f64) -> Vec<f64> {
        let h = 1e-5;
        (0..params[which].len())
            .map(|i| {
                let orig = params[which].data[i];
                params[which].data[i] = orig + h;
                let up = f(params);
                params[which].data[i] = orig - h;
                let down = f(params);
                params[which].data[i] = orig;
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    fn filled(rows: usize, cols: usize, k: f64) -> Matrix<f64> {
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|i| ((i as f64 + 1.0) * k).sin() * 0.8).collect())
    }

    fn check(params: Vec<Matrix<f64>>, f: impl Fn(&mut Graph<'_, f64>) -> NodeId) {
        let eval = |ps: &[Matrix<f64>]| {
            let mut g = Graph::new(ps);
            let out = f(&mut g);
            g.value(out).data[0]
        };
        let mut ps = params;
        let analytic = {
            let mut g = Graph::new(&ps);
            let out = f(&mut g);
            g.backward(out)
        };
        for (which, ana) in analytic.iter().enumerate() {
            let num = numeric_grad(&mut ps, which, &eval);
            let ana = ana.as_ref().expect("gradient present");
            for (a, n) in ana.data.iter().zip(&num) {
                assert!((a - n).abs() < 1e-7 * (1.0 + n.abs()), "param {which}: {a} vs {n}");
            }
        }
    }

    fn weighted_ce(g: &mut Graph<'_, f64>, x: NodeId) -> NodeId {
        let rows = g.value(x).rows;
        let cols = g.value(x).cols;
        let targets = (0..rows).map(|r| (r % cols) as u32).collect();
        let weights = (0..rows).map(|r| 0.5 + 0.25 * r as f64).collect();
        g.cross_entropy(x, targets, weights)
    }

    #[test]
    fn linear_layer_gradients() {
        check(vec![filled(3, 4, 0.3), filled(4, 5, 0.7), filled(1, 5, 1.1)], |g| {
            let (x, w, b) = (g.param(0), g.param(1), g.param(2));
            let y = g.matmul(x, w);
            let y = g.add_bias(y, b);
            let y = g.gelu(y);
            weighted_ce(g, y)
        });
    }

    #[test]
    fn layer_norm_and_residual_gradients() {
        check(vec![filled(4, 6, 0.37), filled(1, 6, 0.5), filled(1, 6, 0.9), filled(3, 6, 0.2)], |g| {
            let (x, ga, be, pos) = (g.param(0), g.param(1), g.param(2), g.param(3));
            let xp = g.add_pos(x, pos, 2);
            let y = g.layer_norm(xp, ga, be);
            let y = g.add(y, x);
            weighted_ce(g, y)
        });
    }

    #[test]
    fn attention_gradients_causal_and_cross() {
        // 2 sequences of length 3, width 4, 2 heads
        check(vec![filled(6, 4, 0.31), filled(6, 4, 0.47), filled(6, 4, 0.83)], |g| {
            let (q, k, v) = (g.param(0), g.param(1), g.param(2));
            let spec = AttnSpec { batch: 2, tq: 3, tk: 3, heads: 2, causal: true, kv_map: None };
            let y = g.attention(q, k, v, spec);
            weighted_ce(g, y)
        });
        // 3 query sequences of length 2 over 2 memories of length 4
        check(vec![filled(6, 4, 0.29), filled(8, 4, 0.53), filled(8, 4, 0.71)], |g| {
            let (q, k, v) = (g.param(0), g.param(1), g.param(2));
            let spec = AttnSpec { batch: 3, tq: 2, tk: 4, heads: 2, causal: false, kv_map: Some(vec![1, 0, 1]) };
            let y = g.attention(q, k, v, spec);
            weighted_ce(g, y)
        });
    }

    #[test]
    fn embedding_gradients() {
        check(vec![filled(5, 3, 0.61)], |g| {
            let t = g.param(0);
            let e = g.embed(t, vec![4, 1, 4, 0]);
            weighted_ce(g, e)
        });
    }

    #[test]
    fn causal_rows_ignore_the_future() {
        let ps = vec![filled(3, 2, 0.3), filled(3, 2, 0.5), filled(3, 2, 0.7)];
        let run = |ps: &[Matrix<f64>]| {
            let mut g = Graph::new(ps);
            let (q, k, v) = (g.param(0), g.param(1), g.param(2));
            let spec = AttnSpec { batch: 1, tq: 3, tk: 3, heads: 1, causal: true, kv_map: None };
            let y = g.attention(q, k, v, spec);
            g.value(y).clone()
        };
        let base = run(&ps);
        let mut moved = ps.clone();
        moved[1].data[4] += 3.0;
        moved[2].data[5] -= 2.0;
        let after = run(&moved);
        assert_eq!(base.row(0), after.row(0));
        assert_eq!(base.row(1), after.row(1));
        assert_ne!(base.row(2), after.row(2));
    }

    #[test]
    fn softmax_helpers() {
        let mut r = vec![1.0f64, 2.0, 3.0];
        softmax_in_place(&mut r);
        assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let ls = log_softmax(&[1.0f64, 2.0, 3.0]);
        for (a, b) in ls.iter().zip(&r) {
            assert!((a.exp() - b).abs() < 1e-15);
        }
    }
}
