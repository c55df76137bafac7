//! Reverse-mode differentiation over a recorded list of vector operations.
//!
//! Parameters are stored in 32 bits; node values and gradients are carried
//! in 64 bits so that finite-difference checks are meaningful.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::tensor::{ParamId, ParamStore};
use super::RuntimeError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Constant,
    /// A whole parameter tensor, flattened.
    Param(ParamId),
    /// One row of an embedding table.
    Lookup {
        param: ParamId,
        row: usize,
    },
    Affine {
        w: ParamId,
        b: Option<ParamId>,
        x: NodeId,
    },
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Relu(NodeId),
    Concat(Vec<NodeId>),
    Slice {
        x: NodeId,
        start: usize,
    },
    Dropout {
        x: NodeId,
        mask: Vec<f64>,
    },
    /// Fused LSTM step; the node value is `[h; c]`.
    Lstm {
        w: ParamId,
        b: ParamId,
        x: NodeId,
        prev: Option<NodeId>,
        /// Activated gates `[i; f; g; o]`.
        gates: Vec<f64>,
        tanh_c: Vec<f64>,
    },
}

#[derive(Clone, Debug)]
struct Node {
    value: Vec<f64>,
    op: Op,
}

/// Record of one forward computation against a parameter store.
pub struct Tape<'p> {
    params: &'p ParamStore,
    version: u64,
    nodes: Vec<Node>,
    dropout: Option<ChaCha8Rng>,
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

impl<'p> Tape<'p> {
    /// An inference tape: dropout is the identity.
    pub fn new(params: &'p ParamStore) -> Tape<'p> {
        Tape {
            params,
            version: params.version(),
            nodes: Vec::new(),
            dropout: None,
        }
    }

    /// A training tape whose dropout masks come from `rng`.
    pub fn training(params: &'p ParamStore, rng: ChaCha8Rng) -> Tape<'p> {
        Tape {
            dropout: Some(rng),
            ..Tape::new(params)
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every node recorded after the first `len`. Used to reuse an
    /// encoded prefix across many inference-only scoring calls.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Vec<f64>) -> NodeId {
        self.push(value, Op::Constant)
    }

    pub fn param(&mut self, p: ParamId) -> NodeId {
        let value = self.params.get(p).data.iter().map(|&v| v as f64).collect();
        self.push(value, Op::Param(p))
    }

    pub fn lookup(&mut self, p: ParamId, row: usize) -> Result<NodeId, RuntimeError> {
        let t = self.params.get(p);
        if row >= t.rows {
            return Err(RuntimeError::IndexOutOfBounds {
                param: self.params.name(p).to_owned(),
                index: row,
                rows: t.rows,
            });
        }
        let value = t.row(row).iter().map(|&v| v as f64).collect();
        Ok(self.push(value, Op::Lookup { param: p, row }))
    }

    /// `W x + b`.
    pub fn affine(
        &mut self,
        w: ParamId,
        b: Option<ParamId>,
        x: NodeId,
    ) -> Result<NodeId, RuntimeError> {
        let wt = self.params.get(w);
        let xv = &self.nodes[x.0].value;
        if xv.len() != wt.cols {
            return Err(RuntimeError::DimensionMismatch {
                what: self.params.name(w).to_owned(),
                expected: wt.cols,
                found: xv.len(),
            });
        }
        let mut out = match b {
            Some(b) => {
                let bt = self.params.get(b);
                if bt.len() != wt.rows {
                    return Err(RuntimeError::DimensionMismatch {
                        what: self.params.name(b).to_owned(),
                        expected: wt.rows,
                        found: bt.len(),
                    });
                }
                bt.data.iter().map(|&v| v as f64).collect()
            }
            None => vec![0.0; wt.rows],
        };
        for (r, o) in out.iter_mut().enumerate() {
            let row = wt.row(r);
            let mut acc = 0.0;
            for (wv, xv) in row.iter().zip(xv) {
                acc += *wv as f64 * xv;
            }
            *o += acc;
        }
        Ok(self.push(out, Op::Affine { w, b, x }))
    }

    fn check_same(&self, a: NodeId, b: NodeId, what: &str) -> Result<(), RuntimeError> {
        let (la, lb) = (self.nodes[a.0].value.len(), self.nodes[b.0].value.len());
        if la != lb {
            return Err(RuntimeError::DimensionMismatch {
                what: what.to_owned(),
                expected: la,
                found: lb,
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, RuntimeError> {
        self.check_same(a, b, "add")?;
        let value = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(x, y)| x + y)
            .collect();
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, RuntimeError> {
        self.check_same(a, b, "mul")?;
        let value = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(x, y)| x * y)
            .collect();
        Ok(self.push(value, Op::Mul(a, b)))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let value = self.nodes[x.0].value.iter().map(|v| v.tanh()).collect();
        self.push(value, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let value = self.nodes[x.0].value.iter().map(|&v| sigmoid(v)).collect();
        self.push(value, Op::Sigmoid(x))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let value = self.nodes[x.0].value.iter().map(|&v| v.max(0.0)).collect();
        self.push(value, Op::Relu(x))
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        let mut value = Vec::with_capacity(parts.iter().map(|p| self.nodes[p.0].value.len()).sum());
        for p in parts {
            value.extend_from_slice(&self.nodes[p.0].value);
        }
        self.push(value, Op::Concat(parts.to_vec()))
    }

    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId, RuntimeError> {
        let xv = &self.nodes[x.0].value;
        if start + len > xv.len() {
            return Err(RuntimeError::DimensionMismatch {
                what: "slice".into(),
                expected: start + len,
                found: xv.len(),
            });
        }
        let value = xv[start..start + len].to_vec();
        Ok(self.push(value, Op::Slice { x, start }))
    }

    /// Inverted dropout with keep probability `1 - p`; identity on
    /// inference tapes or when `p == 0`.
    pub fn dropout(&mut self, x: NodeId, p: f64) -> NodeId {
        let Some(rng) = self.dropout.as_mut() else {
            return x;
        };
        if p <= 0.0 {
            return x;
        }
        let keep = 1.0 - p;
        let n = self.nodes[x.0].value.len();
        let mask: Vec<f64> = (0..n)
            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let value = self.nodes[x.0]
            .value
            .iter()
            .zip(&mask)
            .map(|(v, m)| v * m)
            .collect();
        self.push(value, Op::Dropout { x, mask })
    }

    /// One LSTM step. `w` is `4H × (X + H)`, `b` has `4H` entries with gate
    /// order input, forget, cell, output. `prev` is the previous step's
    /// `[h; c]` node, or `None` for a zero state.
    pub fn lstm_step(
        &mut self,
        w: ParamId,
        b: ParamId,
        x: NodeId,
        prev: Option<NodeId>,
    ) -> Result<NodeId, RuntimeError> {
        let wt = self.params.get(w);
        let bt = self.params.get(b);
        let hidden = wt.rows / 4;
        let xv = &self.nodes[x.0].value;
        let in_dim = xv.len();
        if wt.rows != 4 * hidden || wt.cols != in_dim + hidden || bt.len() != wt.rows {
            return Err(RuntimeError::DimensionMismatch {
                what: self.params.name(w).to_owned(),
                expected: wt.cols,
                found: in_dim + hidden,
            });
        }
        let zeros = vec![0.0; 2 * hidden];
        let pv: &[f64] = match prev {
            Some(p) => {
                let v = &self.nodes[p.0].value;
                if v.len() != 2 * hidden {
                    return Err(RuntimeError::DimensionMismatch {
                        what: "lstm state".into(),
                        expected: 2 * hidden,
                        found: v.len(),
                    });
                }
                v
            }
            None => &zeros,
        };
        let (h_prev, c_prev) = pv.split_at(hidden);

        let mut gates = vec![0.0; 4 * hidden];
        for (r, g) in gates.iter_mut().enumerate() {
            let row = wt.row(r);
            let mut acc = bt.data[r] as f64;
            for (wv, v) in row[..in_dim].iter().zip(xv) {
                acc += *wv as f64 * v;
            }
            for (wv, v) in row[in_dim..].iter().zip(h_prev) {
                acc += *wv as f64 * v;
            }
            *g = acc;
        }
        for k in 0..hidden {
            gates[k] = sigmoid(gates[k]);
            gates[hidden + k] = sigmoid(gates[hidden + k]);
            gates[2 * hidden + k] = gates[2 * hidden + k].tanh();
            gates[3 * hidden + k] = sigmoid(gates[3 * hidden + k]);
        }
        let mut value = vec![0.0; 2 * hidden];
        let mut tanh_c = vec![0.0; hidden];
        for k in 0..hidden {
            let c = gates[hidden + k] * c_prev[k] + gates[k] * gates[2 * hidden + k];
            tanh_c[k] = c.tanh();
            value[k] = gates[3 * hidden + k] * tanh_c[k];
            value[hidden + k] = c;
        }
        Ok(self.push(
            value,
            Op::Lstm {
                w,
                b,
                x,
                prev,
                gates,
                tanh_c,
            },
        ))
    }

    /// Propagates `seeds` (gradients of the loss with respect to the given
    /// nodes) back through the tape, visiting each recorded op once.
    pub fn backward(&self, seeds: &[(NodeId, Vec<f64>)]) -> Result<Gradients, RuntimeError> {
        let mut grads = Gradients::for_params(self.params);
        self.backward_into(seeds, &mut grads)?;
        Ok(grads)
    }

    /// Like [`Tape::backward`] but accumulates into existing gradients.
    pub fn backward_into(
        &self,
        seeds: &[(NodeId, Vec<f64>)],
        grads: &mut Gradients,
    ) -> Result<(), RuntimeError> {
        if self.params.version() != self.version || grads.version != self.version {
            return Err(RuntimeError::StaleTape);
        }
        let mut node_grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        for (id, g) in seeds {
            if g.len() != self.nodes[id.0].value.len() {
                return Err(RuntimeError::DimensionMismatch {
                    what: "seed gradient".into(),
                    expected: self.nodes[id.0].value.len(),
                    found: g.len(),
                });
            }
            accumulate(&mut node_grads[id.0], g);
        }

        for i in (0..self.nodes.len()).rev() {
            let Some(g) = node_grads[i].take() else {
                continue;
            };
            let node = &self.nodes[i];
            match &node.op {
                Op::Constant => {}
                Op::Param(p) => {
                    let t = grads.tensor_mut(*p);
                    for (a, v) in t.iter_mut().zip(&g) {
                        *a += v;
                    }
                }
                Op::Lookup { param, row } => {
                    let cols = self.params.get(*param).cols;
                    let t = grads.tensor_mut(*param);
                    for (a, v) in t[row * cols..(row + 1) * cols].iter_mut().zip(&g) {
                        *a += v;
                    }
                }
                Op::Affine { w, b, x } => {
                    let wt = self.params.get(*w);
                    let xv = &self.nodes[x.0].value;
                    let gw = grads.tensor_mut(*w);
                    for (r, gr) in g.iter().enumerate() {
                        if *gr == 0.0 {
                            continue;
                        }
                        for (a, xv) in gw[r * wt.cols..(r + 1) * wt.cols].iter_mut().zip(xv) {
                            *a += gr * xv;
                        }
                    }
                    if let Some(b) = b {
                        for (a, v) in grads.tensor_mut(*b).iter_mut().zip(&g) {
                            *a += v;
                        }
                    }
                    let mut dx = vec![0.0; wt.cols];
                    for (r, gr) in g.iter().enumerate() {
                        if *gr == 0.0 {
                            continue;
                        }
                        for (d, wv) in dx.iter_mut().zip(wt.row(r)) {
                            *d += gr * *wv as f64;
                        }
                    }
                    accumulate(&mut node_grads[x.0], &dx);
                }
                Op::Add(a, b) => {
                    accumulate(&mut node_grads[a.0], &g);
                    accumulate(&mut node_grads[b.0], &g);
                }
                Op::Mul(a, b) => {
                    let av = &self.nodes[a.0].value;
                    let bv = &self.nodes[b.0].value;
                    let da: Vec<f64> = g.iter().zip(bv).map(|(g, b)| g * b).collect();
                    let db: Vec<f64> = g.iter().zip(av).map(|(g, a)| g * a).collect();
                    accumulate(&mut node_grads[a.0], &da);
                    accumulate(&mut node_grads[b.0], &db);
                }
                Op::Tanh(x) => {
                    let dx: Vec<f64> = g
                        .iter()
                        .zip(&node.value)
                        .map(|(g, y)| g * (1.0 - y * y))
                        .collect();
                    accumulate(&mut node_grads[x.0], &dx);
                }
                Op::Sigmoid(x) => {
                    let dx: Vec<f64> = g
                        .iter()
                        .zip(&node.value)
                        .map(|(g, y)| g * y * (1.0 - y))
                        .collect();
                    accumulate(&mut node_grads[x.0], &dx);
                }
                Op::Relu(x) => {
                    let dx: Vec<f64> = g
                        .iter()
                        .zip(&node.value)
                        .map(|(g, y)| if *y > 0.0 { *g } else { 0.0 })
                        .collect();
                    accumulate(&mut node_grads[x.0], &dx);
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let len = self.nodes[p.0].value.len();
                        accumulate(&mut node_grads[p.0], &g[off..off + len]);
                        off += len;
                    }
                }
                Op::Slice { x, start } => {
                    let len = self.nodes[x.0].value.len();
                    let slot = node_grads[x.0].get_or_insert_with(|| vec![0.0; len]);
                    for (a, v) in slot[*start..*start + g.len()].iter_mut().zip(&g) {
                        *a += v;
                    }
                }
                Op::Dropout { x, mask } => {
                    let dx: Vec<f64> = g.iter().zip(mask).map(|(g, m)| g * m).collect();
                    accumulate(&mut node_grads[x.0], &dx);
                }
                Op::Lstm {
                    w,
                    b,
                    x,
                    prev,
                    gates,
                    tanh_c,
                } => {
                    let wt = self.params.get(*w);
                    let hidden = wt.rows / 4;
                    let xv = &self.nodes[x.0].value;
                    let in_dim = xv.len();
                    let zeros = vec![0.0; 2 * hidden];
                    let pv: &[f64] = match prev {
                        Some(p) => &self.nodes[p.0].value,
                        None => &zeros,
                    };
                    let (h_prev, c_prev) = pv.split_at(hidden);
                    let (gh, gc) = g.split_at(hidden);

                    let mut dz = vec![0.0; 4 * hidden];
                    let mut dprev = vec![0.0; 2 * hidden];
                    for k in 0..hidden {
                        let (i, f, cg, o) = (
                            gates[k],
                            gates[hidden + k],
                            gates[2 * hidden + k],
                            gates[3 * hidden + k],
                        );
                        let tc = tanh_c[k];
                        let dc = gc[k] + gh[k] * o * (1.0 - tc * tc);
                        let d_o = gh[k] * tc;
                        dz[k] = dc * cg * i * (1.0 - i);
                        dz[hidden + k] = dc * c_prev[k] * f * (1.0 - f);
                        dz[2 * hidden + k] = dc * i * (1.0 - cg * cg);
                        dz[3 * hidden + k] = d_o * o * (1.0 - o);
                        dprev[hidden + k] = dc * f;
                    }

                    {
                        let gw = grads.tensor_mut(*w);
                        for (r, d) in dz.iter().enumerate() {
                            if *d == 0.0 {
                                continue;
                            }
                            let row = &mut gw[r * wt.cols..(r + 1) * wt.cols];
                            for (a, v) in row[..in_dim].iter_mut().zip(xv) {
                                *a += d * v;
                            }
                            for (a, v) in row[in_dim..].iter_mut().zip(h_prev) {
                                *a += d * v;
                            }
                        }
                    }
                    for (a, v) in grads.tensor_mut(*b).iter_mut().zip(&dz) {
                        *a += v;
                    }
                    let mut dx = vec![0.0; in_dim];
                    for (r, d) in dz.iter().enumerate() {
                        if *d == 0.0 {
                            continue;
                        }
                        let row = wt.row(r);
                        for (a, wv) in dx.iter_mut().zip(&row[..in_dim]) {
                            *a += d * *wv as f64;
                        }
                        for (a, wv) in dprev[..hidden].iter_mut().zip(&row[in_dim..]) {
                            *a += d * *wv as f64;
                        }
                    }
                    accumulate(&mut node_grads[x.0], &dx);
                    if let Some(p) = prev {
                        accumulate(&mut node_grads[p.0], &dprev);
                    }
                }
            }
        }
        Ok(())
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, g: &[f64]) {
    match slot {
        Some(acc) => {
            for (a, v) in acc.iter_mut().zip(g) {
                *a += v;
            }
        }
        None => *slot = Some(g.to_vec()),
    }
}

/// Gradients keyed like the parameter store they were computed against.
/// Tensors never touched by a backward pass read as zero.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub(crate) version: u64,
    shapes: Vec<(usize, usize)>,
    tensors: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn for_params(params: &ParamStore) -> Gradients {
        Gradients {
            version: params.version(),
            shapes: params.ids().map(|id| (params.get(id).rows, params.get(id).cols)).collect(),
            tensors: vec![None; params.len()],
        }
    }

    fn tensor_mut(&mut self, id: ParamId) -> &mut Vec<f64> {
        let (r, c) = self.shapes[id.0];
        self.tensors[id.0].get_or_insert_with(|| vec![0.0; r * c])
    }

    pub fn shape(&self, id: ParamId) -> (usize, usize) {
        self.shapes[id.0]
    }

    /// Gradient of one tensor (zeros if untouched).
    pub fn get(&self, id: ParamId) -> Vec<f64> {
        match &self.tensors[id.0] {
            Some(t) => t.clone(),
            None => {
                let (r, c) = self.shapes[id.0];
                vec![0.0; r * c]
            }
        }
    }

    pub fn value(&self, id: ParamId, index: usize) -> f64 {
        self.tensors[id.0].as_ref().map_or(0.0, |t| t[index])
    }

    pub fn is_touched(&self, id: ParamId) -> bool {
        self.tensors[id.0].is_some()
    }

    pub(crate) fn touched(&self) -> impl Iterator<Item = (ParamId, &[f64])> {
        self.tensors
            .iter()
            .enumerate()
            .filter_map(|(i, t)| t.as_deref().map(|t| (ParamId(i), t)))
    }

    /// Euclidean norm over every tensor.
    pub fn norm(&self) -> f64 {
        self.touched()
            .flat_map(|(_, t)| t.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors.iter_mut().flatten() {
            for v in t.iter_mut() {
                *v *= factor;
            }
        }
    }

    /// Resets every tensor to zero, keeping allocations.
    pub fn clear(&mut self) {
        for t in self.tensors.iter_mut().flatten() {
            t.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Follow a parameter update: zero the tensors and adopt the new version.
    pub fn reset_for(&mut self, params: &ParamStore) {
        self.clear();
        self.version = params.version();
    }

    pub fn set(&mut self, id: ParamId, index: usize, value: f64) {
        self.tensor_mut(id)[index] = value;
    }
}
