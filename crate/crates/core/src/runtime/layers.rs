//! Parameterised building blocks recorded onto a [`Tape`].

use rand::Rng;

use super::pretrained::WordVectors;
use super::tape::{NodeId, Tape};
use super::tensor::{ParamId, ParamStore, Tensor};
use super::vocab::Vocab;
use super::RuntimeError;

#[derive(Clone, Debug)]
pub struct Embedding {
    pub table: ParamId,
    pub rows: usize,
    pub dim: usize,
}

impl Embedding {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        rows: usize,
        dim: usize,
        rng: &mut R,
    ) -> Result<Embedding, RuntimeError> {
        let table = store.add(name, Tensor::uniform(rows, dim, 0.1, rng))?;
        Ok(Embedding { table, rows, dim })
    }

    pub fn bind(store: &ParamStore, name: &str) -> Result<Embedding, RuntimeError> {
        let table = lookup_param(store, name)?;
        let t = store.get(table);
        Ok(Embedding {
            table,
            rows: t.rows,
            dim: t.cols,
        })
    }

    pub fn lookup(&self, tape: &mut Tape, index: usize) -> Result<NodeId, RuntimeError> {
        tape.lookup(self.table, index)
    }

    /// Copies pretrained vectors into rows of known words; returns how many
    /// rows were overwritten.
    pub fn load_pretrained(
        &self,
        store: &mut ParamStore,
        vocab: &Vocab,
        vectors: &WordVectors,
    ) -> Result<usize, RuntimeError> {
        if vectors.dim != self.dim {
            return Err(RuntimeError::DimensionMismatch {
                what: "pretrained vectors".into(),
                expected: self.dim,
                found: vectors.dim,
            });
        }
        let dim = self.dim;
        let table = store.get_mut(self.table);
        let mut loaded = 0;
        for (idx, word) in vocab.items().iter().enumerate().skip(1) {
            let found = vectors
                .get(word)
                .or_else(|| vectors.get(&word.to_lowercase()));
            if let Some(v) = found {
                table.data[idx * dim..(idx + 1) * dim].copy_from_slice(v);
                loaded += 1;
            }
        }
        Ok(loaded)
    }
}

fn lookup_param(store: &ParamStore, name: &str) -> Result<ParamId, RuntimeError> {
    store
        .id(name)
        .ok_or_else(|| RuntimeError::MissingParam(name.to_owned()))
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Result<Linear, RuntimeError> {
        let w = store.add(&format!("{name}.w"), Tensor::glorot(out_dim, in_dim, rng))?;
        let b = store.add(&format!("{name}.b"), Tensor::zeros(out_dim, 1))?;
        Ok(Linear {
            w,
            b,
            in_dim,
            out_dim,
        })
    }

    pub fn bind(store: &ParamStore, name: &str) -> Result<Linear, RuntimeError> {
        let w = lookup_param(store, &format!("{name}.w"))?;
        let b = lookup_param(store, &format!("{name}.b"))?;
        let t = store.get(w);
        Ok(Linear {
            w,
            b,
            in_dim: t.cols,
            out_dim: t.rows,
        })
    }

    pub fn apply(&self, tape: &mut Tape, x: NodeId) -> Result<NodeId, RuntimeError> {
        tape.affine(self.w, Some(self.b), x)
    }
}

/// Unidirectional LSTM.
#[derive(Clone, Debug)]
pub struct Lstm {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub hidden: usize,
}

impl Lstm {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Lstm, RuntimeError> {
        let w = store.add(
            &format!("{name}.w"),
            Tensor::glorot(4 * hidden, in_dim + hidden, rng),
        )?;
        let mut bias = Tensor::zeros(4 * hidden, 1);
        // Forget gate starts open.
        for v in &mut bias.data[hidden..2 * hidden] {
            *v = 1.0;
        }
        let b = store.add(&format!("{name}.b"), bias)?;
        Ok(Lstm {
            w,
            b,
            in_dim,
            hidden,
        })
    }

    pub fn bind(store: &ParamStore, name: &str) -> Result<Lstm, RuntimeError> {
        let w = lookup_param(store, &format!("{name}.w"))?;
        let b = lookup_param(store, &format!("{name}.b"))?;
        let t = store.get(w);
        let hidden = t.rows / 4;
        Ok(Lstm {
            w,
            b,
            in_dim: t.cols - hidden,
            hidden,
        })
    }

    /// Runs over `xs` (right to left when `reverse`) and returns the hidden
    /// state at every input position, in input order.
    pub fn run(
        &self,
        tape: &mut Tape,
        xs: &[NodeId],
        reverse: bool,
    ) -> Result<Vec<NodeId>, RuntimeError> {
        let mut hs = vec![None; xs.len()];
        let mut prev = None;
        let order: Box<dyn Iterator<Item = usize>> = if reverse {
            Box::new((0..xs.len()).rev())
        } else {
            Box::new(0..xs.len())
        };
        for i in order {
            let state = tape.lstm_step(self.w, self.b, xs[i], prev)?;
            hs[i] = Some(tape.slice(state, 0, self.hidden)?);
            prev = Some(state);
        }
        Ok(hs.into_iter().flatten().collect())
    }
}

#[derive(Clone, Debug)]
pub struct BiLstm {
    pub forward: Lstm,
    pub backward: Lstm,
}

impl BiLstm {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<BiLstm, RuntimeError> {
        Ok(BiLstm {
            forward: Lstm::new(store, &format!("{name}.fwd"), in_dim, hidden, rng)?,
            backward: Lstm::new(store, &format!("{name}.bwd"), in_dim, hidden, rng)?,
        })
    }

    pub fn bind(store: &ParamStore, name: &str) -> Result<BiLstm, RuntimeError> {
        Ok(BiLstm {
            forward: Lstm::bind(store, &format!("{name}.fwd"))?,
            backward: Lstm::bind(store, &format!("{name}.bwd"))?,
        })
    }

    pub fn out_dim(&self) -> usize {
        self.forward.hidden + self.backward.hidden
    }

    /// Per-position `[h_fwd; h_bwd]`.
    pub fn run(&self, tape: &mut Tape, xs: &[NodeId]) -> Result<Vec<NodeId>, RuntimeError> {
        let f = self.forward.run(tape, xs, false)?;
        let b = self.backward.run(tape, xs, true)?;
        Ok(f.iter().zip(&b).map(|(f, b)| tape.concat(&[*f, *b])).collect())
    }

    /// `[last forward state; first backward state]`, a summary of the whole
    /// sequence.
    pub fn summarize(&self, tape: &mut Tape, xs: &[NodeId]) -> Result<NodeId, RuntimeError> {
        if xs.is_empty() {
            return Ok(tape.constant(vec![0.0; self.out_dim()]));
        }
        let f = self.forward.run(tape, xs, false)?;
        let b = self.backward.run(tape, xs, true)?;
        Ok(tape.concat(&[f[f.len() - 1], b[0]]))
    }
}

/// Log-softmax over `logits` restricted to the indices in `support`;
/// entries outside the support are `-inf`.
pub fn masked_log_softmax(logits: &[f64], support: &[usize]) -> Vec<f64> {
    let mut out = vec![f64::NEG_INFINITY; logits.len()];
    if support.is_empty() {
        return out;
    }
    let max = support
        .iter()
        .map(|&i| logits[i])
        .fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = support.iter().map(|&i| (logits[i] - max).exp()).sum();
    let lse = max + sum.ln();
    for &i in support {
        out[i] = logits[i] - lse;
    }
    out
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let all: Vec<usize> = (0..logits.len()).collect();
    masked_log_softmax(logits, &all)
}

/// Cross-entropy `-log softmax(logits)[gold]` and its gradient with respect
/// to the logits (`p - onehot(gold)`).
pub fn softmax_cross_entropy(logits: &[f64], gold: usize) -> (f64, Vec<f64>) {
    let lp = log_softmax(logits);
    let mut grad: Vec<f64> = lp.iter().map(|v| v.exp()).collect();
    grad[gold] -= 1.0;
    (-lp[gold], grad)
}
