//! Reference forward pass that counts every scalar operation it performs.
//!
//! Independent of `archsearch::complexity`: it builds actual tensors with
//! deterministic pseudo-random weights, runs the network, and increments a
//! counter on each multiply, add, divide, exponential and activation.

use std::cell::Cell;

use archsearch::complexity::InputShape;
use archsearch::space::{FusionMode, Genotype, LayerType, SequenceBlock};

pub struct Counter {
    ops: Cell<u64>,
    state: Cell<u64>,
}

type Seq = Vec<Vec<f64>>;

impl Counter {
    pub fn new() -> Self {
        Self {
            ops: Cell::new(0),
            state: Cell::new(0x2545_f491_4f6c_dd1d),
        }
    }

    pub fn count(&self) -> u64 {
        self.ops.get()
    }

    fn tick(&self) {
        self.ops.set(self.ops.get() + 1);
    }

    fn mul(&self, a: f64, b: f64) -> f64 {
        self.tick();
        a * b
    }

    fn add(&self, a: f64, b: f64) -> f64 {
        self.tick();
        a + b
    }

    fn div(&self, a: f64, b: f64) -> f64 {
        self.tick();
        a / b
    }

    fn exp(&self, a: f64) -> f64 {
        self.tick();
        a.exp()
    }

    fn sigmoid(&self, a: f64) -> f64 {
        self.tick();
        1.0 / (1.0 + (-a).exp())
    }

    fn tanh(&self, a: f64) -> f64 {
        self.tick();
        a.tanh()
    }

    fn relu(&self, a: f64) -> f64 {
        self.tick();
        a.max(0.0)
    }

    fn gelu(&self, a: f64) -> f64 {
        self.tick();
        0.5 * a * (1.0 + (0.797_884_56 * (a + 0.044_715 * a * a * a)).tanh())
    }

    /// Small weights from an xorshift stream; never counted.
    fn weight(&self) -> f64 {
        let mut x = self.state.get();
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        self.state.set(x);
        ((x >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 0.2
    }

    fn weights(&self, rows: usize, cols: usize) -> Vec<Vec<f64>> {
        (0..rows)
            .map(|_| (0..cols).map(|_| self.weight()).collect())
            .collect()
    }

    /// y = W x + b, accumulating from zero.
    fn linear(&self, w: &[Vec<f64>], b: &[f64], x: &[f64]) -> Vec<f64> {
        w.iter()
            .zip(b)
            .map(|(row, &bias)| {
                let mut acc = 0.0;
                for (&wi, &xi) in row.iter().zip(x) {
                    acc = self.add(acc, self.mul(wi, xi));
                }
                self.add(acc, bias)
            })
            .collect()
    }

    fn dense(&self, x: &[f64], out: usize) -> Vec<f64> {
        let w = self.weights(out, x.len());
        let b: Vec<f64> = (0..out).map(|_| self.weight()).collect();
        self.linear(&w, &b, x)
    }

    fn softmax(&self, x: &[f64]) -> Vec<f64> {
        let e: Vec<f64> = x.iter().map(|&v| self.exp(v)).collect();
        let mut sum = 0.0;
        for &v in &e {
            sum = self.add(sum, v);
        }
        e.iter().map(|&v| self.div(v, sum)).collect()
    }

    fn lstm(&self, input: &Seq, block: &SequenceBlock) -> Seq {
        let h = block.num_units as usize;
        let mut seq = input.clone();
        for _ in 0..block.num_layers {
            let d = seq[0].len();
            let gates: Vec<(Vec<Vec<f64>>, Vec<f64>)> = (0..4)
                .map(|_| {
                    (
                        self.weights(h, d + h),
                        (0..h).map(|_| self.weight()).collect(),
                    )
                })
                .collect();
            let mut hidden = vec![0.0; h];
            let mut cell = vec![0.0; h];
            let mut out = Vec::with_capacity(seq.len());
            for x in &seq {
                let z: Vec<f64> = x.iter().chain(&hidden).copied().collect();
                let pre: Vec<Vec<f64>> = gates.iter().map(|(w, b)| self.linear(w, b, &z)).collect();
                for u in 0..h {
                    let i = self.sigmoid(pre[0][u]);
                    let f = self.sigmoid(pre[1][u]);
                    let g = self.tanh(pre[2][u]);
                    let o = self.sigmoid(pre[3][u]);
                    cell[u] = self.add(self.mul(f, cell[u]), self.mul(i, g));
                    hidden[u] = self.mul(o, self.tanh(cell[u]));
                }
                out.push(hidden.clone());
            }
            seq = out;
        }
        seq
    }

    /// Causal dilated convolution with zero padding; padded taps are
    /// multiplied like any other.
    fn causal_conv(&self, seq: &Seq, out: usize, kernel: usize, dilation: usize) -> Seq {
        let d = seq[0].len();
        let w = self.weights(out, kernel * d);
        let b: Vec<f64> = (0..out).map(|_| self.weight()).collect();
        let zeros = vec![0.0; d];
        (0..seq.len())
            .map(|t| {
                let mut window = Vec::with_capacity(kernel * d);
                for j in 0..kernel {
                    let back = j * dilation;
                    let x = if back <= t { &seq[t - back] } else { &zeros };
                    window.extend_from_slice(x);
                }
                self.linear(&w, &b, &window)
            })
            .collect()
    }

    fn tcn(&self, input: &Seq, block: &SequenceBlock, kernel: usize) -> Seq {
        let u = block.num_units as usize;
        let mut seq = input.clone();
        for level in 0..block.num_layers {
            let dilation = 1usize << level;
            let a: Seq = self
                .causal_conv(&seq, u, kernel, dilation)
                .into_iter()
                .map(|r| r.into_iter().map(|v| self.relu(v)).collect())
                .collect();
            let c: Seq = self
                .causal_conv(&a, u, kernel, dilation)
                .into_iter()
                .map(|r| r.into_iter().map(|v| self.relu(v)).collect())
                .collect();
            let skip: Seq = if seq[0].len() == u {
                seq.clone()
            } else {
                let w = self.weights(u, seq[0].len());
                let b: Vec<f64> = (0..u).map(|_| self.weight()).collect();
                seq.iter().map(|x| self.linear(&w, &b, x)).collect()
            };
            seq = c
                .iter()
                .zip(&skip)
                .map(|(r, s)| {
                    r.iter()
                        .zip(s)
                        .map(|(&x, &y)| self.relu(self.add(x, y)))
                        .collect()
                })
                .collect();
        }
        seq
    }

    fn project_seq(&self, seq: &Seq, out: usize) -> Seq {
        let w = self.weights(out, seq[0].len());
        let b: Vec<f64> = (0..out).map(|_| self.weight()).collect();
        seq.iter().map(|x| self.linear(&w, &b, x)).collect()
    }

    fn residual(&self, a: &Seq, b: &Seq) -> Seq {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.iter().zip(y).map(|(&p, &q)| self.add(p, q)).collect())
            .collect()
    }

    fn tst(&self, input: &Seq, block: &SequenceBlock) -> Seq {
        let heads = block.attention_heads.unwrap() as usize;
        let ff = block.ff_dim.unwrap() as usize;
        let dh = (block.num_units as usize).div_ceil(heads);
        let d = dh * heads;
        let t_len = input.len();
        let mut seq = self.project_seq(input, d);
        for (t, row) in seq.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                let pe = ((t as f64) / 10_000f64.powf(c as f64 / d as f64)).sin();
                *v = self.add(*v, pe);
            }
        }
        let scale = 1.0 / (dh as f64).sqrt();
        for _ in 0..block.num_layers {
            let q = self.project_seq(&seq, d);
            let k = self.project_seq(&seq, d);
            let v = self.project_seq(&seq, d);
            let mut attended = vec![vec![0.0; d]; t_len];
            for hd in 0..heads {
                let cols = hd * dh..(hd + 1) * dh;
                for t in 0..t_len {
                    let scores: Vec<f64> = (0..t_len)
                        .map(|s| {
                            let mut acc = 0.0;
                            for c in cols.clone() {
                                acc = self.add(acc, self.mul(q[t][c], k[s][c]));
                            }
                            self.mul(acc, scale)
                        })
                        .collect();
                    let weights = self.softmax(&scores);
                    for c in cols.clone() {
                        let mut acc = 0.0;
                        for s in 0..t_len {
                            acc = self.add(acc, self.mul(weights[s], v[s][c]));
                        }
                        attended[t][c] = acc;
                    }
                }
            }
            let projected = self.project_seq(&attended, d);
            seq = self.residual(&seq, &projected);
            let hidden: Seq = self
                .project_seq(&seq, ff)
                .into_iter()
                .map(|r| r.into_iter().map(|x| self.gelu(x)).collect())
                .collect();
            let back = self.project_seq(&hidden, d);
            seq = self.residual(&seq, &back);
        }
        seq
    }

    fn block(
        &self,
        layer_type: LayerType,
        input: &Seq,
        block: &SequenceBlock,
        kernel: usize,
    ) -> Seq {
        match layer_type {
            LayerType::Lstm => self.lstm(input, block),
            LayerType::Tcn => self.tcn(input, block, kernel),
            LayerType::Tst => self.tst(input, block),
        }
    }

    fn head(&self, g: &Genotype, last: &[f64], classes: usize) -> Vec<f64> {
        let mut x = last.to_vec();
        for _ in 1..g.head.num_layers {
            x = self
                .dense(&x, g.head.num_units as usize)
                .into_iter()
                .map(|v| self.relu(v))
                .collect();
        }
        let logits = self.dense(&x, classes);
        self.softmax(&logits)
    }
}

fn modality_input(counter: &Counter, seq_len: usize, dim: usize) -> Seq {
    (0..seq_len)
        .map(|_| (0..dim).map(|_| counter.weight() * 10.0).collect())
        .collect()
}

/// Runs `g` once on a random input of `shape` and returns the operation count.
pub fn count_forward_flops(g: &Genotype, shape: &InputShape, kernel: usize) -> u64 {
    let counter = Counter::new();
    let t = shape.seq_len as usize;
    let classes = shape.num_classes as usize;
    let inputs: Vec<Seq> = shape
        .feature_dims
        .iter()
        .map(|&d| modality_input(&counter, t, d as usize))
        .collect();
    let concat = |parts: &[Seq]| -> Seq {
        (0..t)
            .map(|i| parts.iter().flat_map(|p| p[i].iter().copied()).collect())
            .collect()
    };
    let lt = g.layer_type;
    let probs = match g.fusion {
        FusionMode::None | FusionMode::Early => {
            let out = counter.block(lt, &concat(&inputs), &g.branches[0], kernel);
            counter.head(g, out.last().unwrap(), classes)
        }
        FusionMode::Intermediate => {
            let parts: Vec<Seq> = inputs
                .iter()
                .zip(&g.branches)
                .map(|(x, b)| counter.block(lt, x, b, kernel))
                .collect();
            let shared = counter.block(lt, &concat(&parts), g.branches.last().unwrap(), kernel);
            counter.head(g, shared.last().unwrap(), classes)
        }
        FusionMode::Late => {
            let per_branch: Vec<Vec<f64>> = inputs
                .iter()
                .zip(&g.branches)
                .map(|(x, b)| {
                    let out = counter.block(lt, x, b, kernel);
                    counter.head(g, out.last().unwrap(), classes)
                })
                .collect();
            let mut sum = per_branch[0].clone();
            for p in &per_branch[1..] {
                for (s, &v) in sum.iter_mut().zip(p) {
                    *s = counter.add(*s, v);
                }
            }
            let m = per_branch.len() as f64;
            sum.iter().map(|&s| counter.div(s, m)).collect()
        }
    };
    let total: f64 = probs.iter().sum();
    assert!(
        (total - 1.0).abs() < 1e-9,
        "oracle output is not a distribution"
    );
    counter.count()
}
