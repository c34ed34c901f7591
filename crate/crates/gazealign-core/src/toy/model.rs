//! A desk-scale cross-attention classifier.
//!
//! The sequence is `[image patches..., question tokens...]`. Only the text
//! positions issue queries; keys and values cover every position, so each
//! text row's softmax is a distribution over patches plus text whose
//! restriction to the patch slots is a sub-distribution. Two layers, two
//! heads, model width 16, residual connections, and a 2-way answer head on
//! the final text token. Reverse-mode differentiation is hand-written for
//! this fixed architecture; finite differences are the source of truth.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::fmath;
use crate::tensor::AttnTensor;
use crate::toy::synth::{SynthInstance, QUESTION_TOKENS};

pub const MODEL_DIM: usize = 16;
pub const NUM_HEADS: usize = 2;
pub const HEAD_DIM: usize = MODEL_DIM / NUM_HEADS;
pub const NUM_LAYERS: usize = 2;

/// Parameters of the classifier. `wq/wk/wv` are indexed `layer * NUM_HEADS
/// + head`, each a `MODEL_DIM x HEAD_DIM` projection.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyModel {
    pub grid: usize,
    pub vocab: usize,
    /// Patch embedding matrix, `grid^2 x MODEL_DIM`.
    pub e_img: Vec<f64>,
    /// Direction along which a patch's intensity enters its embedding.
    pub w_val: Vec<f64>,
    /// Token embedding matrix, `vocab x MODEL_DIM`.
    pub e_tok: Vec<f64>,
    pub wq: Vec<Vec<f64>>,
    pub wk: Vec<Vec<f64>>,
    pub wv: Vec<Vec<f64>>,
    /// Answer head, `2 x MODEL_DIM` plus bias.
    pub w_cls: Vec<f64>,
    pub b_cls: Vec<f64>,
}

impl ToyModel {
    /// Random initialization; embeddings uniform in (-1, 1), projections
    /// uniform in (-2/sqrt(d), 2/sqrt(d)), zero classifier bias.
    pub fn init(grid: usize, vocab: usize, rng: &mut ChaCha8Rng) -> Self {
        let patches = grid * grid;
        let d = MODEL_DIM;
        let proj = 2.0 / fmath::sqrt(d as f64);
        let mut uniform = |n: usize, a: f64| -> Vec<f64> {
            (0..n).map(|_| rng.gen_range(-a..a)).collect()
        };
        let e_img = uniform(patches * d, 1.0);
        let w_val = uniform(d, 1.0);
        let e_tok = uniform(vocab * d, 1.0);
        let mut wq = Vec::new();
        let mut wk = Vec::new();
        let mut wv = Vec::new();
        for _ in 0..NUM_LAYERS * NUM_HEADS {
            wq.push(uniform(d * HEAD_DIM, proj));
            wk.push(uniform(d * HEAD_DIM, proj));
            wv.push(uniform(d * HEAD_DIM, proj));
        }
        let w_cls = uniform(2 * d, 0.25);
        let b_cls = vec![0.0; 2];
        Self {
            grid,
            vocab,
            e_img,
            w_val,
            e_tok,
            wq,
            wk,
            wv,
            w_cls,
            b_cls,
        }
    }

    pub fn patches(&self) -> usize {
        self.grid * self.grid
    }

    fn seq_len(&self) -> usize {
        self.patches() + QUESTION_TOKENS
    }

    /// Parameter blocks in a fixed order, for serialization and updates.
    pub fn param_blocks(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = vec![&self.e_img, &self.w_val, &self.e_tok];
        for i in 0..NUM_LAYERS * NUM_HEADS {
            v.push(&self.wq[i]);
            v.push(&self.wk[i]);
            v.push(&self.wv[i]);
        }
        v.push(&self.w_cls);
        v.push(&self.b_cls);
        v
    }

    pub fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = vec![&mut self.e_img, &mut self.w_val, &mut self.e_tok];
        for ((q, k), val) in self
            .wq
            .iter_mut()
            .zip(self.wk.iter_mut())
            .zip(self.wv.iter_mut())
        {
            v.push(q);
            v.push(k);
            v.push(val);
        }
        v.push(&mut self.w_cls);
        v.push(&mut self.b_cls);
        v
    }

    /// Runs the classifier. Probabilities sum to 1; the tensor holds the
    /// text-to-image attention rows of every layer and head.
    pub fn forward(&self, inst: &SynthInstance) -> ([f64; 2], AttnTensor) {
        let f = self.forward_cached(inst);
        (f.probs, f.attn)
    }

    /// Forward pass retaining every intermediate needed by [`Self::backward`].
    pub(crate) fn forward_cached(&self, inst: &SynthInstance) -> ForwardPass {
        let d = MODEL_DIM;
        let dh = HEAD_DIM;
        let patches = self.patches();
        let s_len = self.seq_len();
        let t_len = QUESTION_TOKENS;
        let inv_sqrt = 1.0 / fmath::sqrt(dh as f64);

        let chart = inst.chart.values();
        debug_assert_eq!(chart.len(), patches);

        // Input sequence: patch embeddings shifted by intensity, then tokens.
        let mut s0 = vec![0.0; s_len * d];
        for p in 0..patches {
            let e = &self.e_img[p * d..(p + 1) * d];
            let row = &mut s0[p * d..(p + 1) * d];
            let v = chart[p];
            for i in 0..d {
                row[i] = e[i] + v * self.w_val[i];
            }
        }
        for (t, &tok) in inst.tokens.iter().enumerate() {
            let e = &self.e_tok[tok * d..(tok + 1) * d];
            s0[(patches + t) * d..(patches + t + 1) * d].copy_from_slice(e);
        }

        let mut s_levels = Vec::with_capacity(NUM_LAYERS + 1);
        s_levels.push(s0);
        let mut q_cache = Vec::with_capacity(NUM_LAYERS * NUM_HEADS);
        let mut k_cache = Vec::with_capacity(NUM_LAYERS * NUM_HEADS);
        let mut v_cache = Vec::with_capacity(NUM_LAYERS * NUM_HEADS);
        let mut p_cache = Vec::with_capacity(NUM_LAYERS * NUM_HEADS);

        for layer in 0..NUM_LAYERS {
            let x = s_levels[layer].clone();
            let mut next = x.clone();
            for head in 0..NUM_HEADS {
                let idx = layer * NUM_HEADS + head;
                let mut k = vec![0.0; s_len * dh];
                let mut vv = vec![0.0; s_len * dh];
                matmul(&x, s_len, d, &self.wk[idx], dh, &mut k);
                matmul(&x, s_len, d, &self.wv[idx], dh, &mut vv);
                let text = &x[patches * d..];
                let mut q = vec![0.0; t_len * dh];
                matmul(text, t_len, d, &self.wq[idx], dh, &mut q);

                let mut p = vec![0.0; t_len * s_len];
                for t in 0..t_len {
                    let qrow = &q[t * dh..(t + 1) * dh];
                    let prow = &mut p[t * s_len..(t + 1) * s_len];
                    for j in 0..s_len {
                        prow[j] = dot(qrow, &k[j * dh..(j + 1) * dh]) * inv_sqrt;
                    }
                    softmax_in_place(prow);
                    // Attention output lands in this head's feature slice.
                    let out = &mut next[(patches + t) * d + head * dh..];
                    for j in 0..s_len {
                        let w = prow[j];
                        let vrow = &vv[j * dh..(j + 1) * dh];
                        for c in 0..dh {
                            out[c] += w * vrow[c];
                        }
                    }
                }
                q_cache.push(q);
                k_cache.push(k);
                v_cache.push(vv);
                p_cache.push(p);
            }
            s_levels.push(next);
        }

        let rep = &s_levels[NUM_LAYERS][(s_len - 1) * d..s_len * d];
        let mut logits = [0.0f64; 2];
        for c in 0..2 {
            logits[c] = dot(&self.w_cls[c * d..(c + 1) * d], rep) + self.b_cls[c];
        }
        let mut probs = [logits[0], logits[1]];
        softmax_in_place(&mut probs);

        // Patch slices of the text rows, renormalized over the patch slots,
        // form the exported tensor. The renormalization also removes the
        // degenerate descent direction that uniformly drains attention mass
        // from the patches onto the text positions.
        let mut attn_values = Vec::with_capacity(NUM_LAYERS * NUM_HEADS * t_len * patches);
        for idx in 0..NUM_LAYERS * NUM_HEADS {
            let p = &p_cache[idx];
            for t in 0..t_len {
                let row = &p[t * s_len..t * s_len + patches];
                let mass: f64 = row.iter().sum();
                if mass > 0.0 {
                    attn_values.extend(row.iter().map(|&v| v / mass));
                } else {
                    // Patch mass underflowed to zero; keep the raw (zero) row
                    // and let the trainer report divergence downstream.
                    attn_values.extend_from_slice(row);
                }
            }
        }
        let attn = AttnTensor::new(NUM_LAYERS, NUM_HEADS, t_len, patches, attn_values)
            .expect("softmax rows are valid attention weights");

        ForwardPass {
            probs,
            attn,
            s_levels,
            q_cache,
            k_cache,
            v_cache,
            p_cache,
        }
    }

    /// Accumulates parameter gradients for one instance.
    ///
    /// `d_logits` is the loss derivative at the answer logits; `d_agg`, when
    /// present, is the derivative with respect to the aggregated patch
    /// vector (mean of the first `m_layers` layers' rows) and fans out
    /// uniformly over the supervised rows.
    pub(crate) fn backward(
        &self,
        inst: &SynthInstance,
        fwd: &ForwardPass,
        d_logits: [f64; 2],
        d_agg: Option<(&[f64], usize)>,
        grads: &mut Grads,
    ) {
        let d = MODEL_DIM;
        let dh = HEAD_DIM;
        let patches = self.patches();
        let s_len = self.seq_len();
        let t_len = QUESTION_TOKENS;
        let inv_sqrt = 1.0 / fmath::sqrt(dh as f64);

        let rep = &fwd.s_levels[NUM_LAYERS][(s_len - 1) * d..s_len * d];
        let mut d_s = vec![0.0; s_len * d];
        for c in 0..2 {
            let g = d_logits[c];
            grads.b_cls[c] += g;
            let wrow = &self.w_cls[c * d..(c + 1) * d];
            let grow = &mut grads.w_cls[c * d..(c + 1) * d];
            let drep = &mut d_s[(s_len - 1) * d..];
            for i in 0..d {
                grow[i] += g * rep[i];
                drep[i] += g * wrow[i];
            }
        }

        // Uniform fan-out of the aggregate-gradient over supervised rows.
        let row_tap = d_agg.map(|(v, m)| {
            let scale = 1.0 / (m * NUM_HEADS * t_len) as f64;
            (v, m, scale)
        });

        for layer in (0..NUM_LAYERS).rev() {
            let x = &fwd.s_levels[layer];
            let mut d_x = d_s.clone();
            for head in 0..NUM_HEADS {
                let idx = layer * NUM_HEADS + head;
                let k = &fwd.k_cache[idx];
                let v = &fwd.v_cache[idx];
                let q = &fwd.q_cache[idx];
                let p = &fwd.p_cache[idx];

                // dP from the head output, plus supervision taps chained
                // through the per-row patch renormalization.
                let mut d_p = vec![0.0; t_len * s_len];
                for t in 0..t_len {
                    let d_o = &d_s[(patches + t) * d + head * dh..(patches + t) * d + (head + 1) * dh];
                    let dprow = &mut d_p[t * s_len..(t + 1) * s_len];
                    for j in 0..s_len {
                        dprow[j] = dot(d_o, &v[j * dh..(j + 1) * dh]);
                    }
                    if let Some((tap, m, scale)) = row_tap {
                        if layer < m {
                            let prow = &p[t * s_len..t * s_len + patches];
                            let mass: f64 = prow.iter().sum();
                            let inner: f64 = tap
                                .iter()
                                .zip(prow)
                                .map(|(&g, &pv)| g * pv / mass)
                                .sum();
                            for (slot, (&g, _)) in
                                dprow[..patches].iter_mut().zip(tap.iter().zip(prow))
                            {
                                *slot += (g - inner) * scale / mass;
                            }
                        }
                    }
                }

                let mut d_v = vec![0.0; s_len * dh];
                for t in 0..t_len {
                    let d_o = &d_s[(patches + t) * d + head * dh..(patches + t) * d + (head + 1) * dh];
                    let prow = &p[t * s_len..(t + 1) * s_len];
                    for j in 0..s_len {
                        let w = prow[j];
                        if w != 0.0 {
                            let dvr = &mut d_v[j * dh..(j + 1) * dh];
                            for c in 0..dh {
                                dvr[c] += w * d_o[c];
                            }
                        }
                    }
                }

                // Softmax backward per text row.
                let mut d_z = vec![0.0; t_len * s_len];
                for t in 0..t_len {
                    let prow = &p[t * s_len..(t + 1) * s_len];
                    let dprow = &d_p[t * s_len..(t + 1) * s_len];
                    let inner = dot(prow, dprow);
                    let dzrow = &mut d_z[t * s_len..(t + 1) * s_len];
                    for j in 0..s_len {
                        dzrow[j] = prow[j] * (dprow[j] - inner);
                    }
                }

                // dQ = dZ K / sqrt(dh); dK = dZ^T Q / sqrt(dh).
                let mut d_q = vec![0.0; t_len * dh];
                let mut d_k = vec![0.0; s_len * dh];
                for t in 0..t_len {
                    let dzrow = &d_z[t * s_len..(t + 1) * s_len];
                    let dqrow = &mut d_q[t * dh..(t + 1) * dh];
                    let qrow = &q[t * dh..(t + 1) * dh];
                    for j in 0..s_len {
                        let g = dzrow[j] * inv_sqrt;
                        if g != 0.0 {
                            let krow = &k[j * dh..(j + 1) * dh];
                            let dkrow = &mut d_k[j * dh..(j + 1) * dh];
                            for c in 0..dh {
                                dqrow[c] += g * krow[c];
                                dkrow[c] += g * qrow[c];
                            }
                        }
                    }
                }

                // Projection gradients and input contributions.
                let text = &x[patches * d..];
                acc_weight_grad(text, t_len, d, &d_q, dh, &mut grads.wq[idx]);
                acc_input_grad(&d_q, t_len, &self.wq[idx], d, dh, &mut d_x[patches * d..]);
                acc_weight_grad(x, s_len, d, &d_k, dh, &mut grads.wk[idx]);
                acc_input_grad(&d_k, s_len, &self.wk[idx], d, dh, &mut d_x);
                acc_weight_grad(x, s_len, d, &d_v, dh, &mut grads.wv[idx]);
                acc_input_grad(&d_v, s_len, &self.wv[idx], d, dh, &mut d_x);
            }
            d_s = d_x;
        }

        // Into the embeddings.
        let chart = inst.chart.values();
        for p in 0..patches {
            let dsrow = &d_s[p * d..(p + 1) * d];
            let grow = &mut grads.e_img[p * d..(p + 1) * d];
            let v = chart[p];
            for i in 0..d {
                grow[i] += dsrow[i];
                grads.w_val[i] += v * dsrow[i];
            }
        }
        for (t, &tok) in inst.tokens.iter().enumerate() {
            let dsrow = &d_s[(patches + t) * d..(patches + t + 1) * d];
            let grow = &mut grads.e_tok[tok * d..(tok + 1) * d];
            for i in 0..d {
                grow[i] += dsrow[i];
            }
        }
    }
}

/// Negative log likelihood of the answer under the class probabilities,
/// with the exact gradient with respect to the probabilities.
pub fn lm_loss(probs: &[f64; 2], answer: bool) -> (f64, [f64; 2]) {
    let idx = answer as usize;
    let p = probs[idx];
    let mut grad = [0.0; 2];
    grad[idx] = -1.0 / p;
    (-fmath::ln(p), grad)
}

/// Gradient accumulator with the same block layout as [`ToyModel`].
#[derive(Clone, Debug)]
pub struct Grads {
    pub e_img: Vec<f64>,
    pub w_val: Vec<f64>,
    pub e_tok: Vec<f64>,
    pub wq: Vec<Vec<f64>>,
    pub wk: Vec<Vec<f64>>,
    pub wv: Vec<Vec<f64>>,
    pub w_cls: Vec<f64>,
    pub b_cls: Vec<f64>,
}

impl Grads {
    pub fn zeros_like(model: &ToyModel) -> Self {
        Self {
            e_img: vec![0.0; model.e_img.len()],
            w_val: vec![0.0; model.w_val.len()],
            e_tok: vec![0.0; model.e_tok.len()],
            wq: model.wq.iter().map(|b| vec![0.0; b.len()]).collect(),
            wk: model.wk.iter().map(|b| vec![0.0; b.len()]).collect(),
            wv: model.wv.iter().map(|b| vec![0.0; b.len()]).collect(),
            w_cls: vec![0.0; model.w_cls.len()],
            b_cls: vec![0.0; model.b_cls.len()],
        }
    }

    pub fn blocks(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = vec![&self.e_img, &self.w_val, &self.e_tok];
        for i in 0..self.wq.len() {
            v.push(&self.wq[i]);
            v.push(&self.wk[i]);
            v.push(&self.wv[i]);
        }
        v.push(&self.w_cls);
        v.push(&self.b_cls);
        v
    }

    /// `self += other`, block by block; used to combine chunked accumulations
    /// in a fixed order.
    pub fn add(&mut self, other: &Grads) {
        let add_vec = |a: &mut Vec<f64>, b: &Vec<f64>| {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        };
        add_vec(&mut self.e_img, &other.e_img);
        add_vec(&mut self.w_val, &other.w_val);
        add_vec(&mut self.e_tok, &other.e_tok);
        for i in 0..self.wq.len() {
            add_vec(&mut self.wq[i], &other.wq[i]);
            add_vec(&mut self.wk[i], &other.wk[i]);
            add_vec(&mut self.wv[i], &other.wv[i]);
        }
        add_vec(&mut self.w_cls, &other.w_cls);
        add_vec(&mut self.b_cls, &other.b_cls);
    }
}

/// `out = x (rows x inner) . w (inner x cols)`, rows-major everywhere.
fn matmul(x: &[f64], rows: usize, inner: usize, w: &[f64], cols: usize, out: &mut [f64]) {
    for r in 0..rows {
        let xrow = &x[r * inner..(r + 1) * inner];
        let orow = &mut out[r * cols..(r + 1) * cols];
        for (i, &xv) in xrow.iter().enumerate() {
            if xv != 0.0 {
                let wrow = &w[i * cols..(i + 1) * cols];
                for c in 0..cols {
                    orow[c] += xv * wrow[c];
                }
            }
        }
    }
}

/// `grad_w += x^T . d_out` for a `rows x inner` input and `rows x cols`
/// output gradient.
fn acc_weight_grad(x: &[f64], rows: usize, inner: usize, d_out: &[f64], cols: usize, grad_w: &mut [f64]) {
    for r in 0..rows {
        let xrow = &x[r * inner..(r + 1) * inner];
        let drow = &d_out[r * cols..(r + 1) * cols];
        for (i, &xv) in xrow.iter().enumerate() {
            if xv != 0.0 {
                let grow = &mut grad_w[i * cols..(i + 1) * cols];
                for c in 0..cols {
                    grow[c] += xv * drow[c];
                }
            }
        }
    }
}

/// `d_x += d_out . w^T` for a `rows x cols` output gradient and
/// `inner x cols` weight.
fn acc_input_grad(d_out: &[f64], rows: usize, w: &[f64], inner: usize, cols: usize, d_x: &mut [f64]) {
    for r in 0..rows {
        let drow = &d_out[r * cols..(r + 1) * cols];
        let xrow = &mut d_x[r * inner..(r + 1) * inner];
        for i in 0..inner {
            xrow[i] += dot(drow, &w[i * cols..(i + 1) * cols]);
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn softmax_in_place(row: &mut [f64]) {
    let mut hi = f64::NEG_INFINITY;
    for &v in row.iter() {
        hi = hi.max(v);
    }
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = fmath::exp(*v - hi);
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

/// Forward activations kept for the backward pass.
pub(crate) struct ForwardPass {
    pub probs: [f64; 2],
    pub attn: AttnTensor,
    s_levels: Vec<Vec<f64>>,
    q_cache: Vec<Vec<f64>>,
    k_cache: Vec<Vec<f64>>,
    v_cache: Vec<Vec<f64>>,
    p_cache: Vec<Vec<f64>>,
}
