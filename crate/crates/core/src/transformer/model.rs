//! Teacher-forced forward pass on the autodiff tape.
//!
//! Causal RFA is evaluated in its parallel form here: the attention matrix
//! `phi(Q) phi(K)^T` is multiplied elementwise by a lower-triangular decay
//! matrix `M[t, i] = c_i * prod_{i < j <= t} f_j`, which unrolls the gated
//! recurrence exactly. The incremental decoder runs the recurrence itself.

use super::batch::{Batch, Example};
use super::config::{Backend, ModelConfig};
use super::params::{
    init_parameters, Attn, FeatureMaps, Gate, Gradients, Linear, Norm, ParamTree, Parameters,
};
use crate::attention::{GateVariant, TokenMeta, DENOM_EPS};
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: Parameters,
    pub maps: FeatureMaps,
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self> {
        let params = init_parameters(&config)?;
        let maps = FeatureMaps::sample(&config)?;
        Ok(Self {
            config,
            params,
            maps,
        })
    }

    pub fn from_parts(config: ModelConfig, params: Parameters) -> Result<Self> {
        config.validate()?;
        let expected = init_parameters(&config)?;
        let shapes = |p: &Parameters| -> Vec<(usize, usize)> {
            p.leaves().iter().map(|t| (t.rows, t.cols)).collect()
        };
        if shapes(&expected) != shapes(&params) {
            return Err(Error::InvalidConfig(
                "parameter shapes do not match config".into(),
            ));
        }
        let maps = FeatureMaps::sample(&config)?;
        Ok(Self {
            config,
            params,
            maps,
        })
    }

    /// Same weights, different attention backends / gating. Feature maps are
    /// re-derived from the (unchanged) master seed.
    pub fn with_backends(&self, cross: Backend, causal: Backend, gate: GateVariant) -> Result<Self> {
        let mut config = self.config.clone();
        config.cross_backend = cross;
        config.causal_backend = causal;
        config.gate_variant = gate;
        config.validate()?;
        Ok(Self {
            config,
            params: self.params.clone(),
            maps: self.maps.clone(),
        })
    }
}

/// Result of a teacher-forced pass.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// One `(tgt_len + 1) x vocab` matrix per example.
    pub logits: Vec<Tensor>,
    /// Mean token cross-entropy over non-pad target positions.
    pub loss: f64,
    pub num_tokens: usize,
}

/// Sinusoidal position encoding written into `out` (length `d_model`).
pub fn positional_encoding(pos: usize, out: &mut [f64]) {
    let d = out.len();
    for i in (0..d).step_by(2) {
        let freq = 1.0 / 10000f64.powf(i as f64 / d as f64);
        let angle = pos as f64 * freq;
        out[i] = angle.sin();
        if i + 1 < d {
            out[i + 1] = angle.cos();
        }
    }
}

fn position_table(n: usize, d: usize) -> Tensor {
    let mut t = Tensor::zeros(n, d);
    for p in 0..n {
        positional_encoding(p, t.row_mut(p));
    }
    t
}

struct Graph<'a> {
    tape: Tape,
    config: &'a ModelConfig,
    vars: ParamTree<Var>,
    cross_maps: Vec<Vec<Var>>,
    causal_maps: Vec<Vec<Var>>,
}

enum Mask<'m> {
    None,
    Causal,
    Gated {
        layer_input: Var,
        gates: &'m [Gate<Var>],
        meta: &'m TokenMeta,
    },
}

impl<'a> Graph<'a> {
    fn new(model: &'a Model) -> Self {
        let mut tape = Tape::new();
        let vars = model.params.map(|_, t| tape.leaf(t.clone()));
        let mut load = |maps: &Vec<Vec<crate::random_features::FeatureMap>>| -> Vec<Vec<Var>> {
            maps.iter()
                .map(|layer| {
                    layer
                        .iter()
                        .map(|m| {
                            let s = m.spec();
                            tape.leaf(Tensor::from_vec(
                                s.num_features,
                                s.input_dim,
                                m.weights().to_vec(),
                            ))
                        })
                        .collect()
                })
                .collect()
        };
        let (cross_maps, causal_maps) = match (model.config.cross_backend, model.config.causal_backend) {
            (Backend::Exact, Backend::Exact) => (Vec::new(), Vec::new()),
            (Backend::Rfa, Backend::Exact) => (load(&model.maps.cross), Vec::new()),
            (Backend::Exact, Backend::Rfa) => (Vec::new(), load(&model.maps.causal)),
            (Backend::Rfa, Backend::Rfa) => (load(&model.maps.cross), load(&model.maps.causal)),
        };
        Self {
            tape,
            config: &model.config,
            vars,
            cross_maps,
            causal_maps,
        }
    }

    fn linear(&mut self, x: Var, l: &Linear<Var>) -> Var {
        let y = self.tape.matmul(x, l.w);
        self.tape.add_row(y, l.b)
    }

    fn norm(&mut self, x: Var, n: &Norm<Var>) -> Var {
        let y = self.tape.layer_norm_rows(x);
        let y = self.tape.mul_row(y, n.gamma);
        self.tape.add_row(y, n.beta)
    }

    fn embed(&mut self, table: Var, ids: &[usize]) -> Var {
        let d = self.config.d_model;
        let x = self.tape.gather(table, ids);
        let x = self.tape.scale(x, (d as f64).sqrt());
        self.tape.add_const(x, &position_table(ids.len(), d))
    }

    fn ffn(&mut self, x: Var, fin: &Linear<Var>, fout: &Linear<Var>) -> Var {
        let h = self.linear(x, fin);
        let h = self.tape.relu(h);
        self.linear(h, fout)
    }

    fn exact_head(&mut self, q: Var, k: Var, v: Var, causal: bool) -> Var {
        let dh = self.config.d_head() as f64;
        let s = self.tape.matmul_bt(q, k);
        let s = self.tape.scale(s, 1.0 / dh.sqrt());
        let p = if causal {
            self.tape.softmax_rows(s, Some(&|r, c| c <= r))
        } else {
            self.tape.softmax_rows(s, None)
        };
        self.tape.matmul(p, v)
    }

    fn features(&mut self, x: Var, map: Var) -> Var {
        let d = self.tape.value(map).rows as f64;
        let xn = self.tape.l2_normalize_rows(x);
        let proj = self.tape.matmul_bt(xn, map);
        let s = self.tape.sin(proj);
        let c = self.tape.cos(proj);
        let phi = self.tape.concat_cols(&[s, c]);
        self.tape.scale(phi, (1.0 / d).sqrt())
    }

    /// Multiplicative weights `M[t, i]` for one gated head.
    fn gate_weights(&mut self, layer_input: Var, gate: &Gate<Var>, meta: &TokenMeta) -> Var {
        let n = meta.len();
        let prev = self.tape.shift_down(layer_input);
        let logits = self.tape.matmul(prev, gate.w_f);
        let logits = self.tape.add_row(logits, gate.b_f);
        let gated: Vec<f64> = (0..n)
            .map(|t| if t > 0 && meta.is_start[t] { 1.0 } else { 0.0 })
            .collect();
        let ls = self.tape.log_sigmoid(logits);
        let log_f = self.tape.mul_const(ls, Tensor::from_vec(n, 1, gated.clone()));
        let decay = self.tape.decay(log_f);
        if self.config.gate_variant != GateVariant::SgateAvg {
            return decay;
        }
        // Averaged boundaries scale the boundary token's own term by (1 - f).
        let f = self.tape.sigmoid(logits);
        let averaged: Vec<f64> = gated
            .iter()
            .zip(&self.tape.value(f).data)
            .map(|(&g, &fv)| if g == 1.0 && fv < 1.0 { 1.0 } else { 0.0 })
            .collect();
        let neg = self.tape.scale(logits, -1.0);
        let one_minus_f = self.tape.sigmoid(neg);
        let coef = self.tape.mul_const(one_minus_f, Tensor::from_vec(n, 1, averaged.clone()));
        let rest = Tensor::from_vec(n, 1, averaged.iter().map(|a| 1.0 - a).collect());
        let coef = self.tape.add_const(coef, &rest);
        let coef_row = self.tape.transpose(coef);
        self.tape.mul_row(decay, coef_row)
    }

    fn rfa_head(&mut self, q: Var, k: Var, v: Var, map: Var, weights: Option<Var>, causal: bool) -> Var {
        let pq = self.features(q, map);
        let pk = self.features(k, map);
        let a = self.tape.matmul_bt(pq, pk);
        let a = match weights {
            Some(w) => self.tape.mul(a, w),
            None if causal => {
                let n = self.tape.value(a).rows;
                let mut tri = Tensor::zeros(n, n);
                for t in 0..n {
                    tri.row_mut(t)[..=t].iter_mut().for_each(|x| *x = 1.0);
                }
                self.tape.mul_const(a, tri)
            }
            None => a,
        };
        let num = self.tape.matmul(a, v);
        let den = self.tape.row_sum(a);
        let den = self.tape.max_eps(den, DENOM_EPS);
        self.tape.div_by_col(num, den)
    }

    #[allow(clippy::too_many_arguments)]
    fn attention(
        &mut self,
        query_in: Var,
        kv_in: Var,
        p: &Attn<Var>,
        backend: Backend,
        maps: Option<&[Var]>,
        mask: Mask<'_>,
    ) -> Var {
        let q = self.linear(query_in, &p.q);
        let k = self.linear(kv_in, &p.k);
        let v = self.linear(kv_in, &p.v);
        let dh = self.config.d_head();
        let causal = !matches!(mask, Mask::None);
        let heads: Vec<Var> = (0..self.config.n_heads)
            .map(|h| {
                let qh = self.tape.slice_cols(q, h * dh, dh);
                let kh = self.tape.slice_cols(k, h * dh, dh);
                let vh = self.tape.slice_cols(v, h * dh, dh);
                match backend {
                    Backend::Exact => self.exact_head(qh, kh, vh, causal),
                    Backend::Rfa => {
                        let map = maps.expect("rfa backend without feature maps")[h];
                        let weights = match &mask {
                            Mask::Gated {
                                layer_input,
                                gates,
                                meta,
                            } => Some(self.gate_weights(*layer_input, &gates[h], meta)),
                            _ => None,
                        };
                        self.rfa_head(qh, kh, vh, map, weights, causal)
                    }
                }
            })
            .collect();
        let cat = self.tape.concat_cols(&heads);
        self.linear(cat, &p.o)
    }

    fn encode(&mut self, src: &[usize]) -> Var {
        let vars = self.vars.clone();
        let mut x = self.embed(vars.enc_embed, src);
        for layer in &vars.encoder {
            let h = self.norm(x, &layer.ln_attn);
            let a = self.attention(h, h, &layer.attn, Backend::Exact, None, Mask::None);
            x = self.tape.add(x, a);
            let h = self.norm(x, &layer.ln_ffn);
            let f = self.ffn(h, &layer.ffn_in, &layer.ffn_out);
            x = self.tape.add(x, f);
        }
        self.norm(x, &vars.enc_norm)
    }

    fn decode(&mut self, memory: Var, dec_in: &[usize], meta: &TokenMeta) -> Var {
        let vars = self.vars.clone();
        let cfg = self.config;
        let mut x = self.embed(vars.dec_embed, dec_in);
        for (l, layer) in vars.decoder.iter().enumerate() {
            let h = self.norm(x, &layer.ln_self);
            let mask = if cfg.gate_variant != GateVariant::None {
                Mask::Gated {
                    layer_input: x,
                    gates: &layer.gates,
                    meta,
                }
            } else {
                Mask::Causal
            };
            let causal_maps = self.causal_maps.get(l).cloned();
            let a = self.attention(h, h, &layer.self_attn, cfg.causal_backend, causal_maps.as_deref(), mask);
            x = self.tape.add(x, a);
            let h = self.norm(x, &layer.ln_cross);
            let cross_maps = self.cross_maps.get(l).cloned();
            let c = self.attention(h, memory, &layer.cross_attn, cfg.cross_backend, cross_maps.as_deref(), Mask::None);
            x = self.tape.add(x, c);
            let h = self.norm(x, &layer.ln_ffn);
            let f = self.ffn(h, &layer.ffn_in, &layer.ffn_out);
            x = self.tape.add(x, f);
        }
        let x = self.norm(x, &vars.dec_norm);
        self.linear(x, &vars.output)
    }
}

fn check_tokens(tokens: &[usize], vocab_size: usize) -> Result<()> {
    match tokens.iter().find(|&&t| t >= vocab_size) {
        Some(&id) => Err(Error::OutOfVocab { id, vocab_size }),
        None => Ok(()),
    }
}

fn run<'a>(model: &'a Model, batch: &Batch) -> Result<(Graph<'a>, Option<Var>, Vec<Var>, usize)> {
    let vocab = model.config.vocab_size;
    let mut g = Graph::new(model);
    let mut total: Option<Var> = None;
    let mut logits = Vec::with_capacity(batch.len());
    let mut n_tokens = 0;
    for i in 0..batch.len() {
        let ex = batch.example(i);
        if ex.src.is_empty() {
            return Err(Error::Empty("source sequence"));
        }
        check_tokens(&ex.src, vocab)?;
        check_tokens(&ex.tgt, vocab)?;
        let dec_in = ex.decoder_input();
        let labels = ex.labels();
        let mut meta = batch.tgt_meta[i].clone();
        meta.is_start.truncate(dec_in.len());
        let memory = g.encode(&ex.src);
        let out = g.decode(memory, &dec_in, &meta);
        let ce = g.tape.cross_entropy_sum(out, &labels);
        total = Some(match total {
            Some(t) => g.tape.add(t, ce),
            None => ce,
        });
        n_tokens += labels.len();
        logits.push(out);
    }
    let loss = total.map(|t| g.tape.scale(t, 1.0 / n_tokens as f64));
    Ok((g, loss, logits, n_tokens))
}

pub fn forward(model: &Model, batch: &Batch) -> Result<ForwardOutput> {
    let (g, loss, logits, num_tokens) = run(model, batch)?;
    let loss = loss.map_or(0.0, |l| g.tape.value(l).item());
    Ok(ForwardOutput {
        logits: logits.iter().map(|&v| g.tape.value(v).clone()).collect(),
        loss,
        num_tokens,
    })
}

/// Exact reverse-mode gradients of the mean token loss.
pub fn backward(model: &Model, batch: &Batch) -> Result<(ForwardOutput, Gradients)> {
    let (g, loss, logits, num_tokens) = run(model, batch)?;
    let Some(loss) = loss else {
        return Ok((
            ForwardOutput {
                logits: Vec::new(),
                loss: 0.0,
                num_tokens: 0,
            },
            model.params.zeros_like(),
        ));
    };
    let loss_value = g.tape.value(loss).item();
    if !loss_value.is_finite() {
        return Err(Error::NonFinite("loss"));
    }
    let mut grads = g.tape.backward(loss);
    let gradients = g.vars.map(|_, &v| {
        let shape = g.tape.value(v);
        grads
            .take(v)
            .unwrap_or_else(|| Tensor::zeros(shape.rows, shape.cols))
    });
    Ok((
        ForwardOutput {
            logits: logits.iter().map(|&v| g.tape.value(v).clone()).collect(),
            loss: loss_value,
            num_tokens,
        },
        gradients,
    ))
}

/// `log p(tgt EOS | src)` under teacher forcing.
pub fn sequence_log_prob(model: &Model, example: &Example) -> Result<f64> {
    let batch = Batch::from_examples(std::slice::from_ref(example));
    let out = forward(model, &batch)?;
    Ok(-out.loss * out.num_tokens as f64)
}

/// Teacher-forced next-token accuracy over `examples` (argmax, ties to the
/// lowest id).
pub fn token_accuracy(model: &Model, examples: &[Example]) -> Result<f64> {
    let mut correct = 0usize;
    let mut total = 0usize;
    for chunk in examples.chunks(32) {
        let out = forward(model, &Batch::from_examples(chunk))?;
        for (ex, logits) in chunk.iter().zip(&out.logits) {
            for (r, &label) in ex.labels().iter().enumerate() {
                if crate::decoding::argmax(logits.row(r)) == label {
                    correct += 1;
                }
                total += 1;
            }
        }
    }
    Ok(if total == 0 { 0.0 } else { correct as f64 / total as f64 })
}
