//! Incremental decoding.
//!
//! Exact causal attention keeps every past key and value (the cache grows by
//! one row per generated token); RFA keeps one [`AttentionState`] per head
//! whose size never changes. Cross attention material is computed once per
//! source window in [`init_cache`].

use crate::attention::{is_averaged_boundary, sigmoid, AttentionState, GateVariant};
use crate::autodiff::{layer_norm_into, log_sum_exp};
use crate::error::{Error, Result};
use crate::random_features::{dot, FeatureMap};
use crate::transformer::params::{Attn, Linear, Norm};
use crate::transformer::{positional_encoding, Backend, Model};
use crate::vocab::{BOS, EOS, SEP};

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
enum CausalCache {
    /// `t x d_model` keys and values, row-major.
    Exact { keys: Vec<f64>, values: Vec<f64> },
    Rfa { heads: Vec<AttentionState> },
}

#[derive(Debug, Clone, PartialEq)]
enum CrossCache {
    Exact { keys: Vec<f64>, values: Vec<f64> },
    Rfa { heads: Vec<AttentionState> },
}

#[derive(Debug, Clone, PartialEq)]
struct LayerCache {
    causal: CausalCache,
    cross: CrossCache,
    /// Layer input at the previous position; feeds the forget gate.
    prev_input: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeCache {
    layers: Vec<LayerCache>,
    generated: usize,
    last_token: Option<usize>,
    source_len: usize,
    d_model: usize,
}

impl DecodeCache {
    /// Tokens fed so far.
    pub fn step(&self) -> usize {
        self.generated
    }

    pub fn source_len(&self) -> usize {
        self.source_len
    }

    /// Whether the next fed token starts a sentence.
    pub fn next_is_start(&self) -> bool {
        matches!(self.last_token, None | Some(SEP))
    }

    /// Reals held by the causal part of the cache.
    pub fn causal_entries(&self) -> usize {
        self.layers
            .iter()
            .map(|l| {
                let c = match &l.causal {
                    CausalCache::Exact { keys, values } => keys.len() + values.len(),
                    CausalCache::Rfa { heads } => heads.iter().map(AttentionState::entries).sum(),
                };
                c + l.prev_input.len()
            })
            .sum()
    }

    /// Reals held by the cross attention part.
    pub fn cross_entries(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match &l.cross {
                CrossCache::Exact { keys, values } => keys.len() + values.len(),
                CrossCache::Rfa { heads } => heads.iter().map(AttentionState::entries).sum(),
            })
            .sum()
    }

    pub fn entries(&self) -> usize {
        self.causal_entries() + self.cross_entries()
    }

    pub fn byte_size(&self) -> usize {
        self.entries() * std::mem::size_of::<f64>()
    }

    /// Number of cached exact keys per layer (0 for RFA).
    pub fn exact_len(&self) -> usize {
        match self.layers.first().map(|l| &l.causal) {
            Some(CausalCache::Exact { keys, .. }) => keys.len() / self.d_model,
            _ => 0,
        }
    }
}

fn linear(x: &[f64], l: &Linear<crate::autodiff::Tensor>) -> Vec<f64> {
    let mut out = l.b.data.clone();
    let n = out.len();
    for (k, &a) in x.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        for (o, &w) in out.iter_mut().zip(&l.w.data[k * n..(k + 1) * n]) {
            *o += a * w;
        }
    }
    out
}

fn norm(x: &[f64], n: &Norm<crate::autodiff::Tensor>) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    layer_norm_into(x, &mut out);
    for ((o, g), b) in out.iter_mut().zip(&n.gamma.data).zip(&n.beta.data) {
        *o = *o * g + b;
    }
    out
}

fn add_assign(x: &mut [f64], y: &[f64]) {
    x.iter_mut().zip(y).for_each(|(a, b)| *a += b);
}

fn ffn(x: &[f64], fin: &Linear<crate::autodiff::Tensor>, fout: &Linear<crate::autodiff::Tensor>) -> Vec<f64> {
    let mut h = linear(x, fin);
    h.iter_mut().for_each(|v| *v = v.max(0.0));
    linear(&h, fout)
}

fn embed(model: &Model, table: &crate::autodiff::Tensor, token: usize, pos: usize) -> Vec<f64> {
    let d = model.config.d_model;
    let scale = (d as f64).sqrt();
    let mut pe = vec![0.0; d];
    positional_encoding(pos, &mut pe);
    table.row(token).iter().zip(&pe).map(|(e, p)| e * scale + p).collect()
}

/// Softmax attention of one head query over `n` cached rows.
fn exact_read(q: &[f64], keys: &[f64], values: &[f64], d_model: usize, off: usize, out: &mut [f64]) {
    let dh = q.len();
    let n = keys.len() / d_model;
    let scale = 1.0 / (dh as f64).sqrt();
    let scores: Vec<f64> = (0..n)
        .map(|i| scale * dot(q, &keys[i * d_model + off..i * d_model + off + dh]))
        .collect();
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    out.iter_mut().for_each(|o| *o = 0.0);
    for (i, w) in weights.iter().enumerate() {
        let p = w / total;
        for (o, v) in out.iter_mut().zip(&values[i * d_model + off..i * d_model + off + dh]) {
            *o += p * v;
        }
    }
}

fn features(map: &FeatureMap, x: &[f64]) -> Vec<f64> {
    let n = dot(x, x).sqrt().max(crate::attention::NORM_EPS);
    let xn: Vec<f64> = x.iter().map(|v| v / n).collect();
    let mut out = vec![0.0; map.output_dim()];
    map.phi_into(&xn, &mut out);
    out
}

/// Encoder output for `src`, one row per position.
pub fn encode(model: &Model, src: &[usize]) -> Result<Vec<Vec<f64>>> {
    let cfg = &model.config;
    if src.is_empty() {
        return Err(Error::Empty("source sequence"));
    }
    if let Some(&id) = src.iter().find(|&&t| t >= cfg.vocab_size) {
        return Err(Error::OutOfVocab {
            id,
            vocab_size: cfg.vocab_size,
        });
    }
    let d = cfg.d_model;
    let dh = cfg.d_head();
    let p = &model.params;
    let mut xs: Vec<Vec<f64>> = src
        .iter()
        .enumerate()
        .map(|(t, &tok)| embed(model, &p.enc_embed, tok, t))
        .collect();
    for layer in &p.encoder {
        let hs: Vec<Vec<f64>> = xs.iter().map(|x| norm(x, &layer.ln_attn)).collect();
        let (keys, values) = project_kv(&hs, &layer.attn);
        for (x, h) in xs.iter_mut().zip(&hs) {
            let q = linear(h, &layer.attn.q);
            let mut cat = vec![0.0; d];
            for head in 0..cfg.n_heads {
                let off = head * dh;
                exact_read(&q[off..off + dh], &keys, &values, d, off, &mut cat[off..off + dh]);
            }
            add_assign(x, &linear(&cat, &layer.attn.o));
        }
        for x in xs.iter_mut() {
            let h = norm(x, &layer.ln_ffn);
            add_assign(x, &ffn(&h, &layer.ffn_in, &layer.ffn_out));
        }
    }
    Ok(xs.iter().map(|x| norm(x, &p.enc_norm)).collect())
}

fn project_kv(rows: &[Vec<f64>], attn: &Attn<crate::autodiff::Tensor>) -> (Vec<f64>, Vec<f64>) {
    let keys = rows.iter().flat_map(|h| linear(h, &attn.k)).collect();
    let values = rows.iter().flat_map(|h| linear(h, &attn.v)).collect();
    (keys, values)
}

/// Encodes the source and precomputes cross attention material.
pub fn init_cache(model: &Model, src: &[usize]) -> Result<DecodeCache> {
    let memory = encode(model, src)?;
    init_cache_from_memory(model, &memory)
}

pub fn init_cache_from_memory(model: &Model, memory: &[Vec<f64>]) -> Result<DecodeCache> {
    let cfg = &model.config;
    let d = cfg.d_model;
    let dh = cfg.d_head();
    let layers = model
        .params
        .decoder
        .iter()
        .enumerate()
        .map(|(l, layer)| {
            let (keys, values) = project_kv(memory, &layer.cross_attn);
            let cross = match cfg.cross_backend {
                Backend::Exact => CrossCache::Exact { keys, values },
                Backend::Rfa => CrossCache::Rfa {
                    heads: (0..cfg.n_heads)
                        .map(|h| {
                            let map = &model.maps.cross[l][h];
                            let mut st = AttentionState::new(map.output_dim(), dh);
                            let off = h * dh;
                            for i in 0..memory.len() {
                                let phi = features(map, &keys[i * d + off..i * d + off + dh]);
                                st.absorb(&phi, &values[i * d + off..i * d + off + dh], 1.0, false);
                            }
                            st
                        })
                        .collect(),
                },
            };
            let causal = match cfg.causal_backend {
                Backend::Exact => CausalCache::Exact {
                    keys: Vec::new(),
                    values: Vec::new(),
                },
                Backend::Rfa => CausalCache::Rfa {
                    heads: (0..cfg.n_heads)
                        .map(|h| AttentionState::new(model.maps.causal[l][h].output_dim(), dh))
                        .collect(),
                },
            };
            LayerCache {
                causal,
                cross,
                prev_input: vec![0.0; d],
            }
        })
        .collect();
    Ok(DecodeCache {
        layers,
        generated: 0,
        last_token: None,
        source_len: memory.len(),
        d_model: d,
    })
}

/// Feeds `token` at the next position and returns next-token logits.
pub fn decode_step(model: &Model, cache: &mut DecodeCache, token: usize) -> Result<Vec<f64>> {
    let is_start = cache.next_is_start();
    decode_step_flagged(model, cache, token, is_start)
}

/// As [`decode_step`] with an explicit sentence-start flag for the fed
/// position.
pub fn decode_step_flagged(
    model: &Model,
    cache: &mut DecodeCache,
    token: usize,
    is_start: bool,
) -> Result<Vec<f64>> {
    let cfg = &model.config;
    if token >= cfg.vocab_size {
        return Err(Error::OutOfVocab {
            id: token,
            vocab_size: cfg.vocab_size,
        });
    }
    if cache.layers.len() != cfg.n_dec_layers || cache.d_model != cfg.d_model {
        return Err(Error::CacheMismatch("layer count or width differs".into()));
    }
    let d = cfg.d_model;
    let dh = cfg.d_head();
    let t = cache.generated;
    let p = &model.params;
    let mut x = embed(model, &p.dec_embed, token, t);
    let mut cat = vec![0.0; d];
    for (l, (layer, lc)) in p.decoder.iter().zip(cache.layers.iter_mut()).enumerate() {
        let layer_input = x.clone();
        let h = norm(&x, &layer.ln_self);
        let q = linear(&h, &layer.self_attn.q);
        let k = linear(&h, &layer.self_attn.k);
        let v = linear(&h, &layer.self_attn.v);
        match &mut lc.causal {
            CausalCache::Exact { keys, values } => {
                if cfg.causal_backend != Backend::Exact {
                    return Err(Error::CacheMismatch("causal backend differs".into()));
                }
                keys.extend_from_slice(&k);
                values.extend_from_slice(&v);
                for head in 0..cfg.n_heads {
                    let off = head * dh;
                    exact_read(&q[off..off + dh], keys, values, d, off, &mut cat[off..off + dh]);
                }
            }
            CausalCache::Rfa { heads } => {
                if cfg.causal_backend != Backend::Rfa {
                    return Err(Error::CacheMismatch("causal backend differs".into()));
                }
                for (head, state) in heads.iter_mut().enumerate() {
                    let off = head * dh;
                    let map = &model.maps.causal[l][head];
                    let gated = cfg.gate_variant != GateVariant::None && is_start && t > 0;
                    let forget = if gated {
                        let g = &layer.gates[head];
                        sigmoid(dot(&g.w_f.data, &lc.prev_input) + g.b_f.item())
                    } else {
                        1.0
                    };
                    let averaged = is_averaged_boundary(cfg.gate_variant, gated, forget);
                    let phi_k = features(map, &k[off..off + dh]);
                    state.absorb(&phi_k, &v[off..off + dh], forget, averaged);
                    let phi_q = features(map, &q[off..off + dh]);
                    state.read(&phi_q, &mut cat[off..off + dh]);
                }
            }
        }
        add_assign(&mut x, &linear(&cat, &layer.self_attn.o));

        let h = norm(&x, &layer.ln_cross);
        let q = linear(&h, &layer.cross_attn.q);
        match &lc.cross {
            CrossCache::Exact { keys, values } => {
                for head in 0..cfg.n_heads {
                    let off = head * dh;
                    exact_read(&q[off..off + dh], keys, values, d, off, &mut cat[off..off + dh]);
                }
            }
            CrossCache::Rfa { heads } => {
                for (head, state) in heads.iter().enumerate() {
                    let off = head * dh;
                    let phi_q = features(&model.maps.cross[l][head], &q[off..off + dh]);
                    state.read(&phi_q, &mut cat[off..off + dh]);
                }
            }
        }
        add_assign(&mut x, &linear(&cat, &layer.cross_attn.o));

        let h = norm(&x, &layer.ln_ffn);
        add_assign(&mut x, &ffn(&h, &layer.ffn_in, &layer.ffn_out));
        lc.prev_input = layer_input;
    }
    let h = norm(&x, &p.dec_norm);
    cache.generated += 1;
    cache.last_token = Some(token);
    Ok(linear(&h, &p.output))
}

/// Default generation cap: twice the source length plus eight.
pub fn default_max_len(source_len: usize) -> usize {
    2 * source_len + 8
}

/// Argmax decoding until EOS or `max_len` tokens. EOS is not returned.
pub fn greedy_decode(model: &Model, src: &[usize], max_len: usize) -> Result<Vec<usize>> {
    let mut cache = init_cache(model, src)?;
    let mut out = Vec::new();
    let mut token = BOS;
    for _ in 0..max_len {
        let logits = decode_step(model, &mut cache, token)?;
        token = argmax(&logits);
        if token == EOS {
            break;
        }
        out.push(token);
    }
    Ok(out)
}

/// Argmax with EOS excluded.
pub fn forced_choice(logits: &mut [f64]) -> usize {
    logits[EOS] = f64::NEG_INFINITY;
    argmax(logits)
}

/// Decodes exactly `len` tokens, never choosing EOS.
pub fn forced_decode(model: &Model, cache: &mut DecodeCache, len: usize) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(len);
    let mut token = BOS;
    for _ in 0..len {
        let mut logits = decode_step(model, cache, token)?;
        token = forced_choice(&mut logits);
        out.push(token);
    }
    Ok(out)
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(logits);
    logits.iter().map(|l| l - lse).collect()
}

struct Hypothesis {
    tokens: Vec<usize>,
    log_prob: f64,
    cache: DecodeCache,
}

/// Length-normalized beam search. Candidates are ranked by cumulative
/// log-probability, ties broken by parent rank and then token id; the final
/// choice maximizes log-probability divided by length (EOS counted).
pub fn beam_decode(model: &Model, src: &[usize], beam: usize, max_len: usize) -> Result<Vec<usize>> {
    if beam == 0 {
        return Err(Error::Usage("beam size must be >= 1".into()));
    }
    let mut alive = vec![Hypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
        cache: init_cache(model, src)?,
    }];
    let mut finished: Vec<(Vec<usize>, f64, usize)> = Vec::new();
    for _ in 0..max_len {
        let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
        for (rank, hyp) in alive.iter_mut().enumerate() {
            let last = hyp.tokens.last().copied().unwrap_or(BOS);
            let logits = decode_step(model, &mut hyp.cache, last)?;
            for (tok, lp) in log_softmax(&logits).into_iter().enumerate() {
                candidates.push((hyp.log_prob + lp, rank, tok));
            }
        }
        candidates.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        let mut next = Vec::with_capacity(beam);
        for &(score, rank, tok) in candidates.iter().take(beam) {
            let parent = &alive[rank];
            if tok == EOS {
                finished.push((parent.tokens.clone(), score, parent.tokens.len() + 1));
            } else {
                let mut tokens = parent.tokens.clone();
                tokens.push(tok);
                next.push(Hypothesis {
                    tokens,
                    log_prob: score,
                    cache: parent.cache.clone(),
                });
            }
        }
        alive = next;
        if finished.len() >= beam || alive.is_empty() {
            break;
        }
    }
    for hyp in alive {
        let len = hyp.tokens.len().max(1);
        finished.push((hyp.tokens, hyp.log_prob, len));
    }
    let mut best = 0;
    for (i, f) in finished.iter().enumerate() {
        let norm = |x: &(Vec<usize>, f64, usize)| x.1 / x.2 as f64;
        if norm(f) > norm(&finished[best]) {
            best = i;
        }
    }
    Ok(finished.swap_remove(best).0)
}
