//! Exact softmax attention and random feature attention (RFA).
//!
//! RFA replaces `softmax(q . k)` weights with `phi(q) . phi(k)` so that the
//! keys and values can be folded into a running summary `(S, z)`:
//!
//! ```text
//! S_t = f_t S_{t-1} + phi(k_t) v_t^T
//! z_t = f_t z_{t-1} + phi(k_t)
//! out = (phi(q_t) . S_t) / max(phi(q_t) . z_t, eps)
//! ```
//!
//! `f_t` is the sentential forget gate: `sigmoid(w_f . e_{t-1} + b_f)` on the
//! first token of a sentence, `1` everywhere else. Queries and keys are
//! l2-normalized before the feature map, so the norm prefactors of the kernel
//! estimator cancel in the ratio.

use crate::error::{check_len, Error, Result};
use crate::random_features::{dot, FeatureMap};

/// Floor for the RFA denominator. Sine/cosine features are signed, so
/// `phi(q) . z` is not guaranteed positive.
pub const DENOM_EPS: f64 = 1e-6;

/// Norm floor used by [`l2_normalize`].
pub const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum GateVariant {
    #[default]
    None,
    /// Decay the previous sentences' summary at each sentence start.
    Sgate,
    /// Weighted average of the previous summary and the new token at each
    /// gated sentence start; additive elsewhere.
    SgateAvg,
}

impl GateVariant {
    pub fn name(self) -> &'static str {
        match self {
            GateVariant::None => "none",
            GateVariant::Sgate => "sgate",
            GateVariant::SgateAvg => "sgate-avg",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(GateVariant::None),
            "sgate" => Some(GateVariant::Sgate),
            "sgate-avg" => Some(GateVariant::SgateAvg),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateParams {
    pub w_f: Vec<f64>,
    pub b_f: f64,
    pub variant: GateVariant,
}

/// Sentence-start flags for one sequence.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenMeta {
    pub is_start: Vec<bool>,
}

impl TokenMeta {
    /// Position 0 and every position right after `sep` start a sentence.
    pub fn from_tokens(tokens: &[usize], sep: usize) -> Self {
        let is_start = (0..tokens.len())
            .map(|t| t == 0 || tokens[t - 1] == sep)
            .collect();
        Self { is_start }
    }

    pub fn single_sentence(len: usize) -> Self {
        Self {
            is_start: (0..len).map(|t| t == 0).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.is_start.len()
    }

    pub fn is_empty(&self) -> bool {
        self.is_start.is_empty()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn l2_normalize(x: &[f64]) -> Vec<f64> {
    let norm = dot(x, x).sqrt().max(NORM_EPS);
    x.iter().map(|v| v / norm).collect()
}

/// `sum_i softmax_i(scale * q . k_i) v_i`.
pub fn softmax_attention(
    query: &[f64],
    keys: &[Vec<f64>],
    values: &[Vec<f64>],
    scale: f64,
) -> Result<Vec<f64>> {
    if keys.is_empty() {
        return Err(Error::Empty("softmax attention keys"));
    }
    check_len("softmax attention values", keys.len(), values.len())?;
    let d_v = values[0].len();
    for k in keys {
        check_len("softmax attention key", query.len(), k.len())?;
    }
    for v in values {
        check_len("softmax attention value", d_v, v.len())?;
    }
    let scores: Vec<f64> = keys.iter().map(|k| scale * dot(query, k)).collect();
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut out = vec![0.0; d_v];
    for (w, v) in weights.iter().zip(values) {
        for (o, x) in out.iter_mut().zip(v) {
            *o += w / total * x;
        }
    }
    Ok(out)
}

/// Running summary `(S, z)` of keys and values. `S` is `feat_dim x value_dim`,
/// row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionState {
    pub s: Vec<f64>,
    pub z: Vec<f64>,
    pub step: usize,
    value_dim: usize,
}

impl AttentionState {
    pub fn new(feat_dim: usize, value_dim: usize) -> Self {
        Self {
            s: vec![0.0; feat_dim * value_dim],
            z: vec![0.0; feat_dim],
            step: 0,
            value_dim,
        }
    }

    pub fn feat_dim(&self) -> usize {
        self.z.len()
    }

    pub fn value_dim(&self) -> usize {
        self.value_dim
    }

    /// Number of stored reals; fixed for the lifetime of the state.
    pub fn entries(&self) -> usize {
        self.s.len() + self.z.len()
    }

    /// Folds one feature-mapped key and its value into the summary.
    ///
    /// `averaged` selects the weighted-average form
    /// `S = f S + (1 - f) phi(k) v^T` used by [`GateVariant::SgateAvg`] at
    /// gated boundaries.
    pub fn absorb(&mut self, phi_k: &[f64], value: &[f64], forget: f64, averaged: bool) {
        let input_scale = if averaged { 1.0 - forget } else { 1.0 };
        let dv = self.value_dim;
        if forget != 1.0 {
            self.s.iter_mut().for_each(|x| *x *= forget);
            self.z.iter_mut().for_each(|x| *x *= forget);
        }
        for (r, &p) in phi_k.iter().enumerate() {
            let w = input_scale * p;
            self.z[r] += w;
            let row = &mut self.s[r * dv..(r + 1) * dv];
            for (x, v) in row.iter_mut().zip(value) {
                *x += w * v;
            }
        }
        self.step += 1;
    }

    /// `(phi(q) . S) / max(phi(q) . z, eps)` written into `out`.
    pub fn read(&self, phi_q: &[f64], out: &mut [f64]) {
        let dv = self.value_dim;
        out.iter_mut().for_each(|o| *o = 0.0);
        let mut denom = 0.0;
        for (r, &p) in phi_q.iter().enumerate() {
            denom += p * self.z[r];
            for (o, x) in out.iter_mut().zip(&self.s[r * dv..(r + 1) * dv]) {
                *o += p * x;
            }
        }
        let denom = denom.max(DENOM_EPS);
        out.iter_mut().for_each(|o| *o /= denom);
    }
}

/// RFA over a fixed source: `(S, z)` is built once and shared by all queries.
pub fn rfa_cross_attention(
    map: &FeatureMap,
    queries: &[Vec<f64>],
    keys: &[Vec<f64>],
    values: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    if keys.is_empty() {
        return Err(Error::Empty("cross attention source"));
    }
    if queries.is_empty() {
        return Err(Error::Empty("cross attention queries"));
    }
    check_len("cross attention values", keys.len(), values.len())?;
    let d_v = values[0].len();
    let mut state = AttentionState::new(map.output_dim(), d_v);
    for (k, v) in keys.iter().zip(values) {
        check_len("cross attention value", d_v, v.len())?;
        let phi_k = map.phi(&l2_normalize(k))?;
        state.absorb(&phi_k, v, 1.0, false);
    }
    queries
        .iter()
        .map(|q| {
            let phi_q = map.phi(&l2_normalize(q))?;
            let mut out = vec![0.0; d_v];
            state.read(&phi_q, &mut out);
            Ok(out)
        })
        .collect()
}

/// Forget gate for the token whose predecessor has representation `e_prev`.
pub fn compute_gate(params: &GateParams, e_prev: &[f64], is_start: bool) -> f64 {
    if !is_start || params.variant == GateVariant::None {
        return 1.0;
    }
    sigmoid(dot(&params.w_f, e_prev) + params.b_f)
}

/// True when `variant` takes the weighted-average form at this token.
pub fn is_averaged_boundary(variant: GateVariant, is_start: bool, forget: f64) -> bool {
    variant == GateVariant::SgateAvg && is_start && forget < 1.0
}

/// One step of causal RFA. Mutates `state` and returns the attention output.
#[allow(clippy::too_many_arguments)]
pub fn rfa_causal_step(
    map: &FeatureMap,
    state: &mut AttentionState,
    query: &[f64],
    key: &[f64],
    value: &[f64],
    forget: f64,
    variant: GateVariant,
    is_start: bool,
) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&forget) {
        return Err(Error::GateOutOfRange(forget));
    }
    check_len("causal step value", state.value_dim(), value.len())?;
    if value.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("causal step value"));
    }
    let phi_k = map.phi(&l2_normalize(key))?;
    let phi_q = map.phi(&l2_normalize(query))?;
    state.absorb(
        &phi_k,
        value,
        forget,
        is_averaged_boundary(variant, is_start, forget),
    );
    let mut out = vec![0.0; value.len()];
    state.read(&phi_q, &mut out);
    Ok(out)
}

/// Causal RFA over a whole sequence with gates computed from `e_inputs`.
pub fn rfa_causal_sequence(
    map: &FeatureMap,
    queries: &[Vec<f64>],
    keys: &[Vec<f64>],
    values: &[Vec<f64>],
    e_inputs: &[Vec<f64>],
    meta: &TokenMeta,
    params: &GateParams,
) -> Result<Vec<Vec<f64>>> {
    let n = queries.len();
    check_len("causal sequence e_inputs", n, e_inputs.len())?;
    check_len("causal sequence meta", n, meta.len())?;
    let gates: Vec<f64> = (0..n)
        .map(|t| {
            if t == 0 {
                1.0
            } else {
                compute_gate(params, &e_inputs[t - 1], meta.is_start[t])
            }
        })
        .collect();
    rfa_causal_sequence_with_gates(map, queries, keys, values, &gates, meta, params.variant)
}

/// Causal RFA with explicitly supplied gates (one per position).
pub fn rfa_causal_sequence_with_gates(
    map: &FeatureMap,
    queries: &[Vec<f64>],
    keys: &[Vec<f64>],
    values: &[Vec<f64>],
    gates: &[f64],
    meta: &TokenMeta,
    variant: GateVariant,
) -> Result<Vec<Vec<f64>>> {
    let n = queries.len();
    if n == 0 {
        return Err(Error::Empty("causal sequence"));
    }
    check_len("causal sequence keys", n, keys.len())?;
    check_len("causal sequence values", n, values.len())?;
    check_len("causal sequence gates", n, gates.len())?;
    check_len("causal sequence meta", n, meta.len())?;
    let mut state = AttentionState::new(map.output_dim(), values[0].len());
    (0..n)
        .map(|t| {
            rfa_causal_step(
                map,
                &mut state,
                &queries[t],
                &keys[t],
                &values[t],
                gates[t],
                variant,
                meta.is_start[t],
            )
        })
        .collect()
}
