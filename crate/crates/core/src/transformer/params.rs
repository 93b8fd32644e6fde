//! Parameter tree shared by values, tape variables and gradients.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::config::ModelConfig;
use crate::autodiff::Tensor;
use crate::error::Result;
use crate::random_features::{sample_feature_map, FeatureMap, FeatureMapSpec};
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    /// `in x out`
    pub w: T,
    /// `1 x out`
    pub b: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Norm<T> {
    pub gamma: T,
    pub beta: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Attn<T> {
    pub q: Linear<T>,
    pub k: Linear<T>,
    pub v: Linear<T>,
    pub o: Linear<T>,
}

/// One forget gate per head: `w_f` is `d_model x 1`, `b_f` is `1 x 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gate<T> {
    pub w_f: T,
    pub b_f: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer<T> {
    pub ln_attn: Norm<T>,
    pub attn: Attn<T>,
    pub ln_ffn: Norm<T>,
    pub ffn_in: Linear<T>,
    pub ffn_out: Linear<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderLayer<T> {
    pub ln_self: Norm<T>,
    pub self_attn: Attn<T>,
    pub gates: Vec<Gate<T>>,
    pub ln_cross: Norm<T>,
    pub cross_attn: Attn<T>,
    pub ln_ffn: Norm<T>,
    pub ffn_in: Linear<T>,
    pub ffn_out: Linear<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamTree<T> {
    pub enc_embed: T,
    pub dec_embed: T,
    pub encoder: Vec<EncoderLayer<T>>,
    pub enc_norm: Norm<T>,
    pub decoder: Vec<DecoderLayer<T>>,
    pub dec_norm: Norm<T>,
    pub output: Linear<T>,
}

pub type Parameters = ParamTree<Tensor>;
pub type Gradients = ParamTree<Tensor>;

impl<T> Linear<T> {
    fn map<U>(&self, p: &str, f: &mut impl FnMut(&str, &T) -> U) -> Linear<U> {
        Linear {
            w: f(&format!("{p}.w"), &self.w),
            b: f(&format!("{p}.b"), &self.b),
        }
    }
}

impl<T> Norm<T> {
    fn map<U>(&self, p: &str, f: &mut impl FnMut(&str, &T) -> U) -> Norm<U> {
        Norm {
            gamma: f(&format!("{p}.gamma"), &self.gamma),
            beta: f(&format!("{p}.beta"), &self.beta),
        }
    }
}

impl<T> Attn<T> {
    fn map<U>(&self, p: &str, f: &mut impl FnMut(&str, &T) -> U) -> Attn<U> {
        Attn {
            q: self.q.map(&format!("{p}.q"), f),
            k: self.k.map(&format!("{p}.k"), f),
            v: self.v.map(&format!("{p}.v"), f),
            o: self.o.map(&format!("{p}.o"), f),
        }
    }
}

impl<T> ParamTree<T> {
    /// Rebuilds the tree, visiting leaves in a fixed order with dotted names.
    pub fn map<U>(&self, mut f: impl FnMut(&str, &T) -> U) -> ParamTree<U> {
        let f = &mut f;
        let enc_embed = f("enc.embed", &self.enc_embed);
        let dec_embed = f("dec.embed", &self.dec_embed);
        let encoder = self
            .encoder
            .iter()
            .enumerate()
            .map(|(l, layer)| {
                let p = format!("enc.{l}");
                EncoderLayer {
                    ln_attn: layer.ln_attn.map(&format!("{p}.ln_attn"), f),
                    attn: layer.attn.map(&format!("{p}.attn"), f),
                    ln_ffn: layer.ln_ffn.map(&format!("{p}.ln_ffn"), f),
                    ffn_in: layer.ffn_in.map(&format!("{p}.ffn_in"), f),
                    ffn_out: layer.ffn_out.map(&format!("{p}.ffn_out"), f),
                }
            })
            .collect();
        let enc_norm = self.enc_norm.map("enc.norm", f);
        let decoder = self
            .decoder
            .iter()
            .enumerate()
            .map(|(l, layer)| {
                let p = format!("dec.{l}");
                DecoderLayer {
                    ln_self: layer.ln_self.map(&format!("{p}.ln_self"), f),
                    self_attn: layer.self_attn.map(&format!("{p}.self_attn"), f),
                    gates: layer
                        .gates
                        .iter()
                        .enumerate()
                        .map(|(h, g)| Gate {
                            w_f: f(&format!("{p}.gate.{h}.w_f"), &g.w_f),
                            b_f: f(&format!("{p}.gate.{h}.b_f"), &g.b_f),
                        })
                        .collect(),
                    ln_cross: layer.ln_cross.map(&format!("{p}.ln_cross"), f),
                    cross_attn: layer.cross_attn.map(&format!("{p}.cross_attn"), f),
                    ln_ffn: layer.ln_ffn.map(&format!("{p}.ln_ffn"), f),
                    ffn_in: layer.ffn_in.map(&format!("{p}.ffn_in"), f),
                    ffn_out: layer.ffn_out.map(&format!("{p}.ffn_out"), f),
                }
            })
            .collect();
        let dec_norm = self.dec_norm.map("dec.norm", f);
        let output = self.output.map("output", f);
        ParamTree {
            enc_embed,
            dec_embed,
            encoder,
            enc_norm,
            decoder,
            dec_norm,
            output,
        }
    }

    /// Visits leaves in the same order as [`ParamTree::map`].
    pub fn visit(&self, mut f: impl FnMut(&str, &T)) {
        self.map(|name, t| f(name, t));
    }

    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.visit(|n, _| out.push(n.to_string()));
        out
    }

    pub fn leaves(&self) -> Vec<&T> {
        fn lin<T>(l: &Linear<T>) -> [&T; 2] {
            [&l.w, &l.b]
        }
        fn norm<T>(n: &Norm<T>) -> [&T; 2] {
            [&n.gamma, &n.beta]
        }
        fn attn<T>(a: &Attn<T>) -> impl Iterator<Item = &T> {
            [&a.q, &a.k, &a.v, &a.o].into_iter().flat_map(lin)
        }
        let mut out: Vec<&T> = vec![&self.enc_embed, &self.dec_embed];
        for layer in &self.encoder {
            out.extend(norm(&layer.ln_attn));
            out.extend(attn(&layer.attn));
            out.extend(norm(&layer.ln_ffn));
            out.extend(lin(&layer.ffn_in));
            out.extend(lin(&layer.ffn_out));
        }
        out.extend(norm(&self.enc_norm));
        for layer in &self.decoder {
            out.extend(norm(&layer.ln_self));
            out.extend(attn(&layer.self_attn));
            for g in &layer.gates {
                out.push(&g.w_f);
                out.push(&g.b_f);
            }
            out.extend(norm(&layer.ln_cross));
            out.extend(attn(&layer.cross_attn));
            out.extend(norm(&layer.ln_ffn));
            out.extend(lin(&layer.ffn_in));
            out.extend(lin(&layer.ffn_out));
        }
        out.extend(norm(&self.dec_norm));
        out.extend(lin(&self.output));
        out
    }

    /// Mutable access to leaves in visiting order.
    pub fn leaves_mut(&mut self) -> Vec<&mut T> {
        fn lin<T>(l: &mut Linear<T>) -> [&mut T; 2] {
            [&mut l.w, &mut l.b]
        }
        fn norm<T>(n: &mut Norm<T>) -> [&mut T; 2] {
            [&mut n.gamma, &mut n.beta]
        }
        fn attn<T>(a: &mut Attn<T>) -> impl Iterator<Item = &mut T> {
            [&mut a.q, &mut a.k, &mut a.v, &mut a.o].into_iter().flat_map(lin)
        }
        let mut out: Vec<&mut T> = vec![&mut self.enc_embed, &mut self.dec_embed];
        for layer in &mut self.encoder {
            out.extend(norm(&mut layer.ln_attn));
            out.extend(attn(&mut layer.attn));
            out.extend(norm(&mut layer.ln_ffn));
            out.extend(lin(&mut layer.ffn_in));
            out.extend(lin(&mut layer.ffn_out));
        }
        out.extend(norm(&mut self.enc_norm));
        for layer in &mut self.decoder {
            out.extend(norm(&mut layer.ln_self));
            out.extend(attn(&mut layer.self_attn));
            for g in &mut layer.gates {
                out.push(&mut g.w_f);
                out.push(&mut g.b_f);
            }
            out.extend(norm(&mut layer.ln_cross));
            out.extend(attn(&mut layer.cross_attn));
            out.extend(norm(&mut layer.ln_ffn));
            out.extend(lin(&mut layer.ffn_in));
            out.extend(lin(&mut layer.ffn_out));
        }
        out.extend(norm(&mut self.dec_norm));
        out.extend(lin(&mut self.output));
        out
    }
}

impl Parameters {
    pub fn zeros_like(&self) -> Gradients {
        self.map(|_, t| Tensor::zeros(t.rows, t.cols))
    }

    pub fn num_scalars(&self) -> usize {
        self.leaves().iter().map(|t| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.leaves().iter().all(|t| t.data.iter().all(|x| x.is_finite()))
    }
}

fn normal(rng: &mut impl Rng, rows: usize, cols: usize, std: f64) -> Tensor {
    if std == 0.0 {
        return Tensor::zeros(rows, cols);
    }
    let dist = Normal::new(0.0, std).expect("finite std");
    Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| dist.sample(rng)).collect())
}

fn linear(rng: &mut impl Rng, fan_in: usize, fan_out: usize) -> Linear<Tensor> {
    Linear {
        w: normal(rng, fan_in, fan_out, (1.0 / fan_in as f64).sqrt()),
        b: Tensor::zeros(1, fan_out),
    }
}

fn norm(d: usize) -> Norm<Tensor> {
    Norm {
        gamma: Tensor::filled(1, d, 1.0),
        beta: Tensor::zeros(1, d),
    }
}

fn attn(rng: &mut impl Rng, d: usize) -> Attn<Tensor> {
    Attn {
        q: linear(rng, d, d),
        k: linear(rng, d, d),
        v: linear(rng, d, d),
        o: linear(rng, d, d),
    }
}

/// Deterministic in `config.master_seed`. Every gate bias starts at
/// `config.b_f_init`.
pub fn init_parameters(config: &ModelConfig) -> Result<Parameters> {
    config.validate()?;
    let mut rng = seed::rng(seed::derive(config.master_seed, "init"));
    let d = config.d_model;
    let v = config.vocab_size;
    let emb_std = (1.0 / d as f64).sqrt();
    let enc_embed = normal(&mut rng, v, d, emb_std);
    let dec_embed = normal(&mut rng, v, d, emb_std);
    let encoder = (0..config.n_enc_layers)
        .map(|_| EncoderLayer {
            ln_attn: norm(d),
            attn: attn(&mut rng, d),
            ln_ffn: norm(d),
            ffn_in: linear(&mut rng, d, config.d_ff),
            ffn_out: linear(&mut rng, config.d_ff, d),
        })
        .collect();
    let decoder = (0..config.n_dec_layers)
        .map(|_| DecoderLayer {
            ln_self: norm(d),
            self_attn: attn(&mut rng, d),
            gates: (0..config.n_heads)
                .map(|_| Gate {
                    w_f: normal(&mut rng, d, 1, config.w_f_init_std),
                    b_f: Tensor::scalar(config.b_f_init),
                })
                .collect(),
            ln_cross: norm(d),
            cross_attn: attn(&mut rng, d),
            ln_ffn: norm(d),
            ffn_in: linear(&mut rng, d, config.d_ff),
            ffn_out: linear(&mut rng, config.d_ff, d),
        })
        .collect();
    Ok(ParamTree {
        enc_embed,
        dec_embed,
        encoder,
        enc_norm: norm(d),
        decoder,
        dec_norm: norm(d),
        output: linear(&mut rng, d, v),
    })
}

/// Fixed random feature maps, one per decoder layer and head for each of
/// cross and causal attention, each from its own seed substream.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMaps {
    /// `[layer][head]`
    pub cross: Vec<Vec<FeatureMap>>,
    pub causal: Vec<Vec<FeatureMap>>,
}

impl FeatureMaps {
    pub fn sample(config: &ModelConfig) -> Result<Self> {
        let d_head = config.d_head();
        let maps = |name: &str, features: usize| -> Result<Vec<Vec<FeatureMap>>> {
            let base = seed::derive(config.master_seed, "feature-maps");
            (0..config.n_dec_layers)
                .map(|l| {
                    (0..config.n_heads)
                        .map(|h| {
                            let s = seed::derive_indexed(base, name, &[l, h]);
                            sample_feature_map(FeatureMapSpec::new(d_head, features, config.sigma, s))
                        })
                        .collect()
                })
                .collect()
        };
        Ok(Self {
            cross: maps("cross", config.d_cross)?,
            causal: maps("causal", config.d_causal)?,
        })
    }

    /// Redraws every map from a new base seed (used by the per-step
    /// resampling option).
    pub fn resample(config: &ModelConfig, step_seed: u64) -> Result<Self> {
        let mut c = config.clone();
        c.master_seed = seed::derive(config.master_seed ^ step_seed, "resample");
        Self::sample(&c)
    }
}
