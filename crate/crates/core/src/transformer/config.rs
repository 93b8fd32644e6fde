use std::fmt;

use crate::attention::GateVariant;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Backend {
    Exact,
    Rfa,
}

impl Backend {
    pub fn name(self) -> &'static str {
        match self {
            Backend::Exact => "exact",
            Backend::Rfa => "rfa",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "exact" => Some(Backend::Exact),
            "rfa" => Some(Backend::Rfa),
            _ => None,
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Named model variants: which attention backends run in the decoder and
/// whether causal attention is gated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Exact,
    Rfa,
    RfaSgate,
    RfaSgateAvg,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Exact,
        Variant::Rfa,
        Variant::RfaSgate,
        Variant::RfaSgateAvg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Exact => "exact",
            Variant::Rfa => "rfa",
            Variant::RfaSgate => "rfa-sgate",
            Variant::RfaSgateAvg => "rfa-sgate-avg",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == s)
    }

    /// `(cross, causal, gate)`.
    pub fn backends(self) -> (Backend, Backend, GateVariant) {
        match self {
            Variant::Exact => (Backend::Exact, Backend::Exact, GateVariant::None),
            Variant::Rfa => (Backend::Rfa, Backend::Rfa, GateVariant::None),
            Variant::RfaSgate => (Backend::Rfa, Backend::Rfa, GateVariant::Sgate),
            Variant::RfaSgateAvg => (Backend::Rfa, Backend::Rfa, GateVariant::SgateAvg),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub n_enc_layers: usize,
    pub n_dec_layers: usize,
    pub cross_backend: Backend,
    pub causal_backend: Backend,
    pub gate_variant: GateVariant,
    /// Random features per head in cross attention.
    pub d_cross: usize,
    /// Random features per head in causal attention.
    pub d_causal: usize,
    pub sigma: f64,
    pub b_f_init: f64,
    /// Standard deviation of the initial `w_f` entries.
    pub w_f_init_std: f64,
    pub master_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            vocab_size: 64,
            d_model: 64,
            n_heads: 4,
            d_ff: 128,
            n_enc_layers: 2,
            n_dec_layers: 2,
            cross_backend: Backend::Exact,
            causal_backend: Backend::Exact,
            gate_variant: GateVariant::None,
            d_cross: 128,
            d_causal: 64,
            sigma: 1.0,
            b_f_init: 2.0,
            w_f_init_std: 0.01,
            master_seed: 1,
        }
    }
}

impl ModelConfig {
    /// The 6-layer, 512-dim, 8-head setting, with 256 + 32 random features.
    pub fn paper_scale(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            d_model: 512,
            n_heads: 8,
            d_ff: 1024,
            n_enc_layers: 6,
            n_dec_layers: 6,
            d_cross: 256,
            d_causal: 32,
            ..Self::default()
        }
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        let (cross, causal, gate) = variant.backends();
        self.cross_backend = cross;
        self.causal_backend = causal;
        self.gate_variant = gate;
        self
    }

    /// Every field as `key = value` text; floats use the shortest
    /// representation that parses back to the same bits.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("vocab_size", self.vocab_size.to_string()),
            ("d_model", self.d_model.to_string()),
            ("n_heads", self.n_heads.to_string()),
            ("d_ff", self.d_ff.to_string()),
            ("n_enc_layers", self.n_enc_layers.to_string()),
            ("n_dec_layers", self.n_dec_layers.to_string()),
            ("cross_backend", self.cross_backend.name().to_string()),
            ("causal_backend", self.causal_backend.name().to_string()),
            ("gate", self.gate_variant.name().to_string()),
            ("d_cross", self.d_cross.to_string()),
            ("d_causal", self.d_causal.to_string()),
            ("sigma", self.sigma.to_string()),
            ("b_f_init", self.b_f_init.to_string()),
            ("w_f_init_std", self.w_f_init_std.to_string()),
            ("seed", self.master_seed.to_string()),
        ]
    }

    /// Sets one field from its textual form. `variant` expands to the three
    /// backend fields.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad value {value:?} for {key}")))
        }
        let value = value.trim();
        match key {
            "vocab_size" => self.vocab_size = num(key, value)?,
            "d_model" => self.d_model = num(key, value)?,
            "n_heads" => self.n_heads = num(key, value)?,
            "d_ff" => self.d_ff = num(key, value)?,
            "n_enc_layers" => self.n_enc_layers = num(key, value)?,
            "n_dec_layers" => self.n_dec_layers = num(key, value)?,
            "cross_backend" => {
                self.cross_backend = Backend::parse(value)
                    .ok_or_else(|| Error::InvalidConfig(format!("unknown backend {value:?}")))?
            }
            "causal_backend" => {
                self.causal_backend = Backend::parse(value)
                    .ok_or_else(|| Error::InvalidConfig(format!("unknown backend {value:?}")))?
            }
            "gate" => {
                self.gate_variant = GateVariant::parse(value)
                    .ok_or_else(|| Error::InvalidConfig(format!("unknown gate {value:?}")))?
            }
            "variant" => {
                let v = Variant::parse(value)
                    .ok_or_else(|| Error::InvalidConfig(format!("unknown variant {value:?}")))?;
                *self = self.clone().with_variant(v);
            }
            "d_cross" => self.d_cross = num(key, value)?,
            "d_causal" => self.d_causal = num(key, value)?,
            "sigma" => self.sigma = num(key, value)?,
            "b_f_init" => self.b_f_init = num(key, value)?,
            "w_f_init_std" => self.w_f_init_std = num(key, value)?,
            "seed" => self.master_seed = num(key, value)?,
            _ => return Err(Error::InvalidConfig(format!("unknown model key {key:?}"))),
        }
        Ok(())
    }

    pub fn d_head(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.vocab_size < 5 {
            return bad(format!("vocab_size {} too small", self.vocab_size));
        }
        if self.d_model == 0 || self.n_heads == 0 || self.d_ff == 0 {
            return bad("d_model, n_heads and d_ff must be positive".into());
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return bad(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.n_enc_layers == 0 || self.n_dec_layers == 0 {
            return bad("need at least one encoder and one decoder layer".into());
        }
        if self.gate_variant != GateVariant::None && self.causal_backend != Backend::Rfa {
            return bad("gating requires the rfa causal backend".into());
        }
        if self.d_cross == 0 || self.d_causal == 0 {
            return bad("random feature counts must be positive".into());
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be positive, got {}", self.sigma));
        }
        if self.b_f_init != 1.0 && self.b_f_init != 2.0 {
            return bad(format!("b_f_init must be 1 or 2, got {}", self.b_f_init));
        }
        if !(self.w_f_init_std >= 0.0 && self.w_f_init_std.is_finite()) {
            return bad("w_f_init_std must be non-negative".into());
        }
        Ok(())
    }
}
