use crate::attention::TokenMeta;
use crate::vocab::{BOS, EOS, PAD, SEP};

/// A source/target pair. The target excludes BOS and EOS.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub src: Vec<usize>,
    pub tgt: Vec<usize>,
}

impl Example {
    pub fn new(src: Vec<usize>, tgt: Vec<usize>) -> Self {
        Self { src, tgt }
    }

    /// `BOS tgt`
    pub fn decoder_input(&self) -> Vec<usize> {
        std::iter::once(BOS).chain(self.tgt.iter().copied()).collect()
    }

    /// `tgt EOS`
    pub fn labels(&self) -> Vec<usize> {
        self.tgt.iter().copied().chain(std::iter::once(EOS)).collect()
    }
}

/// Ragged examples padded to the batch maximum. Padded positions are dropped
/// before any computation, so they never reach attention or the loss.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub src: Vec<Vec<usize>>,
    pub tgt: Vec<Vec<usize>>,
    pub src_lens: Vec<usize>,
    pub tgt_lens: Vec<usize>,
    pub src_meta: Vec<TokenMeta>,
    /// Flags over decoder input positions (`BOS tgt`).
    pub tgt_meta: Vec<TokenMeta>,
}

impl Batch {
    pub fn from_examples(examples: &[Example]) -> Self {
        Self::padded(examples, 0)
    }

    /// Like [`Batch::from_examples`] with `extra` additional pad columns.
    pub fn padded(examples: &[Example], extra: usize) -> Self {
        let max_src = examples.iter().map(|e| e.src.len()).max().unwrap_or(0) + extra;
        let max_tgt = examples.iter().map(|e| e.tgt.len()).max().unwrap_or(0) + extra;
        let pad = |v: &[usize], n: usize| {
            let mut out = v.to_vec();
            out.resize(n, PAD);
            out
        };
        let meta = |v: &[usize], n: usize| {
            let mut m = TokenMeta::from_tokens(v, SEP);
            m.is_start.resize(n, false);
            m
        };
        Self {
            src: examples.iter().map(|e| pad(&e.src, max_src)).collect(),
            tgt: examples.iter().map(|e| pad(&e.tgt, max_tgt)).collect(),
            src_lens: examples.iter().map(|e| e.src.len()).collect(),
            tgt_lens: examples.iter().map(|e| e.tgt.len()).collect(),
            src_meta: examples.iter().map(|e| meta(&e.src, max_src)).collect(),
            tgt_meta: examples
                .iter()
                .map(|e| meta(&e.decoder_input(), max_tgt + 1))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }

    pub fn example(&self, i: usize) -> Example {
        Example {
            src: self.src[i][..self.src_lens[i]].to_vec(),
            tgt: self.tgt[i][..self.tgt_lens[i]].to_vec(),
        }
    }

    /// Number of predicted (non-pad) target positions, EOS included.
    pub fn num_target_tokens(&self) -> usize {
        self.tgt_lens.iter().map(|n| n + 1).sum()
    }
}
