use std::collections::HashMap;
use std::hash::Hash;

use crate::error::{Error, Result};

/// Clipped n-gram match counts accumulated over a corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BleuStats {
    /// `matches[n-1]`: clipped matching n-grams.
    pub matches: Vec<usize>,
    /// `totals[n-1]`: hypothesis n-grams.
    pub totals: Vec<usize>,
    pub hyp_len: usize,
    pub ref_len: usize,
}

impl BleuStats {
    /// Modified n-gram precision as a fraction, before smoothing.
    pub fn precision(&self, n: usize) -> f64 {
        let t = self.totals[n - 1];
        if t == 0 {
            0.0
        } else {
            self.matches[n - 1] as f64 / t as f64
        }
    }

    pub fn brevity_penalty(&self) -> f64 {
        if self.hyp_len == 0 {
            0.0
        } else if self.hyp_len >= self.ref_len {
            1.0
        } else {
            (1.0 - self.ref_len as f64 / self.hyp_len as f64).exp()
        }
    }

    /// Score in `[0, 100]`. An order with zero matches gets precision
    /// `1 / (2^k * total)` where `k` counts zero-match orders so far. An order
    /// with no hypothesis n-grams at all scores 0.
    pub fn score(&self) -> f64 {
        let max_n = self.totals.len();
        let mut smooth = 1.0;
        let mut log_sum = 0.0;
        for n in 0..max_n {
            let total = self.totals[n];
            if total == 0 {
                return 0.0;
            }
            let p = if self.matches[n] == 0 {
                smooth *= 2.0;
                1.0 / (smooth * total as f64)
            } else {
                self.matches[n] as f64 / total as f64
            };
            log_sum += p.ln();
        }
        let score = 100.0 * self.brevity_penalty() * (log_sum / max_n as f64).exp();
        score.clamp(0.0, 100.0)
    }
}

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for g in tokens.windows(n) {
            *counts.entry(g).or_insert(0) += 1;
        }
    }
    counts
}

/// Accumulates clipped n-gram statistics over aligned hypothesis/reference
/// segments.
pub fn bleu_stats<T: Eq + Hash>(hyps: &[Vec<T>], refs: &[Vec<T>], max_n: usize) -> Result<BleuStats> {
    if hyps.is_empty() {
        return Err(Error::Empty("BLEU corpus"));
    }
    if max_n == 0 {
        return Err(Error::InvalidInput("BLEU max_n must be >= 1".into()));
    }
    crate::error::check_len("BLEU references", hyps.len(), refs.len())?;
    let mut stats = BleuStats {
        matches: vec![0; max_n],
        totals: vec![0; max_n],
        hyp_len: 0,
        ref_len: 0,
    };
    for (h, r) in hyps.iter().zip(refs) {
        stats.hyp_len += h.len();
        stats.ref_len += r.len();
        for n in 1..=max_n {
            let hc = ngram_counts(h, n);
            let rc = ngram_counts(r, n);
            stats.totals[n - 1] += h.len().saturating_sub(n - 1);
            stats.matches[n - 1] += hc
                .iter()
                .map(|(g, c)| (*c).min(rc.get(g).copied().unwrap_or(0)))
                .sum::<usize>();
        }
    }
    Ok(stats)
}

/// Corpus BLEU with exponential smoothing and brevity penalty.
pub fn bleu<T: Eq + Hash>(hyps: &[Vec<T>], refs: &[Vec<T>], max_n: usize) -> Result<f64> {
    Ok(bleu_stats(hyps, refs, max_n)?.score())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn identity_is_one_hundred() {
        let h = vec![toks("a b c d e"), toks("f g h i")];
        assert_eq!(bleu(&h, &h, 4).unwrap(), 100.0);
    }

    #[test]
    fn classic_unigram_case() {
        let s = bleu_stats(&[toks("the the the the the the the")], &[toks("the cat is on the mat")], 4).unwrap();
        assert_eq!((s.matches[0], s.totals[0]), (2, 7));
    }

    #[test]
    fn no_overlap_is_small_but_positive() {
        let h: Vec<Vec<usize>> = vec![(0..24).collect()];
        let r: Vec<Vec<usize>> = vec![(100..124).collect()];
        let b = bleu(&h, &r, 4).unwrap();
        assert!(b > 0.0 && b < 1.0, "{b}");
    }

    #[test]
    fn errors() {
        let e: Vec<Vec<usize>> = vec![];
        assert!(bleu(&e, &e, 4).is_err());
        assert!(bleu(&[vec![1]], &[], 4).is_err());
    }
}
