use std::path::Path;

use super::window::join_sentences;
use crate::error::{Error, Result};
use crate::fsutil::{read_to_string, write_file};
use crate::transformer::{sequence_log_prob, Example, Model};
use crate::vocab::Vocab;

/// A source context and competing target translations of it, exactly one of
/// which is correct.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConsistencyItem {
    pub source: Vec<Vec<usize>>,
    pub candidates: Vec<Vec<Vec<usize>>>,
    pub correct: usize,
}

impl ConsistencyItem {
    pub fn new(source: Vec<Vec<usize>>, candidates: Vec<Vec<Vec<usize>>>, correct: usize) -> Result<Self> {
        let item = Self {
            source,
            candidates,
            correct,
        };
        item.validate()?;
        Ok(item)
    }

    pub fn validate(&self) -> Result<()> {
        if self.source.is_empty() || self.source.iter().any(Vec::is_empty) {
            return Err(Error::InvalidInput("consistency item has an empty source sentence".into()));
        }
        if self.candidates.len() < 2 {
            return Err(Error::InvalidInput("consistency item needs at least 2 candidates".into()));
        }
        if self.correct >= self.candidates.len() {
            return Err(Error::InvalidInput(format!(
                "correct index {} out of range for {} candidates",
                self.correct,
                self.candidates.len()
            )));
        }
        for c in &self.candidates {
            if c.len() != self.source.len() || c.iter().any(Vec::is_empty) {
                return Err(Error::InvalidInput(
                    "candidate sentences must be nonempty and match the source sentence count".into(),
                ));
            }
        }
        Ok(())
    }

    fn tail(sentences: &[Vec<usize>], window_size: usize) -> Vec<usize> {
        let first = sentences.len().saturating_sub(window_size.max(1));
        join_sentences(&sentences[first..])
    }

    /// The last `window_size` source sentences joined by SEP.
    pub fn source_window(&self, window_size: usize) -> Vec<usize> {
        Self::tail(&self.source, window_size)
    }

    pub fn candidate_window(&self, index: usize, window_size: usize) -> Vec<usize> {
        Self::tail(&self.candidates[index], window_size)
    }

    fn check_vocab(&self, vocab_size: usize) -> Result<()> {
        let all = self.source.iter().chain(self.candidates.iter().flatten()).flatten();
        for &id in all {
            if id >= vocab_size {
                return Err(Error::OutOfVocab { id, vocab_size });
            }
        }
        Ok(())
    }
}

fn predict(model: &Model, item: &ConsistencyItem, window_size: usize) -> Result<usize> {
    let src = item.source_window(window_size);
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for i in 0..item.candidates.len() {
        let score = sequence_log_prob(model, &Example::new(src.clone(), item.candidate_window(i, window_size)))?;
        // Strict comparison keeps the lowest index on ties.
        if score > best_score {
            best = i;
            best_score = score;
        }
    }
    Ok(best)
}

/// Predicted candidate per item: highest `log p(candidate window | source
/// window)` over the last `window_size` sentences, ties to the lowest index.
pub fn consistency_predictions(model: &Model, items: &[ConsistencyItem], window_size: usize) -> Result<Vec<usize>> {
    for item in items {
        item.validate()?;
        item.check_vocab(model.config.vocab_size)?;
    }
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(items.len().max(1));
    let chunk = items.len().div_ceil(threads).max(1);
    std::thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || part.iter().map(|it| predict(model, it, window_size)).collect::<Result<Vec<_>>>())
            })
            .collect();
        let mut out = Vec::with_capacity(items.len());
        for h in handles {
            out.extend(h.join().expect("consistency worker panicked")?);
        }
        Ok(out)
    })
}

/// Fraction of items whose prediction is the correct candidate.
pub fn consistency_evaluate(model: &Model, items: &[ConsistencyItem], window_size: usize) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::Empty("consistency items"));
    }
    let preds = consistency_predictions(model, items, window_size)?;
    let hits = preds.iter().zip(items).filter(|(p, it)| **p == it.correct).count();
    Ok(hits as f64 / items.len() as f64)
}

/// Records of the form
///
/// ```text
/// [item]
/// correct = 1
/// source = FORMAL w3 w1
/// source = w2 PRON
/// candidate.0 = w3 w1
/// candidate.0 = w2 PRON_I
/// candidate.1 = w3 w1
/// candidate.1 = w2 PRON_F
/// ```
///
/// separated by blank lines.
pub fn render_items(items: &[ConsistencyItem], vocab: &Vocab) -> String {
    let mut out = String::new();
    for (n, item) in items.iter().enumerate() {
        if n > 0 {
            out.push('\n');
        }
        out.push_str("[item]\n");
        out.push_str(&format!("correct = {}\n", item.correct));
        for s in &item.source {
            out.push_str(&format!("source = {}\n", vocab.decode(s)));
        }
        for (i, c) in item.candidates.iter().enumerate() {
            for s in c {
                out.push_str(&format!("candidate.{i} = {}\n", vocab.decode(s)));
            }
        }
    }
    out
}

pub fn parse_items(text: &str, vocab: &Vocab) -> Result<Vec<ConsistencyItem>> {
    struct Partial {
        correct: Option<usize>,
        source: Vec<Vec<usize>>,
        candidates: Vec<Vec<Vec<usize>>>,
    }
    fn finish(p: Partial, line: usize) -> Result<ConsistencyItem> {
        let correct = p
            .correct
            .ok_or_else(|| Error::parse("consistency items", format!("record ending at line {line} has no correct index")))?;
        ConsistencyItem::new(p.source, p.candidates, correct)
    }

    let mut items = Vec::new();
    let mut current: Option<Partial> = None;
    for (no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let no = no + 1;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line == "[item]" {
            if let Some(p) = current.take() {
                items.push(finish(p, no)?);
            }
            current = Some(Partial {
                correct: None,
                source: Vec::new(),
                candidates: Vec::new(),
            });
            continue;
        }
        let p = current
            .as_mut()
            .ok_or_else(|| Error::parse("consistency items", format!("line {no}: content before [item]")))?;
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::parse("consistency items", format!("line {no}: expected key = value")))?;
        let (key, value) = (key.trim(), value.trim());
        if key == "correct" {
            p.correct = Some(
                value
                    .parse()
                    .map_err(|_| Error::parse("consistency items", format!("line {no}: bad index {value:?}")))?,
            );
        } else if key == "source" {
            p.source.push(vocab.encode(value)?);
        } else if let Some(idx) = key.strip_prefix("candidate.") {
            let idx: usize = idx
                .parse()
                .map_err(|_| Error::parse("consistency items", format!("line {no}: bad candidate key {key:?}")))?;
            if idx > p.candidates.len() {
                return Err(Error::parse(
                    "consistency items",
                    format!("line {no}: candidate.{idx} appears before candidate.{}", p.candidates.len()),
                ));
            }
            if idx == p.candidates.len() {
                p.candidates.push(Vec::new());
            }
            p.candidates[idx].push(vocab.encode(value)?);
        } else {
            return Err(Error::parse("consistency items", format!("line {no}: unknown key {key:?}")));
        }
    }
    if let Some(p) = current.take() {
        items.push(finish(p, text.lines().count())?);
    }
    Ok(items)
}

pub fn save_items(path: &Path, items: &[ConsistencyItem], vocab: &Vocab, force: bool) -> Result<()> {
    write_file(path, render_items(items, vocab), force)
}

pub fn load_items(path: &Path, vocab: &Vocab) -> Result<Vec<ConsistencyItem>> {
    parse_items(&read_to_string(path)?, vocab)
}
