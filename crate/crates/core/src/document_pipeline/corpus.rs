use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::consistency::{self, ConsistencyItem};
use super::window::{Document, ParallelDocument};
use crate::error::{Error, Result};
use crate::fsutil::{read_to_string, write_file};
use crate::seed;
use crate::vocab::{Vocab, SPECIALS};

pub const FORMAL: &str = "FORMAL";
pub const INFORMAL: &str = "INFORMAL";
pub const PRON: &str = "PRON";
pub const PRON_F: &str = "PRON_F";
pub const PRON_I: &str = "PRON_I";
/// Reserved task symbols, placed right after the specials in every
/// synthetic vocabulary.
pub const AGREE_SYMBOLS: [&str; 5] = [FORMAL, INFORMAL, PRON, PRON_F, PRON_I];

const FIRST_WORD: usize = SPECIALS.len() + AGREE_SYMBOLS.len();
const MIN_WORDS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Task {
    /// Target sentence = source sentence.
    Copy,
    /// Sentence 1 carries FORMAL or INFORMAL (dropped in the target); every
    /// later sentence holds one PRON that becomes PRON_F or PRON_I.
    Agree,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Copy => "copy",
            Task::Agree => "agree",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "copy" => Some(Task::Copy),
            "agree" => Some(Task::Agree),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub task: Task,
    pub train_docs: usize,
    pub dev_docs: usize,
    pub test_docs: usize,
    pub min_sentences: usize,
    pub max_sentences: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Total vocabulary size, specials and task symbols included.
    pub vocab_size: usize,
    /// Consistency items (AGREE only).
    pub num_items: usize,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            task: Task::Copy,
            train_docs: 500,
            dev_docs: 50,
            test_docs: 50,
            min_sentences: 2,
            max_sentences: 4,
            min_len: 3,
            max_len: 8,
            vocab_size: 32,
            num_items: 1000,
            seed: 1,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < FIRST_WORD + MIN_WORDS {
            return Err(Error::InvalidInput(format!(
                "vocab size {} too small: {} reserved symbols plus at least {MIN_WORDS} words needed",
                self.vocab_size, FIRST_WORD
            )));
        }
        if self.train_docs + self.dev_docs + self.test_docs == 0 {
            return Err(Error::InvalidInput("corpus needs at least one document".into()));
        }
        if self.min_sentences == 0 || self.min_sentences > self.max_sentences {
            return Err(Error::InvalidInput("need 1 <= min_sentences <= max_sentences".into()));
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(Error::InvalidInput("need 1 <= min_len <= max_len".into()));
        }
        Ok(())
    }

    pub fn vocab(&self) -> Result<Vocab> {
        self.validate()?;
        let words = (0..self.vocab_size - FIRST_WORD).map(|i| format!("w{i}"));
        Vocab::new(AGREE_SYMBOLS.iter().map(|s| s.to_string()).chain(words))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub vocab: Vocab,
    pub train: Vec<ParallelDocument>,
    pub dev: Vec<ParallelDocument>,
    pub test: Vec<ParallelDocument>,
    pub items: Vec<ConsistencyItem>,
}

struct Ids {
    formal: usize,
    informal: usize,
    pron: usize,
    pron_f: usize,
    pron_i: usize,
    words: std::ops::Range<usize>,
}

impl Ids {
    fn new(vocab_size: usize) -> Self {
        let s = SPECIALS.len();
        Self {
            formal: s,
            informal: s + 1,
            pron: s + 2,
            pron_f: s + 3,
            pron_i: s + 4,
            words: FIRST_WORD..vocab_size,
        }
    }
}

fn words(rng: &mut ChaCha8Rng, spec: &CorpusSpec, ids: &Ids) -> Vec<usize> {
    let n = rng.gen_range(spec.min_len..=spec.max_len);
    (0..n).map(|_| rng.gen_range(ids.words.clone())).collect()
}

fn agree_document(
    rng: &mut ChaCha8Rng,
    spec: &CorpusSpec,
    ids: &Ids,
    sentences: usize,
) -> Result<(ParallelDocument, bool)> {
    let formal = rng.gen_bool(0.5);
    let mut src = Vec::with_capacity(sentences);
    let mut tgt = Vec::with_capacity(sentences);
    let first = words(rng, spec, ids);
    let marker = if formal { ids.formal } else { ids.informal };
    src.push(std::iter::once(marker).chain(first.iter().copied()).collect());
    tgt.push(first);
    for _ in 1..sentences {
        let mut s = words(rng, spec, ids);
        let at = rng.gen_range(0..=s.len());
        s.insert(at, ids.pron);
        let t = s
            .iter()
            .map(|&w| match (w == ids.pron, formal) {
                (true, true) => ids.pron_f,
                (true, false) => ids.pron_i,
                (false, _) => w,
            })
            .collect();
        src.push(s);
        tgt.push(t);
    }
    Ok((ParallelDocument::new(Document::new(src)?, Document::new(tgt)?)?, formal))
}

fn copy_document(rng: &mut ChaCha8Rng, spec: &CorpusSpec, ids: &Ids, sentences: usize) -> Result<ParallelDocument> {
    let s: Vec<Vec<usize>> = (0..sentences).map(|_| words(rng, spec, ids)).collect();
    ParallelDocument::new(Document::new(s.clone())?, Document::new(s)?)
}

fn split(spec: &CorpusSpec, ids: &Ids, name: &str, count: usize) -> Result<Vec<ParallelDocument>> {
    let mut rng = seed::rng(seed::derive(spec.seed, name));
    (0..count)
        .map(|_| {
            let n = rng.gen_range(spec.min_sentences..=spec.max_sentences);
            match spec.task {
                Task::Copy => copy_document(&mut rng, spec, ids, n),
                Task::Agree => agree_document(&mut rng, spec, ids, n).map(|d| d.0),
            }
        })
        .collect()
}

/// Replaces every formal pronoun form with the informal one and vice versa.
pub(crate) fn flip_pronouns(sentences: &[Vec<usize>], vocab_size: usize) -> Vec<Vec<usize>> {
    let ids = Ids::new(vocab_size);
    sentences
        .iter()
        .map(|s| {
            s.iter()
                .map(|&w| {
                    if w == ids.pron_f {
                        ids.pron_i
                    } else if w == ids.pron_i {
                        ids.pron_f
                    } else {
                        w
                    }
                })
                .collect()
        })
        .collect()
}

/// Deterministic in `spec.seed`. Splits and items draw from independent
/// substreams, so changing one size never changes another split.
pub fn generate_synthetic_corpus(spec: &CorpusSpec) -> Result<Corpus> {
    let vocab = spec.vocab()?;
    let ids = Ids::new(spec.vocab_size);
    let train = split(spec, &ids, "train", spec.train_docs)?;
    let dev = split(spec, &ids, "dev", spec.dev_docs)?;
    let test = split(spec, &ids, "test", spec.test_docs)?;
    let items = match spec.task {
        Task::Copy => Vec::new(),
        Task::Agree => {
            let mut rng = seed::rng(seed::derive(spec.seed, "items"));
            (0..spec.num_items)
                .map(|_| {
                    let (doc, _) = agree_document(&mut rng, spec, &ids, 2)?;
                    let gold = doc.target.sentences().to_vec();
                    let flipped = flip_pronouns(&gold, spec.vocab_size);
                    let correct = rng.gen_range(0..2);
                    let candidates = if correct == 0 {
                        vec![gold, flipped]
                    } else {
                        vec![flipped, gold]
                    };
                    ConsistencyItem::new(doc.source.sentences().to_vec(), candidates, correct)
                })
                .collect::<Result<_>>()?
        }
    };
    Ok(Corpus {
        vocab,
        train,
        dev,
        test,
        items,
    })
}

/// One sentence per line, a blank line between documents.
pub fn render_documents<'a>(docs: impl IntoIterator<Item = &'a Document>, vocab: &Vocab) -> String {
    let mut out = String::new();
    for (i, d) in docs.into_iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        for s in d.sentences() {
            out.push_str(&vocab.decode(s));
            out.push('\n');
        }
    }
    out
}

pub fn parse_documents(text: &str, vocab: &Vocab) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    let mut current = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                docs.push(Document::new(std::mem::take(&mut current))?);
            }
        } else {
            current.push(vocab.encode(line)?);
        }
    }
    if !current.is_empty() {
        docs.push(Document::new(current)?);
    }
    Ok(docs)
}

pub fn save_parallel(src: &Path, tgt: &Path, docs: &[ParallelDocument], vocab: &Vocab, force: bool) -> Result<()> {
    write_file(src, render_documents(docs.iter().map(|d| &d.source), vocab), force)?;
    write_file(tgt, render_documents(docs.iter().map(|d| &d.target), vocab), force)
}

pub fn load_parallel(src: &Path, tgt: &Path, vocab: &Vocab) -> Result<Vec<ParallelDocument>> {
    let s = parse_documents(&read_to_string(src)?, vocab)?;
    let t = parse_documents(&read_to_string(tgt)?, vocab)?;
    if s.len() != t.len() {
        return Err(Error::parse(
            "parallel corpus",
            format!("{} source documents vs {} target documents", s.len(), t.len()),
        ));
    }
    s.into_iter().zip(t).map(|(s, t)| ParallelDocument::new(s, t)).collect()
}

impl Corpus {
    pub const SPLITS: [&'static str; 3] = ["train", "dev", "test"];
    pub const VOCAB_FILE: &'static str = "vocab.txt";
    pub const ITEMS_FILE: &'static str = "consistency.txt";

    pub fn split(&self, name: &str) -> Option<&[ParallelDocument]> {
        match name {
            "train" => Some(&self.train),
            "dev" => Some(&self.dev),
            "test" => Some(&self.test),
            _ => None,
        }
    }

    /// Writes `vocab.txt`, `{split}.src`/`{split}.tgt` and, when present,
    /// `consistency.txt` into `dir`.
    pub fn save(&self, dir: &Path, force: bool) -> Result<()> {
        let targets: Vec<_> = std::iter::once(dir.join(Self::VOCAB_FILE))
            .chain(Self::SPLITS.iter().flat_map(|s| [dir.join(format!("{s}.src")), dir.join(format!("{s}.tgt"))]))
            .chain((!self.items.is_empty()).then(|| dir.join(Self::ITEMS_FILE)))
            .collect();
        if !force {
            if let Some(p) = targets.iter().find(|p| p.exists()) {
                return Err(Error::Exists(p.clone()));
            }
        }
        write_file(&dir.join(Self::VOCAB_FILE), self.vocab.to_text(), true)?;
        for name in Self::SPLITS {
            let docs = self.split(name).unwrap_or_default();
            save_parallel(&dir.join(format!("{name}.src")), &dir.join(format!("{name}.tgt")), docs, &self.vocab, true)?;
        }
        if !self.items.is_empty() {
            consistency::save_items(&dir.join(Self::ITEMS_FILE), &self.items, &self.vocab, true)?;
        }
        Ok(())
    }

    /// Reads a directory written by [`Corpus::save`]. Missing splits and a
    /// missing items file load as empty.
    pub fn load(dir: &Path) -> Result<Self> {
        let vocab = Vocab::load(&dir.join(Self::VOCAB_FILE))?;
        let mut splits = Vec::new();
        for name in Self::SPLITS {
            let (s, t) = (dir.join(format!("{name}.src")), dir.join(format!("{name}.tgt")));
            splits.push(if s.exists() || t.exists() {
                load_parallel(&s, &t, &vocab)?
            } else {
                Vec::new()
            });
        }
        let items_path = dir.join(Self::ITEMS_FILE);
        let items = if items_path.exists() {
            consistency::load_items(&items_path, &vocab)?
        } else {
            Vec::new()
        };
        let test = splits.pop().unwrap_or_default();
        let dev = splits.pop().unwrap_or_default();
        let train = splits.pop().unwrap_or_default();
        Ok(Self {
            vocab,
            train,
            dev,
            test,
            items,
        })
    }
}
