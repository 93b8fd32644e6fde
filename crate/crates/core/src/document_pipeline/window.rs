use crate::attention::TokenMeta;
use crate::error::{Error, Result};
use crate::transformer::Example;
use crate::vocab::SEP;

/// An ordered list of nonempty sentences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    sentences: Vec<Vec<usize>>,
}

impl Document {
    pub fn new(sentences: Vec<Vec<usize>>) -> Result<Self> {
        if sentences.is_empty() {
            return Err(Error::Empty("document"));
        }
        for s in &sentences {
            if s.is_empty() {
                return Err(Error::Empty("sentence"));
            }
            if s.contains(&SEP) {
                return Err(Error::InvalidInput("sentence contains the separator token".into()));
            }
        }
        Ok(Self { sentences })
    }

    pub fn sentences(&self) -> &[Vec<usize>] {
        &self.sentences
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn num_tokens(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }
}

/// Source and target documents with matching sentence counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParallelDocument {
    pub source: Document,
    pub target: Document,
}

impl ParallelDocument {
    pub fn new(source: Document, target: Document) -> Result<Self> {
        if source.len() != target.len() {
            return Err(Error::DimensionMismatch {
                context: "parallel document sentences",
                expected: source.len(),
                actual: target.len(),
            });
        }
        Ok(Self { source, target })
    }

    pub fn len(&self) -> usize {
        self.source.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source.is_empty()
    }
}

/// Up to `window_size` consecutive sentences joined by SEP.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocumentWindow {
    pub window_size: usize,
    pub tokens: Vec<usize>,
    pub meta: TokenMeta,
    /// Zero-based index of the first sentence covered.
    pub first_sentence: usize,
    /// Zero-based index of the final sentence covered.
    pub last_sentence: usize,
}

impl DocumentWindow {
    pub fn num_sentences(&self) -> usize {
        self.last_sentence - self.first_sentence + 1
    }
}

pub fn join_sentences<S: AsRef<[usize]>>(sentences: &[S]) -> Vec<usize> {
    let mut out = Vec::new();
    for (i, s) in sentences.iter().enumerate() {
        if i > 0 {
            out.push(SEP);
        }
        out.extend_from_slice(s.as_ref());
    }
    out
}

/// One window per sentence `t`, covering sentences `max(0, t+1-L)..=t`.
/// Early windows are shorter rather than padded.
pub fn make_windows(doc: &Document, window_size: usize) -> Result<Vec<DocumentWindow>> {
    if window_size < 1 {
        return Err(Error::InvalidInput("window size L must be >= 1".into()));
    }
    Ok((0..doc.len())
        .map(|t| {
            let first = (t + 1).saturating_sub(window_size);
            let tokens = join_sentences(&doc.sentences[first..=t]);
            DocumentWindow {
                window_size,
                meta: TokenMeta::from_tokens(&tokens, SEP),
                tokens,
                first_sentence: first,
                last_sentence: t,
            }
        })
        .collect())
}

/// Tokens after the final SEP, or everything when there is none. An output
/// ending in SEP yields an empty sentence.
pub fn extract_last_sentence(tokens: &[usize]) -> Vec<usize> {
    match tokens.iter().rposition(|&t| t == SEP) {
        Some(p) => tokens[p + 1..].to_vec(),
        None => tokens.to_vec(),
    }
}

/// Training pairs from every window of every document.
pub fn window_examples(docs: &[ParallelDocument], window_size: usize) -> Result<Vec<Example>> {
    let mut out = Vec::new();
    for doc in docs {
        let src = make_windows(&doc.source, window_size)?;
        let tgt = make_windows(&doc.target, window_size)?;
        out.extend(src.into_iter().zip(tgt).map(|(s, t)| Example::new(s.tokens, t.tokens)));
    }
    Ok(out)
}
