//! Sliding-window documents, BLEU, the synthetic COPY/AGREE corpora and
//! contrastive consistency scoring.

mod bleu;
mod consistency;
mod corpus;
mod window;

pub use bleu::{bleu, bleu_stats, BleuStats};
pub use consistency::{
    consistency_evaluate, consistency_predictions, load_items, parse_items, render_items,
    save_items, ConsistencyItem,
};
pub use corpus::{
    generate_synthetic_corpus, load_parallel, parse_documents, render_documents, save_parallel,
    Corpus, CorpusSpec, Task, AGREE_SYMBOLS, FORMAL, INFORMAL, PRON, PRON_F, PRON_I,
};
pub use window::{
    extract_last_sentence, join_sentences, make_windows, window_examples, Document,
    DocumentWindow, ParallelDocument,
};
