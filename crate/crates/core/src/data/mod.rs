//! Corpus ingestion: tokenization, vocabulary, knowledge bases, slot
//! attenuation, stage datasets, the profile-conditioned style corpus and the
//! bundled synthetic generators.

mod kb;
mod split;
mod stages;
mod style;
pub mod synth;
mod tokenize;
mod turn;
mod vocab;

pub use kb::{attenuate, AlignedSpan, Attenuation, KbEntry, KnowledgeBase, ScenarioRecord, Superlatives, ValueTable};
pub use split::split_train_test;
pub use stages::{build_stage_datasets, QualityReport, RawTurn, StageDatasets};
pub use style::{load_style_corpus, parse_profile, parse_style_corpus, AGES, GENDERS};
pub use tokenize::{detokenize, memory_tokens, split_item, tokenize, COLON, ITEM_SEPARATOR};
pub use turn::{encode_turn, load_turns, read_jsonl, write_jsonl, DialogueTurn, EncodeLimits, EncodedTurn, Stage};
pub use vocab::{Vocabulary, BOS, BOS_ID, EOS, EOS_ID, PAD, PAD_ID, UNK, UNK_ID};
