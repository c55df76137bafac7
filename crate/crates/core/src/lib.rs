//! Tokenization, part-of-speech tagging and greedy transition-based
//! dependency parsing of tweets into Universal Dependencies, with ensemble
//! distillation for compressing many greedy parsers into one.

pub mod align;
pub mod conllu;
pub mod distill;
pub mod encoder;
pub mod eval;
pub mod lint;
pub mod parser;
pub mod runtime;
pub mod synthetic;
pub mod tagger;
pub mod tokenizer;
pub mod transition;
pub mod util;
