//! Albums, stories, vocabulary, the JSON-lines dataset format and the
//! synthetic planted-summary generator.

mod album;
mod story;
mod synth;
mod vocab;

pub use album::{load_dataset, Album, Dataset, Example, Header, LoadOptions, Photo, StoryText, FORMAT};
pub use story::{Story, STORY_SENTENCES};
pub use synth::{planted_class, synth_generate, templates, SynthSpec};
pub use vocab::{split_words, tokenize, Vocabulary, BOS, EOS, PAD, UNK};
