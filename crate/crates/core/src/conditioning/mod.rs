//! Turning prompts and timed lyrics into per-frame conditioning streams.

mod bundle;
mod embedder;
mod lyrics;
mod prompts;

pub use bundle::{
    apply_condition_dropout, assemble_input, Conditioner, ConditioningBundle, ConditioningDims, DropoutDraw,
    DropoutRates,
};
pub use embedder::{stub_embedder, StubEmbedder, TextEmbedder};
pub use lyrics::{encode_lyrics, tokenize, LyricEncoding};
pub use prompts::{encode_prompt_halves, encode_prompts, NegativePrompt, PromptSpec, SegmentSpec, TextProjection};
