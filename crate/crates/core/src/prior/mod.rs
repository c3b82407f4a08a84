//! Text priors injected into voxel features: prompts, a deterministic text
//! encoder, a low-rank adapter and gated cross-attention.

mod attention;
mod encoder;
mod lora;
mod prompt;

pub use attention::{AttentionOutput, GateMode, InstanceAttention, DEFAULT_KEY_DIM};
pub use encoder::{normalize_prompt, stack_rows, StubEncoder, TableEncoder, TextEmbedding, TextEncoder, DEFAULT_EMBED_DIM};
pub use lora::LoraAdapter;
pub use prompt::{build_instance_prompt, PromptSpec, PromptTemplate, Region};
