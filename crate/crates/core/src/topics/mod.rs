//! Cross-network topical layer: maps source-network posts to a shared topic
//! space and aggregates each window of posts into a context vector.

mod context;
mod lda;
mod precomputed;

pub use context::{user_contexts, window_aggregate, TopicContext};
pub use lda::{fit_lda, LdaParams, TopicModel};
pub use precomputed::{format_context, load_precomputed, parse_contexts, write_contexts, ContextTable};
