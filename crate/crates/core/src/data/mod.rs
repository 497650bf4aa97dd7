//! Event logs: parsing, sparsity filtering, chronological splitting and
//! stream replay.

mod event;
mod filter;
mod split;
mod stream;

pub use event::{parse_event_log, parse_event_str, sort_events, write_event_log, InteractionEvent, Network, Payload};
pub use filter::{filter_sparse, SparsityThresholds};
pub use split::{chronological_split, DatasetSplit, IdIndex, ItemCatalog, Part, SplitRatios, UserEvents};
pub use stream::{simulate_stream, EventStream, StreamRange};
