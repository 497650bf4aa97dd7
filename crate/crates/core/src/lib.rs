//! Cross-network streaming recommendation with topical context, higher-order
//! interactions and a time-aware attentive LSTM.

pub mod cell;
pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod interaction;
pub mod linalg;
pub mod model;
pub mod online;
pub mod params;
pub mod pipeline;
pub mod store;
pub mod topics;
pub mod train;

pub use error::{Error, Result};
