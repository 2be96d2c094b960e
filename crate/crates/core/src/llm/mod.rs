//! Chat-completion backend for the orchestration, perception and decision
//! agents.

pub mod backend;
pub mod client;
pub mod parse;

pub use backend::http_backends;
pub use client::{requests_sent, ChatClient, ChatMessage, EndpointConfig, LlmError};
pub use parse::{parse_structured, Schema, Structured};
