//! Concept-bank population through an OpenAI-compatible chat endpoint,
//! with duplicate and class-name filtering, and attachment of externally
//! computed text embeddings.

pub mod client;
pub mod embed;
pub mod error;
pub mod generate;
pub mod prompt;

pub use client::{ChatBackend, ChatRequest, HttpChatClient, HttpConfig, MockScript};
pub use embed::attach_embeddings;
pub use error::GenError;
pub use generate::{generate_bank, parse_bullets, GenConfig, GeneratedBank, GeneratedConcept};
pub use prompt::{render_prompt, PromptMode};
