//! Prompt pipeline for discovering candidate instrumental variables, control
//! variables, and running variables with a chat-completion model.
//!
//! The crate is organized by stage:
//!
//! - [`causal_model`]: the design query, budgets, assumption tags, IV graph.
//! - [`prompt`]: the template catalog and slot rendering.
//! - [`gateway`]: chat backends, sessions, record/replay transcripts.
//! - [`extraction`]: list parsing, name normalization, subset checks.
//! - [`pipeline`]: the multi-step flows, adversarial round, aggregation.
//! - [`report`]: Markdown/JSON/CSV tables with provenance.
//! - [`artifacts`]: run-directory persistence.

pub mod causal_model;
pub mod prompt;
pub mod gateway;
pub mod extraction;
pub mod pipeline;
pub mod report;
pub mod artifacts;
