//! geolab: a controlled simulation lab for studying how coordinated evidence
//! ecosystems influence web-search LLM agents.
//!
//! The crate builds synthetic evidence graphs around fictional products, runs
//! agents through a controlled search/crawl environment with result injection,
//! and measures answer-level and trajectory-level influence metrics.

#![forbid(unsafe_code)]

pub mod agent;
pub mod chat;
pub mod config;
pub mod crawlenv;
pub mod dataset;
pub mod ecosystem;
pub mod error;
pub mod judge;
pub mod metrics;
pub mod prompts;
pub mod runner;
pub mod scorer;
pub mod searchenv;
pub mod snippet;

pub use error::{Error, Result};
