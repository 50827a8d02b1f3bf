//! Syscall-level runtime security pipeline.
//!
//! Events flow from a probe source through a bounded ring buffer into a single
//! consumer that enriches them with container and lineage context, matches
//! them against a compiled policy set, updates behavior profiles and applies
//! enforcement. A deterministic trace simulator stands in for kernel probes.

pub mod analyzer;
pub mod cli;
pub mod config;
pub mod enforcer;
pub mod event;
pub mod matrix;
pub mod pipeline;
pub mod policy;
pub mod probe;
