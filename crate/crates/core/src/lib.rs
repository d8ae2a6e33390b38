//! Core library for mining CVE-linked GitHub issues and detecting
//! vulnerability discussions in issue text.
//!
//! The pipeline: ingest CVE records and their external references
//! ([`nvd`]), harvest issues from the most CVE-associated repositories
//! ([`github`]), build a labeled corpus with contamination-aware splits
//! ([`corpus`]), run one of four detectors ([`detectors`]) backed by
//! pluggable embedding/chat models ([`backends`]) and a from-scratch
//! boosted-tree classifier ([`gbdt`]), then evaluate with per-class
//! metrics and ratio sensitivity analysis ([`evaluation`]).

pub mod backends;
pub mod corpus;
pub mod detectors;
pub mod error;
pub mod evaluation;
pub mod gbdt;
pub mod github;
pub mod http;
pub mod nvd;
pub mod prompt;
pub mod report;
pub mod util;

pub use error::{Error, Result};
