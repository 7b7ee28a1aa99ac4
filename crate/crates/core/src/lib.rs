//! Early detection of malicious phone calls from anonymized call logs.
//!
//! The pipeline has five stages, each its own module:
//!
//! 1. [`call_log`] — the anonymized call-record data model, ordered log
//!    storage, validation, and per-party/per-pair history queries.
//! 2. [`synthgen`] — a deterministic synthetic call-log generator whose
//!    populations and temporal patterns follow the measured behavior of
//!    real malicious and benign callers.
//! 3. [`features`] — streaming extraction of the 29 input features:
//!    incremental per-number counters with before-the-record snapshot
//!    semantics, caller-history aggregation by averaging, and encoding
//!    into fixed-width numeric vectors.
//! 4. [`models`] — logistic regression, linear SVM, a two-layer MLP,
//!    a random forest, and gradient-boosted trees behind one scoring
//!    interface, with serialization and forest introspection.
//! 5. [`metrics`] — ROC/AUC plus the early-detection metrics: the
//!    precision threshold tau(p), first-prediction FP@(M,p), its average
//!    AFP, the malicious-recall curve MR@(n,p), and the unblocked-call
//!    reduction rate, compared against a [`blacklist`] baseline.
//!
//! [`experiments`] wires the stages into seed-deterministic experiment
//! runs (train/test splits, ablations, feature-importance analysis,
//! latency benchmarks) driven by the `callwarden` CLI.

pub mod blacklist;
pub mod call_log;
pub mod experiments;
pub mod features;
pub mod metrics;
pub mod models;
pub mod synthgen;
pub mod timeutil;
