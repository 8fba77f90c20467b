//! Face-template protection with per-enrollment learned binary cloaks.
//!
//! An enrolled template is never stored. Instead, a small network is trained
//! for each enrollment on the template plus a set of positive and negative
//! disruptors derived from it, and only the network and the binary output it
//! assigns to the template (the cloak) are kept. Verification passes a query
//! through the enrolled network and compares cloaks by Hamming distance.
//!
//! Alongside the scheme itself the crate carries the evaluation harness:
//! TMR at a fixed FMR, a white-box inversion attack, unlinkability metrics
//! across re-enrollments, an attribute-leakage probe, and the orthogonal
//! projection loss.

pub mod cloaknet;
pub mod dataset;
pub mod disruptor;
pub mod error;
pub mod io;
pub mod matcher;
pub mod opl;
pub mod rng;
pub mod security;
pub mod types;

pub use cloaknet::{enroll, infer_cloak, EnrollmentRecord, TrainConfig};
pub use dataset::{compute_distribution_stats, generate_synthetic_dataset, DatasetConfig};
pub use disruptor::{build_disruptor_set, DisruptorConfig, DisruptorSet};
pub use error::{Error, Result};
pub use rng::RngStream;
pub use types::{BinaryCloak, DistributionStats, Template};
