//! Irreversibility, unlinkability and attribute-leakage evaluation.

mod attack;
mod linkability;
mod probe;

pub use attack::{
    compute_sar, invert, invert_cloak, AttackConfig, AttackResult, AttackSurface, RestartOutcome,
    TanhDiagnostic,
};
pub use linkability::{
    compute_linkability, linkability_scores, linkability_scores_from_cloaks,
    linkability_scores_from_records, local_linkability, DualEnrollment, LinkabilityReport,
    LinkabilityScores, LocalLinkability,
};
pub use probe::{
    split_balanced, train_attribute_probe, train_probe_on_split, AttributeProbe, ProbeConfig,
    ProbeReport, ProbeSample,
};
