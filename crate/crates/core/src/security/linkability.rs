//! Cross-system linkability of cloaks.
//!
//! Each subject is enrolled twice with independent randomness. Mated scores
//! compare a subject's two cloaks, non-mated scores compare cloaks of
//! different subjects across the two systems. Because Hamming similarities
//! take at most `d + 1` values, both score distributions are handled exactly
//! as discrete histograms.

use serde::{Deserialize, Serialize};

use crate::cloaknet::{enroll, EnrollmentRecord, TrainConfig};
use crate::disruptor::DisruptorConfig;
use crate::error::{Error, Result};
use crate::matcher::hamming_similarity;
use crate::rng::RngStream;
use crate::types::{BinaryCloak, DistributionStats, Template};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalLinkability {
    pub score: f64,
    pub p_mated: f64,
    pub p_non_mated: f64,
    /// `None` when the non-mated probability is zero (infinite ratio).
    pub likelihood_ratio: Option<f64>,
    pub d: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkabilityReport {
    pub d_sys: f64,
    pub m_sys: f64,
    pub mated_count: usize,
    pub non_mated_count: usize,
    /// One entry per distinct score value, ascending.
    pub bins: Vec<LocalLinkability>,
}

fn histogram(scores: &[f64]) -> Vec<(f64, usize)> {
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut out: Vec<(f64, usize)> = Vec::new();
    for s in sorted {
        match out.last_mut() {
            Some((v, c)) if v.total_cmp(&s).is_eq() => *c += 1,
            _ => out.push((s, 1)),
        }
    }
    out
}

/// Local linkability `D(s) = 2 LR / (1 + LR) - 1` for `LR > 1`, else 0,
/// with a unit prior ratio.
pub fn local_linkability(likelihood_ratio: Option<f64>) -> f64 {
    match likelihood_ratio {
        None => 1.0,
        Some(lr) if lr > 1.0 => 2.0 * lr / (1.0 + lr) - 1.0,
        Some(_) => 0.0,
    }
}

pub fn compute_linkability(mated: &[f64], non_mated: &[f64]) -> Result<LinkabilityReport> {
    if mated.is_empty() || non_mated.is_empty() {
        return Err(Error::input("linkability needs mated and non-mated scores"));
    }
    if mated.iter().chain(non_mated).any(|s| !s.is_finite()) {
        return Err(Error::input("linkability scores must be finite"));
    }
    let hm = histogram(mated);
    let hn = histogram(non_mated);
    let (nm, nn) = (mated.len() as f64, non_mated.len() as f64);

    let mut values: Vec<f64> = hm.iter().chain(&hn).map(|(v, _)| *v).collect();
    values.sort_by(f64::total_cmp);
    values.dedup_by(|a, b| a.total_cmp(b).is_eq());

    let lookup = |h: &[(f64, usize)], v: f64| {
        h.binary_search_by(|(x, _)| x.total_cmp(&v))
            .map(|i| h[i].1)
            .unwrap_or(0)
    };

    let mut d_sys = 0.0;
    let mut m_sys: f64 = 0.0;
    let bins = values
        .into_iter()
        .map(|score| {
            let p_mated = lookup(&hm, score) as f64 / nm;
            let p_non_mated = lookup(&hn, score) as f64 / nn;
            let likelihood_ratio = (p_non_mated > 0.0).then(|| p_mated / p_non_mated);
            let d = if p_mated > 0.0 {
                local_linkability(likelihood_ratio)
            } else {
                0.0
            };
            d_sys += d * p_mated;
            if p_mated > 0.0 {
                m_sys = m_sys.max(d);
            }
            LocalLinkability {
                score,
                p_mated,
                p_non_mated,
                likelihood_ratio,
                d,
            }
        })
        .collect();

    Ok(LinkabilityReport {
        d_sys: d_sys.clamp(0.0, 1.0),
        m_sys,
        mated_count: mated.len(),
        non_mated_count: non_mated.len(),
        bins,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinkabilityScores {
    pub mated: Vec<f64>,
    pub non_mated: Vec<f64>,
}

/// Mated and non-mated Hamming similarities between two cloak lists aligned by
/// subject: `system_a[i]` and `system_b[i]` belong to the same subject.
pub fn linkability_scores_from_cloaks(
    system_a: &[BinaryCloak],
    system_b: &[BinaryCloak],
) -> Result<LinkabilityScores> {
    if system_a.len() < 2 || system_a.len() != system_b.len() {
        return Err(Error::input(
            "linkability needs the same >= 2 subjects enrolled in both systems",
        ));
    }
    let mut mated = Vec::with_capacity(system_a.len());
    let mut non_mated = Vec::with_capacity(system_a.len() * (system_a.len() - 1));
    for (i, ca) in system_a.iter().enumerate() {
        for (j, cb) in system_b.iter().enumerate() {
            let s = hamming_similarity(ca, cb)?;
            if i == j {
                mated.push(s);
            } else {
                non_mated.push(s);
            }
        }
    }
    Ok(LinkabilityScores { mated, non_mated })
}

/// Same as [`linkability_scores_from_cloaks`], matching records by subject id.
pub fn linkability_scores_from_records(
    system_a: &[EnrollmentRecord],
    system_b: &[EnrollmentRecord],
) -> Result<LinkabilityScores> {
    let mut a: Vec<&EnrollmentRecord> = system_a.iter().collect();
    let mut b: Vec<&EnrollmentRecord> = system_b.iter().collect();
    a.sort_by(|x, y| x.subject_id.cmp(&y.subject_id));
    b.sort_by(|x, y| x.subject_id.cmp(&y.subject_id));
    if a.len() != b.len() || a.iter().zip(&b).any(|(x, y)| x.subject_id != y.subject_id) {
        return Err(Error::input("systems enroll different subject sets"));
    }
    let cloaks = |rs: &[&EnrollmentRecord]| rs.iter().map(|r| r.cloak.clone()).collect::<Vec<_>>();
    linkability_scores_from_cloaks(&cloaks(&a), &cloaks(&b))
}

/// Cloaks of one subject list enrolled under two seeds, in input order.
#[derive(Clone, Debug, PartialEq)]
pub struct DualEnrollment {
    pub scores: LinkabilityScores,
    pub system_a: Vec<BinaryCloak>,
    pub system_b: Vec<BinaryCloak>,
}

fn enroll_cloaks(
    subjects: &[Template],
    stats: &DistributionStats,
    disruptor_config: &DisruptorConfig,
    train_config: &TrainConfig,
    seed: u64,
) -> Result<Vec<BinaryCloak>> {
    use rayon::prelude::*;
    subjects
        .par_iter()
        .map(|t| {
            let stream = RngStream::new(seed, t.subject_id.clone());
            enroll(t, stats, disruptor_config, train_config, &stream).map(|r| r.cloak)
        })
        .collect()
}

/// Enrolls every subject's anchor under both seeds and scores the two
/// systems. Only the cloaks are kept; the networks are dropped.
pub fn linkability_scores(
    subjects: &[Template],
    seeds: (u64, u64),
    stats: &DistributionStats,
    disruptor_config: &DisruptorConfig,
    train_config: &TrainConfig,
) -> Result<DualEnrollment> {
    if subjects.len() < 2 {
        return Err(Error::input("linkability needs at least two subjects"));
    }
    let system_a = enroll_cloaks(subjects, stats, disruptor_config, train_config, seeds.0)?;
    let system_b = enroll_cloaks(subjects, stats, disruptor_config, train_config, seeds.1)?;
    let scores = linkability_scores_from_cloaks(&system_a, &system_b)?;
    Ok(DualEnrollment {
        scores,
        system_a,
        system_b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_distributions_are_unlinkable() {
        let s = [0.25, 0.5, 0.5, 0.75];
        let r = compute_linkability(&s, &s).unwrap();
        assert_eq!(r.d_sys, 0.0);
        assert_eq!(r.m_sys, 0.0);
    }

    #[test]
    fn disjoint_supports_are_fully_linkable() {
        let r = compute_linkability(&[0.9, 1.0], &[0.1, 0.2, 0.3]).unwrap();
        assert_eq!(r.d_sys, 1.0);
        assert_eq!(r.m_sys, 1.0);
    }

    #[test]
    fn hand_example_lr_two() {
        let r = compute_linkability(&[0.5, 0.5], &[0.5, 0.0]).unwrap();
        let bin = r.bins.iter().find(|b| b.score == 0.5).unwrap();
        assert_eq!(bin.likelihood_ratio, Some(2.0));
        assert!((bin.d - 1.0 / 3.0).abs() < 1e-15);
        assert!((r.d_sys - 1.0 / 3.0).abs() < 1e-15);
        assert!((r.m_sys - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn empty_inputs_rejected() {
        assert!(compute_linkability(&[], &[0.5]).is_err());
        assert!(compute_linkability(&[0.5], &[]).is_err());
    }

    #[test]
    fn cross_pair_counting() {
        let c = |b: [i8; 2]| BinaryCloak::from_bits(b.to_vec()).unwrap();
        let a = [c([1, 1]), c([1, -1]), c([-1, -1])];
        let s = linkability_scores_from_cloaks(&a, &a).unwrap();
        assert_eq!(s.mated, [1.0, 1.0, 1.0]);
        assert_eq!(s.non_mated.len(), 6);
        assert!(linkability_scores_from_cloaks(&a[..1], &a[..1]).is_err());
    }

    #[test]
    fn local_linkability_values() {
        assert_eq!(local_linkability(None), 1.0);
        assert_eq!(local_linkability(Some(1.0)), 0.0);
        assert_eq!(local_linkability(Some(0.2)), 0.0);
        assert!((local_linkability(Some(3.0)) - 0.5).abs() < 1e-15);
    }
}
