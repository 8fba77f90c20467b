//! Hamming-distance verification and TMR at a fixed FMR.
//!
//! Every score lives in `[0, 1]` and a comparison is accepted iff
//! `score >= threshold`. Cosine similarities are mapped with `(s + 1) / 2`
//! so protected and unprotected systems share one calibration routine.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloaknet::{infer_cloaks, EnrollmentRecord};
use crate::dataset::group_by_subject;
use crate::error::{Error, Result};
use crate::types::{cosine, BinaryCloak, Template};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreKind {
    HammingSimilarity,
    Cosine,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    pub genuine: Vec<f64>,
    pub imposter: Vec<f64>,
    pub kind: ScoreKind,
}

pub fn hamming_distance(a: &BinaryCloak, b: &BinaryCloak) -> Result<usize> {
    Error::check_dim(a.len(), b.len())?;
    Ok(a.bits().iter().zip(b.bits()).filter(|(x, y)| x != y).count())
}

/// `1 - HD / d`.
pub fn hamming_similarity(a: &BinaryCloak, b: &BinaryCloak) -> Result<f64> {
    Ok(1.0 - hamming_distance(a, b)? as f64 / a.len() as f64)
}

pub fn cosine_to_unit(s: f64) -> f64 {
    (s + 1.0) / 2.0
}

pub fn unit_to_cosine(u: f64) -> f64 {
    2.0 * u - 1.0
}

fn fraction_at_or_above(sorted_desc: &[f64], threshold: f64) -> f64 {
    let count = sorted_desc.partition_point(|&s| s >= threshold);
    count as f64 / sorted_desc.len() as f64
}

fn check_fmr(target_fmr: f64) -> Result<()> {
    if (0.0..=1.0).contains(&target_fmr) {
        Ok(())
    } else {
        Err(Error::input(format!("target FMR {target_fmr} is outside [0, 1]")))
    }
}

/// Smallest threshold, among the observed imposter scores and one step above
/// their maximum, whose false match rate does not exceed `target_fmr`.
pub fn calibrate_threshold(imposter: &[f64], target_fmr: f64) -> Result<f64> {
    check_fmr(target_fmr)?;
    if imposter.is_empty() {
        return Err(Error::input("cannot calibrate on an empty imposter set"));
    }
    if imposter.iter().any(|s| !s.is_finite()) {
        return Err(Error::input("imposter scores must be finite"));
    }
    let mut desc = imposter.to_vec();
    desc.sort_by(|a, b| b.total_cmp(a));
    let mut candidates = desc.clone();
    candidates.dedup();
    // FMR is non-increasing in the threshold: the first ascending candidate
    // that meets the target is the smallest one.
    let above_max = desc[0].next_up();
    Ok(candidates
        .iter()
        .rev()
        .copied()
        .find(|&c| fraction_at_or_above(&desc, c) <= target_fmr)
        .unwrap_or(above_max))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub tmr: f64,
    pub achieved_fmr: f64,
    pub threshold: f64,
    pub target_fmr: f64,
    pub genuine_count: usize,
    pub imposter_count: usize,
}

pub fn evaluate_tmr(scores: &ScoreSet, target_fmr: f64) -> Result<Evaluation> {
    if scores.genuine.is_empty() || scores.imposter.is_empty() {
        return Err(Error::input("TMR needs genuine and imposter scores"));
    }
    let threshold = calibrate_threshold(&scores.imposter, target_fmr)?;
    let rate = |v: &[f64]| v.iter().filter(|&&s| s >= threshold).count() as f64 / v.len() as f64;
    Ok(Evaluation {
        tmr: rate(&scores.genuine),
        achieved_fmr: rate(&scores.imposter),
        threshold,
        target_fmr,
        genuine_count: scores.genuine.len(),
        imposter_count: scores.imposter.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairKind {
    Genuine,
    Imposter,
}

/// One comparison of a probe against an enrollment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub kind: PairKind,
    pub subject_a: String,
    pub subject_b: String,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolScores {
    pub scores: ScoreSet,
    pub pairs: Vec<ScoredPair>,
    /// Probes whose subject has no enrollment; they only serve as imposters.
    pub unenrolled_probes: usize,
}

/// Lines `kind,subject_a,subject_b,score`.
pub fn export_scores(pairs: &[ScoredPair]) -> String {
    let mut out = String::new();
    for p in pairs {
        let kind = match p.kind {
            PairKind::Genuine => "genuine",
            PairKind::Imposter => "imposter",
        };
        out.push_str(&format!("{kind},{},{},{}\n", p.subject_a, p.subject_b, p.score));
    }
    out
}

fn collect(pairs: Vec<ScoredPair>, kind: ScoreKind, unenrolled_probes: usize) -> ProtocolScores {
    let pick = |k: PairKind| pairs.iter().filter(|p| p.kind == k).map(|p| p.score).collect();
    ProtocolScores {
        scores: ScoreSet {
            genuine: pick(PairKind::Genuine),
            imposter: pick(PairKind::Imposter),
            kind,
        },
        pairs,
        unenrolled_probes,
    }
}

/// Scores every probe against every enrollment through that enrollment's
/// network. The enrollment anchor sample itself is not used as a genuine probe.
pub fn protocol_scores(
    enrollments: &[EnrollmentRecord],
    probes: &[Template],
) -> Result<ProtocolScores> {
    let mut records: Vec<&EnrollmentRecord> = enrollments.iter().collect();
    records.sort_by(|a, b| a.subject_id.cmp(&b.subject_id));
    let distinct = {
        let mut ids: Vec<&str> = records.iter().map(|r| r.subject_id.as_str()).collect();
        ids.dedup();
        ids.len()
    };
    if distinct < 2 {
        return Err(Error::input("protocol scoring needs at least two enrolled subjects"));
    }
    let mut probes: Vec<&Template> = probes.iter().collect();
    probes.sort_by(|a, b| (&a.subject_id, &a.sample_id).cmp(&(&b.subject_id, &b.sample_id)));
    for p in &probes {
        Error::check_dim(records[0].input_dim(), p.dim())?;
    }
    let unenrolled_probes = probes
        .iter()
        .filter(|p| records.binary_search_by(|r| r.subject_id.as_str().cmp(&p.subject_id)).is_err())
        .count();

    let per_record: Vec<Vec<ScoredPair>> = records
        .par_iter()
        .map(|record| {
            let used: Vec<&Template> = probes
                .iter()
                .copied()
                .filter(|p| {
                    !(p.subject_id == record.subject_id && p.sample_id == record.anchor_sample_id)
                })
                .collect();
            let queries: Vec<&[f64]> = used.iter().map(|p| p.values.as_slice()).collect();
            let cloaks = infer_cloaks(&record.network, &queries)?;
            used.iter()
                .zip(&cloaks)
                .map(|(p, c)| {
                    Ok(ScoredPair {
                        kind: if p.subject_id == record.subject_id {
                            PairKind::Genuine
                        } else {
                            PairKind::Imposter
                        },
                        subject_a: record.subject_id.clone(),
                        subject_b: p.subject_id.clone(),
                        score: hamming_similarity(&record.cloak, c)?,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    Ok(collect(
        per_record.into_iter().flatten().collect(),
        ScoreKind::HammingSimilarity,
        unenrolled_probes,
    ))
}

/// Unprotected matching: cosine similarity over all unordered template
/// pairs, mapped to `[0, 1]`.
pub fn cosine_scores(templates: &[Template]) -> Result<ProtocolScores> {
    let groups = group_by_subject(templates);
    if groups.len() < 2 {
        return Err(Error::input("cosine scoring needs at least two subjects"));
    }
    let ordered: Vec<&Template> = groups.into_values().flatten().collect();
    for t in &ordered {
        Error::check_dim(ordered[0].dim(), t.dim())?;
    }
    let pairs = (0..ordered.len())
        .into_par_iter()
        .map(|i| {
            let a = ordered[i];
            ordered[i + 1..]
                .iter()
                .map(|b| ScoredPair {
                    kind: if a.subject_id == b.subject_id {
                        PairKind::Genuine
                    } else {
                        PairKind::Imposter
                    },
                    subject_a: a.subject_id.clone(),
                    subject_b: b.subject_id.clone(),
                    score: cosine_to_unit(cosine(&a.values, &b.values)),
                })
                .collect::<Vec<_>>()
        })
        .flatten()
        .collect();
    Ok(collect(pairs, ScoreKind::Cosine, 0))
}

/// Unprotected counterpart of [`protocol_scores`]: each enrolled template is
/// compared by cosine against every probe except itself, so both systems are
/// scored on the same pairs.
pub fn cosine_protocol_scores(
    enrolled: &[Template],
    probes: &[Template],
) -> Result<ProtocolScores> {
    let mut gallery: Vec<&Template> = enrolled.iter().collect();
    gallery.sort_by(|a, b| a.subject_id.cmp(&b.subject_id));
    let mut ids: Vec<&str> = gallery.iter().map(|t| t.subject_id.as_str()).collect();
    ids.dedup();
    if ids.len() < 2 {
        return Err(Error::input("protocol scoring needs at least two enrolled subjects"));
    }
    let mut probes: Vec<&Template> = probes.iter().collect();
    probes.sort_by(|a, b| (&a.subject_id, &a.sample_id).cmp(&(&b.subject_id, &b.sample_id)));
    for t in gallery.iter().chain(&probes) {
        Error::check_dim(gallery[0].dim(), t.dim())?;
    }
    let unenrolled_probes = probes
        .iter()
        .filter(|p| ids.binary_search(&p.subject_id.as_str()).is_err())
        .count();
    let pairs = gallery
        .par_iter()
        .map(|g| {
            probes
                .iter()
                .filter(|p| !(p.subject_id == g.subject_id && p.sample_id == g.sample_id))
                .map(|p| ScoredPair {
                    kind: if p.subject_id == g.subject_id {
                        PairKind::Genuine
                    } else {
                        PairKind::Imposter
                    },
                    subject_a: g.subject_id.clone(),
                    subject_b: p.subject_id.clone(),
                    score: cosine_to_unit(cosine(&g.values, &p.values)),
                })
                .collect::<Vec<_>>()
        })
        .flatten()
        .collect();
    Ok(collect(pairs, ScoreKind::Cosine, unenrolled_probes))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloak(s: &str) -> BinaryCloak {
        s.parse().unwrap()
    }

    #[test]
    fn hamming_examples() {
        let a = cloak("++--");
        assert_eq!(hamming_distance(&a, &a).unwrap(), 0);
        assert_eq!(hamming_distance(&a, &a.negated()).unwrap(), 4);
        assert_eq!(hamming_distance(&a, &cloak("+--+")).unwrap(), 2);
        assert_eq!(hamming_similarity(&a, &cloak("+--+")).unwrap(), 0.5);
        assert!(matches!(
            hamming_distance(&a, &cloak("+-")),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn threshold_enumeration_example() {
        let t = calibrate_threshold(&[0.1, 0.2, 0.3, 0.4], 0.5).unwrap();
        assert_eq!(t, 0.3);
    }

    #[test]
    fn threshold_extremes() {
        let imp = [0.4, 0.1, 0.3, 0.2];
        assert_eq!(calibrate_threshold(&imp, 1.0).unwrap(), 0.1);
        let t = calibrate_threshold(&imp, 0.0).unwrap();
        assert!(t > 0.4);
        let eval = evaluate_tmr(
            &ScoreSet {
                genuine: vec![0.4, 0.5],
                imposter: imp.to_vec(),
                kind: ScoreKind::HammingSimilarity,
            },
            0.0,
        )
        .unwrap();
        assert_eq!(eval.achieved_fmr, 0.0);
        assert_eq!(eval.tmr, 0.5);
    }

    #[test]
    fn threshold_errors() {
        assert!(calibrate_threshold(&[], 0.1).is_err());
        assert!(calibrate_threshold(&[0.5], 1.5).is_err());
        assert!(calibrate_threshold(&[f64::NAN], 0.1).is_err());
    }

    #[test]
    fn perfect_separation() {
        let scores = ScoreSet {
            genuine: vec![1.0; 10],
            imposter: vec![0.0; 50],
            kind: ScoreKind::HammingSimilarity,
        };
        for fmr in [0.0, 0.001, 0.5, 1.0] {
            assert_eq!(evaluate_tmr(&scores, fmr).unwrap().tmr, 1.0);
        }
    }

    #[test]
    fn exchangeable_scores_give_tmr_near_target() {
        let vals: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 1000) as f64 / 1000.0).collect();
        let scores = ScoreSet {
            genuine: vals.clone(),
            imposter: vals,
            kind: ScoreKind::Cosine,
        };
        let e = evaluate_tmr(&scores, 0.1).unwrap();
        assert!((e.tmr - 0.1).abs() < 1e-12);
        assert!(e.achieved_fmr <= 0.1);
    }

    #[test]
    fn export_format() {
        let pairs = vec![ScoredPair {
            kind: PairKind::Imposter,
            subject_a: "a".into(),
            subject_b: "b".into(),
            score: 0.25,
        }];
        assert_eq!(export_scores(&pairs), "imposter,a,b,0.25\n");
    }

    #[test]
    fn cosine_mapping_round_trips() {
        assert_eq!(cosine_to_unit(-1.0), 0.0);
        assert_eq!(cosine_to_unit(1.0), 1.0);
        assert!((unit_to_cosine(cosine_to_unit(0.37)) - 0.37).abs() < 1e-15);
    }
}
