//! Orthogonal projection loss over a labelled batch of unit-norm features:
//! `(1 - mean same-class cosine) + |mean cross-class cosine|`, with both
//! means taken over ordered pairs `i != j`.

use crate::error::{Error, Result};
use crate::types::{dot, norm, Template};

const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledBatch {
    features: Vec<Vec<f64>>,
    labels: Vec<String>,
}

impl LabeledBatch {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<String>) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::input("one label per feature is required"));
        }
        if features.len() < 2 {
            return Err(Error::input("OPL needs a batch of at least two features"));
        }
        let dim = features[0].len();
        for (i, f) in features.iter().enumerate() {
            Error::check_dim(dim, f.len())?;
            let n = norm(f);
            if !((n - 1.0).abs() <= NORM_TOLERANCE) {
                return Err(Error::input(format!(
                    "feature {i} has norm {n}, expected 1 within {NORM_TOLERANCE}"
                )));
            }
        }
        Ok(Self { features, labels })
    }

    /// Uses `subject_id` as the class label.
    pub fn from_templates(templates: &[Template]) -> Result<Self> {
        Self::new(
            templates.iter().map(|t| t.values.clone()).collect(),
            templates.iter().map(|t| t.subject_id.clone()).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

/// An empty pair set contributes zero to its term.
pub fn opl_loss(batch: &LabeledBatch) -> f64 {
    let (mut same_sum, mut same_count) = (0.0, 0usize);
    let (mut diff_sum, mut diff_count) = (0.0, 0usize);
    for (i, fi) in batch.features.iter().enumerate() {
        for (j, fj) in batch.features.iter().enumerate() {
            if i == j {
                continue;
            }
            let c = dot(fi, fj);
            if batch.labels[i] == batch.labels[j] {
                same_sum += c;
                same_count += 1;
            } else {
                diff_sum += c;
                diff_count += 1;
            }
        }
    }
    let same = if same_count > 0 {
        1.0 - same_sum / same_count as f64
    } else {
        0.0
    };
    let cross = if diff_count > 0 {
        (diff_sum / diff_count as f64).abs()
    } else {
        0.0
    };
    same + cross
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(features: &[[f64; 2]], labels: &[&str]) -> LabeledBatch {
        LabeledBatch::new(
            features.iter().map(|f| f.to_vec()).collect(),
            labels.iter().map(|l| l.to_string()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn identical_same_class_is_zero() {
        assert_eq!(opl_loss(&batch(&[[1.0, 0.0], [1.0, 0.0]], &["a", "a"])), 0.0);
    }

    #[test]
    fn orthogonal_cross_class_is_zero() {
        assert_eq!(opl_loss(&batch(&[[1.0, 0.0], [0.0, 1.0]], &["a", "b"])), 0.0);
    }

    #[test]
    fn three_feature_examples() {
        let b = batch(&[[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]], &["a", "a", "b"]);
        assert_eq!(opl_loss(&b), 0.0);
        let b = batch(&[[1.0, 0.0], [1.0, 0.0], [1.0, 0.0]], &["a", "a", "b"]);
        assert_eq!(opl_loss(&b), 1.0);
    }

    #[test]
    fn rejects_bad_batches() {
        assert!(LabeledBatch::new(vec![vec![1.0, 0.0]], vec!["a".into()]).is_err());
        assert!(LabeledBatch::new(vec![vec![1.0, 0.0], vec![0.5, 0.0]], vec!["a".into(), "b".into()]).is_err());
        assert!(LabeledBatch::new(vec![vec![1.0, 0.0], vec![1.0, 0.0]], vec!["a".into()]).is_err());
    }
}
