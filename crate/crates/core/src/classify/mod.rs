//! Per-image classifiers.
//!
//! All three produce a [`ScoreVector`] that is nonnegative and sums to one,
//! so per-chunk scores can be summed into document attributions.

pub mod ftt_pca;
pub mod kdtree;
pub mod lr;
mod optim;
mod eigen;
pub mod svd;
pub mod svm;
pub mod transform;

use serde::{Deserialize, Serialize};

use crate::cgr::GrayImage;
use crate::error::{Error, Result};

pub use ftt_pca::{FttPcaModel, FttPcaParams, Neighbor};
pub use lr::{LrModel, LrParams};
pub use svm::{SvmModel, SvmParams};
pub use transform::TransformKind;

/// A rendered chunk with its class and provenance.
#[derive(Debug, Clone)]
pub struct LabeledImage {
    pub image: GrayImage,
    /// Index into the model's class list.
    pub label: usize,
    pub doc_id: String,
    pub chunk_index: usize,
}

impl LabeledImage {
    pub fn features(&self) -> &[f64] {
        self.image.pixels()
    }
}

/// Per-class scores, aligned with `class_ids`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub class_ids: Vec<String>,
    pub scores: Vec<f64>,
}

impl ScoreVector {
    pub fn new(class_ids: Vec<String>, scores: Vec<f64>) -> Result<Self> {
        if class_ids.len() != scores.len() {
            return Err(Error::DimensionMismatch {
                expected: class_ids.len(),
                actual: scores.len(),
            });
        }
        Ok(ScoreVector { class_ids, scores })
    }

    /// Index of the largest score; the lowest index wins ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &s) in self.scores.iter().enumerate() {
            if s > self.scores[best] {
                best = i;
            }
        }
        best
    }

    pub fn best_label(&self) -> &str {
        &self.class_ids[self.argmax()]
    }

    pub fn score_of(&self, label: &str) -> Option<f64> {
        self.class_ids
            .iter()
            .position(|c| c == label)
            .map(|i| self.scores[i])
    }
}

/// The ordered list of class labels a model was trained with.
pub fn class_list<'a>(labels: impl IntoIterator<Item = &'a str>) -> Vec<String> {
    let mut v: Vec<String> = labels.into_iter().map(str::to_string).collect();
    v.sort();
    v.dedup();
    v
}

pub(crate) fn check_training_set(data: &[LabeledImage], num_classes: usize) -> Result<usize> {
    let first = data
        .first()
        .ok_or_else(|| Error::Data("empty training set".into()))?;
    if num_classes < 2 {
        return Err(Error::Data(format!(
            "need at least 2 classes, got {num_classes}"
        )));
    }
    let dim = first.features().len();
    let mut present = vec![false; num_classes];
    for item in data {
        if item.features().len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: item.features().len(),
            });
        }
        if item.label >= num_classes {
            return Err(Error::Data(format!("label index {} out of range", item.label)));
        }
        present[item.label] = true;
    }
    let distinct = present.iter().filter(|&&p| p).count();
    if distinct < 2 {
        return Err(Error::Data(
            "training data contains a single class".into(),
        ));
    }
    Ok(dim)
}

/// Numerically stable softmax, in place.
pub(crate) fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Which classifier a model holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassifierKind {
    Lr,
    Svm,
    FttPca,
}

impl std::str::FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lr" => Ok(ClassifierKind::Lr),
            "svm" => Ok(ClassifierKind::Svm),
            "ftt-pca" | "ftt+pca" | "fttpca" | "ftt" => Ok(ClassifierKind::FttPca),
            _ => Err(Error::Config(format!(
                "unknown classifier {s:?} (expected lr, svm or ftt-pca)"
            ))),
        }
    }
}

impl std::fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ClassifierKind::Lr => "lr",
            ClassifierKind::Svm => "svm",
            ClassifierKind::FttPca => "ftt-pca",
        })
    }
}

/// Any trained per-image classifier.
#[derive(Debug, Clone)]
pub enum TrainedModel {
    Lr(LrModel),
    Svm(SvmModel),
    FttPca(FttPcaModel),
}

impl TrainedModel {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            TrainedModel::Lr(_) => ClassifierKind::Lr,
            TrainedModel::Svm(_) => ClassifierKind::Svm,
            TrainedModel::FttPca(_) => ClassifierKind::FttPca,
        }
    }

    pub fn class_ids(&self) -> &[String] {
        match self {
            TrainedModel::Lr(m) => &m.class_ids,
            TrainedModel::Svm(m) => &m.class_ids,
            TrainedModel::FttPca(m) => &m.class_ids,
        }
    }

    pub fn predict(&self, image: &GrayImage) -> Result<ScoreVector> {
        match self {
            TrainedModel::Lr(m) => m.predict(image.pixels()),
            TrainedModel::Svm(m) => m.predict(image.pixels()),
            TrainedModel::FttPca(m) => m.predict(image),
        }
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_prefers_lowest_on_ties() {
        let s = ScoreVector::new(vec!["a".into(), "b".into()], vec![0.5, 0.5]).unwrap();
        assert_eq!(s.argmax(), 0);
    }

    #[test]
    fn class_list_sorted_unique() {
        assert_eq!(class_list(["b", "a", "b"]), vec!["a", "b"]);
    }

    #[test]
    fn kinds_parse() {
        assert_eq!("FTT+PCA".parse::<ClassifierKind>().unwrap(), ClassifierKind::FttPca);
        assert!("nn".parse::<ClassifierKind>().is_err());
    }
}
