//! Fourier trig transform + PCA nearest-neighbour classifier.
//!
//! Training: transform every image, keep the lowest `f × f` frequencies,
//! stack the flattened blocks into a matrix and take its `n` largest
//! singular triplets. The training points `X V` (= `U Σ`) go into a kD
//! tree; `V` projects query images into the same space.
//!
//! Prediction: the `m` nearest training points vote with weight
//! `1 / distance`, and the weights are rescaled to sum to one.

use serde::{Deserialize, Serialize};

use super::kdtree::KdTree;
use super::svd::truncated_svd;
use super::transform::{Basis, TransformKind};
use super::{LabeledImage, ScoreVector};
use crate::cgr::GrayImage;
use crate::error::{Error, Result};

/// Distances below this are treated as this, so an exact duplicate takes
/// (essentially) all of the weight.
pub const DISTANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FttPcaParams {
    pub kind: TransformKind,
    /// Side of the retained low-frequency block; clamped to the image side.
    pub freq_side: usize,
    pub n_components: usize,
    pub neighbors: usize,
}

impl Default for FttPcaParams {
    fn default() -> Self {
        FttPcaParams {
            kind: TransformKind::Cosine,
            freq_side: 100,
            n_components: 28,
            neighbors: 12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub index: usize,
    pub doc_id: String,
    pub chunk_index: usize,
    pub label: String,
    pub distance: f64,
}

#[derive(Debug, Clone)]
pub struct FttPcaModel {
    pub class_ids: Vec<String>,
    pub image_side: usize,
    /// `freq_side` here is the effective (clamped) value.
    pub params: FttPcaParams,
    /// `f² × n` row-major; columns are right singular vectors.
    pub right_singular: Vec<f64>,
    pub singular_values: Vec<f64>,
    /// Indexed training points, `len × n` row-major.
    pub points: Vec<f64>,
    pub point_labels: Vec<usize>,
    pub point_ids: Vec<(String, usize)>,
    basis: Basis,
    tree: KdTree,
}

fn low_frequencies(basis: &Basis, img: &GrayImage) -> Result<Vec<f64>> {
    if img.side() != basis.size() {
        return Err(Error::DimensionMismatch {
            expected: basis.size(),
            actual: img.side(),
        });
    }
    Ok(basis.forward_low(img.pixels()))
}

fn project(low: &[f64], v: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for (k, &x) in low.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (o, &vk) in out.iter_mut().zip(&v[k * n..(k + 1) * n]) {
            *o += x * vk;
        }
    }
    out
}

pub fn train_ftt_pca(
    data: &[LabeledImage],
    class_ids: &[String],
    params: FttPcaParams,
) -> Result<FttPcaModel> {
    if data.len() < 2 {
        return Err(Error::Data(format!(
            "ftt-pca needs at least 2 training images, got {}",
            data.len()
        )));
    }
    if class_ids.is_empty() {
        return Err(Error::Data("no class labels".into()));
    }
    let side = data[0].image.side();
    let f = params.freq_side.min(side);
    if f == 0 {
        return Err(Error::Config("frequency block side must be at least 1".into()));
    }
    let n = params.n_components;
    let width = f * f;
    if n == 0 || n > width.min(data.len()) {
        return Err(Error::Config(format!(
            "n_components={n} must be in 1..={} (min of {width} frequencies and {} images)",
            width.min(data.len()),
            data.len()
        )));
    }
    if params.neighbors == 0 {
        return Err(Error::Config("neighbors must be at least 1".into()));
    }
    let basis = Basis::new(params.kind, side, f);
    let mut matrix = Vec::with_capacity(data.len() * width);
    for item in data {
        if item.label >= class_ids.len() {
            return Err(Error::Data(format!("label index {} out of range", item.label)));
        }
        matrix.extend(low_frequencies(&basis, &item.image)?);
    }
    let svd = truncated_svd(&matrix, data.len(), width, n)?;
    let points: Vec<f64> = matrix
        .chunks(width)
        .flat_map(|row| project(row, &svd.v, n))
        .collect();
    let tree = KdTree::build(points.clone(), n);
    Ok(FttPcaModel {
        class_ids: class_ids.to_vec(),
        image_side: side,
        params: FttPcaParams { freq_side: f, ..params },
        right_singular: svd.v,
        singular_values: svd.s,
        points,
        point_labels: data.iter().map(|d| d.label).collect(),
        point_ids: data.iter().map(|d| (d.doc_id.clone(), d.chunk_index)).collect(),
        basis,
        tree,
    })
}

/// Per-class scores from `(label, distance)` neighbours using rescaled
/// inverse-distance weights.
pub fn inverse_distance_scores(neighbors: &[(usize, f64)], num_classes: usize) -> Vec<f64> {
    let mut scores = vec![0.0; num_classes];
    let weights: Vec<f64> = neighbors
        .iter()
        .map(|&(_, d)| 1.0 / d.max(DISTANCE_FLOOR))
        .collect();
    let total: f64 = weights.iter().sum();
    for (&(label, _), w) in neighbors.iter().zip(weights) {
        scores[label] += w / total;
    }
    scores
}

impl FttPcaModel {
    /// Reassembles a model from stored arrays, rebuilding the search index.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        class_ids: Vec<String>,
        image_side: usize,
        params: FttPcaParams,
        right_singular: Vec<f64>,
        singular_values: Vec<f64>,
        points: Vec<f64>,
        point_labels: Vec<usize>,
        point_ids: Vec<(String, usize)>,
    ) -> Result<Self> {
        let n = params.n_components;
        let f = params.freq_side;
        if f == 0 || f > image_side || n == 0 {
            return Err(Error::Model("inconsistent ftt-pca parameters".into()));
        }
        if right_singular.len() != f * f * n
            || points.len() != point_labels.len() * n
            || point_ids.len() != point_labels.len()
            || singular_values.len() != n
        {
            return Err(Error::Model("ftt-pca array shapes do not agree".into()));
        }
        if point_labels.iter().any(|&l| l >= class_ids.len()) {
            return Err(Error::Model("ftt-pca point label out of range".into()));
        }
        let tree = KdTree::build(points.clone(), n);
        Ok(FttPcaModel {
            class_ids,
            image_side,
            params,
            right_singular,
            singular_values,
            points,
            point_labels,
            point_ids,
            basis: Basis::new(params.kind, image_side, f),
            tree,
        })
    }

    pub fn len(&self) -> usize {
        self.point_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.point_labels.is_empty()
    }

    /// The projected `n`-dimensional vector of an image.
    pub fn signature(&self, img: &GrayImage) -> Result<Vec<f64>> {
        let low = low_frequencies(&self.basis, img)?;
        Ok(project(&low, &self.right_singular, self.params.n_components))
    }

    pub fn point(&self, index: usize) -> &[f64] {
        self.tree.point(index)
    }

    /// Scores from the `neighbors` nearest training points (fewer if the
    /// index is smaller).
    pub fn predict(&self, img: &GrayImage) -> Result<ScoreVector> {
        let q = self.signature(img)?;
        self.predict_point(&q)
    }

    pub fn predict_point(&self, q: &[f64]) -> Result<ScoreVector> {
        self.check_point(q)?;
        let m = self.params.neighbors.min(self.len());
        let found: Vec<(usize, f64)> = self
            .tree
            .nearest(q, m)
            .into_iter()
            .map(|(i, d)| (self.point_labels[i], d))
            .collect();
        ScoreVector::new(
            self.class_ids.clone(),
            inverse_distance_scores(&found, self.class_ids.len()),
        )
    }

    fn check_point(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.params.n_components {
            return Err(Error::DimensionMismatch {
                expected: self.params.n_components,
                actual: q.len(),
            });
        }
        Ok(())
    }

    /// The `m` nearest indexed chunks, skipping the one identified by
    /// `exclude`, ascending by distance.
    pub fn nearest_chunks(
        &self,
        q: &[f64],
        m: usize,
        exclude: Option<(&str, usize)>,
    ) -> Result<Vec<Neighbor>> {
        self.check_point(q)?;
        if m >= self.len() {
            return Err(Error::Config(format!(
                "asked for {m} neighbours from an index of {} points",
                self.len()
            )));
        }
        let keep = |i: usize| match exclude {
            Some((doc, chunk)) => {
                let (d, c) = &self.point_ids[i];
                !(d == doc && *c == chunk)
            }
            None => true,
        };
        Ok(self
            .tree
            .nearest_filtered(q, m, keep)
            .into_iter()
            .map(|(i, distance)| Neighbor {
                index: i,
                doc_id: self.point_ids[i].0.clone(),
                chunk_index: self.point_ids[i].1,
                label: self.class_ids[self.point_labels[i]].clone(),
                distance,
            })
            .collect())
    }
}
