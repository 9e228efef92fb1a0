//! Multinomial logistic regression on flattened FCGR intensities.
//!
//! Minimizes `Σᵢ −log softmax(W xᵢ + b)_{yᵢ} + (λ/2)‖W‖²` (bias not
//! penalized) with L-BFGS starting from zero weights.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::optim::{self, LbfgsParams};
use super::{check_training_set, softmax_in_place, LabeledImage, ScoreVector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LrParams {
    pub l2: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LrParams {
    fn default() -> Self {
        LrParams {
            l2: 1.0,
            tol: 1e-6,
            max_iter: 500,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub iterations: usize,
    pub converged: bool,
    pub loss_history: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LrModel {
    pub class_ids: Vec<String>,
    pub dim: usize,
    /// `num_classes × (dim + 1)` row-major; the last column is the bias.
    pub weights: Vec<f64>,
    pub params: LrParams,
    pub report: TrainReport,
}

/// Samples per partial-gradient block. Blocks are summed in order, so the
/// result does not depend on the thread count.
const BLOCK: usize = 32;

/// Objective value and gradient for `weights` laid out as in [`LrModel`].
pub fn loss_and_gradient(
    weights: &[f64],
    data: &[LabeledImage],
    num_classes: usize,
    l2: f64,
) -> (f64, Vec<f64>) {
    let dim = data.first().map_or(0, |d| d.features().len());
    let stride = dim + 1;
    debug_assert_eq!(weights.len(), num_classes * stride);

    let partials: Vec<(f64, Vec<f64>)> = data
        .par_chunks(BLOCK)
        .map(|block| {
            let mut loss = 0.0;
            let mut grad = vec![0.0; weights.len()];
            let mut logits = vec![0.0; num_classes];
            for item in block {
                let x = item.features();
                for (c, z) in logits.iter_mut().enumerate() {
                    let w = &weights[c * stride..(c + 1) * stride];
                    *z = super::dot(&w[..dim], x) + w[dim];
                }
                let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
                loss += lse - logits[item.label];
                for c in 0..num_classes {
                    let p = (logits[c] - lse).exp();
                    let coef = p - if c == item.label { 1.0 } else { 0.0 };
                    if coef == 0.0 {
                        continue;
                    }
                    let gc = &mut grad[c * stride..(c + 1) * stride];
                    for (gj, xj) in gc[..dim].iter_mut().zip(x) {
                        *gj += coef * xj;
                    }
                    gc[dim] += coef;
                }
            }
            (loss, grad)
        })
        .collect();

    let mut loss = 0.0;
    let mut grad = vec![0.0; weights.len()];
    for (l, g) in partials {
        loss += l;
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }
    for c in 0..num_classes {
        for j in 0..dim {
            let w = weights[c * stride + j];
            loss += 0.5 * l2 * w * w;
            grad[c * stride + j] += l2 * w;
        }
    }
    (loss, grad)
}

/// Fits a model; `class_ids[label]` names each label index in `data`.
pub fn train_lr(data: &[LabeledImage], class_ids: &[String], params: LrParams) -> Result<LrModel> {
    let dim = check_training_set(data, class_ids.len())?;
    if !(params.l2 >= 0.0) || !(params.tol > 0.0) {
        return Err(Error::Config("lr needs l2 >= 0 and tol > 0".into()));
    }
    let num_classes = class_ids.len();
    let x0 = vec![0.0; num_classes * (dim + 1)];
    let (weights, report) = optim::minimize(
        |w, g| {
            let (f, grad) = loss_and_gradient(w, data, num_classes, params.l2);
            g.copy_from_slice(&grad);
            f
        },
        x0,
        LbfgsParams {
            max_iter: params.max_iter,
            tol: params.tol,
            memory: 10,
        },
    );
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::Numerical("logistic regression diverged".into()));
    }
    if !report.converged {
        log::warn!(
            "logistic regression stopped after {} iterations without reaching tol {}",
            report.iterations,
            params.tol
        );
    }
    Ok(LrModel {
        class_ids: class_ids.to_vec(),
        dim,
        weights,
        params,
        report: TrainReport {
            iterations: report.iterations,
            converged: report.converged,
            loss_history: report.loss_history,
        },
    })
}

impl LrModel {
    pub fn predict(&self, features: &[f64]) -> Result<ScoreVector> {
        if features.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: features.len(),
            });
        }
        let stride = self.dim + 1;
        let mut z: Vec<f64> = (0..self.class_ids.len())
            .map(|c| {
                let w = &self.weights[c * stride..(c + 1) * stride];
                super::dot(&w[..self.dim], features) + w[self.dim]
            })
            .collect();
        softmax_in_place(&mut z);
        ScoreVector::new(self.class_ids.clone(), z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cgr::GrayImage;
    use crate::classify::testutil::{blobs, names};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn separable_training_accuracy() {
        let data = blobs(10, 3, 4, 1);
        let model = train_lr(&data, &names(3), LrParams::default()).unwrap();
        assert!(model.report.converged);
        for item in &data {
            assert_eq!(model.predict(item.features()).unwrap().argmax(), item.label);
        }
        let h = &model.report.loss_history;
        assert!(h.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn zero_weights_are_uniform() {
        let model = LrModel {
            class_ids: names(4),
            dim: 4,
            weights: vec![0.0; 4 * 5],
            params: LrParams::default(),
            report: TrainReport::default(),
        };
        let s = model.predict(&[0.3, 0.1, 0.9, 0.0]).unwrap();
        assert!(s.scores.iter().all(|&p| (p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn scores_sum_to_one() {
        let data = blobs(5, 2, 3, 2);
        let model = train_lr(&data, &names(2), LrParams::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..9).map(|_| rng.random_range(-5.0..5.0)).collect();
            let s = model.predict(&x).unwrap();
            assert!((s.scores.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(s.scores.iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(train_lr(&[], &names(2), LrParams::default()).is_err());
        let one_class: Vec<_> = blobs(3, 2, 2, 4).into_iter().filter(|d| d.label == 0).collect();
        assert!(train_lr(&one_class, &names(2), LrParams::default()).is_err());
        let data = blobs(3, 2, 2, 4);
        let model = train_lr(&data, &names(2), LrParams::default()).unwrap();
        assert!(matches!(
            model.predict(&[0.0; 3]),
            Err(Error::DimensionMismatch { expected: 4, actual: 3 })
        ));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let data = blobs(4, 3, 2, 5);
        let n = 3 * 5;
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (_, grad) = loss_and_gradient(&w, &data, 3, 0.7);
        let h = 1e-6;
        for j in 0..n {
            let mut wp = w.clone();
            let mut wm = w.clone();
            wp[j] += h;
            wm[j] -= h;
            let fd = (loss_and_gradient(&wp, &data, 3, 0.7).0 - loss_and_gradient(&wm, &data, 3, 0.7).0) / (2.0 * h);
            let rel = (fd - grad[j]).abs() / fd.abs().max(grad[j].abs()).max(1e-8);
            assert!(rel < 1e-5, "coordinate {j}: fd {fd} analytic {}", grad[j]);
        }
    }

    #[test]
    fn permuting_classes_permutes_scores() {
        let mut data = blobs(6, 3, 3, 8);
        let model = train_lr(&data, &names(3), LrParams::default()).unwrap();
        // relabel: class i becomes class perm[i]
        let perm = [2, 0, 1];
        let mut permuted_names = vec![String::new(); 3];
        for (i, &p) in perm.iter().enumerate() {
            permuted_names[p] = names(3)[i].clone();
        }
        for d in &mut data {
            d.label = perm[d.label];
        }
        let model2 = train_lr(&data, &permuted_names, LrParams::default()).unwrap();
        let probe = GrayImage::new(3, vec![0.5, 0.1, 0.9, 0.3, 0.3, 0.7, 0.2, 0.8, 0.4]).unwrap();
        let a = model.predict(probe.pixels()).unwrap();
        let b = model2.predict(probe.pixels()).unwrap();
        for (i, &p) in perm.iter().enumerate() {
            assert!((a.scores[i] - b.scores[p]).abs() < 1e-6);
        }
    }
}
