//! One-vs-rest linear SVM (hinge loss, L2 penalty), trained by dual
//! coordinate descent. The bias is handled as an extra constant feature,
//! so it is regularized along with the weights.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_training_set, dot, softmax_in_place, LabeledImage, ScoreVector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmParams {
    pub c: f64,
    /// Stop when the spread of projected gradients falls below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Seeds the per-epoch coordinate order.
    pub seed: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: 1.0,
            tol: 1e-3,
            max_iter: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SvmModel {
    pub class_ids: Vec<String>,
    pub dim: usize,
    /// `num_classes × dim` row-major.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub params: SvmParams,
}

const BIAS_FEATURE: f64 = 1.0;

struct BinarySolution {
    w: Vec<f64>,
    b: f64,
    #[cfg_attr(not(test), allow(dead_code))]
    alpha: Vec<f64>,
    converged: bool,
}

fn train_binary(data: &[LabeledImage], positive: usize, dim: usize, params: &SvmParams) -> BinarySolution {
    let n = data.len();
    let y: Vec<f64> = data
        .iter()
        .map(|d| if d.label == positive { 1.0 } else { -1.0 })
        .collect();
    let qdiag: Vec<f64> = data
        .iter()
        .map(|d| dot(d.features(), d.features()) + BIAS_FEATURE * BIAS_FEATURE)
        .collect();
    let mut alpha = vec![0.0; n];
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut converged = false;

    for _ in 0..params.max_iter {
        order.shuffle(&mut rng);
        let (mut pg_max, mut pg_min) = (f64::NEG_INFINITY, f64::INFINITY);
        for &i in &order {
            let x = data[i].features();
            let g = y[i] * (dot(&w, x) + b * BIAS_FEATURE) - 1.0;
            let pg = if alpha[i] == 0.0 {
                g.min(0.0)
            } else if alpha[i] == params.c {
                g.max(0.0)
            } else {
                g
            };
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg.abs() > 1e-12 && qdiag[i] > 0.0 {
                let old = alpha[i];
                alpha[i] = (old - g / qdiag[i]).clamp(0.0, params.c);
                let delta = (alpha[i] - old) * y[i];
                if delta != 0.0 {
                    for (wj, xj) in w.iter_mut().zip(x) {
                        *wj += delta * xj;
                    }
                    b += delta * BIAS_FEATURE;
                }
            }
        }
        if pg_max - pg_min < params.tol {
            converged = true;
            break;
        }
    }
    BinarySolution {
        w,
        b,
        alpha,
        converged,
    }
}

pub fn train_svm(data: &[LabeledImage], class_ids: &[String], params: SvmParams) -> Result<SvmModel> {
    let dim = check_training_set(data, class_ids.len())?;
    if !(params.c > 0.0) || !(params.tol > 0.0) {
        return Err(Error::Config("svm needs C > 0 and tol > 0".into()));
    }
    let solutions: Vec<BinarySolution> = (0..class_ids.len())
        .into_par_iter()
        .map(|c| train_binary(data, c, dim, &params))
        .collect();
    let mut weights = Vec::with_capacity(class_ids.len() * dim);
    let mut biases = Vec::with_capacity(class_ids.len());
    for (c, sol) in solutions.into_iter().enumerate() {
        if !sol.converged {
            log::warn!("svm for class {:?} hit max_iter {}", class_ids[c], params.max_iter);
        }
        weights.extend(sol.w);
        biases.push(sol.b);
    }
    if weights.iter().chain(&biases).any(|v| !v.is_finite()) {
        return Err(Error::Numerical("svm weights are not finite".into()));
    }
    Ok(SvmModel {
        class_ids: class_ids.to_vec(),
        dim,
        weights,
        biases,
        params,
    })
}

impl SvmModel {
    /// Raw one-vs-rest decision values.
    pub fn margins(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: features.len(),
            });
        }
        Ok((0..self.class_ids.len())
            .map(|c| dot(&self.weights[c * self.dim..(c + 1) * self.dim], features) + self.biases[c])
            .collect())
    }

    /// Softmax over the margins.
    pub fn predict(&self, features: &[f64]) -> Result<ScoreVector> {
        let mut m = self.margins(features)?;
        softmax_in_place(&mut m);
        ScoreVector::new(self.class_ids.clone(), m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::testutil::{blobs, names};

    #[test]
    fn separable_training_accuracy() {
        let data = blobs(10, 3, 4, 21);
        let model = train_svm(&data, &names(3), SvmParams::default()).unwrap();
        for item in &data {
            let s = model.predict(item.features()).unwrap();
            assert_eq!(s.argmax(), item.label);
            assert!((s.scores.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dual_solution_is_near_optimal() {
        let data = blobs(8, 2, 3, 5);
        let params = SvmParams {
            tol: 1e-6,
            ..SvmParams::default()
        };
        let sol = train_binary(&data, 0, 9, &params);
        assert!(sol.converged);
        let y = |d: &LabeledImage| if d.label == 0 { 1.0 } else { -1.0 };
        let wnorm2 = dot(&sol.w, &sol.w) + sol.b * sol.b;
        let hinge: f64 = data
            .iter()
            .map(|d| (1.0 - y(d) * (dot(&sol.w, d.features()) + sol.b)).max(0.0))
            .sum();
        let primal = 0.5 * wnorm2 + params.c * hinge;
        let dual = sol.alpha.iter().sum::<f64>() - 0.5 * wnorm2;
        assert!(primal - dual >= -1e-9);
        assert!((primal - dual) / primal.abs().max(1.0) < 1e-4, "gap {primal} vs {dual}");
    }

    #[test]
    fn margins_are_finite_and_checked() {
        let data = blobs(4, 2, 2, 9);
        let model = train_svm(&data, &names(2), SvmParams::default()).unwrap();
        assert!(model.margins(&[0.5; 4]).unwrap().iter().all(|m| m.is_finite()));
        assert!(model.margins(&[0.5; 5]).is_err());
        assert!(train_svm(&data[..4], &names(2), SvmParams::default()).is_err());
    }

    #[test]
    fn permuting_classes_permutes_scores() {
        let mut data = blobs(5, 3, 3, 14);
        let model = train_svm(&data, &names(3), SvmParams::default()).unwrap();
        let perm = [1, 2, 0];
        let mut permuted_names = vec![String::new(); 3];
        for (i, &p) in perm.iter().enumerate() {
            permuted_names[p] = names(3)[i].clone();
        }
        for d in &mut data {
            d.label = perm[d.label];
        }
        let model2 = train_svm(&data, &permuted_names, SvmParams::default()).unwrap();
        let probe = [0.2, 0.9, 0.4, 0.6, 0.1, 0.3, 0.8, 0.5, 0.7];
        let a = model.predict(&probe).unwrap();
        let b = model2.predict(&probe).unwrap();
        for (i, &p) in perm.iter().enumerate() {
            assert!((a.scores[i] - b.scores[p]).abs() < 1e-9);
        }
    }
}
