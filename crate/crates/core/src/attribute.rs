//! Document-level attribution from per-chunk scores.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::classify::ScoreVector;
use crate::error::{Error, Result};

pub const DEFAULT_MIN_PROB: f64 = 0.3;
pub const DEFAULT_MARGIN_FACTOR: f64 = 1.5;

/// Label written for a rejected document.
pub const NOA_LABEL: &str = "NoA";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Label(String),
    NoneOfTheAbove,
}

impl Decision {
    pub fn label(&self) -> Option<&str> {
        match self {
            Decision::Label(l) => Some(l),
            Decision::NoneOfTheAbove => None,
        }
    }

    pub fn is_noa(&self) -> bool {
        matches!(self, Decision::NoneOfTheAbove)
    }
}

impl std::fmt::Display for Decision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label().unwrap_or(NOA_LABEL))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionResult {
    pub doc_id: String,
    pub aggregated: ScoreVector,
    /// Class ids by descending aggregated score.
    pub ranked: Vec<String>,
    pub decision: Decision,
    pub num_chunks: usize,
    /// Set when the top score was shared by more than one class.
    pub tie: bool,
}

/// Thresholds for rejecting weak attributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoaThresholds {
    pub min_prob: f64,
    pub margin_factor: f64,
}

impl Default for NoaThresholds {
    fn default() -> Self {
        NoaThresholds {
            min_prob: DEFAULT_MIN_PROB,
            margin_factor: DEFAULT_MARGIN_FACTOR,
        }
    }
}

fn ranking(scores: &ScoreVector) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.scores.len()).collect();
    // stable sort keeps lower indices first among equal scores
    idx.sort_by(|&a, &b| scores.scores[b].total_cmp(&scores.scores[a]));
    idx
}

/// Mean of the chunk scores; the argmax is the decision.
pub fn aggregate(doc_id: &str, chunk_scores: &[ScoreVector]) -> Result<AttributionResult> {
    let first = chunk_scores
        .first()
        .ok_or_else(|| Error::Data(format!("document {doc_id:?} has no chunks to aggregate")))?;
    let mut sum = vec![0.0; first.scores.len()];
    for s in chunk_scores {
        if s.class_ids != first.class_ids {
            return Err(Error::Data(format!(
                "document {doc_id:?}: chunk scores use different class sets"
            )));
        }
        for (a, b) in sum.iter_mut().zip(&s.scores) {
            *a += b;
        }
    }
    let n = chunk_scores.len() as f64;
    sum.iter_mut().for_each(|v| *v /= n);
    let aggregated = ScoreVector::new(first.class_ids.clone(), sum)?;
    let order = ranking(&aggregated);
    let best = order[0];
    let tie = order.len() > 1 && aggregated.scores[order[1]] == aggregated.scores[best];
    if tie {
        log::warn!("document {doc_id:?}: tied top score, choosing {:?}", aggregated.class_ids[best]);
    }
    Ok(AttributionResult {
        doc_id: doc_id.to_string(),
        ranked: order.iter().map(|&i| aggregated.class_ids[i].clone()).collect(),
        decision: Decision::Label(aggregated.class_ids[best].clone()),
        aggregated,
        num_chunks: chunk_scores.len(),
        tie,
    })
}

/// Keeps the top label only if it is at least `min_prob` and at least
/// `margin_factor` times the runner-up.
pub fn apply_noa(mut result: AttributionResult, thresholds: NoaThresholds) -> AttributionResult {
    let order = ranking(&result.aggregated);
    let top = result.aggregated.scores[order[0]];
    let second = order.get(1).map_or(0.0, |&i| result.aggregated.scores[i]);
    result.decision = if top >= thresholds.min_prob && top >= thresholds.margin_factor * second {
        Decision::Label(result.aggregated.class_ids[order[0]].clone())
    } else {
        Decision::NoneOfTheAbove
    };
    result
}

pub fn top_k(result: &AttributionResult, k: usize) -> Result<&[String]> {
    if k > result.ranked.len() {
        return Err(Error::Config(format!(
            "top-{k} requested but only {} classes",
            result.ranked.len()
        )));
    }
    Ok(&result.ranked[..k])
}

/// CSV with `doc_id, decision, num_chunks` and one score column per class.
pub fn write_csv<W: Write>(results: &[AttributionResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Data(format!("writing attribution CSV: {e}"));
    let class_ids = results.first().map(|r| r.aggregated.class_ids.clone()).unwrap_or_default();
    let mut header = vec!["doc_id".to_string(), "decision".into(), "num_chunks".into()];
    header.extend(class_ids.iter().cloned());
    w.write_record(&header).map_err(csv_err)?;
    for r in results {
        if r.aggregated.class_ids != class_ids {
            return Err(Error::Data("attribution results use different class sets".into()));
        }
        let mut row = vec![r.doc_id.clone(), r.decision.to_string(), r.num_chunks.to_string()];
        row.extend(r.aggregated.scores.iter().map(|s| s.to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Data(format!("writing attribution CSV: {e}")))?;
    Ok(())
}

/// Pretty JSON array of full results, rankings included.
pub fn write_json<W: Write>(results: &[AttributionResult], mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, results)
        .map_err(|e| Error::Data(format!("writing attribution JSON: {e}")))?;
    writeln!(out).map_err(|e| Error::Data(format!("writing attribution JSON: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sv(scores: &[f64]) -> ScoreVector {
        let ids = (0..scores.len()).map(|i| format!("{}", (b'A' + i as u8) as char)).collect();
        ScoreVector::new(ids, scores.to_vec()).unwrap()
    }

    fn decide(scores: &[f64]) -> Decision {
        apply_noa(aggregate("d", &[sv(scores)]).unwrap(), NoaThresholds::default()).decision
    }

    #[test]
    fn sums_then_normalizes() {
        let r = aggregate("d", &[sv(&[0.6, 0.4]), sv(&[0.2, 0.8])]).unwrap();
        assert!((r.aggregated.scores[0] - 0.4).abs() < 1e-15);
        assert!((r.aggregated.scores[1] - 0.6).abs() < 1e-15);
        assert_eq!(r.decision, Decision::Label("B".into()));
        assert_eq!(r.ranked, vec!["B", "A"]);
        assert_eq!(r.num_chunks, 2);
        assert!(!r.tie);

        let one = sv(&[0.1, 0.7, 0.2]);
        assert_eq!(aggregate("d", &[one.clone()]).unwrap().aggregated, one);
    }

    #[test]
    fn aggregate_errors_and_ties() {
        assert!(aggregate("d", &[]).is_err());
        let other = ScoreVector::new(vec!["A".into(), "C".into()], vec![0.5, 0.5]).unwrap();
        assert!(aggregate("d", &[sv(&[0.5, 0.5]), other]).is_err());
        let r = aggregate("d", &[sv(&[0.2, 0.4, 0.4])]).unwrap();
        assert!(r.tie);
        assert_eq!(r.decision.label(), Some("B"));
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(decide(&[0.60, 0.30, 0.10]), Decision::Label("A".into()));
        assert_eq!(decide(&[0.35, 0.30, 0.35 * 0.5, 0.175]), Decision::NoneOfTheAbove);
        assert_eq!(decide(&[0.29, 0.20, 0.51 / 3.0, 0.17, 0.17]), Decision::NoneOfTheAbove);
        // boundaries are inclusive
        assert_eq!(decide(&[0.375, 0.25, 0.25, 0.125]), Decision::Label("A".into()));
        assert_eq!(decide(&[0.3, 0.175, 0.175, 0.175, 0.175]), Decision::Label("A".into()));
        // single class: runner-up is zero
        assert_eq!(decide(&[1.0]), Decision::Label("A".into()));
    }

    #[test]
    fn top_k_prefixes_ranking() {
        let r = aggregate("d", &[sv(&[0.1, 0.5, 0.15, 0.25])]).unwrap();
        assert_eq!(top_k(&r, 1).unwrap(), ["B"]);
        assert_eq!(top_k(&r, 4).unwrap(), ["B", "D", "C", "A"]);
        assert!(top_k(&r, 5).is_err());
    }

    #[test]
    fn report_formats() {
        let mut r = aggregate("doc,1", &[sv(&[0.25, 0.75])]).unwrap();
        let mut buf = Vec::new();
        write_csv(std::slice::from_ref(&r), &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "doc_id,decision,num_chunks,A,B\n\"doc,1\",B,1,0.25,0.75\n"
        );
        r = apply_noa(r, NoaThresholds { min_prob: 0.9, margin_factor: 1.0 });
        let mut buf = Vec::new();
        write_json(&[r], &mut buf).unwrap();
        let back: Vec<AttributionResult> = serde_json::from_slice(&buf).unwrap();
        assert!(back[0].decision.is_noa());
        assert_eq!(back[0].ranked, vec!["B", "A"]);
    }

    fn chunk_lists() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (2usize..6).prop_flat_map(|c| {
            prop::collection::vec(prop::collection::vec(0.001f64..1.0, c), 1..8).prop_map(|rows| {
                rows.into_iter()
                    .map(|r| {
                        let s: f64 = r.iter().sum();
                        r.into_iter().map(|x| x / s).collect()
                    })
                    .collect()
            })
        })
    }

    proptest! {
        #[test]
        fn aggregated_is_normalized(chunks in chunk_lists()) {
            let scores: Vec<_> = chunks.iter().map(|c| sv(c)).collect();
            let r = aggregate("d", &scores).unwrap();
            prop_assert!((r.aggregated.scores.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let mut ranked = r.ranked.clone();
            ranked.sort();
            prop_assert_eq!(ranked, r.aggregated.class_ids.clone());
        }

        #[test]
        fn decision_is_scale_invariant(chunks in chunk_lists(), scale in 0.01f64..100.0) {
            let a: Vec<_> = chunks.iter().map(|c| sv(c)).collect();
            let b: Vec<_> = chunks
                .iter()
                .map(|c| sv(&c.iter().map(|x| x * scale).collect::<Vec<_>>()))
                .collect();
            let (ra, rb) = (aggregate("d", &a).unwrap(), aggregate("d", &b).unwrap());
            prop_assert_eq!(ra.ranked, rb.ranked);
            prop_assert_eq!(ra.decision, rb.decision);
        }

        #[test]
        fn order_does_not_matter(chunks in chunk_lists(), rot in 0usize..8) {
            let a: Vec<_> = chunks.iter().map(|c| sv(c)).collect();
            let mut b = a.clone();
            let len = b.len();
            b.rotate_left(rot % len);
            b.reverse();
            let (ra, rb) = (aggregate("d", &a).unwrap(), aggregate("d", &b).unwrap());
            prop_assert_eq!(&ra.ranked, &rb.ranked);
            prop_assert_eq!(&ra.decision, &rb.decision);
            for (x, y) in ra.aggregated.scores.iter().zip(&rb.aggregated.scores) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn degenerate_thresholds_never_reject(chunks in chunk_lists()) {
            let scores: Vec<_> = chunks.iter().map(|c| sv(c)).collect();
            let r = apply_noa(
                aggregate("d", &scores).unwrap(),
                NoaThresholds { min_prob: 0.0, margin_factor: 1.0 },
            );
            prop_assert!(!r.decision.is_noa());
        }
    }
}
