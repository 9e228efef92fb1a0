//! Browser bindings: render a text as an FCGR image, report its digit
//! statistics, and explore how chunk scores aggregate into a decision.

use fcgr::alphabet::{digit_stats, DigitPair};
use fcgr::attribute::{aggregate, apply_noa, NoaThresholds};
use fcgr::classify::ScoreVector;
use fcgr::{encode, fcgr, normalize_text, render, EquivalenceTable};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

fn encoded(text: &str, strip_diacritics: bool) -> fcgr::Base4Sequence {
    encode(&normalize_text(text, strip_diacritics), &EquivalenceTable::standard())
}

/// Grayscale pixels (row-major, `2^k × 2^k`, 0 = most frequent k-mer).
pub fn render_pixels(text: &str, k: usize, strip_diacritics: bool) -> Result<Vec<u8>, String> {
    let m = fcgr(&encoded(text, strip_diacritics), k).map_err(|e| e.to_string())?;
    Ok(render(&m).to_gray8())
}

#[derive(Debug, Serialize)]
pub struct TextStats {
    pub characters: u64,
    pub digits: usize,
    pub kmers: u64,
    /// `(code, count)` for the 16 two-digit codes.
    pub pairs: Vec<(String, u64)>,
}

pub fn text_stats(text: &str, k: usize, strip_diacritics: bool) -> TextStats {
    let seq = encoded(text, strip_diacritics);
    let stats = digit_stats(&seq);
    TextStats {
        characters: stats.total(),
        digits: seq.len(),
        kmers: (seq.len() + 1).saturating_sub(k) as u64,
        pairs: (0..16)
            .map(|i| {
                let code = DigitPair::from_index(i);
                (code.to_string(), stats.count(code))
            })
            .collect(),
    }
}

#[derive(Debug, Deserialize)]
pub struct ChunkScores {
    pub classes: Vec<String>,
    pub chunks: Vec<Vec<f64>>,
}

/// Aggregates per-chunk scores and applies the none-of-the-above rule.
/// `noa` off means both thresholds are zero.
pub fn decide(input: &str, min_prob: f64, margin_factor: f64, noa: bool) -> Result<String, String> {
    let parsed: ChunkScores = serde_json::from_str(input).map_err(|e| e.to_string())?;
    let chunks = parsed
        .chunks
        .into_iter()
        .map(|s| ScoreVector::new(parsed.classes.clone(), s))
        .collect::<fcgr::Result<Vec<_>>>()
        .map_err(|e| e.to_string())?;
    let result = aggregate("input", &chunks).map_err(|e| e.to_string())?;
    let thresholds = if noa {
        NoaThresholds { min_prob, margin_factor }
    } else {
        NoaThresholds { min_prob: 0.0, margin_factor: 0.0 }
    };
    serde_json::to_string(&apply_noa(result, thresholds)).map_err(|e| e.to_string())
}

#[wasm_bindgen(js_name = renderFcgr)]
pub fn render_fcgr(text: &str, k: usize, strip_diacritics: bool) -> Result<Vec<u8>, JsError> {
    render_pixels(text, k, strip_diacritics).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = textStats)]
pub fn text_stats_json(text: &str, k: usize, strip_diacritics: bool) -> String {
    serde_json::to_string(&text_stats(text, k, strip_diacritics)).unwrap_or_default()
}

#[wasm_bindgen(js_name = attribute)]
pub fn attribute_json(input: &str, min_prob: f64, margin_factor: f64, noa: bool) -> Result<String, JsError> {
    decide(input, min_prob, margin_factor, noa).map_err(|e| JsError::new(&e))
}
