//! Synthetic text with controllable style, for demos and tests.
//!
//! Each style is a first-order Markov chain over lowercase letters, space
//! and a little punctuation, with peaked random transition weights. Texts
//! from one style share their character-pair statistics; texts from
//! different styles do not.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::Document;

const SYMBOLS: &[char] = &[
    'a', 'b', 'c', 'd', 'e', 'f', 'g', 'h', 'i', 'j', 'k', 'l', 'm', 'n', 'o', 'p', 'q', 'r', 's',
    't', 'u', 'v', 'w', 'x', 'y', 'z', ' ', ' ', ' ', '.', ',',
];

fn transition_table(style: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(style ^ 0x5EED_0F57_11E5);
    let n = SYMBOLS.len();
    (0..n)
        .map(|_| {
            let w: Vec<f64> = (0..n).map(|_| (4.0 * rng.random::<f64>()).exp()).collect();
            let total: f64 = w.iter().sum();
            let mut acc = 0.0;
            w.iter()
                .map(|x| {
                    acc += x / total;
                    acc
                })
                .collect()
        })
        .collect()
}

/// `len` characters in style `style`; `sample` picks the particular text.
pub fn markov_text(style: u64, sample: u64, len: usize) -> String {
    let table = transition_table(style);
    let mut rng = ChaCha8Rng::seed_from_u64(sample.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ style);
    let mut state = rng.random_range(0..SYMBOLS.len());
    let mut out = String::with_capacity(len);
    for _ in 0..len {
        out.push(SYMBOLS[state]);
        let u: f64 = rng.random();
        let row = &table[state];
        state = row.iter().position(|&c| u < c).unwrap_or(row.len() - 1);
    }
    out
}

/// `authors × per_author` documents with ids `author<a>/<i>` and labels
/// `author<a>`. Author `a` writes in style `seed + a`.
pub fn corpus_documents(authors: usize, per_author: usize, len: usize, seed: u64) -> Vec<Document> {
    let mut docs = Vec::with_capacity(authors * per_author);
    for a in 0..authors {
        for i in 0..per_author {
            docs.push(Document {
                doc_id: format!("author{a:03}/{i:03}"),
                label: format!("author{a:03}"),
                genre: None,
                split: None,
                text: markov_text(seed + a as u64, seed ^ ((a * per_author + i) as u64 + 1) << 20, len),
            });
        }
    }
    docs
}
