//! Frequency chaos game representation.
//!
//! An order-`k` FCGR is a `2^k × 2^k` grid where each cell counts one
//! k-mer. The first-order layout is
//!
//! ```text
//! C G
//! A T
//! ```
//!
//! and order `k+1` replaces every cell `N_w` of order `k` with the 2×2 block
//! `[[N_Cw, N_Gw], [N_Aw, N_Tw]]`. Unrolling the recursion, the row of a
//! word `w_1..w_k` has bits `rowbit(w_k) .. rowbit(w_1)` (most significant
//! first) and the column likewise with `colbit`.

use crate::alphabet::Base4Sequence;
use crate::error::{Error, Result};

/// Largest supported order. `4^12` cells is already 16M counters.
pub const MAX_ORDER: usize = 12;

/// One of the four corners of the CGR square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Corner {
    A,
    C,
    G,
    T,
}

impl Corner {
    fn row_bit(self) -> usize {
        match self {
            Corner::A | Corner::T => 1,
            Corner::C | Corner::G => 0,
        }
    }

    fn col_bit(self) -> usize {
        match self {
            Corner::G | Corner::T => 1,
            Corner::A | Corner::C => 0,
        }
    }
}

/// Assignment of base-4 digits to square corners.
///
/// Any bijection permutes cells identically for every document; the
/// default is `0→A, 1→C, 2→G, 3→T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CornerMap {
    corners: [Corner; 4],
    row_bits: [usize; 4],
    col_bits: [usize; 4],
}

impl Default for CornerMap {
    fn default() -> Self {
        Self::new([Corner::A, Corner::C, Corner::G, Corner::T]).unwrap()
    }
}

impl CornerMap {
    pub fn new(corners: [Corner; 4]) -> Result<Self> {
        for (i, c) in corners.iter().enumerate() {
            if corners[..i].contains(c) {
                return Err(Error::Config(format!("corner {c:?} assigned twice")));
            }
        }
        Ok(CornerMap {
            corners,
            row_bits: corners.map(Corner::row_bit),
            col_bits: corners.map(Corner::col_bit),
        })
    }

    pub fn corner(&self, digit: u8) -> Corner {
        self.corners[digit as usize]
    }
}

/// Cell `(row, col)` of a k-mer under the default corner map.
pub fn kmer_cell(word: &[u8], k: usize) -> Result<(usize, usize)> {
    kmer_cell_with(word, k, &CornerMap::default())
}

pub fn kmer_cell_with(word: &[u8], k: usize, map: &CornerMap) -> Result<(usize, usize)> {
    if k == 0 || k > MAX_ORDER {
        return Err(Error::Config(format!("order k={k} outside 1..={MAX_ORDER}")));
    }
    if word.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            actual: word.len(),
        });
    }
    let (mut row, mut col) = (0usize, 0usize);
    // w_k is the most significant bit, so fold from the last symbol.
    for &d in word.iter().rev() {
        if d > 3 {
            return Err(Error::Data(format!("digit {d} is not base-4")));
        }
        row = (row << 1) | map.row_bits[d as usize];
        col = (col << 1) | map.col_bits[d as usize];
    }
    Ok((row, col))
}

/// Order-`k` k-mer count grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FcgrMatrix {
    order: usize,
    /// Row-major, `side × side`.
    counts: Vec<u64>,
    total_kmers: u64,
}

impl FcgrMatrix {
    pub fn zeros(order: usize) -> Self {
        let side = 1usize << order;
        FcgrMatrix {
            order,
            counts: vec![0; side * side],
            total_kmers: 0,
        }
    }

    /// Builds a matrix from explicit counts; `total_kmers` is their sum.
    pub fn from_counts(order: usize, counts: Vec<u64>) -> Result<Self> {
        let side = 1usize << order;
        if counts.len() != side * side {
            return Err(Error::DimensionMismatch {
                expected: side * side,
                actual: counts.len(),
            });
        }
        let total_kmers = counts.iter().sum();
        Ok(FcgrMatrix {
            order,
            counts,
            total_kmers,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn side(&self) -> usize {
        1 << self.order
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn get(&self, row: usize, col: usize) -> u64 {
        self.counts[row * self.side() + col]
    }

    pub fn total_kmers(&self) -> u64 {
        self.total_kmers
    }
}

/// Counts all overlapping k-mers of `seq`.
pub fn fcgr(seq: &Base4Sequence, k: usize) -> Result<FcgrMatrix> {
    fcgr_with(&seq.digits, k, &CornerMap::default())
}

pub fn fcgr_with(digits: &[u8], k: usize, map: &CornerMap) -> Result<FcgrMatrix> {
    if k == 0 || k > MAX_ORDER {
        return Err(Error::Config(format!("order k={k} outside 1..={MAX_ORDER}")));
    }
    if digits.len() < k {
        return Err(Error::SequenceTooShort {
            len: digits.len(),
            k,
        });
    }
    let side = 1usize << k;
    let top = k - 1;
    let mut counts = vec![0u64; side * side];
    let (mut row, mut col) = (0usize, 0usize);
    for (i, &d) in digits.iter().enumerate() {
        if d > 3 {
            return Err(Error::Data(format!("digit {d} at position {i} is not base-4")));
        }
        // Sliding window: the newest symbol becomes the most significant bit.
        row = (row >> 1) | (map.row_bits[d as usize] << top);
        col = (col >> 1) | (map.col_bits[d as usize] << top);
        if i + 1 >= k {
            counts[row * side + col] += 1;
        }
    }
    Ok(FcgrMatrix {
        order: k,
        counts,
        total_kmers: (digits.len() - k + 1) as u64,
    })
}

/// Square grayscale image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    side: usize,
    intensity: Vec<f64>,
}

impl GrayImage {
    pub fn new(side: usize, intensity: Vec<f64>) -> Result<Self> {
        if intensity.len() != side * side {
            return Err(Error::DimensionMismatch {
                expected: side * side,
                actual: intensity.len(),
            });
        }
        Ok(GrayImage { side, intensity })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    /// Row-major intensities.
    pub fn pixels(&self) -> &[f64] {
        &self.intensity
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.intensity[row * self.side + col]
    }

    /// 8-bit gray levels where intensity 1 is black: `round(255·(1 − v))`.
    pub fn to_gray8(&self) -> Vec<u8> {
        self.intensity
            .iter()
            .map(|&v| (255.0 * (1.0 - v.clamp(0.0, 1.0))).round() as u8)
            .collect()
    }
}

/// Divides every count by the largest one. An all-zero matrix renders as
/// an all-zero image.
pub fn render(m: &FcgrMatrix) -> GrayImage {
    let max = m.counts.iter().copied().max().unwrap_or(0);
    let intensity = if max == 0 {
        vec![0.0; m.counts.len()]
    } else {
        let max = max as f64;
        m.counts.iter().map(|&c| c as f64 / max).collect()
    };
    GrayImage {
        side: m.side(),
        intensity,
    }
}

/// Row-major flattening of the rendered intensities, length `4^k`.
pub fn feature_vector(m: &FcgrMatrix) -> Vec<f64> {
    render(m).intensity
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashMap;

    const A: u8 = 0;
    const C: u8 = 1;
    const G: u8 = 2;
    const T: u8 = 3;

    #[test]
    fn first_order_layout() {
        assert_eq!(kmer_cell(&[C], 1).unwrap(), (0, 0));
        assert_eq!(kmer_cell(&[G], 1).unwrap(), (0, 1));
        assert_eq!(kmer_cell(&[A], 1).unwrap(), (1, 0));
        assert_eq!(kmer_cell(&[T], 1).unwrap(), (1, 1));
    }

    #[test]
    fn second_order_layout() {
        // Rows of the order-2 table, written as words w1 w2.
        let layout: [[[u8; 2]; 4]; 4] = [
            [[C, C], [G, C], [C, G], [G, G]],
            [[A, C], [T, C], [A, G], [T, G]],
            [[C, A], [G, A], [C, T], [G, T]],
            [[A, A], [T, A], [A, T], [T, T]],
        ];
        for (r, row) in layout.iter().enumerate() {
            for (c, word) in row.iter().enumerate() {
                assert_eq!(kmer_cell(word, 2).unwrap(), (r, c), "word {word:?}");
            }
        }
    }

    #[test]
    fn kmer_cell_rejects_bad_words() {
        assert!(kmer_cell(&[0, 4], 2).is_err());
        assert!(kmer_cell(&[0, 1, 2], 2).is_err());
        assert!(kmer_cell(&[], 0).is_err());
    }

    #[test]
    fn fcgr_examples() {
        let m = fcgr(&Base4Sequence::new(vec![0, 1, 2, 3], "d"), 1).unwrap();
        assert_eq!(m.counts(), &[1, 1, 1, 1]);
        assert_eq!(m.total_kmers(), 4);

        let m = fcgr(&Base4Sequence::new(vec![3, 3, 3], "d"), 2).unwrap();
        assert_eq!(m.get(3, 3), 2);
        assert_eq!(m.counts().iter().sum::<u64>(), 2);

        assert!(matches!(
            fcgr(&Base4Sequence::new(vec![1, 2], "d"), 3),
            Err(Error::SequenceTooShort { len: 2, k: 3 })
        ));
    }

    #[test]
    fn render_examples() {
        let zero = FcgrMatrix::zeros(1);
        assert_eq!(render(&zero).pixels(), &[0.0; 4]);
        assert_eq!(feature_vector(&zero), vec![0.0; 4]);

        let m = FcgrMatrix::from_counts(1, vec![2, 1, 0, 0]).unwrap();
        assert_eq!(render(&m).pixels(), &[1.0, 0.5, 0.0, 0.0]);
        assert_eq!(feature_vector(&m), vec![1.0, 0.5, 0.0, 0.0]);
        assert_eq!(render(&m).to_gray8(), vec![0, 128, 255, 255]);

        assert_eq!(feature_vector(&FcgrMatrix::zeros(7)).len(), 16384);
    }

    #[test]
    fn corner_map_must_be_bijective() {
        assert!(CornerMap::new([Corner::A, Corner::A, Corner::G, Corner::T]).is_err());
    }

    fn brute_force(digits: &[u8], k: usize) -> FcgrMatrix {
        let mut words: HashMap<&[u8], u64> = HashMap::new();
        for w in digits.windows(k) {
            *words.entry(w).or_default() += 1;
        }
        let side = 1 << k;
        let mut counts = vec![0; side * side];
        for (w, n) in words {
            let (r, c) = kmer_cell(w, k).unwrap();
            counts[r * side + c] = n;
        }
        FcgrMatrix::from_counts(k, counts).unwrap()
    }

    proptest! {
        #[test]
        fn matches_brute_force(digits in proptest::collection::vec(0u8..4, 8..400), k in 1usize..6) {
            let m = fcgr_with(&digits, k, &CornerMap::default()).unwrap();
            prop_assert_eq!(&m, &brute_force(&digits, k));
            prop_assert_eq!(m.total_kmers(), (digits.len() - k + 1) as u64);
        }

        #[test]
        fn refinement_stays_in_parent_block(word in proptest::collection::vec(0u8..4, 1..8), x in 0u8..4) {
            let k = word.len();
            let (r, c) = kmer_cell(&word, k).unwrap();
            let mut longer = vec![x];
            longer.extend_from_slice(&word);
            let (r2, c2) = kmer_cell(&longer, k + 1).unwrap();
            // Subdividing cell (r, c) of order k: block rows 2r..2r+1, cols 2c..2c+1,
            // with X placed per the first-order layout.
            let (dr, dc) = kmer_cell(&[x], 1).unwrap();
            prop_assert_eq!((r2, c2), (2 * r + dr, 2 * c + dc));
        }

        #[test]
        fn concatenation_differs_by_straddling_kmers(
            a in proptest::collection::vec(0u8..4, 6..60),
            b in proptest::collection::vec(0u8..4, 6..60),
            k in 1usize..5,
        ) {
            let whole: Vec<u8> = a.iter().chain(&b).copied().collect();
            let map = CornerMap::default();
            let mw = fcgr_with(&whole, k, &map).unwrap();
            let ma = fcgr_with(&a, k, &map).unwrap();
            let mb = fcgr_with(&b, k, &map).unwrap();
            let mut extra = 0i64;
            for i in 0..mw.counts().len() {
                let d = mw.counts()[i] as i64 - ma.counts()[i] as i64 - mb.counts()[i] as i64;
                prop_assert!(d >= 0);
                extra += d;
            }
            prop_assert_eq!(extra, (k - 1) as i64);
        }
    }

    #[test]
    fn kmer_cell_is_a_bijection() {
        for k in 1..=5 {
            let n = 1usize << (2 * k);
            let mut seen = vec![false; n];
            for code in 0..n {
                let word: Vec<u8> = (0..k).map(|i| ((code >> (2 * i)) & 3) as u8).collect();
                let (r, c) = kmer_cell(&word, k).unwrap();
                let idx = r * (1 << k) + c;
                assert!(!seen[idx]);
                seen[idx] = true;
            }
        }
    }
}
