//! Separable 2-D trigonometric transforms of square images.
//!
//! Cosine: orthonormal DCT-II,
//! `C[k][n] = a_k cos(pi (2n + 1) k / 2N)`, `a_0 = sqrt(1/N)`, `a_k = sqrt(2/N)`.
//! Sine: orthonormal DST-I,
//! `S[k][n] = sqrt(2/(N+1)) sin(pi (n + 1)(k + 1) / (N + 1))`.
//!
//! Both basis matrices are orthogonal, so the inverse is the transpose
//! (DST-I is also symmetric and therefore its own inverse).

use std::f64::consts::PI;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cgr::GrayImage;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformKind {
    #[default]
    Cosine,
    Sine,
}

impl FromStr for TransformKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cosine" | "cos" | "dct" => Ok(TransformKind::Cosine),
            "sine" | "sin" | "dst" => Ok(TransformKind::Sine),
            _ => Err(Error::Config(format!("unknown transform {s:?}"))),
        }
    }
}

/// Precomputed `rows × n` block of the 1-D basis (the lowest `rows`
/// frequencies), row-major.
#[derive(Debug, Clone)]
pub struct Basis {
    kind: TransformKind,
    n: usize,
    rows: usize,
    m: Vec<f64>,
}

impl Basis {
    pub fn new(kind: TransformKind, n: usize, rows: usize) -> Self {
        assert!(rows <= n && n > 0);
        let mut m = vec![0.0; rows * n];
        for k in 0..rows {
            for j in 0..n {
                m[k * n + j] = basis_entry(kind, n, k, j);
            }
        }
        Basis { kind, n, rows, m }
    }

    pub fn kind(&self) -> TransformKind {
        self.kind
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// Lowest `rows × rows` block of the 2-D transform of `x` (side `n`),
    /// computed as `B X Bᵀ`. Row-major output.
    pub fn forward_low(&self, x: &[f64]) -> Vec<f64> {
        let (n, f) = (self.n, self.rows);
        debug_assert_eq!(x.len(), n * n);
        // t = B X  (f × n)
        let mut t = vec![0.0; f * n];
        for k in 0..f {
            let b = &self.m[k * n..(k + 1) * n];
            let out = &mut t[k * n..(k + 1) * n];
            for (j, &bj) in b.iter().enumerate() {
                if bj == 0.0 {
                    continue;
                }
                let row = &x[j * n..(j + 1) * n];
                for (o, &v) in out.iter_mut().zip(row) {
                    *o += bj * v;
                }
            }
        }
        // y = t Bᵀ  (f × f)
        let mut y = vec![0.0; f * f];
        for r in 0..f {
            let trow = &t[r * n..(r + 1) * n];
            for c in 0..f {
                let b = &self.m[c * n..(c + 1) * n];
                y[r * f + c] = super::dot(trow, b);
            }
        }
        y
    }
}

fn basis_entry(kind: TransformKind, n: usize, k: usize, j: usize) -> f64 {
    let nf = n as f64;
    match kind {
        TransformKind::Cosine => {
            let a = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
            a * (PI * (2 * j + 1) as f64 * k as f64 / (2.0 * nf)).cos()
        }
        TransformKind::Sine => {
            (2.0 / (nf + 1.0)).sqrt() * (PI * ((j + 1) * (k + 1)) as f64 / (nf + 1.0)).sin()
        }
    }
}

/// Full 2-D transform of a square image, row-major `side × side`.
pub fn trig_transform(img: &GrayImage, kind: TransformKind) -> Vec<f64> {
    let n = img.side();
    Basis::new(kind, n, n).forward_low(img.pixels())
}

/// Inverse of [`trig_transform`]: `Bᵀ Y B`.
pub fn inverse_trig_transform(coeffs: &[f64], side: usize, kind: TransformKind) -> Result<Vec<f64>> {
    if coeffs.len() != side * side {
        return Err(Error::DimensionMismatch {
            expected: side * side,
            actual: coeffs.len(),
        });
    }
    let n = side;
    let b = Basis::new(kind, n, n).m;
    let mut t = vec![0.0; n * n];
    // t = Bᵀ Y
    for k in 0..n {
        for j in 0..n {
            let bkj = b[k * n + j];
            for c in 0..n {
                t[j * n + c] += bkj * coeffs[k * n + c];
            }
        }
    }
    // x = t B
    let mut x = vec![0.0; n * n];
    for r in 0..n {
        for k in 0..n {
            let tv = t[r * n + k];
            for c in 0..n {
                x[r * n + c] += tv * b[k * n + c];
            }
        }
    }
    Ok(x)
}
