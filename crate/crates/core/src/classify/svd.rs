//! Truncated singular value decomposition.
//!
//! The top `n` singular triplets of a dense `rows × cols` matrix `X` are
//! obtained from the eigenpairs of the smaller Gram matrix (`X Xᵀ` or
//! `Xᵀ X`). Gram matrices of moderate size are diagonalised completely;
//! larger ones go through block subspace iteration with Rayleigh–Ritz.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::dot;
use super::eigen::symmetric_eigen;
use crate::error::{Error, Result};

/// `X ≈ U diag(s) Vᵀ` with `U` (`rows × n`) and `V` (`cols × n`) stored
/// row-major and `s` non-increasing.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    pub rows: usize,
    pub cols: usize,
    pub rank: usize,
    pub u: Vec<f64>,
    pub s: Vec<f64>,
    pub v: Vec<f64>,
}

/// Gram matrices up to this size are diagonalised completely.
const DIRECT_LIMIT: usize = 1500;
const MAX_SUBSPACE_ITERS: usize = 2000;

pub fn truncated_svd(x: &[f64], rows: usize, cols: usize, n: usize) -> Result<TruncatedSvd> {
    truncated_svd_with_limit(x, rows, cols, n, DIRECT_LIMIT)
}

fn truncated_svd_with_limit(
    x: &[f64],
    rows: usize,
    cols: usize,
    n: usize,
    direct_limit: usize,
) -> Result<TruncatedSvd> {
    if x.len() != rows * cols {
        return Err(Error::DimensionMismatch {
            expected: rows * cols,
            actual: x.len(),
        });
    }
    if n == 0 || n > rows.min(cols) {
        return Err(Error::Config(format!(
            "cannot keep {n} singular values of a {rows}×{cols} matrix"
        )));
    }
    let wide = rows <= cols;
    let p = if wide { rows } else { cols };
    let gram = if wide { gram_rows(x, rows, cols) } else { gram_cols(x, rows, cols) };
    let (values, vectors) = top_eigenpairs(&gram, p, n, direct_limit)?;

    let s: Vec<f64> = values.iter().map(|&l| l.max(0.0).sqrt()).collect();
    let floor = s[0] * 1e-12;
    // vectors: p × n row-major, eigenvectors in columns
    let (mut u, mut v) = (vec![0.0; rows * n], vec![0.0; cols * n]);
    if wide {
        u.copy_from_slice(&vectors);
        // V = Xᵀ U Σ⁻¹
        for j in 0..n {
            if s[j] <= floor {
                continue;
            }
            for r in 0..rows {
                let coef = u[r * n + j] / s[j];
                let xr = &x[r * cols..(r + 1) * cols];
                for c in 0..cols {
                    v[c * n + j] += coef * xr[c];
                }
            }
        }
        complete_orthonormal(&mut v, cols, n, &s, floor);
    } else {
        v.copy_from_slice(&vectors);
        // U = X V Σ⁻¹
        for r in 0..rows {
            let xr = &x[r * cols..(r + 1) * cols];
            for j in 0..n {
                if s[j] <= floor {
                    continue;
                }
                let mut acc = 0.0;
                for c in 0..cols {
                    acc += xr[c] * v[c * n + j];
                }
                u[r * n + j] = acc / s[j];
            }
        }
        complete_orthonormal(&mut u, rows, n, &s, floor);
    }
    Ok(TruncatedSvd {
        rows,
        cols,
        rank: n,
        u,
        s,
        v,
    })
}

/// Fills columns belonging to (numerically) zero singular values with unit
/// vectors orthogonal to the others, so the factor stays orthonormal.
fn complete_orthonormal(m: &mut [f64], len: usize, n: usize, s: &[f64], floor: f64) {
    for j in 0..n {
        if s[j] > floor {
            continue;
        }
        for e in 0..len {
            let mut col = vec![0.0; len];
            col[e] = 1.0;
            for other in 0..n {
                if other == j || (s[other] <= floor && other > j) {
                    continue;
                }
                let proj: f64 = (0..len).map(|r| m[r * n + other] * col[r]).sum();
                for r in 0..len {
                    col[r] -= proj * m[r * n + other];
                }
            }
            let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.5 {
                for r in 0..len {
                    m[r * n + j] = col[r] / norm;
                }
                break;
            }
        }
    }
}

fn gram_rows(x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let upper: Vec<Vec<f64>> = (0..rows)
        .into_par_iter()
        .map(|i| {
            let xi = &x[i * cols..(i + 1) * cols];
            (i..rows)
                .map(|j| dot(xi, &x[j * cols..(j + 1) * cols]))
                .collect()
        })
        .collect();
    symmetric_from_upper(upper, rows)
}

fn gram_cols(x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut g = vec![0.0; cols * cols];
    for r in 0..rows {
        let xr = &x[r * cols..(r + 1) * cols];
        for i in 0..cols {
            let a = xr[i];
            if a == 0.0 {
                continue;
            }
            let gi = &mut g[i * cols..(i + 1) * cols];
            for j in i..cols {
                gi[j] += a * xr[j];
            }
        }
    }
    for i in 0..cols {
        for j in 0..i {
            g[i * cols + j] = g[j * cols + i];
        }
    }
    g
}

fn symmetric_from_upper(upper: Vec<Vec<f64>>, p: usize) -> Vec<f64> {
    let mut g = vec![0.0; p * p];
    for (i, row) in upper.into_iter().enumerate() {
        for (off, v) in row.into_iter().enumerate() {
            let j = i + off;
            g[i * p + j] = v;
            g[j * p + i] = v;
        }
    }
    g
}

/// Top `n` eigenpairs of a symmetric `p × p` matrix. Returns values in
/// descending order and a `p × n` row-major matrix of eigenvectors.
fn top_eigenpairs(g: &[f64], p: usize, n: usize, direct_limit: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if p <= direct_limit {
        let (values, vectors) = symmetric_eigen(g, p)?;
        return Ok(select_top(&values, &vectors, p, p, n));
    }
    subspace_iteration(g, p, n)
}

fn select_top(values: &[f64], vectors: &[f64], p: usize, width: usize, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut out_vals = Vec::with_capacity(n);
    let mut out_vecs = vec![0.0; p * n];
    for (j, &src) in idx.iter().take(n).enumerate() {
        out_vals.push(values[src]);
        let mut col: Vec<f64> = (0..p).map(|r| vectors[r * width + src]).collect();
        canonical_sign(&mut col);
        for r in 0..p {
            out_vecs[r * n + j] = col[r];
        }
    }
    (out_vals, out_vecs)
}

/// Makes the largest-magnitude entry positive so results do not depend on
/// the sign the solver happened to produce.
fn canonical_sign(col: &mut [f64]) {
    let mut best = 0;
    for (i, v) in col.iter().enumerate() {
        if v.abs() > col[best].abs() + 1e-14 {
            best = i;
        }
    }
    if col.get(best).is_some_and(|&v| v < 0.0) {
        col.iter_mut().for_each(|v| *v = -*v);
    }
}

/// Modified Gram–Schmidt on the columns of a `p × b` row-major matrix,
/// applied twice for stability.
fn orthonormalize(q: &mut [f64], p: usize, b: usize) {
    for _ in 0..2 {
        for j in 0..b {
            for k in 0..j {
                let proj: f64 = (0..p).map(|r| q[r * b + j] * q[r * b + k]).sum();
                for r in 0..p {
                    q[r * b + j] -= proj * q[r * b + k];
                }
            }
            let norm = (0..p).map(|r| q[r * b + j] * q[r * b + j]).sum::<f64>().sqrt();
            if norm > 0.0 {
                for r in 0..p {
                    q[r * b + j] /= norm;
                }
            }
        }
    }
}

/// `G Q` for symmetric `G` (`p × p`) and `Q` (`p × b`).
fn sym_mul(g: &[f64], q: &[f64], p: usize, b: usize) -> Vec<f64> {
    let rows: Vec<Vec<f64>> = (0..p)
        .into_par_iter()
        .map(|i| {
            let gi = &g[i * p..(i + 1) * p];
            let mut out = vec![0.0; b];
            for (k, &gik) in gi.iter().enumerate() {
                if gik == 0.0 {
                    continue;
                }
                let qk = &q[k * b..(k + 1) * b];
                for (o, &qv) in out.iter_mut().zip(qk) {
                    *o += gik * qv;
                }
            }
            out
        })
        .collect();
    rows.concat()
}

fn subspace_iteration(g: &[f64], p: usize, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let b = (n + n.max(10)).min(p);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_5eed);
    let mut q: Vec<f64> = (0..p * b).map(|_| rng.random::<f64>() - 0.5).collect();
    orthonormalize(&mut q, p, b);
    let trace: f64 = (0..p).map(|i| g[i * p + i]).sum();

    for _ in 0..MAX_SUBSPACE_ITERS {
        let mut z = sym_mul(g, &q, p, b);
        orthonormalize(&mut z, p, b);
        q = z;
        // Rayleigh–Ritz
        let gq = sym_mul(g, &q, p, b);
        let mut h = vec![0.0; b * b];
        for i in 0..b {
            for j in 0..b {
                h[i * b + j] = (0..p).map(|r| q[r * b + i] * gq[r * b + j]).sum();
            }
        }
        for i in 0..b {
            for j in 0..i {
                let avg = 0.5 * (h[i * b + j] + h[j * b + i]);
                h[i * b + j] = avg;
                h[j * b + i] = avg;
            }
        }
        let (theta, w) = symmetric_eigen(&h, b)?;
        let mut order: Vec<usize> = (0..b).collect();
        order.sort_by(|&x, &y| theta[y].total_cmp(&theta[x]).then(x.cmp(&y)));
        let mut rotated = vec![0.0; p * b];
        let mut g_rotated = vec![0.0; p * b];
        for r in 0..p {
            for (j, &src) in order.iter().enumerate() {
                let mut acc = 0.0;
                let mut gacc = 0.0;
                for k in 0..b {
                    acc += q[r * b + k] * w[k * b + src];
                    gacc += gq[r * b + k] * w[k * b + src];
                }
                rotated[r * b + j] = acc;
                g_rotated[r * b + j] = gacc;
            }
        }
        q = rotated;
        let values: Vec<f64> = order.iter().map(|&i| theta[i]).collect();
        let tol = 1e-13 * values[0].abs().max(trace * 1e-300);
        let converged = (0..n).all(|j| {
            let res: f64 = (0..p)
                .map(|r| {
                    let d = g_rotated[r * b + j] - values[j] * q[r * b + j];
                    d * d
                })
                .sum::<f64>()
                .sqrt();
            res <= tol.max(1e-300)
        });
        if converged {
            return Ok(select_top(&values, &q, p, b, n));
        }
    }
    Err(Error::Numerical(format!(
        "subspace iteration did not converge in {MAX_SUBSPACE_ITERS} iterations"
    )))
}
