//! Deterministic full-batch L-BFGS with Armijo backtracking.

use super::dot;

#[derive(Debug, Clone, Copy)]
pub(crate) struct LbfgsParams {
    pub max_iter: usize,
    /// Stop when `‖g‖∞ ≤ tol · max(1, ‖g₀‖∞)`.
    pub tol: f64,
    pub memory: usize,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct OptimReport {
    pub iterations: usize,
    pub converged: bool,
    /// Objective after every accepted step, starting with the initial value.
    pub loss_history: Vec<f64>,
}

/// Minimizes `objective`, which returns the value at `x` and writes the
/// gradient into its second argument.
pub(crate) fn minimize<F>(mut objective: F, mut x: Vec<f64>, params: LbfgsParams) -> (Vec<f64>, OptimReport)
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x.len();
    let mut g = vec![0.0; n];
    let mut f = objective(&x, &mut g);
    let mut report = OptimReport {
        loss_history: vec![f],
        ..Default::default()
    };
    let g0 = inf_norm(&g);
    let threshold = params.tol * g0.max(1.0);
    if g0 <= threshold {
        report.converged = true;
        return (x, report);
    }

    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut rho_hist: Vec<f64> = Vec::new();
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];

    for iter in 0..params.max_iter {
        let mut d = two_loop(&g, &s_hist, &y_hist, &rho_hist);
        let mut slope = dot(&g, &d);
        if slope >= 0.0 {
            // not a descent direction; restart from steepest descent
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            d = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }
        let mut step = if s_hist.is_empty() {
            (1.0 / inf_norm(&g)).min(1.0)
        } else {
            1.0
        };

        let mut accepted = false;
        for _ in 0..50 {
            for i in 0..n {
                x_new[i] = x[i] + step * d[i];
            }
            let f_new = objective(&x_new, &mut g_new);
            if f_new.is_finite() && f_new <= f + 1e-4 * step * slope {
                let s: Vec<f64> = (0..n).map(|i| x_new[i] - x[i]).collect();
                let y: Vec<f64> = (0..n).map(|i| g_new[i] - g[i]).collect();
                let sy = dot(&s, &y);
                if sy > 1e-12 * dot(&y, &y).max(f64::MIN_POSITIVE) {
                    if s_hist.len() == params.memory {
                        s_hist.remove(0);
                        y_hist.remove(0);
                        rho_hist.remove(0);
                    }
                    s_hist.push(s);
                    y_hist.push(y);
                    rho_hist.push(1.0 / sy);
                }
                std::mem::swap(&mut x, &mut x_new);
                std::mem::swap(&mut g, &mut g_new);
                f = f_new;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        report.iterations = iter + 1;
        if !accepted {
            report.converged = inf_norm(&g) <= threshold;
            return (x, report);
        }
        report.loss_history.push(f);
        if inf_norm(&g) <= threshold {
            report.converged = true;
            return (x, report);
        }
    }
    (x, report)
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn two_loop(g: &[f64], s_hist: &[Vec<f64>], y_hist: &[Vec<f64>], rho: &[f64]) -> Vec<f64> {
    let mut q: Vec<f64> = g.to_vec();
    let m = s_hist.len();
    let mut alpha = vec![0.0; m];
    for i in (0..m).rev() {
        alpha[i] = rho[i] * dot(&s_hist[i], &q);
        for (qj, yj) in q.iter_mut().zip(&y_hist[i]) {
            *qj -= alpha[i] * yj;
        }
    }
    if let (Some(s), Some(y)) = (s_hist.last(), y_hist.last()) {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for i in 0..m {
        let beta = rho[i] * dot(&y_hist[i], &q);
        for (qj, sj) in q.iter_mut().zip(&s_hist[i]) {
            *qj += (alpha[i] - beta) * sj;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let (x, report) = minimize(
            |x, g| {
                let (a, b) = (x[0], x[1]);
                g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
                g[1] = 200.0 * (b - a * a);
                (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
            },
            vec![-1.2, 1.0],
            LbfgsParams {
                max_iter: 500,
                tol: 1e-10,
                memory: 10,
            },
        );
        assert!(report.converged);
        assert!((x[0] - 1.0).abs() < 1e-6 && (x[1] - 1.0).abs() < 1e-6);
        assert!(report.loss_history.windows(2).all(|w| w[1] <= w[0]));
    }
}
