//! Restarted GMRES with right preconditioning.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KrylovConfig {
    /// Total inner iterations allowed across restarts.
    pub max_iter: usize,
    /// Relative reduction of the linear residual asked of each solve.
    pub tol: f64,
    pub restart: usize,
}

impl Default for KrylovConfig {
    fn default() -> Self {
        Self { max_iter: 300, tol: 1e-4, restart: 60 }
    }
}

#[derive(Clone, Debug)]
pub struct GmresOutcome {
    pub x: Vec<f64>,
    /// Euclidean norm of `b − A x`.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `A x = b` starting from `x = 0`, with `x = M y` for the
/// preconditioner `M`; stops when `‖b − Ax‖ ≤ tol_abs` (Euclidean).
pub fn gmres(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    precond: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    tol_abs: f64,
    restart: usize,
    max_iter: usize,
) -> GmresOutcome {
    let n = b.len();
    let restart = restart.max(1);
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut beta = norm(&r);
    let mut iterations = 0;
    while beta > tol_abs && iterations < max_iter {
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|x| x / beta).collect()];
        let mut zs: Vec<Vec<f64>> = Vec::new();
        let mut h: Vec<Vec<f64>> = Vec::new();
        let mut cs: Vec<f64> = Vec::new();
        let mut sn: Vec<f64> = Vec::new();
        let mut g = vec![beta];
        let mut res = beta;
        for j in 0..restart {
            if iterations >= max_iter {
                break;
            }
            iterations += 1;
            let z = precond(&v[j]);
            let mut w = apply(&z);
            zs.push(z);
            let mut col = vec![0.0; j + 2];
            for (i, vi) in v.iter().enumerate() {
                let hij = dot(&w, vi);
                col[i] = hij;
                w.iter_mut().zip(vi).for_each(|(a, b)| *a -= hij * b);
            }
            // One reorthogonalization pass keeps the basis clean.
            for (i, vi) in v.iter().enumerate() {
                let c = dot(&w, vi);
                col[i] += c;
                w.iter_mut().zip(vi).for_each(|(a, b)| *a -= c * b);
            }
            let hn = norm(&w);
            col[j + 1] = hn;
            for i in 0..j {
                let (a, bb) = (col[i], col[i + 1]);
                col[i] = cs[i] * a + sn[i] * bb;
                col[i + 1] = -sn[i] * a + cs[i] * bb;
            }
            let denom = col[j].hypot(col[j + 1]);
            let (c, s) = if denom == 0.0 { (1.0, 0.0) } else { (col[j] / denom, col[j + 1] / denom) };
            col[j] = denom;
            col[j + 1] = 0.0;
            cs.push(c);
            sn.push(s);
            let gj = g[j];
            g[j] = c * gj;
            g.push(-s * gj);
            res = g[j + 1].abs();
            h.push(col);
            if res <= tol_abs || hn <= 1e-14 * beta {
                break;
            }
            v.push(w.iter().map(|x| x / hn).collect());
        }
        let k = h.len();
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut acc = g[i];
            for (jj, yj) in y.iter().enumerate().take(k).skip(i + 1) {
                acc -= h[jj][i] * yj;
            }
            y[i] = if h[i][i] == 0.0 { 0.0 } else { acc / h[i][i] };
        }
        for (yi, zi) in y.iter().zip(&zs) {
            x.iter_mut().zip(zi).for_each(|(a, b)| *a += yi * b);
        }
        let ax = apply(&x);
        r = b.iter().zip(&ax).map(|(a, b)| a - b).collect();
        let true_res = norm(&r);
        let stalled = true_res >= beta * (1.0 - 1e-12);
        beta = true_res;
        if stalled || res <= tol_abs {
            break;
        }
    }
    GmresOutcome { converged: beta <= tol_abs, x, residual: beta, iterations }
}
