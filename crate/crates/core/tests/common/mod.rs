#![allow(dead_code)]

use dara::numerics::{Matrix, Tape, Var};
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Builds a scalar loss on a fresh tape from parameter values; returns the
/// tape, the loss node and the parameter nodes.
pub type Build<'a> = dyn Fn(&[Matrix]) -> (Tape, Var, Vec<Var>) + 'a;

/// Worst entrywise relative error between autodiff and central differences,
/// `|a - n| / max(|a|, |n|, 1e-6)`. Panics if every gradient is zero, so a
/// disconnected graph cannot pass.
pub fn gradient_error(build: &Build<'_>, params: &[Matrix], h: f64) -> f64 {
    let (tape, loss, vars) = build(params);
    let grads = tape.backward(loss).unwrap();
    let mut worst: f64 = 0.0;
    let mut largest: f64 = 0.0;
    for (p, var) in vars.iter().enumerate() {
        let analytic = grads.get_or_zeros(*var);
        largest = largest.max(analytic.max_abs());
        for idx in 0..params[p].data().len() {
            let eval = |delta: f64| {
                let mut shifted = params.to_vec();
                shifted[p].data_mut()[idx] += delta;
                let (t, l, _) = build(&shifted);
                t.value(l).item()
            };
            let numeric = (eval(h) - eval(-h)) / (2.0 * h);
            let a = analytic.data()[idx];
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
        }
    }
    assert!(largest > 0.0, "all gradients vanish");
    worst
}

// Independent oracles on plain row-major vectors; nothing below touches the
// engine's tape, solver or backbone.

pub type Dense = Vec<Vec<f64>>;

pub fn dense(m: &Matrix) -> Dense {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

pub fn mm(a: &Dense, b: &Dense) -> Dense {
    let (n, k, p) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; p]; n];
    for i in 0..n {
        for t in 0..k {
            let x = a[i][t];
            for j in 0..p {
                out[i][j] += x * b[t][j];
            }
        }
    }
    out
}

pub fn tr(a: &Dense) -> Dense {
    (0..a[0].len()).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

pub fn fro_sq(a: &Dense) -> f64 {
    a.iter().flatten().map(|v| v * v).sum()
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(a: &Dense, b: &Dense) -> Dense {
    let n = a.len();
    let mut a = a.clone();
    let mut b = b.clone();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for j in col..n {
                a[row][j] -= f * a[col][j];
            }
            for j in 0..b[0].len() {
                b[row][j] -= f * b[col][j];
            }
        }
    }
    let mut x = vec![vec![0.0; b[0].len()]; n];
    for row in (0..n).rev() {
        for j in 0..b[0].len() {
            let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k][j]).sum();
            x[row][j] = (b[row][j] - s) / a[row][row];
        }
    }
    x
}

/// Ridge reconstruction on the channel side: `Q (P^T P + lambda I)^-1 P^T P`.
pub fn ridge_channel_side(pool: &Dense, query: &Dense, lambda: f64) -> Dense {
    let ptp = mm(&tr(pool), pool);
    let mut reg = ptp.clone();
    for (i, row) in reg.iter_mut().enumerate() {
        row[i] += lambda;
    }
    mm(query, &gauss_solve(&reg, &ptp))
}

/// Minimizes `||Q - W P||^2 + lambda ||W||^2` over `W` by accelerated
/// gradient descent and returns `W P`.
pub fn ridge_by_descent(pool: &Dense, query: &Dense, lambda: f64) -> Dense {
    let (m, n) = (query.len(), pool.len());
    let gram = mm(pool, &tr(pool));
    let qpt = mm(query, &tr(pool));
    // largest eigenvalue of the Gram matrix by power iteration
    let mut v = vec![1.0; n];
    let mut top = 0.0;
    for _ in 0..500 {
        let w: Vec<f64> = gram.iter().map(|r| r.iter().zip(&v).map(|(a, b)| a * b).sum()).collect();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        top = norm;
        v = w.iter().map(|x| x / norm).collect();
    }
    let l = 2.0 * (1.01 * top + lambda);
    let mu = 2.0 * lambda;
    let kappa = l / mu;
    let momentum = (kappa.sqrt() - 1.0) / (kappa.sqrt() + 1.0);
    let iters = (kappa.sqrt() * 40.0) as usize + 200;
    let mut w = vec![vec![0.0; n]; m];
    let mut y = w.clone();
    for _ in 0..iters {
        // grad = 2 (y G - Q P^T) + 2 lambda y
        let yg = mm(&y, &gram);
        let mut next = y.clone();
        for i in 0..m {
            for j in 0..n {
                let g = 2.0 * (yg[i][j] - qpt[i][j]) + 2.0 * lambda * y[i][j];
                next[i][j] = y[i][j] - g / l;
            }
        }
        for i in 0..m {
            for j in 0..n {
                y[i][j] = next[i][j] + momentum * (next[i][j] - w[i][j]);
            }
        }
        w = next;
    }
    mm(&w, pool)
}

pub fn max_abs_diff(a: &Dense, b: &Dense) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Per-cell MLP with ReLU after every layer.
pub fn mlp(layers: &[(Dense, Vec<f64>)], item: &Dense) -> Dense {
    let mut h = item.clone();
    for (w, b) in layers {
        h = mm(&h, w)
            .into_iter()
            .map(|row| row.iter().zip(b).map(|(x, c)| (x + c).max(0.0)).collect())
            .collect();
    }
    h
}

/// Nearest-reconstruction classifier over raw support/query items with no
/// recalibration, alignment or finetuning. Returns `(distances, predictions)`.
pub fn nearest_reconstruction(
    backbone: &dara::backbone::BackboneParams,
    support: &[Vec<Matrix>],
    queries: &[Matrix],
    beta: f64,
) -> (Vec<Vec<f64>>, Vec<usize>) {
    let layers: Vec<(Dense, Vec<f64>)> = backbone
        .layers
        .iter()
        .map(|l| (dense(&l.weight), l.bias.data().to_vec()))
        .collect();
    let pools: Vec<Dense> = support
        .iter()
        .map(|class| class.iter().flat_map(|m| mlp(&layers, &dense(m))).collect())
        .collect();
    let r = queries[0].rows();
    let c = pools[0][0].len();
    let k = support[0].len();
    let lambda = (k * r) as f64 / c as f64 * beta;
    let mut dists = Vec::new();
    let mut preds = Vec::new();
    for q in queries {
        let qf = mlp(&layers, &dense(q));
        let d: Vec<f64> = pools
            .iter()
            .map(|p| {
                let rec = ridge_channel_side(p, &qf, lambda);
                rec.iter().flatten().zip(qf.iter().flatten()).map(|(a, b)| (a - b).powi(2)).sum()
            })
            .collect();
        let mut best = 0;
        for (i, v) in d.iter().enumerate() {
            if *v < d[best] {
                best = i;
            }
        }
        preds.push(best);
        dists.push(d);
    }
    (dists, preds)
}

/// A ridge instance within the oracle limits: `K*R <= 20`, `C <= 16`.
pub fn ridge_instance(rng: &mut ChaCha8Rng) -> (Matrix, Matrix, f64) {
    let r = rng.random_range(1..=5usize);
    let k = rng.random_range(1..=20 / r);
    let c = rng.random_range(2..=16usize);
    let lambda = [0.1, 1.0, 10.0][rng.random_range(0..3usize)];
    (random(k * r, c, rng), random(r, c, rng), lambda)
}
