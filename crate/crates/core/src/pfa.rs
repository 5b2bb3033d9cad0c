//! Prototypical feature alignment.
//!
//! Support maps of one class are reweighted by their mean cosine similarity
//! to the other same-class maps, stacked into a pool `P`, and a query map `Q`
//! is reconstructed from the pool by ridge regression:
//!
//! ```text
//! recon = Q P^T (P P^T + lambda I)^{-1} P
//! ```
//!
//! The Gram system `(P P^T + lambda I)` is always the one solved, through a
//! Cholesky factorization. Class scores are a softmax over
//! `-(gamma / R) * ||recon - Q||_F^2`.
//!
//! Every operation has a tape form (used in training) and a plain form that
//! evaluates the tape form with constant inputs.

use crate::error::{DaraError, Result};
use crate::numerics::{Axis, Matrix, Tape, Var};

const ZERO_NORM: f64 = 1e-12;

/// Ridge strength `lambda = (K * R / C) * beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReprojectionConfig {
    pub beta: f64,
}

impl Default for ReprojectionConfig {
    fn default() -> Self {
        ReprojectionConfig { beta: 1.0 }
    }
}

impl ReprojectionConfig {
    /// `shots` is the number of maps stacked in the pool.
    pub fn lambda(&self, shots: usize, spatial: usize, channels: usize) -> f64 {
        (shots * spatial) as f64 / channels as f64 * self.beta
    }
}

/// How support maps become a regression pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PoolMode {
    /// All weighted maps stacked: `(K * R) x C`.
    #[default]
    Stacked,
    /// Weighted mean map: `R x C`.
    Pooled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RecalibrationOptions {
    /// Skip reweighting entirely (all weights 1).
    pub disabled: bool,
    /// Clamp negative weights to zero.
    pub clamp_negative: bool,
}

/// Result of recalibrating one class.
#[derive(Debug, Clone, PartialEq)]
pub struct Recalibration {
    pub weights: Vec<f64>,
    /// Stacked weighted maps, `(K * R) x C`.
    pub pool: Matrix,
    /// `(1/K) * sum_k A_k F_k`, `R x C`.
    pub prototype: Matrix,
}

/// Tape form of [`Recalibration`].
#[derive(Debug, Clone)]
pub struct RecalibrationVars {
    pub weights: Vec<Var>,
    pub pool: Var,
    pub prototype: Var,
}

impl RecalibrationVars {
    pub fn pool_for(&self, mode: PoolMode) -> Var {
        match mode {
            PoolMode::Stacked => self.pool,
            PoolMode::Pooled => self.prototype,
        }
    }
}

pub fn recalibrate_vars(
    tape: &mut Tape,
    features: &[Var],
    opts: RecalibrationOptions,
) -> Result<RecalibrationVars> {
    let k = features.len();
    if k == 0 {
        return Err(DaraError::InvalidSpec("recalibration needs at least one map".into()));
    }
    for (i, f) in features.iter().enumerate() {
        if tape.value(*f).frobenius_sq().sqrt() < ZERO_NORM {
            return Err(DaraError::ZeroNormFeature { index: i });
        }
    }
    let weights: Vec<Var> = if opts.disabled || k == 1 {
        (0..k).map(|_| tape.constant(Matrix::scalar(1.0))).collect()
    } else {
        let mut cos = vec![vec![None; k]; k];
        for i in 0..k {
            for j in i + 1..k {
                let c = tape.cosine(features[i], features[j])?;
                cos[i][j] = Some(c);
                cos[j][i] = Some(c);
            }
        }
        let mut out = Vec::with_capacity(k);
        for row in &cos {
            let terms: Vec<Var> = row.iter().flatten().copied().collect();
            let stacked = tape.vstack(&terms)?;
            let mut a = tape.mean_over(stacked, Axis::All);
            if opts.clamp_negative {
                a = tape.relu(a);
            }
            out.push(a);
        }
        out
    };
    let weighted: Vec<Var> = features
        .iter()
        .zip(&weights)
        .map(|(f, a)| tape.scale_by(*f, *a))
        .collect::<Result<_>>()?;
    let pool = tape.vstack(&weighted)?;
    let mut sum = weighted[0];
    for w in &weighted[1..] {
        sum = tape.add(sum, *w)?;
    }
    let prototype = tape.scale(sum, 1.0 / k as f64);
    Ok(RecalibrationVars {
        weights,
        pool,
        prototype,
    })
}

pub fn recalibrate(features: &[Matrix], opts: RecalibrationOptions) -> Result<Recalibration> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = features.iter().map(|f| tape.constant(f.clone())).collect();
    let r = recalibrate_vars(&mut tape, &vars, opts)?;
    Ok(Recalibration {
        weights: r.weights.iter().map(|w| tape.value(*w).item()).collect(),
        pool: tape.value(r.pool).clone(),
        prototype: tape.value(r.prototype).clone(),
    })
}

/// Ridge reconstruction of `query` (any number of rows) from `pool`.
pub fn ridge_reconstruct_var(tape: &mut Tape, pool: Var, query: Var, lambda: f64) -> Result<Var> {
    if pool.cols() != query.cols() {
        return Err(DaraError::shape("ridge_reconstruct", pool.shape(), query.shape()));
    }
    let pool_t = tape.transpose(pool);
    let gram = tape.matmul(pool, pool_t)?;
    let gram = if lambda != 0.0 {
        let reg = tape.constant(Matrix::identity(pool.rows()).scale(lambda));
        tape.add(gram, reg)?
    } else {
        gram
    };
    let solved = tape.solve_through(gram, pool)?;
    let projector = tape.matmul(pool_t, solved)?;
    tape.matmul(query, projector)
}

pub fn ridge_reconstruct(pool: &Matrix, query: &Matrix, lambda: f64) -> Result<Matrix> {
    let mut tape = Tape::new();
    let p = tape.constant(pool.clone());
    let q = tape.constant(query.clone());
    let r = ridge_reconstruct_var(&mut tape, p, q, lambda)?;
    Ok(tape.value(r).clone())
}

/// Learnable temperature, stored as `ln(gamma)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementParams {
    pub log_gamma: f64,
    pub spatial: usize,
}

impl MeasurementParams {
    /// Starts at `gamma / R = 1`.
    pub fn new(spatial: usize) -> Self {
        MeasurementParams {
            log_gamma: (spatial as f64).ln(),
            spatial,
        }
    }

    pub fn gamma(&self) -> f64 {
        self.log_gamma.exp()
    }

    pub fn gamma_over_r(&self) -> f64 {
        self.gamma() / self.spatial as f64
    }
}

/// Softmax over `-(gamma/R) * d_i`.
pub fn probabilities_from_distances(distances: &[f64], gamma_over_r: f64) -> Vec<f64> {
    let logits: Vec<f64> = distances.iter().map(|d| -gamma_over_r * d).collect();
    let m = crate::numerics::row_softmax(&Matrix::row_vector(&logits));
    m.into_vec()
}

/// Class probabilities of `query` given one reconstruction per class.
pub fn measure(reconstructions: &[Matrix], query: &Matrix, params: &MeasurementParams) -> Result<Vec<f64>> {
    let distances = reconstructions
        .iter()
        .map(|r| Ok(r.sub(query)?.frobenius_sq()))
        .collect::<Result<Vec<f64>>>()?;
    Ok(probabilities_from_distances(&distances, params.gamma_over_r()))
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Index of the smallest entry; ties go to the lowest index.
pub fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// Sums each consecutive `block` rows of a column: `(M*block) x 1 -> M x 1`.
fn block_aggregator(blocks: usize, block: usize) -> Matrix {
    Matrix::from_fn(blocks, blocks * block, |i, j| if j / block == i { 1.0 } else { 0.0 })
}

/// Squared reconstruction distance of every query to every class.
///
/// `queries` stacks `M` maps of `R` rows. Returns an `M x N` node.
pub fn class_distances(
    tape: &mut Tape,
    pools: &[Var],
    queries: Var,
    spatial: usize,
    lambda: f64,
) -> Result<Var> {
    if queries.rows() % spatial != 0 {
        return Err(DaraError::shape("class_distances", queries.shape(), (spatial, queries.cols())));
    }
    let m = queries.rows() / spatial;
    let agg = tape.constant(block_aggregator(m, spatial));
    let ones = tape.constant(Matrix::filled(queries.cols(), 1, 1.0));
    let mut columns = Vec::with_capacity(pools.len());
    for &pool in pools {
        let recon = ridge_reconstruct_var(tape, pool, queries, lambda)?;
        let diff = tape.sub(recon, queries)?;
        let sq = tape.mul(diff, diff)?;
        let per_block = tape.matmul(agg, sq)?;
        columns.push(tape.matmul(per_block, ones)?);
    }
    tape.hstack(&columns)
}

/// `-(exp(log_gamma) / R) * distances`.
pub fn logits_from_distances(tape: &mut Tape, distances: Var, log_gamma: Var, spatial: usize) -> Result<Var> {
    let gamma = tape.exp(log_gamma);
    let factor = tape.scale(gamma, -1.0 / spatial as f64);
    tape.scale_by(distances, factor)
}

/// Mean cross-entropy of row-wise softmax(logits) at `labels`.
pub fn cross_entropy(tape: &mut Tape, logits: Var, labels: &[usize]) -> Result<Var> {
    if labels.len() != logits.rows() {
        return Err(DaraError::shape("cross_entropy", logits.shape(), (labels.len(), 1)));
    }
    let logp = tape.row_log_softmax(logits);
    let mask = Matrix::from_fn(logits.rows(), logits.cols(), |i, j| if labels[i] == j { 1.0 } else { 0.0 });
    let mask = tape.constant(mask);
    let picked = tape.mul(logp, mask)?;
    let total = tape.sum(picked);
    Ok(tape.scale(total, -1.0 / labels.len() as f64))
}

/// Learnable per-class reprojection matrices `Z_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassReprojection {
    pub z: Vec<Matrix>,
}

impl ClassReprojection {
    pub fn ways(&self) -> usize {
        self.z.len()
    }

    /// Number of maps the pools stand for (`rows / R`).
    pub fn shots(&self, spatial: usize) -> usize {
        self.z.first().map_or(0, |z| z.rows() / spatial)
    }
}

/// Copies each class's recalibrated pool into a trainable `Z_n`.
pub fn init_reprojection(pools: &[Matrix]) -> ClassReprojection {
    ClassReprojection { z: pools.to_vec() }
}
