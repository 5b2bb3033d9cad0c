//! Normalized distribution alignment.
//!
//! Support maps are re-normalized with statistics taken from a reference
//! batch (by default the query set), in a batch-statistics branch and an
//! instance-statistics branch, and the two branches are fused by a gate
//! `tau` in `(0, 1)`:
//!
//! ```text
//! bn  = (F - mu_bn(ref)) / sqrt(var_bn(ref) + eps)
//! in  = (F - mu_in(ref)) / sqrt(var_in(ref) + eps)
//! out = (1 - tau) * bn + tau * in
//! ```
//!
//! Support maps have no partner in the reference batch, so their instance
//! branch uses the reference batch's average instance statistics. Query maps
//! use their own instance statistics. No affine re-scaling follows.

use crate::error::{DaraError, Result};
use crate::numerics::{mean_over, sigmoid, Axis, Matrix, Tape, Var};

pub const DEFAULT_EPS: f64 = 1e-5;

/// Per-channel population mean and variance over every row of every map.
pub fn bn_stats(batch: &[Matrix]) -> Result<(Matrix, Matrix)> {
    let parts: Vec<&Matrix> = batch.iter().collect();
    let stacked = Matrix::vstack(&parts)?;
    Ok(column_stats(&stacked))
}

/// Per-channel mean and variance over the spatial rows of one map.
pub fn in_stats(item: &Matrix) -> (Matrix, Matrix) {
    column_stats(item)
}

fn column_stats(m: &Matrix) -> (Matrix, Matrix) {
    let mean = mean_over(m, Axis::Rows);
    let mut centered = m.clone();
    for i in 0..centered.rows() {
        for (v, mu) in centered.row_mut(i).iter_mut().zip(mean.data()) {
            *v -= mu;
        }
    }
    let var = mean_over(&centered.hadamard(&centered).expect("same shape"), Axis::Rows);
    (mean, var)
}

/// Reference statistics extracted from a query batch.
#[derive(Debug, Clone, PartialEq)]
pub struct TanStats {
    pub bn_mean: Matrix,
    pub bn_var: Matrix,
    /// One row per reference map.
    pub in_mean: Matrix,
    pub in_var: Matrix,
    pub eps: f64,
}

impl TanStats {
    pub fn from_batch(batch: &[Matrix], eps: f64) -> Result<Self> {
        let (bn_mean, bn_var) = bn_stats(batch)?;
        let mut means = Vec::with_capacity(batch.len());
        let mut vars = Vec::with_capacity(batch.len());
        for item in batch {
            let (m, v) = in_stats(item);
            means.push(m);
            vars.push(v);
        }
        let mr: Vec<&Matrix> = means.iter().collect();
        let vr: Vec<&Matrix> = vars.iter().collect();
        Ok(TanStats {
            bn_mean,
            bn_var,
            in_mean: Matrix::vstack(&mr)?,
            in_var: Matrix::vstack(&vr)?,
            eps,
        })
    }

    pub fn channels(&self) -> usize {
        self.bn_mean.cols()
    }
}

/// Tape form of the statistics used by one alignment.
#[derive(Debug, Clone, Copy)]
pub struct StatsVars {
    pub bn_mean: Var,
    pub bn_var: Var,
    /// Average of the per-map instance means.
    pub in_mean: Var,
    pub in_var: Var,
}

fn column_stats_var(tape: &mut Tape, x: Var) -> Result<(Var, Var)> {
    let mean = tape.mean_over(x, Axis::Rows);
    let neg = tape.scale(mean, -1.0);
    let centered = tape.add_row(x, neg)?;
    let sq = tape.mul(centered, centered)?;
    let var = tape.mean_over(sq, Axis::Rows);
    Ok((mean, var))
}

pub fn in_stats_var(tape: &mut Tape, item: Var) -> Result<(Var, Var)> {
    column_stats_var(tape, item)
}

/// Reference statistics over `batch` (each `R x C`).
pub fn stats_vars(tape: &mut Tape, batch: &[Var]) -> Result<StatsVars> {
    let stacked = tape.vstack(batch)?;
    let (bn_mean, bn_var) = column_stats_var(tape, stacked)?;
    let mut means = Vec::with_capacity(batch.len());
    let mut vars = Vec::with_capacity(batch.len());
    for &item in batch {
        let (m, v) = column_stats_var(tape, item)?;
        means.push(m);
        vars.push(v);
    }
    let means = tape.vstack(&means)?;
    let vars = tape.vstack(&vars)?;
    Ok(StatsVars {
        bn_mean,
        bn_var,
        in_mean: tape.mean_over(means, Axis::Rows),
        in_var: tape.mean_over(vars, Axis::Rows),
    })
}

/// `(x - mean) / sqrt(var + eps)` with `1 x C` statistics.
pub fn normalize_var(tape: &mut Tape, x: Var, mean: Var, var: Var, eps: f64) -> Result<Var> {
    if mean.cols() != x.cols() {
        return Err(DaraError::ChannelMismatch {
            expected: x.cols(),
            found: mean.cols(),
        });
    }
    let neg = tape.scale(mean, -1.0);
    let centered = tape.add_row(x, neg)?;
    let shifted = tape.add_scalar(var, eps);
    let inv = tape.powf(shifted, -0.5);
    tape.mul_row(centered, inv)
}

/// Both branches of support normalization against query statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct TanBranches {
    pub bn: Vec<Matrix>,
    pub inst: Vec<Matrix>,
}

/// Normalizes support maps by query statistics. The instance branch uses
/// the average of the query instance statistics.
pub fn tan_normalize(support: &[Matrix], stats: &TanStats) -> Result<TanBranches> {
    let c = stats.channels();
    if let Some(bad) = support.iter().find(|s| s.cols() != c) {
        return Err(DaraError::ChannelMismatch {
            expected: c,
            found: bad.cols(),
        });
    }
    let mut tape = Tape::new();
    let bn_mean = tape.constant(stats.bn_mean.clone());
    let bn_var = tape.constant(stats.bn_var.clone());
    let in_mean = tape.constant(mean_over(&stats.in_mean, Axis::Rows));
    let in_var = tape.constant(mean_over(&stats.in_var, Axis::Rows));
    let mut out = TanBranches {
        bn: Vec::with_capacity(support.len()),
        inst: Vec::with_capacity(support.len()),
    };
    for s in support {
        let x = tape.constant(s.clone());
        let b = normalize_var(&mut tape, x, bn_mean, bn_var, stats.eps)?;
        let i = normalize_var(&mut tape, x, in_mean, in_var, stats.eps)?;
        out.bn.push(tape.value(b).clone());
        out.inst.push(tape.value(i).clone());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GateMode {
    /// Constant `alpha` in `[0, 1]`.
    Fixed(f64),
    /// `sigmoid(w . pool(F) + b)`.
    Learnable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateParams {
    /// `1 x C`
    pub w: Matrix,
    pub b: f64,
    pub mode: GateMode,
}

impl GateParams {
    pub fn learnable(channels: usize) -> Self {
        GateParams {
            w: Matrix::zeros(1, channels),
            b: 0.0,
            mode: GateMode::Learnable,
        }
    }

    pub fn fixed(channels: usize, alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(DaraError::config("gate_alpha", format!("{alpha} is outside [0, 1]")));
        }
        Ok(GateParams {
            w: Matrix::zeros(1, channels),
            b: 0.0,
            mode: GateMode::Fixed(alpha),
        })
    }

    pub fn is_learnable(&self) -> bool {
        matches!(self.mode, GateMode::Learnable)
    }
}

/// Gate parameters registered on a tape.
#[derive(Debug, Clone, Copy)]
pub struct GateVars {
    pub w: Var,
    pub b: Var,
}

impl GateVars {
    pub fn register(tape: &mut Tape, params: &GateParams, trainable: bool) -> Self {
        let (w, b) = (params.w.clone(), Matrix::scalar(params.b));
        if trainable && params.is_learnable() {
            GateVars {
                w: tape.param(w),
                b: tape.param(b),
            }
        } else {
            GateVars {
                w: tape.constant(w),
                b: tape.constant(b),
            }
        }
    }
}

/// `tau` as a `1 x 1` node.
pub fn gate_var(tape: &mut Tape, features: Var, params: &GateParams, vars: GateVars) -> Result<Var> {
    match params.mode {
        GateMode::Fixed(alpha) => Ok(tape.constant(Matrix::scalar(alpha))),
        GateMode::Learnable => {
            if vars.w.cols() != features.cols() {
                return Err(DaraError::ChannelMismatch {
                    expected: features.cols(),
                    found: vars.w.cols(),
                });
            }
            let pooled = tape.mean_over(features, Axis::Rows);
            let wt = tape.transpose(vars.w);
            let z = tape.matmul(pooled, wt)?;
            let z = tape.add(z, vars.b)?;
            Ok(tape.sigmoid(z))
        }
    }
}

pub fn gate(features: &Matrix, params: &GateParams) -> Result<f64> {
    match params.mode {
        GateMode::Fixed(alpha) => Ok(alpha),
        GateMode::Learnable => {
            if params.w.cols() != features.cols() {
                return Err(DaraError::ChannelMismatch {
                    expected: features.cols(),
                    found: params.w.cols(),
                });
            }
            let pooled = mean_over(features, Axis::Rows);
            let z: f64 = pooled.data().iter().zip(params.w.data()).map(|(a, b)| a * b).sum();
            Ok(sigmoid(z + params.b))
        }
    }
}

/// `(1 - tau) * bn + tau * inst`.
pub fn fuse_var(tape: &mut Tape, bn: Var, inst: Var, tau: Var) -> Result<Var> {
    if bn.shape() != inst.shape() {
        return Err(DaraError::shape("fuse", bn.shape(), inst.shape()));
    }
    let neg = tape.scale(tau, -1.0);
    let one_minus = tape.add_scalar(neg, 1.0);
    let a = tape.scale_by(bn, one_minus)?;
    let b = tape.scale_by(inst, tau)?;
    tape.add(a, b)
}

pub fn fuse(bn: &Matrix, inst: &Matrix, tau: f64) -> Result<Matrix> {
    bn.zip_map(inst, "fuse", |b, i| (1.0 - tau) * b + tau * i)
}

/// How the two branches are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FusionVariant {
    /// Gated by [`GateParams`].
    #[default]
    Gated,
    /// Plain sum of both branches, no gate.
    Sum,
}

/// Where the reference statistics come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StatSource {
    /// Every query map.
    #[default]
    QueryAll,
    /// The support maps only; this is conventional normalization.
    Support,
    /// The support maps plus the first `n` query maps.
    SupportPlusQueries(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentConfig {
    pub source: StatSource,
    pub fusion: FusionVariant,
    pub eps: f64,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        AlignmentConfig {
            source: StatSource::QueryAll,
            fusion: FusionVariant::Gated,
            eps: DEFAULT_EPS,
        }
    }
}

/// Aligned support and query maps for one episode.
#[derive(Debug, Clone)]
pub struct AlignedVars {
    pub support: Vec<Var>,
    pub query: Vec<Var>,
    pub tau: Var,
}

/// Aligns support and query maps of one episode on the tape.
///
/// The gate is evaluated once on the mean support map. Support maps are
/// normalized with reference batch and reference-average instance
/// statistics; query maps with reference batch and their own instance
/// statistics.
pub fn align_vars(
    tape: &mut Tape,
    support: &[Var],
    query: &[Var],
    cfg: &AlignmentConfig,
    gate_params: &GateParams,
    gate_vars: GateVars,
) -> Result<AlignedVars> {
    let channels = support
        .first()
        .or(query.first())
        .map_or(0, |v| v.cols());
    if let Some(bad) = support.iter().chain(query).find(|v| v.cols() != channels) {
        return Err(DaraError::ChannelMismatch {
            expected: channels,
            found: bad.cols(),
        });
    }
    let reference: Vec<Var> = match cfg.source {
        StatSource::QueryAll => query.to_vec(),
        StatSource::Support => support.to_vec(),
        StatSource::SupportPlusQueries(n) => support
            .iter()
            .chain(query.iter().take(n))
            .copied()
            .collect(),
    };
    let stats = stats_vars(tape, &reference)?;

    let mut sum = support[0];
    for s in &support[1..] {
        sum = tape.add(sum, *s)?;
    }
    let mean_support = tape.scale(sum, 1.0 / support.len() as f64);
    let tau = gate_var(tape, mean_support, gate_params, gate_vars)?;

    let combine = |tape: &mut Tape, bn: Var, inst: Var| -> Result<Var> {
        match cfg.fusion {
            FusionVariant::Gated => fuse_var(tape, bn, inst, tau),
            FusionVariant::Sum => tape.add(bn, inst),
        }
    };

    let mut aligned_support = Vec::with_capacity(support.len());
    for &s in support {
        let bn = normalize_var(tape, s, stats.bn_mean, stats.bn_var, cfg.eps)?;
        let inst = normalize_var(tape, s, stats.in_mean, stats.in_var, cfg.eps)?;
        aligned_support.push(combine(tape, bn, inst)?);
    }
    let mut aligned_query = Vec::with_capacity(query.len());
    for &q in query {
        let bn = normalize_var(tape, q, stats.bn_mean, stats.bn_var, cfg.eps)?;
        let (m, v) = in_stats_var(tape, q)?;
        let inst = normalize_var(tape, q, m, v, cfg.eps)?;
        aligned_query.push(combine(tape, bn, inst)?);
    }
    Ok(AlignedVars {
        support: aligned_support,
        query: aligned_query,
        tau,
    })
}
