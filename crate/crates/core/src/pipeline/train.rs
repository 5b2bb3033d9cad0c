use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use crate::backbone::{self, BackboneParams};
use crate::data::{pseudo_split, FeatureBank, PseudoSplit};
use crate::error::{DaraError, Result};
use crate::nda::{align_vars, GateParams, GateVars};
use crate::numerics::{Gradients, Matrix, Tape, Var};
use crate::pfa::{
    argmax, class_distances, cross_entropy, init_reprojection, logits_from_distances,
    recalibrate_vars, ClassReprojection, MeasurementParams,
};
use crate::pipeline::{Model, TrainConfig};
use crate::rng::{self, Rng};

/// Per-epoch training curve.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub loss: Vec<f64>,
    pub accuracy: Vec<f64>,
}

fn check_loss(tape: &Tape, loss: Var, what: &str, epoch: usize) -> Result<f64> {
    let v = tape.value(loss).item();
    if v.is_finite() {
        Ok(v)
    } else {
        Err(DaraError::DivergenceDetected(format!("{what} loss is {v} at epoch {epoch}")))
    }
}

fn step(target: &mut Matrix, var: Var, grads: &Gradients, lr: f64) {
    if lr == 0.0 {
        return;
    }
    if let Some(g) = grads.get(var) {
        target.axpy(-lr, g);
    }
}

fn step_scalar(target: &mut f64, var: Var, grads: &Gradients, lr: f64) {
    if lr == 0.0 {
        return;
    }
    if let Some(g) = grads.get(var) {
        *target -= lr * g.item();
    }
}

fn correct(tape: &Tape, logits: Var, labels: &[usize]) -> usize {
    let l = tape.value(logits);
    labels
        .iter()
        .enumerate()
        .filter(|(i, &y)| argmax(l.row(*i)) == y)
        .count()
}

/// Trains the backbone, base prototypes and temperature on the source bank.
pub fn pretrain_source(source: &FeatureBank, cfg: &TrainConfig) -> Result<(Model, TrainLog)> {
    if source.class_count() < 2 {
        return Err(DaraError::InvalidSpec(format!(
            "pretraining needs at least 2 source classes, got {}",
            source.class_count()
        )));
    }
    let r = source.spatial();
    let c = cfg.feature_channels;
    let mut init = rng::stream(cfg.seed, 0, rng::INIT);
    let backbone = BackboneParams::init(source.channels(), cfg.hidden, c, &mut init);
    let base: Vec<Matrix> = (0..source.class_count())
        .map(|_| Matrix::from_fn(r, c, |_, _| StandardNormal.sample(&mut init)))
        .collect();
    let mut model = Model {
        backbone,
        measure: MeasurementParams::new(r),
        gate: cfg.nda_variant.initial_gate(c),
        base,
    };
    let log = pretrain_from(&mut model, source, cfg)?;
    Ok((model, log))
}

/// Continues pretraining `model` in place for `cfg.pretrain_epochs`.
pub fn pretrain_from(model: &mut Model, source: &FeatureBank, cfg: &TrainConfig) -> Result<TrainLog> {
    let r = source.spatial();
    let c = model.backbone.out_channels();
    let lambda = cfg.reprojection().lambda(1, r, c);
    let lr = cfg.pretrain_lr;
    let labels: Vec<usize> = source.labels().iter().map(|&l| l as usize).collect();
    let mut rng = rng::stream(cfg.seed, 0, rng::PRETRAIN);
    let mut order: Vec<usize> = (0..source.len()).collect();
    let mut log = TrainLog::default();

    for epoch in 0..cfg.pretrain_epochs {
        order.shuffle(&mut rng);
        let (mut total, mut hits) = (0.0, 0);
        for batch in order.chunks(cfg.batch_size.max(1)) {
            let mut tape = Tape::new();
            let bv = model.backbone.register(&mut tape, true);
            let pv: Vec<Var> = model.base.iter().map(|p| tape.param(p.clone())).collect();
            let lg = tape.param(Matrix::scalar(model.measure.log_gamma));
            let items: Vec<&Matrix> = batch.iter().map(|&i| &source.items()[i]).collect();
            let x = tape.constant(Matrix::vstack(&items)?);
            let feats = backbone::forward(&mut tape, &bv, x)?;
            let d = class_distances(&mut tape, &pv, feats, r, lambda)?;
            let logits = logits_from_distances(&mut tape, d, lg, r)?;
            let y: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let loss = cross_entropy(&mut tape, logits, &y)?;
            total += check_loss(&tape, loss, "pretrain", epoch)? * batch.len() as f64;
            hits += correct(&tape, logits, &y);

            let grads = tape.backward(loss)?;
            if lr != 0.0 {
                model.backbone.sgd_step(&bv, &grads, lr);
            }
            for (p, v) in model.base.iter_mut().zip(&pv) {
                step(p, *v, &grads, lr);
            }
            step_scalar(&mut model.measure.log_gamma, lg, &grads, lr);
        }
        log.loss.push(total / source.len() as f64);
        log.accuracy.push(hits as f64 / source.len() as f64);
    }
    Ok(log)
}

/// Features of pseudo-support (grouped by class) and pseudo-query maps.
struct SplitVars {
    support: Vec<Vec<Var>>,
    query: Vec<Var>,
    labels: Vec<usize>,
}

fn split_vars(support: &[Vec<Var>], split: &PseudoSplit) -> SplitVars {
    let mut out = SplitVars {
        support: Vec::with_capacity(split.support.len()),
        query: Vec::new(),
        labels: Vec::new(),
    };
    for (class, (s, q)) in split.support.iter().zip(&split.query).enumerate() {
        out.support.push(s.iter().map(|&k| support[class][k]).collect());
        for &k in q {
            out.query.push(support[class][k]);
            out.labels.push(class);
        }
    }
    out
}

/// Aligns a grouped support set and a query list; returns the same grouping.
pub(crate) fn align_grouped(
    tape: &mut Tape,
    support: &[Vec<Var>],
    query: &[Var],
    cfg: &TrainConfig,
    gate: &GateParams,
    gate_vars: GateVars,
) -> Result<(Vec<Vec<Var>>, Vec<Var>)> {
    if !cfg.use_nda {
        return Ok((support.to_vec(), query.to_vec()));
    }
    let flat: Vec<Var> = support.iter().flatten().copied().collect();
    let aligned = align_vars(tape, &flat, query, &cfg.alignment(), gate, gate_vars)?;
    let mut grouped = Vec::with_capacity(support.len());
    let mut it = aligned.support.into_iter();
    for class in support {
        grouped.push(it.by_ref().take(class.len()).collect());
    }
    Ok((grouped, aligned.query))
}

/// Recalibrated pool per class.
pub(crate) fn class_pools(tape: &mut Tape, support: &[Vec<Var>], cfg: &TrainConfig) -> Result<Vec<Var>> {
    support
        .iter()
        .map(|maps| Ok(recalibrate_vars(tape, maps, cfg.recalibration())?.pool_for(cfg.pool_mode)))
        .collect()
}

/// Stage 1: adapts the backbone and temperature on pseudo-episodes drawn
/// from `support` (one `Vec` of K maps per class).
pub fn finetune_stage1(
    backbone: &BackboneParams,
    measure: MeasurementParams,
    gate: &GateParams,
    support: &[Vec<Matrix>],
    cfg: &TrainConfig,
    epochs: usize,
    rng: &mut Rng,
) -> Result<(BackboneParams, MeasurementParams, TrainLog)> {
    let spec = cfg.episode_spec();
    let ways = support.len();
    let r = support[0][0].rows();
    let c = backbone.out_channels();
    let lambda = cfg
        .reprojection()
        .lambda(cfg.pool_shots(spec.pseudo_support_shots()), r, c);
    let lr = cfg.stage1_lr;
    let mut theta = backbone.clone();
    let mut measure = measure;
    let mut log = TrainLog::default();
    let items: Vec<&Matrix> = support.iter().flatten().collect();

    for epoch in 0..epochs {
        let split = pseudo_split(ways, &spec, rng)?;
        let mut tape = Tape::new();
        let bv = theta.register(&mut tape, true);
        let lg = tape.param(Matrix::scalar(measure.log_gamma));
        let feats = backbone::forward_items(&mut tape, &bv, &items)?;
        let grouped: Vec<Vec<Var>> = feats.chunks(spec.shots).map(<[Var]>::to_vec).collect();
        let sv = split_vars(&grouped, &split);
        let gv = GateVars::register(&mut tape, gate, false);
        let (sup, qry) = align_grouped(&mut tape, &sv.support, &sv.query, cfg, gate, gv)?;
        let pools = class_pools(&mut tape, &sup, cfg)?;
        let queries = tape.vstack(&qry)?;
        let d = class_distances(&mut tape, &pools, queries, r, lambda)?;
        let logits = logits_from_distances(&mut tape, d, lg, r)?;
        let loss = cross_entropy(&mut tape, logits, &sv.labels)?;
        log.loss.push(check_loss(&tape, loss, "stage-1", epoch)?);
        log.accuracy
            .push(correct(&tape, logits, &sv.labels) as f64 / sv.labels.len() as f64);

        let grads = tape.backward(loss)?;
        if lr != 0.0 {
            theta.sgd_step(&bv, &grads, lr);
        }
        step_scalar(&mut measure.log_gamma, lg, &grads, lr);
    }
    Ok((theta, measure, log))
}

/// Output of stage 2.
#[derive(Debug, Clone)]
pub struct Stage2 {
    pub z: ClassReprojection,
    pub measure: MeasurementParams,
    pub gate: GateParams,
    pub log: TrainLog,
}

/// Stage 2: with the backbone frozen, trains per-class reprojection
/// matrices, the temperature and the gate on pseudo-episodes.
///
/// `Z` starts as the recalibrated pseudo-support pool of the first split.
pub fn finetune_stage2(
    backbone: &BackboneParams,
    measure: MeasurementParams,
    gate: &GateParams,
    support: &[Vec<Matrix>],
    cfg: &TrainConfig,
    epochs: usize,
    rng: &mut Rng,
) -> Result<Stage2> {
    let spec = cfg.episode_spec();
    let ways = support.len();
    let r = support[0][0].rows();
    let feats: Vec<Vec<Matrix>> = support
        .iter()
        .map(|class| backbone.apply_all(class))
        .collect::<Result<_>>()?;
    let mut gate = gate.clone();
    let mut measure = measure;
    let lr = cfg.stage2_lr;

    let first = pseudo_split(ways, &spec, rng)?;
    let z = {
        let mut tape = Tape::new();
        let fv: Vec<Vec<Var>> = feats
            .iter()
            .map(|class| class.iter().map(|f| tape.constant(f.clone())).collect())
            .collect();
        let sv = split_vars(&fv, &first);
        let gv = GateVars::register(&mut tape, &gate, false);
        let (sup, _) = align_grouped(&mut tape, &sv.support, &sv.query, cfg, &gate, gv)?;
        let pools = class_pools(&mut tape, &sup, cfg)?;
        init_reprojection(&pools.iter().map(|p| tape.value(*p).clone()).collect::<Vec<_>>())
    };
    let mut z = z;
    let c = z.z[0].cols();
    let lambda = cfg.reprojection().lambda(z.shots(r).max(1), r, c);
    let mut log = TrainLog::default();

    for epoch in 0..epochs {
        let split = if epoch == 0 {
            first.clone()
        } else {
            pseudo_split(ways, &spec, rng)?
        };
        let mut tape = Tape::new();
        let fv: Vec<Vec<Var>> = feats
            .iter()
            .map(|class| class.iter().map(|f| tape.constant(f.clone())).collect())
            .collect();
        let sv = split_vars(&fv, &split);
        let zv: Vec<Var> = z.z.iter().map(|m| tape.param(m.clone())).collect();
        let lg = tape.param(Matrix::scalar(measure.log_gamma));
        let gv = GateVars::register(&mut tape, &gate, true);
        let (_, qry) = align_grouped(&mut tape, &sv.support, &sv.query, cfg, &gate, gv)?;
        let queries = tape.vstack(&qry)?;
        let d = class_distances(&mut tape, &zv, queries, r, lambda)?;
        let logits = logits_from_distances(&mut tape, d, lg, r)?;
        let loss = cross_entropy(&mut tape, logits, &sv.labels)?;
        log.loss.push(check_loss(&tape, loss, "stage-2", epoch)?);
        log.accuracy
            .push(correct(&tape, logits, &sv.labels) as f64 / sv.labels.len() as f64);

        let grads = tape.backward(loss)?;
        for (m, v) in z.z.iter_mut().zip(&zv) {
            step(m, *v, &grads, lr);
        }
        step_scalar(&mut measure.log_gamma, lg, &grads, lr);
        step(&mut gate.w, gv.w, &grads, lr);
        step_scalar(&mut gate.b, gv.b, &grads, lr);
    }
    Ok(Stage2 {
        z,
        measure,
        gate,
        log,
    })
}
