use crate::backbone::{self, BackboneParams};
use crate::data::Episode;
use crate::error::{DaraError, Result};
use crate::nda::{GateParams, GateVars};
use crate::numerics::{Matrix, Tape, Var};
use crate::pfa::{argmin, class_distances, probabilities_from_distances, ClassReprojection, MeasurementParams};
use crate::pipeline::train::{align_grouped, class_pools, finetune_stage1, finetune_stage2};
use crate::pipeline::{Model, TrainConfig};
use crate::rng::Rng;

/// Everything needed to classify the queries of one episode.
#[derive(Debug, Clone)]
pub struct Adapted {
    pub backbone: BackboneParams,
    pub measure: MeasurementParams,
    pub gate: GateParams,
    /// Present once stage 2 has run; replaces the support pools.
    pub z: Option<ClassReprojection>,
}

impl Adapted {
    pub fn frozen(model: &Model) -> Self {
        Adapted {
            backbone: model.backbone.clone(),
            measure: model.measure,
            gate: model.gate.clone(),
            z: None,
        }
    }
}

/// Runs target finetuning on one episode's support set as configured.
pub fn adapt(model: &Model, support: &[Vec<Matrix>], cfg: &TrainConfig, rng: &mut Rng) -> Result<Adapted> {
    if !cfg.use_reprojection_finetune {
        return Ok(Adapted::frozen(model));
    }
    let (theta, measure) = if cfg.shared_finetune {
        (model.backbone.clone(), model.measure)
    } else {
        let (t, m, _) = finetune_stage1(
            &model.backbone,
            model.measure,
            &model.gate,
            support,
            cfg,
            cfg.stage1_epochs(),
            rng,
        )?;
        (t, m)
    };
    let s2 = finetune_stage2(&theta, measure, &model.gate, support, cfg, cfg.stage2_epochs(), rng)?;
    Ok(Adapted {
        backbone: theta,
        measure: s2.measure,
        gate: s2.gate,
        z: Some(s2.z),
    })
}

/// Per-query scores for one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryOutput {
    /// `distances[q][n]`: squared reconstruction error of query `q` under class `n`.
    pub distances: Vec<Vec<f64>>,
    pub probabilities: Vec<Vec<f64>>,
    /// Smallest distance; ties go to the lowest class index.
    pub predictions: Vec<usize>,
}

/// Classifies `queries` against `support` (one `Vec` of K maps per class).
pub fn query_episode(
    adapted: &Adapted,
    support: &[Vec<Matrix>],
    queries: &[Matrix],
    cfg: &TrainConfig,
) -> Result<QueryOutput> {
    let c_in = adapted.backbone.in_channels();
    if let Some(bad) = support.iter().flatten().chain(queries).find(|m| m.cols() != c_in) {
        return Err(DaraError::ChannelMismatch {
            expected: c_in,
            found: bad.cols(),
        });
    }
    if queries.is_empty() {
        return Ok(QueryOutput {
            distances: Vec::new(),
            probabilities: Vec::new(),
            predictions: Vec::new(),
        });
    }
    let r = queries[0].rows();
    let c = adapted.backbone.out_channels();
    let mut tape = Tape::new();
    let bv = adapted.backbone.register(&mut tape, false);
    let items: Vec<&Matrix> = support.iter().flatten().chain(queries).collect();
    let feats = backbone::forward_items(&mut tape, &bv, &items)?;
    let (sf, qf) = feats.split_at(items.len() - queries.len());
    let mut grouped = Vec::with_capacity(support.len());
    let mut offset = 0;
    for class in support {
        grouped.push(sf[offset..offset + class.len()].to_vec());
        offset += class.len();
    }
    let gv = GateVars::register(&mut tape, &adapted.gate, false);
    let (sup, qry) = align_grouped(&mut tape, &grouped, qf, cfg, &adapted.gate, gv)?;

    let (pools, shots): (Vec<Var>, usize) = match &adapted.z {
        Some(z) => (
            z.z.iter().map(|m| tape.constant(m.clone())).collect(),
            z.shots(r).max(1),
        ),
        None => (
            class_pools(&mut tape, &sup, cfg)?,
            cfg.pool_shots(support.first().map_or(1, Vec::len)),
        ),
    };
    let lambda = cfg.reprojection().lambda(shots, r, c);
    let stacked = tape.vstack(&qry)?;
    let d = class_distances(&mut tape, &pools, stacked, r, lambda)?;
    let dm = tape.value(d);
    let mut out = QueryOutput {
        distances: Vec::with_capacity(queries.len()),
        probabilities: Vec::with_capacity(queries.len()),
        predictions: Vec::with_capacity(queries.len()),
    };
    for q in 0..dm.rows() {
        let row = dm.row(q).to_vec();
        let p = probabilities_from_distances(&row, adapted.measure.gamma_over_r());
        out.predictions.push(argmin(&row));
        out.probabilities.push(p);
        out.distances.push(row);
    }
    Ok(out)
}

/// Adapts on the episode's support set and classifies its queries.
pub fn run_episode(model: &Model, episode: &Episode, cfg: &TrainConfig, rng: &mut Rng) -> Result<QueryOutput> {
    let adapted = adapt(model, &episode.support, cfg, rng)?;
    let queries: Vec<Matrix> = episode.query.iter().map(|(m, _)| m.clone()).collect();
    query_episode(&adapted, &episode.support, &queries, cfg)
}

/// Fraction of queries whose prediction equals the label.
pub fn accuracy(output: &QueryOutput, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = output
        .predictions
        .iter()
        .zip(labels)
        .filter(|(p, y)| p == y)
        .count();
    hits as f64 / labels.len() as f64
}
