//! Source pretraining, two-stage target finetuning, querying and the
//! episodic evaluation harness.

mod config;
mod eval;
mod query;
mod train;

pub use config::{digest_text, NdaVariant, TrainConfig, TRAIN_KEYS};
pub use eval::{
    distance_histogram, draw_episode, evaluate, mean_ci95, median, par_map, write_histogram_csv,
    EvalReport, HistRow, HIST_HEADER,
};
pub use query::{accuracy, adapt, query_episode, run_episode, Adapted, QueryOutput};
pub use train::{finetune_stage1, finetune_stage2, pretrain_from, pretrain_source, Stage2, TrainLog};

use crate::backbone::BackboneParams;
use crate::nda::GateParams;
use crate::numerics::Matrix;
use crate::pfa::MeasurementParams;

/// Pretrained state every episode starts from.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub backbone: BackboneParams,
    pub measure: MeasurementParams,
    pub gate: GateParams,
    /// One `R x C` prototype per source class.
    pub base: Vec<Matrix>,
}
