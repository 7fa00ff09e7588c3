//! Transfer stage: adapt a pretrained operator to the target split, either
//! plain (fine-tuning) or with transported source pairs replayed alongside.

use crate::error::TrainError;
use crate::model::{train_supervised, OperatorModel, ReplaySource, TrainConfig, TrainReport};
use crate::pde::grid::Dataset;
use crate::pott::pushforward::PushforwardDataset;

/// Baseline: clone the source operator and keep training on the target
/// split. Input standardization stays frozen at the source statistics.
pub fn finetune(
    g_src: &OperatorModel,
    tgt_train: &Dataset,
    tgt_val: &Dataset,
    cfg: &TrainConfig,
) -> Result<(OperatorModel, TrainReport), TrainError> {
    let mut model = g_src.clone();
    let report = train_supervised(&mut model, tgt_train, tgt_val, cfg, None)?;
    Ok((model, report))
}

/// Fine-tuning with replay: every batch adds `beta` times the loss on the
/// next slice of transported source pairs. At beta = 0 the trajectory is
/// bit-identical to `finetune`.
pub fn transfer_train(
    g_src: &OperatorModel,
    tgt_train: &Dataset,
    tgt_val: &Dataset,
    replay: &PushforwardDataset,
    beta: f64,
    cfg: &TrainConfig,
) -> Result<(OperatorModel, TrainReport), TrainError> {
    let mut model = g_src.clone();
    let mut source = ReplaySource::new(replay.data.clone(), beta);
    let report = train_supervised(&mut model, tgt_train, tgt_val, cfg, Some(&mut source))?;
    Ok((model, report))
}
