use super::{Algorithm, Run, TrainConfig, TrainLog};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::weights::WeightMatrix;

/// ℓ2-regularized trainer: shrink, hinge updates, projection onto the ball
/// of radius `1/√λ`.
pub fn train_l2(data: &Dataset, cfg: &TrainConfig) -> Result<(WeightMatrix, TrainLog)> {
    if cfg.algorithm != Algorithm::L2 {
        return Err(Error::InvalidConfig("train_l2 needs algorithm l2".into()));
    }
    let out = super::train(data, None, cfg, None)?;
    Ok((out.weights, out.log))
}

/// One step: returns (active examples, touched rows).
pub(super) fn step(run: &mut Run<'_>, eta: f64) -> Result<(usize, usize)> {
    let lambda = run.cfg.lambda;
    // The shrink is applied before the snapshot. A shared positive factor
    // moves no argmax, so the rivals are the same as before it.
    run.w.global_scale(1.0 - lambda * eta)?;
    let verdicts = run.query_batch()?;
    let active = verdicts.iter().filter(|v| v.active).count();
    let touched = run.apply_hinge_updates(&verdicts, eta)?;
    run.w.project_to_ball(lambda)?;
    run.sync_index(&touched)?;
    Ok((active, touched.len()))
}
