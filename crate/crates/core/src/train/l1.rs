use super::{Algorithm, Run, TrainConfig, TrainLog, Truncation};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::weights::WeightMatrix;

/// ℓ1-regularized trainer: hinge updates, then soft-thresholding of every
/// row touched by the batch. No shrink, no projection.
pub fn train_l1(data: &Dataset, cfg: &TrainConfig) -> Result<(WeightMatrix, TrainLog)> {
    if cfg.algorithm != Algorithm::L1 {
        return Err(Error::InvalidConfig("train_l1 needs algorithm l1".into()));
    }
    let out = super::train(data, None, cfg, None)?;
    Ok((out.weights, out.log))
}

pub(super) fn step(run: &mut Run<'_>, eta: f64) -> Result<(usize, usize)> {
    let verdicts = run.query_batch()?;
    let active = verdicts.iter().filter(|v| v.active).count();
    let mut written = run.apply_hinge_updates(&verdicts, eta)?;

    // R_t holds the true class and the rival of every sampled example,
    // active or not.
    let examples = run.data.examples();
    let mut group: Vec<usize> = verdicts
        .iter()
        .flat_map(|v| [examples[v.pos].label, v.rival])
        .collect();
    group.sort_unstable();
    group.dedup();

    let tau = super::truncation_threshold(run.w.num_classes(), group.len(), run.cfg.lambda, eta)?;
    if tau > 0.0 && run.cfg.truncation != Truncation::Off {
        for &c in &group {
            if let Truncation::Conditional(fraction) = run.cfg.truncation {
                let row = run.w.materialize_row(c)?;
                let lost: f64 = row.values().iter().map(|v| v.abs().min(tau)).sum();
                if lost > fraction * row.l1_norm() {
                    continue;
                }
            }
            run.w.truncate_row(c, tau)?;
            written.push(c);
        }
        written.sort_unstable();
        written.dedup();
    }
    run.sync_index(&written)?;
    Ok((active, written.len()))
}
