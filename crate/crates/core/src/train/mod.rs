//! Mini-batch stochastic subgradient trainers for the ℓ2- and ℓ1-regularized
//! multi-class SVM, with the most violating rival of every example chosen by
//! a [`MipsIndex`](crate::mips::MipsIndex).

mod l1;
mod l2;
mod log;
mod objective;
mod truncate;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::eval::{self, F1Mode};
use crate::mips::{self, AnyIndex, BackendKind, IndexParams, LshParams, MipsIndex, SwGraphParams};
use crate::weights::WeightMatrix;

pub use l1::train_l1;
pub use l2::train_l2;
pub use log::{EpochRecord, TrainLog};
pub use objective::{objective_l1, objective_l2};
pub use truncate::{truncate, truncation_threshold};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    L2,
    L1,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::L2 => "l2",
            Algorithm::L1 => "l1",
        })
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l2" => Ok(Algorithm::L2),
            "l1" => Ok(Algorithm::L1),
            other => Err(Error::invalid(format!("unknown algorithm '{other}'"))),
        }
    }
}

/// Truncation policy of the ℓ1 trainer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Truncation {
    Off,
    /// Soft-threshold every touched row after each batch.
    Always,
    /// Soft-threshold a touched row only when the ℓ1 mass it would lose is
    /// at most the given fraction of the row's ℓ1 norm.
    Conditional(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyStop {
    /// Epochs without sufficient heldout MaF1 improvement before stopping.
    pub patience: usize,
    pub min_delta: f64,
}

impl Default for EarlyStop {
    fn default() -> Self {
        Self {
            patience: 5,
            min_delta: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub lambda: f64,
    /// Hinge activity threshold: an example is active when
    /// `rho + f(x,r) − f(x,y) > 0`.
    pub rho: f64,
    pub eta0: f64,
    pub eta_step: f64,
    /// Number of batch steps.
    pub epochs: usize,
    /// `None` selects `round(100·√C)`.
    pub batch_size: Option<usize>,
    pub backend: BackendKind,
    pub lsh: LshParams,
    pub swg: SwGraphParams,
    pub seed: u64,
    /// Worker threads for the query phase and heldout prediction. `None`
    /// uses the ambient rayon pool.
    pub threads: Option<usize>,
    pub truncation: Truncation,
    pub early_stop: Option<EarlyStop>,
    /// Also maintain the running average of the iterates.
    pub averaging: bool,
    /// Scale each hinge step by `1/|b|`, so a batch step follows the
    /// subgradient of the mean loss. Off by default: every active example
    /// then moves its two rows by the full `η_t x`.
    pub normalize_batch: bool,
    /// Upper bound on the examples used for the logged objective. Larger
    /// training sets are subsampled once with the run seed.
    pub objective_sample: usize,
    pub f1_mode: F1Mode,
}

impl TrainConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            lambda: match algorithm {
                Algorithm::L2 => 1.0,
                Algorithm::L1 => 1e-6,
            },
            rho: 1.0,
            eta0: 0.1,
            eta_step: 0.02,
            epochs: 25,
            batch_size: None,
            backend: BackendKind::Exact,
            lsh: LshParams::default(),
            swg: SwGraphParams::default(),
            seed: 0,
            threads: None,
            truncation: Truncation::Always,
            early_stop: None,
            averaging: false,
            normalize_batch: false,
            objective_sample: 10_000,
            f1_mode: F1Mode::Harmonic,
        }
    }

    pub fn index_params(&self) -> IndexParams {
        IndexParams {
            kind: self.backend,
            lsh: self.lsh,
            swg: self.swg,
            seed: self.seed ^ 0x5851_f42d_4c95_7f2d,
        }
    }

    pub fn batch_size_for(&self, num_classes: usize) -> usize {
        self.batch_size
            .unwrap_or_else(|| batch_size_for(num_classes))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        match self.algorithm {
            Algorithm::L2 if !(self.lambda > 0.0 && self.lambda.is_finite()) => {
                return bad(format!("lambda must be > 0 for l2, got {}", self.lambda));
            }
            Algorithm::L1 if !(self.lambda >= 0.0 && self.lambda.is_finite()) => {
                return bad(format!("lambda must be >= 0 for l1, got {}", self.lambda));
            }
            _ => {}
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return bad(format!("rho must be > 0, got {}", self.rho));
        }
        if !(self.eta0 > 0.0 && self.eta0.is_finite()) {
            return bad(format!("eta0 must be > 0, got {}", self.eta0));
        }
        if !(self.eta_step >= 0.0 && self.eta_step.is_finite()) {
            return bad(format!("eta_step must be >= 0, got {}", self.eta_step));
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if self.batch_size == Some(0) {
            return bad("batch size must be >= 1".into());
        }
        if self.threads == Some(0) {
            return bad("threads must be >= 1".into());
        }
        if let Truncation::Conditional(f) = self.truncation {
            if !(0.0..=1.0).contains(&f) {
                return bad(format!("truncation fraction must be in [0, 1], got {f}"));
            }
        }
        if let Some(es) = self.early_stop {
            if es.patience == 0 || !(es.min_delta >= 0.0) {
                return bad("early stopping needs patience >= 1 and min_delta >= 0".into());
            }
        }
        // η_t is non-increasing, so the first step is the binding one.
        if self.algorithm == Algorithm::L2 {
            let shrink = self.lambda * learning_rate(1, self.eta0, self.eta_step);
            if shrink >= 1.0 {
                return bad(format!(
                    "lambda * eta_1 = {shrink} must be < 1 so the shrink factor stays positive"
                ));
            }
        }
        self.index_params().validate()
    }
}

/// `η_t = η₀ / (1 + η_step·t)`.
pub fn learning_rate(t: usize, eta0: f64, eta_step: f64) -> f64 {
    eta0 / (1.0 + eta_step * t as f64)
}

/// `round(100·√C)`, at least 1.
pub fn batch_size_for(num_classes: usize) -> usize {
    ((100.0 * (num_classes as f64).sqrt()).round() as usize).max(1)
}

/// Positions of `size` examples drawn uniformly with replacement.
pub fn sample_batch(data: &Dataset, size: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if size == 0 {
        return Err(Error::invalid("batch size must be >= 1"));
    }
    let n = data.len();
    Ok((0..size).map(|_| rng.random_range(0..n)).collect())
}

/// State passed to a per-step observer, after the step is complete.
#[derive(Debug, Clone, Copy)]
pub struct StepInfo<'a> {
    pub step: usize,
    pub eta: f64,
    pub weights: &'a WeightMatrix,
    /// Examples of the batch with an active hinge.
    pub active: usize,
    /// Rows written during the step.
    pub touched: usize,
}

pub type StepObserver<'o> = dyn FnMut(&StepInfo<'_>) + Send + 'o;

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub weights: WeightMatrix,
    pub log: TrainLog,
    /// Mean of the iterates `W_1..W_T`, when requested.
    pub averaged: Option<WeightMatrix>,
}

/// Runs the configured algorithm. `heldout` feeds the per-epoch heldout
/// metrics and early stopping; `observer` sees every completed step.
pub fn train(
    data: &Dataset,
    heldout: Option<&Dataset>,
    cfg: &TrainConfig,
    observer: Option<&mut StepObserver<'_>>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_data(data, heldout)?;
    if cfg.early_stop.is_some() && heldout.is_none() {
        return Err(Error::InvalidConfig(
            "early stopping needs a heldout set".into(),
        ));
    }
    let pool = match cfg.threads {
        Some(n) => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?,
        ),
        None => None,
    };
    let run = || Run::new(data, heldout, cfg)?.execute(observer);
    match &pool {
        Some(p) => p.install(run),
        None => run(),
    }
}

fn check_data(data: &Dataset, heldout: Option<&Dataset>) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.num_classes() < 2 {
        return Err(Error::invalid(format!(
            "training needs at least 2 classes, got {}",
            data.num_classes()
        )));
    }
    if let Some(h) = heldout {
        if h.dim() != data.dim() {
            return Err(Error::DimensionMismatch {
                expected: data.dim(),
                found: h.dim(),
            });
        }
    }
    Ok(())
}

/// Rival and activity of one batch example, computed against the
/// batch-start snapshot.
#[derive(Debug, Clone, Copy)]
struct Verdict {
    pos: usize,
    rival: usize,
    active: bool,
}

/// Mutable state shared by both algorithms.
struct Run<'d> {
    data: &'d Dataset,
    heldout: Option<&'d Dataset>,
    cfg: &'d TrainConfig,
    w: WeightMatrix,
    index: AnyIndex,
    indexed_folds: u64,
    refreshes: usize,
    rng: ChaCha8Rng,
    batch: usize,
    objective_set: Dataset,
    avg: Option<Vec<Vec<f64>>>,
}

impl<'d> Run<'d> {
    fn new(data: &'d Dataset, heldout: Option<&'d Dataset>, cfg: &'d TrainConfig) -> Result<Self> {
        use rand::SeedableRng;
        let c = data.num_classes();
        let w = WeightMatrix::zeros(c, data.dim());
        let index = build_index(&w, &cfg.index_params())?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let objective_set = if data.len() > cfg.objective_sample.max(1) {
            let positions = sample_batch(data, cfg.objective_sample.max(1), &mut rng)?;
            data.subset(&positions)
        } else {
            data.clone()
        };
        let avg = cfg.averaging.then(|| vec![vec![0.0; data.dim()]; c]);
        Ok(Self {
            data,
            heldout,
            cfg,
            w,
            index,
            indexed_folds: 0,
            refreshes: 0,
            rng,
            batch: cfg.batch_size_for(c),
            objective_set,
            avg,
        })
    }

    fn execute(mut self, mut observer: Option<&mut StepObserver<'_>>) -> Result<TrainOutcome> {
        let mut log = TrainLog::default();
        let mut best_f1 = f64::NEG_INFINITY;
        let mut stale = 0usize;
        let start = std::time::Instant::now();
        for t in 1..=self.cfg.epochs {
            let eta = learning_rate(t, self.cfg.eta0, self.cfg.eta_step);
            let (active, touched) = match self.cfg.algorithm {
                Algorithm::L2 => l2::step(&mut self, eta)?,
                Algorithm::L1 => l1::step(&mut self, eta)?,
            };
            self.accumulate_average();
            if let Some(obs) = observer.as_deref_mut() {
                obs(&StepInfo {
                    step: t,
                    eta,
                    weights: &self.w,
                    active,
                    touched,
                });
            }
            let record = self.record(t, start.elapsed().as_secs_f64())?;
            let f1 = record.heldout_maf1;
            log.push(record);
            if let (Some(es), Some(f1)) = (self.cfg.early_stop, f1) {
                if f1 > best_f1 + es.min_delta {
                    best_f1 = f1;
                    stale = 0;
                } else {
                    stale += 1;
                    if stale >= es.patience {
                        log.stopped_early = true;
                        break;
                    }
                }
            }
        }
        let averaged = match self.avg.take() {
            Some(sum) => {
                let steps = log.len() as f64;
                let rows = sum
                    .iter()
                    .map(|r| {
                        let v: Vec<f64> = r.iter().map(|x| x / steps).collect();
                        crate::sparse::SparseVector::from_dense(&v)
                    })
                    .collect();
                Some(WeightMatrix::from_rows(self.data.dim(), rows)?)
            }
            None => None,
        };
        Ok(TrainOutcome {
            weights: self.w,
            log,
            averaged,
        })
    }

    /// Phase 1: rivals and hinge activity for every sampled example, in
    /// sampled order, against the current (frozen) weights and index.
    fn query_batch(&mut self) -> Result<Vec<Verdict>> {
        let positions = sample_batch(self.data, self.batch, &mut self.rng)?;
        let (w, index, data, rho) = (&self.w, &self.index, self.data, self.cfg.rho);
        positions
            .par_iter()
            .map(|&pos| {
                let ex = &data.examples()[pos];
                let (rival, _) = index.query(&ex.features, Some(ex.label))?;
                let s_y = w.row_dot(ex.label, &ex.features)?;
                let s_r = w.row_dot(rival, &ex.features)?;
                Ok(Verdict {
                    pos,
                    rival,
                    active: rho + s_r - s_y > 0.0,
                })
            })
            .collect()
    }

    /// Phase 2 update: `ω_r −= η x`, `ω_y += η x` for active examples.
    fn apply_hinge_updates(&mut self, verdicts: &[Verdict], mut eta: f64) -> Result<Vec<usize>> {
        let examples = self.data.examples();
        if self.cfg.normalize_batch {
            eta /= verdicts.len().max(1) as f64;
        }
        let mut updates = Vec::with_capacity(2 * verdicts.len());
        for v in verdicts.iter().filter(|v| v.active) {
            let ex = &examples[v.pos];
            updates.push(crate::weights::RowUpdate {
                class: v.rival,
                coeff: -eta,
                x: &ex.features,
            });
            updates.push(crate::weights::RowUpdate {
                class: ex.label,
                coeff: eta,
                x: &ex.features,
            });
        }
        self.w.apply_updates(&updates)
    }

    /// Brings the index in line with `w`: a full rebuild after a scale fold,
    /// otherwise a refresh of the given rows.
    fn sync_index(&mut self, touched: &[usize]) -> Result<()> {
        if self.w.fold_count() != self.indexed_folds {
            self.index = build_index(&self.w, &self.cfg.index_params())?;
            self.indexed_folds = self.w.fold_count();
            self.refreshes += self.w.num_classes();
            return Ok(());
        }
        for &c in touched {
            self.index.update_row(c, self.w.stored_row(c)?)?;
        }
        self.refreshes += touched.len();
        Ok(())
    }

    fn accumulate_average(&mut self) {
        let Some(sum) = self.avg.as_mut() else {
            return;
        };
        let scale = self.w.scale();
        for (c, acc) in sum.iter_mut().enumerate() {
            let row = self.w.stored_row(c).expect("class in range");
            for (i, v) in row.iter() {
                acc[i as usize] += scale * v;
            }
        }
    }

    fn record(&mut self, epoch: usize, seconds: f64) -> Result<EpochRecord> {
        let objective = match self.cfg.algorithm {
            Algorithm::L2 => objective_l2(&self.w, &self.objective_set, self.cfg.lambda)?,
            Algorithm::L1 => objective_l1(&self.w, &self.objective_set, self.cfg.lambda)?,
        };
        let (heldout_acc, heldout_maf1) = match self.heldout {
            Some(h) if !h.is_empty() => {
                let r = eval::evaluate(&self.w, h, self.cfg.f1_mode)?;
                (Some(r.accuracy), Some(r.macro_f1))
            }
            _ => (None, None),
        };
        let refreshes = std::mem::take(&mut self.refreshes);
        Ok(EpochRecord {
            epoch,
            objective,
            heldout_acc,
            heldout_maf1,
            nnz: self.w.nnz(),
            seconds,
            index_refreshes: refreshes,
        })
    }
}

/// Index over the stored rows of `w`. The stored frame differs from the
/// logical one by a shared positive factor, which preserves every argmax.
fn build_index(w: &WeightMatrix, params: &IndexParams) -> Result<AnyIndex> {
    let rows = (0..w.num_classes())
        .map(|c| Ok((c, w.stored_row(c)?)))
        .collect::<Result<Vec<_>>>()?;
    mips::build(rows, w.dim(), params)
}
