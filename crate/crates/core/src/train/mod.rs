//! Mini-batch training with validation-based early stopping, and K-fold
//! cross-validation orchestration.

pub mod metrics;

pub use metrics::{evaluate, evaluate_variant, recall_per_class, uar, ConfusionMatrix, DirectionMetrics, MetricsReport};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use thiserror::Error;

use crate::data::{kfold_split, stratified_holdout, DataError, Dataset, Standardizer};
use crate::model::{AsyrecModel, ForwardVariant, ModelError};
use crate::seeding::derive_seed;
use crate::tensor::{AdamConfig, OptimizerState, Tape, TensorError, Var};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("train: {which} split is empty")]
    EmptySplit { which: &'static str },
    #[error("train: train and validation schemas differ ({train} vs {val})")]
    SplitSchemaMismatch { train: String, val: String },
    #[error("config: {0}")]
    BadConfig(String),
    #[error("metrics: every per-class recall is undefined")]
    NoDefinedRecalls,
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    /// Consecutive epochs without validation-UAR improvement before stopping.
    pub patience: usize,
    /// Fraction of each training fold's dyads carved out for validation.
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            learning_rate: 1e-4,
            weight_decay: 5e-4,
            max_epochs: 200,
            patience: 10,
            val_fraction: 0.2,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Defaults sized for quick runs on one core: smaller batches, the same
    /// optimizer settings.
    pub fn desk_scale(seed: u64) -> TrainConfig {
        TrainConfig {
            batch_size: 16,
            seed,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 {
            return Err(TrainError::BadConfig("batch_size must be at least 1".into()));
        }
        if self.patience >= self.max_epochs {
            return Err(TrainError::BadConfig(format!(
                "patience {} must be below max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(TrainError::BadConfig(format!(
                "val_fraction {} outside (0, 1)",
                self.val_fraction
            )));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_train_loss: f64,
    pub val_uar: f64,
    pub improved: bool,
}

/// Trains until the patience budget is exhausted or `max_epochs` is reached,
/// returning the snapshot with the best validation UAR.
pub fn train(
    train_set: &Dataset,
    val_set: &Dataset,
    cfg: &TrainConfig,
) -> Result<(AsyrecModel, Vec<EpochStats>), TrainError> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptySplit { which: "train" });
    }
    if val_set.is_empty() {
        return Err(TrainError::EmptySplit { which: "validation" });
    }
    if train_set.schema != val_set.schema {
        return Err(TrainError::SplitSchemaMismatch {
            train: train_set.schema.name.clone(),
            val: val_set.schema.name.clone(),
        });
    }

    let mut model = AsyrecModel::new(
        train_set.schema.clone(),
        train_set.feature_dim,
        derive_seed(cfg.seed, "init", 0),
    );
    model.standardizer = Standardizer::fit(train_set);

    let mut optimizer = OptimizerState::new(
        cfg.adam(),
        &model
            .params
            .named_tensors()
            .iter()
            .map(|(_, t)| *t)
            .collect::<Vec<_>>(),
    );

    // (dyad index, clip index, max clip index) triples for shuffling.
    let clip_refs: Vec<(usize, usize, usize)> = train_set
        .dyads
        .iter()
        .enumerate()
        .flat_map(|(di, dyad)| {
            (0..dyad.clips.len()).map(move |ci| (di, ci, dyad.max_clip_index()))
        })
        .collect();

    let variant = ForwardVariant::default();
    let mut history = Vec::new();
    let mut best: Option<(f64, AsyrecModel)> = None;
    let mut stale_epochs = 0usize;

    for epoch in 1..=cfg.max_epochs {
        let mut order: Vec<usize> = (0..clip_refs.len()).collect();
        let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(cfg.seed, "shuffle", epoch as u64));
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let tape = Tape::new();
            let var_list: Vec<Var> = model
                .params
                .named_tensors()
                .iter()
                .map(|(_, t)| tape.parameter(t))
                .collect();
            let vars = model.params.vars_from_ordered(&var_list);

            let mut batch_loss: Option<Var> = None;
            for &idx in batch {
                let (di, ci, max_index) = clip_refs[idx];
                let clip = &train_set.dyads[di].clips[ci];
                let loss = model.clip_loss_on(&tape, &vars, clip, max_index, &variant)?;
                batch_loss = Some(match batch_loss {
                    Some(total) => total.add(&loss)?,
                    None => loss,
                });
            }
            let total = batch_loss.expect("batches are non-empty");
            loss_sum += total.item();
            let mean = total.scale(1.0 / batch.len() as f64);
            tape.backward(&mean)?;

            let grads: Vec<crate::Tensor> = var_list
                .iter()
                .map(|v| tape.grad(v))
                .collect::<Result<_, _>>()?;
            let mut params = model.params.tensors_mut();
            optimizer.step(&mut params, &grads)?;
        }

        let val_uar = evaluate(&model, val_set)?.mean_uar;
        let improved = best.as_ref().map_or(true, |(b, _)| val_uar > *b);
        if improved {
            best = Some((val_uar, model.clone()));
            stale_epochs = 0;
        } else {
            stale_epochs += 1;
        }
        history.push(EpochStats {
            epoch,
            mean_train_loss: loss_sum / clip_refs.len() as f64,
            val_uar,
            improved,
        });
        if stale_epochs >= cfg.patience {
            break;
        }
    }

    let (_, best_model) = best.expect("at least one epoch ran");
    Ok((best_model, history))
}

/// One fold's trained model and its held-out evaluation.
#[derive(Debug)]
pub struct FoldOutcome {
    pub fold: usize,
    pub test_dyads: Vec<String>,
    pub model: AsyrecModel,
    pub history: Vec<EpochStats>,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct DirectionAggregate {
    pub direction: String,
    pub uar_mean: f64,
    /// Population standard deviation over folds.
    pub uar_std: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct AggregateMetrics {
    pub uar_mean: f64,
    pub uar_std: f64,
    pub per_direction: Vec<DirectionAggregate>,
}

#[derive(Debug)]
pub struct CrossValidationReport {
    pub folds: Vec<FoldOutcome>,
    pub aggregate: AggregateMetrics,
}

fn population_std(values: &[f64], mean: f64) -> f64 {
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64;
    var.sqrt()
}

fn aggregate_folds(folds: &[FoldOutcome]) -> AggregateMetrics {
    let uars: Vec<f64> = folds.iter().map(|f| f.metrics.mean_uar).collect();
    let mean = uars.iter().sum::<f64>() / uars.len() as f64;
    let directions = folds[0]
        .metrics
        .clip
        .iter()
        .map(|d| d.direction.clone())
        .collect::<Vec<_>>();
    let per_direction = directions
        .iter()
        .map(|dir| {
            let vals: Vec<f64> = folds
                .iter()
                .map(|f| {
                    f.metrics
                        .clip
                        .iter()
                        .find(|d| &d.direction == dir)
                        .map(|d| d.uar)
                        .unwrap_or(f64::NAN)
                })
                .collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            DirectionAggregate {
                direction: dir.clone(),
                uar_mean: m,
                uar_std: population_std(&vals, m),
            }
        })
        .collect();
    AggregateMetrics {
        uar_mean: mean,
        uar_std: population_std(&uars, mean),
        per_direction,
    }
}

fn run_fold(
    dataset: &Dataset,
    fold: crate::data::FoldSplit,
    cfg: &TrainConfig,
) -> Result<FoldOutcome, TrainError> {
    let fold_seed = derive_seed(cfg.seed, "fold", fold.fold as u64);
    let fold_cfg = TrainConfig {
        seed: fold_seed,
        ..cfg.clone()
    };
    let (train_part, val_part) = stratified_holdout(&fold.train, cfg.val_fraction, fold_seed)?;
    let (model, history) = train(&train_part, &val_part, &fold_cfg)?;
    let metrics = evaluate(&model, &fold.test)?;
    let _ = dataset;
    Ok(FoldOutcome {
        fold: fold.fold,
        test_dyads: fold.test_dyads,
        model,
        history,
        metrics,
    })
}

/// Independent train/evaluate per fold with derived seeds. `threads` > 1
/// runs folds concurrently; results are identical either way.
pub fn cross_validate(
    dataset: &Dataset,
    k: usize,
    cfg: &TrainConfig,
    threads: usize,
) -> Result<CrossValidationReport, TrainError> {
    cfg.validate()?;
    let splits = kfold_split(dataset, k, cfg.seed)?;
    let mut outcomes: Vec<Option<Result<FoldOutcome, TrainError>>> =
        (0..splits.len()).map(|_| None).collect();

    if threads <= 1 {
        for (slot, fold) in outcomes.iter_mut().zip(splits) {
            *slot = Some(run_fold(dataset, fold, cfg));
        }
    } else {
        std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for fold in splits {
                handles.push(scope.spawn(move || (fold.fold, run_fold(dataset, fold, cfg))));
            }
            for handle in handles {
                let (idx, outcome) = handle.join().expect("fold worker panicked");
                outcomes[idx] = Some(outcome);
            }
        });
    }

    let folds: Vec<FoldOutcome> = outcomes
        .into_iter()
        .map(|o| o.expect("every fold ran"))
        .collect::<Result<_, _>>()?;
    let aggregate = aggregate_folds(&folds);
    Ok(CrossValidationReport { folds, aggregate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_generate, SynthConfig};

    fn quick_dataset(seed: u64) -> Dataset {
        let cfg = SynthConfig {
            feature_dim: 6,
            classes: 2,
            dyads_per_class: 6,
            clips_per_dyad: 3,
            noise: 0.0,
            asymmetric: false,
            ..SynthConfig::default()
        };
        synth_generate(&cfg, seed).unwrap()
    }

    fn quick_cfg(max_epochs: usize, patience: usize) -> TrainConfig {
        TrainConfig {
            batch_size: 8,
            max_epochs,
            patience,
            seed: 1,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn patience_zero_runs_exactly_one_epoch() {
        let ds = quick_dataset(1);
        let (train_part, val_part) = stratified_holdout(&ds, 0.25, 1).unwrap();
        let (_, history) = train(&train_part, &val_part, &quick_cfg(50, 0)).unwrap();
        assert_eq!(history.len(), 1);
    }

    #[test]
    fn identical_seeds_identical_models() {
        let ds = quick_dataset(2);
        let (train_part, val_part) = stratified_holdout(&ds, 0.25, 2).unwrap();
        let cfg = quick_cfg(3, 2);
        let (a, ha) = train(&train_part, &val_part, &cfg).unwrap();
        let (b, hb) = train(&train_part, &val_part, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ha.len(), hb.len());
        for (x, y) in ha.iter().zip(&hb) {
            assert_eq!(x.mean_train_loss.to_bits(), y.mean_train_loss.to_bits());
            assert_eq!(x.val_uar.to_bits(), y.val_uar.to_bits());
        }
    }

    #[test]
    fn empty_split_rejected() {
        let ds = quick_dataset(3);
        let empty = Dataset {
            schema: ds.schema.clone(),
            feature_dim: ds.feature_dim,
            dyads: vec![],
        };
        assert!(matches!(
            train(&empty, &ds, &quick_cfg(2, 1)),
            Err(TrainError::EmptySplit { which: "train" })
        ));
        assert!(matches!(
            train(&ds, &empty, &quick_cfg(2, 1)),
            Err(TrainError::EmptySplit { which: "validation" })
        ));
    }

    #[test]
    fn config_invariants_enforced() {
        let mut cfg = quick_cfg(5, 5);
        assert!(cfg.validate().is_err(), "patience must be below max_epochs");
        cfg.patience = 4;
        cfg.batch_size = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn best_snapshot_is_never_worse_than_history() {
        let ds = quick_dataset(4);
        let (train_part, val_part) = stratified_holdout(&ds, 0.25, 4).unwrap();
        let (model, history) = train(&train_part, &val_part, &quick_cfg(4, 3)).unwrap();
        let best_seen = history.iter().map(|h| h.val_uar).fold(f64::MIN, f64::max);
        let final_uar = evaluate(&model, &val_part).unwrap().mean_uar;
        assert!(final_uar >= best_seen - 1e-12);
    }

    #[test]
    fn cross_validate_structure() {
        let ds = quick_dataset(5);
        let cfg = quick_cfg(2, 1);
        let report = cross_validate(&ds, 3, &cfg, 1).unwrap();
        assert_eq!(report.folds.len(), 3);
        let mean = report.folds.iter().map(|f| f.metrics.mean_uar).sum::<f64>() / 3.0;
        assert!((report.aggregate.uar_mean - mean).abs() < 1e-12);
    }

    #[test]
    fn threaded_cross_validation_matches_sequential() {
        let ds = quick_dataset(6);
        let cfg = quick_cfg(2, 1);
        let seq = cross_validate(&ds, 3, &cfg, 1).unwrap();
        let par = cross_validate(&ds, 3, &cfg, 3).unwrap();
        for (a, b) in seq.folds.iter().zip(&par.folds) {
            assert_eq!(a.model, b.model);
            assert_eq!(a.metrics, b.metrics);
        }
    }
}
