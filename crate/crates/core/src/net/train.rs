//! Minibatch-1 training with a growing dataset pool.
//!
//! The pool starts with the first `chunk_size` samples and grows by one
//! chunk after every `max_iterations` steps until the whole set is
//! active. Each stage cycles through a freshly shuffled order of its pool.

use std::fs::File;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::model::{image_to_tensor, FcnModel};
use super::tensor::{Real, Tensor};
use crate::par::Execution;
use crate::raster::{probs_to_image, save_png, LabelMask, RasterImage};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    /// Steps per dataset stage.
    pub max_iterations: usize,
    pub chunk_size: usize,
    pub snapshot_every: usize,
    /// Cap on samples used for each curve loss estimate.
    pub eval_samples: usize,
    pub seed: u64,
    #[serde(default)]
    pub execution: Execution,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            adam: AdamConfig::default(),
            max_iterations: 3000,
            chunk_size: 3000,
            snapshot_every: 50,
            eval_samples: 64,
            seed: 0,
            execution: Execution::Sequential,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.adam.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.chunk_size == 0 || self.snapshot_every == 0 || self.eval_samples == 0 {
            return Err(Error::Config("chunk size, snapshot interval and eval cap must be positive".into()));
        }
        Ok(())
    }
}

/// One rendered input and its label.
#[derive(Clone, Debug)]
pub struct Sample {
    pub id: String,
    pub image: RasterImage,
    pub label: LabelMask,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub iteration: usize,
    pub train_loss: f64,
    pub test_loss: Option<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct TrainReport {
    pub iterations: usize,
    pub curve: Vec<CurveRow>,
    pub snapshots: Vec<PathBuf>,
}

impl TrainReport {
    pub fn initial_loss(&self) -> Option<f64> {
        self.curve.first().map(|r| r.train_loss)
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.curve.last().map(|r| r.train_loss)
    }
}

/// Where to write per-interval prediction images of a probe sample.
#[derive(Clone, Debug)]
pub struct SnapshotSpec {
    pub dir: PathBuf,
    pub probe: usize,
}

fn check_samples<T: Real>(model: &FcnModel<T>, samples: &[Sample]) -> Result<()> {
    let s = model.config.input_size;
    for smp in samples {
        let dims = [smp.image.width(), smp.image.height(), smp.label.width(), smp.label.height()];
        if dims != [s, s, s, s] {
            return Err(Error::Shape(format!(
                "sample {} is {}x{} with a {}x{} label; model expects {s}x{s}",
                smp.id, dims[0], dims[1], dims[2], dims[3]
            )));
        }
    }
    Ok(())
}

fn mean_loss<T: Real>(model: &FcnModel<T>, xs: &[(Tensor<T>, &LabelMask)], exec: Execution) -> Result<f64> {
    let mut total = 0.0;
    for (x, label) in xs {
        total += model.eval_loss(x, label, exec)?;
    }
    Ok(total / xs.len() as f64)
}

/// Trains `model` in place on `train`, scoring `test` along the way.
///
/// The optimizer starts from zero moments on every call.
pub fn train<T: Real>(
    model: &mut FcnModel<T>,
    train: &[Sample],
    test: &[Sample],
    cfg: &TrainConfig,
    snapshots: Option<&SnapshotSpec>,
) -> Result<TrainReport> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptySet("training set"));
    }
    check_samples(model, train)?;
    check_samples(model, test)?;
    if let Some(spec) = snapshots {
        if spec.probe >= train.len() {
            return Err(Error::Config(format!("probe index {} outside training set", spec.probe)));
        }
        std::fs::create_dir_all(&spec.dir).map_err(|e| Error::io(&spec.dir, e))?;
    }
    let exec = cfg.execution;
    let inputs: Vec<Tensor<T>> = train.iter().map(|s| image_to_tensor(&s.image)).collect();
    let test_set: Vec<(Tensor<T>, &LabelMask)> = test
        .iter()
        .take(cfg.eval_samples)
        .map(|s| (image_to_tensor(&s.image), &s.label))
        .collect();

    let stages = train.len().div_ceil(cfg.chunk_size);
    let total = stages * cfg.max_iterations;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut state = AdamState::new(&model.params);
    let mut report = TrainReport::default();

    let record = |model: &FcnModel<T>, it: usize, active: usize, report: &mut TrainReport| -> Result<()> {
        let pool: Vec<(Tensor<T>, &LabelMask)> = inputs[..active]
            .iter()
            .zip(train)
            .take(cfg.eval_samples)
            .map(|(x, s)| (x.clone(), &s.label))
            .collect();
        let train_loss = mean_loss(model, &pool, exec)?;
        let test_loss = if test_set.is_empty() {
            None
        } else {
            Some(mean_loss(model, &test_set, exec)?)
        };
        report.curve.push(CurveRow {
            iteration: it,
            train_loss,
            test_loss,
        });
        if let Some(spec) = snapshots {
            let probs = model.predict(&train[spec.probe].image, exec)?;
            let path = spec.dir.join(format!("iter_{it}.png"));
            save_png(&probs_to_image(&probs)?, &path)?;
            report.snapshots.push(path);
        }
        Ok(())
    };

    record(model, 0, cfg.chunk_size.min(train.len()), &mut report)?;
    let mut it = 0;
    for stage in 0..stages {
        let active = ((stage + 1) * cfg.chunk_size).min(train.len());
        let mut order: Vec<usize> = Vec::new();
        for _ in 0..cfg.max_iterations {
            if order.is_empty() {
                order = (0..active).collect();
                order.shuffle(&mut rng);
                order.reverse();
            }
            let k = order.pop().expect("refilled above");
            let (_, grads) = model.loss_and_gradient(&inputs[k], &train[k].label, Some(&mut dropout_rng), exec)?;
            adam_step(&mut model.params, &grads, &mut state, &cfg.adam);
            it += 1;
            if it % cfg.snapshot_every == 0 {
                record(model, it, active, &mut report)?;
            }
        }
    }
    report.iterations = total;
    Ok(report)
}

/// Continues training on `extra` only (transfer to new city counts).
pub fn fine_tune<T: Real>(
    model: &mut FcnModel<T>,
    extra: &[Sample],
    test: &[Sample],
    cfg: &TrainConfig,
    snapshots: Option<&SnapshotSpec>,
) -> Result<TrainReport> {
    train(model, extra, test, cfg, snapshots)
}

pub fn write_curve_csv(path: &Path, rows: &[CurveRow]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
