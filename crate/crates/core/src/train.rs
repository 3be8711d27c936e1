//! Training and evaluation loops.

use std::io::Write;
use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{MlgcnError, Result};
use crate::model::{self, ModelConfig, ModelShape, ModelState, PreparedGraph};
use crate::optim::{Sgd, StepSchedule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub decay_factor: f64,
    pub decay_epoch: usize,
    pub momentum: f64,
    pub test_fraction: f64,
    /// Owned by the run rather than the config section.
    #[serde(skip)]
    pub seed: u64,
    /// Adds `wall_ms` to each metrics record; off keeps the file
    /// reproducible byte for byte.
    pub record_wall_ms: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 30,
            learning_rate: 0.0006,
            decay_factor: 0.1,
            decay_epoch: 100,
            momentum: 0.0,
            test_fraction: 0.2,
            seed: 0,
            record_wall_ms: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.decay_epoch == 0 {
            return Err(MlgcnError::Parameter("epochs, batch_size and decay_epoch must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(MlgcnError::Parameter(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor.is_finite()) {
            return Err(MlgcnError::Parameter(format!("decay_factor must be positive, got {}", self.decay_factor)));
        }
        Sgd::new(self.momentum)?;
        Ok(())
    }

    pub fn schedule(&self) -> StepSchedule {
        StepSchedule {
            base: self.learning_rate,
            factor: self.decay_factor,
            decay_epoch: self.decay_epoch,
        }
    }
}

/// One line of the metrics file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean of the per-batch mean losses seen while training.
    pub train_loss: f64,
    /// Class-mean accuracy on the training split after the epoch.
    pub train_acc: f64,
    /// Class-mean accuracy on the test split; `null` without a test split.
    pub test_acc: Option<f64>,
    pub lr: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// `None` for classes absent from the evaluated set.
    pub per_class: Vec<Option<f64>>,
    /// Mean over the classes present.
    pub class_mean_accuracy: f64,
    pub mean_loss: f64,
    /// Row = true class, column = predicted class.
    pub confusion: Array2<usize>,
}

impl EvalReport {
    /// Confusion matrix and per-class accuracy as CSV.
    pub fn to_csv(&self, class_names: &[String]) -> String {
        let mut out = String::from("true_class");
        for name in class_names {
            out.push_str(&format!(",pred_{name}"));
        }
        out.push_str(",count,accuracy\n");
        for (c, name) in class_names.iter().enumerate() {
            out.push_str(name);
            let row = self.confusion.row(c);
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            let acc = self.per_class[c].map_or_else(String::new, |a| format!("{a}"));
            out.push_str(&format!(",{},{acc}\n", row.sum()));
        }
        out.push_str(&format!(
            "overall,{}{},{}\nclass_mean,{}{},{}\n",
            ",".repeat(class_names.len()),
            self.total,
            self.accuracy,
            ",".repeat(class_names.len()),
            self.total,
            self.class_mean_accuracy
        ));
        out
    }
}

/// Prepares every sample of `data` for the model.
pub fn prepare_all(data: &Dataset, indices: &[usize], config: &ModelConfig, shape: &ModelShape) -> Result<Vec<(PreparedGraph, usize)>> {
    indices
        .iter()
        .map(|&i| {
            let s = &data.samples[i];
            PreparedGraph::new(s.graph.clone(), config, shape)
                .map(|p| (p, s.class))
                .map_err(|e| MlgcnError::Ingest(format!("graph {}: {e}", s.name)))
        })
        .collect()
}

pub fn shape_for(data: &Dataset) -> ModelShape {
    ModelShape {
        feature_dim: data.feature_dim,
        num_labels: data.num_labels,
        num_classes: data.num_classes(),
        max_nodes: data.max_nodes(),
    }
}

/// Accuracy report over `samples`.
pub fn evaluate(state: &ModelState, samples: &[(PreparedGraph, usize)]) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(MlgcnError::Usage("cannot evaluate an empty set of graphs".into()));
    }
    let classes = state.shape.num_classes;
    let mut confusion = Array2::<usize>::zeros((classes, classes));
    let mut loss_total = 0.0;
    for (sample, label) in samples {
        if *label >= classes {
            return Err(MlgcnError::Parameter(format!("class {label} out of range for {classes} classes")));
        }
        let (logits, _) = model::forward(sample, state)?;
        loss_total += model::cross_entropy(&logits, *label)?;
        confusion[[*label, argmax(logits.as_slice().expect("contiguous"))]] += 1;
    }
    let total = samples.len();
    let correct = (0..classes).map(|c| confusion[[c, c]]).sum::<usize>();
    let per_class: Vec<Option<f64>> = (0..classes)
        .map(|c| {
            let count = confusion.row(c).sum();
            (count > 0).then(|| confusion[[c, c]] as f64 / count as f64)
        })
        .collect();
    let present: Vec<f64> = per_class.iter().flatten().copied().collect();
    Ok(EvalReport {
        total,
        correct,
        accuracy: correct as f64 / total as f64,
        class_mean_accuracy: present.iter().sum::<f64>() / present.len() as f64,
        per_class,
        mean_loss: loss_total / total as f64,
        confusion,
    })
}

/// First index of the largest value.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: ModelState,
    pub history: Vec<EpochRecord>,
}

/// Trains from a fresh model seeded with `train.seed`. Each record is
/// also written to `metrics` as one JSON line when given.
pub fn train(
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    shape: ModelShape,
    train_set: &[(PreparedGraph, usize)],
    test_set: &[(PreparedGraph, usize)],
    mut metrics: Option<&mut dyn Write>,
) -> Result<TrainOutcome> {
    train_config.validate()?;
    if train_set.is_empty() {
        return Err(MlgcnError::Usage("training split is empty".into()));
    }
    let mut state = ModelState::new(model_config.clone(), shape, train_config.seed)?;
    let mut optimizer = Sgd::new(train_config.momentum)?;
    let schedule = train_config.schedule();
    // separate stream from parameter initialization
    let mut rng = ChaCha8Rng::seed_from_u64(train_config.seed ^ 0x5eed_5eed_5eed_5eed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(train_config.epochs);

    for epoch in 0..train_config.epochs {
        let started = Instant::now();
        let lr = schedule.rate(epoch);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for batch in order.chunks(train_config.batch_size) {
            let weight = 1.0 / batch.len() as f64;
            let mut batch_loss = 0.0;
            for &i in batch {
                let (sample, label) = &train_set[i];
                let (logits, cache) = model::forward(sample, &state)?;
                batch_loss += model::loss_and_backward(&logits, *label, &cache, sample, &mut state, weight)?;
            }
            optimizer
                .step(&mut state, lr)
                .map_err(|e| MlgcnError::numerical("train", format!("epoch {}: {e}", epoch + 1)))?;
            loss_sum += batch_loss * weight;
            batches += 1;
        }
        let train_eval = evaluate(&state, train_set)?;
        let test_acc = if test_set.is_empty() {
            None
        } else {
            Some(evaluate(&state, test_set)?.class_mean_accuracy)
        };
        let record = EpochRecord {
            epoch: epoch + 1,
            train_loss: loss_sum / batches as f64,
            train_acc: train_eval.class_mean_accuracy,
            test_acc,
            lr,
            wall_ms: train_config.record_wall_ms.then(|| started.elapsed().as_millis() as u64),
        };
        log::info!(
            "epoch {} loss {:.5} train {:.4} test {}",
            record.epoch,
            record.train_loss,
            record.train_acc,
            record.test_acc.map_or("-".into(), |a| format!("{a:.4}"))
        );
        if let Some(out) = metrics.as_deref_mut() {
            let line = serde_json::to_string(&record).expect("record serializes");
            writeln!(out, "{line}").map_err(|e| MlgcnError::io("metrics", e))?;
        }
        history.push(record);
    }
    Ok(TrainOutcome { state, history })
}
