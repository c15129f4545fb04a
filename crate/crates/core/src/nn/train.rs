use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::loss::bce_loss;
use super::model::Model;
use super::select::{select_support, SelectionPolicy};
use super::tensor::{Matrix, Real};
use super::{Mode, NnError, Result};
use crate::datagen::Dataset;
use crate::metrics::{self, fmt_opt, Confusion};
use crate::rng;

const EVAL_CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    #[serde(default)]
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 1000,
            epochs: 20,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_pd: Option<f64>,
    pub val_ppv: Option<f64>,
    pub val_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    /// Final-epoch training loss exceeded the first epoch's.
    pub loss_regressed: bool,
}

impl History {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,val_pd,val_ppv,val_auc,best\n");
        for r in &self.epochs {
            let _ = writeln!(
                out,
                "{},{:.6},{:.6},{},{},{},{}",
                r.epoch,
                r.train_loss,
                r.val_loss,
                fmt_opt(r.val_pd),
                fmt_opt(r.val_ppv),
                fmt_opt(r.val_auc),
                (r.epoch == self.best_epoch) as u8
            );
        }
        out
    }
}

/// Inference-mode scores of a labelled dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub loss: f64,
    pub confusion: Confusion,
    pub auc: Option<f64>,
    /// Fraction of samples whose selected support equals the label exactly.
    pub exact_rate: f64,
}

fn gather<T: Real>(ds: &Dataset, idx: &[usize]) -> (Matrix<T>, Matrix<T>) {
    let d = ds.input_dim();
    let n = ds.label_dim();
    let mut x = Vec::with_capacity(idx.len() * d);
    let mut y = Vec::with_capacity(idx.len() * n);
    for &i in idx {
        let s = ds.sample(i);
        x.extend(s.input.iter().map(|&v| T::from_f32(v).unwrap()));
        y.extend(s.label.iter().map(|&v| if v == 1 { T::one() } else { T::zero() }));
    }
    (Matrix::from_vec(idx.len(), d, x), Matrix::from_vec(idx.len(), n, y))
}

fn check_dims<T: Real>(model: &Model<T>, ds: &Dataset) -> Result<()> {
    let cfg = model.config();
    if ds.input_dim() != cfg.input_dim || ds.label_dim() != cfg.output_dim {
        return Err(NnError::Dimension(format!(
            "dataset is {}→{}, model is {}→{}",
            ds.input_dim(),
            ds.label_dim(),
            cfg.input_dim,
            cfg.output_dim
        )));
    }
    Ok(())
}

/// Scores `ds` in infer mode with the given support selection rule.
pub fn evaluate<T: Real>(model: &Model<T>, ds: &Dataset, policy: SelectionPolicy) -> Result<EvalSummary> {
    check_dims(model, ds)?;
    if ds.is_empty() {
        return Err(NnError::Data("cannot evaluate an empty dataset".into()));
    }
    let n = ds.label_dim();
    let mut conf = Confusion::default();
    let mut scores = Vec::with_capacity(ds.len() * n);
    let mut truth = Vec::with_capacity(ds.len() * n);
    let mut loss_sum = 0.0;
    let mut exact = 0usize;
    let all: Vec<usize> = (0..ds.len()).collect();
    for chunk in all.chunks(EVAL_CHUNK) {
        let (x, y) = gather::<T>(ds, chunk);
        let probs = model.predict(&x)?;
        loss_sum += bce_loss(&probs, &y)?.to_f64().unwrap() * chunk.len() as f64;
        for r in 0..chunk.len() {
            let p: Vec<f64> = probs.row(r).iter().map(|v| v.to_f64().unwrap()).collect();
            let labels: Vec<bool> = y.row(r).iter().map(|&v| v == T::one()).collect();
            let est = select_support(&p, policy)?;
            conf.accumulate_slots(&labels, est.as_slice())
                .map_err(|e| NnError::Data(e.to_string()))?;
            exact += (est.as_slice() == labels.as_slice()) as usize;
            scores.extend(p);
            truth.extend(labels);
        }
    }
    Ok(EvalSummary {
        loss: loss_sum / ds.len() as f64,
        confusion: conf,
        auc: metrics::auc(&scores, &truth).ok(),
        exact_rate: exact as f64 / ds.len() as f64,
    })
}

/// Mini-batch Adam on binary cross-entropy.
///
/// Samples are reshuffled every epoch; the returned model carries the
/// parameters of the epoch with the lowest validation loss.
pub fn train<T: Real>(
    mut model: Model<T>,
    train_set: &Dataset,
    val_set: &Dataset,
    cfg: &TrainConfig,
) -> Result<(Model<T>, History)> {
    check_dims(&model, train_set)?;
    check_dims(&model, val_set)?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(NnError::Data("training and validation sets must be non-empty".into()));
    }
    if cfg.batch_size == 0 || cfg.batch_size > train_set.len() {
        return Err(NnError::Config(format!(
            "batch size {} invalid for {} training samples",
            cfg.batch_size,
            train_set.len()
        )));
    }
    if cfg.epochs == 0 {
        return Err(NnError::Config("at least one epoch is required".into()));
    }
    if !(cfg.adam.learning_rate > 0.0) {
        return Err(NnError::Config("learning rate must be positive".into()));
    }
    let needs_two = model.layers().iter().any(|l| l.norm.is_some());
    if needs_two && cfg.batch_size < 2 {
        return Err(NnError::Config("batch normalization needs batches of at least 2".into()));
    }

    let policy = SelectionPolicy::TopM(val_set.meta.m.min(val_set.label_dim()));
    let mut rng = rng::stream_rng(cfg.seed, rng::stream::TRAIN);
    let mut adam = Adam::new(cfg.adam, &model);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut records = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Model<T>)> = None;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            if needs_two && batch.len() < 2 {
                continue;
            }
            let (x, y) = gather::<T>(train_set, batch);
            let (probs, cache) = model.forward(&x, Mode::Train, &mut rng)?;
            loss_sum += bce_loss(&probs, &y)?.to_f64().unwrap() * batch.len() as f64;
            seen += batch.len();
            let grads = model.backward(&cache, &y)?;
            adam.step(&mut model, &grads)?;
        }
        let val = evaluate(&model, val_set, policy)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / seen as f64,
            val_loss: val.loss,
            val_pd: val.confusion.pd(),
            val_ppv: val.confusion.ppv(),
            val_auc: val.auc,
        };
        log::info!(
            "epoch {epoch}: train loss {:.5}, val loss {:.5}, val P_D {}",
            record.train_loss,
            record.val_loss,
            fmt_opt(record.val_pd)
        );
        if best.as_ref().is_none_or(|(loss, _, _)| val.loss < *loss) {
            best = Some((val.loss, epoch, model.clone()));
        }
        records.push(record);
    }

    let (_, best_epoch, mut best_model) = best.expect("at least one epoch");
    best_model.mark_trained();
    let loss_regressed = records.last().unwrap().train_loss > records[0].train_loss;
    if loss_regressed {
        log::warn!("training loss increased between the first and last epoch");
    }
    Ok((
        best_model,
        History {
            epochs: records,
            best_epoch,
            loss_regressed,
        },
    ))
}
