use std::collections::BTreeMap;

use log::{info, warn};
use rand::seq::SliceRandom;
use serde::Serialize;

use super::loss::{LossBreakdown, Phase};
use super::optim::{backward, Adam, Batch};
use super::LearnError;
use crate::corpus::{DatasetSplit, Sample};
use crate::eval::average_precision;
use crate::model::{Model, ModelConfig, Vocab};
use crate::rng::{rng_for, Rng, STREAM_INIT, STREAM_SHUFFLE};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainConfig {
    pub phase1_epochs: usize,
    pub phase2_epochs: usize,
    /// Samples per phase-two batch; pairs per phase-one batch.
    pub batch_size: usize,
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            phase1_epochs: 4,
            phase2_epochs: 4,
            batch_size: 2,
            lr: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        if self.batch_size == 0 {
            return Err(LearnError::Config("batch size must be at least 1".into()));
        }
        if !(self.lr > 0.0) {
            return Err(LearnError::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochLog {
    pub phase: u8,
    pub epoch: usize,
    pub steps: usize,
    pub loss: LossBreakdown<f64>,
    pub val_ap: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<F> {
    pub model: Model<F>,
    pub log: Vec<EpochLog>,
    /// Phase-two epoch whose parameters were kept, if any.
    pub best_epoch: Option<usize>,
}

/// (correct, buggy) index pairs of a synthetic split, matched by repository,
/// file and function.
pub fn pairs_of(split: &DatasetSplit) -> Vec<(usize, usize)> {
    let mut groups: BTreeMap<(&str, &str, &str), (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (i, s) in split.samples.iter().enumerate() {
        let g = groups.entry((&s.meta.repo, &s.meta.file, &s.meta.function)).or_default();
        if s.is_buggy() {
            g.1.push(i);
        } else {
            g.0.push(i);
        }
    }
    let mut pairs = Vec::new();
    let mut unpaired = 0;
    for (correct, buggy) in groups.into_values() {
        unpaired += correct.len().abs_diff(buggy.len());
        pairs.extend(correct.into_iter().zip(buggy));
    }
    if unpaired > 0 {
        warn!("{unpaired} synthetic samples have no counterpart and are not used in phase 1");
    }
    pairs.sort_unstable();
    pairs
}

/// Optimizer state bound to a model.
pub struct Trainer<F> {
    pub model: Model<F>,
    adam: Adam<F>,
}

impl<F: Scalar> Trainer<F> {
    pub fn new(model: Model<F>, config: &TrainConfig) -> Self {
        let adam = Adam::new(&model.params, config.lr, config.adam_beta1, config.adam_beta2, config.adam_eps);
        Trainer { model, adam }
    }

    pub fn step(&mut self, batch: Batch<'_>) -> Result<LossBreakdown<F>, LearnError> {
        let (grads, loss) = backward(&self.model, batch)?;
        if !loss.total.is_finite() {
            return Err(LearnError::Numerics("loss".into()));
        }
        self.adam.step(&mut self.model.params, &grads)?;
        Ok(loss)
    }

    pub fn steps(&self) -> usize {
        self.adam.steps() as usize
    }

    fn epoch_pairs(&mut self, split: &DatasetSplit, pairs: &mut [(usize, usize)], bs: usize, rng: &mut Rng) -> Result<LossBreakdown<f64>, LearnError> {
        pairs.shuffle(rng);
        let mut sum = LossBreakdown::<f64>::default();
        for chunk in pairs.chunks(bs) {
            let batch: Vec<(&Sample, &Sample)> = chunk.iter().map(|&(a, b)| (&split.samples[a], &split.samples[b])).collect();
            let l = self.step(Batch::Pairs(&batch))?;
            sum.add(&l.to_f64().scaled(chunk.len() as f64));
        }
        Ok(sum.scaled(1.0 / pairs.len().max(1) as f64))
    }

    fn epoch_samples(&mut self, split: &DatasetSplit, order: &mut [usize], bs: usize, rng: &mut Rng) -> Result<LossBreakdown<f64>, LearnError> {
        order.shuffle(rng);
        let mut sum = LossBreakdown::<f64>::default();
        for chunk in order.chunks(bs) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &split.samples[i]).collect();
            let l = self.step(Batch::Samples(&batch))?;
            sum.add(&l.to_f64().scaled(chunk.len() as f64));
        }
        Ok(sum.scaled(1.0 / order.len().max(1) as f64))
    }
}

/// Builds the vocabulary from the two training splits, initializes a model
/// and trains it; see [`train_two_phase_from`].
pub fn train_two_phase<F: Scalar>(
    syn: &DatasetSplit,
    real: &DatasetSplit,
    val: &DatasetSplit,
    model_config: ModelConfig,
    config: &TrainConfig,
    on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome<F>, LearnError> {
    let texts = syn.samples.iter().chain(&real.samples).flat_map(|s| s.tokens.iter().map(String::as_str));
    let vocab = Vocab::build(texts, 1);
    let model = Model::new(model_config, vocab, &mut rng_for(config.seed, STREAM_INIT))?;
    train_two_phase_from(model, syn, real, val, config, on_epoch)
}

/// Phase one iterates shuffled (correct, buggy) pairs of `syn` with the
/// contrastive loss; phase two iterates `real` with the three task losses.
/// After every phase-two epoch the model is scored on `val` and the
/// parameters with the best average precision are returned (earliest epoch
/// on ties). With no phase-two epochs the phase-one parameters are returned.
pub fn train_two_phase_from<F: Scalar>(
    model: Model<F>,
    syn: &DatasetSplit,
    real: &DatasetSplit,
    val: &DatasetSplit,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome<F>, LearnError> {
    config.validate()?;
    let mut rng = rng_for(config.seed, STREAM_SHUFFLE);
    let mut trainer = Trainer::new(model, config);
    let mut log = Vec::new();
    let mut record = |entry: EpochLog, log: &mut Vec<EpochLog>| {
        info!(
            "phase {} epoch {} loss {:.5} val_ap {:?}",
            entry.phase, entry.epoch, entry.loss.total, entry.val_ap
        );
        on_epoch(&entry);
        log.push(entry);
    };

    if config.phase1_epochs > 0 {
        let mut pairs = pairs_of(syn);
        if pairs.is_empty() {
            return Err(LearnError::Config("phase 1 needs at least one synthetic pair".into()));
        }
        for epoch in 1..=config.phase1_epochs {
            let loss = trainer.epoch_pairs(syn, &mut pairs, config.batch_size, &mut rng)?;
            record(EpochLog { phase: Phase::One.number(), epoch, steps: trainer.steps(), loss, val_ap: None }, &mut log);
        }
    }

    let mut best: Option<(f64, usize, crate::model::ModelParams<F>)> = None;
    if config.phase2_epochs > 0 {
        if !real.samples.iter().any(|s| s.is_buggy()) {
            return Err(LearnError::Config("phase 2 needs at least one buggy sample".into()));
        }
        let has_val = val.samples.iter().any(|s| s.is_buggy());
        if !has_val {
            warn!("validation split has no buggy samples; keeping the last epoch");
        }
        let mut order: Vec<usize> = (0..real.samples.len()).collect();
        for epoch in 1..=config.phase2_epochs {
            let loss = trainer.epoch_samples(real, &mut order, config.batch_size, &mut rng)?;
            let val_ap = if has_val { Some(average_precision(&trainer.model, val)?) } else { None };
            if let Some(ap) = val_ap {
                if best.as_ref().is_none_or(|(b, _, _)| ap > *b) {
                    best = Some((ap, epoch, trainer.model.params.clone()));
                }
            }
            record(EpochLog { phase: Phase::Two.number(), epoch, steps: trainer.steps(), loss, val_ap }, &mut log);
        }
    }
    let mut model = trainer.model;
    let best_epoch = best.map(|(_, epoch, params)| {
        model.params = params;
        epoch
    });
    Ok(TrainOutcome { model, log, best_epoch })
}
