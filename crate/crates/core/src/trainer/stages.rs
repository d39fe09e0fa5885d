//! The two training stages and their orchestration.

use super::forward::{accl_batch_loss, finetune_batch_objective, AcclPair, FinetunePlan};
use super::log::{EpochRecord, TrainLog};
use super::{make_batches, TrainConfig};
use crate::autodiff::Graph;
use crate::data::{shuffle_clips, Dataset};
use crate::error::{CoreError, Result};
use crate::eval::{evaluate, Condition};
use crate::model::{save_checkpoint, CheckpointMeta, ModelConfig, ModelForward, Vocab};
use crate::optim::{cosine_lr, AdamConfig, AdamState};
use crate::params::{ParamSet, Provenance};
use crate::rng::{fnv1a, mix64};
use std::path::PathBuf;
use std::time::Instant;

/// Where to write intermediate/final checkpoints during training.
pub struct CheckpointSink {
    pub dir: PathBuf,
    pub meta: CheckpointMeta,
}

impl CheckpointSink {
    fn save(&self, params: &ParamSet, name: &str) -> Result<()> {
        let mut meta = self.meta.clone();
        meta.provenance = params.provenance;
        save_checkpoint(&self.dir.join(name), params, &meta)
    }
}

fn adam_for(cfg: &TrainConfig) -> AdamState {
    AdamState::new(AdamConfig {
        base_lr: cfg.base_lr,
        max_epochs: cfg.max_epochs,
        ..Default::default()
    })
}

/// Stage 1: align video representations with their parsed action phrases.
/// Questions without an action phrase are skipped (and counted); batches
/// that fall under 2 pairs are dropped since the loss needs negatives.
pub fn pretrain_accl(
    dataset: &Dataset,
    mut params: ParamSet,
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    vocab: &Vocab,
    sink: Option<&CheckpointSink>,
) -> Result<(ParamSet, TrainLog)> {
    cfg.validate()?;
    model_cfg.validate()?;
    if cfg.batch_size < 2 {
        return Err(CoreError::Config(
            "contrastive pretraining needs batch_size >= 2".into(),
        ));
    }

    let usable: Vec<usize> = dataset
        .questions
        .iter()
        .enumerate()
        .filter(|(_, q)| q.action_phrase.as_deref().map(|p| !p.is_empty()).unwrap_or(false))
        .map(|(i, _)| i)
        .collect();
    let skipped = dataset.questions.len() - usable.len();
    if usable.len() < 2 {
        return Err(CoreError::validation(format!(
            "pretraining needs >= 2 questions with action phrases, found {}",
            usable.len()
        )));
    }

    let mut adam = adam_for(cfg);
    let mut log = TrainLog::new();
    let stage_seed = mix64(cfg.seed, 0xACC1);

    for epoch in 0..cfg.max_epochs {
        let start = Instant::now();
        let mut loss_sum = 0.0;
        let mut sample_count = 0usize;
        let mut batch_count = 0usize;

        for batch in make_batches(usable.len(), cfg.batch_size, stage_seed, epoch) {
            if batch.len() < 2 {
                continue;
            }
            let graph = Graph::new();
            let bound = params.bind(&graph)?;
            let fwd = ModelForward::new(&graph, model_cfg, &bound, vocab);
            let pairs: Vec<AcclPair> = batch
                .iter()
                .map(|&bi| {
                    let record = &dataset.questions[usable[bi]];
                    Ok(AcclPair {
                        bundle: dataset.bundle(&record.video_id)?,
                        phrase: record.action_phrase.as_deref().expect("filtered"),
                    })
                })
                .collect::<Result<_>>()?;
            let loss = accl_batch_loss(&fwd, &pairs)?;
            loss.backward()?;
            adam.step(&mut params, &bound.grads(), epoch)?;

            loss_sum += loss.scalar_value() * batch.len() as f64;
            sample_count += batch.len();
            batch_count += 1;
        }

        let mut record = EpochRecord {
            stage: "accl".into(),
            epoch,
            lr: cosine_lr(cfg.base_lr, epoch, cfg.max_epochs),
            loss: loss_sum / sample_count.max(1) as f64,
            samples: sample_count,
            batches: batch_count,
            loss_ce: None,
            loss_cf: None,
            skipped_no_phrase: Some(skipped),
            skipped_confusion_t1: None,
            eval_acc_all: None,
            wall_s: None,
        };
        if cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0 {
            let eval = evaluate(dataset, &params, model_cfg, vocab, Condition::Full, cfg.seed, 1)?;
            record.eval_acc_all = eval.all.accuracy;
            if let Some(sink) = sink {
                sink.save(&params, &format!("checkpoint_epoch{:03}.atmc", epoch + 1))?;
            }
        }
        if cfg.log_wall_time {
            record.wall_s = Some(start.elapsed().as_secs_f64());
        }
        log.append(record)?;
    }

    params.provenance = Provenance::Pretrained;
    if let Some(sink) = sink {
        sink.save(&params, "checkpoint.atmc")?;
    }
    Ok((params, log))
}

/// Stage 2: cross-entropy over candidate answers for every sample, plus the
/// entropy-confusion term on a freshly shuffled copy of each
/// temporal-sensitive sample (a new permutation per sample per epoch).
pub fn finetune_videoqa(
    dataset: &Dataset,
    mut params: ParamSet,
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    vocab: &Vocab,
    sink: Option<&CheckpointSink>,
) -> Result<(ParamSet, TrainLog)> {
    cfg.validate()?;
    model_cfg.validate()?;
    if params.provenance == Provenance::Fresh && !cfg.from_scratch {
        return Err(CoreError::Usage(
            "fine-tuning expects pretrained parameters; run the contrastive stage first or set from_scratch"
                .into(),
        ));
    }
    for (i, q) in dataset.questions.iter().enumerate() {
        if q.temporal_sensitive.is_none() {
            return Err(CoreError::validation_at(
                i + 1,
                format!(
                    "question {} lacks temporal_sensitive; run the parse step first",
                    q.question_id
                ),
            ));
        }
    }

    // cf_weight == 0 must be byte-equal to tsc_enabled == false, so the
    // shuffled forward is skipped entirely rather than multiplied by zero.
    let tsc_active = cfg.tsc_enabled && cfg.cf_weight > 0.0 && !model_cfg.open_ended;

    let mut adam = adam_for(cfg);
    let mut log = TrainLog::new();
    let stage_seed = mix64(cfg.seed, 0xF17E);

    for epoch in 0..cfg.max_epochs {
        let start = Instant::now();
        let mut loss_sum = 0.0;
        let mut sample_count = 0usize;
        let mut batch_count = 0usize;
        let mut skipped_t1 = 0usize;
        let mut ce_sum = 0.0;
        let mut ce_count = 0usize;
        let mut cf_sum = 0.0;
        let mut cf_count = 0usize;

        for batch in make_batches(dataset.questions.len(), cfg.batch_size, stage_seed, epoch) {
            let graph = Graph::new();
            let bound = params.bind(&graph)?;
            let fwd = ModelForward::new(&graph, model_cfg, &bound, vocab);

            let mut plans = Vec::with_capacity(batch.len());
            for &qi in &batch {
                let record = &dataset.questions[qi];
                let bundle = dataset.bundle(&record.video_id)?;
                let sensitive = record.temporal_sensitive == Some(true);
                let shuffled = if tsc_active && sensitive {
                    if bundle.t() < 2 {
                        skipped_t1 += 1;
                        None
                    } else {
                        let seed = mix64(
                            mix64(cfg.shuffle_seed_stream, fnv1a(&record.question_id)),
                            epoch as u64,
                        );
                        Some(shuffle_clips(bundle, seed)?.0)
                    }
                } else {
                    None
                };
                plans.push(FinetunePlan {
                    record,
                    bundle,
                    shuffled,
                });
            }

            let (loss, stats) = finetune_batch_objective(
                &fwd,
                &plans,
                cfg.ce_weight,
                cfg.cf_weight,
                cfg.cf_stop_text_grad,
            )?;
            loss.backward()?;
            adam.step(&mut params, &bound.grads(), epoch)?;

            loss_sum += loss.scalar_value() * batch.len() as f64;
            sample_count += batch.len();
            batch_count += 1;
            ce_sum += stats.ce_sum;
            ce_count += stats.ce_count;
            cf_sum += stats.cf_sum;
            cf_count += stats.cf_count;
        }

        let mut record = EpochRecord {
            stage: "finetune".into(),
            epoch,
            lr: cosine_lr(cfg.base_lr, epoch, cfg.max_epochs),
            loss: loss_sum / sample_count.max(1) as f64,
            samples: sample_count,
            batches: batch_count,
            loss_ce: if ce_count > 0 {
                Some(ce_sum / ce_count as f64)
            } else {
                None
            },
            loss_cf: if cf_count > 0 {
                Some(cf_sum / cf_count as f64)
            } else {
                None
            },
            skipped_no_phrase: None,
            skipped_confusion_t1: if tsc_active { Some(skipped_t1) } else { None },
            eval_acc_all: None,
            wall_s: None,
        };
        if cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0 {
            let eval = evaluate(dataset, &params, model_cfg, vocab, Condition::Full, cfg.seed, 1)?;
            record.eval_acc_all = eval.all.accuracy;
            if let Some(sink) = sink {
                sink.save(&params, &format!("checkpoint_epoch{:03}.atmc", epoch + 1))?;
            }
        }
        if cfg.log_wall_time {
            record.wall_s = Some(start.elapsed().as_secs_f64());
        }
        log.append(record)?;
    }

    params.provenance = Provenance::Finetuned;
    if let Some(sink) = sink {
        sink.save(&params, "checkpoint.atmc")?;
    }
    Ok((params, log))
}
