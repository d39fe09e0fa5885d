//! Gradient-fidelity harness: runs central-difference checks of every
//! training objective through the full model on a tiny synthetic fixture.
//! Shared by the `gradcheck` CLI command and the acceptance suite.

use crate::autodiff::{Graph, Node};
use crate::data::{generate_synthetic_dataset, shuffle_clips, Dataset, FeatureBundle, SynthConfig};
use crate::error::Result;
use crate::gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
use crate::losses::{confusion_loss, AnswerDistribution};
use crate::model::{init_params, ModelConfig, ModelForward, Vocab};
use crate::rng::mix64;
use crate::trainer::{accl_batch_loss, finetune_batch_objective, AcclPair, FinetunePlan};

/// Fixture sizes: T=4 clips, d_model=16, 2 heads, 4 candidates, batch 4.
pub fn fixture_synth_config() -> SynthConfig {
    SynthConfig {
        videos: 4,
        clips: 4,
        dim: 16,
        candidates: 4,
        events: 4,
        temporal_per_video: 1,
        descriptive_per_video: 1,
        ..Default::default()
    }
}

pub fn fixture_model_config() -> ModelConfig {
    ModelConfig {
        d_model: 16,
        heads: 2,
        t_max: 4,
        max_text_len: 32,
        dim_object: 16,
        dim_frame: 16,
        dim_motion: 16,
        ..Default::default()
    }
}

struct Fixture {
    dataset: Dataset,
    model_cfg: ModelConfig,
    vocab: Vocab,
    shuffled: Vec<FeatureBundle>,
}

fn build_fixture(seed: u64) -> Result<Fixture> {
    let synth = fixture_synth_config();
    let (bundles, questions) = generate_synthetic_dataset(&synth, mix64(seed, 0xF1C))?;
    let dataset = Dataset::from_parts(bundles, questions)?;
    let vocab = Vocab::build(dataset.questions.iter().flat_map(|q| {
        std::iter::once(q.question_text.as_str())
            .chain(q.candidates.iter().map(String::as_str))
            .chain(q.action_phrase.as_deref())
    }));
    // fixed shuffles for the confusion branches, drawn once so every
    // rebuild of the loss sees identical inputs
    let mut shuffled = Vec::new();
    for (i, q) in dataset.questions.iter().enumerate() {
        if q.temporal_sensitive == Some(true) {
            let bundle = dataset.bundle(&q.video_id)?;
            shuffled.push(shuffle_clips(bundle, mix64(seed, 0x5AFE + i as u64))?.0);
        }
    }
    Ok(Fixture {
        dataset,
        model_cfg: fixture_model_config(),
        vocab,
        shuffled,
    })
}

/// Run the four loss checks (contrastive, cross-entropy, confusion,
/// combined); returns one report per loss, in that order.
pub fn run_loss_gradchecks(check: &GradCheckConfig, seed: u64) -> Result<Vec<(String, GradCheckReport)>> {
    let fx = build_fixture(seed)?;
    let params = init_params(&fx.model_cfg, fx.vocab.len(), mix64(seed, 0x9A7A))?;
    let mut reports = Vec::new();

    // 1. contrastive loss over 4 (video, action phrase) pairs
    let temporal: Vec<usize> = fx
        .dataset
        .questions
        .iter()
        .enumerate()
        .filter(|(_, q)| q.action_phrase.is_some())
        .map(|(i, _)| i)
        .take(4)
        .collect();
    let report = grad_check(&params, check, |p| {
        let g = Graph::new();
        let bound = p.bind(&g)?;
        let fwd = ModelForward::new(&g, &fx.model_cfg, &bound, &fx.vocab);
        let pairs: Vec<AcclPair> = temporal
            .iter()
            .map(|&i| {
                let q = &fx.dataset.questions[i];
                Ok(AcclPair {
                    bundle: fx.dataset.bundle(&q.video_id)?,
                    phrase: q.action_phrase.as_deref().unwrap(),
                })
            })
            .collect::<Result<_>>()?;
        let loss = accl_batch_loss(&fwd, &pairs)?;
        Ok((loss, bound))
    })?;
    reports.push(("accl_loss".to_string(), report));

    // 2. mean cross-entropy over a batch of 4 (no confusion branches)
    let first_four: Vec<usize> = (0..4.min(fx.dataset.questions.len())).collect();
    let report = grad_check(&params, check, |p| {
        let g = Graph::new();
        let bound = p.bind(&g)?;
        let fwd = ModelForward::new(&g, &fx.model_cfg, &bound, &fx.vocab);
        let plans: Vec<FinetunePlan> = first_four
            .iter()
            .map(|&i| {
                let record = &fx.dataset.questions[i];
                Ok(FinetunePlan {
                    record,
                    bundle: fx.dataset.bundle(&record.video_id)?,
                    shuffled: None,
                })
            })
            .collect::<Result<_>>()?;
        let (loss, _) = finetune_batch_objective(&fwd, &plans, 1.0, 1.0, false)?;
        Ok((loss, bound))
    })?;
    reports.push(("cross_entropy".to_string(), report));

    // 3. mean confusion entropy over the shuffled forwards alone
    let sensitive: Vec<usize> = fx
        .dataset
        .questions
        .iter()
        .enumerate()
        .filter(|(_, q)| q.temporal_sensitive == Some(true))
        .map(|(i, _)| i)
        .take(4)
        .collect();
    let report = grad_check(&params, check, |p| {
        let g = Graph::new();
        let bound = p.bind(&g)?;
        let fwd = ModelForward::new(&g, &fx.model_cfg, &bound, &fx.vocab);
        let mut terms = Vec::new();
        for (si, &qi) in sensitive.iter().enumerate() {
            let record = &fx.dataset.questions[qi];
            let f_v = fwd.encode_video(&fx.shuffled[si], fx.model_cfg.use_pos_embed)?;
            let logits = fwd.score_candidates(&f_v, &record.question_text, &record.candidates)?;
            terms.push(confusion_loss(&AnswerDistribution::new(logits)?)?);
        }
        let loss = Node::concat_cols(&terms)?.mean_all()?;
        Ok((loss, bound))
    })?;
    reports.push(("confusion_loss".to_string(), report));

    // 4. combined objective: 2 sensitive (with confusion) + 2 insensitive
    let insensitive: Vec<usize> = fx
        .dataset
        .questions
        .iter()
        .enumerate()
        .filter(|(_, q)| q.temporal_sensitive == Some(false))
        .map(|(i, _)| i)
        .take(2)
        .collect();
    let mixed: Vec<(usize, Option<usize>)> = sensitive
        .iter()
        .take(2)
        .enumerate()
        .map(|(si, &qi)| (qi, Some(si)))
        .chain(insensitive.iter().map(|&qi| (qi, None)))
        .collect();
    let report = grad_check(&params, check, |p| {
        let g = Graph::new();
        let bound = p.bind(&g)?;
        let fwd = ModelForward::new(&g, &fx.model_cfg, &bound, &fx.vocab);
        let plans: Vec<FinetunePlan> = mixed
            .iter()
            .map(|&(qi, shuffle_idx)| {
                let record = &fx.dataset.questions[qi];
                Ok(FinetunePlan {
                    record,
                    bundle: fx.dataset.bundle(&record.video_id)?,
                    shuffled: shuffle_idx.map(|si| fx.shuffled[si].clone()),
                })
            })
            .collect::<Result<_>>()?;
        let (loss, _) = finetune_batch_objective(&fwd, &plans, 1.0, 1.0, false)?;
        Ok((loss, bound))
    })?;
    reports.push(("combined_objective".to_string(), report));

    Ok(reports)
}
