//! End-to-end determinism: identical seeds must reproduce checkpoints,
//! training logs, and evaluation reports byte for byte.

use atm_core::data::{generate_synthetic_dataset, Dataset, SynthConfig};
use atm_core::eval::{self, Condition, EvalReport};
use atm_core::model::{init_params, CheckpointMeta, ModelConfig, Vocab};
use atm_core::params::Provenance;
use atm_core::trainer::{finetune_videoqa, pretrain_accl, CheckpointSink, TrainConfig};
use std::path::Path;

fn small_synth() -> SynthConfig {
    SynthConfig {
        videos: 24,
        clips: 8,
        dim: 32,
        candidates: 4,
        events: 5,
        noise: 0.02,
        ..Default::default()
    }
}

fn small_model() -> ModelConfig {
    ModelConfig {
        d_model: 16,
        heads: 2,
        t_max: 8,
        max_text_len: 32,
        dim_object: 32,
        dim_frame: 32,
        dim_motion: 32,
        pos_init_scale: 0.15,
        ..Default::default()
    }
}

fn small_train() -> TrainConfig {
    TrainConfig {
        batch_size: 8,
        max_epochs: 3,
        base_lr: 5e-3,
        seed: 11,
        shuffle_seed_stream: 12,
        ..Default::default()
    }
}

/// Run synth -> pretrain -> finetune -> eval into `dir`, writing every
/// artifact the CLI would write.
fn run_pipeline(dir: &Path, seed: u64) {
    let synth = small_synth();
    let (bundles, questions) = generate_synthetic_dataset(&synth, seed).unwrap();
    let dataset = Dataset::from_parts(bundles, questions).unwrap();
    dataset.write_dir(&dir.join("data")).unwrap();
    let dataset = Dataset::load_dir(&dir.join("data")).unwrap();

    let model_cfg = small_model();
    let vocab = Vocab::build(dataset.questions.iter().flat_map(|q| {
        std::iter::once(q.question_text.as_str())
            .chain(q.candidates.iter().map(String::as_str))
            .chain(q.action_phrase.as_deref())
    }));
    let params = init_params(&model_cfg, vocab.len(), seed).unwrap();
    let train = small_train();
    let meta = CheckpointMeta {
        config: model_cfg.clone(),
        vocab: vocab.tokens().to_vec(),
        provenance: Provenance::Fresh,
        seed,
    };

    std::fs::create_dir_all(dir.join("accl")).unwrap();
    let sink = CheckpointSink {
        dir: dir.join("accl"),
        meta: meta.clone(),
    };
    let (params, accl_log) =
        pretrain_accl(&dataset, params, &train, &model_cfg, &vocab, Some(&sink)).unwrap();
    accl_log.write(&dir.join("accl").join("train.log")).unwrap();

    std::fs::create_dir_all(dir.join("ft")).unwrap();
    let sink = CheckpointSink {
        dir: dir.join("ft"),
        meta,
    };
    let (params, ft_log) =
        finetune_videoqa(&dataset, params, &train, &model_cfg, &vocab, Some(&sink)).unwrap();
    ft_log.write(&dir.join("ft").join("train.log")).unwrap();

    for condition in [Condition::Full, Condition::Shuffled, Condition::Middle] {
        let report = eval::evaluate(&dataset, &params, &model_cfg, &vocab, condition, seed, 1).unwrap();
        eval::emit_report(
            &EvalReport::single(report),
            &dir.join(format!("report_{}.json", condition.key())),
        )
        .unwrap();
    }
}

fn file_bytes(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

#[test]
fn identical_seeds_reproduce_every_artifact_byte_for_byte() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    run_pipeline(dir_a.path(), 77);
    run_pipeline(dir_b.path(), 77);

    let artifacts = [
        "accl/checkpoint.atmc",
        "accl/train.log",
        "ft/checkpoint.atmc",
        "ft/train.log",
        "report_full.json",
        "report_shuffled.json",
        "report_middle.json",
    ];
    for rel in artifacts {
        assert_eq!(
            file_bytes(&dir_a.path().join(rel)),
            file_bytes(&dir_b.path().join(rel)),
            "artifact {rel} differs between identical runs"
        );
    }
    // and the data directories themselves
    for entry in std::fs::read_dir(dir_a.path().join("data/features")).unwrap() {
        let name = entry.unwrap().file_name();
        assert_eq!(
            file_bytes(&dir_a.path().join("data/features").join(&name)),
            file_bytes(&dir_b.path().join("data/features").join(&name)),
            "feature file {name:?} differs"
        );
    }
    assert_eq!(
        file_bytes(&dir_a.path().join("data/questions.jsonl")),
        file_bytes(&dir_b.path().join("data/questions.jsonl")),
    );
}

#[test]
fn different_seeds_change_the_checkpoint() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    run_pipeline(dir_a.path(), 77);
    run_pipeline(dir_b.path(), 78);
    assert_ne!(
        file_bytes(&dir_a.path().join("ft/checkpoint.atmc")),
        file_bytes(&dir_b.path().join("ft/checkpoint.atmc")),
    );
}

#[test]
fn cf_weight_zero_is_byte_equal_to_tsc_disabled() {
    let synth = small_synth();
    let (bundles, questions) = generate_synthetic_dataset(&synth, 5).unwrap();
    let dataset = Dataset::from_parts(bundles, questions).unwrap();
    let model_cfg = small_model();
    let vocab = Vocab::build(dataset.questions.iter().flat_map(|q| {
        std::iter::once(q.question_text.as_str())
            .chain(q.candidates.iter().map(String::as_str))
    }));

    let run = |tsc_enabled: bool, cf_weight: f64| {
        let params = init_params(&model_cfg, vocab.len(), 9).unwrap();
        let train = TrainConfig {
            tsc_enabled,
            cf_weight,
            from_scratch: true,
            ..small_train()
        };
        let (params, log) =
            finetune_videoqa(&dataset, params, &train, &model_cfg, &vocab, None).unwrap();
        let bytes: Vec<u64> = params
            .iter()
            .flat_map(|(_, t)| t.data().iter().map(|v| v.to_bits()))
            .collect();
        (bytes, log.to_jsonl().unwrap())
    };

    let (params_off, _) = run(false, 1.0);
    let (params_zero, _) = run(true, 0.0);
    assert_eq!(params_off, params_zero);
}
