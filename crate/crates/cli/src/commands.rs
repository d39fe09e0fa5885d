//! Subcommand dispatch. Exit codes: 0 success, 1 validation/usage error,
//! 2 runtime error.

use crate::config::RunConfig;
use crate::logging::{log_debug, log_info};
use anyhow::{anyhow, bail, Context};
use atm_core::data::{load_question_manifest, write_question_manifest, Dataset};
use atm_core::eval::{self, Condition, EvalReport};
use atm_core::model::{
    init_params, load_checkpoint, CheckpointMeta, ModelConfig, Vocab,
};
use atm_core::params::Provenance;
use atm_core::qparse::Lexicon;
use atm_core::trainer::{finetune_videoqa, pretrain_accl, CheckpointSink};
use atm_core::CoreError;
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "atm",
    version,
    about = "Video question answering pipeline: synthesize data, parse questions, pretrain, fine-tune, evaluate"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// JSON config file; flags and --set overrides win over it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. --set model.d_model=64
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Master seed; every stage seed is derived from it.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn resolve(&self) -> anyhow::Result<RunConfig> {
        RunConfig::resolve(self.config.as_deref(), &self.set, self.seed)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic temporality benchmark into a directory.
    Synth {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        /// Number of videos (overrides synth.videos).
        #[arg(long)]
        videos: Option<usize>,
        /// Overwrite a non-empty output directory.
        #[arg(long)]
        force: bool,
    },
    /// Fill action_phrase and temporal_sensitive fields of a manifest.
    Parse {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Replace the shipped temporal keyword list.
        #[arg(long)]
        keywords: Option<PathBuf>,
        /// Replace the shipped verb lexicon.
        #[arg(long)]
        verbs: Option<PathBuf>,
    },
    /// Stage 1: action-centric contrastive pretraining.
    Pretrain {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Dataset directory (questions.jsonl + features/).
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Stage 2: VideoQA fine-tuning with the confusion objective.
    Finetune {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint to start from (output of pretrain).
        #[arg(long)]
        init: Option<PathBuf>,
        /// Start from freshly initialized parameters instead.
        #[arg(long)]
        from_scratch: bool,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Evaluate a checkpoint under one condition and write a report.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        /// full | shuffled | middle
        #[arg(long)]
        condition: String,
        #[arg(long)]
        report: PathBuf,
        /// Parallel scoring threads.
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Verify analytic gradients of every objective against finite
    /// differences; exits 0 iff the worst relative error is inside tol.
    Gradcheck {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Combine full- and middle-condition reports into the delta metric.
    ReportDelta {
        #[arg(long)]
        full: PathBuf,
        #[arg(long)]
        middle: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

pub fn run(cli: Cli) -> i32 {
    match dispatch(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err:#}");
            exit_code_for(&err)
        }
    }
}

fn exit_code_for(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(core) = cause.downcast_ref::<CoreError>() {
            return match core {
                CoreError::Validation { .. }
                | CoreError::Config(_)
                | CoreError::Usage(_)
                | CoreError::Format { .. }
                | CoreError::Json { .. }
                | CoreError::Shape { .. } => 1,
                CoreError::NonFinite { .. }
                | CoreError::BadGradient { .. }
                | CoreError::NonDeterministic(_)
                | CoreError::Io { .. } => 2,
            };
        }
    }
    // config/CLI-level problems are validation errors
    if err.to_string().contains("config") || err.to_string().contains("output directory") {
        1
    } else {
        2
    }
}

fn prepare_out_dir(out: &Path, force: bool) -> anyhow::Result<()> {
    if out.exists() {
        let non_empty = std::fs::read_dir(out)
            .with_context(|| format!("reading output directory {}", out.display()))?
            .next()
            .is_some();
        if non_empty && !force {
            bail!(
                "output directory {} is not empty; pass --force to overwrite",
                out.display()
            );
        }
    }
    std::fs::create_dir_all(out)
        .with_context(|| format!("creating output directory {}", out.display()))?;
    Ok(())
}

/// Widths and t_max are properties of the data; fold them into the model
/// config so checkpoints are self-describing.
fn adapt_model_to_data(mut model: ModelConfig, dataset: &Dataset) -> anyhow::Result<ModelConfig> {
    let first = dataset
        .bundles
        .values()
        .next()
        .ok_or_else(|| anyhow!("dataset has no feature bundles"))?;
    let (d_o, d_r, d_m) = first.dims();
    model.dim_object = d_o;
    model.dim_frame = d_r;
    model.dim_motion = d_m;
    let max_t = dataset.bundles.values().map(|b| b.t()).max().unwrap_or(1);
    model.t_max = model.t_max.max(max_t);
    Ok(model)
}

fn build_vocab(dataset: &Dataset) -> Vocab {
    Vocab::build(dataset.questions.iter().flat_map(|q| {
        std::iter::once(q.question_text.as_str())
            .chain(q.candidates.iter().map(String::as_str))
            .chain(q.action_phrase.as_deref())
    }))
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Synth {
            cfg,
            out,
            videos,
            force,
        } => {
            let mut run = cfg.resolve()?;
            if let Some(v) = videos {
                run.synth.videos = v;
            }
            prepare_out_dir(&out, force)?;
            let (bundles, questions) =
                atm_core::data::generate_synthetic_dataset(&run.synth, run.seed)?;
            let dataset = Dataset::from_parts(bundles, questions)?;
            dataset.write_dir(&out)?;
            run.echo(&out.join("config.json"))?;
            log_info!(
                "synth: wrote {} videos / {} questions to {}",
                dataset.bundles.len(),
                dataset.questions.len(),
                out.display()
            );
            Ok(())
        }
        Command::Parse {
            manifest,
            out,
            keywords,
            verbs,
        } => {
            let lex = match (&keywords, &verbs) {
                (None, None) => Lexicon::builtin().clone(),
                _ => {
                    let mut lex = Lexicon::builtin().clone();
                    if let Some(k) = &keywords {
                        lex = Lexicon::with_keywords_file(k)?;
                    }
                    if let Some(v) = &verbs {
                        let verbs_lex = Lexicon::with_verbs_file(v)?;
                        lex = merge_lexicons(lex, verbs_lex);
                    }
                    lex
                }
            };
            let mut records = load_question_manifest(&manifest)?;
            let mut filled_phrase = 0usize;
            let mut filled_flag = 0usize;
            for r in &mut records {
                let had_phrase = r.action_phrase.is_some();
                let had_flag = r.temporal_sensitive.is_some();
                r.annotate(&lex);
                if !had_phrase && r.action_phrase.is_some() {
                    filled_phrase += 1;
                }
                if !had_flag {
                    filled_flag += 1;
                }
            }
            write_question_manifest(&out, &records)?;
            log_info!(
                "parse: {} records; filled {} action phrases, {} sensitivity flags",
                records.len(),
                filled_phrase,
                filled_flag
            );
            Ok(())
        }
        Command::Pretrain {
            cfg,
            data,
            out,
            force,
        } => {
            let run = cfg.resolve()?;
            prepare_out_dir(&out, force)?;
            let dataset = Dataset::load_dir(&data)?;
            let model_cfg = adapt_model_to_data(run.model.clone(), &dataset)?;
            let vocab = build_vocab(&dataset);
            let params = init_params(&model_cfg, vocab.len(), run.seed)?;
            let sink = CheckpointSink {
                dir: out.clone(),
                meta: CheckpointMeta {
                    config: model_cfg.clone(),
                    vocab: vocab.tokens().to_vec(),
                    provenance: Provenance::Fresh,
                    seed: run.seed,
                },
            };
            let (params, log) =
                pretrain_accl(&dataset, params, &run.train, &model_cfg, &vocab, Some(&sink))?;
            log.write(&out.join("train.log"))?;
            run.echo(&out.join("config.json"))?;
            log_debug!("pretrain: {} parameters", params.total_values());
            log_info!(
                "pretrain: {} epochs done, final loss {:.4}",
                log.records().len(),
                log.records().last().map(|r| r.loss).unwrap_or(f64::NAN)
            );
            Ok(())
        }
        Command::Finetune {
            cfg,
            data,
            init,
            from_scratch,
            out,
            force,
        } => {
            let mut run = cfg.resolve()?;
            run.train.from_scratch = from_scratch || run.train.from_scratch;
            prepare_out_dir(&out, force)?;
            let dataset = Dataset::load_dir(&data)?;
            let (params, model_cfg, vocab) = match &init {
                Some(ckpt) => {
                    let (params, meta) = load_checkpoint(ckpt)?;
                    let vocab = meta.vocab();
                    (params, meta.config, vocab)
                }
                None => {
                    let model_cfg = adapt_model_to_data(run.model.clone(), &dataset)?;
                    let vocab = build_vocab(&dataset);
                    let params = init_params(&model_cfg, vocab.len(), run.seed)?;
                    (params, model_cfg, vocab)
                }
            };
            let sink = CheckpointSink {
                dir: out.clone(),
                meta: CheckpointMeta {
                    config: model_cfg.clone(),
                    vocab: vocab.tokens().to_vec(),
                    provenance: params.provenance,
                    seed: run.seed,
                },
            };
            let (params, log) =
                finetune_videoqa(&dataset, params, &run.train, &model_cfg, &vocab, Some(&sink))?;
            log.write(&out.join("train.log"))?;
            run.echo(&out.join("config.json"))?;
            log_debug!("finetune: {} parameters", params.total_values());
            log_info!(
                "finetune: {} epochs done, final loss {:.4}",
                log.records().len(),
                log.records().last().map(|r| r.loss).unwrap_or(f64::NAN)
            );
            Ok(())
        }
        Command::Eval {
            cfg,
            data,
            ckpt,
            condition,
            report,
            threads,
        } => {
            let run = cfg.resolve()?;
            let condition: Condition = condition.parse()?;
            let dataset = Dataset::load_dir(&data)?;
            let (params, meta) = load_checkpoint(&ckpt)?;
            let vocab = meta.vocab();
            let cond_report = eval::evaluate(
                &dataset,
                &params,
                &meta.config,
                &vocab,
                condition,
                run.seed,
                threads.max(1),
            )?;
            let acc = cond_report.all.accuracy;
            eval::emit_report(&EvalReport::single(cond_report), &report)?;
            run.echo(&report.with_extension("config.json"))?;
            log_info!(
                "eval[{}]: Acc@All = {}",
                condition.key(),
                acc.map(|a| format!("{a:.4}")).unwrap_or_else(|| "n/a".into())
            );
            Ok(())
        }
        Command::Gradcheck { cfg } => {
            let run = cfg.resolve()?;
            let check = run.gradcheck_config();
            let reports = atm_core::harness::run_loss_gradchecks(&check, run.seed)?;
            let mut all_pass = true;
            for (name, report) in &reports {
                println!("{name}: {report}");
                all_pass &= report.passed;
            }
            if !all_pass {
                bail!("gradient check failed (tolerance {:.1e})", check.tol);
            }
            Ok(())
        }
        Command::ReportDelta { full, middle, out } => {
            let full_report = eval::load_report(&full)?;
            let middle_report = eval::load_report(&middle)?;
            let take = |r: EvalReport, key: &str, path: &Path| -> anyhow::Result<_> {
                r.conditions.get(key).cloned().ok_or_else(|| {
                    anyhow!("{} has no '{key}' condition", path.display())
                })
            };
            let full_cond = take(full_report, "full", &full)?;
            let middle_cond = take(middle_report, "middle", &middle)?;
            let merged = eval::merge_delta(full_cond, middle_cond)?;
            println!(
                "delta = {:+.4} percentage points",
                merged.delta_points.expect("merge sets delta")
            );
            if let Some(out) = out {
                eval::emit_report(&merged, &out)?;
                log_info!("report-delta: wrote {}", out.display());
            }
            Ok(())
        }
    }
}

fn merge_lexicons(keywords_side: Lexicon, verbs_side: Lexicon) -> Lexicon {
    // keep the keyword list from one, the verb list from the other
    let mut merged = verbs_side;
    merged.set_temporal_keywords(keywords_side.temporal_keywords().to_vec());
    merged
}
