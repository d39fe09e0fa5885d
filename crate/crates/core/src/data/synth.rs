//! Synthetic temporality benchmark.
//!
//! Each video embeds `events_per_video` distinct event signatures into the
//! motion stream at disjoint contiguous clip ranges (order drawn per video)
//! and one scene signature across the frame stream; the object stream is
//! noise. Temporal questions ask what happens after/before one of the
//! events and are decodable from the motion stream only by comparing clip
//! ranges; descriptive questions ask for the scene.
//!
//! Candidates for a temporal question are the gold event, the video's other
//! events, the fixed "nothing else happens" option, then out-of-video
//! events, so event presence alone cannot isolate the answer.
//!
//! With `scene_leak` on (the default) the frame stream additionally carries
//! one static adjacency code per consecutive event pair, a shuffle-invariant
//! shortcut to every temporal answer. That is the controlled static bias the
//! confusion objective is supposed to remove; turn it off for a leak-free
//! benchmark.

use super::{FeatureBundle, QType, QuestionRecord};
use crate::error::{CoreError, Result};
use crate::rng::{mix64, rng_from};
use crate::tensor::Tensor;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub videos: usize,
    /// Clips per video (T).
    pub clips: usize,
    /// Feature width of every stream.
    pub dim: usize,
    pub candidates: usize,
    /// Size of the event pool.
    pub events: usize,
    /// Distinct events embedded in each video.
    pub events_per_video: usize,
    /// Signature norm; `None` means sqrt(dim)/8.
    pub signature_scale: Option<f64>,
    /// Noise std as a fraction of the signature scale.
    pub noise: f64,
    /// Add static adjacency codes to the frame stream.
    pub scene_leak: bool,
    pub temporal_per_video: usize,
    pub descriptive_per_video: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            videos: 512,
            clips: 16,
            dim: 64,
            candidates: 5,
            events: 8,
            events_per_video: 2,
            signature_scale: None,
            noise: 0.05,
            scene_leak: true,
            temporal_per_video: 1,
            descriptive_per_video: 1,
        }
    }
}

impl SynthConfig {
    pub fn scale(&self) -> f64 {
        self.signature_scale
            .unwrap_or_else(|| (self.dim as f64).sqrt() / 8.0)
    }

    fn pair_code_count(&self) -> usize {
        self.events * (self.events - 1)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(CoreError::Config(msg));
        if self.videos == 0 {
            return fail("videos must be >= 1".into());
        }
        if self.events < 2 {
            return fail("events must be >= 2".into());
        }
        if self.events > EVENT_NAMES.len() {
            return fail(format!(
                "events must be <= {} (name pool size)",
                EVENT_NAMES.len()
            ));
        }
        if self.events_per_video < 2
            || self.events_per_video > self.events
            || self.events_per_video > self.clips
        {
            return fail(format!(
                "events_per_video must be in 2..=min(events, clips), got {} (events {}, clips {})",
                self.events_per_video, self.events, self.clips
            ));
        }
        if self.candidates < 2 || self.candidates > self.events {
            return fail(format!(
                "candidates must be in 2..=events, got {} (events {})",
                self.candidates, self.events
            ));
        }
        // motion space holds the events, frame space the scenes plus the
        // adjacency codes, all mutually orthogonal
        if self.events > self.dim || self.events + self.pair_code_count() > self.dim {
            return fail(format!(
                "dim {} too small to hold orthogonal signatures ({} events, {} scenes + {} codes)",
                self.dim,
                self.events,
                self.events,
                self.pair_code_count()
            ));
        }
        Ok(())
    }
}

const EVENT_NAMES: &[&str] = &[
    "waving the flag",
    "kicking the ball",
    "folding the towel",
    "bouncing the balloon",
    "lifting the box",
    "spinning the wheel",
    "tossing the hat",
    "shaking the bottle",
    "rolling the barrel",
    "flipping the card",
    "squeezing the sponge",
    "stacking the cups",
    "tapping the drum",
    "stirring the soup",
    "brushing the horse",
    "wiping the table",
];

const SCENE_ADJECTIVES: &[&str] = &[
    "red", "blue", "green", "sunny", "dark", "quiet", "busy", "old", "new", "small", "wide",
    "bright", "noisy", "empty", "crowded", "round",
];
const SCENE_PLACES: &[&str] = &[
    "park", "kitchen", "garden", "garage", "studio", "yard", "hall", "market", "gym", "porch",
    "cellar", "lobby", "plaza", "deck", "shed", "attic",
];

const AFTER_TEMPLATES: &[&str] = &[
    "what happens after {}?",
    "what does the person do after {}?",
];
const BEFORE_TEMPLATES: &[&str] = &[
    "what happens before {}?",
    "what does the person do before {}?",
];
const SCENE_TEMPLATES: &[&str] = &["where is the video taken?", "which place is shown in the video?"];

/// Gold answer when the queried event is already the last (or first) one.
pub const NOTHING_ANSWER: &str = "nothing else happens";

/// Named signature vectors: events (motion space), scenes and adjacency
/// codes (frame space). Mutually orthogonal within each stream's space,
/// scaled to the config norm.
#[derive(Debug, Clone)]
pub struct SignaturePools {
    pub events: Vec<(String, Vec<f64>)>,
    pub scenes: Vec<(String, Vec<f64>)>,
    /// `pair_codes[pair_index(a, b)]` marks "a is immediately before b".
    pub pair_codes: Vec<Vec<f64>>,
    pub scale: f64,
    n_events: usize,
}

impl SignaturePools {
    pub fn derive(cfg: &SynthConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = rng_from(mix64(seed, 0x504F_4F4C));
        let scale = cfg.scale();
        let event_vecs = orthogonal_signatures(cfg.events, cfg.dim, scale, &mut rng);
        let mut frame_vecs =
            orthogonal_signatures(cfg.events + cfg.pair_code_count(), cfg.dim, scale, &mut rng);
        let pair_codes = frame_vecs.split_off(cfg.events);
        let events = event_vecs
            .into_iter()
            .enumerate()
            .map(|(i, v)| (EVENT_NAMES[i].to_string(), v))
            .collect();
        let scenes = frame_vecs
            .into_iter()
            .enumerate()
            .map(|(i, v)| {
                let adj = SCENE_ADJECTIVES[i % SCENE_ADJECTIVES.len()];
                let place = SCENE_PLACES[i % SCENE_PLACES.len()];
                (format!("in the {adj} {place}"), v)
            })
            .collect();
        Ok(SignaturePools {
            events,
            scenes,
            pair_codes,
            scale,
            n_events: cfg.events,
        })
    }

    pub fn event_index(&self, name: &str) -> Option<usize> {
        self.events.iter().position(|(n, _)| n == name)
    }

    pub fn scene_index(&self, name: &str) -> Option<usize> {
        self.scenes.iter().position(|(n, _)| n == name)
    }

    pub fn pair_code(&self, earlier: usize, later: usize) -> &[f64] {
        let idx = earlier * (self.n_events - 1) + if later > earlier { later - 1 } else { later };
        &self.pair_codes[idx]
    }
}

fn orthogonal_signatures(n: usize, dim: usize, scale: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    while basis.len() < n {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
            let norm_sq: f64 = b.iter().map(|c| c * c).sum();
            for (x, c) in v.iter_mut().zip(b) {
                *x -= dot / norm_sq * c;
            }
        }
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-6 {
            continue;
        }
        // snap to f32 so feature files round-trip bit-exactly
        basis.push(v.iter().map(|x| (x / norm * scale) as f32 as f64).collect());
    }
    basis
}

/// Near-equal contiguous blocks; earlier blocks absorb the remainder.
fn block_of(clip: usize, clips: usize, k: usize) -> usize {
    let base = clips / k;
    let rem = clips % k;
    let fat = (base + 1) * rem;
    if clip < fat {
        clip / (base + 1)
    } else {
        rem + (clip - fat) / base
    }
}

/// Generate the benchmark. Everything is derived from `seed`; the same seed
/// reproduces the same bundles and manifest byte-for-byte.
pub fn generate_synthetic_dataset(
    cfg: &SynthConfig,
    seed: u64,
) -> Result<(Vec<FeatureBundle>, Vec<QuestionRecord>)> {
    cfg.validate()?;
    let pools = SignaturePools::derive(cfg, seed)?;
    let mut rng = rng_from(mix64(seed, 0xDA7A_5E7));
    let noise_std = cfg.noise * pools.scale;
    let k = cfg.events_per_video;

    let mut bundles = Vec::with_capacity(cfg.videos);
    let mut questions = Vec::new();
    let mut qid = 0usize;

    for vi in 0..cfg.videos {
        let video_id = format!("v{vi:05}");
        // ordered timeline of k distinct events
        let mut pool: Vec<usize> = (0..cfg.events).collect();
        pool.shuffle(&mut rng);
        let timeline: Vec<usize> = pool[..k].to_vec();
        let scene = rng.random_range(0..pools.scenes.len());

        let mut leak_static = vec![0.0; cfg.dim];
        if cfg.scene_leak {
            for pair in timeline.windows(2) {
                let code = pools.pair_code(pair[0], pair[1]);
                for (acc, &c) in leak_static.iter_mut().zip(code) {
                    *acc += c;
                }
            }
        }

        let noisy_row = |base: &[f64], rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..cfg.dim)
                .map(|j| {
                    let n: f64 = rng.sample::<f64, _>(StandardNormal);
                    (base[j] + n * noise_std) as f32 as f64
                })
                .collect()
        };
        let zero = vec![0.0; cfg.dim];

        let mut motion = Vec::with_capacity(cfg.clips);
        let mut frame = Vec::with_capacity(cfg.clips);
        let mut object = Vec::with_capacity(cfg.clips);
        let frame_base: Vec<f64> = pools.scenes[scene]
            .1
            .iter()
            .zip(&leak_static)
            .map(|(s, l)| s + l)
            .collect();
        for t in 0..cfg.clips {
            let event = timeline[block_of(t, cfg.clips, k)];
            motion.push(noisy_row(&pools.events[event].1, &mut rng));
            frame.push(noisy_row(&frame_base, &mut rng));
            object.push(noisy_row(&zero, &mut rng));
        }
        bundles.push(FeatureBundle::new(
            video_id.clone(),
            Tensor::from_rows(&object)?,
            Tensor::from_rows(&frame)?,
            Tensor::from_rows(&motion)?,
        )?);

        for qi in 0..cfg.temporal_per_video {
            let after = (vi + qi) % 2 == 0;
            // position of the queried event on the timeline; for k = 2 the
            // question may point past the edge, making "nothing else
            // happens" the gold answer
            let (pos, gold_name): (usize, String) = if k == 2 {
                let pos = rng.random_range(0..2usize);
                let gold = if after {
                    if pos == 0 {
                        pools.events[timeline[1]].0.clone()
                    } else {
                        NOTHING_ANSWER.to_string()
                    }
                } else if pos == 1 {
                    pools.events[timeline[0]].0.clone()
                } else {
                    NOTHING_ANSWER.to_string()
                };
                (pos, gold)
            } else if after {
                let pos = rng.random_range(0..k - 1);
                (pos, pools.events[timeline[pos + 1]].0.clone())
            } else {
                let pos = rng.random_range(1..k);
                (pos, pools.events[timeline[pos - 1]].0.clone())
            };
            let queried = timeline[pos];
            let queried_name = pools.events[queried].0.clone();
            let templates = if after { AFTER_TEMPLATES } else { BEFORE_TEMPLATES };
            let template = templates[rng.random_range(0..templates.len())];
            let text = template.replace("{}", &queried_name);

            // candidate pool: gold, then the video's other events (the
            // queried one included), then the "nothing" option, then absent
            // events; truncated to size
            let mut in_video_others: Vec<String> = timeline
                .iter()
                .filter(|&&e| pools.events[e].0 != gold_name)
                .map(|&e| pools.events[e].0.clone())
                .collect();
            in_video_others.shuffle(&mut rng);
            let mut absent: Vec<String> = (0..cfg.events)
                .filter(|e| !timeline.contains(e))
                .map(|e| pools.events[e].0.clone())
                .collect();
            absent.shuffle(&mut rng);
            let mut cands: Vec<String> = vec![gold_name];
            cands.extend(in_video_others);
            if !cands.contains(&NOTHING_ANSWER.to_string()) {
                cands.push(NOTHING_ANSWER.to_string());
            }
            cands.extend(absent);
            cands.truncate(cfg.candidates);

            let mut order: Vec<usize> = (0..cands.len()).collect();
            order.shuffle(&mut rng);
            let gold_index = order.iter().position(|&i| i == 0).unwrap();
            let candidates: Vec<String> = order.into_iter().map(|i| cands[i].clone()).collect();

            let record = QuestionRecord {
                question_id: format!("q{qid:06}"),
                video_id: video_id.clone(),
                question_text: text,
                candidates,
                gold_index,
                qtype: QType::Temporal,
                action_phrase: Some(queried_name),
                temporal_sensitive: Some(true),
            };
            record.validate(None)?;
            questions.push(record);
            qid += 1;
        }

        for _ in 0..cfg.descriptive_per_video {
            let template = SCENE_TEMPLATES[rng.random_range(0..SCENE_TEMPLATES.len())];
            let mut distractor_pool: Vec<usize> =
                (0..pools.scenes.len()).filter(|&s| s != scene).collect();
            distractor_pool.shuffle(&mut rng);
            let mut cands: Vec<String> = vec![pools.scenes[scene].0.clone()];
            cands.extend(
                distractor_pool
                    .into_iter()
                    .take(cfg.candidates - 1)
                    .map(|s| pools.scenes[s].0.clone()),
            );
            let mut order: Vec<usize> = (0..cands.len()).collect();
            order.shuffle(&mut rng);
            let gold_index = order.iter().position(|&i| i == 0).unwrap();
            let candidates: Vec<String> = order.into_iter().map(|i| cands[i].clone()).collect();

            let record = QuestionRecord {
                question_id: format!("q{qid:06}"),
                video_id: video_id.clone(),
                question_text: template.to_string(),
                candidates,
                gold_index,
                qtype: QType::Descriptive,
                action_phrase: None,
                temporal_sensitive: Some(false),
            };
            record.validate(None)?;
            questions.push(record);
            qid += 1;
        }
    }

    Ok((bundles, questions))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleVerdict {
    Answer(usize),
    Abstain,
}

/// Independent decoder: answers by locating signatures in the raw streams,
/// never by looking at the generator's choices.
///
/// Temporal questions: find the clips of the queried event; a candidate
/// event answers an "after" question iff its clips start exactly where the
/// queried event's end, and symmetrically for "before"; "nothing else
/// happens" answers iff the queried event touches the video edge. If no
/// candidate, or more than one, qualifies, the oracle abstains — which is
/// what happens once shuffling breaks the contiguous ranges.
pub fn oracle_answer(
    bundle: &FeatureBundle,
    record: &QuestionRecord,
    pools: &SignaturePools,
) -> OracleVerdict {
    match record.qtype {
        QType::Descriptive => {
            let (t, d) = bundle.frame.dims2().expect("validated");
            let mut best: Option<(f64, usize)> = None;
            for (si, (_, sig)) in pools.scenes.iter().enumerate() {
                let mut total = 0.0;
                for clip in 0..t {
                    for j in 0..d {
                        total += bundle.frame.get2(clip, j) * sig[j];
                    }
                }
                if best.map(|(b, _)| total > b).unwrap_or(true) {
                    best = Some((total, si));
                }
            }
            let Some((_, scene)) = best else {
                return OracleVerdict::Abstain;
            };
            let name = &pools.scenes[scene].0;
            match record.candidates.iter().position(|c| c == name) {
                Some(idx) => OracleVerdict::Answer(idx),
                None => OracleVerdict::Abstain,
            }
        }
        QType::Temporal => {
            let after = record.question_text.contains(" after ");
            let before = record.question_text.contains(" before ");
            if after == before {
                return OracleVerdict::Abstain;
            }
            let Some(queried_name) = record.action_phrase.as_deref() else {
                return OracleVerdict::Abstain;
            };
            let Some(queried) = pools.event_index(queried_name) else {
                return OracleVerdict::Abstain;
            };
            let clips = event_clips(bundle, pools);
            let queried_clips = &clips[queried];
            // an event only has a well-defined place on the timeline while
            // its clips form one contiguous range
            if !is_contiguous(queried_clips) {
                return OracleVerdict::Abstain;
            }
            let t = bundle.t();
            let q_min = *queried_clips.first().unwrap();
            let q_max = *queried_clips.last().unwrap();

            let mut winner: Option<usize> = None;
            for (ci, cand) in record.candidates.iter().enumerate() {
                let qualifies = if cand == NOTHING_ANSWER {
                    if after {
                        q_max == t - 1
                    } else {
                        q_min == 0
                    }
                } else {
                    match pools.event_index(cand) {
                        Some(e) if e != queried && is_contiguous(&clips[e]) => {
                            if after {
                                *clips[e].first().unwrap() == q_max + 1
                            } else {
                                *clips[e].last().unwrap() + 1 == q_min
                            }
                        }
                        _ => false,
                    }
                };
                if qualifies {
                    if winner.is_some() {
                        return OracleVerdict::Abstain;
                    }
                    winner = Some(ci);
                }
            }
            match winner {
                Some(idx) => OracleVerdict::Answer(idx),
                None => OracleVerdict::Abstain,
            }
        }
        _ => OracleVerdict::Abstain,
    }
}

fn is_contiguous(clips: &[usize]) -> bool {
    !clips.is_empty() && clips.windows(2).all(|w| w[1] == w[0] + 1)
}

/// For each event, the sorted clip indices whose motion row projects onto its
/// signature with at least half the signature's own energy.
fn event_clips(bundle: &FeatureBundle, pools: &SignaturePools) -> Vec<Vec<usize>> {
    let (t, d) = bundle.motion.dims2().expect("validated");
    let mut clips = vec![Vec::new(); pools.events.len()];
    for clip in 0..t {
        let mut best: Option<(f64, usize)> = None;
        for (ei, (_, sig)) in pools.events.iter().enumerate() {
            let mut dot = 0.0;
            let mut energy = 0.0;
            for j in 0..d {
                dot += bundle.motion.get2(clip, j) * sig[j];
                energy += sig[j] * sig[j];
            }
            let proj = dot / energy;
            if best.map(|(b, _)| proj > b).unwrap_or(true) {
                best = Some((proj, ei));
            }
        }
        if let Some((proj, ei)) = best {
            if proj >= 0.5 {
                clips[ei].push(clip);
            }
        }
    }
    clips
}
