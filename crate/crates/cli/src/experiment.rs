//! Desk-scale training and evaluation on curated clips.

use anyhow::{Context, Result};
use serde::Serialize;

use hdrforge_core::color::LogGammaParams;
use hdrforge_core::metrics::{psnr_from_mse, psnr_weighted};
use hdrforge_core::prompt::Vocab;
use hdrforge_flow::cfa::{CfaBase, CfaConfig};
use hdrforge_flow::data::{build_example, ClipBundle, Example};
use hdrforge_flow::model::{ModelConfig, ToyDiT};
use hdrforge_flow::sample::euler_sample;
use hdrforge_flow::train::{StepReport, TrainConfig, Trainer};
use hdrforge_core::rng::{derive_key, label};

use crate::config::{RunConfig, SampleSection};
use crate::curate::CuratedClip;

/// Vocabulary over every caption section of `clips`.
pub fn build_vocab(clips: &[CuratedClip]) -> Vocab {
    let texts: Vec<String> = clips.iter().map(|c| c.caption.serialize()).collect();
    Vocab::build(texts.iter().map(String::as_str))
}

pub fn examples(clips: &[CuratedClip], model: &ModelConfig, vocab: &Vocab, lg: LogGammaParams) -> Result<Vec<Example>> {
    clips
        .iter()
        .map(|c| {
            build_example(
                &ClipBundle {
                    hdr: &c.hdr,
                    ldr: &c.ldr,
                    raw_masks: &c.raw_masks,
                    smoothed_masks: &c.masks,
                    caption: &c.caption,
                },
                model,
                vocab,
                lg,
            )
            .with_context(|| format!("preparing {}", c.clip_id))
        })
        .collect()
}

pub fn new_model(config: &RunConfig, vocab: &Vocab) -> Result<ToyDiT> {
    let mc = config.train.model.model_config(&config.curate, vocab.len());
    let mut model = ToyDiT::new(mc, derive_key(config.seed, &[label("model")]))?;
    if let Some(rank) = config.train.lora_rank {
        model.attach_lora(rank, config.train.lora_scale, derive_key(config.seed, &[label("lora")]))?;
    }
    Ok(model)
}

pub fn trainer(model: ToyDiT, config: &RunConfig) -> Result<Trainer> {
    let t = &config.train;
    Ok(Trainer::new(
        model,
        TrainConfig {
            learning_rate: t.learning_rate,
            momentum: t.momentum,
            clip_norm: t.clip_norm,
            batch_size: t.batch_size,
            seed: derive_key(config.seed, &[label("trainer")]),
            cosine_steps: t.cosine_decay.then_some(t.steps.max(1)),
        },
    )?)
}

/// Runs `steps` updates, calling `on_step` after each.
pub fn train(trainer: &mut Trainer, data: &[Example], steps: usize, mut on_step: impl FnMut(&StepReport)) -> Result<Vec<f64>> {
    let mut losses = Vec::with_capacity(steps);
    for _ in 0..steps {
        let r = trainer.step(data)?;
        on_step(&r);
        losses.push(r.loss);
    }
    Ok(losses)
}

pub fn cfa_config(s: &SampleSection) -> CfaConfig {
    CfaConfig {
        enabled: s.cfa,
        alpha_over: s.alpha_over,
        alpha_under: s.alpha_under,
    }
}

/// Conditioning for inference: base prompt per `base`, focused prompts
/// from the caption sections.
pub fn inference_example(ex: &Example, base: CfaBase, empty: &[u32]) -> Example {
    let mut e = ex.clone();
    if base == CfaBase::Unconditional {
        e.cond.base_prompt = empty.to_vec();
    }
    e
}

/// Masked PSNR (Log-Gamma space, range 1) of sampled reconstructions and
/// of the LDR latent used as the prediction. The headline numbers pool the
/// weighted squared error of all clips; per-clip values are kept too.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub clips: usize,
    pub scored_clips: usize,
    pub model_psnr: f64,
    pub baseline_psnr: f64,
    pub mean_clip_model_psnr: f64,
    pub mean_clip_baseline_psnr: f64,
    pub per_clip: Vec<(f64, f64)>,
}

impl EvalReport {
    pub fn gain_db(&self) -> f64 {
        self.model_psnr - self.baseline_psnr
    }
}

struct Weighted {
    se_model: f64,
    se_base: f64,
    weight: f64,
}

fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x.clamp(0.0, 1.0) as f32).collect()
}

/// Samples each example and scores it against the target over the
/// over/under mask union.
pub fn evaluate(model: &ToyDiT, data: &[Example], sample: &SampleSection, seed: u64, empty: &[u32]) -> Result<EvalReport> {
    use rayon::prelude::*;
    let cfa = cfa_config(sample);
    let per: Vec<(Weighted, Option<(f64, f64)>)> = data
        .par_iter()
        .enumerate()
        .map(|(i, ex)| -> Result<_> {
            let ex = inference_example(ex, sample.cfa_base, empty);
            let pred = euler_sample(model, &ex.cond, &cfa, sample.steps, derive_key(seed, &[label("eval"), i as u64]))?;
            let (pred, ldr, target) = (to_f32(&pred), to_f32(&ex.cond.ldr), to_f32(&ex.x1));
            let mut w = Weighted {
                se_model: 0.0,
                se_base: 0.0,
                weight: 0.0,
            };
            for k in 0..target.len() {
                let m = f64::from(ex.mask_weights[k]);
                w.se_model += m * f64::from(pred[k] - target[k]).powi(2);
                w.se_base += m * f64::from(ldr[k] - target[k]).powi(2);
                w.weight += m;
            }
            let clip = psnr_weighted(&pred, &target, &ex.mask_weights, 1.0)
                .zip(psnr_weighted(&ldr, &target, &ex.mask_weights, 1.0));
            Ok((w, clip))
        })
        .collect::<Result<_>>()?;
    let (se_m, se_b, w) = per
        .iter()
        .fold((0.0, 0.0, 0.0), |a, (p, _)| (a.0 + p.se_model, a.1 + p.se_base, a.2 + p.weight));
    let scored: Vec<(f64, f64)> = per.iter().filter_map(|p| p.1).collect();
    let n = scored.len().max(1) as f64;
    let pooled = |se: f64| if w > 0.0 { psnr_from_mse(se / w, 1.0) } else { f64::NAN };
    Ok(EvalReport {
        clips: data.len(),
        scored_clips: scored.len(),
        model_psnr: pooled(se_m),
        baseline_psnr: pooled(se_b),
        mean_clip_model_psnr: scored.iter().map(|p| p.0).sum::<f64>() / n,
        mean_clip_baseline_psnr: scored.iter().map(|p| p.1).sum::<f64>() / n,
        per_clip: scored,
    })
}

/// Mean of the first and last `window` losses and the relative reduction.
pub fn loss_reduction(losses: &[f64], window: usize) -> (f64, f64, f64) {
    let w = window.min(losses.len()).max(1);
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len().max(1) as f64;
    let first = mean(&losses[..w.min(losses.len())]);
    let last = mean(&losses[losses.len().saturating_sub(w)..]);
    (first, last, 1.0 - last / first)
}

/// Sizes of the desk-scale experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeskPlan {
    pub train_clips: usize,
    pub heldout_clips: usize,
    pub loss_window: usize,
}

impl Default for DeskPlan {
    fn default() -> Self {
        Self {
            train_clips: 64,
            heldout_clips: 16,
            loss_window: 10,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DeskReport {
    pub plan: DeskPlan,
    pub first_loss: f64,
    pub last_loss: f64,
    pub loss_reduction: f64,
    pub eval: EvalReport,
    /// Pooled masked PSNR of a reference predictor that is exact outside the
    /// over-exposed pixels and outputs the single best constant inside them.
    pub constant_bound_psnr: f64,
    pub seconds: f64,
}

/// Pooled masked PSNR of the reference predictor described on
/// [`DeskReport::constant_bound_psnr`]. Pixels count as over-exposed when
/// their LDR latent exceeds `over_threshold`.
pub fn constant_bound_psnr(data: &[Example], over_threshold: f64) -> f64 {
    let (mut w_all, mut w, mut s, mut s2) = (0.0, 0.0, 0.0, 0.0);
    for ex in data {
        for ((&m, &x), &l) in ex.mask_weights.iter().zip(&ex.x1).zip(&ex.cond.ldr) {
            let m = f64::from(m);
            w_all += m;
            if m > 0.0 && l > over_threshold {
                w += m;
                s += m * x;
                s2 += m * x * x;
            }
        }
    }
    if w_all == 0.0 {
        return f64::NAN;
    }
    let var = if w > 0.0 { (s2 / w - (s / w).powi(2)).max(0.0) } else { 0.0 };
    psnr_from_mse(var * w / w_all, 1.0)
}

/// Curates procedural clips, trains on the first `train_clips` for
/// `config.train.steps` updates and scores
/// sampled reconstructions on clips from panoramas never seen in training.
pub fn desk_experiment(config: &RunConfig, plan: DeskPlan, on_step: impl FnMut(&StepReport)) -> Result<DeskReport> {
    let start = std::time::Instant::now();
    let per = config.curate.recipe.len().max(1);
    let train_panos = plan.train_clips.div_ceil(per);
    let held_panos = plan.heldout_clips.div_ceil(per);
    let mut train_set = crate::curate::curate_procedural_range(0..train_panos, config)?;
    let mut held_set = crate::curate::curate_procedural_range(train_panos..train_panos + held_panos, config)?;
    train_set.truncate(plan.train_clips);
    held_set.truncate(plan.heldout_clips);
    let vocab = build_vocab(&train_set);
    let model = new_model(config, &vocab)?;
    let train_data = examples(&train_set, &model.config, &vocab, config.log_gamma)?;
    let held_data = examples(&held_set, &model.config, &vocab, config.log_gamma)?;
    let mut t = trainer(model, config)?;
    let losses = train(&mut t, &train_data, config.train.steps, on_step)?;
    let (first_loss, last_loss, reduction) = loss_reduction(&losses, plan.loss_window);
    let eval = evaluate(
        &t.model,
        &held_data,
        &config.sample,
        derive_key(config.seed, &[label("heldout-eval")]),
        &vocab.encode(""),
    )?;
    Ok(DeskReport {
        plan,
        first_loss,
        last_loss,
        loss_reduction: reduction,
        eval,
        constant_bound_psnr: constant_bound_psnr(&held_data, 0.3),
        seconds: start.elapsed().as_secs_f64(),
    })
}
