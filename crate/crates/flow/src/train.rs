//! Flow-matching objective and an SGD-with-momentum trainer.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cfa::CfaConfig;
use crate::data::Example;
use crate::model::{patchify, Conditioning, ToyDiT};
use crate::tensor::{Mat, Tape};
use crate::FlowError;
use hdrforge_core::rng::{label, seeded_chacha};

/// `x_t = t x1 + (1 - t) x0` and the velocity target `x1 - x0`.
pub fn interpolate_flow(x0: &[f64], x1: &[f64], t: f64) -> Result<(Vec<f64>, Vec<f64>), FlowError> {
    if x0.len() != x1.len() {
        return Err(FlowError::Shape(format!(
            "x0 has {} values, x1 has {}",
            x0.len(),
            x1.len()
        )));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(FlowError::Config(format!("t must lie in [0, 1], got {t}")));
    }
    let xt = x0.iter().zip(x1).map(|(&a, &b)| t * b + (1.0 - t) * a).collect();
    let target = x0.iter().zip(x1).map(|(&a, &b)| b - a).collect();
    Ok((xt, target))
}

pub fn standard_normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    /// Global gradient-norm ceiling; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub batch_size: usize,
    pub seed: u64,
    /// Cosine-decays the learning rate to zero over this many steps.
    pub cosine_steps: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            momentum: 0.9,
            clip_norm: Some(1.0),
            batch_size: 8,
            seed: 0,
            cosine_steps: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), FlowError> {
        let lr_ok = self.learning_rate.is_finite() && self.learning_rate > 0.0;
        let mom_ok = (0.0..1.0).contains(&self.momentum);
        let clip_ok = self.clip_norm.map_or(true, |c| c.is_finite() && c > 0.0);
        let cos_ok = self.cosine_steps != Some(0);
        if !(lr_ok && mom_ok && clip_ok && cos_ok && self.batch_size > 0) {
            return Err(FlowError::Config(format!("invalid training configuration {self:?}")));
        }
        Ok(())
    }

    /// Learning rate for the update after `completed` steps.
    pub fn learning_rate_at(&self, completed: usize) -> f64 {
        match self.cosine_steps {
            Some(n) => {
                let frac = (completed as f64 / n as f64).min(1.0);
                0.5 * self.learning_rate * (1.0 + (std::f64::consts::PI * frac).cos())
            }
            None => self.learning_rate,
        }
    }
}

/// One per-sample draw of the objective.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowDraw {
    pub t: f64,
    pub x0: Vec<f64>,
    pub prompt: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub step: usize,
    pub loss: f64,
    pub grad_norm: f64,
    /// Mask-guided blends evaluated during the step; always zero.
    pub cfa_blends: usize,
}

/// Loss and parameter gradients for one sample.
pub fn sample_loss_and_grads(
    model: &ToyDiT,
    x1: &[f64],
    cond: &Conditioning,
    draw: &FlowDraw,
) -> Result<(f64, Vec<Option<Mat>>, usize), FlowError> {
    let (xt, target) = interpolate_flow(&draw.x0, x1, draw.t)?;
    let mut cond = cond.clone();
    cond.base_prompt.clone_from(&draw.prompt);
    let mut tape = Tape::new();
    let (out, stats) = model.forward(&mut tape, &xt, draw.t, &cond, &CfaConfig::disabled())?;
    let target = tape.input(patchify(&model.config, &target));
    let loss = tape.mse(out, target);
    let value = tape.value(loss).data[0];
    if !value.is_finite() {
        return Err(FlowError::NonFinite(format!("loss at t = {}", draw.t)));
    }
    let grads = tape.backward(loss).for_params(&tape, model.params.len());
    Ok((value, grads, stats.cfa_blends))
}

/// Mean loss and summed gradient over a batch; the reduction runs in
/// batch order so results do not depend on the thread count.
pub fn batch_loss_and_grads(
    model: &ToyDiT,
    batch: &[(&Example, FlowDraw)],
) -> Result<(f64, Vec<Option<Mat>>, usize), FlowError> {
    let per: Vec<_> = batch
        .par_iter()
        .map(|(ex, draw)| sample_loss_and_grads(model, &ex.x1, &ex.cond, draw))
        .collect::<Result<_, _>>()?;
    let n = batch.len() as f64;
    let mut total = vec![None::<Mat>; model.params.len()];
    let mut loss = 0.0;
    let mut blends = 0;
    for (l, grads, b) in per {
        loss += l;
        blends += b;
        for (acc, g) in total.iter_mut().zip(grads) {
            if let Some(g) = g {
                match acc {
                    Some(a) => a.data.iter_mut().zip(&g.data).for_each(|(x, y)| *x += y),
                    None => *acc = Some(g),
                }
            }
        }
    }
    for g in total.iter_mut().flatten() {
        g.data.iter_mut().for_each(|v| *v /= n);
    }
    Ok((loss / n, total, blends))
}

pub struct Trainer {
    pub model: ToyDiT,
    pub config: TrainConfig,
    velocity: Vec<Option<Mat>>,
    rng: ChaCha8Rng,
    step: usize,
}

impl Trainer {
    pub fn new(model: ToyDiT, config: TrainConfig) -> Result<Self, FlowError> {
        config.validate()?;
        let n = model.params.len();
        Ok(Self {
            model,
            config,
            velocity: vec![None; n],
            rng: seeded_chacha(config.seed, &[label("train")]),
            step: 0,
        })
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    /// Draws `t`, `x0` and the conditioning prompt for one sample.
    pub fn draw(&mut self, example: &Example) -> FlowDraw {
        let t = self.rng.gen::<f64>();
        let x0 = standard_normal_vec(&mut self.rng, example.x1.len());
        let prompt = example
            .prompt_choices
            .choose(&mut self.rng)
            .cloned()
            .unwrap_or_else(|| example.cond.base_prompt.clone());
        FlowDraw { t, x0, prompt }
    }

    /// One update on an explicit batch.
    pub fn step_on(&mut self, batch: &[&Example]) -> Result<StepReport, FlowError> {
        if batch.is_empty() {
            return Err(FlowError::Config("empty batch".into()));
        }
        let draws: Vec<(&Example, FlowDraw)> = batch.iter().map(|&e| (e, self.draw(e))).collect();
        self.step_with_draws(&draws)
    }

    /// One update with caller-supplied draws.
    pub fn step_with_draws(&mut self, draws: &[(&Example, FlowDraw)]) -> Result<StepReport, FlowError> {
        if draws.is_empty() {
            return Err(FlowError::Config("empty batch".into()));
        }
        let (loss, grads, cfa_blends) = batch_loss_and_grads(&self.model, draws)?;
        let grad_norm = self.apply(grads)?;
        self.step += 1;
        Ok(StepReport {
            step: self.step,
            loss,
            grad_norm,
            cfa_blends,
        })
    }

    /// One update on a batch drawn uniformly from `data`.
    pub fn step(&mut self, data: &[Example]) -> Result<StepReport, FlowError> {
        if data.is_empty() {
            return Err(FlowError::Config("empty dataset".into()));
        }
        let idx: Vec<usize> = (0..self.config.batch_size)
            .map(|_| self.rng.gen_range(0..data.len()))
            .collect();
        let batch: Vec<&Example> = idx.iter().map(|&i| &data[i]).collect();
        self.step_on(&batch)
    }

    fn apply(&mut self, grads: Vec<Option<Mat>>) -> Result<f64, FlowError> {
        let trainable: Vec<(usize, Mat)> = grads
            .into_iter()
            .enumerate()
            .filter_map(|(i, g)| g.map(|g| (i, g)))
            .filter(|(i, _)| self.model.params.get(*i).trainable)
            .collect();
        let norm = trainable
            .iter()
            .flat_map(|(_, g)| g.data.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        if !norm.is_finite() {
            return Err(FlowError::NonFinite(format!("gradient at step {}", self.step + 1)));
        }
        let clip = match self.config.clip_norm {
            Some(c) if norm > c => c / norm,
            _ => 1.0,
        };
        let (lr, mu) = (self.config.learning_rate_at(self.step), self.config.momentum);
        for (i, g) in trainable {
            let v = self.velocity[i].get_or_insert_with(|| Mat::zeros(g.rows, g.cols));
            for (vk, gk) in v.data.iter_mut().zip(&g.data) {
                *vk = mu * *vk + clip * gk;
            }
            let p = &mut self.model.params.get_mut(i).value;
            for (pk, vk) in p.data.iter_mut().zip(&v.data) {
                *pk -= lr * vk;
            }
        }
        Ok(norm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_schedule_endpoints() {
        let c = TrainConfig {
            learning_rate: 0.2,
            cosine_steps: Some(100),
            ..TrainConfig::default()
        };
        assert_eq!(c.learning_rate_at(0), 0.2);
        assert!((c.learning_rate_at(50) - 0.1).abs() < 1e-15);
        assert!(c.learning_rate_at(100).abs() < 1e-15);
        assert!(c.learning_rate_at(500).abs() < 1e-15);
        assert_eq!(TrainConfig::default().learning_rate_at(7), 0.05);
        assert!(TrainConfig { cosine_steps: Some(0), ..c }.validate().is_err());
    }
}
