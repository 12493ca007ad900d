//! Central finite-difference verification of the training gradients.

use rand::Rng;
use serde::Serialize;

use crate::data::Example;
use crate::model::{Conditioning, ModelConfig, ToyDiT};
use crate::train::{sample_loss_and_grads, standard_normal_vec, FlowDraw};
use crate::FlowError;
use hdrforge_core::mask::TokenMasks;
use hdrforge_core::rng::{label, seeded_chacha};

/// Denominator floor for the relative error of near-zero gradients.
pub const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct ParamCheck {
    pub name: String,
    pub entries: usize,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub step: f64,
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_err).fold(0.0, f64::max)
    }

    pub fn entries(&self) -> usize {
        self.params.iter().map(|p| p.entries).sum()
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Random example and draw that fit `config`, with masks, three distinct
/// prompts and optionally a reference frame.
pub fn synthetic_case(config: &ModelConfig, seed: u64, reference: bool) -> (Example, FlowDraw) {
    let mut rng = seeded_chacha(seed, &[label("gradcheck-case")]);
    let n = config.latent.len();
    let grid = config.token_grid();
    let mut masks = TokenMasks::zeros(grid);
    for (o, u) in masks.over.iter_mut().zip(masks.under.iter_mut()) {
        *o = rng.gen::<f32>();
        *u = rng.gen::<f32>() * (1.0 - *o);
    }
    let v = config.vocab_size as u32;
    let mut prompt = |len: usize| (0..len).map(|_| rng.gen_range(0..v)).collect::<Vec<u32>>();
    let (base, over, under) = (prompt(3), prompt(2), prompt(4));
    let x1 = (0..n).map(|_| rng.gen::<f64>()).collect();
    let ldr = (0..n).map(|_| rng.gen::<f64>() * 0.6).collect();
    let refr = reference.then(|| (0..config.latent.frame_len()).map(|_| rng.gen::<f64>()).collect());
    let draw = FlowDraw {
        t: rng.gen_range(0.1..0.9),
        x0: standard_normal_vec(&mut rng, n),
        prompt: base.clone(),
    };
    let example = Example {
        x1,
        cond: Conditioning {
            ldr,
            masks,
            base_prompt: base,
            over_prompt: over,
            under_prompt: under,
            reference: refr,
        },
        prompt_choices: Vec::new(),
        mask_weights: vec![1.0; n],
    };
    (example, draw)
}

/// Compares every parameter entry's analytic gradient of the flow loss with
/// `(L(p + h) - L(p - h)) / 2h`.
pub fn check_gradients(
    model: &ToyDiT,
    example: &Example,
    draw: &FlowDraw,
    h: f64,
) -> Result<GradCheckReport, FlowError> {
    let (_, grads, _) = sample_loss_and_grads(model, &example.x1, &example.cond, draw)?;
    let loss_at = |m: &ToyDiT| -> Result<f64, FlowError> {
        Ok(sample_loss_and_grads(m, &example.x1, &example.cond, draw)?.0)
    };
    let mut work = model.clone();
    let mut params = Vec::with_capacity(model.params.len());
    for (i, g) in grads.iter().enumerate() {
        let name = model.params.get(i).name.clone();
        let len = model.params.get(i).value.len();
        let mut check = ParamCheck {
            name,
            entries: len,
            max_rel_err: 0.0,
            max_abs_err: 0.0,
        };
        for k in 0..len {
            let orig = work.params.get(i).value.data[k];
            work.params.get_mut(i).value.data[k] = orig + h;
            let up = loss_at(&work)?;
            work.params.get_mut(i).value.data[k] = orig - h;
            let down = loss_at(&work)?;
            work.params.get_mut(i).value.data[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic = g.as_ref().map_or(0.0, |g| g.data[k]);
            check.max_rel_err = check.max_rel_err.max(relative_error(analytic, numeric));
            check.max_abs_err = check.max_abs_err.max((analytic - numeric).abs());
        }
        params.push(check);
    }
    Ok(GradCheckReport { step: h, params })
}
