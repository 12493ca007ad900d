//! A tiny diffusion transformer over Log-Gamma latents.
//!
//! Each token is one spatiotemporal patch. Its input is the concatenation
//! of the noisy latent patch, the LDR latent patch and the two pooled
//! exposure-mask values. Blocks are pre-norm with timestep-conditioned
//! shift/scale modulation: self-attention, cross-attention to the prompt
//! embedding, then a SiLU feed-forward layer. Optional reference-frame
//! tokens join the self-attention and are dropped before the output head.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cfa::CfaConfig;
use crate::tensor::{Mat, Tape, Var};
use crate::FlowError;
use hdrforge_core::mask::TokenMasks;
use hdrforge_core::rng::{label, seeded_chacha};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentShape {
    pub t: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl LatentShape {
    pub fn len(&self) -> usize {
        self.t * self.h * self.w * self.c
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn frame_len(&self) -> usize {
        self.h * self.w * self.c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub latent: LatentShape,
    /// Patch extent `(t, h, w)`.
    pub patch: (usize, usize, usize),
    pub dim: usize,
    pub heads: usize,
    pub blocks: usize,
    pub ffn_mult: usize,
    pub vocab_size: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            latent: LatentShape {
                t: 4,
                h: 16,
                w: 16,
                c: 3,
            },
            patch: (1, 4, 4),
            dim: 32,
            heads: 4,
            blocks: 2,
            ffn_mult: 4,
            vocab_size: 2,
        }
    }
}

impl ModelConfig {
    /// Gradient-check configuration: `d = 8`, one block, `2x4x4x3` latent.
    pub fn micro(vocab_size: usize) -> Self {
        Self {
            latent: LatentShape {
                t: 2,
                h: 4,
                w: 4,
                c: 3,
            },
            patch: (1, 2, 2),
            dim: 8,
            heads: 2,
            blocks: 1,
            ffn_mult: 4,
            vocab_size,
        }
    }

    pub fn validate(&self) -> Result<(), FlowError> {
        let (pt, ph, pw) = self.patch;
        let l = self.latent;
        if pt == 0 || ph == 0 || pw == 0 || l.t % pt != 0 || l.h % ph != 0 || l.w % pw != 0 {
            return Err(FlowError::Config(format!(
                "patch {:?} must tile latent {}x{}x{}",
                self.patch, l.t, l.h, l.w
            )));
        }
        if l.c == 0 || self.dim == 0 || self.heads == 0 || self.dim % self.heads != 0 {
            return Err(FlowError::Config(format!(
                "dim {} must be a positive multiple of heads {}",
                self.dim, self.heads
            )));
        }
        if self.dim % 2 != 0 || self.blocks == 0 || self.ffn_mult == 0 || self.vocab_size < 2 {
            return Err(FlowError::Config(
                "dim must be even; blocks, ffn_mult >= 1; vocab >= 2".into(),
            ));
        }
        Ok(())
    }

    pub fn token_grid(&self) -> (usize, usize, usize) {
        (
            self.latent.t / self.patch.0,
            self.latent.h / self.patch.1,
            self.latent.w / self.patch.2,
        )
    }

    pub fn tokens(&self) -> usize {
        let (a, b, c) = self.token_grid();
        a * b * c
    }

    /// Reference tokens: one frame's worth of patches.
    pub fn ref_tokens(&self) -> usize {
        let (_, b, c) = self.token_grid();
        b * c
    }

    pub fn patch_len(&self) -> usize {
        self.patch.0 * self.patch.1 * self.patch.2 * self.latent.c
    }

    fn ref_patch_len(&self) -> usize {
        self.patch.1 * self.patch.2 * self.latent.c
    }

    fn input_len(&self) -> usize {
        2 * self.patch_len() + 2
    }
}

/// Splits a `(t, h, w, c)` latent into `tokens x patch_len` rows, tokens in
/// `(t, y, x)` row-major order and elements in `(dt, dy, dx, c)` order.
pub fn patchify(cfg: &ModelConfig, latent: &[f64]) -> Mat {
    let l = cfg.latent;
    let (pt, ph, pw) = cfg.patch;
    let (gt, gh, gw) = cfg.token_grid();
    let mut out = Mat::zeros(cfg.tokens(), cfg.patch_len());
    let mut row = 0;
    for ti in 0..gt {
        for yi in 0..gh {
            for xi in 0..gw {
                let r = out.row_mut(row);
                let mut k = 0;
                for dt in 0..pt {
                    for dy in 0..ph {
                        for dx in 0..pw {
                            let base = (((ti * pt + dt) * l.h + yi * ph + dy) * l.w + xi * pw + dx) * l.c;
                            r[k..k + l.c].copy_from_slice(&latent[base..base + l.c]);
                            k += l.c;
                        }
                    }
                }
                row += 1;
            }
        }
    }
    out
}

/// Inverse of [`patchify`].
pub fn unpatchify(cfg: &ModelConfig, patches: &Mat) -> Vec<f64> {
    let l = cfg.latent;
    let (pt, ph, pw) = cfg.patch;
    let (gt, gh, gw) = cfg.token_grid();
    let mut out = vec![0.0; l.len()];
    let mut row = 0;
    for ti in 0..gt {
        for yi in 0..gh {
            for xi in 0..gw {
                let r = patches.row(row);
                let mut k = 0;
                for dt in 0..pt {
                    for dy in 0..ph {
                        for dx in 0..pw {
                            let base = (((ti * pt + dt) * l.h + yi * ph + dy) * l.w + xi * pw + dx) * l.c;
                            out[base..base + l.c].copy_from_slice(&r[k..k + l.c]);
                            k += l.c;
                        }
                    }
                }
                row += 1;
            }
        }
    }
    out
}

fn patchify_frame(cfg: &ModelConfig, frame: &[f64]) -> Mat {
    let l = cfg.latent;
    let (_, ph, pw) = cfg.patch;
    let (_, gh, gw) = cfg.token_grid();
    let mut out = Mat::zeros(gh * gw, cfg.ref_patch_len());
    for yi in 0..gh {
        for xi in 0..gw {
            let r = out.row_mut(yi * gw + xi);
            let mut k = 0;
            for dy in 0..ph {
                for dx in 0..pw {
                    let base = ((yi * ph + dy) * l.w + xi * pw + dx) * l.c;
                    r[k..k + l.c].copy_from_slice(&frame[base..base + l.c]);
                    k += l.c;
                }
            }
        }
    }
    out
}

/// Everything the velocity field is conditioned on besides `(x_t, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conditioning {
    /// Log-Gamma LDR latent, same layout as `x_t`.
    pub ldr: Vec<f64>,
    /// Exposure masks pooled to the token grid.
    pub masks: TokenMasks,
    pub base_prompt: Vec<u32>,
    pub over_prompt: Vec<u32>,
    pub under_prompt: Vec<u32>,
    /// Optional reference frame `(h, w, c)` in Log-Gamma space.
    pub reference: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Mat,
    pub trainable: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn push(&mut self, name: impl Into<String>, value: Mat, trainable: bool) -> usize {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        self.index.insert(name.clone(), self.params.len());
        self.params.push(Param {
            name,
            value,
            trainable,
        });
        self.params.len() - 1
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, i: usize) -> &Param {
        &self.params[i]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut Param {
        &mut self.params[i]
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn by_name(&self, name: &str) -> Option<&Param> {
        self.id(name).map(|i| &self.params[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn trainable_count(&self) -> usize {
        self.params.iter().filter(|p| p.trainable).map(|p| p.value.len()).sum()
    }

    pub fn total_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoraConfig {
    pub rank: usize,
    pub scale: f64,
}

/// Bookkeeping from a forward pass.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ForwardStats {
    /// Cross-attention layers that evaluated the mask-guided blend.
    pub cfa_blends: usize,
    /// Output of each cross-attention layer, after any blending.
    pub cross_attention: Vec<Var>,
    /// `(base, over, under)` branches of each blended layer.
    pub branches: Vec<[Var; 3]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyDiT {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub lora: Option<LoraConfig>,
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Mat {
    Mat::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect(),
    )
}

const LINEAR_SUFFIXES: [&str; 10] = [
    "sa.q", "sa.k", "sa.v", "sa.o", "ca.q", "ca.k", "ca.v", "ca.o", "ffn.up", "ffn.down",
];

impl ToyDiT {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, FlowError> {
        config.validate()?;
        let mut rng = seeded_chacha(seed, &[label("toy-dit-init")]);
        let mut p = ParamStore::default();
        let d = config.dim;
        let linear = |p: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, d_in: usize, d_out: usize, std: f64| {
            p.push(format!("{name}.w"), gaussian(rng, d_out, d_in, std), true);
            p.push(format!("{name}.b"), Mat::zeros(1, d_out), true);
        };
        let fan = |n: usize| 1.0 / (n as f64).sqrt();
        linear(&mut p, &mut rng, "patch_in", config.input_len(), d, fan(config.input_len()));
        p.push("pos", gaussian(&mut rng, config.tokens(), d, 0.1), true);
        linear(&mut p, &mut rng, "ref_in", config.ref_patch_len(), d, fan(config.ref_patch_len()));
        p.push("ref_pos", gaussian(&mut rng, config.ref_tokens(), d, 0.1), true);
        linear(&mut p, &mut rng, "time1", d, d, fan(d));
        linear(&mut p, &mut rng, "time2", d, d, fan(d));
        p.push("prompt_table", gaussian(&mut rng, config.vocab_size, d, 0.5), true);
        let hidden = d * config.ffn_mult;
        for b in 0..config.blocks {
            let n = |s: &str| format!("blocks.{b}.{s}");
            linear(&mut p, &mut rng, &n("mod"), d, 6 * d, 0.02);
            for s in ["sa.q", "sa.k", "sa.v", "sa.o", "ca.q", "ca.k", "ca.v", "ca.o"] {
                linear(&mut p, &mut rng, &n(s), d, d, fan(d));
            }
            linear(&mut p, &mut rng, &n("ffn.up"), d, hidden, fan(d));
            linear(&mut p, &mut rng, &n("ffn.down"), hidden, d, fan(hidden));
        }
        linear(&mut p, &mut rng, "final_mod", d, 2 * d, 0.02);
        linear(&mut p, &mut rng, "head", d, config.patch_len(), 0.02);
        Ok(Self {
            config,
            params: p,
            lora: None,
        })
    }

    /// Names of the linear layers that receive adapters.
    pub fn adapted_layers(&self) -> Vec<String> {
        (0..self.config.blocks)
            .flat_map(|b| LINEAR_SUFFIXES.iter().map(move |s| format!("blocks.{b}.{s}")))
            .collect()
    }

    /// Freezes every existing weight and wraps each attention and
    /// feed-forward linear `W` as `W + scale * B A`, with
    /// `A ~ N(0, 1/d_in)` and `B = 0`.
    pub fn attach_lora(&mut self, rank: usize, scale: f64, seed: u64) -> Result<(), FlowError> {
        if self.lora.is_some() {
            return Err(FlowError::Config("adapters are already attached".into()));
        }
        if rank == 0 || !scale.is_finite() {
            return Err(FlowError::Config(format!("invalid LoRA rank {rank} / scale {scale}")));
        }
        let layers = self.adapted_layers();
        for name in &layers {
            let w = &self.params.by_name(&format!("{name}.w")).expect("layer exists").value;
            if rank > w.rows.min(w.cols) {
                return Err(FlowError::Config(format!(
                    "LoRA rank {rank} exceeds min(d_in, d_out) = {} for {name}",
                    w.rows.min(w.cols)
                )));
            }
        }
        for i in 0..self.params.len() {
            self.params.get_mut(i).trainable = false;
        }
        let mut rng = seeded_chacha(seed, &[label("lora-init")]);
        for name in &layers {
            let (d_out, d_in) = self.params.by_name(&format!("{name}.w")).expect("layer exists").value.shape();
            let a = gaussian(&mut rng, rank, d_in, 1.0 / (d_in as f64).sqrt());
            self.params.push(format!("{name}.lora_a"), a, true);
            self.params.push(format!("{name}.lora_b"), Mat::zeros(d_out, rank), true);
        }
        self.lora = Some(LoraConfig { rank, scale });
        Ok(())
    }

    fn p(&self, tape: &mut Tape, name: &str) -> Var {
        let i = self
            .params
            .id(name)
            .unwrap_or_else(|| panic!("missing parameter {name}"));
        tape.param(i, &self.params.get(i).value)
    }

    fn linear(&self, tape: &mut Tape, x: Var, name: &str) -> Var {
        let w = self.p(tape, &format!("{name}.w"));
        let b = self.p(tape, &format!("{name}.b"));
        let y = tape.matmul_bt(x, w);
        let mut y = tape.add_row(y, b);
        if let (Some(lora), Some(_)) = (self.lora, self.params.id(&format!("{name}.lora_a"))) {
            let a = self.p(tape, &format!("{name}.lora_a"));
            let bm = self.p(tape, &format!("{name}.lora_b"));
            let down = tape.matmul_bt(x, a);
            let up = tape.matmul_bt(down, bm);
            let up = tape.scale(up, lora.scale);
            y = tape.add(y, up);
        }
        y
    }

    fn attention(&self, tape: &mut Tape, q: Var, k: Var, v: Var) -> Var {
        let d = self.config.dim;
        let h = self.config.heads;
        let dh = d / h;
        let scale = 1.0 / (dh as f64).sqrt();
        let heads: Vec<Var> = (0..h)
            .map(|i| {
                let qh = tape.slice_cols(q, i * dh, dh);
                let kh = tape.slice_cols(k, i * dh, dh);
                let vh = tape.slice_cols(v, i * dh, dh);
                let s = tape.matmul_bt(qh, kh);
                let s = tape.scale(s, scale);
                let a = tape.softmax_rows(s);
                tape.matmul(a, vh)
            })
            .collect();
        tape.concat_cols(&heads)
    }

    fn cross_attention(&self, tape: &mut Tape, x: Var, prefix: &str, prompt: &[u32]) -> Var {
        let table = self.p(tape, "prompt_table");
        let ids: Vec<usize> = prompt.iter().map(|&i| i as usize).collect();
        let ctx = tape.gather_rows(table, &ids);
        let q = self.linear(tape, x, &format!("{prefix}.q"));
        let k = self.linear(tape, ctx, &format!("{prefix}.k"));
        let v = self.linear(tape, ctx, &format!("{prefix}.v"));
        let a = self.attention(tape, q, k, v);
        self.linear(tape, a, &format!("{prefix}.o"))
    }

    fn modulate(&self, tape: &mut Tape, x: Var, shift: Var, scale: Var) -> Var {
        let n = tape.layernorm(x);
        let ones = tape.input(Mat::from_vec(1, self.config.dim, vec![1.0; self.config.dim]));
        let gain = tape.add(scale, ones);
        let m = tape.mul_row(n, gain);
        tape.add_row(m, shift)
    }

    fn time_embedding(&self, tape: &mut Tape, t: f64) -> Var {
        let d = self.config.dim;
        let half = d / 2;
        let mut e = vec![0.0; d];
        for k in 0..half {
            let w = (-(10_000f64.ln()) * k as f64 / half as f64).exp();
            e[k] = (t * 1000.0 * w).sin();
            e[half + k] = (t * 1000.0 * w).cos();
        }
        let e = tape.input(Mat::from_vec(1, d, e));
        let h = self.linear(tape, e, "time1");
        let h = tape.silu(h);
        self.linear(tape, h, "time2")
    }

    pub fn check_conditioning(&self, x_t: &[f64], cond: &Conditioning) -> Result<(), FlowError> {
        let cfg = &self.config;
        let n = cfg.latent.len();
        if x_t.len() != n || cond.ldr.len() != n {
            return Err(FlowError::Shape(format!(
                "latent has {} values and LDR {}, model expects {n}",
                x_t.len(),
                cond.ldr.len()
            )));
        }
        if cond.masks.shape != cfg.token_grid() {
            return Err(FlowError::Shape(format!(
                "mask grid {:?} does not match token grid {:?}",
                cond.masks.shape,
                cfg.token_grid()
            )));
        }
        for (name, p) in [
            ("base", &cond.base_prompt),
            ("over", &cond.over_prompt),
            ("under", &cond.under_prompt),
        ] {
            if p.is_empty() || p.iter().any(|&id| id as usize >= cfg.vocab_size) {
                return Err(FlowError::Shape(format!(
                    "{name} prompt must hold 1.. ids below {}",
                    cfg.vocab_size
                )));
            }
        }
        if let Some(r) = &cond.reference {
            if r.len() != cfg.latent.frame_len() {
                return Err(FlowError::Shape(format!(
                    "reference frame has {} values, expected {}",
                    r.len(),
                    cfg.latent.frame_len()
                )));
            }
        }
        Ok(())
    }

    /// Records the velocity prediction on `tape`; returns a
    /// `tokens x patch_len` node.
    pub fn forward(
        &self,
        tape: &mut Tape,
        x_t: &[f64],
        t: f64,
        cond: &Conditioning,
        cfa: &CfaConfig,
    ) -> Result<(Var, ForwardStats), FlowError> {
        self.check_conditioning(x_t, cond)?;
        cfa.validate()?;
        let cfg = &self.config;
        let d = cfg.dim;
        let n_tok = cfg.tokens();
        let xp = patchify(cfg, x_t);
        let lp = patchify(cfg, &cond.ldr);
        let mut input = Mat::zeros(n_tok, cfg.input_len());
        for i in 0..n_tok {
            let r = input.row_mut(i);
            let p = cfg.patch_len();
            r[..p].copy_from_slice(xp.row(i));
            r[p..2 * p].copy_from_slice(lp.row(i));
            r[2 * p] = f64::from(cond.masks.over[i]);
            r[2 * p + 1] = f64::from(cond.masks.under[i]);
        }
        let input = tape.input(input);
        let h = self.linear(tape, input, "patch_in");
        let pos = self.p(tape, "pos");
        let mut x = tape.add(h, pos);
        let n_ref = match &cond.reference {
            Some(frame) => {
                let rp = tape.input(patchify_frame(cfg, frame));
                let r = self.linear(tape, rp, "ref_in");
                let rpos = self.p(tape, "ref_pos");
                let r = tape.add(r, rpos);
                x = tape.concat_rows(&[x, r]);
                cfg.ref_tokens()
            }
            None => 0,
        };
        let temb = self.time_embedding(tape, t);
        let temb = tape.silu(temb);
        let (wo, wu) = cfa.token_weights(&cond.masks, n_ref);
        let mut stats = ForwardStats::default();
        for b in 0..cfg.blocks {
            let name = |s: &str| format!("blocks.{b}.{s}");
            let m = self.linear(tape, temb, &name("mod"));
            let chunk: Vec<Var> = (0..6).map(|k| tape.slice_cols(m, k * d, d)).collect();

            let h = self.modulate(tape, x, chunk[0], chunk[1]);
            let q = self.linear(tape, h, &name("sa.q"));
            let k = self.linear(tape, h, &name("sa.k"));
            let v = self.linear(tape, h, &name("sa.v"));
            let a = self.attention(tape, q, k, v);
            let a = self.linear(tape, a, &name("sa.o"));
            x = tape.add(x, a);

            let h = self.modulate(tape, x, chunk[2], chunk[3]);
            let r = if cfa.enabled {
                let base = self.cross_attention(tape, h, &name("ca"), &cond.base_prompt);
                let over = self.cross_attention(tape, h, &name("ca"), &cond.over_prompt);
                let under = self.cross_attention(tape, h, &name("ca"), &cond.under_prompt);
                stats.cfa_blends += 1;
                stats.branches.push([base, over, under]);
                tape.blend3(base, over, under, wo.clone(), wu.clone())
            } else {
                self.cross_attention(tape, h, &name("ca"), &cond.base_prompt)
            };
            stats.cross_attention.push(r);
            x = tape.add(x, r);

            let h = self.modulate(tape, x, chunk[4], chunk[5]);
            let f = self.linear(tape, h, &name("ffn.up"));
            let f = tape.silu(f);
            let f = self.linear(tape, f, &name("ffn.down"));
            x = tape.add(x, f);
        }
        if n_ref > 0 {
            x = tape.slice_rows(x, 0, n_tok);
        }
        let m = self.linear(tape, temb, "final_mod");
        let shift = tape.slice_cols(m, 0, d);
        let scale = tape.slice_cols(m, d, d);
        let h = self.modulate(tape, x, shift, scale);
        let out = self.linear(tape, h, "head");
        if !tape.value(out).is_finite() {
            return Err(FlowError::NonFinite(format!("velocity at t = {t}")));
        }
        Ok((out, stats))
    }

    /// Velocity `u(x_t, t, c)` in latent layout.
    pub fn velocity(
        &self,
        x_t: &[f64],
        t: f64,
        cond: &Conditioning,
        cfa: &CfaConfig,
    ) -> Result<Vec<f64>, FlowError> {
        let mut tape = Tape::new();
        let (out, _) = self.forward(&mut tape, x_t, t, cond, cfa)?;
        Ok(unpatchify(&self.config, tape.value(out)))
    }

    /// Outputs of every cross-attention layer.
    pub fn cross_attention_outputs(
        &self,
        x_t: &[f64],
        t: f64,
        cond: &Conditioning,
        cfa: &CfaConfig,
    ) -> Result<Vec<Mat>, FlowError> {
        let mut tape = Tape::new();
        let (_, stats) = self.forward(&mut tape, x_t, t, cond, cfa)?;
        Ok(stats.cross_attention.iter().map(|&v| tape.value(v).clone()).collect())
    }
}
