use hdrforge_flow::cfa::CfaConfig;
use hdrforge_flow::data::Example;
use hdrforge_flow::gradcheck::{check_gradients, synthetic_case};
use hdrforge_flow::model::{Conditioning, ModelConfig, ToyDiT};
use hdrforge_flow::tensor::{Mat, Tape};
use hdrforge_flow::train::{sample_loss_and_grads, FlowDraw, TrainConfig, Trainer};
use hdrforge_flow::FlowError;

fn small_config() -> ModelConfig {
    ModelConfig {
        latent: hdrforge_flow::model::LatentShape { t: 2, h: 8, w: 8, c: 3 },
        patch: (1, 4, 4),
        dim: 16,
        heads: 2,
        blocks: 2,
        ffn_mult: 2,
        vocab_size: 12,
    }
}

fn bits(m: &Mat) -> Vec<u64> {
    m.data.iter().map(|v| v.to_bits()).collect()
}

fn bits_vec(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn ca_outputs(model: &ToyDiT, x: &[f64], cond: &Conditioning, cfa: &CfaConfig) -> Vec<Vec<u64>> {
    model
        .cross_attention_outputs(x, 0.4, cond, cfa)
        .unwrap()
        .iter()
        .map(bits)
        .collect()
}

#[test]
fn output_shape_matches_latent_with_and_without_reference() {
    for cfg in [small_config(), ModelConfig::micro(5), ModelConfig { vocab_size: 7, ..ModelConfig::default() }] {
        let model = ToyDiT::new(cfg.clone(), 3).unwrap();
        let (ex, draw) = synthetic_case(&cfg, 4, false);
        let v = model.velocity(&draw.x0, 0.3, &ex.cond, &CfaConfig::default()).unwrap();
        assert_eq!(v.len(), cfg.latent.len());
        let (ex_ref, _) = synthetic_case(&cfg, 4, true);
        let v_ref = model.velocity(&draw.x0, 0.3, &ex_ref.cond, &CfaConfig::default()).unwrap();
        assert_eq!(v_ref.len(), cfg.latent.len());
        assert_ne!(v, v_ref, "reference tokens should influence the output");
    }
}

#[test]
fn shape_mismatches_are_errors() {
    let cfg = small_config();
    let model = ToyDiT::new(cfg.clone(), 3).unwrap();
    let (mut ex, draw) = synthetic_case(&cfg, 4, false);
    assert!(matches!(
        model.velocity(&draw.x0[1..], 0.3, &ex.cond, &CfaConfig::default()),
        Err(FlowError::Shape(_))
    ));
    ex.cond.over_prompt = vec![99];
    assert!(model.velocity(&draw.x0, 0.3, &ex.cond, &CfaConfig::default()).is_err());
    ex.cond.over_prompt.clear();
    assert!(model.velocity(&draw.x0, 0.3, &ex.cond, &CfaConfig::default()).is_err());
    let (mut ex, _) = synthetic_case(&cfg, 4, false);
    ex.cond.masks.shape = (1, 1, 1);
    assert!(model.velocity(&draw.x0, 0.3, &ex.cond, &CfaConfig::default()).is_err());
    let bad = CfaConfig { alpha_over: f64::NAN, ..CfaConfig::default() };
    let (ex, _) = synthetic_case(&cfg, 4, false);
    assert!(model.velocity(&draw.x0, 0.3, &ex.cond, &bad).is_err());
    assert!(ToyDiT::new(ModelConfig { patch: (1, 3, 4), ..cfg }, 0).is_err());
}

#[test]
fn disabled_cfa_matches_zero_alpha_bit_for_bit() {
    let cfg = small_config();
    let model = ToyDiT::new(cfg.clone(), 8).unwrap();
    let (ex, draw) = synthetic_case(&cfg, 9, false);
    let off = model.velocity(&draw.x0, 0.6, &ex.cond, &CfaConfig::disabled()).unwrap();
    let zero = CfaConfig {
        enabled: true,
        alpha_over: 0.0,
        alpha_under: 0.0,
    };
    let on = model.velocity(&draw.x0, 0.6, &ex.cond, &zero).unwrap();
    assert_eq!(bits_vec(&off), bits_vec(&on));
}

#[test]
fn cfa_degeneracies_hold_at_every_layer() {
    let cfg = small_config();
    assert_eq!(cfg.blocks, 2);
    let model = ToyDiT::new(cfg.clone(), 11).unwrap();
    let (ex, draw) = synthetic_case(&cfg, 12, true);
    let x = &draw.x0;
    let plain = ca_outputs(&model, x, &ex.cond, &CfaConfig::disabled());
    assert_eq!(plain.len(), 2);

    let alpha0 = CfaConfig { enabled: true, alpha_over: 0.0, alpha_under: 0.0 };
    assert_eq!(ca_outputs(&model, x, &ex.cond, &alpha0), plain);

    let mut zero_masks = ex.cond.clone();
    zero_masks.masks.over.iter_mut().for_each(|m| *m = 0.0);
    zero_masks.masks.under.iter_mut().for_each(|m| *m = 0.0);
    let plain_zero = ca_outputs(&model, x, &zero_masks, &CfaConfig::disabled());
    assert_eq!(ca_outputs(&model, x, &zero_masks, &CfaConfig::default()), plain_zero);

    // Full routing to the over-exposure prompt equals plain attention under
    // it; reference tokens carry no masks, so this uses video-only input.
    let (video, _) = synthetic_case(&cfg, 12, false);
    let mut full_over = video.cond.clone();
    full_over.masks.over.iter_mut().for_each(|m| *m = 1.0);
    let swap = CfaConfig { enabled: true, alpha_over: 1.0, alpha_under: 0.0 };
    let mut as_base = full_over.clone();
    as_base.base_prompt = full_over.over_prompt.clone();
    assert_eq!(
        ca_outputs(&model, x, &full_over, &swap),
        ca_outputs(&model, x, &as_base, &CfaConfig::disabled())
    );

    let mut full_under = video.cond.clone();
    full_under.masks.under.iter_mut().for_each(|m| *m = 1.0);
    let swap_u = CfaConfig { enabled: true, alpha_over: 0.0, alpha_under: 1.0 };
    let mut as_base_u = full_under.clone();
    as_base_u.base_prompt = full_under.under_prompt.clone();
    assert_eq!(
        ca_outputs(&model, x, &full_under, &swap_u),
        ca_outputs(&model, x, &as_base_u, &CfaConfig::disabled())
    );
}

#[test]
fn blend_matches_elementwise_formula() {
    let cfg = small_config();
    let model = ToyDiT::new(cfg.clone(), 21).unwrap();
    let (ex, draw) = synthetic_case(&cfg, 22, false);
    let cfa = CfaConfig { enabled: true, alpha_over: 0.7, alpha_under: 1.3 };
    let mut tape = Tape::new();
    let (_, stats) = model.forward(&mut tape, &draw.x0, 0.5, &ex.cond, &cfa).unwrap();
    assert_eq!(stats.cfa_blends, cfg.blocks);
    for (layer, [b, o, u]) in stats.branches.iter().enumerate() {
        let r = tape.value(stats.cross_attention[layer]);
        let (b, o, u) = (tape.value(*b), tape.value(*o), tape.value(*u));
        for i in 0..r.rows {
            let (mo, mu) = (f64::from(ex.cond.masks.over[i]), f64::from(ex.cond.masks.under[i]));
            for j in 0..r.cols {
                let k = i * r.cols + j;
                let want = b.data[k] + 0.7 * mo * (o.data[k] - b.data[k]) + 1.3 * mu * (u.data[k] - b.data[k]);
                assert!((r.data[k] - want).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn fresh_lora_is_a_no_op_and_counts_parameters() {
    let cfg = small_config();
    let base = ToyDiT::new(cfg.clone(), 5).unwrap();
    let (ex, draw) = synthetic_case(&cfg, 6, false);
    let before = base.velocity(&draw.x0, 0.2, &ex.cond, &CfaConfig::default()).unwrap();
    let mut adapted = base.clone();
    adapted.attach_lora(4, 1.0, 7).unwrap();
    let after = adapted.velocity(&draw.x0, 0.2, &ex.cond, &CfaConfig::default()).unwrap();
    assert_eq!(bits_vec(&before), bits_vec(&after));

    let d = cfg.dim;
    let h = d * cfg.ffn_mult;
    // Per block: 8 attention projections d->d, ffn d->h and h->d.
    let per_block = 8 * 4 * (d + d) + 4 * (d + h) + 4 * (h + d);
    assert_eq!(adapted.params.trainable_count(), cfg.blocks * per_block);

    let mut again = adapted.clone();
    assert!(again.attach_lora(2, 1.0, 0).is_err());
    let mut too_big = base.clone();
    assert!(too_big.attach_lora(d + 1, 1.0, 0).is_err());
    let mut zero = base;
    assert!(zero.attach_lora(0, 1.0, 0).is_err());
}

#[test]
fn lora_training_freezes_base_weights() {
    let cfg = small_config();
    let mut model = ToyDiT::new(cfg.clone(), 5).unwrap();
    model.attach_lora(2, 1.0, 7).unwrap();
    let frozen: Vec<(String, Vec<u64>)> = model
        .params
        .iter()
        .filter(|p| !p.trainable)
        .map(|p| (p.name.clone(), bits(&p.value)))
        .collect();
    let data: Vec<Example> = (0..4).map(|s| synthetic_case(&cfg, 40 + s, false).0).collect();
    let (_, probe) = synthetic_case(&cfg, 99, false);
    let before = model.velocity(&probe.x0, 0.5, &data[0].cond, &CfaConfig::default()).unwrap();
    let mut trainer = Trainer::new(model, TrainConfig { batch_size: 2, ..TrainConfig::default() }).unwrap();
    for _ in 0..3 {
        let r = trainer.step(&data).unwrap();
        assert!(r.grad_norm > 0.0);
    }
    let after = trainer.model.velocity(&probe.x0, 0.5, &data[0].cond, &CfaConfig::default()).unwrap();
    assert_ne!(before, after);
    for (name, b) in frozen {
        assert_eq!(bits(&trainer.model.params.by_name(&name).unwrap().value), b, "{name} changed");
    }
}

#[test]
fn training_never_evaluates_the_blend() {
    let cfg = small_config();
    let data: Vec<Example> = (0..3).map(|s| synthetic_case(&cfg, s, true).0).collect();
    let mut trainer = Trainer::new(ToyDiT::new(cfg, 1).unwrap(), TrainConfig { batch_size: 3, ..TrainConfig::default() }).unwrap();
    for _ in 0..3 {
        assert_eq!(trainer.step(&data).unwrap().cfa_blends, 0);
    }
}

#[test]
fn zero_output_loss_is_mean_squared_velocity() {
    let cfg = small_config();
    let mut model = ToyDiT::new(cfg.clone(), 2).unwrap();
    for name in ["head.w", "head.b"] {
        let i = model.params.id(name).unwrap();
        model.params.get_mut(i).value.data.iter_mut().for_each(|v| *v = 0.0);
    }
    let (ex, draw) = synthetic_case(&cfg, 3, false);
    let (loss, _, _) = sample_loss_and_grads(&model, &ex.x1, &ex.cond, &draw).unwrap();
    let direct = ex.x1.iter().zip(&draw.x0).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / ex.x1.len() as f64;
    assert!((loss - direct).abs() < 1e-12, "{loss} vs {direct}");
}

#[test]
fn training_is_deterministic_across_thread_counts() {
    let cfg = small_config();
    let data: Vec<Example> = (0..6).map(|s| synthetic_case(&cfg, 60 + s, false).0).collect();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let mut t = Trainer::new(ToyDiT::new(cfg.clone(), 1).unwrap(), TrainConfig { batch_size: 4, seed: 3, ..TrainConfig::default() }).unwrap();
            let losses: Vec<u64> = (0..4).map(|_| t.step(&data).unwrap().loss.to_bits()).collect();
            (losses, t.model)
        })
    };
    let (l1, m1) = run(1);
    let (l3, m3) = run(3);
    assert_eq!(l1, l3);
    assert_eq!(m1, m3);
}

#[test]
fn fixed_batch_loss_halves_within_200_steps() {
    let cfg = ModelConfig::micro(8);
    let data: Vec<Example> = (0..8).map(|s| synthetic_case(&cfg, 100 + s, false).0).collect();
    let mut trainer = Trainer::new(
        ToyDiT::new(cfg, 4).unwrap(),
        TrainConfig { learning_rate: 0.1, seed: 1, ..TrainConfig::default() },
    )
    .unwrap();
    let draws: Vec<(&Example, FlowDraw)> = data.iter().map(|e| (e, trainer.draw(e))).collect();
    let losses: Vec<f64> = (0..200).map(|_| trainer.step_with_draws(&draws).unwrap().loss).collect();
    assert!(losses[199] <= 0.5 * losses[0], "step-1 loss {} vs final {}", losses[0], losses[199]);
}

#[test]
fn gradients_match_with_reference_tokens_and_adapters() {
    let cfg = ModelConfig::micro(6);
    let mut model = ToyDiT::new(cfg.clone(), 13).unwrap();
    model.attach_lora(2, 0.5, 14).unwrap();
    // Non-zero B so adapter gradients flow into A as well.
    for i in 0..model.params.len() {
        if model.params.get(i).name.ends_with("lora_b") {
            for (k, v) in model.params.get_mut(i).value.data.iter_mut().enumerate() {
                *v = ((k * 37 % 11) as f64 - 5.0) * 0.05;
            }
        }
    }
    let (ex, draw) = synthetic_case(&cfg, 15, true);
    let report = check_gradients(&model, &ex, &draw, 1e-5).unwrap();
    assert!(report.max_rel_err() < 1e-4, "{:#?}", report.params);
}

#[test]
fn training_loss_ignores_focused_prompts() {
    let cfg = small_config();
    let model = ToyDiT::new(cfg.clone(), 31).unwrap();
    let (ex, draw) = synthetic_case(&cfg, 32, false);
    let a = sample_loss_and_grads(&model, &ex.x1, &ex.cond, &draw).unwrap().0;
    let mut other = ex.cond.clone();
    other.over_prompt = vec![0];
    let b = sample_loss_and_grads(&model, &ex.x1, &other, &draw).unwrap().0;
    assert_eq!(a.to_bits(), b.to_bits());
}
