use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use hdrforge_cli::config::{LoadedConfig, RunConfig};
use hdrforge_cli::curate::{
    curate_panorama, curate_procedural, degrade_params_for, generic_caption, panorama_seed,
    write_clip, DatasetManifest, MANIFEST_FILE, MANIFEST_VERSION,
};
use hdrforge_cli::experiment;
use hdrforge_core::color::{
    apply_exposure, linearize_srgb_clip, log_gamma_decode_clip, log_gamma_encode_clip, tonemap_clip, LogGammaParams,
    ToneOperator,
};
use hdrforge_core::degrade::degrade_clip;
use hdrforge_core::hdr_io::ppm::frames_to_clip;
use hdrforge_core::hdr_io::{read_hfv, read_ppm_dir, read_radiance, write_hfv, write_ppm_dir, Rgb8Image};
use hdrforge_core::image::{ClipMetadata, Colorspace, VideoClip};
use hdrforge_core::mask::{detect_masks, detect_raw_masks, pool_masks, ExposureMasks};
use hdrforge_core::metrics::{clip_metrics, radiance_stats};
use hdrforge_core::pano::render::DEFAULT_FPS;
use hdrforge_core::pano::Panorama;
use hdrforge_core::prompt::{ContextPrompt, Vocab};
use hdrforge_flow::cfa::CfaBase;
use hdrforge_flow::checkpoint;
use hdrforge_flow::data::{decode_latent, latent_to_clip, ldr_latent, Example};
use hdrforge_flow::model::Conditioning;
use hdrforge_flow::sample::euler_sample;

#[derive(Parser)]
#[command(name = "hdrforge", version, about = "HDR video reconstruction pipeline at desk scale")]
struct Cli {
    /// Worker threads for data-parallel stages; 1 gives bitwise determinism.
    #[arg(long, global = true, env = "HDRFORGE_THREADS")]
    threads: Option<usize>,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Emit diagnostics on stderr as JSON lines.
    #[arg(long, global = true)]
    json_errors: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render, degrade and mask clips from HDRIs or procedural panoramas.
    Curate(CurateArgs),
    /// Simulate LDR capture of a linear HDR clip.
    Degrade(DegradeArgs),
    /// Detect EMA-smoothed exposure masks from LDR frames.
    Mask(MaskArgs),
    /// Log-Gamma encode a linear clip.
    Encode(EncodeArgs),
    /// Decode a Log-Gamma clip back to linear radiance.
    Decode(IoArgs),
    /// Tone map a linear clip to 8-bit frames.
    Tonemap(TonemapArgs),
    /// Scale linear radiance by 2^stops.
    ReExpose(ReExposeArgs),
    /// Train the flow model on a curated dataset.
    Train(TrainArgs),
    /// Reconstruct an HDR clip from LDR frames.
    Sample(SampleArgs),
    /// PSNR/SSIM between two clips.
    Metrics(MetricsArgs),
    /// Radiance statistics of a linear clip.
    Stats(StatsArgs),
    /// Validate a dataset manifest against the filesystem.
    Inspect(InspectArgs),
}

#[derive(Args)]
struct CurateArgs {
    /// Directory of equirectangular Radiance .hdr files.
    #[arg(long, conflicts_with = "procedural", required_unless_present = "procedural")]
    hdri_dir: Option<PathBuf>,
    /// Generate this many procedural panoramas instead of reading HDRIs.
    #[arg(long)]
    procedural: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct DegradeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Output directory for PPM frames and params.json.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, allow_hyphen_values = true)]
    delta: Option<f64>,
    #[arg(long)]
    sigma_s: Option<f64>,
    #[arg(long)]
    sigma_c: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
}

#[derive(Args)]
struct MaskArgs {
    /// Directory of PPM frames.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    tau_high: Option<f64>,
    #[arg(long)]
    tau_low: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Store per-frame masks without temporal smoothing.
    #[arg(long)]
    raw: bool,
}

#[derive(Args)]
struct IoArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EncodeArgs {
    #[command(flatten)]
    io: IoArgs,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    max_radiance: Option<f64>,
    /// Clamp radiance above the maximum instead of failing.
    #[arg(long)]
    clamp: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ToneOp {
    Reinhard,
    MuLaw,
}

#[derive(Args)]
struct TonemapArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Output directory for PPM frames.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "reinhard")]
    op: ToneOp,
    #[arg(long, default_value_t = 5000.0)]
    mu: f64,
}

#[derive(Args)]
struct ReExposeArgs {
    #[command(flatten)]
    io: IoArgs,
    #[arg(long, allow_hyphen_values = true)]
    stops: f64,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset manifest written by `curate`.
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint to write.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Attach LoRA adapters of this rank and train only them.
    #[arg(long)]
    lora_rank: Option<usize>,
    /// Start from an existing checkpoint.
    #[arg(long)]
    init: Option<PathBuf>,
    /// Manifest of held-out clips to score after training.
    #[arg(long)]
    holdout: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// Directory of LDR PPM frames.
    #[arg(long)]
    ldr: PathBuf,
    /// Structured caption: "global [overexposed: ...]; [underexposed: ...]".
    #[arg(long, default_value = "")]
    prompt: String,
    /// Precomputed masks; detected from the LDR frames when absent.
    #[arg(long)]
    masks: Option<PathBuf>,
    #[arg(long)]
    alpha_over: Option<f64>,
    #[arg(long)]
    alpha_under: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, value_parser = parse_cfa_base)]
    cfa_base: Option<CfaBase>,
    /// Plain cross-attention with the base prompt only.
    #[arg(long)]
    no_cfa: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

fn parse_cfa_base(s: &str) -> Result<CfaBase, String> {
    s.parse().map_err(|e: hdrforge_flow::FlowError| e.to_string())
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Space {
    Srgb,
    Loggamma,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[arg(long, value_enum, default_value = "srgb")]
    space: Space,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    masks: Option<PathBuf>,
}

#[derive(Args)]
struct InspectArgs {
    /// Manifest file, or a directory containing manifest.json.
    #[arg(long)]
    manifest: PathBuf,
}

/// Errors that map to exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct UsageError(String);

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn require_file(p: &Path) -> Result<()> {
    if !p.exists() {
        return Err(usage(format!("input not found: {}", p.display())));
    }
    Ok(())
}

fn load_config(cli: &Cli) -> Result<LoadedConfig> {
    if let Some(p) = &cli.config {
        require_file(p)?;
    }
    LoadedConfig::load(cli.config.as_deref()).map_err(|e| usage(format!("{e:#}")))
}

fn print_json(v: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn write_json(path: &Path, v: &impl serde::Serialize) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    std::fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

fn read_linear(path: &Path) -> Result<VideoClip> {
    require_file(path)?;
    let clip = read_hfv(path)?;
    if clip.meta.colorspace != Colorspace::LinearRec709 {
        bail!("{} is {:?}, expected linear Rec.709", path.display(), clip.meta.colorspace);
    }
    Ok(clip)
}

fn read_ldr_dir(dir: &Path) -> Result<VideoClip> {
    require_file(dir)?;
    Ok(frames_to_clip(&read_ppm_dir(dir)?, DEFAULT_FPS)?)
}

fn curate(cfg: &LoadedConfig, a: &CurateArgs) -> Result<()> {
    let mut run = cfg.config.clone();
    if let Some(v) = a.frames {
        run.curate.frames = v;
    }
    if let Some(v) = a.width {
        run.curate.width = v;
    }
    if let Some(v) = a.height {
        run.curate.height = v;
    }
    if let Some(v) = a.seed {
        run.seed = v;
    }
    let clips = match (&a.hdri_dir, a.procedural) {
        (_, Some(n)) => curate_procedural(n, &run)?,
        (Some(dir), None) => {
            require_file(dir)?;
            let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("hdr")))
                .collect();
            files.sort();
            if files.is_empty() {
                return Err(usage(format!("no .hdr files in {}", dir.display())));
            }
            let mut all = Vec::new();
            for (i, f) in files.iter().enumerate() {
                let id = f.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                let pano = Panorama::new(id.clone(), read_radiance(f)?)?;
                let seed = panorama_seed(run.seed, i);
                all.extend(curate_panorama(
                    &pano,
                    &generic_caption(&id),
                    seed,
                    &run.curate,
                    &run.degrade,
                    &run.mask,
                )?);
            }
            all
        }
        (None, None) => return Err(usage("either --hdri-dir or --procedural is required")),
    };
    std::fs::create_dir_all(&a.out)?;
    let records = clips
        .iter()
        .map(|c| {
            let r = write_clip(&a.out, c, &run.mask)?;
            write_json(&a.out.join(&c.clip_id).join("record.json"), &r)?;
            Ok(r)
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        config: cfg.source.clone(),
        clips: records,
    };
    let path = manifest.write(&a.out)?;
    log::info!("wrote {} clips and {}", clips.len(), path.display());
    print_json(&json!({"clips": clips.len(), "manifest": path}))
}

fn degrade(cfg: &LoadedConfig, a: &DegradeArgs) -> Result<()> {
    let hdr = read_linear(&a.input)?;
    let mut d = cfg.config.degrade;
    d.delta = a.delta.or(d.delta);
    d.sigma_s = a.sigma_s.or(d.sigma_s);
    d.sigma_c = a.sigma_c.or(d.sigma_c);
    d.rho = a.rho.unwrap_or(d.rho);
    let params = degrade_params_for(a.seed.unwrap_or(cfg.config.seed), &d);
    let out = degrade_clip(&hdr, &params)?;
    write_ppm_dir(&a.out, &out.bytes)?;
    write_json(&a.out.join("params.json"), &params)?;
    print_json(&params)
}

fn mask(cfg: &LoadedConfig, a: &MaskArgs) -> Result<()> {
    let mut p = cfg.config.mask;
    p.tau_high = a.tau_high.unwrap_or(p.tau_high);
    p.tau_low = a.tau_low.unwrap_or(p.tau_low);
    p.alpha = a.alpha.unwrap_or(p.alpha);
    p.validate().map_err(|e| usage(e.to_string()))?;
    let ldr = read_ldr_dir(&a.input)?;
    let masks = if a.raw {
        detect_raw_masks(&ldr, &p)?
    } else {
        detect_masks(&ldr, &p)?
    };
    masks.write(&a.out, ldr.fps, &p)?;
    let n = (masks.width * masks.height * masks.frame_count()) as f64;
    let frac = |m: &[Vec<f32>]| m.iter().flatten().map(|&v| f64::from(v)).sum::<f64>() / n;
    print_json(&json!({"frames": masks.frame_count(), "over_frac": frac(&masks.over), "under_frac": frac(&masks.under)}))
}

fn encode(cfg: &LoadedConfig, a: &EncodeArgs) -> Result<()> {
    let clip = read_linear(&a.io.input)?;
    let lg = LogGammaParams {
        gamma: a.gamma.unwrap_or(cfg.config.log_gamma.gamma),
        max_radiance: a.max_radiance.unwrap_or(cfg.config.log_gamma.max_radiance),
    };
    lg.validate().map_err(|e| usage(e.to_string()))?;
    write_hfv(&a.io.out, &log_gamma_encode_clip(&clip, lg, a.clamp)?)?;
    Ok(())
}

fn decode(a: &IoArgs) -> Result<()> {
    require_file(&a.input)?;
    write_hfv(&a.out, &log_gamma_decode_clip(&read_hfv(&a.input)?)?)?;
    Ok(())
}

fn tonemap(a: &TonemapArgs) -> Result<()> {
    let clip = read_linear(&a.input)?;
    let op = match a.op {
        ToneOp::Reinhard => ToneOperator::Reinhard,
        ToneOp::MuLaw => ToneOperator::MuLaw { mu: a.mu },
    };
    op.validate().map_err(|e| usage(e.to_string()))?;
    let mapped = tonemap_clip(&clip, op)?;
    let frames: Vec<Rgb8Image> = mapped.frames.iter().map(Rgb8Image::from_unit_float).collect();
    write_ppm_dir(&a.out, &frames)?;
    Ok(())
}

fn re_expose(a: &ReExposeArgs) -> Result<()> {
    let clip = read_linear(&a.io.input)?;
    write_hfv(&a.io.out, &apply_exposure(&clip, a.stops)?)?;
    Ok(())
}

fn train(cfg: &LoadedConfig, a: &TrainArgs) -> Result<()> {
    require_file(&a.data)?;
    let mut run: RunConfig = cfg.config.clone();
    if let Some(s) = a.seed {
        run.seed = s;
    }
    if let Some(s) = a.steps {
        run.train.steps = s;
    }
    if a.lora_rank.is_some() {
        run.train.lora_rank = a.lora_rank;
    }
    let clips = load_manifest_clips(&a.data, &run)?;
    if clips.is_empty() {
        bail!("manifest {} lists no clips", a.data.display());
    }
    let first = &clips[0];
    run.curate.frames = first.hdr.frame_count();
    run.curate.width = first.hdr.width();
    run.curate.height = first.hdr.height();
    let (mut model, vocab) = match &a.init {
        Some(p) => {
            require_file(p)?;
            let (m, extra) = checkpoint::load(p)?;
            let vocab = vocab_from_extra(&extra)?;
            run.log_gamma = serde_json::from_value(extra["log_gamma"].clone()).context("checkpoint log_gamma")?;
            (m, vocab)
        }
        None => {
            let vocab = experiment::build_vocab(&clips);
            let mut r = run.clone();
            r.train.lora_rank = None;
            (experiment::new_model(&r, &vocab)?, vocab)
        }
    };
    if let Some(rank) = run.train.lora_rank {
        if model.lora.is_none() {
            model.attach_lora(rank, run.train.lora_scale, hdrforge_core::rng::derive_key(run.seed, &[hdrforge_core::rng::label("lora")]))?;
        }
    }
    let data = experiment::examples(&clips, &model.config, &vocab, run.log_gamma)?;
    let mut trainer = experiment::trainer(model, &run)?;
    let every = run.train.log_every.max(1);
    let losses = experiment::train(&mut trainer, &data, run.train.steps, |r| {
        if r.step % every == 0 {
            log::info!("step {} loss {:.5} grad-norm {:.4}", r.step, r.loss, r.grad_norm);
        }
    })?;
    let extra = json!({
        "vocab": serde_json::from_str::<serde_json::Value>(&vocab.to_json())?,
        "log_gamma": run.log_gamma,
        "mask": run.mask,
        "run_config": cfg.source,
        "steps": run.train.steps,
    });
    checkpoint::save(&a.out, &trainer.model, extra)?;
    let (first_mean, last_mean, reduction) = experiment::loss_reduction(&losses, 10);
    let mut summary = json!({
        "checkpoint": a.out,
        "steps": losses.len(),
        "trainable_parameters": trainer.model.params.trainable_count(),
        "loss_first10": first_mean,
        "loss_last10": last_mean,
        "loss_reduction": reduction,
        "losses": losses,
    });
    if let Some(h) = &a.holdout {
        require_file(h)?;
        let held = load_manifest_clips(h, &run)?;
        let data = experiment::examples(&held, &trainer.model.config, &vocab, run.log_gamma)?;
        let report = experiment::evaluate(&trainer.model, &data, &run.sample, run.seed, &vocab.encode(""))?;
        summary["holdout"] = serde_json::to_value(&report)?;
    }
    write_json(&a.out.with_extension("train.json"), &summary)?;
    summary.as_object_mut().expect("object").remove("losses");
    print_json(&summary)
}

fn load_manifest_clips(path: &Path, run: &RunConfig) -> Result<Vec<hdrforge_cli::curate::CuratedClip>> {
    let path = manifest_path(path);
    require_file(&path)?;
    let root = path.parent().unwrap_or(Path::new("."));
    let m = DatasetManifest::read(&path)?;
    m.clips
        .iter()
        .map(|r| hdrforge_cli::curate::load_clip(root, r, &run.mask))
        .collect()
}

fn manifest_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(MANIFEST_FILE)
    } else {
        p.to_path_buf()
    }
}

fn vocab_from_extra(extra: &serde_json::Value) -> Result<Vocab> {
    let v = extra.get("vocab").ok_or_else(|| anyhow!("checkpoint carries no vocabulary"))?;
    Ok(Vocab::from_json(&v.to_string())?)
}

fn sample(cfg: &LoadedConfig, a: &SampleArgs) -> Result<()> {
    require_file(&a.ckpt)?;
    let (model, extra) = checkpoint::load(&a.ckpt)?;
    let vocab = vocab_from_extra(&extra)?;
    let lg: LogGammaParams = serde_json::from_value(extra["log_gamma"].clone()).context("checkpoint log_gamma")?;
    let mut s = cfg.config.sample;
    s.alpha_over = a.alpha_over.unwrap_or(s.alpha_over);
    s.alpha_under = a.alpha_under.unwrap_or(s.alpha_under);
    s.steps = a.steps.unwrap_or(s.steps);
    s.cfa_base = a.cfa_base.unwrap_or(s.cfa_base);
    s.cfa = s.cfa && !a.no_cfa;

    let ldr = read_ldr_dir(&a.ldr)?;
    let masks = match &a.masks {
        Some(p) => {
            require_file(p)?;
            ExposureMasks::read(p)?
        }
        None => detect_masks(&ldr, &cfg.config.mask)?,
    };
    let prompt = ContextPrompt::parse(&a.prompt).map_err(|e| usage(format!("--prompt: {e}")))?;
    let shape = model.config.latent;
    let lin = linearize_srgb_clip(&ldr)?;
    let ids = hdrforge_flow::data::PromptIds::encode(&prompt, &vocab);
    let ex = Example {
        x1: vec![0.0; shape.len()],
        cond: Conditioning {
            ldr: ldr_latent(&ldr, lg, shape)?,
            masks: pool_masks(&masks, model.config.token_grid())?,
            base_prompt: ids.global.clone(),
            over_prompt: ids.over,
            under_prompt: ids.under,
            reference: None,
        },
        prompt_choices: Vec::new(),
        mask_weights: Vec::new(),
    };
    let ex = experiment::inference_example(&ex, s.cfa_base, &ids.empty);
    let seed = a.seed.unwrap_or(cfg.config.seed);
    let latent = euler_sample(&model, &ex.cond, &experiment::cfa_config(&s), s.steps, seed)?;
    let radiance = decode_latent(&latent, lg);
    let mut meta = ClipMetadata::linear();
    meta.exposure_offset = lin.meta.exposure_offset;
    meta.provenance.insert("sampler".into(), json!({"steps": s.steps, "seed": seed, "cfa": s}));
    meta.provenance.insert("prompt".into(), json!(prompt.serialize()));
    let out = latent_to_clip(&radiance, shape, meta, ldr.fps)?;
    write_hfv(&a.out, &out)?;
    print_json(&json!({"out": a.out, "frames": out.frame_count(), "width": out.width(), "height": out.height()}))
}

fn metrics(cfg: &LoadedConfig, a: &MetricsArgs) -> Result<()> {
    let (x, y) = (read_linear(&a.a)?, read_linear(&a.b)?);
    let (x, y) = match a.space {
        Space::Srgb => (tonemap_clip(&x, ToneOperator::Reinhard)?, tonemap_clip(&y, ToneOperator::Reinhard)?),
        Space::Loggamma => {
            let lg = cfg.config.log_gamma;
            (log_gamma_encode_clip(&x, lg, true)?, log_gamma_encode_clip(&y, lg, true)?)
        }
    };
    let score = clip_metrics(&x, &y, 1.0)?;
    print_json(&score)
}

fn stats(a: &StatsArgs) -> Result<()> {
    let clip = read_linear(&a.input)?;
    let masks = match &a.masks {
        Some(p) => {
            require_file(p)?;
            Some(ExposureMasks::read(p)?)
        }
        None => None,
    };
    print_json(&radiance_stats(&clip, masks.as_ref()))
}

fn inspect(a: &InspectArgs) -> Result<()> {
    let path = manifest_path(&a.manifest);
    require_file(&path)?;
    let m = DatasetManifest::read(&path)?;
    let problems = m.problems(path.parent().unwrap_or(Path::new(".")));
    print_json(&json!({"clips": m.clips.len(), "problems": problems}))?;
    if !problems.is_empty() {
        bail!("manifest has {} problem(s)", problems.len());
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Curate(a) => curate(&cfg, a),
        Command::Degrade(a) => degrade(&cfg, a),
        Command::Mask(a) => mask(&cfg, a),
        Command::Encode(a) => encode(&cfg, a),
        Command::Decode(a) => decode(a),
        Command::Tonemap(a) => tonemap(a),
        Command::ReExpose(a) => re_expose(a),
        Command::Train(a) => train(&cfg, a),
        Command::Sample(a) => sample(&cfg, a),
        Command::Metrics(a) => metrics(&cfg, a),
        Command::Stats(a) => stats(a),
        Command::Inspect(a) => inspect(a),
    }
}

fn report(err: &anyhow::Error, kind: &str, json_errors: bool) {
    if json_errors {
        let causes: Vec<String> = err.chain().skip(1).map(ToString::to_string).collect();
        eprintln!("{}", json!({"level": "error", "kind": kind, "message": err.to_string(), "causes": causes}));
    } else {
        eprintln!("error: {err:#}");
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<UsageError>() => {
            report(&e, "usage", cli.json_errors);
            ExitCode::from(2)
        }
        Err(e) => {
            report(&e, "pipeline", cli.json_errors);
            ExitCode::from(1)
        }
    }
}
