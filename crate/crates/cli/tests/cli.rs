use std::path::Path;
use std::process::{Command, Output};

use hdrforge_core::hdr_io::read_hfv;

fn hdrforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hdrforge"))
        .args(args)
        .env("HDRFORGE_THREADS", "1")
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = hdrforge(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn curate_small(dir: &Path, seed: &str) {
    ok(&[
        "curate", "--procedural", "1", "--out", p(dir), "--frames", "2", "--width", "8", "--height", "8", "--seed", seed,
    ]);
}

#[test]
fn curate_writes_five_clips_and_a_valid_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    curate_small(&data, "3");
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(data.join("manifest.json")).unwrap()).unwrap();
    let clips = manifest["clips"].as_array().unwrap();
    assert_eq!(clips.len(), 5);
    for c in clips {
        let id = c["clip_id"].as_str().unwrap();
        for f in ["hdr.hfv", "masks.hfv", "record.json", "ldr/frame_0000.ppm"] {
            assert!(data.join(id).join(f).exists(), "{id}/{f}");
        }
        assert!(c["caption"].as_str().unwrap().contains("[overexposed:"));
    }
    let report: serde_json::Value = serde_json::from_str(&ok(&["inspect", "--manifest", p(&data)])).unwrap();
    assert_eq!(report["problems"].as_array().unwrap().len(), 0);

    let first = clips[0]["clip_id"].as_str().unwrap();
    std::fs::remove_file(data.join(first).join("masks.hfv")).unwrap();
    let out = hdrforge(&["inspect", "--manifest", p(&data)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn curation_is_deterministic_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    curate_small(&a, "9");
    curate_small(&b, "9");
    curate_small(&c, "10");
    let read = |d: &Path, f: &str| std::fs::read(d.join(f)).unwrap();
    assert_eq!(read(&a, "manifest.json"), read(&b, "manifest.json"));
    let manifest: serde_json::Value = serde_json::from_slice(&read(&a, "manifest.json")).unwrap();
    for clip in manifest["clips"].as_array().unwrap() {
        let id = clip["clip_id"].as_str().unwrap();
        for f in ["hdr.hfv", "masks.hfv", "ldr/frame_0001.ppm"] {
            let rel = format!("{id}/{f}");
            assert_eq!(read(&a, &rel), read(&b, &rel), "{rel}");
        }
    }
    assert_ne!(read(&a, "manifest.json"), read(&c, "manifest.json"));
}

#[test]
fn encode_decode_and_re_expose_roundtrip() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    curate_small(&data, "4");
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(data.join("manifest.json")).unwrap()).unwrap();
    let hdr = data.join(manifest["clips"][2]["hdr"].as_str().unwrap());
    let original = read_hfv(&hdr).unwrap();

    let enc = tmp.path().join("enc.hfv");
    let dec = tmp.path().join("dec.hfv");
    ok(&["encode", "--in", p(&hdr), "--out", p(&enc), "--clamp"]);
    ok(&["decode", "--in", p(&enc), "--out", p(&dec)]);
    let back = read_hfv(&dec).unwrap();
    for (fa, fb) in back.frames.iter().zip(&original.frames) {
        for (x, y) in fa.data().iter().zip(fb.data()) {
            let want = y.clamp(0.0, 64.0);
            assert!((x - want).abs() <= 1e-4 * want.max(1e-3), "{x} vs {want}");
        }
    }

    let mut current = hdr.clone();
    for i in 0..4 {
        let next = tmp.path().join(format!("q{i}.hfv"));
        ok(&["re-expose", "--in", p(&current), "--out", p(&next), "--stops", "0.25"]);
        current = next;
    }
    let once = tmp.path().join("once.hfv");
    ok(&["re-expose", "--in", p(&hdr), "--out", p(&once), "--stops", "1"]);
    let (quarters, whole) = (read_hfv(&current).unwrap(), read_hfv(&once).unwrap());
    assert!((quarters.meta.exposure_offset - whole.meta.exposure_offset).abs() < 1e-12);
    for (fa, fb) in quarters.frames.iter().zip(&whole.frames) {
        for (x, y) in fa.data().iter().zip(fb.data()) {
            assert!((x - y).abs() <= 1e-5 * y.abs().max(1e-6));
        }
    }
    let down = tmp.path().join("down.hfv");
    ok(&["re-expose", "--in", p(&once), "--out", p(&down), "--stops", "-1"]);
    assert_eq!(read_hfv(&down).unwrap().frames, original.frames);
}

#[test]
fn degrade_mask_train_and_sample_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    curate_small(&data, "5");
    let config = tmp.path().join("run.json");
    std::fs::write(
        &config,
        r#"{"curate": {"frames": 2, "width": 8, "height": 8},
            "train": {"batch_size": 2, "model": {"dim": 8, "heads": 2, "blocks": 1, "patch": [1, 4, 4]}},
            "sample": {"steps": 3}}"#,
    )
    .unwrap();
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(data.join("manifest.json")).unwrap()).unwrap();
    let hdr = data.join(manifest["clips"][0]["hdr"].as_str().unwrap());

    let ldr = tmp.path().join("ldr");
    ok(&["degrade", "--in", p(&hdr), "--out", p(&ldr), "--seed", "1", "--delta", "-1"]);
    assert!(ldr.join("params.json").exists());
    let masks = tmp.path().join("masks.hfv");
    let summary: serde_json::Value = serde_json::from_str(&ok(&["mask", "--in", p(&ldr), "--out", p(&masks)])).unwrap();
    assert_eq!(summary["frames"], 2);

    let ckpt = tmp.path().join("model.ckpt");
    let cfg = p(&config);
    ok(&["--config", cfg, "train", "--data", p(&data), "--out", p(&ckpt), "--steps", "3"]);
    assert!(ckpt.exists() && tmp.path().join("model.train.json").exists());

    let out = tmp.path().join("recon.hfv");
    ok(&[
        "--config", cfg, "sample", "--ckpt", p(&ckpt), "--ldr", p(&ldr), "--masks", p(&masks), "--prompt",
        "a field [overexposed: sun]; [underexposed: trees]", "--out", p(&out),
    ]);
    let recon = read_hfv(&out).unwrap();
    assert_eq!(recon.frame_count(), 2);
    assert!(recon.frames.iter().flat_map(|f| f.data()).all(|v| v.is_finite() && *v >= 0.0));

    let score: serde_json::Value =
        serde_json::from_str(&ok(&["metrics", "--a", p(&hdr), "--b", p(&hdr)])).unwrap();
    assert!(score.to_string().contains("psnr"));
}

#[test]
fn usage_errors_exit_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.hfv");
    let out = hdrforge(&["decode", "--in", p(&missing), "--out", p(&tmp.path().join("x.hfv"))]);
    assert_eq!(out.status.code(), Some(2));

    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, r#"{"train": {"learning_rat": 1.0}}"#).unwrap();
    let out = hdrforge(&["--config", p(&bad), "curate", "--procedural", "1", "--out", p(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));

    assert_eq!(hdrforge(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(hdrforge(&["encode", "--in", "x"]).status.code(), Some(2));

    let out = hdrforge(&["--json-errors", "decode", "--in", p(&missing), "--out", "y.hfv"]);
    let line = String::from_utf8(out.stderr).unwrap();
    let v: serde_json::Value = serde_json::from_str(line.lines().last().unwrap()).unwrap();
    assert_eq!(v["level"], "error");
}

#[test]
fn corrupt_inputs_fail_with_code_one() {
    let tmp = tempfile::tempdir().unwrap();
    let junk = tmp.path().join("junk.hfv");
    std::fs::write(&junk, b"HFV1 definitely not a clip").unwrap();
    let out = hdrforge(&["decode", "--in", p(&junk), "--out", p(&tmp.path().join("o.hfv"))]);
    assert_eq!(out.status.code(), Some(1));
}
