mod common;

use std::fs;

use common::{artifacts, differences, forge, forge_env, stderr, write_config, TINY};
use forge_cli::config::PipelineConfig;
use forge_cli::synth::{synth_image, SynthSpec};
use forge_cli::Run;
use forge_core::raster::{load_image, save_binary_png, save_image_png, save_map, ColorImage, FloatMap, GroundTruthMask};
use forge_core::sampler::tamper_ratio;
use forge_core::Error;

fn tiny_run(dir: &std::path::Path, run_id: &str) -> Run {
    let path = write_config(dir, run_id, TINY);
    Run::open(PipelineConfig::from_file(path).unwrap()).unwrap()
}

#[test]
fn infer_writes_one_map_per_scale() {
    let tmp = tempfile::tempdir().unwrap();
    let body = TINY.replace("scales = 16,32", "scales = 32,64").replace("synth_size = 96", "synth_size = 128");
    let run = Run::open(PipelineConfig::from_file(write_config(tmp.path(), "infer", &body)).unwrap()).unwrap();
    run.synth().unwrap();
    run.sample().unwrap();
    run.train().unwrap();
    run.infer().unwrap();
    let ids: Vec<String> = run.manifest().unwrap().entries.iter().skip(6).map(|e| e.id()).collect();
    assert_eq!(ids.len(), 3);
    let names: Vec<String> = fs::read_dir(run.path("maps"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names.len(), 6);
    for id in &ids {
        let mine: Vec<&String> = names.iter().filter(|n| n.starts_with(&format!("{id}."))).collect();
        assert_eq!(mine.len(), 2, "{id}: {mine:?}");
    }
}

#[test]
fn strategies_log_their_energies_independently() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write_config(tmp.path(), "fuse", TINY);
    let cfg = path.to_str().unwrap();
    for stage in ["synth", "sample", "train", "infer"] {
        assert!(forge(&[stage, "--config", cfg]).status.success(), "{stage}");
    }
    let run_dir = tmp.path().join("runs/fuse");
    for strategy in ["maxa", "mean"] {
        let out = forge(&["fuse", "--config", cfg, "--strategy", strategy]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    for strategy in ["maxa", "mean"] {
        let text = fs::read_to_string(run_dir.join("decisions").join(strategy).join("energies.tsv")).unwrap();
        let rows: Vec<&str> = text.lines().skip(1).collect();
        assert_eq!(rows.len(), 3);
        for row in rows {
            let energy: f64 = row.split('\t').nth(1).unwrap().parse().unwrap();
            assert!(energy.is_finite() && energy >= 0.0);
        }
    }
}

#[test]
fn eval_without_fuse_names_first_missing_decision() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tiny_run(tmp.path(), "nofuse");
    run.synth().unwrap();
    run.sample().unwrap();
    run.train().unwrap();
    run.infer().unwrap();
    let first = run.manifest().unwrap().entries[6].id();
    match run.eval() {
        Err(Error::MissingDecision(path)) => {
            assert!(path.ends_with(&format!("decisions/maxa/{first}.png")), "{path}")
        }
        other => panic!("expected a missing decision, got {other:?}"),
    }
    let out = forge(&["eval", "--config", tmp.path().join("nofuse.cfg").to_str().unwrap()]);
    assert!(!out.status.success());
    let err = stderr(&out);
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.contains(&format!("{first}.png")), "{err}");
}

#[test]
fn render_constant_maps_and_empty_overlay() {
    let tmp = tempfile::tempdir().unwrap();
    for (value, expect) in [(0.0f32, 0u8), (1.0, 255)] {
        let map_path = tmp.path().join(format!("c{value}.mpf"));
        let png = tmp.path().join(format!("c{value}.png"));
        save_map(&FloatMap::constant(5, 7, value).unwrap(), &map_path).unwrap();
        let out = forge(&["render", "--input", map_path.to_str().unwrap(), "--output", png.to_str().unwrap()]);
        assert!(out.status.success(), "{}", stderr(&out));
        let img = load_image(&png).unwrap();
        assert_eq!(img.dims(), (5, 7));
        assert!(img.samples().iter().all(|&v| v == expect));
    }
    let source = ColorImage::from_fn(6, 9, |r, c| [(r * 40) as u8, (c * 25) as u8, 77]);
    let src = tmp.path().join("src.png");
    let dec = tmp.path().join("dec.png");
    let out_png = tmp.path().join("over.png");
    save_image_png(&source, &src).unwrap();
    save_binary_png(6, 9, &[0; 54], &dec).unwrap();
    let out = forge(&[
        "render",
        "--input",
        dec.to_str().unwrap(),
        "--image",
        src.to_str().unwrap(),
        "--output",
        out_png.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(load_image(&out_png).unwrap(), source);
}

#[test]
fn render_missing_input_fails_with_one_line() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.mpf");
    let out = forge(&["render", "--input", missing.to_str().unwrap(), "--output", "x.png"]);
    assert!(!out.status.success());
    let err = stderr(&out);
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.contains("nope.mpf"), "{err}");
}

#[test]
fn synth_corpus_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    for id in ["a", "b"] {
        let path = write_config(tmp.path(), id, TINY);
        let out = forge(&["synth", "--config", path.to_str().unwrap(), "--seed", "5"]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let a = artifacts(&tmp.path().join("runs/a/data"));
    let b = artifacts(&tmp.path().join("runs/b/data"));
    assert_eq!(a.len(), 9 * 2 + 1);
    assert!(differences(&a, &b).is_empty());
}

#[test]
fn synth_masks_respect_area_bounds() {
    let spec = SynthSpec {
        size: 128,
        min_area: 0.05,
        max_area: 0.3,
        noise: 1.0,
        plant_noise: 8.0,
        detail: 0.0,
    };
    for seed in 0..40 {
        let (_, mask) = synth_image(&spec, seed).unwrap();
        let f = mask.tampered_count() as f64 / (128.0 * 128.0);
        assert!((0.05..=0.3).contains(&f), "seed {seed}: {f}");
    }
}

#[test]
fn centered_plant_window_ratio() {
    let mask = GroundTruthMask::from_fn(96, 96, |r, c| (24..72).contains(&r) && (24..72).contains(&c));
    let ratio = tamper_ratio(&mask, (16, 16), 64).unwrap();
    assert_eq!(ratio, 0.5625);
    assert!((0.1..=0.9).contains(&ratio));
}

#[test]
fn config_env_fallback_and_flag_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write_config(tmp.path(), "envrun", TINY);
    let out = forge_env(&["synth", "--synth-test", "2"], &[("FORGE_CONFIG", &path)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let run_dir = tmp.path().join("runs/envrun");
    let recorded = PipelineConfig::from_file(run_dir.join("config.txt")).unwrap();
    assert_eq!(recorded.synth_test, 2);
    assert_eq!(recorded.scales, vec![16, 32]);
    assert!(run_dir.join("MANIFEST.txt").exists());

    let bad = tmp.path().join("bad.cfg");
    fs::write(&bad, "seed = 1\nnot a pair\n").unwrap();
    let out = forge(&["synth", "--config", bad.to_str().unwrap()]);
    assert!(!out.status.success());
    assert_eq!(stderr(&out).trim_end().lines().count(), 1);

    let out = forge(&["synth", "--config", path.to_str().unwrap(), "--threads", "0"]);
    assert!(!out.status.success());
    let out = forge(&["synth", "--config", path.to_str().unwrap(), "--bogus-key", "1"]);
    assert!(!out.status.success());
}

#[test]
fn stage_reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write_config(tmp.path(), "again", TINY);
    let cfg = path.to_str().unwrap();
    assert!(forge(&["run", "--config", cfg]).status.success());
    let run_dir = tmp.path().join("runs/again");
    let first = artifacts(&run_dir);
    for stage in ["fuse", "eval"] {
        assert!(forge(&[stage, "--config", cfg]).status.success());
        assert!(differences(&first, &artifacts(&run_dir)).is_empty(), "{stage}");
    }
    let manifest = fs::read_to_string(run_dir.join("MANIFEST.txt")).unwrap();
    assert!(manifest.lines().all(|l| !l.contains("logs/") && !l.ends_with("MANIFEST.txt")));
    assert!(manifest.lines().any(|l| l.ends_with("reports/report.txt")));
    assert!(run_dir.join("logs/timing.txt").exists());
}
