use std::collections::HashMap;
use std::path::Path;

use forge_core::eval::{
    best_threshold, binarize, evaluate_set, f1_score, threshold_sweep, Confusion, Manifest, ScoreReport, Split,
    TimingReport, VariantScores,
};
use forge_core::raster::{save_binary_png, save_image_png, ColorImage, FloatMap, GroundTruthMask};
use forge_core::Error;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mask(h: usize, w: usize, labels: Vec<u8>) -> GroundTruthMask {
    GroundTruthMask::new(h, w, labels).unwrap()
}

#[test]
fn f1_examples() {
    let t = GroundTruthMask::from_fn(10, 10, |r, c| r < 5 && c < 6);
    assert_eq!(f1_score(&t, &t).unwrap(), 1.0);
    assert_eq!(f1_score(&t.inverted(), &t).unwrap(), 0.0);

    // TP=50, FP=25, FN=25
    let truth = mask(1, 100, (0..100).map(|i| (i < 75) as u8).collect());
    let dec = mask(1, 100, (0..100).map(|i| (i < 50 || i >= 75) as u8).collect());
    let c = Confusion::count(&dec, &truth).unwrap();
    assert_eq!((c.tp, c.fp, c.fn_), (50, 25, 25));
    assert!((f1_score(&dec, &truth).unwrap() - 100.0 / 150.0).abs() < 1e-15);

    let empty = mask(3, 3, vec![0; 9]);
    assert_eq!(f1_score(&empty, &empty).unwrap(), 1.0);
    assert_eq!(f1_score(&empty, &mask(3, 3, vec![1; 9])).unwrap(), 0.0);
    assert_eq!(f1_score(&mask(3, 3, vec![1; 9]), &empty).unwrap(), 0.0);
    assert!(matches!(f1_score(&empty, &mask(3, 4, vec![0; 12])), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn binarize_is_strict() {
    let half = FloatMap::constant(4, 4, 0.5f64).unwrap();
    assert!(binarize(&half, 0.5).unwrap().labels().iter().all(|&v| v == 0));
    let high = FloatMap::constant(4, 4, 0.7f32).unwrap();
    assert!(binarize(&high, 0.5).unwrap().labels().iter().all(|&v| v == 1));
    assert!(binarize(&half, 0.0).is_err() && binarize(&half, 1.0).is_err());
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let m = FloatMap::from_fn(13, 7, |_, _| rng.random_range(0..=4) as f64 / 4.0).unwrap();
    for t in [0.25, 0.5, 0.6] {
        let b = binarize(&m, t).unwrap();
        for (v, &d) in m.values().iter().zip(b.labels()) {
            assert_eq!(d == 1, *v > t);
        }
    }
}

#[test]
fn evaluate_set_averages_in_manifest_order() {
    let truth = mask(1, 10, vec![1, 1, 1, 1, 1, 0, 0, 0, 0, 0]);
    // F1 0.4: TP 1, FP 0, FN 3 on four positives -> 2/5
    let a = mask(1, 10, vec![1, 1, 1, 1, 0, 0, 0, 0, 0, 0]);
    let truths = vec![
        ("b".to_string(), mask(1, 10, vec![1, 1, 1, 1, 0, 0, 0, 0, 0, 0])),
        ("a".to_string(), truth.clone()),
    ];
    let decisions = HashMap::from([
        ("a".to_string(), a),
        ("b".to_string(), mask(1, 10, vec![1, 0, 0, 0, 0, 0, 0, 0, 0, 0])),
    ]);
    let v = evaluate_set("x", &truths, &decisions).unwrap();
    assert!((v.scores[0] - 0.4).abs() < 1e-12);
    assert!((v.scores[1] - 8.0 / 9.0).abs() < 1e-12);
    assert!((v.average() - (0.4 + 8.0 / 9.0) / 2.0).abs() < 1e-12);

    let single = evaluate_set("x", &truths[1..], &decisions).unwrap();
    assert_eq!(single.average(), single.scores[0]);

    let two = VariantScores {
        name: "y".into(),
        scores: vec![0.4, 0.6],
    };
    assert!((two.average() - 0.5).abs() < 1e-15);

    let mut partial = decisions.clone();
    partial.remove("b");
    match evaluate_set("x", &truths, &partial) {
        Err(Error::MissingDecision(id)) => assert_eq!(id, "b"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn report_text_and_csv() {
    let mut r = ScoreReport::new(vec!["img1".into(), "img2".into()]);
    r.push(VariantScores {
        name: "s32".into(),
        scores: vec![0.25, 0.75],
    })
    .unwrap();
    r.push(VariantScores {
        name: "maxa".into(),
        scores: vec![1.0, 0.5],
    })
    .unwrap();
    assert!(r.push(VariantScores { name: "bad".into(), scores: vec![0.1] }).is_err());
    let csv = r.to_csv();
    assert_eq!(csv, "image,s32,maxa\nimg1,0.25,1\nimg2,0.75,0.5\naverage,0.5,0.75\n");
    let text = r.to_text();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with('#'));
    assert_eq!(lines.len(), 5);
    assert!(lines[2].starts_with("img1") && lines[2].ends_with("1.0000"));
    assert!(lines[4].starts_with("average"));
    let widths: Vec<usize> = lines[1..].iter().map(|l| l.len()).collect();
    assert!(widths.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn timing_summary() {
    let mut t = TimingReport::default();
    for s in [3.0, 1.0, 2.0, 10.0] {
        t.record("infer", s);
    }
    t.record("fuse", 0.5);
    let s = t.summary();
    assert_eq!(s[0], ("infer".to_string(), 4.0, 2.5));
    assert_eq!(s[1], ("fuse".to_string(), 0.5, 0.5));
    assert_eq!(t.to_text().lines().count(), 3);
}

#[test]
fn sweep_finds_the_separating_threshold() {
    let truth = GroundTruthMask::from_fn(8, 8, |r, _| r < 4);
    let map = FloatMap::from_fn(8, 8, |r, _| if r < 4 { 0.62 } else { 0.33 }).unwrap();
    let sweep = threshold_sweep(&[(map, truth)]).unwrap();
    let (t, f) = best_threshold(&sweep).unwrap();
    assert_eq!(f, 1.0);
    assert!((t - 0.35).abs() < 1e-9);
}

#[test]
fn manifest_parsing_and_loading() {
    let dir = tempfile::tempdir().unwrap();
    let text = "# corpus\nimg/a.png\tmask/a.png\ttrain\n\nimg/b.png\tmask/b.png\ttest\tinvert  # flipped\n";
    let m = Manifest::parse(text, dir.path()).unwrap();
    assert_eq!(m.entries.len(), 2);
    assert_eq!(m.entries[1].split, Split::Test);
    assert!(m.entries[1].invert && !m.entries[0].invert);
    assert_eq!(m.entries[0].id(), "a");
    assert_eq!(m.split(Split::Test).count(), 1);
    assert_eq!(Manifest::parse(&m.to_text(dir.path()), dir.path()).unwrap(), m);

    for bad in ["a.png\tb.png\n", "a.png\tb.png\tval\n", "a\tb\ttest\tflip\n"] {
        assert!(matches!(Manifest::parse(bad, Path::new("")), Err(Error::Parse { .. })), "{bad}");
    }
    match Manifest::parse("a\tb\ttest\n# x\nbroken\n", Path::new("")) {
        Err(Error::Parse { offset, .. }) => assert_eq!(offset, 13),
        other => panic!("{other:?}"),
    }

    std::fs::create_dir_all(dir.path().join("img")).unwrap();
    std::fs::create_dir_all(dir.path().join("mask")).unwrap();
    let image = ColorImage::from_fn(6, 5, |r, c| [r as u8, c as u8, 0]);
    let truth = GroundTruthMask::from_fn(6, 5, |r, _| r < 2);
    for id in ["a", "b"] {
        save_image_png(&image, dir.path().join(format!("img/{id}.png"))).unwrap();
        save_binary_png(6, 5, truth.labels(), dir.path().join(format!("mask/{id}.png"))).unwrap();
    }
    std::fs::write(dir.path().join("set.tsv"), text).unwrap();
    let m = Manifest::load(dir.path().join("set.tsv")).unwrap();
    let (img, t) = m.entries[0].load().unwrap();
    assert_eq!((img, t.clone()), (image, truth.clone()));
    assert_eq!(m.entries[1].load().unwrap().1, truth.inverted());

    save_binary_png(6, 6, &[0; 36], dir.path().join("mask/a.png")).unwrap();
    assert!(matches!(m.entries[0].load(), Err(Error::DimensionMismatch { .. })));
    std::fs::remove_file(dir.path().join("img/b.png")).unwrap();
    assert!(m.entries[1].load().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn f1_properties(seed in any::<u64>(), n in 1usize..200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let d: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let f = f1_score(&mask(1, n, d.clone()), &mask(1, n, t.clone())).unwrap();
        prop_assert!((0.0..=1.0).contains(&f));
        if t.iter().any(|&v| v == 1) {
            prop_assert_eq!(f == 1.0, d == t);
        }
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let pd: Vec<u8> = perm.iter().map(|&i| d[i]).collect();
        let pt: Vec<u8> = perm.iter().map(|&i| t[i]).collect();
        prop_assert_eq!(f1_score(&mask(1, n, pd), &mask(1, n, pt)).unwrap(), f);
    }

    #[test]
    fn f1_grows_with_true_positives(tp in 0usize..100, fp in 0usize..100, fn_ in 0usize..100) {
        let f = |tp: usize| Confusion { tp, fp, fn_, tn: 0 }.f1();
        prop_assume!(fp + fn_ > 0);
        prop_assert!(f(tp + 1) > f(tp));
    }
}
