//! F1 scoring, dataset manifests, and score/timing reports.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::raster::{load_image, load_mask_for, ColorImage, FloatMap, GroundTruthMask};
use crate::scalar::Scalar;

/// Threshold step of [`threshold_sweep`].
pub const SWEEP_STEP: f64 = 0.05;

/// Convention line printed at the top of every report.
pub const CONVENTIONS: &str = "# tampered = positive; F1 = 2TP/(2TP+FP+FN); all-negative decision and truth score 1";

/// Pixel counts of a decision against ground truth.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn count(decision: &GroundTruthMask, truth: &GroundTruthMask) -> Result<Self> {
        if decision.dims() != truth.dims() {
            return Err(Error::DimensionMismatch {
                expected: truth.dims(),
                actual: decision.dims(),
            });
        }
        let mut c = Self::default();
        for (&d, &t) in decision.labels().iter().zip(truth.labels()) {
            match (d != 0, t != 0) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        Ok(c)
    }

    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            1.0
        } else {
            2.0 * self.tp as f64 / denom as f64
        }
    }
}

/// F1 of a binary decision with tampered as the positive class.
pub fn f1_score(decision: &GroundTruthMask, truth: &GroundTruthMask) -> Result<f64> {
    Ok(Confusion::count(decision, truth)?.f1())
}

/// `value > threshold` becomes tampered.
pub fn binarize<T: Scalar>(map: &FloatMap<T>, threshold: f64) -> Result<GroundTruthMask> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::invalid(format!("threshold {threshold} outside (0, 1)")));
    }
    let (h, w) = map.dims();
    GroundTruthMask::new(h, w, map.values().iter().map(|v| (v.as_f64() > threshold) as u8).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub image: PathBuf,
    pub mask: PathBuf,
    pub split: Split,
    /// Mask polarity is flipped on load.
    pub invert: bool,
}

impl ManifestEntry {
    /// Image file stem, used to name per-image artifacts.
    pub fn id(&self) -> String {
        self.image
            .file_stem()
            .map_or_else(|| self.image.display().to_string(), |s| s.to_string_lossy().into_owned())
    }

    /// Loads the image and its mask, checking that their dims agree.
    pub fn load(&self) -> Result<(ColorImage, GroundTruthMask)> {
        let image = load_image(&self.image)?;
        let mask = load_mask_for(&self.mask, &image)?;
        Ok((image, if self.invert { mask.inverted() } else { mask }))
    }
}

/// Tab-separated `image  mask  split [invert]` lines; `#` starts a comment.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    /// Parses manifest text; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        let mut offset = 0;
        for line in text.split_inclusive('\n') {
            let at = offset;
            offset += line.len();
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let fields: Vec<&str> = body.split('\t').map(str::trim).collect();
            let err = |message: String| Error::Parse { offset: at as u64, message };
            if !(3..=4).contains(&fields.len()) {
                return Err(err(format!("expected 3 or 4 tab-separated fields, got {}", fields.len())));
            }
            let invert = match fields.get(3) {
                None => false,
                Some(&"invert") => true,
                Some(other) => return Err(err(format!("unknown flag `{other}`"))),
            };
            let split = Split::parse(fields[2]).map_err(|_| err(format!("unknown split `{}`", fields[2])))?;
            entries.push(ManifestEntry {
                image: base.join(fields[0]),
                mask: base.join(fields[1]),
                split,
                invert,
            });
        }
        Ok(Self { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new("")))
    }

    /// Renders entries with paths relative to `base` where possible.
    pub fn to_text(&self, base: &Path) -> String {
        let rel = |p: &Path| p.strip_prefix(base).unwrap_or(p).display().to_string();
        let mut out = String::new();
        for e in &self.entries {
            let _ = write!(out, "{}\t{}\t{}", rel(&e.image), rel(&e.mask), e.split.name());
            out.push_str(if e.invert { "\tinvert\n" } else { "\n" });
        }
        out
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }
}

/// Per-image scores of one variant, in manifest order.
#[derive(Clone, Debug, PartialEq)]
pub struct VariantScores {
    pub name: String,
    pub scores: Vec<f64>,
}

impl VariantScores {
    pub fn average(&self) -> f64 {
        if self.scores.is_empty() {
            0.0
        } else {
            self.scores.iter().sum::<f64>() / self.scores.len() as f64
        }
    }
}

/// Scores every truth entry against its decision; a missing decision is an error.
pub fn evaluate_set(
    name: &str,
    truths: &[(String, GroundTruthMask)],
    decisions: &HashMap<String, GroundTruthMask>,
) -> Result<VariantScores> {
    if let Some((id, _)) = truths.iter().find(|(id, _)| !decisions.contains_key(id)) {
        return Err(Error::MissingDecision(id.clone()));
    }
    let scores = truths
        .par_iter()
        .map(|(id, truth)| f1_score(&decisions[id], truth))
        .collect::<Result<Vec<_>>>()?;
    Ok(VariantScores {
        name: name.to_string(),
        scores,
    })
}

/// Average F1 of `map > t` for `t` = 0.05, 0.10, ..., 0.95.
pub fn threshold_sweep<T: Scalar>(pairs: &[(FloatMap<T>, GroundTruthMask)]) -> Result<Vec<(f64, f64)>> {
    let steps = (1.0 / SWEEP_STEP).round() as usize;
    (1..steps)
        .map(|k| {
            let t = k as f64 * SWEEP_STEP;
            let scores = pairs
                .par_iter()
                .map(|(m, truth)| f1_score(&binarize(m, t)?, truth))
                .collect::<Result<Vec<_>>>()?;
            Ok((t, scores.iter().sum::<f64>() / scores.len().max(1) as f64))
        })
        .collect()
}

/// Sweep entry with the highest average; ties keep the lower threshold.
pub fn best_threshold(sweep: &[(f64, f64)]) -> Option<(f64, f64)> {
    sweep.iter().copied().fold(None, |best, cur| match best {
        Some(b) if b.1 >= cur.1 => Some(b),
        _ => Some(cur),
    })
}

/// Image-by-variant F1 table.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScoreReport {
    pub images: Vec<String>,
    pub variants: Vec<VariantScores>,
}

impl ScoreReport {
    pub fn new(images: Vec<String>) -> Self {
        Self {
            images,
            variants: Vec::new(),
        }
    }

    pub fn push(&mut self, variant: VariantScores) -> Result<()> {
        if variant.scores.len() != self.images.len() {
            return Err(Error::Shape(format!(
                "variant {} has {} scores for {} images",
                variant.name,
                variant.scores.len(),
                self.images.len()
            )));
        }
        self.variants.push(variant);
        Ok(())
    }

    pub fn variant(&self, name: &str) -> Option<&VariantScores> {
        self.variants.iter().find(|v| v.name == name)
    }

    /// Aligned plain-text table with a trailing average row.
    pub fn to_text(&self) -> String {
        let first = self.images.iter().map(String::len).chain(["average".len(), "image".len()]).max().unwrap_or(5);
        let widths: Vec<usize> = self.variants.iter().map(|v| v.name.len().max(6)).collect();
        let mut out = format!("{CONVENTIONS}\n{:<first$}", "image");
        for (v, w) in self.variants.iter().zip(&widths) {
            let _ = write!(out, "  {:>w$}", v.name);
        }
        out.push('\n');
        let row = |out: &mut String, label: &str, vals: Vec<f64>| {
            let _ = write!(out, "{label:<first$}");
            for (v, w) in vals.iter().zip(&widths) {
                let _ = write!(out, "  {v:>w$.4}");
            }
            out.push('\n');
        };
        for (i, id) in self.images.iter().enumerate() {
            row(&mut out, id, self.variants.iter().map(|v| v.scores[i]).collect());
        }
        row(&mut out, "average", self.variants.iter().map(VariantScores::average).collect());
        out
    }

    /// CSV twin of the text table, full precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("image");
        for v in &self.variants {
            let _ = write!(out, ",{}", v.name);
        }
        out.push('\n');
        for (i, id) in self.images.iter().enumerate() {
            out.push_str(id);
            for v in &self.variants {
                let _ = write!(out, ",{}", v.scores[i]);
            }
            out.push('\n');
        }
        out.push_str("average");
        for v in &self.variants {
            let _ = write!(out, ",{}", v.average());
        }
        out.push('\n');
        out
    }
}

/// Wall-clock seconds per stage and image.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TimingReport {
    pub stages: Vec<(String, Vec<f64>)>,
}

impl TimingReport {
    pub fn record(&mut self, stage: &str, seconds: f64) {
        match self.stages.iter_mut().find(|(s, _)| s == stage) {
            Some((_, v)) => v.push(seconds),
            None => self.stages.push((stage.to_string(), vec![seconds])),
        }
    }

    pub fn summary(&self) -> Vec<(String, f64, f64)> {
        self.stages
            .iter()
            .map(|(name, v)| {
                let mut sorted = v.clone();
                sorted.sort_by(f64::total_cmp);
                let n = sorted.len();
                let median = if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };
                (name.clone(), v.iter().sum::<f64>() / n as f64, median)
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{:<12}  {:>10}  {:>10}\n", "stage", "mean_s", "median_s");
        for (name, mean, median) in self.summary() {
            let _ = writeln!(out, "{name:<12}  {mean:>10.4}  {median:>10.4}");
        }
        out
    }
}
