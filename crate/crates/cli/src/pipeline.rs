//! Pipeline stages over a run directory.
//!
//! Layout under `runs/<run-id>/`:
//! `config.txt`, `data/` (synthetic corpus), `sample/s<scale>.tsv`,
//! `models/s<scale>.fck`, `train/s<scale>.log`, `maps/<id>.s<scale>.mpf`,
//! `partitions/<id>.spx`, `decisions/<method>/<id>.{png,mpf}` with
//! `energies.tsv`, `reports/`, `logs/` (timings, not checksummed) and
//! `MANIFEST.txt`.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use forge_core::eval::{
    best_threshold, binarize, evaluate_set, threshold_sweep, Manifest, ManifestEntry, ScoreReport, Split,
    TimingReport,
};
use forge_core::fusion::{fuse_on_partition, fuse_resize, Decision};
use forge_core::mapgen::{map_file_name, scale_map};
use forge_core::net::train;
use forge_core::raster::{load_map, load_mask, save_binary_png, save_image_png, save_map, ColorImage, FloatMap, GroundTruthMask};
use forge_core::sampler::PatchDataset;
use forge_core::slic::{slic_segment, SuperpixelPartition};
use forge_core::{Error, ModelCheckpoint32, Result};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::config::{stage_seed, FuseMethod, PipelineConfig};
use crate::synth::{synth_image, SynthSpec};

pub const RUN_MANIFEST: &str = "MANIFEST.txt";
const LOG_DIR: &str = "logs";

pub struct Run {
    pub cfg: PipelineConfig,
    pub dir: PathBuf,
    /// Progress lines on stderr.
    pub verbose: bool,
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn mkdir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Creates the parent directory and passes the path through.
fn ready(path: PathBuf) -> Result<PathBuf> {
    if let Some(parent) = path.parent() {
        mkdir(parent)?;
    }
    Ok(path)
}

impl Run {
    /// Validates the config, creates the run directory and records the config.
    pub fn open(cfg: PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        let dir = cfg.run_dir();
        mkdir(&dir)?;
        write(&dir.join("config.txt"), cfg.to_text())?;
        Ok(Self { cfg, dir, verbose: false })
    }

    pub fn path(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.dir.join(rel)
    }

    fn note(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn record_time(&self, stage: &str, id: &str, seconds: f64) -> Result<()> {
        let path = self.path(LOG_DIR).join("timing.tsv");
        mkdir(&self.path(LOG_DIR))?;
        let mut f = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        writeln!(f, "{stage}\t{id}\t{seconds}").map_err(|e| Error::io(&path, e))
    }

    pub fn manifest(&self) -> Result<Manifest> {
        let m = Manifest::load(self.cfg.manifest_path())?;
        let mut seen = HashSet::new();
        for e in &m.entries {
            if !seen.insert(e.id()) {
                return Err(Error::invalid(format!("duplicate image id `{}` in manifest", e.id())));
            }
        }
        Ok(m)
    }

    fn entries(&self, split: Split) -> Result<Vec<ManifestEntry>> {
        let list: Vec<ManifestEntry> = self.manifest()?.split(split).cloned().collect();
        if list.is_empty() {
            return Err(Error::invalid(format!("manifest has no {} entries", split.name())));
        }
        Ok(list)
    }

    pub fn synth_spec(&self) -> SynthSpec {
        SynthSpec {
            size: self.cfg.synth_size,
            min_area: self.cfg.synth_min_area,
            max_area: self.cfg.synth_max_area,
            noise: self.cfg.synth_noise,
            plant_noise: self.cfg.synth_plant_noise,
            detail: self.cfg.synth_detail,
        }
    }

    /// Writes the synthetic corpus and its manifest under `data/`.
    pub fn synth(&self) -> Result<()> {
        let data = self.path("data");
        let spec = self.synth_spec();
        let n = self.cfg.synth_train + self.cfg.synth_test;
        let lines = (0..n)
            .into_par_iter()
            .map(|i| {
                let id = format!("syn{i:04}");
                let (image, mask) = synth_image(&spec, stage_seed(self.cfg.seed, &format!("synth/{id}")))?;
                save_image_png(&image, ready(data.join(format!("images/{id}.png")))?)?;
                let mask_path = ready(data.join(format!("masks/{id}.png")))?;
                save_binary_png(mask.height(), mask.width(), mask.labels(), mask_path)?;
                let split = if i < self.cfg.synth_train { Split::Train } else { Split::Test };
                Ok(format!("images/{id}.png\tmasks/{id}.png\t{}\n", split.name()))
            })
            .collect::<Result<Vec<String>>>()?;
        let mut text = String::from("# synthetic corpus: image\tmask\tsplit\n");
        text.extend(lines);
        write(&data.join("manifest.tsv"), text)?;
        self.note(format!("synth: {n} images in {}", data.display()));
        Ok(())
    }

    fn load_corpus(entries: &[ManifestEntry]) -> Result<Vec<(String, ColorImage, GroundTruthMask)>> {
        entries
            .par_iter()
            .map(|e| {
                let (img, mask) = e.load()?;
                Ok((e.id(), img, mask))
            })
            .collect()
    }

    /// Training patches per scale.
    pub fn sample(&self) -> Result<()> {
        let corpus = Self::load_corpus(&self.entries(Split::Train)?)?;
        for &s in &self.cfg.scales {
            let t = Instant::now();
            let ds = PatchDataset::build(&self.cfg.sample_spec(s), &corpus)?;
            write(&self.path(format!("sample/s{s}.tsv")), ds.to_manifest())?;
            self.record_time(&format!("sample/s{s}"), "-", t.elapsed().as_secs_f64())?;
            self.note(format!("sample: scale {s}, {} patches", ds.len()));
        }
        Ok(())
    }

    /// One detector per scale.
    pub fn train(&self) -> Result<()> {
        let train_entries = self.entries(Split::Train)?;
        let by_id: HashMap<String, &ManifestEntry> = train_entries.iter().map(|e| (e.id(), e)).collect();
        for &s in &self.cfg.scales {
            let path = self.path(format!("sample/s{s}.tsv"));
            let ds = PatchDataset::from_manifest(&read_text(&path)?)?;
            let images = ds
                .image_ids
                .par_iter()
                .map(|id| {
                    let e = by_id
                        .get(id)
                        .ok_or_else(|| Error::invalid(format!("{}: image `{id}` not in manifest", path.display())))?;
                    e.load().map(|(img, _)| img)
                })
                .collect::<Result<Vec<_>>>()?;
            let t = Instant::now();
            let (ckpt, log) = train::<f32>(&self.cfg.network_spec(s), &ds, &images, &self.cfg.train_config(s))?;
            self.record_time(&format!("train/s{s}"), "-", t.elapsed().as_secs_f64())?;
            ckpt.save(ready(self.path(format!("models/s{s}.fck")))?)?;
            let text: String = log.iter().map(|l| format!("{l}\n")).collect();
            write(&self.path(format!("train/s{s}.log")), &text)?;
            if let Some(last) = log.last() {
                self.note(format!("train: scale {s}: {last}"));
            }
        }
        Ok(())
    }

    fn load_model(&self, scale: usize) -> Result<ModelCheckpoint32> {
        let ckpt = ModelCheckpoint32::load(self.path(format!("models/s{scale}.fck")))?;
        let want = self.cfg.network_spec(scale);
        if ckpt.network.spec != want {
            return Err(Error::invalid(format!(
                "models/s{scale}.fck was trained as `{}` but the config asks for `{}`",
                ckpt.network.spec.descriptor(),
                want.descriptor()
            )));
        }
        Ok(ckpt)
    }

    fn map_path(&self, id: &str, scale: usize) -> PathBuf {
        self.path("maps").join(map_file_name(id, scale))
    }

    /// Per-scale possibility maps of every test image.
    pub fn infer(&self) -> Result<()> {
        let entries = self.entries(Split::Test)?;
        let models = self
            .cfg
            .scales
            .iter()
            .map(|&s| self.load_model(s))
            .collect::<Result<Vec<_>>>()?;
        for e in &entries {
            let (image, _) = e.load()?;
            let id = e.id();
            for m in &models {
                let t = Instant::now();
                let map = scale_map(&image, m, self.cfg.stride)?;
                self.record_time(&format!("infer/s{}", m.scale()), &id, t.elapsed().as_secs_f64())?;
                save_map(&map.cast::<f32>(), ready(self.map_path(&id, m.scale()))?)?;
            }
        }
        self.note(format!("infer: {} images x {} scales", entries.len(), models.len()));
        Ok(())
    }

    fn load_maps(&self, id: &str) -> Result<Vec<FloatMap<f32>>> {
        self.cfg.scales.iter().map(|&s| load_map(self.map_path(id, s))).collect()
    }

    fn decision_path(&self, method: FuseMethod, id: &str, ext: &str) -> PathBuf {
        self.path("decisions").join(method.name()).join(format!("{id}.{ext}"))
    }

    /// Fused decisions for every configured method.
    pub fn fuse(&self) -> Result<()> {
        let entries = self.entries(Split::Test)?;
        let params = self.cfg.fusion_params();
        let results = entries
            .par_iter()
            .map(|e| -> Result<Vec<Decision>> {
                let id = e.id();
                let maps = self.load_maps(&id)?;
                let t = Instant::now();
                let mut partition: Option<SuperpixelPartition> = None;
                let mut out = Vec::new();
                for &method in &self.cfg.strategy {
                    let d = match method {
                        FuseMethod::Superpixel(strategy) => {
                            if partition.is_none() {
                                let (image, _) = e.load()?;
                                let p = slic_segment(&image, &self.cfg.slic_params())?;
                                p.save(ready(self.path("partitions").join(format!("{id}.spx")))?)?;
                                partition = Some(p);
                            }
                            fuse_on_partition(&maps, partition.as_ref().expect("set above"), strategy, params)?
                        }
                        FuseMethod::Resize => fuse_resize(&maps, params)?,
                    };
                    let m = &d.mask;
                    save_binary_png(m.height(), m.width(), m.labels(), ready(self.decision_path(method, &id, "png"))?)?;
                    let as_map = FloatMap::new(m.height(), m.width(), m.labels().iter().map(|&v| v as f32).collect())?;
                    save_map(&as_map, self.decision_path(method, &id, "mpf"))?;
                    out.push(d);
                }
                self.record_time("fuse", &id, t.elapsed().as_secs_f64())?;
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()?;
        for (k, &method) in self.cfg.strategy.iter().enumerate() {
            let mut text = String::from("image\tenergy\ttampered_units\tunits\n");
            for (e, ds) in entries.iter().zip(&results) {
                let d = &ds[k];
                let on = d.units.iter().filter(|&&t| t == 1).count();
                let _ = writeln!(text, "{}\t{}\t{on}\t{}", e.id(), d.energy, d.units.len());
            }
            write(&self.path("decisions").join(method.name()).join("energies.tsv"), &text)?;
            let total: f64 = results.iter().map(|ds| ds[k].energy).sum();
            self.note(format!("fuse: {} total energy {total:.6}", method.name()));
        }
        Ok(())
    }

    /// Scores single-scale maps and fused decisions; writes the reports.
    pub fn eval(&self) -> Result<ScoreReport> {
        let entries = self.entries(Split::Test)?;
        let truths = entries
            .par_iter()
            .map(|e| Ok((e.id(), e.load()?.1)))
            .collect::<Result<Vec<(String, GroundTruthMask)>>>()?;
        let mut report = ScoreReport::new(truths.iter().map(|(id, _)| id.clone()).collect());
        let mut sweep_text = String::from("variant\tthreshold\taverage_f1\n");
        for &s in &self.cfg.scales {
            let maps = truths
                .iter()
                .map(|(id, _)| load_map::<f32>(self.map_path(id, s)))
                .collect::<Result<Vec<_>>>()?;
            let decisions = truths
                .iter()
                .zip(&maps)
                .map(|((id, _), m)| Ok((id.clone(), binarize(m, self.cfg.threshold)?)))
                .collect::<Result<HashMap<_, _>>>()?;
            report.push(evaluate_set(&format!("s{s}"), &truths, &decisions)?)?;
            let pairs: Vec<(FloatMap<f32>, GroundTruthMask)> =
                maps.into_iter().zip(truths.iter().map(|(_, t)| t.clone())).collect();
            let sweep = threshold_sweep(&pairs)?;
            for (t, f) in &sweep {
                let _ = writeln!(sweep_text, "s{s}\t{t:.2}\t{f}");
            }
            if let Some((t, f)) = best_threshold(&sweep) {
                let _ = writeln!(sweep_text, "s{s}\tbest {t:.2}\t{f}");
            }
        }
        for &method in &self.cfg.strategy {
            let mut decisions = HashMap::new();
            for (id, _) in &truths {
                let path = self.decision_path(method, id, "png");
                if !path.exists() {
                    return Err(Error::MissingDecision(path.display().to_string()));
                }
                decisions.insert(id.clone(), load_mask(&path)?);
            }
            report.push(evaluate_set(method.name(), &truths, &decisions)?)?;
        }
        write(&self.path("reports/report.txt"), report.to_text())?;
        write(&self.path("reports/report.csv"), report.to_csv())?;
        write(&self.path("reports/sweep.tsv"), sweep_text)?;
        self.write_timing()?;
        for v in &report.variants {
            self.note(format!("eval: {} average F1 {:.4}", v.name, v.average()));
        }
        Ok(report)
    }

    fn write_timing(&self) -> Result<()> {
        let path = self.path(LOG_DIR).join("timing.tsv");
        let Ok(text) = fs::read_to_string(&path) else {
            return Ok(());
        };
        let mut t = TimingReport::default();
        for line in text.lines() {
            let f: Vec<&str> = line.split('\t').collect();
            if let [stage, _, secs] = f[..] {
                if let Ok(v) = secs.parse() {
                    t.record(stage, v);
                }
            }
        }
        write(&self.path(LOG_DIR).join("timing.txt"), t.to_text())
    }

    /// Every stage in order; synthesizes a corpus unless a manifest is configured.
    pub fn run_all(&self) -> Result<ScoreReport> {
        if self.cfg.manifest.is_none() {
            self.synth()?;
        }
        self.sample()?;
        self.train()?;
        self.infer()?;
        self.fuse()?;
        self.eval()
    }

    /// Rewrites `MANIFEST.txt` with the SHA-256 of every artifact outside `logs/`.
    pub fn write_manifest(&self) -> Result<()> {
        let mut files = Vec::new();
        collect_files(&self.dir, &self.dir, &mut files)?;
        files.sort();
        let mut text = String::new();
        for rel in files {
            let bytes = fs::read(self.dir.join(&rel)).map_err(|e| Error::io(self.dir.join(&rel), e))?;
            let digest = Sha256::digest(&bytes);
            let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
            let _ = writeln!(text, "{hex}  {rel}");
        }
        write(&self.path(RUN_MANIFEST), text)
    }
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        let rel = path.strip_prefix(root).expect("walk stays under root");
        let rel_text = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
        if rel_text == RUN_MANIFEST || rel_text == LOG_DIR {
            continue;
        }
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            out.push(rel_text);
        }
    }
    Ok(())
}
