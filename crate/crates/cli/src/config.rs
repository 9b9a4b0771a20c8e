//! Pipeline configuration: a `key = value` text file plus `--key value`
//! overrides with the same names.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use forge_core::filters::BankVariant;
use forge_core::fusion::{FusionParams, Strategy};
use forge_core::net::{Activation, NetworkSpec, TrainConfig, DEFAULT_SCALES};
use forge_core::sampler::SampleSpec;
use forge_core::slic::SlicParams;
use forge_core::{Error, Result};
use sha2::{Digest, Sha256};

/// Environment variable consulted when `--config` is absent.
pub const CONFIG_ENV: &str = "FORGE_CONFIG";

/// Fusion method of one decision variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FuseMethod {
    Superpixel(Strategy),
    Resize,
}

impl FuseMethod {
    pub fn name(self) -> &'static str {
        match self {
            FuseMethod::Superpixel(s) => s.name(),
            FuseMethod::Resize => "resize",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        if s == "resize" {
            Ok(FuseMethod::Resize)
        } else {
            Strategy::parse(s).map(FuseMethod::Superpixel)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub runs_dir: PathBuf,
    pub run_id: String,
    /// Dataset manifest; empty means the run's synthetic corpus.
    pub manifest: Option<PathBuf>,
    pub seed: u64,

    pub scales: Vec<usize>,
    pub stride: usize,

    pub sample_stride: usize,
    pub ratio_lo: f64,
    pub ratio_hi: f64,
    pub cap: usize,

    pub variant: BankVariant,
    pub channels: Vec<usize>,
    pub activations: Vec<Activation>,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub lr_gamma: f64,
    pub lr_step: u64,
    pub batch_size: usize,
    pub max_iterations: u64,
    pub log_every: u64,
    pub bn_batches: usize,

    pub theta: f64,
    pub tau: f64,
    pub alpha: f64,
    pub beta0: f64,
    pub superpixels: usize,
    pub compactness: f64,
    pub slic_iterations: usize,
    pub strategy: Vec<FuseMethod>,
    pub threshold: f64,

    pub synth_train: usize,
    pub synth_test: usize,
    pub synth_size: usize,
    pub synth_min_area: f64,
    pub synth_max_area: f64,
    pub synth_noise: f64,
    pub synth_plant_noise: f64,
    pub synth_detail: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let fusion = FusionParams::default();
        let slic = SlicParams::default();
        let sample = SampleSpec::new(DEFAULT_SCALES[0]);
        Self {
            runs_dir: PathBuf::from("runs"),
            run_id: "default".into(),
            manifest: None,
            seed: 0,
            scales: DEFAULT_SCALES.to_vec(),
            stride: 8,
            sample_stride: sample.stride,
            ratio_lo: sample.ratio_lo,
            ratio_hi: sample.ratio_hi,
            cap: sample.cap,
            variant: BankVariant::ConstrainedSrm,
            channels: vec![32, 64, 128, 256],
            activations: vec![Activation::Tanh, Activation::Tanh, Activation::Relu, Activation::Relu],
            learning_rate: train.learning_rate,
            momentum: train.momentum,
            weight_decay: train.weight_decay,
            lr_gamma: train.lr_gamma,
            lr_step: train.lr_step,
            batch_size: train.batch_size,
            max_iterations: train.max_iterations,
            log_every: train.log_every,
            bn_batches: train.bn_batches,
            theta: fusion.theta,
            tau: fusion.tau,
            alpha: fusion.alpha,
            beta0: fusion.beta0,
            superpixels: slic.superpixels,
            compactness: slic.compactness,
            slic_iterations: slic.iterations,
            strategy: vec![FuseMethod::Superpixel(Strategy::Maxa)],
            threshold: 0.5,
            synth_train: 64,
            synth_test: 32,
            synth_size: 192,
            synth_min_area: 0.05,
            synth_max_area: 0.3,
            synth_noise: 1.0,
            synth_plant_noise: 8.0,
            synth_detail: 0.0,
        }
    }
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::invalid(format!("bad value `{value}` for `{key}`")))
}

fn list<T>(value: &str, f: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(f).collect()
}

fn join<T>(items: &[T], f: impl Fn(&T) -> String) -> String {
    items.iter().map(f).collect::<Vec<_>>().join(",")
}

impl PipelineConfig {
    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "runs_dir" => self.runs_dir = PathBuf::from(v),
            "run_id" => self.run_id = v.to_string(),
            "manifest" => self.manifest = (!v.is_empty()).then(|| PathBuf::from(v)),
            "seed" => self.seed = num(key, v)?,
            "scales" => self.scales = list(v, |s| num(key, s))?,
            "stride" => self.stride = num(key, v)?,
            "sample_stride" => self.sample_stride = num(key, v)?,
            "ratio_lo" => self.ratio_lo = num(key, v)?,
            "ratio_hi" => self.ratio_hi = num(key, v)?,
            "cap" => self.cap = num(key, v)?,
            "variant" => self.variant = BankVariant::parse(v)?,
            "channels" => self.channels = list(v, |s| num(key, s))?,
            "activations" => self.activations = list(v, Activation::parse)?,
            "learning_rate" => self.learning_rate = num(key, v)?,
            "momentum" => self.momentum = num(key, v)?,
            "weight_decay" => self.weight_decay = num(key, v)?,
            "lr_gamma" => self.lr_gamma = num(key, v)?,
            "lr_step" => self.lr_step = num(key, v)?,
            "batch_size" => self.batch_size = num(key, v)?,
            "max_iterations" => self.max_iterations = num(key, v)?,
            "log_every" => self.log_every = num(key, v)?,
            "bn_batches" => self.bn_batches = num(key, v)?,
            "theta" => self.theta = num(key, v)?,
            "tau" => self.tau = num(key, v)?,
            "alpha" => self.alpha = num(key, v)?,
            "beta0" => self.beta0 = num(key, v)?,
            "superpixels" => self.superpixels = num(key, v)?,
            "compactness" => self.compactness = num(key, v)?,
            "slic_iterations" => self.slic_iterations = num(key, v)?,
            "strategy" => self.strategy = list(v, FuseMethod::parse)?,
            "threshold" => self.threshold = num(key, v)?,
            "synth_train" => self.synth_train = num(key, v)?,
            "synth_test" => self.synth_test = num(key, v)?,
            "synth_size" => self.synth_size = num(key, v)?,
            "synth_min_area" => self.synth_min_area = num(key, v)?,
            "synth_max_area" => self.synth_max_area = num(key, v)?,
            "synth_noise" => self.synth_noise = num(key, v)?,
            "synth_plant_noise" => self.synth_plant_noise = num(key, v)?,
            "synth_detail" => self.synth_detail = num(key, v)?,
            other => return Err(Error::invalid(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut offset = 0u64;
        for line in text.split_inclusive('\n') {
            let at = offset;
            offset += line.len() as u64;
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (k, v) = body.split_once('=').ok_or_else(|| Error::Parse {
                offset: at,
                message: format!("expected `key = value`, got `{body}`"),
            })?;
            self.set(k.trim(), v).map_err(|e| Error::Parse {
                offset: at,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// Applies `--key value` or `--key=value` flags; dashes in keys read as underscores.
    pub fn apply_flags(&mut self, flags: &[String]) -> Result<()> {
        let mut it = flags.iter();
        while let Some(flag) = it.next() {
            let name = flag
                .strip_prefix("--")
                .ok_or_else(|| Error::invalid(format!("unexpected argument `{flag}`")))?;
            let (key, value) = match name.split_once('=') {
                Some((k, v)) => (k.to_string(), v.to_string()),
                None => {
                    let v = it.next().ok_or_else(|| Error::invalid(format!("flag `{flag}` needs a value")))?;
                    (name.to_string(), v.clone())
                }
            };
            self.set(&key.replace('-', "_"), &value)?;
        }
        Ok(())
    }

    /// Canonical text form; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let f = |x: &f64| x.to_string();
        let u = |x: &usize| x.to_string();
        let rows: Vec<(&str, String)> = vec![
            ("runs_dir", self.runs_dir.display().to_string()),
            ("run_id", self.run_id.clone()),
            ("manifest", self.manifest.as_ref().map_or(String::new(), |p| p.display().to_string())),
            ("seed", self.seed.to_string()),
            ("scales", join(&self.scales, u)),
            ("stride", u(&self.stride)),
            ("sample_stride", u(&self.sample_stride)),
            ("ratio_lo", f(&self.ratio_lo)),
            ("ratio_hi", f(&self.ratio_hi)),
            ("cap", u(&self.cap)),
            ("variant", self.variant.name().into()),
            ("channels", join(&self.channels, u)),
            ("activations", join(&self.activations, |a| a.name().to_string())),
            ("learning_rate", f(&self.learning_rate)),
            ("momentum", f(&self.momentum)),
            ("weight_decay", f(&self.weight_decay)),
            ("lr_gamma", f(&self.lr_gamma)),
            ("lr_step", self.lr_step.to_string()),
            ("batch_size", u(&self.batch_size)),
            ("max_iterations", self.max_iterations.to_string()),
            ("log_every", self.log_every.to_string()),
            ("bn_batches", self.bn_batches.to_string()),
            ("theta", f(&self.theta)),
            ("tau", f(&self.tau)),
            ("alpha", f(&self.alpha)),
            ("beta0", f(&self.beta0)),
            ("superpixels", u(&self.superpixels)),
            ("compactness", f(&self.compactness)),
            ("slic_iterations", u(&self.slic_iterations)),
            ("strategy", join(&self.strategy, |s| s.name().to_string())),
            ("threshold", f(&self.threshold)),
            ("synth_train", u(&self.synth_train)),
            ("synth_test", u(&self.synth_test)),
            ("synth_size", u(&self.synth_size)),
            ("synth_min_area", f(&self.synth_min_area)),
            ("synth_max_area", f(&self.synth_max_area)),
            ("synth_noise", f(&self.synth_noise)),
            ("synth_plant_noise", f(&self.synth_plant_noise)),
            ("synth_detail", f(&self.synth_detail)),
        ];
        rows.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.scales.is_empty() {
            return Err(Error::invalid("scale set is empty"));
        }
        if let Some(s) = self.scales.iter().find(|&&s| s < 8 || s % 2 != 0) {
            return Err(Error::invalid(format!("scale {s} must be even and at least 8")));
        }
        if self.stride == 0 || self.sample_stride == 0 {
            return Err(Error::invalid("strides must be at least 1"));
        }
        if self.channels.is_empty() || self.channels.len() != self.activations.len() {
            return Err(Error::invalid("channels and activations must be non-empty and equally long"));
        }
        if self.run_id.is_empty() || self.run_id.contains(['/', '\\']) {
            return Err(Error::invalid(format!("bad run id `{}`", self.run_id)));
        }
        if self.strategy.is_empty() {
            return Err(Error::invalid("no fusion strategy"));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::invalid("threshold must lie in (0, 1)"));
        }
        if !(0.0 < self.synth_min_area && self.synth_min_area <= self.synth_max_area && self.synth_max_area < 1.0) {
            return Err(Error::invalid("synthetic area bounds must satisfy 0 < min <= max < 1"));
        }
        if self.synth_train + self.synth_test == 0 {
            return Err(Error::invalid("synthetic corpus would be empty"));
        }
        self.fusion_params().validate()?;
        for &s in &self.scales {
            self.train_config(s).validate()?;
            self.sample_spec(s).validate()?;
            self.network_spec(s).pool_side()?;
        }
        Ok(())
    }

    pub fn run_dir(&self) -> PathBuf {
        self.runs_dir.join(&self.run_id)
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.manifest
            .clone()
            .unwrap_or_else(|| self.run_dir().join("data").join("manifest.tsv"))
    }

    pub fn sample_spec(&self, scale: usize) -> SampleSpec {
        SampleSpec {
            scale,
            stride: self.sample_stride,
            ratio_lo: self.ratio_lo,
            ratio_hi: self.ratio_hi,
            cap: self.cap,
            seed: stage_seed(self.seed, &format!("sample/s{scale}")),
        }
    }

    pub fn network_spec(&self, scale: usize) -> NetworkSpec {
        NetworkSpec::with_blocks(scale, self.variant, &self.channels, &self.activations)
    }

    pub fn train_config(&self, scale: usize) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            lr_gamma: self.lr_gamma,
            lr_step: self.lr_step,
            batch_size: self.batch_size,
            max_iterations: self.max_iterations,
            seed: stage_seed(self.seed, &format!("train/s{scale}")),
            log_every: self.log_every,
            bn_batches: self.bn_batches,
        }
    }

    pub fn fusion_params(&self) -> FusionParams {
        FusionParams {
            theta: self.theta,
            tau: self.tau,
            alpha: self.alpha,
            beta0: self.beta0,
        }
    }

    pub fn slic_params(&self) -> SlicParams {
        SlicParams {
            superpixels: self.superpixels,
            compactness: self.compactness,
            iterations: self.slic_iterations,
        }
    }
}

/// Stage seed derived from the top-level seed and a stage name.
pub fn stage_seed(seed: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(stage.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}
