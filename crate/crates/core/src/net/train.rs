use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::ModelCheckpoint;
use super::model::Network;
use super::optim::{sgd_step, TrainConfig};
use super::spec::NetworkSpec;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::raster::ColorImage;
use crate::sampler::{PatchDataset, PatchEntry};
use crate::scalar::Scalar;

/// Windows per inference batch.
pub const INFERENCE_BATCH: usize = 32;

/// One training-log line; values are averaged since the previous line.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogLine {
    pub iteration: u64,
    pub lr: f64,
    pub loss: f64,
    pub accuracy: f64,
}

impl fmt::Display for LogLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}, {:e}, {:.6}, {:.4}", self.iteration, self.lr, self.loss, self.accuracy)
    }
}

fn means_as<T: Scalar>(m: [f64; 3]) -> [T; 3] {
    m.map(T::of)
}

/// Stacks mean-subtracted windows into a batch tensor.
pub fn batch_tensor<T: Scalar>(
    image_of: impl Fn(usize) -> usize,
    images: &[ColorImage],
    windows: &[(usize, usize)],
    scale: usize,
    means: [f64; 3],
) -> Tensor<T> {
    let m = means_as::<T>(means);
    let item = 3 * scale * scale;
    let mut t = Tensor::zeros(windows.len(), 3, scale, scale);
    for (i, (chunk, &(r, c))) in t.data.chunks_mut(item).zip(windows).enumerate() {
        images[image_of(i)].write_planar(r, c, scale, &m, chunk);
    }
    t
}

fn entry_batch<T: Scalar>(entries: &[&PatchEntry], images: &[ColorImage], scale: usize, means: [f64; 3]) -> Tensor<T> {
    let windows: Vec<(usize, usize)> = entries.iter().map(|e| (e.row, e.col)).collect();
    batch_tensor(|i| entries[i].image, images, &windows, scale, means)
}

/// Reshuffled passes over the dataset.
struct Epochs {
    order: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
}

impl Epochs {
    fn new(len: usize, mut rng: ChaCha8Rng) -> Self {
        let mut order: Vec<usize> = (0..len).collect();
        order.shuffle(&mut rng);
        Self { order, cursor: 0, rng }
    }

    fn next<'a>(&mut self, dataset: &'a PatchDataset, n: usize) -> Vec<&'a PatchEntry> {
        let mut batch = Vec::with_capacity(n);
        while batch.len() < n {
            if self.cursor == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.cursor = 0;
            }
            batch.push(&dataset.entries[self.order[self.cursor]]);
            self.cursor += 1;
        }
        batch
    }
}

/// Trains a detector for `spec` on `dataset`; `images[i]` is the image the
/// dataset calls `image_ids[i]`. Returns the checkpoint and the training log.
pub fn train<T: Scalar>(
    spec: &NetworkSpec,
    dataset: &PatchDataset,
    images: &[ColorImage],
    config: &TrainConfig,
) -> Result<(ModelCheckpoint<T>, Vec<LogLine>)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if images.len() != dataset.image_ids.len() {
        return Err(Error::invalid(format!(
            "{} images for a dataset over {}",
            images.len(),
            dataset.image_ids.len()
        )));
    }
    for e in &dataset.entries {
        if e.scale != spec.scale {
            return Err(Error::invalid(format!(
                "dataset patch at scale {} for a scale-{} network",
                e.scale, spec.scale
            )));
        }
        crate::raster::PatchGeometry::new(e.scale, 1, e.row, e.col)?
            .check_bounds(images[e.image].height(), images[e.image].width())?;
    }
    let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let order_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5EED_0F_0DE4);
    let network = Network::<T>::new(spec, &mut init_rng)?;
    let mut ckpt = ModelCheckpoint::fresh(network, dataset.channel_means);

    let mut epochs = Epochs::new(dataset.len(), order_rng);
    let mut log = Vec::new();
    let (mut loss_acc, mut acc_acc, mut seen) = (0.0, 0.0, 0u64);
    for it in 0..config.max_iterations {
        let batch = epochs.next(dataset, config.batch_size);
        let x = entry_batch::<T>(&batch, images, spec.scale, dataset.channel_means);
        let labels: Vec<usize> = batch.iter().map(|e| e.label.index()).collect();
        let (loss, grads, accuracy, stats) = ckpt.network.loss_and_gradients(x, &labels)?;
        if !loss.is_finite() {
            return Err(Error::Shape(format!("non-finite loss at iteration {it}")));
        }
        sgd_step(&mut ckpt.network, &mut ckpt.velocity, &grads, config, it)?;
        ckpt.network.update_running_stats(&stats);
        ckpt.iteration = it + 1;
        loss_acc += loss.as_f64();
        acc_acc += accuracy;
        seen += 1;
        if (it + 1) % config.log_every == 0 || it + 1 == config.max_iterations {
            log.push(LogLine {
                iteration: it + 1,
                lr: config.lr_at(it),
                loss: loss_acc / seen as f64,
                accuracy: acc_acc / seen as f64,
            });
            (loss_acc, acc_acc, seen) = (0.0, 0.0, 0);
        }
    }
    if config.bn_batches > 0 {
        // High momentum moves the weights faster than the running averages
        // follow, so the statistics are re-estimated with the final weights.
        ckpt.network.reset_running_stats();
        for _ in 0..config.bn_batches {
            let batch = epochs.next(dataset, config.batch_size);
            let x = entry_batch::<T>(&batch, images, spec.scale, dataset.channel_means);
            let trace = ckpt.network.forward_train(x)?;
            ckpt.network.update_running_stats(&trace.batch_stats);
        }
    }
    Ok((ckpt, log))
}

impl<T: Scalar> ModelCheckpoint<T> {
    /// Fake-class probability of a single patch at the model's scale.
    pub fn predict_patch(&self, patch: &ColorImage) -> Result<f64> {
        let s = self.scale();
        if patch.dims() != (s, s) {
            return Err(Error::Shape(format!(
                "patch {}x{} for a scale-{s} model",
                patch.height(),
                patch.width()
            )));
        }
        Ok(self.predict_windows(patch, &[(0, 0)])?[0])
    }

    /// Fake-class probabilities for windows of `image` at the given origins.
    pub fn predict_windows(&self, image: &ColorImage, origins: &[(usize, usize)]) -> Result<Vec<f64>> {
        let s = self.scale();
        for &(r, c) in origins {
            crate::raster::PatchGeometry::new(s, 1, r, c)?.check_bounds(image.height(), image.width())?;
        }
        let images = std::slice::from_ref(image);
        let mut out = Vec::with_capacity(origins.len());
        for chunk in origins.chunks(INFERENCE_BATCH) {
            let x = batch_tensor::<T>(|_| 0, images, chunk, s, self.channel_means);
            out.extend(self.network.forward(x)?.into_iter().map(|p| p[1].as_f64().clamp(0.0, 1.0)));
        }
        Ok(out)
    }

    /// Fraction of dataset patches whose argmax matches the label.
    pub fn accuracy(&self, dataset: &PatchDataset, images: &[ColorImage]) -> Result<f64> {
        if dataset.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut correct = 0usize;
        let refs: Vec<&PatchEntry> = dataset.entries.iter().collect();
        for chunk in refs.chunks(INFERENCE_BATCH) {
            let x = entry_batch::<T>(chunk, images, self.scale(), self.channel_means);
            for (p, e) in self.network.forward(x)?.iter().zip(chunk) {
                let pred = if p[1] > p[0] { 1 } else { 0 };
                correct += (pred == e.label.index()) as usize;
            }
        }
        Ok(correct as f64 / dataset.len() as f64)
    }
}
