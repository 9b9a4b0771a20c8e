//! Synthetic forgery corpus: smoothed noise textures with a planted
//! rectangle or ellipse whose sensor-like noise is stronger than the rest.

use forge_core::raster::{ColorImage, GroundTruthMask};
use forge_core::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthSpec {
    pub size: usize,
    /// Bounds on the tampered area fraction.
    pub min_area: f64,
    pub max_area: f64,
    /// Gaussian noise std outside the plant.
    pub noise: f64,
    /// Gaussian noise std inside the plant.
    pub plant_noise: f64,
    /// Std of the fine background detail at full envelope.
    pub detail: f64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.size < 16 {
            return Err(Error::invalid("synthetic images need a side of at least 16"));
        }
        if !(0.0 < self.min_area && self.min_area <= self.max_area && self.max_area < 1.0) {
            return Err(Error::invalid("area bounds must satisfy 0 < min <= max < 1"));
        }
        if !(self.noise >= 0.0 && self.plant_noise >= 0.0 && self.detail >= 0.0) {
            return Err(Error::invalid("noise and detail levels must be non-negative"));
        }
        Ok(())
    }
}

/// Bilinear interpolation of a `(cells + 1)^2` lattice onto a `size^2` grid.
fn bilinear<const K: usize>(lattice: &[[f64; K]], cells: usize, size: usize) -> Vec<[f64; K]> {
    let n = cells + 1;
    let step = (size - 1) as f64 / cells as f64;
    let mut out = Vec::with_capacity(size * size);
    for r in 0..size {
        let y = r as f64 / step;
        let y0 = (y as usize).min(cells - 1);
        let fy = y - y0 as f64;
        for c in 0..size {
            let x = c as f64 / step;
            let x0 = (x as usize).min(cells - 1);
            let fx = x - x0 as f64;
            let g = |a: usize, b: usize| lattice[a * n + b];
            let mut px = [0.0; K];
            for (ch, p) in px.iter_mut().enumerate() {
                let top = g(y0, x0)[ch] * (1.0 - fx) + g(y0, x0 + 1)[ch] * fx;
                let bottom = g(y0 + 1, x0)[ch] * (1.0 - fx) + g(y0 + 1, x0 + 1)[ch] * fx;
                *p = top * (1.0 - fy) + bottom * fy;
            }
            out.push(px);
        }
    }
    out
}

/// Smooth color variation plus fine luminance detail: white noise under a
/// 3x3 box blur, scaled to std `detail` and modulated by a smooth [0, 1]
/// envelope so busy and flat areas alternate.
fn texture(rng: &mut ChaCha8Rng, size: usize, detail: f64) -> Vec<[f64; 3]> {
    let cells = (size / 24).max(2);
    let n = cells + 1;
    let base: [f64; 3] = [rng.random_range(60.0..190.0), rng.random_range(60.0..190.0), rng.random_range(60.0..190.0)];
    let lattice: Vec<[f64; 3]> = (0..n * n)
        .map(|_| base.map(|b| (b + rng.random_range(-50.0..50.0)).clamp(0.0, 255.0)))
        .collect();
    let mut out = bilinear(&lattice, cells, size);
    if detail == 0.0 {
        return out;
    }
    let envelope: Vec<[f64; 1]> = (0..n * n).map(|_| [rng.random_range(0.0..1.0f64)]).collect();
    let envelope = bilinear(&envelope, cells, size);
    let side = size + 2;
    let white: Vec<f64> = (0..side * side).map(|_| rng.random_range(-1.0..1.0)).collect();
    // box-blurred uniform(-1, 1) has std 1/(3 sqrt 3)
    let gain = detail * 3.0 * 3f64.sqrt();
    for r in 0..size {
        for c in 0..size {
            let mut acc = 0.0;
            for dr in 0..3 {
                for dc in 0..3 {
                    acc += white[(r + dr) * side + c + dc];
                }
            }
            let v = gain * envelope[r * size + c][0] * acc / 9.0;
            for ch in &mut out[r * size + c] {
                *ch += v;
            }
        }
    }
    out
}

/// Rectangle or ellipse covering a fraction of the image within bounds.
fn plant(rng: &mut ChaCha8Rng, spec: &SynthSpec) -> GroundTruthMask {
    let n = spec.size;
    let total = (n * n) as f64;
    loop {
        let target = rng.random_range(spec.min_area..=spec.max_area) * total;
        let aspect = rng.random_range(0.6..1.6f64);
        let ellipse = rng.random_bool(0.5);
        let (h, w) = if ellipse {
            let ry = (target / (std::f64::consts::PI * aspect)).sqrt();
            (2.0 * ry, 2.0 * ry * aspect)
        } else {
            let h = (target / aspect).sqrt();
            (h, h * aspect)
        };
        let (h, w) = (h.round() as usize, w.round() as usize);
        if h < 2 || w < 2 || h >= n || w >= n {
            continue;
        }
        let (top, left) = (rng.random_range(0..=n - h), rng.random_range(0..=n - w));
        let (cy, cx) = (top as f64 + h as f64 / 2.0, left as f64 + w as f64 / 2.0);
        let (ry, rx) = (h as f64 / 2.0, w as f64 / 2.0);
        let mask = GroundTruthMask::from_fn(n, n, |r, c| {
            let inside = r >= top && r < top + h && c >= left && c < left + w;
            if !ellipse {
                return inside;
            }
            let dy = (r as f64 + 0.5 - cy) / ry;
            let dx = (c as f64 + 0.5 - cx) / rx;
            dy * dy + dx * dx <= 1.0
        });
        let frac = mask.tampered_count() as f64 / total;
        if frac >= spec.min_area && frac <= spec.max_area {
            return mask;
        }
    }
}

/// One image and its exact mask, fully determined by `seed`.
pub fn synth_image(spec: &SynthSpec, seed: u64) -> Result<(ColorImage, GroundTruthMask)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tex = texture(&mut rng, spec.size, spec.detail);
    let mask = plant(&mut rng, spec);
    let bg = Normal::new(0.0, spec.noise).map_err(|e| Error::invalid(e.to_string()))?;
    let fg = Normal::new(0.0, spec.plant_noise).map_err(|e| Error::invalid(e.to_string()))?;
    let n = spec.size;
    let mut samples = Vec::with_capacity(n * n * 3);
    for (p, px) in tex.iter().enumerate() {
        let tampered = mask.labels()[p] != 0;
        for v in px {
            let noise = if tampered { fg.sample(&mut rng) } else { bg.sample(&mut rng) };
            samples.push((v + noise).round().clamp(0.0, 255.0) as u8);
        }
    }
    Ok((ColorImage::new(n, n, samples)?, mask))
}
