//! Raster containers: color images, ground-truth masks, possibility maps,
//! and the window geometry shared by the sampler and map generation.

mod io;
mod mpf;

pub use io::{load_image, load_mask, load_mask_for, save_binary_png, save_image_png};
pub use mpf::{decode_map, encode_map, load_map, save_map};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Three-channel 8-bit raster, row-major, channels interleaved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ColorImage {
    height: usize,
    width: usize,
    samples: Vec<u8>,
}

impl ColorImage {
    pub fn new(height: usize, width: usize, samples: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid("image dimensions must be at least 1x1"));
        }
        if samples.len() != height * width * 3 {
            return Err(Error::Shape(format!(
                "{} samples for a {height}x{width}x3 image",
                samples.len()
            )));
        }
        Ok(Self {
            height,
            width,
            samples,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Self {
        assert!(height > 0 && width > 0);
        let mut samples = Vec::with_capacity(height * width * 3);
        for r in 0..height {
            for c in 0..width {
                samples.extend_from_slice(&f(r, c));
            }
        }
        Self {
            height,
            width,
            samples,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    pub fn pixel(&self, row: usize, col: usize) -> [u8; 3] {
        let i = (row * self.width + col) * 3;
        [self.samples[i], self.samples[i + 1], self.samples[i + 2]]
    }

    /// Copies the `s x s` window at `geom` into a new image.
    pub fn extract_patch(&self, geom: &PatchGeometry) -> Result<ColorImage> {
        geom.check_bounds(self.height, self.width)?;
        let s = geom.scale;
        let mut samples = Vec::with_capacity(s * s * 3);
        for r in geom.row..geom.row + s {
            let start = (r * self.width + geom.col) * 3;
            samples.extend_from_slice(&self.samples[start..start + s * 3]);
        }
        Ok(ColorImage {
            height: s,
            width: s,
            samples,
        })
    }

    /// Writes the window at (`row`, `col`) into a planar CHW buffer after
    /// subtracting per-channel means. No bounds check beyond slicing.
    pub fn write_planar<T: Scalar>(
        &self,
        row: usize,
        col: usize,
        scale: usize,
        means: &[T; 3],
        out: &mut [T],
    ) {
        let plane = scale * scale;
        debug_assert!(out.len() >= 3 * plane);
        for r in 0..scale {
            let src = &self.samples[((row + r) * self.width + col) * 3..];
            for c in 0..scale {
                for ch in 0..3 {
                    out[ch * plane + r * scale + c] = T::of(src[c * 3 + ch] as f64) - means[ch];
                }
            }
        }
    }
}

/// Per-pixel binary tamper labels (1 = tampered).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroundTruthMask {
    height: usize,
    width: usize,
    labels: Vec<u8>,
}

impl GroundTruthMask {
    pub fn new(height: usize, width: usize, labels: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid("mask dimensions must be at least 1x1"));
        }
        if labels.len() != height * width {
            return Err(Error::Shape(format!(
                "{} labels for a {height}x{width} mask",
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&v| v > 1) {
            return Err(Error::invalid(format!("mask label {bad} is not binary")));
        }
        Ok(Self {
            height,
            width,
            labels,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        assert!(height > 0 && width > 0);
        let mut labels = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                labels.push(f(r, c) as u8);
            }
        }
        Self {
            height,
            width,
            labels,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.labels[row * self.width + col] == 1
    }

    pub fn tampered_count(&self) -> usize {
        self.labels.iter().filter(|&&v| v == 1).count()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.iter().all(|&v| v == 0)
    }

    /// Swaps the tampered and pristine labels.
    pub fn inverted(&self) -> Self {
        Self {
            height: self.height,
            width: self.width,
            labels: self.labels.iter().map(|&v| 1 - v).collect(),
        }
    }
}

/// Real-valued tampering possibility map with every value in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FloatMap<T> {
    height: usize,
    width: usize,
    values: Vec<T>,
}

impl<T: Scalar> FloatMap<T> {
    pub fn new(height: usize, width: usize, values: Vec<T>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid("map dimensions must be at least 1x1"));
        }
        if values.len() != height * width {
            return Err(Error::Shape(format!(
                "{} values for a {height}x{width} map",
                values.len()
            )));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= T::zero() && **v <= T::one()))
        {
            return Err(Error::invalid(format!(
                "map value {v} at index {i} outside [0, 1]"
            )));
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn constant(height: usize, width: usize, value: T) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> T) -> Result<Self> {
        let mut values = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                values.push(f(r, c));
            }
        }
        Self::new(height, width, values)
    }

    /// Callers guarantee the range invariant.
    pub(crate) fn from_raw(height: usize, width: usize, values: Vec<T>) -> Self {
        debug_assert_eq!(values.len(), height * width);
        debug_assert!(values
            .iter()
            .all(|v| v.is_finite() && *v >= T::zero() && *v <= T::one()));
        Self {
            height,
            width,
            values,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.values[row * self.width + col]
    }

    pub fn cast<U: Scalar>(&self) -> FloatMap<U> {
        FloatMap {
            height: self.height,
            width: self.width,
            values: self
                .values
                .iter()
                .map(|v| U::of(v.as_f64()).min(U::one()).max(U::zero()))
                .collect(),
        }
    }
}

/// A square analysis window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PatchGeometry {
    pub scale: usize,
    pub stride: usize,
    pub row: usize,
    pub col: usize,
}

impl PatchGeometry {
    pub fn new(scale: usize, stride: usize, row: usize, col: usize) -> Result<Self> {
        if scale == 0 || stride == 0 {
            return Err(Error::invalid("scale and stride must be at least 1"));
        }
        Ok(Self {
            scale,
            stride,
            row,
            col,
        })
    }

    pub fn check_bounds(&self, height: usize, width: usize) -> Result<()> {
        if self.row + self.scale > height || self.col + self.scale > width {
            return Err(Error::OutOfBounds {
                row: self.row,
                col: self.col,
                scale: self.scale,
                height,
                width,
            });
        }
        Ok(())
    }
}

/// Number of window positions along each axis for a sliding `scale` window.
pub fn grid_dims(height: usize, width: usize, scale: usize, stride: usize) -> Result<(usize, usize)> {
    if stride == 0 || scale == 0 {
        return Err(Error::invalid("scale and stride must be at least 1"));
    }
    if height < scale || width < scale {
        return Err(Error::DimensionTooSmall {
            height,
            width,
            scale,
        });
    }
    Ok(((height - scale) / stride + 1, (width - scale) / stride + 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize) -> ColorImage {
        ColorImage::from_fn(h, w, |r, c| [(r * 3 + c) as u8, (r + 7 * c) as u8, (r ^ c) as u8])
    }

    #[test]
    fn grid_dims_examples() {
        assert_eq!(grid_dims(1080, 1920, 64, 8).unwrap(), (128, 233));
        assert_eq!(grid_dims(64, 64, 64, 8).unwrap(), (1, 1));
        assert_eq!(grid_dims(100, 100, 64, 16).unwrap(), (3, 3));
        assert!(matches!(
            grid_dims(63, 100, 64, 8),
            Err(Error::DimensionTooSmall { .. })
        ));
    }

    #[test]
    fn grid_dims_monotone() {
        for s in 1..40 {
            for st in 1..12 {
                let (a, b) = grid_dims(50, 45, s, st).unwrap();
                let (a2, b2) = grid_dims(50, 45, s + 1, st).unwrap();
                let (a3, b3) = grid_dims(50, 45, s, st + 1).unwrap();
                assert!(a2 <= a && b2 <= b && a3 <= a && b3 <= b);
            }
        }
    }

    #[test]
    fn extract_identity_and_offset() {
        let img = ramp(64, 64);
        let whole = img.extract_patch(&PatchGeometry::new(64, 8, 0, 0).unwrap()).unwrap();
        assert_eq!(whole, img);

        let p = img.extract_patch(&PatchGeometry::new(32, 8, 8, 8).unwrap()).unwrap();
        assert_eq!(p.dims(), (32, 32));
        assert_eq!(p.pixel(0, 0), img.pixel(8, 8));
        assert_eq!(p.pixel(31, 31), img.pixel(39, 39));

        let err = img.extract_patch(&PatchGeometry::new(32, 8, 40, 40).unwrap());
        assert!(matches!(err, Err(Error::OutOfBounds { .. })));
    }

    #[test]
    fn extract_exhaustive_small() {
        let img = ramp(9, 7);
        for s in 1..=7 {
            for r in 0..=9 - s {
                for c in 0..=7 - s {
                    let p = img.extract_patch(&PatchGeometry::new(s, 1, r, c).unwrap()).unwrap();
                    for i in 0..s {
                        for j in 0..s {
                            assert_eq!(p.pixel(i, j), img.pixel(r + i, c + j));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn map_rejects_out_of_range() {
        assert!(FloatMap::new(1, 2, vec![0.5f64, 1.5]).is_err());
        assert!(FloatMap::new(1, 1, vec![f64::NAN]).is_err());
        assert!(FloatMap::new(1, 1, vec![1.0f32]).is_ok());
    }

    #[test]
    fn mask_must_be_binary() {
        assert!(GroundTruthMask::new(1, 2, vec![0, 2]).is_err());
        let m = GroundTruthMask::new(1, 3, vec![0, 1, 1]).unwrap();
        assert_eq!(m.tampered_count(), 2);
        assert_eq!(m.inverted().labels(), &[1, 0, 0]);
    }
}
