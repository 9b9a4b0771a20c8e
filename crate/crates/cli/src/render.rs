//! Heatmaps of possibility maps and red overlays of decisions.

use forge_core::raster::{ColorImage, FloatMap, GroundTruthMask};
use forge_core::{Error, Result, Scalar};

/// "Hot" colormap: black at 0, red at 1/3, yellow at 2/3, white at 1.
pub fn hot(v: f64) -> [u8; 3] {
    let v = v.clamp(0.0, 1.0);
    let ch = |x: f64| (x.clamp(0.0, 1.0) * 255.0).round() as u8;
    [ch(3.0 * v), ch(3.0 * v - 1.0), ch(3.0 * v - 2.0)]
}

pub fn heatmap<T: Scalar>(map: &FloatMap<T>) -> ColorImage {
    ColorImage::from_fn(map.height(), map.width(), |r, c| hot(map.get(r, c).as_f64()))
}

/// Tampered pixels blend 50/50 with pure red; others are copied unchanged.
pub fn overlay(image: &ColorImage, decision: &GroundTruthMask) -> Result<ColorImage> {
    if image.dims() != decision.dims() {
        return Err(Error::DimensionMismatch {
            expected: image.dims(),
            actual: decision.dims(),
        });
    }
    Ok(ColorImage::from_fn(image.height(), image.width(), |r, c| {
        let px = image.pixel(r, c);
        if decision.get(r, c) {
            let blend = |v: u8, t: u8| ((v as u16 + t as u16 + 1) / 2) as u8;
            [blend(px[0], 255), blend(px[1], 0), blend(px[2], 0)]
        } else {
            px
        }
    }))
}
