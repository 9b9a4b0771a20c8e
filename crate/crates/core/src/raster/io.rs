use std::path::Path;

use image::{GrayImage, ImageFormat, RgbImage};

use super::{ColorImage, GroundTruthMask};
use crate::error::{Error, Result};

fn open(path: &Path) -> Result<image::DynamicImage> {
    let reader = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    reader.decode().map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads a PNG or binary PPM as an 8-bit RGB image.
pub fn load_image(path: impl AsRef<Path>) -> Result<ColorImage> {
    let path = path.as_ref();
    let rgb = open(path)?.to_rgb8();
    let (w, h) = rgb.dimensions();
    ColorImage::new(h as usize, w as usize, rgb.into_raw())
}

/// Loads a PNG/PGM mask; samples above 127 are tampered.
pub fn load_mask(path: impl AsRef<Path>) -> Result<GroundTruthMask> {
    let path = path.as_ref();
    let gray = open(path)?.to_luma8();
    let (w, h) = gray.dimensions();
    let labels = gray.into_raw().into_iter().map(|v| (v > 127) as u8).collect();
    GroundTruthMask::new(h as usize, w as usize, labels)
}

/// Loads a mask and checks it against the image it annotates.
pub fn load_mask_for(path: impl AsRef<Path>, image: &ColorImage) -> Result<GroundTruthMask> {
    let mask = load_mask(path)?;
    if mask.dims() != image.dims() {
        return Err(Error::DimensionMismatch {
            expected: image.dims(),
            actual: mask.dims(),
        });
    }
    Ok(mask)
}

pub fn save_image_png(image: &ColorImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let buf = RgbImage::from_raw(
        image.width() as u32,
        image.height() as u32,
        image.samples().to_vec(),
    )
    .expect("buffer length checked at construction");
    buf.save_with_format(path, ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

/// Writes a binary raster as an 8-bit PNG with values 0/255.
pub fn save_binary_png(
    height: usize,
    width: usize,
    labels: &[u8],
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let data = labels.iter().map(|&v| if v != 0 { 255 } else { 0 }).collect();
    let buf = GrayImage::from_raw(width as u32, height as u32, data)
        .ok_or_else(|| Error::Shape("label buffer does not match dimensions".into()))?;
    buf.save_with_format(path, ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grayscale_mask_binarizes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mask.png");
        let gray = GrayImage::from_raw(4, 1, vec![0, 255, 127, 128]).unwrap();
        gray.save(&path).unwrap();
        let mask = load_mask(&path).unwrap();
        assert_eq!(mask.labels(), &[0, 1, 0, 1]);
    }

    #[test]
    fn ppm_and_png_load_identically() {
        let dir = tempfile::tempdir().unwrap();
        let img = ColorImage::from_fn(5, 6, |r, c| [r as u8 * 40, c as u8 * 30, 200]);
        let png = dir.path().join("a.png");
        save_image_png(&img, &png).unwrap();
        let ppm = dir.path().join("a.ppm");
        let mut bytes = b"P6\n6 5\n255\n".to_vec();
        bytes.extend_from_slice(img.samples());
        std::fs::write(&ppm, bytes).unwrap();
        assert_eq!(load_image(&png).unwrap(), img);
        assert_eq!(load_image(&ppm).unwrap(), img);
    }

    #[test]
    fn mask_dimension_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mask.pgm");
        let mut bytes = b"P5\n3 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 0, 255, 255, 0, 0]);
        std::fs::write(&path, bytes).unwrap();
        let img = ColorImage::from_fn(3, 3, |_, _| [0; 3]);
        assert!(matches!(
            load_mask_for(&path, &img),
            Err(Error::DimensionMismatch { .. })
        ));
        let img = ColorImage::from_fn(2, 3, |_, _| [0; 3]);
        assert_eq!(load_mask_for(&path, &img).unwrap().labels(), &[0, 0, 1, 1, 0, 0]);
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(load_image("/nonexistent/x.png"), Err(Error::Io { .. })));
    }
}
