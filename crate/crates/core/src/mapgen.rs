//! Sliding-window inference, window-count upsampling to pixels and the
//! scale-sized mean filter.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::net::checkpoint::ModelCheckpoint;
use crate::net::train::INFERENCE_BATCH;
use crate::raster::{grid_dims, ColorImage, FloatMap};
use crate::scalar::Scalar;

/// Anything that scores square windows of an image.
pub trait PatchClassifier: Sync {
    fn scale(&self) -> usize;

    /// Fake-class probability for each window origin `(row, col)`.
    fn predict_windows(&self, image: &ColorImage, origins: &[(usize, usize)]) -> Result<Vec<f64>>;
}

impl<T: Scalar> PatchClassifier for ModelCheckpoint<T> {
    fn scale(&self) -> usize {
        ModelCheckpoint::scale(self)
    }

    fn predict_windows(&self, image: &ColorImage, origins: &[(usize, usize)]) -> Result<Vec<f64>> {
        ModelCheckpoint::predict_windows(self, image, origins)
    }
}

/// Window predictions on the stride grid, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GridMap {
    pub scale: usize,
    pub stride: usize,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl GridMap {
    pub fn new(scale: usize, stride: usize, rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Shape(format!("{} values for a {rows}x{cols} grid", values.len())));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("grid value {v} outside [0, 1]")));
        }
        Ok(Self {
            scale,
            stride,
            rows,
            cols,
            values,
        })
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.cols + b]
    }
}

/// Scores every window of the stride grid. Windows are batched in fixed
/// groups so results do not depend on the thread count.
pub fn infer_grid<C: PatchClassifier + ?Sized>(image: &ColorImage, model: &C, stride: usize) -> Result<GridMap> {
    let s = model.scale();
    let (rows, cols) = grid_dims(image.height(), image.width(), s, stride)?;
    let origins: Vec<(usize, usize)> = (0..rows)
        .flat_map(|a| (0..cols).map(move |b| (a * stride, b * stride)))
        .collect();
    let chunks: Vec<Result<Vec<f64>>> = origins
        .par_chunks(INFERENCE_BATCH)
        .map(|chunk| model.predict_windows(image, chunk))
        .collect();
    let mut values = Vec::with_capacity(origins.len());
    for c in chunks {
        let c = c?;
        if c.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("classifier returned a probability outside [0, 1]"));
        }
        values.extend(c);
    }
    GridMap::new(s, stride, rows, cols, values)
}

/// Grid indices `a` whose window `[a*st, a*st + s)` contains `i`.
fn covering(i: usize, n: usize, s: usize, st: usize) -> std::ops::Range<usize> {
    let lo = if i + 1 > s { (i + 1 - s).div_ceil(st) } else { 0 };
    let hi = (i / st + 1).min(n);
    lo..hi.max(lo)
}

/// Pixel map: each pixel averages the windows covering it. Pixels no window
/// covers copy the nearest covered pixel; the covered set is the rectangle
/// anchored at the origin, so the nearest one is the clamped position.
pub fn upsample(grid: &GridMap, height: usize, width: usize) -> Result<FloatMap<f64>> {
    let (s, st) = (grid.scale, grid.stride);
    let expected = grid_dims(height, width, s, st)?;
    if expected != (grid.rows, grid.cols) {
        return Err(Error::Shape(format!(
            "{}x{} grid for a {height}x{width} image at scale {s}, stride {st} (expected {}x{})",
            grid.rows, grid.cols, expected.0, expected.1
        )));
    }
    let covered_h = (grid.rows - 1) * st + s;
    let covered_w = (grid.cols - 1) * st + s;
    // Per grid row: horizontal sums of covering windows at each covered column.
    let horizontal: Vec<f64> = (0..grid.rows)
        .into_par_iter()
        .flat_map_iter(|a| {
            (0..covered_w).map(move |j| covering(j, grid.cols, s, st).map(|b| grid.get(a, b)).sum::<f64>())
        })
        .collect();
    let (lo, hi) = grid
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let covered: Vec<f64> = (0..covered_h)
        .into_par_iter()
        .flat_map_iter(|i| {
            let rows = covering(i, grid.rows, s, st);
            let kr = rows.len();
            let horizontal = &horizontal;
            (0..covered_w).map(move |j| {
                let k = kr * covering(j, grid.cols, s, st).len();
                let sum: f64 = rows.clone().map(|a| horizontal[a * covered_w + j]).sum();
                (sum / k as f64).clamp(lo, hi)
            })
        })
        .collect();
    let mut values = Vec::with_capacity(height * width);
    for i in 0..height {
        let src = &covered[i.min(covered_h - 1) * covered_w..][..covered_w];
        values.extend_from_slice(src);
        values.extend(std::iter::repeat_n(src[covered_w - 1], width - covered_w));
    }
    Ok(FloatMap::from_raw(height, width, values))
}

/// Sums of `x[clamp(k)]` over `k` in `[i - half, i + half)` for every `i`.
fn replicate_box_sums(x: &[f64], half: usize, out: &mut [f64]) {
    let n = x.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for &v in x {
        acc += v;
        prefix.push(acc);
    }
    for (i, o) in out.iter_mut().enumerate() {
        let lo = i as isize - half as isize;
        let hi = i as isize + half as isize - 1;
        let below = (-lo).max(0) as f64;
        let above = (hi - (n as isize - 1)).max(0) as f64;
        let a = lo.max(0) as usize;
        let b = (hi.min(n as isize - 1) + 1) as usize;
        let inner = if b > a { prefix[b] - prefix[a] } else { 0.0 };
        *o = inner + below * x[0] + above * x[n - 1];
    }
}

/// `s x s` box mean with offsets `-s/2 .. s/2 - 1` and replicate padding,
/// via running sums: the cost per pixel does not depend on `s`.
pub fn mean_filter<T: Scalar>(map: &FloatMap<T>, s: usize) -> Result<FloatMap<f64>> {
    if s < 2 || s % 2 != 0 {
        return Err(Error::invalid(format!("mean filter size {s} must be even and at least 2")));
    }
    let (h, w) = map.dims();
    let half = s / 2;
    let src: Vec<f64> = map.values().iter().map(|v| v.as_f64()).collect();
    let (lo, hi) = src
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let mut rows = vec![0.0; h * w];
    rows.par_chunks_mut(w)
        .zip(src.par_chunks(w))
        .for_each(|(o, x)| replicate_box_sums(x, half, o));
    let norm = (s * s) as f64;
    let cols: Vec<Vec<f64>> = (0..w)
        .into_par_iter()
        .map(|j| {
            let column: Vec<f64> = (0..h).map(|i| rows[i * w + j]).collect();
            let mut out = vec![0.0; h];
            replicate_box_sums(&column, half, &mut out);
            out
        })
        .collect();
    let mut values = vec![0.0; h * w];
    for (j, column) in cols.iter().enumerate() {
        for (i, v) in column.iter().enumerate() {
            values[i * w + j] = (v / norm).clamp(lo, hi);
        }
    }
    Ok(FloatMap::from_raw(h, w, values))
}

/// Grid inference, upsampling and smoothing at the model's scale.
pub fn scale_map<C: PatchClassifier + ?Sized>(image: &ColorImage, model: &C, stride: usize) -> Result<FloatMap<f64>> {
    let grid = infer_grid(image, model, stride)?;
    let pixels = upsample(&grid, image.height(), image.width())?;
    mean_filter(&pixels, model.scale())
}

/// File name of a persisted per-scale map.
pub fn map_file_name(image_id: &str, scale: usize) -> String {
    format!("{image_id}.s{scale}.mpf")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covering_ranges() {
        // s=4, st=2, 3 windows: [0,4), [2,6), [4,8)
        let n = 3;
        let got: Vec<Vec<usize>> = (0..9).map(|i| covering(i, n, 4, 2).collect()).collect();
        let want: Vec<Vec<usize>> = vec![
            vec![0],
            vec![0],
            vec![0, 1],
            vec![0, 1],
            vec![1, 2],
            vec![1, 2],
            vec![2],
            vec![2],
            vec![],
        ];
        assert_eq!(got, want);
    }

    #[test]
    fn two_window_mean() {
        // 6 wide, s=4, st=2: columns 2..4 are covered by both windows.
        let grid = GridMap::new(4, 2, 1, 2, vec![0.2, 0.8]).unwrap();
        let m = upsample(&grid, 4, 6).unwrap();
        assert!((m.get(0, 2) - 0.5).abs() < 1e-15);
        assert_eq!(m.get(0, 0), 0.2);
        assert_eq!(m.get(3, 5), 0.8);
    }

    #[test]
    fn single_window_fills_map() {
        let grid = GridMap::new(64, 8, 1, 1, vec![0.3]).unwrap();
        let m = upsample(&grid, 64, 64).unwrap();
        assert!(m.values().iter().all(|&v| v == 0.3));
    }

    #[test]
    fn inconsistent_grid_is_rejected() {
        let grid = GridMap::new(32, 8, 2, 2, vec![0.0; 4]).unwrap();
        assert!(upsample(&grid, 64, 64).is_err());
    }

    #[test]
    fn mean_filter_rejects_odd_sizes() {
        let m = FloatMap::constant(8, 8, 0.5f64).unwrap();
        assert!(mean_filter(&m, 7).is_err());
        assert!(mean_filter(&m, 0).is_err());
    }

    #[test]
    fn half_split_interior_is_half() {
        let m = FloatMap::from_fn(20, 20, |_, c| if c < 10 { 1.0f64 } else { 0.0 }).unwrap();
        let f = mean_filter(&m, 8).unwrap();
        // columns 6..=13 for c = 10: four ones, four zeros
        assert!((f.get(10, 10) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn file_names() {
        assert_eq!(map_file_name("img7", 64), "img7.s64.mpf");
    }
}
