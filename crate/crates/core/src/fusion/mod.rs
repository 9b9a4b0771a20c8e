//! Multi-scale map fusion: per-superpixel aggregation, a binary energy with
//! data, area and smoothness terms, and its exact minimization by min-cut.

pub mod maxflow;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::raster::{ColorImage, FloatMap, GroundTruthMask};
use crate::scalar::Scalar;
use crate::slic::{build_graph, slic_segment, SlicParams, SuperpixelPartition};
pub use maxflow::MaxFlow;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FusionParams {
    /// Pivot between pristine and tampered.
    pub theta: f64,
    /// Half-width of the unary dead band around `theta`.
    pub tau: f64,
    /// Cost per tampered unit.
    pub alpha: f64,
    /// Smoothness strength; per-edge weights scale it by relative boundary length.
    pub beta0: f64,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            theta: 0.5,
            tau: 0.1,
            alpha: 0.05,
            beta0: 0.25,
        }
    }
}

impl FusionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::invalid(format!("theta {} outside (0, 1)", self.theta)));
        }
        if !(0.0..0.5).contains(&self.tau) {
            return Err(Error::invalid(format!("tau {} outside [0, 0.5)", self.tau)));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid(format!("alpha {} must be non-negative", self.alpha)));
        }
        if !(self.beta0 >= 0.0 && self.beta0.is_finite()) {
            return Err(Error::NegativeWeight(self.beta0));
        }
        Ok(())
    }

    /// Data cost of label `t` for map value `c`.
    pub fn e_tau(&self, c: f64, t: u8) -> f64 {
        if t == 1 {
            (self.theta + self.tau - c).max(0.0)
        } else {
            (c - (self.theta - self.tau)).max(0.0)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    Mean,
    Maxa,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Mean => "mean",
            Strategy::Maxa => "maxa",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Strategy::Mean),
            "maxa" => Ok(Strategy::Maxa),
            other => Err(Error::invalid(format!("unknown strategy `{other}`"))),
        }
    }
}

fn check_dims<T: Scalar>(map: &FloatMap<T>, partition: &SuperpixelPartition) -> Result<()> {
    if map.dims() != partition.dims() {
        let (h, w) = partition.dims();
        return Err(Error::Shape(format!(
            "{}x{} map for a {h}x{w} partition",
            map.height(),
            map.width()
        )));
    }
    Ok(())
}

/// Mean map value per superpixel.
pub fn superpixel_mean<T: Scalar>(map: &FloatMap<T>, partition: &SuperpixelPartition) -> Result<Vec<f64>> {
    check_dims(map, partition)?;
    // Offsets from the first pixel keep constant superpixels exact.
    let mut first = vec![f64::NAN; partition.count()];
    let mut sums = vec![0.0; partition.count()];
    let mut counts = vec![0usize; partition.count()];
    for (&l, v) in partition.labels().iter().zip(map.values()) {
        let (l, v) = (l as usize, v.as_f64());
        if counts[l] == 0 {
            first[l] = v;
        }
        sums[l] += v - first[l];
        counts[l] += 1;
    }
    Ok((0..first.len())
        .map(|l| (first[l] + sums[l] / counts[l] as f64).clamp(0.0, 1.0))
        .collect())
}

/// Per superpixel, the value farthest from `theta`; ties keep the first
/// pixel in raster order.
pub fn superpixel_maxa<T: Scalar>(map: &FloatMap<T>, partition: &SuperpixelPartition, theta: f64) -> Result<Vec<f64>> {
    check_dims(map, partition)?;
    let mut best = vec![(-1.0f64, 0.0f64); partition.count()];
    for (&l, v) in partition.labels().iter().zip(map.values()) {
        let v = v.as_f64();
        let dev = (v - theta).abs();
        let slot = &mut best[l as usize];
        if dev > slot.0 {
            *slot = (dev, v);
        }
    }
    Ok(best.into_iter().map(|(_, v)| v).collect())
}

pub fn aggregate<T: Scalar>(
    map: &FloatMap<T>,
    partition: &SuperpixelPartition,
    strategy: Strategy,
    theta: f64,
) -> Result<Vec<f64>> {
    match strategy {
        Strategy::Mean => superpixel_mean(map, partition),
        Strategy::Maxa => superpixel_maxa(map, partition, theta),
    }
}

/// Binary labeling problem over `N` units.
#[derive(Clone, Debug, PartialEq)]
pub struct FusionProblem {
    /// `values[i][s]`: candidate value of unit `i` at scale `s`.
    pub values: Vec<Vec<f64>>,
    /// `neighbours[i]`: `(j, beta_ij)`, listed from both ends.
    pub neighbours: Vec<Vec<(usize, f64)>>,
    pub params: FusionParams,
}

impl FusionProblem {
    /// Checks value ranges, equal scale counts, and symmetric non-negative weights.
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.values.len() != self.neighbours.len() {
            return Err(Error::Shape("values and neighbour lists differ in length".into()));
        }
        let s = self.values.first().map_or(0, Vec::len);
        for v in &self.values {
            if v.len() != s || s == 0 {
                return Err(Error::Shape("every unit needs one value per scale".into()));
            }
            if v.iter().any(|c| !(0.0..=1.0).contains(c)) {
                return Err(Error::invalid("unit value outside [0, 1]"));
            }
        }
        for (i, list) in self.neighbours.iter().enumerate() {
            for &(j, b) in list {
                if !(b >= 0.0) {
                    return Err(Error::NegativeWeight(b));
                }
                if j == i || j >= self.values.len() {
                    return Err(Error::invalid(format!("bad neighbour {j} of unit {i}")));
                }
                let back = self.neighbours[j].iter().filter(|&&(k, _)| k == i).map(|&(_, w)| w);
                if back.clone().count() != 1 || back.clone().next() != Some(b) {
                    return Err(Error::invalid(format!("asymmetric weight between {i} and {j}")));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Unary cost of unit `i` taking label `t`, including the area prior.
    pub fn unary(&self, i: usize, t: u8) -> f64 {
        let v = &self.values[i];
        let data: f64 = v.iter().map(|&c| self.params.e_tau(c, t)).sum::<f64>() / v.len() as f64;
        data + if t == 1 { self.params.alpha } else { 0.0 }
    }

    /// Energy of a labeling. The smoothness sum runs over every unit's
    /// neighbour list, so each cut edge is paid from both ends.
    pub fn energy(&self, labels: &[u8]) -> f64 {
        let s = self.values.first().map_or(1, Vec::len) as f64;
        let mut data = 0.0;
        for (v, &t) in self.values.iter().zip(labels) {
            data += v.iter().map(|&c| self.params.e_tau(c, t)).sum::<f64>();
        }
        let area: f64 = labels.iter().map(|&t| t as f64).sum::<f64>() * self.params.alpha;
        let mut smooth = 0.0;
        for (i, list) in self.neighbours.iter().enumerate() {
            for &(j, b) in list {
                smooth += b * (labels[i] as f64 - labels[j] as f64).abs();
            }
        }
        data / s + area + smooth
    }

    /// Superpixel problem: one unit per superpixel, `beta_ij = beta0 * L_ij / mean L`.
    pub fn from_superpixels(scales: &[Vec<f64>], partition: &SuperpixelPartition, params: FusionParams) -> Result<Self> {
        let n = partition.count();
        if scales.is_empty() || scales.iter().any(|s| s.len() != n) {
            return Err(Error::Shape(format!("expected per-scale vectors of length {n}")));
        }
        let graph = build_graph(partition);
        let mean = graph.mean_boundary();
        let mut neighbours = vec![Vec::new(); n];
        for &(a, b, len) in &graph.edges {
            let w = params.beta0 * len as f64 / mean;
            neighbours[a as usize].push((b as usize, w));
            neighbours[b as usize].push((a as usize, w));
        }
        let problem = Self {
            values: (0..n).map(|i| scales.iter().map(|s| s[i]).collect()).collect(),
            neighbours,
            params,
        };
        problem.validate()?;
        Ok(problem)
    }

    /// Pixel problem over equally sized maps with an 8-neighbourhood and `beta_ij = beta0`.
    pub fn from_pixel_maps<T: Scalar>(maps: &[FloatMap<T>], params: FusionParams) -> Result<Self> {
        let first = maps.first().ok_or_else(|| Error::invalid("no maps to fuse"))?;
        let (h, w) = first.dims();
        if maps.iter().any(|m| m.dims() != (h, w)) {
            return Err(Error::Shape("maps differ in size".into()));
        }
        let mut neighbours = vec![Vec::new(); h * w];
        for r in 0..h {
            for c in 0..w {
                for (dr, dc) in [(-1i64, -1i64), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)] {
                    let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                    if rr >= 0 && cc >= 0 && (rr as usize) < h && (cc as usize) < w {
                        neighbours[r * w + c].push((rr as usize * w + cc as usize, params.beta0));
                    }
                }
            }
        }
        let problem = Self {
            values: (0..h * w).map(|p| maps.iter().map(|m| m.values()[p].as_f64()).collect()).collect(),
            neighbours,
            params,
        };
        problem.validate()?;
        Ok(problem)
    }

    /// Undirected edge count.
    pub fn edge_count(&self) -> usize {
        self.neighbours.iter().map(Vec::len).sum::<usize>() / 2
    }
}

/// Global minimizer of the energy via one s-t min cut. Label 0 is the
/// source side.
pub fn graph_cut_minimize(problem: &FusionProblem) -> Result<Vec<u8>> {
    problem.validate()?;
    let n = problem.len();
    let mut g = MaxFlow::new(n);
    for i in 0..n {
        // Cutting source->i puts i on the sink side (label 1).
        g.add_terminal(i, problem.unary(i, 1), problem.unary(i, 0));
    }
    for (i, list) in problem.neighbours.iter().enumerate() {
        for &(j, b) in list {
            if i < j {
                let back = problem.neighbours[j]
                    .iter()
                    .find(|&&(k, _)| k == i)
                    .map_or(0.0, |&(_, w)| w);
                let cap = b + back;
                if cap > 0.0 {
                    g.add_edge(i, j, cap, cap);
                }
            }
        }
    }
    g.solve();
    Ok((0..n).map(|i| g.sink_side(i) as u8).collect())
}

/// Result of a fusion run.
#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    /// Pixel raster, 1 = tampered.
    pub mask: GroundTruthMask,
    /// Label per unit (superpixel or resized pixel).
    pub units: Vec<u8>,
    pub energy: f64,
}

fn check_maps<T: Scalar>(maps: &[FloatMap<T>]) -> Result<(usize, usize)> {
    let first = maps.first().ok_or_else(|| Error::invalid("no maps to fuse"))?;
    let dims = first.dims();
    if maps.iter().any(|m| m.dims() != dims) {
        return Err(Error::Shape("maps differ in size".into()));
    }
    Ok(dims)
}

/// Superpixel fusion on a precomputed partition.
pub fn fuse_on_partition<T: Scalar>(
    maps: &[FloatMap<T>],
    partition: &SuperpixelPartition,
    strategy: Strategy,
    params: FusionParams,
) -> Result<Decision> {
    check_maps(maps)?;
    let scales: Vec<Vec<f64>> = maps
        .par_iter()
        .map(|m| aggregate(m, partition, strategy, params.theta))
        .collect::<Result<_>>()?;
    let problem = FusionProblem::from_superpixels(&scales, partition, params)?;
    let units = graph_cut_minimize(&problem)?;
    let energy = problem.energy(&units);
    let (h, w) = partition.dims();
    let mask = GroundTruthMask::new(h, w, partition.labels().iter().map(|&l| units[l as usize]).collect())?;
    Ok(Decision { mask, units, energy })
}

/// SLIC on the image, per-scale aggregation, min-cut, paint-back.
pub fn fuse_superpixel<T: Scalar>(
    maps: &[FloatMap<T>],
    image: &ColorImage,
    strategy: Strategy,
    params: FusionParams,
    slic: &SlicParams,
) -> Result<(Decision, SuperpixelPartition)> {
    let dims = check_maps(maps)?;
    if dims != image.dims() {
        return Err(Error::Shape("maps and image differ in size".into()));
    }
    let partition = slic_segment(image, slic)?;
    let decision = fuse_on_partition(maps, &partition, strategy, params)?;
    Ok((decision, partition))
}

/// Downscale factor by image size class.
pub fn resize_factor(height: usize, width: usize) -> f64 {
    if width > 2000 && height > 2000 {
        0.1
    } else if width < 1000 && height < 1000 {
        0.5
    } else {
        0.25
    }
}

/// Output dims `(floor(h f), floor(w f))`, at least 1.
pub fn resized_dims(height: usize, width: usize) -> (usize, usize) {
    let f = resize_factor(height, width);
    let d = |n: usize| (((n as f64) * f).floor() as usize).max(1);
    (d(height), d(width))
}

/// Bilinear resampling to `(h, w)` with pixel-center alignment.
pub fn resample_bilinear<T: Scalar>(map: &FloatMap<T>, h: usize, w: usize) -> FloatMap<f64> {
    let (sh, sw) = map.dims();
    let axis = |out: usize, src: usize| -> Vec<(usize, usize, f64)> {
        let scale = src as f64 / out as f64;
        (0..out)
            .map(|o| {
                let x = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
                let x0 = x.floor() as usize;
                let x1 = (x0 + 1).min(src - 1);
                (x0, x1, x - x0 as f64)
            })
            .collect()
    };
    let rows = axis(h, sh);
    let cols = axis(w, sw);
    let values = rows
        .iter()
        .flat_map(|&(r0, r1, fy)| {
            cols.iter().map(move |&(c0, c1, fx)| {
                let g = |r: usize, c: usize| map.get(r, c).as_f64();
                let top = g(r0, c0) * (1.0 - fx) + g(r0, c1) * fx;
                let bottom = g(r1, c0) * (1.0 - fx) + g(r1, c1) * fx;
                (top * (1.0 - fy) + bottom * fy).clamp(0.0, 1.0)
            })
        })
        .collect();
    FloatMap::new(h, w, values).expect("interpolation stays in range")
}

pub fn resize_for_fusion<T: Scalar>(map: &FloatMap<T>) -> FloatMap<f64> {
    let (h, w) = resized_dims(map.height(), map.width());
    resample_bilinear(map, h, w)
}

/// Nearest-neighbour upscale of a binary raster.
pub fn upscale_nearest(labels: &[u8], sh: usize, sw: usize, h: usize, w: usize) -> Result<GroundTruthMask> {
    let pick = |o: usize, out: usize, src: usize| (((o as f64 + 0.5) * src as f64 / out as f64) as usize).min(src - 1);
    GroundTruthMask::new(
        h,
        w,
        (0..h)
            .flat_map(|r| {
                let sr = pick(r, h, sh);
                (0..w).map(move |c| labels[sr * sw + pick(c, w, sw)])
            })
            .collect(),
    )
}

/// Pixel-level fusion on resized maps, decision upscaled to full size.
pub fn fuse_resize<T: Scalar>(maps: &[FloatMap<T>], params: FusionParams) -> Result<Decision> {
    let (h, w) = check_maps(maps)?;
    let small: Vec<FloatMap<f64>> = maps.par_iter().map(resize_for_fusion).collect();
    let (sh, sw) = small[0].dims();
    let problem = FusionProblem::from_pixel_maps(&small, params)?;
    let units = graph_cut_minimize(&problem)?;
    let energy = problem.energy(&units);
    let mask = upscale_nearest(&units, sh, sw, h, w)?;
    Ok(Decision { mask, units, energy })
}
