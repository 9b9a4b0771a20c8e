//! SLIC superpixels: k-means in (CIELAB, xy) with 2S x 2S search windows,
//! connectivity enforcement, and the superpixel adjacency graph.

use std::collections::BTreeMap;
use std::collections::VecDeque;
use std::path::Path;

use rayon::prelude::*;

use crate::codec::{ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::raster::ColorImage;

pub const DEFAULT_SUPERPIXELS: usize = 4000;
pub const DEFAULT_COMPACTNESS: f64 = 10.0;
pub const DEFAULT_ITERATIONS: usize = 10;

const MAGIC: &[u8; 4] = b"SPX1";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlicParams {
    /// Requested superpixel count.
    pub superpixels: usize,
    pub compactness: f64,
    pub iterations: usize,
}

impl Default for SlicParams {
    fn default() -> Self {
        Self {
            superpixels: DEFAULT_SUPERPIXELS,
            compactness: DEFAULT_COMPACTNESS,
            iterations: DEFAULT_ITERATIONS,
        }
    }
}

/// Label per pixel, `0..count`, every label non-empty.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SuperpixelPartition {
    height: usize,
    width: usize,
    labels: Vec<u32>,
    count: usize,
}

impl SuperpixelPartition {
    /// Validates that labels are `0..L` with none missing.
    pub fn new(height: usize, width: usize, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != height * width || labels.is_empty() {
            return Err(Error::Shape(format!("{} labels for {height}x{width}", labels.len())));
        }
        let count = *labels.iter().max().expect("non-empty") as usize + 1;
        let mut seen = vec![false; count];
        for &l in &labels {
            seen[l as usize] = true;
        }
        if let Some(l) = seen.iter().position(|s| !s) {
            return Err(Error::invalid(format!("superpixel label {l} is empty")));
        }
        Ok(Self {
            height,
            width,
            labels,
            count,
        })
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

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label(&self, row: usize, col: usize) -> u32 {
        self.labels[row * self.width + col]
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Pixel count per superpixel.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.count];
        for &l in &self.labels {
            sizes[l as usize] += 1;
        }
        sizes
    }

    /// Whether every superpixel is a single 4-connected component.
    pub fn is_connected(&self) -> bool {
        let (comps, _) = components(self.height, self.width, &self.labels);
        let n = comps.iter().max().map_or(0, |&c| c as usize + 1);
        n == self.count
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = ByteWriter::default();
        w.bytes(MAGIC);
        w.u32(self.height as u32);
        w.u32(self.width as u32);
        for &l in &self.labels {
            w.u32(l);
        }
        w.buf
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.magic(MAGIC)?;
        let h = r.u32()? as usize;
        let w = r.u32()? as usize;
        let at = r.offset();
        let raw = r.take(h.checked_mul(w).and_then(|n| n.checked_mul(4)).ok_or_else(|| Error::Parse {
            offset: at,
            message: "label count overflows".into(),
        })?)?;
        r.finish()?;
        let labels = raw
            .chunks_exact(4)
            .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        Self::new(h, w, labels).map_err(|e| Error::Parse {
            offset: at,
            message: e.to_string(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}

fn srgb_to_linear(v: u8) -> f64 {
    let c = v as f64 / 255.0;
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

/// sRGB to CIELAB under D65.
pub fn rgb_to_lab(px: [u8; 3]) -> [f64; 3] {
    let [r, g, b] = px.map(srgb_to_linear);
    let x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
    let y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
    let z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
    let f = |t: f64| {
        if t > 216.0 / 24389.0 {
            t.cbrt()
        } else {
            (24389.0 / 27.0 * t + 16.0) / 116.0
        }
    };
    let (fx, fy, fz) = (f(x / 0.95047), f(y), f(z / 1.08883));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

#[derive(Clone, Copy, Debug)]
struct Center {
    lab: [f64; 3],
    y: f64,
    x: f64,
}

fn lab_dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

fn seeds(lab: &[[f64; 3]], h: usize, w: usize, step: f64) -> (Vec<Center>, usize, usize) {
    let nx = ((w as f64 / step).round() as usize).max(1);
    let ny = ((h as f64 / step).round() as usize).max(1);
    let (sx, sy) = (w as f64 / nx as f64, h as f64 / ny as f64);
    let at = |r: usize, c: usize| &lab[r * w + c];
    let gradient = |r: usize, c: usize| {
        let (r0, r1) = (r.saturating_sub(1), (r + 1).min(h - 1));
        let (c0, c1) = (c.saturating_sub(1), (c + 1).min(w - 1));
        lab_dist2(at(r, c1), at(r, c0)) + lab_dist2(at(r1, c), at(r0, c))
    };
    let mut centers = Vec::with_capacity(nx * ny);
    for gy in 0..ny {
        for gx in 0..nx {
            let r = (((gy as f64 + 0.5) * sy) as usize).min(h - 1);
            let c = (((gx as f64 + 0.5) * sx) as usize).min(w - 1);
            let mut best = (gradient(r, c), r, c);
            for rr in r.saturating_sub(1)..=(r + 1).min(h - 1) {
                for cc in c.saturating_sub(1)..=(c + 1).min(w - 1) {
                    let g = gradient(rr, cc);
                    if g < best.0 {
                        best = (g, rr, cc);
                    }
                }
            }
            let (_, r, c) = best;
            centers.push(Center {
                lab: *at(r, c),
                y: r as f64,
                x: c as f64,
            });
        }
    }
    (centers, nx, ny)
}

/// Runs SLIC and enforces connectivity. Deterministic: distance ties go to
/// the lower center index.
pub fn slic_segment(image: &ColorImage, params: &SlicParams) -> Result<SuperpixelPartition> {
    let (h, w) = image.dims();
    let n = h * w;
    if params.superpixels == 0 || params.superpixels > n {
        return Err(Error::invalid(format!(
            "{} superpixels requested for {n} pixels",
            params.superpixels
        )));
    }
    if !(params.compactness > 0.0 && params.compactness.is_finite()) {
        return Err(Error::invalid("compactness must be positive"));
    }
    let lab: Vec<[f64; 3]> = image
        .samples()
        .par_chunks_exact(3)
        .map(|p| rgb_to_lab([p[0], p[1], p[2]]))
        .collect();
    let step = (n as f64 / params.superpixels as f64).sqrt();
    let (mut centers, nx, ny) = seeds(&lab, h, w, step);
    let (sx, sy) = (w as f64 / nx as f64, h as f64 / ny as f64);
    let mut labels: Vec<u32> = (0..n)
        .map(|p| {
            let gy = (((p / w) as f64 / sy) as usize).min(ny - 1);
            let gx = (((p % w) as f64 / sx) as usize).min(nx - 1);
            (gy * nx + gx) as u32
        })
        .collect();
    let weight = (params.compactness / step).powi(2);

    for _ in 0..params.iterations {
        // Centers whose search window reaches each row, in index order.
        let mut by_row: Vec<Vec<u32>> = vec![Vec::new(); h];
        for (k, c) in centers.iter().enumerate() {
            let r0 = (c.y - step).floor().max(0.0) as usize;
            let r1 = ((c.y + step).ceil() as usize).min(h - 1);
            for row in by_row.iter_mut().take(r1 + 1).skip(r0) {
                row.push(k as u32);
            }
        }
        labels.par_chunks_mut(w).enumerate().for_each(|(r, row)| {
            let mut best = vec![f64::INFINITY; w];
            for &k in &by_row[r] {
                let c = &centers[k as usize];
                let c0 = (c.x - step).floor().max(0.0) as usize;
                let c1 = ((c.x + step).ceil() as usize).min(w - 1);
                let dy2 = (r as f64 - c.y).powi(2);
                for col in c0..=c1 {
                    let d = lab_dist2(&lab[r * w + col], &c.lab) + (dy2 + (col as f64 - c.x).powi(2)) * weight;
                    if d < best[col] {
                        best[col] = d;
                        row[col] = k;
                    }
                }
            }
        });
        let mut acc = vec![[0.0f64; 6]; centers.len()];
        for (p, &l) in labels.iter().enumerate() {
            let a = &mut acc[l as usize];
            let px = &lab[p];
            a[0] += px[0];
            a[1] += px[1];
            a[2] += px[2];
            a[3] += (p / w) as f64;
            a[4] += (p % w) as f64;
            a[5] += 1.0;
        }
        for (c, a) in centers.iter_mut().zip(&acc) {
            if a[5] > 0.0 {
                *c = Center {
                    lab: [a[0] / a[5], a[1] / a[5], a[2] / a[5]],
                    y: a[3] / a[5],
                    x: a[4] / a[5],
                };
            }
        }
    }
    Ok(enforce_connectivity(h, w, &labels, n as f64 / params.superpixels as f64))
}

/// 4-connected components of equal labels, numbered in raster order of
/// their first pixel. Returns the component per pixel and the sizes.
fn components(h: usize, w: usize, labels: &[u32]) -> (Vec<u32>, Vec<usize>) {
    let mut comp = vec![u32::MAX; h * w];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..h * w {
        if comp[start] != u32::MAX {
            continue;
        }
        let id = sizes.len() as u32;
        let l = labels[start];
        comp[start] = id;
        queue.push_back(start);
        let mut size = 0;
        while let Some(p) = queue.pop_front() {
            size += 1;
            let (r, c) = (p / w, p % w);
            let mut visit = |q: usize| {
                if comp[q] == u32::MAX && labels[q] == l {
                    comp[q] = id;
                    queue.push_back(q);
                }
            };
            if r > 0 {
                visit(p - w);
            }
            if r + 1 < h {
                visit(p + w);
            }
            if c > 0 {
                visit(p - 1);
            }
            if c + 1 < w {
                visit(p + 1);
            }
        }
        sizes.push(size);
    }
    (comp, sizes)
}

struct UnionFind {
    parent: Vec<u32>,
    size: Vec<usize>,
}

impl UnionFind {
    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }

    /// Merges `small` into `big`; `big` stays the root.
    fn merge_into(&mut self, small: u32, big: u32) {
        self.parent[small as usize] = big;
        self.size[big as usize] += self.size[small as usize];
    }
}

/// Splits labels into 4-connected regions and merges every region smaller
/// than a quarter of `expected_size` into its largest neighbouring region
/// (ties to the region met first in raster order), repeating until no small
/// region with a neighbour remains. Output labels are numbered in raster
/// order of first appearance.
pub fn enforce_connectivity(height: usize, width: usize, labels: &[u32], expected_size: f64) -> SuperpixelPartition {
    let (h, w) = (height, width);
    let (comp, sizes) = components(h, w, labels);
    let min_size = expected_size / 4.0;
    let mut uf = UnionFind {
        parent: (0..sizes.len() as u32).collect(),
        size: sizes,
    };
    loop {
        let roots: Vec<u32> = comp.iter().map(|&c| uf.find(c)).collect();
        let mut neighbours: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        let mut add = |a: u32, b: u32, uf: &UnionFind| {
            if a != b && (uf.size[a as usize] as f64) < min_size {
                neighbours.entry(a).or_default().push(b);
            }
        };
        for p in 0..h * w {
            let (r, c) = (p / w, p % w);
            if c + 1 < w {
                add(roots[p], roots[p + 1], &uf);
                add(roots[p + 1], roots[p], &uf);
            }
            if r + 1 < h {
                add(roots[p], roots[p + w], &uf);
                add(roots[p + w], roots[p], &uf);
            }
        }
        // Root ids are component ids, which follow raster order.
        let mut merged = false;
        for (small, list) in neighbours {
            let a = uf.find(small);
            if uf.size[a as usize] as f64 >= min_size {
                continue;
            }
            let mut best: Option<u32> = None;
            for &b in &list {
                let b = uf.find(b);
                if b == a {
                    continue;
                }
                best = match best {
                    None => Some(b),
                    Some(cur) => {
                        let (sb, sc) = (uf.size[b as usize], uf.size[cur as usize]);
                        if sb > sc || (sb == sc && b < cur) {
                            Some(b)
                        } else {
                            Some(cur)
                        }
                    }
                };
            }
            if let Some(b) = best {
                uf.merge_into(a, b);
                merged = true;
            }
        }
        if !merged {
            break;
        }
    }
    let mut relabel = vec![u32::MAX; uf.parent.len()];
    let mut next = 0u32;
    let mut out = Vec::with_capacity(h * w);
    for &c in &comp {
        let r = uf.find(c) as usize;
        if relabel[r] == u32::MAX {
            relabel[r] = next;
            next += 1;
        }
        out.push(relabel[r]);
    }
    SuperpixelPartition {
        height: h,
        width: w,
        labels: out,
        count: next as usize,
    }
}

/// Superpixel adjacency with shared boundary lengths.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdjacencyGraph {
    pub nodes: usize,
    /// `(l, l', length)` with `l < l'`, sorted.
    pub edges: Vec<(u32, u32, u32)>,
}

impl AdjacencyGraph {
    /// Neighbour lists with boundary lengths, both directions.
    pub fn neighbours(&self) -> Vec<Vec<(u32, u32)>> {
        let mut out = vec![Vec::new(); self.nodes];
        for &(a, b, len) in &self.edges {
            out[a as usize].push((b, len));
            out[b as usize].push((a, len));
        }
        out
    }

    pub fn mean_boundary(&self) -> f64 {
        if self.edges.is_empty() {
            return 0.0;
        }
        self.edges.iter().map(|e| e.2 as f64).sum::<f64>() / self.edges.len() as f64
    }
}

/// Edges between superpixels with 4-adjacent pixels; the length counts the
/// adjacent pixel pairs across the boundary.
pub fn build_graph(partition: &SuperpixelPartition) -> AdjacencyGraph {
    let (h, w) = partition.dims();
    let l = partition.labels();
    let mut lengths: BTreeMap<(u32, u32), u32> = BTreeMap::new();
    let mut add = |a: u32, b: u32| {
        if a != b {
            *lengths.entry((a.min(b), a.max(b))).or_default() += 1;
        }
    };
    for r in 0..h {
        for c in 0..w {
            let p = r * w + c;
            if c + 1 < w {
                add(l[p], l[p + 1]);
            }
            if r + 1 < h {
                add(l[p], l[p + w]);
            }
        }
    }
    AdjacencyGraph {
        nodes: partition.count(),
        edges: lengths.into_iter().map(|((a, b), n)| (a, b, n)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lab_reference_colours() {
        let white = rgb_to_lab([255, 255, 255]);
        assert!((white[0] - 100.0).abs() < 1e-3 && white[1].abs() < 1e-2 && white[2].abs() < 1e-2);
        assert_eq!(rgb_to_lab([0, 0, 0]), [0.0, 0.0, 0.0]);
        let red = rgb_to_lab([255, 0, 0]);
        assert!((red[0] - 53.24).abs() < 0.01 && (red[1] - 80.09).abs() < 0.01 && (red[2] - 67.20).abs() < 0.01);
    }

    #[test]
    fn stray_pixel_is_absorbed() {
        let mut labels = vec![0u32; 25];
        labels[12] = 1;
        let p = enforce_connectivity(5, 5, &labels, 25.0);
        assert_eq!(p.count(), 1);
    }

    #[test]
    fn connected_partition_is_unchanged() {
        let labels: Vec<u32> = (0..100).map(|p| if p % 10 < 5 { 0 } else { 1 }).collect();
        let p = enforce_connectivity(10, 10, &labels, 50.0);
        assert_eq!(p.labels(), &labels[..]);
    }

    #[test]
    fn split_label_becomes_two_regions() {
        // label 0 on both sides of a label-1 column
        let labels: Vec<u32> = (0..36).map(|p| if p % 6 == 2 { 1 } else { 0 }).collect();
        let p = enforce_connectivity(6, 6, &labels, 4.0);
        assert_eq!(p.count(), 3);
        assert!(p.is_connected());
    }

    #[test]
    fn label_raster_round_trip() {
        let labels: Vec<u32> = (0..12).map(|p| (p / 4) as u32).collect();
        let p = SuperpixelPartition::new(3, 4, labels).unwrap();
        let bytes = p.encode();
        assert_eq!(&bytes[..4], b"SPX1");
        assert_eq!(SuperpixelPartition::decode(&bytes).unwrap(), p);
        assert!(SuperpixelPartition::decode(&bytes[..bytes.len() - 1]).is_err());
        assert!(SuperpixelPartition::new(1, 3, vec![0, 2, 2]).is_err());
    }

    #[test]
    fn graph_counts() {
        let labels: Vec<u32> = (0..100).map(|p| if p % 10 < 5 { 0 } else { 1 }).collect();
        let g = build_graph(&SuperpixelPartition::new(10, 10, labels).unwrap());
        assert_eq!(g.edges, vec![(0, 1, 10)]);
        let one = build_graph(&SuperpixelPartition::new(4, 4, vec![0; 16]).unwrap());
        assert!(one.edges.is_empty());
    }
}
