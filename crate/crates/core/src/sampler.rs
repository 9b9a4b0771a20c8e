//! Training-patch generation: stride-grid candidates filtered by tamper
//! ratio, a per-image cap, a centered fallback for small tampered regions,
//! and an equal number of pristine windows per image.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::raster::{ColorImage, GroundTruthMask, PatchGeometry};

#[derive(Clone, Debug, PartialEq)]
pub struct SampleSpec {
    pub scale: usize,
    pub stride: usize,
    /// Inclusive lower bound on the tamper ratio of fake windows.
    pub ratio_lo: f64,
    /// Inclusive upper bound.
    pub ratio_hi: f64,
    /// Per-image cap on fake windows.
    pub cap: usize,
    pub seed: u64,
}

impl SampleSpec {
    pub fn new(scale: usize) -> Self {
        Self {
            scale,
            stride: 8,
            ratio_lo: 0.10,
            ratio_hi: 0.90,
            cap: 500,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scale == 0 || self.stride == 0 {
            return Err(Error::invalid("scale and stride must be at least 1"));
        }
        if !(0.0 <= self.ratio_lo && self.ratio_lo < self.ratio_hi && self.ratio_hi <= 1.0) {
            return Err(Error::invalid(format!(
                "ratio bounds [{}, {}] must satisfy 0 <= lo < hi <= 1",
                self.ratio_lo, self.ratio_hi
            )));
        }
        if self.cap == 0 {
            return Err(Error::invalid("per-image cap must be at least 1"));
        }
        Ok(())
    }

    fn in_band(&self, ratio: f64) -> bool {
        ratio >= self.ratio_lo && ratio <= self.ratio_hi
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Pristine,
    Fake,
}

impl Label {
    pub fn index(self) -> usize {
        match self {
            Label::Pristine => 0,
            Label::Fake => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Pristine => "pristine",
            Label::Fake => "fake",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PatchEntry {
    /// Index into [`PatchDataset::image_ids`].
    pub image: usize,
    pub row: usize,
    pub col: usize,
    pub scale: usize,
    pub label: Label,
}

/// Window origin `(row, col)`.
pub type Origin = (usize, usize);

/// Summed-area table over a mask for O(1) window counts.
pub struct MaskIntegral {
    height: usize,
    width: usize,
    table: Vec<u32>,
}

impl MaskIntegral {
    pub fn new(mask: &GroundTruthMask) -> Self {
        let (h, w) = mask.dims();
        let mut table = vec![0u32; (h + 1) * (w + 1)];
        for r in 0..h {
            let mut run = 0u32;
            for c in 0..w {
                run += mask.get(r, c) as u32;
                table[(r + 1) * (w + 1) + c + 1] = table[r * (w + 1) + c + 1] + run;
            }
        }
        Self {
            height: h,
            width: w,
            table,
        }
    }

    pub fn count(&self, row: usize, col: usize, scale: usize) -> u32 {
        let w = self.width + 1;
        let (r1, c1) = (row + scale, col + scale);
        self.table[r1 * w + c1] + self.table[row * w + col] - self.table[row * w + c1] - self.table[r1 * w + col]
    }

    pub fn ratio(&self, row: usize, col: usize, scale: usize) -> Result<f64> {
        PatchGeometry::new(scale, 1, row, col)?.check_bounds(self.height, self.width)?;
        Ok(self.count(row, col, scale) as f64 / (scale * scale) as f64)
    }
}

/// Fraction of tampered pixels in the `s x s` window at `origin`.
pub fn tamper_ratio(mask: &GroundTruthMask, origin: Origin, scale: usize) -> Result<f64> {
    let geom = PatchGeometry::new(scale, 1, origin.0, origin.1)?;
    geom.check_bounds(mask.height(), mask.width())?;
    let mut n = 0usize;
    for r in origin.0..origin.0 + scale {
        for c in origin.1..origin.1 + scale {
            n += mask.get(r, c) as usize;
        }
    }
    Ok(n as f64 / (scale * scale) as f64)
}

fn grid_origins(h: usize, w: usize, scale: usize, stride: usize) -> Vec<Origin> {
    if h < scale || w < scale {
        return Vec::new();
    }
    let rows = (0..=h - scale).step_by(stride);
    rows.flat_map(|r| (0..=w - scale).step_by(stride).map(move |c| (r, c)))
        .collect()
}

/// Uniform subset of exactly `k` items (order preserved).
fn choose<T: Copy>(items: &[T], k: usize, rng: &mut ChaCha8Rng) -> Vec<T> {
    if k >= items.len() {
        return items.to_vec();
    }
    let mut picked = index::sample(rng, items.len(), k).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| items[i]).collect()
}

/// Per-image RNG derived from the global seed and the image id, so images
/// can be sampled in any order or in parallel.
pub fn image_rng(seed: u64, image_id: &str, stream: &str) -> ChaCha8Rng {
    // FNV-1a over the id and stream name, mixed with the seed
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in image_id.bytes().chain([0xff]).chain(stream.bytes()) {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    ChaCha8Rng::seed_from_u64(z ^ (z >> 31))
}

fn check_dims(image: &ColorImage, mask: &GroundTruthMask) -> Result<()> {
    if image.dims() != mask.dims() {
        return Err(Error::DimensionMismatch {
            expected: image.dims(),
            actual: mask.dims(),
        });
    }
    Ok(())
}

/// Windows centered on tampered pixels, clamped into the image, kept when
/// their ratio is in band. Deduplicated by origin, in row-major order of
/// the generating pixel.
pub fn resample_centered(image: &ColorImage, mask: &GroundTruthMask, spec: &SampleSpec) -> Result<Vec<Origin>> {
    spec.validate()?;
    check_dims(image, mask)?;
    let (h, w) = mask.dims();
    let s = spec.scale;
    if h < s || w < s {
        return Ok(Vec::new());
    }
    let integral = MaskIntegral::new(mask);
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if !mask.get(r, c) {
                continue;
            }
            let origin = (
                r.saturating_sub(s / 2).min(h - s),
                c.saturating_sub(s / 2).min(w - s),
            );
            if !seen.insert(origin) {
                continue;
            }
            let ratio = integral.count(origin.0, origin.1, s) as f64 / (s * s) as f64;
            if spec.in_band(ratio) {
                out.push(origin);
            }
        }
    }
    Ok(out)
}

/// Fake windows for one image: in-band grid windows, capped at `spec.cap`,
/// with the centered fallback when the grid yields none.
pub fn sample_fake(
    image: &ColorImage,
    mask: &GroundTruthMask,
    spec: &SampleSpec,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Origin>> {
    spec.validate()?;
    check_dims(image, mask)?;
    let (h, w) = mask.dims();
    if mask.is_empty() || h < spec.scale || w < spec.scale {
        return Ok(Vec::new());
    }
    let integral = MaskIntegral::new(mask);
    let area = (spec.scale * spec.scale) as f64;
    let mut candidates: Vec<Origin> = grid_origins(h, w, spec.scale, spec.stride)
        .into_iter()
        .filter(|&(r, c)| spec.in_band(integral.count(r, c, spec.scale) as f64 / area))
        .collect();
    if candidates.is_empty() {
        candidates = resample_centered(image, mask, spec)?;
    }
    Ok(choose(&candidates, spec.cap, rng))
}

/// Up to `count` tamper-free windows: uniform without replacement from the
/// stride grid, topped up from arbitrary offsets when the grid runs out.
pub fn sample_pristine(
    image: &ColorImage,
    mask: &GroundTruthMask,
    spec: &SampleSpec,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Origin>> {
    spec.validate()?;
    check_dims(image, mask)?;
    let (h, w) = mask.dims();
    if count == 0 || h < spec.scale || w < spec.scale {
        return Ok(Vec::new());
    }
    let s = spec.scale;
    let integral = MaskIntegral::new(mask);
    let clean: Vec<Origin> = grid_origins(h, w, s, spec.stride)
        .into_iter()
        .filter(|&(r, c)| integral.count(r, c, s) == 0)
        .collect();
    if clean.len() >= count {
        return Ok(choose(&clean, count, rng));
    }
    let on_grid: BTreeSet<Origin> = clean.iter().copied().collect();
    let extra: Vec<Origin> = grid_origins(h, w, s, 1)
        .into_iter()
        .filter(|o| !on_grid.contains(o) && integral.count(o.0, o.1, s) == 0)
        .collect();
    let mut out = clean;
    let need = count - out.len();
    out.extend(choose(&extra, need, rng));
    out.sort_unstable();
    Ok(out)
}

/// Balanced fake and pristine origins for one image.
pub fn sample_image(
    image_id: &str,
    image: &ColorImage,
    mask: &GroundTruthMask,
    spec: &SampleSpec,
) -> Result<(Vec<Origin>, Vec<Origin>)> {
    let mut rng = image_rng(spec.seed, image_id, "sample");
    let mut fake = sample_fake(image, mask, spec, &mut rng)?;
    let pristine = sample_pristine(image, mask, spec, fake.len(), &mut rng)?;
    if pristine.len() < fake.len() {
        fake = choose(&fake, pristine.len(), &mut rng);
    }
    Ok((fake, pristine))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatchDataset {
    pub spec: SampleSpec,
    pub image_ids: Vec<String>,
    pub entries: Vec<PatchEntry>,
    /// Mean intensity per color channel over every sampled patch.
    pub channel_means: [f64; 3],
}

impl PatchDataset {
    /// Samples every image. `images[i]` pairs with `image_ids[i]`.
    pub fn build(spec: &SampleSpec, corpus: &[(String, ColorImage, GroundTruthMask)]) -> Result<Self> {
        use rayon::prelude::*;
        spec.validate()?;
        let per_image: Vec<Result<(Vec<Origin>, Vec<Origin>)>> = corpus
            .par_iter()
            .map(|(id, img, mask)| sample_image(id, img, mask, spec))
            .collect();
        let mut entries = Vec::new();
        for (i, res) in per_image.into_iter().enumerate() {
            let (fake, pristine) = res?;
            for (label, origins) in [(Label::Fake, fake), (Label::Pristine, pristine)] {
                entries.extend(origins.into_iter().map(|(row, col)| PatchEntry {
                    image: i,
                    row,
                    col,
                    scale: spec.scale,
                    label,
                }));
            }
        }
        let images: Vec<&ColorImage> = corpus.iter().map(|(_, img, _)| img).collect();
        let channel_means = channel_means(&entries, &images);
        Ok(Self {
            spec: spec.clone(),
            image_ids: corpus.iter().map(|(id, _, _)| id.clone()).collect(),
            entries,
            channel_means,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Manifest text: `#` header lines, then `image_id row col scale label`.
    pub fn to_manifest(&self) -> String {
        let s = &self.spec;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# patch-dataset v1 scale={} stride={} ratio_lo={} ratio_hi={} cap={} seed={}",
            s.scale, s.stride, s.ratio_lo, s.ratio_hi, s.cap, s.seed
        );
        let m = self.channel_means;
        let _ = writeln!(out, "# channel_means={:?} {:?} {:?}", m[0], m[1], m[2]);
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{} {} {} {} {}",
                self.image_ids[e.image],
                e.row,
                e.col,
                e.scale,
                e.label.name()
            );
        }
        out
    }

    pub fn from_manifest(text: &str) -> Result<Self> {
        let mut spec = None;
        let mut means = None;
        let mut image_ids: Vec<String> = Vec::new();
        let mut entries = Vec::new();
        let mut offset = 0u64;
        let parse_err = |offset: u64, message: String| Error::Parse { offset, message };
        for line in text.split_inclusive('\n') {
            let at = offset;
            offset += line.len() as u64;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("# patch-dataset v1") {
                let mut sp = SampleSpec::new(1);
                for kv in rest.split_whitespace() {
                    let (k, v) = kv
                        .split_once('=')
                        .ok_or_else(|| parse_err(at, format!("bad header field `{kv}`")))?;
                    let bad = |_| parse_err(at, format!("bad value in `{kv}`"));
                    match k {
                        "scale" => sp.scale = v.parse().map_err(bad)?,
                        "stride" => sp.stride = v.parse().map_err(bad)?,
                        "ratio_lo" => sp.ratio_lo = v.parse().map_err(|_| parse_err(at, kv.into()))?,
                        "ratio_hi" => sp.ratio_hi = v.parse().map_err(|_| parse_err(at, kv.into()))?,
                        "cap" => sp.cap = v.parse().map_err(bad)?,
                        "seed" => sp.seed = v.parse().map_err(|_| parse_err(at, kv.into()))?,
                        _ => return Err(parse_err(at, format!("unknown header field `{k}`"))),
                    }
                }
                spec = Some(sp);
                continue;
            }
            if let Some(rest) = line.strip_prefix("# channel_means=") {
                let vals: Vec<f64> = rest
                    .split_whitespace()
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| parse_err(at, "bad channel means".into()))?;
                if vals.len() != 3 {
                    return Err(parse_err(at, "expected three channel means".into()));
                }
                means = Some([vals[0], vals[1], vals[2]]);
                continue;
            }
            if line.starts_with('#') {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != 5 {
                return Err(parse_err(at, format!("expected 5 fields, got {}", toks.len())));
            }
            let num = |t: &str| t.parse::<usize>().map_err(|_| parse_err(at, format!("bad integer `{t}`")));
            let label = match toks[4] {
                "fake" => Label::Fake,
                "pristine" => Label::Pristine,
                other => return Err(parse_err(at, format!("bad label `{other}`"))),
            };
            let image = match image_ids.iter().rposition(|id| id == toks[0]) {
                Some(i) => i,
                None => {
                    image_ids.push(toks[0].to_string());
                    image_ids.len() - 1
                }
            };
            entries.push(PatchEntry {
                image,
                row: num(toks[1])?,
                col: num(toks[2])?,
                scale: num(toks[3])?,
                label,
            });
        }
        Ok(Self {
            spec: spec.ok_or_else(|| parse_err(0, "missing dataset header".into()))?,
            image_ids,
            entries,
            channel_means: means.ok_or_else(|| parse_err(0, "missing channel means".into()))?,
        })
    }
}

/// Per-channel mean over all pixels of all entries.
pub fn channel_means(entries: &[PatchEntry], images: &[&ColorImage]) -> [f64; 3] {
    let mut sums = [0u64; 3];
    let mut n = 0u64;
    for e in entries {
        let img = images[e.image];
        for r in e.row..e.row + e.scale {
            let row = &img.samples()[(r * img.width() + e.col) * 3..(r * img.width() + e.col + e.scale) * 3];
            for px in row.chunks_exact(3) {
                for ch in 0..3 {
                    sums[ch] += px[ch] as u64;
                }
            }
        }
        n += (e.scale * e.scale) as u64;
    }
    if n == 0 {
        return [0.0; 3];
    }
    sums.map(|s| s as f64 / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blank(h: usize, w: usize) -> ColorImage {
        ColorImage::from_fn(h, w, |r, c| [(r % 256) as u8, (c % 256) as u8, 7])
    }

    #[test]
    fn ratio_examples() {
        let full = GroundTruthMask::from_fn(64, 64, |_, _| true);
        assert_eq!(tamper_ratio(&full, (0, 0), 64).unwrap(), 1.0);
        let none = GroundTruthMask::from_fn(64, 64, |_, _| false);
        assert_eq!(tamper_ratio(&none, (0, 0), 64).unwrap(), 0.0);
        let half = GroundTruthMask::from_fn(64, 64, |r, _| r < 32);
        assert_eq!(tamper_ratio(&half, (0, 0), 64).unwrap(), 0.5);
        assert!(tamper_ratio(&half, (1, 0), 64).is_err());
    }

    #[test]
    fn integral_matches_direct_count() {
        let mask = GroundTruthMask::from_fn(23, 17, |r, c| (r * 7 + c * 3) % 5 == 0);
        let integral = MaskIntegral::new(&mask);
        for s in [1, 4, 9, 17] {
            for r in 0..=23 - s {
                for c in 0..=17 - s {
                    assert_eq!(
                        integral.ratio(r, c, s).unwrap(),
                        tamper_ratio(&mask, (r, c), s).unwrap()
                    );
                }
            }
        }
    }

    #[test]
    fn cap_limits_fake_windows() {
        // a wide horizontal stripe: many in-band windows
        let (h, w) = (400, 1200);
        let img = blank(h, w);
        let mask = GroundTruthMask::from_fn(h, w, |r, _| (180..220).contains(&r));
        let spec = SampleSpec::new(32);
        let integral = MaskIntegral::new(&mask);
        let qualifying = grid_origins(h, w, 32, 8)
            .into_iter()
            .filter(|&(r, c)| spec.in_band(integral.ratio(r, c, 32).unwrap()))
            .count();
        assert!(qualifying > 1000, "{qualifying}");
        let mut rng = image_rng(0, "a", "t");
        let fake = sample_fake(&img, &mask, &spec, &mut rng).unwrap();
        assert_eq!(fake.len(), 500);
        for &(r, c) in &fake {
            assert!(spec.in_band(tamper_ratio(&mask, (r, c), 32).unwrap()));
            assert_eq!((r % 8, c % 8), (0, 0));
        }
    }

    #[test]
    fn empty_mask_yields_nothing() {
        let img = blank(64, 64);
        let mask = GroundTruthMask::from_fn(64, 64, |_, _| false);
        let mut rng = image_rng(0, "a", "t");
        assert!(sample_fake(&img, &mask, &SampleSpec::new(32), &mut rng).unwrap().is_empty());
    }

    #[test]
    fn tiny_blob_triggers_centered_fallback() {
        let img = blank(128, 128);
        // 3x3 blob straddling the stride grid: each aligned 8x8 window sees
        // at most 4 px (6%), a centered one sees all 9 (14%)
        let mask = GroundTruthMask::from_fn(128, 128, |r, c| (63..66).contains(&r) && (63..66).contains(&c));
        let mut spec = SampleSpec::new(8);
        spec.stride = 8;
        // brute-force: no stride-aligned 8x8 window reaches 10%
        let grid_hits = grid_origins(128, 128, 8, 8)
            .into_iter()
            .filter(|&(r, c)| spec.in_band(tamper_ratio(&mask, (r, c), 8).unwrap()))
            .count();
        assert_eq!(grid_hits, 0);
        let mut rng = image_rng(0, "blob", "t");
        let fake = sample_fake(&img, &mask, &spec, &mut rng).unwrap();
        assert!(!fake.is_empty());
        for &(r, c) in &fake {
            let ratio = tamper_ratio(&mask, (r, c), 8).unwrap();
            assert!(spec.in_band(ratio));
            // window contains the blob center region
            assert!(r <= 63 && r + 8 >= 66 && c <= 63 && c + 8 >= 66);
        }
        assert_eq!(fake, resample_centered(&img, &mask, &spec).unwrap());
    }

    #[test]
    fn centered_window_examples() {
        let img = blank(64, 64);
        let spec = SampleSpec::new(10);
        // 40% of the centered 10x10 window
        let mask = GroundTruthMask::from_fn(64, 64, |r, c| (30..34).contains(&r) && (25..35).contains(&c));
        let out = resample_centered(&img, &mask, &spec).unwrap();
        assert!(out.contains(&(27, 25)));
        assert_eq!(tamper_ratio(&mask, (27, 25), 10).unwrap(), 0.4);
        for &(r, c) in &out {
            assert!(spec.in_band(tamper_ratio(&mask, (r, c), 10).unwrap()));
        }
        // fully covered window rejected
        let big = GroundTruthMask::from_fn(64, 64, |r, c| (10..50).contains(&r) && (10..50).contains(&c));
        let out = resample_centered(&img, &big, &spec).unwrap();
        assert!(!out.contains(&(25, 25)));
        // corner pixel clamps inside
        let corner = GroundTruthMask::from_fn(64, 64, |r, c| r < 2 && c < 2);
        let mut wide = SampleSpec::new(4);
        wide.ratio_lo = 0.1;
        let out = resample_centered(&img, &corner, &wide).unwrap();
        assert_eq!(out, vec![(0, 0)]);
    }

    #[test]
    fn pristine_count_zero() {
        let img = blank(64, 64);
        let mask = GroundTruthMask::from_fn(64, 64, |_, _| false);
        let mut rng = image_rng(0, "a", "t");
        assert!(sample_pristine(&img, &mask, &SampleSpec::new(16), 0, &mut rng).unwrap().is_empty());
    }

    #[test]
    fn short_pristine_supply_trims_fakes() {
        // clean area rows 0..32, cols 0..43: exactly 12 clean 32x32 windows
        let (h, w) = (64, 64);
        let img = blank(h, w);
        let mask = GroundTruthMask::from_fn(h, w, |r, c| !(r < 32 && c < 43));
        let spec = SampleSpec::new(32);
        let integral = MaskIntegral::new(&mask);
        let clean = grid_origins(h, w, 32, 1)
            .into_iter()
            .filter(|&(r, c)| integral.count(r, c, 32) == 0)
            .count();
        assert_eq!(clean, 12);
        let mut rng = image_rng(0, "x", "t");
        let p = sample_pristine(&img, &mask, &spec, 100, &mut rng).unwrap();
        assert_eq!(p.len(), 12);
        assert!(p.iter().all(|&(r, c)| tamper_ratio(&mask, (r, c), 32).unwrap() == 0.0));

        let mut spec = spec;
        spec.stride = 1;
        let (fake, pristine) = sample_image("x", &img, &mask, &spec).unwrap();
        assert!(fake.len() == 12 && pristine.len() == 12, "{} {}", fake.len(), pristine.len());
    }

    #[test]
    fn dataset_is_balanced_and_reproducible() {
        let corpus: Vec<_> = (0..3)
            .map(|i| {
                let img = blank(96, 96);
                let mask = GroundTruthMask::from_fn(96, 96, |r, c| r >= 20 + i * 5 && r < 60 && c >= 30 && c < 70);
                (format!("img{i}"), img, mask)
            })
            .collect();
        let mut spec = SampleSpec::new(32);
        spec.seed = 42;
        let a = PatchDataset::build(&spec, &corpus).unwrap();
        let b = PatchDataset::build(&spec, &corpus).unwrap();
        assert_eq!(a, b);
        for i in 0..3 {
            let fake = a.entries.iter().filter(|e| e.image == i && e.label == Label::Fake).count();
            let pristine = a.entries.iter().filter(|e| e.image == i && e.label == Label::Pristine).count();
            assert_eq!(fake, pristine);
            assert!(fake > 0 && fake <= 500);
        }
        let uniq: BTreeSet<_> = a.entries.iter().collect();
        assert_eq!(uniq.len(), a.entries.len());

        let text = a.to_manifest();
        let back = PatchDataset::from_manifest(&text).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn rng_streams_differ_by_image() {
        use rand::RngCore;
        let a = image_rng(1, "a", "s").next_u64();
        let b = image_rng(1, "b", "s").next_u64();
        let a2 = image_rng(1, "a", "s").next_u64();
        assert_ne!(a, b);
        assert_eq!(a, a2);
    }
}
