//! The 90-kernel base layer: fixed SRM residual kernels distributed over
//! color channels, or learnable constrained kernels.
//!
//! All kernels are applied by 2-D cross-correlation:
//! `out(y, x) = sum_{r,c in -2..=2} f(r, c) * in(y + 2 + r, x + 2 + c)`,
//! so the response to a unit impulse is the kernel reflected about its center.
//!
//! The SRM table order is a repository convention (version 1):
//!
//! | index  | kernels                                              |
//! |--------|------------------------------------------------------|
//! | 1-8    | first order, neighbor +1 at E W S N SE NW SW NE       |
//! | 9-12   | second order `[1 -2 1]`: horizontal, vertical, diag, anti-diag |
//! | 13-20  | third order `[1 -3 3 -1]`, same eight directions as 1-8 |
//! | 21     | SQUARE 3x3                                           |
//! | 22     | SQUARE 5x5                                           |
//! | 23-26  | EDGE 3x3, rotated by 0, 90, 180, 270 degrees          |
//! | 27-30  | EDGE 5x5, rotated by 0, 90, 180, 270 degrees          |

use rand::Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::raster::ColorImage;
use crate::scalar::Scalar;

pub const KERNEL_SIDE: usize = 5;
pub const KERNEL_LEN: usize = KERNEL_SIDE * KERNEL_SIDE;
pub const FEATURE_MAPS: usize = 30;
pub const BANK_SIZE: usize = FEATURE_MAPS * 3;
pub const SRM_COUNT: usize = 30;
const CENTER: usize = KERNEL_LEN / 2;

/// Version tag of the embedded SRM table.
pub const SRM_TABLE_VERSION: u32 = 1;
/// SHA-256 of [`format_kernel_table`] applied to the embedded SRM table.
pub const SRM_TABLE_SHA256: &str =
    "cfad3a0d995627731ef363aae8b9066207465d16f403d3b346969e759a3aefa5";

/// 5x5 kernel stored row-major; `at(r, c)` uses center-relative indices.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Kernel5x5<T> {
    pub weights: [T; KERNEL_LEN],
}

impl<T: Scalar> Kernel5x5<T> {
    pub fn zeros() -> Self {
        Self {
            weights: [T::zero(); KERNEL_LEN],
        }
    }

    fn index(r: isize, c: isize) -> usize {
        debug_assert!((-2..=2).contains(&r) && (-2..=2).contains(&c));
        ((r + 2) as usize) * KERNEL_SIDE + (c + 2) as usize
    }

    pub fn at(&self, r: isize, c: isize) -> T {
        self.weights[Self::index(r, c)]
    }

    pub fn set(&mut self, r: isize, c: isize, v: T) {
        self.weights[Self::index(r, c)] = v;
    }

    pub fn center(&self) -> T {
        self.at(0, 0)
    }

    pub fn sum(&self) -> T {
        self.weights.iter().copied().sum()
    }

    pub fn off_center_sum(&self) -> T {
        self.weights
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != CENTER)
            .map(|(_, &v)| v)
            .sum()
    }

    pub fn cast<U: Scalar>(&self) -> Kernel5x5<U> {
        Kernel5x5 {
            weights: self.weights.map(|v| U::of(v.as_f64())),
        }
    }

    /// Projects onto the constraint set: center `-1`, off-center sum `1`.
    ///
    /// The rescale runs in f64; after rounding to `T` the leftover of the
    /// off-center sum is folded into the largest off-center entry.
    pub fn constrain(&self) -> Result<Self> {
        let wide = self.weights.map(|v| v.as_f64());
        let off = self.off_center_sum_f64();
        if off.abs() < 1e-12 {
            return Err(Error::DegenerateFilter(off));
        }
        let mut out = Kernel5x5 {
            weights: wide.map(|v| T::of(v / off)),
        };
        out.weights[CENTER] = -T::one();
        let largest = (0..KERNEL_LEN)
            .filter(|&i| i != CENTER)
            .max_by(|&a, &b| {
                out.weights[a]
                    .abs()
                    .partial_cmp(&out.weights[b].abs())
                    .expect("finite weights")
                    .then(b.cmp(&a))
            })
            .expect("24 off-center entries");
        for _ in 0..3 {
            let residual = 1.0 - out.off_center_sum_f64();
            let mut next = out;
            next.weights[largest] = T::of(out.weights[largest].as_f64() + residual);
            if (1.0 - next.off_center_sum_f64()).abs() >= residual.abs() {
                break;
            }
            out = next;
        }
        Ok(out)
    }

    fn off_center_sum_f64(&self) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != CENTER)
            .map(|(_, v)| v.as_f64())
            .sum()
    }

    /// Whether the constraint holds within `tol`.
    pub fn is_constrained(&self, tol: f64) -> bool {
        (self.center().as_f64() + 1.0).abs() < tol && (self.off_center_sum_f64() - 1.0).abs() < tol
    }
}

/// Kernel triple assigned to feature map `j` (1-based): returns `k` and the
/// 1-based SRM kernel indices `(3k-2, 3k-1, 3k)`.
pub fn srm_assignment(j: usize) -> Result<(usize, [usize; 3])> {
    if !(1..=FEATURE_MAPS).contains(&j) {
        return Err(Error::FeatureIndex(j));
    }
    let k = (j - 1) % 10 + 1;
    Ok((k, [3 * k - 2, 3 * k - 1, 3 * k]))
}

const DIRECTIONS: [(isize, isize); 8] = [
    (0, 1),
    (0, -1),
    (1, 0),
    (-1, 0),
    (1, 1),
    (-1, -1),
    (1, -1),
    (-1, 1),
];

const SQUARE3: [[i32; 3]; 3] = [[-1, 2, -1], [2, -4, 2], [-1, 2, -1]];
const EDGE3: [[i32; 3]; 3] = [[-1, 2, -1], [2, -4, 2], [0, 0, 0]];
const SQUARE5: [[i32; 5]; 5] = [
    [-1, 2, -2, 2, -1],
    [2, -6, 8, -6, 2],
    [-2, 8, -12, 8, -2],
    [2, -6, 8, -6, 2],
    [-1, 2, -2, 2, -1],
];
const EDGE5: [[i32; 5]; 5] = [
    [-1, 2, -2, 2, -1],
    [2, -6, 8, -6, 2],
    [-2, 8, -12, 8, -2],
    [0, 0, 0, 0, 0],
    [0, 0, 0, 0, 0],
];

fn embed<const N: usize>(m: &[[i32; N]; N], quarter_turns: usize) -> [i32; KERNEL_LEN] {
    let half = (N / 2) as isize;
    let mut out = [0; KERNEL_LEN];
    for (i, row) in m.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            let (mut r, mut c) = (i as isize - half, j as isize - half);
            for _ in 0..quarter_turns {
                (r, c) = (c, -r);
            }
            out[((r + 2) * 5 + (c + 2)) as usize] = v;
        }
    }
    out
}

/// The 30 SRM residual kernels as integers, zero-padded to 5x5.
pub fn srm_table() -> [[i32; KERNEL_LEN]; SRM_COUNT] {
    let mut table = [[0; KERNEL_LEN]; SRM_COUNT];
    let put = |k: &mut [i32; KERNEL_LEN], r: isize, c: isize, v: i32| {
        k[((r + 2) * 5 + (c + 2)) as usize] = v;
    };
    for (i, &(dr, dc)) in DIRECTIONS.iter().enumerate() {
        put(&mut table[i], 0, 0, -1);
        put(&mut table[i], dr, dc, 1);
    }
    for (i, &(dr, dc)) in [(0, 1), (1, 0), (1, 1), (1, -1)].iter().enumerate() {
        let k = &mut table[8 + i];
        put(k, -dr, -dc, 1);
        put(k, 0, 0, -2);
        put(k, dr, dc, 1);
    }
    for (i, &(dr, dc)) in DIRECTIONS.iter().enumerate() {
        let k = &mut table[12 + i];
        put(k, -dr, -dc, 1);
        put(k, 0, 0, -3);
        put(k, dr, dc, 3);
        put(k, 2 * dr, 2 * dc, -1);
    }
    table[20] = embed(&SQUARE3, 0);
    table[21] = embed(&SQUARE5, 0);
    for t in 0..4 {
        table[22 + t] = embed(&EDGE3, t);
        table[26 + t] = embed(&EDGE5, t);
    }
    table
}

/// SRM kernel `index` (1-based) as reals.
pub fn srm_kernel<T: Scalar>(index: usize) -> Kernel5x5<T> {
    let raw = srm_table()[index - 1];
    Kernel5x5 {
        weights: raw.map(|v| T::of(v as f64)),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BankVariant {
    /// Frozen SRM kernels.
    FixedSrm,
    /// Learnable constrained kernels seeded from the SRM assignment.
    ConstrainedSrm,
    /// Learnable constrained kernels with Gaussian initialization.
    ConstrainedGaussian,
}

impl BankVariant {
    pub fn is_learnable(self) -> bool {
        !matches!(self, BankVariant::FixedSrm)
    }

    pub fn name(self) -> &'static str {
        match self {
            BankVariant::FixedSrm => "srm",
            BankVariant::ConstrainedSrm => "c-srm",
            BankVariant::ConstrainedGaussian => "c-gau",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "srm" => Ok(BankVariant::FixedSrm),
            "c-srm" => Ok(BankVariant::ConstrainedSrm),
            "c-gau" => Ok(BankVariant::ConstrainedGaussian),
            other => Err(Error::invalid(format!("unknown filter variant `{other}`"))),
        }
    }
}

/// 90 kernels as 30 triples; kernel `(j, ch)` is at `3 * j + ch` (0-based).
#[derive(Clone, Debug, PartialEq)]
pub struct BaseFilterBank<T> {
    pub variant: BankVariant,
    pub kernels: Vec<Kernel5x5<T>>,
}

impl<T: Scalar> BaseFilterBank<T> {
    pub fn kernel(&self, feature: usize, channel: usize) -> &Kernel5x5<T> {
        &self.kernels[feature * 3 + channel]
    }

    /// Flattened weights in `[feature][channel][5][5]` order.
    pub fn weights(&self) -> Vec<T> {
        self.kernels.iter().flat_map(|k| k.weights).collect()
    }

    pub fn from_weights(variant: BankVariant, weights: &[T]) -> Result<Self> {
        if weights.len() != BANK_SIZE * KERNEL_LEN {
            return Err(Error::Shape(format!(
                "{} weights for a {BANK_SIZE}-kernel bank",
                weights.len()
            )));
        }
        let kernels = weights
            .chunks_exact(KERNEL_LEN)
            .map(|c| {
                let mut w = [T::zero(); KERNEL_LEN];
                w.copy_from_slice(c);
                Kernel5x5 { weights: w }
            })
            .collect();
        Ok(Self { variant, kernels })
    }

    pub fn constrain_all(&mut self) -> Result<()> {
        for k in self.kernels.iter_mut() {
            *k = k.constrain()?;
        }
        Ok(())
    }
}

/// Fixed SRM bank arranged by [`srm_assignment`].
pub fn srm_bank<T: Scalar>() -> BaseFilterBank<T> {
    BaseFilterBank {
        variant: BankVariant::FixedSrm,
        kernels: srm_triples(),
    }
}

fn srm_triples<T: Scalar>() -> Vec<Kernel5x5<T>> {
    let mut kernels = Vec::with_capacity(BANK_SIZE);
    for j in 1..=FEATURE_MAPS {
        let (_, idx) = srm_assignment(j).expect("j in range");
        kernels.extend(idx.iter().map(|&i| srm_kernel::<T>(i)));
    }
    kernels
}

/// Learnable bank initialized from the SRM triples, then projected.
pub fn constrained_srm_bank<T: Scalar>() -> BaseFilterBank<T> {
    let mut bank = BaseFilterBank {
        variant: BankVariant::ConstrainedSrm,
        kernels: srm_triples(),
    };
    bank.constrain_all().expect("SRM kernels have non-zero centers");
    bank
}

/// Learnable bank with zero-mean Gaussian entries, then projected. Draws
/// whose off-center sum is small relative to their largest entry are
/// redrawn so the projected weights stay representable at 32 bits.
pub fn constrained_gaussian_bank<T: Scalar, R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> BaseFilterBank<T> {
    let normal = Normal::new(0.0, sigma).expect("sigma positive");
    let mut kernels = Vec::with_capacity(BANK_SIZE);
    while kernels.len() < BANK_SIZE {
        let k = Kernel5x5 {
            weights: std::array::from_fn(|_| T::of(normal.sample(rng))),
        };
        let off = k.off_center_sum().as_f64();
        let peak = k.weights.iter().map(|v| v.as_f64().abs()).fold(0.0, f64::max);
        if off.abs() * 4.0 >= peak {
            if let Ok(k) = k.constrain() {
                kernels.push(k);
            }
        }
    }
    BaseFilterBank {
        variant: BankVariant::ConstrainedGaussian,
        kernels,
    }
}

/// Thirty feature maps of side `side - 4`, stored `[feature][row][col]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStack<T> {
    pub side: usize,
    pub values: Vec<T>,
}

impl<T: Scalar> FeatureStack<T> {
    pub fn feature(&self, j: usize) -> &[T] {
        let plane = self.side * self.side;
        &self.values[j * plane..(j + 1) * plane]
    }
}

/// Filters a square planar `[3][side][side]` input with the bank.
pub fn apply_bank_planar<T: Scalar>(input: &[T], side: usize, bank: &BaseFilterBank<T>) -> Result<FeatureStack<T>> {
    if side < KERNEL_SIDE {
        return Err(Error::DimensionTooSmall {
            height: side,
            width: side,
            scale: KERNEL_SIDE,
        });
    }
    if input.len() != 3 * side * side {
        return Err(Error::Shape(format!(
            "planar input of {} values for side {side}",
            input.len()
        )));
    }
    let out_side = side - 4;
    let plane = out_side * out_side;
    let mut values = vec![T::zero(); FEATURE_MAPS * plane];
    for j in 0..FEATURE_MAPS {
        let out = &mut values[j * plane..(j + 1) * plane];
        for ch in 0..3 {
            let src = &input[ch * side * side..(ch + 1) * side * side];
            let k = bank.kernel(j, ch);
            for (ki, &w) in k.weights.iter().enumerate() {
                if w == T::zero() {
                    continue;
                }
                let (kr, kc) = (ki / KERNEL_SIDE, ki % KERNEL_SIDE);
                for y in 0..out_side {
                    let row = &src[(y + kr) * side + kc..(y + kr) * side + kc + out_side];
                    let dst = &mut out[y * out_side..(y + 1) * out_side];
                    for (d, &s) in dst.iter_mut().zip(row) {
                        *d += w * s;
                    }
                }
            }
        }
    }
    Ok(FeatureStack {
        side: out_side,
        values,
    })
}

/// Filters a color patch with the bank (raw intensities, no centering).
pub fn apply_bank<T: Scalar>(patch: &ColorImage, bank: &BaseFilterBank<T>) -> Result<FeatureStack<T>> {
    if patch.height() != patch.width() {
        return Err(Error::Shape("base filters expect square patches".into()));
    }
    let side = patch.height();
    if side < KERNEL_SIDE {
        return Err(Error::DimensionTooSmall {
            height: side,
            width: side,
            scale: KERNEL_SIDE,
        });
    }
    let mut planar = vec![T::zero(); 3 * side * side];
    patch.write_planar(0, 0, side, &[T::zero(); 3], &mut planar);
    apply_bank_planar(&planar, side, bank)
}

/// Plain-text kernel table: one 5-line block per kernel, blank-line separated.
pub fn format_kernel_table<T: Scalar>(kernels: &[Kernel5x5<T>]) -> String {
    let mut out = String::new();
    for (i, k) in kernels.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&format!("# kernel {}\n", i + 1));
        for r in 0..KERNEL_SIDE {
            let row: Vec<String> = (0..KERNEL_SIDE)
                .map(|c| format!("{}", k.weights[r * KERNEL_SIDE + c]))
                .collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
    }
    out
}

pub fn parse_kernel_table(text: &str) -> Result<Vec<Kernel5x5<f64>>> {
    let mut kernels = Vec::new();
    let mut rows: Vec<f64> = Vec::new();
    let mut offset = 0u64;
    let flush = |rows: &mut Vec<f64>, kernels: &mut Vec<Kernel5x5<f64>>, at: u64| -> Result<()> {
        if rows.is_empty() {
            return Ok(());
        }
        if rows.len() != KERNEL_LEN {
            return Err(Error::Parse {
                offset: at,
                message: format!("kernel block has {} values, expected 25", rows.len()),
            });
        }
        let mut w = [0.0; KERNEL_LEN];
        w.copy_from_slice(rows);
        kernels.push(Kernel5x5 { weights: w });
        rows.clear();
        Ok(())
    };
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            flush(&mut rows, &mut kernels, offset)?;
        } else if !trimmed.starts_with('#') {
            for tok in trimmed.split_whitespace() {
                let v: f64 = tok.parse().map_err(|_| Error::Parse {
                    offset,
                    message: format!("`{tok}` is not a number"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        offset,
                        message: "non-finite kernel weight".into(),
                    });
                }
                rows.push(v);
            }
        }
        offset += line.len() as u64;
    }
    flush(&mut rows, &mut kernels, offset)?;
    Ok(kernels)
}

/// Hex SHA-256 of the formatted SRM table.
pub fn srm_table_checksum() -> String {
    let kernels: Vec<Kernel5x5<f64>> = (1..=SRM_COUNT).map(srm_kernel).collect();
    let digest = Sha256::digest(format_kernel_table(&kernels).as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
