use super::layers::{pool_out, Activation};
use crate::error::{Error, Result};
use crate::filters::{BankVariant, FEATURE_MAPS, KERNEL_SIDE};

/// Scales used by the multi-scale detector set.
pub const DEFAULT_SCALES: [usize; 5] = [32, 48, 64, 96, 128];

/// Block pooling: 5x5 average, stride 2, padding 2 (halves the side, rounding up).
pub const POOL_KERNEL: usize = 5;
pub const POOL_STRIDE: usize = 2;
pub const POOL_PAD: usize = 2;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockSpec {
    /// Odd convolution side; padded to keep the spatial size.
    pub kernel: usize,
    pub out_channels: usize,
    pub activation: Activation,
    pub pool: bool,
}

/// Base filters, then conv/batch-norm/activation/pool blocks, a global
/// average pool of side `P` and a two-way fully-connected classifier.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkSpec {
    pub scale: usize,
    pub variant: BankVariant,
    pub blocks: Vec<BlockSpec>,
}

impl NetworkSpec {
    /// The full-size backbone: 30 -> 32 -> 64 -> 128 -> 256 channels, TanH in
    /// the first two blocks and ReLU after, feeding a 256-d classifier.
    pub fn standard(scale: usize, variant: BankVariant) -> Self {
        let block = |out_channels, activation| BlockSpec {
            kernel: 3,
            out_channels,
            activation,
            pool: true,
        };
        Self {
            scale,
            variant,
            blocks: vec![
                block(32, Activation::Tanh),
                block(64, Activation::Tanh),
                block(128, Activation::Relu),
                block(256, Activation::Relu),
            ],
        }
    }

    pub fn with_blocks(scale: usize, variant: BankVariant, channels: &[usize], activations: &[Activation]) -> Self {
        assert_eq!(channels.len(), activations.len());
        Self {
            scale,
            variant,
            blocks: channels
                .iter()
                .zip(activations)
                .map(|(&out_channels, &activation)| BlockSpec {
                    kernel: 3,
                    out_channels,
                    activation,
                    pool: true,
                })
                .collect(),
        }
    }

    /// Width of the fully-connected input.
    pub fn feature_len(&self) -> usize {
        self.blocks.last().map_or(FEATURE_MAPS, |b| b.out_channels)
    }

    /// Side of the map entering the final global average pool.
    pub fn pool_side(&self) -> Result<usize> {
        derive_pool_side(self)
    }

    /// One-line descriptor, e.g. `scale=64 variant=srm blocks=3x32:tanh:pool,...`.
    pub fn descriptor(&self) -> String {
        let blocks: Vec<String> = self
            .blocks
            .iter()
            .map(|b| {
                format!(
                    "{}x{}:{}:{}",
                    b.kernel,
                    b.out_channels,
                    b.activation.name(),
                    if b.pool { "pool" } else { "nopool" }
                )
            })
            .collect();
        format!(
            "scale={} variant={} blocks={}",
            self.scale,
            self.variant.name(),
            blocks.join(",")
        )
    }

    pub fn parse_descriptor(text: &str) -> Result<Self> {
        let mut scale = None;
        let mut variant = None;
        let mut blocks = None;
        for kv in text.split_whitespace() {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("bad descriptor field `{kv}`")))?;
            match k {
                "scale" => scale = Some(v.parse().map_err(|_| Error::invalid(format!("bad scale `{v}`")))?),
                "variant" => variant = Some(BankVariant::parse(v)?),
                "blocks" => {
                    let mut out = Vec::new();
                    for b in v.split(',').filter(|b| !b.is_empty()) {
                        let parts: Vec<&str> = b.split(':').collect();
                        let bad = || Error::invalid(format!("bad block `{b}`"));
                        if parts.len() != 3 {
                            return Err(bad());
                        }
                        let (kern, ch) = parts[0].split_once('x').ok_or_else(bad)?;
                        out.push(BlockSpec {
                            kernel: kern.parse().map_err(|_| bad())?,
                            out_channels: ch.parse().map_err(|_| bad())?,
                            activation: Activation::parse(parts[1])?,
                            pool: match parts[2] {
                                "pool" => true,
                                "nopool" => false,
                                _ => return Err(bad()),
                            },
                        });
                    }
                    blocks = Some(out);
                }
                _ => return Err(Error::invalid(format!("unknown descriptor field `{k}`"))),
            }
        }
        let spec = Self {
            scale: scale.ok_or_else(|| Error::invalid("descriptor lacks scale"))?,
            variant: variant.ok_or_else(|| Error::invalid("descriptor lacks variant"))?,
            blocks: blocks.unwrap_or_default(),
        };
        Ok(spec)
    }
}

/// Traces the spatial side through the layer stack at the spec's scale.
pub fn derive_pool_side(spec: &NetworkSpec) -> Result<usize> {
    let infeasible = || Error::ArchitectureInfeasible { scale: spec.scale };
    if spec.scale < KERNEL_SIDE {
        return Err(infeasible());
    }
    let mut side = spec.scale - (KERNEL_SIDE - 1);
    for b in &spec.blocks {
        if b.kernel % 2 == 0 {
            return Err(Error::invalid(format!("block kernel {} must be odd", b.kernel)));
        }
        if b.pool {
            if side + 2 * POOL_PAD < POOL_KERNEL {
                return Err(infeasible());
            }
            side = pool_out(side, POOL_KERNEL, POOL_STRIDE, POOL_PAD);
        }
        if side < 1 {
            return Err(infeasible());
        }
    }
    Ok(side)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent trace: valid 5x5 shrinks by 4, each pool halves rounding up.
    fn trace(scale: usize, pools: usize) -> Option<usize> {
        let mut side = scale.checked_sub(4).filter(|&s| s >= 1)? as f64;
        for _ in 0..pools {
            side = (side / 2.0).ceil();
        }
        Some(side as usize)
    }

    #[test]
    fn pool_side_by_scale() {
        for &s in &DEFAULT_SCALES {
            let spec = NetworkSpec::standard(s, BankVariant::FixedSrm);
            assert_eq!(spec.pool_side().unwrap(), trace(s, 4).unwrap(), "scale {s}");
        }
        let p32 = NetworkSpec::standard(32, BankVariant::FixedSrm).pool_side().unwrap();
        let p64 = NetworkSpec::standard(64, BankVariant::FixedSrm).pool_side().unwrap();
        assert_eq!((p32, p64), (2, 4));
    }

    #[test]
    fn tiny_scale_is_infeasible() {
        let spec = NetworkSpec::standard(4, BankVariant::FixedSrm);
        assert!(matches!(spec.pool_side(), Err(Error::ArchitectureInfeasible { scale: 4 })));
    }

    #[test]
    fn standard_feature_len_is_256() {
        assert_eq!(NetworkSpec::standard(96, BankVariant::FixedSrm).feature_len(), 256);
    }

    #[test]
    fn descriptor_round_trip() {
        let spec = NetworkSpec::standard(48, BankVariant::ConstrainedGaussian);
        let text = spec.descriptor();
        assert_eq!(NetworkSpec::parse_descriptor(&text).unwrap(), spec);
        assert!(NetworkSpec::parse_descriptor("scale=x").is_err());
    }
}
