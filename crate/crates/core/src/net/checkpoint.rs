//! Checkpoint container: magic `FCK1`, u32 version, network descriptor,
//! u64 iteration, three f64 channel means (as u64 bit patterns), then named
//! tensors (`name`, u32 rank, u32 dims, f32 LE values). Optimizer velocity
//! is stored under `velocity/<name>`.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::Network;
use super::optim::Velocity;
use super::spec::NetworkSpec;
use crate::codec::{ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAGIC: &[u8; 4] = b"FCK1";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelCheckpoint<T> {
    pub network: Network<T>,
    pub velocity: Velocity<T>,
    pub iteration: u64,
    /// Per-channel means subtracted from every input patch.
    pub channel_means: [f64; 3],
}

impl<T: Scalar> ModelCheckpoint<T> {
    pub fn fresh(network: Network<T>, channel_means: [f64; 3]) -> Self {
        let velocity = Velocity::zeros(&network);
        Self {
            network,
            velocity,
            iteration: 0,
            channel_means,
        }
    }

    pub fn scale(&self) -> usize {
        self.network.spec.scale
    }

    /// Values are narrowed to 32-bit floats.
    pub fn encode(&self) -> Vec<u8> {
        let mut w = ByteWriter::default();
        w.bytes(MAGIC);
        w.u32(CHECKPOINT_VERSION);
        w.string(&self.network.spec.descriptor());
        w.u64(self.iteration);
        for m in self.channel_means {
            w.u64(m.to_bits());
        }
        let params = &self.network.params;
        let velocities: Vec<usize> = (0..params.len())
            .filter(|&i| !self.velocity.buffers[i].is_empty())
            .collect();
        w.u32((params.len() + velocities.len()) as u32);
        let mut tensor = |name: &str, dims: &[usize], values: &[T]| {
            w.string(name);
            w.u32(dims.len() as u32);
            for &d in dims {
                w.u32(d as u32);
            }
            for v in values {
                w.f32(v.to_f32().unwrap_or(f32::NAN));
            }
        };
        for p in params {
            tensor(&p.name, &p.dims, &p.value);
        }
        for &i in &velocities {
            let p = &params[i];
            tensor(&format!("velocity/{}", p.name), &p.dims, &self.velocity.buffers[i]);
        }
        w.buf
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.magic(MAGIC)?;
        let at = r.offset();
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Parse {
                offset: at,
                message: format!("unsupported checkpoint version {version}"),
            });
        }
        let at = r.offset();
        let spec = NetworkSpec::parse_descriptor(&r.string()?).map_err(|e| Error::Parse {
            offset: at,
            message: e.to_string(),
        })?;
        let iteration = r.u64()?;
        let mut channel_means = [0.0; 3];
        for m in &mut channel_means {
            *m = f64::from_bits(r.u64()?);
        }
        // Skeleton only; every value is overwritten below.
        let mut network = Network::<T>::new(&spec, &mut ChaCha8Rng::seed_from_u64(0))?;
        let mut velocity = Velocity::zeros(&network);
        let mut seen = vec![false; network.params.len() * 2];
        let count = r.u32()?;
        for _ in 0..count {
            let at = r.offset();
            let name = r.string()?;
            let rank = r.u32()? as usize;
            let mut dims = Vec::with_capacity(rank.min(8));
            for _ in 0..rank {
                dims.push(r.u32()? as usize);
            }
            let bad = |message: String| Error::Parse { offset: at, message };
            let (is_velocity, base) = match name.strip_prefix("velocity/") {
                Some(b) => (true, b),
                None => (false, name.as_str()),
            };
            let i = network
                .param_index(base)
                .ok_or_else(|| bad(format!("unknown tensor `{name}`")))?;
            if network.params[i].dims != dims {
                return Err(bad(format!("tensor `{name}` has dims {dims:?}")));
            }
            if is_velocity && !network.params[i].learnable {
                return Err(bad(format!("velocity for frozen tensor `{base}`")));
            }
            let slot = i * 2 + is_velocity as usize;
            if seen[slot] {
                return Err(bad(format!("duplicate tensor `{name}`")));
            }
            seen[slot] = true;
            let len: usize = dims.iter().product();
            let values: Vec<T> = r.f32_vec(len)?.into_iter().map(|v| T::of(v as f64)).collect();
            if is_velocity {
                velocity.buffers[i] = values;
            } else {
                network.params[i].value = values;
            }
        }
        r.finish()?;
        if let Some(i) = (0..network.params.len()).find(|&i| !seen[i * 2]) {
            return Err(Error::Parse {
                offset: r.offset(),
                message: format!("missing tensor `{}`", network.params[i].name),
            });
        }
        Ok(Self {
            network,
            velocity,
            iteration,
            channel_means,
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
