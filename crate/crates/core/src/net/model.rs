use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::layers::{BatchStats, Cache, Layer, Param, BN_AVERAGE_DECAY};
use super::spec::{NetworkSpec, POOL_KERNEL, POOL_PAD, POOL_STRIDE};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::filters::{
    constrained_gaussian_bank, constrained_srm_bank, srm_bank, BankVariant, BaseFilterBank, Kernel5x5,
    FEATURE_MAPS, KERNEL_LEN, KERNEL_SIDE,
};
use crate::scalar::Scalar;

/// Standard deviation of the Gaussian used for convolution kernels.
pub const CONV_INIT_STD: f64 = 0.01;
pub const CLASSES: usize = 2;

/// Gradient per parameter; `None` for frozen parameters and state.
pub type Gradients<T> = Vec<Option<Vec<T>>>;

/// Everything a training forward pass leaves behind for backward.
pub struct ForwardTrace<T> {
    pub logits: Tensor<T>,
    caches: Vec<Cache<T>>,
    pub batch_stats: Vec<Option<BatchStats<T>>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    pub spec: NetworkSpec,
    pub params: Vec<Param<T>>,
    pub layers: Vec<Layer>,
}

impl<T: Scalar> Network<T> {
    /// Builds and initializes the network: Gaussian convolution kernels,
    /// Xavier classifier weights, unit/zero batch-norm affine terms.
    pub fn new<R: Rng + ?Sized>(spec: &NetworkSpec, rng: &mut R) -> Result<Self> {
        spec.pool_side()?;
        let bank = match spec.variant {
            BankVariant::FixedSrm => srm_bank::<T>(),
            BankVariant::ConstrainedSrm => constrained_srm_bank(),
            BankVariant::ConstrainedGaussian => constrained_gaussian_bank(rng, CONV_INIT_STD),
        };
        let mut params = Vec::new();
        let mut layers = Vec::new();
        let push = |params: &mut Vec<Param<T>>, name: String, dims: Vec<usize>, value: Vec<T>, learnable, decay| {
            params.push(Param {
                name,
                dims,
                value,
                learnable,
                decay,
            });
            params.len() - 1
        };

        let learnable = spec.variant.is_learnable();
        let base = push(
            &mut params,
            "base.weight".into(),
            vec![FEATURE_MAPS, 3, KERNEL_SIDE, KERNEL_SIDE],
            bank.weights(),
            learnable,
            learnable,
        );
        layers.push(Layer::Conv {
            weight: base,
            in_ch: 3,
            out_ch: FEATURE_MAPS,
            kernel: KERNEL_SIDE,
            pad: 0,
            input_grad: false,
        });
        layers.push(Layer::Act(super::layers::Activation::Abs));

        let normal = Normal::new(0.0, CONV_INIT_STD).expect("positive std");
        let mut in_ch = FEATURE_MAPS;
        for (i, b) in spec.blocks.iter().enumerate() {
            let len = b.out_channels * in_ch * b.kernel * b.kernel;
            let w = (0..len).map(|_| T::of(normal.sample(rng))).collect();
            let weight = push(
                &mut params,
                format!("block{i}.conv"),
                vec![b.out_channels, in_ch, b.kernel, b.kernel],
                w,
                true,
                true,
            );
            layers.push(Layer::Conv {
                weight,
                in_ch,
                out_ch: b.out_channels,
                kernel: b.kernel,
                pad: b.kernel / 2,
                input_grad: true,
            });
            let c = b.out_channels;
            let gamma = push(&mut params, format!("block{i}.bn.gamma"), vec![c], vec![T::one(); c], true, false);
            let beta = push(&mut params, format!("block{i}.bn.beta"), vec![c], vec![T::zero(); c], true, false);
            let mean_sum = push(&mut params, format!("block{i}.bn.mean_sum"), vec![c], vec![T::zero(); c], false, false);
            let var_sum = push(&mut params, format!("block{i}.bn.var_sum"), vec![c], vec![T::zero(); c], false, false);
            let weight_sum = push(&mut params, format!("block{i}.bn.weight_sum"), vec![1], vec![T::zero()], false, false);
            layers.push(Layer::BatchNorm {
                gamma,
                beta,
                mean_sum,
                var_sum,
                weight_sum,
                channels: c,
            });
            layers.push(Layer::Act(b.activation));
            if b.pool {
                layers.push(Layer::AvgPool {
                    kernel: POOL_KERNEL,
                    stride: POOL_STRIDE,
                    pad: POOL_PAD,
                });
            }
            in_ch = c;
        }
        layers.push(Layer::GlobalAvgPool);
        let bound = (3.0 / in_ch as f64).sqrt();
        let xavier = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        let fc = push(
            &mut params,
            "fc.weight".into(),
            vec![CLASSES, in_ch],
            (0..CLASSES * in_ch).map(|_| T::of(xavier.sample(rng))).collect(),
            true,
            true,
        );
        layers.push(Layer::Linear {
            weight: fc,
            inputs: in_ch,
            outputs: CLASSES,
        });
        Ok(Self {
            spec: spec.clone(),
            params,
            layers,
        })
    }

    pub fn param(&self, name: &str) -> Option<&Param<T>> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    /// Current base filter bank.
    pub fn base_bank(&self) -> BaseFilterBank<T> {
        let p = self.param("base.weight").expect("base layer present");
        BaseFilterBank::from_weights(self.spec.variant, &p.value).expect("base weights sized at construction")
    }

    /// Re-projects learnable base kernels onto the constraint set.
    pub fn project_base(&mut self) -> Result<()> {
        if !self.spec.variant.is_learnable() {
            return Ok(());
        }
        let i = self.param_index("base.weight").expect("base layer present");
        for chunk in self.params[i].value.chunks_exact_mut(KERNEL_LEN) {
            let mut k = Kernel5x5::<T>::zeros();
            k.weights.copy_from_slice(chunk);
            chunk.copy_from_slice(&k.constrain()?.weights);
        }
        Ok(())
    }

    /// Sets every learnable weight to zero.
    pub fn zero_weights(&mut self) {
        for p in self.params.iter_mut().filter(|p| p.learnable || p.name == "base.weight") {
            p.value.fill(T::zero());
        }
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let s = self.spec.scale;
        if x.c != 3 || x.h != s || x.w != s {
            return Err(Error::Shape(format!(
                "network at scale {s} got input {}x{}x{}",
                x.c, x.h, x.w
            )));
        }
        Ok(())
    }

    /// Forward pass in training mode, keeping caches for [`Self::backward`].
    pub fn forward_train(&self, x: Tensor<T>) -> Result<ForwardTrace<T>> {
        self.check_input(&x)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut batch_stats = Vec::with_capacity(self.layers.len());
        let mut h = x;
        for layer in &self.layers {
            let (y, cache, stats) = layer.forward(&self.params, h, true)?;
            caches.push(cache);
            batch_stats.push(stats);
            h = y;
        }
        h.ensure_finite("forward pass")?;
        Ok(ForwardTrace {
            logits: h,
            caches,
            batch_stats,
        })
    }

    /// Logits in inference mode (running batch-norm statistics).
    pub fn logits(&self, x: Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(&x)?;
        let mut h = x;
        for layer in &self.layers {
            h = layer.forward(&self.params, h, false)?.0;
        }
        h.ensure_finite("forward pass")?;
        Ok(h)
    }

    /// Class probabilities per batch item; column 1 is the fake class.
    pub fn forward(&self, x: Tensor<T>) -> Result<Vec<[T; CLASSES]>> {
        let logits = self.logits(x)?;
        Ok(logits.data.chunks_exact(CLASSES).map(softmax).collect())
    }

    /// Backpropagates `dlogits` through a training trace.
    pub fn backward(&self, trace: ForwardTrace<T>, dlogits: Tensor<T>) -> Result<Gradients<T>> {
        let mut grads: Gradients<T> = vec![None; self.params.len()];
        let mut d = dlogits;
        for (layer, cache) in self.layers.iter().zip(trace.caches).rev() {
            let (dx, pg) = layer.backward(&self.params, cache, d)?;
            for (i, g) in pg {
                grads[i] = Some(g);
            }
            d = dx;
        }
        Ok(grads)
    }

    /// Mean cross-entropy, its gradients, batch accuracy and batch statistics.
    pub fn loss_and_gradients(
        &self,
        x: Tensor<T>,
        labels: &[usize],
    ) -> Result<(T, Gradients<T>, f64, Vec<Option<BatchStats<T>>>)> {
        if labels.len() != x.n {
            return Err(Error::Shape(format!("{} labels for batch of {}", labels.len(), x.n)));
        }
        let mut trace = self.forward_train(x)?;
        let (loss, dlogits, correct) = cross_entropy(&trace.logits, labels)?;
        let stats = std::mem::take(&mut trace.batch_stats);
        let grads = self.backward(trace, dlogits)?;
        Ok((loss, grads, correct as f64 / labels.len() as f64, stats))
    }

    /// Clears the batch-norm running averages.
    pub fn reset_running_stats(&mut self) {
        for layer in &self.layers {
            if let Layer::BatchNorm {
                mean_sum,
                var_sum,
                weight_sum,
                ..
            } = *layer
            {
                for i in [mean_sum, var_sum, weight_sum] {
                    self.params[i].value.fill(T::zero());
                }
            }
        }
    }

    /// Folds a training pass's batch statistics into the running averages.
    pub fn update_running_stats(&mut self, stats: &[Option<BatchStats<T>>]) {
        let decay = T::of(BN_AVERAGE_DECAY);
        for (layer, s) in self.layers.iter().zip(stats) {
            if let (
                Layer::BatchNorm {
                    mean_sum,
                    var_sum,
                    weight_sum,
                    ..
                },
                Some(s),
            ) = (layer, s)
            {
                let unbias = if s.count > 1 {
                    T::of(s.count as f64 / (s.count - 1) as f64)
                } else {
                    T::one()
                };
                for (a, &m) in self.params[*mean_sum].value.iter_mut().zip(&s.mean) {
                    *a = decay * *a + m;
                }
                for (a, &v) in self.params[*var_sum].value.iter_mut().zip(&s.var) {
                    *a = decay * *a + v * unbias;
                }
                let w = &mut self.params[*weight_sum].value[0];
                *w = decay * *w + T::one();
            }
        }
    }
}

pub fn softmax<T: Scalar>(logits: &[T]) -> [T; CLASSES] {
    let m = logits[0].max(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    let z = e0 + e1;
    [e0 / z, e1 / z]
}

/// Mean cross-entropy over the batch, its logit gradient and the number of
/// correct argmax predictions.
pub fn cross_entropy<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<(T, Tensor<T>, usize)> {
    let n = logits.n;
    if logits.item_len() != CLASSES {
        return Err(Error::Shape("cross entropy expects two logits per item".into()));
    }
    let mut d = Tensor::zeros(n, CLASSES, 1, 1);
    let mut loss = T::zero();
    let mut correct = 0;
    let inv_n = T::one() / T::of(n as f64);
    for (i, &y) in labels.iter().enumerate() {
        if y >= CLASSES {
            return Err(Error::Shape(format!("label {y} out of range")));
        }
        let l = logits.item(i);
        let m = l[0].max(l[1]);
        let lse = m + ((l[0] - m).exp() + (l[1] - m).exp()).ln();
        loss += lse - l[y];
        let p = softmax(l);
        for c in 0..CLASSES {
            let target = if c == y { T::one() } else { T::zero() };
            d.data[i * CLASSES + c] = (p[c] - target) * inv_n;
        }
        let pred = if l[1] > l[0] { 1 } else { 0 };
        correct += (pred == y) as usize;
    }
    Ok((loss * inv_n, d, correct))
}
