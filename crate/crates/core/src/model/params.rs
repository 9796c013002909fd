use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use rand::Rng;

use crate::error::{Error, Result};
use crate::ops::{Conv1dSpec, RunningStats};
use crate::tensor::{Checkpoint, Graph, Scalar, Tensor, Var};

/// Ordered, named parameter tensors plus batch-norm running statistics.
///
/// Names are assigned in construction order and fully determined by the
/// model config, so two models built from the same config can exchange
/// checkpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T = f32> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
    stats_names: Vec<String>,
    stats: Vec<RunningStats<T>>,
}

impl<T: Scalar> Default for ModelParams<T> {
    fn default() -> Self {
        ModelParams {
            names: Vec::new(),
            tensors: Vec::new(),
            stats_names: Vec::new(),
            stats: Vec::new(),
        }
    }
}

/// Indices of one conv → BN → activation block inside a [`ModelParams`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct ConvBlock {
    pub spec: Conv1dSpec,
    pub weight: usize,
    pub bias: usize,
    pub bn: Option<(usize, usize, usize)>,
}

impl<T: Scalar> ModelParams<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: String, t: Tensor<T>) -> usize {
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.tensors.push(t.with_requires_grad(true));
        self.tensors.len() - 1
    }

    pub fn push_stats(&mut self, name: String, channels: usize) -> usize {
        self.stats_names.push(name);
        self.stats.push(RunningStats::new(channels));
        self.stats.len() - 1
    }

    /// Conv weight and bias drawn from `U(−a, a)` with `a = √(1 / (C_in·K))`.
    pub(crate) fn conv_block(
        &mut self,
        prefix: &str,
        spec: Conv1dSpec,
        with_bn: bool,
        rng: &mut impl Rng,
    ) -> ConvBlock {
        let bound = (1.0 / (spec.in_channels * spec.kernel_size) as f64).sqrt();
        let shape = spec.weight_shape();
        let n: usize = shape.iter().product();
        let w = (0..n)
            .map(|_| T::of(rng.gen_range(-bound..bound)))
            .collect();
        let b = (0..spec.out_channels)
            .map(|_| T::of(rng.gen_range(-bound..bound)))
            .collect();
        let weight = self.push(
            format!("{prefix}.conv.weight"),
            Tensor::new(shape, w).expect("shape"),
        );
        let bias = self.push(
            format!("{prefix}.conv.bias"),
            Tensor::new([spec.out_channels], b).expect("shape"),
        );
        let bn = with_bn.then(|| {
            let c = spec.out_channels;
            let gamma = self.push(format!("{prefix}.bn.gamma"), Tensor::full([c], T::one()));
            let beta = self.push(format!("{prefix}.bn.beta"), Tensor::zeros([c]));
            let stats = self.push_stats(format!("{prefix}.bn"), c);
            (gamma, beta, stats)
        });
        ConvBlock {
            spec,
            weight,
            bias,
            bn,
        }
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.tensors.iter_mut().collect()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.tensors[i])
    }

    pub fn stats(&self) -> &[RunningStats<T>] {
        &self.stats
    }

    pub(crate) fn stats_mut(&mut self) -> &mut [RunningStats<T>] {
        &mut self.stats
    }

    /// Total number of learnable scalars.
    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Binds every parameter into `graph`, as gradient-tracking leaves when
    /// `trainable` and as constants otherwise.
    pub fn bind(&self, graph: &mut Graph<T>, trainable: bool) -> Vec<Var> {
        self.tensors
            .iter()
            .map(|t| graph.leaf(t.clone().with_requires_grad(trainable)))
            .collect()
    }

    /// Adds the gradients accumulated in `graph` into the parameters.
    pub fn collect_grads(&mut self, graph: &Graph<T>, vars: &[Var]) {
        for (t, v) in self.tensors.iter_mut().zip(vars) {
            if let Some(g) = graph.grad(*v) {
                t.accumulate_grad(g);
            }
        }
    }

    pub fn zero_grads(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::zero_grad);
    }

    /// Hash of every parameter and statistic bit pattern.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for t in &self.tensors {
            for v in t.data() {
                v.f64().to_bits().hash(&mut h);
            }
        }
        for s in &self.stats {
            for v in s.mean.iter().chain(&s.var) {
                v.f64().to_bits().hash(&mut h);
            }
        }
        h.finish()
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
            stats_names: self.stats_names.clone(),
            stats: self
                .stats
                .iter()
                .map(|s| RunningStats {
                    mean: s.mean.iter().map(|v| U::of(v.f64())).collect(),
                    var: s.var.iter().map(|v| U::of(v.f64())).collect(),
                })
                .collect(),
        }
    }

    pub fn write_to(&self, ckpt: &mut Checkpoint) {
        for (n, t) in self.names.iter().zip(&self.tensors) {
            ckpt.push(n.clone(), t);
        }
        for (n, s) in self.stats_names.iter().zip(&self.stats) {
            ckpt.push(format!("{n}.running_mean"), &Tensor::from_slice(&s.mean));
            ckpt.push(format!("{n}.running_var"), &Tensor::from_slice(&s.var));
        }
    }

    /// Overwrites every parameter and statistic from `ckpt`, requiring
    /// matching names and shapes.
    pub fn read_from(&mut self, ckpt: &Checkpoint) -> Result<()> {
        let mut tensors = Vec::with_capacity(self.tensors.len());
        for (n, t) in self.names.iter().zip(&self.tensors) {
            tensors.push(ckpt.take::<T>(n, t.shape())?.with_requires_grad(true));
        }
        let mut stats = Vec::with_capacity(self.stats.len());
        for (n, s) in self.stats_names.iter().zip(&self.stats) {
            let c = s.mean.len();
            let mean = ckpt.take::<T>(&format!("{n}.running_mean"), &[c])?;
            let var = ckpt.take::<T>(&format!("{n}.running_var"), &[c])?;
            if var
                .data()
                .iter()
                .any(|v| v.f64().partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater))
            {
                return Err(Error::Checkpoint(format!(
                    "{n}.running_var has non-positive entries"
                )));
            }
            stats.push(RunningStats {
                mean: mean.into_data(),
                var: var.into_data(),
            });
        }
        self.tensors = tensors;
        self.stats = stats;
        Ok(())
    }
}
