use crate::error::{Error, Result};
use crate::tensor::{Graph, Scalar, Tensor, Var};

pub const BN_MOMENTUM: f64 = 0.9;
pub const BN_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BnMode {
    /// Batch statistics; running statistics are updated.
    Training,
    /// Batch statistics; running statistics are left alone.
    TrainingFrozen,
    /// Running statistics.
    Inference,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats<T = f32> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

impl<T: Scalar> RunningStats<T> {
    pub fn new(channels: usize) -> Self {
        RunningStats {
            mean: vec![T::zero(); channels],
            var: vec![T::one(); channels],
        }
    }
}

/// Everything a standalone batch-norm layer needs.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormState<T = f32> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub stats: RunningStats<T>,
    /// Weight of the old running value: `run = m·run + (1 − m)·batch`.
    pub momentum: f64,
    pub eps: f64,
    pub mode: BnMode,
}

impl<T: Scalar> BatchNormState<T> {
    pub fn new(channels: usize) -> Self {
        BatchNormState {
            gamma: Tensor::full([channels], T::one()).with_requires_grad(true),
            beta: Tensor::zeros([channels]).with_requires_grad(true),
            stats: RunningStats::new(channels),
            momentum: BN_MOMENTUM,
            eps: BN_EPS,
            mode: BnMode::Training,
        }
    }

    /// Binds γ and β as leaves and normalizes `x`. Returns `(y, γ, β)`.
    pub fn apply(&mut self, graph: &mut Graph<T>, x: Var) -> Result<(Var, Var, Var)> {
        let gamma = graph.leaf(self.gamma.clone());
        let beta = graph.leaf(self.beta.clone());
        let y = graph.batch_norm(
            x,
            gamma,
            beta,
            &mut self.stats,
            self.mode,
            self.momentum,
            self.eps,
        )?;
        Ok((y, gamma, beta))
    }
}

impl<T: Scalar> Graph<T> {
    /// Per-channel normalization of `x[B, C, T]` over batch and time.
    #[allow(clippy::too_many_arguments)]
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        stats: &mut RunningStats<T>,
        mode: BnMode,
        momentum: f64,
        eps: f64,
    ) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let [nb, c, t] = xs[..] else {
            return Err(shape_err(format!("input must be [B, C, T], got {xs:?}")));
        };
        if self.shape(gamma) != [c] || self.shape(beta) != [c] || stats.mean.len() != c {
            return Err(shape_err(format!(
                "{c} channels but gamma {:?}, beta {:?}, stats {}",
                self.shape(gamma),
                self.shape(beta),
                stats.mean.len()
            )));
        }
        let n = nb * t;
        let training = mode != BnMode::Inference;
        if training && n < 2 {
            return Err(Error::DegenerateBatch(n));
        }
        let xd = self.value(x).data();
        let channel = |ch: usize| (0..nb).flat_map(move |b| (b * c + ch) * t..(b * c + ch + 1) * t);

        let mut mean = vec![0.0f64; c];
        let mut inv_std = vec![0.0f64; c];
        for ch in 0..c {
            let (m, v) = if training {
                let m = channel(ch).map(|i| xd[i].f64()).sum::<f64>() / n as f64;
                let v = channel(ch).map(|i| (xd[i].f64() - m).powi(2)).sum::<f64>() / n as f64;
                if mode == BnMode::Training {
                    let unbiased = v * n as f64 / (n - 1) as f64;
                    stats.mean[ch] = T::of(momentum * stats.mean[ch].f64() + (1.0 - momentum) * m);
                    stats.var[ch] =
                        T::of(momentum * stats.var[ch].f64() + (1.0 - momentum) * unbiased);
                }
                (m, v)
            } else {
                (stats.mean[ch].f64(), stats.var[ch].f64())
            };
            mean[ch] = m;
            inv_std[ch] = 1.0 / (v + eps).sqrt();
        }

        let (gd, bd) = (self.value(gamma).data(), self.value(beta).data());
        let mut out = vec![T::zero(); xd.len()];
        for ch in 0..c {
            let (m, is) = (T::of(mean[ch]), T::of(inv_std[ch]));
            for i in channel(ch) {
                out[i] = gd[ch] * ((xd[i] - m) * is) + bd[ch];
            }
        }
        let out = Tensor::new(xs.clone(), out)?;

        self.record(
            "batch_norm",
            &[x, gamma, beta],
            out,
            move |ins: &[&Tensor<T>], _: &Tensor<T>, g: &[T], needs: &[bool]| {
                let (xd, gd) = (ins[0].data(), ins[1].data());
                let channel =
                    |ch: usize| (0..nb).flat_map(move |b| (b * c + ch) * t..(b * c + ch + 1) * t);
                let mut gx = needs[0].then(|| vec![T::zero(); xd.len()]);
                let mut ggamma = vec![T::zero(); c];
                let mut gbeta = vec![T::zero(); c];
                for ch in 0..c {
                    let (m, is) = (mean[ch], inv_std[ch]);
                    let xhat = |i: usize| (xd[i].f64() - m) * is;
                    let (mut sum_g, mut sum_gx) = (0.0f64, 0.0f64);
                    for i in channel(ch) {
                        sum_g += g[i].f64();
                        sum_gx += g[i].f64() * xhat(i);
                    }
                    ggamma[ch] = T::of(sum_gx);
                    gbeta[ch] = T::of(sum_g);
                    if let Some(gx) = gx.as_mut() {
                        let gm = gd[ch].f64();
                        if training {
                            // dx = γ·σ⁻¹/n · (n·g − Σg − x̂·Σ(g·x̂))
                            let k = gm * is / n as f64;
                            for i in channel(ch) {
                                gx[i] =
                                    T::of(k * (n as f64 * g[i].f64() - sum_g - xhat(i) * sum_gx));
                            }
                        } else {
                            for i in channel(ch) {
                                gx[i] = T::of(gm * is * g[i].f64());
                            }
                        }
                    }
                }
                vec![gx, needs[1].then_some(ggamma), needs[2].then_some(gbeta)]
            },
        )
    }
}

fn shape_err(detail: String) -> Error {
    Error::ShapeMismatch {
        node: "batch_norm".into(),
        detail,
    }
}
