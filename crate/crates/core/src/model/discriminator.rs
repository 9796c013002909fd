use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    apply_block, read_config_meta, write_config_meta, ConvBlock, DiscriminatorConfig, ModelParams,
};
use crate::error::{Error, Result};
use crate::ops::{BnMode, Conv1dSpec};
use crate::tensor::{Checkpoint, Graph, Scalar, Tensor, Var};

/// Conditional classifier: scores a candidate clean waveform given the
/// mixture it was derived from.
#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator<T = f32> {
    pub config: DiscriminatorConfig,
    pub params: ModelParams<T>,
    blocks: Vec<ConvBlock>,
    head_weight: usize,
    head_bias: usize,
}

pub fn build_discriminator<T: Scalar>(
    cfg: &DiscriminatorConfig,
    seed: u64,
) -> Result<Discriminator<T>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ModelParams::new();
    let mut cin = 2;
    let mut blocks = Vec::with_capacity(cfg.blocks);
    for (i, &c) in cfg.channels.iter().enumerate() {
        let spec = Conv1dSpec::new(cin, c, cfg.kernel).with_stride(cfg.stride);
        blocks.push(params.conv_block(&format!("d.block{i}"), spec, true, &mut rng));
        cin = c;
    }
    let bound = (1.0 / cin as f64).sqrt();
    let w = (0..cin)
        .map(|_| T::of(rng.gen_range(-bound..bound)))
        .collect();
    let head_weight = params.push("d.head.weight".into(), Tensor::new([1, cin], w)?);
    let head_bias = params.push(
        "d.head.bias".into(),
        Tensor::from_slice(&[T::of(rng.gen_range(-bound..bound))]),
    );
    Ok(Discriminator {
        config: cfg.clone(),
        params,
        blocks,
        head_weight,
        head_bias,
    })
}

impl<T: Scalar> Discriminator<T> {
    /// Probability in `(0, 1)` per example that `candidate` is clean speech
    /// for `mixture`. Both are `[B, 1, L]`; the result is `[B]`.
    pub fn forward(
        &mut self,
        g: &mut Graph<T>,
        vars: &[Var],
        mixture: Var,
        candidate: Var,
        mode: BnMode,
    ) -> Result<Var> {
        let (ms, cs) = (g.shape(mixture).to_vec(), g.shape(candidate).to_vec());
        let ([b, 1, l], [b2, 1, l2]) = (&ms[..], &cs[..]) else {
            return Err(Error::ShapeMismatch {
                node: "discriminator".into(),
                detail: format!("inputs must be [B, 1, L], got {ms:?} and {cs:?}"),
            });
        };
        if l != l2 || b != b2 {
            return Err(Error::LengthMismatch(
                ms.iter().product(),
                cs.iter().product(),
            ));
        }
        let nb = *b;
        let slope = Some(self.config.leaky_slope);
        let stats = self.params.stats_mut();
        let mut h = g.concat_channels(candidate, mixture)?;
        for blk in &self.blocks {
            h = apply_block(g, vars, stats, blk, h, mode, slope)?;
        }
        let pooled = g.mean_time(h)?;
        let logit = g.dense(pooled, vars[self.head_weight], vars[self.head_bias])?;
        let logit = g.reshape(logit, &[nb])?;
        g.sigmoid(logit)
    }

    /// Inference-mode scores without gradient tracking.
    pub fn infer(&self, mixture: Tensor<T>, candidate: Tensor<T>) -> Result<Vec<T>> {
        let mut net = self.clone();
        let mut g = Graph::new();
        let vars = net.params.bind(&mut g, false);
        let (m, c) = (g.constant(mixture), g.constant(candidate));
        let p = net.forward(&mut g, &vars, m, c, BnMode::Inference)?;
        Ok(g.value(p).data().to_vec())
    }

    /// Stores the configuration as metadata plus every weight and statistic.
    pub fn write_checkpoint(&self, ckpt: &mut Checkpoint) {
        write_config_meta(ckpt, "discriminator", &self.config);
        self.params.write_to(ckpt);
    }

    /// Rebuilds the network from the configuration and weights in `ckpt`.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let cfg: DiscriminatorConfig = read_config_meta(ckpt, "discriminator")?;
        let mut net = build_discriminator(&cfg, 0).map_err(|e| Error::Checkpoint(e.to_string()))?;
        net.params.read_from(ckpt)?;
        Ok(net)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::gradcheck;

    fn small() -> DiscriminatorConfig {
        DiscriminatorConfig {
            channels: vec![3, 4, 5],
            kernel: 5,
            ..Default::default()
        }
    }

    #[test]
    fn outputs_are_probabilities() {
        let d = build_discriminator::<f32>(&DiscriminatorConfig::default(), 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for scale in [0.0f64, 0.1, 1.0, 100.0] {
            let x = gradcheck::random_tensor(&[3, 1, 256], scale.max(1e-3), 0.0, &mut rng)
                .cast::<f32>();
            let y = gradcheck::random_tensor(&[3, 1, 256], scale.max(1e-3), 0.0, &mut rng)
                .cast::<f32>();
            for p in d.infer(x, y).unwrap() {
                assert!(p > 0.0 && p < 1.0, "{p}");
            }
        }
    }

    #[test]
    fn saturated_logit_stays_open() {
        let mut d = build_discriminator::<f32>(&small(), 0).unwrap();
        let mut ts = d.params.tensors_mut();
        let n = ts.len();
        ts[n - 1].data_mut()[0] = 1e6;
        let x = Tensor::full([1, 1, 64], 0.5);
        let p = d.infer(x.clone(), x).unwrap()[0];
        assert!(p < 1.0 && p > 0.0);
    }

    #[test]
    fn batch_permutation_equivariant() {
        let d = build_discriminator::<f64>(&small(), 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = gradcheck::random_tensor(&[3, 1, 64], 1.0, 0.0, &mut rng);
        let y = gradcheck::random_tensor(&[3, 1, 64], 1.0, 0.0, &mut rng);
        let p = d.infer(x.clone(), y.clone()).unwrap();
        let perm = [2, 0, 1];
        let permute = |t: &Tensor<f64>| {
            let data = perm
                .iter()
                .flat_map(|&i| t.data()[i * 64..(i + 1) * 64].to_vec())
                .collect();
            Tensor::new([3, 1, 64], data).unwrap()
        };
        let q = d.infer(permute(&x), permute(&y)).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            assert_eq!(q[k], p[i]);
        }
    }

    #[test]
    fn length_mismatch_rejected() {
        let d = build_discriminator::<f32>(&small(), 0).unwrap();
        let r = d.infer(Tensor::zeros([1, 1, 64]), Tensor::zeros([1, 1, 32]));
        assert!(matches!(r, Err(Error::LengthMismatch(..))));
    }

    #[test]
    fn candidate_gradient_matches_differences() {
        let d = build_discriminator::<f64>(&small(), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = gradcheck::random_tensor(&[2, 1, 64], 1.0, 0.0, &mut rng);
        let y = gradcheck::random_tensor(&[2, 1, 64], 1.0, 0.0, &mut rng);
        let report = gradcheck::check(
            &[x, y],
            |g, v| {
                let mut d = d.clone();
                let vars = d.params.bind(g, false);
                let p = d.forward(g, &vars, v[0], v[1], BnMode::TrainingFrozen)?;
                gradcheck::project(g, p, 1)
            },
            gradcheck::DEFAULT_STEP,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }
}
