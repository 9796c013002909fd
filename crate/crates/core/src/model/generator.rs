use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    apply_block, read_config_meta, write_config_meta, ConvBlock, GeneratorConfig, ModelParams,
};
use crate::error::{Error, Result};
use crate::ops::{BnMode, Conv1dSpec};
use crate::tensor::{Checkpoint, Graph, Scalar, Tensor, Var};

/// U-Net generator: `levels` conv/decimate stages, a dilated bottleneck at
/// the deepest width, mirrored upsample/concat/conv stages and a 1×1 conv
/// followed by tanh.
#[derive(Clone, Debug, PartialEq)]
pub struct Generator<T = f32> {
    pub config: GeneratorConfig,
    pub params: ModelParams<T>,
    ds: Vec<ConvBlock>,
    bottleneck: Vec<ConvBlock>,
    us: Vec<ConvBlock>,
    out: ConvBlock,
}

/// Validates `cfg` and initializes every weight from `seed`.
pub fn build_generator<T: Scalar>(cfg: &GeneratorConfig, seed: u64) -> Result<Generator<T>> {
    cfg.validate()?;
    Ok(Generator::build_unchecked(cfg, seed))
}

impl<T: Scalar> Generator<T> {
    fn build_unchecked(cfg: &GeneratorConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ModelParams::new();
        let ch = cfg.channel_schedule();
        let deepest = *ch.last().expect("levels >= 1");

        let mut cin = 1;
        let mut ds = Vec::with_capacity(cfg.levels);
        for (i, &c) in ch.iter().enumerate() {
            let spec = Conv1dSpec::new(cin, c, cfg.ds_kernel);
            ds.push(params.conv_block(&format!("g.ds{i}"), spec, true, &mut rng));
            cin = c;
        }
        let bottleneck = cfg
            .bottleneck_dilations
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                let spec =
                    Conv1dSpec::new(deepest, deepest, cfg.bottleneck_kernel).with_dilation(r);
                params.conv_block(&format!("g.bottleneck{i}"), spec, true, &mut rng)
            })
            .collect();
        let mut cin = deepest;
        let mut us = Vec::with_capacity(cfg.levels);
        for i in (0..cfg.levels).rev() {
            let spec = Conv1dSpec::new(cin + ch[i], ch[i], cfg.us_kernel);
            us.push(params.conv_block(&format!("g.us{i}"), spec, true, &mut rng));
            cin = ch[i];
        }
        let out = params.conv_block("g.out", Conv1dSpec::new(cin, 1, 1), false, &mut rng);
        Generator {
            config: cfg.clone(),
            params,
            ds,
            bottleneck,
            us,
            out,
        }
    }

    /// Maps `x[B, 1, L]` to `[B, 1, L]` in `(−1, 1)`. `vars` must come from
    /// binding `self.params` into `g`.
    pub fn forward(&mut self, g: &mut Graph<T>, vars: &[Var], x: Var, mode: BnMode) -> Result<Var> {
        let shape = g.shape(x).to_vec();
        let [_, 1, len] = shape[..] else {
            return Err(Error::ShapeMismatch {
                node: "generator".into(),
                detail: format!("input must be [B, 1, L], got {shape:?}"),
            });
        };
        let multiple = self.config.length_multiple();
        if len == 0 || len % multiple != 0 {
            return Err(Error::LengthNotDivisible { len, multiple });
        }
        let slope = Some(self.config.leaky_slope);
        let stats = self.params.stats_mut();

        let mut h = x;
        let mut skips = Vec::with_capacity(self.ds.len());
        for blk in &self.ds {
            let f = apply_block(g, vars, stats, blk, h, mode, slope)?;
            skips.push(f);
            h = g.decimate(f)?;
        }
        for blk in &self.bottleneck {
            h = apply_block(g, vars, stats, blk, h, mode, slope)?;
        }
        for blk in &self.us {
            let up = g.upsample_linear2x(h)?;
            let skip = skips.pop().expect("one skip per level");
            assert_eq!(g.shape(up)[2], g.shape(skip)[2], "skip length");
            let cat = g.concat_channels(up, skip)?;
            h = apply_block(g, vars, stats, blk, cat, mode, slope)?;
        }
        let y = apply_block(g, vars, stats, &self.out, h, mode, None)?;
        g.tanh(y)
    }

    /// Inference-mode forward on a fresh graph without gradient tracking.
    pub fn infer(&self, x: Tensor<T>) -> Result<Tensor<T>> {
        let mut net = self.clone();
        let mut g = Graph::new();
        let vars = net.params.bind(&mut g, false);
        let xv = g.constant(x);
        let y = net.forward(&mut g, &vars, xv, BnMode::Inference)?;
        Ok(g.value(y).clone())
    }

    /// Enhances a waveform of any length by zero-padding the tail up to a
    /// multiple of `2^levels` and trimming the result.
    pub fn enhance(&self, mixture: &[T]) -> Result<Vec<T>> {
        if mixture.is_empty() {
            return Err(Error::EmptyWaveform);
        }
        let padded_len = mixture
            .len()
            .next_multiple_of(self.config.length_multiple());
        let mut data = mixture.to_vec();
        data.resize(padded_len, T::zero());
        let y = self.infer(Tensor::new([1, 1, padded_len], data)?)?;
        let mut out = y.into_data();
        out.truncate(mixture.len());
        Ok(out)
    }

    pub fn cast<U: Scalar>(&self) -> Generator<U> {
        Generator {
            config: self.config.clone(),
            params: self.params.cast(),
            ds: self.ds.clone(),
            bottleneck: self.bottleneck.clone(),
            us: self.us.clone(),
            out: self.out,
        }
    }

    /// Stores the configuration as metadata plus every weight and statistic.
    pub fn write_checkpoint(&self, ckpt: &mut Checkpoint) {
        write_config_meta(ckpt, "generator", &self.config);
        self.params.write_to(ckpt);
    }

    /// Rebuilds the network from the configuration and weights in `ckpt`.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let cfg: GeneratorConfig = read_config_meta(ckpt, "generator")?;
        let mut net = build_generator(&cfg, 0).map_err(|e| Error::Checkpoint(e.to_string()))?;
        net.params.read_from(ckpt)?;
        Ok(net)
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;
    use crate::tensor::gradcheck;

    fn tiny(levels: usize) -> GeneratorConfig {
        GeneratorConfig {
            levels,
            base_channels: 3,
            channel_step: 2,
            ds_kernel: 5,
            us_kernel: 3,
            input_length: 64,
            ..Default::default()
        }
    }

    #[test]
    fn default_config_builds() {
        let g = build_generator::<f32>(&GeneratorConfig::default(), 0).unwrap();
        assert!(g.params.names().iter().any(|n| n == "g.ds7.conv.weight"));
        assert_eq!(
            g.params.get("g.ds7.conv.weight").unwrap().shape(),
            &[192, 168, 15]
        );
        assert_eq!(
            g.params.get("g.bottleneck2.conv.weight").unwrap().shape(),
            &[192, 192, 3]
        );
        assert_eq!(
            g.params.get("g.us0.conv.weight").unwrap().shape(),
            &[24, 48 + 24, 5]
        );
        assert_eq!(
            g.params.get("g.out.conv.weight").unwrap().shape(),
            &[1, 24, 1]
        );
    }

    #[test]
    fn zero_levels_rejected() {
        let cfg = GeneratorConfig {
            levels: 0,
            ..Default::default()
        };
        assert!(matches!(
            build_generator::<f32>(&cfg, 0),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn same_seed_same_weights() {
        let cfg = GeneratorConfig::desk();
        let a = build_generator::<f32>(&cfg, 7).unwrap();
        let b = build_generator::<f32>(&cfg, 7).unwrap();
        let c = build_generator::<f32>(&cfg, 8).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.params.fingerprint(), b.params.fingerprint());
        assert_ne!(a.params.fingerprint(), c.params.fingerprint());
        assert_eq!(a.params.count(), c.params.count());
    }

    #[test]
    fn paper_scale_shape() {
        let mut net = build_generator::<f32>(&GeneratorConfig::default(), 1).unwrap();
        let mut g = Graph::new();
        let vars = net.params.bind(&mut g, false);
        let x: Vec<f32> = (0..16384).map(|i| (i as f32 * 0.01).sin() * 0.3).collect();
        let x = g.constant(Tensor::new([1, 1, 16384], x).unwrap());
        let y = net.forward(&mut g, &vars, x, BnMode::Inference).unwrap();
        assert_eq!(g.shape(y), &[1, 1, 16384]);
        let bottleneck = (0..g.len())
            .map(Var)
            .filter(|&v| g.label(v) == "conv1d" && g.shape(v)[1] == 192)
            .map(|v| g.shape(v)[2])
            .collect::<Vec<_>>();
        assert!(bottleneck.contains(&64), "{bottleneck:?}");
        assert!(g.value(y).data().iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn output_length_follows_input() {
        for (levels, len) in [(2, 256), (3, 1024), (4, 16384)] {
            let cfg = GeneratorConfig {
                levels,
                input_length: len,
                ..tiny(levels)
            };
            let net = build_generator::<f32>(&cfg, 3).unwrap();
            let x = Tensor::new([2, 1, len], vec![0.1; 2 * len]).unwrap();
            assert_eq!(net.infer(x).unwrap().shape(), &[2, 1, len]);
        }
    }

    #[test]
    fn indivisible_length_rejected() {
        let net = build_generator::<f32>(&tiny(3), 0).unwrap();
        let x = Tensor::new([1, 1, 60], vec![0.0; 60]).unwrap();
        assert!(matches!(
            net.infer(x),
            Err(Error::LengthNotDivisible {
                len: 60,
                multiple: 8
            })
        ));
    }

    #[test]
    fn zero_input_bounded_output() {
        let mut net = build_generator::<f32>(&tiny(3), 0).unwrap();
        let mut g = Graph::new();
        let vars = net.params.bind(&mut g, true);
        let x = g.constant(Tensor::zeros([2, 1, 64]));
        let y = net.forward(&mut g, &vars, x, BnMode::Training).unwrap();
        assert!(g.value(y).data().iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn enhance_pads_and_trims() {
        let net = build_generator::<f32>(&tiny(3), 0).unwrap();
        let x: Vec<f32> = (0..61).map(|i| (i as f32).sin() * 0.2).collect();
        let y = net.enhance(&x).unwrap();
        assert_eq!(y.len(), 61);
        assert!(matches!(net.enhance(&[]), Err(Error::EmptyWaveform)));
    }

    #[test]
    fn deterministic_forward() {
        let net = build_generator::<f32>(&tiny(3), 5).unwrap();
        let x = Tensor::new(
            [1, 1, 64],
            (0..64).map(|i| (i as f32 * 0.3).cos()).collect(),
        )
        .unwrap();
        let a = net.infer(x.clone()).unwrap();
        let b = net.infer(x).unwrap();
        assert_eq!(
            a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn end_to_end_input_gradient() {
        let cfg = tiny(3);
        let net = build_generator::<f64>(&cfg, 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = gradcheck::random_tensor(&[2, 1, 64], 1.0, 0.0, &mut rng);
        let report = gradcheck::check(
            &[x],
            |g, v| {
                let mut net = net.clone();
                let vars = net.params.bind(g, false);
                let y = net.forward(g, &vars, v[0], BnMode::TrainingFrozen)?;
                gradcheck::project(g, y, 3)
            },
            gradcheck::DEFAULT_STEP,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");

        let mut g = Graph::<f64>::new();
        let mut n2 = net.clone();
        let vars = n2.params.bind(&mut g, false);
        let xv = g.leaf(
            gradcheck::random_tensor(&[2, 1, 64], 1.0, 0.0, &mut rng).with_requires_grad(true),
        );
        let y = n2
            .forward(&mut g, &vars, xv, BnMode::TrainingFrozen)
            .unwrap();
        let s = gradcheck::project(&mut g, y, 3).unwrap();
        g.backward(s).unwrap();
        assert!(g.grad(xv).unwrap().iter().any(|v| v.abs() > 1e-8));
    }

    /// Number of bottleneck-output positions that change when one input
    /// sample of the bottleneck is perturbed.
    fn bottleneck_footprint(dilations: Vec<usize>) -> usize {
        let cfg = GeneratorConfig {
            bottleneck_dilations: dilations,
            ..tiny(1)
        };
        let net = Generator::<f64>::build_unchecked(&cfg, 4);
        let t = 64;
        let c = net.bottleneck[0].spec.in_channels;
        let run = |bump: f64| {
            let mut net = net.clone();
            let mut g = Graph::new();
            let vars = net.params.bind(&mut g, false);
            let mut data = vec![0.0; c * t];
            data[t / 2] = bump;
            let mut h = g.constant(Tensor::new([1, c, t], data).unwrap());
            let stats = net.params.stats_mut();
            for blk in &net.bottleneck {
                h = apply_block(&mut g, &vars, stats, blk, h, BnMode::Inference, Some(0.1))
                    .unwrap();
            }
            g.value(h).data().to_vec()
        };
        let (a, b) = (run(0.0), run(1.0));
        (0..t)
            .filter(|&i| (0..c).any(|ch| (a[ch * t + i] - b[ch * t + i]).abs() > 1e-12))
            .count()
    }

    #[test]
    fn dilation_widens_receptive_field() {
        let plain = bottleneck_footprint(vec![1, 1, 1]);
        let dilated = bottleneck_footprint(vec![1, 2, 4]);
        assert_eq!(plain, 7);
        assert_eq!(dilated, 15);
    }
}
