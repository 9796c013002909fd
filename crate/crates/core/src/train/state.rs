use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{loss_discriminator, loss_generator, TrainConfig};
use crate::error::{Error, Result};
use crate::model::{
    build_discriminator, build_generator, Discriminator, DiscriminatorConfig, Generator,
    GeneratorConfig,
};
use crate::ops::BnMode;
use crate::tensor::{AdamState, Checkpoint, Graph, Tensor};

/// Stream of the data RNG, kept apart from the streams used for weights.
const DATA_STREAM: u64 = 1;
const DISCRIMINATOR_SEED_MIX: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLosses {
    pub l_d: f64,
    pub l_g: f64,
    /// Unweighted mean squared error between clean and enhanced segments.
    pub mse: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLosses {
    pub epoch: usize,
    pub mean_l_g: f64,
    pub mean_l_d: f64,
    pub mean_mse: f64,
    pub wall_seconds: f64,
}

/// Everything needed to continue training exactly where it stopped.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub adam_g: AdamState,
    pub adam_d: AdamState,
    /// Completed epochs.
    pub epoch: usize,
    /// Completed generator updates.
    pub step: u64,
    pub seed: u64,
    pub rng: ChaCha8Rng,
    pub history: Vec<EpochLosses>,
}

impl TrainState {
    pub fn new(
        gcfg: &GeneratorConfig,
        dcfg: &DiscriminatorConfig,
        cfg: &TrainConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let generator = build_generator(gcfg, cfg.seed)?;
        let discriminator = build_discriminator(dcfg, cfg.seed ^ DISCRIMINATOR_SEED_MIX)?;
        let adam_g = AdamState::new(cfg.adam(), generator.params.tensors());
        let adam_d = AdamState::new(cfg.adam(), discriminator.params.tensors());
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(DATA_STREAM);
        Ok(TrainState {
            generator,
            discriminator,
            adam_g,
            adam_d,
            epoch: 0,
            step: 0,
            seed: cfg.seed,
            rng,
            history: Vec::new(),
        })
    }

    /// Applies the optimizer settings of `cfg` (learning rate and betas may
    /// change between runs; moments are kept).
    pub fn set_optimizer(&mut self, cfg: &TrainConfig) {
        self.adam_g.config = cfg.adam();
        self.adam_d.config = cfg.adam();
    }

    /// Discriminator update with the generator frozen, followed by a
    /// generator update with the discriminator frozen. Inputs are
    /// `[B, 1, L]`.
    pub fn train_step(
        &mut self,
        mixture: &Tensor,
        clean: &Tensor,
        cfg: &TrainConfig,
    ) -> Result<StepLosses> {
        let ctx =
            |e: Error, phase: &str, step: u64| e.context(format!("{phase} step {}", step + 1));
        let mut l_d = 0.0;
        for _ in 0..cfg.d_steps_per_g_step {
            l_d = self
                .discriminator_step(mixture, clean, cfg)
                .map_err(|e| ctx(e, "discriminator", self.step))?;
        }
        let (l_g, mse) = self
            .generator_step(mixture, clean, cfg)
            .map_err(|e| ctx(e, "generator", self.step))?;
        self.step += 1;
        Ok(StepLosses { l_d, l_g, mse })
    }

    /// Generator output with batch statistics, leaving its running
    /// statistics untouched.
    fn frozen_enhance(&self, mixture: &Tensor) -> Result<Tensor> {
        let mut gen = self.generator.clone();
        let mut g = Graph::new();
        let vars = gen.params.bind(&mut g, false);
        let x = g.constant(mixture.clone());
        let y = gen.forward(&mut g, &vars, x, BnMode::TrainingFrozen)?;
        Ok(g.value(y).clone())
    }

    fn discriminator_step(
        &mut self,
        mixture: &Tensor,
        clean: &Tensor,
        cfg: &TrainConfig,
    ) -> Result<f64> {
        let fake = self.frozen_enhance(mixture)?;
        let d = &mut self.discriminator;
        let mut g = Graph::new();
        let vars = d.params.bind(&mut g, true);
        let x = g.constant(mixture.clone());
        let y = g.constant(clean.clone());
        let y_hat = g.constant(fake);
        let d_real = d.forward(&mut g, &vars, x, y, BnMode::Training)?;
        let d_fake = d.forward(&mut g, &vars, x, y_hat, BnMode::Training)?;
        let loss = loss_discriminator(&mut g, d_real, d_fake, cfg.logit_clamp_eps)?;
        let value = g.value(loss).item() as f64;
        if !value.is_finite() {
            return Err(Error::NonFinite("discriminator loss".into()));
        }
        g.backward(loss)?;
        d.params.zero_grads();
        d.params.collect_grads(&g, &vars);
        self.adam_d.step(&mut d.params.tensors_mut())?;
        Ok(value)
    }

    fn generator_step(
        &mut self,
        mixture: &Tensor,
        clean: &Tensor,
        cfg: &TrainConfig,
    ) -> Result<(f64, f64)> {
        let gen = &mut self.generator;
        let mut disc = self.discriminator.clone();
        let mut g = Graph::new();
        let gvars = gen.params.bind(&mut g, true);
        let dvars = disc.params.bind(&mut g, false);
        let x = g.constant(mixture.clone());
        let y = g.constant(clean.clone());
        let y_hat = gen.forward(&mut g, &gvars, x, BnMode::Training)?;
        let d_fake = disc.forward(&mut g, &dvars, x, y_hat, BnMode::TrainingFrozen)?;
        let loss = loss_generator(
            &mut g,
            d_fake,
            y,
            y_hat,
            cfg.lambda_mse,
            cfg.logit_clamp_eps,
        )?;
        let value = g.value(loss.total).item() as f64;
        let mse = g.value(loss.mse).item() as f64;
        if !value.is_finite() {
            return Err(Error::NonFinite("generator loss".into()));
        }
        g.backward(loss.total)?;
        gen.params.zero_grads();
        gen.params.collect_grads(&g, &gvars);
        self.adam_g.step(&mut gen.params.tensors_mut())?;
        Ok((value, mse))
    }

    /// Discriminator loss on a batch without updating anything.
    pub fn evaluate_discriminator(
        &self,
        mixture: &Tensor,
        clean: &Tensor,
        cfg: &TrainConfig,
    ) -> Result<f64> {
        let fake = self.frozen_enhance(mixture)?;
        let mut d = self.discriminator.clone();
        let mut g = Graph::new();
        let vars = d.params.bind(&mut g, false);
        let x = g.constant(mixture.clone());
        let y = g.constant(clean.clone());
        let y_hat = g.constant(fake);
        let d_real = d.forward(&mut g, &vars, x, y, BnMode::TrainingFrozen)?;
        let d_fake = d.forward(&mut g, &vars, x, y_hat, BnMode::TrainingFrozen)?;
        let loss = loss_discriminator(&mut g, d_real, d_fake, cfg.logit_clamp_eps)?;
        Ok(g.value(loss).item() as f64)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ckpt = Checkpoint::default();
        ckpt.set_meta("kind", "train_state");
        ckpt.set_meta("epoch", self.epoch);
        ckpt.set_meta("step", self.step);
        ckpt.set_meta("seed", self.seed);
        ckpt.set_meta("rng_word_pos", self.rng.get_word_pos());
        ckpt.set_meta("adam_g.step", self.adam_g.step);
        ckpt.set_meta("adam_d.step", self.adam_d.step);
        ckpt.set_meta("history.len", self.history.len());
        for (i, h) in self.history.iter().enumerate() {
            ckpt.set_meta(
                &format!("history.{i}"),
                format!(
                    "{} {:?} {:?} {:?} {:?}",
                    h.epoch, h.mean_l_g, h.mean_l_d, h.mean_mse, h.wall_seconds
                ),
            );
        }
        self.generator.write_checkpoint(&mut ckpt);
        self.discriminator.write_checkpoint(&mut ckpt);
        for (tag, adam, names) in [
            ("g", &self.adam_g, self.generator.params.names()),
            ("d", &self.adam_d, self.discriminator.params.names()),
        ] {
            for ((n, m), v) in names.iter().zip(&adam.m).zip(&adam.v) {
                ckpt.push(format!("adam.{tag}.m.{n}"), &Tensor::from_slice(m));
                ckpt.push(format!("adam.{tag}.v.{n}"), &Tensor::from_slice(v));
            }
        }
        ckpt
    }

    /// Restores a state written by [`TrainState::to_checkpoint`]. Optimizer
    /// hyperparameters come from `cfg`.
    pub fn from_checkpoint(ckpt: &Checkpoint, cfg: &TrainConfig) -> Result<Self> {
        if ckpt.meta("kind")? != "train_state" {
            return Err(Error::CheckpointMismatch(
                "not a training checkpoint".into(),
            ));
        }
        let generator = Generator::from_checkpoint(ckpt)?;
        let discriminator = Discriminator::from_checkpoint(ckpt)?;
        let restore = |tag: &str, names: &[String], step: u64| -> Result<AdamState> {
            let mut st = AdamState {
                config: cfg.adam(),
                step,
                m: Vec::with_capacity(names.len()),
                v: Vec::with_capacity(names.len()),
            };
            for n in names {
                let m = ckpt.get(&format!("adam.{tag}.m.{n}")).ok_or_else(|| {
                    Error::CheckpointMismatch(format!("missing optimizer moment for {n}"))
                })?;
                let v = ckpt.get(&format!("adam.{tag}.v.{n}")).ok_or_else(|| {
                    Error::CheckpointMismatch(format!("missing optimizer moment for {n}"))
                })?;
                st.m.push(m.data().to_vec());
                st.v.push(v.data().to_vec());
            }
            Ok(st)
        };
        let adam_g = restore(
            "g",
            generator.params.names(),
            ckpt.meta_parse("adam_g.step")?,
        )?;
        let adam_d = restore(
            "d",
            discriminator.params.names(),
            ckpt.meta_parse("adam_d.step")?,
        )?;
        for (st, params) in [
            (&adam_g, generator.params.tensors()),
            (&adam_d, discriminator.params.tensors()),
        ] {
            if st.m.iter().zip(params).any(|(m, p)| m.len() != p.len()) {
                return Err(Error::CheckpointMismatch(
                    "optimizer moments do not match parameters".into(),
                ));
            }
        }
        let seed: u64 = ckpt.meta_parse("seed")?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(DATA_STREAM);
        rng.set_word_pos(ckpt.meta_parse("rng_word_pos")?);
        let n: usize = ckpt.meta_parse("history.len")?;
        let history = (0..n)
            .map(|i| {
                let key = format!("history.{i}");
                let raw = ckpt.meta(&key)?;
                let f: Vec<&str> = raw.split(' ').collect();
                let bad = || Error::Checkpoint(format!("bad value for `{key}`: {raw:?}"));
                if f.len() != 5 {
                    return Err(bad());
                }
                let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
                Ok(EpochLosses {
                    epoch: f[0].parse().map_err(|_| bad())?,
                    mean_l_g: num(f[1])?,
                    mean_l_d: num(f[2])?,
                    mean_mse: num(f[3])?,
                    wall_seconds: num(f[4])?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(TrainState {
            generator,
            discriminator,
            adam_g,
            adam_d,
            epoch: ckpt.meta_parse("epoch")?,
            step: ckpt.meta_parse("step")?,
            seed,
            rng,
            history,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &Path, cfg: &TrainConfig) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?, cfg)
            .map_err(|e| e.context(path.display().to_string()))
    }
}

#[cfg(test)]
mod tests {
    use rand::Rng;

    use super::*;

    fn tiny() -> (GeneratorConfig, DiscriminatorConfig, TrainConfig) {
        let g = GeneratorConfig {
            levels: 2,
            base_channels: 4,
            channel_step: 4,
            ds_kernel: 5,
            us_kernel: 3,
            input_length: 64,
            ..Default::default()
        };
        let d = DiscriminatorConfig {
            channels: vec![4, 6, 8],
            kernel: 5,
            ..Default::default()
        };
        let t = TrainConfig {
            batch_size: 2,
            segment_length: 64,
            epochs: 1,
            ..Default::default()
        };
        (g, d, t)
    }

    fn batch(seed: u64) -> (Tensor, Tensor) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let clean: Vec<f32> = (0..128).map(|i| 0.4 * (i as f32 * 0.2).sin()).collect();
        let mix = clean.iter().map(|c| c + rng.gen_range(-0.2..0.2)).collect();
        (
            Tensor::new([2, 1, 64], mix).unwrap(),
            Tensor::new([2, 1, 64], clean).unwrap(),
        )
    }

    #[test]
    fn steps_only_touch_their_network() {
        let (gc, dc, tc) = tiny();
        let mut st = TrainState::new(&gc, &dc, &tc).unwrap();
        let (x, y) = batch(0);
        let g0 = st.generator.params.fingerprint();
        let d0 = st.discriminator.params.fingerprint();
        st.discriminator_step(&x, &y, &tc).unwrap();
        assert_eq!(st.generator.params.fingerprint(), g0);
        let d1 = st.discriminator.params.fingerprint();
        assert_ne!(d1, d0);
        st.generator_step(&x, &y, &tc).unwrap();
        assert_eq!(st.discriminator.params.fingerprint(), d1);
        assert_ne!(st.generator.params.fingerprint(), g0);
    }

    #[test]
    fn discriminator_step_descends() {
        let (gc, dc, tc) = tiny();
        let tc = TrainConfig { lr: 1e-5, ..tc };
        let mut st = TrainState::new(&gc, &dc, &tc).unwrap();
        let (x, y) = batch(1);
        let before = st.evaluate_discriminator(&x, &y, &tc).unwrap();
        st.discriminator_step(&x, &y, &tc).unwrap();
        let after = st.evaluate_discriminator(&x, &y, &tc).unwrap();
        assert!(after <= before, "{before} -> {after}");
    }

    #[test]
    fn zero_lr_freezes_parameters() {
        let (gc, dc, tc) = tiny();
        let tc = TrainConfig { lr: 0.0, ..tc };
        let mut st = TrainState::new(&gc, &dc, &tc).unwrap();
        let (g0, d0) = (
            st.generator.params.tensors().to_vec(),
            st.discriminator.params.tensors().to_vec(),
        );
        let (x, y) = batch(2);
        let a = st.train_step(&x, &y, &tc).unwrap();
        let b = st.train_step(&x, &y, &tc).unwrap();
        assert_eq!(a, b);
        let same = |p: &[Tensor], q: &[Tensor]| p.iter().zip(q).all(|(a, b)| a.data() == b.data());
        assert!(same(&g0, st.generator.params.tensors()));
        assert!(same(&d0, st.discriminator.params.tensors()));
    }

    #[test]
    fn checkpoint_resume_is_exact() {
        let (gc, dc, tc) = tiny();
        let mut a = TrainState::new(&gc, &dc, &tc).unwrap();
        let (x, y) = batch(3);
        a.train_step(&x, &y, &tc).unwrap();
        a.history.push(EpochLosses {
            epoch: 1,
            mean_l_g: 0.1 + 0.2,
            mean_l_d: 1.0 / 3.0,
            mean_mse: 1e-300,
            wall_seconds: 0.5,
        });
        let _: u32 = a.rng.gen();
        let bytes = a.to_checkpoint().to_bytes();
        let mut b =
            TrainState::from_checkpoint(&Checkpoint::from_bytes(&bytes).unwrap(), &tc).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.rng.get_word_pos(), b.rng.get_word_pos());
        for _ in 0..3 {
            assert_eq!(
                a.train_step(&x, &y, &tc).unwrap(),
                b.train_step(&x, &y, &tc).unwrap()
            );
        }
        assert_eq!(
            a.generator.params.fingerprint(),
            b.generator.params.fingerprint()
        );
        assert_eq!(
            a.discriminator.params.fingerprint(),
            b.discriminator.params.fingerprint()
        );
    }

    #[test]
    fn generator_only_load_rejects_other_files() {
        let mut ckpt = Checkpoint::default();
        ckpt.set_meta("kind", "train_state");
        assert!(matches!(
            Generator::<f32>::from_checkpoint(&ckpt),
            Err(Error::Checkpoint(_))
        ));
        let (gc, dc, tc) = tiny();
        let st = TrainState::new(&gc, &dc, &tc).unwrap();
        let mut ckpt = st.to_checkpoint();
        ckpt.set_meta("generator.levels", 3);
        assert!(Generator::<f32>::from_checkpoint(&ckpt).is_err());
    }
}
