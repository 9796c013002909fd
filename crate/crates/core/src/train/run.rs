use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;

use super::{sample_segments, EpochLosses, StepLosses, TrainConfig, TrainState};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const LOSS_CSV: &str = "losses.csv";
pub const CONFIG_SNAPSHOT: &str = "config.toml";

/// One mixture and its aligned clean reference, fully loaded.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainPair {
    pub mixture: Vec<f32>,
    pub clean: Vec<f32>,
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Run directory for checkpoints and the loss CSV; nothing is written
    /// when absent.
    pub out_dir: Option<PathBuf>,
    /// Written verbatim to `config.toml` in the run directory.
    pub config_snapshot: Option<String>,
    /// Print every step's losses to stderr.
    pub verbose: bool,
}

pub fn checkpoint_path(dir: &Path, epoch: usize) -> PathBuf {
    dir.join(format!("ckpt-{epoch}"))
}

/// Runs epochs until `state.epoch == cfg.epochs`. Each epoch visits every
/// pair once in shuffled order with one random segment per pair. Returns the
/// losses of every step taken.
pub fn train(
    state: &mut TrainState,
    pairs: &[TrainPair],
    cfg: &TrainConfig,
    opts: &RunOptions,
) -> Result<Vec<StepLosses>> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::EmptyCorpus("no training pairs".into()));
    }
    state.set_optimizer(cfg);
    if let Some(dir) = &opts.out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        if let Some(snapshot) = &opts.config_snapshot {
            write_atomic(&dir.join(CONFIG_SNAPSHOT), snapshot.as_bytes())?;
        }
        if state.epoch >= cfg.epochs {
            state.save(&checkpoint_path(dir, state.epoch))?;
            write_loss_csv(&dir.join(LOSS_CSV), &state.history)?;
        }
    }

    let mut log = Vec::new();
    let len = cfg.segment_length;
    while state.epoch < cfg.epochs {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        order.shuffle(&mut state.rng);
        let mut epoch_log = Vec::new();
        for chunk in order.chunks(cfg.batch_size) {
            let mut mix = Vec::with_capacity(chunk.len() * len);
            let mut clean = Vec::with_capacity(chunk.len() * len);
            for &i in chunk {
                let s = sample_segments(&pairs[i].mixture, &pairs[i].clean, len, &mut state.rng)?;
                mix.extend(s.mixture);
                clean.extend(s.clean);
            }
            let x = Tensor::new([chunk.len(), 1, len], mix)?;
            let y = Tensor::new([chunk.len(), 1, len], clean)?;
            let losses = state.train_step(&x, &y, cfg)?;
            if opts.verbose {
                eprintln!(
                    "step {:>6}  L_D {:.4}  L_G {:.4}  mse {:.6}",
                    state.step, losses.l_d, losses.l_g, losses.mse
                );
            }
            epoch_log.push(losses);
        }
        state.epoch += 1;
        let n = epoch_log.len() as f64;
        let mean = |f: fn(&StepLosses) -> f64| epoch_log.iter().map(f).sum::<f64>() / n;
        state.history.push(EpochLosses {
            epoch: state.epoch,
            mean_l_g: mean(|s| s.l_g),
            mean_l_d: mean(|s| s.l_d),
            mean_mse: mean(|s| s.mse),
            wall_seconds: started.elapsed().as_secs_f64(),
        });
        log.extend(epoch_log);

        if let Some(dir) = &opts.out_dir {
            let last = state.epoch == cfg.epochs;
            if last
                || (cfg.checkpoint_every > 0 && state.epoch.is_multiple_of(cfg.checkpoint_every))
            {
                state.save(&checkpoint_path(dir, state.epoch))?;
            }
            write_loss_csv(&dir.join(LOSS_CSV), &state.history)?;
        }
    }
    Ok(log)
}

#[derive(serde::Serialize)]
struct LossRow {
    epoch: usize,
    #[serde(rename = "mean_L_G")]
    mean_l_g: f64,
    #[serde(rename = "mean_L_D")]
    mean_l_d: f64,
    wall_seconds: f64,
}

/// Rewrites the whole loss table from `history`.
pub fn write_loss_csv(path: &Path, history: &[EpochLosses]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for h in history {
        w.serialize(LossRow {
            epoch: h.epoch,
            mean_l_g: h.mean_l_g,
            mean_l_d: h.mean_l_d,
            wall_seconds: h.wall_seconds,
        })
        .map_err(|e| Error::io(path, e.into()))?;
    }
    if history.is_empty() {
        w.write_record(["epoch", "mean_L_G", "mean_L_D", "wall_seconds"])
            .map_err(|e| Error::io(path, e.into()))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::io(path, e.into_error()))?;
    write_atomic(path, &bytes)
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
