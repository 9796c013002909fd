//! Command-line front end. Exit codes: 0 success, 2 usage or input error,
//! 3 malformed data (WAV, manifest or checkpoint contents).

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{Profile, RunConfig};
use crate::data::{
    build_manifest, list_wavs, load_pair, make_fixture_corpus, read_manifest, read_wav, write_wav,
    Split, WavEncoding, Waveform, MANIFEST_FILE,
};
use crate::error::{Error, Result};
use crate::metrics::{score_manifest, Enhanced};
use crate::model::Generator;
use crate::tensor::Checkpoint;
use crate::train::{train, RunOptions, TrainPair, TrainState};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;

pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_TABLE: &str = "report.txt";

#[derive(Parser, Debug)]
#[command(
    name = "unetgan",
    version,
    about = "Time-domain U-Net GAN speech enhancement"
)]
pub struct Cli {
    /// Resolve relative paths against this directory.
    #[arg(long, global = true)]
    pub root: Option<PathBuf>,
    /// Log every training step.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write the synthetic clean and noise corpus.
    Fixtures {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Mix a clean and a noise corpus into split directories and a manifest.
    Mix {
        #[arg(long)]
        clean: PathBuf,
        #[arg(long)]
        noise: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train on the train split of a manifest.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        /// Run directory for the config snapshot, checkpoints and loss CSV.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lambda_mse: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Continue from the newest checkpoint in the run directory.
        #[arg(long)]
        resume: bool,
    },
    /// Enhance one WAV file or every WAV file in a directory.
    Enhance {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score mixtures, and optionally enhanced audio, against clean references.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        /// Directory holding enhanced files named like the mixtures.
        #[arg(long, conflicts_with = "checkpoint")]
        enhanced: Option<PathBuf>,
        /// Enhance the mixtures with this checkpoint's generator.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: String,
        /// Directory for report.csv and report.txt.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug, Clone)]
pub struct ConfigArgs {
    /// Base profile: paper or desk.
    #[arg(long, default_value = "desk")]
    pub profile: String,
    /// TOML file merged over the profile.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `section.key=value` overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_data_format() {
        EXIT_DATA
    } else {
        EXIT_USAGE
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

struct Paths(Option<PathBuf>);

impl Paths {
    fn at(&self, p: &Path) -> PathBuf {
        match &self.0 {
            Some(root) if p.is_relative() => root.join(p),
            _ => p.to_path_buf(),
        }
    }
}

fn resolve_config(paths: &Paths, args: &ConfigArgs, extra: &[String]) -> Result<RunConfig> {
    let mut cfg = RunConfig::profile(args.profile.parse::<Profile>()?);
    if let Some(file) = &args.config {
        let path = paths.at(file);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        cfg =
            RunConfig::from_toml(&text, &cfg).map_err(|e| e.context(path.display().to_string()))?;
    }
    cfg = cfg.with_overrides(&args.set)?.with_overrides(extra)?;
    cfg.validate()?;
    Ok(cfg)
}

fn print_resolved(what: &str, body: &str) {
    eprintln!("# resolved {what}\n{}", body.trim_end());
}

pub fn run(cli: Cli) -> Result<()> {
    let paths = Paths(cli.root.clone());
    match cli.command {
        Command::Fixtures { out, seed } => {
            let out = paths.at(&out);
            print_resolved(
                "fixtures",
                &format!("out = {:?}\nseed = {seed}", out.display().to_string()),
            );
            let c = make_fixture_corpus(&out, seed)?;
            eprintln!(
                "wrote {} clean and {} noise files under {}",
                c.clean.len(),
                c.noise.len(),
                out.display()
            );
            Ok(())
        }
        Command::Mix {
            clean,
            noise,
            out,
            config,
            seed,
        } => {
            let extra: Vec<String> = seed.map(|s| format!("data.seed={s}")).into_iter().collect();
            let cfg = resolve_config(&paths, &config, &extra)?;
            print_resolved("config", &cfg.to_toml());
            let (clean, noise, out) = (paths.at(&clean), paths.at(&noise), paths.at(&out));
            for dir in [&clean, &noise] {
                if !dir.is_dir() {
                    return Err(Error::io(dir, std::io::ErrorKind::NotFound.into()));
                }
            }
            let m = build_manifest(&clean, &noise, &out, &cfg.data)?;
            for split in Split::ALL {
                println!("{split} pairs: {}", m.count(split));
            }
            eprintln!("manifest: {}", out.join(MANIFEST_FILE).display());
            Ok(())
        }
        Command::Train {
            manifest,
            out,
            config,
            epochs,
            lambda_mse,
            seed,
            resume,
        } => {
            let mut extra = Vec::new();
            if let Some(e) = epochs {
                extra.push(format!("train.epochs={e}"));
            }
            if let Some(l) = lambda_mse {
                extra.push(format!("train.lambda_mse={l:?}"));
            }
            if let Some(s) = seed {
                extra.push(format!("train.seed={s}"));
            }
            let cfg = resolve_config(&paths, &config, &extra)?;
            let snapshot = cfg.to_toml();
            print_resolved("config", &snapshot);
            let out = paths.at(&out);
            let m = read_manifest(&paths.at(&manifest))?;
            let pairs = m
                .split(Split::Train)
                .map(|r| load_pair(r).map(|(mixture, clean)| TrainPair { mixture, clean }))
                .collect::<Result<Vec<_>>>()?;
            let latest = latest_checkpoint(&out)?;
            let mut state = match (latest, resume) {
                (Some(p), true) => {
                    eprintln!("resuming from {}", p.display());
                    TrainState::load(&p, &cfg.train)?
                }
                (Some(p), false) => {
                    return Err(Error::InvalidConfig(format!(
                    "{} already holds checkpoints ({}); pass --resume or choose another directory",
                    out.display(),
                    p.display()
                )))
                }
                (None, _) => TrainState::new(&cfg.generator, &cfg.discriminator, &cfg.train)?,
            };
            eprintln!(
                "training on {} pairs, {} parameters in G",
                pairs.len(),
                state.generator.params.count()
            );
            let opts = RunOptions {
                out_dir: Some(out.clone()),
                config_snapshot: Some(snapshot),
                verbose: cli.verbose,
            };
            train(&mut state, &pairs, &cfg.train, &opts)?;
            if let Some(last) = state.history.last() {
                eprintln!(
                    "epoch {}: mean L_G {:.4}, mean L_D {:.4}, mean mse {:.6}",
                    last.epoch, last.mean_l_g, last.mean_l_d, last.mean_mse
                );
            }
            eprintln!("run directory: {}", out.display());
            Ok(())
        }
        Command::Enhance {
            checkpoint,
            input,
            out,
        } => {
            let (checkpoint, input, out) =
                (paths.at(&checkpoint), paths.at(&input), paths.at(&out));
            let g = load_generator(&checkpoint)?;
            print_resolved(
                "generator",
                &toml::to_string(&g.config).expect("config serializes"),
            );
            let files: Vec<PathBuf> = if input.is_dir() {
                list_wavs(&input)?.into_iter().map(|(_, p)| p).collect()
            } else if input.is_file() {
                vec![input.clone()]
            } else {
                return Err(Error::io(&input, std::io::ErrorKind::NotFound.into()));
            };
            for f in &files {
                let wav = read_wav(f)?;
                let enhanced = g.enhance(&wav.samples)?;
                let dst = out.join(f.file_name().unwrap_or_default());
                write_wav(&dst, &Waveform::new(enhanced), WavEncoding::Float32)?;
            }
            eprintln!("enhanced {} files into {}", files.len(), out.display());
            Ok(())
        }
        Command::Eval {
            manifest,
            enhanced,
            checkpoint,
            split,
            out,
        } => {
            let split: Split = split
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("unknown split `{split}`")))?;
            let m = read_manifest(&paths.at(&manifest))?;
            let out = paths.at(&out);
            let enhanced = enhanced.map(|p| paths.at(&p));
            let generator = checkpoint
                .map(|p| load_generator(&paths.at(&p)))
                .transpose()?;
            print_resolved(
                "eval",
                &format!(
                    "split = \"{split}\"\nenhanced = {:?}\ncheckpoint = {}",
                    enhanced.as_ref().map(|p| p.display().to_string()),
                    generator.is_some()
                ),
            );
            let source = match (&enhanced, &generator) {
                (Some(dir), _) => Enhanced::Dir(dir),
                (None, Some(g)) => Enhanced::Model(g),
                (None, None) => Enhanced::None,
            };
            let report = score_manifest(&m, split, source)?;
            fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            let csv_path = out.join(REPORT_CSV);
            fs::write(&csv_path, report.to_csv()?).map_err(|e| Error::io(&csv_path, e))?;
            let table = report.table();
            let table_path = out.join(REPORT_TABLE);
            fs::write(&table_path, &table).map_err(|e| Error::io(&table_path, e))?;
            eprint!("{table}");
            eprintln!(
                "scored {} pairs; report in {}",
                report.rows.len(),
                out.display()
            );
            Ok(())
        }
    }
}

fn load_generator(path: &Path) -> Result<Generator<f32>> {
    let ckpt = Checkpoint::load(path)?;
    Generator::from_checkpoint(&ckpt).map_err(|e| e.context(path.display().to_string()))
}

/// `ckpt-{n}` with the largest `n` in `dir`, if any.
pub fn latest_checkpoint(dir: &Path) -> Result<Option<PathBuf>> {
    if !dir.exists() {
        return Ok(None);
    }
    let mut best: Option<(usize, PathBuf)> = None;
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        let Some(n) = name
            .to_str()
            .and_then(|s| s.strip_prefix("ckpt-"))
            .and_then(|s| s.parse::<usize>().ok())
        else {
            continue;
        };
        if best.as_ref().is_none_or(|(b, _)| n > *b) {
            best = Some((n, entry.path()));
        }
    }
    Ok(best.map(|(_, p)| p))
}
