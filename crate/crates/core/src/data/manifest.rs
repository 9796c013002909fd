//! Dataset manifests: which utterance is mixed with which noise, where,
//! and at what SNR.
//!
//! On disk a manifest is tab-separated text. Lines starting with `#` carry
//! `key=value` metadata (seed, SNR grids, training noises); the first other
//! line is the header
//!
//! ```text
//! mixture_path  clean_path  utterance_id  noise_id  snr_db  split  noise_offset  norm_scale
//! ```
//!
//! and every following line is one pair. Relative paths are resolved against
//! the manifest's directory.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mix::mix_at_snr;
use super::wav::{read_wav, write_wav, WavEncoding, Waveform, SAMPLE_RATE};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            _ => Err(Error::Manifest(format!("unknown split `{s}`"))),
        }
    }
}

/// One line of a manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub mixture_path: PathBuf,
    pub clean_path: PathBuf,
    pub utterance_id: String,
    pub noise_id: String,
    pub snr_db: f64,
    pub split: Split,
    /// First noise sample used.
    pub noise_offset: usize,
    /// Multiply the clean file by this to get the reference for the mixture.
    pub norm_scale: f64,
}

/// How utterances and noises are divided between splits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Utterance counts for train, validation and test.
    pub split: [usize; 3],
    /// Noise ids mixed into the training split. Empty means every noise.
    pub train_noises: Vec<String>,
    /// Noise ids for validation and test. Empty means every noise.
    pub eval_noises: Vec<String>,
    pub train_snrs: Vec<f64>,
    pub eval_snrs: Vec<f64>,
    /// Length of each of the two noise sections. Training draws from the
    /// first section, validation and test from the second.
    pub section_seconds: f64,
    pub seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            split: [600, 50, 100],
            train_noises: Vec::new(),
            eval_noises: Vec::new(),
            train_snrs: vec![0.0, -5.0, -10.0, -15.0],
            eval_snrs: vec![0.0, -3.0, -5.0, -7.0, -10.0, -12.0, -15.0, -17.0, -20.0],
            section_seconds: 120.0,
            seed: 0,
        }
    }
}

impl DataConfig {
    pub fn section_len(&self) -> usize {
        (self.section_seconds * SAMPLE_RATE as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidConfig(format!("data: {m}")));
        if !(self.section_seconds > 0.0) {
            return fail("section_seconds must be positive".into());
        }
        if self
            .train_snrs
            .iter()
            .chain(&self.eval_snrs)
            .any(|s| !s.is_finite())
        {
            return fail("SNRs must be finite".into());
        }
        Ok(())
    }
}

/// A pair before any audio is touched.
#[derive(Clone, Debug, PartialEq)]
pub struct PlannedPair {
    pub utterance_id: String,
    pub noise_id: String,
    pub snr_db: f64,
    pub split: Split,
    pub noise_offset: usize,
}

/// Manifest records plus the metadata needed to interpret them.
#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub seed: u64,
    pub train_snrs: Vec<f64>,
    pub eval_snrs: Vec<f64>,
    pub train_noises: Vec<String>,
    pub records: Vec<ManifestRecord>,
}

impl Manifest {
    pub fn count(&self, split: Split) -> usize {
        self.records.iter().filter(|r| r.split == split).count()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    /// Whether `noise_id` was heard during training.
    pub fn is_seen(&self, noise_id: &str) -> bool {
        self.train_noises.iter().any(|n| n == noise_id)
    }
}

fn select(all: &[(String, usize)], wanted: &[String], what: &str) -> Result<Vec<(String, usize)>> {
    if wanted.is_empty() {
        return Ok(all.to_vec());
    }
    wanted
        .iter()
        .map(|id| {
            all.iter()
                .find(|(n, _)| n == id)
                .cloned()
                .ok_or_else(|| Error::EmptyCorpus(format!("{what} `{id}` not found")))
        })
        .collect()
}

/// Assigns utterances to splits and enumerates every
/// (utterance, noise, SNR) combination with its noise offset. Pure: only ids
/// and lengths in samples are needed.
pub fn plan_manifest(
    utterances: &[(String, usize)],
    noises: &[(String, usize)],
    cfg: &DataConfig,
) -> Result<Vec<PlannedPair>> {
    cfg.validate()?;
    if utterances.is_empty() {
        return Err(Error::EmptyCorpus("no clean utterances".into()));
    }
    if noises.is_empty() {
        return Err(Error::EmptyCorpus("no noise recordings".into()));
    }
    let needed: usize = cfg.split.iter().sum();
    if utterances.len() < needed {
        return Err(Error::EmptyCorpus(format!(
            "{} utterances available, split needs {needed}",
            utterances.len()
        )));
    }
    let section = cfg.section_len();
    for (id, len) in noises {
        if *len < 2 * section {
            return Err(Error::InsufficientNoise {
                id: id.clone(),
                len: *len,
                needed: 2 * section,
            });
        }
    }
    let mut order: Vec<&(String, usize)> = utterances.iter().collect();
    order.sort_by(|a, b| a.0.cmp(&b.0));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);

    let train_noises = select(noises, &cfg.train_noises, "noise")?;
    let eval_noises = select(noises, &cfg.eval_noises, "noise")?;
    let mut pairs = Vec::new();
    let mut combo = 0u64;
    let mut start = 0;
    for (k, split) in Split::ALL.into_iter().enumerate() {
        let utts = &order[start..start + cfg.split[k]];
        start += cfg.split[k];
        let (noise_set, snrs, base) = match split {
            Split::Train => (&train_noises, &cfg.train_snrs, 0),
            _ => (&eval_noises, &cfg.eval_snrs, section),
        };
        for (utt, utt_len) in utts {
            if *utt_len > section {
                return Err(Error::InsufficientNoise {
                    id: format!("section for utterance {utt}"),
                    len: section,
                    needed: *utt_len,
                });
            }
            for (noise, _) in noise_set.iter() {
                // One stream per (utterance, noise) combination: every SNR
                // variant reuses the same noise segment.
                combo += 1;
                let mut prng = ChaCha8Rng::seed_from_u64(cfg.seed);
                prng.set_stream(combo);
                let noise_offset = base + prng.gen_range(0..=section - utt_len);
                for &snr in snrs {
                    pairs.push(PlannedPair {
                        utterance_id: utt.clone(),
                        noise_id: noise.clone(),
                        snr_db: snr,
                        split,
                        noise_offset,
                    });
                }
            }
        }
    }
    Ok(pairs)
}

/// `*.wav` files in `dir`, sorted, keyed by file stem.
pub fn list_wavs(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for e in entries {
        let p = e.map_err(|e| Error::io(dir, e))?.path();
        if p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")) {
            let stem = p
                .file_stem()
                .unwrap_or_default()
                .to_string_lossy()
                .into_owned();
            out.push((stem, p));
        }
    }
    out.sort();
    Ok(out)
}

fn snr_tag(snr: f64) -> String {
    let s = format!("{snr}");
    match s.strip_prefix('-') {
        Some(rest) => format!("m{rest}"),
        None => format!("p{s}"),
    }
}

/// Plans the manifest for the corpora in `clean_dir` and `noise_dir`, writes
/// every mixture under `out_dir/{split}/` as float32 WAV, and writes the
/// manifest to `out_dir/manifest.tsv`.
pub fn build_manifest(
    clean_dir: &Path,
    noise_dir: &Path,
    out_dir: &Path,
    cfg: &DataConfig,
) -> Result<Manifest> {
    let clean_files = list_wavs(clean_dir)?;
    let noise_files = list_wavs(noise_dir)?;
    let clean: BTreeMap<String, (PathBuf, Waveform)> = clean_files
        .into_iter()
        .map(|(id, p)| read_wav(&p).map(|w| (id, (p, w))))
        .collect::<Result<_>>()?;
    let noise: BTreeMap<String, Waveform> = noise_files
        .into_iter()
        .map(|(id, p)| read_wav(&p).map(|w| (id, w)))
        .collect::<Result<_>>()?;
    let utt_lens: Vec<(String, usize)> = clean
        .iter()
        .map(|(k, (_, w))| (k.clone(), w.len()))
        .collect();
    let noise_lens: Vec<(String, usize)> =
        noise.iter().map(|(k, w)| (k.clone(), w.len())).collect();
    let plan = plan_manifest(&utt_lens, &noise_lens, cfg)?;

    let mut records = Vec::with_capacity(plan.len());
    for p in plan {
        let (clean_path, c) = &clean[&p.utterance_id];
        let n = &noise[&p.noise_id];
        let m = mix_at_snr(&c.samples, &n.samples, p.snr_db, p.noise_offset).map_err(|e| {
            e.context(format!(
                "{} + {} at {} dB",
                p.utterance_id, p.noise_id, p.snr_db
            ))
        })?;
        let rel = PathBuf::from(p.split.to_string()).join(format!(
            "{}_{}_{}.wav",
            p.utterance_id,
            p.noise_id,
            snr_tag(p.snr_db)
        ));
        write_wav(
            &out_dir.join(&rel),
            &Waveform::new(m.mixture),
            WavEncoding::Float32,
        )?;
        records.push(ManifestRecord {
            mixture_path: rel,
            clean_path: fs::canonicalize(clean_path).unwrap_or_else(|_| clean_path.clone()),
            utterance_id: p.utterance_id,
            noise_id: p.noise_id,
            snr_db: p.snr_db,
            split: p.split,
            noise_offset: p.noise_offset,
            norm_scale: m.norm_scale,
        });
    }
    let train_noises = if cfg.train_noises.is_empty() {
        noise.keys().cloned().collect()
    } else {
        cfg.train_noises.clone()
    };
    let mut manifest = Manifest {
        seed: cfg.seed,
        train_snrs: cfg.train_snrs.clone(),
        eval_snrs: cfg.eval_snrs.clone(),
        train_noises,
        records,
    };
    write_manifest(&out_dir.join(MANIFEST_FILE), &manifest)?;
    // The file keeps paths relative to itself; callers get usable ones.
    for r in &mut manifest.records {
        r.mixture_path = out_dir.join(&r.mixture_path);
    }
    Ok(manifest)
}

pub const MANIFEST_FILE: &str = "manifest.tsv";

fn join_list<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

pub fn write_manifest(path: &Path, m: &Manifest) -> Result<()> {
    let mut out = format!(
        "# seed={}\n# train_snrs={}\n# eval_snrs={}\n# train_noises={}\n",
        m.seed,
        join_list(&m.train_snrs),
        join_list(&m.eval_snrs),
        m.train_noises.join(",")
    );
    let mut w = csv::WriterBuilder::new()
        .delimiter(b'\t')
        .from_writer(Vec::new());
    for r in &m.records {
        w.serialize(r).map_err(|e| Error::Manifest(e.to_string()))?;
    }
    if m.records.is_empty() {
        w.write_record([
            "mixture_path",
            "clean_path",
            "utterance_id",
            "noise_id",
            "snr_db",
            "split",
            "noise_offset",
            "norm_scale",
        ])
        .map_err(|e| Error::Manifest(e.to_string()))?;
    }
    let body = w.into_inner().map_err(|e| Error::Manifest(e.to_string()))?;
    out.push_str(&String::from_utf8(body).map_err(|e| Error::Manifest(e.to_string()))?);
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a manifest and resolves relative paths against its directory.
pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut meta = BTreeMap::new();
    for line in text.lines().filter_map(|l| l.strip_prefix('#')) {
        if let Some((k, v)) = line.trim().split_once('=') {
            meta.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    let bad = |what: &str| Error::Manifest(format!("{}: {what}", path.display()));
    let list = |key: &str| -> Vec<String> {
        meta.get(key)
            .map(|v| {
                v.split(',')
                    .filter(|s| !s.is_empty())
                    .map(str::to_string)
                    .collect()
            })
            .unwrap_or_default()
    };
    let floats = |key: &str| -> Result<Vec<f64>> {
        list(key)
            .iter()
            .map(|s| {
                s.parse()
                    .map_err(|_| bad(&format!("bad `{key}` entry {s:?}")))
            })
            .collect()
    };
    let seed = match meta.get("seed") {
        Some(s) => s.parse().map_err(|_| bad("bad seed"))?,
        None => 0,
    };
    let base = path.parent().unwrap_or(Path::new(""));
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut records = Vec::new();
    for (i, row) in rdr.deserialize::<ManifestRecord>().enumerate() {
        let mut r = row.map_err(|e| bad(&format!("record {}: {e}", i + 1)))?;
        for p in [&mut r.mixture_path, &mut r.clean_path] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        records.push(r);
    }
    Ok(Manifest {
        seed,
        train_snrs: floats("train_snrs")?,
        eval_snrs: floats("eval_snrs")?,
        train_noises: list("train_noises"),
        records,
    })
}

/// Mixture and its clean reference (with the recorded normalization).
pub fn load_pair(r: &ManifestRecord) -> Result<(Vec<f32>, Vec<f32>)> {
    let mix = read_wav(&r.mixture_path)?.samples;
    let clean: Vec<f32> = read_wav(&r.clean_path)?
        .samples
        .iter()
        .map(|&c| (c as f64 * r.norm_scale) as f32)
        .collect();
    if mix.len() != clean.len() {
        return Err(Error::LengthMismatch(mix.len(), clean.len())
            .context(r.mixture_path.display().to_string()));
    }
    Ok((mix, clean))
}

/// Every referenced file that does not exist.
pub fn missing_files(m: &Manifest) -> Vec<PathBuf> {
    let mut out: Vec<PathBuf> = m
        .records
        .iter()
        .flat_map(|r| [&r.mixture_path, &r.clean_path])
        .filter(|p| !p.exists())
        .cloned()
        .collect();
    out.sort();
    out.dedup();
    out
}
